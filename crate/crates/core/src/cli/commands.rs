use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::bench::{
    init_perturbation_bench, occlusion_sweep, read_sequence_dir, run_tracking_benchmark, synth_sequence,
    ResetSchedule, SequenceFrame, SequenceKind, SequenceSpec,
};
use crate::bench::sequence::poses_to_csv;
use crate::datagen::{
    estimate_stats, generate_batch, generate_indexed, import_frames, procedural_pool, DatasetHeader, DatasetReader,
    DatasetWriter, SceneAssets,
};
use crate::error::{create_output, Error, Result};
use crate::nn::{train, write_history_csv, Model, NetworkParams};
use crate::pose::CameraIntrinsics;
use crate::raster::frame::write_png;
use crate::raster::{RgbdFrame, TriMesh};
use crate::tracker::TrackerState;

use super::config::PipelineConfig;

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create_output(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn backgrounds(cfg: &PipelineConfig, k: &CameraIntrinsics) -> Result<Vec<RgbdFrame>> {
    match &cfg.backgrounds.import_dir {
        Some(dir) => import_frames(dir, k),
        None => procedural_pool(k, &cfg.backgrounds.procedural, cfg.seed),
    }
}

pub fn gen_data(cfg: &PipelineConfig) -> Result<()> {
    let k = cfg.camera.intrinsics()?;
    let assets = SceneAssets::new(cfg.object.load()?, backgrounds(cfg, &k)?);
    let g = &cfg.generator;
    let t0 = Instant::now();
    let stats = estimate_stats(&assets, &k, g, cfg.seed, cfg.data.stats_samples)?;
    let header = DatasetHeader {
        side: g.input_side,
        count: cfg.data.count,
        seed: cfg.seed,
        stats,
        generator: *g,
    };
    let path = cfg.dataset_path();
    let mut w = DatasetWriter::create(&path, header)?;
    let chunk = cfg.data.chunk as u64;
    let mut start = 0;
    while start < cfg.data.count {
        let end = (start + chunk).min(cfg.data.count);
        for s in generate_batch(&assets, &k, g, &stats, cfg.seed, start..end)? {
            w.push(&s)?;
        }
        eprintln!("gen-data: {end}/{} records", cfg.data.count);
        start = end;
    }
    w.finish()?;
    let mut csv = String::from("channel,mean,std\n");
    for (c, name) in ["r", "g", "b", "depth"].iter().enumerate() {
        let _ = writeln!(csv, "{name},{:.9},{:.9}", stats.mean[c], stats.std[c]);
    }
    write_text(&cfg.output_dir.join("stats.csv"), &csv)?;
    eprintln!("gen-data: wrote {} in {:.1?}", path.display(), t0.elapsed());
    Ok(())
}

pub fn train_model(cfg: &PipelineConfig) -> Result<()> {
    let data_path = cfg.dataset_path();
    PipelineConfig::require_file(&data_path, "paths.dataset")?;
    let model_path = cfg.model_path();
    if model_path.exists() {
        return Err(Error::OutputExists(model_path));
    }
    let reader = DatasetReader::open(&data_path)?;
    let header = *reader.header();
    if header.side != cfg.network.input_side {
        return Err(Error::config(
            "network.input_side",
            format!("{} differs from the dataset side {}", cfg.network.input_side, header.side),
        ));
    }
    let init = NetworkParams::<f32>::init(cfg.network, cfg.seed)?;
    let t0 = Instant::now();
    let outcome = train(init, &reader, &cfg.training, |r| {
        eprintln!(
            "train: epoch {} train_mse {:.5} val_mse {:.5} ({:.0?})",
            r.epoch,
            r.train_mse,
            r.val_mse,
            t0.elapsed()
        );
    })?;
    let model = Model {
        params: outcome.params,
        stats: header.stats,
        delta_range: header.generator.delta_range,
        bbox_margin: header.generator.bbox_margin,
    };
    model.save(&model_path)?;
    write_history_csv(&cfg.output_dir.join("history.csv"), &outcome.history)?;
    eprintln!("train: best epoch {}, wrote {}", outcome.best_epoch, model_path.display());
    Ok(())
}

struct TrackingSetup {
    state: TrackerState<f32>,
    mesh: TriMesh,
    k: CameraIntrinsics,
    background: RgbdFrame,
}

fn tracking_setup(cfg: &PipelineConfig) -> Result<TrackingSetup> {
    let model_path = cfg.model_path();
    PipelineConfig::require_file(&model_path, "paths.model")?;
    let model = Model::<f32>::load_expecting(&model_path, &cfg.network)?;
    let k = cfg.camera.intrinsics()?;
    let mesh = cfg.object.load()?;
    let background = backgrounds(cfg, &k)?.swap_remove(0);
    let state = TrackerState::new(Arc::new(model), Arc::new(mesh.clone()), k, Default::default())?;
    Ok(TrackingSetup {
        state,
        mesh,
        k,
        background,
    })
}

fn synthetic(s: &TrackingSetup, spec: &SequenceSpec) -> Result<Vec<SequenceFrame>> {
    Ok(synth_sequence(&s.mesh, &s.k, spec, Some(&s.background))?.frames)
}

fn tracked_frames(cfg: &PipelineConfig, s: &TrackingSetup) -> Result<Vec<SequenceFrame>> {
    match &cfg.track.sequence_dir {
        Some(dir) => {
            if !dir.join("poses.csv").is_file() {
                return Err(Error::config("track.sequence_dir", format!("{} has no poses.csv", dir.display())));
            }
            read_sequence_dir(dir)
        }
        None => synthetic(s, &cfg.sequence),
    }
}

pub fn track(cfg: &PipelineConfig) -> Result<()> {
    let mut s = tracking_setup(cfg)?;
    let frames = tracked_frames(cfg, &s)?;
    let schedule = ResetSchedule::from_every(cfg.track.reset_every);
    let report = run_tracking_benchmark(&mut s.state, &frames, schedule, cfg.track.iterations)?;
    let estimates: Vec<_> = report.frames.iter().map(|r| r.estimate).collect();
    write_text(&cfg.output_dir.join("trajectory.csv"), &poses_to_csv(&estimates))?;
    write_text(&cfg.output_dir.join("track_frames.csv"), &report.frames_csv())?;
    write_text(&cfg.output_dir.join("track_summary.csv"), &report.summary_csv("track")?)?;
    let m = report.summary()?;
    eprintln!(
        "track: {} frames, mean error {:.2} mm / {:.2} deg, {} lost",
        report.frames.len(),
        m.translation_mm.mean,
        m.rotation_deg.mean,
        report.lost.len()
    );
    Ok(())
}

pub fn bench_occlusion(cfg: &PipelineConfig) -> Result<()> {
    let s = tracking_setup(cfg)?;
    let report = occlusion_sweep(&s.state, &s.mesh, &s.k, &cfg.bench.sweep, Some(&s.background))?;
    write_text(&cfg.output_dir.join("occlusion_frames.csv"), &report.frames_csv())?;
    write_text(&cfg.output_dir.join("occlusion_summary.csv"), &report.summary_csv()?)?;
    for c in &report.cells {
        eprintln!(
            "bench occlusion: {} measured {:.3}, median {:.2} mm, {} lost",
            c.id(),
            c.measured_occlusion,
            c.report.summary()?.translation_mm.p50,
            c.report.lost.len()
        );
    }
    Ok(())
}

pub fn bench_init(cfg: &PipelineConfig) -> Result<()> {
    let s = tracking_setup(cfg)?;
    let frames = tracked_frames(cfg, &s)?;
    let t0 = Instant::now();
    let report = init_perturbation_bench(&s.state, &frames, &cfg.bench.init)?;
    write_text(&cfg.output_dir.join("init.csv"), &report.csv())?;
    eprintln!("bench init: {} rows in {:.1?}", report.rows.len(), t0.elapsed());
    Ok(())
}

pub fn bench_sequence(cfg: &PipelineConfig) -> Result<()> {
    let mut s = tracking_setup(cfg)?;
    let frames = tracked_frames(cfg, &s)?;
    let schedule = ResetSchedule::from_every(cfg.bench.reset_every);
    let report = run_tracking_benchmark(&mut s.state, &frames, schedule, cfg.track.iterations)?;
    let cell = match cfg.sequence.kind {
        SequenceKind::Handheld => "handheld",
        SequenceKind::Turntable => "turntable",
    };
    write_text(&cfg.output_dir.join("sequence_frames.csv"), &report.frames_csv())?;
    write_text(&cfg.output_dir.join("sequence_summary.csv"), &report.summary_csv(cell)?)?;
    let m = report.summary()?;
    eprintln!(
        "bench sequence: mean {:.2} mm / {:.2} deg, {} lost",
        m.translation_mm.mean,
        m.rotation_deg.mean,
        report.lost.len()
    );
    Ok(())
}

/// Color on the left, depth offset from the object center (±0.25 m mapped to
/// black..white) on the right.
fn preview_png(raw: &[f32], side: usize, path: &Path) -> Result<()> {
    let mut px = vec![0u8; 2 * side * side * 3];
    let to8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for y in 0..side {
        for x in 0..side {
            let g = &raw[(y * side + x) * 4..(y * side + x + 1) * 4];
            let left = (y * 2 * side + x) * 3;
            px[left..left + 3].copy_from_slice(&[to8(g[0]), to8(g[1]), to8(g[2])]);
            let d = to8(0.5 + g[3] * 2.0);
            let right = (y * 2 * side + side + x) * 3;
            px[right..right + 3].copy_from_slice(&[d, d, d]);
        }
    }
    write_png(path, 2 * side, side, png::ColorType::Rgb, png::BitDepth::Eight, &px)
}

pub fn render_preview(cfg: &PipelineConfig, index: u64) -> Result<()> {
    let k = cfg.camera.intrinsics()?;
    let assets = SceneAssets::new(cfg.object.load()?, backgrounds(cfg, &k)?);
    let raw = generate_indexed(&assets, &k, &cfg.generator, cfg.seed, index)?;
    let side = cfg.generator.input_side;
    preview_png(&raw.x_pred, side, &cfg.output_dir.join(format!("preview_{index:05}_pred.png")))?;
    preview_png(&raw.x_obs, side, &cfg.output_dir.join(format!("preview_{index:05}_obs.png")))?;
    eprintln!(
        "render-preview: sample {index}, delta t = {:?} mm, r = {:?} deg, flags {:?}",
        raw.delta.t_mm, raw.delta.r_deg, raw.flags
    );
    Ok(())
}
