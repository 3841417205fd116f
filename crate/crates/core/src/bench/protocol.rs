use std::fmt::Write as _;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Mat3;
use crate::nn::Float;
use crate::pose::{pose_error, sample_unit_direction, CameraIntrinsics, PoseError, RigidPose};
use crate::raster::{RgbdFrame, TriMesh};
use crate::rng::{stream, Domain};
use crate::tracker::TrackerState;

use super::sequence::{synth_sequence, Orientation, SequenceFrame, SequenceKind, SequenceSpec};
use super::stats::{isotonic_residual, summarize_values, Summary};

/// When the tracker is re-initialized from ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetSchedule {
    /// Only the first frame starts from ground truth.
    Never,
    Every(usize),
}

impl ResetSchedule {
    /// `0` means never.
    pub fn from_every(n: usize) -> Self {
        if n == 0 {
            ResetSchedule::Never
        } else {
            ResetSchedule::Every(n)
        }
    }

    pub fn is_reset(&self, frame: usize) -> bool {
        match self {
            ResetSchedule::Never => frame == 0,
            ResetSchedule::Every(n) => frame.is_multiple_of(*n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub error: PoseError,
    pub estimate: RigidPose,
    pub reset: bool,
    pub lost: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LostEvent {
    pub frame: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummaries {
    pub translation_mm: Summary,
    pub rotation_deg: Summary,
    pub center_mm: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub frames: Vec<FrameRecord>,
    pub resets: Vec<usize>,
    pub lost: Vec<LostEvent>,
}

pub const FRAME_CSV_HEADER: &str = "frame,t_err_mm,r_err_deg,center_mm,reset_flag";
pub const SUMMARY_CSV_HEADER: &str = "cell,mean,std,p25,p50,p75";

impl BenchReport {
    pub fn summary(&self) -> Result<MetricSummaries> {
        let col = |f: fn(&FrameRecord) -> f64| {
            summarize_values(&self.frames.iter().map(f).collect::<Vec<_>>())
                .ok_or_else(|| Error::invalid("empty benchmark report"))
        };
        Ok(MetricSummaries {
            translation_mm: col(|r| r.error.translation_mm)?,
            rotation_deg: col(|r| r.error.rotation_deg)?,
            center_mm: col(|r| r.error.center_distance_mm)?,
        })
    }

    fn frame_rows(&self, prefix: &str, out: &mut String) {
        for r in &self.frames {
            let _ = writeln!(
                out,
                "{prefix}{},{:.6},{:.6},{:.6},{}",
                r.frame,
                r.error.translation_mm,
                r.error.rotation_deg,
                r.error.center_distance_mm,
                u8::from(r.reset)
            );
        }
    }

    pub fn frames_csv(&self) -> String {
        let mut out = format!("{FRAME_CSV_HEADER}\n");
        self.frame_rows("", &mut out);
        out
    }

    /// Summary rows `<cell>/<metric>` without header.
    pub fn summary_rows(&self, cell: &str) -> Result<String> {
        let s = self.summary()?;
        let mut out = String::new();
        for (name, m) in [
            ("t_err_mm", s.translation_mm),
            ("r_err_deg", s.rotation_deg),
            ("center_mm", s.center_mm),
        ] {
            let _ = writeln!(
                out,
                "{cell}/{name},{:.6},{:.6},{:.6},{:.6},{:.6}",
                m.mean, m.std, m.p25, m.p50, m.p75
            );
        }
        Ok(out)
    }

    pub fn summary_csv(&self, cell: &str) -> Result<String> {
        Ok(format!("{SUMMARY_CSV_HEADER}\n{}", self.summary_rows(cell)?))
    }
}

/// Tracks `frames` one step per frame (`iters_per_frame` steps in general).
///
/// At a reset frame `t` the estimate is set to the ground truth of frame
/// `t − 1` (frame 0 uses its own), so every frame goes through a real
/// tracking step. A failed step is logged as a lost-track event and the
/// estimate is re-initialized to the current ground truth for the next
/// frame; a center distance above one object diameter is also logged.
pub fn run_tracking_benchmark<T: Float>(
    state: &mut TrackerState<T>,
    frames: &[SequenceFrame],
    schedule: ResetSchedule,
    iters_per_frame: usize,
) -> Result<BenchReport> {
    if frames.is_empty() {
        return Err(Error::invalid("empty sequence"));
    }
    let diameter_mm = 2.0 * state.mesh().radius() * 1e3;
    let mut report = BenchReport {
        frames: Vec::with_capacity(frames.len()),
        resets: Vec::new(),
        lost: Vec::new(),
    };
    for (t, f) in frames.iter().enumerate() {
        let reset = schedule.is_reset(t);
        if reset {
            state.reset(frames[t.saturating_sub(1)].pose);
            report.resets.push(t);
        }
        let step = state.iterate(&f.frame, iters_per_frame);
        let estimate = *state.pose();
        let error = pose_error(&estimate, &f.pose);
        let lost = match step {
            Err(e) => {
                report.lost.push(LostEvent {
                    frame: t,
                    reason: e.to_string(),
                });
                state.reset(f.pose);
                true
            }
            Ok(()) if error.center_distance_mm > diameter_mm => {
                report.lost.push(LostEvent {
                    frame: t,
                    reason: format!(
                        "center distance {:.1} mm exceeds object diameter {diameter_mm:.1} mm",
                        error.center_distance_mm
                    ),
                });
                true
            }
            Ok(()) => false,
        };
        report.frames.push(FrameRecord {
            frame: t,
            error,
            estimate,
            reset,
            lost,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub levels: Vec<f64>,
    pub orientations: Vec<Orientation>,
    pub frames: usize,
    pub reset_every: usize,
    pub seed: u64,
    pub distance_m: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            levels: vec![0.1, 0.2, 0.3, 0.4],
            orientations: vec![Orientation::Vertical, Orientation::Horizontal],
            frames: 100,
            reset_every: 15,
            seed: 0,
            distance_m: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub level: f64,
    pub orientation: Orientation,
    pub measured_occlusion: f64,
    pub report: BenchReport,
}

impl SweepCell {
    pub fn id(&self) -> String {
        format!("occ{:02}_{}", (self.level * 100.0).round() as u32, self.orientation.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Same turntable without occluder.
    pub control: BenchReport,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    /// Per-frame rows of every cell (the control is not included).
    pub fn frames_csv(&self) -> String {
        let mut out = format!("cell,{FRAME_CSV_HEADER}\n");
        for c in &self.cells {
            c.report.frame_rows(&format!("{},", c.id()), &mut out);
        }
        out
    }

    /// Summary rows of the control and every cell.
    pub fn summary_csv(&self) -> Result<String> {
        let mut out = format!("{SUMMARY_CSV_HEADER}\n");
        out.push_str(&self.control.summary_rows("occ00_control")?);
        for c in &self.cells {
            out.push_str(&c.report.summary_rows(&c.id())?);
        }
        Ok(out)
    }
}

/// One turntable sequence per (level, orientation) plus an unoccluded
/// control, all sharing the seed so only the occluder differs. Cells run in
/// parallel on clones of `state`.
pub fn occlusion_sweep<T: Float>(
    state: &TrackerState<T>,
    mesh: &TriMesh,
    k: &CameraIntrinsics,
    cfg: &SweepConfig,
    background: Option<&RgbdFrame>,
) -> Result<SweepReport> {
    if cfg.levels.is_empty() || cfg.orientations.is_empty() {
        return Err(Error::config("levels", "need at least one level and orientation"));
    }
    let spec = |occlusion: f64, orientation: Orientation| SequenceSpec {
        kind: SequenceKind::Turntable,
        occlusion,
        orientation,
        frames: cfg.frames,
        seed: cfg.seed,
        distance_m: cfg.distance_m,
        ..Default::default()
    };
    let schedule = ResetSchedule::from_every(cfg.reset_every);
    let mut jobs: Vec<(f64, Orientation)> = vec![(0.0, Orientation::Vertical)];
    for &l in &cfg.levels {
        for &o in &cfg.orientations {
            jobs.push((l, o));
        }
    }
    let mut results = jobs
        .par_iter()
        .map(|&(level, orientation)| {
            let seq = synth_sequence(mesh, k, &spec(level, orientation), background)?;
            let mut s = state.clone();
            let report = run_tracking_benchmark(&mut s, &seq.frames, schedule, 1)?;
            Ok(SweepCell {
                level,
                orientation,
                measured_occlusion: seq.occluder.as_ref().map_or(0.0, |o| o.measured),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let control = results.remove(0).report;
    Ok(SweepReport { control, cells: results })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub rotation_deg: Vec<f64>,
    pub translation_mm: Vec<f64>,
    pub trials: usize,
    pub iterations: usize,
    /// Frames drawn from the sequence; trial `j` uses selected frame `j mod n`.
    pub sampled_frames: usize,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            rotation_deg: (1..=15).map(|i| 5.0 * i as f64).collect(),
            translation_mm: (1..=13).map(|i| 10.0 * i as f64).collect(),
            trials: 40,
            iterations: 15,
            sampled_frames: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbAxis {
    /// Magnitude 0: start from ground truth.
    Control,
    Rotation,
    Translation,
}

impl PerturbAxis {
    pub fn name(&self) -> &'static str {
        match self {
            PerturbAxis::Control => "control",
            PerturbAxis::Rotation => "rotation",
            PerturbAxis::Translation => "translation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitRow {
    pub axis: PerturbAxis,
    pub magnitude: f64,
    pub translation_mm: Summary,
    pub rotation_deg: Summary,
    /// Trials whose iteration lost the object.
    pub lost: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitReport {
    pub rows: Vec<InitRow>,
    /// Errors after iterating from ground truth on each selected frame.
    pub fixed_point_translation_mm: Summary,
    pub fixed_point_rotation_deg: Summary,
    /// RMS distance of the per-increment mean errors from their isotonic fit
    /// (rotation rows on rotation error, translation rows on translation error).
    pub rotation_isotonic_residual: f64,
    pub translation_isotonic_residual: f64,
}

pub const INIT_CSV_HEADER: &str = "axis,magnitude,trials,mean_t_mm,std_t_mm,mean_r_deg,std_r_deg,lost";

impl InitReport {
    pub fn csv(&self) -> String {
        let mut out = format!("{INIT_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
                r.axis.name(),
                r.magnitude,
                r.translation_mm.count,
                r.translation_mm.mean,
                r.translation_mm.std,
                r.rotation_deg.mean,
                r.rotation_deg.std,
                r.lost
            );
        }
        out
    }
}

fn perturb(gt: &RigidPose, axis: PerturbAxis, magnitude: f64, seed: u64, job: u64) -> RigidPose {
    let mut rng = stream(seed, Domain::Bench, 1 + job);
    let dir = sample_unit_direction(&mut rng);
    match axis {
        PerturbAxis::Control => *gt,
        PerturbAxis::Rotation => RigidPose {
            rotation: (Mat3::axis_angle(dir, magnitude.to_radians()) * gt.rotation).orthonormalized(),
            translation: gt.translation,
        },
        PerturbAxis::Translation => RigidPose {
            rotation: gt.rotation,
            translation: gt.translation + dir * (magnitude * 1e-3),
        },
    }
}

/// Final errors and whether the object was lost.
fn converge<T: Float>(state: &TrackerState<T>, start: RigidPose, f: &SequenceFrame, iters: usize) -> (PoseError, bool) {
    let mut s = state.clone();
    s.reset(start);
    let lost = s.iterate(&f.frame, iters).is_err();
    (pose_error(s.pose(), &f.pose), lost)
}

/// Initialization robustness study: perturb the ground-truth start by each
/// rotation and translation increment (independently), iterate the tracker
/// on the same frame, and summarize the final errors per increment.
pub fn init_perturbation_bench<T: Float>(
    state: &TrackerState<T>,
    frames: &[SequenceFrame],
    cfg: &InitConfig,
) -> Result<InitReport> {
    if frames.len() < cfg.sampled_frames || cfg.sampled_frames == 0 {
        return Err(Error::invalid(format!(
            "need at least {} frames, sequence has {}",
            cfg.sampled_frames.max(1),
            frames.len()
        )));
    }
    if cfg.trials == 0 || cfg.iterations == 0 {
        return Err(Error::config("trials", "trials and iterations must be positive"));
    }
    let mut picked = sample(&mut stream(cfg.seed, Domain::Bench, 0), frames.len(), cfg.sampled_frames).into_vec();
    picked.sort_unstable();

    let mut jobs: Vec<(PerturbAxis, f64)> = vec![(PerturbAxis::Control, 0.0)];
    jobs.extend(cfg.rotation_deg.iter().map(|&m| (PerturbAxis::Rotation, m)));
    jobs.extend(cfg.translation_mm.iter().map(|&m| (PerturbAxis::Translation, m)));
    let trials: Vec<(usize, usize)> = (0..jobs.len()).flat_map(|r| (0..cfg.trials).map(move |j| (r, j))).collect();
    let outcomes: Vec<(PoseError, bool)> = trials
        .par_iter()
        .map(|&(r, j)| {
            let (axis, m) = jobs[r];
            let f = &frames[picked[j % picked.len()]];
            let start = perturb(&f.pose, axis, m, cfg.seed, (r * cfg.trials + j) as u64);
            converge(state, start, f, cfg.iterations)
        })
        .collect();

    let summarize = |v: Vec<f64>| summarize_values(&v).expect("non-empty");
    let rows: Vec<InitRow> = jobs
        .iter()
        .enumerate()
        .map(|(r, &(axis, magnitude))| {
            let o = &outcomes[r * cfg.trials..(r + 1) * cfg.trials];
            InitRow {
                axis,
                magnitude,
                translation_mm: summarize(o.iter().map(|(e, _)| e.translation_mm).collect()),
                rotation_deg: summarize(o.iter().map(|(e, _)| e.rotation_deg).collect()),
                lost: o.iter().filter(|(_, l)| *l).count(),
            }
        })
        .collect();

    let fixed: Vec<(PoseError, bool)> = picked
        .par_iter()
        .map(|&i| converge(state, frames[i].pose, &frames[i], cfg.iterations))
        .collect();
    let residual = |axis: PerturbAxis, f: fn(&InitRow) -> f64| {
        isotonic_residual(&rows.iter().filter(|r| r.axis == axis).map(f).collect::<Vec<_>>())
    };
    Ok(InitReport {
        fixed_point_translation_mm: summarize(fixed.iter().map(|(e, _)| e.translation_mm).collect()),
        fixed_point_rotation_deg: summarize(fixed.iter().map(|(e, _)| e.rotation_deg).collect()),
        rotation_isotonic_residual: residual(PerturbAxis::Rotation, |r| r.rotation_deg.mean),
        translation_isotonic_residual: residual(PerturbAxis::Translation, |r| r.translation_mm.mean),
        rows,
    })
}
