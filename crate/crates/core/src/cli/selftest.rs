//! Built-in gradient and oracle checks.

use std::time::Instant;

use crate::error::Result;
use crate::nn::gradcheck;
use crate::pose::{
    apply_delta, decode_label, encode_label, invert_delta, sample_observed_pose, sample_pose_delta,
    CameraIntrinsics, DeltaRange, RigidPose,
};
use crate::raster::{compare_renders, composite_over, min_depth_composite, ray_cast, render_rgbd, two_triangle_scene};
use crate::rng::{stream, Domain};

/// One named check outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn renderer(seed: u64) -> Vec<CheckLine> {
    let k = CameraIntrinsics::kinect_like(32);
    let id = RigidPose::default();
    let mut worst = crate::raster::RenderDiff::default();
    let mut all = true;
    let mut composite_ok = true;
    for i in 0..20 {
        let mut rng = stream(seed, Domain::Misc, i);
        let (m, light) = two_triangle_scene(&mut rng, &k);
        let r = render_rgbd(&m, &id, &k, &light);
        let d = compare_renders(&r, &ray_cast(&m, &id, &k, &light));
        all &= d.within(1e-3, 1e-3);
        worst.max_depth = worst.max_depth.max(d.max_depth);
        worst.max_color = worst.max_color.max(d.max_color);
        worst.coverage_mismatch += d.coverage_mismatch;
        let (m2, l2) = two_triangle_scene(&mut rng, &k);
        let bg = render_rgbd(&m2, &id, &k, &l2);
        composite_ok &= composite_over(&r, &bg).is_ok_and(|c| c == min_depth_composite(&r, &bg));
    }
    vec![
        CheckLine {
            name: "render vs ray cast".into(),
            pass: all,
            detail: format!(
                "20 scenes, max depth err {:.2e} m, max color err {:.2e}, {} coverage mismatches",
                worst.max_depth, worst.max_color, worst.coverage_mismatch
            ),
        },
        CheckLine {
            name: "composite vs min depth".into(),
            pass: composite_ok,
            detail: "20 scene pairs".into(),
        },
    ]
}

fn codec(seed: u64, draws: u64) -> Result<Vec<CheckLine>> {
    let range = DeltaRange::default();
    let (mut label_err, mut group_err) = (0f64, 0f64);
    for i in 0..draws {
        let mut rng = stream(seed, Domain::Misc, 1_000 + i);
        let d = sample_pose_delta(&mut rng, &range)?;
        let back = decode_label(&encode_label(&d, &range)?, &range);
        for (a, b) in back.as_array().iter().zip(d.as_array()) {
            label_err = label_err.max((a - b).abs());
        }
        let p = sample_observed_pose(&mut rng, (0.4, 1.5))?;
        let q = apply_delta(&apply_delta(&p, &d), &invert_delta(&d));
        // matrix entries, not the angle metric: acos loses half the digits near zero
        group_err = group_err
            .max(q.rotation.max_abs_diff(&p.rotation))
            .max((q.translation - p.translation).norm());
    }
    Ok(vec![
        CheckLine {
            name: "label codec roundtrip".into(),
            pass: label_err <= 1e-12,
            detail: format!("{draws} draws, max err {label_err:.2e}"),
        },
        CheckLine {
            name: "delta apply/invert".into(),
            pass: group_err <= 1e-9,
            detail: format!("{draws} draws, max err {group_err:.2e}"),
        },
    ])
}

/// Runs every suite; `configs` random configurations per gradient check.
pub fn run(seed: u64, configs: usize) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    let t0 = Instant::now();
    for r in gradcheck::run_all(seed, configs)? {
        lines.push(CheckLine {
            name: format!("gradient {}", r.name),
            pass: r.max_rel_err < 1e-4,
            detail: format!("{} configs, max rel err {:.2e}", r.configs, r.max_rel_err),
        });
    }
    lines.extend(renderer(seed));
    lines.extend(codec(seed, 10_000)?);
    lines.push(CheckLine {
        name: "runtime".into(),
        pass: true,
        detail: format!("{:.1?}", t0.elapsed()),
    });
    Ok(lines)
}
