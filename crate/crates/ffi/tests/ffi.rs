use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use dt6d::datagen::ChannelStats;
use dt6d::nn::{ArchConfig, Model, NetworkParams};
use dt6d::pose::{CameraIntrinsics, DeltaRange};
use dt6d_ffi::*;

fn save_model(dir: &Path) -> CString {
    let path = dir.join("model.bin");
    Model {
        params: NetworkParams::<f32>::init(ArchConfig::reduced(48), 1).unwrap(),
        stats: ChannelStats::new([0.5; 4], [0.25, 0.25, 0.25, 0.05]).unwrap(),
        delta_range: DeltaRange::default(),
        bbox_margin: 0.15,
    }
    .save(&path)
    .unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn intrinsics() -> Dt6dIntrinsics {
    let k = CameraIntrinsics::kinect_like(160);
    Dt6dIntrinsics {
        fx: k.fx,
        fy: k.fy,
        cx: k.cx,
        cy: k.cy,
        width: k.width as u32,
        height: k.height as u32,
    }
}

fn pose_at(z: f64) -> Dt6dPose {
    Dt6dPose {
        rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        translation: [0.0, 0.0, z],
    }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(dt6d_last_error_message()) }.to_string_lossy().into_owned()
}

fn tracker(model: &CString) -> *mut Dt6dTracker {
    let mut t = ptr::null_mut();
    let s = unsafe { dt6d_tracker_new(model.as_ptr(), ptr::null(), &intrinsics(), &pose_at(0.8), &mut t) };
    assert_eq!(s, Dt6dStatus::Ok, "{}", last_error());
    assert!(!t.is_null());
    t
}

#[test]
fn render_step_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let model = save_model(dir.path());
    let t = tracker(&model);
    let k = intrinsics();
    let n = (k.width * k.height) as usize;
    let (mut rgb, mut depth) = (vec![0f32; 3 * n], vec![0f32; n]);
    let s = unsafe { dt6d_tracker_render(t, &pose_at(0.8), rgb.as_mut_ptr(), rgb.len(), depth.as_mut_ptr(), n) };
    assert_eq!(s, Dt6dStatus::Ok);
    assert!(depth.iter().any(|&d| d > 0.0));

    let mut out = pose_at(0.0);
    let s = unsafe { dt6d_tracker_step(t, rgb.as_ptr(), depth.as_ptr(), k.width, k.height, &mut out) };
    assert_eq!(s, Dt6dStatus::Ok, "{}", last_error());
    assert!(out.translation.iter().chain(&out.rotation).all(|v| v.is_finite()));
    let mut current = pose_at(0.0);
    assert_eq!(unsafe { dt6d_tracker_pose(t, &mut current) }, Dt6dStatus::Ok);
    assert_eq!(current, out);

    let mut timing = Dt6dTiming::default();
    assert_eq!(unsafe { dt6d_tracker_last_timing(t, &mut timing) }, Dt6dStatus::Ok);
    assert!(timing.forward_ms > 0.0 && timing.render_ms > 0.0);

    assert_eq!(unsafe { dt6d_tracker_reset(t, &pose_at(0.9)) }, Dt6dStatus::Ok);
    assert_eq!(unsafe { dt6d_tracker_pose(t, &mut current) }, Dt6dStatus::Ok);
    assert_eq!(current, pose_at(0.9));
    unsafe { dt6d_tracker_free(t) };
}

#[test]
fn errors_are_typed_and_described() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = ptr::null_mut();
    let missing = CString::new(dir.path().join("none.bin").to_str().unwrap()).unwrap();
    let s = unsafe { dt6d_tracker_new(missing.as_ptr(), ptr::null(), &intrinsics(), &pose_at(0.8), &mut t) };
    assert_eq!(s, Dt6dStatus::Io);
    assert!(t.is_null());
    assert!(!last_error().is_empty());

    let s = unsafe { dt6d_tracker_new(ptr::null(), ptr::null(), &intrinsics(), &pose_at(0.8), &mut t) };
    assert_eq!(s, Dt6dStatus::NullPointer);
    assert!(last_error().contains("model_path"));

    let model = save_model(dir.path());
    let mut bad = pose_at(0.8);
    bad.rotation[0] = 2.0;
    let s = unsafe { dt6d_tracker_new(model.as_ptr(), ptr::null(), &intrinsics(), &bad, &mut t) };
    assert_eq!(s, Dt6dStatus::InvalidArgument);

    let t = tracker(&model);
    let (rgb, depth) = (vec![0f32; 3 * 100], vec![0f32; 100]);
    let s = unsafe { dt6d_tracker_step(t, rgb.as_ptr(), depth.as_ptr(), 10, 10, ptr::null_mut()) };
    assert_eq!(s, Dt6dStatus::Shape);
    let mut p = pose_at(0.0);
    unsafe { dt6d_tracker_pose(t, &mut p) };
    assert_eq!(p, pose_at(0.8));
    assert_eq!(unsafe { dt6d_tracker_step(t, ptr::null(), depth.as_ptr(), 10, 10, ptr::null_mut()) }, Dt6dStatus::NullPointer);
    unsafe { dt6d_tracker_free(t) };
    unsafe { dt6d_tracker_free(ptr::null_mut()) };
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(dt6d_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dt6d.h");
    assert!(header.is_file(), "build script did not write the header");
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; header syntax not checked");
        return;
    };
    assert!(status.success());
}
