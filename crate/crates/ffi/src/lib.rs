//! C ABI over the dt6d tracker.
//!
//! Handles are opaque and owned by the caller until passed to the matching
//! `*_free`. Every fallible call returns a [`Dt6dStatus`]; the message of the
//! last failure on the calling thread is available from
//! [`dt6d_last_error_message`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use dt6d::geom::{Mat3, Vec3};
use dt6d::nn::model_io::read_header;
use dt6d::nn::{Float, Model};
use dt6d::pose::{CameraIntrinsics, RigidPose};
use dt6d::raster::{load_mesh, mesh, render_rgbd, Lighting, RgbdFrame, TriMesh};
use dt6d::tracker::TrackerState;
use dt6d::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dt6dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    TrackingLost = 6,
    ArchitectureMismatch = 7,
    Panic = 8,
}

/// Object-in-camera pose: row-major rotation and translation in meters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dt6dPose {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

/// Pinhole intrinsics in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dt6dIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

/// Per-phase wall time of the last step, milliseconds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dt6dTiming {
    pub render_ms: f64,
    pub normalize_ms: f64,
    pub forward_ms: f64,
    pub update_ms: f64,
}

enum Inner {
    F32(TrackerState<f32>),
    F64(TrackerState<f64>),
}

/// Opaque tracker handle.
pub struct Dt6dTracker {
    inner: Inner,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut v = e.borrow_mut();
        v.clear();
        v.extend(msg.bytes().filter(|&b| b != 0));
        v.push(0);
    });
}

fn status_of(e: &Error) -> Dt6dStatus {
    match e {
        Error::Io(_) | Error::OutputExists(_) => Dt6dStatus::Io,
        Error::Format(_) | Error::MeshParse { .. } | Error::Png(_) => Dt6dStatus::Format,
        Error::Shape(_) => Dt6dStatus::Shape,
        Error::TrackingLost(_) => Dt6dStatus::TrackingLost,
        Error::ArchitectureMismatch(_) => Dt6dStatus::ArchitectureMismatch,
        _ => Dt6dStatus::InvalidArgument,
    }
}

struct Fail(Dt6dStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(Dt6dStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure and converts panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> Dt6dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => Dt6dStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            Dt6dStatus::Panic
        }
    }
}

fn to_pose(p: &Dt6dPose) -> Result<RigidPose, Fail> {
    let r = p.rotation;
    let m = Mat3([[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]]);
    let t = p.translation;
    Ok(RigidPose::new(m, Vec3::new(t[0], t[1], t[2]))?)
}

fn from_pose(p: &RigidPose) -> Dt6dPose {
    let m = p.rotation.0;
    Dt6dPose {
        rotation: [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]],
        translation: p.translation.0,
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn path_arg<'a>(s: *const c_char, what: &str) -> Result<&'a Path, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    let s = unsafe { CStr::from_ptr(s) }
        .to_str()
        .map_err(|_| Fail(Dt6dStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

fn state<T: Float>(model: &Path, mesh: TriMesh, k: CameraIntrinsics, pose: RigidPose) -> Result<TrackerState<T>, Fail> {
    Ok(TrackerState::new(Arc::new(Model::<T>::load(model)?), Arc::new(mesh), k, pose)?)
}

/// Creates a tracker from a model file. `mesh_path` may be null for the
/// built-in toy object, or name an OBJ file. On success `*out` receives a
/// handle to release with [`dt6d_tracker_free`].
///
/// # Safety
/// Pointers must be null or valid for the documented access.
#[no_mangle]
pub unsafe extern "C" fn dt6d_tracker_new(
    model_path: *const c_char,
    mesh_path: *const c_char,
    intrinsics: *const Dt6dIntrinsics,
    initial: *const Dt6dPose,
    out: *mut *mut Dt6dTracker,
) -> Dt6dStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = unsafe { path_arg(model_path, "model_path") }?;
        let k = unsafe { intrinsics.as_ref() }.ok_or_else(|| null("intrinsics"))?;
        let pose = to_pose(unsafe { initial.as_ref() }.ok_or_else(|| null("initial"))?)?;
        let k = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, k.width as usize, k.height as usize)?;
        let mesh = if mesh_path.is_null() {
            mesh::toy()
        } else {
            load_mesh(unsafe { path_arg(mesh_path, "mesh_path") }?)?
        };
        let inner = match read_header(model)?.value_bytes {
            8 => Inner::F64(state(model, mesh, k, pose)?),
            _ => Inner::F32(state(model, mesh, k, pose)?),
        };
        unsafe { *out = Box::into_raw(Box::new(Dt6dTracker { inner })) };
        Ok(())
    })
}

/// Releases a tracker. Null is ignored.
///
/// # Safety
/// `tracker` must come from [`dt6d_tracker_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dt6d_tracker_free(tracker: *mut Dt6dTracker) {
    if !tracker.is_null() {
        drop(unsafe { Box::from_raw(tracker) });
    }
}

/// One tracking step on a full camera frame: `rgb` holds `3·width·height`
/// interleaved values in `[0,1]`, `depth` holds `width·height` meters (0 =
/// no data). The new estimate is written to `out` (may be null). On failure
/// the estimate is unchanged.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn dt6d_tracker_step(
    tracker: *mut Dt6dTracker,
    rgb: *const f32,
    depth: *const f32,
    width: u32,
    height: u32,
    out: *mut Dt6dPose,
) -> Dt6dStatus {
    guard(|| {
        let t = unsafe { tracker.as_mut() }.ok_or_else(|| null("tracker"))?;
        if rgb.is_null() || depth.is_null() {
            return Err(null("frame buffer"));
        }
        let n = width as usize * height as usize;
        let rgb = unsafe { std::slice::from_raw_parts(rgb, 3 * n) }.to_vec();
        let depth = unsafe { std::slice::from_raw_parts(depth, n) }.to_vec();
        let frame = RgbdFrame::from_parts(width as usize, height as usize, rgb, depth)?;
        let pose = match &mut t.inner {
            Inner::F32(s) => {
                s.step(&frame)?;
                *s.pose()
            }
            Inner::F64(s) => {
                s.step(&frame)?;
                *s.pose()
            }
        };
        if let Some(o) = unsafe { out.as_mut() } {
            *o = from_pose(&pose);
        }
        Ok(())
    })
}

/// Replaces the pose estimate.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dt6d_tracker_reset(tracker: *mut Dt6dTracker, pose: *const Dt6dPose) -> Dt6dStatus {
    guard(|| {
        let t = unsafe { tracker.as_mut() }.ok_or_else(|| null("tracker"))?;
        let p = to_pose(unsafe { pose.as_ref() }.ok_or_else(|| null("pose"))?)?;
        match &mut t.inner {
            Inner::F32(s) => s.reset(p),
            Inner::F64(s) => s.reset(p),
        }
        Ok(())
    })
}

/// Current pose estimate.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dt6d_tracker_pose(tracker: *const Dt6dTracker, out: *mut Dt6dPose) -> Dt6dStatus {
    guard(|| {
        let t = unsafe { tracker.as_ref() }.ok_or_else(|| null("tracker"))?;
        let o = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *o = from_pose(match &t.inner {
            Inner::F32(s) => s.pose(),
            Inner::F64(s) => s.pose(),
        });
        Ok(())
    })
}

/// Phase timing of the last successful step; all zero before the first step
/// or after a reset.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dt6d_tracker_last_timing(tracker: *const Dt6dTracker, out: *mut Dt6dTiming) -> Dt6dStatus {
    guard(|| {
        let t = unsafe { tracker.as_ref() }.ok_or_else(|| null("tracker"))?;
        let o = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let timing = match &t.inner {
            Inner::F32(s) => s.last_step().map(|d| d.timing),
            Inner::F64(s) => s.last_step().map(|d| d.timing),
        };
        let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
        *o = timing.map_or_else(Dt6dTiming::default, |t| Dt6dTiming {
            render_ms: ms(t.render),
            normalize_ms: ms(t.normalize),
            forward_ms: ms(t.forward),
            update_ms: ms(t.update),
        });
        Ok(())
    })
}

/// Renders the tracker's object at `pose` with the default lighting into
/// caller buffers sized for the tracker's camera (`3·w·h` and `w·h` values).
///
/// # Safety
/// Buffers must hold `rgb_len` / `depth_len` values.
#[no_mangle]
pub unsafe extern "C" fn dt6d_tracker_render(
    tracker: *const Dt6dTracker,
    pose: *const Dt6dPose,
    rgb: *mut f32,
    rgb_len: usize,
    depth: *mut f32,
    depth_len: usize,
) -> Dt6dStatus {
    guard(|| {
        let t = unsafe { tracker.as_ref() }.ok_or_else(|| null("tracker"))?;
        let p = to_pose(unsafe { pose.as_ref() }.ok_or_else(|| null("pose"))?)?;
        if rgb.is_null() || depth.is_null() {
            return Err(null("frame buffer"));
        }
        let (m, k) = match &t.inner {
            Inner::F32(s) => (s.mesh(), s.intrinsics()),
            Inner::F64(s) => (s.mesh(), s.intrinsics()),
        };
        let n = k.width * k.height;
        if rgb_len != 3 * n || depth_len != n {
            return Err(Fail(
                Dt6dStatus::Shape,
                format!("buffers of {rgb_len}/{depth_len} values for a {}x{} camera", k.width, k.height),
            ));
        }
        let f = render_rgbd(m, &p, k, &Lighting::predicted());
        unsafe {
            std::slice::from_raw_parts_mut(rgb, rgb_len).copy_from_slice(f.rgb());
            std::slice::from_raw_parts_mut(depth, depth_len).copy_from_slice(f.depth());
        }
        Ok(())
    })
}

/// Message of the last failed call on this thread (empty if none). Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dt6d_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| {
        let mut v = e.borrow_mut();
        if v.is_empty() {
            v.push(0);
        }
        v.as_ptr() as *const c_char
    })
}

/// Library version, NUL-terminated.
#[no_mangle]
pub extern "C" fn dt6d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
