//! C ABI over `meshpart`.
//!
//! Every fallible function returns an [`MpgStatus`]; on failure a
//! description is available from [`mpg_last_error_message`] on the same
//! thread. Objects are opaque handles released with their `_free` function.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use meshpart::mesh::{read_obj, save_obj, vertex_distance_field};
use meshpart::model::Checkpoint;
use meshpart::{Error, Mesh};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MpgStatus {
    MpgOk = 0,
    MpgNullPointer = 1,
    MpgInvalidArgument = 2,
    MpgParseError = 3,
    MpgDataError = 4,
    MpgNumericError = 5,
    MpgCheckpointError = 6,
    MpgIoError = 7,
    MpgPanic = 8,
}

/// Triangle mesh handle.
pub struct MpgMesh(Mesh);

/// Trained model handle.
pub struct MpgCheckpoint(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MpgStatus {
    match e {
        Error::Contract(_) => MpgStatus::MpgInvalidArgument,
        Error::Parse { .. } => MpgStatus::MpgParseError,
        Error::NumericOverflow { .. } | Error::Numeric(_) => MpgStatus::MpgNumericError,
        Error::Data(_) | Error::Config(_) => MpgStatus::MpgDataError,
        Error::Checkpoint(_) => MpgStatus::MpgCheckpointError,
        Error::Io(_) => MpgStatus::MpgIoError,
    }
}

struct Fail(MpgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MpgStatus::MpgNullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MpgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MpgStatus::MpgOk
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {msg}"));
            MpgStatus::MpgPanic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(MpgStatus::MpgInvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mpg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpg_mesh_load_obj(path: *const c_char, out: *mut *mut MpgMesh) -> MpgStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        emit(out, MpgMesh(read_obj(path)?))
    })
}

/// Builds a mesh from `vertex_count` xyz triples and `face_count` index triples.
///
/// # Safety
/// `vertices` must hold `3 * vertex_count` doubles and `faces`
/// `3 * face_count` indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpg_mesh_from_arrays(
    vertices: *const f64,
    vertex_count: usize,
    faces: *const u32,
    face_count: usize,
    out: *mut *mut MpgMesh,
) -> MpgStatus {
    guard(|| {
        if vertices.is_null() {
            return Err(null("vertices"));
        }
        if faces.is_null() && face_count > 0 {
            return Err(null("faces"));
        }
        let v = std::slice::from_raw_parts(vertices, 3 * vertex_count);
        let f: &[u32] = if face_count == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(faces, 3 * face_count)
        };
        let mesh = Mesh::new(
            v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            f.chunks_exact(3)
                .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize])
                .collect(),
        )?;
        emit(out, MpgMesh(mesh))
    })
}

/// Number of vertices; 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpg_mesh_vertex_count(mesh: *const MpgMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.vertex_count())
}

/// Number of triangles; 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpg_mesh_face_count(mesh: *const MpgMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.face_count())
}

/// Copies xyz positions into `out`, which must hold `len >= 3 * vertex_count` doubles.
///
/// # Safety
/// `mesh` must be a live handle and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mpg_mesh_copy_vertices(mesh: *const MpgMesh, out: *mut f64, len: usize) -> MpgStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let need = 3 * m.0.vertex_count();
        if len < need {
            return Err(Fail(
                MpgStatus::MpgInvalidArgument,
                format!("buffer holds {len} values, need {need}"),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (d, s) in dst.iter_mut().zip(m.0.vertices().iter().flatten()) {
            *d = *s;
        }
        Ok(())
    })
}

/// # Safety
/// `mesh` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mpg_mesh_write_obj(mesh: *const MpgMesh, path: *const c_char) -> MpgStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        let path = path_arg(path, "path")?;
        save_obj(path, &m.0)?;
        Ok(())
    })
}

/// # Safety
/// `mesh` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mpg_mesh_free(mesh: *mut MpgMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpg_checkpoint_load(path: *const c_char, out: *mut *mut MpgCheckpoint) -> MpgStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        emit(out, MpgCheckpoint(Checkpoint::load(path)?))
    })
}

/// # Safety
/// `ckpt` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mpg_checkpoint_free(ckpt: *mut MpgCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

/// Number of parts; 0 for a null handle.
///
/// # Safety
/// `ckpt` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpg_checkpoint_parts(ckpt: *const MpgCheckpoint) -> usize {
    ckpt.as_ref().map_or(0, |c| c.0.parts())
}

/// Latent length; 0 for a null handle.
///
/// # Safety
/// `ckpt` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpg_checkpoint_latent(ckpt: *const MpgCheckpoint) -> usize {
    ckpt.as_ref().map_or(0, |c| c.0.latent())
}

/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpg_reconstruct(
    ckpt: *const MpgCheckpoint,
    mesh: *const MpgMesh,
    out: *mut *mut MpgMesh,
) -> MpgStatus {
    guard(|| {
        let c = handle(ckpt, "checkpoint")?;
        let m = handle(mesh, "mesh")?;
        emit(out, MpgMesh(c.0.reconstruct(&m.0)?))
    })
}

/// Source with part `part` blended `alpha` of the way to the target.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mpg_interpolate_part(
    ckpt: *const MpgCheckpoint,
    source: *const MpgMesh,
    target: *const MpgMesh,
    part: usize,
    alpha: f64,
    out: *mut *mut MpgMesh,
) -> MpgStatus {
    guard(|| {
        let c = handle(ckpt, "checkpoint")?;
        let s = handle(source, "source")?;
        let t = handle(target, "target")?;
        emit(out, MpgMesh(c.0.interpolate_part(&s.0, &t.0, part, alpha)?))
    })
}

/// Parts listed in `parts` (length `count`) come from the target.
///
/// # Safety
/// Handles must be live; `parts` must hold `count` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mpg_swap_parts(
    ckpt: *const MpgCheckpoint,
    source: *const MpgMesh,
    target: *const MpgMesh,
    parts: *const usize,
    count: usize,
    out: *mut *mut MpgMesh,
) -> MpgStatus {
    guard(|| {
        let c = handle(ckpt, "checkpoint")?;
        let s = handle(source, "source")?;
        let t = handle(target, "target")?;
        if parts.is_null() && count > 0 {
            return Err(null("parts"));
        }
        let list: &[usize] = if count == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(parts, count)
        };
        emit(out, MpgMesh(c.0.swap_parts(&s.0, &t.0, list)?))
    })
}

/// Writes the latent vector into `out`, which must hold `len >= latent` doubles.
///
/// # Safety
/// Handles must be live; `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mpg_encode(
    ckpt: *const MpgCheckpoint,
    mesh: *const MpgMesh,
    out: *mut f64,
    len: usize,
) -> MpgStatus {
    guard(|| {
        let c = handle(ckpt, "checkpoint")?;
        let m = handle(mesh, "mesh")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let z = c.0.encode(&m.0)?;
        if len < z.len() {
            return Err(Fail(
                MpgStatus::MpgInvalidArgument,
                format!("buffer holds {len} values, need {}", z.len()),
            ));
        }
        ptr::copy_nonoverlapping(z.values().as_ptr(), out, z.len());
        Ok(())
    })
}

/// Largest corresponding-vertex distance between two registered meshes.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mpg_hausdorff(a: *const MpgMesh, b: *const MpgMesh, out: *mut f64) -> MpgStatus {
    guard(|| {
        let a = handle(a, "a")?;
        let b = handle(b, "b")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = vertex_distance_field(&a.0, &b.0)?.hausdorff;
        Ok(())
    })
}
