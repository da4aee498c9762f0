use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use meshpart::mesh::primitives::face_template;
use meshpart::mesh::save_obj;
use meshpart::pipeline::{synth_faces, train_model, RunConfig};
use meshpart_ffi::*;

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mpg_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn small_checkpoint(dir: &Path) -> (CString, CString, CString) {
    let template = face_template(10, 8);
    let data = synth_faces(12, &template, 4).unwrap();
    let mut config = RunConfig::default();
    config.hierarchy.levels = 2;
    config.hierarchy.factor = 3.0;
    config.model.latent = 6;
    config.model.order = 3;
    config.nmf.iterations = 200;
    config.nmf.restarts = 2;
    config.train.epochs = 2;
    config.train.batch_size = 4;
    let ckpt = train_model(&data, &config).unwrap();
    let ck = dir.join("model.mpgc");
    ckpt.save(&ck).unwrap();
    let a = dir.join("a.obj");
    let b = dir.join("b.obj");
    save_obj(&a, &data.mesh(0).unwrap()).unwrap();
    save_obj(&b, &data.mesh(1).unwrap()).unwrap();
    (cpath(&ck), cpath(&a), cpath(&b))
}

unsafe fn vertices(mesh: *const MpgMesh) -> Vec<f64> {
    let n = 3 * mpg_mesh_vertex_count(mesh);
    let mut buf = vec![0.0; n];
    assert_eq!(mpg_mesh_copy_vertices(mesh, buf.as_mut_ptr(), n), MpgStatus::MpgOk);
    buf
}

#[test]
fn editing_through_the_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, a, b) = small_checkpoint(dir.path());
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(mpg_checkpoint_load(ck.as_ptr(), &mut model), MpgStatus::MpgOk);
        assert_eq!(mpg_checkpoint_parts(model), 4);
        assert_eq!(mpg_checkpoint_latent(model), 6);

        let (mut src, mut tgt) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(mpg_mesh_load_obj(a.as_ptr(), &mut src), MpgStatus::MpgOk);
        assert_eq!(mpg_mesh_load_obj(b.as_ptr(), &mut tgt), MpgStatus::MpgOk);
        assert_eq!(mpg_mesh_vertex_count(src), 80);

        let mut recon = ptr::null_mut();
        assert_eq!(mpg_reconstruct(model, src, &mut recon), MpgStatus::MpgOk);
        let mut start = ptr::null_mut();
        assert_eq!(
            mpg_interpolate_part(model, src, tgt, 2, 0.0, &mut start),
            MpgStatus::MpgOk
        );
        assert_eq!(vertices(recon), vertices(start));

        let mut target_recon = ptr::null_mut();
        assert_eq!(mpg_reconstruct(model, tgt, &mut target_recon), MpgStatus::MpgOk);
        let all = [0usize, 1, 2, 3];
        let mut swapped = ptr::null_mut();
        assert_eq!(
            mpg_swap_parts(model, src, tgt, all.as_ptr(), all.len(), &mut swapped),
            MpgStatus::MpgOk
        );
        assert_eq!(vertices(swapped), vertices(target_recon));

        let mut z = vec![0.0; 6];
        assert_eq!(mpg_encode(model, src, z.as_mut_ptr(), z.len()), MpgStatus::MpgOk);
        assert!(z.iter().all(|v| v.is_finite()));
        assert_eq!(mpg_encode(model, src, z.as_mut_ptr(), 5), MpgStatus::MpgInvalidArgument);
        assert!(last_error().contains("need 6"));

        let mut h = -1.0;
        assert_eq!(mpg_hausdorff(recon, recon, &mut h), MpgStatus::MpgOk);
        assert_eq!(h, 0.0);
        assert_eq!(last_error(), "");

        let out = cpath(&dir.path().join("swapped.obj"));
        assert_eq!(mpg_mesh_write_obj(swapped, out.as_ptr()), MpgStatus::MpgOk);

        for m in [src, tgt, recon, start, target_recon, swapped] {
            mpg_mesh_free(m);
        }
        mpg_checkpoint_free(model);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    unsafe {
        let mut mesh = ptr::null_mut();
        assert_eq!(mpg_mesh_load_obj(ptr::null(), &mut mesh), MpgStatus::MpgNullPointer);
        assert!(mesh.is_null());

        let missing = CString::new("/nonexistent/face.obj").unwrap();
        assert_eq!(mpg_mesh_load_obj(missing.as_ptr(), &mut mesh), MpgStatus::MpgIoError);
        assert!(!last_error().is_empty());

        let mut ck = ptr::null_mut();
        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.mpgc");
        std::fs::write(&junk, b"not a checkpoint").unwrap();
        assert_eq!(
            mpg_checkpoint_load(cpath(&junk).as_ptr(), &mut ck),
            MpgStatus::MpgCheckpointError
        );
        assert!(ck.is_null());

        let v = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let bad_face = [0u32, 1, 7];
        assert_eq!(
            mpg_mesh_from_arrays(v.as_ptr(), 3, bad_face.as_ptr(), 1, &mut mesh),
            MpgStatus::MpgInvalidArgument
        );
        let face = [0u32, 1, 2];
        assert_eq!(
            mpg_mesh_from_arrays(v.as_ptr(), 3, face.as_ptr(), 1, &mut mesh),
            MpgStatus::MpgOk
        );
        assert_eq!(mpg_mesh_face_count(mesh), 1);
        assert_eq!(vertices(mesh), v);
        let mut h = 0.0;
        assert_eq!(mpg_hausdorff(mesh, ptr::null(), &mut h), MpgStatus::MpgNullPointer);
        mpg_mesh_free(mesh);

        assert_eq!(mpg_mesh_vertex_count(ptr::null()), 0);
        mpg_mesh_free(ptr::null_mut());
        mpg_checkpoint_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/meshpart.h")).unwrap();
    for name in [
        "mpg_last_error_message",
        "mpg_mesh_load_obj",
        "mpg_mesh_from_arrays",
        "mpg_mesh_copy_vertices",
        "mpg_mesh_write_obj",
        "mpg_mesh_free",
        "mpg_checkpoint_load",
        "mpg_checkpoint_free",
        "mpg_reconstruct",
        "mpg_interpolate_part",
        "mpg_swap_parts",
        "mpg_encode",
        "mpg_hausdorff",
        "MPG_NUMERIC_ERROR",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"meshpart.h\"\n\
         int main(void) {\n\
           MpgMesh *m = NULL;\n\
           MpgStatus s = mpg_mesh_load_obj(\"x.obj\", &m);\n\
           mpg_mesh_free(m);\n\
           return s == MPG_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(e) => eprintln!("no C compiler available, skipped: {e}"),
    }
}
