use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn meshpart(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshpart"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = meshpart(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_CONFIG: &str = "\
[train]
epochs = 2
batch_size = 4

[model]
latent = 6
order = 3

[hierarchy]
levels = 2
factor = 3.0

[nmf]
restarts = 2
iterations = 200
";

#[test]
fn full_workflow_on_a_small_template() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let template = d.join("template.obj");
    ok(&["make-template", "--columns", "10", "--rows", "8", "--out", p(&template)]);

    let data = d.join("data");
    let said = ok(&[
        "synth-data",
        "--n",
        "20",
        "--template",
        p(&template),
        "--seed",
        "3",
        "--out",
        p(&data),
    ]);
    assert!(said.starts_with("18 train, 2 test"));
    assert_eq!(fs::read_dir(data.join("train")).unwrap().count(), 18);

    let weights = d.join("weights.csv");
    let plys = d.join("weights");
    ok(&[
        "nmf-weights",
        "--template",
        p(&template),
        "--parts",
        "4",
        "--levels",
        "2",
        "--factor",
        "3",
        "--restarts",
        "2",
        "--iterations",
        "100",
        "--seed",
        "1",
        "--out",
        p(&weights),
        "--ply-dir",
        p(&plys),
    ]);
    let csv = fs::read_to_string(&weights).unwrap();
    assert!(csv.starts_with("part_0,part_1,part_2,part_3\n"));
    assert!(plys.join("part_3.ply").exists());

    let config = d.join("run.toml");
    fs::write(&config, SMALL_CONFIG).unwrap();
    let ckpt = d.join("model.mpgc");
    let train = |out: &Path| {
        ok(&[
            "train",
            "--data",
            p(&data),
            "--config",
            p(&config),
            "--seed",
            "9",
            "--out",
            p(out),
        ]);
    };
    train(&ckpt);
    let again = d.join("again.mpgc");
    train(&again);
    assert_eq!(
        fs::read(&ckpt).unwrap(),
        fs::read(&again).unwrap(),
        "seeded training is reproducible"
    );

    let face = data.join("train").read_dir().unwrap().next().unwrap().unwrap().path();
    let other = data.join("test").read_dir().unwrap().next().unwrap().unwrap().path();
    let recon = d.join("recon.obj");
    ok(&["reconstruct", "--ckpt", p(&ckpt), "--in", p(&face), "--out", p(&recon)]);

    let steps = d.join("steps");
    let printed = ok(&[
        "interpolate",
        "--ckpt",
        p(&ckpt),
        "--source",
        p(&face),
        "--target",
        p(&other),
        "--part",
        "1",
        "--steps",
        "8",
        "--out",
        p(&steps),
    ]);
    assert!(printed.trim().parse::<f64>().unwrap() >= 0.0);
    for i in 1..=8 {
        assert!(steps.join(format!("step_{i}.obj")).exists());
    }
    assert!(steps.join("distance.ply").exists());

    let swapped = d.join("swapped.obj");
    ok(&[
        "swap",
        "--ckpt",
        p(&ckpt),
        "--source",
        p(&face),
        "--target",
        p(&other),
        "--parts",
        "0,1,2,3",
        "--out",
        p(&swapped),
    ]);
    let target_recon = d.join("target_recon.obj");
    ok(&[
        "reconstruct",
        "--ckpt",
        p(&ckpt),
        "--in",
        p(&other),
        "--out",
        p(&target_recon),
    ]);
    assert_eq!(fs::read(&swapped).unwrap(), fs::read(&target_recon).unwrap());

    let printed = ok(&[
        "hausdorff",
        "--a",
        p(&recon),
        "--b",
        p(&recon),
        "--out",
        p(&d.join("h.ply")),
    ]);
    assert_eq!(printed.trim(), "0");

    let synth = d.join("synth");
    let said = ok(&[
        "synth-swaps",
        "--ckpt",
        p(&ckpt),
        "--sources",
        p(&data.join("train")),
        "--targets",
        p(&data.join("train")),
        "--n-sources",
        "2",
        "--n-targets",
        "3",
        "--out",
        p(&synth),
    ]);
    assert!(said.starts_with("24 faces"));

    let viz = d.join("viz.csv");
    let said = ok(&[
        "embed-viz",
        "--ckpt",
        p(&ckpt),
        "--train",
        p(&data.join("train")),
        "--test",
        p(&data.join("test")),
        "--synth",
        p(&synth),
        "--max-per-set",
        "10",
        "--out",
        p(&viz),
    ]);
    assert!(said.contains("train count 10") && said.contains("test count 2") && said.contains("synth count 10"));
    assert_eq!(fs::read_to_string(&viz).unwrap().lines().count(), 1 + 22);
    assert!(d.join("viz.csv.ellipses.csv").exists());
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(meshpart(&["reconstruct"]).status.code(), Some(2));
    assert_eq!(meshpart(&["no-such-command"]).status.code(), Some(2));

    let missing = d.join("missing.obj");
    let out = meshpart(&[
        "hausdorff",
        "--a",
        p(&missing),
        "--b",
        p(&missing),
        "--out",
        p(&d.join("x.ply")),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let bad = d.join("bad.obj");
    fs::write(&bad, "v 0 0 0\nv 1 0 0\nf 1 2 9\n").unwrap();
    let out = meshpart(&[
        "hausdorff",
        "--a",
        p(&bad),
        "--b",
        p(&bad),
        "--out",
        p(&d.join("x.ply")),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let template = d.join("t.obj");
    ok(&["make-template", "--columns", "10", "--rows", "8", "--out", p(&template)]);
    let data = d.join("data");
    ok(&["synth-data", "--n", "8", "--template", p(&template), "--out", p(&data)]);
    let config = d.join("hot.toml");
    fs::write(
        &config,
        format!("{SMALL_CONFIG}\n[ablation]\nno_projection = true\n")
            .replace("batch_size = 4", "batch_size = 4\nlearning_rate = 1e150"),
    )
    .unwrap();
    let ckpt = d.join("m.mpgc");
    let out = meshpart(&["train", "--data", p(&data), "--config", p(&config), "--out", p(&ckpt)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!ckpt.exists());

    let unknown = d.join("unknown.toml");
    fs::write(&unknown, "[train]\nepoch = 3\n").unwrap();
    let out = meshpart(&["train", "--data", p(&data), "--config", p(&unknown), "--out", p(&ckpt)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn mismatched_meshes_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let template = d.join("t.obj");
    ok(&["make-template", "--columns", "10", "--rows", "8", "--out", p(&template)]);
    let data = d.join("data");
    ok(&["synth-data", "--n", "8", "--template", p(&template), "--out", p(&data)]);
    let config = d.join("run.toml");
    fs::write(&config, SMALL_CONFIG).unwrap();
    let ckpt = d.join("m.mpgc");
    ok(&["train", "--data", p(&data), "--config", p(&config), "--out", p(&ckpt)]);

    let other = d.join("other.obj");
    ok(&["make-template", "--columns", "9", "--rows", "9", "--out", p(&other)]);
    let out = meshpart(&[
        "reconstruct",
        "--ckpt",
        p(&ckpt),
        "--in",
        p(&other),
        "--out",
        p(&d.join("r.obj")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("topology"));
}
