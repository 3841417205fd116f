use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dt6d::cli::PipelineConfig;

const SMALL: &str = r#"
[camera]
width = 160

[generator]
input_side = 48

[network]
input_side = 48
branch_filters = 4
trunk_filters = 6
fc_units = 8

[backgrounds]
scenes = 2
views_per_scene = 2

[data]
count = 24
stats_samples = 64
chunk = 8
"#;

fn write_config(dir: &Path, seed: u64, extra: &str) -> std::path::PathBuf {
    let path = dir.join(format!("cfg{seed}.toml"));
    let out = dir.join(format!("out{seed}"));
    fs::write(&path, format!("seed = {seed}\noutput_dir = {:?}\n{SMALL}{extra}", out.to_str().unwrap())).unwrap();
    path
}

fn dt6d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dt6d"))
        .args(args)
        .env_remove("DT6D_THREADS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn template_parses_to_defaults() {
    let o = dt6d(&["template"]);
    assert!(o.status.success());
    let cfg = PipelineConfig::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
}

#[test]
fn usage_and_config_errors_have_distinct_codes() {
    assert_eq!(dt6d(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(dt6d(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.toml");
    let o = dt6d(&["gen-data", "-c", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let bad = write_config(dir.path(), 1, "[data]\ncolour = 1\n");
    let o = dt6d(&["gen-data", "-c", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let mismatch = write_config(dir.path(), 2, "").to_str().unwrap().to_string();
    let text = fs::read_to_string(&mismatch).unwrap().replace("[network]\ninput_side = 48", "[network]\ninput_side = 64");
    fs::write(&mismatch, text).unwrap();
    let o = dt6d(&["gen-data", "-c", &mismatch]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("network.input_side"), "{}", stderr(&o));
}

#[test]
fn missing_model_names_the_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 3, "");
    let o = dt6d(&["track", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("paths.model"), "{}", stderr(&o));
}

#[test]
fn bad_thread_env_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 4, "");
    let o = Command::new(env!("CARGO_BIN_EXE_dt6d"))
        .args(["gen-data", "-c", cfg.to_str().unwrap()])
        .env("DT6D_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("DT6D_THREADS"));
}

#[test]
fn gen_data_is_reproducible_and_never_overwrites() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), 7, "");
    assert!(dt6d(&["--threads", "1", "gen-data", "-c", a.to_str().unwrap()]).status.success());
    let first = fs::read(dir.path().join("out7/dataset.bin")).unwrap();

    let o = dt6d(&["gen-data", "-c", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("existing output"), "{}", stderr(&o));
    assert_eq!(fs::read(dir.path().join("out7/dataset.bin")).unwrap(), first);

    let other = tempfile::tempdir().unwrap();
    let b = write_config(other.path(), 7, "");
    assert!(dt6d(&["--threads", "2", "gen-data", "-c", b.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(other.path().join("out7/dataset.bin")).unwrap(), first);

    let c = write_config(other.path(), 8, "");
    assert!(dt6d(&["gen-data", "-c", c.to_str().unwrap()]).status.success());
    assert_ne!(fs::read(other.path().join("out8/dataset.bin")).unwrap(), first);
}

#[test]
fn render_preview_writes_both_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 9, "");
    let o = dt6d(&["render-preview", "-c", cfg.to_str().unwrap(), "--index", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["preview_00003_pred.png", "preview_00003_obs.png"] {
        let bytes = fs::read(dir.path().join("out9").join(name)).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}
