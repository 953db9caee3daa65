use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 3

[mesh]
elements = 8

[time]
steps = 12
cadence = 4

[training]
collocation = 8
pretrain_epochs = 4
update_epochs = 2
learning_rate = 1e-3
layers = [2, 4, 1]

[output]
snapshot_every = 4
resolution = 9
"#;

fn co2seq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_co2seq"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("CO2SEQ_OUT_ROOT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_direct_then_render_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let out = dir.path().join("direct");
    let o = co2seq(&["run-direct", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in [
        "pressure_000000.csv",
        "pressure_000008.csv",
        "saturation_000012.csv",
        "mass.csv",
        "timings.csv",
        "config.toml",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }

    let snap = out.join("pressure_000004.csv");
    let o = co2seq(&["render", snap.to_str().unwrap(), "--palette", "thermal"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let image = std::fs::read(out.join("pressure_000004.ppm")).unwrap();
    assert!(image.starts_with(b"P6\n9 9\n255\n"));
    assert_eq!(image.len(), "P6\n9 9\n255\n".len() + 9 * 9 * 3);

    let report = dir.path().join("report.csv");
    let o = co2seq(&[
        "compare",
        out.to_str().unwrap(),
        out.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(report).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(",0e0,0e0,0e0,1,1")), "{text}");
}

#[test]
fn saved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let a = dir.path().join("a");
    assert!(
        co2seq(&["run-direct", "--config", &config, "--out", a.to_str().unwrap()])
            .status
            .success()
    );
    let b = dir.path().join("b");
    let saved = a.join("config.toml");
    let o = co2seq(&[
        "run-direct",
        "--config",
        saved.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["saturation_000012.csv", "pressure_000008.csv", "mass.csv"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn pretrain_writes_a_checkpoint_that_run_hybrid_accepts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let ckpt = dir.path().join("net.txt");
    let o = co2seq(&["pretrain", "--config", &config, "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("4 epochs"));
    let out = dir.path().join("hybrid");
    let o = co2seq(&[
        "run-hybrid",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let losses = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(losses.lines().count(), 1 + 3 * 2);
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[time]\ncadence = 0\n", "time.cadence"),
        ("[mesh]\nelements = \"many\"\n", "mesh.elements"),
        ("[time]\nsource_projection = \"cubic\"\n", "time.source_projection"),
        ("[training]\nlayers = [3, 4, 1]\n", "training.layers"),
        ("[mesh]\nwidth = 3\n", "width"),
    ];
    for (text, key) in cases {
        let config = write_config(dir.path(), text);
        let o = co2seq(&[
            "run-direct",
            "--config",
            &config,
            "--out",
            dir.path().join("x").to_str().unwrap(),
        ]);
        assert!(!o.status.success(), "{text}");
        assert!(stderr(&o).contains(key), "{text}: {}", stderr(&o));
    }
    let o = co2seq(&[
        "run-direct",
        "--config",
        dir.path().join("absent.toml").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("absent.toml"), "{}", stderr(&o));
}

#[test]
fn compare_without_common_snapshots_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let o = co2seq(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no pressure snapshots in common"));
}
