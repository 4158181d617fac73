use std::path::Path;
use std::process::{Command, Output};

fn phasefield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasefield"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_writes_manifest_and_images() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = phasefield(&["generate", "--geometry", "hourglass", "--slices", "3", "--n", "1600", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (stack, meta) = phasefield::slice_data::load_stack(&out.join("manifest.toml")).unwrap();
    assert_eq!(stack.planes().len(), 3);
    assert_eq!(stack.grid_size(), 40);
    assert_eq!(meta.geometry.as_deref(), Some("hourglass"));
    let images = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm"))
        .count();
    assert_eq!(images, 3);
}

#[test]
fn noisy_generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = phasefield(&["generate", "--geometry", "four_way_branch", "--sigma", "0.3", "--seed", "1", "--format", "csv", "--out", p(&out)]);
        assert!(o.status.success());
        out
    };
    let (a, b) = (run("a"), run("b"));
    for i in 0..5 {
        let name = format!("manifest_plane_{i:03}.csv");
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = phasefield(&["generate", "--geometry", "torus", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown geometry"));

    assert_eq!(phasefield(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(phasefield(&["--help"]).status.code(), Some(0));

    let o = phasefield(&["generate", "--geometry", "cylinder", "--n", "1500", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));

    let missing = dir.path().join("missing.toml");
    let o = phasefield(&["reconstruct", "--manifest", p(&missing), "--out", p(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = phasefield(&["reconstruct", "--geometry", "cylinder", "--threshold", "0.2", "--out", p(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(1));

    // A learning rate this large overflows the parameters on the first step.
    let o = phasefield(&[
        "reconstruct", "--geometry", "cylinder", "--n", "64", "--epochs", "3", "--batch", "50", "--lr", "1e308",
        "--out", p(&dir.path().join("blowup")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("blowup/log.csv").exists());
    assert!(dir.path().join("blowup/net.txt").exists());
}

#[test]
fn reconstruct_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert!(phasefield(&["generate", "--geometry", "cylinder", "--n", "400", "--out", p(&data)]).status.success());
    let run = dir.path().join("run");
    let o = phasefield(&[
        "reconstruct", "--manifest", p(&data.join("manifest.toml")), "--epochs", "300", "--batch", "500",
        "--eps-z", "10", "--mesh-resolution", "30", "--out", p(&run),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("wall-clock:"));
    assert!(stdout.contains("components:"));
    for f in ["net.txt", "log.csv", "report.txt", "report.kv", "mesh.obj", "config.toml"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(run.join("log.csv")).unwrap();
    assert!(log.starts_with("epoch,total,regression,energy,ms\n"));
    assert_eq!(log.lines().count(), 1 + 31);

    // The effective config reproduces the run.
    let again = dir.path().join("again");
    let o = phasefield(&["reconstruct", "--config", p(&run.join("config.toml")), "--reproducible", "--out", p(&again)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(run.join("net.txt")).unwrap(), std::fs::read(again.join("net.txt")).unwrap());

    let img = dir.path().join("z.pgm");
    let o = phasefield(&["slice", "--checkpoint", p(&run.join("net.txt")), "--axis", "z", "--at", "0.5", "--resolution", "64", "--out", p(&img)]);
    assert!(o.status.success());
    let (side, _) = phasefield::slice_data::read_image(&img).unwrap();
    assert_eq!(side, 64);

    let mesh = dir.path().join("m.obj");
    let o = phasefield(&["mesh", "--checkpoint", p(&run.join("net.txt")), "--resolution", "30", "--out", p(&mesh)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!phasefield::volume::VolumeMesh::load_obj(&mesh).unwrap().triangles.is_empty());
}

#[test]
fn compare_integration_small() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = phasefield(&[
        "compare-integration", "--geometry", "cylinder", "--n", "100", "--eps-z", "10", "--epochs", "20",
        "--mc-batch", "200", "--mc-batch", "50", "--grid", "8", "--grid-epochs", "10", "--probe-resolution", "10",
        "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let kv = std::fs::read_to_string(out.join("comparison.kv")).unwrap();
    for key in ["mc_b200.epochs=20", "mc_b50.epochs=20", "grid_8.epochs=10", "grid_8.estimator=grid:8", "wall_clock_ratio="] {
        assert!(kv.contains(key), "{key} missing from\n{kv}");
    }
    for arm in ["mc_b200", "mc_b50", "grid_8"] {
        assert!(out.join(arm).join("net.txt").exists());
    }
}

#[test]
fn sweep_directories() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "").unwrap();
    let o = phasefield(&["sweep", "--table", p(&empty), "--geometry", "hourglass", "--out", p(&dir.path().join("e"))]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_dir(dir.path().join("e")).unwrap().count(), 0);

    let table = dir.path().join("t.toml");
    std::fs::write(
        &table,
        "[[setting]]\nid = 1\neps_xy = 1.0\neps_z = 1.0\npenalty = 10.0\nbatch_size = 100\nepochs = 5\n\
         [[setting]]\nid = 2\neps_xy = 1.0\neps_z = 0.1\npenalty = 1000.0\nbatch_size = 100\nepochs = 5\n",
    )
    .unwrap();
    let out = dir.path().join("s");
    let o = phasefield(&["sweep", "--table", p(&table), "--geometry", "hourglass", "--n", "100", "--probe-resolution", "10", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for id in [1, 2] {
        let d = out.join(format!("setting_{id}"));
        for f in ["net.txt", "log.csv", "report.txt", "report.kv", "config.toml"] {
            assert!(d.join(f).exists(), "{f}");
        }
    }
}

#[test]
fn shipped_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        if text.contains("[[setting]]") {
            assert_eq!(phasefield::trainer::parse_sweep_table(&text).unwrap(), phasefield::trainer::table1());
        } else {
            let o = phasefield::config::RunOverrides::load(&path).unwrap();
            phasefield::config::RunConfig::resolve(&o).unwrap();
        }
        seen += 1;
    }
    assert_eq!(seen, 4);
}
