use std::fs;
use std::path::Path;
use std::process::Command;

const CFG: &str = "frames=40\nepochs=4\nk=3\ntrain_points=32\nlnet_encoder=2,16,32\nlnet_head=32,16,3\nmnet=2,16,16,1\nlnet_activation=tanh\ncheckpoint_every=2\nseeds=0,1\n";

fn run(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_mapforge"))
        .args(args)
        .output()
        .expect("run mapforge");
    assert!(
        out.status.success(),
        "mapforge {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            v.extend(dir_bytes(&path));
        } else {
            v.push((
                path.strip_prefix(dir).unwrap().display().to_string(),
                fs::read(&path).unwrap(),
            ));
        }
    }
    v.sort();
    v
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, CFG).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        run(&[
            "simulate",
            "--data",
            d.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "5",
        ]);
    }
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn every_stage_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, CFG).unwrap();
    let cfg = cfg.to_str().unwrap();
    let data = tmp.path().join("data");
    let d = data.to_str().unwrap();
    for stage in ["simulate", "init", "topology", "train", "eval", "plot"] {
        run(&[stage, "--data", d, "--config", cfg]);
    }
    for f in [
        "batches.csv",
        "pairwise.csv",
        "poses_final.csv",
        "loss_history.csv",
        "ate_curve.csv",
        "ckpt_2.bin",
        "ckpt_4.bin",
        "map.svg",
        "traj.svg",
        "config.txt",
    ] {
        assert!(data.join(f).is_file(), "missing {f}");
    }
    let ate = fs::read_to_string(data.join("ate.csv")).unwrap();
    let mut lines = ate.lines();
    assert_eq!(lines.next(), Some("method,t_ate_m,r_ate_deg"));
    for l in lines {
        let cols: Vec<&str> = l.split(',').collect();
        assert_eq!(cols.len(), 3);
        assert!(cols[1].parse::<f64>().unwrap().is_finite());
    }
    let history = fs::read_to_string(data.join("loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 5);

    let ab = tmp.path().join("ablation");
    run(&["ablate", "--data", d, "--config", cfg, "--out", ab.to_str().unwrap()]);
    let rows = fs::read_to_string(ab.join("ablation.csv")).unwrap();
    // header plus four variants for each of two seeds
    assert_eq!(rows.lines().count(), 9);
    assert!(ab.join("ablation_summary.csv").is_file());
}

#[test]
fn resume_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, CFG).unwrap();
    let cfg = cfg.to_str().unwrap();
    let data = tmp.path().join("data");
    let d = data.to_str().unwrap();
    run(&["simulate", "--data", d, "--config", cfg]);
    run(&["init", "--data", d, "--config", cfg]);

    let full = tmp.path().join("full");
    run(&["train", "--data", d, "--config", cfg, "--out", full.to_str().unwrap()]);
    let resumed = tmp.path().join("resumed");
    let ckpt = full.join("ckpt_2.bin");
    run(&[
        "train",
        "--data",
        d,
        "--config",
        cfg,
        "--out",
        resumed.to_str().unwrap(),
        "--resume",
        ckpt.to_str().unwrap(),
    ]);
    for f in ["poses_final.csv", "loss_history.csv", "ckpt_4.bin"] {
        assert_eq!(
            fs::read(full.join(f)).unwrap(),
            fs::read(resumed.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn bad_config_reports_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "no_such_key=1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mapforge"))
        .args([
            "simulate",
            "--data",
            tmp.path().to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
