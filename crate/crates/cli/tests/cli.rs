use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_via-regen")).args(args).output().expect("binary runs")
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn characterize_default_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("char");
    let cfg = configs().join("rig.toml");
    let o = run(&["characterize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("characterization_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 12);
    assert!(column(&summary, "d_hat_std").iter().skip(1).all(|s| s.parse::<f64>().unwrap() > 0.0));
    let raw = fs::read_to_string(out.join("characterization.csv")).unwrap();
    assert!(raw.starts_with("u,D_r,D_d,d_hat,p0_hat,omega,I1,I2,Ir\n"));
    assert_eq!(raw.lines().count(), 111);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("characterization.json")).unwrap()).unwrap();
    assert_eq!(json["peak_command"], 0.5);
    assert_eq!(json["schema_version"], 1);
}

#[test]
fn noiseless_sweep_recovers_linear_damping() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("rig.toml")).unwrap().replace("noise = 0.03", "noise = 0.0");
    let cfg = dir.path().join("quiet.toml");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = run(&["characterize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let raw = fs::read_to_string(out.join("characterization.csv")).unwrap();
    let d_max = 20.0f64.powi(2) * 0.0212f64.powi(2) / 21.2;
    for (u, d) in column(&raw, "u").iter().zip(column(&raw, "d_hat")) {
        let (u, d): (f64, f64) = (u.parse().unwrap(), d.parse().unwrap());
        assert!((d - d_max * u).abs() <= 1e-12 * d_max, "u = {u}: {d}");
    }
}

#[test]
fn pendulum_subset_reports_energy() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("toy_pendulum.toml")).unwrap();
    let start = text.find("schemes = [").unwrap();
    let end = start + text[start..].find(']').unwrap() + 1;
    let cfg = dir.path().join("two.toml");
    fs::write(&cfg, format!("{}schemes = [\"dynamic\", \"critically_damped\"]{}", &text[..start], &text[end..])).unwrap();
    let out = dir.path().join("out");
    let o = run(&["pendulum", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("energy_summary.csv")).unwrap();
    assert_eq!(column(&summary, "scheme"), ["dynamic", "critically_damped"]);
    assert_eq!(column(&summary, "eta")[0], "0.0");
    let traj = fs::read_to_string(out.join("trajectory_dynamic.csv")).unwrap();
    assert!(traj.starts_with("t,q,qdot,theta1,theta2,u1,u2,u3,d,P_rege\n"));
    assert_eq!(traj.lines().count(), 1002);
}

fn small_longterm(dir: &Path) -> std::path::PathBuf {
    let text = fs::read_to_string(configs().join("maccepa_vd.toml"))
        .unwrap()
        .replace("movements = 25", "movements = 2")
        .replace("trials = 20", "trials = 2");
    let cfg = dir.join("small.toml");
    fs::write(&cfg, text).unwrap();
    cfg
}

#[test]
fn longterm_summary_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_longterm(dir.path());
    let outs: Vec<_> = ["a", "b"].iter().map(|n| dir.path().join(n)).collect();
    for (out, jobs) in outs.iter().zip(["1", "2"]) {
        let o = run(&["longterm", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "5", "--jobs", jobs]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let summary = fs::read_to_string(outs[0].join("summary.csv")).unwrap();
    assert_eq!(column(&summary, "condition"), ["FSFD", "FSVD", "VSFD", "VSVD"]);
    for g in ["gamma_t", "gamma_o", "gamma_c", "gamma_r"] {
        assert!(column(&summary, g).iter().all(|v| (0.0..=1.0).contains(&v.parse::<f64>().unwrap())));
    }
    assert_eq!(fs::read_dir(outs[0].join("trials")).unwrap().count(), 8);
    assert_eq!(fs::read_dir(outs[0].join("movements")).unwrap().count(), 16);
    for entry in ["summary.csv", "summary.json", "trials/VSVD_001.json", "movements/FSVD_000_001.csv"] {
        assert_eq!(fs::read(outs[0].join(entry)).unwrap(), fs::read(outs[1].join(entry)).unwrap(), "{entry}");
    }
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "unknown_key = 3\n").unwrap();
    let o = run(&["characterize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown"));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let rig = configs().join("rig.toml");
    let o = run(&["characterize", "--config", rig.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}
