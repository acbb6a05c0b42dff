use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mfcsim"));
    c.env_remove("MFCSIM_OUT");
    c
}

fn fig3() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fig3.json")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn write_config(dir: &Path, name: &str, edit: impl Fn(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fig3()).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn run_short(config: &Path, out: &Path) -> Output {
    bin()
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--horizon", "1", "--dt", "1e-3"])
        .output()
        .unwrap()
}

#[test]
fn fig3_writes_csvs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_short(&fig3(), dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["mfc.csv", "matched_only.csv", "single_loop.csv", "matched_only_nominal.csv", "summary.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("mfc.csv")).unwrap();
    assert!(!csv.contains('\r'));
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,e,y,y_d,u,V,w,Gamma,x1,x2,x3,xistar1,xistar2,xistar3,xin1,xin2,xin3"
    );
    assert_eq!(csv.lines().count(), 1 + 11);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["runs"].as_array().unwrap().len(), 3);
    for f in summary["files"].as_array().unwrap() {
        assert!(Path::new(f.as_str().unwrap()).exists());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_short(&fig3(), a.path())), 0);
    assert_eq!(code(&run_short(&fig3(), b.path())), 0);
    for name in ["mfc.csv", "matched_only.csv", "single_loop.csv", "matched_only_nominal.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn zero_horizon_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(fig3())
        .arg("--out")
        .arg(dir.path())
        .args(["--horizon", "0.0"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn bad_sign_flag_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(fig3())
        .arg("--out")
        .arg(dir.path())
        .args(["--sign", "smooth"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_key_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", |v| {
        v["sim"]["steps"] = 10.into();
    });
    let out = run_short(&cfg, &dir.path().join("out"));
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line") && err.contains("steps"), "{err}");
}

#[test]
fn out_of_range_alpha_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "alpha.json", |v| {
        v["system"]["params"]["alpha"][0] = 1.5.into();
    });
    assert_eq!(code(&bin().args(["verify", "--config"]).arg(&cfg).output().unwrap()), 2);
    assert_eq!(code(&run_short(&cfg, &dir.path().join("out"))), 2);
}

#[test]
fn verify_reference_plant_passes() {
    let out = bin().args(["verify", "--config"]).arg(fig3()).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("relative degree 3: pass"));
}

#[test]
fn verify_rejects_direct_feedthrough() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "feedthrough.json", |v| {
        v["system"] = serde_json::json!({
            "id": "linear",
            "params": {
                "a": [[0, 1, 0], [0, 0, 1], [0, 0, 0]],
                "g": [1, 0, 1],
                "c": [1, 0, 0]
            }
        });
    });
    let out = bin().args(["verify", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn loose_bounds_fail_run_assertions() {
    // δ1 = 0.1 ‖x‖ underestimates |Δ1| = |x1|.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bounds.json", |v| {
        v["system"] = serde_json::json!({
            "id": "linear",
            "params": {
                "a": [[0, 1, 0], [0, 0, 1], [0, 0, 0]],
                "g": [0, 0, 1],
                "c": [1, 0, 0],
                "d": [[0, 0, 0], [0, 0, 0], [1, 0, 0]],
                "delta1_gain": 0.1
            }
        });
        v["controller"]["variant"] = "mfc".into();
    });
    let out = run_short(&cfg, &dir.path().join("out"));
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["assertions"]["bounds"], false);
    assert_eq!(summary["pass"], false);
}

#[test]
fn unstable_closed_loop_reports_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "diverge.json", |v| {
        v["system"] = serde_json::json!({
            "id": "linear",
            "params": {
                "a": [[0, 1, 0], [0, 0, 1], [0, 0, 0]],
                "g": [0, 0, 1],
                "c": [1, 0, 0],
                "d": [[0, 0, 0], [0, 0, 0], [0, 0, 500]],
                "delta1_gain": 600
            }
        });
        v["controller"]["variant"] = "mfc".into();
        v["controller"]["fixed_gain"] = 0.0.into();
    });
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(["--horizon", "5"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn env_var_overrides_out() {
    let flag = tempfile::tempdir().unwrap();
    let env = tempfile::tempdir().unwrap();
    let out = bin()
        .env("MFCSIM_OUT", env.path())
        .args(["run", "--config"])
        .arg(fig3())
        .arg("--out")
        .arg(flag.path())
        .args(["--horizon", "0.5", "--dt", "1e-3"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(env.path().join("summary.json").exists());
    assert!(!flag.path().join("summary.json").exists());
}
