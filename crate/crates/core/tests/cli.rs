use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn shiftwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shiftwave")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "[domain]\nx_min = -60\nx_max = 60\nn = 601\n[time]\ndt_divisor = 128\n";

#[test]
fn list_kinds_names_everything() {
    let out = shiftwave(&["list-kinds"]);
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    for k in ["tanh_fisher", "sis_derived", "pulse_wave", "front_like", "imex_cn"] {
        assert!(s.contains(k), "missing {k}");
    }
}

#[test]
fn bad_config_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.toml", "[experiment]\nkind = \"cstar\"\n[domain]\nn = 2\n");
    let out = shiftwave(&["validate", &p]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("domain.n"));

    let p = write(dir.path(), "typo.toml", "[experiment]\nkind = \"cstar\"\nspeed = 1.0\n");
    let out = shiftwave(&["run", &p]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("speed"), "{err}");
}

#[test]
fn runs_are_deterministic_and_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "[experiment]\nkind = \"kpp_wave\"\nc = 0.5\n{SMALL}[output]\ncsv = \"{0}/w.csv\"\nsvg = \"{0}/w.svg\"\nreport = \"{0}/r.txt\"\n",
        dir.path().join("out").display()
    );
    let p = write(dir.path(), "wave.toml", &text);
    let a = shiftwave(&["run", &p]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let csv = fs::read_to_string(dir.path().join("out/w.csv")).unwrap();
    assert!(csv.starts_with("t,x,U\n"));
    assert!(fs::read_to_string(dir.path().join("out/w.svg")).unwrap().contains("<svg"));
    let b = shiftwave(&["run", &p]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(fs::read_to_string(dir.path().join("out/w.csv")).unwrap(), csv);
    assert_eq!(fs::read(dir.path().join("out/r.txt")).unwrap(), a.stdout);
}

#[test]
fn failed_check_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "check.toml",
        "[experiment]\nkind = \"cstar\"\n[experiment.checks]\nc_star = { max = 1.5 }\n",
    );
    let out = shiftwave(&["run", &p]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("check.c_star=fail"));
}

#[test]
fn failed_sweep_leaves_no_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // the second speed cannot converge in two periods
    let text = format!(
        "[experiment]\nkind = \"sweep\"\nmax_periods = 2\n[sweep]\nbase = \"kpp_wave\"\nparameter = \"c\"\nvalues = [-1.0, 0.5]\n{SMALL}[output]\ncsv = \"{}\"\n",
        dir.path().join("out/w.csv").display()
    );
    let p = write(dir.path(), "sweep.toml", &text);
    let out = shiftwave(&["run", &p]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!dir.path().join("out/w_c=-1.csv").exists());
    assert!(!dir.path().join("out/w_c=0.5.csv").exists());
}

#[test]
fn nonexistence_is_a_result_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "pulse.toml", &format!("[experiment]\nkind = \"pulse_wave\"\nc = -1.0\n{SMALL}"));
    let out = shiftwave(&["run", &p]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("result=nonexistent (NoPulse"));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let out = shiftwave(&["validate", p.to_str().unwrap()]);
            assert!(out.status.success(), "{}: {}", p.display(), String::from_utf8_lossy(&out.stderr));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
