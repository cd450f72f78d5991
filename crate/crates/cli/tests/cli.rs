use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn anisokin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anisokin"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn materials_list_and_show() {
    let o = anisokin(&["materials", "list"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["nickel", "zinc", "celestite", "steel"] {
        assert!(text.contains(name));
    }
    let o = anisokin(&["materials", "show", "zinc"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["class"], "transverse_isotropic");
}

#[test]
fn input_errors_exit_with_two() {
    assert_eq!(code(&anisokin(&["materials", "show", "unobtainium"])), 2);
    assert_eq!(
        code(&anisokin(&["axes", "--material", "nickel", "--grid", "-1"])),
        2
    );
    let tmp = tempfile::tempdir().unwrap();
    let corr = tmp.path().join("zero.json");
    fs::write(
        &corr,
        r#"{"kind": "markov", "a_m": 1e-4, "class": "cubic", "rho": [[0,0,0],[0,0,0],[0,0,0]]}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = anisokin(&[
        "xsection",
        "--material",
        "nickel",
        "--corr",
        corr.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let o = anisokin(&[
        "xsection",
        "--material",
        "nickel",
        "--rule",
        "0,4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn strict_mode_rejects_coarse_rules() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let args = [
        "xsection",
        "--material",
        "zinc",
        "--rule",
        "4,8",
        "--grid",
        "45",
        "--out",
        out.to_str().unwrap(),
    ];
    let o = anisokin(&args);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let mut strict = vec!["--strict"];
    strict.extend(args);
    assert_eq!(code(&anisokin(&strict)), 3);
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn axes_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = anisokin(&["axes", "--material", "zinc", "--out", a.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["axes"].as_array().unwrap().len(), 1);
    let csv = String::from_utf8(read(&a, "axes.csv")).unwrap();
    assert!(csv.starts_with("kx,ky,kz,c1,c2,c3"));
    assert_eq!(csv.lines().count(), 2);

    let manifest = a.join("manifest.json");
    assert_eq!(
        code(&anisokin(&[
            "replay",
            manifest.to_str().unwrap(),
            "--out",
            b.to_str().unwrap()
        ])),
        0
    );
    assert_eq!(read(&a, "axes.csv"), read(&b, "axes.csv"));
    assert_eq!(read(&a, "axes.json"), read(&b, "axes.json"));
    let ma: serde_json::Value = serde_json::from_slice(&read(&a, "manifest.json")).unwrap();
    let mb: serde_json::Value = serde_json::from_slice(&read(&b, "manifest.json")).unwrap();
    assert_eq!(ma["config_hash"], mb["config_hash"]);
}

#[test]
fn transport_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.json");
    fs::write(
        &config,
        r#"{"material": "nickel", "corr": {"kind": "markov", "a_m": 1e-4, "class": "cubic"},
            "omega_rad_s": 3.7e7, "particles": 2000, "end_time_s": 1e-3, "tally_dt_s": 2.5e-4, "seed": 1,
            "rule": [8, 16], "source": {"kind": "point", "mode": 3}}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = anisokin(&[
        "transport",
        "--config",
        config.to_str().unwrap(),
        "--oracle",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = String::from_utf8(read(&out, "summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("time_s,E_1,E_2,E_3"));
    for line in lines {
        let e: f64 = line
            .split(',')
            .skip(1)
            .map(|x| x.parse::<f64>().unwrap())
            .sum();
        assert!((e - 1.0).abs() < 1e-12);
    }
    let d: serde_json::Value = serde_json::from_slice(&read(&out, "diagnostics.json")).unwrap();
    let s: f64 = d["stationary_mode_fractions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .sum();
    assert!((s - 1.0).abs() < 1e-12);
    assert_eq!(
        String::from_utf8(read(&out, "frames.jsonl"))
            .unwrap()
            .lines()
            .count(),
        5
    );

    fs::write(&config, r#"{"material": "nickel", "particles": 0}"#).unwrap();
    assert_eq!(
        code(&anisokin(&[
            "transport",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ])),
        2
    );
}
