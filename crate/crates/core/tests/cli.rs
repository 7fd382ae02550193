use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use eplnet::dataset::{synthesize_dataset, write_canonical, SyntheticSpec};

fn eplnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eplnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_dataset(dir: &Path, odors: usize) -> String {
    let trials = synthesize_dataset(&SyntheticSpec { num_odors: odors, ..Default::default() }).unwrap();
    let mut manifest = String::new();
    for t in &trials {
        let file = format!("{}.tsv", t.odor_label);
        write_canonical(t, &dir.join(&file)).unwrap();
        manifest += &format!("[[odor]]\nlabel = \"{}\"\npath = \"{file}\"\nformat = \"canonical\"\n\n", t.odor_label);
    }
    let path = dir.join("odors.toml");
    fs::write(&path, manifest).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn sweep_from_manifest_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), 2);
    let outs: Vec<_> = ["a", "b"].iter().map(|d| dir.path().join(d)).collect();
    for out in &outs {
        let o = eplnet(&[
            "sweep-noise", "--dataset", &manifest, "--trials", "3", "--seed", "11",
            "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8(o.stdout).unwrap();
        assert!(stdout.starts_with("p,trials,correct,accuracy,seed"));
        assert_eq!(stdout.lines().count(), 12);
    }
    for name in ["accuracy.csv", "trials.csv", "tuning.csv", "manifest.toml"] {
        assert_eq!(fs::read(outs[0].join(name)).unwrap(), fs::read(outs[1].join(name)).unwrap(), "{name}");
    }
    let manifest_text = fs::read_to_string(outs[0].join("manifest.toml")).unwrap();
    assert!(manifest_text.contains("seed = 11"));
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "trials = 2\nnoise_p = 0.3\n[dataset]\nkind = \"synthetic\"\nnum_odors = 2\n").unwrap();
    let out = dir.path().join("out");
    let o = eplnet(&[
        "prime", "--config", cfg.to_str().unwrap(), "--prime-fraction", "0.5",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let acc = fs::read_to_string(out.join("accuracy.csv")).unwrap();
    let rows: Vec<&str> = acc.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("0.500000,0.300000,4,"), "{}", rows[0]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    // usage problems
    assert_eq!(code(&eplnet(&["train"])), 1);
    assert_eq!(code(&eplnet(&[])), 1);
    assert_eq!(code(&eplnet(&["neuromod", "--schedule", "1,0.9", "--out", out])), 1);
    assert_eq!(code(&eplnet(&["sweep-noise", "--noise-p", "2", "--out", out])), 1);
    assert_eq!(code(&eplnet(&["--help"])), 0);
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "[layout]\nexpected_columns = 72\n").unwrap();
    let o = eplnet(&["train-test", "--dataset", empty.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    // data problems
    let o = eplnet(&["train-test", "--dataset", "/no/such/odors.toml", "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/odors.toml"));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[[odor]]\nlabel = \"x\"\npath = \"x.txt\"\n").unwrap();
    fs::write(dir.path().join("x.txt"), "0 1 2\n").unwrap();
    assert_eq!(code(&eplnet(&["train-test", "--dataset", bad.to_str().unwrap(), "--out", out])), 2);
}
