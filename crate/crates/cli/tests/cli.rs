mod common;

use std::fs;
use std::path::Path;

use common::{labelforge, stdout, tree_digest};

fn ok(args: &[&str]) -> String {
    let o = labelforge(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_synth(out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["synth", "--views-per-ring", "6", "--states", "2", "--width", "40", "--height", "30", "--side", "24"];
    args.extend_from_slice(&["--split", "0.5,0.25,0.25", "--out", p(out)]);
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn synth_reports_pairs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    assert!(small_synth(&out, &["--keep-raw"]).contains("12 pairs written"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["command"], "synth");
    assert_eq!(summary["results"]["pairs"], 12);
    assert_eq!(summary["args"]["camera"]["views-per-ring"], 6);
    assert_eq!(fs::read_dir(out.join("raw/photo")).unwrap().count(), 12);
    assert_eq!(fs::read_dir(out.join("raw/label")).unwrap().count(), 6);
}

#[test]
fn rerun_needs_force_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    small_synth(&out, &[]);
    let first = tree_digest(&out);
    let refused = labelforge(&["synth", "--views-per-ring", "6", "--out", p(&out)]);
    assert!(!refused.status.success());
    small_synth(&out, &["--force"]);
    assert_eq!(tree_digest(&out), first);
}

#[test]
fn eval_of_identical_dirs_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    small_synth(&ds, &["--keep-raw"]);
    let labels = ds.join("raw/label");
    let report = dir.path().join("report");
    let out = ok(&["eval", "--pred", p(&labels), "--gt", p(&labels), "--out", p(&report)]);
    assert!(out.contains("accuracy 100.00%"), "{out}");
    assert!(out.contains("mIoU 1.0000"));
    assert!(report.join("metrics.json").exists() && report.join("run_summary.json").exists());
    let again = labelforge(&["eval", "--pred", p(&labels), "--gt", p(&labels), "--out", p(&report)]);
    assert!(!again.status.success());
    let shown = ok(&["report", p(&report)]);
    assert!(shown.contains("Accuracy (%)"));
}

#[test]
fn full_chain_through_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture");
    ok(&["fixture", "--out", p(&fixture)]);
    let ds = dir.path().join("ds");
    let poses = fixture.join("poses.txt");
    let synth = ok(&[
        "synth", "--scene", p(&fixture.join("scene.manifest")), "--poses", p(&poses), "--width", "48", "--height", "48",
        "--side", "32", "--split", "0.6,0.2,0.2", "--keep-raw", "--out", p(&ds),
    ]);
    assert!(synth.contains("40 pairs written"), "{synth}");

    let packed = dir.path().join("packed");
    ok(&["pack", "--raw", p(&ds.join("raw")), "--side", "32", "--split", "0.6,0.2,0.2", "--out", p(&packed)]);
    for split in ["train", "val", "test"] {
        assert_eq!(tree_digest(&ds.join(split)), tree_digest(&packed.join(split)), "{split}");
    }

    let model = dir.path().join("model");
    ok(&["train-baseline", "--dataset", p(&ds), "--out", p(&model)]);
    let pred = dir.path().join("pred");
    assert!(ok(&["predict", "--model", p(&model.join("model.json")), "--dataset", p(&ds), "--out", p(&pred)])
        .contains("8 predictions written"));
    let eval = dir.path().join("eval");
    let printed = ok(&["eval", "--pred", p(&pred.join("pred")), "--gt", p(&pred.join("gt")), "--all-classes", "--out", p(&eval)]);
    assert!(printed.contains("accuracy "));

    let blended = dir.path().join("blend");
    let msg = ok(&[
        "blend", "--mesh", p(&fixture.join("farmhouse.obj")), "--poses", p(&poses), "--labels", p(&ds.join("raw/label")),
        "--texels-per-meter", "2", "--out", p(&blended),
    ]);
    assert!(msg.contains("texels observed from 10 views"), "{msg}");
    assert!(blended.join("semantic.smesh").exists() && blended.join("semantic.png").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(blended.join("run_summary.json")).unwrap()).unwrap();
    assert!(summary["results"]["fused"]["roof"].as_u64().unwrap() > 0);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 11\n[camera]\nviews-per-ring = 4\n[synth]\nstates = 3\nwidth = 16\nheight = 16\nside = 16\nout = \"ds\"\n",
    )
    .unwrap();
    assert!(ok(&["--config", p(&cfg), "synth"]).contains("12 pairs written"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ds/run_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 11);
    assert!(ok(&["--config", p(&cfg), "synth", "--states", "1", "--force"]).contains("4 pairs written"));
    fs::write(&cfg, "[synth]\nviews = 3\n").unwrap();
    assert!(!labelforge(&["--config", p(&cfg), "synth"]).status.success());
}

#[test]
fn bad_input_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let o = labelforge(&["eval", "--pred", p(&dir.path().join("nope")), "--gt", p(dir.path())]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    assert!(!labelforge(&["synth", "--split", "0.5,0.5"]).status.success());
    assert!(!labelforge(&["--workers", "0", "demo", "--out", p(dir.path())]).status.success());
}

#[test]
fn manifest_align_block_registers_scene() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture");
    ok(&["fixture", "--out", p(&fixture)]);
    let manifest = fixture.join("scene.manifest");
    let mut text = fs::read_to_string(&manifest).unwrap();
    // z-rotation by 90°, scale 2, shift (1, 2, 3)
    text.push_str("\nalign\n  src 0 0 0\n  src 1 0 0\n  src 0 1 0\n  dst 1 2 3\n  dst 1 4 3\n  dst -1 2 3\nend\n");
    fs::write(&manifest, text).unwrap();
    let out = dir.path().join("ds");
    ok(&[
        "synth", "--scene", p(&manifest), "--views-per-ring", "4", "--states", "1", "--width", "24", "--height", "24",
        "--side", "16", "--split", "0.5,0.25,0.25", "--out", p(&out),
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_summary.json")).unwrap()).unwrap();
    assert!(summary["results"]["alignment_residual"].as_f64().unwrap() < 1e-9);

    let collinear = fixture.join("bad.manifest");
    let text = fs::read_to_string(fixture.join("scene.manifest")).unwrap().replace("src 0 1 0", "src 2 0 0");
    fs::write(&collinear, text).unwrap();
    let res = labelforge(&["synth", "--scene", p(&collinear), "--out", p(&dir.path().join("bad"))]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("aligning scene"));
}
