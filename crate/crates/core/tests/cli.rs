use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use contourkit::annotate::LabelVolume;
use contourkit::render::{decode_png, encode_png_rgba};
use contourkit::store::{load_project, mask_hash};
use contourkit::volume::read_volume;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contourkit")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(dir: &Path, args: &[&str]) -> Value {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    serde_json::from_str(ok(dir, &all).trim()).unwrap()
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
    assert_eq!(run(d, &["--version"]).status.code(), Some(0));
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(d, &["score", "only-one"]).status.code(), Some(1));
    assert_eq!(run(d, &["slice", "--project", "p", "--axis", "w", "--index", "0", "--out", "x.png"]).status.code(), Some(1));
    let missing = run(d, &["score", "a.json", "b.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("a.json"));
    let as_json = run(d, &["--json", "score", "a.json", "b.json"]);
    assert_eq!(as_json.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&as_json.stdout).unwrap();
    assert!(v["error"].as_str().unwrap().contains("a.json"));
}

#[test]
fn phantom_workflow_replay_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["phantom", "--dims", "24,24,20", "--spacing", "1,1,1.5", "--radii", "8,6,11", "--out", "ph"]);
    let run = json(d, &["workflow", "--project", "ph", "--condition", "c2", "--emit-script", "script.json"]);
    assert!(run["dsc"].as_f64().unwrap() > 0.85);
    let replay = json(d, &["replay", "--project", "ph"]);
    assert_eq!(replay["hash"], run["hash"]);

    let p = load_project(d.join("ph")).unwrap();
    assert_eq!(mask_hash(p.user_mask().unwrap()), run["hash"].as_str().unwrap());

    // Undo: a shorter prefix differs from the full replay.
    let partial = json(d, &["replay", "--project", "ph", "--prefix", "10"]);
    assert_eq!(partial["events"], 10);
    assert_ne!(partial["hash"], run["hash"]);

    let score = ok(d, &["score", "ph/masks/user.mask.json", "ph/masks/reference.mask.json"]);
    assert_eq!(score.trim(), format!("{:.4}", run["dsc"].as_f64().unwrap()));

    let metrics: Value = serde_json::from_str(&ok(d, &["metrics", "--project", "ph"])).unwrap();
    assert_eq!(metrics["initialExplorationMs"], 5100.0);
    assert_eq!(metrics["dsc"], run["dsc"]);

    let csv = ok(d, &["gaze", "--session", "ph/session.jsonl"]);
    assert_eq!(csv.lines().next().unwrap(), "progress,tabletPct,volumePct,empty");
    assert_eq!(csv.lines().count(), 101);

    // The emitted script reproduces the key slices on a fresh mask.
    ok(d, &["paint", "--volume", "ph/volume.json", "--script", "script.json", "--mask", "painted.json"]);
    let painted = LabelVolume::load(d.join("painted.json")).unwrap();
    assert!(painted.count() > 0);
    assert!(painted.count() < p.user_mask().unwrap().count());
}

#[test]
fn paint_and_interp_log_into_the_project() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["phantom", "--kind", "sphere", "--dims", "20,20,20", "--radius", "6", "--out", "sp"]);
    let painted = json(d, &["paint", "--project", "sp", "--script", "sp/script.json"]);
    let interp = json(d, &["interp", "--project", "sp", "--axis", "z", "--keys", "4,9,14"]);
    assert_ne!(painted["hash"], interp["hash"]);
    let replay = json(d, &["replay", "--project", "sp"]);
    assert_eq!(replay["hash"], interp["hash"]);
    assert_eq!(replay["events"], 3);
    let score = ok(d, &["score", "sp/masks/user.mask.json", "sp/masks/reference.mask.json"]);
    assert!(score.trim().parse::<f64>().unwrap() > 0.75, "{score}");

    let contours: Value = serde_json::from_str(&ok(d, &["contours", "--project", "sp", "--axis", "x"])).unwrap();
    assert_eq!(contours["axis"], "sagittal");
    assert!(!contours["contours"].as_array().unwrap().is_empty());
}

#[test]
fn render_and_slice_write_pngs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["phantom", "--kind", "cube", "--dims", "16,16,16", "--out", "cube"]);
    let out = json(d, &["render", "--project", "cube", "--size", "30x20", "--steps", "64", "--az", "-40", "--out", "r.png"]);
    assert_eq!((out["width"].as_u64(), out["height"].as_u64()), (Some(30), Some(20)));
    let img = decode_png(&std::fs::read(d.join("r.png")).unwrap()).unwrap();
    assert_eq!((img.width, img.height, img.channels), (30, 20, 4));

    let single = std::fs::read(d.join("r.png")).unwrap();
    ok(d, &["render", "--project", "cube", "--size", "30x20", "--steps", "64", "--az", "-40", "--threads", "3", "--out", "r3.png"]);
    assert_eq!(single, std::fs::read(d.join("r3.png")).unwrap());

    ok(d, &["slice", "--project", "cube", "--axis", "coronal", "--index", "8", "--window", "0.2,0.8", "--out", "s.png"]);
    let img = decode_png(&std::fs::read(d.join("s.png")).unwrap()).unwrap();
    assert_eq!((img.width, img.height), (16, 16));
    assert_eq!(run(d, &["slice", "--project", "cube", "--axis", "z", "--index", "16", "--out", "s.png"]).status.code(), Some(2));
}

#[test]
fn import_raw_and_png_stacks() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let raw: Vec<u8> = (0..4 * 3 * 2u16).flat_map(|i| (1000 + 10 * i).to_le_bytes()).collect();
    std::fs::write(d.join("scan.raw"), raw).unwrap();
    let info = json(d, &["import", "--raw", "scan.raw", "--dims", "4,3,2", "--dtype", "u16", "--spacing", "0.5,0.5,2", "--out", "v.json"]);
    assert_eq!(info["rawRange"], serde_json::json!([1000.0, 1230.0]));
    let v = read_volume(d.join("v.json")).unwrap();
    assert_eq!(v.dims(), [4, 3, 2]);
    assert_eq!(v.get([0, 0, 0]), 0.0);
    assert_eq!(v.get([3, 2, 1]), 1.0);
    assert_eq!(run(d, &["import", "--raw", "scan.raw", "--dims", "4,3,3", "--out", "w.json"]).status.code(), Some(2));

    std::fs::create_dir(d.join("stack")).unwrap();
    for z in 0..3u8 {
        let px: Vec<u8> = (0..6u8).flat_map(|i| [z * 60 + i, z * 60 + i, z * 60 + i, 255]).collect();
        std::fs::write(d.join(format!("stack/{z:03}.png")), encode_png_rgba(3, 2, &px).unwrap()).unwrap();
    }
    // RGBA slices are rejected; only grayscale stacks are accepted.
    assert_eq!(run(d, &["import", "--slices", "stack", "--out", "s.json"]).status.code(), Some(2));

    let gray_dir = d.join("gray");
    std::fs::create_dir(&gray_dir).unwrap();
    for z in 0..3u8 {
        let mut bytes = Vec::new();
        let mut enc = png::Encoder::new(&mut bytes, 3, 2);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(&(0..6u8).map(|i| z * 60 + i).collect::<Vec<_>>()).unwrap();
        w.finish().unwrap();
        std::fs::write(gray_dir.join(format!("{z:03}.png")), bytes).unwrap();
    }
    let info = json(d, &["import", "--slices", "gray", "--spacing", "0.7,0.7,3", "--out", "g.json"]);
    assert_eq!(info["dims"], serde_json::json!([3, 2, 3]));
    assert_eq!(info["rawRange"], serde_json::json!([0.0, 125.0]));
    let v = read_volume(d.join("g.json")).unwrap();
    assert_eq!(v.get([2, 1, 2]), 1.0);
    assert_eq!(v.spacing(), [0.7, 0.7, 3.0]);
}

#[test]
fn init_attaches_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["phantom", "--dims", "12,12,10", "--radii", "4,4,4", "--out", "src"]);
    let out = json(d, &["init", "--volume", "src/volume.json", "--reference", "src/masks/reference.mask.json", "--id", "case7", "--out", "proj"]);
    assert_eq!(out["id"], "case7");
    let p = load_project(d.join("proj")).unwrap();
    assert_eq!(p.id, "case7");
    assert!(p.reference_mask().unwrap().count() > 0);
    assert_eq!(p.user_mask().unwrap().count(), 0);
}
