use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use toytryon::fixtures::Fixture;
use toytryon::flow::read_flow;
use toytryon::io::{read_parsing_png, read_rgb_png};

fn toytryon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toytryon")).args(args).output().expect("spawn toytryon")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sample(root: &Path, name: &str, seed: u64) -> PathBuf {
    let dir = root.join(name);
    fs::create_dir_all(&dir).unwrap();
    Fixture::generate(seed, 96, 64).unwrap().write_dir(&dir).unwrap();
    dir
}

fn error_of(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

#[test]
fn tryon_is_reproducible_and_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let input = sample(tmp.path(), "s", 3);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let r = toytryon(&["tryon", "--sample", s(&input), "--out", s(out)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    assert_eq!(files_in(&a), ["C_w.png", "I_c.png", "I_f.png", "P_t.png", "flow.plvf", "manifest.json"]);
    for f in ["C_w.png", "I_c.png", "I_f.png", "P_t.png", "flow.plvf"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let flow = read_flow(&a.join("flow.plvf")).unwrap();
    assert_eq!((flow.height(), flow.width()), (96, 64));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "tryon");
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config"]["height"], 96);
    for key in ["mask", "cloth", "vgg", "tv", "mcw", "hpe", "ltf"] {
        assert!(manifest["losses"][""][key].is_number(), "missing loss {key}: {manifest}");
    }
}

#[test]
fn seed_changes_the_output() {
    let tmp = tempfile::tempdir().unwrap();
    let input = sample(tmp.path(), "s", 3);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(toytryon(&["tryon", "--sample", s(&input), "--out", s(&a), "--seed", "1"]).status.success());
    assert!(toytryon(&["tryon", "--sample", s(&input), "--out", s(&b), "--seed", "2"]).status.success());
    assert_ne!(fs::read(a.join("I_f.png")).unwrap(), fs::read(b.join("I_f.png")).unwrap());
}

#[test]
fn zero_flow_warp_returns_the_prealigned_garment() {
    let tmp = tempfile::tempdir().unwrap();
    let input = sample(tmp.path(), "s", 4);
    let out = tmp.path().join("o");
    let r = toytryon(&["warp", "--zero-flow", "--sample", s(&input), "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(fs::read(out.join("C_w.png")).unwrap(), fs::read(out.join("C_s.png")).unwrap());
    let flow = read_flow(&out.join("flow.plvf")).unwrap();
    assert!(flow.tensor().data().iter().all(|&v| v == 0.0));
}

#[test]
fn prealign_and_parse_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = sample(tmp.path(), "s", 5);
    let out = tmp.path().join("o");
    assert!(toytryon(&["prealign", "--sample", s(&input), "--out", s(&out)]).status.success());
    assert_eq!(files_in(&out), ["C_l.png", "C_s.png", "C_s_mask.png", "manifest.json"]);
    assert!(toytryon(&["parse", "--sample", s(&input), "--out", s(&out)]).status.success());
    let bytes = fs::read(out.join("P_t.png")).unwrap();
    let info = png::Decoder::new(std::io::Cursor::new(bytes)).read_info().unwrap().info().clone();
    assert_eq!(info.color_type, png::ColorType::Indexed);
    let p = read_parsing_png(&out.join("P_t.png")).unwrap();
    assert_eq!((p.height(), p.width()), (96, 64));
}

#[test]
fn identical_inputs_give_an_all_zero_loss_report() {
    let tmp = tempfile::tempdir().unwrap();
    let input = sample(tmp.path(), "s", 6);
    let out = tmp.path().join("o");
    let person = input.join("person.png");
    let parsing = input.join("parsing.png");
    let mask = input.join("cloth_mask.png");
    let r = toytryon(&[
        "losses",
        "--pred", s(&person),
        "--target", s(&person),
        "--pred-mask", s(&mask),
        "--target-mask", s(&mask),
        "--pred-parsing", s(&parsing),
        "--target-parsing", s(&parsing),
        "--out", s(&out),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report: serde_json::Map<String, serde_json::Value> =
        serde_json::from_slice(&fs::read(out.join("losses.json")).unwrap()).unwrap();
    for key in ["l1", "perceptual", "edge", "composite", "mask", "cross_entropy"] {
        let v = report[key].as_f64().unwrap();
        assert!(v.abs() < 1e-9, "{key} = {v}");
    }
}

#[test]
fn missing_input_fails_with_json_and_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = sample(tmp.path(), "s", 7);
    fs::remove_file(input.join("keypoints.json")).unwrap();
    let out = tmp.path().join("o");
    let r = toytryon(&["tryon", "--sample", s(&input), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(error_of(&r)["error"], "io");
    assert!(!out.exists() || files_in(&out).is_empty());
}

#[test]
fn invalid_parsing_label_is_a_format_error() {
    let tmp = tempfile::tempdir().unwrap();
    let input = sample(tmp.path(), "s", 8);
    // A grayscale map with a label outside the seven classes.
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, 64, 96);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header().unwrap().write_image_data(&vec![9u8; 64 * 96]).unwrap();
    }
    fs::write(input.join("parsing.png"), bytes).unwrap();
    let out = tmp.path().join("o");
    let r = toytryon(&["parse", "--sample", s(&input), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let err = error_of(&r);
    assert_eq!(err["error"], "format");
    assert!(err["message"].as_str().unwrap().contains("label"));
    assert!(!out.join("P_t.png").exists());
}

#[test]
fn usage_errors_exit_1_with_json_and_help_exits_0() {
    let r = toytryon(&["frobnicate"]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(error_of(&r)["error"], "usage");
    let r = toytryon(&["losses", "--pred", "a.png"]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(error_of(&r)["error"], "usage");
    let r = toytryon(&["--help"]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("tryon"));
}

#[test]
fn config_file_is_validated_and_applied() {
    let tmp = tempfile::tempdir().unwrap();
    let input = sample(tmp.path(), "s", 9);
    let cfg = tmp.path().join("cfg.json");

    fs::write(&cfg, r#"{"height": 96, "width": 64, "base_width": 4, "gate_width": 4, "seed": 7}"#).unwrap();
    let out = tmp.path().join("ok");
    let r = toytryon(&["tryon", "--config", s(&cfg), "--sample", s(&input), "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["base_width"], 4);

    // The command-line seed wins over the file.
    let out2 = tmp.path().join("override");
    assert!(toytryon(&["tryon", "--config", s(&cfg), "--seed", "8", "--sample", s(&input), "--out", s(&out2)]).status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out2.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 8);

    fs::write(&cfg, r#"{"height": 96, "width": 64, "colour": "blue"}"#).unwrap();
    let r = toytryon(&["tryon", "--config", s(&cfg), "--sample", s(&input), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(r.status.code(), Some(1));

    // A configured size that disagrees with the inputs.
    fs::write(&cfg, r#"{"height": 128, "width": 64}"#).unwrap();
    let r = toytryon(&["tryon", "--config", s(&cfg), "--sample", s(&input), "--out", s(&tmp.path().join("y"))]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(error_of(&r)["error"], "dimension");
}

#[test]
fn several_samples_match_single_runs_regardless_of_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = sample(tmp.path(), "alpha", 10);
    let b = sample(tmp.path(), "beta", 11);
    let multi = tmp.path().join("multi");
    let r = toytryon(&["tryon", "--jobs", "2", "--sample", s(&a), "--sample", s(&b), "--out", s(&multi)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(files_in(&multi), ["000_alpha", "001_beta", "manifest.json"]);
    let serial = tmp.path().join("serial");
    assert!(toytryon(&["tryon", "--jobs", "1", "--sample", s(&a), "--sample", s(&b), "--out", s(&serial)]).status.success());
    let single = tmp.path().join("single");
    assert!(toytryon(&["tryon", "--sample", s(&b), "--out", s(&single)]).status.success());
    for f in ["I_c.png", "I_f.png", "C_w.png", "P_t.png", "flow.plvf"] {
        let m = fs::read(multi.join("001_beta").join(f)).unwrap();
        assert_eq!(m, fs::read(serial.join("001_beta").join(f)).unwrap());
        assert_eq!(m, fs::read(single.join(f)).unwrap());
    }
}

#[test]
fn weight_dump_round_trips_through_the_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let input = sample(tmp.path(), "s", 12);
    let w = tmp.path().join("w");
    assert!(toytryon(&["weights", "--seed", "5", "--out", s(&w)]).status.success());
    let dump = w.join("model.plvw");
    assert!(fs::read(&dump).unwrap().starts_with(b"PLVW"));

    let (seeded, loaded) = (tmp.path().join("seeded"), tmp.path().join("loaded"));
    assert!(toytryon(&["tryon", "--seed", "5", "--sample", s(&input), "--out", s(&seeded)]).status.success());
    let r = toytryon(&["tryon", "--seed", "99", "--weights", s(&dump), "--sample", s(&input), "--out", s(&loaded)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(fs::read(seeded.join("I_f.png")).unwrap(), fs::read(loaded.join("I_f.png")).unwrap());

    fs::write(&dump, b"PLVW garbage").unwrap();
    let r = toytryon(&["tryon", "--weights", s(&dump), "--sample", s(&input), "--out", s(&tmp.path().join("bad"))]);
    assert_ne!(r.status.code(), Some(0));
    assert!(error_of(&r)["error"].is_string());
}

#[test]
fn fixtures_command_writes_readable_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fx");
    assert!(toytryon(&["fixtures", "--count", "2", "--height", "64", "--width", "48", "--out", s(&out)]).status.success());
    assert_eq!(files_in(&out), ["manifest.json", "sample_000", "sample_001"]);
    let person = read_rgb_png(&out.join("sample_001/person.png")).unwrap();
    assert_eq!(person.shape(), (3, 64, 48));
    let inputs = toytryon::fixtures::read_sample_dir(&out.join("sample_000")).unwrap();
    assert_eq!(inputs.size(), (64, 48));
}
