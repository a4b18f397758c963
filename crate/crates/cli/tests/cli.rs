use std::path::Path;
use std::process::{Command, Output};

fn mct(dir: &Path, args: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mct"))
        .args(args.split_whitespace())
        .current_dir(dir)
        .env("MCT_CACHE", dir.join("cache"))
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &str) -> Output {
    let out = mct(dir, args);
    assert!(out.status.success(), "mct {args}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn count_png(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_images_labels_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, "synth --n 10 --size 48 --sweeps 5,10 --seed 1 --out a");
    assert_eq!(count_png(&d.join("a")), 10);
    assert_eq!(count_png(&d.join("a/labels")), 10);
    let csv = std::fs::read_to_string(d.join("a/truth.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert_eq!(json(&d.join("a/run.json"))["command"], "synth");

    ok(d, "synth --n 10 --size 48 --sweeps 5,10 --seed 1 --out b");
    assert_eq!(csv, std::fs::read_to_string(d.join("b/truth.csv")).unwrap());
    assert_eq!(
        std::fs::read(d.join("a/poly_00007.png")).unwrap(),
        std::fs::read(d.join("b/poly_00007.png")).unwrap()
    );
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(mct(d, "synth --n 2 --f 1.5 --out x").status.code(), Some(2));
    assert_eq!(mct(d, "synth --n 2 --size 16 --out x").status.code(), Some(2));
    assert_eq!(mct(d, "synth --out x").status.code(), Some(2));
    assert_eq!(mct(d, "frobnicate").status.code(), Some(2));
    assert_eq!(mct(d, "--help").status.code(), Some(0));
    assert_eq!(mct(d, "featurize --manifest missing.json --out s").status.code(), Some(1));
}

#[test]
fn unknown_layer_lists_the_available_ones() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, "synth --n 1 --size 32 --sweeps 5 --out a");
    let out = mct(d, "featurize --manifest a/manifest.json --width-divisor 8 --layer conv9_9 --out s");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("conv9_9") && err.contains("conv4_3") && err.contains("conv1_1"), "{err}");
}

#[test]
fn search_embed_and_cluster_on_a_small_store() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, "synth --n 50 --size 32 --sweeps 2,8,30 --seed 2 --out a");
    ok(d, "featurize --manifest a/manifest.json --width-divisor 8 --layer conv3_3 --out s");

    let out = ok(d, "search --store s --query poly_00013 --k 3");
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let nn = report["neighbors"].as_array().unwrap();
    assert_eq!(nn.len(), 3);
    assert_eq!(nn[0]["id"], "poly_00013");
    assert_eq!(nn[0]["distance"], 0.0);
    assert_eq!(mct(d, "search --store s --query nobody").status.code(), Some(2));

    ok(d, "embed --store s --manifest a/manifest.json --perplexity 10 --epochs 250 --seed 3 --out e");
    let rows = std::fs::read_to_string(d.join("e/embedding.csv")).unwrap();
    assert_eq!(rows.lines().count(), 51);
    let svg = std::fs::read_to_string(d.join("e/scatter.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<circle").count() >= 50);

    ok(d, "cluster --store s --k 3 --seed 4 --out c");
    let summary = json(&d.join("c/clusters.json"));
    let sizes: u64 = summary["sizes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(sizes, 50);
    assert_eq!(summary["run"]["command"], "cluster");
}

#[test]
fn evaluating_masks_against_themselves_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, "textures --n 2 --size 32 --seed 5 --out t");
    ok(d, "eval masks --pred t/masks --truth t/masks --out ev.json");
    let r = json(&d.join("ev.json"));
    assert_eq!(r["accuracy"], 1.0);
    assert_eq!(r["images"], 2);
    assert!(d.join("ev.svg").is_file());
}

#[test]
fn instances_match_their_own_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, "particles --n 1 --count 8 --seed 6 --out p");
    ok(d, "instances --mask p/masks/part_00000.png --class particle --out i.json");
    assert_eq!(json(&d.join("i.run.json"))["instances"], 8);
    ok(d, "eval instances --pred i.json --truth i.json --out m.json");
    let m = json(&d.join("m.json"));
    assert_eq!(m["precision"], 1.0);
    assert_eq!(m["recall"], 1.0);
    assert_eq!(mct(d, "instances --mask p/masks/part_00000.png --class grain --out j.json").status.code(), Some(2));
}
