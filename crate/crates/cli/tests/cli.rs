use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pairvox::metrics::{aad, agreement};
use pairvox::voxel::io::{binvox, read_grid, vox1, BinvoxHeader, Payload};
use pairvox::voxel::{align, merge};
use pairvox::{Condition, Grid32};

fn pairvox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairvox"))
        .args(args)
        .env("RAYON_NUM_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: [&str; 6] = [
    "--set",
    "model.base_channels=4",
    "--set",
    "model.latent_dim=8",
    "--set",
    "train.batch_size=4",
];

fn train_tiny(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--synthetic",
        "8",
        "--resolution",
        "8",
        "--out",
        s(dir),
    ];
    args.extend_from_slice(&TINY);
    args.extend_from_slice(extra);
    pairvox(&args)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn synthetic_smoke_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let mut args = vec![
        "train",
        "--synthetic",
        "--resolution",
        "16",
        "--epochs",
        "2",
        "--out",
        s(&run),
    ];
    args.extend_from_slice(&TINY);
    ok(&pairvox(&args));
    let m = manifest(&run);
    assert_eq!(m["config"]["dataset"]["synthetic"], 200);
    // 200 objects per condition in batches of 4 for two epochs
    assert_eq!(m["steps"], 100);
    assert!(run.join("final.pvgan").is_file());
    assert!(run.join("checkpoints/step_00000000.pvgan").is_file());
    let log = fs::read_to_string(run.join("train.log")).unwrap();
    assert_eq!(log.lines().count(), 101);
}

#[test]
fn baseline_and_paired_differ_only_in_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&train_tiny(&a, &["--max-steps", "1", "--baseline"]));
    ok(&train_tiny(&b, &["--max-steps", "1", "--paired"]));
    let mut ca = manifest(&a)["config"].clone();
    let cb = manifest(&b)["config"].clone();
    assert_eq!(ca["train"]["paired_step_enabled"], false);
    assert_eq!(cb["train"]["paired_step_enabled"], true);
    ca["train"]["paired_step_enabled"] = true.into();
    assert_eq!(ca, cb);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&train_tiny(
        &a,
        &["--max-steps", "6", "--set", "train.checkpoint_every=3"],
    ));
    let mid = a.join("checkpoints/step_00000003.pvgan");
    ok(&train_tiny(
        &b,
        &[
            "--max-steps",
            "6",
            "--set",
            "train.checkpoint_every=3",
            "--resume",
            s(&mid),
        ],
    ));
    assert_eq!(
        fs::read(a.join("final.pvgan")).unwrap(),
        fs::read(b.join("final.pvgan")).unwrap()
    );
}

#[test]
fn config_errors_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let out = train_tiny(&tmp.path().join("r"), &["--set", "train.lr_generatr=0.1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lr_generatr"));

    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[model]\nresolution = 12\n").unwrap();
    let out = pairvox(&[
        "train",
        "--config",
        s(&cfg),
        "--synthetic",
        "--out",
        s(&tmp.path().join("r2")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.resolution"));

    assert_eq!(pairvox(&["train", "--no-such-flag"]).status.code(), Some(1));
}

fn trained(tmp: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let dir = tmp.join(name);
    let mut args = vec!["--max-steps", "2"];
    args.extend_from_slice(extra);
    ok(&train_tiny(&dir, &args));
    dir.join("final.pvgan")
}

#[test]
fn generate_writes_pairs_and_merges() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = trained(tmp.path(), "run", &[]);
    let out = tmp.path().join("gen");
    let args = [
        "generate",
        s(&ckpt),
        "--n-latents",
        "1",
        "--all-conditions",
        "--merge",
        "--seed",
        "5",
        "--out",
        s(&out),
    ];
    ok(&pairvox(&args));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "latent_0000_c0.vox1",
            "latent_0000_c1.vox1",
            "latent_0000_merged.vox1"
        ]
    );

    let samples: Vec<Grid32> = names[..2]
        .iter()
        .map(|n| read_grid(out.join(n)).unwrap())
        .collect();
    let conds = Condition::all(2).unwrap();
    let recomputed = merge(&align(&samples, &conds).unwrap()).unwrap();
    let merged: Grid32 = read_grid(out.join(&names[2])).unwrap();
    assert_eq!(merged, recomputed);

    let again = tmp.path().join("gen2");
    let args2 = [
        "generate",
        s(&ckpt),
        "--n-latents",
        "1",
        "--all-conditions",
        "--merge",
        "--seed",
        "5",
        "--out",
        s(&again),
    ];
    ok(&pairvox(&args2));
    for n in &names {
        assert_eq!(
            fs::read(out.join(n)).unwrap(),
            fs::read(again.join(n)).unwrap()
        );
    }

    let wrong = pairvox(&[
        "generate",
        s(&ckpt),
        "--resolution",
        "32",
        "--out",
        s(&again),
    ]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn evaluate_reports_rows_and_records() {
    let tmp = tempfile::tempdir().unwrap();
    let base = trained(tmp.path(), "base", &["--baseline"]);
    let paired = trained(tmp.path(), "paired", &["--paired"]);
    let report = tmp.path().join("report");
    let args = [
        "evaluate",
        s(&base),
        s(&paired),
        "--label",
        "baseline",
        "--label",
        "paired",
        "--n-latents",
        "4",
        "--seed",
        "3",
        "--out",
        s(&report),
    ];
    let first = ok(&pairvox(&args));
    assert_eq!(first.lines().count(), 3);
    assert!(first.lines().nth(1).unwrap().starts_with("baseline"));
    assert!(first.lines().nth(2).unwrap().starts_with("paired"));
    assert_eq!(ok(&pairvox(&args)), first);
    let records = fs::read_to_string(report.with_extension("jsonl")).unwrap();
    assert_eq!(records.lines().count(), 2 * 5);
    assert!(report.with_extension("txt").is_file());

    // a single latent reports exactly that pair's metrics
    let gen = tmp.path().join("one");
    ok(&pairvox(&[
        "generate",
        s(&paired),
        "--n-latents",
        "1",
        "--all-conditions",
        "--seed",
        "9",
        "--out",
        s(&gen),
    ]));
    let samples: Vec<Grid32> = ["latent_0000_c0.vox1", "latent_0000_c1.vox1"]
        .iter()
        .map(|n| read_grid(gen.join(n)).unwrap())
        .collect();
    let conds = Condition::all(2).unwrap();
    let single = tmp.path().join("single");
    ok(&pairvox(&[
        "evaluate",
        s(&paired),
        "--n-latents",
        "1",
        "--seed",
        "9",
        "--out",
        s(&single),
    ]));
    let line = fs::read_to_string(single.with_extension("jsonl")).unwrap();
    let batch: serde_json::Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    let want_aad = aad(&samples, &conds).unwrap();
    let want_avar = agreement(&samples, &conds).unwrap().avar;
    assert!((batch["batch_aad"].as_f64().unwrap() - want_aad).abs() < 1e-12);
    assert!((batch["batch_avar"].as_f64().unwrap() - want_avar).abs() < 1e-12);
}

#[test]
fn export_counts_cubes() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.vox1");
    fs::write(&empty, vox1::encode(&Grid32::zeros(4), Payload::Bits)).unwrap();
    let obj = tmp.path().join("empty.obj");
    ok(&pairvox(&["export", s(&empty), "--obj", s(&obj)]));
    let text = fs::read_to_string(&obj).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 0);

    let mut one = Grid32::zeros(4);
    one.set(1, 2, 3, 0.9);
    let single = tmp.path().join("one.vox1");
    fs::write(&single, vox1::encode(&one, Payload::Float)).unwrap();
    ok(&pairvox(&["export", s(&single), "--obj", s(&obj)]));
    let text = fs::read_to_string(&obj).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 8);
    assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 12);

    let many = Grid32::from_fn(6, |x, y, z| if (x + y * z) % 3 == 0 { 1.0 } else { 0.0 }).unwrap();
    let path = tmp.path().join("many.vox1");
    fs::write(&path, vox1::encode(&many, Payload::Bits)).unwrap();
    let stdout = ok(&pairvox(&[
        "export",
        s(&path),
        "--obj",
        s(&obj),
        "--binvox",
        s(&tmp.path().join("m.binvox")),
    ]));
    assert!(stdout.contains(&format!("{} cubes", many.occupied(0.5))));
    let back: Grid32 = read_grid(tmp.path().join("m.binvox")).unwrap();
    assert_eq!(back, many);

    assert_eq!(
        pairvox(&[
            "export",
            s(&tmp.path().join("missing.vox1")),
            "--obj",
            s(&obj)
        ])
        .status
        .code(),
        Some(3)
    );
}

fn write_binvox(path: &Path, grid: &Grid32) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, binvox::encode(grid, &BinvoxHeader::default())).unwrap();
}

#[test]
fn ingest_layouts_padding_and_bad_files() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    let shape = Grid32::from_fn(6, |x, y, _| if x + y < 4 { 1.0 } else { 0.0 }).unwrap();
    // nested layout, all twelve orientations
    for k in 1..=12 {
        write_binvox(&src.join(format!("chair/obj_a/O{k}.binvox")), &shape);
        write_binvox(&src.join(format!("chair/obj_b_O{k}.binvox")), &shape);
    }
    // missing O7
    write_binvox(&src.join("chair/obj_c/O1.binvox"), &shape);

    let dst = tmp.path().join("dst");
    let stdout = ok(&pairvox(&[
        "ingest",
        s(&src),
        s(&dst),
        "--n-conditions",
        "2",
        "--resolution",
        "8",
    ]));
    assert!(stdout.contains("objects 2"), "{stdout}");
    assert!(stdout.contains("files 4"), "{stdout}");
    let g: Grid32 = read_grid(dst.join("chair/obj_b/O7.vox1")).unwrap();
    assert_eq!(g.resolution(), 8);
    assert_eq!(g.occupied(0.5), shape.occupied(0.5));
    assert_eq!(
        fs::read_to_string(dst.join("chair/manifest.txt")).unwrap(),
        "obj_a\nobj_b\n"
    );

    // corrupt file: fails with an I/O class code, or is skipped with --skip-bad
    fs::write(
        src.join("chair/obj_a/O7.binvox"),
        b"#binvox 1\ndim 6 6 6\ndata\n\x01",
    )
    .unwrap();
    let out = pairvox(&[
        "ingest",
        s(&src),
        s(&tmp.path().join("d2")),
        "--n-conditions",
        "2",
        "--resolution",
        "8",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte"));
    let stdout = ok(&pairvox(&[
        "ingest",
        s(&src),
        s(&tmp.path().join("d3")),
        "--n-conditions",
        "2",
        "--resolution",
        "8",
        "--skip-bad",
    ]));
    assert!(
        stdout.contains("objects 1") && stdout.contains("bad 1"),
        "{stdout}"
    );

    // empty source
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let stdout = ok(&pairvox(&["ingest", s(&empty), s(&tmp.path().join("d4"))]));
    assert!(stdout.contains("files 0"));
}
