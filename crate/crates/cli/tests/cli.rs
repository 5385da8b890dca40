use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dirlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirlearn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn dirlearn")
}

fn ok(args: &[&str]) -> Output {
    let out = dirlearn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn error_line(out: &Output) -> String {
    let err = String::from_utf8_lossy(&out.stderr);
    err.lines()
        .find(|l| l.starts_with("error: kind="))
        .unwrap_or_else(|| panic!("no machine-readable error in {err:?}"))
        .to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, n: usize, size: usize, seed: u64) {
    ok(&[
        "synth-data",
        "--out",
        p(dir),
        "--n",
        &n.to_string(),
        "--size",
        &size.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn synth_data_writes_pngs_and_manifest_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, 12, 32, 3);
    synth(&b, 12, 32, 3);
    let fa = files(&a);
    let pngs = fa.iter().filter(|(n, _)| n.ends_with(".png")).count();
    assert_eq!(pngs, 12);
    assert!(a.join("manifest.json").exists());
    assert_eq!(fa, files(&b));
}

#[test]
fn one_class_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dirlearn(&["synth-data", "--out", p(tmp.path()), "--classes", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).starts_with("error: kind=usage"));
}

#[test]
fn non_empty_output_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("keep.txt"), "x").unwrap();
    let args = ["synth-data", "--out", p(tmp.path()), "--n", "4", "--size", "16"];
    let out = dirlearn(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    ok(&forced);
}

#[test]
fn unknown_flag_and_profile_are_usage_errors() {
    let out = dirlearn(&["degrade", "--in", "x", "--out", "y", "--profile", "foggy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).starts_with("error: kind=usage"));
    let out = dirlearn(&["train", "--stage", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dark_degradations_carry_sidecars_in_range() {
    let tmp = tempfile::tempdir().unwrap();
    let clean = tmp.path().join("clean");
    synth(&clean, 6, 32, 1);
    let out = tmp.path().join("dark");
    ok(&["degrade", "--in", p(&clean), "--out", p(&out), "--profile", "dark", "--seed", "4"]);
    let sidecars: Vec<PathBuf> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    assert_eq!(sidecars.len(), 6);
    for path in &sidecars {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        let sigma = v["params"]["gauss_sigma"].as_f64().unwrap();
        assert!((0.15..=0.35).contains(&sigma), "{}: sigma {sigma}", path.display());
        assert_eq!(v["profile"], "dark");
        assert!(path.with_extension("png").exists());
    }

    let again = tmp.path().join("again");
    ok(&["degrade", "--in", p(&clean), "--out", p(&again), "--profile", "dark", "--seed", "4"]);
    let strip = |d: &Path| files(d).into_iter().filter(|(n, _)| n != "resolved.toml").collect::<Vec<_>>();
    assert_eq!(strip(&out), strip(&again));
}

#[test]
fn pairs_give_two_views_per_image() {
    let tmp = tempfile::tempdir().unwrap();
    let clean = tmp.path().join("clean");
    synth(&clean, 3, 16, 1);
    let out = tmp.path().join("pairs");
    ok(&["degrade", "--in", p(&clean), "--out", p(&out), "--pairs"]);
    let pngs = files(&out).iter().filter(|(n, _)| n.ends_with(".png")).count();
    assert_eq!(pngs, 6);
}

const TINY: &[&str] = &[
    "--set",
    "model.encoder.base_width=2",
    "--set",
    "model.encoder.latent_channels=4",
    "--set",
    "model.alignment.m1=2",
    "--set",
    "model.alignment.m2=2",
    "--set",
    "model.alignment.m3=2",
    "--set",
    "model.alignment.k=2",
    "--set",
    "stage1.batch_size=4",
    "--set",
    "stage2.batch_size=4",
];

fn train(stage: &str, data: &Path, run: &Path, extra: &[&str]) -> Output {
    let data = format!("data={}", p(data));
    let run = format!("out_dir={}", p(run));
    let mut args = vec!["train", "--stage", stage, "--set", &data, "--set", &run];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    dirlearn(&args)
}

#[test]
fn train_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 8, 16, 2);
    let run = tmp.path().join("run");

    let out = train("2", &data, &run, &["--set", "stage2.max_epochs=1"]);
    assert_eq!(out.status.code(), Some(1));
    let line = error_line(&out);
    assert!(line.starts_with("error: kind=input") && line.contains("--stage 1"), "{line}");

    let out = train("1", &data, &run, &["--set", "stage1.max_epochs=1", "--set", "nonsense.key=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out).contains("nonsense"));

    let one = train("1", &data, &run, &["--set", "stage1.max_epochs=1", "--seed", "5"]);
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    let resumed = train("1", &data, &run, &["--set", "stage1.max_epochs=2", "--seed", "5", "--resume"]);
    assert!(resumed.status.success(), "{}", String::from_utf8_lossy(&resumed.stderr));
    let straight = tmp.path().join("straight");
    let two = train("1", &data, &straight, &["--set", "stage1.max_epochs=2", "--seed", "5"]);
    assert!(two.status.success());
    assert_eq!(
        fs::read(run.join("metrics_stage1.csv")).unwrap(),
        fs::read(straight.join("metrics_stage1.csv")).unwrap()
    );
    let resolved = fs::read_to_string(run.join("resolved_stage1.toml")).unwrap();
    assert!(resolved.contains("max_epochs = 2"));
    assert!(resolved.contains("seed = 5"));

    let ckpt1 = format!("stage1_checkpoint={}", p(&run.join("stage1.ckpt")));
    let out = train("2", &data, &run, &["--set", &ckpt1, "--set", "stage2.max_epochs=1", "--set", "stage2.train_no_pilot=true"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("stage2.ckpt").exists());
    assert!(run.join("resolved_stage2.toml").exists());

    let test = tmp.path().join("test");
    synth(&test, 4, 16, 9);
    let ckpt2 = run.join("stage2.ckpt");
    let ev = tmp.path().join("eval");
    ok(&["eval", "--ckpt", p(&ckpt2), "--test", p(&test), "--report", "ablation", "--out", p(&ev)]);
    let csv = fs::read_to_string(ev.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
    let first = fs::read(ev.join("ablation.csv")).unwrap();
    ok(&["eval", "--ckpt", p(&ckpt2), "--test", p(&test), "--report", "ablation", "--out", p(&ev)]);
    assert_eq!(first, fs::read(ev.join("ablation.csv")).unwrap());

    ok(&["eval", "--ckpt", p(&ckpt2), "--test", p(&test), "--report", "metrics", "--out", p(&ev)]);
    let header = fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let header = header.lines().next().unwrap().to_lowercase();
    assert!(header.contains("psnr") && header.contains("ssim"), "{header}");

    ok(&["eval", "--ckpt", p(&ckpt2), "--test", p(&test), "--report", "latents", "--out", p(&ev)]);
    for name in ["dir.bin", "pilot.bin", "dfr.bin", "refined.bin", "pca.csv"] {
        assert!(ev.join(name).exists(), "{name} missing");
    }
    assert_eq!(fs::read_to_string(ev.join("pca.csv")).unwrap().lines().count(), 1 + 3 * 4);

    let missing = dirlearn(&["eval", "--ckpt", p(&tmp.path().join("nope.ckpt")), "--test", p(&test), "--report", "metrics"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(error_line(&missing).starts_with("error: kind=input"));
}
