use std::fs;
use std::path::{Path, PathBuf};

use dirlearn::autograd::Tensor;
use dirlearn::corpus::{gen_toy_corpus_sized, read_corpus, write_corpus, LabeledImage, MANIFEST_FILE, MAX_CLASSES};
use dirlearn::distributions::{write_latent, LatentRole};
use dirlearn::evaluation::{
    ablation_report, classification_accuracy, encode_means, make_test_pairs, metrics_report, pca_project,
    write_projection_csv, ProjectionRow, TestPair,
};
use dirlearn::isp::{degrade_random, DegradationProfile, ImageRgb};
use dirlearn::networks::{load_checkpoint, ModelBundle, NetId};
use dirlearn::training::{train_stage1, train_stage2};
use dirlearn::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{DegradeArgs, EvalArgs, ReportArg, SynthArgs, TrainArgs};

pub enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type Outcome = Result<(), Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Run(Error::Input(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Arguments of a non-training subcommand, echoed beside its outputs.
#[derive(Serialize)]
struct Invocation<'a> {
    command: &'a str,
    seed: u64,
    #[serde(flatten)]
    args: serde_json::Value,
}

fn echo_invocation(dir: &Path, command: &str, seed: u64, args: serde_json::Value) -> Result<(), Failure> {
    let inv = Invocation { command, seed, args };
    let text = toml::to_string_pretty(&inv).map_err(|e| Failure::Run(Error::Config(e.to_string())))?;
    write_text(&dir.join(crate::config::RESOLVED_FILE), &text)
}

pub fn synth_data(a: &SynthArgs, seed: u64) -> Outcome {
    if !(2..=MAX_CLASSES).contains(&a.classes) {
        return Err(Failure::Usage(format!("--classes must be between 2 and {MAX_CLASSES}, got {}", a.classes)));
    }
    if a.n == 0 {
        return Err(Failure::Usage("--n must be positive".into()));
    }
    if a.out.exists() {
        let non_empty = fs::read_dir(&a.out).map_err(|e| io_err(&a.out, e))?.next().is_some();
        if non_empty && !a.force {
            return Err(Failure::Run(Error::Input(format!(
                "{} is not empty (pass --force to overwrite)",
                a.out.display()
            ))));
        }
    }
    create_dir(&a.out)?;
    let samples = gen_toy_corpus_sized(a.n, a.classes, a.size, seed)?;
    write_corpus(&a.out, &samples)?;
    echo_invocation(
        &a.out,
        "synth-data",
        seed,
        serde_json::json!({"n": a.n, "classes": a.classes, "size": a.size}),
    )?;
    println!("wrote {} images to {}", samples.len(), a.out.display());
    Ok(())
}

/// Labelled corpus if a manifest is present, otherwise every PNG in the folder.
fn load_images(dir: &Path) -> Result<Vec<(String, ImageRgb)>, Failure> {
    if dir.join(MANIFEST_FILE).exists() {
        return Ok(read_corpus(dir)?.into_iter().map(|s| (s.id, s.image)).collect());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Run(Error::Input(format!("no PNG images in {}", dir.display()))));
    }
    files
        .iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((id, ImageRgb::load_png(p)?))
        })
        .collect()
}

#[derive(Serialize)]
struct Sidecar<'a> {
    source: &'a str,
    profile: &'a str,
    params: &'a dirlearn::isp::IspParams,
}

pub fn degrade(a: &DegradeArgs, seed: u64) -> Outcome {
    let profile: DegradationProfile = a.profile.name().parse()?;
    let images = load_images(&a.input)?;
    create_dir(&a.out)?;
    let views = if a.pairs { 2 } else { 1 };
    for (i, (id, img)) in images.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for v in 0..views {
            let view = degrade_random(img, &profile, &mut rng)?;
            let stem = format!("{id}_v{v}");
            view.image.save_png8(&a.out.join(format!("{stem}.png")))?;
            write_json(
                &a.out.join(format!("{stem}.json")),
                &Sidecar {
                    source: id,
                    profile: a.profile.name(),
                    params: &view.params,
                },
            )?;
        }
    }
    echo_invocation(
        &a.out,
        "degrade",
        seed,
        serde_json::json!({"in": a.input, "profile": a.profile.name(), "pairs": a.pairs}),
    )?;
    println!("wrote {} degraded views to {}", images.len() * views, a.out.display());
    Ok(())
}

pub fn train(a: &TrainArgs, seed: Option<u64>) -> Outcome {
    let cfg = RunConfig::load(a.config.as_deref(), &a.overrides, seed)?;
    let out = cfg.out_dir();
    create_dir(&out)?;
    cfg.write_resolved(&out, &format!("resolved_stage{}.toml", a.stage))?;
    let corpus = read_corpus(Path::new(&cfg.data))?;
    let result = if a.stage == 1 {
        let images: Vec<&ImageRgb> = corpus.iter().map(|s| &s.image).collect();
        train_stage1(&images, &cfg.model, &cfg.stage1, &out, a.resume)?
    } else {
        if cfg.stage1_checkpoint.is_empty() {
            return Err(Failure::Run(Error::Input(
                "stage 2 needs a stage-1 checkpoint: set stage1_checkpoint in the config \
                 or pass --set stage1_checkpoint=<out_dir>/stage1.ckpt after `train --stage 1`"
                    .into(),
            )));
        }
        let refs: Vec<&LabeledImage> = corpus.iter().collect();
        train_stage2(&refs, Path::new(&cfg.stage1_checkpoint), &cfg.stage2, &out, a.resume)?
    };
    println!(
        "stage {} done: {} epochs, {} steps; checkpoint {}; metrics {}",
        a.stage,
        result.epochs_done,
        result.step,
        result.checkpoint.display(),
        result.metrics.display()
    );
    Ok(())
}

fn stack(rows: &[Tensor]) -> Tensor {
    Tensor::cat_rows(&rows.iter().collect::<Vec<_>>())
}

fn export_latents(bundle: &ModelBundle, test: &[TestPair], ids: &[String], out: &Path) -> Result<(), Failure> {
    let degraded: Vec<&ImageRgb> = test.iter().map(|t| &t.degraded).collect();
    let clean: Vec<&ImageRgb> = test.iter().map(|t| &t.clean).collect();
    let dir = encode_means(bundle, NetId::DirEncoder, &degraded)?;
    let pilot = encode_means(bundle, NetId::DfrEncoder, &degraded)?;
    let dfr = encode_means(bundle, NetId::DfrEncoder, &clean)?;
    let refined: Vec<Tensor> = dir
        .iter()
        .zip(&pilot)
        .map(|(r0, p)| bundle.align(NetId::Alignment, r0, p))
        .collect::<dirlearn::Result<_>>()?;
    let source = "test corpus";
    for (name, role, rows) in [
        ("dir", LatentRole::Dir, &dir),
        ("pilot", LatentRole::Pilot, &pilot),
        ("dfr", LatentRole::Dfr, &dfr),
        ("refined", LatentRole::Refined, &refined),
    ] {
        write_latent(&out.join(format!("{name}.bin")), &stack(rows), role, source)?;
    }
    let groups = [("dir", &dir), ("pilot", &pilot), ("dfr", &dfr)];
    let points: Vec<Vec<f64>> = groups
        .iter()
        .flat_map(|(_, rows)| rows.iter().map(|t| t.data().to_vec()))
        .collect();
    let proj = pca_project(&points, 2)?;
    let mut rows = Vec::with_capacity(points.len());
    for (g, (name, set)) in groups.iter().enumerate() {
        for (i, id) in ids.iter().enumerate().take(set.len()) {
            let c = &proj.coords[g * ids.len() + i];
            rows.push(ProjectionRow {
                id: id.clone(),
                x: c[0],
                y: c[1],
                group: name.to_string(),
            });
        }
    }
    write_projection_csv(&out.join("pca.csv"), &rows)?;
    println!("wrote latent dumps and pca.csv ({} points) to {}", rows.len(), out.display());
    Ok(())
}

pub fn eval(a: &EvalArgs, seed: u64) -> Outcome {
    if !a.ckpt.exists() {
        return Err(Failure::Run(Error::Input(format!("checkpoint {} not found", a.ckpt.display()))));
    }
    let (bundle, _) = load_checkpoint(&a.ckpt)?;
    let corpus = read_corpus(&a.test)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.ckpt.parent().unwrap_or(Path::new(".")).join("eval"));
    create_dir(&out)?;
    let profile: DegradationProfile = a.profile.name().parse()?;
    let clean: Vec<&ImageRgb> = corpus.iter().map(|s| &s.image).collect();
    let test = make_test_pairs(&clean, &profile, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let report = match a.report {
        ReportArg::Ablation => "ablation",
        ReportArg::Metrics => "metrics",
        ReportArg::Latents => "latents",
    };
    echo_invocation(
        &out,
        "eval",
        seed,
        serde_json::json!({"ckpt": a.ckpt, "test": a.test, "report": report, "profile": a.profile.name()}),
    )?;
    match a.report {
        ReportArg::Ablation | ReportArg::Metrics => {
            let table = if a.report == ReportArg::Ablation {
                ablation_report(&bundle, &test)?
            } else {
                metrics_report(&bundle, &test)?
            };
            let mut text = table.to_text();
            if a.report == ReportArg::Metrics && corpus.iter().all(|s| s.label < bundle.config.n_classes) {
                let degraded: Vec<&ImageRgb> = test.iter().map(|t| &t.degraded).collect();
                let labels: Vec<usize> = corpus.iter().map(|s| s.label).collect();
                let direct = classification_accuracy(&bundle, &degraded, &labels, false)?;
                let restored = classification_accuracy(&bundle, &degraded, &labels, true)?;
                text.push_str(&format!(
                    "\naccuracy on degraded inputs: {direct:.4}\naccuracy after restoration: {restored:.4}\n"
                ));
            }
            table.write_csv(&out.join(format!("{report}.csv")))?;
            write_text(&out.join(format!("{report}.txt")), &text)?;
            print!("{text}");
        }
        ReportArg::Latents => {
            let ids: Vec<String> = corpus.iter().map(|s| s.id.clone()).collect();
            export_latents(&bundle, &test, &ids, &out)?;
        }
    }
    Ok(())
}
