//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//!
//! Criteria 5-8 share one desk-scale Stage I run (200 toy images, 60 epochs)
//! and take roughly a quarter of an hour on one CPU core in release mode.

use std::f64::consts::LN_2;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use dirlearn::autograd::Tensor;
use dirlearn::corpus::{gen_toy_corpus, LabeledImage, ToySample};
use dirlearn::distributions::DiagonalGaussian;
use dirlearn::evaluation::{
    ablation_report, classification_accuracy, latent_invariance_ratio, make_test_pairs, pilot_clustering, psnr,
};
use dirlearn::isp::{
    cfa_color, demosaic_bilinear, gamma_decode, gamma_encode, jpeg_quantize, make_pair, mosaic, sample_params,
    sensor_noise_unclipped, BayerRaw, DegradationProfile, ImageRgb, Range,
};
use dirlearn::mi_estimation::{correlated_gaussian, estimate_jsd_mi, jsd_mi_lower_bound, CriticBatch, JsdFitConfig};
use dirlearn::networks::{load_checkpoint, AlignmentConfig, EncoderConfig, ModelBundle, ModelConfig, NetId};
use dirlearn::training::{
    grad_check, miniature_bundle, train_stage1, train_stage2, LossName, Stage1Config, Stage2Config, FROZEN_IN_STAGE2,
    STAGE1_METRICS, STAGE2_METRICS,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn report(id: usize, name: &str, elapsed: Duration, o: &Outcome) {
    println!(
        "criterion {id} [{}] {name}: {} ({:.1}s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
}

fn gaussian_log_density(x: &[f64], g: &DiagonalGaussian) -> f64 {
    let (m, lv) = (g.mean().data(), g.logvar().data());
    x.iter()
        .zip(m.iter().zip(lv))
        .map(|(x, (m, lv))| -0.5 * ((2.0 * std::f64::consts::PI).ln() + lv + (x - m).powi(2) / lv.exp()))
        .sum()
}

fn random_gaussian(dim: usize, rng: &mut impl Rng) -> DiagonalGaussian {
    let m = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let lv = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    DiagonalGaussian::new(Tensor::new(vec![dim], m), Tensor::new(vec![dim], lv)).unwrap()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n = 100_000;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (p, q) = (random_gaussian(4, &mut rng), random_gaussian(4, &mut rng));
        let closed = p.kl(&q).unwrap();
        let normals: Vec<Normal<f64>> = p
            .mean()
            .data()
            .iter()
            .zip(p.logvar().data())
            .map(|(m, lv)| Normal::new(*m, (0.5 * lv).exp()).unwrap())
            .collect();
        let mut acc = 0.0;
        let mut x = vec![0.0; 4];
        for _ in 0..n {
            for (xi, d) in x.iter_mut().zip(&normals) {
                *xi = d.sample(&mut rng);
            }
            acc += gaussian_log_density(&x, &p) - gaussian_log_density(&x, &q);
        }
        worst = worst.max((acc / n as f64 - closed).abs() / closed);
    }
    let unit = DiagonalGaussian::new(Tensor::new(vec![1], vec![0.0]), Tensor::new(vec![1], vec![0.0])).unwrap();
    let fused = unit.poe(&unit).unwrap();
    let (m, v) = (fused.mean().data()[0], fused.logvar().data()[0].exp());
    let pass = worst < 0.02 && m == 0.0 && v == 0.5;
    outcome(pass, format!("max MC relative error {worst:.4} (< 0.02); poe(N(0,1),N(0,1)) = N({m}, {v})"))
}

fn criterion_2() -> Outcome {
    let zero = CriticBatch::new(vec![0.0; 64], vec![0.0; 64]).unwrap();
    let fixed = jsd_mi_lower_bound(&zero);
    let fixed_ok = (fixed + 2.0 * LN_2).abs() <= 1e-9;
    let cfg = JsdFitConfig::default();
    let fit = |rho: f64, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tx, ty) = correlated_gaussian(4000, rho, &mut rng);
        let (ex, ey) = correlated_gaussian(4000, rho, &mut rng);
        estimate_jsd_mi((&tx, &ty), (&ex, &ey), &cfg).unwrap()
    };
    let indep = fit(0.0, 201);
    let corr = fit(0.9, 202);
    let indep_ok = (indep + 2.0 * LN_2).abs() <= 0.05;
    let gap_ok = corr - indep >= 0.2;
    outcome(
        fixed_ok && indep_ok && gap_ok,
        format!(
            "F=0 gives {fixed:.12}; independent {indep:.4} (|+2ln2| = {:.4} <= 0.05); rho=0.9 {corr:.4}, gap {:.4} (>= 0.2)",
            (indep + 2.0 * LN_2).abs(),
            corr - indep
        ),
    )
}

fn criterion_3() -> Outcome {
    let bundle = miniature_bundle(0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for loss in LossName::ALL {
        let r = grad_check(loss, &bundle, 1e-4, 0).unwrap();
        pass &= r.passed();
        parts.push(format!("{loss} {:.2e} over {}", r.max_rel_error, r.n_checked));
    }
    outcome(pass, format!("{} (<= 1e-4)", parts.join(", ")))
}

fn ranges_equal(a: &Range, lo: f64, hi: f64) -> bool {
    a.min == lo && a.max == hi
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut failures = Vec::new();

    let raw = BayerRaw::new(32, 32, (0..1024).map(|_| rng.random::<f64>()).collect()).unwrap();
    let rgb = demosaic_bilinear(&raw);
    let sites_exact = (0..32).all(|y| (0..32).all(|x| rgb.get(y, x, cfa_color(y, x).channel()) == raw.get(y, x)));
    let remosaic_exact = mosaic(&rgb).unwrap() == raw;
    if !(sites_exact && remosaic_exact) {
        failures.push("CFA sites".to_string());
    }

    let mut gamma_err: f64 = 0.0;
    for i in 0..=100 {
        let v = i as f64 / 100.0;
        for g in [1.8, 2.2, 2.6] {
            gamma_err = gamma_err.max((gamma_decode(gamma_encode(v, g), g) - v).abs());
        }
    }
    if gamma_err > 1e-6 {
        failures.push(format!("gamma roundtrip {gamma_err:e}"));
    }

    let flat = vec![0.5; 65536];
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let g = sensor_noise_unclipped(&flat, 0.2, 0.0, &mut rng).unwrap();
    let p = sensor_noise_unclipped(&flat, 0.0, 0.02, &mut rng).unwrap();
    let (gv, pv) = (var(&g), var(&p));
    // Sampling sd of a variance estimate from 65536 draws is about 0.55 %.
    if (gv - 0.04).abs() > 0.05 * 0.04 || (pv - 0.01).abs() > 0.1 * 0.01 {
        failures.push(format!("noise variances {gv:.5} / {pv:.5}"));
    }

    let images: Vec<ImageRgb> = gen_toy_corpus(8, 4, 402).unwrap().into_iter().map(|s| s.clean).collect();
    let qfs = [10u8, 30, 50, 80, 100];
    let mean_psnr: Vec<f64> = qfs
        .iter()
        .map(|&q| images.iter().map(|im| psnr(&jpeg_quantize(im, q).unwrap(), im).unwrap()).sum::<f64>() / 8.0)
        .collect();
    if !mean_psnr.windows(2).all(|w| w[1] > w[0]) {
        failures.push(format!("JPEG PSNR not monotone {mean_psnr:?}"));
    }

    let d = DegradationProfile::default_preset();
    let k = DegradationProfile::dark_preset();
    let presets_ok = ranges_equal(&d.gauss_sigma, 0.05, 0.1)
        && ranges_equal(&d.jpeg_qf, 10.0, 30.0)
        && ranges_equal(&k.gauss_sigma, 0.15, 0.35)
        && ranges_equal(&k.poisson_lambda, 0.02, 0.04);
    let draws_ok = (0..1000).all(|_| {
        let a = sample_params(&d, &mut rng).unwrap();
        let b = sample_params(&k, &mut rng).unwrap();
        (0.05..=0.1).contains(&a.gauss_sigma)
            && (10..=30).contains(&a.jpeg_qf)
            && (0.15..=0.35).contains(&b.gauss_sigma)
            && (0.02..=0.04).contains(&b.poisson_lambda)
    });
    if !(presets_ok && draws_ok) {
        failures.push("preset ranges".into());
    }

    let detail = format!(
        "CFA exact, gamma err {gamma_err:.1e}, noise var {gv:.5}/{pv:.5} (0.04/0.01), JPEG PSNR {}",
        mean_psnr.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(" < ")
    );
    if failures.is_empty() {
        outcome(true, detail)
    } else {
        outcome(false, format!("{}; failed: {}", detail, failures.join(", ")))
    }
}

fn desk_model() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            base_width: 16,
            latent_channels: 32,
            ..Default::default()
        },
        alignment: AlignmentConfig::default(),
        ..Default::default()
    }
}

fn desk_stage1() -> Stage1Config {
    Stage1Config {
        lr_initial: 1e-3,
        lr_final: 1e-5,
        lr_drop_epoch: 60,
        max_epochs: 60,
        ..Default::default()
    }
}

fn desk_restoration() -> Stage2Config {
    Stage2Config {
        lr_initial: 1e-3,
        lr_final: 1e-5,
        lr_drop_epoch: 20,
        max_epochs: 20,
        train_no_pilot: true,
        ..Stage2Config::restoration()
    }
}

fn desk_classification() -> Stage2Config {
    Stage2Config {
        lr_initial: 1e-3,
        lr_final: 1e-5,
        lr_drop_epoch: 20,
        max_epochs: 20,
        ..Stage2Config::classification()
    }
}

fn labelled(samples: &[ToySample]) -> Vec<LabeledImage> {
    samples
        .iter()
        .map(|s| LabeledImage {
            id: s.id.clone(),
            label: s.label,
            image: s.clean.clone(),
        })
        .collect()
}

struct Desk {
    test: Vec<ToySample>,
    stage1_ckpt: std::path::PathBuf,
    stage1_time: Duration,
}

fn criterion_5(dir: &Path) -> (Outcome, Desk) {
    let train = gen_toy_corpus(200, 4, 1).unwrap();
    let test = gen_toy_corpus(60, 4, 999).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let profile = DegradationProfile::default_preset();
    let pairs: Vec<(ImageRgb, ImageRgb)> = test
        .iter()
        .map(|s| {
            let (a, b) = make_pair(&s.clean, &profile, &mut rng).unwrap();
            (a.image, b.image)
        })
        .collect();
    let model = desk_model();
    let before = latent_invariance_ratio(&ModelBundle::new(&model).unwrap(), NetId::DirEncoder, &pairs).unwrap();
    let start = Instant::now();
    let images: Vec<&ImageRgb> = train.iter().map(|s| &s.clean).collect();
    let out = train_stage1(&images, &model, &desk_stage1(), dir, false).unwrap();
    let stage1_time = start.elapsed();
    let after = latent_invariance_ratio(&out.bundle, NetId::DirEncoder, &pairs).unwrap();
    let drop = 1.0 - after / before;
    let pass = drop >= 0.3 && stage1_time <= Duration::from_secs(30 * 60);
    (
        outcome(
            pass,
            format!(
                "ratio {before:.4} -> {after:.4}, drop {:.1}% (>= 30%), stage I {:.0}s (<= 1800s)",
                100.0 * drop,
                stage1_time.as_secs_f64()
            ),
        ),
        Desk {
            test,
            stage1_ckpt: out.checkpoint,
            stage1_time,
        },
    )
}

fn criterion_6(desk: &Desk, dir: &Path) -> Outcome {
    let train = labelled(&gen_toy_corpus(200, 4, 1).unwrap());
    let refs: Vec<&LabeledImage> = train.iter().collect();
    let start = Instant::now();
    let out = train_stage2(&refs, &desk.stage1_ckpt, &desk_restoration(), dir, false).unwrap();
    let total = desk.stage1_time + start.elapsed();
    let clean: Vec<&ImageRgb> = desk.test.iter().map(|s| &s.clean).collect();
    let pairs = make_test_pairs(&clean, &DegradationProfile::default_preset(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let table = ablation_report(&out.bundle, &pairs).unwrap();
    let p: Vec<f64> = table.rows.iter().map(|r| r.psnr).collect();
    let pass = table.rows.len() == 3 && p[1] - p[0] >= 0.2 && p[2] - p[1] >= 0.2 && total <= Duration::from_secs(3600);
    outcome(
        pass,
        format!(
            "PSNR r0 {:.2} < no pilot {:.2} < pilot {:.2} dB (gaps {:.2}, {:.2} >= 0.2), stages I+II {:.0}s (<= 3600s)",
            p[0],
            p[1],
            p[2],
            p[1] - p[0],
            p[2] - p[1],
            total.as_secs_f64()
        ),
    )
}

fn criterion_7(desk: &Desk) -> Outcome {
    let (bundle, _) = load_checkpoint(&desk.stage1_ckpt).unwrap();
    let four: Vec<&ImageRgb> = desk.test[..4].iter().map(|s| &s.clean).collect();
    let clusters = pilot_clustering(
        &bundle,
        &four,
        50,
        &DegradationProfile::default_preset(),
        &mut ChaCha8Rng::seed_from_u64(7),
    )
    .unwrap();
    outcome(
        clusters.accuracy > 0.8,
        format!("nearest-centroid accuracy {:.3} over 200 pilots (> 0.8)", clusters.accuracy),
    )
}

fn criterion_8(desk: &Desk, dir: &Path) -> Outcome {
    let train = labelled(&gen_toy_corpus(1000, 4, 1).unwrap());
    let refs: Vec<&LabeledImage> = train.iter().collect();
    let cfg = desk_classification();
    let start = Instant::now();
    let out = train_stage2(&refs, &desk.stage1_ckpt, &cfg, dir, false).unwrap();
    let elapsed = start.elapsed();
    let test = gen_toy_corpus(200, 4, 998).unwrap();
    let clean: Vec<&ImageRgb> = test.iter().map(|s| &s.clean).collect();
    let labels: Vec<usize> = test.iter().map(|s| s.label).collect();
    let pairs = make_test_pairs(&clean, &cfg.profile().unwrap(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let degraded: Vec<&ImageRgb> = pairs.iter().map(|p| &p.degraded).collect();
    let direct = classification_accuracy(&out.bundle, &degraded, &labels, false).unwrap();
    let restored = classification_accuracy(&out.bundle, &degraded, &labels, true).unwrap();
    let gain = 100.0 * (restored - direct);
    outcome(
        gain >= 5.0 && elapsed <= Duration::from_secs(30 * 60),
        format!(
            "dark accuracy direct {direct:.3}, via restoration {restored:.3}, gain {gain:.1} pp (>= 5), stage II {:.0}s (<= 1800s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn tiny_run(dir: &Path) {
    let model = ModelConfig {
        encoder: EncoderConfig {
            base_width: 2,
            latent_channels: 4,
            ..Default::default()
        },
        alignment: AlignmentConfig {
            m1: 2,
            m2: 2,
            m3: 2,
            k: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    let corpus = dirlearn::corpus::gen_toy_corpus_sized(8, 4, 16, 3).unwrap();
    let images: Vec<&ImageRgb> = corpus.iter().map(|s| &s.clean).collect();
    let s1 = Stage1Config {
        max_epochs: 2,
        batch_size: 4,
        seed: 9,
        ..Default::default()
    };
    let out = train_stage1(&images, &model, &s1, dir, false).unwrap();
    let samples = labelled(&corpus);
    let refs: Vec<&LabeledImage> = samples.iter().collect();
    let s2 = Stage2Config {
        max_epochs: 2,
        batch_size: 4,
        seed: 9,
        task_pretrain_epochs: 2,
        ..Stage2Config::classification()
    };
    train_stage2(&refs, &out.checkpoint, &s2, dir, false).unwrap();
}

fn criterion_9(desk_stage2: &Path, desk: &Desk, scratch: &Path) -> Outcome {
    let (s1, _) = load_checkpoint(&desk.stage1_ckpt).unwrap();
    let (s2, _) = load_checkpoint(desk_stage2).unwrap();
    let frozen_ok = FROZEN_IN_STAGE2
        .iter()
        .all(|n| s1.checksum(n.as_str()).unwrap() == s2.checksum(n.as_str()).unwrap());
    let (a, b) = (scratch.join("a"), scratch.join("b"));
    tiny_run(&a);
    tiny_run(&b);
    let same = |f: &str| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    let csv_ok = same(STAGE1_METRICS) && same(STAGE2_METRICS);
    outcome(
        frozen_ok && csv_ok,
        format!(
            "frozen checksums {} across stage II; repeated seeded runs give {} metrics CSVs",
            if frozen_ok { "unchanged" } else { "CHANGED" },
            if csv_ok { "identical" } else { "DIFFERENT" }
        ),
    )
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let stage1_dir = scratch.path().join("desk");
    let restore_dir = scratch.path().join("restore");
    let classify_dir = scratch.path().join("classify");
    let mut all = true;
    let mut run = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        report(id, name, t.elapsed(), &o);
        all &= o.pass;
    };
    run(1, "analytic Gaussian oracles", &mut criterion_1);
    run(2, "JSD bound fixed points", &mut criterion_2);
    run(3, "gradient verification", &mut criterion_3);
    run(4, "ISP simulator suite", &mut criterion_4);
    let mut desk = None;
    run(5, "stage-I invariance", &mut || {
        let (o, d) = criterion_5(&stage1_dir);
        desk = Some(d);
        o
    });
    let desk = desk.expect("stage I ran");
    run(6, "ablation direction", &mut || criterion_6(&desk, &restore_dir));
    run(7, "pilot-DfR clustering", &mut || criterion_7(&desk));
    run(8, "task path on dark images", &mut || criterion_8(&desk, &classify_dir));
    let stage2_ckpt = restore_dir.join(dirlearn::training::STAGE2_CKPT);
    run(9, "freeze and determinism contracts", &mut || {
        criterion_9(&stage2_ckpt, &desk, &scratch.path().join("tiny"))
    });
    println!("acceptance: {}", if all { "all criteria passed" } else { "SOME CRITERIA FAILED" });
    if !all {
        std::process::exit(1);
    }
}
