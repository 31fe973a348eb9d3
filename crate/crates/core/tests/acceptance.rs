//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng as _;
use tardiff::datasets::{gen_synthetic, halve, split, DatasetBundle, GeneratorSpec, LabeledSeries, SplitName, SplitRatios};
use tardiff::diffusion::{q_sample, sample, train_denoiser, GuidanceSpec, NoiseSchedule};
use tardiff::eval::{
    auprc, auroc, class_specific_guidance, gradient_norm_analysis, guidance_sweep, pearson, runtime_report,
    score_classifier, spearman, time_cache_build, tstr, EvalConfig, GenerationSetup,
};
use tardiff::gradcore::{central_difference, Graph, Instr, ParamVector, Program, Tensor, Var};
use tardiff::influence::{build_cache, mixed_gradient, retraining_oracle, ClassFilter, GradientCache, InfluenceGuide};
use tardiff::nets::{
    train_classifier, Activation, Classifier, ClassifierConfig, Denoiser, DenoiserConfig, TrainSettings, TrainedClassifier,
    TrainingMeta,
};
use tardiff::seeding;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Guidance gradients are rescaled to at most this norm at every step.
const CLIP: f64 = 3e-4;
const WEAK_STEPS: usize = 300;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(r: &mut seeding::Rng, n: usize) -> Vec<f64> {
    seeding::normal_vec(r, n)
}

fn tensor(r: &mut seeding::Rng, shape: &[usize]) -> Tensor {
    Tensor::new(shape.to_vec(), normal(r, shape.iter().product())).unwrap()
}

/// `|a − b| / max(|a|, |b|, 1e-6)`.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

const FD_STEP: f64 = 1e-5;

// Criterion 1 ------------------------------------------------------------

/// A random two-layer network with a random loss head. Slots: 0 = x,
/// 1 = W1, 2 = W2, 3 = R (same shape as the hidden layer), 4 = targets.
fn random_program(r: &mut seeding::Rng, b: usize, k: usize) -> (Program, Tensor) {
    let mut instrs = Vec::new();
    let mut next = 5;
    let mut push = |instrs: &mut Vec<Instr>, i: Instr| {
        instrs.push(i);
        next += 1;
        next - 1
    };
    let z = push(&mut instrs, Instr::MatMul(0, 1));
    let a = match r.gen_range(0..4) {
        0 => push(&mut instrs, Instr::Tanh(z)),
        1 => push(&mut instrs, Instr::Sigmoid(z)),
        2 => {
            let s = push(&mut instrs, Instr::Scale(z, 0.3));
            push(&mut instrs, Instr::Exp(s))
        }
        _ => {
            let t = push(&mut instrs, Instr::Tanh(z));
            push(&mut instrs, Instr::Mul(t, z))
        }
    };
    let a = match r.gen_range(0..3) {
        0 => push(&mut instrs, Instr::Add(a, 3)),
        1 => push(&mut instrs, Instr::Mul(a, 3)),
        _ => push(&mut instrs, Instr::Sub(a, 3)),
    };
    let logits = push(&mut instrs, Instr::MatMul(a, 2));
    let head = r.gen_range(0..4);
    let target = match head {
        0 => {
            let mut t = vec![0.0; b * k];
            for row in 0..b {
                t[row * k + r.gen_range(0..k)] = 1.0;
            }
            push(&mut instrs, Instr::SoftmaxCrossEntropy(logits, 4));
            Tensor::new(vec![b, k], t).unwrap()
        }
        1 => {
            push(&mut instrs, Instr::SigmoidCrossEntropy(logits, 4));
            Tensor::new(vec![b, k], (0..b * k).map(|_| f64::from(r.gen_range(0..2u8))).collect()).unwrap()
        }
        2 => {
            push(&mut instrs, Instr::SquaredError(logits, 4));
            tensor(r, &[b, k])
        }
        _ => {
            let t = push(&mut instrs, Instr::Tanh(logits));
            push(&mut instrs, Instr::Mean(t));
            Tensor::zeros(&[b, k])
        }
    };
    (Program::new(instrs), target)
}

fn criterion_autodiff() -> Outcome {
    let start = Instant::now();
    let mut r = seeding::rng(101);
    let (mut worst_grad, mut worst_mixed) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (b, d, h, k) = (r.gen_range(1..4), r.gen_range(1..5), r.gen_range(1..5), r.gen_range(2..4));
        let (prog, target) = random_program(&mut r, b, k);
        let mut inputs = vec![
            tensor(&mut r, &[b, d]),
            tensor(&mut r, &[d, h]),
            tensor(&mut r, &[h, k]),
            tensor(&mut r, &[b, h]),
            target,
        ];
        for t in inputs.iter_mut().take(3) {
            t.data_mut().iter_mut().for_each(|v| *v *= 0.7);
        }
        let (mut g, vars, root) = prog.evaluate(&inputs).unwrap();
        let ad = g.grad(root, &vars[..4]).unwrap();
        for slot in 0..4 {
            let fd = central_difference(
                |p| {
                    let mut probe = inputs.clone();
                    probe[slot] = p.clone();
                    let (g, _, root) = prog.evaluate(&probe)?;
                    Ok(g.value(root).item())
                },
                &inputs[slot],
                FD_STEP,
            )
            .unwrap();
            for (a, f) in ad[slot].data().iter().zip(fd.data()) {
                worst_grad = worst_grad.max(rel_err(*a, *f));
            }
        }

        // ∇_x (v · ∇_W f) with W = (W1, W2).
        let mut params = ParamVector::zeros("random", &[("w1", vec![d, h]), ("w2", vec![h, k])]);
        params.values = inputs[1].data().iter().chain(inputs[2].data()).copied().collect();
        let v = normal(&mut r, params.len());
        let fixed = (inputs[3].clone(), inputs[4].clone());
        let f = |g: &mut Graph, p: &[Var], x: Var| -> tardiff::Result<Var> {
            let rv = g.constant(fixed.0.clone());
            let tv = g.constant(fixed.1.clone());
            Ok(prog.build(g, &[x, p[0], p[1], rv, tv])?)
        };
        let (_, j) = mixed_gradient(&params, &v, &inputs[0], f).unwrap();
        let fd = central_difference(
            |p| Ok(mixed_gradient(&params, &v, p, f).unwrap().0),
            &inputs[0],
            FD_STEP,
        )
        .unwrap();
        for (a, f) in j.data().iter().zip(fd.data()) {
            worst_mixed = worst_mixed.max(rel_err(*a, *f));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_grad < 1e-4 && worst_mixed < 1e-4 && secs < 30.0,
        format!("100 nets: max rel err {worst_grad:.2e} (grad), {worst_mixed:.2e} (mixed); {secs:.1} s"),
    )
}

// Criterion 2 ------------------------------------------------------------

fn criterion_schedule() -> Outcome {
    let start = Instant::now();
    let s = NoiseSchedule::desk();
    let mut worst = 0.0f64;
    let mut product = 1.0;
    for t in 1..=100 {
        let beta = 1e-4 + (0.02 - 1e-4) * (t - 1) as f64 / 99.0;
        product *= 1.0 - beta;
        worst = worst.max((s.alpha_bar(t) - product).abs());
    }
    // Chains of the stepwise kernel x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) e_t,
    // with independently drawn noise per step, against the marginal that
    // q_sample implies: mean q_sample(x0, t, 0) and scale from a unit noise.
    let mut r = seeding::rng(202);
    let x0 = Tensor::row(vec![1.5, -0.5, 0.0, 2.0]);
    let n = 10_000;
    let mut moments_ok = true;
    let mut worst_z = 0.0f64;
    for t in [1, 50, 100] {
        let mean_true = q_sample(&x0, t, &Tensor::zeros(&[1, 4]), &s).unwrap();
        let shifted = q_sample(&x0, t, &Tensor::row(vec![1.0; 4]), &s).unwrap();
        let mut sum = [0.0; 4];
        let mut sq = [0.0; 4];
        for _ in 0..n {
            let mut x = x0.data().to_vec();
            for step in 1..=t {
                let beta = 1e-4 + (0.02 - 1e-4) * (step - 1) as f64 / 99.0;
                for v in x.iter_mut() {
                    *v = (1.0 - beta).sqrt() * *v + beta.sqrt() * normal(&mut r, 1)[0];
                }
            }
            for i in 0..4 {
                sum[i] += x[i];
                sq[i] += x[i] * x[i];
            }
        }
        for i in 0..4 {
            let mu = mean_true.data()[i];
            let var_true = (shifted.data()[i] - mu).powi(2);
            let mean = sum[i] / n as f64;
            let var = (sq[i] - n as f64 * mean * mean) / (n - 1) as f64;
            let z_mean = (mean - mu) / (var_true / n as f64).sqrt();
            let z_var = (var - var_true) / (var_true * (2.0 / (n - 1) as f64).sqrt());
            worst_z = worst_z.max(z_mean.abs()).max(z_var.abs());
            moments_ok &= z_mean.abs() <= 3.0 && z_var.abs() <= 3.0;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-12 && moments_ok && secs < 10.0,
        format!("product identity err {worst:.1e}; q_sample moments max |z| {worst_z:.2}; {secs:.1} s"),
    )
}

// Criterion 3 ------------------------------------------------------------

fn perturbed_denoiser(seed: u64) -> Denoiser {
    let mut d = Denoiser::new(DenoiserConfig::default(), seed).unwrap();
    let mut r = seeding::rng(seed ^ 0xd0);
    let n = d.params.len();
    let noise = normal(&mut r, n);
    for (p, e) in d.params.values.iter_mut().zip(noise) {
        *p += 0.02 * e;
    }
    d
}

fn real_pieces(seed: u64) -> (Vec<LabeledSeries>, Vec<LabeledSeries>, Vec<LabeledSeries>) {
    let b = gen_synthetic(&GeneratorSpec {
        seed,
        ..GeneratorSpec::default()
    })
    .unwrap();
    let b = split(&b, SplitRatios::default(), seed).unwrap().normalize().unwrap();
    (b.subset(SplitName::Train), b.subset(SplitName::Val), b.subset(SplitName::Test))
}

fn criterion_zero_guidance() -> Outcome {
    let start = Instant::now();
    let schedule = NoiseSchedule::desk();
    let clf = Classifier::new(ClassifierConfig::default(), 3).unwrap();
    let phi = clf.to_checkpoint(TrainingMeta {
        seed: 3,
        steps: 0,
        final_loss: 0.0,
    });
    let (train, ..) = real_pieces(9);
    let guide = InfluenceGuide::new(&phi, build_cache(&phi, &train[..64]).unwrap()).unwrap();
    let mut identical = 0;
    for seed in 0..10 {
        let d = perturbed_denoiser(seed);
        let plain = sample(&d, (seed % 2) as usize, 2, &schedule, &GuidanceSpec::none(), seed).unwrap();
        let zero = sample(&d, (seed % 2) as usize, 2, &schedule, &GuidanceSpec::influence(&guide, 0.0), seed).unwrap();
        let same = plain.iter().zip(&zero).all(|(a, b)| {
            a.x.data().iter().zip(b.x.data()).all(|(p, q)| p.to_bits() == q.to_bits())
        });
        identical += usize::from(same && plain[0].x.len() == 168);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        identical == 10 && secs < 60.0,
        format!("{identical}/10 seeds bit-identical at T=100, L*D=168; {secs:.1} s"),
    )
}

// Criterion 4 ------------------------------------------------------------

fn small_task(seed: u64) -> (Vec<LabeledSeries>, Vec<LabeledSeries>, Vec<LabeledSeries>) {
    let b = gen_synthetic(&GeneratorSpec {
        series_len: 8,
        channels: 3,
        n_samples: 400,
        positive_rate: 0.2,
        event_width: 3,
        event_channels: 2,
        seed,
        ..GeneratorSpec::default()
    })
    .unwrap();
    let b = split(&b, SplitRatios::default(), seed).unwrap().normalize().unwrap();
    (b.subset(SplitName::Train), b.subset(SplitName::Val), b.subset(SplitName::Test))
}

fn small_classifier_config(hidden: Vec<usize>) -> ClassifierConfig {
    ClassifierConfig {
        series_len: 8,
        channels: 3,
        hidden,
        num_classes: 2,
        activation: Activation::Tanh,
    }
}

fn criterion_oracle() -> Outcome {
    let start = Instant::now();
    let (train, val, test) = small_task(41);
    let config = small_classifier_config(vec![16]);
    let trained = train_classifier(&train, &config, TrainSettings::classifier(), 41).unwrap();
    let n_params = trained.classifier.params.len();
    let guide = InfluenceGuide::new(&trained.checkpoint, build_cache(&trained.checkpoint, &val).unwrap()).unwrap();
    let mut r = seeding::rng(404);
    let (mut est, mut orc) = (Vec::new(), Vec::new());
    for k in 0..50 {
        let base = &test[k % test.len()];
        let noise = normal(&mut r, base.x.len());
        let data: Vec<f64> = base.x.data().iter().zip(noise).map(|(a, e)| a + 0.5 * e).collect();
        let x = Tensor::new(base.x.shape().to_vec(), data).unwrap();
        let y = r.gen_range(0..2);
        est.push(guide.influence(&x, y).unwrap());
        orc.push(retraining_oracle((&x, y), &trained.classifier, &val, 1e-3, 1).unwrap());
    }
    let rho = pearson(&est, &orc);
    let agree = est.iter().zip(&orc).filter(|(a, b)| a.signum() == b.signum()).count();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        n_params <= 1000 && rho >= 0.95 && agree >= 48 && secs < 120.0,
        format!("{n_params} params, 50 candidates: Pearson r {rho:.4}, sign agreement {agree}/50; {secs:.1} s"),
    )
}

// Criterion 5 ------------------------------------------------------------

fn criterion_analytic_j() -> Outcome {
    let mut r = seeding::rng(505);
    let mut worst_closed = 0.0f64;
    for _ in 0..20 {
        let d = 6;
        let mut params = ParamVector::zeros("lin", &[("w", vec![d, 1])]);
        params.values = normal(&mut r, d);
        let gv = normal(&mut r, d);
        let x = tensor(&mut r, &[1, d]);
        let y = normal(&mut r, 1)[0];
        let (_, j) = mixed_gradient(&params, &gv, &x, |g, p, xv| {
            let pred = g.matmul(xv, p[0])?;
            let t = g.constant(Tensor::new(vec![1, 1], vec![y]).unwrap());
            let se = g.squared_error(pred, t)?;
            Ok(g.scale(se, 0.5)?)
        })
        .unwrap();
        let w = &params.values;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let resid = dot(w, x.data()) - y;
        let gx = dot(&gv, x.data());
        for k in 0..d {
            worst_closed = worst_closed.max((j.data()[k] - (gx * w[k] + resid * gv[k])).abs());
        }
    }

    let mut worst_fd = 0.0f64;
    for seed in 0..5u64 {
        let (train, val, _) = small_task(seed);
        let mut clf = Classifier::new(small_classifier_config(vec![12, 6]), seed).unwrap();
        let n = clf.params.len();
        clf.params.values.iter_mut().zip(normal(&mut r, n)).for_each(|(p, e)| *p += 0.2 * e);
        let guide = InfluenceGuide::from_parts(
            clf.clone(),
            "random".into(),
            GradientCache::for_classifier(&clf, "random", &val, ClassFilter::All).unwrap(),
        )
        .unwrap();
        for s in train.iter().take(3) {
            let (_, j) = guide.influence_gradient(&s.x, s.y).unwrap();
            let fd = central_difference(|p| Ok(guide.influence(p, s.y).unwrap()), &s.x, FD_STEP).unwrap();
            for (a, f) in j.data().iter().zip(fd.data()) {
                worst_fd = worst_fd.max(rel_err(*a, *f));
            }
        }
    }
    outcome(
        worst_closed < 1e-10 && worst_fd < 1e-4,
        format!("linear closed form max abs err {worst_closed:.1e}; random-net J vs finite differences max rel err {worst_fd:.2e}"),
    )
}

// Criterion 6 ------------------------------------------------------------

fn brute_auroc(scores: &[f64], labels: &[usize]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                twice += if si > sj {
                    2
                } else if si == sj {
                    1
                } else {
                    0
                };
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

fn brute_auprc(scores: &[f64], labels: &[usize]) -> f64 {
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for tau in thresholds {
        let (mut tp, mut predicted) = (0.0, 0.0);
        for (s, y) in scores.iter().zip(labels) {
            if *s >= tau {
                predicted += 1.0;
                if *y == 1 {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / pos;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

fn criterion_metrics() -> Outcome {
    let mut r = seeding::rng(606);
    let (mut auroc_exact, mut worst_auprc) = (0, 0.0f64);
    for _ in 0..500 {
        let n = r.gen_range(2..=200);
        let levels = r.gen_range(2..30);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.gen_range(0..levels)) / 10.0).collect();
        let mut labels: Vec<usize> = (0..n).map(|_| usize::from(r.gen_bool(0.3))).collect();
        labels[0] = 0;
        labels[1] = 1;
        auroc_exact += usize::from(auroc(&scores, &labels).unwrap() == brute_auroc(&scores, &labels));
        worst_auprc = worst_auprc.max((auprc(&scores, &labels).unwrap() - brute_auprc(&scores, &labels)).abs());
    }
    let worked = auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
    outcome(
        auroc_exact == 500 && worst_auprc < 1e-12 && worked == 0.75,
        format!("500 instances: auroc exact {auroc_exact}/500, auprc max err {worst_auprc:.1e}; worked example {worked}"),
    )
}

// Criteria 7 to 11 share one trained setup per seed ----------------------

struct SeedRun {
    seed: u64,
    train: Vec<LabeledSeries>,
    val: Vec<LabeledSeries>,
    test: Vec<LabeledSeries>,
    clf: TrainedClassifier,
    clf_seconds: f64,
}

fn eval_config() -> EvalConfig {
    EvalConfig::new(ClassifierConfig::default(), TrainSettings::classifier())
}

fn seed_run(seed: u64) -> SeedRun {
    let start = Instant::now();
    let (train, val, test) = real_pieces(seed);
    let clf = train_classifier(&train, &ClassifierConfig::default(), TrainSettings::classifier(), seed).unwrap();
    SeedRun {
        seed,
        train,
        val,
        test,
        clf,
        clf_seconds: start.elapsed().as_secs_f64(),
    }
}

fn denoiser_for(run: &SeedRun, steps: usize) -> Denoiser {
    let settings = TrainSettings {
        steps,
        ..TrainSettings::denoiser()
    };
    train_denoiser(&run.train, &DenoiserConfig::default(), &NoiseSchedule::desk(), settings, run.seed)
        .unwrap()
        .denoiser
}

fn setup<'a>(denoiser: &'a Denoiser, schedule: &'a NoiseSchedule, class_counts: Vec<usize>) -> GenerationSetup<'a> {
    GenerationSetup {
        denoiser,
        schedule,
        class_counts,
        clip_from: 0.0,
        clip: CLIP,
        step_range: None,
    }
}

fn criterion_disparity(runs: &[SeedRun]) -> Outcome {
    let mut hits = 0;
    let mut ratios = Vec::new();
    let mut secs = 0.0;
    for run in runs {
        let start = Instant::now();
        let norms = gradient_norm_analysis(&run.clf.classifier, &run.train).unwrap();
        secs += run.clf_seconds + start.elapsed().as_secs_f64();
        let ratio = norms[1].mean / norms[0].mean;
        hits += usize::from(ratio > 2.0);
        ratios.push(format!("{ratio:.2}"));
    }
    outcome(
        hits >= 4 && secs < 180.0,
        format!("minority/majority gradient norm ratio {} ({hits}/5 > 2); {secs:.0} s", ratios.join(", ")),
    )
}

struct Strong {
    denoiser: Denoiser,
    seconds: f64,
}

fn criterion_sweep(runs: &[SeedRun], strong: &[Strong]) -> Outcome {
    let schedule = NoiseSchedule::desk();
    let ws = [-100.0, -10.0, 0.0, 10.0, 100.0];
    let mut hits = 0;
    let mut rhos = Vec::new();
    let mut secs = 0.0;
    for (run, s) in runs.iter().zip(strong) {
        let start = Instant::now();
        let setup = setup(&s.denoiser, &schedule, vec![128, 128]);
        let result = guidance_sweep(&ws, &setup, &run.clf.checkpoint, &run.train, &run.val, &eval_config(), run.seed).unwrap();
        let infl: Vec<f64> = result.points.iter().map(|p| p.mean_influence).collect();
        let rho = spearman(&ws, &infl);
        hits += usize::from(rho >= 0.8);
        rhos.push(format!("{rho:.2}"));
        secs += s.seconds + start.elapsed().as_secs_f64();
    }
    outcome(
        hits == 5 && secs < 600.0,
        format!("Spearman rho(w, mean influence) {} ({hits}/5 >= 0.8, positive); {secs:.0} s", rhos.join(", ")),
    )
}

fn criterion_tstr(runs: &[SeedRun]) -> Outcome {
    let start = Instant::now();
    let schedule = NoiseSchedule::desk();
    let cfg = eval_config();
    let mut hits = 0;
    let mut rows = Vec::new();
    for run in runs {
        let weak = denoiser_for(run, WEAK_STEPS);
        let counts = DatasetBundle::class_counts(&run.train, 2);
        let setup = setup(&weak, &schedule, counts);
        let (guide_val, eval_val) = halve(&run.val, run.seed).unwrap();
        let guide = InfluenceGuide::new(&run.clf.checkpoint, build_cache(&run.clf.checkpoint, &guide_val).unwrap()).unwrap();
        let (unguided, _) = setup.generate(&GuidanceSpec::none(), run.seed).unwrap();
        let base = tstr(&unguided, &run.test, &cfg, run.seed).unwrap().auroc;
        // Pick w on evaluation-val only; the test split is scored once.
        let mut best: Option<(f64, f64, Vec<LabeledSeries>)> = None;
        for w in [10.0, 100.0] {
            let (batch, _) = setup.generate(&setup.spec(&guide, w), run.seed).unwrap();
            let trained = train_classifier(&batch, &cfg.classifier, cfg.settings, run.seed).unwrap();
            let (ev, ..) = score_classifier(&trained.classifier, &eval_val, cfg.threshold).unwrap();
            if best.as_ref().is_none_or(|b| ev > b.0) {
                best = Some((ev, w, batch));
            }
        }
        let (_, w, batch) = best.unwrap();
        let guided = tstr(&batch, &run.test, &cfg, run.seed).unwrap().auroc;
        hits += usize::from(guided >= base);
        rows.push(format!("{base:.3}->{guided:.3} (w={w})"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        hits >= 4 && secs < 900.0,
        format!("TSTR AUROC unguided->guided {} ({hits}/5); {secs:.0} s", rows.join(", ")),
    )
}

fn criterion_class_specific(runs: &[SeedRun], strong: &[Strong]) -> Outcome {
    let schedule = NoiseSchedule::desk();
    let mut hits = 0;
    let mut rows = Vec::new();
    for (run, s) in runs.iter().zip(strong) {
        let setup = setup(&s.denoiser, &schedule, DatasetBundle::class_counts(&run.train, 2));
        let res = class_specific_guidance(
            100.0,
            &setup,
            &run.clf.checkpoint,
            &run.train,
            &run.val,
            &run.test,
            &eval_config(),
            run.seed,
        )
        .unwrap();
        let f1 = |name: &str| res.iter().find(|r| r.filter == name).unwrap().report.minority_f1;
        let (all, maj, min) = (f1("all"), f1("majority"), f1("minority"));
        hits += usize::from(min >= all && all >= maj);
        rows.push(format!("{min:.3}/{all:.3}/{maj:.3}"));
    }
    outcome(
        hits >= 3,
        format!("minority F1 with minority/all/majority caches {} ({hits}/5 ordered)", rows.join(", ")),
    )
}

fn criterion_overhead(runs: &[SeedRun], strong: &[Strong]) -> Outcome {
    let schedule = NoiseSchedule::desk();
    let (run, s) = (&runs[0], &strong[0]);
    let guide = InfluenceGuide::new(&run.clf.checkpoint, build_cache(&run.clf.checkpoint, &run.val).unwrap()).unwrap();
    let setup = setup(&s.denoiser, &schedule, vec![16, 16]);
    let (_, unguided) = setup.generate(&GuidanceSpec::none(), 7).unwrap();
    let (_, guided) = setup.generate(&setup.spec(&guide, 100.0), 7).unwrap();
    let cache_secs = time_cache_build(&run.clf.checkpoint, &run.train[..500]).unwrap();
    let rt = runtime_report(cache_secs, &guided, &unguided);
    outcome(
        rt.overhead_ratio <= 3.0 && cache_secs < 10.0,
        format!(
            "guided/unguided per-step cost {:.2}x ({:.1} us vs {:.1} us); cache build for 500 samples {:.3} s",
            rt.overhead_ratio,
            rt.guided_step_seconds * 1e6,
            rt.unguided_step_seconds * 1e6,
            cache_secs
        ),
    )
}

// Criterion 12 -----------------------------------------------------------

const PIPELINE: [&str; 9] = [
    "gen-data",
    "train-clf",
    "train-diff",
    "cache-grads",
    "sample",
    "eval-tstr",
    "eval-tsrtr",
    "sweep",
    "report",
];

const PIPELINE_CONFIG: &str = "\
seed = 11
data.n_samples = 600
denoiser.steps = 300
classifier.steps = 300
guidance.scale = 100
guidance.clip = 0.0003
sweep.scales = -100,-10,0,10,100
sweep.counts = 32,32
sweep.clip = 0.0003
sweep.clip_from = 0
";

fn run_pipeline(dir: &Path, config: &Path) -> Result<(), String> {
    for command in PIPELINE {
        let out = Command::new(env!("CARGO_BIN_EXE_tardiff"))
            .arg(command)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(dir)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{command}: {}", String::from_utf8_lossy(&out.stderr).trim()));
        }
    }
    Ok(())
}

fn manifest_without_timings(dir: &Path) -> Vec<serde_json::Value> {
    let text = std::fs::read_to_string(dir.join("manifest.jsonl")).unwrap();
    text.lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            let entry = v.as_object_mut().unwrap();
            entry.remove("wall_seconds");
            if entry["artifact"] == "runtime.json" {
                entry.remove("digest");
            }
            v
        })
        .collect()
}

fn criterion_reproducible(suite_start: Instant) -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("pipeline.cfg");
    std::fs::write(&config, PIPELINE_CONFIG).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    if let Err(e) = run_pipeline(&a, &config).and_then(|_| run_pipeline(&b, &config)) {
        return outcome(false, format!("pipeline failed: {e}"));
    }
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.jsonl" && n != "runtime.json")
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .collect();
    let manifests_match = manifest_without_timings(&a) == manifest_without_timings(&b);
    let pipeline_secs = start.elapsed().as_secs_f64();
    let suite_secs = suite_start.elapsed().as_secs_f64();
    outcome(
        differing.is_empty() && manifests_match && suite_secs < 1800.0,
        format!(
            "{} artifacts compared, {} differ, manifests match: {manifests_match}; pipeline x2 {pipeline_secs:.0} s, suite {suite_secs:.0} s",
            names.len(),
            differing.len()
        ),
    )
}

fn main() {
    let suite_start = Instant::now();
    // `cargo test -- --list` and filters are not meaningful for this suite.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("[{tag}] {n:>2} {name}: {}", o.detail);
    };
    report(1, "autodiff correctness", criterion_autodiff());
    report(2, "schedule and forward process", criterion_schedule());
    report(3, "zero-guidance equivalence", criterion_zero_guidance());
    report(4, "influence vs retraining oracle", criterion_oracle());
    report(5, "analytic guidance gradient", criterion_analytic_j());
    report(6, "metric oracles", criterion_metrics());

    let runs: Vec<SeedRun> = SEEDS.iter().map(|&s| seed_run(s)).collect();
    report(7, "gradient disparity", criterion_disparity(&runs));
    let strong: Vec<Strong> = runs
        .iter()
        .map(|run| {
            let start = Instant::now();
            let denoiser = denoiser_for(run, TrainSettings::denoiser().steps);
            Strong {
                denoiser,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect();
    report(8, "guidance-sweep monotonicity", criterion_sweep(&runs, &strong));
    report(9, "TSTR gain with a weak denoiser", criterion_tstr(&runs));
    report(10, "class-specific guidance", criterion_class_specific(&runs, &strong));
    report(11, "overhead bound", criterion_overhead(&runs, &strong));
    report(12, "end-to-end reproducibility", criterion_reproducible(suite_start));

    println!("acceptance: {} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
