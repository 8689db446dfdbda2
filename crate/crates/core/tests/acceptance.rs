//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use voxnet::network::{build_paper_network, build_small_network, reassign_output_labels, Checkpoint, Network};
use voxnet::ops::{conv3d_forward, ConvGeometry};
use voxnet::optim::{cross_validate, evaluate_subjects, train, transfer_evaluate, Hyperparameters};
use voxnet::phantom::{generate, oracle_classify, PhantomSpec};
use voxnet::preprocess::{assemble_input, decode_volume, encode_volume};
use voxnet::rng::SeededRng;
use voxnet::stats::{
    cognitive_change, confusion_from_predictions, delong_test, mcnemar_test, pearson, roc_auc, structural_components,
    ScoredSample,
};
use voxnet::{Error, Tensor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Result<Outcome, Error>;
type GradientCheck = (&'static str, fn(u64) -> f64);

fn main() -> ExitCode {
    let criteria: [(&str, u64, Check); 11] = [
        ("shape fidelity", 1, shape_fidelity),
        ("convolution oracle", 30, convolution_oracle),
        ("gradient audit", 120, gradient_audit),
        ("overfit sanity", 120, overfit_sanity),
        ("end-to-end phantom study", 600, phantom_study),
        ("null control", 600, null_control),
        ("AUC correctness", 5, auc_correctness),
        ("DeLong properties", 5, delong_properties),
        ("McNemar and Pearson closed forms", 1, closed_forms),
        ("transfer protocol", 180, transfer_protocol),
        ("persistence", 5, persistence),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let (pass, detail) = match result {
            Ok(o) => (o.pass && in_time, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "acceptance {:>2} {:<34} {}  {} [{:.2} s / {} s]",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            detail,
            elapsed.as_secs_f64(),
            limit
        );
    }
    println!("acceptance: {} passed, {} failed", criteria.len() - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn shape_fidelity() -> Result<Outcome, Error> {
    let plan = build_paper_network().shape_plan()?;
    let conv1 = plan[0].clone();
    let fc_in = plan[plan.len() - 2].iter().product::<usize>();
    Ok(outcome(
        conv1 == [39, 39, 39, 64] && fc_in == 512,
        format!("conv1 {conv1:?}, fc inputs {fc_in}"),
    ))
}

fn convolution_oracle() -> Result<Outcome, Error> {
    let mut rng = SeededRng::new(0xC0);
    let cases = 250;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let k = [range(&mut rng, 1, 4), range(&mut rng, 1, 4), range(&mut rng, 1, 4)];
        let stride = [range(&mut rng, 1, 3), range(&mut rng, 1, 3), range(&mut rng, 1, 3)];
        let pb = [range(&mut rng, 0, 2), range(&mut rng, 0, 2), range(&mut rng, 0, 2)];
        let pa = [range(&mut rng, 0, 2), range(&mut rng, 0, 2), range(&mut rng, 0, 2)];
        let cin = range(&mut rng, 1, 3);
        let cout = range(&mut rng, 1, 4);
        let n: [usize; 4] = [0, 1, 2, 3].map(|a| {
            if a == 3 {
                cin
            } else {
                range(&mut rng, k[a].saturating_sub(pb[a] + pa[a]).max(1), 10)
            }
        });
        let round = |v: Vec<f64>| v.into_iter().map(|a| a as f32 as f64).collect::<Vec<_>>();
        let x = round(randn(&mut rng, n.iter().product()));
        let w = round(randn(&mut rng, k.iter().product::<usize>() * cin * cout));
        let b = round(randn(&mut rng, cout));
        let f32s = |v: &[f64]| v.iter().map(|&a| a as f32).collect::<Vec<_>>();
        let geom = ConvGeometry {
            stride,
            pad_before: pb,
            pad_after: pa,
        };
        let (y, _) = conv3d_forward(
            &Tensor::from_vec(&n, f32s(&x))?,
            &Tensor::from_vec(&[k[0], k[1], k[2], cin, cout], f32s(&w))?,
            Some(&Tensor::from_vec(&[cout], f32s(&b))?),
            &geom,
        )?;
        let (shape, oracle) = direct_conv(n, &x, k, cout, &w, Some(&b), stride, pb, pa);
        if y.shape() != shape {
            return Ok(outcome(false, format!("shape {:?} vs oracle {shape:?}", y.shape())));
        }
        let got: Vec<f64> = y.data().iter().map(|&v| v as f64).collect();
        worst = worst.max(rel_err(&got, &oracle));
    }
    Ok(outcome(worst < 1e-5, format!("{cases} shapes, max rel err {worst:.2e} (< 1e-5)")))
}

fn gradient_audit() -> Result<Outcome, Error> {
    let instances = 24;
    let checks: [GradientCheck; 6] = [
        ("conv", conv_gradient_error),
        ("relu", relu_gradient_error),
        ("maxpool", pool_gradient_error),
        ("fc", fc_gradient_error),
        ("softmax-xent", cross_entropy_gradient_error),
        ("network", network_gradient_error),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, f) in checks {
        let worst = (0..instances).map(|i| f(0xA0D1 + i)).fold(0.0, f64::max);
        pass &= worst < 1e-4;
        parts.push(format!("{name} {worst:.1e}"));
    }
    Ok(outcome(pass, format!("{instances} instances each, max rel err: {}", parts.join(", "))))
}

fn overfit_run() -> Result<(Checkpoint, Vec<f64>, Vec<voxnet::preprocess::Subject>), Error> {
    let spec = PhantomSpec {
        n_per_class: 8,
        effect_size: 10.0,
        seed: 4,
        ..Default::default()
    };
    let subjects = generate(&spec)?;
    let config = build_small_network([spec.extents[0], spec.extents[1], spec.extents[2], 2])?;
    let hp = Hyperparameters {
        epochs: 40,
        ..Default::default()
    };
    let out = train(&subjects, &config, &hp, 1)?;
    Ok((out.checkpoint, out.loss_curve, subjects))
}

fn overfit_sanity() -> Result<Outcome, Error> {
    let (ckpt, curve, subjects) = overfit_run()?;
    let (_, again, _) = overfit_run()?;
    let identical = curve.len() == again.len() && curve.iter().zip(&again).all(|(a, b)| a.to_bits() == b.to_bits());
    let evals = evaluate_subjects(&ckpt, &subjects)?;
    let correct = evals.iter().filter(|e| Some(e.predicted) == e.true_label).count();
    let final_loss = *curve.last().expect("epochs > 0");
    Ok(outcome(
        identical && correct == subjects.len() && final_loss < 0.01,
        format!(
            "train acc {correct}/{}, final loss {final_loss:.2e} (< 0.01), repeat run bit-identical: {identical}",
            subjects.len()
        ),
    ))
}

struct StudyResult {
    auc: f64,
    conv_score_auc: f64,
    accuracy: f64,
    oracle_auc: f64,
}

fn phantom_cv(effect_size: f64) -> Result<StudyResult, Error> {
    let spec = PhantomSpec {
        effect_size,
        seed: 11,
        ..Default::default()
    };
    let subjects = generate(&spec)?;
    let config = build_small_network([spec.extents[0], spec.extents[1], spec.extents[2], 2])?;
    let hp = Hyperparameters {
        epochs: 30,
        folds: 5,
        seed: 7,
        ..Default::default()
    };
    let cv = cross_validate(&subjects, &config, &hp)?;
    let by_log_odds = cv.scored_log_odds()?;
    Ok(StudyResult {
        auc: roc_auc(&by_log_odds)?.auc,
        conv_score_auc: roc_auc(&cv.scored()?)?.auc,
        accuracy: confusion_from_predictions(&by_log_odds)?.accuracy()?,
        oracle_auc: roc_auc(&oracle_classify(&subjects, &spec)?)?.auc,
    })
}

fn phantom_study() -> Result<Outcome, Error> {
    let r = phantom_cv(5.0)?;
    Ok(outcome(
        r.auc >= 0.95 && r.accuracy >= 0.90 && r.auc >= r.oracle_auc - 0.05,
        format!(
            "out-of-fold AUC {:.3} (>= 0.95), accuracy {:.3} (>= 0.90), oracle AUC {:.3}; pooled raw ConvScore AUC {:.3}",
            r.auc, r.accuracy, r.oracle_auc, r.conv_score_auc
        ),
    ))
}

fn null_control() -> Result<Outcome, Error> {
    let r = phantom_cv(0.0)?;
    Ok(outcome(
        (0.35..=0.65).contains(&r.auc),
        format!(
            "out-of-fold AUC {:.3} (in [0.35, 0.65]), accuracy {:.3}; pooled raw ConvScore AUC {:.3}",
            r.auc, r.accuracy, r.conv_score_auc
        ),
    ))
}

fn auc_correctness() -> Result<Outcome, Error> {
    let mut rng = SeededRng::new(0xA0C);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = range(&mut rng, 2, 200);
        let s = random_scored(&mut rng, n, i % 2 == 0);
        worst = worst.max((roc_auc(&s)?.auc - mann_whitney_auc(&s)).abs());
    }
    Ok(outcome(worst <= 1e-12, format!("100 sets (half with ties), max |diff| {worst:.1e} (<= 1e-12)")))
}

fn fixed_ten(scores: [f64; 10]) -> Vec<ScoredSample> {
    scores.iter().enumerate().map(|(i, &s)| sample(i, usize::from(i >= 5), s)).collect()
}

fn delong_properties() -> Result<Outcome, Error> {
    let mut rng = SeededRng::new(0xDE1);
    let mut self_ok = true;
    let mut worst_dz: f64 = 0.0;
    for i in 0..50 {
        let n = range(&mut rng, 6, 150);
        let mut a = random_scored(&mut rng, n, i % 2 == 0);
        a[2].true_label = 0;
        a[3].true_label = 1;
        let t = delong_test(&a, &a)?;
        self_ok &= t.p_value == 1.0;
        let b: Vec<ScoredSample> = a
            .iter()
            .map(|s| ScoredSample {
                score: s.score + 0.8 * rng.standard_normal(),
                ..s.clone()
            })
            .collect();
        let warped: Vec<ScoredSample> = a
            .iter()
            .map(|s| ScoredSample {
                score: (3.0 * s.score).exp() + 7.0,
                ..s.clone()
            })
            .collect();
        let z = delong_test(&a, &b)?.statistic;
        let zw = delong_test(&warped, &b)?.statistic;
        if z.is_finite() {
            worst_dz = worst_dz.max((z - zw).abs());
        }
    }
    // Positives 0.9 0.8 0.7 0.55 0.4, negatives 0.6 0.5 0.45 0.3 0.2.
    let c = structural_components(&fixed_ten([0.9, 0.8, 0.7, 0.55, 0.4, 0.6, 0.5, 0.45, 0.3, 0.2]))?;
    let hand_v10 = [1.0, 1.0, 1.0, 0.8, 0.4];
    let hand_v01 = [0.6, 0.8, 0.8, 1.0, 1.0];
    let comp_err = c
        .v10
        .iter()
        .zip(hand_v10)
        .chain(c.v01.iter().zip(hand_v01))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(outcome(
        self_ok && worst_dz < 1e-9 && comp_err < 1e-10,
        format!(
            "self-comparison p = 1 on 50 sets: {self_ok}; max |dz| under monotone transform {worst_dz:.1e} (< 1e-9); component err {comp_err:.1e} (< 1e-10)"
        ),
    ))
}

fn closed_forms() -> Result<Outcome, Error> {
    let exact = mcnemar_test(&[true; 10], &[false; 10])?.p_value;
    let exact_err = (exact - 2.0 * 2f64.powi(-10)).abs();
    let a: Vec<bool> = (0..16).map(|i| !(6..12).contains(&i)).collect();
    let b: Vec<bool> = (0..16).map(|i| i >= 6).collect();
    let tie = mcnemar_test(&a, &b)?.p_value;
    let t = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0])?;
    // r = 8 / 10; Student t with 3 df at t / sqrt(3) = 4/3.
    let u: f64 = 4.0 / 3.0;
    let p = 1.0 - 2.0 / std::f64::consts::PI * (u.atan() + u / (1.0 + u * u));
    let r_err = (t.statistic - 0.8).abs();
    let p_err = (t.p_value - p).abs();
    Ok(outcome(
        exact_err < 1e-15 && tie == 1.0 && r_err < 1e-10 && p_err < 1e-10,
        format!(
            "mcnemar b=10,c=0 p = {exact:.9}, b=c p = {tie}; pearson r err {r_err:.1e}, p err {p_err:.1e}"
        ),
    ))
}

fn transfer_protocol() -> Result<Outcome, Error> {
    let source = PhantomSpec {
        n_per_class: 20,
        seed: 31,
        ..Default::default()
    };
    let subjects = generate(&source)?;
    let config = build_small_network([source.extents[0], source.extents[1], source.extents[2], 2])?;
    let hp = Hyperparameters {
        epochs: 20,
        ..Default::default()
    };
    let ckpt = train(&subjects, &config, &hp, 2)?.checkpoint;

    let cohort = generate(&PhantomSpec {
        n_per_class: 20,
        seed: 32,
        coupling: Some(1.0),
        ..Default::default()
    })?;
    let evals = transfer_evaluate(&ckpt, &cohort)?;
    let direct = Network::new(reassign_output_labels(&ckpt.config, "converter", "nonconverter"), ckpt.params.clone())?;
    let mut identical = true;
    for (e, s) in evals.iter().zip(&cohort) {
        let input = assemble_input(s, ckpt.params.modality_means, config.input_shape[2])?;
        identical &= e.conv_score.to_bits() == direct.conv_score(&input)?.to_bits();
    }
    let mut scores = Vec::new();
    let mut decline = Vec::new();
    for (e, s) in evals.iter().zip(&cohort) {
        if let Some(d) = cognitive_change(s, "cdr_sb", 36)? {
            scores.push(e.conv_score);
            decline.push(d);
        }
    }
    let t = pearson(&scores, &decline)?;
    Ok(outcome(
        identical && t.statistic > 0.0 && t.p_value < 0.05,
        format!(
            "ConvScore bit-identical: {identical}; r(ConvScore, 36-month CDR-SB change) = {:.3}, p = {:.2e} (n = {})",
            t.statistic,
            t.p_value,
            scores.len()
        ),
    ))
}

fn persistence() -> Result<Outcome, Error> {
    let config = build_small_network([40, 40, 24, 2])?;
    let mut params = Network::<f32>::init(config.clone(), 5)?.params;
    params.modality_means = [12.5, 101.25];
    let ckpt = Checkpoint {
        config,
        params,
        meta: Default::default(),
    };
    let bytes = ckpt.to_bytes()?;
    let back = Checkpoint::from_bytes(&bytes)?;
    let ckpt_exact = back.to_bytes()? == bytes
        && back
            .params
            .tensors()
            .zip(ckpt.params.tensors())
            .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));

    let vol = Tensor::<f32>::random_normal(&[7, 5, 3], 0.0, 10.0, 9)?;
    let vol_back = decode_volume(&encode_volume(&vol))?;
    let nvol_exact = vol_back.shape() == vol.shape()
        && vol.data().iter().zip(vol_back.data()).all(|(a, b)| a.to_bits() == b.to_bits());

    let mut bad = bytes.clone();
    let pos = bytes.len() / 2;
    bad[pos] ^= 0x01;
    let rejected = matches!(Checkpoint::from_bytes(&bad), Err(Error::Checksum { .. }));
    Ok(outcome(
        ckpt_exact && nvol_exact && rejected,
        format!("checkpoint bit-exact: {ckpt_exact}; NVOL bit-exact: {nvol_exact}; flipped byte rejected by checksum: {rejected}"),
    ))
}
