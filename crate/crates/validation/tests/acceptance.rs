//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each and exits non-zero if any criterion fails.
//!
//! Run alone with `cargo test --release -p debias-cbm-validation --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use debias_cbm::cbm::{
    fit_debiased_cbm, fit_linear_gaussian, fit_regular_linear, CbmConfig, DebiaserKind, HeadKind,
};
use debias_cbm::eval::tables::{write_evidence, write_roar, write_scaling};
use debias_cbm::eval::{
    evidence_experiment, map_annotation, roar_run, scaling_experiment, Method, RoarConfig,
    ScalingResult, DEFAULT_MASK_FRACTIONS,
};
use debias_cbm::nnet::{gradient_check, Activation, Loss, MlpSpec, TrainConfig};
use debias_cbm::numkit::{
    mat_mul, pearson, random_gaussian, solve_least_squares, spearman, RngStream,
};
use debias_cbm::synthgen::{generate, generate_classification, Design, Split, SynthConfig};
use debias_cbm::Labels;

#[path = "../../core/tests/common/mod.rs"]
mod common;
use common::{mc_ridge_oracle, naive_pearson, naive_ranks, normal_equations, triple_loop};

const MASTER_SEED: u64 = 20_240_601;
const SCALING_NS: [usize; 4] = [100, 1_000, 10_000, 100_000];
const SCALING_SEEDS: usize = 3;
const SCALING_BUDGET: Duration = Duration::from_secs(300);
/// Floor for the debiased correlation at n = 1e5 in the orthogonal design.
/// Pilot runs at this master seed gave 0.993 to 0.995 per replicate.
const ORTHOGONAL_FLOOR: f64 = 0.98;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scaling_grid(design: Design, noise_sigma: f64) -> (ScalingResult, Duration) {
    let base = SynthConfig {
        dim: 100,
        noise_sigma,
        design,
        seed: MASTER_SEED,
        ..Default::default()
    };
    let start = Instant::now();
    let res = scaling_experiment(&base, &SCALING_NS, SCALING_SEEDS, 1).expect("scaling grid");
    (res, start.elapsed())
}

fn means(res: &ScalingResult, n: usize) -> (f64, f64) {
    (
        res.mean(n, Method::Regular).unwrap_or(f64::NAN),
        res.mean(n, Method::Debiased).unwrap_or(f64::NAN),
    )
}

fn curve(res: &ScalingResult) -> String {
    SCALING_NS
        .iter()
        .map(|&n| {
            let (r, d) = means(res, n);
            format!("n={n}: reg {r:.4} deb {d:.4}")
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Debiased strictly above regular at every n ≥ 1e3, and the gap at 1e5
/// stays above 0.02.
fn random_design_ordering(res: &ScalingResult) -> bool {
    let ordered = SCALING_NS.iter().filter(|&&n| n >= 1_000).all(|&n| {
        let (r, d) = means(res, n);
        d > r
    });
    let (r, d) = means(res, 100_000);
    ordered && r < d - 0.02 && res.failures().count() == 0
}

/// Regular strictly below debiased at every n.
fn orthogonal_ordering(res: &ScalingResult) -> bool {
    SCALING_NS.iter().all(|&n| {
        let (r, d) = means(res, n);
        r < d
    }) && res.failures().count() == 0
}

fn criterion_1() -> Outcome {
    let (res, took) = scaling_grid(Design::FullyRandom, 0.02);
    let ok = random_design_ordering(&res) && took <= SCALING_BUDGET;
    outcome(ok, format!("{} ({:.0?})", curve(&res), took))
}

fn criterion_2() -> Outcome {
    let (res, took) = scaling_grid(Design::OrthogonalConfounding, 0.02);
    let (_, top) = means(&res, 100_000);
    let ok = top >= ORTHOGONAL_FLOOR && orthogonal_ordering(&res) && took <= SCALING_BUDGET;
    outcome(ok, format!("{} ({:.0?})", curve(&res), took))
}

fn criterion_3() -> Outcome {
    let (random, _) = scaling_grid(Design::FullyRandom, 0.1);
    let (orthogonal, _) = scaling_grid(Design::OrthogonalConfounding, 0.1);
    let ok = random_design_ordering(&random) && orthogonal_ordering(&orthogonal);
    outcome(
        ok,
        format!(
            "random [{}] orthogonal [{}]",
            curve(&random),
            curve(&orthogonal)
        ),
    )
}

fn criterion_4() -> Outcome {
    let n = 500;
    let data = generate(&SynthConfig {
        n,
        dim: 10,
        seed: 1,
        ..Default::default()
    })
    .expect("data");
    let split = Split::by_index(n);
    let x = data.x.select_rows(&split.train);
    let c = data.c.select_rows(&split.train);
    let y = data.y.select_rows(&split.train);
    let x_test = data.x.select_rows(&split.test);
    let closed = fit_linear_gaussian(&x, &c, &y).expect("closed form");
    let mc_samples = 10_000;
    // Full-batch Adam: the concept means are poorly conditioned and
    // minibatch noise keeps the head away from the optimum.
    let cfg = CbmConfig {
        head: HeadKind::linear_network(),
        head_train: TrainConfig {
            epochs: 1000,
            learning_rate: 0.3,
            batch_size: x.rows(),
            patience: None,
            ..Default::default()
        },
        mc_samples,
        seed: 1,
        ..Default::default()
    };
    let mc = fit_debiased_cbm(&x, &c, &Labels::Real(y.clone()), &cfg, None).expect("mc fit");
    let reference = closed.predict(&x_test).expect("predict");
    let got = mc.predict(&x_test).expect("predict");
    let rel = got.sub(&reference).unwrap().frobenius_norm() / reference.frobenius_norm();
    // Where the Monte Carlo objective itself bottoms out at this draw count.
    let dist = &closed.concept_dist;
    let floor_pred = mc_ridge_oracle(
        &dist.mean(&x).unwrap(),
        &dist.variance,
        &y,
        mc_samples,
        &dist.mean(&x_test).unwrap(),
    );
    let floor = floor_pred.sub(&reference).unwrap().frobenius_norm() / reference.frobenius_norm();
    outcome(
        rel < 1e-2,
        format!("relative error {rel:.3e} (tolerance 1e-2; exact minimiser of the MC objective sits at {floor:.3e})"),
    )
}

fn criterion_5() -> Outcome {
    let n = 10_000;
    let data = generate(&SynthConfig {
        n,
        dim: 100,
        design: Design::OrthogonalConfounding,
        seed: MASTER_SEED,
        ..Default::default()
    })
    .expect("data");
    let split = Split::by_index(n);
    let x = data.x.select_rows(&split.train);
    let c = data.c.select_rows(&split.train);
    let y = data.y.select_rows(&split.train);
    let deb = fit_linear_gaussian(&x, &c, &y)
        .unwrap()
        .concept_means(&data.x)
        .unwrap();
    let reg = fit_regular_linear(&x, &c, &y)
        .unwrap()
        .concept_means(&data.x)
        .unwrap();
    let bound = 4.0 / (n as f64).sqrt();
    let w2 = &data.params.w2;
    let confounded: Vec<usize> = (0..100)
        .filter(|&j| w2.row(j).iter().any(|&v| v != 0.0))
        .collect();
    let rho =
        |m: &debias_cbm::Matrix, j: usize| pearson(&m.column(j), &data.u.column(j)).unwrap().abs();
    let deb_within = (0..100).filter(|&j| rho(&deb, j) < bound).count() as f64 / 100.0;
    let reg_violate = confounded
        .iter()
        .filter(|&&j| rho(&reg, j) >= bound)
        .count() as f64
        / confounded.len().max(1) as f64;
    outcome(
        deb_within >= 0.95 && reg_violate >= 0.20 && !confounded.is_empty(),
        format!(
            "debiased within 4/sqrt(n) on {:.0}% of coordinates, regular outside on {:.0}% of {} confounded",
            100.0 * deb_within,
            100.0 * reg_violate,
            confounded.len()
        ),
    )
}

fn roar_config() -> RoarConfig {
    RoarConfig {
        cbm: CbmConfig {
            debiaser: DebiaserKind::ClassMean,
            head_train: TrainConfig {
                epochs: 20,
                learning_rate: 0.01,
                batch_size: 64,
                ..Default::default()
            },
            mc_samples: 25,
            ..Default::default()
        },
        mask_fractions: DEFAULT_MASK_FRACTIONS.to_vec(),
        repeats: 3,
        top_k: 1,
        seed: 1,
    }
}

fn criterion_6() -> Outcome {
    let data = generate_classification(&SynthConfig {
        n: 5000,
        dim: 20,
        num_classes: Some(20),
        seed: 1,
        ..Default::default()
    })
    .expect("data");
    let curve = roar_run(&data, &roar_config(), 1).expect("roar");
    let deb = curve.normalized_means(Method::Debiased);
    let reg = curve.normalized_means(Method::Regular);
    let above = deb.iter().zip(&reg).all(|(d, r)| d >= r);
    let at_zero = curve
        .records
        .iter()
        .filter(|r| r.fraction == 0.0)
        .all(|r| r.normalized_accuracy == 1.0);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        above && at_zero,
        format!("debiased [{}] regular [{}]", fmt(&deb), fmt(&reg)),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = RngStream::new(MASTER_SEED).child("gradcheck");
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for loss in [Loss::Mse, Loss::SoftmaxCrossEntropy] {
        for skip in [false, true] {
            for activation in [Activation::Relu, Activation::Tanh] {
                for _ in 0..3 {
                    let mut sizes = vec![1 + rng.below(6)];
                    for _ in 0..1 + rng.below(3) {
                        sizes.push(1 + rng.below(8));
                    }
                    sizes.push(2 + rng.below(4));
                    let spec = MlpSpec::new(sizes)
                        .with_activation(activation)
                        .with_skip(skip);
                    let err = gradient_check(&spec, loss, 5, rng.next_u64()).expect("gradcheck");
                    worst = worst.max(err);
                    count += 1;
                }
            }
        }
    }
    outcome(
        worst < 1e-4 && count >= 20,
        format!("{count} architectures, max relative error {worst:.2e}"),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = RngStream::new(MASTER_SEED).child("oracles");
    let mut spearman_err: f64 = 0.0;
    for trial in 0..100 {
        let n = 5 + rng.below(60);
        let mut draw = || -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if trial % 2 == 0 {
                        rng.below(6) as f64
                    } else {
                        rng.standard_normal()
                    }
                })
                .collect()
        };
        let a = draw();
        let b = draw();
        let oracle = naive_pearson(&naive_ranks(&a), &naive_ranks(&b));
        spearman_err = match spearman(&a, &b) {
            Ok(r) => spearman_err.max((r - oracle).abs()),
            Err(_) if !oracle.is_finite() => spearman_err,
            Err(_) => f64::INFINITY,
        };
    }
    let mut lstsq_err: f64 = 0.0;
    for (n, p, k) in [(50, 4, 2), (300, 12, 3), (1000, 30, 2)] {
        let x = random_gaussian(&mut rng, n, p, 1.0);
        let y = random_gaussian(&mut rng, n, k, 1.0);
        let fit = solve_least_squares(&x, &y, 0.0).unwrap();
        let (beta, intercept) = normal_equations(&x, &y);
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..k {
            for i in 0..p {
                num += (fit.weights[(j, i)] - beta[i][j]).powi(2);
                den += beta[i][j].powi(2);
            }
            num += (fit.intercept[j] - intercept[j]).powi(2);
            den += intercept[j].powi(2);
        }
        lstsq_err = lstsq_err.max((num / den).sqrt());
    }
    let mut matmul_err: f64 = 0.0;
    for (m, k, n) in [(7, 5, 3), (64, 64, 64), (100, 37, 129)] {
        let a = random_gaussian(&mut rng, m, k, 1.0);
        let b = random_gaussian(&mut rng, k, n, 1.0);
        matmul_err = matmul_err.max(mat_mul(&a, &b).unwrap().max_abs_diff(&triple_loop(&a, &b)));
    }
    outcome(
        spearman_err < 1e-12 && lstsq_err < 1e-8 && matmul_err < 1e-12,
        format!(
            "spearman {spearman_err:.1e}, least squares {lstsq_err:.1e}, mat_mul {matmul_err:.1e}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let table = [
        (true, 4, 6.0),
        (true, 3, 5.0),
        (true, 2, 4.0),
        (true, 1, 3.0),
        (false, 1, 3.0),
        (false, 2, 2.0),
        (false, 3, 1.0),
        (false, 4, 0.0),
    ];
    let exact = table.iter().filter(|(e, code, sixths)| {
        map_annotation(*e, *code).map(f64::to_bits).ok() == Some((sixths / 6.0f64).to_bits())
    });
    let hits = exact.count();
    outcome(
        hits == table.len(),
        format!("{hits}/{} rows bit-exact", table.len()),
    )
}

fn criterion_10() -> Outcome {
    let base = SynthConfig {
        dim: 20,
        seed: MASTER_SEED,
        ..Default::default()
    };
    let scaling = |jobs: usize| {
        let mut buf = Vec::new();
        write_scaling(
            &mut buf,
            &scaling_experiment(&base, &[100, 1000, 5000], 3, jobs).unwrap(),
        )
        .unwrap();
        buf
    };
    let data = generate_classification(&SynthConfig {
        n: 1500,
        dim: 10,
        num_classes: Some(5),
        seed: MASTER_SEED,
        ..Default::default()
    })
    .unwrap();
    let mut cfg = roar_config();
    cfg.cbm.head_train.epochs = 3;
    cfg.mask_fractions = vec![0.0, 0.3, 0.7];
    cfg.repeats = 2;
    let roar = |jobs: usize| {
        let mut buf = Vec::new();
        write_roar(&mut buf, &roar_run(&data, &cfg, jobs).unwrap()).unwrap();
        buf
    };
    let evidence = || {
        let mut buf = Vec::new();
        write_evidence(&mut buf, &evidence_experiment(&data).unwrap()).unwrap();
        buf
    };
    let same_scaling = scaling(1) == scaling(4);
    let same_roar = roar(1) == roar(4);
    let same_evidence = evidence() == evidence();
    outcome(
        same_scaling && same_roar && same_evidence,
        format!("scaling {same_scaling}, roar {same_roar}, evidence {same_evidence} (jobs 1 vs 4)"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 scaling, random design", criterion_1),
        ("2 scaling, orthogonal design", criterion_2),
        ("3 scaling, high noise", criterion_3),
        ("4 linear-Gaussian vs Monte Carlo", criterion_4),
        ("5 instrument property", criterion_5),
        ("6 ROAR ordering", criterion_6),
        ("7 gradient suite", criterion_7),
        ("8 oracle equivalences", criterion_8),
        ("9 annotation mapping", criterion_9),
        ("10 determinism across jobs", criterion_10),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .map(|a| a.to_lowercase())
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| name.to_lowercase().contains(f.as_str()))
        {
            continue;
        }
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {name}: {} [{:.1?}] {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed(),
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
