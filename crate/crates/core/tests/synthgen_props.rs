use debias_cbm::numkit::{pearson, Matrix};
use debias_cbm::synthgen::{generate, generate_classification, Design, SynthConfig};
use proptest::prelude::*;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|r| m.row(r).to_vec()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

fn sample_std(m: &Matrix) -> f64 {
    let v = m.as_slice();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[test]
fn shapes_follow_config() {
    let d = generate(&SynthConfig {
        n: 500,
        dim: 100,
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    for m in [&d.x, &d.c, &d.y, &d.d_true, &d.u] {
        assert_eq!(m.shape(), (500, 100));
    }
}

#[test]
fn noiseless_unconfounded_concepts_equal_truth() {
    let d = generate(&SynthConfig {
        n: 50,
        dim: 6,
        seed: 3,
        noiseless: true,
        confounding_scale: 0.0,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(d.c, d.d_true);
    assert_eq!(d.d_true, d.y.matmul_t(&d.params.w1).unwrap());
}

/// Ratio of largest to smallest nonzero singular value. The orthogonal
/// design zeroes half of the spectrum of `W₁`, `W₂` and `W₄` on purpose, so
/// the cap applies to the retained part.
#[test]
fn orthogonal_design_caps_condition_number() {
    let d = generate(&SynthConfig {
        n: 10,
        dim: 100,
        seed: 7,
        design: Design::OrthogonalConfounding,
        ..Default::default()
    })
    .unwrap();
    let p = &d.params;
    for (name, w) in [("W1", &p.w1), ("W2", &p.w2), ("W3", &p.w3), ("W4", &p.w4)] {
        let eig = jacobi_eigenvalues(w);
        let nonzero: Vec<f64> = eig.iter().map(|v| v.abs()).filter(|v| *v > 1e-8).collect();
        let max = nonzero.iter().copied().fold(0.0, f64::max);
        let min = nonzero.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(max / min <= 10.0 + 1e-6, "{name}: condition {}", max / min);
        let expected = if name == "W3" { 100 } else { 50 };
        assert_eq!(nonzero.len(), expected, "{name}");
    }
    for other in [&p.w2, &p.w4] {
        assert!(p.w1.matmul(other).unwrap().max_abs() < 1e-8);
    }
}

#[test]
fn noise_moments_match_sigma() {
    for sigma in [0.02, 0.1] {
        let d = generate(&SynthConfig {
            n: 2000,
            dim: 50,
            noise_sigma: sigma,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        for eps in [&d.eps_d, &d.eps_x] {
            let s = sample_std(eps);
            assert!((s / sigma - 1.0).abs() < 0.05, "std {s} for sigma {sigma}");
        }
        let w = sample_std(&d.params.w1);
        assert!((w / 0.1 - 1.0).abs() < 0.05);
    }
}

#[test]
fn labels_and_confounders_are_uncorrelated() {
    let n = 20_000;
    let d = generate(&SynthConfig {
        n,
        dim: 8,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let bound = 4.0 / (n as f64).sqrt();
    for i in 0..8 {
        for j in 0..8 {
            let r = pearson(&d.y.column(i), &d.u.column(j)).unwrap();
            assert!(r.abs() < bound, "y{i} u{j}: {r}");
        }
    }
}

#[test]
fn classification_covers_all_classes() {
    let cfg = SynthConfig {
        n: 2000,
        dim: 10,
        seed: 12,
        num_classes: Some(20),
        ..Default::default()
    };
    let d = generate_classification(&cfg).unwrap();
    let ids = d.classes.clone().unwrap();
    for k in 0..20 {
        assert!(ids.contains(&k), "class {k} missing");
    }
    assert_eq!(generate_classification(&cfg).unwrap().classes.unwrap(), ids);
    assert_eq!(d.y.shape(), (2000, 20));
}

#[test]
fn jitter_free_class_means_are_mapped_prototypes() {
    let d = generate_classification(&SynthConfig {
        n: 400,
        dim: 6,
        seed: 2,
        num_classes: Some(2),
        class_jitter: 0.0,
        ..Default::default()
    })
    .unwrap();
    let ids = d.classes.as_ref().unwrap();
    let proto = d.params.prototypes.as_ref().unwrap();
    for k in 0..2 {
        let rows: Vec<usize> = (0..400).filter(|&r| ids[r] == k).collect();
        let mean = d.d_true.select_rows(&rows).column_means();
        let expect = Matrix::from_rows(&[proto.row(k)])
            .unwrap()
            .matmul_t(&d.params.w1)
            .unwrap();
        for (a, b) in mean.iter().zip(expect.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn invalid_configs_rejected() {
    let bad = [
        SynthConfig {
            n: 0,
            ..Default::default()
        },
        SynthConfig {
            dim: 1,
            ..Default::default()
        },
        SynthConfig {
            noise_sigma: 0.0,
            ..Default::default()
        },
        SynthConfig {
            w_sigma: -1.0,
            ..Default::default()
        },
        SynthConfig {
            dim: 7,
            design: Design::OrthogonalConfounding,
            ..Default::default()
        },
    ];
    for cfg in bad {
        assert!(generate(&cfg).is_err(), "{cfg:?}");
    }
    let too_many = SynthConfig {
        n: 5,
        num_classes: Some(6),
        ..Default::default()
    };
    assert!(generate_classification(&too_many).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reconstruction_identities_hold(
        seed in any::<u64>(),
        n in 1usize..40,
        half in 1usize..6,
        orthogonal in any::<bool>(),
        sigma in 0.01f64..0.5,
    ) {
        let design = if orthogonal { Design::OrthogonalConfounding } else { Design::FullyRandom };
        let d = generate(&SynthConfig { n, dim: 2 * half, noise_sigma: sigma, design, seed, ..Default::default() }).unwrap();
        let p = &d.params;
        let c = d.d_true.add(&d.eps_d).unwrap().add(&d.u.matmul_t(&p.w2).unwrap()).unwrap();
        prop_assert!(c.max_abs_diff(&d.c) < 1e-10);
        let x = d.d_true.matmul_t(&p.w3).unwrap()
            .add(&d.eps_d.matmul_t(&p.w3).unwrap()).unwrap()
            .add(&d.u.matmul_t(&p.w4).unwrap()).unwrap()
            .add(&d.eps_x).unwrap();
        prop_assert!(x.max_abs_diff(&d.x) < 1e-10);
    }
}
