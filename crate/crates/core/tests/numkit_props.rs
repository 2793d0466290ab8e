//! Properties and oracle comparisons for the linear-algebra layer: the QR
//! solve against raw normal equations, hat-matrix identities, and the
//! sandwich against an explicit dense-product evaluation.

mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tomadjust::numkit::{sandwich_variance, wls_fit, HcKind, Matrix, SandwichSpec};

use support::{normal_equations_wls, random_cre_instance, solve_dense, standard_normal};

#[test]
fn qr_matches_normal_equations_on_fixed_instance() {
    // 8x3 with weights 1..8.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|j| {
            (0..8)
                .map(|i| if j == 0 { 1.0 } else { standard_normal(&mut rng) + i as f64 * 0.1 })
                .collect()
        })
        .collect();
    let y: Vec<f64> = (0..8).map(|_| standard_normal(&mut rng) * 2.0 + 1.0).collect();
    let w: Vec<f64> = (1..=8).map(|v| v as f64).collect();

    let x = Matrix::from_columns(&cols).unwrap();
    let fit = wls_fit(&y, &x, &w).unwrap();
    let oracle = normal_equations_wls(&y, &cols, &w);
    for (got, want) in fit.coefficients.iter().zip(&oracle) {
        assert!(
            (got - want).abs() <= 1e-8 * want.abs().max(1.0),
            "qr {got} vs normal equations {want}"
        );
    }
}

#[test]
fn qr_matches_normal_equations_on_1000_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..1000 {
        let n = 6 + (trial % 30);
        let k = 1 + (trial % 4);
        let cols: Vec<Vec<f64>> = std::iter::once(vec![1.0; n])
            .chain((1..k).map(|_| (0..n).map(|_| standard_normal(&mut rng)).collect()))
            .collect();
        let y: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let w: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>() * 4.0).collect();

        let x = Matrix::from_columns(&cols).unwrap();
        let fit = wls_fit(&y, &x, &w).unwrap();
        let oracle = normal_equations_wls(&y, &cols, &w);
        for (got, want) in fit.coefficients.iter().zip(&oracle) {
            let scale = want.abs().max(1.0);
            assert!(
                (got - want).abs() <= 1e-8 * scale,
                "trial {trial}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn sandwich_matches_dense_product_oracle() {
    // Random 10x2 instance shaped like a CRE design (intercept + treatment).
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let z_col: Vec<f64> = (0..10).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
    let cols = vec![vec![1.0; 10], z_col];
    let y: Vec<f64> = (0..10).map(|_| standard_normal(&mut rng)).collect();
    let w: Vec<f64> = (0..10)
        .map(|i| if i < 4 { 1.0 / 0.4f64.powi(2) } else { 1.0 / 0.6f64.powi(2) })
        .collect();
    let x = Matrix::from_columns(&cols).unwrap();
    let fit = wls_fit(&y, &x, &w).unwrap();
    let d = [0.0, 1.0];

    for flavor in HcKind::ALL {
        let spec = SandwichSpec { flavor, df_columns: 2 };
        let got = sandwich_variance(&fit, &x, spec, &d).unwrap();

        // Oracle: assemble A = (X'WX)^-1 d by dense elimination, then the full
        // quadratic form sum_ij d'A x_i w_i D_ii w_j x_j' A d via loops.
        let k = cols.len();
        let n = y.len();
        let mut gram = vec![vec![0.0; k]; k];
        for a in 0..k {
            for b in 0..k {
                gram[a][b] = (0..n).map(|i| w[i] * cols[a][i] * cols[b][i]).sum();
            }
        }
        let u = solve_dense(&gram, &d);
        let eta = |i: usize| -> f64 {
            match flavor {
                HcKind::Hc0 => 1.0,
                HcKind::Hc1 => (n as f64 / (n - 2) as f64).sqrt(),
                HcKind::Hc2 => (1.0 - fit.leverages[i]).powf(-0.5),
                HcKind::Hc3 => (1.0 - fit.leverages[i]).recip(),
            }
        };
        let want: f64 = (0..n)
            .map(|i| {
                let xi_u: f64 = (0..k).map(|a| cols[a][i] * u[a]).sum();
                (w[i] * xi_u * eta(i) * fit.residuals[i]).powi(2)
            })
            .sum();
        assert!(
            (got - want).abs() <= 1e-10 * want.max(1.0),
            "{flavor:?}: {got} vs {want}"
        );
    }
}

#[test]
fn hat_matrix_is_idempotent_and_residuals_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let inst = random_cre_instance(12, 3, 2, &mut rng);
        let mut cols = vec![vec![1.0; 12]];
        cols.extend(inst.x_cols.iter().cloned());
        let w: Vec<f64> = (0..12).map(|_| 0.5 + rng.random::<f64>() * 2.0).collect();
        let x = Matrix::from_columns(&cols).unwrap();
        let fit = wls_fit(&inst.y, &x, &w).unwrap();

        // H = X (X'WX)^-1 X' W, assembled densely.
        let k = cols.len();
        let n = 12;
        let mut gram = vec![vec![0.0; k]; k];
        for a in 0..k {
            for b in 0..k {
                gram[a][b] = (0..n).map(|i| w[i] * cols[a][i] * cols[b][i]).sum();
            }
        }
        let mut h = vec![vec![0.0; n]; n];
        for j in 0..n {
            // Column j of H: X (X'WX)^-1 (w_j x_j).
            let rhs: Vec<f64> = (0..k).map(|a| w[j] * cols[a][j]).collect();
            let u = solve_dense(&gram, &rhs);
            for i in 0..n {
                h[i][j] = (0..k).map(|a| cols[a][i] * u[a]).sum();
            }
        }
        for i in 0..n {
            assert!((h[i][i] - fit.leverages[i]).abs() < 1e-8);
            for j in 0..n {
                let hh: f64 = (0..n).map(|l| h[i][l] * h[l][j]).sum();
                assert!((hh - h[i][j]).abs() < 1e-8, "H not idempotent at ({i},{j})");
            }
        }

        // X'W e = 0.
        for a in 0..k {
            let dot: f64 = (0..n).map(|i| cols[a][i] * w[i] * fit.residuals[i]).sum();
            assert!(dot.abs() < 1e-8, "weighted residual not orthogonal: {dot}");
        }

        // Leverage trace equals the column count.
        let trace: f64 = fit.leverages.iter().sum();
        assert!((trace - k as f64).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn leverages_lie_in_unit_interval(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 5 + (seed % 20) as usize;
        let k = 1 + (seed % 3) as usize;
        let cols: Vec<Vec<f64>> = std::iter::once(vec![1.0; n])
            .chain((0..k).map(|_| (0..n).map(|_| standard_normal(&mut rng)).collect()))
            .collect();
        let y: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let w: Vec<f64> = (0..n).map(|_| 0.25 + rng.random::<f64>() * 4.0).collect();
        let x = Matrix::from_columns(&cols).unwrap();
        let fit = wls_fit(&y, &x, &w).unwrap();
        for h in &fit.leverages {
            prop_assert!(*h >= -1e-10 && *h <= 1.0 + 1e-10, "leverage {h} out of range");
        }
        let trace: f64 = fit.leverages.iter().sum();
        prop_assert!((trace - (k + 1) as f64).abs() < 1e-8);
    }

    #[test]
    fn hc_flavors_are_ordered(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(31337));
        let n = 8 + (seed % 12) as usize;
        let cols: Vec<Vec<f64>> = vec![
            vec![1.0; n],
            (0..n).map(|_| standard_normal(&mut rng)).collect(),
        ];
        let y: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let x = Matrix::from_columns(&cols).unwrap();
        let fit = wls_fit(&y, &x, &vec![1.0; n]).unwrap();
        let d = [0.0, 1.0];
        let get = |flavor| {
            sandwich_variance(&fit, &x, SandwichSpec { flavor, df_columns: 2 }, &d).unwrap()
        };
        let (v0, v2, v3) = (get(HcKind::Hc0), get(HcKind::Hc2), get(HcKind::Hc3));
        prop_assert!(v0 <= v2 + 1e-15 && v2 <= v3 + 1e-15);
    }
}
