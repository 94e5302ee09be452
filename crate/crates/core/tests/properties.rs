use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use nonstgm::model::{simulate, TimeSeriesPanel, TvVarModel};
use nonstgm::oracle::{covariance_section, fourier_coeff_k, local_spectral_precision};
use nonstgm::regress::{
    complex_group_lasso_with, lambda_max, LassoOptions, NodeFit, NodewiseFitSet, NodewiseProblem, UpdateRule,
};
use nonstgm::select::{
    rank_gap_threshold, select_graph, weight_matrices, EdgeKind, NonStGraph, Rule, Threshold, WeightMatrices,
};
use nonstgm::spectral::{dft, dual_frequency_precision, wrap_index, wrapped_offset};
use nonstgm::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cmax(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn random_panel(n: usize, p: usize, seed: u64) -> TimeSeriesPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TimeSeriesPanel::new(DMatrix::from_fn(n, p, |_, _| rng.random_range(-3.0..3.0)), None).unwrap()
}

fn random_stable_var(p: usize, seed: u64) -> TvVarModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Row sums of |A| below 0.9 keep the spectral radius below 0.9.
    let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-0.9..0.9) / p as f64);
    TvVarModel::constant(&[a], DMatrix::identity(p, p)).unwrap()
}

fn random_problem(rows: usize, cols: usize, seed: u64) -> NodewiseProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = DMatrix::from_fn(rows, cols, |_, _| {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let beta = DVector::from_fn(cols, |_, _| {
        if rng.random_bool(0.3) {
            c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
        } else {
            c(0.0, 0.0)
        }
    });
    let noise = DVector::from_fn(rows, |_, _| c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
    NodewiseProblem {
        a: 0,
        k: 1,
        response: &design * beta + noise,
        design,
        column_map: (0..cols).map(|j| (j + 1, 0)).collect(),
        row_frequencies: (1..=rows).collect(),
    }
}

fn random_fits(p: usize, nu: usize, seed: u64) -> NodewiseFitSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 8;
    let mut fits = Vec::new();
    for a in 0..p {
        for k in 1..=n {
            let mut f = NodeFit::zero(a, k, p, nu);
            for (i, z) in f.coefficients.iter_mut().enumerate() {
                if i != nu * p + a && rng.random_bool(0.5) {
                    *z = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                }
            }
            fits.push(f);
        }
    }
    NodewiseFitSet { n, p, nu, m: 2, fits }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dft_conjugate_symmetry_and_parseval(n in 2usize..64, p in 1usize..4, seed in any::<u64>()) {
        let x = random_panel(n, p, seed);
        let j = dft(&x);
        for a in 0..p {
            for k in 1..=n {
                prop_assert!((j.get(n as i64 - k as i64, a) - j.get(k as i64, a).conj()).norm() < 1e-9);
            }
            let energy: f64 = x.data().column(a).iter().map(|v| v * v).sum();
            let spectral: f64 = (1..=n).map(|k| j.get(k as i64, a).norm_sqr()).sum();
            prop_assert!((energy - spectral).abs() <= 1e-9 * energy.max(1.0));
        }
    }

    #[test]
    fn dual_frequency_precision_is_hermitian(p in 1usize..3, n in 3usize..14, seed in any::<u64>()) {
        let m = random_stable_var(p, seed);
        let k = dual_frequency_precision(&covariance_section(&m, n).unwrap()).unwrap();
        prop_assert!(cmax(&(&k.matrix - k.matrix.adjoint())) < 1e-10);
    }

    #[test]
    fn local_precision_is_hermitian_positive(p in 1usize..4, seed in any::<u64>(), w in 0.0f64..(2.0 * PI), u in 0.0f64..=1.0) {
        let m = random_stable_var(p, seed);
        let g = local_spectral_precision(&m, u, w).unwrap().gamma;
        prop_assert!(cmax(&(&g - g.adjoint())) < 1e-12);
        let min_eig = nalgebra::DMatrix::from_fn(2 * p, 2 * p, |r, s| {
            // Real symmetric embedding [[Re, −Im], [Im, Re]] has the same spectrum, doubled.
            let z = g[(r % p, s % p)];
            match (r < p, s < p) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        })
        .symmetric_eigenvalues()
        .min();
        prop_assert!(min_eig > 0.0);
    }

    #[test]
    fn fourier_coefficients_conjugate_symmetric(p in 1usize..3, r in -4i64..=4, w in 0.0f64..(2.0 * PI), seed in any::<u64>()) {
        let m = random_stable_var(p, seed);
        let kp = fourier_coeff_k(&m, r, w, 64).unwrap();
        let km = fourier_coeff_k(&m, -r, w, 64).unwrap();
        prop_assert!(cmax(&(kp - km.adjoint())) < 1e-12);
    }

    #[test]
    fn wrapping_stays_in_range(k in -10_000i64..10_000, n in 1usize..500, k1 in 1usize..500, k2 in 1usize..500) {
        let w = wrap_index(k, n);
        prop_assert!((1..=n).contains(&w));
        prop_assert_eq!((w as i64 - k).rem_euclid(n as i64), 0);
        let (k1, k2) = (k1.min(n).max(1), k2.min(n).max(1));
        let r = wrapped_offset(k1, k2, n);
        prop_assert!(2 * r.abs() <= n as i64);
        prop_assert_eq!((r - (k2 as i64 - k1 as i64)).rem_euclid(n as i64), 0);
    }

    #[test]
    fn lasso_satisfies_kkt_and_matches_real_group_update(rows in 5usize..60, cols in 1usize..10, frac in 0.02f64..1.2, seed in any::<u64>()) {
        let pr = random_problem(rows, cols, seed);
        let lambda = frac * lambda_max(&pr);
        let opts = LassoOptions { trace: true, ..Default::default() };
        let sol = complex_group_lasso_with(&pr, lambda, &opts, None).unwrap();
        prop_assert!(sol.kkt_residual <= 1e-6);
        prop_assert!(sol.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)));
        if frac >= 1.0 {
            prop_assert!(sol.beta.iter().all(|z| *z == c(0.0, 0.0)));
        }
        let fixed = LassoOptions { fixed_sweeps: Some(4), ..Default::default() };
        let a = complex_group_lasso_with(&pr, lambda, &fixed, None).unwrap().beta;
        let b = complex_group_lasso_with(&pr, lambda, &LassoOptions { update: UpdateRule::RealGroup, ..fixed }, None).unwrap().beta;
        prop_assert!((a - b).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn weights_scale_quadratically(p in 2usize..5, nu in 0usize..3, scale in 1.01f64..20.0, seed in any::<u64>()) {
        let fits = random_fits(p, nu, seed);
        let mut scaled = fits.clone();
        scaled.fits.iter_mut().flat_map(|f| f.coefficients.iter_mut()).for_each(|z| *z *= scale);
        let w = weight_matrices(&fits).unwrap();
        let ws = weight_matrices(&scaled).unwrap();
        let s2 = scale * scale;
        prop_assert!((&ws.w_self - &w.w_self * s2).amax() <= 1e-9 * ws.w_self.amax().max(1.0));
        prop_assert!((&ws.w_other - &w.w_other * s2).amax() <= 1e-9 * ws.w_other.amax().max(1.0));
        for a in 0..p {
            prop_assert_eq!(w.w_self[(a, a)], 0.0);
        }
        for rule in [Rule::And, Rule::Or] {
            prop_assert_eq!(
                select_graph(&w, rule, Threshold::RankGap, Threshold::RankGap),
                select_graph(&ws, rule, Threshold::RankGap, Threshold::RankGap)
            );
        }
    }

    #[test]
    fn and_rule_edges_are_or_rule_edges(p in 2usize..6, t in 0.0f64..3.0, seed in any::<u64>()) {
        let w = weight_matrices(&random_fits(p, 1, seed)).unwrap();
        let and = select_graph(&w, Rule::And, Threshold::Value(t), Threshold::Value(t));
        let or = select_graph(&w, Rule::Or, Threshold::Value(t), Threshold::Value(t));
        for (a, b, _) in and.edges() {
            prop_assert!(or.edge(a, b).is_some());
        }
    }

    #[test]
    fn and_rule_is_transpose_invariant(p in 2usize..6, seed in any::<u64>()) {
        let w = weight_matrices(&random_fits(p, 1, seed)).unwrap();
        let wt = WeightMatrices { w_self: w.w_self.transpose(), w_other: w.w_other.transpose(), frequencies: w.frequencies.clone() };
        prop_assert_eq!(
            select_graph(&w, Rule::And, Threshold::RankGap, Threshold::RankGap),
            select_graph(&wt, Rule::And, Threshold::RankGap, Threshold::RankGap)
        );
    }

    #[test]
    fn rank_gap_threshold_is_within_range(values in proptest::collection::vec(0.0f64..100.0, 1..30)) {
        let t = rank_gap_threshold(&values);
        let max = values.iter().copied().fold(0.0, f64::max);
        prop_assert!(t >= 0.0 && t <= max);
    }

    #[test]
    fn graph_text_round_trip(p in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = NonStGraph::new(p);
        for a in 0..p {
            g.set_nonstationary(a, rng.random_bool(0.5));
            for b in a + 1..p {
                if rng.random_bool(0.4) {
                    let kind = if rng.random_bool(0.5) { EdgeKind::TimeVarying } else { EdgeKind::TimeInvariant };
                    g.add_edge(a, b, kind);
                }
            }
        }
        let back: NonStGraph = g.to_string().parse().unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn simulation_is_seed_deterministic(seed in any::<u64>(), n in 2usize..200) {
        let m = random_stable_var(2, 7);
        prop_assert_eq!(simulate(&m, n, 10, seed).unwrap(), simulate(&m, n, 10, seed).unwrap());
    }
}
