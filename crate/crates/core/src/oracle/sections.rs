use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::TvVarModel;

/// Largest `n·p` for which dense sections are assembled.
pub const DENSE_LIMIT: usize = 4000;

/// `u_s = (s-1)/(n-1)` clamped to `[0, 1]`; `s` may lie outside `1..=n`.
pub fn rescaled_time(s: i64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    ((s - 1) as f64 / (n - 1) as f64).clamp(0.0, 1.0)
}

fn dense_guard(n: usize, p: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if n * p > DENSE_LIMIT {
        return Err(Error::TooLarge {
            dim: n * p,
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}

/// Exact covariance `C_n = Var[(X_1', …, X_n')']` of the simulated process.
#[derive(Clone, Debug)]
pub struct CovarianceSection {
    pub n: usize,
    pub p: usize,
    pub matrix: DMatrix<f64>,
}

impl CovarianceSection {
    /// Block `C_{t,τ}` (one-based times).
    pub fn block(&self, t: usize, tau: usize) -> DMatrix<f64> {
        self.matrix
            .view(((t - 1) * self.p, (tau - 1) * self.p), (self.p, self.p))
            .into_owned()
    }
}

/// Covariance of `X_1, …, X_n` when the process starts in the stationary
/// distribution of the `u = 0` dynamics (the limit of the simulation
/// burn-in) and then follows `A_j(u_t)`.
///
/// Uses the companion form `Z_t = Φ_t Z_{t-1} + E ε_t`: the initial variance
/// solves the discrete Lyapunov equation by doubling, then
/// `V_t = Φ_t V_{t-1} Φ_t' + Q` and `Cov[Z_t, X_τ] = Φ_t ⋯ Φ_{τ+1} Cov[Z_τ, X_τ]`.
pub fn covariance_section(model: &TvVarModel, n: usize) -> Result<CovarianceSection> {
    let (p, d) = (model.p(), model.d());
    dense_guard(n, p)?;
    model.check_stable()?;
    let q_dim = p * d;
    let mut q = DMatrix::zeros(q_dim, q_dim);
    q.view_mut((0, 0), (p, p)).copy_from(model.sigma());

    let phi: Vec<DMatrix<f64>> = (1..=n).map(|t| model.companion(rescaled_time(t as i64, n))).collect();
    let mut v = stationary_variance(&model.companion(0.0), &q)?;
    let mut c = DMatrix::zeros(n * p, n * p);
    for tau in 0..n {
        if tau > 0 {
            v = &phi[tau] * &v * phi[tau].transpose() + &q;
        }
        let mut g = v.columns(0, p).into_owned();
        c.view_mut((tau * p, tau * p), (p, p)).copy_from(&g.rows(0, p));
        for t in tau + 1..n {
            g = &phi[t] * &g;
            let blk = g.rows(0, p).into_owned();
            c.view_mut((t * p, tau * p), (p, p)).copy_from(&blk);
            c.view_mut((tau * p, t * p), (p, p)).copy_from(&blk.transpose());
        }
    }
    let c = (&c + c.transpose()) * 0.5;
    Ok(CovarianceSection { n, p, matrix: c })
}

/// Solves `S = Φ S Φ' + Q` by the doubling iteration.
fn stationary_variance(phi: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut s = q.clone();
    let mut a = phi.clone();
    for _ in 0..64 {
        s = &s + &a * &s * a.transpose();
        a = &a * &a;
        if a.amax() < 1e-18 {
            return Ok((&s + s.transpose()) * 0.5);
        }
    }
    Err(Error::Unstable {
        radius: crate::model::spectral_radius(phi),
        u: 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecisionKind {
    Analytic,
    BruteForce,
}

/// A finite section of an inverse covariance operator, stored like
/// [`CovarianceSection`].
#[derive(Clone, Debug)]
pub struct PrecisionSection {
    pub n: usize,
    pub p: usize,
    pub matrix: DMatrix<f64>,
    pub kind: PrecisionKind,
}

impl PrecisionSection {
    /// Block `D_{t,τ}` (one-based times).
    pub fn block(&self, t: usize, tau: usize) -> DMatrix<f64> {
        self.matrix
            .view(((t - 1) * self.p, (tau - 1) * self.p), (self.p, self.p))
            .into_owned()
    }

    /// The `n × n` operator block `D_{a,b}` between series `a` and `b`.
    pub fn series_block(&self, a: usize, b: usize) -> DMatrix<f64> {
        let p = self.p;
        DMatrix::from_fn(self.n, self.n, |t, s| self.matrix[(t * p + a, s * p + b)])
    }
}

/// Precision block of the tvVAR model on the bi-infinite lattice:
///
/// ```text
/// D_{t,τ} = Σ_{s=max(t,τ)}^{min(t,τ)+d} Ã_{s-t}(u_s)' Σ⁻¹ Ã_{s-τ}(u_s)
/// ```
///
/// with `Ã_0 = I`, `Ã_ℓ = −A_ℓ` and `u_s` clamped to `[0, 1]`. Zero when
/// `|t − τ| > d`.
pub fn precision_entries_tvvar(model: &TvVarModel, t: i64, tau: i64, n: usize) -> DMatrix<f64> {
    let (p, d) = (model.p(), model.d() as i64);
    let mut out = DMatrix::zeros(p, p);
    let lo = t.max(tau);
    let hi = t.min(tau) + d;
    for s in lo..=hi {
        let f = model.filter_matrices(rescaled_time(s, n));
        let left = &f[(s - t) as usize];
        let right = &f[(s - tau) as usize];
        out += left.transpose() * model.sigma_inv() * right;
    }
    out
}

/// Block-banded section `D_n` assembled from [`precision_entries_tvvar`].
pub fn precision_section_analytic(model: &TvVarModel, n: usize) -> Result<PrecisionSection> {
    let (p, d) = (model.p(), model.d());
    dense_guard(n, p)?;
    let mut m = DMatrix::zeros(n * p, n * p);
    for t in 1..=n {
        for tau in t..=(t + d).min(n) {
            let blk = precision_entries_tvvar(model, t as i64, tau as i64, n);
            m.view_mut(((t - 1) * p, (tau - 1) * p), (p, p)).copy_from(&blk);
            if tau != t {
                m.view_mut(((tau - 1) * p, (t - 1) * p), (p, p))
                    .copy_from(&blk.transpose());
            }
        }
    }
    Ok(PrecisionSection {
        n,
        p,
        matrix: m,
        kind: PrecisionKind::Analytic,
    })
}

/// `D̃_n = C_n⁻¹` by Cholesky factorisation.
pub fn precision_section_bruteforce(cov: &CovarianceSection) -> Result<PrecisionSection> {
    dense_guard(cov.n, cov.p)?;
    let inv = spd_inverse(&cov.matrix)?;
    Ok(PrecisionSection {
        n: cov.n,
        p: cov.p,
        matrix: inv,
        kind: PrecisionKind::BruteForce,
    })
}

/// Inverse of a symmetric positive definite matrix; on failure reports the
/// eigenvalue-based condition estimate.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match m.clone().cholesky() {
        Some(ch) => {
            let inv = ch.inverse();
            Ok((&inv + inv.transpose()) * 0.5)
        }
        None => Err(Error::Singular {
            condition: condition_estimate(m),
        }),
    }
}

pub(crate) fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Row-wise ℓ1 discrepancies at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryError {
    /// `‖row(a, t) of D̃_n − row(a, t) of D_n‖₁` for each node `a`.
    pub per_node: Vec<f64>,
    /// Maximum over nodes.
    pub max: f64,
}

/// Compares rows of two precision sections at one-based time `t`.
pub fn boundary_error(analytic: &PrecisionSection, brute: &PrecisionSection, t: usize) -> Result<BoundaryError> {
    if analytic.n != brute.n || analytic.p != brute.p {
        return Err(Error::ShapeMismatch(format!(
            "sections are (n={}, p={}) and (n={}, p={})",
            analytic.n, analytic.p, brute.n, brute.p
        )));
    }
    if t == 0 || t > analytic.n {
        return Err(Error::InvalidArgument(format!("t = {t} outside 1..={}", analytic.n)));
    }
    let p = analytic.p;
    let per_node: Vec<f64> = (0..p)
        .map(|a| {
            let r = (t - 1) * p + a;
            (analytic.matrix.row(r) - brute.matrix.row(r)).abs().sum()
        })
        .collect();
    let max = per_node.iter().copied().fold(0.0, f64::max);
    Ok(BoundaryError { per_node, max })
}

/// Smallest and largest eigenvalue of `C_n`.
pub fn assumption_bounds(cov: &CovarianceSection) -> (f64, f64) {
    let eig = cov.matrix.clone().symmetric_eigen().eigenvalues;
    (eig.min(), eig.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_large_system, builtin_small_system};

    fn ar1(a: f64) -> TvVarModel {
        TvVarModel::constant(&[DMatrix::from_element(1, 1, a)], DMatrix::identity(1, 1)).unwrap()
    }

    #[test]
    fn ar1_covariance_closed_form() {
        let c = covariance_section(&ar1(0.5), 30).unwrap();
        for t in 1..=30 {
            assert!((c.block(t, t)[(0, 0)] - 4.0 / 3.0).abs() < 1e-13);
            if t < 30 {
                assert!((c.block(t, t + 1)[(0, 0)] - 0.5 * 4.0 / 3.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn white_noise_covariance_is_block_identity() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = covariance_section(&TvVarModel::white_noise(s.clone()).unwrap(), 10).unwrap();
        for t in 1..=10 {
            for tau in 1..=10 {
                let want = if t == tau { s.clone() } else { DMatrix::zeros(2, 2) };
                assert_eq!(c.block(t, tau), want);
            }
        }
    }

    #[test]
    fn small_system_covariance_is_spd() {
        let c = covariance_section(&builtin_small_system(), 50).unwrap();
        assert_eq!(c.matrix, c.matrix.transpose());
        assert!(assumption_bounds(&c).0 > 0.0);
    }

    #[test]
    fn covariance_matches_var_recursion_independently() {
        // Var[X_t] from the direct second-order recursion of a VAR(2)
        // written without the companion form.
        let a1 = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, -0.2, 0.3]);
        let a2 = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.05, -0.2]);
        let m = TvVarModel::constant(&[a1.clone(), a2.clone()], DMatrix::identity(2, 2)).unwrap();
        let c = covariance_section(&m, 12).unwrap();
        // Yule-Walker: Γ(h) = A1 Γ(h-1) + A2 Γ(h-2) for h ≥ 1 with Γ(h) = C_{t+h,t}.
        for h in 2..6 {
            let lhs = c.block(5 + h, 5);
            let rhs = &a1 * c.block(5 + h - 1, 5) + &a2 * c.block(5 + h - 2, 5);
            assert!((lhs - rhs).amax() < 1e-12);
        }
        // Γ(0) = A1 Γ(1)' + A2 Γ(2)' + I.
        let g0 = &a1 * c.block(5, 6) + &a2 * c.block(5, 7) + DMatrix::identity(2, 2);
        assert!((c.block(6, 6) - g0).amax() < 1e-12);
    }

    #[test]
    fn ar1_precision_entries() {
        let a = 0.7;
        let m = ar1(a);
        assert!((precision_entries_tvvar(&m, 5, 5, 20)[(0, 0)] - (1.0 + a * a)).abs() < 1e-15);
        assert!((precision_entries_tvvar(&m, 5, 6, 20)[(0, 0)] + a).abs() < 1e-15);
        assert!((precision_entries_tvvar(&m, 6, 5, 20)[(0, 0)] + a).abs() < 1e-15);
        assert_eq!(precision_entries_tvvar(&m, 5, 7, 20)[(0, 0)], 0.0);
    }

    #[test]
    fn small_system_precision_zero_pattern() {
        let m = builtin_small_system();
        for t in 1..=20 {
            let d = precision_entries_tvvar(&m, t, t + 1, 20);
            assert_eq!(d[(2, 1)], 0.0);
            assert_eq!(precision_entries_tvvar(&m, t, t + 2, 20), DMatrix::zeros(4, 4));
        }
    }

    #[test]
    fn small_system_toeplitz_reading() {
        let m = builtin_small_system();
        let n = 40;
        let d = precision_section_analytic(&m, n).unwrap();
        let invariant = [(1, 1), (3, 3), (1, 3), (0, 1), (0, 3), (1, 0), (3, 0), (3, 1)];
        let varying = [(0, 0), (2, 2), (0, 2)];
        let entry = |a: usize, b: usize, t: usize, r: usize| d.matrix[((t - 1) * 4 + a, (t + r - 1) * 4 + b)];
        for &(a, b) in &invariant {
            for r in 0..=1 {
                let v0 = entry(a, b, 2, r);
                assert!((2..n - 1).all(|t| entry(a, b, t, r) == v0), "({a},{b}) r={r}");
            }
        }
        for &(a, b) in &varying {
            let v0 = entry(a, b, 2, 0);
            let v1 = entry(a, b, 2, 1);
            assert!(
                (2..n - 1).any(|t| entry(a, b, t, 0) != v0 || entry(a, b, t, 1) != v1),
                "({a},{b})"
            );
        }
    }

    #[test]
    fn bruteforce_inverse_identity() {
        let c = covariance_section(&builtin_small_system(), 30).unwrap();
        let d = precision_section_bruteforce(&c).unwrap();
        let eye = DMatrix::identity(120, 120);
        assert!((&d.matrix * &c.matrix - eye).amax() < 1e-8);
        let wn = covariance_section(&TvVarModel::white_noise(DMatrix::identity(3, 3)).unwrap(), 8).unwrap();
        assert_eq!(
            precision_section_bruteforce(&wn).unwrap().matrix,
            DMatrix::identity(24, 24)
        );
    }

    #[test]
    fn bruteforce_interior_matches_analytic() {
        let m = ar1(0.5);
        let c = covariance_section(&m, 101).unwrap();
        let d = precision_section_bruteforce(&c).unwrap();
        assert!((d.matrix[(50, 49)] + 0.5).abs() < 1e-10);
        assert!((d.matrix[(50, 50)] - 1.25).abs() < 1e-10);
        assert!((d.matrix[(50, 51)] + 0.5).abs() < 1e-10);
    }

    #[test]
    fn analytic_matches_bruteforce_away_from_edges() {
        // With a stationary start the finite-section inverse equals D_n
        // except in the first and last d time rows.
        for m in [builtin_small_system(), builtin_large_system()] {
            let n = 40;
            let c = covariance_section(&m, n).unwrap();
            let bf = precision_section_bruteforce(&c).unwrap();
            let an = precision_section_analytic(&m, n).unwrap();
            for t in 2..n {
                assert!(boundary_error(&an, &bf, t).unwrap().max < 1e-9, "t = {t}");
            }
            assert!(boundary_error(&an, &bf, n).unwrap().max > 1e-3);
        }
    }

    #[test]
    fn boundary_error_edges() {
        let m = ar1(0.5);
        let n = 100;
        let c = covariance_section(&m, n).unwrap();
        let bf = precision_section_bruteforce(&c).unwrap();
        let an = precision_section_analytic(&m, n).unwrap();
        let mid = boundary_error(&an, &bf, n / 2).unwrap().max;
        let first = boundary_error(&an, &bf, 1).unwrap().max;
        assert!(mid < first);
        assert!((first - 0.25).abs() < 1e-10, "D_11 differs by a² exactly");
        let wn = TvVarModel::white_noise(DMatrix::identity(2, 2)).unwrap();
        let c = covariance_section(&wn, 10).unwrap();
        let e = boundary_error(
            &precision_section_analytic(&wn, 10).unwrap(),
            &precision_section_bruteforce(&c).unwrap(),
            5,
        )
        .unwrap();
        assert_eq!(e.max, 0.0);
        let other = precision_section_analytic(&wn, 11).unwrap();
        assert!(boundary_error(&other, &precision_section_bruteforce(&c).unwrap(), 5).is_err());
    }

    #[test]
    fn ar1_eigenvalue_bounds() {
        let (lo, hi) = assumption_bounds(&covariance_section(&ar1(0.5), 200).unwrap());
        assert!(hi < 4.0 + 1e-9 && lo > 1.0 / 2.25 - 1e-9);
        let (lo, hi) = assumption_bounds(
            &covariance_section(&TvVarModel::white_noise(DMatrix::identity(2, 2)).unwrap(), 5).unwrap(),
        );
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 1.0).abs() < 1e-14);
    }

    #[test]
    fn builtin_bounds_positive() {
        assert!(assumption_bounds(&covariance_section(&builtin_small_system(), 200).unwrap()).0 > 0.0);
        assert!(assumption_bounds(&covariance_section(&builtin_large_system(), 200).unwrap()).0 > 0.0);
    }

    #[test]
    fn dense_guard_and_instability() {
        assert!(matches!(
            covariance_section(&builtin_large_system(), 401),
            Err(Error::TooLarge { .. })
        ));
        assert!(matches!(covariance_section(&ar1(1.2), 10), Err(Error::Unstable { .. })));
    }
}
