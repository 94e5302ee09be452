use nalgebra::DMatrix;
use serde::Serialize;

use super::sections::{precision_section_bruteforce, spd_inverse, CovarianceSection};
use crate::error::{Error, Result};

const IDENTITY_LIMIT: usize = 400;

/// One checked identity: the worst discrepancy and where it occurred.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Human-readable location of the worst discrepancy (one-based labels).
    pub indices: String,
    pub max_abs_error: f64,
}

/// Results of [`identity_checks`].
#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    /// Partial covariance of `(X_t^a, X_τ^b)` given all other variables
    /// against the inverse of the 2×2 precision sub-block.
    pub pointwise_partial_covariance: CheckResult,
    /// Residual covariance of the series pair `{a, b}` given the other
    /// series against the inverse of `[[D_aa, D_ab], [D_ba, D_bb]]`.
    pub pair_block_inverse: CheckResult,
    /// Regression operator `B_{b→a}` of series `a` on the others against
    /// `−D_aa⁻¹ D_ab`.
    pub nodewise_operator: CheckResult,
}

impl IdentityReport {
    pub fn checks(&self) -> [&CheckResult; 3] {
        [
            &self.pointwise_partial_covariance,
            &self.pair_block_inverse,
            &self.nodewise_operator,
        ]
    }

    pub fn max_abs_error(&self) -> f64 {
        self.checks().iter().map(|c| c.max_abs_error).fold(0.0, f64::max)
    }
}

/// Interior one-based time range `[n/4, 3n/4]`.
fn interior(n: usize) -> (usize, usize) {
    ((n / 4).max(1), (3 * n / 4).max(1))
}

fn series_indices(n: usize, p: usize, a: usize) -> Vec<usize> {
    (0..n).map(|t| t * p + a).collect()
}

/// `C_II − C_IO C_OO⁻¹ C_OI`.
fn conditional_covariance(c: &DMatrix<f64>, keep: &[usize], given: &[usize]) -> Result<DMatrix<f64>> {
    let c_ii = c.select_rows(keep).select_columns(keep);
    if given.is_empty() {
        return Ok(c_ii);
    }
    let c_oi = c.select_rows(given).select_columns(keep);
    let c_oo = c.select_rows(given).select_columns(given);
    let ch = c_oo.cholesky().ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    Ok(c_ii - c_oi.transpose() * ch.solve(&c_oi))
}

/// Residual covariance (`2n × 2n`, series `a` first) of the pair `{a, b}`
/// given all other series, computed by regression on the covariance.
pub fn pair_residual_covariance(cov: &CovarianceSection, a: usize, b: usize) -> Result<DMatrix<f64>> {
    let (n, p) = (cov.n, cov.p);
    if a == b || a >= p || b >= p {
        return Err(Error::InvalidArgument("need two distinct nodes".into()));
    }
    let mut keep = series_indices(n, p, a);
    keep.extend(series_indices(n, p, b));
    let given: Vec<usize> = (0..n * p).filter(|i| i % p != a && i % p != b).collect();
    conditional_covariance(&cov.matrix, &keep, &given)
}

struct Worst {
    err: f64,
    at: String,
}

impl Worst {
    fn new() -> Self {
        Worst {
            err: 0.0,
            at: String::from("-"),
        }
    }
    fn update(&mut self, err: f64, at: impl FnOnce() -> String) {
        if err > self.err || (self.at == "-" && err >= self.err) {
            self.err = err;
            self.at = at();
        }
    }
    fn finish(self, name: &str) -> CheckResult {
        CheckResult {
            name: name.into(),
            indices: self.at,
            max_abs_error: self.err,
        }
    }
}

/// Checks three finite-section operator identities by comparing dense
/// regressions on `C_n` with blocks of `D̃_n = C_n⁻¹`, on interior times
/// `n/4 ..= 3n/4`.
///
/// The pointwise check samples time pairs `(t, t + δ)`, `δ ∈ {0, 1, 2}`, at
/// the start, middle and end of the interior for every ordered node pair.
pub fn identity_checks(cov: &CovarianceSection) -> Result<IdentityReport> {
    let (n, p) = (cov.n, cov.p);
    if n * p > IDENTITY_LIMIT {
        return Err(Error::TooLarge {
            dim: n * p,
            limit: IDENTITY_LIMIT,
        });
    }
    let d = precision_section_bruteforce(cov)?.matrix;
    let c = &cov.matrix;
    let (lo, hi) = interior(n);
    let in_interior = |t: usize| (lo..=hi).contains(&(t + 1));

    // Pointwise partial covariance.
    let mut w1 = Worst::new();
    let anchors = [lo, (lo + hi) / 2, hi.saturating_sub(2).max(lo)];
    for a in 0..p {
        for b in 0..p {
            for &t in &anchors {
                for delta in 0..3 {
                    let tau = t + delta;
                    if tau > hi || (a == b && delta == 0) {
                        continue;
                    }
                    let i = (t - 1) * p + a;
                    let j = (tau - 1) * p + b;
                    let keep = [i, j];
                    let given: Vec<usize> = (0..n * p).filter(|&x| x != i && x != j).collect();
                    let resid = conditional_covariance(c, &keep, &given)?;
                    let sub = DMatrix::from_row_slice(2, 2, &[d[(i, i)], d[(i, j)], d[(j, i)], d[(j, j)]]);
                    let inv = sub.try_inverse().ok_or(Error::Singular {
                        condition: f64::INFINITY,
                    })?;
                    w1.update((resid - inv).amax(), || {
                        format!("a={} t={} b={} tau={}", a + 1, t, b + 1, tau)
                    });
                }
            }
        }
    }

    // Pair block inverse.
    let mut w2 = Worst::new();
    for a in 0..p {
        for b in a + 1..p {
            let resid = pair_residual_covariance(cov, a, b)?;
            let mut idx = series_indices(n, p, a);
            idx.extend(series_indices(n, p, b));
            let blk = d.select_rows(&idx).select_columns(&idx);
            let inv = spd_inverse(&blk)?;
            let mut e = 0.0f64;
            for r in 0..2 * n {
                for s in 0..2 * n {
                    if in_interior(r % n) && in_interior(s % n) {
                        e = e.max((resid[(r, s)] - inv[(r, s)]).abs());
                    }
                }
            }
            w2.update(e, || format!("a={} b={}", a + 1, b + 1));
        }
    }

    // Node-wise operator.
    let mut w3 = Worst::new();
    for a in 0..p {
        let ia = series_indices(n, p, a);
        let others: Vec<usize> = (0..p).filter(|&b| b != a).collect();
        let io: Vec<usize> = (0..n * p).filter(|i| i % p != a).collect();
        let c_oa = c.select_rows(&io).select_columns(&ia);
        let c_oo = c.select_rows(&io).select_columns(&io);
        let ch = c_oo.cholesky().ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        // B = C_aO C_OO⁻¹, stored transposed: Bᵀ = C_OO⁻¹ C_Oa.
        let bt = ch.solve(&c_oa);
        let d_aa = d.select_rows(&ia).select_columns(&ia);
        let d_aa_inv = spd_inverse(&d_aa)?;
        for &b in &others {
            let ib = series_indices(n, p, b);
            let d_ab = d.select_rows(&ia).select_columns(&ib);
            let predicted = -(&d_aa_inv * d_ab);
            let mut e = 0.0f64;
            for (col_pos, &gi) in io.iter().enumerate() {
                if gi % p != b {
                    continue;
                }
                let s = gi / p;
                if !in_interior(s) {
                    continue;
                }
                for t in 0..n {
                    if in_interior(t) {
                        e = e.max((bt[(col_pos, t)] - predicted[(t, s)]).abs());
                    }
                }
            }
            w3.update(e, || format!("a={} b={}", a + 1, b + 1));
        }
    }

    Ok(IdentityReport {
        pointwise_partial_covariance: w1.finish("pointwise_partial_covariance"),
        pair_block_inverse: w2.finish("pair_block_inverse"),
        nodewise_operator: w3.finish("nodewise_operator"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_small_system, TvVarModel};
    use crate::oracle::covariance_section;

    #[test]
    fn white_noise_is_exact() {
        let m = TvVarModel::white_noise(DMatrix::identity(3, 3)).unwrap();
        let rep = identity_checks(&covariance_section(&m, 12).unwrap()).unwrap();
        assert_eq!(rep.max_abs_error(), 0.0);
    }

    #[test]
    fn bivariate_var_identities() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.4]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let m = TvVarModel::constant(&[a], s).unwrap();
        let rep = identity_checks(&covariance_section(&m, 40).unwrap()).unwrap();
        for c in rep.checks() {
            assert!(c.max_abs_error < 1e-6, "{c:?}");
        }
    }

    #[test]
    fn small_system_pair_23_is_conditionally_uncorrelated() {
        let n = 40;
        let cov = covariance_section(&builtin_small_system(), n).unwrap();
        let resid = pair_residual_covariance(&cov, 1, 2).unwrap();
        let (lo, hi) = interior(n);
        let mut off = 0.0f64;
        let mut diag_scale = 0.0f64;
        for t in lo - 1..hi {
            for s in lo - 1..hi {
                off = off.max(resid[(t, n + s)].abs());
                diag_scale = diag_scale.max(resid[(t, s)].abs());
            }
        }
        assert!(off < 1e-6 * diag_scale, "off-diagonal block {off}");
        // Node 1 and 2 are connected, so their block is not small.
        let r12 = pair_residual_covariance(&cov, 0, 1).unwrap();
        assert!(r12.view((lo, n + lo), (hi - lo, hi - lo)).amax() > 1e-2);
    }

    #[test]
    fn rejects_large_sections() {
        let cov = covariance_section(&builtin_small_system(), 101).unwrap();
        assert!(matches!(identity_checks(&cov), Err(Error::TooLarge { .. })));
    }
}
