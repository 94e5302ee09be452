//! Time-varying VAR models: specification, simulation and ground truth.
//!
//! A model of order `d` in dimension `p` is
//!
//! ```text
//! X_t = Σ_{j=1..d} A_j(u_t) X_{t-j} + ε_t,   ε_t ~ N(0, Σ),   u_t = (t-1)/(n-1)
//! ```
//!
//! where every entry of `A_j(·)` is a [`CoefficientFunction`] on `[0, 1]`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::select::{EdgeKind, NonStGraph};

/// Number of equispaced points used for stability and constancy checks.
pub const U_GRID_POINTS: usize = 101;
const CONSTANCY_TOL: f64 = 1e-12;

/// Default number of discarded warm-up samples in [`simulate`].
pub const DEFAULT_BURN_IN: usize = 500;

/// A scalar coefficient trajectory `u ↦ c(u)` on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoefficientFunction {
    Constant {
        value: f64,
    },
    /// `lo + (hi - lo) · e^{-5+10u} / (1 + e^{-5+10u})`.
    Logistic {
        lo: f64,
        hi: f64,
    },
    /// Piecewise-linear interpolation through `(u, value)` knots, clamped
    /// outside the first and last knot.
    Table {
        table: Vec<(f64, f64)>,
    },
}

impl CoefficientFunction {
    pub fn zero() -> Self {
        CoefficientFunction::Constant { value: 0.0 }
    }

    pub fn constant(value: f64) -> Self {
        CoefficientFunction::Constant { value }
    }

    pub fn logistic(lo: f64, hi: f64) -> Self {
        CoefficientFunction::Logistic { lo, hi }
    }

    /// Builds a table function; knots must be finite with strictly
    /// increasing `u`.
    pub fn table(knots: Vec<(f64, f64)>) -> Result<Self> {
        let f = CoefficientFunction::Table { table: knots };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CoefficientFunction::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidArgument("non-finite constant coefficient".into()))
            }
            CoefficientFunction::Logistic { lo, hi } if !(lo.is_finite() && hi.is_finite()) => {
                Err(Error::InvalidArgument("non-finite logistic endpoint".into()))
            }
            CoefficientFunction::Table { table } => {
                if table.is_empty() {
                    return Err(Error::InvalidArgument(
                        "table coefficient needs at least one knot".into(),
                    ));
                }
                if table.iter().any(|(u, v)| !u.is_finite() || !v.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite table knot".into()));
                }
                if table.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidArgument(
                        "table knots must have strictly increasing u".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Evaluates the trajectory. `u` is not range-checked here.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            CoefficientFunction::Constant { value } => *value,
            CoefficientFunction::Logistic { lo, hi } => {
                let z = -5.0 + 10.0 * u;
                // e^z / (1 + e^z) written to stay finite for large |z|.
                let s = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                lo + (hi - lo) * s
            }
            CoefficientFunction::Table { table } => {
                let first = table[0];
                let last = table[table.len() - 1];
                if u <= first.0 {
                    return first.1;
                }
                if u >= last.0 {
                    return last.1;
                }
                let i = table.partition_point(|&(x, _)| x <= u);
                let (u0, v0) = table[i - 1];
                let (u1, v1) = table[i];
                v0 + (v1 - v0) * (u - u0) / (u1 - u0)
            }
        }
    }

    /// True when the function is structurally constant (independent of `u`).
    pub fn is_structurally_constant(&self) -> bool {
        match self {
            CoefficientFunction::Constant { .. } => true,
            CoefficientFunction::Logistic { lo, hi } => lo == hi,
            CoefficientFunction::Table { table } => table.iter().all(|&(_, v)| v == table[0].1),
        }
    }
}

/// A time-varying VAR(d) model with Gaussian innovations.
#[derive(Clone, Debug)]
pub struct TvVarModel {
    p: usize,
    d: usize,
    /// `coeff[j][row * p + col]` is entry `(row, col)` of `A_{j+1}`.
    coeff: Vec<Vec<CoefficientFunction>>,
    sigma: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    sigma_chol: DMatrix<f64>,
}

/// Largest eigenvalue modulus. Falls back to Gelfand's formula
/// `‖Φ^(2^j)‖^(1/2^j)` when the Schur iteration does not converge.
pub(crate) fn spectral_radius(phi: &DMatrix<f64>) -> f64 {
    if let Some(schur) = nalgebra::linalg::Schur::try_new(phi.clone(), f64::EPSILON, 10_000) {
        return schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    let mut m = phi.clone();
    let mut scale = 0.0f64; // log of the accumulated normalisation
    let mut est = phi.norm();
    for j in 1..=30 {
        m = &m * &m;
        scale *= 2.0;
        let nrm = m.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        scale += nrm.ln();
        m /= nrm;
        est = (scale / 2f64.powi(j)).exp();
    }
    est
}

impl TvVarModel {
    /// Validates and builds a model. `coeff` holds `d` row-major `p × p`
    /// matrices of coefficient functions.
    pub fn new(p: usize, d: usize, coeff: Vec<Vec<CoefficientFunction>>, sigma: DMatrix<f64>) -> Result<Self> {
        if p == 0 || d == 0 {
            return Err(Error::InvalidArgument("p and d must be positive".into()));
        }
        if coeff.len() != d || coeff.iter().any(|m| m.len() != p * p) {
            return Err(Error::ShapeMismatch(format!(
                "expected {d} coefficient matrices of {p}x{p} entries"
            )));
        }
        for f in coeff.iter().flatten() {
            f.validate()?;
        }
        if sigma.shape() != (p, p) {
            return Err(Error::ShapeMismatch(format!(
                "sigma is {:?}, expected ({p}, {p})",
                sigma.shape()
            )));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::SigmaNotPositiveDefinite);
        }
        let scale = sigma.amax().max(1.0);
        if (&sigma - sigma.transpose()).amax() > 1e-12 * scale {
            return Err(Error::SigmaNotPositiveDefinite);
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let eig = sigma.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l <= 1e-14 * scale) {
            return Err(Error::SigmaNotPositiveDefinite);
        }
        let chol = sigma.clone().cholesky().ok_or(Error::SigmaNotPositiveDefinite)?;
        let sigma_inv = chol.inverse();
        let sigma_chol = chol.l();
        Ok(TvVarModel {
            p,
            d,
            coeff,
            sigma,
            sigma_inv,
            sigma_chol,
        })
    }

    /// A model whose transition matrices do not depend on `u`.
    pub fn constant(transitions: &[DMatrix<f64>], sigma: DMatrix<f64>) -> Result<Self> {
        let p = sigma.nrows();
        let coeff = transitions
            .iter()
            .map(|a| {
                if a.shape() != (p, p) {
                    return Err(Error::ShapeMismatch("transition shape differs from sigma".into()));
                }
                Ok((0..p * p)
                    .map(|i| CoefficientFunction::constant(a[(i / p, i % p)]))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        TvVarModel::new(p, transitions.len(), coeff, sigma)
    }

    /// White noise with covariance `sigma` (one zero lag).
    pub fn white_noise(sigma: DMatrix<f64>) -> Result<Self> {
        let p = sigma.nrows();
        TvVarModel::constant(&[DMatrix::zeros(p, p)], sigma)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    /// Lower Cholesky factor of `Σ`.
    pub fn sigma_cholesky(&self) -> &DMatrix<f64> {
        &self.sigma_chol
    }

    /// Coefficient function of entry `(row, col)` of `A_lag` (`lag` in `1..=d`).
    pub fn coefficient(&self, lag: usize, row: usize, col: usize) -> &CoefficientFunction {
        &self.coeff[lag - 1][row * self.p + col]
    }

    /// Entrywise evaluation of `A_j(u)`.
    pub fn eval_transition(&self, j: usize, u: f64) -> Result<DMatrix<f64>> {
        if j == 0 || j > self.d {
            return Err(Error::LagOutOfRange { lag: j, d: self.d });
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::TimeOutOfRange(u));
        }
        Ok(self.transition(j, u))
    }

    /// `A_j(u)` without argument checks; `u` is clamped to `[0, 1]`.
    pub(crate) fn transition(&self, j: usize, u: f64) -> DMatrix<f64> {
        let u = u.clamp(0.0, 1.0);
        let p = self.p;
        DMatrix::from_fn(p, p, |r, c| self.coeff[j - 1][r * p + c].eval(u))
    }

    /// All transitions `A_1(u), …, A_d(u)`.
    pub(crate) fn transitions(&self, u: f64) -> Vec<DMatrix<f64>> {
        (1..=self.d).map(|j| self.transition(j, u)).collect()
    }

    /// `Ã_ℓ(u)` for `ℓ = 0..=d`: `Ã_0 = I`, `Ã_ℓ = −A_ℓ(u)`.
    pub(crate) fn filter_matrices(&self, u: f64) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(self.d + 1);
        out.push(DMatrix::identity(self.p, self.p));
        out.extend(self.transitions(u).into_iter().map(|a| -a));
        out
    }

    /// Companion matrix of dimension `p·d` at rescaled time `u`.
    pub fn companion(&self, u: f64) -> DMatrix<f64> {
        let (p, d) = (self.p, self.d);
        let mut phi = DMatrix::zeros(p * d, p * d);
        for j in 1..=d {
            let a = self.transition(j, u);
            phi.view_mut((0, (j - 1) * p), (p, p)).copy_from(&a);
        }
        for i in p..p * d {
            phi[(i, i - p)] = 1.0;
        }
        phi
    }

    /// True when every coefficient is structurally constant.
    pub fn is_time_invariant(&self) -> bool {
        self.coeff.iter().flatten().all(|f| f.is_structurally_constant())
    }

    /// Spectral norm and spectral radius of the companion matrix, maximised
    /// over an equispaced grid of `U_GRID_POINTS` values of `u`.
    pub fn stability(&self) -> StabilityReport {
        let mut rep = StabilityReport {
            max_spectral_norm: 0.0,
            max_spectral_radius: 0.0,
            u_at_max_radius: 0.0,
        };
        for i in 0..U_GRID_POINTS {
            let u = i as f64 / (U_GRID_POINTS - 1) as f64;
            let phi = self.companion(u);
            let norm = phi.clone().singular_values().max();
            let radius = spectral_radius(&phi);
            rep.max_spectral_norm = rep.max_spectral_norm.max(norm);
            if radius > rep.max_spectral_radius {
                rep.max_spectral_radius = radius;
                rep.u_at_max_radius = u;
            }
        }
        rep
    }

    /// Errors with [`Error::Unstable`] when the companion spectral radius
    /// reaches 1 anywhere on the grid.
    pub fn check_stable(&self) -> Result<StabilityReport> {
        let rep = self.stability();
        if rep.max_spectral_radius >= 1.0 {
            return Err(Error::Unstable {
                radius: rep.max_spectral_radius,
                u: rep.u_at_max_radius,
            });
        }
        Ok(rep)
    }

    /// Parses the TOML model specification (see [`ModelSpec`]).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.build()
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        TvVarModel::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Serializes the model to the TOML specification format.
    pub fn to_toml_string(&self) -> String {
        let p = self.p;
        let mut entries = Vec::new();
        for (j, m) in self.coeff.iter().enumerate() {
            for (i, f) in m.iter().enumerate() {
                if *f != CoefficientFunction::zero() {
                    entries.push(EntrySpec {
                        lag: j + 1,
                        row: i / p + 1,
                        col: i % p + 1,
                        function: f.clone(),
                    });
                }
            }
        }
        let spec = ModelSpec {
            p,
            d: self.d,
            sigma: Some((0..p).map(|r| (0..p).map(|c| self.sigma[(r, c)]).collect()).collect()),
            entry: entries,
        };
        toml::to_string(&spec).expect("model spec serializes")
    }
}

/// Result of [`TvVarModel::stability`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub max_spectral_norm: f64,
    pub max_spectral_radius: f64,
    pub u_at_max_radius: f64,
}

/// On-disk model specification.
///
/// ```toml
/// p = 2
/// d = 1
/// sigma = [[1.0, 0.0], [0.0, 1.0]]   # optional, identity by default
///
/// [[entry]]          # one-based lag/row/col; omitted entries are zero
/// lag = 1
/// row = 1
/// col = 1
/// kind = "logistic"  # or "constant" (value = …) or "table" (table = [[u, v], …])
/// lo = -0.8
/// hi = 0.8
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub p: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub entry: Vec<EntrySpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntrySpec {
    pub lag: usize,
    pub row: usize,
    pub col: usize,
    #[serde(flatten)]
    pub function: CoefficientFunction,
}

impl ModelSpec {
    pub fn build(&self) -> Result<TvVarModel> {
        let (p, d) = (self.p, self.d);
        if p == 0 || d == 0 {
            return Err(Error::InvalidArgument("p and d must be positive".into()));
        }
        let mut coeff = vec![vec![CoefficientFunction::zero(); p * p]; d];
        for e in &self.entry {
            if e.lag == 0 || e.lag > d || e.row == 0 || e.row > p || e.col == 0 || e.col > p {
                return Err(Error::InvalidArgument(format!(
                    "entry (lag {}, row {}, col {}) out of range",
                    e.lag, e.row, e.col
                )));
            }
            coeff[e.lag - 1][(e.row - 1) * p + e.col - 1] = e.function.clone();
        }
        let sigma = match &self.sigma {
            None => DMatrix::identity(p, p),
            Some(rows) => {
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(Error::ShapeMismatch(format!("sigma must be {p}x{p}")));
                }
                DMatrix::from_fn(p, p, |r, c| rows[r][c])
            }
        };
        TvVarModel::new(p, d, coeff, sigma)
    }
}

/// The four-dimensional tvVAR(1) system with two nonstationary nodes.
///
/// ```text
///        ⎡ α(u)  0    0.4   0  ⎤
/// A(u) = ⎢ 0.4   0.4  0     0.4⎥ ,  Σ = I₄,  α, γ logistic from −0.8 to 0.8
///        ⎢ 0     0    γ(u)  0  ⎥
///        ⎣ 0     0.4  0     0.4⎦
/// ```
pub fn builtin_small_system() -> TvVarModel {
    let c = CoefficientFunction::constant;
    let z = CoefficientFunction::zero;
    let l = || CoefficientFunction::logistic(-0.8, 0.8);
    #[rustfmt::skip]
    let a = vec![
        l(),      z(),      c(0.4), z(),
        c(0.4),   c(0.4),   z(),    c(0.4),
        z(),      z(),      l(),    z(),
        z(),      c(0.4),   z(),    c(0.4),
    ];
    TvVarModel::new(4, 1, vec![a], DMatrix::identity(4, 4)).expect("builtin model is valid")
}

/// The ten-dimensional tvVAR(1) system whose only nonstationary node is 5.
pub fn builtin_large_system() -> TvVarModel {
    let p = 10;
    let mut a = vec![CoefficientFunction::zero(); p * p];
    let mut set = |r: usize, c: usize, f: CoefficientFunction| a[(r - 1) * p + c - 1] = f;
    for j in (1..=p).filter(|&j| j != 5) {
        set(j, j, CoefficientFunction::constant(0.5));
    }
    for (r, c) in [(9, 1), (10, 1), (3, 5), (4, 5), (6, 5), (7, 5)] {
        set(r, c, CoefficientFunction::constant(0.3));
    }
    set(5, 5, CoefficientFunction::logistic(0.7, -0.7));
    TvVarModel::new(p, 1, vec![a], DMatrix::identity(p, p)).expect("builtin model is valid")
}

/// An `n × p` panel of observations, one row per time point.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesPanel {
    data: DMatrix<f64>,
    seed: Option<u64>,
}

impl TimeSeriesPanel {
    pub fn new(data: DMatrix<f64>, seed: Option<u64>) -> Result<Self> {
        if data.nrows() < 2 || data.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "a panel needs n >= 2 rows and p >= 1 columns".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("panel contains non-finite values".into()));
        }
        Ok(TimeSeriesPanel { data, seed })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Seed the panel was simulated from, if any.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Writes CSV with header `x1,…,xp`, one time point per row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record((1..=self.p()).map(|a| format!("x{a}")))?;
        for t in 0..self.n() {
            wr.write_record(self.data.row(t).iter().map(|v| format!("{v:e}")))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let p = rd.headers()?.len();
        let mut values = Vec::new();
        let mut n = 0;
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != p {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {p}",
                    n + 1,
                    rec.len()
                )));
            }
            for field in rec.iter() {
                values.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {}: {e}", n + 1)))?,
                );
            }
            n += 1;
        }
        TimeSeriesPanel::new(DMatrix::from_row_slice(n, p, &values), None)
    }
}

/// What [`simulate_with_policy`] does with a model whose companion spectral
/// radius reaches 1 somewhere on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StabilityPolicy {
    #[default]
    Reject,
    Warn,
}

/// Simulates `n` observations after `burn_in` warm-up steps at `u = 0`,
/// rejecting unstable models.
pub fn simulate(model: &TvVarModel, n: usize, burn_in: usize, seed: u64) -> Result<TimeSeriesPanel> {
    simulate_with_policy(model, n, burn_in, seed, StabilityPolicy::Reject)
}

pub fn simulate_with_policy(
    model: &TvVarModel,
    n: usize,
    burn_in: usize,
    seed: u64,
    policy: StabilityPolicy,
) -> Result<TimeSeriesPanel> {
    let (p, d) = (model.p(), model.d());
    if n < 2 || n < d {
        return Err(Error::InvalidArgument(format!(
            "n = {n} must be at least max(2, d = {d})"
        )));
    }
    let rep = model.stability();
    if rep.max_spectral_radius >= 1.0 {
        match policy {
            StabilityPolicy::Reject => {
                return Err(Error::Unstable {
                    radius: rep.max_spectral_radius,
                    u: rep.u_at_max_radius,
                })
            }
            StabilityPolicy::Warn => log::warn!(
                "simulating an unstable model (companion spectral radius {:.4} at u = {:.3})",
                rep.max_spectral_radius,
                rep.u_at_max_radius
            ),
        }
    } else if rep.max_spectral_norm >= 1.0 {
        log::debug!(
            "companion spectral norm {:.4} >= 1; spectral radius {:.4} < 1",
            rep.max_spectral_norm,
            rep.max_spectral_radius
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chol = model.sigma_cholesky();
    // history[j] holds X_{t-1-j}
    let mut history: Vec<DVector<f64>> = vec![DVector::zeros(p); d];
    let mut data = DMatrix::zeros(n, p);
    let a0 = model.transitions(0.0);
    let mut z = DVector::zeros(p);

    let mut step = |a: &[DMatrix<f64>], history: &mut Vec<DVector<f64>>, rng: &mut ChaCha8Rng| {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let mut x = chol * &z;
        for (j, aj) in a.iter().enumerate() {
            x.gemv(1.0, aj, &history[j], 1.0);
        }
        history.rotate_right(1);
        history[0].copy_from(&x);
        x
    };

    for _ in 0..burn_in {
        step(&a0, &mut history, &mut rng);
    }
    for t in 0..n {
        let u = t as f64 / (n - 1) as f64;
        let a = model.transitions(u);
        let x = step(&a, &mut history, &mut rng);
        data.row_mut(t).copy_from(&x.transpose());
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Unstable {
            radius: rep.max_spectral_radius,
            u: rep.u_at_max_radius,
        });
    }
    TimeSeriesPanel::new(data, Some(seed))
}

/// Reads the attributed graph off the coefficient structure.
///
/// With `Ã_0 = I` and `Ã_ℓ = −A_ℓ`, nodes `a ≠ b` are connected iff for some
/// lags `ℓ, m ∈ 0..=d` and some `u` on the grid the supports of
/// `Ã_ℓ(u)[:, a]` and `Ã_m(u)[:, b]` intersect (this includes the direct
/// entries `A[a, b]`, `A[b, a]` through `Ã_0`). Node `a` is stationary iff
/// every column `Ã_ℓ[:, a]` is constant in `u`; an edge is time-invariant
/// iff every product `Ã_ℓ[:, a]' Σ⁻¹ Ã_m[:, b]` is constant in `u`.
pub fn true_graph(model: &TvVarModel) -> Result<NonStGraph> {
    let p = model.p();
    let sigma = model.sigma();
    for r in 0..p {
        for c in 0..p {
            if r != c && sigma[(r, c)] != 0.0 {
                return Err(Error::NonDiagonalSigma);
            }
        }
    }
    let sinv = model.sigma_inv();
    let grid: Vec<Vec<DMatrix<f64>>> = (0..U_GRID_POINTS)
        .map(|i| model.filter_matrices(i as f64 / (U_GRID_POINTS - 1) as f64))
        .collect();
    let lags = model.d() + 1;
    let nz = |x: f64| x.abs() > CONSTANCY_TOL;
    let varies = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        v.iter().any(|x| (x - v[0]).abs() > CONSTANCY_TOL)
    };

    let mut g = NonStGraph::new(p);
    for a in 0..p {
        let ns = (0..lags).any(|l| (0..p).any(|i| varies(&mut grid.iter().map(|m| m[l][(i, a)]))));
        g.set_nonstationary(a, ns);
    }
    for a in 0..p {
        for b in a + 1..p {
            let connected = grid
                .iter()
                .any(|m| (0..lags).any(|l| (0..lags).any(|k| (0..p).any(|i| nz(m[l][(i, a)]) && nz(m[k][(i, b)])))));
            if !connected {
                continue;
            }
            let dot = |m: &Vec<DMatrix<f64>>, l: usize, k: usize| {
                (0..p).map(|i| m[l][(i, a)] * sinv[(i, i)] * m[k][(i, b)]).sum::<f64>()
            };
            let tv = (0..lags).any(|l| (0..lags).any(|k| varies(&mut grid.iter().map(|m| dot(m, l, k)))));
            g.add_edge(
                a,
                b,
                if tv {
                    EdgeKind::TimeVarying
                } else {
                    EdgeKind::TimeInvariant
                },
            );
        }
    }
    Ok(g)
}
