//! Node-wise complex lasso regressions on DFT values.
//!
//! For node `a` and centre frequency `k` the response is
//! `Y_j = J^{(a)}_{k+j}`, `j = −M..=M`, and the regressors of row `j` are
//! `J^{(b)}_{k+j+r}` for all nodes `b` and offsets `r = −ν..=ν` except
//! `(a, 0)`. Coefficients minimise
//!
//! ```text
//! (1/m) ‖Y − Xβ‖² + λ Σ_j |β_j|,      m = 2M + 1.
//! ```

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{wrap_index, DftPanel};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Regularisation grid.
#[derive(Clone, Debug, PartialEq)]
pub enum LambdaGrid {
    /// `len` log-spaced values from `lambda_max` down to `ratio · lambda_max`,
    /// computed per problem (or per node in [`LambdaMode::Shared`]).
    Auto { len: usize, ratio: f64 },
    /// Fixed, strictly decreasing positive values.
    Explicit(Vec<f64>),
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto { len: 50, ratio: 1e-3 }
    }
}

/// Whether λ is cross-validated per `(a, k)` problem or shared by all
/// frequencies of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    #[default]
    PerProblem,
    Shared,
}

/// Settings of [`fit_all`].
#[derive(Clone, Debug, PartialEq)]
pub struct EstimationConfig {
    /// Window half-width; `None` means `⌈√n⌉`.
    pub m: Option<usize>,
    pub nu: usize,
    pub lambda_grid: LambdaGrid,
    pub folds: usize,
    /// Fit every `stride`-th frequency `k = 1, 1 + stride, …`.
    pub stride: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub lambda_mode: LambdaMode,
    /// Fit only `k ≤ n/2` and fill `n − k` from conjugate symmetry.
    pub half_grid: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            m: None,
            nu: 1,
            lambda_grid: LambdaGrid::default(),
            folds: 5,
            stride: 1,
            tol: 1e-6,
            max_iter: 10_000,
            lambda_mode: LambdaMode::PerProblem,
            half_grid: false,
        }
    }
}

/// `⌈√n⌉`.
pub fn default_window(n: usize) -> usize {
    let mut m = (n as f64).sqrt().ceil() as usize;
    while m > 0 && (m - 1) * (m - 1) >= n {
        m -= 1;
    }
    while m * m < n {
        m += 1;
    }
    m
}

impl EstimationConfig {
    pub fn window(&self, n: usize) -> usize {
        self.m.unwrap_or_else(|| default_window(n))
    }

    /// Checks the configuration against a series length.
    pub fn validate(&self, n: usize) -> Result<()> {
        let m = self.window(n);
        if m == 0 {
            return Err(Error::InvalidArgument("M must be at least 1".into()));
        }
        check_window(n, m, self.nu)?;
        if self.folds < 2 || 2 * m + 1 < 2 * self.folds {
            return Err(Error::DegenerateFolds(format!(
                "{} folds need at least {} rows, have {}",
                self.folds,
                2 * self.folds,
                2 * m + 1
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 || self.max_iter == 0 {
            return Err(Error::InvalidArgument("tol and max_iter must be positive".into()));
        }
        match &self.lambda_grid {
            LambdaGrid::Auto { len, ratio } => {
                if *len == 0 || !(*ratio > 0.0 && *ratio <= 1.0) {
                    return Err(Error::InvalidArgument(
                        "auto grid needs len >= 1 and ratio in (0, 1]".into(),
                    ));
                }
            }
            LambdaGrid::Explicit(g) => check_grid(g)?,
        }
        Ok(())
    }
}

fn check_window(n: usize, m: usize, nu: usize) -> Result<()> {
    if 2 * m + 1 > n {
        return Err(Error::InvalidArgument(format!(
            "window 2M+1 = {} exceeds n = {n}",
            2 * m + 1
        )));
    }
    if 2 * nu + 1 > n {
        return Err(Error::InvalidArgument(format!(
            "bandwidth 2nu+1 = {} exceeds n = {n}",
            2 * nu + 1
        )));
    }
    Ok(())
}

fn check_grid(g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if g.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || g.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "lambda grid must be non-negative and strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// One node-wise regression.
#[derive(Clone, Debug)]
pub struct NodewiseProblem {
    pub a: usize,
    /// Centre frequency (one-based).
    pub k: usize,
    pub response: DVector<Complex64>,
    pub design: DMatrix<Complex64>,
    /// `(node, offset)` of each design column.
    pub column_map: Vec<(usize, i64)>,
    /// Wrapped frequency index of each row.
    pub row_frequencies: Vec<usize>,
}

impl NodewiseProblem {
    pub fn rows(&self) -> usize {
        self.response.len()
    }
}

/// Builds the regression of node `a` at centre frequency `k` (one-based).
pub fn assemble_problem(dft: &DftPanel, a: usize, k: usize, m: usize, nu: usize) -> Result<NodewiseProblem> {
    let (n, p) = (dft.n(), dft.p());
    check_window(n, m, nu)?;
    if a >= p || k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("node {a} / frequency {k} out of range")));
    }
    let nu_i = nu as i64;
    let column_map: Vec<(usize, i64)> = (-nu_i..=nu_i)
        .flat_map(|r| (0..p).map(move |b| (b, r)))
        .filter(|&(b, r)| !(b == a && r == 0))
        .collect();
    let rows = 2 * m + 1;
    let row_frequencies: Vec<usize> = (0..rows)
        .map(|j| wrap_index(k as i64 + j as i64 - m as i64, n))
        .collect();
    let response = DVector::from_iterator(rows, row_frequencies.iter().map(|&kk| dft.get(kk as i64, a)));
    let design = DMatrix::from_fn(rows, column_map.len(), |j, c| {
        let (b, r) = column_map[c];
        dft.get(row_frequencies[j] as i64 + r, b)
    });
    Ok(NodewiseProblem {
        a,
        k,
        response,
        design,
        column_map,
        row_frequencies,
    })
}

/// Sufficient statistics of a least-squares problem.
#[derive(Clone, Debug)]
struct Gram {
    g: DMatrix<Complex64>,
    c: DVector<Complex64>,
    yy: f64,
    rows: usize,
}

impl Gram {
    fn of_rows(x: &DMatrix<Complex64>, y: &DVector<Complex64>, lo: usize, hi: usize) -> Gram {
        let xs = x.rows(lo, hi - lo);
        let ys = y.rows(lo, hi - lo);
        Gram {
            g: xs.adjoint() * xs,
            c: xs.adjoint() * ys,
            yy: ys.iter().map(|z| z.norm_sqr()).sum(),
            rows: hi - lo,
        }
    }

    fn minus(&self, other: &Gram) -> Gram {
        Gram {
            g: &self.g - &other.g,
            c: &self.c - &other.c,
            yy: self.yy - other.yy,
            rows: self.rows - other.rows,
        }
    }

    /// `‖Y − Xβ‖²` expanded through the Gram matrix.
    fn rss(&self, beta: &DVector<Complex64>) -> f64 {
        let quad = beta.dotc(&(&self.g * beta)).re;
        (self.yy - 2.0 * beta.dotc(&self.c).re + quad).max(0.0)
    }

    fn objective(&self, beta: &DVector<Complex64>, lambda: f64) -> f64 {
        self.rss(beta) / self.rows as f64 + lambda * beta.iter().map(|z| z.norm()).sum::<f64>()
    }

    fn lambda_max(&self) -> f64 {
        2.0 * self.c.iter().map(|z| z.norm()).fold(0.0, f64::max) / self.rows as f64
    }

    /// KKT residual given `grad_part = X^*(Y − Xβ)`.
    fn kkt(&self, beta: &DVector<Complex64>, grad_part: &DVector<Complex64>, lambda: f64) -> f64 {
        let s = 2.0 / self.rows as f64;
        beta.iter()
            .zip(grad_part.iter())
            .enumerate()
            .map(|(j, (b, g))| {
                let gjj = self.g[(j, j)];
                let grad = -*g * s;
                if gjj.re <= 0.0 {
                    0.0
                } else if b.norm() > 0.0 {
                    (grad + b * (lambda / b.norm())).norm()
                } else {
                    (grad.norm() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Coordinate update used by the solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// Complex soft-threshold `z ↦ z · max(0, 1 − τ/|z|)`.
    #[default]
    ComplexSoftThreshold,
    /// Two-dimensional real group-lasso update on stacked `(Re, Im)` pairs.
    RealGroup,
}

#[derive(Clone, Debug)]
pub struct LassoOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub update: UpdateRule,
    /// Record the objective after every sweep.
    pub trace: bool,
    /// Stop after this many sweeps regardless of convergence (for testing).
    pub fixed_sweeps: Option<usize>,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-6,
            max_iter: 10_000,
            update: UpdateRule::default(),
            trace: false,
            fixed_sweeps: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LassoSolution {
    pub beta: DVector<Complex64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub converged: bool,
    /// Objective after each sweep when tracing was requested.
    pub objective_trace: Vec<f64>,
}

fn soft_threshold(z: Complex64, tau: f64) -> Complex64 {
    let r = z.norm();
    if r <= tau {
        ZERO
    } else {
        z * (1.0 - tau / r)
    }
}

/// Cyclic coordinate descent on the Gram form. Convergence is declared when
/// the KKT residual falls below `tol`.
fn solve_gram(gram: &Gram, lambda: f64, opts: &LassoOptions, warm: Option<&DVector<Complex64>>) -> LassoSolution {
    match opts.update {
        UpdateRule::ComplexSoftThreshold => solve_complex(gram, lambda, opts, warm),
        UpdateRule::RealGroup => solve_real_group(gram, lambda, opts, warm),
    }
}

fn finish(
    gram: &Gram,
    lambda: f64,
    beta: DVector<Complex64>,
    it: usize,
    converged: bool,
    trace: Vec<f64>,
) -> LassoSolution {
    let resid = &gram.c - &gram.g * &beta;
    LassoSolution {
        kkt_residual: gram.kkt(&beta, &resid, lambda),
        objective: gram.objective(&beta, lambda),
        beta,
        iterations: it,
        converged,
        objective_trace: trace,
    }
}

fn solve_complex(gram: &Gram, lambda: f64, opts: &LassoOptions, warm: Option<&DVector<Complex64>>) -> LassoSolution {
    let q = gram.c.len();
    let tau = lambda * gram.rows as f64 / 2.0;
    let mut beta = warm.cloned().unwrap_or_else(|| DVector::zeros(q));
    let mut trace = Vec::new();
    let mut prev = gram.objective(&beta, lambda);
    let sweeps = opts.fixed_sweeps.unwrap_or(opts.max_iter);
    let mut resid = &gram.c - &gram.g * &beta;
    if opts.fixed_sweeps.is_none() && gram.kkt(&beta, &resid, lambda) <= opts.tol {
        return finish(gram, lambda, beta, 0, true, trace);
    }
    for it in 1..=sweeps {
        let (gs, rs, bs) = (gram.g.as_slice(), resid.as_mut_slice(), beta.as_mut_slice());
        for j in 0..q {
            let col = &gs[j * q..(j + 1) * q];
            let gjj = col[j].re;
            if gjj <= 0.0 {
                bs[j] = ZERO;
                continue;
            }
            let old = bs[j];
            let new = soft_threshold(rs[j] + old * gjj, tau) / gjj;
            let delta = new - old;
            if delta != ZERO {
                for (r, g) in rs.iter_mut().zip(col) {
                    *r -= g * delta;
                }
                bs[j] = new;
            }
        }
        if opts.trace || cfg!(debug_assertions) {
            let obj = gram.objective(&beta, lambda);
            debug_assert!(
                obj <= prev + 1e-10 * prev.abs().max(1.0),
                "objective increased: {prev} -> {obj}"
            );
            prev = obj;
            if opts.trace {
                trace.push(obj);
            }
        }
        if opts.fixed_sweeps.is_none() && gram.kkt(&beta, &resid, lambda) <= opts.tol {
            // Confirm on a freshly computed residual; the running one drifts.
            resid = &gram.c - &gram.g * &beta;
            if gram.kkt(&beta, &resid, lambda) <= opts.tol {
                return finish(gram, lambda, beta, it, true, trace);
            }
        }
    }
    let converged = opts.fixed_sweeps.is_some();
    finish(gram, lambda, beta, sweeps, converged, trace)
}

/// Same iteration on the real `2q`-dimensional problem with blocks
/// `(Re β_j, Im β_j)`.
fn solve_real_group(gram: &Gram, lambda: f64, opts: &LassoOptions, warm: Option<&DVector<Complex64>>) -> LassoSolution {
    let q = gram.c.len();
    // X^*X as a real symmetric 2q × 2q matrix: [[Re G, −Im G], [Im G, Re G]].
    let gr = DMatrix::from_fn(2 * q, 2 * q, |r, c| {
        let z = gram.g[(r % q, c % q)];
        match (r < q, c < q) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let cr = DVector::from_fn(2 * q, |r, _| if r < q { gram.c[r].re } else { gram.c[r - q].im });
    let tau = lambda * gram.rows as f64 / 2.0;
    let mut b = DVector::zeros(2 * q);
    if let Some(w) = warm {
        for j in 0..q {
            b[j] = w[j].re;
            b[j + q] = w[j].im;
        }
    }
    let pack = |b: &DVector<f64>| DVector::from_fn(q, |j, _| Complex64::new(b[j], b[j + q]));
    let mut trace = Vec::new();
    let sweeps = opts.fixed_sweeps.unwrap_or(opts.max_iter);
    for it in 1..=sweeps {
        for j in 0..q {
            let gjj = gr[(j, j)];
            if gjj <= 0.0 {
                b[j] = 0.0;
                b[j + q] = 0.0;
                continue;
            }
            let fit = gr.row(j).dot(&b.transpose());
            let fit_im = gr.row(j + q).dot(&b.transpose());
            let rx = cr[j] - fit + gjj * b[j];
            let ry = cr[j + q] - fit_im + gjj * b[j + q];
            let norm = (rx * rx + ry * ry).sqrt();
            let shrink = if norm <= tau { 0.0 } else { 1.0 - tau / norm };
            b[j] = rx * shrink / gjj;
            b[j + q] = ry * shrink / gjj;
        }
        let beta = pack(&b);
        if opts.trace {
            trace.push(gram.objective(&beta, lambda));
        }
        if opts.fixed_sweeps.is_none() {
            let resid = &gram.c - &gram.g * &beta;
            if gram.kkt(&beta, &resid, lambda) <= opts.tol {
                return finish(gram, lambda, beta, it, true, trace);
            }
        }
    }
    let converged = opts.fixed_sweeps.is_some();
    finish(gram, lambda, pack(&b), sweeps, converged, trace)
}

fn problem_gram(problem: &NodewiseProblem) -> Gram {
    Gram::of_rows(&problem.design, &problem.response, 0, problem.rows())
}

/// Smallest λ whose solution is identically zero: `2 max_j |X_j^* Y| / m`.
pub fn lambda_max(problem: &NodewiseProblem) -> f64 {
    problem_gram(problem).lambda_max()
}

/// `len` log-spaced values from `top` down to `ratio · top`.
pub fn log_grid(top: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![top];
    }
    (0..len)
        .map(|i| top * ratio.powf(i as f64 / (len - 1) as f64))
        .collect()
}

/// Minimises the objective at `λ` with default options; errors when the
/// solver does not reach the KKT tolerance.
pub fn complex_group_lasso(problem: &NodewiseProblem, lambda: f64) -> Result<DVector<Complex64>> {
    let sol = complex_group_lasso_with(problem, lambda, &LassoOptions::default(), None)?;
    Ok(sol.beta)
}

pub fn complex_group_lasso_with(
    problem: &NodewiseProblem,
    lambda: f64,
    opts: &LassoOptions,
    warm: Option<&DVector<Complex64>>,
) -> Result<LassoSolution> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must be finite and >= 0"
        )));
    }
    let gram = problem_gram(problem);
    if let Some(w) = warm {
        if w.len() != gram.c.len() {
            return Err(Error::ShapeMismatch("warm start length".into()));
        }
    }
    let sol = solve_gram(&gram, lambda, opts, warm);
    if !sol.converged {
        return Err(Error::NonConvergence {
            iterations: sol.iterations,
            kkt: sol.kkt_residual,
        });
    }
    Ok(sol)
}

/// Cross-validation curve.
#[derive(Clone, Debug)]
pub struct CvResult {
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// Mean held-out squared error per grid value.
    pub cv_error: Vec<f64>,
}

fn fold_bounds(rows: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds).map(|f| (f * rows / folds, (f + 1) * rows / folds)).collect()
}

fn check_folds(rows: usize, folds: usize) -> Result<()> {
    if folds < 2 || rows < 2 * folds {
        return Err(Error::DegenerateFolds(format!("{folds} folds over {rows} rows")));
    }
    Ok(())
}

/// Held-out error curve over contiguous row folds, warm-starting along the
/// (descending) grid within each fold.
fn cv_curve(problem: &NodewiseProblem, full: &Gram, grid: &[f64], folds: usize, opts: &LassoOptions) -> Vec<f64> {
    let rows = problem.rows();
    let mut err = vec![0.0; grid.len()];
    for (lo, hi) in fold_bounds(rows, folds) {
        let held = Gram::of_rows(&problem.design, &problem.response, lo, hi);
        let train = full.minus(&held);
        let mut beta: Option<DVector<Complex64>> = None;
        for (i, &lambda) in grid.iter().enumerate() {
            let sol = solve_gram(&train, lambda, opts, beta.as_ref());
            err[i] += held.rss(&sol.beta);
            beta = Some(sol.beta);
        }
    }
    err.iter_mut().for_each(|e| *e /= rows as f64);
    err
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Selects λ by contiguous-block cross-validation.
pub fn cross_validate(problem: &NodewiseProblem, grid: &[f64], folds: usize) -> Result<f64> {
    Ok(cross_validate_path(problem, grid, folds, &LassoOptions::default())?.lambda)
}

/// As [`cross_validate`], returning the whole curve. Ties go to the larger λ.
pub fn cross_validate_path(
    problem: &NodewiseProblem,
    grid: &[f64],
    folds: usize,
    opts: &LassoOptions,
) -> Result<CvResult> {
    check_grid(grid)?;
    if grid.len() == 1 {
        return Ok(CvResult {
            lambda: grid[0],
            grid: grid.to_vec(),
            cv_error: vec![f64::NAN],
        });
    }
    check_folds(problem.rows(), folds)?;
    let full = problem_gram(problem);
    let cv_error = cv_curve(problem, &full, grid, folds, opts);
    Ok(CvResult {
        lambda: grid[argmin_first(&cv_error)],
        grid: grid.to_vec(),
        cv_error,
    })
}

/// Fitted regression of node `a` at frequency `k` (one-based).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFit {
    pub a: usize,
    pub k: usize,
    /// Full layout `(r + ν)·p + b` over all nodes and offsets; the `(a, 0)`
    /// slot is always zero.
    pub coefficients: Vec<Complex64>,
    pub lambda: f64,
    /// Mean squared residual modulus at the selected λ.
    pub delta: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Set when the fit failed or did not converge.
    pub error: Option<String>,
}

impl NodeFit {
    pub fn zero(a: usize, k: usize, p: usize, nu: usize) -> Self {
        NodeFit {
            a,
            k,
            coefficients: vec![ZERO; p * (2 * nu + 1)],
            lambda: 0.0,
            delta: 0.0,
            iterations: 0,
            kkt_residual: 0.0,
            error: None,
        }
    }
}

/// All node-wise fits of one panel.
#[derive(Clone, Debug, PartialEq)]
pub struct NodewiseFitSet {
    pub n: usize,
    pub p: usize,
    pub nu: usize,
    /// Window half-width used.
    pub m: usize,
    pub fits: Vec<NodeFit>,
}

impl NodewiseFitSet {
    /// Slot of `(b, r)` in [`NodeFit::coefficients`].
    pub fn index(&self, b: usize, r: i64) -> usize {
        (r + self.nu as i64) as usize * self.p + b
    }

    /// `B̂_{(b, k+r)→(a, k)}` of a fit.
    pub fn coefficient(&self, fit: &NodeFit, b: usize, r: i64) -> Complex64 {
        fit.coefficients[self.index(b, r)]
    }

    /// Fits that failed or did not converge.
    pub fn failures(&self) -> impl Iterator<Item = &NodeFit> {
        self.fits.iter().filter(|f| f.error.is_some())
    }

    /// Writes CSV rows `a,k,b,r,re,im,lambda,delta` (one-based `a`, `k`, `b`),
    /// one per regressor slot.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["a", "k", "b", "r", "re", "im", "lambda", "delta"])?;
        let nu = self.nu as i64;
        for f in &self.fits {
            for r in -nu..=nu {
                for b in 0..self.p {
                    if b == f.a && r == 0 {
                        continue;
                    }
                    let z = self.coefficient(f, b, r);
                    wr.write_record(&[
                        (f.a + 1).to_string(),
                        f.k.to_string(),
                        (b + 1).to_string(),
                        r.to_string(),
                        format!("{:e}", z.re),
                        format!("{:e}", z.im),
                        format!("{:e}", f.lambda),
                        format!("{:e}", f.delta),
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv); `n`, `p` and
    /// `m` are not stored in the file and must be supplied.
    pub fn read_csv<R: Read>(r: R, n: usize, p: usize, nu: usize, m: usize) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            a: usize,
            k: usize,
            b: usize,
            r: i64,
            re: f64,
            im: f64,
            lambda: f64,
            delta: f64,
        }
        let mut set = NodewiseFitSet {
            n,
            p,
            nu,
            m,
            fits: Vec::new(),
        };
        let mut rd = csv::Reader::from_reader(r);
        for row in rd.deserialize::<Row>() {
            let row = row?;
            if row.a == 0 || row.a > p || row.b == 0 || row.b > p || row.r.unsigned_abs() as usize > nu {
                return Err(Error::Parse(format!(
                    "fit row out of range: a={} b={} r={}",
                    row.a, row.b, row.r
                )));
            }
            let (a, k) = (row.a - 1, row.k);
            let pos = match set.fits.last() {
                Some(f) if f.a == a && f.k == k => set.fits.len() - 1,
                _ => {
                    let mut f = NodeFit::zero(a, k, p, nu);
                    f.lambda = row.lambda;
                    f.delta = row.delta;
                    set.fits.push(f);
                    set.fits.len() - 1
                }
            };
            let idx = set.index(row.b - 1, row.r);
            set.fits[pos].coefficients[idx] = Complex64::new(row.re, row.im);
        }
        Ok(set)
    }
}

fn fit_at(
    problem: &NodewiseProblem,
    full: &Gram,
    lambda: f64,
    config: &EstimationConfig,
    p: usize,
    nu: usize,
) -> NodeFit {
    let opts = LassoOptions {
        tol: config.tol,
        max_iter: config.max_iter,
        ..Default::default()
    };
    let sol = solve_gram(full, lambda, &opts, None);
    let mut fit = NodeFit::zero(problem.a, problem.k, p, nu);
    for (c, &(b, r)) in problem.column_map.iter().enumerate() {
        fit.coefficients[(r + nu as i64) as usize * p + b] = sol.beta[c];
    }
    fit.lambda = lambda;
    fit.delta = full.rss(&sol.beta) / full.rows as f64;
    fit.iterations = sol.iterations;
    fit.kkt_residual = sol.kkt_residual;
    if !sol.converged {
        fit.error = Some(format!(
            "no convergence after {} sweeps (KKT residual {:e})",
            sol.iterations, sol.kkt_residual
        ));
    }
    fit
}

fn problem_grid(config: &EstimationConfig, full: &Gram) -> Vec<f64> {
    match &config.lambda_grid {
        LambdaGrid::Explicit(g) => g.clone(),
        LambdaGrid::Auto { len, ratio } => log_grid(full.lambda_max(), *len, *ratio),
    }
}

fn fit_per_problem(dft: &DftPanel, a: usize, k: usize, config: &EstimationConfig) -> NodeFit {
    let (m, nu, p) = (config.window(dft.n()), config.nu, dft.p());
    let problem = match assemble_problem(dft, a, k, m, nu) {
        Ok(pr) => pr,
        Err(e) => {
            let mut f = NodeFit::zero(a, k, p, nu);
            f.error = Some(e.to_string());
            return f;
        }
    };
    let full = problem_gram(&problem);
    if full.lambda_max() == 0.0 {
        return fit_at(&problem, &full, 0.0, config, p, nu);
    }
    let grid = problem_grid(config, &full);
    let opts = LassoOptions {
        tol: config.tol,
        max_iter: config.max_iter,
        ..Default::default()
    };
    let lambda = if grid.len() == 1 {
        grid[0]
    } else {
        let err = cv_curve(&problem, &full, &grid, config.folds, &opts);
        grid[argmin_first(&err)]
    };
    fit_at(&problem, &full, lambda, config, p, nu)
}

/// Frequencies fitted directly, and those filled by conjugate mirroring.
fn frequency_plan(n: usize, config: &EstimationConfig) -> (Vec<usize>, Vec<usize>) {
    let grid: Vec<usize> = (1..=n).step_by(config.stride).collect();
    if !config.half_grid {
        return (grid, Vec::new());
    }
    // k = n is its own mirror image and is always fitted directly.
    let direct: Vec<usize> = grid.iter().copied().filter(|&k| 2 * k <= n || k == n).collect();
    let mirrored: Vec<usize> = direct
        .iter()
        .map(|&k| n - k)
        .filter(|&k2| k2 >= 1 && 2 * k2 > n)
        .collect();
    (direct, mirrored)
}

/// The fit at `n − k` implied by the fit at `k` for a real panel:
/// `B̂_{(b,r)}(n−k) = conj(B̂_{(b,−r)}(k))`.
pub fn mirror_fit(fit: &NodeFit, n: usize, p: usize, nu: usize) -> NodeFit {
    let mut out = fit.clone();
    out.k = wrap_index(n as i64 - fit.k as i64, n);
    let nu = nu as i64;
    for r in -nu..=nu {
        for b in 0..p {
            let src = (-r + nu) as usize * p + b;
            out.coefficients[(r + nu) as usize * p + b] = fit.coefficients[src].conj();
        }
    }
    out
}

/// Runs every node-wise regression on the stride grid. Per-fit failures are
/// recorded in [`NodeFit::error`]; only an invalid configuration is fatal.
/// Fits run in parallel and the result is deterministic.
pub fn fit_all(dft: &DftPanel, config: &EstimationConfig) -> Result<NodewiseFitSet> {
    let (n, p) = (dft.n(), dft.p());
    config.validate(n)?;
    let (direct, mirrored) = frequency_plan(n, config);
    let tasks: Vec<(usize, usize)> = (0..p).flat_map(|a| direct.iter().map(move |&k| (a, k))).collect();

    let mut fits: Vec<NodeFit> = match config.lambda_mode {
        LambdaMode::PerProblem => tasks
            .par_iter()
            .map(|&(a, k)| fit_per_problem(dft, a, k, config))
            .collect(),
        LambdaMode::Shared => {
            let per_node: Vec<Vec<NodeFit>> = (0..p)
                .into_par_iter()
                .map(|a| fit_shared_node(dft, a, &direct, config))
                .collect::<Result<_>>()?;
            per_node.into_iter().flatten().collect()
        }
    };
    if !mirrored.is_empty() {
        let extra: Vec<NodeFit> = fits
            .iter()
            .filter(|f| mirrored.contains(&(n - f.k)))
            .map(|f| mirror_fit(f, n, p, config.nu))
            .collect();
        fits.extend(extra);
        fits.sort_by_key(|f| (f.a, f.k));
    }
    Ok(NodewiseFitSet {
        n,
        p,
        nu: config.nu,
        m: config.window(n),
        fits,
    })
}

/// One λ per node: sums the CV curves of all its problems on a common grid
/// running from the largest per-problem `lambda_max` downwards.
fn fit_shared_node(dft: &DftPanel, a: usize, ks: &[usize], config: &EstimationConfig) -> Result<Vec<NodeFit>> {
    let (m, nu, p) = (config.window(dft.n()), config.nu, dft.p());
    let problems: Vec<NodewiseProblem> = ks
        .iter()
        .map(|&k| assemble_problem(dft, a, k, m, nu))
        .collect::<Result<_>>()?;
    let grams: Vec<Gram> = problems.par_iter().map(problem_gram).collect();
    let top = grams.iter().map(Gram::lambda_max).fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(problems
            .iter()
            .zip(&grams)
            .map(|(pr, g)| fit_at(pr, g, 0.0, config, p, nu))
            .collect());
    }
    let grid = match &config.lambda_grid {
        LambdaGrid::Explicit(g) => g.clone(),
        LambdaGrid::Auto { len, ratio } => log_grid(top, *len, *ratio),
    };
    let opts = LassoOptions {
        tol: config.tol,
        max_iter: config.max_iter,
        ..Default::default()
    };
    let lambda = if grid.len() == 1 {
        grid[0]
    } else {
        let total = problems
            .par_iter()
            .zip(grams.par_iter())
            .map(|(pr, g)| cv_curve(pr, g, &grid, config.folds, &opts))
            .reduce(
                || vec![0.0; grid.len()],
                |x, y| x.iter().zip(&y).map(|(a, b)| a + b).collect(),
            );
        grid[argmin_first(&total)]
    };
    Ok(problems
        .par_iter()
        .zip(grams.par_iter())
        .map(|(pr, g)| fit_at(pr, g, lambda, config, p, nu))
        .collect())
}

/// `[estimation]` section of the TOML configuration file. Every key is
/// optional; `M` and `nu` follow the notation of the estimator.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub nu: Option<usize>,
    pub folds: Option<usize>,
    pub stride: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub lambda_grid: Option<Vec<f64>>,
    pub lambda_mode: Option<LambdaMode>,
    pub half_grid: Option<bool>,
}

impl EstimationSection {
    /// Overrides fields of `base` that are set in this section.
    pub fn apply(&self, base: &mut EstimationConfig) {
        if self.m.is_some() {
            base.m = self.m;
        }
        if let Some(v) = self.nu {
            base.nu = v;
        }
        if let Some(v) = self.folds {
            base.folds = v;
        }
        if let Some(v) = self.stride {
            base.stride = v;
        }
        if let Some(v) = self.tol {
            base.tol = v;
        }
        if let Some(v) = self.max_iter {
            base.max_iter = v;
        }
        if let Some(v) = &self.lambda_grid {
            base.lambda_grid = LambdaGrid::Explicit(v.clone());
        }
        if let Some(v) = self.lambda_mode {
            base.lambda_mode = v;
        }
        if let Some(v) = self.half_grid {
            base.half_grid = v;
        }
    }
}
