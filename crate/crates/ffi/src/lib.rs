//! C ABI for `nonstgm`.
//!
//! All objects are opaque heap handles created by `nsg_*` constructors and
//! released by the matching `nsg_*_free`. Fallible functions return an
//! [`NsgStatus`]; on failure a description is available from
//! [`nsg_last_error_message`] on the same thread. Node indices are
//! zero-based; matrices are exchanged row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nonstgm::model::{self, TimeSeriesPanel, TvVarModel};
use nonstgm::regress::{fit_all, EstimationConfig, LambdaGrid, LambdaMode};
use nonstgm::select::{select_graph, weight_matrices, EdgeKind, NonStGraph, Rule, Threshold, WeightMatrices};
use nonstgm::{spectral, Error};

use nalgebra::DMatrix;

/// Result code of a fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NsgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Instability, singular systems, solver non-convergence.
    Numeric = 3,
    Io = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Which builtin model [`nsg_model_builtin`] returns.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NsgBuiltin {
    Small = 0,
    Large = 1,
}

/// How [`nsg_select_graph`] combines the two orientations of a pair.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NsgRule {
    And = 0,
    Or = 1,
}

/// Edge attribute reported by [`nsg_graph_edge`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NsgEdge {
    Invalid = -1,
    None = 0,
    TimeInvariant = 1,
    TimeVarying = 2,
}

/// Estimation settings. Obtain defaults from
/// [`nsg_estimation_options_default`] and adjust fields.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct NsgEstimationOptions {
    /// Window half-width; 0 selects `ceil(sqrt(n))`.
    pub window: usize,
    pub nu: usize,
    pub folds: usize,
    pub stride: usize,
    pub grid_len: usize,
    pub grid_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Non-zero: one λ per node shared across frequencies.
    pub shared_lambda: u8,
    /// Non-zero: fit half the frequencies and mirror the rest.
    pub half_grid: u8,
}

pub struct NsgModel(TvVarModel);
pub struct NsgPanel(TimeSeriesPanel);
pub struct NsgWeights(WeightMatrices);
pub struct NsgGraph(NonStGraph);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn status_of(err: &Error) -> NsgStatus {
    match err {
        Error::Unstable { .. }
        | Error::Singular { .. }
        | Error::SingularPolynomial { .. }
        | Error::NonConvergence { .. }
        | Error::TooLarge { .. } => NsgStatus::Numeric,
        Error::Io(_) | Error::Csv(_) => NsgStatus::Io,
        _ => NsgStatus::InvalidArgument,
    }
}

struct Fail(NsgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(NsgStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f` behind a panic guard, storing the result in `*out`.
fn guard<T>(out: *mut *mut T, f: impl FnOnce() -> Result<T, Fail>) -> NsgStatus {
    if out.is_null() {
        set_error("output pointer is null");
        return NsgStatus::NullPointer;
    }
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = ptr::null_mut() };
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => {
            unsafe { *out = Box::into_raw(Box::new(v)) };
            NsgStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NsgStatus::Panic
        }
    }
}

fn guard_unit(f: impl FnOnce() -> Result<(), Fail>) -> NsgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NsgStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NsgStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn row_major(m: &DMatrix<f64>, out: &mut [f64]) {
    let cols = m.ncols();
    for (i, v) in out.iter_mut().enumerate() {
        *v = m[(i / cols, i % cols)];
    }
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nsg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nsg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn nsg_model_builtin(which: NsgBuiltin, out: *mut *mut NsgModel) -> NsgStatus {
    guard(out, || {
        Ok(NsgModel(match which {
            NsgBuiltin::Small => model::builtin_small_system(),
            NsgBuiltin::Large => model::builtin_large_system(),
        }))
    })
}

/// Parses a model from TOML text.
///
/// # Safety
/// `toml` must be null or a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nsg_model_from_toml(toml: *const c_char, out: *mut *mut NsgModel) -> NsgStatus {
    guard(out, || {
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|_| Fail(NsgStatus::InvalidArgument, "toml is not valid UTF-8".into()))?;
        Ok(NsgModel(TvVarModel::from_toml_str(text)?))
    })
}

/// Dimension `p` of a model, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsg_model_dim(model: *const NsgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.p())
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nsg_model_free(model: *mut NsgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// The ground-truth graph implied by the model's coefficients.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsg_true_graph(model: *const NsgModel, out: *mut *mut NsgGraph) -> NsgStatus {
    guard(out, || Ok(NsgGraph(model::true_graph(&borrow(model, "model")?.0)?)))
}

/// Simulates `n` observations after `burn_in` discarded samples.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsg_simulate(
    model: *const NsgModel,
    n: usize,
    burn_in: usize,
    seed: u64,
    out: *mut *mut NsgPanel,
) -> NsgStatus {
    guard(out, || {
        Ok(NsgPanel(model::simulate(&borrow(model, "model")?.0, n, burn_in, seed)?))
    })
}

/// Wraps caller data (`n × p`, row-major) as a panel; the data are copied.
///
/// # Safety
/// `data` must point to `n * p` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn nsg_panel_from_data(
    data: *const f64,
    n: usize,
    p: usize,
    out: *mut *mut NsgPanel,
) -> NsgStatus {
    guard(out, || {
        if data.is_null() {
            return Err(null("data"));
        }
        let len = n
            .checked_mul(p)
            .ok_or_else(|| Fail(NsgStatus::InvalidArgument, "n * p overflows".into()))?;
        let values = std::slice::from_raw_parts(data, len);
        Ok(NsgPanel(TimeSeriesPanel::new(
            DMatrix::from_row_slice(n, p, values),
            None,
        )?))
    })
}

/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsg_panel_n(panel: *const NsgPanel) -> usize {
    panel.as_ref().map_or(0, |x| x.0.n())
}

/// # Safety
/// `panel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsg_panel_p(panel: *const NsgPanel) -> usize {
    panel.as_ref().map_or(0, |x| x.0.p())
}

/// Copies the panel into `out` (row-major, `len` must equal `n * p`).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nsg_panel_copy_data(panel: *const NsgPanel, out: *mut f64, len: usize) -> NsgStatus {
    guard_unit(|| {
        let x = &borrow(panel, "panel")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != x.n() * x.p() {
            return Err(Fail(
                NsgStatus::InvalidArgument,
                format!("buffer length {len}, need {}", x.n() * x.p()),
            ));
        }
        row_major(x.data(), std::slice::from_raw_parts_mut(out, len));
        Ok(())
    })
}

/// # Safety
/// `panel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nsg_panel_free(panel: *mut NsgPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

#[no_mangle]
pub extern "C" fn nsg_estimation_options_default() -> NsgEstimationOptions {
    let d = EstimationConfig::default();
    let (grid_len, grid_ratio) = match d.lambda_grid {
        LambdaGrid::Auto { len, ratio } => (len, ratio),
        LambdaGrid::Explicit(_) => unreachable!("default grid is automatic"),
    };
    NsgEstimationOptions {
        window: 0,
        nu: d.nu,
        folds: d.folds,
        stride: d.stride,
        grid_len,
        grid_ratio,
        tol: d.tol,
        max_iter: d.max_iter,
        shared_lambda: 0,
        half_grid: 0,
    }
}

impl From<&NsgEstimationOptions> for EstimationConfig {
    fn from(o: &NsgEstimationOptions) -> Self {
        EstimationConfig {
            m: (o.window > 0).then_some(o.window),
            nu: o.nu,
            lambda_grid: LambdaGrid::Auto {
                len: o.grid_len,
                ratio: o.grid_ratio,
            },
            folds: o.folds,
            stride: o.stride,
            tol: o.tol,
            max_iter: o.max_iter,
            lambda_mode: if o.shared_lambda != 0 {
                LambdaMode::Shared
            } else {
                LambdaMode::PerProblem
            },
            half_grid: o.half_grid != 0,
        }
    }
}

/// Runs the node-wise regressions on a panel and aggregates the weight
/// matrices. `options` may be null for defaults.
///
/// # Safety
/// `panel` and `options` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn nsg_estimate(
    panel: *const NsgPanel,
    options: *const NsgEstimationOptions,
    out: *mut *mut NsgWeights,
) -> NsgStatus {
    guard(out, || {
        let x = &borrow(panel, "panel")?.0;
        let opts = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| nsg_estimation_options_default());
        let fits = fit_all(&spectral::dft(x), &EstimationConfig::from(&opts))?;
        Ok(NsgWeights(weight_matrices(&fits)?))
    })
}

/// # Safety
/// `weights` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsg_weights_dim(weights: *const NsgWeights) -> usize {
    weights.as_ref().map_or(0, |w| w.0.p())
}

/// Copies `W_self` and `W_other` (row-major `p × p`); either destination may
/// be null to skip it.
///
/// # Safety
/// Non-null destinations must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nsg_weights_copy(
    weights: *const NsgWeights,
    w_self: *mut f64,
    w_other: *mut f64,
    len: usize,
) -> NsgStatus {
    guard_unit(|| {
        let w = &borrow(weights, "weights")?.0;
        let p = w.p();
        if len != p * p {
            return Err(Fail(
                NsgStatus::InvalidArgument,
                format!("buffer length {len}, need {}", p * p),
            ));
        }
        for (m, dst) in [(&w.w_self, w_self), (&w.w_other, w_other)] {
            if !dst.is_null() {
                row_major(m, std::slice::from_raw_parts_mut(dst, len));
            }
        }
        Ok(())
    })
}

/// # Safety
/// `weights` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nsg_weights_free(weights: *mut NsgWeights) {
    if !weights.is_null() {
        drop(Box::from_raw(weights));
    }
}

fn threshold(t: f64) -> Result<Threshold, Fail> {
    if t.is_nan() {
        Err(Fail(NsgStatus::InvalidArgument, "threshold is NaN".into()))
    } else if t < 0.0 {
        Ok(Threshold::RankGap)
    } else {
        Ok(Threshold::Value(t))
    }
}

/// Selects the attributed graph. A negative threshold selects the rank-gap
/// rule for that matrix.
///
/// # Safety
/// `weights` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsg_select_graph(
    weights: *const NsgWeights,
    rule: NsgRule,
    edge_threshold: f64,
    ns_threshold: f64,
    out: *mut *mut NsgGraph,
) -> NsgStatus {
    guard(out, || {
        let w = &borrow(weights, "weights")?.0;
        let rule = match rule {
            NsgRule::And => Rule::And,
            NsgRule::Or => Rule::Or,
        };
        Ok(NsgGraph(select_graph(
            w,
            rule,
            threshold(edge_threshold)?,
            threshold(ns_threshold)?,
        )))
    })
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsg_graph_dim(graph: *const NsgGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.p())
}

/// 1 if node `a` is nonstationary, 0 if not, -1 for null or out of range.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsg_graph_is_nonstationary(graph: *const NsgGraph, a: usize) -> i32 {
    match graph.as_ref() {
        Some(g) if a < g.0.p() => g.0.is_nonstationary(a) as i32,
        _ => -1,
    }
}

/// Attribute of the edge `{a, b}`.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsg_graph_edge(graph: *const NsgGraph, a: usize, b: usize) -> NsgEdge {
    match graph.as_ref() {
        Some(g) if a < g.0.p() && b < g.0.p() => match g.0.edge(a, b) {
            None => NsgEdge::None,
            Some(EdgeKind::TimeInvariant) => NsgEdge::TimeInvariant,
            Some(EdgeKind::TimeVarying) => NsgEdge::TimeVarying,
        },
        _ => NsgEdge::Invalid,
    }
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nsg_graph_free(graph: *mut NsgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}
