use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::TvVarModel;

/// Default number of trapezoid intervals for [`fourier_coeff_k`].
pub const DEFAULT_QUADRATURE_POINTS: usize = 512;

/// `Γ(u; ω)`, the inverse of the local spectral density.
#[derive(Clone, Debug)]
pub struct LocalSpectralMatrix {
    pub u: f64,
    pub omega: f64,
    pub gamma: DMatrix<Complex64>,
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn hermitian_part(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    (&m + m.adjoint()).map(|z| z * 0.5)
}

/// `I − Σ_j A_j(u) e^{ijω}`.
fn ar_polynomial(model: &TvVarModel, u: f64, omega: f64) -> DMatrix<Complex64> {
    let p = model.p();
    let mut poly = DMatrix::<Complex64>::identity(p, p);
    for (j, a) in model.transitions(u).iter().enumerate() {
        let e = Complex64::from_polar(1.0, (j + 1) as f64 * omega);
        poly -= a.map(|v| e * v);
    }
    poly
}

fn gamma_unchecked(model: &TvVarModel, u: f64, omega: f64, sigma_inv: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let poly = ar_polynomial(model, u, omega);
    hermitian_part(poly.adjoint() * sigma_inv * poly)
}

/// Local spectral precision
///
/// ```text
/// Γ(u; ω) = P(u; ω)^* Σ⁻¹ P(u; ω),   P(u; ω) = I − Σ_j A_j(u) e^{ijω}
/// ```
///
/// so that `Γ(u; ω) = Σ_r D_r(u) e^{−irω}` with `D_r(u)` the precision
/// entries at lag `r` (`D_{t,t+r}`). This is the orientation under which
/// `Γ(u; ω_k)` is the diagonal limit of the dual-frequency precision `K_n`
/// built from the DFT `n^{-1/2} Σ_t X_t e^{itω_k}`.
pub fn local_spectral_precision(model: &TvVarModel, u: f64, omega: f64) -> Result<LocalSpectralMatrix> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::TimeOutOfRange(u));
    }
    let poly = ar_polynomial(model, u, omega);
    let smin = poly.clone().singular_values().min();
    if smin < 1e-12 {
        return Err(Error::SingularPolynomial { u, omega });
    }
    let sinv = to_complex(model.sigma_inv());
    Ok(LocalSpectralMatrix {
        u,
        omega,
        gamma: hermitian_part(poly.adjoint() * sinv * poly),
    })
}

/// `K_r(ω) = ∫_0^1 e^{−2πiru} Γ(u; ω) du` by the composite trapezoid rule
/// with `quadrature_points` intervals.
///
/// The integrand is not periodic in `u`, so the rule is second order: the
/// error is `O(quadrature_points⁻²)` times the jump in `∂_u Γ` between the
/// endpoints (about `1e-6` at the default for the builtin systems) and
/// vanishes for coefficient functions that are flat at both ends.
pub fn fourier_coeff_k(model: &TvVarModel, r: i64, omega: f64, quadrature_points: usize) -> Result<DMatrix<Complex64>> {
    if quadrature_points < 64 {
        return Err(Error::InvalidArgument("quadrature needs at least 64 points".into()));
    }
    let sinv = to_complex(model.sigma_inv());
    let p = model.p();
    let h = 1.0 / quadrature_points as f64;
    let mut acc = DMatrix::<Complex64>::zeros(p, p);
    for i in 0..=quadrature_points {
        let u = i as f64 * h;
        let w = if i == 0 || i == quadrature_points { 0.5 * h } else { h };
        let e = Complex64::from_polar(w, -2.0 * PI * r as f64 * u);
        acc += gamma_unchecked(model, u, omega, &sinv).map(|z| z * e);
    }
    Ok(acc)
}

/// `K_r(ω)` on a rectangular `(r, ω)` grid.
#[derive(Clone, Debug)]
pub struct FourierCoefficientTable {
    pub r_values: Vec<i64>,
    pub omegas: Vec<f64>,
    /// `values[i][j]` is `K_{r_values[i]}(omegas[j])`.
    pub values: Vec<Vec<DMatrix<Complex64>>>,
}

pub fn fourier_table(
    model: &TvVarModel,
    r_values: &[i64],
    omegas: &[f64],
    quadrature_points: usize,
) -> Result<FourierCoefficientTable> {
    let values = r_values
        .iter()
        .map(|&r| {
            omegas
                .iter()
                .map(|&w| fourier_coeff_k(model, r, w, quadrature_points))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FourierCoefficientTable {
        r_values: r_values.to_vec(),
        omegas: omegas.to_vec(),
        values,
    })
}

/// 2×2 restrictions of `Γ(u; ω)` to nodes `(a, b)` on an `ω` grid.
pub fn gamma_block(model: &TvVarModel, u: f64, a: usize, b: usize, omegas: &[f64]) -> Result<Vec<DMatrix<Complex64>>> {
    omegas
        .iter()
        .map(|&w| {
            let g = local_spectral_precision(model, u, w)?.gamma;
            Ok(DMatrix::from_row_slice(
                2,
                2,
                &[g[(a, a)], g[(a, b)], g[(b, a)], g[(b, b)]],
            ))
        })
        .collect()
}

/// Partial spectral coherence on an `ω` grid.
#[derive(Clone, Debug)]
pub struct CoherenceCurve {
    pub pair: (usize, usize),
    pub omegas: Vec<f64>,
    pub values: Vec<Complex64>,
}

/// `R_{a,b}(ω) = −Γ^{(a,b)}(ω) / sqrt(Γ^{(a,a)}(ω) Γ^{(b,b)}(ω))` from 2×2
/// blocks ordered `(a, b)`. Fails on nonpositive diagonals and on blocks
/// that are not positive semidefinite (`|R| > 1`).
pub fn partial_coherence_stationary_pair(
    pair: (usize, usize),
    omegas: &[f64],
    gamma_blocks: &[DMatrix<Complex64>],
) -> Result<CoherenceCurve> {
    if omegas.len() != gamma_blocks.len() {
        return Err(Error::ShapeMismatch("one 2x2 block per frequency is required".into()));
    }
    let values = gamma_blocks
        .iter()
        .zip(omegas)
        .map(|(g, &w)| {
            if g.shape() != (2, 2) {
                return Err(Error::ShapeMismatch("coherence needs 2x2 blocks".into()));
            }
            let (gaa, gbb) = (g[(0, 0)], g[(1, 1)]);
            let real_pos = |z: Complex64| z.re > 0.0 && z.im.abs() <= 1e-12 * z.re.max(1.0);
            if !real_pos(gaa) || !real_pos(gbb) {
                return Err(Error::InvalidArgument(format!("nonpositive diagonal at omega = {w}")));
            }
            let r = -g[(0, 1)] / (gaa.re * gbb.re).sqrt();
            if r.norm() > 1.0 + 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "|R| = {} > 1 at omega = {w}: block is not positive semidefinite",
                    r.norm()
                )));
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceCurve {
        pair,
        omegas: omegas.to_vec(),
        values,
    })
}

fn normalised_offdiag(m: &DMatrix<Complex64>) -> Complex64 {
    m[(0, 1)] / (m[(0, 0)].re * m[(1, 1)].re).sqrt()
}

/// Coherence computed by inverting a 2×2 block of `Γ`: with `P = Γ_block⁻¹`,
/// `R = P_ab / sqrt(P_aa P_bb)`.
pub fn partial_coherence_from_inverse(gamma_block: &DMatrix<Complex64>) -> Result<Complex64> {
    let inv = gamma_block.clone().try_inverse().ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    Ok(normalised_offdiag(&inv))
}

/// Coherence from the spectral density `S(ω)` via the Schur complement
/// `g = S_II − S_{I,−} S_{−}⁻¹ S_{−,I}` for `I = (a, b)`, `R = g_ab / sqrt(g_aa g_bb)`.
pub fn partial_coherence_g_ratio(spectral_density: &DMatrix<Complex64>, a: usize, b: usize) -> Result<Complex64> {
    let p = spectral_density.nrows();
    if a == b || a >= p || b >= p {
        return Err(Error::InvalidArgument("need two distinct nodes".into()));
    }
    let pair = [a, b];
    let rest: Vec<usize> = (0..p).filter(|&c| c != a && c != b).collect();
    let s_ii = spectral_density.select_rows(&pair).select_columns(&pair);
    if rest.is_empty() {
        return Ok(normalised_offdiag(&s_ii));
    }
    let s_ir = spectral_density.select_rows(&pair).select_columns(&rest);
    let s_rr = spectral_density.select_rows(&rest).select_columns(&rest);
    let solved = s_rr.lu().solve(&s_ir.adjoint()).ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    let g = s_ii - s_ir * solved;
    Ok(normalised_offdiag(&g))
}
