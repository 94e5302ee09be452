//! DFTs, the dual-frequency precision matrix `K_n` and its locally
//! stationary prediction.
//!
//! The DFT follows the `e^{+itω}` convention
//!
//! ```text
//! J_k^{(a)} = n^{-1/2} Σ_{t=1}^{n} X_t^{(a)} e^{itω_k},   ω_k = 2πk/n,   k = 1..=n.
//! ```
//!
//! A conventional forward transform `Y_m = Σ_{j=0}^{n-1} x_j e^{-2πijm/n}`
//! relates to it by `J_k = n^{-1/2} e^{iω_k} conj(Y_k)` for real `x_j = X_{j+1}`
//! (equivalently, reverse the frequency index: `J_k = n^{-1/2} e^{iω_k} Y_{n-k}`).
//! Here it is computed with the unnormalised inverse transform,
//! `J_k = n^{-1/2} e^{iω_k} Σ_j x_j e^{+2πijk/n}`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::{TimeSeriesPanel, TvVarModel};
use crate::oracle::{fourier_coeff_k, precision_section_bruteforce, CovarianceSection, DEFAULT_QUADRATURE_POINTS};

/// `ω_k = 2πk/n`.
pub fn omega(k: i64, n: usize) -> f64 {
    2.0 * PI * k as f64 / n as f64
}

/// Reduces `k` modulo `n` into `1..=n`.
pub fn wrap_index(k: i64, n: usize) -> usize {
    assert!(n > 0, "wrap_index needs n > 0");
    let r = k.rem_euclid(n as i64) as usize;
    if r == 0 {
        n
    } else {
        r
    }
}

/// DFT values of a panel.
#[derive(Clone, Debug, PartialEq)]
pub struct DftPanel {
    /// `values[(k-1, a)] = J_k^{(a)}`.
    values: DMatrix<Complex64>,
}

impl DftPanel {
    pub fn from_values(values: DMatrix<Complex64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidArgument("empty DFT panel".into()));
        }
        Ok(DftPanel { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    /// `J_k^{(a)}` for any integer `k` (wrapped into `1..=n`).
    pub fn get(&self, k: i64, a: usize) -> Complex64 {
        self.values[(wrap_index(k, self.n()) - 1, a)]
    }

    pub fn values(&self) -> &DMatrix<Complex64> {
        &self.values
    }
}

/// Unnormalised `Σ_j x_j e^{+2πijm/n}` for each column, in place.
fn inverse_fft_columns(m: &mut DMatrix<Complex64>, planner: &mut FftPlanner<f64>) {
    let fft = planner.plan_fft_inverse(m.nrows());
    for mut col in m.column_iter_mut() {
        fft.process(col.as_mut_slice());
    }
}

/// DFT of every column with the `e^{+itω_k}` convention and `n^{-1/2}` scaling.
pub fn dft(panel: &TimeSeriesPanel) -> DftPanel {
    let n = panel.n();
    let mut m = panel.data().map(|v| Complex64::new(v, 0.0));
    let mut planner = FftPlanner::new();
    inverse_fft_columns(&mut m, &mut planner);
    // Row m holds frequency index m (m = 0 is k = n); rotate to k = 1..=n and
    // apply the e^{iω_k} phase from the one-based time origin.
    let scale = 1.0 / (n as f64).sqrt();
    let values = DMatrix::from_fn(n, panel.p(), |row, a| {
        let k = row + 1;
        m[(k % n, a)] * Complex64::from_polar(scale, omega(k as i64, n))
    });
    DftPanel { values }
}

/// The `np × np` dual-frequency precision `K_n = F^* D̃_n F`, stored
/// frequency-major: entry `((k1-1)·p + a, (k2-1)·p + b)` is
/// `[K_n(ω_{k1}, ω_{k2})]_{a,b}`.
#[derive(Clone, Debug)]
pub struct DualFrequencyPrecision {
    pub n: usize,
    pub p: usize,
    pub matrix: DMatrix<Complex64>,
}

impl DualFrequencyPrecision {
    /// The `p × p` block at one-based frequencies `(k1, k2)`.
    pub fn block(&self, k1: usize, k2: usize) -> DMatrix<Complex64> {
        self.matrix
            .view(((k1 - 1) * self.p, (k2 - 1) * self.p), (self.p, self.p))
            .into_owned()
    }

    /// Writes all blocks as CSV rows `k1,k2,a,b,re,im` (one-based labels).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k1", "k2", "a", "b", "re", "im"])?;
        for k1 in 1..=self.n {
            for k2 in 1..=self.n {
                for a in 0..self.p {
                    for b in 0..self.p {
                        let z = self.matrix[((k1 - 1) * self.p + a, (k2 - 1) * self.p + b)];
                        wr.write_record(&[
                            k1.to_string(),
                            k2.to_string(),
                            (a + 1).to_string(),
                            (b + 1).to_string(),
                            format!("{:e}", z.re),
                            format!("{:e}", z.im),
                        ])?;
                    }
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Conjugates a time-major `np × np` real matrix with the block DFT:
/// `out[(k1,a),(k2,b)] = n⁻¹ Σ_{t,τ} e^{itω_{k1}} M[(t,a),(τ,b)] e^{−iτω_{k2}}`.
pub fn block_dft_conjugate(m: &DMatrix<f64>, n: usize, p: usize) -> DMatrix<Complex64> {
    assert_eq!(m.shape(), (n * p, n * p));
    let mut planner = FftPlanner::new();
    let inv = planner.plan_fft_inverse(n);
    let fwd = planner.plan_fft_forward(n);
    let phase: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, omega(k as i64 + 1, n)))
        .collect();
    let mut out = DMatrix::zeros(n * p, n * p);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for a in 0..p {
        for b in 0..p {
            // Columns: v[k1, τ] = Σ_t e^{itω_{k1}} M[t, τ].
            let mut v = DMatrix::<Complex64>::zeros(n, n);
            for tau in 0..n {
                for t in 0..n {
                    buf[t] = Complex64::new(m[(t * p + a, tau * p + b)], 0.0);
                }
                inv.process(&mut buf);
                for k in 0..n {
                    // buf[j] = Σ_t M e^{2πi(t-1)j/n}; frequency k uses j = k mod n.
                    v[(k, tau)] = buf[(k + 1) % n] * phase[k];
                }
            }
            // Rows: out[k1, k2] = n⁻¹ Σ_τ v[k1, τ] e^{−iτω_{k2}}.
            for k1 in 0..n {
                for tau in 0..n {
                    buf[tau] = v[(k1, tau)];
                }
                fwd.process(&mut buf);
                for k2 in 0..n {
                    let z = buf[(k2 + 1) % n] * phase[k2].conj() / n as f64;
                    out[(k1 * p + a, k2 * p + b)] = z;
                }
            }
        }
    }
    out
}

/// `K_n = F^* C_n⁻¹ F` from the brute-force inverse of the covariance section.
pub fn dual_frequency_precision(cov: &CovarianceSection) -> Result<DualFrequencyPrecision> {
    let d = precision_section_bruteforce(cov)?;
    Ok(DualFrequencyPrecision {
        n: cov.n,
        p: cov.p,
        matrix: block_dft_conjugate(&d.matrix, cov.n, cov.p),
    })
}

/// The offset `r'` used by [`predicted_block`]: `k2 − k1` shifted by a
/// multiple of `n` into `(−n/2, n/2]`, with `|k2 − k1| = n/2` kept as is.
pub fn wrapped_offset(k1: usize, k2: usize, n: usize) -> i64 {
    let (n, d) = (n as i64, k2 as i64 - k1 as i64);
    if 2 * d.abs() <= n {
        d
    } else if d > 0 {
        d - n
    } else {
        d + n
    }
}

/// Locally stationary prediction of the `(k1, k2)` block of `K_n`:
/// `K_{r'}(ω_{k2})` with `r' = wrapped_offset(k1, k2, n)`.
///
/// Expanding `K_n(k1,k2) = n⁻¹ Σ_t e^{it(ω_{k1}−ω_{k2})} Σ_r D_{t,t+r} e^{−irω_{k2}}`
/// gives the Riemann sum of `∫ e^{−2πi(k2−k1)u} Γ(u; ω_{k2}) du`, hence the
/// offset `k2 − k1`.
pub fn predicted_block(model: &TvVarModel, n: usize, k1: usize, k2: usize) -> Result<DMatrix<Complex64>> {
    predicted_block_with(model, n, k1, k2, DEFAULT_QUADRATURE_POINTS)
}

pub fn predicted_block_with(
    model: &TvVarModel,
    n: usize,
    k1: usize,
    k2: usize,
    quadrature_points: usize,
) -> Result<DMatrix<Complex64>> {
    if k1 == 0 || k2 == 0 || k1 > n || k2 > n {
        return Err(Error::InvalidArgument(format!(
            "frequency indices ({k1}, {k2}) outside 1..={n}"
        )));
    }
    fourier_coeff_k(model, wrapped_offset(k1, k2, n), omega(k2 as i64, n), quadrature_points)
}
