//! Target unitaries (Haar-random, Fourier) and target-vs-effective metrics.

use std::f64::consts::PI;
use std::ops::Deref;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::seed;

/// Tolerance on max |U^dag U - I| for matrices built in memory.
pub const UNITARY_TOL: f64 = 1e-10;

/// Tolerance applied to matrices read from files or handed to the decomposers.
pub const INPUT_UNITARY_TOL: f64 = 1e-8;

/// A square matrix verified to be unitary.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix(ComplexMatrix);

impl UnitaryMatrix {
    /// Wrap `m` after checking unitarity at `tol`.
    pub fn new(m: ComplexMatrix, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidDimension(format!(
                "unitary must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let deviation = m.unitarity_deviation();
        if deviation.is_nan() || deviation > tol {
            return Err(Error::NotUnitary {
                deviation,
                tolerance: tol,
            });
        }
        Ok(Self(m))
    }

    /// Wrap a matrix that is unitary by construction.
    pub(crate) fn from_trusted(m: ComplexMatrix) -> Self {
        debug_assert!(m.is_square());
        Self(m)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Ok(Self(ComplexMatrix::identity(n)?))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }
}

impl Deref for UnitaryMatrix {
    type Target = ComplexMatrix;

    fn deref(&self) -> &ComplexMatrix {
        &self.0
    }
}

/// Relative single-photon transition probability error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    /// mean |P_exp - P| / <P>
    pub mean_rel: f64,
    /// max |P_exp - P| / <P>
    pub max_rel: f64,
}

/// Haar-distributed unitary from the QR factorization of a complex Ginibre matrix.
pub fn haar_random_unitary(n: usize, seed: u64) -> Result<UnitaryMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("mode count must be at least 1".into()));
    }
    let mut rng = seed::rng(seed);
    let data: Vec<Complex64> = (0..n * n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    let z = ComplexMatrix::from_row_major(n, n, data)?.to_nalgebra();
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix the phase freedom of the factorization so Q is Haar distributed.
    for k in 0..n {
        let d = r[(k, k)];
        let norm = d.norm();
        let phase = if norm > 0.0 { d / norm } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, k)] *= phase;
        }
    }
    Ok(UnitaryMatrix(ComplexMatrix::from_nalgebra(&q)))
}

/// Discrete Fourier matrix `F[j][k] = exp(2 pi i j k / n) / sqrt(n)`.
pub fn fourier_matrix(n: usize) -> Result<UnitaryMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("mode count must be at least 1".into()));
    }
    let norm = 1.0 / (n as f64).sqrt();
    let data = (0..n)
        .flat_map(|j| {
            (0..n).map(move |k| {
                // Reduce jk mod n first to keep the angle small and exact.
                let angle = 2.0 * PI * ((j * k) % n) as f64 / n as f64;
                Complex64::from_polar(norm, angle)
            })
        })
        .collect();
    Ok(UnitaryMatrix(ComplexMatrix::from_row_major(n, n, data)?))
}

fn check_same_dim(u: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<usize> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    Ok(u.dim())
}

/// `Tr(U^dag V)`.
pub(crate) fn overlap(u: &ComplexMatrix, v: &ComplexMatrix) -> Complex64 {
    u.as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(a, b)| a.conj() * b)
        .sum()
}

/// Phase-insensitive fidelity `|Tr(U^dag V)|^2 / N^2`.
pub fn fidelity(u: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<f64> {
    let n = check_same_dim(u, v)? as f64;
    // |Tr(U^dag V)| = |Tr(V^dag U)| so the value is symmetric in its arguments.
    let f = overlap(u, v).norm_sqr() / (n * n);
    Ok(f.min(1.0))
}

/// Compare `|U_ij|^2` of target and effective transformation.
pub fn transition_probability_deviation(
    u_target: &UnitaryMatrix,
    u_eff: &UnitaryMatrix,
) -> Result<DeviationReport> {
    let n = check_same_dim(u_target, u_eff)?;
    let mean_p = 1.0 / n as f64;
    let (sum, max) = u_target
        .as_slice()
        .iter()
        .zip(u_eff.as_slice())
        .map(|(a, b)| (b.norm_sqr() - a.norm_sqr()).abs())
        .fold((0.0, 0.0_f64), |(s, m), d| (s + d, m.max(d)));
    Ok(DeviationReport {
        mean_rel: sum / (n * n) as f64 / mean_p,
        max_rel: max / mean_p,
    })
}
