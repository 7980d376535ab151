//! Optimal-structure precoder
//! `w_k ∝ (I_N + Σ_i λ_i/σ² h_i h_iᴴ)⁻¹ h_k`.
//!
//! With `D = diag(λ)/σ²` and `G = HᴴH`, the push-through identity gives
//! `(I_N + H D Hᴴ)⁻¹ H = H (I_K + D G)⁻¹`, so only a `K × K` system is
//! solved. With `S = D^{1/2}` the inverse is
//! `T = I - S (I + S G S)⁻¹ S G`, where `I + S G S` is Hermitian positive
//! definite and Cholesky-factorised. One step of iterative refinement
//! recovers the digits lost to cancellation when `λ‖h‖²/σ²` is large.

use nalgebra::{DMatrix, DVector};

use super::{normalize_columns, se_from_sinr, PrecodeProblem};
use crate::{Error, Result, C64};

/// Cached Gram-domain evaluator for one problem instance.
#[derive(Debug, Clone)]
pub struct StructureSolver {
    h: DMatrix<C64>,
    gram: DMatrix<C64>,
    noise_var: f64,
}

impl StructureSolver {
    pub fn new(prob: &PrecodeProblem) -> Self {
        let h = prob.h().clone();
        let gram = h.adjoint() * &h;
        Self {
            h,
            gram,
            noise_var: prob.noise_var,
        }
    }

    pub fn gram(&self) -> &DMatrix<C64> {
        &self.gram
    }

    fn check_duals(&self, duals: &[f64]) -> Result<()> {
        let k = self.gram.nrows();
        if duals.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: duals.len(),
            });
        }
        if duals.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig("dual weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// `T = (I_K + diag(λ/σ²) G)⁻¹`.
    fn transform(&self, duals: &[f64]) -> DMatrix<C64> {
        let k = self.gram.nrows();
        let s: DVector<f64> = DVector::from_iterator(k, duals.iter().map(|l| (l / self.noise_var).sqrt()));
        let eye = DMatrix::<C64>::identity(k, k);
        let m = DMatrix::from_fn(k, k, |i, j| {
            let v = self.gram[(i, j)] * (s[i] * s[j]);
            if i == j {
                v + 1.0
            } else {
                v
            }
        });
        // S G
        let sg = DMatrix::from_fn(k, k, |i, j| self.gram[(i, j)] * s[i]);
        let chol = m.cholesky().expect("I + S G S is positive definite");
        let mut t = &eye - sg_left(&s, &chol.solve(&sg));

        // (I + D G) = I + S (S G)
        let a = &eye + sg_left(&s, &sg);
        let residual = &eye - &a * &t;
        t += &t * residual;
        t
    }

    /// Unit-norm directions `W`.
    pub fn directions(&self, duals: &[f64]) -> Result<DMatrix<C64>> {
        self.check_duals(duals)?;
        normalize_columns(&self.h * self.transform(duals))
    }

    /// Per-user SINR without forming `W`; a zero-norm direction gives 0.
    pub fn sinr(&self, duals: &[f64], powers: &[f64]) -> Result<Vec<f64>> {
        self.check_duals(duals)?;
        let k = self.gram.nrows();
        if powers.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: powers.len(),
            });
        }
        let t = self.transform(duals);
        // h_iᴴ w̃_j = (G T)_{ij},  ‖w̃_j‖² = (Tᴴ G T)_{jj}
        let gt = &self.gram * &t;
        let mut cross = gt.clone();
        for j in 0..k {
            let norm2 = t.column(j).dotc(&gt.column(j)).re;
            let scale = if norm2 > 0.0 { 1.0 / norm2.sqrt() } else { 0.0 };
            cross.column_mut(j).scale_mut(scale);
        }
        Ok(super::sinr_from_cross(&cross, powers, self.noise_var))
    }

    pub fn sum_se(&self, duals: &[f64], powers: &[f64]) -> Result<f64> {
        Ok(se_from_sinr(&self.sinr(duals, powers)?))
    }
}

/// `diag(s) * m`.
fn sg_left(s: &DVector<f64>, m: &DMatrix<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s[i])
}

/// Directions of the optimal-structure precoder for dual weights `duals`.
pub fn structure_precoder(prob: &PrecodeProblem, duals: &[f64]) -> Result<DMatrix<C64>> {
    StructureSolver::new(prob).directions(duals)
}
