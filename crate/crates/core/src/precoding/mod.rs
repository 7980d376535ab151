//! Multi-user downlink precoding.
//!
//! A [`PrecodeSolution`] separates unit-norm beam directions from the power
//! split, so every scheme here (MRT, ZF, codebook assignment, the
//! optimal-structure family) is evaluated through the same [`sinr`] /
//! [`sum_se`] path.

mod compare;
mod oracle;
mod power;
mod structure;

use nalgebra::{DMatrix, DVector};

use crate::beams::Codebook;
use crate::geometry::ChannelMatrix;
use crate::{Error, Result, C64};

pub use compare::{same_angle_sweep, GapPoint, SameAngleSweep};
pub use oracle::{oracle_lambda, OracleResult, DEFAULT_ORACLE_BUDGET};
pub use power::{equal_powers, waterfill, PowerRule};
pub use structure::{structure_precoder, StructureSolver};

/// Gram matrices with a condition number above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Slack allowed on the power and dual budgets.
pub const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PrecodeProblem {
    pub channels: ChannelMatrix,
    pub total_power: f64,
    pub noise_var: f64,
}

impl PrecodeProblem {
    pub fn new(channels: ChannelMatrix, total_power: f64, noise_var: f64) -> Result<Self> {
        if channels.n_users() == 0 {
            return Err(Error::InvalidConfig("at least one user is required".into()));
        }
        if !(total_power.is_finite() && total_power > 0.0) {
            return Err(Error::InvalidConfig("total power must be positive".into()));
        }
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::InvalidConfig("noise variance must be positive".into()));
        }
        Ok(Self {
            channels,
            total_power,
            noise_var,
        })
    }

    /// Unit total power with noise set from the transmit SNR `P/σ²` in dB.
    pub fn from_snr_db(channels: ChannelMatrix, snr_db: f64) -> Result<Self> {
        Self::new(channels, 1.0, 10f64.powf(-snr_db / 10.0))
    }

    pub fn n_users(&self) -> usize {
        self.channels.n_users()
    }

    pub fn n_antennas(&self) -> usize {
        self.channels.n_antennas()
    }

    pub(crate) fn h(&self) -> &DMatrix<C64> {
        self.channels.matrix()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecodeSolution {
    /// `N × K`, unit-norm columns.
    pub directions: DMatrix<C64>,
    pub powers: Vec<f64>,
    /// Dual (virtual uplink) weights; all zero for schemes that have none.
    pub duals: Vec<f64>,
}

impl PrecodeSolution {
    /// Checks unit-norm directions and both simplex budgets.
    pub fn check(&self, total_power: f64) -> Result<()> {
        let k = self.directions.ncols();
        for (name, v) in [("powers", &self.powers), ("duals", &self.duals)] {
            if v.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: v.len(),
                });
            }
            if v.iter().any(|&x| !(x >= 0.0)) || v.iter().sum::<f64>() > total_power + BUDGET_TOL {
                return Err(Error::InvalidConfig(format!("{name} violate the power budget")));
            }
        }
        for (j, col) in self.directions.column_iter().enumerate() {
            if (col.norm() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidConfig(format!("direction {j} is not unit norm")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_powers(powers: &[f64], k: usize, total_power: f64) -> Result<()> {
    if powers.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: powers.len(),
        });
    }
    if powers.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(Error::InvalidConfig("powers must be finite and non-negative".into()));
    }
    if powers.iter().sum::<f64>() > total_power + BUDGET_TOL {
        return Err(Error::InvalidConfig("powers exceed the total budget".into()));
    }
    Ok(())
}

pub(crate) fn normalize_columns(mut w: DMatrix<C64>) -> Result<DMatrix<C64>> {
    for (k, mut col) in w.column_iter_mut().enumerate() {
        let n = col.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::ZeroChannel(k));
        }
        col.unscale_mut(n);
    }
    Ok(w)
}

/// Maximum ratio transmission: `w_k = h_k / ‖h_k‖`.
pub fn mrt(prob: &PrecodeProblem, powers: &[f64]) -> Result<PrecodeSolution> {
    let k = prob.n_users();
    check_powers(powers, k, prob.total_power)?;
    Ok(PrecodeSolution {
        directions: normalize_columns(prob.h().clone())?,
        powers: powers.to_vec(),
        duals: vec![0.0; k],
    })
}

/// Condition number of the Hermitian PSD Gram matrix (infinite if singular).
pub(crate) fn gram_condition(gram: &DMatrix<C64>) -> f64 {
    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Zero-forcing: normalised columns of `H (HᴴH)⁻¹`.
pub fn zf(prob: &PrecodeProblem, powers: &[f64]) -> Result<PrecodeSolution> {
    let k = prob.n_users();
    check_powers(powers, k, prob.total_power)?;
    let h = prob.h();
    if k > prob.n_antennas() {
        return Err(Error::RankDeficient {
            cond: f64::INFINITY,
        });
    }
    let gram = h.adjoint() * h;
    let cond = gram_condition(&gram);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::RankDeficient { cond });
    }
    let chol = gram
        .cholesky()
        .ok_or(Error::RankDeficient { cond })?;
    let inv = chol.inverse();
    Ok(PrecodeSolution {
        directions: normalize_columns(h * inv)?,
        powers: powers.to_vec(),
        duals: vec![0.0; k],
    })
}

/// Zero-forcing with powers water-filled over the interference-free
/// effective gains `|h_kᴴ w_k|²`.
pub fn zf_waterfill(prob: &PrecodeProblem) -> Result<PrecodeSolution> {
    let k = prob.n_users();
    let mut sol = zf(prob, &equal_powers(k, prob.total_power))?;
    let cross = prob.h().adjoint() * &sol.directions;
    let gains: Vec<f64> = (0..k).map(|u| cross[(u, u)].norm_sqr()).collect();
    sol.powers = waterfill(&gains, prob.total_power, prob.noise_var)?;
    Ok(sol)
}

/// `SINR_k = P_k |h_kᴴ w_k|² / (Σ_{j≠k} P_j |h_kᴴ w_j|² + σ²)`.
pub fn sinr(prob: &PrecodeProblem, sol: &PrecodeSolution) -> Result<Vec<f64>> {
    let (n, k) = (prob.n_antennas(), prob.n_users());
    if sol.directions.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sol.directions.nrows(),
        });
    }
    if sol.directions.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: sol.directions.ncols(),
        });
    }
    if sol.powers.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: sol.powers.len(),
        });
    }
    // cross[(i, j)] = h_iᴴ w_j
    let cross = prob.h().adjoint() * &sol.directions;
    Ok(sinr_from_cross(&cross, &sol.powers, prob.noise_var))
}

pub(crate) fn sinr_from_cross(cross: &DMatrix<C64>, powers: &[f64], noise_var: f64) -> Vec<f64> {
    let k = powers.len();
    (0..k)
        .map(|i| {
            let signal = powers[i] * cross[(i, i)].norm_sqr();
            let interference: f64 = (0..k)
                .filter(|&j| j != i)
                .map(|j| powers[j] * cross[(i, j)].norm_sqr())
                .sum();
            signal / (interference + noise_var)
        })
        .collect()
}

pub(crate) fn se_from_sinr(sinr: &[f64]) -> f64 {
    sinr.iter().map(|s| (1.0 + s).log2()).sum()
}

/// Sum spectral efficiency `Σ log2(1 + SINR_k)` in bits/s/Hz.
pub fn sum_se(prob: &PrecodeProblem, sol: &PrecodeSolution) -> Result<f64> {
    Ok(se_from_sinr(&sinr(prob, sol)?))
}

/// Assigns every user its best codeword, greedily by gain without reuse.
///
/// Ties go to the lower codeword index, then the lower user index.
pub fn codebook_precoder(
    prob: &PrecodeProblem,
    cb: &Codebook,
    rule: PowerRule,
) -> Result<PrecodeSolution> {
    let k = prob.n_users();
    if cb.is_empty() || k > cb.len() {
        return Err(Error::InsufficientCodebook {
            users: k,
            codewords: cb.len(),
        });
    }
    let n = prob.n_antennas();
    if cb.beams[0].entries.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cb.beams[0].entries.len(),
        });
    }
    let h = prob.h();
    let mut pairs = Vec::with_capacity(k * cb.len());
    for u in 0..k {
        let col: DVector<C64> = h.column(u).into_owned();
        for (c, beam) in cb.beams.iter().enumerate() {
            pairs.push((crate::beams::gain_of(&beam.entries, &col)?, c, u));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut chosen: Vec<Option<usize>> = vec![None; k];
    let mut used = vec![false; cb.len()];
    let mut left = k;
    for (_, c, u) in pairs {
        if chosen[u].is_none() && !used[c] {
            chosen[u] = Some(c);
            used[c] = true;
            left -= 1;
            if left == 0 {
                break;
            }
        }
    }
    let directions = DMatrix::from_fn(n, k, |i, u| {
        cb.beams[chosen[u].expect("every user assigned")].entries[i]
    });
    let powers = match rule {
        PowerRule::Equal => equal_powers(k, prob.total_power),
        PowerRule::Waterfill => {
            let cross = h.adjoint() * &directions;
            let gains: Vec<f64> = (0..k).map(|u| cross[(u, u)].norm_sqr()).collect();
            waterfill(&gains, prob.total_power, prob.noise_var)?
        }
    };
    Ok(PrecodeSolution {
        directions,
        powers,
        duals: vec![0.0; k],
    })
}
