//! Polar (LDMA) against angular (SDMA) codebooks for two users on one ray.

use rayon::prelude::*;

use super::{codebook_precoder, sum_se, PowerRule, PrecodeProblem};
use crate::beams::{angular_codebook, polar_codebook, ServiceSector};
use crate::geometry::{channel_matrix, derive_seed, sample_users, ArrayConfig, ChannelModel, PathGain, UserBox};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SameAngleSweep {
    /// Distance of the nearer user.
    pub near_r_m: f64,
    /// Extra distance of the second user, one sweep point each.
    pub deltas_m: Vec<f64>,
    /// Number of random common angles averaged per point.
    pub n_seeds: usize,
    pub snr_db: f64,
    pub path_gain: PathGain,
    pub power_rule: PowerRule,
    /// Common angles are those of uniform points in this box; it also fixes
    /// the codebook sector.
    pub user_box: UserBox,
    pub n_angles: usize,
    pub n_dist_slots: usize,
    pub r_min_m: f64,
}

impl Default for SameAngleSweep {
    fn default() -> Self {
        Self {
            near_r_m: 20.0,
            deltas_m: vec![0.0, 10.0, 20.0, 40.0, 60.0, 90.0, 120.0, 150.0, 180.0],
            n_seeds: 100,
            snr_db: 30.0,
            path_gain: PathGain::Normalized,
            power_rule: PowerRule::Equal,
            user_box: UserBox::default(),
            n_angles: 256,
            n_dist_slots: 8,
            r_min_m: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapPoint {
    pub delta_r_m: f64,
    /// Mean sum SE with the polar codebook.
    pub se_ldma: f64,
    /// Mean sum SE with the angular codebook.
    pub se_sdma: f64,
}

impl GapPoint {
    pub fn gap(&self) -> f64 {
        self.se_ldma - self.se_sdma
    }
}

/// Mean sum SE of both codebook precoders at every separation. The common
/// angle for seed index `s` comes from the stream `(seed, s)`.
pub fn same_angle_sweep(cfg: &ArrayConfig, sweep: &SameAngleSweep, seed: u64) -> Result<Vec<GapPoint>> {
    cfg.validate()?;
    sweep.user_box.validate()?;
    if sweep.n_seeds == 0 {
        return Err(Error::InvalidConfig("n_seeds must be at least 1".into()));
    }
    if !(sweep.near_r_m.is_finite() && sweep.near_r_m > 0.0) {
        return Err(Error::InvalidConfig("near_r_m must be positive".into()));
    }
    if sweep.deltas_m.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::InvalidConfig("distance separations must be finite and >= 0".into()));
    }
    let sector = ServiceSector::from_box(cfg, &sweep.user_box);
    let polar = polar_codebook(cfg, sector, sweep.n_angles, sweep.n_dist_slots, sweep.r_min_m)?;
    let angular = angular_codebook(cfg, sector, sweep.n_angles)?;

    let per_seed = (0..sweep.n_seeds as u64)
        .into_par_iter()
        .map(|s| {
            let anchor = sample_users(1, &sweep.user_box, derive_seed(seed, s))?[0];
            let (angle, _) = cfg.to_polar(anchor);
            sweep
                .deltas_m
                .iter()
                .map(|&d| {
                    let users = [
                        cfg.from_polar(angle, sweep.near_r_m),
                        cfg.from_polar(angle, sweep.near_r_m + d),
                    ];
                    let h = channel_matrix(cfg, &users, ChannelModel::NearSpherical, sweep.path_gain)?;
                    let prob = PrecodeProblem::from_snr_db(h, sweep.snr_db)?;
                    let ldma = sum_se(&prob, &codebook_precoder(&prob, &polar, sweep.power_rule)?)?;
                    let sdma = sum_se(&prob, &codebook_precoder(&prob, &angular, sweep.power_rule)?)?;
                    Ok((ldma, sdma))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let n = sweep.n_seeds as f64;
    Ok(sweep
        .deltas_m
        .iter()
        .enumerate()
        .map(|(i, &d)| GapPoint {
            delta_r_m: d,
            se_ldma: per_seed.iter().map(|v| v[i].0).sum::<f64>() / n,
            se_sdma: per_seed.iter().map(|v| v[i].1).sum::<f64>() / n,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (ArrayConfig, SameAngleSweep) {
        let cfg = ArrayConfig::half_wavelength(64, 30e9, 15.0, 0.05).unwrap();
        let sweep = SameAngleSweep {
            near_r_m: 5.0,
            deltas_m: vec![0.0, 20.0],
            n_seeds: 4,
            n_angles: 64,
            n_dist_slots: 4,
            r_min_m: 2.0,
            ..SameAngleSweep::default()
        };
        (cfg, sweep)
    }

    #[test]
    fn colocated_users_are_interference_limited() {
        // identical channels: log2(1 + a/b) + log2(1 + b/a) >= 2 with noise
        // small, whatever the two beam gains a and b are
        let (cfg, sweep) = small();
        let p = same_angle_sweep(&cfg, &sweep, 1).unwrap()[0];
        for se in [p.se_ldma, p.se_sdma] {
            assert!((1.99..4.0).contains(&se), "{p:?}");
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let (cfg, sweep) = small();
        assert_eq!(same_angle_sweep(&cfg, &sweep, 9).unwrap(), same_angle_sweep(&cfg, &sweep, 9).unwrap());
        let bad = SameAngleSweep { n_seeds: 0, ..sweep.clone() };
        assert!(same_angle_sweep(&cfg, &bad, 0).is_err());
        let bad = SameAngleSweep { deltas_m: vec![-1.0], ..sweep };
        assert!(same_angle_sweep(&cfg, &bad, 0).is_err());
    }
}
