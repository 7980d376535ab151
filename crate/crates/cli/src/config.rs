//! JSON run configuration. Every section is optional and falls back to its
//! defaults; unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nearfield::fieldsplit::MixedPopulation;
use nearfield::geometry::{ArrayConfig, PathGain, UserBox};
use nearfield::precoding::{PowerRule, DEFAULT_ORACLE_BUDGET};
use nearfield::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub array: ArrayConfig,
    /// Defaults to `normalized`, which makes every `snr_db` the receive SNR
    /// per antenna. With `free_space` the Friis loss is inside the channel.
    pub path_gain: PathGain,
    pub user_box: UserBox,
    pub k_users: usize,
    pub seed: u64,
    /// Relative paths are resolved against the config file's directory.
    pub out_dir: PathBuf,
    pub codebook: CodebookParams,
    pub gen: GenParams,
    pub sweep_snr: SweepSnrParams,
    pub ldma_vs_sdma: LdmaParams,
    pub classify: ClassifyParams,
    pub gainmap: GainmapParams,
    pub score: ScoreParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            array: ArrayConfig::default(),
            path_gain: PathGain::Normalized,
            user_box: UserBox::default(),
            k_users: 4,
            seed: 0,
            out_dir: PathBuf::from("out"),
            codebook: CodebookParams::default(),
            gen: GenParams::default(),
            sweep_snr: SweepSnrParams::default(),
            ldma_vs_sdma: LdmaParams::default(),
            classify: ClassifyParams::default(),
            gainmap: GainmapParams::default(),
            score: ScoreParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookParams {
    pub n_angles: usize,
    pub n_dist_slots: usize,
    pub r_min_m: f64,
    pub power_rule: PowerRule,
}

impl Default for CodebookParams {
    fn default() -> Self {
        Self {
            n_angles: 256,
            n_dist_slots: 8,
            r_min_m: 10.0,
            power_rule: PowerRule::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub snr_db: f64,
    pub with_oracle: bool,
    pub oracle_budget: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            train: 8000,
            val: 1000,
            test: 1000,
            snr_db: 30.0,
            with_oracle: true,
            oracle_budget: DEFAULT_ORACLE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSnrParams {
    /// Manifest of an existing dataset. When absent, `records` fresh
    /// records are drawn from the top-level scenario.
    pub dataset: Option<PathBuf>,
    pub records: usize,
    pub snr_db: Vec<f64>,
    pub oracle_budget: usize,
}

impl Default for SweepSnrParams {
    fn default() -> Self {
        Self {
            dataset: None,
            records: 20,
            snr_db: vec![-10.0, 0.0, 10.0, 20.0, 30.0],
            oracle_budget: DEFAULT_ORACLE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdmaParams {
    pub near_r_m: f64,
    pub deltas_m: Vec<f64>,
    pub n_seeds: usize,
    pub snr_db: f64,
}

impl Default for LdmaParams {
    fn default() -> Self {
        Self {
            near_r_m: 20.0,
            deltas_m: vec![0.0, 10.0, 20.0, 40.0, 60.0, 90.0, 120.0, 150.0, 180.0],
            n_seeds: 100,
            snr_db: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyParams {
    /// Defaults to four angles per antenna.
    pub angle_grid_size: Option<usize>,
    pub val_per_class: usize,
    pub test_per_class: usize,
    /// Near-user distances as fractions of the Rayleigh distance.
    pub near_range: (f64, f64),
    /// Far-user distances as multiples of the Rayleigh distance.
    pub far_range: (f64, f64),
    pub cos_range: (f64, f64),
    /// `null` is noiseless CSI.
    pub csi_snr_db: Vec<Option<f64>>,
    /// Independent noise draws averaged per CSI SNR.
    pub noise_draws: usize,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        let p = MixedPopulation::balanced(0);
        Self {
            angle_grid_size: None,
            val_per_class: 500,
            test_per_class: 500,
            near_range: p.near_range,
            far_range: p.far_range,
            cos_range: p.cos_range,
            csi_snr_db: vec![None, Some(30.0), Some(20.0), Some(10.0), Some(5.0), Some(0.0)],
            noise_draws: 1,
        }
    }
}

impl ClassifyParams {
    pub fn population(&self, per_class: usize) -> MixedPopulation {
        MixedPopulation {
            n_near: per_class,
            n_far: per_class,
            near_range: self.near_range,
            far_range: self.far_range,
            cos_range: self.cos_range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BeamSpec {
    Focus { angle_rad: f64, r_m: f64 },
    Steer { angle_rad: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Span {
    /// `count` evenly spaced values including both ends.
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + step * i as f64).collect()
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.count == 0 || !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::InvalidConfig(format!("{what}: need finite min <= max and count >= 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainmapParams {
    pub beam: BeamSpec,
    pub angles_rad: Span,
    pub distances_m: Span,
}

impl Default for GainmapParams {
    fn default() -> Self {
        Self {
            beam: BeamSpec::Focus {
                angle_rad: std::f64::consts::FRAC_PI_2,
                r_m: 20.0,
            },
            angles_rad: Span {
                min: 1.2,
                max: 1.9,
                count: 71,
            },
            distances_m: Span {
                min: 5.0,
                max: 100.0,
                count: 96,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreParams {
    pub dataset: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

impl RunConfig {
    /// Parses and validates `path`, resolving relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.out_dir);
        if let Some(p) = cfg.sweep_snr.dataset.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.score.dataset.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.score.predictions.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that apply to every command. Command-specific sections are
    /// checked when the command runs.
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.user_box.validate()?;
        if self.k_users == 0 {
            return Err(Error::InvalidConfig("k_users must be at least 1".into()));
        }
        let c = &self.codebook;
        if c.n_angles == 0 || c.n_dist_slots == 0 {
            return Err(Error::InvalidConfig("codebook sizes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn validate_gainmap(&self) -> Result<()> {
        self.gainmap.angles_rad.validate("gainmap.angles_rad")?;
        self.gainmap.distances_m.validate("gainmap.distances_m")?;
        if self.gainmap.distances_m.min <= 0.0 {
            return Err(Error::InvalidConfig("gainmap distances must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected_at_every_level() {
        for doc in [
            r#"{"bogus": 1}"#,
            r#"{"gen": {"train": 5, "bogus": 1}}"#,
            r#"{"array": {"n_antennas": 8, "carrier_hz": 3e10, "spacing_m": 0.005, "bs_height_m": 15, "tilt_rad": 0, "x": 1}}"#,
            r#"{"gainmap": {"beam": {"steer": {"angle_rad": 1, "r_m": 3}}}}"#,
        ] {
            assert!(serde_json::from_str::<RunConfig>(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn span_values() {
        let s = Span {
            min: 1.0,
            max: 2.0,
            count: 3,
        };
        assert_eq!(s.values(), vec![1.0, 1.5, 2.0]);
        assert_eq!(Span { count: 1, ..s }.values(), vec![1.0]);
    }
}
