//! Near/far-field classification from the channel alone.
//!
//! The statistic is the best normalised correlation between a user's channel
//! and any far-field steering vector on a dense angle grid. Planar-wave
//! channels reach 1 at their own angle; spherical-wave channels spread
//! energy across angles and stay well below 1. No distance estimate is used.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::beams::steer_vector;
use crate::geometry::{label_field, rayleigh_distance, stream_rng, ArrayConfig, ChannelMatrix, FieldLabel, UserPos};
use crate::{Error, Result, C64};

/// Best far-field fit, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FieldStat(pub f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub angle_grid_size: usize,
    /// Users with a statistic at or above this are labelled far.
    pub threshold: f64,
}

impl ClassifierConfig {
    /// `4N` grid angles and an uncalibrated threshold of 0.95.
    pub fn for_array(cfg: &ArrayConfig) -> Self {
        Self {
            angle_grid_size: 4 * cfg.n_antennas,
            threshold: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.angle_grid_size < 2 {
            return Err(Error::InvalidConfig("angle grid needs at least 2 points".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig("threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// `grid_size` angles with `cos` uniform on `[-1, 1)`. Grids of size `G` and
/// `mG` are nested.
pub fn fit_angles(grid_size: usize) -> Vec<f64> {
    (0..grid_size)
        .map(|i| (-1.0 + 2.0 * i as f64 / grid_size as f64).acos())
        .collect()
}

/// Precomputed steering dictionary for repeated statistics on one array.
#[derive(Debug, Clone)]
pub struct FarFieldFitter {
    /// `N × G`, one unit-norm steering vector per column.
    dictionary: DMatrix<C64>,
}

impl FarFieldFitter {
    pub fn new(cfg: &ArrayConfig, grid_size: usize) -> Result<Self> {
        if grid_size < 2 {
            return Err(Error::InvalidConfig("angle grid needs at least 2 points".into()));
        }
        let beams: Vec<_> = fit_angles(grid_size)
            .into_iter()
            .map(|a| steer_vector(cfg, a).entries)
            .collect();
        Ok(Self {
            dictionary: DMatrix::from_columns(&beams),
        })
    }

    pub fn stat(&self, h: &DVector<C64>) -> Result<FieldStat> {
        let n = self.dictionary.nrows();
        if h.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: h.len(),
            });
        }
        let norm = h.norm();
        if norm == 0.0 {
            return Ok(FieldStat(0.0));
        }
        let best = self
            .dictionary
            .ad_mul(h)
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        Ok(FieldStat((best / norm).min(1.0)))
    }
}

pub fn field_stat(cfg: &ArrayConfig, h: &DVector<C64>, grid_size: usize) -> Result<FieldStat> {
    FarFieldFitter::new(cfg, grid_size)?.stat(h)
}

pub fn classify(cfg: &ArrayConfig, channels: &ChannelMatrix, cc: &ClassifierConfig) -> Result<Vec<FieldLabel>> {
    cc.validate()?;
    let fitter = FarFieldFitter::new(cfg, cc.angle_grid_size)?;
    (0..channels.n_users())
        .map(|k| {
            let s = fitter.stat(&channels.column(k))?;
            Ok(label_for(s, cc.threshold))
        })
        .collect()
}

#[inline]
pub fn label_for(stat: FieldStat, threshold: f64) -> FieldLabel {
    if stat.0 >= threshold {
        FieldLabel::Far
    } else {
        FieldLabel::Near
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub threshold: f64,
    pub balanced_accuracy: f64,
}

/// Threshold maximising balanced accuracy over `(statistic, truth)` pairs.
///
/// Candidates are the smallest statistic (everything far) and the midpoints
/// between adjacent distinct statistics; the lowest best candidate wins.
pub fn calibrate_threshold(samples: &[(f64, FieldLabel)]) -> Result<Calibration> {
    let n_near = samples.iter().filter(|s| s.1 == FieldLabel::Near).count();
    let n_far = samples.len() - n_near;
    if n_near == 0 || n_far == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let balanced = |near_ok: usize, far_ok: usize| {
        0.5 * (near_ok as f64 / n_near as f64 + far_ok as f64 / n_far as f64)
    };
    let mut best = Calibration {
        threshold: sorted[0].0,
        balanced_accuracy: balanced(0, n_far),
    };
    // walk groups of equal statistics; after each group every statistic seen
    // so far would be labelled near
    let (mut near_below, mut far_below) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == v {
            match sorted[i].1 {
                FieldLabel::Near => near_below += 1,
                FieldLabel::Far => far_below += 1,
            }
            i += 1;
        }
        if i == sorted.len() {
            break;
        }
        let ba = balanced(near_below, n_far - far_below);
        if ba > best.balanced_accuracy {
            best = Calibration {
                threshold: 0.5 * (v + sorted[i].0),
                balanced_accuracy: ba,
            };
        }
    }
    best.threshold = best.threshold.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassRates {
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Confusion {
    pub near_as_near: usize,
    pub near_as_far: usize,
    pub far_as_near: usize,
    pub far_as_far: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub near: ClassRates,
    pub far: ClassRates,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Standard confusion counts; any rate with a zero denominator is 0.
pub fn confusion(pred: &[FieldLabel], truth: &[FieldLabel]) -> Result<Confusion> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let mut c = Confusion::default();
    for (p, t) in pred.iter().zip(truth) {
        match (t, p) {
            (FieldLabel::Near, FieldLabel::Near) => c.near_as_near += 1,
            (FieldLabel::Near, FieldLabel::Far) => c.near_as_far += 1,
            (FieldLabel::Far, FieldLabel::Near) => c.far_as_near += 1,
            (FieldLabel::Far, FieldLabel::Far) => c.far_as_far += 1,
        }
    }
    let total = pred.len();
    c.accuracy = ratio(c.near_as_near + c.far_as_far, total);
    c.near = ClassRates {
        precision: ratio(c.near_as_near, c.near_as_near + c.far_as_near),
        recall: ratio(c.near_as_near, c.near_as_near + c.near_as_far),
    };
    c.far = ClassRates {
        precision: ratio(c.far_as_far, c.far_as_far + c.near_as_far),
        recall: ratio(c.far_as_far, c.far_as_far + c.far_as_near),
    };
    c.balanced_accuracy = 0.5 * (c.near.recall + c.far.recall);
    Ok(c)
}

/// Adds circular complex Gaussian noise at `csi_snr_db` relative to the mean
/// per-entry power of `h`.
pub fn add_csi_noise<R: Rng + ?Sized>(h: &DVector<C64>, csi_snr_db: f64, rng: &mut R) -> DVector<C64> {
    let per_entry = h.norm_squared() / h.len().max(1) as f64;
    let sigma = (per_entry * 10f64.powf(-csi_snr_db / 10.0) / 2.0).sqrt();
    h.map(|v| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        v + C64::new(sigma * re, sigma * im)
    })
}

/// Users drawn at controlled multiples of the Rayleigh distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedPopulation {
    pub n_near: usize,
    pub n_far: usize,
    /// Distance range of near users, as fractions of the Rayleigh distance.
    pub near_range: (f64, f64),
    /// Distance range of far users, as multiples of the Rayleigh distance.
    pub far_range: (f64, f64),
    /// `cos(angle)` range, angles measured from the array axis.
    pub cos_range: (f64, f64),
}

impl MixedPopulation {
    pub fn balanced(per_class: usize) -> Self {
        Self {
            n_near: per_class,
            n_far: per_class,
            near_range: (0.02, 0.1),
            far_range: (10.0, 100.0),
            cos_range: (-0.8, 0.8),
        }
    }

    /// Near users first, then far users. User `i` depends only on
    /// `(seed, i)`. Labels are the geometric ground truth.
    pub fn sample(&self, cfg: &ArrayConfig, seed: u64) -> Result<Vec<(UserPos, FieldLabel)>> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi;
        if !ok(self.near_range) || !ok(self.far_range) {
            return Err(Error::InvalidConfig("distance ranges must satisfy 0 < lo <= hi".into()));
        }
        let (c0, c1) = self.cos_range;
        if !(-1.0..=1.0).contains(&c0) || !(-1.0..=1.0).contains(&c1) || c0 > c1 {
            return Err(Error::InvalidConfig("cos range must lie in [-1, 1]".into()));
        }
        let rd = rayleigh_distance(cfg);
        Ok((0..self.n_near + self.n_far)
            .map(|i| {
                let (lo, hi) = if i < self.n_near {
                    self.near_range
                } else {
                    self.far_range
                };
                let mut rng = stream_rng(seed, i as u64);
                let c = c0 + (c1 - c0) * rng.random::<f64>();
                let r = rd * (lo + (hi - lo) * rng.random::<f64>());
                let u = cfg.from_polar(c.acos(), r);
                (u, label_field(cfg, u))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{channel_matrix, far_channel, near_channel, ChannelModel, PathGain};

    #[test]
    fn far_channel_on_grid_fits_exactly() {
        let cfg = ArrayConfig::default();
        let grid = fit_angles(1024);
        let u = cfg.from_polar(grid[300], 5000.0);
        let h = far_channel(&cfg, u, PathGain::FreeSpace).unwrap();
        let s = field_stat(&cfg, &h.entries, 1024).unwrap();
        assert!((s.0 - 1.0).abs() < 1e-9, "{}", s.0);
    }

    #[test]
    fn single_antenna_is_always_far_like() {
        let cfg = ArrayConfig::half_wavelength(1, 30e9, 15.0, 0.0).unwrap();
        let h = near_channel(&cfg, UserPos::new(2.0, 3.0).unwrap(), PathGain::FreeSpace).unwrap();
        assert!((field_stat(&cfg, &h.entries, 8).unwrap().0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn close_user_is_poorly_fit() {
        let cfg = ArrayConfig::default();
        let u = cfg.from_polar(1.4, 0.05 * rayleigh_distance(&cfg));
        let h = near_channel(&cfg, u, PathGain::FreeSpace).unwrap();
        let s = field_stat(&cfg, &h.entries, 1024).unwrap().0;
        assert!(s < 0.6, "{s}");
    }

    #[test]
    fn scale_and_phase_invariance() {
        let cfg = ArrayConfig::default();
        let fitter = FarFieldFitter::new(&cfg, 1024).unwrap();
        let h = near_channel(&cfg, UserPos::new(60.0, 22.0).unwrap(), PathGain::FreeSpace).unwrap();
        let a = fitter.stat(&h.entries).unwrap().0;
        for c in [C64::new(1e6, 0.0), C64::new(0.0, -3.0), C64::from_polar(1e-4, 2.2)] {
            let b = fitter.stat(&(&h.entries * c)).unwrap().0;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_grids_are_monotone() {
        let cfg = ArrayConfig::half_wavelength(64, 30e9, 15.0, 0.0).unwrap();
        let h = near_channel(&cfg, UserPos::new(3.0, 14.0).unwrap(), PathGain::Normalized).unwrap();
        let mut prev = 0.0;
        for g in [8, 16, 64, 256, 1024] {
            let s = field_stat(&cfg, &h.entries, g).unwrap().0;
            assert!(s >= prev);
            prev = s;
        }
        let g8 = fit_angles(8);
        let g16 = fit_angles(16);
        for (i, a) in g8.iter().enumerate() {
            assert_eq!(*a, g16[2 * i]);
        }
    }

    #[test]
    fn stat_dimension_mismatch() {
        let cfg = ArrayConfig::half_wavelength(8, 30e9, 15.0, 0.0).unwrap();
        assert!(matches!(
            field_stat(&cfg, &DVector::zeros(4), 16),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(field_stat(&cfg, &DVector::zeros(8), 1).is_err());
    }

    #[test]
    fn calibration_midpoint_rule() {
        let c = calibrate_threshold(&[(0.3, FieldLabel::Near), (0.9, FieldLabel::Far)]).unwrap();
        assert!((c.threshold - 0.6).abs() < 1e-15);
        assert_eq!(c.balanced_accuracy, 1.0);
    }

    #[test]
    fn calibration_degenerate_and_single_class() {
        let c = calibrate_threshold(&[(0.7, FieldLabel::Near), (0.7, FieldLabel::Far)]).unwrap();
        assert_eq!(c.balanced_accuracy, 0.5);
        assert!(matches!(
            calibrate_threshold(&[(0.7, FieldLabel::Near), (0.2, FieldLabel::Near)]),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn calibration_prefers_lowest_threshold_on_ties() {
        // two equally good cuts: between 0.2/0.4 and between 0.4/0.6
        let s = [
            (0.2, FieldLabel::Near),
            (0.4, FieldLabel::Far),
            (0.6, FieldLabel::Near),
            (0.8, FieldLabel::Far),
        ];
        let c = calibrate_threshold(&s).unwrap();
        assert!((c.threshold - 0.3).abs() < 1e-15);
        assert_eq!(c.balanced_accuracy, 0.75);
    }

    #[test]
    fn confusion_basics() {
        use FieldLabel::*;
        let truth = [Near, Near, Far, Far];
        assert_eq!(confusion(&truth, &truth).unwrap().accuracy, 1.0);
        assert_eq!(confusion(&[Far, Far, Near, Near], &truth).unwrap().accuracy, 0.0);
        let half = confusion(&[Near, Far, Near, Far], &truth).unwrap();
        assert_eq!(half.accuracy, 0.5);
        assert_eq!(half.near.precision, 0.5);
        assert_eq!(half.near.recall, 0.5);
        let none = confusion(&[Near, Near], &[Near, Near]).unwrap();
        assert_eq!(none.far.precision, 0.0);
        assert!(matches!(confusion(&[Near], &truth), Err(Error::LengthMismatch(1, 4))));
    }

    #[test]
    fn classify_far_population_as_far() {
        let cfg = ArrayConfig::default();
        let grid = fit_angles(1024);
        let users: Vec<_> = [100, 400, 700].iter().map(|&i| cfg.from_polar(grid[i], 1e4)).collect();
        let h = channel_matrix(&cfg, &users, ChannelModel::FarPlanar, PathGain::FreeSpace).unwrap();
        let cc = ClassifierConfig {
            angle_grid_size: 1024,
            threshold: 1.0 - 1e-6,
        };
        assert_eq!(classify(&cfg, &h, &cc).unwrap(), vec![FieldLabel::Far; 3]);
        let scaled = h.scaled(C64::new(-2.0, 5.0));
        assert_eq!(classify(&cfg, &scaled, &cc).unwrap(), vec![FieldLabel::Far; 3]);
    }

    #[test]
    fn noise_level() {
        let cfg = ArrayConfig::half_wavelength(256, 30e9, 15.0, 0.0).unwrap();
        let h = near_channel(&cfg, UserPos::new(30.0, 1.0).unwrap(), PathGain::FreeSpace).unwrap();
        let mut rng = stream_rng(1, 0);
        let noisy = add_csi_noise(&h.entries, 10.0, &mut rng);
        let snr = h.entries.norm_squared() / (&noisy - &h.entries).norm_squared();
        assert!((8.0..12.5).contains(&(10.0 * snr.log10())));
    }

    #[test]
    fn population_labels_and_determinism() {
        let cfg = ArrayConfig::default();
        let pop = MixedPopulation::balanced(50);
        let a = pop.sample(&cfg, 3).unwrap();
        assert_eq!(a, pop.sample(&cfg, 3).unwrap());
        assert!(a[..50].iter().all(|(_, l)| *l == FieldLabel::Near));
        assert!(a[50..].iter().all(|(_, l)| *l == FieldLabel::Far));
    }
}
