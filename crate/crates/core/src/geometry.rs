//! Base-station array geometry and line-of-sight channel synthesis.
//!
//! Everything lives in the vertical plane through the array and the user:
//! the first coordinate is horizontal ground distance, the second is height.
//! The array is a uniform linear array centred at `(0, bs_height_m)` whose
//! axis is tilted by `tilt_rad` from vertical toward the users (`x > 0`).
//!
//! Angles are measured between the array axis and the centre-to-user
//! direction, so `π/2` is broadside.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform linear array at the base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub n_antennas: usize,
    pub carrier_hz: f64,
    pub spacing_m: f64,
    pub bs_height_m: f64,
    pub tilt_rad: f64,
}

impl Default for ArrayConfig {
    /// 256 elements at 30 GHz, half-wavelength spacing, 15 m high, 5° tilt.
    fn default() -> Self {
        Self::half_wavelength(256, 30e9, 15.0, 5f64.to_radians())
            .expect("default array configuration is valid")
    }
}

impl ArrayConfig {
    pub fn new(
        n_antennas: usize,
        carrier_hz: f64,
        spacing_m: f64,
        bs_height_m: f64,
        tilt_rad: f64,
    ) -> Result<Self> {
        let cfg = Self {
            n_antennas,
            carrier_hz,
            spacing_m,
            bs_height_m,
            tilt_rad,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Array with inter-element spacing of half a carrier wavelength.
    pub fn half_wavelength(
        n_antennas: usize,
        carrier_hz: f64,
        bs_height_m: f64,
        tilt_rad: f64,
    ) -> Result<Self> {
        Self::new(
            n_antennas,
            carrier_hz,
            SPEED_OF_LIGHT / carrier_hz / 2.0,
            bs_height_m,
            tilt_rad,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_antennas == 0 {
            return bad("n_antennas must be at least 1");
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return bad("carrier_hz must be positive");
        }
        if !(self.spacing_m.is_finite() && self.spacing_m > 0.0) {
            return bad("spacing_m must be positive");
        }
        if !(self.bs_height_m.is_finite() && self.bs_height_m >= 0.0) {
            return bad("bs_height_m must be non-negative");
        }
        if !(self.tilt_rad.is_finite() && self.tilt_rad.abs() < PI / 2.0) {
            return bad("|tilt_rad| must be below pi/2");
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Physical aperture `(N - 1) * spacing`.
    pub fn aperture(&self) -> f64 {
        (self.n_antennas - 1) as f64 * self.spacing_m
    }

    /// Signed offset of element `n` from the array centre along the axis.
    #[inline]
    pub fn element_offset(&self, n: usize) -> f64 {
        (n as f64 - (self.n_antennas as f64 - 1.0) / 2.0) * self.spacing_m
    }

    /// Unit vector along the array axis.
    pub fn axis(&self) -> (f64, f64) {
        (self.tilt_rad.sin(), self.tilt_rad.cos())
    }

    /// Unit normal to the axis pointing into the users' half-plane.
    fn normal(&self) -> (f64, f64) {
        (self.tilt_rad.cos(), -self.tilt_rad.sin())
    }

    /// `(angle from axis, distance)` of a point relative to the array centre.
    pub fn to_polar(&self, user: UserPos) -> (f64, f64) {
        let (dx, dy) = (user.x_m, user.h_m - self.bs_height_m);
        let r = dx.hypot(dy);
        let (ax, ay) = self.axis();
        let (nx, ny) = self.normal();
        let along = dx * ax + dy * ay;
        let across = dx * nx + dy * ny;
        (across.atan2(along), r)
    }

    /// Point at `angle` from the axis and distance `r` from the centre.
    ///
    /// The result is not validated against the user box; with a tilted
    /// array, angles close to `π` land at slightly negative `x`.
    pub fn from_polar(&self, angle_rad: f64, r_m: f64) -> UserPos {
        let (ax, ay) = self.axis();
        let (nx, ny) = self.normal();
        let (c, s) = (angle_rad.cos(), angle_rad.sin());
        UserPos {
            x_m: r_m * (c * ax + s * nx),
            h_m: self.bs_height_m + r_m * (c * ay + s * ny),
        }
    }
}

/// User location in the vertical plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserPos {
    /// Horizontal ground distance from the array centre.
    pub x_m: f64,
    /// Altitude.
    pub h_m: f64,
}

impl UserPos {
    pub fn new(x_m: f64, h_m: f64) -> Result<Self> {
        if !(x_m.is_finite() && h_m.is_finite()) {
            return Err(Error::InvalidConfig("user position must be finite".into()));
        }
        if x_m < 0.0 {
            return Err(Error::InvalidConfig("user ground distance must be >= 0".into()));
        }
        Ok(Self { x_m, h_m })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldLabel {
    Far,
    Near,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelModel {
    NearSpherical,
    FarPlanar,
}

/// Large-scale gain applied to every channel entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathGain {
    /// Free-space Friis gain `(λ / 4πr)²` at the centre distance.
    #[default]
    FreeSpace,
    /// Unit gain, for experiments where only the wavefront matters.
    Normalized,
}

impl PathGain {
    pub fn gain(self, cfg: &ArrayConfig, r_m: f64) -> f64 {
        match self {
            PathGain::FreeSpace => (cfg.wavelength() / (4.0 * PI * r_m)).powi(2),
            PathGain::Normalized => 1.0,
        }
    }
}

/// Downlink channel of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVec {
    pub entries: DVector<C64>,
    pub model: ChannelModel,
    pub user: UserPos,
    pub path_gain: f64,
}

/// `N × K` downlink channel, one user per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix(DMatrix<C64>);

impl ChannelMatrix {
    pub fn from_matrix(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn from_columns(cols: &[ChannelVec]) -> Result<Self> {
        let n = cols.first().map_or(0, |c| c.entries.len());
        for c in cols {
            if c.entries.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.entries.len(),
                });
            }
        }
        Ok(Self(DMatrix::from_fn(n, cols.len(), |i, k| cols[k].entries[i])))
    }

    pub fn n_antennas(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.0.ncols()
    }

    pub fn column(&self, k: usize) -> DVector<C64> {
        self.0.column(k).into_owned()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self(self.0.map(|v| v * c))
    }
}

/// Element positions `(x, h)`; the centroid is `(0, bs_height_m)`.
pub fn antenna_positions(cfg: &ArrayConfig) -> Vec<(f64, f64)> {
    let (ax, ay) = cfg.axis();
    (0..cfg.n_antennas)
        .map(|n| {
            let d = cfg.element_offset(n);
            (d * ax, cfg.bs_height_m + d * ay)
        })
        .collect()
}

/// Rayleigh distance `2 D² / λ`; zero for a single element.
pub fn rayleigh_distance(cfg: &ArrayConfig) -> f64 {
    let d = cfg.aperture();
    2.0 * d * d / cfg.wavelength()
}

/// Ground-truth label: near iff the centre distance is strictly below the
/// Rayleigh distance.
pub fn label_field(cfg: &ArrayConfig, user: UserPos) -> FieldLabel {
    let r = user.x_m.hypot(user.h_m - cfg.bs_height_m);
    if r < rayleigh_distance(cfg) {
        FieldLabel::Near
    } else {
        FieldLabel::Far
    }
}

/// Per-element path difference `r_n - r` (exact spherical wavefront).
///
/// Uses `(r_n² - r²) / (r_n + r)` so that far users keep full precision.
pub(crate) fn spherical_path_differences(cfg: &ArrayConfig, user: UserPos) -> Result<Vec<f64>> {
    let (ax, ay) = cfg.axis();
    let (dx, dy) = (user.x_m, user.h_m - cfg.bs_height_m);
    let r = dx.hypot(dy);
    if r == 0.0 {
        return Err(Error::CoincidentUser);
    }
    let along = dx * ax + dy * ay;
    (0..cfg.n_antennas)
        .map(|n| {
            let d = cfg.element_offset(n);
            let r_n = (dx - d * ax).hypot(dy - d * ay);
            if r_n == 0.0 {
                return Err(Error::CoincidentUser);
            }
            Ok((d * d - 2.0 * d * along) / (r_n + r))
        })
        .collect()
}

#[inline]
fn phasor(cycles: f64) -> C64 {
    C64::from_polar(1.0, -2.0 * PI * cycles)
}

fn center_distance(cfg: &ArrayConfig, user: UserPos) -> Result<f64> {
    let r = user.x_m.hypot(user.h_m - cfg.bs_height_m);
    if r == 0.0 {
        Err(Error::CoincidentUser)
    } else {
        Ok(r)
    }
}

/// Spherical-wave LoS channel: entry `n` is `√β · exp(-j 2π r_n / λ)`.
pub fn near_channel(cfg: &ArrayConfig, user: UserPos, gain: PathGain) -> Result<ChannelVec> {
    let r = center_distance(cfg, user)?;
    let lambda = cfg.wavelength();
    let beta = gain.gain(cfg, r);
    let amp = beta.sqrt();
    let base = (r / lambda).fract();
    let diffs = spherical_path_differences(cfg, user)?;
    let entries = DVector::from_iterator(
        cfg.n_antennas,
        diffs.into_iter().map(|d| amp * phasor(base + d / lambda)),
    );
    Ok(ChannelVec {
        entries,
        model: ChannelModel::NearSpherical,
        user,
        path_gain: beta,
    })
}

/// Planar-wave LoS channel: entry `n` is `√β · exp(-j 2π (r - δ_n cos ψ) / λ)`.
pub fn far_channel(cfg: &ArrayConfig, user: UserPos, gain: PathGain) -> Result<ChannelVec> {
    let r = center_distance(cfg, user)?;
    // Same coincidence rule as the spherical model.
    spherical_path_differences(cfg, user)?;
    let lambda = cfg.wavelength();
    let beta = gain.gain(cfg, r);
    let amp = beta.sqrt();
    let base = (r / lambda).fract();
    let (ax, ay) = cfg.axis();
    let cos_psi = (user.x_m * ax + (user.h_m - cfg.bs_height_m) * ay) / r;
    let entries = DVector::from_fn(cfg.n_antennas, |n, _| {
        amp * phasor(base - cfg.element_offset(n) * cos_psi / lambda)
    });
    Ok(ChannelVec {
        entries,
        model: ChannelModel::FarPlanar,
        user,
        path_gain: beta,
    })
}

/// Stack the channels of several users into an `N × K` matrix.
pub fn channel_matrix(
    cfg: &ArrayConfig,
    users: &[UserPos],
    model: ChannelModel,
    gain: PathGain,
) -> Result<ChannelMatrix> {
    let cols = users
        .iter()
        .map(|&u| match model {
            ChannelModel::NearSpherical => near_channel(cfg, u, gain),
            ChannelModel::FarPlanar => far_channel(cfg, u, gain),
        })
        .collect::<Result<Vec<_>>>()?;
    if cols.is_empty() {
        return Ok(ChannelMatrix(DMatrix::zeros(cfg.n_antennas, 0)));
    }
    ChannelMatrix::from_columns(&cols)
}

/// Axis-aligned box users are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserBox {
    pub x_range: (f64, f64),
    pub h_range: (f64, f64),
}

impl Default for UserBox {
    fn default() -> Self {
        Self {
            x_range: (0.0, 200.0),
            h_range: (0.0, 30.0),
        }
    }
}

impl UserBox {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ok(self.x_range) || !ok(self.h_range) {
            return Err(Error::InvalidConfig("user box ranges must satisfy lo < hi".into()));
        }
        if self.x_range.0 < 0.0 {
            return Err(Error::InvalidConfig("user box x range must be >= 0".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finaliser.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based sub-seed for stream `index` under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Deterministic RNG for stream `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// `count` i.i.d. uniform positions in `bounds`. User `k` depends only on
/// `(seed, k)`.
pub fn sample_users(count: usize, bounds: &UserBox, seed: u64) -> Result<Vec<UserPos>> {
    bounds.validate()?;
    let (x0, x1) = bounds.x_range;
    let (h0, h1) = bounds.h_range;
    Ok((0..count as u64)
        .map(|k| {
            let mut rng = stream_rng(seed, k);
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            UserPos {
                x_m: x0 + (x1 - x0) * u,
                h_m: h0 + (h1 - h0) * v,
            }
        })
        .collect())
}
