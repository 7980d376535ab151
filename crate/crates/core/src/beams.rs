//! Beamfocusing and beamsteering vectors, polar / angular codebooks and
//! array-gain evaluation.
//!
//! Beams are unit-norm and phase-aligned with the channel they target, so the
//! normalised gain `|bᴴh| / ‖h‖` reaches 1 at an exact match. Both kinds are
//! referenced to the array centre: a focus beam at a very distant point
//! converges to the steering beam at the same angle.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DVector;

use crate::geometry::{
    near_channel, spherical_path_differences, ArrayConfig, ChannelVec, PathGain, UserBox, UserPos,
};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeamKind {
    Focus { angle_rad: f64, r_m: f64 },
    Steer { angle_rad: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub entries: DVector<C64>,
    pub kind: BeamKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodebookKind {
    /// Angle × distance lattice (location division).
    Polar,
    /// Angle-only lattice (spatial division).
    Angular,
}

/// Lattice point of a codeword. `r_m == None` is the far-field entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub angle_rad: f64,
    pub r_m: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Codebook {
    pub beams: Vec<Beam>,
    pub grid: Vec<GridPoint>,
    pub kind: CodebookKind,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }
}

/// Range of `cos(angle)` the codebook spans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceSector {
    pub cos_min: f64,
    pub cos_max: f64,
}

impl ServiceSector {
    /// Every direction in front of the array.
    pub fn full() -> Self {
        Self {
            cos_min: -1.0,
            cos_max: 1.0,
        }
    }

    /// Smallest sector containing every point of `bounds`, found by walking
    /// the box boundary.
    pub fn from_box(cfg: &ArrayConfig, bounds: &UserBox) -> Self {
        const STEPS: usize = 512;
        let (x0, x1) = bounds.x_range;
        let (h0, h1) = bounds.h_range;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut visit = |x: f64, h: f64| {
            let (a, r) = cfg.to_polar(UserPos { x_m: x, h_m: h });
            if r > 0.0 {
                lo = lo.min(a.cos());
                hi = hi.max(a.cos());
            }
        };
        for i in 0..=STEPS {
            let t = i as f64 / STEPS as f64;
            let x = x0 + (x1 - x0) * t;
            let h = h0 + (h1 - h0) * t;
            visit(x, h0);
            visit(x, h1);
            visit(x0, h);
            visit(x1, h);
        }
        Self {
            cos_min: lo.max(-1.0),
            cos_max: hi.min(1.0),
        }
    }

    /// `n` angles uniform in cosine, cell-centred.
    pub fn angles(&self, n: usize) -> Vec<f64> {
        let step = (self.cos_max - self.cos_min) / n as f64;
        (0..n)
            .map(|i| (self.cos_max - (i as f64 + 0.5) * step).clamp(-1.0, 1.0).acos())
            .collect()
    }
}

/// Beam matched to the spherical wavefront from `point`.
pub fn focus_vector(cfg: &ArrayConfig, point: UserPos) -> Result<Beam> {
    let lambda = cfg.wavelength();
    let scale = 1.0 / (cfg.n_antennas as f64).sqrt();
    let diffs = spherical_path_differences(cfg, point)?;
    let (angle_rad, r_m) = cfg.to_polar(point);
    Ok(Beam {
        entries: DVector::from_iterator(
            cfg.n_antennas,
            diffs
                .into_iter()
                .map(|d| C64::from_polar(scale, -2.0 * PI * d / lambda)),
        ),
        kind: BeamKind::Focus { angle_rad, r_m },
    })
}

/// Linear-phase beam pointing at `angle_rad` from the array axis.
pub fn steer_vector(cfg: &ArrayConfig, angle_rad: f64) -> Beam {
    let lambda = cfg.wavelength();
    let scale = 1.0 / (cfg.n_antennas as f64).sqrt();
    let c = angle_rad.cos();
    Beam {
        entries: DVector::from_fn(cfg.n_antennas, |n, _| {
            C64::from_polar(scale, 2.0 * PI * cfg.element_offset(n) * c / lambda)
        }),
        kind: BeamKind::Steer { angle_rad },
    }
}

/// Angle × distance codebook.
///
/// Each angle carries `n_dist_slots` codewords spaced uniformly in inverse
/// distance over `[0, 1/r_min]`: one far-field steering beam (`1/r = 0`) and
/// focus beams at `r = r_min (S - 1) / s` for `s = 1..S-1`. A single slot is
/// the angular codebook.
pub fn polar_codebook(
    cfg: &ArrayConfig,
    sector: ServiceSector,
    n_angles: usize,
    n_dist_slots: usize,
    r_min: f64,
) -> Result<Codebook> {
    if n_angles == 0 || n_dist_slots == 0 {
        return Err(Error::InvalidGrid("angle and distance counts must be positive".into()));
    }
    if !(sector.cos_min < sector.cos_max) || sector.cos_min < -1.0 || sector.cos_max > 1.0 {
        return Err(Error::InvalidGrid("sector must satisfy -1 <= cos_min < cos_max <= 1".into()));
    }
    let rayleigh = crate::geometry::rayleigh_distance(cfg);
    if n_dist_slots > 1 && !(r_min > 0.0 && r_min < rayleigh) {
        return Err(Error::InvalidGrid(format!(
            "r_min must lie in (0, {rayleigh:.3}) m"
        )));
    }
    let mut beams = Vec::with_capacity(n_angles * n_dist_slots);
    let mut grid = Vec::with_capacity(n_angles * n_dist_slots);
    for angle in sector.angles(n_angles) {
        beams.push(steer_vector(cfg, angle));
        grid.push(GridPoint {
            angle_rad: angle,
            r_m: None,
        });
        for s in 1..n_dist_slots {
            let r = r_min * (n_dist_slots - 1) as f64 / s as f64;
            beams.push(focus_vector(cfg, cfg.from_polar(angle, r))?);
            grid.push(GridPoint {
                angle_rad: angle,
                r_m: Some(r),
            });
        }
    }
    Ok(Codebook {
        beams,
        grid,
        kind: if n_dist_slots == 1 {
            CodebookKind::Angular
        } else {
            CodebookKind::Polar
        },
    })
}

/// Far-field (SDMA) codebook: steering beams only.
pub fn angular_codebook(cfg: &ArrayConfig, sector: ServiceSector, n_angles: usize) -> Result<Codebook> {
    polar_codebook(cfg, sector, n_angles, 1, 1.0)
}

/// `|bᴴh| / ‖h‖`, clamped to `[0, 1]`; zero for a zero channel.
pub fn array_gain(beam: &Beam, h: &ChannelVec) -> Result<f64> {
    gain_of(&beam.entries, &h.entries)
}

pub(crate) fn gain_of(b: &DVector<C64>, h: &DVector<C64>) -> Result<f64> {
    if b.len() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: h.len(),
        });
    }
    let norm = h.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok((b.dotc(h).norm() / norm).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCell {
    pub angle_rad: f64,
    pub r_m: f64,
    pub gain: f64,
}

/// Normalised gain of `beam` against spherical-wave users on an
/// angle × distance grid (angles outer, distances inner).
pub fn gain_map(
    cfg: &ArrayConfig,
    beam: &Beam,
    angles: &[f64],
    distances: &[f64],
) -> Result<Vec<GainCell>> {
    let mut out = Vec::with_capacity(angles.len() * distances.len());
    for &a in angles {
        for &r in distances {
            let h = near_channel(cfg, cfg.from_polar(a, r), PathGain::Normalized)?;
            out.push(GainCell {
                angle_rad: a,
                r_m: r,
                gain: array_gain(beam, &h)?,
            });
        }
    }
    Ok(out)
}

pub const GAIN_MAP_HEADER: &str = "angle_rad,r_m,gain";

pub fn write_gain_map_csv<W: Write>(mut w: W, cells: &[GainCell]) -> std::io::Result<()> {
    writeln!(w, "{GAIN_MAP_HEADER}")?;
    for c in cells {
        writeln!(w, "{},{},{}", c.angle_rad, c.r_m, c.gain)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{far_channel, rayleigh_distance};

    fn unit_norm(b: &Beam) -> bool {
        (b.entries.norm() - 1.0).abs() < 1e-12
    }

    #[test]
    fn matched_focus_gain_is_one() {
        let cfg = ArrayConfig::default();
        let u = UserPos::new(42.0, 3.0).unwrap();
        let b = focus_vector(&cfg, u).unwrap();
        assert!(unit_norm(&b));
        let h = near_channel(&cfg, u, PathGain::FreeSpace).unwrap();
        assert!((array_gain(&b, &h).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_element_focus() {
        let cfg = ArrayConfig::half_wavelength(1, 30e9, 15.0, 0.0).unwrap();
        let b = focus_vector(&cfg, UserPos::new(5.0, 1.0).unwrap()).unwrap();
        assert_eq!(b.entries.len(), 1);
        assert!((b.entries[0].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matched_and_broadside_steering() {
        let cfg = ArrayConfig::default();
        let u = UserPos::new(150.0, 20.0).unwrap();
        let (a, _) = cfg.to_polar(u);
        let h = far_channel(&cfg, u, PathGain::FreeSpace).unwrap();
        let b = steer_vector(&cfg, a);
        assert!(unit_norm(&b));
        assert!((array_gain(&b, &h).unwrap() - 1.0).abs() < 1e-12);

        let b = steer_vector(&cfg, PI / 2.0);
        let v = 1.0 / 16.0;
        for e in b.entries.iter() {
            assert!((e - C64::new(v, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_loses_energy_in_the_near_field() {
        let cfg = ArrayConfig::default();
        let p = cfg.from_polar(PI / 2.0, 0.1 * rayleigh_distance(&cfg));
        let h = near_channel(&cfg, p, PathGain::Normalized).unwrap();
        let g = array_gain(&steer_vector(&cfg, PI / 2.0), &h).unwrap();
        assert!(g < 0.8, "gain {g}");
    }

    #[test]
    fn orthogonal_beam_has_zero_gain() {
        let cfg = ArrayConfig::half_wavelength(8, 30e9, 15.0, 0.0).unwrap();
        let u = UserPos::new(4.0, 16.0).unwrap();
        let h = near_channel(&cfg, u, PathGain::Normalized).unwrap();
        let b0 = steer_vector(&cfg, 1.0).entries;
        let hn = &h.entries / C64::new(h.entries.norm(), 0.0);
        let proj = &b0 - &hn * hn.dotc(&b0);
        let b = Beam {
            entries: &proj / C64::new(proj.norm(), 0.0),
            kind: BeamKind::Steer { angle_rad: 1.0 },
        };
        assert!(array_gain(&b, &h).unwrap() < 1e-12);
    }

    #[test]
    fn gain_rejects_length_mismatch() {
        let a = ArrayConfig::half_wavelength(8, 30e9, 15.0, 0.0).unwrap();
        let b = ArrayConfig::half_wavelength(4, 30e9, 15.0, 0.0).unwrap();
        let h = near_channel(&b, UserPos::new(3.0, 1.0).unwrap(), PathGain::Normalized).unwrap();
        assert!(matches!(
            array_gain(&steer_vector(&a, 1.0), &h),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn codebook_distances_follow_inverse_spacing() {
        let cfg = ArrayConfig::default();
        let cb = polar_codebook(&cfg, ServiceSector::full(), 1, 4, 10.0).unwrap();
        let rs: Vec<_> = cb.grid.iter().map(|g| g.r_m).collect();
        assert_eq!(rs[0], None);
        let finite: Vec<f64> = rs[1..].iter().map(|r| r.unwrap()).collect();
        for (got, want) in finite.iter().zip([30.0, 15.0, 10.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let cb = polar_codebook(&cfg, ServiceSector::full(), 1, 3, 10.0).unwrap();
        assert_eq!(cb.grid[1].r_m, Some(20.0));
        assert_eq!(cb.grid[2].r_m, Some(10.0));
        assert_eq!(cb.grid.len(), cb.beams.len());
        assert!(cb.beams.iter().all(unit_norm));
    }

    #[test]
    fn single_slot_is_angular() {
        let cfg = ArrayConfig::default();
        let sec = ServiceSector::from_box(&cfg, &UserBox::default());
        let a = polar_codebook(&cfg, sec, 16, 1, 10.0).unwrap();
        let b = angular_codebook(&cfg, sec, 16).unwrap();
        assert_eq!(a.kind, CodebookKind::Angular);
        assert_eq!(a.beams, b.beams);
        assert!(a.grid.iter().all(|g| g.r_m.is_none()));
    }

    #[test]
    fn codebook_grid_errors() {
        let cfg = ArrayConfig::default();
        let s = ServiceSector::full();
        assert!(matches!(polar_codebook(&cfg, s, 0, 2, 10.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(polar_codebook(&cfg, s, 2, 0, 10.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(polar_codebook(&cfg, s, 2, 2, 400.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(polar_codebook(&cfg, s, 2, 2, 0.0), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn full_sector_angular_beams_are_orthogonal() {
        let cfg = ArrayConfig::half_wavelength(16, 30e9, 15.0, 0.0).unwrap();
        let cb = angular_codebook(&cfg, ServiceSector::full(), 16).unwrap();
        for i in 0..16 {
            for j in 0..i {
                assert!(cb.beams[i].entries.dotc(&cb.beams[j].entries).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sector_from_default_box_spans_nearly_everything() {
        let cfg = ArrayConfig::default();
        let s = ServiceSector::from_box(&cfg, &UserBox::default());
        // the tilted axis passes through the box; directly below is 175°
        assert!(s.cos_max > 0.9999);
        assert!((s.cos_min - 175f64.to_radians().cos()).abs() < 1e-9);
    }

    #[test]
    fn gain_map_csv_layout() {
        let cfg = ArrayConfig::half_wavelength(8, 30e9, 15.0, 0.0).unwrap();
        let b = steer_vector(&cfg, 1.2);
        let cells = gain_map(&cfg, &b, &[1.0, 1.2], &[5.0, 10.0, 20.0]).unwrap();
        assert_eq!(cells.len(), 6);
        let mut buf = Vec::new();
        write_gain_map_csv(&mut buf, &cells).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "angle_rad,r_m,gain");
        assert_eq!(lines.len(), 7);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 3));
    }
}
