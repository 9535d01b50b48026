//! Minimal RING-scheme HEALPix pixelization plus the spherical-cap queries
//! used to bound contribution regions.
//!
//! Only the RING ordering is implemented: the lookup table gathers samples
//! ring by ring, so nothing here needs the NESTED scheme. Cap queries are
//! conservative (superset) by design; the exact distance filter happens
//! later in the gridder.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const TWO_THIRDS: f64 = 2.0 / 3.0;
/// Below this value of sin(theta_c)*sin(theta_ring) the longitude half-width
/// formula blows up; the whole ring is returned instead (superset-safe).
const POLE_EPS: f64 = 1e-12;
/// Slack added when converting longitude bounds to pixel indices so that
/// rounding can only widen the interval, never lose a pixel.
const PHI_EPS: f64 = 1e-9;

/// RING-scheme pixelization parameters for one resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HealpixScheme {
    nside: u64,
}

/// Layout of a single isolatitude ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingInfo {
    /// 1-based ring index, counted from the north pole.
    pub ring_idx: u64,
    /// First pixel index on the ring.
    pub start_pixel: u64,
    /// Number of pixels on the ring.
    pub length: u64,
    /// Colatitude of the ring center, radians.
    pub colatitude: f64,
}

/// One or two contiguous pixel-index ranges on a single ring.
///
/// Two intervals occur only when the longitude range wraps past the seam.
/// May be empty when a cap does not reach the ring at any longitude.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PixelIntervalSet {
    /// Inclusive `(pixel_min, pixel_max)` ranges, ascending and disjoint.
    pub intervals: Vec<(u64, u64)>,
}

impl PixelIntervalSet {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, pixel: u64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= pixel && pixel <= hi)
    }
}

impl HealpixScheme {
    /// `nside` must be a power of two in `[1, 2^20]`.
    pub fn new(nside: u64) -> Result<Self> {
        if nside == 0 || !nside.is_power_of_two() || nside > (1 << 20) {
            return Err(Error::config(format!(
                "nside must be a power of two in [1, 2^20], got {nside}"
            )));
        }
        Ok(HealpixScheme { nside })
    }

    pub fn nside(&self) -> u64 {
        self.nside
    }

    pub fn npix(&self) -> u64 {
        12 * self.nside * self.nside
    }

    pub fn nrings(&self) -> u64 {
        4 * self.nside - 1
    }

    fn ncap(&self) -> u64 {
        2 * self.nside * (self.nside - 1)
    }

    /// Pixel containing the direction `(colat, lon)`, RING ordering.
    ///
    /// `colat` is the angle from the north pole in `[0, pi]`; `lon` is
    /// wrapped into `[0, 2pi)`.
    pub fn ang2pix_ring(&self, colat: f64, lon: f64) -> Result<u64> {
        if !colat.is_finite() || !lon.is_finite() {
            return Err(Error::domain(format!(
                "non-finite direction ({colat}, {lon})"
            )));
        }
        if !(0.0..=PI).contains(&colat) {
            return Err(Error::domain(format!(
                "colatitude {colat} outside [0, pi]"
            )));
        }
        let z = colat.cos();
        let lon = lon.rem_euclid(2.0 * PI);
        Ok(self.zphi2pix(z, lon))
    }

    fn zphi2pix(&self, z: f64, phi: f64) -> u64 {
        let nside = self.nside as i64;
        let za = z.abs();
        let tt = phi * (2.0 / PI); // in [0, 4)
        if za <= TWO_THIRDS {
            // Equatorial region.
            let temp1 = nside as f64 * (0.5 + tt);
            let temp2 = nside as f64 * z * 0.75;
            let jp = (temp1 - temp2).floor() as i64;
            let jm = (temp1 + temp2).floor() as i64;
            let ir = nside + 1 + jp - jm; // in [1, 2*nside+1]
            let kshift = 1 - (ir & 1);
            let ip = ((jp + jm - nside + kshift + 1) / 2).rem_euclid(4 * nside);
            (self.ncap() as i64 + (ir - 1) * 4 * nside + ip) as u64
        } else {
            // Polar caps.
            let tp = tt.fract();
            let tmp = nside as f64 * (3.0 * (1.0 - za)).sqrt();
            let jp = (tp * tmp) as i64;
            let jm = ((1.0 - tp) * tmp) as i64;
            let ir = jp + jm + 1; // ring counted from the nearest pole, <= nside
            let ip = ((tt * ir as f64) as i64).rem_euclid(4 * ir);
            if z >= 0.0 {
                (2 * ir * (ir - 1) + ip) as u64
            } else {
                (12 * nside * nside - 2 * ir * (ir + 1) + ip) as u64
            }
        }
    }

    /// Center direction `(colat, lon)` of a pixel.
    pub fn pix2ang_ring(&self, pixel: u64) -> Result<(f64, f64)> {
        let ring = self.pixel_to_ring(pixel)?;
        let info = self.ring_info(ring)?;
        let k = pixel - info.start_pixel;
        let lon = (k as f64 + self.ring_phi_shift(ring)) * 2.0 * PI / info.length as f64;
        Ok((info.colatitude, lon))
    }

    /// Longitude of pixel `k` on a ring is `(k + shift) * 2*pi / length`.
    fn ring_phi_shift(&self, ring_idx: u64) -> f64 {
        if ring_idx < self.nside || ring_idx > 3 * self.nside {
            0.5
        } else if (ring_idx + self.nside) % 2 == 0 {
            0.5
        } else {
            0.0
        }
    }

    /// Layout of ring `ring_idx` (1-based, north to south).
    pub fn ring_info(&self, ring_idx: u64) -> Result<RingInfo> {
        if ring_idx < 1 || ring_idx > self.nrings() {
            return Err(Error::domain(format!(
                "ring {ring_idx} outside [1, {}]",
                self.nrings()
            )));
        }
        let n = self.nside;
        let (start_pixel, length, z) = if ring_idx < n {
            let i = ring_idx;
            let z = 1.0 - (i * i) as f64 / (3 * n * n) as f64;
            (2 * i * (i - 1), 4 * i, z)
        } else if ring_idx <= 3 * n {
            let z = (2 * n as i64 - ring_idx as i64) as f64 * 2.0 / (3 * n) as f64;
            (self.ncap() + (ring_idx - n) * 4 * n, 4 * n, z)
        } else {
            let k = 4 * n - ring_idx;
            let z = -(1.0 - (k * k) as f64 / (3 * n * n) as f64);
            (self.npix() - 2 * k * (k + 1), 4 * k, z)
        };
        Ok(RingInfo {
            ring_idx,
            start_pixel,
            length,
            colatitude: z.acos(),
        })
    }

    /// Ring containing a pixel.
    pub fn pixel_to_ring(&self, pixel: u64) -> Result<u64> {
        if pixel >= self.npix() {
            return Err(Error::domain(format!(
                "pixel {pixel} outside [0, {})",
                self.npix()
            )));
        }
        let n = self.nside;
        let ncap = self.ncap();
        if pixel < ncap {
            Ok((1 + isqrt(1 + 2 * pixel)) >> 1)
        } else if pixel < self.npix() - ncap {
            Ok((pixel - ncap) / (4 * n) + n)
        } else {
            let ip = self.npix() - pixel;
            let k = (1 + isqrt(2 * ip - 1)) >> 1;
            Ok(4 * n - k)
        }
    }

    /// Ring whose center colatitude is nearest to `colat`.
    fn ring_near_colat(&self, colat: f64) -> u64 {
        let n = self.nside;
        let z = colat.cos();
        if z > TWO_THIRDS {
            let i = (n as f64 * (3.0 * (1.0 - z)).sqrt()).round() as u64;
            i.clamp(1, n)
        } else if z < -TWO_THIRDS {
            let k = (n as f64 * (3.0 * (1.0 + z)).sqrt()).round() as u64;
            4 * n - k.clamp(1, n)
        } else {
            let i = ((4.0 / 3.0 - z) * 1.5 * n as f64).round() as u64;
            i.clamp(n, 3 * n)
        }
    }

    /// Upper bound on the angular distance (radians) from any point on
    /// the sphere to the center of the pixel containing it.
    ///
    /// Pixel circumradii peak near the poles at about 0.83/nside; pi/(2
    /// nside) leaves a generous safety margin. Cap queries padded by this
    /// amount therefore cover every pixel that can hold a point inside
    /// the original cap.
    pub fn max_center_distance(&self) -> f64 {
        (PI / (2.0 * self.nside as f64)).min(PI)
    }

    /// Conservative contiguous ring range intersecting the spherical cap
    /// centered at `center_colat` with the given angular radius (radians).
    ///
    /// Every ring carrying a pixel center within the cap is included;
    /// the range may include up to two extra rings per side.
    pub fn ring_range_for_cap(&self, center_colat: f64, radius: f64) -> Result<(u64, u64)> {
        if !center_colat.is_finite() || !radius.is_finite() || radius <= 0.0 {
            return Err(Error::domain(format!(
                "invalid cap (colat {center_colat}, radius {radius})"
            )));
        }
        if radius >= PI {
            return Ok((1, self.nrings()));
        }
        let lo = (center_colat - radius).max(0.0);
        let hi = (center_colat + radius).min(PI);
        let ring_min = self.ring_near_colat(lo).saturating_sub(1).max(1);
        let ring_max = (self.ring_near_colat(hi) + 1).min(self.nrings());
        Ok((ring_min, ring_max))
    }

    /// Conservative pixel intervals on `ring` whose centers may lie within
    /// `radius` of `(center_colat, center_lon)`.
    ///
    /// The half-width in longitude follows from the spherical law of
    /// cosines: `cos d = cos tc * cos tr + sin tc * sin tr * cos(dphi)`.
    /// If the arccos argument leaves `[-1, 1]` the ring is either fully
    /// included or empty. Near the poles the whole ring is returned.
    pub fn pixel_range_on_ring(
        &self,
        ring: &RingInfo,
        center_colat: f64,
        center_lon: f64,
        radius: f64,
    ) -> Result<PixelIntervalSet> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::domain(format!("invalid cap radius {radius}")));
        }
        if radius >= PI {
            return Ok(self.whole_ring(ring));
        }
        let denom = center_colat.sin() * ring.colatitude.sin();
        if denom < POLE_EPS {
            return Ok(self.whole_ring(ring));
        }
        let x = (radius.cos() - center_colat.cos() * ring.colatitude.cos()) / denom;
        if x > 1.0 {
            return Ok(PixelIntervalSet::default());
        }
        if x < -1.0 {
            return Ok(self.whole_ring(ring));
        }
        let dphi = x.acos();
        let dlon = 2.0 * PI / ring.length as f64;
        let shift = self.ring_phi_shift(ring.ring_idx);
        let a = (center_lon - dphi) / dlon - shift;
        let b = (center_lon + dphi) / dlon - shift;
        let k_lo = (a - PHI_EPS).floor() as i64;
        let k_hi = (b + PHI_EPS).ceil() as i64;
        let len = ring.length as i64;
        if k_hi - k_lo + 1 >= len {
            return Ok(self.whole_ring(ring));
        }
        let lo = k_lo.rem_euclid(len) as u64;
        let hi = k_hi.rem_euclid(len) as u64;
        let start = ring.start_pixel;
        let intervals = if lo <= hi {
            vec![(start + lo, start + hi)]
        } else {
            // Wrapped past the seam: two intervals.
            vec![
                (start, start + hi),
                (start + lo, start + ring.length - 1),
            ]
        };
        Ok(PixelIntervalSet { intervals })
    }

    fn whole_ring(&self, ring: &RingInfo) -> PixelIntervalSet {
        PixelIntervalSet {
            intervals: vec![(ring.start_pixel, ring.start_pixel + ring.length - 1)],
        }
    }
}

/// Integer square root, exact for arguments below 2^53 and corrected
/// for rounding beyond that.
fn isqrt(v: u64) -> u64 {
    let mut r = (v as f64).sqrt() as u64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}
