//! Convolution weighting functions with finite support, and the angular
//! distance metric they act on. Distances are in degrees end to end;
//! radians appear only inside the trigonometry.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
    Tophat,
}

/// Weighting function `w` plus its support cutoff `R` (degrees).
/// Weight is identically zero beyond the cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Gaussian width, degrees. Ignored by the tophat kernel.
    pub sigma_deg: f64,
    /// Support cutoff R, degrees.
    pub radius_deg: f64,
}

impl KernelSpec {
    pub fn gaussian(sigma_deg: f64, radius_deg: f64) -> Result<Self> {
        if !(sigma_deg > 0.0) || !sigma_deg.is_finite() {
            return Err(Error::config(format!("gaussian sigma must be > 0, got {sigma_deg}")));
        }
        if !(radius_deg > 0.0) || !radius_deg.is_finite() {
            return Err(Error::config(format!("kernel radius must be > 0, got {radius_deg}")));
        }
        if radius_deg < sigma_deg {
            eprintln!(
                "warning: kernel radius {radius_deg} deg is smaller than sigma {sigma_deg} deg; \
                 most of the kernel mass is truncated"
            );
        }
        Ok(KernelSpec { kind: KernelKind::Gaussian, sigma_deg, radius_deg })
    }

    pub fn tophat(radius_deg: f64) -> Result<Self> {
        if !(radius_deg > 0.0) || !radius_deg.is_finite() {
            return Err(Error::config(format!("kernel radius must be > 0, got {radius_deg}")));
        }
        Ok(KernelSpec { kind: KernelKind::Tophat, sigma_deg: 0.0, radius_deg })
    }

    /// Default gridding kernel for a given beam: a Gaussian with
    /// `sigma = fwhm / (2 sqrt(2 ln 2)) / 2` and support `R = 3 sigma`.
    pub fn for_beam_fwhm(fwhm_deg: f64) -> Result<Self> {
        let sigma = fwhm_deg / (2.0 * (2.0f64.ln() * 2.0).sqrt()) / 2.0;
        Self::gaussian(sigma, 3.0 * sigma)
    }

    /// Kernel weight at an angular distance in degrees.
    pub fn evaluate(&self, distance_deg: f64) -> Result<f64> {
        if !distance_deg.is_finite() || distance_deg < 0.0 {
            return Err(Error::domain(format!("invalid kernel distance {distance_deg}")));
        }
        Ok(self.weight(distance_deg))
    }

    /// Same as [`evaluate`](Self::evaluate) without input validation;
    /// the gridder calls this with distances it has just computed.
    #[inline]
    pub fn weight(&self, distance_deg: f64) -> f64 {
        if distance_deg > self.radius_deg {
            return 0.0;
        }
        match self.kind {
            KernelKind::Gaussian => {
                let x = distance_deg / self.sigma_deg;
                (-0.5 * x * x).exp()
            }
            KernelKind::Tophat => 1.0,
        }
    }
}

/// Great-circle distance in degrees between two `(ra, dec)` positions,
/// haversine form for stability at small separations.
pub fn angular_distance(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    for &(_, dec) in &[a, b] {
        if !(-90.0..=90.0).contains(&dec) {
            return Err(Error::domain(format!("declination {dec} outside [-90, 90]")));
        }
    }
    if !(a.0.is_finite() && b.0.is_finite()) {
        return Err(Error::domain("non-finite right ascension".to_string()));
    }
    Ok(angular_distance_unchecked(a, b))
}

/// Haversine distance without range validation, for hot loops over
/// already-validated coordinates.
#[inline]
pub fn angular_distance_unchecked(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (ra1, dec1) = (a.0.to_radians(), a.1.to_radians());
    let (ra2, dec2) = (b.0.to_radians(), b.1.to_radians());
    let sdd = ((dec2 - dec1) * 0.5).sin();
    let sdr = ((ra2 - ra1) * 0.5).sin();
    let h = sdd * sdd + dec1.cos() * dec2.cos() * sdr * sdr;
    2.0 * h.min(1.0).sqrt().asin().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_values() {
        let k = KernelSpec::gaussian(1.0, 3.0).unwrap();
        assert_eq!(k.evaluate(0.0).unwrap(), 1.0);
        assert!((k.evaluate(1.0).unwrap() - 0.6065306597126334).abs() < 1e-15);
        assert_eq!(k.evaluate(3.1).unwrap(), 0.0);
    }

    #[test]
    fn tophat_values() {
        let k = KernelSpec::tophat(2.0).unwrap();
        assert_eq!(k.evaluate(0.0).unwrap(), 1.0);
        assert_eq!(k.evaluate(2.0).unwrap(), 1.0);
        assert_eq!(k.evaluate(2.0000001).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_rejects_bad_distance() {
        let k = KernelSpec::tophat(2.0).unwrap();
        assert!(k.evaluate(-1.0).is_err());
        assert!(k.evaluate(f64::NAN).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::gaussian(0.0, 1.0).is_err());
        assert!(KernelSpec::gaussian(1.0, 0.0).is_err());
        assert!(KernelSpec::tophat(-1.0).is_err());
        assert!(KernelSpec::for_beam_fwhm(0.05).is_ok());
    }

    #[test]
    fn distance_identity_and_quarter_circle() {
        assert_eq!(angular_distance((10.0, 40.0), (10.0, 40.0)).unwrap(), 0.0);
        let d = angular_distance((0.0, 0.0), (90.0, 0.0)).unwrap();
        assert!((d - 90.0).abs() < 1e-12);
    }

    #[test]
    fn distance_small_angle() {
        // 1 degree of RA at dec 40 is about cos(40 deg) degrees.
        let d = angular_distance((10.0, 40.0), (11.0, 40.0)).unwrap();
        // Frozen from a 40-digit evaluation of the haversine formula.
        assert!((d - 0.76604042577024).abs() < 1e-12);
        // Small-angle estimate cos(40 deg) is good to a few 1e-6.
        assert!((d - 40f64.to_radians().cos()).abs() < 1e-5);
    }

    #[test]
    fn distance_symmetry_and_monotone_kernel() {
        let k = KernelSpec::gaussian(0.7, 2.5).unwrap();
        let mut state = 3u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let a = (360.0 * next(), 180.0 * next() - 90.0);
            let b = (360.0 * next(), 180.0 * next() - 90.0);
            let d1 = angular_distance(a, b).unwrap();
            let d2 = angular_distance(b, a).unwrap();
            assert_eq!(d1, d2);
            assert!((0.0..=180.0).contains(&d1));
            let (x, y) = (180.0 * next(), 180.0 * next());
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            assert!(k.weight(lo) >= k.weight(hi));
        }
    }

    #[test]
    fn distance_rejects_out_of_range_dec() {
        assert!(angular_distance((0.0, 91.0), (0.0, 0.0)).is_err());
    }
}
