//! Drift-scan survey simulator: multi-beam scan coordinates plus
//! per-channel sample values from a synthetic sky model.
//!
//! The beam layout is the close-packed hexagonal arrangement (center plus
//! rings of 6 and 12), rotated about the array center. The true per-beam
//! track geometry of a real multi-beam receiver is instrument-specific;
//! the defaults here are placeholders shaped like a drift survey, not a
//! calibrated model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io::Dataset;

/// Drift-scan geometry configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub n_beams: usize,
    /// Rotation of the beam array about its center, degrees.
    pub rotation_deg: f64,
    /// Spacing between adjacent beams, degrees.
    pub beam_spacing: f64,
    pub n_scan_rows: usize,
    pub samples_per_row: usize,
    /// Declination of the first scan row, degrees.
    pub dec_start: f64,
    /// Declination step between scan rows, degrees.
    pub row_dec_step: f64,
    /// RA range swept by each row, degrees.
    pub ra_span: (f64, f64),
}

impl Default for ScanConfig {
    /// A small survey over the 60 x 20 degree footprint centered at
    /// (30, 41) that the bundled benchmarks use.
    fn default() -> Self {
        ScanConfig {
            n_beams: 19,
            rotation_deg: 23.4,
            beam_spacing: 0.1,
            n_scan_rows: 20,
            samples_per_row: 400,
            dec_start: 31.5,
            row_dec_step: 1.0,
            ra_span: (0.0, 60.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkySource {
    pub ra_deg: f64,
    pub dec_deg: f64,
    pub amplitude: f64,
    /// Angular width (gaussian sigma), degrees.
    pub sigma_deg: f64,
    /// Per-channel spectral weights, length C.
    pub spectral: Vec<f64>,
}

/// Synthetic sky: gaussian sources over a constant baseline plus
/// per-sample gaussian noise. The seed fixes all randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct SkyModel {
    pub sources: Vec<SkySource>,
    pub baseline: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub n_channels: usize,
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_beams < 1 || self.n_scan_rows < 1 || self.samples_per_row < 1 {
            return Err(Error::config("all scan counts must be >= 1".to_string()));
        }
        if self.n_beams > 19 {
            return Err(Error::config(format!(
                "beam layout supports up to 19 beams, got {}",
                self.n_beams
            )));
        }
        if !(self.beam_spacing > 0.0) {
            return Err(Error::config("beam spacing must be > 0".to_string()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.n_beams * self.n_scan_rows * self.samples_per_row
    }
}

impl SkyModel {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels < 1 {
            return Err(Error::config("need at least one channel".to_string()));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if !(s.sigma_deg > 0.0) {
                return Err(Error::config(format!("source {i}: sigma must be > 0")));
            }
            if s.spectral.len() != self.n_channels {
                return Err(Error::config(format!(
                    "source {i}: {} spectral weights for {} channels",
                    s.spectral.len(),
                    self.n_channels
                )));
            }
            if s.spectral.iter().any(|w| !w.is_finite()) {
                return Err(Error::config(format!("source {i}: non-finite spectral weight")));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::config("noise sigma must be >= 0".to_string()));
        }
        Ok(())
    }
}

/// `(d_ra, d_dec)` beam offsets before rotation: center, then 6 at unit
/// spacing, then 12 at twice the spacing.
fn beam_offsets(n_beams: usize, spacing: f64) -> Vec<(f64, f64)> {
    let mut offsets = vec![(0.0, 0.0)];
    for k in 0..6 {
        let a = (k as f64 * 60.0).to_radians();
        offsets.push((spacing * a.cos(), spacing * a.sin()));
    }
    for k in 0..12 {
        let a = (k as f64 * 30.0).to_radians();
        offsets.push((2.0 * spacing * a.cos(), 2.0 * spacing * a.sin()));
    }
    offsets.truncate(n_beams);
    offsets
}

/// Generate the `(ra, dec)` sample coordinates of the scan, beam-major.
pub fn make_scan_coords(config: &ScanConfig) -> Result<Vec<(f64, f64)>> {
    config.validate()?;
    let rot = config.rotation_deg.to_radians();
    let (sin_r, cos_r) = (rot.sin(), rot.cos());
    let offsets: Vec<(f64, f64)> = beam_offsets(config.n_beams, config.beam_spacing)
        .into_iter()
        .map(|(x, y)| (x * cos_r - y * sin_r, x * sin_r + y * cos_r))
        .collect();
    let (ra_start, ra_end) = config.ra_span;
    let ra_step = (ra_end - ra_start) / config.samples_per_row as f64;
    let mut coords = Vec::with_capacity(config.n_samples());
    for &(dra, ddec) in &offsets {
        for row in 0..config.n_scan_rows {
            let dec_row = config.dec_start + row as f64 * config.row_dec_step;
            for t in 0..config.samples_per_row {
                let ra = (ra_start + t as f64 * ra_step + dra).rem_euclid(360.0);
                let dec = dec_row + ddec;
                if !(-90.0..=90.0).contains(&dec) {
                    return Err(Error::config(format!(
                        "scan footprint leaves the declination range at dec {dec}"
                    )));
                }
                coords.push((ra, dec));
            }
        }
    }
    Ok(coords)
}

/// Deterministic noise draw for one (sample, channel) pair.
///
/// Each draw seeds its own stream from (seed, sample, channel), so channel
/// evaluation order never changes the output.
fn noise_draw(seed: u64, sample: usize, channel: usize) -> f64 {
    let mut x = seed
        ^ (sample as u64).wrapping_mul(0x9e3779b97f4a7c15)
        ^ (channel as u64).wrapping_mul(0xbf58476d1ce4e5b9);
    // splitmix64 finalizer, then a seeded portable generator.
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(x);
    StandardNormal.sample(&mut rng)
}

/// Evaluate one channel of the sky model at the given coordinates.
pub fn evaluate_sky(model: &SkyModel, coords: &[(f64, f64)], channel_id: usize) -> Result<Vec<f64>> {
    model.validate()?;
    if channel_id >= model.n_channels {
        return Err(Error::contract(format!(
            "channel {channel_id} out of range (C = {})",
            model.n_channels
        )));
    }
    let mut out = Vec::with_capacity(coords.len());
    for (i, &pos) in coords.iter().enumerate() {
        let mut v = model.baseline;
        for s in &model.sources {
            let d = crate::kernel::angular_distance_unchecked(pos, (s.ra_deg, s.dec_deg));
            v += s.amplitude * s.spectral[channel_id] * (-0.5 * (d / s.sigma_deg).powi(2)).exp();
        }
        if model.noise_sigma > 0.0 {
            v += model.noise_sigma * noise_draw(model.seed, i, channel_id);
        }
        out.push(v);
    }
    Ok(out)
}

/// Generate a full multi-channel dataset from scan geometry and sky model.
pub fn generate_dataset(config: &ScanConfig, model: &SkyModel) -> Result<Dataset> {
    let coords = make_scan_coords(config)?;
    let mut ra = Vec::with_capacity(coords.len());
    let mut dec = Vec::with_capacity(coords.len());
    for &(r, d) in &coords {
        ra.push(r);
        dec.push(d);
    }
    let mut values = Vec::with_capacity(model.n_channels);
    for ch in 0..model.n_channels {
        values.push(evaluate_sky(model, &coords, ch)?);
    }
    Dataset::new(ra, dec, values)
}

/// Mean consecutive RA spacing within rows over mean Dec spacing between
/// rows. Drift scans sample RA much more densely, so this is < 1.
pub fn coverage_anisotropy(config: &ScanConfig) -> f64 {
    let (ra_start, ra_end) = config.ra_span;
    let ra_spacing = ((ra_end - ra_start) / config.samples_per_row as f64).abs();
    let dec_spacing = config.row_dec_step.abs();
    ra_spacing / dec_spacing
}

/// Parse a flat key-value simulation config (one `key = value` per line,
/// `#` comments). Returns defaults for any key left unset.
///
/// Keys: `scan.n_beams`, `scan.rotation_deg`, `scan.beam_spacing`,
/// `scan.n_scan_rows`, `scan.samples_per_row`, `scan.dec_start`,
/// `scan.row_dec_step`, `scan.ra_start`, `scan.ra_end`,
/// `sky.baseline`, `sky.noise_sigma`, `sky.seed`, `sky.n_channels`, and
/// `source = ra dec amplitude sigma w0 w1 ... wC-1` (repeatable).
pub fn parse_sim_config(text: &str) -> Result<(ScanConfig, SkyModel)> {
    let mut scan = ScanConfig::default();
    let mut model = SkyModel {
        sources: Vec::new(),
        baseline: 0.0,
        noise_sigma: 0.0,
        seed: 0,
        n_channels: 1,
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}: expected key = value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::config(format!("line {}: bad {what} {value:?}", lineno + 1));
        let parse_f64 = || value.parse::<f64>().map_err(|_| bad("number"));
        let parse_usize = || value.parse::<usize>().map_err(|_| bad("integer"));
        match key {
            "scan.n_beams" => scan.n_beams = parse_usize()?,
            "scan.rotation_deg" => scan.rotation_deg = parse_f64()?,
            "scan.beam_spacing" => scan.beam_spacing = parse_f64()?,
            "scan.n_scan_rows" => scan.n_scan_rows = parse_usize()?,
            "scan.samples_per_row" => scan.samples_per_row = parse_usize()?,
            "scan.dec_start" => scan.dec_start = parse_f64()?,
            "scan.row_dec_step" => scan.row_dec_step = parse_f64()?,
            "scan.ra_start" => scan.ra_span.0 = parse_f64()?,
            "scan.ra_end" => scan.ra_span.1 = parse_f64()?,
            "sky.baseline" => model.baseline = parse_f64()?,
            "sky.noise_sigma" => model.noise_sigma = parse_f64()?,
            "sky.seed" => model.seed = value.parse().map_err(|_| bad("seed"))?,
            "sky.n_channels" => model.n_channels = parse_usize()?,
            "source" => {
                let nums: Vec<f64> = value
                    .split_whitespace()
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("source"))?;
                if nums.len() < 5 {
                    return Err(bad("source (need ra dec amp sigma w0...)"));
                }
                model.sources.push(SkySource {
                    ra_deg: nums[0],
                    dec_deg: nums[1],
                    amplitude: nums[2],
                    sigma_deg: nums[3],
                    spectral: nums[4..].to_vec(),
                });
            }
            other => {
                return Err(Error::config(format!("line {}: unknown key {other:?}", lineno + 1)))
            }
        }
    }
    scan.validate()?;
    model.validate()?;
    Ok((scan, model))
}
