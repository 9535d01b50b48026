//! Pre-processing: per-sample pixel indices, a stable pixel sort, and the
//! ring-indexed lookup table that turns cap queries into contiguous
//! sample-range gathers.
//!
//! Only occupied pixels are stored; survey footprints cover a small
//! fraction of the sphere. Channel values never enter construction, so one
//! table serves every channel of a dataset.

use crate::error::{Error, Result};
use crate::healpix::{HealpixScheme, PixelIntervalSet};
use crate::kernel::KernelSpec;

/// Samples reordered by ascending pixel index.
///
/// Channel values are *not* reordered here; `perm` maps sorted position to
/// the original sample index, and the gridder gathers values through it.
#[derive(Debug, Clone)]
pub struct SortedSamples {
    /// `(ra_deg, dec_deg)` in pixel-sorted order.
    pub coords: Vec<(f64, f64)>,
    /// Non-decreasing pixel index per sorted sample.
    pub pixel_idx: Vec<u64>,
    /// Sorted position -> original sample index.
    pub perm: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelEntry {
    pub pixel_idx: u64,
    pub first_sample: u32,
    pub n_samples: u32,
}

/// Ring -> pixel -> sample-range index over pixel-sorted samples.
#[derive(Debug, Clone)]
pub struct LookupTable {
    pub scheme: HealpixScheme,
    /// Per ring: `(offset, count)` into `pixel_entries`. Index 0 is ring 1.
    pub ring_entries: Vec<(u32, u32)>,
    /// Occupied pixels in ascending pixel order.
    pub pixel_entries: Vec<PixelEntry>,
}

/// Pixel index of every coordinate under the given scheme.
///
/// RA/Dec degrees are mapped to colatitude/longitude radians.
pub fn compute_pixel_indices(
    coords: &[(f64, f64)],
    scheme: &HealpixScheme,
) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(coords.len());
    for (i, &(ra, dec)) in coords.iter().enumerate() {
        if !ra.is_finite() || !(-90.0..=90.0).contains(&dec) {
            return Err(Error::domain(format!(
                "sample {i}: invalid coordinate ({ra}, {dec})"
            )));
        }
        let colat = (90.0 - dec).to_radians();
        let lon = ra.rem_euclid(360.0).to_radians();
        out.push(scheme.ang2pix_ring(colat.clamp(0.0, std::f64::consts::PI), lon)?);
    }
    Ok(out)
}

/// Stable sort of samples by `(pixel_idx, original index)`.
pub fn sort_by_pixel(coords: &[(f64, f64)], pixel_idx: &[u64]) -> Result<SortedSamples> {
    if coords.len() != pixel_idx.len() {
        return Err(Error::contract(format!(
            "coords length {} != pixel_idx length {}",
            coords.len(),
            pixel_idx.len()
        )));
    }
    if coords.len() > u32::MAX as usize {
        return Err(Error::contract("more than 2^32 - 1 samples".to_string()));
    }
    let mut perm: Vec<u32> = (0..coords.len() as u32).collect();
    // Stable sort keeps ties in original order, so accumulation order and
    // hence floating-point output is deterministic.
    perm.sort_by_key(|&i| pixel_idx[i as usize]);
    let sorted_coords = perm.iter().map(|&i| coords[i as usize]).collect();
    let sorted_pixels = perm.iter().map(|&i| pixel_idx[i as usize]).collect();
    Ok(SortedSamples {
        coords: sorted_coords,
        pixel_idx: sorted_pixels,
        perm,
    })
}

/// Build the ring-indexed table from pixel-sorted samples.
pub fn build_lut(sorted: &SortedSamples, scheme: &HealpixScheme) -> Result<LookupTable> {
    if sorted.pixel_idx.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::contract("samples are not pixel-sorted".to_string()));
    }
    let mut pixel_entries: Vec<PixelEntry> = Vec::new();
    for (k, &pix) in sorted.pixel_idx.iter().enumerate() {
        if pix >= scheme.npix() {
            return Err(Error::contract(format!(
                "pixel index {pix} out of range for nside {}",
                scheme.nside()
            )));
        }
        match pixel_entries.last_mut() {
            Some(e) if e.pixel_idx == pix => e.n_samples += 1,
            _ => pixel_entries.push(PixelEntry {
                pixel_idx: pix,
                first_sample: k as u32,
                n_samples: 1,
            }),
        }
    }
    let mut ring_entries = vec![(0u32, 0u32); scheme.nrings() as usize];
    let mut i = 0usize;
    for (r0, slot) in ring_entries.iter_mut().enumerate() {
        let ring = r0 as u64 + 1;
        let info = scheme.ring_info(ring)?;
        let end_pixel = info.start_pixel + info.length;
        let begin = i;
        while i < pixel_entries.len() && pixel_entries[i].pixel_idx < end_pixel {
            i += 1;
        }
        *slot = (begin as u32, (i - begin) as u32);
    }
    debug_assert_eq!(i, pixel_entries.len());
    Ok(LookupTable {
        scheme: *scheme,
        ring_entries,
        pixel_entries,
    })
}

impl LookupTable {
    /// Contiguous `(first_sample, n_samples)` ranges covering exactly the
    /// samples whose pixel lies in the intervals, ascending pixel order.
    pub fn query(&self, ring_idx: u64, intervals: &PixelIntervalSet) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        self.query_into(ring_idx, intervals, &mut out);
        out
    }

    /// Allocation-reusing form of [`query`](Self::query).
    pub fn query_into(
        &self,
        ring_idx: u64,
        intervals: &PixelIntervalSet,
        out: &mut Vec<(u32, u32)>,
    ) {
        out.clear();
        let Some(&(offset, count)) = self.ring_entries.get(ring_idx as usize - 1) else {
            return;
        };
        let entries = &self.pixel_entries[offset as usize..(offset + count) as usize];
        for &(lo, hi) in &intervals.intervals {
            let begin = entries.partition_point(|e| e.pixel_idx < lo);
            for e in &entries[begin..] {
                if e.pixel_idx > hi {
                    break;
                }
                // Adjacent occupied pixels hold adjacent sample ranges;
                // coalesce so the gather loop sees long contiguous runs.
                match out.last_mut() {
                    Some(last) if last.0 + last.1 == e.first_sample => last.1 += e.n_samples,
                    _ => out.push((e.first_sample, e.n_samples)),
                }
            }
        }
    }
}

/// Mean pixel spacing of an nside, degrees: sqrt(4 pi / npix).
fn mean_spacing_deg(nside: u64) -> f64 {
    let npix = 12.0 * (nside as f64) * (nside as f64);
    (4.0 * std::f64::consts::PI / npix).sqrt().to_degrees()
}

/// Smallest power-of-two nside whose mean pixel spacing is at most half of
/// `min(cell_size, kernel radius)`, clamped to `[1, 2^20]`.
pub fn choose_nside(kernel: &KernelSpec, cell_size_deg: f64) -> HealpixScheme {
    let target = cell_size_deg.min(kernel.radius_deg).max(f64::MIN_POSITIVE) / 2.0;
    let mut nside = 1u64;
    while nside < (1 << 20) && mean_spacing_deg(nside) > target {
        nside *= 2;
    }
    HealpixScheme::new(nside).expect("power of two by construction")
}
