//! Cell-update core: gather contribution samples ring by ring via the
//! lookup table, accumulate kernel-weighted sums per cell, normalize.
//! A brute-force direct evaluation serves as the correctness oracle.
//!
//! Per-cell accumulation runs in a fixed (ring asc, pixel asc, sorted
//! sample asc) order, independent of the reuse factor and of any caller
//! partitioning, so outputs are reproducible bit for bit.

use crate::error::{Error, Result};
use crate::kernel::{angular_distance_unchecked, KernelSpec};
use crate::lut::{LookupTable, SortedSamples};

/// Plate carree target grid: uniform degree spacing in RA and Dec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapGeometry {
    /// Cells along RA.
    pub n_ra: usize,
    /// Cells along Dec.
    pub n_dec: usize,
    /// `(ra_deg, dec_deg)` of the map center.
    pub center: (f64, f64),
    /// Cell size in degrees, uniform in both axes.
    pub cell_size: f64,
}

impl MapGeometry {
    pub fn new(n_ra: usize, n_dec: usize, center: (f64, f64), cell_size: f64) -> Result<Self> {
        if n_ra == 0 || n_dec == 0 {
            return Err(Error::config("map must have at least one cell per axis".to_string()));
        }
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::config(format!("cell size must be > 0, got {cell_size}")));
        }
        let geom = MapGeometry { n_ra, n_dec, center, cell_size };
        let (_, dec_lo) = geom.cell_center(0, 0);
        let (_, dec_hi) = geom.cell_center(0, n_dec - 1);
        if !(-90.0..=90.0).contains(&dec_lo) || !(-90.0..=90.0).contains(&dec_hi) {
            return Err(Error::config(format!(
                "map dec range [{dec_lo}, {dec_hi}] leaves [-90, 90]"
            )));
        }
        Ok(geom)
    }

    /// Center coordinates of cell `(i, j)`, `i` along RA, `j` along Dec.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let (ra_c, dec_c) = self.center;
        (
            ra_c + (i as f64 - (self.n_ra as f64 - 1.0) / 2.0) * self.cell_size,
            dec_c + (j as f64 - (self.n_dec as f64 - 1.0) / 2.0) * self.cell_size,
        )
    }

    pub fn n_cells(&self) -> usize {
        self.n_ra * self.n_dec
    }
}

/// Output grid with per-cell accumulators.
///
/// `values[c] = sums[c] / weights[c]` where the weight is positive, NaN
/// where the cell got no coverage. Weights are kept so callers can tell
/// "no coverage" from "zero value". Row-major with RA fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMap {
    pub geometry: MapGeometry,
    pub sums: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
}

impl TargetMap {
    pub fn blank(geometry: MapGeometry) -> Self {
        let n = geometry.n_cells();
        TargetMap {
            geometry,
            sums: vec![0.0; n],
            weights: vec![0.0; n],
            values: vec![f64::NAN; n],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.geometry.n_ra + i
    }
}

/// Instrumentation for the gather phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GatherCounters {
    /// Contribution ring ranges computed (one per cell group).
    pub ring_range_computations: u64,
    /// Candidate samples loaded through the lookup table.
    pub samples_gathered: u64,
    /// Candidates that passed the exact distance filter.
    pub samples_within_radius: u64,
}

impl GatherCounters {
    pub fn merge(&mut self, other: &GatherCounters) {
        self.ring_range_computations += other.ring_range_computations;
        self.samples_gathered += other.samples_gathered;
        self.samples_within_radius += other.samples_within_radius;
    }
}

/// Grid one channel through the lookup table.
///
/// `channel_values` is in original sample order; values are gathered
/// through the sort permutation. Cells are processed in `gamma`-sized
/// groups of RA-adjacent cells sharing one contribution-ring computation.
pub fn grid_channel(
    sorted: &SortedSamples,
    channel_values: &[f64],
    lut: &LookupTable,
    geometry: &MapGeometry,
    kernel: &KernelSpec,
    gamma: usize,
) -> Result<(TargetMap, GatherCounters)> {
    if channel_values.len() != sorted.coords.len() {
        return Err(Error::contract(format!(
            "channel has {} values for {} samples",
            channel_values.len(),
            sorted.coords.len()
        )));
    }
    if gamma < 1 {
        return Err(Error::contract("gamma must be >= 1".to_string()));
    }
    let mut map = TargetMap::blank(*geometry);
    let mut counters = GatherCounters::default();
    let scheme = &lut.scheme;
    let radius = kernel.radius_deg;
    // Pad the cap queries so samples sitting in pixels whose centers lie
    // just outside the cap are still gathered; the exact d <= R filter
    // below removes the extras.
    let pad = scheme.max_center_distance();
    let query_radius = (radius.to_radians() + pad).min(std::f64::consts::PI);
    let mut ranges: Vec<(u32, u32)> = Vec::new();

    for j in 0..geometry.n_dec {
        let mut i0 = 0;
        while i0 < geometry.n_ra {
            let i1 = (i0 + gamma).min(geometry.n_ra) - 1;
            // One conservative ring range for the whole group: the group
            // cap is centered between the end cells and padded by half the
            // group extent.
            let (ra_a, dec_row) = geometry.cell_center(i0, j);
            let (ra_b, _) = geometry.cell_center(i1, j);
            let mid = ((ra_a + ra_b) / 2.0, dec_row);
            let half_extent = angular_distance_unchecked(mid, (ra_b, dec_row));
            let group_radius =
                ((radius + half_extent).to_radians() + pad).min(std::f64::consts::PI);
            let colat_row = (90.0 - dec_row).to_radians();
            let (ring_min, ring_max) = scheme.ring_range_for_cap(colat_row, group_radius)?;
            counters.ring_range_computations += 1;

            for i in i0..=i1 {
                let cell = geometry.cell_center(i, j);
                let cell_colat = (90.0 - cell.1).to_radians();
                let cell_lon = cell.0.rem_euclid(360.0).to_radians();
                let idx = map.index(i, j);
                let (mut sum, mut wsum) = (0.0f64, 0.0f64);
                for ring in ring_min..=ring_max {
                    let info = scheme.ring_info(ring)?;
                    let set =
                        scheme.pixel_range_on_ring(&info, cell_colat, cell_lon, query_radius)?;
                    if set.is_empty() {
                        continue;
                    }
                    lut.query_into(ring, &set, &mut ranges);
                    for &(first, count) in &ranges {
                        for k in first..first + count {
                            let k = k as usize;
                            counters.samples_gathered += 1;
                            let d = angular_distance_unchecked(cell, sorted.coords[k]);
                            if d <= radius {
                                counters.samples_within_radius += 1;
                                let w = kernel.weight(d);
                                sum += w * channel_values[sorted.perm[k] as usize];
                                wsum += w;
                            }
                        }
                    }
                }
                map.sums[idx] = sum;
                map.weights[idx] = wsum;
            }
            i0 = i1 + 1;
        }
    }
    normalize(&mut map);
    Ok((map, counters))
}

/// Direct evaluation of the gridding sum over all samples, no lookup
/// table. O(N * I * J); the correctness oracle for [`grid_channel`].
pub fn brute_force_grid(
    coords: &[(f64, f64)],
    channel_values: &[f64],
    geometry: &MapGeometry,
    kernel: &KernelSpec,
) -> Result<TargetMap> {
    if channel_values.len() != coords.len() {
        return Err(Error::contract(format!(
            "channel has {} values for {} samples",
            channel_values.len(),
            coords.len()
        )));
    }
    let mut map = TargetMap::blank(*geometry);
    let radius = kernel.radius_deg;
    for j in 0..geometry.n_dec {
        for i in 0..geometry.n_ra {
            let cell = geometry.cell_center(i, j);
            let idx = map.index(i, j);
            let (mut sum, mut wsum) = (0.0f64, 0.0f64);
            for (n, &p) in coords.iter().enumerate() {
                let d = angular_distance_unchecked(cell, p);
                if d <= radius {
                    let w = kernel.weight(d);
                    sum += w * channel_values[n];
                    wsum += w;
                }
            }
            map.sums[idx] = sum;
            map.weights[idx] = wsum;
        }
    }
    normalize(&mut map);
    Ok(map)
}

/// Fill the normalized plane: `sums / weights` where covered, NaN elsewhere.
pub fn normalize(map: &mut TargetMap) {
    for idx in 0..map.values.len() {
        map.values[idx] = if map.weights[idx] > 0.0 {
            map.sums[idx] / map.weights[idx]
        } else {
            f64::NAN
        };
    }
}

/// Difference statistics between two maps of identical geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapDiff {
    /// Max |a - b| over cells where both maps are covered.
    pub max_abs: f64,
    /// Root mean square of the differences over the same cells.
    pub rms: f64,
    /// Cells covered in exactly one of the two maps.
    pub n_blank_mismatch: usize,
}

pub fn diff_maps(a: &TargetMap, b: &TargetMap) -> Result<MapDiff> {
    if a.geometry != b.geometry {
        return Err(Error::contract(format!(
            "geometry mismatch: {:?} vs {:?}",
            a.geometry, b.geometry
        )));
    }
    let mut max_abs = 0.0f64;
    let mut sq_sum = 0.0f64;
    let mut n = 0usize;
    let mut n_blank_mismatch = 0usize;
    for idx in 0..a.values.len() {
        let (va, vb) = (a.values[idx], b.values[idx]);
        match (va.is_nan(), vb.is_nan()) {
            (false, false) => {
                let d = (va - vb).abs();
                max_abs = max_abs.max(d);
                sq_sum += d * d;
                n += 1;
            }
            (true, true) => {}
            _ => n_blank_mismatch += 1,
        }
    }
    let rms = if n > 0 { (sq_sum / n as f64).sqrt() } else { 0.0 };
    Ok(MapDiff { max_abs, rms, n_blank_mismatch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lut::{build_lut, choose_nside, compute_pixel_indices, sort_by_pixel};

    fn prep(coords: &[(f64, f64)], kernel: &KernelSpec, cell: f64) -> (SortedSamples, LookupTable) {
        let scheme = choose_nside(kernel, cell);
        let pix = compute_pixel_indices(coords, &scheme).unwrap();
        let sorted = sort_by_pixel(coords, &pix).unwrap();
        let lut = build_lut(&sorted, &scheme).unwrap();
        (sorted, lut)
    }

    #[test]
    fn geometry_validation() {
        assert!(MapGeometry::new(0, 4, (0.0, 0.0), 1.0).is_err());
        assert!(MapGeometry::new(4, 4, (0.0, 0.0), 0.0).is_err());
        assert!(MapGeometry::new(4, 40, (0.0, 85.0), 1.0).is_err());
        let g = MapGeometry::new(3, 3, (30.0, 40.0), 0.5).unwrap();
        assert_eq!(g.cell_center(1, 1), (30.0, 40.0));
        assert_eq!(g.cell_center(0, 0), (29.5, 39.5));
    }

    #[test]
    fn single_sample_at_cell_center() {
        let geometry = MapGeometry::new(3, 3, (30.0, 40.0), 0.5).unwrap();
        let kernel = KernelSpec::gaussian(0.5, 1.0).unwrap();
        let coords = vec![geometry.cell_center(1, 1)];
        let (sorted, lut) = prep(&coords, &kernel, 0.5);
        let (map, _) = grid_channel(&sorted, &[5.0], &lut, &geometry, &kernel, 1).unwrap();
        let idx = map.index(1, 1);
        assert_eq!(map.values[idx], 5.0);
    }

    #[test]
    fn symmetric_samples_average() {
        let geometry = MapGeometry::new(1, 1, (30.0, 0.0), 0.5).unwrap();
        let kernel = KernelSpec::gaussian(0.5, 1.5).unwrap();
        // Equidistant east and west of the single cell, on the equator.
        let coords = vec![(29.6, 0.0), (30.4, 0.0)];
        let (sorted, lut) = prep(&coords, &kernel, 0.5);
        let (map, _) = grid_channel(&sorted, &[3.0, 5.0], &lut, &geometry, &kernel, 1).unwrap();
        assert!((map.values[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn brute_force_zero_samples() {
        let geometry = MapGeometry::new(4, 4, (0.0, 0.0), 1.0).unwrap();
        let kernel = KernelSpec::tophat(1.0).unwrap();
        let map = brute_force_grid(&[], &[], &geometry, &kernel).unwrap();
        assert!(map.values.iter().all(|v| v.is_nan()));
        assert!(map.weights.iter().all(|&w| w == 0.0));
    }

    fn random_instance(
        seed: u64,
        n: usize,
        geometry: &MapGeometry,
    ) -> (Vec<(f64, f64)>, Vec<f64>) {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let w = geometry.n_ra as f64 * geometry.cell_size;
        let h = geometry.n_dec as f64 * geometry.cell_size;
        let coords: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                (
                    geometry.center.0 + (next() - 0.5) * w * 1.2,
                    geometry.center.1 + (next() - 0.5) * h * 1.2,
                )
            })
            .collect();
        let values: Vec<f64> = (0..n).map(|_| next() * 10.0 - 5.0).collect();
        (coords, values)
    }

    #[test]
    fn constant_sky_grids_to_constant() {
        let geometry = MapGeometry::new(16, 16, (30.0, 20.0), 0.5).unwrap();
        let kernel = KernelSpec::gaussian(0.6, 1.8).unwrap();
        let (coords, _) = random_instance(5, 3000, &geometry);
        let values = vec![2.5; coords.len()];
        let map = brute_force_grid(&coords, &values, &geometry, &kernel).unwrap();
        for &v in &map.values {
            if !v.is_nan() {
                assert!((v - 2.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lut_path_matches_brute_force() {
        let geometry = MapGeometry::new(24, 16, (120.0, -30.0), 0.4).unwrap();
        for (seed, kernel) in [
            (1u64, KernelSpec::gaussian(0.8, 2.4).unwrap()),
            (2, KernelSpec::tophat(1.0).unwrap()),
        ] {
            let (coords, values) = random_instance(seed, 4000, &geometry);
            let (sorted, lut) = prep(&coords, &kernel, geometry.cell_size);
            let (fast, counters) =
                grid_channel(&sorted, &values, &lut, &geometry, &kernel, 1).unwrap();
            let oracle = brute_force_grid(&coords, &values, &geometry, &kernel).unwrap();
            let mut oracle_contributors = 0u64;
            for idx in 0..fast.values.len() {
                assert_eq!(fast.values[idx].is_nan(), oracle.values[idx].is_nan(), "cell {idx}");
                if !fast.values[idx].is_nan() {
                    let denom = oracle.values[idx].abs().max(1.0);
                    assert!(
                        (fast.values[idx] - oracle.values[idx]).abs() / denom <= 1e-9,
                        "cell {idx}: {} vs {}",
                        fast.values[idx],
                        oracle.values[idx]
                    );
                }
            }
            // Exact-filter accounting: the gathered superset never changes
            // sums; within-radius counts match the oracle's contributors.
            let radius = kernel.radius_deg;
            for j in 0..geometry.n_dec {
                for i in 0..geometry.n_ra {
                    let cell = geometry.cell_center(i, j);
                    oracle_contributors += coords
                        .iter()
                        .filter(|&&p| angular_distance_unchecked(cell, p) <= radius)
                        .count() as u64;
                }
            }
            assert_eq!(counters.samples_within_radius, oracle_contributors);
            assert!(counters.samples_gathered >= counters.samples_within_radius);
        }
    }

    #[test]
    fn gamma_invariance_bit_identical() {
        let geometry = MapGeometry::new(20, 12, (30.0, 41.0), 0.5).unwrap();
        let kernel = KernelSpec::gaussian(0.7, 2.1).unwrap();
        let (coords, values) = random_instance(9, 3000, &geometry);
        let (sorted, lut) = prep(&coords, &kernel, geometry.cell_size);
        let (base, c1) = grid_channel(&sorted, &values, &lut, &geometry, &kernel, 1).unwrap();
        for gamma in [2usize, 3, 4] {
            let (m, c) = grid_channel(&sorted, &values, &lut, &geometry, &kernel, gamma).unwrap();
            assert_eq!(m.sums, base.sums, "gamma {gamma}");
            assert_eq!(m.weights, base.weights, "gamma {gamma}");
            assert!(
                c.ring_range_computations
                    <= (geometry.n_cells() as u64 + gamma as u64 - 1) / gamma as u64
                        + geometry.n_dec as u64,
                "gamma {gamma}: {} ring range computations",
                c.ring_range_computations
            );
            assert!(c.ring_range_computations < c1.ring_range_computations);
        }
        assert_eq!(c1.ring_range_computations, geometry.n_cells() as u64);
    }

    #[test]
    fn linearity_in_values() {
        let geometry = MapGeometry::new(10, 10, (0.0, 0.0), 0.5).unwrap();
        let kernel = KernelSpec::gaussian(0.7, 2.1).unwrap();
        let (coords, values) = random_instance(13, 1000, &geometry);
        let scaled: Vec<f64> = values.iter().map(|v| v * 3.0).collect();
        let (sorted, lut) = prep(&coords, &kernel, geometry.cell_size);
        let (a, _) = grid_channel(&sorted, &values, &lut, &geometry, &kernel, 1).unwrap();
        let (b, _) = grid_channel(&sorted, &scaled, &lut, &geometry, &kernel, 1).unwrap();
        let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for idx in 0..a.sums.len() {
            let expect = 3.0 * a.sums[idx];
            // Cancellation scale: roundoff grows with sum(|w v|), not |sum|.
            let tol = 1e-12 * (3.0 * a.weights[idx] * vmax).max(1e-300);
            assert!(
                (b.sums[idx] - expect).abs() <= tol,
                "cell {idx}: {} vs {expect}",
                b.sums[idx]
            );
        }
    }

    #[test]
    fn translation_in_ra() {
        let kernel = KernelSpec::gaussian(0.7, 2.1).unwrap();
        let geometry = MapGeometry::new(12, 12, (40.0, 10.0), 0.5).unwrap();
        let (coords, values) = random_instance(21, 1500, &geometry);
        let shifted: Vec<(f64, f64)> = coords.iter().map(|&(r, d)| (r + 25.0, d)).collect();
        let shifted_geom = MapGeometry::new(12, 12, (65.0, 10.0), 0.5).unwrap();
        let (s1, l1) = prep(&coords, &kernel, 0.5);
        let (s2, l2) = prep(&shifted, &kernel, 0.5);
        let (a, _) = grid_channel(&s1, &values, &l1, &geometry, &kernel, 1).unwrap();
        let (b, _) = grid_channel(&s2, &values, &l2, &shifted_geom, &kernel, 1).unwrap();
        for idx in 0..a.values.len() {
            match (a.values[idx].is_nan(), b.values[idx].is_nan()) {
                (true, true) => {}
                (false, false) => {
                    assert!((a.values[idx] - b.values[idx]).abs() < 1e-9, "cell {idx}")
                }
                _ => panic!("blank pattern changed under RA translation at cell {idx}"),
            }
        }
    }

    #[test]
    fn normalize_blank_and_unit() {
        let geometry = MapGeometry::new(2, 1, (0.0, 0.0), 1.0).unwrap();
        let mut map = TargetMap::blank(geometry);
        map.sums = vec![4.0, 0.0];
        map.weights = vec![2.0, 0.0];
        normalize(&mut map);
        assert_eq!(map.values[0], 2.0);
        assert!(map.values[1].is_nan());
    }

    #[test]
    fn normalize_elementwise_random() {
        let geometry = MapGeometry::new(8, 8, (0.0, 0.0), 1.0).unwrap();
        let mut map = TargetMap::blank(geometry);
        let mut state = 77u64;
        for idx in 0..map.sums.len() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            map.sums[idx] = (state >> 11) as f64 / (1u64 << 53) as f64;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            map.weights[idx] = (state >> 11) as f64 / (1u64 << 53) as f64;
        }
        normalize(&mut map);
        for idx in 0..map.sums.len() {
            assert_eq!(map.values[idx], map.sums[idx] / map.weights[idx]);
        }
    }

    #[test]
    fn diff_maps_statistics() {
        let geometry = MapGeometry::new(4, 4, (0.0, 0.0), 1.0).unwrap();
        let kernel = KernelSpec::tophat(1.5).unwrap();
        let (coords, values) = random_instance(31, 200, &geometry);
        let a = brute_force_grid(&coords, &values, &geometry, &kernel).unwrap();
        let d = diff_maps(&a, &a).unwrap();
        assert_eq!(d, MapDiff { max_abs: 0.0, rms: 0.0, n_blank_mismatch: 0 });
        let mut b = a.clone();
        for v in &mut b.values {
            if !v.is_nan() {
                *v += 1.0;
            }
        }
        let d = diff_maps(&a, &b).unwrap();
        assert!((d.max_abs - 1.0).abs() < 1e-15);
        assert!((d.rms - 1.0).abs() < 1e-15);
        assert_eq!(d.n_blank_mismatch, 0);
        let other = MapGeometry::new(5, 4, (0.0, 0.0), 1.0).unwrap();
        assert!(diff_maps(&a, &TargetMap::blank(other)).is_err());
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let geometry = MapGeometry::new(4, 4, (0.0, 0.0), 1.0).unwrap();
        let kernel = KernelSpec::tophat(1.0).unwrap();
        let coords = vec![(0.0, 0.0)];
        let (sorted, lut) = prep(&coords, &kernel, 1.0);
        assert!(grid_channel(&sorted, &[], &lut, &geometry, &kernel, 1).is_err());
        assert!(brute_force_grid(&coords, &[], &geometry, &kernel).is_err());
        assert!(grid_channel(&sorted, &[1.0], &lut, &geometry, &kernel, 0).is_err());
    }
}
