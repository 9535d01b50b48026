//! Dataset and map serialization plus PGM rendering.
//!
//! Binary layouts (little-endian, normative):
//!
//! * `SGD1` dataset: magic `SGD1`, u32 version = 1, u64 N, u64 C, then
//!   `ra[N]` f64, `dec[N]` f64, then values channel-major C x N f64.
//! * `SGM1` map: magic `SGM1`, u32 version = 1, u64 I, u64 J, f64
//!   center_ra, center_dec, cell_size, then sums, weights, values, each
//!   I x J f64 row-major with RA fastest.
//!
//! CSV datasets use the header `ra_deg,dec_deg,ch0,ch1,...`, one row per
//! sample, with shortest round-trip float formatting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::gridder::{MapGeometry, TargetMap};

const SGD_MAGIC: &[u8; 4] = b"SGD1";
const SGM_MAGIC: &[u8; 4] = b"SGM1";
const FORMAT_VERSION: u32 = 1;

/// Sample coordinates shared across channels plus per-channel values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Right ascension per sample, degrees in `[0, 360)`.
    pub ra: Vec<f64>,
    /// Declination per sample, degrees in `[-90, 90]`.
    pub dec: Vec<f64>,
    /// One value array of length N per channel (channel-major).
    pub values: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(ra: Vec<f64>, dec: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let ds = Dataset { ra, dec, values };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_samples(&self) -> usize {
        self.ra.len()
    }

    pub fn n_channels(&self) -> usize {
        self.values.len()
    }

    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.ra.iter().copied().zip(self.dec.iter().copied()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dec.len() != self.ra.len() {
            return Err(Error::format(format!(
                "ra length {} != dec length {}",
                self.ra.len(),
                self.dec.len()
            )));
        }
        if self.values.is_empty() {
            return Err(Error::format("dataset must have at least one channel".to_string()));
        }
        for (i, (&ra, &dec)) in self.ra.iter().zip(&self.dec).enumerate() {
            if !ra.is_finite() || !(0.0..360.0).contains(&ra) {
                return Err(Error::format(format!("sample {i}: ra {ra} outside [0, 360)")));
            }
            if !dec.is_finite() || !(-90.0..=90.0).contains(&dec) {
                return Err(Error::format(format!("sample {i}: dec {dec} outside [-90, 90]")));
            }
        }
        for (c, ch) in self.values.iter().enumerate() {
            if ch.len() != self.ra.len() {
                return Err(Error::format(format!(
                    "channel {c} has {} values for {} samples",
                    ch.len(),
                    self.ra.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    SgdBinary,
    Csv,
}

impl DataFormat {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sgd-binary" | "binary" | "sgd" => Ok(DataFormat::SgdBinary),
            "csv" => Ok(DataFormat::Csv),
            other => Err(Error::config(format!("unknown dataset format {other:?}"))),
        }
    }
}

pub fn write_dataset(dataset: &Dataset, path: &Path, format: DataFormat) -> Result<()> {
    dataset.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        DataFormat::SgdBinary => {
            w.write_all(SGD_MAGIC)?;
            w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
            w.write_u64::<LittleEndian>(dataset.n_samples() as u64)?;
            w.write_u64::<LittleEndian>(dataset.n_channels() as u64)?;
            for &v in &dataset.ra {
                w.write_f64::<LittleEndian>(v)?;
            }
            for &v in &dataset.dec {
                w.write_f64::<LittleEndian>(v)?;
            }
            for ch in &dataset.values {
                for &v in ch {
                    w.write_f64::<LittleEndian>(v)?;
                }
            }
        }
        DataFormat::Csv => {
            write!(w, "ra_deg,dec_deg")?;
            for c in 0..dataset.n_channels() {
                write!(w, ",ch{c}")?;
            }
            writeln!(w)?;
            for i in 0..dataset.n_samples() {
                write!(w, "{},{}", dataset.ra[i], dataset.dec[i])?;
                for ch in &dataset.values {
                    write!(w, ",{}", ch[i])?;
                }
                writeln!(w)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::SgdBinary => read_dataset_binary(path),
        DataFormat::Csv => read_dataset_csv(path),
    }
}

fn read_dataset_binary(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("truncated header".to_string()))?;
    if &magic != SGD_MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, expected SGD1")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported SGD version {version}")));
    }
    let n = r.read_u64::<LittleEndian>()? as usize;
    let c = r.read_u64::<LittleEndian>()? as usize;
    let mut read_vec = |len: usize, what: &str| -> Result<Vec<f64>> {
        let mut v = vec![0.0f64; len];
        r.read_f64_into::<LittleEndian>(&mut v)
            .map_err(|_| Error::format(format!("truncated {what}")))?;
        Ok(v)
    };
    let ra = read_vec(n, "ra block")?;
    let dec = read_vec(n, "dec block")?;
    let mut values = Vec::with_capacity(c);
    for ch in 0..c {
        values.push(read_vec(n, &format!("channel {ch}"))?);
    }
    Dataset::new(ra, dec, values)
}

fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("empty CSV".to_string()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[0] != "ra_deg" || cols[1] != "dec_deg" {
        return Err(Error::format(format!("bad CSV header {header:?}")));
    }
    let n_channels = cols.len() - 2;
    let mut ra = Vec::new();
    let mut dec = Vec::new();
    let mut values = vec![Vec::new(); n_channels];
    for (lineno, line) in lines.enumerate() {
        let row = lineno + 2; // 1-based, after the header
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::format(format!(
                "row {row}: {} fields, expected {}",
                fields.len(),
                cols.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::format(format!("row {row}: bad {what} {s:?}")))
        };
        let ra_v = parse(fields[0], "ra")?;
        let dec_v = parse(fields[1], "dec")?;
        if !(-90.0..=90.0).contains(&dec_v) {
            return Err(Error::format(format!("row {row}: dec {dec_v} outside [-90, 90]")));
        }
        ra.push(ra_v);
        dec.push(dec_v);
        for (c, slot) in values.iter_mut().enumerate() {
            slot.push(parse(fields[c + 2], "value")?);
        }
    }
    Dataset::new(ra, dec, values)
}

pub fn write_map(map: &TargetMap, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SGM_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u64::<LittleEndian>(map.geometry.n_ra as u64)?;
    w.write_u64::<LittleEndian>(map.geometry.n_dec as u64)?;
    w.write_f64::<LittleEndian>(map.geometry.center.0)?;
    w.write_f64::<LittleEndian>(map.geometry.center.1)?;
    w.write_f64::<LittleEndian>(map.geometry.cell_size)?;
    for plane in [&map.sums, &map.weights, &map.values] {
        for &v in plane {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_map(path: &Path) -> Result<TargetMap> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("truncated header".to_string()))?;
    if &magic != SGM_MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, expected SGM1")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported SGM version {version}")));
    }
    let n_ra = r.read_u64::<LittleEndian>()? as usize;
    let n_dec = r.read_u64::<LittleEndian>()? as usize;
    let center = (
        r.read_f64::<LittleEndian>()?,
        r.read_f64::<LittleEndian>()?,
    );
    let cell_size = r.read_f64::<LittleEndian>()?;
    let geometry = MapGeometry::new(n_ra, n_dec, center, cell_size)
        .map_err(|e| Error::format(format!("corrupt map header: {e}")))?;
    let n = geometry.n_cells();
    let mut read_plane = |what: &str| -> Result<Vec<f64>> {
        let mut v = vec![0.0f64; n];
        r.read_f64_into::<LittleEndian>(&mut v)
            .map_err(|_| Error::format(format!("truncated {what} plane")))?;
        Ok(v)
    };
    let sums = read_plane("sums")?;
    let weights = read_plane("weights")?;
    let values = read_plane("values")?;
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::format("negative or NaN weight in map".to_string()));
    }
    Ok(TargetMap { geometry, sums, weights, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderScale {
    Linear,
    Asinh,
}

impl RenderScale {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(RenderScale::Linear),
            "asinh" => Ok(RenderScale::Asinh),
            other => Err(Error::config(format!("unknown render scale {other:?}"))),
        }
    }
}

/// Softening knee of the asinh stretch, as a fraction of the clip range.
const ASINH_BETA: f64 = 0.1;

/// Render the normalized plane as a 16-bit binary PGM (P5), north up.
///
/// Clip levels come from the given percentiles of the covered cells;
/// blank cells render as 0.
pub fn render_pgm(
    map: &TargetMap,
    path: &Path,
    scale: RenderScale,
    clip: (f64, f64),
) -> Result<()> {
    let (lo_pct, hi_pct) = clip;
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct > hi_pct {
        return Err(Error::config(format!("bad clip percentiles ({lo_pct}, {hi_pct})")));
    }
    let mut finite: Vec<f64> = map.values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        eprintln!("warning: rendering an all-blank map");
    }
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let percentile = |p: f64| -> f64 {
        if finite.is_empty() {
            return 0.0;
        }
        let rank = ((p / 100.0) * (finite.len() - 1) as f64).round() as usize;
        finite[rank]
    };
    let lo = percentile(lo_pct);
    let hi = percentile(hi_pct);
    let range = (hi - lo).max(f64::MIN_POSITIVE);
    let stretch = |v: f64| -> u16 {
        if !v.is_finite() {
            return 0;
        }
        let t = ((v - lo) / range).clamp(0.0, 1.0);
        let t = match scale {
            RenderScale::Linear => t,
            RenderScale::Asinh => (t / ASINH_BETA).asinh() / (1.0 / ASINH_BETA).asinh(),
        };
        (t * 65535.0).round() as u16
    };
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n65535\n", map.geometry.n_ra, map.geometry.n_dec)?;
    // North up: image row 0 is the highest declination.
    for j in (0..map.geometry.n_dec).rev() {
        for i in 0..map.geometry.n_ra {
            let v = stretch(map.values[j * map.geometry.n_ra + i]);
            w.write_all(&v.to_be_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
