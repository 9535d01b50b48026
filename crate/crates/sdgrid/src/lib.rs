//! Kernel-weighted gridding of single-dish survey samples onto
//! equiangular sky maps, accelerated by a HEALPix ring-sorted lookup
//! table and a multi-channel worker pipeline.

pub mod datagen;
pub mod error;
pub mod gridder;
pub mod healpix;
pub mod io;
pub mod kernel;
pub mod lut;
pub mod pipeline;

pub use error::{Error, Result};
pub use gridder::{brute_force_grid, diff_maps, grid_channel, GatherCounters, MapDiff, MapGeometry, TargetMap};
pub use healpix::{HealpixScheme, PixelIntervalSet, RingInfo};
pub use io::{read_dataset, read_map, render_pgm, write_dataset, write_map, DataFormat, Dataset, RenderScale};
pub use kernel::{angular_distance, KernelKind, KernelSpec};
pub use lut::{build_lut, choose_nside, compute_pixel_indices, sort_by_pixel, LookupTable, SortedSamples};
pub use pipeline::{PipelineConfig, PipelineStats};
