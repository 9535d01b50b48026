//! Multi-channel concurrency: one-time shared preprocessing, FIFO
//! dispatch of channel tasks to a worker pool, and staging that overlaps
//! gridding through a bounded buffer pool.
//!
//! One channel is one task. Workers receive immutable shared state (sorted
//! samples, lookup table, geometry, kernel) plus an exclusive value buffer
//! and produce an exclusive output map, so output never depends on worker
//! count. Value buffers come from a fixed pool of `prefetch_depth +
//! n_workers` and are recycled, never grown.

use std::time::Instant;

use crossbeam_channel as channel;

use crate::error::{Error, Result};
use crate::gridder::{grid_channel, GatherCounters, MapGeometry, TargetMap};
use crate::healpix::HealpixScheme;
use crate::io::Dataset;
use crate::kernel::KernelSpec;
use crate::lut::{build_lut, choose_nside, compute_pixel_indices, sort_by_pixel, LookupTable, SortedSamples};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub n_workers: usize,
    /// Cells per contribution-region group inside each channel.
    pub gamma: usize,
    /// Channels staged ahead of the workers.
    pub prefetch_depth: usize,
    pub nside_override: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { n_workers: 1, gamma: 1, prefetch_depth: 1, nside_override: None }
    }
}

impl PipelineConfig {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if self.n_workers < 1 {
            return Err(Error::config("need at least one worker".to_string()));
        }
        if self.gamma < 1 {
            return Err(Error::config("gamma must be >= 1".to_string()));
        }
        // Keep the resident buffer pool within a sane memory budget.
        let pool = self.prefetch_depth + self.n_workers;
        let bytes = pool.saturating_mul(n_samples).saturating_mul(8);
        if bytes > 8 << 30 {
            return Err(Error::config(format!(
                "buffer pool of {pool} x {n_samples} samples exceeds the 8 GiB budget"
            )));
        }
        Ok(())
    }

    pub fn pool_size(&self) -> usize {
        self.prefetch_depth + self.n_workers
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStatus {
    Queued,
    Staging,
    Gridding,
    Done,
}

/// One channel's staged values on their way through the pipeline.
#[derive(Debug)]
pub struct ChannelTask {
    pub channel_id: usize,
    pub values: ValueBuffer,
    pub status: TaskStatus,
    /// Seconds since run start at which the task was handed to the pool.
    pub dispatch_ts: f64,
    stage_interval: (f64, f64),
}

/// A pooled, recycled value buffer.
#[derive(Debug)]
pub struct ValueBuffer {
    pub id: usize,
    pub data: Vec<f64>,
}

/// Per-channel timing and counters.
#[derive(Debug, Clone, Copy)]
pub struct ChannelStats {
    pub channel_id: usize,
    pub t_stage_s: f64,
    pub t_grid_s: f64,
    pub t_write_s: f64,
    pub counters: GatherCounters,
    pub dispatch_ts: f64,
    pub stage_interval: (f64, f64),
    pub grid_interval: (f64, f64),
    pub buffer_id: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineStats {
    /// One-time shared preprocessing (pixel indices, sort, lookup table).
    pub t_preprocess_s: f64,
    /// How many times preprocessing ran during this run. Always 1.
    pub preprocess_passes: u32,
    pub t_wall_s: f64,
    pub n_workers: usize,
    pub pool_size: usize,
    /// Total time the stager spent waiting for a free buffer.
    pub t_pool_wait_s: f64,
    /// Sorted by channel id.
    pub channels: Vec<ChannelStats>,
}

impl PipelineStats {
    pub fn aggregated_counters(&self) -> GatherCounters {
        let mut total = GatherCounters::default();
        for c in &self.channels {
            total.merge(&c.counters);
        }
        total
    }

    pub fn distinct_buffers(&self) -> usize {
        let mut ids: Vec<usize> = self.channels.iter().map(|c| c.buffer_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Dispatch events, ordered by timestamp, must be sorted by channel id.
    pub fn dispatch_is_fifo(&self) -> bool {
        let mut events: Vec<(f64, usize)> = self
            .channels
            .iter()
            .map(|c| (c.dispatch_ts, c.channel_id))
            .collect();
        events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        events.windows(2).all(|w| w[0].1 < w[1].1)
    }

    /// True when some channel's staging interval intersects another
    /// channel's gridding interval.
    pub fn staging_overlapped_gridding(&self) -> bool {
        self.channels.iter().any(|a| {
            self.channels.iter().any(|b| {
                a.channel_id != b.channel_id
                    && a.stage_interval.0 < b.grid_interval.1
                    && b.grid_interval.0 < a.stage_interval.1
            })
        })
    }

    pub const CSV_HEADER: &'static str = "channel_id,t_preprocess_s,t_stage_s,t_grid_s,t_write_s,samples_gathered,samples_within_radius,ring_range_computations";

    /// Machine-readable per-channel summary.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for c in &self.channels {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                c.channel_id,
                self.t_preprocess_s,
                c.t_stage_s,
                c.t_grid_s,
                c.t_write_s,
                c.counters.samples_gathered,
                c.counters.samples_within_radius,
                c.counters.ring_range_computations
            )?;
        }
        Ok(())
    }

    /// Human-readable stage breakdown and throughput summary.
    pub fn report(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let total = self.aggregated_counters();
        let t_stage: f64 = self.channels.iter().map(|c| c.t_stage_s).sum();
        let t_grid: f64 = self.channels.iter().map(|c| c.t_grid_s).sum();
        let t_write: f64 = self.channels.iter().map(|c| c.t_write_s).sum();
        writeln!(out, "pipeline: {} channels, {} workers, pool {}", self.channels.len(), self.n_workers, self.pool_size).unwrap();
        writeln!(out, "  preprocess (T1): {:.4} s ({} pass)", self.t_preprocess_s, self.preprocess_passes).unwrap();
        writeln!(out, "  stage-in   (T2): {:.4} s total", t_stage).unwrap();
        writeln!(out, "  gridding   (T3): {:.4} s total", t_grid).unwrap();
        writeln!(out, "  write-out  (T4): {:.4} s total", t_write).unwrap();
        writeln!(out, "  wall: {:.4} s, pool wait: {:.4} s", self.t_wall_s, self.t_pool_wait_s).unwrap();
        writeln!(
            out,
            "  gathered {} candidates, {} within radius, {} ring-range computations",
            total.samples_gathered, total.samples_within_radius, total.ring_range_computations
        )
        .unwrap();
        if self.t_wall_s > 0.0 {
            writeln!(out, "  throughput: {:.0} gathers/s", total.samples_gathered as f64 / self.t_wall_s).unwrap();
        }
        out
    }
}

/// Copy one channel's values into a pooled buffer.
pub fn stage_channel(dataset: &Dataset, channel_id: usize, buf: &mut Vec<f64>) -> Result<()> {
    let values = dataset.values.get(channel_id).ok_or_else(|| Error::Channel {
        channel: channel_id,
        source: Box::new(Error::contract(format!(
            "channel {channel_id} out of range (C = {})",
            dataset.n_channels()
        ))),
    })?;
    if values.len() != dataset.n_samples() {
        return Err(Error::Channel {
            channel: channel_id,
            source: Box::new(Error::format(format!(
                "channel {channel_id} has {} values for {} samples",
                values.len(),
                dataset.n_samples()
            ))),
        });
    }
    buf.clear();
    buf.extend_from_slice(values);
    Ok(())
}

/// Shared read-only preprocessing output.
pub struct Preprocessed {
    pub scheme: HealpixScheme,
    pub sorted: SortedSamples,
    pub lut: LookupTable,
}

/// Run preprocessing once for a dataset.
pub fn preprocess(
    dataset: &Dataset,
    kernel: &KernelSpec,
    cell_size: f64,
    nside_override: Option<u64>,
) -> Result<Preprocessed> {
    let scheme = match nside_override {
        Some(n) => HealpixScheme::new(n)?,
        None => choose_nside(kernel, cell_size),
    };
    let coords = dataset.coords();
    let pixel_idx = compute_pixel_indices(&coords, &scheme)?;
    let sorted = sort_by_pixel(&coords, &pixel_idx)?;
    let lut = build_lut(&sorted, &scheme)?;
    Ok(Preprocessed { scheme, sorted, lut })
}

enum StagedTask {
    Ready(ChannelTask),
    Failed { channel_id: usize, error: Error },
}

struct Completed {
    channel_id: usize,
    result: Result<(TargetMap, GatherCounters)>,
    stats: ChannelStats,
}

/// Grid every channel of the dataset.
///
/// Preprocessing runs exactly once and is shared read-only by all workers;
/// channels are staged and dispatched in ascending channel order; a failed
/// channel is reported in its slot without stopping the others. The
/// optional sink is invoked once per completed channel (its time is
/// recorded as T4).
pub fn run(
    dataset: &Dataset,
    geometry: &MapGeometry,
    kernel: &KernelSpec,
    config: &PipelineConfig,
    sink: Option<&(dyn Fn(usize, &TargetMap) -> Result<()> + Sync)>,
) -> Result<(Vec<Result<TargetMap>>, PipelineStats)> {
    dataset.validate()?;
    config.validate(dataset.n_samples())?;
    let t_run = Instant::now();

    let pre = preprocess(dataset, kernel, geometry.cell_size, config.nside_override)?;
    let t_preprocess_s = t_run.elapsed().as_secs_f64();
    let preprocess_passes = 1u32;

    let n_channels = dataset.n_channels();
    let n_samples = dataset.n_samples();
    let pool_size = config.pool_size();
    let gamma = config.gamma;

    let (buf_tx, buf_rx) = channel::bounded::<ValueBuffer>(pool_size);
    for id in 0..pool_size {
        buf_tx
            .send(ValueBuffer { id, data: Vec::with_capacity(n_samples) })
            .expect("pool channel sized to hold every buffer");
    }
    let (task_tx, task_rx) = channel::bounded::<StagedTask>(config.prefetch_depth);
    let (done_tx, done_rx) = channel::unbounded::<Completed>();

    let mut outcomes: Vec<Option<Result<TargetMap>>> = (0..n_channels).map(|_| None).collect();
    let mut channel_stats: Vec<Option<ChannelStats>> = vec![None; n_channels];
    let mut t_pool_wait_s = 0.0f64;

    std::thread::scope(|scope| -> Result<()> {
        let pre = &pre;
        let pool_wait = &mut t_pool_wait_s;
        let stager_buf_tx = buf_tx.clone();
        // Stager: FIFO over channel ids, blocking on the buffer pool.
        scope.spawn(move || {
            let buf_tx = stager_buf_tx;
            for channel_id in 0..n_channels {
                let wait_start = t_run.elapsed().as_secs_f64();
                let Ok(mut buf) = buf_rx.recv() else {
                    return; // receivers gone, pipeline is shutting down
                };
                let stage_start = t_run.elapsed().as_secs_f64();
                *pool_wait += stage_start - wait_start;
                match stage_channel(dataset, channel_id, &mut buf.data) {
                    Ok(()) => {
                        let stage_end = t_run.elapsed().as_secs_f64();
                        let task = ChannelTask {
                            channel_id,
                            values: buf,
                            status: TaskStatus::Queued,
                            dispatch_ts: stage_end,
                            stage_interval: (stage_start, stage_end),
                        };
                        if task_tx.send(StagedTask::Ready(task)).is_err() {
                            return;
                        }
                    }
                    Err(error) => {
                        // Return the untouched buffer and report the slot.
                        let _ = buf_tx.send(buf);
                        if task_tx.send(StagedTask::Failed { channel_id, error }).is_err() {
                            return;
                        }
                    }
                }
            }
        });

        for _ in 0..config.n_workers {
            let task_rx = task_rx.clone();
            let done_tx = done_tx.clone();
            let buf_tx = buf_tx.clone();
            scope.spawn(move || {
                while let Ok(staged) = task_rx.recv() {
                    match staged {
                        StagedTask::Ready(mut task) => {
                            task.status = TaskStatus::Gridding;
                            let grid_start = t_run.elapsed().as_secs_f64();
                            let result = grid_channel(
                                &pre.sorted,
                                &task.values.data,
                                &pre.lut,
                                geometry,
                                kernel,
                                gamma,
                            );
                            let grid_end = t_run.elapsed().as_secs_f64();
                            task.status = TaskStatus::Done;
                            let counters = result
                                .as_ref()
                                .map(|&(_, c)| c)
                                .unwrap_or_default();
                            let stats = ChannelStats {
                                channel_id: task.channel_id,
                                t_stage_s: task.stage_interval.1 - task.stage_interval.0,
                                t_grid_s: grid_end - grid_start,
                                t_write_s: 0.0,
                                counters,
                                dispatch_ts: task.dispatch_ts,
                                stage_interval: task.stage_interval,
                                grid_interval: (grid_start, grid_end),
                                buffer_id: task.values.id,
                            };
                            let _ = buf_tx.send(task.values);
                            if done_tx
                                .send(Completed { channel_id: task.channel_id, result, stats })
                                .is_err()
                            {
                                return;
                            }
                        }
                        StagedTask::Failed { channel_id, error } => {
                            let ts = t_run.elapsed().as_secs_f64();
                            let stats = ChannelStats {
                                channel_id,
                                t_stage_s: 0.0,
                                t_grid_s: 0.0,
                                t_write_s: 0.0,
                                counters: GatherCounters::default(),
                                dispatch_ts: ts,
                                stage_interval: (ts, ts),
                                grid_interval: (ts, ts),
                                buffer_id: usize::MAX,
                            };
                            let _ = done_tx.send(Completed {
                                channel_id,
                                result: Err(error),
                                stats,
                            });
                        }
                    }
                }
            });
        }
        drop(task_rx);
        drop(done_tx);

        for _ in 0..n_channels {
            let done = done_rx
                .recv()
                .map_err(|_| Error::contract("pipeline workers exited early".to_string()))?;
            let mut stats = done.stats;
            let outcome = match done.result {
                Ok((map, _)) => {
                    if let Some(sink) = sink {
                        let w0 = t_run.elapsed().as_secs_f64();
                        let sunk = sink(done.channel_id, &map);
                        stats.t_write_s = t_run.elapsed().as_secs_f64() - w0;
                        sunk.map(|()| map)
                    } else {
                        Ok(map)
                    }
                }
                Err(e) => Err(e),
            };
            outcomes[done.channel_id] = Some(outcome);
            channel_stats[done.channel_id] = Some(stats);
        }
        Ok(())
    })?;

    let stats = PipelineStats {
        t_preprocess_s,
        preprocess_passes,
        t_wall_s: t_run.elapsed().as_secs_f64(),
        n_workers: config.n_workers,
        pool_size,
        t_pool_wait_s,
        channels: channel_stats
            .into_iter()
            .map(|c| c.expect("every channel completed"))
            .collect(),
    };
    let outcomes = outcomes
        .into_iter()
        .map(|o| o.expect("every channel completed"))
        .collect();
    Ok((outcomes, stats))
}
