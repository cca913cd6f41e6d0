//! Density × traffic sweeps over independent runs.
//!
//! Each run owns its world and random streams, so runs are independent and
//! can be executed on a rayon pool. Results are always collected in grid
//! order; the output does not depend on the number of worker threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::energy::{BatteryDistribution, EnergyCostTable};
use crate::engine::{run, Protocol, RunOptions};
use crate::error::{Result, SimError};
use crate::metrics::longevity;
use crate::world::WorldConfig;

/// Applies `f` to every item using up to `jobs` threads, preserving order.
/// Without the `parallel` feature, or with `jobs <= 1`, runs sequentially.
pub fn map_ordered<T, R, F>(jobs: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if jobs > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => return pool.install(|| items.par_iter().map(&f).collect()),
            Err(e) => log::warn!("could not start {jobs} worker threads ({e}); running sequentially"),
        }
    }
    #[cfg(not(feature = "parallel"))]
    if jobs > 1 {
        log::debug!("built without the `parallel` feature; ignoring jobs = {jobs}");
    }
    items.iter().map(f).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Everything except `n_phones`, `msgs_per_period` and `seed`.
    pub base: WorldConfig,
    pub costs: EnergyCostTable,
    pub battery: BatteryDistribution,
    pub phones: Vec<usize>,
    pub msgs_per_period: Vec<u32>,
    pub seeds: Vec<u64>,
    pub theta: f64,
}

impl SweepSpec {
    /// 100..=800 phones by 100, 1..=10 messages per period.
    pub fn standard(base: WorldConfig, costs: EnergyCostTable, seeds: Vec<u64>, theta: f64) -> Self {
        SweepSpec {
            base,
            costs,
            battery: BatteryDistribution::default(),
            phones: (1..=8).map(|k| k * 100).collect(),
            msgs_per_period: (1..=10).collect(),
            seeds,
            theta,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.phones.is_empty() || self.msgs_per_period.is_empty() || self.seeds.is_empty() {
            return Err(SimError::InvalidConfig("sweep grid must not be empty".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(SimError::InvalidConfig("theta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One scenario of the grid, both protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    pub n_phones: usize,
    pub msgs_per_period: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRow {
    pub n_phones: usize,
    pub density: f64,
    pub msgs_per_period: u32,
    /// `None` for the seed-averaged row.
    pub seed: Option<u64>,
    pub longevity_mesh_h: f64,
    pub longevity_sos_h: f64,
    pub diff_h: f64,
}

/// Longevity of one protocol at one grid point.
pub fn point_longevity(spec: &SweepSpec, point: SweepPoint, protocol: Protocol) -> Result<f64> {
    let cfg = WorldConfig {
        n_phones: point.n_phones,
        msgs_per_period: point.msgs_per_period,
        seed: point.seed,
        ..spec.base.clone()
    };
    let opts = RunOptions {
        battery: spec.battery,
        ..Default::default()
    };
    let result = run(cfg, spec.costs, protocol, opts)?;
    Ok(longevity(&result.alive_series(), spec.theta))
}

pub fn grid_points(spec: &SweepSpec) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &n_phones in &spec.phones {
        for &msgs_per_period in &spec.msgs_per_period {
            for &seed in &spec.seeds {
                out.push(SweepPoint { n_phones, msgs_per_period, seed });
            }
        }
    }
    out
}

/// Runs the whole grid. Rows come out grouped by `(n_phones, msgs)` in grid
/// order: one row per seed followed by the seed-averaged row.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<Vec<PhaseRow>> {
    spec.validate()?;
    let points = grid_points(spec);
    let tasks: Vec<(SweepPoint, Protocol)> = points
        .iter()
        .flat_map(|&p| [(p, Protocol::Mesh), (p, Protocol::Sos)])
        .collect();
    let longevities = map_ordered(jobs, &tasks, |&(p, proto)| point_longevity(spec, p, proto));
    let longevities: Vec<f64> = longevities.into_iter().collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let per_cell = spec.seeds.len();
    for (cell, chunk) in points.chunks(per_cell).enumerate() {
        let mut sum_mesh = 0.0;
        let mut sum_sos = 0.0;
        for (k, point) in chunk.iter().enumerate() {
            let i = (cell * per_cell + k) * 2;
            let (mesh, sos) = (longevities[i], longevities[i + 1]);
            sum_mesh += mesh;
            sum_sos += sos;
            rows.push(PhaseRow {
                n_phones: point.n_phones,
                density: point.n_phones as f64 / (spec.base.width * spec.base.height),
                msgs_per_period: point.msgs_per_period,
                seed: Some(point.seed),
                longevity_mesh_h: mesh,
                longevity_sos_h: sos,
                diff_h: sos - mesh,
            });
        }
        let k = per_cell as f64;
        let first = chunk[0];
        rows.push(PhaseRow {
            n_phones: first.n_phones,
            density: first.n_phones as f64 / (spec.base.width * spec.base.height),
            msgs_per_period: first.msgs_per_period,
            seed: None,
            longevity_mesh_h: sum_mesh / k,
            longevity_sos_h: sum_sos / k,
            diff_h: (sum_sos - sum_mesh) / k,
        });
    }
    Ok(rows)
}
