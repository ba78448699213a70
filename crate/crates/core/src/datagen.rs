//! Ground-truth sensing matrices: CSV ingestion, synthesis, train/test split.
//!
//! Matrices are `m x n` with one row per cell and one column per cycle.
//! Missing readings are stored as NaN and never imputed here.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::TaskConfig;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Where a matrix came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Ingested,
    Synthetic { seed: u64, rank: usize, noise_sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMatrix {
    values: DMatrix<f64>,
    config: TaskConfig,
    provenance: Provenance,
}

impl GroundTruthMatrix {
    pub fn new(values: DMatrix<f64>, config: TaskConfig, provenance: Provenance) -> Result<Self> {
        config.validate()?;
        if values.nrows() != config.num_cells {
            return Err(Error::Dimension(format!(
                "matrix has {} rows, task has {} cells",
                values.nrows(),
                config.num_cells
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::TooFewCycles("matrix has no cycles".into()));
        }
        for j in 0..values.ncols() {
            let readings = values.column(j).iter().filter(|v| !v.is_nan()).count();
            if readings < 2 {
                return Err(Error::TooSparse { cycle: j, readings });
            }
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::InvalidValue("infinite reading".into()));
        }
        Ok(GroundTruthMatrix {
            values,
            config,
            provenance,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_cycles(&self) -> usize {
        self.values.ncols()
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// True readings of one cycle (NaN = missing).
    pub fn cycle(&self, j: usize) -> &[f64] {
        let m = self.num_cells();
        &self.values.as_slice()[j * m..(j + 1) * m]
    }

    pub fn is_missing(&self, cell: usize, cycle: usize) -> bool {
        self.values[(cell, cycle)].is_nan()
    }

    /// Same readings under a different task description (e.g. a different
    /// error metric); cell counts must agree.
    pub fn with_config(&self, config: TaskConfig) -> Result<Self> {
        Self::new(self.values.clone(), config, self.provenance.clone())
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    cycle: usize,
    cell: usize,
    value: f64,
}

/// Reads a `cycle,cell,value` file.
pub fn ingest_csv(path: impl AsRef<Path>, config: &TaskConfig) -> Result<GroundTruthMatrix> {
    let file = File::open(path)?;
    read_csv(BufReader::new(file), config)
}

/// Reader-based variant of [`ingest_csv`].
pub fn read_csv<R: Read>(reader: R, config: &TaskConfig) -> Result<GroundTruthMatrix> {
    config.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["cycle", "cell", "value"] {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `cycle,cell,value`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let m = config.num_cells;
    let mut rows: Vec<CsvRow> = Vec::new();
    for (idx, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        let line = idx + 2;
        let row = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if row.cell >= m {
            return Err(Error::Dimension(format!(
                "line {line}: cell {} >= {m} cells",
                row.cell
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no data rows".into() });
    }
    let n = rows.iter().map(|r| r.cycle).max().unwrap_or(0) + 1;
    let mut values = DMatrix::from_element(m, n, f64::NAN);
    let mut seen = vec![false; m * n];
    for row in &rows {
        let slot = row.cycle * m + row.cell;
        if seen[slot] {
            log::warn!(
                "duplicate reading for cycle {} cell {}, keeping the last one",
                row.cycle,
                row.cell
            );
        }
        seen[slot] = true;
        values[(row.cell, row.cycle)] = row.value;
    }
    GroundTruthMatrix::new(values, config.clone(), Provenance::Ingested)
}

/// Writes every non-missing entry as `cycle,cell,value`, cycle-major.
/// Values use the shortest representation that parses back to the same bits.
pub fn export_csv(matrix: &GroundTruthMatrix, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_csv(matrix, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(matrix: &GroundTruthMatrix, w: &mut W) -> Result<()> {
    writeln!(w, "cycle,cell,value")?;
    for j in 0..matrix.num_cycles() {
        for (i, v) in matrix.cycle(j).iter().enumerate() {
            if !v.is_nan() {
                writeln!(w, "{j},{i},{v}")?;
            }
        }
    }
    Ok(())
}

/// Parameters of the low-rank synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub rank: usize,
    pub noise_sigma: f64,
    /// Cycles per seasonal (diurnal) period.
    pub seasonal_period: f64,
    /// Mean reading level.
    pub level: f64,
    /// Scale of the varying factors.
    pub amplitude: f64,
    /// RBF length-scale of the spatial factors, in cell units.
    pub length_scale: f64,
    /// Std of a smooth log-amplitude field scaling the varying factors per
    /// cell; 0 gives every cell the same expected variability.
    #[serde(default)]
    pub heterogeneity: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            rank: 4,
            noise_sigma: 0.0,
            seasonal_period: 48.0,
            level: 6.0,
            amplitude: 2.0,
            length_scale: 2.0,
            heterogeneity: 0.0,
        }
    }
}

/// Spatially smooth factors: `rank` draws of a zero-mean Gaussian field with
/// RBF covariance over the cell coordinates. The first column is shifted to
/// a positive level profile. With `heterogeneity > 0` one more field `z` is
/// drawn and the other columns of row `i` are scaled by
/// `exp(heterogeneity * z_i)`, so some regions vary much more than others.
pub fn spatial_factors(
    config: &TaskConfig,
    rank: usize,
    length_scale: f64,
    heterogeneity: f64,
    rng: &mut SimRng,
) -> Result<DMatrix<f64>> {
    if !(heterogeneity >= 0.0) || !heterogeneity.is_finite() {
        return Err(Error::InvalidConfig(format!("heterogeneity {heterogeneity} < 0")));
    }
    let m = config.num_cells;
    if rank == 0 || rank > m {
        return Err(Error::InvalidRank { rank, max: m });
    }
    let coords = &config.cell_coords;
    let two_l2 = 2.0 * length_scale * length_scale;
    let kernel = DMatrix::from_fn(m, m, |i, j| {
        let (dr, dc) = (coords[i].0 - coords[j].0, coords[i].1 - coords[j].1);
        let k = (-(dr * dr + dc * dc) / two_l2).exp();
        if i == j {
            k + 1e-8
        } else {
            k
        }
    });
    let chol = kernel
        .cholesky()
        .ok_or_else(|| Error::InvalidValue("RBF kernel is not positive definite".into()))?;
    let l = chol.l();
    let gauss = DMatrix::from_fn(m, rank, |_, _| StandardNormal.sample(rng));
    let mut u = &l * gauss;
    for i in 0..m {
        u[(i, 0)] = 1.0 + 0.25 * u[(i, 0)];
    }
    if heterogeneity > 0.0 {
        let g = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
        let z = &l * g;
        for i in 0..m {
            let a = (heterogeneity * z[i]).exp();
            for f in 1..rank {
                u[(i, f)] *= a;
            }
        }
    }
    Ok(u)
}

/// Temporal factors: seasonal sinusoids (one harmonic per factor, random
/// phase) plus a small Gaussian random walk. Factor 0 carries `level`.
pub fn temporal_factors(
    num_cycles: usize,
    rank: usize,
    seasonal_period: f64,
    level: f64,
    amplitude: f64,
    rng: &mut SimRng,
) -> Result<DMatrix<f64>> {
    if rank == 0 || rank > num_cycles {
        return Err(Error::InvalidRank { rank, max: num_cycles });
    }
    if !(seasonal_period > 0.0) {
        return Err(Error::InvalidConfig("seasonal_period must be positive".into()));
    }
    let mut v = DMatrix::zeros(num_cycles, rank);
    for f in 0..rank {
        let phase = rng.random::<f64>() * 2.0 * PI;
        let harmonic = f.max(1) as f64;
        let scale = if f == 0 { 0.5 * amplitude } else { amplitude };
        let step_sigma = 0.05 * amplitude;
        let mut walk = 0.0;
        for t in 0..num_cycles {
            let z: f64 = StandardNormal.sample(rng);
            walk += step_sigma * z;
            let seasonal = (2.0 * PI * harmonic * t as f64 / seasonal_period + phase).sin();
            let base = if f == 0 { level } else { 0.0 };
            v[(t, f)] = base + scale * seasonal + walk;
        }
    }
    Ok(v)
}

/// `U * V^T` plus i.i.d. Gaussian noise of std `noise_sigma`.
pub fn compose(
    config: &TaskConfig,
    spatial: &DMatrix<f64>,
    temporal: &DMatrix<f64>,
    noise_sigma: f64,
    rng: &mut SimRng,
    provenance: Provenance,
) -> Result<GroundTruthMatrix> {
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("noise_sigma {noise_sigma} < 0")));
    }
    if spatial.ncols() != temporal.ncols() {
        return Err(Error::Dimension("factor ranks differ".into()));
    }
    let mut values = spatial * temporal.transpose();
    if noise_sigma > 0.0 {
        for v in values.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += noise_sigma * z;
        }
    }
    GroundTruthMatrix::new(values, config.clone(), provenance)
}

/// Low-rank-plus-noise matrix with spatially smooth, seasonal structure.
/// `seed` is recorded in the provenance only; all draws come from `rng`.
pub fn synthesize(
    config: &TaskConfig,
    num_cycles: usize,
    params: &SynthParams,
    seed: u64,
    rng: &mut SimRng,
) -> Result<GroundTruthMatrix> {
    let max = config.num_cells.min(num_cycles);
    if params.rank == 0 || params.rank > max {
        return Err(Error::InvalidRank { rank: params.rank, max });
    }
    let u = spatial_factors(config, params.rank, params.length_scale, params.heterogeneity, rng)?;
    let v = temporal_factors(
        num_cycles,
        params.rank,
        params.seasonal_period,
        params.level,
        params.amplitude,
        rng,
    )?;
    compose(
        config,
        &u,
        &v,
        params.noise_sigma,
        rng,
        Provenance::Synthetic {
            seed,
            rank: params.rank,
            noise_sigma: params.noise_sigma,
        },
    )
}

/// Standard deviation over all non-missing entries.
pub fn entry_std(values: &DMatrix<f64>) -> f64 {
    let known: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if known.len() < 2 {
        return 0.0;
    }
    let mean = known.iter().sum::<f64>() / known.len() as f64;
    let var = known.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (known.len() - 1) as f64;
    var.sqrt()
}

/// How many leading cycles go to training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    Fraction(f64),
    Count(usize),
    Days { days: usize, cycles_per_day: usize },
}

/// Contiguous prefix/suffix split of the cycle axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Range<usize>,
    pub test: Range<usize>,
}

pub fn split(num_cycles: usize, spec: SplitSpec, window_k: usize) -> Result<DatasetSplit> {
    let train = match spec {
        SplitSpec::Fraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidConfig(format!("train fraction {f} outside (0, 1)")));
            }
            (f * num_cycles as f64).floor() as usize
        }
        SplitSpec::Count(c) => c,
        SplitSpec::Days { days, cycles_per_day } => days * cycles_per_day,
    };
    if train < window_k + 1 {
        return Err(Error::TooFewCycles(format!(
            "{train} training cycles, need at least {}",
            window_k + 1
        )));
    }
    if train >= num_cycles {
        return Err(Error::TooFewCycles(format!(
            "{train} training cycles leave no test cycles out of {num_cycles}"
        )));
    }
    Ok(DatasetSplit {
        train: 0..train,
        test: train..num_cycles,
    })
}
