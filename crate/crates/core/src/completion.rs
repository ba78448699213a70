//! Inference of unsensed cells in the current cycle.
//!
//! The main inferer is low-rank matrix completion by alternating least
//! squares over a sliding window of recent cycles. Inverse-distance KNN is
//! the spatial alternative; both are combined into the query-by-committee
//! ensemble.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// The last `W` cycles of readings, current cycle rightmost.
///
/// Stored column-major (`values[j * m + i]` is cell `i` in column `j`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    m: usize,
    w: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl ObservationWindow {
    pub fn new(m: usize, w: usize, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if m == 0 || w == 0 {
            return Err(Error::EmptyWindow);
        }
        if values.len() != m * w || mask.len() != m * w {
            return Err(Error::ShapeMismatch(format!(
                "window {m}x{w} with {} values and {} mask bits",
                values.len(),
                mask.len()
            )));
        }
        let mut win = ObservationWindow { m, w, values, mask };
        for idx in 0..m * w {
            if !win.values[idx].is_finite() {
                win.mask[idx] = false;
            }
            if !win.mask[idx] {
                win.values[idx] = 0.0;
            }
        }
        Ok(win)
    }

    /// Window whose past columns are observed wherever finite (NaN marks an
    /// unsensed cell) and whose current column holds `current` where
    /// `current_mask` is set.
    pub fn from_parts(m: usize, past: &[Vec<f64>], current: &[f64], current_mask: &[bool]) -> Result<Self> {
        let w = past.len() + 1;
        let mut values = Vec::with_capacity(m * w);
        let mut mask = Vec::with_capacity(m * w);
        for col in past {
            if col.len() != m {
                return Err(Error::ShapeMismatch("past column length".into()));
            }
            values.extend_from_slice(col);
            mask.extend(col.iter().map(|v| v.is_finite()));
        }
        if current.len() != m || current_mask.len() != m {
            return Err(Error::ShapeMismatch("current column length".into()));
        }
        values.extend_from_slice(current);
        mask.extend_from_slice(current_mask);
        Self::new(m, w, values, mask)
    }

    pub fn num_cells(&self) -> usize {
        self.m
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn value(&self, cell: usize, col: usize) -> f64 {
        self.values[col * self.m + cell]
    }

    pub fn observed(&self, cell: usize, col: usize) -> bool {
        self.mask[col * self.m + cell]
    }

    pub fn current_values(&self) -> &[f64] {
        let start = (self.w - 1) * self.m;
        &self.values[start..]
    }

    pub fn current_mask(&self) -> &[bool] {
        let start = (self.w - 1) * self.m;
        &self.mask[start..]
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Copy with one current-cycle observation withheld.
    pub fn without_current(&self, cell: usize) -> Self {
        let mut w = self.clone();
        let idx = (self.w - 1) * self.m + cell;
        w.mask[idx] = false;
        w.values[idx] = 0.0;
        w
    }

    /// Copy with one extra current-cycle observation.
    pub fn with_current(&self, cell: usize, value: f64) -> Self {
        let mut w = self.clone();
        let idx = (self.w - 1) * self.m + cell;
        w.mask[idx] = value.is_finite();
        w.values[idx] = if value.is_finite() { value } else { 0.0 };
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellSource {
    Observed,
    Inferred,
}

/// Readings for every cell of the current cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct InferredColumn {
    pub values: Vec<f64>,
    pub source: Vec<CellSource>,
}

impl InferredColumn {
    /// Overwrites inferred values with the sensed ones of `window`.
    fn from_estimate(mut values: Vec<f64>, window: &ObservationWindow) -> Self {
        let cur = window.current_values();
        let mask = window.current_mask();
        let source = (0..values.len())
            .map(|i| {
                if mask[i] {
                    values[i] = cur[i];
                    CellSource::Observed
                } else {
                    CellSource::Inferred
                }
            })
            .collect();
        InferredColumn { values, source }
    }
}

/// Anything that fills the current column of a window.
pub trait Infer: Send + Sync {
    fn infer(&self, window: &ObservationWindow) -> Result<InferredColumn>;
}

/// Alternating-least-squares settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsParams {
    pub rank: usize,
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Seed of the uniform initialization.
    pub seed: u64,
    #[serde(default)]
    pub init: AlsInit,
}

/// Starting factors.
///
/// Small uniform starts keep surplus components near zero when the rank is
/// set above the data's, but with almost no ridge penalty they can stall in
/// poor local minima when some rows or columns have few observations. The
/// spectral start avoids those minima at an exact rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlsInit {
    /// Seeded uniform(-0.1, 0.1) entries.
    #[default]
    Uniform,
    /// Truncated SVD of the zero-filled window, rescaled by the observed
    /// fraction.
    Spectral,
}

impl AlsParams {
    /// Defaults for an `m`-cell task: rank `min(5, m / 4)` (at least 1).
    pub fn for_cells(m: usize) -> Self {
        AlsParams {
            rank: (m / 4).clamp(1, 5),
            lambda: 1e-2,
            max_iters: 50,
            tol: 1e-6,
            seed: 0,
            init: AlsInit::Uniform,
        }
    }
}

/// Result of a factorization `window ~ L * R^T`.
#[derive(Debug, Clone)]
pub struct AlsFit {
    pub rank: usize,
    /// `m x rank`, row-major.
    pub left: Vec<f64>,
    /// `W x rank`, row-major.
    pub right: Vec<f64>,
    /// Objective before the first sweep and after every sweep.
    pub objective: Vec<f64>,
}

impl AlsFit {
    pub fn predict(&self, cell: usize, col: usize) -> f64 {
        let r = self.rank;
        let l = &self.left[cell * r..(cell + 1) * r];
        let rr = &self.right[col * r..(col + 1) * r];
        l.iter().zip(rr).map(|(a, b)| a * b).sum()
    }
}

/// Fits `window ~ L R^T` minimizing squared error on observed entries plus
/// `lambda (|L|^2 + |R|^2)`. The rank is clamped to `min(rank, m, W)` so
/// short windows at the start of a run still work.
pub fn als_factorize(window: &ObservationWindow, params: &AlsParams) -> Result<AlsFit> {
    if window.observed_count() == 0 {
        return Err(Error::EmptyWindow);
    }
    if params.rank == 0 {
        return Err(Error::InvalidRank { rank: 0, max: window.m.min(window.w) });
    }
    if !(params.lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda {} < 0", params.lambda)));
    }
    let (m, w) = (window.m, window.w);
    let r = params.rank.min(m).min(w);
    let (mut left, mut right) = match params.init {
        AlsInit::Spectral => spectral_init(window, r),
        AlsInit::Uniform => {
            let mut rng = SimRng::seed_from_u64(params.seed);
            let left = (0..m * r).map(|_| rng.random_range(-0.1..0.1)).collect();
            let right = (0..w * r).map(|_| rng.random_range(-0.1..0.1)).collect();
            (left, right)
        }
    };

    let mut solver = RidgeSolver::new(r, params.lambda);
    let mut objective = vec![als_objective(window, &left, &right, r, params.lambda)];
    for _ in 0..params.max_iters {
        // rows of L
        for i in 0..m {
            solver.reset();
            for j in 0..w {
                if window.mask[j * m + i] {
                    solver.add(&right[j * r..(j + 1) * r], window.values[j * m + i]);
                }
            }
            solver.solve_into(&mut left[i * r..(i + 1) * r])?;
        }
        // rows of R
        for j in 0..w {
            solver.reset();
            for i in 0..m {
                if window.mask[j * m + i] {
                    solver.add(&left[i * r..(i + 1) * r], window.values[j * m + i]);
                }
            }
            solver.solve_into(&mut right[j * r..(j + 1) * r])?;
        }
        // Equalize factor norms: L R^T is unchanged and the penalty can only drop.
        for f in 0..r {
            let nl = (0..m).map(|i| left[i * r + f].powi(2)).sum::<f64>().sqrt();
            let nr = (0..w).map(|j| right[j * r + f].powi(2)).sum::<f64>().sqrt();
            if nl > 0.0 && nr > 0.0 {
                let s = (nr / nl).sqrt();
                (0..m).for_each(|i| left[i * r + f] *= s);
                (0..w).for_each(|j| right[j * r + f] /= s);
            }
        }
        let obj = als_objective(window, &left, &right, r, params.lambda);
        let prev = *objective.last().unwrap();
        objective.push(obj);
        if (prev - obj).abs() <= params.tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(AlsFit {
        rank: r,
        left,
        right,
        objective,
    })
}

/// Leading singular pairs of the zero-filled window rescaled by the
/// observed fraction, split evenly between the two factors.
fn spectral_init(window: &ObservationWindow, r: usize) -> (Vec<f64>, Vec<f64>) {
    let (m, w) = (window.m, window.w);
    let frac = window.observed_count() as f64 / (m * w) as f64;
    let filled = nalgebra::DMatrix::from_fn(m, w, |i, j| {
        if window.mask[j * m + i] {
            window.values[j * m + i] / frac
        } else {
            0.0
        }
    });
    let svd = filled.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut left = vec![0.0; m * r];
    let mut right = vec![0.0; w * r];
    for (f, &k) in order.iter().take(r).enumerate() {
        let s = svd.singular_values[k].sqrt();
        for i in 0..m {
            left[i * r + f] = u[(i, k)] * s;
        }
        for j in 0..w {
            right[j * r + f] = vt[(k, j)] * s;
        }
    }
    (left, right)
}

fn als_objective(window: &ObservationWindow, left: &[f64], right: &[f64], r: usize, lambda: f64) -> f64 {
    let m = window.m;
    let mut sse = 0.0;
    for j in 0..window.w {
        let rr = &right[j * r..(j + 1) * r];
        for i in 0..m {
            if window.mask[j * m + i] {
                let l = &left[i * r..(i + 1) * r];
                let pred: f64 = l.iter().zip(rr).map(|(a, b)| a * b).sum();
                let d = window.values[j * m + i] - pred;
                sse += d * d;
            }
        }
    }
    let norm = left.iter().chain(right).map(|v| v * v).sum::<f64>();
    sse + lambda * norm
}

/// Accumulates and solves `(lambda I + sum x x^T) beta = sum y x`.
struct RidgeSolver {
    r: usize,
    lambda: f64,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    count: usize,
}

impl RidgeSolver {
    fn new(r: usize, lambda: f64) -> Self {
        RidgeSolver {
            r,
            lambda,
            gram: vec![0.0; r * r],
            rhs: vec![0.0; r],
            count: 0,
        }
    }

    fn reset(&mut self) {
        self.gram.iter_mut().for_each(|v| *v = 0.0);
        self.rhs.iter_mut().for_each(|v| *v = 0.0);
        for d in 0..self.r {
            self.gram[d * self.r + d] = self.lambda;
        }
        self.count = 0;
    }

    fn add(&mut self, x: &[f64], y: f64) {
        let r = self.r;
        for a in 0..r {
            let xa = x[a];
            self.rhs[a] += y * xa;
            // lower triangle only
            for b in 0..=a {
                self.gram[a * r + b] += xa * x[b];
            }
        }
        self.count += 1;
    }

    fn solve_into(&mut self, out: &mut [f64]) -> Result<()> {
        let r = self.r;
        if self.count == 0 && self.lambda > 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        // in-place Cholesky, lower triangle
        let g = &mut self.gram;
        for j in 0..r {
            let mut d = g[j * r + j];
            for k in 0..j {
                d -= g[j * r + k] * g[j * r + k];
            }
            if !(d > 1e-14 * (1.0 + self.lambda)) {
                return Err(Error::SingularSolve);
            }
            let d = d.sqrt();
            g[j * r + j] = d;
            for i in j + 1..r {
                let mut s = g[i * r + j];
                for k in 0..j {
                    s -= g[i * r + k] * g[j * r + k];
                }
                g[i * r + j] = s / d;
            }
        }
        // forward then backward substitution
        for i in 0..r {
            let mut s = self.rhs[i];
            for k in 0..i {
                s -= g[i * r + k] * out[k];
            }
            out[i] = s / g[i * r + i];
        }
        for i in (0..r).rev() {
            let mut s = out[i];
            for k in i + 1..r {
                s -= g[k * r + i] * out[k];
            }
            out[i] = s / g[i * r + i];
        }
        Ok(())
    }
}

/// Completes the current column by ALS; sensed cells keep their readings.
pub fn als_complete(window: &ObservationWindow, params: &AlsParams) -> Result<InferredColumn> {
    let fit = als_factorize(window, params)?;
    let cur = window.w - 1;
    let est = (0..window.m).map(|i| fit.predict(i, cur)).collect();
    Ok(InferredColumn::from_estimate(est, window))
}

/// Inverse-distance-weighted mean of the `k` nearest sensed cells.
///
/// With nothing sensed this cycle, each cell takes its most recent observed
/// value in the window (or the window mean if it was never observed).
pub fn knn_infer(window: &ObservationWindow, coords: &[(f64, f64)], k: usize) -> Result<InferredColumn> {
    let m = window.m;
    if coords.len() != m {
        return Err(Error::ShapeMismatch(format!("{} coords for {m} cells", coords.len())));
    }
    if window.observed_count() == 0 {
        return Err(Error::EmptyWindow);
    }
    let cur = window.current_values();
    let mask = window.current_mask();
    let sensed: Vec<usize> = (0..m).filter(|&i| mask[i]).collect();
    let k = k.max(1);

    let mut est = vec![0.0; m];
    if sensed.is_empty() {
        let known: Vec<f64> = (0..m * window.w)
            .filter(|&idx| window.mask[idx])
            .map(|idx| window.values[idx])
            .collect();
        let mean = known.iter().sum::<f64>() / known.len() as f64;
        for (i, e) in est.iter_mut().enumerate() {
            *e = (0..window.w)
                .rev()
                .find(|&j| window.observed(i, j))
                .map(|j| window.value(i, j))
                .unwrap_or(mean);
        }
        return Ok(InferredColumn::from_estimate(est, window));
    }

    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(sensed.len());
    for i in 0..m {
        if mask[i] {
            continue;
        }
        dists.clear();
        dists.extend(sensed.iter().map(|&s| {
            let (dr, dc) = (coords[i].0 - coords[s].0, coords[i].1 - coords[s].1);
            ((dr * dr + dc * dc).sqrt(), s)
        }));
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &dists[..k.min(dists.len())];
        est[i] = if let Some(&(_, s)) = nearest.iter().find(|(d, _)| *d == 0.0) {
            cur[s]
        } else {
            let (num, den) = nearest
                .iter()
                .fold((0.0, 0.0), |(n, d), &(dist, s)| (n + cur[s] / dist, d + 1.0 / dist));
            num / den
        };
    }
    Ok(InferredColumn::from_estimate(est, window))
}

/// Configured inference algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum InferenceMethod {
    Als(AlsParams),
    Knn { k: usize },
}

impl InferenceMethod {
    pub fn build(&self, coords: &[(f64, f64)]) -> Box<dyn Infer> {
        match self {
            InferenceMethod::Als(p) => Box::new(AlsInferer { params: *p }),
            InferenceMethod::Knn { k } => Box::new(KnnInferer {
                coords: coords.to_vec(),
                k: *k,
            }),
        }
    }
}

pub struct AlsInferer {
    pub params: AlsParams,
}

impl Infer for AlsInferer {
    fn infer(&self, window: &ObservationWindow) -> Result<InferredColumn> {
        als_complete(window, &self.params)
    }
}

pub struct KnnInferer {
    pub coords: Vec<(f64, f64)>,
    pub k: usize,
}

impl Infer for KnnInferer {
    fn infer(&self, window: &ObservationWindow) -> Result<InferredColumn> {
        knn_infer(window, &self.coords, self.k)
    }
}

/// Query-by-committee members: ALS at rank `r`, ALS at rank `2r`, and KNN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Committee {
    pub als: AlsParams,
    pub knn_k: usize,
}

impl Committee {
    pub fn for_cells(m: usize) -> Self {
        Committee {
            als: AlsParams::for_cells(m),
            knn_k: 4,
        }
    }
}

pub fn committee_infer(
    window: &ObservationWindow,
    coords: &[(f64, f64)],
    committee: &Committee,
) -> Result<Vec<InferredColumn>> {
    let double = AlsParams {
        rank: committee.als.rank * 2,
        ..committee.als
    };
    Ok(vec![
        als_complete(window, &committee.als)?,
        als_complete(window, &double)?,
        knn_infer(window, coords, committee.knn_k)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use rand_distr::{Distribution, StandardNormal};

    /// `m x w` matrix `sum_f a_f b_f^T` with Gaussian factors, column-major.
    fn low_rank(m: usize, w: usize, rank: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, Stream::Data);
        let a: Vec<f64> = (0..m * rank).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..w * rank).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut out = vec![0.0; m * w];
        for j in 0..w {
            for i in 0..m {
                out[j * m + i] = (0..rank).map(|f| a[i * rank + f] * b[j * rank + f]).sum();
            }
        }
        out
    }

    fn random_mask(len: usize, frac: f64, seed: u64) -> Vec<bool> {
        let mut rng = substream(seed, Stream::Env);
        (0..len).map(|_| rng.random::<f64>() < frac).collect()
    }

    fn held_out_rmse(full: &[f64], mask: &[bool], fit: &AlsFit, m: usize) -> f64 {
        let mut sse = 0.0;
        let mut n = 0;
        for idx in 0..full.len() {
            if !mask[idx] {
                let d = full[idx] - fit.predict(idx % m, idx / m);
                sse += d * d;
                n += 1;
            }
        }
        (sse / n as f64).sqrt()
    }

    fn monotone(obj: &[f64]) -> bool {
        obj.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs())
    }

    #[test]
    fn rank_one_half_observed() {
        let (m, w) = (12, 16);
        let full = low_rank(m, w, 1, 1);
        let mask = random_mask(m * w, 0.5, 2);
        let win = ObservationWindow::new(m, w, full.clone(), mask.clone()).unwrap();
        let params = AlsParams {
            rank: 1,
            lambda: 1e-6,
            max_iters: 2000,
            tol: 1e-15,
            seed: 7,
            init: AlsInit::Uniform,
        };
        let fit = als_factorize(&win, &params).unwrap();
        assert!(monotone(&fit.objective));
        let rmse = held_out_rmse(&full, &mask, &fit, m);
        assert!(rmse < 1e-6, "rmse {rmse}");
    }

    #[test]
    fn rank_two_forty_percent() {
        let (m, w) = (20, 30);
        let full = low_rank(m, w, 2, 11);
        let mask = random_mask(m * w, 0.4, 12);
        let win = ObservationWindow::new(m, w, full.clone(), mask.clone()).unwrap();
        let params = AlsParams {
            rank: 2,
            lambda: 1e-8,
            max_iters: 3000,
            tol: 1e-14,
            seed: 3,
            init: AlsInit::Uniform,
        };
        let fit = als_factorize(&win, &params).unwrap();
        assert!(monotone(&fit.objective));
        let rmse = held_out_rmse(&full, &mask, &fit, m);
        assert!(rmse < 1e-3, "rmse {rmse}");
    }

    #[test]
    fn spectral_start_recovers_rank_two_instances() {
        let (m, w) = (20, 30);
        let params = AlsParams {
            rank: 2,
            lambda: 1e-8,
            max_iters: 3000,
            tol: 1e-14,
            seed: 0,
            init: AlsInit::Spectral,
        };
        for k in 0..5 {
            let full = low_rank(m, w, 2, 40 + k);
            let mask = random_mask(m * w, 0.4, 50 + k);
            let win = ObservationWindow::new(m, w, full.clone(), mask.clone()).unwrap();
            let fit = als_factorize(&win, &params).unwrap();
            assert!(monotone(&fit.objective));
            let rmse = held_out_rmse(&full, &mask, &fit, m);
            assert!(rmse < 1e-3, "instance {k}: rmse {rmse}");
        }
    }

    #[test]
    fn fully_observed_current_column_passes_through() {
        let (m, w) = (6, 5);
        let full = low_rank(m, w, 2, 4);
        let mut mask = random_mask(m * w, 0.6, 5);
        for i in 0..m {
            mask[(w - 1) * m + i] = true;
        }
        let win = ObservationWindow::new(m, w, full.clone(), mask).unwrap();
        let col = als_complete(&win, &AlsParams::for_cells(m)).unwrap();
        for i in 0..m {
            assert_eq!(col.values[i].to_bits(), full[(w - 1) * m + i].to_bits());
            assert_eq!(col.source[i], CellSource::Observed);
        }
    }

    #[test]
    fn als_is_deterministic_and_homogeneous() {
        let (m, w) = (10, 12);
        let full = low_rank(m, w, 2, 21);
        let mask = random_mask(m * w, 0.7, 22);
        let win = ObservationWindow::new(m, w, full.clone(), mask.clone()).unwrap();
        let params = AlsParams {
            rank: 2,
            lambda: 1e-2,
            max_iters: 5000,
            tol: 1e-15,
            seed: 1,
            init: AlsInit::Uniform,
        };
        let a = als_complete(&win, &params).unwrap();
        let b = als_complete(&win, &params).unwrap();
        assert_eq!(a, b);

        // Scaling data by s and lambda by s leaves the optimum scaled by s.
        let s = 2.0;
        let scaled: Vec<f64> = full.iter().map(|v| v * s).collect();
        let win2 = ObservationWindow::new(m, w, scaled, mask).unwrap();
        let c = als_complete(&win2, &AlsParams { lambda: params.lambda * s, ..params }).unwrap();
        for i in 0..m {
            let rel = (c.values[i] - s * a.values[i]).abs() / (s * a.values[i]).abs().max(1e-3);
            assert!(rel < 1e-6, "cell {i}: {} vs {}", c.values[i], s * a.values[i]);
        }
    }

    #[test]
    fn zero_lambda_can_be_singular() {
        // a cell observed nowhere leaves its row of L unconstrained
        let (m, w) = (4, 3);
        let mut mask = vec![true; m * w];
        for j in 0..w {
            mask[j * m] = false;
        }
        let win = ObservationWindow::new(m, w, vec![1.0; m * w], mask).unwrap();
        let p = AlsParams { rank: 1, lambda: 0.0, max_iters: 5, tol: 0.0, seed: 0, init: AlsInit::Uniform };
        assert!(matches!(als_complete(&win, &p), Err(Error::SingularSolve)));
        let ok = AlsParams { lambda: 1e-3, ..p };
        assert!(als_complete(&win, &ok).is_ok());
    }

    #[test]
    fn empty_window() {
        let win = ObservationWindow::new(3, 2, vec![0.0; 6], vec![false; 6]).unwrap();
        assert!(matches!(als_complete(&win, &AlsParams::for_cells(3)), Err(Error::EmptyWindow)));
        assert!(matches!(
            knn_infer(&win, &[(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)], 2),
            Err(Error::EmptyWindow)
        ));
        assert!(ObservationWindow::new(3, 0, vec![], vec![]).is_err());
    }

    fn grid3() -> Vec<(f64, f64)> {
        (0..9).map(|i| ((i / 3) as f64, (i % 3) as f64)).collect()
    }

    #[test]
    fn knn_single_sensed_cell() {
        let mut cur = vec![0.0; 9];
        let mut mask = vec![false; 9];
        cur[4] = 10.0;
        mask[4] = true;
        let win = ObservationWindow::from_parts(9, &[], &cur, &mask).unwrap();
        let col = knn_infer(&win, &grid3(), 3).unwrap();
        assert!(col.values.iter().all(|&v| v == 10.0));
    }

    #[test]
    fn knn_equidistant_neighbors() {
        // cell 1 sits between cells 0 and 2
        let coords = vec![(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)];
        let win = ObservationWindow::from_parts(3, &[], &[4.0, 0.0, 8.0], &[true, false, true]).unwrap();
        assert_eq!(knn_infer(&win, &coords, 2).unwrap().values[1], 6.0);
    }

    #[test]
    fn knn_corners_by_hand() {
        let mut cur = vec![0.0; 9];
        let mut mask = vec![false; 9];
        for (c, v) in [(0, 1.0), (2, 2.0), (6, 3.0), (8, 4.0)] {
            cur[c] = v;
            mask[c] = true;
        }
        let win = ObservationWindow::from_parts(9, &[], &cur, &mask).unwrap();
        let col = knn_infer(&win, &grid3(), 4).unwrap();
        // centre: all four corners at distance sqrt(2)
        assert!((col.values[4] - 2.5).abs() < 1e-12);
        // top edge (0,1): corners 0 and 2 at 1, corners 6 and 8 at sqrt(5)
        let w5 = 1.0 / 5f64.sqrt();
        let expect = (1.0 + 2.0 + w5 * 3.0 + w5 * 4.0) / (2.0 + 2.0 * w5);
        assert!((col.values[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn knn_without_current_observations_uses_history() {
        let past = vec![vec![1.0, f64::NAN, 3.0], vec![5.0, f64::NAN, f64::NAN]];
        let win = ObservationWindow::from_parts(3, &past, &[0.0; 3], &[false; 3]).unwrap();
        let col = knn_infer(&win, &[(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)], 2).unwrap();
        assert_eq!(col.values[0], 5.0);
        assert_eq!(col.values[2], 3.0);
        assert_eq!(col.values[1], 3.0); // mean of 1, 3, 5
    }

    #[test]
    fn committee_shapes_and_agreement() {
        let m = 8;
        let coords: Vec<(f64, f64)> = (0..m).map(|i| ((i / 4) as f64, (i % 4) as f64)).collect();
        let committee = Committee {
            als: AlsParams { rank: 1, lambda: 1e-9, max_iters: 3000, tol: 1e-15, seed: 2, init: AlsInit::Uniform },
            knn_k: 3,
        };
        // rank-1: past columns full, current column half sensed
        let full = low_rank(m, 6, 1, 31);
        let past: Vec<Vec<f64>> = (0..5).map(|j| full[j * m..(j + 1) * m].to_vec()).collect();
        let cur = &full[5 * m..];
        let mask: Vec<bool> = (0..m).map(|i| i % 2 == 0).collect();
        let win = ObservationWindow::from_parts(m, &past, cur, &mask).unwrap();
        let cols = committee_infer(&win, &coords, &committee).unwrap();
        assert_eq!(cols.len(), 3);
        for c in &cols {
            for i in 0..m {
                if mask[i] {
                    assert_eq!(c.values[i], cur[i]);
                }
            }
        }
        for i in 0..m {
            assert!((cols[0].values[i] - cols[1].values[i]).abs() < 1e-6, "cell {i}");
            assert!((cols[0].values[i] - cur[i]).abs() < 1e-6);
        }

        // fully observed current column: every member returns it verbatim
        let win = ObservationWindow::from_parts(m, &past, cur, &[true; 8]).unwrap();
        let cols = committee_infer(&win, &coords, &committee).unwrap();
        assert!(cols.iter().all(|c| c.values == cur));
    }
}
