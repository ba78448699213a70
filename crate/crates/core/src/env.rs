//! The episodic cell-selection environment.
//!
//! An episode walks a range of cycles. Within a cycle the agent picks cells
//! one by one; each pick reveals that cell's true reading. The cycle ends
//! when the quality requirement is met: in [`Mode::Training`] by checking
//! the real inference error against the ground truth, in
//! [`Mode::Deployment`] by the leave-one-out assessor. The sensed readings
//! of finished cycles stay in the inference window; their unsensed cells
//! remain unobserved there.

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::completion::{AlsParams, Infer, InferenceMethod, InferredColumn, ObservationWindow};
use crate::config::{QualitySpec, RewardParams, TaskConfig};
use crate::datagen::GroundTruthMatrix;
use crate::error::{Error, Result};
use crate::metrics::{column_error, compute_reward};
use crate::quality::{assess, loo_errors, AssessorKind};
use crate::rng::SimRng;

/// Recent selection history: `k` columns of `m` bits, current cycle last.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectionState {
    m: usize,
    k: usize,
    bits: Vec<bool>,
}

/// Canonical packed form of a [`SelectionState`].
pub type StateKey = Vec<u64>;

impl SelectionState {
    pub fn zeros(m: usize, k: usize) -> Self {
        SelectionState {
            m,
            k,
            bits: vec![false; m * k],
        }
    }

    /// Builds the state from selection columns ordered oldest to newest,
    /// the last one being the current cycle. Short histories are left-padded
    /// with empty columns; long ones keep only the newest `k`.
    pub fn encode(columns: &[Vec<bool>], m: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("state window k must be positive".into()));
        }
        let mut state = Self::zeros(m, k);
        let take = columns.len().min(k);
        let offset = k - take;
        for (t, col) in columns[columns.len() - take..].iter().enumerate() {
            if col.len() != m {
                return Err(Error::ShapeMismatch(format!("selection column of {} cells, expected {m}", col.len())));
            }
            state.bits[(offset + t) * m..(offset + t + 1) * m].copy_from_slice(col);
        }
        Ok(state)
    }

    pub fn num_cells(&self) -> usize {
        self.m
    }

    pub fn width(&self) -> usize {
        self.k
    }

    /// Column `t`, 0 = oldest, `k - 1` = current.
    pub fn column(&self, t: usize) -> &[bool] {
        &self.bits[t * self.m..(t + 1) * self.m]
    }

    pub fn current(&self) -> &[bool] {
        self.column(self.k - 1)
    }

    pub fn key(&self) -> StateKey {
        let mut key = vec![0u64; self.bits.len().div_ceil(64)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                key[i / 64] |= 1 << (i % 64);
            }
        }
        key
    }

    /// Number of distinct states, `2^(m k)`, if it fits in a `u128`.
    pub fn space_size(m: usize, k: usize) -> Option<u128> {
        let bits = u32::try_from(m * k).ok()?;
        1u128.checked_shl(bits).filter(|_| bits < 128)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub cell: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Stop on the true inference error (all data known).
    Training,
    /// Stop on the leave-one-out assessor.
    Deployment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub sensed_count: usize,
    /// True inference error when it was computed for this step.
    pub error: Option<f64>,
    /// Assessor probability when it was computed for this step.
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: SelectionState,
    pub cycle_done: bool,
    /// The episode has no cycles left after this step.
    pub terminal: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Quality,
    /// Every selectable cell was sensed.
    Exhausted,
}

/// One finished cycle. Serialized field order: `cycle`, `selected`,
/// `stop`, `realized_error`, `assessor_probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub selected: Vec<usize>,
    pub stop: StopReason,
    pub realized_error: f64,
    pub assessor_probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub records: Vec<CycleRecord>,
}

impl EpisodeTrace {
    pub fn total_selected(&self) -> usize {
        self.records.iter().map(|r| r.selected.len()).sum()
    }

    pub fn avg_selected(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.total_selected() as f64 / self.records.len() as f64
    }

    /// Fraction of cycles whose realized error is within `epsilon`.
    pub fn satisfaction_rate(&self, epsilon: f64) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let ok = self.records.iter().filter(|r| r.realized_error <= epsilon).count();
        ok as f64 / self.records.len() as f64
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| Error::InvalidValue(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 1,
                msg: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(EpisodeTrace { records })
    }
}

/// Environment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub quality: QualitySpec,
    pub reward: RewardParams,
    pub window_k: usize,
    /// Cycles of data (current one included) the inferer sees.
    pub history_len: usize,
    pub inference: InferenceMethod,
    pub assessor: AssessorKind,
    pub bootstrap_b: usize,
    pub min_sensed: usize,
}

impl EnvConfig {
    /// Defaults for `task`: ALS inference over 20 cycles, Student t assessor
    /// (200 resamples if switched to bootstrap), bonus `R = m`, cost 1, state window 3.
    pub fn for_task(task: &TaskConfig, quality: QualitySpec) -> Self {
        EnvConfig {
            quality,
            reward: RewardParams::for_cells(task.num_cells),
            window_k: 3,
            history_len: 20,
            inference: InferenceMethod::Als(AlsParams::for_cells(task.num_cells)),
            assessor: AssessorKind::default(),
            bootstrap_b: 200,
            min_sensed: task.min_sensed(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_k == 0 || self.history_len == 0 || self.bootstrap_b == 0 {
            return Err(Error::InvalidConfig(
                "window_k, history_len and bootstrap_b must be positive".into(),
            ));
        }
        if self.min_sensed < 2 {
            return Err(Error::InvalidConfig("min_sensed must be at least 2".into()));
        }
        Ok(())
    }
}

/// Replaces Q-values of unselectable cells by `-inf`.
pub fn mask_q(q_values: &[f64], selectable: &[bool]) -> Result<Vec<f64>> {
    if q_values.len() != selectable.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} Q-values for {} cells",
            q_values.len(),
            selectable.len()
        )));
    }
    if !selectable.iter().any(|&s| s) {
        return Err(Error::AllMasked);
    }
    Ok(q_values
        .iter()
        .zip(selectable)
        .map(|(&q, &s)| if s { q } else { f64::NEG_INFINITY })
        .collect())
}

/// Index of the largest finite-or-not value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v == f64::NEG_INFINITY || v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Sparse crowdsensing environment over a range of cycles of one matrix.
pub struct SensingEnv<'a> {
    data: &'a GroundTruthMatrix,
    cfg: EnvConfig,
    mode: Mode,
    inferer: Box<dyn Infer>,
    cycles: Range<usize>,
    cursor: usize,
    current: Vec<bool>,
    order: Vec<usize>,
    selections: VecDeque<Vec<bool>>,
    /// Past columns, NaN where unobserved.
    history: VecDeque<Vec<f64>>,
    rng: SimRng,
    trace: EpisodeTrace,
}

impl<'a> SensingEnv<'a> {
    /// `rng` drives the assessor's resampling.
    pub fn new(
        data: &'a GroundTruthMatrix,
        cfg: EnvConfig,
        mode: Mode,
        cycles: Range<usize>,
        rng: SimRng,
    ) -> Result<Self> {
        cfg.validate()?;
        if cycles.is_empty() || cycles.end > data.num_cycles() {
            return Err(Error::TooFewCycles(format!(
                "cycle range {cycles:?} invalid for {} cycles",
                data.num_cycles()
            )));
        }
        let m = data.num_cells();
        let inferer = cfg.inference.build(&data.config().cell_coords);
        Ok(SensingEnv {
            data,
            inferer,
            mode,
            cursor: cycles.start,
            current: vec![false; m],
            order: Vec::new(),
            selections: VecDeque::new(),
            history: VecDeque::new(),
            rng,
            trace: EpisodeTrace::default(),
            cycles,
            cfg,
        })
    }

    /// Seeds the inference history with fully known ground truth of the
    /// cycles just before the range, never reaching below `earliest`.
    pub fn with_known_history(mut self, earliest: usize) -> Self {
        let keep = self.cfg.history_len - 1;
        let from = self.cycles.start.saturating_sub(keep).max(earliest);
        self.history = (from..self.cycles.start)
            .map(|j| self.data.cycle(j).to_vec())
            .collect();
        self
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn data(&self) -> &GroundTruthMatrix {
        self.data
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.data.config().cell_coords
    }

    pub fn num_cells(&self) -> usize {
        self.data.num_cells()
    }

    pub fn current_cycle(&self) -> Option<usize> {
        (self.cursor < self.cycles.end).then_some(self.cursor)
    }

    pub fn is_finished(&self) -> bool {
        self.cursor >= self.cycles.end
    }

    /// Cells selected so far in the current cycle, in order.
    pub fn selected(&self) -> &[usize] {
        &self.order
    }

    pub fn state(&self) -> SelectionState {
        let m = self.num_cells();
        let k = self.cfg.window_k;
        let mut cols: Vec<Vec<bool>> = self.selections.iter().cloned().collect();
        cols.push(self.current.clone());
        SelectionState::encode(&cols, m, k).expect("consistent shapes")
    }

    /// Cells that may be picked now: not yet sensed, with known truth.
    pub fn selectable(&self) -> Vec<bool> {
        let m = self.num_cells();
        match self.current_cycle() {
            None => vec![false; m],
            Some(j) => {
                let truth = self.data.cycle(j);
                (0..m).map(|i| !self.current[i] && !truth[i].is_nan()).collect()
            }
        }
    }

    /// Inference input: completed past cycles plus the readings sensed so
    /// far in the current cycle.
    pub fn window(&self) -> Result<ObservationWindow> {
        let j = self.current_cycle().ok_or(Error::EpisodeExhausted)?;
        let m = self.num_cells();
        let truth = self.data.cycle(j);
        let cur: Vec<f64> = (0..m)
            .map(|i| if self.current[i] { truth[i] } else { 0.0 })
            .collect();
        let past: Vec<Vec<f64>> = self.history.iter().cloned().collect();
        ObservationWindow::from_parts(m, &past, &cur, &self.current)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        let j = self.current_cycle().ok_or(Error::EpisodeExhausted)?;
        let m = self.num_cells();
        let cell = action.cell;
        if cell >= m {
            return Err(Error::InvalidValue(format!("cell {cell} >= {m}")));
        }
        if self.current[cell] {
            return Err(Error::CellAlreadySelected(cell));
        }
        let truth = self.data.cycle(j);
        if truth[cell].is_nan() {
            return Err(Error::CellMissingTruth(cell));
        }
        self.current[cell] = true;
        self.order.push(cell);

        let sensed = self.order.len();
        let available = truth.iter().filter(|v| !v.is_nan()).count();
        let s_min = self.cfg.min_sensed.min(available);
        let task = self.data.config();

        let mut info = StepInfo {
            sensed_count: sensed,
            error: None,
            probability: None,
        };
        let mut inferred: Option<InferredColumn> = None;
        let done = if sensed == available {
            true
        } else if sensed < s_min {
            false
        } else {
            let window = self.window()?;
            match self.mode {
                Mode::Training => {
                    let col = self.inferer.infer(&window)?;
                    let err = column_error(
                        truth,
                        &col.values,
                        &self.current,
                        task.error_metric,
                        task.thresholds(),
                        task.error_scope,
                    )?;
                    info.error = Some(err);
                    inferred = Some(col);
                    err <= self.cfg.quality.epsilon
                }
                Mode::Deployment => {
                    let pool = loo_errors(&window, self.inferer.as_ref(), task.error_metric, task.thresholds())?;
                    let a = assess(
                        &pool,
                        &self.cfg.quality,
                        m - sensed,
                        self.cfg.assessor,
                        self.cfg.bootstrap_b,
                        &mut self.rng,
                    )?;
                    info.probability = Some(a.probability);
                    a.satisfied
                }
            }
        };
        let reward = compute_reward(done, &self.cfg.reward);
        if done {
            self.finish_cycle(j, inferred, &mut info)?;
        }
        Ok(StepOutcome {
            reward,
            next_state: self.state(),
            cycle_done: done,
            terminal: done && self.is_finished(),
            info,
        })
    }

    fn finish_cycle(&mut self, j: usize, inferred: Option<InferredColumn>, info: &mut StepInfo) -> Result<()> {
        let col = match inferred {
            Some(c) => c,
            None => self.inferer.infer(&self.window()?)?,
        };
        let task = self.data.config();
        let truth = self.data.cycle(j);
        let realized = match column_error(
            truth,
            &col.values,
            &self.current,
            task.error_metric,
            task.thresholds(),
            task.error_scope,
        ) {
            Ok(e) => e,
            Err(Error::NoUnsensedCells) => 0.0,
            Err(e) => return Err(e),
        };
        info.error.get_or_insert(realized);
        let available = truth.iter().filter(|v| !v.is_nan()).count();
        let stop = if self.order.len() == available {
            StopReason::Exhausted
        } else {
            StopReason::Quality
        };
        self.trace.records.push(CycleRecord {
            cycle: j,
            selected: std::mem::take(&mut self.order),
            stop,
            realized_error: realized,
            assessor_probability: info.probability,
        });

        let m = self.num_cells();
        let sensed: Vec<f64> = (0..m)
            .map(|i| if self.current[i] { truth[i] } else { f64::NAN })
            .collect();
        self.history.push_back(sensed);
        while self.history.len() >= self.cfg.history_len {
            self.history.pop_front();
        }
        self.selections.push_back(std::mem::replace(&mut self.current, vec![false; m]));
        while self.selections.len() >= self.cfg.window_k {
            self.selections.pop_front();
        }
        self.cursor += 1;
        Ok(())
    }

    pub fn trace(&self) -> &EpisodeTrace {
        &self.trace
    }

    pub fn into_trace(self) -> EpisodeTrace {
        self.trace
    }
}

/// A cell-selection policy.
pub trait Policy {
    fn select(&mut self, env: &SensingEnv<'_>) -> Result<Action>;
}

/// Runs `policy` until the environment has no cycles left.
pub fn run_episode(policy: &mut dyn Policy, mut env: SensingEnv<'_>) -> Result<EpisodeTrace> {
    while !env.is_finished() {
        let action = policy.select(&env)?;
        env.step(action)?;
    }
    Ok(env.into_trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::completion::InferenceMethod;
    use crate::config::ErrorMetric;
    use crate::datagen::Provenance;
    use crate::rng::{substream, Stream};
    use nalgebra::DMatrix;

    fn bits(cells: &[usize], m: usize) -> Vec<bool> {
        (0..m).map(|i| cells.contains(&i)).collect()
    }

    #[test]
    fn encode_matches_worked_example() {
        // cells 2,4 last cycle and 3 now (1-based)
        let s = SelectionState::encode(&[bits(&[1, 3], 5), bits(&[2], 5)], 5, 2).unwrap();
        assert_eq!(s.column(0), &[false, true, false, true, false]);
        assert_eq!(s.column(1), &[false, false, true, false, false]);
        assert_eq!(s.current(), s.column(1));
    }

    #[test]
    fn encode_pads_and_truncates() {
        let empty = SelectionState::encode(&[], 4, 3).unwrap();
        assert_eq!(empty, SelectionState::zeros(4, 3));
        let long: Vec<Vec<bool>> = (0..5).map(|i| bits(&[i % 4], 4)).collect();
        let s = SelectionState::encode(&long, 4, 2).unwrap();
        assert_eq!(s.column(0), bits(&[3], 4).as_slice());
        assert_eq!(s.column(1), bits(&[0], 4).as_slice());
        assert_eq!(SelectionState::space_size(5, 2), Some(1024));
        assert_eq!(SelectionState::space_size(50, 2), Some(1u128 << 100));
        assert_eq!(SelectionState::space_size(64, 2), None);
    }

    #[test]
    fn keys_are_canonical() {
        let a = SelectionState::encode(&[bits(&[0, 3], 40), bits(&[39], 40)], 40, 2).unwrap();
        let b = SelectionState::encode(&[bits(&[0, 3], 40), bits(&[39], 40)], 40, 2).unwrap();
        let c = SelectionState::encode(&[bits(&[0, 3], 40), bits(&[38], 40)], 40, 2).unwrap();
        assert_eq!(a.key(), b.key());
        assert_ne!(a.key(), c.key());
        assert_eq!(a.key().len(), 2);
    }

    #[test]
    fn mask_q_examples() {
        let q = mask_q(&[1.0, 5.0, 3.0], &[true, false, true]).unwrap();
        assert_eq!(q, vec![1.0, f64::NEG_INFINITY, 3.0]);
        assert_eq!(argmax(&q), Some(2));
        assert_eq!(mask_q(&[1.0, 5.0, 3.0], &[true; 3]).unwrap(), vec![1.0, 5.0, 3.0]);
        assert!(matches!(mask_q(&[1.0, 2.0], &[false, false]), Err(Error::AllMasked)));
        assert_eq!(argmax(&[2.0, 2.0, 1.0]), Some(0));
    }

    /// Five cells on a line (cell 1 sits closer to cell 2 than to cell 0),
    /// readings 1.0 everywhere except an outlier in cell 0 during cycle 2.
    /// KNN(k=1) inference.
    fn fig2_data() -> GroundTruthMatrix {
        let task = TaskConfig::new(
            5,
            "1h",
            ErrorMetric::MeanAbsolute,
            vec![(0.0, 0.0), (0.0, 1.5), (0.0, 2.0), (0.0, 3.0), (0.0, 4.0)],
            None,
        )
        .unwrap();
        let mut v = DMatrix::from_element(5, 5, 1.0);
        v[(0, 2)] = 100.0;
        GroundTruthMatrix::new(v, task, Provenance::Ingested).unwrap()
    }

    fn fig2_config(data: &GroundTruthMatrix) -> EnvConfig {
        let mut cfg = EnvConfig::for_task(data.config(), QualitySpec::new(0.5, 0.9).unwrap());
        cfg.inference = InferenceMethod::Knn { k: 1 };
        cfg.window_k = 2;
        cfg.reward = RewardParams::new(5.0, 1.0).unwrap();
        cfg
    }

    struct Scripted(Vec<usize>);

    impl Policy for Scripted {
        fn select(&mut self, env: &SensingEnv<'_>) -> Result<Action> {
            let sel = env.selectable();
            let cell = self.0.iter().copied().find(|&c| sel[c]).ok_or(Error::AllMasked)?;
            Ok(Action { cell })
        }
    }

    #[test]
    fn running_example_cycle() {
        let data = fig2_data();
        let mut env = SensingEnv::new(&data, fig2_config(&data), Mode::Training, 4..5, substream(0, Stream::Env)).unwrap();
        let first = env.step(Action { cell: 2 }).unwrap();
        assert_eq!(first.reward, -1.0);
        assert!(!first.cycle_done);
        assert_eq!(first.next_state.current(), bits(&[2], 5).as_slice());
        assert!(matches!(env.step(Action { cell: 2 }), Err(Error::CellAlreadySelected(2))));
        let second = env.step(Action { cell: 4 }).unwrap();
        assert_eq!(second.reward, 4.0);
        assert!(second.cycle_done && second.terminal);
        assert_eq!(env.trace().records[0].selected, vec![2, 4]);
        // fresh empty current column after the shift
        assert_eq!(second.next_state.column(0), bits(&[2, 4], 5).as_slice());
        assert_eq!(second.next_state.current(), &[false; 5]);
        assert!(matches!(env.step(Action { cell: 0 }), Err(Error::EpisodeExhausted)));
    }

    #[test]
    fn running_example_eleven_submissions() {
        let data = fig2_data();
        let env = SensingEnv::new(&data, fig2_config(&data), Mode::Training, 0..5, substream(0, Stream::Env)).unwrap();
        let trace = run_episode(&mut Scripted(vec![2, 4, 0, 1, 3]), env).unwrap();
        let counts: Vec<usize> = trace.records.iter().map(|r| r.selected.len()).collect();
        assert_eq!(counts, vec![2, 2, 3, 2, 2]);
        assert_eq!(trace.total_selected(), 11);
        assert!(trace.records.iter().all(|r| r.realized_error <= 0.5));
    }

    #[test]
    fn infinite_epsilon_stops_at_min_sensed() {
        let data = fig2_data();
        let mut cfg = fig2_config(&data);
        cfg.quality = QualitySpec::new(f64::INFINITY, 0.9).unwrap();
        cfg.min_sensed = 3;
        let env = SensingEnv::new(&data, cfg, Mode::Training, 0..5, substream(0, Stream::Env)).unwrap();
        let trace = run_episode(&mut Scripted(vec![0, 1, 2, 3, 4]), env).unwrap();
        assert!(trace.records.iter().all(|r| r.selected.len() == 3));
    }

    #[test]
    fn missing_truth_cells_are_unselectable() {
        let task = TaskConfig::grid(4, 2).unwrap();
        let mut v = DMatrix::from_element(4, 2, 2.0);
        v[(1, 0)] = f64::NAN;
        let data = GroundTruthMatrix::new(v, task, Provenance::Ingested).unwrap();
        let cfg = EnvConfig::for_task(data.config(), QualitySpec::new(0.0, 0.9).unwrap());
        let mut env = SensingEnv::new(&data, cfg, Mode::Training, 0..2, substream(0, Stream::Env)).unwrap();
        assert_eq!(env.selectable(), vec![true, false, true, true]);
        assert!(matches!(env.step(Action { cell: 1 }), Err(Error::CellMissingTruth(1))));
        // with epsilon 0 the cycle only ends once every known cell is sensed
        for c in [0, 2] {
            assert!(!env.step(Action { cell: c }).unwrap().cycle_done);
        }
        let last = env.step(Action { cell: 3 }).unwrap();
        assert!(last.cycle_done);
        assert_eq!(last.reward, RewardParams::for_cells(4).bonus - 1.0);
        assert_eq!(env.trace().records[0].stop, StopReason::Exhausted);
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let trace = EpisodeTrace {
            records: vec![
                CycleRecord {
                    cycle: 3,
                    selected: vec![4, 1],
                    stop: StopReason::Quality,
                    realized_error: 0.125,
                    assessor_probability: Some(0.93),
                },
                CycleRecord {
                    cycle: 4,
                    selected: vec![0, 1, 2],
                    stop: StopReason::Exhausted,
                    realized_error: 0.0,
                    assessor_probability: None,
                },
            ],
        };
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"cycle":3,"selected":[4,1],"stop":"quality","realized_error":0.125,"assessor_probability":0.93}"#));
        assert_eq!(EpisodeTrace::read_jsonl(buf.as_slice()).unwrap(), trace);
    }
}
