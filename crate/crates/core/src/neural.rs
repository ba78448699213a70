//! Recurrent Q-network: one LSTM layer over the `k` selection columns of a
//! state, followed by an affine head with one output per cell.
//!
//! Everything is hand-written on flat `f64` buffers: forward pass with an
//! activation tape, backpropagation through time, the temporal-difference
//! loss against a frozen target network, Adam/SGD with global-norm clipping,
//! and a checksummed little-endian checkpoint format.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::Experience;
use crate::env::SelectionState;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Network shape: `cells` inputs and outputs, `hidden` LSTM units, and the
/// state window length `window` the network is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub cells: usize,
    pub hidden: usize,
    pub window: usize,
}

/// All weights of the network in one flat buffer.
///
/// Tensor order (also the checkpoint order), each row-major:
/// `w_input` (4h x m), `w_hidden` (4h x h), `bias` (4h), `head_w` (m x h),
/// `head_b` (m). Gate blocks inside the `4h` rows are input, forget,
/// candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    data: Vec<f64>,
}

pub const TENSOR_NAMES: [&str; 5] = ["w_input", "w_hidden", "bias", "head_w", "head_b"];

impl NetworkParams {
    pub fn zeros(arch: Architecture) -> Self {
        NetworkParams {
            arch,
            data: vec![0.0; Self::param_count(&arch)],
        }
    }

    /// Uniform(-1/sqrt(h), 1/sqrt(h)) weights; biases zero except the
    /// forget gate at +1.
    pub fn init(arch: Architecture, rng: &mut SimRng) -> Self {
        let mut p = Self::zeros(arch);
        let bound = 1.0 / (arch.hidden as f64).sqrt();
        for name in ["w_input", "w_hidden", "head_w"] {
            for v in p.tensor_mut(name) {
                *v = rng.random_range(-bound..bound);
            }
        }
        let h = arch.hidden;
        p.tensor_mut("bias")[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
        p
    }

    pub fn param_count(arch: &Architecture) -> usize {
        Self::shapes(arch).iter().map(|(r, c)| r * c).sum()
    }

    fn shapes(arch: &Architecture) -> [(usize, usize); 5] {
        let (m, h) = (arch.cells, arch.hidden);
        [(4 * h, m), (4 * h, h), (4 * h, 1), (m, h), (m, 1)]
    }

    fn range(&self, name: &str) -> std::ops::Range<usize> {
        let shapes = Self::shapes(&self.arch);
        let mut start = 0;
        for (n, (r, c)) in TENSOR_NAMES.iter().zip(shapes) {
            if *n == name {
                return start..start + r * c;
            }
            start += r * c;
        }
        panic!("unknown tensor {name}");
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn tensor(&self, name: &str) -> &[f64] {
        &self.data[self.range(name)]
    }

    pub fn tensor_mut(&mut self, name: &str) -> &mut [f64] {
        let r = self.range(name);
        &mut self.data[r]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Hidden and cell state of the LSTM between time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(h: usize) -> Self {
        RecurrentState {
            hidden: vec![0.0; h],
            cell: vec![0.0; h],
        }
    }
}

struct StepTape {
    active: Vec<usize>,
    gates: Vec<f64>, // i, f, g, o after activation
    prev: RecurrentState,
    cell_tanh: Vec<f64>,
}

/// Activations kept by [`forward`] for [`backward`].
pub struct Tape {
    steps: Vec<StepTape>,
    hidden: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_input(params: &NetworkParams, state: &SelectionState) -> Result<()> {
    if state.num_cells() != params.arch.cells {
        return Err(Error::ShapeMismatch(format!(
            "state has {} cells, network {}",
            state.num_cells(),
            params.arch.cells
        )));
    }
    if state.width() != params.arch.window {
        return Err(Error::ShapeMismatch(format!(
            "state width {}, network window {}",
            state.width(),
            params.arch.window
        )));
    }
    Ok(())
}

/// Q-values of every cell for `state`, feeding its columns oldest first
/// from a zero recurrent state.
pub fn forward(params: &NetworkParams, state: &SelectionState) -> Result<(Vec<f64>, Tape)> {
    check_input(params, state)?;
    let (m, h) = (params.arch.cells, params.arch.hidden);
    let w_in = params.tensor("w_input");
    let w_hid = params.tensor("w_hidden");
    let bias = params.tensor("bias");
    let mut rec = RecurrentState::zeros(h);
    let mut steps = Vec::with_capacity(state.width());
    for t in 0..state.width() {
        let active: Vec<usize> = state
            .column(t)
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
            .collect();
        let mut z = bias.to_vec();
        for (row, zr) in z.iter_mut().enumerate() {
            let wi = &w_in[row * m..(row + 1) * m];
            let mut acc = 0.0;
            for &j in &active {
                acc += wi[j];
            }
            let wh = &w_hid[row * h..(row + 1) * h];
            acc += wh.iter().zip(&rec.hidden).map(|(a, b)| a * b).sum::<f64>();
            *zr += acc;
        }
        for r in 0..h {
            z[r] = sigmoid(z[r]);
            z[h + r] = sigmoid(z[h + r]);
            z[2 * h + r] = z[2 * h + r].tanh();
            z[3 * h + r] = sigmoid(z[3 * h + r]);
        }
        let cell: Vec<f64> = (0..h).map(|r| z[h + r] * rec.cell[r] + z[r] * z[2 * h + r]).collect();
        let cell_tanh: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
        let hidden: Vec<f64> = (0..h).map(|r| z[3 * h + r] * cell_tanh[r]).collect();
        let prev = std::mem::replace(
            &mut rec,
            RecurrentState {
                hidden,
                cell,
            },
        );
        steps.push(StepTape {
            active,
            gates: z,
            prev,
            cell_tanh,
        });
    }
    let q = q_head(params, &rec.hidden);
    Ok((
        q,
        Tape {
            steps,
            hidden: rec.hidden,
        },
    ))
}

fn q_head(params: &NetworkParams, hidden: &[f64]) -> Vec<f64> {
    let h = params.arch.hidden;
    let w = params.tensor("head_w");
    let b = params.tensor("head_b");
    (0..params.arch.cells)
        .map(|a| b[a] + w[a * h..(a + 1) * h].iter().zip(hidden).map(|(x, y)| x * y).sum::<f64>())
        .collect()
}

/// Q-values only.
pub fn q_values(params: &NetworkParams, state: &SelectionState) -> Result<Vec<f64>> {
    forward(params, state).map(|(q, _)| q)
}

/// Accumulates `d(sum_a dq[a] * Q[a]) / d(theta)` into `grads`.
pub fn backward(params: &NetworkParams, tape: &Tape, dq: &[f64], grads: &mut NetworkParams) {
    let (m, h) = (params.arch.cells, params.arch.hidden);
    let head_w = params.tensor("head_w").to_vec();
    let w_hid = params.tensor("w_hidden").to_vec();

    {
        let gw = grads.tensor_mut("head_w");
        for a in 0..m {
            if dq[a] != 0.0 {
                for r in 0..h {
                    gw[a * h + r] += dq[a] * tape.hidden[r];
                }
            }
        }
    }
    {
        let gb = grads.tensor_mut("head_b");
        for a in 0..m {
            gb[a] += dq[a];
        }
    }
    let mut dh = vec![0.0; h];
    for a in 0..m {
        if dq[a] != 0.0 {
            for r in 0..h {
                dh[r] += dq[a] * head_w[a * h + r];
            }
        }
    }
    let mut dc = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for step in tape.steps.iter().rev() {
        let g = &step.gates;
        for r in 0..h {
            let (i, f, cand, o) = (g[r], g[h + r], g[2 * h + r], g[3 * h + r]);
            let tc = step.cell_tanh[r];
            let d_o = dh[r] * tc;
            let dcell = dc[r] + dh[r] * o * (1.0 - tc * tc);
            dz[r] = dcell * cand * i * (1.0 - i);
            dz[h + r] = dcell * step.prev.cell[r] * f * (1.0 - f);
            dz[2 * h + r] = dcell * i * (1.0 - cand * cand);
            dz[3 * h + r] = d_o * o * (1.0 - o);
            dc[r] = dcell * f;
        }
        {
            let gb = grads.tensor_mut("bias");
            for (b, d) in gb.iter_mut().zip(&dz) {
                *b += d;
            }
        }
        {
            let gi = grads.tensor_mut("w_input");
            for (row, d) in dz.iter().enumerate() {
                for &j in &step.active {
                    gi[row * m + j] += d;
                }
            }
        }
        {
            let gh = grads.tensor_mut("w_hidden");
            for (row, d) in dz.iter().enumerate() {
                if *d != 0.0 {
                    let dst = &mut gh[row * h..(row + 1) * h];
                    for (x, hp) in dst.iter_mut().zip(&step.prev.hidden) {
                        *x += d * hp;
                    }
                }
            }
        }
        dh.iter_mut().for_each(|v| *v = 0.0);
        for (row, d) in dz.iter().enumerate() {
            if *d != 0.0 {
                let w = &w_hid[row * h..(row + 1) * h];
                for (x, wv) in dh.iter_mut().zip(w) {
                    *x += d * wv;
                }
            }
        }
    }
}

/// Bootstrap target `R + gamma * max_a' Q_target(S', a')` over the cells
/// selectable in `S'`, or `R` for terminal transitions.
pub fn td_target(target: &NetworkParams, e: &Experience, gamma: f64) -> Result<f64> {
    if e.terminal || gamma == 0.0 || !e.next_selectable.iter().any(|&s| s) {
        return Ok(e.reward);
    }
    let q = q_values(target, &e.next_state)?;
    let best = q
        .iter()
        .zip(&e.next_selectable)
        .filter(|(_, &s)| s)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(e.reward + gamma * best)
}

/// Mean squared TD error over `batch` on the taken actions, and its
/// gradient with respect to `params` (the target network is held fixed).
pub fn td_loss(
    params: &NetworkParams,
    target: &NetworkParams,
    batch: &[Experience],
    gamma: f64,
) -> Result<(f64, NetworkParams)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grads = NetworkParams::zeros(params.arch);
    let mut loss = 0.0;
    let mut dq = vec![0.0; params.arch.cells];
    for e in batch {
        let y = td_target(target, e, gamma)?;
        let (q, tape) = forward(params, &e.state)?;
        let a = e.action.cell;
        if a >= q.len() {
            return Err(Error::ShapeMismatch(format!("action {a} outside {} outputs", q.len())));
        }
        let resid = q[a] - y;
        loss += resid * resid / n;
        dq.iter_mut().for_each(|v| *v = 0.0);
        dq[a] = 2.0 * resid / n;
        backward(params, &tape, &dq, &mut grads);
    }
    Ok((loss, grads))
}

/// Loss value only (used by finite-difference checks).
pub fn td_loss_value(params: &NetworkParams, target: &NetworkParams, batch: &[Experience], gamma: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut loss = 0.0;
    for e in batch {
        let y = td_target(target, e, gamma)?;
        let q = q_values(params, &e.state)?;
        let resid = q[e.action.cell] - y;
        loss += resid * resid;
    }
    Ok(loss / batch.len() as f64)
}

/// Largest relative difference between backprop and central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, 1e-6)` per coordinate, with
/// the fourth-order central difference of step `step`.
pub fn gradient_check(
    params: &NetworkParams,
    target: &NetworkParams,
    batch: &[Experience],
    gamma: f64,
    step: f64,
) -> Result<GradCheck> {
    let (_, analytic) = td_loss(params, target, batch, gamma)?;
    let mut probe = params.clone();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for idx in 0..params.data.len() {
        let orig = probe.data[idx];
        let mut at = |offset: f64| {
            probe.data[idx] = orig + offset;
            td_loss_value(&probe, target, batch, gamma)
        };
        let (up2, up, down, down2) = (at(2.0 * step)?, at(step)?, at(-step)?, at(-2.0 * step)?);
        probe.data[idx] = orig;
        let numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * step);
        let a = analytic.data[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel > worst.max_rel_error {
            worst.max_rel_error = rel;
            worst.worst_index = idx;
        }
        worst.checked += 1;
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// First-order optimizer with global gradient-norm clipping.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    beta1: f64,
    beta2: f64,
    eps: f64,
    clip_norm: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    /// Adam uses beta1 0.9, beta2 0.999, eps 1e-8; clipping at norm 5.
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        Optimizer {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            first: vec![0.0; param_count],
            second: vec![0.0; param_count],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &NetworkParams, lr: f64) -> Result<()> {
        self.step_slice(params.as_mut_slice(), grads.as_slice(), lr)
    }

    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::ShapeMismatch("optimizer buffer sizes".into()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > self.clip_norm { self.clip_norm / norm } else { 1.0 };
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g * scale;
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                for i in 0..params.len() {
                    let g = grads[i] * scale;
                    self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
                    self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
                    let mhat = self.first[i] / c1;
                    let vhat = self.second[i] / c2;
                    params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}

const MAGIC: &[u8; 8] = b"CSQNET\0\0";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 4;
const DIGEST_LEN: usize = 32;

/// Checkpoint bytes: magic, format version, `m`, `h`, `k` (u32 LE), every
/// tensor as f64 LE in declared order, then SHA-256 of everything before.
pub fn params_to_bytes(params: &NetworkParams) -> Vec<u8> {
    let a = params.arch;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.data.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    for v in [FORMAT_VERSION, a.cells as u32, a.hidden as u32, a.window as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &params.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn params_from_bytes(bytes: &[u8], expected: Option<&Architecture>) -> Result<NetworkParams> {
    if bytes.len() < HEADER_LEN + DIGEST_LEN {
        return Err(Error::CorruptFile(format!("{} bytes is too short", bytes.len())));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if &body[..8] != MAGIC {
        return Err(Error::CorruptFile("bad magic".into()));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }
    let word = |i: usize| u32::from_le_bytes(body[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    if word(0) != FORMAT_VERSION {
        return Err(Error::CorruptFile(format!("unsupported format version {}", word(0))));
    }
    let arch = Architecture {
        cells: word(1) as usize,
        hidden: word(2) as usize,
        window: word(3) as usize,
    };
    if let Some(exp) = expected {
        if *exp != arch {
            return Err(Error::ArchitectureMismatch(format!("checkpoint {arch:?}, expected {exp:?}")));
        }
    }
    let payload = &body[HEADER_LEN..];
    let count = NetworkParams::param_count(&arch);
    if payload.len() != 8 * count {
        return Err(Error::CorruptFile(format!(
            "{} payload bytes for {count} parameters",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(NetworkParams { arch, data })
}

pub fn save_params(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, params_to_bytes(params))?;
    Ok(())
}

/// Loads a checkpoint, requiring architecture `expected` when given.
pub fn load_params(path: impl AsRef<Path>, expected: Option<&Architecture>) -> Result<NetworkParams> {
    let bytes = fs::read(path)?;
    params_from_bytes(&bytes, expected)
}
