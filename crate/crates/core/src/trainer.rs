//! Fitting controls so that the flow carries each training input onto its target.
//!
//! The loss is `Σ_i ‖R(X^{x_i}_M) − y_i‖² + reg·(1/M)·Σ u²` where `R` is the
//! identity or the residual readout `x ↦ λ(X − x)`. Gradients are exact for
//! the discrete RK4 recursion (reverse accumulation through every step).

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::FieldRef;
use crate::flow::{check_norm, fmt_float, integrate, Combined, ControlPath, FlowOptions, Stages, Trajectory};
use crate::region::BoxRegion;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub region: BoxRegion,
    pub pairs: Vec<TrainingPair>,
}

impl TrainingSet {
    pub fn new(region: BoxRegion, inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(inputs.len(), targets.len())?;
        let pairs = inputs
            .into_iter()
            .zip(targets)
            .map(|(x, y)| TrainingPair { x, y })
            .collect();
        Ok(TrainingSet { region, pairs })
    }

    /// `n` inputs and `n` targets drawn uniformly from `region`.
    pub fn random(region: BoxRegion, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<_> = (0..n).map(|_| region.sample(&mut rng)).collect();
        let targets: Vec<_> = (0..n).map(|_| region.sample(&mut rng)).collect();
        let pairs = inputs
            .into_iter()
            .zip(targets)
            .map(|(x, y)| TrainingPair { x, y })
            .collect();
        TrainingSet { region, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.pairs.iter().map(|p| p.x.as_slice())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub min_input_distance: f64,
    pub min_target_distance: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Checks shapes, region membership and pairwise distinctness (0-based indices in errors).
pub fn validate_training_set(ts: &TrainingSet) -> Result<ValidationReport> {
    if ts.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let m = ts.dim();
    for p in &ts.pairs {
        check_dim(m, p.x.len())?;
        check_dim(m, p.y.len())?;
    }
    for (i, p) in ts.pairs.iter().enumerate() {
        if !ts.region.contains(&p.x) {
            return Err(Error::OutOfRegion {
                kind: "input",
                index: i,
            });
        }
        if !ts.region.contains(&p.y) {
            return Err(Error::OutOfRegion {
                kind: "target",
                index: i,
            });
        }
    }
    let mut report = ValidationReport {
        min_input_distance: f64::INFINITY,
        min_target_distance: f64::INFINITY,
    };
    for i in 0..ts.len() {
        for j in i + 1..ts.len() {
            let dx = distance(&ts.pairs[i].x, &ts.pairs[j].x);
            if dx == 0.0 {
                return Err(Error::DuplicateInput { first: i, second: j });
            }
            let dy = distance(&ts.pairs[i].y, &ts.pairs[j].y);
            if dy == 0.0 {
                return Err(Error::DuplicateTarget { first: i, second: j });
            }
            report.min_input_distance = report.min_input_distance.min(dx);
            report.min_target_distance = report.min_target_distance.min(dy);
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReadoutMode {
    #[default]
    Identity,
    LambdaResidual {
        log_lambda: f64,
    },
}

impl ReadoutMode {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            ReadoutMode::Identity => None,
            ReadoutMode::LambdaResidual { log_lambda } => Some(log_lambda.exp()),
        }
    }

    /// `R(X)` for the trajectory started at `x`.
    pub fn apply(&self, x: &[f64], end: &[f64]) -> Vec<f64> {
        match self.lambda() {
            None => end.to_vec(),
            Some(l) => end.iter().zip(x).map(|(e, s)| l * (e - s)).collect(),
        }
    }
}

/// Loss value, its exact gradient and the per-sample residual norms.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    /// Row-major `M × d`, same layout as [`ControlPath::values`].
    pub grad_u: Vec<f64>,
    pub grad_log_lambda: Option<f64>,
    pub residuals: Vec<f64>,
}

impl LossGradient {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

fn check_problem(fields: &[FieldRef], controls: &ControlPath, ts: &TrainingSet, reg: f64) -> Result<()> {
    check_dim(controls.d(), fields.len())?;
    for f in fields {
        check_dim(ts.dim(), f.dim())?;
    }
    if reg.is_nan() || reg < 0.0 {
        return Err(Error::InvalidArgument(format!("reg must be non-negative, got {reg}")));
    }
    Ok(())
}

fn reg_term(controls: &ControlPath, reg: f64) -> f64 {
    reg / controls.steps() as f64 * controls.values().iter().map(|u| u * u).sum::<f64>()
}

pub fn loss(
    fields: &[FieldRef],
    controls: &ControlPath,
    readout: &ReadoutMode,
    ts: &TrainingSet,
    reg: f64,
) -> Result<f64> {
    check_problem(fields, controls, ts, reg)?;
    let mut total = 0.0;
    for p in &ts.pairs {
        let tr = integrate(fields, controls, &p.x)?;
        let r = readout.apply(&p.x, tr.final_state());
        total += distance(&r, &p.y).powi(2);
    }
    Ok(total + reg_term(controls, reg))
}

/// Forward states of one trajectory, kept for the reverse pass.
struct Tape<'a> {
    comb: Combined<'a>,
    stages: Stages,
    states: Vec<Vec<f64>>,
    bar: Vec<f64>,
    bar_prev: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Tape<'a> {
    fn new(fields: &'a [FieldRef], m: usize, steps: usize) -> Self {
        Tape {
            comb: Combined::new(fields, m),
            stages: Stages::new(m),
            states: vec![vec![0.0; m]; steps + 1],
            bar: vec![0.0; m],
            bar_prev: vec![0.0; m],
            scratch: vec![0.0; m],
        }
    }

    fn forward(&mut self, controls: &ControlPath, x: &[f64]) -> Result<&[f64]> {
        let h = controls.step_size();
        let max_norm = FlowOptions::default().max_norm;
        self.states[0].copy_from_slice(x);
        for s in 0..controls.steps() {
            let (head, tail) = self.states.split_at_mut(s + 1);
            self.comb
                .rk4_step(controls.row(s), h, &head[s], &mut tail[0], &mut self.stages);
            check_norm(&tail[0], s + 1, max_norm)?;
        }
        Ok(&self.states[controls.steps()])
    }

    /// Adds `∂⟨bar_end, X_M⟩/∂u` to `grad_u` for the last forward trajectory.
    fn backward(&mut self, controls: &ControlPath, bar_end: &[f64], grad_u: &mut [f64]) {
        let h = controls.step_size();
        let d = controls.d();
        self.bar.copy_from_slice(bar_end);
        for s in (0..controls.steps()).rev() {
            self.comb
                .rk4_step(controls.row(s), h, &self.states[s], &mut self.scratch, &mut self.stages);
            self.comb.rk4_vjp(
                controls.row(s),
                h,
                &self.stages,
                &self.bar,
                &mut self.bar_prev,
                &mut grad_u[s * d..(s + 1) * d],
            );
            std::mem::swap(&mut self.bar, &mut self.bar_prev);
        }
    }
}

/// Exact gradient of the discrete loss with respect to the controls and `log λ`.
pub fn gradient(
    fields: &[FieldRef],
    controls: &ControlPath,
    readout: &ReadoutMode,
    ts: &TrainingSet,
    reg: f64,
) -> Result<LossGradient> {
    check_problem(fields, controls, ts, reg)?;
    let m = ts.dim();
    let big_m = controls.steps();
    let mut tape = Tape::new(fields, m, big_m);
    let mut grad_u = vec![0.0; big_m * controls.d()];
    let mut grad_ll = 0.0;
    let mut total = 0.0;
    let mut residuals = Vec::with_capacity(ts.len());
    let lambda = readout.lambda();
    for p in &ts.pairs {
        let end = tape.forward(controls, &p.x)?;
        let r = readout.apply(&p.x, end);
        let diff: Vec<f64> = r.iter().zip(&p.y).map(|(a, b)| a - b).collect();
        let sq: f64 = diff.iter().map(|v| v * v).sum();
        total += sq;
        residuals.push(sq.sqrt());
        let scale = 2.0 * lambda.unwrap_or(1.0);
        let bar: Vec<f64> = diff.iter().map(|v| scale * v).collect();
        if lambda.is_some() {
            grad_ll += 2.0 * diff.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        }
        tape.backward(controls, &bar, &mut grad_u);
    }
    let scale = 2.0 * reg / big_m as f64;
    for (g, u) in grad_u.iter_mut().zip(controls.values()) {
        *g += scale * u;
    }
    Ok(LossGradient {
        loss: total + reg_term(controls, reg),
        grad_u,
        grad_log_lambda: lambda.map(|_| grad_ll),
        residuals,
    })
}

/// Residual vector `r` with `loss = ‖r‖²` and its Jacobian in the flat parameters `(u, log λ)`.
///
/// Rows: the `N·m` readout mismatches, then `sqrt(reg/M)·u` when `reg > 0`.
pub fn residual_jacobian(
    fields: &[FieldRef],
    controls: &ControlPath,
    readout: &ReadoutMode,
    ts: &TrainingSet,
    reg: f64,
) -> Result<(DVector<f64>, DMatrix<f64>, Vec<f64>)> {
    check_problem(fields, controls, ts, reg)?;
    let m = ts.dim();
    let big_m = controls.steps();
    let np = controls.param_count();
    let lambda = readout.lambda();
    let cols = np + usize::from(lambda.is_some());
    let reg_rows = if reg > 0.0 { np } else { 0 };
    let rows = ts.len() * m + reg_rows;
    let mut r = DVector::zeros(rows);
    let mut jac = DMatrix::zeros(rows, cols);
    let mut norms = Vec::with_capacity(ts.len());
    let mut tape = Tape::new(fields, m, big_m);
    let mut row_grad = vec![0.0; np];
    let mut seed = vec![0.0; m];
    for (i, p) in ts.pairs.iter().enumerate() {
        let end = tape.forward(controls, &p.x)?.to_vec();
        let out = readout.apply(&p.x, &end);
        let mut sq = 0.0;
        for j in 0..m {
            let row = i * m + j;
            r[row] = out[j] - p.y[j];
            sq += r[row] * r[row];
            seed.fill(0.0);
            seed[j] = lambda.unwrap_or(1.0);
            row_grad.fill(0.0);
            tape.backward(controls, &seed, &mut row_grad);
            for (k, g) in row_grad.iter().enumerate() {
                jac[(row, k)] = *g;
            }
            if lambda.is_some() {
                jac[(row, np)] = out[j];
            }
        }
        norms.push(sq.sqrt());
    }
    if reg > 0.0 {
        let w = (reg / big_m as f64).sqrt();
        let base = ts.len() * m;
        for (k, u) in controls.values().iter().enumerate() {
            r[base + k] = w * u;
            jac[(base + k, k)] = w;
        }
    }
    Ok((r, jac, norms))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Number of control intervals `M`.
    pub steps: usize,
    pub reg: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub lr: f64,
    pub seed: u64,
    /// Readout, with the initial `log λ` in residual mode.
    pub readout: ReadoutMode,
    /// Standard deviation of the initial controls; 0 starts from zero controls.
    pub init_scale: f64,
    /// Consecutive rejected steps allowed before giving up.
    pub max_retries: usize,
    /// An Adam step is rejected when it multiplies the loss by more than this.
    pub reject_factor: f64,
    pub optimizer: Optimizer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Per-coordinate adaptive first-order steps of size `lr`.
    Adam,
    /// Damped Gauss–Newton on the residual vector; `lr` is unused.
    #[default]
    LevenbergMarquardt,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 64,
            reg: 0.0,
            tol: 1e-3,
            max_iters: 5000,
            lr: 0.05,
            seed: 0,
            readout: ReadoutMode::Identity,
            init_scale: 0.1,
            max_retries: 30,
            reject_factor: 2.0,
            optimizer: Optimizer::LevenbergMarquardt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Converged,
    MaxIters,
    BlowUp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iter: usize,
    pub loss: f64,
    pub max_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainResult {
    pub status: TrainStatus,
    pub iterations: usize,
    pub controls: ControlPath,
    pub readout: ReadoutMode,
    pub lambda: Option<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    #[serde(skip)]
    pub history: Vec<HistoryEntry>,
}

impl TrainResult {
    pub fn converged(&self) -> bool {
        self.status == TrainStatus::Converged
    }

    /// `M·d`, plus one for `log λ`.
    pub fn parameter_count(&self) -> usize {
        self.controls.param_count() + usize::from(self.lambda.is_some())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// CSV `iter,loss,max_residual`.
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "loss", "max_residual"])?;
        for e in &self.history {
            w.write_record([e.iter.to_string(), fmt_float(e.loss), fmt_float(e.max_residual)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, json: &Path, history_csv: &Path) -> Result<()> {
        let mut f = std::fs::File::create(json)?;
        self.write_json(&mut f)?;
        writeln!(f)?;
        self.write_history_csv(std::fs::File::create(history_csv)?)
    }

    /// Trajectories of every training input under the trained controls.
    pub fn trajectories(&self, fields: &[FieldRef], ts: &TrainingSet) -> Result<Vec<Trajectory>> {
        ts.inputs().map(|x| integrate(fields, &self.controls, x)).collect()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Updated moments for gradient `g`, without committing them.
    fn moments(&self, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self
            .m
            .iter()
            .zip(g)
            .map(|(m, g)| BETA1 * m + (1.0 - BETA1) * g)
            .collect();
        let v = self
            .v
            .iter()
            .zip(g)
            .map(|(v, g)| BETA2 * v + (1.0 - BETA2) * g * g)
            .collect();
        (m, v)
    }

    fn direction(&self, m: &[f64], v: &[f64]) -> Vec<f64> {
        let t = self.t + 1;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        m.iter()
            .zip(v)
            .map(|(m, v)| (m / c1) / ((v / c2).sqrt() + ADAM_EPS))
            .collect()
    }
}

fn flatten(controls: &ControlPath, readout: &ReadoutMode) -> Vec<f64> {
    let mut theta = controls.values().to_vec();
    if let ReadoutMode::LambdaResidual { log_lambda } = readout {
        theta.push(*log_lambda);
    }
    theta
}

fn unflatten(theta: &[f64], steps: usize, d: usize, readout: &ReadoutMode) -> Result<(ControlPath, ReadoutMode)> {
    let controls = ControlPath::new(steps, d, theta[..steps * d].to_vec())?;
    let readout = match readout {
        ReadoutMode::Identity => ReadoutMode::Identity,
        ReadoutMode::LambdaResidual { .. } => ReadoutMode::LambdaResidual {
            log_lambda: theta[steps * d],
        },
    };
    Ok((controls, readout))
}

fn flat_grad(g: &LossGradient) -> Vec<f64> {
    let mut out = g.grad_u.clone();
    out.extend(g.grad_log_lambda);
    out
}

/// Initial controls: i.i.d. `N(0, init_scale²)` under the run seed.
pub fn initial_controls(d: usize, config: &TrainConfig) -> Result<ControlPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let values = if config.init_scale > 0.0 {
        let law = Normal::new(0.0, config.init_scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (0..config.steps * d).map(|_| law.sample(&mut rng)).collect()
    } else {
        vec![0.0; config.steps * d]
    };
    ControlPath::new(config.steps, d, values)
}

fn blown_up_result(theta: &[f64], config: &TrainConfig, d: usize, n: usize) -> Result<TrainResult> {
    let (c, r) = unflatten(theta, config.steps, d, &config.readout)?;
    Ok(TrainResult {
        status: TrainStatus::BlowUp,
        iterations: 0,
        lambda: r.lambda(),
        controls: c,
        readout: r,
        residuals: vec![f64::INFINITY; n],
        max_residual: f64::INFINITY,
        initial_loss: f64::INFINITY,
        final_loss: f64::INFINITY,
        history: Vec::new(),
    })
}

/// Minimum-norm damped Gauss–Newton step `−Jᵀ(JJᵀ + μI)⁻¹ r`.
fn lm_step(r: &DVector<f64>, jac: &DMatrix<f64>, mu: f64) -> Option<DVector<f64>> {
    let mut gram = jac * jac.transpose();
    for i in 0..gram.nrows() {
        gram[(i, i)] += mu;
    }
    let z = gram.cholesky()?.solve(r);
    Some(-(jac.transpose() * z))
}

/// Minimizes the loss over `(u, log λ)` from seeded initial controls.
///
/// Rejected steps (blow-up, non-finite loss, or a loss increase beyond the
/// configured factor for Adam, any increase for Levenberg–Marquardt) shrink
/// the step and are retried up to `max_retries` times.
pub fn train(fields: &[FieldRef], ts: &TrainingSet, config: &TrainConfig) -> Result<TrainResult> {
    validate_training_set(ts)?;
    if fields.is_empty() {
        return Err(Error::InvalidArgument("need at least one field".into()));
    }
    if !(config.lr > 0.0 && config.tol > 0.0) {
        return Err(Error::InvalidArgument("lr and tol must be positive".into()));
    }
    let d = fields.len();
    let controls = initial_controls(d, config)?;
    let mut theta = flatten(&controls, &config.readout);
    let eval = |theta: &[f64]| -> Result<(ControlPath, ReadoutMode, LossGradient)> {
        let (c, r) = unflatten(theta, config.steps, d, &config.readout)?;
        let g = gradient(fields, &c, &r, ts, config.reg)?;
        Ok((c, r, g))
    };
    let (mut cur_c, mut cur_r, mut cur) = match eval(&theta) {
        Ok(v) => v,
        Err(Error::BlowUp { .. }) => return blown_up_result(&theta, config, d, ts.len()),
        Err(e) => return Err(e),
    };
    let initial_loss = cur.loss;
    let mut history = vec![HistoryEntry {
        iter: 0,
        loss: cur.loss,
        max_residual: cur.max_residual(),
    }];
    let mut adam = Adam::new(theta.len());
    let mut lr = config.lr;
    let mut mu = f64::NAN;
    let mut status = TrainStatus::MaxIters;
    let mut iter = 0;
    loop {
        if cur.max_residual() <= config.tol {
            status = TrainStatus::Converged;
            break;
        }
        if iter >= config.max_iters {
            break;
        }
        iter += 1;
        let (moments, dir, lm_system) = match config.optimizer {
            Optimizer::Adam => {
                let (m, v) = adam.moments(&flat_grad(&cur));
                let dir = adam.direction(&m, &v);
                (Some((m, v)), dir, None)
            }
            Optimizer::LevenbergMarquardt => {
                let (r, jac, _) = residual_jacobian(fields, &cur_c, &cur_r, ts, config.reg)?;
                if mu.is_nan() {
                    let scale = (0..jac.nrows()).map(|i| jac.row(i).norm_squared()).fold(0.0, f64::max);
                    mu = 1e-3 * scale.max(1e-12);
                }
                (None, Vec::new(), Some((r, jac)))
            }
        };
        let mut accepted = false;
        let mut blew_up = false;
        for _ in 0..=config.max_retries {
            let trial: Vec<f64> = match &lm_system {
                None => theta.iter().zip(&dir).map(|(t, s)| t - lr * s).collect(),
                Some((r, jac)) => match lm_step(r, jac, mu) {
                    Some(delta) => theta.iter().zip(delta.iter()).map(|(t, s)| t + s).collect(),
                    None => {
                        mu *= 4.0;
                        continue;
                    }
                },
            };
            let limit = match config.optimizer {
                Optimizer::Adam => config.reject_factor * cur.loss,
                Optimizer::LevenbergMarquardt => cur.loss,
            };
            match eval(&trial) {
                Ok((c, r, next)) if next.loss.is_finite() && next.loss <= limit => {
                    theta = trial;
                    cur_c = c;
                    cur_r = r;
                    cur = next;
                    accepted = true;
                    break;
                }
                Ok(_) => blew_up = false,
                Err(Error::BlowUp { .. }) => blew_up = true,
                Err(e) => return Err(e),
            }
            lr *= 0.5;
            mu *= 4.0;
        }
        if !accepted {
            if blew_up {
                status = TrainStatus::BlowUp;
            }
            break;
        }
        if let Some((m, v)) = moments {
            adam.m = m;
            adam.v = v;
            adam.t += 1;
        } else {
            mu = (mu / 3.0).max(1e-15);
        }
        history.push(HistoryEntry {
            iter,
            loss: cur.loss,
            max_residual: cur.max_residual(),
        });
    }
    Ok(TrainResult {
        status,
        iterations: iter,
        lambda: cur_r.lambda(),
        controls: cur_c,
        readout: cur_r,
        max_residual: cur.max_residual(),
        residuals: cur.residuals,
        initial_loss,
        final_loss: cur.loss,
        history,
    })
}
