//! Controlled flows `dX/dt = Σ u^i(t) V_i(X)` with piecewise-constant controls.
//!
//! One classical RK4 step is taken per control interval, so the step size is
//! `h = 1/M`. The same step map is differentiated forward (variational
//! system) and in reverse (vector-Jacobian products used by the trainer).

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::FieldRef;
use crate::linalg::operator_norm;

pub const DEFAULT_MAX_NORM: f64 = 1e6;

/// Controls `u[s][i]`, constant on `[s/M, (s+1)/M)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControlRows", into = "ControlRows")]
pub struct ControlPath {
    steps: usize,
    d: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ControlRows {
    u: Vec<Vec<f64>>,
}

impl TryFrom<ControlRows> for ControlPath {
    type Error = Error;

    fn try_from(rows: ControlRows) -> Result<Self> {
        ControlPath::from_rows(&rows.u)
    }
}

impl From<ControlPath> for ControlRows {
    fn from(c: ControlPath) -> Self {
        ControlRows {
            u: c.values.chunks(c.d).map(|r| r.to_vec()).collect(),
        }
    }
}

impl ControlPath {
    pub fn new(steps: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if steps == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "control path needs at least one step and one control (got M={steps}, d={d})"
            )));
        }
        check_dim(steps * d, values.len())?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "control u[{}][{}] is not finite",
                k / d,
                k % d
            )));
        }
        Ok(ControlPath { steps, d, values })
    }

    pub fn zeros(steps: usize, d: usize) -> Result<Self> {
        Self::new(steps, d, vec![0.0; steps * d])
    }

    /// The same control vector on every interval.
    pub fn constant(steps: usize, u: &[f64]) -> Result<Self> {
        Self::new(steps, u.len(), u.repeat(steps))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * d);
        for row in rows {
            check_dim(d, row.len())?;
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), d, values)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn step_size(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.d..(s + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the flat row-major values. Callers must keep them finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }
}

/// States on the grid `t_s = s/M`, optionally with the first-variation matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub jacobians: Option<Vec<DMatrix<f64>>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.steps() as f64;
        (0..self.states.len()).map(|s| s as f64 / n).collect()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    /// CSV with header `t,x1..xm[,j11..jmm]`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let m = self.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("x{i}")));
        if self.jacobians.is_some() {
            for i in 1..=m {
                header.extend((1..=m).map(|j| format!("j{i}{j}")));
            }
        }
        w.write_record(&header)?;
        for (s, t) in self.times().into_iter().enumerate() {
            let mut rec = vec![fmt_float(t)];
            rec.extend(self.states[s].iter().map(|&v| fmt_float(v)));
            if let Some(js) = &self.jacobians {
                for i in 0..m {
                    rec.extend((0..m).map(|j| fmt_float(js[s][(i, j)])));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Round-trip exact float formatting used by every CSV writer in the crate.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    pub max_norm: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            max_norm: DEFAULT_MAX_NORM,
        }
    }
}

fn check_inputs(fields: &[FieldRef], controls: &ControlPath, x0: &[f64]) -> Result<usize> {
    check_dim(controls.d(), fields.len())?;
    let m = x0.len();
    for f in fields {
        check_dim(m, f.dim())?;
    }
    Ok(m)
}

/// Scratch buffers for evaluating `Σ u^i V_i` and `Σ u^i DV_i`.
pub(crate) struct Combined<'a> {
    fields: &'a [FieldRef],
    m: usize,
    buf: Vec<f64>,
    jbuf: Vec<f64>,
}

impl<'a> Combined<'a> {
    pub(crate) fn new(fields: &'a [FieldRef], m: usize) -> Self {
        Combined {
            fields,
            m,
            buf: vec![0.0; m],
            jbuf: vec![0.0; m * m],
        }
    }

    pub(crate) fn velocity(&mut self, u: &[f64], x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (f, &ui) in self.fields.iter().zip(u) {
            if ui == 0.0 {
                continue;
            }
            f.eval_into(x, &mut self.buf);
            for (o, b) in out.iter_mut().zip(&self.buf) {
                *o += ui * b;
            }
        }
    }

    /// Row-major `Σ u^i DV_i(x)`.
    pub(crate) fn jacobian(&mut self, u: &[f64], x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (f, &ui) in self.fields.iter().zip(u) {
            if ui == 0.0 {
                continue;
            }
            f.jacobian_into(x, &mut self.jbuf);
            for (o, b) in out.iter_mut().zip(&self.jbuf) {
                *o += ui * b;
            }
        }
    }

    /// One RK4 step of length `h` from `x`, written to `out`.
    #[allow(clippy::needless_range_loop)]
    pub(crate) fn rk4_step(&mut self, u: &[f64], h: f64, x: &[f64], out: &mut [f64], stages: &mut Stages) {
        let m = self.m;
        stages.x1.copy_from_slice(x);
        self.velocity(u, x, &mut stages.k1);
        for j in 0..m {
            stages.x2[j] = x[j] + 0.5 * h * stages.k1[j];
        }
        self.velocity(u, &stages.x2, &mut stages.k2);
        for j in 0..m {
            stages.x3[j] = x[j] + 0.5 * h * stages.k2[j];
        }
        self.velocity(u, &stages.x3, &mut stages.k3);
        for j in 0..m {
            stages.x4[j] = x[j] + h * stages.k3[j];
        }
        self.velocity(u, &stages.x4, &mut stages.k4);
        for j in 0..m {
            out[j] = x[j] + h / 6.0 * (stages.k1[j] + 2.0 * stages.k2[j] + 2.0 * stages.k3[j] + stages.k4[j]);
        }
    }

    /// Reverse pass through one RK4 step.
    ///
    /// `stages` must hold the stage points of the forward step from `x`.
    /// Returns `x̄` in `bar_x` and adds `∂⟨bar_out, step⟩/∂u` to `bar_u`.
    pub(crate) fn rk4_vjp(
        &mut self,
        u: &[f64],
        h: f64,
        stages: &Stages,
        bar_out: &[f64],
        bar_x: &mut [f64],
        bar_u: &mut [f64],
    ) {
        let m = self.m;
        let mut bar_k = [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];
        for j in 0..m {
            bar_k[0][j] = h / 6.0 * bar_out[j];
            bar_k[1][j] = h / 3.0 * bar_out[j];
            bar_k[2][j] = h / 3.0 * bar_out[j];
            bar_k[3][j] = h / 6.0 * bar_out[j];
        }
        bar_x.copy_from_slice(bar_out);
        let points = [&stages.x1, &stages.x2, &stages.x3, &stages.x4];
        let feed = [0.0, 0.5 * h, 0.5 * h, h];
        let mut jac = vec![0.0; m * m];
        let mut bar_stage = vec![0.0; m];
        for st in (0..4).rev() {
            let p = points[st];
            for (i, f) in self.fields.iter().enumerate() {
                f.eval_into(p, &mut self.buf);
                bar_u[i] += dot(&self.buf, &bar_k[st]);
            }
            self.jacobian(u, p, &mut jac);
            // bar_stage = Aᵀ k̄
            for c in 0..m {
                bar_stage[c] = (0..m).map(|r| jac[r * m + c] * bar_k[st][r]).sum();
            }
            for j in 0..m {
                bar_x[j] += bar_stage[j];
            }
            if st > 0 {
                for j in 0..m {
                    bar_k[st - 1][j] += feed[st] * bar_stage[j];
                }
            }
        }
    }
}

/// Stage points and slopes of one RK4 step.
#[derive(Clone, Debug)]
pub(crate) struct Stages {
    pub(crate) x1: Vec<f64>,
    pub(crate) x2: Vec<f64>,
    pub(crate) x3: Vec<f64>,
    pub(crate) x4: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
}

impl Stages {
    pub(crate) fn new(m: usize) -> Self {
        let z = vec![0.0; m];
        Stages {
            x1: z.clone(),
            x2: z.clone(),
            x3: z.clone(),
            x4: z.clone(),
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_norm(x: &[f64], step: usize, max_norm: f64) -> Result<()> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm.is_finite() && norm <= max_norm {
        Ok(())
    } else {
        Err(Error::BlowUp { step, norm })
    }
}

pub fn integrate(fields: &[FieldRef], controls: &ControlPath, x0: &[f64]) -> Result<Trajectory> {
    integrate_with(fields, controls, x0, FlowOptions::default())
}

pub fn integrate_with(
    fields: &[FieldRef],
    controls: &ControlPath,
    x0: &[f64],
    opts: FlowOptions,
) -> Result<Trajectory> {
    let m = check_inputs(fields, controls, x0)?;
    check_norm(x0, 0, opts.max_norm)?;
    let h = controls.step_size();
    let mut comb = Combined::new(fields, m);
    let mut stages = Stages::new(m);
    let mut states = Vec::with_capacity(controls.steps() + 1);
    states.push(x0.to_vec());
    for s in 0..controls.steps() {
        let mut next = vec![0.0; m];
        comb.rk4_step(controls.row(s), h, &states[s], &mut next, &mut stages);
        check_norm(&next, s + 1, opts.max_norm)?;
        states.push(next);
    }
    Ok(Trajectory {
        states,
        jacobians: None,
    })
}

/// RK4 on the augmented system `(X, J)` with `dJ/dt = Σ u^i DV_i(X) J`, `J_0 = I`.
pub fn integrate_with_variation(fields: &[FieldRef], controls: &ControlPath, x0: &[f64]) -> Result<Trajectory> {
    integrate_with_variation_opts(fields, controls, x0, FlowOptions::default())
}

pub fn integrate_with_variation_opts(
    fields: &[FieldRef],
    controls: &ControlPath,
    x0: &[f64],
    opts: FlowOptions,
) -> Result<Trajectory> {
    let m = check_inputs(fields, controls, x0)?;
    check_norm(x0, 0, opts.max_norm)?;
    let h = controls.step_size();
    let mut comb = Combined::new(fields, m);
    let mut states = vec![x0.to_vec()];
    let mut jacs = vec![DMatrix::identity(m, m)];
    let mut a = vec![0.0; m * m];
    // slope of the augmented system at (x, j)
    let mut slope = |u: &[f64], x: &[f64], j: &DMatrix<f64>, comb: &mut Combined| {
        let mut kx = vec![0.0; m];
        comb.velocity(u, x, &mut kx);
        comb.jacobian(u, x, &mut a);
        let am = DMatrix::from_row_slice(m, m, &a);
        (kx, am * j)
    };
    for s in 0..controls.steps() {
        let u = controls.row(s);
        let x = &states[s];
        let j = &jacs[s];
        let (k1, l1) = slope(u, x, j, &mut comb);
        let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let (k2, l2) = slope(u, &x2, &(j + &l1 * (0.5 * h)), &mut comb);
        let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let (k3, l3) = slope(u, &x3, &(j + &l2 * (0.5 * h)), &mut comb);
        let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let (k4, l4) = slope(u, &x4, &(j + &l3 * h), &mut comb);
        let next: Vec<f64> = (0..m)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let jn = j + (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
        check_norm(&next, s + 1, opts.max_norm)?;
        states.push(next);
        jacs.push(jn);
    }
    Ok(Trajectory {
        states,
        jacobians: Some(jacs),
    })
}

/// `exp(∫_0^{t_s} ‖Σ u^i DV_i(X_r)‖_op dr)` at every grid point, trapezoid rule per interval.
pub fn jacobian_bound_profile(
    fields: &[FieldRef],
    controls: &ControlPath,
    trajectory: &Trajectory,
) -> Result<Vec<f64>> {
    let m = check_inputs(fields, controls, &trajectory.states[0])?;
    check_dim(controls.steps(), trajectory.steps())?;
    let h = controls.step_size();
    let mut comb = Combined::new(fields, m);
    let mut a = vec![0.0; m * m];
    let mut norm_at = |u: &[f64], x: &[f64], comb: &mut Combined| {
        comb.jacobian(u, x, &mut a);
        operator_norm(&DMatrix::from_row_slice(m, m, &a))
    };
    let mut integral = 0.0;
    let mut out = vec![1.0];
    for s in 0..controls.steps() {
        let u = controls.row(s);
        let left = norm_at(u, &trajectory.states[s], &mut comb);
        let right = norm_at(u, &trajectory.states[s + 1], &mut comb);
        integral += 0.5 * h * (left + right);
        out.push(integral.exp());
    }
    Ok(out)
}

/// Bound on `‖J_1‖_op` from the first-variation inequality.
pub fn jacobian_bound(fields: &[FieldRef], controls: &ControlPath, trajectory: &Trajectory) -> Result<f64> {
    Ok(*jacobian_bound_profile(fields, controls, trajectory)?
        .last()
        .expect("profile is never empty"))
}

/// `‖e^{-At} e^{-Bt} e^{At} e^{Bt} x − x − t²(AB − BA)x‖`.
pub fn commutator_flow_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, t: f64, x: &[f64]) -> Result<f64> {
    let m = x.len();
    for mat in [a, b] {
        check_dim(m, mat.nrows())?;
        check_dim(m, mat.ncols())?;
    }
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "commutator time must be positive, got {t}"
        )));
    }
    let xv = nalgebra::DVector::from_column_slice(x);
    let ea = (a * t).exp();
    let eb = (b * t).exp();
    let ea_inv = (a * -t).exp();
    let eb_inv = (b * -t).exp();
    let moved = &ea_inv * (&eb_inv * (&ea * (&eb * &xv)));
    let bracket = (a * b - b * a) * &xv * (t * t);
    Ok((moved - &xv - bracket).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::canonical_five;
    use crate::field::compile_all;
    use crate::poly::{rat, PolyVectorField};

    fn linear(a: &[Vec<i64>]) -> FieldRef {
        let rows: Vec<Vec<_>> = a.iter().map(|r| r.iter().map(|&v| rat(v, 1)).collect()).collect();
        compile_all(&[PolyVectorField::linear(&rows).unwrap()]).remove(0)
    }

    #[test]
    fn zero_controls_freeze_the_state() {
        let fields = compile_all(&canonical_five(2).unwrap().fields);
        let c = ControlPath::zeros(8, 5).unwrap();
        let tr = integrate_with_variation(&fields, &c, &[0.3, -0.2]).unwrap();
        for (x, j) in tr.states.iter().zip(tr.jacobians.as_ref().unwrap()) {
            assert_eq!(x, &vec![0.3, -0.2]);
            assert_eq!(j, &DMatrix::identity(2, 2));
        }
        assert_eq!(jacobian_bound(&fields, &c, &tr).unwrap(), 1.0);
    }

    #[test]
    fn scalar_exponential() {
        let f = vec![linear(&[vec![1]])];
        let c = ControlPath::constant(64, &[0.7]).unwrap();
        let tr = integrate(&f, &c, &[2.0]).unwrap();
        assert!((tr.final_state()[0] - 2.0 * 0.7f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn blow_up_is_reported() {
        // x' = x^2 from x0 = 2 blows up at t = 1/2
        let v = PolyVectorField::term(0, vec![2], rat(1, 1)).unwrap();
        let f = compile_all(&[v]);
        let c = ControlPath::constant(200, &[1.0]).unwrap();
        match integrate(&f, &c, &[2.0]) {
            Err(Error::BlowUp { step, .. }) => assert!(step > 50 && step < 200),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn control_path_validation() {
        assert!(ControlPath::zeros(0, 2).is_err());
        assert!(ControlPath::new(1, 2, vec![1.0]).is_err());
        assert!(ControlPath::new(1, 1, vec![f64::NAN]).is_err());
        let c = ControlPath::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(c.row(1), &[3.0, 4.0]);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"u":[[1.0,2.0],[3.0,4.0]]}"#);
        assert_eq!(serde_json::from_str::<ControlPath>(&json).unwrap(), c);
        assert!(serde_json::from_str::<ControlPath>(r#"{"u":[[1.0],[1.0,2.0]]}"#).is_err());
    }

    #[test]
    fn csv_layout() {
        let f = vec![linear(&[vec![0, 1], vec![-1, 0]])];
        let c = ControlPath::zeros(2, 1).unwrap();
        let tr = integrate_with_variation(&f, &c, &[1.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,j11,j12,j21,j22");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("5.0000000000000000e-1,1.0000000000000000e0,"));
    }

    #[test]
    fn commutator_of_commuting_pair_vanishes() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, -1.0]));
        let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.3]));
        assert!(commutator_flow_residual(&a, &b, 1.0, &[1.0, 1.0]).unwrap() < 1e-12);
        let z = DMatrix::zeros(2, 2);
        assert!(commutator_flow_residual(&a, &z, 0.5, &[1.0, -2.0]).unwrap() < 1e-12);
        assert!(commutator_flow_residual(&a, &z, 0.0, &[1.0, -2.0]).is_err());
    }
}
