//! Interpolation and regularization solvers.
//!
//! Every problem is reduced to an unconstrained one over an affine
//! parameterization `vec(W) = base + map z`:
//!
//! * full mode, interpolation: `w_t = w0_t + N_t z_t` with `w0_t` the
//!   minimum-norm feasible point and `N_t` a null-space basis of task `t`;
//! * reduced mode: `w_t = B c_t` with `B` an orthonormal basis of the span
//!   of all inputs, and for interpolation `c_t` restricted to its own
//!   feasible affine set.
//!
//! Constraints therefore hold to machine precision by construction. Smooth
//! objectives use gradient descent with Armijo backtracking and
//! Barzilai-Borwein trial steps; hinge losses and nonsmooth convex
//! regularizers use restarted subgradient descent; nonconvex regularizers
//! fall back to a small compass search flagged as best effort.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    column_span_basis, gaussian_matrix, gaussian_vector, null_space_basis, pinv, serde_rows, serde_vec, Mat, Vector,
};
use crate::regzoo::{MatrixKind, MatrixRegularizer, VectorRegularizer, DEFAULT_SMOOTHING};

/// Largest free-parameter count accepted by the best-effort search.
pub const MAX_SEARCH_PARAMS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpec {
    Square,
    Hinge,
    Logistic,
}

impl LossSpec {
    pub fn name(self) -> &'static str {
        match self {
            LossSpec::Square => "square",
            LossSpec::Hinge => "hinge",
            LossSpec::Logistic => "logistic",
        }
    }

    fn needs_labels(self) -> bool {
        !matches!(self, LossSpec::Square)
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn check_lengths(z: &Vector, y: &Vector) -> Result<()> {
    if z.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len().to_string(), got: z.len().to_string() });
    }
    Ok(())
}

pub fn eval_loss(loss: LossSpec, z: &Vector, y: &Vector) -> Result<f64> {
    check_lengths(z, y)?;
    Ok(z.iter()
        .zip(y.iter())
        .map(|(&zi, &yi)| match loss {
            LossSpec::Square => (zi - yi).powi(2),
            LossSpec::Hinge => (1.0 - zi * yi).max(0.0),
            LossSpec::Logistic => softplus(-zi * yi),
        })
        .sum())
}

/// A (sub)gradient with respect to `z`; the hinge uses 0 at the kink.
pub fn subgrad_loss(loss: LossSpec, z: &Vector, y: &Vector) -> Result<Vector> {
    check_lengths(z, y)?;
    Ok(Vector::from_iterator(
        z.len(),
        z.iter().zip(y.iter()).map(|(&zi, &yi)| match loss {
            LossSpec::Square => 2.0 * (zi - yi),
            LossSpec::Hinge => {
                if zi * yi < 1.0 {
                    -yi
                } else {
                    0.0
                }
            }
            LossSpec::Logistic => {
                let t = zi * yi;
                // -y / (1 + e^t), written to avoid overflow for large |t|.
                if t > 0.0 {
                    let e = (-t).exp();
                    -yi * e / (1.0 + e)
                } else {
                    -yi / (1.0 + t.exp())
                }
            }
        }),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProblemKind {
    Interpolation,
    Regularization { gamma: f64, loss: LossSpec },
}

impl ProblemKind {
    fn validate(&self, outputs: &[&Vector]) -> Result<()> {
        if let ProblemKind::Regularization { gamma, loss } = self {
            if !(*gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
            }
            if loss.needs_labels() && outputs.iter().any(|y| y.iter().any(|&v| v != 1.0 && v != -1.0)) {
                return Err(Error::InvalidArgument(format!("{} loss needs outputs in {{-1, +1}}", loss.name())));
            }
        }
        Ok(())
    }
}

/// Inputs are the rows of `x` (`m x d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorProblem {
    #[serde(with = "serde_rows")]
    pub x: Mat,
    #[serde(with = "serde_vec")]
    pub y: Vector,
    pub kind: ProblemKind,
}

impl VectorProblem {
    pub fn new(x: Mat, y: Vector, kind: ProblemKind) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidArgument("need m >= 1 and d >= 1".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch { expected: x.nrows().to_string(), got: y.len().to_string() });
        }
        kind.validate(&[&y])?;
        Ok(Self { x, y, kind })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    #[serde(with = "serde_rows")]
    pub x: Mat,
    #[serde(with = "serde_vec")]
    pub y: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskProblem {
    pub d: usize,
    pub tasks: Vec<Task>,
    /// All tasks share one input list.
    pub shared_inputs: bool,
    pub kind: ProblemKind,
}

impl MultiTaskProblem {
    pub fn new(d: usize, tasks: Vec<Task>, kind: ProblemKind) -> Result<Self> {
        if d == 0 || tasks.is_empty() {
            return Err(Error::InvalidArgument("need d >= 1 and at least one task".into()));
        }
        for (t, task) in tasks.iter().enumerate() {
            if task.x.nrows() == 0 {
                return Err(Error::InvalidArgument(format!("task {t} has no samples")));
            }
            if task.x.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d.to_string(), got: task.x.ncols().to_string() });
            }
            if task.y.len() != task.x.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: task.x.nrows().to_string(),
                    got: task.y.len().to_string(),
                });
            }
        }
        kind.validate(&tasks.iter().map(|t| &t.y).collect::<Vec<_>>())?;
        Ok(Self { d, tasks, shared_inputs: false, kind })
    }

    /// One input list `x` (`m x d`) and outputs `y` (`m x n`, column `t` for
    /// task `t`).
    pub fn shared(x: Mat, y: Mat, kind: ProblemKind) -> Result<Self> {
        if y.nrows() != x.nrows() {
            return Err(Error::DimensionMismatch { expected: x.nrows().to_string(), got: y.nrows().to_string() });
        }
        let tasks = (0..y.ncols()).map(|t| Task { x: x.clone(), y: y.column(t).into_owned() }).collect();
        let mut problem = Self::new(x.ncols(), tasks, kind)?;
        problem.shared_inputs = true;
        Ok(problem)
    }

    /// The same problem with per-task input lists.
    pub fn to_general(&self) -> Self {
        Self { shared_inputs: false, ..self.clone() }
    }

    pub fn tasks(&self) -> usize {
        self.tasks.len()
    }

    /// All inputs across tasks as rows; shared inputs appear once.
    pub fn all_inputs(&self) -> Mat {
        if self.shared_inputs {
            return self.tasks[0].x.clone();
        }
        let total: usize = self.tasks.iter().map(|t| t.x.nrows()).sum();
        let mut out = Mat::zeros(total, self.d);
        let mut row = 0;
        for task in &self.tasks {
            out.view_mut((row, 0), (task.x.nrows(), self.d)).copy_from(&task.x);
            row += task.x.nrows();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when `||grad|| <= grad_tol * max(1, |objective|)`.
    pub grad_tol: f64,
    /// Maximum constraint violation accepted for interpolation.
    pub feas_tol: f64,
    /// Smoothing used in place of the trace norm.
    pub smoothing: f64,
    /// Solve with smoothing 1e-2, 1e-3, ... down to `smoothing`, warm started.
    pub continuation: bool,
    pub seed: u64,
    /// Initial subgradient step, relative to the scale of the start point.
    pub subgradient_step: f64,
    /// Turn `converged = false` into [`Error::NotConverged`].
    pub require_convergence: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            grad_tol: 1e-9,
            feas_tol: 1e-8,
            smoothing: DEFAULT_SMOOTHING,
            continuation: false,
            seed: 42,
            subgradient_step: 1.0,
            require_convergence: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub mode: Mode,
    /// `d x n`; vector problems give a `d x 1` column.
    #[serde(with = "serde_rows")]
    pub w: Mat,
    /// Objective with the regularizer as specified.
    pub objective: f64,
    /// Objective actually minimized, when a smoothed surrogate was used.
    pub surrogate_objective: Option<f64>,
    /// `max |<w_t, x_ti> - y_ti|`.
    pub constraint_residual: f64,
    pub off_span_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Result of the evaluation-only search for nonconvex regularizers.
    pub best_effort: bool,
    /// Reduced mode only: `C` with `W = X^T C` (inputs as rows of `X`).
    #[serde(with = "opt_rows", skip_serializing_if = "Option::is_none", default)]
    pub coefficients: Option<Mat>,
    /// Minimized objective per iteration.
    #[serde(skip)]
    pub history: Vec<f64>,
}

mod opt_rows {
    use crate::linalg::{from_rows, to_rows, Mat};
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        match Option::<Vec<Vec<f64>>>::deserialize(d)? {
            None => Ok(None),
            Some(rows) => from_rows(&rows).map(Some).ok_or_else(|| D::Error::custom("ragged matrix rows")),
        }
    }
}

/// `max_t ||(I - P) w_t|| / ||w_t||` with `P` the projector onto the span of
/// the rows of `inputs`; zero columns count as in-span.
pub fn off_span_residual(w: &Mat, inputs: &Mat) -> f64 {
    let basis = column_span_basis(&inputs.transpose());
    (0..w.ncols())
        .map(|t| {
            let col = w.column(t).into_owned();
            let norm = col.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let rest = &col - &basis * (basis.transpose() * &col);
            (rest.norm() / norm).min(1.0)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Gradient,
    Subgradient,
    Search,
}

/// The regularizer as seen by the optimizer.
#[derive(Debug, Clone)]
enum Penalty {
    Vector(VectorRegularizer),
    Matrix(MatrixRegularizer),
}

impl Penalty {
    fn eval(&self, w: &Mat) -> Option<f64> {
        let v = match self {
            Penalty::Vector(reg) => reg.eval(&w.column(0).into_owned()),
            Penalty::Matrix(reg) => reg.eval(w).ok()?,
        };
        v.is_finite().then_some(v)
    }

    fn grad(&self, w: &Mat) -> Option<Mat> {
        let g = match self {
            Penalty::Vector(reg) => {
                let g = reg.grad(&w.column(0).into_owned()).ok()?;
                Mat::from_column_slice(g.len(), 1, g.as_slice())
            }
            Penalty::Matrix(reg) => reg.grad(w).ok()?,
        };
        g.iter().all(|v| v.is_finite()).then_some(g)
    }

    fn method(&self) -> Method {
        match self {
            Penalty::Vector(VectorRegularizer::LpNorm { p }) if *p < 1.0 => Method::Search,
            Penalty::Vector(VectorRegularizer::LpNorm { p }) if *p == 1.0 => Method::Subgradient,
            Penalty::Vector(_) => Method::Gradient,
            Penalty::Matrix(reg) => match reg.kind() {
                MatrixKind::Rank | MatrixKind::PartitionMinTrace { .. } => Method::Search,
                MatrixKind::Schatten { p } | MatrixKind::ScaledSchatten { p, .. } if *p < 1.0 => Method::Search,
                MatrixKind::ScaledSchatten { p, .. } if *p == 1.0 => Method::Subgradient,
                MatrixKind::MixedNorm { p, q } if *p < 1.0 || *q < 1.0 => Method::Search,
                MatrixKind::MixedNorm { p, q } if *p == 1.0 || *q == 1.0 => Method::Subgradient,
                _ => Method::Gradient,
            },
        }
    }
}

/// The trace norm (and Schatten 1) replaced by its smoothed version.
fn surrogate(reg: &MatrixRegularizer, eps: f64) -> Result<Option<MatrixRegularizer>> {
    let (d, n) = reg.dims();
    match reg.kind() {
        MatrixKind::TraceNorm => Ok(Some(MatrixRegularizer::new(MatrixKind::SmoothedTraceNorm { eps }, d, n)?)),
        MatrixKind::Schatten { p } if *p == 1.0 => {
            Ok(Some(MatrixRegularizer::new(MatrixKind::SmoothedTraceNorm { eps }, d, n)?))
        }
        _ => Ok(None),
    }
}

/// Data-fit term `sum_t E(X_t w_t, y_t)`.
struct Fit<'a> {
    loss: LossSpec,
    tasks: Vec<(&'a Mat, &'a Vector)>,
}

impl Fit<'_> {
    fn eval(&self, w: &Mat) -> Option<f64> {
        let mut total = 0.0;
        for (t, (x, y)) in self.tasks.iter().enumerate() {
            total += eval_loss(self.loss, &(*x * w.column(t)), y).ok()?;
        }
        Some(total)
    }

    fn grad(&self, w: &Mat) -> Option<Mat> {
        let mut g = Mat::zeros(w.nrows(), w.ncols());
        for (t, (x, y)) in self.tasks.iter().enumerate() {
            let s = subgrad_loss(self.loss, &(*x * w.column(t)), y).ok()?;
            g.set_column(t, &(x.transpose() * s));
        }
        Some(g)
    }
}

/// `minimize fit(W) + gamma * penalty(W)` over `vec(W) = base + map z`.
struct Program<'a> {
    d: usize,
    n: usize,
    base: Vector,
    map: Mat,
    fit: Option<Fit<'a>>,
    gamma: f64,
    penalty: Penalty,
}

impl Program<'_> {
    fn w_of(&self, z: &Vector) -> Mat {
        let flat = &self.base + &self.map * z;
        Mat::from_column_slice(self.d, self.n, flat.as_slice())
    }

    fn value_at(&self, w: &Mat) -> Option<f64> {
        let fit = match &self.fit {
            Some(f) => f.eval(w)?,
            None => 0.0,
        };
        let v = fit + self.gamma * self.penalty.eval(w)?;
        v.is_finite().then_some(v)
    }

    fn value(&self, z: &Vector) -> Option<f64> {
        self.value_at(&self.w_of(z))
    }

    fn value_grad(&self, z: &Vector) -> Option<(f64, Vector)> {
        let w = self.w_of(z);
        let value = self.value_at(&w)?;
        let mut g = self.penalty.grad(&w)? * self.gamma;
        if let Some(f) = &self.fit {
            g += f.grad(&w)?;
        }
        let gz = self.map.transpose() * Vector::from_column_slice(g.as_slice());
        gz.iter().all(|v| v.is_finite()).then_some((value, gz))
    }
}

struct Run {
    z: Vector,
    value: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

fn failed_start() -> Error {
    Error::InvalidArgument("objective is not finite at the starting point".into())
}

const ARMIJO_C1: f64 = 1e-4;
/// Window of the nonmonotone acceptance test.
const ARMIJO_MEMORY: usize = 10;

/// Barzilai-Borwein steps with nonmonotone Armijo backtracking: a trial
/// point is accepted when it improves on the worst of the last
/// [`ARMIJO_MEMORY`] objective values by `c1 t ||g||^2`. The returned point
/// is the best one visited.
fn gradient_descent(program: &Program<'_>, z0: Vector, opts: &SolverOptions) -> Result<Run> {
    let (mut value, mut grad) = program.value_grad(&z0).ok_or_else(failed_start)?;
    let mut z = z0;
    let mut history = vec![value];
    let mut best = (value, z.clone(), grad.norm());
    let mut step = 1.0 / grad.norm().max(1.0);
    let finish = |best: (f64, Vector, f64), iterations: usize, converged: bool, history: Vec<f64>| Run {
        z: best.1,
        value: best.0,
        iterations,
        converged,
        history,
    };
    for it in 0..opts.max_iter {
        let gnorm2 = grad.norm_squared();
        if gnorm2.sqrt() <= opts.grad_tol * value.abs().max(1.0) {
            return Ok(finish((value, z, gnorm2.sqrt()), it, true, history));
        }
        let reference = history.iter().rev().take(ARMIJO_MEMORY).copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = step;
        let mut accepted = None;
        for _ in 0..80 {
            let cand = &z - &grad * t;
            if let Some((cv, cg)) = program.value_grad(&cand) {
                if cv <= reference - ARMIJO_C1 * t * gnorm2 {
                    accepted = Some((cand, cv, cg));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, cv, cg)) = accepted else {
            // No representable decrease left along the gradient.
            let converged = best.2 <= 1e-6 * best.0.abs().max(1.0);
            return Ok(finish(best, it, converged, history));
        };
        let s = &cand - &z;
        let yv = &cg - &grad;
        let sy = s.dot(&yv);
        step = if sy > 0.0 { (s.norm_squared() / sy).clamp(1e-20, 1e20) } else { (2.0 * t).min(1e20) };
        z = cand;
        value = cv;
        grad = cg;
        if value < best.0 {
            best = (value, z.clone(), grad.norm());
        }
        history.push(value);
    }
    let converged = grad.norm() <= opts.grad_tol * value.abs().max(1.0);
    Ok(finish(best, opts.max_iter, converged, history))
}

const SUBGRADIENT_EPOCH: usize = 1000;

/// Normalized subgradient steps `c / sqrt(k)` in epochs; each epoch restarts
/// from the best point so far with `c` halved. Converged once `c` falls
/// below `1e-12` of the iterate scale.
fn subgradient_descent(program: &Program<'_>, z0: Vector, opts: &SolverOptions) -> Result<Run> {
    let (mut best_value, _) = program.value_grad(&z0).ok_or_else(failed_start)?;
    let mut best = z0;
    let mut history = vec![best_value];
    let mut c = opts.subgradient_step * best.norm().max(1.0);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if c <= 1e-12 * best.norm().max(1.0) {
            return Ok(Run { z: best, value: best_value, iterations, converged: true, history });
        }
        let mut z = best.clone();
        for k in 0..SUBGRADIENT_EPOCH {
            if iterations >= opts.max_iter {
                break;
            }
            iterations += 1;
            let Some((_, g)) = program.value_grad(&z) else { break };
            let gn = g.norm();
            if gn == 0.0 {
                break;
            }
            z -= &g * (c / ((k + 1) as f64).sqrt() / gn);
            if let Some(v) = program.value(&z) {
                if v < best_value {
                    best_value = v;
                    best = z.clone();
                }
            }
            history.push(best_value);
        }
        c *= 0.5;
    }
    Ok(Run { z: best, value: best_value, iterations, converged: false, history })
}

const SEARCH_STARTS: usize = 20;

/// Compass search from seeded random starts.
fn compass_search(program: &Program<'_>, z0: Vector, opts: &SolverOptions) -> Result<Run> {
    let k = z0.len();
    if k > MAX_SEARCH_PARAMS {
        return Err(Error::Unsupported(format!(
            "nonconvex regularizer needs at most {MAX_SEARCH_PARAMS} free parameters, got {k}"
        )));
    }
    let scale = z0.norm().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut best_value = program.value(&z0).ok_or_else(failed_start)?;
    let mut best = z0.clone();
    let mut history = vec![best_value];
    let mut iterations = 0;
    for start in 0..=SEARCH_STARTS {
        let mut z = if start == 0 { z0.clone() } else { gaussian_vector(&mut rng, k) * scale };
        let Some(mut value) = program.value(&z) else { continue };
        let mut step = scale;
        while step > 1e-10 * scale && iterations < opts.max_iter {
            let mut moved = false;
            for i in 0..k {
                for sign in [1.0, -1.0] {
                    let mut cand = z.clone();
                    cand[i] += sign * step;
                    iterations += 1;
                    if let Some(v) = program.value(&cand) {
                        if v < value {
                            value = v;
                            z = cand;
                            moved = true;
                        }
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if value < best_value {
            best_value = value;
            best = z;
        }
        history.push(best_value);
    }
    Ok(Run { z: best, value: best_value, iterations, converged: true, history })
}

fn run_program(program: &Program<'_>, z0: Vector, method: Method, opts: &SolverOptions) -> Result<Run> {
    match method {
        Method::Gradient => gradient_descent(program, z0, opts),
        Method::Subgradient => subgradient_descent(program, z0, opts),
        Method::Search => compass_search(program, z0, opts),
    }
}

fn block_diagonal(blocks: &[Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Affine parameterization of task `t`'s column: `base_t + map_t z_t`.
fn column_parameterization(x: &Mat, y: &Vector, basis: Option<&Mat>, interpolate: bool, feas_tol: f64) -> Result<(Vector, Mat)> {
    let d = x.ncols();
    let frame = basis.cloned().unwrap_or_else(|| Mat::identity(d, d));
    if !interpolate {
        return Ok((Vector::zeros(d), frame));
    }
    let xb = x * &frame;
    let c0 = pinv(&xb) * y;
    let residual = (&xb * &c0 - y).amax();
    if residual > feas_tol * y.amax().max(1.0) {
        return Err(Error::Infeasible { residual });
    }
    let null = null_space_basis(&xb);
    Ok((&frame * c0, &frame * null))
}

fn penalty_differs(a: &Penalty, b: &Penalty) -> bool {
    match (a, b) {
        (Penalty::Matrix(x), Penalty::Matrix(y)) => x != y,
        (Penalty::Vector(x), Penalty::Vector(y)) => x != y,
        _ => true,
    }
}

struct Setup<'a> {
    problem_tasks: Vec<(&'a Mat, &'a Vector)>,
    inputs: Mat,
    d: usize,
    kind: ProblemKind,
}

fn solve_setup(setup: Setup<'_>, penalty: Penalty, method: Method, mode: Mode, opts: &SolverOptions, specified: Penalty) -> Result<Solution> {
    let Setup { problem_tasks, inputs, d, kind } = setup;
    let n = problem_tasks.len();
    let interpolate = matches!(kind, ProblemKind::Interpolation);
    let basis = match mode {
        Mode::Full => None,
        Mode::Reduced => Some(column_span_basis(&inputs.transpose())),
    };
    let mut bases = Vec::with_capacity(n);
    let mut maps = Vec::with_capacity(n);
    for (x, y) in &problem_tasks {
        let (b, m) = column_parameterization(x, y, basis.as_ref(), interpolate, opts.feas_tol)?;
        bases.push(b);
        maps.push(m);
    }
    let base = Vector::from_iterator(d * n, bases.iter().flat_map(|b| b.iter().copied()));
    let map = block_diagonal(&maps);
    let (fit, gamma) = match kind {
        ProblemKind::Interpolation => (None, 1.0),
        ProblemKind::Regularization { gamma, loss } => (Some(Fit { loss, tasks: problem_tasks.clone() }), gamma),
    };
    let method = match (kind, method) {
        (ProblemKind::Regularization { loss: LossSpec::Hinge, .. }, Method::Gradient) => Method::Subgradient,
        (_, m) => m,
    };
    let k = map.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start_scale = base.norm().max(1.0) / (k.max(1) as f64).sqrt();
    let z0 = gaussian_matrix(&mut rng, k, 1).column(0).into_owned() * start_scale;

    let smoothed = penalty_differs(&penalty, &specified);
    let schedule: Vec<Penalty> = match (&penalty, opts.continuation) {
        (Penalty::Matrix(reg), true) if matches!(reg.kind(), MatrixKind::SmoothedTraceNorm { .. }) => {
            let MatrixKind::SmoothedTraceNorm { eps } = *reg.kind() else { unreachable!() };
            let mut list = Vec::new();
            let mut e = 1e-2;
            while e > eps * 1.5 {
                list.push(Penalty::Matrix(reg.with_kind(MatrixKind::SmoothedTraceNorm { eps: e })?));
                e *= 0.1;
            }
            list.push(penalty.clone());
            list
        }
        _ => vec![penalty.clone()],
    };
    let mut z = z0;
    let mut iterations = 0;
    let mut history = Vec::new();
    let mut last = None;
    for stage in schedule {
        let stage_fit = fit.as_ref().map(|f| Fit { loss: f.loss, tasks: f.tasks.clone() });
        let program = Program { d, n, base: base.clone(), map: map.clone(), fit: stage_fit, gamma, penalty: stage };
        let run = run_program(&program, z.clone(), method, opts)?;
        iterations += run.iterations;
        history.extend_from_slice(&run.history);
        z = run.z.clone();
        let value = run.value;
        last = Some((run, Some(value)));
    }
    let (run, surrogate_value) = last.expect("at least one stage");
    let converged = run.converged;
    let program = Program { d, n, base, map, fit, gamma, penalty: specified };
    let w = program.w_of(&z);
    let objective = program.value_at(&w).ok_or_else(|| Error::InvalidArgument("objective is not finite".into()))?;
    let surrogate_objective = if smoothed { surrogate_value } else { None };
    let constraint_residual = problem_tasks
        .iter()
        .enumerate()
        .map(|(t, (x, y))| (*x * w.column(t) - *y).amax())
        .fold(0.0, f64::max);
    let coefficients = (mode == Mode::Reduced).then(|| pinv(&inputs.transpose()) * &w);
    if opts.require_convergence && !converged {
        return Err(Error::NotConverged { iterations, objective });
    }
    Ok(Solution {
        mode,
        off_span_residual: off_span_residual(&w, &inputs),
        w,
        objective,
        surrogate_objective,
        constraint_residual,
        iterations,
        converged,
        best_effort: method == Method::Search,
        coefficients,
        history,
    })
}

fn vector_setup(problem: &VectorProblem) -> Setup<'_> {
    Setup { problem_tasks: vec![(&problem.x, &problem.y)], inputs: problem.x.clone(), d: problem.dim(), kind: problem.kind }
}

/// `min Omega(w)` subject to `X w = y`.
pub fn solve_interpolation_vector(problem: &VectorProblem, reg: &VectorRegularizer, mode: Mode, opts: &SolverOptions) -> Result<Solution> {
    if problem.kind != ProblemKind::Interpolation {
        return Err(Error::InvalidArgument("expected an interpolation problem".into()));
    }
    solve_vector(problem, reg, mode, opts)
}

/// `min E(X w, y) + gamma Omega(w)`.
pub fn solve_regularization_vector(problem: &VectorProblem, reg: &VectorRegularizer, mode: Mode, opts: &SolverOptions) -> Result<Solution> {
    if problem.kind == ProblemKind::Interpolation {
        return Err(Error::InvalidArgument("expected a regularization problem".into()));
    }
    solve_vector(problem, reg, mode, opts)
}

/// Dispatches on the problem kind.
pub fn solve_vector(problem: &VectorProblem, reg: &VectorRegularizer, mode: Mode, opts: &SolverOptions) -> Result<Solution> {
    reg.validate()?;
    let penalty = Penalty::Vector(*reg);
    let method = penalty.method();
    solve_setup(vector_setup(problem), penalty.clone(), method, mode, opts, penalty)
}

fn mtl_setup(problem: &MultiTaskProblem) -> Setup<'_> {
    Setup {
        problem_tasks: problem.tasks.iter().map(|t| (&t.x, &t.y)).collect(),
        inputs: problem.all_inputs(),
        d: problem.d,
        kind: problem.kind,
    }
}

/// `min Omega(W)` subject to `w_t^T x_ti = y_ti`.
pub fn solve_interpolation_mtl(problem: &MultiTaskProblem, reg: &MatrixRegularizer, mode: Mode, opts: &SolverOptions) -> Result<Solution> {
    if problem.kind != ProblemKind::Interpolation {
        return Err(Error::InvalidArgument("expected an interpolation problem".into()));
    }
    solve_mtl(problem, reg, mode, opts)
}

/// `min sum_t E(X_t w_t, y_t) + gamma Omega(W)`.
pub fn solve_regularization_mtl(problem: &MultiTaskProblem, reg: &MatrixRegularizer, mode: Mode, opts: &SolverOptions) -> Result<Solution> {
    if problem.kind == ProblemKind::Interpolation {
        return Err(Error::InvalidArgument("expected a regularization problem".into()));
    }
    solve_mtl(problem, reg, mode, opts)
}

/// Dispatches on the problem kind. The regularizer is rebound to the
/// problem's dimensions.
pub fn solve_mtl(problem: &MultiTaskProblem, reg: &MatrixRegularizer, mode: Mode, opts: &SolverOptions) -> Result<Solution> {
    let reg = reg.with_dims(problem.d, problem.tasks())?;
    let specified = Penalty::Matrix(reg.clone());
    let method = specified.method();
    let working = match surrogate(&reg, opts.smoothing)? {
        Some(s) => Penalty::Matrix(s),
        None => specified.clone(),
    };
    solve_setup(mtl_setup(problem), working, method, mode, opts, specified)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionMinimizer {
    pub a0: f64,
    pub unique: bool,
    /// `E(a0 v, y)`
    pub value: f64,
    /// `|d/da E(a v, y)|` at `a0` (a one-sided bound for the hinge).
    pub stationarity_residual: f64,
    /// For the logistic loss with `v = (m-2, -1, ..., -1)` and `y = 1`: the
    /// residual of `(m-1) e^{a(m-1)} + e^a - m + 2 = 0`.
    pub logistic_equation_residual: Option<f64>,
}

const DIRECTION_RANGE: f64 = 100.0;
const DIRECTION_GRID: usize = 20_001;

/// Minimizes `a -> E(a v, y)` on `[-100, 100]`: grid scan, golden-section
/// refinement of every grid-local minimum, Newton polish for smooth losses.
/// Returns [`Error::NotUnique`] when the minimum is flat, attained at the
/// range boundary, or reached at separated points.
pub fn direction_minimizer(loss: LossSpec, v: &Vector, y: &Vector) -> Result<DirectionMinimizer> {
    check_lengths(v, y)?;
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroVector);
    }
    let f = |a: f64| eval_loss(loss, &(v * a), y).unwrap_or(f64::INFINITY);
    let df = |a: f64| subgrad_loss(loss, &(v * a), y).map(|g| g.dot(v)).unwrap_or(f64::NAN);
    let h = 2.0 * DIRECTION_RANGE / (DIRECTION_GRID - 1) as f64;
    let grid: Vec<f64> = (0..DIRECTION_GRID).map(|i| -DIRECTION_RANGE + i as f64 * h).collect();
    let values: Vec<f64> = grid.iter().map(|&a| f(a)).collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let flat_tol = 1e-9 * best.abs().max(1.0);
    let near: Vec<usize> = (0..DIRECTION_GRID).filter(|&i| values[i] <= best + flat_tol).collect();
    let (lo, hi) = (near[0], near[near.len() - 1]);
    if lo == 0 || hi == DIRECTION_GRID - 1 {
        return Err(Error::NotUnique(format!(
            "E(a v, y) is not minimized inside [-{DIRECTION_RANGE}, {DIRECTION_RANGE}]"
        )));
    }
    if hi - lo > 1 {
        return Err(Error::NotUnique(format!(
            "E(a v, y) is flat at its minimum on [{}, {}]",
            grid[lo], grid[hi]
        )));
    }
    // Multi-start: refine every grid-local minimum and compare.
    let mut candidates = Vec::new();
    for i in 1..DIRECTION_GRID - 1 {
        if values[i] <= values[i - 1] && values[i] <= values[i + 1] {
            let a = golden_section(&f, grid[i - 1], grid[i + 1]);
            candidates.push((a, f(a)));
        }
    }
    let top = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let winners: Vec<f64> = candidates.iter().filter(|c| c.1 <= top + flat_tol).map(|c| c.0).collect();
    let spread = winners.iter().fold(0.0_f64, |m, &a| m.max((a - winners[0]).abs()));
    if spread > 1e-6 {
        return Err(Error::NotUnique(format!("separated minimizers, spread {spread:e}")));
    }
    let mut a0 = winners[0];
    if loss != LossSpec::Hinge {
        for _ in 0..20 {
            let g = df(a0);
            let eps = 1e-6 * a0.abs().max(1.0);
            let curvature = (df(a0 + eps) - df(a0 - eps)) / (2.0 * eps);
            if !(curvature > 0.0) || g == 0.0 {
                break;
            }
            let next = a0 - g / curvature;
            if f(next) > f(a0) + flat_tol {
                break;
            }
            a0 = next;
        }
    }
    let stationarity_residual = if loss == LossSpec::Hinge {
        let step = 1e-9 * a0.abs().max(1.0);
        let left = df(a0 - step);
        let right = df(a0 + step);
        // A kink minimizer has left <= 0 <= right.
        left.max(0.0).max((-right).max(0.0))
    } else {
        df(a0).abs()
    };
    let m = v.len();
    let pattern = m >= 2
        && v[0] == (m as f64 - 2.0)
        && v.iter().skip(1).all(|&x| x == -1.0)
        && y.iter().all(|&x| x == 1.0);
    let logistic_equation_residual = (loss == LossSpec::Logistic && pattern).then(|| {
        let k = m as f64 - 1.0;
        (k * (a0 * k).exp() + a0.exp() - m as f64 + 2.0).abs()
    });
    Ok(DirectionMinimizer {
        a0,
        unique: true,
        value: f(a0),
        stationarity_residual,
        logistic_equation_residual,
    })
}

fn golden_section(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPathReport {
    pub direction: DirectionMinimizer,
    pub gammas: Vec<f64>,
    pub objectives: Vec<f64>,
    /// `|<w_gamma, x> - ||x||^2|`
    pub limit_gap: Vec<f64>,
    pub solutions: Vec<Solution>,
    /// `limit_gap` is nonincreasing along the path.
    pub monotone: bool,
    pub final_gap: f64,
    /// `Omega(w_gamma) <= Omega(x)` at every gamma.
    pub regularizer_bound_holds: bool,
}

/// `1, 10^-0.5, ..., 10^-6`.
pub fn default_gammas() -> Vec<f64> {
    (0..13).map(|k| 10f64.powf(-0.5 * k as f64)).collect()
}

/// Solves `min E((a0 / ||x||^2) <w, x> v, y) + gamma Omega(w)` along the
/// given gammas in reduced mode, i.e. regularization with inputs
/// `x_i = (a0 v_i / ||x||^2) x`.
pub fn gamma_path(
    x: &Vector,
    reg: &VectorRegularizer,
    loss: LossSpec,
    v: &Vector,
    y: &Vector,
    gammas: &[f64],
    opts: &SolverOptions,
) -> Result<GammaPathReport> {
    let xx = x.norm_squared();
    if xx == 0.0 {
        return Err(Error::ZeroVector);
    }
    if gammas.is_empty() || gammas.iter().any(|&g| !(g > 0.0)) || gammas.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::InvalidArgument("gammas must be positive and strictly decreasing".into()));
    }
    let direction = direction_minimizer(loss, v, y)?;
    let a0 = direction.a0;
    if a0.abs() <= 1e-12 {
        return Err(Error::InvalidArgument("direction minimizer is zero".into()));
    }
    let inputs = Mat::from_fn(v.len(), x.len(), |i, j| a0 * v[i] / xx * x[j]);
    let omega_x = reg.eval(x);
    let mut objectives = Vec::new();
    let mut limit_gap = Vec::new();
    let mut solutions = Vec::new();
    let mut bound = true;
    for &gamma in gammas {
        let problem = VectorProblem::new(inputs.clone(), y.clone(), ProblemKind::Regularization { gamma, loss })?;
        let sol = solve_regularization_vector(&problem, reg, Mode::Reduced, opts)?;
        let w = sol.w.column(0).into_owned();
        limit_gap.push((w.dot(x) - xx).abs());
        objectives.push(sol.objective);
        bound &= reg.eval(&w) <= omega_x + 1e-9 * omega_x.abs().max(1.0);
        solutions.push(sol);
    }
    let monotone = limit_gap.windows(2).all(|p| p[1] <= p[0] + 1e-12);
    let final_gap = *limit_gap.last().expect("nonempty");
    Ok(GammaPathReport {
        direction,
        gammas: gammas.to_vec(),
        objectives,
        limit_gap,
        solutions,
        monotone,
        final_gap,
        regularizer_bound_holds: bound,
    })
}

/// Rank-`r` ground truth `W* = U V^T` with Gaussian factors, Gaussian inputs
/// and outputs `w*_t^T x + noise * N(0, 1)`, as an interpolation problem.
pub fn gen_synthetic_mtl(d: usize, n: usize, r: usize, m_per_task: usize, noise: f64, seed: u64) -> Result<(MultiTaskProblem, Mat)> {
    if d == 0 || n == 0 || m_per_task == 0 {
        return Err(Error::InvalidArgument("d, n and m must be >= 1".into()));
    }
    if r > d.min(n) {
        return Err(Error::InvalidArgument(format!("rank {r} exceeds min(d, n) = {}", d.min(n))));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = gaussian_matrix(&mut rng, d, r);
    let v = gaussian_matrix(&mut rng, n, r);
    let truth = &u * v.transpose();
    let mut tasks = Vec::with_capacity(n);
    for t in 0..n {
        let x = gaussian_matrix(&mut rng, m_per_task, d);
        let mut y = &x * truth.column(t);
        if noise > 0.0 {
            for yi in y.iter_mut() {
                *yi += noise * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        tasks.push(Task { x, y });
    }
    Ok((MultiTaskProblem::new(d, tasks, ProblemKind::Interpolation)?, truth))
}
