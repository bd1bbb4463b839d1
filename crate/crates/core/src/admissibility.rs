//! Sampled property checks for admissibility.
//!
//! Every check draws Gaussian test points (entries scaled by 0.1, 1 or 10 in
//! rotation across trials), evaluates a signed violation per trial and keeps
//! the worst one. A report either says `refuted`, with the certificate that
//! achieved the worst violation, or `no-violation-found`. Sampling can never
//! prove a universally quantified property, so no report claims more.
//!
//! Trial `i` draws from its own ChaCha stream `(seed, i)`, and aggregation is
//! a max with ties broken by the lowest trial index, so a report depends only
//! on its inputs and not on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constructions::{psd_sqrt, random_special_orthogonal, MatrixPath, VectorPath};
use crate::error::{Error, Result};
use crate::linalg::{
    gaussian_matrix, gaussian_vector, project_out_span, serde_rows, sym_apply, sym_eigen, Mat, ThinSvd, Vector,
};
use crate::regzoo::{induced_h, MatrixRegularizer, VectorRegularizer};

/// Default slack for `>=` comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default slack for `Omega(W) = h(W^T W)` agreement.
pub const FUNCTIONAL_FORM_TOL: f64 = 1e-8;
/// Default slack for the scaled Weyl check.
pub const WEYL_TOL: f64 = 1e-10;
/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Default slack for finite-difference gradient checks.
pub const FD_TOL: f64 = 1e-6;
/// Default slack for path invariance.
pub const PATH_TOL: f64 = 1e-6;
/// Entry scales cycled across trials.
pub const SCALES: [f64; 3] = [0.1, 1.0, 10.0];
/// Grid points along a proof path.
pub const PATH_GRID: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { trials: 1000, seed: 42, tol: DEFAULT_TOL }
    }
}

impl CheckOptions {
    pub fn new(trials: usize, seed: u64, tol: f64) -> Self {
        Self { trials, seed, tol }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NoViolationFound,
    Refuted,
}

/// What a certificate's two points are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// `perturbation` is orthogonal to `point` (`W^T P = 0`); values are
    /// `(Omega(W), Omega(W + P))`.
    OrthogonalPerturbation,
    /// `point` and `point + perturbation` have the same Gram matrix; values
    /// are the regularizer at both.
    EqualGram,
    /// `point = A`, `point + perturbation = B` with `A <= B`; values are
    /// `(h(A), h(B))`.
    LoewnerPair,
    /// `point = A`, `perturbation = x x^T` for the eigenvector of the most
    /// negative eigenvalue of the estimated gradient; values `(lambda_min, h(A))`.
    GradientEigen,
    /// `point = w`, `perturbation = p`; values `(<grad Omega(w), p>, Omega(w))`.
    GradientDirection,
}

/// A witness for a violated property.
///
/// `orthogonality_residual` measures how exactly the certificate's defining
/// constraint holds: `||W^T P|| / max(1, ||W|| ||P||)` for orthogonal
/// perturbations, the relative Gram mismatch for equal-Gram pairs, the
/// negative part of `lambda_min(B - A)` for Loewner pairs, zero otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub kind: CertificateKind,
    #[serde(with = "serde_rows")]
    pub point: Mat,
    #[serde(with = "serde_rows")]
    pub perturbation: Mat,
    pub values: (f64, f64),
    pub orthogonality_residual: f64,
}

impl Counterexample {
    /// Builds an orthogonal-perturbation certificate by evaluating `subject`.
    pub fn orthogonal(subject: Subject<'_>, point: Mat, perturbation: Mat) -> Option<Self> {
        let base = subject.eval(&point)?;
        let moved = subject.eval(&(&point + &perturbation))?;
        let residual = orthogonality_residual(&point, &perturbation);
        Some(Self {
            kind: CertificateKind::OrthogonalPerturbation,
            point,
            perturbation,
            values: (base, moved),
            orthogonality_residual: residual,
        })
    }

    /// `Omega(W) - Omega(W + P)` recomputed from scratch.
    pub fn reevaluate_drop(&self, subject: Subject<'_>) -> Option<f64> {
        Some(subject.eval(&self.point)? - subject.eval(&(&self.point + &self.perturbation))?)
    }
}

fn orthogonality_residual(w: &Mat, p: &Mat) -> f64 {
    (w.transpose() * p).norm() / (w.norm() * p.norm()).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub suite: String,
    pub subject: String,
    pub trials: usize,
    pub probes: usize,
    pub skipped: usize,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub verdict: Verdict,
    pub counterexample: Option<Counterexample>,
    pub seed: u64,
}

/// The regularizer under test, viewed as a function on `d x n` matrices
/// (vectors are `d x 1`).
#[derive(Debug, Clone, Copy)]
pub enum Subject<'a> {
    Vector { reg: &'a VectorRegularizer, d: usize },
    Matrix(&'a MatrixRegularizer),
}

impl<'a> Subject<'a> {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Subject::Vector { d, .. } => (*d, 1),
            Subject::Matrix(reg) => reg.dims(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Subject::Vector { reg, .. } => reg.name(),
            Subject::Matrix(reg) => reg.name(),
        }
    }

    /// Finite value or `None`.
    pub fn eval(&self, w: &Mat) -> Option<f64> {
        let value = match self {
            Subject::Vector { reg, .. } => reg.eval(&w.column(0).into_owned()),
            Subject::Matrix(reg) => reg.eval(w).ok()?,
        };
        value.is_finite().then_some(value)
    }
}

fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn scale_for(trial: usize) -> f64 {
    SCALES[trial % SCALES.len()]
}

/// Max-with-certificate aggregation shared by every suite.
struct Tally {
    worst: f64,
    certificate: Option<Counterexample>,
    skipped: usize,
    evaluated: usize,
}

impl Tally {
    fn new() -> Self {
        Self { worst: f64::NEG_INFINITY, certificate: None, skipped: 0, evaluated: 0 }
    }

    /// Trials must be offered in increasing index order; on ties the earlier
    /// one is kept.
    fn offer(&mut self, outcome: Option<(f64, Counterexample)>) {
        match outcome {
            Some((violation, cert)) if violation.is_finite() => {
                self.evaluated += 1;
                if violation > self.worst {
                    self.worst = violation;
                    self.certificate = Some(cert);
                }
            }
            _ => self.skipped += 1,
        }
    }

    fn finish(self, suite: &str, subject: String, opts: &CheckOptions, probes: usize) -> CheckReport {
        let worst = if self.evaluated == 0 { 0.0 } else { self.worst };
        let passed = worst <= opts.tol;
        CheckReport {
            suite: suite.to_string(),
            subject,
            trials: opts.trials,
            probes,
            skipped: self.skipped,
            worst_violation: worst,
            tolerance: opts.tol,
            passed,
            verdict: if passed { Verdict::NoViolationFound } else { Verdict::Refuted },
            counterexample: if passed { None } else { self.certificate },
            seed: opts.seed,
        }
    }
}

/// `w = (2, 1, 0, ..)`, `p = (1/4, -1/2, 0, ..)`: orthogonal, and a drop of
/// 1/4 for the l1 norm.
pub fn vector_probe(d: usize) -> (Mat, Mat) {
    let mut w = Mat::zeros(d, 1);
    let mut p = Mat::zeros(d, 1);
    w[(0, 0)] = 2.0;
    w[(1, 0)] = 1.0;
    p[(0, 0)] = 0.25;
    p[(1, 0)] = -0.5;
    (w, p)
}

/// [`vector_probe`] embedded in the first column of a `d x n` matrix.
pub fn embedded_probe(d: usize, n: usize) -> (Mat, Mat) {
    let (w1, p1) = vector_probe(d);
    let mut w = Mat::zeros(d, n);
    let mut p = Mat::zeros(d, n);
    w.set_column(0, &w1.column(0));
    p.set_column(0, &p1.column(0));
    (w, p)
}

fn geometric_check(subject: Subject<'_>, opts: &CheckOptions, strict: bool, suite: &str) -> CheckReport {
    let (d, n) = subject.dims();
    let slack = if strict { 2.0 * opts.tol } else { 0.0 };
    let violation_of = |cert: &Counterexample| {
        let drop = cert.values.0 - cert.values.1;
        if strict && cert.perturbation.norm() > opts.tol {
            drop + slack
        } else {
            drop
        }
    };
    let mut tally = Tally::new();
    let (w, p) = if n == 1 { vector_probe(d) } else { embedded_probe(d, n) };
    tally.offer(Counterexample::orthogonal(subject, w, p).map(|c| (violation_of(&c), c)));
    for trial in 0..opts.trials {
        let mut rng = trial_rng(opts.seed, trial);
        let s = scale_for(trial);
        let w = gaussian_matrix(&mut rng, d, n) * s;
        let p = project_out_span(&w, &(gaussian_matrix(&mut rng, d, n) * s));
        tally.offer(Counterexample::orthogonal(subject, w, p).map(|c| (violation_of(&c), c)));
    }
    tally.finish(suite, subject.name(), opts, 1)
}

/// `Omega(w + p) >= Omega(w)` for `<w, p> = 0`. In strict mode the increase
/// must be at least `tol` whenever `||p|| > tol`.
pub fn check_vector_geometric(reg: &VectorRegularizer, d: usize, opts: &CheckOptions, strict: bool) -> Result<CheckReport> {
    opts.validate()?;
    if d < 2 {
        return Err(Error::DimTooSmall(d));
    }
    let suite = if strict { "vector-geometric-strict" } else { "vector-geometric" };
    Ok(geometric_check(Subject::Vector { reg, d }, opts, strict, suite))
}

/// `Omega(W + P) >= Omega(W)` for `W^T P = 0`.
pub fn check_matrix_geometric(reg: &MatrixRegularizer, opts: &CheckOptions) -> Result<CheckReport> {
    opts.validate()?;
    let (d, n) = reg.dims();
    if d <= n {
        return Err(Error::InvalidArgument(format!("matrix geometric check needs d > n, got d = {d}, n = {n}")));
    }
    Ok(geometric_check(Subject::Matrix(reg), opts, false, "matrix-geometric"))
}

/// `<grad Omega(w), p> = 0` for `<w, p> = 0`, measured as
/// `|<g, p>| / (||g|| ||p|| + 1)`.
pub fn check_gradient_orthogonality(reg: &VectorRegularizer, d: usize, opts: &CheckOptions) -> Result<CheckReport> {
    opts.validate()?;
    if d < 2 {
        return Err(Error::DimTooSmall(d));
    }
    let mut tally = Tally::new();
    for trial in 0..opts.trials {
        let mut rng = trial_rng(opts.seed, trial);
        let s = scale_for(trial);
        let w = gaussian_vector(&mut rng, d) * s;
        let wm = Mat::from_column_slice(d, 1, w.as_slice());
        let p = project_out_span(&wm, &(gaussian_matrix(&mut rng, d, 1) * s)).column(0).into_owned();
        let outcome = reg.grad(&w).ok().and_then(|g| {
            let inner = g.dot(&p);
            let violation = inner.abs() / (g.norm() * p.norm() + 1.0);
            let value = reg.eval(&w);
            (violation.is_finite() && value.is_finite()).then(|| {
                let cert = Counterexample {
                    kind: CertificateKind::GradientDirection,
                    point: wm.clone(),
                    perturbation: Mat::from_column_slice(d, 1, p.as_slice()),
                    values: (inner, value),
                    orthogonality_residual: orthogonality_residual(&wm, &Mat::from_column_slice(d, 1, p.as_slice())),
                };
                (violation, cert)
            })
        });
        tally.offer(outcome);
    }
    Ok(tally.finish("gradient-orthogonality", reg.name(), opts, 0))
}

/// Sampled `h(xi) = Omega(sqrt(xi) e1)` with the checks that back it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HTable {
    pub xi: Vec<f64>,
    pub h: Vec<f64>,
    pub report: CheckReport,
}

/// Tabulates `h(xi) = Omega(sqrt(xi) e1)` on a log grid over `[1e-4, 1e4]`
/// and checks `Omega(w) = h(<w, w>)` on random `w` together with
/// monotonicity of the table. Violations are relative to `max(1, |Omega|)`.
pub fn extract_h_vector(
    reg: &VectorRegularizer,
    d: usize,
    probe_count: usize,
    opts: &CheckOptions,
) -> Result<HTable> {
    opts.validate()?;
    if d < 2 {
        return Err(Error::DimTooSmall(d));
    }
    if probe_count < 2 {
        return Err(Error::InvalidArgument("probe_count must be >= 2".into()));
    }
    let axis = |len: f64| {
        let mut v = Vector::zeros(d);
        v[0] = len;
        v
    };
    let h_at = |xi: f64| reg.eval(&axis(xi.sqrt()));
    let xi: Vec<f64> = (0..probe_count)
        .map(|k| 10f64.powf(-4.0 + 8.0 * k as f64 / (probe_count - 1) as f64))
        .collect();
    let h: Vec<f64> = xi.iter().map(|&x| h_at(x)).collect();

    let mut tally = Tally::new();
    let form_outcome = |w: Vector| -> Option<(f64, Counterexample)> {
        let value = reg.eval(&w);
        let xi_w = w.norm_squared();
        let on_axis = axis(w.norm());
        let h_value = reg.eval(&on_axis);
        if !(value.is_finite() && h_value.is_finite()) {
            return None;
        }
        let violation = (value - h_value).abs() / value.abs().max(1.0);
        let cert = Counterexample {
            kind: CertificateKind::EqualGram,
            point: Mat::from_column_slice(d, 1, w.as_slice()),
            perturbation: Mat::from_column_slice(d, 1, (&on_axis - &w).as_slice()),
            values: (value, h_value),
            orthogonality_residual: (on_axis.norm_squared() - xi_w).abs() / xi_w.max(1.0),
        };
        Some((violation, cert))
    };

    // Probe: equal Euclidean norm, off-axis.
    let mut diag = Vector::zeros(d);
    diag[0] = 1.0;
    diag[1] = 1.0;
    tally.offer(form_outcome(diag));
    // Table monotonicity, certified by an orthogonal step between grid radii.
    for k in 0..probe_count - 1 {
        let (h0, h1) = (h[k], h[k + 1]);
        if !(h0.is_finite() && h1.is_finite()) {
            tally.offer(None);
            continue;
        }
        let point = Mat::from_column_slice(d, 1, axis(xi[k].sqrt()).as_slice());
        let mut step = Mat::zeros(d, 1);
        step[(1, 0)] = (xi[k + 1] - xi[k]).sqrt();
        let cert = Counterexample::orthogonal(Subject::Vector { reg, d }, point, step);
        tally.offer(cert.map(|c| ((h0 - h1) / h0.abs().max(1.0), c)));
    }
    let probes = probe_count;
    for trial in 0..opts.trials {
        let mut rng = trial_rng(opts.seed, trial);
        tally.offer(form_outcome(gaussian_vector(&mut rng, d) * scale_for(trial)));
    }
    let report = tally.finish("h-extraction-vector", reg.name(), opts, probes);
    Ok(HTable { xi, h, report })
}

fn equal_gram_certificate(subject: Subject<'_>, w: &Mat, other: &Mat) -> Option<(f64, Counterexample)> {
    let a = subject.eval(w)?;
    let b = subject.eval(other)?;
    let gram = w.transpose() * w;
    let residual = (&gram - other.transpose() * other).norm() / gram.norm().max(1.0);
    Some((
        (a - b).abs(),
        Counterexample {
            kind: CertificateKind::EqualGram,
            point: w.clone(),
            perturbation: other - w,
            values: (a, b),
            orthogonality_residual: residual,
        },
    ))
}

/// Checks `Omega(W) = h(W^T W)` with `h(A) = Omega(Y A^(1/2))`, and left
/// orthogonal invariance `Omega(U W) = Omega(W)`, on random `W` and `U`.
/// Absolute error; requires `d >= 2n`.
pub fn extract_h_matrix(reg: &MatrixRegularizer, opts: &CheckOptions) -> Result<CheckReport> {
    opts.validate()?;
    let (d, n) = reg.dims();
    if d < 2 * n {
        return Err(Error::DimsTooSmall { d, n });
    }
    let subject = Subject::Matrix(reg);
    let mut tally = Tally::new();
    for trial in 0..opts.trials {
        let mut rng = trial_rng(opts.seed, trial);
        let w = gaussian_matrix(&mut rng, d, n) * scale_for(trial);
        let root = psd_sqrt(&(w.transpose() * &w)).ok();
        let canonical = root.map(|r| {
            let mut y = Mat::zeros(d, n);
            y.view_mut((0, 0), (n, n)).copy_from(&r);
            y
        });
        let u = random_special_orthogonal(d, &mut rng);
        let rotated = u.matrix() * &w;
        let first = canonical.and_then(|c| equal_gram_certificate(subject, &w, &c));
        let second = equal_gram_certificate(subject, &w, &rotated);
        let outcome = match (first, second) {
            (Some(a), Some(b)) => Some(if b.0 > a.0 { b } else { a }),
            (a, b) => a.or(b),
        };
        tally.offer(outcome);
    }
    Ok(tally.finish("h-extraction-matrix", reg.name(), opts, 0))
}

/// Named functions on symmetric matrices used to exercise the order and
/// gradient characterizations of matrix monotonicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedH {
    /// `trace A`
    Trace,
    /// `trace A^(1/2)`
    TraceSqrt,
    /// `log det (I + A)`
    LogDetShift,
    /// `trace A^2`
    TraceSquare,
    /// `-trace (I + A)^(-1)`
    NegTraceInverseShift,
    /// `-trace A`
    NegTrace,
    /// `A_11 - A_22`
    DiagDifference,
    /// `A_12`
    OffDiagonal,
    /// `trace A - trace A^2 / 2`
    TraceMinusHalfSquare,
    /// `log det (I + A) - trace A`
    LogDetShiftMinusTrace,
}

impl NamedH {
    pub const ALL: [NamedH; 10] = [
        NamedH::Trace,
        NamedH::TraceSqrt,
        NamedH::LogDetShift,
        NamedH::TraceSquare,
        NamedH::NegTraceInverseShift,
        NamedH::NegTrace,
        NamedH::DiagDifference,
        NamedH::OffDiagonal,
        NamedH::TraceMinusHalfSquare,
        NamedH::LogDetShiftMinusTrace,
    ];

    /// Known answer, for tests.
    pub fn is_matrix_monotone(self) -> bool {
        matches!(
            self,
            NamedH::Trace | NamedH::TraceSqrt | NamedH::LogDetShift | NamedH::TraceSquare | NamedH::NegTraceInverseShift
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            NamedH::Trace => "trace",
            NamedH::TraceSqrt => "trace_sqrt",
            NamedH::LogDetShift => "log_det_shift",
            NamedH::TraceSquare => "trace_square",
            NamedH::NegTraceInverseShift => "neg_trace_inverse_shift",
            NamedH::NegTrace => "neg_trace",
            NamedH::DiagDifference => "diag_difference",
            NamedH::OffDiagonal => "off_diagonal",
            NamedH::TraceMinusHalfSquare => "trace_minus_half_square",
            NamedH::LogDetShiftMinusTrace => "log_det_shift_minus_trace",
        }
    }

    pub fn eval(self, a: &Mat) -> Result<f64> {
        let n = a.nrows();
        let need_two = || {
            if n < 2 {
                Err(Error::InvalidArgument(format!("{} needs n >= 2", self.name())))
            } else {
                Ok(())
            }
        };
        let log_det_shift = || sym_eigen(a).0.iter().map(|l| (1.0 + l).ln()).sum::<f64>();
        Ok(match self {
            NamedH::Trace => a.trace(),
            NamedH::TraceSqrt => psd_sqrt(a)?.trace(),
            NamedH::LogDetShift => log_det_shift(),
            NamedH::TraceSquare => (a * a).trace(),
            NamedH::NegTraceInverseShift => -sym_apply(a, |l| 1.0 / (1.0 + l)).trace(),
            NamedH::NegTrace => -a.trace(),
            NamedH::DiagDifference => {
                need_two()?;
                a[(0, 0)] - a[(1, 1)]
            }
            NamedH::OffDiagonal => {
                need_two()?;
                0.5 * (a[(0, 1)] + a[(1, 0)])
            }
            NamedH::TraceMinusHalfSquare => a.trace() - 0.5 * (a * a).trace(),
            NamedH::LogDetShiftMinusTrace => log_det_shift() - a.trace(),
        })
    }
}

/// Source of a function `h` on `n x n` PSD matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum HSource {
    /// `h(A) = Omega(Y A^(1/2))`
    Induced(MatrixRegularizer),
    Named(NamedH),
}

impl HSource {
    pub fn name(&self) -> String {
        match self {
            HSource::Induced(reg) => format!("induced({})", reg.name()),
            HSource::Named(h) => h.name().to_string(),
        }
    }

    pub fn eval(&self, a: &Mat) -> Result<f64> {
        let value = match self {
            HSource::Induced(reg) => induced_h(reg, a)?,
            HSource::Named(h) => h.eval(a)?,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::InvalidArgument("non-finite value".into()))
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        match self {
            HSource::Induced(reg) => {
                let (d, rn) = reg.dims();
                if rn != n {
                    return Err(Error::DimensionMismatch { expected: rn.to_string(), got: n.to_string() });
                }
                if d < 2 * n {
                    return Err(Error::DimsTooSmall { d, n });
                }
                Ok(())
            }
            HSource::Named(h) => h.eval(&Mat::identity(n, n)).map(|_| ()),
        }
    }
}

/// `A = G^T G` with `G` of size `2n x n`, and `B = A + C^T C`.
fn sample_ordered_pair(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> (Mat, Mat) {
    let g = gaussian_matrix(rng, 2 * n, n) * scale;
    let c = gaussian_matrix(rng, n, n) * scale;
    let a = g.transpose() * &g;
    let b = &a + c.transpose() * &c;
    (crate::linalg::symmetrize(&a), crate::linalg::symmetrize(&b))
}

fn loewner_outcome(h: &HSource, a: Mat, b: Mat) -> Option<(f64, Counterexample)> {
    let ha = h.eval(&a).ok()?;
    let hb = h.eval(&b).ok()?;
    let gap = &b - &a;
    let residual = (-crate::linalg::min_eigenvalue(&gap)).max(0.0);
    Some((
        (ha - hb) / hb.abs().max(1.0),
        Counterexample {
            kind: CertificateKind::LoewnerPair,
            point: a,
            perturbation: gap,
            values: (ha, hb),
            orthogonality_residual: residual,
        },
    ))
}

/// `h(A) <= h(B)` whenever `A <= B`, sampled as `B = A + C^T C`. Violation
/// is `(h(A) - h(B)) / max(1, |h(B)|)`.
pub fn check_matrix_nondecreasing(h: &HSource, n: usize, opts: &CheckOptions) -> Result<CheckReport> {
    opts.validate()?;
    h.validate(n)?;
    let mut tally = Tally::new();
    let id = Mat::identity(n, n);
    tally.offer(loewner_outcome(h, id.clone(), id * 2.0));
    for trial in 0..opts.trials {
        let mut rng = trial_rng(opts.seed, trial);
        let (a, b) = sample_ordered_pair(&mut rng, n, scale_for(trial));
        tally.offer(loewner_outcome(h, a, b));
    }
    Ok(tally.finish("matrix-nondecreasing", h.name(), opts, 1))
}

/// Central-difference estimate of the symmetric gradient of `h` at `A`:
/// diagonal entries from `E_ii`, off-diagonal ones from `E_ij + E_ji` halved.
pub fn fd_gradient_sym(h: &HSource, a: &Mat, step: f64) -> Result<Mat> {
    let n = a.nrows();
    let mut g = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut e = Mat::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            let plus = h.eval(&(a + &e * step))?;
            let minus = h.eval(&(a - &e * step))?;
            let deriv = (plus - minus) / (2.0 * step);
            if i == j {
                g[(i, i)] = deriv;
            } else {
                g[(i, j)] = 0.5 * deriv;
                g[(j, i)] = 0.5 * deriv;
            }
        }
    }
    Ok(g)
}

fn gradient_outcome(h: &HSource, a: Mat) -> Option<(f64, Counterexample)> {
    let g = fd_gradient_sym(h, &a, FD_STEP).ok()?;
    let (vals, vecs) = sym_eigen(&g);
    let lmin = vals[0];
    let x = vecs.column(0).into_owned();
    let ha = h.eval(&a).ok()?;
    Some((
        -lmin / vals.amax().max(1.0),
        Counterexample {
            kind: CertificateKind::GradientEigen,
            point: a,
            perturbation: &x * x.transpose(),
            values: (lmin, ha),
            orthogonality_residual: 0.0,
        },
    ))
}

/// `grad h(A)` is PSD, estimated by central differences at sampled `A`.
/// Violation is `-lambda_min / max(1, max |lambda|)`; finite differences
/// carry noise near [`FD_TOL`], so tolerances below it are not meaningful.
pub fn check_gradient_psd(h: &HSource, n: usize, opts: &CheckOptions) -> Result<CheckReport> {
    opts.validate()?;
    h.validate(n)?;
    let mut tally = Tally::new();
    tally.offer(gradient_outcome(h, Mat::identity(n, n)));
    for trial in 0..opts.trials {
        let mut rng = trial_rng(opts.seed, trial);
        let (a, _) = sample_ordered_pair(&mut rng, n, scale_for(trial));
        tally.offer(gradient_outcome(h, a));
    }
    Ok(tally.finish("gradient-psd", h.name(), opts, 1))
}

/// Order check and gradient check run on the same `h` with the same seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub order: CheckReport,
    pub gradient: CheckReport,
    pub agree: bool,
}

/// The gradient check uses `max(opts.tol, FD_TOL)`.
pub fn check_order_gradient_agreement(h: &HSource, n: usize, opts: &CheckOptions) -> Result<AgreementReport> {
    let order = check_matrix_nondecreasing(h, n, opts)?;
    let fd_opts = CheckOptions { tol: opts.tol.max(FD_TOL), ..*opts };
    let gradient = check_gradient_psd(h, n, &fd_opts)?;
    let agree = order.passed == gradient.passed;
    Ok(AgreementReport { order, gradient, agree })
}

/// Sorted spectra satisfy `lambda(M A M) <= lambda(M B M)` for `A <= B`.
/// Violation is relative to `max(1, |lambda_max(M B M)|)`.
pub fn check_weyl_scaled(m: &Mat, opts: &CheckOptions) -> Result<CheckReport> {
    opts.validate()?;
    let n = m.nrows();
    if !m.is_square() || n == 0 {
        return Err(Error::InvalidArgument("M must be square and nonempty".into()));
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidArgument("M must be symmetric".into()));
    }
    let outcome = |a: Mat, b: Mat| -> Option<(f64, Counterexample)> {
        let (la, _) = sym_eigen(&(m * &a * m));
        let (lb, _) = sym_eigen(&(m * &b * m));
        let scale = lb.amax().max(1.0);
        let (idx, gap) = (0..n)
            .map(|i| (i, la[i] - lb[i]))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let cert = Counterexample {
            kind: CertificateKind::LoewnerPair,
            point: a.clone(),
            perturbation: &b - &a,
            values: (la[idx], lb[idx]),
            orthogonality_residual: (-crate::linalg::min_eigenvalue(&(&b - &a))).max(0.0),
        };
        Some((gap / scale, cert))
    };
    let mut tally = Tally::new();
    let id = Mat::identity(n, n);
    tally.offer(outcome(id.clone(), id * 2.0));
    for trial in 0..opts.trials {
        let mut rng = trial_rng(opts.seed, trial);
        let (a, b) = sample_ordered_pair(&mut rng, n, scale_for(trial));
        tally.offer(outcome(a, b));
    }
    Ok(tally.finish("weyl-scaled", format!("M ({n}x{n})"), opts, 1))
}

/// Random restarts plus coordinate ascent on `Omega(W) - Omega(W + P)` with
/// `P` re-projected onto the orthogonal complement of `W` after every move.
/// `budget` counts violation evaluations. Returns the best certificate if
/// its drop exceeds `tol`.
pub fn search_violation(subject: Subject<'_>, budget: usize, seed: u64, tol: f64) -> Result<Option<Counterexample>> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be >= 1".into()));
    }
    let (d, n) = subject.dims();
    if d <= n {
        return Err(Error::InvalidArgument(format!("search needs d > n, got d = {d}, n = {n}")));
    }
    let drop = |w: &Mat, p: &Mat| -> Option<f64> { Some(subject.eval(w)? - subject.eval(&(w + p))?) };
    let per_restart = (budget / 5).max(50);
    let mut used = 0;
    let mut restart = 0;
    let mut best: Option<(f64, Mat, Mat)> = None;
    while used < budget {
        let mut rng = trial_rng(seed, restart);
        let s = scale_for(restart);
        let mut w = gaussian_matrix(&mut rng, d, n) * s;
        let mut p = project_out_span(&w, &(gaussian_matrix(&mut rng, d, n) * s));
        used += 1;
        restart += 1;
        let Some(mut current) = drop(&w, &p) else { continue };
        let stop = (used + per_restart).min(budget);
        let mut step = 0.25 * s;
        while used < stop && step > 1e-8 * s {
            let mut improved = false;
            'coords: for which in 0..2 {
                for idx in 0..d * n {
                    for sign in [1.0, -1.0] {
                        if used >= stop {
                            break 'coords;
                        }
                        let (mut cw, mut cp) = (w.clone(), p.clone());
                        if which == 0 {
                            cw[idx] += sign * step;
                        } else {
                            cp[idx] += sign * step;
                        }
                        let cp = project_out_span(&cw, &cp);
                        used += 1;
                        let threshold = 1e-12 * subject.eval(&cw).map_or(1.0, |v| v.abs().max(1.0));
                        if let Some(v) = drop(&cw, &cp) {
                            if v > current + threshold {
                                current = v;
                                w = cw;
                                p = cp;
                                improved = true;
                                break;
                            }
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|b| current > b.0) {
            best = Some((current, w, p));
        }
    }
    Ok(best
        .filter(|b| b.0 > tol)
        .and_then(|(_, w, p)| Counterexample::orthogonal(subject, w, p)))
}

/// `Omega` along the norm-preserving proof path: `z(lambda)` for vectors,
/// `Z(lambda)` (leading left singular vector rotated onto a random unit `z`
/// orthogonal to `u_2..u_r`) for matrices. Violation is
/// `max |Omega(path(lambda)) - Omega(path(0))| / max(1, |Omega(path(0))|)`
/// over [`PATH_GRID`] points in `[0, 1]`.
pub fn check_path_invariance(subject: Subject<'_>, opts: &CheckOptions) -> Result<CheckReport> {
    opts.validate()?;
    let (d, n) = subject.dims();
    if d < 2 {
        return Err(Error::DimTooSmall(d));
    }
    if n > 1 && d <= n {
        return Err(Error::InvalidArgument(format!("matrix path needs d > n, got d = {d}, n = {n}")));
    }
    let mut tally = Tally::new();
    for trial in 0..opts.trials {
        let mut rng = trial_rng(opts.seed, trial);
        let s = scale_for(trial);
        let path: Option<Box<dyn Fn(f64) -> Mat>> = match subject {
            Subject::Vector { .. } => {
                let w = gaussian_vector(&mut rng, d) * s;
                let mut e1 = Vector::zeros(d);
                e1[0] = 1.0;
                VectorPath::new(&w, &e1).ok().map(|p| {
                    Box::new(move |l: f64| Mat::from_column_slice(d, 1, p.at(l).as_slice())) as Box<dyn Fn(f64) -> Mat>
                })
            }
            Subject::Matrix(_) => {
                let w = gaussian_matrix(&mut rng, d, n) * s;
                let svd = ThinSvd::new(&w);
                let mut z = gaussian_vector(&mut rng, d);
                for i in 1..svd.rank() {
                    let u = svd.u.column(i);
                    for _ in 0..2 {
                        z -= u * u.dot(&z);
                    }
                }
                let z = &z / z.norm();
                MatrixPath::new(&w, &z, opts.seed ^ trial as u64)
                    .ok()
                    .map(|p| Box::new(move |l: f64| p.at(l)) as Box<dyn Fn(f64) -> Mat>)
            }
        };
        let outcome = path.and_then(|path| {
            let start = path(0.0);
            let base = subject.eval(&start)?;
            let mut worst = (0.0, start.clone(), base);
            for k in 1..PATH_GRID {
                let lambda = k as f64 / (PATH_GRID - 1) as f64;
                let z = path(lambda);
                let value = subject.eval(&z)?;
                let dev = (value - base).abs() / base.abs().max(1.0);
                if dev > worst.0 {
                    worst = (dev, z, value);
                }
            }
            let (dev, z, value) = worst;
            let g0 = start.transpose() * &start;
            let residual = (&g0 - z.transpose() * &z).norm() / g0.norm().max(1.0);
            Some((
                dev,
                Counterexample {
                    kind: CertificateKind::EqualGram,
                    perturbation: &z - &start,
                    point: start,
                    values: (base, value),
                    orthogonality_residual: residual,
                },
            ))
        });
        tally.offer(outcome);
    }
    Ok(tally.finish("path-invariance", subject.name(), opts, 0))
}
