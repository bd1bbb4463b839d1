//! Catalog of vector and matrix regularizers.
//!
//! Vector regularizers act on `R^d`; matrix regularizers act on `d x n`
//! matrices whose columns are task vectors. Every matrix kind except
//! `mixed_norm` is a function of `W^T W` alone, which is what [`induced_h`]
//! exposes.

use serde::{Deserialize, Serialize};

use crate::constructions::psd_sqrt;
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, Mat, ThinSvd, Vector, RANK_TOL};

/// Default smoothing used in place of the trace norm when a gradient is needed.
pub const DEFAULT_SMOOTHING: f64 = 1e-8;

/// Largest `n` for which `partition_min_trace` enumerates partitions.
pub const MAX_PARTITION_TASKS: usize = 8;

/// Relative threshold below which a coordinate counts as zero for gradients.
const GRAD_ZERO_TOL: f64 = 1e-12;

/// Scalar function applied to `<w, w>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HKind {
    Identity,
    Sqrt,
    Square,
    Exp,
    Affine { a: f64, b: f64 },
}

impl HKind {
    pub fn apply(self, xi: f64) -> f64 {
        match self {
            HKind::Identity => xi,
            HKind::Sqrt => xi.max(0.0).sqrt(),
            HKind::Square => xi * xi,
            HKind::Exp => xi.exp(),
            HKind::Affine { a, b } => a * xi + b,
        }
    }

    /// Derivative at `xi`, `None` where it does not exist.
    pub fn derivative(self, xi: f64) -> Option<f64> {
        match self {
            HKind::Identity => Some(1.0),
            HKind::Sqrt if xi > 0.0 => Some(0.5 / xi.sqrt()),
            HKind::Sqrt => None,
            HKind::Square => Some(2.0 * xi),
            HKind::Exp => Some(xi.exp()),
            HKind::Affine { a, .. } => Some(a),
        }
    }

    pub fn is_nondecreasing(self) -> bool {
        match self {
            HKind::Affine { a, .. } => a >= 0.0,
            _ => true,
        }
    }

    pub fn is_strictly_increasing(self) -> bool {
        match self {
            HKind::Affine { a, .. } => a > 0.0,
            _ => true,
        }
    }

    fn name(self) -> &'static str {
        match self {
            HKind::Identity => "identity",
            HKind::Sqrt => "sqrt",
            HKind::Square => "square",
            HKind::Exp => "exp",
            HKind::Affine { .. } => "affine",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VectorRegularizer {
    /// `<w, w>`
    SquaredL2,
    /// `h(<w, w>)`
    HOfNorm(HKind),
    /// `(sum |w_i|^p)^(1/p)`; `p = 0` counts the support.
    LpNorm { p: f64 },
}

/// Whether a gradient can be requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientAvailability {
    Analytic,
    NoneAtPoint,
    Nowhere,
}

impl VectorRegularizer {
    pub fn validate(&self) -> Result<()> {
        match *self {
            VectorRegularizer::LpNorm { p } if !(p >= 0.0 && p.is_finite()) => {
                Err(Error::InvalidSpec(format!("lp_norm needs finite p >= 0, got {p}")))
            }
            VectorRegularizer::HOfNorm(HKind::Affine { a, b }) if !(a.is_finite() && b.is_finite()) => {
                Err(Error::InvalidSpec("affine h needs finite a, b".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            VectorRegularizer::SquaredL2 => "squared_l2".into(),
            VectorRegularizer::HOfNorm(HKind::Affine { a, b }) => format!("h_of_norm(affine {a},{b})"),
            VectorRegularizer::HOfNorm(h) => format!("h_of_norm({})", h.name()),
            VectorRegularizer::LpNorm { p } => format!("lp_norm({p})"),
        }
    }

    /// The catalog's own admissibility claim, independent of any check.
    pub fn claimed_admissible(&self) -> bool {
        match *self {
            VectorRegularizer::SquaredL2 => true,
            VectorRegularizer::HOfNorm(h) => h.is_nondecreasing(),
            VectorRegularizer::LpNorm { p } => p == 2.0,
        }
    }

    pub fn eval(&self, w: &Vector) -> f64 {
        match *self {
            VectorRegularizer::SquaredL2 => w.norm_squared(),
            VectorRegularizer::HOfNorm(h) => h.apply(w.norm_squared()),
            VectorRegularizer::LpNorm { p } => lp_value(w.iter().map(|x| x.abs()), p),
        }
    }

    pub fn gradient_availability(&self, w: &Vector) -> GradientAvailability {
        match self.grad(w) {
            Ok(_) => GradientAvailability::Analytic,
            Err(_) => GradientAvailability::NoneAtPoint,
        }
    }

    pub fn grad(&self, w: &Vector) -> Result<Vector> {
        match *self {
            VectorRegularizer::SquaredL2 => Ok(w * 2.0),
            VectorRegularizer::HOfNorm(h) => {
                let xi = w.norm_squared();
                let dh = h
                    .derivative(xi)
                    .ok_or_else(|| Error::NonDifferentiablePoint(format!("h = {} at <w,w> = {xi}", h.name())))?;
                Ok(w * (2.0 * dh))
            }
            VectorRegularizer::LpNorm { p } => lp_grad(w.as_slice(), p).map(Vector::from_vec),
        }
    }
}

/// `(sum x_i^p)^(1/p)` of nonnegative entries; `p = 0` counts entries above
/// the rank tolerance relative to the largest one.
pub(crate) fn lp_value(values: impl Iterator<Item = f64> + Clone, p: f64) -> f64 {
    let max = values.clone().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    if p == 0.0 {
        return values.filter(|&x| x > RANK_TOL * max).count() as f64;
    }
    let sum: f64 = values.map(|x| (x / max).powf(p)).sum();
    max * sum.powf(1.0 / p)
}

fn lp_grad(w: &[f64], p: f64) -> Result<Vec<f64>> {
    let max = w.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return Err(Error::NonDifferentiablePoint("lp_norm at w = 0".into()));
    }
    if p <= 1.0 && w.iter().any(|x| x.abs() <= GRAD_ZERO_TOL * max) {
        return Err(Error::NonDifferentiablePoint(format!("lp_norm(p={p}) with a zero coordinate")));
    }
    if p == 0.0 {
        return Ok(vec![0.0; w.len()]);
    }
    let norm = lp_value(w.iter().map(|x| x.abs()), p);
    Ok(w.iter().map(|&x| x.signum() * (x.abs() / norm).powf(p - 1.0)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixKind {
    /// `||W||_F`
    Frobenius,
    /// `trace(W^T W)`
    FrobeniusSquared,
    /// Sum of singular values.
    TraceNorm,
    /// `trace (W^T W + eps I)^(1/2)`
    SmoothedTraceNorm { eps: f64 },
    /// p-norm of the singular values; `p = 0` is the rank.
    Schatten { p: f64 },
    Rank,
    /// `||W M||_p` for symmetric `M`.
    ScaledSchatten { p: f64, m: Mat },
    /// Minimum over partitions of the tasks into `k` groups of the summed
    /// trace norms of the column submatrices.
    PartitionMinTrace { k: usize },
    /// `sum_t ||w_t - mean||^2`
    TaskVariance,
    /// `(sum_i ||row_i||_p^q)^(1/q)`
    MixedNorm { p: f64, q: f64 },
}

impl MatrixKind {
    pub fn name(&self) -> &'static str {
        match self {
            MatrixKind::Frobenius => "frobenius",
            MatrixKind::FrobeniusSquared => "frobenius_squared",
            MatrixKind::TraceNorm => "trace_norm",
            MatrixKind::SmoothedTraceNorm { .. } => "smoothed_trace_norm",
            MatrixKind::Schatten { .. } => "schatten",
            MatrixKind::Rank => "rank",
            MatrixKind::ScaledSchatten { .. } => "scaled_schatten",
            MatrixKind::PartitionMinTrace { .. } => "partition_min_trace",
            MatrixKind::TaskVariance => "task_variance",
            MatrixKind::MixedNorm { .. } => "mixed_norm",
        }
    }
}

/// A matrix regularizer bound to its dimensions `(d, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRegularizer {
    kind: MatrixKind,
    d: usize,
    n: usize,
}

impl MatrixRegularizer {
    pub fn new(kind: MatrixKind, d: usize, n: usize) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::InvalidSpec(format!("dims must be positive, got ({d}, {n})")));
        }
        let check_p = |p: f64| {
            if p >= 0.0 && p.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("p must be finite and >= 0, got {p}")))
            }
        };
        match &kind {
            MatrixKind::Schatten { p } => check_p(*p)?,
            MatrixKind::ScaledSchatten { p, m } => {
                check_p(*p)?;
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::InvalidSpec(format!(
                        "M must be {n}x{n}, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                let asym = (m - m.transpose()).amax();
                if asym > 1e-12 * m.amax().max(1.0) {
                    return Err(Error::InvalidSpec(format!("M must be symmetric (asymmetry {asym:e})")));
                }
            }
            MatrixKind::PartitionMinTrace { k } => {
                if n > MAX_PARTITION_TASKS {
                    return Err(Error::InvalidSpec(format!(
                        "partition_min_trace supports n <= {MAX_PARTITION_TASKS}, got {n}"
                    )));
                }
                if *k == 0 || *k > n {
                    return Err(Error::InvalidSpec(format!("K must satisfy 1 <= K <= n = {n}, got {k}")));
                }
            }
            MatrixKind::SmoothedTraceNorm { eps } => {
                if !(*eps > 0.0 && eps.is_finite()) {
                    return Err(Error::InvalidSpec(format!("eps must be positive, got {eps}")));
                }
            }
            MatrixKind::MixedNorm { p, q } => {
                check_p(*p)?;
                if !(*q > 0.0 && q.is_finite()) {
                    return Err(Error::InvalidSpec(format!("q must be positive, got {q}")));
                }
            }
            _ => {}
        }
        Ok(Self { kind, d, n })
    }

    pub fn kind(&self) -> &MatrixKind {
        &self.kind
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d, self.n)
    }

    pub fn name(&self) -> String {
        match &self.kind {
            MatrixKind::Schatten { p } => format!("schatten({p})"),
            MatrixKind::ScaledSchatten { p, .. } => format!("scaled_schatten({p})"),
            MatrixKind::PartitionMinTrace { k } => format!("partition_min_trace({k})"),
            MatrixKind::SmoothedTraceNorm { eps } => format!("smoothed_trace_norm({eps:e})"),
            MatrixKind::MixedNorm { p, q } => format!("mixed_norm({p},{q})"),
            other => other.name().to_string(),
        }
    }

    pub fn claimed_admissible(&self) -> bool {
        match self.kind {
            MatrixKind::MixedNorm { p, q } => p == 2.0 && q == 2.0,
            _ => true,
        }
    }

    /// Same kind with other dimensions.
    pub fn with_dims(&self, d: usize, n: usize) -> Result<Self> {
        Self::new(self.kind.clone(), d, n)
    }

    /// Another kind with the same dimensions.
    pub fn with_kind(&self, kind: MatrixKind) -> Result<Self> {
        Self::new(kind, self.d, self.n)
    }

    fn check_dims(&self, w: &Mat) -> Result<()> {
        if w.nrows() != self.d || w.ncols() != self.n {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.d, self.n),
                got: format!("{}x{}", w.nrows(), w.ncols()),
            });
        }
        Ok(())
    }

    pub fn eval(&self, w: &Mat) -> Result<f64> {
        self.check_dims(w)?;
        Ok(eval_kind(&self.kind, w))
    }

    pub fn gradient_availability(&self, w: &Mat) -> GradientAvailability {
        match self.grad(w) {
            Ok(_) => GradientAvailability::Analytic,
            Err(Error::NotDifferentiableKind(_)) => GradientAvailability::Nowhere,
            Err(_) => GradientAvailability::NoneAtPoint,
        }
    }

    /// Gradient with respect to the Frobenius inner product.
    pub fn grad(&self, w: &Mat) -> Result<Mat> {
        self.check_dims(w)?;
        match &self.kind {
            MatrixKind::Frobenius => {
                let nrm = w.norm();
                if nrm == 0.0 {
                    return Err(Error::NonDifferentiablePoint("frobenius at W = 0".into()));
                }
                Ok(w / nrm)
            }
            MatrixKind::FrobeniusSquared => Ok(w * 2.0),
            MatrixKind::TraceNorm => schatten_grad(w, 1.0),
            MatrixKind::SmoothedTraceNorm { eps } => {
                let svd = ThinSvd::new(w);
                let scale: Vec<f64> = svd.sigma.iter().map(|s| s / (s * s + eps).sqrt()).collect();
                Ok(spectral_combine(&svd, &scale))
            }
            MatrixKind::Schatten { p } if *p == 0.0 => Err(Error::NotDifferentiableKind("rank".into())),
            MatrixKind::Schatten { p } => schatten_grad(w, *p),
            MatrixKind::Rank => Err(Error::NotDifferentiableKind("rank".into())),
            MatrixKind::ScaledSchatten { p, m } => {
                if *p == 0.0 {
                    return Err(Error::NotDifferentiableKind("scaled_schatten(0)".into()));
                }
                Ok(schatten_grad(&(w * m), *p)? * m.transpose())
            }
            MatrixKind::PartitionMinTrace { .. } => {
                Err(Error::NotDifferentiableKind("partition_min_trace".into()))
            }
            MatrixKind::TaskVariance => Ok(task_centered(w) * 2.0),
            MatrixKind::MixedNorm { p, q } => mixed_grad(w, *p, *q),
        }
    }
}

fn eval_kind(kind: &MatrixKind, w: &Mat) -> f64 {
    match kind {
        MatrixKind::Frobenius => w.norm(),
        MatrixKind::FrobeniusSquared => w.norm_squared(),
        MatrixKind::TraceNorm => crate::linalg::singular_values(w).sum(),
        MatrixKind::SmoothedTraceNorm { eps } => {
            let s = crate::linalg::singular_values(w);
            let missing = w.ncols() - s.len();
            s.iter().map(|x| (x * x + eps).sqrt()).sum::<f64>() + missing as f64 * eps.sqrt()
        }
        MatrixKind::Schatten { p } => lp_value(crate::linalg::singular_values(w).iter().copied(), *p),
        MatrixKind::Rank => numerical_rank(crate::linalg::singular_values(w).as_slice()) as f64,
        MatrixKind::ScaledSchatten { p, m } => {
            lp_value(crate::linalg::singular_values(&(w * m)).iter().copied(), *p)
        }
        MatrixKind::PartitionMinTrace { k } => partition_min_trace(w, *k),
        MatrixKind::TaskVariance => task_centered(w).norm_squared(),
        MatrixKind::MixedNorm { p, q } => {
            let rows = (0..w.nrows()).map(|i| lp_value(w.row(i).iter().map(|x| x.abs()), *p));
            lp_value(rows.collect::<Vec<_>>().into_iter(), *q)
        }
    }
}

/// `W (I - 11^T / n)`: each column minus the column mean.
fn task_centered(w: &Mat) -> Mat {
    let mean = w.column_mean();
    let mut out = w.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    out
}

/// `U diag(scale) V^T` over the thin SVD.
fn spectral_combine(svd: &ThinSvd, scale: &[f64]) -> Mat {
    let mut out = Mat::zeros(svd.u.nrows(), svd.v.nrows());
    for (i, &s) in scale.iter().enumerate() {
        if s != 0.0 {
            out += svd.u.column(i) * svd.v.column(i).transpose() * s;
        }
    }
    out
}

fn schatten_grad(w: &Mat, p: f64) -> Result<Mat> {
    let svd = ThinSvd::new(w);
    let n = w.ncols();
    let rank = svd.rank();
    if rank == 0 {
        return Err(Error::NonDifferentiablePoint("schatten norm at W = 0".into()));
    }
    if p <= 1.0 && rank < n {
        return Err(Error::NonDifferentiablePoint(format!(
            "schatten({p}) needs W^T W nonsingular (rank {rank} < n = {n})"
        )));
    }
    let norm = lp_value(svd.sigma.iter().copied(), p);
    let scale: Vec<f64> = svd
        .sigma
        .iter()
        .enumerate()
        .map(|(i, &s)| if i < rank { (s / norm).powf(p - 1.0) } else { 0.0 })
        .collect();
    Ok(spectral_combine(&svd, &scale))
}

fn mixed_grad(w: &Mat, p: f64, q: f64) -> Result<Mat> {
    if p == 0.0 {
        return Err(Error::NotDifferentiableKind("mixed_norm with p = 0".into()));
    }
    let rows: Vec<f64> = (0..w.nrows())
        .map(|i| lp_value(w.row(i).iter().map(|x| x.abs()), p))
        .collect();
    let total = lp_value(rows.iter().copied(), q);
    if total == 0.0 {
        return Err(Error::NonDifferentiablePoint("mixed_norm at W = 0".into()));
    }
    let max = w.amax();
    let mut g = Mat::zeros(w.nrows(), w.ncols());
    for i in 0..w.nrows() {
        let r = rows[i];
        if r <= GRAD_ZERO_TOL * max {
            if q <= 1.0 {
                return Err(Error::NonDifferentiablePoint(format!("mixed_norm(q={q}) with a zero row")));
            }
            continue;
        }
        let outer = (r / total).powf(q - 1.0);
        for j in 0..w.ncols() {
            let x = w[(i, j)];
            if x.abs() <= GRAD_ZERO_TOL * max {
                if p <= 1.0 {
                    return Err(Error::NonDifferentiablePoint(format!("mixed_norm(p={p}) with a zero entry")));
                }
                continue;
            }
            g[(i, j)] = outer * x.signum() * (x.abs() / r).powf(p - 1.0);
        }
    }
    Ok(g)
}

/// Visit every partition of `0..n` into exactly `k` nonempty blocks, encoded
/// as a restricted growth string (`labels[i]` is the block of element `i`).
pub fn for_each_partition(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(labels: &mut Vec<usize>, used: usize, n: usize, k: usize, visit: &mut dyn FnMut(&[usize])) {
        let i = labels.len();
        if i == n {
            if used == k {
                visit(labels);
            }
            return;
        }
        // Not enough elements left to open the missing blocks.
        if k - used.min(k) > n - i {
            return;
        }
        for b in 0..=used.min(k - 1) {
            labels.push(b);
            rec(labels, used.max(b + 1), n, k, visit);
            labels.pop();
        }
    }
    if k == 0 || k > n {
        return;
    }
    let mut labels = Vec::with_capacity(n);
    rec(&mut labels, 0, n, k, &mut visit);
}

fn partition_min_trace(w: &Mat, k: usize) -> f64 {
    let n = w.ncols();
    let mut best = f64::INFINITY;
    for_each_partition(n, k, |labels| {
        let mut total = 0.0;
        for block in 0..k {
            let cols: Vec<usize> = (0..n).filter(|&j| labels[j] == block).collect();
            let sub = w.select_columns(cols.iter());
            total += crate::linalg::singular_values(&sub).sum();
        }
        best = best.min(total);
    });
    best
}

/// `h(A) = Omega(Y A^(1/2))` with `Y = [I_n; 0]`, so that `Omega(W) = h(W^T W)`
/// for every kind that depends on `W` only through `W^T W`.
pub fn induced_h(reg: &MatrixRegularizer, a: &Mat) -> Result<f64> {
    let (d, n) = reg.dims();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    if d < 2 * n {
        return Err(Error::DimsTooSmall { d, n });
    }
    let root = psd_sqrt(a)?;
    let mut w = Mat::zeros(d, n);
    w.view_mut((0, 0), (n, n)).copy_from(&root);
    reg.eval(&w)
}

/// Either flavor of regularizer, as parsed from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegularizerJson", into = "RegularizerJson")]
pub enum RegularizerSpec {
    Vector { reg: VectorRegularizer, d: Option<usize> },
    Matrix(MatrixRegularizer),
}

impl RegularizerSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn name(&self) -> String {
        match self {
            RegularizerSpec::Vector { reg, .. } => reg.name(),
            RegularizerSpec::Matrix(reg) => reg.name(),
        }
    }

    pub fn claimed_admissible(&self) -> bool {
        match self {
            RegularizerSpec::Vector { reg, .. } => reg.claimed_admissible(),
            RegularizerSpec::Matrix(reg) => reg.claimed_admissible(),
        }
    }
}

/// Flat JSON layout: `{"kind": "schatten", "p": 1.0, "d": 6, "n": 3}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerJson {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl TryFrom<RegularizerJson> for RegularizerSpec {
    type Error = Error;

    fn try_from(j: RegularizerJson) -> Result<Self> {
        let need_p = || j.p.ok_or_else(|| Error::InvalidSpec(format!("`{}` needs `p`", j.kind)));
        let dims = || -> Result<(usize, usize)> {
            match (j.d, j.n) {
                (Some(d), Some(n)) => Ok((d, n)),
                _ => Err(Error::InvalidSpec(format!("`{}` needs `d` and `n`", j.kind))),
            }
        };
        let vector = |reg: VectorRegularizer| -> Result<Self> {
            if j.n.is_some() {
                return Err(Error::InvalidSpec(format!("`{}` is a vector regularizer; `n` not allowed", j.kind)));
            }
            reg.validate()?;
            Ok(RegularizerSpec::Vector { reg, d: j.d })
        };
        let matrix = |kind: MatrixKind| -> Result<Self> {
            let (d, n) = dims()?;
            Ok(RegularizerSpec::Matrix(MatrixRegularizer::new(kind, d, n)?))
        };
        match j.kind.as_str() {
            "squared_l2" => vector(VectorRegularizer::SquaredL2),
            "h_of_norm" => {
                let h = match j.h.as_deref() {
                    Some("identity") => HKind::Identity,
                    Some("sqrt") => HKind::Sqrt,
                    Some("square") => HKind::Square,
                    Some("exp") => HKind::Exp,
                    Some("affine") => HKind::Affine {
                        a: j.a.ok_or_else(|| Error::InvalidSpec("affine h needs `a`".into()))?,
                        b: j.b.unwrap_or(0.0),
                    },
                    Some(other) => return Err(Error::InvalidSpec(format!("unknown h `{other}`"))),
                    None => return Err(Error::InvalidSpec("`h_of_norm` needs `h`".into())),
                };
                vector(VectorRegularizer::HOfNorm(h))
            }
            "lp_norm" => vector(VectorRegularizer::LpNorm { p: need_p()? }),
            "frobenius" => matrix(MatrixKind::Frobenius),
            "frobenius_squared" => matrix(MatrixKind::FrobeniusSquared),
            "trace_norm" => matrix(MatrixKind::TraceNorm),
            "smoothed_trace_norm" => matrix(MatrixKind::SmoothedTraceNorm {
                eps: j.eps.unwrap_or(DEFAULT_SMOOTHING),
            }),
            "schatten" => matrix(MatrixKind::Schatten { p: need_p()? }),
            "rank" => matrix(MatrixKind::Rank),
            "scaled_schatten" => {
                let rows = j
                    .m
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("`scaled_schatten` needs `M`".into()))?;
                let m = crate::linalg::from_rows(rows).ok_or_else(|| Error::InvalidSpec("ragged `M`".into()))?;
                matrix(MatrixKind::ScaledSchatten { p: need_p()?, m })
            }
            "partition_min_trace" => matrix(MatrixKind::PartitionMinTrace {
                k: j.k.ok_or_else(|| Error::InvalidSpec("`partition_min_trace` needs `K`".into()))?,
            }),
            "task_variance" => matrix(MatrixKind::TaskVariance),
            "mixed_norm" => matrix(MatrixKind::MixedNorm {
                p: need_p()?,
                q: j.q.ok_or_else(|| Error::InvalidSpec("`mixed_norm` needs `q`".into()))?,
            }),
            other => Err(Error::InvalidSpec(format!("unknown regularizer kind `{other}`"))),
        }
    }
}

impl From<RegularizerSpec> for RegularizerJson {
    fn from(spec: RegularizerSpec) -> Self {
        match spec {
            RegularizerSpec::Vector { reg, d } => {
                let mut j = RegularizerJson { d, ..Default::default() };
                match reg {
                    VectorRegularizer::SquaredL2 => j.kind = "squared_l2".into(),
                    VectorRegularizer::HOfNorm(h) => {
                        j.kind = "h_of_norm".into();
                        j.h = Some(h.name().into());
                        if let HKind::Affine { a, b } = h {
                            j.a = Some(a);
                            j.b = Some(b);
                        }
                    }
                    VectorRegularizer::LpNorm { p } => {
                        j.kind = "lp_norm".into();
                        j.p = Some(p);
                    }
                }
                j
            }
            RegularizerSpec::Matrix(reg) => {
                let (d, n) = reg.dims();
                let mut j = RegularizerJson {
                    kind: reg.kind().name().into(),
                    d: Some(d),
                    n: Some(n),
                    ..Default::default()
                };
                match reg.kind() {
                    MatrixKind::SmoothedTraceNorm { eps } => j.eps = Some(*eps),
                    MatrixKind::Schatten { p } => j.p = Some(*p),
                    MatrixKind::ScaledSchatten { p, m } => {
                        j.p = Some(*p);
                        j.m = Some(crate::linalg::to_rows(m));
                    }
                    MatrixKind::PartitionMinTrace { k } => j.k = Some(*k),
                    MatrixKind::MixedNorm { p, q } => {
                        j.p = Some(*p);
                        j.q = Some(*q);
                    }
                    _ => {}
                }
                j
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn mreg(kind: MatrixKind, d: usize, n: usize) -> MatrixRegularizer {
        MatrixRegularizer::new(kind, d, n).unwrap()
    }

    #[test]
    fn vector_eval_examples() {
        assert_eq!(VectorRegularizer::SquaredL2.eval(&v(&[3.0, 4.0])), 25.0);
        assert_eq!(VectorRegularizer::LpNorm { p: 1.0 }.eval(&v(&[2.0, 1.0])), 3.0);
        assert_eq!(VectorRegularizer::LpNorm { p: 0.0 }.eval(&v(&[2.0, 0.0, -1.0])), 2.0);
    }

    #[test]
    fn lp4_uses_norm_form() {
        // Scalar oracle: fourth root of the sum of fourth powers.
        let (a, b) = (0.28411_f64, 0.35797_f64);
        let power_form = a.powi(4) + b.powi(4);
        let expected = power_form.sqrt().sqrt();
        let got = VectorRegularizer::LpNorm { p: 4.0 }.eval(&v(&[a, b]));
        assert!((got - expected).abs() < 1e-14);
        assert!((power_form - 0.0229360).abs() < 1e-7);
        assert!((got - 0.389161).abs() < 1e-6);
    }

    #[test]
    fn vector_grad_examples() {
        let g = VectorRegularizer::SquaredL2.grad(&v(&[1.0, 2.0])).unwrap();
        assert_eq!(g, v(&[2.0, 4.0]));
        let g = VectorRegularizer::LpNorm { p: 2.0 }.grad(&v(&[3.0, 4.0])).unwrap();
        assert!((g - v(&[0.6, 0.8])).norm() < 1e-15);
    }

    #[test]
    fn lp_grad_nondifferentiable_at_zero_coordinate() {
        let err = VectorRegularizer::LpNorm { p: 1.0 }.grad(&v(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::NonDifferentiablePoint(_)));
        assert!(VectorRegularizer::LpNorm { p: 4.0 }.grad(&v(&[1.0, 0.0])).is_ok());
        assert!(VectorRegularizer::HOfNorm(HKind::Sqrt).grad(&v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn claimed_admissibility_flags() {
        assert!(VectorRegularizer::HOfNorm(HKind::Exp).claimed_admissible());
        assert!(!VectorRegularizer::HOfNorm(HKind::Affine { a: -1.0, b: 0.0 }).claimed_admissible());
        assert!(VectorRegularizer::LpNorm { p: 2.0 }.claimed_admissible());
        assert!(!VectorRegularizer::LpNorm { p: 1.0 }.claimed_admissible());
        assert!(!mreg(MatrixKind::MixedNorm { p: 2.0, q: 1.0 }, 3, 2).claimed_admissible());
        assert!(mreg(MatrixKind::MixedNorm { p: 2.0, q: 2.0 }, 3, 2).claimed_admissible());
        assert!(mreg(MatrixKind::Rank, 3, 2).claimed_admissible());
    }

    #[test]
    fn matrix_eval_examples() {
        let w = Mat::from_row_slice(3, 2, &[3.0, 0.0, 0.0, 4.0, 0.0, 0.0]);
        assert!((mreg(MatrixKind::TraceNorm, 3, 2).eval(&w).unwrap() - 7.0).abs() < 1e-12);
        let same = Mat::from_row_slice(3, 2, &[1.0, 1.0, -2.0, -2.0, 0.5, 0.5]);
        assert_eq!(mreg(MatrixKind::TaskVariance, 3, 2).eval(&same).unwrap(), 0.0);
        let col = Mat::from_row_slice(2, 1, &[2.0, 1.0]);
        let mixed = mreg(MatrixKind::MixedNorm { p: 2.0, q: 1.0 }, 2, 1);
        assert!((mixed.eval(&col).unwrap() - 3.0).abs() < 1e-15);
        let bad = Mat::zeros(2, 2);
        assert!(matches!(mixed.eval(&bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn matrix_grad_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = gaussian_matrix(&mut rng, 4, 3);
        let g = mreg(MatrixKind::FrobeniusSquared, 4, 3).grad(&w).unwrap();
        assert!((g - &w * 2.0).norm() < 1e-15);
        let w = Mat::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        let g = mreg(MatrixKind::TraceNorm, 3, 2).grad(&w).unwrap();
        let expected = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!((g - expected).norm() < 1e-12);
    }

    #[test]
    fn gradient_availability_reports() {
        let w = Mat::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let tn = mreg(MatrixKind::TraceNorm, 3, 2);
        assert_eq!(tn.gradient_availability(&w), GradientAvailability::NoneAtPoint);
        assert_eq!(mreg(MatrixKind::Rank, 3, 2).gradient_availability(&w), GradientAvailability::Nowhere);
        let pm = mreg(MatrixKind::PartitionMinTrace { k: 1 }, 3, 2);
        assert!(matches!(pm.grad(&w), Err(Error::NotDifferentiableKind(_))));
        let full = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert_eq!(tn.gradient_availability(&full), GradientAvailability::Analytic);
    }

    #[test]
    fn induced_h_examples() {
        let a = Mat::from_diagonal(&v(&[1.0, 4.0]));
        let fro = mreg(MatrixKind::Frobenius, 4, 2);
        assert!((induced_h(&fro, &a).unwrap() - 5f64.sqrt()).abs() < 1e-12);
        let tn = mreg(MatrixKind::TraceNorm, 4, 2);
        assert!((induced_h(&tn, &a).unwrap() - 3.0).abs() < 1e-12);
        let m = Mat::from_diagonal(&v(&[1.0, 2.0]));
        let ss = mreg(MatrixKind::ScaledSchatten { p: 2.0, m }, 4, 2);
        assert!((induced_h(&ss, &Mat::identity(2, 2)).unwrap() - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn induced_h_errors() {
        let tn = mreg(MatrixKind::TraceNorm, 3, 2);
        assert!(matches!(
            induced_h(&tn, &Mat::identity(2, 2)),
            Err(Error::DimsTooSmall { d: 3, n: 2 })
        ));
        let tn = mreg(MatrixKind::TraceNorm, 4, 2);
        let neg = Mat::from_diagonal(&v(&[1.0, -1.0]));
        assert!(matches!(induced_h(&tn, &neg), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn partition_counts_are_stirling_numbers() {
        let count = |n, k| {
            let mut c = 0;
            for_each_partition(n, k, |_| c += 1);
            c
        };
        assert_eq!(count(4, 2), 7);
        assert_eq!(count(5, 3), 25);
        assert_eq!(count(8, 4), 1701);
        assert_eq!(count(3, 1), 1);
        assert_eq!(count(3, 4), 0);
    }

    #[test]
    fn partition_min_trace_examples() {
        // Two orthogonal task pairs: grouping them is better than one block.
        let w = Mat::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let k2 = mreg(MatrixKind::PartitionMinTrace { k: 2 }, 2, 4);
        assert!((k2.eval(&w).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        let k1 = mreg(MatrixKind::PartitionMinTrace { k: 1 }, 2, 4);
        let tn = mreg(MatrixKind::TraceNorm, 2, 4);
        assert!((k1.eval(&w).unwrap() - tn.eval(&w).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        assert!(MatrixRegularizer::new(MatrixKind::PartitionMinTrace { k: 2 }, 9, 9).is_err());
        assert!(MatrixRegularizer::new(MatrixKind::PartitionMinTrace { k: 4 }, 9, 3).is_err());
        let asym = Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(MatrixRegularizer::new(MatrixKind::ScaledSchatten { p: 1.0, m: asym }, 4, 2).is_err());
        assert!(MatrixRegularizer::new(MatrixKind::Schatten { p: -1.0 }, 4, 2).is_err());
        assert!(VectorRegularizer::LpNorm { p: -0.5 }.validate().is_err());
    }

    #[test]
    fn json_parsing() {
        let spec = RegularizerSpec::from_json_str(r#"{"kind":"schatten","p":1.0,"d":6,"n":3}"#).unwrap();
        assert_eq!(
            spec,
            RegularizerSpec::Matrix(mreg(MatrixKind::Schatten { p: 1.0 }, 6, 3))
        );
        let spec = RegularizerSpec::from_json_str(r#"{"kind":"lp_norm","p":2}"#).unwrap();
        assert_eq!(
            spec,
            RegularizerSpec::Vector { reg: VectorRegularizer::LpNorm { p: 2.0 }, d: None }
        );
        let spec =
            RegularizerSpec::from_json_str(r#"{"kind":"scaled_schatten","p":2,"M":[[1,0],[0,2]],"d":4,"n":2}"#)
                .unwrap();
        assert!(matches!(spec, RegularizerSpec::Matrix(_)));
        assert!(RegularizerSpec::from_json_str(r#"{"kind":"trace_norm","d":6,"n":3,"bogus":1}"#).is_err());
        assert!(RegularizerSpec::from_json_str(r#"{"kind":"nope"}"#).is_err());
        assert!(RegularizerSpec::from_json_str(r#"{"kind":"trace_norm","d":6}"#).is_err());
        assert!(RegularizerSpec::from_json_str(r#"{"kind":"h_of_norm","h":"exp","n":2}"#).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let text = r#"{"kind":"mixed_norm","p":2.0,"q":1.0,"d":3,"n":2}"#;
        let spec = RegularizerSpec::from_json_str(text).unwrap();
        let back = serde_json::to_string(&spec).unwrap();
        assert_eq!(RegularizerSpec::from_json_str(&back).unwrap(), spec);
        let text = r#"{"kind":"h_of_norm","h":"affine","a":2.0,"b":-1.0}"#;
        let spec = RegularizerSpec::from_json_str(text).unwrap();
        let back = serde_json::to_string(&spec).unwrap();
        assert_eq!(RegularizerSpec::from_json_str(&back).unwrap(), spec);
    }
}
