//! Matrix constructions behind the characterization proofs: rotations
//! connecting two vectors of equal norm, their skew-symmetric logarithms,
//! the norm-preserving paths `z(lambda)` and `Z(lambda)`, orthonormal
//! completion and PSD square roots.

use nalgebra::linalg::Schur;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, singular_values, sym_apply, sym_eigen, Mat, ThinSvd, Vector};

/// Tolerance on `U^T U = I` and `det U = 1`.
pub const SO_TOL: f64 = 1e-10;

/// Seed used where a construction needs a completion but the caller has no
/// reason to choose one.
const CANONICAL_SEED: u64 = 0;

/// A rotation: orthogonal with determinant one.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialOrthogonal(Mat);

impl SpecialOrthogonal {
    pub fn new(u: Mat) -> Result<Self> {
        if !u.is_square() {
            return Err(Error::NotSpecialOrthogonal { orthogonality: f64::INFINITY, det: f64::NAN });
        }
        let n = u.nrows();
        let orthogonality = (u.transpose() * &u - Mat::identity(n, n)).amax();
        let det = u.determinant();
        if orthogonality > SO_TOL || (det - 1.0).abs() > SO_TOL {
            return Err(Error::NotSpecialOrthogonal { orthogonality, det });
        }
        Ok(Self(u))
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }
}

/// A skew-symmetric generator `D = -D^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewSymmetric(Mat);

impl SkewSymmetric {
    pub fn new(d: Mat) -> Result<Self> {
        if !d.is_square() {
            return Err(Error::InvalidArgument("skew-symmetric matrix must be square".into()));
        }
        let defect = (&d + d.transpose()).amax();
        if defect > 1e-12 * d.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!("D + D^T = {defect:e}, not skew-symmetric")));
        }
        Ok(Self((&d - d.transpose()) * 0.5))
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }
}

/// Columns completing the orthonormal columns of `b` (d x k) to an
/// orthonormal basis of `R^d`, by Gram-Schmidt on seeded Gaussian vectors.
pub fn orthonormal_completion(b: &Mat, seed: u64) -> Result<Mat> {
    let (d, k) = b.shape();
    if k > d {
        return Err(Error::NotOrthonormalInput(f64::INFINITY));
    }
    let defect = (b.transpose() * b - Mat::identity(k, k)).amax();
    if defect > 1e-10 {
        return Err(Error::NotOrthonormalInput(defect));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vector> = b.column_iter().map(|c| c.into_owned()).collect();
    let mut out = Vec::with_capacity(d - k);
    while out.len() < d - k {
        let mut x = gaussian_vector(&mut rng, d);
        let start = x.norm();
        for _ in 0..2 {
            for q in basis.iter() {
                x -= q * q.dot(&x);
            }
        }
        let nrm = x.norm();
        if nrm < 1e-6 * start {
            continue;
        }
        let x = x / nrm;
        basis.push(x.clone());
        out.push(x);
    }
    Ok(if out.is_empty() { Mat::zeros(d, 0) } else { Mat::from_columns(&out) })
}

/// Uniformly random rotation of `R^d` (QR of a Gaussian matrix, signs fixed).
pub fn random_special_orthogonal<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> SpecialOrthogonal {
    let g = crate::linalg::gaussian_matrix(rng, d, d);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    SpecialOrthogonal(q)
}

/// A rotation `U` with `U w = v`, which exists iff `||w|| = ||v||`.
///
/// Orthonormal bases `(w/|w|, x_1..)` and `(v/|v|, z_1..)` are completed and
/// `U = S R^T`; when the determinant comes out negative the last `z` is negated.
pub fn rotation_between(w: &Vector, v: &Vector) -> Result<SpecialOrthogonal> {
    let d = w.len();
    if v.len() != d {
        return Err(Error::DimensionMismatch { expected: d.to_string(), got: v.len().to_string() });
    }
    if d < 2 {
        return Err(Error::DimTooSmall(d));
    }
    let (nw, nv) = (w.norm(), v.norm());
    if (nw - nv).abs() > 1e-10 * nw.max(1.0) {
        return Err(Error::NormMismatch { left: nw, right: nv });
    }
    if nw == 0.0 {
        return Err(Error::ZeroVector);
    }
    let basis_around = |x: &Vector| -> Result<Mat> {
        let unit = Mat::from_column_slice(d, 1, (x / x.norm()).as_slice());
        let comp = orthonormal_completion(&unit, CANONICAL_SEED)?;
        let mut full = Mat::zeros(d, d);
        full.set_column(0, &unit.column(0));
        full.view_mut((0, 1), (d, d - 1)).copy_from(&comp);
        Ok(full)
    };
    let r = basis_around(w)?;
    let mut s = basis_around(v)?;
    let mut u = &s * r.transpose();
    if u.determinant() < 0.0 {
        s.column_mut(d - 1).neg_mut();
        u = &s * r.transpose();
    }
    Ok(SpecialOrthogonal(u))
}

/// Matrix exponential of a skew-symmetric generator by scaling and squaring
/// of a Taylor series.
pub fn exp_skew(d: &SkewSymmetric) -> SpecialOrthogonal {
    SpecialOrthogonal(expm(d.matrix()))
}

pub(crate) fn expm(a: &Mat) -> Mat {
    let n = a.nrows();
    let norm1 = (0..n).map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scaled_norm = norm1;
    while scaled_norm > 0.25 {
        scaled_norm *= 0.5;
        squarings += 1;
    }
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = Mat::identity(n, n);
    let mut sum = Mat::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Principal logarithm of a rotation: rotation angles in `(-pi, pi]`.
///
/// Uses the real Schur form `U = Q T Q^T`; for an orthogonal `U` the form is
/// block diagonal with 2x2 rotation blocks and `+-1` entries. The `-1` entries
/// come in pairs (det = 1) and are paired into angle-`pi` blocks.
pub fn special_orthogonal_log(u: &SpecialOrthogonal) -> SkewSymmetric {
    let n = u.0.nrows();
    let (q, t) = Schur::new(u.0.clone()).unpack();
    let mut log_t = Mat::zeros(n, n);
    let mut negatives = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > 1e-13 {
            let sin = 0.5 * (t[(i + 1, i)] - t[(i, i + 1)]);
            let cos = 0.5 * (t[(i, i)] + t[(i + 1, i + 1)]);
            let theta = sin.atan2(cos);
            log_t[(i, i + 1)] = -theta;
            log_t[(i + 1, i)] = theta;
            i += 2;
        } else {
            if t[(i, i)] < 0.0 {
                negatives.push(i);
            }
            i += 1;
        }
    }
    // Validated input has det 1, so the count is even.
    for pair in negatives.chunks_exact(2) {
        let (a, b) = (pair[0], pair[1]);
        log_t[(a, b)] = -std::f64::consts::PI;
        log_t[(b, a)] = std::f64::consts::PI;
    }
    let d = &q * log_t * q.transpose();
    SkewSymmetric((&d - d.transpose()) * 0.5)
}

/// Symmetric PSD square root by eigendecomposition; eigenvalues down to
/// `-1e-10 * max(1, |lambda_max|)` are clamped to zero.
pub fn psd_sqrt(a: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let scale = a.amax().max(1.0);
    let asym = (a - a.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::InvalidArgument(format!("matrix is not symmetric (asymmetry {asym:e})")));
    }
    let (vals, _) = sym_eigen(a);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(0.0_f64, |m, x| m.max(x.abs()));
    if min < -1e-10 * max.max(1.0) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(sym_apply(a, |x| x.max(0.0).sqrt()))
}

/// The path `z(lambda) = ||w|| e^(lambda D) w0` joining `||w|| w0` to `w`
/// along a sphere.
#[derive(Debug, Clone)]
pub struct VectorPath {
    norm: f64,
    w0: Vector,
    generator: SkewSymmetric,
}

impl VectorPath {
    pub fn new(w: &Vector, w0: &Vector) -> Result<Self> {
        if w.len() < 2 {
            return Err(Error::DimTooSmall(w.len()));
        }
        if (w0.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("w0 must be a unit vector, |w0| = {}", w0.norm())));
        }
        let norm = w.norm();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        let u = rotation_between(&(w0 * norm), w)?;
        Ok(Self { norm, w0: w0.clone(), generator: special_orthogonal_log(&u) })
    }

    pub fn at(&self, lambda: f64) -> Vector {
        expm(&(self.generator.matrix() * lambda)) * &self.w0 * self.norm
    }

    pub fn generator(&self) -> &SkewSymmetric {
        &self.generator
    }
}

pub fn vector_proof_path(w: &Vector, w0: &Vector, lambda: f64) -> Result<Vector> {
    Ok(VectorPath::new(w, w0)?.at(lambda))
}

/// The path `Z(lambda) = s1 R e^(lambda D) e1 v1^T + sum_{i>=2} s_i u_i v_i^T`
/// that swings the leading left singular vector of `W` onto `z` while keeping
/// the singular values, the right singular vectors and `u_2..u_r` fixed.
#[derive(Debug, Clone)]
pub struct MatrixPath {
    sigma1: f64,
    v1: Vector,
    /// `(u_1, u_{r+1}, .., u_d)`
    frame: Mat,
    generator: SkewSymmetric,
    rest: Mat,
}

impl MatrixPath {
    pub fn new(w: &Mat, z: &Vector, seed: u64) -> Result<Self> {
        let d = w.nrows();
        if z.len() != d {
            return Err(Error::DimensionMismatch { expected: d.to_string(), got: z.len().to_string() });
        }
        if (z.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("z must be a unit vector, |z| = {}", z.norm())));
        }
        let svd = ThinSvd::new(w);
        let r = svd.rank();
        if r == 0 {
            return Err(Error::RankZero);
        }
        let u_r = svd.u.columns(0, r).into_owned();
        let defect = (1..r).map(|i| u_r.column(i).dot(z).abs()).fold(0.0, f64::max);
        if defect > 1e-9 {
            return Err(Error::NotOrthogonalToFrame(defect));
        }
        let k = d - r + 1;
        if k < 2 {
            return Err(Error::DimTooSmall(k));
        }
        let comp = orthonormal_completion(&u_r, seed)?;
        let mut frame = Mat::zeros(d, k);
        frame.set_column(0, &u_r.column(0));
        frame.view_mut((0, 1), (d, k - 1)).copy_from(&comp);
        let q = frame.transpose() * z;
        let mut e1 = Vector::zeros(k);
        e1[0] = 1.0;
        let rot = rotation_between(&e1, &(&q / q.norm()))?;
        let mut rest = Mat::zeros(d, w.ncols());
        for i in 1..r {
            rest += svd.u.column(i) * svd.v.column(i).transpose() * svd.sigma[i];
        }
        Ok(Self {
            sigma1: svd.sigma[0],
            v1: svd.v.column(0).into_owned(),
            frame,
            generator: special_orthogonal_log(&rot),
            rest,
        })
    }

    pub fn at(&self, lambda: f64) -> Mat {
        let rot = expm(&(self.generator.matrix() * lambda));
        let lead = &self.frame * rot.column(0);
        &lead * self.v1.transpose() * self.sigma1 + &self.rest
    }
}

pub fn matrix_proof_path(w: &Mat, z: &Vector, lambda: f64) -> Result<Mat> {
    Ok(MatrixPath::new(w, z, CANONICAL_SEED)?.at(lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceNormComparison {
    pub base: f64,
    pub perturbed: f64,
    pub holds: bool,
}

/// Compares `||W||_1` with `||W + P||_1` for `W^T P = 0`.
pub fn tracenorm_monotone_check(w: &Mat, p: &Mat) -> Result<TraceNormComparison> {
    if w.shape() != p.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", w.nrows(), w.ncols()),
            got: format!("{}x{}", p.nrows(), p.ncols()),
        });
    }
    let cross = (w.transpose() * p).norm();
    if cross > 1e-9 * (w.norm() * p.norm() + 1.0) {
        return Err(Error::NotOrthogonal(cross));
    }
    let base = singular_values(w).sum();
    let perturbed = singular_values(&(w + p)).sum();
    Ok(TraceNormComparison { base, perturbed, holds: perturbed >= base - 1e-9 })
}
