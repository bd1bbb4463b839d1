//! Dense linear-algebra helpers shared by every module.
//!
//! All rank decisions go through [`RANK_TOL`]: a singular value `s` counts as
//! nonzero iff `s > RANK_TOL * s_max`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Thin SVD with singular values sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// d x k left singular vectors.
    pub u: Mat,
    /// k singular values, decreasing.
    pub sigma: Vector,
    /// n x k right singular vectors.
    pub v: Mat,
}

impl ThinSvd {
    pub fn new(a: &Mat) -> Self {
        let k = a.nrows().min(a.ncols());
        if k == 0 {
            return Self {
                u: Mat::zeros(a.nrows(), 0),
                sigma: Vector::zeros(0),
                v: Mat::zeros(a.ncols(), 0),
            };
        }
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let sigma = Vector::from_iterator(k, order.iter().map(|&i| svd.singular_values[i]));
        let u = Mat::from_fn(a.nrows(), k, |r, c| u[(r, order[c])]);
        let v = Mat::from_fn(a.ncols(), k, |r, c| v_t[(order[c], r)]);
        Self { u, sigma, v }
    }

    pub fn rank(&self) -> usize {
        numerical_rank(self.sigma.as_slice())
    }
}

/// Singular values in decreasing order.
pub fn singular_values(a: &Mat) -> Vector {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vector::zeros(0);
    }
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Vector::from_vec(s)
}

/// Number of singular values above `RANK_TOL * s_max`.
pub fn numerical_rank(sigma: &[f64]) -> usize {
    let smax = sigma.iter().copied().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Orthonormal basis (d x r) of the column span of `a`.
pub fn column_span_basis(a: &Mat) -> Mat {
    let svd = ThinSvd::new(a);
    let r = svd.rank();
    svd.u.columns(0, r).into_owned()
}

/// Orthonormal basis of the null space of `a` (ncols x (ncols - rank)).
///
/// Built from the eigenvectors of `I - V_r V_r^T` with eigenvalue one, so the
/// result is a deterministic function of `a`.
pub fn null_space_basis(a: &Mat) -> Mat {
    let d = a.ncols();
    let row_basis = column_span_basis(&a.transpose());
    let r = row_basis.ncols();
    if r == d {
        return Mat::zeros(d, 0);
    }
    if r == 0 {
        return Mat::identity(d, d);
    }
    let comp = Mat::identity(d, d) - &row_basis * row_basis.transpose();
    let (vals, vecs) = sym_eigen(&comp);
    let cols: Vec<usize> = (0..d).filter(|&i| vals[i] > 0.5).collect();
    let mut basis = Mat::from_fn(d, cols.len(), |i, j| vecs[(i, cols[j])]);
    // One Gram-Schmidt pass against the row space removes eigen-solver noise.
    for j in 0..basis.ncols() {
        let mut col = basis.column(j).into_owned();
        col -= &row_basis * (row_basis.transpose() * &col);
        for k in 0..j {
            let prev = basis.column(k).into_owned();
            col -= &prev * prev.dot(&col);
        }
        let nrm = col.norm();
        basis.set_column(j, &(col / nrm));
    }
    basis
}

/// Moore-Penrose pseudoinverse with the shared rank tolerance.
pub fn pinv(a: &Mat) -> Mat {
    let svd = ThinSvd::new(a);
    let r = svd.rank();
    let mut out = Mat::zeros(a.ncols(), a.nrows());
    for i in 0..r {
        let vi = svd.v.column(i);
        let ui = svd.u.column(i);
        out += (vi * ui.transpose()) / svd.sigma[i];
    }
    out
}

/// Symmetric eigendecomposition with eigenvalues in increasing order.
pub fn sym_eigen(a: &Mat) -> (Vector, Mat) {
    let n = a.nrows();
    let sym = symmetrize(a);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = Mat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn min_eigenvalue(a: &Mat) -> f64 {
    let (vals, _) = sym_eigen(a);
    vals.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Apply `f` to the eigenvalues of a symmetric matrix.
pub fn sym_apply(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (vals, vecs) = sym_eigen(a);
    let scaled = Mat::from_fn(vecs.nrows(), vecs.ncols(), |r, c| vecs[(r, c)] * f(vals[c]));
    symmetrize(&(scaled * vecs.transpose()))
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `(I - W W^+) P`: removes from the columns of `P` their component in the
/// column span of `W`, so that `W^T P = 0`. Applied twice for accuracy.
pub fn project_out_span(w: &Mat, p: &Mat) -> Mat {
    let basis = column_span_basis(w);
    let mut out = p.clone();
    for _ in 0..2 {
        out -= &basis * (basis.transpose() * &out);
    }
    out
}

/// Row-major nested vectors, the JSON layout for matrices.
pub fn to_rows(a: &Mat) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

/// Inverse of [`to_rows`]; `None` if the rows are ragged.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Serde adapter writing a matrix as row-major nested arrays.
pub mod serde_rows {
    use super::{from_rows, to_rows, Mat};
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).ok_or_else(|| D::Error::custom("ragged matrix rows"))
    }
}

/// Serde adapter for a vector as a flat array.
pub mod serde_vec {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_is_orthogonal_to_rows() {
        let a = Mat::from_row_slice(2, 4, &[1.0, 2.0, 0.0, -1.0, 0.0, 1.0, 1.0, 3.0]);
        let n = null_space_basis(&a);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).norm() < 1e-12);
        assert!((n.transpose() * &n - Mat::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn pinv_of_row_vector() {
        let a = Mat::from_row_slice(1, 2, &[1.0, 2.0]);
        let p = pinv(&a);
        assert!((p[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((p[(1, 0)] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rank_of_rank_one() {
        let u = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let v = Vector::from_vec(vec![1.0, -1.0]);
        let a = &u * v.transpose();
        assert_eq!(ThinSvd::new(&a).rank(), 1);
        assert_eq!(column_span_basis(&a).ncols(), 1);
    }

    #[test]
    fn rows_roundtrip() {
        let a = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(from_rows(&to_rows(&a)).unwrap(), a);
        assert!(from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_none());
    }
}
