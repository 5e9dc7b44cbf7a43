//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Full SVD factors (`U`, singular values, `Vᵀ`) of a matrix padded with zero
/// rows to at least square shape, so that `Vᵀ` is `n × n`.
fn full_svd(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    (svd.singular_values, svd.v_t.expect("requested V"))
}

/// Orthonormal basis (as columns) of the null space of `a`, with singular
/// values below `rtol · σ_max` treated as zero.
pub fn null_space(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return DMatrix::identity(n, n);
    }
    let (sv, vt) = full_svd(a);
    let smax = sv.iter().fold(0.0f64, |x, y| x.max(*y));
    let cols: Vec<usize> = (0..n).filter(|&i| smax == 0.0 || sv[i] <= rtol * smax).collect();
    DMatrix::from_fn(n, cols.len(), |i, j| vt[(cols[j], i)])
}

/// Numerical rank with relative cutoff.
pub fn rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.singular_values();
    let smax = sv.iter().fold(0.0f64, |x, y| x.max(*y));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * smax).count()
}

/// Moore–Penrose pseudo-inverse with relative cutoff.
pub fn pinv(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |x, y| x.max(*y));
    svd.pseudo_inverse(rtol * smax.max(f64::MIN_POSITIVE)).expect("svd factors present")
}

/// Minimum-norm least-squares solution of `A X = B` by the pseudo-inverse
/// followed by iterative refinement, which repairs the loss of accuracy of
/// the SVD on tall rank-deficient matrices.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let p = pinv(a, rtol);
    let mut x = &p * b;
    for _ in 0..3 {
        x += &p * (b - a * &x);
    }
    x
}

/// Largest singular value.
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().iter().fold(0.0f64, |x, y| x.max(*y))
}

/// Symmetric positive definite inverse square root factor `L⁻¹` with `G = L Lᵀ`,
/// or `None` if `G` is not positive definite.
pub fn chol_inverse_factor(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = g.clone().cholesky()?.unpack();
    l.try_inverse()
}

/// Row-compressed sparse matrix with sorted column indices per row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRows {
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseRows { ncols, rows: vec![Vec::new(); nrows] }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = &self.rows[i];
        r.binary_search_by_key(&j, |e| e.0).map(|k| r[k].1).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    /// `yᵀ A` as a dense vector of length `ncols`.
    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (r, &yi) in self.rows.iter().zip(y) {
            for &(j, v) in r {
                out[j] += v * yi;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Sparse product `self · other`.
    pub fn mul(&self, other: &SparseRows) -> SparseRows {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut acc: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
                for &(k, a) in r {
                    for &(j, b) in &other.rows[k] {
                        *acc.entry(j).or_insert(0.0) += a * b;
                    }
                }
                acc.into_iter().collect()
            })
            .collect();
        SparseRows { ncols: other.ncols, rows }
    }

    /// Sparse sum of two matrices of equal shape.
    pub fn add(&self, other: &SparseRows) -> SparseRows {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| {
                let mut acc: std::collections::BTreeMap<usize, f64> = a.iter().copied().collect();
                for &(j, v) in b {
                    *acc.entry(j).or_insert(0.0) += v;
                }
                acc.into_iter().collect()
            })
            .collect();
        SparseRows { ncols: self.ncols, rows }
    }

    /// Dense submatrix on the given rows and columns.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let pos: std::collections::HashMap<usize, usize> = cols.iter().enumerate().map(|(k, &c)| (c, k)).collect();
        let mut m = DMatrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for &(j, v) in &self.rows[i] {
                if let Some(&b) = pos.get(&j) {
                    m[(a, b)] = v;
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_wide_matrix() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let n = null_space(&a, 1e-12);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).norm() < 1e-14);
        assert!((n.transpose() * &n - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn pinv_gives_minimum_norm_solution() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = pinv(&a, 1e-12) * DVector::from_vec(vec![2.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lstsq_solves_consistent_rank_deficient_systems() {
        // Incidence of a path graph with four vertices: rank 3, one null direction.
        let a = DMatrix::from_row_slice(3, 4, &[-1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 1.0]);
        let b = &a * DMatrix::from_column_slice(4, 1, &[0.3, -1.1, 0.7, 2.0]);
        let x = lstsq(&a, &b, 1e-12);
        assert!((&a * &x - &b).amax() < 1e-15);
        assert!(x.sum().abs() < 1e-14);
        let at = a.transpose();
        let c = &at * DMatrix::from_column_slice(3, 1, &[0.3, -1.1, 0.7]);
        assert!((&at * lstsq(&at, &c, 1e-12) - &c).amax() < 1e-15);
    }

    #[test]
    fn sparse_product_matches_dense() {
        let a = SparseRows { ncols: 3, rows: vec![vec![(0, 1.0), (2, 2.0)], vec![(1, -1.0)]] };
        let b = SparseRows { ncols: 2, rows: vec![vec![(1, 3.0)], vec![(0, 1.0)], vec![(0, 4.0), (1, 1.0)]] };
        assert_eq!(a.mul(&b).to_dense(), a.to_dense() * b.to_dense());
        assert_eq!(a.add(&a).to_dense(), a.to_dense() * 2.0);
    }

    #[test]
    fn rank_of_rank_one() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(rank(&a, 1e-12), 1);
    }
}
