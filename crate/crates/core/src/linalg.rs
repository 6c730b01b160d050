//! Dense Householder QR with column pivoting, used for numerical rank and
//! least squares, plus an incremental orthonormal basis for greedy
//! column selection.

use nalgebra::{DMatrix, DVector};

/// Default relative pivot tolerance for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

/// Outcome of a rank-revealing factorization.
#[derive(Debug, Clone)]
pub struct RankReveal {
    pub rank: usize,
    /// Original column indices in pivot order; the first `rank` are the
    /// independent columns the factorization selected.
    pub pivots: Vec<usize>,
    /// |R_ii| for each accepted pivot, non-increasing up to round-off.
    pub pivot_magnitudes: Vec<f64>,
}

/// Working column-major factorization. Columns are physically swapped as
/// pivots are chosen.
struct PivotedQr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    perm: Vec<usize>,
    /// Householder vectors (length rows - j) and their scalar factors.
    reflectors: Vec<(Vec<f64>, f64)>,
    diag: Vec<f64>,
}

impl PivotedQr {
    fn factor(matrix: &DMatrix<f64>, tol: f64, max_steps: usize) -> Self {
        let (rows, cols) = matrix.shape();
        let mut qr = PivotedQr {
            rows,
            cols,
            data: matrix.as_slice().to_vec(),
            perm: (0..cols).collect(),
            reflectors: Vec::new(),
            diag: Vec::new(),
        };
        let steps = rows.min(cols).min(max_steps);
        let mut largest = 0.0f64;
        for j in 0..steps {
            let (p, norm) = qr.max_tail_norm(j);
            if j == 0 {
                largest = norm;
            }
            if norm == 0.0 || norm <= tol * largest {
                break;
            }
            qr.swap_columns(j, p);
            let r = qr.householder(j);
            qr.diag.push(r);
        }
        qr
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn max_tail_norm(&self, j: usize) -> (usize, f64) {
        let mut best = (j, -1.0);
        for c in j..self.cols {
            let n = self.col(c)[j..].iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > best.1 {
                best = (c, n);
            }
        }
        best
    }

    fn swap_columns(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let m = self.rows;
        for i in 0..m {
            self.data.swap(a * m + i, b * m + i);
        }
        self.perm.swap(a, b);
    }

    /// Reflects column `j` onto e_j below the diagonal and applies the same
    /// reflection to the trailing columns. Returns R_jj.
    fn householder(&mut self, j: usize) -> f64 {
        let m = self.rows;
        let x: Vec<f64> = self.col(j)[j..].to_vec();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|t| t * t).sum();
        let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
        for c in j..self.cols {
            let col = &mut self.data[c * m + j..(c + 1) * m];
            let dot: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
            let s = beta * dot;
            if s != 0.0 {
                for (a, b) in col.iter_mut().zip(&v) {
                    *a -= s * b;
                }
            }
        }
        self.reflectors.push((v, beta));
        alpha
    }

    fn rank(&self) -> usize {
        self.diag.len()
    }

    /// Applies Q^T to `b` in place.
    fn apply_qt(&self, b: &mut [f64]) {
        for (j, (v, beta)) in self.reflectors.iter().enumerate() {
            let tail = &mut b[j..];
            let dot: f64 = tail.iter().zip(v).map(|(a, b)| a * b).sum();
            let s = beta * dot;
            for (a, b) in tail.iter_mut().zip(v) {
                *a -= s * b;
            }
        }
    }
}

/// Numerical rank by column-pivoted QR: a pivot counts if its magnitude
/// exceeds `tol` times the largest pivot magnitude.
pub fn rank_reveal(matrix: &DMatrix<f64>, tol: f64) -> RankReveal {
    let qr = PivotedQr::factor(matrix, tol, usize::MAX);
    RankReveal {
        rank: qr.rank(),
        pivot_magnitudes: qr.diag.iter().map(|d| d.abs()).collect(),
        pivots: qr.perm,
    }
}

pub fn numerical_rank(matrix: &DMatrix<f64>, tol: f64) -> usize {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return 0;
    }
    PivotedQr::factor(matrix, tol, usize::MAX).rank()
}

/// Least-squares solution of `a x = b` through rank-revealing QR.
/// Columns judged dependent at `tol` get a zero coefficient.
/// Returns the solution and the residual 2-norm.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> (DVector<f64>, f64) {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m, "right-hand side length mismatch");
    let mut x = DVector::zeros(n);
    if m == 0 || n == 0 {
        return (x, b.norm());
    }
    let qr = PivotedQr::factor(a, tol, usize::MAX);
    let r = qr.rank();
    let mut qtb = b.as_slice().to_vec();
    qr.apply_qt(&mut qtb);
    // back substitution on the leading r×r block of R
    let mut z = vec![0.0; r];
    for i in (0..r).rev() {
        let mut s = qtb[i];
        for (k, zk) in z.iter().enumerate().take(r).skip(i + 1) {
            s -= qr.data[k * m + i] * zk;
        }
        z[i] = s / qr.diag[i];
    }
    for (i, zi) in z.into_iter().enumerate() {
        x[qr.perm[i]] = zi;
    }
    let residual = (a * &x - b).norm();
    (x, residual)
}

/// Orthonormal basis grown one vector at a time. A candidate is admitted
/// when its component orthogonal to the current basis exceeds `tol` times
/// the largest vector norm offered so far.
#[derive(Debug, Clone)]
pub struct IncrementalBasis {
    dim: usize,
    tol: f64,
    basis: Vec<DVector<f64>>,
    scale: f64,
}

impl IncrementalBasis {
    pub fn new(dim: usize, tol: f64) -> Self {
        IncrementalBasis {
            dim,
            tol,
            basis: Vec::new(),
            scale: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Component of `v` orthogonal to the basis (two Gram-Schmidt passes).
    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &self.basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        r
    }

    /// Offers `v`; returns true if it was admitted (rank increased).
    pub fn try_push(&mut self, v: &DVector<f64>) -> bool {
        assert_eq!(v.len(), self.dim, "vector dimension mismatch");
        self.scale = self.scale.max(v.norm());
        if self.basis.len() == self.dim || self.scale == 0.0 {
            return false;
        }
        let r = self.residual(v);
        let rn = r.norm();
        if rn > self.tol * self.scale {
            self.basis.push(r / rn);
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rank_of_known_matrices() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 1.0, 0.0, 1.0]);
        assert_eq!(numerical_rank(&m, RANK_TOL), 2);
        assert_eq!(numerical_rank(&DMatrix::<f64>::identity(4, 4), RANK_TOL), 4);
        assert_eq!(numerical_rank(&DMatrix::<f64>::zeros(3, 5), RANK_TOL), 0);
        assert_eq!(numerical_rank(&DMatrix::<f64>::zeros(0, 5), RANK_TOL), 0);
    }

    #[test]
    fn single_nonzero_row_has_rank_one() {
        let m = DMatrix::from_row_slice(1, 4, &[0.0, 0.25, 0.0, 1.0]);
        assert_eq!(numerical_rank(&m, RANK_TOL), 1);
    }

    #[test]
    fn tiny_pivot_is_dropped() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-10]);
        assert_eq!(numerical_rank(&m, RANK_TOL), 1);
        assert_eq!(numerical_rank(&m, 1e-12), 2);
    }

    #[test]
    fn least_squares_exact_system() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, -1.0, 1.0]);
        let (x, res) = least_squares(&a, &b, RANK_TOL);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] + 1.0).abs() < 1e-12);
        assert!(res < 1e-12);
    }

    #[test]
    fn least_squares_inconsistent_system_reports_residual() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let (_, res) = least_squares(&a, &b, RANK_TOL);
        assert!((res - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incremental_basis_detects_dependence() {
        let mut basis = IncrementalBasis::new(3, RANK_TOL);
        assert!(basis.try_push(&DVector::from_vec(vec![1.0, 1.0, 0.0])));
        assert!(!basis.try_push(&DVector::from_vec(vec![2.0, 2.0, 0.0])));
        assert!(basis.try_push(&DVector::from_vec(vec![1.0, 0.0, 0.0])));
        assert!(!basis.try_push(&DVector::from_vec(vec![0.0, 3.0, 0.0])));
        assert!(!basis.try_push(&DVector::zeros(3)));
        assert_eq!(basis.len(), 2);
    }

    proptest! {
        // rank(X Y) with X: m×r, Y: r×n generic equals r
        #[test]
        fn low_rank_products(r in 1usize..5, m in 5usize..9, n in 5usize..9,
                             seed in proptest::collection::vec(-1.0f64..1.0, 200)) {
            let x = DMatrix::from_fn(m, r, |i, j| seed[(i * 7 + j) % 200] + if i == j { 2.0 } else { 0.0 });
            let y = DMatrix::from_fn(r, n, |i, j| seed[(100 + i * 11 + j) % 200] + if i == j { 2.0 } else { 0.0 });
            let p = &x * &y;
            let svd_rank = p.clone().svd(false, false).rank(1e-8 * p.norm());
            prop_assert_eq!(numerical_rank(&p, RANK_TOL), svd_rank);
        }

        #[test]
        fn least_squares_matches_normal_equations(
            vals in proptest::collection::vec(-1.0f64..1.0, 24),
            rhs in proptest::collection::vec(-1.0f64..1.0, 8),
        ) {
            let a = DMatrix::from_fn(8, 3, |i, j| vals[i * 3 + j] + if i == j { 3.0 } else { 0.0 });
            let b = DVector::from_vec(rhs);
            let (x, _) = least_squares(&a, &b, RANK_TOL);
            let ata = a.transpose() * &a;
            let atb = a.transpose() * &b;
            let expected = ata.lu().solve(&atb).unwrap();
            prop_assert!((x - expected).norm() < 1e-9);
        }
    }
}
