use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        f.debug_list()
            .entries(self.data.chunks(self.cols.max(1)))
            .finish()
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_squares(&self) -> f64 {
        dot_lanes(&self.data, &self.data)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Standard matrix product `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        matmul_into(
            &self.data,
            &other.data,
            &mut out.data,
            self.rows,
            self.cols,
            other.cols,
        );
        Ok(out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Dimension {
                op: "matmul_transposed",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot_lanes(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn transposed_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Dimension {
                op: "transposed_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, m) = (self.cols, other.cols);
        let mut out = Matrix::zeros(n, m);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for (i, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * m..(i + 1) * m];
                for (d, &bv) in dst.iter_mut().zip(b) {
                    *d += aik * bv;
                }
            }
        }
        Ok(out)
    }

    pub fn relu(&self) -> Matrix {
        self.map(|v| if v > 0.0 { v } else { 0.0 })
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Matrix {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        out
    }

    /// Column means over the row (sequence) axis, as a `1 × cols` matrix.
    pub fn mean_rows(&self) -> Result<Matrix> {
        if self.rows == 0 {
            return Err(Error::EmptySequence {
                op: "mean_over_sequence",
            });
        }
        let mut out = Matrix::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, v) in out.data.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        let n = self.rows as f64;
        out.data.iter_mut().for_each(|v| *v /= n);
        Ok(out)
    }

    /// Column maxima over the row axis plus the first row index attaining
    /// each maximum.
    pub fn max_rows(&self) -> Result<(Matrix, Vec<usize>)> {
        if self.rows == 0 {
            return Err(Error::EmptySequence {
                op: "max_over_sequence",
            });
        }
        let mut out = Matrix::row_vector(self.row(0));
        let mut arg = vec![0; self.cols];
        for r in 1..self.rows {
            for (c, &v) in self.row(r).iter().enumerate() {
                if v > out.data[c] {
                    out.data[c] = v;
                    arg[c] = r;
                }
            }
        }
        Ok((out, arg))
    }
}

/// Sequential left-to-right inner product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Inner product with eight interleaved partial sums, so the compiler can
/// vectorize it. Deterministic, but rounds differently from [`dot`].
pub(crate) fn dot_lanes(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 8];
    let (ca, ra) = (a.chunks_exact(8), a.chunks_exact(8).remainder());
    let rb = b.chunks_exact(8).remainder();
    for (x, y) in ca.zip(b.chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `out += a · b` for row-major `a: n×k`, `b: k×m`, `out: n×m`.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let dst = &mut out[i * m..(i + 1) * m];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let src = &b[p * m..(p + 1) * m];
            for (d, &bv) in dst.iter_mut().zip(src) {
                *d += aip * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul_returns_operand() {
        let x = Matrix::from_rows(&[[1.5, -2.0], [0.25, 4.0]]);
        assert_eq!(Matrix::identity(2).matmul(&x).unwrap(), x);
    }

    #[test]
    fn hand_checked_product() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = Matrix::from_rows(&[[0.0], [1.0]]);
        assert_eq!(a.matmul(&b).unwrap(), Matrix::from_rows(&[[2.0], [4.0]]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
        assert!(matches!(
            a.matmul(&b),
            Err(Error::Dimension {
                left: (2, 3),
                right: (2, 3),
                ..
            })
        ));
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let b = Matrix::from_rows(&[[0.5, -1.0, 2.0], [1.0, 0.0, -3.0]]);
        assert_eq!(
            a.matmul_transposed(&b).unwrap(),
            a.matmul(&b.transpose()).unwrap()
        );
        assert_eq!(
            a.transposed_matmul(&b).unwrap(),
            a.transpose().matmul(&b).unwrap()
        );
    }

    #[test]
    fn relu_cases() {
        let x = Matrix::from_rows(&[[-1.0, 0.0, 2.0]]);
        assert_eq!(x.relu(), Matrix::from_rows(&[[0.0, 0.0, 2.0]]));
        let neg = Matrix::from_rows(&[[-1.0, -3.0], [-0.5, -2.0]]);
        assert_eq!(neg.relu(), Matrix::zeros(2, 2));
    }

    #[test]
    fn softmax_examples() {
        let u = Matrix::from_rows(&[[0.0, 0.0, 0.0]]).softmax_rows();
        for &v in u.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = Matrix::from_rows(&[[1000.0, 1000.0]]).softmax_rows();
        assert_eq!(big.as_slice(), &[0.5, 0.5]);
        let s = Matrix::from_rows(&[[0.0, 3f64.ln()]]).softmax_rows();
        assert!((s.get(0, 0) - 0.25).abs() < 1e-12);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn sequence_aggregations() {
        let x = Matrix::from_rows(&[[0.0, 2.0], [2.0, 0.0]]);
        assert_eq!(x.mean_rows().unwrap(), Matrix::from_rows(&[[1.0, 1.0]]));
        assert_eq!(x.max_rows().unwrap().0, Matrix::from_rows(&[[2.0, 2.0]]));
        let same = Matrix::from_rows(&[[0.25, -0.75], [0.25, -0.75], [0.25, -0.75]]);
        assert_eq!(
            same.mean_rows().unwrap(),
            Matrix::from_rows(&[[0.25, -0.75]])
        );
        let single = Matrix::from_rows(&[[4.0, -1.0]]);
        assert_eq!(single.max_rows().unwrap().0, single);
    }

    #[test]
    fn max_ties_pick_first_row() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [1.0, 5.0], [0.0, 5.0]]);
        let (_, arg) = x.max_rows().unwrap();
        assert_eq!(arg, vec![0, 0]);
    }

    #[test]
    fn empty_sequence_errors() {
        let x = Matrix::zeros(0, 3);
        assert!(matches!(x.mean_rows(), Err(Error::EmptySequence { .. })));
        assert!(matches!(x.max_rows(), Err(Error::EmptySequence { .. })));
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(0, 2, vec![]).is_err());
    }
}
