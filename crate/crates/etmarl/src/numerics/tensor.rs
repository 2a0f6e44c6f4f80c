//! Dense row-major matrices in 64-bit floats.
//!
//! Everything the library computes with — observations, logits, values,
//! advantages — lives in a [`Tensor`]. Vectors are 1×d rows and scalars
//! are 1×1. The heavy products are delegated to `matrixmultiply`'s dgemm;
//! transposed operands are expressed through strides, never materialized.

/// A dense 2-D array of `f64` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "tensor extents must be positive");
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows > 0 && cols > 0, "tensor extents must be positive");
        assert_eq!(
            rows * cols,
            data.len(),
            "shape {}x{} does not match {} values",
            rows,
            cols,
            data.len()
        );
        Tensor { rows, cols, data }
    }

    /// 1×n row vector.
    pub fn row(values: &[f64]) -> Self {
        Tensor::from_vec(1, values.len(), values.to_vec())
    }

    /// n×1 column vector.
    pub fn col(values: &[f64]) -> Self {
        Tensor::from_vec(values.len(), 1, values.to_vec())
    }

    /// 1×1 scalar.
    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(1, 1, vec![v])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// The single value of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() requires a scalar tensor");
        self.data[0]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite_all(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "elementwise shapes must match");
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// self · other, both untransposed.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows, "matmul inner extents must agree");
        let mut out = Tensor::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            1.0,
            &self.data,
            [self.cols as isize, 1],
            &other.data,
            [other.cols as isize, 1],
            0.0,
            &mut out.data,
            out.cols as isize,
        );
        out
    }

    /// self · otherᵀ.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.cols, "matmul_nt inner extents must agree");
        let mut out = Tensor::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            1.0,
            &self.data,
            [self.cols as isize, 1],
            &other.data,
            [1, other.cols as isize],
            0.0,
            &mut out.data,
            out.cols as isize,
        );
        out
    }

    /// selfᵀ · other.
    pub fn matmul_tn(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rows, other.rows, "matmul_tn inner extents must agree");
        let mut out = Tensor::zeros(self.cols, other.cols);
        gemm(
            self.cols,
            self.rows,
            other.cols,
            1.0,
            &self.data,
            [1, self.cols as isize],
            &other.data,
            [other.cols as isize, 1],
            0.0,
            &mut out.data,
            out.cols as isize,
        );
        out
    }

    /// out += alpha * a·b, with either operand optionally transposed.
    pub(crate) fn gemm_acc_into(
        out: &mut Tensor,
        alpha: f64,
        a: &Tensor,
        a_trans: bool,
        b: &Tensor,
        b_trans: bool,
    ) {
        let (m, k) = if a_trans { (a.cols, a.rows) } else { (a.rows, a.cols) };
        let (kb, n) = if b_trans { (b.cols, b.rows) } else { (b.rows, b.cols) };
        assert_eq!(k, kb, "gemm inner extents must agree");
        assert_eq!((out.rows, out.cols), (m, n), "gemm output shape mismatch");
        let sa = if a_trans { [1, a.cols as isize] } else { [a.cols as isize, 1] };
        let sb = if b_trans { [1, b.cols as isize] } else { [b.cols as isize, 1] };
        gemm(m, k, n, alpha, &a.data, sa, &b.data, sb, 1.0, &mut out.data, out.cols as isize);
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    [rsa, csa]: [isize; 2],
    b: &[f64],
    [rsb, csb]: [isize; 2],
    beta: f64,
    c: &mut [f64],
    rsc: isize,
) {
    // Safety: shapes and strides are validated by the callers above; all
    // buffers are owned Vec<f64> of exactly the advertised extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute-force triple-loop product; the oracle for every gemm path.
    fn matmul_oracle(a: &Tensor, b: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn transpose(t: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(t.cols(), t.rows());
        for i in 0..t.rows() {
            for j in 0..t.cols() {
                out.set(j, i, t.get(i, j));
            }
        }
        out
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let a = Tensor::from_vec(2, 3, vec![0.5, -1.25, 2.0, 3.5, 0.125, -0.75]);
        let b = Tensor::from_vec(3, 2, vec![1.5, 2.25, -0.5, 0.875, 4.0, -1.125]);
        let got = a.matmul(&b);
        let want = matmul_oracle(&a, &b);
        for (x, y) in got.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn transposed_products_match_explicit_transpose() {
        let a = Tensor::from_vec(3, 4, (0..12).map(|i| (i as f64) * 0.3 - 1.7).collect());
        let b = Tensor::from_vec(5, 4, (0..20).map(|i| (i as f64).sin()).collect());
        let got = a.matmul_nt(&b);
        let want = matmul_oracle(&a, &transpose(&b));
        for (x, y) in got.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        let c = Tensor::from_vec(4, 3, (0..12).map(|i| (i as f64).cos()).collect());
        let d = Tensor::from_vec(4, 2, (0..8).map(|i| 0.1 * i as f64 - 0.4).collect());
        let got = c.matmul_tn(&d);
        let want = matmul_oracle(&transpose(&c), &d);
        for (x, y) in got.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "inner extents")]
    fn mismatched_matmul_panics() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(2, 3);
        let _ = a.matmul(&b);
    }
}
