//! Dense row-major tensors and the handful of kernels the rest of the crate
//! is built on.
//!
//! Two element precisions are supported through [`Real`]: `f32` for forward
//! and benchmark paths, `f64` for gradient verification. There is no
//! broadcasting; every binary operation requires exactly matching shapes.

use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Scalar element type of a [`Tensor`].
pub trait Real:
    Float + Default + fmt::Debug + fmt::Display + Send + Sync + std::iter::Sum + 'static
{
    /// Container dtype tag.
    const DTYPE: u8;
    /// Size in bytes of one element.
    const BYTES: usize;

    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE: u8 = 0x01;
    const BYTES: usize = 4;

    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Real for f64 {
    const DTYPE: u8 = 0x02;
    const BYTES: usize = 8;

    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

/// Dense row-major tensor.
///
/// Invariants: `dims` is non-empty, every extent is at least 1, `data.len()`
/// equals the product of `dims`, and every element is finite.
#[derive(Clone, PartialEq)]
pub struct Tensor<T: Real = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} [", self.dims)?;
        for (i, v) in self.data.iter().take(PREVIEW).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > PREVIEW {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::shape("tensor must have at least one dimension"));
    }
    if dims.contains(&0) {
        return Err(Error::shape(format!("zero extent in dims {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::shape(format!("element count overflows for dims {dims:?}")))
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n = check_dims(&dims)?;
        if data.len() != n {
            return Err(Error::shape(format!(
                "dims {dims:?} need {n} elements, got {}",
                data.len()
            )));
        }
        Self { dims, data }.finite("Tensor::new")
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: &[usize], value: T) -> Result<Self> {
        let n = check_dims(dims)?;
        Self {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
        .finite("Tensor::full")
    }

    /// Builds a tensor by evaluating `f` on each flat row-major index.
    pub fn from_fn(dims: &[usize], f: impl FnMut(usize) -> T) -> Result<Self> {
        let n = check_dims(dims)?;
        Self {
            dims: dims.to_vec(),
            data: (0..n).map(f).collect(),
        }
        .finite("Tensor::from_fn")
    }

    /// Identity matrix of order `n`.
    pub fn eye(n: usize) -> Result<Self> {
        Self::from_fn(&[n, n], |i| if i / n == i % n { T::one() } else { T::zero() })
    }

    /// Rank-2 tensor from nested rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::shape("ragged rows"));
        }
        Self::new(vec![m, n], rows.concat())
    }

    /// Validates finiteness; used as the tail of every exported operation.
    pub(crate) fn finite(self, op: &str) -> Result<Self> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::NonFinite(op.to_string()))
        }
    }

    /// Unchecked constructor for kernels whose output shape is correct by
    /// construction. Finiteness is still validated.
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<T>, op: &str) -> Result<Self> {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }.finite(op)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Mutable element access. Callers must keep entries finite; operations
    /// downstream re-validate.
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn matrix_dims(&self) -> Result<(usize, usize)> {
        match self.dims[..] {
            [m, n] => Ok((m, n)),
            _ => Err(Error::shape(format!(
                "expected a rank-2 tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    /// `(C, H, W)` of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.dims[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(format!(
                "expected a C×H×W tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let n = *self.dims.last().unwrap();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn at(&self, index: &[usize]) -> T {
        assert_eq!(index.len(), self.dims.len(), "index rank mismatch");
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.dims) {
            assert!(i < d, "index {index:?} out of bounds for {:?}", self.dims);
            flat = flat * d + i;
        }
        self.data[flat]
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data: self.data,
        })
    }

    pub fn cast<U: Real>(&self) -> Result<Tensor<U>> {
        Tensor::from_parts(
            self.dims.clone(),
            self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            "cast",
        )
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::from_parts(
            self.dims.clone(),
            self.data.iter().map(|&v| f(v)).collect(),
            "map",
        )
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_dims(other, "zip_map")?;
        Self::from_parts(
            self.dims.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            "zip_map",
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: T) -> Result<Self> {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub(crate) fn expect_same_dims(&self, other: &Self, op: &str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.matrix_dims()?;
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self {
            dims: vec![n, m],
            data: out,
        })
    }

    /// Channel slice `[start, start+len)` of a C×H×W tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Self> {
        let (c, h, w) = self.chw()?;
        if len == 0 || start + len > c {
            return Err(Error::shape(format!(
                "channel slice {start}..{} out of range for {c} channels",
                start + len
            )));
        }
        let plane = h * w;
        Ok(Self {
            dims: vec![len, h, w],
            data: self.data[start * plane..(start + len) * plane].to_vec(),
        })
    }

    /// Reinterprets a C×H×W map as an (H·W)×C token matrix.
    pub fn to_tokens(&self) -> Result<Self> {
        let (c, h, w) = self.chw()?;
        Self {
            dims: vec![c, h * w],
            data: self.data.clone(),
        }
        .transpose()
    }

    /// Inverse of [`Tensor::to_tokens`].
    pub fn from_tokens(tokens: &Self, height: usize, width: usize) -> Result<Self> {
        let (l, c) = tokens.matrix_dims()?;
        if l != height * width {
            return Err(Error::shape(format!(
                "{l} tokens cannot form a {height}×{width} map"
            )));
        }
        tokens.transpose()?.reshape(&[c, height, width])
    }
}

/// Matrix product `a · b`.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    matmul_with(a, b, Exec::default())
}

pub fn matmul_with<T: Real>(a: &Tensor<T>, b: &Tensor<T>, exec: Exec) -> Result<Tensor<T>> {
    let (m, k) = a.matrix_dims()?;
    let (k2, n) = b.matrix_dims()?;
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul: inner dimensions differ for {:?} × {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mut out = vec![T::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    par::for_each_chunk(exec, &mut out, n, |i, row| {
        let arow = &ad[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    });
    Tensor::from_parts(vec![m, n], out, "matmul")
}

/// `aᵀ · b` for `a: [l×m]`, `b: [l×n]`, without forming `aᵀ`. The result is
/// `m×n`; only O(m·n) extra memory is used.
pub fn matmul_transpose_a<T: Real>(a: &Tensor<T>, b: &Tensor<T>, exec: Exec) -> Result<Tensor<T>> {
    let (l, m) = a.matrix_dims()?;
    let (l2, n) = b.matrix_dims()?;
    if l != l2 {
        return Err(Error::shape(format!(
            "matmul_transpose_a: row counts differ for {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mut out = vec![T::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    par::for_each_chunk(exec, &mut out, n, |i, row| {
        for r in 0..l {
            let av = ad[r * m + i];
            let brow = &bd[r * n..(r + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    });
    Tensor::from_parts(vec![m, n], out, "matmul_transpose_a")
}

/// `a · bᵀ` for `a: [m×k]`, `b: [n×k]`: row-by-row dot products.
pub fn matmul_transpose_b<T: Real>(a: &Tensor<T>, b: &Tensor<T>, exec: Exec) -> Result<Tensor<T>> {
    let (m, k) = a.matrix_dims()?;
    let (n, k2) = b.matrix_dims()?;
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul_transpose_b: column counts differ for {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mut out = vec![T::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    par::for_each_chunk(exec, &mut out, n, |i, row| {
        let arow = &ad[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            let brow = &bd[j * k..(j + 1) * k];
            *o = arow
                .iter()
                .zip(brow)
                .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        }
    });
    Tensor::from_parts(vec![m, n], out, "matmul_transpose_b")
}

fn softmax_slice<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(a: &Tensor<T>) -> Result<Tensor<T>> {
    softmax_rows_with(a, Exec::default())
}

pub fn softmax_rows_with<T: Real>(a: &Tensor<T>, exec: Exec) -> Result<Tensor<T>> {
    let (_, n) = a.matrix_dims()?;
    let mut out = a.data().to_vec();
    par::for_each_chunk(exec, &mut out, n, |_, row| softmax_slice(row));
    Tensor::from_parts(a.dims().to_vec(), out, "softmax_rows")
}

/// Column-wise softmax with max subtraction: every column sums to one.
pub fn softmax_cols<T: Real>(a: &Tensor<T>) -> Result<Tensor<T>> {
    softmax_cols_with(a, Exec::default())
}

pub fn softmax_cols_with<T: Real>(a: &Tensor<T>, _exec: Exec) -> Result<Tensor<T>> {
    // Streams over rows so memory access stays contiguous.
    let (m, n) = a.matrix_dims()?;
    let src = a.data();
    let mut max = vec![T::neg_infinity(); n];
    for row in src.chunks_exact(n) {
        for (mx, &v) in max.iter_mut().zip(row) {
            *mx = mx.max(v);
        }
    }
    let mut out = vec![T::zero(); m * n];
    let mut sum = vec![T::zero(); n];
    for (orow, row) in out.chunks_exact_mut(n).zip(src.chunks_exact(n)) {
        for j in 0..n {
            let e = (row[j] - max[j]).exp();
            orow[j] = e;
            sum[j] = sum[j] + e;
        }
    }
    for orow in out.chunks_exact_mut(n) {
        for (o, &s) in orow.iter_mut().zip(&sum) {
            *o = *o / s;
        }
    }
    Tensor::from_parts(vec![m, n], out, "softmax_cols")
}

/// Stacks C_i×H×W parts along the channel axis, preserving order.
pub fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat_channels: no parts"))?;
    let (_, h, w) = first.chw()?;
    let mut channels = 0;
    for p in parts {
        let (c, ph, pw) = p.chw()?;
        if (ph, pw) != (h, w) {
            return Err(Error::shape(format!(
                "concat_channels: spatial extent {ph}×{pw} differs from {h}×{w}"
            )));
        }
        channels += c;
    }
    let mut data = Vec::with_capacity(channels * h * w);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Ok(Tensor {
        dims: vec![channels, h, w],
        data,
    })
}

/// Gradients of `matmul(a, b)` given the upstream gradient `d_out`:
/// `d_a = d_out · bᵀ`, `d_b = aᵀ · d_out`.
pub fn matmul_backward<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (m, k) = a.matrix_dims()?;
    let (k2, n) = b.matrix_dims()?;
    if k != k2 || d_out.dims() != [m, n] {
        return Err(Error::shape(format!(
            "matmul_backward: a {:?}, b {:?}, d_out {:?} are inconsistent",
            a.dims(),
            b.dims(),
            d_out.dims()
        )));
    }
    let exec = Exec::default();
    let d_a = matmul_transpose_b(d_out, b, exec)?;
    let d_b = matmul_transpose_a(a, d_out, exec)?;
    Ok((d_a, d_b))
}

/// Vector-Jacobian product of [`softmax_rows`], given its output `y`.
pub fn softmax_rows_backward<T: Real>(y: &Tensor<T>, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    y.expect_same_dims(d_out, "softmax_rows_backward")?;
    let (_, n) = y.matrix_dims()?;
    let mut out = vec![T::zero(); y.len()];
    for ((o, yr), dr) in out
        .chunks_exact_mut(n)
        .zip(y.data().chunks_exact(n))
        .zip(d_out.data().chunks_exact(n))
    {
        let dot = yr.iter().zip(dr).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        for j in 0..n {
            o[j] = yr[j] * (dr[j] - dot);
        }
    }
    Tensor::from_parts(y.dims().to_vec(), out, "softmax_rows_backward")
}

/// Vector-Jacobian product of [`softmax_cols`], given its output `y`.
pub fn softmax_cols_backward<T: Real>(y: &Tensor<T>, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    y.expect_same_dims(d_out, "softmax_cols_backward")?;
    let (_, n) = y.matrix_dims()?;
    let mut dot = vec![T::zero(); n];
    for (yr, dr) in y.data().chunks_exact(n).zip(d_out.data().chunks_exact(n)) {
        for j in 0..n {
            dot[j] = dot[j] + yr[j] * dr[j];
        }
    }
    let mut out = vec![T::zero(); y.len()];
    for ((o, yr), dr) in out
        .chunks_exact_mut(n)
        .zip(y.data().chunks_exact(n))
        .zip(d_out.data().chunks_exact(n))
    {
        for j in 0..n {
            o[j] = yr[j] * (dr[j] - dot[j]);
        }
    }
    Tensor::from_parts(y.dims().to_vec(), out, "softmax_cols_backward")
}

/// Central-difference gradient of a scalar function, evaluated in 64-bit.
///
/// Element `i` of the result is `(f(x + eps·e_i) - f(x - eps·e_i)) / (2·eps)`.
pub fn finite_difference_gradient<F>(mut f: F, x: &Tensor64, eps: f64) -> Result<Tensor64>
where
    F: FnMut(&Tensor64) -> f64,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Invalid(format!("finite-difference step {eps} must be > 0")));
    }
    let mut probe = x.clone();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let plus = f(&probe);
        probe.data[i] = orig - eps;
        let minus = f(&probe);
        probe.data[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite_difference_gradient: objective at element {i}"
            )));
        }
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    Tensor::from_parts(x.dims.clone(), grad, "finite_difference_gradient")
}

/// Max-norm relative error `‖a − b‖∞ / max(‖b‖∞, floor)`.
pub fn relative_error<T: Real>(a: &Tensor<T>, b: &Tensor<T>, floor: f64) -> Result<f64> {
    a.expect_same_dims(b, "relative_error")?;
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .fold(0.0f64, |m, (&x, &y)| m.max((x.as_f64() - y.as_f64()).abs()));
    Ok(diff / b.max_abs().as_f64().max(floor))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor64 {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn new_rejects_bad_dims_and_nan() {
        assert!(Tensor::<f32>::new(vec![], vec![]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(matches!(
            Tensor::<f32>::new(vec![1], vec![f32::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn matmul_identity_and_2x2() {
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t2(&[&[5.0, 6.0], &[7.0, 8.0]]);
        assert_eq!(matmul(&Tensor::eye(2).unwrap(), &a).unwrap(), a);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::<f32>::zeros(&[2, 3]).unwrap();
        let b = Tensor::<f32>::zeros(&[4, 2]).unwrap();
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn transposed_products_agree_with_plain_matmul() {
        let a = Tensor::<f64>::from_fn(&[5, 3], |i| (i as f64 * 0.37).sin()).unwrap();
        let b = Tensor::<f64>::from_fn(&[5, 4], |i| (i as f64 * 0.11).cos()).unwrap();
        let ta = matmul_transpose_a(&a, &b, Exec::Sequential).unwrap();
        let plain = matmul(&a.transpose().unwrap(), &b).unwrap();
        assert!(relative_error(&ta, &plain, 1e-12).unwrap() < 1e-14);
        let c = Tensor::<f64>::from_fn(&[4, 3], |i| i as f64 - 2.0).unwrap();
        let tb = matmul_transpose_b(&a, &c, Exec::Sequential).unwrap();
        let plain = matmul(&a, &c.transpose().unwrap()).unwrap();
        assert!(relative_error(&tb, &plain, 1e-12).unwrap() < 1e-14);
    }

    #[test]
    fn softmax_rows_examples() {
        let s = softmax_rows(&t2(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Tensor::<f32>::full(&[1, 3], 1000.0).unwrap()).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }
        let s = softmax_rows(&t2(&[&[0.0, 3f64.ln()]])).unwrap();
        assert!((s.data()[0] - 0.25).abs() < 1e-15);
        assert!((s.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_cols_examples() {
        let s = softmax_cols(&t2(&[&[0.0], &[0.0]])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_cols(&t2(&[&[3.0, -7.0, 1e3]])).unwrap();
        assert_eq!(s.data(), &[1.0, 1.0, 1.0]);
        let a = Tensor::<f64>::from_fn(&[4, 3], |i| ((i * 7) % 5) as f64 - 2.0).unwrap();
        let via_t = softmax_rows(&a.transpose().unwrap())
            .unwrap()
            .transpose()
            .unwrap();
        assert!(relative_error(&softmax_cols(&a).unwrap(), &via_t, 1e-12).unwrap() < 1e-15);
    }

    #[test]
    fn concat_and_slice() {
        let a = Tensor::<f32>::from_fn(&[1, 2, 2], |i| i as f32).unwrap();
        let b = Tensor::<f32>::from_fn(&[3, 2, 2], |i| 10.0 + i as f32).unwrap();
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.dims(), &[4, 2, 2]);
        assert_eq!(c.slice_channels(0, 1).unwrap(), a);
        assert_eq!(c.slice_channels(1, 3).unwrap(), b);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
        let bad = Tensor::<f32>::zeros(&[1, 3, 2]).unwrap();
        assert!(matches!(concat_channels(&[&a, &bad]), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_backward_trivial_cases() {
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t2(&[&[0.5, -1.0], &[2.0, 0.25]]);
        let zero = Tensor::zeros(&[2, 2]).unwrap();
        let (da, db) = matmul_backward(&a, &b, &zero).unwrap();
        assert_eq!(da.max_abs(), 0.0);
        assert_eq!(db.max_abs(), 0.0);
        let d_out = t2(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let (_, db) = matmul_backward(&Tensor::eye(2).unwrap(), &b, &d_out).unwrap();
        assert_eq!(db, d_out);
        assert!(matmul_backward(&a, &b, &Tensor::zeros(&[3, 2]).unwrap()).is_err());
    }

    #[test]
    fn softmax_backward_trivial_cases() {
        let y = Tensor::<f64>::full(&[2, 4], 0.25).unwrap();
        let d = Tensor::<f64>::full(&[2, 4], 1.7).unwrap();
        assert!(softmax_rows_backward(&y, &d).unwrap().max_abs() < 1e-15);
        let zero = Tensor::zeros(&[2, 4]).unwrap();
        assert_eq!(softmax_rows_backward(&y, &zero).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn finite_difference_examples() {
        let x = Tensor::new(vec![1], vec![3.0]).unwrap();
        let g = finite_difference_gradient(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-5)
            .unwrap();
        assert!((g.data()[0] - 6.0).abs() < 1e-8);
        let x = Tensor::<f64>::from_fn(&[2, 3], |i| i as f64 * 0.3 - 1.0).unwrap();
        let g = finite_difference_gradient(|_| 4.2, &x, 1e-5).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        let g = finite_difference_gradient(|t| t.sum(), &x, 1e-5).unwrap();
        for v in g.data() {
            assert!((v - 1.0).abs() < 1e-9);
        }
        assert!(finite_difference_gradient(|_| f64::NAN, &x, 1e-5).is_err());
        assert!(finite_difference_gradient(|t| t.sum(), &x, 0.0).is_err());
    }

    #[test]
    fn tokens_round_trip() {
        let m = Tensor::<f32>::from_fn(&[3, 2, 4], |i| i as f32).unwrap();
        let t = m.to_tokens().unwrap();
        assert_eq!(t.dims(), &[8, 3]);
        assert_eq!(t.at(&[5, 2]), m.at(&[2, 1, 1]));
        assert_eq!(Tensor::from_tokens(&t, 2, 4).unwrap(), m);
    }
}
