use std::fmt;

use crate::error::{Result, TensorError};
use crate::gemm::gemm;

/// Variance floor used by [`Tensor::layernorm`].
pub const LAYERNORM_EPS: f64 = 1e-6;

/// Dense row-major array of `f64`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        if self.data.len() <= SHOWN {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "{:?}..", &self.data[..SHOWN])
        }
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::DataLength {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Build from a function of the flat (row-major) index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: (0..numel(shape)).map(f).collect(),
        }
    }

    /// 2-D tensor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TensorError::Invalid("ragged rows".into()));
        }
        Self::new(&[rows.len(), cols], rows.concat())
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape.clone()));
        }
        Ok(self.data[0])
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            _ => Err(TensorError::Rank {
                op: "dims2",
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    /// Element at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut flat = 0;
        for (&i, &extent) in index.iter().zip(&self.shape) {
            assert!(i < extent, "index {i} out of range for extent {extent}");
            flat = flat * extent + i;
        }
        self.data[flat]
    }

    /// Trailing extent (the feature axis).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        self.clone().into_reshaped(shape)
    }

    pub fn into_reshaped(mut self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op: "add_assign",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a += b);
        Ok(())
    }

    /// Add a length-`d` bias to every row of a `[.., d]` tensor.
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        let d = self.last_dim();
        if bias.len() != d || bias.rank() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: self.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(d) {
            row.iter_mut().zip(&bias.data).for_each(|(a, &b)| *a += b);
        }
        Ok(out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Leading dims flattened into rows: `[a, b, .., k]` → (a·b·.., k).
    pub(crate) fn as_matrix_dims(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.rank() < 2 {
            return Err(TensorError::Rank {
                op,
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        let k = self.last_dim();
        Ok((self.data.len() / k.max(1), k))
    }

    /// Matrix product. The left operand may carry leading batch axes, which
    /// are treated as extra rows; the right operand must be 2-D.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.matmul_impl(rhs, false)
    }

    /// `self · rhsᵀ` with `rhs` stored as n×k.
    pub fn matmul_t(&self, rhs: &Tensor) -> Result<Tensor> {
        self.matmul_impl(rhs, true)
    }

    fn matmul_impl(&self, rhs: &Tensor, transpose_rhs: bool) -> Result<Tensor> {
        let (m, k) = self.as_matrix_dims("matmul")?;
        let (r0, r1) = rhs.dims2()?;
        let (rk, n) = if transpose_rhs { (r1, r0) } else { (r0, r1) };
        if k != rk {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let mut data = vec![0.0; m * n];
        gemm(m, k, n, &self.data, false, &rhs.data, transpose_rhs, &mut data, false);
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = n;
        Ok(Tensor { shape, data })
    }

    /// Batched product `[B, m, k] · [B, k, n]` (or `[B, n, k]` transposed).
    pub fn bmm(&self, rhs: &Tensor, transpose_rhs: bool) -> Result<Tensor> {
        let (b, m, k) = dims3(self, "bmm")?;
        let (rb, r1, r2) = dims3(rhs, "bmm")?;
        let (rk, n) = if transpose_rhs { (r2, r1) } else { (r1, r2) };
        if b != rb || k != rk {
            return Err(TensorError::ShapeMismatch {
                op: "bmm",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let mut data = vec![0.0; b * m * n];
        for i in 0..b {
            gemm(
                m,
                k,
                n,
                &self.data[i * m * k..(i + 1) * m * k],
                false,
                &rhs.data[i * k * n..(i + 1) * k * n],
                transpose_rhs,
                &mut data[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        Ok(Tensor {
            shape: vec![b, m, n],
            data,
        })
    }

    /// Swap the last two axes.
    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.as_matrix_dims("transpose")?;
        let rows = self.shape[self.rank() - 2];
        let batch = m / rows.max(1);
        let cols = n;
        let mut data = vec![0.0; self.data.len()];
        for b in 0..batch {
            let src = &self.data[b * rows * cols..(b + 1) * rows * cols];
            let dst = &mut data[b * rows * cols..(b + 1) * rows * cols];
            for i in 0..rows {
                for j in 0..cols {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
        let mut shape = self.shape.clone();
        let r = shape.len();
        shape.swap(r - 2, r - 1);
        Ok(Tensor { shape, data })
    }

    /// Swap the first two axes: `[A, B, ..]` → `[B, A, ..]`.
    pub fn swap_leading(&self) -> Result<Tensor> {
        if self.rank() < 2 {
            return Err(TensorError::Rank {
                op: "swap_leading",
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        let (a, b) = (self.shape[0], self.shape[1]);
        let inner = numel(&self.shape[2..]);
        let mut data = vec![0.0; self.data.len()];
        for i in 0..a {
            for j in 0..b {
                let src = (i * b + j) * inner;
                let dst = (j * a + i) * inner;
                data[dst..dst + inner].copy_from_slice(&self.data[src..src + inner]);
            }
        }
        let mut shape = self.shape.clone();
        shape.swap(0, 1);
        Ok(Tensor { shape, data })
    }

    /// Kronecker product of two matrices.
    pub fn kron(&self, rhs: &Tensor) -> Result<Tensor> {
        let (p, q) = self.dims2()?;
        let (m, n) = rhs.dims2()?;
        crate::flops::record_macs((p * q * m * n) as u64);
        let mut data = vec![0.0; p * q * m * n];
        let cols = q * n;
        for i in 0..p {
            for j in 0..q {
                let a = self.data[i * q + j];
                for k in 0..m {
                    let row = (i * m + k) * cols + j * n;
                    let src = &rhs.data[k * n..(k + 1) * n];
                    for (dst, &b) in data[row..row + n].iter_mut().zip(src) {
                        *dst = a * b;
                    }
                }
            }
        }
        Ok(Tensor {
            shape: vec![p * m, q * n],
            data,
        })
    }

    /// Softmax over the last axis.
    ///
    /// `mask`, when given, marks allowed entries. Its length must be a
    /// multiple of the row length and divide the tensor length; it is tiled
    /// over leading axes. Masked entries come out as exactly zero.
    pub fn softmax(&self, mask: Option<&[bool]>) -> Result<Tensor> {
        let n = self.last_dim();
        if let Some(mask) = mask {
            if mask.is_empty() || mask.len() % n != 0 || self.data.len() % mask.len() != 0 {
                return Err(TensorError::Invalid(format!(
                    "mask of length {} does not tile shape {:?}",
                    mask.len(),
                    self.shape
                )));
            }
        }
        let mut data = vec![0.0; self.data.len()];
        for (r, (src, dst)) in self.data.chunks(n).zip(data.chunks_mut(n)).enumerate() {
            let allowed = |j: usize| match mask {
                Some(m) => m[(r * n + j) % m.len()],
                None => true,
            };
            let mut max = f64::NEG_INFINITY;
            for (j, &v) in src.iter().enumerate() {
                if allowed(j) && v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(TensorError::DegenerateMask { row: r });
            }
            let mut total = 0.0;
            for (j, (&v, d)) in src.iter().zip(dst.iter_mut()).enumerate() {
                if allowed(j) {
                    *d = (v - max).exp();
                    total += *d;
                }
            }
            dst.iter_mut().for_each(|d| *d /= total);
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Layer normalization over the last axis.
    pub fn layernorm(&self, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
        self.layernorm_parts(gamma, beta).map(|(out, _, _)| out)
    }

    /// Returns (output, normalized input, per-row inverse std).
    pub(crate) fn layernorm_parts(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
    ) -> Result<(Tensor, Tensor, Vec<f64>)> {
        let d = self.last_dim();
        if d < 2 {
            return Err(TensorError::Invalid("layernorm needs at least 2 features".into()));
        }
        if gamma.len() != d || beta.len() != d {
            return Err(TensorError::ShapeMismatch {
                op: "layernorm",
                lhs: self.shape.clone(),
                rhs: gamma.shape.clone(),
            });
        }
        let rows = self.data.len() / d;
        let mut xhat = vec![0.0; self.data.len()];
        let mut out = vec![0.0; self.data.len()];
        let mut inv_std = Vec::with_capacity(rows);
        for (r, row) in self.data.chunks(d).enumerate() {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LAYERNORM_EPS).sqrt();
            inv_std.push(inv);
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gamma.data[j] + beta.data[j];
            }
        }
        let shape = self.shape.clone();
        Ok((
            Tensor {
                shape: shape.clone(),
                data: out,
            },
            Tensor { shape, data: xhat },
            inv_std,
        ))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&self) -> Tensor {
        self.map(gelu)
    }

    /// `out.flat[i] = self.flat[index[i]]`, reshaped to `shape`.
    pub fn gather(&self, index: &[usize], shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != index.len() {
            return Err(TensorError::DataLength {
                len: index.len(),
                shape: shape.to_vec(),
            });
        }
        let mut data = Vec::with_capacity(index.len());
        for &i in index {
            match self.data.get(i) {
                Some(&v) => data.push(v),
                None => {
                    return Err(TensorError::IndexOutOfRange {
                        index: i,
                        extent: self.data.len(),
                    })
                }
            }
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Invalid("concat of nothing".into()))?;
        if axis >= first.rank() {
            return Err(TensorError::Rank {
                op: "concat",
                expected: axis + 1,
                shape: first.shape.clone(),
            });
        }
        for p in parts {
            let same = p.rank() == first.rank()
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(ax, (a, b))| ax == axis || a == b);
            if !same {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
        }
        let outer = numel(&first.shape[..axis]);
        let inner = numel(&first.shape[axis + 1..]);
        let total_axis: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut data = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for p in parts {
                let block = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total_axis;
        Ok(Tensor { shape, data })
    }
}

fn dims3(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        &[a, b, c] => Ok((a, b, c)),
        _ => Err(TensorError::Rank {
            op,
            expected: 3,
            shape: t.shape().to_vec(),
        }),
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// `exp` by range reduction to `|r| ≤ ln2/2` and a degree-13 Taylor series.
/// Branch-free; within a few ulp of libm on `[-708, 709]`.
#[inline(always)]
fn exp_fast(x: f64) -> f64 {
    const ROUND: f64 = 6_755_399_441_055_744.0;
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let x = x.clamp(-708.0, 709.0);
    let shifted = x * std::f64::consts::LOG2_E + ROUND;
    let k = shifted - ROUND;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let r2 = r * r;
    let r4 = r2 * r2;
    let r8 = r4 * r4;
    let t = |c0: f64, c1: f64| c0 + c1 * r;
    let q0 = t(1.0, 1.0) + r2 * t(0.5, 1.0 / 6.0);
    let q1 = t(1.0 / 24.0, 1.0 / 120.0) + r2 * t(1.0 / 720.0, 1.0 / 5_040.0);
    let q2 = t(1.0 / 40_320.0, 1.0 / 362_880.0) + r2 * t(1.0 / 3_628_800.0, 1.0 / 39_916_800.0);
    let q3 = t(1.0 / 479_001_600.0, 1.0 / 6_227_020_800.0);
    let p = (q0 + r4 * q1) + r8 * (q2 + r4 * q3);
    // The low mantissa bits of `shifted` hold k; move k + 1023 into the exponent.
    p * f64::from_bits(shifted.to_bits().wrapping_add(1023) << 52)
}

#[inline(always)]
fn tanh_fast(u: f64) -> f64 {
    let e = exp_fast(2.0 * u.clamp(-20.0, 20.0));
    (e - 1.0) / (e + 1.0)
}

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + tanh_fast(GELU_C * (x + GELU_A * x * x * x)))
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = tanh_fast(GELU_C * (x + GELU_A * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Flat indices selecting `picks` along `axis` of a tensor with `shape`.
///
/// The result, used with [`Tensor::gather`], has the same shape with
/// `shape[axis]` replaced by `picks.len()`.
pub fn axis_select_indices(shape: &[usize], axis: usize, picks: &[usize]) -> Vec<usize> {
    let outer = numel(&shape[..axis]);
    let extent = shape[axis];
    let inner = numel(&shape[axis + 1..]);
    let mut index = Vec::with_capacity(outer * picks.len() * inner);
    for o in 0..outer {
        for &p in picks {
            let base = (o * extent + p) * inner;
            index.extend(base..base + inner);
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_tanh_matches_libm() {
        for i in -3000..3000 {
            let u = i as f64 * 0.01;
            assert!((tanh_fast(u) - u.tanh()).abs() < 1e-15, "{u}");
        }
        for i in -7080..7090 {
            let x = i as f64 * 0.1;
            assert!((exp_fast(x) / x.exp() - 1.0).abs() < 1e-14, "{x}");
        }
        assert_eq!(tanh_fast(1e6), 1.0);
        assert_eq!(tanh_fast(-1e6), -1.0);
    }

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = t2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = t2(&[&[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(a.matmul(&b).unwrap(), b);
    }

    #[test]
    fn matmul_counts_macs() {
        let a = Tensor::ones(&[2, 3]);
        let b = Tensor::ones(&[3, 4]);
        let (_, c) = crate::flops::measure(|| a.matmul(&b).unwrap());
        assert_eq!(c.mac_count(), 24);
    }

    #[test]
    fn matmul_shape_error() {
        let a = Tensor::ones(&[2, 3]);
        let b = Tensor::ones(&[2, 4]);
        assert!(matches!(a.matmul(&b), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn softmax_uniform_and_masked() {
        let x = Tensor::zeros(&[1, 3]);
        let y = x.softmax(None).unwrap();
        for &v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = t2(&[&[5.0, 100.0]]);
        let y = x.softmax(Some(&[true, false])).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_degenerate_mask() {
        let x = Tensor::zeros(&[2, 2]);
        let err = x.softmax(Some(&[true, true, false, false])).unwrap_err();
        assert_eq!(err, TensorError::DegenerateMask { row: 1 });
    }

    #[test]
    fn layernorm_cases() {
        let ones = Tensor::ones(&[2]);
        let zeros = Tensor::zeros(&[2]);
        let c = t2(&[&[4.0, 4.0]]).layernorm(&ones, &zeros).unwrap();
        assert_eq!(c.data(), &[0.0, 0.0]);
        // var = 1, so the eps shifts the result by ~5e-7
        let y = t2(&[&[1.0, 3.0]]).layernorm(&ones, &zeros).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-5);
        assert!((y.data()[1] - 1.0).abs() < 1e-5);
        assert!(t2(&[&[1.0]]).layernorm(&Tensor::ones(&[1]), &Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn kron_small_cases() {
        let b = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(Tensor::ones(&[1, 1]).kron(&b).unwrap(), b);
        let half = Tensor::full(&[2, 2], 0.5);
        let k = Tensor::eye(2).kron(&half).unwrap();
        let expected = t2(&[
            &[0.5, 0.5, 0.0, 0.0],
            &[0.5, 0.5, 0.0, 0.0],
            &[0.0, 0.0, 0.5, 0.5],
            &[0.0, 0.0, 0.5, 0.5],
        ]);
        assert_eq!(k, expected);
    }

    #[test]
    fn transpose_and_swap() {
        let x = Tensor::from_fn(&[2, 3, 4], |i| i as f64);
        let t = x.transpose().unwrap();
        assert_eq!(t.shape(), &[2, 4, 3]);
        assert_eq!(t.at(&[1, 2, 0]), x.at(&[1, 0, 2]));
        let s = x.swap_leading().unwrap();
        assert_eq!(s.shape(), &[3, 2, 4]);
        assert_eq!(s.at(&[2, 1, 3]), x.at(&[1, 2, 3]));
    }

    #[test]
    fn concat_and_select() {
        let a = Tensor::from_fn(&[2, 1, 2], |i| i as f64);
        let b = Tensor::from_fn(&[2, 2, 2], |i| 10.0 + i as f64);
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3, 2]);
        assert_eq!(c.at(&[1, 0, 1]), a.at(&[1, 0, 1]));
        assert_eq!(c.at(&[1, 2, 0]), b.at(&[1, 1, 0]));
        let idx = axis_select_indices(c.shape(), 1, &[2, 0]);
        let s = c.gather(&idx, &[2, 2, 2]).unwrap();
        assert_eq!(s.at(&[0, 0, 1]), c.at(&[0, 2, 1]));
        assert_eq!(s.at(&[1, 1, 0]), c.at(&[1, 0, 0]));
    }

    #[test]
    fn reshape_keeps_data() {
        let x = Tensor::from_fn(&[2, 6], |i| i as f64);
        let y = x.reshape(&[3, 4]).unwrap();
        assert_eq!(x.data(), y.data());
        assert!(x.reshape(&[5]).is_err());
    }
}
