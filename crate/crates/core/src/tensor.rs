//! Dense row-major tensors with three element types.
//!
//! Everything downstream (pixel batches, spike trains, bit planes, membrane
//! potentials) is carried by [`Tensor`]. Operations are pure and allocate a
//! fresh result; the only broadcasting supported is tensor-with-scalar.

use std::borrow::Cow;
use std::fmt;
use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?} (expected {expected})")]
    LengthMismatch {
        shape: Vec<usize>,
        len: usize,
        expected: usize,
    },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("bit tensor holds value {0} outside {{0, 1}}")]
    NotBinary(i64),
    #[error("division by zero in `{0}`")]
    DivisionByZero(BinaryOp),
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("cannot reduce an empty axis with `{0}`")]
    EmptyReduction(ReduceOp),
    #[error("concatenation of an empty list")]
    EmptyConcat,
    #[error("operation requires rank >= 1")]
    RankZero,
    #[error("range {start}..{end} out of bounds for leading extent {extent}")]
    SliceOutOfRange {
        start: usize,
        end: usize,
        extent: usize,
    },
    #[error("expected dtype {expected:?}, found {found:?}")]
    DTypeMismatch { expected: DType, found: DType },
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    Real64,
    Int64,
    Bit,
}

#[derive(Debug, Clone, PartialEq)]
enum Buffer {
    Real(Vec<f64>),
    Int(Vec<i64>),
    Bit(Vec<u8>),
}

impl Buffer {
    fn len(&self) -> usize {
        match self {
            Buffer::Real(v) => v.len(),
            Buffer::Int(v) => v.len(),
            Buffer::Bit(v) => v.len(),
        }
    }

    fn dtype(&self) -> DType {
        match self {
            Buffer::Real(_) => DType::Real64,
            Buffer::Int(_) => DType::Int64,
            Buffer::Bit(_) => DType::Bit,
        }
    }
}

/// Dense tensor with a row-major flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Buffer,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let expected = numel(shape);
    if expected != len {
        return Err(TensorError::LengthMismatch {
            shape: shape.to_vec(),
            len,
            expected,
        });
    }
    Ok(())
}

impl Tensor {
    pub fn from_real(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(Self {
            shape: shape.to_vec(),
            data: Buffer::Real(data),
        })
    }

    pub fn from_int(shape: &[usize], data: Vec<i64>) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(Self {
            shape: shape.to_vec(),
            data: Buffer::Int(data),
        })
    }

    /// Builds a bit tensor, rejecting anything outside {0, 1}.
    pub fn from_bits(shape: &[usize], data: Vec<u8>) -> Result<Self> {
        check_len(shape, data.len())?;
        if let Some(&bad) = data.iter().find(|&&b| b > 1) {
            return Err(TensorError::NotBinary(bad as i64));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Buffer::Bit(data),
        })
    }

    pub fn zeros(shape: &[usize], dtype: DType) -> Self {
        let n = numel(shape);
        let data = match dtype {
            DType::Real64 => Buffer::Real(vec![0.0; n]),
            DType::Int64 => Buffer::Int(vec![0; n]),
            DType::Bit => Buffer::Bit(vec![0; n]),
        };
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar_real(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: Buffer::Real(vec![value]),
        }
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
        self.data.len() == 0
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match &self.data {
            Buffer::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_real_mut(&mut self) -> Option<&mut [f64]> {
        match &mut self.data {
            Buffer::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<&[i64]> {
        match &self.data {
            Buffer::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bits(&self) -> Option<&[u8]> {
        match &self.data {
            Buffer::Bit(v) => Some(v),
            _ => None,
        }
    }

    /// Element at flat offset, widened to f64.
    pub fn get_f64(&self, offset: usize) -> f64 {
        match &self.data {
            Buffer::Real(v) => v[offset],
            Buffer::Int(v) => v[offset] as f64,
            Buffer::Bit(v) => v[offset] as f64,
        }
    }

    /// Copies the data out as f64, whatever the dtype.
    pub fn to_real_vec(&self) -> Vec<f64> {
        match &self.data {
            Buffer::Real(v) => v.clone(),
            Buffer::Int(v) => v.iter().map(|&x| x as f64).collect(),
            Buffer::Bit(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn to_real(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Buffer::Real(self.to_real_vec()),
        }
    }

    /// Narrows an integer or bit tensor to bit dtype; fails on values outside {0, 1}.
    pub fn to_bits(&self) -> Result<Tensor> {
        let bits = match &self.data {
            Buffer::Bit(v) => v.clone(),
            Buffer::Int(v) => v
                .iter()
                .map(|&x| match x {
                    0 | 1 => Ok(x as u8),
                    other => Err(TensorError::NotBinary(other)),
                })
                .collect::<Result<Vec<_>>>()?,
            Buffer::Real(_) => {
                return Err(TensorError::DTypeMismatch {
                    expected: DType::Int64,
                    found: DType::Real64,
                })
            }
        };
        Ok(Tensor {
            shape: self.shape.clone(),
            data: Buffer::Bit(bits),
        })
    }

    fn int_view(&self) -> Cow<'_, [i64]> {
        match &self.data {
            Buffer::Int(v) => Cow::Borrowed(v),
            Buffer::Bit(v) => Cow::Owned(v.iter().map(|&x| x as i64).collect()),
            Buffer::Real(v) => Cow::Owned(v.iter().map(|&x| x as i64).collect()),
        }
    }

    fn real_view(&self) -> Cow<'_, [f64]> {
        match &self.data {
            Buffer::Real(v) => Cow::Borrowed(v),
            _ => Cow::Owned(self.to_real_vec()),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        check_len(shape, self.len())?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Row-major strides of the current shape.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    /// Flat offset of a multi-index. Panics if the index is out of bounds.
    pub fn offset_of(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.rank(), "index rank mismatch");
        index
            .iter()
            .zip(&self.shape)
            .zip(self.strides())
            .map(|((&i, &extent), stride)| {
                assert!(i < extent, "index {i} out of bounds for extent {extent}");
                i * stride
            })
            .sum()
    }

    /// Multi-index of a flat offset.
    pub fn index_of(&self, mut offset: usize) -> Vec<usize> {
        assert!(offset < self.len(), "offset out of bounds");
        let strides = self.strides();
        strides
            .iter()
            .map(|&s| {
                let i = offset / s;
                offset %= s;
                i
            })
            .collect()
    }

    fn leading_stride(&self) -> Result<usize> {
        if self.shape.is_empty() {
            return Err(TensorError::RankZero);
        }
        Ok(numel(&self.shape[1..]))
    }

    /// Sub-tensor of leading-axis slices `range`.
    pub fn slice_axis0(&self, range: Range<usize>) -> Result<Tensor> {
        let stride = self.leading_stride()?;
        let extent = self.shape[0];
        if range.start > range.end || range.end > extent {
            return Err(TensorError::SliceOutOfRange {
                start: range.start,
                end: range.end,
                extent,
            });
        }
        let mut shape = self.shape.clone();
        shape[0] = range.len();
        let (a, b) = (range.start * stride, range.end * stride);
        let data = match &self.data {
            Buffer::Real(v) => Buffer::Real(v[a..b].to_vec()),
            Buffer::Int(v) => Buffer::Int(v[a..b].to_vec()),
            Buffer::Bit(v) => Buffer::Bit(v[a..b].to_vec()),
        };
        Ok(Tensor { shape, data })
    }

    /// Splits along the leading axis into consecutive pieces of the given extents.
    pub fn split_axis0(&self, extents: &[usize]) -> Result<Vec<Tensor>> {
        let total: usize = extents.iter().sum();
        let extent = self.shape.first().copied().ok_or(TensorError::RankZero)?;
        if total != extent {
            return Err(TensorError::SliceOutOfRange {
                start: 0,
                end: total,
                extent,
            });
        }
        let mut start = 0;
        extents
            .iter()
            .map(|&e| {
                let piece = self.slice_axis0(start..start + e);
                start += e;
                piece
            })
            .collect()
    }

    /// Reverses the order of leading-axis slices.
    pub fn reverse_axis0(&self) -> Result<Tensor> {
        let extent = self.shape.first().copied().ok_or(TensorError::RankZero)?;
        let parts = (0..extent)
            .rev()
            .map(|i| self.slice_axis0(i..i + 1))
            .collect::<Result<Vec<_>>>()?;
        if parts.is_empty() {
            return Ok(self.clone());
        }
        concat_axis0(&parts)
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({:?}, {:?})", self.dtype(), self.shape)
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    /// True division; always produces real64.
    Div,
    /// Floored division, `⌊a / b⌋`, keeping integer dtype for integer inputs.
    FloorDiv,
    /// Floored modulo: the result takes the sign of the divisor.
    Mod,
    /// `a >= b`, producing a bit tensor.
    Ge,
}

impl fmt::Display for BinaryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::FloorDiv => "floor_div",
            BinaryOp::Mod => "mod",
            BinaryOp::Ge => "compare_ge",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Int(i64),
    Real(f64),
}

/// Right-hand side of [`elementwise`]: another tensor of equal shape or a scalar.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(Scalar),
}

impl<'a> From<&'a Tensor> for Operand<'a> {
    fn from(t: &'a Tensor) -> Self {
        Operand::Tensor(t)
    }
}

impl From<i64> for Operand<'_> {
    fn from(v: i64) -> Self {
        Operand::Scalar(Scalar::Int(v))
    }
}

impl From<f64> for Operand<'_> {
    fn from(v: f64) -> Self {
        Operand::Scalar(Scalar::Real(v))
    }
}

enum Rhs<'a, T: Clone> {
    Many(Cow<'a, [T]>),
    One(T),
}

impl<T: Copy> Rhs<'_, T> {
    fn at(&self, i: usize) -> T {
        match self {
            Rhs::Many(v) => v[i],
            Rhs::One(x) => *x,
        }
    }

    fn any(&self, pred: impl Fn(T) -> bool) -> bool {
        match self {
            Rhs::Many(v) => v.iter().any(|&x| pred(x)),
            Rhs::One(x) => pred(*x),
        }
    }
}

fn floor_div_i64(a: i64, b: i64) -> i64 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn floor_mod_i64(a: i64, b: i64) -> i64 {
    let r = a % b;
    if r != 0 && ((r < 0) != (b < 0)) {
        r + b
    } else {
        r
    }
}

fn floor_mod_f64(a: f64, b: f64) -> f64 {
    a - b * (a / b).floor()
}

/// Applies `op` element-wise between `a` and `b`.
///
/// Integer and bit operands compute in int64; a real operand (or `Div`) promotes
/// the computation to real64. `Ge` always yields a bit tensor.
pub fn elementwise<'a>(op: BinaryOp, a: &Tensor, b: impl Into<Operand<'a>>) -> Result<Tensor> {
    let b = b.into();
    let b_real = match b {
        Operand::Tensor(t) => {
            if t.shape != a.shape {
                return Err(TensorError::ShapeMismatch {
                    left: a.shape.clone(),
                    right: t.shape.clone(),
                });
            }
            t.dtype() == DType::Real64
        }
        Operand::Scalar(Scalar::Real(_)) => true,
        Operand::Scalar(Scalar::Int(_)) => false,
    };
    let real = a.dtype() == DType::Real64 || b_real || op == BinaryOp::Div;
    let n = a.len();
    let shape = a.shape.clone();

    if real {
        let lhs = a.real_view();
        let rhs = match b {
            Operand::Tensor(t) => Rhs::Many(t.real_view()),
            Operand::Scalar(Scalar::Real(x)) => Rhs::One(x),
            Operand::Scalar(Scalar::Int(x)) => Rhs::One(x as f64),
        };
        if matches!(op, BinaryOp::Div | BinaryOp::FloorDiv | BinaryOp::Mod) && rhs.any(|x| x == 0.0)
        {
            return Err(TensorError::DivisionByZero(op));
        }
        if op == BinaryOp::Ge {
            let bits = (0..n).map(|i| u8::from(lhs[i] >= rhs.at(i))).collect();
            return Ok(Tensor {
                shape,
                data: Buffer::Bit(bits),
            });
        }
        let f: fn(f64, f64) -> f64 = match op {
            BinaryOp::Add => |x, y| x + y,
            BinaryOp::Sub => |x, y| x - y,
            BinaryOp::Mul => |x, y| x * y,
            BinaryOp::Div => |x, y| x / y,
            BinaryOp::FloorDiv => |x, y| (x / y).floor(),
            BinaryOp::Mod => floor_mod_f64,
            BinaryOp::Ge => unreachable!(),
        };
        let out = (0..n).map(|i| f(lhs[i], rhs.at(i))).collect();
        Ok(Tensor {
            shape,
            data: Buffer::Real(out),
        })
    } else {
        let lhs = a.int_view();
        let rhs = match b {
            Operand::Tensor(t) => Rhs::Many(t.int_view()),
            Operand::Scalar(Scalar::Int(x)) => Rhs::One(x),
            Operand::Scalar(Scalar::Real(_)) => unreachable!(),
        };
        if matches!(op, BinaryOp::FloorDiv | BinaryOp::Mod) && rhs.any(|x| x == 0) {
            return Err(TensorError::DivisionByZero(op));
        }
        if op == BinaryOp::Ge {
            let bits = (0..n).map(|i| u8::from(lhs[i] >= rhs.at(i))).collect();
            return Ok(Tensor {
                shape,
                data: Buffer::Bit(bits),
            });
        }
        let f: fn(i64, i64) -> i64 = match op {
            BinaryOp::Add => |x, y| x + y,
            BinaryOp::Sub => |x, y| x - y,
            BinaryOp::Mul => |x, y| x * y,
            BinaryOp::FloorDiv => floor_div_i64,
            BinaryOp::Mod => floor_mod_i64,
            BinaryOp::Div | BinaryOp::Ge => unreachable!(),
        };
        let out = (0..n).map(|i| f(lhs[i], rhs.at(i))).collect();
        Ok(Tensor {
            shape,
            data: Buffer::Int(out),
        })
    }
}

/// Concatenates tensors along the leading axis, preserving slice order.
///
/// All parts must share dtype and trailing shape.
pub fn concat_axis0(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or(TensorError::EmptyConcat)?;
    if first.rank() == 0 {
        return Err(TensorError::RankZero);
    }
    let trailing = &first.shape[1..];
    let mut leading = 0;
    for p in parts {
        if p.rank() == 0 || &p.shape[1..] != trailing {
            return Err(TensorError::ShapeMismatch {
                left: first.shape.clone(),
                right: p.shape.clone(),
            });
        }
        if p.dtype() != first.dtype() {
            return Err(TensorError::DTypeMismatch {
                expected: first.dtype(),
                found: p.dtype(),
            });
        }
        leading += p.shape[0];
    }
    let mut shape = first.shape.clone();
    shape[0] = leading;
    let data = match &first.data {
        Buffer::Real(_) => Buffer::Real(
            parts
                .iter()
                .flat_map(|p| p.as_real().unwrap().iter().copied())
                .collect(),
        ),
        Buffer::Int(_) => Buffer::Int(
            parts
                .iter()
                .flat_map(|p| p.as_int().unwrap().iter().copied())
                .collect(),
        ),
        Buffer::Bit(_) => Buffer::Bit(
            parts
                .iter()
                .flat_map(|p| p.as_bits().unwrap().iter().copied())
                .collect(),
        ),
    };
    Ok(Tensor { shape, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReduceOp {
    Sum,
    Mean,
    Argmax,
}

impl fmt::Display for ReduceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReduceOp::Sum => "sum",
            ReduceOp::Mean => "mean",
            ReduceOp::Argmax => "argmax",
        })
    }
}

/// Reduces `axis` away.
///
/// `Sum` keeps int64 for integer/bit input and real64 otherwise; `Mean` is
/// always real64; `Argmax` yields int64 indices (first maximum wins). Summing an
/// empty axis gives zeros; `Mean` and `Argmax` reject it.
pub fn reduce(op: ReduceOp, t: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= t.rank() {
        return Err(TensorError::AxisOutOfRange {
            axis,
            rank: t.rank(),
        });
    }
    let extent = t.shape[axis];
    if extent == 0 && op != ReduceOp::Sum {
        return Err(TensorError::EmptyReduction(op));
    }
    let outer: usize = t.shape[..axis].iter().product();
    let inner: usize = t.shape[axis + 1..].iter().product();
    let mut shape = t.shape.clone();
    shape.remove(axis);
    let at = |o: usize, k: usize, i: usize| (o * extent + k) * inner + i;

    match op {
        ReduceOp::Sum if t.dtype() != DType::Real64 => {
            let v = t.int_view();
            let mut out = vec![0i64; outer * inner];
            for o in 0..outer {
                for k in 0..extent {
                    for i in 0..inner {
                        out[o * inner + i] += v[at(o, k, i)];
                    }
                }
            }
            Tensor::from_int(&shape, out)
        }
        ReduceOp::Sum | ReduceOp::Mean => {
            let v = t.real_view();
            let mut out = vec![0.0f64; outer * inner];
            for o in 0..outer {
                for k in 0..extent {
                    for i in 0..inner {
                        out[o * inner + i] += v[at(o, k, i)];
                    }
                }
            }
            if op == ReduceOp::Mean {
                out.iter_mut().for_each(|x| *x /= extent as f64);
            }
            Tensor::from_real(&shape, out)
        }
        ReduceOp::Argmax => {
            let v = t.real_view();
            let mut out = vec![0i64; outer * inner];
            for o in 0..outer {
                for i in 0..inner {
                    let mut best = 0;
                    for k in 1..extent {
                        if v[at(o, k, i)] > v[at(o, best, i)] {
                            best = k;
                        }
                    }
                    out[o * inner + i] = best as i64;
                }
            }
            Tensor::from_int(&shape, out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ints(shape: &[usize], v: &[i64]) -> Tensor {
        Tensor::from_int(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn mod_parity() {
        let r = elementwise(BinaryOp::Mod, &ints(&[3], &[5, 6, 7]), 2).unwrap();
        assert_eq!(r.as_int().unwrap(), &[1, 0, 1]);
    }

    #[test]
    fn floor_div_halves() {
        let r = elementwise(BinaryOp::FloorDiv, &ints(&[1], &[150]), 2).unwrap();
        assert_eq!(r.as_int().unwrap(), &[75]);
        let neg = elementwise(BinaryOp::FloorDiv, &ints(&[1], &[-3]), 2).unwrap();
        assert_eq!(neg.as_int().unwrap(), &[-2]);
    }

    #[test]
    fn add_zero_is_identity() {
        let x = ints(&[2, 2], &[3, 1, 4, 1]);
        assert_eq!(elementwise(BinaryOp::Add, &x, 0).unwrap(), x);
    }

    #[test]
    fn div_and_mod_by_zero_fail() {
        let x = ints(&[2], &[1, 2]);
        let zero = ints(&[2], &[1, 0]);
        assert_eq!(
            elementwise(BinaryOp::Mod, &x, &zero),
            Err(TensorError::DivisionByZero(BinaryOp::Mod))
        );
        assert!(elementwise(BinaryOp::Div, &x, 0).is_err());
        assert!(elementwise(BinaryOp::FloorDiv, &x.to_real(), 0.0).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = ints(&[2], &[1, 2]);
        let b = ints(&[3], &[1, 2, 3]);
        assert!(matches!(
            elementwise(BinaryOp::Add, &a, &b),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn compare_ge_yields_bits() {
        let x = Tensor::from_real(&[3], vec![0.5, 1.0, 2.0]).unwrap();
        let r = elementwise(BinaryOp::Ge, &x, 1.0).unwrap();
        assert_eq!(r.as_bits().unwrap(), &[0, 1, 1]);
    }

    #[test]
    fn bits_reject_other_values() {
        assert_eq!(
            Tensor::from_bits(&[2], vec![0, 2]),
            Err(TensorError::NotBinary(2))
        );
        assert!(ints(&[2], &[1, 3]).to_bits().is_err());
    }

    #[test]
    fn concat_extents_add() {
        let a = Tensor::zeros(&[9, 1, 28, 28], DType::Bit);
        let b = Tensor::zeros(&[8, 1, 28, 28], DType::Bit);
        let c = concat_axis0(&[a.clone(), b]).unwrap();
        assert_eq!(c.shape(), &[17, 1, 28, 28]);
        assert_eq!(c.slice_axis0(0..9).unwrap(), a);
        assert_eq!(concat_axis0(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn concat_rejects_trailing_mismatch() {
        let a = Tensor::zeros(&[2, 3], DType::Real64);
        let b = Tensor::zeros(&[2, 4], DType::Real64);
        assert!(concat_axis0(&[a, b]).is_err());
        assert_eq!(concat_axis0(&[]), Err(TensorError::EmptyConcat));
    }

    #[test]
    fn reductions() {
        let t = ints(&[2, 2], &[0, 1, 1, 1]);
        let m = reduce(ReduceOp::Mean, &t, 0).unwrap();
        assert_eq!(m.as_real().unwrap(), &[0.5, 1.0]);
        let v = Tensor::from_real(&[3], vec![0.1, 0.7, 0.2]).unwrap();
        let am = reduce(ReduceOp::Argmax, &v, 0).unwrap();
        assert_eq!(am.shape(), &[] as &[usize]);
        assert_eq!(am.as_int().unwrap(), &[1]);
        let empty = Tensor::zeros(&[2, 0], DType::Real64);
        let s = reduce(ReduceOp::Sum, &empty, 1).unwrap();
        assert_eq!(s.as_real().unwrap(), &[0.0, 0.0]);
        assert!(reduce(ReduceOp::Sum, &t, 2).is_err());
    }

    fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..5, 1..5)
    }

    proptest! {
        #[test]
        fn offset_round_trips(shape in shape_strategy(), seed in 0usize..10_000) {
            let t = Tensor::zeros(&shape, DType::Int64);
            let offset = seed % t.len();
            let idx = t.index_of(offset);
            prop_assert_eq!(t.offset_of(&idx), offset);
        }

        #[test]
        fn concat_then_split_restores_parts(
            extents in prop::collection::vec(0usize..4, 1..5),
            trailing in prop::collection::vec(1usize..4, 0..3),
        ) {
            let mut counter = 0i64;
            let parts: Vec<Tensor> = extents.iter().map(|&e| {
                let mut shape = vec![e];
                shape.extend(&trailing);
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| { counter += 1; counter }).collect();
                Tensor::from_int(&shape, data).unwrap()
            }).collect();
            let joined = concat_axis0(&parts).unwrap();
            prop_assert_eq!(joined.split_axis0(&extents).unwrap(), parts);
        }
    }
}
