//! Dense multiway arrays with permutation, pairwise contraction, truncated
//! SVD and exact network contraction.
//!
//! Entries are stored row-major: the last leg varies fastest. Matrix kernels
//! (GEMM, QR, SVD) run through `faer` in sequential mode so results are
//! bit-reproducible.

use std::collections::BTreeMap;
use std::fmt::Debug;

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default per-intermediate memory cap for network contraction (8 GiB).
pub const DEFAULT_MEMORY_CAP: usize = 8 << 30;

/// Scalar types a [`Tensor`] can hold.
pub trait Scalar:
    faer::traits::ComplexField
    + Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn conj(self) -> Self;
    fn one() -> Self;
    fn from_real(x: f64) -> Self;
    fn is_finite_value(&self) -> bool;
    fn norm_sq(&self) -> f64;
    fn scale_real(self, x: f64) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn conj(self) -> Self {
        self
    }
    fn one() -> Self {
        1.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
    fn norm_sq(&self) -> f64 {
        self * self
    }
    fn scale_real(self, x: f64) -> Self {
        self * x
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn norm_sq(&self) -> f64 {
        self.norm_sqr()
    }
    fn scale_real(self, x: f64) -> Self {
        self * x
    }
}

/// Dense tensor with an explicit shape and row-major entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn product(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if product(&shape) != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} entries, got {}",
                shape,
                product(&shape),
                data.len()
            )));
        }
        if !data.iter().all(Scalar::is_finite_value) {
            return Err(Error::NonFinite("tensor construction"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = product(&shape);
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let n = product(&shape);
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            data.push(f(&idx));
            for axis in (0..shape.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < shape[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Self { shape, data }
    }

    /// Square identity matrix.
    pub fn identity(n: usize) -> Self {
        Self::from_fn(vec![n, n], |i| if i[0] == i[1] { T::one() } else { T::zero() })
    }

    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(product(&shape), data.len());
        Self { shape, data }
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let k = self.offset(index);
        self.data[k] = value;
    }

    /// Value of a rank-0 tensor (or the single entry of any 1-element tensor).
    pub fn into_scalar(self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(Error::Shape(format!(
                "expected a single entry, tensor has shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if product(&shape) != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Reorders legs: output leg `k` is input leg `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Shape(format!(
                "{perm:?} is not a permutation of {r} legs"
            )));
        }
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let in_strides = strides(&self.shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let data = permute_data(&self.data, &out_shape, &src_strides);
        Ok(Self {
            shape: out_shape,
            data,
        })
    }

    /// Multiplies every slice along `axis` by the matching weight.
    pub fn scale_axis(&mut self, axis: usize, weights: &[f64]) -> Result<()> {
        if axis >= self.rank() || self.shape[axis] != weights.len() {
            return Err(Error::Shape(format!(
                "axis {axis} of {:?} cannot take {} weights",
                self.shape,
                weights.len()
            )));
        }
        let inner: usize = self.shape[axis + 1..].iter().product();
        let dim = self.shape[axis];
        for (k, chunk) in self.data.chunks_mut(inner).enumerate() {
            let w = weights[k % dim];
            for x in chunk {
                *x = x.scale_real(w);
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for x in &mut self.data {
            *x = x.scale_real(factor);
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(Scalar::norm_sq).sum::<f64>().sqrt()
    }

    /// Largest entrywise distance to `other`; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a - b;
                d.norm_sq().sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Matrix view of a rank-2 tensor.
    pub fn as_mat(&self) -> Result<MatRef<'_, T>> {
        if self.rank() != 2 {
            return Err(Error::Shape(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            )));
        }
        Ok(MatRef::from_row_major_slice(
            &self.data,
            self.shape[0],
            self.shape[1],
        ))
    }

    /// Builds a rank-2 tensor from any faer matrix view.
    pub fn from_mat(m: MatRef<'_, T>) -> Self {
        let (r, c) = (m.nrows(), m.ncols());
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(m[(i, j)]);
            }
        }
        Self {
            shape: vec![r, c],
            data,
        }
    }

    /// Conjugate transpose of a matrix.
    pub fn adjoint(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::Shape("adjoint of a non-matrix".into()));
        }
        let mut t = self.permute(&[1, 0])?;
        for x in &mut t.data {
            *x = Scalar::conj(*x);
        }
        Ok(t)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::Shape("matmul needs two matrices".into()));
        }
        contract(self, other, &[(1, 0)])
    }

    /// Kronecker product of two matrices (`self` is the more significant factor).
    pub fn kron(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::Shape("kron needs two matrices".into()));
        }
        let (a, b) = (self.shape[0], self.shape[1]);
        let (c, d) = (other.shape[0], other.shape[1]);
        contract(self, other, &[])?
            .permute(&[0, 2, 1, 3])?
            .reshape(vec![a * c, b * d])
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

fn permute_data<T: Copy>(src: &[T], out_shape: &[usize], src_strides: &[usize]) -> Vec<T> {
    let n = product(out_shape);
    let mut out = Vec::with_capacity(n);
    let r = out_shape.len();
    if r == 0 {
        out.push(src[0]);
        return out;
    }
    let last = out_shape[r - 1];
    let last_stride = src_strides[r - 1];
    let mut idx = vec![0usize; r];
    let mut base = 0usize;
    let rows = n / last.max(1);
    for _ in 0..rows {
        if last_stride == 1 {
            out.extend_from_slice(&src[base..base + last]);
        } else {
            let mut off = base;
            for _ in 0..last {
                out.push(src[off]);
                off += last_stride;
            }
        }
        // advance all but the last axis
        for axis in (0..r - 1).rev() {
            idx[axis] += 1;
            base += src_strides[axis];
            if idx[axis] < out_shape[axis] {
                break;
            }
            base -= src_strides[axis] * out_shape[axis];
            idx[axis] = 0;
        }
    }
    out
}

/// Row-major GEMM: `(m x k) * (k x n)`.
pub(crate) fn gemm<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    if m == 0 || n == 0 {
        return out;
    }
    if k == 0 {
        return out;
    }
    let lhs = MatRef::from_row_major_slice(a, m, k);
    let rhs = MatRef::from_row_major_slice(b, k, n);
    let dst = MatMut::from_row_major_slice_mut(&mut out, m, n);
    matmul(dst, Accum::Replace, lhs, rhs, T::one(), Par::Seq);
    out
}

/// Sums over the paired legs of `a` and `b`. The result carries `a`'s free
/// legs (in order) followed by `b`'s free legs.
pub fn contract<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, axis_pairs: &[(usize, usize)]) -> Result<Tensor<T>> {
    let mut used_a = vec![false; a.rank()];
    let mut used_b = vec![false; b.rank()];
    for &(la, lb) in axis_pairs {
        if la >= a.rank() || lb >= b.rank() {
            return Err(Error::Shape(format!(
                "leg pair ({la}, {lb}) out of range for shapes {:?} and {:?}",
                a.shape, b.shape
            )));
        }
        if used_a[la] || used_b[lb] {
            return Err(Error::Shape(format!("leg paired twice in {axis_pairs:?}")));
        }
        if a.shape[la] != b.shape[lb] {
            return Err(Error::Shape(format!(
                "dimension mismatch: leg {la} of {:?} vs leg {lb} of {:?}",
                a.shape, b.shape
            )));
        }
        used_a[la] = true;
        used_b[lb] = true;
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|&i| !used_b[i]).collect();

    let perm_a: Vec<usize> = free_a
        .iter()
        .copied()
        .chain(axis_pairs.iter().map(|p| p.0))
        .collect();
    let perm_b: Vec<usize> = axis_pairs
        .iter()
        .map(|p| p.1)
        .chain(free_b.iter().copied())
        .collect();
    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let k: usize = axis_pairs.iter().map(|p| a.shape[p.0]).product();
    let n: usize = free_b.iter().map(|&i| b.shape[i]).product();

    let pa = a.permute(&perm_a)?;
    let pb = b.permute(&perm_b)?;
    let data = gemm(&pa.data, &pb.data, m, k, n);
    let shape = free_a
        .iter()
        .map(|&i| a.shape[i])
        .chain(free_b.iter().map(|&i| b.shape[i]))
        .collect();
    Ok(Tensor { shape, data })
}

/// Result of [`svd_truncate`]: `m ≈ u · diag(s) · vᵀ`.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    /// Left factor, `rows x kept`, orthonormal columns.
    pub u: Tensor<f64>,
    /// Kept singular values, descending.
    pub s: Vec<f64>,
    /// Right factor, `cols x kept`, orthonormal columns.
    pub v: Tensor<f64>,
    /// Squared weight of dropped singular values relative to the total.
    pub discarded_weight: f64,
    /// Sum of all squared singular values.
    pub total_weight: f64,
    /// Numerical rank before truncation.
    pub rank: usize,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> Tensor<f64> {
        let (m, k) = (self.u.shape[0], self.s.len());
        let n = self.v.shape[0];
        let mut us = self.u.clone();
        us.scale_axis(1, &self.s).expect("shape checked at construction");
        let vt = self.v.permute(&[1, 0]).expect("matrix");
        Tensor::from_raw(vec![m, n], gemm(&us.data, &vt.data, m, k, n))
    }
}

/// Singular values at or below `s_max * NUMERICAL_RANK_RTOL * max(rows, cols)`
/// are treated as exact zeros: they are never kept and never counted as
/// discarded weight.
pub const NUMERICAL_RANK_RTOL: f64 = f64::EPSILON;

/// Truncated SVD of a matrix: keeps at most `chi` singular values and drops
/// trailing ones whose relative squared weight `s_i² / Σ s²` is below `eps`.
pub fn svd_truncate(m: &Tensor<f64>, chi: usize, eps: f64) -> Result<TruncatedSvd> {
    if chi == 0 {
        return Err(Error::InvalidArgument("chi must be at least 1".into()));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::InvalidArgument("eps must be non-negative".into()));
    }
    if !m.data.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    let mat = m.as_mat()?;
    let (rows, cols) = (mat.nrows(), mat.ncols());
    if rows == 0 || cols == 0 {
        return Err(Error::Shape("svd of an empty matrix".into()));
    }
    if let Some(entries) = monomial_entries(m) {
        return Ok(monomial_svd(rows, cols, &entries, chi, eps));
    }
    let svd = mat.thin_svd().map_err(|_| Error::Svd)?;
    let sv = svd.S().column_vector();
    let full: Vec<f64> = (0..sv.nrows()).map(|i| sv[i]).collect();
    let floor = full[0] * NUMERICAL_RANK_RTOL * rows.max(cols) as f64;
    let rank = full.iter().take_while(|&&s| s > floor).count();
    let total: f64 = full[..rank].iter().map(|s| s * s).sum();

    let mut keep = rank.min(chi);
    if eps > 0.0 && total > 0.0 {
        while keep > 1 && full[keep - 1] * full[keep - 1] / total < eps {
            keep -= 1;
        }
    }
    let keep = keep.max(1);
    let dropped: f64 = full[keep.min(rank)..rank].iter().map(|s| s * s).sum();
    let discarded_weight = if total > 0.0 { (dropped / total).clamp(0.0, 1.0) } else { 0.0 };

    let u = svd.U();
    let v = svd.V();
    let u = Tensor::from_mat(u.subcols(0, keep));
    let v = Tensor::from_mat(v.subcols(0, keep));
    Ok(TruncatedSvd {
        u,
        s: full[..keep].to_vec(),
        v,
        discarded_weight,
        total_weight: total,
        rank,
    })
}

/// Nonzero entries of a matrix with at most one nonzero per row and per
/// column, ordered by descending magnitude; `None` otherwise.
fn monomial_entries(m: &Tensor<f64>) -> Option<Vec<(usize, usize, f64)>> {
    let (rows, cols) = (m.shape[0], m.shape[1]);
    let mut col_used = vec![false; cols];
    let mut entries = Vec::new();
    for r in 0..rows {
        let mut seen = false;
        for c in 0..cols {
            let x = m.data[r * cols + c];
            if x != 0.0 {
                if seen || col_used[c] {
                    return None;
                }
                seen = true;
                col_used[c] = true;
                entries.push((r, c, x));
            }
        }
    }
    entries.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));
    Some(entries)
}

/// Exact decomposition of a generalized permutation matrix. Factors are
/// signed unit vectors, so Clifford dynamics stays bit-exact.
fn monomial_svd(
    rows: usize,
    cols: usize,
    entries: &[(usize, usize, f64)],
    chi: usize,
    eps: f64,
) -> TruncatedSvd {
    let rank = entries.len();
    let total: f64 = entries.iter().map(|e| e.2 * e.2).sum();
    let mut keep = rank.min(chi);
    if eps > 0.0 && total > 0.0 {
        while keep > 1 && entries[keep - 1].2 * entries[keep - 1].2 / total < eps {
            keep -= 1;
        }
    }
    let keep = keep.max(1);
    let dropped: f64 = entries[keep.min(rank)..].iter().map(|e| e.2 * e.2).sum();
    let discarded_weight = if total > 0.0 { (dropped / total).clamp(0.0, 1.0) } else { 0.0 };
    let mut u = Tensor::zeros(vec![rows, keep]);
    let mut v = Tensor::zeros(vec![cols, keep]);
    let mut s = vec![0.0; keep];
    for k in 0..keep {
        match entries.get(k) {
            Some(&(r, c, x)) => {
                u.data[r * keep + k] = 1.0;
                v.data[c * keep + k] = x.signum();
                s[k] = x.abs();
            }
            None => {
                // zero matrix: any unit vectors will do
                u.data[k * keep + k] = 1.0;
                v.data[k * keep + k] = 1.0;
            }
        }
    }
    TruncatedSvd {
        u,
        s,
        v,
        discarded_weight,
        total_weight: total,
        rank,
    }
}

/// Thin QR of a real matrix: `m = q · r` with `q` having orthonormal columns.
pub fn thin_qr(m: &Tensor<f64>) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let mat = m.as_mat()?;
    let qr = mat.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    Ok((Tensor::from_mat(q.as_ref()), Tensor::from_mat(r)))
}

/// Bond label shared by two legs of a network (or open when it appears once).
pub type Label = usize;

/// One pairwise step of a contraction sequence in single-static-assignment
/// form: inputs are numbered `0..n`, the `k`-th step produces id `n + k`.
pub type ContractionPath = Vec<(usize, usize)>;

/// Estimated cost of a contraction sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PathCost {
    /// Multiply-add count summed over steps.
    pub flops: f64,
    /// Entry count of the largest intermediate.
    pub largest_intermediate: f64,
}

/// A set of tensors whose legs carry bond labels. A label appearing on two
/// legs is summed over; labels appearing once are open.
#[derive(Clone, Debug)]
pub struct Network<T = f64> {
    pub tensors: Vec<Tensor<T>>,
    pub labels: Vec<Vec<Label>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(tensors: Vec<Tensor<T>>, labels: Vec<Vec<Label>>) -> Result<Self> {
        let net = Self { tensors, labels };
        net.label_dims()?;
        Ok(net)
    }

    /// Checks bond consistency and returns each label's dimension.
    pub fn label_dims(&self) -> Result<BTreeMap<Label, (usize, usize)>> {
        if self.tensors.len() != self.labels.len() {
            return Err(Error::Shape("one label list per tensor required".into()));
        }
        let mut dims: BTreeMap<Label, (usize, usize)> = BTreeMap::new();
        for (t, labels) in self.tensors.iter().zip(&self.labels) {
            if t.rank() != labels.len() {
                return Err(Error::Shape(format!(
                    "tensor of shape {:?} given {} labels",
                    t.shape(),
                    labels.len()
                )));
            }
            for (&l, &d) in labels.iter().zip(t.shape()) {
                let e = dims.entry(l).or_insert((d, 0));
                if e.0 != d {
                    return Err(Error::Shape(format!(
                        "bond {l} has inconsistent dimensions {} and {d}",
                        e.0
                    )));
                }
                e.1 += 1;
                if e.1 > 2 {
                    return Err(Error::Shape(format!("bond {l} appears on more than two legs")));
                }
            }
        }
        Ok(dims)
    }

    fn dim_map(&self) -> BTreeMap<Label, usize> {
        self.labels
            .iter()
            .zip(&self.tensors)
            .flat_map(|(ls, t)| ls.iter().copied().zip(t.shape().iter().copied()))
            .collect()
    }

    /// Greedy sequence: repeatedly contract the pair of tensors sharing a bond
    /// whose result has the fewest entries; ties go to the smallest ids.
    /// Disconnected pieces are joined by outer products, smallest first.
    pub fn greedy_path(&self) -> ContractionPath {
        greedy_path(&self.labels, &self.dim_map())
    }

    /// Path that folds tensors into one accumulator in the given order.
    pub fn sequential_path(order: &[usize]) -> ContractionPath {
        let n = order.len();
        let mut path = Vec::with_capacity(n.saturating_sub(1));
        if n < 2 {
            return path;
        }
        let mut acc = order[0];
        for (k, &t) in order[1..].iter().enumerate() {
            path.push((acc, t));
            acc = n + k;
        }
        path
    }

    pub fn path_cost(&self, path: &[(usize, usize)]) -> Result<PathCost> {
        path_cost(&self.labels, &self.dim_map(), path)
    }

    /// Contracts the whole network. `open` lists the labels that remain, in
    /// output order; for a closed network pass an empty slice and read the
    /// scalar with [`Tensor::into_scalar`]. Without a `path` the greedy
    /// sequence is used.
    pub fn contract(
        self,
        open: &[Label],
        path: Option<&[(usize, usize)]>,
        memory_cap: usize,
    ) -> Result<Tensor<T>> {
        let dims = self.label_dims()?;
        let dangling: Vec<Label> = dims
            .iter()
            .filter(|(_, &(_, count))| count == 1)
            .map(|(&l, _)| l)
            .collect();
        let mut sorted_open = open.to_vec();
        sorted_open.sort_unstable();
        if sorted_open != dangling {
            return Err(Error::Shape(format!(
                "open legs {open:?} do not match unpaired bonds {dangling:?}"
            )));
        }
        let n = self.tensors.len();
        if n == 0 {
            return Err(Error::Shape("empty network".into()));
        }
        let path: ContractionPath = match path {
            Some(p) => p.to_vec(),
            None => self.greedy_path(),
        };
        validate_path(n, &path)?;
        let mut slots: Vec<Option<(Tensor<T>, Vec<Label>)>> = self
            .tensors
            .into_iter()
            .zip(self.labels)
            .map(Some)
            .collect();
        let elem = std::mem::size_of::<T>();
        for &(i, j) in &path {
            let (a, la) = slots[i].take().expect("validated path");
            let (b, lb) = slots[j].take().expect("validated path");
            let pairs: Vec<(usize, usize)> = la
                .iter()
                .enumerate()
                .filter_map(|(ia, l)| lb.iter().position(|m| m == l).map(|ib| (ia, ib)))
                .collect();
            let out_labels: Vec<Label> = la
                .iter()
                .filter(|l| !lb.contains(l))
                .chain(lb.iter().filter(|l| !la.contains(l)))
                .copied()
                .collect();
            let entries: f64 = out_labels.iter().map(|l| dims[l].0 as f64).product();
            if entries * elem as f64 > memory_cap as f64 {
                return Err(Error::ResourceLimit(format!(
                    "intermediate of {entries:.3e} entries exceeds the memory cap of {memory_cap} bytes"
                )));
            }
            let c = contract(&a, &b, &pairs)?;
            slots.push(Some((c, out_labels)));
        }
        let (result, labels) = slots
            .into_iter()
            .rev()
            .find_map(|s| s)
            .expect("one tensor remains");
        let perm: Vec<usize> = open
            .iter()
            .map(|l| labels.iter().position(|m| m == l).expect("open label present"))
            .collect();
        result.permute(&perm)
    }
}

fn validate_path(n: usize, path: &[(usize, usize)]) -> Result<()> {
    if path.len() + 1 != n {
        return Err(Error::InvalidArgument(format!(
            "a network of {n} tensors needs {} contraction steps, path has {}",
            n - 1,
            path.len()
        )));
    }
    let mut alive = vec![true; n];
    for (k, &(i, j)) in path.iter().enumerate() {
        if i == j || i >= alive.len() || j >= alive.len() || !alive[i] || !alive[j] {
            return Err(Error::InvalidArgument(format!(
                "step {k} ({i}, {j}) refers to a consumed or unknown tensor"
            )));
        }
        alive[i] = false;
        alive[j] = false;
        alive.push(true);
    }
    Ok(())
}

fn merged_labels(a: &[Label], b: &[Label]) -> Vec<Label> {
    a.iter()
        .filter(|l| !b.contains(l))
        .chain(b.iter().filter(|l| !a.contains(l)))
        .copied()
        .collect()
}

fn size_of_labels(labels: &[Label], dims: &BTreeMap<Label, usize>) -> f64 {
    labels.iter().map(|l| dims[l] as f64).product()
}

fn union_size(a: &[Label], b: &[Label], dims: &BTreeMap<Label, usize>) -> f64 {
    size_of_labels(a, dims) * b.iter().filter(|l| !a.contains(l)).map(|l| dims[l] as f64).product::<f64>()
}

pub(crate) fn greedy_path(labels: &[Vec<Label>], dims: &BTreeMap<Label, usize>) -> ContractionPath {
    let n = labels.len();
    let mut live: BTreeMap<usize, Vec<Label>> = labels.iter().cloned().enumerate().collect();
    let mut next_id = n;
    let mut path = Vec::with_capacity(n.saturating_sub(1));
    while live.len() > 1 {
        // bond -> the (at most two) live tensors carrying it
        let mut owners: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
        for (&id, ls) in &live {
            for &l in ls {
                owners.entry(l).or_default().push(id);
            }
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for ids in owners.values() {
            if let [i, j] = ids[..] {
                let (i, j) = (i.min(j), i.max(j));
                let size = size_of_labels(&merged_labels(&live[&i], &live[&j]), dims);
                let better = match best {
                    None => true,
                    Some((s, bi, bj)) => size < s || (size == s && (i, j) < (bi, bj)),
                };
                if better {
                    best = Some((size, i, j));
                }
            }
        }
        let (i, j) = match best {
            Some((_, i, j)) => (i, j),
            None => {
                // no shared bonds left: outer product of the two smallest
                let mut by_size: Vec<(f64, usize)> = live
                    .iter()
                    .map(|(&id, ls)| (size_of_labels(ls, dims), id))
                    .collect();
                by_size.sort_by(|a, b| a.partial_cmp(b).expect("finite sizes"));
                let (i, j) = (by_size[0].1, by_size[1].1);
                (i.min(j), i.max(j))
            }
        };
        let a = live.remove(&i).expect("live");
        let b = live.remove(&j).expect("live");
        live.insert(next_id, merged_labels(&a, &b));
        next_id += 1;
        path.push((i, j));
    }
    path
}

pub(crate) fn path_cost(
    labels: &[Vec<Label>],
    dims: &BTreeMap<Label, usize>,
    path: &[(usize, usize)],
) -> Result<PathCost> {
    validate_path(labels.len(), path)?;
    let mut slots: Vec<Vec<Label>> = labels.to_vec();
    let mut cost = PathCost::default();
    for &(i, j) in path {
        let (a, b) = (slots[i].clone(), slots[j].clone());
        let out = merged_labels(&a, &b);
        let size = size_of_labels(&out, dims);
        cost.flops += union_size(&a, &b, dims);
        cost.largest_intermediate = cost.largest_intermediate.max(size);
        slots.push(out);
    }
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_times_basis_vector() {
        let id = Tensor::<f64>::identity(2);
        let v = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let out = contract(&id, &v, &[(1, 0)]).unwrap();
        assert_eq!(out.data(), &[1.0, 0.0]);
    }

    #[test]
    fn matmul_matches_hand_product() {
        let a = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::new(vec![3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn contract_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(vec![3, 4, 2], &mut rng);
        let b = random(vec![2, 4, 3], &mut rng);
        // sum_{j,k} a[i,j,k] b[k,j,l]
        let c = contract(&a, &b, &[(1, 1), (2, 0)]).unwrap();
        assert_eq!(c.shape(), &[3, 3]);
        for i in 0..3 {
            for l in 0..3 {
                let mut s = 0.0;
                for j in 0..4 {
                    for k in 0..2 {
                        s += a.get(&[i, j, k]) * b.get(&[k, j, l]);
                    }
                }
                assert!((c.get(&[i, l]) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contract_rejects_dimension_mismatch() {
        let a = Tensor::<f64>::zeros(vec![2, 3]);
        let b = Tensor::<f64>::zeros(vec![2, 3]);
        assert!(matches!(contract(&a, &b, &[(1, 0)]), Err(Error::Shape(_))));
    }

    #[test]
    fn permute_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random(vec![2, 3, 4, 5], &mut rng);
        let p = t.permute(&[2, 0, 3, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 5, 3]);
        assert_eq!(p.get(&[3, 1, 4, 2]), t.get(&[1, 2, 3, 4]));
        let back = p.permute(&[1, 3, 0, 2]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn kron_of_paulis() {
        let x = Tensor::new(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let z = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        let xz = x.kron(&z).unwrap();
        assert_eq!(xz.get(&[0, 2]), 1.0);
        assert_eq!(xz.get(&[1, 3]), -1.0);
        assert_eq!(xz.get(&[0, 0]), 0.0);
    }

    #[test]
    fn svd_identity_keeps_everything() {
        let id = Tensor::<f64>::identity(4);
        let svd = svd_truncate(&id, 4, 0.0).unwrap();
        assert_eq!(svd.discarded_weight, 0.0);
        assert_eq!(svd.s.len(), 4);
    }

    #[test]
    fn svd_rank_one_is_exact_at_chi_one() {
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0, 0.0, 2.0];
        let m = Tensor::from_fn(vec![3, 4], |i| u[i[0]] * v[i[1]]);
        let svd = svd_truncate(&m, 1, 0.0).unwrap();
        assert_eq!(svd.discarded_weight, 0.0);
        assert_eq!(svd.rank, 1);
        assert!(svd.reconstruct().max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn svd_eps_drops_small_tail() {
        let m = Tensor::from_fn(vec![3, 3], |i| {
            if i[0] == i[1] {
                [1.0, 0.1, 1e-4][i[0]]
            } else {
                0.0
            }
        });
        let svd = svd_truncate(&m, 3, 1e-6).unwrap();
        assert_eq!(svd.s.len(), 2);
        let total = 1.0 + 1e-2 + 1e-8;
        assert!((svd.discarded_weight - 1e-8 / total).abs() < 1e-15);
    }

    #[test]
    fn svd_rejects_bad_input() {
        let m = Tensor::<f64>::identity(2);
        assert!(svd_truncate(&m, 0, 0.0).is_err());
        let mut bad = m.clone();
        bad.data_mut()[0] = f64::NAN;
        assert!(matches!(svd_truncate(&bad, 1, 0.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn network_two_vectors() {
        let v = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let net = Network::new(vec![v.clone(), v], vec![vec![0], vec![0]]).unwrap();
        let s = net.contract(&[], None, DEFAULT_MEMORY_CAP).unwrap().into_scalar().unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn network_ring_of_identities_is_trace() {
        let id = Tensor::<f64>::identity(2);
        let net = Network::new(
            vec![id.clone(), id.clone(), id],
            vec![vec![0, 1], vec![1, 2], vec![2, 0]],
        )
        .unwrap();
        let s = net.contract(&[], None, DEFAULT_MEMORY_CAP).unwrap().into_scalar().unwrap();
        assert_eq!(s, 2.0);
    }

    #[test]
    fn network_open_legs_in_requested_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(vec![2, 3], &mut rng);
        let b = random(vec![3, 4], &mut rng);
        let net = Network::new(vec![a.clone(), b.clone()], vec![vec![10, 11], vec![11, 12]]).unwrap();
        let out = net.contract(&[12, 10], None, DEFAULT_MEMORY_CAP).unwrap();
        let expect = a.matmul(&b).unwrap().permute(&[1, 0]).unwrap();
        assert!(out.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn network_rejects_inconsistent_bonds() {
        let a = Tensor::<f64>::zeros(vec![2]);
        let b = Tensor::<f64>::zeros(vec![3]);
        assert!(Network::new(vec![a, b], vec![vec![0], vec![0]]).is_err());
    }

    #[test]
    fn network_memory_cap_is_enforced() {
        let a = Tensor::<f64>::zeros(vec![64, 2]);
        let b = Tensor::<f64>::zeros(vec![2, 64]);
        let net = Network::new(vec![a, b], vec![vec![0, 1], vec![2, 3]]).unwrap();
        let err = net.contract(&[0, 1, 2, 3], None, 1024).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit(_)));
    }

    #[test]
    fn sequential_path_shape() {
        assert_eq!(Network::<f64>::sequential_path(&[2, 0, 1]), vec![(2, 0), (3, 1)]);
    }
}
