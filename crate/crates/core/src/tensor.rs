//! Dense row-major tensors and the primitive kernels the layers are built on.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Scalar element type: `f32` for training and inference, `f64` for gradient checks.
pub trait Real: Float + FromPrimitive + Default + Debug + Display + Send + Sync + Sum + 'static {
    const BYTES: usize;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `c <- alpha * a * b + beta * c` on strided matrices.
    ///
    /// # Safety
    /// Every index reachable through the given dimensions and strides must be in bounds.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    const BYTES: usize = 4;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        unsafe { matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc) }
    }
}

impl Real for f64 {
    const BYTES: usize = 8;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        unsafe { matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc) }
    }
}

/// Dense N-d array, row-major.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const PREVIEW: usize = 8;
        let head = &self.data[..self.data.len().min(PREVIEW)];
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &format_args!("{head:?}{}", if self.data.len() > PREVIEW { " .." } else { "" }))
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Dimension(format!("shape {shape:?} must have at least one axis and only positive extents")));
    }
    Ok(shape.iter().product())
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} holds {len} elements but {} were supplied",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// # Panics
    /// If any extent is zero.
    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let len = check_shape(&shape).expect("valid shape");
        Self { shape, data: vec![value; len] }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    /// Fills from a function of the flat index.
    pub fn from_fn(shape: impl Into<Vec<usize>>, f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let len = check_shape(&shape).expect("valid shape");
        Self { shape, data: (0..len).map(f).collect() }
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

    /// Copy with a new shape holding the same number of elements.
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        self.clone().into_reshape(shape)
    }

    pub fn into_reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        if len != self.data.len() {
            return Err(Error::Dimension(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        Ok(Self { shape, data: self.data })
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
            acc * d + i
        })
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "elementwise operands {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|x| U::of(x.as_f64())).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape, other.shape, "max_abs_diff shapes");
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Row `i` of a 2-d tensor.
    pub fn row(&self, i: usize) -> &[T] {
        assert_eq!(self.rank(), 2, "row() needs a 2-d tensor");
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    /// Item `i` along the leading axis, as a tensor of rank `rank - 1` (rank 1 stays rank 1).
    pub fn index_axis0(&self, i: usize) -> Self {
        let inner: Vec<usize> = if self.rank() > 1 { self.shape[1..].to_vec() } else { vec![1] };
        let stride: usize = inner.iter().product();
        Self { shape: inner, data: self.data[i * stride..(i + 1) * stride].to_vec() }
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::Dimension("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::Dimension(format!("cannot stack {:?} with {:?}", first.shape, t.shape)));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        matmul(self, other)
    }
}

/// Canonical image-batch layout `[n, h, w, c]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape4 {
    pub fn new(n: usize, h: usize, w: usize, c: usize) -> Result<Self> {
        Self::from_dims(&[n, h, w, c])
    }

    pub fn from_dims(shape: &[usize]) -> Result<Self> {
        match *shape {
            [n, h, w, c] if n > 0 && h > 0 && w > 0 && c > 0 => Ok(Self { n, h, w, c }),
            _ => Err(Error::Dimension(format!("expected a positive [n, h, w, c] shape, got {shape:?}"))),
        }
    }

    pub fn of<T: Real>(t: &Tensor<T>) -> Result<Self> {
        Self::from_dims(t.shape())
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.c]
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.h * self.w * self.c
    }
}

/// Borrowed strided matrix.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T: Real> MatRef<'a, T> {
    pub(crate) fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "matrix view exceeds its buffer");
        Self { data, rows, cols, rs: cols, cs: 1 }
    }

    pub(crate) fn t(self) -> Self {
        Self { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn rows_range(self, start: usize, end: usize) -> Self {
        Self { data: &self.data[start * self.rs..], rows: end - start, ..self }
    }

    fn cols_range(self, start: usize, end: usize) -> Self {
        Self { data: &self.data[start * self.cs..], cols: end - start, ..self }
    }

    fn in_bounds(&self) -> bool {
        self.rows == 0 || self.cols == 0 || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < self.data.len()
    }
}

/// Rows of output computed per gemm call. Fixed so results do not depend on the
/// execution mode.
const ROW_CHUNK: usize = 256;

/// Reduction-axis slice length for [`gemm_reduce_into`].
const K_CHUNK: usize = 4096;

fn gemm_block<T: Real>(a: MatRef<'_, T>, b: MatRef<'_, T>, out: &mut [T], accumulate: bool) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows);
    assert!(out.len() >= m * n && a.in_bounds() && b.in_bounds());
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            out[..m * n].fill(T::zero());
        }
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: in_bounds() covers every element reachable from the views and
    // `out` holds m*n contiguous row-major elements.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// `out (+)= a * b` with `out` row-major `[a.rows, b.cols]`, split over output rows.
pub(crate) fn gemm_into<T: Real>(a: MatRef<'_, T>, b: MatRef<'_, T>, out: &mut [T], accumulate: bool, exec: Execution) {
    let n = b.cols;
    assert_eq!(out.len(), a.rows * n);
    if n == 0 {
        return;
    }
    exec.for_each_chunk_mut(out, ROW_CHUNK * n, |i, chunk| {
        let start = i * ROW_CHUNK;
        let end = start + chunk.len() / n;
        gemm_block(a.rows_range(start, end), b, chunk, accumulate);
    });
}

/// `out (+)= a * b` where the shared axis is long; partial products over fixed
/// slices of the shared axis are summed in order.
pub(crate) fn gemm_reduce_into<T: Real>(
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    out: &mut [T],
    accumulate: bool,
    exec: Execution,
) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(out.len(), m * n);
    if k <= K_CHUNK {
        gemm_block(a, b, out, accumulate);
        return;
    }
    let pieces = k.div_ceil(K_CHUNK);
    let partials = exec.map(pieces, |p| {
        let (s, e) = (p * K_CHUNK, ((p + 1) * K_CHUNK).min(k));
        let mut part = vec![T::zero(); m * n];
        gemm_block(a.cols_range(s, e), b.rows_range(s, e), &mut part, false);
        part
    });
    if !accumulate {
        out.fill(T::zero());
    }
    for part in partials {
        out.iter_mut().zip(part).for_each(|(o, p)| *o = *o + p);
    }
}

/// Matrix product of two 2-d tensors.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    matmul_with(a, b, Execution::default())
}

/// [`matmul`] with an explicit schedule; both schedules give identical results.
pub fn matmul_with<T: Real>(a: &Tensor<T>, b: &Tensor<T>, exec: Execution) -> Result<Tensor<T>> {
    let (&[m, k], &[k2, n]) = (a.shape(), b.shape()) else {
        return Err(Error::Dimension(format!("matmul needs 2-d operands, got {:?} x {:?}", a.shape(), b.shape())));
    };
    if k != k2 {
        return Err(Error::Dimension(format!("matmul inner dimensions disagree: {:?} x {:?}", a.shape(), b.shape())));
    }
    let mut out = vec![T::zero(); m * n];
    gemm_into(MatRef::row_major(a.data(), m, k), MatRef::row_major(b.data(), k, n), &mut out, false, exec);
    Tensor::new([m, n], out)
}

/// Zero padding `(before, after)` that keeps the extent of a stride-1 window of size `k`.
/// Even kernels pad the bottom/right side more.
pub fn same_padding(kernel: usize) -> (usize, usize) {
    let total = kernel - 1;
    (total / 2, total - total / 2)
}

/// Patch matrix for one `[h, w, c]` image: row `i*w + j` holds the `k x k x c`
/// window anchored at output pixel `(i, j)` under same padding, ordered
/// `(di, dj, channel)`.
pub(crate) fn im2col_item<T: Real>(src: &[T], h: usize, w: usize, c: usize, k: usize, out: &mut [T]) {
    let (pad, _) = same_padding(k);
    let row_len = k * k * c;
    debug_assert_eq!(out.len(), h * w * row_len);
    for i in 0..h {
        for j in 0..w {
            let row = &mut out[(i * w + j) * row_len..][..row_len];
            for di in 0..k {
                for dj in 0..k {
                    let dst = &mut row[(di * k + dj) * c..][..c];
                    let y = (i + di).wrapping_sub(pad);
                    let x = (j + dj).wrapping_sub(pad);
                    if y < h && x < w {
                        dst.copy_from_slice(&src[(y * w + x) * c..][..c]);
                    } else {
                        dst.fill(T::zero());
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_item`]: scatters patch rows back, summing overlaps into `dst`.
pub(crate) fn col2im_item<T: Real>(cols: &[T], h: usize, w: usize, c: usize, k: usize, dst: &mut [T]) {
    let (pad, _) = same_padding(k);
    let row_len = k * k * c;
    for i in 0..h {
        for j in 0..w {
            let row = &cols[(i * w + j) * row_len..][..row_len];
            for di in 0..k {
                for dj in 0..k {
                    let y = (i + di).wrapping_sub(pad);
                    let x = (j + dj).wrapping_sub(pad);
                    if y < h && x < w {
                        let src = &row[(di * k + dj) * c..][..c];
                        let d = &mut dst[(y * w + x) * c..][..c];
                        d.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
                    }
                }
            }
        }
    }
}

/// Unrolls `[n, h, w, c]` into `[(n*h*w), k*k*c]` patches for a stride-1, same-padded window.
pub fn im2col<T: Real>(x: &Tensor<T>, kernel: usize) -> Result<Tensor<T>> {
    let s = Shape4::of(x)?;
    if kernel == 0 {
        return Err(Error::Parameter("kernel size must be positive".into()));
    }
    let row_len = kernel * kernel * s.c;
    let per_item = s.h * s.w * row_len;
    let mut out = vec![T::zero(); s.n * per_item];
    Execution::default().for_each_chunk_mut(&mut out, per_item, |n, chunk| {
        im2col_item(&x.data()[n * s.item_len()..][..s.item_len()], s.h, s.w, s.c, kernel, chunk);
    });
    Tensor::new([s.n * s.h * s.w, row_len], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f32> {
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
    }

    fn naive_matmul(a: &Tensor<f32>, b: &Tensor<f32>) -> Tensor<f32> {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = Tensor::zeros([m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.get(&[i, p]) * b.get(&[p, j]);
                }
                out.set(&[i, j], s);
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_projector() {
        let eye = Tensor::new([2, 2], vec![1.0f32, 0.0, 0.0, 1.0]).unwrap();
        let m = Tensor::new([2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&eye, &m).unwrap(), m);

        let p = Tensor::new([2, 2], vec![1.0f32, 0.0, 0.0, 0.0]).unwrap();
        let b = Tensor::new([2, 2], vec![5.0f32, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(matmul(&p, &b).unwrap().data(), &[5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = rand_tensor(&[4, 3], &mut rng);
        let b = rand_tensor(&[3, 2], &mut rng);
        assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) < 1e-5);

        // spans several row chunks
        let a = rand_tensor(&[600, 17], &mut rng);
        let b = rand_tensor(&[17, 9], &mut rng);
        assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) < 1e-5);
    }

    #[test]
    fn matmul_shape_error_names_both() {
        let a = Tensor::<f32>::zeros([2, 3]);
        let b = Tensor::<f32>::zeros([2, 3]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] x [2, 3]"), "{msg}");
    }

    #[test]
    fn reduce_gemm_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = K_CHUNK * 2 + 123;
        let a = rand_tensor(&[k, 5], &mut rng);
        let b = rand_tensor(&[k, 4], &mut rng);
        let mut got = vec![0.0f32; 20];
        gemm_reduce_into(
            MatRef::row_major(a.data(), k, 5).t(),
            MatRef::row_major(b.data(), k, 4),
            &mut got,
            false,
            Execution::default(),
        );
        let mut want = vec![0.0f64; 20];
        for i in 0..5 {
            for j in 0..4 {
                for p in 0..k {
                    want[i * 4 + j] += (a.get(&[p, i]) * b.get(&[p, j])) as f64;
                }
            }
        }
        for (g, w) in got.iter().zip(&want) {
            assert!((*g as f64 - w).abs() < 1e-3, "{g} vs {w}");
        }
    }

    #[test]
    fn im2col_single_pixel_reads_padding() {
        let x = Tensor::new([1, 1, 1, 1], vec![3.5f32]).unwrap();
        assert_eq!(im2col(&x, 2).unwrap().data(), &[3.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn im2col_two_by_two() {
        let (a, b, c, d) = (1.0f32, 2.0, 3.0, 4.0);
        let x = Tensor::new([1, 2, 2, 1], vec![a, b, c, d]).unwrap();
        let cols = im2col(&x, 2).unwrap();
        assert_eq!(cols.shape(), &[4, 4]);
        assert_eq!(cols.row(0), &[a, b, c, d]);
        assert_eq!(cols.row(1), &[b, 0.0, d, 0.0]);
        assert_eq!(cols.row(2), &[c, d, 0.0, 0.0]);
        assert_eq!(cols.row(3), &[d, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (h, w, c, k) = (5, 4, 3, 2);
        let x = rand_tensor(&[h * w * c], &mut rng);
        let y = rand_tensor(&[h * w * k * k * c], &mut rng);
        let mut cols = vec![0.0f32; y.len()];
        im2col_item(x.data(), h, w, c, k, &mut cols);
        let mut back = vec![0.0f32; x.len()];
        col2im_item(y.data(), h, w, c, k, &mut back);
        let lhs: f64 = cols.iter().zip(y.data()).map(|(a, b)| (a * b) as f64).sum();
        let rhs: f64 = x.data().iter().zip(&back).map(|(a, b)| (a * b) as f64).sum();
        assert!((lhs - rhs).abs() < 1e-4);
    }

    #[test]
    fn same_padding_is_bottom_right_heavy() {
        assert_eq!(same_padding(2), (0, 1));
        assert_eq!(same_padding(3), (1, 1));
        assert_eq!(same_padding(1), (0, 0));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::<f32>::new([2, 0], vec![]).is_err());
        assert!(Tensor::<f32>::new([2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::zeros([6]).reshape([4, 2]).is_err());
        assert!(Shape4::from_dims(&[1, 2, 3]).is_err());
    }

    #[test]
    fn stack_and_index_roundtrip() {
        let a = Tensor::new([2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let b = a.map(|x| -x);
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2]);
        assert_eq!(s.index_axis0(0), a);
        assert_eq!(s.index_axis0(1), b);
    }
}
