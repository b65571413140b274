use super::init::{InitBound, glorot_uniform};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::tensor::{MatRef, Real, Shape4, Tensor, col2im_item, gemm_into, gemm_reduce_into, im2col_item};

/// Stride-1, same-padded 2-d convolution over NHWC input.
#[derive(Clone, Debug)]
pub struct Conv2d<T: Real = f32> {
    /// `[k, k, c_in, c_out]`
    pub weight: Tensor<T>,
    /// `[c_out]`
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    pub(super) cache: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(kernel: usize, in_channels: usize, filters: usize, seed: u64) -> Result<Self> {
        let bound = InitBound::new(kernel * kernel * in_channels, kernel * kernel * filters)?;
        let shape = [kernel, kernel, in_channels, filters];
        Self::from_params(glorot_uniform(shape, bound, seed), Tensor::zeros([filters]))
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        check_kernel(&weight, &bias)?;
        Ok(Self {
            grad_weight: Tensor::zeros(weight.shape()),
            grad_bias: Tensor::zeros(bias.shape()),
            weight,
            bias,
            cache: None,
        })
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[3]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = conv2d_forward(x, &self.weight, &self.bias)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::State("conv2d backward called without a cached forward pass".into()))?;
        let (dx, dw, db) = conv2d_backward(&x, &self.weight, grad)?;
        self.grad_weight = dw;
        self.grad_bias = db;
        Ok(dx)
    }

    pub(super) fn cast<U: Real>(&self) -> Conv2d<U> {
        Conv2d::from_params(self.weight.cast(), self.bias.cast()).expect("shapes already validated")
    }
}

fn check_kernel<T: Real>(w: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *w.shape() {
        [k, k2, cin, cout] if k == k2 && b.shape() == [cout] => Ok((k, cin, cout)),
        _ => Err(Error::Dimension(format!(
            "conv weight {:?} / bias {:?} must be [k, k, c_in, c_out] / [c_out]",
            w.shape(),
            b.shape()
        ))),
    }
}

/// `out[n,i,j,o] = b[o] + sum_{di,dj,c} xpad[n,i+di,j+dj,c] * w[di,dj,c,o]`, where
/// `xpad` is zero-padded on the bottom/right for an even kernel.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    conv2d_forward_with(x, w, b, Execution::default())
}

/// [`conv2d_forward`] with an explicit schedule over the batch.
pub fn conv2d_forward_with<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, exec: Execution) -> Result<Tensor<T>> {
    let s = Shape4::of(x)?;
    let (k, cin, cout) = check_kernel(w, b)?;
    if s.c != cin {
        return Err(Error::Dimension(format!("conv input has {} channels, kernel {:?} expects {cin}", s.c, w.shape())));
    }
    let hw = s.h * s.w;
    let patch = k * k * cin;
    let weights = MatRef::row_major(w.data(), patch, cout);
    let mut out = vec![T::zero(); s.n * hw * cout];
    exec.for_each_chunk_mut(&mut out, hw * cout, |n, out_n| {
        let mut cols = vec![T::zero(); hw * patch];
        im2col_item(&x.data()[n * s.item_len()..][..s.item_len()], s.h, s.w, cin, k, &mut cols);
        gemm_into(MatRef::row_major(&cols, hw, patch), weights, out_n, false, Execution::Sequential);
        for px in out_n.chunks_mut(cout) {
            px.iter_mut().zip(b.data()).for_each(|(o, &bias)| *o = *o + bias);
        }
    });
    Tensor::new([s.n, s.h, s.w, cout], out)
}

/// Gradients of [`conv2d_forward`] w.r.t. input, weight and bias.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let s = Shape4::of(x)?;
    let (k, cin, cout) = match *w.shape() {
        [k, _, cin, cout] => (k, cin, cout),
        _ => return Err(Error::Dimension(format!("conv weight {:?} is not 4-d", w.shape()))),
    };
    if grad.shape() != [s.n, s.h, s.w, cout] || s.c != cin {
        return Err(Error::Dimension(format!(
            "conv backward: input {:?}, weight {:?}, upstream {:?} disagree",
            x.shape(),
            w.shape(),
            grad.shape()
        )));
    }
    let hw = s.h * s.w;
    let patch = k * k * cin;
    let weights = MatRef::row_major(w.data(), patch, cout);

    let per_item = Execution::default().map(s.n, |n| {
        let g = &grad.data()[n * hw * cout..][..hw * cout];
        let g = MatRef::row_major(g, hw, cout);
        let mut cols = vec![T::zero(); hw * patch];
        im2col_item(&x.data()[n * s.item_len()..][..s.item_len()], s.h, s.w, cin, k, &mut cols);

        let mut dw = vec![T::zero(); patch * cout];
        gemm_reduce_into(MatRef::row_major(&cols, hw, patch).t(), g, &mut dw, false, Execution::Sequential);

        // reuse the patch buffer for d(cols)
        gemm_into(g, weights.t(), &mut cols, false, Execution::Sequential);
        let mut dx = vec![T::zero(); s.item_len()];
        col2im_item(&cols, s.h, s.w, cin, k, &mut dx);
        (dx, dw)
    });

    let mut dx = Vec::with_capacity(x.len());
    let mut dw = vec![T::zero(); patch * cout];
    for (dx_n, dw_n) in per_item {
        dx.extend_from_slice(&dx_n);
        dw.iter_mut().zip(dw_n).for_each(|(a, b)| *a = *a + b);
    }
    let mut db = vec![T::zero(); cout];
    for px in grad.data().chunks(cout) {
        db.iter_mut().zip(px).for_each(|(a, &b)| *a = *a + b);
    }
    Ok((Tensor::new(x.shape(), dx)?, Tensor::new(w.shape(), dw)?, Tensor::new([cout], db)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Nested-loop convolution with explicit bottom/right zero padding.
    fn direct_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let [n, h, wd, c] = Shape4::of(x).unwrap().dims();
        let (k, cout) = (w.shape()[0], w.shape()[3]);
        let mut out = Tensor::zeros([n, h, wd, cout]);
        for s in 0..n {
            for i in 0..h {
                for j in 0..wd {
                    for o in 0..cout {
                        let mut acc = b.get(&[o]);
                        for di in 0..k {
                            for dj in 0..k {
                                if i + di >= h || j + dj >= wd {
                                    continue;
                                }
                                for ch in 0..c {
                                    acc += x.get(&[s, i + di, j + dj, ch]) * w.get(&[di, dj, ch, o]);
                                }
                            }
                        }
                        out.set(&[s, i, j, o], acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn ones_kernel_counts_in_frame_taps() {
        let x = Tensor::<f32>::full([1, 4, 4, 1], 1.0);
        let w = Tensor::full([2, 2, 1, 1], 1.0);
        let y = conv2d_forward(&x, &w, &Tensor::zeros([1])).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4, 1]);
        for i in 0..4 {
            for j in 0..4 {
                let want = match (i == 3, j == 3) {
                    (false, false) => 4.0,
                    (true, true) => 1.0,
                    _ => 2.0,
                };
                assert_eq!(y.get(&[0, i, j, 0]), want, "({i},{j})");
            }
        }
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let x = Tensor::<f32>::from_fn([2, 3, 3, 2], |i| i as f32);
        let y = conv2d_forward(&x, &Tensor::zeros([2, 2, 2, 3]), &Tensor::full([3], 0.75)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let (n, h, w, c, o) = (
                rng.random_range(1..3),
                rng.random_range(1..7),
                rng.random_range(1..7),
                rng.random_range(1..4),
                rng.random_range(1..4),
            );
            let x = Tensor::<f64>::from_fn([n, h, w, c], |_| rng.random_range(-1.0..1.0));
            let k = Tensor::<f64>::from_fn([2, 2, c, o], |_| rng.random_range(-1.0..1.0));
            let b = Tensor::<f64>::from_fn([o], |_| rng.random_range(-1.0..1.0));
            let want = direct_conv(&x, &k, &b);
            let got = conv2d_forward(&x.cast::<f32>(), &k.cast(), &b.cast()).unwrap();
            assert!(got.cast::<f64>().max_abs_diff(&want) < 1e-5);
        }
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let x = Tensor::<f32>::zeros([1, 3, 3, 2]);
        let w = Tensor::zeros([2, 2, 3, 1]);
        assert!(matches!(conv2d_forward(&x, &w, &Tensor::zeros([1])), Err(Error::Dimension(_))));
    }

    #[test]
    fn bias_gradient_sums_upstream() {
        let x = Tensor::<f64>::full([2, 3, 3, 1], 1.0);
        let w = Tensor::full([2, 2, 1, 2], 0.5);
        let g = Tensor::full([2, 3, 3, 2], 1.0);
        let (_, _, db) = conv2d_backward(&x, &w, &g).unwrap();
        assert_eq!(db.data(), &[18.0, 18.0]);
    }
}
