use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{shape_like, volume_dims, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v < T::zero() { T::zero() } else { v })
}

pub fn relu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    x.same_shape(grad_out, "relu grad_out")?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Elementwise sum; the backward pass hands `grad_out` to every input.
pub fn add<T: Real>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let (first, rest) = inputs
        .split_first()
        .ok_or_else(|| Error::InvalidConfig("add needs at least one input".into()))?;
    let mut out = (*first).clone();
    for t in rest {
        out.add_assign(t)?;
    }
    Ok(out)
}

/// Concatenates along axis 1, inputs in order.
pub fn concat_channels<T: Real>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidConfig("concat needs at least one input".into()))?;
    if first.rank() < 2 {
        return Err(Error::RankMismatch {
            expected: 2,
            actual: first.rank(),
        });
    }
    let n = first.shape()[0];
    let rest: Vec<usize> = first.shape()[2..].to_vec();
    let s: usize = rest.iter().product();
    let mut c_total = 0;
    for t in inputs {
        if t.rank() != first.rank() || t.shape()[0] != n || t.shape()[2..] != rest[..] {
            return Err(Error::ShapeMismatch {
                context: "concat",
                expected: first.shape().to_vec(),
                actual: t.shape().to_vec(),
            });
        }
        c_total += t.shape()[1];
    }
    let mut data = Vec::with_capacity(n * c_total * s);
    for b in 0..n {
        for t in inputs {
            let c = t.shape()[1];
            data.extend_from_slice(&t.data()[b * c * s..(b + 1) * c * s]);
        }
    }
    let mut shape = vec![n, c_total];
    shape.extend(rest);
    Tensor::new(shape, data)
}

/// Splits axis 1 into consecutive parts of the given sizes.
pub fn split_channels_of<T: Real>(x: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    if x.rank() < 2 || sizes.iter().sum::<usize>() != x.shape()[1] {
        return Err(Error::ShapeMismatch {
            context: "channel split",
            expected: sizes.to_vec(),
            actual: x.shape().to_vec(),
        });
    }
    let n = x.shape()[0];
    let c = x.shape()[1];
    let s: usize = x.shape()[2..].iter().product();
    let mut parts = Vec::with_capacity(sizes.len());
    let mut c0 = 0;
    for &k in sizes {
        let mut data = Vec::with_capacity(n * k * s);
        for b in 0..n {
            data.extend_from_slice(&x.data()[(b * c + c0) * s..(b * c + c0 + k) * s]);
        }
        let mut shape = x.shape().to_vec();
        shape[1] = k;
        parts.push(Tensor::new(shape, data)?);
        c0 += k;
    }
    Ok(parts)
}

pub fn concat_channels_backward<T: Real>(
    inputs: &[&Tensor<T>],
    grad_out: &Tensor<T>,
) -> Result<Vec<Tensor<T>>> {
    let sizes: Vec<usize> = inputs.iter().map(|t| t.shape()[1]).collect();
    split_channels_of(grad_out, &sizes)
}

/// Nearest-neighbour upsampling by integer factors on `(D, H, W)`.
pub fn upsample_nearest<T: Real>(x: &Tensor<T>, factors: [usize; 3]) -> Result<Tensor<T>> {
    let xd = volume_dims(x.shape(), "upsample input")?;
    if factors.contains(&0) || (x.rank() == 4 && factors[0] != 1) {
        return Err(Error::InvalidConfig("invalid upsampling factors".into()));
    }
    let od = [
        xd[0],
        xd[1],
        xd[2] * factors[0],
        xd[3] * factors[1],
        xd[4] * factors[2],
    ];
    let mut out = Vec::with_capacity(od.iter().product());
    let src = x.data();
    for nc in 0..xd[0] * xd[1] {
        for d in 0..od[2] {
            for h in 0..od[3] {
                let row = ((nc * xd[2] + d / factors[0]) * xd[3] + h / factors[1]) * xd[4];
                for w in 0..od[4] {
                    out.push(src[row + w / factors[2]]);
                }
            }
        }
    }
    Tensor::new(shape_like(x.shape(), od), out)
}

pub fn upsample_nearest_backward<T: Real>(
    x: &Tensor<T>,
    factors: [usize; 3],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let xd = volume_dims(x.shape(), "upsample input")?;
    let od = [
        xd[0],
        xd[1],
        xd[2] * factors[0],
        xd[3] * factors[1],
        xd[4] * factors[2],
    ];
    let expect = shape_like(x.shape(), od);
    if grad_out.shape() != expect.as_slice() {
        return Err(Error::ShapeMismatch {
            context: "upsample grad_out",
            expected: expect,
            actual: grad_out.shape().to_vec(),
        });
    }
    let mut gx = vec![T::zero(); x.len()];
    let g = grad_out.data();
    let mut i = 0;
    for nc in 0..xd[0] * xd[1] {
        for d in 0..od[2] {
            for h in 0..od[3] {
                let row = ((nc * xd[2] + d / factors[0]) * xd[3] + h / factors[1]) * xd[4];
                for w in 0..od[4] {
                    gx[row + w / factors[2]] += g[i];
                    i += 1;
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), gx)
}

/// Mean over all spatial positions: `N×C×… → N×C`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() < 3 {
        return Err(Error::RankMismatch {
            expected: 3,
            actual: x.rank(),
        });
    }
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let s: usize = x.shape()[2..].iter().product();
    let inv = T::one() / T::count(s.max(1));
    let data = x
        .data()
        .chunks(s.max(1))
        .take(n * c)
        .map(|ch| ch.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::new([n, c], data)
}

pub fn global_avg_pool_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    if grad_out.shape() != [n, c] {
        return Err(Error::ShapeMismatch {
            context: "global_avg_pool grad_out",
            expected: vec![n, c],
            actual: grad_out.shape().to_vec(),
        });
    }
    let s: usize = x.shape()[2..].iter().product();
    let inv = T::one() / T::count(s.max(1));
    let mut gx = Vec::with_capacity(x.len());
    for &g in grad_out.data() {
        gx.extend(core::iter::repeat_n(g * inv, s));
    }
    Tensor::new(x.shape().to_vec(), gx)
}

/// `y = x·Wᵀ + b` for `x: N×F` (trailing axes are flattened), `W: O×F`.
pub fn linear<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let (n, f) = flat_features(x)?;
    if w.rank() != 2 || w.shape()[1] != f {
        return Err(Error::ShapeMismatch {
            context: "linear weight",
            expected: vec![w.shape().first().copied().unwrap_or(0), f],
            actual: w.shape().to_vec(),
        });
    }
    let o = w.shape()[0];
    if let Some(b) = b {
        if b.shape() != [o] {
            return Err(Error::ShapeMismatch {
                context: "linear bias",
                expected: vec![o],
                actual: b.shape().to_vec(),
            });
        }
    }
    let mut out = vec![T::zero(); n * o];
    for r in 0..n {
        let xr = &x.data()[r * f..(r + 1) * f];
        for j in 0..o {
            let wr = &w.data()[j * f..(j + 1) * f];
            let mut acc = T::zero();
            for (&a, &bv) in xr.iter().zip(wr) {
                acc += a * bv;
            }
            out[r * o + j] = acc + b.map_or(T::zero(), |b| b.data()[j]);
        }
    }
    Tensor::new([n, o], out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn linear_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    let (n, f) = flat_features(x)?;
    let o = w.shape()[0];
    if grad_out.shape() != [n, o] {
        return Err(Error::ShapeMismatch {
            context: "linear grad_out",
            expected: vec![n, o],
            actual: grad_out.shape().to_vec(),
        });
    }
    let g = grad_out.data();
    let mut gx = vec![T::zero(); n * f];
    let mut gw = vec![T::zero(); o * f];
    let mut gb = vec![T::zero(); o];
    for r in 0..n {
        for j in 0..o {
            let gv = g[r * o + j];
            gb[j] += gv;
            for k in 0..f {
                gx[r * f + k] += gv * w.data()[j * f + k];
                gw[j * f + k] += gv * x.data()[r * f + k];
            }
        }
    }
    Ok(LinearGrads {
        input: Tensor::new(x.shape().to_vec(), gx)?,
        weight: Tensor::new(w.shape().to_vec(), gw)?,
        bias: Tensor::new([o], gb)?,
    })
}

fn flat_features<T: Real>(x: &Tensor<T>) -> Result<(usize, usize)> {
    if x.rank() < 2 {
        return Err(Error::RankMismatch {
            expected: 2,
            actual: x.rank(),
        });
    }
    Ok((x.shape()[0], x.shape()[1..].iter().product()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps() {
        let x = Tensor::<f32>::new([2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
    }

    #[test]
    fn concat_keeps_order() {
        let a = Tensor::<f32>::full([1, 2, 1, 1], 1.0);
        let b = Tensor::<f32>::full([1, 3, 1, 1], 2.0);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[1, 5, 1, 1]);
        assert_eq!(c.data(), &[1., 1., 2., 2., 2.]);
        let parts = concat_channels_backward(&[&a, &b], &c).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::<f32>::zeros([1, 2, 2, 2]);
        let b = Tensor::<f32>::zeros([1, 2, 2, 3]);
        assert!(concat_channels(&[&a, &b]).is_err());
    }

    #[test]
    fn upsample_block_replicates() {
        let x = Tensor::<f32>::new([1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let y = upsample_nearest(&x, [1, 2, 2]).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        assert_eq!(
            y.data(),
            &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
        );
        let g = upsample_nearest_backward(&x, [1, 2, 2], &Tensor::full([1, 1, 4, 4], 1.0)).unwrap();
        assert_eq!(g.data(), &[4.0; 4]);
    }

    #[test]
    fn global_pool_and_linear() {
        let x = Tensor::<f64>::from_fn([2, 3, 2, 2], |i| i as f64);
        let p = global_avg_pool(&x).unwrap();
        assert_eq!(p.shape(), &[2, 3]);
        assert_eq!(p.data()[0], 1.5);
        let w = Tensor::<f64>::new([1, 3], vec![1.0, 0.0, -1.0]).unwrap();
        let b = Tensor::<f64>::new([1], vec![0.5]).unwrap();
        let y = linear(&p, &w, Some(&b)).unwrap();
        assert_eq!(y.data(), &[1.5 - 9.5 + 0.5, 13.5 - 21.5 + 0.5]);
    }
}
