use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{strides, Tensor};

/// Pads every axis of `x` by `(before, after)` elements filled with `value`.
pub fn pad<T: Real>(x: &Tensor<T>, pads: &[(usize, usize)], value: T) -> Result<Tensor<T>> {
    if pads.len() != x.rank() {
        return Err(Error::RankMismatch {
            expected: x.rank(),
            actual: pads.len(),
        });
    }
    if !value.is_finite() {
        return Err(Error::InvalidConfig("pad value must be finite".into()));
    }
    let out_shape: Vec<usize> = x
        .shape()
        .iter()
        .zip(pads)
        .map(|(&n, &(b, a))| n + b + a)
        .collect();
    let mut out = Tensor::full(out_shape.clone(), value);
    let dst_data = out.data_mut();
    copy_block(
        x.shape(),
        pads,
        |src, dst| dst_data[dst] = x.data()[src],
        out_shape,
    );
    Ok(out)
}

/// Removes `(before, after)` elements from every axis; inverse of [`pad`].
pub fn crop<T: Real>(x: &Tensor<T>, pads: &[(usize, usize)]) -> Result<Tensor<T>> {
    if pads.len() != x.rank() {
        return Err(Error::RankMismatch {
            expected: x.rank(),
            actual: pads.len(),
        });
    }
    let mut inner = Vec::with_capacity(pads.len());
    for (&n, &(b, a)) in x.shape().iter().zip(pads) {
        if b + a > n {
            return Err(Error::InvalidConfig("crop larger than tensor".into()));
        }
        inner.push(n - b - a);
    }
    let mut out = Tensor::zeros(inner.clone());
    let dst_data = out.data_mut();
    copy_block(
        &inner,
        pads,
        |src, dst| dst_data[src] = x.data()[dst],
        x.shape().to_vec(),
    );
    Ok(out)
}

/// Visits each element of an `inner`-shaped block placed at offset
/// `pads[i].0` inside an `outer`-shaped array, calling `f(inner_flat, outer_flat)`.
fn copy_block(
    inner: &[usize],
    pads: &[(usize, usize)],
    mut f: impl FnMut(usize, usize),
    outer: Vec<usize>,
) {
    let n: usize = inner.iter().product();
    if n == 0 {
        return;
    }
    let outer_strides = strides(&outer);
    let rank = inner.len();
    let mut idx = alloc::vec![0usize; rank];
    for flat in 0..n {
        let dst: usize = (0..rank)
            .map(|a| (idx[a] + pads[a].0) * outer_strides[a])
            .sum();
        f(flat, dst);
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < inner[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_padding_is_identity() {
        let x = Tensor::<f32>::from_fn([1, 1, 2, 2], |i| i as f32);
        assert_eq!(pad(&x, &[(0, 0); 4], 0.0).unwrap(), x);
    }

    #[test]
    fn centre_of_three_by_three() {
        let x = Tensor::<f32>::new([1, 1, 1, 1], vec![5.0]).unwrap();
        let y = pad(&x, &[(0, 0), (0, 0), (1, 1), (1, 1)], 0.0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.data(), &[0., 0., 0., 0., 5., 0., 0., 0., 0.]);
    }

    #[test]
    fn asymmetric_rows() {
        let x = Tensor::<f32>::full([1, 1, 4, 4], 1.0);
        let y = pad(&x, &[(0, 0), (0, 0), (1, 2), (0, 0)], 0.0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 7, 4]);
        for r in 0..7 {
            let row = &y.data()[r * 4..r * 4 + 4];
            let expect = if r == 0 || r >= 5 { 0.0 } else { 1.0 };
            assert!(row.iter().all(|&v| v == expect), "row {r}");
        }
    }

    #[test]
    fn non_zero_fill_and_crop_roundtrip() {
        let x = Tensor::<f64>::from_fn([2, 3, 2], |i| i as f64 + 1.0);
        let pads = [(1, 0), (0, 2), (3, 1)];
        let y = pad(&x, &pads, -7.0).unwrap();
        assert_eq!(y.shape(), &[3, 5, 6]);
        assert_eq!(y.get(&[0, 0, 0]), -7.0);
        assert_eq!(y.get(&[1, 0, 3]), 1.0);
        assert_eq!(crop(&y, &pads).unwrap(), x);
    }

    #[test]
    fn rank_mismatch() {
        let x = Tensor::<f32>::zeros([1, 1, 2, 2]);
        assert!(matches!(
            pad(&x, &[(0, 0); 3], 0.0),
            Err(Error::RankMismatch {
                expected: 4,
                actual: 3
            })
        ));
    }
}
