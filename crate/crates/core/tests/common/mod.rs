#![allow(dead_code)]

use acs_core::{Real, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
    Tensor::from_fn(shape.to_vec(), |_| T::of(rng.random_range(-1.0..1.0)))
}

/// Geometry of the naive reference convolution.
#[derive(Clone, Copy, Debug)]
pub struct Geom {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub dil: [usize; 3],
}

impl Geom {
    pub fn cubic(k: usize, s: usize, p: usize, d: usize) -> Self {
        Self {
            kernel: [k; 3],
            stride: [s; 3],
            pad: [p; 3],
            dil: [d; 3],
        }
    }
}

/// Number of window placements found by sliding the dilated window over
/// the padded line one position at a time.
pub fn count_windows(i: usize, k: usize, s: usize, p: usize, d: usize) -> usize {
    let padded = i + 2 * p;
    let span = d * (k - 1) + 1;
    let mut n = 0;
    let mut start = 0;
    while start + span <= padded {
        n += 1;
        start += s;
    }
    n
}

/// Direct 7-loop cross-correlation of an `N×C×D×H×W` input with symmetric
/// padding. Returns the output and the number of multiply-accumulates
/// executed (padding taps included).
pub fn naive_conv3d(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    bias: Option<&[f64]>,
    g: Geom,
) -> (Tensor<f64>, u64) {
    let xs = x.shape();
    let ws = w.shape();
    let (n, ci, co) = (xs[0], xs[1], ws[0]);
    let out: Vec<usize> = (0..3)
        .map(|a| count_windows(xs[2 + a], g.kernel[a], g.stride[a], g.pad[a], g.dil[a]))
        .collect();
    let mut y = Tensor::zeros([n, co, out[0], out[1], out[2]]);
    let mut macs = 0u64;
    for b in 0..n {
        for o in 0..co {
            for z in 0..out[0] {
                for r in 0..out[1] {
                    for c in 0..out[2] {
                        let mut acc = bias.map_or(0.0, |b| b[o]);
                        for i in 0..ci {
                            for kz in 0..g.kernel[0] {
                                for kr in 0..g.kernel[1] {
                                    for kc in 0..g.kernel[2] {
                                        macs += 1;
                                        let pos = [
                                            (z * g.stride[0] + kz * g.dil[0]) as isize
                                                - g.pad[0] as isize,
                                            (r * g.stride[1] + kr * g.dil[1]) as isize
                                                - g.pad[1] as isize,
                                            (c * g.stride[2] + kc * g.dil[2]) as isize
                                                - g.pad[2] as isize,
                                        ];
                                        if (0..3)
                                            .any(|a| pos[a] < 0 || pos[a] >= xs[2 + a] as isize)
                                        {
                                            continue;
                                        }
                                        acc += w.get(&[o, i, kz, kr, kc])
                                            * x.get(&[
                                                b,
                                                i,
                                                pos[0] as usize,
                                                pos[1] as usize,
                                                pos[2] as usize,
                                            ]);
                                    }
                                }
                            }
                        }
                        y.set(&[b, o, z, r, c], acc);
                    }
                }
            }
        }
    }
    (y, macs)
}

/// ACS by definition: each output row convolves its view's plane with the
/// 2D kernel and reads the unit axis at the position the centre tap of the
/// `K×K×K` reference would read. Rows `[0,a)` use the (D,H) plane, `[a,a+c)`
/// the (D,W) plane, the rest the (H,W) plane.
pub fn naive_acs(
    x: &Tensor<f64>,
    w2d: &Tensor<f64>,
    split: [usize; 3],
    k: usize,
    s: usize,
    p: usize,
    d: usize,
) -> Tensor<f64> {
    let xs = x.shape();
    let (n, ci, co) = (xs[0], xs[1], w2d.shape()[0]);
    let out: Vec<usize> = (0..3)
        .map(|a| count_windows(xs[2 + a], k, s, p, d))
        .collect();
    let mut y = Tensor::zeros([n, co, out[0], out[1], out[2]]);
    for b in 0..n {
        for o in 0..co {
            let unit = if o < split[0] {
                2
            } else if o < split[0] + split[1] {
                1
            } else {
                0
            };
            for z in 0..out[0] {
                for r in 0..out[1] {
                    for c in 0..out[2] {
                        let at = [z, r, c];
                        let mut acc = 0.0;
                        for i in 0..ci {
                            for u in 0..k {
                                for v in 0..k {
                                    let mut taps = [u, v].into_iter();
                                    let mut pos = [0isize; 3];
                                    for a in 0..3 {
                                        let tap = if a == unit {
                                            k / 2
                                        } else {
                                            taps.next().unwrap()
                                        };
                                        pos[a] = (at[a] * s + tap * d) as isize - p as isize;
                                    }
                                    if (0..3).any(|a| pos[a] < 0 || pos[a] >= xs[2 + a] as isize) {
                                        continue;
                                    }
                                    acc += w2d.get(&[o, i, u, v])
                                        * x.get(&[
                                            b,
                                            i,
                                            pos[0] as usize,
                                            pos[1] as usize,
                                            pos[2] as usize,
                                        ]);
                                }
                            }
                        }
                        y.set(&[b, o, z, r, c], acc);
                    }
                }
            }
        }
    }
    y
}

pub fn max_abs<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x.f64() - y.f64()).abs())
        .fold(0.0, f64::max)
}
