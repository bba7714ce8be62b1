use alloc::format;

use crate::acs::{view_padding, AcsKernel, View};
use crate::error::{Error, Result};
use crate::ops::ConvConfig;
use crate::real::Real;
use crate::tensor::Tensor;

/// The `(C_o, C_i, K, K, K)` kernel whose ordinary 3D convolution (with
/// `cfg`) reproduces [`crate::acs::acs_conv`] on inputs of the given
/// spatial extents.
///
/// Rows of each view group are zero except for one `K×K` slice across the
/// view's unit axis. The slice index `j` must satisfy
/// `j·d − p = trim_front − pad_before` on the unit axis, where the right
/// side is the offset the view convolution reads from; configurations
/// without such an integer `j ∈ [0, K)` (asymmetric reference padding, or
/// offsets that are not a multiple of the dilation) are rejected.
pub fn embed_block_sparse<T: Real>(
    k: &AcsKernel<T>,
    cfg: &ConvConfig,
    input: [usize; 3],
) -> Result<Tensor<T>> {
    let ks = k.kernel_size();
    if cfg.kernel != [ks; 3]
        || cfg.out_channels != k.out_channels()
        || cfg.in_channels != k.in_channels()
    {
        return Err(Error::InvalidConfig(format!(
            "kernel {:?} with {}→{} channels does not match the ACS kernel",
            cfg.kernel, cfg.in_channels, cfg.out_channels
        )));
    }
    let ci = k.in_channels();
    let mut out = Tensor::zeros([k.out_channels(), ci, ks, ks, ks]);
    for view in View::ALL {
        let u = view.unit_axis();
        let vp = view_padding(input, cfg, view)?;
        let (p, _) = cfg.padding[u];
        if cfg.padding[u].0 != cfg.padding[u].1 {
            return Err(Error::OutsideOracle(format!(
                "asymmetric reference padding on axis {u}"
            )));
        }
        let before = vp.padding[u].0;
        let d = cfg.dilation[u];
        let j = match (p + vp.trim.0 * cfg.stride[u]).checked_sub(before) {
            Some(off) if off % d == 0 && off / d < ks => off / d,
            _ => {
                return Err(Error::OutsideOracle(format!(
                    "{} view: unit-axis offset {}−{before} is not a multiple of dilation {d} inside the kernel",
                    view.name(),
                    p + vp.trim.0 * cfg.stride[u]
                )))
            }
        };
        for row in k.split().rows(view) {
            for c in 0..ci {
                for a in 0..ks {
                    for b in 0..ks {
                        let mut idx = [0usize; 3];
                        let mut rest = [a, b].into_iter();
                        for (ax, slot) in idx.iter_mut().enumerate() {
                            *slot = if ax == u { j } else { rest.next().unwrap_or(0) };
                        }
                        let v = k.weight().get(&[row, c, a, b]);
                        out.set(&[row, c, idx[0], idx[1], idx[2]], v);
                    }
                }
            }
        }
    }
    Ok(out)
}
