//! Synthetic shape datasets.
//!
//! A 48×48 image is divided into four 24×24 pieces and three of them get a
//! circle or a square; a 48³ volume is divided into eight 24³ pieces and
//! four of them get a sphere, cube, cylinder, cone or pyramid. Every shape
//! has an integer bounding-box side in `[8, 22]` and sits at least one
//! voxel inside its piece, so shapes never touch. A voxel belongs to a
//! shape when its center does.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;

pub const EXTENT: usize = 48;
pub const PIECE: usize = 24;
pub const MIN_SIZE: usize = 8;
pub const MAX_SIZE: usize = 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Circle,
    Square,
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Pyramid,
}

impl ShapeKind {
    pub const PLANAR: [ShapeKind; 2] = [ShapeKind::Circle, ShapeKind::Square];
    pub const SOLID: [ShapeKind; 5] = [
        ShapeKind::Sphere,
        ShapeKind::Cube,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
        ShapeKind::Pyramid,
    ];

    /// Mask id: circle 1, square 2; sphere 1, cube 2, cylinder 3, cone 4,
    /// pyramid 5.
    pub fn class_id(self) -> u8 {
        match self {
            ShapeKind::Circle | ShapeKind::Sphere => 1,
            ShapeKind::Square | ShapeKind::Cube => 2,
            ShapeKind::Cylinder => 3,
            ShapeKind::Cone => 4,
            ShapeKind::Pyramid => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cube => "cube",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Pyramid => "pyramid",
        }
    }

    pub fn is_planar(self) -> bool {
        matches!(self, ShapeKind::Circle | ShapeKind::Square)
    }
}

/// One rasterized shape: an axis-aligned bounding cube of side `size`
/// starting at `origin` (`(d, h, w)`; `d` is 0 for planar shapes).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub origin: [usize; 3],
    pub size: usize,
    /// Cone and pyramid apex towards +depth (`false` flips it).
    pub apex_up: bool,
}

impl ShapeSpec {
    /// Whether the voxel at `(d, h, w)` lies inside the shape.
    pub fn contains(&self, p: [usize; 3]) -> bool {
        let s = self.size as f64;
        let r = s / 2.0;
        let rel = |a: usize| p[a] as f64 + 0.5 - self.origin[a] as f64;
        let (u, v) = (rel(1) - r, rel(2) - r);
        let inside = |a: usize| p[a] >= self.origin[a] && p[a] < self.origin[a] + self.size;
        if !(inside(1) && inside(2)) {
            return false;
        }
        if self.kind.is_planar() {
            return match self.kind {
                ShapeKind::Circle => u * u + v * v <= r * r,
                _ => true,
            };
        }
        if !inside(0) {
            return false;
        }
        let z = rel(0) - r;
        // Fraction of the height covered, towards the apex.
        let t = if self.apex_up {
            rel(0) / s
        } else {
            1.0 - rel(0) / s
        };
        match self.kind {
            ShapeKind::Sphere => u * u + v * v + z * z <= r * r,
            ShapeKind::Cube => true,
            ShapeKind::Cylinder => u * u + v * v <= r * r,
            ShapeKind::Cone => {
                let rt = r * (1.0 - t);
                u * u + v * v <= rt * rt
            }
            ShapeKind::Pyramid => {
                let h = r * (1.0 - t);
                u.abs() <= h && v.abs() <= h
            }
            ShapeKind::Circle | ShapeKind::Square => unreachable!("handled above"),
        }
    }
}

/// Noise added to the indicator image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    None,
    /// Gaussian with the given standard deviation.
    Gaussian(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenOptions {
    pub noise: Noise,
    /// Draw the cone/pyramid apex direction at random.
    pub random_orientation: bool,
}

impl Default for GenOptions {
    /// Standard deviation 0.5, apex towards +depth.
    fn default() -> Self {
        Self {
            noise: Noise::Gaussian(0.5),
            random_orientation: false,
        }
    }
}

impl GenOptions {
    /// Reads the noise level 0.5 as a variance instead of a standard
    /// deviation.
    pub fn variance_half() -> Self {
        Self {
            noise: Noise::Gaussian(libm::sqrt(0.5)),
            ..Self::default()
        }
    }
}

/// Image `1×spatial` (indicator plus noise), mask of class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeSample {
    pub image: Tensor<f32>,
    pub mask: Tensor<f32>,
    pub shapes: Vec<ShapeSpec>,
    pub seed: u64,
    pub index: u64,
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn place(rng: &mut ChaCha8Rng, piece: [usize; 3], planar: bool) -> ([usize; 3], usize) {
    let size = rng.random_range(MIN_SIZE..=MAX_SIZE);
    let mut origin = [0; 3];
    for (a, o) in origin.iter_mut().enumerate() {
        if planar && a == 0 {
            continue;
        }
        *o = piece[a] * PIECE + rng.random_range(1..=PIECE - 1 - size);
    }
    (origin, size)
}

/// Mask with each shape's class id at its voxels.
pub fn rasterize(shapes: &[ShapeSpec], spatial: &[usize]) -> Tensor<f32> {
    let dims = match *spatial {
        [h, w] => [1, h, w],
        [d, h, w] => [d, h, w],
        _ => panic!("rasterize needs 2 or 3 spatial extents"),
    };
    let mut mask = Tensor::zeros(spatial.to_vec());
    let data = mask.data_mut();
    for s in shapes {
        let (d0, d1) = if s.kind.is_planar() {
            (0, 1)
        } else {
            (s.origin[0], (s.origin[0] + s.size).min(dims[0]))
        };
        for d in d0..d1 {
            for h in s.origin[1]..(s.origin[1] + s.size).min(dims[1]) {
                for w in s.origin[2]..(s.origin[2] + s.size).min(dims[2]) {
                    if s.contains([d, h, w]) {
                        data[(d * dims[1] + h) * dims[2] + w] = f32::from(s.kind.class_id());
                    }
                }
            }
        }
    }
    mask
}

fn finish(
    rng: &mut ChaCha8Rng,
    shapes: Vec<ShapeSpec>,
    spatial: &[usize],
    opts: &GenOptions,
    seed: u64,
    index: u64,
) -> ShapeSample {
    let mask = rasterize(&shapes, spatial);
    let mut image_shape = vec![1];
    image_shape.extend_from_slice(spatial);
    let noise = match opts.noise {
        Noise::Gaussian(sd) if sd > 0.0 => Some(Normal::new(0.0, sd).expect("finite positive sd")),
        _ => None,
    };
    let image = Tensor::new(
        image_shape,
        mask.data()
            .iter()
            .map(|&m| {
                let base = if m > 0.0 { 1.0 } else { 0.0 };
                match &noise {
                    Some(n) => (base + n.sample(rng)) as f32,
                    None => base as f32,
                }
            })
            .collect(),
    )
    .expect("image matches mask");
    ShapeSample {
        image,
        mask,
        shapes,
        seed,
        index,
    }
}

/// Sample `index` of the 2D dataset with the given seed. Each sample has
/// its own random stream, so samples can be generated independently.
pub fn sample2d(seed: u64, index: u64, opts: &GenOptions) -> ShapeSample {
    let mut rng = sample_rng(seed, index);
    let mut pieces = [[0, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1]];
    let (chosen, _) = pieces.partial_shuffle(&mut rng, 3);
    let chosen: Vec<[usize; 3]> = chosen.to_vec();
    let shapes = chosen
        .into_iter()
        .map(|piece| {
            let kind = ShapeKind::PLANAR[usize::from(rng.random_bool(0.5))];
            let (origin, size) = place(&mut rng, piece, true);
            ShapeSpec {
                kind,
                origin,
                size,
                apex_up: true,
            }
        })
        .collect();
    finish(&mut rng, shapes, &[EXTENT, EXTENT], opts, seed, index)
}

pub fn sample3d(seed: u64, index: u64, opts: &GenOptions) -> ShapeSample {
    let mut rng = sample_rng(seed, index);
    let mut pieces: Vec<[usize; 3]> = (0..8).map(|i| [i >> 2, (i >> 1) & 1, i & 1]).collect();
    let (chosen, _) = pieces.partial_shuffle(&mut rng, 4);
    let chosen: Vec<[usize; 3]> = chosen.to_vec();
    let shapes = chosen
        .into_iter()
        .map(|piece| {
            let kind = ShapeKind::SOLID[rng.random_range(0..5)];
            let (origin, size) = place(&mut rng, piece, false);
            let apex_up = !opts.random_orientation || rng.random_bool(0.5);
            ShapeSpec {
                kind,
                origin,
                size,
                apex_up,
            }
        })
        .collect();
    finish(
        &mut rng,
        shapes,
        &[EXTENT, EXTENT, EXTENT],
        opts,
        seed,
        index,
    )
}

pub fn gen2d(n: usize, seed: u64, opts: &GenOptions) -> Vec<ShapeSample> {
    (0..n as u64).map(|i| sample2d(seed, i, opts)).collect()
}

pub fn gen3d(n: usize, seed: u64, opts: &GenOptions) -> Vec<ShapeSample> {
    (0..n as u64).map(|i| sample3d(seed, i, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(spec: ShapeSpec) -> usize {
        let m = rasterize(&[spec], &[EXTENT, EXTENT, EXTENT]);
        m.data().iter().filter(|&&v| v > 0.0).count()
    }

    fn solid(kind: ShapeKind, size: usize) -> ShapeSpec {
        ShapeSpec {
            kind,
            origin: [2, 3, 4],
            size,
            apex_up: true,
        }
    }

    #[test]
    fn cube_voxel_count() {
        for a in MIN_SIZE..=MAX_SIZE {
            assert_eq!(count(solid(ShapeKind::Cube, a)), a * a * a);
        }
    }

    #[test]
    fn sphere_volume() {
        let v = count(solid(ShapeKind::Sphere, 20)) as f64;
        let exact = 4.0 / 3.0 * core::f64::consts::PI * 1000.0;
        assert!((v - exact).abs() / exact < 0.05, "{v} vs {exact}");
    }

    #[test]
    fn noiseless_image_is_indicator() {
        let opts = GenOptions {
            noise: Noise::None,
            ..GenOptions::default()
        };
        let s = sample2d(3, 1, &opts);
        for (i, m) in s.image.data().iter().zip(s.mask.data()) {
            assert_eq!(*i, if *m > 0.0 { 1.0 } else { 0.0 });
        }
    }
}
