use acs_core::data::{
    gen2d, rasterize, sample2d, sample3d, GenOptions, Noise, ShapeKind, ShapeSpec, EXTENT, PIECE,
};
use acs_core::Tensor;
use std::collections::BTreeSet;

/// Face-connected foreground components as lists of `(d, h, w)` voxels.
fn components(mask: &Tensor<f32>) -> Vec<Vec<[usize; 3]>> {
    let dims = match *mask.shape() {
        [h, w] => [1, h, w],
        [d, h, w] => [d, h, w],
        _ => unreachable!(),
    };
    let at = |p: [usize; 3]| (p[0] * dims[1] + p[1]) * dims[2] + p[2];
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for d in 0..dims[0] {
        for h in 0..dims[1] {
            for w in 0..dims[2] {
                let start = [d, h, w];
                if seen[at(start)] || mask.data()[at(start)] == 0.0 {
                    continue;
                }
                seen[at(start)] = true;
                let mut stack = vec![start];
                let mut comp = Vec::new();
                while let Some(p) = stack.pop() {
                    comp.push(p);
                    for a in 0..3 {
                        for step in [-1isize, 1] {
                            let Some(v) = p[a].checked_add_signed(step).filter(|&v| v < dims[a])
                            else {
                                continue;
                            };
                            let mut q = p;
                            q[a] = v;
                            if !seen[at(q)] && mask.data()[at(q)] != 0.0 {
                                seen[at(q)] = true;
                                stack.push(q);
                            }
                        }
                    }
                }
                out.push(comp);
            }
        }
    }
    out
}

fn piece_of(comp: &[[usize; 3]], planar: bool) -> [usize; 3] {
    let first = comp[0].map(|v| v / PIECE);
    for p in comp {
        let q = p.map(|v| v / PIECE);
        assert_eq!(q, first, "component crosses a piece boundary");
    }
    if planar {
        [0, first[1], first[2]]
    } else {
        first
    }
}

#[test]
fn planar_samples_hold_three_shapes_in_distinct_quadrants() {
    for i in 0..60 {
        let s = sample2d(7, i, &GenOptions::default());
        assert_eq!(s.mask.shape(), &[EXTENT, EXTENT]);
        assert_eq!(s.image.shape(), &[1, EXTENT, EXTENT]);
        let comps = components(&s.mask);
        assert_eq!(comps.len(), 3, "sample {i}");
        let pieces: BTreeSet<_> = comps.iter().map(|c| piece_of(c, true)).collect();
        assert_eq!(pieces.len(), 3);
        for c in &comps {
            let ids: BTreeSet<u32> = c
                .iter()
                .map(|p| s.mask.data()[p[1] * EXTENT + p[2]] as u32)
                .collect();
            assert_eq!(ids.len(), 1);
            assert!(ids.iter().all(|&v| v == 1 || v == 2));
        }
    }
}

#[test]
fn solid_samples_hold_four_shapes_in_distinct_octants() {
    for opts in [
        GenOptions::default(),
        GenOptions {
            random_orientation: true,
            ..GenOptions::default()
        },
    ] {
        for i in 0..12 {
            let s = sample3d(3, i, &opts);
            assert_eq!(s.mask.shape(), &[EXTENT; 3]);
            let comps = components(&s.mask);
            assert_eq!(comps.len(), 4, "sample {i}");
            let pieces: BTreeSet<_> = comps.iter().map(|c| piece_of(c, false)).collect();
            assert_eq!(pieces.len(), 4);
        }
    }
}

#[test]
fn planar_classes_are_balanced() {
    let mut counts = [0usize; 2];
    for s in gen2d(
        1000,
        11,
        &GenOptions {
            noise: Noise::None,
            random_orientation: false,
        },
    ) {
        for sh in &s.shapes {
            counts[usize::from(sh.kind == ShapeKind::Square)] += 1;
        }
    }
    let ratio = counts[0] as f64 / counts[1] as f64;
    assert!((0.9..=1.1).contains(&ratio), "{counts:?}");
}

#[test]
fn generation_is_deterministic_and_rerasterizes() {
    let opts = GenOptions::default();
    for i in 0..4 {
        let a = sample3d(5, i, &opts);
        let b = sample3d(5, i, &opts);
        assert!(a.image.bit_eq(&b.image));
        assert!(rasterize(&a.shapes, &[EXTENT; 3]).bit_eq(&a.mask));
        let c = sample2d(5, i, &opts);
        assert!(rasterize(&c.shapes, &[EXTENT, EXTENT]).bit_eq(&c.mask));
    }
    assert!(!sample2d(5, 0, &opts)
        .image
        .bit_eq(&sample2d(6, 0, &opts).image));
}

#[test]
fn noiseless_image_is_the_indicator() {
    let s = sample3d(
        1,
        2,
        &GenOptions {
            noise: Noise::None,
            random_orientation: false,
        },
    );
    for (v, m) in s.image.data().iter().zip(s.mask.data()) {
        assert_eq!(*v, if *m > 0.0 { 1.0 } else { 0.0 });
    }
}

#[test]
fn noise_level_matches_the_option() {
    for (opts, sd) in [
        (GenOptions::default(), 0.5),
        (GenOptions::variance_half(), 0.5f64.sqrt()),
    ] {
        let s = sample3d(2, 0, &opts);
        let bg: Vec<f64> = s
            .image
            .data()
            .iter()
            .zip(s.mask.data())
            .filter(|(_, m)| **m == 0.0)
            .map(|(v, _)| f64::from(*v))
            .collect();
        let mean = bg.iter().sum::<f64>() / bg.len() as f64;
        let var = bg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / bg.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var.sqrt() - sd).abs() < 0.01, "{}", var.sqrt());
    }
}

fn slice(mask: &Tensor<f32>, axis: usize, at: usize) -> Vec<f32> {
    let mut out = Vec::new();
    for a in 0..EXTENT {
        for b in 0..EXTENT {
            let p = match axis {
                0 => [at, a, b],
                1 => [a, at, b],
                _ => [a, b, at],
            };
            out.push(mask.data()[(p[0] * EXTENT + p[1]) * EXTENT + p[2]]);
        }
    }
    out
}

#[test]
fn central_slices_of_spheres_and_cubes() {
    for size in [9, 13, 21] {
        let o = 5;
        let solid = |kind| ShapeSpec {
            kind,
            origin: [o, o, o],
            size,
            apex_up: true,
        };
        let planar = |kind| ShapeSpec {
            kind,
            origin: [0, o, o],
            size,
            apex_up: true,
        };
        let disc = rasterize(&[planar(ShapeKind::Circle)], &[EXTENT, EXTENT]);
        let square = rasterize(&[planar(ShapeKind::Square)], &[EXTENT, EXTENT]);
        let sphere = rasterize(&[solid(ShapeKind::Sphere)], &[EXTENT; 3]);
        let cube = rasterize(&[solid(ShapeKind::Cube)], &[EXTENT; 3]);
        let mid = o + size / 2;
        for axis in 0..3 {
            let want_disc: Vec<f32> = disc.data().to_vec();
            assert_eq!(
                slice(&sphere, axis, mid),
                want_disc,
                "size {size} axis {axis}"
            );
            for at in o..o + size {
                let s: Vec<f32> = slice(&cube, axis, at).iter().map(|&v| v / 2.0).collect();
                let q: Vec<f32> = square.data().iter().map(|&v| v / 2.0).collect();
                assert_eq!(s, q);
            }
        }
    }
}

#[test]
fn cone_narrows_towards_its_apex() {
    for apex_up in [true, false] {
        let spec = ShapeSpec {
            kind: ShapeKind::Cone,
            origin: [4, 4, 4],
            size: 20,
            apex_up,
        };
        let m = rasterize(&[spec], &[EXTENT; 3]);
        let area: Vec<usize> = (4..24)
            .map(|d| slice(&m, 0, d).iter().filter(|&&v| v > 0.0).count())
            .collect();
        let ordered = if apex_up {
            area.windows(2).all(|w| w[0] >= w[1])
        } else {
            area.windows(2).all(|w| w[0] <= w[1])
        };
        assert!(ordered, "{area:?}");
    }
}
