mod common;

use acs_core::acs::AcsKernel;
use acs_core::gradcheck::check_entries;
use acs_core::graph::{
    convert_graph, embed_block_sparse, forward, infer_shapes, inflate_kernel, init_params,
    toy_unet, transfer_weights, AcsVariant, ConvertMode, ConvertOptions, Dim, KernelSource,
    LayerKind, LayerNode, ModelGraph, PoolDepth, Scope, UNetSpec,
};
use acs_core::ops::{ConvConfig, NormMode, PoolConfig};
use acs_core::{AnyTensor, Error, ParamStore, Tensor, WeightStore};
use common::{max_abs, random, rng};
use proptest::prelude::*;

fn conv2d(
    name: &str,
    input: &str,
    ci: usize,
    co: usize,
    k: usize,
    p: usize,
    bias: bool,
) -> LayerNode {
    LayerNode::new(
        name,
        LayerKind::Conv {
            cfg: ConvConfig::planar(ci, co, k, 1, p, 1),
            bias,
            source: KernelSource::Direct,
        },
        &[input],
    )
}

fn convert(g: &ModelGraph, mode: ConvertMode) -> ModelGraph {
    convert_graph(g, &ConvertOptions::new(mode)).unwrap()
}

fn unet() -> ModelGraph {
    toy_unet(UNetSpec::default()).unwrap()
}

#[test]
fn one_by_one_conv_becomes_unit_conv3d() {
    let g = ModelGraph::new(
        Dim::D2,
        "x",
        vec![conv2d("c", "x", 4, 8, 1, 0, false)],
        vec!["c".into()],
    )
    .unwrap();
    for mode in [
        ConvertMode::Acs,
        ConvertMode::P25d,
        ConvertMode::I3d,
        ConvertMode::Conv3dRandom,
    ] {
        let g3 = convert(&g, mode);
        match &g3.nodes()[0].kind {
            LayerKind::Conv { cfg, source, .. } => {
                assert_eq!(cfg.kernel, [1, 1, 1]);
                assert_eq!(*source, KernelSource::Direct);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(g3.node("c").unwrap().kind.name(Dim::D3), "conv3d");
        assert_eq!((g.param_count(), g3.param_count()), (32, 32));
    }
}

#[test]
fn unet_parameter_counts() {
    let g = unet();
    let n2 = g.param_count();
    let acs = convert(&g, ConvertMode::Acs).param_count();
    let p25 = convert(&g, ConvertMode::P25d).param_count();
    let c3 = convert(&g, ConvertMode::Conv3dRandom).param_count();
    assert_eq!(acs, n2);
    assert_eq!(p25, n2);
    let ratio = c3 as f64 / acs as f64;
    assert!((2.5..=3.0).contains(&ratio), "{ratio}");
}

#[test]
fn cubic_slots_grow_by_k_per_node() {
    let g = unet();
    for mode in [ConvertMode::I3d, ConvertMode::Conv3dRandom] {
        let g3 = convert(&g, mode);
        for (a, b) in g.nodes().iter().zip(g3.nodes()) {
            let n2: usize = a
                .param_slots(Dim::D2)
                .iter()
                .filter(|s| !s.role.is_buffer())
                .map(|s| s.shape.iter().product::<usize>())
                .sum();
            let n3: usize = b
                .param_slots(Dim::D3)
                .iter()
                .filter(|s| !s.role.is_buffer())
                .map(|s| s.shape.iter().product::<usize>())
                .sum();
            match &a.kind {
                LayerKind::Conv {
                    cfg, bias: false, ..
                } if cfg.kernel[1] == 3 => assert_eq!(n3, 3 * n2, "{}", a.name),
                _ => assert_eq!(n3, n2, "{}", a.name),
            }
        }
    }
}

#[test]
fn conversion_preserves_structure() {
    let g = unet();
    for mode in ConvertMode::ALL {
        let g3 = convert(&g, mode);
        assert_eq!(g3.dim(), Dim::D3);
        assert_eq!(g3.input(), g.input());
        assert_eq!(g3.outputs(), g.outputs());
        assert_eq!(g3.nodes().len(), g.nodes().len());
        for (a, b) in g.nodes().iter().zip(g3.nodes()) {
            assert_eq!((&a.name, &a.inputs), (&b.name, &b.inputs));
        }
    }
}

#[test]
fn pool_depth_option() {
    let pool = LayerNode::new(
        "p",
        LayerKind::MaxPool(PoolConfig::new([1, 2, 2], [1, 2, 2], [0; 3])),
        &["x"],
    );
    let g = ModelGraph::new(Dim::D2, "x", vec![pool], vec!["p".into()]).unwrap();
    let one = convert(&g, ConvertMode::Acs);
    let full = convert_graph(
        &g,
        &ConvertOptions::new(ConvertMode::Acs).with_pool_depth(PoolDepth::Full),
    )
    .unwrap();
    let cfg = |g: &ModelGraph| match g.nodes()[0].kind {
        LayerKind::MaxPool(c) => (c.window, c.stride),
        _ => unreachable!(),
    };
    assert_eq!(cfg(&one), ([1, 2, 2], [1, 2, 2]));
    assert_eq!(cfg(&full), ([2, 2, 2], [2, 2, 2]));
}

#[test]
fn converting_a_3d_graph_fails() {
    let g3 = convert(&unet(), ConvertMode::Acs);
    assert!(convert_graph(&g3, &ConvertOptions::new(ConvertMode::Acs)).is_err());
}

#[test]
fn soft_conversion_adds_three_logits_per_layer() {
    let g = unet();
    let soft = convert(&g, ConvertMode::SoftAcs);
    let acs_layers = soft
        .nodes()
        .iter()
        .filter(|n| {
            matches!(
                n.kind,
                LayerKind::Acs {
                    variant: AcsVariant::Soft,
                    ..
                }
            )
        })
        .count();
    assert_eq!(acs_layers, 10);
    assert_eq!(soft.param_count(), g.param_count() + 3 * acs_layers);
}

fn source_store(g: &ModelGraph, seed: u64) -> WeightStore {
    init_params::<f32>(g, seed).to_weights()
}

#[test]
fn whole_network_transfer_copies_every_slot() {
    let g = unet();
    let src = source_store(&g, 1);
    let before = src.clone();
    let g3 = convert(&g, ConvertMode::Acs);
    let out = transfer_weights(&src, &g3, &Scope::Whole, 5).unwrap();
    assert!(src.bit_eq(&before));
    assert_eq!(out.len(), src.len());
    for (name, t) in out.iter() {
        let (AnyTensor::F32(a), AnyTensor::F32(b)) = (t, src.get(name).unwrap()) else {
            panic!("{name}")
        };
        assert_eq!(a.data(), b.data(), "{name}");
    }
    // ACS kernels keep the 2D layout, so they read back unchanged.
    assert!(out
        .get("decoder.dec2.conv1.weight")
        .unwrap()
        .bit_eq(src.get("decoder.dec2.conv1.weight").unwrap()));
    let again = transfer_weights(&src, &g3, &Scope::Whole, 5).unwrap();
    assert!(again.bit_eq(&out));
}

#[test]
fn p25d_transfer_inserts_unit_depth() {
    let g = unet();
    let src = source_store(&g, 1);
    let out = transfer_weights(&src, &convert(&g, ConvertMode::P25d), &Scope::Whole, 5).unwrap();
    let w = out.get("encoder.down1.conv1.weight").unwrap();
    assert_eq!(w.shape(), &[8, 1, 1, 3, 3]);
    let AnyTensor::F32(a) = w else { panic!() };
    let AnyTensor::F32(b) = src.get("encoder.down1.conv1.weight").unwrap() else {
        panic!()
    };
    assert_eq!(a.data(), b.data());
}

#[test]
fn encoder_scope_transfers_only_encoder_slots() {
    let g = unet();
    let src = source_store(&g, 1);
    let g3 = convert(&g, ConvertMode::Acs);
    let out = transfer_weights(&src, &g3, &Scope::Prefixes(vec!["encoder.".into()]), 5).unwrap();
    let fresh = init_params::<f32>(&g3, 5).to_weights();
    let (mut moved, mut total) = (0, 0);
    for slot in g3.param_slots() {
        let got = out.get(&slot.name).unwrap();
        let n: usize = slot.shape.iter().product();
        total += n;
        if slot.name.starts_with("encoder.") {
            assert!(got.bit_eq(src.get(&slot.name).unwrap()), "{}", slot.name);
            moved += n;
        } else {
            assert!(got.bit_eq(fresh.get(&slot.name).unwrap()), "{}", slot.name);
        }
    }
    assert!(moved > 0 && moved < total);
}

#[test]
fn random_conv3d_kernels_are_never_transferred() {
    let g = unet();
    let src = source_store(&g, 1);
    let g3 = convert(&g, ConvertMode::Conv3dRandom);
    let out = transfer_weights(&src, &g3, &Scope::Whole, 5).unwrap();
    assert_eq!(
        out.get("encoder.down1.conv1.weight").unwrap().shape(),
        &[8, 1, 3, 3, 3]
    );
    assert!(out
        .get("encoder.down1.bn1.weight")
        .unwrap()
        .bit_eq(src.get("encoder.down1.bn1.weight").unwrap()));
    assert!(out.get("head.weight").unwrap().shape() == [2, 8, 1, 1, 1]);
}

#[test]
fn missing_source_names_the_node() {
    let g = unet();
    let mut src = WeightStore::new();
    for (n, t) in source_store(&g, 1).iter() {
        if n != "decoder.dec1.conv2.weight" {
            src.insert(n, t.clone()).unwrap();
        }
    }
    let err = transfer_weights(&src, &convert(&g, ConvertMode::Acs), &Scope::Whole, 0).unwrap_err();
    assert!(
        err.to_string().contains("decoder.dec1.conv2.weight"),
        "{err}"
    );
}

#[test]
fn inflation_sums_back_exactly() {
    // Multiples of 3/16 divide by 3 without rounding.
    let w = Tensor::<f64>::from_fn([2, 3, 3, 3], |i| ((i % 7) as f64 - 3.0) * 3.0 / 16.0);
    for axis in 0..3 {
        let inf = inflate_kernel(&w, 3, axis).unwrap();
        for o in 0..2 {
            for c in 0..3 {
                for a in 0..3 {
                    for b in 0..3 {
                        let sum: f64 = (0..3)
                            .map(|j| {
                                let mut idx = vec![a, b];
                                idx.insert(axis, j);
                                inf.get(&[o, c, idx[0], idx[1], idx[2]])
                            })
                            .sum();
                        assert_eq!(sum, w.get(&[o, c, a, b]));
                    }
                }
            }
        }
    }
}

fn eval_2d_vs_3d(
    g: &ModelGraph,
    mode: ConvertMode,
    x2: &Tensor<f32>,
    x3: &Tensor<f32>,
    norm: NormMode,
) -> (Tensor<f32>, Tensor<f32>) {
    let mut p2 = init_params::<f32>(g, 3);
    // Non-trivial running statistics so eval mode exercises them.
    let mut r = rng(21);
    let names: Vec<String> = p2.names().map(String::from).collect();
    for n in names {
        if n.ends_with("running_mean") || n.ends_with("running_var") {
            let t = p2.get(&n).unwrap();
            let v = Tensor::from_fn(t.shape().to_vec(), |_| {
                rand::Rng::random_range(&mut r, 0.5f32..1.5)
            });
            p2.upsert(&n, v).unwrap();
        }
    }
    let g3 = convert(g, mode);
    let p3: ParamStore<f32> = transfer_weights(&p2.to_weights(), &g3, &Scope::Whole, 0)
        .unwrap()
        .to_params();
    let y2 = forward(g, &p2, x2, norm).unwrap().into_output();
    let y3 = forward(&g3, &p3, x3, norm).unwrap().into_output();
    (y2, y3)
}

#[test]
fn p25d_on_single_slice_equals_2d_network() {
    let g = unet();
    let mut r = rng(20);
    let x2 = random::<f32>(&mut r, &[2, 1, 16, 16]);
    let x3 = x2.clone().reshape([2, 1, 1, 16, 16]).unwrap();
    for norm in [NormMode::Eval, NormMode::Train] {
        let (y2, y3) = eval_2d_vs_3d(&g, ConvertMode::P25d, &x2, &x3, norm);
        let y3 = y3.reshape(y2.shape().to_vec()).unwrap();
        assert!(max_abs(&y2, &y3) <= 1e-5, "{norm:?}");
    }
}

#[test]
fn i3d_on_depth_constant_input_equals_2d_interior() {
    let nodes = vec![
        conv2d("c1", "x", 2, 4, 3, 1, true),
        LayerNode::new("r1", LayerKind::Relu, &["c1"]),
        conv2d("c2", "r1", 4, 3, 3, 0, false),
    ];
    let g = ModelGraph::new(Dim::D2, "x", nodes, vec!["c2".into()]).unwrap();
    let mut r = rng(22);
    let plane = random::<f32>(&mut r, &[1, 2, 9, 8]);
    let depth = 7;
    let x3 = Tensor::from_fn([1, 2, depth, 9, 8], |i| {
        let (c, rest) = (i / (depth * 72), i % 72);
        plane.data()[c * 72 + rest]
    });
    let (y2, y3) = eval_2d_vs_3d(&g, ConvertMode::I3d, &plane, &x3, NormMode::Eval);
    // Depth: c1 keeps 7 (padding 1), c2 is valid → 5; slices 1..4 never see
    // the zero depth padding of c1.
    assert_eq!(y3.shape(), &[1, 3, 5, 7, 6]);
    for d in 1..4 {
        for c in 0..3 {
            for h in 0..7 {
                for w in 0..6 {
                    let a = y3.get(&[0, c, d, h, w]);
                    let b = y2.get(&[0, c, h, w]);
                    assert!((a - b).abs() <= 1e-5, "d={d}");
                }
            }
        }
    }
}

#[test]
fn relu_graph_is_relu() {
    let g = ModelGraph::new(
        Dim::D3,
        "x",
        vec![LayerNode::new("r", LayerKind::Relu, &["x"])],
        vec!["r".into()],
    )
    .unwrap();
    let x = Tensor::<f64>::new([1, 1, 1, 1, 2], vec![-1.0, 2.0]).unwrap();
    let y = forward(&g, &ParamStore::new(), &x, NormMode::Eval)
        .unwrap()
        .into_output();
    assert_eq!(y.data(), &[0.0, 2.0]);
}

#[test]
fn one_by_one_then_relu_by_hand() {
    let g = ModelGraph::new(
        Dim::D2,
        "x",
        vec![
            conv2d("c", "x", 2, 2, 1, 0, true),
            LayerNode::new("r", LayerKind::Relu, &["c"]),
        ],
        vec!["r".into()],
    )
    .unwrap();
    let mut p = ParamStore::<f64>::new();
    p.insert(
        "c.weight",
        Tensor::new([2, 2, 1, 1], vec![1.0, 2.0, -3.0, 1.0]).unwrap(),
    )
    .unwrap();
    p.insert("c.bias", Tensor::new([2], vec![0.5, -1.0]).unwrap())
        .unwrap();
    let x = Tensor::new([1, 2, 1, 1], vec![3.0, 4.0]).unwrap();
    // 1·3 + 2·4 + 0.5 = 11.5; −3·3 + 4 − 1 = −6 → 0
    let y = forward(&g, &p, &x, NormMode::Eval).unwrap().into_output();
    assert_eq!(y.data(), &[11.5, 0.0]);
}

#[test]
fn graph_gradients_match_finite_differences() {
    let nodes = vec![
        LayerNode::new(
            "acs",
            LayerKind::Acs {
                cfg: ConvConfig::cubic(2, 5, 3, 1, 1, 1),
                bias: true,
                variant: AcsVariant::Soft,
            },
            &["x"],
        ),
        LayerNode::new("act", LayerKind::Relu, &["acs"]),
        LayerNode::new(
            "bn",
            LayerKind::BatchNorm {
                channels: 5,
                eps: 1e-5,
                momentum: 0.1,
            },
            &["act"],
        ),
        LayerNode::new(
            "head",
            LayerKind::Conv {
                cfg: ConvConfig::cubic(5, 2, 1, 1, 0, 1),
                bias: true,
                source: KernelSource::Direct,
            },
            &["bn"],
        ),
    ];
    let g = ModelGraph::new(Dim::D3, "x", nodes, vec!["head".into()]).unwrap();
    let mut r = rng(23);
    let mut params = init_params::<f64>(&g, 4);
    let names: Vec<String> = params.names().map(String::from).collect();
    for n in &names {
        let t = params.get(n).unwrap();
        params.upsert(n, random(&mut r, t.shape())).unwrap();
    }
    let x = random::<f64>(&mut r, &[2, 2, 3, 4, 3]);
    let fw = forward(&g, &params, &x, NormMode::Train).unwrap();
    let seed = random::<f64>(&mut r, fw.outputs()[0].shape());
    let grads = fw.backward(&params, &[("head", &seed)]).unwrap();
    let loss = |p: &ParamStore<f64>, x: &Tensor<f64>| {
        let y = forward(&g, p, x, NormMode::Train).unwrap().into_output();
        y.data()
            .iter()
            .zip(seed.data())
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    for slot in g.param_slots().into_iter().filter(|s| !s.role.is_buffer()) {
        let t = params.get(&slot.name).unwrap().clone();
        let err = check_entries(
            t.data(),
            grads.params.get(&slot.name).unwrap().data(),
            |d| {
                let mut p = params.clone();
                p.upsert(
                    &slot.name,
                    Tensor::new(t.shape().to_vec(), d.to_vec()).unwrap(),
                )
                .unwrap();
                loss(&p, &x)
            },
        );
        assert!(err <= 1e-5, "{}: {err}", slot.name);
    }
    let err = check_entries(x.data(), grads.input.data(), |d| {
        loss(
            &params,
            &Tensor::new(x.shape().to_vec(), d.to_vec()).unwrap(),
        )
    });
    assert!(err <= 1e-5, "input: {err}");
}

#[test]
fn forward_errors_name_the_node() {
    let g = unet();
    let mut p = init_params::<f32>(&g, 0);
    let x = Tensor::<f32>::zeros([1, 1, 16, 16]);
    let bad = Tensor::<f32>::zeros([8, 2, 3, 3]);
    p.upsert("encoder.down2.conv1.weight", bad).unwrap();
    let err = forward(&g, &p, &x, NormMode::Eval).err().unwrap();
    assert!(err.to_string().contains("encoder.down2.conv1"), "{err}");

    let empty = ParamStore::<f32>::new();
    let err = forward(&g, &empty, &x, NormMode::Eval).err().unwrap();
    assert!(
        err.to_string().contains("encoder.down1.conv1.weight"),
        "{err}"
    );

    let err = infer_shapes(&g, &[1, 3, 16, 16]).unwrap_err();
    assert!(
        matches!(err, Error::AtNode { ref node, .. } if node == "encoder.down1.conv1"),
        "{err}"
    );
}

#[test]
fn graph_validation() {
    let relu = |n: &str, i: &str| LayerNode::new(n, LayerKind::Relu, &[i]);
    let build = |nodes, out: &str| ModelGraph::new(Dim::D2, "x", nodes, vec![out.into()]);
    assert!(build(vec![relu("a", "x"), relu("a", "a")], "a").is_err());
    assert!(build(vec![relu("a", "b"), relu("b", "x")], "b").is_err());
    assert!(build(vec![relu("a", "x")], "z").is_err());
    assert!(build(vec![relu("x", "x")], "x").is_err());
    let acs = LayerNode::new(
        "a",
        LayerKind::Acs {
            cfg: ConvConfig::cubic(1, 3, 3, 1, 1, 1),
            bias: false,
            variant: AcsVariant::Split,
        },
        &["x"],
    );
    assert!(build(vec![acs], "a").is_err());
    let add = LayerNode::new("s", LayerKind::Add, &["x"]);
    assert!(build(vec![add], "s").is_err());
}

#[test]
fn unit_kernel_embedding_is_the_kernel() {
    let mut r = rng(24);
    let w = random::<f64>(&mut r, &[4, 3, 1, 1]);
    let k = AcsKernel::new(w.clone(), None).unwrap();
    let dense = embed_block_sparse(&k, &ConvConfig::cubic(3, 4, 1, 1, 0, 1), [5; 3]).unwrap();
    assert_eq!(dense.data(), w.data());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unet_conversion_counts(base in 1usize..6, levels in 1usize..4, classes in 1usize..4, inp in 1usize..3) {
        let g = toy_unet(UNetSpec { in_channels: inp, classes, base, levels }).unwrap();
        let kernels: usize = g
            .nodes()
            .iter()
            .filter_map(|n| match &n.kind {
                LayerKind::Conv { cfg, .. } if cfg.kernel[1] == 3 => Some(cfg.out_channels * cfg.in_channels * 9),
                _ => None,
            })
            .sum();
        prop_assert_eq!(convert(&g, ConvertMode::Acs).param_count(), g.param_count());
        prop_assert_eq!(convert(&g, ConvertMode::P25d).param_count(), g.param_count());
        prop_assert_eq!(convert(&g, ConvertMode::MeanAcs).param_count(), g.param_count());
        prop_assert_eq!(convert(&g, ConvertMode::I3d).param_count(), g.param_count() + 2 * kernels);
        prop_assert_eq!(convert(&g, ConvertMode::Conv3dRandom).param_count(), g.param_count() + 2 * kernels);
    }
}
