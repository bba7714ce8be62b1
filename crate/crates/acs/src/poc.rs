//! The 2D→3D transfer experiment on synthetic shapes.
//!
//! A small 2D UNet is trained to segment circles and squares. The trained
//! network is converted to 3D, its features are probed on solid-shape
//! volumes without any 3D training, and then each variant is fine-tuned on
//! a few volumes and scored on held-out ones.

use std::time::Instant;

use acs_core::data::{sample2d, sample3d, GenOptions, ShapeSample};
use acs_core::engine::{
    dice_global, feature_mauc_with, miou, one_hot, predict, recalibrate_norm, stack, train_loop,
    AdamConfig, LossKind, Negatives, Optimizer, Sample, TrainConfig,
};
use acs_core::graph::{
    convert_graph, forward, init_params, toy_unet, transfer_weights, ConvertMode, ConvertOptions,
    ModelGraph, PoolDepth, Scope, UNetSpec,
};
use acs_core::ops::NormMode;
use acs_core::{ParamStore, Tensor, WeightStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    AcsRandom,
    AcsPretrained,
    P25dRandom,
    P25dPretrained,
    Conv3dRandom,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::AcsRandom,
        Variant::AcsPretrained,
        Variant::P25dRandom,
        Variant::P25dPretrained,
        Variant::Conv3dRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::AcsRandom => "acs_r",
            Variant::AcsPretrained => "acs_p",
            Variant::P25dRandom => "p25d_r",
            Variant::P25dPretrained => "p25d_p",
            Variant::Conv3dRandom => "conv3d_r",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn mode(self) -> ConvertMode {
        match self {
            Variant::AcsRandom | Variant::AcsPretrained => ConvertMode::Acs,
            Variant::P25dRandom | Variant::P25dPretrained => ConvertMode::P25d,
            Variant::Conv3dRandom => ConvertMode::Conv3dRandom,
        }
    }

    pub fn pretrained(self) -> bool {
        matches!(self, Variant::AcsPretrained | Variant::P25dPretrained)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PocConfig {
    pub seed: u64,
    pub base: usize,
    pub levels: usize,
    pub train2d: usize,
    pub eval2d: usize,
    pub epochs2d: usize,
    pub batch2d: usize,
    pub lr2d: f64,
    pub probe3d: usize,
    pub train3d: usize,
    pub test3d: usize,
    pub epochs3d: usize,
    pub batch3d: usize,
    pub lr3d: f64,
    /// Cubic training crop for the 3D fine-tuning.
    pub crop3d: Option<usize>,
    /// Node whose activations are probed.
    pub feature_node: String,
    pub variants: Vec<Variant>,
}

impl Default for PocConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            base: 8,
            levels: 3,
            train2d: 600,
            eval2d: 100,
            epochs2d: 12,
            batch2d: 8,
            lr2d: 3e-3,
            probe3d: 100,
            train3d: 16,
            test3d: 16,
            epochs3d: 20,
            batch3d: 2,
            lr3d: 3e-3,
            crop3d: Some(32),
            feature_node: "decoder.dec1.relu2".into(),
            variants: Variant::ALL.to_vec(),
        }
    }
}

impl PocConfig {
    /// A seconds-scale configuration with the same pipeline.
    pub fn quick() -> Self {
        Self {
            base: 4,
            levels: 2,
            train2d: 24,
            eval2d: 8,
            epochs2d: 2,
            probe3d: 2,
            train3d: 2,
            test3d: 2,
            epochs3d: 1,
            crop3d: Some(16),
            feature_node: "decoder.dec1.relu2".into(),
            ..Self::default()
        }
    }

    pub fn describe(&self) -> Vec<(String, String)> {
        let crop = self.crop3d.map_or("none".to_string(), |c| format!("{c}³"));
        [
            ("seed", self.seed.to_string()),
            ("unet", format!("base {} levels {}", self.base, self.levels)),
            (
                "2d data",
                format!("{} train / {} eval", self.train2d, self.eval2d),
            ),
            (
                "2d training",
                format!(
                    "{} epochs, batch {}, adam lr {}",
                    self.epochs2d, self.batch2d, self.lr2d
                ),
            ),
            (
                "3d data",
                format!(
                    "{} probe / {} train / {} test",
                    self.probe3d, self.train3d, self.test3d
                ),
            ),
            (
                "3d training",
                format!(
                    "{} epochs, batch {}, adam lr {}, crop {crop}",
                    self.epochs3d, self.batch3d, self.lr3d
                ),
            ),
            ("probe node", self.feature_node.clone()),
            (
                "variants",
                self.variants
                    .iter()
                    .map(|v| v.name())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantResult {
    pub variant: Variant,
    /// Each class scored against the other shape classes.
    pub mauc: f64,
    /// Each class scored against every other voxel, background included.
    pub mauc_all: f64,
    pub dice: f64,
    pub miou: f64,
    pub params: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PocReport {
    pub dice2d: f64,
    pub rows: Vec<VariantResult>,
    /// Per-epoch histories: the 2D pretraining, then one per variant.
    pub histories: Vec<(String, String)>,
}

impl PocReport {
    pub fn row(&self, v: Variant) -> Option<&VariantResult> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// Comma-separated table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,mauc,mauc_all,dice,miou,params\n");
        for r in &self.rows {
            s += &format!(
                "{},{:.4},{:.4},{:.4},{:.4},{}\n",
                r.variant.name(),
                r.mauc,
                r.mauc_all,
                r.dice,
                r.miou,
                r.params
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("2D pretraining dice: {:.2}\n\n", 100.0 * self.dice2d);
        s += &format!(
            "{:<9} {:>6} {:>8} {:>6} {:>6} {:>8}\n",
            "variant", "mAUC", "mAUC-bg", "dice", "mIoU", "params"
        );
        for r in &self.rows {
            s += &format!(
                "{:<9} {:>6.2} {:>8.2} {:>6.2} {:>6.2} {:>8}\n",
                r.variant.name(),
                100.0 * r.mauc,
                100.0 * r.mauc_all,
                100.0 * r.dice,
                100.0 * r.miou,
                r.params
            );
        }
        s
    }
}

fn samples(src: &[ShapeSample]) -> Vec<Sample<f32>> {
    src.iter()
        .map(|s| Sample {
            image: s.image.clone(),
            mask: s.mask.clone(),
        })
        .collect()
}

fn images(data: &[Sample<f32>]) -> Vec<&Tensor<f32>> {
    data.iter().map(|s| &s.image).collect()
}

/// Class-averaged dice and mIoU of eval-mode predictions.
pub fn evaluate(
    g: &ModelGraph,
    params: &ParamStore<f32>,
    data: &[Sample<f32>],
    classes: usize,
) -> acs_core::Result<(f64, f64)> {
    let mut pred = Vec::with_capacity(data.len());
    for s in data {
        let logits = predict(g, params, &[&s.image])?.remove(0);
        pred.push(logits.map(|z| if z > 0.0 { 1.0 } else { 0.0 }));
    }
    let pred = concat(&pred)?;
    let target = one_hot(&data.iter().map(|s| &s.mask).collect::<Vec<_>>(), classes)?;
    Ok((dice_global(&pred, &target)?, miou(&pred, &target)?))
}

fn concat(parts: &[Tensor<f32>]) -> acs_core::Result<Tensor<f32>> {
    let mut shape = parts[0].shape().to_vec();
    shape[0] = parts.iter().map(|p| p.shape()[0]).sum();
    Tensor::new(
        shape,
        parts
            .iter()
            .flat_map(|p| p.data().iter().copied())
            .collect(),
    )
}

/// Eval-mode activations of `node` for every sample, stacked on the batch
/// axis, probed against the masks with each choice of negatives.
pub fn probe(
    g: &ModelGraph,
    params: &ParamStore<f32>,
    node: &str,
    data: &[Sample<f32>],
    classes: usize,
    negatives: &[Negatives],
) -> acs_core::Result<Vec<f64>> {
    let mut feats = Vec::with_capacity(data.len());
    for s in data {
        let x = stack(&[&s.image])?;
        let fw = forward(g, params, &x, NormMode::Eval)?;
        let v = fw
            .value(node)
            .ok_or_else(|| acs_core::Error::InvalidGraph(format!("no node `{node}` to probe")))?;
        feats.push(v.clone());
    }
    let feats = concat(&feats)?;
    let masks = stack(&data.iter().map(|s| &s.mask).collect::<Vec<_>>())?;
    negatives
        .iter()
        .map(|&n| Ok(feature_mauc_with(&feats, &masks, classes, n)?.mauc))
        .collect()
}

fn adam(lr: f64) -> Optimizer {
    Optimizer::Adam(AdamConfig {
        lr,
        ..AdamConfig::default()
    })
}

/// Trains the 2D network; returns its held-out dice, weights and history.
pub fn pretrain(
    cfg: &PocConfig,
    log: &mut dyn FnMut(&str),
) -> acs_core::Result<(f64, WeightStore, String)> {
    let opts = GenOptions::default();
    let t0 = Instant::now();
    let g2 = toy_unet(spec(cfg, CLASSES_2D))?;
    let train2d = samples(
        &(0..cfg.train2d as u64)
            .map(|i| sample2d(cfg.seed, i, &opts))
            .collect::<Vec<_>>(),
    );
    let eval2d: Vec<ShapeSample> = (cfg.train2d as u64..(cfg.train2d + cfg.eval2d) as u64)
        .map(|i| sample2d(cfg.seed, i, &opts))
        .collect();
    let mut p2 = init_params::<f32>(&g2, cfg.seed);
    let tc2 = TrainConfig {
        epochs: cfg.epochs2d,
        batch_size: cfg.batch2d,
        loss: LossKind::Dice,
        optimizer: adam(cfg.lr2d),
        decay: None,
        classes: CLASSES_2D,
        crop: None,
        seed: cfg.seed,
    };
    let h = train_loop(&g2, &mut p2, &train2d, &tc2, |r| {
        log(&format!(
            "2d epoch {:>3} loss {:.4} dice {:.4}",
            r.epoch, r.loss, r.dice
        ));
    })?;
    recalibrate_norm(&g2, &mut p2, &images(&train2d), cfg.batch2d)?;
    let (dice2d, _) = evaluate(&g2, &p2, &samples(&eval2d), CLASSES_2D)?;
    log(&format!(
        "2d held-out dice {dice2d:.4} ({:.0}s)",
        t0.elapsed().as_secs_f64()
    ));
    Ok((dice2d, p2.to_weights(), h.to_csv()))
}

const CLASSES_2D: usize = 2;
const CLASSES_3D: usize = 5;

fn spec(cfg: &PocConfig, classes: usize) -> UNetSpec {
    UNetSpec {
        in_channels: 1,
        classes,
        base: cfg.base,
        levels: cfg.levels,
    }
}

/// Probes and fine-tunes every configured variant starting from the 2D
/// weights `store2d`. Returns one row and one history per variant.
pub fn run_variants(
    cfg: &PocConfig,
    store2d: &WeightStore,
    log: &mut dyn FnMut(&str),
) -> acs_core::Result<Vec<(VariantResult, String)>> {
    let opts = GenOptions::default();
    let seed3d = cfg.seed.wrapping_add(1);
    let t0 = Instant::now();
    let volumes = |range: std::ops::Range<usize>| -> Vec<Sample<f32>> {
        samples(
            &range
                .map(|i| sample3d(seed3d, i as u64, &opts))
                .collect::<Vec<_>>(),
        )
    };
    let (a, b, c) = (
        cfg.probe3d,
        cfg.probe3d + cfg.train3d,
        cfg.probe3d + cfg.train3d + cfg.test3d,
    );
    let (probe3d, train3d, test3d) = (volumes(0..a), volumes(a..b), volumes(b..c));

    // Same architecture with a 5-class head; the head is never transferred.
    let src3 = toy_unet(spec(cfg, CLASSES_3D))?;
    let scope = Scope::Prefixes(vec!["encoder.".into(), "decoder.".into()]);
    let mut out = Vec::new();
    for &v in &cfg.variants {
        let name = v.name();
        let g3 = convert_graph(
            &src3,
            &ConvertOptions::new(v.mode()).with_pool_depth(PoolDepth::Full),
        )?;
        let mut p3: ParamStore<f32> = if v.pretrained() {
            transfer_weights(store2d, &g3, &scope, cfg.seed)?.to_params()
        } else {
            init_params(&g3, cfg.seed)
        };
        let m = probe(
            &g3,
            &p3,
            &cfg.feature_node,
            &probe3d,
            CLASSES_3D,
            &[Negatives::OtherClasses, Negatives::Rest],
        )?;
        log(&format!(
            "{name} probe mAUC {:.4} / {:.4} ({:.0}s)",
            m[0],
            m[1],
            t0.elapsed().as_secs_f64()
        ));
        let tc3 = TrainConfig {
            epochs: cfg.epochs3d,
            batch_size: cfg.batch3d,
            loss: LossKind::Dice,
            optimizer: adam(cfg.lr3d),
            decay: None,
            classes: CLASSES_3D,
            crop: cfg.crop3d.map(|c| vec![c; 3]),
            seed: cfg.seed,
        };
        let h = train_loop(&g3, &mut p3, &train3d, &tc3, |r| {
            log(&format!(
                "{name} epoch {:>3} loss {:.4} dice {:.4}",
                r.epoch, r.loss, r.dice
            ));
        })?;
        recalibrate_norm(&g3, &mut p3, &images(&train3d), cfg.batch3d)?;
        let (dice, miou) = evaluate(&g3, &p3, &test3d, CLASSES_3D)?;
        log(&format!(
            "{name} test dice {dice:.4} miou {miou:.4} ({:.0}s)",
            t0.elapsed().as_secs_f64()
        ));
        out.push((
            VariantResult {
                variant: v,
                mauc: m[0],
                mauc_all: m[1],
                dice,
                miou,
                params: g3.param_count(),
            },
            h.to_csv(),
        ));
    }
    Ok(out)
}

pub fn run(cfg: &PocConfig, log: &mut dyn FnMut(&str)) -> acs_core::Result<PocReport> {
    let (dice2d, store2d, h2) = pretrain(cfg, log)?;
    let mut histories = vec![("pretrain_2d".to_string(), h2)];
    let mut rows = Vec::new();
    for (row, h) in run_variants(cfg, &store2d, log)? {
        histories.push((format!("finetune_{}", row.variant.name()), h));
        rows.push(row);
    }
    Ok(PocReport {
        dice2d,
        rows,
        histories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()), Some(v));
        }
    }

    #[test]
    fn quick_run_produces_every_row() {
        let mut cfg = PocConfig::quick();
        cfg.variants = vec![Variant::AcsPretrained, Variant::Conv3dRandom];
        let r = run(&cfg, &mut |_| {}).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.histories.len(), 3);
        assert!(r
            .rows
            .iter()
            .all(|row| (0.5..=1.0).contains(&row.mauc) && (0.5..=1.0).contains(&row.mauc_all)));
        assert!(r
            .to_csv()
            .starts_with("variant,mauc,mauc_all,dice,miou,params\nacs_p,"));
    }
}
