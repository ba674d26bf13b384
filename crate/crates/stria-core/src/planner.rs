//! Network-level planning and whole-network cost reports.
//!
//! Two rules drive the plans. The rotation bill of a layer is governed by a
//! single dimension — `min(k_w k_h c_i, c_o)` decides which — so a plan
//! constrains only that dimension and lets the other grow (the focused
//! constraint). And because the packing capacity `c_n` rises with depth
//! while the rotation coefficient's sensitivity to the expansion factor
//! falls as `4/c_n`, the expansion factor of each stage is scheduled
//! against its capacity: a stage may expand until `2^e` exceeds
//! `budget * c_n`. With the default budget of 2 the capacity ladder
//! 2/8/32/128 yields e = 2/4/6/8.

use serde::{Deserialize, Serialize};

use crate::cost::{
    add_count, estimate_time, flops, mult_count, rot_counts, striablock_layers, CalibrationTable,
    CostReport, LayerCost, LayerSpec, OpCounts,
};
use crate::error::{Error, Result};
use crate::mimo::MimoScheme;
use crate::packing::channel_capacity;

/// Which channel dimension governs a layer's ex-Rot bill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotBound {
    InputChannelBound,
    OutputChannelBound,
}

/// Per-layer dominance diagnosis: the governing dimension of the ex-Rot
/// cost and the value of the governing expression `min(k_w k_h c_i, c_o)`.
/// The in-Rot cost always follows `c_i`, independent of `c_o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceDiagnosis {
    pub ex_rot_bound: RotBound,
    pub governing_value: u64,
}

pub fn dominant_factor(layer: &LayerSpec) -> DominanceDiagnosis {
    let input_side = (layer.k_w * layer.k_h * layer.c_i) as u64;
    let output_side = layer.c_o as u64;
    if output_side <= input_side {
        DominanceDiagnosis {
            ex_rot_bound: RotBound::OutputChannelBound,
            governing_value: output_side,
        }
    } else {
        DominanceDiagnosis {
            ex_rot_bound: RotBound::InputChannelBound,
            governing_value: input_side,
        }
    }
}

/// One stage of a plan before expansion factors are resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    /// Square spatial size of the stage's feature maps.
    pub hw: usize,
    /// Base channel dimension of the stage's blocks.
    pub d: usize,
    /// Block count.
    pub blocks: usize,
    /// Expansion factor; `None` lets the capacity-aware schedule choose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<usize>,
}

/// A resolved stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub hw: usize,
    pub d: usize,
    pub blocks: usize,
    pub e: usize,
    pub c_n: usize,
}

/// A fully resolved network plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub slots: usize,
    pub stages: Vec<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<LayerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<LayerSpec>,
}

/// Bounds and budget for the capacity-aware expansion schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub e_min: usize,
    pub e_max: usize,
    /// A stage may expand while `2^e <= budget_coef * c_n`.
    pub budget_coef: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            e_min: 2,
            e_max: 8,
            budget_coef: 2.0,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if self.e_min == 0 || self.e_min > self.e_max {
            return Err(Error::Config(format!(
                "need 1 <= e_min <= e_max, got {}..{}",
                self.e_min, self.e_max
            )));
        }
        if !self.budget_coef.is_finite() || self.budget_coef <= 0.0 {
            return Err(Error::Config("budget coefficient must be positive".into()));
        }
        Ok(())
    }

    fn fits(&self, e: usize, c_n: usize) -> bool {
        (2u64 << (e - 1)) as f64 <= self.budget_coef * c_n as f64
    }
}

/// Choose the expansion factor per stage: the largest `e` within bounds
/// whose capacity budget holds at that stage's `c_n`. Depends on depth only
/// through `c_n`, so the schedule is non-decreasing whenever the capacity
/// ladder is.
pub fn cpas_schedule(
    stages: &[(usize, usize)],
    slots: usize,
    params: &ScheduleParams,
) -> Result<Vec<usize>> {
    params.validate()?;
    let mut out = Vec::with_capacity(stages.len());
    for (idx, &(hw, _d)) in stages.iter().enumerate() {
        let c_n = channel_capacity(slots, hw, hw);
        let e = (params.e_min..=params.e_max)
            .rev()
            .find(|&e| params.fits(e, c_n))
            .ok_or_else(|| Error::InfeasibleStage {
                stage: idx,
                detail: format!(
                    "no e in [{}, {}] satisfies 2^e <= {} * c_n at c_n = {c_n}",
                    params.e_min, params.e_max, params.budget_coef
                ),
            })?;
        out.push(e);
    }
    Ok(out)
}

/// Resolve a plan: derive each stage's capacity from the packing rules,
/// fill missing expansion factors from the schedule and validate every
/// block against its mask.
pub fn plan_network(
    input: usize,
    slots: usize,
    stages: &[StagePlan],
    params: &ScheduleParams,
    stem: Option<LayerSpec>,
    head: Option<LayerSpec>,
) -> Result<NetworkSpec> {
    params.validate()?;
    let mut prev_hw = usize::MAX;
    let mut resolved = Vec::with_capacity(stages.len());
    for (idx, stage) in stages.iter().enumerate() {
        if stage.hw == 0 || stage.hw > prev_hw {
            return Err(Error::Config(format!(
                "stage {idx} spatial size {} must be positive and non-increasing",
                stage.hw
            )));
        }
        prev_hw = stage.hw;
        let c_n = channel_capacity(slots, stage.hw, stage.hw);
        let e = match stage.e {
            Some(e) => e,
            None => cpas_schedule(&[(stage.hw, stage.d)], slots, params)?[0],
        };
        if e * stage.d < c_n {
            return Err(Error::InfeasibleStage {
                stage: idx,
                detail: format!("inner width {} below capacity {c_n}", e * stage.d),
            });
        }
        resolved.push(Stage {
            hw: stage.hw,
            d: stage.d,
            blocks: stage.blocks,
            e,
            c_n,
        });
    }
    Ok(NetworkSpec {
        input,
        slots,
        stages: resolved,
        stem,
        head,
    })
}

fn layer_cost(
    name: String,
    layer: &LayerSpec,
    c_n: usize,
    calib: &CalibrationTable,
) -> LayerCost {
    let counts = rot_counts(layer, c_n);
    let ops = OpCounts {
        in_rot: counts.ledger_in(),
        ex_rot: counts.ledger_ex(),
        mult: mult_count(layer, c_n),
        add: add_count(layer, c_n),
    };
    let est = estimate_time(&ops, c_n, calib);
    let diagnosis = dominant_factor(layer);
    LayerCost {
        name,
        c_i: layer.c_i,
        c_o: layer.c_o,
        k_w: layer.k_w,
        k_h: layer.k_h,
        hw: layer.w,
        c_n,
        scheme: match counts.scheme {
            MimoScheme::OutputRotation => "output_rotation".into(),
            MimoScheme::InputRotation => "input_rotation".into(),
        },
        dominance: match diagnosis.ex_rot_bound {
            RotBound::InputChannelBound => "input_channel_bound".into(),
            RotBound::OutputChannelBound => "output_channel_bound".into(),
        },
        in_rot: ops.in_rot,
        ex_rot: ops.ex_rot,
        mult: ops.mult,
        add: ops.add,
        flops: flops(layer).exact,
        est_ms: est.ms,
        clamped: est.clamped,
    }
}

/// Per-layer and aggregate formula-based cost report for a plan. The stem
/// runs in the tiled regime at capacity 1 and is reported but kept apart
/// from block-level figures.
pub fn report(network: &NetworkSpec, calib: &CalibrationTable) -> Result<CostReport> {
    calib.validate()?;
    let mut layers = Vec::new();
    let mut warnings = Vec::new();
    if let Some(stem) = &network.stem {
        let cost = layer_cost("stem".into(), stem, 1, calib);
        if cost.clamped {
            warnings.push("stem capacity outside the calibration range; clamped".into());
        }
        layers.push(cost);
    }
    for (s, stage) in network.stages.iter().enumerate() {
        for b in 0..stage.blocks {
            let specs = striablock_layers(stage.d, stage.e, stage.hw);
            for (l, layer) in specs.iter().enumerate() {
                let name = format!("stage{}.block{}.{}", s + 1, b + 1, ["expand", "mid", "project"][l]);
                let cost = layer_cost(name, layer, stage.c_n, calib);
                if cost.clamped {
                    warnings.push(format!(
                        "stage{} capacity {} outside the calibration range; clamped",
                        s + 1,
                        stage.c_n
                    ));
                }
                layers.push(cost);
            }
            // identity skip: one Add per output ciphertext
            let skip_adds = stage.d.div_ceil(stage.c_n) as u64;
            let est = estimate_time(
                &OpCounts {
                    add: skip_adds,
                    ..OpCounts::default()
                },
                stage.c_n,
                calib,
            );
            layers.push(LayerCost {
                name: format!("stage{}.block{}.skip", s + 1, b + 1),
                c_i: stage.d,
                c_o: stage.d,
                k_w: 0,
                k_h: 0,
                hw: stage.hw,
                c_n: stage.c_n,
                scheme: "none".into(),
                dominance: "none".into(),
                in_rot: 0,
                ex_rot: 0,
                mult: 0,
                add: skip_adds,
                flops: 0,
                est_ms: est.ms,
                clamped: false,
            });
        }
    }
    if let Some(head) = &network.head {
        let c_n = channel_capacity(network.slots, head.w, head.h);
        layers.push(layer_cost("head".into(), head, c_n, calib));
    }
    warnings.dedup();
    Ok(CostReport::from_layers(layers, warnings))
}

/// Formula-based report for an imported plain layer list (no blocks).
pub fn report_layers(
    name_prefix: &str,
    layers: &[LayerSpec],
    slots: usize,
    calib: &CalibrationTable,
) -> Result<CostReport> {
    calib.validate()?;
    let rows = layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let c_n = channel_capacity(slots, layer.w, layer.h);
            layer_cost(format!("{name_prefix}.layer{}", i + 1), layer, c_n, calib)
        })
        .collect();
    Ok(CostReport::from_layers(rows, Vec::new()))
}

/// One contender in a network comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCost {
    pub name: String,
    pub flops: u64,
    pub est_ms: f64,
    pub in_rot: u64,
    pub ex_rot: u64,
    pub mult: u64,
}

impl NetworkCost {
    pub fn from_report(name: &str, report: &CostReport) -> Self {
        Self {
            name: name.to_string(),
            flops: report.total_flops,
            est_ms: report.total_est_ms,
            in_rot: report.total.in_rot,
            ex_rot: report.total.ex_rot,
            mult: report.total.mult,
        }
    }
}

/// A pair whose plaintext and packed-HE orderings disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reversal {
    pub cheaper_flops: String,
    pub cheaper_he: String,
}

/// Ranking of networks by FLOPs and by estimated HE time, with every
/// order-reversing pair flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub entries: Vec<NetworkCost>,
    pub flops_ranking: Vec<String>,
    pub he_ranking: Vec<String>,
    pub reversals: Vec<Reversal>,
}

pub fn compare_networks(entries: Vec<NetworkCost>) -> ComparisonTable {
    let mut by_flops: Vec<&NetworkCost> = entries.iter().collect();
    by_flops.sort_by(|a, b| a.flops.cmp(&b.flops).then(a.name.cmp(&b.name)));
    let mut by_he: Vec<&NetworkCost> = entries.iter().collect();
    by_he.sort_by(|a, b| a.est_ms.total_cmp(&b.est_ms).then(a.name.cmp(&b.name)));
    let mut reversals = Vec::new();
    for a in &entries {
        for b in &entries {
            if a.flops < b.flops && a.est_ms > b.est_ms {
                reversals.push(Reversal {
                    cheaper_flops: a.name.clone(),
                    cheaper_he: b.name.clone(),
                });
            }
        }
    }
    ComparisonTable {
        flops_ranking: by_flops.iter().map(|e| e.name.clone()).collect(),
        he_ranking: by_he.iter().map(|e| e.name.clone()).collect(),
        entries,
        reversals,
    }
}

/// A four-stage plan for 224x224 classification. Stage dims follow the
/// usual 56/28/14/7 resolution ladder; block counts per stage are
/// representative defaults.
pub fn imagenet_preset() -> Vec<StagePlan> {
    vec![
        StagePlan { hw: 56, d: 32, blocks: 2, e: None },
        StagePlan { hw: 28, d: 64, blocks: 3, e: None },
        StagePlan { hw: 14, d: 128, blocks: 4, e: None },
        StagePlan { hw: 7, d: 256, blocks: 2, e: None },
    ]
}

pub fn tiny_imagenet_preset() -> Vec<StagePlan> {
    vec![
        StagePlan { hw: 32, d: 24, blocks: 2, e: None },
        StagePlan { hw: 16, d: 48, blocks: 3, e: None },
        StagePlan { hw: 8, d: 96, blocks: 2, e: None },
    ]
}

pub fn cifar_preset() -> Vec<StagePlan> {
    vec![
        StagePlan { hw: 32, d: 16, blocks: 2, e: None },
        StagePlan { hw: 16, d: 32, blocks: 3, e: None },
        StagePlan { hw: 8, d: 64, blocks: 2, e: None },
    ]
}
