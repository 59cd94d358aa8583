//! Counterfactual search over a trained tree.
//!
//! The target set is every leaf whose value reaches the threshold. For each
//! target leaf the closest integer plant vector inside its box is found by
//! per-dimension clamping; the best candidate over all leaves wins. The
//! ordering is (smallest L1 distance, highest leaf value, lexicographically
//! smallest suggestion). [`brute_force_cfe`] applies the same contract by
//! scanning the whole grid and serves as the reference.

use serde::{Deserialize, Serialize};

use crate::plant::{PlantVector, NUM_PLANTS};
use crate::tree::{GrowthModel, LeafBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfeMode {
    /// Aim for the best leaf value minus `epsilon`.
    MaxTarget,
    /// Aim for the current prediction plus `delta_improve`.
    StrictImprove,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfeConfig {
    pub mode: CfeMode,
    pub epsilon: f64,
    pub delta_improve: f64,
}

impl Default for CfeConfig {
    fn default() -> Self {
        CfeConfig {
            mode: CfeMode::MaxTarget,
            epsilon: 0.05,
            delta_improve: 0.09,
        }
    }
}

impl CfeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon >= 0.0 && self.epsilon < 1.8) {
            return Err(format!("epsilon {} outside [0, 1.8)", self.epsilon));
        }
        if self.delta_improve.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(format!(
                "delta_improve {} must be positive",
                self.delta_improve
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub suggestion: PlantVector,
    pub predicted_growth: f64,
    /// L1 distance to `factual`, in leaves.
    pub distance: u32,
    pub factual: PlantVector,
}

/// Threshold and the leaves that reach it.
pub fn target_set(model: &GrowthModel, x: &PlantVector, config: &CfeConfig) -> (f64, Vec<LeafBox>) {
    let threshold = match config.mode {
        CfeMode::MaxTarget => model.max_leaf_value() - config.epsilon,
        CfeMode::StrictImprove => model.predict_plants(x) + config.delta_improve,
    };
    let leaves = model
        .enumerate_leaves()
        .into_iter()
        .filter(|b| b.value >= threshold)
        .collect();
    (threshold, leaves)
}

/// Nearest integer point of `leaf` (intersected with [0, 6]^5) to `x`.
pub fn closest_integer_point_in_box(x: &PlantVector, leaf: &LeafBox) -> Option<(PlantVector, u32)> {
    let leaves = x.leaves();
    let mut out = [0u8; NUM_PLANTS];
    for i in 0..NUM_PLANTS {
        let (lo, hi) = leaf.bounds[i].integer_range()?;
        out[i] = (leaves[i] as i32).clamp(lo, hi) as u8;
    }
    let p = PlantVector::new(out).expect("clamped into [0, 6]");
    Some((p, x.l1_distance(&p)))
}

fn already_optimal(
    model: &GrowthModel,
    x: &PlantVector,
    config: &CfeConfig,
    threshold: f64,
) -> bool {
    config.mode == CfeMode::MaxTarget && model.predict_plants(x) >= threshold
}

/// Candidate ordering: closer first, then higher value, then smaller vector.
fn better(a: (u32, f64, PlantVector), b: &(u32, f64, PlantVector)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && (a.1 > b.1 || (a.1 == b.1 && a.2 < b.2)))
}

/// Closest plant vector that reaches the target, or `None` when `x` is
/// already near-optimal or nothing reaches the target.
pub fn compute_cfe(
    model: &GrowthModel,
    x: &PlantVector,
    config: &CfeConfig,
) -> Option<Counterfactual> {
    let (threshold, leaves) = target_set(model, x, config);
    if already_optimal(model, x, config, threshold) {
        return None;
    }
    let mut best: Option<(u32, f64, PlantVector)> = None;
    for leaf in &leaves {
        if let Some((p, d)) = closest_integer_point_in_box(x, leaf) {
            let cand = (d, leaf.value, p);
            if best.as_ref().is_none_or(|b| better(cand, b)) {
                best = Some(cand);
            }
        }
    }
    best.map(|(distance, predicted_growth, suggestion)| Counterfactual {
        suggestion,
        predicted_growth,
        distance,
        factual: *x,
    })
}

/// Same contract as [`compute_cfe`], by exhaustive evaluation of the grid.
pub fn brute_force_cfe(
    model: &GrowthModel,
    x: &PlantVector,
    config: &CfeConfig,
) -> Option<Counterfactual> {
    let threshold = match config.mode {
        CfeMode::MaxTarget => model.max_leaf_value() - config.epsilon,
        CfeMode::StrictImprove => model.predict_plants(x) + config.delta_improve,
    };
    if already_optimal(model, x, config, threshold) {
        return None;
    }
    let mut best: Option<(u32, f64, PlantVector)> = None;
    for p in PlantVector::grid() {
        let value = model.predict_plants(&p);
        if value < threshold {
            continue;
        }
        let cand = (x.l1_distance(&p), value, p);
        if best.as_ref().is_none_or(|b| better(cand, b)) {
            best = Some(cand);
        }
    }
    best.map(|(distance, predicted_growth, suggestion)| Counterfactual {
        suggestion,
        predicted_growth,
        distance,
        factual: *x,
    })
}
