//! Depth-limited CART regression tree predicting growth from a plant vector.
//!
//! Splits are chosen by variance reduction over midpoints between
//! consecutive distinct feature values. Ties go to the lowest feature index,
//! then the lowest threshold, so training is reproducible bit for bit.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::TreeError;
use crate::plant::{Experiment, PlantVector, MAX_LEAVES, NUM_PLANTS};

pub const DEFAULT_MIN_SAMPLES_LEAF: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left, everything else right.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        n_samples: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    /// `None` when the evaluation labels have zero variance.
    pub r_squared: Option<f64>,
    pub mse: f64,
}

/// A trained tree. Nodes live in an arena with the root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthModel {
    nodes: Vec<Node>,
    max_depth: usize,
    experiment: Experiment,
    pub metrics: Option<ModelMetrics>,
}

/// Per-feature interval of a leaf box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub lo_open: bool,
    pub hi: f64,
    pub hi_open: bool,
}

impl Interval {
    pub const DOMAIN: Interval = Interval {
        lo: 0.0,
        lo_open: false,
        hi: MAX_LEAVES as f64,
        hi_open: false,
    };

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_open {
            x > self.lo
        } else {
            x >= self.lo
        };
        let below = if self.hi_open {
            x < self.hi
        } else {
            x <= self.hi
        };
        above && below
    }

    /// Smallest and largest integers inside the interval and inside [0, 6].
    pub fn integer_range(&self) -> Option<(i32, i32)> {
        let lo = if self.lo_open {
            self.lo.floor() as i32 + 1
        } else {
            self.lo.ceil() as i32
        }
        .max(0);
        let hi = if self.hi_open {
            self.hi.ceil() as i32 - 1
        } else {
            self.hi.floor() as i32
        }
        .min(MAX_LEAVES as i32);
        (lo <= hi).then_some((lo, hi))
    }
}

/// Axis-aligned region of inputs routed to one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafBox {
    pub bounds: [Interval; NUM_PLANTS],
    pub value: f64,
}

impl LeafBox {
    pub fn contains(&self, x: &[f64; NUM_PLANTS]) -> bool {
        self.bounds.iter().zip(x).all(|(b, &v)| b.contains(v))
    }
}

struct Builder<'a> {
    points: &'a [[f64; NUM_PLANTS]],
    labels: &'a [f64],
    max_depth: usize,
    min_samples_leaf: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let mean = idx.iter().map(|&i| self.labels[i]).sum::<f64>() / n as f64;
        let sse: f64 = idx.iter().map(|&i| (self.labels[i] - mean).powi(2)).sum();
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: mean,
            n_samples: n,
        });

        let pure = sse <= 1e-12 * n as f64;
        if depth >= self.max_depth || pure || n < 2 * self.min_samples_leaf {
            return at;
        }
        let Some(best) = self.best_split(idx, mean, sse) else {
            return at;
        };

        let mut cut = 0;
        for i in 0..n {
            if self.points[idx[i]][best.feature] <= best.threshold {
                idx.swap(i, cut);
                cut += 1;
            }
        }
        let (left_idx, right_idx) = idx.split_at_mut(cut);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        at
    }

    fn best_split(&self, idx: &[usize], mean: f64, sse: f64) -> Option<BestSplit> {
        let n = idx.len();
        let msl = self.min_samples_leaf.max(1);
        let tol = 1e-10 * (1.0 + sse);
        let mut best: Option<BestSplit> = None;
        let mut column: Vec<(f64, f64)> = Vec::with_capacity(n);
        for feature in 0..NUM_PLANTS {
            column.clear();
            column.extend(
                idx.iter()
                    .map(|&i| (self.points[i][feature], self.labels[i] - mean)),
            );
            column.sort_by(|a, b| a.0.total_cmp(&b.0));

            let total: f64 = column.iter().map(|c| c.1).sum();
            let total_sq: f64 = column.iter().map(|c| c.1 * c.1).sum();
            let mut sum_l = 0.0;
            let mut sq_l = 0.0;
            for i in 0..n - 1 {
                sum_l += column[i].1;
                sq_l += column[i].1 * column[i].1;
                let n_l = i + 1;
                let n_r = n - n_l;
                if column[i].0 == column[i + 1].0 || n_l < msl || n_r < msl {
                    continue;
                }
                let sum_r = total - sum_l;
                let sse_l = sq_l - sum_l * sum_l / n_l as f64;
                let sse_r = (total_sq - sq_l) - sum_r * sum_r / n_r as f64;
                let gain = sse - (sse_l + sse_r);
                let better = match &best {
                    None => gain > tol,
                    Some(b) => gain > b.gain + tol,
                };
                if better {
                    best = Some(BestSplit {
                        feature,
                        threshold: 0.5 * (column[i].0 + column[i + 1].0),
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Fit a regression tree on `train`.
pub fn fit_tree(
    train: &Dataset,
    max_depth: usize,
    min_samples_leaf: usize,
) -> Result<GrowthModel, TreeError> {
    if train.samples.is_empty() {
        return Err(TreeError::EmptyTrainingSet);
    }
    if max_depth == 0 {
        return Err(TreeError::ZeroDepth);
    }
    let points: Vec<[f64; NUM_PLANTS]> = train.samples.iter().map(|s| s.point).collect();
    let labels: Vec<f64> = train.samples.iter().map(|s| s.growth).collect();
    let mut builder = Builder {
        points: &points,
        labels: &labels,
        max_depth,
        min_samples_leaf,
        nodes: Vec::new(),
    };
    let mut idx: Vec<usize> = (0..points.len()).collect();
    builder.grow(&mut idx, 0);
    Ok(GrowthModel {
        nodes: builder.nodes,
        max_depth,
        experiment: train.experiment,
        metrics: None,
    })
}

impl GrowthModel {
    /// A model with a single leaf; mostly useful in tests.
    pub fn constant(value: f64, experiment: Experiment) -> Self {
        GrowthModel {
            nodes: vec![Node::Leaf {
                value,
                n_samples: 0,
            }],
            max_depth: 1,
            experiment,
            metrics: None,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn experiment(&self) -> Experiment {
        self.experiment
    }

    pub fn predict(&self, x: &[f64; NUM_PLANTS]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict_plants(&self, p: &PlantVector) -> f64 {
        self.predict(&p.to_point())
    }

    /// Longest root-to-leaf path, counted in splits.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn max_leaf_value(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { value, .. } => Some(*value),
                _ => None,
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn evaluate(&self, test: &Dataset) -> Result<ModelMetrics, TreeError> {
        if test.samples.is_empty() {
            return Err(TreeError::EmptyTestSet);
        }
        let n = test.samples.len() as f64;
        let mean = test.samples.iter().map(|s| s.growth).sum::<f64>() / n;
        let mut sse = 0.0;
        let mut sst = 0.0;
        for s in &test.samples {
            sse += (self.predict(&s.point) - s.growth).powi(2);
            sst += (s.growth - mean).powi(2);
        }
        let r_squared = (sst > 1e-12 * n).then(|| 1.0 - sse / sst);
        Ok(ModelMetrics {
            r_squared,
            mse: sse / n,
        })
    }

    /// One box per leaf; together the boxes partition [0, 6]^5.
    pub fn enumerate_leaves(&self) -> Vec<LeafBox> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, [Interval::DOMAIN; NUM_PLANTS])];
        while let Some((at, bounds)) = stack.pop() {
            match self.nodes[at] {
                Node::Leaf { value, .. } => out.push(LeafBox { bounds, value }),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let mut lb = bounds;
                    let mut rb = bounds;
                    if threshold < lb[feature].hi
                        || (threshold == lb[feature].hi && !lb[feature].hi_open)
                    {
                        lb[feature].hi = threshold;
                        lb[feature].hi_open = false;
                    }
                    if threshold >= rb[feature].lo {
                        rb[feature].lo = threshold;
                        rb[feature].lo_open = true;
                    }
                    stack.push((right, rb));
                    stack.push((left, lb));
                }
            }
        }
        out
    }

    pub fn to_document(&self) -> TreeDocument {
        TreeDocument {
            max_depth: self.max_depth,
            experiment: self.experiment,
            nodes: self
                .nodes
                .iter()
                .map(|n| match *n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => NodeDocument {
                        kind: NodeKind::Split,
                        feature: Some(feature),
                        threshold: Some(threshold),
                        left: Some(left),
                        right: Some(right),
                        value: None,
                        n: None,
                    },
                    Node::Leaf { value, n_samples } => NodeDocument {
                        kind: NodeKind::Leaf,
                        feature: None,
                        threshold: None,
                        left: None,
                        right: None,
                        value: Some(value),
                        n: Some(n_samples),
                    },
                })
                .collect(),
            metrics: self.metrics,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("tree document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        if text.trim().is_empty() {
            return Err(TreeError::Malformed("empty document".into()));
        }
        let doc: TreeDocument = serde_json::from_str(text)?;
        GrowthModel::try_from(doc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Split,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDocument {
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

/// Portable on-disk form of a [`GrowthModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub max_depth: usize,
    pub experiment: Experiment,
    pub nodes: Vec<NodeDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ModelMetrics>,
}

impl TryFrom<TreeDocument> for GrowthModel {
    type Error = TreeError;

    fn try_from(doc: TreeDocument) -> Result<Self, Self::Error> {
        let bad = |msg: String| TreeError::Malformed(msg);
        if doc.nodes.is_empty() {
            return Err(bad("no nodes".into()));
        }
        if doc.max_depth == 0 {
            return Err(bad("max_depth must be at least 1".into()));
        }
        let len = doc.nodes.len();
        let mut nodes = Vec::with_capacity(len);
        for (i, nd) in doc.nodes.iter().enumerate() {
            let node = match nd.kind {
                NodeKind::Leaf => {
                    let value = nd
                        .value
                        .ok_or_else(|| bad(format!("leaf {i} has no value")))?;
                    if !value.is_finite() {
                        return Err(bad(format!("leaf {i} value is not finite")));
                    }
                    Node::Leaf {
                        value,
                        n_samples: nd.n.unwrap_or(0),
                    }
                }
                NodeKind::Split => {
                    let field = |v: Option<usize>, name: &str| {
                        v.ok_or_else(|| bad(format!("split {i} has no {name}")))
                    };
                    let feature = field(nd.feature, "feature")?;
                    let left = field(nd.left, "left")?;
                    let right = field(nd.right, "right")?;
                    let threshold = nd
                        .threshold
                        .filter(|t| t.is_finite())
                        .ok_or_else(|| bad(format!("split {i} has no finite threshold")))?;
                    if feature >= NUM_PLANTS {
                        return Err(bad(format!("split {i} feature {feature} out of range")));
                    }
                    for child in [left, right] {
                        if child >= len {
                            return Err(bad(format!(
                                "split {i} child index {child} out of range (nodes: {len})"
                            )));
                        }
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    }
                }
            };
            nodes.push(node);
        }

        // Every node must be reached exactly once from the root.
        let mut seen = vec![false; len];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, depth)) = stack.pop() {
            if seen[at] {
                return Err(bad(format!("node {at} is referenced more than once")));
            }
            seen[at] = true;
            if let Node::Split { left, right, .. } = nodes[at] {
                if depth + 1 > doc.max_depth {
                    return Err(bad(format!("tree deeper than max_depth {}", doc.max_depth)));
                }
                stack.push((left, depth + 1));
                stack.push((right, depth + 1));
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(bad(format!("node {orphan} is unreachable from the root")));
        }

        Ok(GrowthModel {
            nodes,
            max_depth: doc.max_depth,
            experiment: doc.experiment,
            metrics: doc.metrics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_grid, GrowthSample, Provenance};

    fn dataset(samples: Vec<GrowthSample>) -> Dataset {
        Dataset {
            samples,
            experiment: Experiment::Exp1,
            provenance: Provenance::Train,
        }
    }

    fn split_model(feature: usize, threshold: f64, lo: f64, hi: f64) -> GrowthModel {
        GrowthModel {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                Node::Leaf {
                    value: lo,
                    n_samples: 1,
                },
                Node::Leaf {
                    value: hi,
                    n_samples: 1,
                },
            ],
            max_depth: 1,
            experiment: Experiment::Exp1,
            metrics: None,
        }
    }

    #[test]
    fn single_sample_is_a_leaf() {
        let ds = dataset(vec![GrowthSample {
            point: [1.0; 5],
            growth: 1.36,
        }]);
        let m = fit_tree(&ds, 7, 5).unwrap();
        assert_eq!(m.nodes().len(), 1);
        assert_eq!(m.predict(&[4.0; 5]), 1.36);
    }

    #[test]
    fn empty_and_zero_depth_are_errors() {
        assert!(matches!(
            fit_tree(&dataset(vec![]), 3, 5),
            Err(TreeError::EmptyTrainingSet)
        ));
        let ds = dataset(vec![GrowthSample {
            point: [1.0; 5],
            growth: 1.36,
        }]);
        assert!(matches!(fit_tree(&ds, 0, 5), Err(TreeError::ZeroDepth)));
    }

    #[test]
    fn pure_grid_is_fit_exactly() {
        let grid = generate_grid(Experiment::Exp2, 1).unwrap();
        let m = fit_tree(&grid, 12, DEFAULT_MIN_SAMPLES_LEAF).unwrap();
        assert!(m.depth() <= 12);
        let metrics = m.evaluate(&grid).unwrap();
        assert!(metrics.mse < 1e-20, "mse {}", metrics.mse);
        for p in PlantVector::grid() {
            let truth = crate::data::growth_truth(Experiment::Exp2, &p);
            assert!((m.predict_plants(&p) - truth).abs() < 1e-9);
        }
    }

    #[test]
    fn deeper_trees_never_fit_worse() {
        let grid = generate_grid(Experiment::Exp1, 1).unwrap();
        let mut last = f64::INFINITY;
        for depth in 1..=8 {
            let mse = fit_tree(&grid, depth, 5)
                .unwrap()
                .evaluate(&grid)
                .unwrap()
                .mse;
            assert!(mse <= last + 1e-15, "depth {depth}: {mse} > {last}");
            last = mse;
        }
    }

    #[test]
    fn evaluate_edge_cases() {
        let ds = dataset(vec![
            GrowthSample {
                point: [0.0; 5],
                growth: 0.1,
            },
            GrowthSample {
                point: [6.0; 5],
                growth: 1.9,
            },
        ]);
        let perfect = split_model(0, 3.0, 0.1, 1.9);
        let m = perfect.evaluate(&ds).unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.r_squared, Some(1.0));
        let constant = GrowthModel::constant(1.0, Experiment::Exp1);
        assert!(constant.evaluate(&ds).unwrap().r_squared.unwrap().abs() < 1e-12);
        let flat = dataset(vec![
            GrowthSample {
                point: [0.0; 5],
                growth: 0.1
            };
            3
        ]);
        assert_eq!(constant.evaluate(&flat).unwrap().r_squared, None);
        assert!(matches!(
            constant.evaluate(&dataset(vec![])),
            Err(TreeError::EmptyTestSet)
        ));
    }

    #[test]
    fn leaf_boxes_of_simple_models() {
        let leaf = GrowthModel::constant(0.7, Experiment::Exp2);
        let boxes = leaf.enumerate_leaves();
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].bounds, [Interval::DOMAIN; 5]);
        assert_eq!(leaf.predict(&[2.0, 5.0, 1.0, 0.0, 3.0]), 0.7);

        let m = split_model(0, 3.5, 0.1, 1.9);
        let boxes = m.enumerate_leaves();
        assert_eq!(boxes.len(), 2);
        assert_eq!(
            boxes[0].bounds[0],
            Interval {
                lo: 0.0,
                lo_open: false,
                hi: 3.5,
                hi_open: false
            }
        );
        assert_eq!(
            boxes[1].bounds[0],
            Interval {
                lo: 3.5,
                lo_open: true,
                hi: 6.0,
                hi_open: false
            }
        );
        assert_eq!(boxes[0].bounds[1..], [Interval::DOMAIN; 4]);
    }

    #[test]
    fn integer_ranges() {
        let open = Interval {
            lo: 3.5,
            lo_open: true,
            hi: 6.0,
            hi_open: false,
        };
        assert_eq!(open.integer_range(), Some((4, 6)));
        let none = Interval {
            lo: 3.2,
            lo_open: true,
            hi: 3.8,
            hi_open: true,
        };
        assert_eq!(none.integer_range(), None);
        let edge = Interval {
            lo: 2.0,
            lo_open: true,
            hi: 4.0,
            hi_open: true,
        };
        assert_eq!(edge.integer_range(), Some((3, 3)));
    }

    #[test]
    fn boxes_partition_the_grid() {
        let grid = generate_grid(Experiment::Exp1, 1).unwrap();
        let m = fit_tree(&grid, 7, 5).unwrap();
        let boxes = m.enumerate_leaves();
        for p in PlantVector::grid() {
            let x = p.to_point();
            let hits: Vec<&LeafBox> = boxes.iter().filter(|b| b.contains(&x)).collect();
            assert_eq!(hits.len(), 1, "{p} in {} boxes", hits.len());
            assert_eq!(hits[0].value, m.predict(&x));
        }
    }

    #[test]
    fn document_round_trip_and_errors() {
        let grid = generate_grid(Experiment::Exp1, 1).unwrap();
        let m = fit_tree(&grid, 5, 5).unwrap();
        let back = GrowthModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);

        assert!(matches!(
            GrowthModel::from_json(""),
            Err(TreeError::Malformed(_))
        ));
        let out_of_range = r#"{"max_depth":1,"experiment":1,"nodes":[
            {"kind":"split","feature":0,"threshold":3.5,"left":1,"right":7},
            {"kind":"leaf","value":0.1,"n":1}]}"#;
        let err = GrowthModel::from_json(out_of_range)
            .unwrap_err()
            .to_string();
        assert!(err.contains("out of range"), "{err}");
        let cyclic = r#"{"max_depth":3,"experiment":1,"nodes":[
            {"kind":"split","feature":0,"threshold":3.5,"left":1,"right":1},
            {"kind":"leaf","value":0.1,"n":1}]}"#;
        assert!(GrowthModel::from_json(cyclic).is_err());
        assert!(GrowthModel::from_json("{not json").is_err());
    }
}
