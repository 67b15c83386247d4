//! C4.5-style decision tree over the seven flow features.
//!
//! Binary splits on continuous features, chosen by gain ratio. Candidate
//! thresholds are midpoints between consecutive distinct values. Ties go to
//! the lowest feature index, then the lowest threshold, so a given training
//! set always yields the same tree. No post-pruning; `min_leaf_size` and
//! `min_gain_ratio` act as pre-pruning.

use std::fmt::Write as _;

use thiserror::Error;

use crate::error::ParseError;
use crate::flow::{ClassLabel, FeatureVector, NUM_FEATURES};

const NUM_CLASSES: usize = ClassLabel::COUNT;

/// Deepest tree accepted by the text parser.
pub const MAX_PARSE_DEPTH: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("split leaves one side empty")]
    UndefinedSplit,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("feature index {0} out of range 1..=7")]
    BadFeature(usize),
    #[error("invalid training parameters: {0}")]
    BadParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub min_leaf_size: usize,
    pub min_gain_ratio: f64,
    pub max_depth: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            min_leaf_size: 2,
            min_gain_ratio: 1e-6,
            max_depth: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        label: ClassLabel,
        counts: [u32; NUM_CLASSES],
    },
    /// Values `<= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub root: Node,
}

fn entropy(counts: &[u32; NUM_CLASSES]) -> f64 {
    let total: u32 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|c| **c > 0)
        .map(|c| {
            let p = *c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn class_counts<'a>(examples: impl Iterator<Item = &'a LabeledExample>) -> [u32; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for ex in examples {
        counts[ex.label.index()] += 1;
    }
    counts
}

/// Information gain and split information (bits) of a binary partition.
fn split_scores(left: &[u32; NUM_CLASSES], right: &[u32; NUM_CLASSES]) -> (f64, f64) {
    let nl: u32 = left.iter().sum();
    let nr: u32 = right.iter().sum();
    let n = (nl + nr) as f64;
    let mut parent = [0; NUM_CLASSES];
    for i in 0..NUM_CLASSES {
        parent[i] = left[i] + right[i];
    }
    let wl = nl as f64 / n;
    let wr = nr as f64 / n;
    let gain = entropy(&parent) - wl * entropy(left) - wr * entropy(right);
    let split_info = -wl * wl.log2() - wr * wr.log2();
    (gain.max(0.0), split_info)
}

fn check_feature(feature: usize) -> Result<(), ClassifierError> {
    if (1..=NUM_FEATURES).contains(&feature) {
        Ok(())
    } else {
        Err(ClassifierError::BadFeature(feature))
    }
}

/// Gain ratio of splitting `examples` at `feature <= threshold`.
pub fn gain_ratio(
    examples: &[LabeledExample],
    feature: usize,
    threshold: f64,
) -> Result<f64, ClassifierError> {
    check_feature(feature)?;
    let left = class_counts(
        examples
            .iter()
            .filter(|e| e.features.get(feature) <= threshold),
    );
    let right = class_counts(
        examples
            .iter()
            .filter(|e| e.features.get(feature) > threshold),
    );
    if left.iter().sum::<u32>() == 0 || right.iter().sum::<u32>() == 0 {
        return Err(ClassifierError::UndefinedSplit);
    }
    let (gain, split_info) = split_scores(&left, &right);
    Ok(gain / split_info)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain_ratio: f64,
}

/// Best gain-ratio split, or `None` when no admissible split exists.
pub fn best_split(examples: &[LabeledExample], params: &TrainParams) -> Option<Split> {
    let parent = class_counts(examples.iter());
    if parent.iter().filter(|c| **c > 0).count() <= 1 {
        return None;
    }
    let n = examples.len();
    let mut best: Option<Split> = None;
    let mut column: Vec<(f64, ClassLabel)> = Vec::with_capacity(n);
    for feature in 1..=NUM_FEATURES {
        column.clear();
        column.extend(examples.iter().map(|e| (e.features.get(feature), e.label)));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0u32; NUM_CLASSES];
        let mut right = parent;
        for i in 0..n - 1 {
            let (value, label) = column[i];
            left[label.index()] += 1;
            right[label.index()] -= 1;
            let next = column[i + 1].0;
            if next <= value {
                continue;
            }
            let n_left = i + 1;
            if n_left < params.min_leaf_size || n - n_left < params.min_leaf_size {
                continue;
            }
            let (gain, split_info) = split_scores(&left, &right);
            if gain < params.min_gain_ratio || split_info <= 0.0 {
                continue;
            }
            let ratio = gain / split_info;
            if best.is_none_or(|b| ratio > b.gain_ratio) {
                let mut threshold = value + (next - value) / 2.0;
                if !(threshold >= value && threshold < next) {
                    threshold = value;
                }
                best = Some(Split {
                    feature,
                    threshold,
                    gain_ratio: ratio,
                });
            }
        }
    }
    best
}

fn majority(counts: &[u32; NUM_CLASSES]) -> ClassLabel {
    let mut best = 0;
    for i in 1..NUM_CLASSES {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    ClassLabel::new(best as u8 + 1).expect("class index in range")
}

fn build(examples: &mut [LabeledExample], params: &TrainParams, depth: usize) -> Node {
    let counts = class_counts(examples.iter());
    let leaf = || Node::Leaf {
        label: majority(&counts),
        counts,
    };
    if depth >= params.max_depth || examples.len() < 2 * params.min_leaf_size {
        return leaf();
    }
    let Some(split) = best_split(examples, params) else {
        return leaf();
    };
    // Stable partition keeps the training order within each side.
    let (mut l, mut r): (Vec<_>, Vec<_>) = examples
        .iter()
        .partition(|e| e.features.get(split.feature) <= split.threshold);
    Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(build(&mut l, params, depth + 1)),
        right: Box::new(build(&mut r, params, depth + 1)),
    }
}

impl DecisionTree {
    pub fn train(
        examples: &[LabeledExample],
        params: &TrainParams,
    ) -> Result<DecisionTree, ClassifierError> {
        if examples.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        if params.min_leaf_size == 0 {
            return Err(ClassifierError::BadParams("min_leaf_size must be >= 1"));
        }
        if params.max_depth == 0 {
            return Err(ClassifierError::BadParams("max_depth must be >= 1"));
        }
        let mut owned = examples.to_vec();
        Ok(DecisionTree {
            root: build(&mut owned, params, 0),
        })
    }

    pub fn leaf(label: ClassLabel) -> DecisionTree {
        let mut counts = [0; NUM_CLASSES];
        counts[label.index()] = 1;
        DecisionTree {
            root: Node::Leaf { label, counts },
        }
    }

    pub fn predict(&self, fv: &FeatureVector) -> ClassLabel {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { label, .. } => return *label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if fv.get(*feature) <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn evaluate(&self, test: &[LabeledExample]) -> Result<f64, ClassifierError> {
        if test.is_empty() {
            return Err(ClassifierError::EmptyTestSet);
        }
        let hits = test
            .iter()
            .filter(|e| self.predict(&e.features) == e.label)
            .count();
        Ok(hits as f64 / test.len() as f64)
    }

    /// `matrix[actual][predicted]`, 0-based class indices.
    pub fn confusion(&self, test: &[LabeledExample]) -> [[u32; NUM_CLASSES]; NUM_CLASSES] {
        let mut m = [[0; NUM_CLASSES]; NUM_CLASSES];
        for e in test {
            m[e.label.index()][self.predict(&e.features).index()] += 1;
        }
        m
    }

    pub fn depth(&self) -> usize {
        fn go(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(left).max(go(right)),
            }
        }
        go(&self.root)
    }

    pub fn leaf_count(&self) -> usize {
        fn go(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => go(left) + go(right),
            }
        }
        go(&self.root)
    }

    /// Pre-order text form, one node per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            match node {
                Node::Leaf { label, counts } => {
                    let _ = write!(out, "L {label}");
                    for c in counts {
                        let _ = write!(out, " {c}");
                    }
                    out.push('\n');
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let _ = writeln!(out, "S {feature} {threshold:?}");
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<DecisionTree, ParseError> {
        enum Frame {
            Split {
                feature: usize,
                threshold: f64,
                left: Option<Node>,
            },
        }
        let mut stack: Vec<Frame> = Vec::new();
        let mut root: Option<Node> = None;
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if root.is_some() {
                return Err(ParseError::new(line_no, "trailing content after complete tree"));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let mut done = match fields.as_slice() {
                ["S", feature, threshold] => {
                    let feature: usize = feature
                        .parse()
                        .map_err(|_| ParseError::new(line_no, "invalid feature index"))?;
                    check_feature(feature).map_err(|e| ParseError::new(line_no, e.to_string()))?;
                    let threshold: f64 = threshold
                        .parse()
                        .map_err(|_| ParseError::new(line_no, "invalid threshold"))?;
                    if !threshold.is_finite() {
                        return Err(ParseError::new(line_no, "threshold must be finite"));
                    }
                    if stack.len() >= MAX_PARSE_DEPTH {
                        return Err(ParseError::new(line_no, "tree too deep"));
                    }
                    stack.push(Frame::Split {
                        feature,
                        threshold,
                        left: None,
                    });
                    continue;
                }
                ["L", label, counts @ ..] => {
                    let label = label
                        .parse::<u8>()
                        .ok()
                        .and_then(ClassLabel::new)
                        .ok_or_else(|| ParseError::new(line_no, "invalid class label"))?;
                    if counts.len() != NUM_CLASSES {
                        return Err(ParseError::new(
                            line_no,
                            format!("expected {NUM_CLASSES} class counts"),
                        ));
                    }
                    let mut parsed = [0u32; NUM_CLASSES];
                    for (slot, c) in parsed.iter_mut().zip(counts) {
                        *slot = c
                            .parse()
                            .map_err(|_| ParseError::new(line_no, "invalid class count"))?;
                    }
                    Node::Leaf {
                        label,
                        counts: parsed,
                    }
                }
                _ => return Err(ParseError::new(line_no, "expected `S <feature> <threshold>` or `L <label> <counts>`")),
            };
            // Attach the finished subtree, collapsing completed splits.
            loop {
                match stack.pop() {
                    None => {
                        root = Some(done);
                        break;
                    }
                    Some(Frame::Split {
                        feature,
                        threshold,
                        left: None,
                    }) => {
                        stack.push(Frame::Split {
                            feature,
                            threshold,
                            left: Some(done),
                        });
                        break;
                    }
                    Some(Frame::Split {
                        feature,
                        threshold,
                        left: Some(left),
                    }) => {
                        done = Node::Split {
                            feature,
                            threshold,
                            left: Box::new(left),
                            right: Box::new(done),
                        };
                    }
                }
            }
        }
        root.map(|root| DecisionTree { root })
            .ok_or_else(|| ParseError::new(last_line.max(1), "incomplete tree"))
    }
}
