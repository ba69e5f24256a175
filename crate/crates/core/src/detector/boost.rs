//! Discrete AdaBoost over depth-1/2 threshold trees, with a soft cascade.
//!
//! Every round grows one tree by exhaustive search: the root takes the
//! `(feature, threshold)` split with the lowest weighted error, then each
//! impure child takes its own best split if that lowers its error. Leaves
//! vote `+1` or `-1` by weighted majority. Candidate thresholds are midpoints
//! between consecutive distinct values; ties go to the lowest feature index,
//! then the lowest threshold.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::format::{self, FormatError};

pub const CLASSIFIER_HEADER: &str = "#monofcw-clf v1";

/// Errors closer than this are treated as equal during split selection.
pub const ERROR_TIE_EPS: f64 = 1e-12;
/// Floor on a learner's weighted error when computing its vote weight.
const MIN_ERROR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training needs samples of both classes")]
    EmptyClass,
    #[error("samples have inconsistent feature counts ({0} vs {1})")]
    FeatureMismatch(usize, usize),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("the first weak learner is no better than chance")]
    NoWeakLearner,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

/// A threshold tree; samples with `x[feature] <= threshold` go left.
/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    #[inline]
    pub fn eval_with<F: FnMut(usize) -> f64>(&self, mut feature: F) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature: f,
                    threshold,
                    left,
                    right,
                } => i = if feature(f) <= threshold { left } else { right },
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_with(|f| x[f])
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf(_) => None,
        })
    }
}

/// Geometry of the feature grid a classifier was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowModel {
    /// Window size in pixels.
    pub w: u32,
    pub h: u32,
    pub shrink: u32,
    pub n_channels: usize,
}

impl WindowModel {
    pub fn grid_w(&self) -> usize {
        (self.w / self.shrink) as usize
    }

    pub fn grid_h(&self) -> usize {
        (self.h / self.shrink) as usize
    }

    pub fn n_features(&self) -> usize {
        self.grid_w() * self.grid_h() * self.n_channels
    }

    /// `(channel, cell_x, cell_y)` of a feature index.
    #[inline]
    pub fn decompose(&self, f: usize) -> (usize, usize, usize) {
        let per_plane = self.grid_w() * self.grid_h();
        let cell = f % per_plane;
        (f / per_plane, cell % self.grid_w(), cell / self.grid_w())
    }

    pub fn aspect(&self) -> f64 {
        self.w as f64 / self.h as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedClassifier {
    pub model: WindowModel,
    pub trees: Vec<Tree>,
    /// Vote weight of each tree; leaves hold `+1`/`-1`.
    pub weights: Vec<f64>,
    /// `cascade_thresholds[k]` bounds the score after `k + 1` trees.
    pub cascade_thresholds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    /// A learner classified the weighted set perfectly; further rounds would
    /// put all weight on nothing.
    PerfectLearner,
    /// The best learner had weighted error >= 0.5.
    NoImprovement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundInfo {
    /// Root split of this round's tree.
    pub feature: usize,
    pub threshold: f64,
    /// Weighted error of the whole tree.
    pub error: f64,
    pub alpha: f64,
    /// Ensemble misclassification rate after this round.
    pub training_error: f64,
    /// Product of `2 sqrt(e (1 - e))` so far, the AdaBoost training-error bound.
    pub error_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub classifier: BoostedClassifier,
    pub rounds: Vec<RoundInfo>,
    pub stop: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub rounds: usize,
    pub depth: u8,
    pub seed: u64,
    /// Keep at most this many negatives, sampled with `seed`.
    pub max_negatives: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 64,
            depth: 2,
            seed: 0,
            max_negatives: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub error: f64,
    pub left_label: f64,
    pub right_label: f64,
}

/// Threshold strictly between `a < b` such that `a <= t < b`.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + 0.5 * (b - a);
    if m >= b {
        a
    } else {
        m
    }
}

/// Weighted majority label and the weight it gets wrong. Ties vote `-1`.
#[inline]
fn leaf(pos: f64, neg: f64) -> (f64, f64) {
    if pos > neg {
        (1.0, neg)
    } else {
        (-1.0, pos)
    }
}

struct SplitSearch<'a> {
    /// `sorted[f]` lists sample indices by ascending feature `f`.
    sorted: &'a [Vec<u32>],
    values: &'a [Vec<f64>],
    labels: &'a [f64],
}

impl SplitSearch<'_> {
    /// Best split among samples with `member[i]`, or `None` if every feature
    /// is constant on them.
    fn best(&self, weights: &[f64], member: &[bool]) -> Option<Split> {
        let (mut tot_pos, mut tot_neg) = (0.0, 0.0);
        for (i, &m) in member.iter().enumerate() {
            if m {
                if self.labels[i] > 0.0 {
                    tot_pos += weights[i];
                } else {
                    tot_neg += weights[i];
                }
            }
        }
        let mut best: Option<Split> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let vals = &self.values[f];
            let (mut lp, mut ln) = (0.0, 0.0);
            let mut prev: Option<usize> = None;
            for &i in order {
                let i = i as usize;
                if !member[i] {
                    continue;
                }
                if let Some(p) = prev {
                    if vals[i] > vals[p] {
                        let (l_lab, l_err) = leaf(lp, ln);
                        let (r_lab, r_err) = leaf(tot_pos - lp, tot_neg - ln);
                        let err = l_err + r_err;
                        if best.is_none_or(|b| err < b.error - ERROR_TIE_EPS) {
                            best = Some(Split {
                                feature: f,
                                threshold: midpoint(vals[p], vals[i]),
                                error: err,
                                left_label: l_lab,
                                right_label: r_lab,
                            });
                        }
                    }
                }
                if self.labels[i] > 0.0 {
                    lp += weights[i];
                } else {
                    ln += weights[i];
                }
                prev = Some(i);
            }
        }
        best
    }
}

/// Grows one tree on the weighted samples; returns it with its weighted error.
fn grow_tree(search: &SplitSearch<'_>, weights: &[f64], depth: u8) -> Option<(Tree, f64)> {
    let n = weights.len();
    let all = vec![true; n];
    let root = search.best(weights, &all)?;
    if depth <= 1 {
        let tree = Tree {
            nodes: vec![
                Node::Split {
                    feature: root.feature,
                    threshold: root.threshold,
                    left: 1,
                    right: 2,
                },
                Node::Leaf(root.left_label),
                Node::Leaf(root.right_label),
            ],
        };
        return Some((tree, root.error));
    }

    let values = &search.values[root.feature];
    let mut nodes = vec![Node::Leaf(0.0)];
    let mut total_err = 0.0;
    let mut children = [0usize; 2];
    for (side, child_slot) in children.iter_mut().enumerate() {
        let member: Vec<bool> = (0..n)
            .map(|i| (values[i] <= root.threshold) == (side == 0))
            .collect();
        let (pos, neg) = (0..n).filter(|&i| member[i]).fold((0.0, 0.0), |(p, q), i| {
            if search.labels[i] > 0.0 {
                (p + weights[i], q)
            } else {
                (p, q + weights[i])
            }
        });
        let (label, leaf_err) = leaf(pos, neg);
        let split = if leaf_err > 0.0 {
            search.best(weights, &member).filter(|s| s.error < leaf_err - ERROR_TIE_EPS)
        } else {
            None
        };
        *child_slot = nodes.len();
        match split {
            Some(s) => {
                let base = nodes.len();
                nodes.push(Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: base + 1,
                    right: base + 2,
                });
                nodes.push(Node::Leaf(s.left_label));
                nodes.push(Node::Leaf(s.right_label));
                total_err += s.error;
            }
            None => {
                nodes.push(Node::Leaf(label));
                total_err += leaf_err;
            }
        }
    }
    nodes[0] = Node::Split {
        feature: root.feature,
        threshold: root.threshold,
        left: children[0],
        right: children[1],
    };
    Some((Tree { nodes }, total_err))
}

/// Trains on pre-extracted feature vectors. Every sample must have
/// `model.n_features()` entries.
pub fn train_features(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    model: WindowModel,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(TrainError::EmptyClass);
    }
    if !(1..=2).contains(&cfg.depth) {
        return Err(TrainError::InvalidConfig(format!("depth must be 1 or 2, got {}", cfg.depth)));
    }
    let n_features = model.n_features();
    for s in positives.iter().chain(negatives) {
        if s.len() != n_features {
            return Err(TrainError::FeatureMismatch(s.len(), n_features));
        }
    }

    let mut neg_refs: Vec<&Vec<f64>> = negatives.iter().collect();
    if let Some(cap) = cfg.max_negatives {
        if neg_refs.len() > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            neg_refs.shuffle(&mut rng);
            neg_refs.truncate(cap.max(1));
        }
    }
    let samples: Vec<&Vec<f64>> = positives.iter().chain(neg_refs.iter().copied()).collect();
    let labels: Vec<f64> = (0..samples.len())
        .map(|i| if i < positives.len() { 1.0 } else { -1.0 })
        .collect();
    let n = samples.len();

    let values: Vec<Vec<f64>> = (0..n_features)
        .map(|f| samples.iter().map(|s| s[f]).collect())
        .collect();
    let sorted: Vec<Vec<u32>> = values
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let search = SplitSearch {
        sorted: &sorted,
        values: &values,
        labels: &labels,
    };

    let mut weights = vec![1.0 / n as f64; n];
    let mut scores = vec![0.0; n];
    let mut trees = Vec::new();
    let mut alphas = Vec::new();
    let mut rounds = Vec::new();
    let mut bound = 1.0;
    let mut stop = StopReason::Completed;

    for _ in 0..cfg.rounds {
        let Some((tree, err)) = grow_tree(&search, &weights, cfg.depth) else {
            stop = StopReason::NoImprovement;
            break;
        };
        if err >= 0.5 - ERROR_TIE_EPS {
            stop = StopReason::NoImprovement;
            break;
        }
        let e = err.max(MIN_ERROR);
        let alpha = 0.5 * ((1.0 - e) / e).ln();
        bound *= 2.0 * (e * (1.0 - e)).sqrt();

        let mut sum = 0.0;
        let mut wrong = 0usize;
        for i in 0..n {
            let h = tree.eval(samples[i]);
            scores[i] += alpha * h;
            weights[i] *= (-alpha * labels[i] * h).exp();
            sum += weights[i];
            let predicted = if scores[i] > 0.0 { 1.0 } else { -1.0 };
            if predicted != labels[i] {
                wrong += 1;
            }
        }
        for w in &mut weights {
            *w /= sum;
        }
        let Node::Split { feature, threshold, .. } = tree.nodes[0] else {
            unreachable!("grown trees always split at the root")
        };
        rounds.push(RoundInfo {
            feature,
            threshold,
            error: err,
            alpha,
            training_error: wrong as f64 / n as f64,
            error_bound: bound,
        });
        trees.push(tree);
        alphas.push(alpha);
        if err <= MIN_ERROR {
            stop = StopReason::PerfectLearner;
            break;
        }
    }
    if trees.is_empty() {
        return Err(TrainError::NoWeakLearner);
    }

    // Scores live in [-1, 1] so that cascade margins have a fixed scale.
    let total: f64 = alphas.iter().sum();
    let mut classifier = BoostedClassifier {
        model,
        trees,
        weights: alphas.iter().map(|a| a / total).collect(),
        cascade_thresholds: Vec::new(),
    };
    classifier.calibrate_cascade(positives);
    Ok(TrainOutcome {
        classifier,
        rounds,
        stop,
    })
}

impl BoostedClassifier {
    /// Sets each prefix threshold to the lowest prefix score any of
    /// `positives` reaches, so none of them is pruned at zero margin.
    pub fn calibrate_cascade(&mut self, positives: &[Vec<f64>]) {
        let mut th = vec![f64::INFINITY; self.trees.len()];
        for x in positives {
            let mut s = 0.0;
            for (k, (tree, w)) in self.trees.iter().zip(&self.weights).enumerate() {
                s += w * tree.eval(x);
                th[k] = th[k].min(s);
            }
        }
        self.cascade_thresholds = th;
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * t.eval(x))
            .sum()
    }

    /// Scores with soft-cascade pruning; `None` once a prefix drops below
    /// `threshold - margin`. Summation order matches `score`.
    #[inline]
    pub fn score_cascade<F: FnMut(usize) -> f64>(&self, mut feature: F, margin: f64) -> Option<f64> {
        let mut s = 0.0;
        for ((tree, w), th) in self.trees.iter().zip(&self.weights).zip(&self.cascade_thresholds) {
            s += w * tree.eval_with(&mut feature);
            if s < th - margin {
                return None;
            }
        }
        Some(s)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.trees.len() != self.weights.len() || self.trees.len() != self.cascade_thresholds.len() {
            return Err("trees, weights and cascade thresholds differ in length".into());
        }
        if !self.weights.iter().all(|w| w.is_finite() && *w > 0.0) {
            return Err("tree weights must be positive and finite".into());
        }
        if self.cascade_thresholds.iter().any(|t| t.is_nan()) {
            return Err("cascade thresholds must not be NaN".into());
        }
        let nf = self.model.n_features();
        for (k, t) in self.trees.iter().enumerate() {
            if t.nodes.is_empty() {
                return Err(format!("tree {k} is empty"));
            }
            if let Some(f) = t.features().find(|&f| f >= nf) {
                return Err(format!("tree {k} uses feature {f} outside the {nf}-feature grid"));
            }
            for n in &t.nodes {
                if let Node::Split { left, right, threshold, .. } = n {
                    if *left >= t.nodes.len() || *right >= t.nodes.len() || !threshold.is_finite() {
                        return Err(format!("tree {k} has a malformed split"));
                    }
                }
            }
            if t.depth() > 2 {
                return Err(format!("tree {k} is deeper than 2"));
            }
        }
        Ok(())
    }

    /// Text dump: header, window model, one line per node
    /// (`tree node feature threshold left right leaf_value`, with `-1` for
    /// unused fields and leaf values pre-multiplied by the tree weight), then
    /// the cascade thresholds.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let _ = writeln!(out, "{CLASSIFIER_HEADER}");
        let _ = writeln!(out, "window {} {} {} {}", m.w, m.h, m.shrink, m.n_channels);
        for (t, (tree, w)) in self.trees.iter().zip(&self.weights).enumerate() {
            for (i, node) in tree.nodes.iter().enumerate() {
                match *node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        let _ = writeln!(out, "{t} {i} {feature} {} {left} {right} 0", format::real(threshold));
                    }
                    Node::Leaf(v) => {
                        let _ = writeln!(out, "{t} {i} -1 0 -1 -1 {}", format::real(w * v));
                    }
                }
            }
        }
        let _ = write!(out, "cascade");
        for th in &self.cascade_thresholds {
            let _ = write!(out, " {}", format::real(*th));
        }
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self, FormatError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, l)) if l == CLASSIFIER_HEADER => {}
            _ => return Err(FormatError::new(1, format!("expected header {CLASSIFIER_HEADER:?}"))),
        }
        let (line, window) = lines
            .next()
            .ok_or_else(|| FormatError::new(2, "missing window line"))?;
        let rest = window
            .strip_prefix("window")
            .ok_or_else(|| FormatError::new(line, "expected `window w h shrink channels`"))?;
        let [w, h, shrink, nc] = format::fields::<4>(rest, line)?;
        let model = WindowModel {
            w: format::parse_field(w, line, "window width")?,
            h: format::parse_field(h, line, "window height")?,
            shrink: format::parse_field(shrink, line, "shrink")?,
            n_channels: format::parse_field(nc, line, "channel count")?,
        };
        if model.shrink == 0 || model.grid_w() == 0 || model.grid_h() == 0 || model.n_channels == 0 {
            return Err(FormatError::new(line, "window model has an empty feature grid"));
        }

        let mut trees: Vec<Tree> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut cascade = None;
        let mut last_line = line;
        for (line, content) in lines {
            last_line = line;
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix("cascade") {
                let th: Result<Vec<f64>, _> = rest
                    .split_whitespace()
                    .map(|t| format::parse_field::<f64>(t, line, "cascade threshold"))
                    .collect();
                cascade = Some(th?);
                continue;
            }
            if cascade.is_some() {
                return Err(FormatError::new(line, "node line after cascade thresholds"));
            }
            let [t, i, f, th, l, r, v] = format::fields::<7>(content, line)?;
            let t: usize = format::parse_field(t, line, "tree index")?;
            let i: usize = format::parse_field(i, line, "node index")?;
            let f: i64 = format::parse_field(f, line, "feature index")?;
            let th = format::parse_finite(th, line, "threshold")?;
            let l: i64 = format::parse_field(l, line, "left child")?;
            let r: i64 = format::parse_field(r, line, "right child")?;
            let v = format::parse_finite(v, line, "leaf value")?;
            if t != trees.len() && t + 1 != trees.len() {
                return Err(FormatError::new(line, "tree indices must be contiguous"));
            }
            if t == trees.len() {
                trees.push(Tree { nodes: Vec::new() });
                weights.push(0.0);
            }
            let tree = &mut trees[t];
            if i != tree.nodes.len() {
                return Err(FormatError::new(line, "node indices must be contiguous"));
            }
            let node = if f < 0 {
                if v == 0.0 {
                    return Err(FormatError::new(line, "leaf value must be non-zero"));
                }
                let wgt = v.abs();
                if weights[t] == 0.0 {
                    weights[t] = wgt;
                } else if weights[t] != wgt {
                    return Err(FormatError::new(line, "leaves of one tree must share a magnitude"));
                }
                Node::Leaf(v.signum())
            } else {
                if l < 0 || r < 0 {
                    return Err(FormatError::new(line, "split node needs two children"));
                }
                Node::Split {
                    feature: f as usize,
                    threshold: th,
                    left: l as usize,
                    right: r as usize,
                }
            };
            tree.nodes.push(node);
        }
        let cascade_thresholds =
            cascade.ok_or_else(|| FormatError::new(last_line, "missing cascade line"))?;
        let clf = BoostedClassifier {
            model,
            trees,
            weights,
            cascade_thresholds,
        };
        clf.validate().map_err(|m| FormatError::new(last_line, m))?;
        Ok(clf)
    }
}
