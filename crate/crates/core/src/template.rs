//! Group template learning.
//!
//! Each group `c` gets a sparse symmetric template `G_c` minimizing
//!
//! ```text
//!   Σ_c Σ_{k∈I_c} α(c,k)·‖G_c − W_k‖_F² + λ1·Σ_c |G_c|_1
//!     + λ2·Σ_{c1≠c2} Σ_{i,j} hinge(G_c1(i,j), G_c2(i,j))
//! ```
//!
//! with adaptive weights `α(c,k) = ‖G_c − W_k‖_F^{-1/2}`. The fitter
//! alternates weight updates with exact blockwise template solves. Since the
//! weighted quadratic majorizes `(4/3)·‖G_c − W_k‖_F^{3/2}` at the current
//! point, the [`induced_objective`] never increases across outer iterations.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dims, Error, Result};
use crate::graph::{global_template, ConnectivityMatrix, GlobalTemplate};

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub matrix: ConnectivityMatrix,
    pub label: usize,
}

/// Subjects with group labels in `0..num_groups`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    subjects: Vec<Subject>,
    group_index_lists: Vec<Vec<usize>>,
    num_groups: usize,
    num_rois: usize,
}

impl LabeledDataset {
    /// Builds the dataset and its group index lists. Every group in
    /// `0..num_groups` must have at least one subject.
    pub fn new(subjects: Vec<Subject>, num_groups: usize) -> Result<Self> {
        let first = subjects
            .first()
            .ok_or_else(|| Error::InvalidDataset("no subjects".into()))?;
        let num_rois = first.matrix.num_rois();
        let mut lists = vec![Vec::new(); num_groups];
        for (k, s) in subjects.iter().enumerate() {
            if s.matrix.num_rois() != num_rois {
                return Err(Error::Subject {
                    id: s.id.clone(),
                    source: Box::new(Error::DimensionMismatch {
                        expected: num_rois,
                        found: s.matrix.num_rois(),
                    }),
                });
            }
            let list = lists.get_mut(s.label).ok_or_else(|| {
                Error::InvalidDataset(format!(
                    "subject {} has label {} but there are {} groups",
                    s.id, s.label, num_groups
                ))
            })?;
            list.push(k);
        }
        if let Some(c) = lists.iter().position(Vec::is_empty) {
            return Err(Error::InvalidDataset(format!("group {c} has no subjects")));
        }
        Ok(Self {
            subjects,
            group_index_lists: lists,
            num_groups,
            num_rois,
        })
    }

    /// Dataset restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let subjects = indices
            .iter()
            .map(|&k| {
                self.subjects.get(k).cloned().ok_or(Error::IndexOutOfRange {
                    index: k,
                    len: self.subjects.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subjects, self.num_groups)
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn group_index_lists(&self) -> &[Vec<usize>] {
        &self.group_index_lists
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn num_rois(&self) -> usize {
        self.num_rois
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s.label).collect()
    }
}

/// Orientation of the inter-group hinge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HingeDirection {
    /// `max(|a−b| − γ, 0)`: penalizes template gaps wider than the margin.
    Literal,
    /// `max(γ − |a−b|, 0)`: penalizes template gaps narrower than the margin.
    #[default]
    Separation,
}

impl fmt::Display for HingeDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HingeDirection::Literal => write!(f, "literal"),
            HingeDirection::Separation => write!(f, "separation"),
        }
    }
}

impl FromStr for HingeDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(HingeDirection::Literal),
            "separation" => Ok(HingeDirection::Separation),
            other => Err(Error::InvalidArgument(format!(
                "unknown hinge direction {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateHyperParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub hinge_direction: HingeDirection,
    pub epsilon: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TemplateHyperParams {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.005,
            gamma: 0.05,
            hinge_direction: HingeDirection::Separation,
            epsilon: 1e-8,
            max_iter: 50,
            tol: 1e-6,
        }
    }
}

impl TemplateHyperParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("gamma", self.gamma),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [("epsilon", self.epsilon), ("tol", self.tol)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Fitted templates plus fit metadata.
///
/// `objective_trace[0]` is the induced objective at initialization and
/// `objective_trace[t]` the value after outer iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub templates: Vec<Array2<f64>>,
    pub hyper: TemplateHyperParams,
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

impl TemplateSet {
    pub fn num_groups(&self) -> usize {
        self.templates.len()
    }

    pub fn num_rois(&self) -> usize {
        self.templates.first().map_or(0, Array2::nrows)
    }

    pub fn global(&self) -> Result<GlobalTemplate> {
        global_template(&self.templates)
    }

    /// SHA-256 over the template shapes and little-endian entry bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.templates.len() as u64).to_le_bytes());
        for t in &self.templates {
            h.update((t.nrows() as u64).to_le_bytes());
            for v in t.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Adaptive subject weights, `alpha[c][p]` belonging to subject
/// `group_index_lists[c][p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub alpha: Vec<Vec<f64>>,
}

impl WeightTable {
    /// The initialization weights `1/|I_c|`.
    pub fn uniform(data: &LabeledDataset) -> Self {
        let alpha = data
            .group_index_lists()
            .iter()
            .map(|list| vec![1.0 / list.len() as f64; list.len()])
            .collect();
        Self { alpha }
    }

    pub fn compute(templates: &[Array2<f64>], data: &LabeledDataset, epsilon: f64) -> Result<Self> {
        check_dims(data.num_groups(), templates.len())?;
        let alpha = data
            .group_index_lists()
            .iter()
            .zip(templates)
            .map(|(list, g)| {
                list.iter()
                    .map(|&k| adaptive_weight(g, &data.subjects()[k].matrix, epsilon))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { alpha })
    }

    /// Weight of subject `k` in group `c`, if `k` belongs to that group.
    pub fn get(&self, data: &LabeledDataset, c: usize, k: usize) -> Option<f64> {
        let pos = data
            .group_index_lists()
            .get(c)?
            .iter()
            .position(|&x| x == k)?;
        self.alpha.get(c)?.get(pos).copied()
    }
}

fn frobenius_distance(g: &Array2<f64>, w: &Array2<f64>) -> Result<f64> {
    check_dims(g.nrows(), w.nrows())?;
    check_dims(g.ncols(), w.ncols())?;
    Ok(g.iter()
        .zip(w.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// `1 / sqrt(max(‖g − w‖_F, epsilon))`.
pub fn adaptive_weight(g: &Array2<f64>, w: &ConnectivityMatrix, epsilon: f64) -> Result<f64> {
    let d = frobenius_distance(g, &w.weights)?;
    Ok(1.0 / d.max(epsilon).sqrt())
}

pub fn hinge_penalty(a: f64, b: f64, gamma: f64, direction: HingeDirection) -> f64 {
    let gap = (a - b).abs();
    match direction {
        HingeDirection::Literal => (gap - gamma).max(0.0),
        HingeDirection::Separation => (gamma - gap).max(0.0),
    }
}

fn check_templates(templates: &[Array2<f64>], data: &LabeledDataset) -> Result<()> {
    check_dims(data.num_groups(), templates.len())?;
    for t in templates {
        check_dims(data.num_rois(), t.nrows())?;
        check_dims(data.num_rois(), t.ncols())?;
    }
    Ok(())
}

fn l1_and_inter(templates: &[Array2<f64>], hyper: &TemplateHyperParams) -> f64 {
    let l1: f64 = templates
        .iter()
        .map(|t| t.iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    let mut inter = 0.0;
    for (c1, a) in templates.iter().enumerate() {
        for (c2, b) in templates.iter().enumerate() {
            if c1 == c2 {
                continue;
            }
            inter += a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| hinge_penalty(*x, *y, hyper.gamma, hyper.hinge_direction))
                .sum::<f64>();
        }
    }
    hyper.lambda1 * l1 + hyper.lambda2 * inter
}

/// Weighted template objective for fixed weights.
pub fn objective(
    templates: &[Array2<f64>],
    data: &LabeledDataset,
    weights: &WeightTable,
    hyper: &TemplateHyperParams,
) -> Result<f64> {
    check_templates(templates, data)?;
    check_dims(data.num_groups(), weights.alpha.len())?;
    let mut intra = 0.0;
    for (c, list) in data.group_index_lists().iter().enumerate() {
        check_dims(list.len(), weights.alpha[c].len())?;
        for (p, &k) in list.iter().enumerate() {
            let d = frobenius_distance(&templates[c], &data.subjects()[k].matrix.weights)?;
            intra += weights.alpha[c][p] * d * d;
        }
    }
    Ok(intra + l1_and_inter(templates, hyper))
}

/// The 3/2-power functional decreased by [`fit_templates`].
pub fn induced_objective(
    templates: &[Array2<f64>],
    data: &LabeledDataset,
    hyper: &TemplateHyperParams,
) -> Result<f64> {
    check_templates(templates, data)?;
    let mut intra = 0.0;
    for (c, list) in data.group_index_lists().iter().enumerate() {
        for &k in list {
            let d = frobenius_distance(&templates[c], &data.subjects()[k].matrix.weights)?;
            intra += d * d.sqrt();
        }
    }
    Ok(4.0 / 3.0 * intra + l1_and_inter(templates, hyper))
}

fn entry_value(
    x: f64,
    targets: &[(f64, f64)],
    lambda1: f64,
    lambda2: f64,
    hinges: &[(f64, f64)],
    direction: HingeDirection,
) -> f64 {
    let quad: f64 = targets.iter().map(|(w, a)| a * (x - w) * (x - w)).sum();
    let hinge: f64 = hinges
        .iter()
        .map(|(b, g)| hinge_penalty(x, *b, *g, direction))
        .sum();
    quad + lambda1 * x.abs() + lambda2 * hinge
}

/// Derivative of the piecewise-linear part at a point strictly inside a
/// segment between breakpoints.
fn linear_slope(
    m: f64,
    lambda1: f64,
    lambda2: f64,
    hinges: &[(f64, f64)],
    direction: HingeDirection,
) -> f64 {
    let mut s = lambda1 * m.signum();
    for &(b, g) in hinges {
        let d = m - b;
        s += match direction {
            HingeDirection::Literal if d.abs() > g => lambda2 * d.signum(),
            HingeDirection::Separation if d.abs() < g => -lambda2 * d.signum(),
            _ => 0.0,
        };
    }
    s
}

/// Global minimizer of
/// `Σ α_k (x − w_k)² + λ1|x| + λ2 Σ hinge(x, b, γ)`.
///
/// `targets` holds `(w_k, α_k)` and `hinges` holds `(b, γ)`. The function
/// is quadratic between the breakpoints `{0, b ± γ}` (plus `b` for the
/// separation hinge), so the minimizer is the best of the segment-wise
/// clamped vertices. Ties go to the smallest `|x|`, then the smallest `x`.
pub fn solve_entry(
    targets: &[(f64, f64)],
    lambda1: f64,
    lambda2: f64,
    hinges: &[(f64, f64)],
    direction: HingeDirection,
) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    if let Some((_, a)) = targets.iter().find(|(_, a)| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "target weight must be positive, got {a}"
        )));
    }
    let quad: f64 = targets.iter().map(|(_, a)| a).sum();
    let lin: f64 = targets.iter().map(|(w, a)| a * w).sum();

    let mut knots = vec![0.0];
    for &(b, g) in hinges {
        knots.push(b - g);
        knots.push(b + g);
        if direction == HingeDirection::Separation {
            knots.push(b);
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let vertex = |lo: f64, hi: f64, probe: f64| {
        let s = linear_slope(probe, lambda1, lambda2, hinges, direction);
        ((2.0 * lin - s) / (2.0 * quad)).clamp(lo, hi)
    };
    let mut candidates = knots.clone();
    let first = knots[0];
    let last = knots[knots.len() - 1];
    candidates.push(vertex(f64::NEG_INFINITY, first, first - 1.0));
    candidates.push(vertex(last, f64::INFINITY, last + 1.0));
    for pair in knots.windows(2) {
        candidates.push(vertex(pair[0], pair[1], 0.5 * (pair[0] + pair[1])));
    }

    let mut best_x = f64::NAN;
    let mut best_v = f64::INFINITY;
    for x in candidates {
        let v = entry_value(x, targets, lambda1, lambda2, hinges, direction);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("entry objective at x={x}")));
        }
        let tie_tol = 1e-14 * (1.0 + best_v.abs().min(v.abs()));
        let better = if v < best_v - tie_tol {
            true
        } else if (v - best_v).abs() <= tie_tol {
            (x.abs(), x) < (best_x.abs(), best_x)
        } else {
            false
        };
        if better || best_x.is_nan() {
            best_x = x;
            best_v = v;
        }
    }
    // Normalize -0.0 so stored templates compare bitwise.
    Ok(if best_x == 0.0 { 0.0 } else { best_x })
}

/// Exact minimizer of the weighted objective over template `c`, all other
/// templates held fixed.
///
/// Each strictly-upper entry is solved independently and mirrored. The
/// hinge weight passed to [`solve_entry`] is `2·λ2` since every pair of
/// groups is summed in both orders.
pub fn update_template(
    c: usize,
    templates: &[Array2<f64>],
    data: &LabeledDataset,
    weights: &WeightTable,
    hyper: &TemplateHyperParams,
) -> Result<Array2<f64>> {
    check_templates(templates, data)?;
    if c >= templates.len() {
        return Err(Error::IndexOutOfRange {
            index: c,
            len: templates.len(),
        });
    }
    let list = &data.group_index_lists()[c];
    let alpha = weights.alpha.get(c).ok_or(Error::IndexOutOfRange {
        index: c,
        len: weights.alpha.len(),
    })?;
    check_dims(list.len(), alpha.len())?;

    let m = data.num_rois();
    let mut out = Array2::<f64>::eye(m);
    let mut targets = Vec::with_capacity(list.len());
    let mut hinges = Vec::with_capacity(templates.len());
    for i in 0..m {
        for j in (i + 1)..m {
            targets.clear();
            targets.extend(
                list.iter()
                    .zip(alpha)
                    .map(|(&k, &a)| (data.subjects()[k].matrix.weights[[i, j]], a)),
            );
            hinges.clear();
            hinges.extend(
                templates
                    .iter()
                    .enumerate()
                    .filter(|(o, _)| *o != c)
                    .map(|(_, t)| (t[[i, j]], hyper.gamma)),
            );
            let x = solve_entry(
                &targets,
                hyper.lambda1,
                2.0 * hyper.lambda2,
                &hinges,
                hyper.hinge_direction,
            )?;
            out[[i, j]] = x;
            out[[j, i]] = x;
        }
    }
    Ok(out)
}

fn group_mean(data: &LabeledDataset, list: &[usize]) -> Array2<f64> {
    let m = data.num_rois();
    let mut acc = Array2::<f64>::zeros((m, m));
    for &k in list {
        acc += &data.subjects()[k].matrix.weights;
    }
    acc /= list.len() as f64;
    for i in 0..m {
        acc[[i, i]] = 1.0;
    }
    acc
}

/// Block coordinate descent over all group templates.
///
/// Starts from the group means, then alternates weight recomputation with
/// [`update_template`] for each group in ascending order until the relative
/// change of the induced objective, `|J_t − J_{t−1}| / max(|J_{t−1}|, 1)`,
/// drops below `tol` or `max_iter` is reached.
pub fn fit_templates(data: &LabeledDataset, hyper: &TemplateHyperParams) -> Result<TemplateSet> {
    hyper.validate()?;
    let mut templates: Vec<Array2<f64>> = data
        .group_index_lists()
        .iter()
        .map(|list| group_mean(data, list))
        .collect();

    let finite = |v: f64, it: usize| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!(
                "induced objective at iteration {it} is {v}"
            )))
        }
    };
    let mut prev = finite(induced_objective(&templates, data, hyper)?, 0)?;
    let mut trace = vec![prev];
    let mut converged = false;
    let mut iterations_run = 0;
    for it in 1..=hyper.max_iter {
        let weights = WeightTable::compute(&templates, data, hyper.epsilon)?;
        for c in 0..templates.len() {
            templates[c] = update_template(c, &templates, data, &weights, hyper)?;
        }
        let j = finite(induced_objective(&templates, data, hyper)?, it)?;
        trace.push(j);
        iterations_run = it;
        if (j - prev).abs() / prev.abs().max(1.0) < hyper.tol {
            converged = true;
            break;
        }
        prev = j;
    }

    Ok(TemplateSet {
        templates,
        hyper: *hyper,
        objective_trace: trace,
        iterations_run,
        converged,
    })
}

/// Off-diagonal Frobenius inner product of `w` with each template.
pub fn similarity_scores(w: &ConnectivityMatrix, templates: &TemplateSet) -> Result<Vec<f64>> {
    templates
        .templates
        .iter()
        .map(|g| {
            check_dims(w.num_rois(), g.nrows())?;
            check_dims(w.weights.ncols(), g.ncols())?;
            let mut s = 0.0;
            for ((i, j), v) in w.weights.indexed_iter() {
                if i != j {
                    s += v * g[[i, j]];
                }
            }
            Ok(s)
        })
        .collect()
}

/// Upper-triangle edges where some pair of templates differs by more than
/// `threshold`.
pub fn differentiated_support(templates: &[Array2<f64>], threshold: f64) -> Vec<(usize, usize)> {
    let m = templates.first().map_or(0, Array2::nrows);
    let mut edges = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let vals = templates.iter().map(|t| t[[i, j]]);
            let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.fold(f64::INFINITY, f64::min);
            if hi - lo > threshold {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Upper-triangle edges with a nonzero entry in any template.
pub fn nonzero_support(templates: &[Array2<f64>]) -> Vec<(usize, usize)> {
    let m = templates.first().map_or(0, Array2::nrows);
    let mut edges = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            if templates.iter().any(|t| t[[i, j]] != 0.0) {
                edges.push((i, j));
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cm(w: Array2<f64>) -> ConnectivityMatrix {
        ConnectivityMatrix::new(w).unwrap()
    }

    fn subject(id: &str, w: Array2<f64>, label: usize) -> Subject {
        Subject {
            id: id.into(),
            matrix: cm(w),
            label,
        }
    }

    #[test]
    fn adaptive_weight_cases() {
        let w = cm(Array2::eye(3));
        let g = Array2::<f64>::eye(3);
        assert!((adaptive_weight(&g, &w, 1e-8).unwrap() - 1e4).abs() < 1e-6);
        let mut g1 = g.clone();
        g1[[0, 1]] = 1.0;
        assert_eq!(adaptive_weight(&g1, &w, 1e-8).unwrap(), 1.0);
        let mut g4 = g.clone();
        g4[[0, 1]] = 4.0;
        assert_eq!(adaptive_weight(&g4, &w, 1e-8).unwrap(), 0.5);
        assert!(adaptive_weight(&Array2::eye(2), &w, 1e-8).is_err());
    }

    #[test]
    fn hinge_cases() {
        for dir in [HingeDirection::Literal, HingeDirection::Separation] {
            assert_eq!(hinge_penalty(0.25, 0.0, 0.25, dir), 0.0);
        }
        assert!((hinge_penalty(0.5, 0.2, 0.1, HingeDirection::Literal) - 0.2).abs() < 1e-15);
        assert!((hinge_penalty(0.5, 0.45, 0.1, HingeDirection::Separation) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn hinge_direction_parses() {
        assert_eq!(
            "literal".parse::<HingeDirection>().unwrap(),
            HingeDirection::Literal
        );
        assert_eq!(HingeDirection::Separation.to_string(), "separation");
        assert!("sideways".parse::<HingeDirection>().is_err());
    }

    #[test]
    fn dataset_rejects_bad_inputs() {
        assert!(LabeledDataset::new(vec![], 2).is_err());
        let s = vec![subject("a", Array2::eye(2), 0)];
        assert!(LabeledDataset::new(s.clone(), 2).is_err(), "empty group");
        let s2 = vec![
            subject("a", Array2::eye(2), 0),
            subject("b", Array2::eye(3), 1),
        ];
        assert!(LabeledDataset::new(s2, 2).is_err(), "mixed sizes");
        let s3 = vec![subject("a", Array2::eye(2), 5)];
        assert!(LabeledDataset::new(s3, 1).is_err(), "label range");
        let d = LabeledDataset::new(s, 1).unwrap();
        assert_eq!(d.group_index_lists(), &[vec![0]]);
    }

    #[test]
    fn objective_zero_residual() {
        let w = array![[1.0, 0.3], [0.3, 1.0]];
        let data = LabeledDataset::new(vec![subject("a", w.clone(), 0)], 1).unwrap();
        let hyper = TemplateHyperParams {
            lambda1: 0.0,
            lambda2: 0.0,
            ..Default::default()
        };
        let weights = WeightTable::uniform(&data);
        assert_eq!(
            objective(std::slice::from_ref(&w), &data, &weights, &hyper).unwrap(),
            0.0
        );
        assert_eq!(induced_objective(&[w], &data, &hyper).unwrap(), 0.0);
    }

    #[test]
    fn induced_objective_unit_norm() {
        let w = array![[1.0, 0.0], [0.0, 1.0]];
        let mut g = w.clone();
        g[[0, 1]] = 1.0;
        let data = LabeledDataset::new(vec![subject("a", w, 0)], 1).unwrap();
        let hyper = TemplateHyperParams {
            lambda1: 0.0,
            lambda2: 0.0,
            ..Default::default()
        };
        let v = induced_objective(&[g], &data, &hyper).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn inter_term_vanishes_on_margin_boundary() {
        let data = LabeledDataset::new(
            vec![
                subject("a", array![[1.0]], 0),
                subject("b", array![[1.0]], 1),
            ],
            2,
        )
        .unwrap();
        // 1-ROI templates differing by exactly gamma.
        let ga = array![[0.25]];
        let gb = array![[0.0]];
        for dir in [HingeDirection::Literal, HingeDirection::Separation] {
            let hyper = TemplateHyperParams {
                lambda1: 0.0,
                lambda2: 1.0,
                gamma: 0.25,
                hinge_direction: dir,
                ..Default::default()
            };
            let zero_intra = WeightTable {
                alpha: vec![vec![0.0], vec![0.0]],
            };
            let v = objective(&[ga.clone(), gb.clone()], &data, &zero_intra, &hyper).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn solve_entry_closed_forms() {
        let sep = HingeDirection::Separation;
        assert_eq!(solve_entry(&[(0.5, 1.0)], 0.0, 0.0, &[], sep).unwrap(), 0.5);
        assert_eq!(solve_entry(&[(0.3, 1.0)], 0.6, 0.0, &[], sep).unwrap(), 0.0);
        // Soft threshold: 0.8 - 0.2/(2*1)
        let x = solve_entry(&[(0.8, 1.0)], 0.2, 0.0, &[], sep).unwrap();
        assert!((x - 0.7).abs() < 1e-15);
        let x = solve_entry(&[(-0.8, 1.0)], 0.2, 0.0, &[], sep).unwrap();
        assert!((x + 0.7).abs() < 1e-15);
        assert!(matches!(
            solve_entry(&[], 0.1, 0.0, &[], sep),
            Err(Error::EmptyTargets)
        ));
        assert!(solve_entry(&[(0.1, 0.0)], 0.1, 0.0, &[], sep).is_err());
    }

    #[test]
    fn solve_entry_tie_prefers_small_magnitude() {
        // f(x) = (x-0.5)^2 + (x+0.5)^2 is symmetric with minimum at 0; with a
        // separation hinge at b=0 the two sides of the notch tie exactly.
        let x = solve_entry(
            &[(0.5, 1.0), (-0.5, 1.0)],
            0.0,
            10.0,
            &[(0.0, 0.2)],
            HingeDirection::Separation,
        )
        .unwrap();
        assert_eq!(x, -0.2);
    }

    #[test]
    fn update_template_weighted_mean_and_shrinkage() {
        let a = array![[1.0, 0.2, -0.4], [0.2, 1.0, 0.6], [-0.4, 0.6, 1.0]];
        let b = array![[1.0, 0.4, 0.0], [0.4, 1.0, 0.2], [0.0, 0.2, 1.0]];
        let data = LabeledDataset::new(
            vec![subject("a", a.clone(), 0), subject("b", b.clone(), 0)],
            1,
        )
        .unwrap();
        let weights = WeightTable {
            alpha: vec![vec![0.7, 0.7]],
        };
        let hyper = TemplateHyperParams {
            lambda1: 0.0,
            lambda2: 0.0,
            ..Default::default()
        };
        let g = update_template(0, &[Array2::eye(3)], &data, &weights, &hyper).unwrap();
        let mean = (&a + &b) / 2.0;
        for ((i, j), v) in g.indexed_iter() {
            let expect = if i == j { 1.0 } else { mean[[i, j]] };
            assert!((v - expect).abs() < 1e-15, "({i},{j})");
        }

        let big = TemplateHyperParams {
            lambda1: 2.0 * 1.4 * 0.6,
            lambda2: 0.0,
            ..Default::default()
        };
        let g = update_template(0, &[Array2::eye(3)], &data, &weights, &big).unwrap();
        assert_eq!(g, Array2::<f64>::eye(3));
    }

    #[test]
    fn single_subject_fit_is_fixed_point() {
        let w = array![[1.0, 0.3, -0.2], [0.3, 1.0, 0.5], [-0.2, 0.5, 1.0]];
        let data = LabeledDataset::new(vec![subject("a", w.clone(), 0)], 1).unwrap();
        let hyper = TemplateHyperParams {
            lambda1: 0.0,
            ..Default::default()
        };
        let fit = fit_templates(&data, &hyper).unwrap();
        assert_eq!(fit.templates[0], w);
        assert!(fit.converged);
        assert_eq!(fit.iterations_run, 1);
        assert_eq!(fit.objective_trace.len(), 2);
    }

    #[test]
    fn similarity_scores_cases() {
        let mut g = Array2::<f64>::eye(3);
        g[[0, 1]] = 1.0;
        g[[1, 0]] = 1.0;
        let mut w = Array2::<f64>::eye(3);
        w[[1, 2]] = 0.7;
        w[[2, 1]] = 0.7;
        let set = TemplateSet {
            templates: vec![g.clone()],
            hyper: Default::default(),
            objective_trace: vec![],
            iterations_run: 0,
            converged: true,
        };
        assert_eq!(similarity_scores(&cm(w), &set).unwrap(), vec![0.0]);
        assert_eq!(similarity_scores(&cm(g), &set).unwrap(), vec![2.0]);
        assert!(similarity_scores(&cm(Array2::eye(2)), &set).is_err());
    }

    #[test]
    fn fingerprint_tracks_values() {
        let mut set = TemplateSet {
            templates: vec![Array2::eye(2)],
            hyper: Default::default(),
            objective_trace: vec![],
            iterations_run: 0,
            converged: true,
        };
        let f1 = set.fingerprint();
        assert_eq!(f1, set.clone().fingerprint());
        set.templates[0][[0, 1]] = 1e-12;
        assert_ne!(f1, set.fingerprint());
    }
}
