//! Contrast subgraphs between two group templates.
//!
//! A node set `S` is scored as `Σ_{i,j∈S} d(i,j) − η·|S|²` where
//! `d = G_a − G_b` with zero diagonal, so high-scoring sets are dense in
//! group `a`'s template relative to group `b`'s. Swapping the templates
//! gives the opposite contrast.

use std::cmp::Ordering;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

/// Moves must gain more than this to count as improving.
const IMPROVE_TOL: f64 = 1e-12;

/// Largest node count accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastProblem {
    /// Symmetric contrast matrix with zero diagonal.
    pub d: Array2<f64>,
    pub eta: f64,
}

impl ContrastProblem {
    pub fn new(d: Array2<f64>, eta: f64) -> Result<Self> {
        check_dims(d.nrows(), d.ncols())?;
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta must be finite and >= 0, got {eta}"
            )));
        }
        Ok(Self { d, eta })
    }

    pub fn from_templates(g_a: &Array2<f64>, g_b: &Array2<f64>, eta: f64) -> Result<Self> {
        Self::new(contrast_matrix(g_a, g_b)?, eta)
    }

    pub fn num_nodes(&self) -> usize {
        self.d.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastEdge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSubgraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<ContrastEdge>,
    pub score: f64,
    pub eta: f64,
}

/// `g_a − g_b` with the diagonal forced to zero.
pub fn contrast_matrix(g_a: &Array2<f64>, g_b: &Array2<f64>) -> Result<Array2<f64>> {
    check_dims(g_a.nrows(), g_a.ncols())?;
    check_dims(g_a.nrows(), g_b.nrows())?;
    check_dims(g_a.ncols(), g_b.ncols())?;
    let mut d = g_a - g_b;
    for i in 0..d.nrows() {
        d[[i, i]] = 0.0;
    }
    Ok(d)
}

pub fn subgraph_score(d: &Array2<f64>, nodes: &[usize], eta: f64) -> Result<f64> {
    let m = d.nrows();
    let mut seen = vec![false; m];
    for &i in nodes {
        if i >= m {
            return Err(Error::IndexOutOfRange { index: i, len: m });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument(format!("node {i} listed twice")));
        }
    }
    let mut mass = 0.0;
    for &i in nodes {
        for &j in nodes {
            mass += d[[i, j]];
        }
    }
    let n = nodes.len() as f64;
    Ok(mass - eta * n * n)
}

/// Cross-candidate preference: higher score, then smaller set, then
/// lexicographically smaller sorted index list. `Less` means `a` wins.
fn prefer(a_score: f64, a: &[usize], b_score: f64, b: &[usize]) -> Ordering {
    let tol = 1e-12 * (1.0 + a_score.abs().max(b_score.abs()));
    if a_score > b_score + tol {
        return Ordering::Less;
    }
    if b_score > a_score + tol {
        return Ordering::Greater;
    }
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Move {
    Add(usize),
    Remove(usize),
    Swap { out: usize, inn: usize },
}

struct SearchState<'a> {
    d: &'a Array2<f64>,
    eta: f64,
    member: Vec<bool>,
    size: usize,
    /// `links[v] = Σ_{u∈S} d(u,v)`.
    links: Vec<f64>,
}

impl<'a> SearchState<'a> {
    fn new(d: &'a Array2<f64>, eta: f64, member: Vec<bool>) -> Self {
        let m = d.nrows();
        let size = member.iter().filter(|b| **b).count();
        let links = (0..m)
            .map(|v| (0..m).filter(|&u| member[u]).map(|u| d[[u, v]]).sum())
            .collect();
        Self {
            d,
            eta,
            member,
            size,
            links,
        }
    }

    fn gain(&self, mv: Move) -> f64 {
        let s = self.size as f64;
        match mv {
            Move::Add(v) => 2.0 * self.links[v] - self.eta * (2.0 * s + 1.0),
            Move::Remove(v) => -2.0 * self.links[v] + self.eta * (2.0 * s - 1.0),
            Move::Swap { out, inn } => {
                2.0 * (self.links[inn] - self.d[[out, inn]]) - 2.0 * self.links[out]
            }
        }
    }

    fn toggle(&mut self, v: usize) {
        let sign = if self.member[v] { -1.0 } else { 1.0 };
        self.member[v] = !self.member[v];
        if self.member[v] {
            self.size += 1;
        } else {
            self.size -= 1;
        }
        for (u, l) in self.links.iter_mut().enumerate() {
            *l += sign * self.d[[v, u]];
        }
    }

    fn apply(&mut self, mv: Move) {
        match mv {
            Move::Add(v) | Move::Remove(v) => self.toggle(v),
            Move::Swap { out, inn } => {
                self.toggle(out);
                self.toggle(inn);
            }
        }
    }

    /// Best strictly improving move. Scan order is adds, removes, then
    /// swaps, each by ascending node index; the first of equal gains wins.
    fn best_move(&self) -> Option<Move> {
        let m = self.member.len();
        let mut best: Option<(f64, Move)> = None;
        let mut consider = |mv: Move| {
            let g = self.gain(mv);
            if g > IMPROVE_TOL && best.is_none_or(|(bg, _)| g > bg + IMPROVE_TOL) {
                best = Some((g, mv));
            }
        };
        for v in (0..m).filter(|&v| !self.member[v]) {
            consider(Move::Add(v));
        }
        for v in (0..m).filter(|&v| self.member[v]) {
            consider(Move::Remove(v));
        }
        for out in (0..m).filter(|&v| self.member[v]) {
            for inn in (0..m).filter(|&v| !self.member[v]) {
                consider(Move::Swap { out, inn });
            }
        }
        best.map(|(_, mv)| mv)
    }

    fn nodes(&self) -> Vec<usize> {
        (0..self.member.len()).filter(|&v| self.member[v]).collect()
    }
}

/// Hill-climbs from `start` with add/remove/swap moves until no single
/// move improves the score.
pub fn climb(problem: &ContrastProblem, start: &[usize]) -> Result<Vec<usize>> {
    let m = problem.num_nodes();
    let mut member = vec![false; m];
    for &v in start {
        if v >= m {
            return Err(Error::IndexOutOfRange { index: v, len: m });
        }
        member[v] = true;
    }
    let mut state = SearchState::new(&problem.d, problem.eta, member);
    while let Some(mv) = state.best_move() {
        state.apply(mv);
    }
    Ok(state.nodes())
}

/// True if no add, remove or swap improves `nodes` by more than the
/// improvement tolerance.
pub fn is_local_optimum(problem: &ContrastProblem, nodes: &[usize]) -> Result<bool> {
    let base = subgraph_score(&problem.d, nodes, problem.eta)?;
    let m = problem.num_nodes();
    let inside: Vec<bool> = (0..m).map(|v| nodes.contains(&v)).collect();
    let check = |cand: Vec<usize>| -> Result<bool> {
        Ok(subgraph_score(&problem.d, &cand, problem.eta)? <= base + 1e-9)
    };
    for (v, &is_in) in inside.iter().enumerate() {
        let mut cand: Vec<usize> = nodes.to_vec();
        if is_in {
            cand.retain(|&u| u != v);
        } else {
            cand.push(v);
        }
        if !check(cand)? {
            return Ok(false);
        }
    }
    for out in (0..m).filter(|&v| inside[v]) {
        for inn in (0..m).filter(|&v| !inside[v]) {
            let mut cand: Vec<usize> = nodes.iter().copied().filter(|&u| u != out).collect();
            cand.push(inn);
            if !check(cand)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Multi-start local search. Each restart begins from a seeded random
/// subset with inclusion probability 1/2.
pub fn local_search(problem: &ContrastProblem, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let m = problem.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts {
        let start: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.5)).collect();
        let nodes = climb(problem, &start)?;
        let score = subgraph_score(&problem.d, &nodes, problem.eta)?;
        let take = match &best {
            None => true,
            Some((bs, bn)) => prefer(score, &nodes, *bs, bn) == Ordering::Less,
        };
        if take {
            best = Some((score, nodes));
        }
    }
    Ok(best.map(|(_, n)| n).unwrap_or_default())
}

/// Exact maximizer by enumerating all `2^M` subsets.
pub fn brute_force(problem: &ContrastProblem) -> Result<Vec<usize>> {
    let m = problem.num_nodes();
    if m > BRUTE_FORCE_MAX {
        return Err(Error::TooLarge(m));
    }
    let d = &problem.d;
    let total = 1usize << m;
    // score[mask] built from mask without its highest node.
    let mut score = vec![0.0f64; total];
    let mut best_mask = 0usize;
    for mask in 1..total {
        let v = usize::BITS as usize - 1 - mask.leading_zeros() as usize;
        let rest = mask & !(1 << v);
        let mut link = 0.0;
        let mut r = rest;
        while r != 0 {
            let u = r.trailing_zeros() as usize;
            link += d[[u, v]];
            r &= r - 1;
        }
        let s = rest.count_ones() as f64;
        score[mask] = score[rest] + 2.0 * link + d[[v, v]] - problem.eta * (2.0 * s + 1.0);
        let (a, b) = (score[mask], score[best_mask]);
        let tol = 1e-12 * (1.0 + a.abs().max(b.abs()));
        if a > b + tol
            || (a >= b - tol
                && prefer(a, &mask_nodes(mask), b, &mask_nodes(best_mask)) == Ordering::Less)
        {
            best_mask = mask;
        }
    }
    Ok(mask_nodes(best_mask))
}

fn mask_nodes(mask: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    let mut r = mask;
    while r != 0 {
        out.push(r.trailing_zeros() as usize);
        r &= r - 1;
    }
    out
}

/// Materializes the subgraph on `nodes`: edge `(i, j)` is kept when
/// `|g_a(i,j) − g_b(i,j)| > tau`.
pub fn extract_subgraph(
    nodes: &[usize],
    g_a: &Array2<f64>,
    g_b: &Array2<f64>,
    tau: f64,
    eta: f64,
) -> Result<ContrastSubgraph> {
    let d = contrast_matrix(g_a, g_b)?;
    let mut nodes = nodes.to_vec();
    nodes.sort_unstable();
    let score = subgraph_score(&d, &nodes, eta)?;
    let mut edges = Vec::new();
    for (a, &i) in nodes.iter().enumerate() {
        for &j in &nodes[a + 1..] {
            let weight = (g_a[[i, j]] - g_b[[i, j]]).abs();
            if weight > tau {
                edges.push(ContrastEdge { i, j, weight });
            }
        }
    }
    Ok(ContrastSubgraph {
        nodes,
        edges,
        score,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contrast_matrix_cases() {
        let g = Array2::<f64>::eye(3);
        assert!(contrast_matrix(&g, &g).unwrap().iter().all(|v| *v == 0.0));
        let mut a = Array2::<f64>::from_elem((3, 3), 0.9);
        a[[0, 1]] = 0.6;
        let mut b = Array2::<f64>::zeros((3, 3));
        b[[0, 1]] = 0.2;
        let d = contrast_matrix(&a, &b).unwrap();
        assert!((d[[0, 1]] - 0.4).abs() < 1e-15);
        assert!((0..3).all(|i| d[[i, i]] == 0.0));
        assert!(contrast_matrix(&a, &Array2::zeros((2, 2))).is_err());
    }

    #[test]
    fn score_cases() {
        let mut d = Array2::<f64>::zeros((4, 4));
        assert_eq!(subgraph_score(&d, &[], 0.3).unwrap(), 0.0);
        d[[1, 3]] = 0.5;
        d[[3, 1]] = 0.5;
        assert!((subgraph_score(&d, &[1, 3], 0.05).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(
            subgraph_score(&d, &[4], 0.1),
            Err(Error::IndexOutOfRange { index: 4, len: 4 })
        ));
        assert!(subgraph_score(&d, &[1, 1], 0.1).is_err());
    }

    #[test]
    fn degenerate_instances() {
        let p = ContrastProblem::new(Array2::zeros((6, 6)), 0.1).unwrap();
        assert!(brute_force(&p).unwrap().is_empty());
        assert!(local_search(&p, 4, 1).unwrap().is_empty());
        assert!(local_search(&p, 0, 1).is_err());

        let mut d = Array2::<f64>::zeros((5, 5));
        d[[0, 1]] = 1.0;
        d[[1, 0]] = 1.0;
        let p = ContrastProblem::new(d.clone(), 0.1).unwrap();
        let best = brute_force(&p).unwrap();
        assert_eq!(best, vec![0, 1]);
        assert!((subgraph_score(&d, &best, 0.1).unwrap() - 1.6).abs() < 1e-15);

        let big = ContrastProblem::new(Array2::zeros((21, 21)), 0.1).unwrap();
        assert!(matches!(brute_force(&big), Err(Error::TooLarge(21))));
    }

    #[test]
    fn extract_cases() {
        let mut a = Array2::<f64>::eye(3);
        a[[0, 1]] = 0.6;
        a[[1, 0]] = 0.6;
        let mut b = Array2::<f64>::eye(3);
        b[[0, 1]] = 0.2;
        b[[1, 0]] = 0.2;
        let sg = extract_subgraph(&[1, 0], &a, &b, 0.0, 0.02).unwrap();
        assert_eq!(sg.nodes, vec![0, 1]);
        assert_eq!(sg.edges.len(), 1);
        assert_eq!((sg.edges[0].i, sg.edges[0].j), (0, 1));
        assert!((sg.edges[0].weight - 0.4).abs() < 1e-15);
        assert!((sg.score - (0.8 - 0.08)).abs() < 1e-15);

        let none = extract_subgraph(&[0, 1, 2], &a, &b, 0.5, 0.02).unwrap();
        assert!(none.edges.is_empty());
        assert!(extract_subgraph(&[3], &a, &b, 0.0, 0.02).is_err());
    }

    #[test]
    fn climb_reaches_local_optimum() {
        let d = Array2::from_shape_fn((7, 7), |(i, j)| {
            if i == j {
                0.0
            } else {
                (((i + j) * 37 % 11) as f64 - 5.0) / 10.0
            }
        });
        let p = ContrastProblem::new(d, 0.02).unwrap();
        let nodes = climb(&p, &[0, 2, 4]).unwrap();
        assert!(is_local_optimum(&p, &nodes).unwrap());
    }
}
