//! Synthetic populations with planted group templates.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ConnectivityMatrix;
use crate::template::{LabeledDataset, Subject};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_rois: usize,
    pub groups: usize,
    pub subjects_per_group: usize,
    /// Fraction of ROI pairs carrying a nonzero base connection.
    pub support_density: f64,
    /// Gap between adjacent groups on differentiated edges.
    pub effect_size: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.num_rois < 2 {
            return bad(format!("need at least 2 ROIs, got {}", self.num_rois));
        }
        if self.groups == 0 || self.subjects_per_group == 0 {
            return bad("groups and subjects per group must be positive".into());
        }
        if !(self.support_density > 0.0 && self.support_density <= 1.0) {
            return bad(format!(
                "density must lie in (0,1], got {}",
                self.support_density
            ));
        }
        if !(self.effect_size >= 0.0 && self.effect_size.is_finite()) {
            return bad(format!(
                "effect size must be finite and >= 0, got {}",
                self.effect_size
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.noise_sigma
            ));
        }
        if (self.groups - 1) as f64 * self.effect_size > 2.0 {
            return bad("group offsets do not fit inside [-1, 1]".into());
        }
        Ok(())
    }
}

/// Planted structure behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub templates: Vec<Array2<f64>>,
    /// Upper-triangle edges of the shared base pattern.
    pub support: Vec<(usize, usize)>,
    /// Subset of `support` whose value differs between groups.
    pub differentiated: Vec<(usize, usize)>,
}

/// Generates a labeled population around planted group templates.
///
/// A random sparse symmetric base pattern is shared by all groups. On a
/// designated half of its edges, group `c` is offset by
/// `s_e·(c·δ − (C−1)·δ/2)` with a random per-edge sign `s_e`, so any two
/// groups differ by at least `δ` there (`±δ/2` for two groups). Subjects are
/// their group template plus symmetric Gaussian noise, clipped to [-1, 1],
/// with unit diagonal.
pub fn synth_generate(spec: &SynthSpec) -> Result<(LabeledDataset, GroundTruth)> {
    spec.validate()?;
    let m = spec.num_rois;
    let c_count = spec.groups;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut support: Vec<(usize, usize)> = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            if rng.random_bool(spec.support_density) {
                support.push((i, j));
            }
        }
    }
    if support.is_empty() {
        let i = rng.random_range(0..m - 1);
        let j = rng.random_range(i + 1..m);
        support.push((i, j));
    }

    let mut shuffled = support.clone();
    shuffled.shuffle(&mut rng);
    let mut differentiated: Vec<(usize, usize)> = shuffled[..support.len().div_ceil(2)].to_vec();
    differentiated.sort_unstable();

    let half_span = (c_count - 1) as f64 * spec.effect_size / 2.0;
    let mut templates = vec![Array2::<f64>::eye(m); c_count];
    for &(i, j) in &support {
        let sign: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let base = sign * rng.random_range(0.1..=0.5);
        let is_diff = differentiated.binary_search(&(i, j)).is_ok();
        let edge_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for (c, t) in templates.iter_mut().enumerate() {
            let v = if is_diff {
                let limit = 1.0 - half_span;
                base.clamp(-limit, limit) + edge_sign * (c as f64 * spec.effect_size - half_span)
            } else {
                base
            };
            t[[i, j]] = v;
            t[[j, i]] = v;
        }
    }

    let mut subjects = Vec::with_capacity(c_count * spec.subjects_per_group);
    for (c, t) in templates.iter().enumerate() {
        for n in 0..spec.subjects_per_group {
            let mut w = t.clone();
            for i in 0..m {
                for j in (i + 1)..m {
                    let z: f64 = rng.sample(StandardNormal);
                    let v = (t[[i, j]] + spec.noise_sigma * z).clamp(-1.0, 1.0);
                    w[[i, j]] = v;
                    w[[j, i]] = v;
                }
            }
            subjects.push(Subject {
                id: format!("g{c}_s{n:03}"),
                matrix: ConnectivityMatrix::new(w)?,
                label: c,
            });
        }
    }

    let data = LabeledDataset::new(subjects, c_count)?;
    Ok((
        data,
        GroundTruth {
            templates,
            support,
            differentiated,
        },
    ))
}
