//! On-disk formats for templates, models and subgraph reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::ContrastSubgraph;
use crate::io::{read_json, read_matrix_csv, write_json, write_matrix_csv};
use crate::net::{EncoderKind, EpochRecord, NetworkHyperParams, NetworkParameters, TrainedModel};
use crate::template::{HingeDirection, TemplateHyperParams, TemplateSet};

pub const TEMPLATES_JSON: &str = "templates.json";

pub fn template_file_name(c: usize) -> String {
    format!("template_{c}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatesMeta {
    pub num_groups: usize,
    pub num_rois: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub hinge_direction: HingeDirection,
    pub epsilon: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

pub fn save_templates(dir: &Path, set: &TemplateSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (c, t) in set.templates.iter().enumerate() {
        write_matrix_csv(&dir.join(template_file_name(c)), t)?;
    }
    let h = &set.hyper;
    let meta = TemplatesMeta {
        num_groups: set.num_groups(),
        num_rois: set.num_rois(),
        lambda1: h.lambda1,
        lambda2: h.lambda2,
        gamma: h.gamma,
        hinge_direction: h.hinge_direction,
        epsilon: h.epsilon,
        max_iter: h.max_iter,
        tol: h.tol,
        iterations_run: set.iterations_run,
        converged: set.converged,
        objective_trace: set.objective_trace.clone(),
    };
    write_json(&dir.join(TEMPLATES_JSON), &meta)
}

pub fn load_templates(dir: &Path) -> Result<TemplateSet> {
    let meta_path = dir.join(TEMPLATES_JSON);
    let meta: TemplatesMeta = read_json(&meta_path)?;
    let templates = (0..meta.num_groups)
        .map(|c| {
            let p = dir.join(template_file_name(c));
            let t = read_matrix_csv(&p)?;
            if t.nrows() != meta.num_rois {
                return Err(Error::format(
                    &p,
                    format!("expected {} ROIs", meta.num_rois),
                ));
            }
            Ok(t)
        })
        .collect::<Result<Vec<Array2<f64>>>>()?;
    Ok(TemplateSet {
        templates,
        hyper: TemplateHyperParams {
            lambda1: meta.lambda1,
            lambda2: meta.lambda2,
            gamma: meta.gamma,
            hinge_direction: meta.hinge_direction,
            epsilon: meta.epsilon,
            max_iter: meta.max_iter,
            tol: meta.tol,
        },
        objective_trace: meta.objective_trace,
        iterations_run: meta.iterations_run,
        converged: meta.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorFile {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub hyper: NetworkHyperParams,
    pub templates_fingerprint: String,
    pub num_rois: usize,
    pub num_classes: usize,
    pub encoder_kind: EncoderKind,
    pub best_epoch: usize,
    pub training_history: Vec<EpochRecord>,
    pub params: BTreeMap<String, TensorFile>,
}

impl From<&TrainedModel> for ModelFile {
    fn from(model: &TrainedModel) -> Self {
        let params = model
            .params
            .tensors()
            .into_iter()
            .map(|(name, t)| {
                (
                    name.to_string(),
                    TensorFile {
                        shape: t.shape().to_vec(),
                        data: t.iter().copied().collect(),
                    },
                )
            })
            .collect();
        ModelFile {
            hyper: model.hyper,
            templates_fingerprint: model.templates_fingerprint.clone(),
            num_rois: model.params.num_rois,
            num_classes: model.params.num_classes,
            encoder_kind: model.params.encoder_kind(),
            best_epoch: model.best_epoch,
            training_history: model.training_history.clone(),
            params,
        }
    }
}

impl TryFrom<ModelFile> for TrainedModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let mut tensors = file.params;
        let params = NetworkParameters::from_tensors(
            file.num_rois,
            file.num_classes,
            file.hyper.leaky_slope,
            file.encoder_kind,
            |name| {
                let t = tensors.remove(name).ok_or_else(|| {
                    Error::InvalidArgument(format!("model file lacks tensor {name}"))
                })?;
                ArrayD::from_shape_vec(IxDyn(&t.shape), t.data)
                    .map_err(|e| Error::InvalidArgument(format!("tensor {name}: {e}")))
            },
        )?;
        Ok(TrainedModel {
            params,
            templates_fingerprint: file.templates_fingerprint,
            training_history: file.training_history,
            hyper: file.hyper,
            best_epoch: file.best_epoch,
        })
    }
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<()> {
    write_json(path, &ModelFile::from(model))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let file: ModelFile = read_json(path)?;
    TrainedModel::try_from(file).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphReport {
    pub group_a: usize,
    pub group_b: usize,
    pub eta: f64,
    pub tau: f64,
    pub restarts: usize,
    pub seed: u64,
    pub nodes: Vec<usize>,
    pub node_names: Vec<String>,
    pub edges: Vec<(usize, usize, f64)>,
    pub score: f64,
}

impl SubgraphReport {
    pub fn new(
        sg: &ContrastSubgraph,
        groups: (usize, usize),
        tau: f64,
        restarts: usize,
        seed: u64,
        roi_names: Option<&[String]>,
    ) -> Self {
        let node_names = roi_names
            .map(|names| {
                sg.nodes
                    .iter()
                    .map(|&i| names.get(i).cloned().unwrap_or_default())
                    .collect()
            })
            .unwrap_or_default();
        Self {
            group_a: groups.0,
            group_b: groups.1,
            eta: sg.eta,
            tau,
            restarts,
            seed,
            nodes: sg.nodes.clone(),
            node_names,
            edges: sg.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
            score: sg.score,
        }
    }
}

/// `|g_a − g_b|` for external heatmap plotting.
pub fn write_difference_heatmap(path: &Path, g_a: &Array2<f64>, g_b: &Array2<f64>) -> Result<()> {
    let diff = (g_a - g_b).mapv(f64::abs);
    write_matrix_csv(path, &diff)
}
