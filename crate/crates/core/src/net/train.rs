use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    argmax, backward, cross_entropy, forward, init_network, sgd_step, softmax, NetworkHyperParams,
    NetworkParameters,
};
use crate::error::{check_dims, Error, Result};
use crate::graph::{augment, ConnectivityMatrix};
use crate::template::{LabeledDataset, TemplateSet};

/// Subject positions used for fitting and for model selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_loss: f64,
    /// `None` when the validation slice is empty.
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: NetworkParameters,
    pub templates_fingerprint: String,
    pub training_history: Vec<EpochRecord>,
    pub hyper: NetworkHyperParams,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
}

fn accuracy_on(
    params: &NetworkParameters,
    inputs: &[Array2<f64>],
    labels: &[usize],
    idx: &[usize],
) -> Result<Option<f64>> {
    if idx.is_empty() {
        return Ok(None);
    }
    let mut correct = 0usize;
    for &k in idx {
        let (logits, _) = forward(params, &inputs[k])?;
        if argmax(&logits) == labels[k] {
            correct += 1;
        }
    }
    Ok(Some(correct as f64 / idx.len() as f64))
}

/// Trains the classifier on template-augmented inputs.
///
/// Mini-batches are drawn from a seeded shuffle of `split.train` each epoch
/// and per-sample gradients are averaged in batch order. The returned
/// parameters are those of the epoch with the best validation accuracy,
/// later epochs winning ties.
pub fn train(
    data: &LabeledDataset,
    templates: &TemplateSet,
    hyper: &NetworkHyperParams,
    split: &TrainSplit,
) -> Result<TrainedModel> {
    hyper.validate()?;
    let k = data.len();
    for &i in split.train.iter().chain(&split.validation) {
        if i >= k {
            return Err(Error::IndexOutOfRange { index: i, len: k });
        }
    }
    if split.train.iter().any(|i| split.validation.contains(i)) {
        return Err(Error::InvalidArgument(
            "train and validation indices overlap".into(),
        ));
    }
    if split.train.is_empty() {
        return Err(Error::InvalidArgument("empty training split".into()));
    }
    check_dims(data.num_groups(), templates.num_groups())?;

    let global = templates.global()?;
    let inputs = data
        .subjects()
        .iter()
        .map(|s| augment(&s.matrix, &global))
        .collect::<Result<Vec<_>>>()?;
    let labels = data.labels();

    let mut params = init_network(data.num_rois(), data.num_groups(), hyper)?;
    let mut velocity = params.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    rng.set_stream(1);

    let mut order = split.train.clone();
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(f64, usize, NetworkParameters)> = None;

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            let mut grads = params.zeros_like();
            for &i in batch {
                let (logits, cache) = forward(&params, &inputs[i])?;
                let loss = cross_entropy(&logits, labels[i]);
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss {loss} at epoch {epoch}, subject {}",
                        data.subjects()[i].id
                    )));
                }
                loss_sum += loss;
                let g = backward(&params, &cache, labels[i])?;
                for ((_, mut acc), (_, gi)) in grads.tensors_mut().into_iter().zip(g.tensors()) {
                    acc += &gi;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for (_, mut t) in grads.tensors_mut() {
                t *= scale;
            }
            sgd_step(
                &mut params,
                &grads,
                &mut velocity,
                hyper.learning_rate,
                hyper.momentum,
            )?;
        }
        if !params.all_finite() {
            return Err(Error::NonFinite(format!(
                "parameters diverged at epoch {epoch}"
            )));
        }
        let val = accuracy_on(&params, &inputs, &labels, &split.validation)?;
        history.push(EpochRecord {
            train_loss: loss_sum / order.len() as f64,
            validation_accuracy: val,
        });
        let score = val.unwrap_or(0.0);
        if best.as_ref().is_none_or(|(s, _, _)| score >= *s) {
            best = Some((score, epoch, params.clone()));
        }
    }

    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    Ok(TrainedModel {
        params,
        templates_fingerprint: templates.fingerprint(),
        training_history: history,
        hyper: *hyper,
        best_epoch,
    })
}

/// Class probabilities for one subject.
pub fn predict_proba(
    model: &TrainedModel,
    w: &ConnectivityMatrix,
    templates: &TemplateSet,
) -> Result<Array1<f64>> {
    check_dims(model.params.num_rois, w.num_rois())?;
    let x = augment(w, &templates.global()?)?;
    let (logits, _) = forward(&model.params, &x)?;
    Ok(softmax(&logits))
}
