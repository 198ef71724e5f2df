use std::fs;
use std::path::{Path, PathBuf};

use brainplate::explain::{extract_subgraph, local_search, ContrastProblem};
use brainplate::io::{write_json, write_matrix_csv};
use brainplate::manifest::{self, load_dataset, DatasetManifest, ManifestEntry};
use brainplate::metrics::{evaluate, EvalReport};
use brainplate::net::{self, TrainSplit, TrainedModel};
use brainplate::persist::{
    load_model, load_templates, save_model, save_templates, write_difference_heatmap,
    SubgraphReport,
};
use brainplate::split::{split, DataSplit};
use brainplate::synth::{synth_generate, SynthSpec};
use brainplate::template::{fit_templates, LabeledDataset, TemplateSet};
use brainplate::{Error, Result};
use serde_json::{json, Value};

use crate::{
    EvalArgs, ExplainArgs, ExplainOpts, IngestArgs, PipelineArgs, Slice, SynthArgs, TemplateArgs,
    TrainArgs,
};

pub const SPLIT_FRACTIONS: (f64, f64, f64) = (0.7, 0.1, 0.2);

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn require_two_groups(data: &LabeledDataset) -> Result<()> {
    if data.num_groups() < 2 {
        return Err(Error::InvalidDataset(format!(
            "classification needs at least 2 labels, found {}",
            data.num_groups()
        )));
    }
    Ok(())
}

fn convergence_warning(set: &TemplateSet) -> Option<String> {
    (!set.converged).then(|| {
        format!(
            "template fit stopped after {} iterations without reaching tol {}",
            set.iterations_run, set.hyper.tol
        )
    })
}

fn label_map_json(m: &DatasetManifest) -> Value {
    m.label_map
        .iter()
        .map(|(label, idx)| json!({ "label": label, "index": idx }))
        .collect()
}

pub fn synth(a: SynthArgs) -> Result<Value> {
    let spec = SynthSpec {
        num_rois: a.rois,
        groups: a.groups,
        subjects_per_group: a.subjects_per_group,
        support_density: a.density,
        effect_size: a.effect,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let (data, truth) = synth_generate(&spec)?;
    let matrix_dir = a.out.join("matrices");
    create_dir(&matrix_dir)?;
    let mut entries = Vec::with_capacity(data.len());
    for s in data.subjects() {
        let rel = format!("matrices/{}.csv", s.id);
        write_matrix_csv(&a.out.join(&rel), &s.matrix.weights)?;
        entries.push(ManifestEntry {
            subject_id: s.id.clone(),
            label: format!("g{}", s.label),
            path: rel,
        });
    }
    let manifest_path = a.out.join("manifest.csv");
    DatasetManifest::new(entries)?.write(&manifest_path)?;

    let truth_dir = a.out.join("truth");
    create_dir(&truth_dir)?;
    for (c, t) in truth.templates.iter().enumerate() {
        write_matrix_csv(&truth_dir.join(format!("template_{c}.csv")), t)?;
    }
    write_json(
        &truth_dir.join("ground_truth.json"),
        &json!({
            "spec": spec,
            "support": truth.support,
            "differentiated": truth.differentiated,
        }),
    )?;
    Ok(json!({
        "command": "synth",
        "manifest": path_str(&manifest_path),
        "subjects": data.len(),
        "rois": spec.num_rois,
        "groups": spec.groups,
        "support_edges": truth.support.len(),
        "differentiated_edges": truth.differentiated.len(),
    }))
}

pub fn ingest(a: IngestArgs) -> Result<Value> {
    let m = manifest::ingest(&a.data, &a.out)?;
    Ok(json!({
        "command": "ingest",
        "manifest": path_str(&a.out.join("manifest.csv")),
        "subjects": m.entries.len(),
        "label_map": label_map_json(&m),
    }))
}

fn template_summary(set: &TemplateSet) -> Value {
    let nnz: usize = set
        .templates
        .iter()
        .map(|t| {
            t.indexed_iter()
                .filter(|((i, j), v)| i < j && **v != 0.0)
                .count()
        })
        .sum();
    json!({
        "iterations_run": set.iterations_run,
        "converged": set.converged,
        "final_objective": set.objective_trace.last(),
        "nonzero_upper_entries": nnz,
        "fingerprint": set.fingerprint(),
    })
}

pub fn template(a: TemplateArgs) -> Result<Value> {
    let (data, m) = load_dataset(&a.data)?;
    let fit_data = match a.split_seed {
        Some(seed) => data.subset(&split(&data, SPLIT_FRACTIONS, seed)?.train)?,
        None => data,
    };
    let set = fit_templates(&fit_data, &a.opts.hyper())?;
    save_templates(&a.out, &set)?;
    let mut out = json!({
        "command": "template",
        "out": path_str(&a.out),
        "subjects": fit_data.len(),
        "label_map": label_map_json(&m),
        "fit": template_summary(&set),
        "hyperparameters": set.hyper,
    });
    if let Some(w) = convergence_warning(&set) {
        out["warning"] = json!(w);
    }
    Ok(out)
}

fn train_model(
    data: &LabeledDataset,
    templates: &TemplateSet,
    s: &DataSplit,
    hyper: &net::NetworkHyperParams,
) -> Result<TrainedModel> {
    net::train(
        data,
        templates,
        hyper,
        &TrainSplit {
            train: s.train.clone(),
            validation: s.validation.clone(),
        },
    )
}

pub fn train(a: TrainArgs) -> Result<Value> {
    let (data, _) = load_dataset(&a.data)?;
    require_two_groups(&data)?;
    let templates = load_templates(&a.templates)?;
    let s = split(&data, SPLIT_FRACTIONS, a.seed)?;
    let model = train_model(&data, &templates, &s, &a.opts.hyper(a.seed))?;
    save_model(&a.out, &model)?;
    let last = model.training_history.last();
    Ok(json!({
        "command": "train",
        "out": path_str(&a.out),
        "encoder": model.params.encoder_kind(),
        "best_epoch": model.best_epoch,
        "final_train_loss": last.map(|r| r.train_loss),
        "best_validation_accuracy": model.training_history.get(model.best_epoch).and_then(|r| r.validation_accuracy),
        "templates_fingerprint": model.templates_fingerprint,
    }))
}

pub fn eval(a: EvalArgs) -> Result<Value> {
    let (data, m) = load_dataset(&a.data)?;
    require_two_groups(&data)?;
    let templates = load_templates(&a.templates)?;
    let model = load_model(&a.model)?;
    if model.templates_fingerprint != templates.fingerprint() {
        return Err(Error::InvalidDataset(format!(
            "model {} was trained with different templates than {}",
            a.model.display(),
            a.templates.display()
        )));
    }
    let s = split(&data, SPLIT_FRACTIONS, a.seed)?;
    let indices: Vec<usize> = match a.subset {
        Slice::Train => s.train,
        Slice::Validation => s.validation,
        Slice::Test => s.test,
        Slice::All => (0..data.len()).collect(),
    };
    let mut report = evaluate(&model, &templates, &data, &indices)?;
    report.split_seed = Some(a.seed);
    Ok(json!({
        "command": "eval",
        "accuracy": report.accuracy,
        "auc": report.auc,
        "per_class_counts": report.per_class_counts,
        "split_seed": report.split_seed,
        "evaluated": indices.len(),
        "label_map": label_map_json(&m),
    }))
}

fn explain_pair(
    templates: &TemplateSet,
    groups: (usize, usize),
    opts: &ExplainOpts,
    seed: u64,
) -> Result<SubgraphReport> {
    let c = templates.num_groups();
    for g in [groups.0, groups.1] {
        if g >= c {
            return Err(Error::InvalidArgument(format!(
                "group {g} out of range for {c} templates"
            )));
        }
    }
    if groups.0 == groups.1 {
        return Err(Error::InvalidArgument(
            "group_a and group_b must differ".into(),
        ));
    }
    if !(opts.tau >= 0.0 && opts.tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tau must be finite and >= 0, got {}",
            opts.tau
        )));
    }
    let (g_a, g_b) = (
        &templates.templates[groups.0],
        &templates.templates[groups.1],
    );
    let problem = ContrastProblem::from_templates(g_a, g_b, opts.eta)?;
    let nodes = local_search(&problem, opts.restarts, seed)?;
    let sg = extract_subgraph(&nodes, g_a, g_b, opts.tau, opts.eta)?;
    Ok(SubgraphReport::new(
        &sg,
        groups,
        opts.tau,
        opts.restarts,
        seed,
        None,
    ))
}

pub fn explain(a: ExplainArgs) -> Result<Value> {
    let templates = load_templates(&a.templates)?;
    let report = explain_pair(&templates, (a.group_a, a.group_b), &a.opts, a.seed)?;
    write_json(&a.out, &report)?;
    if let Some(h) = &a.heatmap {
        write_difference_heatmap(
            h,
            &templates.templates[a.group_a],
            &templates.templates[a.group_b],
        )?;
    }
    Ok(json!({
        "command": "explain",
        "out": path_str(&a.out),
        "nodes": report.nodes,
        "edges": report.edges.len(),
        "score": report.score,
    }))
}

fn default_pipeline_dir(manifest: &Path, seed: u64) -> PathBuf {
    manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
        .join(format!("pipeline_seed{seed}"))
}

fn ids(data: &LabeledDataset, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&k| data.subjects()[k].id.clone()).collect()
}

fn pipeline_report(
    a: &PipelineArgs,
    data: &LabeledDataset,
    m: &DatasetManifest,
    s: &DataSplit,
    set: &TemplateSet,
    model: &TrainedModel,
    eval: &EvalReport,
) -> Value {
    let mut report = json!({
        "accuracy": eval.accuracy,
        "auc": eval.auc,
        "seed": a.seed,
        "split": {
            "fractions": [SPLIT_FRACTIONS.0, SPLIT_FRACTIONS.1, SPLIT_FRACTIONS.2],
            "train": ids(data, &s.train),
            "validation": ids(data, &s.validation),
            "test": ids(data, &s.test),
        },
        "hyperparameters": {
            "template": set.hyper,
            "network": model.hyper,
            "explain": { "eta": a.explain.eta, "tau": a.explain.tau, "restarts": a.explain.restarts },
        },
        "label_map": label_map_json(m),
        "per_class_counts": eval.per_class_counts,
        "templates": template_summary(set),
        "best_epoch": model.best_epoch,
    });
    if let Some(w) = convergence_warning(set) {
        report["warning"] = json!(w);
    }
    report
}

pub fn pipeline(a: PipelineArgs) -> Result<Value> {
    let (data, m) = load_dataset(&a.data)?;
    require_two_groups(&data)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| default_pipeline_dir(&a.data, a.seed));
    create_dir(&out)?;

    let s = split(&data, SPLIT_FRACTIONS, a.seed)?;
    let set = fit_templates(&data.subset(&s.train)?, &a.template.hyper())?;
    let model = train_model(&data, &set, &s, &a.net.hyper(a.seed))?;
    let mut eval = evaluate(&model, &set, &data, &s.test)?;
    eval.split_seed = Some(a.seed);
    let subgraph = explain_pair(&set, (0, 1), &a.explain, a.seed)?;

    let template_dir = out.join("templates");
    save_templates(&template_dir, &set)?;
    save_model(&out.join("model.json"), &model)?;
    write_json(&out.join("subgraph.json"), &subgraph)?;
    write_difference_heatmap(
        &out.join("heatmap_0_1.csv"),
        &set.templates[0],
        &set.templates[1],
    )?;
    let report = pipeline_report(&a, &data, &m, &s, &set, &model, &eval);
    let report_path = out.join("report.json");
    write_json(&report_path, &report)?;

    let mut stdout = report;
    stdout["command"] = json!("pipeline");
    stdout["out"] = json!(path_str(&out));
    stdout["report"] = json!(path_str(&report_path));
    Ok(stdout)
}
