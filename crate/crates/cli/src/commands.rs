use std::path::Path;

use dmbp::baselines::BaselineConfig;
use dmbp::dmbp::{dmbp_attribution, write_loss_trace_csv, DmbpConfig};
use dmbp::imaging::{AttributionMap, ModelImage, Overlay};
use dmbp::manifest::{ImageManifest, ManifestEntry};
use dmbp::method::{attribute, Method, MethodConfig};
use dmbp::metrics::{
    reinitialized_classifier, spearman, write_curve_csv, write_summary_csv, Metric, MetricConfig,
    SummaryRow,
};
use dmbp::network::{load_network, Network};
use dmbp::Tensor;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::{AttributeArgs, Command, EvaluateArgs, ModelArgs, SanityArgs, TuningArgs};
use crate::failure::{CliResult, Failure};
use crate::output::{unique_ids, write_atomic, write_map, write_with};

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Attribute(a) => cmd_attribute(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sanity(a) => cmd_sanity(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    }
}

fn load(m: &ModelArgs) -> CliResult<Network<f32>> {
    Ok(load_network(&m.model, &m.arch)?)
}

fn method_config(t: &TuningArgs) -> CliResult<MethodConfig> {
    let cfg = MethodConfig {
        dmbp: DmbpConfig {
            iterations: t.iters,
            lr: t.lr,
            log_progress: true,
            ..Default::default()
        },
        baselines: BaselineConfig {
            ig_steps: t.ig_steps,
            sg_samples: t.sg_samples,
            sg_noise_fraction: t.sg_noise,
            seed: t.seed,
            ..Default::default()
        },
    };
    cfg.dmbp.validate()?;
    cfg.baselines.validate()?;
    Ok(cfg)
}

fn config_json(cfg: &MethodConfig) -> Value {
    let d = &cfg.dmbp;
    let b = &cfg.baselines;
    json!({
        "dmbp": {
            "iterations": d.iterations,
            "optimizer": "rmsprop",
            "lr": d.lr,
            "decay": d.decay,
            "eps": d.eps,
            "weight_decay": 0.0,
        },
        "ig": { "steps": b.ig_steps, "reference": format!("{:?}", b.ig_reference).to_lowercase() },
        "sg": { "samples": b.sg_samples, "noise_fraction": b.sg_noise_fraction },
    })
}

fn paths_json(paths: &[&Path]) -> Value {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn write_run(path: &Path, run: Value) -> CliResult {
    let mut text = serde_json::to_string_pretty(&run).expect("json values serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn cmd_attribute(a: &AttributeArgs) -> CliResult {
    let net = load(&a.model)?;
    net.select_target(a.target)?;
    let cfg = method_config(&a.tuning)?;
    let img = ModelImage::load(&a.image, net.preprocess())?;
    create_dir(&a.out_dir)?;
    let base = format!(
        "{}_{}_t{}",
        crate::output::image_id(&a.image),
        a.method,
        a.target
    );

    let mut loss_path = None;
    let map = match a.method {
        Method::Dmbp => {
            let (map, outcome) = dmbp_attribution(&net, &img.input, a.target, &cfg.dmbp)?;
            let path = a
                .loss_trace
                .clone()
                .unwrap_or_else(|| a.out_dir.join(format!("{base}_loss.csv")));
            write_with(&path, |buf| write_loss_trace_csv(&outcome.loss_trace, buf))?;
            println!(
                "loss {:.6} -> {:.6} over {} iterations",
                outcome.initial_loss(),
                outcome.final_loss(),
                outcome.loss_trace.len()
            );
            loss_path = Some(path);
            map
        }
        m => attribute(&net, &img.input, a.target, m, &cfg)?,
    };
    let overlay = a.overlay.then_some(Overlay {
        image: &img.raw,
        alpha: 0.5,
    });
    let [raw, png] = write_map(&a.out_dir, &base, &map, overlay)?;

    let mut outputs = vec![raw.as_path(), png.as_path()];
    if let Some(p) = &loss_path {
        outputs.push(p);
    }
    for p in &outputs {
        println!("wrote {}", p.display());
    }
    write_run(
        &a.out_dir.join(format!("{base}.run.json")),
        json!({
            "command": "attribute",
            "version": env!("CARGO_PKG_VERSION"),
            "model": a.model.model.display().to_string(),
            "arch": a.model.arch.display().to_string(),
            "images": [a.image.display().to_string()],
            "targets": [a.target],
            "method": a.method.name(),
            "seed": a.tuning.seed,
            "overlay": a.overlay,
            "config": config_json(&cfg),
            "out_dir": a.out_dir.display().to_string(),
            "outputs": paths_json(&outputs),
        }),
    )
}

fn evaluate_entry(
    net: &Network<f32>,
    entry: &ManifestEntry,
    id: &str,
    a: &EvaluateArgs,
    cfg: &MethodConfig,
    metric_cfg: &MetricConfig,
) -> CliResult<Vec<SummaryRow>> {
    let img = ModelImage::load(&entry.path, net.preprocess())?;
    let mut rows = Vec::with_capacity(a.method.len());
    for &method in &a.method {
        let map = attribute(net, &img.input, entry.target, method, cfg)?;
        let curve = a.metric.evaluate(
            net,
            &img.raw,
            &map,
            entry.target,
            &entry.other_labels,
            metric_cfg,
        )?;
        let path = a
            .out_dir
            .join("curves")
            .join(format!("{id}_{method}_{}.csv", a.metric));
        write_with(&path, |buf| write_curve_csv(&curve, buf))?;
        log::info!("{id} {method}: {} {:.4}", a.metric, curve.auc);
        rows.push(SummaryRow {
            image_id: id.to_string(),
            method: method.name().into(),
            metric: a.metric.name().into(),
            auc: curve.auc,
        });
    }
    Ok(rows)
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult {
    let net = load(&a.model)?;
    let cfg = method_config(&a.tuning)?;
    let metric_cfg = MetricConfig {
        steps: a.steps,
        blur_sigma: a.blur_sigma,
        seed: a.tuning.seed,
        ..Default::default()
    };
    metric_cfg.validate()?;
    let manifest = ImageManifest::load(&a.manifest)?;
    manifest.validate(net.class_count())?;
    if a.metric == Metric::Cim {
        if let Some(e) = manifest.images.iter().find(|e| e.other_labels.is_empty()) {
            return Err(Failure::usage(format!(
                "cim needs other labels for every image; {} has none",
                e.path.display()
            )));
        }
    }
    create_dir(&a.out_dir.join("curves"))?;

    let paths: Vec<&Path> = manifest.images.iter().map(|e| e.path.as_path()).collect();
    let ids = unique_ids(&paths);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::usage(format!("worker pool: {e}")))?;
    let scored: Vec<CliResult<Vec<SummaryRow>>> = pool.install(|| {
        manifest
            .images
            .par_iter()
            .zip(&ids)
            .map(|(entry, id)| evaluate_entry(&net, entry, id, a, &cfg, &metric_cfg))
            .collect()
    });
    let mut rows = Vec::new();
    for s in scored {
        rows.extend(s?);
    }

    let mut means = Vec::new();
    for &method in &a.method {
        let aucs: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method.name())
            .map(|r| r.auc)
            .collect();
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        println!(
            "{method} mean {} {mean:.6} over {} images",
            a.metric,
            aucs.len()
        );
        means.push(SummaryRow {
            image_id: "mean".into(),
            method: method.name().into(),
            metric: a.metric.name().into(),
            auc: mean,
        });
    }
    rows.extend(means.iter().cloned());
    let summary = a.out_dir.join("summary.csv");
    write_with(&summary, |buf| write_summary_csv(&rows, buf))?;
    println!("wrote {}", summary.display());

    write_run(
        &a.out_dir.join("run.json"),
        json!({
            "command": "evaluate",
            "version": env!("CARGO_PKG_VERSION"),
            "model": a.model.model.display().to_string(),
            "arch": a.model.arch.display().to_string(),
            "manifest": a.manifest.display().to_string(),
            "images": paths_json(&paths),
            "targets": manifest.images.iter().map(|e| e.target).collect::<Vec<_>>(),
            "methods": a.method.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "metric": a.metric.name(),
            "steps": metric_cfg.steps,
            "blur_sigma": metric_cfg.blur_sigma,
            "blur_half_width": metric_cfg.half_width(),
            "seed": a.tuning.seed,
            "config": config_json(&cfg),
            "out_dir": a.out_dir.display().to_string(),
            "means": means.iter().map(|m| json!({"method": m.method, "auc": m.auc})).collect::<Vec<_>>(),
        }),
    )
}

fn values(m: &AttributionMap) -> Vec<f64> {
    m.values.iter().map(|&v| v as f64).collect()
}

fn cmd_sanity(a: &SanityArgs) -> CliResult {
    let net = load(&a.model)?;
    net.select_target(a.target)?;
    let cfg = method_config(&a.tuning)?;
    let img = ModelImage::load(&a.image, net.preprocess())?;
    let reinit = reinitialized_classifier(&net, a.tuning.seed)?;
    let before = attribute(&net, &img.input, a.target, a.method, &cfg)?;
    let after = attribute(&reinit, &img.input, a.target, a.method, &cfg)?;
    let rho = spearman(&values(&before), &values(&after))?;

    create_dir(&a.out_dir)?;
    let base = format!(
        "{}_{}_t{}",
        crate::output::image_id(&a.image),
        a.method,
        a.target
    );
    let [raw0, png0] = write_map(&a.out_dir, &format!("{base}_original"), &before, None)?;
    let [raw1, png1] = write_map(
        &a.out_dir,
        &format!("{base}_reinit{}", a.tuning.seed),
        &after,
        None,
    )?;
    println!("spearman {rho:.6}");
    write_run(
        &a.out_dir.join(format!("{base}_sanity.run.json")),
        json!({
            "command": "sanity",
            "version": env!("CARGO_PKG_VERSION"),
            "model": a.model.model.display().to_string(),
            "arch": a.model.arch.display().to_string(),
            "images": [a.image.display().to_string()],
            "targets": [a.target],
            "method": a.method.name(),
            "seed": a.tuning.seed,
            "spearman": rho,
            "config": config_json(&cfg),
            "out_dir": a.out_dir.display().to_string(),
            "outputs": paths_json(&[&raw0, &png0, &raw1, &png1]),
        }),
    )
}

fn shape(s: &[usize]) -> String {
    s.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("×")
}

fn cmd_inspect(a: &ModelArgs) -> CliResult {
    let net = load(a)?;
    let logits = net.logits(&Tensor::zeros(net.input_shape()))?;
    if logits.shape() != [net.class_count()] {
        return Err(Failure::from(dmbp::Error::Dimension(format!(
            "network produces {:?}, expected {} logits",
            logits.shape(),
            net.class_count()
        ))));
    }
    println!("model      {}", net.model_id());
    println!("input      {}", shape(net.input_shape()));
    println!("classes    {}", net.class_count());
    println!("relu sites {}", net.site_count());
    println!("biases     {}", net.bias_count());
    println!("batchnorm  {} fused", net.fused_batchnorms());
    println!();
    println!(
        "{:<4} {:<22} {:<8} {:>12} {:>12} {:>10}",
        "#", "name", "kind", "in", "out", "params"
    );
    let rows = net.layer_table();
    for (i, r) in rows.iter().enumerate() {
        println!(
            "{:<4} {:<22} {:<8} {:>12} {:>12} {:>10}",
            i,
            r.name,
            r.kind,
            shape(&r.in_shape),
            shape(&r.out_shape),
            r.params
        );
    }
    println!();
    println!("parameters {}", net.param_count());
    println!("shapes     ok");
    Ok(())
}
