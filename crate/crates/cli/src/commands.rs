use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use marrow_core::config::{OutputConfig, RunConfig};
use marrow_core::dataset::{
    generate_synthetic_fixture, load_batch, read_index, sample_subset_with, scan_dataset, stratified_split,
    write_index, FixtureSpec, LoadOptions, SubsetMode,
};
use marrow_core::metrics::{accuracy_gap, evaluate, Evaluation};
use marrow_core::model::{build_classifier, checkpoint_config, load_checkpoint, save_checkpoint};
use marrow_core::reporting::{
    append_checkpoint, reference_results, render_report, write_manifest, write_reports, RunDir, SPLIT_RULE,
};
use marrow_core::training::{argmax, train_with_observer};
use marrow_core::{ClassTaxonomy, ClassifierModel, DatasetIndex, Error, MetricsReport, RunManifest, SampleRecord};

use crate::args::{Cli, Command, DatasetCommand, EvaluateArgs, PredictArgs, TaxonomyArg, TrainArgs};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Dataset(cmd) => dataset(cli, cmd),
        Command::Train(args) => train(cli, args),
        Command::Evaluate(args) => evaluate_cmd(cli, args),
        Command::Predict(args) => predict(args),
    }
}

fn taxonomy(arg: &TaxonomyArg) -> Result<ClassTaxonomy> {
    Ok(match &arg.taxonomy {
        Some(path) => ClassTaxonomy::from_file(path)?,
        None => ClassTaxonomy::bone_marrow(),
    })
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| Error::io(path, e).into())
}

fn print_summary(label: &str, index: &DatasetIndex, taxonomy: &ClassTaxonomy) -> Result<()> {
    println!("{label}: {} samples", index.len());
    for (code, n) in index.class_counts_by_code(taxonomy)? {
        println!("  {code}\t{n}");
    }
    Ok(())
}

fn dataset(cli: &Cli, cmd: &DatasetCommand) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cmd {
        DatasetCommand::Scan { root, out, taxonomy: t } => {
            let tax = taxonomy(t)?;
            let outcome = scan_dataset(&absolute(root)?, &tax)?;
            for w in &outcome.warnings {
                log::warn!("{w}");
            }
            write_index(out, &outcome.index, &tax)?;
            print_summary("scanned", &outcome.index, &tax)
        }
        DatasetCommand::Subset { index, fraction, stratified, out, taxonomy: t } => {
            let tax = taxonomy(t)?;
            let mode = if *stratified { SubsetMode::Stratified } else { SubsetMode::Uniform };
            let subset = sample_subset_with(&read_index(index, &tax)?, *fraction, seed, mode)?;
            write_index(out, &subset, &tax)?;
            print_summary("subset", &subset, &tax)
        }
        DatasetCommand::Split { index, train_fraction, out, taxonomy: t } => {
            let tax = taxonomy(t)?;
            let split = stratified_split(&read_index(index, &tax)?, *train_fraction, seed)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            write_index(&out.join("train.index"), &split.train, &tax)?;
            write_index(&out.join("val.index"), &split.val, &tax)?;
            print_summary("train", &split.train, &tax)?;
            print_summary("val", &split.val, &tax)
        }
        DatasetCommand::Fixture { per_class, classes, image_size, out, taxonomy: t } => {
            let tax = taxonomy(t)?;
            let codes: Vec<&str> = if classes == "all" {
                tax.codes().collect()
            } else {
                classes.split(',').map(str::trim).collect()
            };
            let spec = FixtureSpec::uniform(codes, *per_class);
            generate_synthetic_fixture(&spec, *image_size, seed, out, &tax)?;
            println!("wrote {} images to {}", spec.total(), out.display());
            Ok(())
        }
    }
}

/// Makes the input paths of a config absolute, relative to `base`.
fn resolve_inputs(config: &mut RunConfig, base: &Path) -> Result<()> {
    let fix = |p: &mut PathBuf| -> Result<()> {
        if p.is_relative() {
            *p = absolute(&base.join(&*p))?;
        }
        Ok(())
    };
    fix(&mut config.dataset.root)?;
    if let Some(t) = config.dataset.taxonomy.as_mut() {
        fix(t)?;
    }
    if let Some(w) = config.weights.pretrained.as_mut() {
        fix(w)?;
    }
    Ok(())
}

fn load_run_config(cli: &Cli, args: &TrainArgs) -> Result<RunConfig> {
    let mut config = match (&args.manifest, &cli.config) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            RunManifest::parse(&text, &path.display().to_string())?.config
        }
        (None, Some(path)) => {
            let loaded = RunConfig::load(path)?;
            for notice in &loaded.notices {
                log::info!("{notice}");
            }
            let mut config = loaded.config;
            let base = path.parent().unwrap_or(Path::new("."));
            resolve_inputs(&mut config, base)?;
            config
        }
        (None, None) => return Err(Error::invalid("train needs --config or --manifest").into()),
    };
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    if let Some(dir) = &cli.run_dir {
        config.output.run_dir = dir.clone();
    }
    config.validate()?;
    Ok(config)
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let config = load_run_config(cli, args)?;
    let tax = match &config.dataset.taxonomy {
        Some(path) => ClassTaxonomy::from_file(path)?,
        None => ClassTaxonomy::bone_marrow(),
    };
    if config.model.num_classes != tax.len() {
        return Err(Error::invalid(format!(
            "model.num_classes is {} but the taxonomy has {} classes",
            config.model.num_classes,
            tax.len()
        ))
        .into());
    }
    let run = RunDir::new(&config.output.run_dir);
    if run.manifest().exists() {
        return Err(Error::invalid(format!(
            "{} already holds a run; choose another --run-dir",
            run.root().display()
        ))
        .into());
    }
    let model = build_classifier(&config.model, &config.weights)?;

    let d = &config.dataset;
    let scanned = scan_dataset(&d.root, &tax)?;
    let mut warnings: Vec<String> = scanned.warnings.iter().map(ToString::to_string).collect();
    let subset = sample_subset_with(&scanned.index, d.subset_fraction, d.subset_seed, d.subset_mode)?;
    let split = stratified_split(&subset, d.train_fraction, d.split_seed)?;
    for &label in &split.singleton_classes {
        warnings.push(format!("class {} has a single sample; it is in the training split only", tax.code(label)?));
    }

    run.create()?;
    write_index(&run.train_index(), &split.train, &tax)?;
    write_index(&run.val_index(), &split.val, &tax)?;
    let manifest = RunManifest {
        run_id: uuid::Uuid::new_v4().to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        artifact_version: marrow_core::VERSION.to_string(),
        taxonomy_hash: tax.fingerprint(),
        split_rule: SPLIT_RULE.to_string(),
        train_samples: split.train.len(),
        val_samples: split.val.len(),
        train_index: "train.index".into(),
        val_index: "val.index".into(),
        checkpoints: Vec::new(),
        config: config.clone(),
    };
    write_manifest(run.root(), &manifest)?;
    run.append_warnings(&warnings)?;
    log::info!(
        "training on {} samples, validating on {} ({} epochs)",
        split.train.len(),
        split.val.len(),
        config.training.epochs
    );

    let (model, _) = train_with_observer(model, &split.train, &split.val, &config.training, |record, model| {
        let rel = Path::new("checkpoints").join(format!("epoch_{}", record.epoch));
        save_checkpoint(model, &run.root().join(&rel))?;
        append_checkpoint(run.root(), &rel)?;
        run.append_history(record)?;
        log::info!(
            "epoch {}: loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4}",
            record.epoch,
            record.train_loss,
            record.train_accuracy,
            record.val_loss,
            record.val_accuracy
        );
        Ok(())
    })?;

    let out = &config.output;
    let evals = [
        evaluate(&model, &split.train, "Training", out.averaging, out.eval_batch_size)?,
        evaluate(&model, &split.val, "Validation", out.averaging, out.eval_batch_size)?,
    ];
    finish_reports(&run, &evals.map(|e| (e, tax.clone())))
}

fn warning_lines(eval: &Evaluation, tax: &ClassTaxonomy) -> Vec<String> {
    eval.warnings
        .iter()
        .map(|w| {
            let line = w.to_string();
            // Replace the leading "class <n>" with the class code.
            match line.split_once(':') {
                Some((head, rest)) => {
                    let code = head
                        .strip_prefix("class ")
                        .and_then(|n| n.parse::<usize>().ok())
                        .and_then(|n| tax.code(n).ok());
                    match code {
                        Some(code) => format!("{}: class {code}:{rest}", eval.report.set_name),
                        None => format!("{}: {line}", eval.report.set_name),
                    }
                }
                None => format!("{}: {line}", eval.report.set_name),
            }
        })
        .collect()
}

fn finish_reports(run: &RunDir, evals: &[(Evaluation, ClassTaxonomy)]) -> Result<()> {
    let reports: Vec<MetricsReport> = evals.iter().map(|(e, _)| e.report.clone()).collect();
    let warnings: Vec<String> = evals.iter().flat_map(|(e, t)| warning_lines(e, t)).collect();
    run.append_warnings(&warnings)?;
    emit_reports(run, &reports)
}

fn emit_reports(run: &RunDir, reports: &[MetricsReport]) -> Result<()> {
    write_reports(run.root(), reports)?;
    print!("{}", render_report(reports)?);
    let find = |name: &str| reports.iter().find(|r| r.set_name == name);
    if let (Some(t), Some(v)) = (find("Training"), find("Validation")) {
        println!("train/val accuracy gap: {:.2} pp", accuracy_gap(t, v) * 100.0);
    }
    Ok(())
}

fn default_set_name(path: &Path) -> String {
    match path.file_name().and_then(|n| n.to_str()) {
        Some("train.index") => "Training".into(),
        Some("val.index") => "Validation".into(),
        _ => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
    }
}

/// Loads a checkpoint whose class count must match `tax`.
fn load_model(path: &Path, tax: &ClassTaxonomy) -> Result<ClassifierModel> {
    let config = checkpoint_config(path)?;
    if config.num_classes != tax.len() {
        return Err(Error::Checkpoint(format!(
            "{} has {} output classes but the taxonomy has {}",
            path.display(),
            config.num_classes,
            tax.len()
        ))
        .into());
    }
    Ok(load_checkpoint(path, &config)?)
}

fn evaluate_cmd(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let run = RunDir::new(cli.run_dir.clone().unwrap_or_else(|| OutputConfig::default().run_dir));
    if args.reference {
        return emit_reports(&run, &reference_results());
    }
    if args.sets.len() > args.indexes.len() {
        return Err(Error::invalid("more --set labels than --index files").into());
    }
    let tax = taxonomy(&args.taxonomy)?;
    let checkpoint = args.checkpoint.as_deref().context("--checkpoint is required")?;
    let model = load_model(checkpoint, &tax)?;
    let mut evals = Vec::with_capacity(args.indexes.len());
    for (i, path) in args.indexes.iter().enumerate() {
        let name = args.sets.get(i).cloned().unwrap_or_else(|| default_set_name(path));
        let index = read_index(path, &tax)?;
        let eval = evaluate(&model, &index, &name, Default::default(), args.batch_size)?;
        evals.push((eval, tax.clone()));
    }
    std::fs::create_dir_all(run.root()).map_err(|e| Error::io(run.root(), e))?;
    finish_reports(&run, &evals)
}

fn predict(args: &PredictArgs) -> Result<()> {
    let tax = taxonomy(&args.taxonomy)?;
    let model = load_model(&args.checkpoint, &tax)?;
    let opts = LoadOptions {
        input_size: model.config().input_size,
        ..LoadOptions::default()
    };
    let mut failed: Vec<&Path> = Vec::new();
    for path in &args.images {
        let record = SampleRecord {
            id: path.display().to_string(),
            path: path.clone(),
            label: 0,
        };
        let outcome = load_batch(std::slice::from_ref(&record), &opts).and_then(|b| model.predict_batch(&b));
        match outcome {
            Ok(probs) => {
                let row = probs.row(0);
                let top = argmax(row.iter().copied());
                println!("{}\t{}\t{:.4}", path.display(), tax.code(top)?, row[top]);
            }
            Err(e) => {
                failed.push(path);
                eprintln!("error[{}]: {}: {e}", e.kind().as_str(), path.display());
            }
        }
    }
    if let Some(first) = failed.first() {
        return Err(Error::Image {
            path: first.to_path_buf(),
            message: format!("{} of {} images could not be classified", failed.len(), args.images.len()),
        }
        .into());
    }
    Ok(())
}
