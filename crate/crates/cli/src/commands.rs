use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dcp::datasets::{gen_blobs, gen_two_moons_shift, load_embeddings, save_embeddings, LabeledDataset, ShiftSpec};
use dcp::pseudo_label::ThresholdState;
use dcp::trainer::{evaluate, metrics_csv, Checkpoint, EvalReport, Seeds, TrainConfig, Trainer};
use dcp::verification::{gradcheck_csv, run_gradcheck, LossKind};
use serde_json::json;

use crate::error::{write_output, CliError};
use crate::manifest::{
    file_sha256, read_input, sha256_hex, spec_hash, DataManifest, DatasetFingerprint, FileFingerprint, RunManifest,
    RunOutputs, DATA_MANIFEST, RUN_MANIFEST, TOOL_VERSION,
};
use crate::{DataKind, EvalArgs, GenDataArgs, GradcheckArgs, ScheduleArgs, TrainArgs};

type CmdResult = Result<u8, CliError>;

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Failed(format!("cannot create {}: {e}", dir.display())))
}

fn load_dataset(path: &Path) -> Result<LabeledDataset, CliError> {
    if !path.is_file() {
        return Err(CliError::Missing(format!("input file not found: {}", path.display())));
    }
    load_embeddings(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

pub fn gen_data(args: &GenDataArgs) -> CmdResult {
    let seed = args.common.seed.unwrap_or(0);
    let (source, target, kind, spec) = match args.kind {
        DataKind::Blobs => {
            let spec = ShiftSpec {
                classes: args.k,
                dim: args.dim,
                n_per_class: args.n_per_class,
                rotation: args.rotation,
                translation: args.translation.clone(),
                noise_sigma: args.sigma,
                seed,
            };
            let (s, t) = gen_blobs(&spec)?;
            let hash = spec_hash(&spec);
            (s, t, "blobs", (serde_json::to_value(&spec).expect("spec serializes"), hash))
        }
        DataKind::Moons => {
            let (s, t) = gen_two_moons_shift(args.n_per_class, args.rotation, args.sigma, seed)?;
            let spec = json!({
                "n_per_class": args.n_per_class,
                "rotation": args.rotation,
                "noise_sigma": args.sigma,
                "seed": seed,
            });
            let hash = sha256_hex(spec.to_string().as_bytes());
            (s, t, "moons", (spec, hash))
        }
    };
    let dir = args.common.out_dir();
    ensure_dir(&dir)?;
    let mut files = Vec::new();
    for (ds, name) in [(&source, "source.csv"), (&target, "target.csv")] {
        let path = dir.join(name);
        save_embeddings(ds, &path)?;
        files.push(FileFingerprint {
            sha256: file_sha256(&path)?,
            path,
        });
    }
    let manifest = DataManifest {
        tool_version: TOOL_VERSION.into(),
        kind: kind.into(),
        seed,
        spec: spec.0,
        spec_sha256: spec.1,
        files,
    };
    let path = dir.join(DATA_MANIFEST);
    write_output(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
    for f in &manifest.files {
        println!("wrote {}", f.path.display());
    }
    println!("wrote {}", path.display());
    Ok(0)
}

fn parse_config(path: &Path) -> Result<TrainConfig, CliError> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Usage(format!("{} is not UTF-8", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    let config: TrainConfig = parsed.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

fn apply_overrides(mut config: TrainConfig, args: &TrainArgs) -> TrainConfig {
    if let Some(seed) = args.common.seed {
        config.seeds = Seeds::from_base(seed);
    }
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if args.no_pseudo {
        config.pseudo_labels = false;
    }
    if let Some(n) = args.iters {
        config.iterations = n;
    }
    if let Some(lr) = args.lr {
        config.lr = lr;
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    config
}

pub fn train(args: &TrainArgs) -> CmdResult {
    let (config, source_path, target_path, out_dir) = match &args.from_manifest {
        Some(path) => {
            let m = RunManifest::load(path)?;
            m.verify_inputs()?;
            let dir = match &args.common.out_dir {
                Some(d) => d.clone(),
                None => m.outputs.metrics.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
            };
            (apply_overrides(m.config, args), m.source.path, m.target.path, dir)
        }
        None => {
            let base = match &args.config {
                Some(p) => parse_config(p)?,
                None => TrainConfig::default(),
            };
            let source = args.source.clone().expect("required by clap");
            let target = args.target.clone().expect("required by clap");
            (apply_overrides(base, args), source, target, args.common.out_dir())
        }
    };
    config.validate()?;
    let source = load_dataset(&source_path)?;
    let target = load_dataset(&target_path)?;

    let mut trainer = Trainer::new(config.clone(), &source, &target)?;
    let history = trainer.run()?;
    let state = trainer.into_state();

    ensure_dir(&out_dir)?;
    let outputs = RunOutputs {
        checkpoint: out_dir.join("checkpoint.json"),
        metrics: out_dir.join("metrics.csv"),
    };
    write_output(&outputs.checkpoint, Checkpoint::new(state).to_json()? + "\n")?;
    write_output(&outputs.metrics, metrics_csv(&history)?)?;
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.into(),
        config,
        source: DatasetFingerprint::of(&source_path, source.len(), source.dim())?,
        target: DatasetFingerprint::of(&target_path, target.len(), target.dim())?,
        outputs,
    };
    let manifest_path = out_dir.join(RUN_MANIFEST);
    write_output(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;

    let last = history.last();
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    println!(
        "trained {} iterations; source_acc {} target_acc {}",
        history.len(),
        fmt(last.and_then(|r| r.source_acc)),
        fmt(last.and_then(|r| r.target_acc))
    );
    println!("wrote {}", manifest.outputs.checkpoint.display());
    println!("wrote {}", manifest.outputs.metrics.display());
    println!("wrote {}", manifest_path.display());
    Ok(0)
}

fn report_table(report: &EvalReport) -> String {
    let mut out = String::from("class,count,correct,accuracy\n");
    for c in &report.per_class {
        let acc = c.accuracy.map(|a| format!("{a:.4}")).unwrap_or_default();
        writeln!(out, "{},{},{},{acc}", c.class, c.count, c.correct).expect("string write");
    }
    out
}

pub fn eval(args: &EvalArgs) -> CmdResult {
    if !args.checkpoint.is_file() {
        return Err(CliError::Missing(format!("checkpoint not found: {}", args.checkpoint.display())));
    }
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let data = load_dataset(&args.data)?;
    let report = evaluate(&checkpoint.state, &data)?;
    let table = report_table(&report);

    println!("dataset: {} ({} samples)", data.name(), data.len());
    println!("accuracy: {:.4}", report.accuracy);
    print!("{table}");

    let dir = args.common.out_dir();
    ensure_dir(&dir)?;
    let csv_path = dir.join("eval_report.csv");
    let json_path = dir.join("eval_report.json");
    write_output(&csv_path, &table)?;
    let doc = json!({
        "checkpoint": args.checkpoint,
        "data": args.data,
        "samples": data.len(),
        "report": report,
    });
    write_output(&json_path, serde_json::to_string_pretty(&doc).expect("report serializes") + "\n")?;
    Ok(0)
}

pub fn gradcheck(args: &GradcheckArgs) -> CmdResult {
    let inject = match &args.inject_sign_flip {
        Some(name) => Some(LossKind::parse(name).ok_or_else(|| CliError::Usage(format!("unknown loss {name:?}")))?),
        None => None,
    };
    let rows = run_gradcheck(args.instances, args.common.seed.unwrap_or(0), inject)?;
    let csv = gradcheck_csv(&rows);
    print!("{csv}");
    if let Some(dir) = &args.common.out_dir {
        ensure_dir(dir)?;
        write_output(&dir.join("gradcheck.csv"), &csv)?;
    }
    Ok(if rows.iter().all(|r| r.passed) { 0 } else { 1 })
}

pub fn schedule(args: &ScheduleArgs) -> CmdResult {
    let mut csv = String::from("T,tau_adv,tau_clu\n");
    for t in 0..=args.t_max {
        let s = ThresholdState::at(t);
        writeln!(csv, "{t},{:.6},{:.6}", s.tau_adv, s.tau_clu).expect("string write");
    }
    print!("{csv}");
    if let Some(dir) = &args.common.out_dir {
        ensure_dir(dir)?;
        write_output(&dir.join("schedule.csv"), &csv)?;
    }
    Ok(0)
}
