//! Subcommand implementations. Every command resolves its configuration
//! (file, then --set pairs, then dedicated flags), rejects unknown keys,
//! writes its artifacts into the output directory, and echoes the fully
//! resolved key=value map next to them.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use uth::dataset::{
    load_codes, load_descriptors, load_ground_truth, save_codes, save_descriptors,
    save_ground_truth, DescriptorFormat,
};
use uth::eval::{l2_search, linear_search, mean_average_precision, recall_at_r, EvalReport};
use uth::hashers::{encode_baseline, fit_baseline_with, BaselineMethod, BaselineOptions};
use uth::model_file::{load_model, save_model, SavedModel};
use uth::rbm::RbmTrainConfig;
use uth::srbm::train_stack;
use uth::synthetic::{load_pairs, make_clustered, make_pairs, save_pairs, ClusteredConfig};
use uth::triplet::{
    build_distance_table, finetune, match_distance_histogram, FinetuneConfig, SamplingMode,
    TripletSamplerConfig,
};
use uth::{BinaryCodeSet, DescriptorDataset, UthError};

use crate::config::RunConfig;
use crate::{CliError, Command, CommonArgs};

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Ingest {
            common,
            data,
            format,
            normalize,
        } => cmd_ingest(common, data, format, normalize),
        Command::Train {
            common,
            data,
            layer_sizes,
            preset,
            bits,
            finetune,
            seed,
        } => cmd_train(common, data, layer_sizes, preset, bits, finetune, seed),
        Command::Encode {
            common,
            model,
            data,
        } => cmd_encode(common, model, data),
        Command::FitBaseline {
            common,
            data,
            method,
            bits,
            seed,
        } => cmd_fit_baseline(common, data, method, bits, seed),
        Command::Evaluate {
            common,
            db,
            queries,
            ground_truth,
            r_list,
            scheme,
            exclude_self,
        } => cmd_evaluate(common, db, queries, ground_truth, r_list, scheme, exclude_self),
        Command::DistHist {
            common,
            data,
            matches,
            nonmatches,
            bins,
        } => cmd_dist_hist(common, data, matches, nonmatches, bins),
        Command::MakeSynthetic {
            common,
            clusters,
            points_per_cluster,
            dim,
            cluster_std,
            seed,
            max_pairs,
        } => cmd_make_synthetic(
            common,
            clusters,
            points_per_cluster,
            dim,
            cluster_std,
            seed,
            max_pairs,
        ),
    }
}

/// Config file, then --set pairs, then the shared flags.
fn base_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for pair in &common.set {
        cfg.set_pair(pair)?;
    }
    if let Some(out) = &common.out {
        cfg.set("output_dir", out.display().to_string());
    }
    if let Some(threads) = common.threads {
        cfg.set("threads", threads.to_string());
    }
    Ok(cfg)
}

fn set_flag<T: ToString>(cfg: &mut RunConfig, key: &str, value: Option<T>) {
    if let Some(v) = value {
        cfg.set(key, v.to_string());
    }
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.path("output_dir")?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Lib(UthError::Io(e)))?;
    Ok(dir)
}

fn init_threads(cfg: &RunConfig) -> Result<(), CliError> {
    if let Some(text) = cfg.get("threads") {
        let n: usize = text
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                CliError::Usage(format!("threads must be a positive integer, got '{text}'"))
            })?;
        // Only fails if a pool already exists, which cannot matter for a
        // single CLI invocation.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|e| CliError::Lib(UthError::Io(e)))
}

// ---------------------------------------------------------------------

const INGEST_KEYS: &[&str] = &["data", "format", "normalize", "output_dir", "threads"];

fn cmd_ingest(
    common: CommonArgs,
    data: Option<PathBuf>,
    format: Option<String>,
    normalize: bool,
) -> Result<(), CliError> {
    let mut cfg = base_config(&common)?;
    set_flag(&mut cfg, "data", data.map(|p| p.display().to_string()));
    set_flag(&mut cfg, "format", format);
    if normalize {
        cfg.set("normalize", "true");
    }
    cfg.check_keys(INGEST_KEYS)?;
    init_threads(&cfg)?;

    let input = cfg.path("data")?;
    let format = match cfg.get("format") {
        Some("binary") => DescriptorFormat::Binary,
        Some("csv") => DescriptorFormat::Csv,
        Some(other) => {
            return Err(CliError::Usage(format!(
                "format must be binary or csv, got '{other}'"
            )))
        }
        None => {
            if input.extension().is_some_and(|e| e == "csv") {
                DescriptorFormat::Csv
            } else {
                DescriptorFormat::Binary
            }
        }
    };
    cfg.set(
        "format",
        match format {
            DescriptorFormat::Binary => "binary",
            DescriptorFormat::Csv => "csv",
        },
    );
    let normalize = cfg.bool_or("normalize", false)?;
    cfg.set("normalize", normalize.to_string());

    let mut ds = load_descriptors(&input, format)?;
    let dir = prepare_out(&cfg)?;
    if normalize {
        ds = ds.normalize_minmax()?;
        let meta = ds.norm_meta().expect("normalization records per-dim ranges");
        let mut sidecar = String::from("dim,min,max\n");
        for (d, (lo, hi)) in meta.iter().enumerate() {
            sidecar.push_str(&format!("{d},{lo},{hi}\n"));
        }
        write_file(&dir.join("descriptors.norm.csv"), &sidecar)?;
    }
    save_descriptors(&ds, &dir.join("descriptors.uthd"))?;
    cfg.write_echo(&dir)?;
    println!(
        "ingested {} descriptors of dimension {} -> {}",
        ds.count(),
        ds.dim(),
        dir.join("descriptors.uthd").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------

const TRAIN_KEYS: &[&str] = &[
    "data",
    "output_dir",
    "threads",
    "seed",
    "layer_sizes",
    "preset",
    "bits",
    "rbm.learning_rate",
    "rbm.momentum",
    "rbm.epochs",
    "rbm.batch_size",
    "rbm.cd_steps",
    "finetune.mode",
    "finetune.margin",
    "finetune.learning_rate",
    "finetune.momentum",
    "finetune.epochs",
    "finetune.batch_size",
    "finetune.top_layer_only",
    "sampler.t_p",
    "sampler.t_n",
    "sampler.tolerance",
    "sampler.triplets_per_epoch",
];

/// Stack shapes for the published bitrates.
fn preset_layer_sizes(name: &str, cfg: &RunConfig) -> Result<Vec<usize>, CliError> {
    let bits = if name == "paper" {
        cfg.require("bits").map_err(|_| {
            CliError::Usage("preset 'paper' needs bits=256|128|64|32 to pick a row".into())
        })?;
        cfg.usize_or("bits", 0)?
    } else if let Some(rest) = name.strip_prefix("paper-") {
        rest.parse().map_err(|_| {
            CliError::Usage(format!("unknown preset '{name}'"))
        })?
    } else {
        return Err(CliError::Usage(format!(
            "unknown preset '{name}' (available: paper, paper-256, paper-128, paper-64, paper-32)"
        )));
    };
    match bits {
        256 => Ok(vec![4096, 2048, 256]),
        128 => Ok(vec![4096, 2048, 128]),
        64 => Ok(vec![4096, 1024, 64]),
        32 => Ok(vec![4096, 2048, 32]),
        other => Err(CliError::Usage(format!(
            "no preset for {other} bits (available: 256, 128, 64, 32)"
        ))),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum FinetuneMode {
    Off,
    On(SamplingMode),
}

fn parse_finetune_mode(text: &str) -> Result<FinetuneMode, CliError> {
    match text {
        "off" => Ok(FinetuneMode::Off),
        "threshold" => Ok(FinetuneMode::On(SamplingMode::Threshold)),
        "uniform" => Ok(FinetuneMode::On(SamplingMode::Uniform)),
        other => Err(CliError::Usage(format!(
            "finetune.mode must be off, threshold, or uniform, got '{other}'"
        ))),
    }
}

fn cmd_train(
    common: CommonArgs,
    data: Option<PathBuf>,
    layer_sizes: Option<String>,
    preset: Option<String>,
    bits: Option<usize>,
    finetune_mode: Option<String>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg = base_config(&common)?;
    set_flag(&mut cfg, "data", data.map(|p| p.display().to_string()));
    set_flag(&mut cfg, "layer_sizes", layer_sizes);
    set_flag(&mut cfg, "preset", preset);
    set_flag(&mut cfg, "bits", bits);
    set_flag(&mut cfg, "finetune.mode", finetune_mode);
    set_flag(&mut cfg, "seed", seed);
    cfg.check_keys(TRAIN_KEYS)?;
    init_threads(&cfg)?;

    let layer_sizes = match (cfg.get("layer_sizes").is_some(), cfg.get("preset")) {
        (true, Some(_)) => {
            return Err(CliError::Usage(
                "layer_sizes and preset are mutually exclusive".into(),
            ))
        }
        (true, None) => cfg.usize_list("layer_sizes")?,
        (false, Some(name)) => preset_layer_sizes(name, &cfg)?,
        (false, None) => {
            return Err(CliError::Usage(
                "set layer_sizes=... or preset=paper-<bits>".into(),
            ))
        }
    };
    let Some(&code_bits) = layer_sizes.last() else {
        return Err(CliError::Usage("layer_sizes must not be empty".into()));
    };
    if cfg.get("bits").is_some() && cfg.usize_or("bits", 0)? != code_bits {
        return Err(CliError::Usage(format!(
            "bits={} contradicts the final layer size {code_bits}",
            cfg.usize_or("bits", 0)?
        )));
    }
    let sizes_text = layer_sizes
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",");
    cfg.set("layer_sizes", sizes_text);
    cfg.set("bits", code_bits.to_string());

    let seed = cfg.u64_or("seed", 0)?;
    cfg.set("seed", seed.to_string());
    let rd = RbmTrainConfig::default();
    let rcfg = RbmTrainConfig {
        learning_rate: cfg.f64_or("rbm.learning_rate", rd.learning_rate)?,
        momentum: cfg.f64_or("rbm.momentum", rd.momentum)?,
        epochs: cfg.usize_or("rbm.epochs", rd.epochs)?,
        batch_size: cfg.usize_or("rbm.batch_size", rd.batch_size)?,
        cd_steps: cfg.usize_or("rbm.cd_steps", rd.cd_steps)?,
        seed,
    };
    cfg.set("rbm.learning_rate", rcfg.learning_rate.to_string());
    cfg.set("rbm.momentum", rcfg.momentum.to_string());
    cfg.set("rbm.epochs", rcfg.epochs.to_string());
    cfg.set("rbm.batch_size", rcfg.batch_size.to_string());
    cfg.set("rbm.cd_steps", rcfg.cd_steps.to_string());
    let mode = parse_finetune_mode(cfg.get("finetune.mode").unwrap_or("off"))?;
    cfg.set(
        "finetune.mode",
        match mode {
            FinetuneMode::Off => "off",
            FinetuneMode::On(SamplingMode::Threshold) => "threshold",
            FinetuneMode::On(SamplingMode::Uniform) => "uniform",
        },
    );

    let ds = load_descriptors(&cfg.path("data")?, DescriptorFormat::Binary)?;
    let dir = prepare_out(&cfg)?;
    let (stack, rbm_traces) = train_stack(&ds, &layer_sizes, &rcfg)?;
    let mut trace_csv = String::from("layer,epoch,reconstruction_error\n");
    for (layer, trace) in rbm_traces.iter().enumerate() {
        for (epoch, err) in trace.iter().enumerate() {
            trace_csv.push_str(&format!("{layer},{epoch},{err}\n"));
        }
    }
    write_file(&dir.join("rbm_trace.csv"), &trace_csv)?;

    let stack = if let FinetuneMode::On(sampling) = mode {
        let fd = FinetuneConfig::default();
        let fcfg = FinetuneConfig {
            margin: cfg.f64_or("finetune.margin", fd.margin)?,
            learning_rate: cfg.f64_or("finetune.learning_rate", fd.learning_rate)?,
            momentum: cfg.f64_or("finetune.momentum", fd.momentum)?,
            epochs: cfg.usize_or("finetune.epochs", fd.epochs)?,
            batch_size: cfg.usize_or("finetune.batch_size", fd.batch_size)?,
            seed,
            top_layer_only: cfg.bool_or("finetune.top_layer_only", fd.top_layer_only)?,
        };
        cfg.set("finetune.margin", fcfg.margin.to_string());
        cfg.set("finetune.learning_rate", fcfg.learning_rate.to_string());
        cfg.set("finetune.momentum", fcfg.momentum.to_string());
        cfg.set("finetune.epochs", fcfg.epochs.to_string());
        cfg.set("finetune.batch_size", fcfg.batch_size.to_string());
        cfg.set("finetune.top_layer_only", fcfg.top_layer_only.to_string());

        let table = build_distance_table(&ds)?;
        let tpe = cfg.usize_or("sampler.triplets_per_epoch", 10_000)?;
        let explicit = ["sampler.t_p", "sampler.t_n", "sampler.tolerance"]
            .iter()
            .filter(|k| cfg.get(k).is_some())
            .count();
        let scfg = match explicit {
            0 => TripletSamplerConfig::from_table(&table, tpe)?,
            3 => TripletSamplerConfig {
                t_p: cfg.f64_or("sampler.t_p", 0.0)?,
                t_n: cfg.f64_or("sampler.t_n", 0.0)?,
                tolerance: cfg.f64_or("sampler.tolerance", 0.0)?,
                triplets_per_epoch: tpe,
            },
            _ => {
                return Err(CliError::Usage(
                    "set all of sampler.t_p, sampler.t_n, sampler.tolerance or none (derived from the data)"
                        .into(),
                ))
            }
        };
        cfg.set("sampler.t_p", scfg.t_p.to_string());
        cfg.set("sampler.t_n", scfg.t_n.to_string());
        cfg.set("sampler.tolerance", scfg.tolerance.to_string());
        cfg.set("sampler.triplets_per_epoch", scfg.triplets_per_epoch.to_string());

        // The threshold sampler draws from the distance windows only;
        // the uniform sampler needs the full table.
        let (tuned, loss_trace) = match sampling {
            SamplingMode::Threshold => {
                let windowed = table.windowed(&scfg)?;
                finetune(&stack, &ds, &windowed, &scfg, &fcfg, sampling)?
            }
            SamplingMode::Uniform => finetune(&stack, &ds, &table, &scfg, &fcfg, sampling)?,
        };
        let mut loss_csv = String::from("epoch,mean_loss\n");
        for (epoch, loss) in loss_trace.iter().enumerate() {
            loss_csv.push_str(&format!("{epoch},{loss}\n"));
        }
        write_file(&dir.join("finetune_trace.csv"), &loss_csv)?;
        tuned
    } else {
        stack
    };

    save_model(&SavedModel::Srbm(stack), &dir.join("model.uthm"))?;
    cfg.write_echo(&dir)?;
    println!(
        "trained {}-bit stack -> {}",
        code_bits,
        dir.join("model.uthm").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------

const ENCODE_KEYS: &[&str] = &["model", "data", "output_dir", "threads"];

fn cmd_encode(
    common: CommonArgs,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = base_config(&common)?;
    set_flag(&mut cfg, "model", model.map(|p| p.display().to_string()));
    set_flag(&mut cfg, "data", data.map(|p| p.display().to_string()));
    cfg.check_keys(ENCODE_KEYS)?;
    init_threads(&cfg)?;

    let model = load_model(&cfg.path("model")?)?;
    let ds = load_descriptors(&cfg.path("data")?, DescriptorFormat::Binary)?;
    let codes = match &model {
        SavedModel::Srbm(stack) => stack.encode_binary(&ds)?,
        SavedModel::Baseline(hasher) => encode_baseline(hasher, &ds)?,
    };
    let dir = prepare_out(&cfg)?;
    save_codes(&codes, &dir.join("codes.uthb"))?;
    cfg.write_echo(&dir)?;
    println!(
        "encoded {} descriptors into {}-bit codes -> {}",
        codes.count(),
        codes.n_bits(),
        dir.join("codes.uthb").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------

const FIT_BASELINE_KEYS: &[&str] = &[
    "data",
    "output_dir",
    "threads",
    "seed",
    "bits",
    "baseline.method",
    "baseline.itq_iterations",
    "baseline.sklsh_sample_pairs",
    "baseline.bpbc_shape",
];

fn cmd_fit_baseline(
    common: CommonArgs,
    data: Option<PathBuf>,
    method: Option<String>,
    bits: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg = base_config(&common)?;
    set_flag(&mut cfg, "data", data.map(|p| p.display().to_string()));
    set_flag(&mut cfg, "baseline.method", method);
    set_flag(&mut cfg, "bits", bits);
    set_flag(&mut cfg, "seed", seed);
    cfg.check_keys(FIT_BASELINE_KEYS)?;
    init_threads(&cfg)?;

    let method: BaselineMethod = cfg
        .require("baseline.method")?
        .parse()
        .map_err(|e: UthError| CliError::Usage(e.to_string()))?;
    cfg.require("bits")?;
    let bits = cfg.usize_or("bits", 0)?;
    let seed = cfg.u64_or("seed", 0)?;
    cfg.set("seed", seed.to_string());
    let od = BaselineOptions::default();
    let opts = BaselineOptions {
        itq_iterations: cfg.usize_or("baseline.itq_iterations", od.itq_iterations)?,
        sklsh_sample_pairs: cfg.usize_or("baseline.sklsh_sample_pairs", od.sklsh_sample_pairs)?,
        bpbc_shape: match cfg.get("baseline.bpbc_shape") {
            None => None,
            Some(text) => Some(parse_shape(text)?),
        },
    };
    if method == BaselineMethod::Itq {
        cfg.set("baseline.itq_iterations", opts.itq_iterations.to_string());
    }
    if method == BaselineMethod::Sklsh {
        cfg.set(
            "baseline.sklsh_sample_pairs",
            opts.sklsh_sample_pairs.to_string(),
        );
    }

    let ds = load_descriptors(&cfg.path("data")?, DescriptorFormat::Binary)?;
    let model = fit_baseline_with(method, &ds, bits, seed, &opts)?;
    let dir = prepare_out(&cfg)?;
    save_model(&SavedModel::Baseline(model), &dir.join("model.uthm"))?;
    cfg.write_echo(&dir)?;
    println!(
        "fitted {}-bit {} model -> {}",
        bits,
        method,
        dir.join("model.uthm").display()
    );
    Ok(())
}

fn parse_shape(text: &str) -> Result<(usize, usize), CliError> {
    let bad = || {
        CliError::Usage(format!(
            "baseline.bpbc_shape must look like 8x512, got '{text}'"
        ))
    };
    let (a, b) = text.split_once('x').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

// ---------------------------------------------------------------------

const EVALUATE_KEYS: &[&str] = &[
    "db",
    "queries",
    "ground_truth",
    "output_dir",
    "threads",
    "eval.r_list",
    "eval.scheme",
    "eval.exclude_self",
];

enum EvalData {
    Codes(BinaryCodeSet),
    Descriptors(DescriptorDataset),
}

impl EvalData {
    fn ids(&self) -> &[String] {
        match self {
            EvalData::Codes(c) => c.ids(),
            EvalData::Descriptors(d) => d.ids(),
        }
    }
}

/// Loads a code or descriptor file, picked by its magic bytes.
fn load_eval_file(path: &Path) -> Result<EvalData, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Lib(UthError::Io(e)))?;
    match bytes.get(..4) {
        Some(b"UTHB") => Ok(EvalData::Codes(load_codes(path)?)),
        Some(b"UTHD") => Ok(EvalData::Descriptors(load_descriptors(
            path,
            DescriptorFormat::Binary,
        )?)),
        _ => Err(CliError::Lib(UthError::Format {
            offset: 0,
            message: format!(
                "{} is neither a code nor a descriptor file",
                path.display()
            ),
        })),
    }
}

fn cmd_evaluate(
    common: CommonArgs,
    db: Option<PathBuf>,
    queries: Option<PathBuf>,
    ground_truth: Option<PathBuf>,
    r_list: Option<String>,
    scheme: Option<String>,
    exclude_self: bool,
) -> Result<(), CliError> {
    let mut cfg = base_config(&common)?;
    set_flag(&mut cfg, "db", db.map(|p| p.display().to_string()));
    set_flag(&mut cfg, "queries", queries.map(|p| p.display().to_string()));
    set_flag(
        &mut cfg,
        "ground_truth",
        ground_truth.map(|p| p.display().to_string()),
    );
    set_flag(&mut cfg, "eval.r_list", r_list);
    set_flag(&mut cfg, "eval.scheme", scheme);
    if exclude_self {
        cfg.set("eval.exclude_self", "true");
    }
    cfg.check_keys(EVALUATE_KEYS)?;
    init_threads(&cfg)?;

    let db = load_eval_file(&cfg.path("db")?)?;
    let queries = load_eval_file(&cfg.path("queries")?)?;
    let gt = load_ground_truth(&cfg.path("ground_truth")?)?;
    let exclude_self = cfg.bool_or("eval.exclude_self", false)?;
    cfg.set("eval.exclude_self", exclude_self.to_string());
    if cfg.get("eval.r_list").is_none() {
        cfg.set("eval.r_list", "10,100");
    }
    let r_list = cfg.usize_list("eval.r_list")?;

    let ids: HashSet<&str> = db
        .ids()
        .iter()
        .chain(queries.ids().iter())
        .map(String::as_str)
        .collect();
    gt.validate_against(&ids)?;

    // mAP is defined over the full ranking, so rank the whole database
    // once and read recall prefixes out of it.
    let (kind, bits, rankings) = match (&db, &queries) {
        (EvalData::Codes(d), EvalData::Codes(q)) => {
            ("hamming", d.n_bits(), linear_search(d, q, d.count().max(1), exclude_self)?)
        }
        (EvalData::Descriptors(d), EvalData::Descriptors(q)) => {
            ("l2", 0, l2_search(d, q, d.count().max(1), exclude_self)?)
        }
        _ => {
            return Err(CliError::Usage(
                "db and queries must both be code files or both be descriptor files".into(),
            ))
        }
    };
    let scheme = cfg.get("eval.scheme").unwrap_or(kind).to_string();
    cfg.set("eval.scheme", scheme.clone());

    let mut report = EvalReport::new();
    for &r in &r_list {
        report.push_recall(&scheme, bits, r, recall_at_r(&rankings, &gt, r)?)?;
    }
    report.push_map(&scheme, bits, mean_average_precision(&rankings, &gt)?)?;
    let dir = prepare_out(&cfg)?;
    write_file(&dir.join("report.csv"), &report.to_csv())?;
    cfg.write_echo(&dir)?;
    print!("{}", report.to_csv());
    Ok(())
}

// ---------------------------------------------------------------------

const DIST_HIST_KEYS: &[&str] = &[
    "data",
    "matches",
    "nonmatches",
    "hist.bins",
    "output_dir",
    "threads",
];

fn cmd_dist_hist(
    common: CommonArgs,
    data: Option<PathBuf>,
    matches: Option<PathBuf>,
    nonmatches: Option<PathBuf>,
    bins: Option<usize>,
) -> Result<(), CliError> {
    let mut cfg = base_config(&common)?;
    set_flag(&mut cfg, "data", data.map(|p| p.display().to_string()));
    set_flag(&mut cfg, "matches", matches.map(|p| p.display().to_string()));
    set_flag(
        &mut cfg,
        "nonmatches",
        nonmatches.map(|p| p.display().to_string()),
    );
    set_flag(&mut cfg, "hist.bins", bins);
    cfg.check_keys(DIST_HIST_KEYS)?;
    init_threads(&cfg)?;

    let ds = load_descriptors(&cfg.path("data")?, DescriptorFormat::Binary)?;
    let match_pairs = load_pairs(cfg.path("matches")?)?;
    let nonmatch_pairs = load_pairs(cfg.path("nonmatches")?)?;
    let bins = cfg.usize_or("hist.bins", 50)?;
    cfg.set("hist.bins", bins.to_string());

    let (hist_match, hist_nonmatch) = match_distance_histogram(
        &match_pairs,
        &nonmatch_pairs,
        &ds,
        bins,
    )?;
    let mut csv = String::from("bin_lo,bin_hi,match_count,nonmatch_count\n");
    for (i, window) in hist_match.edges.windows(2).enumerate() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            window[0], window[1], hist_match.counts[i], hist_nonmatch.counts[i]
        ));
    }
    let dir = prepare_out(&cfg)?;
    write_file(&dir.join("histogram.csv"), &csv)?;
    cfg.write_echo(&dir)?;
    println!(
        "histogrammed {} matching and {} non-matching pairs over {} bins -> {}",
        match_pairs.len(),
        nonmatch_pairs.len(),
        bins,
        dir.join("histogram.csv").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------

const MAKE_SYNTHETIC_KEYS: &[&str] = &[
    "synth.clusters",
    "synth.points_per_cluster",
    "synth.dim",
    "synth.cluster_std",
    "synth.max_pairs",
    "seed",
    "output_dir",
    "threads",
];

fn cmd_make_synthetic(
    common: CommonArgs,
    clusters: Option<usize>,
    points_per_cluster: Option<usize>,
    dim: Option<usize>,
    cluster_std: Option<f64>,
    seed: Option<u64>,
    max_pairs: Option<usize>,
) -> Result<(), CliError> {
    let mut cfg = base_config(&common)?;
    set_flag(&mut cfg, "synth.clusters", clusters);
    set_flag(&mut cfg, "synth.points_per_cluster", points_per_cluster);
    set_flag(&mut cfg, "synth.dim", dim);
    set_flag(&mut cfg, "synth.cluster_std", cluster_std);
    set_flag(&mut cfg, "seed", seed);
    set_flag(&mut cfg, "synth.max_pairs", max_pairs);
    cfg.check_keys(MAKE_SYNTHETIC_KEYS)?;
    init_threads(&cfg)?;

    let gen_cfg = ClusteredConfig {
        n_clusters: cfg.usize_or("synth.clusters", 20)?,
        points_per_cluster: cfg.usize_or("synth.points_per_cluster", 50)?,
        dim: cfg.usize_or("synth.dim", 128)?,
        cluster_std: cfg.f64_or("synth.cluster_std", 0.9)?,
        seed: cfg.u64_or("seed", 0)?,
    };
    let max_pairs = cfg.usize_or("synth.max_pairs", 1_000)?;
    cfg.set("synth.clusters", gen_cfg.n_clusters.to_string());
    cfg.set(
        "synth.points_per_cluster",
        gen_cfg.points_per_cluster.to_string(),
    );
    cfg.set("synth.dim", gen_cfg.dim.to_string());
    cfg.set("synth.cluster_std", gen_cfg.cluster_std.to_string());
    cfg.set("seed", gen_cfg.seed.to_string());
    cfg.set("synth.max_pairs", max_pairs.to_string());

    let (ds, gt) = make_clustered(&gen_cfg)?;
    let (match_pairs, nonmatch_pairs) = make_pairs(&ds, &gt, max_pairs, gen_cfg.seed)?;
    let dir = prepare_out(&cfg)?;
    save_descriptors(&ds, &dir.join("descriptors.uthd"))?;
    save_ground_truth(&gt, &dir.join("ground_truth.tsv"))?;
    save_pairs(&match_pairs, dir.join("match_pairs.tsv"))?;
    save_pairs(&nonmatch_pairs, dir.join("nonmatch_pairs.tsv"))?;
    cfg.write_echo(&dir)?;
    println!(
        "generated {} descriptors in {} clusters -> {}",
        ds.count(),
        gen_cfg.n_clusters,
        dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_rows_match_published_stacks() {
        let cfg = RunConfig::default();
        let rows = [
            ("paper-256", vec![4096, 2048, 256]),
            ("paper-128", vec![4096, 2048, 128]),
            ("paper-64", vec![4096, 1024, 64]),
            ("paper-32", vec![4096, 2048, 32]),
        ];
        for (name, sizes) in rows {
            assert_eq!(preset_layer_sizes(name, &cfg).unwrap(), sizes);
        }
    }

    #[test]
    fn bare_paper_preset_reads_bits_from_config() {
        let mut cfg = RunConfig::default();
        assert!(preset_layer_sizes("paper", &cfg).is_err());
        cfg.set("bits", "64");
        assert_eq!(
            preset_layer_sizes("paper", &cfg).unwrap(),
            vec![4096, 1024, 64]
        );
    }

    #[test]
    fn unknown_presets_are_rejected() {
        let cfg = RunConfig::default();
        assert!(preset_layer_sizes("paper-48", &cfg).is_err());
        assert!(preset_layer_sizes("classic", &cfg).is_err());
    }

    #[test]
    fn shape_parses_rows_by_columns() {
        assert_eq!(parse_shape("8x512").unwrap(), (8, 512));
        assert_eq!(parse_shape(" 4 x 16 ").unwrap(), (4, 16));
        assert!(parse_shape("8x").is_err());
        assert!(parse_shape("64").is_err());
    }

    #[test]
    fn finetune_mode_tags() {
        assert!(matches!(parse_finetune_mode("off"), Ok(FinetuneMode::Off)));
        assert!(matches!(
            parse_finetune_mode("threshold"),
            Ok(FinetuneMode::On(SamplingMode::Threshold))
        ));
        assert!(matches!(
            parse_finetune_mode("uniform"),
            Ok(FinetuneMode::On(SamplingMode::Uniform))
        ));
        assert!(parse_finetune_mode("sometimes").is_err());
    }
}
