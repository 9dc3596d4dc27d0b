use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use trustcheck_core::harness::{self, emit_report, run_experiment_with_curves, split_scores, ReportFormat};
use trustcheck_core::metrics::RocCurve;
use trustcheck_core::scorefile::{self, ScoreFormat, Thresholds};
use trustcheck_core::{ExperimentConfig, Method, RocSelection, ScoreRecord};

/// Decide whether to trust or reject classifier predictions from their soft outputs.
#[derive(Debug, Parser)]
#[command(name = "trustcheck", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the synthetic Gaussian benchmark and write report and ROC files.
    Synth(SynthArgs),
    /// Evaluate discriminators on a file of softmax outputs or logits.
    Eval(EvalArgs),
    /// Write a histogram of scores split by prediction outcome.
    Hist(HistArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Flat JSON file with experiment settings; flags override it.
    #[arg(long, env = "TRUSTCHECK_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "TRUSTCHECK_SIGMA")]
    sigma: Option<f64>,
    /// Class mean as comma-separated coordinates (the other class uses -mu).
    #[arg(long, env = "TRUSTCHECK_MU", value_delimiter = ',', allow_hyphen_values = true)]
    mu: Option<Vec<f64>>,
    #[arg(long, env = "TRUSTCHECK_N_PER_CLASS")]
    n_per_class: Option<usize>,
    #[arg(long, env = "TRUSTCHECK_N_TRAIN")]
    n_train: Option<usize>,
    #[arg(long, env = "TRUSTCHECK_SPLITS")]
    splits: Option<usize>,
    #[arg(long, env = "TRUSTCHECK_LR")]
    lr: Option<f64>,
    #[arg(long, env = "TRUSTCHECK_EPOCHS")]
    epochs: Option<usize>,
    /// Base seed; split i uses seed + i.
    #[arg(long, env = "TRUSTCHECK_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "TRUSTCHECK_TEMPERATURE")]
    temperature: Option<f64>,
    /// Input pre-processing magnitude for gradient-capable methods.
    #[arg(long, env = "TRUSTCHECK_EPSILON")]
    epsilon: Option<f64>,
    /// Draw a fresh pool for every split.
    #[arg(long, env = "TRUSTCHECK_RESAMPLE_POOL")]
    resample_pool: bool,
}

impl ExperimentArgs {
    fn resolve(&self, methods: Option<&[Method]>, roc: Option<RocSelection>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str::<ExperimentConfig>(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = &self.mu {
            cfg.mu = v.clone();
        }
        if let Some(v) = self.n_per_class {
            cfg.n_per_class = v;
        }
        if let Some(v) = self.n_train {
            cfg.n_train = v;
        }
        if let Some(v) = self.splits {
            cfg.splits = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.seed {
            cfg.base_seed = v;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if self.resample_pool {
            cfg.resample_pool_per_split = true;
        }
        if let Some(m) = methods {
            cfg.methods = m.to_vec();
        }
        if let Some(r) = roc {
            cfg.roc_mode = r;
        }
        cfg.validate().context("invalid experiment configuration")?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Comma-separated methods: d_star, d_alpha, d_beta, sr, odin, mhlnb.
    #[arg(long, env = "TRUSTCHECK_METHODS", value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// exact, grid or both.
    #[arg(long, env = "TRUSTCHECK_ROC_MODE")]
    roc_mode: Option<RocSelection>,
    #[arg(long, env = "TRUSTCHECK_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Score file (CSV, or JSON lines for .jsonl/.json).
    #[arg(long, env = "TRUSTCHECK_SCORES")]
    scores: PathBuf,
    /// Training-set score file; required for mhlnb.
    #[arg(long, env = "TRUSTCHECK_FIT_FILE")]
    fit_file: Option<PathBuf>,
    #[arg(long, env = "TRUSTCHECK_METHODS", value_delimiter = ',', default_value = "d_alpha,d_beta,sr,odin")]
    methods: Vec<Method>,
    /// Threshold for d_alpha / d_beta (reject iff score > gamma).
    #[arg(long, env = "TRUSTCHECK_GAMMA")]
    gamma: Option<f64>,
    /// Threshold for sr / odin (reject iff max probability <= delta).
    #[arg(long, env = "TRUSTCHECK_DELTA")]
    delta: Option<f64>,
    /// Threshold for mhlnb (reject iff score > zeta).
    #[arg(long, env = "TRUSTCHECK_ZETA", allow_hyphen_values = true)]
    zeta: Option<f64>,
    #[arg(long, env = "TRUSTCHECK_TEMPERATURE", default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, env = "TRUSTCHECK_ROC_MODE", default_value = "both")]
    roc_mode: RocSelection,
    #[arg(long, env = "TRUSTCHECK_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct HistArgs {
    /// Score file; without it the synthetic benchmark supplies the scores.
    #[arg(long, env = "TRUSTCHECK_SCORES")]
    scores: Option<PathBuf>,
    #[arg(long, env = "TRUSTCHECK_FIT_FILE")]
    fit_file: Option<PathBuf>,
    #[arg(long, env = "TRUSTCHECK_METHOD", default_value = "d_alpha")]
    method: Method,
    #[arg(long, env = "TRUSTCHECK_BINS", default_value_t = 20)]
    bins: usize,
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, env = "TRUSTCHECK_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn roc_csv(rows: &[(String, &RocCurve<f64>)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["split", "mode", "threshold", "frr", "trr"])?;
    for (split, curve) in rows {
        for (t, frr, trr) in curve.rates() {
            w.write_record([split.clone(), curve.mode.name().to_string(), t.to_string(), frr.to_string(), trr.to_string()])?;
        }
    }
    Ok(w.into_inner()?)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let cfg = args.experiment.resolve(args.methods.as_deref(), args.roc_mode)?;
    let (report, curves) = run_experiment_with_curves(&cfg)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    write(&args.out_dir.join("report.json"), &emit_report(&report, ReportFormat::Json)?)?;
    write(&args.out_dir.join("report.csv"), &emit_report(&report, ReportFormat::Csv)?)?;
    for &method in &cfg.methods {
        let rows: Vec<(String, &RocCurve<f64>)> = curves
            .iter()
            .filter(|c| c.method == method)
            .flat_map(|c| [c.exact.as_ref(), c.grid.as_ref()].into_iter().flatten().map(|r| (c.split.to_string(), r)))
            .collect();
        write(&args.out_dir.join(format!("roc_{}.csv", method.name())), &roc_csv(&rows)?)?;
    }

    let a = &report.aggregate;
    println!(
        "splits {}  accuracy {:.4}  bayes accuracy {:.4}",
        a.splits, a.accuracy.mean, a.bayes_accuracy.mean
    );
    if let (Some(e0), Some(e1)) = (a.d_star_eps0, a.d_star_eps1) {
        println!("eps0 {:.4} (se {:.4})  eps1 {:.4} (se {:.4})", e0.mean, e0.se, e1.mean, e1.se);
    }
    for m in &a.methods {
        let fmt = |s: Option<harness::Stat<f64>>| s.map_or("-".to_string(), |s| format!("{:.4}", s.mean));
        println!(
            "{:<8} auroc exact {}  grid {}  frr@95 exact {}",
            m.method.name(),
            fmt(m.auroc_exact),
            fmt(m.auroc_grid),
            fmt(m.frr_at_95_exact)
        );
    }
    Ok(())
}

fn load_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    scorefile::parse_scores(&bytes, ScoreFormat::from_path(path)).with_context(|| format!("parsing {}", path.display()))
}

fn load_mahalanobis(
    methods: &[Method],
    fit_file: Option<&Path>,
) -> Result<Option<trustcheck_core::Mahalanobis>> {
    if !methods.contains(&Method::Mhlnb) {
        return Ok(None);
    }
    let Some(path) = fit_file else {
        bail!("mhlnb needs --fit-file with training-set scores");
    };
    Ok(Some(scorefile::fit_mahalanobis_records(&load_scores(path)?)?))
}

fn eval(args: &EvalArgs) -> Result<()> {
    let records = load_scores(&args.scores)?;
    let maha = load_mahalanobis(&args.methods, args.fit_file.as_deref())?;
    let thresholds = Thresholds { gamma: args.gamma, delta: args.delta, zeta: args.zeta };
    let (report, curves) =
        scorefile::evaluate(&records, &args.methods, &thresholds, args.temperature, args.roc_mode, maha.as_ref())?;

    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    write(&args.out_dir.join("eval.json"), &json)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "metric", "value"])?;
    for m in &report.methods {
        let mut put = |metric: &str, v: Option<f64>| -> Result<()> {
            if let Some(v) = v {
                w.write_record([m.method.name(), metric, &v.to_string()])?;
            }
            Ok(())
        };
        put("threshold", m.threshold)?;
        if let Some(c) = m.counts {
            put("false_rejections", Some(c.false_rejections as f64))?;
            put("true_rejections", Some(c.true_rejections as f64))?;
            put("false_acceptances", Some(c.false_acceptances as f64))?;
            put("true_acceptances", Some(c.true_acceptances as f64))?;
        }
        put("eps0", m.eps0)?;
        put("eps1", m.eps1)?;
        put("auroc_exact", m.auroc_exact)?;
        put("auroc_grid", m.auroc_grid)?;
        put("frr_at_95_exact", m.frr_at_95_exact)?;
        put("frr_at_95_grid", m.frr_at_95_grid)?;
    }
    write(&args.out_dir.join("eval.csv"), &w.into_inner()?)?;

    for &method in &args.methods {
        let rows: Vec<(String, &RocCurve<f64>)> =
            curves.iter().filter(|(m, _)| *m == method).map(|(_, c)| ("0".to_string(), c)).collect();
        if !rows.is_empty() {
            write(&args.out_dir.join(format!("roc_{}.csv", method.name())), &roc_csv(&rows)?)?;
        }
    }

    if report.converted_rows > 0 {
        eprintln!("converted {} logit rows to probabilities", report.converted_rows);
    }
    println!("rows {}  correct {}  wrong {}", report.n_rows, report.n_correct, report.n_errors);
    for m in &report.methods {
        match (m.counts, m.auroc_exact.or(m.auroc_grid)) {
            (Some(c), _) => println!(
                "{:<8} FR {} TR {} FA {} TA {}  eps0 {}  eps1 {}",
                m.method.name(),
                c.false_rejections,
                c.true_rejections,
                c.false_acceptances,
                c.true_acceptances,
                m.eps0.map_or("-".into(), |v| format!("{v:.4}")),
                m.eps1.map_or("-".into(), |v| format!("{v:.4}")),
            ),
            (None, Some(a)) => println!("{:<8} auroc {a:.4}", m.method.name()),
            (None, None) => {}
        }
    }
    Ok(())
}

fn hist(args: &HistArgs) -> Result<()> {
    let scores: Vec<(f64, bool)> = match &args.scores {
        Some(path) => {
            let records = load_scores(path)?;
            let maha = load_mahalanobis(&[args.method], args.fit_file.as_deref())?;
            let temperature = args.experiment.temperature.unwrap_or(1.0);
            scorefile::score_records(&records, args.method, temperature, maha.as_ref())?
                .into_iter()
                .map(|it| (args.method.native_value(it.rejection_score), it.error))
                .collect()
        }
        None => {
            let cfg = args.experiment.resolve(Some(&[args.method]), None)?;
            split_scores(&cfg, args.method)?
                .into_iter()
                .flatten()
                .map(|it| (args.method.native_value(it.rejection_score), it.error))
                .collect()
        }
    };
    let bins = scorefile::histogram(&scores, args.bins)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let path = args.out_dir.join(format!("hist_{}.csv", args.method.name()));
    write(&path, &scorefile::emit_histogram(&bins)?)?;
    println!("{} scores in {} bins -> {}", scores.len(), bins.len(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::Hist(a) => hist(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
