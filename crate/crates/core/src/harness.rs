//! End-to-end Gaussian benchmark: pool, splits, training, scoring, metrics
//! and report emission.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{markov_epsilon, GaussianBinaryModel, LabeledSample, SplitDataset};
use crate::metrics::{
    auroc, auroc_standard_error, benchmark_splits, confusion, frr_at_trr, roc_exact, roc_grid, type_errors,
    RejectionScoredItem, RocCurve, RocMode,
};
use crate::perturb::{preprocess, PerturbMethod, PerturbSpec};
use crate::scalar::{lit, to_f64, Scalar};
use crate::scoring::{
    check_temperature, doctor_alpha_score, doctor_beta_score, odin_rejection, sr_rejection, MahalanobisModel,
    Method, RejectionScore, Ridge,
};
use crate::trainer::{train, LogisticClassifier, TrainConfig};

pub const SCHEMA_VERSION: &str = "1";
/// Confidence levels of the Markov-bound check.
pub const MARKOV_ETAS: [f64; 3] = [0.5, 0.2, 0.1];
/// Target TRR for the FRR summary.
pub const TARGET_TRR: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RocSelection {
    Exact,
    Grid,
    Both,
}

impl RocSelection {
    pub fn modes(self) -> &'static [RocMode] {
        match self {
            RocSelection::Exact => &[RocMode::Exact],
            RocSelection::Grid => &[RocMode::Grid],
            RocSelection::Both => &[RocMode::Exact, RocMode::Grid],
        }
    }
}

impl std::str::FromStr for RocSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(RocSelection::Exact),
            "grid" => Ok(RocSelection::Grid),
            "both" => Ok(RocSelection::Both),
            other => Err(Error::param("roc_mode", format!("expected exact, grid or both, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ExperimentConfig<T> {
    pub mu: Vec<T>,
    pub sigma: T,
    pub n_per_class: usize,
    pub n_train: usize,
    pub splits: usize,
    pub lr: T,
    pub epochs: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub temperature: T,
    pub epsilon: T,
    pub roc_mode: RocSelection,
    /// Draw a fresh pool for every split instead of partitioning one pool.
    pub resample_pool_per_split: bool,
}

impl<T: Scalar> Default for ExperimentConfig<T> {
    fn default() -> Self {
        Self {
            mu: vec![T::one(), T::one()],
            sigma: lit(2.0),
            n_per_class: 5000,
            n_train: 6700,
            splits: 8,
            lr: lit(0.1),
            epochs: 5,
            base_seed: 0,
            methods: vec![Method::DStar, Method::DAlpha, Method::DBeta, Method::Sr, Method::Odin],
            temperature: T::one(),
            epsilon: T::zero(),
            roc_mode: RocSelection::Both,
            resample_pool_per_split: false,
        }
    }
}

impl<T: Scalar> ExperimentConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.mu.is_empty() || self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("mu", "must be a non-empty finite vector"));
        }
        if !(self.sigma > T::zero() && self.sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be > 0, got {}", self.sigma)));
        }
        if self.n_per_class == 0 {
            return Err(Error::param("n_per_class", "must be >= 1"));
        }
        if self.n_train == 0 || self.n_train >= 2 * self.n_per_class {
            return Err(Error::param(
                "n_train",
                format!("must be in 1..{}, got {}", 2 * self.n_per_class, self.n_train),
            ));
        }
        if self.splits == 0 {
            return Err(Error::param("splits", "must be >= 1"));
        }
        if !(self.lr > T::zero() && self.lr.is_finite()) {
            return Err(Error::param("lr", format!("must be > 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be >= 1"));
        }
        check_temperature(self.temperature).map_err(|_| {
            Error::param("temperature", format!("must be > 0, got {}", self.temperature))
        })?;
        if !(self.epsilon >= T::zero() && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be >= 0, got {}", self.epsilon)));
        }
        let unique: BTreeSet<_> = self.methods.iter().collect();
        if unique.len() != self.methods.len() {
            return Err(Error::param("methods", "duplicate entries"));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig<T> {
        TrainConfig { learning_rate: self.lr, epochs: self.epochs, seed: self.base_seed }
    }

    pub fn model(&self) -> Result<GaussianBinaryModel<T>> {
        GaussianBinaryModel::new(self.mu.clone(), self.sigma)
    }
}

/// Everything needed to score a sample with any method.
#[derive(Debug, Clone)]
pub struct ScoringContext<'a, T> {
    pub model: &'a GaussianBinaryModel<T>,
    pub classifier: &'a LogisticClassifier<T>,
    pub mahalanobis: Option<&'a MahalanobisModel<T>>,
}

fn perturbation(method: Method) -> Option<PerturbMethod> {
    match method {
        Method::DAlpha => Some(PerturbMethod::Alpha),
        Method::DBeta => Some(PerturbMethod::Beta),
        Method::Odin => Some(PerturbMethod::Odin),
        Method::Mhlnb => Some(PerturbMethod::Mahalanobis),
        Method::DStar | Method::Sr => None,
    }
}

/// Scores every test sample with `method`. The error bit always comes from
/// the prediction on the unperturbed input. D★ ignores `temperature` and
/// `epsilon`; SR is evaluated at `T = 1` and rejects `epsilon > 0`.
pub fn score_dataset<T: Scalar>(
    ctx: &ScoringContext<'_, T>,
    test: &[LabeledSample<T>],
    method: Method,
    temperature: T,
    epsilon: T,
) -> Result<Vec<RejectionScoredItem<T>>> {
    check_temperature(temperature)?;
    let spec = match (method, perturbation(method)) {
        (Method::DStar, _) => None,
        (_, Some(pm)) => {
            let spec = PerturbSpec { epsilon, method: pm, temperature };
            spec.validate()?;
            Some(spec)
        }
        (_, None) if epsilon > T::zero() => {
            return Err(Error::param("epsilon", format!("{method} has no input gradient; use epsilon = 0")));
        }
        (_, None) => None,
    };
    if method == Method::Mhlnb && ctx.mahalanobis.is_none() {
        return Err(Error::InvalidInput("mhlnb needs a fitted Mahalanobis model".into()));
    }

    test.iter()
        .enumerate()
        .map(|(id, s)| {
            let pred = ctx.classifier.predict(&s.x)?;
            let x = match &spec {
                Some(spec) => preprocess(&s.x, spec, ctx.classifier, ctx.mahalanobis)?,
                None => s.x.clone(),
            };
            let score: RejectionScore<T> = match method {
                Method::DStar => ctx.model.optimal_score(pred, &s.x)?,
                Method::DAlpha => doctor_alpha_score(&ctx.classifier.posterior(&x, temperature)?),
                Method::DBeta => doctor_beta_score(&ctx.classifier.posterior(&x, temperature)?),
                Method::Sr => sr_rejection(&ctx.classifier.posterior(&x, T::one())?),
                Method::Odin => odin_rejection(&ctx.classifier.logits(&x)?, temperature)?,
                Method::Mhlnb => ctx
                    .mahalanobis
                    .expect("checked above")
                    .score(ctx.classifier.posterior(&x, temperature)?.probs())?,
            };
            Ok(RejectionScoredItem { id, rejection_score: score.value(), error: pred != s.y })
        })
        .collect()
}

/// Fits the Mahalanobis model on the classifier's softmax outputs for the
/// training split.
pub fn fit_mahalanobis<T: Scalar>(
    classifier: &LogisticClassifier<T>,
    train: &[LabeledSample<T>],
    temperature: T,
) -> Result<MahalanobisModel<T>> {
    let vectors = train
        .iter()
        .map(|s| Ok(classifier.posterior(&s.x, temperature)?.into_inner()))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = train.iter().map(|s| s.y.index()).collect();
    MahalanobisModel::fit(&vectors, &labels, 2, Ridge::Auto)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovCheck<T> {
    pub eta: T,
    pub epsilon: T,
    /// Fraction of test points with `Δ(x) >= epsilon`.
    pub fraction: T,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeErrorPair<T> {
    pub eps0: T,
    pub eps1: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport<T> {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auroc_exact: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auroc_exact_se: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auroc_grid: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auroc_grid_se: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frr_at_95_exact: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frr_at_95_grid: Option<T>,
    /// Some requested curve never reached the target TRR.
    pub frr_saturated: bool,
    /// The grid curve fell back to the exact sweep.
    pub grid_fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport<T> {
    pub split: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: T,
    pub bayes_accuracy: T,
    pub ce_risk: T,
    pub markov: Vec<MarkovCheck<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_star_type_errors: Option<TypeErrorPair<T>>,
    pub methods: Vec<MethodReport<T>>,
}

/// Mean over splits and its standard error (zero for a single split).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat<T> {
    pub mean: T,
    pub se: T,
}

impl<T: Scalar> Stat<T> {
    pub fn of(values: &[T]) -> Self {
        let n = values.len();
        let nt = lit::<T>(n as f64);
        let mean = values.iter().copied().sum::<T>() / nt;
        let se = if n > 1 {
            let ss = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
            (ss / lit::<T>((n - 1) as f64) / nt).sqrt()
        } else {
            T::zero()
        };
        Stat { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovAggregate<T> {
    pub eta: T,
    pub epsilon: Stat<T>,
    pub fraction: Stat<T>,
    pub all_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate<T> {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auroc_exact: Option<Stat<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auroc_grid: Option<Stat<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frr_at_95_exact: Option<Stat<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frr_at_95_grid: Option<Stat<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport<T> {
    pub splits: usize,
    pub accuracy: Stat<T>,
    pub bayes_accuracy: Stat<T>,
    pub ce_risk: Stat<T>,
    pub markov: Vec<MarkovAggregate<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_star_eps0: Option<Stat<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_star_eps1: Option<Stat<T>>,
    pub methods: Vec<MethodAggregate<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ExperimentReport<T> {
    pub schema_version: String,
    pub config: ExperimentConfig<T>,
    pub per_split: Vec<SplitReport<T>>,
    pub aggregate: AggregateReport<T>,
}

/// ROC curves of one method on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCurves<T> {
    pub split: usize,
    pub method: Method,
    pub exact: Option<RocCurve<T>>,
    pub grid: Option<RocCurve<T>>,
}

pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig<T>) -> Result<ExperimentReport<T>> {
    run_experiment_with_curves(cfg).map(|(report, _)| report)
}

pub fn run_experiment_with_curves<T: Scalar>(
    cfg: &ExperimentConfig<T>,
) -> Result<(ExperimentReport<T>, Vec<SplitCurves<T>>)> {
    cfg.validate()?;
    let model = cfg.model()?;
    let datasets = benchmark_splits(
        &model,
        cfg.n_per_class,
        cfg.n_train,
        cfg.splits,
        cfg.base_seed,
        cfg.resample_pool_per_split,
    )?;
    let results = datasets
        .par_iter()
        .enumerate()
        .map(|(i, ds)| run_split(cfg, &model, i, ds))
        .collect::<Result<Vec<_>>>()?;

    let (per_split, curves): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let aggregate = aggregate(&per_split);
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION.to_string(),
        config: cfg.clone(),
        per_split,
        aggregate,
    };
    Ok((report, curves.into_iter().flatten().collect()))
}

/// Test-set items of every split for one method, in split order.
pub fn split_scores<T: Scalar>(cfg: &ExperimentConfig<T>, method: Method) -> Result<Vec<Vec<RejectionScoredItem<T>>>> {
    cfg.validate()?;
    let model = cfg.model()?;
    let datasets = benchmark_splits(
        &model,
        cfg.n_per_class,
        cfg.n_train,
        cfg.splits,
        cfg.base_seed,
        cfg.resample_pool_per_split,
    )?;
    let epsilon = if perturbation(method).is_some() { cfg.epsilon } else { T::zero() };
    datasets
        .par_iter()
        .map(|ds| {
            let classifier = train(&ds.train, &cfg.train_config())?;
            let mahalanobis = match method {
                Method::Mhlnb => Some(fit_mahalanobis(&classifier, &ds.train, cfg.temperature)?),
                _ => None,
            };
            let ctx = ScoringContext { model: &model, classifier: &classifier, mahalanobis: mahalanobis.as_ref() };
            score_dataset(&ctx, &ds.test, method, cfg.temperature, epsilon)
        })
        .collect()
}

fn fraction<T: Scalar>(hits: usize, n: usize) -> T {
    lit(hits as f64 / n as f64)
}

fn run_split<T: Scalar>(
    cfg: &ExperimentConfig<T>,
    model: &GaussianBinaryModel<T>,
    split: usize,
    ds: &SplitDataset<T>,
) -> Result<(SplitReport<T>, Vec<SplitCurves<T>>)> {
    let classifier = train(&ds.train, &cfg.train_config())?;
    let n_test = ds.test.len();

    let mut correct = 0;
    let mut bayes_correct = 0;
    for s in &ds.test {
        correct += usize::from(classifier.predict(&s.x)? == s.y);
        bayes_correct += usize::from(model.bayes_classify(&s.x)? == s.y);
    }
    let ce_risk = classifier.ce_risk(&ds.test)?;

    let deltas = ds
        .test
        .iter()
        .map(|s| model.kl_delta(&classifier.posterior(&s.x, T::one())?, &s.x))
        .collect::<Result<Vec<T>>>()?;
    let markov = MARKOV_ETAS
        .iter()
        .map(|&eta| {
            let eta = lit::<T>(eta);
            let epsilon = markov_epsilon(ce_risk, eta)?;
            let hits = deltas.iter().filter(|&&d| d >= epsilon).count();
            let fraction = fraction::<T>(hits, n_test);
            Ok(MarkovCheck { eta, epsilon, fraction, holds: fraction <= eta })
        })
        .collect::<Result<Vec<_>>>()?;

    let mahalanobis = if cfg.methods.contains(&Method::Mhlnb) {
        Some(fit_mahalanobis(&classifier, &ds.train, cfg.temperature)?)
    } else {
        None
    };
    let ctx = ScoringContext { model, classifier: &classifier, mahalanobis: mahalanobis.as_ref() };

    let mut d_star_type_errors = None;
    let mut methods = Vec::with_capacity(cfg.methods.len());
    let mut curves = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let epsilon = if perturbation(method).is_some() { cfg.epsilon } else { T::zero() };
        let items = score_dataset(&ctx, &ds.test, method, cfg.temperature, epsilon)?;
        if method == Method::DStar {
            let e = type_errors::<T>(&confusion(&items, T::one()))?;
            d_star_type_errors = Some(TypeErrorPair { eps0: e.eps0, eps1: e.eps1 });
        }
        let (report, split_curves) = evaluate_method(method, split, &items, cfg.roc_mode)?;
        methods.push(report);
        curves.push(split_curves);
    }

    Ok((
        SplitReport {
            split,
            seed: ds.seed,
            n_train: ds.train.len(),
            n_test,
            accuracy: fraction(correct, n_test),
            bayes_accuracy: fraction(bayes_correct, n_test),
            ce_risk,
            markov,
            d_star_type_errors,
            methods,
        },
        curves,
    ))
}

/// AUROC, its standard error and FRR at 95% TRR in every requested mode.
pub fn evaluate_method<T: Scalar>(
    method: Method,
    split: usize,
    items: &[RejectionScoredItem<T>],
    selection: RocSelection,
) -> Result<(MethodReport<T>, SplitCurves<T>)> {
    let mut report = MethodReport {
        method,
        auroc_exact: None,
        auroc_exact_se: None,
        auroc_grid: None,
        auroc_grid_se: None,
        frr_at_95_exact: None,
        frr_at_95_grid: None,
        frr_saturated: false,
        grid_fell_back: false,
    };
    let mut curves = SplitCurves { split, method, exact: None, grid: None };
    for &mode in selection.modes() {
        let curve = match mode {
            RocMode::Exact => roc_exact(items)?,
            RocMode::Grid => roc_grid(items)?,
        };
        let area: T = auroc(&curve);
        let se = lit::<T>(auroc_standard_error(to_f64(area), curve.n_errors, curve.n_correct));
        let frr = frr_at_trr(&curve, lit(TARGET_TRR));
        report.frr_saturated |= frr.saturated;
        match mode {
            RocMode::Exact => {
                report.auroc_exact = Some(area);
                report.auroc_exact_se = Some(se);
                report.frr_at_95_exact = Some(frr.frr);
                curves.exact = Some(curve);
            }
            RocMode::Grid => {
                report.auroc_grid = Some(area);
                report.auroc_grid_se = Some(se);
                report.frr_at_95_grid = Some(frr.frr);
                report.grid_fell_back = curve.fell_back_to_exact;
                curves.grid = Some(curve);
            }
        }
    }
    Ok((report, curves))
}

fn stat_of<T: Scalar, F: Fn(&SplitReport<T>) -> Option<T>>(splits: &[SplitReport<T>], f: F) -> Option<Stat<T>> {
    let values: Option<Vec<T>> = splits.iter().map(f).collect();
    values.filter(|v| !v.is_empty()).map(|v| Stat::of(&v))
}

fn aggregate<T: Scalar>(splits: &[SplitReport<T>]) -> AggregateReport<T> {
    let stat = |f: &dyn Fn(&SplitReport<T>) -> T| Stat::of(&splits.iter().map(f).collect::<Vec<_>>());
    let markov = MARKOV_ETAS
        .iter()
        .enumerate()
        .map(|(k, &eta)| MarkovAggregate {
            eta: lit(eta),
            epsilon: stat(&|s| s.markov[k].epsilon),
            fraction: stat(&|s| s.markov[k].fraction),
            all_hold: splits.iter().all(|s| s.markov[k].holds),
        })
        .collect();
    let methods = splits
        .first()
        .map(|s| s.methods.iter().map(|m| m.method).collect::<Vec<_>>())
        .unwrap_or_default()
        .into_iter()
        .enumerate()
        .map(|(k, method)| MethodAggregate {
            method,
            auroc_exact: stat_of(splits, |s| s.methods[k].auroc_exact),
            auroc_grid: stat_of(splits, |s| s.methods[k].auroc_grid),
            frr_at_95_exact: stat_of(splits, |s| s.methods[k].frr_at_95_exact),
            frr_at_95_grid: stat_of(splits, |s| s.methods[k].frr_at_95_grid),
        })
        .collect();
    AggregateReport {
        splits: splits.len(),
        accuracy: stat(&|s| s.accuracy),
        bayes_accuracy: stat(&|s| s.bayes_accuracy),
        ce_risk: stat(&|s| s.ce_risk),
        markov,
        d_star_eps0: stat_of(splits, |s| s.d_star_type_errors.as_ref().map(|e| e.eps0)),
        d_star_eps1: stat_of(splits, |s| s.d_star_type_errors.as_ref().map(|e| e.eps1)),
        methods,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

/// One line of the flat report table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Split index, or `mean` / `se` for aggregates.
    pub split: String,
    /// Empty for metrics that do not belong to a method.
    pub method: String,
    pub metric: String,
    pub value: f64,
}

fn row(split: &str, method: &str, metric: &str, value: f64) -> ReportRow {
    ReportRow { split: split.into(), method: method.into(), metric: metric.into(), value }
}

/// Flattens a report into `(split, method, metric, value)` rows in a fixed order.
pub fn report_rows<T: Scalar>(report: &ExperimentReport<T>) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    let f = to_f64::<T>;
    for s in &report.per_split {
        let id = s.split.to_string();
        rows.push(row(&id, "", "accuracy", f(s.accuracy)));
        rows.push(row(&id, "", "bayes_accuracy", f(s.bayes_accuracy)));
        rows.push(row(&id, "", "ce_risk", f(s.ce_risk)));
        for m in &s.markov {
            rows.push(row(&id, "", &format!("markov_epsilon@{}", f(m.eta)), f(m.epsilon)));
            rows.push(row(&id, "", &format!("markov_fraction@{}", f(m.eta)), f(m.fraction)));
        }
        if let Some(e) = &s.d_star_type_errors {
            rows.push(row(&id, "d_star", "eps0", f(e.eps0)));
            rows.push(row(&id, "d_star", "eps1", f(e.eps1)));
        }
        for m in &s.methods {
            let name = m.method.name();
            let fields = [
                ("auroc_exact", m.auroc_exact),
                ("auroc_exact_se", m.auroc_exact_se),
                ("auroc_grid", m.auroc_grid),
                ("auroc_grid_se", m.auroc_grid_se),
                ("frr_at_95_exact", m.frr_at_95_exact),
                ("frr_at_95_grid", m.frr_at_95_grid),
            ];
            for (metric, v) in fields {
                if let Some(v) = v {
                    rows.push(row(&id, name, metric, f(v)));
                }
            }
        }
    }

    let a = &report.aggregate;
    let mut push_stat = |method: &str, metric: &str, s: Option<Stat<T>>| {
        if let Some(s) = s {
            rows.push(row("mean", method, metric, f(s.mean)));
            rows.push(row("se", method, metric, f(s.se)));
        }
    };
    push_stat("", "accuracy", Some(a.accuracy));
    push_stat("", "bayes_accuracy", Some(a.bayes_accuracy));
    push_stat("", "ce_risk", Some(a.ce_risk));
    for m in &a.markov {
        push_stat("", &format!("markov_epsilon@{}", f(m.eta)), Some(m.epsilon));
        push_stat("", &format!("markov_fraction@{}", f(m.eta)), Some(m.fraction));
    }
    push_stat("d_star", "eps0", a.d_star_eps0);
    push_stat("d_star", "eps1", a.d_star_eps1);
    for m in &a.methods {
        let name = m.method.name();
        push_stat(name, "auroc_exact", m.auroc_exact);
        push_stat(name, "auroc_grid", m.auroc_grid);
        push_stat(name, "frr_at_95_exact", m.frr_at_95_exact);
        push_stat(name, "frr_at_95_grid", m.frr_at_95_grid);
    }
    rows
}

pub fn emit_report<T: Scalar + Serialize>(report: &ExperimentReport<T>, format: ReportFormat) -> Result<Vec<u8>> {
    let ser = |e: &dyn std::fmt::Display| Error::Serialization(e.to_string());
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).map_err(|e| ser(&e))?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in report_rows(report) {
                w.serialize(r).map_err(|e| ser(&e))?;
            }
            w.into_inner().map_err(|e| ser(&e))
        }
    }
}

pub fn parse_report_json<T: Scalar + for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<ExperimentReport<T>> {
    let report: ExperimentReport<T> =
        serde_json::from_slice(bytes).map_err(|e| Error::Serialization(e.to_string()))?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Serialization(format!(
            "unsupported schema_version `{}`",
            report.schema_version
        )));
    }
    Ok(report)
}

pub fn parse_report_csv(bytes: &[u8]) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let headers = r.headers().map_err(|e| Error::Serialization(e.to_string()))?;
    if headers != vec!["split", "method", "metric", "value"] {
        return Err(Error::Serialization(format!("unexpected report header {headers:?}")));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| rec.map_err(|e| Error::Serialization(format!("line {}: {e}", i + 2))))
        .collect()
}
