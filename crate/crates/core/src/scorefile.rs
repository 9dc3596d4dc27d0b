//! Externally produced soft predictions: score files, black-box evaluation
//! and score histograms.
//!
//! CSV layout: header `id,label,v1,...,vC,kind`, one row per sample, where
//! `kind` is `softmax` or `logits`. The JSON-lines layout carries the same
//! fields as `{"id", "label", "values", "kind"}` objects.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{RocSelection, TARGET_TRR};
use crate::metrics::{
    auroc, confusion, frr_at_trr, roc_exact, roc_grid, type_errors, ConfusionCounts, RejectionScoredItem,
    RocCurve, RocMode,
};
use crate::scalar::{lit, Scalar};
use crate::scoring::{
    doctor_alpha_score, doctor_beta_score, odin_rejection, sr_rejection, LogitVector, MahalanobisModel, Method,
    Ridge, SoftmaxVector,
};

/// Softmax rows whose sum is this close to one are renormalised before
/// validation, so that rounded exports load.
pub const RENORMALISE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Softmax,
    Logits,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Softmax => "softmax",
            ScoreKind::Logits => "logits",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "softmax" => Some(ScoreKind::Softmax),
            "logits" => Some(ScoreKind::Logits),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFileRecord<T> {
    pub id: String,
    pub label: usize,
    pub values: Vec<T>,
    pub kind: ScoreKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFormat {
    Csv,
    JsonLines,
}

impl ScoreFormat {
    /// `.jsonl` / `.ndjson` / `.json` are JSON lines; anything else is CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jsonl" | "ndjson" | "json") => ScoreFormat::JsonLines,
            _ => ScoreFormat::Csv,
        }
    }
}

fn line_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("line {line}: {msg}"))
}

fn check_record<T: Scalar>(r: &ScoreFileRecord<T>, classes: usize, line: usize) -> Result<()> {
    if r.values.len() != classes {
        return Err(line_err(line, format!("expected {classes} values, got {}", r.values.len())));
    }
    if r.label >= classes {
        return Err(line_err(line, format!("label {} out of range for {classes} classes", r.label)));
    }
    match r.kind {
        ScoreKind::Softmax => {
            probabilities(r).map_err(|e| line_err(line, e))?;
        }
        ScoreKind::Logits => {
            LogitVector::new(r.values.clone()).map_err(|e| line_err(line, e))?;
        }
    }
    Ok(())
}

pub fn parse_scores<T: Scalar>(bytes: &[u8], format: ScoreFormat) -> Result<Vec<ScoreFileRecord<T>>> {
    let records = match format {
        ScoreFormat::Csv => parse_csv(bytes)?,
        ScoreFormat::JsonLines => parse_jsonl(bytes)?,
    };
    if records.is_empty() {
        return Err(Error::InvalidInput("score file has no rows".into()));
    }
    Ok(records)
}

fn parse_csv<T: Scalar>(bytes: &[u8]) -> Result<Vec<ScoreFileRecord<T>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = rdr.headers().map_err(|e| line_err(1, e))?.clone();
    let n = headers.len();
    let classes = n.saturating_sub(3);
    let valid = n >= 5
        && &headers[0] == "id"
        && &headers[1] == "label"
        && &headers[n - 1] == "kind"
        && (1..=classes).all(|c| headers[c + 1] == format!("v{c}"));
    if !valid {
        return Err(line_err(1, "header must be `id,label,v1,...,vC,kind` with C >= 2"));
    }

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            line_err(line, e)
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let label = rec[1]
            .parse::<usize>()
            .map_err(|_| line_err(line, format!("bad label `{}`", &rec[1])))?;
        let values = (0..classes)
            .map(|c| {
                let s = &rec[c + 2];
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(lit::<T>)
                    .ok_or_else(|| line_err(line, format!("bad value `{s}` in v{}", c + 1)))
            })
            .collect::<Result<Vec<T>>>()?;
        let kind = ScoreKind::parse(&rec[n - 1])
            .ok_or_else(|| line_err(line, format!("kind must be softmax or logits, got `{}`", &rec[n - 1])))?;
        let r = ScoreFileRecord { id: rec[0].to_string(), label, values, kind };
        check_record(&r, classes, line)?;
        out.push(r);
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    id: serde_json::Value,
    label: usize,
    values: Vec<f64>,
    kind: ScoreKind,
}

fn parse_jsonl<T: Scalar>(bytes: &[u8]) -> Result<Vec<ScoreFileRecord<T>>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::InvalidInput(format!("not UTF-8: {e}")))?;
    let mut out = Vec::new();
    let mut classes = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let j: JsonRecord = serde_json::from_str(raw).map_err(|e| line_err(line, e))?;
        let id = match j.id {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        let c = *classes.get_or_insert(j.values.len());
        if c < 2 {
            return Err(line_err(line, "need at least 2 values"));
        }
        let r = ScoreFileRecord { id, label: j.label, values: j.values.into_iter().map(lit::<T>).collect(), kind: j.kind };
        check_record(&r, c, line)?;
        out.push(r);
    }
    Ok(out)
}

pub fn emit_scores<T: Scalar>(records: &[ScoreFileRecord<T>], format: ScoreFormat) -> Result<Vec<u8>> {
    let classes = records.first().map_or(0, |r| r.values.len());
    if records.iter().any(|r| r.values.len() != classes) {
        return Err(Error::InvalidInput("records disagree on the number of classes".into()));
    }
    let ser = |e: &dyn std::fmt::Display| Error::Serialization(e.to_string());
    match format {
        ScoreFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["id".to_string(), "label".to_string()];
            header.extend((1..=classes).map(|c| format!("v{c}")));
            header.push("kind".into());
            w.write_record(&header).map_err(|e| ser(&e))?;
            for r in records {
                let mut row = vec![r.id.clone(), r.label.to_string()];
                row.extend(r.values.iter().map(|v| v.to_f64().unwrap_or(f64::NAN).to_string()));
                row.push(r.kind.name().into());
                w.write_record(&row).map_err(|e| ser(&e))?;
            }
            w.into_inner().map_err(|e| ser(&e))
        }
        ScoreFormat::JsonLines => {
            let mut out = Vec::new();
            for r in records {
                let values: Vec<f64> = r.values.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
                let j = serde_json::json!({"id": r.id, "label": r.label, "values": values, "kind": r.kind});
                serde_json::to_writer(&mut out, &j).map_err(|e| ser(&e))?;
                out.push(b'\n');
            }
            Ok(out)
        }
    }
}

/// Probability vector of a record; logits go through a stable softmax.
pub fn probabilities<T: Scalar>(r: &ScoreFileRecord<T>) -> Result<SoftmaxVector<T>> {
    match r.kind {
        ScoreKind::Logits => LogitVector::new(r.values.clone())?.softmax(T::one()),
        ScoreKind::Softmax => {
            let sum: T = r.values.iter().copied().sum();
            if r.values.iter().all(|v| *v >= T::zero()) && (sum - T::one()).abs() <= lit(RENORMALISE_TOLERANCE) {
                SoftmaxVector::new(r.values.iter().map(|&v| v / sum).collect())
            } else {
                SoftmaxVector::new(r.values.clone())
            }
        }
    }
}

/// Logits of a record; softmax rows use `ln p`, with zeros floored.
fn logits<T: Scalar>(r: &ScoreFileRecord<T>) -> Result<LogitVector<T>> {
    match r.kind {
        ScoreKind::Logits => LogitVector::new(r.values.clone()),
        ScoreKind::Softmax => {
            let floor = T::min_positive_value();
            LogitVector::new(probabilities(r)?.probs().iter().map(|&p| p.max(floor).ln()).collect())
        }
    }
}

/// `E = 1[label != argmax values]`.
pub fn error_bit<T: Scalar>(r: &ScoreFileRecord<T>) -> bool {
    let mut best = 0;
    for (i, v) in r.values.iter().enumerate() {
        if *v > r.values[best] {
            best = i;
        }
    }
    best != r.label
}

/// Fits the Mahalanobis model on the probability vectors of a training file.
pub fn fit_mahalanobis_records<T: Scalar>(fit: &[ScoreFileRecord<T>]) -> Result<MahalanobisModel<T>> {
    let classes = fit.first().map_or(0, |r| r.values.len());
    let vectors = fit.iter().map(|r| Ok(probabilities(r)?.into_inner())).collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = fit.iter().map(|r| r.label).collect();
    MahalanobisModel::fit(&vectors, &labels, classes, Ridge::Auto)
}

/// Canonical rejection scores of a file under `method`.
pub fn score_records<T: Scalar>(
    records: &[ScoreFileRecord<T>],
    method: Method,
    temperature: T,
    mahalanobis: Option<&MahalanobisModel<T>>,
) -> Result<Vec<RejectionScoredItem<T>>> {
    records
        .iter()
        .enumerate()
        .map(|(id, r)| {
            let score = match method {
                Method::DStar => {
                    return Err(Error::InvalidInput("d_star needs the true model; use synth".into()))
                }
                Method::DAlpha => doctor_alpha_score(&probabilities(r)?),
                Method::DBeta => doctor_beta_score(&probabilities(r)?),
                Method::Sr => sr_rejection(&probabilities(r)?),
                Method::Odin => odin_rejection(&logits(r)?, temperature)?,
                Method::Mhlnb => mahalanobis
                    .ok_or_else(|| Error::InvalidInput("mhlnb needs a fit file with training scores".into()))?
                    .score(probabilities(r)?.probs())?,
            };
            Ok(RejectionScoredItem { id, rejection_score: score.value(), error: error_bit(r) })
        })
        .collect()
}

/// Native thresholds: γ for DOCTOR, δ for SR/ODIN, ζ for Mahalanobis.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Thresholds<T> {
    pub gamma: Option<T>,
    pub delta: Option<T>,
    pub zeta: Option<T>,
}

impl<T: Copy> Thresholds<T> {
    pub fn for_method(&self, method: Method) -> Option<T> {
        match method {
            Method::DStar | Method::DAlpha | Method::DBeta => self.gamma,
            Method::Sr | Method::Odin => self.delta,
            Method::Mhlnb => self.zeta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMethod<T> {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<ConfusionCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps0: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps1: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auroc_exact: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auroc_grid: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frr_at_95_exact: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frr_at_95_grid: Option<T>,
    pub frr_saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport<T> {
    pub n_rows: usize,
    pub n_correct: usize,
    pub n_errors: usize,
    /// Rows whose logits were converted to probabilities.
    pub converted_rows: usize,
    pub temperature: T,
    pub methods: Vec<EvalMethod<T>>,
}

/// Evaluates each method: confusion counts and ε₀/ε₁ when a threshold is
/// given, AUROC and FRR at 95% TRR otherwise. Returns the ROC curves of the
/// sweeps alongside.
pub fn evaluate<T: Scalar>(
    records: &[ScoreFileRecord<T>],
    methods: &[Method],
    thresholds: &Thresholds<T>,
    temperature: T,
    roc: RocSelection,
    mahalanobis: Option<&MahalanobisModel<T>>,
) -> Result<(EvalReport<T>, Vec<(Method, RocCurve<T>)>)> {
    let n_errors = records.iter().filter(|r| error_bit(r)).count();
    let needs_probs = methods.iter().any(|m| *m != Method::Odin);
    let converted_rows = if needs_probs {
        records.iter().filter(|r| r.kind == ScoreKind::Logits).count()
    } else {
        0
    };
    let mut out = Vec::new();
    let mut curves = Vec::new();
    for &method in methods {
        let items = score_records(records, method, temperature, mahalanobis)?;
        let mut m = EvalMethod {
            method,
            threshold: None,
            counts: None,
            eps0: None,
            eps1: None,
            auroc_exact: None,
            auroc_grid: None,
            frr_at_95_exact: None,
            frr_at_95_grid: None,
            frr_saturated: false,
        };
        if let Some(native) = thresholds.for_method(method) {
            let c = confusion(&items, method.canonical_threshold(native));
            if let Ok(e) = type_errors::<T>(&c) {
                m.eps0 = Some(e.eps0);
                m.eps1 = Some(e.eps1);
            }
            m.threshold = Some(native);
            m.counts = Some(c);
        } else {
            for &mode in roc.modes() {
                let curve = match mode {
                    RocMode::Exact => roc_exact(&items)?,
                    RocMode::Grid => roc_grid(&items)?,
                };
                let area = auroc(&curve);
                let frr = frr_at_trr(&curve, lit(TARGET_TRR));
                m.frr_saturated |= frr.saturated;
                match mode {
                    RocMode::Exact => {
                        m.auroc_exact = Some(area);
                        m.frr_at_95_exact = Some(frr.frr);
                    }
                    RocMode::Grid => {
                        m.auroc_grid = Some(area);
                        m.frr_at_95_grid = Some(frr.frr);
                    }
                }
                curves.push((method, curve));
            }
        }
        out.push(m);
    }
    Ok((
        EvalReport {
            n_rows: records.len(),
            n_correct: records.len() - n_errors,
            n_errors,
            converted_rows,
            temperature,
            methods: out,
        },
        curves,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin<T> {
    pub bin_lo: T,
    pub bin_hi: T,
    pub count_e0: u64,
    pub count_e1: u64,
}

/// Equal-width histogram of scores split by error bit. The range spans the
/// finite scores; infinite scores land in the outermost bins. A constant
/// score set uses one unit-width range starting at that score.
pub fn histogram<T: Scalar>(scores: &[(T, bool)], bins: usize) -> Result<Vec<HistogramBin<T>>> {
    if bins < 2 {
        return Err(Error::param("bins", format!("must be >= 2, got {bins}")));
    }
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let finite = scores.iter().map(|(s, _)| *s).filter(|s| s.is_finite());
    let (mut lo, mut hi) = finite.fold((T::infinity(), T::neg_infinity()), |(a, b), s| (a.min(s), b.max(s)));
    if !lo.is_finite() {
        lo = T::zero();
        hi = T::one();
    } else if hi <= lo {
        hi = lo + T::one();
    }
    let nb = lit::<T>(bins as f64);
    let width = (hi - lo) / nb;
    let mut out: Vec<HistogramBin<T>> = (0..bins)
        .map(|k| HistogramBin {
            bin_lo: lo + width * lit::<T>(k as f64),
            bin_hi: if k + 1 == bins { hi } else { lo + width * lit::<T>((k + 1) as f64) },
            count_e0: 0,
            count_e1: 0,
        })
        .collect();
    for &(s, e) in scores {
        let k = if s == T::infinity() {
            bins - 1
        } else if s == T::neg_infinity() {
            0
        } else {
            ((s - lo) / (hi - lo) * nb).floor().to_usize().unwrap_or(0).min(bins - 1)
        };
        if e {
            out[k].count_e1 += 1;
        } else {
            out[k].count_e0 += 1;
        }
    }
    Ok(out)
}

pub fn emit_histogram<T: Scalar + Serialize>(bins: &[HistogramBin<T>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for b in bins {
        w.serialize(b).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
}
