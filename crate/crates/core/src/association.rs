//! Association mining and predictive validation.
//!
//! Patterns are first screened by pointwise mutual information against a
//! condition label, then validated out of sample: a ridge-penalised logistic
//! regression is fitted by deterministic full-batch gradient descent and
//! scored by cross-validated AUC.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::biomarker::{fmt_num, profile, LexiconSet};
use crate::corpus::{Corpus, Sentiment};
use crate::{Error, Result};

pub const DEFAULT_SMOOTHING: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceTable {
    pub n: u64,
    pub n_p: u64,
    pub n_c: u64,
    pub n_pc: u64,
}

impl CooccurrenceTable {
    pub fn new(n: u64, n_p: u64, n_c: u64, n_pc: u64) -> Result<Self> {
        let t = CooccurrenceTable { n, n_p, n_c, n_pc };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("co-occurrence table with n = 0".into()));
        }
        if self.n_pc > self.n_p.min(self.n_c) || self.n_p.max(self.n_c) > self.n {
            return Err(Error::InvalidInput(format!(
                "inconsistent co-occurrence table {self:?}"
            )));
        }
        if self.n_p + self.n_c - self.n_pc > self.n {
            return Err(Error::InvalidInput(format!(
                "marginals exceed n in {self:?}"
            )));
        }
        Ok(())
    }
}

/// PMI in bits, computed from the add-`k` smoothed 2×2 table.
pub fn pmi(t: &CooccurrenceTable, smoothing_k: f64) -> Result<f64> {
    t.validate()?;
    if !(smoothing_k >= 0.0 && smoothing_k.is_finite()) {
        return Err(Error::InvalidInput(format!("smoothing k = {smoothing_k}")));
    }
    if smoothing_k == 0.0 && (t.n_p == 0 || t.n_c == 0 || t.n_pc == 0) {
        return Err(Error::UndefinedPmi(format!(
            "zero count in {t:?} with no smoothing"
        )));
    }
    let k = smoothing_k;
    let both = t.n_pc as f64 + k;
    let p_only = (t.n_p - t.n_pc) as f64 + k;
    let c_only = (t.n_c - t.n_pc) as f64 + k;
    let neither = (t.n + t.n_pc - t.n_p - t.n_c) as f64 + k;
    let n = both + p_only + c_only + neither;
    let n_p = both + p_only;
    let n_c = both + c_only;
    Ok(((both * n) / (n_p * n_c)).log2())
}

/// Binary document pattern used for association mining.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    ExclusivePresent,
    GeneralisingPresent,
    InclusiveAbsent,
}

impl Pattern {
    pub const ALL: [Pattern; 3] = [
        Pattern::ExclusivePresent,
        Pattern::GeneralisingPresent,
        Pattern::InclusiveAbsent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::ExclusivePresent => "exclusive_present",
            Pattern::GeneralisingPresent => "generalising_present",
            Pattern::InclusiveAbsent => "inclusive_absent",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmiRow {
    pub pattern: Pattern,
    pub condition: Sentiment,
    pub table: CooccurrenceTable,
    pub pmi: f64,
}

/// PMI of every pattern against every labelled sentiment. Unlabelled
/// utterances are excluded from the tables.
pub fn pmi_table(corpus: &Corpus, lexicons: &LexiconSet, smoothing_k: f64) -> Result<Vec<PmiRow>> {
    let labelled: Vec<_> = corpus
        .utterances
        .iter()
        .filter(|u| u.sentiment != Sentiment::Unlabeled)
        .map(|u| {
            let p = profile(&u.text, lexicons);
            let flags = [
                p.exclusive_count > 0,
                p.generalising_count > 0,
                p.inclusive_absent,
            ];
            (u.sentiment, flags)
        })
        .collect();
    if labelled.is_empty() {
        return Err(Error::InvalidInput("no labelled utterances".into()));
    }
    let n = labelled.len() as u64;
    let mut rows = Vec::new();
    for (pi, pattern) in Pattern::ALL.iter().enumerate() {
        for condition in [Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive] {
            let n_p = labelled.iter().filter(|(_, f)| f[pi]).count() as u64;
            let n_c = labelled.iter().filter(|(s, _)| *s == condition).count() as u64;
            let n_pc = labelled
                .iter()
                .filter(|(s, f)| f[pi] && *s == condition)
                .count() as u64;
            let table = CooccurrenceTable { n, n_p, n_c, n_pc };
            rows.push(PmiRow {
                pattern: *pattern,
                condition,
                table,
                pmi: pmi(&table, smoothing_k)?,
            });
        }
    }
    Ok(rows)
}

pub fn pmi_csv(rows: &[PmiRow], smoothing_k: f64) -> String {
    let mut out = String::from("pattern,condition,n,n_p,n_c,n_pc,smoothing_k,pmi_bits\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.pattern.as_str(),
            r.condition,
            r.table.n,
            r.table.n_p,
            r.table.n_c,
            r.table.n_pc,
            smoothing_k,
            fmt_num(r.pmi)
        );
    }
    out
}

pub const FEATURE_NAMES: [&str; 4] = [
    "exclusive_density",
    "generalising_density",
    "inclusive_density",
    "inclusive_absent",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub feature_names: Vec<String>,
    pub dropped_unlabeled: usize,
}

/// Biomarker features per labelled utterance; label 1 marks negative
/// sentiment.
pub fn featurize(corpus: &Corpus, lexicons: &LexiconSet) -> Result<Dataset> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut dropped = 0;
    for u in &corpus.utterances {
        if u.sentiment == Sentiment::Unlabeled {
            dropped += 1;
            continue;
        }
        let p = profile(&u.text, lexicons);
        x.push(vec![
            p.densities.exclusive,
            p.densities.generalising,
            p.densities.inclusive,
            if p.inclusive_absent { 1.0 } else { 0.0 },
        ]);
        y.push((u.sentiment == Sentiment::Negative) as u8);
    }
    if x.is_empty() {
        return Err(Error::InvalidInput(
            "no labelled utterances to featurize".into(),
        ));
    }
    Ok(Dataset {
        x,
        y,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        dropped_unlabeled: dropped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub reg_l2: f64,
    pub lr: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            reg_l2: 1e-3,
            lr: 0.1,
            max_iter: 10_000,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_names: Vec<String>,
    pub reg_l2: f64,
    pub trained_on: String,
    pub iterations: usize,
    pub converged: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogRegModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(row)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }

    /// Named-weight records, bias last.
    pub fn named_weights(&self) -> Vec<(String, f64)> {
        self.feature_names
            .iter()
            .cloned()
            .zip(self.weights.iter().copied())
            .chain(std::iter::once(("bias".to_string(), self.bias)))
            .collect()
    }
}

/// Mean cross-entropy plus `reg_l2 · ‖w‖² / 2`, and its gradient with
/// respect to `(w, b)`.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    x: &[Vec<f64>],
    y: &[u8],
    reg_l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = bias + weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
        let t = label as f64;
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        gb += r;
        for (g, v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
    }
    loss /= n;
    gb /= n;
    let mut sq = 0.0;
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + reg_l2 * w;
        sq += w * w;
    }
    loss += 0.5 * reg_l2 * sq;
    (loss, gw, gb)
}

fn check_xy(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    let d = x
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidInput("empty feature matrix".into()))?;
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("ragged feature matrix".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    Ok(d)
}

pub fn train_logreg(
    x: &[Vec<f64>],
    y: &[u8],
    feature_names: &[String],
    params: &TrainParams,
    trained_on: &str,
) -> Result<LogRegModel> {
    let d = check_xy(x, y)?;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    for iter in 0..params.max_iter {
        let (loss, gw, gb) = loss_and_gradient(&w, b, x, y, params.reg_l2);
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: iter });
        }
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < params.tol {
            converged = true;
            break;
        }
        for (wi, gi) in w.iter_mut().zip(&gw) {
            *wi -= params.lr * gi;
        }
        b -= params.lr * gb;
        iterations = iter + 1;
    }
    let (loss, _, _) = loss_and_gradient(&w, b, x, y, params.reg_l2);
    if !loss.is_finite() {
        return Err(Error::Diverged {
            iteration: iterations,
        });
    }
    let feature_names = if feature_names.len() == d {
        feature_names.to_vec()
    } else {
        (0..d).map(|i| format!("x{i}")).collect()
    };
    Ok(LogRegModel {
        weights: w,
        bias: b,
        feature_names,
        reg_l2: params.reg_l2,
        trained_on: trained_on.to_string(),
        iterations,
        converged,
    })
}

/// Area under the ROC curve via the Mann–Whitney rank statistic, with
/// midranks for ties. `None` when either class is absent.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    Some((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model: String,
    pub metric: String,
    pub folds: usize,
    pub seed: u64,
    /// AUC of each evaluated fold, in fold order.
    pub auc_per_fold: Vec<f64>,
    pub skipped_folds: Vec<usize>,
    pub mean_auc: f64,
    /// Weights of a model refitted on all rows.
    pub feature_weights: Vec<(String, f64)>,
    pub params: TrainParams,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn folds_csv(&self) -> String {
        let mut out = String::from("fold,auc\n");
        let mut evaluated = self.auc_per_fold.iter();
        for fold in 0..self.folds {
            if self.skipped_folds.contains(&fold) {
                let _ = writeln!(out, "{fold},skipped");
            } else if let Some(a) = evaluated.next() {
                let _ = writeln!(out, "{fold},{}", fmt_num(*a));
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "validation model: {}", self.model);
        let _ = writeln!(out, "metric: {}", self.metric);
        let _ = writeln!(out, "folds: {} (seed {})", self.folds, self.seed);
        let _ = writeln!(out, "mean AUC: {}", fmt_num(self.mean_auc));
        for (name, w) in &self.feature_weights {
            let _ = writeln!(out, "weight {name}: {}", fmt_num(*w));
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

/// Seeded stratified k-fold assignment: positives and negatives are
/// shuffled separately and dealt round-robin.
pub fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    for class in [1u8, 0u8] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            fold[i] = j % k;
        }
    }
    fold
}

pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[u8],
    feature_names: &[String],
    k: usize,
    seed: u64,
    params: &TrainParams,
) -> Result<ValidationReport> {
    check_xy(x, y)?;
    if k < 2 || k > x.len() {
        return Err(Error::InvalidInput(format!(
            "{k} folds for {} rows",
            x.len()
        )));
    }
    let assignment = stratified_folds(y, k, seed);
    let mut aucs = Vec::new();
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    for fold in 0..k {
        let (mut xtr, mut ytr, mut xte, mut yte) = (vec![], vec![], vec![], vec![]);
        for i in 0..x.len() {
            if assignment[i] == fold {
                xte.push(x[i].clone());
                yte.push(y[i]);
            } else {
                xtr.push(x[i].clone());
                ytr.push(y[i]);
            }
        }
        if xtr.is_empty() {
            skipped.push(fold);
            warnings.push(format!("fold {fold}: empty training set"));
            continue;
        }
        let model = train_logreg(&xtr, &ytr, feature_names, params, "cv")?;
        let scores: Vec<f64> = xte.iter().map(|r| model.decision(r)).collect();
        match auc(&scores, &yte) {
            Some(a) => aucs.push(a),
            None => {
                skipped.push(fold);
                warnings.push(format!("fold {fold}: single-class test fold skipped"));
            }
        }
    }
    if aucs.is_empty() {
        return Err(Error::InvalidInput(
            "every fold was single-class; AUC undefined".into(),
        ));
    }
    let mean_auc = aucs.iter().sum::<f64>() / aucs.len() as f64;
    let full = train_logreg(x, y, feature_names, params, "all rows")?;
    Ok(ValidationReport {
        model: "logistic regression (L2, full-batch gradient descent)".into(),
        metric: "ROC AUC (rank statistic, midranks for ties)".into(),
        folds: k,
        seed,
        auc_per_fold: aucs,
        skipped_folds: skipped,
        mean_auc,
        feature_weights: full.named_weights(),
        params: *params,
        warnings,
    })
}
