//! Pairwise preference percentages, weighted Cohen's kappa and annotation speeds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no data")]
    NoData,
    #[error("rater lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("kappa is undefined: raters never disagree by chance yet differ")]
    DegenerateMarginals,
    #[error("duplicate judgment for pair {pair_id}, evaluator {evaluator_id}, dimension {dimension}")]
    DuplicateJudgment { pair_id: String, evaluator_id: String, dimension: Dimension },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("cannot read judgments: {0}")]
    Csv(String),
}

/// Ordinal verdict on a pair: A < tie < B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    A,
    #[serde(rename = "tie")]
    Tie,
    B,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::A, Verdict::Tie, Verdict::B];

    pub fn ordinal(self) -> usize {
        match self {
            Verdict::A => 0,
            Verdict::Tie => 1,
            Verdict::B => 2,
        }
    }

    /// The same verdict with the two sides of the pair swapped.
    pub fn flipped(self) -> Verdict {
        match self {
            Verdict::A => Verdict::B,
            Verdict::Tie => Verdict::Tie,
            Verdict::B => Verdict::A,
        }
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Verdict::A),
            "b" => Ok(Verdict::B),
            "tie" | "=" | "equal" => Ok(Verdict::Tie),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Naturalness,
    Variability,
    Engagement,
    General,
    Length,
    Style,
    Temperament,
}

impl Dimension {
    pub const ALL: [Dimension; 7] = [
        Dimension::Naturalness,
        Dimension::Variability,
        Dimension::Engagement,
        Dimension::General,
        Dimension::Length,
        Dimension::Style,
        Dimension::Temperament,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Naturalness => "naturalness",
            Dimension::Variability => "variability",
            Dimension::Engagement => "engagement",
            Dimension::General => "general",
            Dimension::Length => "length",
            Dimension::Style => "style",
            Dimension::Temperament => "temperament",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Dimension::ALL.into_iter().find(|d| d.as_str() == s).ok_or_else(|| format!("unknown dimension {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseJudgment {
    pub pair_id: String,
    #[serde(rename = "evaluator")]
    pub evaluator_id: String,
    pub dimension: Dimension,
    pub verdict: Verdict,
}

#[derive(Deserialize)]
struct JudgmentRow {
    pair_id: String,
    evaluator: String,
    dimension: String,
    verdict: String,
}

/// Reads `pair_id,evaluator,dimension,verdict` CSV rows.
pub fn read_judgments<R: Read>(reader: R) -> Result<Vec<PairwiseJudgment>, EvalError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, row) in csv.deserialize::<JudgmentRow>().enumerate() {
        let row = row.map_err(|e| EvalError::Csv(e.to_string()))?;
        let bad = |e: String| EvalError::Csv(format!("row {}: {e}", line + 2));
        let judgment = PairwiseJudgment {
            dimension: row.dimension.parse().map_err(bad)?,
            verdict: row.verdict.parse().map_err(bad)?,
            pair_id: row.pair_id,
            evaluator_id: row.evaluator,
        };
        let key = (judgment.pair_id.clone(), judgment.evaluator_id.clone(), judgment.dimension);
        if !seen.insert(key) {
            return Err(EvalError::DuplicateJudgment {
                pair_id: judgment.pair_id,
                evaluator_id: judgment.evaluator_id,
                dimension: judgment.dimension,
            });
        }
        out.push(judgment);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preference {
    pub pct_a: f64,
    pub pct_b: f64,
    pub pct_tie: f64,
    pub judgments: usize,
}

/// `count / total` as a percentage in hundredths, rounded half up.
fn hundredths(count: usize, total: usize) -> u64 {
    let (c, n) = (count as u64, total as u64);
    (c * 20_000 + n) / (2 * n)
}

/// Share of A, B and tie verdicts on one dimension, every evaluator counted.
///
/// B and tie are rounded half up to two decimals and A takes the remainder,
/// so the three always add up to exactly 100.
pub fn preference_percentages(judgments: &[PairwiseJudgment], dimension: Dimension) -> Result<Preference, EvalError> {
    let verdicts: Vec<Verdict> = judgments.iter().filter(|j| j.dimension == dimension).map(|j| j.verdict).collect();
    percentages_of(&verdicts)
}

pub fn percentages_of(verdicts: &[Verdict]) -> Result<Preference, EvalError> {
    let n = verdicts.len();
    if n == 0 {
        return Err(EvalError::NoData);
    }
    let count = |v: Verdict| verdicts.iter().filter(|x| **x == v).count();
    let b = hundredths(count(Verdict::B), n);
    let tie = hundredths(count(Verdict::Tie), n);
    let a = 10_000 - b - tie;
    Ok(Preference { pct_a: a as f64 / 100.0, pct_b: b as f64 / 100.0, pct_tie: tie as f64 / 100.0, judgments: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    #[default]
    Linear,
    Quadratic,
}

impl FromStr for WeightScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(WeightScheme::Linear),
            "quadratic" => Ok(WeightScheme::Quadratic),
            other => Err(format!("unknown weight scheme {other:?}")),
        }
    }
}

impl WeightScheme {
    /// Disagreement weight between ordinal categories `i` and `j` on a `k`-point scale.
    pub fn weight(self, i: usize, j: usize, k: usize) -> f64 {
        let d = i.abs_diff(j) as f64 / (k - 1) as f64;
        match self {
            WeightScheme::Linear => d,
            WeightScheme::Quadratic => d * d,
        }
    }
}

/// Weighted Cohen's kappa over the ordinal scale A < tie < B.
///
/// `1 - sum(w * observed) / sum(w * expected)`, with the expected matrix built
/// from the two raters' marginals. Two raters giving the same single verdict
/// throughout agree perfectly and score 1.
pub fn weighted_cohen_kappa(rater1: &[Verdict], rater2: &[Verdict], weights: WeightScheme) -> Result<f64, EvalError> {
    if rater1.len() != rater2.len() {
        return Err(EvalError::LengthMismatch(rater1.len(), rater2.len()));
    }
    if rater1.is_empty() {
        return Err(EvalError::NoData);
    }
    const K: usize = 3;
    let n = rater1.len() as f64;
    let mut observed = [[0.0f64; K]; K];
    let mut row = [0.0f64; K];
    let mut col = [0.0f64; K];
    for (a, b) in rater1.iter().zip(rater2) {
        observed[a.ordinal()][b.ordinal()] += 1.0;
        row[a.ordinal()] += 1.0;
        col[b.ordinal()] += 1.0;
    }
    let mut disagreement = 0.0;
    let mut chance = 0.0;
    for i in 0..K {
        for j in 0..K {
            let w = weights.weight(i, j, K);
            disagreement += w * observed[i][j] / n;
            chance += w * (row[i] / n) * (col[j] / n);
        }
    }
    if chance == 0.0 {
        return if disagreement == 0.0 { Ok(1.0) } else { Err(EvalError::DegenerateMarginals) };
    }
    Ok(1.0 - disagreement / chance)
}

/// Kappa between evaluators on one dimension, over the pairs both judged.
///
/// With more than two evaluators the pairwise kappas are averaged. `None` when
/// fewer than two evaluators share a pair.
pub fn dimension_kappa(judgments: &[PairwiseJudgment], dimension: Dimension, weights: WeightScheme) -> Option<f64> {
    let mut by_eval: BTreeMap<&str, BTreeMap<&str, Verdict>> = BTreeMap::new();
    for j in judgments.iter().filter(|j| j.dimension == dimension) {
        by_eval.entry(&j.evaluator_id).or_default().insert(&j.pair_id, j.verdict);
    }
    let evaluators: Vec<_> = by_eval.values().collect();
    let mut kappas = Vec::new();
    for (i, a) in evaluators.iter().enumerate() {
        for b in &evaluators[i + 1..] {
            let (r1, r2): (Vec<Verdict>, Vec<Verdict>) =
                a.iter().filter_map(|(pair, va)| b.get(pair).map(|vb| (*va, *vb))).unzip();
            if let Ok(k) = weighted_cohen_kappa(&r1, &r2, weights) {
                kappas.push(k);
            }
        }
    }
    (!kappas.is_empty()).then(|| kappas.iter().sum::<f64>() / kappas.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionKind {
    Selection,
    Refinement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub annotator_id: String,
    pub kind: SessionKind,
    #[serde(default)]
    pub turns_selected: u64,
    /// Seconds.
    pub duration: f64,
    #[serde(default)]
    pub final_token_counts: Vec<u64>,
}

fn total_time(records: &[&SessionRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoData);
    }
    if let Some(r) = records.iter().find(|r| r.duration.is_nan() || r.duration <= 0.0) {
        return Err(EvalError::InvalidRecord(format!(
            "session of {} has non-positive duration {}",
            r.annotator_id, r.duration
        )));
    }
    Ok(records.iter().map(|r| r.duration).sum())
}

/// Turns selected per minute across all selection sessions.
pub fn turn_speed(records: &[SessionRecord]) -> Result<f64, EvalError> {
    let sel: Vec<_> = records.iter().filter(|r| r.kind == SessionKind::Selection).collect();
    let secs = total_time(&sel)?;
    let turns: u64 = sel.iter().map(|r| r.turns_selected).sum();
    Ok(turns as f64 * 60.0 / secs)
}

/// Tokens of final refined text per second across all refinement sessions.
pub fn token_speed(records: &[SessionRecord]) -> Result<f64, EvalError> {
    let refs: Vec<_> = records.iter().filter(|r| r.kind == SessionKind::Refinement).collect();
    let secs = total_time(&refs)?;
    let tokens: u64 = refs.iter().flat_map(|r| &r.final_token_counts).sum();
    Ok(tokens as f64 / secs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionRow {
    pub dimension: Dimension,
    pub pct_a: f64,
    pub pct_b: f64,
    pub pct_tie: f64,
    pub kappa_w: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Speeds {
    pub v_turn: Option<f64>,
    pub v_tokens: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AgreementReport {
    pub rows: Vec<DimensionRow>,
    pub speeds: Speeds,
}

/// One row per dimension that has judgments, in fixed dimension order.
pub fn build_report(
    judgments: &[PairwiseJudgment],
    weights: WeightScheme,
    sessions: &[SessionRecord],
) -> AgreementReport {
    let rows = Dimension::ALL
        .into_iter()
        .filter_map(|dim| {
            let p = preference_percentages(judgments, dim).ok()?;
            Some(DimensionRow {
                dimension: dim,
                pct_a: p.pct_a,
                pct_b: p.pct_b,
                pct_tie: p.pct_tie,
                kappa_w: dimension_kappa(judgments, dim, weights),
            })
        })
        .collect();
    AgreementReport { rows, speeds: Speeds { v_turn: turn_speed(sessions).ok(), v_tokens: token_speed(sessions).ok() } }
}

/// Plain-text table: one row per dimension, then any speeds.
pub fn render_report(report: &AgreementReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>7} {:>7} {:>7} {:>8}", "dimension", "A", "B", "tie", "kappa_w");
    for row in &report.rows {
        let kappa = row.kappa_w.map(|k| format!("{k:.2}")).unwrap_or_else(|| "/".into());
        let _ = writeln!(
            out,
            "{:<12} {:>7.2} {:>7.2} {:>7.2} {:>8}",
            row.dimension.as_str(),
            row.pct_a,
            row.pct_b,
            row.pct_tie,
            kappa
        );
    }
    if let Some(v) = report.speeds.v_turn {
        let _ = writeln!(out, "v_turn   {v:.2} turns/min");
    }
    if let Some(v) = report.speeds.v_tokens {
        let _ = writeln!(out, "v_tokens {v:.2} tokens/s");
    }
    out
}
