//! Inter-rater reliability of averaged ratings.
//!
//! The estimator is the two-way random-effects, absolute-agreement,
//! average-measures intraclass correlation (ICC(A,k) in McGraw & Wong's
//! notation), computed from a two-way ANOVA without replication, with the
//! F-distribution confidence interval from the same source.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::data::RatingMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccEstimate {
    pub icc: f64,
    pub n_subjects: usize,
    pub n_raters: usize,
    /// Between-subject (row) mean square.
    pub msr: f64,
    /// Between-rater (column) mean square.
    pub msc: f64,
    /// Residual mean square.
    pub mse: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
}

impl IccEstimate {
    pub fn band(&self) -> ReliabilityBand {
        interpret_icc(self.icc.clamp(-1.0, 1.0)).unwrap_or(ReliabilityBand::Poor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReliabilityBand {
    Poor,
    Moderate,
    Good,
    Excellent,
}

impl fmt::Display for ReliabilityBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReliabilityBand::Poor => "poor",
            ReliabilityBand::Moderate => "moderate",
            ReliabilityBand::Good => "good",
            ReliabilityBand::Excellent => "excellent",
        })
    }
}

/// Bands are exclusive at their lower edge: 0.90 is good, anything above is excellent.
pub fn interpret_icc(value: f64) -> Result<ReliabilityBand> {
    if !(-1.0..=1.0).contains(&value) {
        return Err(Error::OutOfRange(value));
    }
    Ok(if value > 0.90 {
        ReliabilityBand::Excellent
    } else if value > 0.75 {
        ReliabilityBand::Good
    } else if value > 0.50 {
        ReliabilityBand::Moderate
    } else {
        ReliabilityBand::Poor
    })
}

/// Per-subject mean across raters.
pub fn mean_across_raters(ratings: &RatingMatrix) -> Vec<f64> {
    let k = ratings.n_raters() as f64;
    ratings
        .rows()
        .iter()
        .map(|row| row.iter().sum::<f64>() / k)
        .collect()
}

struct Anova {
    msr: f64,
    msc: f64,
    mse: f64,
    ssr: f64,
    sst: f64,
}

fn anova(ratings: &RatingMatrix) -> Anova {
    let n = ratings.n_subjects();
    let k = ratings.n_raters();
    let rows = ratings.rows();
    let row_means = mean_across_raters(ratings);
    let mut col_means = vec![0.0; k];
    for row in rows {
        for (c, v) in col_means.iter_mut().zip(row) {
            *c += v;
        }
    }
    col_means.iter_mut().for_each(|c| *c /= n as f64);
    let grand = row_means.iter().sum::<f64>() / n as f64;

    let ssr = k as f64 * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ssc = n as f64 * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let sst: f64 = rows
        .iter()
        .flat_map(|r| r.iter())
        .map(|v| (v - grand).powi(2))
        .sum();
    let sse: f64 = rows
        .iter()
        .zip(&row_means)
        .flat_map(|(r, rm)| {
            r.iter()
                .zip(&col_means)
                .map(move |(v, cm)| (v - rm - cm + grand).powi(2))
        })
        .sum();
    Anova {
        msr: ssr / (n - 1) as f64,
        msc: ssc / (k - 1) as f64,
        mse: sse / ((n - 1) * (k - 1)) as f64,
        ssr,
        sst,
    }
}

/// Reliability of the average of all raters' scores, with a 95% interval.
pub fn icc_average_raters(ratings: &RatingMatrix) -> Result<IccEstimate> {
    icc_average_raters_at(ratings, DEFAULT_CONFIDENCE)
}

pub fn icc_average_raters_at(ratings: &RatingMatrix, confidence: f64) -> Result<IccEstimate> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::OutOfRange(confidence));
    }
    let n = ratings.n_subjects() as f64;
    let k = ratings.n_raters() as f64;
    let a = anova(ratings);
    if a.sst == 0.0 || a.ssr <= 1e-12 * a.sst {
        return Err(Error::DegenerateRatings(format!(
            "question `{}`: all subjects have the same mean rating",
            ratings.question_id
        )));
    }
    let (msr, msc, mse) = (a.msr, a.msc, a.mse);
    let icc = (msr - mse) / (msr + (msc - mse) / n);

    let (ci_low, ci_high) = if mse == 0.0 && msc == 0.0 {
        (1.0, 1.0)
    } else {
        agreement_interval(n, k, msr, msc, mse, confidence)?
    };

    Ok(IccEstimate {
        icc,
        n_subjects: ratings.n_subjects(),
        n_raters: ratings.n_raters(),
        msr,
        msc,
        mse,
        ci_low,
        ci_high,
        confidence,
    })
}

/// F-based interval for the single-rater agreement ICC, stepped up to `k`
/// raters with Spearman-Brown.
fn agreement_interval(
    n: f64,
    k: f64,
    msr: f64,
    msc: f64,
    mse: f64,
    confidence: f64,
) -> Result<(f64, f64)> {
    let rho = (msr - mse) / (msr + (k - 1.0) * mse + k * (msc - mse) / n);
    let a = k * rho / (n * (1.0 - rho));
    let b = 1.0 + k * rho * (n - 1.0) / (n * (1.0 - rho));
    let num = (a * msc + b * mse).powi(2);
    let den = (a * msc).powi(2) / (k - 1.0) + (b * mse).powi(2) / ((n - 1.0) * (k - 1.0));
    let v = num / den;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::DegenerateRatings(format!(
            "interval degrees of freedom are undefined (v = {v})"
        )));
    }
    let p = 1.0 - (1.0 - confidence) / 2.0;
    let f_lower = FisherSnedecor::new(n - 1.0, v)
        .map_err(|e| Error::Invalid(e.to_string()))?
        .inverse_cdf(p);
    let f_upper = FisherSnedecor::new(v, n - 1.0)
        .map_err(|e| Error::Invalid(e.to_string()))?
        .inverse_cdf(p);
    let common = k * msc + (k * n - k - n) * mse;
    let low1 = n * (msr - f_lower * mse) / (f_lower * common + n * msr);
    let high1 = n * (f_upper * msr - mse) / (common + n * f_upper * msr);
    let step_up = |r: f64| k * r / (1.0 + (k - 1.0) * r);
    Ok((step_up(low1), step_up(high1)))
}

/// One row of a long-format ratings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub video_id: String,
    pub rater_id: String,
    pub question_id: String,
    pub score: f64,
}

/// Reads `video_id,rater_id,question_id,score`.
pub fn read_ratings_csv(path: impl AsRef<Path>) -> Result<Vec<RatingRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    for col in ["video_id", "rater_id", "question_id", "score"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.into()));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<RatingRecord>() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        if !rec.score.is_finite() {
            return Err(Error::NonFiniteValue {
                row: out.len() + 2,
                column: "score".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_ratings_csv(records: &[RatingRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    for r in records {
        w.serialize(r)
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Ratings of one question, split into rater panels (sets of videos rated
/// by the same raters) plus a pooled matrix aligning panel raters by position.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionRatings {
    pub question_id: String,
    pub sets: Vec<RatingMatrix>,
}

impl QuestionRatings {
    /// Stacks the panels, aligning the j-th rater of every panel in column j.
    pub fn pooled(&self) -> Result<RatingMatrix> {
        let k = self.sets[0].n_raters();
        if self.sets.iter().any(|s| s.n_raters() != k) {
            return Err(Error::Invalid(format!(
                "question `{}`: panels have different rater counts; cannot pool",
                self.question_id
            )));
        }
        if self.sets.len() == 1 {
            return Ok(self.sets[0].clone());
        }
        let mut subjects = Vec::new();
        let mut rows = Vec::new();
        for s in &self.sets {
            subjects.extend(s.subject_ids.iter().cloned());
            rows.extend(s.rows().iter().cloned());
        }
        let raters = (0..k).map(|j| format!("position_{j}")).collect();
        RatingMatrix::new(self.question_id.clone(), subjects, raters, rows)
    }

    /// Per-subject mean rating over all panels, in panel order.
    pub fn subject_means(&self) -> Vec<(String, f64)> {
        self.sets
            .iter()
            .flat_map(|s| s.subject_ids.iter().cloned().zip(mean_across_raters(s)))
            .collect()
    }
}

/// Groups long-format records by question and splits each question into
/// complete rater panels. Every video in a panel must be rated exactly once
/// by every rater of that panel.
pub fn group_ratings(records: &[RatingRecord]) -> Result<Vec<QuestionRatings>> {
    let mut by_question: Vec<(String, Vec<&RatingRecord>)> = Vec::new();
    for r in records {
        match by_question.iter_mut().find(|(q, _)| *q == r.question_id) {
            Some((_, v)) => v.push(r),
            None => by_question.push((r.question_id.clone(), vec![r])),
        }
    }
    by_question
        .into_iter()
        .map(|(q, recs)| {
            Ok(QuestionRatings {
                sets: split_panels(&q, &recs)?,
                question_id: q,
            })
        })
        .collect()
}

/// Videos, raters and `(video, rater) -> score` cells of one panel.
type Panel = (Vec<String>, Vec<String>, BTreeMap<(usize, usize), f64>);

fn split_panels<'a>(question: &str, recs: &[&'a RatingRecord]) -> Result<Vec<RatingMatrix>> {
    // union-find over videos and raters
    let mut node: HashMap<(bool, &str), usize> = HashMap::new();
    let mut parent: Vec<usize> = Vec::new();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut pairs = Vec::with_capacity(recs.len());
    for r in recs {
        let mut id_of = |key: (bool, &'a str)| -> usize {
            *node.entry(key).or_insert_with(|| {
                parent.push(parent.len());
                parent.len() - 1
            })
        };
        let v = id_of((true, r.video_id.as_str()));
        let w = id_of((false, r.rater_id.as_str()));
        pairs.push((v, w));
        let (a, b) = (find(&mut parent, v), find(&mut parent, w));
        if a != b {
            parent[b] = a;
        }
    }

    // panels in order of first appearance
    let mut panel_index: HashMap<usize, usize> = HashMap::new();
    let mut panels: Vec<Panel> = Vec::new();
    for (r, &(v, _)) in recs.iter().zip(&pairs) {
        let root = find(&mut parent, v);
        let p = *panel_index.entry(root).or_insert_with(|| {
            panels.push((Vec::new(), Vec::new(), BTreeMap::new()));
            panels.len() - 1
        });
        let (videos, raters, cells) = &mut panels[p];
        let vi = position_or_push(videos, &r.video_id);
        let ri = position_or_push(raters, &r.rater_id);
        if cells.insert((vi, ri), r.score).is_some() {
            return Err(Error::Invalid(format!(
                "question `{question}`: video `{}` rated twice by `{}`",
                r.video_id, r.rater_id
            )));
        }
    }

    panels
        .into_iter()
        .map(|(videos, raters, cells)| {
            let (n, k) = (videos.len(), raters.len());
            if cells.len() != n * k {
                return Err(Error::Invalid(format!(
                    "question `{question}`: panel with {n} videos and {k} raters has only {} ratings",
                    cells.len()
                )));
            }
            let rows = (0..n)
                .map(|i| (0..k).map(|j| cells[&(i, j)]).collect())
                .collect();
            RatingMatrix::new(question.to_string(), videos, raters, rows)
        })
        .collect()
}

fn position_or_push(v: &mut Vec<String>, id: &str) -> usize {
    match v.iter().position(|x| x == id) {
        Some(i) => i,
        None => {
            v.push(id.to_string());
            v.len() - 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccReport {
    pub icc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub band: ReliabilityBand,
    pub n: usize,
    pub k: usize,
}

impl From<&IccEstimate> for IccReport {
    fn from(e: &IccEstimate) -> Self {
        IccReport {
            icc: e.icc,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            band: e.band(),
            n: e.n_subjects,
            k: e.n_raters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionReport {
    pub question_id: String,
    #[serde(flatten)]
    pub pooled: IccReport,
    pub sets: Vec<IccReport>,
}

/// Pooled and per-panel ICC for one question, with 95% intervals.
pub fn question_report(q: &QuestionRatings) -> Result<QuestionReport> {
    question_report_at(q, DEFAULT_CONFIDENCE)
}

pub fn question_report_at(q: &QuestionRatings, confidence: f64) -> Result<QuestionReport> {
    let pooled = icc_average_raters_at(&q.pooled()?, confidence)?;
    let sets = q
        .sets
        .iter()
        .map(|s| icc_average_raters_at(s, confidence).map(|e| IccReport::from(&e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuestionReport {
        question_id: q.question_id.clone(),
        pooled: IccReport::from(&pooled),
        sets,
    })
}
