//! ROC curves, AUC, TPR at fixed false-positive rates, and report tables.
//!
//! Members are the positive class and an example is predicted member when
//! `score >= threshold`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{AttackScore, Method};
use crate::error::{Error, Result};

pub const DEFAULT_FPR_TARGETS: [f64; 2] = [0.01, 0.10];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Starts at (0, 0) with threshold +∞, then one point per distinct
    /// score in descending order; the last point is (1, 1).
    pub points: Vec<RocPoint>,
    pub n_members: usize,
    pub n_nonmembers: usize,
}

/// Scores split by class, after checking both classes are present.
fn split(scores: &[AttackScore]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for s in scores {
        if !s.score.is_finite() {
            return Err(Error::NonFiniteScore { id: s.id.clone() });
        }
        if s.label.is_member() {
            pos.push(s.score);
        } else {
            neg.push(s.score);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// (score, is_member) sorted by descending score.
fn ranked(scores: &[AttackScore]) -> Vec<(f64, bool)> {
    let mut v: Vec<(f64, bool)> = scores.iter().map(|s| (s.score, s.label.is_member())).collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v
}

pub fn roc(scores: &[AttackScore]) -> Result<RocCurve> {
    let (pos, neg) = split(scores)?;
    let (n_pos, n_neg) = (pos.len(), neg.len());
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let ranked = ranked(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < ranked.len() {
        let threshold = ranked[i].0;
        while i < ranked.len() && ranked[i].0 == threshold {
            if ranked[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        });
    }
    Ok(RocCurve {
        points,
        n_members: n_pos,
        n_nonmembers: n_neg,
    })
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }
}

/// Mann–Whitney AUC: the fraction of (member, nonmember) pairs in which the
/// member scores higher, ties counting one half.
pub fn auc(scores: &[AttackScore]) -> Result<f64> {
    let (pos, neg) = split(scores)?;
    let ranked = ranked(scores);
    // Walk tie groups from the top; each member beats every nonmember in
    // lower groups and ties with nonmembers in its own group.
    let mut doubled: u128 = 0;
    let mut neg_below = neg.len() as u128;
    let mut i = 0;
    while i < ranked.len() {
        let value = ranked[i].0;
        let (mut p, mut n) = (0u128, 0u128);
        while i < ranked.len() && ranked[i].0 == value {
            if ranked[i].1 {
                p += 1;
            } else {
                n += 1;
            }
            i += 1;
        }
        neg_below -= n;
        doubled += p * (2 * neg_below + n);
    }
    Ok(doubled as f64 / (2.0 * pos.len() as f64 * neg.len() as f64))
}

/// Highest TPR over all thresholds whose FPR does not exceed `fpr_target`.
pub fn tpr_at_fpr(scores: &[AttackScore], fpr_target: f64) -> Result<f64> {
    Ok(tpr_at_fpr_on(&roc(scores)?, fpr_target))
}

pub fn tpr_at_fpr_on(curve: &RocCurve, fpr_target: f64) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| p.fpr <= fpr_target)
        .map(|p| p.tpr)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TprAt {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    #[serde(rename = "k", default, skip_serializing_if = "Option::is_none")]
    pub k_fraction: Option<f64>,
    pub auc: f64,
    pub tpr_at: Vec<TprAt>,
    pub n_members: usize,
    pub n_nonmembers: usize,
    pub mean_score_members: f64,
    pub mean_score_nonmembers: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_nll_members: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_nll_nonmembers: Option<f64>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Assemble the evaluation summary for one method's scores.
///
/// All scores must share one method and k. When `nll_by_id` is given, group
/// mean NLLs are computed over the scored ids found in it.
pub fn evaluate(
    scores: &[AttackScore],
    nll_by_id: Option<&HashMap<String, f64>>,
    fpr_targets: &[f64],
) -> Result<EvalReport> {
    let first = scores.first().ok_or(Error::SingleClass)?;
    if let Some(other) = scores
        .iter()
        .find(|s| s.method != first.method || s.k_fraction != first.k_fraction)
    {
        return Err(Error::Config(format!(
            "mixed attack configurations in one score set ('{}' is {} k={:?}, expected {} k={:?})",
            other.id, other.method, other.k_fraction, first.method, first.k_fraction
        )));
    }
    for &t in fpr_targets {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Config(format!("FPR target must be in (0, 1), got {t}")));
        }
    }
    let curve = roc(scores)?;
    let members = || scores.iter().filter(|s| s.label.is_member());
    let nonmembers = || scores.iter().filter(|s| !s.label.is_member());
    let group_nll = |it: &mut dyn Iterator<Item = &AttackScore>| {
        nll_by_id.and_then(|m| mean(it.filter_map(|s| m.get(&s.id).copied())))
    };
    Ok(EvalReport {
        method: first.method,
        k_fraction: first.k_fraction,
        auc: auc(scores)?,
        tpr_at: fpr_targets
            .iter()
            .map(|&fpr| TprAt {
                fpr,
                tpr: tpr_at_fpr_on(&curve, fpr),
            })
            .collect(),
        n_members: curve.n_members,
        n_nonmembers: curve.n_nonmembers,
        mean_score_members: mean(members().map(|s| s.score)).unwrap_or(f64::NAN),
        mean_score_nonmembers: mean(nonmembers().map(|s| s.score)).unwrap_or(f64::NAN),
        mean_nll_members: group_nll(&mut members()),
        mean_nll_nonmembers: group_nll(&mut nonmembers()),
    })
}

/// Display name used in report tables, e.g. `Min-K%++ (0.1)`.
pub fn method_label(method: Method, k: Option<f64>) -> String {
    let base = match method {
        Method::Loss => "Loss",
        Method::ParaLoss => "Paraphrased Loss",
        Method::Mink => "Min-K%",
        Method::Minkpp => "Min-K%++",
    };
    match k {
        Some(k) if method.uses_k() => format!("{base} ({k})"),
        _ => base.to_string(),
    }
}

/// Percentage with trailing zeros trimmed: 0.01 → "1", 0.001 → "0.1".
fn percent_label(fpr: f64) -> String {
    let s = format!("{:.6}", fpr * 100.0);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn header(fpr_targets: &[f64]) -> Vec<String> {
    let mut cols = vec!["Attack".to_string()];
    cols.extend(fpr_targets.iter().map(|&f| format!("TPR@{}%FPR", percent_label(f))));
    cols.push("AUC".into());
    cols
}

fn row(report: &EvalReport, fpr_targets: &[f64]) -> Vec<String> {
    let mut cols = vec![method_label(report.method, report.k_fraction)];
    for &f in fpr_targets {
        let tpr = report
            .tpr_at
            .iter()
            .find(|t| t.fpr == f)
            .map(|t| format!("{:.2}%", t.tpr * 100.0))
            .unwrap_or_else(|| "-".into());
        cols.push(tpr);
    }
    cols.push(format!("{:.4}", report.auc));
    cols
}

/// Markdown results table: Attack, one TPR column per target, AUC.
pub fn render_markdown(reports: &[EvalReport], fpr_targets: &[f64]) -> String {
    let head = header(fpr_targets);
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", head.join(" | "));
    let align: Vec<&str> = std::iter::once(":---")
        .chain(std::iter::repeat_n("---:", head.len() - 1))
        .collect();
    let _ = writeln!(out, "|{}|", align.join("|"));
    for r in reports {
        let _ = writeln!(out, "| {} |", row(r, fpr_targets).join(" | "));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(reports: &[EvalReport], fpr_targets: &[f64]) -> String {
    let mut out = String::new();
    let line = |cols: Vec<String>| cols.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(",");
    let _ = writeln!(out, "{}", line(header(fpr_targets)));
    for r in reports {
        let _ = writeln!(out, "{}", line(row(r, fpr_targets)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RocScale {
    Linear,
    #[default]
    LogLog,
}

impl std::str::FromStr for RocScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(RocScale::Linear),
            "loglog" => Ok(RocScale::LogLog),
            other => Err(Error::Config(format!(
                "unknown ROC scale '{other}' (expected linear or loglog)"
            ))),
        }
    }
}

/// ROC points as CSV text. On the log-log scale every FPR is floored at
/// `1 / n_nonmembers`, the smallest nonzero empirical FPR.
pub fn render_roc_points(curve: &RocCurve, scale: RocScale) -> String {
    let mut out = String::new();
    let floor = 1.0 / curve.n_nonmembers as f64;
    match scale {
        RocScale::Linear => {
            let _ = writeln!(out, "# roc scale=linear");
        }
        RocScale::LogLog => {
            let _ = writeln!(
                out,
                "# roc scale=loglog; fpr floored at 1/n_nonmembers = {floor} (log of zero is undefined)"
            );
        }
    }
    let _ = writeln!(out, "fpr,tpr");
    for p in &curve.points {
        let fpr = match scale {
            RocScale::Linear => p.fpr,
            RocScale::LogLog => p.fpr.max(floor),
        };
        let _ = writeln!(out, "{fpr},{}", p.tpr);
    }
    out
}

pub fn emit_roc_points(curve: &RocCurve, scale: RocScale, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(render_roc_points(curve, scale).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
