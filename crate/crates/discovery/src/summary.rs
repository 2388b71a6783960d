//! Order statistics, grouped summaries and rank correlation over result
//! rows.
//!
//! Quantiles use linear interpolation between order statistics: for sorted
//! `x[0..n]` and probability `p`, `h = (n - 1) p` and the quantile is
//! `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::results::ResultRow;

pub const QUANTILE_RULE: &str = "linear interpolation between order statistics, h = (n - 1) p";

/// Quantile of already sorted, non-empty data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    (!values.is_empty()).then(|| quantile_sorted(&sorted(values), p))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

pub fn iqr(values: &[f64]) -> Option<f64> {
    let s = sorted(values);
    (!s.is_empty()).then(|| quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Ranks starting at 1, ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let mx = mean(x)?;
    let my = mean(y)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation; `None` when either side has constant ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(HarnessError::validation("spearman needs equal-length inputs"));
    }
    if x.len() < 3 {
        return Err(HarnessError::validation("spearman needs at least three pairs"));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Spearman correlation of two metrics over rows where both are defined.
pub fn spearman_metrics(rows: &[&ResultRow], x: &str, y: &str) -> Result<Option<f64>> {
    let (a, b): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| Some((r.metric(x)?, r.metric(y)?)))
        .unzip();
    if a.len() < 3 {
        return Ok(None);
    }
    spearman(&a, &b)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub group: String,
    pub metric: String,
    pub count: usize,
    /// Rows where the metric is undefined.
    pub missing: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub mean: f64,
    /// Censored first passages among the counted rows.
    pub censored: usize,
}

/// Group label of `row` over `by` (`all` when `by` is empty).
pub fn group_label(row: &ResultRow, by: &[&str]) -> Result<String> {
    if by.is_empty() {
        return Ok("all".into());
    }
    by.iter()
        .map(|c| {
            row.label(c)
                .map(str::to_string)
                .ok_or_else(|| HarnessError::validation(format!("cannot group by `{c}`")))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.join("|"))
}

/// Successful rows grouped by `by`, groups in sorted order.
pub fn group_rows<'a>(rows: &'a [ResultRow], by: &[&str]) -> Result<BTreeMap<String, Vec<&'a ResultRow>>> {
    let mut groups: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        groups.entry(group_label(r, by)?).or_default().push(r);
    }
    Ok(groups)
}

/// Median, IQR, mean and censor count per group and metric. Metrics with no
/// defined value in a group are omitted.
pub fn summarize(rows: &[ResultRow], by: &[&str], metrics: &[&str]) -> Result<Vec<SummaryRow>> {
    let mut out = Vec::new();
    for (group, members) in group_rows(rows, by)? {
        for &metric in metrics {
            let values: Vec<f64> = members.iter().filter_map(|r| r.metric(metric)).collect();
            let Some(s) = describe(&values) else { continue };
            let censored = if metric == "first_passage" {
                members.iter().filter(|r| r.censored == Some(true)).count()
            } else {
                0
            };
            out.push(SummaryRow {
                group: group.clone(),
                metric: metric.to_string(),
                count: values.len(),
                missing: members.len() - values.len(),
                censored,
                ..s
            });
        }
    }
    Ok(out)
}

fn describe(values: &[f64]) -> Option<SummaryRow> {
    let s = sorted(values);
    if s.is_empty() {
        return None;
    }
    let (q1, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.75));
    Some(SummaryRow {
        group: String::new(),
        metric: String::new(),
        count: s.len(),
        missing: 0,
        median: quantile_sorted(&s, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        mean: mean(&s)?,
        censored: 0,
    })
}

/// Mean of `metric` within each design cell, grouped by `by`: the first
/// stage of a median-of-cell-means summary.
pub fn cell_means(rows: &[ResultRow], metric: &str, by: &[&str]) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        if let Some(v) = r.metric(metric) {
            cells
                .entry((group_label(r, by)?, r.cell().id()))
                .or_default()
                .push(v);
        }
    }
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((group, _), values) in cells {
        out.entry(group).or_default().push(mean(&values).unwrap_or(f64::NAN));
    }
    Ok(out)
}

/// Summary of per-cell means of `metric`, grouped by `by`.
pub fn summarize_cell_means(rows: &[ResultRow], metric: &str, by: &[&str]) -> Result<Vec<SummaryRow>> {
    Ok(cell_means(rows, metric, by)?
        .into_iter()
        .filter_map(|(group, means)| {
            describe(&means).map(|s| SummaryRow {
                group,
                metric: format!("cell_mean_{metric}"),
                ..s
            })
        })
        .collect())
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "group", "metric", "count", "missing", "median", "q1", "q3", "iqr", "mean", "censored",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
