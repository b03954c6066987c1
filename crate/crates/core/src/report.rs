//! Per-group metric tables and plot data.
//!
//! A group is one `(model, strategy, subtask)` triple. Tables put
//! `model × strategy` on rows and `subtask × {ECE, BS, PS}` on columns,
//! with three decimals; CSV and JSON keep full precision. Undefined values
//! render as `—` in tables, empty fields in CSV and `null` in JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics::{reliability_curve, summarize, MetricsError, MetricsSummary, Observation};
use crate::metrics::{ReliabilityBin, ReliabilityCurve};
use crate::model::{ConfidenceRecord, Delta, ParseStatus, PromptStrategy, SubtaskKind};

pub const DEFAULT_BIN_COUNT: usize = 10;
pub const UNDEFINED: &str = "—";

/// Which confidence column a table or curve is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Raw,
    Calibrated,
}

impl Source {
    pub const ALL: [Source; 2] = [Source::Raw, Source::Calibrated];

    pub fn label(self) -> &'static str {
        match self {
            Source::Raw => "raw",
            Source::Calibrated => "calibrated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub model: String,
    pub strategy: PromptStrategy,
    pub subtask: SubtaskKind,
}

impl GroupKey {
    /// File-name friendly form, e.g. `org_model__intrinsic__CCP`.
    pub fn slug(&self) -> String {
        let model: String = self
            .model
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '-' | '.') {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        format!("{model}__{}__{}", self.strategy, self.subtask.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    #[serde(flatten)]
    pub key: GroupKey,
    /// All records of the group.
    pub total: usize,
    /// Records with a parsed confidence and a grade; the metric sample size.
    pub n: usize,
    pub unparseable: usize,
    /// Parsed records without a grade.
    pub ungraded: usize,
    pub raw: Option<MetricsSummary<f64>>,
    pub calibrated: Option<MetricsSummary<f64>>,
    pub raw_curve: Option<ReliabilityCurve<f64>>,
    pub calibrated_curve: Option<ReliabilityCurve<f64>>,
}

impl GroupReport {
    pub fn summary(&self, source: Source) -> Option<&MetricsSummary<f64>> {
        match source {
            Source::Raw => self.raw.as_ref(),
            Source::Calibrated => self.calibrated.as_ref(),
        }
    }

    pub fn curve(&self, source: Source) -> Option<&ReliabilityCurve<f64>> {
        match source {
            Source::Raw => self.raw_curve.as_ref(),
            Source::Calibrated => self.calibrated_curve.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub bin_count: usize,
    pub groups: Vec<GroupReport>,
}

fn observations(
    records: &[&ConfidenceRecord],
    pick: impl Fn(&ConfidenceRecord) -> Option<(f64, bool)>,
) -> Vec<Observation<f64>> {
    records
        .iter()
        .filter_map(|r| pick(r))
        .map(|(confidence, correct)| Observation::new(confidence, correct))
        .collect()
}

type SourceMetrics = (Option<MetricsSummary<f64>>, Option<ReliabilityCurve<f64>>);

fn metrics_for(obs: &[Observation<f64>], bin_count: usize) -> Result<SourceMetrics, MetricsError> {
    if obs.is_empty() {
        return Ok((None, None));
    }
    Ok((
        Some(summarize(obs)?),
        Some(reliability_curve(obs, bin_count)?),
    ))
}

impl Report {
    /// Groups `records` and computes raw and calibrated metrics per group.
    /// Calibrated metrics exist only when every graded record of the group
    /// carries a calibrated confidence.
    pub fn build<'a>(
        records: impl IntoIterator<Item = &'a ConfidenceRecord>,
        bin_count: usize,
    ) -> Result<Self, MetricsError> {
        if bin_count < 2 {
            return Err(MetricsError::TooFewBins(bin_count));
        }
        let mut grouped: BTreeMap<GroupKey, Vec<&ConfidenceRecord>> = BTreeMap::new();
        for r in records {
            let key = GroupKey {
                model: r.model.clone(),
                strategy: r.strategy,
                subtask: r.point.subtask,
            };
            grouped.entry(key).or_default().push(r);
        }
        let mut groups = Vec::with_capacity(grouped.len());
        for (key, members) in grouped {
            let raw_obs = observations(&members, ConfidenceRecord::observation);
            let cal_obs = observations(&members, ConfidenceRecord::calibrated_observation);
            let unparseable = members
                .iter()
                .filter(|r| r.parse_status == ParseStatus::Unparseable)
                .count();
            let ungraded = members
                .iter()
                .filter(|r| r.parse_status == ParseStatus::Ok && r.delta == Delta::Ungraded)
                .count();
            let (raw, raw_curve) = metrics_for(&raw_obs, bin_count)?;
            let (calibrated, calibrated_curve) = if cal_obs.len() == raw_obs.len() {
                metrics_for(&cal_obs, bin_count)?
            } else {
                (None, None)
            };
            groups.push(GroupReport {
                key,
                total: members.len(),
                n: raw_obs.len(),
                unparseable,
                ungraded,
                raw,
                calibrated,
                raw_curve,
                calibrated_curve,
            });
        }
        Ok(Self { bin_count, groups })
    }

    pub fn group(
        &self,
        model: &str,
        strategy: PromptStrategy,
        subtask: SubtaskKind,
    ) -> Option<&GroupReport> {
        self.groups.iter().find(|g| {
            g.key.model == model && g.key.strategy == strategy && g.key.subtask == subtask
        })
    }

    fn subtasks(&self) -> Vec<SubtaskKind> {
        let set: BTreeSet<_> = self.groups.iter().map(|g| g.key.subtask).collect();
        set.into_iter().collect()
    }

    fn rows(&self) -> Vec<(&str, PromptStrategy)> {
        let set: BTreeSet<_> = self
            .groups
            .iter()
            .map(|g| (g.key.model.as_str(), g.key.strategy))
            .collect();
        set.into_iter().collect()
    }

    /// Fixed-width text table for one confidence source.
    pub fn table(&self, source: Source) -> String {
        let subtasks = self.subtasks();
        let rows = self.rows();
        let mut body: Vec<Vec<String>> = Vec::new();
        for &(model, strategy) in &rows {
            let mut line = vec![model.to_string(), strategy.to_string()];
            for &subtask in &subtasks {
                let summary = self
                    .group(model, strategy, subtask)
                    .and_then(|g| g.summary(source));
                line.push(fmt3(summary.map(|s| s.ece)));
                line.push(fmt3(summary.map(|s| s.brier)));
                line.push(fmt3(summary.and_then(|s| s.performance_score)));
            }
            body.push(line);
        }
        let mut header = vec!["model".to_string(), "strategy".to_string()];
        for _ in &subtasks {
            header.extend(["ECE↓", "BS↓", "PS↑"].map(String::from));
        }
        let cols = header.len();
        let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
        for line in &body {
            for (w, cell) in widths.iter_mut().zip(line) {
                *w = (*w).max(cell.chars().count());
            }
        }
        // subtask labels span their three metric columns
        for (i, s) in subtasks.iter().enumerate() {
            let span: usize = widths[2 + 3 * i..5 + 3 * i].iter().sum::<usize>() + 2;
            let need = s.label().chars().count();
            if need > span {
                widths[4 + 3 * i] += need - span;
            }
        }

        let mut out = String::new();
        let _ = writeln!(out, "{} confidence", source.label());
        let mut top = format!("{:w0$} | {:w1$}", "", "", w0 = widths[0], w1 = widths[1]);
        for (i, s) in subtasks.iter().enumerate() {
            let span: usize = widths[2 + 3 * i..5 + 3 * i].iter().sum::<usize>() + 2;
            let _ = write!(top, " | {:<span$}", s.label());
        }
        out.push_str(top.trim_end());
        out.push('\n');
        let render = |cells: &[String]| -> String {
            let mut line = String::new();
            for (i, cell) in cells.iter().enumerate() {
                let pad = widths[i] - cell.chars().count();
                let sep = match i {
                    0 => "",
                    1 => " | ",
                    _ if (i - 2) % 3 == 0 => " | ",
                    _ => " ",
                };
                line.push_str(sep);
                if i < 2 {
                    line.push_str(cell);
                    line.push_str(&" ".repeat(pad));
                } else {
                    line.push_str(&" ".repeat(pad));
                    line.push_str(cell);
                }
            }
            line.trim_end().to_string()
        };
        out.push_str(&render(&header));
        out.push('\n');
        let rule_len = widths.iter().sum::<usize>() + 3 + 3 * subtasks.len() + 2 * subtasks.len();
        out.push_str(&"-".repeat(rule_len.max(cols)));
        out.push('\n');
        for line in &body {
            out.push_str(&render(line));
            out.push('\n');
        }
        out
    }

    /// One line per group, full precision.
    pub fn csv(&self, source: Source) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model",
            "strategy",
            "subtask",
            "n",
            "unparseable",
            "ungraded",
            "total",
            "ece",
            "brier",
            "performance_score",
            "mean_confidence",
            "accuracy",
        ])
        .expect("write to memory");
        for g in &self.groups {
            let s = g.summary(source);
            w.write_record([
                g.key.model.clone(),
                g.key.strategy.to_string(),
                g.key.subtask.label().to_string(),
                s.map_or(0, |s| s.n).to_string(),
                g.unparseable.to_string(),
                g.ungraded.to_string(),
                g.total.to_string(),
                full(s.map(|s| s.ece)),
                full(s.map(|s| s.brier)),
                full(s.and_then(|s| s.performance_score)),
                full(s.map(|s| s.mean_confidence)),
                full(s.map(|s| s.accuracy)),
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 csv")
    }

    pub fn json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Three-decimal cell; `-0.000` prints as `0.000`.
pub fn fmt3(value: Option<f64>) -> String {
    match value {
        Some(v) if v.is_finite() => {
            let s = format!("{v:.3}");
            if s == "-0.000" {
                "0.000".into()
            } else {
                s
            }
        }
        _ => UNDEFINED.into(),
    }
}

fn full(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// `lower,upper,count,mean_confidence,accuracy` per bin.
pub fn curve_csv(curve: &ReliabilityCurve<f64>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lower", "upper", "count", "mean_confidence", "accuracy"])
        .expect("write to memory");
    for ReliabilityBin {
        lower,
        upper,
        count,
        mean_confidence,
        accuracy,
    } in &curve.bins
    {
        w.write_record([
            lower.to_string(),
            upper.to_string(),
            count.to_string(),
            full(*mean_confidence),
            full(*accuracy),
        ])
        .expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 csv")
}

/// `lower,upper,count,fraction` per bin.
pub fn histogram_csv(curve: &ReliabilityCurve<f64>) -> String {
    let total = curve.total().max(1) as f64;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lower", "upper", "count", "fraction"])
        .expect("write to memory");
    for bin in &curve.bins {
        w.write_record([
            bin.lower.to_string(),
            bin.upper.to_string(),
            bin.count.to_string(),
            (bin.count as f64 / total).to_string(),
        ])
        .expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 csv")
}
