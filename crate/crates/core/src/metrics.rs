//! Objective reliance metrics over final decisions.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::BinaryDecision;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no decision records")]
    Empty,
    #[error("no reports to aggregate")]
    NoReports,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub case_id: String,
    pub human_initial: BinaryDecision,
    pub ai_suggestion: BinaryDecision,
    pub human_final: BinaryDecision,
    pub ground_truth: BinaryDecision,
}

/// Ratios over one participant's decisions. `None` marks a zero
/// denominator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelianceReport {
    pub n: usize,
    pub accuracy: Option<f64>,
    pub agreement_fraction: Option<f64>,
    pub switch_fraction: Option<f64>,
    pub over_reliance: Option<f64>,
    pub under_reliance: Option<f64>,
}

pub const METRIC_NAMES: [&str; 5] = [
    "accuracy",
    "agreement_fraction",
    "switch_fraction",
    "over_reliance",
    "under_reliance",
];

impl RelianceReport {
    /// Metric values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 5] {
        [
            self.accuracy,
            self.agreement_fraction,
            self.switch_fraction,
            self.over_reliance,
            self.under_reliance,
        ]
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn reliance_report(records: &[DecisionRecord]) -> Result<RelianceReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let count = |f: &dyn Fn(&DecisionRecord) -> bool| records.iter().filter(|r| f(r)).count();
    let n = records.len();
    let disagreed = count(&|r| r.human_initial != r.ai_suggestion);
    let switched = count(&|r| r.human_initial != r.ai_suggestion && r.human_final == r.ai_suggestion);
    let ai_wrong = count(&|r| r.ai_suggestion != r.ground_truth);
    let ai_right = n - ai_wrong;
    let over = count(&|r| r.ai_suggestion != r.ground_truth && r.human_final != r.ground_truth);
    let under = count(&|r| r.ai_suggestion == r.ground_truth && r.human_final != r.ground_truth);
    Ok(RelianceReport {
        n,
        accuracy: ratio(count(&|r| r.human_final == r.ground_truth), n),
        agreement_fraction: ratio(count(&|r| r.human_final == r.ai_suggestion), n),
        switch_fraction: ratio(switched, disagreed),
        over_reliance: ratio(over, ai_wrong),
        under_reliance: ratio(under, ai_right),
    })
}

/// Mean and 95% normal-approximation half-width over the defined values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub n: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        };
        Self {
            mean: Some(mean),
            ci_half_width: Some(half),
            n,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub participants: usize,
    pub accuracy: MetricSummary,
    pub agreement_fraction: MetricSummary,
    pub switch_fraction: MetricSummary,
    pub over_reliance: MetricSummary,
    pub under_reliance: MetricSummary,
}

impl AggregateReport {
    pub fn summaries(&self) -> [MetricSummary; 5] {
        [
            self.accuracy,
            self.agreement_fraction,
            self.switch_fraction,
            self.over_reliance,
            self.under_reliance,
        ]
    }
}

pub fn aggregate_reports(reports: &[RelianceReport]) -> Result<AggregateReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::NoReports);
    }
    let summary = |i: usize| {
        let defined: Vec<f64> = reports.iter().filter_map(|r| r.values()[i]).collect();
        MetricSummary::from_values(&defined)
    };
    Ok(AggregateReport {
        participants: reports.len(),
        accuracy: summary(0),
        agreement_fraction: summary(1),
        switch_fraction: summary(2),
        over_reliance: summary(3),
        under_reliance: summary(4),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// One row per participant, then `aggregate_mean` and `aggregate_ci95` rows.
/// Undefined values are left empty.
pub fn write_reliance_csv<W: Write>(
    out: W,
    rows: &[(String, RelianceReport)],
) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["participant", "n"];
    header.extend(METRIC_NAMES);
    w.write_record(&header)?;
    for (participant, report) in rows {
        let mut record = vec![participant.clone(), report.n.to_string()];
        record.extend(report.values().into_iter().map(cell));
        w.write_record(&record)?;
    }
    if !rows.is_empty() {
        let reports: Vec<RelianceReport> = rows.iter().map(|(_, r)| r.clone()).collect();
        let agg = aggregate_reports(&reports)?;
        let total: usize = reports.iter().map(|r| r.n).sum();
        let mut mean = vec!["aggregate_mean".to_string(), total.to_string()];
        mean.extend(agg.summaries().iter().map(|s| cell(s.mean)));
        w.write_record(&mean)?;
        let mut ci = vec!["aggregate_ci95".to_string(), total.to_string()];
        ci.extend(agg.summaries().iter().map(|s| cell(s.ci_half_width)));
        w.write_record(&ci)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryDecision::{Accept as A, Reject as R};

    fn rec(initial: BinaryDecision, ai: BinaryDecision, fin: BinaryDecision, truth: BinaryDecision) -> DecisionRecord {
        DecisionRecord {
            case_id: "c".into(),
            human_initial: initial,
            ai_suggestion: ai,
            human_final: fin,
            ground_truth: truth,
        }
    }

    #[test]
    fn all_aligned_leaves_over_reliance_undefined() {
        let r = reliance_report(&[rec(A, A, A, A), rec(R, R, R, R)]).unwrap();
        assert_eq!(r.agreement_fraction, Some(1.0));
        assert_eq!(r.accuracy, Some(1.0));
        assert_eq!(r.over_reliance, None);
        assert_eq!(r.under_reliance, Some(0.0));
        assert_eq!(r.switch_fraction, None);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(reliance_report(&[]), Err(MetricsError::Empty)));
    }

    #[test]
    fn aggregate_basics() {
        let one = RelianceReport {
            n: 1,
            accuracy: Some(0.4),
            switch_fraction: None,
            ..Default::default()
        };
        let two = RelianceReport {
            n: 1,
            accuracy: Some(0.6),
            switch_fraction: Some(0.5),
            ..Default::default()
        };
        let single = aggregate_reports(std::slice::from_ref(&one)).unwrap();
        assert_eq!(single.accuracy.mean, Some(0.4));
        assert_eq!(single.accuracy.ci_half_width, Some(0.0));
        let agg = aggregate_reports(&[one, two]).unwrap();
        assert!((agg.accuracy.mean.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(agg.switch_fraction.mean, Some(0.5));
        assert_eq!(agg.switch_fraction.n, 1);
        assert_eq!(agg.over_reliance.mean, None);
    }

    #[test]
    fn csv_has_participant_and_aggregate_rows() {
        let r = reliance_report(&[rec(R, A, A, R), rec(A, A, A, A)]).unwrap();
        let mut buf = Vec::new();
        write_reliance_csv(&mut buf, &[("p1".into(), r)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "participant,n,accuracy,agreement_fraction,switch_fraction,over_reliance,under_reliance");
        assert_eq!(lines[1], "p1,2,0.5,1,1,1,0");
        assert!(lines[2].starts_with("aggregate_mean,2,"));
        assert_eq!(lines.len(), 4);
    }
}
