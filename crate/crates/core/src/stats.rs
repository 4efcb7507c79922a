//! Per-script and per-label descriptive statistics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::par::{self, Execution};
use crate::script::{Label, SourceScript};

/// Line-count histogram: ten buckets of 100 lines, then one overflow bucket.
pub const HISTOGRAM_BUCKET: usize = 100;
pub const HISTOGRAM_BUCKETS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("entropy of an empty byte string is undefined")]
    EmptyInput,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("script {0} has no label")]
    Unlabeled(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shannon entropy of the byte histogram, in bits per byte.
pub fn shannon_entropy(bytes: &[u8]) -> Result<f64, StatsError> {
    if bytes.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut counts = [0u64; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let total = bytes.len() as f64;
    let entropy = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    // -0.0 for single-symbol input
    Ok(entropy.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScriptStats {
    pub script_id: String,
    pub label: u8,
    pub byte_size: usize,
    pub line_count: usize,
    /// Bits per byte; 0 for an empty script.
    pub entropy: f64,
}

pub fn script_stats(script: &SourceScript) -> Result<ScriptStats, StatsError> {
    let label = script.label.ok_or_else(|| StatsError::Unlabeled(script.id.clone()))?;
    let bytes = script.text.as_bytes();
    Ok(ScriptStats {
        script_id: script.id.clone(),
        label: label.as_u8(),
        byte_size: bytes.len(),
        line_count: script.text.lines().count(),
        entropy: if bytes.is_empty() { 0.0 } else { shannon_entropy(bytes)? },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSummary {
    pub count: usize,
    pub median_byte_size: f64,
    pub mean_entropy: f64,
    /// Population standard deviation.
    pub stddev_entropy: f64,
    /// `HISTOGRAM_BUCKETS` buckets of `HISTOGRAM_BUCKET` lines plus overflow.
    pub line_histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub per_script: Vec<ScriptStats>,
    pub per_label: BTreeMap<Label, LabelSummary>,
}

impl CorpusReport {
    pub fn total(&self) -> usize {
        self.per_label.values().map(|s| s.count).sum()
    }

    pub fn summary(&self, label: Label) -> Option<&LabelSummary> {
        self.per_label.get(&label)
    }

    /// One row per script: `script_id,label,byte_size,line_count,entropy`.
    pub fn write_scripts_csv<W: Write>(&self, writer: W) -> Result<(), StatsError> {
        let mut csv = csv::Writer::from_writer(writer);
        for row in &self.per_script {
            csv.serialize(row)?;
        }
        csv.flush()?;
        Ok(())
    }

    /// One row per label with the aggregates and histogram bucket columns.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<(), StatsError> {
        let mut csv = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["label", "count", "median_byte_size", "mean_entropy", "stddev_entropy"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for b in 0..HISTOGRAM_BUCKETS {
            header.push(format!(
                "lines_{}_{}",
                b * HISTOGRAM_BUCKET,
                (b + 1) * HISTOGRAM_BUCKET - 1
            ));
        }
        header.push(format!("lines_{}_plus", HISTOGRAM_BUCKETS * HISTOGRAM_BUCKET));
        csv.write_record(&header)?;
        for (label, s) in &self.per_label {
            let mut row = vec![
                label.to_string(),
                s.count.to_string(),
                format!("{:.1}", s.median_byte_size),
                format!("{:.6}", s.mean_entropy),
                format!("{:.6}", s.stddev_entropy),
            ];
            row.extend(s.line_histogram.iter().map(|c| c.to_string()));
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    }
}

pub fn corpus_report(samples: &[SourceScript], exec: Execution) -> Result<CorpusReport, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let per_script = par::map(exec, samples, script_stats)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut per_label = BTreeMap::new();
    for label in Label::ALL {
        let rows: Vec<&ScriptStats> = per_script.iter().filter(|s| s.label == label.as_u8()).collect();
        if !rows.is_empty() {
            per_label.insert(label, summarize(&rows));
        }
    }
    Ok(CorpusReport { per_script, per_label })
}

fn summarize(rows: &[&ScriptStats]) -> LabelSummary {
    let n = rows.len() as f64;
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.byte_size).collect();
    sizes.sort_unstable();
    let mid = sizes.len() / 2;
    let median_byte_size = if sizes.len() % 2 == 1 {
        sizes[mid] as f64
    } else {
        (sizes[mid - 1] + sizes[mid]) as f64 / 2.0
    };
    let mean_entropy = rows.iter().map(|r| r.entropy).sum::<f64>() / n;
    let variance = rows.iter().map(|r| (r.entropy - mean_entropy).powi(2)).sum::<f64>() / n;
    let mut line_histogram = vec![0; HISTOGRAM_BUCKETS + 1];
    for row in rows {
        line_histogram[(row.line_count / HISTOGRAM_BUCKET).min(HISTOGRAM_BUCKETS)] += 1;
    }
    LabelSummary {
        count: rows.len(),
        median_byte_size,
        mean_entropy,
        stddev_entropy: variance.sqrt(),
        line_histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn entropy_known_values() {
        assert!(close(shannon_entropy(b"aaaa").unwrap(), 0.0));
        assert!(close(shannon_entropy(b"ab").unwrap(), 1.0));
        assert!(close(shannon_entropy(b"abcd").unwrap(), 2.0));
        let all: Vec<u8> = (0..=255).collect();
        assert!(close(shannon_entropy(&all).unwrap(), 8.0));
        assert!(matches!(shannon_entropy(b""), Err(StatsError::EmptyInput)));
    }

    #[test]
    fn report_counts() {
        let scripts = vec![
            SourceScript::labeled("a", "Get-Date", Label::Benign),
            SourceScript::labeled("b", "Get-Date\nGet-Process", Label::Benign),
            SourceScript::labeled("c", "IEX $x", Label::Malicious),
            SourceScript::labeled("d", "", Label::Malicious),
        ];
        let report = corpus_report(&scripts, Execution::Sequential).unwrap();
        assert_eq!(report.summary(Label::Benign).unwrap().count, 2);
        assert_eq!(report.summary(Label::Malicious).unwrap().count, 2);
        assert_eq!(report.total(), 4);
        assert_eq!(report.per_script[1].line_count, 2);
        assert_eq!(report.per_script[3].line_count, 0);
        assert_eq!(report.summary(Label::Benign).unwrap().median_byte_size, 14.0);
    }

    #[test]
    fn single_label_corpus() {
        let scripts = vec![SourceScript::labeled("a", "x", Label::Malicious)];
        let report = corpus_report(&scripts, Execution::Sequential).unwrap();
        assert_eq!(report.per_label.len(), 1);
        assert!(report.summary(Label::Benign).is_none());
    }

    #[test]
    fn empty_and_unlabeled() {
        assert!(matches!(
            corpus_report(&[], Execution::Sequential),
            Err(StatsError::EmptyCorpus)
        ));
        let unlabeled = vec![SourceScript::new("u", "x")];
        assert!(matches!(
            corpus_report(&unlabeled, Execution::Sequential),
            Err(StatsError::Unlabeled(_))
        ));
    }

    #[test]
    fn histogram_buckets_and_overflow() {
        let long = "x\n".repeat(1500);
        let mid = "x\n".repeat(450);
        let scripts = vec![
            SourceScript::labeled("a", long, Label::Benign),
            SourceScript::labeled("b", mid, Label::Benign),
        ];
        let report = corpus_report(&scripts, Execution::Parallel).unwrap();
        let hist = &report.summary(Label::Benign).unwrap().line_histogram;
        assert_eq!(hist.len(), 11);
        assert_eq!(hist[4], 1);
        assert_eq!(hist[10], 1);
    }

    #[test]
    fn csv_outputs() {
        let scripts = vec![
            SourceScript::labeled("a", "ab", Label::Benign),
            SourceScript::labeled("b", "abcd", Label::Malicious),
        ];
        let report = corpus_report(&scripts, Execution::Sequential).unwrap();
        let mut rows = Vec::new();
        report.write_scripts_csv(&mut rows).unwrap();
        let rows = String::from_utf8(rows).unwrap();
        assert!(rows.starts_with("script_id,label,byte_size,line_count,entropy\n"));
        assert!(rows.contains("a,0,2,1,1.0\n"));
        let mut summary = Vec::new();
        report.write_summary_csv(&mut summary).unwrap();
        let summary = String::from_utf8(summary).unwrap();
        assert_eq!(summary.lines().count(), 3);
        assert!(summary
            .lines()
            .next()
            .unwrap()
            .ends_with("lines_900_999,lines_1000_plus"));
    }
}
