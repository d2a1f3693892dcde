//! Report files: `report.json` plus tab-separated error and metric tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiment::MetricReport;
use crate::{Error, Result};

pub const REPORT_FILE: &str = "report.json";
pub const TABLE1_FILE: &str = "table1.tsv";
pub const TABLE2_FILE: &str = "table2.tsv";

/// Per-regime error mean and std, plus pairwise ANOVA rows.
pub fn table1_tsv(r: &MetricReport) -> String {
    let mut out = String::from("regime\tn\tfailures\tmean_error\tstd_error\n");
    for s in &r.regimes {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{:.6}",
            s.regime,
            s.errors.len(),
            s.failures,
            s.mean_error,
            s.std_error
        );
    }
    if !r.anova_pairs.is_empty() {
        out.push_str("\nanova\tf_stat\tp_value\tdf_between\tdf_within\n");
        for p in &r.anova_pairs {
            let _ = writeln!(
                out,
                "{} vs {}\t{:.6}\t{:.6e}\t{}\t{}",
                p.a, p.b, p.result.f_stat, p.result.p_value, p.result.df_between, p.result.df_within
            );
        }
    }
    out
}

/// One row per category, lower-is-better scores, then ranking outcomes.
pub fn table2_tsv(r: &MetricReport) -> String {
    let mut out = String::new();
    let Some(t) = &r.metric_table else {
        out.push_str("no metric table\n");
        return out;
    };
    out.push_str("category\tquality_mean\tneuroscore\tsynthetic_neuroscore\tinv_synthetic_neuroscore");
    if t.conventional.is_some() {
        out.push_str("\tinv_is\tmmd2\tfid");
    }
    out.push('\n');
    for (c, name) in r.meta.categories.iter().enumerate() {
        let _ = write!(
            out,
            "{name}\t{:.3}\t{:.6}\t{:.6}\t{:.6}",
            r.meta.category_quality_means[c],
            r.ground_truth_neuroscore[c],
            t.synthetic_neuroscore[c],
            t.inv_synthetic_neuroscore[c]
        );
        if let Some(cv) = &t.conventional {
            let _ = write!(out, "\t{:.6}\t{:.6}\t{:.6}", cv.inv_inception_score[c], cv.mmd2[c], cv.fid[c]);
        }
        out.push('\n');
    }
    out.push_str("\nmetric\tranking\n");
    for m in &t.rankings {
        let label = serde_json::to_value(m.outcome).expect("ranking serializes");
        let _ = writeln!(out, "{}\t{}", m.metric, label.as_str().unwrap_or_default());
    }
    out
}

pub fn write_report(r: &MetricReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(r).expect("report serializes");
    fs::write(dir.join(REPORT_FILE), json)?;
    fs::write(dir.join(TABLE1_FILE), table1_tsv(r))?;
    fs::write(dir.join(TABLE2_FILE), table2_tsv(r))?;
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<MetricReport> {
    let text = fs::read_to_string(dir.join(REPORT_FILE))?;
    serde_json::from_str(&text).map_err(|e| {
        let line_start: usize = text.split_inclusive('\n').take(e.line().saturating_sub(1)).map(str::len).sum();
        Error::format((line_start + e.column().saturating_sub(1)) as u64, format!("report: {e}"))
    })
}
