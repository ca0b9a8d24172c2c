//! Premise/reference overlap buckets and their relation to CIDEr.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{pearson, InstanceScores};

pub const DEFAULT_DICE_THRESHOLD: f64 = 0.3;
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Low,
    High,
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bucket::Low => "low",
            Bucket::High => "high",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapRecord {
    pub pair_id: String,
    pub dice: f64,
    pub cider: f64,
    pub bucket: Bucket,
}

impl OverlapRecord {
    pub fn new(pair_id: impl Into<String>, dice: f64, cider: f64, threshold: f64) -> Self {
        OverlapRecord {
            pair_id: pair_id.into(),
            dice,
            cider,
            bucket: if dice <= threshold { Bucket::Low } else { Bucket::High },
        }
    }
}

/// Records from per-instance metric scores; every instance must carry Dice.
pub fn records_from_scores(scores: &[InstanceScores], threshold: f64) -> Result<Vec<OverlapRecord>> {
    scores
        .iter()
        .map(|s| {
            let d = s.dice.ok_or_else(|| {
                Error::Data(format!("no Dice value for pair {} (premises not supplied)", s.pair_id))
            })?;
            Ok(OverlapRecord::new(&s.pair_id, d, s.cider, threshold))
        })
        .collect()
}

/// Partition by threshold, `dice ≤ threshold` going low. Buckets already
/// stored on the records are ignored.
pub fn overlap_split(records: &[OverlapRecord], threshold: f64) -> (Vec<OverlapRecord>, Vec<OverlapRecord>) {
    records
        .iter()
        .map(|r| OverlapRecord::new(&r.pair_id, r.dice, r.cider, threshold))
        .partition(|r| r.bucket == Bucket::Low)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub bucket: Bucket,
    pub count: usize,
    pub mean_cider: Option<f64>,
    /// Pearson r between Dice and CIDEr; absent when undefined.
    pub pearson_r: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub threshold: f64,
    pub low: BucketStats,
    pub high: BucketStats,
    /// `(bin lower edge, count)` over `[0, 1]` in steps of 0.05.
    pub histogram: Vec<(f64, usize)>,
    pub warnings: Vec<String>,
}

fn bin_of(dice: f64) -> usize {
    ((dice * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

fn stats(bucket: Bucket, rs: &[OverlapRecord], warnings: &mut Vec<String>) -> BucketStats {
    let mean_cider = if rs.is_empty() {
        warnings.push(format!("{bucket} overlap bucket is empty"));
        None
    } else {
        Some(rs.iter().map(|r| r.cider).sum::<f64>() / rs.len() as f64)
    };
    let pearson_r = if rs.is_empty() {
        None
    } else {
        let xs: Vec<f64> = rs.iter().map(|r| r.dice).collect();
        let ys: Vec<f64> = rs.iter().map(|r| r.cider).collect();
        match pearson(&xs, &ys) {
            Ok(r) => Some(r),
            Err(e) => {
                warnings.push(format!("{bucket} overlap correlation omitted: {e}"));
                None
            }
        }
    };
    BucketStats {
        bucket,
        count: rs.len(),
        mean_cider,
        pearson_r,
    }
}

pub fn overlap_report(records: &[OverlapRecord], threshold: f64) -> Result<OverlapReport> {
    if let Some(r) = records.iter().find(|r| !(0.0..=1.0).contains(&r.dice)) {
        return Err(Error::Data(format!("Dice {} for pair {} is outside [0, 1]", r.dice, r.pair_id)));
    }
    let (low, high) = overlap_split(records, threshold);
    let mut warnings = Vec::new();
    let low = stats(Bucket::Low, &low, &mut warnings);
    let high = stats(Bucket::High, &high, &mut warnings);
    let mut counts = [0usize; HISTOGRAM_BINS];
    for r in records {
        counts[bin_of(r.dice)] += 1;
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (i as f64 / HISTOGRAM_BINS as f64, c))
        .collect();
    Ok(OverlapReport {
        threshold,
        low,
        high,
        histogram,
        warnings,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

/// Tab-separated summary: one row per bucket, warnings as `#` lines.
pub fn write_report<W: Write>(mut w: W, header: &[String], report: &OverlapReport) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# threshold={}", report.threshold)?;
    for warning in &report.warnings {
        writeln!(w, "# warning: {warning}")?;
    }
    writeln!(w, "bucket\tcount\tmean_cider\tpearson_r")?;
    for s in [&report.low, &report.high] {
        writeln!(w, "{}\t{}\t{}\t{}", s.bucket, s.count, opt(s.mean_cider), opt(s.pearson_r))?;
    }
    Ok(())
}

/// Plot data: a histogram section then a scatter section, each a TSV block
/// introduced by a `# section` line.
pub fn write_plot_data<W: Write>(
    mut w: W,
    header: &[String],
    report: &OverlapReport,
    records: &[OverlapRecord],
) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# section histogram")?;
    writeln!(w, "bin_start\tcount")?;
    for (x, c) in &report.histogram {
        writeln!(w, "{x:.2}\t{c}")?;
    }
    writeln!(w, "# section scatter")?;
    writeln!(w, "pair_id\tbucket\tdice\tcider")?;
    for r in records {
        writeln!(w, "{}\t{}\t{:.6}\t{:.6}", r.pair_id, r.bucket, r.dice, r.cider)?;
    }
    Ok(())
}
