//! Estimator accuracy metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mtf::MtfSamples;

/// Mean absolute MTF errors in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmaeScore {
    pub mae_h: f64,
    pub mae_v: f64,
    pub amae: f64,
}

/// Average of the per-direction mean absolute errors over the eight
/// frequencies, in percent.
pub fn amae(est: &MtfSamples, gt: &MtfSamples) -> Result<AmaeScore> {
    amae_partial(est, gt, &[true; 8])
}

/// AMAE restricted to the frequencies where `mask` is set.
pub fn amae_partial(est: &MtfSamples, gt: &MtfSamples, mask: &[bool; 8]) -> Result<AmaeScore> {
    est.check_grid(gt)?;
    let n = mask.iter().filter(|m| **m).count();
    if n == 0 {
        return Err(Error::Empty("frequency mask"));
    }
    let mae = |a: &[f64; 8], b: &[f64; 8]| {
        100.0 * (0..8).filter(|&i| mask[i]).map(|i| (a[i] - b[i]).abs()).sum::<f64>() / n as f64
    };
    let mae_h = mae(&est.h, &gt.h);
    let mae_v = mae(&est.v, &gt.v);
    Ok(AmaeScore {
        mae_h,
        mae_v,
        amae: (mae_h + mae_v) / 2.0,
    })
}

/// Expected AMAE of a cascade whose two parts are estimated with
/// independent errors `a1` and `a2`.
pub fn expected_amae(a1: f64, a2: f64) -> f64 {
    a1.hypot(a2)
}

/// Trimmed envelope of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub n_samples: usize,
}

/// Sort, drop `floor(0.025 n)` values from each tail, then report the
/// extremes and median of what remains.
pub fn robust_stats(values: &[f64]) -> Result<RobustStats> {
    if values.is_empty() {
        return Err(Error::Empty("robust_stats input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let trim = values.len() * 25 / 1000;
    let kept = &v[trim..v.len() - trim];
    Ok(RobustStats {
        min: kept[0],
        median: median_sorted(kept),
        max: kept[kept.len() - 1],
        n_samples: values.len(),
    })
}

/// Median of an already sorted, non-empty slice.
pub fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Plain median; errors on empty input.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(median_sorted(&v))
}

/// One cell of an AMAE table: rows are dataset/method, columns kernel
/// type/size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmaeCell {
    pub row: String,
    pub column: String,
    pub amae: f64,
}

/// Render cells as a CSV matrix, keeping first-seen row and column order.
/// Missing cells are left blank.
pub fn amae_table_csv(cells: &[AmaeCell]) -> String {
    let mut rows: Vec<&str> = Vec::new();
    let mut cols: Vec<&str> = Vec::new();
    for c in cells {
        if !rows.contains(&c.row.as_str()) {
            rows.push(&c.row);
        }
        if !cols.contains(&c.column.as_str()) {
            cols.push(&c.column);
        }
    }
    let mut out = String::from("row");
    for c in &cols {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for r in &rows {
        out.push_str(r);
        for c in &cols {
            out.push(',');
            if let Some(cell) = cells.iter().rev().find(|x| x.row == *r && x.column == *c) {
                out.push_str(&format!("{:.2}", cell.amae));
            }
        }
        out.push('\n');
    }
    out
}
