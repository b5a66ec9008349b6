//! Recovering a preceding blur by dividing out a known subsequent one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mtf::{MtfSamples, FREQUENCIES};

/// Minimum value both operands must exceed for a quotient to be formed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisionGuard {
    pub epsilon: f64,
}

impl Default for DivisionGuard {
    fn default() -> Self {
        Self { epsilon: 0.1 }
    }
}

impl DivisionGuard {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside (0, 1)")));
        }
        Ok(Self { epsilon })
    }
}

/// Result of [`divide_mtf`]. Omitted entries of `recovered` are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Division {
    pub frequencies: [f64; 8],
    pub recovered_h: [Option<f64>; 8],
    pub recovered_v: [Option<f64>; 8],
    /// Frequencies omitted in at least one direction.
    pub omitted_frequencies: Vec<f64>,
    /// Quotients above 1 that were clamped.
    pub clamp_count: usize,
}

impl Division {
    /// Per-frequency mask: true where both directions were recovered.
    pub fn mask(&self) -> [bool; 8] {
        std::array::from_fn(|i| self.recovered_h[i].is_some() && self.recovered_v[i].is_some())
    }

    /// Recovered values with omitted entries filled from `fill`.
    pub fn filled(&self, fill: &MtfSamples) -> MtfSamples {
        MtfSamples::new(
            std::array::from_fn(|i| self.recovered_h[i].unwrap_or(fill.h[i])),
            std::array::from_fn(|i| self.recovered_v[i].unwrap_or(fill.v[i])),
        )
    }

    /// JSON record `{recovered, omitted_frequencies, clamp_count}`.
    pub fn to_record(&self) -> serde_json::Value {
        serde_json::json!({
            "recovered": { "h": self.recovered_h, "v": self.recovered_v },
            "omitted_frequencies": self.omitted_frequencies,
            "clamp_count": self.clamp_count,
        })
    }
}

/// Divide `combined` by `known_b2` wherever both exceed the guard.
/// Quotients are clamped to `[0, 1]`.
pub fn divide_mtf(combined: &MtfSamples, known_b2: &MtfSamples, guard: DivisionGuard) -> Result<Division> {
    combined.check_grid(known_b2)?;
    let eps = guard.epsilon;
    let mut clamp_count = 0;
    let mut quotient = |c: f64, k: f64| {
        if c > eps && k > eps {
            let q = c / k;
            if q > 1.0 {
                clamp_count += 1;
            }
            Some(q.clamp(0.0, 1.0))
        } else {
            None
        }
    };
    let recovered_h: [Option<f64>; 8] = std::array::from_fn(|i| quotient(combined.h[i], known_b2.h[i]));
    let recovered_v: [Option<f64>; 8] = std::array::from_fn(|i| quotient(combined.v[i], known_b2.v[i]));
    if recovered_h.iter().chain(&recovered_v).all(Option::is_none) {
        return Err(Error::NoRecoverableBand);
    }
    let omitted_frequencies = (0..8)
        .filter(|&i| recovered_h[i].is_none() || recovered_v[i].is_none())
        .map(|i| FREQUENCIES[i])
        .collect();
    Ok(Division {
        frequencies: combined.frequencies,
        recovered_h,
        recovered_v,
        omitted_frequencies,
        clamp_count,
    })
}

/// Per-frequency, per-direction minimum over a sequence of estimates.
pub fn min_envelope_over_time(estimates: &[MtfSamples]) -> Result<MtfSamples> {
    let (first, rest) = estimates.split_first().ok_or(Error::Empty("estimate sequence"))?;
    let mut out = first.clone();
    for e in rest {
        out.check_grid(e)?;
        for i in 0..8 {
            out.h[i] = out.h[i].min(e.h[i]);
            out.v[i] = out.v[i].min(e.v[i]);
        }
    }
    Ok(out)
}
