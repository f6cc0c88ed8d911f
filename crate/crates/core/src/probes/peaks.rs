use serde::{Deserialize, Serialize};

use super::sweep::SweepSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// Round numbers are multiples of this.
    pub multiple: i64,
    /// Neighbors within this distance in `x` are compared.
    pub radius: i64,
    pub tolerance: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            multiple: 10,
            radius: 1,
            tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub peaks: Vec<i64>,
    /// Fraction of interior multiples of `multiple` that are peaks.
    pub peak_rate_multiples: f64,
    /// The same fraction over interior non-multiples.
    pub peak_rate_others: f64,
}

/// Local maxima of a sweep, split by round and non-round `x`.
///
/// `x` is a peak when its whole window `[x - r, x + r]` lies inside the
/// series, `p_x >= p_y - tolerance` for every neighbor `y` in the window, and
/// `p_x` is strictly above the lowest neighbor.
pub fn round_number_peaks(series: &SweepSeries, config: PeakConfig) -> Result<PeakReport> {
    if config.radius < 1 {
        return Err(Error::InvalidSeries("peak radius must be at least 1".into()));
    }
    if config.multiple < 2 {
        return Err(Error::InvalidSeries("round multiple must be at least 2".into()));
    }
    let points = series.points();
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return Ok(PeakReport {
            peaks: Vec::new(),
            peak_rate_multiples: 0.0,
            peak_rate_others: 0.0,
        });
    };

    let mut peaks = Vec::new();
    let (mut multiples, mut multiple_peaks) = (0usize, 0usize);
    let (mut others, mut other_peaks) = (0usize, 0usize);
    for (i, point) in points.iter().enumerate() {
        let x = point.x;
        if x - config.radius < first.x || x + config.radius > last.x {
            continue;
        }
        let neighbors: Vec<f64> = points
            .iter()
            .enumerate()
            .filter(|&(j, q)| j != i && (q.x - x).abs() <= config.radius)
            .map(|(_, q)| q.p)
            .collect();
        if neighbors.is_empty() {
            continue;
        }
        let lowest = neighbors.iter().copied().fold(f64::INFINITY, f64::min);
        let is_peak = neighbors.iter().all(|&q| point.p >= q - config.tolerance) && point.p > lowest;
        let round = x.rem_euclid(config.multiple) == 0;
        if round {
            multiples += 1;
        } else {
            others += 1;
        }
        if is_peak {
            peaks.push(x);
            if round {
                multiple_peaks += 1;
            } else {
                other_peaks += 1;
            }
        }
    }
    let rate = |hits: usize, total: usize| if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    Ok(PeakReport {
        peaks,
        peak_rate_multiples: rate(multiple_peaks, multiples),
        peak_rate_others: rate(other_peaks, others),
    })
}
