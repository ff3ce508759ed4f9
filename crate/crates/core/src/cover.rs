//! Interval covers of the critical set, the parity map across the cover
//! gaps, and bifurcation indices of continua.
//!
//! A cover consists of open hyperbolic test intervals `J_i` with test
//! points `λ_i`, separated by compact gap intervals `J̄_i` that contain
//! the critical values. A scan over a finite window always produces a
//! locally finite (indeed finite) family.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::evans::EvansScan;
use crate::Result;

/// Cover of the critical set inside one scanned window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JCover {
    /// Open hyperbolic intervals, ordered by λ; one more than the gaps.
    pub open_intervals: Vec<(f64, f64)>,
    /// Test points, midpoints of the open intervals.
    pub test_points: Vec<f64>,
    /// Evans signs at the test points.
    pub signs: Vec<i8>,
    /// Compact gap intervals `J̄_i` between consecutive open intervals;
    /// each contains one cluster of critical values.
    pub gaps: Vec<(f64, f64)>,
}

impl JCover {
    /// Index of the gap interval closest to `lambda`, if its distance is at
    /// most `tol`.
    pub fn locate_gap(&self, lambda: f64, tol: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &(lo, hi)) in self.gaps.iter().enumerate() {
            let dist = if lambda < lo {
                lo - lambda
            } else if lambda > hi {
                lambda - hi
            } else {
                0.0
            };
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((i, dist));
            }
        }
        best.and_then(|(i, d)| if d <= tol { Some(i) } else { None })
    }
}

/// Builds a cover from a scan: critical values (point-like and
/// interval-valued) closer than `cluster_tol` are merged into one gap; the
/// open complements become the test intervals.
pub fn build_cover(scan: &EvansScan, cluster_tol: f64) -> Result<JCover> {
    let window = (
        scan.samples.first().expect("scan has samples").lambda,
        scan.samples.last().expect("scan has samples").lambda,
    );

    // collect critical items as small closed intervals
    let mut items: Vec<(f64, f64)> = Vec::new();
    for c in &scan.certificates {
        items.push((c.bracket_lo, c.bracket_hi));
    }
    for t in &scan.touch_zeros {
        items.push((t.lambda, t.lambda));
    }
    for &(lo, hi) in &scan.nonhyperbolic_intervals {
        items.push((lo, hi));
    }
    items.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // merge clusters
    let mut gaps: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in items {
        match gaps.last_mut() {
            Some(last) if lo - last.1 < cluster_tol => last.1 = last.1.max(hi),
            _ => gaps.push((lo, hi)),
        }
    }

    // open complements inside the window
    let mut open_intervals = Vec::with_capacity(gaps.len() + 1);
    let mut cursor = window.0;
    for &(lo, hi) in &gaps {
        open_intervals.push((cursor, lo));
        cursor = hi;
    }
    open_intervals.push((cursor, window.1));
    // degenerate leading/trailing intervals appear when a critical cluster
    // sits on the window edge; drop them together with their gap side
    if open_intervals
        .iter()
        .any(|&(lo, hi)| !(hi - lo > 0.0))
    {
        return Err(Error::NoHyperbolicWindow);
    }

    let test_points: Vec<f64> = open_intervals
        .iter()
        .map(|&(lo, hi)| 0.5 * (lo + hi))
        .collect();
    let mut signs = Vec::with_capacity(test_points.len());
    for &tp in &test_points {
        let s = scan
            .samples
            .iter()
            .min_by(|a, b| {
                (a.lambda - tp)
                    .abs()
                    .partial_cmp(&(b.lambda - tp).abs())
                    .unwrap()
            })
            .unwrap();
        signs.push(s.sign);
    }
    if signs.iter().all(|s| *s == 0) {
        return Err(Error::NoHyperbolicWindow);
    }
    Ok(JCover {
        open_intervals,
        test_points,
        signs,
        gaps,
    })
}

/// The parity map `π(i) = ½(sgn E(λ_{i+1}) − sgn E(λ_i))` across each gap.
pub fn j_parity(cover: &JCover) -> Vec<i8> {
    cover
        .signs
        .windows(2)
        .map(|w| (w[1] - w[0]) / 2)
        .collect()
}

/// Oriented sum of parities over the gap indices a continuum touches;
/// zero is consistent with a bounded continuum, nonzero certifies
/// unboundedness.
pub fn bifurcation_index(cover: &JCover, touched: &[usize]) -> Result<i64> {
    let pi = j_parity(cover);
    let mut sum = 0i64;
    for &i in touched {
        let p = pi
            .get(i)
            .ok_or_else(|| Error::invalid(format!("touched index {i} outside the cover")))?;
        sum += *p as i64;
    }
    Ok(sum)
}
