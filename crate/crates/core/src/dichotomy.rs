//! Exponential-dichotomy subspaces on half-lines, decay-constant fits and
//! the Fredholm index report.
//!
//! The stable space `R(P⁺(0))` on `ℝ₊` is approximated by the right
//! singular subspace of the smallest singular values of `Φ_λ(T, 0)`; the
//! backward-decaying space `N(P⁻(0))` on `ℝ₋` by the same construction for
//! `Φ_λ(−T, 0)`. Ranks are chosen at the largest gap of the log singular
//! values unless a hint pins them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg;
use crate::system::{self, SystemSpec};
use crate::Result;

/// Which half-line a subspace lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HalfLine {
    Plus,
    Minus,
}

/// Fitted dichotomy constants `|Φ(t,s)Π(s)| ≤ K e^{−α(t−s)}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DichotomyConstants {
    pub k: f64,
    pub alpha: f64,
    pub fit_residual: f64,
}

/// Orthonormal basis of a dichotomy subspace at time zero, with the
/// spectral-gap evidence it was extracted from.
#[derive(Debug, Clone)]
pub struct DichotomySubspaces {
    pub lambda: f64,
    pub halfline: HalfLine,
    /// d×k matrix with orthonormal columns.
    pub basis: DMatrix<f64>,
    pub rank: usize,
    /// Ratio of the singular values straddling the rank cut.
    pub gap: f64,
    /// Coarse constants from the singular spectrum; refine with
    /// [`estimate_dichotomy_constants`].
    pub constants: DichotomyConstants,
    /// Horizon used for the truncated propagator.
    pub truncation: f64,
    /// Log singular values of the propagator, descending.
    pub log_singular_values: Vec<f64>,
}

/// Options shared by the subspace extractors.
#[derive(Debug, Clone)]
pub struct SubspaceOptions {
    pub horizon: f64,
    pub gap_threshold: f64,
    pub rank_hint: Option<usize>,
    pub ode_tol: f64,
    pub qr_window: f64,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        SubspaceOptions {
            horizon: crate::defaults::HORIZON,
            gap_threshold: crate::defaults::GAP_THRESHOLD,
            rank_hint: None,
            ode_tol: crate::defaults::ODE_TOL,
            qr_window: crate::defaults::QR_WINDOW,
        }
    }
}

fn extract_subspace(
    sys: &SystemSpec,
    lambda: f64,
    halfline: HalfLine,
    opts: &SubspaceOptions,
) -> Result<DichotomySubspaces> {
    if !(opts.horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    if !(opts.gap_threshold > 1.0) {
        return Err(Error::invalid("gap threshold must exceed one"));
    }
    let d = sys.dim();
    let target = match halfline {
        HalfLine::Plus => opts.horizon,
        HalfLine::Minus => -opts.horizon,
    };
    let prop = system::propagator(sys, lambda, 0.0, target, opts.ode_tol, opts.qr_window)?;
    let (log_sv, v) = prop.svd_log();

    // cut index = number of large (growing) directions
    let cut = match opts.rank_hint {
        Some(r) => {
            if r == 0 || r >= d {
                return Err(Error::invalid("rank hint must be interior (1..d)"));
            }
            d - r
        }
        None => {
            let mut best = 1;
            let mut best_gap = f64::NEG_INFINITY;
            for i in 1..d {
                let g = log_sv[i - 1] - log_sv[i];
                if g > best_gap {
                    best_gap = g;
                    best = i;
                }
            }
            best
        }
    };
    let log_gap = log_sv[cut - 1] - log_sv[cut];
    let gap = log_gap.exp();
    if gap <= opts.gap_threshold {
        return Err(Error::NoGap {
            lambda,
            best_gap: gap,
            threshold: opts.gap_threshold,
        });
    }
    let rank = d - cut;
    let mut basis = DMatrix::zeros(d, rank);
    for (j, col) in (cut..d).enumerate() {
        basis.set_column(j, &v.column(col));
    }
    let basis = linalg::canonicalize_columns(basis);
    // coarse decay estimate from the slowest decaying singular value
    let alpha0 = -log_sv[cut] / opts.horizon;
    Ok(DichotomySubspaces {
        lambda,
        halfline,
        basis,
        rank,
        gap,
        constants: DichotomyConstants {
            k: 1.0,
            alpha: alpha0,
            fit_residual: f64::NAN,
        },
        truncation: opts.horizon,
        log_singular_values: log_sv,
    })
}

/// Approximates `R(P_λ⁺(0))`, the uniquely determined range of any
/// dichotomy projector on `ℝ₊`.
pub fn stable_subspace_plus(
    sys: &SystemSpec,
    lambda: f64,
    opts: &SubspaceOptions,
) -> Result<DichotomySubspaces> {
    extract_subspace(sys, lambda, HalfLine::Plus, opts)
}

/// Approximates `N(P_λ⁻(0))`, the uniquely determined kernel of any
/// dichotomy projector on `ℝ₋` (initial values decaying backward).
pub fn unstable_subspace_minus(
    sys: &SystemSpec,
    lambda: f64,
    opts: &SubspaceOptions,
) -> Result<DichotomySubspaces> {
    extract_subspace(sys, lambda, HalfLine::Minus, opts)
}

/// Both subspaces at the same parameter, with the `r + n = d` check.
pub fn subspace_pair(
    sys: &SystemSpec,
    lambda: f64,
    opts: &SubspaceOptions,
) -> Result<(DichotomySubspaces, DichotomySubspaces)> {
    let plus = stable_subspace_plus(sys, lambda, opts)?;
    let minus = unstable_subspace_minus(sys, lambda, opts)?;
    let d = sys.dim();
    if plus.rank + minus.rank != d {
        return Err(Error::RankMismatch {
            lambda,
            r: plus.rank,
            n: minus.rank,
            d,
        });
    }
    Ok((plus, minus))
}

/// Least-squares fit of the decay inequality
/// `log‖Φ(t,s)·Π(s)‖ ≤ log K − α(t−s)` over a grid of `(s, t)` pairs with
/// `s ≤ t` inside the subspace's half-line. `Π(s)` is the orthogonal
/// projector onto the propagated subspace. Returns the tightest `(K, α,
/// fit residual)`; `K` is shifted up so every sample satisfies the bound.
pub fn estimate_dichotomy_constants(
    sys: &SystemSpec,
    lambda: f64,
    sub: &DichotomySubspaces,
    sample_pairs: &[(f64, f64)],
    ode_tol: f64,
) -> Result<DichotomyConstants> {
    if sample_pairs.len() < 2 {
        return Err(Error::invalid("need at least two sample pairs"));
    }
    let mut deltas = Vec::with_capacity(sample_pairs.len());
    let mut logs = Vec::with_capacity(sample_pairs.len());
    for &(s, t) in sample_pairs {
        if !(s <= t) {
            return Err(Error::invalid("sample pairs must satisfy s <= t"));
        }
        match sub.halfline {
            HalfLine::Plus => {
                if s < 0.0 {
                    return Err(Error::invalid("plus-halfline samples must satisfy 0 <= s"));
                }
            }
            HalfLine::Minus => {
                if t > 0.0 {
                    return Err(Error::invalid("minus-halfline samples must satisfy t <= 0"));
                }
            }
        }
        // anchor = time where the projector is applied; decay runs from the
        // anchor toward the interior of the half-line
        let (anchor, dest) = match sub.halfline {
            HalfLine::Plus => (s, t),
            HalfLine::Minus => (t, s),
        };
        // orthonormal basis of the propagated subspace at the anchor
        let mut cols = Vec::with_capacity(sub.rank);
        for j in 0..sub.rank {
            let v = sub.basis.column(j).clone_owned();
            cols.push(system::propagate_vector(
                sys, lambda, 0.0, anchor, &v, ode_tol,
            )?);
        }
        let propagated = DMatrix::from_columns(&cols);
        let b_anchor = linalg::orthonormalize_mgs(propagated, 1e-300)?;
        // image of the projected unit sphere at the destination time
        let mut img = Vec::with_capacity(sub.rank);
        for j in 0..sub.rank {
            let v = b_anchor.column(j).clone_owned();
            img.push(system::propagate_vector(
                sys, lambda, anchor, dest, &v, ode_tol,
            )?);
        }
        let image = DMatrix::from_columns(&img);
        let norm = image
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        deltas.push(t - s);
        logs.push(norm.max(1e-300).ln());
    }
    // least squares y = c - alpha * delta
    let m = deltas.len() as f64;
    let mean_d = deltas.iter().sum::<f64>() / m;
    let mean_y = logs.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (d_i, y_i) in deltas.iter().zip(&logs) {
        sxx += (d_i - mean_d) * (d_i - mean_d);
        sxy += (d_i - mean_d) * (y_i - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::invalid("sample pairs must span distinct gaps t - s"));
    }
    let slope = sxy / sxx;
    let alpha = -slope;
    if alpha <= 0.0 {
        return Err(Error::NonDecay { alpha });
    }
    let intercept = mean_y - slope * mean_d;
    // tightest K: shift intercept so the bound holds on every sample
    let mut log_k = f64::NEG_INFINITY;
    for (d_i, y_i) in deltas.iter().zip(&logs) {
        log_k = log_k.max(y_i + alpha * d_i);
    }
    let k = log_k.exp().max(1.0);
    let mut ss = 0.0;
    for (d_i, y_i) in deltas.iter().zip(&logs) {
        let r = y_i - (intercept - alpha * d_i);
        ss += r * r;
    }
    let fit_residual = (ss / m).sqrt();
    Ok(DichotomyConstants {
        k,
        alpha,
        fit_residual,
    })
}

/// Outcome of the Fredholm index bookkeeping at one parameter. A report,
/// not a guard: mismatched ranks are recorded, not rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexReport {
    pub lambda: f64,
    pub rank_plus: usize,
    pub rank_minus: usize,
    pub dim: usize,
    /// `r + n − d`; zero under the standing hypotheses.
    pub index_defect: i64,
    /// Dimension of the numerical intersection of the two subspaces
    /// (principal angles below 1e-6 radians).
    pub intersection_dim: usize,
    pub principal_angles: Vec<f64>,
}

/// Reports `r + n − d` and the numerical intersection of the plus and
/// minus subspaces at a common parameter.
pub fn fredholm_index_check(plus: &DichotomySubspaces, minus: &DichotomySubspaces) -> IndexReport {
    let d = plus.basis.nrows();
    let cos = linalg::principal_angle_cosines(&plus.basis, &minus.basis);
    let angles: Vec<f64> = cos.iter().map(|c| c.min(1.0).acos()).collect();
    let intersection_dim = angles.iter().filter(|a| **a < 1e-6).count();
    IndexReport {
        lambda: plus.lambda,
        rank_plus: plus.rank,
        rank_minus: minus.rank,
        dim: d,
        index_defect: plus.rank as i64 + minus.rank as i64 - d as i64,
        intersection_dim,
        principal_angles: angles,
    }
}

/// Convenience sample grid of `(s, t)` pairs inside a half-line for
/// constant fitting: all pairs `(i·δ, j·δ)` with `i < j ≤ m` mapped into
/// the half-line.
pub fn fit_sample_grid(halfline: HalfLine, horizon: f64, m: usize) -> Vec<(f64, f64)> {
    let delta = horizon / m as f64;
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in (i + 1)..=m {
            let (a, b) = (i as f64 * delta, j as f64 * delta);
            match halfline {
                HalfLine::Plus => pairs.push((a, b)),
                HalfLine::Minus => pairs.push((-b, -a)),
            }
        }
    }
    pairs
}
