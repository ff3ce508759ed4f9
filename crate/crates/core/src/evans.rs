//! Continuous global Evans function over a parameter grid.
//!
//! Per parameter, `E(λ)` is the determinant of a combined basis of the
//! plus and minus dichotomy subspaces. Continuity in `λ` is realized by
//! aligning each basis against the previous sample (projection followed by
//! modified Gram–Schmidt), which keeps the determinant's orientation; any
//! global Evans function is only determined up to a nonvanishing factor,
//! so a global sign flip against a reference is legitimate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dichotomy::{self, SubspaceOptions};
use crate::error::Error;
use crate::linalg;
use crate::system::SystemSpec;
use crate::Result;

/// One aligned Evans sample.
#[derive(Debug, Clone)]
pub struct EvansSample {
    pub lambda: f64,
    /// Aligned d×r basis of the plus subspace.
    pub basis_plus: DMatrix<f64>,
    /// Aligned d×n basis of the minus subspace.
    pub basis_minus: DMatrix<f64>,
    /// `det [Ξ⁺ | Ξ⁻]`.
    pub value: f64,
    /// −1, 0, +1; zero iff `|value|` is below the scan's zero tolerance.
    pub sign: i8,
    /// Identifies the maximal hyperbolic run this sample belongs to; sign
    /// continuity is certified only within one segment.
    pub segment: usize,
}

/// A certified sign change: opposite nonzero signs at the bracket ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignChangeCertificate {
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub sign_lo: i8,
    pub sign_hi: i8,
    /// Refined location of the zero inside the bracket.
    pub critical_value: f64,
}

/// A refined local minimum of `|E|` below the zero tolerance without a
/// sign change; a critical value that is not a certified bifurcation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TouchZero {
    pub lambda: f64,
    pub value: f64,
}

/// Result of a parameter sweep.
#[derive(Debug, Clone)]
pub struct EvansScan {
    /// Samples ordered by λ (grid points plus alignment-refinement points).
    pub samples: Vec<EvansSample>,
    /// Absolute zero tolerance used for signs.
    pub zero_tol: f64,
    /// Refined critical values: certificate zeros and touch-zeros.
    pub critical_values: Vec<f64>,
    pub certificates: Vec<SignChangeCertificate>,
    pub touch_zeros: Vec<TouchZero>,
    /// Maximal parameter ranges where no spectral gap was found at this
    /// horizon; interval-valued entries of the critical set.
    pub nonhyperbolic_intervals: Vec<(f64, f64)>,
    /// False when alignment had to restart across a non-hyperbolic gap, in
    /// which case relative orientation across that gap is not certified.
    pub sign_continuity_certified: bool,
}

/// Options for [`evans_scan`].
#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub subspace: SubspaceOptions,
    /// Zero tolerance relative to `max |E|` over the scan.
    pub zero_tol_rel: f64,
    /// Final bracket width for sign-change refinement.
    pub refine_tol: f64,
    /// Maximal interval bisections when alignment needs a finer grid.
    pub max_bisection_depth: usize,
    /// Largest principal angle tolerated by alignment.
    pub angle_cap: f64,
    /// Optional initial bases the first sample is aligned against.
    pub initial_plus: Option<DMatrix<f64>>,
    pub initial_minus: Option<DMatrix<f64>>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            subspace: SubspaceOptions::default(),
            zero_tol_rel: crate::defaults::ZERO_TOL_REL,
            refine_tol: crate::defaults::REFINE_TOL,
            max_bisection_depth: 12,
            angle_cap: crate::defaults::ANGLE_CAP,
            initial_plus: None,
            initial_minus: None,
        }
    }
}

/// Transports the orientation of `prev` onto the span of `new_subspace`:
/// orthogonal projection of `prev`'s columns followed by modified
/// Gram–Schmidt in `prev`'s column order.
pub fn align_basis(
    prev: &DMatrix<f64>,
    new_subspace: &DMatrix<f64>,
    angle_cap: f64,
) -> Result<DMatrix<f64>> {
    let cos = linalg::principal_angle_cosines(prev, new_subspace);
    let worst = cos.last().copied().unwrap_or(1.0);
    let angle = worst.min(1.0).acos();
    if angle >= angle_cap {
        return Err(Error::AngleTooLarge {
            angle,
            cap: angle_cap,
        });
    }
    let projected = new_subspace * (new_subspace.transpose() * prev);
    linalg::orthonormalize_mgs(projected, 1e-10)
}

fn sign_with_tol(value: f64, zero_tol: f64) -> i8 {
    if value.abs() < zero_tol || value == 0.0 {
        0
    } else if value > 0.0 {
        1
    } else {
        -1
    }
}

/// Evans sample at one parameter. With `prev = Some((Ξ⁺, Ξ⁻))` the fresh
/// subspaces are aligned against those bases; otherwise deterministic
/// canonical bases are used.
pub fn evans_at(
    sys: &SystemSpec,
    lambda: f64,
    prev: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    zero_tol: f64,
    opts: &ScanOptions,
) -> Result<EvansSample> {
    let (plus, minus) = dichotomy::subspace_pair(sys, lambda, &opts.subspace)?;
    let (basis_plus, basis_minus) = match prev {
        Some((p, m)) => (
            align_basis(p, &plus.basis, opts.angle_cap)?,
            align_basis(m, &minus.basis, opts.angle_cap)?,
        ),
        None => (plus.basis, minus.basis),
    };
    let d = sys.dim();
    let mut combined = DMatrix::zeros(d, d);
    for j in 0..basis_plus.ncols() {
        combined.set_column(j, &basis_plus.column(j));
    }
    for j in 0..basis_minus.ncols() {
        combined.set_column(basis_plus.ncols() + j, &basis_minus.column(j));
    }
    let value = combined.determinant();
    Ok(EvansSample {
        lambda,
        basis_plus,
        basis_minus,
        value,
        sign: sign_with_tol(value, zero_tol),
        segment: 0,
    })
}

/// Advances from `prev` to `target`, bisecting the parameter interval when
/// subspaces rotate faster than the alignment cap.
fn advance(
    sys: &SystemSpec,
    prev: &EvansSample,
    target: f64,
    depth: usize,
    opts: &ScanOptions,
) -> Result<Vec<EvansSample>> {
    match evans_at(
        sys,
        target,
        Some((&prev.basis_plus, &prev.basis_minus)),
        0.0,
        opts,
    ) {
        Ok(mut s) => {
            s.segment = prev.segment;
            Ok(vec![s])
        }
        Err(Error::AngleTooLarge { .. }) if depth > 0 => {
            let mid = 0.5 * (prev.lambda + target);
            let mut left = advance(sys, prev, mid, depth - 1, opts)?;
            let right = advance(sys, left.last().unwrap(), target, depth - 1, opts)?;
            left.extend(right);
            Ok(left)
        }
        Err(e) => Err(e),
    }
}

/// Sweeps the ordered grid, carrying basis alignment between samples, and
/// collects certified sign changes, touch-zeros and non-hyperbolic runs.
pub fn evans_scan(sys: &SystemSpec, lambda_grid: &[f64], opts: &ScanOptions) -> Result<EvansScan> {
    if lambda_grid.len() < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    for w in lambda_grid.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
    }
    let (lo, hi) = sys.param_interval();
    if lambda_grid[0] <= lo || *lambda_grid.last().unwrap() >= hi {
        return Err(Error::invalid("grid must lie inside the parameter interval"));
    }

    let mut samples: Vec<EvansSample> = Vec::with_capacity(lambda_grid.len());
    let mut nogap_points: Vec<f64> = Vec::new();
    let mut segment = 0usize;
    let mut restarted = false;

    for &lambda in lambda_grid {
        let prev = samples.last();
        let attempt = match prev {
            Some(p) if p.segment == segment => {
                advance(sys, p, lambda, opts.max_bisection_depth, opts)
            }
            _ => {
                let fresh = match (&opts.initial_plus, &opts.initial_minus) {
                    (Some(ip), Some(im)) if samples.is_empty() => {
                        evans_at(sys, lambda, Some((ip, im)), 0.0, opts)
                    }
                    _ => evans_at(sys, lambda, None, 0.0, opts),
                };
                fresh.map(|mut s| {
                    s.segment = segment;
                    vec![s]
                })
            }
        };
        match attempt {
            Ok(batch) => samples.extend(batch),
            Err(Error::NoGap { .. }) => {
                nogap_points.push(lambda);
                if !samples.is_empty() {
                    segment += 1;
                    restarted = true;
                }
            }
            Err(e) => return Err(e),
        }
    }
    if samples.is_empty() {
        return Err(Error::NoHyperbolicWindow);
    }

    // absolute zero tolerance from the scan maximum
    let max_abs = samples.iter().fold(0.0f64, |m, s| m.max(s.value.abs()));
    let zero_tol = opts.zero_tol_rel * max_abs;
    for s in &mut samples {
        s.sign = sign_with_tol(s.value, zero_tol);
    }

    // merge consecutive non-hyperbolic grid points into intervals
    let mut nonhyperbolic_intervals: Vec<(f64, f64)> = Vec::new();
    let grid_step = lambda_grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    for &p in &nogap_points {
        match nonhyperbolic_intervals.last_mut() {
            Some(last) if p - last.1 <= 1.5 * grid_step => last.1 = p,
            _ => nonhyperbolic_intervals.push((p, p)),
        }
    }

    let mut scan = EvansScan {
        samples,
        zero_tol,
        critical_values: Vec::new(),
        certificates: Vec::new(),
        touch_zeros: Vec::new(),
        nonhyperbolic_intervals,
        sign_continuity_certified: !restarted,
    };
    detect_critical_values(sys, &mut scan, opts)?;
    Ok(scan)
}

/// Locates certificates and touch-zeros from the sign sequence, refining
/// each candidate between adjacent samples of the same segment.
fn detect_critical_values(sys: &SystemSpec, scan: &mut EvansScan, opts: &ScanOptions) -> Result<()> {
    let samples = &scan.samples;
    let tol = scan.zero_tol;

    // indices of nonzero-sign samples
    let nonzero: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].sign != 0).collect();

    for w in nonzero.windows(2) {
        let (i, j) = (w[0], w[1]);
        if samples[i].segment != samples[j].segment {
            continue; // orientation across a non-hyperbolic gap is not certified
        }
        let (si, sj) = (samples[i].sign, samples[j].sign);
        if si * sj == -1 {
            let (critical, bracket) =
                refine_sign_change(sys, &samples[i], samples[j].lambda, tol, opts)?;
            scan.certificates.push(SignChangeCertificate {
                bracket_lo: bracket.0,
                bracket_hi: bracket.1,
                sign_lo: si,
                sign_hi: sj,
                critical_value: critical,
            });
            scan.critical_values.push(critical);
        } else if j > i + 1 {
            // equal signs around a numerically-zero run: touch-zero
            let run: Vec<usize> = ((i + 1)..j).collect();
            let mid = run[run.len() / 2];
            scan.touch_zeros.push(TouchZero {
                lambda: samples[mid].lambda,
                value: samples[mid].value,
            });
            scan.critical_values.push(samples[mid].lambda);
        }
    }

    // local minima of |E| that dip below tolerance only between samples
    let candidates: Vec<usize> = (1..samples.len().saturating_sub(1))
        .filter(|&i| {
            let v = samples[i].value.abs();
            samples[i].sign != 0
                && samples[i - 1].sign == samples[i].sign
                && samples[i + 1].sign == samples[i].sign
                && samples[i - 1].segment == samples[i + 1].segment
                && v < samples[i - 1].value.abs()
                && v < samples[i + 1].value.abs()
                && v < 1e-2 * samples.iter().fold(0.0f64, |m, s| m.max(s.value.abs()))
        })
        .collect();
    for i in candidates {
        if let Some(tz) = refine_touch_zero(sys, &samples[i - 1], samples[i + 1].lambda, tol, opts)? {
            scan.touch_zeros.push(tz);
            scan.critical_values
                .push(scan.touch_zeros.last().unwrap().lambda);
        }
    }

    scan.critical_values
        .sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(())
}

/// Bisection on the sign of `E` between `left.lambda` and `hi` down to
/// `refine_tol` bracket width. When a midpoint falls into the numerically
/// zero zone, both bracket edges are tightened toward it instead, so the
/// final bracket still carries opposite nonzero signs.
fn refine_sign_change(
    sys: &SystemSpec,
    left: &EvansSample,
    hi: f64,
    zero_tol: f64,
    opts: &ScanOptions,
) -> Result<(f64, (f64, f64))> {
    let mut anchor = left.clone();
    let mut lo = left.lambda;
    let mut hi = hi;
    let target_sign = -left.sign;
    while hi - lo > opts.refine_tol {
        let mid = 0.5 * (lo + hi);
        let s = evans_at(
            sys,
            mid,
            Some((&anchor.basis_plus, &anchor.basis_minus)),
            zero_tol,
            opts,
        )?;
        if s.sign == target_sign {
            hi = mid;
        } else if s.sign == left.sign {
            lo = mid;
            anchor = s;
        } else {
            // |E(mid)| below tolerance: tighten each side separately
            let eval_sign = |lam: f64, anc: &EvansSample| -> Result<i8> {
                Ok(evans_at(
                    sys,
                    lam,
                    Some((&anc.basis_plus, &anc.basis_minus)),
                    zero_tol,
                    opts,
                )?
                .sign)
            };
            let (mut a, mut b) = (lo, mid);
            while b - a > 0.5 * opts.refine_tol {
                let m = 0.5 * (a + b);
                if eval_sign(m, &anchor)? == left.sign {
                    a = m;
                } else {
                    b = m;
                }
            }
            let (mut a2, mut b2) = (mid, hi);
            while b2 - a2 > 0.5 * opts.refine_tol {
                let m = 0.5 * (a2 + b2);
                if eval_sign(m, &anchor)? == target_sign {
                    b2 = m;
                } else {
                    a2 = m;
                }
            }
            return Ok((mid, (a, b2)));
        }
    }
    Ok((0.5 * (lo + hi), (lo, hi)))
}

/// Golden-section style refinement of a local minimum of `|E|`; reported
/// only when the refined minimum is numerically zero.
fn refine_touch_zero(
    sys: &SystemSpec,
    left: &EvansSample,
    hi: f64,
    zero_tol: f64,
    opts: &ScanOptions,
) -> Result<Option<TouchZero>> {
    let anchor = left.clone();
    let mut lo = left.lambda;
    let mut hi = hi;
    let eval = |lam: f64| -> Result<f64> {
        Ok(evans_at(
            sys,
            lam,
            Some((&anchor.basis_plus, &anchor.basis_minus)),
            zero_tol,
            opts,
        )?
        .value)
    };
    let mut best = (0.5 * (lo + hi), eval(0.5 * (lo + hi))?);
    while hi - lo > opts.refine_tol {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let v1 = eval(m1)?;
        let v2 = eval(m2)?;
        if v1.abs() < best.1.abs() {
            best = (m1, v1);
        }
        if v2.abs() < best.1.abs() {
            best = (m2, v2);
        }
        if v1.abs() <= v2.abs() {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    if best.1.abs() < zero_tol {
        Ok(Some(TouchZero {
            lambda: best.0,
            value: best.1,
        }))
    } else {
        Ok(None)
    }
}

/// Endpoint parity `sgn E(λ₋) · sgn E(λ₊)` looked up at the nearest scan
/// samples; −1 certifies a bifurcation value inside the interval.
pub fn parity(scan: &EvansScan, lambda_minus: f64, lambda_plus: f64) -> Result<i8> {
    if !(lambda_minus < lambda_plus) {
        return Err(Error::invalid("parity endpoints must be ordered"));
    }
    let range = (
        scan.samples.first().unwrap().lambda,
        scan.samples.last().unwrap().lambda,
    );
    if lambda_minus < range.0 - 1e-12 || lambda_plus > range.1 + 1e-12 {
        return Err(Error::invalid("parity endpoints outside the scanned range"));
    }
    let sign_at = |lam: f64| -> Result<i8> {
        let s = scan
            .samples
            .iter()
            .min_by(|a, b| {
                (a.lambda - lam)
                    .abs()
                    .partial_cmp(&(b.lambda - lam).abs())
                    .unwrap()
            })
            .unwrap();
        if s.sign == 0 {
            return Err(Error::EndpointCritical { lambda: lam });
        }
        Ok(s.sign)
    };
    Ok(sign_at(lambda_minus)? * sign_at(lambda_plus)?)
}

/// Builds the uniform grid `lo, lo+step, …` covering `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if let Some(last) = grid.last_mut() {
        if (*last - hi).abs() < 1e-12 * (1.0 + hi.abs()) {
            *last = hi;
        }
    }
    grid.retain(|l| *l <= hi + 1e-12 * (1.0 + hi.abs()));
    grid
}
