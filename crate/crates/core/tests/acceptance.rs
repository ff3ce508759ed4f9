//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured quantities once its assertions hold.
//!
//! Criteria:
//! 1. Evans sign sequences match the reference `sgn(−4γ)` on every kind's
//!    window, up to one global flip, within the runtime budget.
//! 2. The sin kind certifies sign changes exactly at the multiples of π in
//!    [−7, 7]; the abs kind yields one touch-zero at 0 and no certificates.
//! 3. Dichotomy subspaces agree with the closed-form spans to 1e-6 at
//!    random hyperbolic parameters, with ranks r = n = 1 and index zero.
//! 4. The transcritical branch reproduces `y₁(0) = −(3/2)λ` to 1e-3
//!    relative over the window and is classified unbounded.
//! 5. A bounded pitchfork continuum returns to the trivial branch at both
//!    endpoints of its interval and carries bifurcation index zero.
//! 6. The transcritical continuum's touched set gives index ±1 and the
//!    classifier certifies unboundedness.
//! 7. Tangent-kind pitchfork branches terminate with parameter-boundary
//!    events at ±(π/2 − 1e-3).
//! 8. Property suites: propagator cocycle and reversibility, Jacobian
//!    versus finite differences, basis-choice invariance of certified
//!    sign-change locations, second-order mesh convergence, odd-n mirror
//!    symmetry, and the closed-form differentiation gate.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hombif_core::cover::{build_cover, j_parity};
use hombif_core::dichotomy::{fredholm_index_check, subspace_pair, SubspaceOptions};
use hombif_core::evans::{evans_scan, uniform_grid, EvansScan, ScanOptions};
use hombif_core::example::{
    closed_form_solution, example_system, oracle_evans, oracle_subspaces, ExampleConfig,
    GammaKind,
};
use hombif_core::homoclinic::{
    classify_continuum, continue_from_critical, merge_at_seed, solve_homoclinic, BvpOptions,
    Classification, ContinuationOptions, EndpointEvent,
};
use hombif_core::system::{integrate_ivp, transition_matrix};
use hombif_core::{defaults, linalg};

const PI: f64 = std::f64::consts::PI;

fn kind_window(kind: GammaKind) -> (f64, f64) {
    match kind {
        GammaKind::Sin => (-7.0, 7.0),
        GammaKind::Tan => (-1.5, 1.5),
        _ => (-2.0, 2.0),
    }
}

fn scan_kind(cfg: &ExampleConfig) -> EvansScan {
    let sys = example_system(cfg);
    let (lo, hi) = kind_window(cfg.gamma_kind);
    let grid = uniform_grid(lo, hi, 0.05);
    evans_scan(&sys, &grid, &ScanOptions::default()).expect("scan succeeds")
}

#[test]
fn criterion_1_evans_sign_oracle_per_kind() {
    for (kind, n) in [
        (GammaKind::Linear, 2),
        (GammaKind::Abs, 2),
        (GammaKind::Sin, 3),
        (GammaKind::Tan, 3),
    ] {
        let cfg = ExampleConfig::new(1.0, n, kind).unwrap();
        let clock = Instant::now();
        let scan = scan_kind(&cfg);
        let elapsed = clock.elapsed().as_secs_f64();
        let mut flip: Option<f64> = None;
        let mut checked = 0usize;
        for s in &scan.samples {
            let oracle = oracle_evans(&cfg, s.lambda);
            if oracle.abs() > 1e-3 {
                assert_ne!(s.sign, 0, "unexpected zero sign at lambda {}", s.lambda);
                checked += 1;
                let ratio = (s.sign as f64) * oracle.signum();
                match flip {
                    None => flip = Some(ratio),
                    Some(f) => assert_eq!(
                        f, ratio,
                        "{kind:?}: sign pattern breaks at lambda {}",
                        s.lambda
                    ),
                }
            }
        }
        assert!(checked > 0);
        assert!(
            elapsed <= 60.0,
            "{kind:?} scan took {elapsed:.1}s, over the 60s budget"
        );
        println!(
            "[PASS] criterion 1 ({kind:?}): {checked} grid signs match the reference up to one global flip in {elapsed:.2}s"
        );
    }
}

#[test]
fn criterion_2_critical_values_sin_and_abs() {
    let sin = ExampleConfig::new(1.0, 3, GammaKind::Sin).unwrap();
    let scan = scan_kind(&sin);
    let expected = [-2.0 * PI, -PI, 0.0, PI, 2.0 * PI];
    assert_eq!(
        scan.certificates.len(),
        expected.len(),
        "sin kind must certify exactly the multiples of pi, got {:?}",
        scan.certificates
            .iter()
            .map(|c| c.critical_value)
            .collect::<Vec<_>>()
    );
    for (c, e) in scan.certificates.iter().zip(expected.iter()) {
        assert!(
            (c.critical_value - e).abs() <= 1e-4,
            "certified {} vs reference {e}",
            c.critical_value
        );
    }
    assert!(scan.touch_zeros.is_empty());

    let abs = ExampleConfig::new(1.0, 2, GammaKind::Abs).unwrap();
    let scan = scan_kind(&abs);
    assert!(scan.certificates.is_empty(), "abs kind has no sign change");
    assert_eq!(scan.touch_zeros.len(), 1);
    assert!(scan.touch_zeros[0].lambda.abs() <= 1e-4);
    println!(
        "[PASS] criterion 2: sin certifies five sign changes at multiples of pi (max deviation {:.2e}), abs yields one touch-zero at {:.2e} and no certificates",
        scan_kind(&sin)
            .certificates
            .iter()
            .zip(expected.iter())
            .map(|(c, e)| (c.critical_value - e).abs())
            .fold(0.0f64, f64::max),
        scan.touch_zeros[0].lambda.abs()
    );
}

#[test]
fn criterion_3_subspace_oracle_at_random_parameters() {
    let cfg = ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap();
    let sys = example_system(&cfg);
    let opts = SubspaceOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20240817);
    let mut worst = 0.0f64;
    let mut tested = 0usize;
    while tested < 20 {
        let lambda: f64 = rng.gen_range(-2.0..2.0);
        if cfg.gamma(lambda).abs() < 0.1 {
            continue;
        }
        tested += 1;
        let (plus, minus) = subspace_pair(&sys, lambda, &opts).unwrap();
        assert_eq!((plus.rank, minus.rank), (1, 1));
        let report = fredholm_index_check(&plus, &minus);
        assert_eq!(report.index_defect, 0, "index defect at lambda {lambda}");
        let (op, om) = oracle_subspaces(&cfg, lambda);
        let ap = linalg::subspace_angle(&DMatrix::from_columns(&[op]), &plus.basis);
        let am = linalg::subspace_angle(&DMatrix::from_columns(&[om]), &minus.basis);
        worst = worst.max(ap).max(am);
    }
    assert!(
        worst <= 1e-6,
        "worst subspace angle {worst:.3e} exceeds 1e-6"
    );
    println!(
        "[PASS] criterion 3: 20 random parameters, worst subspace angle {worst:.3e}, r = n = 1 and index 0 everywhere"
    );
}

fn branch_options(window: (f64, f64)) -> ContinuationOptions {
    ContinuationOptions {
        lambda_window: window,
        ..Default::default()
    }
}

#[test]
fn criteria_4_and_6_transcritical_branch_oracle_and_unboundedness() {
    let cfg = ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap();
    let sys = example_system(&cfg);
    let scan = scan_kind(&cfg);
    let cover = build_cover(&scan, defaults::CLUSTER_TOL).unwrap();
    let opts = branch_options((-1.5, 1.5));

    let plus = continue_from_critical(&sys, 0.0, opts.switch_amplitude, &opts).unwrap();
    let minus = continue_from_critical(&sys, 0.0, -opts.switch_amplitude, &opts).unwrap();
    let merged = merge_at_seed(plus, minus);

    // branch oracle: y1(0) = -(3/2) lambda to 1e-3 relative outside [-0.05, 0.05]
    let mut worst_rel = 0.0f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut checked = 0usize;
    for sol in &merged.solutions {
        lo = lo.min(sol.lambda);
        hi = hi.max(sol.lambda);
        if sol.lambda.abs() < 0.05 {
            continue;
        }
        checked += 1;
        let expected = -1.5 * sol.lambda;
        let rel = (sol.value_at_zero()[0] - expected).abs() / expected.abs();
        worst_rel = worst_rel.max(rel);
    }
    assert!(checked > 20, "expected a well-sampled branch, got {checked}");
    assert!(lo <= -1.5 + 1e-9 && hi >= 1.5 - 1e-9, "window not exhausted: [{lo}, {hi}]");
    assert!(
        worst_rel <= 1e-3,
        "branch oracle relative error {worst_rel:.3e} exceeds 1e-3"
    );

    // both ends exhaust the window with growing norm
    for ev in [merged.start_event, merged.end_event] {
        match ev {
            EndpointEvent::ParamBoundary { lambda } => {
                assert!((lambda.abs() - 1.5).abs() <= 1e-9)
            }
            EndpointEvent::NormCap { .. } => {}
            other => panic!("expected window exhaustion or norm cap, got {other:?}"),
        }
    }
    let end_norms = (
        merged.solutions.first().unwrap().sup_norm,
        merged.solutions.last().unwrap().sup_norm,
    );
    assert!(end_norms.0 > 1.0 && end_norms.1 > 1.0, "norms grow toward the ends");

    let report = classify_continuum(&merged, &cover, 1e-2).unwrap();
    assert_eq!(report.classification, Classification::Unbounded);
    println!(
        "[PASS] criterion 4: y1(0) matches -(3/2)lambda to {worst_rel:.3e} relative over [{lo:.3}, {hi:.3}] ({checked} points), classification unbounded"
    );

    // criterion 6: touched set and index
    assert_eq!(report.index_sum.abs(), 1, "touched {:?}", report.touched);
    assert!(report.theorem_consistent);
    println!(
        "[PASS] criterion 6: touched cover gaps {:?} give index sum {} and the classifier certifies unboundedness",
        report.touched, report.index_sum
    );
}

#[test]
fn criterion_5_bounded_pitchfork_continuum_has_zero_index() {
    // The root equation xi^2 = -(n+1)/(2 beta) \u{3b3}(\u{3bb}) admits a branch over
    // (0, \u{3c0}) with endpoints {0, \u{3c0}} only for negative beta; beta = -1 is the
    // configuration whose continuum is seeded in (0, \u{3c0}) and returns at 0 and
    // \u{3c0}. The mirrored beta = +1 branch over (-\u{3c0}, 0) is checked alongside.
    for (beta, seed, expected) in [(-1.0, 0.0, (0.0, PI)), (1.0, 0.0, (-PI, 0.0))] {
        let cfg = ExampleConfig::new(beta, 3, GammaKind::Sin).unwrap();
        let sys = example_system(&cfg);
        let scan = scan_kind(&cfg);
        let cover = build_cover(&scan, defaults::CLUSTER_TOL).unwrap();
        let opts = branch_options((-7.0, 7.0));
        // amplitude sign picks the arm; the branch lives on one side of the seed
        let amp = if beta < 0.0 { 1.0 } else { -1.0 } * opts.switch_amplitude;
        let c = continue_from_critical(&sys, seed, amp, &opts).unwrap();
        let mut stars = c.return_parameters();
        stars.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            stars.len(),
            2,
            "beta {beta}: events {:?} {:?}",
            c.start_event,
            c.end_event
        );
        assert!(
            (stars[0] - expected.0).abs() <= 1e-3,
            "beta {beta}: first return {} vs {}",
            stars[0],
            expected.0
        );
        assert!(
            (stars[1] - expected.1).abs() <= 1e-3,
            "beta {beta}: second return {} vs {}",
            stars[1],
            expected.1
        );
        let report = classify_continuum(&c, &cover, 1e-2).unwrap();
        assert_eq!(report.classification, Classification::Returns);
        assert_eq!(report.index_sum, 0, "touched {:?}", report.touched);
        assert!(report.theorem_consistent);
        println!(
            "[PASS] criterion 5 (beta = {beta}): continuum returns to the trivial branch at {:.6} and {:.6}, touched {:?}, index sum 0",
            stars[0], stars[1], report.touched
        );
    }
}

#[test]
fn criterion_7_tan_pitchfork_reaches_parameter_boundary() {
    let margin = defaults::BOUNDARY_MARGIN;
    for (beta, pole) in [(1.0, -PI / 2.0), (-1.0, PI / 2.0)] {
        let cfg = ExampleConfig::new(beta, 3, GammaKind::Tan).unwrap();
        let sys = example_system(&cfg);
        let opts = ContinuationOptions {
            lambda_window: (f64::NEG_INFINITY, f64::INFINITY),
            ..Default::default()
        };
        let amp = if beta < 0.0 { -1.0 } else { 1.0 } * opts.switch_amplitude;
        let c = continue_from_critical(&sys, 0.0, amp, &opts).unwrap();
        let target = pole - pole.signum() * margin;
        let mut hit = false;
        for ev in [c.start_event, c.end_event] {
            if let EndpointEvent::ParamBoundary { lambda } = ev {
                assert!(
                    (lambda - target).abs() <= 1e-6,
                    "beta {beta}: boundary at {lambda} vs {target}"
                );
                hit = true;
            }
        }
        assert!(
            hit,
            "beta {beta}: no parameter-boundary event, got {:?} {:?}",
            c.start_event, c.end_event
        );
        let (lo, hi) = c.lambda_range();
        assert!((if beta > 0.0 { lo } else { hi } - target).abs() <= 1e-6);
        println!(
            "[PASS] criterion 7 (beta = {beta}): branch terminates with a param-boundary event at {target:.6} (pole {pole:.6} minus margin)"
        );
    }
}

#[test]
fn criterion_8_property_suites() {
    // (a) propagator cocycle and nonlinear composition at 1e-8, measured
    // relative to the result (the transition matrices grow like e^{|t-s|});
    // reversibility on windows short enough that e^{2Δ}·eps stays below the
    // tolerance, since Φ(s,t)Φ(t,s) = I is a cancellation of that size
    let cfg = ExampleConfig::new(1.0, 2, GammaKind::Linear).unwrap();
    let sys = example_system(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tol = 1e-12;
    let mut worst_cocycle = 0.0f64;
    for _ in 0..6 {
        let mut times: Vec<f64> = (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (u, s, t) = (times[0], times[1], times[2]);
        let lambda = rng.gen_range(-1.5..1.5);
        let direct = transition_matrix(&sys, lambda, u, t, tol).unwrap();
        let first = transition_matrix(&sys, lambda, u, s, tol).unwrap();
        let second = transition_matrix(&sys, lambda, s, t, tol).unwrap();
        worst_cocycle =
            worst_cocycle.max((&direct - &second * &first).norm() / direct.norm());
        // nonlinear flow composition, relative to the final state scale
        let x0 = DVector::from_vec(vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]);
        let whole = integrate_ivp(&sys, lambda, u, &x0, t, tol).unwrap();
        let part1 = integrate_ivp(&sys, lambda, u, &x0, s, tol).unwrap();
        let part2 = integrate_ivp(&sys, lambda, s, &part1.end_state(), t, tol).unwrap();
        let scale = 1.0 + whole.end_state().norm();
        worst_cocycle =
            worst_cocycle.max((whole.end_state() - part2.end_state()).norm() / scale);
        // identity and reversibility on a short window
        let s0 = rng.gen_range(-4.0..0.0);
        let t0 = s0 + rng.gen_range(0.5..4.0);
        let fwd = transition_matrix(&sys, lambda, s0, t0, tol).unwrap();
        let back = transition_matrix(&sys, lambda, t0, s0, tol).unwrap();
        let dim = fwd.nrows();
        worst_cocycle =
            worst_cocycle.max((&back * &fwd - DMatrix::<f64>::identity(dim, dim)).norm());
        let eye = transition_matrix(&sys, lambda, t0, t0, tol).unwrap();
        worst_cocycle =
            worst_cocycle.max((eye - DMatrix::<f64>::identity(dim, dim)).norm());
    }
    assert!(worst_cocycle <= 1e-8, "cocycle defect {worst_cocycle:.3e}");

    // (b) Jacobian versus central finite differences, 1e-5 relative
    let mut worst_jac = 0.0f64;
    for _ in 0..20 {
        let t = loop {
            let t: f64 = rng.gen_range(-3.0..3.0);
            if t.abs() > 1e-2 {
                break t;
            }
        };
        let x = DVector::from_vec(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let lambda = rng.gen_range(-1.5..1.5);
        worst_jac = worst_jac.max(sys.jacobian_fd_error(t, &x, lambda, 1e-5));
    }
    assert!(worst_jac <= 1e-5, "jacobian FD error {worst_jac:.3e}");

    // (c) basis-choice invariance of certified sign-change locations
    let sin = ExampleConfig::new(1.0, 3, GammaKind::Sin).unwrap();
    let sin_sys = example_system(&sin);
    let grid = uniform_grid(-4.0, 4.0, 0.05);
    let reference = evans_scan(&sin_sys, &grid, &ScanOptions::default()).unwrap();
    let ref_criticals: Vec<f64> = reference
        .certificates
        .iter()
        .map(|c| c.critical_value)
        .collect();
    let ref_signs: Vec<i8> = reference.samples.iter().map(|s| s.sign).collect();
    for trial in 0..10 {
        // a random rotation of a one-dimensional basis is a sign flip
        let sp = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let sm = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let base = evans_scan(&sin_sys, &grid, &ScanOptions::default()).unwrap();
        let init_plus = &base.samples[0].basis_plus * sp;
        let init_minus = &base.samples[0].basis_minus * sm;
        let opts = ScanOptions {
            initial_plus: Some(init_plus),
            initial_minus: Some(init_minus),
            ..Default::default()
        };
        let scan = evans_scan(&sin_sys, &grid, &opts).unwrap();
        let criticals: Vec<f64> = scan.certificates.iter().map(|c| c.critical_value).collect();
        assert_eq!(criticals.len(), ref_criticals.len(), "trial {trial}");
        for (a, b) in criticals.iter().zip(&ref_criticals) {
            assert!(
                (a - b).abs() <= defaults::REFINE_TOL,
                "trial {trial}: certified {a} vs {b}"
            );
        }
        let signs: Vec<i8> = scan.samples.iter().map(|s| s.sign).collect();
        let same = signs == ref_signs;
        let negated = signs
            .iter()
            .zip(&ref_signs)
            .all(|(a, b)| *a == -*b || (*a == 0 && *b == 0));
        assert!(
            same || negated,
            "trial {trial}: sign sequence neither equal nor globally negated"
        );
    }

    // (d) mesh halving: second-order convergence of the branch norm
    let lin_sys = example_system(&cfg);
    let guess = |t: f64| DVector::from_vec(vec![1.2 * (-t.abs()).exp(), 0.0]);
    let mut norms = Vec::new();
    for h in [0.2, 0.1, 0.05] {
        let opts = BvpOptions {
            horizon: 12.0,
            mesh_width: h,
            ..Default::default()
        };
        norms.push(
            solve_homoclinic(&lin_sys, -0.8, &guess, &opts)
                .unwrap()
                .sup_norm,
        );
    }
    let ratio = (norms[0] - norms[1]).abs() / (norms[1] - norms[2]).abs().max(1e-15);
    assert!(
        (2.5..8.0).contains(&ratio),
        "halving ratio {ratio:.2} not second order"
    );

    // (e) odd-n mirror symmetry of continuation at 1e-8
    let pf = ExampleConfig::new(-1.0, 3, GammaKind::Sin).unwrap();
    let pf_sys = example_system(&pf);
    let opts = ContinuationOptions {
        bvp: BvpOptions {
            horizon: 12.0,
            ..Default::default()
        },
        lambda_window: (-1.0, 4.0),
        max_steps: 60,
        ..Default::default()
    };
    let c_plus = continue_from_critical(&pf_sys, 0.0, opts.switch_amplitude, &opts).unwrap();
    let c_minus = continue_from_critical(&pf_sys, 0.0, -opts.switch_amplitude, &opts).unwrap();
    assert_eq!(c_plus.solutions.len(), c_minus.solutions.len());
    let mut mirror = 0.0f64;
    for (a, b) in c_plus.solutions.iter().zip(&c_minus.solutions) {
        for (ya, yb) in a.values.iter().zip(&b.values) {
            mirror = mirror.max((ya + yb).amax());
        }
    }
    assert!(mirror <= 1e-8, "mirror defect {mirror:.3e}");

    // (f) closed-form differentiation gate at 1e-10
    let mut residual = 0.0f64;
    for (beta, n, kind) in [
        (1.0, 2, GammaKind::Linear),
        (1.0, 3, GammaKind::Sin),
        (-1.5, 4, GammaKind::Abs),
        (0.5, 5, GammaKind::Tan),
    ] {
        let cfg = ExampleConfig::new(beta, n, kind).unwrap();
        let sys = example_system(&cfg);
        let lambda = if kind == GammaKind::Tan { 0.7 } else { 1.1 };
        let xi = DVector::from_vec(vec![0.9, -0.3]);
        let h = 1e-3;
        for &t in &[-2.0, -0.5, 0.5, 1.0, 2.5] {
            let p = |tt: f64| closed_form_solution(&cfg, lambda, &xi, tt);
            let dphi =
                (p(t - 2.0 * h) - p(t - h) * 8.0 + p(t + h) * 8.0 - p(t + 2.0 * h)) / (12.0 * h);
            residual = residual.max((dphi - sys.rhs(t, &p(t), lambda)).norm());
        }
    }
    assert!(residual <= 1e-10, "differentiation residual {residual:.3e}");

    println!(
        "[PASS] criterion 8: cocycle {worst_cocycle:.2e} <= 1e-8, Jacobian FD {worst_jac:.2e} <= 1e-5, 10 rotated-basis scans invariant, mesh-halving ratio {ratio:.2}, mirror defect {mirror:.2e} <= 1e-8, closed-form residual {residual:.2e} <= 1e-10"
    );
}

// sanity on the cover parities used by criteria 5 and 6
#[test]
fn cover_parities_alternate_on_the_sin_window() {
    let cfg = ExampleConfig::new(1.0, 3, GammaKind::Sin).unwrap();
    let scan = scan_kind(&cfg);
    let cover = build_cover(&scan, defaults::CLUSTER_TOL).unwrap();
    let pi = j_parity(&cover);
    assert_eq!(pi.len(), 5);
    for w in pi.windows(2) {
        assert_eq!(w[0] * w[1], -1);
    }
}
