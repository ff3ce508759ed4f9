//! Embedded Dormand–Prince 5(4) integrator with adaptive steps and
//! cubic-Hermite dense output.
//!
//! The stepper is direction-agnostic: `t1 < t0` integrates backward. It
//! never evaluates the right-hand side outside `[min(t0,t1), max(t0,t1)]`;
//! segmentation at switching times is handled one level up.

use nalgebra::DVector;

use crate::error::Error;
use crate::Result;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 35.0 / 384.0 - 5179.0 / 57600.0;
const E3: f64 = 500.0 / 1113.0 - 7571.0 / 16695.0;
const E4: f64 = 125.0 / 192.0 - 393.0 / 640.0;
const E5: f64 = -2187.0 / 6784.0 + 92097.0 / 339200.0;
const E6: f64 = 11.0 / 84.0 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 5.0;
const MAX_STEPS: usize = 2_000_000;

/// One accepted node of a solution: time, state, and state derivative.
#[derive(Debug, Clone)]
pub struct Node {
    pub t: f64,
    pub x: DVector<f64>,
    pub dx: DVector<f64>,
}

/// Dense-output solution of a single smooth segment.
#[derive(Debug, Clone)]
pub struct Segment {
    pub nodes: Vec<Node>,
}

impl Segment {
    pub fn start(&self) -> &Node {
        self.nodes.first().expect("segment has nodes")
    }

    pub fn end(&self) -> &Node {
        self.nodes.last().expect("segment has nodes")
    }

    /// Cubic Hermite interpolation on the accepted mesh. `t` is clamped to
    /// the segment range.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let nodes = &self.nodes;
        if nodes.len() == 1 {
            return nodes[0].x.clone();
        }
        let forward = nodes.last().unwrap().t >= nodes[0].t;
        // locate the bracketing interval
        let mut lo = 0;
        let mut hi = nodes.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let before = if forward {
                nodes[mid].t <= t
            } else {
                nodes[mid].t >= t
            };
            if before {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (&nodes[lo], &nodes[hi]);
        let h = b.t - a.t;
        if h == 0.0 {
            return a.x.clone();
        }
        let s = ((t - a.t) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &a.x * h00 + &a.dx * (h10 * h) + &b.x * h01 + &b.dx * (h11 * h)
    }
}

/// Integrates `dx/dt = rhs(t, x)` from `t0` to `t1` with local error per
/// step at most `tol` (mixed absolute/relative). `domain` is checked at
/// every accepted node; a `false` aborts with `DomainExit`.
pub fn integrate_segment<F, G>(
    rhs: F,
    t0: f64,
    x0: DVector<f64>,
    t1: f64,
    tol: f64,
    h_init: Option<f64>,
    domain: G,
) -> Result<Segment>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
    G: Fn(&DVector<f64>) -> bool,
{
    if !(tol > 0.0) {
        return Err(Error::invalid("integration tolerance must be positive"));
    }
    if !domain(&x0) {
        return Err(Error::DomainExit { exit_time: t0 });
    }
    let dim = x0.nrows();
    let span = t1 - t0;
    let mut k1 = rhs(t0, &x0);
    let mut nodes = vec![Node {
        t: t0,
        x: x0.clone(),
        dx: k1.clone(),
    }];
    if span == 0.0 {
        return Ok(Segment { nodes });
    }
    let dir = span.signum();
    let mut h = match h_init {
        Some(h0) => h0.abs().min(span.abs()) * dir,
        None => (span.abs() * 1e-2).clamp(1e-8, 0.1) * dir,
    };
    let mut t = t0;
    let mut x = x0;
    let min_step = span.abs() * 1e-15 + 1e-300;

    for _ in 0..MAX_STEPS {
        if (t1 - t) * dir <= 0.0 {
            return Ok(Segment { nodes });
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let k2 = rhs(t + C2 * h, &(&x + &k1 * (A21 * h)));
        let k3 = rhs(t + C3 * h, &(&x + &k1 * (A31 * h) + &k2 * (A32 * h)));
        let k4 = rhs(
            t + C4 * h,
            &(&x + &k1 * (A41 * h) + &k2 * (A42 * h) + &k3 * (A43 * h)),
        );
        let k5 = rhs(
            t + C5 * h,
            &(&x + &k1 * (A51 * h) + &k2 * (A52 * h) + &k3 * (A53 * h) + &k4 * (A54 * h)),
        );
        let k6 = rhs(
            t + h,
            &(&x
                + &k1 * (A61 * h)
                + &k2 * (A62 * h)
                + &k3 * (A63 * h)
                + &k4 * (A64 * h)
                + &k5 * (A65 * h)),
        );
        let x_new =
            &x + &k1 * (B1 * h) + &k3 * (B3 * h) + &k4 * (B4 * h) + &k5 * (B5 * h) + &k6 * (B6 * h);
        let k7 = rhs(t + h, &x_new);
        let err_vec = &k1 * (E1 * h)
            + &k3 * (E3 * h)
            + &k4 * (E4 * h)
            + &k5 * (E5 * h)
            + &k6 * (E6 * h)
            + &k7 * (E7 * h);
        let mut err = 0.0f64;
        for i in 0..dim {
            let scale = tol + tol * x[i].abs().max(x_new[i].abs());
            let e = err_vec[i] / scale;
            err += e * e;
        }
        err = (err / dim as f64).sqrt();

        if err <= 1.0 {
            let t_prev = t;
            t += h;
            if !domain(&x_new) {
                // locate the boundary crossing inside the step by bisection
                // on the Hermite interpolant of this step
                let probe = Segment {
                    nodes: vec![
                        Node {
                            t: t_prev,
                            x: x.clone(),
                            dx: k1.clone(),
                        },
                        Node {
                            t,
                            x: x_new.clone(),
                            dx: k7,
                        },
                    ],
                };
                let mut inside = t_prev;
                let mut outside = t;
                for _ in 0..60 {
                    let mid = 0.5 * (inside + outside);
                    if domain(&probe.eval(mid)) {
                        inside = mid;
                    } else {
                        outside = mid;
                    }
                }
                return Err(Error::DomainExit { exit_time: outside });
            }
            x = x_new;
            k1 = k7; // FSAL
            nodes.push(Node {
                t,
                x: x.clone(),
                dx: k1.clone(),
            });
        }
        let scale = if err == 0.0 {
            MAX_SCALE
        } else {
            (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE)
        };
        h *= scale;
        if h.abs() < min_step {
            return Err(Error::StepFailure { t, step: h });
        }
    }
    Err(Error::StepFailure { t, step: h })
}
