//! Parametrized system descriptions, trajectories of the nonlinear flow,
//! and transition matrices of the variational equation along the
//! prescribed branch.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::ode::{self, Node, Segment};
use crate::Result;

pub type RhsFn = dyn Fn(f64, &DVector<f64>, f64) -> DVector<f64> + Send + Sync;
pub type JacobianFn = dyn Fn(f64, &DVector<f64>, f64) -> DMatrix<f64> + Send + Sync;
pub type BranchFn = dyn Fn(f64, f64) -> DVector<f64> + Send + Sync;
pub type DomainFn = dyn Fn(&DVector<f64>) -> bool + Send + Sync;
pub type DistanceFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// A parametrized Carathéodory system `ẋ = f(t, x, λ)` together with the
/// prescribed branch `φ_λ` of bounded entire solutions.
///
/// The right-hand side may be discontinuous in `t` only at the declared
/// `switching_times`; integration never steps across them. Immutable after
/// construction and shareable across threads.
#[derive(Clone)]
pub struct SystemSpec {
    dim: usize,
    rhs: Arc<RhsFn>,
    jacobian: Arc<JacobianFn>,
    switching_times: Vec<f64>,
    branch: Arc<BranchFn>,
    param_interval: (f64, f64),
    domain: Arc<DomainFn>,
    boundary_distance: Arc<DistanceFn>,
    admissible: bool,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("dim", &self.dim)
            .field("switching_times", &self.switching_times)
            .field("param_interval", &self.param_interval)
            .field("admissible", &self.admissible)
            .finish_non_exhaustive()
    }
}

impl SystemSpec {
    pub fn builder(
        dim: usize,
        rhs: impl Fn(f64, &DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
        jacobian: impl Fn(f64, &DVector<f64>, f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> SystemSpecBuilder {
        SystemSpecBuilder {
            dim,
            rhs: Arc::new(rhs),
            jacobian: Arc::new(jacobian),
            switching_times: Vec::new(),
            branch: None,
            param_interval: (f64::NEG_INFINITY, f64::INFINITY),
            domain: None,
            boundary_distance: None,
            admissible: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn switching_times(&self) -> &[f64] {
        &self.switching_times
    }

    pub fn param_interval(&self) -> (f64, f64) {
        self.param_interval
    }

    pub fn admissible(&self) -> bool {
        self.admissible
    }

    pub fn rhs(&self, t: f64, x: &DVector<f64>, lambda: f64) -> DVector<f64> {
        (self.rhs)(t, x, lambda)
    }

    pub fn jacobian(&self, t: f64, x: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
        (self.jacobian)(t, x, lambda)
    }

    /// The prescribed branch value `φ_λ(t)`.
    pub fn branch(&self, t: f64, lambda: f64) -> DVector<f64> {
        (self.branch)(t, lambda)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (self.domain)(x)
    }

    pub fn boundary_distance(&self, x: &DVector<f64>) -> f64 {
        (self.boundary_distance)(x)
    }

    /// Variational coefficient matrix `A_λ(t) = D₂f(t, φ_λ(t), λ)` along the
    /// prescribed branch.
    pub fn variational_matrix(&self, t: f64, lambda: f64) -> DMatrix<f64> {
        let phi = self.branch(t, lambda);
        self.jacobian(t, &phi, lambda)
    }

    /// Relative error between the declared Jacobian and central finite
    /// differences of the right-hand side at one sample point.
    pub fn jacobian_fd_error(&self, t: f64, x: &DVector<f64>, lambda: f64, step: f64) -> f64 {
        let jac = self.jacobian(t, x, lambda);
        let mut fd = DMatrix::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            let df = (self.rhs(t, &xp, lambda) - self.rhs(t, &xm, lambda)) / (2.0 * step);
            fd.set_column(j, &df);
        }
        let denom = jac.norm().max(1.0);
        (jac - fd).norm() / denom
    }

    /// Residual `|φ̇_λ(t) − f(t, φ_λ(t), λ)|` of the prescribed branch,
    /// with the time derivative taken by central differences.
    pub fn branch_residual(&self, t: f64, lambda: f64, step: f64) -> f64 {
        let dphi = (self.branch(t + step, lambda) - self.branch(t - step, lambda)) / (2.0 * step);
        let f = self.rhs(t, &self.branch(t, lambda), lambda);
        (dphi - f).norm()
    }

    /// Switching times strictly inside the open interval between `a` and `b`,
    /// ordered in the direction of integration.
    fn interior_switches(&self, a: f64, b: f64) -> Vec<f64> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut pts: Vec<f64> = self
            .switching_times
            .iter()
            .copied()
            .filter(|&s| s > lo && s < hi)
            .collect();
        if a > b {
            pts.reverse();
        }
        pts
    }
}

/// Maps a stage time falling exactly on a segment endpoint to the interior
/// limit, so that `f` at a switching time is read one-sided.
fn interior_time(t: f64, a: f64, b: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let eps = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    if hi - lo <= 2.0 * eps {
        return t;
    }
    t.clamp(lo + eps, hi - eps)
}

/// Builder for [`SystemSpec`]; defaults: empty switching set, zero branch,
/// `Λ = ℝ`, `Ω = ℝᵈ`, not admissible.
pub struct SystemSpecBuilder {
    dim: usize,
    rhs: Arc<RhsFn>,
    jacobian: Arc<JacobianFn>,
    switching_times: Vec<f64>,
    branch: Option<Arc<BranchFn>>,
    param_interval: (f64, f64),
    domain: Option<Arc<DomainFn>>,
    boundary_distance: Option<Arc<DistanceFn>>,
    admissible: bool,
}

impl SystemSpecBuilder {
    pub fn switching_times(mut self, times: Vec<f64>) -> Self {
        self.switching_times = times;
        self
    }

    pub fn branch(mut self, branch: impl Fn(f64, f64) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.branch = Some(Arc::new(branch));
        self
    }

    pub fn param_interval(mut self, lo: f64, hi: f64) -> Self {
        self.param_interval = (lo, hi);
        self
    }

    pub fn domain(
        mut self,
        contains: impl Fn(&DVector<f64>) -> bool + Send + Sync + 'static,
        distance: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.domain = Some(Arc::new(contains));
        self.boundary_distance = Some(Arc::new(distance));
        self
    }

    pub fn admissible(mut self, flag: bool) -> Self {
        self.admissible = flag;
        self
    }

    pub fn build(self) -> Result<SystemSpec> {
        if self.dim == 0 {
            return Err(Error::invalid("state dimension must be positive"));
        }
        for w in self.switching_times.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid("switching times must be strictly increasing"));
            }
        }
        if !(self.param_interval.0 < self.param_interval.1) {
            return Err(Error::invalid("parameter interval must be nonempty"));
        }
        let dim = self.dim;
        Ok(SystemSpec {
            dim,
            rhs: self.rhs,
            jacobian: self.jacobian,
            switching_times: self.switching_times,
            branch: self
                .branch
                .unwrap_or_else(|| Arc::new(move |_t, _l| DVector::zeros(dim))),
            param_interval: self.param_interval,
            domain: self.domain.unwrap_or_else(|| Arc::new(|_x| true)),
            boundary_distance: self
                .boundary_distance
                .unwrap_or_else(|| Arc::new(|_x| f64::INFINITY)),
            admissible: self.admissible,
        })
    }
}

/// Dense-output trajectory of the nonlinear flow, assembled from segments
/// between switching times.
///
/// Node times are strictly increasing except at switching times, where a
/// node appears twice with identical state and the two one-sided
/// derivatives; interpolation needs both limits to stay accurate on either
/// side of the discontinuity.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub nodes: Vec<Node>,
    pub tol: f64,
    /// Interpolation order of the dense output (cubic Hermite).
    pub interp_order: usize,
}

impl Trajectory {
    pub fn start_time(&self) -> f64 {
        self.nodes.first().expect("nonempty trajectory").t
    }

    pub fn end_time(&self) -> f64 {
        self.nodes.last().expect("nonempty trajectory").t
    }

    pub fn end_state(&self) -> DVector<f64> {
        self.nodes.last().expect("nonempty trajectory").x.clone()
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let seg = Segment {
            nodes: self.nodes.clone(),
        };
        seg.eval(t)
    }
}

/// Integrates the nonlinear initial value problem from `t0` to `t1`,
/// splitting at every switching time so that no step straddles a
/// discontinuity of `f` in `t`.
pub fn integrate_ivp(
    sys: &SystemSpec,
    lambda: f64,
    t0: f64,
    x0: &DVector<f64>,
    t1: f64,
    tol: f64,
) -> Result<Trajectory> {
    if !sys.contains(x0) {
        return Err(Error::DomainExit { exit_time: t0 });
    }
    let mut boundaries = sys.interior_switches(t0, t1);
    boundaries.push(t1);
    let mut nodes: Vec<Node> = Vec::new();
    let mut t_cur = t0;
    let mut x_cur = x0.clone();
    for b in boundaries {
        let seg = ode::integrate_segment(
            |t, x| sys.rhs(interior_time(t, t_cur, b), x, lambda),
            t_cur,
            x_cur.clone(),
            b,
            tol,
            None,
            |x| sys.contains(x),
        )?;
        t_cur = b;
        x_cur = seg.end().x.clone();
        nodes.extend(seg.nodes);
    }
    Ok(Trajectory {
        nodes,
        tol,
        interp_order: 3,
    })
}

/// Transition matrices of the variational equation in factored form
/// `Φ(t, s) = Q · R_m · … · R_1`, renormalized by QR after every window to
/// keep each stored factor well conditioned.
#[derive(Debug, Clone)]
pub struct FactoredPropagator {
    pub from: f64,
    pub to: f64,
    /// Final orthogonal factor.
    pub q: DMatrix<f64>,
    /// Triangular window factors, oldest first.
    pub rs: Vec<DMatrix<f64>>,
    /// Window boundaries, `from = w_0, …, w_m = to`.
    pub windows: Vec<f64>,
}

impl FactoredPropagator {
    /// Reassembles the dense transition matrix.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let dim = self.q.nrows();
        let mut acc = DMatrix::identity(dim, dim);
        for (i, r) in self.rs.iter().enumerate() {
            acc = r * acc;
            if !acc.iter().all(|v| v.is_finite()) || acc.amax() > 1e290 {
                return Err(Error::Overflow {
                    window_start: self.windows[i],
                    window_end: self.windows[i + 1],
                });
            }
        }
        Ok(&self.q * acc)
    }

    /// Log-scaled SVD of the full product; works even when the dense matrix
    /// would overflow. Returns logarithms of singular values (descending)
    /// and the orthogonal matrix of right singular vectors in that order.
    pub fn svd_log(&self) -> (Vec<f64>, DMatrix<f64>) {
        let dim = self.q.nrows();
        let mut acc = crate::linalg::ProductSvd::identity(dim);
        for r in &self.rs {
            acc.push_left(r);
        }
        acc.push_left(&self.q);
        (acc.log_sv, acc.v)
    }
}

/// Computes the factored propagator of the variational equation along the
/// prescribed branch, from time `s` to time `t`.
pub fn propagator(
    sys: &SystemSpec,
    lambda: f64,
    s: f64,
    t: f64,
    tol: f64,
    window: f64,
) -> Result<FactoredPropagator> {
    if !(window > 0.0) {
        return Err(Error::invalid("QR window must be positive"));
    }
    let dim = sys.dim();
    // window boundaries from s to t, further split at switching times
    let mut boundaries = vec![s];
    let dir = if t >= s { 1.0 } else { -1.0 };
    let mut cur = s;
    while (t - cur) * dir > 1e-14 * (1.0 + t.abs()) {
        let next = if ((t - cur) * dir) > window {
            cur + dir * window
        } else {
            t
        };
        for sw in sys.interior_switches(cur, next) {
            boundaries.push(sw);
        }
        boundaries.push(next);
        cur = next;
    }
    boundaries.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + a.abs()));

    let mut q = DMatrix::<f64>::identity(dim, dim);
    let mut rs = Vec::new();
    let mut kept = vec![boundaries[0]];
    for w in boundaries.windows(2) {
        let (a, b) = (w[0], w[1]);
        let x0 = DVector::from_iterator(dim * dim, q.iter().copied());
        let seg = ode::integrate_segment(
            |tau, xv| {
                let xm = DMatrix::from_iterator(dim, dim, xv.iter().copied());
                let a_mat = sys.variational_matrix(interior_time(tau, a, b), lambda);
                let prod = a_mat * xm;
                DVector::from_iterator(dim * dim, prod.iter().copied())
            },
            a,
            x0,
            b,
            tol,
            None,
            |_| true,
        )?;
        let m_end = DMatrix::from_iterator(dim, dim, seg.end().x.iter().copied());
        if !m_end.iter().all(|v| v.is_finite()) {
            return Err(Error::Overflow {
                window_start: a,
                window_end: b,
            });
        }
        let qr = m_end.qr();
        let mut q_new = qr.q();
        let mut r_new = qr.r();
        // normalize so diag(R) >= 0; keeps factors deterministic
        for i in 0..dim {
            if r_new[(i, i)] < 0.0 {
                for j in 0..dim {
                    r_new[(i, j)] = -r_new[(i, j)];
                }
                for k in 0..dim {
                    q_new[(k, i)] = -q_new[(k, i)];
                }
            }
        }
        rs.push(r_new);
        kept.push(b);
        q = q_new;
    }
    Ok(FactoredPropagator {
        from: s,
        to: t,
        q,
        rs,
        windows: kept,
    })
}

/// Dense transition matrix `Φ_λ(t, s)` of the variational equation.
pub fn transition_matrix(
    sys: &SystemSpec,
    lambda: f64,
    s: f64,
    t: f64,
    tol: f64,
) -> Result<DMatrix<f64>> {
    propagator(sys, lambda, s, t, tol, crate::defaults::QR_WINDOW)?.dense()
}

/// Propagates a single vector by the variational flow: `Φ_λ(t, s) v`.
pub fn propagate_vector(
    sys: &SystemSpec,
    lambda: f64,
    s: f64,
    t: f64,
    v: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let mut boundaries = sys.interior_switches(s, t);
    boundaries.push(t);
    let mut t_cur = s;
    let mut x = v.clone();
    for b in boundaries {
        let seg = ode::integrate_segment(
            |tau, xv| sys.variational_matrix(interior_time(tau, t_cur, b), lambda) * xv,
            t_cur,
            x,
            b,
            tol,
            None,
            |_| true,
        )?;
        x = seg.end().x.clone();
        t_cur = b;
    }
    Ok(x)
}
