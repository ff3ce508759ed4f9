//! Homoclinic perturbations as solutions of a projection boundary-value
//! problem, pseudo-arclength continuation of branches, and continuum
//! classification.
//!
//! The infinite-line problem for `y = φ − φ_λ` is truncated to `[−T, T]`
//! with midpoint collocation, segmented at switching times. Boundary
//! conditions kill the components of `y(±T)` outside the propagated
//! dichotomy subspaces: `(d−r)` conditions at `+T` against
//! `Φ_λ(T,0)·R(P⁺(0))` and `(d−n)` conditions at `−T` against
//! `Φ_λ(−T,0)·N(P⁻(0))`, which is `d` conditions in total since
//! `r + n = d`. Newton systems have almost-block-diagonal shape and are
//! solved by a staircase QR sweep, which stays stable over long horizons.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cover::{self, JCover};
use crate::dichotomy::{self, SubspaceOptions};
use crate::error::Error;
use crate::linalg;
use crate::system::{self, SystemSpec};
use crate::Result;

/// A converged solution of the truncated boundary-value problem.
#[derive(Debug, Clone)]
pub struct HomoclinicSolution {
    pub lambda: f64,
    /// Mesh `t_0 = −T < … < t_M = T`, switching times included as nodes.
    pub mesh: Vec<f64>,
    /// Values `y_k` at the mesh nodes.
    pub values: Vec<DVector<f64>>,
    /// Discrete sup norm `max_k |y_k|_∞`.
    pub sup_norm: f64,
    /// `max(sup |y|, sup |ẏ|)` with `ẏ` read off the vector field.
    pub w1inf_norm: f64,
    /// Sup norm of the collocation and boundary residuals.
    pub residual: f64,
}

impl HomoclinicSolution {
    pub fn value_at_zero(&self) -> DVector<f64> {
        let mut best = 0usize;
        for (i, t) in self.mesh.iter().enumerate() {
            if t.abs() < self.mesh[best].abs() {
                best = i;
            }
        }
        self.values[best].clone()
    }
}

/// Why one end of a continuation run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EndpointEvent {
    /// `‖y‖` fell below the triviality floor; the branch rejoined the
    /// prescribed branch at `lambda_star`.
    ReturnsToTrivial { lambda_star: f64 },
    /// The parameter reached the continuation window or the boundary of Λ.
    ParamBoundary { lambda: f64 },
    /// The state approached or left the domain Ω.
    DomainBoundary { lambda: f64 },
    /// `‖y‖` exceeded the norm cap.
    NormCap { lambda: f64 },
    /// Step budget exhausted before any other event.
    StepLimit { lambda: f64 },
}

/// Global-alternative tag of a continuum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Returns,
    Unbounded,
    DomainBoundary,
    Inconclusive,
}

/// One-directional continuation run (the seed point is not included).
#[derive(Debug, Clone)]
pub struct BranchRun {
    pub points: Vec<HomoclinicSolution>,
    pub terminal: EndpointEvent,
}

/// A connected piece of the solution set traced by continuation.
#[derive(Debug, Clone)]
pub struct Continuum {
    /// Solutions ordered along the branch.
    pub solutions: Vec<HomoclinicSolution>,
    pub start_event: EndpointEvent,
    pub end_event: EndpointEvent,
    /// Critical parameter the branch was switched from, when applicable.
    pub seed_lambda_star: Option<f64>,
    /// Parameters of trivial-branch touches that are interior to the
    /// assembled continuum (e.g. where two merged runs rejoin `y ≡ 0`).
    pub interior_returns: Vec<f64>,
}

impl Continuum {
    pub fn lambda_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.solutions {
            lo = lo.min(s.lambda);
            hi = hi.max(s.lambda);
        }
        (lo, hi)
    }

    /// All trivial-return parameters: endpoint events plus interior touches.
    pub fn return_parameters(&self) -> Vec<f64> {
        let mut out = self.interior_returns.clone();
        for ev in [&self.start_event, &self.end_event] {
            if let EndpointEvent::ReturnsToTrivial { lambda_star } = ev {
                out.push(*lambda_star);
            }
        }
        out
    }
}

/// Options for the boundary-value solves.
#[derive(Debug, Clone)]
pub struct BvpOptions {
    pub horizon: f64,
    pub mesh_width: f64,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub triviality_floor: f64,
    pub subspace: SubspaceOptions,
    pub ode_tol: f64,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            horizon: crate::defaults::BVP_HORIZON,
            mesh_width: crate::defaults::MESH_WIDTH,
            newton_tol: crate::defaults::NEWTON_TOL,
            max_newton_iters: 30,
            triviality_floor: crate::defaults::TRIVIALITY_FLOOR,
            subspace: SubspaceOptions::default(),
            ode_tol: crate::defaults::ODE_TOL,
        }
    }
}

/// Options for pseudo-arclength continuation.
#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    pub bvp: BvpOptions,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
    pub norm_cap: f64,
    /// Continuation window in λ; intersected with the system's parameter
    /// interval shrunk by `boundary_margin`.
    pub lambda_window: (f64, f64),
    pub boundary_margin: f64,
    /// Distance to ∂Ω below which a point counts as hitting the domain
    /// boundary.
    pub domain_margin: f64,
    /// Amplitude used when switching onto a branch at a critical value.
    pub switch_amplitude: f64,
    pub max_corrector_iters: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            bvp: BvpOptions::default(),
            initial_step: 2e-2,
            max_step: 2.5e-1,
            min_step: 1e-9,
            max_steps: 5000,
            norm_cap: crate::defaults::NORM_CAP,
            lambda_window: (f64::NEG_INFINITY, f64::INFINITY),
            boundary_margin: crate::defaults::BOUNDARY_MARGIN,
            domain_margin: 0.0,
            switch_amplitude: crate::defaults::SWITCH_AMPLITUDE,
            max_corrector_iters: 9,
        }
    }
}

// ---------------------------------------------------------------------------
// mesh and boundary conditions

/// Mesh on `[−T, T]` with target width `h`; switching times become nodes.
pub fn build_mesh(sys: &SystemSpec, horizon: f64, h: f64) -> Vec<f64> {
    let m = ((2.0 * horizon) / h).ceil() as usize;
    let m = m.max(4);
    let step = 2.0 * horizon / m as f64;
    let mut mesh: Vec<f64> = (0..=m).map(|i| -horizon + i as f64 * step).collect();
    for &sw in sys.switching_times() {
        if sw <= -horizon || sw >= horizon {
            continue;
        }
        let mut nearest = 0usize;
        for (i, t) in mesh.iter().enumerate() {
            if (t - sw).abs() < (mesh[nearest] - sw).abs() {
                nearest = i;
            }
        }
        if (mesh[nearest] - sw).abs() < 0.5 * step && nearest != 0 && nearest != mesh.len() - 1 {
            mesh[nearest] = sw;
        } else {
            mesh.push(sw);
        }
    }
    mesh.sort_by(|a, b| a.partial_cmp(b).unwrap());
    mesh.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * (1.0 + horizon));
    mesh
}

/// Projection boundary data at a fixed parameter: orthonormal bases of the
/// orthogonal complements of the propagated subspaces at `±T`.
#[derive(Debug, Clone)]
pub struct BoundaryConditions {
    /// d×(d−n); rows of `c_minusᵀ y(−T) = 0`.
    pub c_minus: DMatrix<f64>,
    /// d×(d−r); rows of `c_plusᵀ y(+T) = 0`.
    pub c_plus: DMatrix<f64>,
    pub rank_plus: usize,
    pub rank_minus: usize,
}

fn orthogonal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let d = basis.nrows();
    let k = basis.ncols();
    let proj = DMatrix::identity(d, d) - basis * basis.transpose();
    let svd = proj.svd(true, false);
    let u = svd.u.expect("svd with u");
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let mut out = DMatrix::zeros(d, d - k);
    for (j, &idx) in order.iter().take(d - k).enumerate() {
        out.set_column(j, &u.column(idx));
    }
    linalg::canonicalize_columns(out)
}

/// Computes the projection boundary conditions at parameter `lambda`.
pub fn boundary_conditions(
    sys: &SystemSpec,
    lambda: f64,
    horizon: f64,
    opts: &SubspaceOptions,
    ode_tol: f64,
) -> Result<BoundaryConditions> {
    let (plus, minus) = dichotomy::subspace_pair(sys, lambda, opts)?;
    // propagate the stable basis to +T and the unstable basis to −T; both
    // consist of decaying directions, so no overflow is possible
    let propagate = |basis: &DMatrix<f64>, dest: f64| -> Result<DMatrix<f64>> {
        let mut cols = Vec::with_capacity(basis.ncols());
        for j in 0..basis.ncols() {
            let v = basis.column(j).clone_owned();
            cols.push(system::propagate_vector(sys, lambda, 0.0, dest, &v, ode_tol)?);
        }
        linalg::orthonormalize_mgs(DMatrix::from_columns(&cols), 1e-300)
    };
    let w_plus = propagate(&plus.basis, horizon)?;
    let w_minus = propagate(&minus.basis, -horizon)?;
    Ok(BoundaryConditions {
        c_minus: orthogonal_complement(&w_minus),
        c_plus: orthogonal_complement(&w_plus),
        rank_plus: plus.rank,
        rank_minus: minus.rank,
    })
}

// ---------------------------------------------------------------------------
// collocation residual and Jacobian

fn perturbation_field(
    sys: &SystemSpec,
    t: f64,
    y: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    let phi = sys.branch(t, lambda);
    sys.rhs(t, &(y + &phi), lambda) - sys.rhs(t, &phi, lambda)
}

/// Stacked residual: `(d−n)` rows of the left boundary condition, `d` rows
/// per collocation interval (in derivative units), `(d−r)` rows of the
/// right boundary condition.
fn bvp_residual(
    sys: &SystemSpec,
    lambda: f64,
    mesh: &[f64],
    ys: &[DVector<f64>],
    bc: &BoundaryConditions,
) -> DVector<f64> {
    let d = sys.dim();
    let m = mesh.len() - 1;
    let n_minus = bc.c_minus.ncols();
    let n_plus = bc.c_plus.ncols();
    let mut out = DVector::zeros(n_minus + m * d + n_plus);
    let left = bc.c_minus.transpose() * &ys[0];
    for i in 0..n_minus {
        out[i] = left[i];
    }
    for k in 0..m {
        let h = mesh[k + 1] - mesh[k];
        let tm = 0.5 * (mesh[k] + mesh[k + 1]);
        let ym = 0.5 * (&ys[k] + &ys[k + 1]);
        let g = perturbation_field(sys, tm, &ym, lambda);
        for i in 0..d {
            out[n_minus + k * d + i] = (ys[k + 1][i] - ys[k][i]) / h - g[i];
        }
    }
    let right = bc.c_plus.transpose() * &ys[m];
    for i in 0..n_plus {
        out[n_minus + m * d + i] = right[i];
    }
    out
}

fn bvp_jacobian(
    sys: &SystemSpec,
    lambda: f64,
    mesh: &[f64],
    ys: &[DVector<f64>],
) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
    let d = sys.dim();
    let m = mesh.len() - 1;
    let eye = DMatrix::<f64>::identity(d, d);
    let mut blocks = Vec::with_capacity(m);
    for k in 0..m {
        let h = mesh[k + 1] - mesh[k];
        let tm = 0.5 * (mesh[k] + mesh[k + 1]);
        let ym = 0.5 * (&ys[k] + &ys[k + 1]);
        let phi = sys.branch(tm, lambda);
        let dg = sys.jacobian(tm, &(ym + phi), lambda);
        let a = -&eye / h - 0.5 * &dg;
        let b = &eye / h - 0.5 * &dg;
        blocks.push((a, b));
    }
    blocks
}

/// Finite-difference derivative of the residual in λ (boundary rows are
/// frozen and contribute zero).
fn bvp_residual_dlambda(
    sys: &SystemSpec,
    lambda: f64,
    mesh: &[f64],
    ys: &[DVector<f64>],
    bc: &BoundaryConditions,
) -> DVector<f64> {
    let delta = 1e-6 * (1.0 + lambda.abs());
    let fp = bvp_residual(sys, lambda + delta, mesh, ys, bc);
    let fm = bvp_residual(sys, lambda - delta, mesh, ys, bc);
    (fp - fm) / (2.0 * delta)
}

// ---------------------------------------------------------------------------
// staircase QR solver for the almost-block-diagonal system

/// Solves the square system with row blocks `top (c×d) | (A_k B_k) (d×2d)
/// | bottom (c_b×d)` for possibly several right-hand sides. Orthogonal
/// elimination, stable without pivoting.
fn solve_abd(
    top: &DMatrix<f64>,
    blocks: &[(DMatrix<f64>, DMatrix<f64>)],
    bottom: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = blocks[0].0.nrows();
    let c = top.nrows();
    let cb = bottom.nrows();
    let m = blocks.len();
    let nrhs = rhs.ncols();
    if c + cb != d {
        return Err(Error::invalid("boundary condition count must equal d"));
    }
    let mut carry = top.clone();
    let mut carry_rhs = rhs.rows(0, c).into_owned();
    let mut tri: Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> = Vec::with_capacity(m);
    let mut row = c;
    for (a, b) in blocks {
        let mut w = DMatrix::zeros(c + d, 2 * d);
        w.view_mut((0, 0), (c, d)).copy_from(&carry);
        w.view_mut((c, 0), (d, d)).copy_from(a);
        w.view_mut((c, d), (d, d)).copy_from(b);
        let mut wr = DMatrix::zeros(c + d, nrhs);
        wr.rows_mut(0, c).copy_from(&carry_rhs);
        wr.rows_mut(c, d).copy_from(&rhs.rows(row, d));
        row += d;
        let qr = w.qr();
        let q = qr.q();
        let r = qr.r();
        let qtr = q.transpose() * wr;
        tri.push((
            r.view((0, 0), (d, d)).into_owned(),
            r.view((0, d), (d, d)).into_owned(),
            qtr.rows(0, d).into_owned(),
        ));
        carry = r.view((d, d), (c, d)).into_owned();
        carry_rhs = qtr.rows(d, c).into_owned();
    }
    // final square block on the last unknown
    let mut fin = DMatrix::zeros(d, d);
    fin.rows_mut(0, c).copy_from(&carry);
    fin.rows_mut(c, cb).copy_from(bottom);
    let mut fin_rhs = DMatrix::zeros(d, nrhs);
    fin_rhs.rows_mut(0, c).copy_from(&carry_rhs);
    fin_rhs.rows_mut(c, cb).copy_from(&rhs.rows(row, cb));
    let qr = fin.qr();
    let mut y_last = fin_rhs.clone();
    if !qr.solve_mut(&mut y_last) {
        return Err(Error::SingularSystem {
            context: "terminal block of the collocation system",
        });
    }
    let mut sol = DMatrix::zeros((m + 1) * d, nrhs);
    sol.rows_mut(m * d, d).copy_from(&y_last);
    let mut y_next = y_last;
    for k in (0..m).rev() {
        let (t, t12, r) = &tri[k];
        let rhs_k = r - t12 * &y_next;
        let y_k = solve_upper(t, &rhs_k)?;
        sol.rows_mut(k * d, d).copy_from(&y_k);
        y_next = y_k;
    }
    Ok(sol)
}

fn solve_upper(t: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = t.nrows();
    let scale = t.amax();
    let mut out = rhs.clone_owned();
    for col in 0..rhs.ncols() {
        for i in (0..d).rev() {
            let mut acc = out[(i, col)];
            for j in (i + 1)..d {
                acc -= t[(i, j)] * out[(j, col)];
            }
            let diag = t[(i, i)];
            if diag.abs() <= 1e-14 * scale.max(1e-300) {
                return Err(Error::SingularSystem {
                    context: "staircase triangular factor",
                });
            }
            out[(i, col)] = acc / diag;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// norms and bookkeeping

fn stack(ys: &[DVector<f64>]) -> DVector<f64> {
    let d = ys[0].nrows();
    let mut out = DVector::zeros(ys.len() * d);
    for (k, y) in ys.iter().enumerate() {
        for i in 0..d {
            out[k * d + i] = y[i];
        }
    }
    out
}

fn unstack(v: &DVector<f64>, d: usize) -> Vec<DVector<f64>> {
    (0..v.nrows() / d)
        .map(|k| DVector::from_iterator(d, (0..d).map(|i| v[k * d + i])))
        .collect()
}

fn sup_norm(ys: &[DVector<f64>]) -> f64 {
    ys.iter().fold(0.0f64, |m, y| m.max(y.amax()))
}

fn derivative_sup(sys: &SystemSpec, lambda: f64, mesh: &[f64], ys: &[DVector<f64>]) -> f64 {
    // sampled at collocation midpoints, which avoids switching nodes
    let mut out: f64 = 0.0;
    for k in 0..mesh.len() - 1 {
        let tm = 0.5 * (mesh[k] + mesh[k + 1]);
        let ym = 0.5 * (&ys[k] + &ys[k + 1]);
        out = out.max(perturbation_field(sys, tm, &ym, lambda).amax());
    }
    out
}

fn mesh_inner(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) / a.nrows() as f64
}

fn make_solution(
    sys: &SystemSpec,
    lambda: f64,
    mesh: &[f64],
    ys: Vec<DVector<f64>>,
    residual: f64,
) -> HomoclinicSolution {
    let sn = sup_norm(&ys);
    let dn = derivative_sup(sys, lambda, mesh, &ys);
    HomoclinicSolution {
        lambda,
        mesh: mesh.to_vec(),
        values: ys,
        sup_norm: sn,
        w1inf_norm: sn.max(dn),
        residual,
    }
}

fn check_domain(
    sys: &SystemSpec,
    lambda: f64,
    mesh: &[f64],
    ys: &[DVector<f64>],
    margin: f64,
) -> Option<f64> {
    for (t, y) in mesh.iter().zip(ys) {
        let x = y + sys.branch(*t, lambda);
        if !sys.contains(&x) || sys.boundary_distance(&x) <= margin {
            return Some(*t);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// fixed-parameter Newton solve

/// Damped Newton on the collocation system at fixed `λ`. The `guess` is
/// sampled on the mesh. Converging onto the prescribed branch itself is
/// reported as `TrivialCollapse`.
pub fn solve_homoclinic(
    sys: &SystemSpec,
    lambda: f64,
    guess: &dyn Fn(f64) -> DVector<f64>,
    opts: &BvpOptions,
) -> Result<HomoclinicSolution> {
    let mesh = build_mesh(sys, opts.horizon, opts.mesh_width);
    let ys: Vec<DVector<f64>> = mesh.iter().map(|t| guess(*t)).collect();
    if let Some(t) = check_domain(sys, lambda, &mesh, &ys, 0.0) {
        return Err(Error::DomainExit { exit_time: t });
    }
    let bc = boundary_conditions(sys, lambda, opts.horizon, &opts.subspace, opts.ode_tol)?;
    let ys = newton_fixed_lambda(sys, lambda, &mesh, ys, &bc, opts)?;
    if let Some(t) = check_domain(sys, lambda, &mesh, &ys, 0.0) {
        return Err(Error::DomainExit { exit_time: t });
    }
    let res = bvp_residual(sys, lambda, &mesh, &ys, &bc).amax();
    let sol = make_solution(sys, lambda, &mesh, ys, res);
    if sol.sup_norm <= opts.triviality_floor {
        return Err(Error::TrivialCollapse {
            norm: sol.sup_norm,
            floor: opts.triviality_floor,
        });
    }
    Ok(sol)
}

fn newton_fixed_lambda(
    sys: &SystemSpec,
    lambda: f64,
    mesh: &[f64],
    mut ys: Vec<DVector<f64>>,
    bc: &BoundaryConditions,
    opts: &BvpOptions,
) -> Result<Vec<DVector<f64>>> {
    let d = sys.dim();
    let mut f = bvp_residual(sys, lambda, mesh, &ys, bc);
    for _iter in 0..opts.max_newton_iters {
        let fnorm = f.amax();
        // residual target scales with the solution so large-amplitude
        // branches are not asked to beat their own rounding floor
        if fnorm <= opts.newton_tol * (1.0 + sup_norm(&ys)) {
            return Ok(ys);
        }
        let blocks = bvp_jacobian(sys, lambda, mesh, &ys);
        let rhs = DMatrix::from_column_slice(f.nrows(), 1, (-&f).as_slice());
        let delta = solve_abd(&bc.c_minus.transpose(), &blocks, &bc.c_plus.transpose(), &rhs)?;
        let delta = delta.column(0).into_owned();
        let base = stack(&ys);
        let mut step = 1.0f64;
        loop {
            let trial = unstack(&(&base + step * &delta), d);
            let ftrial = bvp_residual(sys, lambda, mesh, &trial, bc);
            if ftrial.amax() < (1.0 - 0.25 * step) * fnorm || step < 1e-3 {
                ys = trial;
                f = ftrial;
                break;
            }
            step *= 0.5;
        }
    }
    let fnorm = f.amax();
    if fnorm <= opts.newton_tol * (1.0 + sup_norm(&ys)) {
        Ok(ys)
    } else {
        Err(Error::NoConvergence {
            residual: fnorm,
            iterations: opts.max_newton_iters,
        })
    }
}

// ---------------------------------------------------------------------------
// kernel direction and branch switching

/// Unit vector spanning the numerical intersection of the plus and minus
/// subspaces at a critical parameter, with a decay-rate estimate for
/// envelope guesses.
#[derive(Debug, Clone)]
pub struct KernelSeed {
    pub direction: DVector<f64>,
    pub angle: f64,
    pub decay_rate: f64,
}

/// Principal-vector pair with the smallest principal angle between the
/// half-line subspaces; fails with `NoIntersection` when the angle exceeds
/// 1e-3 (the parameter is not critical at this horizon).
pub fn kernel_direction(
    sys: &SystemSpec,
    lambda_star: f64,
    opts: &SubspaceOptions,
) -> Result<KernelSeed> {
    let (plus, minus) = dichotomy::subspace_pair(sys, lambda_star, opts)?;
    let seed = kernel_from_pair(&plus.basis, &minus.basis, lambda_star)?;
    Ok(KernelSeed {
        decay_rate: plus.constants.alpha.max(0.1),
        ..seed
    })
}

/// Kernel direction from explicit subspace bases.
pub fn kernel_from_pair(
    plus: &DMatrix<f64>,
    minus: &DMatrix<f64>,
    lambda_star: f64,
) -> Result<KernelSeed> {
    let (dir, angle) = linalg::closest_principal_vector(plus, minus);
    if angle > 1e-3 {
        return Err(Error::NoIntersection {
            lambda: lambda_star,
            angle,
            tol: 1e-3,
        });
    }
    Ok(KernelSeed {
        direction: linalg::canonicalize_columns(DMatrix::from_columns(&[dir]))
            .column(0)
            .into_owned(),
        angle,
        decay_rate: 1.0,
    })
}

/// First point on a bifurcating branch: an amplitude-pinned corrector with
/// free `λ`, started from the damped kernel envelope
/// `y₀(t) = ε · v · e^{−α|t|}`.
pub fn switch_branch(
    sys: &SystemSpec,
    lambda_star: f64,
    amplitude: f64,
    opts: &ContinuationOptions,
) -> Result<HomoclinicSolution> {
    if amplitude == 0.0 {
        return Err(Error::invalid("switch amplitude must be nonzero"));
    }
    let seed = kernel_direction(sys, lambda_star, &opts.bvp.subspace)?;
    let mesh = build_mesh(sys, opts.bvp.horizon, opts.bvp.mesh_width);
    let ys: Vec<DVector<f64>> = mesh
        .iter()
        .map(|t| amplitude * (-seed.decay_rate * t.abs()).exp() * &seed.direction)
        .collect();
    let bc = boundary_conditions(
        sys,
        lambda_star,
        opts.bvp.horizon,
        &opts.bvp.subspace,
        opts.bvp.ode_tol,
    )?;
    // normalization ⟨u, y⟩ = amplitude with ⟨u, y₀⟩ = amplitude
    let y0 = stack(&ys);
    let u = &y0 * (amplitude / y0.dot(&y0));
    let normalization = Border {
        u,
        n_lambda: 0.0,
        target: amplitude,
    };
    let (ys, lambda, res, _iters) = newton_bordered(
        sys,
        lambda_star,
        &mesh,
        ys,
        &bc,
        &normalization,
        &opts.bvp,
        opts.max_corrector_iters.max(20),
    )?;
    let sol = make_solution(sys, lambda, &mesh, ys, res);
    if sol.sup_norm <= opts.bvp.triviality_floor {
        return Err(Error::TrivialCollapse {
            norm: sol.sup_norm,
            floor: opts.bvp.triviality_floor,
        });
    }
    Ok(sol)
}

/// Scalar constraint `uᵀ·stack(y) + n_lambda·λ = target` adjoined to the
/// collocation system.
struct Border {
    u: DVector<f64>,
    n_lambda: f64,
    target: f64,
}

impl Border {
    fn residual(&self, ys_stacked: &DVector<f64>, lambda: f64) -> f64 {
        self.u.dot(ys_stacked) + self.n_lambda * lambda - self.target
    }
}

/// Newton on the bordered system with free `λ`; boundary conditions are
/// frozen at the parameter they were built for. Returns the corrected mesh
/// values, parameter, final residual and iteration count.
#[allow(clippy::too_many_arguments)]
fn newton_bordered(
    sys: &SystemSpec,
    mut lambda: f64,
    mesh: &[f64],
    mut ys: Vec<DVector<f64>>,
    bc: &BoundaryConditions,
    border: &Border,
    opts: &BvpOptions,
    max_iters: usize,
) -> Result<(Vec<DVector<f64>>, f64, f64, usize)> {
    let d = sys.dim();
    for iter in 0..max_iters {
        let f = bvp_residual(sys, lambda, mesh, &ys, bc);
        let base = stack(&ys);
        let nres = border.residual(&base, lambda);
        let tol_eff = opts.newton_tol * (1.0 + sup_norm(&ys));
        if f.amax() <= tol_eff && nres.abs() <= tol_eff.max(1e-12) {
            return Ok((ys, lambda, f.amax(), iter));
        }
        let blocks = bvp_jacobian(sys, lambda, mesh, &ys);
        let f_lam = bvp_residual_dlambda(sys, lambda, mesh, &ys, bc);
        let mut rhs = DMatrix::zeros(f.nrows(), 2);
        rhs.set_column(0, &(-&f));
        rhs.set_column(1, &(-&f_lam));
        let zw = solve_abd(&bc.c_minus.transpose(), &blocks, &bc.c_plus.transpose(), &rhs)?;
        let z = zw.column(0).into_owned();
        let w = zw.column(1).into_owned();
        let denom = border.u.dot(&w) + border.n_lambda;
        if denom.abs() < 1e-300 {
            return Err(Error::SingularSystem {
                context: "bordered continuation system",
            });
        }
        let dlambda = -(nres + border.u.dot(&z)) / denom;
        let dy = &z + dlambda * &w;
        ys = unstack(&(&base + &dy), d);
        lambda += dlambda;
    }
    let f = bvp_residual(sys, lambda, mesh, &ys, bc);
    if f.amax() <= opts.newton_tol * (1.0 + sup_norm(&ys)) {
        return Ok((ys, lambda, f.amax(), max_iters));
    }
    Err(Error::NoConvergence {
        residual: f.amax(),
        iterations: max_iters,
    })
}

// ---------------------------------------------------------------------------
// pseudo-arclength continuation

/// Continues the branch through `start` in one direction by secant
/// predictor / bordered Newton corrector, terminating on an endpoint
/// event. `tangent_from` supplies a previous point for the initial secant
/// (for switched branches, the trivial pair `(0, λ*)`); without it the
/// first step is taken in the parameter direction alone.
pub fn continue_branch(
    sys: &SystemSpec,
    start: &HomoclinicSolution,
    direction: i8,
    tangent_from: Option<(&[DVector<f64>], f64)>,
    opts: &ContinuationOptions,
) -> Result<BranchRun> {
    if direction != 1 && direction != -1 {
        return Err(Error::invalid("direction must be +1 or -1"));
    }
    let d = sys.dim();
    let mesh = start.mesh.clone();
    let (lam_lo, lam_hi) = effective_window(sys, opts);

    let mut cur = stack(&start.values);
    let mut cur_lambda = start.lambda;
    // the solution part of the arclength metric is scaled relative to the
    // current solution size, so branches growing over orders of magnitude
    // advance in a bounded number of steps
    let mut weight = 1.0 / mesh_inner(&cur, &cur).max(1.0);
    // initial tangent
    let (mut tan_y, mut tan_l) = match tangent_from {
        Some((prev_ys, prev_lambda)) => {
            let prev = stack(prev_ys);
            (&cur - &prev, cur_lambda - prev_lambda)
        }
        None => (DVector::zeros(cur.nrows()), 1.0),
    };
    normalize_tangent(&mut tan_y, &mut tan_l, direction, weight);

    let mut points: Vec<HomoclinicSolution> = Vec::new();
    let mut step = opts.initial_step;
    let mut cur_norm = start.sup_norm;

    for _ in 0..opts.max_steps {
        // approach the trivial branch with geometrically shrinking steps so
        // a rejoin is resolved instead of being jumped over: one step may
        // move the sup norm by at most half its current value
        let sup_rate = tan_y.amax().max(1e-12);
        let capped = step.min(0.5 * cur_norm / sup_rate);
        let pred_lambda = cur_lambda + capped * tan_l;
        // window clamp: finish with a fixed-parameter solve on the edge
        if pred_lambda < lam_lo || pred_lambda > lam_hi {
            let edge = if pred_lambda < lam_lo { lam_lo } else { lam_hi };
            match finish_at_edge(sys, &mesh, &cur, edge, opts) {
                Ok(sol) => {
                    let lam = sol.lambda;
                    points.push(sol);
                    return Ok(BranchRun {
                        points,
                        terminal: EndpointEvent::ParamBoundary { lambda: lam },
                    });
                }
                Err(_) => {
                    return Ok(BranchRun {
                        points,
                        terminal: EndpointEvent::ParamBoundary { lambda: cur_lambda },
                    })
                }
            }
        }
        let pred = &cur + capped * &tan_y;
        let bc = match boundary_conditions(
            sys,
            pred_lambda,
            opts.bvp.horizon,
            &opts.bvp.subspace,
            opts.bvp.ode_tol,
        ) {
            Ok(bc) => bc,
            Err(Error::NoGap { .. }) => {
                // predictor sits numerically on the critical set; treat as a
                // trivial-branch rejoin if the norm is already small
                if cur_norm <= 10.0 * opts.bvp.triviality_floor {
                    return Ok(BranchRun {
                        points,
                        terminal: EndpointEvent::ReturnsToTrivial {
                            lambda_star: cur_lambda,
                        },
                    });
                }
                step *= 0.5;
                if step < opts.min_step {
                    return Err(Error::ContinuationStall {
                        lambda: cur_lambda,
                        step,
                    });
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let scale = weight / cur.nrows() as f64;
        let border = Border {
            u: &tan_y * scale,
            n_lambda: tan_l,
            target: weight * mesh_inner(&tan_y, &pred) + tan_l * pred_lambda,
        };
        let attempt = newton_bordered(
            sys,
            pred_lambda,
            &mesh,
            unstack(&pred, d),
            &bc,
            &border,
            &opts.bvp,
            opts.max_corrector_iters,
        );
        match attempt {
            Ok((ys, lambda, res, iters)) => {
                let new = stack(&ys);
                let sol = make_solution(sys, lambda, &mesh, ys, res);
                let norm = sol.sup_norm;

                if check_domain(sys, lambda, &mesh, &sol.values, opts.domain_margin).is_some() {
                    points.push(sol);
                    return Ok(BranchRun {
                        points,
                        terminal: EndpointEvent::DomainBoundary { lambda },
                    });
                }
                if norm <= opts.bvp.triviality_floor {
                    if cur_norm > 100.0 * opts.bvp.triviality_floor {
                        // fell off the branch onto the prescribed branch from
                        // a point that was nowhere near it: shrink and retry
                        step *= 0.5;
                        if step < opts.min_step {
                            return Err(Error::ContinuationStall {
                                lambda: cur_lambda,
                                step,
                            });
                        }
                        continue;
                    }
                    return Ok(BranchRun {
                        points,
                        terminal: EndpointEvent::ReturnsToTrivial { lambda_star: lambda },
                    });
                }
                if norm >= opts.norm_cap {
                    points.push(sol);
                    return Ok(BranchRun {
                        points,
                        terminal: EndpointEvent::NormCap { lambda },
                    });
                }
                if lambda < lam_lo - 1e-12 || lambda > lam_hi + 1e-12 {
                    let edge = if lambda < lam_lo { lam_lo } else { lam_hi };
                    if let Ok(edge_sol) = finish_at_edge(sys, &mesh, &new, edge, opts) {
                        let lam = edge_sol.lambda;
                        points.push(edge_sol);
                        return Ok(BranchRun {
                            points,
                            terminal: EndpointEvent::ParamBoundary { lambda: lam },
                        });
                    }
                    points.push(sol);
                    return Ok(BranchRun {
                        points,
                        terminal: EndpointEvent::ParamBoundary { lambda },
                    });
                }

                // accept
                tan_y = &new - &cur;
                tan_l = lambda - cur_lambda;
                cur = new;
                cur_lambda = lambda;
                cur_norm = norm;
                weight = 1.0 / mesh_inner(&cur, &cur).max(1.0);
                normalize_tangent(&mut tan_y, &mut tan_l, 1, weight);
                points.push(sol);
                if iters <= 3 {
                    step = (step * 1.4).min(opts.max_step);
                } else if iters >= opts.max_corrector_iters - 2 {
                    step *= 0.6;
                }
            }
            Err(Error::NoConvergence { .. }) | Err(Error::SingularSystem { .. }) => {
                step *= 0.5;
                if step < opts.min_step {
                    return Err(Error::ContinuationStall {
                        lambda: cur_lambda,
                        step,
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(BranchRun {
        points,
        terminal: EndpointEvent::StepLimit { lambda: cur_lambda },
    })
}

fn effective_window(sys: &SystemSpec, opts: &ContinuationOptions) -> (f64, f64) {
    let (lo, hi) = sys.param_interval();
    let lo = if lo.is_finite() {
        lo + opts.boundary_margin
    } else {
        lo
    };
    let hi = if hi.is_finite() {
        hi - opts.boundary_margin
    } else {
        hi
    };
    (opts.lambda_window.0.max(lo), opts.lambda_window.1.min(hi))
}

fn normalize_tangent(tan_y: &mut DVector<f64>, tan_l: &mut f64, direction: i8, weight: f64) {
    let norm = (weight * mesh_inner(tan_y, tan_y) + *tan_l * *tan_l).sqrt();
    if norm > 0.0 {
        *tan_y /= norm;
        *tan_l /= norm;
    } else {
        *tan_l = 1.0;
    }
    if direction < 0 {
        *tan_y = -&*tan_y;
        *tan_l = -*tan_l;
    }
}

/// Fixed-parameter solve at a window edge, started from the current point.
fn finish_at_edge(
    sys: &SystemSpec,
    mesh: &[f64],
    cur: &DVector<f64>,
    edge: f64,
    opts: &ContinuationOptions,
) -> Result<HomoclinicSolution> {
    let d = sys.dim();
    let ys = unstack(cur, d);
    let bc = boundary_conditions(
        sys,
        edge,
        opts.bvp.horizon,
        &opts.bvp.subspace,
        opts.bvp.ode_tol,
    )?;
    let ys = newton_fixed_lambda(sys, edge, mesh, ys, &bc, &opts.bvp)?;
    let res = bvp_residual(sys, edge, mesh, &ys, &bc).amax();
    let sol = make_solution(sys, edge, mesh, ys, res);
    if sol.sup_norm <= opts.bvp.triviality_floor {
        return Err(Error::TrivialCollapse {
            norm: sol.sup_norm,
            floor: opts.bvp.triviality_floor,
        });
    }
    Ok(sol)
}

/// Switches onto the branch bifurcating at `λ*` with the given signed
/// amplitude and continues in both directions; the two runs are assembled
/// into one continuum ordered along the branch.
pub fn continue_from_critical(
    sys: &SystemSpec,
    lambda_star: f64,
    amplitude: f64,
    opts: &ContinuationOptions,
) -> Result<Continuum> {
    let start = switch_branch(sys, lambda_star, amplitude, opts)?;
    let zero_mesh: Vec<DVector<f64>> =
        start.mesh.iter().map(|_| DVector::zeros(sys.dim())).collect();
    let backward = continue_branch(sys, &start, -1, Some((&zero_mesh, lambda_star)), opts)?;
    let forward = continue_branch(sys, &start, 1, Some((&zero_mesh, lambda_star)), opts)?;
    let mut solutions: Vec<HomoclinicSolution> = backward.points.into_iter().rev().collect();
    solutions.push(start);
    solutions.extend(forward.points);
    Ok(Continuum {
        solutions,
        start_event: backward.terminal,
        end_event: forward.terminal,
        seed_lambda_star: Some(lambda_star),
        interior_returns: Vec::new(),
    })
}

/// Continues in both directions from an interior starting solution.
pub fn continue_two_sided(
    sys: &SystemSpec,
    start: &HomoclinicSolution,
    opts: &ContinuationOptions,
) -> Result<Continuum> {
    let backward = continue_branch(sys, start, -1, None, opts)?;
    let forward = continue_branch(sys, start, 1, None, opts)?;
    let mut solutions: Vec<HomoclinicSolution> = backward.points.into_iter().rev().collect();
    solutions.push(start.clone());
    solutions.extend(forward.points);
    Ok(Continuum {
        solutions,
        start_event: backward.terminal,
        end_event: forward.terminal,
        seed_lambda_star: None,
        interior_returns: Vec::new(),
    })
}

/// Parameter value an endpoint event carries.
pub fn event_lambda(ev: &EndpointEvent) -> f64 {
    match ev {
        EndpointEvent::ReturnsToTrivial { lambda_star } => *lambda_star,
        EndpointEvent::ParamBoundary { lambda }
        | EndpointEvent::DomainBoundary { lambda }
        | EndpointEvent::NormCap { lambda }
        | EndpointEvent::StepLimit { lambda } => *lambda,
    }
}

/// Merges two continua that share a seed (e.g. the two switch amplitudes
/// `±ε` of one bifurcation point). For each piece, the end closer to the
/// seed is the junction; junction touches of the trivial branch become
/// interior returns and the far ends stay as the merged endpoint events.
pub fn merge_at_seed(a: Continuum, b: Continuum) -> Continuum {
    let star = a
        .seed_lambda_star
        .or(b.seed_lambda_star)
        .unwrap_or_else(|| 0.5 * (event_lambda(&a.end_event) + event_lambda(&b.start_event)));
    // split a continuum into its outer event, its junction-side return (if
    // any), and its solutions ordered so the junction end comes last
    let split = |c: Continuum| -> (EndpointEvent, Option<f64>, Vec<HomoclinicSolution>) {
        let d_start = (event_lambda(&c.start_event) - star).abs();
        let d_end = (event_lambda(&c.end_event) - star).abs();
        let (outer, inner, mut sols) = if d_start <= d_end {
            // junction at the start: flip so the outer end leads
            let mut s = c.solutions;
            s.reverse();
            (c.end_event, c.start_event, s)
        } else {
            (c.start_event, c.end_event, c.solutions)
        };
        let inner_return = match inner {
            EndpointEvent::ReturnsToTrivial { lambda_star } => Some(lambda_star),
            _ => None,
        };
        sols.shrink_to_fit();
        (outer, inner_return, sols)
    };
    let mut interior = a.interior_returns.clone();
    interior.extend(b.interior_returns.iter().copied());
    let seed = a.seed_lambda_star.or(b.seed_lambda_star);
    let (outer_a, inner_a, sols_a) = split(a);
    let (outer_b, inner_b, mut sols_b) = split(b);
    interior.extend(inner_a);
    interior.extend(inner_b);
    // a runs outer → junction, b must run junction → outer
    sols_b.reverse();
    let mut solutions = sols_a;
    solutions.extend(sols_b);
    Continuum {
        solutions,
        start_event: outer_a,
        end_event: outer_b,
        seed_lambda_star: seed,
        interior_returns: interior,
    }
}

// ---------------------------------------------------------------------------
// classification

/// Classification of a continuum against a cover of the critical set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classification: Classification,
    /// Gap indices of the cover touched by trivial-branch contacts.
    pub touched: Vec<usize>,
    /// `Σ π_J` over the touched indices.
    pub index_sum: i64,
    /// False when a bounded (returns) continuum carries a nonzero index,
    /// which contradicts the vanishing-index theorem for bounded continua.
    pub theorem_consistent: bool,
    /// Return parameters that matched no cover gap within the tolerance.
    pub unmatched_returns: Vec<f64>,
}

/// Maps endpoint events to the global alternatives, collects the touched
/// cover indices from trivial-branch contacts, and evaluates the
/// bifurcation index. A nonzero index upgrades parameter-boundary runs to
/// a certified `Unbounded`.
pub fn classify_continuum(
    c: &Continuum,
    cover: &JCover,
    match_tol: f64,
) -> Result<ClassificationReport> {
    let mut touched: Vec<usize> = Vec::new();
    let mut unmatched = Vec::new();
    let mut contacts = c.return_parameters();
    if let Some(star) = c.seed_lambda_star {
        contacts.push(star);
    }
    for lam in contacts {
        match cover.locate_gap(lam, match_tol) {
            Some(i) => touched.push(i),
            None => unmatched.push(lam),
        }
    }
    touched.sort_unstable();
    touched.dedup();
    let index_sum = cover::bifurcation_index(cover, &touched)?;

    let events = [c.start_event, c.end_event];
    let has = |pred: fn(&EndpointEvent) -> bool| events.iter().any(pred);
    let classification = if has(|e| matches!(e, EndpointEvent::NormCap { .. })) {
        Classification::Unbounded
    } else if events
        .iter()
        .all(|e| matches!(e, EndpointEvent::ReturnsToTrivial { .. }))
    {
        Classification::Returns
    } else if has(|e| matches!(e, EndpointEvent::DomainBoundary { .. })) {
        Classification::DomainBoundary
    } else if has(|e| matches!(e, EndpointEvent::StepLimit { .. })) {
        Classification::Inconclusive
    } else if index_sum != 0 {
        // parameter-boundary ends with a nonzero oriented sign-change sum:
        // the continuum cannot be bounded
        Classification::Unbounded
    } else {
        Classification::Inconclusive
    };
    let theorem_consistent = !(classification == Classification::Returns && index_sum != 0);
    Ok(ClassificationReport {
        classification,
        touched,
        index_sum,
        theorem_consistent,
        unmatched_returns: unmatched,
    })
}
