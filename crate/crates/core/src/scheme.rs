//! Time stepping for `G[u]_t − Δu = h` with Robin data: initial audit,
//! fictitious backward step, sup bound, main loop and estimate monitors.

use serde::Serialize;

use crate::density::DensityModel;
use crate::elliptic::{solve_linear_robin, NewtonSettings, RobinOperator, StepProblem};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::par;
use crate::play::MemoryCurve;
use crate::preisach::PreisachOperator;

/// One memory curve per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct HysteresisField {
    pub curves: Vec<MemoryCurve>,
}

impl HysteresisField {
    pub fn new(curves: Vec<MemoryCurve>) -> Self {
        Self { curves }
    }

    pub fn virgin(n: usize) -> Self {
        Self::new(vec![MemoryCurve::virgin(); n])
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn inputs(&self) -> Field {
        self.curves.iter().map(MemoryCurve::input).collect()
    }

    pub fn max_support(&self) -> f64 {
        self.curves.iter().map(MemoryCurve::support_radius).fold(0.0, f64::max)
    }

    pub fn outputs(&self, op: &PreisachOperator) -> Field {
        par::map_indices(self.len(), |k| op.output(&self.curves[k]))
    }

    pub fn energies(&self, op: &PreisachOperator) -> Field {
        par::map_indices(self.len(), |k| op.energy(&self.curves[k]))
    }

    /// Nodewise play update.
    pub fn update(&self, u: &[f64]) -> Result<Self> {
        if u.len() != self.len() {
            return Err(Error::Grid("input field does not match memory field".into()));
        }
        let curves = par::try_map_indices(self.len(), |k| -> Result<MemoryCurve> { Ok(self.curves[k].play_update(u[k])?.0) })?;
        Ok(Self::new(curves))
    }
}

/// `τ₀ = ρ₀(3Ū) / (2L²)`.
pub fn compute_tau0(density: &DensityModel, l: f64, ubar: f64) -> f64 {
    density.rho0(3.0 * ubar) / (2.0 * l * l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `λ(0) ≠ u0`.
    InitialValue,
    /// No slope `−sign(T)` at `r = 0`.
    Slope,
    /// Straight part shorter than `√|T| / L`.
    Depth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub node: usize,
    pub x: f64,
    pub y: f64,
    pub kind: ViolationKind,
    pub t: f64,
    pub r_min: f64,
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    /// `T = Δ_h u0 + h0`.
    pub t: Field,
    pub r_min: Field,
    /// Length of the initial straight segment with slope `−sign(T)`.
    pub r0: Field,
    pub sign: Vec<i8>,
    pub violations: Vec<Violation>,
    /// Smallest `L` for which the depth condition holds at every node.
    pub minimal_l: f64,
    /// `max |−∂_n u0 − b(u0 − u*)|` on the boundary (one-sided differences).
    pub c2a_residual: f64,
    pub l: f64,
}

impl CompatibilityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `Δ_h u0 + h0`.
pub fn forcing_at_start(op: &RobinOperator, u0: &[f64], h0: &[f64], ustar0: &[f64]) -> Field {
    op.laplacian(u0, ustar0)
        .iter()
        .zip(h0)
        .map(|(a, b)| a + b)
        .collect()
}

fn straight_depth(curve: &MemoryCurve, sign: f64) -> f64 {
    let c = curve.corners();
    let mut depth = 0.0;
    for w in c.windows(2) {
        let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        if (slope + sign).abs() > 1e-12 {
            break;
        }
        depth = w[1].0;
    }
    depth
}

/// Per-node audit of the initial data.
#[allow(clippy::too_many_arguments)]
pub fn check_compatibility(
    grid: &Grid,
    op: &RobinOperator,
    u0: &[f64],
    memory: &HysteresisField,
    h0: &[f64],
    ustar0: &[f64],
    l: f64,
    t_zero_tol: f64,
) -> CompatibilityReport {
    let n = grid.len();
    let t = forcing_at_start(op, u0, h0, ustar0);
    let mut report = CompatibilityReport {
        t: t.clone(),
        r_min: vec![0.0; n],
        r0: vec![0.0; n],
        sign: vec![0; n],
        violations: Vec::new(),
        minimal_l: 0.0,
        c2a_residual: c2a_residual(grid, u0, ustar0),
        l,
    };
    for k in 0..n {
        let [x, y] = grid.coords(k);
        let curve = &memory.curves[k];
        let mut flag = |kind, r_min, r0| {
            report.violations.push(Violation {
                node: k,
                x,
                y,
                kind,
                t: t[k],
                r_min,
                r0,
            })
        };
        if (curve.input() - u0[k]).abs() > 1e-12 * (1.0 + u0[k].abs()) {
            flag(ViolationKind::InitialValue, 0.0, 0.0);
            continue;
        }
        if t[k].abs() <= t_zero_tol {
            continue;
        }
        let s = t[k].signum();
        let r_min = t[k].abs().sqrt() / l;
        let r0 = straight_depth(curve, s);
        report.sign[k] = s as i8;
        report.r_min[k] = r_min;
        report.r0[k] = r0;
        if r0 == 0.0 {
            report.minimal_l = f64::INFINITY;
            flag(ViolationKind::Slope, r_min, r0);
        } else {
            report.minimal_l = report.minimal_l.max(t[k].abs().sqrt() / r0);
            if r0 < r_min * (1.0 - 1e-12) {
                flag(ViolationKind::Depth, r_min, r0);
            }
        }
    }
    report
}

fn c2a_residual(grid: &Grid, u: &[f64], ustar: &[f64]) -> f64 {
    let [nx, ny] = grid.nodes();
    let [hx, hy] = grid.spacing();
    let b = grid.b();
    let mut worst: f64 = 0.0;
    // outward derivative from three nodes going inwards
    let mut edge = |k0: usize, k1: usize, k2: usize, h: f64| {
        let dn = (3.0 * u[k0] - 4.0 * u[k1] + u[k2]) / (2.0 * h);
        worst = worst.max((-dn - b[k0] * (u[k0] - ustar[k0])).abs());
    };
    for j in 0..ny {
        let row = |i| grid.index(i, j);
        edge(row(0), row(1), row(2), hx);
        edge(row(nx - 1), row(nx - 2), row(nx - 3), hx);
    }
    if grid.dim() == 2 {
        for i in 0..nx {
            let col = |j| grid.index(i, j);
            edge(col(0), col(1), col(2), hy);
            edge(col(ny - 1), col(ny - 2), col(ny - 3), hy);
        }
    }
    worst
}

/// `B(a) = G[λ] − G[λ₋₁(a)]` for the deformation of the straight part of
/// length `r0` with direction `sign`.
pub fn strip_increment(op: &PreisachOperator, u0: f64, r0: f64, a: f64, sign: f64) -> f64 {
    let s = sign;
    let first = op.strip_integral(0.0, r0 - a, (u0, -s), (u0 - 2.0 * s * a, -s));
    let second = op.strip_integral(r0 - a, r0, (u0, -s), (u0 - 2.0 * s * r0, s));
    first + second
}

#[derive(Debug, Clone)]
pub struct BackwardStep {
    pub u_minus1: Field,
    pub memory_minus1: HysteresisField,
    pub g_minus1: Field,
    pub a: Field,
    /// Nodes where `play_update(λ₋₁, u0)` differs from `λ` in any corner.
    pub round_trip_failures: Vec<usize>,
    /// `max |u0 − u₋₁| / τ` and the bound `2L²Λ/ρ*`.
    pub max_increment_rate: f64,
    pub increment_bound: f64,
    pub max_b_residual: f64,
}

/// Fictitious step `(u₋₁, λ₋₁)` with `G[u]_0 − G[u]_{−1} = τ T` nodewise.
#[allow(clippy::too_many_arguments)]
pub fn backward_step(
    op: &PreisachOperator,
    u0: &[f64],
    memory: &HysteresisField,
    report: &CompatibilityReport,
    tau: f64,
    l: f64,
    ubar: f64,
    b_tol: f64,
) -> Result<BackwardStep> {
    let tau0 = compute_tau0(&op.density, l, ubar);
    if !(tau < tau0) {
        return Err(Error::TimeStepTooLarge { tau, tau0 });
    }
    let n = u0.len();
    let nodes = par::try_map_indices(n, |k| -> Result<(f64, MemoryCurve, f64)> {
        let curve = &memory.curves[k];
        let s = f64::from(report.sign[k]);
        if s == 0.0 {
            return Ok((0.0, curve.clone(), 0.0));
        }
        let r0 = report.r0[k];
        let target = tau * report.t[k].abs();
        let b = |a: f64| s * strip_increment(op, u0[k], r0, a, s);
        let (mut lo, mut hi) = (0.0, 0.5 * r0);
        let b_hi = b(hi);
        if b_hi < target {
            return Err(Error::Bracket(format!(
                "node {k}: B(r0/2) = {b_hi:e} below tau*|T| = {target:e}"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if b(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = if (b(lo) - target).abs() <= (b(hi) - target).abs() { lo } else { hi };
        let resid = (b(a) - target).abs();
        if resid > b_tol * (1.0 + target) {
            return Err(Error::Bracket(format!("node {k}: |B(a) − τ|T|| = {resid:e}")));
        }
        Ok((a, curve.backward_deform(r0, a, s)?, resid))
    })?;
    let mut out = BackwardStep {
        u_minus1: vec![0.0; n],
        memory_minus1: HysteresisField::new(Vec::with_capacity(n)),
        g_minus1: vec![0.0; n],
        a: vec![0.0; n],
        round_trip_failures: Vec::new(),
        max_increment_rate: 0.0,
        increment_bound: 2.0 * l * l * memory.max_support() / op.density.rho0(3.0 * ubar),
        max_b_residual: 0.0,
    };
    for (k, (a, curve, resid)) in nodes.into_iter().enumerate() {
        out.a[k] = a;
        out.u_minus1[k] = curve.input();
        out.max_increment_rate = out.max_increment_rate.max((u0[k] - curve.input()).abs() / tau);
        out.max_b_residual = out.max_b_residual.max(resid);
        if curve.play_update(u0[k])?.0.corners() != memory.curves[k].corners() {
            out.round_trip_failures.push(k);
        }
        out.memory_minus1.curves.push(curve);
    }
    out.g_minus1 = out.memory_minus1.outputs(op);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Supersolution {
    pub ubar: f64,
    pub u_star_shift: f64,
    pub v: Field,
}

/// `v` solves the linear Robin problem with `h̃ = (1+ε) sup|h|`, `U* =
/// max(sup|u*|, Λ − min v) + ε` and `Ū = sup(v + U*)`.
pub fn supersolution_bound(
    grid: &Grid,
    op: &RobinOperator,
    h_sup: f64,
    ustar_sup: f64,
    lambda: f64,
    eps: f64,
) -> Result<Supersolution> {
    let n = grid.len();
    let htilde = vec![(1.0 + eps) * h_sup; n];
    let v = solve_linear_robin(grid, op, &htilde, &vec![0.0; n])?;
    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let u_star_shift = ustar_sup.max(lambda - vmin) + eps;
    Ok(Supersolution {
        ubar: vmax + u_star_shift,
        u_star_shift,
        v,
    })
}

/// Space–time data `f(x, y, t)`.
pub type SourceFn<'a> = &'a dyn Fn(f64, f64, f64) -> f64;

/// Discrete problem: grid, operator, density and data.
pub struct Problem<'a> {
    pub grid: &'a Grid,
    pub op: &'a RobinOperator,
    pub preisach: &'a PreisachOperator,
    pub tau: f64,
    pub steps: usize,
    pub h: SourceFn<'a>,
    pub ustar: SourceFn<'a>,
    pub newton: NewtonSettings,
}

impl Problem<'_> {
    pub fn sample(&self, f: SourceFn<'_>, t: f64) -> Field {
        self.grid.sample(|x, y| f(x, y, t))
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.tau
    }

    /// `(sup |h|, sup |u*|)` over all nodes and `t_i`, `i = 0..n`.
    pub fn data_sup(&self) -> (f64, f64) {
        let mut hs: f64 = 0.0;
        let mut us: f64 = 0.0;
        for i in 0..=self.steps {
            let t = self.time(i);
            hs = self.sample(self.h, t).iter().fold(hs, |m, v| m.max(v.abs()));
            us = self
                .sample(self.ustar, t)
                .iter()
                .zip(self.grid.boundary_weights())
                .filter(|(_, w)| **w > 0.0)
                .fold(us, |m, (v, _)| m.max(v.abs()));
        }
        (hs, us)
    }
}

/// Stored fields `i = 0..n`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tau: f64,
    pub u: Vec<Field>,
    pub g: Vec<Field>,
    pub energy: Vec<Field>,
    pub h: Vec<Field>,
    pub ustar: Vec<Field>,
    pub u_minus1: Option<Field>,
    pub newton_iterations: Vec<usize>,
    pub newton_residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub memory: HysteresisField,
}

/// Main loop: for `i = 1..n` sample the data at `t_i`, solve the step and
/// update the memory nodewise.
pub fn run(problem: &Problem<'_>, memory0: &HysteresisField, u_minus1: Option<Field>) -> Result<RunResult> {
    let grid = problem.grid;
    if memory0.len() != grid.len() {
        return Err(Error::Grid("memory field does not match grid".into()));
    }
    let pre = problem.preisach;
    let mut memory = memory0.clone();
    let u0 = memory.inputs();
    let mut traj = Trajectory {
        tau: problem.tau,
        u: vec![u0.clone()],
        g: vec![memory.outputs(pre)],
        energy: vec![memory.energies(pre)],
        h: vec![problem.sample(problem.h, 0.0)],
        ustar: vec![problem.sample(problem.ustar, 0.0)],
        u_minus1,
        newton_iterations: Vec::with_capacity(problem.steps),
        newton_residuals: Vec::with_capacity(problem.steps),
    };
    let mut guess = u0;
    for i in 1..=problem.steps {
        let t = problem.time(i);
        let h = problem.sample(problem.h, t);
        let ustar = problem.sample(problem.ustar, t);
        let g_prev = traj.g.last().expect("initial output");
        let step = StepProblem {
            grid,
            op: problem.op,
            preisach: pre,
            memory: &memory.curves,
            g_prev,
            tau: problem.tau,
            h: &h,
            ustar: &ustar,
        }
        .solve(&guess, problem.newton)?;
        memory = memory.update(&step.u)?;
        traj.energy.push(memory.energies(pre));
        traj.g.push(step.g);
        traj.newton_iterations.push(step.iterations);
        traj.newton_residuals.push(step.residual);
        guess = step.u.clone();
        traj.u.push(step.u);
        traj.h.push(h);
        traj.ustar.push(ustar);
    }
    Ok(RunResult { trajectory: traj, memory })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorRecord {
    pub step: usize,
    pub t: f64,
    /// `τ Σ_{j≤i} (∫|∇u_j|² + ∫_∂Ω b u_j²)`.
    pub energy_sum: f64,
    /// `(1/τ) Σ_{j≤i} ∫(G_j − G_{j−1})(u_j − u_{j−1})`.
    pub dissipation_sum: f64,
    /// `max_{j≤i} (∫|∇u_j|² + ∫_∂Ω b u_j²)`.
    pub grad_max: f64,
    /// `τ Σ_{j≤i} |u_j|²_{2,2,b}`.
    pub h2_sum: f64,
    /// `τ^{1−q} Σ ∫|u_{j+1} − u_j|^q`, one entry per `q`.
    pub increment_sums: Vec<f64>,
    pub lyapunov: f64,
    pub sup_u: f64,
    pub sup_bound: f64,
    /// Right minus left side of the step inequality obtained by testing with
    /// `u_i − u_{i−1}`; nonnegative up to solver tolerance.
    pub balance_slack: f64,
    /// `∫((G_i − G_{i−1}) u_i − (E_i − E_{i−1}))`; nonnegative.
    pub energy_slack: f64,
}

/// Per-step estimate monitors from a stored trajectory.
pub fn compute_monitors(
    grid: &Grid,
    op: &RobinOperator,
    traj: &Trajectory,
    q_list: &[f64],
    ubar: f64,
) -> Result<Vec<MonitorRecord>> {
    let tau = traj.tau;
    let m = grid.mass();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let wdot = |a: &[f64], b: &[f64]| grid.integrate(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>());
    let lyap = |i: usize| {
        let u = &traj.u[i];
        let load = op.load(&traj.ustar[i]);
        0.5 * op.form(u, u) - wdot(&traj.h[i], u) - dot(&load, u)
    };
    let incr = |a: &[f64], b: &[f64], q: f64| {
        tau.powf(1.0 - q)
            * a.iter()
                .zip(b)
                .zip(m)
                .map(|((x, y), w)| w * (x - y).abs().powf(q))
                .sum::<f64>()
    };
    let mut inc: Vec<f64> = match &traj.u_minus1 {
        Some(um) => q_list.iter().map(|&q| incr(&traj.u[0], um, q)).collect(),
        None => vec![0.0; q_list.len()],
    };
    let mut records = Vec::with_capacity(traj.u.len().saturating_sub(1));
    let (mut es0, mut es1, mut gmax, mut es2) = (0.0, 0.0, 0.0f64, 0.0);
    let mut v_prev = lyap(0);
    for i in 1..traj.u.len() {
        let (u, up) = (&traj.u[i], &traj.u[i - 1]);
        let grad = op.form(u, u);
        es0 += tau * grad;
        let du: Vec<f64> = u.iter().zip(up).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = traj.g[i].iter().zip(&traj.g[i - 1]).map(|(a, b)| a - b).collect();
        let diss = wdot(&dg, &du) / tau;
        es1 += diss;
        gmax = gmax.max(grad);
        let lap = op.laplacian(u, &traj.ustar[i]);
        let bu2 = grid.boundary_integrate_b(&u.iter().map(|x| x * x).collect::<Vec<_>>());
        es2 += tau * (wdot(&lap, &lap) + bu2);
        for (s, &q) in inc.iter_mut().zip(q_list) {
            *s += incr(u, up, q);
        }
        let v = lyap(i);
        let dh: Vec<f64> = traj.h[i].iter().zip(&traj.h[i - 1]).map(|(a, b)| a - b).collect();
        let dus: Vec<f64> = traj.ustar[i].iter().zip(&traj.ustar[i - 1]).map(|(a, b)| a - b).collect();
        let rhs = -(wdot(&dh, up) + dot(&op.load(&dus), up));
        let balance_slack = rhs - (diss + v - v_prev);
        let de: Vec<f64> = traj.energy[i].iter().zip(&traj.energy[i - 1]).map(|(a, b)| a - b).collect();
        let energy_slack = wdot(&dg, u) - grid.integrate(&de);
        v_prev = v;
        let rec = MonitorRecord {
            step: i,
            t: i as f64 * tau,
            energy_sum: es0,
            dissipation_sum: es1,
            grad_max: gmax,
            h2_sum: es2,
            increment_sums: inc.clone(),
            lyapunov: v,
            sup_u: u.iter().fold(0.0, |a: f64, b| a.max(b.abs())),
            sup_bound: ubar,
            balance_slack,
            energy_slack,
        };
        let finite = [
            rec.energy_sum,
            rec.dissipation_sum,
            rec.grad_max,
            rec.h2_sum,
            rec.lyapunov,
            rec.sup_u,
            rec.balance_slack,
            rec.energy_slack,
        ]
        .iter()
        .chain(&rec.increment_sums)
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Monitor(format!("step {i}")));
        }
        records.push(rec);
    }
    Ok(records)
}

/// Piecewise linear (`pl`) and piecewise constant (`pco`) interpolants of a
/// node history at time `t`.
pub fn interpolants(tau: f64, values: &[f64], t: f64) -> (f64, f64) {
    let n = values.len() - 1;
    if t >= n as f64 * tau {
        return (values[n], values[n]);
    }
    let s = (t / tau).max(0.0);
    let i = (s.floor() as usize).min(n - 1);
    let frac = s - i as f64;
    (values[i] + frac * (values[i + 1] - values[i]), values[i])
}
