//! Config-level pipelines: run, refine, check, loops and their output files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{DensitySpec, MemorySpec, RunConfig, Source};
use crate::convexify::{ConvexityReport, Convexifier, GBounds, OdeResidual};
use crate::elliptic::{AssemblyReport, NewtonSettings, RobinOperator};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::io::{fmt_f64, write_csv, write_json};
use crate::play::MemoryCurve;
use crate::preisach::PreisachOperator;
use crate::scheme::{
    backward_step, check_compatibility, compute_monitors, compute_tau0, interpolants, run, supersolution_bound,
    CompatibilityReport, HysteresisField, MonitorRecord, Problem, Supersolution, Trajectory,
};

/// Everything derived from a config before time stepping.
pub struct Prepared {
    pub cfg: RunConfig,
    pub grid: Grid,
    pub op: RobinOperator,
    pub preisach: PreisachOperator,
    pub h: Source,
    pub ustar: Source,
    pub u0: Field,
    pub memory: HysteresisField,
    pub compat: CompatibilityReport,
    pub support: f64,
    pub bound: Supersolution,
    pub tau0: f64,
}

impl Prepared {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let mut cfg = cfg.clone();
        cfg.normalize()?;
        let grid = cfg.build_grid()?;
        let op = RobinOperator::assemble(&grid)?;
        let preisach = PreisachOperator::new(cfg.density.build()?);
        let h = cfg.sources.h.compile(&grid)?;
        let ustar = cfg.sources.ustar.compile(&grid)?;
        let u0_src = cfg.initial.u0.compile(&grid)?;
        let u0 = grid.sample(|x, y| u0_src.eval(x, y, 0.0));
        let h0 = grid.sample(|x, y| h.eval(x, y, 0.0));
        let ustar0 = grid.sample(|x, y| ustar.eval(x, y, 0.0));
        let support = cfg.support();
        let t0 = crate::scheme::forcing_at_start(&op, &u0, &h0, &ustar0);
        let curves = match cfg.initial.memory {
            MemorySpec::Virgin => u0.iter().map(|&u| MemoryCurve::saturated(u)).collect(),
            MemorySpec::Turning => {
                let r0 = cfg.initial.r0.as_ref().expect("checked in normalize").compile(&grid)?;
                (0..grid.len())
                    .map(|k| {
                        let [x, y] = grid.coords(k);
                        let s = if t0[k] < 0.0 { -1.0 } else { 1.0 };
                        MemoryCurve::turning(u0[k], r0.eval(x, y, 0.0), s, support)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let memory = HysteresisField::new(curves);
        let l = cfg.initial.l;
        let compat = check_compatibility(&grid, &op, &u0, &memory, &h0, &ustar0, l, cfg.solver.t_zero_tol);
        let (h_sup, ustar_sup) = {
            let hf = |x: f64, y: f64, t: f64| h.eval(x, y, t);
            let uf = |x: f64, y: f64, t: f64| ustar.eval(x, y, t);
            Problem {
                grid: &grid,
                op: &op,
                preisach: &preisach,
                tau: cfg.tau(),
                steps: cfg.steps(),
                h: &hf,
                ustar: &uf,
                newton: NewtonSettings::default(),
            }
            .data_sup()
        };
        let bound = supersolution_bound(&grid, &op, h_sup, ustar_sup, memory.max_support(), cfg.solver.epsilon)?;
        let tau0 = compute_tau0(&preisach.density, l, bound.ubar);
        Ok(Self {
            cfg,
            grid,
            op,
            preisach,
            h,
            ustar,
            u0,
            memory,
            compat,
            support,
            bound,
            tau0,
        })
    }

    pub fn newton(&self) -> NewtonSettings {
        NewtonSettings {
            tol: self.cfg.solver.newton_tol,
            max_iter: self.cfg.solver.newton_max_iter,
        }
    }

    pub fn incompatibility(&self) -> Option<Error> {
        let v = self.compat.violations.first()?;
        Some(Error::Incompatible {
            count: self.compat.violations.len(),
            first: format!("node {} at ({}, {}): {:?}", v.node, v.x, v.y, v.kind),
        })
    }

    pub fn probe_nodes(&self) -> Vec<usize> {
        if self.cfg.output.probes.is_empty() {
            let ext = self.grid.extent();
            vec![self.grid.nearest(&[0.5 * ext[0], 0.5 * ext[1]])]
        } else {
            self.cfg.output.probes.iter().map(|p| self.grid.nearest(p)).collect()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BackwardSummary {
    pub max_a: f64,
    pub max_increment_rate: f64,
    pub increment_bound: f64,
    pub round_trip_failures: usize,
    pub max_b_residual: f64,
}

/// Monitor records as per-step arrays.
#[derive(Debug, Clone, Serialize, Default)]
pub struct MonitorArrays {
    pub t: Vec<f64>,
    pub energy_sum: Vec<f64>,
    pub dissipation_sum: Vec<f64>,
    pub grad_max: Vec<f64>,
    pub h2_sum: Vec<f64>,
    /// One array per exponent `q`.
    pub increment_sums: Vec<Vec<f64>>,
    pub lyapunov: Vec<f64>,
    pub sup_u: Vec<f64>,
    pub sup_bound: Vec<f64>,
    pub balance_slack: Vec<f64>,
    pub energy_slack: Vec<f64>,
}

impl MonitorArrays {
    pub fn from_records(records: &[MonitorRecord], nq: usize) -> Self {
        let mut a = Self {
            increment_sums: vec![Vec::with_capacity(records.len()); nq],
            ..Self::default()
        };
        for r in records {
            a.t.push(r.t);
            a.energy_sum.push(r.energy_sum);
            a.dissipation_sum.push(r.dissipation_sum);
            a.grad_max.push(r.grad_max);
            a.h2_sum.push(r.h2_sum);
            for (dst, v) in a.increment_sums.iter_mut().zip(&r.increment_sums) {
                dst.push(*v);
            }
            a.lyapunov.push(r.lyapunov);
            a.sup_u.push(r.sup_u);
            a.sup_bound.push(r.sup_bound);
            a.balance_slack.push(r.balance_slack);
            a.energy_slack.push(r.energy_slack);
        }
        a
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub tau: f64,
    pub tau0: f64,
    #[serde(rename = "Ubar")]
    pub ubar: f64,
    pub t_end: f64,
    pub steps: usize,
    pub nodes: usize,
    pub dim: usize,
    pub l: f64,
    pub minimal_l: f64,
    pub support: f64,
    pub backward_step: Option<BackwardSummary>,
    pub q: Vec<f64>,
    pub newton_iterations: Vec<usize>,
    pub newton_residuals: Vec<f64>,
    pub sup_u_max: f64,
    pub max_principle_ok: bool,
    pub monitors: MonitorArrays,
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub memory: HysteresisField,
    pub monitors: Vec<MonitorRecord>,
    pub prepared: Prepared,
}

/// Audit, optional backward step, time loop and monitors. Fails with
/// [`Error::Incompatible`] when the audit reports violations.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    execute_prepared(Prepared::new(cfg)?)
}

pub fn execute_prepared(p: Prepared) -> Result<RunOutput> {
    if let Some(e) = p.incompatibility() {
        return Err(e);
    }
    let tau = p.cfg.tau();
    let l = p.cfg.initial.l;
    let (u_minus1, backward) = if p.cfg.initial.backward_step {
        let bs = backward_step(
            &p.preisach,
            &p.u0,
            &p.memory,
            &p.compat,
            tau,
            l,
            p.bound.ubar,
            p.cfg.solver.bisection_tol,
        )?;
        let summary = BackwardSummary {
            max_a: bs.a.iter().copied().fold(0.0, f64::max),
            max_increment_rate: bs.max_increment_rate,
            increment_bound: bs.increment_bound,
            round_trip_failures: bs.round_trip_failures.len(),
            max_b_residual: bs.max_b_residual,
        };
        (Some(bs.u_minus1), Some(summary))
    } else {
        (None, None)
    };
    let hf = |x: f64, y: f64, t: f64| p.h.eval(x, y, t);
    let uf = |x: f64, y: f64, t: f64| p.ustar.eval(x, y, t);
    let problem = Problem {
        grid: &p.grid,
        op: &p.op,
        preisach: &p.preisach,
        tau,
        steps: p.cfg.steps(),
        h: &hf,
        ustar: &uf,
        newton: p.newton(),
    };
    let result = run(&problem, &p.memory, u_minus1)?;
    let q = p.cfg.q_list();
    let monitors = compute_monitors(&p.grid, &p.op, &result.trajectory, &q, p.bound.ubar)?;
    let traj = &result.trajectory;
    let sup_u_max = traj
        .u
        .iter()
        .flat_map(|u| u.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let summary = RunSummary {
        tau,
        tau0: p.tau0,
        ubar: p.bound.ubar,
        t_end: p.cfg.time.t_end,
        steps: p.cfg.steps(),
        nodes: p.grid.len(),
        dim: p.grid.dim(),
        l,
        minimal_l: p.compat.minimal_l,
        support: p.support,
        backward_step: backward,
        newton_iterations: traj.newton_iterations.clone(),
        newton_residuals: traj.newton_residuals.clone(),
        sup_u_max,
        max_principle_ok: sup_u_max <= p.bound.ubar,
        monitors: MonitorArrays::from_records(&monitors, q.len()),
        q,
    };
    Ok(RunOutput {
        summary,
        trajectory: result.trajectory,
        memory: result.memory,
        monitors,
        prepared: p,
    })
}

/// Probe history rows `t, u_pl, u_pco, g_pl, g_pco` at the step times and
/// the midpoints between them.
pub fn probe_rows(traj: &Trajectory, node: usize) -> Vec<Vec<f64>> {
    let tau = traj.tau;
    let u: Vec<f64> = traj.u.iter().map(|f| f[node]).collect();
    let g: Vec<f64> = traj.g.iter().map(|f| f[node]).collect();
    let n = u.len() - 1;
    let mut rows = Vec::with_capacity(2 * n + 1);
    for i in 0..=n {
        let mut times = vec![i as f64 * tau];
        if i < n {
            times.push((i as f64 + 0.5) * tau);
        }
        for t in times {
            let (upl, upco) = interpolants(tau, &u, t);
            let (gpl, gpco) = interpolants(tau, &g, t);
            rows.push(vec![t, upl, upco, gpl, gpco]);
        }
    }
    rows
}

/// Writes compatibility.json, summary.json, probe histories, snapshots and
/// effective-config.toml into `dir`.
pub fn write_run_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    let p = &out.prepared;
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("compatibility.json"), &p.compat)?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    std::fs::write(dir.join("effective-config.toml"), p.cfg.to_toml()?)?;
    let traj = &out.trajectory;
    for (idx, &node) in p.probe_nodes().iter().enumerate() {
        write_csv(
            &dir.join(format!("probe_{idx}.csv")),
            &["t", "u_pl", "u_pco", "g_pl", "g_pco"],
            probe_rows(traj, node),
        )?;
        std::fs::write(dir.join(format!("probe_{idx}_memory.csv")), out.memory.curves[node].to_csv_string())?;
    }
    let stride = p.cfg.output.stride;
    if stride > 0 {
        let snap = dir.join("snapshots");
        std::fs::create_dir_all(&snap)?;
        let n = traj.u.len() - 1;
        for i in (0..=n).filter(|i| i % stride == 0 || *i == n) {
            let mut buf = Vec::new();
            p.grid.write_field_csv(&traj.u[i], &mut buf)?;
            std::fs::write(snap.join(format!("u_{i:06}.csv")), buf)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineLevel {
    pub level: usize,
    pub tau: f64,
    pub steps: usize,
    pub energy_sum: f64,
    pub dissipation_sum: f64,
    pub grad_max: f64,
    pub h2_sum: f64,
    pub increment_sums: Vec<f64>,
    pub sup_u: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineReport {
    pub q: Vec<f64>,
    pub probes: Vec<usize>,
    pub levels: Vec<RefineLevel>,
    /// `diffs[k][j]`: `L^q` time norm over the coarse steps of the probe
    /// difference between levels `k` and `k+1`, maximized over probes.
    pub diffs: Vec<Vec<f64>>,
    /// Largest ratio max/min of each final monitor across levels (energy,
    /// dissipation, gradient, `W^{2,2}`, then one per `q`).
    pub monitor_spread: Vec<f64>,
}

/// Reruns the config with `τ / 2^k`, `k = 0..levels`.
pub fn refine(cfg: &RunConfig, levels: usize) -> Result<RefineReport> {
    if levels == 0 {
        return Err(Error::Config("--levels must be at least 1".into()));
    }
    let mut base = cfg.clone();
    base.normalize()?;
    let mut runs = Vec::with_capacity(levels);
    for k in 0..levels {
        let mut c = base.clone();
        c.time.n = Some(base.steps() << k);
        runs.push(execute(&c)?);
    }
    let q = base.q_list();
    let probes = runs[0].prepared.probe_nodes();
    let levels_out: Vec<RefineLevel> = runs
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let last = r.monitors.last().expect("at least one step");
            RefineLevel {
                level: k,
                tau: r.summary.tau,
                steps: r.summary.steps,
                energy_sum: last.energy_sum,
                dissipation_sum: last.dissipation_sum,
                grad_max: last.grad_max,
                h2_sum: last.h2_sum,
                increment_sums: last.increment_sums.clone(),
                sup_u: r.summary.sup_u_max,
            }
        })
        .collect();
    let mut diffs = Vec::new();
    for w in runs.windows(2) {
        let (c, f) = (&w[0].trajectory, &w[1].trajectory);
        let row = q
            .iter()
            .map(|&q| {
                probes
                    .iter()
                    .map(|&node| {
                        let s: f64 = (1..c.u.len())
                            .map(|i| c.tau * (c.u[i][node] - f.u[2 * i][node]).abs().powf(q))
                            .sum();
                        s.powf(1.0 / q)
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        diffs.push(row);
    }
    let mut series: Vec<Vec<f64>> = vec![
        levels_out.iter().map(|l| l.energy_sum).collect(),
        levels_out.iter().map(|l| l.dissipation_sum).collect(),
        levels_out.iter().map(|l| l.grad_max).collect(),
        levels_out.iter().map(|l| l.h2_sum).collect(),
    ];
    for j in 0..q.len() {
        series.push(levels_out.iter().map(|l| l.increment_sums[j]).collect());
    }
    let monitor_spread = series.iter().map(|s| spread(s)).collect();
    Ok(RefineReport {
        q,
        probes,
        levels: levels_out,
        diffs,
        monitor_spread,
    })
}

/// `max/min` of a positive series; 1 when all entries vanish.
pub fn spread(s: &[f64]) -> f64 {
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexifierSummary {
    pub phi_slope: f64,
    pub u_max: f64,
    pub c: f64,
    pub bounds: GBounds,
    pub ode_residual: OdeResidual,
    pub convexity: ConvexityReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub compatible: bool,
    pub violations: usize,
    pub minimal_l: f64,
    pub l: f64,
    pub c2a_residual: f64,
    pub tau: f64,
    pub tau0: f64,
    pub tau_below_tau0: bool,
    #[serde(rename = "Ubar")]
    pub ubar: f64,
    pub rgr_residual: Option<f64>,
    pub convexifier: Option<ConvexifierSummary>,
    pub warnings: Vec<String>,
    pub assembly: Option<AssemblyReport>,
    pub compatibility: CompatibilityReport,
}

/// Convexifier diagnostics for a density on `[−U, U]`; `None` when the
/// family has no decay function `φ`.
pub fn convexifier_summary(op: &PreisachOperator, u_max: f64) -> Result<Option<ConvexifierSummary>> {
    let Some(phi) = op.density.phi() else {
        return Ok(None);
    };
    let slope = phi.eval(1.0);
    let cv = Convexifier::for_operator(op, u_max, 1e-6)?;
    let mut states = cv.major_states().to_vec();
    // a few interior turning states
    for (a, b) in [(0.5, -0.25), (-0.5, 0.25), (0.8, 0.0)] {
        let s = MemoryCurve::virgin().play_update(a * u_max)?.0;
        states.push(s.play_update(b * u_max)?.0);
    }
    let convexity = cv.verify_branch_convexity(op, &states, 65, 1e-6)?;
    Ok(Some(ConvexifierSummary {
        phi_slope: slope,
        u_max,
        c: cv.c(),
        bounds: cv.bounds(),
        ode_residual: cv.ode_residual(200),
        convexity,
    }))
}

pub fn check(cfg: &RunConfig, with_assembly: bool) -> Result<CheckReport> {
    let p = Prepared::new(cfg)?;
    let tau = p.cfg.tau();
    let mut warnings = Vec::new();
    let tau_ok = tau < p.tau0;
    if !tau_ok {
        warnings.push(format!("tau = {} is not below tau0 = {}", fmt_f64(tau), fmt_f64(p.tau0)));
    }
    if !p.compat.is_clean() {
        warnings.push(format!("{} compatibility violation(s)", p.compat.violations.len()));
    }
    let convexifier = convexifier_summary(&p.preisach, p.bound.ubar)?;
    if convexifier.is_none() {
        warnings.push("density has no decay function; convexification skipped".into());
    }
    let assembly = with_assembly.then(|| p.op.check_assembly(&p.grid));
    if let Some(a) = &assembly {
        if !a.passed {
            warnings.push("operator self-test failed".into());
        }
    }
    Ok(CheckReport {
        compatible: p.compat.is_clean(),
        violations: p.compat.violations.len(),
        minimal_l: p.compat.minimal_l,
        l: p.cfg.initial.l,
        c2a_residual: p.compat.c2a_residual,
        tau,
        tau0: p.tau0,
        tau_below_tau0: tau_ok,
        ubar: p.bound.ubar,
        rgr_residual: convexifier.as_ref().map(|c| c.convexity.rgr_residual),
        convexifier,
        warnings,
        assembly,
        compatibility: p.compat,
    })
}

/// Density plus an input sequence for scalar loop traces.
#[derive(Debug, Clone, Deserialize)]
pub struct LoopConfig {
    pub density: DensitySpec,
    #[serde(default)]
    pub loops: LoopSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct LoopSpec {
    pub sequence: Vec<f64>,
    /// Points per monotone segment.
    pub samples: usize,
    /// Half-width of the convexifier interval; defaults to `max |sequence|`.
    pub u_max: Option<f64>,
}

impl Default for LoopSpec {
    fn default() -> Self {
        Self {
            sequence: vec![0.0, 1.0, -1.0, 1.0],
            samples: 64,
            u_max: None,
        }
    }
}

impl LoopConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let base = std::fs::canonicalize(path.parent().unwrap_or(Path::new(".")))?;
        cfg.density.resolve(&base);
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopTrace {
    pub u: Vec<f64>,
    pub g: Vec<f64>,
    /// Index where the closed portion starts (the first earlier visit of the
    /// final input), if any.
    pub closed_from: Option<usize>,
    /// Whether the output returns to its value at `closed_from`.
    pub closed: bool,
    /// Shoelace area of the closed portion; positive when counterclockwise.
    pub signed_area: f64,
}

/// Traces `(u, G)` from the virgin state along the sequence, sampling each
/// monotone segment densely.
pub fn loops(op: &PreisachOperator, sequence: &[f64], samples: usize) -> Result<LoopTrace> {
    let (&first, rest) = sequence.split_first().ok_or(Error::EmptySequence)?;
    let samples = samples.max(1);
    let mut inputs = vec![first];
    let mut marks = vec![0];
    let mut prev = first;
    for &v in rest {
        for k in 1..=samples {
            inputs.push(prev + (v - prev) * k as f64 / samples as f64);
        }
        marks.push(inputs.len() - 1);
        prev = v;
    }
    let (g, _) = op.apply_sequence(&MemoryCurve::virgin(), &inputs)?;
    let last = *sequence.last().expect("nonempty");
    let j = sequence[..sequence.len() - 1].iter().position(|&v| v == last);
    let closed_from = j.map(|j| marks[j]);
    let (closed, signed_area) = match closed_from {
        Some(s) => {
            let end = inputs.len() - 1;
            let closed = (g[end] - g[s]).abs() <= 1e-12 * (1.0 + g[s].abs());
            let mut area = 0.0;
            for i in s..end {
                area += inputs[i] * g[i + 1] - inputs[i + 1] * g[i];
            }
            area += inputs[end] * g[s] - inputs[s] * g[end];
            (closed, 0.5 * area)
        }
        None => (false, 0.0),
    };
    Ok(LoopTrace {
        u: inputs,
        g,
        closed_from,
        closed,
        signed_area,
    })
}
