//! Convexifying change of variables `ĝ` for densities with `ρ_v = −φ(v)ρ`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::play::{Branch, MemoryCurve};
use crate::preisach::{gauss, PreisachOperator};

const CELLS: usize = 1024;

type PhiFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `ĝ(u) = Φ̂⁻¹(C u)` with `Φ̂(v) = ∫_0^v e^{−Φ(s)} ds`, `Φ(v) = ∫_0^v φ`,
/// `C = Φ̂(U)/U`, extended oddly to `[−U, U]`.
#[derive(Clone)]
pub struct Convexifier {
    u_max: f64,
    phi: PhiFn,
    c: f64,
    h: f64,
    /// `Φ` at the cell nodes `k·h`.
    big_phi: Vec<f64>,
    /// `Φ̂` at the cell nodes.
    phi_hat: Vec<f64>,
}

impl fmt::Debug for Convexifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Convexifier")
            .field("u_max", &self.u_max)
            .field("c", &self.c)
            .finish()
    }
}

/// Constants of the admissible class for `g = ĝ⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GBounds {
    pub g_lower: f64,
    pub g_upper: f64,
    pub g_second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeResidual {
    /// `ĝ''` from the closed-form identity.
    pub identity: f64,
    /// `ĝ''` from extrapolated central second differences of `ĝ`.
    pub finite_difference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityReport {
    /// Smallest signed second difference (descending branches negated).
    pub min_second_difference: f64,
    /// Smallest second-derivative estimate along the sampled branches.
    pub beta_estimate: f64,
    pub rgr_residual: f64,
    pub branches: usize,
}

impl Convexifier {
    /// Builds `ĝ` on `[−U, U]`, checking `φ` on samples and the ODE residual
    /// against `tol`.
    pub fn build(phi: impl Fn(f64) -> f64 + Send + Sync + 'static, u_max: f64, tol: f64) -> Result<Self> {
        if !(u_max.is_finite() && u_max > 0.0) {
            return Err(Error::Convexify(format!("range bound must be positive, got {u_max}")));
        }
        let phi: PhiFn = Arc::new(phi);
        let mut last = f64::NEG_INFINITY;
        for k in 0..=200 {
            let v = u_max * k as f64 / 200.0;
            let (p, m) = (phi(v), phi(-v));
            if !p.is_finite() || (p + m).abs() > 1e-12 * (1.0 + p.abs()) {
                return Err(Error::Convexify(format!("phi is not odd at v = {v}")));
            }
            if p < last {
                return Err(Error::Convexify(format!("phi decreases at v = {v}")));
            }
            last = p;
        }
        let h = u_max / CELLS as f64;
        let mut big_phi = vec![0.0; CELLS + 1];
        for k in 0..CELLS {
            let a = k as f64 * h;
            big_phi[k + 1] = big_phi[k] + gauss(a, a + h, &|s| phi(s));
        }
        let mut cx = Self {
            u_max,
            phi,
            c: 1.0,
            h,
            big_phi,
            phi_hat: vec![0.0; CELLS + 1],
        };
        for k in 0..CELLS {
            let a = k as f64 * h;
            cx.phi_hat[k + 1] = cx.phi_hat[k] + gauss(a, a + h, &|s| (-cx.big_phi_at(s)).exp());
        }
        cx.c = cx.phi_hat[CELLS] / u_max;
        let res = cx.ode_residual(200);
        if !(res.identity <= tol && res.finite_difference <= tol) {
            return Err(Error::Convexify(format!(
                "ODE residual {:e} / {:e} exceeds {tol:e}",
                res.identity, res.finite_difference
            )));
        }
        Ok(cx)
    }

    /// Convexifier of a density's decay function, if it has one.
    pub fn for_operator(op: &PreisachOperator, u_max: f64, tol: f64) -> Result<Self> {
        let phi = op
            .density
            .phi()
            .ok_or_else(|| Error::Convexify("density has no closed-form decay function".into()))?;
        Self::build(move |v| phi.eval(v), u_max, tol)
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    /// Normalisation `C = Φ̂(U)/U`.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn phi(&self, v: f64) -> f64 {
        (self.phi)(v)
    }

    fn cell(&self, x: f64) -> usize {
        ((x / self.h) as usize).min(CELLS - 1)
    }

    /// `Φ(v)` for `v ≥ 0`.
    fn big_phi_at(&self, v: f64) -> f64 {
        let k = self.cell(v);
        let a = k as f64 * self.h;
        self.big_phi[k] + gauss(a, v, &|s| (self.phi)(s))
    }

    /// `Φ(v) = ∫_0^v φ`, even in `v`.
    pub fn big_phi(&self, v: f64) -> f64 {
        self.big_phi_at(v.abs().min(self.u_max))
    }

    /// `Φ̂(v)`, odd in `v`.
    pub fn phi_hat(&self, v: f64) -> f64 {
        let x = v.abs().min(self.u_max);
        let k = self.cell(x);
        let a = k as f64 * self.h;
        let val = self.phi_hat[k] + gauss(a, x, &|s| (-self.big_phi_at(s)).exp());
        val.copysign(v)
    }

    /// `g(w) = Φ̂(w)/C`.
    pub fn g(&self, w: f64) -> f64 {
        if w.abs() >= self.u_max {
            return self.u_max.copysign(w);
        }
        self.phi_hat(w) / self.c
    }

    pub fn g_prime(&self, w: f64) -> f64 {
        (-self.big_phi(w)).exp() / self.c
    }

    pub fn g_second(&self, w: f64) -> f64 {
        -self.phi(w) * (-self.big_phi(w)).exp() / self.c
    }

    /// `ĝ(u)`: Hermite guess from the node table, then Newton on `Φ̂(x) = C|u|`.
    pub fn ghat(&self, u: f64) -> f64 {
        if u.abs() >= self.u_max {
            return self.u_max.copysign(u);
        }
        let target = self.c * u.abs();
        if target == 0.0 {
            return 0.0 * u;
        }
        let k = self.phi_hat.partition_point(|&p| p <= target).clamp(1, CELLS);
        let (a, b) = ((k - 1) as f64 * self.h, k as f64 * self.h);
        let (fa, fb) = (self.phi_hat[k - 1], self.phi_hat[k]);
        let (da, db) = ((-self.big_phi[k - 1]).exp(), (-self.big_phi[k]).exp());
        let mut x = hermite_inverse(a, b, fa, fb, da, db, target);
        for _ in 0..30 {
            let f = self.phi_hat(x) - target;
            let step = f / (-self.big_phi_at(x)).exp();
            let next = (x - step).clamp(a, b);
            if (next - x).abs() <= 1e-16 * (1.0 + x) {
                x = next;
                break;
            }
            x = next;
        }
        x.copysign(u)
    }

    /// `ĝ'(u) = C e^{Φ(ĝ(u))}`.
    pub fn ghat_prime(&self, u: f64) -> f64 {
        self.c * self.big_phi(self.ghat(u)).exp()
    }

    /// `ĝ''(u) = C² φ(ĝ) e^{2Φ(ĝ)}`.
    pub fn ghat_second(&self, u: f64) -> f64 {
        let x = self.ghat(u);
        self.c * self.c * self.phi(x) * (2.0 * self.big_phi(x)).exp()
    }

    /// `g_* = min g'`, `g^* = max g'`, `ḡ = max |g''|` on `[−U, U]`.
    pub fn bounds(&self) -> GBounds {
        let mut out = GBounds {
            g_lower: f64::INFINITY,
            g_upper: 0.0,
            g_second: 0.0,
        };
        for k in 0..=400 {
            let w = self.u_max * k as f64 / 400.0;
            let d = self.g_prime(w);
            out.g_lower = out.g_lower.min(d);
            out.g_upper = out.g_upper.max(d);
            out.g_second = out.g_second.max(self.g_second(w).abs());
        }
        out
    }

    /// Residual of `ĝ'' = φ(ĝ)(ĝ')²` on `samples` interior points of `(−U, U)`,
    /// relative to `1 + |φ(ĝ)(ĝ')²|`.
    pub fn ode_residual(&self, samples: usize) -> OdeResidual {
        let step = 1e-3 * self.u_max;
        let mut out = OdeResidual {
            identity: 0.0,
            finite_difference: 0.0,
        };
        for k in 0..samples {
            let u = -self.u_max + 2.0 * self.u_max * (k as f64 + 0.5) / samples as f64;
            let u = u.clamp(-self.u_max + step, self.u_max - step);
            let x = self.ghat(u);
            let d1 = self.ghat_prime(u);
            let rhs = self.phi(x) * d1 * d1;
            let scale = 1.0 + rhs.abs();
            out.identity = out.identity.max((self.ghat_second(u) - rhs).abs() / scale);
            let d2 = |e: f64| (self.ghat(u + e) - 2.0 * x + self.ghat(u - e)) / (e * e);
            let fd = (4.0 * d2(0.5 * step) - d2(step)) / 3.0;
            out.finite_difference = out.finite_difference.max((fd - rhs).abs() / scale);
        }
        out
    }

    /// `max |ρ_v + φ(v)ρ| / ρ₁` over a sample box, `ρ_v` by central differences.
    pub fn rgr_residual(&self, op: &PreisachOperator) -> f64 {
        let d = &op.density;
        let rho1 = d.rho1();
        if rho1 == 0.0 {
            return 0.0;
        }
        let dv = 1e-5;
        let mut worst: f64 = 0.0;
        for j in 0..32 {
            let r = d.support_r * (j as f64 + 0.5) / 32.0;
            for k in 0..=64 {
                let v = (-self.u_max + 2.0 * self.u_max * k as f64 / 64.0).clamp(-self.u_max + dv, self.u_max - dv);
                let rv = (d.rho(r, v + dv) - d.rho(r, v - dv)) / (2.0 * dv);
                worst = worst.max((rv + self.phi(v) * d.rho(r, v)).abs());
            }
        }
        worst / rho1
    }

    /// Second differences of the composed branches `w ↦ B_±(ĝ(w))` from each
    /// sampled memory state; descending branches are negated so that every
    /// entry should be nonnegative.
    pub fn verify_branch_convexity(
        &self,
        op: &PreisachOperator,
        states: &[MemoryCurve],
        points: usize,
        rgr_tol: f64,
    ) -> Result<ConvexityReport> {
        let rgr = self.rgr_residual(op);
        if !(rgr <= rgr_tol) {
            return Err(Error::Convexify(format!(
                "density violates the decay identity (residual {rgr:e} > {rgr_tol:e})"
            )));
        }
        let mut report = ConvexityReport {
            min_second_difference: f64::INFINITY,
            beta_estimate: f64::INFINITY,
            rgr_residual: rgr,
            branches: 0,
        };
        let points = points.max(3);
        for prev in states {
            let p = prev.input();
            if p.abs() > self.u_max {
                return Err(Error::Convexify(format!("state input {p} outside [−U, U]")));
            }
            let w0 = self.g(p);
            for (branch, end) in [(Branch::Ascending, self.u_max), (Branch::Descending, -self.u_max)] {
                let len = (end - w0).abs();
                if len <= 0.0 {
                    continue;
                }
                let h = len / (points - 1) as f64;
                let s = branch.sign();
                let vals = (0..points)
                    .map(|k| {
                        let w = (w0 + s * h * k as f64).clamp(-self.u_max, self.u_max);
                        let u = if k == 0 { p } else { self.ghat(w) };
                        op.branch(prev, u, branch)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                for t in vals.windows(3) {
                    let d2 = s * (t[0] - 2.0 * t[1] + t[2]);
                    report.min_second_difference = report.min_second_difference.min(d2);
                    report.beta_estimate = report.beta_estimate.min(d2 / (h * h));
                }
                report.branches += 1;
            }
        }
        Ok(report)
    }

    /// Major-loop starting states: the curves after inputs `−U` and `U`.
    pub fn major_states(&self) -> [MemoryCurve; 2] {
        [
            MemoryCurve::saturated(-self.u_max),
            MemoryCurve::saturated(self.u_max),
        ]
    }
}

/// Solves the cubic Hermite interpolant of `(a, fa, da)`, `(b, fb, db)` for
/// `target` by bisection; the result seeds Newton.
fn hermite_inverse(a: f64, b: f64, fa: f64, fb: f64, da: f64, db: f64, target: f64) -> f64 {
    let h = b - a;
    let eval = |x: f64| {
        let t = (x - a) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * fa
            + (t3 - 2.0 * t2 + t) * h * da
            + (-2.0 * t3 + 3.0 * t2) * fb
            + (t3 - t2) * h * db
    };
    let (mut lo, mut hi) = (a, b);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
