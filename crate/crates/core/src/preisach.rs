//! Preisach output, energy, branches and the per-step Nemytskii function.
//!
//! All threshold integrals are split at curve corners, density breakpoints
//! and the points where the integrand's `v`-argument crosses a density
//! discontinuity. Each piece is integrated with an 8-point Gauss–Legendre
//! rule, which is exact for the piecewise-polynomial families and is
//! subdivided further for the Gaussian family.

use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::play::{Branch, MemoryCurve};

const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Threshold quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Longest piece integrated with a single Gauss rule.
    pub max_piece: f64,
}

impl QuadratureSpec {
    pub fn for_density(d: &DensityModel) -> Self {
        if d.is_piecewise_polynomial() {
            Self {
                max_piece: f64::INFINITY,
            }
        } else {
            Self {
                max_piece: 0.5 * d.v_scale().min(1.0),
            }
        }
    }
}

pub(crate) fn gauss(a: f64, b: f64, f: &impl Fn(f64) -> f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..4 {
        s += GL_W[k] * (f(c - h * GL_X[k]) + f(c + h * GL_X[k]));
    }
    s * h
}

/// Integrates `f` over `[a, b]` split at the sorted interior `points`.
fn integrate(mut points: Vec<f64>, a: f64, b: f64, max_piece: f64, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    points.retain(|&p| p > a && p < b);
    points.push(a);
    points.push(b);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut total = 0.0;
    for w in points.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let len = hi - lo;
        if len <= 0.0 {
            continue;
        }
        let n = if max_piece.is_finite() {
            (len / max_piece).ceil().max(1.0) as usize
        } else {
            1
        };
        let h = len / n as f64;
        for j in 0..n {
            let x0 = lo + j as f64 * h;
            let x1 = if j + 1 == n { hi } else { x0 + h };
            total += gauss(x0, x1, &f);
        }
    }
    total
}

/// Thresholds in `(ra, rb)` where the line `v(r) = va + (vb−va)(r−ra)/(rb−ra)`
/// crosses one of the levels.
fn level_crossings(ra: f64, va: f64, rb: f64, vb: f64, levels: &[f64], out: &mut Vec<f64>) {
    if va == vb {
        return;
    }
    for &l in levels {
        if (l - va) * (l - vb) < 0.0 {
            out.push(ra + (l - va) * (rb - ra) / (vb - va));
        }
    }
}

/// A Preisach operator: density, offset and threshold quadrature.
#[derive(Debug, Clone)]
pub struct PreisachOperator {
    pub density: DensityModel,
    pub quad: QuadratureSpec,
}

impl PreisachOperator {
    pub fn new(density: DensityModel) -> Self {
        let quad = QuadratureSpec::for_density(&density);
        Self { density, quad }
    }

    pub fn with_quadrature(density: DensityModel, quad: QuadratureSpec) -> Self {
        Self { density, quad }
    }

    pub fn psi(&self, r: f64, xi: f64) -> f64 {
        self.density.psi(r, xi)
    }

    /// `∫_0^∞ f(r, ξ^r) dr` along the curve.
    fn curve_integral(&self, curve: &MemoryCurve, f: impl Fn(f64, f64) -> f64) -> f64 {
        let end = curve.extent().min(self.density.support_r);
        let mut pts = self.density.r_breakpoints();
        let levels = self.density.v_breakpoints();
        for w in curve.corners().windows(2) {
            let (ra, va) = w[0];
            let (rb, vb) = w[1];
            pts.push(ra);
            level_crossings(ra, va, rb, vb, &levels, &mut pts);
        }
        integrate(pts, 0.0, end, self.quad.max_piece, |r| f(r, curve.value(r)))
    }

    /// `G = Ḡ + ∫_0^∞ ψ(r, ξ^r) dr`.
    pub fn output(&self, curve: &MemoryCurve) -> f64 {
        self.density.gbar + self.curve_integral(curve, |r, xi| self.density.psi(r, xi))
    }

    /// `E = ∫_0^∞ Ψ(r, ξ^r) dr`.
    pub fn energy(&self, curve: &MemoryCurve) -> f64 {
        self.curve_integral(curve, |r, xi| self.density.psi_energy(r, xi))
    }

    /// Folds play updates over `inputs`, returning one output per input and
    /// the final curve. The initial input is `λ(0)`.
    pub fn apply_sequence(&self, lambda: &MemoryCurve, inputs: &[f64]) -> Result<(Vec<f64>, MemoryCurve)> {
        if inputs.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut curve = lambda.clone();
        let mut out = Vec::with_capacity(inputs.len());
        for &u in inputs {
            curve = curve.play_update(u)?.0;
            out.push(self.output(&curve));
        }
        Ok((out, curve))
    }

    /// `G̃(u) = output(play_update(prev, u))`.
    pub fn nemytskii(&self, prev: &MemoryCurve, u: f64) -> Result<f64> {
        Ok(self.output(&prev.play_update(u)?.0))
    }

    /// Output increment `G̃(w) − output(prev)` integrated over the moving
    /// strip only: `∫_0^{r*} (ψ(r, w ∓ r) − ψ(r, ξ^r)) dr`.
    pub fn increment(&self, prev: &MemoryCurve, w: f64) -> Result<f64> {
        let current = prev.input();
        if w == current {
            return Ok(0.0);
        }
        let branch = if w > current {
            Branch::Ascending
        } else {
            Branch::Descending
        };
        let depth = prev.memory_depth(w, branch)?;
        let s = -branch.sign();
        let end = depth.min(self.density.support_r);
        let mut pts = self.density.r_breakpoints();
        let levels = self.density.v_breakpoints();
        level_crossings(0.0, w, depth, w + s * depth, &levels, &mut pts);
        for win in prev.corners().windows(2) {
            let (ra, va) = win[0];
            let (rb, vb) = win[1];
            if ra >= depth {
                break;
            }
            pts.push(ra);
            pts.push(rb);
            level_crossings(ra, va, rb, vb, &levels, &mut pts);
        }
        let d = &self.density;
        Ok(integrate(pts, 0.0, end, self.quad.max_piece, |r| {
            d.psi(r, w + s * r) - d.psi(r, prev.value(r))
        }))
    }

    /// Ascending or descending branch `B_±(w) = G̃(w) − output(prev)`.
    pub fn branch(&self, prev: &MemoryCurve, w: f64, branch: Branch) -> Result<f64> {
        let current = prev.input();
        let wrong = match branch {
            Branch::Ascending => w < current,
            Branch::Descending => w > current,
        };
        if wrong || !w.is_finite() {
            return Err(Error::WrongSide { w, current, branch });
        }
        self.increment(prev, w)
    }

    /// `dG̃/du = ∫_0^{r*(u)} ρ(r, u ∓ r) dr`; zero at a turning point.
    pub fn nemytskii_derivative(&self, prev: &MemoryCurve, u: f64) -> Result<f64> {
        let current = prev.input();
        if !u.is_finite() {
            return Err(Error::NonFinite(u));
        }
        if u == current {
            return Ok(0.0);
        }
        let branch = if u > current {
            Branch::Ascending
        } else {
            Branch::Descending
        };
        let depth = prev.memory_depth(u, branch)?;
        Ok(self.boundary_integral(u, -branch.sign(), depth))
    }

    /// `∫_0^{depth} ρ(r, v0 + slope·r) dr`.
    pub(crate) fn boundary_integral(&self, v0: f64, slope: f64, depth: f64) -> f64 {
        let end = depth.min(self.density.support_r);
        let mut pts = self.density.r_breakpoints();
        level_crossings(0.0, v0, depth, v0 + slope * depth, &self.density.v_breakpoints(), &mut pts);
        let d = &self.density;
        integrate(pts, 0.0, end, self.quad.max_piece, |r| d.rho(r, v0 + slope * r))
    }

    /// `C = ρ₁ (Λ + max|u|)` bounding `|ΔG| ≤ C |Δu|` for curves supported in
    /// `[0, Λ]` and inputs bounded by `max|u|`.
    pub fn monotonicity_constant(&self, support: f64, umax: f64) -> f64 {
        self.density.rho1() * (support + umax).min(self.density.support_r)
    }

    /// `∫_{ra}^{rb} (ψ(r, hi(r)) − ψ(r, lo(r))) dr` for affine `hi`, `lo`
    /// given as `(value at 0, slope)`.
    pub fn strip_integral(&self, ra: f64, rb: f64, hi: (f64, f64), lo: (f64, f64)) -> f64 {
        let mut pts = self.density.r_breakpoints();
        let levels = self.density.v_breakpoints();
        for (v0, s) in [hi, lo] {
            level_crossings(ra, v0 + s * ra, rb, v0 + s * rb, &levels, &mut pts);
        }
        let d = &self.density;
        let end = rb.min(d.support_r);
        integrate(pts, ra, end, self.quad.max_piece, |r| {
            d.psi(r, hi.0 + hi.1 * r) - d.psi(r, lo.0 + lo.1 * r)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityModel;

    fn pi() -> PreisachOperator {
        PreisachOperator::new(DensityModel::constant(1.0, 1.0).with_v_support(2.0))
    }

    #[test]
    fn closed_form_outputs() {
        let op = pi();
        let (g, c) = op.apply_sequence(&MemoryCurve::virgin(), &[0.5]).unwrap();
        assert!((g[0] - 0.125).abs() < 1e-15);
        let (g, _) = op.apply_sequence(&MemoryCurve::virgin(), &[1.0]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);
        let (g, end) = op.apply_sequence(&MemoryCurve::virgin(), &[1.0, 0.0]).unwrap();
        assert!((g[1] - 0.25).abs() < 1e-15);
        assert!((op.energy(&c) - 0.5f64.powi(3) / 6.0).abs() < 1e-15);
        assert!(op.energy(&MemoryCurve::virgin()) == 0.0);
        let one = MemoryCurve::virgin().play_update(1.0).unwrap().0;
        assert!((op.energy(&one) - 1.0 / 6.0).abs() < 1e-15);
        assert!(end.corners().len() == 3);
    }

    #[test]
    fn empty_sequence_is_error() {
        assert!(matches!(
            pi().apply_sequence(&MemoryCurve::virgin(), &[]),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn increment_matches_output_difference() {
        let op = PreisachOperator::new(DensityModel::gaussian(1.0, 1.0, 3.0));
        let prev = [0.8, -0.6, 0.3]
            .iter()
            .fold(MemoryCurve::virgin(), |c, &u| c.play_update(u).unwrap().0);
        for &w in &[-1.2, -0.4, 0.1, 0.3, 0.55, 1.4] {
            let a = op.increment(&prev, w).unwrap();
            let b = op.nemytskii(&prev, w).unwrap() - op.output(&prev);
            assert!((a - b).abs() < 1e-13, "w = {w}: {a} vs {b}");
        }
    }

    #[test]
    fn branch_closed_form_and_side_check() {
        let op = pi();
        let v = MemoryCurve::virgin();
        for &w in &[0.0, 0.25, 0.6, 1.0] {
            let b = op.branch(&v, w, Branch::Ascending).unwrap();
            assert!((b - 0.5 * w * w).abs() < 1e-15);
        }
        assert!(op.branch(&v, -0.1, Branch::Ascending).is_err());
        assert!(op.branch(&v, 0.1, Branch::Descending).is_err());
        assert_eq!(op.branch(&v, 0.0, Branch::Descending).unwrap(), 0.0);
    }

    #[test]
    fn derivative_examples() {
        let op = pi();
        let v = MemoryCurve::virgin();
        assert_eq!(op.nemytskii_derivative(&v, 0.0).unwrap(), 0.0);
        assert!((op.nemytskii_derivative(&v, 0.5).unwrap() - 0.5).abs() < 1e-15);
        let h = 1e-6;
        let fd = (op.nemytskii(&v, 0.5 + h).unwrap() - op.nemytskii(&v, 0.5 - h).unwrap()) / (2.0 * h);
        assert!((fd - 0.5).abs() < 1e-8);
    }
}
