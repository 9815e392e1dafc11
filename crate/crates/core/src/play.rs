//! Scalar play operators with an explicit memory-curve state.
//!
//! A [`MemoryCurve`] records the outputs of all plays at once as a
//! piecewise-linear function `r ↦ ξ^r` of the threshold. The corner list is
//! exact; an optional threshold-grid cache is carried along for quadrature
//! and updated pointwise with the same clipping rule.

use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Absolute/relative tolerance for snapping a cone crossing onto an
/// existing corner.
const SNAP: f64 = 4.0 * f64::EPSILON;

/// Slope tolerance used when validating the 1-Lipschitz invariant.
const LIPSCHITZ_TOL: f64 = 1e-12;

/// Direction of a monotone input segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Ascending,
    Descending,
}

impl Branch {
    /// `+1` for ascending, `-1` for descending.
    pub fn sign(self) -> f64 {
        match self {
            Branch::Ascending => 1.0,
            Branch::Descending => -1.0,
        }
    }

    pub fn from_sign(sign: f64) -> Self {
        if sign >= 0.0 {
            Branch::Ascending
        } else {
            Branch::Descending
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascending,
    Descending,
    None,
}

/// What a single play update did to the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayUpdateReport {
    /// Threshold below which the curve changed.
    pub moved_depth: f64,
    pub direction: Direction,
}

/// Samples `ξ^{r_k}` on a fixed threshold grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RGrid {
    thresholds: Arc<[f64]>,
    values: Vec<f64>,
}

impl RGrid {
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Piecewise-linear, 1-Lipschitz, compactly supported memory curve.
///
/// Canonical form: the first corner sits at `r = 0` and carries the current
/// input, thresholds are strictly increasing, the last corner has value 0
/// (the curve vanishes beyond it) and no interior corner is collinear with
/// its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryCurve {
    corners: Vec<(f64, f64)>,
    support: f64,
    rgrid: Option<RGrid>,
}

impl MemoryCurve {
    /// The virgin curve `ξ^r ≡ 0`.
    pub fn virgin() -> Self {
        Self {
            corners: vec![(0.0, 0.0)],
            support: 0.0,
            rgrid: None,
        }
    }

    /// Builds a curve from an explicit corner list, validating every invariant.
    pub fn from_corners(corners: Vec<(f64, f64)>, support: f64) -> Result<Self> {
        let mut curve = Self {
            corners,
            support,
            rgrid: None,
        };
        curve.validate()?;
        curve.normalize();
        Ok(curve)
    }

    /// `λ(r) = (v* − r)⁺`, mirrored for negative `v*`.
    pub fn saturated(v_star: f64) -> Self {
        if v_star == 0.0 {
            return Self::virgin();
        }
        Self {
            corners: vec![(0.0, v_star), (v_star.abs(), 0.0)],
            support: v_star.abs(),
            rgrid: None,
        }
    }

    /// Curve with slope `-sign` on `(0, r0)` starting at `u0`, returning to
    /// zero with the steepest admissible slope.
    pub fn turning(u0: f64, r0: f64, sign: f64, support: f64) -> Result<Self> {
        if !u0.is_finite() {
            return Err(Error::NonFinite(u0));
        }
        if r0 < 0.0 {
            return Err(Error::NegativeThreshold(r0));
        }
        if r0 > support {
            return Err(Error::InfeasibleContinuation {
                value: r0,
                room: support,
            });
        }
        let s = if sign >= 0.0 { 1.0 } else { -1.0 };
        let end = u0 - s * r0;
        let room = support - r0;
        if end.abs() > room * (1.0 + SNAP) + SNAP {
            return Err(Error::InfeasibleContinuation { value: end, room });
        }
        let mut corners = vec![(0.0, u0)];
        if r0 > 0.0 {
            corners.push((r0, end));
        }
        if end != 0.0 {
            corners.push((r0 + end.abs(), 0.0));
        }
        let mut curve = Self {
            corners,
            support,
            rgrid: None,
        };
        curve.normalize();
        Ok(curve)
    }

    pub fn corners(&self) -> &[(f64, f64)] {
        &self.corners
    }

    pub fn support_radius(&self) -> f64 {
        self.support
    }

    /// Current input `λ(0)`.
    pub fn input(&self) -> f64 {
        self.corners[0].1
    }

    /// Threshold of the last corner; the curve is zero beyond it.
    pub fn extent(&self) -> f64 {
        self.corners.last().map(|c| c.0).unwrap_or(0.0)
    }

    pub fn is_virgin(&self) -> bool {
        self.corners.len() == 1 && self.corners[0].1 == 0.0
    }

    pub fn rgrid(&self) -> Option<&RGrid> {
        self.rgrid.as_ref()
    }

    /// Attaches a threshold-grid cache sampled from the corner list.
    pub fn with_rgrid(mut self, thresholds: Arc<[f64]>) -> Result<Self> {
        let values = thresholds
            .iter()
            .map(|&r| self.eval(r))
            .collect::<Result<Vec<_>>>()?;
        self.rgrid = Some(RGrid { thresholds, values });
        Ok(self)
    }

    /// Piecewise-linear evaluation; zero beyond the last corner.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if r < 0.0 || r.is_nan() {
            return Err(Error::NegativeThreshold(r));
        }
        Ok(self.value(r))
    }

    /// Evaluation without the sign check, for callers that know `r ≥ 0`.
    pub(crate) fn value(&self, r: f64) -> f64 {
        let c = &self.corners;
        let last = c.len() - 1;
        if r >= c[last].0 {
            return if r == c[last].0 { c[last].1 } else { 0.0 };
        }
        // first corner with threshold > r
        let k = c.partition_point(|p| p.0 <= r);
        let (ra, va) = c[k - 1];
        if ra == r {
            return va;
        }
        let (rb, vb) = c[k];
        va + (vb - va) * (r - ra) / (rb - ra)
    }

    /// Checks the curve invariants.
    pub fn validate(&self) -> Result<()> {
        let c = &self.corners;
        if c.is_empty() {
            return Err(Error::InvalidCurve("empty corner list".into()));
        }
        if c[0].0 != 0.0 {
            return Err(Error::InvalidCurve(format!(
                "first corner at r = {} instead of 0",
                c[0].0
            )));
        }
        for &(r, v) in c {
            if !r.is_finite() || !v.is_finite() {
                return Err(Error::InvalidCurve(format!("non-finite corner ({r}, {v})")));
            }
        }
        for w in c.windows(2) {
            let (ra, va) = w[0];
            let (rb, vb) = w[1];
            if rb <= ra {
                return Err(Error::InvalidCurve(format!(
                    "thresholds not increasing: {ra} then {rb}"
                )));
            }
            if (vb - va).abs() > (rb - ra) * (1.0 + LIPSCHITZ_TOL) + SNAP * (1.0 + va.abs()) {
                return Err(Error::InvalidCurve(format!(
                    "slope {} on ({ra}, {rb}) violates the 1-Lipschitz bound",
                    (vb - va) / (rb - ra)
                )));
            }
        }
        let (rl, vl) = c[c.len() - 1];
        if vl != 0.0 {
            return Err(Error::InvalidCurve(format!(
                "last corner ({rl}, {vl}) is not on the r-axis"
            )));
        }
        if rl > self.support * (1.0 + LIPSCHITZ_TOL) + SNAP {
            return Err(Error::InvalidCurve(format!(
                "curve extends to r = {rl} beyond the support radius {}",
                self.support
            )));
        }
        Ok(())
    }

    /// `r ↦ −ξ^r`.
    pub fn negated(&self) -> Self {
        Self {
            corners: self.corners.iter().map(|&(r, v)| (r, -v)).collect(),
            support: self.support,
            rgrid: self.rgrid.as_ref().map(|g| RGrid {
                thresholds: g.thresholds.clone(),
                values: g.values.iter().map(|v| -v).collect(),
            }),
        }
    }

    /// Applies one discrete play step `ξ^r ← min{u + r, max{ξ^r, u − r}}`.
    pub fn play_update(&self, u_new: f64) -> Result<(Self, PlayUpdateReport)> {
        if !u_new.is_finite() {
            return Err(Error::NonFinite(u_new));
        }
        let u_old = self.input();
        if u_new == u_old {
            return Ok((
                self.clone(),
                PlayUpdateReport {
                    moved_depth: 0.0,
                    direction: Direction::None,
                },
            ));
        }
        let (corners, depth, direction) = if u_new > u_old {
            let (c, d) = raise(&self.corners, u_new);
            (c, d, Direction::Ascending)
        } else {
            let neg: Vec<_> = self.corners.iter().map(|&(r, v)| (r, -v)).collect();
            let (c, d) = raise(&neg, -u_new);
            (
                c.into_iter().map(|(r, v)| (r, -v)).collect(),
                d,
                Direction::Descending,
            )
        };
        let rgrid = self.rgrid.as_ref().map(|g| RGrid {
            thresholds: g.thresholds.clone(),
            values: g
                .thresholds
                .iter()
                .zip(&g.values)
                .map(|(&r, &xi)| (u_new + r).min(xi.max(u_new - r)))
                .collect(),
        });
        let mut curve = Self {
            corners,
            support: self.support.max(u_new.abs()),
            rgrid,
        };
        curve.normalize();
        Ok((
            curve,
            PlayUpdateReport {
                moved_depth: depth,
                direction,
            },
        ))
    }

    /// Smallest threshold at which the clipping cone from `w` meets the curve:
    /// `min{r > 0 : w − r ≤ ξ^r}` ascending, `min{r > 0 : w + r ≥ ξ^r}`
    /// descending.
    pub fn memory_depth(&self, w: f64, branch: Branch) -> Result<f64> {
        if !w.is_finite() {
            return Err(Error::NonFinite(w));
        }
        let current = self.input();
        match branch {
            Branch::Ascending if w < current => Err(Error::WrongSide { w, current, branch }),
            Branch::Descending if w > current => Err(Error::WrongSide { w, current, branch }),
            _ if w == current => Ok(0.0),
            Branch::Ascending => Ok(crossing(&self.corners, w).0),
            Branch::Descending => {
                let neg: Vec<_> = self.corners.iter().map(|&(r, v)| (r, -v)).collect();
                Ok(crossing(&neg, -w).0)
            }
        }
    }

    /// Fictitious previous state for the backward step: with `λ(r) = u0 − s·r`
    /// on `(0, r0)`, returns the curve equal to `u0 − s(r + 2a)` on
    /// `[0, r0 − a]`, `u0 − s(2r0 − r)` on `(r0 − a, r0)` and `λ` beyond.
    pub fn backward_deform(&self, r0: f64, a: f64, sign: f64) -> Result<Self> {
        if sign < 0.0 {
            return Ok(self.negated().backward_deform(r0, a, 1.0)?.negated());
        }
        if !(a >= 0.0 && a <= 0.5 * r0) {
            return Err(Error::DeformOutOfRange { a, max: 0.5 * r0 });
        }
        let u0 = self.input();
        let tol = 1e-12 * (1.0 + u0.abs() + r0);
        let slope_ok = self
            .corners
            .iter()
            .filter(|c| c.0 <= r0)
            .map(|c| c.0)
            .chain(std::iter::once(r0))
            .all(|r| (self.value(r) - (u0 - r)).abs() <= tol);
        if !slope_ok {
            return Err(Error::SlopePrecondition { slope: -1.0, r0 });
        }
        if a == 0.0 {
            return Ok(self.clone());
        }
        let mut corners = vec![(0.0, u0 - 2.0 * a), (r0 - a, u0 - r0 - a), (r0, self.value(r0))];
        corners.extend(self.corners.iter().copied().filter(|c| c.0 > r0));
        let rgrid = self.rgrid.as_ref().map(|g| g.thresholds.clone());
        let mut curve = Self {
            corners,
            support: self.support.max((u0 - 2.0 * a).abs()),
            rgrid: None,
        };
        // the junction at r0 is kept even when collinear, so that the forward
        // update snaps back onto it exactly
        curve.dedup();
        curve.validate()?;
        match rgrid {
            Some(t) => curve.with_rgrid(t),
            None => Ok(curve),
        }
    }

    /// Writes the corner list as CSV with a `# lambda, support=<Λ>` header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# lambda, support={:.16e}", self.support)?;
        writeln!(out, "r,v")?;
        for &(r, v) in &self.corners {
            writeln!(out, "{r:.16e},{v:.16e}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# lambda, support={:.16e}", self.support);
        let _ = writeln!(s, "r,v");
        for &(r, v) in &self.corners {
            let _ = writeln!(s, "{r:.16e},{v:.16e}");
        }
        s
    }

    /// Parses the format produced by [`MemoryCurve::write_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut support = None;
        let mut corners = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(val) = rest.split("support=").nth(1) {
                    support = Some(val.trim().parse::<f64>().map_err(|e| {
                        Error::InvalidCurve(format!("bad support value {val:?}: {e}"))
                    })?);
                }
                continue;
            }
            if line.starts_with('r') {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |p: Option<&str>| -> Result<f64> {
                p.ok_or_else(|| Error::InvalidCurve(format!("short row {line:?}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidCurve(format!("bad row {line:?}: {e}")))
            };
            let r = parse(parts.next())?;
            let v = parse(parts.next())?;
            corners.push((r, v));
        }
        let support = support.unwrap_or_else(|| corners.last().map(|c| c.0).unwrap_or(0.0));
        Self::from_corners(corners, support)
    }

    /// Removes coincident and collinear corners and trailing zero runs.
    fn normalize(&mut self) {
        self.dedup();
        self.merge_collinear();
    }

    /// Whether both curves have the same corner structure with coordinates
    /// agreeing to `tol`.
    pub fn corners_match(&self, other: &Self, tol: f64) -> bool {
        self.corners.len() == other.corners.len()
            && self
                .corners
                .iter()
                .zip(&other.corners)
                .all(|(a, b)| (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol)
    }

    fn dedup(&mut self) {
        let c = &mut self.corners;
        // coincident thresholds: keep the later corner
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(c.len());
        for &p in c.iter() {
            match out.last() {
                Some(q) if p.0 - q.0 <= SNAP * (1.0 + q.0.abs()) => {
                    if out.len() > 1 {
                        *out.last_mut().unwrap() = p;
                    }
                }
                _ => out.push(p),
            }
        }
        while out.len() >= 2 && out[out.len() - 2].1 == 0.0 && out[out.len() - 1].1 == 0.0 {
            out.pop();
        }
        for p in out.iter_mut() {
            // no negative zeros from mirrored updates
            p.1 += 0.0;
        }
        *c = out;
    }

    fn merge_collinear(&mut self) {
        let out = std::mem::take(&mut self.corners);
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(out.len());
        for (i, &p) in out.iter().enumerate() {
            if i + 1 < out.len() && merged.len() >= 1 {
                let a = *merged.last().unwrap();
                let b = out[i + 1];
                let chord = a.1 + (b.1 - a.1) * (p.0 - a.0) / (b.0 - a.0);
                let scale = 1.0 + a.1.abs() + p.1.abs() + b.1.abs();
                if (p.1 - chord).abs() <= SNAP * scale {
                    continue;
                }
            }
            merged.push(p);
        }
        self.corners = merged;
    }
}

impl Default for MemoryCurve {
    fn default() -> Self {
        Self::virgin()
    }
}

/// Locates where `g(r) = u − r − ξ(r)` first reaches zero, for `u > ξ(0)`.
///
/// Returns the crossing threshold, the index of the first corner kept
/// unchanged, and whether the crossing coincides with that corner.
fn crossing(corners: &[(f64, f64)], u: f64) -> (f64, usize, bool) {
    let tol = SNAP * (1.0 + u.abs());
    for k in 1..corners.len() {
        let (rb, vb) = corners[k];
        let g = u - rb - vb;
        if g <= tol * (1.0 + rb) {
            if g >= -tol * (1.0 + rb) {
                return (rb, k, true);
            }
            let (ra, va) = corners[k - 1];
            let s = (vb - va) / (rb - ra);
            if 1.0 + s <= f64::MIN_POSITIVE {
                return (rb, k, true);
            }
            let intercept = va - s * ra;
            let r = (u - intercept) / (1.0 + s);
            if r >= rb {
                return (rb, k, true);
            }
            return (r.max(ra), k, false);
        }
    }
    // crossing on the zero tail
    let last = corners.len();
    (u, last, false)
}

/// Ascending update of a corner list to input `u > ξ(0)`.
fn raise(corners: &[(f64, f64)], u: f64) -> (Vec<(f64, f64)>, f64) {
    let (depth, keep, on_corner) = crossing(corners, u);
    let mut out = Vec::with_capacity(corners.len() + 2);
    out.push((0.0, u));
    if !on_corner && depth > 0.0 {
        let v = if keep == corners.len() { 0.0 } else { u - depth };
        out.push((depth, v));
    }
    out.extend_from_slice(&corners[keep.min(corners.len())..]);
    (out, depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_oracle(prev: &MemoryCurve, u: f64, r: f64) -> f64 {
        (u + r).min(prev.value(r).max(u - r))
    }

    #[test]
    fn virgin_to_two() {
        let (c, rep) = MemoryCurve::virgin().play_update(2.0).unwrap();
        assert_eq!(c.eval(1.0).unwrap(), 1.0);
        assert_eq!(c.corners(), &[(0.0, 2.0), (2.0, 0.0)]);
        assert_eq!(rep.direction, Direction::Ascending);
        assert_eq!(rep.moved_depth, 2.0);
        assert_eq!(c.support_radius(), 2.0);
    }

    #[test]
    fn repeated_input_is_idempotent() {
        let c = MemoryCurve::saturated(2.0);
        let (d, rep) = c.play_update(2.0).unwrap();
        assert_eq!(c, d);
        assert_eq!(rep.direction, Direction::None);
    }

    #[test]
    fn descend_to_zero_matches_dense_oracle() {
        let prev = MemoryCurve::saturated(2.0);
        let (c, rep) = prev.play_update(0.0).unwrap();
        assert_eq!(rep.direction, Direction::Descending);
        for k in 0..=3000 {
            let r = k as f64 * 1e-3;
            let want = dense_oracle(&prev, 0.0, r);
            assert!((c.value(r) - want).abs() <= 1e-15, "r = {r}");
        }
        assert_eq!(c.value(0.5), 0.5);
        assert_eq!(c.value(1.5), 0.5);
        assert_eq!(c.value(2.5), 0.0);
    }

    #[test]
    fn eval_examples() {
        let v = MemoryCurve::virgin();
        assert_eq!(v.eval(3.7).unwrap(), 0.0);
        let c = MemoryCurve::saturated(2.0);
        assert_eq!(c.eval(0.5).unwrap(), 1.5);
        assert_eq!(c.eval(5.0).unwrap(), 0.0);
        assert!(matches!(c.eval(-0.1), Err(Error::NegativeThreshold(_))));
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(MemoryCurve::virgin().play_update(f64::NAN).is_err());
        assert!(MemoryCurve::virgin().play_update(f64::INFINITY).is_err());
    }

    fn bisect_depth(c: &MemoryCurve, w: f64, branch: Branch) -> f64 {
        // smallest r with the defining inequality satisfied
        let holds = |r: f64| match branch {
            Branch::Ascending => w - r <= c.value(r),
            Branch::Descending => w + r >= c.value(r),
        };
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if holds(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    #[test]
    fn memory_depth_examples() {
        let c = MemoryCurve::saturated(1.0);
        let d = c.memory_depth(1.2, Branch::Ascending).unwrap();
        assert!((d - bisect_depth(&c, 1.2, Branch::Ascending)).abs() < 1e-12);
        assert!((d - 1.2).abs() < 1e-15);
        let d = c.memory_depth(0.5, Branch::Descending).unwrap();
        assert!((d - bisect_depth(&c, 0.5, Branch::Descending)).abs() < 1e-12);
        assert!((d - 0.25).abs() < 1e-15);
        assert_eq!(MemoryCurve::virgin().memory_depth(0.0, Branch::Ascending).unwrap(), 0.0);
        assert!(c.memory_depth(0.5, Branch::Ascending).is_err());
        assert!(c.memory_depth(1.5, Branch::Descending).is_err());
    }

    #[test]
    fn turning_examples() {
        let c = MemoryCurve::turning(0.0, 0.5, 1.0, 2.0).unwrap();
        assert_eq!(c.corners(), &[(0.0, 0.0), (0.5, -0.5), (1.0, 0.0)]);
        let c = MemoryCurve::turning(1.0, 0.0, -1.0, 2.0).unwrap();
        assert_eq!(c.corners(), MemoryCurve::saturated(1.0).corners());
        let c = MemoryCurve::turning(1.5, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(c.corners(), &[(0.0, 1.5), (1.5, 0.0)]);
        for k in 0..=100 {
            let r = k as f64 * 0.01;
            assert!((c.value(r) - (1.5 - r)).abs() < 1e-15);
        }
        assert!(matches!(
            MemoryCurve::turning(1.5, 1.0, -1.0, 2.0),
            Err(Error::InfeasibleContinuation { .. })
        ));
    }

    #[test]
    fn saturated_examples() {
        assert_eq!(MemoryCurve::saturated(1.0).corners(), &[(0.0, 1.0), (1.0, 0.0)]);
        assert!(MemoryCurve::saturated(0.0).is_virgin());
        assert_eq!(MemoryCurve::saturated(2.5).eval(1.0).unwrap(), 1.5);
        assert_eq!(MemoryCurve::saturated(-1.0).eval(0.25).unwrap(), -0.75);
    }

    #[test]
    fn backward_deform_examples() {
        let lam = MemoryCurve::turning(0.0, 1.0, 1.0, 3.0).unwrap();
        assert_eq!(lam.backward_deform(1.0, 0.0, 1.0).unwrap(), lam);
        let lm1 = lam.backward_deform(1.0, 0.25, 1.0).unwrap();
        lm1.validate().unwrap();
        assert_eq!(lm1.value(0.0), -0.5);
        assert!((lm1.value(0.75) + 1.25).abs() < 1e-15);
        assert_eq!(lm1.value(1.0), -1.0);
        assert_eq!(lm1.value(1.0), lam.value(1.0));
        let (back, _) = lm1.play_update(0.0).unwrap();
        assert_eq!(back.corners(), lam.corners());
    }

    #[test]
    fn backward_deform_mirrored_and_degenerate() {
        let lam = MemoryCurve::turning(0.3, 0.8, -1.0, 3.0).unwrap();
        let lm1 = lam.backward_deform(0.8, 0.4, -1.0).unwrap();
        assert!((lm1.input() - 1.1).abs() < 1e-15);
        let (back, rep) = lm1.play_update(0.3).unwrap();
        assert_eq!(rep.direction, Direction::Descending);
        assert_eq!(back.corners(), lam.corners());
        assert!(lam.backward_deform(0.8, 0.5, -1.0).is_err());
        assert!(lam.backward_deform(0.8, 0.2, 1.0).is_err());
    }

    #[test]
    fn wiping_out() {
        let run = |seq: &[f64]| {
            seq.iter()
                .fold(MemoryCurve::virgin(), |c, &u| c.play_update(u).unwrap().0)
        };
        let long = run(&[-1.0, 2.0, 0.5, 1.0, 0.4]);
        let short = run(&[-1.0, 2.0, 0.4]);
        assert_eq!(long.corners(), short.corners());
    }

    #[test]
    fn csv_round_trip() {
        let c = MemoryCurve::turning(0.2, 0.7, -1.0, 2.0).unwrap();
        let s = c.to_csv_string();
        assert!(s.starts_with("# lambda, support="));
        let back = MemoryCurve::from_csv(&s).unwrap();
        assert_eq!(back.corners(), c.corners());
        assert_eq!(back.support_radius(), c.support_radius());
    }

    #[test]
    fn rejects_invalid_corner_lists() {
        assert!(MemoryCurve::from_corners(vec![(0.0, 1.0), (0.5, 0.0)], 1.0).is_err());
        assert!(MemoryCurve::from_corners(vec![(0.0, 1.0), (1.0, 0.0)], 0.5).is_err());
        assert!(MemoryCurve::from_corners(vec![(0.1, 1.0), (1.1, 0.0)], 2.0).is_err());
        assert!(MemoryCurve::from_corners(vec![(0.0, 1.0), (1.0, 0.5)], 2.0).is_err());
    }
}
