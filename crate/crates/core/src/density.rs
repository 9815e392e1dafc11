//! Preisach densities `ρ(r, v)` with closed-form primitives in `v`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold profile `α(r)`: a constant or a piecewise-linear table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaProfile {
    Constant(f64),
    /// `(r, α)` nodes, strictly increasing in `r`; constant extrapolation.
    Table(Vec<(f64, f64)>),
}

impl AlphaProfile {
    pub fn at(&self, r: f64) -> f64 {
        match self {
            AlphaProfile::Constant(a) => *a,
            AlphaProfile::Table(t) => {
                let k = t.partition_point(|p| p.0 <= r);
                if k == 0 {
                    t[0].1
                } else if k == t.len() {
                    t[t.len() - 1].1
                } else {
                    let (ra, aa) = t[k - 1];
                    let (rb, ab) = t[k];
                    aa + (ab - aa) * (r - ra) / (rb - ra)
                }
            }
        }
    }

    /// Minimum over `[a, b]` (exact for piecewise-linear tables).
    pub fn min_on(&self, a: f64, b: f64) -> f64 {
        match self {
            AlphaProfile::Constant(c) => *c,
            AlphaProfile::Table(t) => t
                .iter()
                .filter(|p| p.0 > a && p.0 < b)
                .map(|p| p.1)
                .fold(self.at(a).min(self.at(b)), f64::min),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            AlphaProfile::Constant(c) => *c,
            AlphaProfile::Table(t) => t.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        match self {
            AlphaProfile::Constant(_) => &[],
            AlphaProfile::Table(t) => t,
        }
    }

    /// Parses `r,alpha` CSV rows (a header line and `#` comments are skipped).
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = parse_rows(text, 2)?;
        let table: Vec<(f64, f64)> = rows.into_iter().map(|r| (r[0], r[1])).collect();
        if table.is_empty() {
            return Err(Error::InvalidDensity("empty alpha table".into()));
        }
        if table.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidDensity("alpha table thresholds not increasing".into()));
        }
        Ok(AlphaProfile::Table(table))
    }

    fn scaled(&self, s: f64) -> Self {
        match self {
            AlphaProfile::Constant(c) => AlphaProfile::Constant(c * s),
            AlphaProfile::Table(t) => AlphaProfile::Table(t.iter().map(|&(r, a)| (r, a * s)).collect()),
        }
    }
}

/// Tensor-product table `ρ(r_j, v_k)` with bilinear interpolation; zero
/// outside the `v` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub r: Vec<f64>,
    pub v: Vec<f64>,
    /// Row-major in `r`: `values[j * v.len() + k]`.
    pub values: Vec<f64>,
}

impl DensityTable {
    pub fn new(r: Vec<f64>, v: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if r.len() < 2 || v.len() < 2 || values.len() != r.len() * v.len() {
            return Err(Error::InvalidDensity("table shape mismatch".into()));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) || v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidDensity("table axes not increasing".into()));
        }
        if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidDensity("table values must be finite and >= 0".into()));
        }
        Ok(Self { r, v, values })
    }

    /// Parses `r,v,rho` rows covering a full tensor grid.
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = parse_rows(text, 3)?;
        let mut r: Vec<f64> = rows.iter().map(|x| x[0]).collect();
        let mut v: Vec<f64> = rows.iter().map(|x| x[1]).collect();
        r.sort_by(f64::total_cmp);
        r.dedup();
        v.sort_by(f64::total_cmp);
        v.dedup();
        let mut values = vec![f64::NAN; r.len() * v.len()];
        for row in &rows {
            let j = r.partition_point(|&x| x < row[0]);
            let k = v.partition_point(|&x| x < row[1]);
            values[j * v.len() + k] = row[2];
        }
        if values.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidDensity("table does not cover a full (r, v) grid".into()));
        }
        Self::new(r, v, values)
    }

    /// Row of `v`-node values interpolated linearly at threshold `r`.
    fn row_at(&self, r: f64) -> Vec<f64> {
        let nv = self.v.len();
        let j = self.r.partition_point(|&x| x <= r);
        if j == 0 {
            return self.values[..nv].to_vec();
        }
        if j == self.r.len() {
            return self.values[(j - 1) * nv..].to_vec();
        }
        let t = (r - self.r[j - 1]) / (self.r[j] - self.r[j - 1]);
        let lo = &self.values[(j - 1) * nv..j * nv];
        let hi = &self.values[j * nv..(j + 1) * nv];
        lo.iter().zip(hi).map(|(a, b)| a + t * (b - a)).collect()
    }

    fn rho(&self, r: f64, v: f64) -> f64 {
        if v < self.v[0] || v > self.v[self.v.len() - 1] {
            return 0.0;
        }
        let row = self.row_at(r);
        let k = self.v.partition_point(|&x| x <= v).clamp(1, self.v.len() - 1);
        let t = (v - self.v[k - 1]) / (self.v[k] - self.v[k - 1]);
        row[k - 1] + t * (row[k] - row[k - 1])
    }

    /// `∫_0^ξ ρ dv` and `∫_0^ξ vρ dv` at threshold `r`, exact for the
    /// piecewise-linear row.
    fn primitives(&self, r: f64, xi: f64) -> (f64, f64) {
        if xi == 0.0 {
            return (0.0, 0.0);
        }
        let row = self.row_at(r);
        let (lo, hi, sign) = if xi > 0.0 { (0.0, xi, 1.0) } else { (xi, 0.0, -1.0) };
        let (mut m0, mut m1) = (0.0, 0.0);
        for k in 1..self.v.len() {
            let (va, vb) = (self.v[k - 1], self.v[k]);
            let a = va.max(lo);
            let b = vb.min(hi);
            if b <= a {
                continue;
            }
            // ρ(v) = c0 + c1 v on this cell
            let c1 = (row[k] - row[k - 1]) / (vb - va);
            let c0 = row[k - 1] - c1 * va;
            m0 += c0 * (b - a) + 0.5 * c1 * (b * b - a * a);
            m1 += 0.5 * c0 * (b * b - a * a) + c1 * (b * b * b - a * a * a) / 3.0;
        }
        (sign * m0, sign * m1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    /// `ρ = α(r)` for `|v| < v_support` (Prandtl–Ishlinskii type).
    ConstantInV { v_support: f64 },
    /// `ρ = α(r)·exp(−β v²)`.
    GaussianDecay { beta: f64 },
    Tabulated(DensityTable),
}

/// Preisach density `ρ(r, v) = 0` for `r ≥ support_r`, plus the offset `Ḡ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    pub kind: DensityKind,
    pub alpha: AlphaProfile,
    pub gbar: f64,
    /// `Λ_ρ`: the density vanishes for thresholds beyond this radius.
    pub support_r: f64,
}

impl DensityModel {
    /// Prandtl–Ishlinskii density `ρ ≡ α` on `(0, support_r) × ℝ`.
    pub fn constant(alpha: f64, support_r: f64) -> Self {
        Self {
            kind: DensityKind::ConstantInV {
                v_support: f64::INFINITY,
            },
            alpha: AlphaProfile::Constant(alpha),
            gbar: 0.0,
            support_r,
        }
    }

    pub fn gaussian(alpha: f64, beta: f64, support_r: f64) -> Self {
        Self {
            kind: DensityKind::GaussianDecay { beta },
            alpha: AlphaProfile::Constant(alpha),
            gbar: 0.0,
            support_r,
        }
    }

    pub fn with_gbar(mut self, gbar: f64) -> Self {
        self.gbar = gbar;
        self
    }

    pub fn with_v_support(mut self, v_support: f64) -> Self {
        if let DensityKind::ConstantInV { v_support: vs } = &mut self.kind {
            *vs = v_support;
        }
        self
    }

    /// Same density multiplied by `s` (used for the degenerate limit `s → 0`).
    pub fn scaled(&self, s: f64) -> Self {
        let mut d = self.clone();
        d.alpha = self.alpha.scaled(s);
        d
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.support_r.is_finite() && self.support_r > 0.0) {
            return Err(Error::InvalidDensity(format!(
                "support radius must be positive and finite, got {}",
                self.support_r
            )));
        }
        if !self.gbar.is_finite() {
            return Err(Error::InvalidDensity("gbar must be finite".into()));
        }
        match &self.alpha {
            AlphaProfile::Constant(a) if !(a.is_finite() && *a >= 0.0) => {
                return Err(Error::InvalidDensity(format!("alpha must be >= 0, got {a}")));
            }
            AlphaProfile::Table(t) => {
                if t.is_empty() || t.iter().any(|p| !(p.1.is_finite() && p.1 >= 0.0)) {
                    return Err(Error::InvalidDensity("alpha table values must be >= 0".into()));
                }
                if t.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidDensity("alpha table not increasing".into()));
                }
            }
            _ => {}
        }
        match &self.kind {
            DensityKind::ConstantInV { v_support } if !(*v_support > 0.0) => Err(
                Error::InvalidDensity(format!("v_support must be positive, got {v_support}")),
            ),
            DensityKind::GaussianDecay { beta } if !(beta.is_finite() && *beta >= 0.0) => {
                Err(Error::InvalidDensity(format!("beta must be >= 0, got {beta}")))
            }
            _ => Ok(()),
        }
    }

    /// Pointwise density.
    pub fn rho(&self, r: f64, v: f64) -> f64 {
        if !(0.0..self.support_r).contains(&r) {
            return 0.0;
        }
        let a = self.alpha.at(r);
        match &self.kind {
            DensityKind::ConstantInV { v_support } => {
                if v.abs() < *v_support {
                    a
                } else {
                    0.0
                }
            }
            DensityKind::GaussianDecay { beta } => a * (-beta * v * v).exp(),
            DensityKind::Tabulated(t) => a * t.rho(r, v),
        }
    }

    /// `ψ(r, ξ) = ∫_0^ξ ρ(r, v) dv`.
    pub fn psi(&self, r: f64, xi: f64) -> f64 {
        if !(0.0..self.support_r).contains(&r) || xi == 0.0 {
            return 0.0;
        }
        let a = self.alpha.at(r);
        match &self.kind {
            DensityKind::ConstantInV { v_support } => a * xi.clamp(-*v_support, *v_support),
            DensityKind::GaussianDecay { beta } => {
                if *beta == 0.0 {
                    a * xi
                } else {
                    let sb = beta.sqrt();
                    a * 0.5 * std::f64::consts::PI.sqrt() / sb * libm::erf(sb * xi)
                }
            }
            DensityKind::Tabulated(t) => a * t.primitives(r, xi).0,
        }
    }

    /// `Ψ(r, ξ) = ∫_0^ξ v ρ(r, v) dv`.
    pub fn psi_energy(&self, r: f64, xi: f64) -> f64 {
        if !(0.0..self.support_r).contains(&r) || xi == 0.0 {
            return 0.0;
        }
        let a = self.alpha.at(r);
        match &self.kind {
            DensityKind::ConstantInV { v_support } => {
                let x = xi.clamp(-*v_support, *v_support);
                0.5 * a * x * x
            }
            DensityKind::GaussianDecay { beta } => {
                if *beta == 0.0 {
                    0.5 * a * xi * xi
                } else {
                    a * (-(-beta * xi * xi).exp_m1()) / (2.0 * beta)
                }
            }
            DensityKind::Tabulated(t) => a * t.primitives(r, xi).1,
        }
    }

    /// Upper bound `ρ₁ ≥ sup ρ`.
    pub fn rho1(&self) -> f64 {
        let peak = match &self.kind {
            DensityKind::ConstantInV { .. } | DensityKind::GaussianDecay { .. } => 1.0,
            DensityKind::Tabulated(t) => t.values.iter().copied().fold(0.0, f64::max),
        };
        self.alpha.max() * peak
    }

    /// `ρ₀(U)`: infimum of `ρ` over `(0, min(U, Λ_ρ)) × (−U, U)`.
    pub fn rho0(&self, u: f64) -> f64 {
        let r_hi = u.min(self.support_r);
        let amin = self.alpha.min_on(0.0, r_hi);
        match &self.kind {
            DensityKind::ConstantInV { v_support } => {
                if u <= *v_support {
                    amin
                } else {
                    0.0
                }
            }
            DensityKind::GaussianDecay { beta } => amin * (-beta * u * u).exp(),
            DensityKind::Tabulated(t) => {
                if u > t.v[t.v.len() - 1] || -u < t.v[0] {
                    return 0.0;
                }
                // bilinear: extrema on the nodes of the box and its edges
                let mut m = f64::INFINITY;
                let rs = t
                    .r
                    .iter()
                    .copied()
                    .filter(|&x| x < r_hi)
                    .chain([0.0, r_hi]);
                for r in rs {
                    for v in t.v.iter().copied().filter(|x| x.abs() < u).chain([-u, u]) {
                        m = m.min(self.alpha.at(r) * t.rho(r, v));
                    }
                }
                m
            }
        }
    }

    /// The function `φ` with `ρ_v = −φ(v) ρ`, when the family has one.
    pub fn phi(&self) -> Option<Phi> {
        match &self.kind {
            DensityKind::ConstantInV { .. } => Some(Phi::Linear(0.0)),
            DensityKind::GaussianDecay { beta } => Some(Phi::Linear(2.0 * beta)),
            DensityKind::Tabulated(_) => None,
        }
    }

    /// Breakpoints in `r` where the density is not smooth.
    pub(crate) fn r_breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.alpha.breakpoints().iter().map(|p| p.0).collect();
        if let DensityKind::Tabulated(t) = &self.kind {
            out.extend_from_slice(&t.r);
        }
        out.push(self.support_r);
        out
    }

    /// Values of `v` across which `ρ(r, ·)` is not smooth.
    pub(crate) fn v_breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            DensityKind::ConstantInV { v_support } if v_support.is_finite() => {
                vec![-*v_support, *v_support]
            }
            DensityKind::Tabulated(t) => t.v.clone(),
            _ => Vec::new(),
        }
    }

    /// Whether `ρ` is piecewise polynomial of low degree, so that Gauss rules
    /// on breakpoint-aligned pieces are exact.
    pub(crate) fn is_piecewise_polynomial(&self) -> bool {
        match &self.kind {
            DensityKind::GaussianDecay { beta } => *beta == 0.0,
            _ => true,
        }
    }

    /// Smoothness scale in `v` for non-polynomial families.
    pub(crate) fn v_scale(&self) -> f64 {
        match &self.kind {
            DensityKind::GaussianDecay { beta } if *beta > 0.0 => 1.0 / beta.sqrt(),
            _ => f64::INFINITY,
        }
    }
}

/// Odd nondecreasing `φ` from the decay identity `ρ_v = −φ(v)ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phi {
    /// `φ(v) = k v`.
    Linear(f64),
}

impl Phi {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Phi::Linear(k) => k * v,
        }
    }
}

fn parse_rows(text: &str, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < width {
            return Err(Error::InvalidDensity(format!("short row {line:?}")));
        }
        match fields[..width]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
        {
            Ok(v) => rows.push(v),
            // header line
            Err(_) if rows.is_empty() => continue,
            Err(e) => return Err(Error::InvalidDensity(format!("bad row {line:?}: {e}"))),
        }
    }
    Ok(rows)
}
