//! Robin–Laplace operator on structured grids, linear solves and the
//! per-step semilinear monotone solve.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::par;
use crate::play::MemoryCurve;
use crate::preisach::PreisachOperator;

/// `A = K + diag(b·w_∂)` with `K` the lumped-mass P1 stiffness, so that
/// `(Au, φ) = ∫∇u·∇φ + ∫_∂Ω b u φ` and `Δ_h u = −M⁻¹(Au − load)`.
#[derive(Debug, Clone)]
pub struct RobinOperator {
    n: usize,
    bw: usize,
    /// Sparse rows `(column, value)`, columns ascending.
    rows: Vec<Vec<(usize, f64)>>,
    mass: Vec<f64>,
    /// `b·w_∂` per node.
    robin: Vec<f64>,
}

fn stiffness_1d(n: usize, h: f64) -> Vec<[f64; 3]> {
    // (left, diag, right) per node
    (0..n)
        .map(|i| {
            let left = if i > 0 { -1.0 / h } else { 0.0 };
            let right = if i + 1 < n { -1.0 / h } else { 0.0 };
            [left, -(left + right), right]
        })
        .collect()
}

fn mass_1d(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

#[derive(Debug, Clone, Serialize)]
pub struct AssemblyReport {
    pub nodes: usize,
    pub symmetry_defect: f64,
    /// `(A1, 1)` and `∫_∂Ω b ds`.
    pub constant_form: f64,
    pub boundary_b_integral: f64,
    /// Max interior `|Δ_h x²-type quadratic − exact|`.
    pub quadratic_defect: f64,
    /// Max `|(Au, φ) − a(u, φ)|` over random pairs, relative.
    pub bilinear_defect: f64,
    pub linear_interior_residual: f64,
    pub passed: bool,
}

impl RobinOperator {
    pub fn assemble(grid: &Grid) -> Result<Self> {
        let n = grid.len();
        let [nx, ny] = grid.nodes();
        let [hx, hy] = grid.spacing();
        if n == 0 || !(hx > 0.0) {
            return Err(Error::Grid("degenerate grid".into()));
        }
        let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut add = |i: usize, j: usize, v: f64| {
            if v != 0.0 {
                *entries.entry((i, j)).or_insert(0.0) += v;
            }
        };
        let kx = stiffness_1d(nx, hx);
        if grid.dim() == 1 {
            for i in 0..nx {
                let [l, d, r] = kx[i];
                if i > 0 {
                    add(i, i - 1, l);
                }
                add(i, i, d);
                if i + 1 < nx {
                    add(i, i + 1, r);
                }
            }
        } else {
            let ky = stiffness_1d(ny, hy);
            let (mx, my) = (mass_1d(nx, hx), mass_1d(ny, hy));
            for j in 0..ny {
                for i in 0..nx {
                    let k = grid.index(i, j);
                    let [l, d, r] = kx[i];
                    if i > 0 {
                        add(k, k - 1, l * my[j]);
                    }
                    add(k, k, d * my[j]);
                    if i + 1 < nx {
                        add(k, k + 1, r * my[j]);
                    }
                    let [s, d, t] = ky[j];
                    if j > 0 {
                        add(k, k - nx, s * mx[i]);
                    }
                    add(k, k, d * mx[i]);
                    if j + 1 < ny {
                        add(k, k + nx, t * mx[i]);
                    }
                }
            }
        }
        let robin: Vec<f64> = grid
            .b()
            .iter()
            .zip(grid.boundary_weights())
            .map(|(b, w)| b * w)
            .collect();
        for (k, r) in robin.iter().enumerate() {
            add(k, k, *r);
        }
        let mut rows = vec![Vec::new(); n];
        let mut bw = 0;
        for ((i, j), v) in entries {
            bw = bw.max(i.abs_diff(j));
            rows[i].push((j, v));
        }
        Ok(Self {
            n,
            bw,
            rows,
            mass: grid.mass().to_vec(),
            robin,
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|(c, _)| *c == j)
            .map(|(_, v)| *v)
            .unwrap_or(0.0)
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|(j, v)| v * u[*j]).sum())
            .collect()
    }

    /// `(Au, φ)`.
    pub fn form(&self, u: &[f64], phi: &[f64]) -> f64 {
        self.apply(u).iter().zip(phi).map(|(a, b)| a * b).sum()
    }

    /// Boundary load `b·w_∂·u*`.
    pub fn load(&self, ustar: &[f64]) -> Vec<f64> {
        self.robin.iter().zip(ustar).map(|(r, u)| r * u).collect()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `Δ_h u = −M⁻¹(Au − load(u*))`, the Robin condition entering through the
    /// boundary rows.
    pub fn laplacian(&self, u: &[f64], ustar: &[f64]) -> Vec<f64> {
        let au = self.apply(u);
        let load = self.load(ustar);
        (0..self.n)
            .map(|k| -(au[k] - load[k]) / self.mass[k])
            .collect()
    }

    pub fn max_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                worst = worst.max((v - self.entry(j, i)).abs());
            }
        }
        worst
    }

    /// Band copy of `A + diag(extra)`.
    pub fn band(&self, extra: Option<&[f64]>) -> BandMatrix {
        let mut m = BandMatrix::zeros(self.n, self.bw);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                if j <= i {
                    m.add(i, j, v);
                }
            }
        }
        if let Some(d) = extra {
            m.add_diagonal(d);
        }
        m
    }

    /// Self-test of the assembled operator on the grid it was built from.
    pub fn check_assembly(&self, grid: &Grid) -> AssemblyReport {
        let n = self.n;
        let ones = vec![1.0; n];
        let constant_form = self.form(&ones, &ones);
        let bint = grid.boundary_b_integral();
        let dim = grid.dim();
        let interior = |k: usize| !grid.is_boundary(k);
        let q = grid.sample(|x, y| x * x + if dim == 2 { y * y } else { 0.0 });
        let zeros = vec![0.0; n];
        let lap = self.laplacian(&q, &zeros);
        let exact = 2.0 * dim as f64;
        let quadratic_defect = (0..n)
            .filter(|&k| interior(k))
            .map(|k| (lap[k] - exact).abs())
            .fold(0.0, f64::max);
        let lin = grid.sample(|x, y| x + 0.5 * y);
        let ku: Vec<f64> = self
            .apply(&lin)
            .iter()
            .zip(&self.robin)
            .zip(&lin)
            .map(|((a, r), u)| a - r * u)
            .collect();
        let linear_interior_residual = (0..n)
            .filter(|&k| interior(k))
            .map(|k| ku[k].abs())
            .fold(0.0, f64::max);
        let mut bilinear_defect: f64 = 0.0;
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..4 {
            let u: Vec<f64> = (0..n).map(|_| next()).collect();
            let phi: Vec<f64> = (0..n).map(|_| next()).collect();
            let direct = bilinear_form(grid, &u, &phi);
            let via = self.form(&u, &phi);
            bilinear_defect = bilinear_defect.max((direct - via).abs() / (1.0 + direct.abs()));
        }
        let symmetry_defect = self.max_symmetry_defect();
        let scale = 1.0 / grid.spacing()[0].powi(2);
        let passed = symmetry_defect == 0.0
            && (constant_form - bint).abs() <= 1e-12 * (1.0 + bint)
            && quadratic_defect <= 1e-9 * scale
            && linear_interior_residual <= 1e-9 * scale
            && bilinear_defect <= 1e-12;
        AssemblyReport {
            nodes: n,
            symmetry_defect,
            constant_form,
            boundary_b_integral: bint,
            quadratic_defect,
            bilinear_defect,
            linear_interior_residual,
            passed,
        }
    }
}

/// `∫∇u·∇φ + ∫_∂Ω b u φ` computed edge by edge, independently of the
/// assembled rows.
pub fn bilinear_form(grid: &Grid, u: &[f64], phi: &[f64]) -> f64 {
    let [nx, ny] = grid.nodes();
    let [hx, hy] = grid.spacing();
    let mut total = 0.0;
    if grid.dim() == 1 {
        for i in 0..nx - 1 {
            total += (u[i + 1] - u[i]) * (phi[i + 1] - phi[i]) / hx;
        }
    } else {
        let (mx, my) = (mass_1d(nx, hx), mass_1d(ny, hy));
        for j in 0..ny {
            for i in 0..nx - 1 {
                let (a, b) = (grid.index(i, j), grid.index(i + 1, j));
                total += my[j] * (u[b] - u[a]) * (phi[b] - phi[a]) / hx;
            }
        }
        for j in 0..ny - 1 {
            for i in 0..nx {
                let (a, b) = (grid.index(i, j), grid.index(i, j + 1));
                total += mx[i] * (u[b] - u[a]) * (phi[b] - phi[a]) / hy;
            }
        }
    }
    let uphi: Vec<f64> = u.iter().zip(phi).map(|(a, b)| a * b).collect();
    total + grid.boundary_integrate_b(&uphi)
}

/// Solves `(∇v, ∇φ) + ∫_∂Ω b (v − u*) φ = (h̃, φ)`.
pub fn solve_linear_robin(grid: &Grid, op: &RobinOperator, htilde: &[f64], ustar: &[f64]) -> Result<Field> {
    grid.check_field(htilde, "source")?;
    grid.check_field(ustar, "boundary data")?;
    if !(grid.boundary_b_integral() > 0.0) {
        return Err(Error::Singular("Robin coefficient vanishes on the whole boundary".into()));
    }
    let chol = op.band(None).cholesky()?;
    let load = op.load(ustar);
    let rhs: Vec<f64> = (0..grid.len())
        .map(|k| op.mass()[k] * htilde[k] + load[k])
        .collect();
    Ok(chol.solve(&rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 60,
        }
    }
}

/// One implicit step: find `u` with
/// `M(G̃(u) − G_prev)/τ + Au − load(u*) = M h`.
#[derive(Debug)]
pub struct StepProblem<'a> {
    pub grid: &'a Grid,
    pub op: &'a RobinOperator,
    pub preisach: &'a PreisachOperator,
    pub memory: &'a [MemoryCurve],
    pub g_prev: &'a [f64],
    pub tau: f64,
    pub h: &'a [f64],
    pub ustar: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct StepSolution {
    pub u: Field,
    /// `G̃(u)` nodewise.
    pub g: Field,
    pub iterations: usize,
    pub residual: f64,
}

impl StepProblem<'_> {
    fn g_eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        par::try_map_indices(u.len(), |k| {
            Ok(self.g_prev[k] + self.preisach.increment(&self.memory[k], u[k])?)
        })
    }

    fn derivative(&self, u: &[f64]) -> Result<Vec<f64>> {
        par::try_map_indices(u.len(), |k| {
            let d = self.preisach.nemytskii_derivative(&self.memory[k], u[k])?;
            if d < 0.0 {
                Err(Error::NegativeDerivative(d))
            } else {
                Ok(d)
            }
        })
    }

    /// Strong-form residual per node and its discrete `L²` norm.
    fn residual(&self, u: &[f64], g: &[f64], load: &[f64]) -> (Vec<f64>, f64) {
        let au = self.op.apply(u);
        let m = self.op.mass();
        let r: Vec<f64> = (0..u.len())
            .map(|k| (g[k] - self.g_prev[k]) / self.tau + (au[k] - load[k]) / m[k] - self.h[k])
            .collect();
        let norm = r.iter().zip(m).map(|(x, w)| w * x * x).sum::<f64>().sqrt();
        (r, norm)
    }

    pub fn solve(&self, guess: &[f64], settings: NewtonSettings) -> Result<StepSolution> {
        let n = self.grid.len();
        for (f, what) in [(guess, "initial guess"), (self.g_prev, "previous output"), (self.h, "source"), (self.ustar, "boundary data")] {
            self.grid.check_field(f, what)?;
        }
        if self.memory.len() != n {
            return Err(Error::Grid("memory field does not match grid".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {}", self.tau)));
        }
        let load = self.op.load(self.ustar);
        let m = self.op.mass();
        let scale = 1.0 + self.grid.integrate(&self.h.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
        let tol = settings.tol * scale;
        let mut u = guess.to_vec();
        let mut g = self.g_eval(&u)?;
        let (mut r, mut norm) = self.residual(&u, &g, &load);
        let mut iterations = 0;
        while norm > tol {
            if iterations >= settings.max_iter {
                return Err(Error::NewtonStagnation {
                    iterations,
                    residual: norm,
                });
            }
            iterations += 1;
            let d = self.derivative(&u)?;
            let diag: Vec<f64> = (0..n).map(|k| m[k] * d[k] / self.tau).collect();
            let chol = self.op.band(Some(&diag)).cholesky()?;
            let rhs: Vec<f64> = (0..n).map(|k| -m[k] * r[k]).collect();
            let delta = chol.solve(&rhs);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = (0..n).map(|k| u[k] + t * delta[k]).collect();
                let gt = self.g_eval(&trial)?;
                let (rt, nt) = self.residual(&trial, &gt, &load);
                if nt <= (1.0 - 1e-4 * t) * norm || nt <= tol {
                    u = trial;
                    g = gt;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return Err(Error::NewtonStagnation {
                    iterations,
                    residual: norm,
                });
            }
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NewtonStagnation {
                iterations,
                residual: f64::NAN,
            });
        }
        Ok(StepSolution {
            u,
            g,
            iterations,
            residual: norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityModel;

    fn line(n: usize) -> Grid {
        Grid::line(1.0, n).unwrap().with_b(|_, _| 1.0).unwrap()
    }

    #[test]
    fn assembly_self_test_passes() {
        for g in [
            line(17),
            Grid::rect(1.0, 2.0, 9, 7).unwrap().with_b(|x, _| 1.0 + x).unwrap(),
        ] {
            let op = RobinOperator::assemble(&g).unwrap();
            let rep = op.check_assembly(&g);
            assert!(rep.passed, "{rep:?}");
        }
        let g = line(11);
        let op = RobinOperator::assemble(&g).unwrap();
        assert!((op.form(&vec![1.0; 11], &vec![1.0; 11]) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn linear_robin_closed_form() {
        let g = line(257);
        let op = RobinOperator::assemble(&g).unwrap();
        let v = solve_linear_robin(&g, &op, &vec![1.0; g.len()], &vec![0.0; g.len()]).unwrap();
        for k in 0..g.len() {
            let x = g.coords(k)[0];
            assert!((v[k] - (-x * x / 2.0 + x / 2.0 + 0.5)).abs() < 1e-10);
        }
        assert!((v[128] - 0.625).abs() < 1e-10);
        let zero = solve_linear_robin(&g, &op, &vec![0.0; g.len()], &vec![0.0; g.len()]).unwrap();
        assert!(zero.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn singular_without_robin() {
        let g = Grid::line(1.0, 9).unwrap();
        let op = RobinOperator::assemble(&g).unwrap();
        assert!(matches!(
            solve_linear_robin(&g, &op, &vec![1.0; 9], &vec![0.0; 9]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn semilinear_step_is_unique_and_degenerates() {
        let g = line(33);
        let n = g.len();
        let op = RobinOperator::assemble(&g).unwrap();
        let h = g.sample(|x, _| (3.0 * x).sin() + 0.5);
        let ustar = vec![0.2; n];
        let memory: Vec<MemoryCurve> = (0..n).map(|k| MemoryCurve::saturated(0.3 * g.coords(k)[0])).collect();
        for d in [DensityModel::gaussian(1.0, 1.0, 2.0), DensityModel::constant(0.7, 1.5)] {
            let pre = PreisachOperator::new(d.clone());
            let g_prev: Vec<f64> = memory.iter().map(|c| pre.output(c)).collect();
            let prob = StepProblem {
                grid: &g,
                op: &op,
                preisach: &pre,
                memory: &memory,
                g_prev: &g_prev,
                tau: 0.05,
                h: &h,
                ustar: &ustar,
            };
            let a = prob.solve(&vec![0.0; n], NewtonSettings::default()).unwrap();
            let b = prob.solve(&vec![3.0; n], NewtonSettings::default()).unwrap();
            for k in 0..n {
                assert!((a.u[k] - b.u[k]).abs() < 1e-10);
            }
            let flat = PreisachOperator::new(d.scaled(0.0));
            let g0 = vec![0.0; n];
            let lin = StepProblem {
                preisach: &flat,
                g_prev: &g0,
                ..prob
            }
            .solve(&vec![1.0; n], NewtonSettings::default())
            .unwrap();
            let direct = solve_linear_robin(&g, &op, &h, &ustar).unwrap();
            for k in 0..n {
                assert!((lin.u[k] - direct[k]).abs() < 1e-10);
            }
        }
    }
}
