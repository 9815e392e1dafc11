//! Uniform structured grids on `[0, Lx]` and `[0, Lx] × [0, Ly]`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// Node fields are plain vectors indexed like the grid (`k = j·nx + i`).
pub type Field = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    /// Robin coefficient at boundary nodes (zero in the interior).
    b: Vec<f64>,
    /// Lumped (trapezoid) mass weights.
    mass: Vec<f64>,
    /// Trapezoid weights for `∫_∂Ω` (zero in the interior).
    bweight: Vec<f64>,
}

fn trapezoid(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

impl Grid {
    pub fn line(length: f64, nodes: usize) -> Result<Self> {
        Self::new(1, [length, 1.0], [nodes, 1])
    }

    pub fn rect(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(2, [lx, ly], [nx, ny])
    }

    pub fn new(dim: usize, extent: [f64; 2], nodes: [usize; 2]) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Grid(format!("dimension must be 1 or 2, got {dim}")));
        }
        let (nx, ny) = (nodes[0], if dim == 1 { 1 } else { nodes[1] });
        if nx < 3 || (dim == 2 && ny < 3) {
            return Err(Error::Grid("need at least 3 nodes per direction".into()));
        }
        let (lx, ly) = (extent[0], if dim == 1 { 0.0 } else { extent[1] });
        if !(lx.is_finite() && lx > 0.0) || (dim == 2 && !(ly.is_finite() && ly > 0.0)) {
            return Err(Error::Grid("extents must be positive and finite".into()));
        }
        let n = nx * ny;
        let hx = lx / (nx - 1) as f64;
        let (mass, bweight) = if dim == 1 {
            let mut bw = vec![0.0; n];
            bw[0] = 1.0;
            bw[n - 1] = 1.0;
            (trapezoid(nx, hx), bw)
        } else {
            let hy = ly / (ny - 1) as f64;
            let (wx, wy) = (trapezoid(nx, hx), trapezoid(ny, hy));
            let mut mass = vec![0.0; n];
            let mut bw = vec![0.0; n];
            for j in 0..ny {
                for i in 0..nx {
                    let k = j * nx + i;
                    mass[k] = wx[i] * wy[j];
                    if j == 0 || j == ny - 1 {
                        bw[k] += wx[i];
                    }
                    if i == 0 || i == nx - 1 {
                        bw[k] += wy[j];
                    }
                }
            }
            (mass, bw)
        };
        Ok(Self {
            dim,
            nx,
            ny,
            lx,
            ly,
            b: vec![0.0; n],
            mass,
            bweight,
        })
    }

    /// Sets `b` at boundary nodes from `f(x, y)`.
    pub fn with_b(mut self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        for k in 0..self.len() {
            if self.is_boundary(k) {
                let [x, y] = self.coords(k);
                let v = f(x, y);
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Grid(format!("b must be finite and >= 0, got {v} at ({x}, {y})")));
                }
                self.b[k] = v;
            }
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> [usize; 2] {
        [self.nx, self.ny]
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.lx, self.ly]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 2] {
        let hy = if self.dim == 1 { 0.0 } else { self.ly / (self.ny - 1) as f64 };
        [self.lx / (self.nx - 1) as f64, hy]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, k: usize) -> [f64; 2] {
        let [hx, hy] = self.spacing();
        let (i, j) = (k % self.nx, k / self.nx);
        [i as f64 * hx, j as f64 * hy]
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.bweight[k] > 0.0
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.bweight
    }

    /// `∫_∂Ω b ds`.
    pub fn boundary_b_integral(&self) -> f64 {
        self.b.iter().zip(&self.bweight).map(|(b, w)| b * w).sum()
    }

    /// `∫_Ω f` with the lumped weights.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.mass).map(|(v, w)| v * w).sum()
    }

    /// `∫_∂Ω b f ds`.
    pub fn boundary_integrate_b(&self, f: &[f64]) -> f64 {
        f.iter()
            .zip(&self.b)
            .zip(&self.bweight)
            .map(|((v, b), w)| v * b * w)
            .sum()
    }

    /// Nearest node to a point.
    pub fn nearest(&self, p: &[f64]) -> usize {
        let [hx, hy] = self.spacing();
        let i = ((p[0] / hx).round().max(0.0) as usize).min(self.nx - 1);
        let j = if self.dim == 2 {
            ((p.get(1).copied().unwrap_or(0.0) / hy).round().max(0.0) as usize).min(self.ny - 1)
        } else {
            0
        };
        self.index(i, j)
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        (0..self.len())
            .map(|k| {
                let [x, y] = self.coords(k);
                f(x, y)
            })
            .collect()
    }

    pub fn check_field(&self, f: &[f64], what: &str) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::Grid(format!("{what}: {} values for {} nodes", f.len(), self.len())));
        }
        Ok(())
    }

    /// Writes `x[,y],value` rows.
    pub fn write_field_csv<W: Write>(&self, values: &[f64], mut out: W) -> Result<()> {
        self.check_field(values, "field dump")?;
        if self.dim == 1 {
            writeln!(out, "x,value")?;
        } else {
            writeln!(out, "x,y,value")?;
        }
        for (k, v) in values.iter().enumerate() {
            let [x, y] = self.coords(k);
            if self.dim == 1 {
                writeln!(out, "{},{}", fmt_f64(x), fmt_f64(*v))?;
            } else {
                writeln!(out, "{},{},{}", fmt_f64(x), fmt_f64(y), fmt_f64(*v))?;
            }
        }
        Ok(())
    }

    /// Reads a field dump written by [`Grid::write_field_csv`] (or any
    /// `x[,y],value` table whose points are grid nodes).
    pub fn read_field_csv(&self, text: &str) -> Result<Field> {
        let mut out = vec![f64::NAN; self.len()];
        let [hx, hy] = self.spacing();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
                continue;
            }
            let parts: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("line {}: {e}", ln + 1)))?;
            if parts.len() != self.dim + 1 {
                return Err(Error::Config(format!("line {}: expected {} columns", ln + 1, self.dim + 1)));
            }
            let k = self.nearest(&parts[..self.dim]);
            let [x, y] = self.coords(k);
            if (x - parts[0]).abs() > 1e-9 * (1.0 + hx) || (self.dim == 2 && (y - parts[1]).abs() > 1e-9 * (1.0 + hy)) {
                return Err(Error::Config(format!("line {}: point is not a grid node", ln + 1)));
            }
            out[k] = parts[self.dim];
        }
        if out.iter().any(|v| v.is_nan()) {
            return Err(Error::Config("field table does not cover every grid node".into()));
        }
        Ok(out)
    }
}
