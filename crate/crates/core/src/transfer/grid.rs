//! Chebyshev–Lobatto nodes on `[0,1]`, barycentric interpolation and
//! Clenshaw–Curtis quadrature.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 8;

/// Chebyshev–Lobatto grid with `n` nodes in increasing order, `x_0 = 0`,
/// `x_{n-1} = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebGrid {
    nodes: Vec<f64>,
    bary: Vec<f64>,
    cc: Vec<f64>,
}

impl ChebGrid {
    pub fn new(n: usize) -> Result<Arc<Self>> {
        if n < MIN_NODES {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {MIN_NODES} nodes, got {n}"
            )));
        }
        let m = (n - 1) as f64;
        let nodes = (0..n)
            .map(|j| {
                let s = (PI * j as f64 / (2.0 * m)).sin();
                s * s
            })
            .collect();
        let bary = (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();
        Ok(Arc::new(Self {
            nodes,
            bary,
            cc: clenshaw_curtis(n),
        }))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn barycentric_weights(&self) -> &[f64] {
        &self.bary
    }

    /// Clenshaw–Curtis weights for `∫_0^1`; they sum to 1.
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.cc
    }

    /// Index of the node equal to `x`, if any.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        self.nodes.iter().position(|&t| t == x)
    }

    /// Barycentric interpolation of node `values` at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&t, &b), &v) in self.nodes.iter().zip(&self.bary).zip(values) {
            let diff = x - t;
            if diff == 0.0 {
                return v;
            }
            let c = b / diff;
            num += c * v;
            den += c;
        }
        num / den
    }

    /// Lagrange basis values `ℓ_l(x)` for all `l`.
    pub fn lagrange_row(&self, x: f64) -> Vec<f64> {
        if let Some(k) = self.node_index(x) {
            let mut row = vec![0.0; self.len()];
            row[k] = 1.0;
            return row;
        }
        let mut row: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.bary)
            .map(|(&t, &b)| b / (x - t))
            .collect();
        let den: f64 = row.iter().sum();
        row.iter_mut().for_each(|r| *r /= den);
        row
    }
}

fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let m = n - 1;
    let half = m / 2;
    (0..n)
        .map(|j| {
            let theta = PI * j as f64 / m as f64;
            let mut s = 0.0;
            for k in 1..=half {
                let b = if 2 * k == m { 1.0 } else { 2.0 };
                s += b / (4.0 * (k * k) as f64 - 1.0) * (2.0 * k as f64 * theta).cos();
            }
            let c = if j == 0 || j == m { 1.0 } else { 2.0 };
            // halve for [0,1]
            0.5 * c / m as f64 * (1.0 - s)
        })
        .collect()
}

/// A function sampled at Chebyshev–Lobatto nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<ChebGrid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<ChebGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {}-node grid",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<ChebGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self { grid, values }
    }

    pub fn constant(grid: Arc<ChebGrid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<ChebGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at `x`; exact at nodes.
    pub fn eval(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `∫_0^1` by Clenshaw–Curtis.
    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.quadrature_weights())
            .map(|(v, w)| v * w)
            .sum()
    }

    /// Largest absolute node value.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
