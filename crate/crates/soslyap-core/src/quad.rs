//! Uniform-grid quadrature on `[0,1]`.
//!
//! Composite Simpson, with a 3/8 panel when the interval count is odd.
//! Partial integrals `∫_0^{x_i}` and `∫_{x_i}^1` use the same rules on the
//! sub-grid; a single interval falls back to a cubic rule that borrows the
//! two next nodes.

use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Grid {
    /// `n` equispaced nodes including both ends; `n >= 4`.
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 4, "grid needs at least 4 nodes");
        let h = 1.0 / (n - 1) as f64;
        let nodes = (0..n).map(|i| i as f64 * h).collect();
        let weights = segment_weights(n - 1, h);
        Grid { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    /// L2 norm on `[0,1]`.
    pub fn norm(&self, f: &[f64]) -> f64 {
        libm::sqrt(self.inner(f, f).max(0.0))
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// Weights `(node, weight)` for `∫_0^{x_i}`.
    pub fn left_weights(&self, i: usize) -> Vec<(usize, f64)> {
        let h = self.h();
        match i {
            0 => Vec::new(),
            1 => CUBIC_FIRST
                .iter()
                .enumerate()
                .map(|(k, c)| (k, c * h))
                .collect(),
            _ => segment_weights(i, h).into_iter().enumerate().collect(),
        }
    }

    /// Weights `(node, weight)` for `∫_{x_i}^1`.
    pub fn right_weights(&self, i: usize) -> Vec<(usize, f64)> {
        let n = self.len();
        let last = n - 1;
        let h = self.h();
        let m = last - i;
        match m {
            0 => Vec::new(),
            1 => CUBIC_FIRST
                .iter()
                .enumerate()
                .map(|(k, c)| (last - k, c * h))
                .collect(),
            _ => segment_weights(m, h)
                .into_iter()
                .enumerate()
                .map(|(k, w)| (i + k, w))
                .collect(),
        }
    }
}

/// `∫_{x0}^{x1}` from the cubic through `x0..x3`.
const CUBIC_FIRST: [f64; 4] = [9.0 / 24.0, 19.0 / 24.0, -5.0 / 24.0, 1.0 / 24.0];

/// Weights over `m + 1` nodes for `m >= 2` intervals of width `h`.
pub fn segment_weights(m: usize, h: f64) -> Vec<f64> {
    let mut w = alloc::vec![0.0; m + 1];
    if m == 1 {
        w[0] = 0.5 * h;
        w[1] = 0.5 * h;
        return w;
    }
    let simpson = if m % 2 == 0 { m } else { m - 3 };
    let mut k = 0;
    while k < simpson {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
        k += 2;
    }
    if simpson < m {
        let c = 3.0 * h / 8.0;
        w[k] += c;
        w[k + 1] += 3.0 * c;
        w[k + 2] += 3.0 * c;
        w[k + 3] += c;
    }
    w
}
