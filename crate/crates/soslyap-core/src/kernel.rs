//! Multiplier-plus-kernel operators
//! `(Pw)(x) = M(x)w(x) + ∫_0^x K1(x,y)w(y)dy + ∫_x^1 K2(x,y)w(y)dy`
//! and their grid realizations.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::gram::GramCertificate;
use crate::poly::{Poly, Var};
use crate::quad::Grid;
use crate::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelTriple {
    pub m: Poly,
    pub k1: Poly,
    pub k2: Poly,
    pub d1: u16,
    pub d2: u16,
    pub epsilon: f64,
}

impl KernelTriple {
    pub fn new(m: Poly, k1: Poly, k2: Poly) -> Self {
        KernelTriple {
            m,
            k1,
            k2,
            d1: 0,
            d2: 0,
            epsilon: 0.0,
        }
    }

    pub fn identity() -> Self {
        Self::new(Poly::constant(1.0), Poly::zero(), Poly::zero())
    }

    /// `K1(x,y) - K2(y,x)`; zero for self-adjoint triples.
    pub fn adjoint_defect(&self) -> Poly {
        self.k1.sub(&self.k2.swap(Var::X, Var::Y))
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.adjoint_defect().max_abs_coef() < 1e-12
    }

    /// `P w` at the grid nodes.
    pub fn apply(&self, grid: &Grid, w: &[f64]) -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                let xi = grid.nodes[i];
                let mut acc = self.m.eval1(xi) * w[i];
                for (j, c) in grid.left_weights(i) {
                    acc += c * self.k1.eval2(xi, grid.nodes[j]) * w[j];
                }
                for (j, c) in grid.right_weights(i) {
                    acc += c * self.k2.eval2(xi, grid.nodes[j]) * w[j];
                }
                acc
            })
            .collect()
    }

    /// `⟨Pw, w⟩` by quadrature.
    pub fn quadratic_form(&self, grid: &Grid, w: &[f64]) -> f64 {
        grid.inner(&self.apply(grid, w), w)
    }

    pub fn discretize(&self, n: usize) -> DiscreteOperator {
        DiscreteOperator::from_triple(self, Grid::uniform(n))
    }

    pub fn discretize_on(&self, grid: &Grid) -> DiscreteOperator {
        DiscreteOperator::from_triple(self, grid.clone())
    }

    /// Minimum of `M` over 1001 samples of `[0,1]`.
    pub fn min_m(&self) -> f64 {
        (0..=1000)
            .map(|k| self.m.eval1(k as f64 / 1000.0))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_inverse_preconditions(&self) -> InversePreconditions {
        let mut max_k: f64 = 0.0;
        for i in 0..=100 {
            for j in 0..=100 {
                let (x, y) = (i as f64 / 100.0, j as f64 / 100.0);
                max_k = max_k
                    .max(libm::fabs(self.k1.eval2(x, y)))
                    .max(libm::fabs(self.k2.eval2(x, y)));
            }
        }
        let min_m = self.min_m();
        InversePreconditions {
            max_abs_kernel: max_k,
            min_m,
            small_gain: max_k < self.epsilon,
            m_positive: min_m > 0.0,
        }
    }

    /// Truncated series `Σ_{k≤K} (-T⁻¹S)^k T⁻¹` on an `n`-node grid.
    pub fn neumann_inverse(&self, n: usize, kmax: usize, tol: f64) -> Result<NeumannInverse, Error> {
        let min_m = self.min_m();
        if min_m <= 0.0 {
            return Err(Error::MNotPositive { min: min_m });
        }
        let op = self.discretize(n);
        let m = split_multiplier(self, &op);
        neumann_series(&op, &m, kmax, tol, &default_probes(&op.grid))
    }
}

/// Sufficient small-gain condition report; never blocks inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct InversePreconditions {
    pub max_abs_kernel: f64,
    pub min_m: f64,
    pub small_gain: bool,
    pub m_positive: bool,
}

/// Matrix realizing `w ↦ Pw` at grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteOperator {
    pub grid: Grid,
    pub matrix: DMatrix<f64>,
}

impl DiscreteOperator {
    pub fn from_triple(tri: &KernelTriple, grid: Grid) -> Self {
        let n = grid.len();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            let xi = grid.nodes[i];
            a[(i, i)] += tri.m.eval1(xi);
            for (j, c) in grid.left_weights(i) {
                a[(i, j)] += c * tri.k1.eval2(xi, grid.nodes[j]);
            }
            for (j, c) in grid.right_weights(i) {
                a[(i, j)] += c * tri.k2.eval2(xi, grid.nodes[j]);
            }
        }
        DiscreteOperator { grid, matrix: a }
    }

    pub fn identity(grid: Grid) -> Self {
        let n = grid.len();
        DiscreteOperator {
            grid,
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let v = &self.matrix * DVector::from_column_slice(w);
        v.as_slice().to_vec()
    }

    /// Largest entry of `W·A - Aᵀ·W` relative to the largest of `W·A`.
    pub fn weight_asymmetry(&self) -> f64 {
        let n = self.grid.len();
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let wa = self.grid.weights[i] * self.matrix[(i, j)];
                let aw = self.matrix[(j, i)] * self.grid.weights[j];
                num = num.max(libm::fabs(wa - aw));
                den = den.max(libm::fabs(wa));
            }
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

#[derive(Clone, Debug)]
pub struct NeumannInverse {
    pub op: DiscreteOperator,
    pub terms: usize,
    pub residual: f64,
    /// Residual after each partial sum, starting at `K = 0`.
    pub history: Vec<f64>,
}

/// Default probe set: `sin(5πx)/(x+1)` plus a few smooth functions.
pub fn default_probes(grid: &Grid) -> Vec<Vec<f64>> {
    use core::f64::consts::PI;
    alloc::vec![
        grid.sample(|x| libm::sin(5.0 * PI * x) / (x + 1.0)),
        grid.sample(|x| libm::cos(3.0 * x) + x * x),
        grid.sample(|x| libm::exp(-x) * libm::sin(2.0 * PI * x)),
    ]
}

/// Worst relative residual `‖P Q w - w‖ / ‖w‖` over probes.
fn probe_residual(p: &DMatrix<f64>, q: &DMatrix<f64>, grid: &Grid, probes: &[Vec<f64>]) -> f64 {
    let pq = p * q;
    probes
        .iter()
        .map(|w| {
            let v = &pq * DVector::from_column_slice(w);
            let r: Vec<f64> = v.iter().zip(w).map(|(a, b)| a - b).collect();
            grid.norm(&r) / grid.norm(w).max(1e-300)
        })
        .fold(0.0, f64::max)
}

/// Multiplier samples `M(x_i)` on the operator grid.
fn split_multiplier(tri: &KernelTriple, op: &DiscreteOperator) -> Vec<f64> {
    op.grid.nodes.iter().map(|&x| tri.m.eval1(x)).collect()
}

/// Series with `T = diag(M(x_i))` and `S = A - T`.
pub fn neumann_series(
    op: &DiscreteOperator,
    m: &[f64],
    kmax: usize,
    tol: f64,
    probes: &[Vec<f64>],
) -> Result<NeumannInverse, Error> {
    let n = op.grid.len();
    let tinv = DMatrix::from_diagonal(&DVector::from_iterator(n, m.iter().map(|v| 1.0 / v)));
    let mut s = op.matrix.clone();
    for i in 0..n {
        s[(i, i)] -= m[i];
    }
    let g = -(&tinv * &s);
    let mut term = tinv.clone();
    let mut sum = tinv;
    let mut history = alloc::vec![probe_residual(&op.matrix, &sum, &op.grid, probes)];
    let mut rising = 0;
    let mut k = 0;
    while k < kmax && history[k] > tol {
        term = &g * &term;
        sum += &term;
        k += 1;
        let r = probe_residual(&op.matrix, &sum, &op.grid, probes);
        if r > history[k - 1] {
            rising += 1;
            if rising >= 3 {
                return Err(Error::SeriesDiverging);
            }
        } else {
            rising = 0;
        }
        history.push(r);
    }
    Ok(NeumannInverse {
        op: DiscreteOperator {
            grid: op.grid.clone(),
            matrix: sum,
        },
        terms: k,
        residual: history[k],
        history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InverseMethod {
    Neumann { terms: usize },
    Dense,
}

/// Grid realization of `P⁻¹`.
#[derive(Clone, Debug)]
pub struct GridInverse {
    pub grid: Grid,
    pub matrix: DMatrix<f64>,
    pub residual: f64,
    pub method: InverseMethod,
}

impl KernelTriple {
    /// Neumann series when it converges to `accept`, otherwise a dense solve
    /// of the same grid operator.
    pub fn grid_inverse(&self, n: usize, accept: f64) -> Result<GridInverse, Error> {
        match self.neumann_inverse(n, 200, 1e-10) {
            Ok(inv) if inv.residual <= accept => {
                return Ok(GridInverse {
                    grid: inv.op.grid,
                    matrix: inv.op.matrix,
                    residual: inv.residual,
                    method: InverseMethod::Neumann { terms: inv.terms },
                })
            }
            Err(Error::MNotPositive { min }) => return Err(Error::MNotPositive { min }),
            _ => {}
        }
        let op = self.discretize(n);
        let inv = op
            .matrix
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::InversionFailed { residual: f64::INFINITY })?;
        let residual = probe_residual(&op.matrix, &inv, &op.grid, &default_probes(&op.grid));
        if !(residual <= accept) {
            return Err(Error::InversionFailed { residual });
        }
        Ok(GridInverse {
            grid: op.grid,
            matrix: inv,
            residual,
            method: InverseMethod::Dense,
        })
    }
}

/// Build a triple from a numeric Gram certificate.
pub fn build_from_gram(cert: &GramCertificate) -> Result<KernelTriple, Error> {
    cert.build()
}

/// A fixed member of the small-gain set with `d1 = d2 = 2`, `ε = 2`.
pub fn omega_222_preset() -> KernelTriple {
    let lay = crate::gram::GramLayout::new(2, 2);
    let n = lay.size();
    let mut u = DMatrix::zeros(n, n);
    for i in 0..n {
        u[(i, i)] = if i < lay.n1() { 2.5 } else { 0.15 };
    }
    // mild coupling between the multiplier and kernel blocks
    for i in 0..lay.n1() {
        let j = lay.n1() + i;
        u[(i, j)] = 0.1;
        u[(j, i)] = 0.1;
    }
    for k in 0..lay.n2() {
        let (p, q) = (lay.n1() + k, lay.n1() + lay.n2() + k);
        u[(p, q)] = 0.05;
        u[(q, p)] = 0.05;
    }
    let mut cert = GramCertificate::new(2, 2, 2.0, u);
    cert.epsilon = 2.0;
    cert.build().expect("preset degrees are within the cap")
}
