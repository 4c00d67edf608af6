//! Dual stability and boundary state-feedback synthesis.

use alloc::vec::Vec;

use crate::gram::PolyTriple;
use crate::kernel::{InverseMethod, KernelTriple};
use crate::loi::{self, AffineTriple, Backend, FeasibilityProblem, SolveOutcome, Status};
use crate::poly::{Coef, Mono, Poly, Var};
use crate::quad::Grid;
use crate::stability::{bisect, constant_part, wirtinger_weight, Bisection, StabilityOptions};
use crate::system::PdeSystem;
use crate::Error;

/// Output of the dual derivative map. `T0_12` is a polynomial in `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct TTuple<C: Coef = f64> {
    pub t0_11: C,
    pub t0_12: Poly<C>,
    pub t0_22: Poly<C>,
    pub t1: Poly<C>,
    pub t2: Poly<C>,
    pub t3: C,
    pub t4: C,
}

/// `a(v)∂²_v K + b(v)∂_v K + c(v)K`.
fn dual_generator<C: Coef>(k: &Poly<C>, sys: &PdeSystem, v: Var) -> Poly<C> {
    let (a, b, c) = (sys.a.rename(Var::X, v), sys.b.rename(Var::X, v), sys.c.rename(Var::X, v));
    let dk = k.differentiate(v);
    dk.differentiate(v).mul(&a).add(&dk.mul(&b)).add(&k.mul(&c))
}

fn value_at<C: Coef>(p: &Poly<C>, x: f64) -> C {
    constant_part(&p.partial_eval(&[(Var::X, x)]))
}

pub fn n_eps_map<C: Coef>(tri: &PolyTriple<C>, sys: &PdeSystem, epsilon: f64) -> TTuple<C> {
    let (a, b, c) = (&sys.a, &sys.b, &sys.c);
    let da = a.differentiate(Var::X);
    let (a0, a1) = (a.eval1(0.0), a.eval1(1.0));
    let (m, k1, k2) = (&tri.m, &tri.k1, &tri.k2);
    let dm = m.differentiate(Var::X);
    let shift = wirtinger_weight(sys.bc) * sys.alpha * epsilon;

    let mut t0_11 = value_at(m, 1.0).scaled(b.eval1(1.0) - da.eval1(1.0));
    t0_11.add_scaled(&value_at(&dm, 1.0), -a1);

    let t0_12 = k1
        .differentiate(Var::X)
        .partial_eval(&[(Var::X, 1.0)])
        .rename(Var::Y, Var::X)
        .scale(-a1);

    let diag = k1
        .sub(k2)
        .differentiate(Var::X)
        .scale(2.0)
        .diagonal_restrict(Var::X, Var::Y);
    let t0_22 = m
        .mul(&da.differentiate(Var::X).sub(&b.differentiate(Var::X)))
        .add(&dm.mul(b))
        .add(&m.mul(c).scale(2.0))
        .add(&dm.differentiate(Var::X).add(&diag).mul(a))
        .add(&Poly::term(Mono::ONE, C::from_f64(-shift)));

    let t1 = dual_generator(k1, sys, Var::X).add(&dual_generator(k1, sys, Var::Y));
    let t2 = dual_generator(k2, sys, Var::X).add(&dual_generator(k2, sys, Var::Y));

    let m0 = value_at(m, 0.0);
    let mut t3 = m0.scaled(da.eval1(0.0) - b.eval1(0.0));
    t3.add_scaled(&value_at(&dm, 0.0), -a0);
    t3.add_scaled(&C::from_f64(shift), 1.0);
    let t4 = m0.scaled(-2.0 * a0);
    TTuple {
        t0_11,
        t0_12,
        t0_22,
        t1,
        t2,
        t3,
        t4,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum DualMode {
    Stability,
    Synthesis,
}

fn build_dual(
    sys: &PdeSystem,
    opts: &StabilityOptions,
    mode: DualMode,
) -> Result<(FeasibilityProblem, AffineTriple, (u16, u16)), Error> {
    if !(opts.epsilon > 0.0) || !(opts.delta > 0.0) {
        return Err(Error::Invalid("epsilon and delta must be positive"));
    }
    let mut p = FeasibilityProblem::new();
    p.meta.epsilon = opts.epsilon;
    p.meta.delta = opts.delta;
    let (tri, _) = p.declare_triple(opts.d1, opts.d2, opts.epsilon, opts.interval);
    if opts.kernels_zero {
        p.constrain_poly_zero(&tri.k1);
    }
    let t = n_eps_map(&tri, sys, opts.epsilon);
    let target = PolyTriple {
        m: t.t0_22.neg().add_scaled(&tri.m, -2.0 * opts.delta),
        k1: t.t1.neg().add_scaled(&tri.k1, -2.0 * opts.delta),
        k2: t.t2.neg().add_scaled(&tri.k2, -2.0 * opts.delta),
    };
    let cd = opts
        .cert_degrees
        .unwrap_or_else(|| loi::auto_degrees(&target, (opts.d1, opts.d2), opts.interval));
    p.constrain_membership(&target, cd.0, cd.1, opts.interval)?;
    if mode == DualMode::Stability {
        p.constrain_poly_zero(&Poly::term(Mono::ONE, t.t0_11.clone()));
        p.constrain_poly_zero(&t.t0_12);
    }
    p.constrain_poly_zero(&tri.k2.partial_eval(&[(Var::X, 0.0)]));
    Ok((p, tri, cd))
}

fn numeric_triple(p: &FeasibilityProblem, tri: &AffineTriple, out: &SolveOutcome, opts: &StabilityOptions) -> KernelTriple {
    let t = p.instantiate(tri, &out.variables);
    KernelTriple {
        m: t.m,
        k1: t.k1,
        k2: t.k2,
        d1: opts.d1,
        d2: opts.d2,
        epsilon: opts.epsilon,
    }
}

/// Outcome of a dual-form solve.
#[derive(Clone, Debug)]
pub struct DualCertificate {
    pub outcome: SolveOutcome,
    pub triple: Option<KernelTriple>,
    pub cert_degrees: (u16, u16),
}

pub fn dual_stability_test(sys: &PdeSystem, opts: &StabilityOptions, backend: &dyn Backend) -> Result<DualCertificate, Error> {
    let (p, tri, cd) = build_dual(sys, opts, DualMode::Stability)?;
    let outcome = loi::solve(&p, backend);
    let triple = (outcome.status == Status::Feasible).then(|| numeric_triple(&p, &tri, &outcome, opts));
    Ok(DualCertificate {
        outcome,
        triple,
        cert_degrees: cd,
    })
}

/// `u = Σ row_j w(x_j)` on a fixed grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Feedback {
    pub grid: Grid,
    pub row: Vec<f64>,
    pub method: InverseMethod,
}

impl Feedback {
    pub fn apply(&self, w: &[f64]) -> f64 {
        self.row.iter().zip(w).map(|(a, b)| a * b).sum()
    }
}

/// Accepted relative residual of a grid inverse.
pub const INVERSE_ACCEPT: f64 = 1e-6;

/// Neumann-only inverse; divergence is an error.
pub fn strict_inverse(tri: &KernelTriple, n: usize) -> Result<crate::kernel::NeumannInverse, Error> {
    match tri.neumann_inverse(n, 200, 1e-10) {
        Ok(inv) if inv.residual <= INVERSE_ACCEPT => Ok(inv),
        Ok(inv) => Err(Error::InversionFailed { residual: inv.residual }),
        Err(Error::SeriesDiverging) => Err(Error::InversionFailed {
            residual: f64::INFINITY,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug)]
pub struct ControllerGains {
    pub sys: PdeSystem,
    pub p_c: KernelTriple,
    pub r1: f64,
    pub r2: Poly,
    pub delta: f64,
}

impl ControllerGains {
    /// Gains from a dual Lyapunov triple.
    pub fn from_triple(sys: &PdeSystem, p_c: KernelTriple, delta: f64) -> Self {
        let t = n_eps_map(&PolyTriple { m: p_c.m.clone(), k1: p_c.k1.clone(), k2: p_c.k2.clone() }, sys, p_c.epsilon);
        let a1 = sys.a.eval1(1.0);
        ControllerGains {
            sys: sys.clone(),
            r1: -t.t0_11 / (2.0 * a1),
            r2: t.t0_12.scale(-1.0 / a1),
            p_c,
            delta,
        }
    }

    /// `u = 𝒵 P⁻¹ w` realized on an `n`-node grid: first `y = P⁻¹w`, then
    /// `R1 y(1) + ∫ R2 y`.
    pub fn realize(&self, n: usize) -> Result<Feedback, Error> {
        let inv = self.p_c.grid_inverse(n, INVERSE_ACCEPT)?;
        let grid = inv.grid.clone();
        let q = &inv.matrix;
        let mut row = alloc::vec![0.0; n];
        for (j, r) in row.iter_mut().enumerate() {
            let mut acc = self.r1 * q[(n - 1, j)];
            for i in 0..n {
                acc += grid.weights[i] * self.r2.eval1(grid.nodes[i]) * q[(i, j)];
            }
            *r = acc;
        }
        Ok(Feedback {
            grid,
            row,
            method: inv.method,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub outcome: SolveOutcome,
    pub gains: Option<ControllerGains>,
    pub cert_degrees: (u16, u16),
}

/// Synthesis conditions; `static_variant` forces `K1 = K2 = 0`.
pub fn build_synthesis_problem(
    sys: &PdeSystem,
    opts: &StabilityOptions,
    static_variant: bool,
) -> Result<(FeasibilityProblem, AffineTriple, (u16, u16)), Error> {
    let mut o = opts.clone();
    o.kernels_zero |= static_variant;
    build_dual(sys, &o, DualMode::Synthesis)
}

/// Gains from a solved synthesis problem, `None` unless feasible.
pub fn extract_gains(
    sys: &PdeSystem,
    opts: &StabilityOptions,
    problem: &FeasibilityProblem,
    tri: &AffineTriple,
    outcome: &SolveOutcome,
) -> Option<ControllerGains> {
    (outcome.status == Status::Feasible)
        .then(|| ControllerGains::from_triple(sys, numeric_triple(problem, tri, outcome, opts), opts.delta))
}

pub fn synthesize_controller(
    sys: &PdeSystem,
    opts: &StabilityOptions,
    static_variant: bool,
    backend: &dyn Backend,
) -> Result<Synthesis, Error> {
    let (p, tri, cd) = build_synthesis_problem(sys, opts, static_variant)?;
    let outcome = loi::solve(&p, backend);
    let gains = extract_gains(sys, opts, &p, &tri, &outcome);
    Ok(Synthesis {
        outcome,
        gains,
        cert_degrees: cd,
    })
}

/// Largest `δ` in the bracket for which a controller exists.
pub fn delta_sweep(
    sys: &PdeSystem,
    opts: &StabilityOptions,
    bracket: (f64, f64),
    tol: f64,
    backend: &dyn Backend,
) -> Result<Bisection, Error> {
    let mut err = None;
    let r = bisect(bracket.0, bracket.1, tol, 1, |pts| {
        pts.iter()
            .map(|&d| {
                let mut o = opts.clone();
                o.delta = d;
                match synthesize_controller(sys, &o, false, backend) {
                    Ok(s) => s.outcome.status == Status::Feasible,
                    Err(e) => {
                        err = Some(e);
                        false
                    }
                }
            })
            .collect()
    });
    match err {
        Some(e) => Err(e),
        None => r,
    }
}

/// Largest `λ` shift for which a controller exists.
pub fn synthesis_lambda_sweep(
    sys: &PdeSystem,
    opts: &StabilityOptions,
    static_variant: bool,
    bracket: (f64, f64),
    tol: f64,
    backend: &dyn Backend,
) -> Result<Bisection, Error> {
    let mut err = None;
    let r = bisect(bracket.0, bracket.1, tol, 1, |pts| {
        pts.iter()
            .map(|&l| match synthesize_controller(&sys.shifted(l), opts, static_variant, backend) {
                Ok(s) => s.outcome.status == Status::Feasible,
                Err(e) => {
                    err = Some(e);
                    false
                }
            })
            .collect()
    });
    match err {
        Some(e) => Err(e),
        None => r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::m_eps_map;
    use crate::system::Boundary;
    use core::f64::consts::PI;

    #[test]
    fn constant_inputs_by_hand() {
        let tri = PolyTriple {
            m: Poly::constant(1.0),
            k1: Poly::zero(),
            k2: Poly::zero(),
        };
        let (lam, eps) = (0.4, 0.01);
        let t = n_eps_map(&tri, &PdeSystem::heat(lam, Boundary::MixedDirichletNeumann), eps);
        assert_eq!(t.t0_11, 0.0);
        assert!(t.t0_12.is_zero() && t.t1.is_zero() && t.t2.is_zero());
        assert!((constant_part(&t.t0_22) - (2.0 * lam - PI * PI / 2.0 * eps)).abs() < 1e-15);
        assert!((t.t3 - PI * PI / 2.0 * eps).abs() < 1e-15);
        assert_eq!(t.t4, -2.0);
    }

    #[test]
    fn agrees_with_primal_when_drift_free() {
        let sys = PdeSystem::new(
            Poly::constant(1.5),
            Poly::zero(),
            Poly::constant(-0.3),
            Boundary::MixedDirichletNeumann,
        )
        .unwrap();
        let tri = PolyTriple {
            m: Poly::univariate(Var::X, &[2.0, -0.5, 0.25, 0.1]),
            k1: Poly::zero(),
            k2: Poly::zero(),
        };
        let t = n_eps_map(&tri, &sys, 0.1);
        let q = m_eps_map(&tri, &sys, 0.1);
        assert!(t.t0_22.sub(&q.q0_22).max_abs_coef() < 1e-13);
    }

    #[test]
    fn gains_cancel_boundary_terms() {
        let sys = PdeSystem::cubic_example(1.0);
        let tri = KernelTriple {
            m: Poly::univariate(Var::X, &[1.0, 0.2, -0.1]),
            k1: Poly::from_terms([(Mono::xy(1, 1), 0.3), (Mono::xy(2, 0), -0.2)]),
            k2: Poly::from_terms([(Mono::xy(1, 1), 0.3), (Mono::xy(0, 2), -0.2)]),
            d1: 1,
            d2: 1,
            epsilon: 0.1,
        };
        let g = ControllerGains::from_triple(&sys, tri.clone(), 0.1);
        let t = n_eps_map(&PolyTriple { m: tri.m, k1: tri.k1, k2: tri.k2 }, &sys, 0.1);
        let a1 = sys.a.eval1(1.0);
        // boundary contribution T0_11 y1² + 2 y1 ∫T0_12 y plus 2 a(1) y1 𝒵y
        assert!((t.t0_11 + 2.0 * a1 * g.r1).abs() < 1e-12);
        assert!(t.t0_12.add(&g.r2.scale(a1)).max_abs_coef() < 1e-12);
    }
}
