//! Primal stability test and feasibility sweeps.

use alloc::vec::Vec;

use crate::gram::PolyTriple;
use crate::kernel::KernelTriple;
use crate::loi::{self, AffineTriple, Backend, FeasibilityProblem, SolveOutcome, Status};
use crate::poly::{Coef, Mono, Poly, Var};
use crate::system::{Boundary, PdeSystem};
use crate::Error;

use core::f64::consts::PI;

/// Output of the derivative map; `Q0_11` is a scalar, `Q0_12`, `Q0_22` and
/// `Q3` are polynomials in `x`, `Q1` and `Q2` in `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTuple<C: Coef = f64> {
    pub q0_11: C,
    pub q0_12: Poly<C>,
    pub q0_22: Poly<C>,
    pub q1: Poly<C>,
    pub q2: Poly<C>,
    pub q3: Poly<C>,
}

pub(crate) fn constant_part<C: Coef>(p: &Poly<C>) -> C {
    p.coeff(&Mono::ONE).cloned().unwrap_or_else(C::zero)
}

fn at(p: &Poly<f64>, x: f64) -> f64 {
    p.eval1(x)
}

/// `∂_v(∂_v(a K) - b K) + c K` with coefficients taken in `v`.
pub(crate) fn generator<C: Coef>(k: &Poly<C>, sys: &PdeSystem, v: Var) -> Poly<C> {
    let (a, b, c) = (sys.a.rename(Var::X, v), sys.b.rename(Var::X, v), sys.c.rename(Var::X, v));
    k.mul(&a)
        .differentiate(v)
        .sub(&k.mul(&b))
        .differentiate(v)
        .add(&k.mul(&c))
}

/// Wirtinger weight multiplying `αε` in `Q0_22`.
pub fn wirtinger_weight(bc: Boundary) -> f64 {
    match bc {
        Boundary::MixedDirichletNeumann => PI * PI / 2.0,
        Boundary::DirichletDirichlet => 2.0 * PI * PI,
    }
}

pub fn m_eps_map<C: Coef>(tri: &PolyTriple<C>, sys: &PdeSystem, epsilon: f64) -> QTuple<C> {
    let a1 = at(&sys.a, 1.0);
    let b1 = at(&sys.b, 1.0);
    let da1 = at(&sys.a.differentiate(Var::X), 1.0);
    let (m, k1, k2) = (&tri.m, &tri.k1, &tri.k2);

    let m1 = constant_part(&m.partial_eval(&[(Var::X, 1.0)]));
    let dm1 = constant_part(&m.differentiate(Var::X).partial_eval(&[(Var::X, 1.0)]));
    let mut q0_11 = m1.scaled(b1 - da1);
    q0_11.add_scaled(&dm1, -a1);

    let q0_12 = k1
        .partial_eval(&[(Var::X, 1.0)])
        .scale(b1 - da1)
        .sub(&k1.differentiate(Var::X).partial_eval(&[(Var::X, 1.0)]).scale(a1))
        .rename(Var::Y, Var::X);

    let diag = k1
        .sub(k2)
        .mul(&sys.a.scale(2.0))
        .differentiate(Var::X)
        .diagonal_restrict(Var::X, Var::Y);
    let wirt = Poly::term(Mono::ONE, C::from_f64(-wirtinger_weight(sys.bc) * sys.alpha * epsilon));
    let q0_22 = m
        .mul(&sys.a)
        .differentiate(Var::X)
        .sub(&m.mul(&sys.b))
        .differentiate(Var::X)
        .add(&m.mul(&sys.c).scale(2.0))
        .add(&diag)
        .add(&wirt);

    let q1 = generator(k1, sys, Var::X).add(&generator(k1, sys, Var::Y));
    let q2 = generator(k2, sys, Var::X).add(&generator(k2, sys, Var::Y));
    let q3 = k2
        .partial_eval(&[(Var::X, 0.0)])
        .rename(Var::Y, Var::X)
        .scale(-2.0 * at(&sys.a, 0.0));
    QTuple {
        q0_11,
        q0_12,
        q0_22,
        q1,
        q2,
        q3,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityOptions {
    pub d1: u16,
    pub d2: u16,
    pub epsilon: f64,
    pub delta: f64,
    /// Add `θ(1-θ)`-weighted Gram blocks to both memberships.
    pub interval: bool,
    /// Force `K1 = K2 = 0`.
    pub kernels_zero: bool,
    /// Certificate degrees; chosen by [`loi::auto_degrees`] when absent.
    pub cert_degrees: Option<(u16, u16)>,
}

impl StabilityOptions {
    pub fn new(d: u16, epsilon: f64, delta: f64) -> Self {
        StabilityOptions {
            d1: d,
            d2: d,
            epsilon,
            delta,
            interval: true,
            kernels_zero: false,
            cert_degrees: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub outcome: SolveOutcome,
    pub triple: Option<KernelTriple>,
    pub cert_degrees: (u16, u16),
}

/// `{-Q0_22 - 2δM, -Q1 - 2δK1, -Q2 - 2δK2}`.
fn decay_target(q: &QTuple<crate::Affine>, tri: &AffineTriple, delta: f64) -> AffineTriple {
    PolyTriple {
        m: q.q0_22.neg().add_scaled(&tri.m, -2.0 * delta),
        k1: q.q1.neg().add_scaled(&tri.k1, -2.0 * delta),
        k2: q.q2.neg().add_scaled(&tri.k2, -2.0 * delta),
    }
}

pub fn build_stability_problem(
    sys: &PdeSystem,
    opts: &StabilityOptions,
) -> Result<(FeasibilityProblem, AffineTriple, (u16, u16)), Error> {
    build_primal(sys, opts, true)
}

/// Primal conditions; without `boundary` the `Q0` boundary entries are left
/// free for output injection to cancel.
pub(crate) fn build_primal(
    sys: &PdeSystem,
    opts: &StabilityOptions,
    boundary: bool,
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
    let q = m_eps_map(&tri, sys, opts.epsilon);
    let target = decay_target(&q, &tri, opts.delta);
    let cd = opts
        .cert_degrees
        .unwrap_or_else(|| loi::auto_degrees(&target, (opts.d1, opts.d2), opts.interval));
    p.constrain_membership(&target, cd.0, cd.1, opts.interval)?;
    match sys.bc {
        _ if !boundary => {}
        Boundary::MixedDirichletNeumann => {
            p.constrain_poly_zero(&Poly::term(Mono::ONE, q.q0_11.clone()));
            p.constrain_poly_zero(&q.q0_12);
        }
        Boundary::DirichletDirichlet => {
            p.constrain_poly_zero(&tri.k1.partial_eval(&[(Var::X, 1.0)]));
        }
    }
    p.constrain_poly_zero(&tri.k2.partial_eval(&[(Var::X, 0.0)]));
    Ok((p, tri, cd))
}

/// Numeric triple from a solved problem, `None` unless feasible.
pub fn extract_triple(
    p: &FeasibilityProblem,
    tri: &AffineTriple,
    outcome: &SolveOutcome,
    opts: &StabilityOptions,
) -> Option<KernelTriple> {
    (outcome.status == Status::Feasible).then(|| {
        let t = p.instantiate(tri, &outcome.variables);
        KernelTriple {
            m: t.m,
            k1: t.k1,
            k2: t.k2,
            d1: opts.d1,
            d2: opts.d2,
            epsilon: opts.epsilon,
        }
    })
}

/// Search for a Lyapunov triple certifying decay rate `δ`.
pub fn stability_test(sys: &PdeSystem, opts: &StabilityOptions, backend: &dyn Backend) -> Result<Certificate, Error> {
    let (p, tri, cd) = build_stability_problem(sys, opts)?;
    let outcome = loi::solve(&p, backend);
    let triple = extract_triple(&p, &tri, &outcome, opts);
    Ok(Certificate {
        outcome,
        triple,
        cert_degrees: cd,
    })
}

/// Two-point boundary variant; `sys.bc` must be Dirichlet at both ends.
pub fn stability_test_dirichlet(sys: &PdeSystem, opts: &StabilityOptions, backend: &dyn Backend) -> Result<Certificate, Error> {
    if sys.bc != Boundary::DirichletDirichlet {
        return Err(Error::Invalid("system does not have Dirichlet conditions at both ends"));
    }
    stability_test(sys, opts, backend)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bisection {
    /// Largest parameter known feasible.
    pub value: f64,
    /// Every probe in evaluation order.
    pub probes: Vec<(f64, bool)>,
    /// A feasible probe was seen above an infeasible one.
    pub non_monotone: bool,
}

impl Bisection {
    fn update_monotone(&mut self) {
        let lowest_bad = self
            .probes
            .iter()
            .filter(|p| !p.1)
            .map(|p| p.0)
            .fold(f64::INFINITY, f64::min);
        self.non_monotone = self.probes.iter().any(|p| p.1 && p.0 > lowest_bad);
    }
}

/// Locate the feasibility boundary in `[lo, hi]` to width `tol`, assuming
/// feasibility is monotone decreasing in the parameter. `probe` evaluates a
/// batch of points; each round splits the bracket into `batch + 1` parts.
pub fn bisect(
    lo: f64,
    hi: f64,
    tol: f64,
    batch: usize,
    mut probe: impl FnMut(&[f64]) -> Vec<bool>,
) -> Result<Bisection, Error> {
    if !(hi > lo) {
        return Err(Error::BadBracket { lo, hi });
    }
    let mut out = Bisection {
        value: lo,
        probes: Vec::new(),
        non_monotone: false,
    };
    if hi - lo <= tol {
        let r = probe(&[lo, hi]);
        out.probes = alloc::vec![(lo, r[0]), (hi, r[1])];
        if !r[0] {
            return Err(Error::BadBracket { lo, hi });
        }
        out.value = if r[1] { hi } else { lo };
        return Ok(out);
    }
    let r = probe(&[lo, hi]);
    out.probes = alloc::vec![(lo, r[0]), (hi, r[1])];
    if !r[0] || r[1] {
        return Err(Error::BadBracket { lo, hi });
    }
    let (mut a, mut b) = (lo, hi);
    let batch = batch.max(1);
    while b - a > tol {
        let pts: Vec<f64> = (1..=batch)
            .map(|k| a + (b - a) * k as f64 / (batch + 1) as f64)
            .collect();
        let res = probe(&pts);
        for (x, ok) in pts.iter().zip(&res) {
            out.probes.push((*x, *ok));
        }
        // largest feasible point below the first infeasible one
        let first_bad = pts.iter().zip(&res).position(|(_, ok)| !ok);
        match first_bad {
            Some(0) => b = pts[0],
            Some(k) => {
                a = pts[k - 1];
                b = pts[k];
            }
            None => a = pts[batch - 1],
        }
    }
    out.value = a;
    out.update_monotone();
    Ok(out)
}

/// Largest `λ` in the bracket for which `sys` shifted by `λ` is certified.
/// Numerical failures count as infeasible.
pub fn lambda_sweep(
    sys: &PdeSystem,
    opts: &StabilityOptions,
    bracket: (f64, f64),
    tol: f64,
    backend: &dyn Backend,
) -> Result<Bisection, Error> {
    let mut err = None;
    let r = bisect(bracket.0, bracket.1, tol, 1, |pts| {
        pts.iter()
            .map(|&l| match stability_test(&sys.shifted(l), opts, backend) {
                Ok(c) => c.outcome.status == Status::Feasible,
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
