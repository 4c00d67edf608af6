//! Boundary-measured Luenberger observers and the observer-based controller.

use alloc::vec::Vec;

use crate::kernel::{InverseMethod, KernelTriple};
use crate::loi::{self, AffineTriple, Backend, FeasibilityProblem, SolveOutcome, Status};
use crate::poly::{Poly, Var};
use crate::quad::Grid;
use crate::stability::{build_primal, m_eps_map, StabilityOptions};
use crate::synthesis::{ControllerGains, Feedback, INVERSE_ACCEPT};
use crate::system::{Boundary, PdeSystem};
use crate::gram::PolyTriple;
use crate::Error;

/// Observer
/// `ŵ_t = Aŵ + 𝒪(ŵ(1) - w(1))`, `ŵ_x(1) = O1 (ŵ(1) - w(1)) + u`
/// with `𝒪 = P_o⁻¹𝒱` and `(𝒱r)(x) = v_kernel(x) r`.
#[derive(Clone, Debug)]
pub struct ObserverGains {
    pub sys: PdeSystem,
    pub p_o: KernelTriple,
    pub o1: f64,
    pub v_kernel: Poly,
    pub delta: f64,
}

/// `𝒪` on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub grid: Grid,
    pub gain: Vec<f64>,
    pub method: InverseMethod,
}

impl ObserverGains {
    pub fn from_triple(sys: &PdeSystem, p_o: KernelTriple, delta: f64) -> Self {
        let o1 = boundary_gain(sys, &p_o);
        let v_kernel = injection_kernel(sys, &p_o, o1);
        ObserverGains {
            sys: sys.clone(),
            p_o,
            o1,
            v_kernel,
            delta,
        }
    }

    /// `P_o⁻¹ v_kernel` at the nodes of an `n`-point grid.
    pub fn realize(&self, n: usize) -> Result<Injection, Error> {
        let inv = self.p_o.grid_inverse(n, INVERSE_ACCEPT)?;
        let v = inv.grid.sample(|x| self.v_kernel.eval1(x));
        let gain = (0..n)
            .map(|i| (0..n).map(|j| inv.matrix[(i, j)] * v[j]).sum())
            .collect();
        Ok(Injection {
            grid: inv.grid,
            gain,
            method: inv.method,
        })
    }
}

/// `O1 = ((a'(1) - b(1)) Mo(1) + a(1) Mo'(1)) / (2 a(1) Mo(1))`.
pub fn boundary_gain(sys: &PdeSystem, p_o: &KernelTriple) -> f64 {
    let a1 = sys.a.eval1(1.0);
    let da1 = sys.a.differentiate(Var::X).eval1(1.0);
    let m1 = p_o.m.eval1(1.0);
    let dm1 = p_o.m.differentiate(Var::X).eval1(1.0);
    ((da1 - sys.b.eval1(1.0)) * m1 + a1 * dm1) / (2.0 * a1 * m1)
}

/// `(a'(1) - O1 a(1) - b(1)) K1o(1,x) + a(1) ∂_x K1o(1,x)`.
pub fn injection_kernel(sys: &PdeSystem, p_o: &KernelTriple, o1: f64) -> Poly {
    let a1 = sys.a.eval1(1.0);
    let da1 = sys.a.differentiate(Var::X).eval1(1.0);
    let k = p_o.k1.partial_eval(&[(Var::X, 1.0)]).rename(Var::Y, Var::X);
    let dk = p_o
        .k1
        .differentiate(Var::X)
        .partial_eval(&[(Var::X, 1.0)])
        .rename(Var::Y, Var::X);
    k.scale(da1 - o1 * a1 - sys.b.eval1(1.0)).add(&dk.scale(a1))
}

#[derive(Clone, Debug)]
pub struct ObserverSynthesis {
    pub outcome: SolveOutcome,
    pub gains: Option<ObserverGains>,
    pub cert_degrees: (u16, u16),
}

/// Primal conditions on the error system with the boundary entries left to
/// `O1` and `𝒱`.
pub fn build_observer_problem(
    sys: &PdeSystem,
    opts: &StabilityOptions,
) -> Result<(FeasibilityProblem, AffineTriple, (u16, u16)), Error> {
    if sys.bc != Boundary::MixedDirichletNeumann {
        return Err(Error::Invalid("observer needs a Neumann boundary at x=1"));
    }
    build_primal(sys, opts, false)
}

/// Gains from a solved observer problem, `None` unless feasible.
pub fn extract_observer(
    sys: &PdeSystem,
    opts: &StabilityOptions,
    p: &FeasibilityProblem,
    tri: &AffineTriple,
    outcome: &SolveOutcome,
) -> Option<ObserverGains> {
    (outcome.status == Status::Feasible).then(|| {
        let t = p.instantiate(tri, &outcome.variables);
        let p_o = KernelTriple {
            m: t.m,
            k1: t.k1,
            k2: t.k2,
            d1: opts.d1,
            d2: opts.d2,
            epsilon: opts.epsilon,
        };
        ObserverGains::from_triple(sys, p_o, opts.delta)
    })
}

pub fn synthesize_observer(
    sys: &PdeSystem,
    opts: &StabilityOptions,
    backend: &dyn Backend,
) -> Result<ObserverSynthesis, Error> {
    let (p, tri, cd) = build_observer_problem(sys, opts)?;
    let outcome = loi::solve(&p, backend);
    let gains = extract_observer(sys, opts, &p, &tri, &outcome);
    Ok(ObserverSynthesis {
        outcome,
        gains,
        cert_degrees: cd,
    })
}

/// Boundary terms of the observer Lyapunov derivative after injection;
/// `(e(1)² coefficient, e(1)e(x) kernel)`, both zero for exact gains.
pub fn residual_boundary_terms(g: &ObserverGains) -> (f64, Poly) {
    let tri = PolyTriple {
        m: g.p_o.m.clone(),
        k1: g.p_o.k1.clone(),
        k2: g.p_o.k2.clone(),
    };
    let q = m_eps_map(&tri, &g.sys, g.p_o.epsilon);
    let a1 = g.sys.a.eval1(1.0);
    let m1 = g.p_o.m.eval1(1.0);
    let k1 = g.p_o.k1.partial_eval(&[(Var::X, 1.0)]).rename(Var::Y, Var::X);
    let s11 = q.q0_11 + 2.0 * a1 * m1 * g.o1;
    let s12 = q.q0_12.add(&k1.scale(a1 * g.o1)).add(&g.v_kernel);
    (s11, s12)
}

/// Plant with `u = Fŵ` coupled to the observer, both on one grid.
#[derive(Clone, Debug)]
pub struct OutputFeedback {
    pub sys: PdeSystem,
    pub feedback: Feedback,
    pub injection: Injection,
    pub o1: f64,
}

pub fn assemble_output_feedback(
    ctrl: &ControllerGains,
    obs: &ObserverGains,
    n: usize,
) -> Result<OutputFeedback, Error> {
    if ctrl.sys != obs.sys {
        return Err(Error::IncompatibleSystems);
    }
    Ok(OutputFeedback {
        sys: ctrl.sys.clone(),
        feedback: ctrl.realize(n)?,
        injection: obs.realize(n)?,
        o1: obs.o1,
    })
}
