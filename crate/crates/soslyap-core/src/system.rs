//! Scalar parabolic systems `w_t = a w_xx + b w_x + c w` on `[0,1]`.

use crate::poly::{Poly, Var};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// `w(0) = 0`, `w_x(1) = u`.
    MixedDirichletNeumann,
    /// `w(0) = w(1) = 0`.
    DirichletDirichlet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeSystem {
    pub a: Poly,
    pub b: Poly,
    pub c: Poly,
    /// Lower bound on `a` over `[0,1]`.
    pub alpha: f64,
    pub bc: Boundary,
}

impl PdeSystem {
    /// Coefficients in `x`; `α` is computed from `a`.
    pub fn new(a: Poly, b: Poly, c: Poly, bc: Boundary) -> Result<Self, Error> {
        for p in [&a, &b, &c] {
            if p.vars().iter().any(|v| *v != Var::X) {
                return Err(Error::Invalid("coefficients must be univariate in x"));
            }
        }
        let alpha = min_on_unit(&a);
        if alpha <= 0.0 {
            return Err(Error::Invalid("diffusion coefficient must be positive on [0,1]"));
        }
        Ok(PdeSystem { a, b, c, alpha, bc })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self, Error> {
        if !(alpha > 0.0) || alpha > min_on_unit(&self.a) + 1e-12 {
            return Err(Error::Invalid("alpha must lie in (0, min a]"));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// `w_t = w_xx + λw`.
    pub fn heat(lambda: f64, bc: Boundary) -> Self {
        PdeSystem::new(Poly::constant(1.0), Poly::zero(), Poly::constant(lambda), bc)
            .expect("constant diffusion")
    }

    /// `a = x³-x²+2`, `b = 3x²-2x`, `c = -0.5x³+1.3x²-1.5x+0.7+λ`.
    pub fn cubic_example(lambda: f64) -> Self {
        PdeSystem::new(
            Poly::univariate(Var::X, &[2.0, 0.0, -1.0, 1.0]),
            Poly::univariate(Var::X, &[0.0, -2.0, 3.0]),
            Poly::univariate(Var::X, &[0.7 + lambda, -1.5, 1.3, -0.5]),
            Boundary::MixedDirichletNeumann,
        )
        .expect("positive diffusion")
    }

    /// Same system with `c` shifted by `λ`.
    pub fn shifted(&self, lambda: f64) -> Self {
        let mut s = self.clone();
        s.c = s.c.add(&Poly::constant(lambda));
        s
    }
}

/// Minimum over 1001 samples refined by golden-section search.
pub fn min_on_unit(p: &Poly) -> f64 {
    let f = |x: f64| p.eval1(x);
    let (mut best, mut arg) = (f64::INFINITY, 0.0);
    for k in 0..=1000 {
        let x = k as f64 / 1000.0;
        let v = f(x);
        if v < best {
            best = v;
            arg = x;
        }
    }
    let (mut lo, mut hi) = ((arg - 1e-3f64).max(0.0), (arg + 1e-3f64).min(1.0));
    let r = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    best.min(f1).min(f2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_of_examples() {
        assert_eq!(PdeSystem::heat(1.0, Boundary::MixedDirichletNeumann).alpha, 1.0);
        // x³-x²+2 has its minimum 2 - 4/27 at x = 2/3
        let s = PdeSystem::cubic_example(0.0);
        assert!((s.alpha - (2.0 - 4.0 / 27.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_diffusion() {
        let a = Poly::univariate(Var::X, &[-0.1, 1.0]);
        assert!(PdeSystem::new(a, Poly::zero(), Poly::zero(), Boundary::DirichletDirichlet).is_err());
    }
}
