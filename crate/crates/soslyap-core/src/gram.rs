//! Gram-matrix parameterization of positive multiplier-plus-kernel operators.
//!
//! With `h(θ) = [Z1(θ)w(θ); ∫_0^θ Z2(θ,x)w(x)dx; ∫_θ^1 Z2(θ,x)w(x)dx]` the
//! quadratic form `∫_0^1 g(θ) h(θ)ᵀ U h(θ) dθ` equals `⟨Pw, w⟩` for the triple
//! built here. `g ≡ 1` gives the plain parameterization; `g = θ(1-θ)` is the
//! interval multiplier, nonnegative only on `[0,1]`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::kernel::KernelTriple;
use crate::poly::{Coef, Mono, MonomialBasis, Poly, Var};
use crate::Error;

/// Multiplier `θ(1-θ)` as ascending coefficients.
pub const INTERVAL: [f64; 3] = [0.0, 1.0, -1.0];
pub const UNIT: [f64; 1] = [1.0];

/// Basis sizes and block offsets for degrees `(d1, d2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramLayout {
    pub d1: u16,
    pub d2: u16,
    pub z1: MonomialBasis,
    pub z2: MonomialBasis,
}

impl GramLayout {
    pub fn new(d1: u16, d2: u16) -> Self {
        GramLayout {
            d1,
            d2,
            z1: MonomialBasis::univariate(Var::X, d1),
            z2: MonomialBasis::total_degree(&[Var::X, Var::Y], d2),
        }
    }

    pub fn n1(&self) -> usize {
        self.z1.len()
    }

    pub fn n2(&self) -> usize {
        self.z2.len()
    }

    /// Side length `|Z1| + 2|Z2|`.
    pub fn size(&self) -> usize {
        self.n1() + 2 * self.n2()
    }

    /// Default symbolic degree cap.
    pub fn degree_cap(&self) -> u32 {
        4 * self.d1.max(self.d2) as u32 + 4
    }
}

/// `(M, K1, K2)` with generic coefficients; `M` in `x`, kernels in `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyTriple<C: Coef> {
    pub m: Poly<C>,
    pub k1: Poly<C>,
    pub k2: Poly<C>,
}

impl<C: Coef> PolyTriple<C> {
    pub fn zero() -> Self {
        PolyTriple {
            m: Poly::zero(),
            k1: Poly::zero(),
            k2: Poly::zero(),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        PolyTriple {
            m: self.m.add(&o.m),
            k1: self.k1.add(&o.k1),
            k2: self.k2.add(&o.k2),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        PolyTriple {
            m: self.m.scale(s),
            k1: self.k1.scale(s),
            k2: self.k2.scale(s),
        }
    }
}

/// Build the triple from Gram entries `u(i, j)` and multiplier `g` (ascending
/// coefficients in θ).
pub fn gram_triple<C: Coef>(
    lay: &GramLayout,
    u: impl Fn(usize, usize) -> C,
    g: &[f64],
) -> PolyTriple<C> {
    let n1 = lay.n1();
    let n2 = lay.n2();
    let z1: Vec<u16> = lay.z1.entries.iter().map(|m| m.exp(Var::X)).collect();
    let z2: Vec<(u16, u16)> = lay
        .z2
        .entries
        .iter()
        .map(|m| (m.exp(Var::X), m.exp(Var::Y)))
        .collect();
    let gk: Vec<(u16, f64)> = g
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(k, c)| (k as u16, *c))
        .collect();

    let mut m = Poly::<C>::zero();
    for (i, &ei) in z1.iter().enumerate() {
        for (j, &ej) in z1.iter().enumerate() {
            let c = u(i, j);
            for &(k, gc) in &gk {
                m.add_term(Mono::xy(ei + ej + k, 0), &c, gc);
            }
        }
    }
    m.canonicalize();

    let mut k1 = Poly::<C>::zero();
    for (i, &ei) in z1.iter().enumerate() {
        for (q, &(a, b)) in z2.iter().enumerate() {
            // g(x) Z1(x)ᵀ U12 Z2(x,y)
            let c = u(i, n1 + q);
            for &(k, gc) in &gk {
                k1.add_term(Mono::xy(ei + a + k, b), &c, gc);
            }
            // g(y) Z2(y,x)ᵀ U31 Z1(y)
            let c = u(n1 + n2 + q, i);
            for &(k, gc) in &gk {
                k1.add_term(Mono::xy(b, a + ei + k), &c, gc);
            }
        }
    }
    k1.canonicalize();

    let x = Poly::monomial(Var::X, 1);
    let y = Poly::monomial(Var::Y, 1);
    let zero = Poly::zero();
    let one = Poly::constant(1.0);
    let regions: [(usize, usize, &Poly<f64>, &Poly<f64>); 3] = [
        (n1 + n2, n1 + n2, &zero, &y),
        (n1 + n2, n1, &y, &x),
        (n1, n1, &x, &one),
    ];
    for (ro, co, lo, hi) in regions {
        let mut integrand = Poly::<C>::zero();
        for (p, &(a, b)) in z2.iter().enumerate() {
            for (q, &(c2, e)) in z2.iter().enumerate() {
                let c = u(ro + p, co + q);
                for &(k, gc) in &gk {
                    integrand.add_term(Mono([b, e, a + c2 + k]), &c, gc);
                }
            }
        }
        integrand.canonicalize();
        k1 = k1.add(&integrand.integrate(Var::Th, lo, hi));
    }
    let k2 = k1.swap(Var::X, Var::Y);
    PolyTriple { m, k1, k2 }
}

/// Numeric Gram witness for membership of a triple in the positive set.
///
/// `u` is the full matrix with `U11` including the margin; `u - diag(εI,0,0)`
/// must be PSD. `interval` is an optional second PSD block weighted by
/// `θ(1-θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramCertificate {
    pub layout: GramLayout,
    pub epsilon: f64,
    pub u: DMatrix<f64>,
    pub interval: Option<DMatrix<f64>>,
}

impl GramCertificate {
    pub fn new(d1: u16, d2: u16, epsilon: f64, u: DMatrix<f64>) -> Self {
        GramCertificate {
            layout: GramLayout::new(d1, d2),
            epsilon,
            u,
            interval: None,
        }
    }

    /// Smallest eigenvalue of `u - diag(εI,0,0)` and of the interval block.
    pub fn min_eigenvalue(&self) -> f64 {
        let mut s = self.u.clone();
        for i in 0..self.layout.n1() {
            s[(i, i)] -= self.epsilon;
        }
        let mut me = crate::sdp::min_eig(&s);
        if let Some(v) = &self.interval {
            me = me.min(crate::sdp::min_eig(v));
        }
        me
    }

    pub fn build(&self) -> Result<KernelTriple, Error> {
        let lay = &self.layout;
        let n = lay.size();
        if self.u.nrows() != n || self.u.ncols() != n {
            return Err(Error::Invalid("Gram matrix size does not match degrees"));
        }
        let sym = |m: &DMatrix<f64>, i: usize, j: usize| 0.5 * (m[(i, j)] + m[(j, i)]);
        let mut t = gram_triple(lay, |i, j| sym(&self.u, i, j), &UNIT);
        if let Some(v) = &self.interval {
            t = t.add(&gram_triple(lay, |i, j| sym(v, i, j), &INTERVAL));
        }
        let deg = t.m.degree().max(t.k1.degree());
        if deg > lay.degree_cap() {
            return Err(Error::DegreeOverflow {
                degree: deg,
                cap: lay.degree_cap(),
            });
        }
        Ok(KernelTriple {
            m: t.m,
            k1: t.k1,
            k2: t.k2,
            d1: lay.d1,
            d2: lay.d2,
            epsilon: self.epsilon,
        })
    }
}
