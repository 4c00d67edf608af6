//! Sparse polynomials in up to three variables.
//!
//! Coefficients are generic so the same algebra serves numeric polynomials
//! (`Poly<f64>`) and polynomials whose coefficients are affine in decision
//! variables (`Poly<Affine>`, see [`crate::loi`]).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::Error;

/// Coefficients below this magnitude are dropped after every operation.
pub const DROP_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X,
    Y,
    Th,
}

impl Var {
    pub const ALL: [Var; 3] = [Var::X, Var::Y, Var::Th];

    #[inline]
    pub fn idx(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Th => "θ",
        }
    }
}

/// Exponent tuple over `(x, y, θ)`.
///
/// Ordered graded-lexicographically: total degree first, then larger powers
/// of earlier variables first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Mono(pub [u16; 3]);

impl Mono {
    pub const ONE: Mono = Mono([0, 0, 0]);

    pub fn var(v: Var, e: u16) -> Mono {
        let mut m = [0; 3];
        m[v.idx()] = e;
        Mono(m)
    }

    pub fn xy(i: u16, j: u16) -> Mono {
        Mono([i, j, 0])
    }

    #[inline]
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    #[inline]
    pub fn exp(&self, v: Var) -> u16 {
        self.0[v.idx()]
    }

    #[inline]
    pub fn with(mut self, v: Var, e: u16) -> Mono {
        self.0[v.idx()] = e;
        self
    }

    #[inline]
    pub fn mul(&self, o: &Mono) -> Mono {
        Mono([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }

    pub fn eval(&self, pt: &[f64; 3]) -> f64 {
        let mut r = 1.0;
        for k in 0..3 {
            r *= powi(pt[k], self.0[k] as i32);
        }
        r
    }
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
pub(crate) fn powi(x: f64, n: i32) -> f64 {
    let mut r = 1.0;
    for _ in 0..n {
        r *= x;
    }
    r
}

/// Coefficient ring used by [`Poly`].
pub trait Coef: Clone + PartialEq + fmt::Debug {
    fn zero() -> Self;
    fn from_f64(v: f64) -> Self;
    /// Negligible under the canonical-form tolerance.
    fn is_zero(&self) -> bool;
    fn add_scaled(&mut self, other: &Self, s: f64);
    fn scaled(&self, s: f64) -> Self;
    /// Drop negligible internal parts.
    fn prune(&mut self) {}
}

impl Coef for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn is_zero(&self) -> bool {
        libm::fabs(*self) < DROP_TOL
    }
    fn add_scaled(&mut self, other: &Self, s: f64) {
        *self += other * s;
    }
    fn scaled(&self, s: f64) -> Self {
        self * s
    }
}

#[derive(Clone, PartialEq)]
pub struct Poly<C = f64> {
    terms: BTreeMap<Mono, C>,
}

impl<C: Coef> Default for Poly<C> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<C: Coef> Poly<C> {
    pub fn zero() -> Self {
        Poly {
            terms: BTreeMap::new(),
        }
    }

    pub fn term(m: Mono, c: C) -> Self {
        let mut p = Self::zero();
        p.add_term(m, &c, 1.0);
        p.canonicalize();
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Mono, C)>>(it: I) -> Self {
        let mut p = Self::zero();
        for (m, c) in it {
            p.add_term(m, &c, 1.0);
        }
        p.canonicalize();
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &C)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Mono) -> Option<&C> {
        self.terms.get(m)
    }

    /// Variables with a nonzero exponent somewhere, in declaration order.
    pub fn vars(&self) -> Vec<Var> {
        Var::ALL
            .iter()
            .copied()
            .filter(|v| self.terms.keys().any(|m| m.exp(*v) > 0))
            .collect()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, v: Var) -> u16 {
        self.terms.keys().map(|m| m.exp(v)).max().unwrap_or(0)
    }

    /// Accumulate without canonicalizing; call [`Poly::canonicalize`] after a batch.
    pub(crate) fn add_term(&mut self, m: Mono, c: &C, s: f64) {
        self.terms
            .entry(m)
            .or_insert_with(C::zero)
            .add_scaled(c, s);
    }

    pub(crate) fn canonicalize(&mut self) {
        self.terms.retain(|_, c| {
            c.prune();
            !c.is_zero()
        });
    }

    pub fn add(&self, o: &Self) -> Self {
        self.add_scaled(o, 1.0)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add_scaled(o, -1.0)
    }

    /// `self + s·o`
    pub fn add_scaled(&self, o: &Self, s: f64) -> Self {
        let mut r = self.clone();
        for (m, c) in &o.terms {
            r.add_term(*m, c, s);
        }
        r.canonicalize();
        r
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut r = Self::zero();
        for (m, c) in &self.terms {
            r.terms.insert(*m, c.scaled(s));
        }
        r.canonicalize();
        r
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// Product with a numeric polynomial.
    pub fn mul(&self, q: &Poly<f64>) -> Self {
        let mut r = Self::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &q.terms {
                r.add_term(m1.mul(m2), c1, *c2);
            }
        }
        r.canonicalize();
        r
    }

    pub fn differentiate(&self, v: Var) -> Self {
        let mut r = Self::zero();
        for (m, c) in &self.terms {
            let e = m.exp(v);
            if e > 0 {
                r.add_term(m.with(v, e - 1), c, e as f64);
            }
        }
        r.canonicalize();
        r
    }

    /// Indefinite integral in `v` with zero constant.
    pub fn antiderivative(&self, v: Var) -> Self {
        let mut r = Self::zero();
        for (m, c) in &self.terms {
            let e = m.exp(v);
            r.add_term(m.with(v, e + 1), c, 1.0 / (e as f64 + 1.0));
        }
        r.canonicalize();
        r
    }

    /// Substitute `v := q`.
    pub fn subst(&self, v: Var, q: &Poly<f64>) -> Self {
        let mut pows: Vec<Poly<f64>> = alloc::vec![Poly::constant(1.0)];
        let mut r = Self::zero();
        for (m, c) in &self.terms {
            let e = m.exp(v) as usize;
            while pows.len() <= e {
                let next = pows[pows.len() - 1].mul(q);
                pows.push(next);
            }
            let rest = m.with(v, 0);
            for (m2, c2) in &pows[e].terms {
                r.add_term(rest.mul(m2), c, *c2);
            }
        }
        r.canonicalize();
        r
    }

    /// Definite integral in `v` between polynomial bounds free of `v`.
    pub fn integrate(&self, v: Var, lower: &Poly<f64>, upper: &Poly<f64>) -> Self {
        let f = self.antiderivative(v);
        f.subst(v, upper).sub(&f.subst(v, lower))
    }

    pub fn partial_eval(&self, bindings: &[(Var, f64)]) -> Self {
        let mut r = Self::zero();
        for (m, c) in &self.terms {
            let mut m2 = *m;
            let mut f = 1.0;
            for &(v, val) in bindings {
                f *= powi(val, m.exp(v) as i32);
                m2 = m2.with(v, 0);
            }
            r.add_term(m2, c, f);
        }
        r.canonicalize();
        r
    }

    /// Exchange two variables.
    pub fn swap(&self, a: Var, b: Var) -> Self {
        let mut r = Self::zero();
        for (m, c) in &self.terms {
            let mut m2 = *m;
            m2.0.swap(a.idx(), b.idx());
            r.terms.insert(m2, c.clone());
        }
        r
    }

    /// Rename `from` to `to`; `to` must not already occur.
    pub fn rename(&self, from: Var, to: Var) -> Self {
        self.subst(from, &Poly::monomial(to, 1))
    }

    /// Restrict to the diagonal `v2 = v1`.
    pub fn diagonal_restrict(&self, v1: Var, v2: Var) -> Self {
        self.subst(v2, &Poly::monomial(v1, 1))
    }

    pub fn eval_coef(&self, pt: &[f64; 3]) -> C {
        let mut r = C::zero();
        for (m, c) in &self.terms {
            r.add_scaled(c, m.eval(pt));
        }
        r
    }

    /// Coordinates with respect to `basis`.
    pub fn coefficients_in(&self, basis: &MonomialBasis) -> Result<Vec<C>, Error> {
        let mut out = alloc::vec![C::zero(); basis.len()];
        for (m, c) in &self.terms {
            match basis.index_of(m) {
                Some(i) => out[i] = c.clone(),
                None => return Err(Error::BasisTooSmall),
            }
        }
        Ok(out)
    }

    pub fn from_coefficients(basis: &MonomialBasis, coefs: &[C]) -> Self {
        Self::from_terms(basis.entries.iter().copied().zip(coefs.iter().cloned()))
    }

    pub fn map_coefs<D: Coef>(&self, f: impl Fn(&C) -> D) -> Poly<D> {
        let mut r = Poly::<D>::zero();
        for (m, c) in &self.terms {
            r.terms.insert(*m, f(c));
        }
        r.canonicalize();
        r
    }
}

impl Poly<f64> {
    pub fn constant(c: f64) -> Self {
        Self::term(Mono::ONE, c)
    }

    pub fn monomial(v: Var, e: u16) -> Self {
        Self::term(Mono::var(v, e), 1.0)
    }

    /// Ascending coefficients in one variable: `[c0, c1, ...]`.
    pub fn univariate(v: Var, coefs: &[f64]) -> Self {
        Self::from_terms(
            coefs
                .iter()
                .enumerate()
                .map(|(i, &c)| (Mono::var(v, i as u16), c)),
        )
    }

    /// Ascending coefficient list of a polynomial in `v` alone.
    pub fn to_univariate(&self, v: Var) -> Vec<f64> {
        let n = self.degree_in(v) as usize + 1;
        let mut out = alloc::vec![0.0; if self.is_zero() { 0 } else { n }];
        for (m, c) in &self.terms {
            out[m.exp(v) as usize] += *c;
        }
        out
    }

    pub fn eval(&self, pt: &[f64; 3]) -> f64 {
        self.eval_coef(pt)
    }

    pub fn eval1(&self, x: f64) -> f64 {
        self.eval(&[x, 0.0, 0.0])
    }

    pub fn eval2(&self, x: f64, y: f64) -> f64 {
        self.eval(&[x, y, 0.0])
    }

    pub fn mul_poly(&self, q: &Poly<f64>) -> Poly<f64> {
        self.mul(q)
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(libm::fabs(*c)))
    }
}

impl<C: Coef> fmt::Debug for Poly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{:?}", c)?;
            for v in Var::ALL {
                match m.exp(v) {
                    0 => {}
                    1 => write!(f, "·{}", v.name())?,
                    e => write!(f, "·{}^{}", v.name(), e)?,
                }
            }
        }
        Ok(())
    }
}

/// Monomial vector `Z_d` in one or two variables, graded-lex ordered.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialBasis {
    pub vars: Vec<Var>,
    pub degree_bound: u16,
    pub entries: Vec<Mono>,
}

impl MonomialBasis {
    /// All monomials in `vars` of total degree at most `d`.
    pub fn total_degree(vars: &[Var], d: u16) -> Self {
        let mut entries = Vec::new();
        collect(vars, d, Mono::ONE, &mut entries);
        entries.sort();
        entries.dedup();
        MonomialBasis {
            vars: vars.to_vec(),
            degree_bound: d,
            entries,
        }
    }

    pub fn univariate(v: Var, d: u16) -> Self {
        Self::total_degree(&[v], d)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, m: &Mono) -> Option<usize> {
        self.entries.binary_search(m).ok()
    }

    pub fn polys(&self) -> Vec<Poly<f64>> {
        self.entries.iter().map(|m| Poly::term(*m, 1.0)).collect()
    }
}

fn collect(vars: &[Var], d: u16, base: Mono, out: &mut Vec<Mono>) {
    match vars.split_first() {
        None => out.push(base),
        Some((v, rest)) => {
            for e in 0..=d {
                collect(rest, d - e, base.with(*v, e), out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Poly {
        Poly::monomial(Var::X, 1)
    }
    fn y() -> Poly {
        Poly::monomial(Var::Y, 1)
    }

    #[test]
    fn cancellation_and_identity() {
        let p = x().mul(&x()).add(&Poly::constant(1.0));
        assert_eq!(p.add(&Poly::constant(-1.0)), x().mul(&x()));
        assert_eq!(Poly::zero().add(&p), p);
        assert_eq!(x().add(&y()).add(&x().sub(&y())), x().scale(2.0));
    }

    #[test]
    fn products() {
        let one = Poly::constant(1.0);
        assert_eq!(
            one.add(&x()).mul(&one.sub(&x())),
            one.sub(&x().mul(&x()))
        );
        assert!(x().mul(&Poly::zero()).is_zero());
        let s = x().add(&y());
        let expect = x().mul(&x()).add(&x().mul(&y()).scale(2.0)).add(&y().mul(&y()));
        assert_eq!(s.mul(&s), expect);
    }

    #[test]
    fn derivatives() {
        assert_eq!(
            Poly::monomial(Var::X, 3).differentiate(Var::X),
            Poly::monomial(Var::X, 2).scale(3.0)
        );
        assert!(Poly::constant(4.0).differentiate(Var::X).is_zero());
        let p = x().mul(&x()).mul(&y());
        assert_eq!(p.differentiate(Var::X), x().mul(&y()).scale(2.0));
    }

    #[test]
    fn definite_integrals() {
        let th = Poly::monomial(Var::Th, 2);
        let r = th.integrate(Var::Th, &Poly::zero(), &y());
        assert_eq!(r, Poly::monomial(Var::Y, 3).scale(1.0 / 3.0));
        let one = Poly::constant(1.0);
        assert_eq!(one.integrate(Var::Th, &y(), &x()), x().sub(&y()));
        let p = Poly::monomial(Var::Th, 1).mul(&x());
        assert_eq!(p.integrate(Var::Th, &Poly::zero(), &one), x().scale(0.5));
    }

    #[test]
    fn evaluation_and_diagonal() {
        let p = x().mul(&x()).add(&x().mul(&y()));
        assert_eq!(p.partial_eval(&[(Var::X, 1.0)]), Poly::constant(1.0).add(&y()));
        assert_eq!(p.partial_eval(&[]), p);
        let k = x().mul(&y());
        let r = k.partial_eval(&[(Var::X, 1.0)]).rename(Var::Y, Var::X);
        assert_eq!(r, x());
        let d = x().sub(&y());
        assert!(d.mul(&d).diagonal_restrict(Var::X, Var::Y).is_zero());
        assert_eq!(k.diagonal_restrict(Var::X, Var::Y), x().mul(&x()));
        let s = x().add(&y()).add(&Poly::constant(1.0));
        assert_eq!(
            s.diagonal_restrict(Var::X, Var::Y),
            x().scale(2.0).add(&Poly::constant(1.0))
        );
    }

    #[test]
    fn basis_coordinates() {
        let b = MonomialBasis::univariate(Var::X, 2);
        let p = Poly::constant(1.0).sub(&x().mul(&x()));
        assert_eq!(p.coefficients_in(&b).unwrap(), alloc::vec![1.0, 0.0, -1.0]);
        assert_eq!(Poly::<f64>::zero().coefficients_in(&b).unwrap(), alloc::vec![0.0; 3]);
        assert!(matches!(
            Poly::monomial(Var::X, 3).coefficients_in(&b),
            Err(Error::BasisTooSmall)
        ));
    }

    #[test]
    fn basis_sizes_and_order() {
        for d in 0..=10u16 {
            assert_eq!(MonomialBasis::univariate(Var::X, d).len(), d as usize + 1);
            let n = (d as usize + 1) * (d as usize + 2) / 2;
            assert_eq!(MonomialBasis::total_degree(&[Var::X, Var::Y], d).len(), n);
        }
        let b = MonomialBasis::total_degree(&[Var::X, Var::Y], 2);
        let e: Vec<_> = b.entries.iter().map(|m| (m.0[0], m.0[1])).collect();
        assert_eq!(e, alloc::vec![(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn tiny_terms_are_dropped() {
        let p = Poly::constant(1.0).add(&x().scale(1e-16));
        assert_eq!(p.len(), 1);
    }
}
