//! Affine expressions in scalar decision variables.

use alloc::vec::Vec;

use crate::poly::{Coef, DROP_TOL};

/// `constant + Σ coef·v[idx]`, terms sorted by index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(u32, f64)>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(idx: u32) -> Self {
        Affine {
            constant: 0.0,
            terms: alloc::vec![(idx, 1.0)],
        }
    }

    pub fn var_plus(idx: u32, c: f64) -> Self {
        Affine {
            constant: c,
            terms: alloc::vec![(idx, 1.0)],
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Value at a numeric assignment of the variables.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(i, c)| acc + c * x[i as usize])
    }
}

impl Coef for Affine {
    fn zero() -> Self {
        Affine::default()
    }

    fn from_f64(v: f64) -> Self {
        Affine::constant(v)
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty() && libm::fabs(self.constant) < DROP_TOL
    }

    fn add_scaled(&mut self, other: &Self, s: f64) {
        self.constant += other.constant * s;
        if other.terms.is_empty() {
            return;
        }
        if self.terms.is_empty() {
            self.terms = other.terms.iter().map(|&(i, c)| (i, c * s)).collect();
            return;
        }
        // fast path for appending a single larger index
        if other.terms.len() == 1 && other.terms[0].0 > self.terms[self.terms.len() - 1].0 {
            self.terms.push((other.terms[0].0, other.terms[0].1 * s));
            return;
        }
        let a = core::mem::take(&mut self.terms);
        let b = &other.terms;
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i].0 < b[j].0 {
                out.push(a[i]);
                i += 1;
            } else if a[i].0 > b[j].0 {
                out.push((b[j].0, b[j].1 * s));
                j += 1;
            } else {
                out.push((a[i].0, a[i].1 + b[j].1 * s));
                i += 1;
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend(b[j..].iter().map(|&(k, c)| (k, c * s)));
        self.terms = out;
    }

    fn scaled(&self, s: f64) -> Self {
        Affine {
            constant: self.constant * s,
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
        }
    }

    fn prune(&mut self) {
        self.terms.retain(|&(_, c)| libm::fabs(c) >= DROP_TOL);
        if libm::fabs(self.constant) < DROP_TOL {
            self.constant = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_keeps_order() {
        let mut a = Affine::var(3);
        a.add_scaled(&Affine::var(1), 2.0);
        a.add_scaled(&Affine::var_plus(3, 1.0), -1.0);
        a.prune();
        assert_eq!(a.terms, alloc::vec![(1, 2.0)]);
        assert_eq!(a.constant, -1.0);
        assert_eq!(a.eval(&[0.0, 5.0, 0.0, 0.0]), 9.0);
    }
}
