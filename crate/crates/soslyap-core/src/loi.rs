//! Compilation of operator memberships into semidefinite feasibility problems.
//!
//! Every Gram matrix becomes a PSD block whose upper triangle supplies scalar
//! decision variables. A block entry is `variable + shift`, where the shift
//! carries the `εI` margin on the multiplier part. Polynomial identities are
//! imposed coefficientwise as sparse linear equalities.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use nalgebra::DMatrix;

use crate::affine::Affine;
use crate::gram::{gram_triple, GramLayout, PolyTriple, INTERVAL, UNIT};
use crate::poly::{Mono, Poly, Var};
use crate::sdp::{self, IpmSettings, IpmStatus, SdpData, SymRow};
use crate::Error;

pub type AffineTriple = PolyTriple<Affine>;

pub const EQ_TOL: f64 = 1e-6;
pub const EIG_TOL: f64 = -1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct PsdBlock {
    pub size: usize,
    /// First scalar variable of the block.
    pub offset: u32,
    /// Constant added to each diagonal entry.
    pub shift: Vec<f64>,
}

impl PsdBlock {
    pub fn nvars(&self) -> usize {
        self.size * (self.size + 1) / 2
    }

    /// Variable index of entry `(i, j)`.
    pub fn var(&self, i: usize, j: usize) -> u32 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let n = self.size;
        self.offset + (i * n + j - i * (i + 1) / 2) as u32
    }

    /// Entry `(i, j)` as an affine expression.
    pub fn entry(&self, i: usize, j: usize) -> Affine {
        let s = if i == j { self.shift[i] } else { 0.0 };
        Affine::var_plus(self.var(i, j), s)
    }

    fn position(&self, v: u32) -> (usize, usize) {
        let mut k = (v - self.offset) as usize;
        let n = self.size;
        let mut i = 0;
        while k >= n - i {
            k -= n - i;
            i += 1;
        }
        (i, i + k)
    }

    /// Numeric matrix including shifts.
    pub fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.size;
        DMatrix::from_fn(n, n, |i, j| {
            x[self.var(i, j) as usize] + if i == j { self.shift[i] } else { 0.0 }
        })
    }
}

/// `Σ c·v = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Equality {
    pub terms: Vec<(u32, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProblemMeta {
    pub degrees: Vec<(u16, u16)>,
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeasibilityProblem {
    pub blocks: Vec<PsdBlock>,
    pub equalities: Vec<Equality>,
    pub meta: ProblemMeta,
}

/// Gram blocks behind one declared triple.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleHandle {
    pub layout: GramLayout,
    pub epsilon: f64,
    pub plain: usize,
    pub interval: Option<usize>,
}

impl FeasibilityProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nvars(&self) -> usize {
        self.blocks.iter().map(|b| b.nvars()).sum()
    }

    pub fn add_block(&mut self, size: usize, shift: Vec<f64>) -> usize {
        let offset = self.nvars() as u32;
        self.blocks.push(PsdBlock {
            size,
            offset,
            shift,
        });
        self.blocks.len() - 1
    }

    /// Fresh Gram variable(s) for `(d1, d2)` with margin `ε` on the `Z1` block.
    /// With `interval`, a second block weighted by `θ(1-θ)` is added.
    pub fn declare_triple(&mut self, d1: u16, d2: u16, epsilon: f64, interval: bool) -> (AffineTriple, TripleHandle) {
        let layout = GramLayout::new(d1, d2);
        let n = layout.size();
        let shift: Vec<f64> = (0..n).map(|i| if i < layout.n1() { epsilon } else { 0.0 }).collect();
        let plain = self.add_block(n, shift);
        let blk = self.blocks[plain].clone();
        let mut tri = gram_triple(&layout, |i, j| blk.entry(i, j), &UNIT);
        let mut handle = TripleHandle {
            layout: layout.clone(),
            epsilon,
            plain,
            interval: None,
        };
        if interval {
            let id = self.add_block(n, alloc::vec![0.0; n]);
            let blk = self.blocks[id].clone();
            tri = tri.add(&gram_triple(&layout, |i, j| blk.entry(i, j), &INTERVAL));
            handle.interval = Some(id);
        }
        self.meta.degrees.push((d1, d2));
        (tri, handle)
    }

    /// One equality per monomial coefficient of `p`.
    pub fn constrain_poly_zero(&mut self, p: &Poly<Affine>) {
        for (_, c) in p.terms() {
            self.equalities.push(Equality {
                terms: c.terms.iter().filter(|t| t.1 != 0.0).cloned().collect(),
                rhs: -c.constant,
            });
        }
    }

    /// Require `tri ∈ Ξ_{d1,d2,0}` through a fresh Gram certificate.
    pub fn constrain_membership(&mut self, tri: &AffineTriple, d1: u16, d2: u16, interval: bool) -> Result<TripleHandle, Error> {
        let span = gram_span(d1, d2, interval);
        let fits = |p: &Poly<Affine>, s: &BTreeSet<Mono>| p.terms().all(|(m, _)| s.contains(m));
        if !fits(&tri.m, &span.0) || !fits(&tri.k1, &span.1) || !fits(&tri.k2, &span.2) {
            return Err(Error::DegreeDeficit { d1, d2 });
        }
        let (w, handle) = self.declare_triple(d1, d2, 0.0, interval);
        self.constrain_poly_zero(&w.m.sub(&tri.m));
        self.constrain_poly_zero(&w.k1.sub(&tri.k1));
        if tri.k2 != tri.k1.swap(Var::X, Var::Y) {
            self.constrain_poly_zero(&w.k2.sub(&tri.k2));
        }
        Ok(handle)
    }

    pub fn instantiate(&self, tri: &AffineTriple, x: &[f64]) -> PolyTriple<f64> {
        PolyTriple {
            m: tri.m.map_coefs(|a| a.eval(x)),
            k1: tri.k1.map_coefs(|a| a.eval(x)),
            k2: tri.k2.map_coefs(|a| a.eval(x)),
        }
    }

    /// Block form `⟨A_r, X⟩ = b_r` with `X` the unshifted blocks.
    pub fn to_sdp(&self) -> SdpData {
        let mut rows = Vec::with_capacity(self.equalities.len());
        let mut rhs = Vec::with_capacity(self.equalities.len());
        for eq in &self.equalities {
            let mut r = SymRow::default();
            for &(v, c) in &eq.terms {
                let (b, i, j) = self.locate(v);
                let val = if i == j { c } else { 0.5 * c };
                r.entries.push((b as u32, i as u32, j as u32, val));
            }
            rows.push(r);
            rhs.push(eq.rhs);
        }
        SdpData {
            blocks: self.blocks.iter().map(|b| b.size).collect(),
            rows,
            rhs,
        }
    }

    fn locate(&self, v: u32) -> (usize, usize, usize) {
        let b = self
            .blocks
            .iter()
            .rposition(|blk| blk.offset <= v)
            .expect("variable belongs to a block");
        let (i, j) = self.blocks[b].position(v);
        (b, i, j)
    }

    /// Largest violation of the equalities at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|e| {
                let lhs: f64 = e.terms.iter().map(|&(v, c)| c * x[v as usize]).sum();
                libm::fabs(lhs - e.rhs)
            })
            .fold(0.0, f64::max)
    }

    /// Sparse text dump: header, shifts, then one `EQ` line per equality in
    /// terms of unshifted block entries.
    pub fn to_sparse_text(&self) -> String {
        let mut s = String::new();
        let sizes: Vec<String> = self.blocks.iter().map(|b| alloc::format!("{}", b.size)).collect();
        let _ = writeln!(s, "BLOCKS {} {}", self.blocks.len(), sizes.join(" "));
        for (k, b) in self.blocks.iter().enumerate() {
            for (i, v) in b.shift.iter().enumerate() {
                if *v != 0.0 {
                    let _ = writeln!(s, "SHIFT {} {} {:.16e}", k, i, v);
                }
            }
        }
        for (r, eq) in self.equalities.iter().enumerate() {
            let _ = write!(s, "EQ {}", r);
            for &(v, c) in &eq.terms {
                let (b, i, j) = self.locate(v);
                let _ = write!(s, " {:.16e}({},{},{})", c, b, i, j);
            }
            let _ = writeln!(s, " = {:.16e}", eq.rhs);
        }
        s
    }

    /// Inverse of [`to_sparse_text`].
    pub fn from_sparse_text(text: &str) -> Result<Self, Error> {
        let bad = Error::Invalid("malformed sparse problem text");
        let mut p = FeasibilityProblem::new();
        for line in text.lines() {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("BLOCKS") => {
                    let count: usize = it.next().and_then(|v| v.parse().ok()).ok_or(bad.clone())?;
                    for _ in 0..count {
                        let n: usize = it.next().and_then(|v| v.parse().ok()).ok_or(bad.clone())?;
                        p.add_block(n, alloc::vec![0.0; n]);
                    }
                }
                Some("SHIFT") => {
                    let mut f = || it.next().ok_or(bad.clone());
                    let b: usize = f()?.parse().map_err(|_| bad.clone())?;
                    let i: usize = f()?.parse().map_err(|_| bad.clone())?;
                    let v: f64 = f()?.parse().map_err(|_| bad.clone())?;
                    *p.blocks
                        .get_mut(b)
                        .and_then(|blk| blk.shift.get_mut(i))
                        .ok_or(bad.clone())? = v;
                }
                Some("EQ") => {
                    it.next();
                    let mut terms = Vec::new();
                    let mut rhs = None;
                    while let Some(tok) = it.next() {
                        if tok == "=" {
                            rhs = it.next().and_then(|v| v.parse().ok());
                            break;
                        }
                        let (c, rest) = tok.split_once('(').ok_or(bad.clone())?;
                        let idx: Vec<usize> = rest
                            .trim_end_matches(')')
                            .split(',')
                            .map(|v| v.parse().map_err(|_| bad.clone()))
                            .collect::<Result<_, _>>()?;
                        if idx.len() != 3 || idx[0] >= p.blocks.len() {
                            return Err(bad);
                        }
                        let c: f64 = c.parse().map_err(|_| bad.clone())?;
                        terms.push((p.blocks[idx[0]].var(idx[1], idx[2]), c));
                    }
                    p.equalities.push(Equality {
                        terms,
                        rhs: rhs.ok_or(bad.clone())?,
                    });
                }
                None => {}
                _ => return Err(bad),
            }
        }
        Ok(p)
    }
}

/// Monomial supports reachable by the Gram form at `(d1, d2)`.
fn gram_span(d1: u16, d2: u16, interval: bool) -> (BTreeSet<Mono>, BTreeSet<Mono>, BTreeSet<Mono>) {
    let lay = GramLayout::new(d1, d2);
    let n = lay.size();
    // generic entries make accidental cancellation implausible
    let u = |i: usize, j: usize| {
        let k = (i.min(j) * n + i.max(j)) as f64;
        1.0 + libm::sqrt(k * 0.618_033_988_7 + 0.3)
    };
    let mut t = gram_triple(&lay, u, &UNIT);
    if interval {
        t = t.add(&gram_triple(&lay, |i, j| 0.5 * u(i, j), &INTERVAL));
    }
    let set = |p: &Poly| p.terms().map(|(m, _)| *m).collect::<BTreeSet<_>>();
    (set(&t.m), set(&t.k1), set(&t.k2))
}

/// Smallest certificate degrees whose Gram span covers `target`, never below
/// `floor`.
pub fn auto_degrees<C: crate::poly::Coef>(target: &PolyTriple<C>, floor: (u16, u16), interval: bool) -> (u16, u16) {
    let mono = |p: &Poly<C>| p.terms().map(|(m, _)| *m).collect::<Vec<_>>();
    let (mm, k1, k2) = (mono(&target.m), mono(&target.k1), mono(&target.k2));
    let covers = |d1: u16, d2: u16| {
        let s = gram_span(d1, d2, interval);
        mm.iter().all(|m| s.0.contains(m)) && k1.iter().all(|m| s.1.contains(m)) && k2.iter().all(|m| s.2.contains(m))
    };
    let mdeg = mm.iter().map(|m| m.degree()).max().unwrap_or(0) as u16;
    let extra = if interval { 2 } else { 0 };
    let d1_min = floor.0.max(mdeg.saturating_sub(extra).div_ceil(2));
    let d2_min = floor.1;
    // by total degree, then smaller kernel degree first
    for total in d1_min + d2_min..d1_min + d2_min + 64 {
        for d2 in d2_min..=total - d1_min {
            if covers(total - d2, d2) {
                return (total - d2, d2);
            }
        }
    }
    (d1_min, d2_min)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackendStatus {
    Feasible,
    Infeasible,
    Failure(&'static str),
}

#[derive(Clone, Debug)]
pub struct BackendResult {
    pub status: BackendStatus,
    /// Unshifted block values, empty unless a point was produced.
    pub blocks: Vec<DMatrix<f64>>,
    pub iterations: usize,
}

/// Conic adapter: PSD blocks plus sparse equalities in, status plus matrices out.
pub trait Backend {
    fn name(&self) -> &str;
    /// Safe for concurrent independent invocations.
    fn concurrent(&self) -> bool {
        true
    }
    fn solve(&self, problem: &FeasibilityProblem) -> BackendResult;
}

/// Built-in primal-dual interior point adapter.
#[derive(Clone, Debug, Default)]
pub struct InteriorPoint {
    pub settings: IpmSettings,
}

impl Backend for InteriorPoint {
    fn name(&self) -> &str {
        "ipm"
    }

    fn solve(&self, problem: &FeasibilityProblem) -> BackendResult {
        let data = problem.to_sdp();
        let r = sdp::solve_feasibility(&data, &self.settings);
        let status = match r.status {
            IpmStatus::Feasible => BackendStatus::Feasible,
            IpmStatus::Infeasible => BackendStatus::Infeasible,
            // a stalled run may still hold a usable point; verification decides
            IpmStatus::Stalled if r.t < 1e3 * self.settings.feas_tol => BackendStatus::Feasible,
            IpmStatus::Stalled => BackendStatus::Failure("interior point stalled"),
            IpmStatus::MaxIter => BackendStatus::Failure("iteration limit"),
        };
        BackendResult {
            status,
            blocks: r.x,
            iterations: r.iterations,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub status: Status,
    /// Gram matrices including shifts, one per block.
    pub blocks: Vec<DMatrix<f64>>,
    pub variables: Vec<f64>,
    pub max_violation: f64,
    /// Minimum eigenvalue of each unshifted block.
    pub min_eigs: Vec<f64>,
    pub iterations: usize,
    pub message: &'static str,
}

impl SolveOutcome {
    pub fn is_feasible(&self) -> bool {
        self.status == Status::Feasible
    }

    fn bare(status: Status, message: &'static str) -> Self {
        SolveOutcome {
            status,
            blocks: Vec::new(),
            variables: Vec::new(),
            max_violation: f64::NAN,
            min_eigs: Vec::new(),
            iterations: 0,
            message,
        }
    }
}

/// Solve through `backend` and re-verify any claimed solution.
pub fn solve(problem: &FeasibilityProblem, backend: &dyn Backend) -> SolveOutcome {
    // constant equalities decide themselves
    let mut reduced = problem.clone();
    reduced.equalities.clear();
    for e in &problem.equalities {
        if e.terms.is_empty() {
            if libm::fabs(e.rhs) > EQ_TOL {
                return SolveOutcome::bare(Status::Infeasible, "inconsistent constant equality");
            }
        } else {
            reduced.equalities.push(e.clone());
        }
    }
    if reduced.blocks.is_empty() {
        return SolveOutcome::bare(Status::Feasible, "empty problem");
    }
    let r = backend.solve(&reduced);
    match r.status {
        BackendStatus::Infeasible => {
            let mut o = SolveOutcome::bare(Status::Infeasible, "certified by backend");
            o.iterations = r.iterations;
            return o;
        }
        BackendStatus::Failure(msg) if r.blocks.len() != reduced.blocks.len() => {
            let mut o = SolveOutcome::bare(Status::NumericalFailure, msg);
            o.iterations = r.iterations;
            return o;
        }
        _ => {}
    }
    let mut x = alloc::vec![0.0; reduced.nvars()];
    for (blk, m) in reduced.blocks.iter().zip(&r.blocks) {
        for i in 0..blk.size {
            for j in i..blk.size {
                x[blk.var(i, j) as usize] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
    }
    let max_violation = reduced.max_violation(&x);
    let min_eigs: Vec<f64> = r.blocks.iter().map(sdp::min_eig).collect();
    let verified = max_violation <= EQ_TOL && min_eigs.iter().all(|&e| e >= EIG_TOL);
    let (status, message) = match (&r.status, verified) {
        (_, true) => (Status::Feasible, "verified"),
        (BackendStatus::Feasible, false) => (Status::NumericalFailure, "claimed point failed verification"),
        (BackendStatus::Failure(m), false) => (Status::NumericalFailure, *m),
        (BackendStatus::Infeasible, false) => unreachable!(),
    };
    SolveOutcome {
        status,
        blocks: reduced.blocks.iter().map(|b| b.matrix(&x)).collect(),
        variables: x,
        max_violation,
        min_eigs,
        iterations: r.iterations,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::GramCertificate;

    fn triple_const(m: Poly) -> AffineTriple {
        PolyTriple {
            m: m.map_coefs(|c| Affine::constant(*c)),
            k1: Poly::zero(),
            k2: Poly::zero(),
        }
    }

    #[test]
    fn var_indexing_roundtrip() {
        let mut p = FeasibilityProblem::new();
        p.add_block(3, alloc::vec![0.0; 3]);
        let b = p.add_block(5, alloc::vec![0.0; 5]);
        let blk = &p.blocks[b];
        let mut seen = BTreeSet::new();
        for i in 0..5 {
            for j in i..5 {
                let v = blk.var(i, j);
                assert!(seen.insert(v));
                assert_eq!(p.locate(v), (b, i, j));
            }
        }
        assert_eq!(seen.len(), 15);
        assert_eq!(*seen.iter().next().unwrap(), 6);
    }

    #[test]
    fn declared_sizes() {
        let mut p = FeasibilityProblem::new();
        let (t, h) = p.declare_triple(0, 0, 0.0, false);
        assert_eq!(p.blocks[h.plain].size, 3);
        assert_eq!(t.m.len(), 1);
        let (_, h) = p.declare_triple(2, 2, 0.0, false);
        assert_eq!(p.blocks[h.plain].size, 15);
    }

    #[test]
    fn instantiation_matches_numeric_build() {
        let mut p = FeasibilityProblem::new();
        let (t, h) = p.declare_triple(1, 2, 0.5, false);
        let x: Vec<f64> = (0..p.nvars()).map(|k| libm::sin(k as f64 + 0.3)).collect();
        let num = p.instantiate(&t, &x);
        let u = p.blocks[h.plain].matrix(&x);
        let built = GramCertificate::new(1, 2, 0.5, u).build().unwrap();
        assert!(num.m.sub(&built.m).max_abs_coef() < 1e-12);
        assert!(num.k1.sub(&built.k1).max_abs_coef() < 1e-12);
        assert!(num.k2.sub(&built.k2).max_abs_coef() < 1e-12);
    }

    #[test]
    fn membership_of_constants() {
        let mut p = FeasibilityProblem::new();
        p.constrain_membership(&triple_const(Poly::constant(1.0)), 0, 0, false)
            .unwrap();
        let o = solve(&p, &InteriorPoint::default());
        assert_eq!(o.status, Status::Feasible);

        let mut p = FeasibilityProblem::new();
        p.constrain_membership(&triple_const(Poly::constant(-1.0)), 0, 0, false)
            .unwrap();
        assert_eq!(solve(&p, &InteriorPoint::default()).status, Status::Infeasible);
    }

    #[test]
    fn square_multiplier_needs_degree_one() {
        let sq = Poly::univariate(Var::X, &[1.0, -2.0, 1.0]);
        let mut p = FeasibilityProblem::new();
        assert_eq!(
            p.constrain_membership(&triple_const(sq.clone()), 0, 0, false),
            Err(Error::DegreeDeficit { d1: 0, d2: 0 })
        );
        let mut p = FeasibilityProblem::new();
        p.constrain_membership(&triple_const(sq), 1, 0, false).unwrap();
        let o = solve(&p, &InteriorPoint::default());
        assert_eq!(o.status, Status::Feasible);
        assert!(o.max_violation <= EQ_TOL);
    }

    #[test]
    fn poly_zero_counts() {
        let mut p = FeasibilityProblem::new();
        p.constrain_poly_zero(&Poly::zero());
        assert!(p.equalities.is_empty());
        let lin = Poly::from_terms([
            (Mono::xy(1, 0), Affine::var(0)),
            (Mono::ONE, Affine::var(1)),
        ]);
        p.constrain_poly_zero(&lin);
        assert_eq!(p.equalities.len(), 2);

        let mut p = FeasibilityProblem::new();
        let (t, _) = p.declare_triple(2, 2, 0.0, false);
        // K1 reaches degree 5 in its second argument at d1 = d2 = 2
        p.constrain_poly_zero(&t.k2.partial_eval(&[(Var::X, 0.0)]));
        assert_eq!(p.equalities.len(), 6);
    }

    #[test]
    fn empty_problem_is_feasible() {
        let o = solve(&FeasibilityProblem::new(), &InteriorPoint::default());
        assert_eq!(o.status, Status::Feasible);
        assert!(o.blocks.is_empty());
    }

    #[test]
    fn auto_degree_bookkeeping() {
        let z: PolyTriple<f64> = PolyTriple::zero();
        assert_eq!(auto_degrees(&z, (0, 0), false), (0, 0));
        let t = PolyTriple {
            m: Poly::univariate(Var::X, &[1.0, 1.0, 1.0]),
            k1: Poly::constant(1.0),
            k2: Poly::constant(1.0),
        };
        assert_eq!(auto_degrees(&t, (0, 0), false), (1, 0));
        let odd = PolyTriple {
            m: Poly::monomial(Var::X, 17),
            k1: Poly::zero(),
            k2: Poly::zero(),
        };
        assert_eq!(auto_degrees(&odd, (7, 7), false).0, 9);
        assert_eq!(auto_degrees(&odd, (7, 7), true).0, 8);
    }

    #[test]
    fn sparse_text_roundtrip() {
        let mut p = FeasibilityProblem::new();
        let (t, _) = p.declare_triple(1, 1, 0.25, false);
        p.constrain_poly_zero(&t.k2.partial_eval(&[(Var::X, 0.0)]));
        let text = p.to_sparse_text();
        let q = FeasibilityProblem::from_sparse_text(&text).unwrap();
        assert_eq!(q.blocks, p.blocks);
        assert_eq!(q.equalities, p.equalities);
    }
}
