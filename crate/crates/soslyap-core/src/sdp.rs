//! Primal-dual interior point method for semidefinite feasibility.
//!
//! Feasibility of `𝒜(X) = b, X ⪰ 0` is decided through the phase-one program
//!
//! ```text
//! minimize t  subject to  𝒜(X) + t·r = b,  X ⪰ 0,  t ≥ 0,   r = b − 𝒜(I)
//! ```
//!
//! which has the strictly feasible start `X = I, t = 1`. A vanishing optimum
//! means feasible; a positive dual objective certifies infeasibility.
//! Search directions are HKM with a Mehrotra predictor-corrector.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

/// Sparse symmetric constraint row: `(block, i, j, v)` with `i <= j` stands for
/// `A_ij = A_ji = v`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymRow {
    pub entries: Vec<(u32, u32, u32, f64)>,
}

impl SymRow {
    /// `⟨A, X⟩`.
    pub fn dot(&self, x: &[DMatrix<f64>]) -> f64 {
        self.entries
            .iter()
            .map(|&(b, i, j, v)| {
                let m = &x[b as usize];
                if i == j {
                    v * m[(i as usize, i as usize)]
                } else {
                    v * (m[(i as usize, j as usize)] + m[(j as usize, i as usize)])
                }
            })
            .sum()
    }

    fn norm2(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum()
    }

    /// `acc += s·A`.
    fn add_to(&self, acc: &mut [DMatrix<f64>], s: f64) {
        for &(b, i, j, v) in &self.entries {
            let m = &mut acc[b as usize];
            m[(i as usize, j as usize)] += s * v;
            if i != j {
                m[(j as usize, i as usize)] += s * v;
            }
        }
    }
}

/// `𝒜(X) = b` over symmetric blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SdpData {
    pub blocks: Vec<usize>,
    pub rows: Vec<SymRow>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IpmSettings {
    pub max_iter: usize,
    /// Phase-one objective below which the problem is declared feasible.
    pub feas_tol: f64,
    /// Dual objective above which the problem is declared infeasible.
    pub infeas_tol: f64,
    pub step: f64,
    /// Relative pivot below which a row counts as linearly dependent.
    pub rank_tol: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            max_iter: 120,
            feas_tol: 1e-9,
            infeas_tol: 1e-7,
            step: 0.95,
            rank_tol: 1e-13,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IpmStatus {
    Feasible,
    Infeasible,
    /// Schur complement lost definiteness before a decision.
    Stalled,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct IpmResult {
    pub status: IpmStatus,
    pub x: Vec<DMatrix<f64>>,
    /// Final phase-one objective (scaled).
    pub t: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub kept_rows: usize,
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let s = 0.5 * (m + m.transpose());
    SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Largest `α` with `X + α·dX ⪰ 0`.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    if n == 1 {
        return if dx[(0, 0)] >= 0.0 {
            f64::INFINITY
        } else {
            -x[(0, 0)] / dx[(0, 0)]
        };
    }
    let l = match Cholesky::new(x.clone()) {
        Some(c) => c.l(),
        None => return 0.0,
    };
    let linv = match l.clone().solve_lower_triangular(&DMatrix::identity(n, n)) {
        Some(m) => m,
        None => return 0.0,
    };
    let w = &linv * dx * linv.transpose();
    let lm = min_eig(&w);
    if lm >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lm
    }
}

fn sym_inv(z: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let c = Cholesky::new(z.clone())?;
    let inv = c.inverse();
    Some(0.5 * (&inv + inv.transpose()))
}

/// Greedy pivoted Cholesky on the row Gram matrix; returns kept row indices.
fn independent_rows(rows: &[SymRow], tol: f64) -> Vec<usize> {
    let m = rows.len();
    if m == 0 {
        return Vec::new();
    }
    // inverted index over matrix entries
    let mut cols: BTreeMap<(u32, u32, u32), Vec<(usize, f64)>> = BTreeMap::new();
    for (r, row) in rows.iter().enumerate() {
        for &(b, i, j, v) in &row.entries {
            let w = if i == j { v } else { v * core::f64::consts::SQRT_2 };
            cols.entry((b, i, j)).or_default().push((r, w));
        }
    }
    let mut g = DMatrix::<f64>::zeros(m, m);
    for list in cols.values() {
        for &(r, a) in list {
            for &(s, b) in list {
                g[(r, s)] += a * b;
            }
        }
    }
    let scale = (0..m).map(|i| g[(i, i)]).fold(0.0, f64::max);
    let mut perm: Vec<usize> = (0..m).collect();
    let mut kept = Vec::new();
    // right-looking pivoted Cholesky on g, in place
    for k in 0..m {
        let (mut best, mut bi) = (-1.0, k);
        for t in k..m {
            let d = g[(perm[t], perm[t])];
            if d > best {
                best = d;
                bi = t;
            }
        }
        if best <= tol * scale {
            break;
        }
        perm.swap(k, bi);
        let p = perm[k];
        kept.push(p);
        let piv = libm::sqrt(best);
        for t in k + 1..m {
            let q = perm[t];
            g[(q, p)] /= piv;
        }
        for t in k + 1..m {
            let q = perm[t];
            let lq = g[(q, p)];
            if lq == 0.0 {
                continue;
            }
            for s in k + 1..=t {
                let r = perm[s];
                let v = lq * g[(r, p)];
                g[(q, r)] -= v;
                if q != r {
                    g[(r, q)] -= v;
                }
            }
        }
    }
    kept.sort_unstable();
    kept
}

/// Minimum-norm correction of `x` onto `𝒜(X) = b` for the given rows.
pub fn project_affine(rows: &[SymRow], rhs: &[f64], x: &mut [DMatrix<f64>]) -> bool {
    let m = rows.len();
    if m == 0 {
        return true;
    }
    let res: Vec<f64> = rows.iter().zip(rhs).map(|(r, b)| b - r.dot(x)).collect();
    let mut g = DMatrix::<f64>::zeros(m, m);
    let mut cols: BTreeMap<(u32, u32, u32), Vec<(usize, f64)>> = BTreeMap::new();
    for (r, row) in rows.iter().enumerate() {
        for &(b, i, j, v) in &row.entries {
            let w = if i == j { v } else { 2.0 * v };
            cols.entry((b, i, j)).or_default().push((r, w));
        }
    }
    // ⟨A_r, A_s⟩ with the symmetric-matrix inner product
    for ((_, i, j), list) in &cols {
        let f = if i == j { 1.0 } else { 0.5 };
        for &(r, a) in list {
            for &(s, b) in list {
                g[(r, s)] += f * a * b;
            }
        }
    }
    let chol = match Cholesky::new(g) {
        Some(c) => c,
        None => return false,
    };
    let lam = chol.solve(&DVector::from_vec(res));
    for (r, row) in rows.iter().enumerate() {
        row.add_to(x, lam[r]);
    }
    true
}

struct Phase1<'a> {
    rows: Vec<&'a SymRow>,
    /// Row scaling applied to both sides.
    scale: Vec<f64>,
    b: Vec<f64>,
    r: Vec<f64>,
    blocks: Vec<usize>,
    /// Rows touching each block.
    by_block: Vec<Vec<usize>>,
}

impl Phase1<'_> {
    fn a_op(&self, x: &[DMatrix<f64>], t: f64) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(k, row)| self.scale[k] * row.dot(x) + t * self.r[k])
            .collect()
    }

    fn at_op(&self, y: &[f64]) -> (Vec<DMatrix<f64>>, f64) {
        let mut out: Vec<DMatrix<f64>> = self.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (k, row) in self.rows.iter().enumerate() {
            row.add_to(&mut out, y[k] * self.scale[k]);
        }
        let t = y.iter().zip(&self.r).map(|(a, b)| a * b).sum();
        (out, t)
    }

    fn schur(&self, x: &[DMatrix<f64>], zinv: &[DMatrix<f64>], t: f64, zt: f64) -> DMatrix<f64> {
        let m = self.rows.len();
        let mut s = DMatrix::<f64>::zeros(m, m);
        for (bk, &n) in self.blocks.iter().enumerate() {
            let rows = &self.by_block[bk];
            if rows.is_empty() {
                continue;
            }
            let xb = &x[bk];
            let zi = &zinv[bk];
            for (pos, &r) in rows.iter().enumerate() {
                // G = X A_r Z⁻¹ restricted to the row support of A_r
                let mut support: Vec<usize> = Vec::new();
                for &(b, i, j, _) in &self.rows[r].entries {
                    if b as usize == bk {
                        support.push(i as usize);
                        support.push(j as usize);
                    }
                }
                support.sort_unstable();
                support.dedup();
                let mut loc = BTreeMap::new();
                for (k, &i) in support.iter().enumerate() {
                    loc.insert(i, k);
                }
                let mut tm = DMatrix::<f64>::zeros(support.len(), n);
                for &(b, i, j, v) in &self.rows[r].entries {
                    if b as usize != bk {
                        continue;
                    }
                    let v = v * self.scale[r];
                    let (i, j) = (i as usize, j as usize);
                    let li = loc[&i];
                    let lj = loc[&j];
                    for c in 0..n {
                        tm[(li, c)] += v * zi[(j, c)];
                    }
                    if i != j {
                        for c in 0..n {
                            tm[(lj, c)] += v * zi[(i, c)];
                        }
                    }
                }
                let xs = xb.select_columns(support.iter());
                let g = xs * tm;
                for &q in &rows[pos..] {
                    let mut acc = 0.0;
                    for &(b, i, j, v) in &self.rows[q].entries {
                        if b as usize != bk {
                            continue;
                        }
                        let (i, j) = (i as usize, j as usize);
                        acc += if i == j {
                            v * g[(i, i)]
                        } else {
                            v * (g[(i, j)] + g[(j, i)])
                        };
                    }
                    acc *= self.scale[q];
                    s[(r, q)] += acc;
                    if q != r {
                        s[(q, r)] += acc;
                    }
                }
            }
        }
        let f = t / zt;
        for i in 0..m {
            for j in 0..m {
                s[(i, j)] += self.r[i] * f * self.r[j];
            }
        }
        s
    }
}

fn frob(ms: &[DMatrix<f64>]) -> f64 {
    libm::sqrt(ms.iter().map(|m| m.norm_squared()).sum())
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Decide feasibility of `data`; on success `x` satisfies the kept rows to
/// working precision after an affine projection.
pub fn solve_feasibility(data: &SdpData, set: &IpmSettings) -> IpmResult {
    let nb = data.blocks.len();
    let zero_x = || -> Vec<DMatrix<f64>> { data.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect() };
    let bmax = data.rhs.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
    if data.rows.is_empty() || bmax == 0.0 {
        return IpmResult {
            status: IpmStatus::Feasible,
            x: zero_x(),
            t: 0.0,
            dual_objective: 0.0,
            iterations: 0,
            kept_rows: 0,
        };
    }
    let kept = independent_rows(&data.rows, set.rank_tol);
    let mut scale = Vec::with_capacity(kept.len());
    let mut b = Vec::with_capacity(kept.len());
    for &k in &kept {
        let s = 1.0 / libm::sqrt(data.rows[k].norm2());
        scale.push(s);
        b.push(data.rhs[k] * s / bmax);
    }
    let rows: Vec<&SymRow> = kept.iter().map(|&k| &data.rows[k]).collect();
    let mut by_block = alloc::vec![Vec::new(); nb];
    for (k, row) in rows.iter().enumerate() {
        let mut seen: Vec<u32> = row.entries.iter().map(|e| e.0).collect();
        seen.sort_unstable();
        seen.dedup();
        for bk in seen {
            by_block[bk as usize].push(k);
        }
    }
    let mut p = Phase1 {
        rows,
        scale,
        b,
        r: alloc::vec![0.0; kept.len()],
        blocks: data.blocks.clone(),
        by_block,
    };
    let eye: Vec<DMatrix<f64>> = data.blocks.iter().map(|&n| DMatrix::identity(n, n)).collect();
    let ai = p.a_op(&eye, 0.0);
    p.r = p.b.iter().zip(&ai).map(|(b, a)| b - a).collect();

    let m = p.rows.len();
    let ntot: usize = data.blocks.iter().sum::<usize>() + 1;
    let mut x = eye.clone();
    let mut t = 1.0;
    let eta = 10.0f64.max(libm::sqrt(ntot as f64));
    let mut z: Vec<DMatrix<f64>> = eye.iter().map(|e| e * eta).collect();
    let mut zt = eta;
    let mut y = alloc::vec![0.0; m];
    let bnorm = libm::sqrt(p.b.iter().map(|v| v * v).sum::<f64>());

    let mut status = IpmStatus::MaxIter;
    let mut iters = 0;
    let mut dobj = 0.0;
    for it in 0..set.max_iter {
        iters = it;
        let ax = p.a_op(&x, t);
        let rp: Vec<f64> = p.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let (aty, aty_t) = p.at_op(&y);
        let rd: Vec<DMatrix<f64>> = (0..nb).map(|k| -&z[k] - &aty[k]).collect();
        let rd_t = 1.0 - zt - aty_t;
        let mu = (inner(&x, &z) + t * zt) / ntot as f64;
        dobj = p.b.iter().zip(&y).map(|(a, b)| a * b).sum();
        let pinf = libm::sqrt(rp.iter().map(|v| v * v).sum::<f64>()) / (1.0 + bnorm);
        let dinf = libm::sqrt(frob(&rd) * frob(&rd) + rd_t * rd_t);
        if t < set.feas_tol && pinf < 1e-8 {
            status = IpmStatus::Feasible;
            break;
        }
        if dobj > set.infeas_tol && dinf < 1e-8 {
            status = IpmStatus::Infeasible;
            break;
        }
        if dinf < 1e-9 && pinf < 1e-9 && (t - dobj).abs() < 1e-10 * (1.0 + t) {
            status = if t < 1e2 * set.feas_tol {
                IpmStatus::Feasible
            } else {
                IpmStatus::Infeasible
            };
            break;
        }
        let zinv: Option<Vec<DMatrix<f64>>> = z.iter().map(sym_inv).collect();
        let zinv = match zinv {
            Some(v) => v,
            None => {
                status = IpmStatus::Stalled;
                break;
            }
        };
        let schur = p.schur(&x, &zinv, t, zt);
        let chol = match Cholesky::new(schur) {
            Some(c) => c,
            None => {
                status = IpmStatus::Stalled;
                break;
            }
        };
        let zti = 1.0 / zt;

        let direction = |sigma: f64,
                         corr: Option<(&[DMatrix<f64>], f64, &[DMatrix<f64>], f64)>|
         -> (Vec<DMatrix<f64>>, f64, Vec<f64>, Vec<DMatrix<f64>>, f64) {
            let mut tm: Vec<DMatrix<f64>> = (0..nb)
                .map(|k| &zinv[k] * (sigma * mu) - &x[k] - &x[k] * &rd[k] * &zinv[k])
                .collect();
            let mut tt = sigma * mu * zti - t - t * rd_t * zti;
            if let Some((dxp, dtp, dzp, dztp)) = corr {
                for k in 0..nb {
                    tm[k] -= &dxp[k] * &dzp[k] * &zinv[k];
                }
                tt -= dtp * dztp * zti;
            }
            let at = p.a_op(&tm, tt);
            let rhs = DVector::from_iterator(m, rp.iter().zip(&at).map(|(a, b)| a - b));
            let dy = chol.solve(&rhs);
            let dyv: Vec<f64> = dy.iter().cloned().collect();
            let (atdy, atdy_t) = p.at_op(&dyv);
            let dz: Vec<DMatrix<f64>> = (0..nb).map(|k| &rd[k] - &atdy[k]).collect();
            let dzt = rd_t - atdy_t;
            let dx: Vec<DMatrix<f64>> = (0..nb)
                .map(|k| {
                    let d = &tm[k] + &x[k] * &atdy[k] * &zinv[k];
                    0.5 * (&d + d.transpose())
                })
                .collect();
            let dt = tt + t * atdy_t * zti;
            (dx, dt, dyv, dz, dzt)
        };
        let steps = |dx: &[DMatrix<f64>], dt: f64, dz: &[DMatrix<f64>], dzt: f64| -> (f64, f64) {
            let mut ap = if dt < 0.0 { -t / dt } else { f64::INFINITY };
            let mut ad = if dzt < 0.0 { -zt / dzt } else { f64::INFINITY };
            for k in 0..nb {
                ap = ap.min(max_step(&x[k], &dx[k]));
                ad = ad.min(max_step(&z[k], &dz[k]));
            }
            (ap, ad)
        };

        let (dx, dt, _, dz, dzt) = direction(0.0, None);
        let (ap, ad) = steps(&dx, dt, &dz, dzt);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = (t + ap * dt) * (zt + ad * dzt);
        for k in 0..nb {
            let xa = &x[k] + &dx[k] * ap;
            let za = &z[k] + &dz[k] * ad;
            mu_aff += xa.dot(&za);
        }
        mu_aff /= ntot as f64;
        let sigma = { let r = (mu_aff / mu).clamp(0.0, 1.0); r * r * r };
        let (dx, dt, dy, dz, dzt) = direction(sigma, Some((&dx, dt, &dz, dzt)));
        let (ap, ad) = steps(&dx, dt, &dz, dzt);
        let ap = (set.step * ap).min(1.0);
        let ad = (set.step * ad).min(1.0);
        for k in 0..nb {
            x[k] += &dx[k] * ap;
            z[k] += &dz[k] * ad;
        }
        t += ap * dt;
        zt += ad * dzt;
        for k in 0..m {
            y[k] += ad * dy[k];
        }
    }

    // undo rhs scaling and pin the equalities
    for xb in x.iter_mut() {
        *xb *= bmax;
    }
    let t_final = t;
    if matches!(status, IpmStatus::Feasible | IpmStatus::Stalled | IpmStatus::MaxIter) {
        let rows: Vec<SymRow> = kept.iter().map(|&k| data.rows[k].clone()).collect();
        let rhs: Vec<f64> = kept.iter().map(|&k| data.rhs[k]).collect();
        project_affine(&rows, &rhs, &mut x);
    }
    IpmResult {
        status,
        x,
        t: t_final,
        dual_objective: dobj,
        iterations: iters,
        kept_rows: kept.len(),
    }
}
