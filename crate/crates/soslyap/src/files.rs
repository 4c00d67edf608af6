//! Certificate, gains and CSV files.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use soslyap_core::kernel::KernelTriple;
use soslyap_core::loi::{FeasibilityProblem, SolveOutcome, EIG_TOL, EQ_TOL};
use soslyap_core::observer::ObserverGains;
use soslyap_core::poly::{Mono, Poly, Var};
use soslyap_core::sdp::min_eig;
use soslyap_core::sim::{LyapunovTrace, SimulationTrace};
use soslyap_core::synthesis::ControllerGains;

use crate::CliError;

/// Problem dump followed by `GRAM b n` sections (unshifted block values,
/// one row per line) and `REPORT` lines.
pub fn certificate_text(problem: &FeasibilityProblem, outcome: &SolveOutcome) -> String {
    let mut s = problem.to_sparse_text();
    for (b, blk) in problem.blocks.iter().enumerate() {
        let m = blk.matrix(&outcome.variables);
        let _ = writeln!(s, "GRAM {} {}", b, blk.size);
        for i in 0..blk.size {
            let row: Vec<String> = (0..blk.size)
                .map(|j| format!("{:.16e}", m[(i, j)] - if i == j { blk.shift[i] } else { 0.0 }))
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    let _ = writeln!(s, "REPORT max_violation {:.6e}", outcome.max_violation);
    for (b, e) in outcome.min_eigs.iter().enumerate() {
        let _ = writeln!(s, "REPORT min_eig {} {:.6e}", b, e);
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateCheck {
    pub max_violation: f64,
    pub min_eigs: Vec<f64>,
    pub verified: bool,
}

/// Re-verify a certificate file without a solver.
pub fn verify_certificate(text: &str) -> Result<CertificateCheck, CliError> {
    let bad = || CliError::Format("malformed certificate".into());
    let split = text.find("\nGRAM ").map(|k| k + 1).unwrap_or(text.len());
    let problem = FeasibilityProblem::from_sparse_text(&text[..split]).map_err(|_| bad())?;
    let mut x = vec![0.0; problem.nvars()];
    let mut mats: Vec<Option<DMatrix<f64>>> = vec![None; problem.blocks.len()];
    let mut lines = text[split..].lines();
    while let Some(line) = lines.next() {
        let mut it = line.split_whitespace();
        if it.next() != Some("GRAM") {
            continue;
        }
        let b: usize = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let n: usize = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let blk = problem.blocks.get(b).filter(|blk| blk.size == n).ok_or_else(bad)?;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let row = lines.next().ok_or_else(bad)?;
            let vals: Vec<f64> = row.split_whitespace().map(|v| v.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
            if vals.len() != n {
                return Err(bad());
            }
            for (j, v) in vals.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        for i in 0..n {
            for j in i..n {
                x[blk.var(i, j) as usize] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
        mats[b] = Some(m);
    }
    let mats: Vec<DMatrix<f64>> = mats.into_iter().collect::<Option<_>>().ok_or_else(bad)?;
    let max_violation = problem.max_violation(&x);
    let min_eigs: Vec<f64> = mats.iter().map(min_eig).collect();
    let verified = max_violation <= EQ_TOL && min_eigs.iter().all(|&e| e >= EIG_TOL);
    Ok(CertificateCheck {
        max_violation,
        min_eigs,
        verified,
    })
}

/// Ascending coefficients of a polynomial in `x`.
pub fn coefficients_x(p: &Poly) -> Vec<f64> {
    let d = p.degree_in(Var::X);
    if p.is_zero() {
        return Vec::new();
    }
    (0..=d)
        .map(|k| p.coeff(&Mono::var(Var::X, k)).copied().unwrap_or(0.0))
        .collect()
}

fn terms_xy(p: &Poly) -> Vec<(u16, u16, f64)> {
    p.terms().map(|(m, c)| (m.exp(Var::X), m.exp(Var::Y), *c)).collect()
}

fn from_terms_xy(t: &[(u16, u16, f64)]) -> Poly {
    Poly::from_terms(t.iter().map(|&(i, j, c)| (Mono::xy(i, j), c)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainsKind {
    Lyapunov,
    Controller,
    Observer,
}

/// Shared export format for controller and observer gains. Kernels are
/// `[i, j, coef]` terms of `x^i y^j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    pub kind: GainsKind,
    pub epsilon: f64,
    pub delta: f64,
    pub d1: u16,
    pub d2: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_kernel: Option<Vec<f64>>,
    pub m: Vec<f64>,
    pub k1: Vec<(u16, u16, f64)>,
    pub k2: Vec<(u16, u16, f64)>,
}

impl GainsFile {
    fn base(kind: GainsKind, p: &KernelTriple, delta: f64) -> Self {
        GainsFile {
            kind,
            epsilon: p.epsilon,
            delta,
            d1: p.d1,
            d2: p.d2,
            r1: None,
            r2: None,
            o1: None,
            v_kernel: None,
            m: coefficients_x(&p.m),
            k1: terms_xy(&p.k1),
            k2: terms_xy(&p.k2),
        }
    }

    pub fn lyapunov(p: &KernelTriple, delta: f64) -> Self {
        Self::base(GainsKind::Lyapunov, p, delta)
    }

    pub fn controller(g: &ControllerGains) -> Self {
        let mut f = Self::base(GainsKind::Controller, &g.p_c, g.delta);
        f.r1 = Some(g.r1);
        f.r2 = Some(coefficients_x(&g.r2));
        f
    }

    pub fn observer(g: &ObserverGains) -> Self {
        let mut f = Self::base(GainsKind::Observer, &g.p_o, g.delta);
        f.o1 = Some(g.o1);
        f.v_kernel = Some(coefficients_x(&g.v_kernel));
        f
    }

    pub fn triple(&self) -> KernelTriple {
        KernelTriple {
            m: Poly::univariate(Var::X, &self.m),
            k1: from_terms_xy(&self.k1),
            k2: from_terms_xy(&self.k2),
            d1: self.d1,
            d2: self.d2,
            epsilon: self.epsilon,
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("gains serialize")
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Format(e.message().to_string()))
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// `x, value` columns.
pub fn write_profile_csv(path: &Path, header: &str, nodes: &[f64], values: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", header])?;
    for (x, v) in nodes.iter().zip(values) {
        w.write_record([num(*x), num(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, x0..x{n-1}, norm, u, V, Vdot`; V columns are empty without a trace.
pub fn write_trace_csv(
    path: &Path,
    trace: &SimulationTrace,
    states: &[Vec<f64>],
    lyapunov: Option<&LyapunovTrace>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let n = trace.grid.len();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend(["norm", "u", "V", "Vdot"].map(String::from));
    w.write_record(&header)?;
    for (k, t) in trace.times.iter().enumerate() {
        let mut rec = vec![num(*t)];
        rec.extend(states[k].iter().map(|v| num(*v)));
        rec.push(num(trace.grid.norm(&states[k])));
        rec.push(num(trace.inputs[k]));
        match lyapunov {
            Some(l) => {
                rec.push(num(l.v[k]));
                rec.push(num(l.vdot[k]));
            }
            None => rec.extend([String::new(), String::new()]),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn fmt_num(v: f64) -> String {
    num(v)
}
