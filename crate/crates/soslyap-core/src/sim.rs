//! Crank–Nicolson simulation of open-loop, state-feedback and
//! observer-based closed loops.
//!
//! Central differences in `x` on the nodes of [`Grid::uniform`]. `w(0)=0`
//! is exact; the Neumann input enters through a ghost node
//! `w_n = w_{n-2} + 2h u`, so the last row picks up `(2a(1)/h + b(1)) u`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::kernel::{DiscreteOperator, GridInverse};
use crate::observer::OutputFeedback;
use crate::quad::Grid;
use crate::synthesis::Feedback;
use crate::system::{Boundary, PdeSystem};
use crate::Error;

/// Norm above which a run is stopped.
pub const BLOWUP: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimSettings {
    pub t_final: f64,
    pub dt: f64,
    pub n: usize,
    /// Record every `stride`-th step.
    pub stride: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            t_final: 3.0,
            dt: 1e-4,
            n: 201,
            stride: 10,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Input<'a> {
    Zero,
    StateFeedback(&'a Feedback),
    OutputFeedback(&'a OutputFeedback),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTrace {
    pub grid: Grid,
    pub times: Vec<f64>,
    /// Full nodal profiles, boundary nodes included.
    pub states: Vec<Vec<f64>>,
    pub observer: Option<Vec<Vec<f64>>>,
    pub norms: Vec<f64>,
    pub inputs: Vec<f64>,
    pub blowup: bool,
}

impl SimulationTrace {
    pub fn recompute_norms(&self) -> Vec<f64> {
        self.states.iter().map(|w| self.grid.norm(w)).collect()
    }

    /// `ŵ - w`, as a trace of its own.
    pub fn error_trace(&self) -> Option<SimulationTrace> {
        let obs = self.observer.as_ref()?;
        let states: Vec<Vec<f64>> = obs
            .iter()
            .zip(&self.states)
            .map(|(o, w)| o.iter().zip(w).map(|(a, b)| a - b).collect())
            .collect();
        let norms = states.iter().map(|e| self.grid.norm(e)).collect();
        Some(SimulationTrace {
            grid: self.grid.clone(),
            times: self.times.clone(),
            states,
            observer: None,
            norms,
            inputs: vec![0.0; self.times.len()],
            blowup: self.blowup,
        })
    }

    /// Least-squares slope of `ln ‖w‖` over `[t0, t1]`.
    pub fn fitted_exponent(&self, t0: f64, t1: f64) -> f64 {
        log_slope(&self.times, &self.norms, t0, t1)
    }
}

fn log_slope(times: &[f64], norms: &[f64], t0: f64, t1: f64) -> f64 {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .filter(|(t, v)| **t >= t0 && **t <= t1 && **v > 0.0)
        .map(|(t, v)| (*t, libm::log(*v)))
        .collect();
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let (mt, mv) = pts.iter().fold((0.0, 0.0), |(a, b), (t, v)| (a + t / k, b + v / k));
    let (num, den) = pts.iter().fold((0.0, 0.0), |(n, d), (t, v)| {
        (n + (t - mt) * (v - mv), d + (t - mt) * (t - mt))
    });
    num / den
}

/// Semi-discrete `ẇ = L w + B u` on the unknown nodes.
struct Semi {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    b_last: f64,
    /// Node index of unknown 0.
    first: usize,
}

impl Semi {
    fn new(sys: &PdeSystem, grid: &Grid) -> Self {
        let n = grid.len();
        let h = grid.h();
        let last = match sys.bc {
            Boundary::MixedDirichletNeumann => n - 1,
            Boundary::DirichletDirichlet => n - 2,
        };
        let m = last;
        let (mut lower, mut diag, mut upper) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for k in 0..m {
            let i = k + 1;
            let x = grid.nodes[i];
            let (a, b, c) = (sys.a.eval1(x), sys.b.eval1(x), sys.c.eval1(x));
            diag[k] = -2.0 * a / (h * h) + c;
            if i == n - 1 {
                lower[k] = 2.0 * a / (h * h);
            } else {
                lower[k] = a / (h * h) - b / (2.0 * h);
                upper[k] = a / (h * h) + b / (2.0 * h);
            }
        }
        let b_last = match sys.bc {
            Boundary::MixedDirichletNeumann => 2.0 * sys.a.eval1(1.0) / h + sys.b.eval1(1.0),
            Boundary::DirichletDirichlet => 0.0,
        };
        Semi {
            lower,
            diag,
            upper,
            b_last,
            first: 1,
        }
    }

    fn len(&self) -> usize {
        self.diag.len()
    }

    fn dense(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut a = DMatrix::zeros(m, m);
        for k in 0..m {
            a[(k, k)] = self.diag[k];
            if k > 0 {
                a[(k, k - 1)] = self.lower[k];
            }
            if k + 1 < m {
                a[(k, k + 1)] = self.upper[k];
            }
        }
        a
    }

    /// Grid row restricted to the unknowns.
    fn restrict(&self, row: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|k| row[k + self.first]).collect()
    }
}

enum Stepper {
    /// `(I - dt/2 L) w⁺ = (I + dt/2 L) w` by the Thomas algorithm.
    Tridiagonal {
        semi: Semi,
        dt: f64,
        c_prime: Vec<f64>,
        denom: Vec<f64>,
    },
    Dense(DMatrix<f64>),
}

impl Stepper {
    fn tridiagonal(semi: Semi, dt: f64) -> Self {
        let m = semi.len();
        let h = dt / 2.0;
        let mut c_prime = vec![0.0; m];
        let mut denom = vec![0.0; m];
        for k in 0..m {
            let d = 1.0 - h * semi.diag[k];
            let l = if k > 0 { -h * semi.lower[k] } else { 0.0 };
            let prev = if k > 0 { c_prime[k - 1] } else { 0.0 };
            denom[k] = d - l * prev;
            c_prime[k] = if k + 1 < m { -h * semi.upper[k] / denom[k] } else { 0.0 };
        }
        Stepper::Tridiagonal {
            semi,
            dt,
            c_prime,
            denom,
        }
    }

    fn dense(a: &DMatrix<f64>, dt: f64) -> Result<Self, Error> {
        let m = a.nrows();
        let eye = DMatrix::<f64>::identity(m, m);
        let lhs = &eye - a * (dt / 2.0);
        let rhs = &eye + a * (dt / 2.0);
        let s = lhs
            .lu()
            .solve(&rhs)
            .ok_or(Error::Invalid("singular Crank-Nicolson matrix"))?;
        Ok(Stepper::Dense(s))
    }

    fn step(&self, z: &mut DVector<f64>) {
        match self {
            Stepper::Dense(s) => *z = s * &*z,
            Stepper::Tridiagonal {
                semi,
                dt,
                c_prime,
                denom,
            } => {
                let m = semi.len();
                let h = dt / 2.0;
                let mut r = vec![0.0; m];
                for k in 0..m {
                    let mut v = (1.0 + h * semi.diag[k]) * z[k];
                    if k > 0 {
                        v += h * semi.lower[k] * z[k - 1];
                    }
                    if k + 1 < m {
                        v += h * semi.upper[k] * z[k + 1];
                    }
                    r[k] = v;
                }
                let mut d = vec![0.0; m];
                for k in 0..m {
                    let l = if k > 0 { -h * semi.lower[k] } else { 0.0 };
                    let prev = if k > 0 { d[k - 1] } else { 0.0 };
                    d[k] = (r[k] - l * prev) / denom[k];
                }
                for k in (0..m.saturating_sub(1)).rev() {
                    d[k] -= c_prime[k] * d[k + 1];
                }
                for k in 0..m {
                    z[k] = d[k];
                }
            }
        }
    }
}

/// Two opposite Gaussian bumps at 0.3 and 0.7.
pub fn gaussian_pair(x: f64) -> f64 {
    let s = 2.0 * 0.07 * 0.07;
    libm::exp(-(x - 0.3) * (x - 0.3) / s) - libm::exp(-(x - 0.7) * (x - 0.7) / s)
}

fn check_grid(grid: &Grid, n: usize) -> Result<(), Error> {
    if grid.len() != n {
        return Err(Error::GridMismatch(grid.len(), n));
    }
    Ok(())
}

/// `w0` and `ŵ0` are nodal profiles on `settings.n` nodes; the boundary
/// values they carry are overwritten by the boundary conditions.
pub fn simulate(
    sys: &PdeSystem,
    input: Input<'_>,
    w0: &[f64],
    what0: Option<&[f64]>,
    settings: &SimSettings,
) -> Result<SimulationTrace, Error> {
    let n = settings.n;
    if n < 8 || w0.len() != n || !(settings.dt > 0.0) || settings.stride == 0 {
        return Err(Error::Invalid("simulation settings"));
    }
    let grid = Grid::uniform(n);
    let semi = Semi::new(sys, &grid);
    let m = semi.len();
    let first = semi.first;
    let b_last = semi.b_last;

    let observed = matches!(input, Input::OutputFeedback(_));
    let (stepper, f_row): (Stepper, Option<Vec<f64>>) = match input {
        Input::Zero => (Stepper::tridiagonal(semi, settings.dt), None),
        Input::StateFeedback(fb) => {
            check_grid(&fb.grid, n)?;
            let f = semi.restrict(&fb.row);
            let mut a = semi.dense();
            for j in 0..m {
                a[(m - 1, j)] += b_last * f[j];
            }
            (Stepper::dense(&a, settings.dt)?, Some(f))
        }
        Input::OutputFeedback(of) => {
            if of.sys != *sys {
                return Err(Error::IncompatibleSystems);
            }
            check_grid(&of.feedback.grid, n)?;
            check_grid(&of.injection.grid, n)?;
            let f = semi.restrict(&of.feedback.row);
            let l = semi.restrict(&of.injection.gain);
            let base = semi.dense();
            let mut a = DMatrix::zeros(2 * m, 2 * m);
            a.view_mut((0, 0), (m, m)).copy_from(&base);
            a.view_mut((m, m), (m, m)).copy_from(&base);
            let last = m - 1;
            for j in 0..m {
                // plant boundary: u = F ŵ
                a[(last, m + j)] += b_last * f[j];
                // observer boundary: O1(ŵ(1) - w(1)) + F ŵ
                a[(m + last, m + j)] += b_last * f[j];
                // injection 𝒪(ŵ(1) - w(1))
                a[(m + j, m + last)] += l[j];
                a[(m + j, last)] -= l[j];
            }
            a[(m + last, m + last)] += b_last * of.o1;
            a[(m + last, last)] -= b_last * of.o1;
            (Stepper::dense(&a, settings.dt)?, Some(f))
        }
    };

    let size = if observed { 2 * m } else { m };
    let mut z = DVector::zeros(size);
    for k in 0..m {
        z[k] = w0[k + first];
    }
    if observed {
        let wh = what0.ok_or(Error::Invalid("observer initial state missing"))?;
        if wh.len() != n {
            return Err(Error::Invalid("observer initial state length"));
        }
        for k in 0..m {
            z[m + k] = wh[k + first];
        }
    }

    let unpack = |z: &DVector<f64>, off: usize| -> Vec<f64> {
        let mut w = vec![0.0; n];
        for k in 0..m {
            w[k + first] = z[off + k];
        }
        w
    };
    let input_of = |z: &DVector<f64>| -> f64 {
        match &f_row {
            None => 0.0,
            Some(f) => {
                let off = if observed { m } else { 0 };
                (0..m).map(|k| f[k] * z[off + k]).sum()
            }
        }
    };

    let steps = libm::round(settings.t_final / settings.dt) as usize;
    let mut trace = SimulationTrace {
        grid: grid.clone(),
        times: Vec::new(),
        states: Vec::new(),
        observer: observed.then(Vec::new),
        norms: Vec::new(),
        inputs: Vec::new(),
        blowup: false,
    };
    for s in 0..=steps {
        if s > 0 {
            stepper.step(&mut z);
        }
        if s % settings.stride == 0 {
            let w = unpack(&z, 0);
            let norm = grid.norm(&w);
            trace.times.push(s as f64 * settings.dt);
            trace.norms.push(norm);
            trace.inputs.push(input_of(&z));
            if let Some(o) = trace.observer.as_mut() {
                o.push(unpack(&z, m));
            }
            trace.states.push(w);
            if !(norm <= BLOWUP) {
                trace.blowup = true;
                break;
            }
        }
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug)]
pub enum LyapunovOperator<'a> {
    /// `V = ⟨w, P w⟩`.
    Direct(&'a DiscreteOperator),
    /// `V = ⟨w, P⁻¹ w⟩`.
    Inverse(&'a GridInverse),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovTrace {
    pub v: Vec<f64>,
    pub vdot: Vec<f64>,
}

pub fn lyapunov_trace(trace: &SimulationTrace, op: LyapunovOperator<'_>) -> Result<LyapunovTrace, Error> {
    let (grid, q) = match op {
        LyapunovOperator::Direct(d) => (&d.grid, &d.matrix),
        LyapunovOperator::Inverse(i) => (&i.grid, &i.matrix),
    };
    check_grid(grid, trace.grid.len())?;
    let v: Vec<f64> = trace
        .states
        .iter()
        .map(|w| {
            let pw = q * DVector::from_column_slice(w);
            trace.grid.inner(pw.as_slice(), w)
        })
        .collect();
    let k = v.len();
    let vdot = (0..k)
        .map(|i| {
            if k < 2 {
                return 0.0;
            }
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(k - 1));
            (v[hi] - v[lo]) / (trace.times[hi] - trace.times[lo])
        })
        .collect();
    Ok(LyapunovTrace { v, vdot })
}

/// Profile with a component along the slowest mode.
fn probe_profile(bc: Boundary) -> impl Fn(f64) -> f64 {
    move |x| match bc {
        Boundary::MixedDirichletNeumann => x * (2.0 - x),
        Boundary::DirichletDirichlet => x * (1.0 - x),
    }
}

/// Open-loop growth exponent of `family(λ)` fitted over `[T/2, T]`.
pub fn open_loop_exponent(sys: &PdeSystem, settings: &SimSettings) -> Result<f64, Error> {
    let grid = Grid::uniform(settings.n);
    let w0 = grid.sample(probe_profile(sys.bc));
    let tr = simulate(sys, Input::Zero, &w0, None, settings)?;
    if tr.blowup {
        return Ok(f64::INFINITY);
    }
    Ok(tr.fitted_exponent(settings.t_final / 2.0, settings.t_final))
}

/// Largest `λ` in the sorted grid whose open-loop norm decays.
pub fn empirical_margin(
    family: impl Fn(f64) -> PdeSystem,
    lambdas: &[f64],
    settings: &SimSettings,
) -> Result<Option<f64>, Error> {
    let mut best = None;
    for &l in lambdas {
        if open_loop_exponent(&family(l), settings)? < 0.0 {
            best = Some(l);
        }
    }
    Ok(best)
}
