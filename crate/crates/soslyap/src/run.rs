//! Command execution.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use soslyap_core::kernel::{neumann_series, omega_222_preset};
use soslyap_core::loi::{self, Backend, FeasibilityProblem, SolveOutcome, Status};
use soslyap_core::observer::{assemble_output_feedback, build_observer_problem, extract_observer, ObserverGains};
use soslyap_core::sim::{self, simulate, Input, LyapunovOperator, SimulationTrace};
use soslyap_core::stability::{bisect, build_stability_problem, extract_triple, StabilityOptions};
use soslyap_core::synthesis::{build_synthesis_problem, extract_gains, ControllerGains, INVERSE_ACCEPT};
use soslyap_core::system::PdeSystem;

use crate::backend::{select_backend, SharedBackend, BACKEND_ENV};
use crate::config::{JobConfig, SweepKind, SweepProblem, InputKind};
use crate::files::{certificate_text, fmt_num, write_profile_csv, write_rows_csv, write_trace_csv, GainsFile};
use crate::{CliError, ExitStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Analyze,
    Synthesize,
    Observe,
    Simulate,
    Sweep,
    InvertDemo,
}

pub struct Job {
    pub config: JobConfig,
    pub out: PathBuf,
    pub jobs: usize,
    pub backend: SharedBackend,
}

impl Job {
    /// Reads and validates the config; nothing is written.
    pub fn load(config: &Path, out: Option<&Path>, jobs: Option<usize>) -> Result<Self, CliError> {
        let text = fs::read_to_string(config).map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
        let cfg = JobConfig::parse(&text)?;
        let out = out
            .map(Path::to_path_buf)
            .or_else(|| cfg.out.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("soslyap-out"));
        let backend = select_backend(std::env::var(BACKEND_ENV).ok().as_deref(), &out)?;
        Ok(Self::new(cfg, out, jobs, backend))
    }

    pub fn new(config: JobConfig, out: PathBuf, jobs: Option<usize>, backend: SharedBackend) -> Self {
        let jobs = jobs.unwrap_or_else(rayon::current_num_threads).max(1);
        Job {
            config,
            out,
            jobs,
            backend,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn backend(&self) -> &(dyn Backend + Sync) {
        &*self.backend
    }

    pub fn run(&self, cmd: Command) -> Result<ExitStatus, CliError> {
        fs::create_dir_all(&self.out)?;
        match cmd {
            Command::Analyze => self.analyze(),
            Command::Synthesize => self.synthesize().map(|r| r.0),
            Command::Observe => self.observe().map(|r| r.0),
            Command::Simulate => self.simulate(),
            Command::Sweep => self.sweep(),
            Command::InvertDemo => self.invert_demo(),
        }
    }

    fn solve_and_certify(&self, p: &FeasibilityProblem, name: &str) -> Result<SolveOutcome, CliError> {
        let outcome = loi::solve(p, self.backend());
        eprintln!(
            "{name}: {:?} ({}, {} iterations, backend {})",
            outcome.status,
            outcome.message,
            outcome.iterations,
            self.backend.name()
        );
        if outcome.status == Status::Feasible {
            fs::write(self.path(&format!("{name}-certificate.txt")), certificate_text(p, &outcome))?;
        }
        Ok(outcome)
    }

    fn analyze(&self) -> Result<ExitStatus, CliError> {
        let sys = self.config.system()?;
        let opts = self.config.options();
        let (p, tri, cd) = build_stability_problem(&sys, &opts)?;
        eprintln!("analyze: certificate degrees {cd:?}");
        let outcome = self.solve_and_certify(&p, "analyze")?;
        if let Some(t) = extract_triple(&p, &tri, &outcome, &opts) {
            fs::write(self.path("lyapunov.toml"), GainsFile::lyapunov(&t, opts.delta).to_text())?;
        }
        Ok(outcome.status.into())
    }

    fn synthesize(&self) -> Result<(ExitStatus, Option<ControllerGains>), CliError> {
        let sys = self.config.system()?;
        let opts = self.config.options();
        let (p, tri, cd) = build_synthesis_problem(&sys, &opts, self.config.static_variant)?;
        eprintln!("synthesize: certificate degrees {cd:?}");
        let outcome = self.solve_and_certify(&p, "controller")?;
        let Some(g) = extract_gains(&sys, &opts, &p, &tri, &outcome) else {
            return Ok((outcome.status.into(), None));
        };
        fs::write(self.path("controller.toml"), GainsFile::controller(&g).to_text())?;
        let fb = g.realize(self.config.n)?;
        eprintln!("synthesize: feedback realized by {:?}", fb.method);
        write_profile_csv(&self.path("feedback.csv"), "f", &fb.grid.nodes, &fb.row)?;
        Ok((ExitStatus::Success, Some(g)))
    }

    fn observer_options(&self) -> StabilityOptions {
        let mut o = self.config.options();
        if let Some(d) = self.config.observer_delta {
            o.delta = d;
        }
        o
    }

    fn observe(&self) -> Result<(ExitStatus, Option<ObserverGains>), CliError> {
        let sys = self.config.system()?;
        let opts = self.observer_options();
        let (p, tri, cd) = build_observer_problem(&sys, &opts)?;
        eprintln!("observe: certificate degrees {cd:?}");
        let outcome = self.solve_and_certify(&p, "observer")?;
        let Some(g) = extract_observer(&sys, &opts, &p, &tri, &outcome) else {
            return Ok((outcome.status.into(), None));
        };
        fs::write(self.path("observer.toml"), GainsFile::observer(&g).to_text())?;
        let inj = g.realize(self.config.n)?;
        eprintln!("observe: injection realized by {:?}", inj.method);
        write_profile_csv(&self.path("injection.csv"), "gain", &inj.grid.nodes, &inj.gain)?;
        Ok((ExitStatus::Success, Some(g)))
    }

    fn simulate(&self) -> Result<ExitStatus, CliError> {
        let cfg = &self.config;
        let sys = cfg.system()?;
        let settings = cfg.sim_settings();
        let grid = soslyap_core::quad::Grid::uniform(settings.n);
        let w0 = grid.sample(|x| cfg.w0.eval(x));
        let what0 = grid.sample(|x| cfg.what0.eval(x));
        let (trace, lyap) = match cfg.input {
            InputKind::Zero => (simulate(&sys, Input::Zero, &w0, None, &settings)?, None),
            InputKind::StateFeedback => {
                let g = match self.synthesize()? {
                    (_, Some(g)) => g,
                    (st, None) => return Ok(st),
                };
                let fb = g.realize(settings.n)?;
                let tr = simulate(&sys, Input::StateFeedback(&fb), &w0, None, &settings)?;
                let inv = g.p_c.grid_inverse(settings.n, INVERSE_ACCEPT)?;
                let ly = sim::lyapunov_trace(&tr, LyapunovOperator::Inverse(&inv))?;
                (tr, Some(ly))
            }
            InputKind::OutputFeedback => {
                let ctrl = match self.synthesize()? {
                    (_, Some(g)) => g,
                    (st, None) => return Ok(st),
                };
                let obs = match self.observe()? {
                    (_, Some(g)) => g,
                    (st, None) => return Ok(st),
                };
                let of = assemble_output_feedback(&ctrl, &obs, settings.n)?;
                let tr = simulate(&sys, Input::OutputFeedback(&of), &w0, Some(&what0), &settings)?;
                let inv = ctrl.p_c.grid_inverse(settings.n, INVERSE_ACCEPT)?;
                let ly = sim::lyapunov_trace(&tr, LyapunovOperator::Inverse(&inv))?;
                if let Some(err) = tr.error_trace() {
                    let op = obs.p_o.discretize(settings.n);
                    let ely = sim::lyapunov_trace(&err, LyapunovOperator::Direct(&op))?;
                    write_trace_csv(&self.path("error-trace.csv"), &err, &err.states, Some(&ely))?;
                    let obs_states = tr.observer.clone().unwrap_or_default();
                    write_trace_csv(&self.path("observer-trace.csv"), &tr, &obs_states, None)?;
                }
                (tr, Some(ly))
            }
        };
        write_trace_csv(&self.path("trace.csv"), &trace, &trace.states, lyap.as_ref())?;
        self.write_summary(&trace)?;
        Ok(ExitStatus::Success)
    }

    fn write_summary(&self, tr: &SimulationTrace) -> Result<(), CliError> {
        let t = *tr.times.last().unwrap_or(&0.0);
        let rows = vec![vec![
            fmt_num(tr.fitted_exponent(0.0, t)),
            fmt_num(tr.fitted_exponent(t / 2.0, t)),
            fmt_num(*tr.norms.last().unwrap_or(&f64::NAN)),
            tr.blowup.to_string(),
        ]];
        write_rows_csv(
            &self.path("summary.csv"),
            &["exponent", "late_exponent", "final_norm", "blowup"],
            &rows,
        )
    }

    fn feasible_at(&self, sys: &PdeSystem, opts: &StabilityOptions) -> bool {
        let problem = match self.config.sweep_problem {
            SweepProblem::Stability => build_stability_problem(sys, opts),
            SweepProblem::Synthesis => build_synthesis_problem(sys, opts, self.config.static_variant),
            SweepProblem::Observer => build_observer_problem(sys, opts),
        };
        match problem {
            Ok((p, _, _)) => loi::solve(&p, self.backend()).status == Status::Feasible,
            Err(e) => {
                eprintln!("sweep: probe failed: {e}");
                false
            }
        }
    }

    fn sweep(&self) -> Result<ExitStatus, CliError> {
        if self.config.sweep == SweepKind::Margin {
            return self.margin();
        }
        let cfg = &self.config;
        let sys = cfg.system()?;
        let degrees = if cfg.sweep_degrees.is_empty() { vec![cfg.d1] } else { cfg.sweep_degrees.clone() };
        let deltas = if cfg.sweep_deltas.is_empty() || cfg.sweep == SweepKind::Delta {
            vec![cfg.delta]
        } else {
            cfg.sweep_deltas.clone()
        };
        let cells: Vec<(f64, u16)> = deltas.iter().flat_map(|&dl| degrees.iter().map(move |&d| (dl, d))).collect();
        let jobs = if self.backend.concurrent() { self.jobs } else { 1 };
        let batch = (jobs / cells.len()).max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Format(e.to_string()))?;
        let results: Vec<_> = pool.install(|| {
            cells
                .par_iter()
                .map(|&(delta, d)| {
                    let start = Instant::now();
                    let r = bisect(cfg.sweep_lo, cfg.sweep_hi, cfg.sweep_tol, batch, |pts| {
                        pts.par_iter()
                            .map(|&v| {
                                let mut o = cfg.options();
                                o.d1 = d;
                                o.d2 = d;
                                o.cert_degrees = None;
                                match cfg.sweep {
                                    SweepKind::Delta => {
                                        o.delta = v;
                                        self.feasible_at(&sys, &o)
                                    }
                                    _ => {
                                        o.delta = delta;
                                        self.feasible_at(&sys.shifted(v), &o)
                                    }
                                }
                            })
                            .collect()
                    });
                    (delta, d, r, start.elapsed().as_secs_f64())
                })
                .collect()
        });

        let mut rows = Vec::new();
        let mut log = String::new();
        let mut status = ExitStatus::Success;
        for (delta, d, r, secs) in &results {
            let _ = writeln!(log, "delta={delta} d={d} seconds={secs:.3}");
            match r {
                Ok(b) => rows.push(vec![
                    fmt_num(*delta),
                    d.to_string(),
                    fmt_num(b.value),
                    b.probes.len().to_string(),
                    b.non_monotone.to_string(),
                ]),
                Err(e) => {
                    eprintln!("sweep: delta={delta} d={d}: {e}");
                    status = ExitStatus::Failure;
                    rows.push(vec![fmt_num(*delta), d.to_string(), String::new(), "0".into(), "false".into()]);
                }
            }
        }
        write_rows_csv(
            &self.path("sweep.csv"),
            &["delta", "degree", "value", "probes", "non_monotone"],
            &rows,
        )?;
        fs::write(self.path("table.txt"), table(&deltas, &degrees, &rows, cfg.sweep))?;
        fs::write(self.path("timing.log"), log)?;
        Ok(status)
    }

    fn margin(&self) -> Result<ExitStatus, CliError> {
        let cfg = &self.config;
        let sys = cfg.system()?;
        let settings = cfg.sim_settings();
        let count = ((cfg.sweep_hi - cfg.sweep_lo) / cfg.margin_step).round() as usize + 1;
        let lambdas: Vec<f64> = (0..count).map(|k| cfg.sweep_lo + k as f64 * cfg.margin_step).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CliError::Format(e.to_string()))?;
        let exps: Vec<Result<f64, _>> = pool.install(|| {
            lambdas
                .par_iter()
                .map(|&l| sim::open_loop_exponent(&sys.shifted(l), &settings))
                .collect()
        });
        let mut rows = Vec::new();
        let mut best = None;
        for (l, e) in lambdas.iter().zip(exps) {
            let e = e?;
            if e < 0.0 {
                best = Some(*l);
            }
            rows.push(vec![fmt_num(*l), fmt_num(e)]);
        }
        write_rows_csv(&self.path("margin.csv"), &["lambda", "exponent"], &rows)?;
        let value = best.map(fmt_num).unwrap_or_default();
        fs::write(self.path("margin.txt"), format!("critical_lambda {value}\n"))?;
        Ok(if best.is_some() { ExitStatus::Success } else { ExitStatus::Infeasible })
    }

    fn invert_demo(&self) -> Result<ExitStatus, CliError> {
        let tri = omega_222_preset();
        let op = tri.discretize(self.config.invert_n);
        let m: Vec<f64> = op.grid.nodes.iter().map(|&x| tri.m.eval1(x)).collect();
        let probe = vec![op
            .grid
            .sample(|x| (5.0 * std::f64::consts::PI * x).sin() / (x + 1.0))];
        let inv = neumann_series(&op, &m, self.config.invert_terms, 0.0, &probe)?;
        let rows: Vec<Vec<String>> = inv
            .history
            .iter()
            .enumerate()
            .map(|(k, r)| vec![k.to_string(), fmt_num(*r)])
            .collect();
        write_rows_csv(&self.path("inversion.csv"), &["K", "residual"], &rows)?;
        fs::write(self.path("omega-preset.toml"), GainsFile::lyapunov(&tri, 0.0).to_text())?;
        Ok(ExitStatus::Success)
    }
}

/// Rows `δ`, columns degree; a single row for `δ` sweeps.
fn table(deltas: &[f64], degrees: &[u16], rows: &[Vec<String>], kind: SweepKind) -> String {
    let mut s = String::new();
    let head = match kind {
        SweepKind::Delta => "max delta",
        _ => "delta",
    };
    let _ = write!(s, "{head:>10} |");
    for d in degrees {
        let _ = write!(s, " {:>9}", format!("d={d}"));
    }
    s.push('\n');
    for (i, delta) in deltas.iter().enumerate() {
        let label = if kind == SweepKind::Delta { String::new() } else { format!("{delta}") };
        let _ = write!(s, "{label:>10} |");
        for j in 0..degrees.len() {
            let v = &rows[i * degrees.len() + j][2];
            let cell = v.parse::<f64>().map(|x| format!("{x:.3}")).unwrap_or_else(|_| "-".into());
            let _ = write!(s, " {cell:>9}");
        }
        s.push('\n');
    }
    s
}
