//! Acceptance run: one line per criterion.
//!
//! Prints results and exits 0; set `SOSLYAP_ACCEPTANCE_STRICT=1` to exit 1
//! when any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use soslyap_core::gram::{GramCertificate, GramLayout, PolyTriple};
use soslyap_core::kernel::{neumann_series, omega_222_preset, KernelTriple};
use soslyap_core::loi::InteriorPoint;
use soslyap_core::observer::{assemble_output_feedback, synthesize_observer};
use soslyap_core::poly::{Mono, MonomialBasis, Poly, Var};
use soslyap_core::quad::Grid;
use soslyap_core::sim::{empirical_margin, gaussian_pair, open_loop_exponent, simulate, Input, SimSettings};
use soslyap_core::stability::{bisect, m_eps_map, stability_test, Bisection, StabilityOptions};
use soslyap_core::synthesis::{n_eps_map, synthesize_controller, ControllerGains};
use soslyap_core::system::{Boundary, PdeSystem};

const EPS: f64 = 1e-3;

struct Decay {
    label: String,
    exponent: f64,
    delta: f64,
}

impl Decay {
    fn ok(&self) -> bool {
        self.exponent <= -self.delta + 0.05
    }
}

struct Run {
    ipm: InteriorPoint,
    decays: Vec<Decay>,
    results: Vec<bool>,
}

fn closed_loop_settings() -> SimSettings {
    SimSettings {
        t_final: 1.0,
        dt: 1e-4,
        n: 101,
        stride: 10,
    }
}

impl Run {
    fn report(&mut self, n: usize, pass: bool, started: Instant, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {n}: {verdict} ({:.0} s) {detail}", started.elapsed().as_secs_f64());
        self.results.push(pass);
    }

    /// Largest certified shift; each feasible probe is simulated open loop.
    fn stability_sweep(&mut self, label: &str, family: impl Fn(f64) -> PdeSystem, opts: &StabilityOptions, br: (f64, f64), tol: f64) -> Option<Bisection> {
        let ipm = self.ipm.clone();
        let decays = &mut self.decays;
        bisect(br.0, br.1, tol, 1, |pts| {
            pts.iter()
                .map(|&l| {
                    let sys = family(l);
                    let ok = stability_test(&sys, opts, &ipm).is_ok_and(|c| c.outcome.is_feasible());
                    if ok {
                        let exponent = open_loop_exponent(&sys, &SimSettings::default()).unwrap_or(f64::INFINITY);
                        decays.push(Decay {
                            label: format!("{label} lambda={l:.4}"),
                            exponent,
                            delta: opts.delta,
                        });
                    }
                    ok
                })
                .collect()
        })
        .ok()
    }

    fn closed_loop(&mut self, label: String, gains: &ControllerGains) -> f64 {
        let s = closed_loop_settings();
        let exponent = gains
            .realize(s.n)
            .and_then(|fb| {
                let w0 = Grid::uniform(s.n).sample(gaussian_pair);
                simulate(&gains.sys, Input::StateFeedback(&fb), &w0, None, &s)
            })
            .map(|tr| if tr.blowup { f64::INFINITY } else { tr.fitted_exponent(0.5, 1.0) })
            .unwrap_or(f64::INFINITY);
        self.decays.push(Decay {
            label,
            exponent,
            delta: gains.delta,
        });
        exponent
    }

    fn synthesis(&mut self, sys: &PdeSystem, opts: &StabilityOptions, static_variant: bool, label: String) -> Option<ControllerGains> {
        let s = synthesize_controller(sys, opts, static_variant, &self.ipm).ok()?;
        let g = s.gains?;
        self.closed_loop(label, &g);
        Some(g)
    }
}

fn bracket_text(b: &Option<Bisection>) -> String {
    match b {
        Some(b) => format!("{:.4}", b.value),
        None => "bracket rejected".into(),
    }
}

fn criterion1(run: &mut Run) {
    let t = Instant::now();
    let expect = [0.59, 2.19, 2.457, 2.46, 2.461];
    let mut pass = true;
    let mut found = Vec::new();
    for (k, d) in (3u16..=7).enumerate() {
        let opts = StabilityOptions::new(d, EPS, 0.001);
        let b = run.stability_sweep(&format!("heat d={d}"), |l| PdeSystem::heat(l, Boundary::MixedDirichletNeumann), &opts, (0.0, 3.0), 0.01);
        match &b {
            Some(b) => pass &= (b.value - expect[k]).abs() <= 0.05 && (d < 7 || b.value >= 0.99 * PI * PI / 4.0),
            None => pass = false,
        }
        found.push(format!("d={d}:{}", bracket_text(&b)));
    }
    run.report(1, pass, t, format!("heat max lambda {} expected {expect:?}", found.join(" ")));
}

fn criterion2(run: &mut Run) {
    let t = Instant::now();
    let opts = StabilityOptions::new(7, EPS, 0.001);
    let full = run.stability_sweep("cubic d=7", PdeSystem::cubic_example, &opts, (4.0, 5.0), 0.02);
    let mut zero = opts.clone();
    zero.kernels_zero = true;
    let ablation = run.stability_sweep("cubic d=7 K=0", PdeSystem::cubic_example, &zero, (0.0, 5.0), 0.02);
    let pass = full.as_ref().is_some_and(|b| (b.value - 4.62).abs() <= 0.05)
        && ablation.as_ref().is_some_and(|b| (b.value - 4.38).abs() <= 0.05);
    run.report(
        2,
        pass,
        t,
        format!("max lambda {} (4.62), kernels zero {} (4.38)", bracket_text(&full), bracket_text(&ablation)),
    );
}

fn criterion3(run: &mut Run) {
    let t = Instant::now();
    let dir = |l| PdeSystem::heat(l, Boundary::DirichletDirichlet);
    let opts = StabilityOptions::new(8, EPS, 0.001);
    let b = run.stability_sweep("dirichlet d=8", dir, &opts, (9.0, 10.5), 0.01);
    let direct = b.as_ref().is_some_and(|b| (b.value - 9.82).abs() <= 0.1 && b.value >= 0.99 * PI * PI);
    if direct || b.is_none() {
        run.report(3, direct, t, format!("max lambda {} (9.82, floor {:.3})", bracket_text(&b), 0.99 * PI * PI));
        return;
    }
    // below the bar: fall back to growth in degree under π²
    let frac = b.as_ref().map_or(0.0, |b| b.value / (PI * PI));
    let mut vals = Vec::new();
    for d in 4u16..=7 {
        let o = StabilityOptions::new(d, EPS, 0.001);
        vals.push(run.stability_sweep(&format!("dirichlet d={d}"), dir, &o, (0.0, 10.5), 0.01).map_or(f64::NAN, |b| b.value));
    }
    vals.push(b.as_ref().unwrap().value);
    let pass = vals.windows(2).all(|w| w[1] > w[0]) && vals.iter().all(|v| *v <= PI * PI);
    run.report(3, pass, t, format!("fraction of pi^2 {frac:.4}; degrees 4..8 give {vals:?}"));
}

fn criterion4(run: &mut Run) {
    let t = Instant::now();
    let opts = StabilityOptions::new(7, EPS, 0.1);
    let sys35 = PdeSystem::cubic_example(35.0);
    let ctrl = run.synthesis(&sys35, &opts, false, "synthesis d=7 lambda=35".into());
    let obs = synthesize_observer(&sys35, &opts, &run.ipm).ok().and_then(|o| o.gains);
    if let (Some(c), Some(o)) = (&ctrl, &obs) {
        let s = closed_loop_settings();
        let exponent = assemble_output_feedback(c, o, s.n)
            .and_then(|of| {
                let g = Grid::uniform(s.n);
                simulate(&sys35, Input::OutputFeedback(&of), &g.sample(gaussian_pair), Some(&vec![0.0; s.n]), &s)
            })
            .ok()
            .and_then(|tr| tr.error_trace())
            .map_or(f64::INFINITY, |e| e.fitted_exponent(0.5, 1.0));
        run.decays.push(Decay {
            label: "observer error d=7 lambda=35".into(),
            exponent,
            delta: opts.delta,
        });
    }

    let static_opts = StabilityOptions::new(5, EPS, 0.1);
    let ipm = run.ipm.clone();
    let mut feasible = Vec::new();
    let st = bisect(8.5, 10.0, 0.02, 1, |pts| {
        pts.iter()
            .map(|&l| {
                let g = synthesize_controller(&PdeSystem::cubic_example(l), &static_opts, true, &ipm)
                    .ok()
                    .and_then(|s| s.gains);
                let ok = g.is_some();
                feasible.extend(g.map(|g| (l, g)));
                ok
            })
            .collect()
    })
    .ok();
    for (l, g) in feasible {
        run.closed_loop(format!("static d=5 lambda={l:.4}"), &g);
    }

    let sys6 = PdeSystem::cubic_example(6.0);
    let mut feasible = Vec::new();
    let dm = bisect(10.0, 60.0, 0.5, 1, |pts| {
        pts.iter()
            .map(|&d| {
                let mut o = opts.clone();
                o.delta = d;
                let g = synthesize_controller(&sys6, &o, false, &ipm).ok().and_then(|s| s.gains);
                let ok = g.is_some();
                feasible.extend(g.map(|g| (d, g)));
                ok
            })
            .collect()
    })
    .ok();
    for (d, g) in feasible {
        run.closed_loop(format!("delta sweep d=7 delta={d:.3}"), &g);
    }

    let pass = ctrl.is_some()
        && obs.is_some()
        && st.as_ref().is_some_and(|b| (b.value - 9.24).abs() <= 0.1)
        && dm.as_ref().is_some_and(|b| (b.value - 22.0).abs() <= 1.0);
    run.report(
        4,
        pass,
        t,
        format!(
            "synthesis at 35 {}, observer at 35 {}, static max lambda {} (9.24), max delta {} (22)",
            ctrl.is_some(),
            obs.is_some(),
            bracket_text(&st),
            bracket_text(&dm)
        ),
    );
}

fn criterion5(run: &mut Run) {
    let t = Instant::now();
    let tri = omega_222_preset();
    let op = tri.discretize(257);
    let m: Vec<f64> = op.grid.nodes.iter().map(|&x| tri.m.eval1(x)).collect();
    let probe = vec![op.grid.sample(|x| (5.0 * PI * x).sin() / (x + 1.0))];
    let (pass, detail) = match neumann_series(&op, &m, 10, 0.0, &probe) {
        Ok(r) => (
            r.history[2..].windows(2).all(|p| p[1] < p[0]) && r.history[10] <= 1e-8,
            format!("residual at K=10 {:.2e}", r.history[10]),
        ),
        Err(e) => (false, e.to_string()),
    };
    run.report(5, pass, t, detail);
}

fn margin_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

fn criterion6(run: &mut Run) {
    let t = Instant::now();
    let s = SimSettings::default();
    let cases: [(&str, Box<dyn Fn(f64) -> PdeSystem>, Vec<f64>, f64, f64); 3] = [
        ("cubic", Box::new(PdeSystem::cubic_example), margin_grid(4.5, 4.8, 0.01), 4.66, 0.05),
        ("heat", Box::new(|l| PdeSystem::heat(l, Boundary::MixedDirichletNeumann)), margin_grid(2.40, 2.53, 0.005), 2.467, 0.01),
        ("dirichlet", Box::new(|l| PdeSystem::heat(l, Boundary::DirichletDirichlet)), margin_grid(9.7, 10.0, 0.01), 9.87, 0.05),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, family, grid, want, tol) in cases {
        let c = Instant::now();
        let got = empirical_margin(family, &grid, &s).ok().flatten();
        let secs = c.elapsed().as_secs_f64();
        pass &= got.is_some_and(|g| (g - want).abs() <= tol) && secs <= 120.0;
        parts.push(format!("{name} {got:?} ({want}) {secs:.0}s"));
    }
    run.report(6, pass, t, parts.join(", "));
}

// property checks

fn poly2() -> impl Strategy<Value = Poly> {
    prop::collection::vec((0u16..4, 0u16..4, -3.0f64..3.0), 0..8)
        .prop_map(|t| Poly::from_terms(t.into_iter().map(|(i, j, c)| (Mono::xy(i, j), c))))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn prop_poly() -> bool {
    let mut r = runner(64);
    let basis = MonomialBasis::total_degree(&[Var::X, Var::Y], 6);
    r.run(&(poly2(), poly2(), 0.0f64..1.0, 0.0f64..1.0), |(p, q, x, y)| {
        let pt = [x, y, 0.0];
        prop_assert!(close(p.mul(&q).eval(&pt), p.eval(&pt) * q.eval(&pt), 1e-9));
        prop_assert!(close(p.add(&q).eval(&pt), p.eval(&pt) + q.eval(&pt), 1e-9));
        prop_assert_eq!(p.swap(Var::X, Var::Y).swap(Var::X, Var::Y), p.clone());
        prop_assert!(p.antiderivative(Var::X).differentiate(Var::X).sub(&p).max_abs_coef() < 1e-12);
        prop_assert_eq!(Poly::from_coefficients(&basis, &p.coefficients_in(&basis).unwrap()), p);
        Ok(())
    })
    .is_ok()
}

fn gram(d: u16, eps: f64, e: &[f64], interval: bool) -> KernelTriple {
    let lay = GramLayout::new(d, d);
    let n = lay.size();
    let psd = |e: &[f64]| {
        let b = DMatrix::from_fn(n, n, |i, j| e[(i * n + j) % e.len()]);
        &b * b.transpose() / n as f64
    };
    let mut u = psd(e);
    for i in 0..lay.n1() {
        u[(i, i)] += eps;
    }
    let mut c = GramCertificate::new(d, d, eps, u);
    if interval {
        c.interval = Some(psd(&e.iter().rev().copied().collect::<Vec<_>>()));
    }
    c.build().expect("gram triple")
}

fn prop_gram() -> bool {
    let grid = Grid::uniform(201);
    runner(32)
        .run(
            &(prop::collection::vec(-1.0f64..1.0, 7..29), prop::collection::vec(-2.0f64..2.0, 1..6), any::<bool>()),
            |(e, w, interval)| {
                let t = gram(2, 0.05, &e, interval);
                prop_assert!(t.is_self_adjoint());
                let wp = Poly::univariate(Var::X, &w);
                let wv = grid.sample(|x| wp.eval1(x));
                let n2 = grid.inner(&wv, &wv);
                prop_assert!(t.quadratic_form(&grid, &wv) >= 0.05 * n2 - 1e-8 * (1.0 + n2));
                Ok(())
            },
        )
        .is_ok()
}

fn x() -> Poly {
    Poly::monomial(Var::X, 1)
}

fn int01(p: &Poly) -> f64 {
    p.integrate(Var::X, &Poly::zero(), &Poly::constant(1.0)).eval(&[0.0; 3])
}

fn integral_part(k1: &Poly, k2: &Poly, y: &Poly) -> Poly {
    let ys = y.rename(Var::X, Var::Y);
    k1.mul(&ys)
        .integrate(Var::Y, &Poly::zero(), &x())
        .add(&k2.mul(&ys).integrate(Var::Y, &x(), &Poly::constant(1.0)))
}

fn apply(t: &PolyTriple<f64>, y: &Poly) -> Poly {
    t.m.mul(y).add(&integral_part(&t.k1, &t.k2, y))
}

fn generate(sys: &PdeSystem, w: &Poly) -> Poly {
    let dw = w.differentiate(Var::X);
    sys.a.mul(&dw.differentiate(Var::X)).add(&sys.b.mul(&dw)).add(&sys.c.mul(w))
}

fn kernel(c: &[f64]) -> Poly {
    Poly::from_terms((0..9u16).zip(c).map(|(k, v)| (Mono::xy(k / 3, k % 3), *v)))
}

fn random_system(c: &[f64]) -> PdeSystem {
    PdeSystem::new(
        Poly::univariate(Var::X, &[1.5, 0.5 * c[0], 0.5 * c[1]]),
        Poly::univariate(Var::X, &[c[2], c[3]]),
        Poly::univariate(Var::X, &[c[4], c[5], c[6]]),
        Boundary::MixedDirichletNeumann,
    )
    .expect("positive diffusion")
}

fn coefs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn prop_linearity() -> bool {
    runner(32)
        .run(&(coefs(7), coefs(3), coefs(9), coefs(3), coefs(9), -2.0f64..2.0), |(sc, m1, k1, m2, k2, al)| {
            let sys = random_system(&sc);
            let mk = |m: &[f64], k: &[f64]| PolyTriple {
                m: Poly::univariate(Var::X, m),
                k1: kernel(k),
                k2: kernel(k).swap(Var::X, Var::Y),
            };
            let (s, u) = (mk(&m1, &k1), mk(&m2, &k2));
            let mixed = s.scale(al).add(&u);
            let (qs, qu, qm) = (m_eps_map(&s, &sys, 0.0), m_eps_map(&u, &sys, 0.0), m_eps_map(&mixed, &sys, 0.0));
            prop_assert!(close(qm.q0_11, al * qs.q0_11 + qu.q0_11, 1e-9));
            for (a, b, c) in [(&qm.q0_22, &qs.q0_22, &qu.q0_22), (&qm.q1, &qs.q1, &qu.q1), (&qm.q2, &qs.q2, &qu.q2)] {
                prop_assert!(a.sub(&b.scale(al).add(c)).max_abs_coef() < 1e-9);
            }
            let (ts, tu, tm) = (n_eps_map(&s, &sys, 0.0), n_eps_map(&u, &sys, 0.0), n_eps_map(&mixed, &sys, 0.0));
            prop_assert!(close(tm.t0_11, al * ts.t0_11 + tu.t0_11, 1e-9));
            for (a, b, c) in [(&tm.t0_22, &ts.t0_22, &tu.t0_22), (&tm.t1, &ts.t1, &tu.t1), (&tm.t2, &ts.t2, &tu.t2)] {
                prop_assert!(a.sub(&b.scale(al).add(c)).max_abs_coef() < 1e-9);
            }
            Ok(())
        })
        .is_ok()
}

fn prop_identities() -> bool {
    runner(48)
        .run(&(coefs(7), coefs(3), coefs(9), coefs(4)), |(sc, mc, kc, pc)| {
            let sys = random_system(&sc);
            let a1 = sys.a.eval1(1.0);

            let k1 = kernel(&kc);
            let tri = PolyTriple { m: Poly::univariate(Var::X, &mc), k1: k1.clone(), k2: k1.swap(Var::X, Var::Y) };
            let xp = x().mul(&Poly::univariate(Var::X, &pc));
            let w = xp.sub(&Poly::monomial(Var::X, 2).scale(xp.differentiate(Var::X).eval1(1.0) / 2.0));
            let dw = w.differentiate(Var::X);
            let q = m_eps_map(&tri, &sys, 0.0);
            let w1 = w.eval1(1.0);
            let lhs = 2.0 * int01(&apply(&tri, &w).mul(&generate(&sys, &w)));
            let rhs = q.q0_11 * w1 * w1
                + 2.0 * w1 * int01(&q.q0_12.mul(&w))
                + int01(&q.q0_22.mul(&w).mul(&w))
                + int01(&w.mul(&integral_part(&q.q1, &q.q2, &w)))
                - 2.0 * int01(&sys.a.mul(&tri.m).mul(&dw).mul(&dw))
                + dw.eval1(0.0) * int01(&q.q3.mul(&w));
            prop_assert!(close(lhs, rhs, 1e-8));

            let k1 = kernel(&kc).mul(&Poly::monomial(Var::Y, 1));
            let tri = PolyTriple { m: tri.m.clone(), k1: k1.clone(), k2: k1.swap(Var::X, Var::Y) };
            let y = xp;
            let dy = y.differentiate(Var::X);
            let pw = apply(&tri, &y);
            let t = n_eps_map(&tri, &sys, 0.0);
            let y1 = y.eval1(1.0);
            let lhs = 2.0 * int01(&generate(&sys, &pw).mul(&y));
            let rhs = t.t0_11 * y1 * y1
                + 2.0 * y1 * int01(&t.t0_12.mul(&y))
                + 2.0 * a1 * y1 * pw.differentiate(Var::X).eval1(1.0)
                + int01(&t.t0_22.mul(&y).mul(&y))
                + int01(&y.mul(&integral_part(&t.t1, &t.t2, &y)))
                - 2.0 * int01(&sys.a.mul(&tri.m).mul(&dy).mul(&dy));
            prop_assert!(close(lhs, rhs, 1e-8));
            Ok(())
        })
        .is_ok()
}

fn prop_wirtinger() -> bool {
    runner(100)
        .run(&prop::collection::vec(-1.0f64..1.0, 1..9), |pc| {
            let z = x().mul(&Poly::univariate(Var::X, &pc));
            let dz = z.differentiate(Var::X);
            prop_assert!(int01(&z.mul(&z)) <= 4.0 / (PI * PI) * int01(&dz.mul(&dz)) + 1e-12);
            Ok(())
        })
        .is_ok()
}

fn prop_inverse() -> bool {
    runner(32)
        .run(&(coefs(4), 0.5f64..2.0), |(k, m)| {
            let k1 = Poly::from_terms((0..4u16).map(|i| (Mono::xy(i / 2, i % 2), 0.15 * k[i as usize])));
            let tri = KernelTriple::new(Poly::univariate(Var::X, &[m, 0.0, 0.5]), k1.clone(), k1.swap(Var::X, Var::Y));
            let inv = tri.neumann_inverse(65, 300, 1e-14).unwrap();
            let dense = tri.discretize(65).matrix.try_inverse().unwrap();
            prop_assert!((&inv.op.matrix - &dense).abs().max() <= 1e-6 * dense.abs().max());
            Ok(())
        })
        .is_ok()
}

fn criterion7(run: &mut Run) {
    let t = Instant::now();
    let props = [
        ("polynomial algebra", prop_poly()),
        ("gram symmetry and positivity", prop_gram()),
        ("map linearity", prop_linearity()),
        ("primal and dual identities", prop_identities()),
        ("wirtinger", prop_wirtinger()),
        ("neumann vs dense", prop_inverse()),
    ];
    let mut detail: Vec<String> = props.iter().filter(|p| !p.1).map(|p| format!("{} failed", p.0)).collect();
    let bad: Vec<&Decay> = run.decays.iter().filter(|d| !d.ok()).collect();
    for d in &bad {
        detail.push(format!("{} exponent {:.3} against delta {}", d.label, d.exponent, d.delta));
    }
    let pass = detail.is_empty();
    detail.push(format!("{} certificates simulated", run.decays.len()));
    run.report(7, pass, t, detail.join("; "));
}

fn main() {
    let mut run = Run {
        ipm: InteriorPoint::default(),
        decays: Vec::new(),
        results: Vec::new(),
    };
    criterion1(&mut run);
    criterion2(&mut run);
    criterion3(&mut run);
    criterion4(&mut run);
    criterion5(&mut run);
    criterion6(&mut run);
    criterion7(&mut run);
    let passed = run.results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria pass", run.results.len());
    if std::env::var("SOSLYAP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") && passed < run.results.len() {
        std::process::exit(1);
    }
}
