use soslyap_core::kernel::KernelTriple;
use soslyap_core::loi::{InteriorPoint, Status};
use soslyap_core::observer::{assemble_output_feedback, residual_boundary_terms, synthesize_observer};
use soslyap_core::quad::Grid;
use soslyap_core::sim::{gaussian_pair, lyapunov_trace, simulate, Input, LyapunovOperator, SimSettings};
use soslyap_core::stability::{stability_test, StabilityOptions};
use soslyap_core::synthesis::{dual_stability_test, synthesize_controller};
use soslyap_core::system::{Boundary, PdeSystem};

fn settings() -> SimSettings {
    SimSettings {
        t_final: 1.0,
        dt: 5e-4,
        n: 61,
        stride: 10,
    }
}

fn heat(l: f64) -> PdeSystem {
    PdeSystem::heat(l, Boundary::MixedDirichletNeumann)
}

#[test]
fn heat_certificate_bounds_simulated_decay() {
    let opts = StabilityOptions::new(5, 0.01, 0.01);
    let cert = stability_test(&heat(2.0), &opts, &InteriorPoint::default()).unwrap();
    assert_eq!(cert.outcome.status, Status::Feasible);
    let p: KernelTriple = cert.triple.unwrap();

    let s = settings();
    let g = Grid::uniform(s.n);
    let tr = simulate(&heat(2.0), Input::Zero, &g.sample(gaussian_pair), None, &s).unwrap();
    let ly = lyapunov_trace(&tr, LyapunovOperator::Direct(&p.discretize(s.n))).unwrap();
    for (v, t) in ly.v.iter().zip(&tr.times) {
        assert!(*v <= ly.v[0] * (-2.0 * opts.delta * t).exp() * (1.0 + 1e-3) + 1e-12);
    }
}

#[test]
fn heat_feasibility_is_monotone() {
    let opts = StabilityOptions::new(3, 1e-3, 0.01);
    let ipm = InteriorPoint::default();
    let ok = |l: f64| stability_test(&heat(l), &opts, &ipm).unwrap().outcome.is_feasible();
    let lams = [0.5, 1.5, 2.3, 2.6, 3.0];
    let res: Vec<bool> = lams.iter().map(|&l| ok(l)).collect();
    assert!(res[0]);
    assert!(!res[4]);
    for w in res.windows(2) {
        assert!(w[0] || !w[1], "{res:?}");
    }
}

#[test]
fn dual_and_primal_agree_on_heat() {
    let opts = StabilityOptions::new(3, 1e-3, 0.01);
    let ipm = InteriorPoint::default();
    for l in [1.0, 3.0] {
        let p = stability_test(&heat(l), &opts, &ipm).unwrap().outcome.status;
        let d = dual_stability_test(&heat(l), &opts, &ipm).unwrap().outcome.status;
        assert_eq!(p, d, "lambda {l}");
    }
}

#[test]
fn simulation_is_linear_in_the_initial_state() {
    let s = settings();
    let g = Grid::uniform(s.n);
    let sys = PdeSystem::cubic_example(1.0);
    let u = g.sample(gaussian_pair);
    let v = g.sample(|x| x * (2.0 - x));
    let mix: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
    let (tu, tv, tm) = (
        simulate(&sys, Input::Zero, &u, None, &s).unwrap(),
        simulate(&sys, Input::Zero, &v, None, &s).unwrap(),
        simulate(&sys, Input::Zero, &mix, None, &s).unwrap(),
    );
    for k in 0..tm.states.len() {
        for i in 0..s.n {
            let want = 2.0 * tu.states[k][i] - 0.5 * tv.states[k][i];
            assert!((tm.states[k][i] - want).abs() < 1e-10);
        }
    }
}

#[test]
fn heat_output_feedback_stabilizes() {
    let sys = heat(4.0);
    let ipm = InteriorPoint::default();
    let opts = StabilityOptions::new(3, 1e-3, 0.5);
    let ctrl = synthesize_controller(&sys, &opts, false, &ipm).unwrap();
    assert!(ctrl.outcome.is_feasible());
    let obs = synthesize_observer(&sys, &opts, &ipm).unwrap();
    assert!(obs.outcome.is_feasible());
    let (gc, go) = (ctrl.gains.unwrap(), obs.gains.unwrap());

    let (s11, s12) = residual_boundary_terms(&go);
    assert!(s11.abs() < 1e-9 && s12.max_abs_coef() < 1e-9);

    let s = settings();
    let g = Grid::uniform(s.n);
    let w0 = g.sample(gaussian_pair);
    let open = simulate(&sys, Input::Zero, &w0, None, &s).unwrap();
    assert!(open.fitted_exponent(0.5, 1.0) > 0.0);

    let fb = gc.realize(s.n).unwrap();
    let closed = simulate(&sys, Input::StateFeedback(&fb), &w0, None, &s).unwrap();
    assert!(closed.fitted_exponent(0.5, 1.0) < 0.0);

    let of = assemble_output_feedback(&gc, &go, s.n).unwrap();
    let zero = vec![0.0; s.n];
    let tr = simulate(&sys, Input::OutputFeedback(&of), &w0, Some(&zero), &s).unwrap();
    assert!(!tr.blowup);
    assert!(tr.fitted_exponent(0.5, 1.0) < 0.0);
    assert!(tr.error_trace().unwrap().fitted_exponent(0.5, 1.0) < 0.0);

    // a perfect initial estimate is never corrected away
    let exact = simulate(&sys, Input::OutputFeedback(&of), &w0, Some(&w0), &s).unwrap();
    let err = exact.error_trace().unwrap();
    assert!(err.norms.iter().all(|e| *e < 1e-10), "{:?}", err.norms.last());
}

#[test]
fn observer_requires_neumann_boundary() {
    let sys = PdeSystem::heat(0.0, Boundary::DirichletDirichlet);
    let opts = StabilityOptions::new(2, 1e-3, 0.1);
    assert!(synthesize_observer(&sys, &opts, &InteriorPoint::default()).is_err());
}
