use latcb::dynamics::{dynamic_error, dynamic_error_sweep, integrate_atomistic, solve_cb_wave, DynamicsOptions, InitialData};
use latcb::fourier::FourierField;
use latcb::harness::fit_rate;
use latcb::statics::{static_converge_sweep, MacroForce, StaticOptions};
use latcb::stress::{stress_consistency_field, CbModel};
use latcb::{Polynomial, Potential, RadialFunction};
use nalgebra::DMatrix;
use std::f64::consts::PI;

fn lj_chain() -> Potential {
    Potential::pair(RadialFunction::lennard_jones(), DMatrix::identity(1, 1), 2.0).unwrap()
}

fn stress_slopes(p: &Potential, amplitude: f64) -> (f64, f64) {
    let m = CbModel::new(p.clone());
    let field = FourierField::sine(vec![1], vec![1.0], amplitude);
    let rows: Vec<_> = [8usize, 16, 32, 64, 128]
        .iter()
        .map(|&n| stress_consistency_field(p, &m, &field, n, 4, 1).unwrap())
        .collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let s = fit_rate(&eps, &rows.iter().map(|r| r.stress).collect::<Vec<_>>(), None).unwrap();
    let d = fit_rate(&eps, &rows.iter().map(|r| r.divergence).collect::<Vec<_>>(), None).unwrap();
    (s.slope, d.slope)
}

#[test]
fn stress_gaps_are_second_order_at_moderate_strain() {
    let (s, d) = stress_slopes(&lj_chain(), 0.05 / (2.0 * PI));
    assert!((1.8..=2.2).contains(&s), "stress slope {s}");
    assert!((1.8..=2.2).contains(&d), "divergence slope {d}");
}

#[test]
fn point_symmetric_eam_has_second_order_stress_gap() {
    let p = Potential::eam(
        Some(RadialFunction::lennard_jones()),
        RadialFunction::Exponential { coeff: 1.0, decay: 3.0, r0: 1.0 },
        Polynomial::new(vec![0.0, -1.0, 0.3]),
        DMatrix::identity(1, 1),
        2.0,
    )
    .unwrap();
    let (s, d) = stress_slopes(&p, 0.01 / (2.0 * PI));
    assert!(s >= 1.8, "stress slope {s}");
    assert!(d >= 1.8, "divergence slope {d}");
}

#[test]
fn static_sweep_is_second_order() {
    let force = MacroForce::new(FourierField::sine(vec![1], vec![1.0], 1.0), 0.01).unwrap();
    let sweep = static_converge_sweep(&lj_chain(), &force, &[8, 16, 32, 64, 128], &StaticOptions::default()).unwrap();
    assert!((1.8..=2.2).contains(&sweep.rate.slope), "slope {}", sweep.rate.slope);
    for run in &sweep.runs {
        assert!(run.cb_residual <= 1e-10 && run.atomistic_residual <= 1e-10);
        assert!(run.min_probe_quotient > 0.0);
    }
}

#[test]
fn small_amplitude_dynamics_is_second_order() {
    let u0 = FourierField::sine(vec![1], vec![1.0], 0.002 / (2.0 * PI));
    let data = InitialData::new(u0, FourierField::zero(1)).unwrap();
    let sweep = dynamic_error_sweep(&lj_chain(), &data, &[16, 32, 64, 128], 0.5, &DynamicsOptions::default()).unwrap();
    assert!((1.8..=2.2).contains(&sweep.rate.slope), "slope {}", sweep.rate.slope);
    assert!(sweep.half_dt_change < 0.1, "half-dt change {}", sweep.half_dt_change);
}

#[test]
fn dynamic_error_grows_with_the_horizon() {
    let p = Potential::harmonic_chain(2.0, -0.25);
    let model = CbModel::new(p.clone());
    let u0 = FourierField::sine(vec![1], vec![1.0], 0.01);
    let u1 = FourierField::sine(vec![2], vec![1.0], 0.02);
    let data = InitialData::new(u0, u1).unwrap();
    let opts = DynamicsOptions { grid: 64, ..DynamicsOptions::default() };
    let eps = 1.0 / 32.0;
    let mut last = 0.0;
    for t in [0.1, 0.2, 0.4] {
        let at = integrate_atomistic(&p, &data, eps, t, &opts).unwrap();
        let cb = solve_cb_wave(&model, &data, t, &opts).unwrap();
        let worst = dynamic_error(&at, &cb, eps).unwrap().into_iter().fold(0.0, f64::max);
        assert!(worst >= last, "error {worst} at T = {t} below {last}");
        last = worst;
    }
}
