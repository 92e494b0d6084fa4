use std::f64::consts::FRAC_PI_2;

use blowup_lab::numerics::{fit::refinement_order, make_grid};
use blowup_lab::profile::{fit_tail, gamma_exponent, potential_identity_residual, solve_q, wronskian_residual};

#[test]
fn tail_exponent_and_amplitude_for_several_dimensions() {
    for d in [7usize, 8, 9, 10, 11, 12] {
        let g = make_grid(d, 1e-4, 1e4, 2048).unwrap();
        let p = solve_q(&g).unwrap();
        let (a0, mg) = fit_tail(&p).unwrap();
        let gam = gamma_exponent(d).unwrap();
        println!("d={d} a0={a0:.6} measured_gamma={mg:.6} gamma={gam:.6}");
        assert!(a0 > 0.0);
        assert!((mg - gam).abs() < 0.01 * gam);
        assert!((p.q.values().last().unwrap() - FRAC_PI_2).abs() < 1e-3);
        let lam_fit = p.lam_q.fit_tail().unwrap();
        assert!((-lam_fit.1 - gam).abs() < 0.01 * gam);
    }
}

#[test]
fn v_limits_at_grid_extremes() {
    for d in [7usize, 8, 11] {
        let g = make_grid(d, 1e-4, 1e4, 2048).unwrap();
        let p = solve_q(&g).unwrap();
        let v = p.v.values();
        let gam = p.gamma;
        assert!((v[0] - 1.0).abs() < 0.02);
        assert!((v[v.len() - 1] + gam).abs() < 0.02 * gam);
    }
}

#[test]
fn gamma_function_asymptotics() {
    for d in [7usize, 8, 11] {
        let g = make_grid(d, 1e-4, 1e4, 2048).unwrap();
        let p = solve_q(&g).unwrap();
        let y0 = g.y_min();
        let near0 = p.gamma_fn.values()[0].abs() * y0.powi(d as i32 - 1);
        assert!((near0 - 1.0 / d as f64).abs() < 1e-3, "d={d}: {near0}");
        let (_, q) = p.gamma_fn.fit_tail().unwrap();
        let expect = -(d as f64 - 2.0 - p.gamma);
        assert!((q - expect).abs() < 0.02 * expect.abs(), "d={d}: {q} vs {expect}");
    }
}

#[test]
fn wronskian_and_potential_identity_converge_at_stencil_order() {
    for d in [7usize, 8] {
        let mut wr = Vec::new();
        let mut pot = Vec::new();
        for n in [512usize, 1024, 2048] {
            let g = make_grid(d, 1e-3, 1e3, n).unwrap();
            let p = solve_q(&g).unwrap();
            wr.push(wronskian_residual(&p));
            pot.push(potential_identity_residual(&p));
        }
        let ow = refinement_order(&wr);
        let op = refinement_order(&pot);
        println!("d={d} wronskian {wr:?} orders {ow:?}; potential {pot:?} orders {op:?}");
        assert!(ow.iter().all(|o| (o - 4.0).abs() < 0.5));
        assert!(op.iter().all(|o| (o - 4.0).abs() < 0.5));
    }
}
