use blowup_lab::numerics::{fit::refinement_order, inner_product, make_grid, GridFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gaussian_moment_matches_closed_form() {
    let g = make_grid(7, 1e-4, 9.0, 2048).unwrap();
    let f = GridFunction::from_fn(&g, Some(0), |y| (-y * y).exp());
    let exact = 15.0 * std::f64::consts::PI.sqrt() / 16.0;
    let rel = (f.integral() / exact - 1.0).abs();
    println!("gaussian moment relative error {rel:e}");
    assert!(rel <= 1e-8);
}

#[test]
fn quadrature_converges_at_stencil_order() {
    for p in [0, 1, 2] {
        let f = |y: f64| y.powi(p) * (-y).exp();
        let reference = {
            let g = make_grid(7, 0.1, 5.0, 65536).unwrap();
            GridFunction::from_fn(&g, None, f).integral()
        };
        let errs: Vec<f64> = [128usize, 256, 512]
            .iter()
            .map(|&n| {
                let g = make_grid(7, 0.1, 5.0, n).unwrap();
                (GridFunction::from_fn(&g, None, f).integral() - reference).abs()
            })
            .collect();
        let orders = refinement_order(&errs);
        println!("p={p} errors {errs:?} orders {orders:?}");
        assert!(orders.iter().all(|o| *o >= 3.5));
    }
}

#[test]
fn grid_is_log_uniform_with_positive_weights() {
    let g = make_grid(8, 1e-4, 1e4, 1024).unwrap();
    let y = g.nodes();
    assert_eq!(y.len(), 1024);
    let r = y[1] / y[0];
    assert!(y.windows(2).all(|w| (w[1] / w[0] / r - 1.0).abs() < 1e-12));
    assert!(g.weights().iter().all(|w| *w > 0.0));
    assert!(make_grid(6, 1e-4, 1e4, 1024).is_err());
    assert!(make_grid(8, 2.0, 1e4, 1024).is_err());
    assert!(make_grid(8, 1e-4, 1e4, 32).is_err());
}

#[test]
fn inner_product_is_symmetric_and_positive() {
    let g = make_grid(7, 1e-3, 1e3, 1024).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..16 {
        let (a, b): (f64, f64) = (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
        let f = GridFunction::from_fn(&g, Some(1), |y| y * (-a * y * y).exp());
        let h = GridFunction::from_fn(&g, Some(1), |y| y * (1.0 - y) * (-b * y * y).exp());
        assert_eq!(inner_product(&f, &h).unwrap(), inner_product(&h, &f).unwrap());
        assert!(inner_product(&f, &f).unwrap() > 0.0);
    }
    let other = make_grid(7, 1e-3, 1e3, 512).unwrap();
    let f = GridFunction::from_fn(&g, Some(1), |y| y);
    let h = GridFunction::from_fn(&other, Some(1), |y| y);
    assert!(inner_product(&f, &h).is_err());
}

#[test]
fn derivative_of_square_and_constant() {
    let g = make_grid(7, 1e-3, 1e3, 1024).unwrap();
    let f = GridFunction::from_fn(&g, Some(2), |y| y * y);
    let d = f.differentiate(1);
    let rel = (4..g.len() - 4).map(|i| (d.values()[i] / (2.0 * g.nodes()[i]) - 1.0).abs()).fold(0.0, f64::max);
    println!("d/dy y^2 relative error {rel:e}");
    assert!(rel <= 1e-6);
    let c = GridFunction::from_fn(&g, Some(0), |_| 3.0);
    assert!(c.lambda().max_abs() < 1e-11);
    assert!(c.dxx().max_abs() < 1e-9);
}

#[test]
fn second_derivative_of_sine_converges_at_stencil_order() {
    let mut errs = Vec::new();
    for n in [512usize, 1024, 2048] {
        let g = make_grid(7, 1e-2, 10.0, n).unwrap();
        let f = GridFunction::from_fn(&g, Some(1), f64::sin);
        let d2 = f.differentiate(2);
        let err = (8..g.len() - 8).map(|i| (d2.values()[i] + g.nodes()[i].sin()).abs()).fold(0.0, f64::max);
        errs.push(err);
    }
    let orders = refinement_order(&errs);
    println!("sin'' errors {errs:?} orders {orders:?}");
    assert!(orders.iter().all(|o| (o - 4.0).abs() < 0.5));
}
