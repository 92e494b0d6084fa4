use std::sync::Arc;

use blowup_lab::linop::{apply_l, generate_tk, OperatorContext, TkFamily};
use blowup_lab::numerics::{linear_fit, make_grid};
use blowup_lab::profile::solve_q;
use blowup_lab::qb::*;

fn setup(d: usize, l: usize, n: usize) -> (OperatorContext, Arc<TkFamily>, Arc<SkFamily>) {
    let g = make_grid(d, 1e-4, 1e5, n).unwrap();
    let ctx = OperatorContext::new(Arc::new(solve_q(&g).unwrap()));
    let tks = generate_tk(&ctx, l).unwrap();
    let sks = build_sk(&ctx, &tks, l).unwrap();
    (ctx, Arc::new(tks), Arc::new(sks))
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (a.ln() + (b / a).ln() * i as f64 / (n - 1) as f64).exp()).collect()
}

#[test]
fn sk_structure_and_homogeneity() {
    let (_, _, sks) = setup(8, 3, 2304);
    assert!(sks.get(1).is_none());
    assert_eq!(sks.s.len(), 4);
    for k in 2..=5 {
        let s = sks.get(k).unwrap();
        s.check_homogeneity().unwrap();
        assert_eq!(s.degree, (k, k as i32 - 1, k));
        for m in k..=3 {
            assert!(s.partial(m).is_empty(), "∂S_{k}/∂b_{m} must vanish");
        }
        let b = [2e-3, -3e-6, 5e-9];
        let mu: f64 = 0.37;
        let scaled = [mu * b[0], mu * mu * b[1], mu.powi(3) * b[2]];
        let a = s.evaluate(&b).unwrap();
        let c = s.evaluate(&scaled).unwrap();
        let scale = a.max_abs();
        for (x, z) in a.values().iter().zip(c.values()) {
            assert!((z - mu.powi(k as i32) * x).abs() <= 1e-14 * scale);
        }
    }
}

#[test]
fn sk_tail_and_origin_exponents() {
    let (_, _, sks) = setup(8, 2, 2304);
    let gamma = sks.gamma;
    for (idx, tails) in sks.tail_exponents.iter().enumerate() {
        let k = idx + 2;
        for (m, q) in tails {
            println!("S_{k} {m:?} tail {q:.4}");
            assert!(*q <= 2.0 * (k as f64 - 1.0) - gamma + 0.1);
        }
        for (m, _) in sks.s[idx].terms() {
            let c = sks.s[idx].coefficient(m).unwrap();
            let (_, p) = c.fit_origin().unwrap();
            assert!(p >= 2.0 * k as f64 + 1.0 - 0.5, "S_{k} {m:?} origin exponent {p}");
        }
    }
}

#[test]
fn d7_sk_tails_lose_one_power() {
    let (_, _, sks) = setup(7, 2, 2304);
    let q = sks.tail_exponents[0].iter().map(|(_, q)| *q).fold(f64::MIN, f64::max);
    assert!((q - 1.0).abs() < 0.05, "S_2 tail {q}");
}

#[test]
fn s2_solves_its_defining_equation() {
    let (ctx, tks, sks) = setup(8, 1, 2304);
    let gamma = sks.gamma;
    let df = 8.0;
    let s2 = sks.get(2).unwrap().coefficient(&[2]).unwrap();
    let ls2 = apply_l(&ctx, &s2).unwrap();
    let lt1 = tks.lam_t(&ctx, 1);
    let v = ctx.pack().q_deficit.values();
    let f2: Vec<f64> = (0..s2.len())
        .map(|i| {
            let y = s2.y()[i];
            let fpp = -4.0 * (2.0 * v[i]).sin();
            lt1.values()[i] - (2.0 - gamma) * tks.t[1].values()[i]
                + (df - 1.0) / (2.0 * y * y) * 0.5 * fpp * tks.t[1].values()[i].powi(2)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (i, &y) in s2.y().iter().enumerate() {
        if (1e-2..=1e2).contains(&y) {
            worst = worst.max((ls2.values()[i] + f2[i]).abs() / f2[i].abs().max(1e-3 * y.powf(-gamma)));
        }
    }
    println!("S_2 residual {worst:e}");
    assert!(worst < 1e-5);
}

#[test]
fn zero_parameters_give_the_ground_state() {
    let (ctx, tks, sks) = setup(8, 2, 2304);
    let p = assemble_qb(&ctx, tks, sks, &[0.0, 0.0], DEFAULT_ETA).unwrap();
    assert_eq!(p.qb.values(), ctx.pack().q.values());
    assert_eq!(p.qb_localized.values(), ctx.pack().q.values());
    let (psi, _) = compute_psib(&p, &[0.0, 0.0]).unwrap();
    assert_eq!(psi.max_abs(), 0.0);
}

#[test]
fn localization_support() {
    let (ctx, tks, sks) = setup(8, 2, 2304);
    let p = assemble_qb(&ctx, tks, sks, &[3e-3, 1e-6], DEFAULT_ETA).unwrap();
    for (i, &y) in ctx.grid().nodes().iter().enumerate() {
        if y <= p.b1_radius {
            assert_eq!(p.qb_localized.values()[i], p.qb.values()[i]);
        }
        if y >= 2.0 * p.b1_radius {
            assert_eq!(p.qb_localized.values()[i], ctx.pack().q.values()[i]);
        }
    }
    let too_small = assemble_qb(&ctx, p.tks.clone(), p.sks.clone(), &[1e-7, 0.0], DEFAULT_ETA);
    assert!(too_small.is_err());
}

#[test]
fn profile_correction_is_linear_in_b1() {
    let (ctx, tks, sks) = setup(8, 2, 2304);
    let bs = logspace(1e-3, 1e-2, 5);
    let dev: Vec<f64> = bs
        .iter()
        .map(|&b1| {
            let p = assemble_qb(&ctx, tks.clone(), sks.clone(), &[b1, 0.0], DEFAULT_ETA).unwrap();
            p.qb.sub(&ctx.pack().q).max_abs_on(0.0, 1.0)
        })
        .collect();
    let lx: Vec<f64> = bs.iter().map(|b| b.ln()).collect();
    let ly: Vec<f64> = dev.iter().map(|b| b.ln()).collect();
    let fit = linear_fit(&lx, &ly).unwrap();
    assert!((fit.slope - 1.0).abs() < 0.1, "slope {}", fit.slope);
}

#[test]
fn modulation_vector_is_linear_in_the_law() {
    let (ctx, tks, sks) = setup(8, 2, 2304);
    let b = [4e-3, -2e-6];
    let p = assemble_qb(&ctx, tks.clone(), sks.clone(), &b, DEFAULT_ETA).unwrap();
    let law = exact_law(&b, sks.gamma);
    let rounding = 1e-14 * law.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = tks.t[1].max_abs_on(0.0, 2.0 * p.b1_radius) + tks.t[2].max_abs_on(0.0, 2.0 * p.b1_radius);
    let m0 = mod_vector(&p, &law).unwrap();
    println!("mod {:e} at exact law, bound {:e}", m0.max_abs_on(0.0, 2.0 * p.b1_radius), rounding * scale);
    assert!(m0.max_abs_on(0.0, 2.0 * p.b1_radius) <= rounding * scale);
    let eps = 1e-7;
    let perturbed = mod_vector(&p, &[law[0] + eps, law[1]]).unwrap();
    let mut dir = tks.t[1].clone();
    for j in 2..=4 {
        dir = dir.add(&sks.get(j).unwrap().partial(1).evaluate(&b).unwrap());
    }
    for (a, d) in perturbed.values().iter().zip(dir.values()) {
        assert!((a - eps * d).abs() <= 1e-12 * (eps * d).abs().max(1e-300));
    }
}

/// (bulk agreement holds, max |Ψ̃ − Ψ̃_stencil| inside the cutoff band B₁ ≤ y ≤ 2B₁).
fn stencil_comparison(n: usize) -> (bool, f64) {
    let (ctx, tks, sks) = setup(8, 2, n);
    let b = [1e-2, 0.0];
    let p = assemble_qb(&ctx, tks, sks.clone(), &b, DEFAULT_ETA).unwrap();
    let law = exact_law(&b, sks.gamma);
    let (psi, _) = compute_psib(&p, &law).unwrap();
    let st = compute_psib_stencil(&p, &law).unwrap();
    let lq = ctx.pack().lam_q.values();
    let mut bulk = true;
    let mut band: f64 = 0.0;
    for (i, &y) in ctx.grid().nodes().iter().enumerate() {
        let diff = (psi.values()[i] - st.values()[i]).abs();
        if (1e-2..p.b1_radius).contains(&y) {
            // Stencil truncation error acts on the O(b_1) part of the profile.
            bulk &= diff <= 1e-2 * psi.values()[i].abs() + 1e-5 * b[0] * lq[i];
        } else if (p.b1_radius..=2.0 * p.b1_radius).contains(&y) {
            band = band.max(diff);
        }
    }
    (bulk, band)
}

#[test]
fn structured_residual_matches_stencil_residual() {
    let (bulk, coarse) = stencil_comparison(2304);
    let (_, fine) = stencil_comparison(4608);
    println!("cutoff band difference {coarse:e} -> {fine:e}");
    assert!(bulk);
    assert!(fine < coarse / 8.0);
}

fn weighted_norm_exponent(ctx: &OperatorContext, tks: &Arc<TkFamily>, sks: &Arc<SkFamily>, lo: f64, hi: f64) -> f64 {
    let bs = logspace(lo, hi, 6);
    let norms: Vec<f64> = bs
        .iter()
        .map(|&b1| {
            let b = [b1, 0.0];
            let p = assemble_qb(ctx, tks.clone(), sks.clone(), &b, DEFAULT_ETA).unwrap();
            compute_psib(&p, &exact_law(&b, sks.gamma)).unwrap().1.weighted_norms[0]
        })
        .collect();
    let lx: Vec<f64> = bs.iter().map(|b| b.ln()).collect();
    linear_fit(&lx, &norms.iter().map(|v| v.ln()).collect::<Vec<_>>()).unwrap().slope
}

#[test]
fn residual_scaling_approaches_the_weighted_bound() {
    let g = make_grid(8, 1e-4, 1e5, 2304).unwrap();
    let ctx = OperatorContext::new(Arc::new(solve_q(&g).unwrap()));
    let tks = Arc::new(generate_tk(&ctx, 2).unwrap());
    let sks = Arc::new(build_sk(&ctx, &tks, 2).unwrap());
    let expect = 4.0 + 2.0 * (1.0 - ctx.pack().delta);
    let near = weighted_norm_exponent(&ctx, &tks, &sks, 1e-3, 1e-2);
    let far = weighted_norm_exponent(&ctx, &tks, &sks, 1e-5, 1e-4);
    println!("weighted norm exponent {near:.4} on [1e-3,1e-2], {far:.4} on [1e-5,1e-4]; bound {expect:.4}");
    assert!((far - expect).abs() <= 0.3);
    assert!((far - expect).abs() < (near - expect).abs());
}

#[test]
fn local_residual_is_of_order_b_to_the_2l_plus_6() {
    let (ctx, tks, sks) = setup(8, 2, 2304);
    let bs = logspace(1e-3, 1e-2, 5);
    let local: Vec<f64> = bs
        .iter()
        .map(|&b1| {
            let b = [b1, 0.0];
            let p = assemble_qb(&ctx, tks.clone(), sks.clone(), &b, DEFAULT_ETA).unwrap();
            let (psi, _) = compute_psib(&p, &exact_law(&b, sks.gamma)).unwrap();
            local_sobolev_norm(&ctx, &psi, 2.0, ctx.pack().hbar as usize + 1).unwrap()
        })
        .collect();
    let lx: Vec<f64> = bs.iter().map(|b| b.ln()).collect();
    let fit = linear_fit(&lx, &local.iter().map(|v| v.ln()).collect::<Vec<_>>()).unwrap();
    println!("local exponent {}", fit.slope);
    assert!(fit.slope >= 2.0 * 2.0 + 5.0);
}

#[test]
fn parameter_derivatives_match_finite_differences() {
    let (ctx, tks, sks) = setup(8, 2, 2304);
    let b = [2e-2, -1e-4];
    let p = assemble_qb(&ctx, tks.clone(), sks.clone(), &b, DEFAULT_ETA).unwrap();
    let dirs = parameter_derivatives(&p).unwrap();
    for j in 0..2 {
        let h = 1e-4 * b[j].abs();
        let mut bp = b;
        let mut bm = b;
        bp[j] += h;
        bm[j] -= h;
        let qp = assemble_qb(&ctx, tks.clone(), sks.clone(), &bp, DEFAULT_ETA).unwrap().qb_localized;
        let qm = assemble_qb(&ctx, tks.clone(), sks.clone(), &bm, DEFAULT_ETA).unwrap().qb_localized;
        let fd = qp.sub(&qm).scale(0.5 / h);
        let err = fd.sub(&dirs[j]).max_abs() / dirs[j].max_abs();
        println!("b_{} derivative relative error {err:e}", j + 1);
        assert!(err < 1e-6);
    }
}
