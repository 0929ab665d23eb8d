//! Direct-problem integration tests against independent oracles: exact
//! rational recurrences for the band data, truncated-matrix eigenvalues for
//! bound states, and recurrence/tail consistency for the Jost solutions.

mod common;

use common::*;
use jacres::background::{Background, PeriodicBackground, SurfacePoint};
use jacres::perturbed::{Perturbation, Perturbed};
use jacres::states::{states, StateKind};
use jacres::{JacError, Tolerances};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn eval_f64(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Roots of a polynomial known to have simple real roots, by sign-change
/// bisection on a dense grid. Independent of the library's root finder.
fn bisect_roots(coeffs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let n = 8000;
    let mut roots = Vec::new();
    let mut prev = eval_f64(coeffs, lo);
    for i in 1..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let val = eval_f64(coeffs, x);
        if prev == 0.0 {
            roots.push(lo + (hi - lo) * (i - 1) as f64 / n as f64);
        } else if prev * val < 0.0 {
            let (mut a, mut b) = (lo + (hi - lo) * (i - 1) as f64 / n as f64, x);
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                if eval_f64(coeffs, a) * eval_f64(coeffs, mid) <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev = val;
    }
    roots
}

#[test]
fn q3_band_structure_matches_rational_recurrence() {
    let a = [Rat::new(1, 2), Rat::ONE, Rat::int(2)];
    let b = [Rat::new(1, 4), Rat::new(-1, 4), Rat::ZERO];
    let oracle = rational_background(&a, &b);

    let bg = PeriodicBackground::new(vec![0.5, 1.0, 2.0], vec![0.25, -0.25, 0.0]).unwrap();
    let back = Background::new(bg, Tolerances::default()).unwrap();

    // discriminant coefficients agree exactly
    let delta = oracle.delta.to_f64();
    for (k, &c) in delta.iter().enumerate() {
        let lib = back.disc.delta.coeff(k);
        assert!((lib.re - c).abs() < 1e-13, "delta coeff {k}: {} vs {c}", lib.re);
        assert!(lib.im.abs() < 1e-15);
    }

    // edges: roots of Δ ∓ 1 by independent bisection
    let mut minus_one = delta.clone();
    minus_one[0] -= 1.0;
    let mut plus_one = delta.clone();
    plus_one[0] += 1.0;
    let mut edges = bisect_roots(&minus_one, -6.0, 6.0);
    edges.extend(bisect_roots(&plus_one, -6.0, 6.0));
    edges.sort_by(f64::total_cmp);
    assert_eq!(edges.len(), back.bands.edges.len());
    for (o, l) in edges.iter().zip(back.bands.edges.iter()) {
        assert!((o - l).abs() < 1e-9, "edge {o} vs {l}");
    }

    // Dirichlet points: roots of φ_q; critical points: roots of Δ′
    let mu = bisect_roots(&oracle.phi_q.to_f64(), -6.0, 6.0);
    assert_eq!(mu.len(), back.bands.mu.len());
    for (o, l) in mu.iter().zip(back.bands.mu.iter()) {
        assert!((o - l).abs() < 1e-9);
    }
    let alpha = bisect_roots(&oracle.delta.derivative().to_f64(), -6.0, 6.0);
    assert_eq!(alpha.len(), back.bands.alpha.len());
    for ((o, l), h) in alpha
        .iter()
        .zip(back.bands.alpha.iter())
        .zip(back.bands.h.iter())
    {
        assert!((o - l).abs() < 1e-9);
        let d = eval_f64(&oracle.delta.to_f64(), *o).abs();
        let h_oracle = if d > 1.0 { d.acosh() } else { 0.0 };
        assert!((h - h_oracle).abs() < 1e-9, "h {h} vs {h_oracle}");
    }
}

#[test]
fn free_background_has_closed_gap() {
    let bg = PeriodicBackground::new(vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
    let back = Background::new(bg, Tolerances::default()).unwrap();
    assert_eq!(back.bands.closed, vec![true]);
    assert!(back.bands.h[0].abs() < 1e-7);
    assert!((back.bands.edges[0] + 2.0).abs() < 1e-7);
    assert!((back.bands.edges[3] - 2.0).abs() < 1e-7);
    assert!(back.slits().is_empty());
}

#[test]
fn pert1_bound_states_match_truncated_matrix() {
    let op = bg2_pert1();
    let list = states(&op).unwrap();
    let bound: Vec<f64> = list.bound().map(|s| s.lambda[0]).collect();
    assert_eq!(bound.len(), 4);

    let matrix = TruncatedJacobi::new(&op, 2000);
    let edges = &op.back.bands.edges;
    let mut gap_eigs = matrix.eigs_in(edges[0] - 3.0, edges[0] - 1e-4, 1e-9);
    gap_eigs.extend(matrix.eigs_in(edges[1] + 1e-4, edges[2] - 1e-4, 1e-9));
    gap_eigs.extend(matrix.eigs_in(edges[3] + 1e-4, edges[3] + 4.0, 1e-9));
    for b in &bound {
        let nearest = gap_eigs
            .iter()
            .map(|e| (e - b).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-7, "bound state {b} missing from matrix: {nearest:e}");
    }
}

#[test]
fn pert1_catalog_kinds() {
    let op = bg2_pert1();
    let list = states(&op).unwrap();
    assert_eq!(list.degree, 5);
    assert_eq!(list.total_multiplicity(), 5);
    assert_eq!(list.bound().count(), 4);
    assert_eq!(list.of_kind(StateKind::Antibound).count(), 1);
    let anti = list.of_kind(StateKind::Antibound).next().unwrap();
    assert!(anti.lambda[0] > op.back.bands.edges[3]);
}

#[test]
fn jost_solutions_satisfy_recurrence_and_bloch_tails() {
    let op = bg2_pert1();
    let p = op.p();
    let lam = Complex64::new(0.3, 0.8);
    let pt = SurfacePoint::new(lam, jacres::background::Sheet::One);
    for sign in [1, -1] {
        let f = |n: i64| op.jost_eval(n, &pt, sign).unwrap();
        for n in -3..=(p + 3) {
            let a_n = op.back.bg.a0(n) + op.pert.u(n);
            let a_prev = op.back.bg.a0(n - 1) + op.pert.u(n - 1);
            let b_n = op.back.bg.b0(n) + op.pert.v(n);
            let res = a_prev * f(n - 1) + b_n * f(n) + a_n * f(n + 1) - lam * f(n);
            let scale = f(n).norm().max(1.0);
            assert!(res.norm() < 1e-10 * scale, "recurrence at n={n}, sign={sign}: {res}");
        }
    }
    // finite support: f⁺ coincides with the Bloch solution at and above p+1
    for n in (p + 1)..(p + 6) {
        let f = op.jost_eval(n, &pt, 1).unwrap();
        let psi = op.back.bloch_psi(n, &pt, 1).unwrap();
        assert!((f - psi).norm() < 1e-9 * psi.norm().max(1e-12));
    }
    // and f⁻ with the opposite Bloch solution at and below 0
    for n in -5..=0 {
        let f = op.jost_eval(n, &pt, -1).unwrap();
        let psi = op.back.bloch_psi(n, &pt, -1).unwrap();
        assert!((f - psi).norm() < 1e-9 * psi.norm().max(1e-12));
    }
}

#[test]
fn smatrix_reality_symmetry_across_the_cut() {
    let op = bg2_pert1();
    for &x in &[-2.4, -2.2, -1.9, 1.7, 2.1] {
        let above = jacres::scattering::smatrix(&op, &SurfacePoint::sheet1(x)).unwrap();
        // the boundary value from below is the sheet-2 value over the same λ
        let below = jacres::scattering::smatrix(
            &op,
            &SurfacePoint::new(Complex64::new(x, 0.0), jacres::background::Sheet::Two),
        )
        .unwrap();
        assert!((below.t - above.t.conj()).norm() < 1e-12);
        assert!((below.r_plus - above.r_plus.conj()).norm() < 1e-12);
        assert!((below.r_minus - above.r_minus.conj()).norm() < 1e-12);
    }
}

#[test]
fn random_draws_keep_wronskian_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..5 {
        let op = random_draw(&mut rng);
        let lam = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.4..1.2));
        let pt = SurfacePoint::new(lam, jacres::background::Sheet::One);
        // W_n(f⁻, f⁺) = a_n(f⁻_n f⁺_{n+1} − f⁻_{n+1} f⁺_n) is n-independent
        let w_at = |n: i64| {
            let a_n = op.back.bg.a0(n) + op.pert.u(n);
            let fp = |m: i64| op.jost_eval(m, &pt, 1).unwrap();
            let fm = |m: i64| op.jost_eval(m, &pt, -1).unwrap();
            a_n * (fm(n) * fp(n + 1) - fm(n + 1) * fp(n))
        };
        let w0 = w_at(0);
        for n in [-2i64, 1, op.p(), op.p() + 2] {
            assert!((w_at(n) - w0).norm() < 1e-9 * w0.norm().max(1e-9));
        }
    }
}

#[test]
fn invalid_inputs_rejected() {
    assert!(matches!(
        PeriodicBackground::new(vec![0.5, 3.0], vec![0.0, 0.0]),
        Err(JacError::NormalizationViolated { .. })
    ));
    assert!(matches!(
        PeriodicBackground::new(vec![1.0], vec![0.0]),
        Err(JacError::Schema(_))
    ));
    let back = bg2();
    // a₀ = a⁰₀ + u₀ = 2 − 2.5 < 0
    assert!(matches!(
        Perturbed::new(
            back,
            Perturbation::new(vec![-2.5, 0.0], vec![1.0, 1.0]).unwrap()
        ),
        Err(JacError::ClassViolation(_))
    ));
}
