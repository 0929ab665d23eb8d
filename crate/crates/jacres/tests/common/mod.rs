//! Shared fixtures and independent oracles for the integration suite:
//! exact rational recurrence for the background polynomials, an ℓ²-sum
//! check for norming constants, a Sturm-bisection eigenvalue solver for
//! truncated matrices, and the randomized draw machinery.

#![allow(dead_code)]

use jacres::background::{Background, PeriodicBackground, SurfacePoint};
use jacres::perturbed::{Perturbation, Perturbed};
use jacres::scattering::{check_hypothesis1, NormingConstants, PoleSplit};
use jacres::states::states;
use jacres::Tolerances;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn bg2() -> Background {
    let bg = PeriodicBackground::new(vec![0.5, 2.0], vec![0.0, 0.0]).unwrap();
    Background::new(bg, Tolerances::default()).unwrap()
}

pub fn pert1() -> Perturbation {
    Perturbation::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap()
}

pub fn bg2_pert1() -> Perturbed {
    Perturbed::new(bg2(), pert1()).unwrap()
}

// ---------------------------------------------------------------- rationals

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// Exact rational arithmetic, wide enough for short-period transfer matrices.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Rat {
    pub n: i128,
    pub d: i128,
}

impl Rat {
    pub const ZERO: Rat = Rat { n: 0, d: 1 };
    pub const ONE: Rat = Rat { n: 1, d: 1 };

    pub fn new(n: i128, d: i128) -> Rat {
        assert!(d != 0);
        let g = gcd(n, d) * d.signum();
        Rat { n: n / g, d: d / g }
    }

    pub fn int(n: i128) -> Rat {
        Rat { n, d: 1 }
    }

    pub fn add(self, o: Rat) -> Rat {
        Rat::new(self.n * o.d + o.n * self.d, self.d * o.d)
    }

    pub fn sub(self, o: Rat) -> Rat {
        Rat::new(self.n * o.d - o.n * self.d, self.d * o.d)
    }

    pub fn mul(self, o: Rat) -> Rat {
        Rat::new(self.n * o.n, self.d * o.d)
    }

    pub fn div(self, o: Rat) -> Rat {
        assert!(o.n != 0);
        Rat::new(self.n * o.d, self.d * o.n)
    }

    pub fn neg(self) -> Rat {
        Rat { n: -self.n, d: self.d }
    }

    pub fn to_f64(self) -> f64 {
        self.n as f64 / self.d as f64
    }
}

/// Polynomial with exact rational coefficients, ascending powers.
#[derive(Clone, Debug, PartialEq)]
pub struct RatPoly(pub Vec<Rat>);

impl RatPoly {
    pub fn zero() -> RatPoly {
        RatPoly(vec![])
    }

    pub fn constant(c: Rat) -> RatPoly {
        if c.n == 0 {
            RatPoly::zero()
        } else {
            RatPoly(vec![c])
        }
    }

    pub fn coeff(&self, k: usize) -> Rat {
        self.0.get(k).copied().unwrap_or(Rat::ZERO)
    }

    pub fn degree(&self) -> Option<usize> {
        let mut d = None;
        for (k, c) in self.0.iter().enumerate() {
            if c.n != 0 {
                d = Some(k);
            }
        }
        d
    }

    pub fn add(&self, o: &RatPoly) -> RatPoly {
        let len = self.0.len().max(o.0.len());
        RatPoly((0..len).map(|k| self.coeff(k).add(o.coeff(k))).collect())
    }

    pub fn sub(&self, o: &RatPoly) -> RatPoly {
        self.add(&o.scale(Rat::int(-1)))
    }

    pub fn scale(&self, s: Rat) -> RatPoly {
        RatPoly(self.0.iter().map(|&c| c.mul(s)).collect())
    }

    /// Multiply by (λ − b).
    pub fn mul_linear(&self, b: Rat) -> RatPoly {
        let mut out = vec![Rat::ZERO; self.0.len() + 1];
        for (k, &c) in self.0.iter().enumerate() {
            out[k + 1] = out[k + 1].add(c);
            out[k] = out[k].sub(c.mul(b));
        }
        RatPoly(out)
    }

    pub fn eval(&self, x: Rat) -> Rat {
        let mut acc = Rat::ZERO;
        for &c in self.0.iter().rev() {
            acc = acc.mul(x).add(c);
        }
        acc
    }

    pub fn derivative(&self) -> RatPoly {
        if self.0.len() <= 1 {
            return RatPoly::zero();
        }
        RatPoly(
            self.0[1..]
                .iter()
                .enumerate()
                .map(|(k, &c)| c.mul(Rat::int(k as i128 + 1)))
                .collect(),
        )
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.to_f64()).collect()
    }
}

/// Exact background data from the transfer recurrence over rational
/// coefficients: Δ, φ_q, θ_{q+1}, φ = (φ_{q+1} − θ_q)/2.
pub struct RatBackground {
    pub delta: RatPoly,
    pub phi_upper: RatPoly,
    pub phi_q: RatPoly,
    pub theta_q1: RatPoly,
}

/// θ₀ = 1, θ₁ = 0, φ₀ = 0, φ₁ = 1;
/// y_{n+1} = ((λ − b_n)y_n − a_{n−1}y_{n−1})/a_n with 1-based, q-periodic
/// (a, b) and a₀ ≡ a_q.
pub fn rational_background(a: &[Rat], b: &[Rat]) -> RatBackground {
    let q = a.len() as i64;
    let at = |n: i64| a[((n - 1).rem_euclid(q)) as usize];
    let bt = |n: i64| b[((n - 1).rem_euclid(q)) as usize];
    let mut theta = vec![RatPoly::constant(Rat::ONE), RatPoly::zero()];
    let mut phi = vec![RatPoly::zero(), RatPoly::constant(Rat::ONE)];
    for n in 1..=q {
        let step = |ys: &Vec<RatPoly>| {
            let y1 = &ys[n as usize];
            let y0 = &ys[(n - 1) as usize];
            y1.mul_linear(bt(n))
                .sub(&y0.scale(at(n - 1)))
                .scale(Rat::ONE.div(at(n)))
        };
        let t_next = step(&theta);
        let p_next = step(&phi);
        theta.push(t_next);
        phi.push(p_next);
    }
    let half = Rat::new(1, 2);
    let delta = phi[(q + 1) as usize].add(&theta[q as usize]).scale(half);
    let phi_upper = phi[(q + 1) as usize].sub(&theta[q as usize]).scale(half);
    RatBackground {
        delta,
        phi_upper,
        phi_q: phi[q as usize].clone(),
        theta_q1: theta[(q + 1) as usize].clone(),
    }
}

/// The BG2 data with a = (1/2, 2), b = 0.
pub fn rational_bg2() -> RatBackground {
    rational_background(
        &[Rat::new(1, 2), Rat::int(2)],
        &[Rat::ZERO, Rat::ZERO],
    )
}

// ---------------------------------------------------------- random drawing

/// Background with a⁰_j = exp(x_j) (last entry normalized so ∏ a⁰ = 1) and
/// b⁰_j ~ U(−0.3, 0.3).
pub fn random_background(rng: &mut ChaCha8Rng, q: usize) -> Background {
    let mut a: Vec<f64> = (0..q - 1)
        .map(|_| rng.gen_range(-0.3..0.3f64).exp())
        .collect();
    let prod: f64 = a.iter().product();
    a.push(1.0 / prod);
    let b: Vec<f64> = (0..q).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let bg = PeriodicBackground::new(a, b).unwrap();
    Background::new(bg, Tolerances::default()).unwrap()
}

/// In-class perturbation over `back`: v₀ bounded away from 0, nonzero tail
/// pair, and a⁰ + u kept positive.
pub fn random_perturbation(rng: &mut ChaCha8Rng, back: &Background, p: usize) -> Perturbation {
    let mut u: Vec<f64> = (0..=p).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let mut v: Vec<f64> = (0..=p).map(|_| rng.gen_range(-0.8..0.8)).collect();
    if v[0].abs() < 0.2 {
        v[0] = if v[0] >= 0.0 { 0.2 } else { -0.2 };
    }
    if u[p].abs() < 0.1 && v[p].abs() < 0.1 {
        u[p] = if u[p] >= 0.0 { 0.15 } else { -0.15 };
    }
    for (n, un) in u.iter_mut().enumerate() {
        let floor = 0.11 - back.bg.a0(n as i64);
        if *un < floor {
            *un = floor;
        }
    }
    Perturbation::new(u, v).unwrap()
}

/// A random (background, perturbation) pair with q ∈ {2,3}, p ∈ {1,2,3}.
pub fn random_draw(rng: &mut ChaCha8Rng) -> Perturbed {
    loop {
        let q = rng.gen_range(2..=3usize);
        let p = rng.gen_range(1..=3usize);
        let back = random_background(rng, q);
        let pert = random_perturbation(rng, &back, p);
        if let Ok(op) = Perturbed::new(back, pert) {
            if states(&op).is_ok() {
                return op;
            }
        }
    }
}

/// A draw additionally satisfying the one-sided inversion hypotheses, with
/// every state at distance ≥ 0.02 from the band edges (a state hugging an
/// edge turns the reflection coefficient into a spike no quadrature budget
/// resolves).
pub fn random_hyp1_draw(rng: &mut ChaCha8Rng) -> Perturbed {
    loop {
        let op = random_draw(rng);
        let list = match states(&op) {
            Ok(l) => l,
            Err(_) => continue,
        };
        let near_edge = list.states.iter().any(|s| {
            let z = num_complex::Complex64::new(s.lambda[0], s.lambda[1]);
            op.back.bands.edges.iter().any(|&e| (z - e).norm() < 0.02)
        });
        if !near_edge && check_hypothesis1(&op, &list).is_ok() {
            return op;
        }
    }
}

/// A draw whose reconstruction data satisfies the simplicity/disjointness
/// hypotheses; also returns how many candidates were rejected first.
pub fn random_recon_draw(rng: &mut ChaCha8Rng) -> (Perturbed, usize) {
    let mut rejected = 0;
    loop {
        let op = random_hyp1_draw(rng);
        match jacres::reconstruct::extract_input(&op) {
            Ok(input) => match jacres::reconstruct::validate_hypotheses(&input, &op.back) {
                Ok(()) => return (op, rejected),
                Err(_) => rejected += 1,
            },
            Err(_) => rejected += 1,
        }
    }
}

// ------------------------------------------------------------- ℓ² oracle

/// Max relative deviation of γ_± from the ℓ²-sum characterization
/// γ_± = (Σ_n |D^±(ρ) f_n^±(ρ)|²)⁻¹, with the infinite tails summed through
/// Bloch periodicity ψ_{n+q}^± = z^{±q}ψ_n^± (direct recurrence cancels
/// catastrophically in the growing direction).
pub fn l2_norming_max_dev(op: &Perturbed, split: &PoleSplit, nc: &NormingConstants) -> f64 {
    let q = op.back.q() as i64;
    let p = op.p();
    let mut worst = 0.0f64;
    for (k, &r) in nc.rho.iter().enumerate() {
        let pt = SurfacePoint::sheet1(r);
        let dp = split.d_plus.eval(pt.lambda);
        let dm = split.d_minus.eval(pt.lambda);
        let z = op.back.quasimomentum(&pt).z;
        let tail = 1.0 / (1.0 - z.norm_sqr().powi(q as i32));
        let f0p = op.jost_eval(0, &pt, 1).unwrap();
        let mut block_above = 0.0;
        for n in p + 1..=p + q {
            block_above += op.back.bloch_psi(n, &pt, 1).unwrap().norm_sqr();
        }
        let mut block_below = 0.0;
        for n in -q..=-1 {
            block_below += op.back.bloch_psi(n, &pt, -1).unwrap().norm_sqr();
        }
        // plus side: f⁺ on [0, p], the decaying ψ⁺ tail above, f₀⁺ψ⁻ below
        let mut sum_p = 0.0;
        for n in 0..=p {
            sum_p += op.jost_eval(n, &pt, 1).unwrap().norm_sqr();
        }
        sum_p += block_above * tail + f0p.norm_sqr() * block_below * tail;
        worst = worst.max((nc.gamma_plus[k] * dp.norm_sqr() * sum_p - 1.0).abs());
        // minus side: f⁻ on [0, p], ψ⁻ tail below, matched ψ⁺ multiple above
        let mut sum_m = 0.0;
        for n in 0..=p {
            sum_m += op.jost_eval(n, &pt, -1).unwrap().norm_sqr();
        }
        let cm =
            op.jost_eval(p + 1, &pt, -1).unwrap() / op.back.bloch_psi(p + 1, &pt, 1).unwrap();
        sum_m += block_below * tail + cm.norm_sqr() * block_above * tail;
        worst = worst.max((nc.gamma_minus[k] * dm.norm_sqr() * sum_m - 1.0).abs());
    }
    worst
}

// ------------------------------------------------------- truncated matrix

/// Symmetric tridiagonal truncation of the perturbed operator on
/// sites −half..=half, with eigenvalues located by Sturm bisection.
pub struct TruncatedJacobi {
    /// Off-diagonal a_n for n = −half..half (length 2·half).
    pub a: Vec<f64>,
    /// Diagonal b_n for n = −half..=half (length 2·half + 1).
    pub b: Vec<f64>,
}

impl TruncatedJacobi {
    pub fn new(op: &Perturbed, half: i64) -> TruncatedJacobi {
        let a = (-half..half)
            .map(|n| op.back.bg.a0(n) + op.pert.u(n))
            .collect();
        let b = (-half..=half)
            .map(|n| op.back.bg.b0(n) + op.pert.v(n))
            .collect();
        TruncatedJacobi { a, b }
    }

    /// Number of eigenvalues strictly below x (negative pivots of the
    /// LDLᵀ factorization of J − x).
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0usize;
        let mut d = 1.0f64;
        for k in 0..self.b.len() {
            let off = if k == 0 {
                0.0
            } else {
                self.a[k - 1] * self.a[k - 1] / d
            };
            d = self.b[k] - x - off;
            if d == 0.0 {
                d = 1e-300;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// All eigenvalues in (lo, hi), each bisected to `tol`.
    pub fn eigs_in(&self, lo: f64, hi: f64, tol: f64) -> Vec<f64> {
        let c_lo = self.count_below(lo);
        let c_hi = self.count_below(hi);
        let mut out = Vec::with_capacity(c_hi.saturating_sub(c_lo));
        for j in c_lo..c_hi {
            let (mut a, mut b) = (lo, hi);
            while b - a > tol {
                let mid = 0.5 * (a + b);
                if self.count_below(mid) > j {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            out.push(0.5 * (a + b));
        }
        out
    }
}
