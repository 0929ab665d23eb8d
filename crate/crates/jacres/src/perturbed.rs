//! The perturbed operator H = H⁰ + finitely supported (u, v): Jost solutions,
//! the Wronskians w, s and their entire/rational carriers ŵ, ŝ, the
//! polynomial decomposition ŵ = 2iΩ(1+A) − J, and the characteristic
//! polynomial 𝓕 = 4(1−Δ²)(1+A)² + J² whose roots are the states.
//!
//! The perturbation arrays are 0-based: u₀..u_p, v₀..v_p with u_n = v_n = 0
//! outside [0, p]. The effective degree is ν = 2p when u_p ≠ 0 and ν = 2p−1
//! otherwise, and generically (v₀ ≠ 0) deg 𝓕 = ν + 2q − 1 with leading
//! coefficient c₃v₀.

use crate::algebra::Polynomial;
use crate::background::{Background, SurfacePoint};
use crate::error::{JacError, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Finitely supported perturbation (u, v) of the background coefficients.
///
/// Serializes as {"p": int, "u": [real×(p+1)], "v": [real×(p+1)]}; on input
/// the redundant p is optional but must agree with the array lengths.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Serialize for Perturbation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Perturbation", 3)?;
        st.serialize_field("p", &self.p())?;
        st.serialize_field("u", &self.u)?;
        st.serialize_field("v", &self.v)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Perturbation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(default)]
            p: Option<i64>,
            u: Vec<f64>,
            v: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        let pert = Perturbation::new(raw.u, raw.v).map_err(serde::de::Error::custom)?;
        if let Some(p) = raw.p {
            if p != pert.p() {
                return Err(serde::de::Error::custom(format!(
                    "p = {p} disagrees with array length {}",
                    pert.u.len()
                )));
            }
        }
        Ok(pert)
    }
}

impl Perturbation {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.is_empty() || v.is_empty() {
            return Err(JacError::Schema("perturbation arrays must be nonempty".into()));
        }
        if u.len() != v.len() {
            return Err(JacError::Schema(format!(
                "u has {} entries but v has {}",
                u.len(),
                v.len()
            )));
        }
        Ok(Perturbation { u, v })
    }

    pub fn p(&self) -> i64 {
        self.u.len() as i64 - 1
    }

    pub fn u(&self, n: i64) -> f64 {
        if n >= 0 && n < self.u.len() as i64 {
            self.u[n as usize]
        } else {
            0.0
        }
    }

    pub fn v(&self, n: i64) -> f64 {
        if n >= 0 && n < self.v.len() as i64 {
            self.v[n as usize]
        } else {
            0.0
        }
    }
}

/// θ_n^±, φ_n^± families: solutions of the perturbed equation anchored to the
/// background fundamentals outside the perturbation support.
#[derive(Debug, Clone)]
pub struct PerturbedFamily {
    theta: Vec<Polynomial>,
    phi: Vec<Polynomial>,
    n_min: i64,
}

impl PerturbedFamily {
    pub fn theta(&self, n: i64) -> &Polynomial {
        &self.theta[(n - self.n_min) as usize]
    }

    pub fn phi(&self, n: i64) -> &Polynomial {
        &self.phi[(n - self.n_min) as usize]
    }

    pub fn range(&self) -> (i64, i64) {
        (self.n_min, self.n_min + self.theta.len() as i64 - 1)
    }
}

/// Values of the Wronskians at a surface point.
#[derive(Debug, Clone, Copy)]
pub struct Wronskians {
    pub w: Complex64,
    pub s: Complex64,
    pub w_hat: Complex64,
    pub s_hat: Complex64,
}

/// The carrier polynomials of a perturbed (or reconstructed) operator,
/// together with the background: everything needed to evaluate ŵ, ŝ and 𝓕
/// anywhere on the surface.
#[derive(Debug, Clone)]
pub struct Carriers {
    pub back: Background,
    /// A in ŵ = 2iΩ(1+A) − J.
    pub a_poly: Polynomial,
    /// J in ŵ = 2iΩ(1+A) − J.
    pub j_poly: Polynomial,
    /// P_ω in φ_q ŝ = 2iΩ·P_ω + P₀.
    pub p_omega: Polynomial,
    /// P₀ in φ_q ŝ = 2iΩ·P_ω + P₀.
    pub p_plain: Polynomial,
    /// 𝓕 = 4(1−Δ²)(1+A)² + J².
    pub f_poly: Polynomial,
}

impl Carriers {
    /// ŵ = 2iΩ(1+A) − J, entire on the surface.
    pub fn w_hat(&self, pt: &SurfacePoint) -> Complex64 {
        let w = self.back.i_omega(pt);
        let lam = pt.lambda;
        2.0 * w * (1.0 + self.a_poly.eval(lam)) - self.j_poly.eval(lam)
    }

    /// d/dλ of ŵ along the sheet: 2(ΔΔ′/iΩ)(1+A) + 2iΩ A′ − J′.
    ///
    /// Not defined at band edges, where iΩ has the square-root singularity.
    pub fn w_hat_prime(&self, pt: &SurfacePoint) -> Result<Complex64> {
        let w = self.back.i_omega(pt);
        let lam = pt.lambda;
        if w.norm() < 1e-12 * lam.norm().max(1.0) {
            return Err(JacError::SquareRootSingularity { edge: lam.re });
        }
        let disc = &self.back.disc;
        let dw = disc.delta.eval(lam) * disc.delta_prime.eval(lam) / w;
        Ok(2.0 * dw * (1.0 + self.a_poly.eval(lam)) + 2.0 * w * self.a_poly.derivative().eval(lam)
            - self.j_poly.derivative().eval(lam))
    }

    /// ŝ = (2iΩ P_ω + P₀)/φ_q, rational with possible poles at Dirichlet
    /// points; removable singularities are evaluated by the limit.
    pub fn s_hat(&self, pt: &SurfacePoint) -> Result<Complex64> {
        let w = self.back.i_omega(pt);
        let lam = pt.lambda;
        let num = 2.0 * w * self.p_omega.eval(lam) + self.p_plain.eval(lam);
        let den = self.back.disc.phi_q.eval(lam);
        let scale = num.norm().max(1.0);
        if den.norm() > 1e-9 * scale {
            return Ok(num / den);
        }
        if num.norm() > 1e-5 * scale.min(1e4) {
            return Err(JacError::PoleAtDirichletPoint {
                sign: '+',
                mu: lam.re,
            });
        }
        if w.norm() < 1e-12 * lam.norm().max(1.0) {
            return Err(JacError::SquareRootSingularity { edge: lam.re });
        }
        let disc = &self.back.disc;
        let dw = disc.delta.eval(lam) * disc.delta_prime.eval(lam) / w;
        let dnum = 2.0 * dw * self.p_omega.eval(lam)
            + 2.0 * w * self.p_omega.derivative().eval(lam)
            + self.p_plain.derivative().eval(lam);
        Ok(dnum / disc.phi_q.derivative().eval(lam))
    }

    /// f₀⁺ from the identity ŵ + ŝ = 2iΩ f₀⁺ (pole-free form away from
    /// Dirichlet points and edges).
    pub fn f0_plus(&self, pt: &SurfacePoint) -> Result<Complex64> {
        let w = self.back.i_omega(pt);
        let lam = pt.lambda;
        if w.norm() < 1e-12 * lam.norm().max(1.0) {
            return Err(JacError::SquareRootSingularity { edge: lam.re });
        }
        Ok((self.w_hat(pt) + self.s_hat(pt)?) / (2.0 * w))
    }
}

/// The perturbed operator with all derived polynomial data.
#[derive(Debug, Clone)]
pub struct Perturbed {
    pub car: Carriers,
    pub pert: Perturbation,
    /// Effective degree ν (2p or 2p−1); −1 for the degenerate p=0, u₀=0 case.
    pub nu: i64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// A_p = ∏_{n=0}^p a⁰_n.
    pub cap_ap: f64,
    pub plus: PerturbedFamily,
    pub minus: PerturbedFamily,
}

impl std::ops::Deref for Perturbed {
    type Target = Carriers;

    fn deref(&self) -> &Carriers {
        &self.car
    }
}

impl Perturbed {
    pub fn new(back: Background, pert: Perturbation) -> Result<Self> {
        let p = pert.p();
        for n in 0..=p {
            let a = back.bg.a0(n) + pert.u(n);
            if !(a > 0.0) {
                return Err(JacError::ClassViolation(format!(
                    "a_{n} = a0_{n} + u_{n} = {a} is not positive"
                )));
            }
        }
        if pert.u.iter().all(|&x| x == 0.0) && pert.v.iter().all(|&x| x == 0.0) {
            return Err(JacError::ClassViolation("perturbation is identically zero".into()));
        }
        if p > 0 && pert.u(p) == 0.0 && pert.v(p) == 0.0 {
            return Err(JacError::ClassViolation(format!(
                "(u_p, v_p) = (0, 0) at p = {p}: support is not minimal"
            )));
        }
        let nu = if pert.u(p) != 0.0 { 2 * p } else { 2 * p - 1 };
        let a = |n: i64| back.bg.a0(n) + pert.u(n);
        let c1 = 1.0 / (0..=p).map(a).product::<f64>();
        let c2 = if pert.u(p) != 0.0 {
            c1 * pert.u(p) * (back.bg.a0(p) + a(p))
        } else {
            c1 * back.bg.a0(p).powi(2) * pert.v(p)
        };
        let c3 = c1 * c2;
        let cap_ap: f64 = (0..=p).map(|n| back.bg.a0(n)).product();

        let q = back.q() as i64;
        let plus = build_plus_family(&back, &pert, -(q + 8));
        let minus = build_minus_family(&back, &pert, p + q + 8);

        let trim = back.tol.trim_rel;
        let a00 = back.a00();
        let ratio_a0 = a(0) / a00;
        let ratio_v0 = pert.v(0) / a00;
        let disc = &back.disc;
        // A = ½((a₀/a⁰₀)φ₁⁺ + (v₀/a⁰₀)φ₀⁺ + θ₀⁺) − 1
        let a_poly = plus
            .phi(1)
            .scale(ratio_a0)
            .add(&plus.phi(0).scale(ratio_v0))
            .add(plus.theta(0))
            .scale(0.5)
            .sub(&Polynomial::constant(1.0))
            .trim(trim);
        // J = −[(a₀/a⁰₀)φ_qθ₁⁺ + φ((a₀/a⁰₀)φ₁⁺ − θ₀⁺)
        //       + (v₀/a⁰₀)(φ_qθ₀⁺ + φφ₀⁺) + θ_{q+1}φ₀⁺]
        let j_poly = disc
            .phi_q
            .mul(plus.theta(1))
            .scale(ratio_a0)
            .add(&disc.phi.mul(&plus.phi(1).scale(ratio_a0).sub(plus.theta(0))))
            .add(
                &disc
                    .phi_q
                    .mul(plus.theta(0))
                    .add(&disc.phi.mul(plus.phi(0)))
                    .scale(ratio_v0),
            )
            .add(&disc.theta_q1.mul(plus.phi(0)))
            .scale(-1.0)
            .trim(trim);
        // φ_q ŝ = 2iΩ P_ω + P₀
        let p_omega = disc
            .phi_q
            .mul(&plus.theta(0).sub(&Polynomial::constant(1.0)).sub(&a_poly))
            .add(&disc.phi.mul(plus.phi(0)))
            .trim(trim);
        let delta_sq_m1 = disc
            .delta
            .mul(&disc.delta)
            .sub(&Polynomial::constant(1.0));
        let p_plain = disc
            .phi_q
            .mul(&j_poly)
            .add(&delta_sq_m1.mul(plus.phi(0)).scale(2.0))
            .trim(trim);
        let one_plus_a = Polynomial::constant(1.0).add(&a_poly);
        let f_poly = delta_sq_m1
            .mul(&one_plus_a.mul(&one_plus_a))
            .scale(-4.0)
            .add(&j_poly.mul(&j_poly))
            .trim(trim);

        // generic degree checks (need v₀ ≠ 0 and ν ≥ 1)
        if pert.v(0) != 0.0 && nu >= 1 {
            let checks = [
                ("A", &a_poly, (nu - 1) as usize),
                ("J", &j_poly, (nu + q - 1) as usize),
                ("F", &f_poly, (nu + 2 * q - 1) as usize),
            ];
            for (what, poly, want) in checks {
                let got = poly.degree().unwrap_or(0);
                if got != want {
                    return Err(JacError::DegreeMismatch {
                        what,
                        got,
                        expected: want,
                    });
                }
            }
            let lead = f_poly.leading().re;
            let want = c3 * pert.v(0);
            if (lead - want).abs() > 1e-8 * want.abs().max(1e-12) {
                return Err(JacError::Numerical(format!(
                    "leading coefficient of F is {lead}, expected c3*v0 = {want}"
                )));
            }
        }

        Ok(Perturbed {
            car: Carriers {
                back,
                a_poly,
                j_poly,
                p_omega,
                p_plain,
                f_poly,
            },
            pert,
            nu,
            c1,
            c2,
            c3,
            cap_ap,
            plus,
            minus,
        })
    }

    /// Perturbed off-diagonal coefficient a_n = a⁰_n + u_n.
    pub fn a(&self, n: i64) -> f64 {
        self.back.bg.a0(n) + self.pert.u(n)
    }

    /// Perturbed diagonal coefficient b_n = b⁰_n + v_n.
    pub fn b(&self, n: i64) -> f64 {
        self.back.bg.b0(n) + self.pert.v(n)
    }

    pub fn p(&self) -> i64 {
        self.pert.p()
    }

    /// Total state count κ = ν + 2q − 1 (the generic degree of 𝓕).
    pub fn kappa_count(&self) -> i64 {
        self.nu + 2 * self.back.q() as i64 - 1
    }

    /// Non-fatal class warnings.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.kappa_count() < 2 * self.back.q() as i64 + 1 {
            out.push(format!(
                "state count {} is below 2q+1 = {}: inverse data may be degenerate",
                self.kappa_count(),
                2 * self.back.q() + 1
            ));
        }
        if self.pert.v(0) == 0.0 {
            out.push("v0 = 0: the characteristic polynomial degenerates".into());
        }
        out
    }

    /// Jost solution f_n^± = θ_n^± + m_± φ_n^±.
    pub fn jost_eval(&self, n: i64, pt: &SurfacePoint, sign: i32) -> Result<Complex64> {
        let m = self.back.weyl_m(pt, sign)?;
        let (t, f) = self.family_at(n, pt.lambda, sign);
        Ok(t + m * f)
    }

    /// θ_n^±(λ), φ_n^±(λ) with pointwise extension outside the stored range.
    pub fn family_at(&self, n: i64, lambda: Complex64, sign: i32) -> (Complex64, Complex64) {
        let fam = if sign >= 0 { &self.plus } else { &self.minus };
        let (lo, hi) = fam.range();
        if n >= lo && n <= hi {
            return (fam.theta(n).eval(lambda), fam.phi(n).eval(lambda));
        }
        if n > hi {
            let mut t = (fam.theta(hi - 1).eval(lambda), fam.theta(hi).eval(lambda));
            let mut f = (fam.phi(hi - 1).eval(lambda), fam.phi(hi).eval(lambda));
            for k in hi..n {
                let step = |y: (Complex64, Complex64)| {
                    ((lambda - self.b(k)) * y.1 - self.a(k - 1) * y.0) / self.a(k)
                };
                t = (t.1, step(t));
                f = (f.1, step(f));
            }
            (t.1, f.1)
        } else {
            let mut t = (fam.theta(lo).eval(lambda), fam.theta(lo + 1).eval(lambda));
            let mut f = (fam.phi(lo).eval(lambda), fam.phi(lo + 1).eval(lambda));
            for k in (n..lo).rev() {
                let step = |y: (Complex64, Complex64)| {
                    ((lambda - self.b(k + 1)) * y.0 - self.a(k + 1) * y.1) / self.a(k)
                };
                t = (step(t), t.0);
                f = (step(f), f.0);
            }
            (t.0, f.0)
        }
    }

    /// All four Wronskian values; direct m_±-based w and s plus the carriers.
    pub fn wronskians(&self, pt: &SurfacePoint) -> Result<Wronskians> {
        let m_minus = self.back.weyl_m(pt, -1)?;
        let m_plus = self.back.weyl_m(pt, 1)?;
        let f0 = self.jost_eval(0, pt, 1)?;
        let f1 = self.jost_eval(1, pt, 1)?;
        let a00 = self.back.a00();
        let v0 = self.pert.v(0);
        let w = self.a(0) * f1 + (v0 - a00 * m_minus) * f0;
        let s = (a00 * m_plus - v0) * f0 - self.a(0) * f1;
        Ok(Wronskians {
            w,
            s,
            w_hat: self.w_hat(pt),
            s_hat: self.s_hat(pt)?,
        })
    }
}

fn build_plus_family(back: &Background, pert: &Perturbation, n_lo: i64) -> PerturbedFamily {
    let p = pert.p();
    let n_hi = p + 2;
    let len = (n_hi - n_lo + 1) as usize;
    let mut theta = vec![Polynomial::zero(); len];
    let mut phi = vec![Polynomial::zero(); len];
    let idx = |n: i64| (n - n_lo) as usize;
    theta[idx(p + 1)] = back.fund.theta(p + 1).clone();
    theta[idx(p + 2)] = back.fund.theta(p + 2).clone();
    phi[idx(p + 1)] = back.fund.phi(p + 1).clone();
    phi[idx(p + 2)] = back.fund.phi(p + 2).clone();
    let a = |n: i64| back.bg.a0(n) + pert.u(n);
    let b = |n: i64| back.bg.b0(n) + pert.v(n);
    for n in (n_lo + 1..=p + 1).rev() {
        let lin = Polynomial::from_real(&[-b(n), 1.0]);
        let step = |y0: &Polynomial, y1: &Polynomial| {
            lin.mul(y0).sub(&y1.scale(a(n))).scale(1.0 / a(n - 1))
        };
        theta[idx(n - 1)] = step(&theta[idx(n)], &theta[idx(n + 1)]);
        phi[idx(n - 1)] = step(&phi[idx(n)], &phi[idx(n + 1)]);
    }
    PerturbedFamily {
        theta,
        phi,
        n_min: n_lo,
    }
}

fn build_minus_family(back: &Background, pert: &Perturbation, n_hi: i64) -> PerturbedFamily {
    let n_lo = -1i64;
    let len = (n_hi - n_lo + 1) as usize;
    let mut theta = vec![Polynomial::zero(); len];
    let mut phi = vec![Polynomial::zero(); len];
    let idx = |n: i64| (n - n_lo) as usize;
    theta[idx(-1)] = back.fund.theta(-1).clone();
    theta[idx(0)] = back.fund.theta(0).clone();
    phi[idx(-1)] = back.fund.phi(-1).clone();
    phi[idx(0)] = back.fund.phi(0).clone();
    let a = |n: i64| back.bg.a0(n) + pert.u(n);
    let b = |n: i64| back.bg.b0(n) + pert.v(n);
    for n in 0..n_hi {
        let lin = Polynomial::from_real(&[-b(n), 1.0]);
        let step = |y0: &Polynomial, y1: &Polynomial| {
            lin.mul(y1).sub(&y0.scale(a(n - 1))).scale(1.0 / a(n))
        };
        theta[idx(n + 1)] = step(&theta[idx(n - 1)], &theta[idx(n)]);
        phi[idx(n + 1)] = step(&phi[idx(n - 1)], &phi[idx(n)]);
    }
    PerturbedFamily {
        theta,
        phi,
        n_min: n_lo,
    }
}
