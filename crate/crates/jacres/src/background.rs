//! The unperturbed period-q operator H⁰: fundamental solutions, discriminant,
//! band structure, Weyl and Bloch functions, and the two-sheeted surface with
//! its quasi-momentum coordinate z = e^{iκ}.
//!
//! Conventions. The background arrays list a⁰₁..a⁰_q and b⁰₁..b⁰_q, with
//! a⁰₀ ≡ a⁰_q by periodicity and ∏ a⁰_j = 1. Real spectral parameters carry
//! an implicit ±i0 side in the sign of the (signed-zero) imaginary part, so
//! `Complex64::new(x, 0.0)` is the limit from above and `new(x, -0.0)` from
//! below. Sheet 1 is fixed by Ω < 0 on the last band approached from above;
//! sheet 2 carries the opposite Ω. The strip convention puts Re κ ∈ [−π, 0]
//! for sheet-1 points approached from above.

use crate::algebra::{poly_roots, sqrt_principal, Polynomial};
use crate::error::{JacError, Result};
use crate::Tolerances;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Sheet of the two-sheeted surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sheet {
    One,
    Two,
}

impl Serialize for Sheet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sheet::One => 1u8.serialize(s),
            Sheet::Two => 2u8.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Sheet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match u8::deserialize(d)? {
            1 => Ok(Sheet::One),
            2 => Ok(Sheet::Two),
            other => Err(serde::de::Error::custom(format!("sheet must be 1 or 2, got {other}"))),
        }
    }
}

/// A point of the surface: projection λ̃ plus sheet index.
///
/// For λ̃ on the real axis the signed zero of `lambda.im` records the side
/// (+0.0 above, −0.0 below).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub lambda: Complex64,
    pub sheet: Sheet,
}

impl SurfacePoint {
    pub fn new(lambda: Complex64, sheet: Sheet) -> Self {
        SurfacePoint { lambda, sheet }
    }

    /// Sheet-1 point over a real λ, approached from above.
    pub fn sheet1(x: f64) -> Self {
        SurfacePoint::new(Complex64::new(x, 0.0), Sheet::One)
    }

    /// Sheet-2 point over a real λ, approached from above.
    pub fn sheet2(x: f64) -> Self {
        SurfacePoint::new(Complex64::new(x, 0.0), Sheet::Two)
    }

    /// Same projection on the other sheet.
    pub fn flip(&self) -> Self {
        let sheet = match self.sheet {
            Sheet::One => Sheet::Two,
            Sheet::Two => Sheet::One,
        };
        SurfacePoint::new(self.lambda, sheet)
    }
}

impl Serialize for SurfacePoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("SurfacePoint", 2)?;
        st.serialize_field("lambda", &[self.lambda.re, self.lambda.im])?;
        st.serialize_field("sheet", &self.sheet)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for SurfacePoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lambda: [f64; 2],
            sheet: Sheet,
        }
        let raw = Raw::deserialize(d)?;
        Ok(SurfacePoint::new(
            Complex64::new(raw.lambda[0], raw.lambda[1]),
            raw.sheet,
        ))
    }
}

/// Coefficients of the periodic background operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicBackground {
    pub q: usize,
    #[serde(rename = "a0")]
    pub a: Vec<f64>,
    #[serde(rename = "b0")]
    pub b: Vec<f64>,
}

impl PeriodicBackground {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let q = a.len();
        if q < 2 {
            return Err(JacError::Schema(format!("period q = {q} must be >= 2")));
        }
        if b.len() != q {
            return Err(JacError::Schema(format!(
                "a0 has {} entries but b0 has {}",
                q,
                b.len()
            )));
        }
        if a.iter().any(|&x| !(x > 0.0)) {
            return Err(JacError::ClassViolation("all a0_j must be positive".into()));
        }
        let bg = PeriodicBackground { q, a, b };
        bg.check_normalization()?;
        Ok(bg)
    }

    /// ∏ a⁰_j = 1 within 1e−12.
    pub fn check_normalization(&self) -> Result<()> {
        let product: f64 = self.a.iter().product();
        if (product - 1.0).abs() > 1e-12 {
            return Err(JacError::NormalizationViolated { product });
        }
        Ok(())
    }

    /// a⁰_n for any n ∈ ℤ (period q, a⁰₀ ≡ a⁰_q).
    pub fn a0(&self, n: i64) -> f64 {
        self.a[(n - 1).rem_euclid(self.q as i64) as usize]
    }

    /// b⁰_n for any n ∈ ℤ.
    pub fn b0(&self, n: i64) -> f64 {
        self.b[(n - 1).rem_euclid(self.q as i64) as usize]
    }
}

/// Fundamental solutions θ_n, φ_n as polynomials in λ over a range of n.
#[derive(Debug, Clone)]
pub struct Fundamentals {
    theta: Vec<Polynomial>,
    phi: Vec<Polynomial>,
    n_min: i64,
}

impl Fundamentals {
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

/// θ_n, φ_n for n_min ≤ n ≤ n_max, by the three-term recurrence from
/// θ₀=1, θ₁=0, φ₀=0, φ₁=1.
pub fn fundamental_solutions(
    bg: &PeriodicBackground,
    n_min: i64,
    n_max: i64,
) -> Fundamentals {
    assert!(n_min <= 0 && n_max >= 1, "range must contain 0 and 1");
    let len = (n_max - n_min + 1) as usize;
    let mut theta = vec![Polynomial::zero(); len];
    let mut phi = vec![Polynomial::zero(); len];
    let idx = |n: i64| (n - n_min) as usize;
    theta[idx(0)] = Polynomial::constant(1.0);
    theta[idx(1)] = Polynomial::zero();
    phi[idx(0)] = Polynomial::zero();
    phi[idx(1)] = Polynomial::constant(1.0);
    let step_fwd = |y0: &Polynomial, y1: &Polynomial, n: i64| {
        // y_{n+1} = ((λ − b_n) y_n − a_{n−1} y_{n−1}) / a_n
        let lin = Polynomial::from_real(&[-bg.b0(n), 1.0]);
        lin.mul(y1)
            .sub(&y0.scale(bg.a0(n - 1)))
            .scale(1.0 / bg.a0(n))
    };
    let step_bwd = |y0: &Polynomial, y1: &Polynomial, n: i64| {
        // y_{n−1} = ((λ − b_n) y_n − a_n y_{n+1}) / a_{n−1}
        let lin = Polynomial::from_real(&[-bg.b0(n), 1.0]);
        lin.mul(y0)
            .sub(&y1.scale(bg.a0(n)))
            .scale(1.0 / bg.a0(n - 1))
    };
    for n in 1..n_max {
        theta[idx(n + 1)] = step_fwd(&theta[idx(n - 1)], &theta[idx(n)], n);
        phi[idx(n + 1)] = step_fwd(&phi[idx(n - 1)], &phi[idx(n)], n);
    }
    for n in (n_min + 1..=0).rev() {
        theta[idx(n - 1)] = step_bwd(&theta[idx(n)], &theta[idx(n + 1)], n);
        phi[idx(n - 1)] = step_bwd(&phi[idx(n)], &phi[idx(n + 1)], n);
    }
    Fundamentals { theta, phi, n_min }
}

/// Discriminant Δ, half-difference φ, and the entries φ_q, θ_{q+1} used by
/// the Weyl functions.
#[derive(Debug, Clone)]
pub struct DiscriminantData {
    pub delta: Polynomial,
    pub delta_prime: Polynomial,
    /// φ = (φ_{q+1} − θ_q)/2, the half-difference.
    pub phi: Polynomial,
    pub phi_q: Polynomial,
    pub theta_q1: Polynomial,
}

/// Δ = (φ_{q+1} + θ_q)/2 and friends, from the fundamental solutions.
pub fn discriminant_data(bg: &PeriodicBackground, fund: &Fundamentals) -> DiscriminantData {
    let q = bg.q as i64;
    let delta = fund.phi(q + 1).add(fund.theta(q)).scale(0.5);
    let phi = fund.phi(q + 1).sub(fund.theta(q)).scale(0.5);
    DiscriminantData {
        delta_prime: delta.derivative(),
        delta,
        phi,
        phi_q: fund.phi(q).clone(),
        theta_q1: fund.theta(q + 1).clone(),
    }
}

/// Band edges, Dirichlet points μ, critical points α, and slit heights h.
#[derive(Debug, Clone, Serialize)]
pub struct BandStructure {
    /// 2q edges, ascending: λ₀⁺ ≤ λ₁⁻ ≤ λ₁⁺ ≤ … ≤ λ_q⁻.
    pub edges: Vec<f64>,
    /// μ₁..μ_{q−1}, the zeros of φ_q.
    pub mu: Vec<f64>,
    /// α₁..α_{q−1}, the zeros of Δ′ inside the gap closures.
    pub alpha: Vec<f64>,
    /// Slit heights h₁..h_{q−1} ≥ 0, with h_j = 0 exactly for closed gaps.
    pub h: Vec<f64>,
    /// Gap-closed flags, j = 1..q−1.
    pub closed: Vec<bool>,
}

impl BandStructure {
    /// Number of bands q.
    pub fn n_bands(&self) -> usize {
        self.edges.len() / 2
    }

    /// Band j (1-based) as a closed interval.
    pub fn band(&self, j: usize) -> (f64, f64) {
        (self.edges[2 * j - 2], self.edges[2 * j - 1])
    }

    /// Finite gap j (1-based, j ≤ q−1); `None` when closed.
    pub fn gap(&self, j: usize) -> Option<(f64, f64)> {
        if self.closed[j - 1] {
            None
        } else {
            Some((self.edges[2 * j - 1], self.edges[2 * j]))
        }
    }

    /// True when x lies within `tol` of some band edge.
    pub fn near_edge(&self, x: f64, tol: f64) -> Option<f64> {
        self.edges
            .iter()
            .copied()
            .find(|e| (x - e).abs() <= tol * x.abs().max(1.0))
    }

    /// True when the real number x lies in the closure of some gap
    /// (including the unbounded gaps γ₀ and γ_q).
    pub fn in_gap_closure(&self, x: f64) -> bool {
        let q = self.n_bands();
        if x <= self.edges[0] || x >= self.edges[2 * q - 1] {
            return true;
        }
        (1..q).any(|j| {
            self.gap(j)
                .map_or(false, |(lo, hi)| x >= lo && x <= hi)
        })
    }
}

/// Quasi-momentum value κ together with z = e^{iκ}.
#[derive(Debug, Clone, Copy)]
pub struct Kz {
    pub kappa: Complex64,
    pub z: Complex64,
}

/// A slit g_j of the z-plane: radial cut at the gap-j angle, reaching
/// from e^{−h_j/q} out to e^{+h_j/q} across the unit circle.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Slit {
    pub gap: usize,
    /// Angle of the lower-half copy, −(q−j)π/q; the conjugate copy sits at +.
    pub angle: f64,
    pub r_inner: f64,
    pub r_outer: f64,
}

/// The background operator with everything derived from it precomputed:
/// fundamental solutions, discriminant data, and band structure.
#[derive(Debug, Clone)]
pub struct Background {
    pub bg: PeriodicBackground,
    pub fund: Fundamentals,
    pub disc: DiscriminantData,
    pub bands: BandStructure,
    pub tol: Tolerances,
}

impl Background {
    pub fn new(bg: PeriodicBackground, tol: Tolerances) -> Result<Self> {
        bg.check_normalization()?;
        let q = bg.q as i64;
        let fund = fundamental_solutions(&bg, -(2 * q + 12), 2 * q + 28);
        let disc = discriminant_data(&bg, &fund);
        let bands = band_structure_impl(&bg, &disc, &tol)?;
        Ok(Background {
            bg,
            fund,
            disc,
            bands,
            tol,
        })
    }

    pub fn q(&self) -> usize {
        self.bg.q
    }

    /// a⁰₀ = a⁰_q.
    pub fn a00(&self) -> f64 {
        self.bg.a0(0)
    }

    pub fn band_structure(&self) -> &BandStructure {
        &self.bands
    }

    /// Ω at a surface point: Ω² = 1 − Δ², sheet 1 fixed by Ω < 0 on the last
    /// band from above, sheet 2 the negation. Band edges give 0.
    pub fn omega_eval(&self, pt: &SurfacePoint) -> Complex64 {
        let v = self.omega_sheet1(pt.lambda);
        match pt.sheet {
            Sheet::One => v,
            Sheet::Two => -v,
        }
    }

    /// Sheet-1 Ω as (i/2)·∏ √(λ − e_i) over all 2q edges, principal branches.
    pub fn omega_sheet1(&self, lambda: Complex64) -> Complex64 {
        let mut prod = Complex64::new(0.0, 0.5);
        for &e in &self.bands.edges {
            prod *= sqrt_principal(lambda - Complex64::new(e, 0.0));
        }
        prod
    }

    /// iΩ at a surface point (the combination entering ŵ and m_±).
    pub fn i_omega(&self, pt: &SurfacePoint) -> Complex64 {
        Complex64::new(0.0, 1.0) * self.omega_eval(pt)
    }

    /// Weyl function m_± = (φ ± iΩ)/φ_q.
    ///
    /// At a Dirichlet point μ_j the regular sign is evaluated through the
    /// derivative quotient; the singular sign errors with
    /// [`JacError::PoleAtDirichletPoint`]. A μ_j sitting exactly at a band
    /// edge has no finite limit for either sign
    /// ([`JacError::SquareRootSingularity`]).
    pub fn weyl_m(&self, pt: &SurfacePoint, sign: i32) -> Result<Complex64> {
        let lam = pt.lambda;
        let s = if sign >= 0 { 1.0 } else { -1.0 };
        let w = self.i_omega(pt);
        let phi = self.disc.phi.eval(lam);
        let fq = self.disc.phi_q.eval(lam);
        let scale = phi.norm().max(w.norm()).max(1.0);
        if fq.norm() > 1e-9 * scale {
            return Ok((phi + s * w) / fq);
        }
        // at (or next to) a Dirichlet point
        if w.norm() <= 1e-7 * scale {
            return Err(JacError::SquareRootSingularity { edge: lam.re });
        }
        let num = phi + s * w;
        if num.norm() > 1e-5 * scale {
            return Err(JacError::PoleAtDirichletPoint {
                sign: if s > 0.0 { '+' } else { '-' },
                mu: lam.re,
            });
        }
        // regular limit: (φ′ ± (iΩ)′)/φ_q′ with (iΩ)′ = ΔΔ′/(iΩ)
        let dphi = self.disc.phi.derivative().eval(lam);
        let dw = self.disc.delta.eval(lam) * self.disc.delta_prime.eval(lam) / w;
        let dfq = self.disc.phi_q.derivative().eval(lam);
        Ok((dphi + s * dw) / dfq)
    }

    /// Bloch solution ψ_n^± = θ_n + m_± φ_n.
    pub fn bloch_psi(&self, n: i64, pt: &SurfacePoint, sign: i32) -> Result<Complex64> {
        let m = self.weyl_m(pt, sign)?;
        Ok(self.theta_at(n, pt.lambda) + m * self.phi_at(n, pt.lambda))
    }

    /// θ_n(λ), extending beyond the precomputed range by pointwise recurrence.
    pub fn theta_at(&self, n: i64, lambda: Complex64) -> Complex64 {
        self.fundamental_at(n, lambda).0
    }

    /// φ_n(λ), extending beyond the precomputed range by pointwise recurrence.
    pub fn phi_at(&self, n: i64, lambda: Complex64) -> Complex64 {
        self.fundamental_at(n, lambda).1
    }

    fn fundamental_at(&self, n: i64, lambda: Complex64) -> (Complex64, Complex64) {
        let (lo, hi) = self.fund.range();
        if n >= lo && n <= hi {
            return (
                self.fund.theta(n).eval(lambda),
                self.fund.phi(n).eval(lambda),
            );
        }
        // pointwise recurrence from the nearest stored pair
        let bg = &self.bg;
        if n > hi {
            let mut t = (
                self.fund.theta(hi - 1).eval(lambda),
                self.fund.theta(hi).eval(lambda),
            );
            let mut f = (
                self.fund.phi(hi - 1).eval(lambda),
                self.fund.phi(hi).eval(lambda),
            );
            for k in hi..n {
                let step = |y: (Complex64, Complex64)| {
                    ((lambda - bg.b0(k)) * y.1 - bg.a0(k - 1) * y.0) / bg.a0(k)
                };
                t = (t.1, step(t));
                f = (f.1, step(f));
            }
            (t.1, f.1)
        } else {
            let mut t = (
                self.fund.theta(lo).eval(lambda),
                self.fund.theta(lo + 1).eval(lambda),
            );
            let mut f = (
                self.fund.phi(lo).eval(lambda),
                self.fund.phi(lo + 1).eval(lambda),
            );
            for k in (n..lo).rev() {
                let step = |y: (Complex64, Complex64)| {
                    ((lambda - bg.b0(k + 1)) * y.0 - bg.a0(k + 1) * y.1) / bg.a0(k)
                };
                t = (step(t), t.0);
                f = (step(f), f.0);
            }
            (t.0, f.0)
        }
    }

    /// Quasi-momentum κ and z = e^{iκ} at a surface point.
    ///
    /// Real projections use the closed strip forms (Re κ ∈ [−π, 0] from
    /// above); complex projections are reached by continuity tracking of
    /// qκ ∈ arccos(Δ) + 2πℤ along a segment from a reference band point.
    pub fn quasimomentum(&self, pt: &SurfacePoint) -> Kz {
        let k1 = self.kappa_sheet1(pt.lambda);
        let kappa = match pt.sheet {
            Sheet::One => k1,
            Sheet::Two => -k1,
        };
        Kz {
            kappa,
            z: (Complex64::new(0.0, 1.0) * kappa).exp(),
        }
    }

    fn kappa_sheet1(&self, lambda: Complex64) -> Complex64 {
        let q = self.q() as f64;
        if lambda.im == 0.0 {
            let w = self.qkappa_real_above(lambda.re);
            let w = if lambda.im.is_sign_positive() {
                w
            } else {
                -w.conj()
            };
            return w / q;
        }
        if lambda.im < 0.0 {
            return -self.kappa_sheet1(lambda.conj()).conj();
        }
        self.qkappa_track(lambda) / q
    }

    /// qκ for λ = x + i0 on sheet 1.
    fn qkappa_real_above(&self, x: f64) -> Complex64 {
        let q = self.q();
        let edges = &self.bands.edges;
        for j in 1..=q {
            let (lo, hi) = self.bands.band(j);
            if x >= lo && x <= hi {
                let sgn = if (q - j + 1) % 2 == 0 { 1.0 } else { -1.0 };
                let arg = (sgn * self.disc.delta.eval_real(x)).clamp(-1.0, 1.0);
                return Complex64::new(arg.acos() - (q - j + 1) as f64 * PI, 0.0);
            }
        }
        let j = (1..=q).filter(|&j| edges[2 * j - 1] < x).count();
        let sgn = if (q - j) % 2 == 0 { 1.0 } else { -1.0 };
        let arg = (sgn * self.disc.delta.eval_real(x)).max(1.0);
        let im = (arg + (arg * arg - 1.0).sqrt()).ln();
        Complex64::new(-((q - j) as f64) * PI, im)
    }

    /// Continuity tracking of w = qκ for Im λ > 0, from a band-q anchor.
    fn qkappa_track(&self, target: Complex64) -> Complex64 {
        let (lo, hi) = self.bands.band(self.q());
        let anchor = Complex64::new(0.5 * (lo + hi), 0.0);
        let mut w = self.qkappa_real_above(anchor.re);
        let mut lam = anchor;
        let mut s = 0.0f64;
        let mut ds = 0.125f64;
        let dir = target - anchor;
        while s < 1.0 {
            let ds_eff = ds.min(1.0 - s);
            let lam_new = anchor + (s + ds_eff) * dir;
            let mid = 0.5 * (lam + lam_new);
            let omega_mid = self.omega_sheet1(mid);
            let wpred = w - self.disc.delta_prime.eval(mid) / omega_mid * (lam_new - lam);
            let a = self.disc.delta.eval(lam_new).acos();
            let mut best = Complex64::new(f64::INFINITY, 0.0);
            for sgn in [1.0f64, -1.0] {
                let base = ((wpred.re - sgn * a.re) / (2.0 * PI)).round();
                for dk in [-1.0f64, 0.0, 1.0] {
                    let cand = sgn * a + Complex64::new(2.0 * PI * (base + dk), 0.0);
                    if (cand - wpred).norm() < (best - wpred).norm() {
                        best = cand;
                    }
                }
            }
            if (best - w).norm() > 0.3 && ds_eff > 1e-7 {
                ds *= 0.5;
                continue;
            }
            w = best;
            lam = lam_new;
            s += ds_eff;
            ds = (ds * 1.9).min(0.125);
        }
        w
    }

    /// Inverse of the z-map: solves z^q + z^{−q} = 2Δ(λ) and picks the root/
    /// sheet whose z matches, with a round-trip check at 1e−9.
    pub fn lambda_of_z(&self, z: Complex64) -> Result<SurfacePoint> {
        if z.norm() < 1e-12 {
            return Err(JacError::Numerical("z = 0 corresponds to λ = ∞".into()));
        }
        self.check_off_slits(z)?;
        let q = self.q() as i32;
        let c = z.powi(q) + z.powi(-q);
        // 2Δ(λ) − c = 0
        let mut coeffs: Vec<Complex64> = self.disc.delta.scale(2.0).coeffs().to_vec();
        coeffs[0] -= c;
        let p = Polynomial::from_complex(&coeffs);
        let roots = poly_roots(&p, self.tol.cluster_radius)?;
        let mut best: Option<(SurfacePoint, f64)> = None;
        for e in &roots.entries {
            let mut candidates = Vec::new();
            let lam = e.location;
            if lam.im.abs() <= 1e-9 * lam.norm().max(1.0) {
                candidates.push(Complex64::new(lam.re, 0.0));
                candidates.push(Complex64::new(lam.re, -0.0));
            } else {
                candidates.push(lam);
            }
            for cand in candidates {
                for sheet in [Sheet::One, Sheet::Two] {
                    let pt = SurfacePoint::new(cand, sheet);
                    let err = (self.quasimomentum(&pt).z - z).norm();
                    if best.as_ref().map_or(true, |(_, be)| err < *be) {
                        best = Some((pt, err));
                    }
                }
            }
        }
        let (pt, err) = best.ok_or_else(|| JacError::Numerical("no λ candidate".into()))?;
        if err > 1e-9 * z.norm().max(1.0) {
            return Err(JacError::Numerical(format!(
                "z round trip failed: residual {err:.3e} at z = {z}"
            )));
        }
        Ok(pt)
    }

    /// The radial slits g_j of the z-plane (open gaps only).
    pub fn slits(&self) -> Vec<Slit> {
        let q = self.q();
        (1..q)
            .filter(|&j| !self.bands.closed[j - 1])
            .map(|j| {
                let hq = self.bands.h[j - 1] / q as f64;
                Slit {
                    gap: j,
                    angle: -((q - j) as f64) * PI / q as f64,
                    r_inner: (-hq).exp(),
                    r_outer: hq.exp(),
                }
            })
            .collect()
    }

    fn check_off_slits(&self, z: Complex64) -> Result<()> {
        let tol = self.tol.cluster_radius;
        for slit in self.slits() {
            for angle in [slit.angle, -slit.angle] {
                let dirv = Complex64::from_polar(1.0, angle);
                // distance from z to the segment r ∈ [r_inner, r_outer] along dirv
                let t = (z * dirv.conj()).re.clamp(slit.r_inner, slit.r_outer);
                let d = (z - t * dirv).norm();
                if d <= tol && (z.norm() - 1.0).abs() > tol {
                    return Err(JacError::OnSlit {
                        z: format!("{z}"),
                        gap: slit.gap,
                        tol,
                    });
                }
            }
        }
        Ok(())
    }
}

fn band_structure_impl(
    bg: &PeriodicBackground,
    disc: &DiscriminantData,
    tol: &Tolerances,
) -> Result<BandStructure> {
    bg.check_normalization()?;
    let q = bg.q;
    let mut edges: Vec<f64> = Vec::with_capacity(2 * q);
    for shift in [-1.0f64, 1.0] {
        let p = disc.delta.add(&Polynomial::constant(shift));
        let roots = poly_roots(&p, tol.cluster_radius)?;
        for e in &roots.entries {
            if e.location.im != 0.0 {
                return Err(JacError::Numerical(format!(
                    "complex root {} of Δ²−1",
                    e.location
                )));
            }
            for _ in 0..e.multiplicity {
                edges.push(e.location.re);
            }
        }
    }
    edges.sort_by(f64::total_cmp);
    if edges.len() != 2 * q {
        return Err(JacError::Numerical(format!(
            "expected {} band edges, found {}",
            2 * q,
            edges.len()
        )));
    }
    // Δ(λ_j^±) = (−1)^{q−j}
    for (i, &e) in edges.iter().enumerate() {
        let j = (i + 1) / 2;
        let want = if (q - j) % 2 == 0 { 1.0 } else { -1.0 };
        let got = disc.delta.eval_real(e);
        if (got - want).abs() > 1e-6 {
            return Err(JacError::Numerical(format!(
                "Δ({e}) = {got}, expected {want}"
            )));
        }
    }
    let real_sorted = |p: &Polynomial| -> Result<Vec<f64>> {
        let roots = poly_roots(p, tol.cluster_radius)?;
        let mut v = Vec::new();
        for e in &roots.entries {
            for _ in 0..e.multiplicity {
                v.push(e.location.re);
            }
        }
        v.sort_by(f64::total_cmp);
        Ok(v)
    };
    let mu = real_sorted(&disc.phi_q)?;
    let alpha = real_sorted(&disc.delta_prime)?;
    if mu.len() != q - 1 || alpha.len() != q - 1 {
        return Err(JacError::Numerical(format!(
            "expected {} Dirichlet/critical points, found {}/{}",
            q - 1,
            mu.len(),
            alpha.len()
        )));
    }
    let mut h = Vec::with_capacity(q - 1);
    let mut closed = Vec::with_capacity(q - 1);
    for j in 1..q {
        let lo = edges[2 * j - 1];
        let hi = edges[2 * j];
        let is_closed = (hi - lo).abs() <= tol.cluster_radius * lo.abs().max(1.0);
        closed.push(is_closed);
        let sgn = if (q - j) % 2 == 0 { 1.0 } else { -1.0 };
        let x = (sgn * disc.delta.eval_real(alpha[j - 1])).max(1.0);
        h.push((x + (x * x - 1.0).sqrt()).ln());
        // μ_j and α_j must lie in the gap closure
        let slack = 1e-7 * lo.abs().max(1.0);
        for v in [mu[j - 1], alpha[j - 1]] {
            if v < lo - slack || v > hi + slack {
                return Err(JacError::Numerical(format!(
                    "point {v} outside gap closure [{lo}, {hi}]"
                )));
            }
        }
    }
    Ok(BandStructure {
        edges,
        mu,
        alpha,
        h,
        closed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bg2() -> Background {
        let bg = PeriodicBackground::new(vec![0.5, 2.0], vec![0.0, 0.0]).unwrap();
        Background::new(bg, Tolerances::default()).unwrap()
    }

    fn free2() -> Background {
        let bg = PeriodicBackground::new(vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        Background::new(bg, Tolerances::default()).unwrap()
    }

    #[test]
    fn fundamentals_bg2() {
        let b = bg2();
        assert_eq!(b.fund.theta(0).real_coeffs().unwrap(), vec![1.0]);
        assert_eq!(b.fund.phi(1).real_coeffs().unwrap(), vec![1.0]);
        assert_eq!(b.fund.phi(2).real_coeffs().unwrap(), vec![0.0, 2.0]);
        assert_eq!(b.fund.phi(3).real_coeffs().unwrap(), vec![-0.25, 0.0, 1.0]);
        assert_eq!(b.fund.theta(2).real_coeffs().unwrap(), vec![-4.0]);
        assert_eq!(b.fund.theta(3).real_coeffs().unwrap(), vec![0.0, -2.0]);
    }

    #[test]
    fn discriminant_bg2() {
        let b = bg2();
        // Δ = (λ² − 17/4)/2
        let d = b.disc.delta.real_coeffs().unwrap();
        assert!((d[0] + 17.0 / 8.0).abs() < 1e-12);
        assert!((d[2] - 0.5).abs() < 1e-12);
        // φ = (λ² + 15/4)/2
        let f = b.disc.phi.real_coeffs().unwrap();
        assert!((f[0] - 15.0 / 8.0).abs() < 1e-12);
        assert!((f[2] - 0.5).abs() < 1e-12);
        // φ² + 1 − Δ² = −φ_q θ_{q+1} = 4λ²
        let lhs = b
            .disc
            .phi
            .mul(&b.disc.phi)
            .add(&Polynomial::constant(1.0))
            .sub(&b.disc.delta.mul(&b.disc.delta));
        let rhs = b.disc.phi_q.mul(&b.disc.theta_q1).scale(-1.0);
        let diff = lhs.sub(&rhs);
        assert!(diff.is_zero() || diff.coeffs().iter().all(|c| c.norm() < 1e-10));
    }

    #[test]
    fn free_case_discriminant() {
        let b = free2();
        let d = b.disc.delta.real_coeffs().unwrap();
        assert!((d[0] + 1.0).abs() < 1e-12); // Δ = (λ²−2)/2
        assert!((d[2] - 0.5).abs() < 1e-12);
        assert_eq!(b.bands.closed, vec![true]);
        assert!((b.bands.edges[0] + 2.0).abs() < 1e-9);
        assert!(b.bands.edges[1].abs() < 1e-7);
        assert!(b.bands.edges[2].abs() < 1e-7);
        assert!((b.bands.edges[3] - 2.0).abs() < 1e-9);
        assert!(b.bands.h[0].abs() < 1e-7);
    }

    #[test]
    fn band_structure_bg2() {
        let b = bg2();
        let e = &b.bands.edges;
        for (got, want) in e.iter().zip([-2.5, -1.5, 1.5, 2.5]) {
            assert!((got - want).abs() < 1e-10, "edge {got} vs {want}");
        }
        assert!(b.bands.mu[0].abs() < 1e-10);
        assert!(b.bands.alpha[0].abs() < 1e-10);
        let h_expect = (17.0f64 / 8.0 + ((17.0f64 / 8.0).powi(2) - 1.0).sqrt()).ln();
        assert!((b.bands.h[0] - h_expect).abs() < 1e-10);
        assert_eq!(b.bands.closed, vec![false]);
        // Δ(λ_q⁻) = 1
        assert!((b.disc.delta.eval_real(2.5) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn wronskian_constancy() {
        let b = bg2();
        // a⁰_n(θ_nφ_{n+1} − θ_{n+1}φ_n) = a⁰₀ for 0 ≤ n ≤ 2q as polynomials
        for n in 0..=(2 * b.q() as i64) {
            let w = b
                .fund
                .theta(n)
                .mul(b.fund.phi(n + 1))
                .sub(&b.fund.theta(n + 1).mul(b.fund.phi(n)))
                .scale(b.bg.a0(n));
            let c = w.real_coeffs().unwrap();
            assert!((c[0] - b.a00()).abs() < 1e-12);
            assert!(c.iter().skip(1).all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn omega_branch() {
        let b = bg2();
        let v = b.omega_eval(&SurfacePoint::sheet1(2.0));
        let want = -(63.0f64).sqrt() / 8.0;
        assert!((v.re - want).abs() < 1e-12 && v.im.abs() < 1e-14, "{v}");
        let v2 = b.omega_eval(&SurfacePoint::sheet2(2.0));
        assert!((v2.re + want).abs() < 1e-12);
        let edge = b.omega_eval(&SurfacePoint::sheet1(2.5));
        assert!(edge.norm() < 1e-12);
        // gap point: Ω(0) = −1.875i on sheet 1 from above
        let g = b.omega_eval(&SurfacePoint::sheet1(0.0));
        assert!((g - Complex64::new(0.0, -1.875)).norm() < 1e-12, "{g}");
    }

    #[test]
    fn weyl_examples() {
        let b = bg2();
        let m_plus = b.weyl_m(&SurfacePoint::sheet1(2.0), 1).unwrap();
        let s63 = (63.0f64).sqrt();
        assert!((m_plus - Complex64::new(31.0 / 32.0, -s63 / 32.0)).norm() < 1e-12);
        let m_minus = b.weyl_m(&SurfacePoint::sheet1(2.0), -1).unwrap();
        assert!((m_minus - Complex64::new(31.0 / 32.0, s63 / 32.0)).norm() < 1e-12);
        assert!((m_plus.norm() - 1.0).abs() < 1e-12);
        // m₊m₋ = −θ_{q+1}/φ_q
        let prod = m_plus * m_minus;
        let lam = Complex64::new(2.0, 0.0);
        let want = -b.disc.theta_q1.eval(lam) / b.disc.phi_q.eval(lam);
        assert!((prod - want).norm() < 1e-12);
    }

    #[test]
    fn weyl_at_dirichlet_point() {
        let b = bg2();
        // μ₁ = 0 with φ(0) = 15/8, iΩ(0) = +15/8 on sheet 1 from above:
        // m₊ is singular, m₋ regular
        let pt = SurfacePoint::sheet1(0.0);
        assert!(matches!(
            b.weyl_m(&pt, 1),
            Err(JacError::PoleAtDirichletPoint { sign: '+', .. })
        ));
        let m_minus = b.weyl_m(&pt, -1).unwrap();
        // regular limit (φ′ − (iΩ)′)/φ_q′ at 0: φ′(0)=0, (iΩ)′(0)=ΔΔ′/iΩ=0, so 0
        assert!(m_minus.norm() < 1e-12, "{m_minus}");
    }

    #[test]
    fn bloch_psi_values() {
        let b = bg2();
        let pt = SurfacePoint::sheet1(2.0);
        assert!((b.bloch_psi(0, &pt, 1).unwrap() - 1.0).norm() < 1e-14);
        let m = b.weyl_m(&pt, 1).unwrap();
        assert!((b.bloch_psi(1, &pt, 1).unwrap() - m).norm() < 1e-14);
        let psi2 = b.bloch_psi(2, &pt, 1).unwrap();
        assert!((psi2 - (-4.0 + 4.0 * m)).norm() < 1e-12);
        assert!((psi2.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quasimomentum_pins() {
        let b = bg2();
        let k = b.quasimomentum(&SurfacePoint::sheet1(2.5));
        assert!(k.kappa.norm() < 1e-9 && (k.z - 1.0).norm() < 1e-9);
        let k = b.quasimomentum(&SurfacePoint::sheet1(-2.5));
        assert!((k.kappa - Complex64::new(-PI, 0.0)).norm() < 1e-9);
        assert!((k.z + 1.0).norm() < 1e-9);
        let k = b.quasimomentum(&SurfacePoint::sheet1(1.5));
        assert!((k.kappa - Complex64::new(-PI / 2.0, 0.0)).norm() < 1e-9);
        assert!((k.z + Complex64::new(0.0, 1.0)).norm() < 1e-9);
        // z(0, Λ₁) = −i e^{−h₁/2}
        let k = b.quasimomentum(&SurfacePoint::sheet1(0.0));
        let want = Complex64::new(0.0, -(-b.bands.h[0] / 2.0).exp());
        assert!((k.z - want).norm() < 1e-9, "{} vs {want}", k.z);
    }

    #[test]
    fn cos_q_kappa_equals_delta() {
        let b = bg2();
        let pts = [
            SurfacePoint::sheet1(2.0),
            SurfacePoint::sheet1(0.7),
            SurfacePoint::sheet2(-2.0),
            SurfacePoint::new(Complex64::new(1.0, 0.8), Sheet::One),
            SurfacePoint::new(Complex64::new(-2.2, -0.4), Sheet::Two),
            SurfacePoint::new(Complex64::new(3.1, 0.05), Sheet::One),
        ];
        for pt in pts {
            let k = b.quasimomentum(&pt);
            let lhs = (k.kappa * b.q() as f64).cos();
            let rhs = b.disc.delta.eval(pt.lambda);
            assert!((lhs - rhs).norm() < 1e-9, "at {pt:?}");
        }
    }

    #[test]
    fn sheet_map_inside_outside() {
        let b = bg2();
        let inside = b.quasimomentum(&SurfacePoint::new(
            Complex64::new(1.0, 0.5),
            Sheet::One,
        ));
        assert!(inside.z.norm() < 1.0);
        let outside = b.quasimomentum(&SurfacePoint::new(
            Complex64::new(1.0, 0.5),
            Sheet::Two,
        ));
        assert!(outside.z.norm() > 1.0);
        assert!((inside.z * outside.z - 1.0).norm() < 1e-9);
    }

    #[test]
    fn z_round_trips() {
        let b = bg2();
        for &z in &[
            Complex64::new(0.5, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(0.3, -0.4),
            Complex64::new(-0.2, 0.6),
            Complex64::new(1.4, 0.9),
        ] {
            let pt = b.lambda_of_z(z).unwrap();
            let back = b.quasimomentum(&pt).z;
            assert!((back - z).norm() < 1e-9, "z = {z}: back = {back}");
        }
    }

    #[test]
    fn on_slit_detection() {
        let b = bg2();
        // gap 1 slit for q=2 sits at angle −π/2 (and +π/2), radius ≥ e^{−h/2}
        let r = (-b.bands.h[0] / 2.0).exp();
        let z = Complex64::new(0.0, -(r + 0.5 * (1.0 - r)));
        assert!(matches!(
            b.lambda_of_z(z),
            Err(JacError::OnSlit { gap: 1, .. })
        ));
    }

    #[test]
    fn normalization_violation() {
        let bad = PeriodicBackground::new(vec![0.5, 3.0], vec![0.0, 0.0]);
        assert!(matches!(
            bad,
            Err(JacError::NormalizationViolated { .. })
        ));
    }

    #[test]
    fn psi_modulus_on_bands_and_z_modulus() {
        let b = bg2();
        for i in 0..100 {
            let x = 1.5 + (i as f64 + 0.5) / 100.0; // inside band 2
            let pt = SurfacePoint::sheet1(x);
            let z = b.quasimomentum(&pt).z;
            assert!((z.norm() - 1.0).abs() < 1e-10);
            let psi = b.bloch_psi(2, &pt, 1).unwrap();
            assert!(psi.norm() < 10.0);
        }
    }

    #[test]
    fn bloch_small_z_asymptotics() {
        // ψ_n^± ~ (∏_{j=0}^{n−1} a⁰_j)^{±1} z^{±n} (1+O(z)) as z → 0
        let b = bg2();
        let pt = SurfacePoint::sheet1(60.0); // far out in γ_q, z small
        let z = b.quasimomentum(&pt).z;
        assert!(z.norm() < 0.02);
        for n in 1..=3i64 {
            let prod: f64 = (0..n).map(|j| b.bg.a0(j)).product();
            let plus = b.bloch_psi(n, &pt, 1).unwrap();
            let ratio_p = plus / (prod * z.powi(n as i32));
            assert!(
                (ratio_p - 1.0).norm() < 0.1,
                "n = {n}: ψ⁺ ratio {ratio_p}"
            );
            let minus = b.bloch_psi(n, &pt, -1).unwrap();
            let ratio_m = minus * prod * z.powi(n as i32);
            assert!(
                (ratio_m - 1.0).norm() < 0.1,
                "n = {n}: ψ⁻ ratio {ratio_m}"
            );
        }
    }
}
