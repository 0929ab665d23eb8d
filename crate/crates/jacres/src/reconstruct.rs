//! Rebuilding the operator from resonance data: the characteristic
//! polynomial 𝓕 from the state set, the pair (1+A, J) defining
//! ŵ = 2iΩ(1+A) − J, the Jost-function numerators (P₁, P₂) from the zeros
//! of R₋ + 1, class-membership checks, and the hand-off to the GLM solver.
//!
//! Inputs are the state multiset, the zeros of R₋ + 1, the polynomials A
//! and φ₀⁺, and the constants c₃ and v₀. Everything else is derived:
//! lead(1+A) = −c₂v₀/(2A_p) pins c₂/A_p, and c₃ = c₁c₂ then pins
//! c₁A_p = −c₃v₀/(2·lead(1+A)).

use crate::algebra::{poly_roots, Polynomial};
use crate::background::{Background, Sheet, SurfacePoint};
use crate::error::{JacError, Result};
use crate::glm::{glm_kernel, kernel_range, recover_perturbation};
use crate::perturbed::{Carriers, Perturbation, Perturbed};
use crate::scattering::{assemble_scattering_data, ScatteringData};
use crate::states::{check_state_laws, states, State, StateKind};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Input data for the reconstruction pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionInput {
    pub states: Vec<State>,
    /// Zeros of R₋ + 1 (equivalently of the Jost function), as [re, im].
    pub r_zeros: Vec<[f64; 2]>,
    #[serde(rename = "A")]
    pub a_poly: Polynomial,
    pub phi0_plus: Polynomial,
    pub c3: f64,
    pub v0: f64,
}

impl ReconstructionInput {
    /// ν recovered from deg A = ν − 1.
    pub fn nu(&self) -> Result<i64> {
        match self.a_poly.degree() {
            Some(d) => Ok(d as i64 + 1),
            None => Err(JacError::HypothesisViolation(
                "A vanishes identically; ν is undefined".into(),
            )),
        }
    }

    /// Target state count κ = ν + 2q − 1.
    pub fn kappa(&self, q: usize) -> Result<i64> {
        Ok(self.nu()? + 2 * q as i64 - 1)
    }

    /// Leading coefficient of 1 + A at degree ν − 1.
    pub fn lead_one_plus_a(&self) -> Result<f64> {
        let nu = self.nu()?;
        let one_plus_a = self.a_poly.add(&Polynomial::from_real(&[1.0]));
        let c = one_plus_a.coeff((nu - 1) as usize);
        if c.norm() == 0.0 {
            return Err(JacError::HypothesisViolation(
                "leading coefficient of 1 + A vanishes".into(),
            ));
        }
        Ok(c.re)
    }

    /// c₁A_p = −c₃v₀ / (2·lead(1+A)), positive for class members.
    pub fn c1_ap(&self) -> Result<f64> {
        Ok(-self.c3 * self.v0 / (2.0 * self.lead_one_plus_a()?))
    }
}

/// Simplicity and disjointness requirements on the input data: all state
/// and R₋+1-zero multiplicities are 1, none sits within `sep` of a band
/// edge or a Dirichlet point, and the state count matches κ.
pub fn validate_hypotheses(input: &ReconstructionInput, back: &Background) -> Result<()> {
    if input.c3 == 0.0 || input.v0 == 0.0 {
        return Err(JacError::HypothesisViolation(
            "c₃ and v₀ must be nonzero".into(),
        ));
    }
    let kappa = input.kappa(back.q())?;
    let total: usize = input.states.iter().map(|s| s.multiplicity).sum();
    if total as i64 != kappa {
        return Err(JacError::HypothesisViolation(format!(
            "total state multiplicity {total} differs from κ = {kappa}"
        )));
    }
    let sep = 1e3 * back.tol.cluster_radius;
    let mut all: Vec<(Complex64, &str)> = Vec::new();
    for s in &input.states {
        if s.multiplicity != 1 {
            return Err(JacError::HypothesisViolation(format!(
                "state at {:?} has multiplicity {}",
                s.lambda, s.multiplicity
            )));
        }
        all.push((s.lambda_c(), "state"));
    }
    for r in &input.r_zeros {
        all.push((Complex64::new(r[0], r[1]), "zero of R₋+1"));
    }
    for (z, what) in &all {
        for &e in &back.bands.edges {
            if (z - Complex64::new(e, 0.0)).norm() < sep {
                return Err(JacError::HypothesisViolation(format!(
                    "{what} at {z} is within {sep:.1e} of band edge {e}"
                )));
            }
        }
        for &mu in &back.bands.mu {
            if (z - Complex64::new(mu, 0.0)).norm() < sep {
                return Err(JacError::HypothesisViolation(format!(
                    "{what} at {z} is within {sep:.1e} of Dirichlet point {mu}"
                )));
            }
        }
    }
    Ok(())
}

/// 𝓕 = c₃v₀ ∏ (λ − λ̃_j)^{m_j}.
pub fn f_from_states(input: &ReconstructionInput) -> Result<Polynomial> {
    let roots: Vec<(Complex64, usize)> = input
        .states
        .iter()
        .map(|s| (s.lambda_c(), s.multiplicity))
        .collect();
    let prod = Polynomial::monic_from_roots(&roots).scale(input.c3 * input.v0);
    let coeffs = prod.real_coeffs()?;
    Ok(Polynomial::from_real(&coeffs))
}

/// J = ±√(𝓕 − 4(1−Δ²)(1+A)²), the sign fixed so that
/// lead J = −lead(1+A).
pub fn what_from_f(
    f: &Polynomial,
    a_poly: &Polynomial,
    back: &Background,
) -> Result<Polynomial> {
    let one_plus_a = a_poly.add(&Polynomial::from_real(&[1.0]));
    let delta = &back.disc.delta;
    let four_omega_sq = Polynomial::from_real(&[4.0]).sub(&delta.mul(delta).scale(4.0));
    let j_sq = f.sub(&four_omega_sq.mul(&one_plus_a.mul(&one_plus_a)));
    if one_plus_a.is_zero() {
        return Err(JacError::HypothesisViolation("1 + A vanishes".into()));
    }
    let sign = if one_plus_a.leading().re > 0.0 { -1 } else { 1 };
    crate::algebra::poly_sqrt(&j_sq, sign)
}

/// Recover P₁ from the zeros of R₋ + 1 and P₂ = φ₀⁺.
///
/// F_f = −a⁰₀c₃·∏(λ − r_k) satisfies
/// F_f = φ_q P₁² + 2φ P₁P₂ − θ_{q+1} P₂², so
/// (φ_q P₁ + φ P₂)² = φ_q F_f + (Δ²−1)P₂². The square root G of the right
/// side is formed once in coefficient space, and the quadratic root
/// P₁ = (±G − φP₂)/φ_q by exact polynomial division (pointwise evaluation
/// of ±G − φP₂ cancels through the full dynamic range of G and is avoided).
/// The branch is selected by the division remainder together with the
/// factorization residual; when both branches reproduce F_f the limit
/// f → c₁A_p on Λ₁ breaks the tie.
pub fn jost0_from_zeros(input: &ReconstructionInput, back: &Background) -> Result<Polynomial> {
    let nu = input.nu()?;
    let q = back.q() as i64;
    let p2 = &input.phi0_plus;
    let mut roots: Vec<(Complex64, usize)> = input
        .r_zeros
        .iter()
        .map(|r| (Complex64::new(r[0], r[1]), 1))
        .collect();
    // F_f also vanishes at every Dirichlet point where P₂ does: there the
    // pole of m_± is cancelled and the explicit φ_q factor survives. Those
    // roots are not zeros of R₋ + 1 and are restored here.
    let p2_scale = p2.coeffs().iter().map(|c| c.norm()).fold(1.0f64, f64::max);
    for &mu in &back.bands.mu {
        if p2.eval_real(mu).abs() < 1e-6 * p2_scale {
            roots.push((Complex64::new(mu, 0.0), 1));
        }
    }
    if roots.len() as i64 > nu + q - 1 {
        return Err(JacError::HypothesisViolation(format!(
            "{} zeros for F_f exceed deg F_f = ν+q−1 = {}",
            roots.len(),
            nu + q - 1
        )));
    }
    let ff_coeffs = Polynomial::monic_from_roots(&roots)
        .scale(-back.a00() * input.c3)
        .real_coeffs()?;
    let ff = Polynomial::from_real(&ff_coeffs);

    let disc = &back.disc;
    let dsq_m1 = disc
        .delta
        .mul(&disc.delta)
        .sub(&Polynomial::from_real(&[1.0]));
    let g_sq = disc.phi_q.mul(&ff).add(&dsq_m1.mul(&p2.mul(p2)));
    let g = crate::algebra::poly_sqrt(&g_sq, 1)?;

    let c1_ap = input.c1_ap()?;
    let lam_big = 1.0e4;
    let pt_big = SurfacePoint::sheet1(lam_big);
    let m_big = back.weyl_m(&pt_big, 1)?;
    let scale_ff = ff_coeffs.iter().map(|c| c.abs()).fold(1.0f64, f64::max);

    let mut cands: Vec<(f64, f64, Polynomial)> = Vec::new();
    let mut report = String::new();
    for s in [1.0, -1.0] {
        let num = g.scale(s).sub(&disc.phi.mul(p2));
        let num_scale = num.coeffs().iter().map(|c| c.norm()).fold(1.0f64, f64::max);
        let (cand, rem) = crate::algebra::poly_divmod(&num, &disc.phi_q)?;
        let rem_rel = rem
            .coeffs()
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max)
            / num_scale;
        // factorization residual
        let rebuilt = disc
            .phi_q
            .mul(&cand.mul(&cand))
            .add(&disc.phi.mul(&cand.mul(p2)).scale(2.0))
            .sub(&disc.theta_q1.mul(&p2.mul(p2)));
        let resid = (rebuilt
            .sub(&ff)
            .coeffs()
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max)
            / scale_ff)
            .max(rem_rel);
        // limit of f = P₁ + m₊P₂ on Λ₁, judged against the cancellation
        // noise of the two terms at the evaluation point
        let t1 = cand.eval(Complex64::new(lam_big, 0.0));
        let t2 = m_big * p2.eval(Complex64::new(lam_big, 0.0));
        let floor = c1_ap.abs().max(1e-8 * (t1.norm() + t2.norm())).max(1e-12);
        let lim_err = (t1 + t2 - c1_ap).norm() / floor;
        report.push_str(&format!(
            "branch {s:+}: residual {resid:.2e}, Λ₁ limit error {lim_err:.2e}; "
        ));
        cands.push((resid, lim_err, cand));
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    if cands[0].0 >= 1e-6 {
        return Err(JacError::BranchSelectionFailed(report));
    }
    if cands.len() == 2 && cands[1].0 < 1e-6 {
        // both branches reproduce F_f; fall back to the Λ₁ limit of f
        let first = cands[0].1 < 1e-2;
        let second = cands[1].1 < 1e-2;
        if first == second {
            return Err(JacError::BranchSelectionFailed(format!(
                "both quadratic branches are consistent: {report}"
            )));
        }
        if second {
            return Ok(cands.swap_remove(1).2);
        }
    }
    Ok(cands.swap_remove(0).2)
}

/// Assemble the ŝ carriers from (A, J) and (P₁, P₂):
/// P_ω = φ_q(P₁ − 1 − A) + φP₂ and P_plain = φ_qJ + 2(Δ²−1)P₂.
pub fn carriers_from_pair(
    back: Background,
    a_poly: Polynomial,
    j_poly: Polynomial,
    p1: &Polynomial,
    p2: &Polynomial,
    f_poly: Polynomial,
) -> Carriers {
    let disc = &back.disc;
    let one_plus_a = a_poly.add(&Polynomial::from_real(&[1.0]));
    let p_omega = disc
        .phi_q
        .mul(&p1.sub(&one_plus_a))
        .add(&disc.phi.mul(p2));
    let dsq_m1 = disc
        .delta
        .mul(&disc.delta)
        .sub(&Polynomial::from_real(&[1.0]));
    let p_plain = disc.phi_q.mul(&j_poly).add(&dsq_m1.mul(p2).scale(2.0));
    Carriers {
        back,
        a_poly,
        j_poly,
        p_omega,
        p_plain,
        f_poly,
    }
}

fn clause(name: &str, detail: String) -> JacError {
    JacError::ClassMembershipFailed(format!("{name}: {detail}"))
}

/// Verify class membership of the assembled pair and produce the
/// scattering data (pole split, states, norming constants).
pub fn scattering_from_pair(
    op: &Carriers,
    p1: &Polynomial,
    p2: &Polynomial,
    c3: f64,
    v0: f64,
) -> Result<ScatteringData> {
    let back = &op.back;
    let q = back.q() as i64;
    let nu = op
        .f_poly
        .degree()
        .map(|d| d as i64 - 2 * q + 1)
        .ok_or(JacError::DegreeZero)?;
    let one_plus_a = op.a_poly.add(&Polynomial::from_real(&[1.0]));
    let lead_a = one_plus_a.coeff((nu - 1) as usize).re;
    if lead_a == 0.0 {
        return Err(clause("degrees", "1 + A drops degree below ν − 1".into()));
    }
    let c1_ap = -c3 * v0 / (2.0 * lead_a);
    if c1_ap <= 0.0 {
        return Err(clause("positivity", format!("c₁A_p = {c1_ap} ≤ 0")));
    }
    if op.j_poly.degree() != Some((nu + q - 1) as usize) {
        return Err(clause(
            "degrees",
            format!("deg J = {:?}, expected ν+q−1 = {}", op.j_poly.degree(), nu + q - 1),
        ));
    }
    if let Some(d) = p1.degree() {
        if d as i64 > nu - 2 {
            return Err(clause("degrees", format!("deg P₁ = {d} exceeds ν−2")));
        }
    }
    if p2.degree() != Some((nu - 1) as usize) {
        return Err(clause(
            "degrees",
            format!("deg P₂ = {:?}, expected ν−1 = {}", p2.degree(), nu - 1),
        ));
    }
    let lead_p2 = p2.coeff((nu - 1) as usize).re;
    let want_p2 = 2.0 * back.a00() * lead_a / v0;
    if (lead_p2 - want_p2).abs() > 1e-6 * want_p2.abs().max(1.0) {
        return Err(clause(
            "degrees",
            format!("lead P₂ = {lead_p2}, expected −a⁰₀c₂/A_p = {want_p2}"),
        ));
    }
    // Asymptotic forms. ŵ and f₀⁺ reach their Λ₁ forms through cancellations
    // that magnify rounding without bound as λ grows, so the Λ₁ clauses are
    // checked through the product identities ŵ(Λ₁)ŵ(Λ₂) = 𝓕 and
    // f₀⁺(Λ₁)f₀⁺(Λ₂) = F_f/φ_q, whose factors stay cancellation-free.
    let lam_big = 1.0e4;
    let pt2 = SurfacePoint::sheet2(lam_big);
    let lam_c = Complex64::new(lam_big, 0.0);
    let w2 = op.w_hat(&pt2);
    let want2 = 2.0 * lead_a * lam_big.powi((nu + q - 1) as i32);
    if (w2.re / want2 - 1.0).abs() > 1e-2 || (w2.im / want2).abs() > 1e-2 {
        return Err(clause(
            "asymptotics",
            format!("ŵ(Λ₂) ~ {w2} vs −(c₂v₀/A_p)λ^{{ν+q−1}} = {want2}"),
        ));
    }
    let w1 = op.f_poly.eval(lam_c) / w2;
    let want1 = -c1_ap * lam_big.powi(q as i32);
    if (w1.re / want1 - 1.0).abs() > 1e-2 || (w1.im / want1).abs() > 1e-2 {
        return Err(clause(
            "asymptotics",
            format!("ŵ(Λ₁) ~ {w1} vs −c₁A_pλ^q = {want1}"),
        ));
    }
    let f2 = p1.eval(lam_c)
        + (back.disc.phi.eval(lam_c) + back.i_omega(&pt2)) / back.disc.phi_q.eval(lam_c)
            * p2.eval(lam_c);
    let want_f2 = 2.0 * lead_a / v0 * lam_big.powi(nu as i32);
    if (f2.re / want_f2 - 1.0).abs() > 1e-2 || (f2.im / want_f2).abs() > 1e-2 {
        return Err(clause(
            "asymptotics",
            format!("f(Λ₂) ~ {f2} vs −(c₂/A_p)λ^ν = {want_f2}"),
        ));
    }
    // f₀⁺(Λ₁) → c₁A_p, read off the top coefficients of
    // F_f = φ_q f₀⁺(f₀⁺)* = φ_qP₁² + 2φP₁P₂ − θ_{q+1}P₂²: the combination
    // must collapse to degree ν+q−1, and the implied Λ₁ limit is then
    // lead(F_f)/(lead(φ_q)·(2 lead_a/v₀)).
    let t_a = back.disc.phi_q.mul(&p1.mul(p1));
    let t_b = back.disc.phi.mul(&p1.mul(p2)).scale(2.0);
    let t_c = back.disc.theta_q1.mul(&p2.mul(p2));
    let f_f = t_a.add(&t_b).sub(&t_c);
    let scale_ff = [&t_a, &t_b, &t_c]
        .iter()
        .flat_map(|t| t.coeffs())
        .map(|c| c.norm())
        .fold(1.0f64, f64::max);
    let top = (nu + q - 1) as usize;
    let excess = f_f
        .coeffs()
        .iter()
        .skip(top + 1)
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    let phi_q_lead = back.disc.phi_q.coeff(q as usize - 1).re;
    let f1 = f_f.coeff(top).re / (phi_q_lead * 2.0 * lead_a / v0);
    if excess > 1e-4 * scale_ff
        || (f1 - c1_ap).abs() > (1e-2 * c1_ap.abs()).max(1e-4 * scale_ff)
    {
        return Err(clause(
            "asymptotics",
            format!("f(Λ₁) → {f1} vs c₁A_p = {c1_ap} (excess mass {excess:.3e})"),
        ));
    }
    // 𝓕 identity re-check
    let delta = &back.disc.delta;
    let four_omega_sq = Polynomial::from_real(&[4.0]).sub(&delta.mul(delta).scale(4.0));
    let rebuilt = four_omega_sq
        .mul(&one_plus_a.mul(&one_plus_a))
        .add(&op.j_poly.mul(&op.j_poly));
    let fscale = op
        .f_poly
        .coeffs()
        .iter()
        .map(|c| c.norm())
        .fold(1.0f64, f64::max);
    let fresid = rebuilt
        .sub(&op.f_poly)
        .coeffs()
        .iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    if fresid > 1e-6 * fscale {
        return Err(clause(
            "structure",
            format!("4(1−Δ²)(1+A)² + J² deviates from 𝓕 by {fresid:.3e}"),
        ));
    }
    // conditions 1 and 2: state geometry
    let list = states(op).map_err(|e| clause("condition 1", e.to_string()))?;
    for s in &list.states {
        if s.sheet == Sheet::One && s.kind == StateKind::Resonance {
            return Err(clause(
                "condition 1",
                format!("zero of ŵ at {:?} on Λ₁ is off the real gaps", s.lambda),
            ));
        }
        if (s.kind == StateKind::Bound || s.kind == StateKind::Virtual) && s.multiplicity != 1 {
            return Err(clause(
                "condition 2",
                format!("zero at {:?} is not simple", s.lambda),
            ));
        }
    }
    check_state_laws(op, &list).map_err(|e| clause("condition 2", e.to_string()))?;
    // condition 3: positive norming constants, via the assembled data
    let sd = assemble_scattering_data(op, &list).map_err(|e| match e {
        JacError::NonPositiveNorming { .. } => clause("condition 3", e.to_string()),
        other => other,
    })?;
    // condition 4: at edges that are Dirichlet points, ŝ must meet ŵ
    for &e in &back.bands.edges {
        let fq_scale = back
            .disc
            .phi_q
            .coeffs()
            .iter()
            .map(|c| c.norm())
            .fold(1.0f64, f64::max);
        if back.disc.phi_q.eval_real(e).abs() < 1e-8 * fq_scale {
            let pt = SurfacePoint::new(Complex64::new(e, 1e-7), Sheet::One);
            let s_hat = op
                .s_hat(&pt)
                .map_err(|err| clause("condition 4", err.to_string()))?;
            let w_hat = op.w_hat(&pt);
            let scale = s_hat.norm().max(w_hat.norm()).max(1.0);
            if (s_hat - w_hat).norm() > 1e-2 * scale {
                return Err(clause(
                    "condition 4",
                    format!("at edge {e}: ŝ = {s_hat}, ŵ = {w_hat}"),
                ));
            }
        }
    }
    Ok(sd)
}

/// Run the full pipeline up to scattering data.
pub fn reconstruct_scattering(
    input: &ReconstructionInput,
    back: &Background,
) -> Result<(Carriers, ScatteringData)> {
    validate_hypotheses(input, back)?;
    let f = f_from_states(input)?;
    let j = what_from_f(&f, &input.a_poly, back)?;
    let p1 = jost0_from_zeros(input, back)?;
    let op = carriers_from_pair(
        back.clone(),
        input.a_poly.clone(),
        j,
        &p1,
        &input.phi0_plus,
        f,
    );
    let sd = scattering_from_pair(&op, &p1, &input.phi0_plus, input.c3, input.v0)?;
    Ok((op, sd))
}

/// Full inverse: input data → recovered perturbation.
pub fn reconstruct_perturbation(
    input: &ReconstructionInput,
    back: &Background,
) -> Result<(Perturbation, Carriers, ScatteringData)> {
    let (op, sd) = reconstruct_scattering(input, back)?;
    let nu = input.nu()?;
    let (lo, hi) = kernel_range(1, nu);
    let table = glm_kernel(&op, &sd, 1, lo, hi)?;
    let pert = recover_perturbation(&table, &op.back)?;
    Ok((pert, op, sd))
}

/// Extract reconstruction input from a directly built operator.
///
/// The zeros of R₋ + 1 are the roots of
/// F_f = φ_q P₁² + 2φ P₁P₂ − θ_{q+1} P₂² with P₁ = θ₀⁺, P₂ = φ₀⁺; a root
/// of multiplicity above one violates the simplicity hypotheses.
pub fn extract_input(op: &Perturbed) -> Result<ReconstructionInput> {
    let list = states(op)?;
    let disc = &op.back.disc;
    let p1 = op.plus.theta(0);
    let p2 = op.plus.phi(0);
    let ff = disc
        .phi_q
        .mul(&p1.mul(p1))
        .add(&disc.phi.mul(&p1.mul(p2)).scale(2.0))
        .sub(&disc.theta_q1.mul(&p2.mul(p2)));
    let roots = poly_roots(&ff, op.back.tol.cluster_radius)?;
    let sep = 1e3 * op.back.tol.cluster_radius;
    let p2_scale = p2.coeffs().iter().map(|c| c.norm()).fold(1.0f64, f64::max);
    let mut r_zeros = Vec::new();
    for e in &roots.entries {
        // drop the φ_q-factor roots at Dirichlet points where P₂ vanishes;
        // they are not zeros of R₋ + 1
        if op.back.bands.mu.iter().any(|&mu| {
            (e.location - Complex64::new(mu, 0.0)).norm() < sep
                && p2.eval_real(mu).abs() < 1e-6 * p2_scale
        }) {
            continue;
        }
        if e.multiplicity != 1 {
            return Err(JacError::HypothesisViolation(format!(
                "zero of R₋+1 at {} has multiplicity {}",
                e.location, e.multiplicity
            )));
        }
        r_zeros.push([e.location.re, e.location.im]);
    }
    r_zeros.sort_by(|a, b| (a[0], a[1]).partial_cmp(&(b[0], b[1])).unwrap());
    Ok(ReconstructionInput {
        states: list.states,
        r_zeros,
        a_poly: op.a_poly.clone(),
        phi0_plus: p2.clone(),
        c3: op.c3,
        v0: op.pert.v(0),
    })
}
