//! Scattering data: the Dirichlet-point splitting M₊/M₋/M_e with the
//! regularizers D^±, the S-matrix (transmission and reflection coefficients)
//! on the bands, norming constants at bound states, and the hypothesis checks
//! gating the inverse problem.

use crate::algebra::Polynomial;
use crate::background::{Background, SurfacePoint};
use crate::error::{JacError, Result};
use crate::perturbed::Carriers;
use crate::states::{StateKind, StateList};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Splitting of the Dirichlet points by which Weyl function they blow up:
/// μ ∈ M₊ when m₊ has the pole (φ − iΩ vanishes there), μ ∈ M₋ when m₋
/// does, μ ∈ M_e when μ sits at a band edge (counted with D⁺).
#[derive(Debug, Clone, Serialize)]
pub struct PoleSplit {
    pub m_plus: Vec<f64>,
    pub m_minus: Vec<f64>,
    pub m_edge: Vec<f64>,
    #[serde(skip)]
    pub d_plus: Polynomial,
    #[serde(skip)]
    pub d_minus: Polynomial,
}

/// Classify every Dirichlet point and build D⁺ = ∏_{M₊∪M_e}(λ−μ),
/// D⁻ = ∏_{M₋}(λ−μ).
pub fn pole_split(back: &Background) -> Result<PoleSplit> {
    let tol = &back.tol;
    let mut m_plus = Vec::new();
    let mut m_minus = Vec::new();
    let mut m_edge = Vec::new();
    for &mu in &back.bands.mu {
        if back.bands.near_edge(mu, tol.cluster_radius).is_some() {
            m_edge.push(mu);
            continue;
        }
        let pt = SurfacePoint::sheet1(mu);
        let phi = back.disc.phi.eval(pt.lambda);
        let w = back.i_omega(&pt);
        let scale = phi.norm().max(w.norm()).max(1e-12);
        let n_plus = (phi + w).norm();
        let n_minus = (phi - w).norm();
        let zero_plus = n_plus <= 1e-6 * scale;
        let zero_minus = n_minus <= 1e-6 * scale;
        match (zero_minus, zero_plus) {
            (true, false) => m_plus.push(mu),
            (false, true) => m_minus.push(mu),
            _ => {
                return Err(JacError::AmbiguousAssignment {
                    mu,
                    plus: n_plus,
                    minus: n_minus,
                })
            }
        }
    }
    let monic = |pts: &[f64]| {
        let pairs: Vec<(Complex64, usize)> =
            pts.iter().map(|&x| (Complex64::new(x, 0.0), 1)).collect();
        Polynomial::monic_from_roots(&pairs)
    };
    let mut plus_and_edge = m_plus.clone();
    plus_and_edge.extend_from_slice(&m_edge);
    Ok(PoleSplit {
        d_plus: monic(&plus_and_edge),
        d_minus: monic(&m_minus),
        m_plus,
        m_minus,
        m_edge,
    })
}

/// S-matrix values at one point of the spectrum (|z| = 1).
#[derive(Debug, Clone, Copy)]
pub struct SMatrix {
    pub lambda: Complex64,
    pub z: Complex64,
    pub t: Complex64,
    pub r_plus: Complex64,
    pub r_minus: Complex64,
    /// α = ŵ/(z^q − z^{−q}) = 1/T.
    pub alpha: Complex64,
    pub beta_plus: Complex64,
    pub beta_minus: Complex64,
}

/// Evaluate the S-matrix at a sheet-1 band point.
///
/// Errors with [`JacError::AtBandEdge`] when z^{2q} is within 1e−10 of 1 and
/// with [`JacError::HypothesisViolation`] off the spectrum.
pub fn smatrix(op: &Carriers, pt: &SurfacePoint) -> Result<SMatrix> {
    let kz = op.back.quasimomentum(pt);
    let z = kz.z;
    if (z.norm() - 1.0).abs() > 1e-6 {
        return Err(JacError::HypothesisViolation(format!(
            "S-matrix needs a spectrum point, got |z| = {}",
            z.norm()
        )));
    }
    let q = op.back.q() as i32;
    if (z.powi(2 * q) - 1.0).norm() < 1e-10 {
        return Err(JacError::AtBandEdge {
            z: format!("{z}"),
        });
    }
    let two_i_omega = z.powi(q) - z.powi(-q);
    let w = op.w_hat(pt);
    let s1 = op.s_hat(pt)?;
    let s2 = op.s_hat(&pt.flip())?;
    let alpha = w / two_i_omega;
    let t = 1.0 / alpha;
    let r_minus = s1 / w;
    let r_plus = s2 / w;
    Ok(SMatrix {
        lambda: pt.lambda,
        z,
        t,
        r_plus,
        r_minus,
        alpha,
        beta_plus: r_plus * alpha,
        beta_minus: r_minus * alpha,
    })
}

/// Norming constants at the bound states, in bound-state order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormingConstants {
    pub rho: Vec<f64>,
    pub gamma_plus: Vec<f64>,
    pub gamma_minus: Vec<f64>,
}

/// γ₊ = −(D⁻/D⁺)(ρ)·2iΩ(ρ)/(ŝ(ρ)ŵ′(ρ)) and γ₋ = 1/(γ₊ ŵ′(ρ)²),
/// both necessarily positive.
pub fn norming_constants(
    op: &Carriers,
    split: &PoleSplit,
    states: &StateList,
) -> Result<NormingConstants> {
    let mut rho = Vec::new();
    let mut gamma_plus = Vec::new();
    let mut gamma_minus = Vec::new();
    for (k, st) in states.bound().enumerate() {
        let pt = st.point();
        let lam = pt.lambda;
        let dp = split.d_plus.eval(lam);
        let dm = split.d_minus.eval(lam);
        let w2 = 2.0 * op.back.i_omega(&pt);
        let s = op.s_hat(&pt)?;
        let wp = op.w_hat_prime(&pt)?;
        let gp = -(dm / dp) * w2 / (s * wp);
        if gp.im.abs() > 1e-8 * gp.re.abs().max(1.0) {
            return Err(JacError::Numerical(format!(
                "norming constant at {lam} is not real: {gp}"
            )));
        }
        let gp = gp.re;
        if gp <= 0.0 {
            return Err(JacError::NonPositiveNorming {
                side: '+',
                k,
                value: gp,
            });
        }
        let gm = 1.0 / (gp * (wp * wp).re);
        if gm <= 0.0 {
            return Err(JacError::NonPositiveNorming {
                side: '-',
                k,
                value: gm,
            });
        }
        rho.push(lam.re);
        gamma_plus.push(gp);
        gamma_minus.push(gm);
    }
    Ok(NormingConstants {
        rho,
        gamma_plus,
        gamma_minus,
    })
}

/// Full scattering data for one side of the line.
#[derive(Debug, Clone)]
pub struct ScatteringData {
    pub split: PoleSplit,
    pub states: StateList,
    pub norming: NormingConstants,
}

/// Assemble the scattering data (pole split, states, norming constants).
pub fn assemble_scattering_data(op: &Carriers, states: &StateList) -> Result<ScatteringData> {
    let split = pole_split(&op.back)?;
    let norming = norming_constants(op, &split, states)?;
    Ok(ScatteringData {
        split,
        states: states.clone(),
        norming,
    })
}

/// The conditions under which the inverse problem is solvable from one-sided
/// data: only simple bound states strictly inside open gaps, no virtual
/// states, positive norming constants, and |R| ≤ 1 with T ≠ 0 on the bands.
pub fn check_hypothesis1(op: &Carriers, states: &StateList) -> Result<()> {
    let bands = &op.back.bands;
    let tol = &op.back.tol;
    for st in &states.states {
        if st.kind == StateKind::Virtual {
            return Err(JacError::HypothesisViolation(format!(
                "virtual state at edge {}",
                st.lambda[0]
            )));
        }
        if st.kind == StateKind::Bound {
            if st.multiplicity != 1 {
                return Err(JacError::HypothesisViolation(format!(
                    "bound state at {} is not simple",
                    st.lambda[0]
                )));
            }
            let x = st.lambda[0];
            if bands.near_edge(x, 1e3 * tol.cluster_radius).is_some() {
                return Err(JacError::HypothesisViolation(format!(
                    "bound state at {x} too close to a band edge"
                )));
            }
        }
    }
    let split = pole_split(&op.back)?;
    norming_constants(op, &split, states)?;
    for j in 1..=op.back.q() {
        let (lo, hi) = bands.band(j);
        for i in 0..16 {
            let x = lo + (hi - lo) * (i as f64 + 0.5) / 16.0;
            let sm = smatrix(op, &SurfacePoint::sheet1(x))?;
            if sm.t.norm() < 1e-12 {
                return Err(JacError::HypothesisViolation(format!(
                    "transmission vanishes at λ = {x}"
                )));
            }
            for r in [sm.r_plus, sm.r_minus] {
                if r.norm() > 1.0 + 1e-8 {
                    return Err(JacError::HypothesisViolation(format!(
                        "|R| = {} > 1 at λ = {x}",
                        r.norm()
                    )));
                }
            }
        }
    }
    Ok(())
}
