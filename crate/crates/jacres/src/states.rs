//! States of the perturbed operator: the zeros of ŵ on the surface away from
//! the spectrum, located as roots of 𝓕 = ŵ(·,Λ₁)ŵ(·,Λ₂) and lifted to the
//! correct sheet by evaluating |ŵ| on both.
//!
//! Classification: a real zero inside a gap lifts to sheet 1 (bound state,
//! necessarily simple) or sheet 2 (antibound); a zero at a band edge is a
//! virtual state (edge precedence, no sheet distinction); a non-real zero is
//! a resonance and lives on sheet 2, in conjugate pairs.

use crate::algebra::poly_roots;
use crate::background::{Sheet, SurfacePoint};
use crate::error::{JacError, Result};
use crate::perturbed::Carriers;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Kind of state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Bound,
    Antibound,
    Resonance,
    Virtual,
}

/// A single state with its surface location and multiplicity as a zero of 𝓕.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct State {
    pub lambda: [f64; 2],
    pub sheet: Sheet,
    pub kind: StateKind,
    pub multiplicity: usize,
}

impl State {
    pub fn lambda_c(&self) -> Complex64 {
        Complex64::new(self.lambda[0], self.lambda[1])
    }

    pub fn point(&self) -> SurfacePoint {
        SurfacePoint::new(self.lambda_c(), self.sheet)
    }
}

/// All states, with the degree of 𝓕 they must account for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateList {
    pub states: Vec<State>,
    /// deg 𝓕, which the multiplicities sum to.
    pub degree: usize,
}

impl StateList {
    pub fn total_multiplicity(&self) -> usize {
        self.states.iter().map(|s| s.multiplicity).sum()
    }

    pub fn bound(&self) -> impl Iterator<Item = &State> {
        self.states.iter().filter(|s| s.kind == StateKind::Bound)
    }

    pub fn of_kind(&self, kind: StateKind) -> impl Iterator<Item = &State> + '_ {
        self.states.iter().filter(move |s| s.kind == kind)
    }
}

/// Locate and classify all states of the perturbed operator.
pub fn states(op: &Carriers) -> Result<StateList> {
    let tol = &op.back.tol;
    let degree = op
        .f_poly
        .degree()
        .filter(|&d| d > 0)
        .ok_or(JacError::DegreeZero)?;
    let roots = poly_roots(&op.f_poly, tol.cluster_radius)?;
    let bands = &op.back.bands;
    let mut out = Vec::new();
    for entry in &roots.entries {
        let lam = entry.location;
        let m = entry.multiplicity;
        let scale = lam.norm().max(1.0);
        if lam.im.abs() <= tol.cluster_radius * scale {
            let x = lam.re;
            if let Some(e) = bands.near_edge(x, tol.cluster_radius) {
                // a root of 𝓕 at an edge forces J(e) = 0: virtual state
                out.push(State {
                    lambda: [e, 0.0],
                    sheet: Sheet::One,
                    kind: StateKind::Virtual,
                    multiplicity: m,
                });
                continue;
            }
            if !bands.in_gap_closure(x) {
                return Err(JacError::LawViolation(format!(
                    "real zero of F at {x} inside a band"
                )));
            }
            let sheet = lift(op, Complex64::new(x, 0.0))?;
            let kind = match sheet {
                Sheet::One => StateKind::Bound,
                Sheet::Two => StateKind::Antibound,
            };
            out.push(State {
                lambda: [x, 0.0],
                sheet,
                kind,
                multiplicity: m,
            });
        } else {
            let sheet = lift(op, lam)?;
            out.push(State {
                lambda: [lam.re, lam.im],
                sheet,
                kind: StateKind::Resonance,
                multiplicity: m,
            });
        }
    }
    out.sort_by(|a, b| {
        a.lambda[0]
            .total_cmp(&b.lambda[0])
            .then(a.lambda[1].total_cmp(&b.lambda[1]))
    });
    Ok(StateList { states: out, degree })
}

/// Decide the sheet of a zero of 𝓕 by evaluating |ŵ| on both sheets.
fn lift(op: &Carriers, lambda: Complex64) -> Result<Sheet> {
    let tol = op.back.tol.lift_tol;
    let p1 = SurfacePoint::new(lambda, Sheet::One);
    let p2 = SurfacePoint::new(lambda, Sheet::Two);
    let r1 = op.w_hat(&p1).norm();
    let r2 = op.w_hat(&p2).norm();
    // natural size of ŵ at this λ
    let scale = op.j_poly.eval(lambda).norm().max(
        (2.0 * op.back.i_omega(&p1) * (1.0 + op.a_poly.eval(lambda))).norm(),
    ) + 1e-12;
    let z1 = r1 <= tol * scale;
    let z2 = r2 <= tol * scale;
    match (z1, z2) {
        (true, false) => Ok(Sheet::One),
        (false, true) => Ok(Sheet::Two),
        _ => {
            // fall back to a strong relative separation
            if r1 < 1e-3 * r2 {
                Ok(Sheet::One)
            } else if r2 < 1e-3 * r1 {
                Ok(Sheet::Two)
            } else {
                Err(JacError::LiftAmbiguous {
                    location: format!("{lambda}"),
                    r1,
                    r2,
                })
            }
        }
    }
}

/// Structural laws every valid state list satisfies.
///
/// Checks: multiplicities sum to deg 𝓕; bound states are simple, real, and
/// interior to gap closures; no bound/antibound pair shares a projection;
/// resonances come in conjugate pairs of equal multiplicity; every finite gap
/// closure carries an even total count; and 𝓕 > 0 on band interiors.
pub fn check_state_laws(op: &Carriers, list: &StateList) -> Result<()> {
    let tol = &op.back.tol;
    let bands = &op.back.bands;
    if list.total_multiplicity() != list.degree {
        return Err(JacError::LawViolation(format!(
            "multiplicities sum to {} but deg F = {}",
            list.total_multiplicity(),
            list.degree
        )));
    }
    for s in list.bound() {
        if s.multiplicity != 1 {
            return Err(JacError::LawViolation(format!(
                "bound state at {} has multiplicity {}",
                s.lambda[0], s.multiplicity
            )));
        }
        if !bands.in_gap_closure(s.lambda[0]) {
            return Err(JacError::LawViolation(format!(
                "bound state at {} outside gap closures",
                s.lambda[0]
            )));
        }
    }
    for b in list.bound() {
        for a in list.of_kind(StateKind::Antibound) {
            if (b.lambda[0] - a.lambda[0]).abs()
                <= tol.cluster_radius * b.lambda[0].abs().max(1.0)
            {
                return Err(JacError::LawViolation(format!(
                    "bound and antibound states coincide at {}",
                    b.lambda[0]
                )));
            }
        }
    }
    let resonances: Vec<&State> = list.of_kind(StateKind::Resonance).collect();
    for r in &resonances {
        let found = resonances.iter().any(|s| {
            (s.lambda[0] - r.lambda[0]).abs() <= tol.cluster_radius * r.lambda[0].abs().max(1.0)
                && (s.lambda[1] + r.lambda[1]).abs()
                    <= tol.cluster_radius * r.lambda[1].abs().max(1.0)
                && s.multiplicity == r.multiplicity
        });
        if !found {
            return Err(JacError::LawViolation(format!(
                "resonance at {}+{}i lacks a conjugate partner",
                r.lambda[0], r.lambda[1]
            )));
        }
    }
    // even count per finite gap closure
    for j in 1..op.back.q() {
        let lo = bands.edges[2 * j - 1];
        let hi = bands.edges[2 * j];
        let slack = tol.cluster_radius * lo.abs().max(1.0);
        let count: usize = list
            .states
            .iter()
            .filter(|s| {
                s.lambda[1] == 0.0 && s.lambda[0] >= lo - slack && s.lambda[0] <= hi + slack
            })
            .map(|s| s.multiplicity)
            .sum();
        if count % 2 != 0 {
            return Err(JacError::LawViolation(format!(
                "gap {j} closure carries {count} states (odd)"
            )));
        }
    }
    // 𝓕 > 0 on band interiors
    for j in 1..=op.back.q() {
        let (lo, hi) = bands.band(j);
        if hi - lo < 1e-9 {
            continue;
        }
        for i in 0..50 {
            let x = lo + (hi - lo) * (i as f64 + 0.5) / 50.0;
            let f = op.f_poly.eval_real(x);
            if f < -1e-10 * x.abs().max(1.0) {
                return Err(JacError::LawViolation(format!(
                    "F({x}) = {f} < 0 inside band {j}"
                )));
            }
        }
    }
    Ok(())
}
