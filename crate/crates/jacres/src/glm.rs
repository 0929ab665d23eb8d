//! The inverse step: spectral-measure quadrature over the bands, the
//! Gel'fand–Levitan–Marchenko kernels F^± (continuous part plus bound-state
//! residues), the finite GLM systems for the transformation coefficients
//! K_±(n, ·), and recovery of the perturbation (u, v).
//!
//! The contour integral (1/2πi)∮ · dω is evaluated band by band with the
//! parametrization λ(t) = mid + hw·cos t, t ∈ [0, 2π); t ∈ (0, π) is the
//! upper (+i0) side. The t-independent weight
//! i·W(λ)Δ′(λ)/(q·σ_j·√h_j(λ)), with W = ∏(λ−μ_k)/(λ−α_k),
//! h_j(λ) = ¼∏_{e∉band j}(λ−e) and σ_j = (−1)^{q−j+1}, makes the composite
//! rule the plain trapezoid average, spectrally accurate for integrands
//! analytic on the closed bands. Nodes are offset to midpoints so no sample
//! hits a band edge.

use crate::background::{Background, Sheet, SurfacePoint};
use crate::error::{JacError, Result};
use crate::perturbed::{Carriers, Perturbation};
use crate::scattering::ScatteringData;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

/// One quadrature node of the spectral measure on a band.
#[derive(Debug, Clone, Copy)]
pub struct MeasureNode {
    pub lambda: f64,
    pub weight: Complex64,
}

/// The measure weight at parameter t ∈ [0, π] on band `j` (1-based).
pub fn measure_weight(back: &Background, j: usize, t: f64) -> Result<MeasureNode> {
    if j < 1 || j > back.q() {
        return Err(JacError::Schema(format!("band index {j} out of range")));
    }
    if !(0.0..=PI).contains(&t) {
        return Err(JacError::Schema(format!("t = {t} outside [0, π]")));
    }
    let (lo, hi) = back.bands.band(j);
    let lambda = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t.cos();
    Ok(MeasureNode {
        lambda,
        weight: weight_at(back, j, lambda)?,
    })
}

fn weight_at(back: &Background, j: usize, x: f64) -> Result<Complex64> {
    let q = back.q();
    let mut w = Complex64::new(1.0, 0.0);
    for k in 0..q - 1 {
        w *= (x - back.bands.mu[k]) / (x - back.bands.alpha[k]);
    }
    // h_j(λ) = ¼ ∏_{e ∉ band j} (λ − e)
    let mut h = 0.25;
    for (i, &e) in back.bands.edges.iter().enumerate() {
        if i == 2 * j - 2 || i == 2 * j - 1 {
            continue;
        }
        h *= x - e;
    }
    if h <= 0.0 {
        return Err(JacError::Numerical(format!(
            "h_{j}({x}) = {h} not positive on band"
        )));
    }
    let sigma = if (q - j + 1) % 2 == 0 { 1.0 } else { -1.0 };
    let dprime = back.disc.delta_prime.eval_real(x);
    Ok(Complex64::new(0.0, 1.0) * w * dprime / (q as f64 * sigma * h.sqrt()))
}

/// (1/2πi)∮ F dω for a batch of integrands, by the composite trapezoid rule
/// with node doubling from 64 to 4096 per band until successive values agree
/// to `tol`.
pub fn contour_quadrature(
    back: &Background,
    dim: usize,
    f: &mut dyn FnMut(&SurfacePoint, &mut [Complex64]) -> Result<()>,
    tol: f64,
) -> Result<Vec<Complex64>> {
    let q = back.q();
    let mut n = 64usize;
    let mut prev: Option<Vec<Complex64>> = None;
    loop {
        let mut acc = vec![Complex64::new(0.0, 0.0); dim];
        let mut buf = vec![Complex64::new(0.0, 0.0); dim];
        for j in 1..=q {
            let (lo, hi) = back.bands.band(j);
            let mid = 0.5 * (lo + hi);
            let hw = 0.5 * (hi - lo);
            for i in 0..n {
                let t = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                let x = mid + hw * t.cos();
                let side = if t < PI { 0.0 } else { -0.0 };
                let pt = SurfacePoint::new(Complex64::new(x, side), Sheet::One);
                let c = weight_at(back, j, x)? * Complex64::new(0.0, 1.0) / n as f64;
                f(&pt, &mut buf)?;
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += c * b;
                }
            }
        }
        let scale = acc.iter().map(|v| v.norm()).fold(1.0f64, f64::max);
        if let Some(p) = &prev {
            let delta = acc
                .iter()
                .zip(p)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            if delta <= tol * scale {
                return Ok(acc);
            }
            if n >= 4096 {
                return Err(JacError::QuadratureNotConverged {
                    tol,
                    nodes: n,
                    delta,
                });
            }
        }
        prev = Some(acc);
        n *= 2;
    }
}

/// A symmetric kernel table F^±(l, m) on [lo, hi]².
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub side: i32,
    pub lo: i64,
    pub hi: i64,
    /// ν inferred from deg 𝓕 = ν + 2q − 1.
    pub nu: i64,
    vals: Vec<f64>,
}

impl KernelTable {
    /// Index pairs where the kernel vanishes identically:
    /// F⁺(l, m) = 0 for l + m ≥ ν + 1; F⁻(l, m) = 0 for l + m ≤ 0.
    pub fn enforced_zero(side: i32, nu: i64, l: i64, m: i64) -> bool {
        if side >= 0 {
            l + m >= nu + 1
        } else {
            l + m <= 0
        }
    }

    pub fn get(&self, l: i64, m: i64) -> f64 {
        if Self::enforced_zero(self.side, self.nu, l, m) {
            return 0.0;
        }
        assert!(
            l >= self.lo && l <= self.hi && m >= self.lo && m <= self.hi,
            "kernel index ({l}, {m}) outside table [{}, {}]",
            self.lo,
            self.hi
        );
        let w = (self.hi - self.lo + 1) as usize;
        self.vals[(l - self.lo) as usize * w + (m - self.lo) as usize]
    }
}

/// Hatted Bloch value ψ̂_n^± = D^± ψ_n^±, computed in the pole-free form
/// D^±θ_n + (φ ± iΩ)/(a⁰₀ D^∓)·φ_n.
pub fn psi_hat(
    op: &Carriers,
    sd: &ScatteringData,
    n: i64,
    pt: &SurfacePoint,
    sign: i32,
) -> Complex64 {
    let lam = pt.lambda;
    let back = &op.back;
    let w = back.i_omega(pt);
    let phi = back.disc.phi.eval(lam);
    let (d_own, d_other) = if sign >= 0 {
        (sd.split.d_plus.eval(lam), sd.split.d_minus.eval(lam))
    } else {
        (sd.split.d_minus.eval(lam), sd.split.d_plus.eval(lam))
    };
    let s = if sign >= 0 { 1.0 } else { -1.0 };
    let m_reg = (phi + s * w) / (back.a00() * d_other);
    d_own * back.theta_at(n, lam) + m_reg * back.phi_at(n, lam)
}

/// The continuous part F₀^±(l, m) for an explicit list of index pairs.
pub fn kernel_continuous(
    op: &Carriers,
    pairs: &[(i64, i64)],
    side: i32,
    lo: i64,
    hi: i64,
) -> Result<Vec<Complex64>> {
    let back = &op.back;
    let nvals = (hi - lo + 1) as usize;
    let mut psi = vec![Complex64::new(0.0, 0.0); nvals];
    contour_quadrature(
        back,
        pairs.len(),
        &mut |pt, out| {
            let m = back.weyl_m(pt, side)?;
            for (k, slot) in psi.iter_mut().enumerate() {
                let n = lo + k as i64;
                *slot = back.theta_at(n, pt.lambda) + m * back.phi_at(n, pt.lambda);
            }
            let w_hat = op.w_hat(pt);
            let r = if side >= 0 {
                op.s_hat(&pt.flip())? / w_hat
            } else {
                op.s_hat(pt)? / w_hat
            };
            for (slot, &(l, mm)) in out.iter_mut().zip(pairs) {
                *slot = r * psi[(l - lo) as usize] * psi[(mm - lo) as usize];
            }
            Ok(())
        },
        back.tol.quadrature_tol,
    )
}

/// Full GLM kernel F^± = F₀^± + Σ_k γ_{±,k} ψ̂_l(ρ_k) ψ̂_m(ρ_k) on [lo, hi]².
pub fn glm_kernel(
    op: &Carriers,
    sd: &ScatteringData,
    side: i32,
    lo: i64,
    hi: i64,
) -> Result<KernelTable> {
    let q = op.back.q() as i64;
    let nu = op
        .f_poly
        .degree()
        .map(|d| d as i64 - 2 * q + 1)
        .ok_or(JacError::DegreeZero)?;
    let mut pairs = Vec::new();
    for l in lo..=hi {
        for m in l..=hi {
            if !KernelTable::enforced_zero(side, nu, l, m) {
                pairs.push((l, m));
            }
        }
    }
    let cont = kernel_continuous(op, &pairs, side, lo, hi)?;
    let w = (hi - lo + 1) as usize;
    let mut vals = vec![0.0f64; w * w];
    let gammas = if side >= 0 {
        &sd.norming.gamma_plus
    } else {
        &sd.norming.gamma_minus
    };
    for (&(l, m), &c) in pairs.iter().zip(&cont) {
        let mut total = c;
        for (k, &rho) in sd.norming.rho.iter().enumerate() {
            let pt = SurfacePoint::sheet1(rho);
            total += gammas[k] * psi_hat(op, sd, l, &pt, side) * psi_hat(op, sd, m, &pt, side);
        }
        if total.im.abs() > 1e-8 * total.norm().max(1.0) {
            return Err(JacError::Numerical(format!(
                "kernel F({l}, {m}) is not real: {total}"
            )));
        }
        vals[(l - lo) as usize * w + (m - lo) as usize] = total.re;
        vals[(m - lo) as usize * w + (l - lo) as usize] = total.re;
    }
    Ok(KernelTable {
        side,
        lo,
        hi,
        nu,
        vals,
    })
}

/// Index range [lo, hi] that a kernel table must cover so that
/// [`recover_perturbation`] can solve every row it needs.
pub fn kernel_range(side: i32, nu: i64) -> (i64, i64) {
    let p_max = (nu + 1) / 2;
    if side >= 0 {
        (-3, (p_max + nu + 5).max(2 * nu + 6))
    } else {
        (-(p_max + nu + 5).max(2 * p_max + nu + 8), p_max + 3)
    }
}

/// One row of the transformation coefficients: k[j] = K_±(n, n ± j).
#[derive(Debug, Clone)]
pub struct GlmRow {
    pub n: i64,
    pub k: Vec<f64>,
    /// Max |residual| of the solved linear system for this row.
    pub residual: f64,
}

fn window_matrix(table: &KernelTable, n: i64) -> DMatrix<f64> {
    let nu = table.nu;
    let len = if table.side >= 0 {
        (nu + 1 - 2 * n).max(0) + nu + 2
    } else {
        (2 * n).max(0) + nu + 2
    } as usize;
    let arg = |j: usize| {
        if table.side >= 0 {
            n + j as i64
        } else {
            n - j as i64
        }
    };
    DMatrix::from_fn(len, len, |l, j| {
        let base = if l == j { 1.0 } else { 0.0 };
        base + table.get(arg(l), arg(j))
    })
}

/// Smallest eigenvalue of the windowed I + F matrix for row n.
pub fn row_margin(table: &KernelTable, n: i64) -> f64 {
    window_matrix(table, n)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Solve the finite GLM system for row n.
///
/// The window size is max(ν+1−2n, 0)+ν+2 on the plus side and
/// max(2n, 0)+ν+2 on the minus side; beyond it the kernel vanishes. The
/// system matrix I + F must be positive definite
/// ([`JacError::NotPositive`]).
pub fn solve_glm_row(table: &KernelTable, n: i64) -> Result<GlmRow> {
    let len = window_matrix(table, n).nrows();
    let arg = |j: usize| {
        if table.side >= 0 {
            n + j as i64
        } else {
            n - j as i64
        }
    };
    let m = window_matrix(table, n);
    let chol = match m.clone().cholesky() {
        Some(c) => c,
        None => {
            let min_eig = m
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            return Err(JacError::NotPositive { n, min_eig });
        }
    };
    let mut e0 = DVector::zeros(len);
    e0[0] = 1.0;
    let x = chol.solve(&e0);
    if x[0] <= 0.0 {
        return Err(JacError::NotPositive { n, min_eig: x[0] });
    }
    let k0 = x[0].sqrt();
    let k: Vec<f64> = x.iter().map(|&xi| xi / k0).collect();
    // residual: K(n, n±j) + Σ_l K(n, n±l) F(n±l, n±j) = δ_{j0}/K(n, n)
    let scale = k.iter().cloned().fold(1.0f64, |a, b| a.max(b.abs()));
    let mut residual = 0.0f64;
    for j in 0..len {
        let mut r = k[j];
        for (l, &kl) in k.iter().enumerate() {
            r += kl * table.get(arg(l), arg(j));
        }
        if j == 0 {
            r -= 1.0 / k0;
        }
        if r.abs() > 1e-9 * scale {
            return Err(JacError::Numerical(format!(
                "GLM row {n} residual {r:.3e} at offset {j}"
            )));
        }
        residual = residual.max(r.abs());
    }
    Ok(GlmRow { n, k, residual })
}

/// Recover the perturbation from the kernel table of one side.
///
/// Plus side: a_n = a⁰_n K(n+1,n+1)/K(n,n),
/// v_n = a⁰_n K(n,n+1)/K(n,n) − a⁰_{n−1} K(n−1,n)/K(n−1,n−1).
/// Minus side: a_n = a⁰_n K(n,n)/K(n+1,n+1),
/// v_n = a⁰_{n−1} K(n,n−1)/K(n,n) − a⁰_n K(n+1,n)/K(n+1,n+1).
///
/// Values outside [0, p_max] beyond 1e−6 raise [`JacError::SupportLeak`].
pub fn recover_perturbation(table: &KernelTable, back: &Background) -> Result<Perturbation> {
    let nu = table.nu;
    if nu < 0 {
        return Err(JacError::HypothesisViolation(format!(
            "cannot recover from degenerate data (ν = {nu})"
        )));
    }
    let p_max = (nu + 1) / 2;
    let n_lo = -3i64;
    let n_hi = p_max + 3;
    let mut rows = Vec::new();
    for n in n_lo..=n_hi {
        rows.push(solve_glm_row(table, n)?);
    }
    let row = |n: i64| &rows[(n - n_lo) as usize];
    let diag = |n: i64| row(n).k[0];
    let off = |n: i64| row(n).k[1];
    let mut u = Vec::new();
    let mut v = Vec::new();
    for n in (n_lo + 1)..n_hi {
        let (a_n, v_n) = if table.side >= 0 {
            (
                back.bg.a0(n) * diag(n + 1) / diag(n),
                back.bg.a0(n) * off(n) / diag(n) - back.bg.a0(n - 1) * off(n - 1) / diag(n - 1),
            )
        } else {
            (
                back.bg.a0(n) * diag(n) / diag(n + 1),
                back.bg.a0(n - 1) * off(n) / diag(n) - back.bg.a0(n) * off(n + 1) / diag(n + 1),
            )
        };
        let u_n = a_n - back.bg.a0(n);
        if n < 0 || n > p_max {
            let leak = u_n.abs() + v_n.abs();
            if leak > 1e-6 {
                return Err(JacError::SupportLeak { n, p_max, leak });
            }
        } else {
            u.push(u_n);
            v.push(v_n);
        }
    }
    // snap the tail and trim down to the true support
    let snap = 1e-8;
    while u.len() > 1 {
        let i = u.len() - 1;
        if u[i].abs() < snap {
            u[i] = 0.0;
        }
        if v[i].abs() < snap {
            v[i] = 0.0;
        }
        if u[i] == 0.0 && v[i] == 0.0 {
            u.pop();
            v.pop();
        } else {
            break;
        }
    }
    if let Some(last) = u.last_mut() {
        if last.abs() < snap {
            *last = 0.0;
        }
    }
    Perturbation::new(u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::PeriodicBackground;
    use crate::perturbed::Perturbed;
    use crate::scattering::assemble_scattering_data;
    use crate::states::states;
    use crate::Tolerances;

    fn back(a: Vec<f64>, b: Vec<f64>) -> Background {
        Background::new(PeriodicBackground::new(a, b).unwrap(), Tolerances::default()).unwrap()
    }

    fn pert1() -> Perturbed {
        Perturbed::new(
            back(vec![0.5, 2.0], vec![0.0, 0.0]),
            Perturbation::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn measure_normalization() {
        // (1/2πi)∮ dω = 1
        for b in [
            back(vec![0.5, 2.0], vec![0.0, 0.0]),
            back(vec![2.0, 0.5, 1.0], vec![0.1, -0.2, 0.0]),
        ] {
            let one = contour_quadrature(
                &b,
                1,
                &mut |_, out| {
                    out[0] = Complex64::new(1.0, 0.0);
                    Ok(())
                },
                1e-12,
            )
            .unwrap();
            assert!((one[0] - 1.0).norm() < 1e-10, "q = {}: {}", b.q(), one[0]);
        }
        // free case with its closed gap: root clustering limits the accuracy
        let b = back(vec![1.0, 1.0], vec![0.0, 0.0]);
        let one = contour_quadrature(
            &b,
            1,
            &mut |_, out| {
                out[0] = Complex64::new(1.0, 0.0);
                Ok(())
            },
            1e-6,
        )
        .unwrap();
        assert!((one[0] - 1.0).norm() < 1e-6, "{}", one[0]);
    }

    #[test]
    fn measure_weight_op() {
        let b = back(vec![0.5, 2.0], vec![0.0, 0.0]);
        let node = measure_weight(&b, 2, PI / 3.0).unwrap();
        assert!(node.lambda > 1.5 && node.lambda < 2.5);
        assert!(node.weight.norm() > 0.0);
        assert!(measure_weight(&b, 3, 0.5).is_err());
        assert!(measure_weight(&b, 1, 4.0).is_err());
    }

    #[test]
    fn plus_kernel_vanishes_beyond_cutoff() {
        let op = pert1();
        let list = states(&op).unwrap();
        let sd = assemble_scattering_data(&op, &list).unwrap();
        // ν = 2: F⁺(l, m) must vanish for l + m ≥ 3; compute honestly
        let pairs = vec![(1i64, 2i64), (2, 2), (0, 3), (3, 3), (-1, 4)];
        let cont = kernel_continuous(&op, &pairs, 1, -1, 4).unwrap();
        for (&(l, m), c) in pairs.iter().zip(&cont) {
            let mut total = *c;
            for (k, &rho) in sd.norming.rho.iter().enumerate() {
                let pt = SurfacePoint::sheet1(rho);
                total += sd.norming.gamma_plus[k]
                    * psi_hat(&op, &sd, l, &pt, 1)
                    * psi_hat(&op, &sd, m, &pt, 1);
            }
            assert!(
                total.norm() < 1e-9,
                "F+({l}, {m}) = {total} should vanish"
            );
        }
    }

    #[test]
    fn minus_kernel_vanishes_at_or_below_zero() {
        let op = pert1();
        let list = states(&op).unwrap();
        let sd = assemble_scattering_data(&op, &list).unwrap();
        let pairs = vec![(0i64, 0i64), (-1, 1), (-2, 2), (0, -3), (-1, -1)];
        let cont = kernel_continuous(&op, &pairs, -1, -3, 2).unwrap();
        for (&(l, m), c) in pairs.iter().zip(&cont) {
            let mut total = *c;
            for (k, &rho) in sd.norming.rho.iter().enumerate() {
                let pt = SurfacePoint::sheet1(rho);
                total += sd.norming.gamma_minus[k]
                    * psi_hat(&op, &sd, l, &pt, -1)
                    * psi_hat(&op, &sd, m, &pt, -1);
            }
            assert!(
                total.norm() < 1e-9,
                "F-({l}, {m}) = {total} should vanish"
            );
        }
    }

    #[test]
    fn round_trip_plus_side() {
        let op = pert1();
        let list = states(&op).unwrap();
        let sd = assemble_scattering_data(&op, &list).unwrap();
        let table = glm_kernel(&op, &sd, 1, -4, 12).unwrap();
        // trivial rows: K(n, n) = 1 for 2n ≥ ν + 1
        for n in 2..=4 {
            let row = solve_glm_row(&table, n).unwrap();
            assert!((row.k[0] - 1.0).abs() < 1e-8, "row {n}: {}", row.k[0]);
        }
        let rec = recover_perturbation(&table, &op.back).unwrap();
        assert_eq!(rec.u.len(), 2);
        assert!((rec.u[0] - 0.0).abs() < 1e-8, "u = {:?}", rec.u);
        assert!((rec.u[1] - 1.0).abs() < 1e-7, "u = {:?}", rec.u);
        assert!((rec.v[0] - 1.0).abs() < 1e-7, "v = {:?}", rec.v);
        assert!((rec.v[1] - 0.0).abs() < 1e-8, "v = {:?}", rec.v);
    }

    #[test]
    fn round_trip_minus_side() {
        let op = pert1();
        let list = states(&op).unwrap();
        let sd = assemble_scattering_data(&op, &list).unwrap();
        let table = glm_kernel(&op, &sd, -1, -12, 5).unwrap();
        for n in -3..=0 {
            let row = solve_glm_row(&table, n).unwrap();
            assert!((row.k[0] - 1.0).abs() < 1e-8, "row {n}: {}", row.k[0]);
        }
        let rec = recover_perturbation(&table, &op.back).unwrap();
        assert_eq!(rec.u.len(), 2, "u = {:?}, v = {:?}", rec.u, rec.v);
        assert!((rec.u[0] - 0.0).abs() < 1e-8, "u = {:?}", rec.u);
        assert!((rec.u[1] - 1.0).abs() < 1e-7, "u = {:?}", rec.u);
        assert!((rec.v[0] - 1.0).abs() < 1e-7, "v = {:?}", rec.v);
        assert!((rec.v[1] - 0.0).abs() < 1e-8, "v = {:?}", rec.v);
    }
}
