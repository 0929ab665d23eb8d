//! Complex polynomial arithmetic, root finding with multiplicity clustering,
//! interpolation, and polynomial square roots.
//!
//! Coefficients are stored in the monomial basis, ascending degree, in double
//! precision. Root finding uses companion-matrix eigenvalues with a Newton
//! polish, followed by clustering of numerically coincident roots; an
//! Aberth–Ehrlich iteration serves as fallback and handles genuinely complex
//! coefficient data. Degrees here stay small (about 25 at most), where the
//! monomial basis is well conditioned enough.

use crate::error::{JacError, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Principal branch of the complex square root.
///
/// Uses `atan2` on the raw parts, so signed zero selects the side of the cut
/// on the negative real axis: `sqrt_principal(x + 0.0i)` has argument +π/2 for
/// x < 0, while `sqrt_principal(x - 0.0i)` has −π/2. Surface evaluations lean
/// on this to encode ±i0 limits.
pub fn sqrt_principal(z: Complex64) -> Complex64 {
    Complex64::from_polar(z.norm().sqrt(), z.im.atan2(z.re) / 2.0)
}

/// Dense univariate polynomial with complex coefficients, ascending degree.
///
/// The zero polynomial is the empty coefficient vector. A nonzero polynomial
/// keeps its trailing coefficient nonzero (enforced by [`Polynomial::trim`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

/// Relative threshold used when trimming trailing coefficients produced by
/// exact cancellations carried out in floating point.
pub const TRIM_REL: f64 = 1e-12;

/// Tolerance on imaginary parts below which a polynomial counts as real.
pub const REAL_TOL: f64 = 1e-9;

impl Polynomial {
    /// The zero polynomial.
    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    /// Constant polynomial.
    pub fn constant(c: f64) -> Self {
        Polynomial::from_real(&[c])
    }

    /// The monomial λ.
    pub fn x() -> Self {
        Polynomial::from_real(&[0.0, 1.0])
    }

    /// Builds from real coefficients, ascending degree.
    pub fn from_real(c: &[f64]) -> Self {
        let coeffs = c.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Polynomial { coeffs }.trim(TRIM_REL)
    }

    /// Builds from complex coefficients, ascending degree.
    pub fn from_complex(c: &[Complex64]) -> Self {
        Polynomial { coeffs: c.to_vec() }.trim(TRIM_REL)
    }

    /// Coefficient slice, ascending.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of λ^k (zero when k exceeds the degree).
    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    /// True for the zero polynomial.
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        if self.is_zero() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    /// Leading coefficient; zero for the zero polynomial.
    pub fn leading(&self) -> Complex64 {
        self.coeffs.last().copied().unwrap_or_default()
    }

    /// Drops trailing coefficients smaller than `rel` times the largest
    /// coefficient magnitude (and exact zeros).
    pub fn trim(mut self, rel: f64) -> Self {
        let maxc = self
            .coeffs
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
        let thresh = rel * maxc;
        while let Some(last) = self.coeffs.last() {
            if last.norm() <= thresh {
                self.coeffs.pop();
            } else {
                break;
            }
        }
        self
    }

    /// Horner evaluation.
    pub fn eval(&self, x: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    /// Evaluation at a real point of a real-flagged polynomial.
    pub fn eval_real(&self, x: f64) -> f64 {
        self.eval(Complex64::new(x, 0.0)).re
    }

    /// Formal derivative.
    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::zero();
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * k as f64)
            .collect();
        Polynomial { coeffs }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n).map(|k| self.coeff(k) + other.coeff(k)).collect();
        Polynomial { coeffs }.trim(TRIM_REL)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let coeffs = self.coeffs.iter().map(|&c| c * s).collect();
        Polynomial { coeffs }.trim(TRIM_REL)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.is_zero() || other.is_zero() {
            return Polynomial::zero();
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Polynomial { coeffs }.trim(TRIM_REL)
    }

    /// All imaginary parts below [`REAL_TOL`] relative to the largest coefficient.
    pub fn is_real(&self) -> bool {
        let maxc = self
            .coeffs
            .iter()
            .map(|c| c.norm())
            .fold(1.0f64, f64::max);
        self.coeffs.iter().all(|c| c.im.abs() <= REAL_TOL * maxc)
    }

    /// Real coefficient vector, erroring when the polynomial is not real-flagged.
    pub fn real_coeffs(&self) -> Result<Vec<f64>> {
        if !self.is_real() {
            return Err(JacError::NonRealCoefficients(format!(
                "imaginary residue up to {:.3e}",
                self.coeffs.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
            )));
        }
        Ok(self.coeffs.iter().map(|c| c.re).collect())
    }

    /// Monic polynomial with the given roots (with multiplicity).
    pub fn monic_from_roots(roots: &[(Complex64, usize)]) -> Polynomial {
        let mut p = Polynomial::from_real(&[1.0]);
        for &(r, m) in roots {
            let lin = Polynomial::from_complex(&[-r, Complex64::new(1.0, 0.0)]);
            for _ in 0..m {
                p = p.mul(&lin);
            }
        }
        p
    }

    /// Forces imaginary parts to zero (used after operations on real data
    /// whose rounding left harmless imaginary dust).
    pub fn into_real(self) -> Polynomial {
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| Complex64::new(c.re, 0.0))
            .collect();
        Polynomial { coeffs }.trim(TRIM_REL)
    }
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.coeffs.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        let coeffs = pairs
            .iter()
            .map(|p| Complex64::new(p[0], p[1]))
            .collect::<Vec<_>>();
        Ok(Polynomial::from_complex(&coeffs))
    }
}

/// One clustered root.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RootEntry {
    pub location: Complex64,
    pub multiplicity: usize,
}

/// Clustered roots of a polynomial; multiplicities sum to its degree.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RootList {
    pub entries: Vec<RootEntry>,
}

impl RootList {
    /// Total root count with multiplicity.
    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    /// Real roots (in place), sorted ascending.
    pub fn real_roots(&self) -> Vec<(f64, usize)> {
        let mut v: Vec<(f64, usize)> = self
            .entries
            .iter()
            .filter(|e| e.location.im == 0.0)
            .map(|e| (e.location.re, e.multiplicity))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }
}

fn newton_polish(p: &Polynomial, dp: &Polynomial, z0: Complex64) -> Complex64 {
    let mut z = z0;
    for _ in 0..2 {
        let pv = p.eval(z);
        let dv = dp.eval(z);
        if dv.norm() <= 1e-14 * pv.norm().max(1.0) {
            break;
        }
        let step = pv / dv;
        let z1 = z - step;
        if p.eval(z1).norm() < pv.norm() {
            z = z1;
        } else {
            break;
        }
    }
    z
}

fn companion_eigenvalues_real(monic: &[f64]) -> Vec<Complex64> {
    // monic: coefficients c_0..c_{n-1} of λ^n + c_{n-1}λ^{n-1} + ... + c_0
    let n = monic.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -monic[i];
    }
    m.complex_eigenvalues().iter().copied().collect()
}

fn aberth_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = coeffs.len() - 1;
    let lead = coeffs[n];
    let monic: Vec<Complex64> = coeffs.iter().map(|&c| c / lead).collect();
    let p = Polynomial::from_complex(&monic);
    let dp = p.derivative();
    let radius = 1.0
        + monic[..n]
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            Complex64::from_polar(
                radius * (0.5 + k as f64) / n as f64,
                2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4,
            )
        })
        .collect();
    for _ in 0..200 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let pv = p.eval(z[i]);
            let dv = dp.eval(z[i]);
            let newton = if dv.norm() > 0.0 { pv / dv } else { pv };
            let mut repulse = Complex64::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    let d = z[i] - z[j];
                    if d.norm() > 1e-300 {
                        repulse += 1.0 / d;
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - newton * repulse;
            let step = if denom.norm() > 1e-12 {
                newton / denom
            } else {
                newton
            };
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-14 * radius.max(1.0) {
            break;
        }
    }
    Ok(z)
}

/// Clusters numerically coincident roots into entries with summed
/// multiplicity. The radius is scaled by `max(1, |root|)`.
fn cluster_roots(mut raw: Vec<Complex64>, cluster_radius: f64) -> Vec<RootEntry> {
    raw.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    let n = raw.len();
    let mut assigned = vec![false; n];
    let mut entries = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let mut members = vec![raw[i]];
        assigned[i] = true;
        // grow the cluster until stable
        let mut changed = true;
        while changed {
            changed = false;
            let center: Complex64 =
                members.iter().sum::<Complex64>() / members.len() as f64;
            let tol = cluster_radius * center.norm().max(1.0);
            for j in 0..n {
                if !assigned[j] && (raw[j] - center).norm() <= tol {
                    members.push(raw[j]);
                    assigned[j] = true;
                    changed = true;
                }
            }
        }
        let center: Complex64 = members.iter().sum::<Complex64>() / members.len() as f64;
        entries.push(RootEntry {
            location: center,
            multiplicity: members.len(),
        });
    }
    entries.sort_by(|a, b| {
        (a.location.re, a.location.im)
            .partial_cmp(&(b.location.re, b.location.im))
            .unwrap()
    });
    entries
}

/// Snaps near-real roots to the axis and averages conjugate pairs, for
/// polynomials with real coefficients.
fn symmetrize_real(entries: &mut [RootEntry]) {
    for e in entries.iter_mut() {
        if e.location.im.abs() <= REAL_TOL * e.location.norm().max(1.0) {
            e.location = Complex64::new(e.location.re, 0.0);
        }
    }
    let n = entries.len();
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || entries[i].location.im <= 0.0 {
            continue;
        }
        // nearest conjugate candidate below the axis
        let target = entries[i].location.conj();
        let mut best: Option<(usize, f64)> = None;
        for (j, e) in entries.iter().enumerate() {
            if j != i && !used[j] && e.location.im < 0.0 {
                let d = (e.location - target).norm();
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
        }
        if let Some((j, d)) = best {
            if d <= 1e-6 * target.norm().max(1.0) {
                let avg = 0.5 * (entries[i].location + entries[j].location.conj());
                entries[i].location = avg;
                entries[j].location = avg.conj();
                used[i] = true;
                used[j] = true;
            }
        }
    }
}

/// Roots of `p` with multiplicities, clustered at the given radius.
///
/// A nonzero constant has no roots (empty list); the zero polynomial is an
/// error.
pub fn poly_roots(p: &Polynomial, cluster_radius: f64) -> Result<RootList> {
    if p.is_zero() {
        return Err(JacError::DegreeZero);
    }
    let deg = p.degree().unwrap();
    if deg == 0 {
        return Ok(RootList::default());
    }
    let real = p.is_real();
    let raw: Vec<Complex64> = if real {
        let rc = p.real_coeffs()?;
        let lead = rc[deg];
        let monic: Vec<f64> = rc[..deg].iter().map(|c| c / lead).collect();
        companion_eigenvalues_real(&monic)
    } else {
        aberth_roots(p.coeffs())?
    };
    let dp = p.derivative();
    let polished: Vec<Complex64> = raw.iter().map(|&z| newton_polish(p, &dp, z)).collect();
    let mut entries = cluster_roots(polished, cluster_radius);
    if real {
        symmetrize_real(&mut entries);
    }
    let list = RootList { entries };
    if list.total() != deg {
        return Err(JacError::RootFindingFailed(format!(
            "found {} roots for degree {}",
            list.total(),
            deg
        )));
    }
    Ok(list)
}

/// Unique interpolating polynomial of degree < len(nodes) through the given
/// data, via Newton divided differences.
pub fn poly_interpolate(nodes: &[Complex64], values: &[Complex64]) -> Result<Polynomial> {
    assert_eq!(nodes.len(), values.len(), "nodes/values length mismatch");
    let n = nodes.len();
    let scale = nodes.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    for i in 0..n {
        for j in (i + 1)..n {
            if (nodes[i] - nodes[j]).norm() <= 1e-12 * scale {
                return Err(JacError::DuplicateNode {
                    node: format!("{}", nodes[i]),
                });
            }
        }
    }
    // divided-difference table, in place
    let mut dd = values.to_vec();
    for level in 1..n {
        for i in (level..n).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (nodes[i] - nodes[i - level]);
        }
    }
    // expand the Newton form to the monomial basis
    let mut p = Polynomial::zero();
    let mut basis = Polynomial::from_real(&[1.0]);
    for i in 0..n {
        p = p.add(&Polynomial::from_complex(&[dd[i]]).mul(&basis));
        let lin = Polynomial::from_complex(&[-nodes[i], Complex64::new(1.0, 0.0)]);
        basis = basis.mul(&lin);
    }
    Ok(p)
}

/// Euclidean division: p = quot·d + rem with deg rem < deg d.
pub fn poly_divmod(p: &Polynomial, d: &Polynomial) -> Result<(Polynomial, Polynomial)> {
    let dd = d.degree().ok_or(JacError::DegreeZero)?;
    let lead = d.coeff(dd);
    let mut rem: Vec<Complex64> = p.coeffs().to_vec();
    if rem.len() <= dd {
        return Ok((Polynomial::zero(), p.clone()));
    }
    let qlen = rem.len() - dd;
    let mut quot = vec![Complex64::default(); qlen];
    for k in (0..qlen).rev() {
        let c = rem[k + dd] / lead;
        quot[k] = c;
        for j in 0..=dd {
            rem[k + j] -= c * d.coeff(j);
        }
    }
    rem.truncate(dd);
    Ok((Polynomial::from_complex(&quot), Polynomial::from_complex(&rem)))
}

/// Real polynomial square root: returns r with r² = p, the sign of r's
/// leading coefficient fixed by `leading_sign`.
///
/// Works by coefficient recursion from the top and verifies the full product,
/// so inconsistent input surfaces as [`JacError::NotAPerfectSquare`].
pub fn poly_sqrt(p: &Polynomial, leading_sign: i32) -> Result<Polynomial> {
    let p = p.clone().trim(TRIM_REL);
    if p.is_zero() {
        return Ok(Polynomial::zero());
    }
    let pc = p.real_coeffs().map_err(|_| {
        JacError::NotAPerfectSquare("coefficients are not real".into())
    })?;
    let deg = pc.len() - 1;
    if deg % 2 != 0 {
        return Err(JacError::NotAPerfectSquare(format!("odd degree {deg}")));
    }
    let m = deg / 2;
    if pc[deg] <= 0.0 {
        return Err(JacError::NotAPerfectSquare(
            "negative leading coefficient".into(),
        ));
    }
    let mut s = vec![0.0f64; m + 1];
    s[m] = (leading_sign as f64) * pc[deg].sqrt();
    for k in (0..m).rev() {
        let mut acc = pc[m + k];
        for i in (k + 1)..m {
            acc -= s[i] * s[m + k - i];
        }
        s[k] = acc / (2.0 * s[m]);
    }
    let r = Polynomial::from_real(&s);
    let diff = r.mul(&r).sub(&p);
    let scale = pc.iter().map(|c| c.abs()).fold(1.0f64, f64::max);
    let resid = diff
        .coeffs()
        .iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    if resid > 1e-7 * scale {
        return Err(JacError::NotAPerfectSquare(format!(
            "residual {resid:.3e} relative to scale {scale:.3e}"
        )));
    }
    Ok(r)
}
