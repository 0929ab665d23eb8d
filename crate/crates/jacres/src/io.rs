//! Run configuration and on-disk artifacts: schema-versioned JSON documents,
//! CSV grid tables, and atomic writes.
//!
//! Every artifact carries a self-describing `schema` field ("jacres.<kind>/1")
//! so chained commands can validate provenance. Files are written to a
//! temporary sibling and renamed into place. JSON numbers use the shortest
//! round-trip representation, so every emitted value parses back losslessly.

use crate::algebra::Polynomial;
use crate::background::{Background, PeriodicBackground, SurfacePoint};
use crate::error::{JacError, Result};
use crate::perturbed::{Carriers, Perturbation, Perturbed};
use crate::scattering::{smatrix, NormingConstants, ScatteringData};
use crate::states::{check_state_laws, State, StateList};
use crate::Tolerances;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Schema tag for an artifact kind, e.g. `schema_tag("bands")` = "jacres.bands/1".
pub fn schema_tag(kind: &str) -> String {
    format!("jacres.{kind}/1")
}

/// Verify an artifact's schema field against the expected kind.
pub fn expect_schema(found: &str, kind: &str) -> Result<()> {
    let want = schema_tag(kind);
    if found == want {
        Ok(())
    } else {
        Err(JacError::Schema(format!(
            "schema mismatch: found {found:?}, expected {want:?}"
        )))
    }
}

fn default_grid() -> usize {
    128
}

/// Run configuration accepted by every subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub background: PeriodicBackground,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
    /// Extra randomized draws for the round-trip suite.
    #[serde(default)]
    pub draws: usize,
    /// Which side's scattering data to emit/invert: "plus" or "minus".
    #[serde(default = "default_side")]
    pub side: String,
}

fn default_side() -> String {
    "plus".into()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let cfg: RunConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Invariants: tolerances positive; grid ≥ 16; background self-consistent.
    pub fn validate(&self) -> Result<()> {
        self.tolerances.validate()?;
        if self.grid < 16 {
            return Err(JacError::Schema(format!(
                "grid = {} must be >= 16",
                self.grid
            )));
        }
        if self.background.q != self.background.a.len() {
            return Err(JacError::Schema(format!(
                "q = {} disagrees with a0 length {}",
                self.background.q,
                self.background.a.len()
            )));
        }
        PeriodicBackground::new(self.background.a.clone(), self.background.b.clone())?;
        if self.side != "plus" && self.side != "minus" {
            return Err(JacError::Schema(format!(
                "side = {:?} must be \"plus\" or \"minus\"",
                self.side
            )));
        }
        Ok(())
    }

    pub fn side_sign(&self) -> i32 {
        if self.side == "minus" {
            -1
        } else {
            1
        }
    }

    pub fn build_background(&self) -> Result<Background> {
        let bg = PeriodicBackground::new(self.background.a.clone(), self.background.b.clone())?;
        Background::new(bg, self.tolerances)
    }

    /// The perturbed operator; errors with a schema message when the config
    /// has no perturbation block.
    pub fn build_perturbed(&self) -> Result<Perturbed> {
        let pert = self
            .perturbation
            .clone()
            .ok_or_else(|| JacError::Schema("this command requires a perturbation block".into()))?;
        Perturbed::new(self.build_background()?, pert)
    }
}

/// One finite gap in bands.json.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapRow {
    pub j: usize,
    pub lo: f64,
    pub hi: f64,
    pub closed: bool,
}

/// One slit of the z-plane in bands.json.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlitRow {
    pub gap: usize,
    pub angle: f64,
    pub r_inner: f64,
    pub r_outer: f64,
}

/// bands.json: the spectral geometry of the background.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandsArtifact {
    pub schema: String,
    pub background: PeriodicBackground,
    pub edges: Vec<f64>,
    pub gaps: Vec<GapRow>,
    pub mu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub h: Vec<f64>,
    pub slits: Vec<SlitRow>,
}

impl BandsArtifact {
    pub fn new(back: &Background) -> BandsArtifact {
        let bands = &back.bands;
        let q = bands.n_bands();
        let gaps = (1..q)
            .map(|j| {
                let closed = bands.closed[j - 1];
                let (lo, hi) = bands
                    .gap(j)
                    .unwrap_or((bands.edges[2 * j - 1], bands.edges[2 * j - 1]));
                GapRow { j, lo, hi, closed }
            })
            .collect();
        let slits = back
            .slits()
            .iter()
            .map(|s| SlitRow {
                gap: s.gap,
                angle: s.angle,
                r_inner: s.r_inner,
                r_outer: s.r_outer,
            })
            .collect();
        BandsArtifact {
            schema: schema_tag("bands"),
            background: back.bg.clone(),
            edges: bands.edges.clone(),
            gaps,
            mu: bands.mu.clone(),
            alpha: bands.alpha.clone(),
            h: bands.h.clone(),
            slits,
        }
    }
}

/// Constants block of the perturbed operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsBlock {
    #[serde(rename = "A_p")]
    pub a_p: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub nu: i64,
}

/// Verdict of the state-law checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawReport {
    pub pass: bool,
    #[serde(default)]
    pub detail: Option<String>,
}

/// states.json: the full catalog with the law report embedded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatesArtifact {
    pub schema: String,
    pub background: PeriodicBackground,
    pub perturbation: Perturbation,
    pub constants: ConstantsBlock,
    /// deg 𝓕, which the multiplicities sum to.
    pub degree: usize,
    pub states: Vec<State>,
    pub laws: LawReport,
}

impl StatesArtifact {
    pub fn new(op: &Perturbed, list: &StateList) -> StatesArtifact {
        let laws = match check_state_laws(op, list) {
            Ok(()) => LawReport {
                pass: true,
                detail: None,
            },
            Err(e) => LawReport {
                pass: false,
                detail: Some(e.to_string()),
            },
        };
        StatesArtifact {
            schema: schema_tag("states"),
            background: op.back.bg.clone(),
            perturbation: op.pert.clone(),
            constants: ConstantsBlock {
                a_p: op.cap_ap,
                c1: op.c1,
                c2: op.c2,
                c3: op.c3,
                nu: op.nu,
            },
            degree: list.degree,
            states: list.states.clone(),
            laws,
        }
    }
}

/// Carrier pair of ŵ = 2iΩ(1+A) − J.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WHatCarrier {
    pub a: Polynomial,
    pub j: Polynomial,
}

/// Carrier pair of φ_q ŝ = 2iΩ P_ω + P₀.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SCarrier {
    pub p_omega: Polynomial,
    pub p_plain: Polynomial,
}

/// Dirichlet-point split by pole membership.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRow {
    pub m_plus: Vec<f64>,
    pub m_minus: Vec<f64>,
    pub m_edge: Vec<f64>,
}

/// One spectrum sample of the S-matrix grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRow {
    pub lambda: f64,
    pub z: [f64; 2],
    pub t: [f64; 2],
    pub r_plus: [f64; 2],
    pub r_minus: [f64; 2],
    /// max over both rows of | |T|² + |R|² − 1 |.
    pub unitarity: f64,
}

/// scattering.json: one side's scattering data plus the sampled S-matrix grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatteringArtifact {
    pub schema: String,
    /// "plus" or "minus": whose norming constants sit in `gamma`.
    pub side: String,
    pub background: PeriodicBackground,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub nu: i64,
    /// Bound-state locations, ascending with `gamma` parallel.
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
    pub w_hat: WHatCarrier,
    pub s_carrier: SCarrier,
    /// 𝓕 = ŵŵ*, the characteristic polynomial.
    pub f: Polynomial,
    pub pole_split: SplitRow,
    pub states: StateList,
    pub grid: Vec<GridRow>,
    pub unitarity_max: f64,
}

/// Sample the S-matrix at `n` points spread over the bands (midpoint rule in
/// the band parameter, so edges and Dirichlet points are never hit).
pub fn scattering_grid(op: &Carriers, n: usize) -> Result<(Vec<GridRow>, f64)> {
    let bands = &op.back.bands;
    let q = bands.n_bands();
    let base = n / q;
    let rem = n % q;
    let mut rows = Vec::with_capacity(n);
    let mut worst = 0.0f64;
    for j in 1..=q {
        let count = base + usize::from(j <= rem);
        let (lo, hi) = bands.band(j);
        let mid = 0.5 * (lo + hi);
        let hw = 0.5 * (hi - lo);
        for i in 0..count {
            let t = std::f64::consts::PI * (i as f64 + 0.5) / count as f64;
            let lam = mid - hw * t.cos();
            let sm = smatrix(op, &SurfacePoint::sheet1(lam))?;
            let dev_m = (sm.t.norm_sqr() + sm.r_minus.norm_sqr() - 1.0).abs();
            let dev_p = (sm.t.norm_sqr() + sm.r_plus.norm_sqr() - 1.0).abs();
            let unitarity = dev_m.max(dev_p);
            worst = worst.max(unitarity);
            rows.push(GridRow {
                lambda: lam,
                z: [sm.z.re, sm.z.im],
                t: [sm.t.re, sm.t.im],
                r_plus: [sm.r_plus.re, sm.r_plus.im],
                r_minus: [sm.r_minus.re, sm.r_minus.im],
                unitarity,
            });
        }
    }
    Ok((rows, worst))
}

impl ScatteringArtifact {
    /// Assemble from a carrier set plus its scattering data.
    pub fn from_parts(
        op: &Carriers,
        sd: &ScatteringData,
        side: i32,
        grid: usize,
    ) -> Result<ScatteringArtifact> {
        let (rows, worst) = scattering_grid(op, grid)?;
        let nu = match op.f_poly.degree() {
            Some(d) => d as i64 - 2 * op.back.q() as i64 + 1,
            None => return Err(JacError::DegreeZero),
        };
        let gamma = if side >= 0 {
            sd.norming.gamma_plus.clone()
        } else {
            sd.norming.gamma_minus.clone()
        };
        Ok(ScatteringArtifact {
            schema: schema_tag("scattering"),
            side: if side >= 0 { "plus" } else { "minus" }.into(),
            background: op.back.bg.clone(),
            tolerances: op.back.tol,
            nu,
            rho: sd.norming.rho.clone(),
            gamma,
            w_hat: WHatCarrier {
                a: op.a_poly.clone(),
                j: op.j_poly.clone(),
            },
            s_carrier: SCarrier {
                p_omega: op.p_omega.clone(),
                p_plain: op.p_plain.clone(),
            },
            f: op.f_poly.clone(),
            pole_split: SplitRow {
                m_plus: sd.split.m_plus.clone(),
                m_minus: sd.split.m_minus.clone(),
                m_edge: sd.split.m_edge.clone(),
            },
            states: sd.states.clone(),
            grid: rows,
            unitarity_max: worst,
        })
    }

    pub fn side_sign(&self) -> i32 {
        if self.side == "minus" {
            -1
        } else {
            1
        }
    }

    /// Rebuild the operator data this artifact describes.
    ///
    /// The file's norming constants are trusted for its own side (after a
    /// positivity check — a corrupted sign is a hypothesis violation) and the
    /// other side is filled in through γ₊γ₋ŵ′(ρ)² = 1.
    pub fn to_operator(&self) -> Result<(Carriers, ScatteringData)> {
        expect_schema(&self.schema, "scattering")?;
        let bg = PeriodicBackground::new(self.background.a.clone(), self.background.b.clone())?;
        let back = Background::new(bg, self.tolerances)?;
        let op = Carriers {
            back,
            a_poly: self.w_hat.a.clone(),
            j_poly: self.w_hat.j.clone(),
            p_omega: self.s_carrier.p_omega.clone(),
            p_plain: self.s_carrier.p_plain.clone(),
            f_poly: self.f.clone(),
        };
        if self.rho.len() != self.gamma.len() {
            return Err(JacError::Schema(format!(
                "rho has {} entries but gamma has {}",
                self.rho.len(),
                self.gamma.len()
            )));
        }
        let n_bound = self.states.bound().count();
        if n_bound != self.rho.len() {
            return Err(JacError::Schema(format!(
                "{} bound states but {} norming constants",
                n_bound,
                self.rho.len()
            )));
        }
        let mut gamma_plus = Vec::with_capacity(self.gamma.len());
        let mut gamma_minus = Vec::with_capacity(self.gamma.len());
        for (st, (&rho, &g)) in self
            .states
            .bound()
            .zip(self.rho.iter().zip(self.gamma.iter()))
        {
            if !(g > 0.0) || !g.is_finite() {
                return Err(JacError::HypothesisViolation(format!(
                    "norming constant {g} at rho = {rho} is not positive"
                )));
            }
            if (st.lambda[0] - rho).abs() > 1e-8 * rho.abs().max(1.0) {
                return Err(JacError::Schema(format!(
                    "rho = {rho} does not match the bound state at {}",
                    st.lambda[0]
                )));
            }
            let wp = op.w_hat_prime(&st.point())?;
            let other = 1.0 / (g * (wp * wp).re);
            if !(other > 0.0) || !other.is_finite() {
                return Err(JacError::HypothesisViolation(format!(
                    "derived norming constant {other} at rho = {rho} is not positive"
                )));
            }
            if self.side_sign() >= 0 {
                gamma_plus.push(g);
                gamma_minus.push(other);
            } else {
                gamma_minus.push(g);
                gamma_plus.push(other);
            }
        }
        let split = crate::scattering::pole_split(&op.back)?;
        let sd = ScatteringData {
            split,
            states: self.states.clone(),
            norming: NormingConstants {
                rho: self.rho.clone(),
                gamma_plus,
                gamma_minus,
            },
        };
        Ok((op, sd))
    }

    /// CSV grid export with the canonical column set.
    pub fn csv(&self) -> String {
        let mut out = String::from("z_re,z_im,T_re,T_im,Rm_re,Rm_im,Rp_re,Rp_im,unitarity\n");
        for row in &self.grid {
            let cells = [
                row.z[0],
                row.z[1],
                row.t[0],
                row.t[1],
                row.r_minus[0],
                row.r_minus[1],
                row.r_plus[0],
                row.r_plus[1],
                row.unitarity,
            ];
            let line: Vec<String> = cells.iter().map(|x| fmt_f64(*x)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Zero carriers of the unperturbed operator: ŵ = 2iΩ, ŝ = 0, R = 0,
/// 𝓕 = 4(1 − Δ²).
pub fn free_carriers(back: Background) -> Carriers {
    let delta = back.disc.delta.clone();
    let f = Polynomial::constant(4.0).sub(&delta.mul(&delta).scale(4.0));
    Carriers {
        back,
        a_poly: Polynomial::zero(),
        j_poly: Polynomial::zero(),
        p_omega: Polynomial::zero(),
        p_plain: Polynomial::zero(),
        f_poly: f,
    }
}

/// Per-row statistics of a GLM solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlmRowStat {
    pub n: i64,
    pub k_diag: f64,
    pub window: usize,
    /// Smallest eigenvalue of the windowed I + F matrix.
    pub margin: f64,
    pub residual: f64,
}

/// glm_report.json: inversion diagnostics and the recovered perturbation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlmReport {
    pub schema: String,
    pub side: String,
    pub nu: i64,
    pub rows: Vec<GlmRowStat>,
    pub residual_max: f64,
    pub min_margin: f64,
    pub recovered: Perturbation,
    #[serde(default)]
    pub reference: Option<Perturbation>,
    #[serde(default)]
    pub max_error: Option<f64>,
}

/// Run the finite GLM system on one side and report diagnostics.
pub fn glm_invert(op: &Carriers, sd: &ScatteringData, side: i32) -> Result<GlmReport> {
    let (lo, hi) = {
        let nu = match op.f_poly.degree() {
            Some(d) => d as i64 - 2 * op.back.q() as i64 + 1,
            None => return Err(JacError::DegreeZero),
        };
        crate::glm::kernel_range(side, nu)
    };
    let table = crate::glm::glm_kernel(op, sd, side, lo, hi)?;
    let nu = table.nu;
    let p_max = (nu + 1) / 2;
    let mut rows = Vec::new();
    let mut residual_max = 0.0f64;
    let mut min_margin = f64::INFINITY;
    for n in -3..=(p_max + 3) {
        let row = crate::glm::solve_glm_row(&table, n)?;
        let margin = crate::glm::row_margin(&table, n);
        residual_max = residual_max.max(row.residual);
        min_margin = min_margin.min(margin);
        rows.push(GlmRowStat {
            n,
            k_diag: row.k[0],
            window: row.k.len(),
            margin,
            residual: row.residual,
        });
    }
    let recovered = crate::glm::recover_perturbation(&table, &op.back)?;
    Ok(GlmReport {
        schema: schema_tag("glm_report"),
        side: if side >= 0 { "plus" } else { "minus" }.into(),
        nu,
        rows,
        residual_max,
        min_margin,
        recovered,
        reference: None,
        max_error: None,
    })
}

/// Max coefficient error between two perturbations over their joint support.
pub fn perturbation_error(a: &Perturbation, b: &Perturbation) -> f64 {
    let p = a.p().max(b.p());
    let mut err = 0.0f64;
    for n in 0..=p {
        err = err.max((a.u(n) - b.u(n)).abs());
        err = err.max((a.v(n) - b.v(n)).abs());
    }
    err
}

/// reconstruction_input.json: state catalog plus the auxiliary data of the
/// resonance reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionFile {
    pub schema: String,
    pub background: PeriodicBackground,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(flatten)]
    pub input: crate::reconstruct::ReconstructionInput,
}

impl ReconstructionFile {
    pub fn new(back: &Background, input: crate::reconstruct::ReconstructionInput) -> Self {
        ReconstructionFile {
            schema: schema_tag("reconstruction_input"),
            background: back.bg.clone(),
            tolerances: back.tol,
            input,
        }
    }

    pub fn build_background(&self) -> Result<Background> {
        expect_schema(&self.schema, "reconstruction_input")?;
        let bg = PeriodicBackground::new(self.background.a.clone(), self.background.b.clone())?;
        Background::new(bg, self.tolerances)
    }
}

/// One draw of the round-trip suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrawReport {
    pub index: usize,
    pub perturbation: Perturbation,
    pub err_plus: f64,
    pub err_minus: f64,
    pub pass: bool,
}

/// roundtrip report: direct → scattering → GLM identity check per draw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub schema: String,
    pub seed: u64,
    pub tolerance: f64,
    pub draws: Vec<DrawReport>,
    pub max_error: f64,
    pub pass: bool,
}

/// Format an f64 with the shortest representation that parses back exactly.
pub fn fmt_f64(x: f64) -> String {
    let mut s = format!("{x}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Write bytes to `path` atomically (temp sibling + rename), creating parent
/// directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serialize to pretty JSON and write atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Read and deserialize a JSON document.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}
