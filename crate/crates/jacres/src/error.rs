//! Error taxonomy for the whole crate, with a stable mapping to process
//! exit codes: 2 for schema/configuration problems, 3 for violated
//! mathematical preconditions or hypotheses, 4 for numerical failures.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum JacError {
    // ---- schema / configuration (exit 2) ----
    #[error("schema error: {0}")]
    Schema(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    // ---- precondition / hypothesis violations (exit 3) ----
    #[error("background normalization violated: prod(a0) = {product}, must be 1")]
    NormalizationViolated { product: f64 },
    #[error("perturbation class violation: {0}")]
    ClassViolation(String),
    #[error("Weyl function m_{sign} has a pole at the Dirichlet point mu = {mu}")]
    PoleAtDirichletPoint { sign: char, mu: f64 },
    #[error("square-root singularity at band edge {edge}; no finite limit exists")]
    SquareRootSingularity { edge: f64 },
    #[error("z = {z} lies on (or within {tol} of) the slit g_{gap}")]
    OnSlit { z: String, gap: usize, tol: f64 },
    #[error("evaluation at a band edge: z^2q = 1 at z = {z}")]
    AtBandEdge { z: String },
    #[error("norming constant gamma_{{{side},{k}}} = {value} is not positive")]
    NonPositiveNorming { side: char, k: usize, value: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("state law violated: {0}")]
    LawViolation(String),
    #[error("scattering-class membership failed: {0}")]
    ClassMembershipFailed(String),
    #[error("recovered perturbation leaks outside [0, {p_max}]: |u_{n}|+|v_{n}| = {leak}")]
    SupportLeak { n: i64, p_max: i64, leak: f64 },

    // ---- numerical failures (exit 4) ----
    #[error("root finding failed: {0}")]
    RootFindingFailed(String),
    #[error("cannot take roots of the zero polynomial")]
    DegreeZero,
    #[error("duplicate interpolation node at {node}")]
    DuplicateNode { node: String },
    #[error("root of F at {location} lifts to neither sheet: |w_hat| = {r1} / {r2} (sheet 1/2)")]
    LiftAmbiguous { location: String, r1: f64, r2: f64 },
    #[error("Dirichlet point mu = {mu} cannot be assigned: |phi+iOmega| = {plus}, |phi-iOmega| = {minus}")]
    AmbiguousAssignment { mu: f64, plus: f64, minus: f64 },
    #[error("degree mismatch for {what}: got {got}, expected {expected}")]
    DegreeMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("quadrature did not stabilize to {tol} after {nodes} nodes (last delta {delta})")]
    QuadratureNotConverged { tol: f64, nodes: usize, delta: f64 },
    #[error("GLM operator I+F_n at n = {n} is not positive definite (smallest eigenvalue {min_eig})")]
    NotPositive { n: i64, min_eig: f64 },
    #[error("polynomial is not a perfect square: {0}")]
    NotAPerfectSquare(String),
    #[error("branch selection failed: {0}")]
    BranchSelectionFailed(String),
    #[error("root multiset is not conjugate-closed; coefficients would not be real ({0})")]
    NonRealCoefficients(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl JacError {
    /// Process exit code for the CLI: 2 schema, 3 precondition/hypothesis, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        use JacError::*;
        match self {
            Schema(_) | Json(_) | Io(_) => 2,
            NormalizationViolated { .. }
            | ClassViolation(_)
            | PoleAtDirichletPoint { .. }
            | SquareRootSingularity { .. }
            | OnSlit { .. }
            | AtBandEdge { .. }
            | NonPositiveNorming { .. }
            | HypothesisViolation(_)
            | LawViolation(_)
            | ClassMembershipFailed(_)
            | SupportLeak { .. } => 3,
            RootFindingFailed(_)
            | DegreeZero
            | DuplicateNode { .. }
            | LiftAmbiguous { .. }
            | AmbiguousAssignment { .. }
            | DegreeMismatch { .. }
            | QuadratureNotConverged { .. }
            | NotPositive { .. }
            | NotAPerfectSquare(_)
            | BranchSelectionFailed(_)
            | NonRealCoefficients(_)
            | Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, JacError>;
