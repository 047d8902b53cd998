use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BochnerError {
    #[error("non-integrable weight: exponent {exponent} <= -1")]
    NonIntegrableWeight { exponent: f64 },
    #[error("weight has a pole on the support at x = {x}")]
    PoleOnSupport { x: f64 },
    #[error("quadrature did not converge: m gives {coarse:e}, 2m gives {fine:e}")]
    EstimatedError { coarse: f64, fine: f64 },
    #[error("band offset {offset} at n = {n} lies outside the tabulated range")]
    TruncationError { offset: i64, n: i64 },
    #[error("Gram-Schmidt breakdown at degree {n}: condition number {cond:e}")]
    GramBreakdown { n: usize, cond: f64 },
    #[error("singular update system at n = {n}")]
    SingularUpdate { n: i64 },
    #[error("singular H({k})")]
    SingularH { k: f64 },
    #[error("singular norm matrix")]
    SingularNorm,
    #[error("B(n) commutes with Lambda(n)")]
    NoCommutator,
    #[error("norm matrix M({n}) is not positive definite")]
    NotPositiveDefinite { n: usize },
    #[error("scale s^2 = {s2} is not positive")]
    ComplexScale { s2: f64 },
    #[error("degenerate denominator: {what}")]
    DegenerateDenominator { what: &'static str },
    #[error("no polynomial weight of degree <= {max_degree} solves the Pearson system")]
    NoWeight { max_degree: usize },
    #[error("point does not belong to family {family}: residual {residual:e}")]
    NotMember { family: &'static str, residual: f64 },
    #[error("A0 is not diagonalizable over the reals")]
    NonDiagonalizableA0,
    #[error("matrix has repeated or complex eigenvalues")]
    DegenerateEigen,
    #[error("no diagonalizer gives a nonzero (1,2) entry of A11")]
    NormalizationImpossible,
    #[error("deformation is undefined: {what}")]
    InvalidDeformation { what: &'static str },
    #[error("product {which} is not diagonal: off-diagonal {residual:e}")]
    DiagonalityViolated { which: &'static str, residual: f64 },
    #[error("det(S(x)) does not match sign * a2(x): residual {residual:e}")]
    DeterminantMismatch { residual: f64 },
    #[error("symmetry condition fails: residual {residual:e}")]
    SymmetryConditionFailed { residual: f64 },
    #[error("boundary term does not vanish: {residual:e}")]
    BoundaryTermNonzero { residual: f64 },
    #[error("leading coefficient is not 1 - x^2")]
    UnsupportedLeadingCoefficient,
    #[error("diagonal entry {index} does not match its classical operator: {residual:e}")]
    ClassicalMismatch { index: usize, residual: f64 },
    #[error("A n + C is singular at n = {n}")]
    SingularIntertwiner { n: usize },
}

pub type Result<T> = std::result::Result<T, BochnerError>;
