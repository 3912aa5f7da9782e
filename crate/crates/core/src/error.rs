use thiserror::Error;

pub type Result<T, E = ThermoError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThermoError {
    #[error("no energy levels given")]
    EmptyEnergies,

    #[error("energy {index} is not finite ({value})")]
    NonFiniteEnergy { index: usize, value: f64 },

    #[error("rational form of the Gibbs state does not fit in {bits} bits")]
    Overflow { bits: u32 },

    #[error("context has no rational form (d, D)")]
    NoRationalForm,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("normalisations differ: {left} vs {right}")]
    NormalizationMismatch { left: f64, right: f64 },

    #[error("invalid population: {0}")]
    InvalidPopulation(String),

    #[error("matrix is not column-stochastic")]
    NotStochastic,

    #[error("matrix does not preserve the Gibbs state (residual {residual:e})")]
    NotGibbsPreserving { residual: f64 },

    #[error("levels {lo} and {hi} are degenerate or not ordered by energy")]
    DegeneratePair { lo: usize, hi: usize },

    #[error("level index {index} out of range for {n} levels")]
    LevelOutOfRange { index: usize, n: usize },

    #[error("steps act on different level pairs ({0:?} vs {1:?})")]
    DifferentPairs((usize, usize), (usize, usize)),

    #[error("p does not thermo-majorise q: curve deficit {deficit:e} at x = {elbow}")]
    NotMajorized { elbow: f64, deficit: f64 },

    #[error("no elementary-step sequence found after exploring {explored} reorderings")]
    NoEdpSequence { explored: usize },

    #[error("no perfect matching on the positive support; matrix is not doubly stochastic")]
    NoPerfectMatching,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("truncation order {needed} exceeds the cap of {cap}")]
    TruncationTooLarge { needed: u64, cap: u64 },

    #[error("{0}")]
    Parse(String),
}

impl ThermoError {
    /// Stable identifier printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            ThermoError::EmptyEnergies => "empty-energies",
            ThermoError::NonFiniteEnergy { .. } => "non-finite-energy",
            ThermoError::Overflow { .. } => "overflow",
            ThermoError::NoRationalForm => "no-rational-form",
            ThermoError::DimensionMismatch { .. } => "dimension-mismatch",
            ThermoError::NormalizationMismatch { .. } => "normalization-mismatch",
            ThermoError::InvalidPopulation(_) => "invalid-population",
            ThermoError::NotStochastic => "not-stochastic",
            ThermoError::NotGibbsPreserving { .. } => "not-gibbs-preserving",
            ThermoError::DegeneratePair { .. } => "degenerate-pair",
            ThermoError::LevelOutOfRange { .. } => "level-out-of-range",
            ThermoError::DifferentPairs(..) => "different-pairs",
            ThermoError::NotMajorized { .. } => "not-majorized",
            ThermoError::NoEdpSequence { .. } => "no-edp-sequence",
            ThermoError::NoPerfectMatching => "no-perfect-matching",
            ThermoError::InvalidParameter(_) => "invalid-parameter",
            ThermoError::TruncationTooLarge { .. } => "truncation-too-large",
            ThermoError::Parse(_) => "parse",
        }
    }

    /// Domain errors are failures of the mathematics (exit code 1); the rest
    /// are input or format problems (exit code 2).
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            ThermoError::NotMajorized { .. }
                | ThermoError::NoEdpSequence { .. }
                | ThermoError::NotGibbsPreserving { .. }
                | ThermoError::NoPerfectMatching
                | ThermoError::DegeneratePair { .. }
                | ThermoError::TruncationTooLarge { .. }
        )
    }
}
