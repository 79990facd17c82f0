use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can surface, tagged by the stage that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("data: empty dataset")]
    EmptyDataset,
    #[error("data: row {row}: column `{column}` must be 0 or 1, got {value}")]
    NonBinaryValue {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("data: row {row}: expected {expected} covariates, got {found}")]
    RaggedCovariates {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("data: row {row}: covariate `{column}` is missing or not finite")]
    MissingCovariate { row: usize, column: String },
    #[error("data: stratum {stratum} has no observations with A={arm}")]
    EmptyStratumArm { stratum: usize, arm: u8 },
    #[error("data: row {row}: stratum label {label} outside 1..={levels}")]
    InvalidStratum {
        row: usize,
        label: usize,
        levels: usize,
    },
    #[error("data: need at least two strata, found {0}")]
    TooFewStrata(usize),
    #[error("data: unknown column `{0}`")]
    UnknownColumn(String),
    #[error("data: column `{column}` yields only {distinct} distinct quantile edges for {bins} bins")]
    DegenerateBins {
        column: String,
        bins: usize,
        distinct: usize,
    },
    #[error("data: stratum has not been assigned")]
    StratumUnassigned,
    #[error("data: no control rows (A=0) to fit the prognostic score")]
    NoControls,
    #[error("data: cluster ids required but absent")]
    MissingClusters,

    #[error("regression: knots must be strictly increasing and inside ({lo}, {hi})")]
    KnotOrder { lo: f64, hi: f64 },
    #[error("regression: fold {fold} has no training rows with A={arm}")]
    FoldArmEmpty { fold: usize, arm: u8 },
    #[error("regression: design matrix has {rows} rows but outcome has {outcomes}")]
    DesignMismatch { rows: usize, outcomes: usize },
    #[error("regression: singular weighted normal equations in logistic fit")]
    SingularFit,

    #[error("risk: nuisance predictions missing for row {0}")]
    MissingNuisance(usize),

    #[error("estimation: identification matrix is rank deficient (sigma_min/sigma_max = {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("estimation: theta1 equals theta2, Y(0) margin not identified from the total-probability identity")]
    DegenerateTheta,
    #[error("estimation: {points} grid points cannot identify {params} parameters")]
    InsufficientGrid { points: usize, params: usize },
    #[error("estimation: singular normal equations in least-squares initializer")]
    SingularNormalEquations,
    #[error("estimation: singular score Jacobian")]
    SingularJacobian,
    #[error("estimation: Newton solver did not converge after {iterations} iterations (score norm {score_norm:e})")]
    NonConvergence { iterations: usize, score_norm: f64 },

    #[error("inference: {failed} of {total} bootstrap replicates failed")]
    TooManyFailedReplicates { failed: usize, total: usize },
    #[error("inference: dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("simulation: structural probability {value} outside [0,1] at v={v}")]
    StructuralProbabilityOutOfRange { value: f64, v: f64 },

    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    /// Input or configuration problems, as opposed to failures of an estimator on valid data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::EmptyDataset
                | Error::NonBinaryValue { .. }
                | Error::RaggedCovariates { .. }
                | Error::MissingCovariate { .. }
                | Error::EmptyStratumArm { .. }
                | Error::InvalidStratum { .. }
                | Error::TooFewStrata(_)
                | Error::UnknownColumn(_)
                | Error::DegenerateBins { .. }
                | Error::StratumUnassigned
                | Error::MissingClusters
                | Error::NoControls
                | Error::KnotOrder { .. }
                | Error::Config(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Parse(_)
        )
    }

    /// Failures that a bootstrap replicate may absorb by being dropped.
    pub fn is_replicate_failure(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::NonConvergence { .. }
                | Error::SingularJacobian
                | Error::SingularNormalEquations
                | Error::SingularFit
                | Error::EmptyStratumArm { .. }
                | Error::FoldArmEmpty { .. }
                | Error::DegenerateBins { .. }
                | Error::DegenerateTheta
        )
    }
}
