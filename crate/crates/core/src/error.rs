use thiserror::Error;

/// Errors raised by the simulator and the statistics layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("source paths must be distinct, got `{0}` twice")]
    IdenticalPaths(String),
    #[error("reflectivity {0} outside [0, 1]")]
    ReflectivityOutOfRange(f64),
    #[error("wavepacket width must be positive, got {0}")]
    InvalidWidth(f64),
    #[error("mode overlap multiplier {0} outside [0, 1]")]
    InvalidModeOverlap(f64),
    #[error("polarizer on `{0}` leaves no surviving amplitude")]
    NothingSurvives(String),
    #[error("states live on different registers: {0}")]
    MismatchedRegister(String),
    #[error("path `{0}` is not declared in the circuit")]
    UndeclaredPath(String),
    #[error("circuit contains a non-unitary element ({0})")]
    NonUnitaryElement(String),
    #[error("transfer matrix deviates from unitarity by {0:e}")]
    NotUnitary(f64),
    #[error("detector efficiency {0} outside (0, 1]")]
    InvalidEfficiency(f64),
    #[error("populated path `{0}` is not mapped to any detector")]
    UnmappedPath(String),
    #[error("post-selection accepts zero probability mass")]
    ZeroAcceptance,
    #[error("conditional state is not pure: {0} orthogonal temporal sectors")]
    NotPure(usize),
    #[error("side `{0}` carries the same polarization on more than one path")]
    AmbiguousSide(&'static str),
    #[error("expected a two-photon state, found a term with {0} photons")]
    NotTwoPhoton(usize),
    #[error("invalid outcome distribution: {0}")]
    InvalidDistribution(String),
    #[error("mean pair number must be positive, got {0}")]
    InvalidMean(f64),
    #[error("correlation needs a positive total count")]
    ZeroTotal,
    #[error("sign vector must contain exactly one -1, got {0:?}")]
    InvalidSignVector([i8; 4]),
    #[error("settings do not form a two-by-two bipartite pattern")]
    SettingsNotBipartite,
    #[error("fringe fit needs at least 5 points, got {0}")]
    InsufficientPoints(usize),
    #[error("fringe data span {0:.4} rad, less than one period")]
    InsufficientSpan(f64),
    #[error("fitted fringe offset {0} is not positive")]
    NonPositiveOffset(f64),
    #[error("scan is empty")]
    EmptyScan,
    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
}

pub type Result<T> = std::result::Result<T, SimError>;
