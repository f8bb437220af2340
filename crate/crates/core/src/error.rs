use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probe configuration: {0}")]
    InvalidProbe(String),

    #[error("sample rate mismatch: signal at {signal} Hz, probe at {probe} Hz")]
    SampleRateMismatch { signal: f64, probe: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coded pulse ({pulse_s:.3e} s) does not fit in the repetition interval ({pri_s:.3e} s)")]
    PulseLongerThanPri { pulse_s: f64, pri_s: f64 },

    #[error("unknown scenario preset `{0}`")]
    UnknownPreset(String),

    #[error("scatterer {index} exceeds the speed of sound ({speed:.1} m/s >= {c} m/s)")]
    Supersonic { index: usize, speed: f64, c: f64 },

    #[error("{emitters} emitter positions but {emissions} emission signals")]
    EmitterCountMismatch { emitters: usize, emissions: usize },

    #[error("window [{start}, {end}) lies outside the signal support [0, {len})")]
    OutOfSupport { start: i64, end: i64, len: usize },

    #[error("window plan overruns the signal support; at most {max_windows} windows fit")]
    PlanOverrun { max_windows: usize },

    #[error("reference window length must be odd, got {0}")]
    EvenWindow(usize),

    #[error("reference has zero energy")]
    ZeroEnergy,

    #[error("filter system is singular after loading (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("length mismatch: {what} (expected {expected}, got {actual})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("echo path {path_m:.6e} m is shorter than the probe baseline {baseline_m:.6e} m")]
    ImpossibleEcho { path_m: f64, baseline_m: f64 },

    #[error("depth grid reaches {requested:.6e} m but lines only cover up to {available:.6e} m")]
    GridOutOfRange { requested: f64, available: f64 },

    #[error("no half-power crossing on the {side} side of the peak")]
    NoHalfPowerCrossing { side: &'static str },

    #[error("noise band around {depth:.4e} m contains no samples")]
    EmptyNoiseBand { depth: f64 },

    #[error("no spectral peak inside the probe band")]
    NoInBandPeak,

    #[error("mainlobe carries zero energy")]
    ZeroMainlobe,

    #[error("grids differ between runs: {0}")]
    GridMismatch(String),

    #[error("malformed signal header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {actual}")]
    TruncatedPayload {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("configuration error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attributes the error to a pipeline stage; already attributed errors
    /// keep their innermost stage.
    pub fn at(self, stage: &'static str) -> Error {
        if matches!(self, Error::Stage { .. }) {
            return self;
        }
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.into().at(stage))
    }
}
