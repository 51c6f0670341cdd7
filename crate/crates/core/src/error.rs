use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid bounds: x_min={x_min}, x_max={x_max}, n={n} (need x_max > x_min and n >= 16)")]
    InvalidBounds { x_min: f64, x_max: f64, n: usize },

    #[error("wavefunction has zero norm")]
    ZeroNorm,

    #[error("probability {0} outside the open interval (0, 1)")]
    OutOfRange(f64),

    #[error("wavefunctions live on different grids")]
    GridMismatch,

    #[error("array length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid eigenstate request: {0}")]
    InvalidRequest(String),

    #[error("degenerate spectrum: E[{index}]={lower} and E[{next}]={upper} coincide", next = .index + 1)]
    Degenerate { index: usize, lower: f64, upper: f64 },

    #[error("tridiagonal solve hit a vanishing pivot at row {0}")]
    SolverSingular(usize),

    #[error("time step {dt} too coarse for grid spacing {dx} (limit {limit})")]
    Resolution { dt: f64, dx: f64, limit: f64 },

    #[error("invalid time stepping: {0}")]
    InvalidSchedule(String),

    #[error("frame {0} not stored in trace")]
    MissingFrame(usize),

    #[error("position {x} outside grid [{x_min}, {x_max}]")]
    OutOfGrid { x: f64, x_min: f64, x_max: f64 },

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("bump support [{lo}, {hi}] not inside grid")]
    BumpOutsideGrid { lo: f64, hi: f64 },

    #[error("trajectory needs at least two samples, has {0}")]
    EmptyTrajectory(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
