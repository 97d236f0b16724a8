use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("unknown coefficient family `{0}`")]
    UnknownFamily(String),

    #[error("{role}: family `{family}` expects {expected} parameters, got {got}")]
    ParamCount {
        role: &'static str,
        family: &'static str,
        expected: String,
        got: usize,
    },

    #[error("nonpositive horizon {0}")]
    NonpositiveHorizon(f64),

    #[error("nonpositive mark mass {0}")]
    NonpositiveMass(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("rank-deficient regression at step {step}: rank {rank} < {dim} with {distinct} distinct sample points")]
    RankDeficient {
        step: usize,
        rank: usize,
        dim: usize,
        distinct: usize,
    },

    #[error(
        "non-finite value at step {step} ({what}); the jump-constrained problem likely has no \
         solution and the penalized values diverge as n grows"
    )]
    Blowup { step: usize, what: &'static str },

    #[error("CFL condition violated: dt * rate = {ratio:.6} > 1 (monotonicity lost)")]
    Cfl { ratio: f64 },

    #[error("{0} requires impulse shape (f, c free of y and z; h(u, e) = -u)")]
    NotImpulseShape(&'static str),

    #[error("{0} requires a one-dimensional state")]
    NotOneDimensional(&'static str),

    #[error("{0} requires h(u, e) = -u")]
    NotObstacleForm(&'static str),

    #[error(
        "face-lift iteration did not converge in {0} iterations (the face-lift may be infinite)"
    )]
    FaceliftDiverged(usize),

    #[error("obstacle projection did not converge in {sweeps} sweeps at layer {layer}")]
    ProjectionDiverged { layer: usize, sweeps: usize },

    #[error("tree too large: {0}")]
    TreeTooLarge(String),

    #[error("tree oracle requires a single mark node, got {0}")]
    MultiMark(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
