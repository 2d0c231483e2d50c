//! Error type shared across the crate.

pub type Result<T> = std::result::Result<T, ShadowError>;

#[derive(Debug, thiserror::Error)]
pub enum ShadowError {
    /// The state (or adjoint) left the representable range during time
    /// integration. Carries the step index at which the blow-up was detected.
    #[error("integration diverged (non-finite state) at step {step}")]
    Diverged { step: usize },

    /// QR factorization found a column that is numerically dependent on the
    /// previous ones.
    #[error("rank-deficient matrix: column {column} below tolerance in QR")]
    RankDeficient { column: usize },

    /// A triangular solve hit a diagonal entry below the singularity floor.
    #[error("singular triangular system: |R[{index},{index}]| below tolerance")]
    SingularSystem { index: usize },

    /// Terminal particular condition is not defined near an equilibrium,
    /// where `f` vanishes and the terminal vector is unbounded.
    #[error("near-equilibrium terminal state: |f| = {norm:.3e} below floor")]
    NearEquilibrium { norm: f64 },

    /// Every tracked exponent classified unstable; the stable/neutral block
    /// is empty and the split march has nothing to recurse on. Increase m.
    #[error("all {m} tracked modes classified unstable; increase the number of homogeneous solutions")]
    SubspaceOverflow { m: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ShadowError {
    /// Exit code for the CLI: configuration problems are 2, numerical and
    /// runtime failures are 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            ShadowError::InvalidConfig(_) => 2,
            _ => 3,
        }
    }
}
