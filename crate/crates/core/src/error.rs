use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("scenario `{scenario}` has no reference pair `{pair}`")]
    UnknownPair { scenario: String, pair: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("outside domain: {0}")]
    Domain(String),

    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("attainability refused: the multiplier set is nonempty (direction {psi_terminal:?})")]
    Refused { psi_terminal: Vec<f64> },

    #[error("endpoint solve did not converge after {iterations} iterations (best residual {best_residual:e} at tau = {tau})")]
    NewtonFailed {
        best_residual: f64,
        tau: f64,
        iterations: usize,
    },

    #[error("synthesized trajectory leaves the tube: deviation {deviation:e} > {eps:e}")]
    TubeViolation { deviation: f64, eps: f64 },

    #[error("chattered endpoint misses the target by {error:e} (tolerance {tol:e})")]
    EndpointMiss { error: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}
