use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("Q is not positive semi-definite (smallest eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },
    #[error("R is not positive definite (smallest eigenvalue {eigenvalue:e})")]
    NotPd { eigenvalue: f64 },
    #[error("{0} is not symmetric")]
    NotSymmetric(&'static str),
    #[error("factor check failed for {0}: relative Frobenius error {1:e}")]
    BadFactor(&'static str, f64),
    #[error("invalid constraint piece: {0}")]
    InvalidPiece(String),
    #[error("projection did not converge after {iterations} sweeps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("no feasible steady state in S")]
    InfeasibleSteadyState,
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("reduced Hessian on ker[A-I B] is singular")]
    SingularReducedHessian,
    #[error("problem infeasible from x0 = {x0:?} with horizon {horizon}")]
    Infeasible { x0: Vec<f64>, horizon: usize },
    #[error("solver stopped after {iterations} iterations (primal {primal:e}, dual {dual:e})")]
    NonConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
    },
    #[error("no storage matrix found for rate s = {0:e}")]
    StorageInfeasible(f64),
    #[error("no positive dissipation rate is feasible")]
    NoFeasibleRate,
    #[error("trajectory is not decaying towards the steady state")]
    NotDecaying,
    #[error("witness policy leaves the admissible set at step {step} from x0 #{point}")]
    WitnessInadmissible { point: usize, step: usize },
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
