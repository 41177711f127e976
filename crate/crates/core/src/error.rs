use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex index {index} out of range in element {element} ({n_vertices} vertices)")]
    IndexOutOfRange {
        element: usize,
        index: usize,
        n_vertices: usize,
    },
    #[error("element {0} is degenerate (zero area)")]
    DegenerateElement(usize),
    #[error("non-conforming mesh: {0}")]
    NonConforming(String),
    #[error("boundary edge ({0}, {1}) carries no Dirichlet/Neumann tag")]
    UntaggedBoundaryEdge(usize, usize),
    #[error("tagged edge ({0}, {1}) is not a boundary edge of the triangulation")]
    NotABoundaryEdge(usize, usize),
    #[error("element id {0} out of range")]
    UnknownElement(usize),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolveFailed {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("linear system breakdown: {0}")]
    Breakdown(String),
    #[error("active-set iteration did not stabilize within {max_iter} iterations{}", if *.cycle { " (cycle detected)" } else { "" })]
    ActiveSetNotConverged { max_iter: usize, cycle: bool },
    #[error("inadmissible data: {0}")]
    Inadmissible(String),
    #[error("negative quadratic form {0:.3e}: operator is not positive semidefinite")]
    NegativeQuadraticForm(f64),
    #[error("negative estimator radicand {value:.3e} at node {node} ({term})")]
    NegativeRadicand {
        node: usize,
        term: &'static str,
        value: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),
    #[error("expression error in `{expr}`: {message}")]
    Expression { expr: String, message: String },
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
