pub mod adaptive;
pub mod benchmarks;
pub mod error;
pub mod estimator;
pub mod expr;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod run;
pub mod solver;
