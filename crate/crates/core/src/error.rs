use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{0}: argument outside the function domain")]
    Domain(&'static str),

    #[error("quadrature did not converge: partial estimate {estimate} (error bound {abs_error})")]
    NonConvergent { estimate: f64, abs_error: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}
