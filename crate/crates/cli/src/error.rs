use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot access {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("reference computation failed: {0}")]
    Reference(#[source] mlp_core::Error),
    #[error("sweep cell {cell} failed: {source}")]
    Cell {
        cell: String,
        #[source]
        source: mlp_core::Error,
    },
    #[error("cannot encode output: {0}")]
    Encode(String),
}
