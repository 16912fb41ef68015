use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric domain error: {0}")]
    Domain(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Domain(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

impl From<cloudclust::Error> for CliError {
    fn from(e: cloudclust::Error) -> Self {
        use cloudclust::Error as E;
        match e {
            E::Config(_) | E::Divisibility { .. } => Self::Config(e.to_string()),
            _ => Self::Domain(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}
