use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("duplicate location `{location}` on line {line}")]
    DuplicateLocation { location: String, line: u64 },

    #[error("line {line}: self-loop on `{location}`")]
    SelfLoop { location: String, line: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown location `{0}`")]
    UnknownLocation(String),

    #[error("unknown activity `{0}`")]
    UnknownActivity(String),

    #[error("missing indicator value for specialized location `{0}`")]
    MissingIndicator(String),

    #[error("specialization graph has {} disconnected components: {}", .components.len(), format_components(.components))]
    Disconnected { components: Vec<Vec<String>> },

    #[error("degenerate spectrum: second eigenvalue {second} is not separated from {third}")]
    DegenerateSpectrum { second: f64, third: f64 },

    #[error("activity graph has no edges at threshold {threshold}; try a lower edge threshold")]
    EmptyGraph { threshold: f64 },

    #[error("`{0}` is already active")]
    AlreadyActive(String),

    #[error("infeasible instance: `{0}` can never be activated from the initial active set")]
    Infeasible(String),

    #[error(
        "optimal policy supports at most {limit} inactive nodes, instance has {inactive}; \
         use lookahead:K or Monte Carlo simulation instead"
    )]
    Capacity { inactive: usize, limit: usize },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

fn format_components(components: &[Vec<String>]) -> String {
    components
        .iter()
        .map(|c| format!("[{}]", c.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}
