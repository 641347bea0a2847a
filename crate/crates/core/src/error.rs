use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stance distribution undefined: total exposure is zero")]
    UndefinedDistribution,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("simulation state: {0}")]
    State(String),

    #[error("knapsack budget infeasible: {0}")]
    Infeasible(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<SimError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SimError {
    pub fn at_step(self, step: usize) -> Self {
        match self {
            e @ SimError::AtStep { .. } => e,
            e => SimError::AtStep { step, source: Box::new(e) },
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
