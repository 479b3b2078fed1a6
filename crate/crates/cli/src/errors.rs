//! Error classes behind the process exit codes.

use std::fmt;

use panfuse::bench::BenchError;
use panfuse::eval::EvalError;
use panfuse::pipeline::PipelineError;
use panfuse::store::StoreError;
use panfuse::synth::SynthError;
use panfuse::uncertainty::UncertaintyError;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

/// Invalid configuration or parameters.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Missing or malformed input data.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<InputError>()
            || cause.is::<StoreError>()
            || cause.is::<EvalError>()
            || cause.is::<UncertaintyError>()
            || cause.is::<std::io::Error>()
        {
            return EXIT_INPUT;
        }
        if let Some(
            SynthError::BadSpec(_)
            | SynthError::BadSeverity(_)
            | SynthError::InfeasiblePacking { .. }
            | SynthError::ProposalBudget { .. },
        ) = cause.downcast_ref::<SynthError>()
        {
            return EXIT_CONFIG;
        }
        match cause.downcast_ref::<PipelineError>() {
            Some(PipelineError::Fusion(_)) => return EXIT_CONFIG,
            Some(PipelineError::Batch(_)) => return EXIT_INPUT,
            _ => {}
        }
        match cause.downcast_ref::<BenchError>() {
            Some(BenchError::NoInput) => return EXIT_INPUT,
            Some(BenchError::EmptyGrid) => return EXIT_CONFIG,
            _ => {}
        }
    }
    EXIT_INTERNAL
}
