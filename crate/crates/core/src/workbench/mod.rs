//! Generators, instance builders, experiment configuration and reporting.

pub mod generators;
pub mod experiment;
pub mod instances;
