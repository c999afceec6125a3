//! Simulated survey respondents and the psychometric battery used to compare
//! them with real samples.
//!
//! The pipeline runs: quota table → persona roster ([`sampling`]) → prompts
//! ([`prompt`]) → completions ([`gateway`]) → item vectors and datasets
//! ([`ingest`]) → EFA/CFA/multigroup fits ([`factor`]) → invariance verdicts
//! ([`invariance`]) and distributional comparisons ([`stats`]). The
//! [`prototyper`] prunes draft items with iterated EFA, and [`pipeline`] wires
//! the stages to on-disk formats.

pub mod factor;
pub mod gateway;
pub mod ingest;
pub mod invariance;
pub mod pipeline;
pub mod prompt;
pub mod prototyper;
pub mod sampling;
pub mod seed;
pub mod stats;
