//! Batch pipelines, acceptance criteria and figure export for `cyltrans`.

pub mod config;
pub mod criteria;
pub mod output;
pub mod pipelines;
pub mod record;
pub mod svg;
