pub mod alignment;
pub mod anchoring;
pub mod attachment;
pub mod commands;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod guidance;
pub mod lacater;
pub mod records;
pub mod simulator;
