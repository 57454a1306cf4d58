pub mod cli;
pub mod evaluate;
pub mod features;
pub mod ingest;
pub mod models;
pub mod rng;
pub mod textprep;
pub mod topics;
mod numfmt;
