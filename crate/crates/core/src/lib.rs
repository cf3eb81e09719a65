pub mod anneval;
pub mod attribution;
pub mod corpusfilter;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod lexicon;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod robustness;
pub mod seed;
pub mod stats;
pub mod templategen;

pub use error::{Error, Result};
