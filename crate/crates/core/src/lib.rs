//! Numerical lab for dyadic Haar paraproducts and their random-sign compositions.

pub mod cli;
pub mod dyadic;
pub mod ensembles;
pub mod error;
pub mod operators;
pub mod report;
pub mod specnorm;
pub mod symbols;
pub mod symfile;
pub mod theorems;

pub use error::{Error, Result};
