//! Modelling, allocation and schedulability analysis of heterogeneous
//! parallel conditional DAG tasks on multi-engine platforms.

pub mod alloc;
pub mod analysis;
pub mod error;
pub mod expand;
pub mod gen;
pub mod io;
pub mod model;
pub mod timing;

pub use error::{Error, Result};
