//! File formats, scene bundles and the `splatfit` command line built on
//! [`splatfit_core`].

pub mod bundle;
pub mod cli;
pub mod config;
pub mod io;
pub mod manifest;
pub mod pipeline;
