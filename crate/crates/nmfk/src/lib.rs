//! Command-line front end for NMFk signature extraction: table ingest,
//! parallel restarts, report files and GeoJSON export.

pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod geojson;
pub mod pipeline;
pub mod report;
pub mod synthetic;
pub mod table;
