//! HTTP API, command line and configuration for the semantelli metasearch
//! engine. The search machinery itself lives in `semantelli-core`.

pub mod cli;
pub mod config;
pub mod http;

pub use config::AppConfig;
