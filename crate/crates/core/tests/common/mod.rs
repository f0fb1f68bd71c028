//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod model;
pub mod oracle;
