#![allow(dead_code)]

pub mod checks;
pub mod fd;
pub mod graph_oracle;
pub mod primitives;
pub mod suites;
