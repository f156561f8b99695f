pub mod chain;
pub mod gateway;
pub mod graph;
pub mod layout;
pub mod metrics;
pub mod predictions;
pub mod synthetic;
