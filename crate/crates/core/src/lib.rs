pub mod cli;
pub mod corpus;
pub mod embed;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod service;
pub mod trainer;

mod util;
