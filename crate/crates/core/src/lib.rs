pub mod data;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod mean;
pub mod model;
pub mod params;
pub mod predict;
pub mod design;
pub mod seed;
pub mod estimate;
pub mod io;
pub mod models;
pub mod mcmc;
pub mod harness;
