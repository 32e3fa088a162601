pub mod affine_bridge;
pub mod circle_field;
pub mod cli;
pub mod conformal_metric;
pub mod diagnostics;
pub mod error;
pub mod flow_engine;
pub mod verify;
