pub mod crash;
pub mod fixtures;
