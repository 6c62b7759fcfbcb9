pub mod analyze;
pub mod augment;
pub mod cluster;
pub mod report;
