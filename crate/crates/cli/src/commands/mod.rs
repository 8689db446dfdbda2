pub mod phantom;
pub mod predict;
pub mod stats;
pub mod train;
