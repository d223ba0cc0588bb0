pub mod analyze;
pub mod data;
pub mod judging;
pub mod lab;
pub mod reenact;
