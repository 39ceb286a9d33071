pub mod error;
pub mod model;
pub mod construct;
pub mod functional;
pub mod competitive;
pub mod sampling;
pub mod cohort;
pub mod subset;
pub mod group;
pub mod experiments;
