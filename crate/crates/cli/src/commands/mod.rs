pub mod data;
pub mod features;
pub mod learn;
pub mod objects;
