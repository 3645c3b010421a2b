pub mod numerics;
pub mod plant;
pub mod rational;
pub mod controllers;
pub mod platform;
pub mod analysis;
pub mod scenario;
pub mod cli;
