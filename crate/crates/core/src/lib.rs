//! Expert hook-trajectory generation for tool-based object picking.
//!
//! The crate plans collision-free SE(3) trajectories for a J-hook end
//! effector against object point clouds, smooths and resamples them to a
//! fixed number of waypoints, synthesizes augmented camera-frame training
//! samples, and scores trajectories with a geometric capture proxy.

pub mod augment;
pub mod baseline;
pub mod capture;
pub mod config;
pub mod dataset;
pub mod error;
pub mod expert;
pub mod pointcloud;
pub mod planner;
pub mod ply;
pub mod raster;
pub mod se3;
pub mod smoothing;
pub mod synthetic;

pub use error::{Error, Result};
