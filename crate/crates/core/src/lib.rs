//! Grasp pose planning for bin-picking from category-agnostic instance
//! segmentation.
//!
//! The planner samples parallel-jaw grasp rectangles on every segmented
//! instance, classifies the pixels under each rectangle into contact, free and
//! collision sectors, rejects grasps the gripper cannot physically make, and
//! ranks the rest by a grasp quality index. Around it sit label-map I/O,
//! pinhole camera geometry, class-agnostic AP/AR evaluation and a seeded
//! synthetic scene generator.

pub mod camgeom;
pub mod maskio;
pub mod planner;
pub mod metrics;
pub mod scenegen;
pub mod render;
pub mod cli;
