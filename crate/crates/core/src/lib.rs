//! Engagement versus utility in a two-type recommendation model.
//!
//! A platform shows two items per period to a multinomial-logit user who may
//! also take an outside option. Popular items have a known base utility;
//! niche utility varies across users with mean zero. The crate provides the
//! choice model, the niche distributions, the APP / PEAR / DICE / oracle
//! policies, their closed-form metrics, and a reproducible discounted Monte
//! Carlo engine.

pub mod analytics;
pub mod choice;
pub mod distributions;
pub mod error;
pub mod policies;
pub mod sim;

pub use error::{Error, Result};
