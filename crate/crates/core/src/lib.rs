//! Closed-loop simulation of a personalized recommender under
//! content-agnostic moderation, with stance-neutrality metrics.
//!
//! Each step the recommender proposes slates, a moderator rewrites them from
//! exposure and click data alone, simulated users click, and clicked stances
//! shift their preferences. [`engine::run`] drives one configuration and
//! [`engine::sweep`] a grid of them.

// `!(x >= lo)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;
pub mod moderate;
pub mod recommend;
pub mod rng;
pub mod scenario;
pub mod usermodel;
