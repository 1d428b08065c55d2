//! Profit-maximizing differentiated-service menus for a congested network
//! market.
//!
//! An ISP facing a continuum of users with heterogeneous values chooses a
//! menu of service classes (a price for each offered congestion level) and a
//! capacity allocation that sustains the promised congestion. This crate
//! solves the profit-maximization problem in closed form via the virtual
//! valuation and virtual capacity functions, recovers the price schedule and
//! all derived analytics, and cross-validates the continuum solution against
//! finite-menu brute-force search.
//!
//! The modules follow the pipeline:
//!
//! - [`primitives`]: valuation distributions, quality models and the derived
//!   virtual functions with eager regularity validation.
//! - [`solver`]: optimal choice schedules for the fixed- and
//!   variable-capacity scenarios, plus structural analytics (abundance and
//!   bunching thresholds, shadow-price curves).
//! - [`schedule`]: price recovery, indirect utility, profit and surplus.
//! - [`discrete`]: finite-menu demand partition, brute-force menu search and
//!   the optimal single-class benchmark — the independent oracle for the
//!   closed-form solution.
//!
//! Everything is pure and immutable after construction; all types are safe
//! to share across threads.

// `!(x > 0.0)` rejects NaN along with the out-of-range values in a single
// predicate; the spelled-out alternative hides that intent.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod discrete;
pub mod error;
pub mod numerics;
pub mod primitives;
pub mod schedule;
pub mod solver;

pub use config::NumericsConfig;
pub use error::{Error, Result};
pub use primitives::{
    Extended, QualityModel, QualityModelKind, ValuationDistribution, VirtualFunctions,
};
pub use schedule::{capacity_profile, profit, recover_prices, user_surplus, PriceSchedule, Profit};
pub use solver::{
    abundance_threshold, bunching_threshold, shadow_price_curve, solve, solve_fixed,
    solve_variable, CapacityRegime, ChoiceSchedule, CostFunction, Regime,
};

pub use discrete::{
    brute_force_menu, optimal_single_class, partition_demand, simulate_choices, MarketOutcome,
    ServiceClass, ServiceMenu, SingleClassSolution,
};
