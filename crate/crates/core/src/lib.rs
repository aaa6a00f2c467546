//! Replica analysis of l1-regularized Expected Shortfall optimization:
//! Gaussian special functions, the free-energy surface and its stationarity
//! conditions, a continuation Newton solver, the regularized/unregularized
//! order-parameter map, portfolio observables, and a finite-sample LP lab.
//!
//! The crate is no_std + alloc; all IO lives in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod espmap;
pub mod finite_lab;
pub mod gaussx;
pub mod portfolio_stats;
pub mod replica_core;
pub mod saddle_solver;
