//! Software model of a capacitor–diode analog neural network for MNIST.
//!
//! The crate is organised bottom-up:
//!
//! - [`circuit`]: netlists and a fixed-step transient solver (MNA with
//!   ideal-switch or Shockley diodes).
//! - [`cells`]: the weight cell, summing layer and full 25-input classifier
//!   as netlists, plus the closed-form checks on the cell equation.
//! - [`data`]: MNIST CSV ingest, 28×28 → 5×5 preprocessing and the SD-card
//!   text files.
//! - [`mcu`]: microcontroller emulation: pin encoding, current sensor and ADC,
//!   runtime accounting.
//! - [`learning`]: one-vs-all training with target feedback, inference,
//!   metrics and the dense software baseline.
//! - [`config`], [`commands`] and [`report`]: run configuration, the batch
//!   commands behind the `capnet` binary, tables and SVG charts.

pub mod cells;
pub mod circuit;
pub mod commands;
pub mod config;
pub mod data;
pub mod learning;
pub mod mcu;
pub mod report;
