//! Circuit description and the shared ordering convention.
//!
//! The Trotter unit is `U = R_ZZ · R_X(θ)`, so on a state `R_X` acts first.
//! The full circuit is `U_T = U^T`, optionally followed by one more `R_X`
//! layer (the "5+1" setting).
//!
//! | picture      | per step          | trailing `R_X` |
//! |--------------|-------------------|----------------|
//! | Schrödinger  | `R_X`, then `R_ZZ` | applied last   |
//! | Heisenberg   | `R_ZZ`, then `R_X` | conjugated first |
//!
//! The Heisenberg sequence is the Schrödinger sequence reversed: an
//! observable is conjugated by the outermost gate first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    /// Transverse-field angle θ_h in radians.
    pub theta: f64,
    /// Number of Trotter steps T.
    pub steps: usize,
    /// Append one more `R_X(θ)` layer after the last step.
    pub extra_rx: bool,
}

/// One layer of gates acting on every site (`Rx`) or every edge (`Rzz`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Layer {
    Rzz,
    Rx(f64),
}

impl CircuitSpec {
    pub fn new(theta: f64, steps: usize, extra_rx: bool) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::InvalidArgument(format!("theta must be finite, got {theta}")));
        }
        Ok(CircuitSpec {
            theta,
            steps,
            extra_rx,
        })
    }

    /// Gate layers in the order they act on the state.
    pub fn schrodinger_layers(&self) -> Vec<Layer> {
        let mut layers = Vec::with_capacity(2 * self.steps + 1);
        for _ in 0..self.steps {
            layers.push(Layer::Rx(self.theta));
            layers.push(Layer::Rzz);
        }
        if self.extra_rx {
            layers.push(Layer::Rx(self.theta));
        }
        layers
    }

    /// Gate layers in the order an observable is conjugated by them.
    pub fn heisenberg_layers(&self) -> Vec<Layer> {
        let mut layers = self.schrodinger_layers();
        layers.reverse();
        layers
    }
}
