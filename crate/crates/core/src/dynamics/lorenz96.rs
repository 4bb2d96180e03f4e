//! Lorenz-96 system, the low-dimensional testbed for architecture choices.

use crate::error::{Error, Result};
use crate::Scalar;
use ndarray::{Array1, ArrayView1};

/// Configuration of the periodic Lorenz-96 system
/// `dv_i/dt = v_{i-1}(v_{i+1} - v_{i-2}) - v_i + F`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Lorenz96Config {
    pub n_vars: usize,
    pub forcing: f64,
    /// Step size in model time units (MTU).
    pub dt: f64,
}

impl Default for Lorenz96Config {
    fn default() -> Self {
        Lorenz96Config {
            n_vars: 6,
            forcing: 8.0,
            dt: 0.01,
        }
    }
}

impl Lorenz96Config {
    pub fn validate(&self) -> Result<()> {
        if self.n_vars < 4 {
            return Err(Error::config(format!(
                "Lorenz96 needs at least 4 variables (stencil i-2..i+1), got {}",
                self.n_vars
            )));
        }
        if self.dt <= 0.0 {
            return Err(Error::config("dt must be positive"));
        }
        Ok(())
    }
}

/// Tendency of the Lorenz-96 system with periodic indexing.
pub fn lorenz96_rhs<T: Scalar>(state: ArrayView1<T>, forcing: T) -> Result<Array1<T>> {
    if state.len() < 4 {
        return Err(Error::config(format!(
            "Lorenz96 state must have length >= 4, got {}",
            state.len()
        )));
    }
    let mut out = Array1::zeros(state.len());
    lorenz96_rhs_into(state, forcing, &mut out);
    Ok(out)
}

pub(crate) fn lorenz96_rhs_into<T: Scalar>(state: ArrayView1<T>, forcing: T, out: &mut Array1<T>) {
    let n = state.len();
    for i in 0..n {
        let im1 = state[(i + n - 1) % n];
        let im2 = state[(i + n - 2) % n];
        let ip1 = state[(i + 1) % n];
        out[i] = im1 * (ip1 - im2) - state[i] + forcing;
    }
}
