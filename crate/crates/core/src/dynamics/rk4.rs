//! Classical fourth-order Runge-Kutta integration.

use crate::error::{Error, Result};
use crate::Scalar;
use ndarray::{Array1, Array2, ArrayView1};

/// Integrate `dv/dt = rhs(v)` with fixed step `dt` for `n_steps` steps.
///
/// Returns `n_steps + 1` states including the initial one. A non-finite
/// state aborts with the offending step index.
pub fn integrate_rk4<T, F>(
    mut rhs: F,
    initial: ArrayView1<T>,
    dt: f64,
    n_steps: usize,
) -> Result<Array2<T>>
where
    T: Scalar,
    F: FnMut(ArrayView1<T>, &mut Array1<T>),
{
    if dt <= 0.0 {
        return Err(Error::config(format!("dt must be positive, got {dt}")));
    }
    if n_steps == 0 {
        return Err(Error::config("n_steps must be >= 1"));
    }
    let n = initial.len();
    let h = T::cast(dt);
    let half = T::cast(0.5);
    let sixth = T::cast(1.0 / 6.0);
    let two = T::cast(2.0);

    let mut states = Array2::zeros((n_steps + 1, n));
    states.row_mut(0).assign(&initial);

    let mut v = initial.to_owned();
    let mut k1 = Array1::zeros(n);
    let mut k2 = Array1::zeros(n);
    let mut k3 = Array1::zeros(n);
    let mut k4 = Array1::zeros(n);
    let mut stage = Array1::zeros(n);

    for step in 0..n_steps {
        rhs(v.view(), &mut k1);
        for i in 0..n {
            stage[i] = v[i] + half * h * k1[i];
        }
        rhs(stage.view(), &mut k2);
        for i in 0..n {
            stage[i] = v[i] + half * h * k2[i];
        }
        rhs(stage.view(), &mut k3);
        for i in 0..n {
            stage[i] = v[i] + h * k3[i];
        }
        rhs(stage.view(), &mut k4);
        for i in 0..n {
            v[i] += h * sixth * (k1[i] + two * (k2[i] + k3[i]) + k4[i]);
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Blowup { step: step + 1 });
        }
        states.row_mut(step + 1).assign(&v);
    }
    Ok(states)
}

/// Advance a single RK4 step in place; used by long spinups that do not
/// record intermediate states.
pub fn rk4_step_in_place<T, F>(mut rhs: F, v: &mut Array1<T>, dt: f64)
where
    T: Scalar,
    F: FnMut(ArrayView1<T>, &mut Array1<T>),
{
    let n = v.len();
    let h = T::cast(dt);
    let half = T::cast(0.5);
    let sixth = T::cast(1.0 / 6.0);
    let two = T::cast(2.0);
    let mut k1 = Array1::zeros(n);
    let mut k2 = Array1::zeros(n);
    let mut k3 = Array1::zeros(n);
    let mut k4 = Array1::zeros(n);
    let mut stage = Array1::zeros(n);
    rhs(v.view(), &mut k1);
    for i in 0..n {
        stage[i] = v[i] + half * h * k1[i];
    }
    rhs(stage.view(), &mut k2);
    for i in 0..n {
        stage[i] = v[i] + half * h * k2[i];
    }
    rhs(stage.view(), &mut k3);
    for i in 0..n {
        stage[i] = v[i] + h * k3[i];
    }
    rhs(stage.view(), &mut k4);
    for i in 0..n {
        v[i] += h * sixth * (k1[i] + two * (k2[i] + k3[i]) + k4[i]);
    }
}
