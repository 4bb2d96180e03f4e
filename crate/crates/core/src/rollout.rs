//! Shared forecast driver: teacher-forced spinup followed by autonomous
//! rollout with halo exchange between groups at every step.

use crate::error::{Error, Result};
use crate::parallel::DomainDecomposition;
use crate::trajectory::Trajectory;
use crate::Scalar;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};

/// Per-step emulator interface shared by the ESN and NVAR architectures.
///
/// `observe` advances the hidden state given one input row per group;
/// `readout` maps the current hidden state to one output row per group.
/// Observing the input at time `n` makes the readout the prediction for
/// time `n + 1`.
pub trait StepModel<T: Scalar> {
    type State;

    fn begin(&self) -> Self::State;

    /// Rows of teacher-forced context required before the first readout is
    /// meaningful (lagged architectures need their history filled).
    fn min_context(&self) -> usize;

    /// `inputs` has shape `(n_groups, n_input_local)`.
    fn observe(&self, state: &mut Self::State, inputs: ArrayView2<T>);

    /// Write predictions into `out` of shape `(n_groups, n_output_local)`.
    fn readout(&self, state: &Self::State, out: ArrayViewMut2<T>);
}

/// Result of an autonomous rollout, in the model's (normalized) space.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast<T> {
    /// `(n_recorded, n_state_global)`; rows are consecutive forecast steps.
    pub states: Array2<T>,
    pub dt_effective: f64,
    /// Forecast step index at which the output first went non-finite; all
    /// recorded rows precede it.
    pub diverged_at: Option<usize>,
}

impl<T: Scalar> Forecast<T> {
    pub fn n_steps(&self) -> usize {
        self.states.nrows()
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn into_trajectory(self) -> Result<Trajectory<T>> {
        Trajectory::new(self.states, self.dt_effective, 1)
    }
}

fn gather_grouped<T: Scalar>(
    decomp: &DomainDecomposition,
    global: &[T],
    inputs: &mut Array2<T>,
) {
    for (k, mut row) in inputs.rows_mut().into_iter().enumerate() {
        let dst = row.as_slice_mut().expect("contiguous input row");
        decomp.gather_into(global, k, dst);
    }
}

/// Run the teacher-forced window and then `n_steps` of autonomous
/// prediction. The window must end at the forecast initial condition; the
/// first returned row is the prediction one effective step past it.
///
/// A non-finite prediction truncates the forecast and records the step
/// index instead of failing.
pub fn predict_autonomous<T, M>(
    model: &M,
    decomp: &DomainDecomposition,
    initial_window: &Trajectory<T>,
    n_steps: usize,
) -> Result<Forecast<T>>
where
    T: Scalar,
    M: StepModel<T>,
{
    if initial_window.n_state() != decomp.global_len() {
        return Err(Error::shape(
            format!("window states of length {}", decomp.global_len()),
            format!("{}", initial_window.n_state()),
        ));
    }
    if initial_window.n_time() < model.min_context().max(1) {
        return Err(Error::Warmup(format!(
            "initial window has {} rows, model needs {}",
            initial_window.n_time(),
            model.min_context().max(1)
        )));
    }

    let n_groups = decomp.n_groups();
    let mut state = model.begin();
    let mut inputs = Array2::zeros((n_groups, decomp.input_len()));
    let mut outputs = Array2::zeros((n_groups, decomp.output_len()));
    let mut global = vec![T::zero(); decomp.global_len()];

    // teacher-forced spinup over the whole window
    for n in 0..initial_window.n_time() {
        let row = initial_window.state(n);
        let row_slice = row.as_slice().expect("contiguous state row");
        gather_grouped(decomp, row_slice, &mut inputs);
        model.observe(&mut state, inputs.view());
    }

    let mut recorded = Array2::zeros((n_steps, decomp.global_len()));
    let mut diverged_at = None;
    let mut n_done = 0;
    for step in 0..n_steps {
        model.readout(&state, outputs.view_mut());
        if outputs.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(step);
            break;
        }
        decomp.scatter_rows_into(&outputs, &mut global);
        recorded
            .row_mut(step)
            .assign(&ndarray::ArrayView1::from(&global[..]));
        n_done = step + 1;
        if step + 1 < n_steps {
            // halo exchange: every group reads its neighbors' predictions
            gather_grouped(decomp, &global, &mut inputs);
            model.observe(&mut state, inputs.view());
        }
    }

    let states = if n_done == n_steps {
        recorded
    } else {
        recorded.slice(ndarray::s![..n_done, ..]).to_owned()
    };
    Ok(Forecast {
        states,
        dt_effective: initial_window.dt_effective(),
        diverged_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parallel::decompose;
    use crate::rng::CounterRng;

    /// Test model: per-group linear map of the current input, the
    /// restriction of a global linear stencil.
    struct LinearModel {
        weights: Vec<Array2<f64>>, // per group (n_out, n_in)
        n_input: usize,
    }

    impl StepModel<f64> for LinearModel {
        type State = Array2<f64>; // last observed inputs (n_groups, n_in)

        fn begin(&self) -> Self::State {
            Array2::zeros((self.weights.len(), self.n_input))
        }

        fn min_context(&self) -> usize {
            1
        }

        fn observe(&self, state: &mut Self::State, inputs: ArrayView2<f64>) {
            state.assign(&inputs);
        }

        fn readout(&self, state: &Self::State, mut out: ArrayViewMut2<f64>) {
            for (k, w) in self.weights.iter().enumerate() {
                let u = state.row(k);
                for (i, o) in out.row_mut(k).iter_mut().enumerate() {
                    *o = w.row(i).dot(&u);
                }
            }
        }
    }

    /// Global rule: v'(c) = 0.5 v(c) + 0.25 v(west) + 0.25 v(east), periodic
    /// in x. Local radius 1, so a halo of 1 captures it exactly.
    fn stencil_weights(decomp: &DomainDecomposition) -> LinearModel {
        let (nx, ny, _) = decomp.dims();
        let mut weights = Vec::new();
        for k in 0..decomp.n_groups() {
            let view = decomp.group(k);
            let mut w = Array2::zeros((decomp.output_len(), decomp.input_len()));
            for (slot, &cell) in view.interior.iter().enumerate() {
                let x = cell % nx;
                let y = (cell / nx) % ny;
                let z = cell / (nx * ny);
                let west = ((x + nx - 1) % nx) + nx * (y + ny * z);
                let east = ((x + 1) % nx) + nx * (y + ny * z);
                // a wrapped halo may list a source cell twice; take the
                // first listing so the restriction stays exact
                let first = |target: usize| view.input.iter().position(|&s| s == target);
                for (target, weight) in [(cell, 0.5), (west, 0.25), (east, 0.25)] {
                    let j = first(target).expect("stencil source inside halo");
                    w[[slot, j]] += weight;
                }
            }
            weights.push(w);
        }
        LinearModel {
            weights,
            n_input: decomp.input_len(),
        }
    }

    fn window(n_state: usize, seed: u64) -> Trajectory<f64> {
        let mut rng = CounterRng::new(seed, 0);
        let data = Array2::from_shape_fn((3, n_state), |_| rng.uniform_sym());
        Trajectory::new(data, 1.0, 1).unwrap()
    }

    #[test]
    fn grouped_rollout_matches_single_group() {
        let multi = decompose(8, 8, 1, 4, 4, 1).unwrap();
        let single = decompose(8, 8, 1, 8, 8, 0).unwrap();
        let w = window(64, 5);
        let fc_multi =
            predict_autonomous(&stencil_weights(&multi), &multi, &w, 12).unwrap();
        let fc_single =
            predict_autonomous(&stencil_weights(&single), &single, &w, 12).unwrap();
        assert_eq!(fc_multi.diverged_at, None);
        for (a, b) in fc_multi.states.iter().zip(fc_single.states.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_steps_gives_empty_forecast() {
        let d = decompose(8, 4, 1, 4, 4, 1).unwrap();
        let fc = predict_autonomous(&stencil_weights(&d), &d, &window(32, 6), 0).unwrap();
        assert_eq!(fc.n_steps(), 0);
        assert!(!fc.diverged());
    }

    #[test]
    fn divergence_truncates_and_marks() {
        let d = decompose(4, 1, 1, 4, 1, 0).unwrap();
        // explosive map: v' = 3 v(c) => after enough steps overflows to inf
        let mut w = Array2::zeros((4, 4));
        for i in 0..4 {
            w[[i, i]] = 3.0;
        }
        let model = LinearModel {
            weights: vec![w],
            n_input: 4,
        };
        let window = {
            let data = Array2::from_elem((2, 4), 1e300);
            Trajectory::new(data, 1.0, 1).unwrap()
        };
        let fc = predict_autonomous(&model, &d, &window, 50).unwrap();
        assert!(fc.diverged());
        let k = fc.diverged_at.unwrap();
        assert!(k < 50);
        assert_eq!(fc.n_steps(), k);
        assert!(fc.states.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn window_too_short_for_context() {
        let d = decompose(4, 1, 1, 4, 1, 0).unwrap();
        struct Lagged;
        impl StepModel<f64> for Lagged {
            type State = ();
            fn begin(&self) {}
            fn min_context(&self) -> usize {
                4
            }
            fn observe(&self, _: &mut (), _: ArrayView2<f64>) {}
            fn readout(&self, _: &(), _: ArrayViewMut2<f64>) {}
        }
        match predict_autonomous(&Lagged, &d, &window(4, 7), 3) {
            Err(Error::Warmup(_)) => {}
            other => panic!("expected warmup error, got {other:?}"),
        }
    }
}
