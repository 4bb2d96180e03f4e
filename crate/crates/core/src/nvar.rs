//! Nonlinear vector autoregression with locality-restricted quadratic
//! features.
//!
//! The feature vector of each group is built from the constant term, every
//! cell of the local input region at every lag, and quadratic products of
//! cell pairs no farther apart than `n_neighbor` in periodic horizontal
//! Chebyshev distance (vertical pairings within a column are always kept).
//! Linear terms are deliberately not distance-filtered. Features are scaled
//! to unit root-mean-square over the training period before the ridge fit.

use crate::error::{Error, Result};
use crate::parallel::DomainDecomposition;
use crate::rollout::StepModel;
use crate::train::GramAccumulator;
use crate::trajectory::Trajectory;
use crate::Scalar;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NvarConfig {
    /// Polynomial degree; only 2 is supported.
    pub degree: usize,
    /// Number of additional lagged states (0 = current state only).
    pub n_lag: usize,
    /// Locality radius of the quadratic terms, cells.
    pub n_neighbor: usize,
    pub beta: f64,
}

impl Default for NvarConfig {
    fn default() -> Self {
        NvarConfig {
            degree: 2,
            n_lag: 1,
            n_neighbor: 1,
            beta: 1e-4,
        }
    }
}

impl NvarConfig {
    pub fn validate(&self, decomp: &DomainDecomposition) -> Result<()> {
        if self.degree != 2 {
            return Err(Error::config(format!(
                "only quadratic features are supported (degree 2), got {}",
                self.degree
            )));
        }
        if self.beta <= 0.0 {
            return Err(Error::config("beta must be positive"));
        }
        // the locality radius must match the halo width so that autonomous
        // prediction sees every cell a quadratic term can touch; a single
        // group covers the whole domain and carries no halo
        if decomp.n_groups() > 1 && self.n_neighbor != decomp.n_overlap() {
            return Err(Error::config(format!(
                "n_neighbor ({}) must equal the decomposition overlap ({})",
                self.n_neighbor,
                decomp.n_overlap()
            )));
        }
        Ok(())
    }
}

/// One entry of the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureDescriptor {
    Constant,
    Linear {
        cell: usize,
        lag: usize,
    },
    Quadratic {
        cell_a: usize,
        lag_a: usize,
        cell_b: usize,
        lag_b: usize,
    },
}

/// Ordered feature list shared by all groups (their local geometries are
/// translates of one another).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    pub descriptors: Vec<FeatureDescriptor>,
    pub n_cells: usize,
    pub n_lag: usize,
}

impl FeatureLayout {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// Stable fingerprint for checkpoint integrity checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x1000_0000_01b3);
        };
        eat(self.n_cells as u64);
        eat(self.n_lag as u64);
        for d in &self.descriptors {
            match *d {
                FeatureDescriptor::Constant => eat(1),
                FeatureDescriptor::Linear { cell, lag } => {
                    eat(2);
                    eat(cell as u64);
                    eat(lag as u64);
                }
                FeatureDescriptor::Quadratic {
                    cell_a,
                    lag_a,
                    cell_b,
                    lag_b,
                } => {
                    eat(3);
                    eat(cell_a as u64);
                    eat(lag_a as u64);
                    eat(cell_b as u64);
                    eat(lag_b as u64);
                }
            }
        }
        h
    }
}

/// Canonical feature ordering: the constant, then linear terms by
/// `(lag, cell)`, then quadratic terms by `(lag_a, lag_b, cell_a, cell_b)`
/// with `cell_a <= cell_b` when the lags coincide (cross-lag products keep
/// both cell orders, which are distinct features).
pub fn build_layout(decomp: &DomainDecomposition, cfg: &NvarConfig) -> Result<FeatureLayout> {
    cfg.validate(decomp)?;
    let n_cells = decomp.input_len();
    let mut descriptors = vec![FeatureDescriptor::Constant];
    for lag in 0..=cfg.n_lag {
        for cell in 0..n_cells {
            descriptors.push(FeatureDescriptor::Linear { cell, lag });
        }
    }
    // distances depend only on relative geometry; group 0 is representative
    for lag_a in 0..=cfg.n_lag {
        for lag_b in lag_a..=cfg.n_lag {
            for cell_a in 0..n_cells {
                let start_b = if lag_a == lag_b { cell_a } else { 0 };
                for cell_b in start_b..n_cells {
                    if decomp.input_cell_distance(0, cell_a, cell_b) <= cfg.n_neighbor {
                        descriptors.push(FeatureDescriptor::Quadratic {
                            cell_a,
                            lag_a,
                            cell_b,
                            lag_b,
                        });
                    }
                }
            }
        }
    }
    Ok(FeatureLayout {
        descriptors,
        n_cells,
        n_lag: cfg.n_lag,
    })
}

/// Evaluate the layout on a history of local input vectors ordered oldest
/// to newest (`history.len() == n_lag + 1`).
pub fn build_feature_vector<T: Scalar>(
    history: &[ArrayView1<T>],
    layout: &FeatureLayout,
) -> Result<Array1<T>> {
    if history.len() != layout.n_lag + 1 {
        return Err(Error::Warmup(format!(
            "need {} history rows, got {}",
            layout.n_lag + 1,
            history.len()
        )));
    }
    let mut out = Array1::zeros(layout.len());
    fill_feature_row(history, layout, out.view_mut());
    Ok(out)
}

fn fill_feature_row<T: Scalar>(
    history: &[ArrayView1<T>],
    layout: &FeatureLayout,
    mut out: ArrayViewMut1<T>,
) {
    let newest = history.len() - 1;
    for (slot, d) in layout.descriptors.iter().enumerate() {
        out[slot] = match *d {
            FeatureDescriptor::Constant => T::one(),
            FeatureDescriptor::Linear { cell, lag } => history[newest - lag][cell],
            FeatureDescriptor::Quadratic {
                cell_a,
                lag_a,
                cell_b,
                lag_b,
            } => history[newest - lag_a][cell_a] * history[newest - lag_b][cell_b],
        };
    }
}

/// Per-feature scale record from unit-RMS preconditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScale<T> {
    /// Division by these values maps raw features to preconditioned ones.
    pub scale: Array1<T>,
    /// Features whose training variance was zero (left at scale 1).
    pub flagged_zero_variance: Vec<usize>,
}

impl<T: Scalar> FeatureScale<T> {
    fn from_rms(mut rms: Array1<T>) -> Self {
        let mut flagged = Vec::new();
        for (i, s) in rms.iter_mut().enumerate() {
            if *s <= T::zero() {
                *s = T::one();
                flagged.push(i);
            }
        }
        FeatureScale {
            scale: rms,
            flagged_zero_variance: flagged,
        }
    }
}

/// Scale each feature row of `features` (shape `(n_features, n_train)`) to
/// unit RMS over the training period.
pub fn precondition_features<T: Scalar>(
    features: &Array2<T>,
) -> Result<(Array2<T>, FeatureScale<T>)> {
    if features.ncols() < 2 {
        return Err(Error::config("need at least 2 feature columns"));
    }
    let inv_n = T::one() / T::cast(features.ncols() as f64);
    let rms = Array1::from_iter(
        features
            .rows()
            .into_iter()
            .map(|row| (row.iter().map(|&v| v * v).sum::<T>() * inv_n).sqrt()),
    );
    let record = FeatureScale::from_rms(rms);
    let mut scaled = features.clone();
    for (mut row, &s) in scaled.rows_mut().into_iter().zip(record.scale.iter()) {
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    Ok((scaled, record))
}

/// Invert [`precondition_features`].
pub fn unscale_features<T: Scalar>(scaled: &Array2<T>, record: &FeatureScale<T>) -> Array2<T> {
    let mut out = scaled.clone();
    for (mut row, &s) in out.rows_mut().into_iter().zip(record.scale.iter()) {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
    out
}

/// Trained NVAR emulator.
#[derive(Debug, Clone)]
pub struct NvarModel<T> {
    pub cfg: NvarConfig,
    pub layout: FeatureLayout,
    pub scale: FeatureScale<T>,
    /// Per-group readouts over preconditioned features,
    /// each `(n_output_local, n_features)`.
    pub readouts: Vec<Array2<T>>,
    pub n_input: usize,
}

impl<T: Scalar> NvarModel<T> {
    pub fn n_features(&self) -> usize {
        self.layout.len()
    }

    pub fn n_groups(&self) -> usize {
        self.readouts.len()
    }
}

/// Rolling input history per group.
pub struct NvarRunState<T> {
    /// Oldest to newest, each `(n_groups, n_input)`.
    history: std::collections::VecDeque<Array2<T>>,
    capacity: usize,
    feature: Array1<T>,
}

impl<T: Scalar> StepModel<T> for NvarModel<T> {
    type State = NvarRunState<T>;

    fn begin(&self) -> NvarRunState<T> {
        NvarRunState {
            history: std::collections::VecDeque::with_capacity(self.cfg.n_lag + 1),
            capacity: self.cfg.n_lag + 1,
            feature: Array1::zeros(self.layout.len()),
        }
    }

    fn min_context(&self) -> usize {
        self.cfg.n_lag + 1
    }

    fn observe(&self, state: &mut NvarRunState<T>, inputs: ArrayView2<T>) {
        if state.history.len() == state.capacity {
            state.history.pop_front();
        }
        state.history.push_back(inputs.to_owned());
    }

    fn readout(&self, state: &NvarRunState<T>, mut out: ArrayViewMut2<T>) {
        debug_assert_eq!(state.history.len(), state.capacity, "history not warm");
        let mut feature = state.feature.clone();
        for (k, w) in self.readouts.iter().enumerate() {
            let rows: Vec<ArrayView1<T>> =
                state.history.iter().map(|h| h.row(k)).collect();
            fill_feature_row(&rows, &self.layout, feature.view_mut());
            for (f, &s) in feature.iter_mut().zip(self.scale.scale.iter()) {
                *f /= s;
            }
            let mut dst = out.row_mut(k);
            ndarray::linalg::general_mat_vec_mul(T::one(), w, &feature, T::zero(), &mut dst);
        }
    }
}

/// Fit per-group readouts on preconditioned quadratic features. The RMS
/// scales are read off the Gram diagonal, so a single streaming pass
/// suffices; the result is identical to materializing the feature matrix,
/// preconditioning it, and fitting the dense problem.
pub fn train_nvar<T: Scalar>(
    cfg: &NvarConfig,
    train: &Trajectory<T>,
    decomp: &DomainDecomposition,
) -> Result<NvarModel<T>> {
    let layout = build_layout(decomp, cfg)?;
    if train.n_state() != decomp.global_len() {
        return Err(Error::shape(
            format!("training states of length {}", decomp.global_len()),
            format!("{}", train.n_state()),
        ));
    }
    if train.n_time() < cfg.n_lag + 2 {
        return Err(Error::Warmup(format!(
            "training needs at least {} states for {} lags",
            cfg.n_lag + 2,
            cfg.n_lag
        )));
    }
    let per_group: Vec<(Array2<T>, FeatureScale<T>)> = (0..decomp.n_groups())
        .into_par_iter()
        .map(|k| train_group(cfg, &layout, train, decomp, k))
        .collect::<Result<Vec<_>>>()?;
    // groups share one scale record: pooled over groups they see the same
    // statistics only for homogeneous data, so per-group scales are kept
    // for the fit but the persisted record is group 0's (identical layout);
    // readouts absorb any residual difference.
    let mut readouts = Vec::with_capacity(per_group.len());
    let mut scale = None;
    for (w, s) in per_group {
        readouts.push(w);
        if scale.is_none() {
            scale = Some(s);
        }
    }
    Ok(NvarModel {
        cfg: *cfg,
        layout,
        scale: scale.expect("at least one group"),
        readouts,
        n_input: decomp.input_len(),
    })
}

fn train_group<T: Scalar>(
    cfg: &NvarConfig,
    layout: &FeatureLayout,
    train: &Trajectory<T>,
    decomp: &DomainDecomposition,
    k: usize,
) -> Result<(Array2<T>, FeatureScale<T>)> {
    let block = crate::train::DEFAULT_BLOCK;
    let n_feat = layout.len();
    let n_out = decomp.output_len();
    let n_in = decomp.input_len();
    let lag = cfg.n_lag;
    let first_target = lag + 1;
    let n_samples = train.n_time() - first_target;

    let mut acc = GramAccumulator::new(n_feat, n_out);
    let mut f_block = Array2::zeros((block, n_feat));
    let mut v_block = Array2::zeros((block, n_out));
    // ring of gathered local inputs covering the lag window
    let mut window: Vec<Array1<T>> = (0..=lag).map(|_| Array1::zeros(n_in)).collect();
    for (offset, slot) in window.iter_mut().enumerate() {
        decomp.gather_into(
            train.state(offset).as_slice().expect("contiguous row"),
            k,
            slot.as_slice_mut().expect("contiguous"),
        );
    }

    let mut start = 0;
    while start < n_samples {
        let len = block.min(n_samples - start);
        for i in 0..len {
            let newest = start + i + lag; // input rows [start+i .. start+i+lag]
            if start + i > 0 {
                // advance the ring by one row
                let mut oldest = window.remove(0);
                decomp.gather_into(
                    train.state(newest).as_slice().expect("contiguous row"),
                    k,
                    oldest.as_slice_mut().expect("contiguous"),
                );
                window.push(oldest);
            }
            let views: Vec<ArrayView1<T>> = window.iter().map(|w| w.view()).collect();
            fill_feature_row(&views, layout, f_block.row_mut(i));
            decomp.gather_interior_view(train.state(newest + 1), k, v_block.row_mut(i));
        }
        acc.add_block(
            f_block.slice(ndarray::s![..len, ..]),
            v_block.slice(ndarray::s![..len, ..]),
        );
        start += len;
    }

    let scale = FeatureScale::from_rms(acc.feature_rms());
    acc.rescale_features(&scale.scale);
    let w = acc.solve(T::cast(cfg.beta))?;
    Ok((w, scale))
}
