//! Bayesian optimization: Latin-hypercube initial design, GP surrogate,
//! expected-improvement acquisition maximized by seeded multi-start local
//! search. Minimizes a black-box cost over a box-bounded space.

use super::gp::GpModel;
use crate::error::{Error, Result};
use crate::rng::CounterRng;
use ndarray::{Array1, Array2};

/// One search dimension; `log_scale` maps the unit interval through a
/// log-uniform transform.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamBound {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub log_scale: bool,
}

impl ParamBound {
    pub fn new(name: &str, low: f64, high: f64, log_scale: bool) -> Self {
        ParamBound {
            name: name.to_string(),
            low,
            high,
            log_scale,
        }
    }

    fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if self.log_scale {
            (self.low.ln() + u * (self.high.ln() - self.low.ln())).exp()
        } else {
            self.low + u * (self.high - self.low)
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SearchSpace {
    pub bounds: Vec<ParamBound>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::config("search space has no dimensions"));
        }
        for b in &self.bounds {
            if !(b.low < b.high) {
                return Err(Error::config(format!(
                    "bound '{}': low {} must be below high {}",
                    b.name, b.low, b.high
                )));
            }
            if b.log_scale && b.low <= 0.0 {
                return Err(Error::config(format!(
                    "bound '{}': log scale requires positive bounds",
                    b.name
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(unit)
            .map(|(b, &u)| b.from_unit(u))
            .collect()
    }
}

/// Evaluation budget; the surrogate needs at least two initial points.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptBudget {
    pub n_initial: usize,
    pub n_iterations: usize,
    pub seed: u64,
}

impl OptBudget {
    pub fn validate(&self) -> Result<()> {
        if self.n_initial < 2 {
            return Err(Error::config("n_initial must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Evaluation {
    /// Position in the unit cube.
    pub unit: Vec<f64>,
    /// Position in parameter units.
    pub params: Vec<f64>,
    pub cost: f64,
    /// How this candidate was proposed (design, surrogate, fallback).
    pub origin: String,
}

#[derive(Debug, Clone)]
pub struct OptRun {
    pub evaluations: Vec<Evaluation>,
    pub best_index: usize,
}

impl OptRun {
    pub fn best(&self) -> &Evaluation {
        &self.evaluations[self.best_index]
    }
}

/// Seeded Latin hypercube in the unit cube.
pub fn latin_hypercube(n: usize, dim: usize, rng: &mut CounterRng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut slots: Vec<usize> = (0..n).collect();
        // Fisher-Yates with the counter rng
        for i in (1..n).rev() {
            let j = rng.index(i + 1);
            slots.swap(i, j);
        }
        for (i, point) in points.iter_mut().enumerate() {
            point[d] = (slots[i] as f64 + rng.uniform()) / n as f64;
        }
    }
    points
}

/// Standard normal CDF via a rational erf approximation (abs error < 2e-7).
fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    sign * (1.0 - poly * (-x * x).exp())
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement below `best` for a minimization problem.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    if sd <= 1e-15 {
        return (best - mean).max(0.0);
    }
    let z = (best - mean) / sd;
    (sd * (z * normal_cdf(z) + normal_pdf(z))).max(0.0)
}

/// Minimize `cost` over `space`. Prior evaluations (for resumed runs) seed
/// the surrogate; the returned log contains only new evaluations appended
/// to the priors, and `best_index` covers all of them.
pub fn bayes_optimize<F>(
    space: &SearchSpace,
    budget: &OptBudget,
    prior: &[Evaluation],
    mut cost: F,
) -> Result<OptRun>
where
    F: FnMut(&[f64]) -> f64,
{
    space.validate()?;
    budget.validate()?;
    let dim = space.dim();
    let mut rng = CounterRng::new(budget.seed, 0xba1e);
    let mut evaluations: Vec<Evaluation> = prior.to_vec();

    let n_design = budget.n_initial.saturating_sub(prior.len());
    for unit in latin_hypercube(n_design, dim, &mut rng) {
        let params = space.from_unit(&unit);
        let c = cost(&params);
        evaluations.push(Evaluation {
            unit,
            params,
            cost: c,
            origin: "design".into(),
        });
    }

    for _ in 0..budget.n_iterations {
        let proposal = propose(space, &evaluations, &mut rng);
        let (unit, origin) = proposal;
        let params = space.from_unit(&unit);
        let c = cost(&params);
        evaluations.push(Evaluation {
            unit,
            params,
            cost: c,
            origin,
        });
    }

    let best_index = argmin(&evaluations)?;
    Ok(OptRun {
        evaluations,
        best_index,
    })
}

fn argmin(evals: &[Evaluation]) -> Result<usize> {
    evals
        .iter()
        .enumerate()
        .filter(|(_, e)| e.cost.is_finite())
        .min_by(|a, b| a.1.cost.partial_cmp(&b.1.cost).unwrap())
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numerical("no finite evaluation in optimization log".into()))
}

fn propose(
    space: &SearchSpace,
    evaluations: &[Evaluation],
    rng: &mut CounterRng,
) -> (Vec<f64>, String) {
    let dim = space.dim();
    let finite: Vec<&Evaluation> = evaluations.iter().filter(|e| e.cost.is_finite()).collect();
    if finite.len() < 2 {
        return (
            (0..dim).map(|_| rng.uniform()).collect(),
            "fallback_random".into(),
        );
    }
    let x = Array2::from_shape_fn((finite.len(), dim), |(i, j)| finite[i].unit[j]);
    let y = Array1::from_iter(finite.iter().map(|e| e.cost));
    let gp = match GpModel::fit(x, &y, rng.next_u64()) {
        Ok(gp) => gp,
        Err(_) => {
            // GP failure falls back to random sampling for this iteration
            return (
                (0..dim).map(|_| rng.uniform()).collect(),
                "fallback_random".into(),
            );
        }
    };
    let best_cost = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let n_candidates = 256 * dim;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cand in latin_hypercube(n_candidates, dim, rng) {
        let (mean, sd) = gp.predict(&cand);
        let ei = expected_improvement(mean, sd, best_cost);
        if best.as_ref().map_or(true, |(b, _)| ei > *b) {
            best = Some((ei, cand));
        }
    }
    let (best_ei, best_cand) = best.expect("candidates nonempty");
    if best_ei <= 0.0 {
        return (
            (0..dim).map(|_| rng.uniform()).collect(),
            "fallback_random".into(),
        );
    }
    // local polish around the best candidate
    let mut polished = best_cand.clone();
    let mut polished_ei = best_ei;
    let mut step = 0.05;
    for _ in 0..3 {
        for d in 0..dim {
            for dir in [-1.0, 1.0] {
                let mut trial = polished.clone();
                trial[d] = (trial[d] + dir * step).clamp(0.0, 1.0);
                let (mean, sd) = gp.predict(&trial);
                let ei = expected_improvement(mean, sd, best_cost);
                if ei > polished_ei {
                    polished_ei = ei;
                    polished = trial;
                }
            }
        }
        step *= 0.5;
    }
    (polished, "surrogate_ei".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_space(dim: usize) -> SearchSpace {
        SearchSpace {
            bounds: (0..dim)
                .map(|i| ParamBound::new(&format!("x{i}"), 0.0, 1.0, false))
                .collect(),
        }
    }

    #[test]
    fn latin_hypercube_stratifies() {
        let mut rng = CounterRng::new(3, 0);
        let pts = latin_hypercube(10, 2, &mut rng);
        for d in 0..2 {
            let mut bins = vec![0usize; 10];
            for p in &pts {
                bins[(p[d] * 10.0) as usize % 10] += 1;
            }
            assert!(bins.iter().all(|&c| c == 1), "dim {d}: {bins:?}");
        }
    }

    #[test]
    fn quadratic_minimum_found_within_tolerance() {
        // dense-grid oracle: the true minimum of (x - 0.3)^2 on [0, 1]
        let oracle = (0..1000)
            .map(|i| i as f64 / 999.0)
            .min_by(|a, b| {
                let fa = (a - 0.3f64).powi(2);
                let fb = (b - 0.3f64).powi(2);
                fa.partial_cmp(&fb).unwrap()
            })
            .unwrap();
        assert!((oracle - 0.3).abs() < 1e-3);

        let space = unit_space(1);
        let budget = OptBudget {
            n_initial: 10,
            n_iterations: 10,
            seed: 7,
        };
        let run = bayes_optimize(&space, &budget, &[], |p| (p[0] - 0.3).powi(2)).unwrap();
        let best = run.best();
        assert!(
            (best.params[0] - 0.3).abs() < 0.05,
            "best at {}",
            best.params[0]
        );
        assert_eq!(run.evaluations.len(), 20);
    }

    #[test]
    fn zero_iterations_returns_best_of_design() {
        let space = unit_space(2);
        let budget = OptBudget {
            n_initial: 8,
            n_iterations: 0,
            seed: 4,
        };
        let run =
            bayes_optimize(&space, &budget, &[], |p| p[0] + p[1]).unwrap();
        assert_eq!(run.evaluations.len(), 8);
        assert!(run.evaluations.iter().all(|e| e.origin == "design"));
        let min = run
            .evaluations
            .iter()
            .map(|e| e.cost)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(run.best().cost, min);
    }

    #[test]
    fn best_so_far_is_monotone() {
        let space = unit_space(2);
        let budget = OptBudget {
            n_initial: 6,
            n_iterations: 6,
            seed: 11,
        };
        let run = bayes_optimize(&space, &budget, &[], |p| {
            (p[0] - 0.6).powi(2) + (p[1] - 0.2).powi(2)
        })
        .unwrap();
        let mut best = f64::INFINITY;
        let mut path = Vec::new();
        for e in &run.evaluations {
            best = best.min(e.cost);
            path.push(best);
        }
        for w in path.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_eq!(run.best().cost, best);
    }

    #[test]
    fn determinism_of_full_run() {
        let space = unit_space(3);
        let budget = OptBudget {
            n_initial: 5,
            n_iterations: 4,
            seed: 13,
        };
        let f = |p: &[f64]| (p[0] - 0.5).powi(2) + (p[1] - 0.1).powi(2) + p[2];
        let a = bayes_optimize(&space, &budget, &[], f).unwrap();
        let b = bayes_optimize(&space, &budget, &[], f).unwrap();
        assert_eq!(a.evaluations.len(), b.evaluations.len());
        for (ea, eb) in a.evaluations.iter().zip(b.evaluations.iter()) {
            assert_eq!(ea.unit, eb.unit);
            assert_eq!(ea.cost, eb.cost);
        }
    }

    #[test]
    fn ei_nonnegative_and_small_at_observed_points() {
        let x = Array2::from_shape_vec((5, 1), vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let y = Array1::from_iter(x.column(0).iter().map(|&v: &f64| (v - 0.4).powi(2)));
        let gp = GpModel::fit(x.clone(), &y, 3).unwrap();
        let best = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let y_spread = 0.36f64; // range of the quadratic on [0,1]
        for i in 0..5 {
            let (mean, sd) = gp.predict(&[x[[i, 0]]]);
            let ei = expected_improvement(mean, sd, best);
            assert!(ei >= 0.0);
            assert!(ei <= 0.05 * y_spread, "EI at observed point {i}: {ei}");
        }
        for &p in &[0.1, 0.37, 0.62, 0.9] {
            let (mean, sd) = gp.predict(&[p]);
            assert!(expected_improvement(mean, sd, best) >= 0.0);
        }
    }

    #[test]
    fn log_scale_bounds_map_correctly() {
        let b = ParamBound::new("beta", 1e-9, 1e-2, true);
        assert!((b.from_unit(0.0) - 1e-9).abs() < 1e-24);
        assert!((b.from_unit(1.0) - 1e-2).abs() < 1e-12);
        let mid = b.from_unit(0.5);
        // geometric midpoint
        assert!((mid.ln() - 0.5 * (1e-9f64.ln() + 1e-2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn resumes_from_prior_evaluations() {
        let space = unit_space(1);
        let budget = OptBudget {
            n_initial: 4,
            n_iterations: 2,
            seed: 21,
        };
        let f = |p: &[f64]| (p[0] - 0.8).powi(2);
        let first = bayes_optimize(&space, &budget, &[], f).unwrap();
        let resumed = bayes_optimize(&space, &budget, &first.evaluations, f).unwrap();
        // design already satisfied by priors: only the 2 new iterations
        assert_eq!(
            resumed.evaluations.len(),
            first.evaluations.len() + 2
        );
    }
}
