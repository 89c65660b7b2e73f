//! Univariate Gaussian mixtures: EM fitting, BIC scoring and selection of the
//! component count.
//!
//! Components are always returned sorted by ascending mean, so the last one is
//! the high-loss component.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when the log-likelihood improves by less than this.
    pub tolerance: f64,
    /// Extra jittered-quantile starts; 0 uses the deterministic start only.
    pub restarts: usize,
    pub restart_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            tolerance: 1e-6,
            restarts: 0,
            restart_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Every observation was identical, so all components collapsed.
    pub degenerate: bool,
    /// Log-likelihood at the start of each EM iteration.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    /// Index of the component with the largest mean.
    pub fn highest_component(&self) -> usize {
        self.k() - 1
    }

    pub fn log_density(&self, x: f64) -> f64 {
        log_sum_exp(&self.weighted_log_densities(x))
    }

    fn weighted_log_densities(&self, x: f64) -> Vec<f64> {
        (0..self.k())
            .map(|j| self.weights[j].ln() + log_normal(x, self.means[j], self.variances[j]))
            .collect()
    }

    fn sort_by_mean(&mut self) {
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| self.means[a].total_cmp(&self.means[b]));
        self.weights = order.iter().map(|&j| self.weights[j]).collect();
        self.means = order.iter().map(|&j| self.means[j]).collect();
        self.variances = order.iter().map(|&j| self.variances[j]).collect();
    }
}

/// Posterior component probabilities, one row of `k` entries per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    k: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.k)
    }

    /// Posterior of component `j` for every observation.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

fn log_normal(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * PI * variance).ln() + d * d / variance)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// E-step: fills `resp` and returns the log-likelihood of the current parameters.
fn expectation(model: &GmmModel, xs: &[f64], resp: &mut [f64]) -> f64 {
    let k = model.k();
    let mut total = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let logs = model.weighted_log_densities(x);
        let lse = log_sum_exp(&logs);
        total += lse;
        for (r, l) in resp[i * k..(i + 1) * k].iter_mut().zip(&logs) {
            *r = (l - lse).exp();
        }
    }
    total
}

fn maximization(model: &mut GmmModel, xs: &[f64], resp: &[f64]) {
    let k = model.k();
    let n = xs.len() as f64;
    for j in 0..k {
        let mut nk = 0.0;
        let mut sum = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let w = resp[i * k + j];
            nk += w;
            sum += w * x;
        }
        model.weights[j] = nk / n;
        // A component with no mass keeps its location and contributes nothing.
        if nk <= f64::MIN_POSITIVE {
            continue;
        }
        let mean = sum / nk;
        let mut sq = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let d = x - mean;
            sq += resp[i * k + j] * d * d;
        }
        model.means[j] = mean;
        model.variances[j] = (sq / nk).max(VARIANCE_FLOOR);
    }
    let total: f64 = model.weights.iter().sum();
    for w in &mut model.weights {
        *w /= total;
    }
}

fn validate_observations(xs: &[f64], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Fit("component count must be at least 1".into()));
    }
    if xs.len() < k {
        return Err(Error::Fit(format!(
            "{} observations cannot support {k} components",
            xs.len()
        )));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Fit("observations must be finite".into()));
    }
    Ok(())
}

fn run_em(xs: &[f64], mut model: GmmModel, options: &FitOptions) -> GmmModel {
    let k = model.k();
    let mut resp = vec![0.0; xs.len() * k];
    let mut previous = f64::NEG_INFINITY;
    for iter in 1..=options.max_iterations {
        let ll = expectation(&model, xs, &mut resp);
        model.trace.push(ll);
        model.iterations = iter;
        if ll - previous < options.tolerance {
            model.converged = true;
            break;
        }
        previous = ll;
        maximization(&mut model, xs, &resp);
    }
    model.log_likelihood = xs.iter().map(|&x| model.log_density(x)).sum();
    model
}

fn closed_form_single(xs: &[f64]) -> GmmModel {
    let (mean, var) = mean_and_variance(xs);
    let mut model = GmmModel {
        weights: vec![1.0],
        means: vec![mean],
        variances: vec![var.max(VARIANCE_FLOOR)],
        log_likelihood: 0.0,
        iterations: 1,
        converged: true,
        degenerate: var == 0.0,
        trace: Vec::new(),
    };
    model.log_likelihood = xs.iter().map(|&x| model.log_density(x)).sum();
    model.trace.push(model.log_likelihood);
    model
}

fn initial_model(
    sorted: &[f64],
    k: usize,
    overall_var: f64,
    jitter: Option<&mut ChaCha8Rng>,
) -> GmmModel {
    let mut probs: Vec<f64> = (1..=k).map(|j| (j as f64 - 0.5) / k as f64).collect();
    if let Some(rng) = jitter {
        let half = 0.5 / k as f64;
        for p in &mut probs {
            *p = (*p + rng.random_range(-half..half)).clamp(0.0, 1.0);
        }
    }
    GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: probs.iter().map(|&p| quantile(sorted, p)).collect(),
        variances: vec![overall_var.max(VARIANCE_FLOOR); k],
        log_likelihood: f64::NEG_INFINITY,
        iterations: 0,
        converged: false,
        degenerate: false,
        trace: Vec::new(),
    }
}

/// Fits a `k`-component mixture by EM from a quantile initialisation.
///
/// Means start at the `(j − 0.5)/k` quantiles with equal weights and the
/// overall variance. Variances are floored at [`VARIANCE_FLOOR`] on every
/// M-step. With `k = 1` the closed-form maximum-likelihood fit is returned.
pub fn fit_em(xs: &[f64], k: usize, options: &FitOptions) -> Result<GmmModel> {
    validate_observations(xs, k)?;
    if k == 1 {
        return Ok(closed_form_single(xs));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (_, overall_var) = mean_and_variance(xs);

    let mut best = run_em(xs, initial_model(&sorted, k, overall_var, None), options);
    if options.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(options.restart_seed);
        for _ in 0..options.restarts {
            let start = initial_model(&sorted, k, overall_var, Some(&mut rng));
            let candidate = run_em(xs, start, options);
            if candidate.log_likelihood > best.log_likelihood {
                best = candidate;
            }
        }
    }
    best.degenerate = sorted[0] == sorted[sorted.len() - 1];
    best.sort_by_mean();
    Ok(best)
}

/// Number of free parameters of a univariate `k`-component mixture.
pub fn parameter_count(k: usize) -> usize {
    3 * k - 1
}

/// `−2 ln L + (3k − 1) ln n`.
pub fn bic(model: &GmmModel, n: usize) -> f64 {
    bic_from(model.log_likelihood, model.k(), n)
}

pub fn bic_from(log_likelihood: f64, k: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + parameter_count(k) as f64 * (n as f64).ln()
}

/// The lowest-BIC fit together with every candidate's score.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub model: GmmModel,
    /// BIC of `k = 1..=k_max`, in order.
    pub bics: Vec<f64>,
}

impl Selection {
    pub fn k(&self) -> usize {
        self.model.k()
    }
}

/// Fits `k = 1..=k_max` and keeps the fit with the lowest BIC; ties go to the smaller `k`.
pub fn select_model(xs: &[f64], k_max: usize, options: &FitOptions) -> Result<Selection> {
    if k_max == 0 {
        return Err(Error::Fit("k_max must be at least 1".into()));
    }
    validate_observations(xs, k_max)?;
    let mut bics = Vec::with_capacity(k_max);
    let mut best: Option<(f64, GmmModel)> = None;
    for k in 1..=k_max {
        let model = fit_em(xs, k, options)?;
        let score = bic(&model, xs.len());
        bics.push(score);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, model));
        }
    }
    let (_, model) = best.expect("k_max >= 1");
    Ok(Selection { model, bics })
}

/// Bayes responsibilities of each observation under `model`.
pub fn posteriors(model: &GmmModel, xs: &[f64]) -> Responsibilities {
    let k = model.k();
    let mut values = vec![0.0; xs.len() * k];
    expectation(model, xs, &mut values);
    Responsibilities { k, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn opts() -> FitOptions {
        FitOptions::default()
    }

    /// Draws from `w·N(m1, s1²) + (1 − w)·N(m2, s2²)`.
    pub(crate) fn bimodal(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Normal::new(0.3, 0.05).unwrap();
        let b = Normal::new(2.0, 0.3).unwrap();
        (0..n)
            .map(|_| {
                if rng.random::<f64>() < 0.7 {
                    a.sample(&mut rng)
                } else {
                    b.sample(&mut rng)
                }
            })
            .collect()
    }

    #[test]
    fn separated_point_masses() {
        let xs = [0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 10.0];
        let m = fit_em(&xs, 2, &opts()).unwrap();
        assert!((m.weights[0] - 0.5).abs() < 1e-9 && (m.weights[1] - 0.5).abs() < 1e-9);
        assert!(m.means[0].abs() < 1e-6 && (m.means[1] - 10.0).abs() < 1e-6);
        assert_eq!(m.variances, vec![VARIANCE_FLOOR, VARIANCE_FLOOR]);
        assert!(m.converged);
    }

    #[test]
    fn single_component_is_closed_form() {
        let xs = [1.0, 2.5, -0.5, 4.0, 3.25];
        let m = fit_em(&xs, 1, &opts()).unwrap();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 5.0;
        assert_eq!(m.means[0], mean);
        assert_eq!(m.variances[0], var);
        assert_eq!(m.weights[0], 1.0);
    }

    #[test]
    fn identical_observations_flag_degenerate() {
        let xs = [2.0; 6];
        let m = fit_em(&xs, 2, &opts()).unwrap();
        assert!(m.degenerate && m.converged);
        assert!(m.variances.iter().all(|&v| v == VARIANCE_FLOOR));
    }

    #[test]
    fn too_few_observations() {
        assert!(matches!(fit_em(&[1.0], 2, &opts()), Err(Error::Fit(_))));
        assert!(matches!(
            fit_em(&[f64::NAN, 1.0], 1, &opts()),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn recovers_known_mixture() {
        let xs = bimodal(42, 2000);
        let m = fit_em(&xs, 2, &opts()).unwrap();
        assert!((m.weights[0] - 0.7).abs() <= 0.03, "{m:?}");
        assert!((m.means[0] - 0.3).abs() <= 0.02, "{m:?}");
        assert!((m.means[1] - 2.0).abs() <= 0.06, "{m:?}");
    }

    #[test]
    fn bic_formula() {
        assert!((bic_from(-100.0, 2, 1000) - 234.5388).abs() < 1e-4);
        let n = 500;
        let diff = bic_from(-42.0, 2, n) - bic_from(-42.0, 1, n);
        assert!((diff - 3.0 * (n as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn bic_matches_recomputation() {
        let xs = bimodal(3, 300);
        let m = fit_em(&xs, 3, &opts()).unwrap();
        let ll: f64 = xs
            .iter()
            .map(|&x| {
                (0..3)
                    .map(|j| {
                        m.weights[j] * (-(x - m.means[j]).powi(2) / (2.0 * m.variances[j])).exp()
                            / (2.0 * PI * m.variances[j]).sqrt()
                    })
                    .sum::<f64>()
                    .ln()
            })
            .sum();
        let want = -2.0 * ll + 8.0 * 300f64.ln();
        assert!((bic(&m, 300) - want).abs() < 1e-8);
    }

    #[test]
    fn tiny_sample_prefers_one_component() {
        let sel = select_model(&[1.5, 1.5], 2, &opts()).unwrap();
        assert_eq!(sel.k(), 1);
    }

    #[test]
    fn posterior_symmetry_and_certainty() {
        let m = GmmModel {
            weights: vec![0.5, 0.5],
            means: vec![0.0, 10.0],
            variances: vec![1.0, 1.0],
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
            degenerate: false,
            trace: Vec::new(),
        };
        let r = posteriors(&m, &[0.0, 5.0]);
        assert!(r.row(0)[0] > 0.999);
        assert!((r.row(1)[0] - 0.5).abs() < 1e-9 && (r.row(1)[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn restarts_never_lower_likelihood() {
        let xs = bimodal(8, 400);
        let plain = fit_em(&xs, 3, &opts()).unwrap();
        let multi = fit_em(
            &xs,
            3,
            &FitOptions {
                restarts: 3,
                restart_seed: 1,
                ..opts()
            },
        )
        .unwrap();
        assert!(multi.log_likelihood >= plain.log_likelihood);
    }
}
