use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Samples per E-step work unit. Partial sums are reduced in chunk order, so
/// results do not depend on the thread count.
const CHUNK: usize = 1024;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GmmModel {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        let d = self.dim();
        if k == 0 || d == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::InvalidParameter("GMM has inconsistent component counts".into()));
        }
        if self.means.iter().chain(&self.variances).any(|v| v.len() != d) {
            return Err(Error::InvalidParameter("GMM has inconsistent dimensions".into()));
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("GMM weights must be positive".into()));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("GMM weights must sum to 1".into()));
        }
        if self.variances.iter().flatten().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("GMM variances must be positive".into()));
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("GMM means must be finite".into()));
        }
        Ok(())
    }

    fn log_norm_consts(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.variances)
            .map(|(w, var)| w.ln() - 0.5 * var.iter().map(|v| LN_2PI + v.ln()).sum::<f64>())
            .collect()
    }

    /// `log(w_k N(x; μ_k, σ²_k))` for every component.
    fn log_joint(&self, consts: &[f64], x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mean = &self.means[k];
            let var = &self.variances[k];
            let mut q = 0.0;
            for d in 0..x.len() {
                let diff = x[d] - mean[d];
                q += diff * diff / var[d];
            }
            *o = consts[k] - 0.5 * q;
        }
    }
}

/// Turns log-joints into posteriors in place; returns the log-sum.
fn softmax_in_place(v: &mut [f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
    max + sum.ln()
}

fn truncate_in_place(gamma: &mut [f64], floor: f64) {
    let mut kept = 0.0;
    for g in gamma.iter_mut() {
        if *g < floor {
            *g = 0.0;
        } else {
            kept += *g;
        }
    }
    if kept > 0.0 {
        gamma.iter_mut().for_each(|g| *g /= kept);
    }
}

/// Soft assignment of `x` to each component, computed in log space.
///
/// With `floor = Some(t)`, posteriors below `t` are zeroed and the rest
/// renormalized. The largest posterior is at least `1/K`, so it survives
/// any floor below that.
pub fn posteriors(model: &GmmModel, x: &[f64], floor: Option<f64>) -> Result<Vec<f64>> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x.len(),
        });
    }
    let mut g = vec![0.0; model.num_components()];
    model.log_joint(&model.log_norm_consts(), x, &mut g);
    softmax_in_place(&mut g);
    if let Some(t) = floor {
        truncate_in_place(&mut g, t);
    }
    Ok(g)
}

pub(crate) struct PosteriorEngine<'a> {
    model: &'a GmmModel,
    consts: Vec<f64>,
}

impl<'a> PosteriorEngine<'a> {
    pub fn new(model: &'a GmmModel) -> Self {
        PosteriorEngine {
            consts: model.log_norm_consts(),
            model,
        }
    }

    pub fn posteriors_into(&self, x: &[f64], floor: Option<f64>, out: &mut [f64]) {
        self.model.log_joint(&self.consts, x, out);
        softmax_in_place(out);
        if let Some(t) = floor {
            truncate_in_place(out, t);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub components: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the per-sample log-likelihood gain falls below
    /// `tol · |log-likelihood|`.
    pub tol: f64,
    /// Variance floor as a fraction of the mean per-dimension sample variance.
    pub variance_floor_ratio: f64,
    pub weight_floor: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        GmmParams {
            components: 256,
            seed: 0,
            max_iters: 100,
            tol: 1e-5,
            variance_floor_ratio: 1e-4,
            weight_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean per-sample log-likelihood before the first M-step and after
    /// every M-step.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Stats {
    loglik: f64,
    s0: Vec<f64>,
    s1: Vec<Vec<f64>>,
    s2: Vec<Vec<f64>>,
}

impl Stats {
    fn zeros(k: usize, d: usize) -> Self {
        Stats {
            loglik: 0.0,
            s0: vec![0.0; k],
            s1: vec![vec![0.0; d]; k],
            s2: vec![vec![0.0; d]; k],
        }
    }

    fn add(&mut self, other: &Stats) {
        self.loglik += other.loglik;
        for k in 0..self.s0.len() {
            self.s0[k] += other.s0[k];
            for d in 0..self.s1[k].len() {
                self.s1[k][d] += other.s1[k][d];
                self.s2[k][d] += other.s2[k][d];
            }
        }
    }
}

fn e_step(model: &GmmModel, data: &[Vec<f64>]) -> Stats {
    let k = model.num_components();
    let d = model.dim();
    let engine = PosteriorEngine::new(model);
    let partials: Vec<Stats> = data
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut st = Stats::zeros(k, d);
            let mut g = vec![0.0; k];
            for x in chunk {
                model.log_joint(&engine.consts, x, &mut g);
                st.loglik += softmax_in_place(&mut g);
                for (c, &gc) in g.iter().enumerate() {
                    if gc == 0.0 {
                        continue;
                    }
                    st.s0[c] += gc;
                    let (s1, s2) = (&mut st.s1[c], &mut st.s2[c]);
                    for j in 0..d {
                        s1[j] += gc * x[j];
                        s2[j] += gc * x[j] * x[j];
                    }
                }
            }
            st
        })
        .collect();
    let mut total = Stats::zeros(k, d);
    for p in &partials {
        total.add(p);
    }
    total.loglik /= data.len() as f64;
    total
}

fn m_step(prev: &GmmModel, st: &Stats, n: usize, var_floor: f64, weight_floor: f64) -> GmmModel {
    let mut model = prev.clone();
    for k in 0..prev.num_components() {
        let nk = st.s0[k];
        model.weights[k] = (nk / n as f64).max(weight_floor);
        if nk <= 1e-12 * n as f64 {
            continue;
        }
        for j in 0..prev.dim() {
            let mu = st.s1[k][j] / nk;
            model.means[k][j] = mu;
            model.variances[k][j] = (st.s2[k][j] / nk - mu * mu).max(var_floor);
        }
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
    model
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding.
fn kmeans_pp(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers = vec![data[rng.random_range(0..n)].clone()];
    let mut dist: Vec<f64> = data.iter().map(|x| squared_distance(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &dd) in dist.iter().enumerate() {
                if r < dd {
                    idx = i;
                    break;
                }
                r -= dd;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = data[pick].clone();
        for (dd, x) in dist.iter_mut().zip(data) {
            *dd = dd.min(squared_distance(x, &c));
        }
        centers.push(c);
    }
    centers
}

/// Fits a diagonal GMM with EM from a k-means++ start.
///
/// The initial model assigns each sample to its nearest seed and takes the
/// per-cluster weights, means and variances. Data are centred on their
/// global mean during fitting to limit cancellation in the variance update.
pub fn train_gmm(samples: &[Vec<f64>], params: &GmmParams) -> Result<GmmFit> {
    let k = params.components;
    let n = samples.len();
    if k == 0 {
        return Err(Error::InvalidParameter("GMM needs at least one component".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "{k} components requested for {n} samples"
        )));
    }
    let d = samples[0].len();
    if d == 0 {
        return Err(Error::InvalidParameter("GMM samples are zero-dimensional".into()));
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite training sample".into()));
    }

    let mut center = vec![0.0; d];
    for s in samples {
        for (c, v) in center.iter_mut().zip(s) {
            *c += v;
        }
    }
    center.iter_mut().for_each(|c| *c /= n as f64);
    let data: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.iter().zip(&center).map(|(v, c)| v - c).collect())
        .collect();

    let mut global_var = vec![0.0; d];
    for x in &data {
        for (g, v) in global_var.iter_mut().zip(x) {
            *g += v * v;
        }
    }
    global_var.iter_mut().for_each(|g| *g /= n as f64);
    let mean_var = global_var.iter().sum::<f64>() / d as f64;
    let var_floor = (params.variance_floor_ratio * mean_var).max(1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds = kmeans_pp(&data, k, &mut rng);

    // hard assignment to the seeds gives the starting model
    let mut init = Stats::zeros(k, d);
    for x in &data {
        let best = (0..k)
            .min_by(|&a, &b| squared_distance(x, &seeds[a]).total_cmp(&squared_distance(x, &seeds[b])))
            .unwrap();
        init.s0[best] += 1.0;
        for j in 0..d {
            init.s1[best][j] += x[j];
            init.s2[best][j] += x[j] * x[j];
        }
    }
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: seeds,
        variances: vec![global_var.iter().map(|v| v.max(var_floor)).collect(); k],
    };
    for c in 0..k {
        if init.s0[c] >= 2.0 {
            for j in 0..d {
                let mu = init.s1[c][j] / init.s0[c];
                model.means[c][j] = mu;
                model.variances[c][j] = (init.s2[c][j] / init.s0[c] - mu * mu).max(var_floor);
            }
        }
        model.weights[c] = (init.s0[c] / n as f64).max(params.weight_floor);
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);

    let mut stats = e_step(&model, &data);
    let mut history = vec![stats.loglik];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iters {
        if !stats.loglik.is_finite() {
            break;
        }
        model = m_step(&model, &stats, n, var_floor, params.weight_floor);
        stats = e_step(&model, &data);
        iterations += 1;
        let prev = *history.last().unwrap();
        history.push(stats.loglik);
        if stats.loglik - prev < params.tol * prev.abs() {
            converged = true;
            break;
        }
    }
    if let Some(bad) = history.iter().find(|l| !l.is_finite()) {
        return Err(Error::Numerical(format!("log-likelihood became {bad}")));
    }

    for mean in &mut model.means {
        for (m, c) in mean.iter_mut().zip(&center) {
            *m += c;
        }
    }
    // the shift cancels in the likelihood; keep the recorded history
    Ok(GmmFit {
        model,
        log_likelihood: history,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn two_clusters(seed: u64) -> (Vec<Vec<f64>>, [[f64; 2]; 2]) {
        let centers = [[-3.0, 1.0], [4.0, -2.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut data = Vec::new();
        for i in 0..2000 {
            let c = centers[i % 2];
            data.push(vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]);
        }
        (data, centers)
    }

    #[test]
    fn single_component_closed_form() {
        let (data, _) = two_clusters(1);
        let fit = train_gmm(&data, &GmmParams { components: 1, ..Default::default() }).unwrap();
        let n = data.len() as f64;
        for j in 0..2 {
            let mean = data.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = data.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
            assert!((fit.model.means[0][j] - mean).abs() < 1e-9);
            assert!((fit.model.variances[0][j] - var).abs() < 1e-9);
        }
        assert_eq!(fit.model.weights, vec![1.0]);
    }

    #[test]
    fn recovers_separated_clusters() {
        let (data, centers) = two_clusters(2);
        let fit = train_gmm(&data, &GmmParams { components: 2, seed: 7, ..Default::default() }).unwrap();
        for c in centers {
            let best = fit
                .model
                .means
                .iter()
                .map(|m| squared_distance(m, &c).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.05, "{best}");
        }
        fit.model.validate().unwrap();
    }

    #[test]
    fn likelihood_monotone_and_deterministic() {
        let (data, _) = two_clusters(3);
        let p = GmmParams { components: 4, seed: 11, tol: 0.0, max_iters: 40, ..Default::default() };
        let a = train_gmm(&data, &p).unwrap();
        for w in a.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        let b = train_gmm(&data, &p).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log_likelihood, b.log_likelihood);
    }

    #[test]
    fn too_many_components() {
        let data = vec![vec![0.0, 1.0]; 3];
        assert!(train_gmm(&data, &GmmParams { components: 4, ..Default::default() }).is_err());
    }

    #[test]
    fn duplicate_points_hit_the_variance_floor() {
        let mut data = vec![vec![1.0, 1.0]; 50];
        data.extend(vec![vec![2.0, 3.0]; 50]);
        let fit = train_gmm(&data, &GmmParams { components: 2, ..Default::default() }).unwrap();
        assert!(fit.model.variances.iter().flatten().all(|&v| v > 0.0));
        fit.model.validate().unwrap();
    }

    #[test]
    fn posterior_properties() {
        let m1 = GmmModel { weights: vec![1.0], means: vec![vec![0.0]], variances: vec![vec![1.0]] };
        assert_eq!(posteriors(&m1, &[3.0], None).unwrap(), vec![1.0]);

        let sym = GmmModel {
            weights: vec![0.5, 0.5],
            means: vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            variances: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        };
        let g = posteriors(&sym, &[0.0, 5.0], None).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-9 && (g[1] - 0.5).abs() < 1e-9);

        for x in [1e6, -1e6, 0.0] {
            let g = posteriors(&sym, &[x, x], Some(1e-4)).unwrap();
            assert!(g.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(posteriors(&sym, &[0.0], None).is_err());
    }

    #[test]
    fn truncation_changes_little() {
        let m = GmmModel {
            weights: vec![0.3, 0.7],
            means: vec![vec![0.0, 0.0], vec![1.5, 1.0]],
            variances: vec![vec![0.2, 0.3], vec![0.4, 0.25]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let x = [rng.random_range(-3.0..4.0), rng.random_range(-3.0..4.0)];
            let a = posteriors(&m, &x, None).unwrap();
            let b = posteriors(&m, &x, Some(1e-4)).unwrap();
            let l1: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum();
            assert!(l1 <= 2e-4, "{l1}");
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
