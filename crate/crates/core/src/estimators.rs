//! Monte Carlo estimators that make the bounds checkable.
//!
//! Every estimator draws `n` independent pairs (X, Y) with X ~ π and
//! Y ~ P(X,·). Pair `i` uses `substream(i)` of the seed, pairs are generated
//! in parallel and collected in index order, so results do not depend on the
//! thread count.

use crate::bounds::{rwm_lower_bounds, rwm_upper_bounds};
use crate::error::{invalid, numerical, Result};
use crate::rng::RandomSource;
use crate::samplers::{Functional, Init, Kernel, KernelConfig, KernelTarget};
use crate::targets::{diag_gaussian_target, gaussian_target, TargetSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of contiguous groups used by the grouped jackknife.
pub const JACKKNIFE_GROUPS: usize = 100;
const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub n: u64,
}

/// How the stationary draw X of each pair is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartMode {
    /// The target's exact sampler.
    #[default]
    Exact,
    /// The end of an independent chain of this many steps started at the mode
    /// (RWM) or at 0 (pCN). Biased by the unknown distance to stationarity.
    BurnIn(u64),
}

fn stationary_draw(kernel: &Kernel, start: StartMode, seed: &RandomSource, i: u64, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
    match start {
        StartMode::Exact => match kernel.sample_stationary(rng) {
            Some(x) => Ok(x),
            None => invalid("estimator needs an exact sampler for the target, or an explicit burn-in"),
        },
        StartMode::BurnIn(steps) => {
            let x0 = match &kernel.target {
                KernelTarget::Rwm(t) => t.mode.clone(),
                KernelTarget::Pcn(t) => vec![0.0; t.d],
            };
            if steps == 0 {
                return Ok(x0);
            }
            let st = crate::samplers::run_chain(kernel, &Init::Point(x0), steps, seed.split(i).seed, &[])?;
            Ok(st.final_state)
        }
    }
}

/// Maps each of `n` stationary pairs through `record`, in index order.
fn pairs<R: Send>(
    kernel: &Kernel,
    n: u64,
    seed: u64,
    start: StartMode,
    record: impl Fn(&[f64], &[f64], bool) -> R + Sync,
) -> Result<Vec<R>> {
    if n < 2 {
        return invalid("estimators need n >= 2 pairs");
    }
    if start == StartMode::Exact && !kernel.has_exact_sampler() {
        return invalid("estimator needs an exact sampler for the target, or an explicit burn-in");
    }
    let src = RandomSource::new(seed);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = src.substream(i);
            let x = stationary_draw(kernel, start, &src, i, &mut rng)?;
            let step = kernel.step(&x, kernel.energy(&x), &mut rng);
            Ok(record(&x, &step.state, step.accepted))
        })
        .collect()
}

fn group_bounds(n: usize) -> Vec<(usize, usize)> {
    let g = JACKKNIFE_GROUPS.min(n);
    (0..g).map(|k| (k * n / g, (k + 1) * n / g)).collect()
}

/// Ratio of the mean Dirichlet-form term to the sample variance of f(X).
fn rayleigh_from_sums(n: f64, sum_fx: f64, sum_fx2: f64, sum_half_sq: f64) -> f64 {
    let mean = sum_fx / n;
    let var = (sum_fx2 - n * mean * mean) / (n - 1.0);
    (sum_half_sq / n) / var
}

/// E(P,f)/Var_π(f) from ½(f(Y) − f(X))² averaged over stationary pairs,
/// with a grouped-jackknife standard error. In expectation it bounds the
/// spectral gap from above.
pub fn rayleigh_quotient(kernel: &Kernel, f: &Functional, n: u64, seed: u64, start: StartMode) -> Result<EstimateWithError> {
    let recs = pairs(kernel, n, seed, start, |x, y, _| {
        let (fx, fy) = (f.eval(x), f.eval(y));
        (fx, 0.5 * (fy - fx) * (fy - fx))
    })?;
    // Centering at the first value keeps the variance sums well conditioned.
    let shift = recs[0].0;
    let groups: Vec<[f64; 3]> = group_bounds(recs.len())
        .into_iter()
        .map(|(a, b)| {
            recs[a..b].iter().fold([0.0; 3], |acc, (fx, h)| {
                let c = fx - shift;
                [acc[0] + c, acc[1] + c * c, acc[2] + h]
            })
        })
        .collect();
    let total = groups.iter().fold([0.0; 3], |acc, g| [acc[0] + g[0], acc[1] + g[1], acc[2] + g[2]]);
    let nf = recs.len() as f64;
    let mean = total[0] / nf;
    let var = (total[1] - nf * mean * mean) / (nf - 1.0);
    let scale = total[1] / nf;
    if !(var > 1e-14 * scale.max(1e-300)) {
        return invalid("degenerate functional: f has no variance under the target");
    }
    let value = rayleigh_from_sums(nf, total[0], total[1], total[2]);
    let bounds = group_bounds(recs.len());
    let g = groups.len() as f64;
    let loo: Vec<f64> = groups
        .iter()
        .zip(&bounds)
        .map(|(gr, (a, b))| {
            let m = nf - (b - a) as f64;
            rayleigh_from_sums(m, total[0] - gr[0], total[1] - gr[1], total[2] - gr[2])
        })
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / g;
    let std_error = ((g - 1.0) / g * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>()).sqrt();
    Ok(EstimateWithError { value, std_error, n })
}

fn binomial(successes: u64, trials: u64) -> EstimateWithError {
    let p = successes as f64 / trials as f64;
    EstimateWithError {
        value: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        n: trials,
    }
}

/// (π⊗P)(A×Aᶜ)/π(A) for A = {⟨direction, x⟩ ≥ offset}. `n` in the result is
/// the number of pairs with X ∈ A.
pub fn halfspace_flow(kernel: &Kernel, direction: &[f64], offset: f64, n: u64, seed: u64, start: StartMode) -> Result<EstimateWithError> {
    if direction.len() != kernel.dim() {
        return invalid(format!("direction has length {}, expected {}", direction.len(), kernel.dim()));
    }
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return invalid(format!("direction must be a unit vector, has norm {norm}"));
    }
    let inside = |x: &[f64]| x.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>() >= offset;
    let recs = pairs(kernel, n, seed, start, |x, y, _| (inside(x), inside(y)))?;
    let in_a = recs.iter().filter(|r| r.0).count() as u64;
    if in_a == 0 {
        return numerical("no stationary draw fell in the half-space", None);
    }
    let crossed = recs.iter().filter(|r| r.0 && !r.1).count() as u64;
    Ok(binomial(crossed, in_a))
}

/// Stationary acceptance rate E_π[α(X)] with a binomial standard error.
pub fn acceptance_rate(kernel: &Kernel, n: u64, seed: u64, start: StartMode) -> Result<EstimateWithError> {
    let recs = pairs(kernel, n, seed, start, |_, _, acc| acc)?;
    Ok(binomial(recs.iter().filter(|a| **a).count() as u64, n))
}

/// Gaussian families with exact samplers for dimension scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetFamily {
    /// N(0, σ₀²I).
    IsotropicGaussian { sigma0_sq: f64 },
    /// Diagonal variances geometrically spaced from 1 down to 1/κ, so m = 1
    /// and L = κ once d ≥ 2.
    AnisotropicGaussian { kappa: f64 },
}

impl TargetFamily {
    pub fn build(&self, d: usize) -> Result<TargetSpec> {
        match *self {
            TargetFamily::IsotropicGaussian { sigma0_sq } => gaussian_target(d, sigma0_sq),
            TargetFamily::AnisotropicGaussian { kappa } => {
                if !(kappa >= 1.0) {
                    return invalid(format!("kappa must be >= 1, got {kappa}"));
                }
                let vars: Vec<f64> = (0..d)
                    .map(|i| if d == 1 { 1.0 } else { kappa.powf(-(i as f64) / (d - 1) as f64) })
                    .collect();
                diag_gaussian_target(&vars)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMetric {
    /// Rayleigh quotient of f(x) = x₁.
    Gap,
    /// Flow through {x₁ ≥ 0}.
    Flow,
    Acceptance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub d: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub metric: ScanMetric,
    pub varsigma: f64,
    pub rows: Vec<ScanRow>,
    pub slope: f64,
    /// Residual standard error of the slope, or the Monte Carlo error
    /// propagated through the fit when only two dimensions are scanned.
    pub slope_se: f64,
    /// Monte Carlo error of the estimates propagated through the fit.
    pub slope_mc_se: f64,
}

/// One row of a dimension scan: the estimate at dimension `d` next to its
/// lower and upper bounds.
pub fn scan_point(family: &TargetFamily, metric: ScanMetric, varsigma: f64, d: usize, n: u64, seed: u64) -> Result<ScanRow> {
    let target = family.build(d)?;
    let config = KernelConfig::rwm_from_varsigma(varsigma, target.l, d)?;
    let KernelConfig::Rwm { sigma } = config else { unreachable!() };
    let kernel = Kernel::new(KernelTarget::Rwm(target.clone()), config)?;
    let (est, lower_bound, upper_bound) = match metric {
        ScanMetric::Gap => {
            let lb = rwm_lower_bounds(target.m, target.l, d, varsigma)?.gap;
            let ub = rwm_upper_bounds(target.m, target.l, d, sigma)?.gap;
            (rayleigh_quotient(&kernel, &Functional::coord(0), n, seed, StartMode::Exact)?, lb, ub)
        }
        ScanMetric::Flow => {
            let lb = rwm_lower_bounds(target.m, target.l, d, varsigma)?.phi_star;
            let ub = rwm_upper_bounds(target.m, target.l, d, sigma)?.phi_star;
            let mut e1 = vec![0.0; d];
            e1[0] = 1.0;
            (halfspace_flow(&kernel, &e1, 0.0, n, seed, StartMode::Exact)?, lb, ub)
        }
        ScanMetric::Acceptance => {
            let lb = crate::bounds::rwm_alpha0_lower(target.l, sigma, d);
            (acceptance_rate(&kernel, n, seed, StartMode::Exact)?, lb, 1.0)
        }
    };
    Ok(ScanRow {
        d,
        estimate: est.value,
        std_error: est.std_error,
        lower_bound,
        upper_bound,
    })
}

/// Runs `metric` at each dimension with σ = ςL^{−1/2}d^{−1/2} and fits the
/// least-squares slope of log(estimate) against log(d).
pub fn dimension_scan(dims: &[usize], varsigma: f64, family: &TargetFamily, metric: ScanMetric, n: u64, seed: u64) -> Result<ScanResult> {
    if dims.len() < 2 {
        return invalid("a dimension scan needs at least two dimensions");
    }
    if dims.contains(&0) {
        return invalid("dimensions must be positive");
    }
    let src = RandomSource::new(seed);
    let rows: Vec<ScanRow> = dims
        .par_iter()
        .map(|&d| scan_point(family, metric, varsigma, d, n, src.split(d as u64).seed))
        .collect::<Result<_>>()?;
    if let Some(r) = rows.iter().find(|r| !(r.estimate > 0.0)) {
        return numerical(format!("estimate at d={} is not positive; cannot take logs", r.d), None);
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.d as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.estimate.ln()).collect();
    let k = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / k;
    let ybar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if !(sxx > 0.0) {
        return invalid("dimensions must not all be equal");
    }
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum::<f64>() / sxx;
    let intercept = ybar - slope * xbar;
    let slope_mc_se = xs
        .iter()
        .zip(&rows)
        .map(|(x, r)| ((x - xbar) / sxx * r.std_error / r.estimate).powi(2))
        .sum::<f64>()
        .sqrt();
    let slope_se = if rows.len() > 2 {
        let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (ssr / (k - 2.0) / sxx).sqrt()
    } else {
        slope_mc_se
    };
    Ok(ScanResult {
        metric,
        varsigma,
        rows,
        slope,
        slope_se,
        slope_mc_se,
    })
}

/// χ²(N(mean1, diag var1) ‖ N(mean2, diag var2)), or +∞ when some
/// coordinate has 2·var2 ≤ var1.
pub fn chi2_gaussian_diag(mean1: &[f64], var1: &[f64], mean2: &[f64], var2: &[f64]) -> Result<f64> {
    let d = mean1.len();
    if var1.len() != d || mean2.len() != d || var2.len() != d {
        return invalid("means and variances must have equal lengths");
    }
    if var1.iter().chain(var2).any(|v| !(*v > 0.0 && v.is_finite())) {
        return invalid("variances must be positive and finite");
    }
    let mut log_one_plus = 0.0;
    for i in 0..d {
        let (s1, s2) = (var1[i], var2[i]);
        let denom = 2.0 * s2 - s1;
        if denom <= 0.0 {
            return Ok(f64::INFINITY);
        }
        let delta = mean1[i] - mean2[i];
        log_one_plus += s2.ln() - 0.5 * s1.ln() - 0.5 * denom.ln() + delta * delta / denom;
    }
    Ok(log_one_plus.exp_m1())
}
