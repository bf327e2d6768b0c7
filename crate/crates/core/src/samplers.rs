//! RWM and pCN Metropolis kernels, chain execution and warm-start initializers.
//!
//! Step `i` of a chain draws all of its randomness from `substream(i)` of the
//! chain's [`RandomSource`]: first the proposal noise, then exactly one
//! uniform for the acceptance test. Running `n₁` steps and resuming for `n₂`
//! therefore reproduces a single run of `n₁ + n₂` steps bit for bit.

use crate::error::{invalid, numerical, Result};
use crate::rng::RandomSource;
use crate::targets::{cholesky, posterior_cov, standard_normals, ExactSampler, PcnTarget, ScalarMap, TargetSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub const MAX_INIT_TRIALS: u64 = 1_000_000;
const RHO_ETA_TOL: f64 = 1e-12;
/// Substream reserved for drawing the initial state.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelConfig {
    Rwm { sigma: f64 },
    Pcn { rho: f64, eta: f64 },
}

impl KernelConfig {
    pub fn rwm(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("sigma must be positive, got {sigma}"));
        }
        Ok(Self::Rwm { sigma })
    }

    pub fn pcn(rho: f64, eta: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0 && eta > 0.0 && eta < 1.0) || (rho * rho + eta * eta - 1.0).abs() > RHO_ETA_TOL {
            return invalid(format!("need rho, eta in (0,1) with rho^2 + eta^2 = 1, got ({rho}, {eta})"));
        }
        Ok(Self::Pcn { rho, eta })
    }

    pub fn pcn_from_rho(rho: f64) -> Result<Self> {
        Self::pcn(rho, (1.0 - rho * rho).sqrt())
    }

    pub fn pcn_from_eta(eta: f64) -> Result<Self> {
        Self::pcn((1.0 - eta * eta).sqrt(), eta)
    }

    /// σ = ς·L^{−1/2}·d^{−1/2}.
    pub fn rwm_from_varsigma(varsigma: f64, l: f64, d: usize) -> Result<Self> {
        if !(varsigma > 0.0 && l > 0.0) || d == 0 {
            return invalid("need varsigma > 0, L > 0 and d >= 1");
        }
        Self::rwm(varsigma / (l * d as f64).sqrt())
    }

    /// η = ς·(L·Tr C)^{−1/2}, which must lie in (0,1).
    pub fn pcn_from_varsigma(varsigma: f64, l: f64, trace_c: f64) -> Result<Self> {
        if !(varsigma > 0.0 && l > 0.0 && trace_c > 0.0) {
            return invalid("need varsigma > 0, L > 0 and Tr(C) > 0");
        }
        Self::pcn_from_eta(varsigma / (l * trace_c).sqrt())
    }
}

/// Outcome of one Metropolis step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub accepted: bool,
    /// U(x) − U(y) for RWM, Ψ(x) − Ψ(w) for pCN.
    pub log_ratio: f64,
    pub nonfinite: bool,
    /// Potential at the returned state.
    pub energy: f64,
}

fn metropolis(x: &[f64], energy_x: f64, proposal: Vec<f64>, energy_y: f64, rng: &mut dyn RngCore) -> Step {
    // 1 − U[0,1) lies in (0,1], so its log is finite.
    let u = 1.0 - rng.random::<f64>();
    let log_ratio = energy_x - energy_y;
    if !energy_y.is_finite() || log_ratio.is_nan() {
        return Step {
            state: x.to_vec(),
            accepted: false,
            log_ratio,
            nonfinite: true,
            energy: energy_x,
        };
    }
    if u.ln() <= log_ratio.min(0.0) {
        Step {
            state: proposal,
            accepted: true,
            log_ratio,
            nonfinite: false,
            energy: energy_y,
        }
    } else {
        Step {
            state: x.to_vec(),
            accepted: false,
            log_ratio,
            nonfinite: false,
            energy: energy_x,
        }
    }
}

fn rwm_step_cached(x: &[f64], energy_x: f64, target: &TargetSpec, sigma: f64, rng: &mut dyn RngCore) -> Step {
    let z = standard_normals(rng, target.d);
    let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + sigma * b).collect();
    let energy_y = target.u(&y);
    metropolis(x, energy_x, y, energy_y, rng)
}

fn pcn_step_cached(x: &[f64], energy_x: f64, target: &PcnTarget, rho: f64, eta: f64, rng: &mut dyn RngCore) -> Step {
    let xi = target.reference_noise(rng);
    let w: Vec<f64> = x.iter().zip(&xi).map(|(a, b)| rho * a + eta * b).collect();
    let energy_w = (target.psi)(&w);
    metropolis(x, energy_x, w, energy_w, rng)
}

/// One RWM step: y = x + σz, accepted with probability min{1, exp(U(x) − U(y))}.
pub fn rwm_step(x: &[f64], target: &TargetSpec, sigma: f64, rng: &mut dyn RngCore) -> Result<Step> {
    KernelConfig::rwm(sigma)?;
    if x.len() != target.d {
        return invalid(format!("state has length {}, expected {}", x.len(), target.d));
    }
    Ok(rwm_step_cached(x, target.u(x), target, sigma, rng))
}

/// One pCN step: w = ρx + η·C^{1/2}ξ, accepted with probability min{1, exp(Ψ(x) − Ψ(w))}.
pub fn pcn_step(x: &[f64], target: &PcnTarget, rho: f64, rng: &mut dyn RngCore) -> Result<Step> {
    let KernelConfig::Pcn { rho, eta } = KernelConfig::pcn_from_rho(rho)? else {
        unreachable!()
    };
    if x.len() != target.d {
        return invalid(format!("state has length {}, expected {}", x.len(), target.d));
    }
    Ok(pcn_step_cached(x, (target.psi)(x), target, rho, eta, rng))
}

#[derive(Clone, Debug)]
pub enum KernelTarget {
    Rwm(TargetSpec),
    Pcn(PcnTarget),
}

/// A target paired with a compatible kernel configuration.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub target: KernelTarget,
    pub config: KernelConfig,
}

impl Kernel {
    pub fn new(target: KernelTarget, config: KernelConfig) -> Result<Self> {
        match (&target, &config) {
            (KernelTarget::Rwm(_), KernelConfig::Rwm { sigma }) => {
                KernelConfig::rwm(*sigma)?;
            }
            (KernelTarget::Pcn(_), KernelConfig::Pcn { rho, eta }) => {
                KernelConfig::pcn(*rho, *eta)?;
            }
            _ => return invalid("kernel kind does not match target kind"),
        }
        Ok(Self { target, config })
    }

    pub fn rwm(target: &TargetSpec, sigma: f64) -> Result<Self> {
        Self::new(KernelTarget::Rwm(target.clone()), KernelConfig::rwm(sigma)?)
    }

    pub fn pcn(target: &PcnTarget, rho: f64) -> Result<Self> {
        Self::new(KernelTarget::Pcn(target.clone()), KernelConfig::pcn_from_rho(rho)?)
    }

    pub fn dim(&self) -> usize {
        match &self.target {
            KernelTarget::Rwm(t) => t.d,
            KernelTarget::Pcn(t) => t.d,
        }
    }

    /// U for RWM, Ψ for pCN.
    pub fn energy(&self, x: &[f64]) -> f64 {
        match &self.target {
            KernelTarget::Rwm(t) => t.u(x),
            KernelTarget::Pcn(t) => (t.psi)(x),
        }
    }

    pub fn step(&self, x: &[f64], energy_x: f64, rng: &mut dyn RngCore) -> Step {
        match (&self.target, self.config) {
            (KernelTarget::Rwm(t), KernelConfig::Rwm { sigma }) => rwm_step_cached(x, energy_x, t, sigma, rng),
            (KernelTarget::Pcn(t), KernelConfig::Pcn { rho, eta }) => pcn_step_cached(x, energy_x, t, rho, eta, rng),
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn sample_stationary(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        match &self.target {
            KernelTarget::Rwm(t) => t.sample_exact(rng),
            KernelTarget::Pcn(t) => t.sample_exact(rng),
        }
    }

    pub fn has_exact_sampler(&self) -> bool {
        match &self.target {
            KernelTarget::Rwm(t) => t.exact_sampler.is_some(),
            KernelTarget::Pcn(t) => t.exact_sampler.is_some(),
        }
    }
}

/// A labeled scalar map tracked along a chain.
#[derive(Clone)]
pub struct Functional {
    pub label: String,
    pub f: ScalarMap,
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional").field("label", &self.label).finish()
    }
}

impl Functional {
    pub fn new(label: impl Into<String>, f: ScalarMap) -> Self {
        Self { label: label.into(), f }
    }

    pub fn coord(i: usize) -> Self {
        Self::new(format!("x{}", i + 1), Arc::new(move |x: &[f64]| x[i]))
    }

    pub fn linear(direction: Vec<f64>) -> Self {
        Self::new("linear", Arc::new(move |x: &[f64]| x.iter().zip(&direction).map(|(a, b)| a * b).sum()))
    }

    pub fn norm_sq() -> Self {
        Self::new("norm_sq", Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Running sums for one functional along a chain X₀, …, Xₙ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSums {
    pub label: String,
    /// Σ f(Xᵢ) over i = 0..=n.
    pub sum: f64,
    /// Σ f(Xᵢ)² over i = 0..=n.
    pub sum_sq: f64,
    /// Σ f(Xᵢ)f(Xᵢ₊₁) over i = 0..n.
    pub lag1: f64,
    /// Σ (f(Xᵢ₊₁) − f(Xᵢ))² over i = 0..n.
    pub sq_increment: f64,
    /// f at the current state; continues the lag sums on resume.
    pub last: f64,
}

impl FunctionalSums {
    fn start(label: &str, v: f64) -> Self {
        Self {
            label: label.to_string(),
            sum: v,
            sum_sq: v * v,
            lag1: 0.0,
            sq_increment: 0.0,
            last: v,
        }
    }

    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
        self.lag1 += self.last * v;
        self.sq_increment += (v - self.last) * (v - self.last);
        self.last = v;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub n_steps: u64,
    pub n_accepted: u64,
    pub n_nonfinite: u64,
    pub seed: u64,
    pub functionals: Vec<FunctionalSums>,
    pub final_state: Vec<f64>,
    /// Number of independent chains merged into this record.
    pub n_chains: u64,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.n_steps == 0 {
            return f64::NAN;
        }
        self.n_accepted as f64 / self.n_steps as f64
    }

    /// Binomial standard error of the acceptance rate, ignoring autocorrelation.
    pub fn acceptance_se(&self) -> f64 {
        let p = self.acceptance_rate();
        (p * (1.0 - p) / self.n_steps as f64).sqrt()
    }

    /// Sample mean of f over all recorded states.
    pub fn mean(&self, k: usize) -> f64 {
        self.functionals[k].sum / (self.n_steps + self.n_chains) as f64
    }

    /// ½·mean of squared increments, an estimate of the Dirichlet form.
    pub fn dirichlet(&self, k: usize) -> f64 {
        0.5 * self.functionals[k].sq_increment / self.n_steps as f64
    }

    /// Sums over independent replicas. The final state is the other chain's.
    pub fn merge(&mut self, other: &ChainStats) -> Result<()> {
        if self.functionals.len() != other.functionals.len()
            || self.functionals.iter().zip(&other.functionals).any(|(a, b)| a.label != b.label)
        {
            return invalid("cannot merge chains tracking different functionals");
        }
        self.n_steps += other.n_steps;
        self.n_accepted += other.n_accepted;
        self.n_nonfinite += other.n_nonfinite;
        self.n_chains += other.n_chains;
        for (a, b) in self.functionals.iter_mut().zip(&other.functionals) {
            a.sum += b.sum;
            a.sum_sq += b.sum_sq;
            a.lag1 += b.lag1;
            a.sq_increment += b.sq_increment;
            a.last = b.last;
        }
        self.final_state = other.final_state.clone();
        Ok(())
    }
}

/// Where a chain starts.
#[derive(Clone)]
pub enum Init {
    Point(Vec<f64>),
    /// A draw from the target's exact sampler.
    Stationary,
    Sampler(ExactSampler),
}

impl fmt::Debug for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Init::Point(x) => f.debug_tuple("Point").field(x).finish(),
            Init::Stationary => f.write_str("Stationary"),
            Init::Sampler(_) => f.write_str("Sampler"),
        }
    }
}

fn initial_state(kernel: &Kernel, init: &Init, src: &RandomSource) -> Result<Vec<f64>> {
    let mut rng = src.substream(INIT_STREAM);
    let x = match init {
        Init::Point(x) => x.clone(),
        Init::Stationary => match kernel.sample_stationary(&mut rng) {
            Some(x) => x,
            None => return invalid("stationary start requires an exact sampler"),
        },
        Init::Sampler(s) => s(&mut rng),
    };
    if x.len() != kernel.dim() {
        return invalid(format!("initial state has length {}, expected {}", x.len(), kernel.dim()));
    }
    Ok(x)
}

/// Runs `n` steps, reporting each step's index, functional values and acceptance.
pub fn run_chain_observed(
    kernel: &Kernel,
    init: &Init,
    n: u64,
    seed: u64,
    functionals: &[Functional],
    observer: &mut dyn FnMut(u64, &[f64], bool),
) -> Result<ChainStats> {
    if n == 0 {
        return invalid("a chain needs n >= 1 steps");
    }
    let src = RandomSource::new(seed);
    let x0 = initial_state(kernel, init, &src)?;
    let values: Vec<f64> = functionals.iter().map(|f| f.eval(&x0)).collect();
    observer(0, &values, false);
    let stats = ChainStats {
        n_steps: 0,
        n_accepted: 0,
        n_nonfinite: 0,
        seed,
        functionals: functionals.iter().zip(&values).map(|(f, v)| FunctionalSums::start(&f.label, *v)).collect(),
        final_state: x0,
        n_chains: 1,
    };
    advance(kernel, stats, n, functionals, observer)
}

pub fn run_chain(kernel: &Kernel, init: &Init, n: u64, seed: u64, functionals: &[Functional]) -> Result<ChainStats> {
    run_chain_observed(kernel, init, n, seed, functionals, &mut |_, _, _| {})
}

/// Continues a chain for `n` more steps on the same random stream.
pub fn resume_chain(kernel: &Kernel, stats: ChainStats, n: u64, functionals: &[Functional]) -> Result<ChainStats> {
    if stats.n_chains != 1 {
        return invalid("only a single chain can be resumed");
    }
    if functionals.len() != stats.functionals.len() || functionals.iter().zip(&stats.functionals).any(|(f, s)| f.label != s.label) {
        return invalid("functionals differ from the ones the chain was started with");
    }
    advance(kernel, stats, n, functionals, &mut |_, _, _| {})
}

fn advance(
    kernel: &Kernel,
    mut stats: ChainStats,
    n: u64,
    functionals: &[Functional],
    observer: &mut dyn FnMut(u64, &[f64], bool),
) -> Result<ChainStats> {
    let src = RandomSource::new(stats.seed);
    let mut x = std::mem::take(&mut stats.final_state);
    let mut energy = kernel.energy(&x);
    if !energy.is_finite() {
        return invalid("potential is not finite at the initial state");
    }
    let mut values = vec![0.0; functionals.len()];
    for _ in 0..n {
        let i = stats.n_steps;
        let mut rng = src.substream(i);
        let step = kernel.step(&x, energy, &mut rng);
        stats.n_steps += 1;
        stats.n_accepted += step.accepted as u64;
        stats.n_nonfinite += step.nonfinite as u64;
        x = step.state;
        energy = step.energy;
        for ((f, s), v) in functionals.iter().zip(stats.functionals.iter_mut()).zip(values.iter_mut()) {
            *v = f.eval(&x);
            s.push(*v);
        }
        observer(i + 1, &values, step.accepted);
    }
    stats.final_state = x;
    Ok(stats)
}

/// Proposes from Q(x₀,·) until one proposal passes the acceptance test.
/// Returns the accepted point and the number of trials.
pub fn accepted_proposal_init(x0: &[f64], target: &TargetSpec, sigma: f64, rng: &mut dyn RngCore) -> Result<(Vec<f64>, u64)> {
    KernelConfig::rwm(sigma)?;
    if x0.len() != target.d {
        return invalid(format!("x0 has length {}, expected {}", x0.len(), target.d));
    }
    let u0 = target.u(x0);
    if !u0.is_finite() {
        return invalid("potential is not finite at x0");
    }
    for trial in 1..=MAX_INIT_TRIALS {
        let step = rwm_step_cached(x0, u0, target, sigma, rng);
        if step.accepted {
            return Ok((step.state, trial));
        }
    }
    numerical(
        format!("no proposal accepted in {MAX_INIT_TRIALS} trials; sigma is badly tuned for x0"),
        None,
    )
}

/// Scale of a Gaussian draw.
#[derive(Debug, Clone, PartialEq)]
pub enum GaussianScale {
    /// Covariance var·I.
    Isotropic(f64),
    /// Lower-triangular factor of the covariance.
    Cholesky(DMatrix<f64>),
}

impl GaussianScale {
    pub fn from_covariance(cov: &DMatrix<f64>) -> Result<Self> {
        Ok(Self::Cholesky(cholesky(cov)?))
    }
}

/// mean + scale·z with z standard normal.
pub fn gaussian_sample(mean: &[f64], scale: &GaussianScale, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    let d = mean.len();
    let z = standard_normals(rng, d);
    match scale {
        GaussianScale::Isotropic(var) => {
            if !(*var >= 0.0 && var.is_finite()) {
                return invalid(format!("variance must be nonnegative, got {var}"));
            }
            let s = var.sqrt();
            Ok(mean.iter().zip(&z).map(|(m, v)| m + s * v).collect())
        }
        GaussianScale::Cholesky(l) => {
            if l.nrows() != d || l.ncols() != d {
                return invalid(format!("factor is {}x{}, expected {d}x{d}", l.nrows(), l.ncols()));
            }
            let lz = l * DVector::from_vec(z);
            Ok(mean.iter().zip(lz.iter()).map(|(m, v)| m + v).collect())
        }
    }
}

/// N(x*, L⁻¹I), whose χ² to π is at most κ^{d/2}.
pub fn mode_gaussian_init(target: &TargetSpec, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    gaussian_sample(&target.mode, &GaussianScale::Isotropic(1.0 / target.l), rng)
}

/// N(0, C(I + LC)⁻¹), whose χ² to the pCN target is at most exp(½L·Tr C).
pub fn pcn_gaussian_init(target: &PcnTarget, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    let cov = posterior_cov(&target.cov, target.l_psi)?;
    gaussian_sample(&vec![0.0; target.d], &GaussianScale::from_covariance(&cov)?, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{diag_gaussian_target, gaussian_target};
    use proptest::prelude::*;

    fn flat(d: usize) -> TargetSpec {
        TargetSpec::new(
            "flat",
            d,
            Arc::new(|_x: &[f64]| 0.0),
            Arc::new(move |_x: &[f64]| vec![0.0; d]),
            0.0,
            1.0,
            vec![0.0; d],
            None,
        )
        .unwrap()
    }

    fn diag_pcn(diag: &[f64], psi: ScalarMap) -> PcnTarget {
        let d = diag.len();
        PcnTarget::new(
            "diag",
            DMatrix::from_diagonal(&DVector::from_vec(diag.to_vec())),
            psi,
            Arc::new(move |_x: &[f64]| vec![0.0; d]),
            0.0,
            None,
        )
        .unwrap()
    }

    #[test]
    fn kernel_config_validation() {
        assert!(KernelConfig::rwm(0.0).is_err());
        assert!(KernelConfig::pcn(0.8, 0.5).is_err());
        assert!(KernelConfig::pcn(0.8, 0.6).is_ok());
        let KernelConfig::Rwm { sigma } = KernelConfig::rwm_from_varsigma(1.0, 4.0, 4).unwrap() else { panic!() };
        assert_eq!(sigma, 0.25);
        assert!(KernelConfig::pcn_from_varsigma(2.0, 1.0, 1.0).is_err());
        let t = gaussian_target(2, 1.0).unwrap();
        let p = diag_pcn(&[1.0, 1.0], Arc::new(|_x: &[f64]| 0.0));
        assert!(Kernel::new(KernelTarget::Rwm(t), KernelConfig::pcn(0.8, 0.6).unwrap()).is_err());
        assert!(Kernel::new(KernelTarget::Pcn(p), KernelConfig::rwm(1.0).unwrap()).is_err());
    }

    #[test]
    fn flat_potential_always_accepts() {
        let t = flat(3);
        let mut rng = RandomSource::new(1).substream(0);
        let mut x = vec![0.0; 3];
        for _ in 0..100 {
            let s = rwm_step(&x, &t, 5.0, &mut rng).unwrap();
            assert!(s.accepted);
            x = s.state;
        }
    }

    #[test]
    fn downhill_moves_always_accept() {
        let t = gaussian_target(2, 1.0).unwrap();
        let mut rng = RandomSource::new(2).substream(0);
        for _ in 0..1000 {
            let s = rwm_step(&[3.0, -3.0], &t, 0.5, &mut rng).unwrap();
            if s.log_ratio >= 0.0 {
                assert!(s.accepted);
            }
        }
    }

    #[test]
    fn detailed_balance_identity() {
        let t = gaussian_target(3, 1.5).unwrap();
        let mut rng = RandomSource::new(3).substream(0);
        for _ in 0..1000 {
            let x = standard_normals(&mut rng, 3).iter().map(|v| 2.0 * v).collect::<Vec<_>>();
            let y = standard_normals(&mut rng, 3).iter().map(|v| 2.0 * v).collect::<Vec<_>>();
            let (px, py) = ((-t.u(&x)).exp(), (-t.u(&y)).exp());
            let lhs = px * (py / px).min(1.0);
            let rhs = py * (px / py).min(1.0);
            assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * lhs.max(rhs));
        }
    }

    #[test]
    fn nonfinite_proposal_is_rejected_and_counted() {
        let t = TargetSpec::new(
            "halfline",
            1,
            Arc::new(|x: &[f64]| if x[0] < 0.0 { f64::INFINITY } else { 0.5 * x[0] * x[0] }),
            Arc::new(|x: &[f64]| vec![x[0]]),
            1.0,
            1.0,
            vec![0.0],
            None,
        )
        .unwrap();
        let k = Kernel::rwm(&t, 1.0).unwrap();
        let st = run_chain(&k, &Init::Point(vec![0.1]), 2000, 4, &[]).unwrap();
        assert!(st.n_nonfinite > 0);
        assert!(st.n_accepted + st.n_nonfinite <= st.n_steps);
        assert!(st.final_state[0] >= 0.0);
    }

    #[test]
    fn forced_rejection_keeps_init() {
        let t = gaussian_target(5, 1e-4).unwrap();
        let k = Kernel::rwm(&t, 1e3).unwrap();
        let init = vec![0.0; 5];
        let st = run_chain(&k, &Init::Point(init.clone()), 1, 5, &[]).unwrap();
        assert_eq!(st.final_state, init);
        assert_eq!(st.n_accepted, 0);
    }

    #[test]
    fn identical_seeds_identical_stats() {
        let t = gaussian_target(4, 1.0).unwrap();
        let k = Kernel::rwm(&t, 0.7).unwrap();
        let f = [Functional::coord(0), Functional::norm_sq()];
        let a = run_chain(&k, &Init::Stationary, 500, 99, &f).unwrap();
        let b = run_chain(&k, &Init::Stationary, 500, 99, &f).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&k, &Init::Stationary, 500, 100, &f).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn resume_matches_single_run() {
        let t = gaussian_target(3, 1.0).unwrap();
        let k = Kernel::rwm(&t, 0.9).unwrap();
        let f = [Functional::coord(1)];
        let full = run_chain(&k, &Init::Stationary, 700, 7, &f).unwrap();
        let part = run_chain(&k, &Init::Stationary, 300, 7, &f).unwrap();
        let resumed = resume_chain(&k, part, 400, &f).unwrap();
        assert_eq!(full, resumed);
        assert!(resume_chain(&k, full, 1, &[Functional::norm_sq()]).is_err());
    }

    #[test]
    fn merge_adds_counts() {
        let t = gaussian_target(2, 1.0).unwrap();
        let k = Kernel::rwm(&t, 0.9).unwrap();
        let f = [Functional::coord(0)];
        let mut a = run_chain(&k, &Init::Stationary, 100, 1, &f).unwrap();
        let b = run_chain(&k, &Init::Stationary, 50, 2, &f).unwrap();
        let sum = a.functionals[0].sum + b.functionals[0].sum;
        a.merge(&b).unwrap();
        assert_eq!((a.n_steps, a.n_chains), (150, 2));
        assert_eq!(a.functionals[0].sum, sum);
        let c = run_chain(&k, &Init::Stationary, 50, 2, &[Functional::norm_sq()]).unwrap();
        assert!(a.merge(&c).is_err());
    }

    #[test]
    fn observer_sees_every_step() {
        let t = gaussian_target(2, 1.0).unwrap();
        let k = Kernel::rwm(&t, 0.9).unwrap();
        let mut seen = Vec::new();
        let st = run_chain_observed(&k, &Init::Stationary, 20, 3, &[Functional::coord(0)], &mut |i, v, a| seen.push((i, v[0], a))).unwrap();
        assert_eq!(seen.len(), 21);
        assert_eq!(seen.iter().filter(|r| r.2).count() as u64, st.n_accepted);
        assert_eq!(seen.last().unwrap().1, st.final_state[0]);
    }

    #[test]
    fn acceptance_floor_at_d10() {
        let t = gaussian_target(10, 1.0).unwrap();
        let k = Kernel::new(KernelTarget::Rwm(t), KernelConfig::rwm_from_varsigma(1.0, 1.0, 10).unwrap()).unwrap();
        let st = run_chain(&k, &Init::Stationary, 100_000, 11, &[]).unwrap();
        assert!(st.acceptance_rate() >= 0.5 * (-0.5f64).exp() - 3.0 * st.acceptance_se());
    }

    #[test]
    fn pcn_with_zero_psi_always_accepts() {
        let p = diag_pcn(&[1.0, 4.0, 0.25], Arc::new(|_x: &[f64]| 0.0));
        let k = Kernel::pcn(&p, 0.6).unwrap();
        let st = run_chain(&k, &Init::Point(vec![0.0; 3]), 5000, 8, &[]).unwrap();
        assert_eq!(st.n_accepted, 5000);
    }

    #[test]
    fn pcn_downhill_accepts() {
        let p = diag_pcn(&[1.0, 1.0], Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()));
        let mut rng = RandomSource::new(5).substream(0);
        for _ in 0..500 {
            let s = pcn_step(&[2.0, 2.0], &p, 0.9, &mut rng).unwrap();
            if s.log_ratio >= 0.0 {
                assert!(s.accepted);
            }
        }
        assert!(pcn_step(&[2.0, 2.0], &p, 1.0, &mut rng).is_err());
    }

    #[test]
    fn pcn_proposal_preserves_reference() {
        // x ~ N(0,C) ⇒ ρx + ηC^{1/2}ξ ~ N(0,C).
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let p = PcnTarget::new("full", cov.clone(), Arc::new(|_x: &[f64]| 0.0), Arc::new(|_x: &[f64]| vec![0.0; 2]), 0.0, None).unwrap();
        let (rho, eta) = (0.8, 0.6);
        let n = 100_000;
        let src = RandomSource::new(6);
        let mut acc = [[0.0f64; 2]; 2];
        let mut sq = [[0.0f64; 2]; 2];
        for i in 0..n {
            let mut rng = src.substream(i);
            let x = p.reference_noise(&mut rng);
            let xi = p.reference_noise(&mut rng);
            let w: Vec<f64> = x.iter().zip(&xi).map(|(a, b)| rho * a + eta * b).collect();
            for r in 0..2 {
                for c in 0..2 {
                    acc[r][c] += w[r] * w[c];
                    sq[r][c] += (w[r] * w[c]).powi(2);
                }
            }
        }
        for r in 0..2 {
            for c in 0..2 {
                let mean = acc[r][c] / n as f64;
                let se = ((sq[r][c] / n as f64 - mean * mean) / n as f64).sqrt();
                assert!((mean - cov[(r, c)]).abs() <= 3.0 * se, "({r},{c}) {mean}");
            }
        }
    }

    #[test]
    fn accepted_proposal_flat_takes_one_trial() {
        let t = flat(2);
        let mut rng = RandomSource::new(1).substream(0);
        let (_, trials) = accepted_proposal_init(&[0.0, 0.0], &t, 1.0, &mut rng).unwrap();
        assert_eq!(trials, 1);
    }

    #[test]
    fn accepted_proposal_cap() {
        let t = gaussian_target(50, 1e-6).unwrap();
        let mut rng = RandomSource::new(1).substream(0);
        let r = accepted_proposal_init(&vec![0.0; 50], &t, 10.0, &mut rng);
        assert!(matches!(r, Err(crate::Error::NumericalFailure { .. })));
    }

    #[test]
    fn accepted_proposal_law_matches_reference_construction() {
        // P^α(x₀,·) is Q(x₀,·) conditioned on acceptance; build it a second way
        // by rejection with independent uniforms and compare CDFs.
        let t = gaussian_target(1, 1.0).unwrap();
        let x0 = [1.5];
        let sigma = 2.0;
        let n = 10_000;
        let src = RandomSource::new(12);
        let mut a: Vec<f64> = (0..n)
            .map(|i| accepted_proposal_init(&x0, &t, sigma, &mut src.substream(i)).unwrap().0[0])
            .collect();
        let src2 = RandomSource::new(13);
        let mut b = Vec::with_capacity(n as usize);
        let mut i = 0u64;
        while b.len() < n as usize {
            let mut rng = src2.substream(i);
            i += 1;
            let y = x0[0] + sigma * standard_normals(&mut rng, 1)[0];
            let p = (0.5 * (x0[0] * x0[0] - y * y)).exp().min(1.0);
            if rand::Rng::random::<f64>(&mut rng) < p {
                b.push(y);
            }
        }
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut ks) = (0usize, 0usize, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        assert!(ks <= 0.02, "ks={ks}");
    }

    #[test]
    fn accepted_proposal_mean_trials() {
        let t = gaussian_target(10, 1.0).unwrap();
        let sigma = (0.1f64).sqrt();
        let src = RandomSource::new(21);
        let n = 20_000;
        let trials: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = src.substream(i);
                let x0 = t.sample_exact(&mut rng).unwrap();
                accepted_proposal_init(&x0, &t, sigma, &mut rng).unwrap().1 as f64
            })
            .collect();
        let mean = trials.iter().sum::<f64>() / n as f64;
        let var = trials.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(mean <= 1.0 / (0.5 * (-0.5f64).exp()) + 3.0 * se, "{mean}");
    }

    #[test]
    fn gaussian_sample_zero_scale_and_moments() {
        let mut rng = RandomSource::new(1).substream(0);
        assert_eq!(gaussian_sample(&[1.0, -2.0], &GaussianScale::Isotropic(0.0), &mut rng).unwrap(), vec![1.0, -2.0]);
        assert!(gaussian_sample(&[1.0], &GaussianScale::Isotropic(-1.0), &mut rng).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianScale::from_covariance(&bad).is_err());
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let scale = GaussianScale::from_covariance(&cov).unwrap();
        let n = 100_000;
        let src = RandomSource::new(2);
        let draws: Vec<Vec<f64>> = (0..n).map(|i| gaussian_sample(&[1.0, 0.0], &scale, &mut src.substream(i)).unwrap()).collect();
        for k in 0..2 {
            let mean = draws.iter().map(|x| x[k]).sum::<f64>() / n as f64;
            let se = (cov[(k, k)] / n as f64).sqrt();
            assert!((mean - [1.0, 0.0][k]).abs() <= 3.0 * se);
        }
        let c01 = draws.iter().map(|x| (x[0] - 1.0) * x[1]).sum::<f64>() / n as f64;
        let se = ((cov[(0, 0)] * cov[(1, 1)] + 0.25) / n as f64).sqrt();
        assert!((c01 - 0.5).abs() <= 3.0 * se);
    }

    #[test]
    fn pcn_initializer_covariance() {
        let diag = [1.0, 2.0, 0.5];
        let cov = DMatrix::from_diagonal(&DVector::from_vec(diag.to_vec()));
        let post = posterior_cov(&cov, 3.0).unwrap();
        for (i, c) in diag.iter().enumerate() {
            assert!((post[(i, i)] - c / (1.0 + 3.0 * c)).abs() < 1e-15);
        }
        let det: f64 = diag.iter().map(|c| 1.0 + 3.0 * c).product();
        assert!(det.sqrt() >= 1.0);
        let p = PcnTarget::quadratic(cov, 3.0).unwrap();
        let mut rng = RandomSource::new(3).substream(0);
        assert_eq!(pcn_gaussian_init(&p, &mut rng).unwrap().len(), 3);
    }

    #[test]
    fn mode_init_is_centered() {
        let t = diag_gaussian_target(&[1.0, 4.0]).unwrap();
        let src = RandomSource::new(9);
        let n = 20_000;
        let mean0 = (0..n).map(|i| mode_gaussian_init(&t, &mut src.substream(i)).unwrap()[0]).sum::<f64>() / n as f64;
        assert!(mean0.abs() <= 3.0 * (1.0 / t.l / n as f64).sqrt());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn accepted_never_exceeds_steps(seed in 0u64..1000, sigma in 0.01f64..5.0, n in 1u64..200) {
            let t = gaussian_target(3, 1.0).unwrap();
            let k = Kernel::rwm(&t, sigma).unwrap();
            let st = run_chain(&k, &Init::Point(vec![0.5; 3]), n, seed, &[Functional::coord(0)]).unwrap();
            prop_assert!(st.n_accepted <= st.n_steps);
            prop_assert_eq!(st.n_steps, n);
        }

        #[test]
        fn split_runs_compose(seed in 0u64..1000, n1 in 1u64..100, n2 in 1u64..100) {
            let t = gaussian_target(2, 2.0).unwrap();
            let k = Kernel::rwm(&t, 1.1).unwrap();
            let f = [Functional::coord(0), Functional::norm_sq()];
            let full = run_chain(&k, &Init::Point(vec![0.3, -0.2]), n1 + n2, seed, &f).unwrap();
            let part = run_chain(&k, &Init::Point(vec![0.3, -0.2]), n1, seed, &f).unwrap();
            prop_assert_eq!(full, resume_chain(&k, part, n2, &f).unwrap());
        }

        #[test]
        fn shrinking_sigma_keeps_downhill_accepts(x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, z0 in -2.0f64..2.0, z1 in -2.0f64..2.0,
                                                   s in 0.01f64..2.0, f in 0.01f64..1.0) {
            // Along a convex U, U(x + tσz) ≤ max{U(x), U(x + σz)} for t ∈ [0,1].
            let t = gaussian_target(2, 1.0).unwrap();
            let x = [x0, x1];
            let y = [x0 + s * z0, x1 + s * z1];
            let ys = [x0 + f * s * z0, x1 + f * s * z1];
            if t.u(&y) <= t.u(&x) {
                prop_assert!(t.u(&ys) <= t.u(&x) + 1e-12);
            }
        }
    }
}
