//! Dispatch from a parsed config to the library, producing report files.

use crate::config::{
    parse_config, Command, ConfigError, ConventionConfig, ExperimentConfig, FamilyConfig, InitConfig, KernelSpec, MetricConfig,
    MinorantConfig, MinorantKind, TargetConfig, Transfer, WarmStartConfig,
};
use crate::report::{fmt_f64, fmt_opt, to_csv, to_json};
use mhbound::bounds::{
    mixing_time_iso, pcn_alpha0_lower, pcn_close_coupling, pcn_eta, pcn_mixing_time_with, rwm_alpha0_lower, rwm_close_coupling,
    rwm_mixing_time_with, rwm_sigma, warm_start_u0, BoundReport, ConstantConvention, MixingOptions, WarmStart,
};
use mhbound::estimators::{dimension_scan, scan_point, ScanMetric, ScanResult, ScanRow, TargetFamily};
use mhbound::isoperimetry::{
    laplace_profile, minorant_from_logsobolev, minorant_from_poincare, strongly_logconcave_minorant, subbotin_minorant, IsoMinorant,
};
use mhbound::rng::RandomSource;
use mhbound::samplers::{
    accepted_proposal_init, mode_gaussian_init, pcn_gaussian_init, run_chain, run_chain_observed, ChainStats, Functional, Init, Kernel,
    KernelConfig, KernelTarget,
};
use mhbound::targets::{diag_gaussian_target, gaussian_target, logistic_posterior_target, PcnTarget, TargetSpec};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;
use std::sync::Arc;

pub const DEFAULT_N: u64 = 100_000;
pub const DEFAULT_DIMS: [usize; 5] = [2, 4, 8, 16, 32];
pub const DEFAULT_FLOW_DIMS: [usize; 3] = [2, 8, 32];
/// Sandwich checks allow this many standard errors on either side.
pub const SE_MARGIN: f64 = 3.0;
/// (metric, expected slope, tolerance) for the scaling-slope suite.
pub const SLOPE_TARGETS: [(ScanMetric, f64, f64); 3] =
    [(ScanMetric::Gap, -1.0, 0.15), (ScanMetric::Flow, -0.5, 0.15), (ScanMetric::Acceptance, 0.0, 0.05)];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<mhbound::Error> for CliError {
    fn from(e: mhbound::Error) -> Self {
        match e {
            mhbound::Error::InvalidArgument(m) => CliError::Invalid(m),
            mhbound::Error::NumericalFailure { message, .. } => CliError::Numerical(message),
        }
    }
}

impl CliError {
    /// 1 numerical failure, 2 bad config or argument, 3 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 1,
            CliError::Config(_) | CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    AcceptanceFloor,
    GapSandwich,
    FlowSandwich,
    ScalingSlope,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::AcceptanceFloor => "acceptance-floor",
            Suite::GapSandwich => "gap-sandwich",
            Suite::FlowSandwich => "flow-sandwich",
            Suite::ScalingSlope => "scaling-slope",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Bound,
    Sample,
    Verify(Suite),
    Scan,
}

impl Action {
    fn command(self) -> Command {
        match self {
            Action::Bound => Command::Bound,
            Action::Sample => Command::Sample,
            Action::Verify(_) => Command::Verify,
            Action::Scan => Command::Scan,
        }
    }
}

/// Files to write and what to print when no output directory is given.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub files: Vec<(String, String)>,
    pub stdout: String,
    /// False when a verification check failed.
    pub passed: bool,
    pub out_dir: Option<String>,
}

impl Output {
    /// Writes the files into `dir` if one is set, otherwise prints `stdout`.
    pub fn emit(&self, dir: Option<&Path>) -> CliResult<()> {
        let dir = dir.map(Path::to_path_buf).or_else(|| self.out_dir.as_ref().map(Into::into));
        match dir {
            Some(dir) => {
                std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
                for (name, body) in &self.files {
                    let p = dir.join(name);
                    std::fs::write(&p, body).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                }
            }
            None => print!("{}", self.stdout),
        }
        Ok(())
    }
}

pub enum BuiltTarget {
    Rwm(TargetSpec),
    Pcn(PcnTarget),
}

fn read_logistic_csv(path: &str) -> CliResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let header = rdr.headers().map_err(|e| CliError::Io(format!("{path}: {e}")))?.clone();
    let d = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("y".to_string()).chain((1..=d).map(|i| format!("a{i}"))).collect();
    if d == 0 || header.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return invalid(format!("{path}: header must be y,a1,...,ad"));
    }
    let (mut a, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Io(format!("{path}: {e}")))?;
        let vals: Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| CliError::Invalid(format!("{path}: row {}: {e}", i + 1)))?;
        y.push(vals[0]);
        a.push(vals[1..].to_vec());
    }
    if y.is_empty() {
        return invalid(format!("{path}: no data rows"));
    }
    Ok((a, y))
}

pub fn build_target(t: &TargetConfig) -> CliResult<BuiltTarget> {
    Ok(match t {
        TargetConfig::Gaussian { d, sigma0_sq } => BuiltTarget::Rwm(gaussian_target(*d, *sigma0_sq)?),
        TargetConfig::DiagGaussian { variances } => BuiltTarget::Rwm(diag_gaussian_target(variances)?),
        TargetConfig::Logistic { sigma0_sq, covariates, responses, csv } => {
            let (a, y) = match (covariates, responses, csv) {
                (Some(a), Some(y), None) => (a.clone(), y.clone()),
                (None, None, Some(path)) => read_logistic_csv(path)?,
                _ => return invalid("logistic target needs inline data or a csv path"),
            };
            let d = a[0].len();
            BuiltTarget::Rwm(logistic_posterior_target(&a, &y, *sigma0_sq, d)?)
        }
        TargetConfig::PcnQuadratic { l_psi, cov_diag, cov } => {
            let c = match (cov_diag, cov) {
                (Some(diag), None) => DMatrix::from_diagonal(&DVector::from_vec(diag.clone())),
                (None, Some(rows)) => {
                    let d = rows.len();
                    DMatrix::from_row_slice(d, d, &rows.concat())
                }
                _ => return invalid("pcn_quadratic target needs exactly one of cov_diag and cov"),
            };
            BuiltTarget::Pcn(PcnTarget::quadratic(c, *l_psi)?)
        }
    })
}

pub fn build_minorant(c: &MinorantConfig) -> CliResult<IsoMinorant> {
    let mut iso = match c.kind {
        MinorantKind::StronglyLogconcave { m } => strongly_logconcave_minorant(m)?,
        MinorantKind::Laplace => laplace_profile(),
        MinorantKind::Subbotin { alpha, k_alpha } => subbotin_minorant(alpha, k_alpha)?,
        MinorantKind::Poincare { gamma } => minorant_from_poincare(gamma)?,
        MinorantKind::Logsobolev { lambda, q, c_q } => minorant_from_logsobolev(lambda, q, c_q)?,
    };
    for t in &c.transfers {
        iso = match *t {
            Transfer::LipschitzPushforward { lip } => iso.lipschitz_pushforward(lip)?,
            Transfer::DensityPerturbation { c } => iso.density_perturbation(c)?,
            Transfer::OscPerturbation { osc } => iso.osc_perturbation(osc)?,
        };
    }
    Ok(iso)
}

fn require_target(cfg: &ExperimentConfig) -> CliResult<BuiltTarget> {
    match &cfg.target {
        Some(t) => build_target(t),
        None => Err(ConfigError::single("target: missing").into()),
    }
}

fn mixing_options(cfg: &ExperimentConfig) -> MixingOptions {
    MixingOptions {
        convention: match cfg.convention {
            ConventionConfig::Derived => ConstantConvention::Derived,
            ConventionConfig::Printed => ConstantConvention::Printed,
        },
        proof_sigma_factor: cfg.proof_sigma_factor,
    }
}

fn rwm_u0(cfg: &ExperimentConfig, t: &TargetSpec, varsigma: f64) -> CliResult<f64> {
    if let Some(u0) = cfg.u0 {
        return Ok(u0);
    }
    let ws = match cfg.warm_start.as_ref().unwrap_or(&WarmStartConfig::GaussianMode) {
        WarmStartConfig::GaussianMode => WarmStart::GaussianMode { kappa: t.kappa(), d: t.d },
        WarmStartConfig::AcceptedProposal { dist_sq } => WarmStart::AcceptedProposal {
            varsigma,
            kappa: t.kappa(),
            d: t.d,
            l: t.l,
            dist_sq: *dist_sq,
        },
        WarmStartConfig::PcnGaussian => return invalid("warm_start pcn_gaussian needs a pcn_quadratic target"),
    };
    Ok(warm_start_u0(&ws)?)
}

fn pcn_u0(cfg: &ExperimentConfig, p: &PcnTarget) -> CliResult<f64> {
    if let Some(u0) = cfg.u0 {
        return Ok(u0);
    }
    match cfg.warm_start.as_ref().unwrap_or(&WarmStartConfig::PcnGaussian) {
        WarmStartConfig::PcnGaussian => Ok(warm_start_u0(&WarmStart::PcnGaussian { l: p.l_psi, trace_c: p.trace_c })?),
        _ => invalid("a pcn_quadratic target only supports the pcn_gaussian warm start"),
    }
}

fn check_metric(iso: &IsoMinorant, cc_metric: mhbound::isoperimetry::MetricTag) -> CliResult<()> {
    if iso.metric != cc_metric {
        return invalid(format!("minorant {} is for the {:?} metric but the kernel couples in the {:?} metric", iso.label, iso.metric, cc_metric));
    }
    Ok(())
}

pub fn bound_report(cfg: &ExperimentConfig) -> CliResult<BoundReport> {
    let opts = mixing_options(cfg);
    match require_target(cfg)? {
        BuiltTarget::Rwm(t) => {
            let sigma_given = match cfg.kernel {
                None | Some(KernelSpec::Rwm { sigma: None }) => None,
                Some(KernelSpec::Rwm { sigma }) => sigma,
                Some(KernelSpec::Pcn { .. }) => return invalid("a pcn kernel needs a pcn_quadratic target"),
            };
            if !(t.m > 0.0) {
                return invalid("closed-form bounds need a strongly log-concave target (m > 0)");
            }
            let d = t.d;
            let varsigma = sigma_given.map_or(cfg.varsigma, |s| s * (t.l * d as f64).sqrt());
            let u0 = rwm_u0(cfg, &t, varsigma)?;
            match &cfg.minorant {
                None => Ok(rwm_mixing_time_with(t.m, t.l, d, varsigma, u0, cfg.eps_mix, cfg.variant, opts)?),
                Some(mc) => {
                    let iso = build_minorant(mc)?;
                    let sigma = rwm_sigma(varsigma, t.l, d);
                    let alpha0 = rwm_alpha0_lower(t.l, sigma, d);
                    let cc = rwm_close_coupling(alpha0, sigma)?;
                    check_metric(&iso, cc.metric)?;
                    let mut r = mixing_time_iso(&iso, &cc, u0, cfg.eps_mix)?;
                    r.alpha0_lower = Some(alpha0);
                    r.inputs.m = Some(t.m);
                    r.inputs.l = Some(t.l);
                    r.inputs.d = Some(d);
                    r.inputs.kappa = Some(t.kappa());
                    r.inputs.varsigma = Some(varsigma);
                    r.inputs.sigma = Some(sigma);
                    Ok(r)
                }
            }
        }
        BuiltTarget::Pcn(p) => {
            let (l, tc) = (p.l_psi, p.trace_c);
            let varsigma = match cfg.kernel {
                None | Some(KernelSpec::Pcn { rho: None, eta: None }) => cfg.varsigma,
                Some(KernelSpec::Pcn { rho, eta }) => {
                    let eta = eta.unwrap_or_else(|| (1.0 - rho.unwrap_or(0.0).powi(2)).sqrt());
                    eta * (l * tc).sqrt()
                }
                Some(KernelSpec::Rwm { .. }) => return invalid("an rwm kernel needs an rwm target"),
            };
            let u0 = pcn_u0(cfg, &p)?;
            match &cfg.minorant {
                None => Ok(pcn_mixing_time_with(l, tc, varsigma, u0, cfg.eps_mix, cfg.variant, opts)?),
                Some(mc) => {
                    let iso = build_minorant(mc)?;
                    let eta = pcn_eta(varsigma, l, tc);
                    let rho = (1.0 - eta * eta).sqrt();
                    let alpha0 = pcn_alpha0_lower(l, eta, tc)?;
                    let cc = pcn_close_coupling(alpha0, rho, eta)?;
                    check_metric(&iso, cc.metric)?;
                    let mut r = mixing_time_iso(&iso, &cc, u0, cfg.eps_mix)?;
                    r.alpha0_lower = Some(alpha0);
                    r.inputs.l = Some(l);
                    r.inputs.trace_c = Some(tc);
                    r.inputs.kappa_tilde = Some(l * tc);
                    r.inputs.varsigma = Some(varsigma);
                    r.inputs.rho = Some(rho);
                    r.inputs.eta = Some(eta);
                    Ok(r)
                }
            }
        }
    }
}

pub const BOUND_COLUMNS: [&str; 28] = [
    "kind",
    "phi_star_lower",
    "phi_star_upper",
    "phi_star_upper_alt",
    "gap_lower",
    "gap_upper",
    "alpha0_lower",
    "v_star",
    "mixing_real",
    "mixing_n",
    "t_far",
    "t_profile",
    "t_gap",
    "m",
    "l",
    "d",
    "kappa",
    "kappa_tilde",
    "trace_c",
    "varsigma",
    "sigma",
    "rho",
    "eta",
    "delta",
    "eps",
    "u0",
    "eps_mix",
    "variant",
];

pub fn bound_row(r: &BoundReport) -> Vec<String> {
    let i = &r.inputs;
    let mut row = vec![
        r.kind.clone(),
        fmt_f64(r.phi_star_lower),
        fmt_opt(r.phi_star_upper),
        fmt_opt(r.phi_star_upper_alt),
        fmt_f64(r.gap_lower),
        fmt_opt(r.gap_upper),
        fmt_opt(r.alpha0_lower),
        fmt_f64(r.v_star),
        fmt_f64(r.mixing_real),
        r.mixing_n.to_string(),
    ];
    row.extend(r.mixing_phase_terms.iter().map(|t| fmt_f64(*t)));
    row.extend([fmt_opt(i.m), fmt_opt(i.l), i.d.map(|d| d.to_string()).unwrap_or_default()]);
    row.extend([i.kappa, i.kappa_tilde, i.trace_c, i.varsigma, i.sigma, i.rho, i.eta, i.delta, i.eps, i.u0, i.eps_mix].map(fmt_opt));
    row.push(i.variant.map(|v| v.to_string()).unwrap_or_default());
    row
}

fn run_bound(cfgs: &[ExperimentConfig], batch: bool) -> CliResult<Output> {
    let reports: Vec<BoundReport> = cfgs.iter().map(bound_report).collect::<CliResult<_>>()?;
    let json = if batch { to_json(&reports) } else { to_json(&reports[0]) };
    let rows: Vec<Vec<String>> = reports.iter().map(bound_row).collect();
    let csv = to_csv(&BOUND_COLUMNS, &rows).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(Output {
        files: vec![("bound.json".into(), json.clone()), ("bound.csv".into(), csv)],
        stdout: json,
        passed: true,
        out_dir: cfgs[0].out.clone(),
    })
}

fn kernel_config(cfg: &ExperimentConfig, target: &BuiltTarget) -> CliResult<KernelConfig> {
    Ok(match (target, &cfg.kernel) {
        (BuiltTarget::Rwm(_), Some(KernelSpec::Rwm { sigma: Some(s) })) => KernelConfig::rwm(*s)?,
        (BuiltTarget::Rwm(t), None | Some(KernelSpec::Rwm { sigma: None })) => KernelConfig::rwm_from_varsigma(cfg.varsigma, t.l, t.d)?,
        (BuiltTarget::Pcn(_), Some(KernelSpec::Pcn { rho: Some(r), eta: Some(e) })) => KernelConfig::pcn(*r, *e)?,
        (BuiltTarget::Pcn(_), Some(KernelSpec::Pcn { rho: Some(r), eta: None })) => KernelConfig::pcn_from_rho(*r)?,
        (BuiltTarget::Pcn(_), Some(KernelSpec::Pcn { rho: None, eta: Some(e) })) => KernelConfig::pcn_from_eta(*e)?,
        (BuiltTarget::Pcn(p), None | Some(KernelSpec::Pcn { .. })) => KernelConfig::pcn_from_varsigma(cfg.varsigma, p.l_psi, p.trace_c)?,
        _ => return invalid("kernel kind does not match target kind"),
    })
}

fn build_functionals(names: &[String], kernel: &Kernel) -> CliResult<Vec<Functional>> {
    let d = kernel.dim();
    names
        .iter()
        .map(|name| match name.as_str() {
            "norm_sq" => Ok(Functional::norm_sq()),
            "potential" => {
                let k = kernel.clone();
                Ok(Functional::new("potential", Arc::new(move |x: &[f64]| k.energy(x))))
            }
            other => {
                let i: usize = other[1..].parse().map_err(|_| CliError::Invalid(format!("unknown functional {other}")))?;
                if i == 0 || i > d {
                    return invalid(format!("functional {other} is out of range for dimension {d}"));
                }
                Ok(Functional::coord(i - 1))
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct FunctionalSummary {
    label: String,
    mean: f64,
    variance: f64,
    dirichlet: f64,
}

#[derive(Debug, Serialize)]
struct SampleReport {
    target: String,
    kernel: KernelConfig,
    seed: u64,
    n: u64,
    burn_in: u64,
    init: &'static str,
    /// Proposals drawn before the first acceptance, for the accepted-proposal init.
    #[serde(skip_serializing_if = "Option::is_none")]
    init_trials: Option<u64>,
    acceptance_rate: f64,
    acceptance_se: f64,
    n_nonfinite: u64,
    functionals: Vec<FunctionalSummary>,
    stats: ChainStats,
}

fn require_seed(seed: Option<u64>) -> CliResult<u64> {
    seed.ok_or_else(|| ConfigError::single("seed: required for this command (config field or --seed)").into())
}

fn run_sample(cfg: &ExperimentConfig, seed: u64) -> CliResult<Output> {
    let target = require_target(cfg)?;
    let config = kernel_config(cfg, &target)?;
    let kernel = Kernel::new(
        match &target {
            BuiltTarget::Rwm(t) => KernelTarget::Rwm(t.clone()),
            BuiltTarget::Pcn(p) => KernelTarget::Pcn(p.clone()),
        },
        config,
    )?;
    let Some(n) = cfg.n else {
        return Err(ConfigError::single("n: required for sample").into());
    };
    let names: Vec<String> = if cfg.functionals.is_empty() { vec!["x1".into(), "norm_sq".into()] } else { cfg.functionals.clone() };
    let fns = build_functionals(&names, &kernel)?;
    let src = RandomSource::new(seed);
    let mut init_rng = src.split(1).substream(0);
    let default_init = if kernel.has_exact_sampler() { InitConfig::Stationary } else { InitConfig::Mode };
    let init_cfg = cfg.init.clone().unwrap_or(default_init);
    let mut init_trials = None;
    let (init, init_name) = match (&init_cfg, &target) {
        (InitConfig::Stationary, _) => (Init::Stationary, "stationary"),
        (InitConfig::Mode, BuiltTarget::Rwm(t)) => (Init::Point(t.mode.clone()), "mode"),
        (InitConfig::Mode, BuiltTarget::Pcn(p)) => (Init::Point(vec![0.0; p.d]), "mode"),
        (InitConfig::ModeGaussian, BuiltTarget::Rwm(t)) => (Init::Point(mode_gaussian_init(t, &mut init_rng)?), "mode_gaussian"),
        (InitConfig::ModeGaussian, BuiltTarget::Pcn(p)) => (Init::Point(pcn_gaussian_init(p, &mut init_rng)?), "mode_gaussian"),
        (InitConfig::AcceptedProposal, BuiltTarget::Rwm(t)) => {
            let KernelConfig::Rwm { sigma } = config else { unreachable!("rwm target has an rwm kernel") };
            let (x, trials) = accepted_proposal_init(&t.mode, t, sigma, &mut init_rng)?;
            init_trials = Some(trials);
            (Init::Point(x), "accepted_proposal")
        }
        (InitConfig::AcceptedProposal, BuiltTarget::Pcn(_)) => return invalid("accepted_proposal init is only defined for rwm"),
        (InitConfig::Point { point }, _) => (Init::Point(point.clone()), "point"),
    };
    let burn_in = cfg.burn_in.unwrap_or(0);
    let init = if burn_in > 0 {
        Init::Point(run_chain(&kernel, &init, burn_in, src.split(2).seed, &[])?.final_state)
    } else {
        init
    };
    let thin = cfg.thin;
    let mut traj: Vec<Vec<String>> = Vec::new();
    let mut observer = |step: u64, values: &[f64], accepted: bool| {
        if let Some(t) = thin {
            if step.is_multiple_of(t) {
                let mut row = vec![step.to_string()];
                row.extend(values.iter().map(|v| fmt_f64(*v)));
                row.push((accepted as u8).to_string());
                traj.push(row);
            }
        }
    };
    let stats = run_chain_observed(&kernel, &init, n, seed, &fns, &mut observer)?;
    let total = (stats.n_steps + stats.n_chains) as f64;
    let summaries = stats
        .functionals
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mean = stats.mean(k);
            FunctionalSummary {
                label: s.label.clone(),
                mean,
                variance: (s.sum_sq / total - mean * mean).max(0.0),
                dirichlet: stats.dirichlet(k),
            }
        })
        .collect();
    let report = SampleReport {
        target: match &target {
            BuiltTarget::Rwm(t) => t.label.clone(),
            BuiltTarget::Pcn(p) => p.label.clone(),
        },
        kernel: config,
        seed,
        n,
        burn_in,
        init: init_name,
        init_trials,
        acceptance_rate: stats.acceptance_rate(),
        acceptance_se: stats.acceptance_se(),
        n_nonfinite: stats.n_nonfinite,
        functionals: summaries,
        stats,
    };
    let json = to_json(&report);
    let mut files = vec![("chain.json".to_string(), json.clone())];
    if thin.is_some() {
        let mut header = vec!["step".to_string()];
        header.extend(names.iter().cloned());
        header.push("accepted".into());
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        files.push(("trajectory.csv".into(), to_csv(&h, &traj).map_err(|e| CliError::Io(e.to_string()))?));
    }
    Ok(Output {
        files,
        stdout: json,
        passed: true,
        out_dir: cfg.out.clone(),
    })
}

fn family_of(cfg: &ExperimentConfig) -> CliResult<TargetFamily> {
    Ok(match (&cfg.family, &cfg.target) {
        (Some(FamilyConfig::IsotropicGaussian { sigma0_sq }), _) => TargetFamily::IsotropicGaussian { sigma0_sq: *sigma0_sq },
        (Some(FamilyConfig::AnisotropicGaussian { kappa }), _) => TargetFamily::AnisotropicGaussian { kappa: *kappa },
        (None, None) => TargetFamily::IsotropicGaussian { sigma0_sq: 1.0 },
        (None, Some(TargetConfig::Gaussian { sigma0_sq, .. })) => TargetFamily::IsotropicGaussian { sigma0_sq: *sigma0_sq },
        (None, Some(_)) => return invalid("verify and scan run on Gaussian families; use a gaussian target or a family"),
    })
}

fn dims_of(cfg: &ExperimentConfig, default: &[usize]) -> Vec<usize> {
    match (&cfg.dims, &cfg.target) {
        (Some(d), _) => d.clone(),
        (None, Some(TargetConfig::Gaussian { d, .. })) if cfg.family.is_none() => vec![*d],
        _ => default.to_vec(),
    }
}

fn scan_metric(m: MetricConfig) -> ScanMetric {
    match m {
        MetricConfig::Gap => ScanMetric::Gap,
        MetricConfig::Flow => ScanMetric::Flow,
        MetricConfig::Acceptance => ScanMetric::Acceptance,
    }
}

fn metric_name(m: ScanMetric) -> &'static str {
    match m {
        ScanMetric::Gap => "gap",
        ScanMetric::Flow => "flow",
        ScanMetric::Acceptance => "acceptance",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    pub value: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    suite: &'static str,
    seed: u64,
    n: u64,
    varsigma: f64,
    family: TargetFamily,
    dims: Vec<usize>,
    pass: bool,
    checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    scans: Vec<ScanResult>,
}

/// Estimates at each d with the seeds a dimension scan would use.
fn rows_at(dims: &[usize], family: &TargetFamily, metric: ScanMetric, varsigma: f64, n: u64, seed: u64) -> CliResult<Vec<ScanRow>> {
    let src = RandomSource::new(seed);
    Ok(dims
        .par_iter()
        .map(|&d| scan_point(family, metric, varsigma, d, n, src.split(d as u64).seed))
        .collect::<mhbound::Result<_>>()?)
}

fn sandwich_check(name: &str, r: &ScanRow, floor_only: bool) -> Check {
    let lo = r.lower_bound - SE_MARGIN * r.std_error;
    let hi = r.upper_bound + SE_MARGIN * r.std_error;
    Check {
        name: name.to_string(),
        d: Some(r.d),
        value: r.estimate,
        std_error: r.std_error,
        lower: r.lower_bound,
        upper: r.upper_bound,
        pass: r.estimate >= lo && (floor_only || r.estimate <= hi),
    }
}

fn run_verify(cfg: &ExperimentConfig, suite: Suite, seed: u64) -> CliResult<Output> {
    let family = family_of(cfg)?;
    let n = cfg.n.unwrap_or(DEFAULT_N);
    let vs = cfg.varsigma;
    let default_dims: &[usize] = if suite == Suite::FlowSandwich { &DEFAULT_FLOW_DIMS } else { &DEFAULT_DIMS };
    let dims = dims_of(cfg, default_dims);
    let mut scans = Vec::new();
    let checks: Vec<Check> = match suite {
        Suite::AcceptanceFloor => rows_at(&dims, &family, ScanMetric::Acceptance, vs, n, seed)?
            .iter()
            .map(|r| sandwich_check("acceptance-floor", r, true))
            .collect(),
        Suite::GapSandwich => rows_at(&dims, &family, ScanMetric::Gap, vs, n, seed)?
            .iter()
            .map(|r| sandwich_check("gap-sandwich", r, false))
            .collect(),
        Suite::FlowSandwich => rows_at(&dims, &family, ScanMetric::Flow, vs, n, seed)?
            .iter()
            .map(|r| sandwich_check("flow-sandwich", r, false))
            .collect(),
        Suite::ScalingSlope => {
            if dims.len() < 2 {
                return invalid("scaling-slope needs at least two dimensions");
            }
            let src = RandomSource::new(seed);
            let mut out = Vec::new();
            for (k, (metric, expected, tol)) in SLOPE_TARGETS.iter().enumerate() {
                let scan = dimension_scan(&dims, vs, &family, *metric, n, src.split(k as u64).seed)?;
                out.push(Check {
                    name: format!("{}-slope", metric_name(*metric)),
                    d: None,
                    value: scan.slope,
                    std_error: scan.slope_se,
                    lower: expected - tol,
                    upper: expected + tol,
                    pass: (scan.slope - expected).abs() <= *tol,
                });
                scans.push(scan);
            }
            out
        }
    };
    let pass = checks.iter().all(|c| c.pass);
    let report = VerifyReport {
        suite: suite.name(),
        seed,
        n,
        varsigma: vs,
        family,
        dims,
        pass,
        checks,
        scans,
    };
    let json = to_json(&report);
    Ok(Output {
        files: vec![("verify.json".into(), json.clone())],
        stdout: json,
        passed: pass,
        out_dir: cfg.out.clone(),
    })
}

pub const SCAN_COLUMNS: [&str; 5] = ["d", "estimate", "std_error", "lower_bound", "upper_bound"];

fn run_scan(cfg: &ExperimentConfig, seed: u64) -> CliResult<Output> {
    let family = family_of(cfg)?;
    let metric = scan_metric(cfg.metric.unwrap_or(MetricConfig::Gap));
    let default_dims: &[usize] = if metric == ScanMetric::Flow { &DEFAULT_FLOW_DIMS } else { &DEFAULT_DIMS };
    let dims = cfg.dims.clone().unwrap_or_else(|| default_dims.to_vec());
    let scan = dimension_scan(&dims, cfg.varsigma, &family, metric, cfg.n.unwrap_or(DEFAULT_N), seed)?;
    let rows: Vec<Vec<String>> = scan
        .rows
        .iter()
        .map(|r| vec![r.d.to_string(), fmt_f64(r.estimate), fmt_f64(r.std_error), fmt_f64(r.lower_bound), fmt_f64(r.upper_bound)])
        .collect();
    let csv = to_csv(&SCAN_COLUMNS, &rows).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(Output {
        files: vec![("scan.csv".into(), csv.clone()), ("scan.json".into(), to_json(&scan))],
        stdout: csv,
        passed: true,
        out_dir: cfg.out.clone(),
    })
}

/// Parses `config_text` (an empty object when absent) and runs `action`.
/// `seed` overrides the config's seed.
pub fn run(action: Action, config_text: Option<&str>, seed: Option<u64>) -> CliResult<Output> {
    let text = config_text.unwrap_or("{}");
    let batch = text.trim_start().starts_with('[');
    let cfgs = parse_config(text)?;
    let mut errors = Vec::new();
    for (i, c) in cfgs.iter().enumerate() {
        if let Some(cmd) = c.command {
            if cmd != action.command() {
                let prefix = if batch { format!("[{i}].") } else { String::new() };
                errors.push(format!("{prefix}command: config is for {cmd:?} but {:?} was requested", action.command()));
            }
        }
    }
    if !errors.is_empty() {
        return Err(ConfigError { errors }.into());
    }
    if batch && action != Action::Bound {
        return Err(ConfigError::single("batch configs are only supported by bound").into());
    }
    let cfg = &cfgs[0];
    match action {
        Action::Bound => run_bound(&cfgs, batch),
        Action::Sample => run_sample(cfg, require_seed(seed.or(cfg.seed))?),
        Action::Verify(suite) => run_verify(cfg, suite, require_seed(seed.or(cfg.seed))?),
        Action::Scan => run_scan(cfg, require_seed(seed.or(cfg.seed))?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_bound_echoes_unit_condition_number() {
        let out = run(Action::Bound, Some(r#"{"target": {"kind": "gaussian", "d": 10}}"#), None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(v["inputs"]["kappa"].as_f64(), Some(1.0));
        assert_eq!(v["inputs"]["d"].as_u64(), Some(10));
        assert!(v["mixing_n"].as_u64().unwrap() > 0);
    }

    #[test]
    fn sigma_in_the_kernel_overrides_varsigma() {
        let text = r#"{"target": {"kind": "gaussian", "d": 4}, "kernel": {"kind": "rwm", "sigma": 0.25}}"#;
        let r = bound_report(&parse_config(text).unwrap()[0]).unwrap();
        assert!((r.inputs.varsigma.unwrap() - 0.5).abs() < 1e-15);
        assert!((r.inputs.sigma.unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn minorant_route_uses_the_rwm_coupling() {
        let text = r#"{"target": {"kind": "gaussian", "d": 3}, "minorant": {"kind": "strongly_logconcave", "m": 1}}"#;
        let r = bound_report(&parse_config(text).unwrap()[0]).unwrap();
        let sigma = rwm_sigma(1.0, 1.0, 3);
        let alpha0 = rwm_alpha0_lower(1.0, sigma, 3);
        assert!((r.inputs.delta.unwrap() - alpha0 * sigma).abs() < 1e-15);
        assert!((r.inputs.eps.unwrap() - 0.5 * alpha0).abs() < 1e-15);
    }

    #[test]
    fn pcn_target_rejects_euclidean_minorant() {
        let text = r#"{"target": {"kind": "pcn_quadratic", "l_psi": 1, "cov_diag": [1, 1]}, "minorant": {"kind": "laplace"}}"#;
        let err = bound_report(&parse_config(text).unwrap()[0]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn batch_bound_has_one_csv_row_per_config() {
        let text = r#"[{"target": {"kind": "gaussian", "d": 1}}, {"target": {"kind": "gaussian", "d": 2}}, {"target": {"kind": "gaussian", "d": 4}}]"#;
        let out = run(Action::Bound, Some(text), None).unwrap();
        let csv = &out.files.iter().find(|(n, _)| n == "bound.csv").unwrap().1;
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("kind,phi_star_lower"));
    }

    #[test]
    fn sample_needs_a_seed() {
        let err = run(Action::Sample, Some(r#"{"target": {"kind": "gaussian", "d": 2}, "n": 10}"#), None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn thinned_trajectory_has_expected_rows() {
        let text = r#"{"target": {"kind": "gaussian", "d": 2}, "n": 100, "thin": 10, "functionals": ["x2", "potential"]}"#;
        let out = run(Action::Sample, Some(text), Some(5)).unwrap();
        let csv = &out.files.iter().find(|(n, _)| n == "trajectory.csv").unwrap().1;
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,x2,potential,accepted");
        assert_eq!(lines.len(), 1 + 11);
    }

    #[test]
    fn command_mismatch_is_a_config_error() {
        let err = run(Action::Scan, Some(r#"{"command": "bound"}"#), Some(1)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn logistic_csv_target_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "y,a1,a2\n1,0.5,1.0\n0,-1.0,0.2\n1,0.1,-0.3\n").unwrap();
        let t = TargetConfig::Logistic {
            sigma0_sq: 1.0,
            covariates: None,
            responses: None,
            csv: Some(path.to_string_lossy().into_owned()),
        };
        let BuiltTarget::Rwm(spec) = build_target(&t).unwrap() else { panic!("expected an rwm target") };
        assert_eq!(spec.d, 2);
        std::fs::write(&path, "y,b1\n1,0.5\n").unwrap();
        assert!(build_target(&t).is_err());
    }
}
