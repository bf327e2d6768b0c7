//! Experiment configs. Parsing walks the JSON tree by hand so that every
//! violation is reported with its field path, not just the first one.

use serde::Serialize;
use serde_json::{Map, Value};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub errors: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.errors.join("; "))
    }
}

impl ConfigError {
    pub fn single(msg: impl Into<String>) -> Self {
        Self { errors: vec![msg.into()] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Bound,
    Sample,
    Verify,
    Scan,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetConfig {
    Gaussian {
        d: usize,
        sigma0_sq: f64,
    },
    DiagGaussian {
        variances: Vec<f64>,
    },
    Logistic {
        sigma0_sq: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        covariates: Option<Vec<Vec<f64>>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        responses: Option<Vec<f64>>,
        /// CSV with header `y,a1,…,ad`.
        #[serde(skip_serializing_if = "Option::is_none")]
        csv: Option<String>,
    },
    PcnQuadratic {
        l_psi: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        cov_diag: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        cov: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Rwm {
        #[serde(skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    Pcn {
        #[serde(skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MinorantKind {
    StronglyLogconcave { m: f64 },
    Laplace,
    Subbotin { alpha: f64, k_alpha: f64 },
    Poincare { gamma: f64 },
    Logsobolev {
        lambda: f64,
        q: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        c_q: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transfer {
    LipschitzPushforward { lip: f64 },
    DensityPerturbation { c: f64 },
    OscPerturbation { osc: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinorantConfig {
    #[serde(flatten)]
    pub kind: MinorantKind,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub transfers: Vec<Transfer>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarmStartConfig {
    GaussianMode,
    AcceptedProposal { dist_sq: f64 },
    PcnGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitConfig {
    Stationary,
    Mode,
    ModeGaussian,
    AcceptedProposal,
    Point { point: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyConfig {
    IsotropicGaussian { sigma0_sq: f64 },
    AnisotropicGaussian { kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricConfig {
    Gap,
    Flow,
    Acceptance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionConfig {
    Derived,
    Printed,
}

/// One experiment. Defaults: varsigma = 1, eps_mix = 1, variant = 1,
/// convention = derived.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minorant: Option<MinorantConfig>,
    pub varsigma: f64,
    pub eps_mix: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<WarmStartConfig>,
    pub variant: u8,
    pub convention: ConventionConfig,
    pub proof_sigma_factor: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitConfig>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub functionals: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thin: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

const TOP_KEYS: &[&str] = &[
    "command",
    "target",
    "kernel",
    "minorant",
    "varsigma",
    "eps_mix",
    "u0",
    "warm_start",
    "variant",
    "convention",
    "proof_sigma_factor",
    "seed",
    "n",
    "init",
    "functionals",
    "thin",
    "burn_in",
    "dims",
    "metric",
    "family",
    "out",
];

struct Walk {
    errors: Vec<String>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Walk {
    fn err(&mut self, path: &str, msg: impl fmt::Display) {
        self.errors.push(format!("{path}: {msg}"));
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        match v.as_object() {
            Some(m) => Some(m),
            None => {
                self.err(path, "expected an object");
                None
            }
        }
    }

    fn keys(&mut self, m: &Map<String, Value>, path: &str, allowed: &[&str]) {
        for k in m.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(&join(path, k), "unknown field");
            }
        }
    }

    fn kind<'a>(&mut self, m: &'a Map<String, Value>, path: &str) -> Option<&'a str> {
        match m.get("kind") {
            Some(Value::String(s)) => Some(s.as_str()),
            Some(_) => {
                self.err(&join(path, "kind"), "expected a string");
                None
            }
            None => {
                self.err(&join(path, "kind"), "missing");
                None
            }
        }
    }

    fn num(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<f64> {
        match m.get(key) {
            None | Some(Value::Null) => None,
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => Some(x),
                _ => {
                    self.err(&join(path, key), "expected a finite number");
                    None
                }
            },
        }
    }

    fn req_num(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> f64 {
        if !m.contains_key(key) {
            self.err(&join(path, key), "missing");
            return f64::NAN;
        }
        self.num(m, path, key).unwrap_or(f64::NAN)
    }

    fn positive(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> f64 {
        let v = self.req_num(m, path, key);
        if !v.is_nan() && v <= 0.0 {
            self.err(&join(path, key), format!("must be positive, got {v}"));
        }
        v
    }

    fn uint(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<u64> {
        match m.get(key) {
            None | Some(Value::Null) => None,
            Some(v) => match v.as_u64() {
                Some(x) => Some(x),
                None => {
                    self.err(&join(path, key), "expected a nonnegative integer");
                    None
                }
            },
        }
    }

    fn boolean(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<bool> {
        match m.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::Bool(b)) => Some(*b),
            Some(_) => {
                self.err(&join(path, key), "expected a boolean");
                None
            }
        }
    }

    fn string(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<String> {
        match m.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.err(&join(path, key), "expected a string");
                None
            }
        }
    }

    fn vector(&mut self, v: &Value, path: &str) -> Option<Vec<f64>> {
        let Some(arr) = v.as_array() else {
            self.err(path, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(arr.len());
        let mut ok = true;
        for (i, x) in arr.iter().enumerate() {
            match x.as_f64() {
                Some(f) if f.is_finite() => out.push(f),
                _ => {
                    self.err(&format!("{path}[{i}]"), "expected a finite number");
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }

    fn opt_vector(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<Vec<f64>> {
        m.get(key).filter(|v| !v.is_null()).and_then(|v| self.vector(v, &join(path, key)))
    }

    fn opt_matrix(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<Vec<Vec<f64>>> {
        let v = m.get(key).filter(|v| !v.is_null())?;
        let p = join(path, key);
        let Some(rows) = v.as_array() else {
            self.err(&p, "expected an array of rows");
            return None;
        };
        let parsed: Vec<Option<Vec<f64>>> = rows.iter().enumerate().map(|(i, r)| self.vector(r, &format!("{p}[{i}]"))).collect();
        parsed.into_iter().collect()
    }

    fn target(&mut self, v: &Value, path: &str) -> Option<TargetConfig> {
        let m = self.object(v, path)?;
        let kind = self.kind(m, path)?;
        match kind {
            "gaussian" => {
                self.keys(m, path, &["kind", "d", "sigma0_sq"]);
                let d = self.uint(m, path, "d");
                if d.is_none() && !m.contains_key("d") {
                    self.err(&join(path, "d"), "missing");
                }
                if d == Some(0) {
                    self.err(&join(path, "d"), "must be positive");
                }
                let sigma0_sq = self.num(m, path, "sigma0_sq").unwrap_or(1.0);
                if sigma0_sq <= 0.0 {
                    self.err(&join(path, "sigma0_sq"), "must be positive");
                }
                Some(TargetConfig::Gaussian {
                    d: d? as usize,
                    sigma0_sq,
                })
            }
            "diag_gaussian" => {
                self.keys(m, path, &["kind", "variances"]);
                let Some(variances) = self.opt_vector(m, path, "variances") else {
                    if !m.contains_key("variances") {
                        self.err(&join(path, "variances"), "missing");
                    }
                    return None;
                };
                if variances.is_empty() || variances.iter().any(|v| *v <= 0.0) {
                    self.err(&join(path, "variances"), "must be a nonempty list of positive numbers");
                }
                Some(TargetConfig::DiagGaussian { variances })
            }
            "logistic" => {
                self.keys(m, path, &["kind", "sigma0_sq", "covariates", "responses", "csv"]);
                let sigma0_sq = self.positive(m, path, "sigma0_sq");
                let covariates = self.opt_matrix(m, path, "covariates");
                let responses = self.opt_vector(m, path, "responses");
                let csv = self.string(m, path, "csv");
                let inline = covariates.is_some() || responses.is_some();
                if inline == csv.is_some() {
                    self.err(path, "give either covariates and responses inline or a csv path, not both");
                } else if inline {
                    match (&covariates, &responses) {
                        (Some(a), Some(y)) => {
                            if a.len() != y.len() {
                                self.err(path, format!("{} covariate rows but {} responses", a.len(), y.len()));
                            }
                            if a.is_empty() || a.iter().any(|r| r.len() != a[0].len() || r.is_empty()) {
                                self.err(&join(path, "covariates"), "rows must be nonempty and of equal length");
                            }
                            if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
                                self.err(&join(path, "responses"), "responses must be 0 or 1");
                            }
                        }
                        _ => self.err(path, "inline data needs both covariates and responses"),
                    }
                }
                Some(TargetConfig::Logistic {
                    sigma0_sq,
                    covariates,
                    responses,
                    csv,
                })
            }
            "pcn_quadratic" => {
                self.keys(m, path, &["kind", "l_psi", "cov_diag", "cov"]);
                let l_psi = self.req_num(m, path, "l_psi");
                if l_psi < 0.0 {
                    self.err(&join(path, "l_psi"), "must be nonnegative");
                }
                let cov_diag = self.opt_vector(m, path, "cov_diag");
                let cov = self.opt_matrix(m, path, "cov");
                if cov_diag.is_some() == cov.is_some() {
                    self.err(path, "give exactly one of cov_diag and cov");
                }
                if let Some(c) = &cov_diag {
                    if c.is_empty() || c.iter().any(|v| *v <= 0.0) {
                        self.err(&join(path, "cov_diag"), "must be a nonempty list of positive numbers");
                    }
                }
                if let Some(c) = &cov {
                    if c.is_empty() || c.iter().any(|r| r.len() != c.len()) {
                        self.err(&join(path, "cov"), "must be a square matrix");
                    }
                }
                Some(TargetConfig::PcnQuadratic { l_psi, cov_diag, cov })
            }
            other => {
                self.err(&join(path, "kind"), format!("unknown target kind '{other}'"));
                None
            }
        }
    }

    fn kernel(&mut self, v: &Value, path: &str) -> Option<KernelSpec> {
        let m = self.object(v, path)?;
        match self.kind(m, path)? {
            "rwm" => {
                self.keys(m, path, &["kind", "sigma"]);
                let sigma = self.num(m, path, "sigma");
                if sigma.is_some_and(|s| s <= 0.0) {
                    self.err(&join(path, "sigma"), "must be positive");
                }
                Some(KernelSpec::Rwm { sigma })
            }
            "pcn" => {
                self.keys(m, path, &["kind", "rho", "eta"]);
                let rho = self.num(m, path, "rho");
                let eta = self.num(m, path, "eta");
                for (k, v) in [("rho", rho), ("eta", eta)] {
                    if v.is_some_and(|x| !(x > 0.0 && x < 1.0)) {
                        self.err(&join(path, k), "must lie in (0,1)");
                    }
                }
                if let (Some(r), Some(e)) = (rho, eta) {
                    if (r * r + e * e - 1.0).abs() > 1e-12 {
                        self.err(path, "rho^2 + eta^2 must equal 1");
                    }
                }
                Some(KernelSpec::Pcn { rho, eta })
            }
            other => {
                self.err(&join(path, "kind"), format!("unknown kernel kind '{other}'"));
                None
            }
        }
    }

    fn minorant(&mut self, v: &Value, path: &str) -> Option<MinorantConfig> {
        let m = self.object(v, path)?;
        let kind_name = self.kind(m, path)?;
        let kind = match kind_name {
            "strongly_logconcave" => {
                self.keys(m, path, &["kind", "m", "transfers"]);
                MinorantKind::StronglyLogconcave {
                    m: self.positive(m, path, "m"),
                }
            }
            "laplace" => {
                self.keys(m, path, &["kind", "transfers"]);
                MinorantKind::Laplace
            }
            "subbotin" => {
                self.keys(m, path, &["kind", "alpha", "k_alpha", "transfers"]);
                let alpha = self.req_num(m, path, "alpha");
                if !(alpha > 1.0 && alpha < 2.0) && !alpha.is_nan() {
                    self.err(&join(path, "alpha"), "must lie in (1,2)");
                }
                MinorantKind::Subbotin {
                    alpha,
                    k_alpha: self.positive(m, path, "k_alpha"),
                }
            }
            "poincare" => {
                self.keys(m, path, &["kind", "gamma", "transfers"]);
                MinorantKind::Poincare {
                    gamma: self.positive(m, path, "gamma"),
                }
            }
            "logsobolev" => {
                self.keys(m, path, &["kind", "lambda", "q", "c_q", "transfers"]);
                let lambda = self.positive(m, path, "lambda");
                let q = self.num(m, path, "q").unwrap_or(2.0);
                if !(1.0..=2.0).contains(&q) {
                    self.err(&join(path, "q"), "must lie in [1,2]");
                }
                let c_q = self.num(m, path, "c_q");
                if q < 2.0 && c_q.is_none() {
                    self.err(&join(path, "c_q"), "required when q < 2");
                }
                MinorantKind::Logsobolev { lambda, q, c_q }
            }
            other => {
                self.err(&join(path, "kind"), format!("unknown minorant kind '{other}'"));
                return None;
            }
        };
        let mut transfers = Vec::new();
        if let Some(t) = m.get("transfers") {
            let tp = join(path, "transfers");
            match t.as_array() {
                None => self.err(&tp, "expected an array"),
                Some(arr) => {
                    for (i, item) in arr.iter().enumerate() {
                        let ip = format!("{tp}[{i}]");
                        let Some(o) = self.object(item, &ip) else { continue };
                        let Some(k) = self.kind(o, &ip) else { continue };
                        match k {
                            "lipschitz_pushforward" | "lipschitz" => {
                                self.keys(o, &ip, &["kind", "lip"]);
                                transfers.push(Transfer::LipschitzPushforward {
                                    lip: self.positive(o, &ip, "lip"),
                                });
                            }
                            "density_perturbation" | "density" => {
                                self.keys(o, &ip, &["kind", "c"]);
                                transfers.push(Transfer::DensityPerturbation {
                                    c: self.positive(o, &ip, "c"),
                                });
                            }
                            "osc_perturbation" | "osc" => {
                                self.keys(o, &ip, &["kind", "osc"]);
                                transfers.push(Transfer::OscPerturbation {
                                    osc: self.req_num(o, &ip, "osc"),
                                });
                            }
                            other => self.err(&join(&ip, "kind"), format!("unknown transfer kind '{other}'")),
                        }
                    }
                }
            }
        }
        Some(MinorantConfig { kind, transfers })
    }

    fn warm_start(&mut self, v: &Value, path: &str) -> Option<WarmStartConfig> {
        let m = self.object(v, path)?;
        match self.kind(m, path)? {
            "gaussian_mode" => {
                self.keys(m, path, &["kind"]);
                Some(WarmStartConfig::GaussianMode)
            }
            "accepted_proposal" => {
                self.keys(m, path, &["kind", "dist_sq"]);
                let dist_sq = self.num(m, path, "dist_sq").unwrap_or(0.0);
                if dist_sq < 0.0 {
                    self.err(&join(path, "dist_sq"), "must be nonnegative");
                }
                Some(WarmStartConfig::AcceptedProposal { dist_sq })
            }
            "pcn_gaussian" => {
                self.keys(m, path, &["kind"]);
                Some(WarmStartConfig::PcnGaussian)
            }
            other => {
                self.err(&join(path, "kind"), format!("unknown warm-start kind '{other}'"));
                None
            }
        }
    }

    fn init(&mut self, v: &Value, path: &str) -> Option<InitConfig> {
        let (kind, m) = match v {
            Value::String(s) => (s.as_str(), None),
            Value::Object(m) => (self.kind(m, path)?, Some(m)),
            _ => {
                self.err(path, "expected a string or an object");
                return None;
            }
        };
        let simple = |c: InitConfig| Some(c);
        match kind {
            "stationary" => simple(InitConfig::Stationary),
            "mode" => simple(InitConfig::Mode),
            "mode_gaussian" => simple(InitConfig::ModeGaussian),
            "accepted_proposal" => simple(InitConfig::AcceptedProposal),
            "point" => {
                let Some(m) = m else {
                    self.err(path, "point init needs an object with a 'point' array");
                    return None;
                };
                self.keys(m, path, &["kind", "point"]);
                match m.get("point") {
                    Some(p) => self.vector(p, &join(path, "point")).map(|point| InitConfig::Point { point }),
                    None => {
                        self.err(&join(path, "point"), "missing");
                        None
                    }
                }
            }
            other => {
                self.err(path, format!("unknown init kind '{other}'"));
                None
            }
        }
    }

    fn family(&mut self, v: &Value, path: &str) -> Option<FamilyConfig> {
        let m = self.object(v, path)?;
        match self.kind(m, path)? {
            "isotropic_gaussian" => {
                self.keys(m, path, &["kind", "sigma0_sq"]);
                let s = self.num(m, path, "sigma0_sq").unwrap_or(1.0);
                if s <= 0.0 {
                    self.err(&join(path, "sigma0_sq"), "must be positive");
                }
                Some(FamilyConfig::IsotropicGaussian { sigma0_sq: s })
            }
            "anisotropic_gaussian" => {
                self.keys(m, path, &["kind", "kappa"]);
                let kappa = self.req_num(m, path, "kappa");
                if kappa < 1.0 {
                    self.err(&join(path, "kappa"), "must be at least 1");
                }
                Some(FamilyConfig::AnisotropicGaussian { kappa })
            }
            other => {
                self.err(&join(path, "kind"), format!("unknown family kind '{other}'"));
                None
            }
        }
    }

    fn enum_str<T: Copy>(&mut self, m: &Map<String, Value>, path: &str, key: &str, options: &[(&str, T)]) -> Option<T> {
        let s = self.string(m, path, key)?;
        match options.iter().find(|(name, _)| *name == s) {
            Some((_, v)) => Some(*v),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(&join(path, key), format!("unknown value '{s}', expected one of {names:?}"));
                None
            }
        }
    }

    fn experiment(&mut self, v: &Value, path: &str) -> Option<ExperimentConfig> {
        let m = self.object(v, path)?;
        self.keys(m, path, TOP_KEYS);
        let sub = |k: &str| join(path, k);
        let command = self.enum_str(
            m,
            path,
            "command",
            &[("bound", Command::Bound), ("sample", Command::Sample), ("verify", Command::Verify), ("scan", Command::Scan)],
        );
        let target = m.get("target").and_then(|t| self.target(t, &sub("target")));
        let kernel = m.get("kernel").and_then(|t| self.kernel(t, &sub("kernel")));
        let minorant = m.get("minorant").and_then(|t| self.minorant(t, &sub("minorant")));
        let varsigma = self.num(m, path, "varsigma").unwrap_or(1.0);
        if varsigma <= 0.0 {
            self.err(&sub("varsigma"), "must be positive");
        }
        let eps_mix = self.num(m, path, "eps_mix").unwrap_or(1.0);
        if !(eps_mix > 0.0 && eps_mix < 8.0) {
            self.err(&sub("eps_mix"), "must lie in (0,8)");
        }
        let u0 = self.num(m, path, "u0");
        if u0.is_some_and(|u| u < 0.0) {
            self.err(&sub("u0"), "must be nonnegative");
        }
        let warm_start = m.get("warm_start").and_then(|t| self.warm_start(t, &sub("warm_start")));
        if u0.is_some() && warm_start.is_some() {
            self.err(path, "give at most one of u0 and warm_start");
        }
        let variant = self.uint(m, path, "variant").unwrap_or(1);
        if !(1..=3).contains(&variant) {
            self.err(&sub("variant"), "must be 1, 2 or 3");
        }
        let convention = self
            .enum_str(m, path, "convention", &[("derived", ConventionConfig::Derived), ("printed", ConventionConfig::Printed)])
            .unwrap_or(ConventionConfig::Derived);
        let proof_sigma_factor = self.boolean(m, path, "proof_sigma_factor").unwrap_or(false);
        let seed = self.uint(m, path, "seed");
        let n = self.uint(m, path, "n");
        if n == Some(0) {
            self.err(&sub("n"), "must be positive");
        }
        let init = m.get("init").and_then(|t| self.init(t, &sub("init")));
        let mut functionals = Vec::new();
        if let Some(fv) = m.get("functionals") {
            match fv.as_array() {
                None => self.err(&sub("functionals"), "expected an array of names"),
                Some(arr) => {
                    for (i, item) in arr.iter().enumerate() {
                        match item.as_str() {
                            Some(s) if valid_functional(s) => functionals.push(s.to_string()),
                            _ => self.err(
                                &format!("{}[{i}]", sub("functionals")),
                                "expected 'x<i>' (1-based), 'norm_sq' or 'potential'",
                            ),
                        }
                    }
                }
            }
        }
        let thin = self.uint(m, path, "thin");
        if thin == Some(0) {
            self.err(&sub("thin"), "must be positive");
        }
        let burn_in = self.uint(m, path, "burn_in");
        let dims = match m.get("dims") {
            None => None,
            Some(dv) => match dv.as_array() {
                Some(arr) if arr.iter().all(|x| x.as_u64().is_some_and(|d| d > 0)) => {
                    Some(arr.iter().map(|x| x.as_u64().unwrap() as usize).collect())
                }
                _ => {
                    self.err(&sub("dims"), "expected an array of positive integers");
                    None
                }
            },
        };
        let metric = self.enum_str(
            m,
            path,
            "metric",
            &[("gap", MetricConfig::Gap), ("flow", MetricConfig::Flow), ("acceptance", MetricConfig::Acceptance)],
        );
        let family = m.get("family").and_then(|t| self.family(t, &sub("family")));
        let out = self.string(m, path, "out");
        Some(ExperimentConfig {
            command,
            target,
            kernel,
            minorant,
            varsigma,
            eps_mix,
            u0,
            warm_start,
            variant: variant as u8,
            convention,
            proof_sigma_factor,
            seed,
            n,
            init,
            functionals,
            thin,
            burn_in,
            dims,
            metric,
            family,
            out,
        })
    }
}

fn valid_functional(s: &str) -> bool {
    s == "norm_sq" || s == "potential" || s.strip_prefix('x').and_then(|i| i.parse::<usize>().ok()).is_some_and(|i| i >= 1)
}

fn finish<T>(walk: Walk, value: Option<T>) -> Result<T, ConfigError> {
    match value {
        Some(v) if walk.errors.is_empty() => Ok(v),
        _ => Err(ConfigError {
            errors: if walk.errors.is_empty() { vec!["invalid config".into()] } else { walk.errors },
        }),
    }
}

pub fn parse_value(v: &Value) -> Result<ExperimentConfig, ConfigError> {
    let mut walk = Walk { errors: Vec::new() };
    let cfg = walk.experiment(v, "");
    finish(walk, cfg)
}

/// Parses one config or, for batch mode, an array of configs.
pub fn parse_config(text: &str) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ConfigError::single(format!("not valid JSON: {e}")))?;
    match &v {
        Value::Array(items) => {
            if items.is_empty() {
                return Err(ConfigError::single("batch config is empty"));
            }
            let mut walk = Walk { errors: Vec::new() };
            let cfgs: Vec<Option<ExperimentConfig>> = items.iter().enumerate().map(|(i, item)| walk.experiment(item, &format!("[{i}]"))).collect();
            let all: Option<Vec<ExperimentConfig>> = cfgs.into_iter().collect();
            finish(walk, all)
        }
        _ => parse_value(&v).map(|c| vec![c]),
    }
}

pub fn emit_config(cfg: &ExperimentConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_bound_config_gets_defaults() {
        let cfg = &parse_config(r#"{"target": {"kind": "gaussian", "d": 10}}"#).unwrap()[0];
        assert_eq!(cfg.varsigma, 1.0);
        assert_eq!(cfg.eps_mix, 1.0);
        assert_eq!(cfg.variant, 1);
        assert_eq!(cfg.target, Some(TargetConfig::Gaussian { d: 10, sigma0_sq: 1.0 }));
    }

    #[test]
    fn unknown_minorant_names_the_field() {
        let err = parse_config(r#"{"minorant": {"kind": "cauchy"}}"#).unwrap_err();
        assert!(err.errors.iter().any(|e| e.starts_with("minorant.kind") && e.contains("cauchy")), "{err}");
    }

    #[test]
    fn every_violation_is_reported() {
        let err = parse_config(r#"{"varsigma": -1, "eps_mix": 9, "bogus": 1, "target": {"kind": "gaussian"}}"#).unwrap_err();
        assert!(err.errors.len() >= 4, "{err}");
        for needle in ["varsigma", "eps_mix", "bogus", "target.d"] {
            assert!(err.errors.iter().any(|e| e.starts_with(needle)), "missing {needle}: {err}");
        }
    }

    #[test]
    fn batch_paths_are_indexed() {
        let err = parse_config(r#"[{"varsigma": 1}, {"varsigma": "x"}]"#).unwrap_err();
        assert_eq!(err.errors.len(), 1);
        assert!(err.errors[0].starts_with("[1].varsigma"));
    }

    #[test]
    fn round_trip_is_idempotent() {
        let text = r#"{
            "command": "sample",
            "target": {"kind": "logistic", "sigma0_sq": 2.0, "covariates": [[1.0, 0.5], [0.2, -1.0]], "responses": [1, 0]},
            "kernel": {"kind": "rwm", "sigma": 0.3},
            "minorant": {"kind": "logsobolev", "lambda": 2.0, "transfers": [{"kind": "density_perturbation", "c": 0.5}]},
            "warm_start": {"kind": "accepted_proposal", "dist_sq": 1.5},
            "init": "mode", "functionals": ["x1", "potential"], "seed": 7, "n": 100, "thin": 10,
            "dims": [2, 4], "metric": "flow", "family": {"kind": "anisotropic_gaussian", "kappa": 3.0},
            "convention": "printed", "variant": 2
        }"#;
        let parsed = parse_config(text).unwrap();
        let emitted = emit_config(&parsed[0]);
        let again = parse_value(&emitted).unwrap();
        assert_eq!(parsed[0], again);
        assert_eq!(emit_config(&again), emitted);
    }

    #[test]
    fn logistic_data_sources_are_exclusive() {
        let err = parse_config(r#"{"target": {"kind": "logistic", "sigma0_sq": 1, "csv": "a.csv", "responses": [1]}}"#).unwrap_err();
        assert!(err.errors.iter().any(|e| e.contains("either")));
    }

    #[test]
    fn functional_names_are_checked() {
        assert!(parse_config(r#"{"functionals": ["x0"]}"#).is_err());
        assert!(parse_config(r#"{"functionals": ["x3", "norm_sq"]}"#).is_ok());
    }

    #[test]
    fn invalid_json_is_a_config_error() {
        assert!(parse_config("{").is_err());
    }
}
