//! Log-concave targets π ∝ exp(−U) for RWM and Gaussian-reference targets
//! dπ/dN(0,C) ∝ exp(−Ψ) for pCN.

use crate::error::{invalid, numerical, Result};
use crate::rng::RandomSource;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use std::fmt;
use std::sync::Arc;

pub type ScalarMap = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type ExactSampler = Arc<dyn Fn(&mut dyn RngCore) -> Vec<f64> + Send + Sync>;

pub const NEWTON_GRAD_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 200;
pub const POWER_REL_TOL: f64 = 1e-10;
pub const SANDWICH_TOL: f64 = 1e-8;

pub(crate) fn standard_normals(rng: &mut dyn RngCore, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// π ∝ exp(−U) with U m-strongly convex and L-smooth.
#[derive(Clone)]
pub struct TargetSpec {
    pub d: usize,
    pub potential: ScalarMap,
    pub gradient: VectorMap,
    pub m: f64,
    pub l: f64,
    pub mode: Vec<f64>,
    pub exact_sampler: Option<ExactSampler>,
    pub label: String,
}

impl fmt::Debug for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetSpec")
            .field("label", &self.label)
            .field("d", &self.d)
            .field("m", &self.m)
            .field("l", &self.l)
            .field("exact_sampler", &self.exact_sampler.is_some())
            .finish()
    }
}

impl TargetSpec {
    pub fn new(
        label: impl Into<String>,
        d: usize,
        potential: ScalarMap,
        gradient: VectorMap,
        m: f64,
        l: f64,
        mode: Vec<f64>,
        exact_sampler: Option<ExactSampler>,
    ) -> Result<Self> {
        if d == 0 {
            return invalid("dimension must be positive");
        }
        if !(m >= 0.0 && l > 0.0 && l >= m && l.is_finite()) {
            return invalid(format!("need 0 <= m <= L < inf with L > 0, got m={m}, L={l}"));
        }
        if mode.len() != d {
            return invalid(format!("mode has length {}, expected {d}", mode.len()));
        }
        Ok(Self {
            d,
            potential,
            gradient,
            m,
            l,
            mode,
            exact_sampler,
            label: label.into(),
        })
    }

    /// κ = L/m; infinite when m = 0.
    pub fn kappa(&self) -> f64 {
        if self.m > 0.0 {
            self.l / self.m
        } else {
            f64::INFINITY
        }
    }

    pub fn u(&self, x: &[f64]) -> f64 {
        (self.potential)(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }

    pub fn sample_exact(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        self.exact_sampler.as_ref().map(|s| s(rng))
    }

    /// Same target with different curvature labels; used to build deliberately
    /// mislabeled targets in checks.
    pub fn with_constants(&self, m: f64, l: f64) -> Result<Self> {
        let mut t = self.clone();
        if !(m >= 0.0 && l > 0.0 && l >= m) {
            return invalid(format!("need 0 <= m <= L, got m={m}, L={l}"));
        }
        t.m = m;
        t.l = l;
        Ok(t)
    }
}

/// U(x) = |x|²/(2σ₀²).
pub fn gaussian_target(d: usize, sigma0_sq: f64) -> Result<TargetSpec> {
    if d == 0 {
        return invalid("dimension must be positive");
    }
    if !(sigma0_sq > 0.0 && sigma0_sq.is_finite()) {
        return invalid(format!("sigma0_sq must be positive, got {sigma0_sq}"));
    }
    let prec = 1.0 / sigma0_sq;
    let sd = sigma0_sq.sqrt();
    TargetSpec::new(
        format!("gaussian(d={d}, sigma0_sq={sigma0_sq})"),
        d,
        Arc::new(move |x: &[f64]| 0.5 * prec * norm_sq(x)),
        Arc::new(move |x: &[f64]| x.iter().map(|v| prec * v).collect()),
        prec,
        prec,
        vec![0.0; d],
        Some(Arc::new(move |rng: &mut dyn RngCore| {
            standard_normals(rng, d).into_iter().map(|z| sd * z).collect()
        })),
    )
}

/// U(x) = Σ xᵢ²/(2vᵢ): m = 1/max v, L = 1/min v.
pub fn diag_gaussian_target(variances: &[f64]) -> Result<TargetSpec> {
    if variances.is_empty() {
        return invalid("dimension must be positive");
    }
    if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return invalid("variances must be positive and finite");
    }
    let d = variances.len();
    let prec: Arc<Vec<f64>> = Arc::new(variances.iter().map(|v| 1.0 / v).collect());
    let sds: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let vmax = variances.iter().cloned().fold(f64::MIN, f64::max);
    let vmin = variances.iter().cloned().fold(f64::MAX, f64::min);
    let (p1, p2) = (prec.clone(), prec);
    TargetSpec::new(
        format!("diag_gaussian(d={d})"),
        d,
        Arc::new(move |x: &[f64]| 0.5 * x.iter().zip(p1.iter()).map(|(v, p)| p * v * v).sum::<f64>()),
        Arc::new(move |x: &[f64]| x.iter().zip(p2.iter()).map(|(v, p)| p * v).collect()),
        1.0 / vmax,
        1.0 / vmin,
        vec![0.0; d],
        Some(Arc::new(move |rng: &mut dyn RngCore| {
            standard_normals(rng, d).into_iter().zip(&sds).map(|(z, s)| s * z).collect()
        })),
    )
}

// log(1 + e^{-t}) without overflow.
fn softplus_neg(t: f64) -> f64 {
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Largest eigenvalue of AᵀA (equal to that of AAᵀ) by power iteration.
pub fn lambda_max_gram(rows: &[Vec<f64>], d: usize) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let gram = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for a in rows {
            let s = dot(a, v);
            for (o, ai) in out.iter_mut().zip(a) {
                *o += s * ai;
            }
        }
        out
    };
    // Fixed, generic start vector so the iteration is deterministic.
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract()).collect();
    let n0 = norm_sq(&v).sqrt();
    v.iter_mut().for_each(|x| *x /= n0);
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let w = gram(&v);
        let nw = norm_sq(&w).sqrt();
        if nw == 0.0 {
            break;
        }
        let next = dot(&v, &w);
        let w: Vec<f64> = w.into_iter().map(|x| x / nw).collect();
        let converged = (next - lambda).abs() <= POWER_REL_TOL * next.abs();
        lambda = next;
        v = w;
        if converged {
            // Rayleigh quotients approach λ_max from below; finish with one
            // more application so the returned value is the norm ratio.
            return nw.max(lambda);
        }
    }
    // Slow separation of the top eigenvalues; fall back to a dense solver.
    let mut g = DMatrix::<f64>::zeros(d, d);
    for a in rows {
        let av = DVector::from_column_slice(a);
        g += &av * av.transpose();
    }
    g.symmetric_eigen().eigenvalues.iter().cloned().fold(0.0, f64::max)
}

/// Bayesian logistic regression with a N(0, σ₀²I) prior.
///
/// U(x) = |x|²/(2σ₀²) + Σᵢ {log(1 + exp(−⟨aᵢ,x⟩)) − yᵢ⟨aᵢ,x⟩}.
pub fn logistic_posterior_target(covariates: &[Vec<f64>], responses: &[f64], sigma0_sq: f64, d: usize) -> Result<TargetSpec> {
    if d == 0 {
        return invalid("dimension must be positive");
    }
    if !(sigma0_sq > 0.0 && sigma0_sq.is_finite()) {
        return invalid(format!("sigma0_sq must be positive, got {sigma0_sq}"));
    }
    if covariates.len() != responses.len() {
        return invalid(format!("{} covariate rows but {} responses", covariates.len(), responses.len()));
    }
    for (i, row) in covariates.iter().enumerate() {
        if row.len() != d {
            return invalid(format!("covariate row {i} has length {}, expected {d}", row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return invalid(format!("covariate row {i} is not finite"));
        }
    }
    if let Some((i, y)) = responses.iter().enumerate().find(|(_, y)| **y != 0.0 && **y != 1.0) {
        return invalid(format!("response {i} is {y}, expected 0 or 1"));
    }
    let prec = 1.0 / sigma0_sq;
    let rows: Arc<Vec<Vec<f64>>> = Arc::new(covariates.to_vec());
    let ys: Arc<Vec<f64>> = Arc::new(responses.to_vec());

    let (r1, y1) = (rows.clone(), ys.clone());
    let potential: ScalarMap = Arc::new(move |x: &[f64]| {
        let mut u = 0.5 * prec * norm_sq(x);
        for (a, y) in r1.iter().zip(y1.iter()) {
            let t = dot(a, x);
            u += softplus_neg(t) - y * t;
        }
        u
    });
    let (r2, y2) = (rows.clone(), ys.clone());
    let gradient: VectorMap = Arc::new(move |x: &[f64]| {
        let mut g: Vec<f64> = x.iter().map(|v| prec * v).collect();
        for (a, y) in r2.iter().zip(y2.iter()) {
            let t = dot(a, x);
            let c = sigmoid(t) - 1.0 - y;
            for (gi, ai) in g.iter_mut().zip(a) {
                *gi += c * ai;
            }
        }
        g
    });

    let lambda = lambda_max_gram(&rows, d);
    let l = prec + 0.25 * lambda;
    let mode = newton_mode(&potential, &gradient, &rows, prec, d)?;
    TargetSpec::new(
        format!("logistic(N={}, d={d}, sigma0_sq={sigma0_sq})", rows.len()),
        d,
        potential,
        gradient,
        prec,
        l,
        mode,
        None,
    )
}

fn newton_mode(potential: &ScalarMap, gradient: &VectorMap, rows: &[Vec<f64>], prec: f64, d: usize) -> Result<Vec<f64>> {
    let mut x = vec![0.0; d];
    for _ in 0..NEWTON_MAX_ITER {
        let g = gradient(&x);
        let gn = norm_sq(&g).sqrt();
        if gn <= NEWTON_GRAD_TOL {
            return Ok(x);
        }
        let mut h = DMatrix::<f64>::identity(d, d) * prec;
        for a in rows {
            let s = sigmoid(dot(a, &x));
            let w = s * (1.0 - s);
            for i in 0..d {
                for j in 0..d {
                    h[(i, j)] += w * a[i] * a[j];
                }
            }
        }
        let chol = h
            .cholesky()
            .ok_or_else(|| crate::Error::NumericalFailure { message: "Hessian lost positive definiteness".into(), partial: None })?;
        let step = chol.solve(&DVector::from_column_slice(&g));
        let u0 = potential(&x);
        let slope = -dot(&g, step.as_slice());
        let mut t = 1.0;
        // Armijo backtracking; the Newton direction is a descent direction.
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi - t * si).collect();
            if potential(&trial) <= u0 + 1e-4 * t * slope || t < 1e-12 {
                x = trial;
                break;
            }
            t *= 0.5;
        }
    }
    let gn = norm_sq(&gradient(&x)).sqrt();
    if gn <= NEWTON_GRAD_TOL {
        return Ok(x);
    }
    numerical(format!("Newton search for the mode stalled at gradient norm {gn:e}"), Some(gn))
}

/// Worst observed violations of m/2|h|² ≤ U(x+h) − U(x) − ⟨∇U(x),h⟩ ≤ L/2|h|².
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub max_lower_violation: f64,
    pub max_upper_violation: f64,
    pub min_lower_slack: f64,
    pub min_upper_slack: f64,
    pub passes: bool,
}

fn ball_point(rng: &mut dyn RngCore, d: usize, radius: f64) -> Vec<f64> {
    let z = standard_normals(rng, d);
    let n = norm_sq(&z).sqrt().max(f64::MIN_POSITIVE);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / d as f64);
    z.into_iter().map(|v| v * r / n).collect()
}

pub fn check_smooth_convex(target: &TargetSpec, n_samples: usize, radius: f64, seed: u64) -> SandwichReport {
    let src = RandomSource::new(seed);
    let mut rep = SandwichReport {
        max_lower_violation: 0.0,
        max_upper_violation: 0.0,
        min_lower_slack: f64::INFINITY,
        min_upper_slack: f64::INFINITY,
        passes: true,
    };
    for i in 0..n_samples {
        let mut rng = src.substream(i as u64);
        let x: Vec<f64> = ball_point(&mut rng, target.d, radius).iter().zip(&target.mode).map(|(a, b)| a + b).collect();
        let h = ball_point(&mut rng, target.d, radius);
        let xh: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
        let ux = target.u(&x);
        let gap = target.u(&xh) - ux - dot(&target.grad(&x), &h);
        let hh = norm_sq(&h);
        let lower_slack = gap - 0.5 * target.m * hh;
        let upper_slack = 0.5 * target.l * hh - gap;
        rep.min_lower_slack = rep.min_lower_slack.min(lower_slack);
        rep.min_upper_slack = rep.min_upper_slack.min(upper_slack);
        rep.max_lower_violation = rep.max_lower_violation.max(-lower_slack);
        rep.max_upper_violation = rep.max_upper_violation.max(-upper_slack);
        let tol = SANDWICH_TOL * (1.0 + ux.abs());
        if -lower_slack > tol || -upper_slack > tol {
            rep.passes = false;
        }
    }
    rep
}

/// Largest ‖∇U − central difference‖∞ / (1 + ‖∇U‖∞) over random points.
pub fn check_gradient(potential: &ScalarMap, gradient: &VectorMap, d: usize, n_points: usize, radius: f64, seed: u64) -> f64 {
    const STEP: f64 = 1e-5;
    let src = RandomSource::new(seed);
    let mut worst: f64 = 0.0;
    for i in 0..n_points {
        let mut rng = src.substream(i as u64);
        let x = ball_point(&mut rng, d, radius);
        let g = gradient(&x);
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut err: f64 = 0.0;
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += STEP;
            xm[j] -= STEP;
            let fd = (potential(&xp) - potential(&xm)) / (2.0 * STEP);
            err = err.max((fd - g[j]).abs());
        }
        worst = worst.max(err / (1.0 + gmax));
    }
    worst
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !cov.is_square() || cov.nrows() == 0 {
        return invalid("covariance must be a non-empty square matrix");
    }
    let asym = (cov - cov.transpose()).abs().max();
    if asym > 1e-12 * cov.abs().max() {
        return invalid("covariance is not symmetric");
    }
    match cov.clone().cholesky() {
        Some(c) => Ok(c.l()),
        None => invalid("covariance is not positive definite"),
    }
}

/// Gaussian-reference target: dπ/dN(0,C) ∝ exp(−Ψ), Ψ convex, L_Ψ-smooth,
/// minimized at 0.
#[derive(Clone)]
pub struct PcnTarget {
    pub d: usize,
    pub cov: DMatrix<f64>,
    pub cov_chol: DMatrix<f64>,
    /// Square roots of the diagonal when C is diagonal.
    pub diag_sqrt: Option<Vec<f64>>,
    pub psi: ScalarMap,
    pub psi_grad: VectorMap,
    pub l_psi: f64,
    pub trace_c: f64,
    pub exact_sampler: Option<ExactSampler>,
    pub label: String,
}

impl fmt::Debug for PcnTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PcnTarget")
            .field("label", &self.label)
            .field("d", &self.d)
            .field("l_psi", &self.l_psi)
            .field("trace_c", &self.trace_c)
            .finish()
    }
}

impl PcnTarget {
    pub fn new(
        label: impl Into<String>,
        cov: DMatrix<f64>,
        psi: ScalarMap,
        psi_grad: VectorMap,
        l_psi: f64,
        exact_sampler: Option<ExactSampler>,
    ) -> Result<Self> {
        if !(l_psi >= 0.0 && l_psi.is_finite()) {
            return invalid(format!("L_psi must be nonnegative, got {l_psi}"));
        }
        let cov_chol = cholesky(&cov)?;
        let d = cov.nrows();
        let is_diag = (0..d).all(|i| (0..d).all(|j| i == j || cov[(i, j)] == 0.0));
        let diag_sqrt = is_diag.then(|| (0..d).map(|i| cov[(i, i)].sqrt()).collect());
        let trace_c = cov.trace();
        Ok(Self {
            d,
            cov,
            cov_chol,
            diag_sqrt,
            psi,
            psi_grad,
            l_psi,
            trace_c,
            exact_sampler,
            label: label.into(),
        })
    }

    /// Ψ(x) = ½L|x|², for which π = N(0, C(I + LC)⁻¹) is sampled exactly.
    pub fn quadratic(cov: DMatrix<f64>, l_psi: f64) -> Result<Self> {
        if !(l_psi >= 0.0 && l_psi.is_finite()) {
            return invalid(format!("L_psi must be nonnegative, got {l_psi}"));
        }
        let d = cov.nrows();
        cholesky(&cov)?;
        let post = posterior_cov(&cov, l_psi)?;
        let post_chol = cholesky(&post)?;
        let sampler: ExactSampler = Arc::new(move |rng: &mut dyn RngCore| {
            let z = DVector::from_vec(standard_normals(rng, d));
            (&post_chol * z).as_slice().to_vec()
        });
        PcnTarget::new(
            format!("pcn_quadratic(d={d}, L={l_psi})"),
            cov,
            Arc::new(move |x: &[f64]| 0.5 * l_psi * norm_sq(x)),
            Arc::new(move |x: &[f64]| x.iter().map(|v| l_psi * v).collect()),
            l_psi,
            Some(sampler),
        )
    }

    pub fn kappa_tilde(&self) -> f64 {
        self.l_psi * self.trace_c
    }

    /// C·ξ^{1/2}-scaled draw: returns cov_chol·ξ.
    pub fn reference_noise(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let z = standard_normals(rng, self.d);
        match &self.diag_sqrt {
            Some(s) => z.iter().zip(s).map(|(a, b)| a * b).collect(),
            None => (&self.cov_chol * DVector::from_vec(z)).as_slice().to_vec(),
        }
    }

    pub fn sample_exact(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        self.exact_sampler.as_ref().map(|s| s(rng))
    }
}

/// C(I + LC)⁻¹, the covariance of N(0,C) tilted by exp(−½L|x|²).
pub fn posterior_cov(cov: &DMatrix<f64>, l: f64) -> Result<DMatrix<f64>> {
    let d = cov.nrows();
    let m = DMatrix::<f64>::identity(d, d) + cov * l;
    let Some(lu) = m.lu().try_inverse() else {
        return invalid("I + LC is singular");
    };
    let s = cov * lu;
    Ok((&s + s.transpose()) * 0.5)
}
