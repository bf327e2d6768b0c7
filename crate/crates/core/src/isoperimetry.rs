//! Isoperimetric minorants Ĩ of a target, the transfer rules between them and
//! the three-set lower bound they certify.
//!
//! Every minorant is stored as `scale · base(min{p, 1−p})`, so symmetry about ½
//! holds by construction. The regular/concave flags a constructor emits are
//! checked on a grid before the value is returned.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub use crate::special::{gaussian_profile, inv_normal_cdf};

/// Evaluation clamp for p near 0 and 1.
pub const P_MIN: f64 = 1e-300;
pub const P_MAX: f64 = 1.0 - 1e-16;

const GRID: usize = 1000;
const FLAG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricTag {
    Euclidean,
    CovWeighted,
}

#[derive(Clone)]
enum Shape {
    /// φ∘Φ⁻¹.
    Gaussian,
    /// min{p·(log 1/p)^r, ½·(log 2)^r}; the cap only binds when r > log 2,
    /// where the raw function turns over before ½.
    LogPower { r: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Shape {
    fn base(&self, q: f64) -> f64 {
        match self {
            Shape::Gaussian => crate::special::normal_pdf(lower_quantile(q)),
            Shape::LogPower { r } => log_power(q, *r).min(log_power(0.5, *r)),
            Shape::Custom(f) => f(q),
        }
    }
}

fn lower_quantile(q: f64) -> f64 {
    // q ∈ [P_MIN, ½] by construction.
    inv_normal_cdf(q).unwrap_or(0.0)
}

fn log_power(q: f64, r: f64) -> f64 {
    if r == 0.0 {
        q
    } else {
        q * (1.0 / q).ln().powf(r)
    }
}

/// p ↦ Ĩ(p) with structural symmetry and verified flags.
#[derive(Clone)]
pub struct IsoMinorant {
    shape: Shape,
    scale: f64,
    pub label: String,
    pub metric: MetricTag,
    pub regular: bool,
    pub concave: bool,
}

impl fmt::Debug for IsoMinorant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IsoMinorant")
            .field("label", &self.label)
            .field("scale", &self.scale)
            .field("metric", &self.metric)
            .field("regular", &self.regular)
            .field("concave", &self.concave)
            .finish()
    }
}

impl IsoMinorant {
    fn build(shape: Shape, scale: f64, label: String, metric: MetricTag, regular: bool, concave: bool) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return invalid(format!("minorant scale must be positive and finite, got {scale}"));
        }
        let m = Self {
            shape,
            scale,
            label,
            metric,
            regular,
            concave,
        };
        m.verify_flags()?;
        Ok(m)
    }

    /// A user-supplied profile f on (0, ½], symmetrized as f(min{p, 1−p}).
    pub fn from_fn(
        label: impl Into<String>,
        metric: MetricTag,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        regular: bool,
        concave: bool,
    ) -> Result<Self> {
        Self::build(Shape::Custom(Arc::new(f)), 1.0, label.into(), metric, regular, concave)
    }

    /// C·p·(log 1/p)^r, the family that interpolates Laplace (r = 0) and
    /// Gaussian-type (r = ½) tails.
    pub fn log_power(scale: f64, r: f64, metric: MetricTag) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return invalid(format!("log-power exponent must lie in [0,1], got {r}"));
        }
        Self::build(Shape::LogPower { r }, scale, format!("{scale}*p*log(1/p)^{r}"), metric, true, true)
    }

    /// Ĩ(p); total on ℝ with Ĩ = 0 outside (0,1).
    pub fn eval(&self, p: f64) -> f64 {
        if p.is_nan() {
            return f64::NAN;
        }
        if p <= 0.0 || p >= 1.0 {
            return 0.0;
        }
        let p = p.clamp(P_MIN, P_MAX);
        let q = if p > 0.5 { 1.0 - p } else { p };
        self.scale * self.shape.base(q)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Ĩ/T_lip: the minorant of the pushforward under a `lip_norm`-Lipschitz map.
    pub fn lipschitz_pushforward(&self, lip_norm: f64) -> Result<Self> {
        if !(lip_norm > 0.0 && lip_norm.is_finite()) {
            return invalid(format!("Lipschitz norm must be positive, got {lip_norm}"));
        }
        let mut out = self.clone();
        out.scale = self.scale / lip_norm;
        out.label = format!("({})/{lip_norm}", self.label);
        Ok(out)
    }

    /// c·Ĩ for a change of measure with density ratio bounded below by c.
    pub fn density_perturbation(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return invalid(format!("density factor must lie in (0,1], got {c}"));
        }
        let mut out = self.clone();
        out.scale = self.scale * c;
        out.label = format!("{c}*({})", self.label);
        Ok(out)
    }

    /// exp(−osc)·Ĩ for a potential perturbation with oscillation `osc`.
    pub fn osc_perturbation(&self, osc: f64) -> Result<Self> {
        if !(osc >= 0.0 && osc.is_finite()) {
            return invalid(format!("oscillation must be nonnegative, got {osc}"));
        }
        self.density_perturbation((-osc).exp())
    }

    /// Checks the emitted flags on a grid; constructors call this.
    pub fn verify_flags(&self) -> Result<()> {
        let half: Vec<f64> = (1..=GRID).map(|i| 0.5 * i as f64 / GRID as f64).collect();
        let vals: Vec<f64> = half.iter().map(|&p| self.eval(p)).collect();
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid(format!("minorant {} takes negative or non-finite values", self.label));
        }
        let top = vals.iter().cloned().fold(0.0, f64::max);
        let tol = FLAG_TOL * (1.0 + top);
        if self.regular {
            for i in 1..GRID {
                let (p, q) = (i as f64 / (GRID + 1) as f64, 1.0 - i as f64 / (GRID + 1) as f64);
                let (a, b) = (self.eval(p), self.eval(q));
                if (a - b).abs() > FLAG_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
                    return invalid(format!("minorant {} flagged regular but asymmetric at {p}", self.label));
                }
            }
            if vals.windows(2).any(|w| w[1] < w[0] - tol) {
                return invalid(format!("minorant {} flagged regular but decreasing on (0,1/2]", self.label));
            }
        }
        if self.concave {
            // Concavity on a uniform grid: second differences are nonpositive,
            // with Ĩ(0) = 0 as the left anchor.
            let mut prev2 = 0.0;
            let mut prev1 = vals[0];
            for &v in &vals[1..] {
                if prev2 + v - 2.0 * prev1 > tol {
                    return invalid(format!("minorant {} flagged concave but is not", self.label));
                }
                prev2 = prev1;
                prev1 = v;
            }
        }
        if self.regular && self.concave {
            let ratios: Vec<f64> = half.iter().zip(&vals).map(|(p, v)| v / p).collect();
            if ratios.windows(2).any(|w| w[1] > w[0] * (1.0 + FLAG_TOL) + FLAG_TOL) {
                return invalid(format!("minorant {} has increasing ratio I(p)/p", self.label));
            }
        }
        Ok(())
    }
}

/// C_ℓ = (2/(π·log 2))^{1/2} and C_γ = (φ∘Φ⁻¹)(¼).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalConstants {
    pub c_ell: f64,
    pub c_gamma: f64,
}

pub const C_ELL_FLOOR: f64 = 0.958357;
pub const C_GAMMA_FLOOR: f64 = 0.3177765;

impl UniversalConstants {
    pub fn compute() -> Self {
        Self {
            c_ell: c_ell(),
            c_gamma: c_gamma(),
        }
    }
}

pub fn c_ell() -> f64 {
    (2.0 / (std::f64::consts::PI * std::f64::consts::LN_2)).sqrt()
}

pub fn c_gamma() -> f64 {
    crate::special::normal_pdf(lower_quantile(0.25))
}

/// m^{1/2}·φ∘Φ⁻¹, the minorant of any m-strongly log-concave measure.
pub fn strongly_logconcave_minorant(m: f64) -> Result<IsoMinorant> {
    if !(m > 0.0 && m.is_finite()) {
        return invalid(format!("strong convexity m must be positive, got {m}"));
    }
    IsoMinorant::build(Shape::Gaussian, m.sqrt(), format!("gaussian(m={m})"), MetricTag::Euclidean, true, true)
}

/// min{p, 1−p}, the profile of the two-sided exponential law.
pub fn laplace_profile() -> IsoMinorant {
    IsoMinorant::build(Shape::LogPower { r: 0.0 }, 1.0, "laplace".into(), MetricTag::Euclidean, true, true)
        .expect("laplace profile is regular and concave")
}

/// K(α)·p·(log 1/p)^{1−1/α}; K(α) is not known in closed form and is supplied.
pub fn subbotin_minorant(alpha: f64, k_alpha: f64) -> Result<IsoMinorant> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return invalid(format!("Subbotin exponent must lie in (1,2), got {alpha}"));
    }
    let r = 1.0 - 1.0 / alpha;
    IsoMinorant::build(
        Shape::LogPower { r },
        k_alpha,
        format!("subbotin(alpha={alpha}, k={k_alpha})"),
        MetricTag::Euclidean,
        true,
        true,
    )
}

/// (1/6)·γ^{1/2}·min{p, 1−p} for a log-concave law with Poincaré constant γ.
pub fn minorant_from_poincare(gamma_pi: f64) -> Result<IsoMinorant> {
    if !(gamma_pi > 0.0 && gamma_pi.is_finite()) {
        return invalid(format!("Poincare constant must be positive, got {gamma_pi}"));
    }
    IsoMinorant::build(
        Shape::LogPower { r: 0.0 },
        gamma_pi.sqrt() / 6.0,
        format!("poincare(gamma={gamma_pi})"),
        MetricTag::Euclidean,
        true,
        true,
    )
}

/// Log-Sobolev (q = 2): (1/34)·λ^{1/2}·p·(log 1/p)^{1/2}.
/// q-log-Sobolev (1 ≤ q < 2): c_q·D·p·(log 1/p)^{1/q}, with `lambda_pi` read as D.
pub fn minorant_from_logsobolev(lambda_pi: f64, q: f64, c_q: Option<f64>) -> Result<IsoMinorant> {
    if !(1.0..=2.0).contains(&q) {
        return invalid(format!("log-Sobolev order q must lie in [1,2], got {q}"));
    }
    if !(lambda_pi > 0.0 && lambda_pi.is_finite()) {
        return invalid(format!("log-Sobolev constant must be positive, got {lambda_pi}"));
    }
    let (scale, label) = if q == 2.0 {
        (lambda_pi.sqrt() / 34.0, format!("logsobolev(lambda={lambda_pi})"))
    } else {
        let Some(c) = c_q else {
            return invalid("q < 2 requires the universal constant c_q");
        };
        (c * lambda_pi, format!("q-logsobolev(q={q}, D={lambda_pi}, c_q={c})"))
    };
    IsoMinorant::build(Shape::LogPower { r: 1.0 / q }, scale, label, MetricTag::Euclidean, true, true)
}

/// π(S₃) ≥ dist·Ĩ(min{p₁, p₂}) for a partition S₁ ⊔ S₂ ⊔ S₃.
pub fn three_set_lower(minorant: &IsoMinorant, p1: f64, p2: f64, dist: f64) -> Result<f64> {
    if !minorant.regular {
        return invalid("three-set bound needs a regular minorant");
    }
    if !(p1 >= 0.0 && p2 >= 0.0 && dist >= 0.0) {
        return invalid("masses and distance must be nonnegative");
    }
    if p1 + p2 > 1.0 + 1e-12 {
        return invalid(format!("masses {p1} + {p2} exceed 1"));
    }
    let p = p1.min(p2);
    if p == 0.0 || dist == 0.0 {
        return Ok(0.0);
    }
    Ok(dist * minorant.eval(p))
}
