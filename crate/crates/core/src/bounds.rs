//! Explicit conductance, spectral-gap, mixing-time, acceptance and
//! asymptotic-variance bounds for RWM and pCN.
//!
//! All functions are pure: identical inputs give bit-identical outputs.

use crate::error::{invalid, Result};
use crate::isoperimetry::{c_ell, c_gamma, IsoMinorant, MetricTag, P_MIN};
use crate::quadrature::adaptive_quadrature;
use crate::special::chi_log_density;
use crate::targets::TargetSpec;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

pub const REL_TOL: f64 = 1e-9;
const GOLDEN_TOL: f64 = 1e-10;
const V_STAR_ITERS: usize = 60;

/// Certificate that ‖P(x,·) − P(y,·)‖_TV ≤ 1 − ε whenever d(x,y) ≤ δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloseCoupling {
    pub metric: MetricTag,
    pub delta: f64,
    pub eps: f64,
}

impl CloseCoupling {
    pub fn new(metric: MetricTag, delta: f64, eps: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return invalid(format!("close-coupling delta must be positive, got {delta}"));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return invalid(format!("close-coupling eps must lie in (0,1], got {eps}"));
        }
        Ok(Self { metric, delta, eps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductanceGap {
    pub phi_star: f64,
    pub gap: f64,
}

/// Echo of the inputs a report was computed from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub m: Option<f64>,
    pub l: Option<f64>,
    pub d: Option<usize>,
    pub kappa: Option<f64>,
    pub kappa_tilde: Option<f64>,
    pub trace_c: Option<f64>,
    pub varsigma: Option<f64>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub eps: Option<f64>,
    pub u0: Option<f64>,
    pub eps_mix: Option<f64>,
    pub variant: Option<u8>,
}

/// Evaluated bounds. Upper bounds are `None` where no closed form applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: String,
    pub phi_star_lower: f64,
    pub phi_star_upper: Option<f64>,
    /// Alternative Φ* upper bound with coefficient 4·L^{1/2}σ in place of 2·L^{1/2}σ.
    pub phi_star_upper_alt: Option<f64>,
    pub gap_lower: f64,
    pub gap_upper: Option<f64>,
    pub alpha0_lower: Option<f64>,
    pub v_star: f64,
    /// Real-valued sufficient number of steps, before the ceiling.
    pub mixing_real: f64,
    pub mixing_n: u64,
    /// Far phase, profile phase, gap phase.
    pub mixing_phase_terms: [f64; 3],
    pub inputs: BoundInputs,
}

/// Which constants the closed-form mixing variants use in their gap phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantConvention {
    /// Constants as they follow from the general isoperimetric mixing bound
    /// with ε = α₀/2: gap-phase prefactor 2⁶ in variant 1, 2⁸ in variants 2–3.
    #[default]
    Derived,
    /// Prefactors exactly as displayed in the closed-form statements
    /// (RWM 2⁴/2⁶/2⁶, pCN 2⁶/2⁶/2⁶).
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MixingOptions {
    pub convention: ConstantConvention,
    /// Multiply the RWM variant-1 gap phase by σ⁻², as in the in-proof display.
    pub proof_sigma_factor: bool,
}

/// Real-valued mixing budget and its ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingBudget {
    pub value: f64,
    pub n: u64,
}

fn ceil_steps(value: f64) -> u64 {
    value.ceil() as u64
}

fn check_eps_mix(eps_mix: f64) -> Result<()> {
    if !(eps_mix > 0.0 && eps_mix < 8.0) {
        return invalid(format!("eps_mix must lie in (0,8), got {eps_mix}"));
    }
    Ok(())
}

fn check_u0(u0: f64) -> Result<()> {
    if !(u0 >= 0.0 && u0.is_finite()) {
        return invalid(format!("u0 must be finite and nonnegative, got {u0}"));
    }
    Ok(())
}

fn require_regular_concave(minorant: &IsoMinorant) -> Result<()> {
    if !minorant.regular || !minorant.concave {
        return invalid(format!("minorant {} must be regular and concave", minorant.label));
    }
    Ok(())
}

fn gap_phase_log(u0: f64, eps_mix: f64) -> f64 {
    (u0.min(8.0) / eps_mix).max(1.0).ln()
}

/// Lower bound on the conductance profile Φ(v) from a minorant and a close coupling.
pub fn conductance_profile_lower(minorant: &IsoMinorant, cc: &CloseCoupling, v: f64) -> Result<f64> {
    require_regular_concave(minorant)?;
    if !(v > 0.0 && v <= 0.5) {
        return invalid(format!("v must lie in (0,1/2], got {v}"));
    }
    let (eps, delta) = (cc.eps, cc.delta);
    let closed = 0.25 * eps * (0.5 * delta * minorant.eval(0.5 * v) / (0.5 * v)).min(1.0);
    // θ·(Ĩ/id)(θv) = Ĩ(θv)/v is nondecreasing in θ, the other branch decreasing.
    let g = |theta: f64| (0.5 * (1.0 - theta) * eps).min(0.25 * eps * delta * minorant.eval(theta * v) / v);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    let mut best = gc.max(gd);
    while b - a > GOLDEN_TOL {
        if gc < gd {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        } else {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        }
        best = best.max(gc).max(gd);
    }
    Ok(best.max(closed))
}

/// Φ* ≥ ¼ε·min{1, 2δĨ(¼)}.
pub fn conductance_star_lower(minorant: &IsoMinorant, cc: &CloseCoupling) -> Result<f64> {
    require_regular_concave(minorant)?;
    Ok(0.25 * cc.eps * (2.0 * cc.delta * minorant.eval(0.25)).min(1.0))
}

/// γ ≥ ½(Φ* bound)² = 2⁻⁵ε²·min{1, 4δ²Ĩ(¼)²}.
pub fn spectral_gap_lower(minorant: &IsoMinorant, cc: &CloseCoupling) -> Result<f64> {
    let phi = conductance_star_lower(minorant, cc)?;
    Ok(0.5 * phi * phi)
}

/// Λ(v) ≥ ½Φ(v)² for v ≤ ½ and ½(Φ*)² beyond.
pub fn spectral_profile_lower(phi_profile: &dyn Fn(f64) -> f64, phi_star: f64, v: f64) -> f64 {
    if v <= 0.5 {
        let p = phi_profile(v);
        0.5 * p * p
    } else {
        0.5 * phi_star * phi_star
    }
}

/// v* = min{½, sup{v : 1 ≤ ½δ·Ĩ(v/2)/(v/2)}}, or 0 when the set is empty.
///
/// Bisection runs on log v, so tiny v* keep full relative precision. Values
/// below 2·10⁻³⁰⁰ are reported as 0.
pub fn v_star(minorant: &IsoMinorant, delta: f64) -> Result<f64> {
    require_regular_concave(minorant)?;
    if !(delta > 0.0) {
        return invalid(format!("delta must be positive, got {delta}"));
    }
    let holds = |v: f64| 0.5 * delta * minorant.eval(0.5 * v) / (0.5 * v) >= 1.0;
    if holds(0.5) {
        return Ok(0.5);
    }
    let v_min = 2.0 * P_MIN;
    if !holds(v_min) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (v_min.ln(), 0.5f64.ln());
    for _ in 0..V_STAR_ITERS {
        let mid = 0.5 * (lo + hi);
        if holds(mid.exp()) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.exp())
}

/// n ≥ 2 + 4∫_{min{4/u₀,½}}^{½} dv/(vΦ(v)²) + Φ*⁻²·log(max{min{u₀,8}/ε_Mix, 1}).
pub fn mixing_time_profile(phi_profile: &dyn Fn(f64) -> f64, phi_star: f64, u0: f64, eps_mix: f64) -> Result<MixingBudget> {
    check_eps_mix(eps_mix)?;
    check_u0(u0)?;
    if !(phi_star > 0.0) {
        return invalid(format!("phi_star must be positive, got {phi_star}"));
    }
    let lo = if u0 > 0.0 { (4.0 / u0).min(0.5) } else { 0.5 };
    let integral = if lo < 0.5 {
        // v = e^t turns dv/v into dt.
        adaptive_quadrature(
            |t: f64| {
                let p = phi_profile(t.exp());
                1.0 / (p * p)
            },
            lo.ln(),
            0.5f64.ln(),
            REL_TOL,
        )?
    } else {
        0.0
    };
    let value = 2.0 + 4.0 * integral + gap_phase_log(u0, eps_mix) / (phi_star * phi_star);
    Ok(MixingBudget {
        value,
        n: ceil_steps(value),
    })
}

/// ∫ₐᵇ ξ/Ĩ(ξ)² dξ, the profile-phase integral.
pub fn profile_phase_integral(minorant: &IsoMinorant, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a <= b && b <= 0.5) {
        return invalid(format!("profile integral needs 0 < a <= b <= 1/2, got [{a}, {b}]"));
    }
    if a == b {
        return Ok(0.0);
    }
    adaptive_quadrature(
        |t: f64| {
            let x = t.exp();
            let i = minorant.eval(x);
            x * x / (i * i)
        },
        a.ln(),
        b.ln(),
        REL_TOL,
    )
}

/// Three-phase mixing budget from a regular concave minorant and a close coupling.
pub fn mixing_time_iso(minorant: &IsoMinorant, cc: &CloseCoupling, u0: f64, eps_mix: f64) -> Result<BoundReport> {
    require_regular_concave(minorant)?;
    check_eps_mix(eps_mix)?;
    check_u0(u0)?;
    let (eps, delta) = (cc.eps, cc.delta);
    let vs = v_star(minorant, delta)?;
    let far = if vs > 0.0 && u0 > 0.0 {
        64.0 / (eps * eps) * (u0.ln() + vs.ln() - 4f64.ln()).max(0.0)
    } else {
        0.0
    };
    let lo = if u0 > 0.0 { (2.0 / u0).min(0.25) } else { 0.25 }.max(0.5 * vs);
    let profile = if lo < 0.25 {
        256.0 / (eps * eps * delta * delta) * profile_phase_integral(minorant, lo, 0.25)?
    } else {
        0.0
    };
    let i4 = minorant.eval(0.25);
    let gap_phase = 16.0 * (0.25 / (delta * delta * i4 * i4)).max(1.0) / (eps * eps) * gap_phase_log(u0, eps_mix);
    let phi = conductance_star_lower(minorant, cc)?;
    let terms = [far, profile, gap_phase];
    let value = 2.0 + terms.iter().sum::<f64>();
    Ok(BoundReport {
        kind: format!("isoperimetric({})", minorant.label),
        phi_star_lower: phi,
        phi_star_upper: None,
        phi_star_upper_alt: None,
        gap_lower: 0.5 * phi * phi,
        gap_upper: None,
        alpha0_lower: None,
        v_star: vs,
        mixing_real: value,
        mixing_n: ceil_steps(value),
        mixing_phase_terms: terms,
        inputs: BoundInputs {
            delta: Some(delta),
            eps: Some(eps),
            u0: Some(u0),
            eps_mix: Some(eps_mix),
            ..Default::default()
        },
    })
}

/// σ = ς·L^{−1/2}·d^{−1/2}.
pub fn rwm_sigma(varsigma: f64, l: f64, d: usize) -> f64 {
    varsigma / (l * d as f64).sqrt()
}

/// ½·exp(−E[ψ(σR_d)]) with R_d chi-distributed with d degrees of freedom.
pub fn rwm_alpha0_lower_general(psi: &dyn Fn(f64) -> f64, sigma: f64, d: usize) -> Result<f64> {
    if !(sigma > 0.0) || d == 0 {
        return invalid("need sigma > 0 and d >= 1");
    }
    let integrand = |r: f64| psi(sigma * r) * chi_log_density(r, d).exp();
    let mode = ((d as f64) - 1.0).max(0.0).sqrt();
    let a = (mode - 12.0).max(0.0);
    let b = mode + 14.0;
    let mut mean = adaptive_quadrature(integrand, a, mode, REL_TOL)? + adaptive_quadrature(integrand, mode, b, REL_TOL)?;
    if a > 0.0 {
        mean += adaptive_quadrature(integrand, 0.0, a, REL_TOL)?;
    }
    Ok(0.5 * (-mean).exp())
}

/// ½·exp(−½Lσ²d).
pub fn rwm_alpha0_lower(l: f64, sigma: f64, d: usize) -> f64 {
    0.5 * (-0.5 * l * sigma * sigma * d as f64).exp()
}

/// (|·|, α₀σ, ½α₀).
pub fn rwm_close_coupling(alpha0: f64, sigma: f64) -> Result<CloseCoupling> {
    if !(alpha0 > 0.0 && alpha0 <= 1.0) {
        return invalid(format!("alpha0 must lie in (0,1], got {alpha0}"));
    }
    CloseCoupling::new(MetricTag::Euclidean, alpha0 * sigma, 0.5 * alpha0)
}

fn check_m_l(m: f64, l: f64) -> Result<()> {
    if !(m > 0.0 && l >= m && l.is_finite()) {
        return invalid(format!("need 0 < m <= L, got m={m}, L={l}"));
    }
    Ok(())
}

/// Φ* ≥ 2⁻⁴C_γ·ς·e^{−ς²}·d^{−1/2}·(m/L)^{1/2}, γ ≥ 2⁻⁹C_γ²·ς²·e^{−2ς²}·(m/L)/d.
pub fn rwm_lower_bounds(m: f64, l: f64, d: usize, varsigma: f64) -> Result<ConductanceGap> {
    check_m_l(m, l)?;
    if d == 0 || !(varsigma > 0.0) {
        return invalid("need d >= 1 and varsigma > 0");
    }
    let cg = c_gamma();
    let s2 = varsigma * varsigma;
    let ratio = m / l;
    let df = d as f64;
    Ok(ConductanceGap {
        phi_star: cg / 16.0 * varsigma * (-s2).exp() * (ratio / df).sqrt(),
        gap: cg * cg / 512.0 * s2 * (-2.0 * s2).exp() * ratio / df,
    })
}

/// Φ* ≥ 2⁻³α₀·min{1, 2α₀σĨ(¼)}, γ ≥ half its square, for any minorant and α₀.
pub fn rwm_lower_bounds_general(alpha0: f64, sigma: f64, minorant: &IsoMinorant) -> Result<ConductanceGap> {
    let cc = rwm_close_coupling(alpha0, sigma)?;
    let phi = conductance_star_lower(minorant, &cc)?;
    Ok(ConductanceGap {
        phi_star: phi,
        gap: 0.5 * phi * phi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwmUpper {
    /// min{2·L^{1/2}σ, (1+mσ²)^{−d/2}}.
    pub phi_star: f64,
    /// min{4·L^{1/2}σ, (1+mσ²)^{−d/2}}.
    pub phi_star_alt: f64,
    /// min{½Lσ², (1+mσ²)^{−d/2}}.
    pub gap: f64,
}

pub fn rwm_upper_bounds(m: f64, l: f64, d: usize, sigma: f64) -> Result<RwmUpper> {
    check_m_l(m, l)?;
    if d == 0 || !(sigma > 0.0) {
        return invalid("need d >= 1 and sigma > 0");
    }
    let big = (1.0 + m * sigma * sigma).powf(-0.5 * d as f64);
    Ok(RwmUpper {
        phi_star: (2.0 * l.sqrt() * sigma).min(big),
        phi_star_alt: (4.0 * l.sqrt() * sigma).min(big),
        gap: (0.5 * l * sigma * sigma).min(big),
    })
}

/// (upper, linear_lower) on the asymptotic variance:
/// 2¹⁰C_γ⁻²ς⁻²e^{2ς²}κd‖f‖² and 2ς⁻²d‖f‖² (the latter for linear f).
pub fn rwm_asvar_bounds(varsigma: f64, kappa: f64, d: usize, f_norm_sq: f64) -> Result<(f64, f64)> {
    if !(varsigma > 0.0 && kappa > 0.0 && f_norm_sq > 0.0) || d == 0 {
        return invalid("asymptotic-variance bounds need positive inputs");
    }
    let cg = c_gamma();
    let s2 = varsigma * varsigma;
    let df = d as f64;
    Ok((
        1024.0 / (cg * cg) / s2 * (2.0 * s2).exp() * kappa * df * f_norm_sq,
        2.0 / s2 * df * f_norm_sq,
    ))
}

/// Shared pieces of the closed-form variants.
struct Closed {
    /// log v∘ with v∘ = min{½, 2·exp(−4C_ℓ⁻²α₀⁻²·s)}.
    log_v0: f64,
    /// log(log(min{max{u₀/2, 4}, 2/v∘})/log 4).
    loglog: f64,
    far_log: f64,
}

fn closed_pieces(alpha0: f64, s: f64, u0: f64) -> Closed {
    let cl2 = c_ell().powi(-2);
    let log_v0 = (LN_2 - 4.0 * cl2 * s / (alpha0 * alpha0)).min(-LN_2);
    let log_a = (0.5 * u0).max(4.0).ln().min(LN_2 - log_v0);
    let loglog = (log_a / 4f64.ln()).ln();
    let far_log = if u0 > 0.0 { (u0.ln() + log_v0 - 4f64.ln()).max(0.0) } else { 0.0 };
    Closed { log_v0, loglog, far_log }
}

fn check_variant(variant: u8) -> Result<()> {
    if !(1..=3).contains(&variant) {
        return invalid(format!("variant must be 1, 2 or 3, got {variant}"));
    }
    Ok(())
}

pub fn rwm_mixing_time(m: f64, l: f64, d: usize, varsigma: f64, u0: f64, eps_mix: f64, variant: u8) -> Result<BoundReport> {
    rwm_mixing_time_with(m, l, d, varsigma, u0, eps_mix, variant, MixingOptions::default())
}

/// Closed-form RWM mixing budgets; variants 1–3 are successively weaker.
#[allow(clippy::too_many_arguments)]
pub fn rwm_mixing_time_with(
    m: f64,
    l: f64,
    d: usize,
    varsigma: f64,
    u0: f64,
    eps_mix: f64,
    variant: u8,
    opts: MixingOptions,
) -> Result<BoundReport> {
    check_m_l(m, l)?;
    check_eps_mix(eps_mix)?;
    check_u0(u0)?;
    check_variant(variant)?;
    if d == 0 || !(varsigma > 0.0) {
        return invalid("need d >= 1 and varsigma > 0");
    }
    let sigma = rwm_sigma(varsigma, l, d);
    let alpha0 = rwm_alpha0_lower(l, sigma, d);
    let kappa = l / m;
    let kd = kappa * d as f64;
    let s = 1.0 / (sigma * sigma * m);
    let cl2 = c_ell().powi(-2);
    let cg2 = c_gamma().powi(-2);
    let s2 = varsigma * varsigma;
    let (e1, e2) = (s2.exp(), (2.0 * s2).exp());
    let a2 = alpha0.powi(-2);
    let pieces = closed_pieces(alpha0, s, u0);
    let log_u = gap_phase_log(u0, eps_mix);
    let (k1, k23) = match opts.convention {
        ConstantConvention::Derived => (64.0, 256.0),
        ConstantConvention::Printed => (16.0, 64.0),
    };
    let terms = match variant {
        1 => {
            let sigma_factor = if opts.proof_sigma_factor { 1.0 / (sigma * sigma) } else { 1.0 };
            [
                256.0 * a2 * pieces.far_log,
                1024.0 * cl2 * a2 * a2 * s * pieces.loglog,
                k1 * (0.25 * cg2 * a2 * s).max(1.0) * a2 * log_u * sigma_factor,
            ]
        }
        2 => [
            1024.0 * e1 * pieces.far_log,
            16384.0 * cl2 * e2 / s2 * kd * pieces.loglog,
            k23 * cg2 * e2 / s2 * kd * log_u,
        ],
        _ => [
            1024.0 * e1 * u0.max(1.0).ln(),
            (16384.0 * cl2 * e2 / s2 * kd * ((16.0 * cl2 / s2).ln() + kd.ln() + s2)).max(0.0),
            k23 * cg2 * e2 / s2 * kd * (8.0 / eps_mix).ln(),
        ],
    };
    let value = 2.0 + terms.iter().sum::<f64>();
    let lower = rwm_lower_bounds(m, l, d, varsigma)?;
    let upper = rwm_upper_bounds(m, l, d, sigma)?;
    Ok(BoundReport {
        kind: format!("rwm-variant-{variant}"),
        phi_star_lower: lower.phi_star,
        phi_star_upper: Some(upper.phi_star),
        phi_star_upper_alt: Some(upper.phi_star_alt),
        gap_lower: lower.gap,
        gap_upper: Some(upper.gap),
        alpha0_lower: Some(alpha0),
        v_star: pieces.log_v0.exp(),
        mixing_real: value,
        mixing_n: ceil_steps(value),
        mixing_phase_terms: terms,
        inputs: BoundInputs {
            m: Some(m),
            l: Some(l),
            d: Some(d),
            kappa: Some(kappa),
            varsigma: Some(varsigma),
            sigma: Some(sigma),
            u0: Some(u0),
            eps_mix: Some(eps_mix),
            variant: Some(variant),
            ..Default::default()
        },
    })
}

/// Initial laws with a known χ² budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WarmStart {
    /// N(x*, L⁻¹I): u₀ ≤ κ^{d/2}.
    GaussianMode { kappa: f64, d: usize },
    /// First accepted RWM proposal from x₀.
    AcceptedProposal { varsigma: f64, kappa: f64, d: usize, l: f64, dist_sq: f64 },
    /// N(0, C(I+LC)⁻¹) for pCN: u₀ ≤ det(I+LC)^{1/2} ≤ exp(½L·Tr C).
    PcnGaussian { l: f64, trace_c: f64 },
}

pub fn warm_start_u0(ws: &WarmStart) -> Result<f64> {
    match *ws {
        WarmStart::GaussianMode { kappa, d } => {
            if !(kappa >= 1.0) || d == 0 {
                return invalid("gaussian-mode warm start needs kappa >= 1 and d >= 1");
            }
            Ok(kappa.powf(0.5 * d as f64))
        }
        WarmStart::AcceptedProposal { varsigma, kappa, d, l, dist_sq } => {
            if !(varsigma > 0.0 && kappa >= 1.0 && l > 0.0 && dist_sq >= 0.0) || d == 0 {
                return invalid("accepted-proposal warm start needs positive parameters");
            }
            let s2 = varsigma * varsigma;
            Ok(2.0 * (0.5 * s2).exp() * (kappa * d as f64 / s2).powf(0.5 * d as f64) * (0.5 * l * dist_sq).exp())
        }
        WarmStart::PcnGaussian { l, trace_c } => {
            if !(l >= 0.0 && trace_c > 0.0) {
                return invalid("pcn warm start needs L >= 0 and Tr(C) > 0");
            }
            Ok((0.5 * l * trace_c).exp())
        }
    }
}

/// η = ς·(L·Tr C)^{−1/2}.
pub fn pcn_eta(varsigma: f64, l: f64, trace_c: f64) -> f64 {
    varsigma / (l * trace_c).sqrt()
}

/// ½·exp(−½Lη²·Tr C).
pub fn pcn_alpha0_lower(l: f64, eta: f64, trace_c: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return invalid(format!("eta must lie in (0,1), got {eta}"));
    }
    if !(l >= 0.0 && trace_c > 0.0) {
        return invalid("need L >= 0 and Tr(C) > 0");
    }
    Ok(0.5 * (-0.5 * l * eta * eta * trace_c).exp())
}

fn check_rho_eta(rho: f64, eta: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0 && eta > 0.0 && eta < 1.0) || (rho * rho + eta * eta - 1.0).abs() > 1e-12 {
        return invalid(format!("need rho, eta in (0,1) with rho^2 + eta^2 = 1, got ({rho}, {eta})"));
    }
    Ok(())
}

/// (C⁻¹-norm, α₀η/ρ, ½α₀).
pub fn pcn_close_coupling(alpha0: f64, rho: f64, eta: f64) -> Result<CloseCoupling> {
    check_rho_eta(rho, eta)?;
    if !(alpha0 > 0.0 && alpha0 <= 1.0) {
        return invalid(format!("alpha0 must lie in (0,1], got {alpha0}"));
    }
    CloseCoupling::new(MetricTag::CovWeighted, alpha0 * eta / rho, 0.5 * alpha0)
}

/// Φ* ≥ ¼C_γα₀²η and γ ≥ 2⁻⁵C_γ²α₀⁴η² for caller-supplied α₀, η.
pub fn pcn_lower_bounds_general(alpha0: f64, eta: f64) -> ConductanceGap {
    let phi = 0.25 * c_gamma() * alpha0 * alpha0 * eta;
    ConductanceGap {
        phi_star: phi,
        gap: 0.5 * phi * phi,
    }
}

/// pCN bounds at η = ς(L·Tr C)^{−1/2}; they depend on (L, Tr C) only through κ̃.
pub fn pcn_lower_bounds(l: f64, trace_c: f64, varsigma: f64) -> Result<ConductanceGap> {
    let kt = l * trace_c;
    if !(l > 0.0 && trace_c > 0.0) {
        return invalid("need L > 0 and Tr(C) > 0");
    }
    if !(varsigma > 0.0 && varsigma * varsigma < kt) {
        return invalid(format!("varsigma must lie in (0, (L Tr C)^(1/2)), got {varsigma}"));
    }
    let eta = pcn_eta(varsigma, l, trace_c);
    let alpha0 = pcn_alpha0_lower(l, eta, trace_c)?;
    Ok(pcn_lower_bounds_general(alpha0, eta))
}

/// The ς-optimized gap floor 2⁻¹⁰C_γ²e⁻¹/(L·Tr C).
pub fn pcn_gap_optimized_floor(l: f64, trace_c: f64) -> f64 {
    c_gamma().powi(2) / 1024.0 / std::f64::consts::E / (l * trace_c)
}

/// inf over η ∈ (0,1) of exp(η²κ̃)·η⁻²: exp(κ̃) if κ̃ ≤ 1, else κ̃·e.
pub fn pcn_step_tradeoff_infimum(kappa_tilde: f64) -> f64 {
    if kappa_tilde <= 1.0 {
        kappa_tilde.exp()
    } else {
        kappa_tilde * std::f64::consts::E
    }
}

pub fn pcn_mixing_time(l: f64, trace_c: f64, varsigma: f64, u0: f64, eps_mix: f64, variant: u8) -> Result<BoundReport> {
    pcn_mixing_time_with(l, trace_c, varsigma, u0, eps_mix, variant, MixingOptions::default())
}

/// Closed-form pCN mixing budgets in terms of κ̃ = L·Tr C.
pub fn pcn_mixing_time_with(
    l: f64,
    trace_c: f64,
    varsigma: f64,
    u0: f64,
    eps_mix: f64,
    variant: u8,
    opts: MixingOptions,
) -> Result<BoundReport> {
    check_eps_mix(eps_mix)?;
    check_u0(u0)?;
    check_variant(variant)?;
    let lower = pcn_lower_bounds(l, trace_c, varsigma)?;
    let kt = l * trace_c;
    let eta = pcn_eta(varsigma, l, trace_c);
    let rho = (1.0 - eta * eta).sqrt();
    let alpha0 = pcn_alpha0_lower(l, eta, trace_c)?;
    let r = rho * rho / (eta * eta);
    let cl2 = c_ell().powi(-2);
    let cg2 = c_gamma().powi(-2);
    let s2 = varsigma * varsigma;
    let (e1, e2) = (s2.exp(), (2.0 * s2).exp());
    let a2 = alpha0.powi(-2);
    let pieces = closed_pieces(alpha0, r, u0);
    let log_u = gap_phase_log(u0, eps_mix);
    let k23 = match opts.convention {
        ConstantConvention::Derived => 256.0,
        ConstantConvention::Printed => 64.0,
    };
    let terms = match variant {
        1 => [
            256.0 * a2 * pieces.far_log,
            1024.0 * cl2 * a2 * a2 * r * pieces.loglog,
            64.0 * (0.25 * cg2 * a2 * r).max(1.0) * a2 * log_u,
        ],
        2 => [
            1024.0 * e1 * pieces.far_log,
            16384.0 * cl2 * e2 / s2 * kt * pieces.loglog,
            k23 * cg2 * e2 / s2 * kt * log_u,
        ],
        _ => [
            1024.0 * e1 * u0.max(1.0).ln(),
            (16384.0 * cl2 * e2 / s2 * kt * ((16.0 * cl2 / s2 * kt).ln() + s2)).max(0.0),
            k23 * cg2 * e2 / s2 * kt * (8.0 / eps_mix).ln(),
        ],
    };
    let value = 2.0 + terms.iter().sum::<f64>();
    Ok(BoundReport {
        kind: format!("pcn-variant-{variant}"),
        phi_star_lower: lower.phi_star,
        phi_star_upper: None,
        phi_star_upper_alt: None,
        gap_lower: lower.gap,
        gap_upper: None,
        alpha0_lower: Some(alpha0),
        v_star: pieces.log_v0.exp(),
        mixing_real: value,
        mixing_n: ceil_steps(value),
        mixing_phase_terms: terms,
        inputs: BoundInputs {
            l: Some(l),
            trace_c: Some(trace_c),
            kappa_tilde: Some(kt),
            varsigma: Some(varsigma),
            rho: Some(rho),
            eta: Some(eta),
            u0: Some(u0),
            eps_mix: Some(eps_mix),
            variant: Some(variant),
            ..Default::default()
        },
    })
}

/// Proposal kernels whose total-variation continuity is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProposalKind {
    Rwm { sigma: f64 },
    Pcn { rho: f64, eta: f64 },
}

/// ‖Q(x,·) − Q(y,·)‖_TV from Pinsker: |x−y|/(2σ) for RWM, ½(ρ/η)|x−y|_{C⁻¹}
/// for pCN, capped at 1.
pub fn tv_proposal_bound(kind: ProposalKind, displacement: f64) -> Result<f64> {
    if !(displacement >= 0.0) {
        return invalid(format!("displacement must be nonnegative, got {displacement}"));
    }
    let v = match kind {
        ProposalKind::Rwm { sigma } => {
            if !(sigma > 0.0) {
                return invalid("sigma must be positive");
            }
            displacement / (2.0 * sigma)
        }
        ProposalKind::Pcn { rho, eta } => {
            check_rho_eta(rho, eta)?;
            0.5 * rho / eta * displacement
        }
    };
    Ok(v.min(1.0))
}

/// ((m/L)^{d/2}·N(x; x*, L⁻¹I), (L/m)^{d/2}·N(x; x*, m⁻¹I)), bracketing π(x).
pub fn gauss_sandwich(target: &TargetSpec, x: &[f64]) -> Result<(f64, f64)> {
    if !(target.m > 0.0) {
        return invalid("Gaussian sandwich needs m > 0");
    }
    if x.len() != target.d {
        return invalid(format!("point has length {}, expected {}", x.len(), target.d));
    }
    let (m, l) = (target.m, target.l);
    let half_d = 0.5 * target.d as f64;
    let r2: f64 = x.iter().zip(&target.mode).map(|(a, b)| (a - b) * (a - b)).sum();
    let log_lower = half_d * (m / l).ln() + half_d * (l / (2.0 * PI)).ln() - 0.5 * l * r2;
    let log_upper = half_d * (l / m).ln() + half_d * (m / (2.0 * PI)).ln() - 0.5 * m * r2;
    Ok((log_lower.exp(), log_upper.exp()))
}

/// 2⁻⁹·C_γ², the gap constant at ς² = ½ up to the factor e^{−1}·½.
pub fn intro_gap_constant() -> f64 {
    c_gamma().powi(2) / 512.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isoperimetry::{laplace_profile, strongly_logconcave_minorant};
    use crate::targets::gaussian_target;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    fn gauss_cc(delta: f64, eps: f64) -> (IsoMinorant, CloseCoupling) {
        (
            strongly_logconcave_minorant(1.0).unwrap(),
            CloseCoupling::new(MetricTag::Euclidean, delta, eps).unwrap(),
        )
    }

    #[test]
    fn close_coupling_validation() {
        assert!(CloseCoupling::new(MetricTag::Euclidean, 0.0, 0.5).is_err());
        assert!(CloseCoupling::new(MetricTag::Euclidean, 1.0, 0.0).is_err());
        assert!(CloseCoupling::new(MetricTag::Euclidean, 1.0, 1.5).is_err());
    }

    #[test]
    fn conductance_profile_example() {
        let (g, cc) = gauss_cc(0.1, 0.25);
        let v = conductance_profile_lower(&g, &cc, 0.5).unwrap();
        let closed = 0.25 * 0.25 * (0.5 * 0.1 * 1.2711062907364277);
        assert!(v >= closed * (1.0 - 1e-15));
        assert!(close(closed, 0.003972207158551337, 1e-12));
        let sat = conductance_profile_lower(&g, &CloseCoupling::new(MetricTag::Euclidean, 1e9, 0.25).unwrap(), 0.3).unwrap();
        assert!(close(sat, 0.5 * 0.25, 1e-6));
        assert!(conductance_profile_lower(&g, &cc, 0.0).is_err());
        assert!(conductance_profile_lower(&g, &cc, 0.6).is_err());
    }

    #[test]
    fn star_and_gap_examples() {
        let (g, cc) = gauss_cc(0.1, 0.25);
        let phi = conductance_star_lower(&g, &cc).unwrap();
        assert!(close(phi, 0.003972207158551337, 1e-12));
        assert!(close(spectral_gap_lower(&g, &cc).unwrap(), 7.889214855223242e-6, 1e-12));
        let (g, cc) = gauss_cc(1e12, 1.0);
        assert_eq!(conductance_star_lower(&g, &cc).unwrap(), 0.25);
        assert_eq!(spectral_gap_lower(&g, &cc).unwrap(), 1.0 / 32.0);
    }

    #[test]
    fn non_concave_minorant_rejected() {
        let m = IsoMinorant::from_fn("p^2", MetricTag::Euclidean, |p| p * p, true, false).unwrap();
        let cc = CloseCoupling::new(MetricTag::Euclidean, 1.0, 0.5).unwrap();
        assert!(conductance_profile_lower(&m, &cc, 0.5).is_err());
        assert!(conductance_star_lower(&m, &cc).is_err());
        assert!(v_star(&m, 1.0).is_err());
    }

    #[test]
    fn spectral_profile_branches() {
        let c = |_v: f64| 0.1;
        assert!(close(spectral_profile_lower(&c, 0.1, 0.3), 0.005, 1e-15));
        assert!(close(spectral_profile_lower(&c, 0.2, 0.7), 0.02, 1e-15));
        assert_eq!(spectral_profile_lower(&c, 0.1, 0.5), spectral_profile_lower(&c, 0.1, 0.5 + 1e-16));
    }

    #[test]
    fn v_star_laplace_cases() {
        let l = laplace_profile();
        assert_eq!(v_star(&l, 3.0).unwrap(), 0.5);
        assert_eq!(v_star(&l, 1.0).unwrap(), 0.0);
        assert_eq!(v_star(&l, 2.0).unwrap(), 0.5);
    }

    #[test]
    fn v_star_closed_form_for_log_minorant() {
        // Ĩ = C p (log 1/p)^{1/2}: v* = 2·exp(−4/(δ²C²)).
        let m = IsoMinorant::log_power(1.3, 0.5, MetricTag::Euclidean).unwrap();
        for delta in [0.5, 1.0, 2.0, 3.0] {
            let expect = (2.0 * (-4.0 / (delta * delta * 1.69f64)).exp()).min(0.5);
            assert!(close(v_star(&m, delta).unwrap(), expect, 1e-12), "delta={delta}");
        }
    }

    #[test]
    fn profile_mixing_constant_phi() {
        let phi = |_v: f64| 0.1;
        assert_eq!(mixing_time_profile(&phi, 0.1, 0.5, 1.0).unwrap().n, 2);
        let b = mixing_time_profile(&phi, 0.1, 8.0, 1.0).unwrap();
        assert_eq!(b.n, 210);
        let b = mixing_time_profile(&phi, 0.1, 800.0, 1.0).unwrap();
        let expect = 2.0 + 400.0 * 100f64.ln() + 100.0 * 8f64.ln();
        assert!((b.value - expect).abs() <= 1e-9 * expect);
        assert!(mixing_time_profile(&phi, 0.1, 8.0, 8.0).is_err());
        assert!(mixing_time_profile(&phi, 0.1, 8.0, 0.0).is_err());
    }

    #[test]
    fn iso_mixing_trivial_warm_start() {
        let (g, cc) = gauss_cc(0.3, 0.2);
        let r = mixing_time_iso(&g, &cc, 0.5, 1.0).unwrap();
        assert_eq!(r.mixing_phase_terms, [0.0, 0.0, 0.0]);
        assert_eq!(r.mixing_n, 2);
    }

    #[test]
    fn profile_integral_closed_form() {
        let m = IsoMinorant::log_power(1.0, 0.5, MetricTag::Euclidean).unwrap();
        let v = profile_phase_integral(&m, 0.01, 0.25).unwrap();
        let exact = (100f64.ln() / 4f64.ln()).ln();
        assert!((v - exact).abs() <= 1e-9);
        let m2 = IsoMinorant::log_power(2.0, 0.5, MetricTag::Euclidean).unwrap();
        assert!((profile_phase_integral(&m2, 0.01, 0.25).unwrap() - exact / 4.0).abs() <= 1e-9);
    }

    #[test]
    fn laplace_has_no_far_phase_for_small_delta() {
        let l = laplace_profile();
        let cc = CloseCoupling::new(MetricTag::Euclidean, 0.5, 0.3).unwrap();
        let r = mixing_time_iso(&l, &cc, 1e12, 0.1).unwrap();
        assert_eq!(r.v_star, 0.0);
        assert_eq!(r.mixing_phase_terms[0], 0.0);
        assert!(r.mixing_phase_terms[1] > 0.0);
    }

    #[test]
    fn rwm_constants() {
        let s = rwm_sigma(1.0, 2.0, 5);
        assert!(close(rwm_alpha0_lower(2.0, s, 5), 0.30326532985631671, 1e-15));
        assert!(close(rwm_alpha0_lower(1.0, 1e-12, 3), 0.5, 1e-15));
        let half = rwm_lower_bounds(1.0, 1.0, 1, 0.5f64.sqrt()).unwrap();
        assert!(close(half.phi_star, 0.008518039610469312, 1e-12));
        assert!(close(half.gap, 3.627849940276209e-5, 1e-12));
        assert!(rwm_lower_bounds(2.0, 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn general_acceptance_floor() {
        for (d, l, varsigma) in [(1usize, 1.0, 1.0), (5, 2.0, 0.7), (50, 0.5, 1.5)] {
            let sigma = rwm_sigma(varsigma, l, d);
            let quad = rwm_alpha0_lower_general(&|r: f64| 0.5 * l * r * r, sigma, d).unwrap();
            assert!(close(quad, rwm_alpha0_lower(l, sigma, d), 1e-9), "d={d}");
        }
        assert_eq!(rwm_alpha0_lower_general(&|_r: f64| 0.0, 1.0, 3).unwrap(), 0.5);
        let half_normal = rwm_alpha0_lower_general(&|r: f64| r, 1.0, 1).unwrap();
        assert!(close(half_normal, 0.2251402491609252, 1e-9));
    }

    #[test]
    fn close_coupling_and_pinsker() {
        let cc = rwm_close_coupling(0.3, 0.1).unwrap();
        assert!(close(cc.delta, 0.03, 1e-15) && close(cc.eps, 0.15, 1e-15));
        let tv = tv_proposal_bound(ProposalKind::Rwm { sigma: 0.1 }, cc.delta).unwrap();
        assert!(close(tv, 0.15, 1e-15));
        assert!(rwm_close_coupling(1.2, 0.1).is_err());
        assert_eq!(tv_proposal_bound(ProposalKind::Rwm { sigma: 2.0 }, 2.0).unwrap(), 0.5);
        assert_eq!(tv_proposal_bound(ProposalKind::Rwm { sigma: 2.0 }, 0.0).unwrap(), 0.0);
        assert_eq!(tv_proposal_bound(ProposalKind::Rwm { sigma: 1.0 }, 10.0).unwrap(), 1.0);
        let (rho, eta) = (0.8, 0.6);
        assert!(close(tv_proposal_bound(ProposalKind::Pcn { rho, eta }, eta / rho).unwrap(), 0.5, 1e-15));
    }

    #[test]
    fn upper_bound_examples() {
        let u = rwm_upper_bounds(1.0, 1.0, 20, 0.1f64.sqrt()).unwrap();
        assert!(close(1.1f64.powi(-10), 0.3855432894295317, 1e-15));
        assert!(u.phi_star <= 0.3855432894295317 + 1e-16);
        let u = rwm_upper_bounds(1.0, 1.0, 1, 0.1f64.sqrt()).unwrap();
        assert!(close(u.gap, 0.05, 1e-15));
        assert!(u.phi_star_alt >= u.phi_star);
    }

    #[test]
    fn asvar_examples() {
        let (up, lo) = rwm_asvar_bounds(1.0, 1.0, 1, 1.0).unwrap();
        assert_eq!(lo, 2.0);
        assert!(up >= lo);
        assert!(1024.0 / c_gamma().powi(2) <= 10141.0);
    }

    #[test]
    fn warm_start_examples() {
        assert_eq!(warm_start_u0(&WarmStart::GaussianMode { kappa: 1.0, d: 7 }).unwrap(), 1.0);
        assert!(close(warm_start_u0(&WarmStart::GaussianMode { kappa: 4.0, d: 10 }).unwrap(), 1024.0, 1e-15));
        let ap = WarmStart::AcceptedProposal { varsigma: 1.0, kappa: 1.0, d: 2, l: 1.0, dist_sq: 0.0 };
        assert!(close(warm_start_u0(&ap).unwrap(), 6.594885082800513, 1e-14));
        assert!(close(warm_start_u0(&WarmStart::PcnGaussian { l: 2.0, trace_c: 1.5 }).unwrap(), 1.5f64.exp(), 1e-15));
        assert!(warm_start_u0(&WarmStart::GaussianMode { kappa: 0.5, d: 2 }).is_err());
    }

    #[test]
    fn pcn_examples() {
        let eta = pcn_eta(1.0, 2.0, 3.0);
        assert!(close(pcn_alpha0_lower(2.0, eta, 3.0).unwrap(), 0.30326532985631671, 1e-15));
        assert_eq!(pcn_alpha0_lower(0.0, 0.5, 3.0).unwrap(), 0.5);
        assert!(pcn_alpha0_lower(1.0, 1.0, 1.0).is_err());
        // σ²d ↔ η²Tr(C).
        assert_eq!(pcn_alpha0_lower(1.7, 0.3, 4.0).unwrap(), rwm_alpha0_lower(1.7, 0.3, 4));
        assert!(close(pcn_gap_optimized_floor(1.0, 1.0), 3.627849940276209e-5, 1e-12));
        assert!(pcn_close_coupling(0.3, 0.8, 0.5).is_err());
        let cc = pcn_close_coupling(0.3, 0.8, 0.6).unwrap();
        assert_eq!(cc.metric, MetricTag::CovWeighted);
        assert!(close(cc.delta, 0.3 * 0.6 / 0.8, 1e-15));
        let b = pcn_lower_bounds(2.0, 5.0, 1.0).unwrap();
        assert_eq!(b.gap, 0.5 * b.phi_star * b.phi_star);
        assert_eq!(pcn_lower_bounds(2.0, 5.0, 1.0).unwrap(), pcn_lower_bounds(1.0, 10.0, 1.0).unwrap());
        assert!(pcn_lower_bounds(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn pcn_gap_matches_sigma_form() {
        for (l, tc, vs) in [(1.0, 10.0, 1.0), (3.0, 2.0, 0.5), (0.5, 40.0, 2.0)] {
            let b = pcn_lower_bounds(l, tc, vs).unwrap();
            let s2: f64 = vs * vs;
            let direct = c_gamma().powi(2) / 512.0 * (-2.0 * s2).exp() * s2 / (l * tc);
            assert!(close(b.gap, direct, 1e-13));
        }
        // The ς-optimum sits at ς² = ½.
        let opt = pcn_gap_optimized_floor(1.0, 10.0);
        let at = pcn_lower_bounds(1.0, 10.0, 0.5f64.sqrt()).unwrap().gap;
        assert!(close(at, opt, 1e-13));
    }

    #[test]
    fn tradeoff_infimum_matches_grid() {
        for kt in [0.2, 0.7, 1.0, 1.5, 4.0, 30.0] {
            let grid = (1..200_000)
                .map(|i| i as f64 / 200_000.0)
                .map(|eta: f64| (eta * eta * kt).exp() / (eta * eta))
                .fold(f64::INFINITY, f64::min);
            assert!(close(grid, pcn_step_tradeoff_infimum(kt), 2e-5), "kt={kt}");
            assert!(grid >= pcn_step_tradeoff_infimum(kt) * (1.0 - 1e-14));
        }
    }

    #[test]
    fn mixing_variants_reject_bad_inputs() {
        assert!(rwm_mixing_time(1.0, 1.0, 2, 1.0, 10.0, 8.0, 1).is_err());
        assert!(rwm_mixing_time(1.0, 1.0, 2, 1.0, 10.0, 1.0, 4).is_err());
        assert!(pcn_mixing_time(1.0, 1.0, 1.5, 10.0, 1.0, 1).is_err());
    }

    #[test]
    fn small_u0_gives_zero_far_and_gap_phases() {
        for v in [1u8, 2] {
            let r = rwm_mixing_time(1.0, 3.0, 10, 1.0, 0.5, 1.0, v).unwrap();
            assert_eq!(r.mixing_phase_terms[0], 0.0);
            assert_eq!(r.mixing_phase_terms[2], 0.0);
            let p = pcn_mixing_time(1.0, 10.0, 1.0, 0.5, 1.0, v).unwrap();
            assert_eq!(p.mixing_n, 2);
        }
    }

    #[test]
    fn variant_one_matches_general_bound() {
        let (m, l, d, vs, u0, eps_mix) = (0.5, 2.0, 6usize, 0.9, 1e6, 0.3);
        let rep = rwm_mixing_time(m, l, d, vs, u0, eps_mix, 1).unwrap();
        let sigma = rwm_sigma(vs, l, d);
        let a0 = rwm_alpha0_lower(l, sigma, d);
        let cc = rwm_close_coupling(a0, sigma).unwrap();
        let log_min = IsoMinorant::log_power(c_ell() * m.sqrt(), 0.5, MetricTag::Euclidean).unwrap();
        let gen = mixing_time_iso(&log_min, &cc, u0, eps_mix).unwrap();
        assert!(close(rep.v_star, gen.v_star, 1e-12));
        assert!(close(rep.mixing_phase_terms[0], gen.mixing_phase_terms[0], 1e-9));
        assert!(close(rep.mixing_phase_terms[1], gen.mixing_phase_terms[1], 1e-8));
        let gauss = strongly_logconcave_minorant(m).unwrap();
        let gen_g = mixing_time_iso(&gauss, &cc, u0, eps_mix).unwrap();
        assert!(close(rep.mixing_phase_terms[2], gen_g.mixing_phase_terms[2], 1e-12));
        let printed = rwm_mixing_time_with(m, l, d, vs, u0, eps_mix, 1, MixingOptions { convention: ConstantConvention::Printed, proof_sigma_factor: false }).unwrap();
        assert!(close(printed.mixing_phase_terms[2], 0.25 * rep.mixing_phase_terms[2], 1e-14));
        let proof = rwm_mixing_time_with(m, l, d, vs, u0, eps_mix, 1, MixingOptions { convention: ConstantConvention::Printed, proof_sigma_factor: true }).unwrap();
        assert!(close(proof.mixing_phase_terms[2], printed.mixing_phase_terms[2] / (sigma * sigma), 1e-14));
    }

    #[test]
    fn pcn_variant_one_matches_general_bound() {
        let (l, tc, vs, u0, eps_mix) = (1.0, 12.0, 1.1, 1e8, 0.5);
        let rep = pcn_mixing_time(l, tc, vs, u0, eps_mix, 1).unwrap();
        let eta = pcn_eta(vs, l, tc);
        let rho = (1.0 - eta * eta).sqrt();
        let a0 = pcn_alpha0_lower(l, eta, tc).unwrap();
        let cc = pcn_close_coupling(a0, rho, eta).unwrap();
        let log_min = IsoMinorant::log_power(c_ell(), 0.5, MetricTag::CovWeighted).unwrap();
        let gen = mixing_time_iso(&log_min, &cc, u0, eps_mix).unwrap();
        assert!(close(rep.mixing_phase_terms[0], gen.mixing_phase_terms[0], 1e-9));
        assert!(close(rep.mixing_phase_terms[1], gen.mixing_phase_terms[1], 1e-8));
        let gauss = strongly_logconcave_minorant(1.0).unwrap();
        let gen_g = mixing_time_iso(&gauss, &cc, u0, eps_mix).unwrap();
        assert!(close(rep.mixing_phase_terms[2], gen_g.mixing_phase_terms[2], 1e-12));
    }

    #[test]
    fn sandwich_collapses_for_gaussian() {
        let t = gaussian_target(3, 2.0).unwrap();
        let x = [0.4, -1.0, 0.3];
        let (lo, hi) = gauss_sandwich(&t, &x).unwrap();
        let pi = (-t.u(&x)).exp() / (2.0 * PI * 2.0).powf(1.5);
        assert!(close(lo, pi, 1e-13) && close(hi, pi, 1e-13));
    }

    #[test]
    fn intro_constant() {
        let c = intro_gap_constant();
        assert!(close(c, 1.9723037138058105e-4, 1e-13));
    }

    #[test]
    fn evaluators_are_pure() {
        let a = rwm_mixing_time(0.3, 2.0, 17, 1.3, 1e7, 0.2, 1).unwrap();
        let b = rwm_mixing_time(0.3, 2.0, 17, 1.3, 1e7, 0.2, 1).unwrap();
        assert_eq!(a, b);
        let (g, cc) = gauss_cc(0.2, 0.4);
        assert_eq!(mixing_time_iso(&g, &cc, 1e5, 1.0).unwrap(), mixing_time_iso(&g, &cc, 1e5, 1.0).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn theta_sup_dominates_closed_form(delta in 0.001f64..20.0, eps in 0.01f64..1.0, v in 0.001f64..0.5) {
            let (g, cc) = gauss_cc(delta, eps);
            let b = conductance_profile_lower(&g, &cc, v).unwrap();
            let closed = 0.25 * eps * (0.5 * delta * g.eval(0.5 * v) / (0.5 * v)).min(1.0);
            prop_assert!(b >= closed);
            prop_assert!(b <= 0.5 * eps);
        }

        #[test]
        fn gap_is_half_square_of_conductance(delta in 0.001f64..20.0, eps in 0.01f64..1.0, m in 0.1f64..10.0) {
            let g = strongly_logconcave_minorant(m).unwrap();
            let cc = CloseCoupling::new(MetricTag::Euclidean, delta, eps).unwrap();
            let phi = conductance_star_lower(&g, &cc).unwrap();
            prop_assert_eq!(spectral_gap_lower(&g, &cc).unwrap(), 0.5 * phi * phi);
        }

        #[test]
        fn v_star_monotone_in_delta(d1 in 0.01f64..10.0, f in 1.0f64..5.0, m in 0.1f64..4.0) {
            let g = strongly_logconcave_minorant(m).unwrap();
            prop_assert!(v_star(&g, d1 * f).unwrap() >= v_star(&g, d1).unwrap());
        }

        #[test]
        fn iso_mixing_monotone(u0 in 1.0f64..1e9, fu in 1.0f64..100.0, delta in 0.05f64..3.0, fd in 1.0f64..3.0,
                               eps in 0.05f64..0.5, fe in 1.0f64..2.0, em in 0.01f64..3.0, fm in 1.0f64..2.0) {
            let g = strongly_logconcave_minorant(1.0).unwrap();
            let cc = CloseCoupling::new(MetricTag::Euclidean, delta, eps).unwrap();
            let base = mixing_time_iso(&g, &cc, u0, em).unwrap().mixing_n;
            prop_assert!(mixing_time_iso(&g, &cc, u0 * fu, em).unwrap().mixing_n >= base);
            let cc_d = CloseCoupling::new(MetricTag::Euclidean, delta * fd, eps).unwrap();
            prop_assert!(mixing_time_iso(&g, &cc_d, u0, em).unwrap().mixing_n <= base);
            let cc_e = CloseCoupling::new(MetricTag::Euclidean, delta, (eps * fe).min(1.0)).unwrap();
            prop_assert!(mixing_time_iso(&g, &cc_e, u0, em).unwrap().mixing_n <= base);
            prop_assert!(mixing_time_iso(&g, &cc, u0, (em * fm).min(7.99)).unwrap().mixing_n <= base);
        }

        #[test]
        fn report_invariants(m in 0.1f64..1.0, k in 1.0f64..10.0, d in 1usize..100, vs in 0.25f64..2.38,
                             u0 in 0.0f64..1e10, v in 1u8..=3) {
            let r = rwm_mixing_time(m, m * k, d, vs, u0, 1.0, v).unwrap();
            prop_assert!(r.mixing_n >= 2);
            prop_assert!(r.mixing_phase_terms.iter().all(|t| *t >= 0.0));
            prop_assert!(r.phi_star_lower <= r.phi_star_upper.unwrap());
            prop_assert!(r.gap_lower <= r.gap_upper.unwrap());
            prop_assert!((0.0..=0.5).contains(&r.v_star));
        }
    }
}
