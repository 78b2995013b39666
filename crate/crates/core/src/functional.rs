//! Entropy functionals, closed-form constants of the hypercontractive
//! theory, inequality deficits and decay-exponent fitting.
//!
//! Natural logarithms throughout. Deficits follow counterexample semantics:
//! a negative value is a reported violation, never an error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pflow::EnergyParams;
use crate::space::{MeasureSpace, WeightedGraph};
use crate::subop::{orbit_increments, OrbitSchedule};

/// Derivatives at `t = 0` of the exponent profile `r(t)`, the power
/// `alpha(t)` and the constant `k(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperProfile {
    pub r_dot0: f64,
    pub alpha_dot0: f64,
    pub k_dot0: f64,
}

impl HyperProfile {
    pub fn new(r_dot0: f64, alpha_dot0: f64, k_dot0: f64) -> Result<Self> {
        let p = Self { r_dot0, alpha_dot0, k_dot0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_dot0 > 0.0 && self.r_dot0.is_finite()) {
            return Err(Error::InvalidProfile(format!("r_dot0 = {} must be positive", self.r_dot0)));
        }
        if !self.alpha_dot0.is_finite() || !self.k_dot0.is_finite() {
            return Err(Error::InvalidProfile("profile derivatives must be finite".into()));
        }
        Ok(())
    }

    fn require_decreasing_alpha(&self) -> Result<()> {
        if !(self.alpha_dot0 < 0.0) {
            return Err(Error::InvalidProfile(format!(
                "alpha_dot0 = {} must be negative",
                self.alpha_dot0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperProfile {
    pub beta: f64,
    pub s: f64,
    /// `lim_{t -> 0} k(t)^t`
    pub kappa_limit: f64,
}

impl SuperProfile {
    pub fn new(beta: f64, s: f64, kappa_limit: f64) -> Result<Self> {
        let p = Self { beta, s, kappa_limit };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_beta_s(self.beta, self.s)?;
        if !(self.kappa_limit > 0.0 && self.kappa_limit.is_finite()) {
            return Err(Error::InvalidProfile(format!(
                "kappa_limit = {} must be positive and finite",
                self.kappa_limit
            )));
        }
        Ok(())
    }

    /// Replacement for `k1` in the Nash inequalities.
    pub fn k1(&self, p: f64) -> Result<f64> {
        check_p(p)?;
        Ok(2.0 * (1.0 - self.beta) / (self.beta * (p - 2.0) * (self.s - 2.0)))
    }
}

fn check_beta_s(beta: f64, s: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidProfile(format!("beta = {beta} must lie in (0, 1)")));
    }
    if !(s >= 2.0 && s >= 2.0 / beta && s.is_finite()) || s == 2.0 {
        return Err(Error::InvalidProfile(format!("s = {s} must satisfy s >= max(2, 2/beta)")));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 2.0 && p.is_finite()) {
        return Err(Error::InvalidExponent(p));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSobConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomConstants {
    pub k1: f64,
    pub k2: f64,
}

impl HomConstants {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        if !(k1 > 0.0 && k2 > 0.0 && k1.is_finite() && k2.is_finite()) {
            return Err(Error::InvalidProfile(format!("k1 = {k1}, k2 = {k2} must be positive")));
        }
        Ok(Self { k1, k2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UltraExponents {
    pub alpha_exp: f64,
    pub gamma_exp: f64,
}

fn nonzero_norm(space: &MeasureSpace, u: &[f64], q: f64) -> Result<f64> {
    let n = space.lp_norm(u, q)?;
    if n == 0.0 {
        return Err(Error::ZeroFunction);
    }
    Ok(n)
}

/// `int (|u|^q / |u|_q^q) log(|u| / |u|_q) dm`
pub fn young_j(space: &MeasureSpace, u: &[f64], q: f64) -> Result<f64> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidExponent(q));
    }
    let norm = nonzero_norm(space, u, q)?;
    let mut acc = 0.0;
    for (i, (&x, &m)) in u.iter().zip(space.mass()).enumerate() {
        if space.is_grounded(i) || x == 0.0 {
            continue;
        }
        let ratio = x.abs() / norm;
        acc += m * ratio.powf(q) * ratio.ln();
    }
    Ok(acc)
}

/// `(|u|_q / |u|_r, exp((q - r)/(q r) J(1, |u|^q)))`
pub fn interp_bound_check(space: &MeasureSpace, u: &[f64], q: f64, r: f64) -> Result<(f64, f64)> {
    if !(r >= 1.0 && q > r && q.is_finite()) {
        return Err(Error::Domain(format!("need q > r >= 1, got q = {q}, r = {r}")));
    }
    let nq = nonzero_norm(space, u, q)?;
    let nr = nonzero_norm(space, u, r)?;
    let powered: Vec<f64> = u.iter().map(|x| x.abs().powf(q)).collect();
    let j = young_j(space, &powered, 1.0)?;
    Ok((nq / nr, ((q - r) / (q * r) * j).exp()))
}

pub fn logsob_constants(profile: &HyperProfile) -> Result<LogSobConstants> {
    profile.validate()?;
    let r = profile.r_dot0;
    Ok(LogSobConstants {
        c1: (r + 2.0 * profile.alpha_dot0) / r,
        c2: 1.0 / r,
        c3: 2.0 * profile.k_dot0 / r,
    })
}

pub fn hom_constants(profile: &HyperProfile, p: f64, m_const: f64) -> Result<HomConstants> {
    profile.validate()?;
    profile.require_decreasing_alpha()?;
    check_p(p)?;
    if !(m_const > 0.0 && m_const.is_finite()) {
        return Err(Error::InvalidProfile(format!("M = {m_const} must be positive")));
    }
    let (r, a, k) = (profile.r_dot0, profile.alpha_dot0, profile.k_dot0);
    let k1 = -4.0 * a / ((p - 2.0) * r);
    let k2 = -m_const * (p - 2.0) / (2.0 * a) * (1.0 - k * (p - 2.0) / a).exp();
    HomConstants::new(k1, k2)
}

/// Dimension of a hypercontractive profile.
pub fn dimension(profile: &HyperProfile, p: f64) -> Result<f64> {
    profile.validate()?;
    profile.require_decreasing_alpha()?;
    check_p(p)?;
    let (r, a) = (profile.r_dot0, profile.alpha_dot0);
    if !(r + 2.0 * a > 0.0) {
        return Err(Error::InvalidProfile(format!(
            "r_dot0 + 2 alpha_dot0 = {} must be positive",
            r + 2.0 * a
        )));
    }
    Ok(-4.0 * a * p / ((p - 2.0) * (r + 2.0 * a)))
}

/// Dimension after subordination of order `alpha`.
pub fn dim_alpha(d: f64, p: f64, alpha: f64) -> Result<f64> {
    check_d(d)?;
    check_p(p)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    if alpha == 1.0 {
        return Ok(d);
    }
    Ok(d * (2.0 + alpha * (p - 2.0)) / (alpha * p))
}

fn check_d(d: f64) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("dimension d = {d} must be positive")));
    }
    Ok(d)
}

/// Exponents of `|T_t u|_rho <= C |u|_q^gamma t^{-alpha}`; `rho` may be infinite.
pub fn ultra_exponents(d: f64, p: f64, q: f64, rho: f64) -> Result<UltraExponents> {
    check_d(d)?;
    check_p(p)?;
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidExponent(q));
    }
    if !(rho >= q) {
        return Err(Error::Domain(format!("rho = {rho} must be at least q = {q}")));
    }
    let den = p * q + d * (p - 2.0);
    if rho.is_infinite() {
        return Ok(UltraExponents { alpha_exp: d / den, gamma_exp: p * q / den });
    }
    Ok(UltraExponents {
        alpha_exp: (d / rho) * (rho - q) / den,
        gamma_exp: (q / rho) * (p * rho + d * (p - 2.0)) / den,
    })
}

/// Norm exponent of the supercontractive bound at `q = 2`.
pub fn gamma_sub(d: f64, p: f64, rho: f64) -> Result<f64> {
    check_d(d)?;
    check_p(p)?;
    if !(rho >= 2.0) {
        return Err(Error::Domain(format!("rho = {rho} must be at least 2")));
    }
    let den = 2.0 * p + d * (p - 2.0);
    if rho.is_infinite() {
        return Ok(2.0 * p / den);
    }
    Ok((2.0 / rho) * (p * rho + d * (p - 2.0)) / den)
}

/// `(p(t), a(t))` interpolating between `L^2` at `t = 0` and `L^s` at `t = 1`.
pub fn super_profile(t: f64, s: f64, beta: f64) -> Result<(f64, f64)> {
    check_beta_s(beta, s)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} must lie in [0, 1]")));
    }
    let den = 2.0 * t + s * beta * (1.0 - t);
    let p_t = 2.0 * s * ((1.0 - t) * beta + t) / den;
    let a_t = den / (s * beta);
    Ok((p_t, a_t))
}

/// Right derivative at `0` of `t -> |T_t u|_{r(t)}` with `r(0) = 2`.
pub fn gross_derivative(space: &MeasureSpace, u: &[f64], hu: &[f64], r_dot0: f64) -> Result<f64> {
    space.check_shape(hu)?;
    let norm = nonzero_norm(space, u, 2.0)?;
    let mut entropy = 0.0;
    for (i, (&x, &m)) in u.iter().zip(space.mass()).enumerate() {
        if space.is_grounded(i) || x == 0.0 {
            continue;
        }
        entropy += m * x * x * (x.abs() / norm).ln();
    }
    let pairing = space.inner(u, hu)?;
    Ok((0.5 * r_dot0 * entropy - pairing) / norm)
}

/// One-sided difference quotient of `t -> |T_t u|_{2 + r_dot0 t}` at steps
/// `h` and `h/2`, combined by Richardson extrapolation.
pub fn gross_derivative_fd(
    graph: &WeightedGraph,
    u: &[f64],
    params: &EnergyParams,
    r_dot0: f64,
    h: f64,
    schedule: &OrbitSchedule,
) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("step h = {h} must be positive")));
    }
    let space = graph.space();
    let mut base = u.to_vec();
    space.check_shape(&base)?;
    space.project(&mut base);
    let f0 = nonzero_norm(space, &base, 2.0)?;
    let times = [0.5 * h, h];
    let w = orbit_increments(graph, &base, params, &times, schedule)?;
    let quotient = |k: usize| -> Result<f64> {
        let state: Vec<f64> = base.iter().zip(&w[k]).map(|(b, x)| b - x).collect();
        let f = space.lp_norm(&state, 2.0 + r_dot0 * times[k])?;
        Ok((f - f0) / times[k])
    };
    let (half, full) = (quotient(0)?, quotient(1)?);
    Ok(2.0 * half - full)
}

/// `k1 log(k2 (u,Hu) / |u|_2^p) - int (u^2/|u|^2) log(u^2/|u|^2) dm`
pub fn logsob_deficit(space: &MeasureSpace, u: &[f64], pairing: f64, hom: &HomConstants, p_hom: f64) -> Result<f64> {
    if !(pairing > 0.0) {
        return Err(Error::Hypothesis(format!("pairing (u, Hu) = {pairing} must be positive")));
    }
    let norm = nonzero_norm(space, u, 2.0)?;
    let lhs = 2.0 * young_j(space, u, 2.0)?;
    let rhs = hom.k1 * (hom.k2 * pairing / norm.powf(p_hom)).ln();
    Ok(rhs - lhs)
}

/// Exponents `(e1, e2)` of the Nash inequality for `L^m`.
pub fn nash_exponents(k1: f64, m_exp: f64, p_hom: f64) -> (f64, f64) {
    let den = m_exp + p_hom * k1 * (2.0 - m_exp);
    (k1 * (2.0 - m_exp) / den, m_exp / den)
}

/// `C (u,Hu)^{e1} |u|_m^{e2} - |u|_2`
pub fn nash_deficit(
    space: &MeasureSpace,
    u: &[f64],
    pairing: f64,
    hom: &HomConstants,
    m_exp: f64,
    p_hom: f64,
    c: f64,
) -> Result<f64> {
    if !(1.0..2.0).contains(&m_exp) {
        return Err(Error::Domain(format!("m = {m_exp} must lie in [1, 2)")));
    }
    if !(pairing >= 0.0) {
        return Err(Error::Hypothesis(format!("pairing (u, Hu) = {pairing} must be nonnegative")));
    }
    let (e1, e2) = nash_exponents(hom.k1, m_exp, p_hom);
    let l2 = space.lp_norm(u, 2.0)?;
    let lm = space.lp_norm(u, m_exp)?;
    Ok(c * pairing.powf(e1) * lm.powf(e2) - l2)
}

/// `(u,Hu) - |u|_2^p / (k2 m(X)^{1/k1})`
pub fn coercivity_gap(space: &MeasureSpace, u: &[f64], pairing: f64, hom: &HomConstants, p_hom: f64) -> Result<f64> {
    let total = space.total_mass();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Hypothesis(format!("total mass {total} must be finite and positive")));
    }
    let l2 = space.lp_norm(u, 2.0)?;
    Ok(pairing - l2.powf(p_hom) / (hom.k2 * total.powf(1.0 / hom.k1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UltraSample {
    pub t: f64,
    /// `|T_t u|_rho`
    pub norm_rho: f64,
    /// `|u|_q`
    pub norm_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UltraFit {
    pub alpha_hat: f64,
    pub gamma_hat: f64,
    pub c_hat: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Least squares for `log |T_t u|_rho = log C + gamma log |u|_q - alpha log t`;
/// with `pin_gamma` the norm exponent is held fixed.
pub fn ultra_fit(samples: &[UltraSample], pin_gamma: Option<f64>) -> Result<UltraFit> {
    if samples.len() < 3 {
        return Err(Error::RankDeficient(format!("need at least 3 samples, got {}", samples.len())));
    }
    for s in samples {
        if !(s.t > 0.0 && s.norm_rho > 0.0 && s.norm_q > 0.0) || !s.t.is_finite() {
            return Err(Error::Domain(format!("sample {s:?} must have positive finite entries")));
        }
    }
    let n = samples.len();
    let cols = if pin_gamma.is_some() { 2 } else { 3 };
    let mut a = DMatrix::<f64>::zeros(n, cols);
    let mut y = DVector::<f64>::zeros(n);
    for (i, s) in samples.iter().enumerate() {
        a[(i, 0)] = 1.0;
        a[(i, 1)] = -s.t.ln();
        y[i] = s.norm_rho.ln();
        match pin_gamma {
            Some(g) => y[i] -= g * s.norm_q.ln(),
            None => a[(i, 2)] = s.norm_q.ln(),
        }
    }
    // columns are centred before the rank test so an offset does not mask
    // a constant regressor
    for j in 1..cols {
        let col = a.column(j);
        let mean = col.mean();
        let spread = col.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
        if spread <= 1e-12 * mean.abs().max(1.0) {
            let what = if j == 1 { "sample times are all equal" } else { "input norms are all equal" };
            return Err(Error::RankDeficient(what.into()));
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax {
        return Err(Error::RankDeficient("design matrix is singular".into()));
    }
    let sol = svd
        .solve(&y, 1e-14 * smax)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let resid = &a * &sol - &y;
    let residual = (resid.norm_squared() / n as f64).sqrt();
    Ok(UltraFit {
        alpha_hat: sol[1],
        gamma_hat: pin_gamma.unwrap_or_else(|| sol[2]),
        c_hat: sol[0].exp(),
        residual,
    })
}
