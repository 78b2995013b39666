//! Subordination `S_t u = int T_s u mu_t(ds)` of the p-Laplacian flow and the
//! fractional generator
//!
//! ```text
//! A^alpha u = alpha / Gamma(1 - alpha) * int_0^inf (u - T_s u) s^{-1-alpha} ds.
//! ```
//!
//! `T_s u` is needed at quadrature nodes spread over many decades of `s`. It is
//! computed along one orbit per input, stepping through the sorted nodes with a
//! fixed number of implicit-Euler substeps per gap, and the orbit is repeated
//! at successively halved substeps for Richardson extrapolation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::pflow::{grad_energy, march_increments, EnergyParams, SolverOptions};
use crate::space::WeightedGraph;
use crate::subordinator::{generator_constant, QuadratureSpec, StableParams, UnitStableRule};

/// How `T_s` is evaluated at the quadrature nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitSchedule {
    /// Implicit-Euler substeps between consecutive nodes on the coarsest orbit.
    pub substeps: usize,
    /// Number of orbits (substeps doubled each time) combined by Richardson
    /// extrapolation; 1 means plain implicit Euler.
    pub levels: usize,
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl Default for OrbitSchedule {
    fn default() -> Self {
        Self { substeps: 2, levels: 3, solver_tol: 1e-12, max_iter: 20_000 }
    }
}

impl OrbitSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.substeps == 0 || self.levels == 0 || self.levels > 6 {
            return Err(Error::InvalidParameter(format!(
                "orbit schedule needs substeps >= 1 and 1 <= levels <= 6, got {} and {}",
                self.substeps, self.levels
            )));
        }
        self.solver().validate()
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.solver_tol, max_iter: self.max_iter }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubordinationPlan {
    pub stable: StableParams,
    /// Discretization of `mu_1` (scaled to `mu_t` by `t^{1/alpha}`).
    pub density_quad: QuadratureSpec,
    /// Discretization of the singular generator integral.
    pub generator_quad: QuadratureSpec,
    pub flow: OrbitSchedule,
}

impl SubordinationPlan {
    pub fn new(alpha: f64) -> Result<Self> {
        let stable = StableParams::new(alpha)?;
        Ok(Self {
            stable,
            density_quad: QuadratureSpec::for_density(&stable),
            generator_quad: QuadratureSpec::for_generator(&stable),
            flow: OrbitSchedule::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.stable.validate()?;
        self.density_quad.validate()?;
        self.generator_quad.validate()?;
        self.flow.validate()
    }
}

/// Increments `u - T_s u` at the sorted `times`, Richardson-extrapolated over
/// `schedule.levels` orbits.
pub fn orbit_increments(
    graph: &WeightedGraph,
    u: &[f64],
    params: &EnergyParams,
    times: &[f64],
    schedule: &OrbitSchedule,
) -> Result<Vec<Vec<f64>>> {
    let space = graph.space();
    space.check_shape(u)?;
    params.validate()?;
    schedule.validate()?;
    let mut base = u.to_vec();
    space.project(&mut base);
    let opts = schedule.solver();
    let orbits: Vec<Vec<Vec<f64>>> = (0..schedule.levels)
        .into_par_iter()
        .map(|level| {
            let k = schedule.substeps << level;
            march_increments(graph, &base, params.p, times, &opts, |_, _| k)
        })
        .collect::<Result<_>>()?;
    Ok(richardson(orbits))
}

/// Per-entry Richardson table for a first-order method with step halving.
fn richardson(mut orbits: Vec<Vec<Vec<f64>>>) -> Vec<Vec<f64>> {
    let levels = orbits.len();
    for j in 1..levels {
        let factor = ((1usize << j) - 1) as f64;
        // after pass j, orbits[l] for l >= j holds R[l][j]
        for l in (j..levels).rev() {
            let (lo, hi) = orbits.split_at_mut(l);
            let coarse = &lo[l - 1];
            for (fine_t, coarse_t) in hi[0].iter_mut().zip(coarse) {
                for (f, c) in fine_t.iter_mut().zip(coarse_t) {
                    *f += (*f - c) / factor;
                }
            }
        }
    }
    orbits.pop().unwrap_or_default()
}

/// `T_t u` computed along a geometric ladder of times ending at `t`.
pub fn flow_at(
    graph: &WeightedGraph,
    u: &[f64],
    params: &EnergyParams,
    t: f64,
    schedule: &OrbitSchedule,
) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time t = {t} must be positive")));
    }
    // 32 points per decade over 12 decades below t
    let rungs = 12 * 32;
    let times: Vec<f64> = (0..=rungs)
        .map(|k| t * 10f64.powf(-12.0 * (rungs - k) as f64 / rungs as f64))
        .collect();
    let w = orbit_increments(graph, u, params, &times, schedule)?;
    let mut base = u.to_vec();
    graph.space().project(&mut base);
    Ok(base.iter().zip(w.last().unwrap()).map(|(b, x)| b - x).collect())
}

/// `S_t u = sum_k omega_k T_{s_k} u`; for `alpha = 1` this is `T_t u`.
pub fn subordinate(
    graph: &WeightedGraph,
    u: &[f64],
    params: &EnergyParams,
    plan: &SubordinationPlan,
    t: f64,
) -> Result<Vec<f64>> {
    plan.validate()?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time t = {t} must be positive")));
    }
    if plan.stable.is_degenerate() {
        return flow_at(graph, u, params, t, &plan.flow);
    }
    let rule = UnitStableRule::new(&plan.stable, &plan.density_quad)?;
    let nodes = rule.nodes(t);
    let times: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    let increments = orbit_increments(graph, u, params, &times, &plan.flow)?;
    let missing = 1.0 - rule.total_mass();
    let mut out = u.to_vec();
    graph.space().project(&mut out);
    for ((_, omega), w) in nodes.iter().zip(&increments) {
        for (o, x) in out.iter_mut().zip(w) {
            *o -= omega * x;
        }
    }
    // mass beyond the last node sees the orbit frozen there
    if let Some(last) = increments.last() {
        for (o, x) in out.iter_mut().zip(last) {
            *o -= missing * x;
        }
    }
    Ok(out)
}

/// `A^alpha u` with its truncation bounds and the orbit diagnostic used by
/// the norm bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FracGenerator {
    pub value: Vec<f64>,
    /// `|A u|_2 s_min^{1-alpha} / (1-alpha)`
    pub head_bound: f64,
    /// `2 |u|_2 s_max^{-alpha} / alpha`
    pub tail_bound: f64,
    /// `max_k |u - T_{s_k} u|_2` over the quadrature nodes.
    pub sup_increment: f64,
    /// `|A u|_2` of the principal section.
    pub section_norm: f64,
}

pub fn frac_generator(
    graph: &WeightedGraph,
    u: &[f64],
    params: &EnergyParams,
    plan: &SubordinationPlan,
) -> Result<FracGenerator> {
    plan.validate()?;
    let alpha = plan.stable.alpha;
    if !(alpha < 1.0) {
        return Err(Error::InvalidParameter("the fractional generator needs alpha < 1".into()));
    }
    let space = graph.space();
    space.check_shape(u)?;
    let mut base = u.to_vec();
    space.project(&mut base);
    let au = grad_energy(graph, &base, params)?;
    let section_norm = space.norm2(&au);
    let u_norm = space.norm2(&base);

    let quad = &plan.generator_quad;
    let head_bound = section_norm * quad.s_min.powf(1.0 - alpha) / (1.0 - alpha);
    let tail_bound = 2.0 * u_norm * quad.s_max.powf(-alpha) / alpha;
    let allowed = quad.tail_tol * (section_norm + u_norm);
    if head_bound + tail_bound > allowed {
        return Err(Error::ToleranceNotMet { head: head_bound, tail: tail_bound, allowed });
    }

    let rule = quad.rule();
    let increments = orbit_increments(graph, &base, params, &rule.points, &plan.flow)?;
    let c = generator_constant(alpha);
    let mut value = vec![0.0; u.len()];
    let mut sup_increment = 0.0_f64;
    for ((s, w), inc) in rule.points.iter().zip(&rule.weights).zip(&increments) {
        let kernel = c * w * s.powf(-1.0 - alpha);
        for (v, x) in value.iter_mut().zip(inc) {
            *v += kernel * x;
        }
        sup_increment = sup_increment.max(space.norm2(inc));
    }
    space.project(&mut value);
    Ok(FracGenerator { value, head_bound, tail_bound, sup_increment, section_norm })
}

/// Both sides of `|A^alpha u|_2 <= |A u|_2^alpha (sup_s |u - T_s u|_2)^{1-alpha} / ((1-alpha) Gamma(1-alpha))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBound {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn frac_norm_bound(
    graph: &WeightedGraph,
    u: &[f64],
    params: &EnergyParams,
    plan: &SubordinationPlan,
) -> Result<NormBound> {
    let gen = frac_generator(graph, u, params, plan)?;
    Ok(norm_bound_from(graph, u, &gen, plan.stable.alpha))
}

pub fn norm_bound_from(graph: &WeightedGraph, u: &[f64], gen: &FracGenerator, alpha: f64) -> NormBound {
    let space = graph.space();
    let mut base = u.to_vec();
    space.project(&mut base);
    let lhs = space.norm2(&gen.value);
    // contractivity caps the sup at 2 |u|
    let sup = gen.sup_increment.min(2.0 * space.norm2(&base));
    let rhs = gen.section_norm.powf(alpha) * sup.powf(1.0 - alpha) / ((1.0 - alpha) * gamma(1.0 - alpha));
    NormBound { lhs, rhs }
}

/// `(A^alpha u - A^alpha v, u - v)`.
pub fn monotonicity_gap(
    graph: &WeightedGraph,
    u: &[f64],
    v: &[f64],
    params: &EnergyParams,
    plan: &SubordinationPlan,
) -> Result<f64> {
    let space = graph.space();
    space.check_shape(v)?;
    let (au, av) = rayon::join(
        || frac_generator(graph, u, params, plan),
        || frac_generator(graph, v, params, plan),
    );
    let (au, av) = (au?, av?);
    let mut diff_u = u.to_vec();
    let mut diff_v = v.to_vec();
    space.project(&mut diff_u);
    space.project(&mut diff_v);
    let du: Vec<f64> = diff_u.iter().zip(&diff_v).map(|(a, b)| a - b).collect();
    let dg: Vec<f64> = au.value.iter().zip(&av.value).map(|(a, b)| a - b).collect();
    space.inner(&dg, &du)
}
