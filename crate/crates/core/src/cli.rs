//! Scenario runner: a JSON config selects a space, a flow, an optional
//! subordination plan, profile data and a list of named checks; the result is
//! a report with one record per check.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::functional::{
    coercivity_gap, dim_alpha, dimension, gross_derivative, gross_derivative_fd, hom_constants,
    interp_bound_check, logsob_constants, logsob_deficit, nash_deficit, ultra_exponents, ultra_fit,
    HomConstants, HyperProfile, SuperProfile, UltraSample,
};
use crate::pflow::{evolve, grad_energy, prox_step, EnergyParams, FlowSchedule};
use crate::space::{build_path_grid, GraphFile, GridSpec, MeasureSpace, WeightedGraph};
use crate::subop::{
    frac_generator, monotonicity_gap, norm_bound_from, OrbitSchedule, SubordinationPlan,
};
use crate::subordinator::{laplace_transform, negative_moment, QuadratureSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Known checks, in report order.
pub const SUITES: &[&str] = &[
    "laplace_check",
    "negative_moment_check",
    "nonexpansive",
    "contractive",
    "dissipation",
    "conservation",
    "scaling",
    "frac_monotonicity",
    "frac_homogeneity",
    "frac_norm_bound",
    "interp_bound",
    "gross_derivative",
    "logsob_deficit",
    "nash_deficit",
    "coercivity_gap",
    "constants",
    "ultra_fit",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceSource {
    Grid(GridSpec),
    File(PathBuf),
    Inline(GraphFile),
}

impl SpaceSource {
    pub fn build(&self) -> Result<WeightedGraph> {
        match self {
            SpaceSource::Grid(spec) => build_path_grid(spec),
            SpaceSource::File(path) => {
                if !path.exists() {
                    return Err(Error::Config(format!("graph file {} does not exist", path.display())));
                }
                WeightedGraph::from_file(path)
            }
            SpaceSource::Inline(file) => file.clone().into_graph(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubordinationConfig {
    pub alpha: f64,
    #[serde(default)]
    pub density_quad: Option<QuadratureSpec>,
    #[serde(default)]
    pub generator_quad: Option<QuadratureSpec>,
    #[serde(default)]
    pub orbit: Option<OrbitSchedule>,
}

impl SubordinationConfig {
    pub fn plan(&self) -> Result<SubordinationPlan> {
        let mut plan = SubordinationPlan::new(self.alpha)?;
        if let Some(q) = self.density_quad {
            plan.density_quad = q;
        }
        if let Some(q) = self.generator_quad {
            plan.generator_quad = q;
        }
        if let Some(o) = self.orbit {
            plan.flow = o;
        }
        plan.validate()?;
        Ok(plan)
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    #[serde(default)]
    pub hyper: Option<HyperProfile>,
    #[serde(default)]
    pub supercontractive: Option<SuperProfile>,
    /// Constant `C` probed by the Nash check.
    #[serde(default = "one")]
    pub nash_constant: f64,
    /// Lower exponent `m` of the Nash check.
    #[serde(default = "one")]
    pub nash_m: f64,
    /// Dimension used as the target of the decay fit; defaults to the
    /// profile dimension.
    #[serde(default)]
    pub dimension: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: Format,
}

fn default_format() -> Format {
    Format::Csv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
    Gaussian,
}

fn default_id() -> String {
    "scenario".into()
}

fn default_samples() -> usize {
    20
}

fn default_distribution() -> Distribution {
    Distribution::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_id")]
    pub id: String,
    pub space: SpaceSource,
    pub energy: EnergyParams,
    pub flow: FlowSchedule,
    #[serde(default)]
    pub subordination: Option<SubordinationConfig>,
    #[serde(default)]
    pub profile: Option<ProfileConfig>,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    /// Random functions per sampled check.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_distribution")]
    pub distribution: Distribution,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, name) in self.suites.iter().enumerate() {
            if !SUITES.contains(&name.as_str()) {
                return Err(Error::UnknownSuite(name.clone()));
            }
            if self.suites[..k].contains(name) {
                return Err(Error::Config(format!("suite `{name}` selected twice")));
            }
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be >= 1".into()));
        }
        if let SpaceSource::File(path) = &self.space {
            if !path.exists() {
                return Err(Error::Config(format!("graph file {} does not exist", path.display())));
            }
        }
        self.energy.validate()?;
        self.flow.validate()?;
        if let Some(s) = &self.subordination {
            s.plan()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Violation,
    Error,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Violation => "violation",
            Status::Error => "error",
        }
    }
}

/// Floats that may be non-finite: serialized as numbers when finite and as
/// the strings `inf`, `-inf`, `nan` otherwise.
mod num {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(x) => Ok(x),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("not a number: {other}"))),
            },
        }
    }

    pub fn text(x: f64) -> &'static str {
        if x.is_nan() {
            "nan"
        } else if x > 0.0 {
            "inf"
        } else {
            "-inf"
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(text(*x))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<Repr>::deserialize(d)?.map(from_repr).transpose()
        }
    }
}

/// A value in a record payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Value(#[serde(with = "num")] pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub status: Status,
    #[serde(with = "num::opt")]
    pub lhs: Option<f64>,
    #[serde(with = "num::opt")]
    pub rhs: Option<f64>,
    #[serde(with = "num::opt")]
    pub deficit: Option<f64>,
    #[serde(with = "num::opt")]
    pub bound: Option<f64>,
    pub message: Option<String>,
    pub values: BTreeMap<String, Value>,
}

impl CheckRecord {
    fn new(check: &str, status: Status) -> Self {
        Self {
            check: check.into(),
            status,
            lhs: None,
            rhs: None,
            deficit: None,
            bound: None,
            message: None,
            values: BTreeMap::new(),
        }
    }

    fn error(check: &str, message: String) -> Self {
        let mut r = Self::new(check, Status::Error);
        r.message = Some(message);
        r
    }

    fn with(mut self, lhs: f64, rhs: f64, deficit: f64, bound: f64) -> Self {
        self.lhs = Some(lhs);
        self.rhs = Some(rhs);
        self.deficit = Some(deficit);
        self.bound = Some(bound);
        self
    }

    fn value(mut self, key: &str, x: f64) -> Self {
        self.values.insert(key.into(), Value(x));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario_id: String,
    pub tool_version: String,
    pub config: ScenarioConfig,
    pub records: Vec<CheckRecord>,
}

/// Deterministic random functions with grounded entries zeroed; an all-zero
/// draw is replaced by a fresh one.
pub fn generate_random_functions(
    space: &MeasureSpace,
    seed: u64,
    count: usize,
    distribution: Distribution,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.len();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut u: Vec<f64> = (0..n)
            .map(|_| match distribution {
                Distribution::Uniform => rng.random_range(-1.0..=1.0),
                Distribution::Gaussian => rng.sample(StandardNormal),
            })
            .collect();
        space.project(&mut u);
        if u.iter().any(|x| *x != 0.0) {
            out.push(u);
        }
        if space.free_nodes().next().is_none() {
            break;
        }
    }
    out
}

fn suite_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a of the suite name
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed
}

struct Context<'a> {
    config: &'a ScenarioConfig,
    graph: &'a WeightedGraph,
    plan: Option<SubordinationPlan>,
}

impl Context<'_> {
    fn functions(&self, name: &str, count: usize) -> Vec<Vec<f64>> {
        generate_random_functions(
            self.graph.space(),
            suite_seed(self.config.seed, name),
            count,
            self.config.distribution,
        )
    }

    fn plan(&self) -> Result<&SubordinationPlan> {
        self.plan
            .as_ref()
            .ok_or_else(|| Error::Config("this check needs a subordination section".into()))
    }

    fn hyper(&self) -> Result<HyperProfile> {
        self.config
            .profile
            .and_then(|p| p.hyper)
            .ok_or_else(|| Error::Config("this check needs profile.hyper".into()))
    }

    fn hom(&self) -> Result<HomConstants> {
        let e = &self.config.energy;
        hom_constants(&self.hyper()?, e.p, e.m_const)
    }

    fn p(&self) -> f64 {
        self.config.energy.p
    }

    fn norm2(&self, u: &[f64]) -> f64 {
        self.graph.space().lp_norm(u, 2.0).unwrap_or(f64::NAN)
    }
}

fn upper_check(name: &str, worst: f64, limit: f64, bound: f64) -> CheckRecord {
    let status = if worst <= limit { Status::Pass } else { Status::Violation };
    CheckRecord::new(name, status).with(worst, limit, limit - worst, bound)
}

fn run_check(ctx: &Context, name: &str) -> Result<CheckRecord> {
    let graph = ctx.graph;
    let space = graph.space();
    let params = &ctx.config.energy;
    let flow = &ctx.config.flow;
    let samples = ctx.config.samples;
    match name {
        "laplace_check" => {
            let plan = ctx.plan()?;
            let mut worst = 0.0_f64;
            for &t in &[0.5, 1.0, 2.0] {
                for &lambda in &[0.1, 1.0, 10.0] {
                    let got = laplace_transform(&plan.stable, t, lambda, &plan.density_quad)?;
                    let exact = (-t * lambda.powf(plan.stable.alpha)).exp();
                    worst = worst.max((got - exact).abs());
                }
            }
            Ok(upper_check(name, worst, 1e-6, 1e-6))
        }
        "negative_moment_check" => {
            let plan = ctx.plan()?;
            let a = plan.stable.alpha;
            let mut worst = 0.0_f64;
            for &beta in &[0.5, 1.0, 2.0] {
                let got = negative_moment(&plan.stable, 1.0, beta, &plan.density_quad)?;
                let exact = gamma(beta / a) / (a * gamma(beta));
                worst = worst.max((got - exact).abs() / exact);
            }
            Ok(upper_check(name, worst, 1e-6, 1e-6))
        }
        "nonexpansive" => {
            let us = ctx.functions(name, 2 * samples);
            let tau = flow.step();
            let ratios: Vec<f64> = us
                .par_chunks(2)
                .filter(|pair| pair.len() == 2)
                .map(|pair| {
                    let tu = prox_step(graph, &pair[0], params, tau, &flow.solver())?;
                    let tv = prox_step(graph, &pair[1], params, tau, &flow.solver())?;
                    let num: Vec<f64> = tu.iter().zip(&tv).map(|(a, b)| a - b).collect();
                    let den: Vec<f64> = pair[0].iter().zip(&pair[1]).map(|(a, b)| a - b).collect();
                    Ok(ctx.norm2(&num) / ctx.norm2(&den))
                })
                .collect::<Result<_>>()?;
            let worst = ratios.iter().cloned().fold(0.0, f64::max);
            Ok(upper_check(name, worst, 1.0 + 1e-10, 1e-10))
        }
        "contractive" => {
            let us = ctx.functions(name, samples);
            let ratios: Vec<f64> = us
                .par_iter()
                .map(|u| {
                    let traj = evolve(graph, u, params, flow, &[flow.t_final])?;
                    Ok(ctx.norm2(traj.states.last().unwrap()) / ctx.norm2(u))
                })
                .collect::<Result<_>>()?;
            let worst = ratios.iter().cloned().fold(0.0, f64::max);
            Ok(upper_check(name, worst, 1.0 + 1e-10, 1e-10))
        }
        "dissipation" => {
            let us = ctx.functions(name, samples);
            let times: Vec<f64> = (1..=flow.n_steps).map(|k| k as f64 * flow.step()).collect();
            let rises: Vec<f64> = us
                .par_iter()
                .map(|u| {
                    let traj = evolve(graph, u, params, flow, &times)?;
                    let e0 = traj.energies[0].max(f64::MIN_POSITIVE);
                    Ok(traj.energies.windows(2).map(|w| (w[1] - w[0]) / e0).fold(f64::MIN, f64::max))
                })
                .collect::<Result<_>>()?;
            let worst = rises.iter().cloned().fold(f64::MIN, f64::max);
            // roundoff allowance of the energy sums
            Ok(upper_check(name, worst, 16.0 * f64::EPSILON, 16.0 * f64::EPSILON))
        }
        "conservation" => {
            if space.has_grounding() {
                return Err(Error::Hypothesis("mass is conserved only on ungrounded graphs".into()));
            }
            let us = ctx.functions(name, samples);
            let drifts: Vec<f64> = us
                .par_iter()
                .map(|u| {
                    let traj = evolve(graph, u, params, flow, &[flow.t_final])?;
                    let total = |v: &[f64]| -> f64 { v.iter().zip(space.mass()).map(|(x, m)| x * m).sum() };
                    let scale: f64 = u.iter().zip(space.mass()).map(|(x, m)| x.abs() * m).sum();
                    Ok((total(traj.states.last().unwrap()) - total(u)).abs() / scale)
                })
                .collect::<Result<_>>()?;
            let worst = drifts.iter().cloned().fold(0.0, f64::max);
            Ok(upper_check(name, worst, 1e-10, 1e-10))
        }
        "scaling" => {
            let u = &ctx.functions(name, 1)[0];
            let mut ratios = Vec::new();
            let mut rec = CheckRecord::new(name, Status::Pass);
            for &lambda in &[0.5, 2.0] {
                let e1 = scaling_error(graph, u, params, flow, lambda, flow.n_steps)?;
                let e2 = scaling_error(graph, u, params, flow, lambda, 2 * flow.n_steps)?;
                let ratio = e1 / e2;
                rec = rec.value(&format!("ratio_lambda_{lambda}"), ratio);
                ratios.push(ratio);
            }
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let deficit = (lo - 1.5).min(3.0 - hi);
            rec.status = if deficit >= 0.0 { Status::Pass } else { Status::Violation };
            Ok(rec.with(lo, hi, deficit, 1.5))
        }
        "frac_monotonicity" => {
            let plan = ctx.plan()?;
            let us = ctx.functions(name, 2 * samples);
            let gaps: Vec<f64> = us
                .par_chunks(2)
                .filter(|pair| pair.len() == 2)
                .map(|pair| monotonicity_gap(graph, &pair[0], &pair[1], params, plan))
                .collect::<Result<_>>()?;
            let worst = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
            let status = if worst >= -1e-8 { Status::Pass } else { Status::Violation };
            Ok(CheckRecord::new(name, status).with(worst, 0.0, worst, 1e-8))
        }
        "frac_homogeneity" => {
            let plan = ctx.plan()?;
            let u = &ctx.functions(name, 1)[0];
            let alpha = plan.stable.alpha;
            let base = frac_generator(graph, u, params, plan)?.value;
            let base_norm = ctx.norm2(&base);
            let mut worst = 0.0_f64;
            for &lambda in &[0.5, 2.0, 5.0] {
                let scaled: Vec<f64> = u.iter().map(|x| lambda * x).collect();
                let got = frac_generator(graph, &scaled, params, plan)?.value;
                let factor = lambda.powf(1.0 + alpha * (ctx.p() - 2.0));
                let diff: Vec<f64> = got.iter().zip(&base).map(|(g, b)| g - factor * b).collect();
                worst = worst.max(ctx.norm2(&diff) / (factor * base_norm));
            }
            Ok(upper_check(name, worst, 1e-4, 1e-4))
        }
        "frac_norm_bound" => {
            let plan = ctx.plan()?;
            let us = ctx.functions(name, samples);
            let pairs: Vec<(f64, f64)> = us
                .par_iter()
                .map(|u| {
                    let g = frac_generator(graph, u, params, plan)?;
                    let nb = norm_bound_from(graph, u, &g, plan.stable.alpha);
                    Ok((nb.lhs, nb.rhs))
                })
                .collect::<Result<_>>()?;
            worst_ratio(name, &pairs, 1e-6)
        }
        "interp_bound" => {
            let us = ctx.functions(name, samples);
            let mut pairs = Vec::new();
            for u in &us {
                for &(q, r) in &[(2.0, 1.0), (3.0, 2.0), (4.0, 1.0)] {
                    pairs.push(interp_bound_check(space, u, q, r)?);
                }
            }
            worst_ratio(name, &pairs, 1e-12)
        }
        "gross_derivative" => {
            let r_dot0 = ctx.hyper()?.r_dot0;
            let us = ctx.functions(name, samples);
            let schedule = OrbitSchedule { substeps: 4, levels: 3, solver_tol: 1e-13, ..OrbitSchedule::default() };
            let errs: Vec<f64> = us
                .par_iter()
                .map(|u| {
                    let hu = grad_energy(graph, u, params)?;
                    let exact = gross_derivative(space, u, &hu, r_dot0)?;
                    let h = 1e-3 * ctx.norm2(u) / ctx.norm2(&hu).max(f64::MIN_POSITIVE);
                    let fd = gross_derivative_fd(graph, u, params, r_dot0, h, &schedule)?;
                    Ok((fd - exact).abs() / exact.abs())
                })
                .collect::<Result<_>>()?;
            let worst = errs.iter().cloned().fold(0.0, f64::max);
            Ok(upper_check(name, worst, 1e-3, 1e-3))
        }
        "logsob_deficit" | "nash_deficit" | "coercivity_gap" => {
            let p = ctx.p();
            let profile = ctx.config.profile.unwrap();
            let hom = match (name, profile.hyper, profile.supercontractive) {
                ("nash_deficit", None, Some(sp)) => HomConstants::new(sp.k1(p)?, 1.0)?,
                _ => ctx.hom()?,
            };
            let us = ctx.functions(name, samples);
            let mut worst: Option<(f64, f64, f64)> = None;
            for u in &us {
                let hu = grad_energy(graph, u, params)?;
                let pairing = space.inner(u, &hu)?;
                let d = match name {
                    "logsob_deficit" => logsob_deficit(space, u, pairing, &hom, p)?,
                    "nash_deficit" => {
                        nash_deficit(space, u, pairing, &hom, profile.nash_m, p, profile.nash_constant)?
                    }
                    _ => coercivity_gap(space, u, pairing, &hom, p)?,
                };
                if worst.is_none_or(|w| d < w.2) {
                    worst = Some((pairing, ctx.norm2(u), d));
                }
            }
            let (pairing, norm, d) = worst.unwrap();
            let status = if d >= 0.0 { Status::Pass } else { Status::Violation };
            Ok(CheckRecord::new(name, status)
                .with(pairing, norm, d, 0.0)
                .value("k1", hom.k1)
                .value("k2", hom.k2))
        }
        "constants" => {
            let p = ctx.p();
            let mut rec = CheckRecord::new(name, Status::Pass);
            if let Some(sp) = ctx.config.profile.and_then(|p| p.supercontractive) {
                if p > 2.0 {
                    rec = rec.value("k1_super", sp.k1(p)?);
                }
            }
            if let Ok(profile) = ctx.hyper() {
                let c = logsob_constants(&profile)?;
                rec = rec.value("c1", c.c1).value("c2", c.c2).value("c3", c.c3);
                if p > 2.0 && profile.alpha_dot0 < 0.0 {
                    let h = ctx.hom()?;
                    rec = rec.value("k1", h.k1).value("k2", h.k2);
                    if let Ok(d) = dimension(&profile, p) {
                        rec = rec.value("d", d);
                        if let Some(plan) = ctx.plan {
                            rec = rec.value("d_alpha", dim_alpha(d, p, plan.stable.alpha)?);
                        }
                    }
                }
            }
            Ok(rec)
        }
        "ultra_fit" => {
            let p = ctx.p();
            let profile = ctx.config.profile;
            let d = match profile.and_then(|pr| pr.dimension) {
                Some(d) => d,
                None => dimension(&ctx.hyper()?, p)?,
            };
            let target = ultra_exponents(d, p, 2.0, f64::INFINITY)?;
            let us = ctx.functions(name, samples);
            let times: Vec<f64> = (0..8).map(|k| flow.t_final * 10f64.powf(-2.0 + 2.0 * k as f64 / 7.0)).collect();
            let mut fit_samples = Vec::new();
            for u in &us {
                fit_samples.extend(decay_samples(graph, u, params, flow, &times, f64::INFINITY, 2.0)?);
            }
            let fit = ultra_fit(&fit_samples, Some(target.gamma_exp))?;
            let dev = (fit.alpha_hat - target.alpha_exp).abs() / target.alpha_exp;
            let rec = upper_check(name, dev, 0.3, 0.3)
                .value("alpha_hat", fit.alpha_hat)
                .value("alpha_target", target.alpha_exp)
                .value("gamma", target.gamma_exp)
                .value("c_hat", fit.c_hat)
                .value("residual", fit.residual);
            Ok(rec)
        }
        other => Err(Error::UnknownSuite(other.into())),
    }
}

fn worst_ratio(name: &str, pairs: &[(f64, f64)], slack: f64) -> Result<CheckRecord> {
    let mut worst = (0.0, 0.0, f64::INFINITY);
    for &(lhs, rhs) in pairs {
        let d = rhs * (1.0 + slack) - lhs;
        if d < worst.2 {
            worst = (lhs, rhs, d);
        }
    }
    let status = if worst.2 >= 0.0 { Status::Pass } else { Status::Violation };
    Ok(CheckRecord::new(name, status).with(worst.0, worst.1, worst.2, slack))
}

/// `|T_s(lambda u) - lambda T_{lambda^{p-2} s} u|_2 / |u|_2` with both flows
/// at the step `t_final / n_steps`.
pub fn scaling_error(
    graph: &WeightedGraph,
    u: &[f64],
    params: &EnergyParams,
    flow: &FlowSchedule,
    lambda: f64,
    n_steps: usize,
) -> Result<f64> {
    let s = flow.t_final;
    let tau = s / n_steps as f64;
    let scaled: Vec<f64> = u.iter().map(|x| lambda * x).collect();
    let left_schedule = FlowSchedule { n_steps, ..*flow };
    let left = evolve(graph, &scaled, params, &left_schedule, &[s])?;
    let s2 = lambda.powf(params.p - 2.0) * s;
    let k = (s2 / tau * (1.0 - 1e-12)).ceil().max(1.0);
    let right_schedule = FlowSchedule { t_final: k * tau, n_steps: k as usize, ..*flow };
    let right = evolve(graph, u, params, &right_schedule, &[s2])?;
    let diff: Vec<f64> = left
        .states
        .last()
        .unwrap()
        .iter()
        .zip(right.states.last().unwrap())
        .map(|(a, b)| a - lambda * b)
        .collect();
    let space = graph.space();
    Ok(space.lp_norm(&diff, 2.0)? / space.lp_norm(u, 2.0)?)
}

/// Samples `(t, |T_t u|_rho, |u|_q)` along one orbit.
pub fn decay_samples(
    graph: &WeightedGraph,
    u: &[f64],
    params: &EnergyParams,
    flow: &FlowSchedule,
    times: &[f64],
    rho: f64,
    q: f64,
) -> Result<Vec<UltraSample>> {
    let traj = evolve(graph, u, params, flow, times)?;
    let space = graph.space();
    let norm_q = space.lp_norm(u, q)?;
    traj.times
        .iter()
        .zip(&traj.states)
        .skip(1)
        .map(|(t, v)| Ok(UltraSample { t: *t, norm_rho: space.lp_norm(v, rho)?, norm_q }))
        .collect()
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".into()
    }
}

/// Runs every selected check; failures are captured per record.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Report> {
    config.validate()?;
    let graph = config.space.build()?;
    if let SpaceSource::Grid(g) = &config.space {
        if g.p_for_weights != config.energy.p {
            return Err(Error::Config(format!(
                "grid weights use p = {} but the energy has p = {}",
                g.p_for_weights, config.energy.p
            )));
        }
    }
    let plan = config.subordination.as_ref().map(|s| s.plan()).transpose()?;
    let ctx = Context { config, graph: &graph, plan };
    let mut selected: Vec<&str> = SUITES.iter().copied().filter(|s| config.suites.iter().any(|c| c == s)).collect();
    selected.sort_by_key(|s| SUITES.iter().position(|k| k == s));
    let records: Vec<CheckRecord> = selected
        .par_iter()
        .map(|name| match catch_unwind(AssertUnwindSafe(|| run_check(&ctx, name))) {
            Ok(Ok(rec)) => rec,
            Ok(Err(e)) => CheckRecord::error(name, e.to_string()),
            Err(p) => CheckRecord::error(name, panic_message(p)),
        })
        .collect();
    Ok(Report {
        scenario_id: config.id.clone(),
        tool_version: TOOL_VERSION.into(),
        config: config.clone(),
        records,
    })
}

/// JSON formatter writing every float with 17 significant digits.
struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn csv_num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        Some(v) => num::text(v).into(),
        None => String::new(),
    }
}

pub const CSV_HEADER: &str = "scenario_id,check,status,lhs,rhs,deficit,bound";

pub fn render_report(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in &report.records {
                let row = [
                    report.scenario_id.clone(),
                    r.check.clone(),
                    r.status.as_str().into(),
                    csv_num(r.lhs),
                    csv_num(r.rhs),
                    csv_num(r.deficit),
                    csv_num(r.bound),
                ];
                out.push_str(&row.join(","));
                out.push('\n');
            }
            Ok(out)
        }
    }
}

pub fn emit_report(report: &Report, format: Format, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_report(report, format)?)?;
    Ok(())
}

pub fn read_json_report(path: impl AsRef<Path>) -> Result<Report> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
