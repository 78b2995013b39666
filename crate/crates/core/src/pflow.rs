//! Discrete p-Laplacian energy and its gradient flow by minimizing movements.
//!
//! Each implicit-Euler step minimizes
//! `Phi(v) = |v - u|^2 / (2 tau) + E_p(v)` over functions vanishing on the
//! grounded nodes. The unknown of each step is the change `d = u - v`, and
//! orbits accumulate `u_0 - T_t u_0` from these changes, so that very small
//! steps keep full relative precision.

use std::io::Write;

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::{CholeskyError, CscCholesky};
use nalgebra_sparse::pattern::SparsityPattern;
use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::WeightedGraph;

/// Exponent `p` of the energy and subhomogeneity constant `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub p: f64,
    #[serde(default = "default_m", rename = "M", alias = "m")]
    pub m_const: f64,
}

fn default_m() -> f64 {
    1.0
}

impl EnergyParams {
    pub fn new(p: f64) -> Result<Self> {
        let params = Self { p, m_const: 1.0 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::InvalidParameter(format!("energy exponent p = {} must be >= 2", self.p)));
        }
        if !(self.m_const > 0.0) {
            return Err(Error::InvalidParameter(format!("subhomogeneity constant M = {} must be positive", self.m_const)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSchedule {
    pub t_final: f64,
    pub n_steps: usize,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    20_000
}

impl FlowSchedule {
    pub fn new(t_final: f64, n_steps: usize) -> Self {
        Self { t_final, n_steps, solver_tol: default_tol(), max_iter: default_max_iter() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_final = {} must be positive", self.t_final)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
        }
        self.solver().validate()
    }

    pub fn step(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.solver_tol, max_iter: self.max_iter }
    }
}

/// Stopping rule of the inner minimization: `|grad Phi|_2 <= tol * max(1, |u|_2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter() }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter(format!(
                "solver tolerance {} and max_iter {} must be positive",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

#[inline]
fn abs_pow(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 2.0 {
        a * a
    } else if p == 3.0 {
        a * a * a
    } else if p == 4.0 {
        let s = a * a;
        s * s
    } else {
        a.powf(p)
    }
}

/// `|x|^(p-2) x`
#[inline]
fn signed_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x
    } else if p == 3.0 {
        x.abs() * x
    } else if p == 4.0 {
        x * x * x
    } else {
        x.abs().powf(p - 2.0) * x
    }
}

/// `E_p(u) = sum_e w_e |u_i - u_j|^p`.
pub fn energy(graph: &WeightedGraph, u: &[f64], params: &EnergyParams) -> Result<f64> {
    graph.space().check_shape(u)?;
    Ok(energy_unchecked(graph, u, params.p))
}

fn energy_unchecked(graph: &WeightedGraph, u: &[f64], p: f64) -> f64 {
    graph
        .edges()
        .iter()
        .map(|e| e.weight * abs_pow(u[e.i] - u[e.j], p))
        .sum()
}

/// Principal section `A u = M^{-1} grad E_p(u)`, zero on grounded nodes.
pub fn grad_energy(graph: &WeightedGraph, u: &[f64], params: &EnergyParams) -> Result<Vec<f64>> {
    graph.space().check_shape(u)?;
    let mut out = vec![0.0; u.len()];
    energy_and_grad(graph, u, params.p, &mut out);
    Ok(out)
}

/// Writes `A u` into `out` and returns `E_p(u)`.
fn energy_and_grad(graph: &WeightedGraph, u: &[f64], p: f64, out: &mut [f64]) -> f64 {
    out.iter_mut().for_each(|x| *x = 0.0);
    let mut e_total = 0.0;
    for e in graph.edges() {
        let d = u[e.i] - u[e.j];
        let flux = p * e.weight * signed_pow(d, p);
        e_total += e.weight * abs_pow(d, p);
        out[e.i] += flux;
        out[e.j] -= flux;
    }
    let space = graph.space();
    for (i, (x, m)) in out.iter_mut().zip(space.mass()).enumerate() {
        *x = if space.is_grounded(i) { 0.0 } else { *x / m };
    }
    e_total
}

/// Solver diagnostics for one minimizing-movement step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Mass-weighted bound on the rounding error of `A v`: absolute fluxes plus
/// the Hessian applied to `|v|`, since each difference `v_i - v_j` carries an
/// error of order `eps (|v_i| + |v_j|)`.
fn gradient_roundoff_scale(graph: &WeightedGraph, v: &[f64], p: f64) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for e in graph.edges() {
        let a = (v[e.i] - v[e.j]).abs();
        let f = p * e.weight * abs_pow(a, p - 1.0)
            + p * (p - 1.0) * e.weight * abs_pow(a, p - 2.0) * (v[e.i].abs() + v[e.j].abs());
        out[e.i] += f;
        out[e.j] += f;
    }
    for (x, m) in out.iter_mut().zip(graph.space().mass()) {
        *x /= m;
    }
    graph.space().project(&mut out);
    out
}

/// Slots of one edge in the Hessian value array.
#[derive(Clone, Copy)]
struct EdgeSlots {
    ii: Option<usize>,
    jj: Option<usize>,
    ij: Option<usize>,
    ji: Option<usize>,
}

/// Damped Newton solver for the minimizing-movement step, with the sparse
/// Hessian pattern and its Cholesky factor kept across steps.
pub(crate) struct StepSolver<'a> {
    graph: &'a WeightedGraph,
    p: f64,
    /// Free node of each unknown.
    free: Vec<usize>,
    pattern: SparsityPattern,
    diag: Vec<usize>,
    slots: Vec<EdgeSlots>,
    chol: Option<CscCholesky<f64>>,
}

impl<'a> StepSolver<'a> {
    pub(crate) fn new(graph: &'a WeightedGraph, p: f64) -> Self {
        let space = graph.space();
        let n = space.len();
        let free: Vec<usize> = space.free_nodes().collect();
        let mut index = vec![usize::MAX; n];
        for (k, &i) in free.iter().enumerate() {
            index[i] = k;
        }
        let nf = free.len();
        let mut cols: Vec<Vec<usize>> = (0..nf).map(|k| vec![k]).collect();
        for e in graph.edges() {
            let (a, b) = (index[e.i], index[e.j]);
            if a != usize::MAX && b != usize::MAX {
                cols[a].push(b);
                cols[b].push(a);
            }
        }
        let mut offsets = Vec::with_capacity(nf + 1);
        let mut rows = Vec::new();
        offsets.push(0);
        for c in &mut cols {
            c.sort_unstable();
            c.dedup();
            rows.extend_from_slice(c);
            offsets.push(rows.len());
        }
        let slot = |col: usize, row: usize| -> usize {
            let lo = offsets[col];
            lo + rows[lo..offsets[col + 1]].binary_search(&row).expect("entry in pattern")
        };
        let diag: Vec<usize> = (0..nf).map(|k| slot(k, k)).collect();
        let slots = graph
            .edges()
            .iter()
            .map(|e| {
                let (a, b) = (index[e.i], index[e.j]);
                let fa = a != usize::MAX;
                let fb = b != usize::MAX;
                EdgeSlots {
                    ii: fa.then(|| diag[a]),
                    jj: fb.then(|| diag[b]),
                    ij: (fa && fb).then(|| slot(b, a)),
                    ji: (fa && fb).then(|| slot(a, b)),
                }
            })
            .collect();
        let pattern = SparsityPattern::try_from_offsets_and_indices(nf, nf, offsets, rows)
            .expect("valid Hessian pattern");
        Self { graph, p, free, pattern, diag, slots, chol: None }
    }

    /// Hessian of `Phi` over the free nodes at `v`, as CSC values.
    fn hessian_values(&self, v: &[f64], tau: f64) -> Vec<f64> {
        let mut vals = vec![0.0; self.pattern.nnz()];
        let mass = self.graph.space().mass();
        for (k, &i) in self.free.iter().enumerate() {
            vals[self.diag[k]] = mass[i] / tau;
        }
        let c = self.p * (self.p - 1.0);
        for (e, s) in self.graph.edges().iter().zip(&self.slots) {
            let h = c * e.weight * abs_pow(v[e.i] - v[e.j], self.p - 2.0);
            for x in [s.ii, s.jj].into_iter().flatten() {
                vals[x] += h;
            }
            for x in [s.ij, s.ji].into_iter().flatten() {
                vals[x] -= h;
            }
        }
        vals
    }

    fn factor(&mut self, vals: &[f64]) -> std::result::Result<(), CholeskyError> {
        match &mut self.chol {
            Some(c) => c.refactor(vals),
            None => {
                let m = CscMatrix::try_from_pattern_and_values(self.pattern.clone(), vals.to_vec())
                    .expect("values match pattern");
                self.chol = Some(CscCholesky::factor(&m)?);
                Ok(())
            }
        }
    }

    /// One implicit-Euler step from `v_prev`, solved for the change `d` so
    /// that `v = v_prev - d` minimizes `|v - v_prev|^2/(2 tau) + E_p(v)`.
    ///
    /// Newton directions from the exact Hessian with Armijo backtracking on
    /// `Phi`. Stops once the mass-metric gradient satisfies
    /// `|grad Phi|_2 <= tol * max(1, scale)`, or once it reaches the
    /// floating-point floor of its own evaluation.
    pub(crate) fn solve(
        &mut self,
        v_prev: &[f64],
        tau: f64,
        guess: Option<&[f64]>,
        scale: f64,
        opts: &SolverOptions,
    ) -> Result<(Vec<f64>, StepStats)> {
        let graph = self.graph;
        let p = self.p;
        let space = graph.space();
        let mass = space.mass();
        let n = v_prev.len();
        let floor = 64.0 * f64::EPSILON * space.norm2(&gradient_roundoff_scale(graph, v_prev, p));
        let threshold = (opts.tol * scale.max(1.0)).max(floor);

        let mut v = vec![0.0; n];
        let mut av = vec![0.0; n];
        let eval = |d: &[f64], grad: &mut [f64], v: &mut [f64], av: &mut [f64]| -> f64 {
            for k in 0..n {
                v[k] = v_prev[k] - d[k];
            }
            let e = energy_and_grad(graph, v, p, av);
            let mut quad = 0.0;
            for k in 0..n {
                quad += d[k] * d[k] * mass[k];
                grad[k] = d[k] / tau - av[k];
            }
            space.project(grad);
            quad / (2.0 * tau) + e
        };

        let mut d = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut phi = eval(&d, &mut g, &mut v, &mut av);
        if let Some(start) = guess {
            let mut g2 = vec![0.0; n];
            let phi2 = eval(start, &mut g2, &mut v, &mut av);
            if phi2 < phi {
                d.copy_from_slice(start);
                g = g2;
                phi = phi2;
            }
        }
        let mut gnorm = space.norm2(&g);
        if gnorm <= threshold {
            return Ok((d, StepStats { iterations: 0, residual: gnorm }));
        }

        let nf = self.free.len();
        let mut rhs = DMatrix::<f64>::zeros(nf, 1);
        let mut d_new = vec![0.0; n];
        let mut g_new = vec![0.0; n];
        for iter in 1..=opts.max_iter {
            for k in 0..n {
                v[k] = v_prev[k] - d[k];
            }
            let vals = self.hessian_values(&v, tau);
            if self.factor(&vals).is_err() {
                return Err(Error::IterationLimit { iterations: iter, residual: gnorm, last_iterate: d });
            }
            // Euclidean gradient M g on the free nodes
            for (k, &i) in self.free.iter().enumerate() {
                rhs[(k, 0)] = mass[i] * g[i];
            }
            let step = self.chol.as_ref().expect("factored").solve(&rhs);
            let slope: f64 = (0..nf).map(|k| step[(k, 0)] * rhs[(k, 0)]).sum();
            let slack = 16.0 * f64::EPSILON * phi.abs();
            let mut a = 1.0;
            let phi_new = loop {
                d_new.copy_from_slice(&d);
                for (k, &i) in self.free.iter().enumerate() {
                    d_new[i] -= a * step[(k, 0)];
                }
                let val = eval(&d_new, &mut g_new, &mut v, &mut av);
                if val <= phi - 1e-4 * a * slope + slack {
                    break val;
                }
                a *= 0.5;
                if a < 1e-12 {
                    return Err(Error::IterationLimit { iterations: iter, residual: gnorm, last_iterate: d });
                }
            };
            std::mem::swap(&mut d, &mut d_new);
            std::mem::swap(&mut g, &mut g_new);
            phi = phi_new;
            gnorm = space.norm2(&g);
            if gnorm <= threshold {
                return Ok((d, StepStats { iterations: iter, residual: gnorm }));
            }
        }
        Err(Error::IterationLimit { iterations: opts.max_iter, residual: gnorm, last_iterate: d })
    }
}

/// One backward-Euler step `v = argmin |v-u|^2/(2 tau) + E_p(v)`.
pub fn prox_step(
    graph: &WeightedGraph,
    u: &[f64],
    params: &EnergyParams,
    tau: f64,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    prox_step_with_stats(graph, u, params, tau, opts).map(|(v, _)| v)
}

pub fn prox_step_with_stats(
    graph: &WeightedGraph,
    u: &[f64],
    params: &EnergyParams,
    tau: f64,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, StepStats)> {
    let space = graph.space();
    space.check_shape(u)?;
    params.validate()?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("step size {tau} must be positive")));
    }
    let mut base = u.to_vec();
    space.project(&mut base);
    let scale = space.norm2(&base);
    let to_state = |d: Vec<f64>| base.iter().zip(&d).map(|(b, x)| b - x).collect::<Vec<_>>();
    match StepSolver::new(graph, params.p).solve(&base, tau, None, scale, opts) {
        Ok((d, stats)) => Ok((to_state(d), stats)),
        Err(Error::IterationLimit { iterations, residual, last_iterate }) => Err(Error::IterationLimit {
            iterations,
            residual,
            last_iterate: to_state(last_iterate),
        }),
        Err(e) => Err(e),
    }
}

/// Sampled orbit `t -> T_t u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
}

impl Trajectory {
    /// CSV with columns `time,node_index,value,energy`, one row per node and time.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time,node_index,value,energy")?;
        for ((t, state), e) in self.times.iter().zip(&self.states).zip(&self.energies) {
            for (i, x) in state.iter().enumerate() {
                writeln!(out, "{t:.16e},{i},{x:.16e},{e:.16e}")?;
            }
        }
        Ok(())
    }
}

/// Marches increments `w(t) = u - T_t u` through a sorted list of times.
///
/// `substeps(t0, t1)` gives the number of equal implicit-Euler substeps used
/// on each interval. Returns one increment per requested time. Increments are
/// accumulated from the per-step changes, so they keep full relative
/// precision when `t` is tiny.
pub(crate) fn march_increments(
    graph: &WeightedGraph,
    base: &[f64],
    p: f64,
    times: &[f64],
    opts: &SolverOptions,
    mut substeps: impl FnMut(f64, f64) -> usize,
) -> Result<Vec<Vec<f64>>> {
    let n = base.len();
    let scale = graph.space().norm2(base);
    let mut out = Vec::with_capacity(times.len());
    let mut w = vec![0.0; n];
    let mut v = base.to_vec();
    let mut last: Option<(Vec<f64>, f64)> = None;
    let mut guess = vec![0.0; n];
    let mut solver = StepSolver::new(graph, p);
    let mut t = 0.0;
    for &target in times {
        if target < t {
            return Err(Error::InvalidParameter("orbit times must be sorted ascending".into()));
        }
        if target > t {
            let k = substeps(t, target).max(1);
            let tau = (target - t) / k as f64;
            for _ in 0..k {
                let g = last.as_ref().map(|(d_old, tau_old)| {
                    let r = tau / tau_old;
                    for i in 0..n {
                        guess[i] = r * d_old[i];
                    }
                    guess.as_slice()
                });
                let (d, _) = solver.solve(&v, tau, g, scale, opts)?;
                for i in 0..n {
                    w[i] += d[i];
                    v[i] = base[i] - w[i];
                }
                last = Some((d, tau));
            }
            t = target;
        }
        out.push(w.clone());
    }
    Ok(out)
}

/// Uniform implicit-Euler composition with step `t_final / n_steps`, stepping
/// exactly onto every requested sample time.
pub fn evolve(
    graph: &WeightedGraph,
    u0: &[f64],
    params: &EnergyParams,
    schedule: &FlowSchedule,
    sample_times: &[f64],
) -> Result<Trajectory> {
    let space = graph.space();
    space.check_shape(u0)?;
    params.validate()?;
    schedule.validate()?;
    let tf = schedule.t_final;
    if let Some(bad) = sample_times.iter().find(|t| !(**t >= 0.0 && **t <= tf * (1.0 + 1e-12))) {
        return Err(Error::InvalidParameter(format!("sample time {bad} outside [0, {tf}]")));
    }
    let mut samples: Vec<f64> = sample_times.iter().map(|t| t.min(tf)).collect();
    samples.push(0.0);
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples.dedup();

    let tau = schedule.step();
    let snap = 1e-12 * tf;
    // event list: grid points and samples, with flags telling which are samples
    let mut events: Vec<(f64, bool)> = (1..=schedule.n_steps).map(|k| (k as f64 * tau, false)).collect();
    for &s in &samples {
        if s == 0.0 {
            continue;
        }
        let k = (s / tau).round();
        if (s - k * tau).abs() <= snap && k >= 1.0 {
            events[k as usize - 1].1 = true;
            events[k as usize - 1].0 = s;
        } else {
            events.push((s, true));
        }
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let last_sample = *samples.last().unwrap();
    events.retain(|(t, _)| *t <= last_sample + snap);

    let mut base = u0.to_vec();
    space.project(&mut base);
    let times: Vec<f64> = events.iter().map(|(t, _)| *t).collect();
    let increments = march_increments(graph, &base, params.p, &times, &schedule.solver(), |_, _| 1)?;

    let mut traj = Trajectory { times: vec![0.0], states: vec![base.clone()], energies: vec![] };
    for ((t, is_sample), w) in events.iter().zip(increments) {
        if *is_sample {
            traj.times.push(*t);
            traj.states.push(base.iter().zip(&w).map(|(b, x)| b - x).collect());
        }
    }
    traj.energies = traj.states.iter().map(|s| energy_unchecked(graph, s, params.p)).collect();
    Ok(traj)
}
