//! Event-driven simulation of the c.o.c. and c.o.s. dynamics, steady-state
//! estimation, and a truncated-chain oracle for tiny systems.

mod ctmc;
mod stats;

use std::time::Instant;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::analytic::{Discipline, LawSampler, LimitContext};
use crate::criticality::check_stability;
use crate::error::{Error, Result};
use crate::model::{default_trajectory, effective_rates, iter_bits, SystemModel, TrajectorySpec};
use crate::scalar::{fmt_q, q_to_f64, Q};

pub use ctmc::{ctmc_oracle, OracleResult, OracleState, ORACLE_STATE_CAP};
pub use stats::{
    batch_interval, erlang_cdf, ks_coefficient, ks_critical_one_sample, ks_critical_two_sample, ks_one_sample,
    ks_two_sample, t_975,
};

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub discipline: Discipline,
    /// Events simulated after warm-up.
    pub horizon_events: u64,
    /// Events discarded first; `None` means a quarter of the horizon, i.e.
    /// 20% of all simulated events.
    pub warmup_events: Option<u64>,
    /// Record the state after every this many departures.
    pub sample_every: u64,
    pub batches: usize,
    /// c.o.c. only: track every server's copy instead of the aggregated chain.
    pub literal_copies: bool,
    pub allow_unstable: bool,
}

impl SimConfig {
    pub fn new(discipline: Discipline, horizon_events: u64) -> Self {
        SimConfig {
            discipline,
            horizon_events,
            warmup_events: None,
            sample_every: 100,
            batches: 20,
            literal_copies: false,
            allow_unstable: false,
        }
    }

    pub fn warmup(&self) -> u64 {
        self.warmup_events.unwrap_or(self.horizon_events / 4)
    }
}

/// Steady-state estimates from one run.
///
/// For c.o.c. the counted jobs are all jobs present; for c.o.s. they are the
/// waiting jobs, with `system_means` also counting jobs in service.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SimEstimate {
    pub discipline: Discipline,
    pub means: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub total_mean: f64,
    pub total_half_width: f64,
    pub system_means: Vec<f64>,
    /// Per-type counts at the sampling epochs.
    pub samples: Vec<Vec<u32>>,
    pub batches: usize,
    pub events: u64,
    pub sim_time: f64,
    pub wall_clock_secs: f64,
}

impl SimEstimate {
    /// Samples multiplied by `scale`, e.g. `ε`.
    pub fn scaled_samples(&self, scale: f64) -> Vec<Vec<f64>> {
        self.samples.iter().map(|v| v.iter().map(|&c| c as f64 * scale).collect()).collect()
    }

    pub fn scaled_totals(&self, scale: f64) -> Vec<f64> {
        self.samples.iter().map(|v| v.iter().map(|&c| c as f64).sum::<f64>() * scale).collect()
    }
}

/// Float view of the model used inside the event loop.
struct Rates {
    arrival: f64,
    cum_p: Vec<f64>,
    mu: Vec<f64>,
    masks: Vec<u64>,
}

impl Rates {
    fn new(model: &SystemModel) -> Self {
        let mut acc = 0.0;
        let cum_p = model
            .types()
            .iter()
            .map(|t| {
                acc += q_to_f64(&t.p);
                acc
            })
            .collect();
        Rates {
            arrival: q_to_f64(&(model.n_q() * model.lambda())),
            cum_p,
            mu: model.mu().iter().map(q_to_f64).collect(),
            masks: model.types().iter().map(|t| t.mask).collect(),
        }
    }

    fn draw_type<R: Rng>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.cum_p[self.cum_p.len() - 1];
        self.cum_p.partition_point(|&c| c <= u).min(self.cum_p.len() - 1)
    }

    fn mu_of(&self, servers: u64) -> f64 {
        iter_bits(servers).map(|n| self.mu[n]).sum()
    }
}

/// Mutable chain state for either discipline.
struct Chain {
    /// Central list (c.o.c.) or waiting list (c.o.s.), oldest first.
    jobs: Vec<usize>,
    counts: Vec<u32>,
    present: u64,
    /// c.o.s.: type in service at each server.
    busy: Vec<Option<usize>>,
    in_service: Vec<u32>,
    /// c.o.s.: idle servers, longest idle first.
    idle: Vec<usize>,
}

impl Chain {
    fn new(m: usize, n: usize) -> Self {
        Chain {
            jobs: Vec::new(),
            counts: vec![0; m],
            present: 0,
            busy: vec![None; n],
            in_service: vec![0; m],
            idle: (0..n).collect(),
        }
    }

    fn push(&mut self, s: usize) {
        self.jobs.push(s);
        self.counts[s] += 1;
        self.present |= 1 << s;
    }

    fn remove(&mut self, i: usize) -> usize {
        let s = self.jobs.remove(i);
        self.counts[s] -= 1;
        if self.counts[s] == 0 {
            self.present &= !(1 << s);
        }
        s
    }
}

trait Dynamics {
    /// Total departure rate in the current state.
    fn departure_rate(&self, r: &Rates, c: &Chain) -> f64;
    fn arrive(&self, r: &Rates, c: &mut Chain, s: usize);
    /// Performs a departure chosen by `u ∈ [0, departure_rate)`.
    fn depart(&self, r: &Rates, c: &mut Chain, u: f64);
}

/// c.o.c. on the central queue: the i-th job leaves at rate `μ(c₁..c_i) − μ(c₁..c_{i−1})`.
struct Aggregated;

impl Dynamics for Aggregated {
    fn departure_rate(&self, r: &Rates, c: &Chain) -> f64 {
        let d = r.mu_of(iter_bits(c.present).fold(0, |m, s| m | r.masks[s]));
        debug_assert!((d - Copies.departure_rate(r, c)).abs() < 1e-9, "rate not conserved");
        d
    }

    fn arrive(&self, _: &Rates, c: &mut Chain, s: usize) {
        c.push(s);
    }

    fn depart(&self, r: &Rates, c: &mut Chain, mut u: f64) {
        let mut seen = 0u64;
        let mut last = None;
        for (i, &s) in c.jobs.iter().enumerate() {
            let fresh = r.masks[s] & !seen;
            if fresh == 0 {
                continue;
            }
            seen |= fresh;
            let inc = r.mu_of(fresh);
            last = Some(i);
            if u < inc {
                break;
            }
            u -= inc;
        }
        // `last` absorbs float round-off at the top of the range.
        c.remove(last.expect("departure from an empty system"));
    }
}

/// c.o.c. with one copy per compatible server; each server works on its
/// earliest compatible job.
struct Copies;

impl Copies {
    fn served_by(r: &Rates, c: &Chain, n: usize) -> Option<usize> {
        c.jobs.iter().position(|&s| r.masks[s] & (1 << n) != 0)
    }
}

impl Dynamics for Copies {
    fn departure_rate(&self, r: &Rates, c: &Chain) -> f64 {
        (0..r.mu.len()).filter(|&n| Self::served_by(r, c, n).is_some()).map(|n| r.mu[n]).sum()
    }

    fn arrive(&self, _: &Rates, c: &mut Chain, s: usize) {
        c.push(s);
    }

    fn depart(&self, r: &Rates, c: &mut Chain, mut u: f64) {
        let mut pick = None;
        for n in 0..r.mu.len() {
            if let Some(i) = Self::served_by(r, c, n) {
                pick = Some(i);
                if u < r.mu[n] {
                    break;
                }
                u -= r.mu[n];
            }
        }
        c.remove(pick.expect("departure from an empty system"));
    }
}

/// c.o.s. as FCFS-ALIS.
struct Fcfs;

impl Dynamics for Fcfs {
    fn departure_rate(&self, r: &Rates, c: &Chain) -> f64 {
        c.busy.iter().zip(&r.mu).filter(|(b, _)| b.is_some()).map(|(_, m)| m).sum()
    }

    fn arrive(&self, r: &Rates, c: &mut Chain, s: usize) {
        match c.idle.iter().position(|&n| r.masks[s] & (1 << n) != 0) {
            Some(k) => {
                let n = c.idle.remove(k);
                debug_assert!(c.jobs.iter().all(|&w| r.masks[w] & (1 << n) == 0), "idle server with a compatible waiting job");
                c.busy[n] = Some(s);
                c.in_service[s] += 1;
            }
            None => c.push(s),
        }
    }

    fn depart(&self, r: &Rates, c: &mut Chain, mut u: f64) {
        let mut server = None;
        for n in 0..r.mu.len() {
            if c.busy[n].is_some() {
                server = Some(n);
                if u < r.mu[n] {
                    break;
                }
                u -= r.mu[n];
            }
        }
        let n = server.expect("departure with no busy server");
        let done = c.busy[n].take().expect("busy");
        c.in_service[done] -= 1;
        match c.jobs.iter().position(|&s| r.masks[s] & (1 << n) != 0) {
            Some(i) => {
                let s = c.remove(i);
                c.busy[n] = Some(s);
                c.in_service[s] += 1;
            }
            None => c.idle.push(n),
        }
    }
}

/// Runs one replication and returns time-average estimates.
pub fn simulate(model: &SystemModel, cfg: &SimConfig, seed: u64) -> Result<SimEstimate> {
    if cfg.horizon_events == 0 {
        return Err(Error::Validation("horizon_events must be positive".into()));
    }
    if cfg.batches < 20 {
        return Err(Error::Validation("at least 20 batches are required".into()));
    }
    if cfg.sample_every == 0 {
        return Err(Error::Validation("sample_every must be positive".into()));
    }
    if cfg.literal_copies && cfg.discipline == Discipline::Cos {
        return Err(Error::Validation("literal copies apply to c.o.c. only".into()));
    }
    if !cfg.allow_unstable && !check_stability(model).stable {
        return Err(Error::Domain(format!(
            "model is unstable at lambda = {}; simulation needs an explicit override",
            fmt_q(model.lambda())
        )));
    }
    match (cfg.discipline, cfg.literal_copies) {
        (Discipline::Coc, false) => run(model, cfg, seed, &Aggregated),
        (Discipline::Coc, true) => run(model, cfg, seed, &Copies),
        (Discipline::Cos, _) => run(model, cfg, seed, &Fcfs),
    }
}

fn run<D: Dynamics>(model: &SystemModel, cfg: &SimConfig, seed: u64, dyn_: &D) -> Result<SimEstimate> {
    let start = Instant::now();
    let r = Rates::new(model);
    let (m, n) = (model.n_types(), model.n_servers());
    let mut c = Chain::new(m, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let warmup = cfg.warmup();
    let batch_len = (cfg.horizon_events / cfg.batches as u64).max(1);

    let mut batch_area = vec![0.0; m];
    let mut batch_total_area = 0.0;
    let mut batch_time = 0.0;
    let mut sys_area = vec![0.0; m];
    let mut batch_means: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.batches); m];
    let mut batch_totals = Vec::with_capacity(cfg.batches);
    let mut samples = Vec::new();
    let mut departures = 0u64;
    let mut sim_time = 0.0;

    for ev in 0..warmup + cfg.horizon_events {
        let d = dyn_.departure_rate(&r, &c);
        let total = r.arrival + d;
        let dt: f64 = Exp1.sample(&mut rng);
        let dt = dt / total;
        let measuring = ev >= warmup;
        if measuring {
            sim_time += dt;
            batch_time += dt;
            let mut tot = 0u32;
            for s in 0..m {
                batch_area[s] += c.counts[s] as f64 * dt;
                sys_area[s] += (c.counts[s] + c.in_service[s]) as f64 * dt;
                tot += c.counts[s];
            }
            batch_total_area += tot as f64 * dt;
        }
        let u = rng.random::<f64>() * total;
        if u < r.arrival {
            let s = r.draw_type(&mut rng);
            dyn_.arrive(&r, &mut c, s);
        } else {
            dyn_.depart(&r, &mut c, u - r.arrival);
            if measuring {
                departures += 1;
                if departures % cfg.sample_every == 0 {
                    samples.push(c.counts.clone());
                }
            }
        }
        if measuring {
            let k = ev - warmup + 1;
            if k % batch_len == 0 && batch_totals.len() < cfg.batches {
                for s in 0..m {
                    batch_means[s].push(batch_area[s] / batch_time);
                    batch_area[s] = 0.0;
                }
                batch_totals.push(batch_total_area / batch_time);
                batch_total_area = 0.0;
                batch_time = 0.0;
            }
        }
    }

    let (mut means, mut half_widths) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for b in &batch_means {
        let (mean, hw) = batch_interval(b);
        means.push(mean);
        half_widths.push(hw);
    }
    let (total_mean, total_half_width) = batch_interval(&batch_totals);
    Ok(SimEstimate {
        discipline: cfg.discipline,
        means,
        half_widths,
        total_mean,
        total_half_width,
        system_means: sys_area.iter().map(|a| a / sim_time).collect(),
        samples,
        batches: batch_totals.len(),
        events: cfg.horizon_events,
        sim_time,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Independent replications in parallel, replica `i` seeded with `seed + i`.
pub fn simulate_replications(model: &SystemModel, cfg: &SimConfig, replications: usize, seed: u64) -> Result<Vec<SimEstimate>> {
    if replications == 0 {
        return Err(Error::Validation("at least one replication is required".into()));
    }
    (0..replications as u64).into_par_iter().map(|i| simulate(model, cfg, seed.wrapping_add(i))).collect()
}

/// Settings for [`scaled_law_check`].
#[derive(Clone, Debug)]
pub struct LawCheckConfig {
    pub sim: SimConfig,
    pub replications: usize,
    /// Draws from the limit law per ε; `None` matches the simulated sample size.
    pub law_samples: Option<usize>,
    pub alpha: f64,
    pub seed: u64,
}

/// KS comparison of `ε·Q` against the limit law at one ε.
#[derive(Clone, Debug, serde::Serialize)]
pub struct KsPoint {
    pub epsilon: f64,
    pub sim_samples: usize,
    pub law_samples: usize,
    pub ks_per_type: Vec<f64>,
    pub ks_total: f64,
    pub critical: f64,
    /// Time averages of `ε·Q_S`.
    pub scaled_means: Vec<f64>,
    pub scaled_samples: Vec<Vec<f64>>,
}

/// The model moved along its trajectory (or the default one) to `ε`.
pub fn model_at_epsilon(model: &SystemModel, epsilon: &Q) -> Result<SystemModel> {
    let ctx = LimitContext::new(model)?;
    let traj = match model.trajectory() {
        Some(t) => TrajectorySpec { gamma: t.gamma.clone(), epsilon: epsilon.clone() },
        None => default_trajectory(model, &ctx.report.lambda_star, epsilon.clone()),
    };
    model.with_rates(&effective_rates(model, &ctx.report.lambda_star, &traj)?)
}

/// Simulates the family at each `ε` and measures two-sample KS distances of the
/// scaled marginals and total against draws from `law`.
pub fn scaled_law_check(model: &SystemModel, epsilons: &[Q], law: &LawSampler, cfg: &LawCheckConfig) -> Result<Vec<KsPoint>> {
    let mut out = Vec::with_capacity(epsilons.len());
    for (k, eps) in epsilons.iter().enumerate() {
        let at = model_at_epsilon(model, eps)?;
        let e = q_to_f64(eps);
        let runs = simulate_replications(&at, &cfg.sim, cfg.replications, cfg.seed.wrapping_add(1000 * k as u64))?;
        let sim: Vec<Vec<f64>> = runs.iter().flat_map(|r| r.scaled_samples(e)).collect();
        if sim.is_empty() {
            return Err(Error::Validation("no samples recorded; lengthen the horizon".into()));
        }
        let n_law = cfg.law_samples.unwrap_or(sim.len());
        let draws = law.sample_n(n_law, cfg.seed.wrapping_add(1000 * k as u64 + 999));
        let m = model.n_types();
        let ks_per_type = (0..m)
            .map(|s| {
                let a: Vec<f64> = sim.iter().map(|v| v[s]).collect();
                let b: Vec<f64> = draws.iter().map(|v| v[s]).collect();
                ks_two_sample(&a, &b)
            })
            .collect();
        let tot_a: Vec<f64> = sim.iter().map(|v| v.iter().sum()).collect();
        let tot_b: Vec<f64> = draws.iter().map(|v| v.iter().sum()).collect();
        let scaled_means = (0..m).map(|s| e * runs.iter().map(|r| r.means[s]).sum::<f64>() / runs.len() as f64).collect();
        out.push(KsPoint {
            epsilon: e,
            sim_samples: sim.len(),
            law_samples: n_law,
            ks_per_type,
            ks_total: ks_two_sample(&tot_a, &tot_b),
            critical: ks_critical_two_sample(sim.len(), n_law, cfg.alpha),
            scaled_means,
            scaled_samples: sim,
        });
    }
    Ok(out)
}
