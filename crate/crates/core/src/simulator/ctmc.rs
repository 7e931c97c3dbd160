//! Exact stationary law of the truncated chain, solved from its generator and
//! compared with the product form.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::analytic::Discipline;
use crate::criticality::check_stability;
use crate::error::{Error, Result};
use crate::model::SystemModel;
use crate::scalar::q_to_f64;

/// Largest state space the oracle will build.
pub const ORACLE_STATE_CAP: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OracleState {
    /// Central queue, oldest job first.
    Coc(Vec<usize>),
    /// Waiting jobs oldest first, and idle servers longest idle first.
    Cos { waiting: Vec<usize>, idle: Vec<usize> },
}

impl OracleState {
    pub fn jobs(&self) -> &[usize] {
        match self {
            OracleState::Coc(c) => c,
            OracleState::Cos { waiting, .. } => waiting,
        }
    }

    /// Ordered vector of first occurrences of each type in the queue.
    pub fn first_occurrences(&self) -> Vec<usize> {
        let mut seen = 0u64;
        let mut out = Vec::new();
        for &s in self.jobs() {
            if seen & (1 << s) == 0 {
                seen |= 1 << s;
                out.push(s);
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub discipline: Discipline,
    pub truncation: usize,
    pub states: Vec<OracleState>,
    /// Solution of `πG = 0`.
    pub generator: Vec<f64>,
    /// Normalized product form on the same states.
    pub product_form: Vec<f64>,
    pub tv_distance: f64,
    /// `‖πG‖₁` of the generator solution.
    pub residual: f64,
    pub sweeps: usize,
}

impl OracleResult {
    /// Generator mass aggregated by first-occurrence vector.
    pub fn config_marginals(&self) -> BTreeMap<Vec<usize>, f64> {
        let mut out = BTreeMap::new();
        for (st, p) in self.states.iter().zip(&self.generator) {
            *out.entry(st.first_occurrences()).or_insert(0.0) += p;
        }
        out
    }

    /// Generator mass by queue length.
    pub fn length_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.truncation + 1];
        for (st, p) in self.states.iter().zip(&self.generator) {
            out[st.jobs().len()] += p;
        }
        out
    }
}

struct Params {
    arrival: Vec<f64>,
    mu: Vec<f64>,
    masks: Vec<u64>,
}

impl Params {
    fn mu_of(&self, servers: u64) -> f64 {
        crate::model::iter_bits(servers).map(|n| self.mu[n]).sum()
    }

    fn servers_of(&self, jobs: &[usize]) -> u64 {
        jobs.iter().fold(0, |m, &s| m | self.masks[s])
    }

    /// Arrival rate of types compatible with at least one server in the mask.
    fn arrival_touching(&self, servers: u64) -> f64 {
        self.masks.iter().zip(&self.arrival).filter(|(m, _)| *m & servers != 0).map(|(_, a)| a).sum()
    }

    fn successors(&self, st: &OracleState, cap: usize, out: &mut Vec<(OracleState, f64)>) {
        out.clear();
        match st {
            OracleState::Coc(c) => {
                if c.len() < cap {
                    for (s, &a) in self.arrival.iter().enumerate() {
                        let mut next = c.clone();
                        next.push(s);
                        out.push((OracleState::Coc(next), a));
                    }
                }
                let mut seen = 0u64;
                for i in 0..c.len() {
                    let fresh = self.masks[c[i]] & !seen;
                    if fresh != 0 {
                        seen |= fresh;
                        let mut next = c.clone();
                        next.remove(i);
                        out.push((OracleState::Coc(next), self.mu_of(fresh)));
                    }
                }
            }
            OracleState::Cos { waiting, idle } => {
                for (s, &a) in self.arrival.iter().enumerate() {
                    if let Some(k) = idle.iter().position(|&n| self.masks[s] & (1 << n) != 0) {
                        let mut i2 = idle.clone();
                        i2.remove(k);
                        out.push((OracleState::Cos { waiting: waiting.clone(), idle: i2 }, a));
                    } else if waiting.len() < cap {
                        let mut w2 = waiting.clone();
                        w2.push(s);
                        out.push((OracleState::Cos { waiting: w2, idle: idle.clone() }, a));
                    }
                }
                for n in 0..self.mu.len() {
                    if idle.contains(&n) {
                        continue;
                    }
                    let next = match waiting.iter().position(|&s| self.masks[s] & (1 << n) != 0) {
                        Some(i) => {
                            let mut w2 = waiting.clone();
                            w2.remove(i);
                            OracleState::Cos { waiting: w2, idle: idle.clone() }
                        }
                        None => {
                            let mut i2 = idle.clone();
                            i2.push(n);
                            OracleState::Cos { waiting: waiting.clone(), idle: i2 }
                        }
                    };
                    out.push((next, self.mu[n]));
                }
            }
        }
    }

    /// Unnormalized product-form weight.
    fn weight(&self, st: &OracleState) -> f64 {
        let mut w = 1.0;
        let jobs = st.jobs();
        for i in 0..jobs.len() {
            w *= self.arrival[jobs[i]] / self.mu_of(self.servers_of(&jobs[..=i]));
        }
        if let OracleState::Cos { idle, .. } = st {
            w *= self.idle_factor(idle);
        }
        w
    }

    /// `∏_l μ_{u_l}/λ_𝓒(u_1..u_l)` with `u_1` the longest idle server.
    fn idle_factor(&self, idle: &[usize]) -> f64 {
        let mut w = 1.0;
        let mut set = 0u64;
        for &n in idle.iter() {
            set |= 1 << n;
            w *= self.mu[n] / self.arrival_touching(set);
        }
        w
    }
}

fn size_estimate(model: &SystemModel, discipline: Discipline, cap: usize) -> f64 {
    let m = model.n_types() as f64;
    let lists: f64 = (0..=cap).map(|l| m.powi(l as i32)).sum();
    match discipline {
        Discipline::Coc => lists,
        Discipline::Cos => {
            let n = model.n_servers();
            let mut arrangements = 0.0;
            let mut falling = 1.0;
            for k in 0..=n {
                arrangements += falling;
                falling *= (n - k) as f64;
            }
            lists * arrangements
        }
    }
}

/// Stationary law of the chain with queue length capped at `truncation_len`,
/// where arrivals that would exceed the cap are rejected.
pub fn ctmc_oracle(model: &SystemModel, discipline: Discipline, truncation_len: usize) -> Result<OracleResult> {
    if !check_stability(model).stable {
        return Err(Error::Domain("the product form needs a stable model".into()));
    }
    if discipline == Discipline::Cos {
        if let Some(n) = (0..model.n_servers()).find(|&n| model.types_touching(1 << n) == 0) {
            return Err(Error::Domain(format!("server {} has no compatible job type and never leaves the idle list", n + 1)));
        }
    }
    let est = size_estimate(model, discipline, truncation_len);
    if est > ORACLE_STATE_CAP as f64 {
        return Err(Error::Cap(format!(
            "truncated chain has up to {est:.3e} states, above the cap of {ORACLE_STATE_CAP}"
        )));
    }
    let p = Params {
        arrival: (0..model.n_types()).map(|s| q_to_f64(&model.arrival_rate(s))).collect(),
        mu: model.mu().iter().map(q_to_f64).collect(),
        masks: model.types().iter().map(|t| t.mask).collect(),
    };
    let start = match discipline {
        Discipline::Coc => OracleState::Coc(Vec::new()),
        Discipline::Cos => OracleState::Cos { waiting: Vec::new(), idle: (0..model.n_servers()).collect() },
    };

    let mut index: HashMap<OracleState, usize> = HashMap::new();
    let mut states = vec![start.clone()];
    index.insert(start, 0);
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    let mut buf = Vec::new();
    while let Some(i) = queue.pop_front() {
        p.successors(&states[i], truncation_len, &mut buf);
        for (next, rate) in buf.drain(..) {
            let j = match index.get(&next) {
                Some(&j) => j,
                None => {
                    let j = states.len();
                    index.insert(next.clone(), j);
                    states.push(next);
                    queue.push_back(j);
                    j
                }
            };
            if j != i {
                edges.push((i, j, rate));
            }
        }
    }

    let n = states.len();
    let mut out_rate = vec![0.0; n];
    let mut in_start = vec![0usize; n + 1];
    for &(i, j, r) in &edges {
        out_rate[i] += r;
        in_start[j + 1] += 1;
    }
    for k in 0..n {
        in_start[k + 1] += in_start[k];
    }
    let mut fill = in_start.clone();
    let mut in_edges = vec![(0usize, 0.0f64); edges.len()];
    for &(i, j, r) in &edges {
        in_edges[fill[j]] = (i, r);
        fill[j] += 1;
    }

    // Gauss–Seidel on the balance equations, seeded with the uniform law.
    let mut pi = vec![1.0 / n as f64; n];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut change = 0.0f64;
        for j in 0..n {
            let inflow: f64 = in_edges[in_start[j]..in_start[j + 1]].iter().map(|&(i, r)| pi[i] * r).sum();
            let v = inflow / out_rate[j];
            change = change.max((v - pi[j]).abs() / v.max(1e-300));
            pi[j] = v;
        }
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|x| *x /= s);
        if change < 1e-13 || sweeps >= 200_000 {
            break;
        }
    }
    let mut flow = vec![0.0; n];
    for &(i, j, r) in &edges {
        flow[j] += pi[i] * r;
        flow[i] -= pi[i] * r;
    }
    let residual = flow.iter().map(|f| f.abs()).sum();

    let mut pf: Vec<f64> = states.iter().map(|s| p.weight(s)).collect();
    let z: f64 = pf.iter().sum();
    pf.iter_mut().for_each(|x| *x /= z);
    let tv_distance = 0.5 * pi.iter().zip(&pf).map(|(a, b)| (a - b).abs()).sum::<f64>();

    Ok(OracleResult {
        discipline,
        truncation: truncation_len,
        states,
        generator: pi,
        product_form: pf,
        tv_distance,
        residual,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::Caps;
    use crate::fixtures;
    use crate::prelimit::config_distribution;
    use crate::scalar::{q, qi};

    #[test]
    fn mm1_is_truncated_geometric() {
        let r = ctmc_oracle(&fixtures::mm1(q(1, 2), qi(1)), Discipline::Coc, 50).unwrap();
        let len = r.length_marginal();
        let z: f64 = (0..=50).map(|k| 0.5f64.powi(k)).sum();
        for (k, p) in len.iter().enumerate() {
            assert!((p - 0.5f64.powi(k as i32) / z).abs() < 1e-10);
        }
    }

    #[test]
    fn n_model_generator_matches_product_form() {
        let r = ctmc_oracle(&fixtures::n_model(q(1, 2)), Discipline::Coc, 12).unwrap();
        assert_eq!(r.states.len(), (1 << 13) - 1);
        assert!(r.tv_distance < 1e-6, "{}", r.tv_distance);
        assert!(r.residual < 1e-9);
    }

    #[test]
    fn cos_generator_matches_product_form() {
        for m in [fixtures::n_model(q(1, 2)), fixtures::four_server(q(1, 2)), fixtures::triangle(q(2, 3))] {
            let r = ctmc_oracle(&m, Discipline::Cos, 6).unwrap();
            assert!(r.tv_distance < 1e-6, "{}", r.tv_distance);
        }
    }

    #[test]
    fn config_marginals_match_prelimit_values() {
        let model = fixtures::n_model(q(1, 4));
        let caps = Caps::default();
        for disc in [Discipline::Coc, Discipline::Cos] {
            let r = ctmc_oracle(&model, disc, 16).unwrap();
            let tail = r.length_marginal()[16];
            assert!(tail < 1e-6);
            let marg = r.config_marginals();
            let exact = config_distribution(&model, disc, &caps).unwrap();
            for (v, pr) in exact.vectors.iter().zip(&exact.probs) {
                assert!((marg[v] - q_to_f64(pr)).abs() < 10.0 * tail, "{disc:?} {v:?}");
            }
        }
    }

    #[test]
    fn refuses_huge_state_spaces() {
        assert!(matches!(ctmc_oracle(&fixtures::four_server(q(1, 2)), Discipline::Coc, 12), Err(Error::Cap(_))));
    }
}
