//! Critical arrival rate, critical subsets, depth and resource-pooling class.
//!
//! Two independent routes are provided: an exhaustive scan over subsets of job
//! types, and a max-flow route that derives the bottleneck components and
//! rebuilds every critical subset from their topological orders.

mod dag;
pub mod maxflow;

use std::collections::BTreeSet;

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

pub use dag::{
    count_topological_orders, critical_subsets_via_construction, crp_components, ComponentDag, CrpComponent,
    DEFAULT_ORDER_CAP, MAX_DEPTH,
};

use crate::error::{Error, Result};
use crate::model::SystemModel;
use crate::scalar::Q;
use maxflow::{Cap, FlowNetwork};

/// Default cap on `|𝓢|` for the exhaustive route.
pub const DEFAULT_BRUTE_FORCE_CAP: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CrpClass {
    StrongCrp,
    WeakCrp,
    NonCrp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalityReport {
    pub lambda_star: Q,
    /// Critical subsets as type masks.
    pub critical_subsets: BTreeSet<u64>,
    pub depth_k: usize,
    pub crp_class: CrpClass,
}

impl CriticalityReport {
    fn from_subsets(model: &SystemModel, lambda_star: Q, subsets: BTreeSet<u64>) -> Self {
        let depth_k = longest_chain(&subsets);
        let crp_class = classify(model, &subsets);
        CriticalityReport { lambda_star, critical_subsets: subsets, depth_k, crp_class }
    }

    pub fn is_critical(&self, types: u64) -> bool {
        self.critical_subsets.contains(&types)
    }

    /// Union of all critical subsets, itself critical.
    pub fn critical_types(&self) -> u64 {
        self.critical_subsets.iter().fold(0, |a, b| a | b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stability {
    pub stable: bool,
    /// Inclusion-minimal subset with `Nλp(𝓣) ≥ μ(𝓣)` when unstable.
    pub witness: Option<u64>,
}

/// Whether `Nλ·p(𝓣) < μ(𝓣)` for every nonempty `𝓣`.
pub fn check_stability(model: &SystemModel) -> Stability {
    let star = lambda_star_via_flow(model);
    if model.lambda() < &star {
        return Stability { stable: true, witness: None };
    }
    let violates = |t: u64| {
        t != 0 && {
            let (p, mu) = model.aggregate_mask(t).expect("nonempty");
            model.n_q() * model.lambda() * p >= mu
        }
    };
    let m = model.n_types();
    if m <= DEFAULT_BRUTE_FORCE_CAP {
        let mut masks: Vec<u64> = (1..=model.all_types()).collect();
        masks.sort_by_key(|t| (t.count_ones(), *t));
        let w = masks.into_iter().find(|&t| violates(t)).expect("unstable model has a violating subset");
        return Stability { stable: false, witness: Some(w) };
    }
    let mut w = model.all_types();
    if !violates(w) {
        w = bottleneck_set(model, model.lambda());
    }
    for s in 0..m {
        let smaller = w & !(1 << s);
        if w & (1 << s) != 0 && violates(smaller) {
            w = smaller;
        }
    }
    Stability { stable: false, witness: Some(w) }
}

/// Exhaustive route: scans all `2^|𝓢| − 1` nonempty subsets.
pub fn critical_rate_and_subsets_bruteforce(model: &SystemModel, cap: usize) -> Result<CriticalityReport> {
    let m = model.n_types();
    if m > cap {
        return Err(Error::Cap(format!(
            "{m} job types exceed the exhaustive-scan cap of {cap}; use the max-flow construction route"
        )));
    }
    let masks: Vec<u64> = (1..=model.all_types()).collect();
    let ratios: Vec<(u64, Q, Q)> = masks
        .par_iter()
        .map(|&t| {
            let (p, mu) = model.aggregate_mask(t).expect("nonempty");
            (t, p, mu)
        })
        .collect();
    // min μ/p by cross-multiplication, deterministic regardless of threads
    let (mut best_p, mut best_mu) = (ratios[0].1.clone(), ratios[0].2.clone());
    for (_, p, mu) in &ratios[1..] {
        if mu * &best_p < &best_mu * p {
            best_p = p.clone();
            best_mu = mu.clone();
        }
    }
    let subsets: BTreeSet<u64> =
        ratios.iter().filter(|(_, p, mu)| mu * &best_p == &best_mu * p).map(|(t, _, _)| *t).collect();
    let lambda_star = best_mu / best_p / model.n_q();
    Ok(CriticalityReport::from_subsets(model, lambda_star, subsets))
}

/// Construction route: λ* by parametric max flow, critical subsets rebuilt
/// from the component graph.
pub fn criticality_via_construction(model: &SystemModel) -> Result<(CriticalityReport, ComponentDag)> {
    let dag = crp_components(model)?;
    let subsets = critical_subsets_via_construction(&dag);
    let report = CriticalityReport::from_subsets(model, dag.lambda_star.clone(), subsets);
    if report.depth_k != dag.k() {
        return Err(Error::Internal(format!(
            "depth {} differs from the number of components {}",
            report.depth_k,
            dag.k()
        )));
    }
    Ok((report, dag))
}

/// The bipartite bottleneck network at per-server rate `lambda`.
///
/// Node layout: source 0, types `1..=m`, servers `m+1..=m+N`, sink `m+N+1`.
/// Returns the network and the arc id of every type–server edge.
pub(crate) fn bottleneck_network(model: &SystemModel, lambda: &Q) -> (FlowNetwork, Vec<(usize, usize, usize)>) {
    let m = model.n_types();
    let n = model.n_servers();
    let mut g = FlowNetwork::new(m + n + 2);
    let sink = m + n + 1;
    let rate = model.n_q() * lambda;
    for (s, t) in model.types().iter().enumerate() {
        g.add_edge(0, 1 + s, Cap::Finite(&rate * &t.p));
    }
    let mut pairs = Vec::new();
    for (s, t) in model.types().iter().enumerate() {
        for &srv in &t.servers {
            let id = g.add_edge(1 + s, 1 + m + srv, Cap::Infinite);
            pairs.push((s, srv, id));
        }
    }
    for (srv, mu) in model.mu().iter().enumerate() {
        g.add_edge(1 + m + srv, sink, Cap::Finite(mu.clone()));
    }
    (g, pairs)
}

/// Types on the source side of a minimum cut at rate `lambda`.
fn bottleneck_set(model: &SystemModel, lambda: &Q) -> u64 {
    let (mut g, _) = bottleneck_network(model, lambda);
    let sink = g.len() - 1;
    let f = g.max_flow(0, sink);
    let m = model.n_types();
    if f < model.n_q() * lambda {
        let r = g.reachable(0, &[]);
        (0..m).filter(|&s| r[1 + s]).fold(0, |a, s| a | (1 << s))
    } else {
        let mut set = 0;
        for s in 0..m {
            if !g.reachable(1 + s, &[0])[sink] {
                set |= 1 << s;
            }
        }
        set
    }
}

/// λ* by Dinkelbach iteration on the min cut of the bottleneck network.
pub fn lambda_star_via_flow(model: &SystemModel) -> Q {
    let mut lambda = model.mu_of_servers(model.servers_of(model.all_types())) / model.n_q();
    loop {
        let (mut g, _) = bottleneck_network(model, &lambda);
        let sink = g.len() - 1;
        let f = g.max_flow(0, sink);
        if f == model.n_q() * &lambda {
            return lambda;
        }
        let t = bottleneck_set(model, &lambda);
        let (p, mu) = model.aggregate_mask(t).expect("violating cut is nonempty");
        let next = mu / p / model.n_q();
        debug_assert!(next < lambda);
        lambda = next;
    }
}

fn longest_chain(subsets: &BTreeSet<u64>) -> usize {
    let mut v: Vec<u64> = subsets.iter().copied().collect();
    v.sort_by_key(|t| t.count_ones());
    let mut best = vec![1usize; v.len()];
    for i in 0..v.len() {
        for j in 0..i {
            if v[j] != v[i] && v[j] & !v[i] == 0 {
                best[i] = best[i].max(best[j] + 1);
            }
        }
    }
    best.into_iter().max().unwrap_or(0)
}

fn classify(model: &SystemModel, subsets: &BTreeSet<u64>) -> CrpClass {
    if subsets.len() == 1 {
        if subsets.contains(&model.all_types()) {
            CrpClass::StrongCrp
        } else {
            CrpClass::WeakCrp
        }
    } else {
        CrpClass::NonCrp
    }
}

/// Checks `Nλ*p(𝓣) = μ(𝓣)` exactly.
pub fn is_tight(model: &SystemModel, lambda_star: &Q, types: u64) -> bool {
    match model.aggregate_mask(types) {
        Ok((p, mu)) => model.n_q() * lambda_star * p == mu,
        Err(_) => false,
    }
}

pub(crate) fn is_zero(q: &Q) -> bool {
    q.is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::scalar::{q, qi};

    fn mask(model: &SystemModel, sets: &[&[usize]]) -> u64 {
        sets.iter().fold(0, |a, s| a | (1 << model.type_index(s).unwrap()))
    }

    #[test]
    fn stability_of_n_model() {
        let s = check_stability(&fixtures::n_model(q(9, 10)));
        assert!(s.stable);
        let m = fixtures::n_model(qi(1));
        let s = check_stability(&m);
        assert!(!s.stable);
        assert_eq!(s.witness, Some(mask(&m, &[&[2]])));
        assert!(check_stability(&fixtures::mm1(q(1, 2), qi(1))).stable);
    }

    #[test]
    fn four_server_critical_subsets() {
        let m = fixtures::four_server(qi(1));
        let r = critical_rate_and_subsets_bruteforce(&m, 20).unwrap();
        assert_eq!(r.lambda_star, qi(1));
        let expected: BTreeSet<u64> = [
            mask(&m, &[&[1]]),
            mask(&m, &[&[3], &[3, 4]]),
            mask(&m, &[&[1], &[3], &[3, 4]]),
            m.all_types(),
        ]
        .into_iter()
        .collect();
        assert_eq!(r.critical_subsets, expected);
        assert_eq!(r.depth_k, 3);
        assert_eq!(r.crp_class, CrpClass::NonCrp);
    }

    #[test]
    fn n_model_scenarios() {
        let m = fixtures::n_model(qi(1));
        let r = critical_rate_and_subsets_bruteforce(&m, 20).unwrap();
        assert_eq!(r.lambda_star, qi(1));
        assert_eq!(r.critical_subsets, [mask(&m, &[&[2]]), m.all_types()].into_iter().collect());
        assert_eq!(r.depth_k, 2);
        // strong pooling: type {2} is light enough that only the full set binds
        let strong = SystemModel::new(vec![qi(1), qi(1)], vec![(vec![1, 2], q(3, 4)), (vec![2], q(1, 4))], qi(1)).unwrap();
        let r = critical_rate_and_subsets_bruteforce(&strong, 20).unwrap();
        assert_eq!(r.crp_class, CrpClass::StrongCrp);
        assert_eq!(r.lambda_star, strong.mu_bar());
        assert_eq!(r.depth_k, 1);
        // weak pooling: type {2} alone is the bottleneck
        let weak = SystemModel::new(vec![qi(1), qi(1)], vec![(vec![1, 2], q(1, 4)), (vec![2], q(3, 4))], qi(1)).unwrap();
        let r = critical_rate_and_subsets_bruteforce(&weak, 20).unwrap();
        assert_eq!(r.crp_class, CrpClass::WeakCrp);
        assert_eq!(r.depth_k, 1);
        assert_eq!(r.lambda_star, q(2, 3));
    }

    #[test]
    fn cap_is_enforced() {
        let m = fixtures::complete_partitioning(3, q(1, 2));
        assert!(matches!(critical_rate_and_subsets_bruteforce(&m, 2), Err(Error::Cap(_))));
    }

    #[test]
    fn flow_rate_matches_scan() {
        for m in [fixtures::four_server(qi(1)), fixtures::n_model(q(1, 2)), fixtures::triangle(q(1, 2))] {
            let r = critical_rate_and_subsets_bruteforce(&m, 20).unwrap();
            assert_eq!(lambda_star_via_flow(&m), r.lambda_star);
        }
    }
}
