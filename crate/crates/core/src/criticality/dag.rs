//! Bottleneck components and their overflow graph.

use std::collections::{BTreeSet, HashMap};

use num_traits::Signed;

use super::{bottleneck_network, lambda_star_via_flow};
use crate::error::{Error, Result};
use crate::model::{iter_bits, SystemModel};
use crate::scalar::Q;

/// Largest depth for which topological orders are materialized.
pub const MAX_DEPTH: usize = 12;

/// Largest number of topological orders materialized.
pub const DEFAULT_ORDER_CAP: u64 = 2_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrpComponent {
    /// Job types 𝓒_k as a type mask.
    pub types: u64,
    /// Servers 𝓩_k as a server mask.
    pub servers: u64,
}

#[derive(Clone, Debug)]
pub struct ComponentDag {
    pub lambda_star: Q,
    pub components: Vec<CrpComponent>,
    /// `(i, j)`: a type of component `i` can use a server of component `j`.
    pub edges: BTreeSet<(usize, usize)>,
    /// Every order σ with `j` placed before `i` for each edge `(i, j)`, lexicographic.
    pub topo_orders: Vec<Vec<usize>>,
    /// `V_k`: types of component `k` and of every component reachable from it.
    pub subtrees: Vec<u64>,
    pub subtree_p: Vec<Q>,
    /// Union of all critical types.
    pub critical_types: u64,
    /// Whether components built from positive-flow edges alone coincide.
    pub flow_only_agrees: bool,
}

impl ComponentDag {
    /// Depth `K`.
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Component holding type `s`, if critical.
    pub fn component_of(&self, s: usize) -> Option<usize> {
        self.components.iter().position(|c| c.types & (1 << s) != 0)
    }

    /// `γ(V_k)` for a per-type trajectory vector.
    pub fn subtree_gamma(&self, gamma: &[Q]) -> Vec<Q> {
        self.subtrees.iter().map(|&v| iter_bits(v).map(|s| gamma[s].clone()).sum()).collect()
    }

    /// Arcs of the transitive reduction.
    pub fn reduction(&self) -> BTreeSet<(usize, usize)> {
        let reach = self.reachability();
        self.edges
            .iter()
            .copied()
            .filter(|&(i, j)| !self.edges.iter().any(|&(a, b)| a == i && b != j && reach[b] & (1 << j) != 0))
            .collect()
    }

    /// True when no component has two distinct parents in the transitive reduction.
    pub fn is_forest(&self) -> bool {
        let mut parents = vec![0usize; self.k()];
        for (_, j) in self.reduction() {
            parents[j] += 1;
        }
        parents.into_iter().all(|c| c <= 1)
    }

    /// For every component, the mask of components reachable through edges.
    pub fn reachability(&self) -> Vec<u64> {
        let k = self.k();
        let mut reach = vec![0u64; k];
        for (i, r) in reach.iter_mut().enumerate() {
            let mut stack = vec![i];
            while let Some(u) = stack.pop() {
                for &(a, b) in &self.edges {
                    if a == u && *r & (1 << b) == 0 {
                        *r |= 1 << b;
                        stack.push(b);
                    }
                }
            }
        }
        reach
    }

    /// Types of `𝓒_{σ(1)} ∪ … ∪ 𝓒_{σ(k)}` for each prefix of σ.
    pub fn prefix_unions(&self, sigma: &[usize]) -> Vec<u64> {
        let mut acc = 0;
        sigma
            .iter()
            .map(|&c| {
                acc |= self.components[c].types;
                acc
            })
            .collect()
    }
}

/// Builds components from a maximum flow at λ*, then the graph, its
/// topological orders and subtrees.
///
/// An edge between a critical type and a server belongs to the residual
/// matching if it carries flow or can carry flow in some other maximum flow,
/// i.e. both endpoints share a strongly connected component of the residual
/// graph. Critical types are those from which the sink cannot be reached
/// without passing the source.
pub fn crp_components(model: &SystemModel) -> Result<ComponentDag> {
    let lambda_star = lambda_star_via_flow(model);
    let (mut g, pairs) = bottleneck_network(model, &lambda_star);
    let m = model.n_types();
    let n = model.n_servers();
    let sink = m + n + 1;
    let value = g.max_flow(0, sink);
    if value != model.n_q() * &lambda_star {
        return Err(Error::Internal("flow at the critical rate does not saturate the sources".into()));
    }
    let mut critical = 0u64;
    for s in 0..m {
        if !g.reachable(1 + s, &[0])[sink] {
            critical |= 1 << s;
        }
    }
    let scc = g.residual_scc();
    let mut usable = Vec::new();
    let mut carrying = Vec::new();
    for &(s, srv, arc) in &pairs {
        if critical & (1 << s) == 0 {
            continue;
        }
        let flows = g.flow(arc).is_positive();
        if flows {
            carrying.push((s, srv));
        }
        if flows || scc[1 + s] == scc[1 + m + srv] {
            usable.push((s, srv));
        }
    }
    let components = group(critical, &usable);
    let flow_only = group(critical, &carrying);
    let flow_only_agrees = flow_only == components;

    let k = components.len();
    let mut edges = BTreeSet::new();
    for (i, ci) in components.iter().enumerate() {
        let reach = model.servers_of(ci.types);
        for (j, cj) in components.iter().enumerate() {
            if i != j && reach & cj.servers != 0 {
                edges.insert((i, j));
            }
        }
    }
    let mut dag = ComponentDag {
        lambda_star,
        components,
        edges,
        topo_orders: Vec::new(),
        subtrees: Vec::new(),
        subtree_p: Vec::new(),
        critical_types: critical,
        flow_only_agrees,
    };
    let reach = dag.reachability();
    if (0..k).any(|i| reach[i] & (1 << i) != 0) {
        return Err(Error::Internal("component graph has a cycle".into()));
    }
    dag.subtrees = (0..k)
        .map(|i| iter_bits(reach[i] | (1 << i)).fold(0, |a, c| a | dag.components[c].types))
        .collect();
    dag.subtree_p = dag.subtrees.iter().map(|&v| model.p_of(v)).collect();
    if k > MAX_DEPTH {
        return Err(Error::Cap(format!("depth {k} exceeds the cap of {MAX_DEPTH} for order enumeration")));
    }
    let count = count_topological_orders(k, &dag.edges);
    if count > DEFAULT_ORDER_CAP {
        return Err(Error::Cap(format!("{count} topological orders exceed the cap of {DEFAULT_ORDER_CAP}")));
    }
    dag.topo_orders = topological_orders(k, &dag.edges);
    Ok(dag)
}

/// Connected components of the bipartite graph on critical types and servers.
fn group(critical: u64, links: &[(usize, usize)]) -> Vec<CrpComponent> {
    // union-find over type indices; servers join through any linked type
    let mut parent: HashMap<usize, usize> = iter_bits(critical).map(|s| (s, s)).collect();
    fn find(p: &mut HashMap<usize, usize>, x: usize) -> usize {
        let up = p[&x];
        if up == x {
            return x;
        }
        let r = find(p, up);
        p.insert(x, r);
        r
    }
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for &(s, srv) in links {
        if let Some(&t) = owner.get(&srv) {
            let (a, b) = (find(&mut parent, s), find(&mut parent, t));
            if a != b {
                parent.insert(a.max(b), a.min(b));
            }
        } else {
            owner.insert(srv, s);
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, CrpComponent> = Default::default();
    for s in iter_bits(critical) {
        let r = find(&mut parent, s);
        by_root.entry(r).or_insert(CrpComponent { types: 0, servers: 0 }).types |= 1 << s;
    }
    for &(s, srv) in links {
        let r = find(&mut parent, s);
        by_root.get_mut(&r).expect("root").servers |= 1 << srv;
    }
    let mut comps: Vec<CrpComponent> = by_root.into_values().collect();
    comps.sort_by_key(|c| c.types.trailing_zeros());
    comps
}

/// Number of valid orders, by dynamic programming over placed sets.
pub fn count_topological_orders(k: usize, edges: &BTreeSet<(usize, usize)>) -> u64 {
    let need = prerequisites(k, edges);
    let mut ways = vec![0u64; 1 << k];
    ways[0] = 1;
    for placed in 0..(1usize << k) {
        if ways[placed] == 0 {
            continue;
        }
        for c in 0..k {
            if placed & (1 << c) == 0 && need[c] & !(placed as u64) == 0 {
                ways[placed | (1 << c)] = ways[placed | (1 << c)].saturating_add(ways[placed]);
            }
        }
    }
    ways[(1 << k) - 1]
}

/// Components that must precede each component: all `j` with an edge `(i, j)`.
fn prerequisites(k: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<u64> {
    let mut need = vec![0u64; k];
    for &(i, j) in edges {
        need[i] |= 1 << j;
    }
    need
}

fn topological_orders(k: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<usize>> {
    let need = prerequisites(k, edges);
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(k: usize, need: &[u64], placed: u64, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for c in 0..k {
            if placed & (1 << c) == 0 && need[c] & !placed == 0 {
                cur.push(c);
                rec(k, need, placed | (1 << c), cur, out);
                cur.pop();
            }
        }
    }
    rec(k, &need, 0, &mut cur, &mut out);
    out
}

/// `{ 𝓒_{σ(1)} ∪ … ∪ 𝓒_{σ(k)} : σ ∈ Σ_K, k = 1..K }`.
pub fn critical_subsets_via_construction(dag: &ComponentDag) -> BTreeSet<u64> {
    dag.topo_orders.iter().flat_map(|sigma| dag.prefix_unions(sigma)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criticality::critical_rate_and_subsets_bruteforce;
    use crate::fixtures;
    use crate::scalar::{q, qi};

    fn tmask(model: &SystemModel, sets: &[&[usize]]) -> u64 {
        sets.iter().fold(0, |a, s| a | (1 << model.type_index(s).unwrap()))
    }
    fn smask(servers: &[usize]) -> u64 {
        servers.iter().fold(0, |a, s| a | (1 << (s - 1)))
    }
    fn find(dag: &ComponentDag, types: u64) -> usize {
        dag.components.iter().position(|c| c.types == types).expect("component present")
    }

    #[test]
    fn four_server_components() {
        let m = fixtures::four_server(q(1, 2));
        let dag = crp_components(&m).unwrap();
        assert_eq!(dag.k(), 3);
        let c1 = find(&dag, tmask(&m, &[&[1]]));
        let c2 = find(&dag, tmask(&m, &[&[3], &[3, 4]]));
        let c3 = find(&dag, tmask(&m, &[&[1, 2, 3]]));
        assert_eq!(dag.components[c1].servers, smask(&[1]));
        assert_eq!(dag.components[c2].servers, smask(&[3, 4]));
        assert_eq!(dag.components[c3].servers, smask(&[2]));
        assert_eq!(dag.edges, [(c3, c1), (c3, c2)].into_iter().collect());
        assert_eq!(dag.subtrees[c1], tmask(&m, &[&[1]]));
        assert_eq!(dag.subtrees[c2], tmask(&m, &[&[3], &[3, 4]]));
        assert_eq!(dag.subtrees[c3], m.all_types());
        let mut orders: Vec<Vec<usize>> = vec![vec![c1, c2, c3], vec![c2, c1, c3]];
        orders.sort();
        assert_eq!(dag.topo_orders, orders);
        assert!(dag.is_forest());
        assert!(dag.flow_only_agrees);
    }

    #[test]
    fn n_model_components() {
        let m = fixtures::n_model(q(1, 2));
        let dag = crp_components(&m).unwrap();
        let c1 = find(&dag, tmask(&m, &[&[1, 2]]));
        let c2 = find(&dag, tmask(&m, &[&[2]]));
        assert_eq!(dag.components[c1].servers, smask(&[1]));
        assert_eq!(dag.components[c2].servers, smask(&[2]));
        assert_eq!(dag.edges, [(c1, c2)].into_iter().collect());
        assert_eq!(dag.topo_orders, vec![vec![c2, c1]]);
        let cons = critical_subsets_via_construction(&dag);
        assert_eq!(cons, [tmask(&m, &[&[2]]), m.all_types()].into_iter().collect());
    }

    #[test]
    fn complete_partitioning_is_edgeless() {
        let m = fixtures::complete_partitioning(4, q(1, 2));
        let dag = crp_components(&m).unwrap();
        assert_eq!(dag.k(), 4);
        assert!(dag.edges.is_empty());
        assert_eq!(dag.topo_orders.len(), 24);
    }

    #[test]
    fn single_component_construction() {
        let m = fixtures::complete_sharing(q(1, 2));
        let dag = crp_components(&m).unwrap();
        assert_eq!(dag.k(), 1);
        assert_eq!(critical_subsets_via_construction(&dag), [m.all_types()].into_iter().collect());
    }

    #[test]
    fn alternative_flows_do_not_split_components() {
        let m = fixtures::triangle(q(1, 2));
        let dag = crp_components(&m).unwrap();
        assert_eq!(dag.k(), 1);
        let brute = critical_rate_and_subsets_bruteforce(&m, 20).unwrap();
        assert_eq!(brute.depth_k, 1);
        assert_eq!(critical_subsets_via_construction(&dag), brute.critical_subsets);
    }

    #[test]
    fn shared_child_is_not_a_forest() {
        let m = fixtures::shared_child(q(1, 2));
        let dag = crp_components(&m).unwrap();
        assert_eq!(dag.k(), 3);
        assert!(!dag.is_forest());
        assert_eq!(dag.topo_orders.len(), 2);
    }

    #[test]
    fn non_critical_types_are_excluded() {
        // type {3} on a fast private server never binds
        let m = SystemModel::new(
            vec![qi(1), qi(1), qi(10)],
            vec![(vec![1, 2], q(1, 4)), (vec![2], q(1, 4)), (vec![3], q(1, 2))],
            q(1, 2),
        )
        .unwrap();
        let dag = crp_components(&m).unwrap();
        let s3 = m.type_index(&[3]).unwrap();
        assert_eq!(dag.critical_types & (1 << s3), 0);
        assert!(dag.subtrees.iter().all(|v| v & (1 << s3) == 0));
        assert_eq!(dag.k(), 2);
    }
}
