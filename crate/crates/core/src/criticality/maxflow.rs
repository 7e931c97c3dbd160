//! Exact-rational maximum flow by shortest augmenting paths.

use std::collections::VecDeque;

use num_traits::{Signed, Zero};

use crate::scalar::Q;

#[derive(Clone, Debug)]
pub enum Cap {
    Finite(Q),
    Infinite,
}

#[derive(Clone, Debug)]
struct Arc {
    to: usize,
    cap: Cap,
    flow: Q,
}

/// Residual capacity of an arc, `None` meaning unbounded.
fn residual(a: &Arc) -> Option<Q> {
    match &a.cap {
        Cap::Infinite => None,
        Cap::Finite(c) => Some(c - &a.flow),
    }
}

#[derive(Clone, Debug, Default)]
pub struct FlowNetwork {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork { arcs: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    /// Adds `u → v` and its reverse arc; returns the forward arc id.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: Cap) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to: v, cap, flow: Q::zero() });
        self.arcs.push(Arc { to: u, cap: Cap::Finite(Q::zero()), flow: Q::zero() });
        self.adj[u].push(id);
        self.adj[v].push(id + 1);
        id
    }

    pub fn flow(&self, arc: usize) -> &Q {
        &self.arcs[arc].flow
    }

    fn has_residual(&self, arc: usize) -> bool {
        residual(&self.arcs[arc]).map_or(true, |r| r.is_positive())
    }

    /// Edmonds–Karp. Panics if an augmenting path has unbounded capacity.
    pub fn max_flow(&mut self, s: usize, t: usize) -> Q {
        let mut total = Q::zero();
        loop {
            let mut pred: Vec<Option<usize>> = vec![None; self.len()];
            let mut seen = vec![false; self.len()];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for &a in &self.adj[u] {
                    let v = self.arcs[a].to;
                    if !seen[v] && self.has_residual(a) {
                        seen[v] = true;
                        pred[v] = Some(a);
                        queue.push_back(v);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            let mut bottleneck: Option<Q> = None;
            let mut v = t;
            while let Some(a) = pred[v] {
                if let Some(r) = residual(&self.arcs[a]) {
                    bottleneck = Some(match bottleneck {
                        Some(b) if b <= r => b,
                        _ => r,
                    });
                }
                v = self.arcs[a ^ 1].to;
            }
            let b = bottleneck.expect("augmenting path of unbounded capacity");
            let mut v = t;
            while let Some(a) = pred[v] {
                self.arcs[a].flow += &b;
                self.arcs[a ^ 1].flow -= &b;
                v = self.arcs[a ^ 1].to;
            }
            total += b;
        }
    }

    /// Nodes reachable from `from` through arcs with positive residual capacity,
    /// never entering nodes in `blocked`.
    pub fn reachable(&self, from: usize, blocked: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        seen[from] = true;
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            for &a in &self.adj[u] {
                let v = self.arcs[a].to;
                if !seen[v] && !blocked.contains(&v) && self.has_residual(a) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }

    /// Strongly connected component label of every node in the residual graph.
    pub fn residual_scc(&self) -> Vec<usize> {
        let n = self.len();
        let succ: Vec<Vec<usize>> = (0..n)
            .map(|u| self.adj[u].iter().filter(|&&a| self.has_residual(a)).map(|&a| self.arcs[a].to).collect())
            .collect();
        tarjan(&succ)
    }
}

/// Iterative Tarjan SCC; returns a component label per node.
pub fn tarjan(succ: &[Vec<usize>]) -> Vec<usize> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next_index = 0;
    let mut next_comp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(top) = call.last_mut() {
            let u = top.0;
            if top.1 < succ[u].len() {
                let v = succ[u][top.1];
                top.1 += 1;
                if index[v] == usize::MAX {
                    index[v] = next_index;
                    low[v] = next_index;
                    next_index += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    call.push((v, 0));
                } else if on_stack[v] {
                    low[u] = low[u].min(index[v]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[u]);
                }
                if low[u] == index[u] {
                    loop {
                        let w = stack.pop().expect("nonempty");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == u {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}
