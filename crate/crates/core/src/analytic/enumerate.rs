//! Ordered vectors of distinct job types and of distinct servers.

use super::{Caps, LimitContext};
use crate::criticality::CriticalityReport;
use crate::error::{Error, Result};
use crate::model::{iter_bits, SystemModel};
use crate::scalar::Q;

/// Largest number of vectors materialized by the structural enumeration of 𝓝_K.
const NK_CAP: u128 = 2_000_000;

/// An ordered vector `T = [T_1, …, T_m]` of distinct job types with its
/// prefix aggregates.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderedTypeVector {
    pub entries: Vec<usize>,
    /// Zero-based positions `i` such that `T_1 ∪ … ∪ T_{i+1}` is critical.
    pub cr_indices: Vec<usize>,
    /// `p(T, j)` for each prefix length `j = 1..m`.
    pub prefix_p: Vec<Q>,
    /// `μ(T, j)`.
    pub prefix_mu: Vec<Q>,
    /// `γ(T, j)`.
    pub prefix_gamma: Vec<Q>,
}

impl OrderedTypeVector {
    pub fn new(model: &SystemModel, report: &CriticalityReport, entries: Vec<usize>, gamma: &[Q]) -> Result<Self> {
        let mut seen = 0u64;
        for &s in &entries {
            if s >= model.n_types() {
                return Err(Error::Domain(format!("unknown job type index {s}")));
            }
            if seen & (1 << s) != 0 {
                return Err(Error::Domain("ordered vector repeats a job type".into()));
            }
            seen |= 1 << s;
        }
        let mut cr_indices = Vec::new();
        let mut prefix_p = Vec::with_capacity(entries.len());
        let mut prefix_mu = Vec::with_capacity(entries.len());
        let mut prefix_gamma = Vec::with_capacity(entries.len());
        let (mut types, mut servers) = (0u64, 0u64);
        let (mut p, mut g) = (Q::from_integer(0.into()), Q::from_integer(0.into()));
        for (i, &s) in entries.iter().enumerate() {
            types |= 1 << s;
            servers |= model.types()[s].mask;
            p += model.p(s);
            g += &gamma[s];
            prefix_p.push(p.clone());
            prefix_mu.push(model.mu_of_servers(servers));
            prefix_gamma.push(g.clone());
            if report.is_critical(types) {
                cr_indices.push(i);
            }
        }
        Ok(OrderedTypeVector { entries, cr_indices, prefix_p, prefix_mu, prefix_gamma })
    }

    pub fn from_ctx(ctx: &LimitContext, entries: Vec<usize>) -> Result<Self> {
        Self::new(&ctx.model, &ctx.report, entries, &ctx.gamma)
    }

    /// Number of critical prefixes.
    pub fn k(&self) -> usize {
        self.cr_indices.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Zero-based position of type `s`.
    pub fn position(&self, s: usize) -> Option<usize> {
        self.entries.iter().position(|&t| t == s)
    }

    pub fn is_cr(&self, i: usize) -> bool {
        self.cr_indices.binary_search(&i).is_ok()
    }
}

/// Depth-first visit of every ordered vector of distinct types drawn from
/// `allowed`, the empty vector first. Children are skipped when `visit`
/// returns false.
pub fn for_each_vector(allowed: u64, visit: &mut dyn FnMut(&[usize]) -> bool) {
    fn rec(allowed: u64, used: u64, cur: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize]) -> bool) {
        if !visit(cur) {
            return;
        }
        for s in iter_bits(allowed & !used) {
            cur.push(s);
            rec(allowed, used | (1 << s), cur, visit);
            cur.pop();
        }
    }
    rec(allowed, 0, &mut Vec::new(), visit);
}

/// Same traversal over ordered vectors of distinct servers.
pub fn for_each_server_vector(allowed: u64, visit: &mut dyn FnMut(&[usize]) -> bool) {
    for_each_vector(allowed, visit)
}

/// Every ordered vector of distinct types, the empty one included.
pub fn enumerate_all(model: &SystemModel, caps: &Caps) -> Result<Vec<Vec<usize>>> {
    caps.check_types(model)?;
    let mut out = Vec::new();
    for_each_vector(model.all_types(), &mut |v| {
        out.push(v.to_vec());
        true
    });
    Ok(out)
}

/// `|𝓝_K|` without materializing it.
pub fn nk_size(ctx: &LimitContext) -> u128 {
    let block: u128 = ctx.dag.components.iter().map(|c| factorial_u128(c.types.count_ones())).product();
    let r = ctx.model.n_types() as u32 - ctx.dag.critical_types.count_ones();
    let suffixes: u128 = (0..=r).map(|j| factorial_u128(r) / factorial_u128(r - j)).sum();
    ctx.dag.topo_orders.len() as u128 * block * suffixes
}

fn factorial_u128(n: u32) -> u128 {
    (1..=n as u128).product()
}

/// All vectors whose prefix unions hit exactly `k` critical subsets.
///
/// For `k = K` the set is assembled from the topological orders: the types of
/// each component in any order, components in σ order, then any ordered
/// selection of non-critical types. Smaller `k` use a pruned full search.
pub fn enumerate_k_critical(ctx: &LimitContext, k: usize, caps: &Caps) -> Result<Vec<OrderedTypeVector>> {
    let big_k = ctx.k();
    if k > big_k {
        return Ok(Vec::new());
    }
    if k == big_k {
        let size = nk_size(ctx);
        if size > NK_CAP {
            return Err(Error::Cap(format!("|N_K| = {size} exceeds the cap of {NK_CAP}")));
        }
        let mut out = Vec::new();
        for (_, core) in nk_cores(ctx) {
            let noncrit = ctx.model.all_types() & !ctx.dag.critical_types;
            let mut suffixes = Vec::new();
            for_each_vector(noncrit, &mut |v| {
                suffixes.push(v.to_vec());
                true
            });
            for suf in suffixes {
                let mut entries = core.clone();
                entries.extend(suf);
                out.push(OrderedTypeVector::from_ctx(ctx, entries)?);
            }
        }
        return Ok(out);
    }
    caps.check_types(&ctx.model)?;
    let mut raw = Vec::new();
    let report = &ctx.report;
    for_each_vector(ctx.model.all_types(), &mut |v| {
        let mut types = 0u64;
        let hits = v
            .iter()
            .filter(|&&s| {
                types |= 1 << s;
                report.is_critical(types)
            })
            .count();
        if hits == k {
            raw.push(v.to_vec());
        }
        hits <= k
    });
    raw.into_iter().map(|v| OrderedTypeVector::from_ctx(ctx, v)).collect()
}

/// The critical parts of 𝓝_K, tagged with their topological order.
pub(crate) fn nk_cores(ctx: &LimitContext) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    for sigma in &ctx.dag.topo_orders {
        let blocks: Vec<Vec<Vec<usize>>> =
            sigma.iter().map(|&c| permutations(&iter_bits(ctx.dag.components[c].types).collect::<Vec<_>>())).collect();
        expand(&blocks, 0, &mut Vec::new(), sigma, &mut out);
    }
    out
}

fn expand(
    blocks: &[Vec<Vec<usize>>],
    d: usize,
    cur: &mut Vec<usize>,
    sigma: &[usize],
    out: &mut Vec<(Vec<usize>, Vec<usize>)>,
) {
    if d == blocks.len() {
        out.push((sigma.to_vec(), cur.clone()));
        return;
    }
    for perm in &blocks[d] {
        cur.extend_from_slice(perm);
        expand(blocks, d + 1, cur, sigma, out);
        cur.truncate(cur.len() - perm.len());
    }
}

/// All permutations of `items` in lexicographic order of positions.
pub(crate) fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let all = crate::model::full_mask(items.len());
    for_each_vector(all, &mut |v| {
        if v.len() == items.len() {
            out.push(v.iter().map(|&i| items[i]).collect());
        }
        true
    });
    out
}
