//! Heavy-traffic limit laws: weights, mixtures, σ-aggregation and transforms.

use std::collections::BTreeMap;

use super::enumerate::nk_cores;
use super::{enumerate_k_critical, idle_weight_sum, Caps, LimitContext, OrderedTypeVector};
use crate::error::{Error, Result};
use crate::model::iter_bits;
use crate::scalar::{qi, Scalar, Q};

/// Largest number of non-critical types handled by the suffix recursion.
const SUFFIX_TYPES_CAP: usize = 20;

/// `Y_S = Σ_k A[k][S]·U_k` with i.i.d. unit-mean exponentials `U_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitLaw {
    /// `K × |𝓢|`; row `k` belongs to component `k`.
    pub coeffs: Vec<Vec<Q>>,
    /// Whether the component graph reduces to a forest. The product form is
    /// the limit only in that case; otherwise use the mixture law.
    pub forest: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureAtom {
    pub weight: Q,
    /// `K × |𝓢|`; row `k` multiplies the `k`-th exponential.
    pub coeffs: Vec<Vec<Q>>,
    /// Order in which the components appear.
    pub sigma: Vec<usize>,
    /// Ordered type vectors merged into this atom.
    pub members: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureLaw {
    pub atoms: Vec<MixtureAtom>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaAggregation {
    /// One atom per topological order.
    pub law: MixtureLaw,
    /// `β̂(σ) = ∏_k Nλ*/γ(𝓒_{σ(1)} ∪ … ∪ 𝓒_{σ(k)})`, aligned with the atoms.
    pub beta_hat: Vec<Q>,
    /// `Σ_σ β̂(σ)`.
    pub beta_hat_total: Q,
    /// `∏_k Nλ*/γ(V_k)`, equal to `beta_hat_total` on forests.
    pub beta_hat_product: Q,
    pub forest: bool,
}

/// `β(T)` at the critical rate. Critical prefixes are skipped in the second
/// product, so no vanishing factor is ever inverted.
pub fn beta_weight(ctx: &LimitContext, t: &OrderedTypeVector) -> Q {
    let mut acc = qi(1);
    for (i, &s) in t.entries.iter().enumerate() {
        let load = &ctx.rate / &t.prefix_mu[i];
        acc *= &load * ctx.model.p(s);
        if !t.is_cr(i) {
            acc /= qi(1) - &load * &t.prefix_p[i];
        }
    }
    acc
}

/// `ω(T) = β(T)·∏_{j∈CR(T)} μ(T,j)/γ(T,j)`.
fn omega(ctx: &LimitContext, t: &OrderedTypeVector) -> Q {
    let mut w = beta_weight(ctx, t);
    for &j in &t.cr_indices {
        w = w * &t.prefix_mu[j] / &t.prefix_gamma[j];
    }
    w
}

/// Sum of the trailing non-critical factors of `β` over every ordered
/// selection of non-critical types. It is the same for every critical core
/// because all cores cover the same critical types.
fn suffix_factor(ctx: &LimitContext) -> Result<Q> {
    let crit = ctx.dag.critical_types;
    let rest: Vec<usize> = iter_bits(ctx.model.all_types() & !crit).collect();
    if rest.len() > SUFFIX_TYPES_CAP {
        return Err(Error::Cap(format!(
            "{} non-critical types exceed the suffix cap of {SUFFIX_TYPES_CAP}",
            rest.len()
        )));
    }
    let model = &ctx.model;
    let mut f = vec![qi(0); 1 << rest.len()];
    f[0] = qi(1);
    let mut total = qi(1);
    for a in 1..(1usize << rest.len()) {
        let types = iter_bits(a as u64).fold(crit, |acc, i| acc | (1 << rest[i]));
        let load = &ctx.rate / model.mu_of_servers(model.servers_of(types));
        let tail = qi(1) / (qi(1) - &load * model.p_of(types));
        let mut acc = qi(0);
        for i in iter_bits(a as u64) {
            acc += &f[a & !(1 << i)] * model.p(rest[i]);
        }
        f[a] = acc * &load * tail;
        total += &f[a];
    }
    Ok(total)
}

/// `ℙ*(T) = β(T)/β(𝓝_K)`.
pub fn p_star(ctx: &LimitContext, t: &OrderedTypeVector) -> Result<Q> {
    if t.k() != ctx.k() {
        return Err(Error::Domain(format!(
            "vector hits {} critical subsets but K = {}",
            t.k(),
            ctx.k()
        )));
    }
    let mut total = qi(0);
    for (_, core) in nk_cores(ctx) {
        total += beta_weight(ctx, &OrderedTypeVector::from_ctx(ctx, core)?);
    }
    Ok(beta_weight(ctx, t) / (total * suffix_factor(ctx)?))
}

/// Coefficients `Nλ*p_S/γ(T, i_k)·1{i_k ≥ j_S(T)}`.
fn atom_coeffs(ctx: &LimitContext, t: &OrderedTypeVector) -> Vec<Vec<Q>> {
    let m = ctx.model.n_types();
    t.cr_indices
        .iter()
        .map(|&i| {
            let mut row = vec![qi(0); m];
            for &s in &t.entries[..=i] {
                row[s] = &ctx.rate * ctx.model.p(s) / &t.prefix_gamma[i];
            }
            row
        })
        .collect()
}

/// Component order in which the critical entries of `t` appear.
fn sigma_of(ctx: &LimitContext, t: &[usize]) -> Vec<usize> {
    let mut sigma: Vec<usize> = Vec::new();
    for &s in t {
        if let Some(c) = ctx.dag.component_of(s) {
            if !sigma.contains(&c) {
                sigma.push(c);
            }
        }
    }
    sigma
}

/// One atom per critical core of 𝓝_K. Vectors that extend a core with
/// non-critical types carry the same coefficients and a weight proportional
/// to the core's, so they are folded into it.
pub fn mixture_law(ctx: &LimitContext) -> Result<MixtureLaw> {
    let mut atoms = Vec::new();
    for (sigma, core) in nk_cores(ctx) {
        let t = OrderedTypeVector::from_ctx(ctx, core)?;
        atoms.push(MixtureAtom { weight: omega(ctx, &t), coeffs: atom_coeffs(ctx, &t), sigma, members: vec![t.entries] });
    }
    normalize(&mut atoms);
    Ok(MixtureLaw { atoms })
}

/// One atom per vector of 𝓝_K, trailing non-critical types included.
pub fn mixture_law_full(ctx: &LimitContext, caps: &Caps) -> Result<MixtureLaw> {
    let mut atoms = Vec::new();
    for t in enumerate_k_critical(ctx, ctx.k(), caps)? {
        atoms.push(MixtureAtom {
            weight: omega(ctx, &t),
            coeffs: atom_coeffs(ctx, &t),
            sigma: sigma_of(ctx, &t.entries),
            members: vec![t.entries],
        });
    }
    normalize(&mut atoms);
    Ok(MixtureLaw { atoms })
}

fn normalize(atoms: &mut [MixtureAtom]) {
    let total: Q = atoms.iter().map(|a| a.weight.clone()).sum();
    for a in atoms {
        a.weight = &a.weight / &total;
    }
}

impl MixtureLaw {
    /// `Σ w ∏_k (1 + Σ_S t_S A[k][S])⁻¹`.
    pub fn laplace<S: Scalar>(&self, t: &[S]) -> S {
        let mut acc = S::zero();
        for atom in &self.atoms {
            acc = acc + S::from_q(&atom.weight) * product_laplace(&atom.coeffs, t);
        }
        acc
    }

    /// `E[X_S]` for every type.
    pub fn means(&self) -> Vec<Q> {
        let m = self.atoms.first().map_or(0, |a| a.coeffs.first().map_or(0, Vec::len));
        let mut out = vec![qi(0); m];
        for atom in &self.atoms {
            for row in &atom.coeffs {
                for (o, c) in out.iter_mut().zip(row) {
                    *o += &atom.weight * c;
                }
            }
        }
        out
    }
}

impl LimitLaw {
    pub fn laplace<S: Scalar>(&self, t: &[S]) -> S {
        product_laplace(&self.coeffs, t)
    }

    pub fn means(&self) -> Vec<Q> {
        let m = self.coeffs.first().map_or(0, Vec::len);
        (0..m).map(|s| self.coeffs.iter().map(|r| r[s].clone()).sum()).collect()
    }
}

fn product_laplace<S: Scalar>(coeffs: &[Vec<Q>], t: &[S]) -> S {
    let mut acc = S::one();
    for row in coeffs {
        let mut x = S::one();
        for (c, ts) in row.iter().zip(t) {
            if !crate::criticality::is_zero(c) {
                x = x + S::from_q(c) * ts.clone();
            }
        }
        acc = acc / x;
    }
    acc
}

/// Merges the atoms of each σ and checks that merged atoms agree.
pub fn sigma_aggregate(ctx: &LimitContext, mixture: &MixtureLaw) -> Result<SigmaAggregation> {
    let mut groups: BTreeMap<Vec<usize>, MixtureAtom> = BTreeMap::new();
    for atom in &mixture.atoms {
        match groups.get_mut(&atom.sigma) {
            Some(g) => {
                if g.coeffs != atom.coeffs {
                    return Err(Error::Internal(format!(
                        "atoms of order {:?} have different coefficient matrices",
                        atom.sigma
                    )));
                }
                g.weight += &atom.weight;
                g.members.extend(atom.members.iter().cloned());
            }
            None => {
                groups.insert(atom.sigma.clone(), atom.clone());
            }
        }
    }
    let atoms: Vec<MixtureAtom> = ctx
        .dag
        .topo_orders
        .iter()
        .filter_map(|s| groups.remove(s))
        .collect();
    if !groups.is_empty() || atoms.len() != ctx.dag.topo_orders.len() {
        return Err(Error::Internal("mixture atoms do not match the topological orders".into()));
    }
    let beta_hat: Vec<Q> = atoms.iter().map(|a| beta_hat(ctx, &a.sigma)).collect();
    let beta_hat_total = beta_hat.iter().cloned().sum();
    let beta_hat_product =
        ctx.dag.subtree_gamma(&ctx.gamma).iter().fold(qi(1), |acc, g| acc * &ctx.rate / g);
    Ok(SigmaAggregation {
        law: MixtureLaw { atoms },
        beta_hat,
        beta_hat_total,
        beta_hat_product,
        forest: ctx.dag.is_forest(),
    })
}

/// `β̂(σ) = ∏_k Nλ*/γ(𝓒_{σ(1)} ∪ … ∪ 𝓒_{σ(k)})`.
pub fn beta_hat(ctx: &LimitContext, sigma: &[usize]) -> Q {
    ctx.dag.prefix_unions(sigma).iter().fold(qi(1), |acc, &u| acc * &ctx.rate / ctx.gamma_of(u))
}

/// Both sides of `Σ_σ ∏_k (c_{σ(1)}+…+c_{σ(k)})⁻¹ = ∏_k (Σ_{j∈V_k} c_j)⁻¹`.
pub fn nested_sum_identity(ctx: &LimitContext, c: &[Q]) -> Result<(Q, Q)> {
    let k = ctx.k();
    if c.len() != k {
        return Err(Error::Validation(format!("expected {k} constants, got {}", c.len())));
    }
    if c.iter().any(|x| !crate::scalar::is_positive(x)) {
        return Err(Error::Validation("constants must be positive".into()));
    }
    let mut lhs = qi(0);
    for sigma in &ctx.dag.topo_orders {
        let mut run = qi(0);
        let mut prod = qi(1);
        for &j in sigma {
            run += &c[j];
            prod /= &run;
        }
        lhs += prod;
    }
    let reach = ctx.dag.reachability();
    let mut rhs = qi(1);
    for (i, r) in reach.iter().enumerate() {
        let sub: Q = iter_bits(r | (1 << i)).map(|j| c[j].clone()).sum();
        rhs /= sub;
    }
    Ok((lhs, rhs))
}

/// `A[k][S] = Nλ*p_S/γ(V_k)·1{S∈V_k}`; the same for both disciplines.
pub fn limit_law(ctx: &LimitContext) -> LimitLaw {
    let m = ctx.model.n_types();
    let coeffs = ctx
        .dag
        .subtrees
        .iter()
        .map(|&v| {
            let g = ctx.gamma_of(v);
            let mut row = vec![qi(0); m];
            for s in iter_bits(v) {
                row[s] = &ctx.rate * ctx.model.p(s) / &g;
            }
            row
        })
        .collect();
    LimitLaw { coeffs, forest: ctx.dag.is_forest() }
}

/// `∏_k (1 + Σ_{S∈V_k} t_S·Nλ*p_S/γ(V_k))⁻¹`.
pub fn limiting_laplace<S: Scalar>(ctx: &LimitContext, t: &[S]) -> Result<S> {
    check_t(ctx, t)?;
    Ok(limit_law(ctx).laplace(t))
}

/// Limit transform for either graph shape: the product form on forests, the
/// mixture otherwise.
pub fn limit_transform<S: Scalar>(ctx: &LimitContext, t: &[S]) -> Result<S> {
    if ctx.dag.is_forest() {
        return limiting_laplace(ctx, t);
    }
    check_t(ctx, t)?;
    Ok(mixture_law(ctx)?.laplace(t))
}

/// Cancel-on-start limit transform, summed over 𝓝_K and over the idle-server
/// vectors compatible with no type of each vector.
pub fn limiting_laplace_cos_general<S: Scalar>(ctx: &LimitContext, t: &[S], caps: &Caps) -> Result<S> {
    check_t(ctx, t)?;
    caps.check_servers(&ctx.model)?;
    let model = &ctx.model;
    let alpha = idle_weight_sum::<Q>(model, &ctx.dag.lambda_star)?;
    let mut num = S::zero();
    let mut den = qi(0);
    for tv in enumerate_k_critical(ctx, ctx.k(), caps)? {
        let used = tv.entries.iter().fold(0u64, |acc, &s| acc | model.types()[s].mask);
        let free = model.all_servers() & !used;
        let mut a = qi(0);
        let mut sub = free;
        loop {
            a += &alpha[sub as usize];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
        let w = a * omega(ctx, &tv);
        num = num + S::from_q(&w) * product_laplace(&atom_coeffs(ctx, &tv), t);
        den += w;
    }
    Ok(num / S::from_q(&den))
}

fn check_t<S: Scalar>(ctx: &LimitContext, t: &[S]) -> Result<()> {
    if t.len() != ctx.model.n_types() {
        return Err(Error::Validation(format!("t must have {} entries", ctx.model.n_types())));
    }
    if t.iter().any(|x| x.to_f64() < 0.0) {
        return Err(Error::Domain("Laplace arguments must be nonnegative".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{SystemModel, TrajectorySpec};
    use crate::scalar::q;

    fn idx(m: &SystemModel, s: &[usize]) -> usize {
        m.type_index(s).unwrap()
    }

    fn four() -> (SystemModel, LimitContext) {
        let m = fixtures::four_server(qi(1));
        let ctx = LimitContext::new(&m).unwrap();
        (m, ctx)
    }

    #[test]
    fn four_server_p_star() {
        let (m, ctx) = four();
        let t = |v: &[&[usize]]| OrderedTypeVector::from_ctx(&ctx, v.iter().map(|s| idx(&m, s)).collect()).unwrap();
        assert_eq!(p_star(&ctx, &t(&[&[1], &[3], &[3, 4], &[1, 2, 3]])).unwrap(), q(4, 9));
        assert_eq!(p_star(&ctx, &t(&[&[3, 4], &[3], &[1], &[1, 2, 3]])).unwrap(), q(1, 9));
        assert_eq!(p_star(&ctx, &t(&[&[1], &[3, 4], &[3], &[1, 2, 3]])).unwrap(), q(2, 9));
        assert!(matches!(p_star(&ctx, &t(&[&[1, 2, 3]])), Err(Error::Domain(_))));
    }

    #[test]
    fn four_server_mixture_atoms() {
        let (m, ctx) = four();
        let mix = mixture_law(&ctx).unwrap();
        assert_eq!(mix.atoms.len(), 4);
        let one = [idx(&m, &[1]), idx(&m, &[3]), idx(&m, &[3, 4]), idx(&m, &[1, 2, 3])];
        let two = [idx(&m, &[1]), idx(&m, &[3, 4]), idx(&m, &[3]), idx(&m, &[1, 2, 3])];
        let find = |v: &[usize]| mix.atoms.iter().find(|a| a.members[0] == v).unwrap();
        let (a, b) = (find(&one), find(&two));
        assert_eq!(a.weight, q(4, 9));
        assert_eq!(b.weight, q(2, 9));
        assert_eq!(a.coeffs, b.coeffs);
        // columns in type order {1}, {1,2,3}, {3}, {3,4}
        let want = vec![
            vec![qi(1), qi(0), qi(0), qi(0)],
            vec![q(1, 3), qi(0), q(2, 9), q(4, 9)],
            vec![q(1, 4), q(1, 4), q(1, 6), q(1, 3)],
        ];
        let perm: Vec<usize> = [&[1][..], &[1, 2, 3], &[3], &[3, 4]].iter().map(|s| idx(&m, s)).collect();
        let got: Vec<Vec<Q>> = a.coeffs.iter().map(|r| perm.iter().map(|&s| r[s].clone()).collect()).collect();
        assert_eq!(got, want);
        let total: Q = mix.atoms.iter().map(|a| a.weight.clone()).sum();
        assert_eq!(total, qi(1));
        let three = [idx(&m, &[3]), idx(&m, &[3, 4]), idx(&m, &[1]), idx(&m, &[1, 2, 3])];
        let c = find(&three);
        assert_eq!(c.weight, q(2, 9));
        let got: Vec<Vec<Q>> = c.coeffs.iter().map(|r| perm.iter().map(|&s| r[s].clone()).collect()).collect();
        // the {3,4} column carries ⅔U₁ so that the U₁ row sums to one
        let want = vec![
            vec![qi(0), qi(0), q(1, 3), q(2, 3)],
            vec![q(1, 3), qi(0), q(2, 9), q(4, 9)],
            vec![q(1, 4), q(1, 4), q(1, 6), q(1, 3)],
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn four_server_limit_law() {
        let (m, ctx) = four();
        let law = limit_law(&ctx);
        assert!(law.forest);
        let col = |s: &[usize]| law.coeffs.iter().map(|r| r[idx(&m, s)].clone()).collect::<Vec<_>>();
        let mut rows: Vec<Vec<Q>> = law.coeffs.clone();
        rows.sort();
        // U1 + ¼U3, ¼U3, ⅓U2 + ⅙U3, ⅔U2 + ⅓U3 up to component labels
        let c1 = ctx.dag.component_of(idx(&m, &[1])).unwrap();
        let c2 = ctx.dag.component_of(idx(&m, &[3])).unwrap();
        let c3 = ctx.dag.component_of(idx(&m, &[1, 2, 3])).unwrap();
        let pick = |v: Vec<Q>| (v[c1].clone(), v[c2].clone(), v[c3].clone());
        assert_eq!(pick(col(&[1])), (qi(1), qi(0), q(1, 4)));
        assert_eq!(pick(col(&[1, 2, 3])), (qi(0), qi(0), q(1, 4)));
        assert_eq!(pick(col(&[3])), (qi(0), q(1, 3), q(1, 6)));
        assert_eq!(pick(col(&[3, 4])), (qi(0), q(2, 3), q(1, 3)));
        for r in &law.coeffs {
            assert_eq!(r.iter().cloned().sum::<Q>(), qi(1));
        }
    }

    #[test]
    fn n_model_limit_law() {
        let m = fixtures::n_model(qi(1));
        let ctx = LimitContext::new(&m).unwrap();
        let law = limit_law(&ctx);
        let (a, b) = (idx(&m, &[1, 2]), idx(&m, &[2]));
        let mut cols: Vec<(Q, Q)> = law.coeffs.iter().map(|r| (r[a].clone(), r[b].clone())).collect();
        cols.sort();
        assert_eq!(cols, vec![(qi(0), qi(1)), (q(1, 2), q(1, 2))]);
    }

    #[test]
    fn n_model_trajectory_coefficient() {
        // γ = (μ1 + δ, μ2 − δ) with the {2} row scaled by μ2/(μ2 − δ)
        let m = fixtures::n_model(qi(1));
        let (a, b) = (idx(&m, &[1, 2]), idx(&m, &[2]));
        let delta = q(1, 2);
        let mut gamma = vec![qi(0); 2];
        gamma[a] = qi(1) + &delta;
        gamma[b] = qi(1) - &delta;
        let traj = TrajectorySpec { gamma, epsilon: q(1, 10) };
        let ctx = LimitContext::with_trajectory(&m, Some(&traj)).unwrap();
        let law = limit_law(&ctx);
        let row = law.coeffs.iter().find(|r| r[a] == qi(0)).unwrap();
        assert_eq!(row[b], qi(1) / (qi(1) - &delta));
    }

    #[test]
    fn sigma_weights() {
        let (_, ctx) = four();
        let agg = sigma_aggregate(&ctx, &mixture_law(&ctx).unwrap()).unwrap();
        assert_eq!(agg.law.atoms.len(), 2);
        let mut w: Vec<Q> = agg.law.atoms.iter().map(|a| a.weight.clone()).collect();
        w.sort();
        assert_eq!(w, vec![q(1, 3), q(2, 3)]);
        let mut bh = agg.beta_hat.clone();
        bh.sort();
        assert_eq!(bh, vec![q(8, 3), q(16, 3)]);
        assert_eq!(agg.beta_hat_product, qi(8));
        assert_eq!(agg.beta_hat_total, qi(8));
        for (a, b) in agg.law.atoms.iter().zip(&agg.beta_hat) {
            assert_eq!(a.weight, b / &agg.beta_hat_total);
        }
    }

    #[test]
    fn laplace_values() {
        let (m, ctx) = four();
        let mut t = vec![qi(0); 4];
        assert_eq!(limiting_laplace(&ctx, &t).unwrap(), qi(1));
        t[idx(&m, &[1])] = qi(1);
        assert_eq!(limiting_laplace(&ctx, &t).unwrap(), q(2, 5));
        assert_eq!(mixture_law(&ctx).unwrap().laplace(&t), q(2, 5));
        let t2 = vec![q(1, 2); 4];
        assert_eq!(limiting_laplace(&ctx, &t2).unwrap(), qi(1) / (q(3, 2) * q(3, 2) * q(3, 2)));
    }

    #[test]
    fn nested_sums() {
        let m = fixtures::complete_partitioning(2, qi(1));
        let ctx = LimitContext::new(&m).unwrap();
        assert_eq!(nested_sum_identity(&ctx, &[qi(1), qi(1)]).unwrap(), (qi(1), qi(1)));
        let (_, ctx) = four();
        let (l, r) = nested_sum_identity(&ctx, &[q(1, 3), q(2, 7), q(5, 2)]).unwrap();
        assert_eq!(l, r);
    }

    #[test]
    fn shared_child_needs_the_mixture() {
        let m = fixtures::shared_child(qi(1));
        let ctx = LimitContext::new(&m).unwrap();
        assert!(!ctx.dag.is_forest());
        let mix = mixture_law(&ctx).unwrap();
        let law = limit_law(&ctx);
        let s13 = idx(&m, &[1, 3]);
        assert_eq!(mix.means()[s13], q(7, 12));
        assert_eq!(law.means()[s13], q(1, 2));
        let agg = sigma_aggregate(&ctx, &mix).unwrap();
        assert_ne!(agg.beta_hat_total, agg.beta_hat_product);
        for (a, b) in agg.law.atoms.iter().zip(&agg.beta_hat) {
            assert_eq!(a.weight, b / &agg.beta_hat_total);
        }
        let t: Vec<Q> = (0..m.n_types()).map(|s| q(s as i64 + 1, 3)).collect();
        assert_eq!(limit_transform(&ctx, &t).unwrap(), mix.laplace(&t));
        assert_ne!(limit_transform(&ctx, &t).unwrap(), law.laplace(&t));
    }

    #[test]
    fn suffixes_cancel() {
        let m = SystemModel::new(
            vec![qi(1), qi(1), qi(10)],
            vec![(vec![1, 2], q(1, 4)), (vec![2], q(1, 4)), (vec![3], q(1, 4)), (vec![2, 3], q(1, 4))],
            qi(1),
        )
        .unwrap();
        let m = m.with_lambda(crate::criticality::lambda_star_via_flow(&m)).unwrap();
        let ctx = LimitContext::new(&m).unwrap();
        let full = mixture_law_full(&ctx, &Caps::default()).unwrap();
        let collapsed = mixture_law(&ctx).unwrap();
        assert!(full.atoms.len() > collapsed.atoms.len());
        let a = sigma_aggregate(&ctx, &full).unwrap();
        let b = sigma_aggregate(&ctx, &collapsed).unwrap();
        let w = |x: &SigmaAggregation| x.law.atoms.iter().map(|a| (a.weight.clone(), a.coeffs.clone())).collect::<Vec<_>>();
        assert_eq!(w(&a), w(&b));
        let ts = vec![q(1, 3), q(2, 1), qi(0), q(1, 5)];
        assert_eq!(full.laplace(&ts), collapsed.laplace(&ts));
    }

    #[test]
    fn cos_limit_matches_coc_on_n_model() {
        let m = fixtures::n_model(qi(1));
        let ctx = LimitContext::new(&m).unwrap();
        for t in [[qi(0), qi(0)], [q(1, 2), qi(3)], [qi(2), q(1, 7)]] {
            let cos = limiting_laplace_cos_general(&ctx, &t, &Caps::default()).unwrap();
            assert_eq!(cos, limiting_laplace(&ctx, &t).unwrap());
        }
    }
}
