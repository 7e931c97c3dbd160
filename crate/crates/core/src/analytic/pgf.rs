//! Product-form generating functions of the pre-limit system.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use super::Caps;
use crate::criticality::lambda_star_via_flow;
use crate::error::{Error, Result};
use crate::model::{iter_bits, SystemModel};
use crate::scalar::{Scalar, Q};

/// `h(T, z) = ∏_j [Nλp_{T_j}z_{T_j}/μ(T,j)]·[1 − (Nλ/μ(T,j))Σ_{i≤j} p_{T_i}z_{T_i}]⁻¹`.
pub fn h_term<S: Scalar>(model: &SystemModel, t: &[usize], z: &[S]) -> Result<S> {
    let rate = S::from_q(&(model.n_q() * model.lambda()));
    let mut acc = S::one();
    let mut pz = S::zero();
    let mut servers = 0u64;
    for &s in t {
        let ps = S::from_q(model.p(s));
        let term = ps * z[s].clone();
        pz = pz + term.clone();
        servers |= model.types()[s].mask;
        let mu = S::from_q(&model.mu_of_servers(servers));
        let denom = S::one() - rate.clone() * pz.clone() / mu.clone();
        if denom.is_zero() {
            return Err(Error::Pole(format!("h(T, z) has a pole at prefix ending in type {}", model.types()[s].label())));
        }
        acc = acc * rate.clone() * term / mu / denom;
    }
    Ok(acc)
}

pub(crate) fn require_stable(model: &SystemModel) -> Result<Q> {
    let star = lambda_star_via_flow(model);
    if model.lambda() >= &star {
        return Err(Error::Domain(format!(
            "model is not stable: lambda = {} but the critical rate is {}",
            crate::scalar::fmt_q(model.lambda()),
            crate::scalar::fmt_q(&star)
        )));
    }
    Ok(star)
}

/// `μ(𝓣)` converted to `S` for every type mask below `2^m`.
pub(crate) fn mu_table<S: Scalar>(model: &SystemModel) -> Vec<S> {
    let m = model.n_types();
    (0..(1u64 << m)).map(|t| S::from_q(&model.mu_of_servers(model.servers_of(t)))).collect()
}

/// `Σ_T h(T, z)` over ordered vectors of distinct types from `allowed`,
/// the empty vector included.
pub fn unnormalized_f<S: Scalar>(model: &SystemModel, allowed: u64, z: &[S]) -> Result<S> {
    let mu = mu_table::<S>(model);
    f_with_table(model, allowed, z, &mu)
}

fn f_with_table<S: Scalar>(model: &SystemModel, allowed: u64, z: &[S], mu: &[S]) -> Result<S> {
    let rate = S::from_q(&(model.n_q() * model.lambda()));
    let pz: Vec<S> = (0..model.n_types()).map(|s| S::from_q(model.p(s)) * z[s].clone()).collect();
    #[allow(clippy::too_many_arguments)]
    fn rec<S: Scalar>(
        allowed: u64,
        used: u64,
        prod: S,
        sum_pz: S,
        rate: &S,
        pz: &[S],
        mu: &[S],
        labels: &SystemModel,
    ) -> Result<S> {
        let mut total = prod.clone();
        for s in iter_bits(allowed & !used) {
            let next = used | (1 << s);
            let spz = sum_pz.clone() + pz[s].clone();
            let m = mu[next as usize].clone();
            let denom = S::one() - rate.clone() * spz.clone() / m.clone();
            if denom.is_zero() {
                return Err(Error::Pole(format!("pole at a prefix ending in type {}", labels.types()[s].label())));
            }
            let p = prod.clone() * rate.clone() * pz[s].clone() / m / denom;
            total = total + rec(allowed, next, p, spz, rate, pz, mu, labels)?;
        }
        Ok(total)
    }
    rec(allowed, 0, S::one(), S::zero(), &rate, &pz, mu, model)
}

/// Joint PGF of the numbers of jobs under cancel-on-completion.
pub fn pgf_coc<S: Scalar>(model: &SystemModel, z: &[S], caps: &Caps) -> Result<S> {
    check_z(model, z)?;
    caps.check_types(model)?;
    require_stable(model)?;
    let mu = mu_table::<S>(model);
    let ones = vec![S::one(); model.n_types()];
    let all = model.all_types();
    Ok(f_with_table(model, all, z, &mu)? / f_with_table(model, all, &ones, &mu)?)
}

/// For every server set `U`, the sum over orderings `u` of `U` of
/// `∏_l μ_{u_l} / λ_{𝓒(u_1..u_l)}`, where `λ_𝓒` is the arrival rate (at
/// per-server rate `lambda`) of the types touching the first `l` servers.
///
/// The last server of an ordering closes the product, which gives the
/// recursion `W(U) = Σ_{n∈U} W(U∖n)·μ_n/λ_𝓒(U)`.
pub fn idle_weight_sum<S: Scalar>(model: &SystemModel, lambda: &Q) -> Result<Vec<S>> {
    let n = model.n_servers();
    let rate = model.n_q() * lambda;
    let mut w: Vec<S> = vec![S::zero(); 1 << n];
    w[0] = S::one();
    for u in 1..(1u64 << n) {
        let lam_c = &rate * model.p_of(model.types_touching(u));
        if crate::criticality::is_zero(&lam_c) {
            return Err(Error::Domain(format!(
                "server {} has no compatible job type, so idle-server weights diverge",
                iter_bits(u).find(|&s| model.types_touching(1 << s) == 0).map_or(0, |s| s + 1)
            )));
        }
        let lam_c = S::from_q(&lam_c);
        let mut acc = S::zero();
        for srv in iter_bits(u) {
            acc = acc + w[(u & !(1 << srv)) as usize].clone() * S::from_q(&model.mu()[srv]);
        }
        w[u as usize] = acc / lam_c;
    }
    Ok(w)
}

/// Joint PGF of the numbers of waiting jobs under cancel-on-start.
pub fn pgf_cos<S: Scalar>(model: &SystemModel, z: &[S], caps: &Caps) -> Result<S> {
    check_z(model, z)?;
    caps.check_types(model)?;
    caps.check_servers(model)?;
    require_stable(model)?;
    let mu = mu_table::<S>(model);
    let w = idle_weight_sum::<S>(model, model.lambda())?;
    let ones = vec![S::one(); model.n_types()];
    let mut memo: HashMap<u64, (S, S)> = HashMap::new();
    let (mut num, mut den) = (S::zero(), S::zero());
    for u in 0..(1u64 << model.n_servers()) {
        let allowed = model.all_types() & !model.types_touching(u);
        if let Entry::Vacant(e) = memo.entry(allowed) {
            e.insert((f_with_table(model, allowed, z, &mu)?, f_with_table(model, allowed, &ones, &mu)?));
        }
        let (fz, f1) = &memo[&allowed];
        num = num + w[u as usize].clone() * fz.clone();
        den = den + w[u as usize].clone() * f1.clone();
    }
    Ok(num / den)
}

fn check_z<S: Scalar>(model: &SystemModel, z: &[S]) -> Result<()> {
    if z.len() != model.n_types() {
        return Err(Error::Validation(format!("z must have {} entries", model.n_types())));
    }
    if z.iter().any(|x| x.abs_f64() > 1.0 + 1e-15) {
        return Err(Error::Domain("PGF arguments must satisfy |z| <= 1".into()));
    }
    Ok(())
}
