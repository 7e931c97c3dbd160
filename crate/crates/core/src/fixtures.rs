//! Named reference systems and random model generators.

use rand::Rng;

use crate::criticality::lambda_star_via_flow;
use crate::model::SystemModel;
use crate::scalar::{q, qi, Q};

/// Two unit-speed servers; type `{1,2}` and type `{2}`, each with fraction ½.
pub fn n_model(lambda: Q) -> SystemModel {
    SystemModel::new(vec![qi(1), qi(1)], vec![(vec![1, 2], q(1, 2)), (vec![2], q(1, 2))], lambda).expect("valid")
}

/// Four unit-speed servers with types `{1}`, `{1,2,3}`, `{3}`, `{3,4}` and
/// fractions ¼, ¼, ⅙, ⅓. Critical at λ = 1 with three nested bottlenecks.
pub fn four_server(lambda: Q) -> SystemModel {
    SystemModel::new(
        vec![qi(1); 4],
        vec![(vec![1], q(1, 4)), (vec![1, 2, 3], q(1, 4)), (vec![3], q(1, 6)), (vec![3, 4], q(1, 3))],
        lambda,
    )
    .expect("valid")
}

/// One server, one type: the M/M/1 queue.
pub fn mm1(lambda: Q, mu: Q) -> SystemModel {
    SystemModel::new(vec![mu], vec![(vec![1], qi(1))], lambda).expect("valid")
}

/// Every type has a dedicated server; all equal.
pub fn complete_partitioning(n: usize, lambda: Q) -> SystemModel {
    let types = (1..=n).map(|s| (vec![s], q(1, n as i64))).collect();
    SystemModel::new(vec![qi(1); n], types, lambda).expect("valid")
}

/// Two types that may both use both servers.
pub fn complete_sharing(lambda: Q) -> SystemModel {
    SystemModel::new(vec![qi(1), qi(1)], vec![(vec![1, 2], q(2, 3)), (vec![1], q(1, 3))], lambda).expect("valid")
}

/// Three unit servers and the three pairs, evenly loaded.
pub fn triangle(lambda: Q) -> SystemModel {
    SystemModel::new(
        vec![qi(1); 3],
        vec![(vec![1, 2], q(1, 3)), (vec![2, 3], q(1, 3)), (vec![1, 3], q(1, 3))],
        lambda,
    )
    .expect("valid")
}

/// Types `{1}`, `{1,2}`, `{1,3}` on unit servers: one bottleneck component
/// below two others, so the component graph is not a forest.
pub fn shared_child(lambda: Q) -> SystemModel {
    SystemModel::new(
        vec![qi(1); 3],
        vec![(vec![1], q(1, 3)), (vec![1, 2], q(1, 3)), (vec![1, 3], q(1, 3))],
        lambda,
    )
    .expect("valid")
}

/// Random model with at most `max_servers` servers and `max_types` types.
///
/// Half of the draws plant exact ties: each server spreads its capacity over a
/// random subset of its compatible types and those flows define the arrival
/// fractions, which often produces several nested bottlenecks. The other half
/// use random integer weights. The arrival rate is `load · λ*`.
pub fn random_model<R: Rng>(rng: &mut R, max_servers: usize, max_types: usize, load: Q) -> SystemModel {
    loop {
        let n = rng.random_range(1..=max_servers);
        let m = rng.random_range(1..=max_types.min((1usize << n) - 1));
        let mut masks: Vec<u64> = Vec::new();
        let mut guard = 0;
        while masks.len() < m && guard < 1000 {
            guard += 1;
            let sparse = rng.random_bool(0.6);
            let mut mask = 0u64;
            for s in 0..n {
                let pr = if sparse { 1.0 / n as f64 } else { 0.5 };
                if rng.random_bool(pr) {
                    mask |= 1 << s;
                }
            }
            if mask == 0 {
                mask = 1 << rng.random_range(0..n);
            }
            if !masks.contains(&mask) {
                masks.push(mask);
            }
        }
        let mu: Vec<Q> = (0..n).map(|_| qi(rng.random_range(1..=3))).collect();
        let weights: Vec<Q> = if rng.random_bool(0.5) {
            let mut w = vec![qi(0); masks.len()];
            for (s, mu_s) in mu.iter().enumerate() {
                let compat: Vec<usize> = (0..masks.len()).filter(|&i| masks[i] & (1 << s) != 0).collect();
                if compat.is_empty() {
                    continue;
                }
                let k = rng.random_range(1..=compat.len());
                let mut chosen = compat.clone();
                while chosen.len() > k {
                    let drop = rng.random_range(0..chosen.len());
                    chosen.remove(drop);
                }
                let shares: Vec<i64> = chosen.iter().map(|_| rng.random_range(1..=3)).collect();
                let total: i64 = shares.iter().sum();
                for (i, sh) in chosen.iter().zip(shares) {
                    w[*i] += mu_s * q(sh, total);
                }
            }
            if w.iter().any(|x| *x == qi(0)) {
                continue;
            }
            w
        } else {
            (0..masks.len()).map(|_| qi(rng.random_range(1..=6))).collect()
        };
        let total: Q = weights.iter().cloned().sum();
        let types = masks
            .iter()
            .zip(&weights)
            .map(|(mask, w)| ((0..n).filter(|s| mask & (1 << s) != 0).map(|s| s + 1).collect(), w / &total))
            .collect();
        let base = SystemModel::new(mu, types, qi(1)).expect("generated model is valid");
        let lambda = lambda_star_via_flow(&base) * &load;
        return base.with_lambda(lambda).expect("positive");
    }
}

/// Model whose component graph is a planted random DAG on `k` components.
///
/// Component `i` is one server and one type whose load exactly fills that
/// server; the type may also use the servers of the components it points to.
/// With `forest` set, every component is pointed to by at most one other.
/// Arcs always run from a higher to a lower index. Speeds are random small
/// integers and the arrival rate is `load · λ*`.
pub fn random_dag_model<R: Rng>(rng: &mut R, k: usize, forest: bool, load: Q) -> SystemModel {
    assert!((1..=20).contains(&k));
    let mut masks: Vec<Vec<usize>> = (1..=k).map(|i| vec![i]).collect();
    for j in 0..k {
        if forest {
            if j + 1 < k && rng.random_bool(0.7) {
                let i = rng.random_range(j + 1..k);
                masks[i].push(j + 1);
            }
        } else {
            for mask in masks.iter_mut().skip(j + 1) {
                if rng.random_bool(0.5) {
                    mask.push(j + 1);
                }
            }
        }
    }
    let mu: Vec<Q> = (0..k).map(|_| qi(rng.random_range(1..=4))).collect();
    let total: Q = mu.iter().cloned().sum();
    let types = masks
        .into_iter()
        .zip(&mu)
        .map(|(mut m, mu_i)| {
            m.sort_unstable();
            (m, mu_i / &total)
        })
        .collect();
    let n = Q::from_integer((k as i64).into());
    SystemModel::new(mu, types, total / n * load).expect("generated model is valid")
}
