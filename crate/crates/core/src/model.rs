//! System description: servers, job types, arrival rate and trajectories.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scalar::{fmt_q, parse_q, qi, rationalize, Q};

/// Maximum number of servers and of job types (bitmask width).
pub const MAX_WIDTH: usize = 64;

/// A job type: the set of servers it may use and its arrival fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct JobType {
    /// Zero-based server indices, sorted.
    pub servers: Vec<usize>,
    /// Bitmask over server indices.
    pub mask: u64,
    pub p: Q,
}

impl JobType {
    /// One-based server labels as written in model files.
    pub fn label(&self) -> String {
        let ids: Vec<String> = self.servers.iter().map(|s| (s + 1).to_string()).collect();
        format!("{{{}}}", ids.join(","))
    }
}

/// Heavy-traffic trajectory `λ_S^ε = Nλ*p_S − εγ_S`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySpec {
    /// One positive `γ_S` per job type, in type order.
    pub gamma: Vec<Q>,
    pub epsilon: Q,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemModel {
    mu: Vec<Q>,
    lambda: Q,
    types: Vec<JobType>,
    trajectory: Option<TrajectorySpec>,
    exact_input: bool,
}

impl SystemModel {
    /// Builds and validates a model. Server labels in `types` are one-based.
    pub fn new(mu: Vec<Q>, types: Vec<(Vec<usize>, Q)>, lambda: Q) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::Validation("model has no servers".into()));
        }
        if n > MAX_WIDTH {
            return Err(Error::Validation(format!("at most {MAX_WIDTH} servers supported")));
        }
        if types.is_empty() {
            return Err(Error::Validation("model has no job types".into()));
        }
        if types.len() > MAX_WIDTH {
            return Err(Error::Validation(format!("at most {MAX_WIDTH} job types supported")));
        }
        for (i, m) in mu.iter().enumerate() {
            if !m.is_positive() {
                return Err(Error::Validation(format!("servers[{i}].mu must be positive, got {}", fmt_q(m))));
            }
        }
        if !lambda.is_positive() {
            return Err(Error::Validation("lambda must be positive".into()));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(types.len());
        for (i, (servers, p)) in types.into_iter().enumerate() {
            if servers.is_empty() {
                return Err(Error::Validation(format!("types[{i}].servers is empty")));
            }
            let mut idx = Vec::with_capacity(servers.len());
            for s in servers {
                if s == 0 || s > n {
                    return Err(Error::Validation(format!("types[{i}] references unknown server {s}")));
                }
                idx.push(s - 1);
            }
            idx.sort_unstable();
            if idx.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Validation(format!("types[{i}].servers lists a server twice")));
            }
            let mask = idx.iter().fold(0u64, |m, &s| m | (1u64 << s));
            if !seen.insert(mask) {
                return Err(Error::Validation(format!("types[{i}] duplicates an earlier server subset")));
            }
            if !p.is_positive() {
                return Err(Error::Validation(format!("types[{i}].p must be positive")));
            }
            out.push(JobType { servers: idx, mask, p });
        }
        let total: Q = out.iter().map(|t| t.p.clone()).sum();
        if total != Q::one() {
            return Err(Error::Validation(format!("type fractions sum to {} instead of 1", fmt_q(&total))));
        }
        Ok(SystemModel { mu, lambda, types: out, trajectory: None, exact_input: true })
    }

    /// Attaches a trajectory after checking its shape.
    pub fn with_trajectory(mut self, traj: TrajectorySpec) -> Result<Self> {
        if traj.gamma.len() != self.types.len() {
            return Err(Error::Validation("trajectory.gamma must give one value per type".into()));
        }
        if let Some(i) = traj.gamma.iter().position(|g| !g.is_positive()) {
            return Err(Error::Validation(format!("trajectory.gamma for type {} must be positive", self.types[i].label())));
        }
        if !traj.epsilon.is_positive() {
            return Err(Error::Validation("trajectory.epsilon must be positive".into()));
        }
        self.trajectory = Some(traj);
        Ok(self)
    }

    pub fn with_lambda(&self, lambda: Q) -> Result<Self> {
        if !lambda.is_positive() {
            return Err(Error::Validation("lambda must be positive".into()));
        }
        let mut m = self.clone();
        m.lambda = lambda;
        Ok(m)
    }

    pub fn n_servers(&self) -> usize {
        self.mu.len()
    }
    pub fn n_types(&self) -> usize {
        self.types.len()
    }
    pub fn mu(&self) -> &[Q] {
        &self.mu
    }
    pub fn lambda(&self) -> &Q {
        &self.lambda
    }
    pub fn types(&self) -> &[JobType] {
        &self.types
    }
    pub fn p(&self, s: usize) -> &Q {
        &self.types[s].p
    }
    pub fn trajectory(&self) -> Option<&TrajectorySpec> {
        self.trajectory.as_ref()
    }
    /// False when some number in the source file was a bare float.
    pub fn exact_input(&self) -> bool {
        self.exact_input
    }

    /// `N` as a rational.
    pub fn n_q(&self) -> Q {
        qi(self.mu.len() as i64)
    }

    /// Average speed `(1/N)Σμ_n`, derived on demand.
    pub fn mu_bar(&self) -> Q {
        self.mu.iter().cloned().sum::<Q>() / self.n_q()
    }

    /// Arrival rate `λ_S = Nλp_S` of type `s`.
    pub fn arrival_rate(&self, s: usize) -> Q {
        self.n_q() * &self.lambda * &self.types[s].p
    }

    /// Mask of all types.
    pub fn all_types(&self) -> u64 {
        full_mask(self.types.len())
    }

    /// Mask of all servers.
    pub fn all_servers(&self) -> u64 {
        full_mask(self.mu.len())
    }

    /// Servers compatible with at least one type in the type mask.
    pub fn servers_of(&self, types: u64) -> u64 {
        iter_bits(types).fold(0, |m, s| m | self.types[s].mask)
    }

    /// Types compatible with at least one server in the server mask.
    pub fn types_touching(&self, servers: u64) -> u64 {
        self.types
            .iter()
            .enumerate()
            .filter(|(_, t)| t.mask & servers != 0)
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    pub fn mu_of_servers(&self, servers: u64) -> Q {
        iter_bits(servers).map(|n| self.mu[n].clone()).sum()
    }

    pub fn p_of(&self, types: u64) -> Q {
        iter_bits(types).map(|s| self.types[s].p.clone()).sum()
    }

    /// `(p(𝓣), μ(𝓣))` for a nonempty type mask.
    pub fn aggregate_mask(&self, types: u64) -> Result<(Q, Q)> {
        if types == 0 {
            return Err(Error::Domain("aggregate over an empty set of job types".into()));
        }
        if types & !self.all_types() != 0 {
            return Err(Error::Domain("type set references unknown types".into()));
        }
        Ok((self.p_of(types), self.mu_of_servers(self.servers_of(types))))
    }

    /// `(p(𝓣), μ(𝓣))` for a list of type indices.
    pub fn aggregate(&self, types: &[usize]) -> Result<(Q, Q)> {
        let mut mask = 0u64;
        for &s in types {
            if s >= self.types.len() {
                return Err(Error::Domain(format!("unknown job type index {s}")));
            }
            mask |= 1 << s;
        }
        self.aggregate_mask(mask)
    }

    /// Index of the type whose server set equals `servers` (one-based labels).
    pub fn type_index(&self, servers: &[usize]) -> Option<usize> {
        let mask = servers.iter().fold(0u64, |m, &s| if s == 0 { m } else { m | (1 << (s - 1)) });
        self.types.iter().position(|t| t.mask == mask)
    }

    /// A copy of the model whose arrival process has the given per-type rates.
    pub fn with_rates(&self, rates: &[Q]) -> Result<Self> {
        if rates.len() != self.types.len() {
            return Err(Error::Validation("one rate per type required".into()));
        }
        let total: Q = rates.iter().cloned().sum();
        if !total.is_positive() || rates.iter().any(|r| !r.is_positive()) {
            return Err(Error::Domain("arrival rates must be positive".into()));
        }
        let mut m = self.clone();
        for (t, r) in m.types.iter_mut().zip(rates) {
            t.p = r / &total;
        }
        m.lambda = total / self.n_q();
        Ok(m)
    }

    /// Parses the JSON model format.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Validation(format!("model file: {e}")))?;
        file.into_model()
    }

    /// Serializes back to the JSON model format using rational strings.
    pub fn to_json(&self) -> serde_json::Value {
        let servers: Vec<_> = self
            .mu
            .iter()
            .enumerate()
            .map(|(i, m)| serde_json::json!({"id": i + 1, "mu": fmt_q(m)}))
            .collect();
        let types: Vec<_> = self
            .types
            .iter()
            .map(|t| {
                let ids: Vec<usize> = t.servers.iter().map(|s| s + 1).collect();
                serde_json::json!({"servers": ids, "p": fmt_q(&t.p)})
            })
            .collect();
        let mut v = serde_json::json!({"servers": servers, "types": types, "lambda": fmt_q(&self.lambda)});
        if let Some(tr) = &self.trajectory {
            let gamma: BTreeMap<String, String> = self
                .types
                .iter()
                .zip(&tr.gamma)
                .map(|(t, g)| (server_key(t), fmt_q(g)))
                .collect();
            v["trajectory"] = serde_json::json!({"gamma": gamma, "epsilon": fmt_q(&tr.epsilon)});
        }
        v
    }
}

/// Effective arrival rates `λ_S^ε = Nλ*p_S − εγ_S` along a trajectory.
pub fn effective_rates(model: &SystemModel, lambda_star: &Q, traj: &TrajectorySpec) -> Result<Vec<Q>> {
    if traj.gamma.len() != model.n_types() {
        return Err(Error::Validation("trajectory.gamma must give one value per type".into()));
    }
    if traj.epsilon.is_negative() {
        return Err(Error::Domain("epsilon must be nonnegative".into()));
    }
    let base = model.n_q() * lambda_star;
    let mut out = Vec::with_capacity(model.n_types());
    for (s, g) in traj.gamma.iter().enumerate() {
        let r = &base * model.p(s) - &traj.epsilon * g;
        if !r.is_positive() {
            return Err(Error::Domain(format!(
                "effective rate of type {} is {}, not positive",
                model.types()[s].label(),
                fmt_q(&r)
            )));
        }
        out.push(r);
    }
    Ok(out)
}

/// The trajectory `γ_S = Nλ*p_S`, along which `ε = 1 − λ/λ*`.
pub fn default_trajectory(model: &SystemModel, lambda_star: &Q, epsilon: Q) -> TrajectorySpec {
    let base = model.n_q() * lambda_star;
    TrajectorySpec { gamma: model.types().iter().map(|t| &base * &t.p).collect(), epsilon }
}

pub fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Indices of the set bits, ascending.
pub fn iter_bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

fn server_key(t: &JobType) -> String {
    t.servers.iter().map(|s| (s + 1).to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Num {
    Text(String),
    Float(f64),
}

impl Num {
    fn value(&self, field: &str, exact: &mut bool) -> Result<Q> {
        match self {
            Num::Text(s) => parse_q(s).map_err(|e| Error::Validation(format!("{field}: {e}"))),
            Num::Float(x) => {
                *exact = false;
                rationalize(*x).map_err(|e| Error::Validation(format!("{field}: {e}")))
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ServerEntry {
    id: usize,
    mu: Num,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TypeEntry {
    servers: Vec<usize>,
    p: Num,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryEntry {
    gamma: BTreeMap<String, Num>,
    epsilon: Num,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    servers: Vec<ServerEntry>,
    types: Vec<TypeEntry>,
    lambda: Num,
    trajectory: Option<TrajectoryEntry>,
}

impl ModelFile {
    fn into_model(self) -> Result<SystemModel> {
        let mut exact = true;
        let n = self.servers.len();
        let mut mu = vec![None; n];
        for (i, s) in self.servers.iter().enumerate() {
            if s.id == 0 || s.id > n {
                return Err(Error::Validation(format!("servers[{i}].id must lie in 1..={n}")));
            }
            if mu[s.id - 1].is_some() {
                return Err(Error::Validation(format!("servers[{i}].id {} is repeated", s.id)));
            }
            mu[s.id - 1] = Some(s.mu.value(&format!("servers[{i}].mu"), &mut exact)?);
        }
        let mu: Vec<Q> = mu.into_iter().map(|m| m.expect("every id filled")).collect();
        let mut types = Vec::with_capacity(self.types.len());
        for (i, t) in self.types.iter().enumerate() {
            types.push((t.servers.clone(), t.p.value(&format!("types[{i}].p"), &mut exact)?));
        }
        if !exact {
            // Float fractions: accept a sum within 1e-12 of one and renormalize.
            let total: Q = types.iter().map(|(_, p)| p.clone()).sum();
            let dev = crate::scalar::q_to_f64(&(total.clone() - Q::one())).abs();
            if dev > 1e-12 {
                return Err(Error::Validation(format!("type fractions sum to {} instead of 1", fmt_q(&total))));
            }
            if !total.is_zero() {
                for (_, p) in types.iter_mut() {
                    *p = &*p / &total;
                }
            }
        }
        let lambda = self.lambda.value("lambda", &mut exact)?;
        let mut model = SystemModel::new(mu, types, lambda)?;
        if let Some(tr) = self.trajectory {
            let mut gamma = vec![None; model.n_types()];
            for (key, g) in &tr.gamma {
                let ids: Vec<usize> = key
                    .trim_matches(|c| c == '{' || c == '}' || c == '[' || c == ']')
                    .split(',')
                    .map(|x| x.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Validation(format!("trajectory.gamma key {key:?} is not a server list")))?;
                let idx = model
                    .type_index(&ids)
                    .ok_or_else(|| Error::Validation(format!("trajectory.gamma key {key:?} names no job type")))?;
                gamma[idx] = Some(g.value(&format!("trajectory.gamma[{key}]"), &mut exact)?);
            }
            let gamma = gamma
                .into_iter()
                .enumerate()
                .map(|(i, g)| g.ok_or_else(|| Error::Validation(format!("trajectory.gamma misses type {}", model.types()[i].label()))))
                .collect::<Result<Vec<_>>>()?;
            let epsilon = tr.epsilon.value("trajectory.epsilon", &mut exact)?;
            model = model.with_trajectory(TrajectorySpec { gamma, epsilon })?;
        }
        model.exact_input = exact;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::scalar::q;

    #[test]
    fn aggregates_match_hand_values() {
        let m = fixtures::n_model(q(9, 10));
        let two = m.type_index(&[2]).unwrap();
        assert_eq!(m.aggregate(&[two]).unwrap(), (q(1, 2), qi(1)));
        assert_eq!(m.aggregate_mask(m.all_types()).unwrap(), (qi(1), qi(2)));
        let f = fixtures::four_server(qi(1));
        let t3 = f.type_index(&[3]).unwrap();
        let t34 = f.type_index(&[3, 4]).unwrap();
        assert_eq!(f.aggregate(&[t3, t34]).unwrap(), (q(1, 2), qi(2)));
        assert!(f.aggregate(&[]).is_err());
    }

    #[test]
    fn effective_rates_along_trajectories() {
        let m = fixtures::n_model(q(9, 10));
        let one = qi(1);
        let delta = |d: Q| TrajectorySpec { gamma: vec![qi(1) + d.clone(), qi(1) - d], epsilon: q(1, 10) };
        assert_eq!(effective_rates(&m, &one, &delta(qi(0))).unwrap(), vec![q(9, 10), q(9, 10)]);
        assert_eq!(effective_rates(&m, &one, &delta(q(1, 2))).unwrap(), vec![q(17, 20), q(19, 20)]);
        let zero = TrajectorySpec { gamma: vec![qi(1), qi(1)], epsilon: qi(0) };
        assert_eq!(effective_rates(&m, &one, &zero).unwrap(), vec![qi(1), qi(1)]);
        let too_far = TrajectorySpec { gamma: vec![qi(1), qi(1)], epsilon: qi(2) };
        let err = effective_rates(&m, &one, &too_far).unwrap_err().to_string();
        assert!(err.contains("{1,2}"), "{err}");
    }

    #[test]
    fn default_trajectory_is_proportional_scaling() {
        let m = fixtures::four_server(q(1, 2));
        let star = qi(1);
        let eps = q(3, 100);
        let rates = effective_rates(&m, &star, &default_trajectory(&m, &star, eps.clone())).unwrap();
        let scaled = m.with_lambda(qi(1) - eps).unwrap();
        for (s, r) in rates.iter().enumerate() {
            assert_eq!(*r, scaled.arrival_rate(s));
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let text = r#"{"servers":[{"id":2,"mu":"1"},{"id":1,"mu":"1"}],
            "types":[{"servers":[2,1],"p":"1/2"},{"servers":[2],"p":"1/2"}],
            "lambda":"0.45","trajectory":{"gamma":{"1,2":"1","{2}":"1"},"epsilon":"1/50"}}"#;
        let m = SystemModel::from_json(text).unwrap();
        assert_eq!(m.types()[0].servers, vec![0, 1]);
        assert_eq!(*m.lambda(), q(9, 20));
        assert!(m.exact_input());
        assert_eq!(m.trajectory().unwrap().epsilon, q(1, 50));
        let again = SystemModel::from_json(&m.to_json().to_string()).unwrap();
        assert_eq!(again, m);

        let floats = r#"{"servers":[{"id":1,"mu":1.0}],"types":[{"servers":[1],"p":1.0}],"lambda":0.5}"#;
        let f = SystemModel::from_json(floats).unwrap();
        assert!(!f.exact_input());
        assert_eq!(*f.lambda(), q(1, 2));

        let dup = r#"{"servers":[{"id":1,"mu":"1"},{"id":2,"mu":"1"}],
            "types":[{"servers":[1,2],"p":"1/2"},{"servers":[2,1],"p":"1/2"}],"lambda":"1/2"}"#;
        assert!(matches!(SystemModel::from_json(dup), Err(Error::Validation(_))));
        let unknown = r#"{"servers":[{"id":1,"mu":"1"}],"types":[{"servers":[1],"p":"1"}],"lambda":"1/2","extra":1}"#;
        assert!(matches!(SystemModel::from_json(unknown), Err(Error::Validation(_))));
        let bad_sum = r#"{"servers":[{"id":1,"mu":"1"}],"types":[{"servers":[1],"p":"1/2"}],"lambda":"1/2"}"#;
        assert!(SystemModel::from_json(bad_sum).is_err());
    }

    #[test]
    fn mu_bar_is_derived() {
        let m = SystemModel::new(vec![qi(1), qi(3)], vec![(vec![1, 2], qi(1))], qi(1)).unwrap();
        assert_eq!(m.mu_bar(), qi(2));
    }
}
