//! Pre-limit generating functions and heavy-traffic limit objects.

mod enumerate;
mod limit;
mod pgf;
mod sample;

pub use enumerate::{
    enumerate_all, enumerate_k_critical, for_each_vector, for_each_server_vector, nk_size, OrderedTypeVector,
};
pub use limit::{
    beta_hat, beta_weight, limit_law, limit_transform, limiting_laplace, limiting_laplace_cos_general, mixture_law,
    mixture_law_full,
    nested_sum_identity, p_star,
    sigma_aggregate, LimitLaw, MixtureAtom, MixtureLaw, SigmaAggregation,
};
pub use pgf::{h_term, idle_weight_sum, pgf_coc, pgf_cos, unnormalized_f};
pub(crate) use pgf::require_stable;
pub use sample::{sample_limit, sample_mixture, LawSampler};

use crate::criticality::{criticality_via_construction, ComponentDag, CriticalityReport};
use crate::error::{Error, Result};
use crate::model::{default_trajectory, SystemModel, TrajectorySpec};
use crate::scalar::Q;

/// Size guards for enumeration-heavy routines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Caps {
    /// Exhaustive subset scan over job types.
    pub brute_force_types: usize,
    /// Full enumeration of ordered type vectors.
    pub enumeration_types: usize,
    /// Idle-server vectors for cancel-on-start quantities.
    pub cos_servers: usize,
    /// Highest moment order.
    pub moment_order: u32,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { brute_force_types: 20, enumeration_types: 8, cos_servers: 8, moment_order: 12 }
    }
}

impl Caps {
    pub fn check_types(&self, model: &SystemModel) -> Result<()> {
        if model.n_types() > self.enumeration_types {
            return Err(Error::Cap(format!(
                "{} job types exceed the ordered-vector enumeration cap of {}",
                model.n_types(),
                self.enumeration_types
            )));
        }
        Ok(())
    }

    pub fn check_servers(&self, model: &SystemModel) -> Result<()> {
        if model.n_servers() > self.cos_servers {
            return Err(Error::Cap(format!(
                "{} servers exceed the idle-vector enumeration cap of {}",
                model.n_servers(),
                self.cos_servers
            )));
        }
        Ok(())
    }
}

/// Everything the limit constructions need, computed once.
#[derive(Clone, Debug)]
pub struct LimitContext {
    pub model: SystemModel,
    pub report: CriticalityReport,
    pub dag: ComponentDag,
    /// `γ_S` per type; `Nλ*p_S` unless a trajectory is supplied.
    pub gamma: Vec<Q>,
    /// `Nλ*`.
    pub rate: Q,
}

impl LimitContext {
    /// Uses the model's own trajectory when present, else the default one.
    pub fn new(model: &SystemModel) -> Result<Self> {
        Self::with_trajectory(model, model.trajectory())
    }

    pub fn with_trajectory(model: &SystemModel, traj: Option<&TrajectorySpec>) -> Result<Self> {
        let (report, dag) = criticality_via_construction(model)?;
        let rate = model.n_q() * &report.lambda_star;
        let gamma = match traj {
            Some(t) => {
                if t.gamma.len() != model.n_types() {
                    return Err(Error::Validation("trajectory.gamma must give one value per type".into()));
                }
                t.gamma.clone()
            }
            None => default_trajectory(model, &report.lambda_star, Q::from_integer(0.into())).gamma,
        };
        Ok(LimitContext { model: model.clone(), report, dag, gamma, rate })
    }

    pub fn k(&self) -> usize {
        self.dag.k()
    }

    /// `γ` summed over a type mask.
    pub fn gamma_of(&self, types: u64) -> Q {
        crate::model::iter_bits(types).map(|s| self.gamma[s].clone()).sum()
    }

    /// Whether every `γ_S` equals `Nλ*p_S`.
    pub fn is_default_direction(&self) -> bool {
        self.gamma.iter().enumerate().all(|(s, g)| *g == &self.rate * self.model.p(s))
    }
}

/// Which redundancy policy a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    /// Cancel-on-completion: numbers of jobs in the system.
    Coc,
    /// Cancel-on-start: numbers of waiting jobs.
    Cos,
}

impl std::str::FromStr for Discipline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coc" => Ok(Discipline::Coc),
            "cos" => Ok(Discipline::Cos),
            other => Err(Error::Validation(format!("unknown discipline {other:?}; expected coc or cos"))),
        }
    }
}
