//! Monte-Carlo draws from limit laws.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::{LimitLaw, MixtureLaw};
use crate::error::{Error, Result};
use crate::scalar::q_to_f64;

/// Float copy of a (mixture) law ready for repeated sampling.
#[derive(Clone, Debug)]
pub struct LawSampler {
    atoms: Vec<Vec<Vec<f64>>>,
    pick: Option<WeightedIndex<f64>>,
    width: usize,
}

fn to_f64(coeffs: &[Vec<crate::scalar::Q>]) -> Vec<Vec<f64>> {
    coeffs.iter().map(|r| r.iter().map(q_to_f64).collect()).collect()
}

impl LawSampler {
    pub fn from_limit(law: &LimitLaw) -> Self {
        let width = law.coeffs.first().map_or(0, Vec::len);
        LawSampler { atoms: vec![to_f64(&law.coeffs)], pick: None, width }
    }

    pub fn from_mixture(law: &MixtureLaw) -> Result<Self> {
        let weights: Vec<f64> = law.atoms.iter().map(|a| q_to_f64(&a.weight)).collect();
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::Domain(format!("mixture weights: {e}")))?;
        let width = law.atoms[0].coeffs.first().map_or(0, Vec::len);
        Ok(LawSampler { atoms: law.atoms.iter().map(|a| to_f64(&a.coeffs)).collect(), pick: Some(pick), width })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let atom = match &self.pick {
            Some(p) => &self.atoms[p.sample(rng)],
            None => &self.atoms[0],
        };
        let mut out = vec![0.0; self.width];
        for row in atom {
            let u: f64 = Exp1.sample(rng);
            for (o, c) in out.iter_mut().zip(row) {
                *o += c * u;
            }
        }
        out
    }

    pub fn sample_n(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}

pub fn sample_limit(law: &LimitLaw, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Validation("sample count must be at least 1".into()));
    }
    Ok(LawSampler::from_limit(law).sample_n(n, seed))
}

pub fn sample_mixture(law: &MixtureLaw, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Validation("sample count must be at least 1".into()));
    }
    Ok(LawSampler::from_mixture(law)?.sample_n(n, seed))
}
