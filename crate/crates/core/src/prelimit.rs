//! Pre-limit configuration probabilities, geometric segment laws and the
//! matrix representation of the queue-length vector.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Geometric};
use rayon::prelude::*;

use crate::analytic::{for_each_vector, h_term, idle_weight_sum, Caps, Discipline, LimitContext, OrderedTypeVector};
use crate::error::{Error, Result};
use crate::model::{iter_bits, SystemModel};
use crate::scalar::{q_to_f64, qi, Q};

/// Parameters of the geometric laws attached to an ordered type vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentLaw {
    pub entries: Vec<usize>,
    /// `p^{T,j} = Nλp(T,j)/μ(T,j)`.
    pub segment_params: Vec<Q>,
    /// `type_params[j][i] = p^{T,j,i}` for `i ≤ j`.
    pub type_params: Vec<Vec<Q>>,
    /// `split[j][i] = p_{T_i}/p(T,j)`.
    pub split: Vec<Vec<Q>>,
}

pub fn segment_law(model: &SystemModel, t: &[usize]) -> Result<SegmentLaw> {
    let rate = model.n_q() * model.lambda();
    let mut segment_params = Vec::with_capacity(t.len());
    let mut type_params = Vec::with_capacity(t.len());
    let mut split = Vec::with_capacity(t.len());
    let (mut types, mut p) = (0u64, qi(0));
    for (j, &s) in t.iter().enumerate() {
        if types & (1 << s) != 0 {
            return Err(Error::Domain("ordered vector repeats a job type".into()));
        }
        types |= 1 << s;
        p += model.p(s);
        let mu = model.mu_of_servers(model.servers_of(types));
        let pj = &rate * &p / &mu;
        if pj >= qi(1) {
            return Err(Error::Domain(format!("segment {} has parameter {} >= 1; the model is unstable", j + 1, crate::scalar::fmt_q(&pj))));
        }
        let mut row = Vec::with_capacity(j + 1);
        let mut sp = Vec::with_capacity(j + 1);
        for &si in &t[..=j] {
            let a = &rate * model.p(si) / &mu;
            row.push(&a / (qi(1) - &pj + &a));
            sp.push(model.p(si) / &p);
        }
        segment_params.push(pj);
        type_params.push(row);
        split.push(sp);
    }
    Ok(SegmentLaw { entries: t.to_vec(), segment_params, type_params, split })
}

/// `k(T)`: idle-server weight over vectors of servers compatible with no type of `T`.
pub fn idle_weight(model: &SystemModel, t: &[usize]) -> Result<Q> {
    let w = idle_weight_sum::<Q>(model, model.lambda())?;
    Ok(idle_weight_with(model, t, &w))
}

fn idle_weight_with(model: &SystemModel, t: &[usize], w: &[Q]) -> Q {
    let used = t.iter().fold(0u64, |acc, &s| acc | model.types()[s].mask);
    let free = model.all_servers() & !used;
    let mut sub = free;
    let mut acc = qi(0);
    loop {
        acc += &w[sub as usize];
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & free;
    }
    acc
}

/// Stationary law of the ordered vector of first occurrences.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigDistribution {
    pub discipline: Discipline,
    pub vectors: Vec<Vec<usize>>,
    pub probs: Vec<Q>,
}

impl ConfigDistribution {
    pub fn prob_of(&self, t: &[usize]) -> Option<&Q> {
        self.vectors.iter().position(|v| v == t).map(|i| &self.probs[i])
    }
}

pub fn config_distribution(model: &SystemModel, discipline: Discipline, caps: &Caps) -> Result<ConfigDistribution> {
    caps.check_types(model)?;
    crate::analytic::require_stable(model)?;
    let ones = vec![qi(1); model.n_types()];
    let idle = match discipline {
        Discipline::Coc => None,
        Discipline::Cos => {
            caps.check_servers(model)?;
            Some(idle_weight_sum::<Q>(model, model.lambda())?)
        }
    };
    let mut vectors = Vec::new();
    for_each_vector(model.all_types(), &mut |v| {
        vectors.push(v.to_vec());
        true
    });
    let mut weights = Vec::with_capacity(vectors.len());
    for v in &vectors {
        let mut h = h_term(model, v, &ones)?;
        if let Some(w) = &idle {
            h *= idle_weight_with(model, v, w);
        }
        weights.push(h);
    }
    let total: Q = weights.iter().cloned().sum();
    let probs = weights.into_iter().map(|w| w / &total).collect();
    Ok(ConfigDistribution { discipline, vectors, probs })
}

/// `ℙ(T)` under the given discipline.
pub fn config_prob(model: &SystemModel, t: &[usize], discipline: Discipline, caps: &Caps) -> Result<Q> {
    let dist = config_distribution(model, discipline, caps)?;
    dist.prob_of(t)
        .cloned()
        .ok_or_else(|| Error::Domain("not an ordered vector of distinct job types".into()))
}

/// Exact `E[Q_S]` (jobs in system for c.o.c., waiting jobs for c.o.s.).
pub fn exact_means(model: &SystemModel, discipline: Discipline, caps: &Caps) -> Result<Vec<Q>> {
    let dist = config_distribution(model, discipline, caps)?;
    let mut out = vec![qi(0); model.n_types()];
    for (t, pr) in dist.vectors.iter().zip(&dist.probs) {
        let law = segment_law(model, t)?;
        for (i, &s) in t.iter().enumerate() {
            let mut m = qi(1);
            for j in i..t.len() {
                let pj = &law.segment_params[j];
                m += pj / (qi(1) - pj) * &law.split[j][i];
            }
            out[s] += pr * m;
        }
    }
    Ok(out)
}

/// `P(T)`: column `j < |T|` maps to `T_j`, the remaining columns to the
/// absent types in ascending order.
pub fn permutation_matrix(model: &SystemModel, t: &[usize]) -> Vec<Vec<u8>> {
    let m = model.n_types();
    let used = t.iter().fold(0u64, |acc, &s| acc | (1 << s));
    let order: Vec<usize> = t.iter().copied().chain(iter_bits(model.all_types() & !used)).collect();
    let mut p = vec![vec![0u8; m]; m];
    for (j, &s) in order.iter().enumerate() {
        p[s][j] = 1;
    }
    p
}

/// One realization of the representation `1(T) + P(T)M̃(T)E(T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationMatrices {
    pub entries: Vec<usize>,
    /// `M̃(T)`: `|𝓢| × |T|`, row `i` holds type `T_i`, column `j` segment `j`.
    pub m_tilde: Vec<Vec<u64>>,
    pub permutation: Vec<Vec<u8>>,
    /// `1(T)`.
    pub indicator: Vec<u64>,
}

impl RepresentationMatrices {
    /// `1(T) + P(T)M̃(T)E(T)`.
    pub fn assemble(&self) -> Vec<u64> {
        let m = self.indicator.len();
        let mut out = self.indicator.clone();
        for (s, o) in out.iter_mut().enumerate() {
            for r in 0..m {
                if self.permutation[s][r] == 1 {
                    *o += self.m_tilde[r].iter().sum::<u64>();
                }
            }
        }
        out
    }

    /// Segment totals `Q^j`.
    pub fn segments(&self) -> Vec<u64> {
        let cols = self.entries.len();
        (0..cols).map(|j| self.m_tilde.iter().map(|r| r[j]).sum()).collect()
    }
}

/// Draws `(Q_S)` exactly: a configuration by its probability, independent
/// geometric segment totals, then multinomial splits.
#[derive(Clone, Debug)]
pub struct PrelimitSampler {
    n_types: usize,
    dist: ConfigDistribution,
    pick: WeightedIndex<f64>,
    segments: Vec<Vec<(Geometric, Vec<f64>)>>,
    permutations: Vec<Vec<Vec<u8>>>,
}

impl PrelimitSampler {
    pub fn new(model: &SystemModel, discipline: Discipline, caps: &Caps) -> Result<Self> {
        let dist = config_distribution(model, discipline, caps)?;
        let weights: Vec<f64> = dist.probs.iter().map(q_to_f64).collect();
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::Internal(format!("configuration weights: {e}")))?;
        let mut segments = Vec::with_capacity(dist.vectors.len());
        let mut permutations = Vec::with_capacity(dist.vectors.len());
        for t in &dist.vectors {
            let law = segment_law(model, t)?;
            let segs = law
                .segment_params
                .iter()
                .zip(&law.split)
                .map(|(pj, sp)| {
                    let g = Geometric::new(1.0 - q_to_f64(pj))
                        .map_err(|e| Error::Internal(format!("geometric parameter: {e}")))?;
                    Ok((g, sp.iter().map(q_to_f64).collect()))
                })
                .collect::<Result<Vec<_>>>()?;
            segments.push(segs);
            permutations.push(permutation_matrix(model, t));
        }
        Ok(PrelimitSampler { n_types: model.n_types(), dist, pick, segments, permutations })
    }

    pub fn distribution(&self) -> &ConfigDistribution {
        &self.dist
    }

    /// Configuration index and its representation matrices.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> (usize, RepresentationMatrices) {
        let c = self.pick.sample(rng);
        let t = &self.dist.vectors[c];
        let mut m_tilde = vec![vec![0u64; t.len()]; self.n_types];
        for (j, (geo, split)) in self.segments[c].iter().enumerate() {
            let mut left = geo.sample(rng);
            let mut mass = 1.0;
            for (i, f) in split.iter().enumerate() {
                if left == 0 {
                    break;
                }
                let take = if i + 1 == split.len() {
                    left
                } else {
                    let pr = (f / mass).clamp(0.0, 1.0);
                    Binomial::new(left, pr).map(|b| b.sample(rng)).unwrap_or(0)
                };
                m_tilde[i][j] = take;
                left -= take;
                mass -= f;
            }
        }
        let mut indicator = vec![0u64; self.n_types];
        for &s in t {
            indicator[s] = 1;
        }
        (c, RepresentationMatrices { entries: t.clone(), m_tilde, permutation: self.permutations[c].clone(), indicator })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<u64> {
        self.draw(rng).1.assemble()
    }
}

/// Samples per chunk; chunk `c` uses its own generator seeded from `(seed, c)`,
/// so output does not depend on the thread count.
const CHUNK: usize = 4096;

pub(crate) fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

pub fn sample_prelimit(
    model: &SystemModel,
    discipline: Discipline,
    n: usize,
    seed: u64,
    caps: &Caps,
) -> Result<Vec<Vec<u64>>> {
    if n == 0 {
        return Err(Error::Validation("sample count must be at least 1".into()));
    }
    let sampler = PrelimitSampler::new(model, discipline, caps)?;
    let chunks: Vec<Vec<Vec<u64>>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| sampler.sample(&mut rng)).collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Heavy-traffic behaviour of one segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentLimit {
    /// Scaled segment size tends to the `k`-th unit exponential (zero-based).
    Exponential(usize),
    Vanishing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimitSegments {
    pub segments: Vec<SegmentLimit>,
    /// `W(T)`: `|𝓢| × K`, rows in the order of `T`, padded with zeros.
    pub w: Vec<Vec<Q>>,
    /// `P(T)W(T)`: rows indexed by type.
    pub pw: Vec<Vec<Q>>,
}

pub fn limit_segment_laws(ctx: &LimitContext, t: &OrderedTypeVector) -> LimitSegments {
    let m = ctx.model.n_types();
    let k = t.k();
    let segments = (0..t.len())
        .map(|j| match t.cr_indices.iter().position(|&i| i == j) {
            Some(l) => SegmentLimit::Exponential(l),
            None => SegmentLimit::Vanishing,
        })
        .collect();
    let mut w = vec![vec![qi(0); k]; m];
    for (i, row) in w.iter_mut().enumerate().take(t.len()) {
        for (l, &il) in t.cr_indices.iter().enumerate() {
            if i <= il {
                row[l] = ctx.model.p(t.entries[i]) / &t.prefix_p[il];
            }
        }
    }
    let p = permutation_matrix(&ctx.model, &t.entries);
    let pw = (0..m)
        .map(|s| {
            let r = p[s].iter().position(|&x| x == 1).expect("permutation row");
            w[r].clone()
        })
        .collect();
    LimitSegments { segments, w, pw }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::scalar::q;

    fn idx(m: &SystemModel, s: &[usize]) -> usize {
        m.type_index(s).unwrap()
    }

    fn table_vector(m: &SystemModel) -> Vec<usize> {
        vec![idx(m, &[1]), idx(m, &[3]), idx(m, &[3, 4]), idx(m, &[1, 2, 3])]
    }

    #[test]
    fn segment_parameters_of_the_four_server_example() {
        let rho = q(1, 2);
        let m = fixtures::four_server(rho.clone());
        let law = segment_law(&m, &table_vector(&m)).unwrap();
        assert_eq!(law.segment_params[1], q(5, 6) * &rho);
        assert_eq!(law.type_params[2][0], &rho / (qi(3) - qi(2) * &rho));
        assert_eq!(law.type_params[0][0], law.segment_params[0]);
        // thinning a geometric keeps it geometric
        for j in 0..4 {
            let pj = &law.segment_params[j];
            for i in 0..=j {
                let f = &law.split[j][i];
                assert_eq!(law.type_params[j][i], pj * f / (qi(1) - pj + pj * f));
            }
        }
    }

    #[test]
    fn unnormalized_configuration_weight() {
        let m = fixtures::four_server(q(1, 2));
        let h = h_term(&m, &table_vector(&m), &vec![qi(1); 4]).unwrap();
        assert_eq!(h, q(2, 63));
    }

    #[test]
    fn distributions_sum_to_one() {
        let m = fixtures::n_model(q(4, 5));
        for d in [Discipline::Coc, Discipline::Cos] {
            let dist = config_distribution(&m, d, &Caps::default()).unwrap();
            assert_eq!(dist.probs.iter().cloned().sum::<Q>(), qi(1));
        }
    }

    #[test]
    fn mm1_cos_idle_state() {
        let rho = q(1, 3);
        let m = fixtures::mm1(rho.clone(), qi(1));
        let p = config_prob(&m, &[], Discipline::Cos, &Caps::default()).unwrap();
        assert_eq!(p, qi(1) - &rho * &rho);
        assert_eq!(config_prob(&m, &[], Discipline::Coc, &Caps::default()).unwrap(), qi(1) - rho);
    }

    #[test]
    fn configurations_concentrate_on_nk() {
        let star = crate::scalar::qi(1);
        let ctx = LimitContext::new(&fixtures::four_server(star.clone())).unwrap();
        let t = OrderedTypeVector::from_ctx(&ctx, table_vector(&ctx.model)).unwrap();
        let target = crate::analytic::p_star(&ctx, &t).unwrap();
        let mut last = None;
        for r in [q(9, 10), q(99, 100), q(999, 1000)] {
            let m = ctx.model.with_lambda(&star * &r).unwrap();
            let pr = config_prob(&m, &t.entries, Discipline::Coc, &Caps::default()).unwrap();
            let err = q_to_f64(&(pr - &target)).abs();
            if let Some(prev) = last {
                assert!(err < prev);
            }
            last = Some(err);
        }
        assert!(last.unwrap() < 1e-2);
    }

    #[test]
    fn exact_means_match_mm1() {
        let rho = q(1, 2);
        let m = fixtures::mm1(rho.clone(), qi(1));
        assert_eq!(exact_means(&m, Discipline::Coc, &Caps::default()).unwrap(), vec![&rho / (qi(1) - &rho)]);
        assert_eq!(exact_means(&m, Discipline::Cos, &Caps::default()).unwrap(), vec![&rho * &rho / (qi(1) - &rho)]);
    }

    #[test]
    fn representation_of_the_example() {
        let ctx = LimitContext::new(&fixtures::four_server(qi(1))).unwrap();
        let m = &ctx.model;
        let t = OrderedTypeVector::from_ctx(&ctx, table_vector(m)).unwrap();
        let lim = limit_segment_laws(&ctx, &t);
        use SegmentLimit::*;
        assert_eq!(lim.segments, vec![Exponential(0), Vanishing, Exponential(1), Exponential(2)]);
        let pw = |s: &[usize]| lim.pw[idx(m, s)].clone();
        assert_eq!(pw(&[1]), vec![qi(1), q(1, 3), q(1, 4)]);
        assert_eq!(pw(&[1, 2, 3]), vec![qi(0), qi(0), q(1, 4)]);
        assert_eq!(pw(&[3]), vec![qi(0), q(2, 9), q(1, 6)]);
        assert_eq!(pw(&[3, 4]), vec![qi(0), q(4, 9), q(1, 3)]);
        let p = permutation_matrix(m, &t.entries);
        for (r, row) in p.iter().enumerate() {
            assert_eq!(row.iter().map(|&x| x as u32).sum::<u32>(), 1);
            assert_eq!((0..4).map(|s| p[s][r] as u32).sum::<u32>(), 1);
        }
        let k0 = OrderedTypeVector::from_ctx(&ctx, vec![idx(m, &[1, 2, 3])]).unwrap();
        assert_eq!(limit_segment_laws(&ctx, &k0).segments, vec![Vanishing]);
    }

    #[test]
    fn sampler_decomposition_and_determinism() {
        let m = fixtures::four_server(q(1, 2));
        let s = PrelimitSampler::new(&m, Discipline::Coc, &Caps::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (_, rep) = s.draw(&mut rng);
            let q = rep.assemble();
            for (i, &ty) in rep.entries.iter().enumerate() {
                let segs: u64 = rep.m_tilde[i][i..].iter().sum();
                assert_eq!(q[ty], 1 + segs);
            }
        }
        let a = sample_prelimit(&m, Discipline::Coc, 10_000, 5, &Caps::default()).unwrap();
        let b = sample_prelimit(&m, Discipline::Coc, 10_000, 5, &Caps::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampler_mean_matches_exact() {
        let m = fixtures::n_model(q(4, 5));
        let n = 200_000;
        let xs = sample_prelimit(&m, Discipline::Coc, n, 11, &Caps::default()).unwrap();
        let exact = exact_means(&m, Discipline::Coc, &Caps::default()).unwrap();
        for s in 0..2 {
            let v: Vec<f64> = xs.iter().map(|x| x[s] as f64).collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!((mean - q_to_f64(&exact[s])).abs() < 4.0 * se, "type {s}: {mean} vs {}", q_to_f64(&exact[s]));
        }
    }
}
