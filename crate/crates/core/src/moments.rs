//! Pre-limit moments of queue lengths and their heavy-traffic limits.

use std::sync::OnceLock;

use crate::analytic::{mixture_law, sigma_aggregate, Caps, Discipline, LimitContext};
use crate::criticality::lambda_star_via_flow;
use crate::error::{Error, Result};
use crate::model::{iter_bits, SystemModel};
use crate::prelimit::{config_distribution, segment_law};
use crate::scalar::{factorial, q_to_f64, qi, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentTarget {
    Total,
    /// Zero-based type index.
    Type(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MomentRequest {
    pub order: u32,
    pub target: MomentTarget,
    pub discipline: Discipline,
}

fn check_order(n: u32, caps: &Caps) -> Result<()> {
    if n == 0 {
        return Err(Error::Validation("moment order must be at least 1".into()));
    }
    if n > caps.moment_order {
        return Err(Error::Cap(format!("moment order {n} exceeds the cap of {}", caps.moment_order)));
    }
    Ok(())
}

/// Eulerian number `⟨k, l⟩`; zero when `l ≥ k ≥ 1`.
pub fn eulerian(k: u32, l: u32) -> u128 {
    if k == 0 {
        return u128::from(l == 0);
    }
    if l >= k {
        return 0;
    }
    let mut row = vec![1u128];
    for kk in 1..=k as u128 {
        let mut next = vec![0u128; kk as usize];
        for (ll, slot) in next.iter_mut().enumerate() {
            let ll = ll as u128;
            let a = row.get(ll as usize).copied().unwrap_or(0) * (ll + 1);
            let b = if ll > 0 { row.get(ll as usize - 1).copied().unwrap_or(0) * (kk - ll) } else { 0 };
            *slot = a + b;
        }
        row = next;
    }
    row[l as usize]
}

/// `R(k) = { m ∈ ℕ^k : Σ_j j·m_j = k }`.
pub fn compositions(k: u32) -> Vec<Vec<u32>> {
    fn rec(j: u32, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if j == 0 {
            if left == 0 {
                out.push(cur.iter().rev().copied().collect());
            }
            return;
        }
        for mj in 0..=left / j {
            cur.push(mj);
            rec(j - 1, left - j * mj, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, k, &mut Vec::new(), &mut out);
    out
}

/// `table[k][r] = Σ_{m∈R(k), |m|=r} (|m| choose m)·∏_j 1/j!^{m_j}`.
fn composition_table() -> &'static Vec<Vec<Q>> {
    static TABLE: OnceLock<Vec<Vec<Q>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=MAX_ORDER)
            .map(|k| {
                let mut row = vec![qi(0); k as usize + 1];
                for m in compositions(k) {
                    let size: u32 = m.iter().sum();
                    let mut c = factorial(size);
                    for (j, &mj) in m.iter().enumerate() {
                        c /= factorial(mj) * factorial(j as u32 + 1).pow(mj as i32);
                    }
                    row[size as usize] += c;
                }
                row
            })
            .collect()
    })
}

const MAX_ORDER: u32 = 20;

/// Coefficients `k = 0..=n` of `(1 − B)/(1 − B·e^s)` from the composition sums.
pub fn segment_series(b: &Q, n: u32) -> Vec<Q> {
    let table = composition_table();
    let x = b / (qi(1) - b);
    (0..=n as usize)
        .map(|k| {
            let mut acc = qi(0);
            let mut pow = qi(1);
            for c in &table[k] {
                acc += c * &pow;
                pow *= &x;
            }
            acc
        })
        .collect()
}

/// Same coefficients via Eulerian numbers: `(1/k!)(p/(1−p))^k Σ_l ⟨k,l⟩ p^{−l}`.
pub fn segment_series_eulerian(p: &Q, n: u32) -> Vec<Q> {
    let x = p / (qi(1) - p);
    (0..=n)
        .map(|k| {
            let mut inner = qi(0);
            let mut inv = qi(1);
            for l in 0..=k {
                inner += Q::from_integer(eulerian(k, l).into()) * &inv;
                inv /= p;
            }
            x.pow(k as i32) * inner / factorial(k)
        })
        .collect()
}

/// Both sides of the Eulerian/composition identity for order `k`.
pub fn moments_identity(k: u32, p: &Q) -> Result<(Q, Q)> {
    if !(p > &qi(0) && p < &qi(1)) {
        return Err(Error::Domain("p must lie in (0, 1)".into()));
    }
    if k > MAX_ORDER {
        return Err(Error::Cap(format!("order {k} exceeds {MAX_ORDER}")));
    }
    Ok((segment_series_eulerian(p, k)[k as usize].clone(), segment_series(p, k)[k as usize].clone()))
}

fn exp_series(m: i64, n: u32) -> Vec<Q> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut pow = qi(1);
    for k in 0..=n {
        out.push(&pow / factorial(k));
        pow *= qi(m);
    }
    out
}

fn convolve(a: &[Q], b: &[Q]) -> Vec<Q> {
    let n = a.len();
    (0..n).map(|k| (0..=k).map(|i| &a[i] * &b[k - i]).sum()).collect()
}

#[derive(Clone, Copy)]
enum Route {
    Compositions,
    Eulerian,
}

/// `Σ_T weight(T)·[sⁿ] e^{|T|s} ∏_j F_j(s)` over nonempty `T`, and `Σ_T weight(T)`
/// over all `T`, by depth-first search sharing prefix products.
fn total_moment_sum(model: &SystemModel, n: u32, idle: Option<&[Q]>, route: Route) -> Result<(Q, Q)> {
    let rate = model.n_q() * model.lambda();
    let one = exp_series(1, n);
    struct Walk<'a> {
        model: &'a SystemModel,
        rate: Q,
        one: Vec<Q>,
        n: u32,
        idle: Option<&'a [Q]>,
        route: Route,
        num: Q,
        den: Q,
    }
    impl Walk<'_> {
        fn weight(&self, used_types: u64, h: &Q) -> Q {
            match self.idle {
                None => h.clone(),
                Some(w) => {
                    let free = self.model.all_servers() & !self.model.servers_of(used_types);
                    let mut sub = free;
                    let mut k = qi(0);
                    loop {
                        k += &w[sub as usize];
                        if sub == 0 {
                            break;
                        }
                        sub = (sub - 1) & free;
                    }
                    h * k
                }
            }
        }
        fn go(&mut self, used: u64, p: &Q, h: &Q, series: &[Q]) -> Result<()> {
            let w = self.weight(used, h);
            if used != 0 {
                self.num += &w * &series[self.n as usize];
            }
            self.den += w;
            for s in iter_bits(self.model.all_types() & !used) {
                let next = used | (1 << s);
                let p2 = p + self.model.p(s);
                let mu = self.model.mu_of_servers(self.model.servers_of(next));
                let b = &self.rate * &p2 / &mu;
                if b >= qi(1) {
                    return Err(Error::Domain("model is not stable".into()));
                }
                let h2 = h * &self.rate * self.model.p(s) / &mu / (qi(1) - &b);
                let seg = match self.route {
                    Route::Compositions => segment_series(&b, self.n),
                    Route::Eulerian => segment_series_eulerian(&b, self.n),
                };
                let s2 = convolve(&convolve(series, &self.one), &seg);
                self.go(next, &p2, &h2, &s2)?;
            }
            Ok(())
        }
    }
    let mut walk = Walk { model, rate, one, n, idle, route, num: qi(0), den: qi(0) };
    let mut start = vec![qi(0); n as usize + 1];
    start[0] = qi(1);
    walk.go(0, &qi(0), &qi(1), &start)?;
    Ok((walk.num, walk.den))
}

/// `E[Qⁿ]` (c.o.c.) or `E[Q̃ⁿ]` (c.o.s.) from the composition-sum formula.
pub fn moment_total(model: &SystemModel, n: u32, discipline: Discipline, caps: &Caps) -> Result<Q> {
    check_order(n, caps)?;
    caps.check_types(model)?;
    crate::analytic::require_stable(model)?;
    let idle = match discipline {
        Discipline::Coc => None,
        Discipline::Cos => {
            caps.check_servers(model)?;
            Some(crate::analytic::idle_weight_sum::<Q>(model, model.lambda())?)
        }
    };
    let (num, den) = total_moment_sum(model, n, idle.as_deref(), Route::Compositions)?;
    Ok(factorial(n) * num / den)
}

/// `E[Qⁿ]` under c.o.c. from the Eulerian formulation.
pub fn moment_total_alt(model: &SystemModel, n: u32, caps: &Caps) -> Result<Q> {
    check_order(n, caps)?;
    caps.check_types(model)?;
    crate::analytic::require_stable(model)?;
    let (num, den) = total_moment_sum(model, n, None, Route::Eulerian)?;
    Ok(factorial(n) * num / den)
}

/// `E[Q_Sⁿ]` under c.o.c.: `Q_S | T = 1 + Σ_{j ≥ j_S} Q^j_S` with independent
/// geometric terms of parameter `p^{T,j,i}`.
pub fn moment_type_prelimit(model: &SystemModel, s: usize, n: u32, caps: &Caps) -> Result<Q> {
    check_order(n, caps)?;
    if s >= model.n_types() {
        return Err(Error::Validation(format!("type index {s} out of range")));
    }
    let dist = config_distribution(model, Discipline::Coc, caps)?;
    let one = exp_series(1, n);
    let mut acc = qi(0);
    for (t, pr) in dist.vectors.iter().zip(&dist.probs) {
        let Some(i) = t.iter().position(|&x| x == s) else { continue };
        let law = segment_law(model, t)?;
        let mut series = one.clone();
        for row in &law.type_params[i..] {
            series = convolve(&series, &segment_series(&row[i], n));
        }
        acc += pr * &series[n as usize];
    }
    Ok(factorial(n) * acc)
}

pub fn moment(model: &SystemModel, req: &MomentRequest, caps: &Caps) -> Result<Q> {
    match (req.target, req.discipline) {
        (MomentTarget::Total, d) => moment_total(model, req.order, d, caps),
        (MomentTarget::Type(s), Discipline::Coc) => moment_type_prelimit(model, s, req.order, caps),
        (MomentTarget::Type(_), Discipline::Cos) => Err(Error::Domain(
            "per-type pre-limit moments are only available for cancel-on-completion; use the limit".into(),
        )),
    }
}

/// `(n+K−1)!/(K−1)!`.
pub fn limit_moment_total(k: usize, n: u32) -> Q {
    factorial(n + k as u32 - 1) / factorial(k as u32 - 1)
}

/// `n!·Σ_{n_1+…+n_K=n} ∏_k a_k^{n_k}`, the `n`-th moment of `Σ_k a_k U_k`.
pub fn exponential_sum_moment(a: &[Q], n: u32) -> Q {
    // complete homogeneous symmetric polynomial by the usual recursion
    let mut h = vec![qi(0); n as usize + 1];
    h[0] = qi(1);
    for ak in a {
        for d in 1..=n as usize {
            let prev = h[d - 1].clone();
            h[d] += ak * prev;
        }
    }
    factorial(n) * &h[n as usize]
}

/// Limit of `E[((1−λ/λ*)Q_S)ⁿ]`, the same for both disciplines.
///
/// Each σ contributes `n!Σ ∏_k a_k^{n_k}` with `a_k = Nλ*p_S/γ(𝓒_{σ(1)} ∪ … ∪ 𝓒_{σ(k)})`,
/// where only the prefixes that already contain `S` take part.
pub fn limit_moment_type(ctx: &LimitContext, s: usize, n: u32, caps: &Caps) -> Result<Q> {
    check_order(n, caps)?;
    if s >= ctx.model.n_types() {
        return Err(Error::Validation(format!("type index {s} out of range")));
    }
    let Some(comp) = ctx.dag.component_of(s) else {
        return Ok(qi(0));
    };
    let agg = sigma_aggregate(ctx, &mixture_law(ctx)?)?;
    let mut acc = qi(0);
    for atom in &agg.law.atoms {
        let start = atom.sigma.iter().position(|&c| c == comp).expect("component in order");
        let a: Vec<Q> = ctx.dag.prefix_unions(&atom.sigma)[start..]
            .iter()
            .map(|&u| &ctx.rate * ctx.model.p(s) / ctx.gamma_of(u))
            .collect();
        acc += &atom.weight * exponential_sum_moment(&a, n);
    }
    Ok(acc)
}

/// `K/(Nλ*)`.
pub fn limit_response_time(ctx: &LimitContext) -> Q {
    qi(ctx.k() as i64) / &ctx.rate
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub ratio: Q,
    pub scaled_moment: Q,
    pub limit: Q,
    pub abs_error: f64,
}

/// `(1−ρ)ⁿ·E[Qⁿ]` at `λ = ρλ*` for each ratio, against the limit.
pub fn convergence_sweep(
    model: &SystemModel,
    n: u32,
    ratios: &[Q],
    discipline: Discipline,
    caps: &Caps,
) -> Result<Vec<SweepPoint>> {
    let star = lambda_star_via_flow(model);
    let ctx = LimitContext::new(&model.with_lambda(star.clone())?)?;
    let limit = limit_moment_total(ctx.k(), n);
    ratios
        .iter()
        .map(|r| {
            let m = model.with_lambda(&star * r)?;
            let scaled = (qi(1) - r).pow(n as i32) * moment_total(&m, n, discipline, caps)?;
            let abs_error = q_to_f64(&(&scaled - &limit)).abs();
            Ok(SweepPoint { ratio: r.clone(), scaled_moment: scaled, limit: limit.clone(), abs_error })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::prelimit::exact_means;
    use crate::scalar::q;

    #[test]
    fn eulerian_triangle() {
        assert_eq!(eulerian(3, 1), 4);
        assert_eq!(eulerian(0, 0), 1);
        assert_eq!(eulerian(2, 2), 0);
        for k in 1..=12u32 {
            let row: u128 = (0..=k).map(|l| eulerian(k, l)).sum();
            assert_eq!(row, (1..=k as u128).product::<u128>());
            for i in 0..k {
                assert_eq!(eulerian(k, i), eulerian(k, k - i - 1));
            }
        }
    }

    #[test]
    fn composition_counts_are_partition_numbers() {
        let counts: Vec<usize> = (0..=8).map(|k| compositions(k).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 3, 5, 7, 11, 15, 22]);
    }

    #[test]
    fn identity_sweep() {
        for k in 0..=8 {
            for d in 1..=9 {
                let (l, r) = moments_identity(k, &q(d, 10)).unwrap();
                assert_eq!(l, r, "k={k} p={d}/10");
            }
        }
        let p = q(1, 3);
        assert_eq!(moments_identity(1, &p).unwrap().0, &p / (qi(1) - &p));
    }

    #[test]
    fn mm1_moments() {
        let m = fixtures::mm1(q(1, 2), qi(1));
        let c = Caps::default();
        assert_eq!(moment_total(&m, 1, Discipline::Coc, &c).unwrap(), qi(1));
        assert_eq!(moment_total(&m, 2, Discipline::Coc, &c).unwrap(), qi(3));
        // E[W] = ρ²/(1−ρ) for the waiting jobs
        assert_eq!(moment_total(&m, 1, Discipline::Cos, &c).unwrap(), q(1, 2));
    }

    #[test]
    fn series_oracle_third_moment() {
        let rho = 1.0 / 3.0;
        let m = fixtures::mm1(q(1, 3), qi(1));
        let exact = q_to_f64(&moment_total_alt(&m, 3, &Caps::default()).unwrap());
        let series: f64 = (0..10_000).map(|k| (k as f64).powi(3) * (1.0 - rho) * rho.powi(k)).sum();
        assert!((exact - series).abs() < 1e-12);
    }

    #[test]
    fn two_routes_agree() {
        for m in [fixtures::n_model(q(4, 5)), fixtures::four_server(q(1, 2)), fixtures::triangle(q(1, 2))] {
            for n in 1..=4 {
                assert_eq!(
                    moment_total(&m, n, Discipline::Coc, &Caps::default()).unwrap(),
                    moment_total_alt(&m, n, &Caps::default()).unwrap()
                );
            }
        }
    }

    #[test]
    fn per_type_mean_matches_segment_sum() {
        let m = fixtures::four_server(q(1, 2));
        let means = exact_means(&m, Discipline::Coc, &Caps::default()).unwrap();
        for (s, mean) in means.iter().enumerate() {
            assert_eq!(&moment_type_prelimit(&m, s, 1, &Caps::default()).unwrap(), mean);
        }
        let total: Q = means.iter().cloned().sum();
        assert_eq!(total, moment_total(&m, 1, Discipline::Coc, &Caps::default()).unwrap());
    }

    #[test]
    fn limit_values() {
        assert_eq!(limit_moment_total(1, 1), qi(1));
        assert_eq!(limit_moment_total(3, 2), qi(12));
        assert_eq!(limit_moment_total(2, 1), qi(2));
        let ctx = LimitContext::new(&fixtures::four_server(qi(1))).unwrap();
        assert_eq!(limit_response_time(&ctx), q(3, 4));
        let c = Caps::default();
        let m = &ctx.model;
        assert_eq!(limit_moment_type(&ctx, m.type_index(&[1, 2, 3]).unwrap(), 1, &c).unwrap(), q(1, 4));
        // E[(U1 + ¼U3)²] = (Σa)² + Σa²
        let a = [qi(1), q(1, 4)];
        let oracle = a.iter().cloned().sum::<Q>().pow(2) + a.iter().map(|x| x * x).sum::<Q>();
        assert_eq!(limit_moment_type(&ctx, m.type_index(&[1]).unwrap(), 2, &c).unwrap(), oracle);
        let n = LimitContext::new(&fixtures::n_model(qi(1))).unwrap();
        assert_eq!(limit_response_time(&n), qi(1));
        let mm1 = LimitContext::new(&fixtures::mm1(qi(1), qi(1))).unwrap();
        assert_eq!(limit_moment_type(&mm1, 0, 1, &c).unwrap(), qi(1));
    }

    #[test]
    fn scaled_moments_converge() {
        let m = fixtures::n_model(q(1, 2));
        let ratios = [q(9, 10), q(99, 100), q(999, 1000)];
        let sweep = convergence_sweep(&m, 1, &ratios, Discipline::Coc, &Caps::default()).unwrap();
        for w in sweep.windows(2) {
            assert!(w[1].abs_error < w[0].abs_error);
        }
        for pt in &sweep {
            let eps = 1.0 - q_to_f64(&pt.ratio);
            assert!(pt.abs_error / 2.0 < 2.0 * eps);
        }
    }

    #[test]
    fn order_guard() {
        let m = fixtures::mm1(q(1, 2), qi(1));
        assert!(matches!(moment_total(&m, 0, Discipline::Coc, &Caps::default()), Err(Error::Validation(_))));
        assert!(matches!(moment_total(&m, 13, Discipline::Coc, &Caps::default()), Err(Error::Cap(_))));
    }
}
