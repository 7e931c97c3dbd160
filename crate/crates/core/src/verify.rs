//! Acceptance battery and per-model self-checks.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytic::{
    enumerate_k_critical, limit_law, limiting_laplace, limiting_laplace_cos_general, mixture_law, p_star,
    pgf_coc, sigma_aggregate, Caps, Discipline, LawSampler, LimitContext, OrderedTypeVector,
};
use crate::criticality::{critical_rate_and_subsets_bruteforce, criticality_via_construction};
use crate::error::Result;
use crate::fixtures;
use crate::model::SystemModel;
use crate::moments::{convergence_sweep, moment_total, moment_total_alt, moments_identity};
use crate::prelimit::{config_prob, segment_law};
use crate::scalar::{fmt_q, q, q_to_f64, qi, Q};
use crate::simulator::{ctmc_oracle, scaled_law_check, LawCheckConfig, SimConfig};

/// Outcome of one acceptance criterion.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_secs: f64,
    pub budget_secs: f64,
}

impl CriterionResult {
    /// One summary line.
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2}: {} ({:.2}s of {:.0}s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed_secs,
            self.budget_secs,
            self.detail
        )
    }
}

pub const CRITERIA: u32 = 12;

pub fn run_acceptance() -> Vec<CriterionResult> {
    (1..=CRITERIA).map(run_criterion).collect()
}

/// Runs a single criterion; ids outside `1..=12` report a failure.
pub fn run_criterion(id: u32) -> CriterionResult {
    type Check = fn() -> Result<(bool, String)>;
    let (title, budget, f): (&'static str, f64, Check) = match id {
        1 => ("mixture weights on N_3", 1.0, c1_mixture_weights),
        2 => ("limit law of the four-server example", 1.0, c2_limit_law),
        3 => ("sigma aggregation", 1.0, c3_sigma_aggregation),
        4 => ("mixture and product Laplace transforms agree", 30.0, c4_laplace_equality),
        5 => ("construction equals brute force", 60.0, c5_construction),
        6 => ("nested-sum identity", 10.0, c6_nested_sum),
        7 => ("moment identity and formulation equivalence", 60.0, c7_moments),
        8 => ("scaled moments approach Erlang moments", 30.0, c8_erlang_limit),
        9 => ("PGF converges to the limiting transform", 30.0, c9_pgf_convergence),
        10 => ("simulation converges to the limit law", 300.0, c10_simulation),
        11 => ("truncated chain matches the product form", 60.0, c11_product_form),
        12 => ("c.o.c. and c.o.s. limits coincide", 60.0, c12_cos_limit),
        _ => ("unknown criterion", 0.0, unknown),
    };
    let start = Instant::now();
    let (ok, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let in_budget = elapsed <= budget;
    let detail = if in_budget { detail } else { format!("{detail}; over time budget") };
    CriterionResult { id, title, passed: ok && in_budget, detail, elapsed_secs: elapsed, budget_secs: budget }
}

fn unknown() -> Result<(bool, String)> {
    Ok((false, "no such criterion".into()))
}

fn four_server_ctx() -> Result<(SystemModel, LimitContext)> {
    let m = fixtures::four_server(qi(1));
    let ctx = LimitContext::new(&m)?;
    Ok((m, ctx))
}

fn ids(m: &SystemModel, sets: &[&[usize]]) -> Vec<usize> {
    sets.iter().map(|s| m.type_index(s).expect("type exists")).collect()
}

fn c1_mixture_weights() -> Result<(bool, String)> {
    let (m, ctx) = four_server_ctx()?;
    let expected = [
        (ids(&m, &[&[1], &[3], &[3, 4], &[1, 2, 3]]), q(4, 9)),
        (ids(&m, &[&[1], &[3, 4], &[3], &[1, 2, 3]]), q(2, 9)),
        (ids(&m, &[&[3], &[3, 4], &[1], &[1, 2, 3]]), q(2, 9)),
        (ids(&m, &[&[3, 4], &[3], &[1], &[1, 2, 3]]), q(1, 9)),
    ];
    let nk = enumerate_k_critical(&ctx, 3, &Caps::default())?;
    let mut found: Vec<Vec<usize>> = nk.iter().map(|t| t.entries.clone()).collect();
    found.sort();
    let mut want: Vec<Vec<usize>> = expected.iter().map(|(v, _)| v.clone()).collect();
    want.sort();
    let mut ok = found == want;
    let mut got = Vec::new();
    for (v, w) in &expected {
        let p = p_star(&ctx, &OrderedTypeVector::from_ctx(&ctx, v.clone())?)?;
        ok &= p == *w;
        got.push(fmt_q(&p));
    }
    Ok((ok, format!("|N_3| = {}, weights [{}], exact", nk.len(), got.join(", "))))
}

fn c2_limit_law() -> Result<(bool, String)> {
    let (m, ctx) = four_server_ctx()?;
    let law = limit_law(&ctx);
    let cols = ids(&m, &[&[1], &[1, 2, 3], &[3], &[3, 4]]);
    let comp = |s: &[usize]| ctx.dag.component_of(m.type_index(s).expect("type")).expect("critical");
    let rows = [comp(&[1]), comp(&[3]), comp(&[1, 2, 3])];
    let want = [
        vec![qi(1), qi(0), qi(0), qi(0)],
        vec![qi(0), qi(0), q(1, 3), q(2, 3)],
        vec![q(1, 4), q(1, 4), q(1, 6), q(1, 3)],
    ];
    let mut ok = law.coeffs.len() == 3 && law.forest;
    for (r, w) in rows.iter().zip(&want) {
        let got: Vec<Q> = cols.iter().map(|&s| law.coeffs[*r][s].clone()).collect();
        ok &= got == *w;
    }
    let shown: Vec<String> = cols
        .iter()
        .map(|&s| {
            let terms: Vec<String> = rows
                .iter()
                .enumerate()
                .filter(|(_, &r)| law.coeffs[r][s] != qi(0))
                .map(|(k, &r)| format!("{}U{}", fmt_q(&law.coeffs[r][s]), k + 1))
                .collect();
            terms.join("+")
        })
        .collect();
    Ok((ok, format!("({}), exact", shown.join(", "))))
}

fn c3_sigma_aggregation() -> Result<(bool, String)> {
    let (_, ctx) = four_server_ctx()?;
    let agg = sigma_aggregate(&ctx, &mixture_law(&ctx)?)?;
    let mut weights: Vec<Q> = agg.law.atoms.iter().map(|a| a.weight.clone()).collect();
    weights.sort();
    let mut betas = agg.beta_hat.clone();
    betas.sort();
    let ok = weights == vec![q(1, 3), q(2, 3)]
        && betas == vec![q(8, 3), q(16, 3)]
        && agg.beta_hat_total == qi(8)
        && agg.beta_hat_product == qi(8)
        && agg.law.atoms.iter().zip(&agg.beta_hat).all(|(a, b)| a.weight == b / &agg.beta_hat_total);
    let fmt = |v: &[Q]| v.iter().map(fmt_q).collect::<Vec<_>>().join(", ");
    Ok((
        ok,
        format!(
            "weights [{}], beta-hat [{}], total {}, product {}, exact",
            fmt(&weights),
            fmt(&betas),
            fmt_q(&agg.beta_hat_total),
            fmt_q(&agg.beta_hat_product)
        ),
    ))
}

fn c4_laplace_equality() -> Result<(bool, String)> {
    let (_, ctx) = four_server_ctx()?;
    let mix = mixture_law(&ctx)?;
    let law = limit_law(&ctx);
    let grid = [qi(0), q(1, 3), qi(1), q(5, 2), qi(7)];
    let mut exact_points = 0;
    let mut ok = true;
    for a in &grid {
        for b in &grid {
            for c in &grid {
                for d in &grid {
                    let t = [a.clone(), b.clone(), c.clone(), d.clone()];
                    ok &= mix.laplace::<Q>(&t) == law.laplace::<Q>(&t);
                    exact_points += 1;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut models = 0;
    while models < 50 {
        let k = rng.random_range(1..=4);
        let m = fixtures::random_dag_model(&mut rng, k, true, qi(1));
        let ctx = LimitContext::new(&m)?;
        let (mix, law) = (mixture_law(&ctx)?, limit_law(&ctx));
        ok &= law.forest;
        for _ in 0..10 {
            let t: Vec<f64> = (0..m.n_types()).map(|_| rng.random_range(0.0..4.0)).collect();
            worst = worst.max((mix.laplace::<f64>(&t) - law.laplace::<f64>(&t)).abs());
        }
        models += 1;
    }
    ok &= worst < 1e-10;
    Ok((ok, format!("{exact_points} exact grid points; {models} random forests, max |diff| {worst:.1e} < 1e-10")))
}

fn c5_construction() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut agree = 0;
    let mut deepest = 0;
    for _ in 0..200 {
        let load = q(rng.random_range(1..=19), 20);
        let m = fixtures::random_model(&mut rng, 6, 6, load);
        let brute = critical_rate_and_subsets_bruteforce(&m, 20)?;
        let (cons, _) = criticality_via_construction(&m)?;
        if brute.lambda_star == cons.lambda_star && brute.critical_subsets == cons.critical_subsets {
            agree += 1;
        }
        deepest = deepest.max(cons.depth_k);
    }
    Ok((agree == 200, format!("{agree}/200 models identical, max K = {deepest}, exact")))
}

fn c6_nested_sum() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut agree = 0;
    let mut orders = 0;
    for _ in 0..200 {
        let k = rng.random_range(1..=6);
        let m = fixtures::random_dag_model(&mut rng, k, true, qi(1));
        let ctx = LimitContext::new(&m)?;
        let c: Vec<Q> = (0..ctx.k()).map(|_| q(rng.random_range(1..=9), rng.random_range(1..=5))).collect();
        let (lhs, rhs) = crate::analytic::nested_sum_identity(&ctx, &c)?;
        if lhs == rhs {
            agree += 1;
        }
        orders = orders.max(ctx.dag.topo_orders.len());
    }
    Ok((agree == 200, format!("{agree}/200 forests, up to {orders} orders, exact")))
}

fn c7_moments() -> Result<(bool, String)> {
    let mut ok = true;
    let mut identities = 0;
    for k in 0..=8 {
        for d in 1..=9 {
            let (l, r) = moments_identity(k, &q(d, 10))?;
            ok &= l == r;
            identities += 1;
        }
    }
    let caps = Caps::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut equal = 0;
    for _ in 0..50 {
        let load = q(rng.random_range(1..=9), 10);
        let m = fixtures::random_model(&mut rng, 5, 5, load);
        let mut same = true;
        for n in 1..=4 {
            same &= moment_total(&m, n, Discipline::Coc, &caps)? == moment_total_alt(&m, n, &caps)?;
        }
        equal += same as usize;
    }
    ok &= equal == 50;
    Ok((ok, format!("{identities} identity cases; {equal}/50 models agree for n <= 4, exact")))
}

fn c8_erlang_limit() -> Result<(bool, String)> {
    let m = fixtures::n_model(qi(1));
    let eps = [q(1, 10), q(1, 100), q(1, 1000)];
    let ratios: Vec<Q> = eps.iter().map(|e| qi(1) - e).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in 1..=3 {
        let sweep = convergence_sweep(&m, n, &ratios, Discipline::Coc, &Caps::default())?;
        let limit = q_to_f64(&sweep[0].limit);
        let rel: Vec<f64> = sweep.iter().map(|p| p.abs_error / limit).collect();
        ok &= rel.windows(2).all(|w| w[1] < w[0]) && rel[2] < 5e-3;
        parts.push(format!("n={n}: limit {limit}, rel err {:.2e} {:.2e} {:.2e}", rel[0], rel[1], rel[2]));
    }
    Ok((ok, format!("{} (need decreasing, last < 5e-3)", parts.join("; "))))
}

fn c9_pgf_convergence() -> Result<(bool, String)> {
    let caps = Caps::default();
    let ratios = [0.9, 0.99, 0.999];
    let mut ok = true;
    let mut worst_last = 0.0f64;
    for base in [fixtures::n_model(qi(1)), fixtures::four_server(qi(1))] {
        let ctx = LimitContext::new(&base)?;
        let star = ctx.report.lambda_star.clone();
        let mtypes = base.n_types();
        for j in 0..10 {
            let t: Vec<f64> = (0..mtypes).map(|s| ((j + 1) * (s + 2) % 7) as f64 / 3.0).collect();
            let limit = limiting_laplace::<f64>(&ctx, &t)?;
            let mut errs = Vec::new();
            for r in ratios {
                let m = base.with_lambda(&star * q((r * 1000.0f64).round() as i64, 1000))?;
                let z: Vec<f64> = t.iter().map(|x| (-(1.0 - r) * x).exp()).collect();
                errs.push((pgf_coc::<f64>(&m, &z, &caps)? - limit).abs());
            }
            let zero_t = t.iter().all(|x| *x == 0.0);
            ok &= zero_t || errs.windows(2).all(|w| w[1] < w[0]);
            worst_last = worst_last.max(errs[2]);
        }
    }
    Ok((ok, format!("20 t-points, errors decrease over rho 0.9/0.99/0.999; max error at 0.999 {worst_last:.2e}")))
}

/// Replications pooled at each `ε` and the departure spacing between samples.
pub const SIM_REPLICATIONS: usize = 16;
pub const SIM_SAMPLE_SPACING: u64 = 5000;

fn c10_simulation() -> Result<(bool, String)> {
    let base = fixtures::n_model(qi(1));
    let ctx = LimitContext::new(&base)?;
    let law = LawSampler::from_limit(&limit_law(&ctx));
    let mut sim = SimConfig::new(Discipline::Coc, 1_000_000);
    sim.sample_every = SIM_SAMPLE_SPACING;
    let cfg = LawCheckConfig { sim, replications: SIM_REPLICATIONS, law_samples: None, alpha: 0.01, seed: 2024 };
    let pts = scaled_law_check(&base, &[q(1, 10), q(1, 20), q(1, 50)], &law, &cfg)?;
    let a = base.type_index(&[1, 2]).expect("type");
    let b = base.type_index(&[2]).expect("type");
    let last = &pts[2];
    let (ma, mb) = (last.scaled_means[a], last.scaled_means[b]);
    let means_ok = (ma - 0.5).abs() <= 0.05 && (mb - 1.5).abs() <= 0.15;
    let ks_ok = last.ks_total < last.critical;
    let seq: Vec<f64> = pts.iter().map(|p| p.ks_total).collect();
    let dec = seq.windows(2).all(|w| w[1] < w[0]);
    Ok((
        means_ok && ks_ok && dec,
        format!(
            "eps=0.02: E[eQ_12] {ma:.3} (0.5 +-10%), E[eQ_2] {mb:.3} (1.5 +-10%), KS {:.4} < {:.4}; KS over eps 0.1/0.05/0.02: {:.4} {:.4} {:.4}",
            last.ks_total, last.critical, seq[0], seq[1], seq[2]
        ),
    ))
}

fn c11_product_form() -> Result<(bool, String)> {
    let model = fixtures::n_model(q(1, 2));
    let oracle = ctmc_oracle(&model, Discipline::Coc, 12)?;
    let mut ok = oracle.tv_distance < 1e-6;
    let caps = Caps::default();
    let (a, b) = (model.type_index(&[1, 2]).expect("type"), model.type_index(&[2]).expect("type"));
    // Geometric sums of the product form by hand.
    let expected = [(vec![], q(1, 3)), (vec![a], q(1, 9)), (vec![b], q(1, 3)), (vec![a, b], q(1, 18)), (vec![b, a], q(1, 6))];
    for (v, p) in &expected {
        ok &= config_prob(&model, v, Discipline::Coc, &caps)? == *p;
    }
    let mut seg_ok = true;
    for rho in [q(1, 3), q(1, 2), q(3, 4)] {
        let m = fixtures::four_server(rho.clone());
        let v = ids(&m, &[&[1], &[3], &[3, 4], &[1, 2, 3]]);
        let law = segment_law(&m, &v)?;
        seg_ok &= law.segment_params[1] == q(5, 6) * &rho && law.type_params[2][0] == &rho / (qi(3) - qi(2) * &rho);
    }
    ok &= seg_ok;
    Ok((
        ok,
        format!(
            "{} states, TV {:.2e} < 1e-6; config probabilities exact; segment parameters 5r/6 and r/(3-2r) exact",
            oracle.states.len(),
            oracle.tv_distance
        ),
    ))
}

fn c12_cos_limit() -> Result<(bool, String)> {
    let caps = Caps::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let random = loop {
        let m = fixtures::random_model(&mut rng, 5, 5, qi(1));
        if LimitContext::new(&m)?.k() == 2 {
            break m;
        }
    };
    let grid = [0.0, 0.5, 2.0];
    let mut worst = 0.0f64;
    let mut points = 0;
    for m in [fixtures::n_model(qi(1)), random] {
        let ctx = LimitContext::new(&m)?;
        let n = m.n_types();
        for code in 0..grid.len().pow(n as u32) {
            let t: Vec<f64> = (0..n).map(|s| grid[code / grid.len().pow(s as u32) % grid.len()]).collect();
            let coc = limiting_laplace::<f64>(&ctx, &t)?;
            let cos = limiting_laplace_cos_general::<f64>(&ctx, &t, &caps)?;
            worst = worst.max((coc - cos).abs());
            points += 1;
        }
    }
    Ok((worst < 1e-10, format!("{points} t-points on two K=2 models, max |diff| {worst:.1e} < 1e-10")))
}

/// Checks that apply to an arbitrary model: construction vs brute force,
/// moment routes, transform agreement, and the oracle on tiny systems.
pub fn model_checks(model: &SystemModel) -> Vec<(String, bool, String)> {
    let caps = Caps::default();
    let mut out = Vec::new();
    let mut push = |name: &str, r: Result<(bool, String)>| match r {
        Ok((ok, d)) => out.push((name.to_string(), ok, d)),
        Err(e) => out.push((name.to_string(), false, format!("error: {e}"))),
    };
    push(
        "construction equals brute force",
        (|| {
            let brute = critical_rate_and_subsets_bruteforce(model, caps.brute_force_types)?;
            let (cons, _) = criticality_via_construction(model)?;
            Ok((brute.critical_subsets == cons.critical_subsets && brute.lambda_star == cons.lambda_star, String::new()))
        })(),
    );
    let star = crate::criticality::lambda_star_via_flow(model);
    let critical = model.with_lambda(star.clone());
    push(
        "mixture and product transforms agree",
        (|| {
            let ctx = LimitContext::new(&critical?)?;
            let (mix, law) = (mixture_law(&ctx)?, limit_law(&ctx));
            if !law.forest {
                return Ok((true, "component graph is not a forest; the mixture is the limit".into()));
            }
            let t: Vec<Q> = (0..model.n_types()).map(|s| q(s as i64 + 1, 2)).collect();
            Ok((mix.laplace::<Q>(&t) == law.laplace::<Q>(&t), "exact at one point".into()))
        })(),
    );
    if model.lambda() < &star {
        push(
            "moment routes agree",
            (|| {
                let same = (1..=3).try_fold(true, |acc, n| {
                    Ok::<_, crate::Error>(acc && moment_total(model, n, Discipline::Coc, &caps)? == moment_total_alt(model, n, &caps)?)
                })?;
                Ok((same, "n = 1..3, exact".into()))
            })(),
        );
        push(
            "truncated chain matches the product form",
            (|| {
                let len = (1..=12).rev().find(|&l| (model.n_types() as f64).powi(l as i32) < 2e5).unwrap_or(1);
                let r = ctmc_oracle(model, Discipline::Coc, len)?;
                Ok((r.tv_distance < 1e-6, format!("truncation {len}, TV {:.2e}", r.tv_distance)))
            })(),
        );
    }
    out
}
