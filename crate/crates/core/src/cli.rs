//! The `rht` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::analytic::{
    limit_law, limit_transform, limiting_laplace_cos_general, mixture_law, pgf_coc, pgf_cos, sigma_aggregate,
    Caps, Discipline, LawSampler, LimitContext,
};
use crate::criticality::{check_stability, criticality_via_construction, CrpClass};
use crate::error::{Error, Result};
use crate::model::{iter_bits, SystemModel};
use crate::moments::{limit_moment_total, limit_moment_type, moment, MomentRequest, MomentTarget};
use crate::prelimit::sample_prelimit;
use crate::scalar::{fmt_q, parse_q, q_to_f64, Scalar, Q};
use crate::simulator::{scaled_law_check, simulate_replications, KsPoint, LawCheckConfig, SimConfig};
use crate::verify::{model_checks, run_acceptance};

/// Version of the JSON model format read and written by the tool.
pub const MODEL_FORMAT_VERSION: u32 = 1;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (model format 1)");

#[derive(Parser, Debug)]
#[command(name = "rht", version = VERSION, about = "Heavy-traffic analysis and simulation of redundancy scheduling")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Directory for output files; results go to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Random seed; falls back to RHT_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Backend::Exact)]
    pub backend: Backend,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Largest type count accepted by enumeration routes.
    #[arg(long, global = true)]
    pub max_types: Option<usize>,
    /// Largest server count accepted by cancel-on-start analytic routes.
    #[arg(long, global = true)]
    pub max_cos_servers: Option<usize>,
    /// Highest moment order served.
    #[arg(long, global = true)]
    pub max_moment_order: Option<u32>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Exact,
    Float,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Disc {
    Coc,
    Cos,
}

impl From<Disc> for Discipline {
    fn from(d: Disc) -> Self {
        match d {
            Disc::Coc => Discipline::Coc,
            Disc::Cos => Discipline::Cos,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Acceptance,
    Model,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Stability, critical rate, critical subsets and component graph.
    Analyze {
        #[arg(long)]
        model: PathBuf,
    },
    /// Pre-limit probability generating function at `z`.
    Pgf {
        #[arg(long)]
        model: PathBuf,
        /// One value per type, comma separated.
        #[arg(long)]
        z: String,
        #[arg(long, value_enum, default_value_t = Disc::Coc)]
        discipline: Disc,
    },
    /// Limiting Laplace transform at `t`, or on a grid with `t_S = t`.
    Laplace {
        #[arg(long)]
        model: PathBuf,
        /// One value per type, comma separated.
        #[arg(long, conflicts_with = "grid")]
        t: Option<String>,
        /// `start:stop:steps` for the diagonal grid.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, value_enum, default_value_t = Disc::Coc)]
        discipline: Disc,
    },
    /// Limit-law coefficient matrix and mixture atoms.
    LimitLaw {
        #[arg(long)]
        model: PathBuf,
    },
    /// Moments of the total or of one type.
    Moments {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: u32,
        /// `total` or `type:<index>`.
        #[arg(long, default_value = "total")]
        target: String,
        #[arg(long, value_enum, default_value_t = Disc::Coc)]
        discipline: Disc,
        /// Heavy-traffic limit of the scaled moment.
        #[arg(long, conflicts_with = "prelimit")]
        limit: bool,
        /// Moment at the model's own arrival rate (default).
        #[arg(long)]
        prelimit: bool,
    },
    /// Draws from the stationary law of the queue-length vector.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Disc::Coc)]
        discipline: Disc,
        #[arg(long)]
        n: usize,
    },
    /// Discrete-event simulation with batch-means estimates.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Disc::Coc)]
        discipline: Disc,
        /// Measured events per replication.
        #[arg(long, default_value_t = 1_000_000)]
        events: u64,
        /// Discarded events before measuring; defaults to a quarter of `--events`.
        #[arg(long)]
        warmup: Option<u64>,
        /// Record the queue-length vector every this many events.
        #[arg(long, default_value_t = 100)]
        sample_every: u64,
        #[arg(long, default_value_t = 1)]
        replications: usize,
        /// Track every redundant copy instead of the aggregated chain.
        #[arg(long)]
        literal_copies: bool,
        /// Run even when the model is unstable.
        #[arg(long)]
        allow_unstable: bool,
    },
    /// KS distances of simulated `ε·Q` against the limit law over an ε sequence.
    VerifyLimit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "1/10,1/20,1/50")]
        epsilons: String,
        #[arg(long, value_enum, default_value_t = Disc::Coc)]
        discipline: Disc,
        #[arg(long, default_value_t = 1_000_000)]
        events: u64,
        #[arg(long, default_value_t = 16)]
        replications: usize,
        #[arg(long, default_value_t = 5000)]
        sample_every: u64,
        /// Significance level of the KS critical value.
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
    /// Self-checks on a model, or the full acceptance battery.
    Verify {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Suite::Model)]
        suite: Suite,
    },
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("rht: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; `Ok` carries the exit code.
pub fn execute(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Error::Validation("--threads must be positive".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let g = &cli.global;
    let caps = caps(g);
    let seed = seed(g)?;
    let mut out = Output::new(g)?;
    match &cli.command {
        Command::Analyze { model } => analyze(&load(model)?, &mut out),
        Command::Pgf { model, z, discipline } => pgf(&load(model)?, z, (*discipline).into(), g.backend, &caps, &mut out),
        Command::Laplace { model, t, grid, discipline } => {
            laplace(&load(model)?, t.as_deref(), grid.as_deref(), (*discipline).into(), g.backend, &caps, &mut out)
        }
        Command::LimitLaw { model } => limit(&load(model)?, &mut out),
        Command::Moments { model, n, target, discipline, limit, .. } => {
            moments(&load(model)?, *n, target, (*discipline).into(), *limit, &caps, &mut out)
        }
        Command::Sample { model, discipline, n } => sample(&load(model)?, (*discipline).into(), *n, seed, &caps, &mut out),
        Command::Simulate { model, discipline, events, warmup, sample_every, replications, literal_copies, allow_unstable } => {
            let mut cfg = SimConfig::new((*discipline).into(), *events);
            cfg.warmup_events = *warmup;
            cfg.sample_every = *sample_every;
            cfg.literal_copies = *literal_copies;
            cfg.allow_unstable = *allow_unstable;
            simulate_cmd(&load(model)?, &cfg, *replications, seed, &mut out)
        }
        Command::VerifyLimit { model, epsilons, discipline, events, replications, sample_every, alpha } => {
            let mut sim = SimConfig::new((*discipline).into(), *events);
            sim.sample_every = *sample_every;
            let cfg = LawCheckConfig { sim, replications: *replications, law_samples: None, alpha: *alpha, seed };
            verify_limit(&load(model)?, epsilons, &cfg, &mut out)
        }
        Command::Verify { model, suite } => verify(model.as_deref(), *suite, &mut out),
    }
}

fn caps(g: &Global) -> Caps {
    let mut c = Caps::default();
    if let Some(v) = g.max_types {
        c.enumeration_types = v;
    }
    if let Some(v) = g.max_cos_servers {
        c.cos_servers = v;
    }
    if let Some(v) = g.max_moment_order {
        c.moment_order = v;
    }
    c
}

fn seed(g: &Global) -> Result<u64> {
    if let Some(s) = g.seed {
        return Ok(s);
    }
    match std::env::var("RHT_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| Error::Validation(format!("RHT_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

pub fn load(path: &Path) -> Result<SystemModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read model file {}: {e}", path.display())))?;
    SystemModel::from_json(&text).map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Where results go: stdout, or files in the output directory.
struct Output {
    dir: Option<PathBuf>,
    format: Format,
}

impl Output {
    fn new(g: &Global) -> Result<Self> {
        if let Some(d) = &g.out {
            fs::create_dir_all(d)?;
        }
        Ok(Output { dir: g.out.clone(), format: g.format })
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<()> {
        let text = serde_json::to_string_pretty(v).expect("json values serialize") + "\n";
        self.write(&format!("{name}.json"), &text)
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        self.write(&format!("{name}.csv"), &String::from_utf8(bytes).expect("utf-8"))
    }

    /// JSON summary, or the table when CSV was requested.
    fn table_or_json(&mut self, name: &str, v: &Value, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        match self.format {
            Format::Json => self.json(name, v),
            Format::Csv => self.csv(name, header, rows),
        }
    }

    fn write(&mut self, file: &str, text: &str) -> Result<()> {
        match &self.dir {
            Some(d) => fs::write(d.join(file), text)?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn indices(mask: u64) -> Vec<usize> {
    iter_bits(mask).collect()
}

fn qs(v: &[Q]) -> Vec<String> {
    v.iter().map(fmt_q).collect()
}

fn matrix(m: &[Vec<Q>]) -> Value {
    json!(m.iter().map(|r| qs(r)).collect::<Vec<_>>())
}

fn type_labels(model: &SystemModel) -> Vec<String> {
    model.types().iter().map(|t| t.label()).collect()
}

fn analyze(model: &SystemModel, out: &mut Output) -> Result<i32> {
    let stability = check_stability(model);
    let (report, dag) = criticality_via_construction(model)?;
    let crp = match report.crp_class {
        CrpClass::StrongCrp => "StrongCRP",
        CrpClass::WeakCrp => "WeakCRP",
        CrpClass::NonCrp => "NonCRP",
    };
    let v = json!({
        "types": type_labels(model),
        "lambda": fmt_q(model.lambda()),
        "lambda_star": fmt_q(&report.lambda_star),
        "stable": stability.stable,
        "instability_witness": stability.witness.map(indices),
        "critical_subsets": report.critical_subsets.iter().map(|&s| indices(s)).collect::<Vec<_>>(),
        "depth_k": report.depth_k,
        "crp_class": crp,
        "components": dag.components.iter().map(|c| json!({
            "types": indices(c.types),
            "servers": iter_bits(c.servers).map(|n| n + 1).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "dag_edges": dag.edges.iter().map(|&(i, j)| [i, j]).collect::<Vec<_>>(),
        "topological_orders": dag.topo_orders,
        "subtrees": dag.subtrees.iter().map(|&v| indices(v)).collect::<Vec<_>>(),
        "forest": dag.is_forest(),
        "flow_only_components_agree": dag.flow_only_agrees,
    });
    eprintln!(
        "lambda* = {}, K = {}, {}, {}",
        fmt_q(&report.lambda_star),
        report.depth_k,
        crp,
        if stability.stable { "stable" } else { "unstable" }
    );
    out.json("analyze", &v)?;
    Ok(0)
}

fn parse_list(s: &str) -> Result<Vec<Q>> {
    s.split(',').map(|x| parse_q(x.trim())).collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().or_else(|_| parse_q(x.trim()).map(|q| q_to_f64(&q))))
        .map(|r| r.map_err(|_| Error::Validation(format!("bad number list {s:?}"))))
        .collect()
}

fn scalar_json<S: Scalar>(x: &S, exact: Option<&Q>) -> Value {
    match exact {
        Some(q) => json!(fmt_q(q)),
        None => json!(x.to_f64()),
    }
}

fn pgf(model: &SystemModel, z: &str, d: Discipline, backend: Backend, caps: &Caps, out: &mut Output) -> Result<i32> {
    let value = match backend {
        Backend::Exact => {
            let z = parse_list(z)?;
            let v = match d {
                Discipline::Coc => pgf_coc::<Q>(model, &z, caps)?,
                Discipline::Cos => pgf_cos::<Q>(model, &z, caps)?,
            };
            scalar_json(&v, Some(&v))
        }
        Backend::Float => {
            let z = parse_f64_list(z)?;
            let v = match d {
                Discipline::Coc => pgf_coc::<f64>(model, &z, caps)?,
                Discipline::Cos => pgf_cos::<f64>(model, &z, caps)?,
            };
            scalar_json(&v, None)
        }
    };
    eprintln!("pgf = {value}");
    out.json("pgf", &json!({ "discipline": d, "value": value }))?;
    Ok(0)
}

fn laplace_at<S: Scalar>(ctx: &LimitContext, t: &[S], d: Discipline, caps: &Caps) -> Result<S> {
    match d {
        Discipline::Coc => limit_transform(ctx, t),
        Discipline::Cos => limiting_laplace_cos_general(ctx, t, caps),
    }
}

fn laplace(
    model: &SystemModel,
    t: Option<&str>,
    grid: Option<&str>,
    d: Discipline,
    backend: Backend,
    caps: &Caps,
    out: &mut Output,
) -> Result<i32> {
    let ctx = LimitContext::new(model)?;
    let m = model.n_types();
    if let Some(g) = grid {
        let parts: Vec<&str> = g.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Validation("--grid expects start:stop:steps".into()));
        }
        let (a, b) = (parse_q(parts[0])?, parse_q(parts[1])?);
        let steps: i64 = parts[2].parse().map_err(|_| Error::Validation("grid steps must be an integer".into()))?;
        if steps < 1 {
            return Err(Error::Validation("grid steps must be at least 1".into()));
        }
        let mut rows = Vec::new();
        for i in 0..=steps {
            let x = &a + (&b - &a) * Q::new(i.into(), steps.into());
            let val = match backend {
                Backend::Exact => fmt_q(&laplace_at::<Q>(&ctx, &vec![x.clone(); m], d, caps)?),
                Backend::Float => format!("{}", laplace_at::<f64>(&ctx, &vec![q_to_f64(&x); m], d, caps)?),
            };
            let tx = match backend {
                Backend::Exact => fmt_q(&x),
                Backend::Float => format!("{}", q_to_f64(&x)),
            };
            rows.push(vec![tx, val]);
        }
        out.csv("laplace_grid", &["t".into(), "laplace".into()], &rows)?;
        return Ok(0);
    }
    let t = t.ok_or_else(|| Error::Validation("give --t or --grid".into()))?;
    let value = match backend {
        Backend::Exact => json!(fmt_q(&laplace_at::<Q>(&ctx, &parse_list(t)?, d, caps)?)),
        Backend::Float => json!(laplace_at::<f64>(&ctx, &parse_f64_list(t)?, d, caps)?),
    };
    eprintln!("laplace = {value}");
    out.json("laplace", &json!({ "discipline": d, "value": value }))?;
    Ok(0)
}

fn limit(model: &SystemModel, out: &mut Output) -> Result<i32> {
    let ctx = LimitContext::new(model)?;
    let law = limit_law(&ctx);
    let mix = mixture_law(&ctx)?;
    let agg = sigma_aggregate(&ctx, &mix)?;
    let v = json!({
        "types": type_labels(model),
        "lambda_star": fmt_q(&ctx.report.lambda_star),
        "depth_k": ctx.k(),
        "forest": law.forest,
        "coefficients": matrix(&law.coeffs),
        "means": qs(&mix.means()),
        "mixture": mix.atoms.iter().map(|a| json!({
            "weight": fmt_q(&a.weight),
            "sigma": a.sigma,
            "vectors": a.members,
            "coefficients": matrix(&a.coeffs),
        })).collect::<Vec<_>>(),
        "sigma_aggregation": agg.law.atoms.iter().zip(&agg.beta_hat).map(|(a, b)| json!({
            "sigma": a.sigma,
            "weight": fmt_q(&a.weight),
            "beta_hat": fmt_q(b),
        })).collect::<Vec<_>>(),
        "beta_hat_total": fmt_q(&agg.beta_hat_total),
        "beta_hat_product": fmt_q(&agg.beta_hat_product),
    });
    if !law.forest {
        eprintln!("note: the component graph is not a forest; the mixture law is the limit");
    }
    let header: Vec<String> = std::iter::once("component".to_string()).chain(type_labels(model)).collect();
    let rows: Vec<Vec<String>> =
        law.coeffs.iter().enumerate().map(|(k, r)| std::iter::once(k.to_string()).chain(qs(r)).collect()).collect();
    out.table_or_json("limit_law", &v, &header, &rows)?;
    Ok(0)
}

fn moments(
    model: &SystemModel,
    n: u32,
    target: &str,
    d: Discipline,
    as_limit: bool,
    caps: &Caps,
    out: &mut Output,
) -> Result<i32> {
    let target = match target {
        "total" => MomentTarget::Total,
        t => match t.strip_prefix("type:").and_then(|i| i.parse::<usize>().ok()) {
            Some(i) if i < model.n_types() => MomentTarget::Type(i),
            _ => return Err(Error::Validation(format!("bad --target {t:?}; use total or type:<index>"))),
        },
    };
    let value = if as_limit {
        if n == 0 || n > caps.moment_order {
            return Err(Error::Validation(format!("moment order must be in 1..={}", caps.moment_order)));
        }
        let ctx = LimitContext::new(model)?;
        match target {
            MomentTarget::Total => limit_moment_total(ctx.k(), n),
            MomentTarget::Type(s) => limit_moment_type(&ctx, s, n, caps)?,
        }
    } else {
        moment(model, &MomentRequest { order: n, target, discipline: d }, caps)?
    };
    eprintln!("moment = {} (~{})", fmt_q(&value), q_to_f64(&value));
    out.json(
        "moments",
        &json!({
            "order": n,
            "target": match target { MomentTarget::Total => "total".to_string(), MomentTarget::Type(i) => format!("type:{i}") },
            "discipline": d,
            "kind": if as_limit { "limit" } else { "prelimit" },
            "value": fmt_q(&value),
        }),
    )?;
    Ok(0)
}

fn sample(model: &SystemModel, d: Discipline, n: usize, seed: u64, caps: &Caps, out: &mut Output) -> Result<i32> {
    let draws = sample_prelimit(model, d, n, seed, caps)?;
    let header: Vec<String> = std::iter::once("sample".to_string()).chain((0..model.n_types()).map(|s| format!("type_{s}"))).collect();
    let rows: Vec<Vec<String>> = draws
        .iter()
        .enumerate()
        .map(|(i, v)| std::iter::once(i.to_string()).chain(v.iter().map(|c| c.to_string())).collect())
        .collect();
    out.csv("samples", &header, &rows)?;
    Ok(0)
}

fn simulate_cmd(model: &SystemModel, cfg: &SimConfig, reps: usize, seed: u64, out: &mut Output) -> Result<i32> {
    let runs = simulate_replications(model, cfg, reps, seed)?;
    let summary: Vec<Value> = runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "replication": i,
                "seed": seed.wrapping_add(i as u64),
                "means": r.means,
                "half_widths": r.half_widths,
                "total_mean": r.total_mean,
                "total_half_width": r.total_half_width,
                "system_means": r.system_means,
                "batches": r.batches,
                "events": r.events,
                "sim_time": r.sim_time,
                "samples": r.samples.len(),
            })
        })
        .collect();
    for r in &runs {
        eprintln!("total mean {:.4} +- {:.4} ({:.2}s wall clock)", r.total_mean, r.total_half_width, r.wall_clock_secs);
    }
    let v = json!({ "discipline": cfg.discipline, "types": type_labels(model), "replications": summary });
    let mut rows = Vec::new();
    let mut epoch = 0usize;
    for r in &runs {
        for s in &r.samples {
            for (t, c) in s.iter().enumerate() {
                rows.push(vec![epoch.to_string(), t.to_string(), c.to_string()]);
            }
            epoch += 1;
        }
    }
    let header = vec!["epoch".to_string(), "type_index".to_string(), "count".to_string()];
    match out.dir {
        Some(_) => {
            out.json("simulate", &v)?;
            out.csv("samples", &header, &rows)?;
        }
        None => out.table_or_json("simulate", &v, &header, &rows)?,
    }
    Ok(0)
}

fn law_sampler(ctx: &LimitContext) -> Result<LawSampler> {
    let law = limit_law(ctx);
    if law.forest {
        Ok(LawSampler::from_limit(&law))
    } else {
        LawSampler::from_mixture(&mixture_law(ctx)?)
    }
}

fn verify_limit(model: &SystemModel, eps: &str, cfg: &LawCheckConfig, out: &mut Output) -> Result<i32> {
    let epsilons = parse_list(eps)?;
    let ctx = LimitContext::new(model)?;
    let sampler = law_sampler(&ctx)?;
    let pts = scaled_law_check(model, &epsilons, &sampler, cfg)?;
    let m = model.n_types();
    let point_json = |p: &KsPoint| {
        json!({
            "epsilon": p.epsilon,
            "ks_total": p.ks_total,
            "ks_per_type": p.ks_per_type,
            "critical": p.critical,
            "scaled_means": p.scaled_means,
            "sim_samples": p.sim_samples,
            "law_samples": p.law_samples,
        })
    };
    let decreasing = pts.windows(2).all(|w| w[1].ks_total < w[0].ks_total);
    let v = json!({
        "types": type_labels(model),
        "points": pts.iter().map(point_json).collect::<Vec<_>>(),
        "ks_total_decreasing": decreasing,
    });
    let seq_header: Vec<String> = ["epsilon", "ks_total", "critical"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..m).map(|s| format!("ks_type_{s}")))
        .collect();
    let seq_rows: Vec<Vec<String>> = pts
        .iter()
        .map(|p| {
            [p.epsilon, p.ks_total, p.critical].iter().chain(&p.ks_per_type).map(|x| x.to_string()).collect()
        })
        .collect();
    let last = pts.last().expect("at least one epsilon");
    let sc_header: Vec<String> = (0..m).map(|s| format!("type_{s}")).collect();
    let sc_rows: Vec<Vec<String>> = last.scaled_samples.iter().map(|v| v.iter().map(|x| x.to_string()).collect()).collect();
    for p in &pts {
        eprintln!("eps {}: KS total {:.4} (critical {:.4})", p.epsilon, p.ks_total, p.critical);
    }
    match out.dir {
        Some(_) => {
            out.json("verify_limit", &v)?;
            out.csv("ks_sequence", &seq_header, &seq_rows)?;
            out.csv("scaled_scatter", &sc_header, &sc_rows)?;
        }
        None => out.table_or_json("verify_limit", &v, &seq_header, &seq_rows)?,
    }
    Ok(0)
}

fn verify(model: Option<&Path>, suite: Suite, out: &mut Output) -> Result<i32> {
    let (entries, all_ok) = match suite {
        Suite::Acceptance => {
            let results = run_acceptance();
            for r in &results {
                eprintln!("{}", r.line());
            }
            let ok = results.iter().all(|r| r.passed);
            (serde_json::to_value(&results).expect("serializable"), ok)
        }
        Suite::Model => {
            let path = model.ok_or_else(|| Error::Validation("--suite model needs --model".into()))?;
            let checks = model_checks(&load(path)?);
            for (name, ok, d) in &checks {
                eprintln!("[{}] {name} {d}", if *ok { "PASS" } else { "FAIL" });
            }
            let ok = checks.iter().all(|c| c.1);
            let v = checks.iter().map(|(n, ok, d)| json!({"check": n, "passed": ok, "detail": d})).collect::<Vec<_>>();
            (json!(v), ok)
        }
    };
    out.json("verify", &json!({ "passed": all_ok, "results": entries }))?;
    Ok(if all_ok { 0 } else { 1 })
}
