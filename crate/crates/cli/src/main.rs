use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pcsp_core::analytics::{chernoff_ml, chernoff_mu, giant_rho, mu_c, tau_star};
use pcsp_core::chain::{mgf_exact_upper, ChainParams};
use pcsp_core::experiment::{run_chain_sim, run_sweep, run_verify, ChainKind, KnownCount, Suite, SweepConfig};
use pcsp_core::instance::generate;
use pcsp_core::peeling::PeelOptions;
use pcsp_core::{make_rs_local_function, peel, stream, PeelMode, PlantedInstance};

#[derive(Parser)]
#[command(name = "pcsp", version, about = "Peeling and LP experiments on planted MDS k-CSPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a planted instance and print it as JSON.
    Gen(GenArgs),
    /// Peel an instance file from its unknown variables.
    Peel(PeelArgs),
    /// Success rates of peeling over a grid of densities (CSV).
    Sweep(SweepArgs),
    /// Trajectories of the degree-count Markov chains (CSV).
    ChainSim(ChainSimArgs),
    /// Exact log moment generating function of the upper chain.
    Mgf(MgfArgs),
    /// Thresholds and Chernoff exponents.
    Analytics(AnalyticsArgs),
    /// Run a self-check suite: mds, lp, chain, confluence or ez.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct Shape {
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    r: usize,
    #[arg(long, default_value_t = 10000)]
    n: usize,
    /// Known variables; overrides --u-exp.
    #[arg(long)]
    u: Option<usize>,
    /// Known variables as `ceil(n^e)`.
    #[arg(long = "u-exp", default_value_t = 0.45)]
    u_exp: f64,
}

impl Shape {
    fn known(&self) -> KnownCount {
        match self.u {
            Some(u) => KnownCount::Explicit(u),
            None => KnownCount::Exponent(self.u_exp),
        }
    }

    /// Explicit `m`, else `round(mu n^{r-1} / u^{r-2})`.
    fn constraints(&self, m: Option<usize>, mu: Option<f64>) -> Result<usize> {
        match (m, mu) {
            (Some(m), _) => Ok(m),
            (None, Some(mu)) => {
                let mut cfg = SweepConfig::new(2, self.k, self.r, self.n);
                cfg.u = self.known();
                Ok(cfg.constraints(mu))
            }
            (None, None) => bail!("give either --m or --mu"),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 3)]
    q: u32,
    #[command(flatten)]
    shape: Shape,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PeelArgs {
    /// Instance JSON as written by `gen`.
    input: PathBuf,
    /// Peeling depth; defaults to k - r + 2.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value = "batch")]
    mode: PeelMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `json` for the result, `csv` for the degree trajectory.
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 3)]
    q: u32,
    #[command(flatten)]
    shape: Shape,
    /// Single density; shorthand for a one-point grid.
    #[arg(long)]
    mu: Option<f64>,
    /// Comma-separated densities.
    #[arg(long = "mu-grid", value_delimiter = ',')]
    mu_grid: Vec<f64>,
    /// Read densities as multiples of mu_c(k, r).
    #[arg(long)]
    relative: bool,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value = "batch")]
    mode: PeelMode,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long = "budget-mb")]
    budget_mb: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChainSimArgs {
    #[arg(long, default_value = "upper")]
    chain: ChainKind,
    #[command(flatten)]
    shape: Shape,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 100)]
    steps: u64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MgfArgs {
    #[command(flatten)]
    shape: Shape,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    t: u64,
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
}

#[derive(Args)]
struct AnalyticsArgs {
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    r: usize,
    #[arg(long)]
    mu: f64,
}

#[derive(Args)]
struct VerifyArgs {
    suite: Suite,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    let s = &a.shape;
    let u = s.known().resolve(s.n);
    let m = s.constraints(a.m, a.mu)?;
    let points: Vec<u32> = (0..s.k as u32).collect();
    let f = make_rs_local_function(a.q, s.k, s.r, &points)?;
    let inst = generate(&f, s.n, u, m, a.seed, &mut stream(a.seed, 0))?;
    write_json(&a.out, &inst)
}

#[derive(Serialize)]
struct PeelReport {
    d: usize,
    mode: PeelMode,
    removed: usize,
    /// 1-based, in removal order.
    removed_order: Vec<u32>,
    /// 1-based, ascending.
    residual: Vec<u32>,
    e1_trajectory: Vec<u64>,
}

fn peel_cmd(a: PeelArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let inst: PlantedInstance = serde_json::from_str(&text).context("parsing instance")?;
    let g = inst.graph();
    let f = inst.function();
    let d = a.d.unwrap_or(f.k() - f.r() + 2);
    if d < 2 || d > g.k() {
        bail!("peeling depth {d} outside 2..={}", g.k());
    }
    let csv = match a.format.as_str() {
        "json" => false,
        "csv" => true,
        other => bail!("unknown format {other:?} (expected json or csv)"),
    };
    let mut opts = PeelOptions::new(d, a.mode);
    if csv {
        opts = opts.with_snapshots();
    }
    let res = peel(g, &g.unknowns(), &opts, &mut stream(a.seed, 0));
    if csv {
        let mut w = csv::Writer::from_writer(sink(&a.out)?);
        let mut header = vec!["t".to_string(), "E1".to_string()];
        header.extend((0..=g.k()).map(|j| format!("C_{j}")));
        w.write_record(&header)?;
        let snaps = res.degree_snapshots.as_deref().unwrap_or_default();
        for (t, (e1, counts)) in res.e1_trajectory.iter().zip(snaps).enumerate() {
            let mut rec = vec![t.to_string(), e1.to_string()];
            rec.extend(counts.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        return Ok(());
    }
    let report = PeelReport {
        d,
        mode: a.mode,
        removed: res.removed(),
        removed_order: res.removed_order.iter().map(|v| v + 1).collect(),
        residual: res.residual.iter().map(|v| v + 1).collect(),
        e1_trajectory: res.e1_trajectory,
    };
    write_json(&a.out, &report)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let s = &a.shape;
    let mut cfg = SweepConfig::new(a.q, s.k, s.r, s.n);
    cfg.u = s.known();
    cfg.mu_grid = a.mu_grid.clone();
    cfg.mu_grid.extend(a.mu);
    if cfg.mu_grid.is_empty() {
        bail!("give --mu or --mu-grid");
    }
    if a.relative {
        let crit = mu_c(s.k, s.r)?;
        cfg.mu_grid.iter_mut().for_each(|mu| *mu *= crit);
    }
    cfg.trials = a.trials;
    cfg.seed = a.seed;
    cfg.d = a.d;
    cfg.mode = a.mode;
    cfg.alpha = a.alpha;
    cfg.budget_mb = a.budget_mb;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let table = run_sweep(&cfg)?;
    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    for row in &table.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    for p in &table.summary {
        eprintln!(
            "mu={:.6} m={} success={:.3} [{:.3}, {:.3}] mean_tau_hat={:.4} max_tau_hat={:.4}",
            p.mu, p.m, p.success_rate, p.ci.0, p.ci.1, p.mean_tau_hat, p.max_tau_hat
        );
    }
    Ok(())
}

fn chain_params(s: &Shape, m: Option<usize>, mu: Option<f64>) -> Result<ChainParams> {
    let u = s.known().resolve(s.n);
    let m = s.constraints(m, mu)?;
    Ok(ChainParams::new(s.n as u64, u as u64, m as u64, s.k, s.r)?)
}

fn chain_sim(a: ChainSimArgs) -> Result<()> {
    let p = chain_params(&a.shape, a.m, a.mu)?;
    let rows = run_chain_sim(&p, a.chain, a.steps, a.trials, a.seed);
    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    let mut header = vec!["trial".to_string(), "t".to_string(), "E1".to_string()];
    header.extend((p.low() + 1..=p.k).map(|j| format!("C_{j}")));
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.trial.to_string(), row.t.to_string(), row.e1.to_string()];
        rec.extend(row.high.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn mgf(a: MgfArgs) -> Result<()> {
    let p = chain_params(&a.shape, a.m, a.mu)?;
    let log_mgf = mgf_exact_upper(&p, a.t, a.lambda)?;
    write_json(&None, &serde_json::json!({ "lambda": a.lambda, "t": a.t, "log_mgf": log_mgf }))
}

fn analytics(a: AnalyticsArgs) -> Result<()> {
    let (k, r, mu) = (a.k, a.r, a.mu);
    let report = serde_json::json!({
        "mu_c": mu_c(k, r).ok(),
        "tau_star": tau_star(k, r, mu).ok(),
        "chernoff_ml": chernoff_ml(k, r, mu).ok(),
        "chernoff_mu": chernoff_mu(k, r, mu).ok(),
        "rho": giant_rho(k, mu).ok(),
    });
    write_json(&None, &report)
}

fn verify(a: VerifyArgs) -> Result<bool> {
    let report = run_verify(a.suite, a.seed)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("{}/{} checks passed", report.checks.len() - failed, report.checks.len());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => gen(a).map(|_| true),
        Command::Peel(a) => peel_cmd(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::ChainSim(a) => chain_sim(a).map(|_| true),
        Command::Mgf(a) => mgf(a).map(|_| true),
        Command::Analytics(a) => analytics(a).map(|_| true),
        Command::Verify(a) => verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
