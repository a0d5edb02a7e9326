//! Reproducible experiments: threshold sweeps, chain simulations and the
//! self-check suites behind `pcsp verify`.
//!
//! Every trial draws from its own stream addressed by the master seed and a
//! trial index, and results are reduced in trial order, so output does not
//! depend on the number of worker threads.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::expected_stopping_sets;
use crate::chain::{mgf_exact_upper, sample_initial, step_exact, step_lower, step_upper, BoundState, ChainParams};
use crate::error::{Error, Result};
use crate::field_mds::{self, make_rs_local_function, LocalFunction, EXHAUSTIVE_GUARD};
use crate::instance::{generate, sample_graph, BipartiteInstance};
use crate::lp::{self, Fixing, LpGuard};
use crate::peeling::{peel, PeelMode, PeelOptions};
use crate::rng::{stream, RngStream};

/// Runs `f` on a pool capped by `PCSP_THREADS` when set.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var("PCSP_THREADS").ok().and_then(|s| s.parse::<usize>().ok());
    match threads {
        Some(t) if t > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .expect("thread pool")
            .install(f),
        _ => f(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnownCount {
    /// `u = ceil(n^e)`.
    Exponent(f64),
    Explicit(usize),
}

impl KnownCount {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            KnownCount::Exponent(e) => (n as f64).powf(e).ceil() as usize,
            KnownCount::Explicit(u) => u,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub q: u32,
    pub k: usize,
    pub r: usize,
    pub n: usize,
    pub u: KnownCount,
    pub mu_grid: Vec<f64>,
    pub trials: usize,
    /// Peeling depth; `k - r + 2` when absent.
    pub d: Option<usize>,
    /// A trial succeeds when at least `alpha n` variables are removed.
    pub alpha: f64,
    pub seed: u64,
    pub mode: PeelMode,
    /// Per-trial memory cap in MiB.
    pub budget_mb: Option<u64>,
}

impl SweepConfig {
    pub fn new(q: u32, k: usize, r: usize, n: usize) -> Self {
        Self {
            q,
            k,
            r,
            n,
            u: KnownCount::Exponent(0.45),
            mu_grid: Vec::new(),
            trials: 50,
            d: None,
            alpha: 0.05,
            seed: 0,
            mode: PeelMode::Batch,
            budget_mb: None,
        }
    }

    pub fn depth(&self) -> usize {
        self.d.unwrap_or(self.k - self.r + 2)
    }

    pub fn known(&self) -> usize {
        self.u.resolve(self.n)
    }

    /// `round(mu n^{r-1} / u^{r-2})`.
    pub fn constraints(&self, mu: f64) -> usize {
        let u = self.known() as f64;
        (mu * (self.n as f64).powi(self.r as i32 - 1) / u.powi(self.r as i32 - 2)).round() as usize
    }

    /// Warnings for settings outside the regime `u = omega(1), u = o(n)`.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let KnownCount::Exponent(e) = self.u {
            if !(e > 0.0 && e < 1.0) {
                out.push(format!("u exponent {e} is outside (0, 1)"));
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let u = self.known();
        if u >= self.n {
            return Err(Error::InvalidParams(format!("u = {u} must be below n = {}", self.n)));
        }
        let d = self.depth();
        if d < 2 || d > self.k {
            return Err(Error::InvalidParams(format!("peeling depth {d} outside 2..={}", self.k)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParams("at least one trial is required".into()));
        }
        Ok(())
    }

    /// Rough per-trial footprint: constraints, outputs, incidence lists and
    /// per-constraint peeling state.
    pub fn trial_bytes(&self, m: usize) -> u128 {
        let per_constraint = 4 * (2 * self.k + (self.k - self.r + 1) + 2);
        (m as u128) * per_constraint as u128 + 16 * self.n as u128
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub mu: f64,
    pub n: usize,
    pub u: usize,
    pub m: usize,
    pub trial: usize,
    pub removed: usize,
    pub residual: usize,
    pub success: bool,
    pub tau_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub mu: f64,
    pub m: usize,
    pub trials: usize,
    pub success_rate: f64,
    /// 95% Wilson interval for the success rate.
    pub ci: (f64, f64),
    pub mean_tau_hat: f64,
    pub max_tau_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<TrialRow>,
    pub summary: Vec<PointSummary>,
}

fn wilson(successes: usize, trials: usize) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn sweep_trial(cfg: &SweepConfig, f: &LocalFunction, mu: f64, point: usize, trial: usize) -> Result<TrialRow> {
    let (n, u, m) = (cfg.n, cfg.known(), cfg.constraints(mu));
    let index = ((point as u64) << 32) | trial as u64;
    let mut rng = stream(cfg.seed, index);
    let inst = generate(f, n, u, m, cfg.seed, &mut rng)?;
    let start = inst.graph().unknowns();
    let res = peel(inst.graph(), &start, &PeelOptions::new(cfg.depth(), cfg.mode), &mut rng);
    let removed = res.removed();
    Ok(TrialRow {
        mu,
        n,
        u,
        m,
        trial,
        removed,
        residual: res.residual.len(),
        success: removed as f64 >= cfg.alpha * n as f64,
        tau_hat: removed as f64 / u as f64,
    })
}

/// Samples, plants and peels `trials` instances per grid point.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let points: Vec<u32> = (0..cfg.k as u32).collect();
    let f = make_rs_local_function(cfg.q, cfg.k, cfg.r, &points)?;
    if let Some(mb) = cfg.budget_mb {
        let worst = cfg.mu_grid.iter().map(|&mu| cfg.constraints(mu)).max().unwrap_or(0);
        let needed = cfg.trial_bytes(worst);
        let guard = mb as u128 * (1 << 20);
        if needed > guard {
            return Err(Error::GuardExceeded { needed, guard });
        }
    }
    let jobs: Vec<(usize, f64, usize)> = cfg
        .mu_grid
        .iter()
        .enumerate()
        .flat_map(|(p, &mu)| (0..cfg.trials).map(move |t| (p, mu, t)))
        .collect();
    let rows: Vec<TrialRow> = with_pool(|| {
        jobs.par_iter()
            .map(|&(p, mu, t)| sweep_trial(cfg, &f, mu, p, t))
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = rows
        .chunks(cfg.trials)
        .map(|chunk| {
            let wins = chunk.iter().filter(|r| r.success).count();
            PointSummary {
                mu: chunk[0].mu,
                m: chunk[0].m,
                trials: chunk.len(),
                success_rate: wins as f64 / chunk.len() as f64,
                ci: wilson(wins, chunk.len()),
                mean_tau_hat: chunk.iter().map(|r| r.tau_hat).sum::<f64>() / chunk.len() as f64,
                max_tau_hat: chunk.iter().map(|r| r.tau_hat).fold(0.0, f64::max),
            }
        })
        .collect();
    Ok(SweepTable { rows, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    Exact,
    Upper,
    Lower,
}

impl std::str::FromStr for ChainKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(ChainKind::Exact),
            "upper" => Ok(ChainKind::Upper),
            "lower" => Ok(ChainKind::Lower),
            other => Err(format!("unknown chain {other:?}")),
        }
    }
}

/// One trajectory point; `high[i]` is `C_{k-r+2+i}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRow {
    pub trial: usize,
    pub t: u64,
    pub e1: i64,
    pub high: Vec<u64>,
}

fn chain_trajectory(p: &ChainParams, kind: ChainKind, steps: u64, trial: usize, rng: &mut RngStream) -> Vec<ChainRow> {
    let start = sample_initial(p, rng);
    let row = |s: &BoundState| ChainRow { trial, t: s.t, e1: s.e1, high: s.high.clone() };
    let mut rows = Vec::with_capacity(steps as usize + 1);
    match kind {
        ChainKind::Exact => {
            let mut s = start;
            rows.push(row(&s.to_bound(p)));
            for _ in 0..steps {
                match step_exact(p, &s, rng) {
                    Ok(next) => s = next,
                    Err(_) => break,
                }
                rows.push(row(&s.to_bound(p)));
            }
        }
        ChainKind::Upper | ChainKind::Lower => {
            let mut s = start.to_bound(p);
            rows.push(row(&s));
            for _ in 0..steps {
                let next = if kind == ChainKind::Upper { step_upper(p, &s, rng) } else { step_lower(p, &s, rng) };
                match next {
                    Ok(next) => s = next,
                    Err(_) => break,
                }
                rows.push(row(&s));
            }
        }
    }
    rows
}

/// Simulates `trials` independent trajectories of `steps` steps each.
/// Trajectories stop early once `N(t)` runs out.
pub fn run_chain_sim(p: &ChainParams, kind: ChainKind, steps: u64, trials: usize, seed: u64) -> Vec<ChainRow> {
    with_pool(|| {
        (0..trials)
            .into_par_iter()
            .map(|trial| chain_trajectory(p, kind, steps, trial, &mut stream(seed, trial as u64)))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Mean and standard error of `exp{lambda (E(t) + t) / (k - r + 1)}` over
/// `runs` upper-chain runs.
pub fn upper_mgf_monte_carlo(p: &ChainParams, t: u64, lambda: f64, runs: usize, seed: u64) -> Result<(f64, f64)> {
    let low = p.low() as f64;
    let samples: Vec<f64> = with_pool(|| {
        (0..runs)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, i as u64);
                let mut s = sample_initial(p, &mut rng).to_bound(p);
                for _ in 0..t {
                    s = step_upper(p, &s, &mut rng)?;
                }
                Ok((lambda * (s.e1 + t as i64) as f64 / low).exp())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Mds,
    Lp,
    Chain,
    Confluence,
    Ez,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mds" => Ok(Suite::Mds),
            "lp" => Ok(Suite::Lp),
            "chain" => Ok(Suite::Chain),
            "confluence" => Ok(Suite::Confluence),
            "ez" => Ok(Suite::Ez),
            other => Err(format!("unknown suite {other:?} (expected mds, lp, chain, confluence or ez)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), passed, detail: detail.into() }
}

pub fn run_verify(suite: Suite, seed: u64) -> Result<VerifyReport> {
    let checks = match suite {
        Suite::Mds => verify_mds()?,
        Suite::Lp => verify_lp(seed)?,
        Suite::Chain => verify_chain(seed)?,
        Suite::Confluence => verify_confluence(seed)?,
        Suite::Ez => verify_ez()?,
    };
    Ok(VerifyReport { suite, checks })
}

const SMALL_PRIMES: [u32; 5] = [2, 3, 5, 7, 11];

fn verify_mds() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for q in SMALL_PRIMES {
        for k in 2..=q as usize {
            for r in 2..=k {
                let points: Vec<u32> = (0..k as u32).collect();
                let f = make_rs_local_function(q, k, r, &points)?;
                let algebraic = field_mds::mds_by_minors(&f) && field_mds::wise_independence_by_rank(&f, r - 1);
                let mut detail = String::from("minors and ranks");
                let mut passed = algebraic;
                if (q as u128).pow(k as u32) <= EXHAUSTIVE_GUARD / 10 {
                    let exhaustive = field_mds::verify_mds_inverse(&f, EXHAUSTIVE_GUARD)?
                        && field_mds::verify_wise_independence(&f, r - 1, EXHAUSTIVE_GUARD)?;
                    passed &= exhaustive;
                    detail.push_str(", exhaustive fibers");
                }
                out.push(check(format!("q={q} k={k} r={r}"), passed, detail));
            }
        }
    }
    Ok(out)
}

/// Outcome of comparing peeling with the exact LP on one tiny instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpAgreement {
    pub witness_ok: bool,
    pub peeled_pinned: bool,
    pub residual_free: bool,
}

impl LpAgreement {
    pub fn all(&self) -> bool {
        self.witness_ok && self.peeled_pinned && self.residual_free
    }
}

/// Checks that the zero-objective LP pins exactly the peeled variables.
pub fn lp_agreement(inst: &crate::instance::PlantedInstance, rng: &mut RngStream) -> Result<LpAgreement> {
    let g = inst.graph();
    let f = inst.function();
    let d = f.k() - f.r() + 2;
    let res = peel(g, &g.unknowns(), &PeelOptions::new(d, PeelMode::Batch), rng);
    let witness = lp::build_witness(inst, &res.residual)?;
    let witness_ok = lp::verify_local_membership(inst, &witness).is_ok() && lp::objective(inst, &witness).is_zero();
    let guard = LpGuard::default();
    let mut peeled_pinned = true;
    for &v in &res.removed_order {
        for w in (0..f.q()).filter(|&w| w != inst.planted()[v as usize]) {
            let fix = BTreeMap::from([(v, Fixing::Value(w))]);
            peeled_pinned &= !lp::zero_feasible(inst, &fix, &guard)?;
        }
    }
    let mut residual_free = true;
    for &v in &res.residual {
        let fix = BTreeMap::from([(v, Fixing::Uniform)]);
        residual_free &= lp::zero_feasible(inst, &fix, &guard)?;
    }
    Ok(LpAgreement { witness_ok, peeled_pinned, residual_free })
}

/// Tiny random SPC instance over GF(3) with `n <= 10`, `m <= 6`.
pub fn tiny_planted(rng: &mut RngStream, seed: u64) -> Result<crate::instance::PlantedInstance> {
    use rand::Rng;
    let f = LocalFunction::single_parity_check(3, 3)?;
    let n = rng.random_range(4..=10);
    let u = rng.random_range(1..=2);
    let m = rng.random_range(1..=6);
    generate(&f, n, u, m, seed, rng)
}

fn verify_lp(seed: u64) -> Result<Vec<Check>> {
    let results: Vec<Result<Check>> = with_pool(|| {
        (0..100u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, i);
                let inst = tiny_planted(&mut rng, seed)?;
                let a = lp_agreement(&inst, &mut rng)?;
                Ok(check(
                    format!("instance {i}"),
                    a.all(),
                    format!("witness={} pinned={} free={}", a.witness_ok, a.peeled_pinned, a.residual_free),
                ))
            })
            .collect()
    });
    results.into_iter().collect()
}

fn verify_confluence(seed: u64) -> Result<Vec<Check>> {
    use rand::Rng;
    let mut out = Vec::new();
    for i in 0..100u64 {
        let mut rng = stream(seed, i);
        let n = rng.random_range(20..=200);
        let k = rng.random_range(3..=5);
        let u = rng.random_range(1..=n / 4);
        let m = rng.random_range(n / 4..=2 * n);
        let d = rng.random_range(2..=k);
        let g = sample_graph(n, u, m, k, &mut rng)?;
        let start = g.unknowns();
        let residuals: Vec<Vec<u32>> = (0..10)
            .map(|j| {
                let mode = if j % 2 == 0 { PeelMode::Batch } else { PeelMode::Single };
                peel(&g, &start, &PeelOptions::new(d, mode), &mut rng).residual
            })
            .collect();
        let same = residuals.windows(2).all(|w| w[0] == w[1]);
        out.push(check(format!("instance {i}"), same, format!("n={n} m={m} k={k} d={d} residual={}", residuals[0].len())));
    }
    Ok(out)
}

/// Exact mean number of `d`-stopping sets of size `l` over every sequence
/// of `m` unordered `k`-subsets of `[n]`.
pub fn stopping_sets_by_enumeration(n: usize, k: usize, m: usize, d: usize, l: usize) -> BigRational {
    use itertools::Itertools;
    let subsets: Vec<Vec<u32>> = (0..n as u32).combinations(k).collect();
    let sets: Vec<Vec<u32>> = (0..n as u32).combinations(l).collect();
    let mut total = BigInt::zero();
    let mut count = BigInt::zero();
    for choice in std::iter::repeat_n(subsets.iter(), m).multi_cartesian_product() {
        let tuples: Vec<Vec<u32>> = choice.into_iter().cloned().collect();
        let g = BipartiteInstance::new(n, 0, k, &tuples).expect("valid tuples");
        total += sets.iter().filter(|s| crate::peeling::is_stopping_set(&g, s, d)).count();
        count += 1;
    }
    BigRational::new(total, count)
}

fn verify_ez() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (n, k, m, d, l) in [(5, 3, 2, 2, 1), (5, 3, 2, 3, 2), (6, 3, 2, 2, 2), (5, 2, 3, 2, 2)] {
        let closed = expected_stopping_sets(n, k, m, d, l)?;
        let brute = stopping_sets_by_enumeration(n, k, m, d, l);
        out.push(check(
            format!("n={n} k={k} m={m} d={d} l={l}"),
            closed == brute,
            format!("closed form {closed}, enumeration {brute}"),
        ));
    }
    Ok(out)
}

fn verify_chain(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p = ChainParams::new(400, 20, 600, 3, 3)?;
    let (t, runs) = (8, 20_000);
    for lambda in [-0.5, 0.0, 0.5] {
        let exact = mgf_exact_upper(&p, t, lambda)?.exp();
        let (mean, se) = upper_mgf_monte_carlo(&p, t, lambda, runs, seed)?;
        let passed = if lambda == 0.0 { mean == 1.0 && exact == 1.0 } else { (mean - exact).abs() <= 3.0 * se };
        out.push(check(format!("upper MGF lambda={lambda}"), passed, format!("exact {exact:.6}, simulated {mean:.6} +- {se:.6}")));
    }

    // exact chain against single-variable peeling on the same ensemble
    let (n, u, m, k, steps, trials) = (2000usize, 60usize, 4000usize, 3usize, 10usize, 10_000usize);
    let cp = ChainParams::new(n as u64, u as u64, m as u64, k, 3)?;
    let f = LocalFunction::single_parity_check(3, k)?;
    let peeled: Vec<Option<Vec<u64>>> = with_pool(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed ^ 0x5eed, i as u64);
                let inst = generate(&f, n, u, m, seed, &mut rng).ok()?;
                let opts = PeelOptions::new(2, PeelMode::Single).with_snapshots();
                let res = peel(inst.graph(), &inst.graph().unknowns(), &opts, &mut rng);
                let snaps = res.degree_snapshots?;
                snaps.get(steps).cloned().or_else(|| snaps.last().cloned())
            })
            .collect()
    });
    let simulated: Vec<Vec<u64>> = with_pool(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed ^ 0xc4a1, i as u64);
                let mut s = sample_initial(&cp, &mut rng);
                for _ in 0..steps {
                    s = step_exact(&cp, &s, &mut rng).expect("chain has room");
                }
                s.counts
            })
            .collect()
    });
    let peeled: Vec<Vec<u64>> = peeled.into_iter().flatten().collect();
    for j in 0..=k {
        let a: Vec<f64> = peeled.iter().map(|c| c[j] as f64).collect();
        let b: Vec<f64> = simulated.iter().map(|c| c[j] as f64).collect();
        let z = welch_z(&a, &b);
        out.push(check(format!("C_{j}(t={steps}) peel vs chain"), z.abs() < 4.0, format!("z = {z:.3}")));
    }
    Ok(out)
}

/// Two-sample z statistic for a difference in means.
pub fn welch_z(a: &[f64], b: &[f64]) -> f64 {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var / n)
    };
    let (ma, va) = stats(a);
    let (mb, vb) = stats(b);
    if va + vb == 0.0 {
        return if ma == mb { 0.0 } else { f64::INFINITY };
    }
    (ma - mb) / (va + vb).sqrt()
}
