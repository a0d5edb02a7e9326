//! Markov chains on constraint-degree counts under single-variable
//! `(k - r + 2)`-peeling, and the exact moment generating function of the
//! upper bounding chain.
//!
//! Degrees `1..=k-r+1` are the *low* degrees (removable constraints); the
//! bounding chains collapse them into one edge count `E = sum_j j C_j` and
//! track `C_j` individually only for `j > k - r + 1`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainParams {
    pub n: u64,
    pub u: u64,
    pub m: u64,
    pub k: usize,
    pub r: usize,
}

impl ChainParams {
    pub fn new(n: u64, u: u64, m: u64, k: usize, r: usize) -> Result<Self> {
        if r < 2 || r > k {
            return Err(Error::InvalidParams(format!("need 2 <= r <= k, got r={r}, k={k}")));
        }
        if u >= n || (k as u64) > n {
            return Err(Error::InvalidParams(format!("need u < n and k <= n, got n={n}, u={u}, k={k}")));
        }
        Ok(Self { n, u, m, k, r })
    }

    /// Largest removable degree, `k - r + 1`.
    pub fn low(&self) -> usize {
        self.k - self.r + 1
    }

    /// `N(t) = n - u - t`, the unknown variables left after `t` steps.
    pub fn remaining(&self, t: u64) -> i64 {
        self.n as i64 - self.u as i64 - t as i64
    }

    /// Hypergeometric cell probabilities `p_j = C(n-u, j) C(u, k-j) / C(n, k)`.
    pub fn cell_probabilities(&self) -> Vec<f64> {
        hypergeometric_pmf(self.n, self.u, self.k)
    }
}

fn falling(x: u64, j: usize) -> f64 {
    (0..j as u64).map(|i| x.saturating_sub(i) as f64).product()
}

fn binomial_coeff(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability that a uniform `k`-subset of `[n]` has exactly `j` members
/// outside the first `u`, for `j = 0..=k`.
pub fn hypergeometric_pmf(n: u64, u: u64, k: usize) -> Vec<f64> {
    let denom = falling(n, k);
    (0..=k)
        .map(|j| binomial_coeff(k, j) * falling(n - u, j) * falling(u, k - j) / denom)
        .collect()
}

fn binomial(rng: &mut RngStream, count: u64, p: f64) -> u64 {
    if count == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return count;
    }
    Binomial::new(count, p).expect("probability in (0, 1)").sample(rng)
}

/// `[C_0, .., C_k]` after `t` steps of the exact chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeState {
    pub t: u64,
    pub counts: Vec<u64>,
}

impl DegreeState {
    /// `E_1^{k-r+1} = sum_{j <= k-r+1} j C_j`.
    pub fn e1(&self, p: &ChainParams) -> u64 {
        (1..=p.low()).map(|j| j as u64 * self.counts[j]).sum()
    }

    pub fn is_frozen(&self, p: &ChainParams) -> bool {
        (1..=p.low()).all(|j| self.counts[j] == 0)
    }

    /// Collapses the low degrees into the edge count used by the bounding
    /// chains.
    pub fn to_bound(&self, p: &ChainParams) -> BoundState {
        BoundState {
            t: self.t,
            e1: self.e1(p) as i64,
            high: self.counts[p.low() + 1..].to_vec(),
        }
    }
}

/// `(E, C_{k-r+2}, .., C_k)` for the upper and lower bounding chains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundState {
    pub t: u64,
    pub e1: i64,
    /// `high[i]` is `C_{k-r+2+i}`.
    pub high: Vec<u64>,
}

/// Multinomial draw of the initial degree counts.
pub fn sample_initial(p: &ChainParams, rng: &mut RngStream) -> DegreeState {
    let probs = p.cell_probabilities();
    let mut counts = vec![0u64; p.k + 1];
    let mut left = p.m;
    let mut mass = 1.0;
    for j in 0..p.k {
        if left == 0 {
            break;
        }
        let c = binomial(rng, left, (probs[j] / mass).clamp(0.0, 1.0));
        counts[j] = c;
        left -= c;
        mass -= probs[j];
    }
    counts[p.k] += left;
    DegreeState { t: 0, counts }
}

/// One step of the exact chain. A state without removable constraints is
/// frozen: its counts never change again.
pub fn step_exact(p: &ChainParams, s: &DegreeState, rng: &mut RngStream) -> Result<DegreeState> {
    let low = p.low();
    let removable: u64 = s.counts[1..=low].iter().sum();
    if removable == 0 {
        return Ok(DegreeState { t: s.t + 1, counts: s.counts.clone() });
    }
    let big_n = p.remaining(s.t);
    if big_n <= 0 {
        return Err(Error::ChainExhausted(s.t));
    }
    let mut pick = rng.random_range(0..removable);
    let mut chosen = 0;
    for j in 1..=low {
        if pick < s.counts[j] {
            chosen = j;
            break;
        }
        pick -= s.counts[j];
    }
    let k = p.k;
    let mut removed = vec![0u64; k + 1];
    for (j, (r, &c)) in removed.iter_mut().zip(&s.counts).enumerate().skip(1) {
        let prob = j as f64 / big_n as f64;
        *r = if j == chosen { 1 + binomial(rng, c - 1, prob) } else { binomial(rng, c, prob) };
    }
    let mut counts = s.counts.clone();
    counts[k] -= removed[k];
    for j in 1..k {
        counts[j] = counts[j] - removed[j] + removed[j + 1];
    }
    counts[0] += removed[1];
    Ok(DegreeState { t: s.t + 1, counts })
}

/// One step of the upper chain: one low edge is consumed per step, degree
/// `k-r+2` constraints feed `k-r+1` new low edges each, and high counts only
/// grow.
pub fn step_upper(p: &ChainParams, s: &BoundState, rng: &mut RngStream) -> Result<BoundState> {
    let big_n = p.remaining(s.t);
    if big_n <= 0 {
        return Err(Error::ChainExhausted(s.t));
    }
    let low = p.low();
    let removed: Vec<u64> = s
        .high
        .iter()
        .enumerate()
        .map(|(i, &c)| binomial(rng, c, (low + 1 + i) as f64 / big_n as f64))
        .collect();
    let mut high = s.high.clone();
    for i in 0..high.len().saturating_sub(1) {
        high[i] += removed[i + 1];
    }
    Ok(BoundState {
        t: s.t + 1,
        e1: s.e1 - 1 + (low as i64) * removed[0] as i64,
        high,
    })
}

/// One step of the lower chain: high counts move down one degree, and on
/// top of the consumed edge, an extra `Binom(E + t, 1 / (N - k + r))` low
/// edges are discarded.
pub fn step_lower(p: &ChainParams, s: &BoundState, rng: &mut RngStream) -> Result<BoundState> {
    let big_n = p.remaining(s.t);
    let shrink = big_n - p.k as i64 + p.r as i64;
    if shrink <= 0 {
        return Err(Error::ChainExhausted(s.t));
    }
    let low = p.low();
    let removed: Vec<u64> = s
        .high
        .iter()
        .enumerate()
        .map(|(i, &c)| binomial(rng, c, (low + 1 + i) as f64 / big_n as f64))
        .collect();
    let pool = (s.e1 + s.t as i64).max(0) as u64;
    let extra = binomial(rng, pool, 1.0 / shrink as f64);
    let h = s.high.len();
    let mut high = s.high.clone();
    for i in 0..h {
        high[i] -= removed[i];
        if i + 1 < h {
            high[i] += removed[i + 1];
        }
    }
    Ok(BoundState {
        t: s.t + 1,
        e1: s.e1 - 1 - extra as i64 + (low as i64) * removed[0] as i64,
        high,
    })
}

/// Neumaier-compensated sum.
fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in terms {
        let t = sum + x;
        c += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + c
}

/// Tilt parameters `lambda_j` for `j = k-r+1..=k` after running the
/// backward recursion over `t` steps. Index 0 is `lambda` itself.
pub fn backward_tilts(p: &ChainParams, t: u64, lambda: f64) -> Vec<f64> {
    let low = p.low();
    let mut tilts = vec![0.0; p.k - low + 1];
    tilts[0] = lambda;
    for s in 1..=t {
        // the step from time t-s to t-s+1 draws with N(t-s)
        let big_n = p.remaining(t - s) as f64;
        let prev = tilts.clone();
        for i in 1..tilts.len() {
            let j = (low + i) as f64;
            tilts[i] = prev[i] + (j / big_n * prev[i - 1].exp_m1()).ln_1p();
        }
    }
    tilts
}

/// `log E[exp{lambda (E(t) + t) / (k - r + 1)}]` for the upper chain started
/// from the multinomial initial law, computed exactly in log space.
pub fn mgf_exact_upper(p: &ChainParams, t: u64, lambda: f64) -> Result<f64> {
    if t as i64 >= p.remaining(0) {
        return Err(Error::InvalidParams(format!("need t < n - u, got t={t}")));
    }
    let low = p.low();
    let probs = p.cell_probabilities();
    let tilts = backward_tilts(p, t, lambda);
    let terms = (1..=p.k).map(|j| {
        let tilt = if j <= low { j as f64 * lambda / low as f64 } else { tilts[j - low] };
        probs[j] * tilt.exp_m1()
    });
    let inner = compensated_sum(terms);
    Ok(p.m as f64 * inner.ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::collections::HashMap;

    #[test]
    fn cell_probabilities_small() {
        let pmf = hypergeometric_pmf(10, 4, 3);
        let want = [1.0 / 30.0, 3.0 / 10.0, 0.5, 1.0 / 6.0];
        for (a, b) in pmf.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(hypergeometric_pmf(10, 0, 3), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn initial_counts() {
        let p = ChainParams::new(100, 0, 50, 3, 3).unwrap();
        let s = sample_initial(&p, &mut stream(0, 0));
        assert_eq!(s.counts, vec![0, 0, 0, 50]);
        let p = ChainParams::new(100, 30, 500, 4, 3).unwrap();
        for trial in 0..20 {
            let s = sample_initial(&p, &mut stream(1, trial));
            assert_eq!(s.counts.iter().sum::<u64>(), 500);
        }
    }

    #[test]
    fn frozen_state_is_absorbing() {
        let p = ChainParams::new(100, 10, 5, 3, 3).unwrap();
        let s = DegreeState { t: 4, counts: vec![1, 0, 2, 2] };
        let next = step_exact(&p, &s, &mut stream(0, 0)).unwrap();
        assert_eq!(next.counts, s.counts);
        assert!(next.is_frozen(&p));
    }

    #[test]
    fn exact_step_conserves_constraints() {
        let p = ChainParams::new(200, 20, 3000, 4, 3).unwrap();
        let mut rng = stream(9, 0);
        let mut s = sample_initial(&p, &mut rng);
        for _ in 0..40 {
            let before = s.e1(&p);
            s = step_exact(&p, &s, &mut rng).unwrap();
            assert_eq!(s.counts.iter().sum::<u64>(), 3000);
            if before == 0 {
                break;
            }
        }
    }

    #[test]
    fn exhausted_chain() {
        let p = ChainParams::new(10, 4, 5, 3, 3).unwrap();
        let s = BoundState { t: 6, e1: 3, high: vec![1, 0] };
        assert_eq!(step_upper(&p, &s, &mut stream(0, 0)), Err(Error::ChainExhausted(6)));
        assert!(step_lower(&p, &s, &mut stream(0, 0)).is_err());
        assert!(step_lower(&p, &BoundState { t: 5, ..s }, &mut stream(0, 0)).is_ok());
    }

    #[test]
    fn upper_without_feed_drops_by_one() {
        let p = ChainParams::new(1000, 10, 10, 4, 3).unwrap();
        let s = BoundState { t: 0, e1: 5, high: vec![0, 7] };
        let next = step_upper(&p, &s, &mut stream(0, 0)).unwrap();
        assert_eq!(next.e1, 4);
        assert_eq!(next.high[1], 7);
    }

    #[test]
    fn upper_top_count_is_constant() {
        let p = ChainParams::new(500, 20, 4000, 4, 3).unwrap();
        let mut rng = stream(4, 4);
        let mut s = sample_initial(&p, &mut rng).to_bound(&p);
        let top = *s.high.last().unwrap();
        for _ in 0..100 {
            s = step_upper(&p, &s, &mut rng).unwrap();
            assert_eq!(*s.high.last().unwrap(), top);
        }
    }

    #[test]
    fn lower_without_draws_drops_by_one() {
        let p = ChainParams::new(1000, 10, 10, 3, 3).unwrap();
        let s = BoundState { t: 0, e1: 0, high: vec![0, 0] };
        let next = step_lower(&p, &s, &mut stream(0, 0)).unwrap();
        assert_eq!(next.e1, -1);
    }

    #[test]
    fn mgf_trivial_points() {
        let p = ChainParams::new(5000, 70, 14881, 3, 3).unwrap();
        assert_eq!(mgf_exact_upper(&p, 35, 0.0).unwrap(), 0.0);
        let lambda: f64 = 0.7;
        let probs = p.cell_probabilities();
        let direct = p.m as f64 * (probs[0] + probs[1] * lambda.exp() + probs[2] + probs[3]).ln();
        let got = mgf_exact_upper(&p, 0, lambda).unwrap();
        assert!((got - direct).abs() <= 1e-9 * direct.abs(), "{got} vs {direct}");
        assert!(mgf_exact_upper(&p, 4930, 0.1).is_err());
    }

    /// Exact law of the upper chain by dynamic programming over states.
    fn upper_mgf_by_enumeration(p: &ChainParams, t: u64, lambda: f64) -> f64 {
        fn binom_pmf(c: u64, prob: f64) -> Vec<f64> {
            (0..=c)
                .map(|x| super::binomial_coeff(c as usize, x as usize) * prob.powi(x as i32) * (1.0 - prob).powi((c - x) as i32))
                .collect()
        }
        let low = p.low();
        let probs = p.cell_probabilities();
        // initial multinomial by adding constraints one at a time
        let mut dist: HashMap<Vec<u64>, f64> = HashMap::from([(vec![0; p.k + 1], 1.0)]);
        for _ in 0..p.m {
            let mut next = HashMap::new();
            for (c, w) in &dist {
                for (j, pj) in probs.iter().enumerate() {
                    let mut c2 = c.clone();
                    c2[j] += 1;
                    *next.entry(c2).or_insert(0.0) += w * pj;
                }
            }
            dist = next;
        }
        let mut states: HashMap<(i64, Vec<u64>), f64> = HashMap::new();
        for (c, w) in dist {
            let s = DegreeState { t: 0, counts: c }.to_bound(p);
            *states.entry((s.e1, s.high)).or_insert(0.0) += w;
        }
        for step in 0..t {
            let big_n = p.remaining(step) as f64;
            let mut next = HashMap::new();
            for ((e, high), w) in &states {
                // joint law of the independent removals
                let mut partial: Vec<(Vec<u64>, f64)> = vec![(vec![], *w)];
                for (i, &c) in high.iter().enumerate() {
                    let pmf = binom_pmf(c, (low + 1 + i) as f64 / big_n);
                    partial = partial
                        .into_iter()
                        .flat_map(|(rs, pw)| {
                            pmf.iter().enumerate().map(move |(x, px)| {
                                let mut rs2 = rs.clone();
                                rs2.push(x as u64);
                                (rs2, pw * px)
                            })
                        })
                        .collect();
                }
                for (rs, pw) in partial {
                    let mut h2 = high.clone();
                    for i in 0..h2.len() - 1 {
                        h2[i] += rs[i + 1];
                    }
                    let e2 = e - 1 + low as i64 * rs[0] as i64;
                    *next.entry((e2, h2)).or_insert(0.0) += pw;
                }
            }
            states = next;
        }
        states
            .iter()
            .map(|((e, _), w)| w * (lambda * (*e + t as i64) as f64 / low as f64).exp())
            .sum::<f64>()
            .ln()
    }

    #[test]
    fn mgf_matches_state_enumeration() {
        for (n, u, m, k, r, t) in [(9, 3, 4, 3, 3, 3), (10, 4, 3, 4, 3, 3), (9, 2, 3, 4, 4, 2), (8, 3, 3, 3, 2, 3)] {
            let p = ChainParams::new(n, u, m, k, r).unwrap();
            for lambda in [-0.8, 0.3, 1.1] {
                let exact = upper_mgf_by_enumeration(&p, t, lambda);
                let got = mgf_exact_upper(&p, t, lambda).unwrap();
                assert!((exact - got).abs() < 1e-12 * exact.abs().max(1.0), "{n} {u} {m} {k} {r}: {exact} vs {got}");
            }
        }
    }

    #[test]
    fn compensated_sum_cancels() {
        let terms = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(terms), 2.0);
    }
}
