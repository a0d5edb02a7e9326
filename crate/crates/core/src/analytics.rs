//! Closed-form thresholds and Chernoff exponents for peeling with
//! `m = mu n^{r-1} / u^{r-2}` constraints and `u` known variables.

use num_bigint::BigUint;
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub k: usize,
    pub r: usize,
    pub mu: f64,
    pub tau: f64,
    pub lambda: f64,
}

impl ThresholdParams {
    pub fn phi(&self) -> f64 {
        phi(self.k, self.r, self.mu, self.lambda, self.tau)
    }
}

fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_r3(k: usize, r: usize) -> Result<()> {
    if r < 3 || r > k {
        return Err(Error::InvalidParams(format!("need 3 <= r <= k, got k={k}, r={r}")));
    }
    Ok(())
}

/// `mu_c(k, r) = (r-2)^{r-2} / (C(k, r) r (r-1)^{r-1})`.
pub fn mu_c(k: usize, r: usize) -> Result<f64> {
    check_r3(k, r)?;
    let a = (r - 2) as f64;
    let b = (r - 1) as f64;
    Ok(a.powi(r as i32 - 2) / (choose(k, r) * r as f64 * b.powi(r as i32 - 1)))
}

/// `h(tau) = tau / (C(k, r) r (1 + tau)^{r-1})`; the stall density at which
/// `tau` solves the threshold equation.
fn stall_density(k: usize, r: usize, tau: f64) -> f64 {
    tau / (choose(k, r) * r as f64 * (1.0 + tau).powi(r as i32 - 1))
}

fn bisect(mut lo: f64, mut hi: f64, increasing: bool, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Unique root of `mu = h(tau)` in `(0, 1/(r-2))`.
pub fn tau_star(k: usize, r: usize, mu: f64) -> Result<f64> {
    let crit = mu_c(k, r)?;
    if !(mu > 0.0 && mu < crit) {
        return Err(Error::InvalidParams(format!("tau_star needs 0 < mu < mu_c = {crit}, got {mu}")));
    }
    let edge = 1.0 / (r - 2) as f64;
    Ok(bisect(0.0, edge, true, |t| stall_density(k, r, t) - mu))
}

/// Root of `mu = h(tau)` beyond `1/(r-2)`, where `h` decreases.
fn tau_upper(k: usize, r: usize, mu: f64) -> f64 {
    let edge = 1.0 / (r - 2) as f64;
    let mut hi = 2.0 * edge;
    while stall_density(k, r, hi) > mu {
        hi *= 2.0;
    }
    bisect(edge, hi, false, |t| stall_density(k, r, t) - mu)
}

/// `phi = mu (e^{(k-r+1) lambda} - 1) C(k, r-1) (1+tau)^{r-1} - lambda tau`.
pub fn phi(k: usize, r: usize, mu: f64, lambda: f64, tau: f64) -> f64 {
    let c = (k - r + 1) as f64;
    mu * (c * lambda).exp_m1() * choose(k, r - 1) * (1.0 + tau).powi(r as i32 - 1) - lambda * tau
}

/// Exponent for the lower chain's degree-`j` count:
/// `mu (e^lambda - 1) C(k, k-j) (1+tau)^{k-j}`, to be multiplied by
/// [`lower_count_scale`].
pub fn phi_lower(k: usize, j: usize, mu: f64, lambda: f64, tau: f64) -> f64 {
    mu * lambda.exp_m1() * choose(k, k - j) * (1.0 + tau).powi((k - j) as i32)
}

/// `n^{j-k+r-1} / u^{j-k+r-2}`, the order of the lower chain's `C_j`.
pub fn lower_count_scale(n: f64, u: f64, k: usize, r: usize, j: usize) -> f64 {
    let e = j as i32 - k as i32 + r as i32;
    n.powi(e - 1) / u.powi(e - 2)
}

/// Stationary point of `lambda -> phi` at fixed `tau`.
pub fn stationary_lambda(k: usize, r: usize, mu: f64, tau: f64) -> f64 {
    let c = (k - r + 1) as f64;
    let a = mu * choose(k, r - 1) * (1.0 + tau).powi(r as i32 - 1);
    (tau / (c * a)).ln() / c
}

fn phi_at_stationary(k: usize, r: usize, mu: f64, tau: f64) -> f64 {
    phi(k, r, mu, stationary_lambda(k, r, mu, tau), tau)
}

/// Minimizes `f` on `[lo, hi]`: a coarse grid brackets the best point, then
/// golden-section search refines it.
fn minimize(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    const GRID: usize = 64;
    let step = (hi - lo) / GRID as f64;
    let best = (0..=GRID)
        .map(|i| lo + step * i as f64)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
        if b - a <= 1e-13 * b.abs().max(1.0) {
            break;
        }
    }
    f1.min(f2).min(f(best))
}

/// `inf_{lambda > 0, tau > 0} phi`. Negative exactly on the subcritical side,
/// where `d phi / d lambda < 0` at `lambda = 0` for `tau` between the two
/// roots of `h(tau) = mu`; zero otherwise.
pub fn chernoff_ml(k: usize, r: usize, mu: f64) -> Result<f64> {
    let crit = mu_c(k, r)?;
    if mu <= 0.0 {
        return Err(Error::InvalidParams(format!("mu must be positive, got {mu}")));
    }
    if mu >= crit {
        return Ok(0.0);
    }
    let lo = tau_star(k, r, mu)?;
    let hi = tau_upper(k, r, mu);
    Ok(minimize(lo, hi, |t| phi_at_stationary(k, r, mu, t)).min(0.0))
}

/// `sup_{tau > 0} inf_{lambda < 0} phi`. Zero whenever some `tau` has
/// `d phi / d lambda <= 0` at `lambda = 0`, which is exactly `mu <= mu_c`.
pub fn chernoff_mu(k: usize, r: usize, mu: f64) -> Result<f64> {
    let crit = mu_c(k, r)?;
    if mu <= 0.0 {
        return Err(Error::InvalidParams(format!("mu must be positive, got {mu}")));
    }
    if mu <= crit {
        return Ok(0.0);
    }
    // the inner infimum is increasing in h(tau), so the maximizer sits near
    // 1/(r-2); search a generous window around it
    let hi = 8.0 / (r - 2) as f64;
    let best = -minimize(1e-9, hi, |t| -phi_at_stationary(k, r, mu, t));
    Ok(best.min(0.0))
}

fn binom_big(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    binomial(BigUint::from(n), BigUint::from(k))
}

/// Expected number of `d`-stopping sets of size `l` among `n` variables under
/// `m` independent uniform `k`-subsets, as an exact rational.
pub fn expected_stopping_sets(n: usize, k: usize, m: usize, d: usize, l: usize) -> Result<BigRational> {
    if l == 0 || l > n || k > n || k == 0 {
        return Err(Error::InvalidParams(format!("need 1 <= l <= n and 1 <= k <= n, got n={n}, k={k}, l={l}")));
    }
    let numer: BigUint = std::iter::once(0)
        .chain(d.max(1)..=k)
        .map(|s| binom_big(l, s) * binom_big(n - l, k - s))
        .sum();
    let single = BigRational::new(numer.into(), binom_big(n, k).into());
    let mut out = BigRational::from_integer(binom_big(n, l).into());
    let mut pow = BigRational::one();
    for _ in 0..m {
        pow *= &single;
    }
    out *= pow;
    Ok(out)
}

/// Smallest positive fixed point of `rho = exp{mu k (rho^{k-1} - 1)}`; `1 -
/// rho` is the giant-component fraction of a random `k`-uniform hypergraph
/// with `mu n` edges.
pub fn giant_rho(k: usize, mu: f64) -> Result<f64> {
    if mu <= 0.0 || k < 2 {
        return Err(Error::InvalidParams(format!("need mu > 0 and k >= 2, got mu={mu}, k={k}")));
    }
    let c = mu * k as f64;
    if c * (k - 1) as f64 <= 1.0 {
        return Ok(1.0);
    }
    let g = |rho: f64| (c * (rho.powi(k as i32 - 1) - 1.0)).exp();
    let mut rho = 0.0;
    for _ in 0..10_000_000 {
        let next = 0.5 * (rho + g(rho));
        if (next - rho).abs() < 1e-15 && (next - g(next)).abs() <= 1e-12 {
            return Ok(next);
        }
        rho = next;
    }
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R2Quantity {
    /// Width `delta_mu` of the no-small-stopping-set window for
    /// `m = mu n log n`; needs `mu >= 1/k`.
    Small,
    /// Giant-component fraction `1 - rho` for `m = mu n`; needs
    /// `mu > 1/(k(k-1))`.
    Large,
    /// Stall constant `k(k-1) mu / (1 - k(k-1) mu)` for `m = mu n`; needs
    /// `mu < 1/(k(k-1))`.
    LargeConverse,
}

pub fn small_set_threshold(k: usize) -> f64 {
    1.0 / k as f64
}

pub fn large_set_threshold(k: usize) -> f64 {
    1.0 / (k * (k - 1)) as f64
}

/// Constants for pairwise (`r = 2`) local functions.
pub fn lemma_r2(k: usize, mu: f64, which: R2Quantity) -> Result<f64> {
    if k < 2 || mu <= 0.0 {
        return Err(Error::InvalidParams(format!("need k >= 2 and mu > 0, got k={k}, mu={mu}")));
    }
    let kk = k as f64;
    let out_of_range = || Error::InvalidParams(format!("mu={mu} outside the range of {which:?} for k={k}"));
    match which {
        R2Quantity::Small => {
            if mu < small_set_threshold(k) {
                return Err(out_of_range());
            }
            Ok(1.0 - (mu * kk).powf(-1.0 / (kk - 1.0)))
        }
        R2Quantity::Large => {
            if mu <= large_set_threshold(k) {
                return Err(out_of_range());
            }
            Ok(1.0 - giant_rho(k, mu)?)
        }
        R2Quantity::LargeConverse => {
            let x = kk * (kk - 1.0) * mu;
            if x >= 1.0 {
                return Err(out_of_range());
            }
            Ok(x / (1.0 - x))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn critical_densities() {
        assert!(close(mu_c(3, 3).unwrap(), 1.0 / 12.0, 1e-15));
        assert!(close(mu_c(4, 4).unwrap(), 1.0 / 27.0, 1e-15));
        assert!(close(mu_c(5, 3).unwrap(), 1.0 / 120.0, 1e-15));
        assert!(mu_c(3, 2).is_err());
        assert!(mu_c(3, 4).is_err());
    }

    #[test]
    fn tau_star_values() {
        let t = tau_star(3, 3, 1.0 / 24.0).unwrap();
        assert!(close(t, 3.0 - 2.0 * 2f64.sqrt(), 1e-12));
        assert!(tau_star(3, 3, 1e-9).unwrap() < 1e-7);
        assert!(tau_star(3, 3, 1.0 / 12.0 - 1e-12).unwrap() > 0.99);
        assert!(tau_star(3, 3, 1.0 / 12.0).is_err());
        for (k, r) in [(3, 3), (4, 3), (4, 4), (5, 3), (5, 4), (5, 5)] {
            let crit = mu_c(k, r).unwrap();
            for f in [0.05, 0.3, 0.6, 0.95] {
                let t = tau_star(k, r, f * crit).unwrap();
                assert!(close(stall_density(k, r, t), f * crit, 1e-10 * crit));
            }
        }
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(4, 3, 0.2, 0.0, 0.7), 0.0);
        assert!(close(phi(3, 3, 1.0 / 12.0, 1.0, 1.0), std::f64::consts::E - 2.0, 1e-14));
    }

    #[test]
    fn lower_exponent_values() {
        assert_eq!(phi_lower(3, 2, 0.1, 0.0, 0.4), 0.0);
        assert!(close(phi_lower(3, 2, 0.1, 1.0, 0.5), 0.1 * (std::f64::consts::E - 1.0) * 3.0 * 1.5, 1e-15));
        assert_eq!(lower_count_scale(1e4, 40.0, 3, 3, 2), 1e4);
        assert!(close(lower_count_scale(1e4, 40.0, 4, 3, 3), 1e4, 1e-9));
        assert!(close(lower_count_scale(1e4, 40.0, 4, 3, 4), 1e8 / 40.0, 1e-6));
    }

    #[test]
    fn phi_slope_at_zero() {
        let h = 1e-6;
        for (k, r, mu, tau) in [(3, 3, 0.05, 0.3), (5, 3, 0.004, 1.2), (5, 4, 0.001, 0.4), (4, 4, 0.02, 0.9)] {
            let fd = (phi(k, r, mu, h, tau) - phi(k, r, mu, -h, tau)) / (2.0 * h);
            let closed = mu * r as f64 * choose(k, r) * (1.0 + tau).powi(r as i32 - 1) - tau;
            assert!(close(fd, closed, 1e-8), "{fd} vs {closed}");
        }
    }

    #[test]
    fn stationary_point_zeroes_slope() {
        let (k, r, mu, tau) = (5, 3, 0.003, 0.8);
        let l = stationary_lambda(k, r, mu, tau);
        let h = 1e-6;
        let fd = (phi(k, r, mu, l + h, tau) - phi(k, r, mu, l - h, tau)) / (2.0 * h);
        assert!(fd.abs() < 1e-8);
    }

    fn grid_inf(k: usize, r: usize, mu: f64, positive: bool) -> f64 {
        let mut best = f64::INFINITY;
        for i in 1..=300 {
            let tau = i as f64 * 0.01;
            for j in 1..=300 {
                let l = j as f64 * 0.01 * if positive { 1.0 } else { -1.0 };
                best = best.min(phi(k, r, mu, l, tau));
            }
        }
        best
    }

    #[test]
    fn chernoff_ml_is_an_infimum() {
        let v = chernoff_ml(3, 3, 1.0 / 24.0).unwrap();
        assert!(v < 0.0);
        let grid = grid_inf(3, 3, 1.0 / 24.0, true);
        assert!(v <= grid + 1e-12);
        assert!(grid - v < 1e-3, "{grid} vs {v}");
        assert_eq!(chernoff_ml(3, 3, 1.0 / 12.0).unwrap(), 0.0);
        assert_eq!(chernoff_ml(3, 3, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn chernoff_mu_matches_grid() {
        let (k, r, mu) = (3, 3, 1.0 / 6.0);
        let v = chernoff_mu(k, r, mu).unwrap();
        assert!(v < 0.0);
        let mut grid = f64::NEG_INFINITY;
        for i in 1..=800 {
            let tau = i as f64 * 0.005;
            let mut inner = 0.0f64;
            for j in 1..=2000 {
                inner = inner.min(phi(k, r, mu, -(j as f64) * 0.0025, tau));
            }
            grid = grid.max(inner);
        }
        assert!((v - grid).abs() < 1e-4, "{v} vs {grid}");
        assert_eq!(chernoff_mu(3, 3, 1.0 / 12.0).unwrap(), 0.0);
        assert_eq!(chernoff_mu(3, 3, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn chernoff_signs() {
        for (k, r) in [(3, 3), (4, 3), (4, 4), (5, 3), (5, 4), (5, 5)] {
            let crit = mu_c(k, r).unwrap();
            for i in 1..=20 {
                let mu = crit * i as f64 / 10.0;
                let ml = chernoff_ml(k, r, mu).unwrap();
                let mup = chernoff_mu(k, r, mu).unwrap();
                assert_eq!(ml < -1e-9, i < 10, "ml k={k} r={r} mu={mu}: {ml}");
                assert_eq!(mup < -1e-9, i > 10, "mu k={k} r={r} mu={mu}: {mup}");
            }
        }
    }

    fn frac(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn stopping_set_expectations() {
        assert_eq!(expected_stopping_sets(5, 3, 2, 2, 1).unwrap(), frac(4, 5));
        assert_eq!(expected_stopping_sets(5, 3, 2, 3, 2).unwrap(), frac(1, 10));
        assert_eq!(expected_stopping_sets(9, 3, 7, 2, 9).unwrap(), frac(1, 1));
        assert!(expected_stopping_sets(5, 3, 2, 2, 0).is_err());
    }

    #[test]
    fn pairwise_form_of_expectation() {
        for (n, k, m, l) in [(8, 3, 4, 3), (10, 4, 5, 2), (12, 3, 9, 7), (6, 2, 3, 1)] {
            let single = BigRational::one()
                - BigRational::new(
                    (BigUint::from(l as u32) * binom_big(n - l, k - 1)).into(),
                    binom_big(n, k).into(),
                );
            let mut want = BigRational::from_integer(binom_big(n, l).into());
            for _ in 0..m {
                want *= &single;
            }
            assert_eq!(expected_stopping_sets(n, k, m, 2, l).unwrap(), want);
        }
    }

    #[test]
    fn giant_fixed_point() {
        let rho = giant_rho(3, 0.3).unwrap();
        assert!(close(rho, 0.5172, 1e-4), "{rho}");
        assert!((rho - (0.9 * (rho * rho - 1.0)).exp()).abs() <= 1e-12);
        let rho2 = giant_rho(2, 1.0).unwrap();
        assert!(close(rho2, 0.2032, 1e-4), "{rho2}");
        assert_eq!(giant_rho(3, 1.0 / 6.0).unwrap(), 1.0);
        assert_eq!(giant_rho(3, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn pairwise_constants() {
        let d = lemma_r2(3, 2.0 / 3.0, R2Quantity::Small).unwrap();
        assert!(close(d, 1.0 - 0.5f64.sqrt(), 1e-14));
        assert_eq!(lemma_r2(4, 0.25, R2Quantity::Small).unwrap(), 0.0);
        assert!(close(lemma_r2(3, 1.0 / 12.0, R2Quantity::LargeConverse).unwrap(), 1.0, 1e-14));
        assert!(lemma_r2(3, 0.2, R2Quantity::LargeConverse).is_err());
        assert!(lemma_r2(3, 0.1, R2Quantity::Small).is_err());
        assert!(close(lemma_r2(3, 0.3, R2Quantity::Large).unwrap(), 1.0 - giant_rho(3, 0.3).unwrap(), 0.0));
        assert!(lemma_r2(3, 0.1, R2Quantity::Large).is_err());
    }
}
