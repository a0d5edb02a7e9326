//! Prime-field arithmetic and local functions `f(x) = Hx` whose fibers are
//! MDS codes.
//!
//! A local function maps `k` inputs over GF(q) to `k - r + 1` outputs. When
//! every `(k - r + 1)`-column minor of `H` is nonsingular, each fiber
//! `f^{-1}(y)` is an MDS code of dimension `r - 1` and distance `k - r + 2`,
//! which also makes `f` `(r - 1)`-wise independent.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `q^k` for the exhaustive verifiers.
pub const EXHAUSTIVE_GUARD: u128 = 10_000_000;

const MAX_MODULUS: u32 = 1 << 16;

fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= q {
        if q.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// GF(q) for a prime `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeField {
    q: u32,
}

impl PrimeField {
    pub fn new(q: u32) -> Result<Self> {
        if q > MAX_MODULUS || !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        Ok(Self { q })
    }

    #[inline]
    pub fn modulus(&self) -> u32 {
        self.q
    }

    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u32, b: u32) -> u32 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.q as u64) as u32
    }

    pub fn pow(&self, base: u32, mut exp: u64) -> u32 {
        let mut acc = 1 % self.q;
        let mut b = base % self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat's little theorem.
    pub fn inverse(&self, a: u32) -> Result<u32> {
        self.check(a)?;
        if a == 0 {
            return Err(Error::ZeroInverse);
        }
        Ok(self.pow(a, self.q as u64 - 2))
    }

    pub fn check(&self, a: u32) -> Result<()> {
        if a >= self.q {
            Err(Error::OutOfField { value: a, q: self.q })
        } else {
            Ok(())
        }
    }

    /// Rank of a matrix by Gaussian elimination.
    pub fn rank(&self, rows: &[Vec<u32>]) -> usize {
        let mut m: Vec<Vec<u32>> = rows.to_vec();
        let cols = m.first().map_or(0, |r| r.len());
        let mut rank = 0;
        for c in 0..cols {
            let Some(p) = (rank..m.len()).find(|&i| m[i][c] != 0) else {
                continue;
            };
            m.swap(rank, p);
            let inv = self.pow(m[rank][c], self.q as u64 - 2);
            for v in m[rank].iter_mut() {
                *v = self.mul(*v, inv);
            }
            let pivot = m[rank].clone();
            for (i, row) in m.iter_mut().enumerate() {
                if i != rank && row[c] != 0 {
                    let f = row[c];
                    for (x, &pv) in row.iter_mut().zip(&pivot) {
                        *x = self.sub(*x, self.mul(f, pv));
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    /// Inverse of a square matrix, `None` when singular.
    pub fn invert(&self, square: &[Vec<u32>]) -> Option<Vec<Vec<u32>>> {
        let n = square.len();
        let mut aug: Vec<Vec<u32>> = square
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.clone();
                r.extend((0..n).map(|j| u32::from(i == j)));
                r
            })
            .collect();
        for c in 0..n {
            let p = (c..n).find(|&i| aug[i][c] != 0)?;
            aug.swap(c, p);
            let inv = self.pow(aug[c][c], self.q as u64 - 2);
            for v in aug[c].iter_mut() {
                *v = self.mul(*v, inv);
            }
            let pivot = aug[c].clone();
            for (i, row) in aug.iter_mut().enumerate() {
                if i != c && row[c] != 0 {
                    let f = row[c];
                    for (x, &pv) in row.iter_mut().zip(&pivot) {
                        *x = self.sub(*x, self.mul(f, pv));
                    }
                }
            }
        }
        Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
    }
}

/// Inverse of a nonzero element.
pub fn field_inverse(field: &PrimeField, a: u32) -> Result<u32> {
    field.inverse(a)
}

#[derive(Serialize, Deserialize)]
struct LocalFunctionWire {
    q: u32,
    k: usize,
    r: usize,
    #[serde(rename = "H")]
    h: Vec<Vec<u32>>,
}

/// `f(x) = Hx` over GF(q) with `H` of shape `(k - r + 1) x k`.
///
/// Equality compares the map itself; the Vandermonde points are provenance
/// and are not serialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "LocalFunctionWire", into = "LocalFunctionWire")]
pub struct LocalFunction {
    field: PrimeField,
    k: usize,
    r: usize,
    h: Vec<Vec<u32>>,
    points: Vec<u32>,
}

impl PartialEq for LocalFunction {
    fn eq(&self, other: &Self) -> bool {
        self.field == other.field && self.k == other.k && self.r == other.r && self.h == other.h
    }
}

impl Eq for LocalFunction {}

impl TryFrom<LocalFunctionWire> for LocalFunction {
    type Error = Error;
    fn try_from(w: LocalFunctionWire) -> Result<Self> {
        LocalFunction::from_matrix(w.q, w.k, w.r, w.h)
    }
}

impl From<LocalFunction> for LocalFunctionWire {
    fn from(f: LocalFunction) -> Self {
        LocalFunctionWire {
            q: f.field.q,
            k: f.k,
            r: f.r,
            h: f.h,
        }
    }
}

impl LocalFunction {
    /// Wraps a caller-supplied parity-check matrix. `H` must have full row rank.
    pub fn from_matrix(q: u32, k: usize, r: usize, h: Vec<Vec<u32>>) -> Result<Self> {
        let field = PrimeField::new(q)?;
        if r < 2 || r > k {
            return Err(Error::InvalidParams(format!("need 2 <= r <= k, got r={r}, k={k}")));
        }
        let l = k - r + 1;
        if h.len() != l {
            return Err(Error::LengthMismatch { expected: l, got: h.len() });
        }
        for row in &h {
            if row.len() != k {
                return Err(Error::LengthMismatch { expected: k, got: row.len() });
            }
            for &v in row {
                field.check(v)?;
            }
        }
        if field.rank(&h) != l {
            return Err(Error::InvalidParams("H must have full row rank".into()));
        }
        Ok(Self { field, k, r, h, points: Vec::new() })
    }

    /// Single parity check `x_1 + ... + x_k`, i.e. `r = k`.
    pub fn single_parity_check(q: u32, k: usize) -> Result<Self> {
        Self::from_matrix(q, k, k, vec![vec![1; k]])
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn q(&self) -> u32 {
        self.field.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Output length `k - r + 1`.
    pub fn output_len(&self) -> usize {
        self.k - self.r + 1
    }

    pub fn matrix(&self) -> &[Vec<u32>] {
        &self.h
    }

    pub fn points(&self) -> &[u32] {
        &self.points
    }

    pub fn evaluate(&self, x: &[u32]) -> Result<Vec<u32>> {
        if x.len() != self.k {
            return Err(Error::LengthMismatch { expected: self.k, got: x.len() });
        }
        for &v in x {
            self.field.check(v)?;
        }
        let mut out = vec![0; self.output_len()];
        self.evaluate_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation into a caller buffer of length `k - r + 1`.
    #[inline]
    pub fn evaluate_into(&self, x: &[u32], out: &mut [u32]) {
        let q = self.field.q as u64;
        for (o, row) in out.iter_mut().zip(&self.h) {
            let s: u64 = row.iter().zip(x).map(|(&h, &v)| h as u64 * v as u64).sum();
            *o = (s % q) as u32;
        }
    }

    /// Solves for the coordinates outside `positions` given values on
    /// `positions` (exactly `r - 1` of them) and the output `y`.
    pub fn complete(&self, positions: &[usize], values: &[u32], y: &[u32]) -> Result<Vec<u32>> {
        if positions.len() != self.r - 1 || values.len() != positions.len() {
            return Err(Error::LengthMismatch { expected: self.r - 1, got: positions.len() });
        }
        if y.len() != self.output_len() {
            return Err(Error::LengthMismatch { expected: self.output_len(), got: y.len() });
        }
        let rest: Vec<usize> = (0..self.k).filter(|i| !positions.contains(i)).collect();
        if rest.len() != self.output_len() {
            return Err(Error::InvalidParams("positions must be distinct and in range".into()));
        }
        let square: Vec<Vec<u32>> =
            self.h.iter().map(|row| rest.iter().map(|&c| row[c]).collect()).collect();
        let inv = self.field.invert(&square).ok_or(Error::SingularResidual)?;
        let mut x = vec![0; self.k];
        for (&p, &v) in positions.iter().zip(values) {
            self.field.check(v)?;
            x[p] = v;
        }
        let rhs = self.residual_rhs(&x, positions, y);
        for (i, &c) in rest.iter().enumerate() {
            x[c] = self.dot(&inv[i], &rhs);
        }
        Ok(x)
    }

    fn residual_rhs(&self, x: &[u32], positions: &[usize], y: &[u32]) -> Vec<u32> {
        self.h
            .iter()
            .zip(y)
            .map(|(row, &yv)| {
                positions
                    .iter()
                    .fold(yv, |acc, &p| self.field.sub(acc, self.field.mul(row[p], x[p])))
            })
            .collect()
    }

    fn dot(&self, a: &[u32], b: &[u32]) -> u32 {
        let q = self.field.q as u64;
        (a.iter().zip(b).map(|(&u, &v)| u as u64 * v as u64).sum::<u64>() % q) as u32
    }

    /// All `x` with `Hx = y`, enumerated by free choice of the first `r - 1`
    /// coordinates. Output is in lexicographic order of those coordinates.
    pub fn inverse_image(&self, y: &[u32]) -> Result<Vec<Vec<u32>>> {
        if y.len() != self.output_len() {
            return Err(Error::LengthMismatch { expected: self.output_len(), got: y.len() });
        }
        for &v in y {
            self.field.check(v)?;
        }
        let free = self.r - 1;
        let square: Vec<Vec<u32>> = self.h.iter().map(|row| row[free..].to_vec()).collect();
        let inv = self.field.invert(&square).ok_or(Error::SingularResidual)?;
        let positions: Vec<usize> = (0..free).collect();
        let q = self.field.q;
        let count = (q as usize).pow(free as u32);
        let mut out = Vec::with_capacity(count);
        let mut x = vec![0u32; self.k];
        for _ in 0..count {
            let rhs = self.residual_rhs(&x, &positions, y);
            for i in 0..self.output_len() {
                x[free + i] = self.dot(&inv[i], &rhs);
            }
            out.push(x.clone());
            // odometer over the free block, most significant digit first
            for d in (0..free).rev() {
                x[d] += 1;
                if x[d] < q {
                    break;
                }
                x[d] = 0;
            }
        }
        Ok(out)
    }
}

/// Vandermonde parity check `H[s][i] = points[i]^s`, `s = 0..=k-r`.
pub fn make_rs_local_function(q: u32, k: usize, r: usize, points: &[u32]) -> Result<LocalFunction> {
    let field = PrimeField::new(q)?;
    if k as u64 > q as u64 {
        return Err(Error::InvalidParams(format!("Vandermonde construction needs k <= q, got k={k}, q={q}")));
    }
    if r < 2 || r > k {
        return Err(Error::InvalidParams(format!("need 2 <= r <= k, got r={r}, k={k}")));
    }
    if points.len() != k {
        return Err(Error::LengthMismatch { expected: k, got: points.len() });
    }
    for &p in points {
        field.check(p)?;
    }
    if !points.iter().all_unique() {
        return Err(Error::InvalidParams("evaluation points must be distinct".into()));
    }
    let h: Vec<Vec<u32>> = (0..=k - r)
        .map(|s| points.iter().map(|&p| field.pow(p, s as u64)).collect())
        .collect();
    let mut f = LocalFunction::from_matrix(q, k, r, h)?;
    f.points = points.to_vec();
    Ok(f)
}

fn exhaustion_size(f: &LocalFunction, guard: u128) -> Result<usize> {
    let needed = (f.q() as u128).checked_pow(f.k as u32).unwrap_or(u128::MAX);
    if needed > guard {
        return Err(Error::GuardExceeded { needed, guard });
    }
    Ok(needed as usize)
}

/// Visits every input in `[q]^k` (packed as `sum x_i q^i`) with its output
/// packed the same way.
fn for_each_input(f: &LocalFunction, total: usize, mut visit: impl FnMut(&[u32], usize)) {
    let q = f.q();
    let l = f.output_len();
    let mut x = vec![0u32; f.k];
    let mut y = vec![0u32; l];
    for _ in 0..total {
        f.evaluate_into(&x, &mut y);
        let y_idx = y.iter().rev().fold(0usize, |acc, &v| acc * q as usize + v as usize);
        visit(&x, y_idx);
        for d in x.iter_mut() {
            *d += 1;
            if *d < q {
                break;
            }
            *d = 0;
        }
    }
}

fn pack(x: &[u32], positions: &[usize], q: u32) -> usize {
    positions.iter().rev().fold(0usize, |acc, &p| acc * q as usize + x[p] as usize)
}

/// Exhaustive check that every fiber has `q^(r-1)` elements and minimum
/// distance `k - r + 2`.
///
/// Distance is checked as injectivity of every projection onto `r - 1`
/// coordinates: two fiber elements agreeing on `r - 1` coordinates are at
/// distance at most `k - r + 1`, and the Singleton bound caps the distance of
/// a size-`q^(r-1)` code at `k - r + 2`.
pub fn verify_mds_inverse(f: &LocalFunction, guard: u128) -> Result<bool> {
    let total = exhaustion_size(f, guard)?;
    let q = f.q() as usize;
    let fiber = q.pow(f.r as u32 - 1);
    let outputs = q.pow(f.output_len() as u32);

    let mut sizes = vec![0usize; outputs];
    for_each_input(f, total, |_, y| sizes[y] += 1);
    if sizes.iter().any(|&s| s != fiber) {
        return Ok(false);
    }

    let mut seen = vec![false; outputs * fiber];
    for subset in (0..f.k).combinations(f.r - 1) {
        seen.iter_mut().for_each(|s| *s = false);
        let mut injective = true;
        for_each_input(f, total, |x, y| {
            let slot = &mut seen[y * fiber + pack(x, &subset, f.q())];
            if *slot {
                injective = false;
            }
            *slot = true;
        });
        if !injective {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exhaustive check that `((x_i)_{i in T}, f(x))` is uniform for uniform `x`
/// and every `|T| <= w`. Only `|T| = min(w, k)` is enumerated since the
/// smaller sets are marginals of those.
pub fn verify_wise_independence(f: &LocalFunction, w: usize, guard: u128) -> Result<bool> {
    let total = exhaustion_size(f, guard)?;
    let q = f.q() as usize;
    let size = w.min(f.k);
    let cells_exp = size + f.output_len();
    if cells_exp > f.k {
        return Ok(false);
    }
    let cells = q.pow(cells_exp as u32);
    let expected = total / cells;
    let block = q.pow(size as u32);
    let mut counts = vec![0usize; cells];
    for subset in (0..f.k).combinations(size) {
        counts.iter_mut().for_each(|c| *c = 0);
        for_each_input(f, total, |x, y| counts[y * block + pack(x, &subset, f.q())] += 1);
        if counts.iter().any(|&c| c != expected) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Algebraic MDS test for the linear map: every `k - r + 1` columns of `H`
/// are linearly independent. Exact for any `q^k`.
pub fn mds_by_minors(f: &LocalFunction) -> bool {
    let l = f.output_len();
    (0..f.k).combinations(l).all(|cols| {
        let minor: Vec<Vec<u32>> = f.h.iter().map(|row| cols.iter().map(|&c| row[c]).collect()).collect();
        f.field.rank(&minor) == l
    })
}

/// Algebraic `w`-wise independence test for the linear map: `x -> (x_T, Hx)`
/// is surjective for every `|T| = min(w, k)`.
pub fn wise_independence_by_rank(f: &LocalFunction, w: usize) -> bool {
    let size = w.min(f.k);
    (0..f.k).combinations(size).all(|subset| {
        let mut rows: Vec<Vec<u32>> = subset
            .iter()
            .map(|&i| (0..f.k).map(|c| u32::from(c == i)).collect())
            .collect();
        rows.extend(f.h.iter().cloned());
        f.field.rank(&rows) == size + f.output_len()
    })
}
