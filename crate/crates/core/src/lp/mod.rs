//! The LP relaxation over the local marginal polytope.
//!
//! A point of LOCAL is a distribution `b_i` on `[q]` for every variable and a
//! distribution `b_a` on `[q]^k` for every constraint, tied together only by
//! single-variable marginalization. Everything here is exact rational
//! arithmetic.
//!
//! Zero objective is imposed structurally: factor beliefs are restricted to
//! the fiber `f^{-1}(y_a)`, so deciding whether a zero-objective point exists
//! is a pure feasibility problem.

pub mod simplex;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_mds::wise_independence_by_rank;
use crate::instance::PlantedInstance;
use crate::peeling::is_stopping_set;

pub type Rational = BigRational;

fn ratio(n: usize, d: usize) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// A distribution over an explicitly listed support of `[q]^k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorBelief {
    pub support: Vec<Vec<u32>>,
    pub weights: Vec<Rational>,
}

impl FactorBelief {
    pub fn point_mass(x: Vec<u32>) -> Self {
        Self { support: vec![x], weights: vec![Rational::one()] }
    }

    pub fn uniform(support: Vec<Vec<u32>>) -> Self {
        let w = ratio(1, support.len());
        let weights = vec![w; support.len()];
        Self { support, weights }
    }

    /// Marginal of tuple position `pos` as a vector over `[q]`.
    pub fn marginal(&self, pos: usize, q: u32) -> Vec<Rational> {
        let mut out = vec![Rational::zero(); q as usize];
        for (x, w) in self.support.iter().zip(&self.weights) {
            out[x[pos] as usize] += w;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeliefAssignment {
    pub node_beliefs: Vec<Vec<Rational>>,
    pub factor_beliefs: Vec<FactorBelief>,
}

impl BeliefAssignment {
    /// Variables whose belief is a point mass.
    pub fn integral_part(&self) -> Vec<u32> {
        self.node_beliefs
            .iter()
            .enumerate()
            .filter(|(_, b)| b.iter().any(|p| p.is_one()))
            .map(|(i, _)| i as u32)
            .collect()
    }
}

/// The first identity of LOCAL that a belief assignment breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Shape(String),
    NegativeNode { var: u32, value: u32 },
    NegativeFactor { constraint: usize, entry: usize },
    NodeNormalization { var: u32 },
    FactorNormalization { constraint: usize },
    Marginal { constraint: usize, var: u32, value: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(s) => write!(f, "malformed beliefs: {s}"),
            Violation::NegativeNode { var, value } => write!(f, "b_{var}({value}) < 0"),
            Violation::NegativeFactor { constraint, entry } => {
                write!(f, "factor {constraint} entry {entry} is negative")
            }
            Violation::NodeNormalization { var } => write!(f, "b_{var} does not sum to 1"),
            Violation::FactorNormalization { constraint } => write!(f, "factor {constraint} does not sum to 1"),
            Violation::Marginal { constraint, var, value } => {
                write!(f, "factor {constraint} marginal at variable {var}, value {value} disagrees with b_{var}")
            }
        }
    }
}

/// Exact membership check: nonnegativity, normalization of every node and
/// factor belief, and every marginalization identity.
pub fn verify_local_membership(inst: &PlantedInstance, beliefs: &BeliefAssignment) -> std::result::Result<(), Violation> {
    let g = inst.graph();
    let q = inst.function().q();
    if beliefs.node_beliefs.len() != g.n() || beliefs.factor_beliefs.len() != g.m() {
        return Err(Violation::Shape("belief counts do not match the instance".into()));
    }
    for (i, b) in beliefs.node_beliefs.iter().enumerate() {
        if b.len() != q as usize {
            return Err(Violation::Shape(format!("b_{i} has {} entries", b.len())));
        }
        if let Some(v) = b.iter().position(|p| p.is_negative()) {
            return Err(Violation::NegativeNode { var: i as u32, value: v as u32 });
        }
        if !b.iter().sum::<Rational>().is_one() {
            return Err(Violation::NodeNormalization { var: i as u32 });
        }
    }
    for (a, fb) in beliefs.factor_beliefs.iter().enumerate() {
        if fb.support.len() != fb.weights.len() {
            return Err(Violation::Shape(format!("factor {a} support and weights differ in length")));
        }
        for (e, x) in fb.support.iter().enumerate() {
            if x.len() != g.k() || x.iter().any(|&v| v >= q) {
                return Err(Violation::Shape(format!("factor {a} entry {e} is not in [q]^k")));
            }
            if fb.support[..e].contains(x) {
                return Err(Violation::Shape(format!("factor {a} lists entry {e} twice")));
            }
        }
        if let Some(e) = fb.weights.iter().position(|w| w.is_negative()) {
            return Err(Violation::NegativeFactor { constraint: a, entry: e });
        }
        if !fb.weights.iter().sum::<Rational>().is_one() {
            return Err(Violation::FactorNormalization { constraint: a });
        }
        for (pos, &var) in g.tuple(a).iter().enumerate() {
            let marg = fb.marginal(pos, q);
            let node = &beliefs.node_beliefs[var as usize];
            if let Some(v) = (0..q as usize).find(|&v| marg[v] != node[v]) {
                return Err(Violation::Marginal { constraint: a, var, value: v as u32 });
            }
        }
    }
    Ok(())
}

pub fn is_local_member(inst: &PlantedInstance, beliefs: &BeliefAssignment) -> bool {
    verify_local_membership(inst, beliefs).is_ok()
}

/// `sum_a Pr_{b_a}[f(X) != y_a]`.
pub fn objective(inst: &PlantedInstance, beliefs: &BeliefAssignment) -> Rational {
    let f = inst.function();
    let mut y = vec![0; f.output_len()];
    let mut total = Rational::zero();
    for (a, fb) in beliefs.factor_beliefs.iter().enumerate() {
        for (x, w) in fb.support.iter().zip(&fb.weights) {
            f.evaluate_into(x, &mut y);
            if y != inst.output(a) {
                total += w;
            }
        }
    }
    total
}

/// Point masses at the planted assignment.
pub fn planted_beliefs(inst: &PlantedInstance) -> BeliefAssignment {
    let q = inst.function().q() as usize;
    let x = inst.planted();
    let node_beliefs = x
        .iter()
        .map(|&v| (0..q).map(|w| if w == v as usize { Rational::one() } else { Rational::zero() }).collect())
        .collect();
    let mut local = vec![0; inst.graph().k()];
    let factor_beliefs = (0..inst.graph().m())
        .map(|a| {
            inst.restrict_into(x, a, &mut local);
            FactorBelief::point_mass(local.clone())
        })
        .collect();
    BeliefAssignment { node_beliefs, factor_beliefs }
}

/// The trivial zero-objective point of the relaxation without known
/// variables: uniform node beliefs and factor beliefs uniform on each fiber.
pub fn trivial_beliefs(inst: &PlantedInstance) -> Result<BeliefAssignment> {
    let q = inst.function().q() as usize;
    let node_beliefs = vec![vec![ratio(1, q); q]; inst.graph().n()];
    let factor_beliefs = (0..inst.graph().m())
        .map(|a| inst.function().inverse_image(inst.output(a)).map(FactorBelief::uniform))
        .collect::<Result<_>>()?;
    Ok(BeliefAssignment { node_beliefs, factor_beliefs })
}

/// The zero-objective point whose integral part is exactly the complement
/// of `stopping_set`.
///
/// Requires `stopping_set` to be a `(k - r + 2)`-stopping set of unknown
/// variables and the local function to be `(r - 1)`-wise independent.
pub fn build_witness(inst: &PlantedInstance, stopping_set: &[u32]) -> Result<BeliefAssignment> {
    let g = inst.graph();
    let f = inst.function();
    let d = f.k() - f.r() + 2;
    if let Some(&v) = stopping_set.iter().find(|&&v| (v as usize) < g.u() || v as usize >= g.n()) {
        return Err(Error::Precondition(format!("variable {v} is known or out of range")));
    }
    if !is_stopping_set(g, stopping_set, d) {
        return Err(Error::Precondition(format!("set is not a {d}-stopping set")));
    }
    if !wise_independence_by_rank(f, f.r() - 1) {
        return Err(Error::Precondition("local function is not (r-1)-wise independent".into()));
    }
    let q = f.q() as usize;
    let mut free = vec![false; g.n()];
    for &v in stopping_set {
        free[v as usize] = true;
    }
    let x = inst.planted();
    let node_beliefs = (0..g.n())
        .map(|i| {
            if free[i] {
                vec![ratio(1, q); q]
            } else {
                (0..q).map(|w| if w == x[i] as usize { Rational::one() } else { Rational::zero() }).collect()
            }
        })
        .collect();
    let mut factor_beliefs = Vec::with_capacity(g.m());
    for a in 0..g.m() {
        let tuple = g.tuple(a);
        let support: Vec<Vec<u32>> = f
            .inverse_image(inst.output(a))?
            .into_iter()
            .filter(|cand| tuple.iter().zip(cand).all(|(&v, &c)| free[v as usize] || c == x[v as usize]))
            .collect();
        factor_beliefs.push(FactorBelief::uniform(support));
    }
    Ok(BeliefAssignment { node_beliefs, factor_beliefs })
}

/// Constraint on one variable's belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fixing {
    Value(u32),
    Uniform,
}

/// Size limits for the exact solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpGuard {
    pub max_n: usize,
    pub max_m: usize,
    pub max_q: u32,
}

impl Default for LpGuard {
    fn default() -> Self {
        Self { max_n: 16, max_m: 10, max_q: 3 }
    }
}

/// Column layout of the feasibility system.
struct Layout {
    q: usize,
    n: usize,
    factor_start: Vec<usize>,
    fibers: Vec<Vec<Vec<u32>>>,
    cols: usize,
}

impl Layout {
    fn node(&self, i: usize, v: usize) -> usize {
        i * self.q + v
    }
}

/// Searches for a zero-objective point of LOCAL that fixes the known
/// variables to their planted values and honors `fixings`. Returns the point
/// found, or `None` when none exists.
pub fn solve_zero_feasible(
    inst: &PlantedInstance,
    fixings: &BTreeMap<u32, Fixing>,
    guard: &LpGuard,
) -> Result<Option<BeliefAssignment>> {
    let g = inst.graph();
    let f = inst.function();
    if g.n() > guard.max_n || g.m() > guard.max_m || f.q() > guard.max_q {
        return Err(Error::GuardExceeded {
            needed: (g.n().max(g.m()).max(f.q() as usize)) as u128,
            guard: guard.max_n.min(guard.max_m).min(guard.max_q as usize) as u128,
        });
    }
    let q = f.q() as usize;
    let mut all_fixings: BTreeMap<u32, Fixing> = (0..g.u() as u32)
        .map(|i| (i, Fixing::Value(inst.planted()[i as usize])))
        .collect();
    for (&var, &fix) in fixings {
        if var as usize >= g.n() {
            return Err(Error::InvalidParams(format!("fixing names variable {var} out of range")));
        }
        if let Fixing::Value(v) = fix {
            if v as usize >= q {
                return Err(Error::InvalidParams(format!("fixing value {v} outside [q]")));
            }
        }
        match all_fixings.get(&var) {
            Some(existing) if (var as usize) < g.u() && *existing != fix => {
                return Err(Error::Precondition(format!("fixing conflicts with known variable {var}")));
            }
            _ => {
                all_fixings.insert(var, fix);
            }
        }
    }

    let mut factor_start = Vec::with_capacity(g.m());
    let mut fibers = Vec::with_capacity(g.m());
    let mut cols = g.n() * q;
    for a in 0..g.m() {
        factor_start.push(cols);
        let fiber = f.inverse_image(inst.output(a))?;
        cols += fiber.len();
        fibers.push(fiber);
    }
    let layout = Layout { q, n: g.n(), factor_start, fibers, cols };

    let mut rows: Vec<Vec<Rational>> = Vec::new();
    let mut rhs: Vec<Rational> = Vec::new();
    let zero_row = || vec![Rational::zero(); layout.cols];

    for i in 0..layout.n {
        let mut row = zero_row();
        for v in 0..q {
            row[layout.node(i, v)] = Rational::one();
        }
        rows.push(row);
        rhs.push(Rational::one());
    }
    for a in 0..g.m() {
        let start = layout.factor_start[a];
        let fiber = &layout.fibers[a];
        let mut row = zero_row();
        for e in 0..fiber.len() {
            row[start + e] = Rational::one();
        }
        rows.push(row);
        rhs.push(Rational::one());
        for (pos, &var) in g.tuple(a).iter().enumerate() {
            for v in 0..q {
                let mut row = zero_row();
                for (e, x) in fiber.iter().enumerate() {
                    if x[pos] as usize == v {
                        row[start + e] = Rational::one();
                    }
                }
                row[layout.node(var as usize, v)] = -Rational::one();
                rows.push(row);
                rhs.push(Rational::zero());
            }
        }
    }
    for (&var, &fix) in &all_fixings {
        match fix {
            Fixing::Value(v) => {
                let mut row = zero_row();
                row[layout.node(var as usize, v as usize)] = Rational::one();
                rows.push(row);
                rhs.push(Rational::one());
            }
            Fixing::Uniform => {
                for v in 0..q {
                    let mut row = zero_row();
                    row[layout.node(var as usize, v)] = Rational::one();
                    rows.push(row);
                    rhs.push(ratio(1, q));
                }
            }
        }
    }

    let res = simplex::phase_one(&rows, &rhs);
    Ok(res.point.map(|x| {
        let node_beliefs = (0..layout.n).map(|i| (0..q).map(|v| x[layout.node(i, v)].clone()).collect()).collect();
        let factor_beliefs = layout
            .fibers
            .iter()
            .zip(&layout.factor_start)
            .map(|(fiber, &start)| {
                let (support, weights): (Vec<_>, Vec<_>) = fiber
                    .iter()
                    .enumerate()
                    .filter(|(e, _)| !x[start + e].is_zero())
                    .map(|(e, s)| (s.clone(), x[start + e].clone()))
                    .unzip();
                FactorBelief { support, weights }
            })
            .collect();
        BeliefAssignment { node_beliefs, factor_beliefs }
    }))
}

/// Whether a zero-objective point of LOCAL honoring the knowns and
/// `fixings` exists.
pub fn zero_feasible(inst: &PlantedInstance, fixings: &BTreeMap<u32, Fixing>, guard: &LpGuard) -> Result<bool> {
    solve_zero_feasible(inst, fixings, guard).map(|p| p.is_some())
}

#[derive(Serialize, Deserialize)]
struct FactorWire {
    support: Vec<Vec<u32>>,
    weights: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct BeliefWire {
    node_beliefs: Vec<Vec<String>>,
    factor_beliefs: Vec<FactorWire>,
}

fn rational_to_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn parse_rational(s: &str) -> std::result::Result<Rational, String> {
    let (n, d) = s.split_once('/').unwrap_or((s, "1"));
    let n: BigInt = n.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
    let d: BigInt = d.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
    if d.is_zero() {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(Rational::new(n, d))
}

impl Serialize for BeliefAssignment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BeliefWire {
            node_beliefs: self.node_beliefs.iter().map(|b| b.iter().map(rational_to_string).collect()).collect(),
            factor_beliefs: self
                .factor_beliefs
                .iter()
                .map(|fb| FactorWire {
                    support: fb.support.clone(),
                    weights: fb.weights.iter().map(rational_to_string).collect(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BeliefAssignment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = BeliefWire::deserialize(d)?;
        let parse_all = |v: &[String]| v.iter().map(|s| parse_rational(s)).collect::<std::result::Result<Vec<_>, _>>();
        let node_beliefs =
            w.node_beliefs.iter().map(|b| parse_all(b)).collect::<std::result::Result<_, _>>().map_err(D::Error::custom)?;
        let factor_beliefs = w
            .factor_beliefs
            .into_iter()
            .map(|fw| parse_all(&fw.weights).map(|weights| FactorBelief { support: fw.support, weights }))
            .collect::<std::result::Result<_, _>>()
            .map_err(D::Error::custom)?;
        Ok(BeliefAssignment { node_beliefs, factor_beliefs })
    }
}
