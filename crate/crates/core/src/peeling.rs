//! The d-peeling algorithm, stopping sets and hypergraph components.
//!
//! A constraint is *active* while its number of remaining variables lies in
//! `1..d`. Active constraints live in one swap-remove vector so a uniform
//! pick is O(1); each variable removal touches only its incidence list, so a
//! full peel costs O(mk).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::instance::BipartiteInstance;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeelMode {
    /// Each step removes every remaining variable of one active constraint.
    Batch,
    /// Each step removes one uniformly chosen remaining variable of one
    /// uniformly chosen active constraint.
    Single,
}

impl std::str::FromStr for PeelMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "batch" => Ok(PeelMode::Batch),
            "single" => Ok(PeelMode::Single),
            other => Err(format!("unknown peel mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PeelOptions {
    pub d: usize,
    pub mode: PeelMode,
    /// Record `[C_0, .., C_k]` after every step.
    pub snapshots: bool,
}

impl PeelOptions {
    pub fn new(d: usize, mode: PeelMode) -> Self {
        Self { d, mode, snapshots: false }
    }

    pub fn with_snapshots(mut self) -> Self {
        self.snapshots = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeelResult {
    /// Variables in removal order.
    pub removed_order: Vec<u32>,
    /// The maximal d-stopping set inside the start set, ascending.
    pub residual: Vec<u32>,
    /// `E_1^{d-1}` before the first step and after every step.
    pub e1_trajectory: Vec<u64>,
    /// Constraint counts by remaining degree, aligned with `e1_trajectory`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree_snapshots: Option<Vec<Vec<u64>>>,
}

impl PeelResult {
    pub fn removed(&self) -> usize {
        self.removed_order.len()
    }
}

const INACTIVE: u32 = u32::MAX;

struct Peeler<'a> {
    inst: &'a BipartiteInstance,
    d: usize,
    offsets: Vec<u32>,
    incidence: Vec<u32>,
    alive: Vec<bool>,
    degree: Vec<u32>,
    counts: Vec<u64>,
    active: Vec<u32>,
    slot: Vec<u32>,
    e1: u64,
}

impl<'a> Peeler<'a> {
    fn new(inst: &'a BipartiteInstance, start: &[u32], d: usize) -> Self {
        let n = inst.n();
        let m = inst.m();
        let mut alive = vec![false; n];
        for &v in start {
            alive[v as usize] = true;
        }
        let mut offsets = vec![0u32; n + 1];
        for t in inst.tuples() {
            for &v in t {
                offsets[v as usize + 1] += 1;
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut incidence = vec![0u32; inst.m() * inst.k()];
        for (a, t) in inst.tuples().enumerate() {
            for &v in t {
                incidence[fill[v as usize] as usize] = a as u32;
                fill[v as usize] += 1;
            }
        }

        let mut degree = vec![0u32; m];
        let mut counts = vec![0u64; inst.k() + 1];
        let mut active = Vec::new();
        let mut slot = vec![INACTIVE; m];
        let mut e1 = 0;
        for (a, t) in inst.tuples().enumerate() {
            let deg = t.iter().filter(|&&v| alive[v as usize]).count() as u32;
            degree[a] = deg;
            counts[deg as usize] += 1;
            if deg >= 1 && (deg as usize) < d {
                slot[a] = active.len() as u32;
                active.push(a as u32);
                e1 += deg as u64;
            }
        }
        Self { inst, d, offsets, incidence, alive, degree, counts, active, slot, e1 }
    }

    fn retire(&mut self, a: usize) {
        let s = self.slot[a] as usize;
        let last = *self.active.last().expect("retiring from empty active set");
        self.active.swap_remove(s);
        if last as usize != a {
            self.slot[last as usize] = s as u32;
        }
        self.slot[a] = INACTIVE;
    }

    fn remove_variable(&mut self, v: u32) {
        self.alive[v as usize] = false;
        let (lo, hi) = (self.offsets[v as usize] as usize, self.offsets[v as usize + 1] as usize);
        for idx in lo..hi {
            let a = self.incidence[idx] as usize;
            let old = self.degree[a];
            let new = old - 1;
            self.degree[a] = new;
            self.counts[old as usize] -= 1;
            self.counts[new as usize] += 1;
            if self.slot[a] != INACTIVE {
                self.e1 -= 1;
                if new == 0 {
                    self.retire(a);
                }
            } else if old as usize == self.d {
                self.slot[a] = self.active.len() as u32;
                self.active.push(a as u32);
                self.e1 += new as u64;
            }
        }
    }

    fn run(mut self, mode: PeelMode, rng: &mut RngStream, snapshots: bool) -> PeelResult {
        let mut removed_order = Vec::new();
        let mut e1_trajectory = vec![self.e1];
        let mut degree_snapshots = snapshots.then(|| vec![self.counts.clone()]);
        let mut remaining = Vec::with_capacity(self.inst.k());
        while !self.active.is_empty() {
            let a = self.active[rng.random_range(0..self.active.len())] as usize;
            remaining.clear();
            remaining.extend(self.inst.tuple(a).iter().copied().filter(|&v| self.alive[v as usize]));
            match mode {
                PeelMode::Batch => {
                    for &v in &remaining {
                        self.remove_variable(v);
                        removed_order.push(v);
                    }
                }
                PeelMode::Single => {
                    let v = remaining[rng.random_range(0..remaining.len())];
                    self.remove_variable(v);
                    removed_order.push(v);
                }
            }
            e1_trajectory.push(self.e1);
            if let Some(s) = degree_snapshots.as_mut() {
                s.push(self.counts.clone());
            }
        }
        let residual = (0..self.inst.n() as u32).filter(|&v| self.alive[v as usize]).collect();
        PeelResult { removed_order, residual, e1_trajectory, degree_snapshots }
    }
}

/// Runs d-peeling from `start`. The residual is the unique maximal
/// d-stopping set inside `start` regardless of mode or random choices.
///
/// Requires `2 <= d <= k` and every start index below `n`.
pub fn peel(inst: &BipartiteInstance, start: &[u32], opts: &PeelOptions, rng: &mut RngStream) -> PeelResult {
    assert!(opts.d >= 2 && opts.d <= inst.k(), "peeling depth must satisfy 2 <= d <= k");
    Peeler::new(inst, start, opts.d).run(opts.mode, rng, opts.snapshots)
}

/// True iff every constraint meets `set` in 0 or at least `d` variables.
pub fn is_stopping_set(inst: &BipartiteInstance, set: &[u32], d: usize) -> bool {
    let mut member = vec![false; inst.n()];
    for &v in set {
        member[v as usize] = true;
    }
    inst.tuples().all(|t| {
        let hit = t.iter().filter(|&&v| member[v as usize]).count();
        hit == 0 || hit >= d
    })
}

/// Disjoint-set forest with union by size and path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = self.parent[x as usize];
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }

    pub fn component_size(&mut self, x: u32) -> u32 {
        let r = self.find(x);
        self.size[r as usize]
    }
}

/// Component sizes (descending) of the hypergraph on `vars` where two
/// variables are adjacent when they share a selected constraint.
///
/// With `degree = Some(j)`, only constraints having exactly `j` variables in
/// `vars` are selected; `None` selects all.
pub fn components_within(inst: &BipartiteInstance, vars: &[u32], degree: Option<usize>) -> Vec<usize> {
    let mut member = vec![false; inst.n()];
    for &v in vars {
        member[v as usize] = true;
    }
    let mut uf = UnionFind::new(inst.n());
    let mut inside = Vec::with_capacity(inst.k());
    for t in inst.tuples() {
        inside.clear();
        inside.extend(t.iter().copied().filter(|&v| member[v as usize]));
        if degree.is_some_and(|j| inside.len() != j) {
            continue;
        }
        for w in inside.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    // non-members are never unioned, so member roots count only members
    let mut sizes = Vec::new();
    for v in 0..inst.n() as u32 {
        if member[v as usize] && uf.find(v) == v {
            sizes.push(uf.component_size(v) as usize);
        }
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// [`components_within`] over all `n` variables.
pub fn components(inst: &BipartiteInstance, degree: Option<usize>) -> Vec<usize> {
    let all: Vec<u32> = (0..inst.n() as u32).collect();
    components_within(inst, &all, degree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn two_triples() -> BipartiteInstance {
        // (1,2,3), (2,3,4) in 1-based notation
        BipartiteInstance::new(4, 0, 3, &[vec![0, 1, 2], vec![1, 2, 3]]).unwrap()
    }

    #[test]
    fn hand_traced_peels() {
        let inst = two_triples();
        for mode in [PeelMode::Batch, PeelMode::Single] {
            let res = peel(&inst, &[1, 2, 3], &PeelOptions::new(3, mode), &mut stream(0, 0));
            assert!(res.residual.is_empty());
            let mut order = res.removed_order.clone();
            order.sort();
            assert_eq!(order, vec![1, 2, 3]);

            let res = peel(&inst, &[1, 2, 3], &PeelOptions::new(2, mode), &mut stream(0, 0));
            assert_eq!(res.residual, vec![1, 2, 3]);
            assert!(res.removed_order.is_empty());
        }
    }

    #[test]
    fn batch_trace_matches_hand_trace() {
        let inst = two_triples();
        let res = peel(&inst, &[1, 2, 3], &PeelOptions::new(3, PeelMode::Batch).with_snapshots(), &mut stream(0, 0));
        // only (1,2,3) is active at first: degree 2, then (2,3,4) drops to 1
        assert_eq!(&res.removed_order[2..], &[3]);
        assert_eq!(res.e1_trajectory, vec![2, 1, 0]);
        let snaps = res.degree_snapshots.unwrap();
        assert_eq!(snaps[0], vec![0, 0, 1, 1]);
        assert_eq!(snaps[1], vec![1, 1, 0, 0]);
        assert_eq!(snaps[2], vec![2, 0, 0, 0]);
    }

    #[test]
    fn no_constraints() {
        let inst = BipartiteInstance::new(5, 1, 3, &[]).unwrap();
        let res = peel(&inst, &[1, 2, 3, 4], &PeelOptions::new(2, PeelMode::Single), &mut stream(0, 0));
        assert_eq!(res.residual, vec![1, 2, 3, 4]);
        assert!(res.removed_order.is_empty());
        assert_eq!(res.e1_trajectory, vec![0]);
    }

    #[test]
    fn stopping_sets() {
        let inst = two_triples();
        assert!(is_stopping_set(&inst, &[], 3));
        assert!(is_stopping_set(&inst, &[1, 2, 3], 2));
        assert!(!is_stopping_set(&inst, &[1, 2, 3], 3));
    }

    #[test]
    fn component_examples() {
        let empty = BipartiteInstance::new(6, 0, 3, &[]).unwrap();
        assert_eq!(components(&empty, None), vec![1; 6]);
        let linked = BipartiteInstance::new(5, 0, 3, &[vec![0, 1, 2], vec![2, 3, 4]]).unwrap();
        assert_eq!(components(&linked, None), vec![5]);
        let sub = components_within(&linked, &[0, 1, 3, 4], Some(2));
        assert_eq!(sub, vec![2, 2]);
    }

    #[test]
    fn union_find_sizes() {
        let mut uf = UnionFind::new(6);
        uf.union(0, 1);
        uf.union(2, 3);
        uf.union(1, 3);
        assert_eq!(uf.component_size(2), 4);
        assert_eq!(uf.component_size(5), 1);
        assert_eq!(uf.find(0), uf.find(3));
    }
}
