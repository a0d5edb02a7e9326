//! Random bipartite graphs and planted instances.
//!
//! Variables are 0-based in memory and 1-based in instance files. The first
//! `u` variables are the known ones.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_mds::LocalFunction;
use crate::rng::RngStream;

/// `m` ordered `k`-tuples of distinct variables out of `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteInstance {
    n: usize,
    u: usize,
    k: usize,
    /// Flattened `m x k` tuples.
    constraints: Vec<u32>,
}

impl BipartiteInstance {
    pub fn new(n: usize, u: usize, k: usize, tuples: &[Vec<u32>]) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::InvalidParams(format!("need 1 <= k <= n, got k={k}, n={n}")));
        }
        if u >= n {
            return Err(Error::InvalidParams(format!("need u < n, got u={u}, n={n}")));
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidParams("n does not fit in u32".into()));
        }
        let mut constraints = Vec::with_capacity(tuples.len() * k);
        for t in tuples {
            if t.len() != k {
                return Err(Error::LengthMismatch { expected: k, got: t.len() });
            }
            for (j, &v) in t.iter().enumerate() {
                if v as usize >= n {
                    return Err(Error::InvalidParams(format!("variable {v} out of range")));
                }
                if t[..j].contains(&v) {
                    return Err(Error::InvalidParams(format!("repeated variable {v} in a tuple")));
                }
            }
            constraints.extend_from_slice(t);
        }
        Ok(Self { n, u, k, constraints })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.constraints.len() / self.k
    }

    #[inline]
    pub fn tuple(&self, a: usize) -> &[u32] {
        &self.constraints[a * self.k..(a + 1) * self.k]
    }

    pub fn tuples(&self) -> impl Iterator<Item = &[u32]> {
        self.constraints.chunks_exact(self.k)
    }

    /// The unknown variables `u..n`.
    pub fn unknowns(&self) -> Vec<u32> {
        (self.u as u32..self.n as u32).collect()
    }
}

/// Samples `m` independent uniform ordered `k`-tuples without repetition.
///
/// Each tuple is a partial Fisher-Yates shuffle of a persistent identity
/// permutation; the `k` swaps are undone afterwards so every tuple costs
/// O(k).
pub fn sample_graph(n: usize, u: usize, m: usize, k: usize, rng: &mut RngStream) -> Result<BipartiteInstance> {
    if k == 0 || k > n {
        return Err(Error::InvalidParams(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if u >= n {
        return Err(Error::InvalidParams(format!("need u < n, got u={u}, n={n}")));
    }
    if n > u32::MAX as usize {
        return Err(Error::InvalidParams("n does not fit in u32".into()));
    }
    let mut perm: Vec<u32> = (0..n as u32).collect();
    let mut swaps = vec![0usize; k];
    let mut constraints = Vec::with_capacity(m * k);
    for _ in 0..m {
        for (j, s) in swaps.iter_mut().enumerate() {
            let pick = rng.random_range(j..n);
            perm.swap(j, pick);
            *s = pick;
        }
        constraints.extend_from_slice(&perm[..k]);
        for j in (0..k).rev() {
            perm.swap(j, swaps[j]);
        }
    }
    Ok(BipartiteInstance { n, u, k, constraints })
}

/// A bipartite instance with a shared local function, a hidden assignment
/// and the outputs it produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedInstance {
    graph: BipartiteInstance,
    f: LocalFunction,
    planted: Vec<u32>,
    /// Flattened `m x (k - r + 1)` outputs.
    outputs: Vec<u32>,
    seed: Option<u64>,
}

impl PlantedInstance {
    /// Assembles an instance from parts, checking planted consistency.
    pub fn from_parts(
        graph: BipartiteInstance,
        f: LocalFunction,
        planted: Vec<u32>,
        outputs: Vec<Vec<u32>>,
        seed: Option<u64>,
    ) -> Result<Self> {
        if f.k() != graph.k {
            return Err(Error::InvalidParams(format!("arity mismatch: f.k={} graph.k={}", f.k(), graph.k)));
        }
        if planted.len() != graph.n {
            return Err(Error::LengthMismatch { expected: graph.n, got: planted.len() });
        }
        if outputs.len() != graph.m() {
            return Err(Error::LengthMismatch { expected: graph.m(), got: outputs.len() });
        }
        for &v in &planted {
            f.field().check(v)?;
        }
        let inst = Self {
            outputs: outputs.concat(),
            graph,
            f,
            planted,
            seed,
        };
        if inst.outputs.len() != inst.graph.m() * inst.f.output_len() {
            return Err(Error::Format("output vectors have the wrong length".into()));
        }
        let mut buf = vec![0; inst.f.output_len()];
        let mut x = vec![0; inst.graph.k];
        for a in 0..inst.graph.m() {
            inst.restrict_into(&inst.planted, a, &mut x);
            inst.f.evaluate_into(&x, &mut buf);
            if buf != inst.output(a) {
                return Err(Error::Precondition(format!("constraint {a} is inconsistent with the planted assignment")));
            }
        }
        Ok(inst)
    }

    pub fn graph(&self) -> &BipartiteInstance {
        &self.graph
    }

    pub fn function(&self) -> &LocalFunction {
        &self.f
    }

    pub fn planted(&self) -> &[u32] {
        &self.planted
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn output(&self, a: usize) -> &[u32] {
        let l = self.f.output_len();
        &self.outputs[a * l..(a + 1) * l]
    }

    /// Copies `x` restricted to constraint `a`'s tuple into `out`.
    #[inline]
    pub fn restrict_into(&self, x: &[u32], a: usize, out: &mut [u32]) {
        for (o, &v) in out.iter_mut().zip(self.graph.tuple(a)) {
            *o = x[v as usize];
        }
    }

    /// Number of constraints whose output disagrees with `x`.
    pub fn ip_objective(&self, x: &[u32]) -> Result<usize> {
        if x.len() != self.graph.n {
            return Err(Error::LengthMismatch { expected: self.graph.n, got: x.len() });
        }
        let mut local = vec![0; self.graph.k];
        let mut y = vec![0; self.f.output_len()];
        let mut violated = 0;
        for a in 0..self.graph.m() {
            self.restrict_into(x, a, &mut local);
            self.f.evaluate_into(&local, &mut y);
            if y != self.output(a) {
                violated += 1;
            }
        }
        Ok(violated)
    }
}

/// Draws a uniform planted assignment and computes every output.
pub fn plant(graph: BipartiteInstance, f: &LocalFunction, rng: &mut RngStream) -> Result<PlantedInstance> {
    if f.k() != graph.k {
        return Err(Error::InvalidParams(format!("arity mismatch: f.k={} graph.k={}", f.k(), graph.k)));
    }
    let q = f.q();
    let planted: Vec<u32> = (0..graph.n).map(|_| rng.random_range(0..q)).collect();
    let l = f.output_len();
    let mut outputs = vec![0; graph.m() * l];
    let mut x = vec![0; graph.k];
    for (a, y) in outputs.chunks_exact_mut(l).enumerate() {
        for (o, &v) in x.iter_mut().zip(graph.tuple(a)) {
            *o = planted[v as usize];
        }
        f.evaluate_into(&x, y);
    }
    Ok(PlantedInstance {
        graph,
        f: f.clone(),
        planted,
        outputs,
        seed: None,
    })
}

/// Samples a graph and plants it, both from the same stream, recording the
/// seed that addressed the stream.
pub fn generate(
    f: &LocalFunction,
    n: usize,
    u: usize,
    m: usize,
    seed: u64,
    rng: &mut RngStream,
) -> Result<PlantedInstance> {
    let graph = sample_graph(n, u, m, f.k(), rng)?;
    let mut inst = plant(graph, f, rng)?;
    inst.seed = Some(seed);
    Ok(inst)
}

/// On-disk layout; variable indices are 1-based.
#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    q: u32,
    k: usize,
    r: usize,
    n: usize,
    u: usize,
    m: usize,
    seed: Option<u64>,
    #[serde(rename = "H")]
    h: Vec<Vec<u32>>,
    constraints: Vec<Vec<u32>>,
    planted: Vec<u32>,
    outputs: Vec<Vec<u32>>,
}

impl Serialize for PlantedInstance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let l = self.f.output_len();
        InstanceFile {
            q: self.f.q(),
            k: self.f.k(),
            r: self.f.r(),
            n: self.graph.n,
            u: self.graph.u,
            m: self.graph.m(),
            seed: self.seed,
            h: self.f.matrix().to_vec(),
            constraints: self.graph.tuples().map(|t| t.iter().map(|&v| v + 1).collect()).collect(),
            planted: self.planted.clone(),
            outputs: self.outputs.chunks_exact(l).map(|c| c.to_vec()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PlantedInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let file = InstanceFile::deserialize(d)?;
        if file.constraints.len() != file.m {
            return Err(D::Error::custom(format!(
                "m = {} but {} constraints listed",
                file.m,
                file.constraints.len()
            )));
        }
        let tuples = file
            .constraints
            .iter()
            .map(|t| {
                t.iter()
                    .map(|&v| v.checked_sub(1).ok_or_else(|| D::Error::custom("variable indices are 1-based")))
                    .collect::<std::result::Result<Vec<u32>, _>>()
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let f = LocalFunction::from_matrix(file.q, file.k, file.r, file.h).map_err(D::Error::custom)?;
        let graph = BipartiteInstance::new(file.n, file.u, file.k, &tuples).map_err(D::Error::custom)?;
        PlantedInstance::from_parts(graph, f, file.planted, file.outputs, file.seed).map_err(D::Error::custom)
    }
}
