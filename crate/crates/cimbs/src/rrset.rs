//! Reverse-reachable sets, collections with size moments, and the sampling
//! procedure that sizes the final RR collection and produces an estimated
//! lower bound LB on the optimum.

use rand::Rng;
use rayon::prelude::*;

use crate::budget::BudgetModel;
use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, NodeId};
use crate::objective::ObjectiveBundle;
use crate::optimize::InnerAlgo;
use crate::rng::SeedStream;
use crate::strategy::StrategyModel;

/// One reverse-reachable set; always contains its root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RRSet {
    pub nodes: Vec<NodeId>,
}

/// Samples a single RR set: uniform root, then reverse BFS where each
/// in-edge is traversed independently with its probability. Only edges on
/// the reverse frontier are flipped, which is equivalent to sampling a full
/// live-edge graph.
pub fn sample_rr(graph: &DirectedGraph, rng: &mut impl Rng) -> RRSet {
    assert!(graph.n() >= 1);
    let mut visited = vec![false; graph.n()];
    let mut nodes = Vec::new();
    let root = rng.random_range(0..graph.n() as u32);
    visited[root as usize] = true;
    nodes.push(root);
    let mut head = 0;
    while head < nodes.len() {
        let v = NodeId(nodes[head]);
        head += 1;
        for &eid in graph.in_adj(v) {
            let edge = graph.edge(eid);
            let u = edge.src;
            if !visited[u.index()] && rng.random::<f64>() < edge.p {
                visited[u.index()] = true;
                nodes.push(u.0);
            }
        }
    }
    RRSet {
        nodes: nodes.into_iter().map(NodeId).collect(),
    }
}

/// A flattened sequence of RR sets with running size moments.
#[derive(Debug, Clone)]
pub struct RRCollection {
    n: usize,
    offsets: Vec<usize>,
    nodes: Vec<u32>,
    sum1: u128,
    sum2: u128,
    sum3: u128,
}

const GEN_CHUNK: u64 = 8192;

impl RRCollection {
    pub fn empty(n: usize) -> Self {
        RRCollection {
            n,
            offsets: vec![0],
            nodes: Vec::new(),
            sum1: 0,
            sum2: 0,
            sum3: 0,
        }
    }

    pub fn generate(graph: &DirectedGraph, count: u64, stream: &SeedStream, base: u64) -> Self {
        let mut c = RRCollection::empty(graph.n());
        c.extend(graph, count, stream, base);
        c
    }

    /// Appends `count` RR sets drawn from streams `base..base + count`.
    /// Chunked in fixed order, so the collection is identical for any worker
    /// count.
    pub fn extend(&mut self, graph: &DirectedGraph, count: u64, stream: &SeedStream, base: u64) {
        let chunks: Vec<(u64, u64)> = (0..count)
            .step_by(GEN_CHUNK as usize)
            .map(|s| (base + s, base + (s + GEN_CHUNK).min(count)))
            .collect();
        let parts: Vec<(Vec<u32>, Vec<u32>)> = chunks
            .par_iter()
            .map(|&(start, end)| {
                let n = graph.n();
                let mut mark = vec![0u32; n];
                let mut epoch = 0u32;
                let mut nodes: Vec<u32> = Vec::new();
                let mut lens: Vec<u32> = Vec::with_capacity((end - start) as usize);
                let mut queue: Vec<u32> = Vec::new();
                for idx in start..end {
                    let mut rng = stream.rng(idx);
                    epoch += 1;
                    queue.clear();
                    let root = rng.random_range(0..n as u32);
                    mark[root as usize] = epoch;
                    queue.push(root);
                    let mut head = 0;
                    while head < queue.len() {
                        let v = NodeId(queue[head]);
                        head += 1;
                        for &eid in graph.in_adj(v) {
                            let edge = graph.edge(eid);
                            let u = edge.src.index();
                            if mark[u] != epoch && rng.random::<f64>() < edge.p {
                                mark[u] = epoch;
                                queue.push(edge.src.0);
                            }
                        }
                    }
                    lens.push(queue.len() as u32);
                    nodes.extend_from_slice(&queue);
                }
                (nodes, lens)
            })
            .collect();
        for (nodes, lens) in parts {
            self.nodes.extend_from_slice(&nodes);
            for len in lens {
                let last = *self.offsets.last().unwrap();
                self.offsets.push(last + len as usize);
                let l = len as u128;
                self.sum1 += l;
                self.sum2 += l * l;
                self.sum3 += l * l * l;
            }
        }
    }

    #[inline]
    pub fn theta(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn set(&self, i: usize) -> &[u32] {
        &self.nodes[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn iter_sets(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.theta()).map(move |i| self.set(i))
    }

    /// (nu1, nu2, nu3): means of |R|, |R|^2, |R|^3.
    pub fn moments(&self) -> (f64, f64, f64) {
        let theta = self.theta() as f64;
        assert!(theta >= 1.0, "moments need at least one RR set");
        (
            self.sum1 as f64 / theta,
            self.sum2 as f64 / theta,
            self.sum3 as f64 / theta,
        )
    }

    pub fn total_mass(&self) -> usize {
        self.nodes.len()
    }
}

/// ln N(P, r) <= d ln(3k / r), clamped at zero.
pub fn covering_log(budget: &BudgetModel, radius: f64) -> f64 {
    assert!(radius > 0.0, "covering_log needs radius > 0");
    let d = budget.d() as f64;
    (d * (3.0 * budget.k / radius).ln()).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMode {
    /// Extend the collection across rounds (the published algorithm).
    Reuse,
    /// Regenerate the round's RR sets from scratch (appendix revision).
    Fresh,
}

impl std::str::FromStr for ResampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reuse" => Ok(ResampleMode::Reuse),
            "fresh" => Ok(ResampleMode::Fresh),
            other => Err(Error::Config(format!("unknown resample mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SamplingParams {
    pub epsilon: f64,
    pub ell: f64,
    pub l1: f64,
    pub l2: f64,
    pub theta_cap: u64,
    pub resample: ResampleMode,
}

pub struct SamplingOutput {
    pub collection: RRCollection,
    pub lb: f64,
    pub loop_rounds: usize,
    pub theta_history: Vec<u64>,
    pub theta_one: f64,
    pub theta_two: f64,
    pub theta_final: u64,
    /// Total RR sets generated across all rounds plus the final batch.
    pub total_generated: u64,
    /// True when a round's inner optimizer run hit its iteration cap.
    pub inner_truncated: bool,
}

fn ceil_count(value: f64) -> u64 {
    if !value.is_finite() {
        return u64::MAX;
    }
    value.ceil().max(1.0) as u64
}

/// The sampling procedure: guesses the optimum by repeated halving, sizes
/// per-round collections through the covering number, runs the inner
/// optimizer to test each guess, and finally regenerates a fresh collection
/// of max(theta1, theta2) RR sets.
pub fn sampling_procedure(
    graph: &DirectedGraph,
    strategy: &StrategyModel,
    budget: &BudgetModel,
    params: &SamplingParams,
    algo: &dyn InnerAlgo,
    stream: &SeedStream,
) -> Result<SamplingOutput> {
    let eps = params.epsilon;
    if !(0.0 < eps && eps < 1.0) {
        return Err(Error::Config(format!("epsilon must be in (0, 1), got {eps}")));
    }
    if !(params.ell > 0.0) {
        return Err(Error::Config(format!("ell must be > 0, got {}", params.ell)));
    }
    let n = graph.n() as f64;
    let scale = n + budget.lambda * budget.k;
    let eps_prime = std::f64::consts::SQRT_2 * eps / 3.0;
    let break_factor = 1.0 + eps_prime + eps / 3.0;
    let max_rounds = (scale.log2().floor() as i64 - 1).max(0) as usize;

    let mut lb = 1.0f64;
    let mut collection = RRCollection::empty(graph.n());
    let mut next_stream = 0u64;
    let mut total_generated = 0u64;
    let mut theta_history = Vec::with_capacity(max_rounds);
    let mut loop_rounds = 0usize;
    let mut inner_truncated = false;

    for i in 1..=max_rounds {
        loop_rounds = i;
        let x_i = scale / 2f64.powi(i as i32);
        let radius = (eps / 3.0) * x_i / params.l2;
        let cov = if radius.is_finite() && radius > 0.0 {
            covering_log(budget, radius)
        } else {
            0.0
        };
        let numer = n * (2.0 + 2.0 / 3.0 * eps_prime)
            * (cov + params.ell * n.ln() + 2f64.ln() + scale.log2().ln());
        let theta_i = ceil_count(numer / (eps_prime * eps_prime * x_i));
        theta_history.push(theta_i);
        if theta_i > params.theta_cap {
            return Err(Error::Resource {
                what: "RR sets per sampling round",
                required: theta_i,
                cap: params.theta_cap,
            });
        }
        match params.resample {
            ResampleMode::Reuse => {
                let have = collection.theta() as u64;
                if theta_i > have {
                    collection.extend(graph, theta_i - have, stream, next_stream);
                    next_stream += theta_i - have;
                    total_generated += theta_i - have;
                }
            }
            ResampleMode::Fresh => {
                collection = RRCollection::generate(graph, theta_i, stream, next_stream);
                next_stream += theta_i;
                total_generated += theta_i;
            }
        }
        let bundle = ObjectiveBundle::new(graph, strategy, budget, &collection)?;
        let run = algo.run(&bundle, eps * x_i / 3.0)?;
        inner_truncated |= run.trace.truncated;
        let value = bundle.combined_hat(&run.x);
        if value >= break_factor * x_i {
            lb = (value / break_factor).max(1.0);
            break;
        }
    }

    let alpha = algo.sampling_alpha();
    let alpha_prime = alpha - eps / 3.0;
    if alpha_prime <= 0.0 {
        return Err(Error::Config(format!(
            "approximation ratio {alpha} must exceed epsilon/3 = {}",
            eps / 3.0
        )));
    }
    let ln_4nl = 4f64.ln() + params.ell * n.ln();
    let theta_one = 8.0 * n * ln_4nl / (lb * alpha_prime * alpha_prime * eps * eps / 9.0);
    let radius = (eps / 3.0) * lb / (params.l1 + params.l2);
    let cov = if radius.is_finite() && radius > 0.0 {
        covering_log(budget, radius)
    } else {
        0.0
    };
    let denom_inner = eps / 3.0 - 0.25 * alpha_prime * alpha_prime * (eps / 3.0);
    let theta_two = 2.0 * alpha_prime * n * (ln_4nl + cov) / (denom_inner * denom_inner * lb);
    let theta_final = ceil_count(theta_one.max(theta_two));
    if theta_final > params.theta_cap {
        return Err(Error::Resource {
            what: "final RR collection",
            required: theta_final,
            cap: params.theta_cap,
        });
    }
    let collection = RRCollection::generate(graph, theta_final, stream, next_stream);
    total_generated += theta_final;

    Ok(SamplingOutput {
        collection,
        lb,
        loop_rounds,
        theta_history,
        theta_one,
        theta_two,
        theta_final,
        total_generated,
        inner_truncated,
    })
}
