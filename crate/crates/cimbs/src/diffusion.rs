//! Live-edge sampling, forward spread, Monte Carlo estimation of sigma(S)
//! and g(x), and exact enumeration oracles for tiny graphs.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, NodeId};
use crate::rng::SeedStream;
use crate::strategy::StrategyModel;

/// Outcome of one live-edge draw: a boolean mask over the parent graph's
/// edges.
#[derive(Debug, Clone)]
pub struct LiveEdgeGraph {
    pub alive: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub num_sims: u64,
}

/// Samples a live-edge graph: every edge kept independently with its
/// probability.
pub fn sample_live_edge(graph: &DirectedGraph, rng: &mut impl Rng) -> LiveEdgeGraph {
    LiveEdgeGraph {
        alive: graph
            .edges()
            .iter()
            .map(|e| rng.random::<f64>() < e.p)
            .collect(),
    }
}

/// Number of nodes reachable from `seeds` along alive edges, seeds included.
pub fn spread_on(graph: &DirectedGraph, live: &LiveEdgeGraph, seeds: &[NodeId]) -> usize {
    debug_assert_eq!(live.alive.len(), graph.m());
    let mut mark = vec![false; graph.n()];
    let mut queue: Vec<u32> = Vec::new();
    for &s in seeds {
        if !mark[s.index()] {
            mark[s.index()] = true;
            queue.push(s.0);
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let u = NodeId(queue[head]);
        head += 1;
        for &eid in graph.out_adj(u) {
            if live.alive[eid as usize] {
                let w = graph.edge(eid).dst;
                if !mark[w.index()] {
                    mark[w.index()] = true;
                    queue.push(w.0);
                }
            }
        }
    }
    queue.len()
}

/// |reach(u') \ reach(seeds)| in the live-edge graph; 0 when u' is a seed.
pub fn marginal_gain_on(
    graph: &DirectedGraph,
    live: &LiveEdgeGraph,
    u_prime: NodeId,
    seeds: &[NodeId],
) -> usize {
    if seeds.contains(&u_prime) {
        return 0;
    }
    let mut from_seeds = vec![false; graph.n()];
    let mut queue: Vec<u32> = Vec::new();
    for &s in seeds {
        if !from_seeds[s.index()] {
            from_seeds[s.index()] = true;
            queue.push(s.0);
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let u = NodeId(queue[head]);
        head += 1;
        for &eid in graph.out_adj(u) {
            if live.alive[eid as usize] {
                let w = graph.edge(eid).dst;
                if !from_seeds[w.index()] {
                    from_seeds[w.index()] = true;
                    queue.push(w.0);
                }
            }
        }
    }
    let mut visited = vec![false; graph.n()];
    let mut queue = vec![u_prime.0];
    visited[u_prime.index()] = true;
    let mut gain = usize::from(!from_seeds[u_prime.index()]);
    let mut head = 0;
    while head < queue.len() {
        let u = NodeId(queue[head]);
        head += 1;
        for &eid in graph.out_adj(u) {
            if live.alive[eid as usize] {
                let w = graph.edge(eid).dst;
                if !visited[w.index()] {
                    visited[w.index()] = true;
                    if !from_seeds[w.index()] {
                        gain += 1;
                    }
                    queue.push(w.0);
                }
            }
        }
    }
    gain
}

/// Draws a seed set: node v included independently with probability h_v(x).
pub fn sample_seed_set(
    strategy: &StrategyModel,
    x: &[f64],
    rng: &mut impl Rng,
) -> Result<Vec<NodeId>> {
    strategy.check_domain(x)?;
    let mut seeds = Vec::new();
    for v in 0..strategy.n() {
        if rng.random::<f64>() < strategy.h_unchecked(v, x) {
            seeds.push(NodeId(v as u32));
        }
    }
    Ok(seeds)
}

/// Epoch-stamped scratch for the Monte Carlo hot loop, reused across the
/// simulations of one worker chunk.
struct SpreadScratch {
    mark: Vec<u32>,
    epoch: u32,
    queue: Vec<u32>,
}

impl SpreadScratch {
    fn new(n: usize) -> Self {
        SpreadScratch {
            mark: vec![0; n],
            epoch: 0,
            queue: Vec::with_capacity(n.min(1024)),
        }
    }

    /// Lazy forward IC spread: out-edges of a node are flipped once, when the
    /// node first activates. Seeds are fed by `push_seeds` before traversal.
    fn spread<R: Rng>(
        &mut self,
        graph: &DirectedGraph,
        rng: &mut R,
        push_seeds: impl FnOnce(&mut Self, &mut R, u32),
    ) -> usize {
        self.epoch += 1;
        let epoch = self.epoch;
        self.queue.clear();
        push_seeds(self, rng, epoch);
        let mut head = 0;
        while head < self.queue.len() {
            let u = NodeId(self.queue[head]);
            head += 1;
            for &eid in graph.out_adj(u) {
                let edge = graph.edge(eid);
                let w = edge.dst.index();
                if self.mark[w] != epoch && rng.random::<f64>() < edge.p {
                    self.mark[w] = epoch;
                    self.queue.push(edge.dst.0);
                }
            }
        }
        self.queue.len()
    }

    fn push(&mut self, v: u32, epoch: u32) {
        if self.mark[v as usize] != epoch {
            self.mark[v as usize] = epoch;
            self.queue.push(v);
        }
    }
}

const SIM_CHUNK: u64 = 4096;

/// Runs `num_sims` independent simulations with stream index = simulation
/// index, merging per-chunk statistics in fixed chunk order so the result is
/// identical for any worker count.
fn monte_carlo(
    num_sims: u64,
    stream: &SeedStream,
    base_index: u64,
    sim: impl Fn(&mut SpreadScratch, &mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
    n: usize,
) -> SpreadEstimate {
    let chunks: Vec<(u64, u64)> = (0..num_sims)
        .step_by(SIM_CHUNK as usize)
        .map(|start| (start, (start + SIM_CHUNK).min(num_sims)))
        .collect();
    let parts: Vec<(u64, f64, f64)> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut scratch = SpreadScratch::new(n);
            let mut count = 0u64;
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for i in start..end {
                let mut rng = stream.rng(base_index + i);
                let value = sim(&mut scratch, &mut rng);
                count += 1;
                let delta = value - mean;
                mean += delta / count as f64;
                m2 += delta * (value - mean);
            }
            (count, mean, m2)
        })
        .collect();
    let (mut count, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
    for (c, m, s) in parts {
        if c == 0 {
            continue;
        }
        let total = count + c;
        let delta = m - mean;
        mean += delta * c as f64 / total as f64;
        m2 += s + delta * delta * (count as f64 * c as f64) / total as f64;
        count = total;
    }
    let std_error = if count > 1 {
        (m2 / (count - 1) as f64).sqrt() / (count as f64).sqrt()
    } else {
        0.0
    };
    SpreadEstimate {
        mean,
        std_error,
        num_sims: count,
    }
}

/// Monte Carlo estimate of sigma(seeds).
pub fn estimate_sigma(
    graph: &DirectedGraph,
    seeds: &[NodeId],
    num_sims: u64,
    stream: &SeedStream,
    base_index: u64,
) -> SpreadEstimate {
    assert!(num_sims >= 1, "estimate_sigma needs num_sims >= 1");
    let seed_ids: Vec<u32> = seeds.iter().map(|s| s.0).collect();
    monte_carlo(
        num_sims,
        stream,
        base_index,
        |scratch, rng| {
            scratch.spread(graph, rng, |s, _, epoch| {
                for &v in &seed_ids {
                    s.push(v, epoch);
                }
            }) as f64
        },
        graph.n(),
    )
}

/// Monte Carlo estimate of g(x): each simulation draws a seed set from the
/// activation probabilities, then one live-edge spread.
pub fn estimate_g(
    graph: &DirectedGraph,
    strategy: &StrategyModel,
    x: &[f64],
    num_sims: u64,
    stream: &SeedStream,
    base_index: u64,
) -> Result<SpreadEstimate> {
    assert!(num_sims >= 1, "estimate_g needs num_sims >= 1");
    strategy.check_domain(x)?;
    let h_values = strategy.h_all(x);
    Ok(monte_carlo(
        num_sims,
        stream,
        base_index,
        |scratch, rng| {
            scratch.spread(graph, rng, |s, rng, epoch| {
                for (v, &h) in h_values.iter().enumerate() {
                    if rng.random::<f64>() < h {
                        s.push(v as u32, epoch);
                    }
                }
            }) as f64
        },
        graph.n(),
    ))
}

pub const EXACT_G_MAX_EDGES: usize = 20;
pub const EXACT_GRAD_MAX_NODES: usize = 10;
pub const EXACT_GRAD_MAX_EDGES: usize = 16;

/// Exhaustive live-edge enumeration of g(x), precomputed into reach-set
/// weights so repeated evaluation (e.g. grid search) is cheap:
/// g(x) = sum_v sum_L P(L) (1 - prod_{u in R_v(L)} (1 - h_u(x))), grouped by
/// the distinct reach sets R_v(L).
pub struct ExactGEvaluator {
    /// Nodes with no incident edges; each contributes h_v(x).
    isolated: Vec<u32>,
    /// Active node ids, in the compact order used by the masks.
    active: Vec<u32>,
    /// (reach-set mask over active nodes, accumulated probability mass).
    terms: Vec<(u64, f64)>,
}

impl ExactGEvaluator {
    pub fn new(graph: &DirectedGraph) -> Result<Self> {
        let m = graph.m();
        if m > EXACT_G_MAX_EDGES {
            return Err(Error::EnumerationBound(format!(
                "exact_g supports m <= {EXACT_G_MAX_EDGES}, graph has {m} edges"
            )));
        }
        let mut incident = vec![false; graph.n()];
        for e in graph.edges() {
            incident[e.src.index()] = true;
            incident[e.dst.index()] = true;
        }
        let active: Vec<u32> = (0..graph.n() as u32)
            .filter(|&v| incident[v as usize])
            .collect();
        let isolated: Vec<u32> = (0..graph.n() as u32)
            .filter(|&v| !incident[v as usize])
            .collect();
        let a = active.len();
        debug_assert!(a <= 64);
        let mut compact = vec![usize::MAX; graph.n()];
        for (i, &v) in active.iter().enumerate() {
            compact[v as usize] = i;
        }
        // Edges in compact coordinates.
        let edges: Vec<(usize, usize, f64)> = graph
            .edges()
            .iter()
            .map(|e| (compact[e.src.index()], compact[e.dst.index()], e.p))
            .collect();

        let mut accum: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
        let mut out_alive: Vec<Vec<usize>> = vec![Vec::new(); a];
        for live_mask in 0u32..(1u32 << m) {
            let mut prob = 1.0;
            for (ei, &(_, _, p)) in edges.iter().enumerate() {
                prob *= if live_mask >> ei & 1 == 1 { p } else { 1.0 - p };
            }
            if prob == 0.0 {
                continue;
            }
            for adj in &mut out_alive {
                adj.clear();
            }
            for (ei, &(s, t, _)) in edges.iter().enumerate() {
                if live_mask >> ei & 1 == 1 {
                    out_alive[s].push(t);
                }
            }
            // Forward reach masks, then transpose into reach-to sets.
            let mut reach_to = vec![0u64; a];
            let mut stack = Vec::with_capacity(a);
            for u in 0..a {
                let mut seen = 1u64 << u;
                stack.clear();
                stack.push(u);
                while let Some(w) = stack.pop() {
                    for &t in &out_alive[w] {
                        if seen >> t & 1 == 0 {
                            seen |= 1 << t;
                            stack.push(t);
                        }
                    }
                }
                let mut rest = seen;
                while rest != 0 {
                    let v = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    reach_to[v] |= 1 << u;
                }
            }
            for &mask in &reach_to {
                *accum.entry(mask).or_insert(0.0) += prob;
            }
        }
        let mut terms: Vec<(u64, f64)> = accum.into_iter().collect();
        terms.sort_unstable_by_key(|&(mask, _)| mask);
        Ok(ExactGEvaluator {
            isolated,
            active,
            terms,
        })
    }

    pub fn value(&self, strategy: &StrategyModel, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for &v in &self.isolated {
            total += strategy.h_unchecked(v as usize, x);
        }
        let h_active: Vec<f64> = self
            .active
            .iter()
            .map(|&v| strategy.h_unchecked(v as usize, x))
            .collect();
        for &(mask, weight) in &self.terms {
            let mut survive = 1.0;
            let mut rest = mask;
            while rest != 0 {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                survive *= 1.0 - h_active[i];
            }
            total += weight * (1.0 - survive);
        }
        total
    }
}

/// Exact g(x) by exhaustive live-edge enumeration (m <= 20).
pub fn exact_g(graph: &DirectedGraph, strategy: &StrategyModel, x: &[f64]) -> Result<f64> {
    strategy.check_domain(x)?;
    Ok(ExactGEvaluator::new(graph)?.value(strategy, x))
}

/// Exact sigma(S) for every seed subset, by live-edge enumeration. Index the
/// returned table with the node-set bitmask.
pub fn exact_sigma_table(graph: &DirectedGraph) -> Result<Vec<f64>> {
    let n = graph.n();
    let m = graph.m();
    if n > EXACT_GRAD_MAX_NODES || m > EXACT_GRAD_MAX_EDGES {
        return Err(Error::EnumerationBound(format!(
            "exact sigma table supports n <= {EXACT_GRAD_MAX_NODES} and m <= {EXACT_GRAD_MAX_EDGES}, graph has n = {n}, m = {m}"
        )));
    }
    let edges = graph.edges();
    let mut sigma = vec![0.0f64; 1 << n];
    let mut out_alive: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut forward = vec![0u32; n];
    let mut union = vec![0u32; 1 << n];
    for live_mask in 0u32..(1u32 << m) {
        let mut prob = 1.0;
        for (ei, e) in edges.iter().enumerate() {
            prob *= if live_mask >> ei & 1 == 1 { e.p } else { 1.0 - e.p };
        }
        if prob == 0.0 {
            continue;
        }
        for adj in &mut out_alive {
            adj.clear();
        }
        for (ei, e) in edges.iter().enumerate() {
            if live_mask >> ei & 1 == 1 {
                out_alive[e.src.index()].push(e.dst.index());
            }
        }
        let mut stack = Vec::with_capacity(n);
        for u in 0..n {
            let mut seen = 1u32 << u;
            stack.clear();
            stack.push(u);
            while let Some(w) = stack.pop() {
                for &t in &out_alive[w] {
                    if seen >> t & 1 == 0 {
                        seen |= 1 << t;
                        stack.push(t);
                    }
                }
            }
            forward[u] = seen;
        }
        union[0] = 0;
        for s in 1usize..(1 << n) {
            let low = s.trailing_zeros() as usize;
            union[s] = union[s & (s - 1)] | forward[low];
        }
        for s in 0usize..(1 << n) {
            sigma[s] += prob * union[s].count_ones() as f64;
        }
    }
    Ok(sigma)
}

/// Exact gradient of g at x via the marginal-gain sum over all seed sets:
/// component through node u' weighs sigma(S + u') - sigma(S) by the
/// probability of S under h, times grad h_{u'}(x).
pub fn exact_grad_g(
    graph: &DirectedGraph,
    strategy: &StrategyModel,
    x: &[f64],
) -> Result<Vec<f64>> {
    strategy.check_domain(x)?;
    let n = graph.n();
    let sigma = exact_sigma_table(graph)?;
    let h: Vec<f64> = strategy.h_all(x);
    let mut grad = vec![0.0; strategy.d()];
    for u_prime in 0..n {
        let mut factor = 0.0;
        for s in 0usize..(1 << n) {
            if s >> u_prime & 1 == 1 {
                continue;
            }
            let mut weight = 1.0;
            for v in 0..n {
                if v == u_prime {
                    continue;
                }
                weight *= if s >> v & 1 == 1 { h[v] } else { 1.0 - h[v] };
            }
            if weight == 0.0 {
                continue;
            }
            factor += (sigma[s | (1 << u_prime)] - sigma[s]) * weight;
        }
        strategy.for_each_grad(u_prime, x, &mut |j, dh| {
            grad[j] += factor * dh;
        });
    }
    Ok(grad)
}

/// One draw of the unbiased stochastic gradient estimator of grad g(x):
/// n * sigma_L(u' | S) * grad h_{u'}(x) with u' uniform, S sampled from h on
/// the remaining nodes, and L a live-edge sample.
pub fn stochastic_grad_g(
    graph: &DirectedGraph,
    strategy: &StrategyModel,
    x: &[f64],
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    strategy.check_domain(x)?;
    let n = graph.n();
    let u_prime = NodeId(rng.random_range(0..n as u32));
    let mut seeds = Vec::new();
    for v in 0..n {
        if v == u_prime.index() {
            continue;
        }
        if rng.random::<f64>() < strategy.h_unchecked(v, x) {
            seeds.push(NodeId(v as u32));
        }
    }
    let live = sample_live_edge(graph, rng);
    let gain = marginal_gain_on(graph, &live, u_prime, &seeds) as f64;
    let mut grad = vec![0.0; strategy.d()];
    let scale = n as f64 * gain;
    strategy.for_each_grad(u_prime.index(), x, &mut |j, dh| {
        grad[j] += scale * dh;
    });
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{load_edge_list, WeightMode};
    use crate::rng::Purpose;
    use crate::strategy::{build_scenario, ScenarioKind};

    fn path_graph() -> DirectedGraph {
        load_edge_list("3 2\n0 1 1.0\n1 2 1.0\n".as_bytes(), WeightMode::Explicit).unwrap()
    }

    fn tiny_random() -> DirectedGraph {
        load_edge_list(
            "5 6\n0 1 0.6\n1 2 0.5\n2 0 0.3\n1 3 0.7\n3 4 0.4\n0 4 0.2\n".as_bytes(),
            WeightMode::Explicit,
        )
        .unwrap()
    }

    #[test]
    fn live_edge_extremes() {
        let g = path_graph();
        let stream = SeedStream::new(1, Purpose::Test);
        let live = sample_live_edge(&g, &mut stream.rng(0));
        assert!(live.alive.iter().all(|&a| a));
        let g0 = load_edge_list("2 1\n0 1 0.0\n".as_bytes(), WeightMode::Explicit).unwrap();
        let live = sample_live_edge(&g0, &mut stream.rng(1));
        assert!(!live.alive[0]);
    }

    #[test]
    fn live_edge_frequency_matches_probability() {
        let g = load_edge_list("2 1\n0 1 0.5\n".as_bytes(), WeightMode::Explicit).unwrap();
        let stream = SeedStream::new(2, Purpose::Test);
        let trials = 100_000u64;
        let mut alive = 0u64;
        for i in 0..trials {
            if sample_live_edge(&g, &mut stream.rng(i)).alive[0] {
                alive += 1;
            }
        }
        let freq = alive as f64 / trials as f64;
        let sd = (0.25 / trials as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * sd, "freq {freq}");
    }

    #[test]
    fn spread_on_basics() {
        let g = path_graph();
        let all = LiveEdgeGraph {
            alive: vec![true, true],
        };
        assert_eq!(spread_on(&g, &all, &[]), 0);
        assert_eq!(
            spread_on(&g, &all, &[NodeId(0), NodeId(1), NodeId(2)]),
            3
        );
        assert_eq!(spread_on(&g, &all, &[NodeId(0)]), 3);
        let none = LiveEdgeGraph {
            alive: vec![false, false],
        };
        assert_eq!(spread_on(&g, &none, &[NodeId(0)]), 1);
    }

    #[test]
    fn spread_is_monotone_in_seeds() {
        let g = tiny_random();
        let stream = SeedStream::new(3, Purpose::Test);
        for i in 0..200u64 {
            let live = sample_live_edge(&g, &mut stream.rng(i));
            let small = [NodeId(0)];
            let big = [NodeId(0), NodeId(3)];
            assert!(spread_on(&g, &live, &small) <= spread_on(&g, &live, &big));
        }
    }

    #[test]
    fn marginal_gain_matches_spread_difference() {
        let g = tiny_random();
        let stream = SeedStream::new(4, Purpose::Test);
        for i in 0..300u64 {
            let mut rng = stream.rng(i);
            let live = sample_live_edge(&g, &mut rng);
            let seeds: Vec<NodeId> = (0..5)
                .filter(|_| rng.random::<f64>() < 0.4)
                .map(|v| NodeId(v as u32))
                .collect();
            let seeds: Vec<NodeId> = seeds.into_iter().collect();
            for u in 0..5u32 {
                let u = NodeId(u);
                if seeds.contains(&u) {
                    assert_eq!(marginal_gain_on(&g, &live, u, &seeds), 0);
                    continue;
                }
                let mut with: Vec<NodeId> = seeds.clone();
                with.push(u);
                let expect = spread_on(&g, &live, &with) - spread_on(&g, &live, &seeds);
                assert_eq!(marginal_gain_on(&g, &live, u, &seeds), expect);
            }
        }
    }

    #[test]
    fn marginal_gain_path_example() {
        let g = path_graph();
        let live = LiveEdgeGraph {
            alive: vec![true, true],
        };
        assert_eq!(marginal_gain_on(&g, &live, NodeId(0), &[NodeId(2)]), 2);
        assert_eq!(marginal_gain_on(&g, &live, NodeId(0), &[]), 3);
    }

    #[test]
    fn estimate_sigma_edgeless_and_two_node() {
        let g = load_edge_list("4 0\n".as_bytes(), WeightMode::Explicit).unwrap();
        let stream = SeedStream::new(5, Purpose::Test);
        let est = estimate_sigma(&g, &[NodeId(0), NodeId(1), NodeId(2)], 100, &stream, 0);
        assert_eq!(est.mean, 3.0);
        assert_eq!(est.std_error, 0.0);
        let est = estimate_sigma(&g, &[], 10, &stream, 0);
        assert_eq!(est.mean, 0.0);

        let g2 = load_edge_list("2 1\n0 1 0.5\n".as_bytes(), WeightMode::Explicit).unwrap();
        let est = estimate_sigma(&g2, &[NodeId(0)], 100_000, &stream, 0);
        assert!(
            (est.mean - 1.5).abs() <= 3.0 * est.std_error,
            "mean {} se {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn seed_set_sampling_frequencies() {
        let g = load_edge_list("4 0\n".as_bytes(), WeightMode::Explicit).unwrap();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Segment, 1, None, 1).unwrap();
        let stream = SeedStream::new(6, Purpose::Test);
        // q(0.5) = 0.75 for every node under a single shared segment.
        let x = [0.5];
        let trials = 50_000u64;
        let mut counts = [0u64; 4];
        for i in 0..trials {
            for s in sample_seed_set(&strategy, &x, &mut stream.rng(i)).unwrap() {
                counts[s.index()] += 1;
            }
        }
        let sd = (0.75 * 0.25 / trials as f64).sqrt();
        for c in counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - 0.75).abs() < 4.0 * sd, "freq {freq}");
        }
        // h == 0 and h == 1 extremes.
        assert!(sample_seed_set(&strategy, &[0.0], &mut stream.rng(0))
            .unwrap()
            .is_empty());
        assert_eq!(
            sample_seed_set(&strategy, &[1.0], &mut stream.rng(0))
                .unwrap()
                .len(),
            4
        );
    }

    #[test]
    fn estimate_g_edgeless_closed_form() {
        let g = load_edge_list("4 0\n".as_bytes(), WeightMode::Explicit).unwrap();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Segment, 1, None, 1).unwrap();
        let stream = SeedStream::new(7, Purpose::Test);
        let est = estimate_g(&g, &strategy, &[0.0], 100, &stream, 0).unwrap();
        assert_eq!(est.mean, 0.0);
        // q such that h = 0.5 per node: solve 2x - x^2 = 0.5.
        let x = 1.0 - 0.5f64.sqrt();
        let est = estimate_g(&g, &strategy, &[x], 100_000, &stream, 0).unwrap();
        assert!((est.mean - 2.0).abs() <= 3.0 * est.std_error);
    }

    #[test]
    fn exact_g_closed_forms() {
        // No propagation: g = sum_v h_v.
        let g = load_edge_list("3 0\n".as_bytes(), WeightMode::Explicit).unwrap();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 3, None, 1).unwrap();
        let x = [0.5, 0.2, 0.9];
        let expect: f64 = x.iter().map(|&v| 2.0 * v - v * v).sum();
        assert!((exact_g(&g, &strategy, &x).unwrap() - expect).abs() < 1e-12);

        // Deterministic edge 0 -> 1 with h_0 = 0.5, h_1 = 0 gives g = 1.
        let g = load_edge_list("2 1\n0 1 1.0\n".as_bytes(), WeightMode::Explicit).unwrap();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 2, None, 1).unwrap();
        let x0 = 1.0 - 0.5f64.sqrt(); // h(x0) = 0.5
        let val = exact_g(&g, &strategy, &[x0, 0.0]).unwrap();
        assert!((val - 1.0).abs() < 1e-12, "{val}");
    }

    #[test]
    fn exact_g_matches_monte_carlo() {
        let g = tiny_random();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 5, None, 1).unwrap();
        let stream = SeedStream::new(8, Purpose::Test);
        let x = [0.3, 0.1, 0.5, 0.2, 0.4];
        let exact = exact_g(&g, &strategy, &x).unwrap();
        let est = estimate_g(&g, &strategy, &x, 1_000_000, &stream, 0).unwrap();
        assert!(
            (est.mean - exact).abs() <= 4.0 * est.std_error,
            "exact {exact} mc {} se {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn exact_g_rejects_large_graphs() {
        let g = crate::graph::generate_synthetic(crate::graph::SyntheticKind::ErdosRenyi, 30, 0.3, 1)
            .unwrap();
        assert!(g.m() > EXACT_G_MAX_EDGES);
        let (strategy, _) =
            build_scenario(&g, ScenarioKind::Personalized, 30, None, 1).unwrap();
        let x = vec![0.1; 30];
        assert!(matches!(
            exact_g(&g, &strategy, &x),
            Err(Error::EnumerationBound(_))
        ));
    }

    fn fd_exact_grad(
        g: &DirectedGraph,
        strategy: &StrategyModel,
        x: &[f64],
        step: f64,
    ) -> Vec<f64> {
        let eval = ExactGEvaluator::new(g).unwrap();
        (0..x.len())
            .map(|j| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += step;
                xm[j] -= step;
                (eval.value(strategy, &xp) - eval.value(strategy, &xm)) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn exact_grad_matches_finite_differences() {
        let g = tiny_random();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 5, None, 1).unwrap();
        let stream = SeedStream::new(9, Purpose::Test);
        for trial in 0..20u64 {
            let mut rng = stream.rng(trial);
            let x: Vec<f64> = (0..5).map(|_| 0.05 + rng.random::<f64>() * 0.85).collect();
            let grad = exact_grad_g(&g, &strategy, &x).unwrap();
            let fd = fd_exact_grad(&g, &strategy, &x, 1e-5);
            for j in 0..5 {
                let denom = grad[j].abs().max(1.0);
                assert!(
                    (grad[j] - fd[j]).abs() / denom <= 1e-6,
                    "component {j}: exact {} fd {}",
                    grad[j],
                    fd[j]
                );
            }
        }
    }

    #[test]
    fn exact_grad_edgeless_equals_h_grad() {
        let g = load_edge_list("3 0\n".as_bytes(), WeightMode::Explicit).unwrap();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 3, None, 1).unwrap();
        let x = [0.3, 0.6, 0.1];
        let grad = exact_grad_g(&g, &strategy, &x).unwrap();
        for (j, &xj) in x.iter().enumerate() {
            assert!((grad[j] - (2.0 - 2.0 * xj)).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_grad_at_h_zero_is_single_node_spread() {
        // With h == 0 only S = empty contributes: component v is
        // sigma({v}) * dh_v(0).
        let g = path_graph();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 3, None, 1).unwrap();
        let x = [0.0, 0.0, 0.0];
        let grad = exact_grad_g(&g, &strategy, &x).unwrap();
        // sigma({0}) = 3, sigma({1}) = 2, sigma({2}) = 1 on the deterministic path.
        assert!((grad[0] - 6.0).abs() < 1e-12);
        assert!((grad[1] - 4.0).abs() < 1e-12);
        assert!((grad[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stochastic_grad_is_unbiased_and_bounded() {
        let g = tiny_random();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 5, None, 1).unwrap();
        let x = [0.2, 0.4, 0.1, 0.3, 0.5];
        let exact = exact_grad_g(&g, &strategy, &x).unwrap();
        let (l_h, _, _) = strategy.constants();
        let n = g.n() as f64;
        let bound = n * n * l_h;
        let stream = SeedStream::new(10, Purpose::Test);
        let draws = 100_000u64;
        let mut mean = vec![0.0; 5];
        let mut m2 = vec![0.0; 5];
        for i in 0..draws {
            let v = stochastic_grad_g(&g, &strategy, &x, &mut stream.rng(i)).unwrap();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(norm <= bound + 1e-9);
            for j in 0..5 {
                let delta = v[j] - mean[j];
                mean[j] += delta / (i + 1) as f64;
                m2[j] += delta * (v[j] - mean[j]);
            }
        }
        for j in 0..5 {
            let se = (m2[j] / (draws - 1) as f64).sqrt() / (draws as f64).sqrt();
            assert!(
                (mean[j] - exact[j]).abs() <= 4.0 * se.max(1e-12),
                "component {j}: mc {} exact {} se {se}",
                mean[j],
                exact[j]
            );
        }
    }

    #[test]
    fn estimates_are_worker_count_invariant() {
        let g = tiny_random();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 5, None, 1).unwrap();
        let stream = SeedStream::new(11, Purpose::Test);
        let x = [0.3, 0.1, 0.5, 0.2, 0.4];
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| estimate_g(&g, &strategy, &x, 20_000, &stream, 0).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| estimate_g(&g, &strategy, &x, 20_000, &stream, 0).unwrap());
        assert_eq!(one, many);
    }
}
