//! RR-set-backed objectives and their (sub)gradients: the estimator
//! hat_g, its exact gradient, the concave coverage upper bound bar_g with
//! its subgradient, and combinations with the budget-saving term s.

use rayon::prelude::*;

use crate::budget::BudgetModel;
use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::rrset::RRCollection;
use crate::strategy::StrategyModel;

pub use crate::diffusion::stochastic_grad_g;

const SET_CHUNK: usize = 4096;

/// Flattened per-node sparse vectors rebuilt once per objective call, so the
/// per-RR-set loops touch plain arrays only.
struct NodeTable {
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

impl NodeTable {
    #[inline]
    fn row(&self, v: usize) -> &[(u32, f64)] {
        &self.entries[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Borrows a graph, strategy, budget, and RR collection; evaluation is pure
/// in x and parallel over RR sets with a fixed chunked accumulation order.
pub struct ObjectiveBundle<'a> {
    graph: &'a DirectedGraph,
    strategy: &'a StrategyModel,
    budget: &'a BudgetModel,
    collection: &'a RRCollection,
    nu1: f64,
    nu2: f64,
    nu3: f64,
}

impl<'a> ObjectiveBundle<'a> {
    pub fn new(
        graph: &'a DirectedGraph,
        strategy: &'a StrategyModel,
        budget: &'a BudgetModel,
        collection: &'a RRCollection,
    ) -> Result<Self> {
        if strategy.n() != graph.n() {
            return Err(Error::Config(format!(
                "strategy covers {} nodes, graph has {}",
                strategy.n(),
                graph.n()
            )));
        }
        if budget.d() != strategy.d() {
            return Err(Error::Config(format!(
                "budget dimension {} does not match strategy dimension {}",
                budget.d(),
                strategy.d()
            )));
        }
        if collection.n() != graph.n() || collection.theta() == 0 {
            return Err(Error::Config(
                "objective needs a non-empty RR collection over the same graph".into(),
            ));
        }
        let (nu1, nu2, nu3) = collection.moments();
        Ok(ObjectiveBundle {
            graph,
            strategy,
            budget,
            collection,
            nu1,
            nu2,
            nu3,
        })
    }

    pub fn graph(&self) -> &DirectedGraph {
        self.graph
    }
    pub fn strategy(&self) -> &StrategyModel {
        self.strategy
    }
    pub fn budget(&self) -> &BudgetModel {
        self.budget
    }
    pub fn collection(&self) -> &RRCollection {
        self.collection
    }
    pub fn moments(&self) -> (f64, f64, f64) {
        (self.nu1, self.nu2, self.nu3)
    }

    /// Smoothness of hat_g: nu1 n beta_h + nu2 n L_h^2.
    pub fn hat_smoothness(&self) -> f64 {
        let (l_h, beta_h, _) = self.strategy.constants();
        let n = self.graph.n() as f64;
        self.nu1 * n * beta_h + self.nu2 * n * l_h * l_h
    }

    /// Lipschitz constant of hat_g: nu1 n L_h.
    pub fn hat_lipschitz(&self) -> f64 {
        let (l_h, _, _) = self.strategy.constants();
        self.nu1 * self.graph.n() as f64 * l_h
    }

    /// Lipschitz constant of bar_g + s: nu1 n sqrt(d) L_q + lambda L_c.
    pub fn bar_lipschitz(&self) -> Result<f64> {
        let view = self.strategy.independent_view()?;
        let n = self.graph.n() as f64;
        let d = self.strategy.d() as f64;
        Ok(self.nu1 * n * d.sqrt() * view.l_q() + self.budget.lambda * self.budget.l_c())
    }

    pub fn s(&self, x: &[f64]) -> f64 {
        self.budget.s_value(x)
    }

    fn hat_tables(&self, x: &[f64]) -> (Vec<f64>, NodeTable) {
        let n = self.graph.n();
        let h_all = self.strategy.h_all(x);
        let mut offsets = Vec::with_capacity(n + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for v in 0..n {
            self.strategy.for_each_grad(v, x, &mut |j, dh| {
                entries.push((j as u32, dh));
            });
            offsets.push(entries.len());
        }
        (h_all, NodeTable { offsets, entries })
    }

    fn chunks(&self) -> Vec<(usize, usize)> {
        let theta = self.collection.theta();
        (0..theta)
            .step_by(SET_CHUNK)
            .map(|s| (s, (s + SET_CHUNK).min(theta)))
            .collect()
    }

    /// hat_g(x) = (n / theta) sum_R (1 - prod_{v in R} (1 - h_v(x))).
    pub fn hat_g(&self, x: &[f64]) -> f64 {
        let h_all = self.strategy.h_all(x);
        let partials: Vec<f64> = self
            .chunks()
            .par_iter()
            .map(|&(start, end)| {
                let mut acc = 0.0;
                for i in start..end {
                    let mut survive = 1.0;
                    for &v in self.collection.set(i) {
                        survive *= 1.0 - h_all[v as usize];
                    }
                    acc += 1.0 - survive;
                }
                acc
            })
            .collect();
        let sum: f64 = partials.iter().sum();
        self.graph.n() as f64 / self.collection.theta() as f64 * sum
    }

    /// Exact gradient of hat_g. Leave-one-out products use the product of
    /// nonzero factors plus a zero count, so factors equal to zero never hit
    /// a division.
    pub fn grad_hat_g(&self, x: &[f64]) -> Vec<f64> {
        let (h_all, grads) = self.hat_tables(x);
        let d = self.strategy.d();
        let partials: Vec<Vec<f64>> = self
            .chunks()
            .par_iter()
            .map(|&(start, end)| {
                let mut acc = vec![0.0; d];
                for i in start..end {
                    let set = self.collection.set(i);
                    let mut zero_count = 0u32;
                    let mut prod_nonzero = 1.0;
                    for &v in set {
                        let f = 1.0 - h_all[v as usize];
                        if f == 0.0 {
                            zero_count += 1;
                        } else {
                            prod_nonzero *= f;
                        }
                    }
                    if zero_count >= 2 {
                        continue;
                    }
                    for &v in set {
                        let f = 1.0 - h_all[v as usize];
                        let loo = if zero_count == 0 {
                            prod_nonzero / f
                        } else if f == 0.0 {
                            prod_nonzero
                        } else {
                            0.0
                        };
                        if loo == 0.0 {
                            continue;
                        }
                        for &(j, dh) in grads.row(v as usize) {
                            acc[j as usize] += loo * dh;
                        }
                    }
                }
                acc
            })
            .collect();
        let scale = self.graph.n() as f64 / self.collection.theta() as f64;
        let mut grad = vec![0.0; d];
        for part in partials {
            for (g, p) in grad.iter_mut().zip(part) {
                *g += p;
            }
        }
        for g in grad.iter_mut() {
            *g *= scale;
        }
        grad
    }

    fn bar_tables(&self, x: &[f64]) -> Result<(Vec<f64>, NodeTable)> {
        let view = self.strategy.independent_view()?;
        let n = self.graph.n();
        let mut qsum = vec![0.0; n];
        let mut offsets = Vec::with_capacity(n + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for v in 0..n {
            for (j, q) in view.node_dims(v) {
                qsum[v] += q.value(x[*j as usize]);
                entries.push((*j, q.deriv(x[*j as usize])));
            }
            offsets.push(entries.len());
        }
        Ok((qsum, NodeTable { offsets, entries }))
    }

    /// bar_g(x) = (n / theta) sum_R min(1, sum_{v in R, j} q_{v,j}(x_j)).
    /// Independent activation only.
    pub fn bar_g(&self, x: &[f64]) -> Result<f64> {
        let (qsum, _) = self.bar_tables(x)?;
        let partials: Vec<f64> = self
            .chunks()
            .par_iter()
            .map(|&(start, end)| {
                let mut acc = 0.0;
                for i in start..end {
                    let m: f64 = self
                        .collection
                        .set(i)
                        .iter()
                        .map(|&v| qsum[v as usize])
                        .sum();
                    acc += m.min(1.0);
                }
                acc
            })
            .collect();
        let sum: f64 = partials.iter().sum();
        Ok(self.graph.n() as f64 / self.collection.theta() as f64 * sum)
    }

    /// A subgradient of bar_g: per RR set, zero once the coverage sum
    /// saturates, otherwise the sum of q derivatives.
    pub fn subgrad_bar_g(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (qsum, qgrads) = self.bar_tables(x)?;
        let d = self.strategy.d();
        let partials: Vec<Vec<f64>> = self
            .chunks()
            .par_iter()
            .map(|&(start, end)| {
                let mut acc = vec![0.0; d];
                for i in start..end {
                    let set = self.collection.set(i);
                    let m: f64 = set.iter().map(|&v| qsum[v as usize]).sum();
                    if m >= 1.0 {
                        continue;
                    }
                    for &v in set {
                        for &(j, qd) in qgrads.row(v as usize) {
                            acc[j as usize] += qd;
                        }
                    }
                }
                acc
            })
            .collect();
        let scale = self.graph.n() as f64 / self.collection.theta() as f64;
        let mut grad = vec![0.0; d];
        for part in partials {
            for (g, p) in grad.iter_mut().zip(part) {
                *g += p;
            }
        }
        for g in grad.iter_mut() {
            *g *= scale;
        }
        Ok(grad)
    }

    pub fn combined_hat(&self, x: &[f64]) -> f64 {
        self.hat_g(x) + self.s(x)
    }

    pub fn combined_bar(&self, x: &[f64]) -> Result<f64> {
        Ok(self.bar_g(x)? + self.s(x))
    }

    /// (estimator part, budget-saving part) of hat_g + s.
    pub fn decompose_hat(&self, x: &[f64]) -> (f64, f64) {
        (self.hat_g(x), self.s(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::CostKind;
    use crate::graph::{generate_synthetic, load_edge_list, SyntheticKind, WeightMode};
    use crate::rng::{Purpose, SeedStream};
    use crate::strategy::{build_scenario, ScenarioKind};
    use rand::Rng;

    fn edgeless(n: usize) -> DirectedGraph {
        load_edge_list(format!("{n} 0\n").as_bytes(), WeightMode::Explicit).unwrap()
    }

    fn single_set_collection(n: usize, nodes: &[u32]) -> RRCollection {
        let mut c = RRCollection::empty(n);
        crate::rrset::test_support::push_set(&mut c, nodes);
        c
    }

    #[test]
    fn hat_g_single_set_example() {
        let g = edgeless(4);
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 4, None, 1).unwrap();
        let budget =
            BudgetModel::new(CostKind::OneNorm, 1.0, 0.0, strategy.domain_upper_vec()).unwrap();
        let c = single_set_collection(4, &[2]);
        let bundle = ObjectiveBundle::new(&g, &strategy, &budget, &c).unwrap();
        // h_2(x) = 0.5 at x_2 = 1 - sqrt(0.5).
        let mut x = vec![0.0; 4];
        x[2] = 1.0 - 0.5f64.sqrt();
        let v = bundle.hat_g(&x);
        assert!((v - 2.0).abs() < 1e-12, "{v}");
        assert_eq!(bundle.hat_g(&vec![0.0; 4]), 0.0);
    }

    fn random_bundle_inputs(
        seed: u64,
    ) -> (DirectedGraph, StrategyModel, BudgetModel, RRCollection) {
        let g = generate_synthetic(SyntheticKind::ErdosRenyi, 12, 0.15, seed).unwrap();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 12, None, seed).unwrap();
        let budget =
            BudgetModel::new(CostKind::OneNorm, 2.0, 1.5, strategy.domain_upper_vec()).unwrap();
        let stream = SeedStream::new(seed, Purpose::Test);
        let c = RRCollection::generate(&g, 200, &stream, 0);
        (g, strategy, budget, c)
    }

    #[test]
    fn grad_hat_matches_finite_differences() {
        let (g, strategy, budget, c) = random_bundle_inputs(21);
        let bundle = ObjectiveBundle::new(&g, &strategy, &budget, &c).unwrap();
        let stream = SeedStream::new(22, Purpose::Test);
        for trial in 0..10u64 {
            let mut rng = stream.rng(trial);
            let x: Vec<f64> = (0..12).map(|_| 0.05 + rng.random::<f64>() * 0.8).collect();
            let grad = bundle.grad_hat_g(&x);
            let h = 1e-5;
            for j in 0..12 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (bundle.hat_g(&xp) - bundle.hat_g(&xm)) / (2.0 * h);
                let denom = grad[j].abs().max(1.0);
                assert!(
                    (grad[j] - fd).abs() / denom <= 1e-6,
                    "j={j} grad {} fd {fd}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn grad_handles_saturated_nodes() {
        // One node at h = 1 in every set: only its own term survives.
        let g = edgeless(3);
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 3, None, 1).unwrap();
        let budget =
            BudgetModel::new(CostKind::OneNorm, 3.0, 0.0, strategy.domain_upper_vec()).unwrap();
        let mut c = RRCollection::empty(3);
        crate::rrset::test_support::push_set(&mut c, &[0, 1]);
        crate::rrset::test_support::push_set(&mut c, &[0, 2]);
        let bundle = ObjectiveBundle::new(&g, &strategy, &budget, &c).unwrap();
        // x_0 = 1 makes h_0 = 1 (factor zero), q'(1) = 0.
        let x = [1.0, 0.3, 0.0];
        let grad = bundle.grad_hat_g(&x);
        // Gradient flows only through node 0's own derivative, which is 0 at x=1.
        assert_eq!(grad[0], 0.0);
        assert_eq!(grad[1], 0.0);
        assert_eq!(grad[2], 0.0);
        // Value saturates: every set contains node 0.
        assert!((bundle.hat_g(&x) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bar_g_bounds_and_subgradient() {
        let (g, strategy, budget, c) = random_bundle_inputs(33);
        let bundle = ObjectiveBundle::new(&g, &strategy, &budget, &c).unwrap();
        let stream = SeedStream::new(34, Purpose::Test);
        let ratio = 1.0 - 1.0 / std::f64::consts::E;
        for trial in 0..100u64 {
            let mut rng = stream.rng(trial);
            let x: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
            let hat = bundle.hat_g(&x);
            let bar = bundle.bar_g(&x).unwrap();
            assert!(hat <= bar + 1e-9, "hat {hat} bar {bar}");
            assert!(ratio * bar <= hat + 1e-9, "hat {hat} bar {bar}");
        }
        // Subgradient inequality of the concave bar_g.
        for trial in 0..100u64 {
            let mut rng = stream.rng(1000 + trial);
            let x: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
            let sg = bundle.subgrad_bar_g(&x).unwrap();
            let lhs = bundle.bar_g(&y).unwrap();
            let rhs = bundle.bar_g(&x).unwrap()
                + sg.iter()
                    .zip(x.iter().zip(&y))
                    .map(|(s, (xi, yi))| s * (yi - xi))
                    .sum::<f64>();
            assert!(lhs <= rhs + 1e-9, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn bar_g_zero_and_saturation() {
        let g = edgeless(4);
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 4, None, 1).unwrap();
        let budget =
            BudgetModel::new(CostKind::OneNorm, 4.0, 0.0, strategy.domain_upper_vec()).unwrap();
        let mut c = RRCollection::empty(4);
        crate::rrset::test_support::push_set(&mut c, &[0, 1]);
        let bundle = ObjectiveBundle::new(&g, &strategy, &budget, &c).unwrap();
        assert_eq!(bundle.bar_g(&vec![0.0; 4]).unwrap(), 0.0);
        // q(1) + q(1) = 2 >= 1 saturates the set: bar = n.
        let x = [1.0, 1.0, 0.0, 0.0];
        assert_eq!(bundle.bar_g(&x).unwrap(), 4.0);
        assert_eq!(bundle.subgrad_bar_g(&x).unwrap(), vec![0.0; 4]);
        // At x = 0 the subgradient counts set membership times q'(0) = 2.
        let sg = bundle.subgrad_bar_g(&vec![0.0; 4]).unwrap();
        assert_eq!(sg[0], 4.0 / 1.0 * 2.0);
        assert_eq!(sg[1], 8.0);
        assert_eq!(sg[2], 0.0);
    }

    #[test]
    fn combined_decomposition_and_lambda_zero() {
        let (g, strategy, budget, c) = random_bundle_inputs(44);
        let bundle = ObjectiveBundle::new(&g, &strategy, &budget, &c).unwrap();
        let x = vec![0.1; 12];
        let (g_part, s_part) = bundle.decompose_hat(&x);
        assert!((g_part + s_part - bundle.combined_hat(&x)).abs() < 1e-12);
        let zero = vec![0.0; 12];
        assert!((bundle.combined_hat(&zero) - budget.lambda * budget.k).abs() < 1e-12);
        let b0 = BudgetModel::new(CostKind::OneNorm, 2.0, 0.0, strategy.domain_upper_vec()).unwrap();
        let bundle0 = ObjectiveBundle::new(&g, &strategy, &b0, &c).unwrap();
        assert_eq!(bundle0.combined_hat(&x), bundle0.hat_g(&x));
    }

    #[test]
    fn monotone_dr_submodular_and_lipschitz() {
        let (g, strategy, budget, c) = random_bundle_inputs(55);
        let bundle = ObjectiveBundle::new(&g, &strategy, &budget, &c).unwrap();
        let stream = SeedStream::new(56, Purpose::Test);
        let lip = bundle.hat_lipschitz();
        for trial in 0..60u64 {
            let mut rng = stream.rng(trial);
            let x: Vec<f64> = (0..12).map(|_| rng.random::<f64>() * 0.5).collect();
            let y: Vec<f64> = x.iter().map(|&v| v + rng.random::<f64>() * 0.4).collect();
            assert!(bundle.hat_g(&x) <= bundle.hat_g(&y) + 1e-12);
            let grad = bundle.grad_hat_g(&x);
            assert!(grad.iter().all(|&v| v >= 0.0));
            let j = rng.random_range(0..12);
            let delta = (1.0 - y[j]) * rng.random::<f64>();
            let mut xp = x.clone();
            xp[j] += delta;
            let mut yp = y.clone();
            yp[j] += delta;
            let inc_x = bundle.hat_g(&xp) - bundle.hat_g(&x);
            let inc_y = bundle.hat_g(&yp) - bundle.hat_g(&y);
            assert!(inc_x >= inc_y - 1e-9);
            let dist = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist > 1e-9 {
                let diff = (bundle.hat_g(&x) - bundle.hat_g(&y)).abs();
                assert!(diff / dist <= lip + 1e-6);
            }
        }
    }

    #[test]
    fn bar_route_requires_independent_model() {
        use crate::strategy::Activation;
        struct Opaque {
            n: usize,
        }
        impl Activation for Opaque {
            fn n(&self) -> usize {
                self.n
            }
            fn d(&self) -> usize {
                self.n
            }
            fn h(&self, _v: usize, x: &[f64]) -> f64 {
                x[0] * 0.5
            }
            fn h_grad(&self, _v: usize, _x: &[f64], sink: &mut dyn FnMut(usize, f64)) {
                sink(0, 0.5);
            }
            fn constants(&self) -> (f64, f64) {
                (0.5, 0.0)
            }
            fn domain_upper(&self, _j: usize) -> f64 {
                1.0
            }
        }
        let g = edgeless(3);
        let strategy = StrategyModel::custom(std::sync::Arc::new(Opaque { n: 3 }));
        let budget =
            BudgetModel::new(CostKind::OneNorm, 1.0, 1.0, strategy.domain_upper_vec()).unwrap();
        let mut c = RRCollection::empty(3);
        crate::rrset::test_support::push_set(&mut c, &[0]);
        let bundle = ObjectiveBundle::new(&g, &strategy, &budget, &c).unwrap();
        assert!(matches!(
            bundle.bar_g(&[0.2, 0.0, 0.0]),
            Err(Error::UnsupportedModel)
        ));
    }

    #[test]
    fn unbiased_against_exact_g() {
        let g = load_edge_list(
            "5 6\n0 1 0.6\n1 2 0.5\n2 0 0.3\n1 3 0.7\n3 4 0.4\n0 4 0.2\n".as_bytes(),
            WeightMode::Explicit,
        )
        .unwrap();
        let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 5, None, 1).unwrap();
        let budget =
            BudgetModel::new(CostKind::OneNorm, 2.0, 0.0, strategy.domain_upper_vec()).unwrap();
        let x = [0.3, 0.1, 0.5, 0.2, 0.4];
        let exact = crate::diffusion::exact_g(&g, &strategy, &x).unwrap();
        let stream = SeedStream::new(66, Purpose::Test);
        // Average hat_g over many independent collections.
        let reps = 400u64;
        let per = 250u64;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for r in 0..reps {
            let c = RRCollection::generate(&g, per, &stream, r * per);
            let bundle = ObjectiveBundle::new(&g, &strategy, &budget, &c).unwrap();
            let v = bundle.hat_g(&x);
            let delta = v - mean;
            mean += delta / (r + 1) as f64;
            m2 += delta * (v - mean);
        }
        let se = (m2 / (reps - 1) as f64).sqrt() / (reps as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 4.0 * se,
            "mean {mean} exact {exact} se {se}"
        );
    }
}
