//! Strategy activation models h_v(x): a generic activation interface plus
//! the independent-activation specialization built from per-dimension
//! concave q functions.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::rng::{Purpose, SeedStream};

/// A concave, nondecreasing activation component q with q(0) = 0 mapping its
/// domain into [0, 1]. Implementations supply their own Lipschitz and
/// smoothness constants.
pub trait QFunction: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn deriv(&self, x: f64) -> f64;
    /// Upper bound on |q'| over the domain.
    fn lipschitz(&self) -> f64;
    /// Upper bound on |q''| over the domain.
    fn smoothness(&self) -> f64;
    /// Upper end of the domain (lower end is always 0).
    fn domain_upper(&self) -> f64;
    fn id(&self) -> &'static str;

    /// Domain-checked evaluation returning (value, derivative).
    fn eval_checked(&self, x: f64) -> Result<(f64, f64)> {
        if !x.is_finite() || x < 0.0 || x > self.domain_upper() {
            return Err(Error::Domain(format!(
                "q function '{}' evaluated at {} outside [0, {}]",
                self.id(),
                x,
                self.domain_upper()
            )));
        }
        Ok((self.value(x), self.deriv(x)))
    }
}

/// q(x) = 2x - x^2 on [0, 1]; q' = 2 - 2x, L_q = 2, |q''| = 2.
#[derive(Debug, Clone, Copy, Default)]
pub struct QQuadratic;

impl QFunction for QQuadratic {
    #[inline]
    fn value(&self, x: f64) -> f64 {
        2.0 * x - x * x
    }
    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        2.0 - 2.0 * x
    }
    fn lipschitz(&self) -> f64 {
        2.0
    }
    fn smoothness(&self) -> f64 {
        2.0
    }
    fn domain_upper(&self) -> f64 {
        1.0
    }
    fn id(&self) -> &'static str {
        "quadratic"
    }
}

/// Looks up a registered q function by id. Only the built-in quadratic is
/// shipped; custom activations can be passed directly to
/// [`IndependentActivation::new`].
pub fn q_by_id(id: &str) -> Result<Arc<dyn QFunction>> {
    match id {
        "quadratic" => Ok(Arc::new(QQuadratic)),
        other => Err(Error::Config(format!("unknown q function id '{other}'"))),
    }
}

/// Generic activation interface: per-node h_v(x) with sparse gradients and
/// global constants. Evaluation is unchecked; callers validate x against the
/// domain once per entry point.
pub trait Activation: Send + Sync {
    fn n(&self) -> usize;
    fn d(&self) -> usize;
    fn h(&self, v: usize, x: &[f64]) -> f64;
    /// Calls `sink(j, dh/dx_j)` for every dimension with a structurally
    /// nonzero partial at node `v`.
    fn h_grad(&self, v: usize, x: &[f64], sink: &mut dyn FnMut(usize, f64));
    /// (L_h, beta_h).
    fn constants(&self) -> (f64, f64);
    fn domain_upper(&self, j: usize) -> f64;
}

/// Independent strategy activation: h_v(x) = 1 - prod_j (1 - q_{v,j}(x_j))
/// over the dimensions listed for v.
pub struct IndependentActivation {
    n: usize,
    d: usize,
    node_dims: Vec<Vec<(u32, Arc<dyn QFunction>)>>,
    max_dims_per_node: usize,
    l_q: f64,
    beta_q: f64,
    domain_upper: Vec<f64>,
}

impl IndependentActivation {
    pub fn new(d: usize, node_dims: Vec<Vec<(u32, Arc<dyn QFunction>)>>) -> Result<Self> {
        let n = node_dims.len();
        let mut domain_upper = vec![f64::INFINITY; d];
        let mut l_q: f64 = 0.0;
        let mut beta_q: f64 = 0.0;
        let mut max_dims = 0usize;
        for dims in &node_dims {
            max_dims = max_dims.max(dims.len());
            let mut seen = std::collections::HashSet::new();
            for (j, q) in dims {
                if *j as usize >= d {
                    return Err(Error::Config(format!(
                        "node dimension {j} out of range for d = {d}"
                    )));
                }
                if !seen.insert(*j) {
                    return Err(Error::Config(format!("dimension {j} listed twice for a node")));
                }
                l_q = l_q.max(q.lipschitz());
                beta_q = beta_q.max(q.smoothness());
                let u = &mut domain_upper[*j as usize];
                *u = u.min(q.domain_upper());
            }
        }
        Ok(IndependentActivation {
            n,
            d,
            node_dims,
            max_dims_per_node: max_dims,
            l_q,
            beta_q,
            domain_upper,
        })
    }

    #[inline]
    pub fn node_dims(&self, v: usize) -> &[(u32, Arc<dyn QFunction>)] {
        &self.node_dims[v]
    }

    pub fn l_q(&self) -> f64 {
        self.l_q
    }

    pub fn max_dims_per_node(&self) -> usize {
        self.max_dims_per_node
    }
}

impl Activation for IndependentActivation {
    fn n(&self) -> usize {
        self.n
    }
    fn d(&self) -> usize {
        self.d
    }

    fn h(&self, v: usize, x: &[f64]) -> f64 {
        let mut survive = 1.0;
        for (j, q) in &self.node_dims[v] {
            survive *= 1.0 - q.value(x[*j as usize]);
        }
        1.0 - survive
    }

    fn h_grad(&self, v: usize, x: &[f64], sink: &mut dyn FnMut(usize, f64)) {
        let dims = &self.node_dims[v];
        // d h / d x_j = q'_{v,j}(x_j) * prod_{j' != j} (1 - q_{v,j'}(x_{j'})).
        for (idx, (j, q)) in dims.iter().enumerate() {
            let mut others = 1.0;
            for (idx2, (j2, q2)) in dims.iter().enumerate() {
                if idx2 != idx {
                    others *= 1.0 - q2.value(x[*j2 as usize]);
                }
            }
            sink(*j as usize, q.deriv(x[*j as usize]) * others);
        }
    }

    fn constants(&self) -> (f64, f64) {
        if self.max_dims_per_node <= 1 {
            // Exactly one active q per node: the gradient of h_v has a single
            // nonzero component bounded by L_q, so L_h = L_q and beta_h = beta_q.
            (self.l_q, self.beta_q)
        } else {
            let md = self.max_dims_per_node as f64;
            let l_h = self.l_q * md.sqrt();
            let beta_h = md * (self.beta_q + md * self.l_q * self.l_q);
            (l_h, beta_h)
        }
    }

    fn domain_upper(&self, j: usize) -> f64 {
        self.domain_upper[j]
    }
}

/// A strategy model wrapping an activation; keeps direct access to the
/// independent specialization when available (needed by the coverage upper
/// bound route).
#[derive(Clone)]
pub struct StrategyModel {
    activation: Arc<dyn Activation>,
    independent: Option<Arc<IndependentActivation>>,
}

impl std::fmt::Debug for StrategyModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StrategyModel")
            .field("n", &self.n())
            .field("d", &self.d())
            .field("independent", &self.is_independent())
            .finish()
    }
}

impl StrategyModel {
    pub fn independent(model: IndependentActivation) -> Self {
        let arc = Arc::new(model);
        StrategyModel {
            activation: arc.clone(),
            independent: Some(arc),
        }
    }

    pub fn custom(activation: Arc<dyn Activation>) -> Self {
        StrategyModel {
            activation,
            independent: None,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.activation.n()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.activation.d()
    }

    pub fn is_independent(&self) -> bool {
        self.independent.is_some()
    }

    pub fn independent_view(&self) -> Result<&IndependentActivation> {
        self.independent
            .as_deref()
            .ok_or(Error::UnsupportedModel)
    }

    /// Validates that x lies in the activation domain [0, upper]^d.
    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::Domain(format!(
                "x has {} dimensions, model expects {}",
                x.len(),
                self.d()
            )));
        }
        for (j, &xj) in x.iter().enumerate() {
            let u = self.activation.domain_upper(j);
            if !xj.is_finite() || xj < -1e-12 || xj > u + 1e-12 {
                return Err(Error::Domain(format!(
                    "x[{j}] = {xj} outside [0, {u}]"
                )));
            }
        }
        Ok(())
    }

    pub fn h_value(&self, v: usize, x: &[f64]) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.h_unchecked(v, x))
    }

    pub fn h_grad(&self, v: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_domain(x)?;
        let mut g = vec![0.0; self.d()];
        self.for_each_grad(v, x, &mut |j, val| g[j] += val);
        Ok(g)
    }

    #[inline]
    pub fn h_unchecked(&self, v: usize, x: &[f64]) -> f64 {
        self.activation.h(v, x)
    }

    #[inline]
    pub fn for_each_grad(&self, v: usize, x: &[f64], sink: &mut dyn FnMut(usize, f64)) {
        self.activation.h_grad(v, x, sink)
    }

    /// (L_h, beta_h, L_q when the model is independent).
    pub fn constants(&self) -> (f64, f64, Option<f64>) {
        let (l_h, beta_h) = self.activation.constants();
        (l_h, beta_h, self.independent.as_ref().map(|m| m.l_q()))
    }

    pub fn domain_upper_vec(&self) -> Vec<f64> {
        (0..self.d()).map(|j| self.activation.domain_upper(j)).collect()
    }

    /// h_v(x) for every node, in one pass.
    pub fn h_all(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|v| self.h_unchecked(v, x)).collect()
    }
}

/// How nodes map onto strategy dimensions.
#[derive(Debug, Clone)]
pub enum Scenario {
    /// d = n, node v is driven by dimension v alone.
    Personalized,
    /// Each node belongs to exactly one of d segments.
    Segment { assignment: Vec<u32>, d: usize },
}

impl Scenario {
    pub fn segment_sizes(&self) -> Option<Vec<usize>> {
        match self {
            Scenario::Personalized => None,
            Scenario::Segment { assignment, d } => {
                let mut sizes = vec![0usize; *d];
                for &s in assignment {
                    sizes[s as usize] += 1;
                }
                Some(sizes)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Personalized,
    Segment,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "personalized" => Ok(ScenarioKind::Personalized),
            "segment" => Ok(ScenarioKind::Segment),
            other => Err(Error::Config(format!("unknown scenario kind '{other}'"))),
        }
    }
}

const SEGMENT_RESAMPLE_ATTEMPTS: usize = 1000;

/// Builds the paper's marketing scenarios over quadratic activations:
/// personalized (d = n, one discount per node) or segment (nodes assigned
/// uniformly to d segments, resampled wholesale until every segment size
/// falls within `size_bounds`).
pub fn build_scenario(
    graph: &DirectedGraph,
    kind: ScenarioKind,
    d: usize,
    size_bounds: Option<(usize, usize)>,
    seed: u64,
) -> Result<(StrategyModel, Scenario)> {
    let n = graph.n();
    let q: Arc<dyn QFunction> = Arc::new(QQuadratic);
    match kind {
        ScenarioKind::Personalized => {
            let node_dims = (0..n)
                .map(|v| vec![(v as u32, q.clone())])
                .collect();
            let model = IndependentActivation::new(n, node_dims)?;
            Ok((StrategyModel::independent(model), Scenario::Personalized))
        }
        ScenarioKind::Segment => {
            if d == 0 || n < d {
                return Err(Error::Config(format!(
                    "segment scenario needs 1 <= d <= n (d = {d}, n = {n})"
                )));
            }
            let stream = SeedStream::new(seed, Purpose::SegmentAssign);
            let mut assignment = vec![0u32; n];
            let mut ok = false;
            for attempt in 0..SEGMENT_RESAMPLE_ATTEMPTS {
                let mut rng = stream.rng(attempt as u64);
                for a in assignment.iter_mut() {
                    *a = rng.random_range(0..d as u32);
                }
                match size_bounds {
                    None => {
                        ok = true;
                        break;
                    }
                    Some((lo, hi)) => {
                        let mut sizes = vec![0usize; d];
                        for &a in &assignment {
                            sizes[a as usize] += 1;
                        }
                        if sizes.iter().all(|&s| s >= lo && s <= hi) {
                            ok = true;
                            break;
                        }
                    }
                }
            }
            if !ok {
                return Err(Error::Config(format!(
                    "segment size bounds {size_bounds:?} not met after {SEGMENT_RESAMPLE_ATTEMPTS} resample attempts (n = {n}, d = {d})"
                )));
            }
            let node_dims = assignment
                .iter()
                .map(|&s| vec![(s, q.clone())])
                .collect();
            let model = IndependentActivation::new(d, node_dims)?;
            Ok((
                StrategyModel::independent(model),
                Scenario::Segment { assignment, d },
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, SyntheticKind};

    fn fd_grad(model: &StrategyModel, v: usize, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|j| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                (model.h_unchecked(v, &xp) - model.h_unchecked(v, &xm)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn quadratic_values_and_derivatives() {
        let q = QQuadratic;
        assert_eq!(q.value(0.0), 0.0);
        assert_eq!(q.deriv(0.0), 2.0);
        assert_eq!(q.value(1.0), 1.0);
        assert_eq!(q.deriv(1.0), 0.0);
        assert_eq!(q.value(0.5), 0.75);
        assert_eq!(q.deriv(0.5), 1.0);
        assert!(q.eval_checked(1.5).is_err());
        assert!(q.eval_checked(-0.1).is_err());
    }

    #[test]
    fn single_dim_h_matches_q() {
        let q: Arc<dyn QFunction> = Arc::new(QQuadratic);
        let model = IndependentActivation::new(2, vec![vec![(0, q.clone())], vec![(1, q)]]).unwrap();
        let model = StrategyModel::independent(model);
        let x = [0.5, 0.0];
        assert!((model.h_value(0, &x).unwrap() - 0.75).abs() < 1e-15);
        let g = model.h_grad(0, &x).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
        // At x = 0 the gradient component is q'(0) = 2.
        let g0 = model.h_grad(1, &[0.0, 0.0]).unwrap();
        assert_eq!(g0[1], 2.0);
    }

    #[test]
    fn two_dims_combine_independently() {
        let q: Arc<dyn QFunction> = Arc::new(QQuadratic);
        let model =
            IndependentActivation::new(2, vec![vec![(0, q.clone()), (1, q)]]).unwrap();
        let model = StrategyModel::independent(model);
        let x = [0.5, 0.5];
        let h = model.h_value(0, &x).unwrap();
        assert!((h - 0.9375).abs() < 1e-15);
        let g = model.h_grad(0, &x).unwrap();
        assert!((g[0] - 0.25).abs() < 1e-15);
        assert!((g[1] - 0.25).abs() < 1e-15);
        let fd = fd_grad(&model, 0, &x);
        for j in 0..2 {
            assert!((g[j] - fd[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn scenario_constants() {
        let g = generate_synthetic(SyntheticKind::ErdosRenyi, 12, 0.2, 1).unwrap();
        let (model, _) = build_scenario(&g, ScenarioKind::Personalized, 12, None, 1).unwrap();
        let (l_h, beta_h, l_q) = model.constants();
        assert_eq!((l_h, beta_h, l_q), (2.0, 2.0, Some(2.0)));
    }

    #[test]
    fn personalized_depends_only_on_own_dim() {
        let g = generate_synthetic(SyntheticKind::ErdosRenyi, 5, 0.3, 2).unwrap();
        let (model, _) = build_scenario(&g, ScenarioKind::Personalized, 5, None, 2).unwrap();
        assert_eq!(model.d(), 5);
        let mut x = vec![0.0; 5];
        x[3] = 0.7;
        assert_eq!(model.h_value(0, &x).unwrap(), 0.0);
        assert!(model.h_value(3, &x).unwrap() > 0.0);
    }

    #[test]
    fn single_segment_covers_all_nodes() {
        let g = generate_synthetic(SyntheticKind::ErdosRenyi, 6, 0.3, 2).unwrap();
        let (model, scenario) = build_scenario(&g, ScenarioKind::Segment, 1, None, 7).unwrap();
        assert_eq!(scenario.segment_sizes().unwrap(), vec![6]);
        let x = [0.5];
        for v in 0..6 {
            assert!((model.h_value(v, &x).unwrap() - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn segment_sizes_respect_bounds_and_are_deterministic() {
        let g = generate_synthetic(SyntheticKind::ErdosRenyi, 600, 0.005, 3).unwrap();
        let (_, s1) = build_scenario(&g, ScenarioKind::Segment, 10, Some((50, 80)), 13).unwrap();
        let (_, s2) = build_scenario(&g, ScenarioKind::Segment, 10, Some((50, 80)), 13).unwrap();
        let sizes = s1.segment_sizes().unwrap();
        assert!(sizes.iter().all(|&s| (50..=80).contains(&s)), "{sizes:?}");
        match (s1, s2) {
            (
                Scenario::Segment { assignment: a1, .. },
                Scenario::Segment { assignment: a2, .. },
            ) => assert_eq!(a1, a2),
            _ => unreachable!(),
        }
    }

    #[test]
    fn infeasible_bounds_error_out() {
        let g = generate_synthetic(SyntheticKind::ErdosRenyi, 10, 0.2, 3).unwrap();
        let err = build_scenario(&g, ScenarioKind::Segment, 2, Some((500, 600)), 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn monotone_and_dr_submodular_on_random_points() {
        let g = generate_synthetic(SyntheticKind::ErdosRenyi, 8, 0.3, 5).unwrap();
        let (model, _) = build_scenario(&g, ScenarioKind::Personalized, 8, None, 5).unwrap();
        let stream = SeedStream::new(99, Purpose::Test);
        for trial in 0..50u64 {
            let mut rng = stream.rng(trial);
            let x: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 0.5).collect();
            let y: Vec<f64> = x.iter().map(|&v| v + rng.random::<f64>() * 0.4).collect();
            let j = rng.random_range(0..8);
            let delta = (1.0 - y[j]) * rng.random::<f64>();
            for v in 0..8 {
                let hx = model.h_unchecked(v, &x);
                let hy = model.h_unchecked(v, &y);
                assert!(hx <= hy + 1e-12);
                let mut xp = x.clone();
                xp[j] += delta;
                let mut yp = y.clone();
                yp[j] += delta;
                let inc_x = model.h_unchecked(v, &xp) - hx;
                let inc_y = model.h_unchecked(v, &yp) - hy;
                assert!(inc_x >= inc_y - 1e-9);
            }
        }
    }
}
