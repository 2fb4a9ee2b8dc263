//! Cost functions, the budget-saving term s(x) = lambda (k - c(x)), the
//! feasible region P = {0 <= x <= upper, c(x) <= k}, proximal operators of
//! -eta s over P, and Euclidean projection onto P.

use crate::error::{Error, Result};

pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    OneNorm,
    TwoNorm,
}

impl std::str::FromStr for CostKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_norm" | "l1" => Ok(CostKind::OneNorm),
            "two_norm" | "l2" => Ok(CostKind::TwoNorm),
            other => Err(Error::Config(format!("unknown cost kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BudgetModel {
    pub cost_kind: CostKind,
    pub k: f64,
    pub lambda: f64,
    d: usize,
    upper: Vec<f64>,
    has_caps: bool,
}

impl BudgetModel {
    pub fn new(cost_kind: CostKind, k: f64, lambda: f64, upper: Vec<f64>) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::Config(format!("budget k must be > 0, got {k}")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        if upper.is_empty() {
            return Err(Error::Config("budget model needs d >= 1".into()));
        }
        let has_caps = upper.iter().any(|u| u.is_finite());
        Ok(BudgetModel {
            cost_kind,
            k,
            lambda,
            d: upper.len(),
            upper,
            has_caps,
        })
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn cost(&self, x: &[f64]) -> f64 {
        match self.cost_kind {
            CostKind::OneNorm => x.iter().sum(),
            CostKind::TwoNorm => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// A subgradient of the cost (the gradient wherever c is differentiable;
    /// 0 at the origin for the 2-norm).
    pub fn cost_subgrad(&self, x: &[f64]) -> Vec<f64> {
        match self.cost_kind {
            CostKind::OneNorm => vec![1.0; self.d],
            CostKind::TwoNorm => {
                let norm = self.cost(x);
                if norm == 0.0 {
                    vec![0.0; self.d]
                } else {
                    x.iter().map(|v| v / norm).collect()
                }
            }
        }
    }

    /// 2-norm Lipschitz constant of the cost: sqrt(d) for the 1-norm, 1 for
    /// the 2-norm.
    pub fn l_c(&self) -> f64 {
        match self.cost_kind {
            CostKind::OneNorm => (self.d as f64).sqrt(),
            CostKind::TwoNorm => 1.0,
        }
    }

    pub fn s_value(&self, x: &[f64]) -> f64 {
        self.lambda * (self.k - self.cost(x))
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.d
            && x.iter()
                .zip(&self.upper)
                .all(|(&v, &u)| v >= -tol && v <= u + tol)
            && self.cost(x) <= self.k + tol
    }

    /// Upper bound on the diameter of P. Both costs bound ||x||_2 by k on
    /// x >= 0, giving sqrt(2) k; finite box caps tighten it to ||upper||_2.
    pub fn diameter(&self) -> f64 {
        let from_budget = std::f64::consts::SQRT_2 * self.k;
        if self.upper.iter().all(|u| u.is_finite()) {
            let box_diag = self.upper.iter().map(|u| u * u).sum::<f64>().sqrt();
            from_budget.min(box_diag)
        } else {
            from_budget
        }
    }

    /// prox_{-eta s}(z) = argmin_{y in P} eta lambda c(y) + 1/2 ||z - y||^2.
    pub fn prox(&self, z: &[f64], eta: f64) -> Vec<f64> {
        let shrink = eta * self.lambda;
        match self.cost_kind {
            CostKind::OneNorm => self.prox_one_norm(z, shrink),
            CostKind::TwoNorm => self.prox_two_norm(z, shrink),
        }
    }

    /// Euclidean projection onto P.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        match self.cost_kind {
            CostKind::OneNorm => self.prox_one_norm(z, 0.0),
            CostKind::TwoNorm => self.prox_two_norm(z, 0.0),
        }
    }

    /// Soft-threshold by `a`, clamp to the box, and waterfill against the
    /// budget: y_i = clamp(z_i - a - mu, 0, upper_i) with the smallest mu >= 0
    /// giving sum(y) <= k. The linear cost folds into a shifted projection, so
    /// this is the exact minimizer.
    fn prox_one_norm(&self, z: &[f64], a: f64) -> Vec<f64> {
        let free: Vec<f64> = z
            .iter()
            .zip(&self.upper)
            .map(|(&zi, &u)| (zi - a).clamp(0.0, u))
            .collect();
        let total: f64 = free.iter().sum();
        if total <= self.k {
            return free;
        }
        let mu = waterfill_mu(z, a, &self.upper, self.k);
        z.iter()
            .zip(&self.upper)
            .map(|(&zi, &u)| (zi - a - mu).clamp(0.0, u))
            .collect()
    }

    fn prox_two_norm(&self, z: &[f64], a: f64) -> Vec<f64> {
        if !self.has_caps {
            // Negative components clamp to zero; the rest of the minimizer
            // lies on the ray through the clipped point.
            let plus: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            return shrink_to_ball(&plus, a, self.k);
        }
        // With finite caps the ray argument fails; split the objective into
        // f = a||y|| + ball indicator and g = box indicator and run Dykstra's
        // algorithm, which converges to the exact prox of f + g.
        let mut x: Vec<f64> = z.to_vec();
        let mut p = vec![0.0; self.d];
        let mut q = vec![0.0; self.d];
        let mut y = vec![0.0; self.d];
        for _ in 0..DYKSTRA_MAX_SWEEPS {
            let w: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
            y = shrink_to_ball(&w, a, self.k);
            for i in 0..self.d {
                p[i] = w[i] - y[i];
            }
            let v: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
            let mut max_delta: f64 = 0.0;
            for i in 0..self.d {
                let xi = v[i].clamp(0.0, self.upper[i]);
                max_delta = max_delta.max((xi - x[i]).abs()).max((xi - y[i]).abs());
                q[i] = v[i] - xi;
                x[i] = xi;
            }
            if max_delta <= DYKSTRA_TOL {
                break;
            }
        }
        y.iter()
            .zip(&self.upper)
            .map(|(&v, &u)| v.clamp(0.0, u))
            .collect()
    }
}

const DYKSTRA_MAX_SWEEPS: usize = 5000;
const DYKSTRA_TOL: f64 = 1e-13;

/// argmin_{||y|| <= k, y on the ray of w} a ||y|| + 1/2 ||w - y||^2,
/// i.e. t * w / ||w|| with t = clamp(||w|| - a, 0, k).
fn shrink_to_ball(w: &[f64], a: f64, k: f64) -> Vec<f64> {
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; w.len()];
    }
    let t = (norm - a).max(0.0).min(k);
    let scale = t / norm;
    w.iter().map(|v| v * scale).collect()
}

/// Finds mu > 0 with sum_i clamp(z_i - a - mu, 0, u_i) = k by sorting the
/// breakpoints of the piecewise-linear sum and scanning. Assumes the sum at
/// mu = 0 exceeds k.
fn waterfill_mu(z: &[f64], a: f64, upper: &[f64], k: f64) -> f64 {
    // Events: at mu = z_i - a - u_i coordinate i leaves its cap (slope -1
    // starts); at mu = z_i - a it hits zero (slope ends).
    let mut events: Vec<(f64, i64)> = Vec::with_capacity(2 * z.len());
    let mut sum0 = 0.0;
    let mut slope0: i64 = 0;
    for (&zi, &u) in z.iter().zip(upper) {
        let s = zi - a;
        if s <= 0.0 {
            continue;
        }
        if s > u {
            sum0 += u;
            if u.is_finite() {
                events.push((s - u, -1));
            }
        } else {
            sum0 += s;
            slope0 -= 1;
        }
        events.push((s, 1));
    }
    events.retain(|&(mu, _)| mu > 0.0);
    events.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    let mut mu_prev = 0.0;
    let mut sum = sum0;
    let mut slope = slope0;
    for &(mu, delta) in &events {
        if slope < 0 {
            let reach = sum + slope as f64 * (mu - mu_prev);
            if reach <= k {
                return mu_prev + (sum - k) / (-slope as f64);
            }
            sum = reach;
        }
        slope += delta;
        mu_prev = mu;
    }
    // All coordinates exhausted; the sum is zero beyond the last event, so k
    // was reachable earlier. Only hit when k <= 0 slack from rounding.
    mu_prev
}
