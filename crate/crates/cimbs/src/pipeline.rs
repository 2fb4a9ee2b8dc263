//! End-to-end solvers: sampling plus inner optimizer, followed by an
//! out-of-sample Monte Carlo evaluation of the solution.

use std::time::Instant;

use crate::budget::BudgetModel;
use crate::diffusion::estimate_g;
use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::objective::ObjectiveBundle;
use crate::optimize::{
    stochastic_proximal_gradient, AlgoKind, OptimizerSpec, RisInnerAlgo, Trace,
};
use crate::rng::{derive_seed, Purpose, SeedStream};
use crate::rrset::{sampling_procedure, ResampleMode, SamplingParams};
use crate::strategy::StrategyModel;

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub epsilon: f64,
    pub ell: f64,
    pub spec: OptimizerSpec,
    pub resample: ResampleMode,
    pub seed: u64,
    pub eval_sims: u64,
    pub theta_cap: u64,
}

pub const DEFAULT_THETA_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, Default)]
pub struct Timings {
    pub sampling_s: f64,
    pub optimize_s: f64,
    pub evaluate_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub trace: Trace,
    pub lb: f64,
    /// Size of the final RR collection the solution was optimized on.
    pub rr_sets: u64,
    /// RR sets generated in total, counting sampling rounds.
    pub rr_generated: u64,
    pub loop_rounds: usize,
    pub theta_history: Vec<u64>,
    pub theta_one: f64,
    pub theta_two: f64,
    pub timings: Timings,
    /// Any stage hit its iteration cap.
    pub truncated: bool,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Monte Carlo estimate of g(x) + s(x).
    pub value: f64,
    pub value_std_error: f64,
    pub g_part: f64,
    pub s_part: f64,
    pub report: RunReport,
}

/// Runs the configured solver end to end and evaluates the solution with
/// fresh simulation streams.
pub fn solve(
    graph: &DirectedGraph,
    strategy: &StrategyModel,
    budget: &BudgetModel,
    config: &SolveConfig,
) -> Result<Solution> {
    if strategy.n() != graph.n() || strategy.d() != budget.d() {
        return Err(Error::Config(
            "graph, strategy, and budget dimensions do not agree".into(),
        ));
    }
    if config.spec.kind == AlgoKind::UpperGradRis && !strategy.is_independent() {
        return Err(Error::Config(
            "uppergrad_ris requires an independent-activation strategy".into(),
        ));
    }
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err(Error::Config(format!(
            "epsilon must be in (0, 1), got {}",
            config.epsilon
        )));
    }

    let n = graph.n() as f64;
    let (l_h, _, l_q) = strategy.constants();
    let lambda_lc = budget.lambda * budget.l_c();
    let lips = match config.spec.kind {
        AlgoKind::UpperGradRis => {
            let l_q = l_q.ok_or(Error::UnsupportedModel)?;
            n * n * (strategy.d() as f64).sqrt() * l_q + lambda_lc
        }
        _ => n * n * l_h + lambda_lc,
    };

    let (x, trace, lb, rr_sets, rr_generated, loop_rounds, theta_history, theta_one, theta_two, inner_truncated, sampling_s, optimize_s) =
        if config.spec.kind == AlgoKind::ProxGradOrg {
            let t0 = Instant::now();
            let run = prox_grad_org(graph, strategy, budget, config)?;
            let optimize_s = t0.elapsed().as_secs_f64();
            (
                run.0.x,
                run.0.trace,
                1.0,
                0,
                0,
                0,
                Vec::new(),
                0.0,
                0.0,
                run.1,
                0.0,
                optimize_s,
            )
        } else {
            let params = SamplingParams {
                epsilon: config.epsilon,
                ell: config.ell,
                l1: lips,
                l2: lips,
                theta_cap: config.theta_cap,
                resample: config.resample,
            };
            let algo = RisInnerAlgo {
                spec: config.spec.clone(),
            };
            let stream = SeedStream::new(config.seed, Purpose::RrSampling);
            let t0 = Instant::now();
            let sampling = sampling_procedure(graph, strategy, budget, &params, &algo, &stream)?;
            let sampling_s = t0.elapsed().as_secs_f64();

            let bundle = ObjectiveBundle::new(graph, strategy, budget, &sampling.collection)?;
            let t1 = Instant::now();
            let run = {
                use crate::optimize::InnerAlgo;
                algo.run(&bundle, config.epsilon * sampling.lb)?
            };
            let optimize_s = t1.elapsed().as_secs_f64();
            (
                run.x,
                run.trace,
                sampling.lb,
                sampling.theta_final,
                sampling.total_generated,
                sampling.loop_rounds,
                sampling.theta_history,
                sampling.theta_one,
                sampling.theta_two,
                sampling.inner_truncated,
                sampling_s,
                optimize_s,
            )
        };

    let t2 = Instant::now();
    let eval_stream = SeedStream::new(config.seed, Purpose::Evaluation);
    let est = estimate_g(graph, strategy, &x, config.eval_sims.max(1), &eval_stream, 0)?;
    let evaluate_s = t2.elapsed().as_secs_f64();
    let s_part = budget.s_value(&x);
    let truncated = trace.truncated || inner_truncated;
    Ok(Solution {
        value: est.mean + s_part,
        value_std_error: est.std_error,
        g_part: est.mean,
        s_part,
        x,
        report: RunReport {
            alpha: config.spec.declared_alpha(),
            trace,
            lb,
            rr_sets,
            rr_generated,
            loop_rounds,
            theta_history,
            theta_one,
            theta_two,
            timings: Timings {
                sampling_s,
                optimize_s,
                evaluate_s,
            },
            truncated,
        },
    })
}

/// Standalone stochastic proximal gradient on the original objective. The
/// theory step count balances the smoothness and variance error terms at
/// epsilon/2 each.
fn prox_grad_org(
    graph: &DirectedGraph,
    strategy: &StrategyModel,
    budget: &BudgetModel,
    config: &SolveConfig,
) -> Result<(crate::optimize::OptimRun, bool)> {
    let n = graph.n() as f64;
    let (l_h, beta_h, _) = strategy.constants();
    let beta_g = beta_h * n * n + 2.0 * l_h * l_h * n * n * n;
    let sigma = 2.0 * l_h * n * n;
    let delta = budget.diameter();
    let eps = config.epsilon;
    let t_raw = ((beta_g * delta * delta / (2.0 * eps))
        .max(2.0 * (sigma * delta / eps).powi(2)))
    .ceil()
    .max(1.0);
    let cap = config.spec.iter_cap.max(1);
    let t_max = if t_raw.is_finite() {
        (t_raw as u64).min(cap)
    } else {
        cap
    };
    let truncated = !t_raw.is_finite() || (t_raw as u64) > t_max;
    let x0 = vec![0.0; budget.d()];
    // Per-iterate objective values are unobservable; score a thinned
    // subsequence with a smaller simulation budget.
    let eval_sims = (config.eval_sims / 5).max(100);
    let run = stochastic_proximal_gradient(
        graph,
        strategy,
        budget,
        &x0,
        t_max,
        eval_sims,
        config.spec.termination,
        config.seed,
    )?;
    Ok((run, truncated))
}

#[derive(Debug, Clone)]
pub struct EvalStats {
    /// Mean of g(x) + s(x).
    pub mean: f64,
    /// Std over runs (single run: the Monte Carlo standard error).
    pub std: f64,
    pub g_mean: f64,
    pub g_std: f64,
    pub s_part: f64,
    pub runs: u64,
    pub sims: u64,
}

/// Monte Carlo evaluation of g(x) + s(x) over `runs` independent batches of
/// `sims` simulations each.
pub fn evaluate(
    graph: &DirectedGraph,
    strategy: &StrategyModel,
    budget: &BudgetModel,
    x: &[f64],
    sims: u64,
    runs: u64,
    seed: u64,
) -> Result<EvalStats> {
    assert!(sims >= 1 && runs >= 1);
    let stream = SeedStream::new(seed, Purpose::Evaluation);
    let mut run_means = Vec::with_capacity(runs as usize);
    let mut first_se = 0.0;
    for r in 0..runs {
        let est = estimate_g(graph, strategy, x, sims, &stream, r * sims)?;
        if r == 0 {
            first_se = est.std_error;
        }
        run_means.push(est.mean);
    }
    let g_mean = run_means.iter().sum::<f64>() / runs as f64;
    let g_std = if runs > 1 {
        let var = run_means
            .iter()
            .map(|m| (m - g_mean) * (m - g_mean))
            .sum::<f64>()
            / (runs - 1) as f64;
        var.sqrt()
    } else {
        first_se
    };
    let s_part = budget.s_value(x);
    Ok(EvalStats {
        mean: g_mean + s_part,
        std: g_std,
        g_mean,
        g_std,
        s_part,
        runs,
        sims,
    })
}

/// Derives the per-run master seed for repeated solves under one config.
pub fn run_seed(master: u64, run_index: u64) -> u64 {
    derive_seed(master, run_index.wrapping_add(1))
}
