use cimbs::budget::{BudgetModel, CostKind};
use cimbs::graph::{assign_weighted_cascade, generate_synthetic, SyntheticKind};
use cimbs::optimize::{AlgoKind, OptimizerSpec, Termination};
use cimbs::pipeline::{solve, SolveConfig};
use cimbs::strategy::{build_scenario, ScenarioKind};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let param: f64 = args[1].parse().unwrap();
    let k: f64 = args[2].parse().unwrap();
    let g = generate_synthetic(SyntheticKind::ErdosRenyi, 500, param, 7).unwrap();
    let g = assign_weighted_cascade(g);
    println!("param={param} k={k} n={} m={}", g.n(), g.m());
    let (strategy, _) = build_scenario(&g, ScenarioKind::Personalized, 500, None, 3).unwrap();
    let mut total = 0.0;
    for lambda in [5.0, 2.0, 0.0] {
        for kind in [AlgoKind::GreedyRis, AlgoKind::ProxGradRis, AlgoKind::UpperGradRis] {
            let budget = BudgetModel::new(CostKind::OneNorm, k, lambda, strategy.domain_upper_vec()).unwrap();
            let mut spec = OptimizerSpec::new(kind);
            if kind != AlgoKind::GreedyRis {
                spec.termination = Termination::Heuristic { threshold: 0.3 };
            }
            let config = SolveConfig {
                epsilon: 0.3, ell: 1.0, spec,
                resample: cimbs::rrset::ResampleMode::Reuse,
                seed: 11, eval_sims: 1000, theta_cap: 20_000_000,
            };
            let t0 = std::time::Instant::now();
            match solve(&g, &strategy, &budget, &config) {
                Ok(sol) => {
                    let secs = t0.elapsed().as_secs_f64();
                    total += secs;
                    println!(
                        "  {:<13} lam={lambda} value={:.2} (g={:.2} s={:.2}) rr={} iters={} rounds={} t={:.1}s",
                        kind.name(), sol.value, sol.g_part, sol.s_part,
                        sol.report.rr_sets, sol.report.trace.iterations, sol.report.loop_rounds, secs
                    );
                }
                Err(e) => println!("  {:<13} lam={lambda} ERROR {:.1}s: {e}", kind.name(), t0.elapsed().as_secs_f64()),
            }
            std::io::Write::flush(&mut std::io::stdout()).unwrap();
        }
    }
    println!("TOTAL one pass: {total:.1}s -> x5 runs = {:.1} min", total * 5.0 / 60.0);
}
