//! Flat key=value run configuration.

use std::path::PathBuf;

use crate::budget::CostKind;
use crate::error::{Error, Result};
use crate::graph::{SyntheticKind, WeightMode};
use crate::optimize::{AlgoKind, DEFAULT_GREEDY_STEP, DEFAULT_HEU_THRESHOLD, DEFAULT_ITER_CAP};
use crate::pipeline::DEFAULT_THETA_CAP;
use crate::rrset::ResampleMode;
use crate::strategy::ScenarioKind;

#[derive(Debug, Clone)]
pub enum GraphSource {
    Path(PathBuf),
    Synthetic {
        kind: SyntheticKind,
        n: usize,
        param: f64,
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationKind {
    Theory,
    Heuristic,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub graph: GraphSource,
    pub weights: WeightMode,
    pub scenario_kind: ScenarioKind,
    pub scenario_d: Option<usize>,
    pub size_bounds: Option<(usize, usize)>,
    pub cost_kind: CostKind,
    pub k: f64,
    pub lambda: f64,
    pub algos: Vec<AlgoKind>,
    pub termination: TerminationKind,
    pub heu_threshold: f64,
    pub greedy_step: f64,
    pub resample: ResampleMode,
    pub epsilon: f64,
    pub ell: f64,
    pub seed: u64,
    pub eval_sims: u64,
    pub eval_runs: u64,
    pub sweep_k: Option<Vec<f64>>,
    pub sweep_lambda: Option<Vec<f64>>,
    pub theta_cap: u64,
    pub iter_cap: u64,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|item| parse_value(key, item.trim()))
        .collect()
}

impl RunConfig {
    /// Parses the flat key=value format; '#' starts a comment line, unknown
    /// keys are rejected.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut graph_path: Option<PathBuf> = None;
        let mut syn_kind: Option<SyntheticKind> = None;
        let mut syn_n: Option<usize> = None;
        let mut syn_param: Option<f64> = None;
        let mut syn_seed: Option<u64> = None;
        let mut weights = WeightMode::WeightedCascade;
        let mut scenario_kind: Option<ScenarioKind> = None;
        let mut scenario_d: Option<usize> = None;
        let mut size_bounds: Option<(usize, usize)> = None;
        let mut cost_kind = CostKind::OneNorm;
        let mut k: Option<f64> = None;
        let mut lambda = 0.0f64;
        let mut algos: Vec<AlgoKind> = vec![AlgoKind::ProxGradRis];
        let mut termination = TerminationKind::Theory;
        let mut heu_threshold = DEFAULT_HEU_THRESHOLD;
        let mut greedy_step = DEFAULT_GREEDY_STEP;
        let mut resample = ResampleMode::Reuse;
        let mut epsilon = 0.3f64;
        let mut ell = 1.0f64;
        let mut seed = 1u64;
        let mut eval_sims = 1000u64;
        let mut eval_runs = 5u64;
        let mut sweep_k: Option<Vec<f64>> = None;
        let mut sweep_lambda: Option<Vec<f64>> = None;
        let mut theta_cap = DEFAULT_THETA_CAP;
        let mut iter_cap = DEFAULT_ITER_CAP;

        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected key=value, got '{trimmed}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "graph.path" => graph_path = Some(PathBuf::from(value)),
                "graph.synthetic.kind" => syn_kind = Some(parse_value(key, value)?),
                "graph.synthetic.n" => syn_n = Some(parse_value(key, value)?),
                "graph.synthetic.param" => syn_param = Some(parse_value(key, value)?),
                "graph.synthetic.seed" => syn_seed = Some(parse_value(key, value)?),
                "graph.weights" => {
                    weights = match value {
                        "explicit" => WeightMode::Explicit,
                        "weighted_cascade" => WeightMode::WeightedCascade,
                        other => {
                            return Err(Error::Config(format!("unknown weight mode '{other}'")))
                        }
                    }
                }
                "scenario.kind" => scenario_kind = Some(parse_value(key, value)?),
                "scenario.d" => scenario_d = Some(parse_value(key, value)?),
                "scenario.size_bounds" => {
                    let bounds: Vec<usize> = parse_list(key, value)?;
                    if bounds.len() != 2 {
                        return Err(Error::Config(
                            "scenario.size_bounds takes two values 'lo,hi'".into(),
                        ));
                    }
                    size_bounds = Some((bounds[0], bounds[1]));
                }
                "cost.kind" => cost_kind = parse_value(key, value)?,
                "budget.k" => k = Some(parse_value(key, value)?),
                "budget.lambda" => lambda = parse_value(key, value)?,
                "algo.kind" => algos = parse_list(key, value)?,
                "algo.termination" => {
                    termination = match value {
                        "theory" => TerminationKind::Theory,
                        "heuristic" => TerminationKind::Heuristic,
                        other => {
                            return Err(Error::Config(format!(
                                "unknown termination mode '{other}'"
                            )))
                        }
                    }
                }
                "algo.heu_threshold" => heu_threshold = parse_value(key, value)?,
                "algo.greedy_step" => greedy_step = parse_value(key, value)?,
                "algo.resample" => resample = parse_value(key, value)?,
                "epsilon" => epsilon = parse_value(key, value)?,
                "ell" => ell = parse_value(key, value)?,
                "seed" => seed = parse_value(key, value)?,
                "eval.sims" => eval_sims = parse_value(key, value)?,
                "eval.runs" => eval_runs = parse_value(key, value)?,
                "sweep.k" => sweep_k = Some(parse_list(key, value)?),
                "sweep.lambda" => sweep_lambda = Some(parse_list(key, value)?),
                "caps.theta" => theta_cap = parse_value(key, value)?,
                "caps.iterations" => iter_cap = parse_value(key, value)?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown config key '{other}' (line {line_no})"
                    )))
                }
            }
        }

        let graph = match (graph_path, syn_kind) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set either graph.path or graph.synthetic.*, not both".into(),
                ))
            }
            (Some(path), None) => GraphSource::Path(path),
            (None, Some(kind)) => GraphSource::Synthetic {
                kind,
                n: syn_n.ok_or_else(|| Error::Config("graph.synthetic.n is required".into()))?,
                param: syn_param
                    .ok_or_else(|| Error::Config("graph.synthetic.param is required".into()))?,
                seed: syn_seed,
            },
            (None, None) => {
                return Err(Error::Config(
                    "config needs graph.path or graph.synthetic.kind".into(),
                ))
            }
        };
        let scenario_kind = scenario_kind
            .ok_or_else(|| Error::Config("scenario.kind is required".into()))?;
        let k = k.ok_or_else(|| Error::Config("budget.k is required".into()))?;
        if !(k > 0.0) {
            return Err(Error::Config(format!("budget.k must be > 0, got {k}")));
        }
        if !(0.0 < epsilon && epsilon < 1.0) {
            return Err(Error::Config(format!(
                "epsilon must be in (0, 1), got {epsilon}"
            )));
        }
        if algos.is_empty() {
            return Err(Error::Config("algo.kind must name at least one algorithm".into()));
        }
        Ok(RunConfig {
            graph,
            weights,
            scenario_kind,
            scenario_d,
            size_bounds,
            cost_kind,
            k,
            lambda,
            algos,
            termination,
            heu_threshold,
            greedy_step,
            resample,
            epsilon,
            ell,
            seed,
            eval_sims,
            eval_runs,
            sweep_k,
            sweep_lambda,
            theta_cap,
            iter_cap,
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }
}
