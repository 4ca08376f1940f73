//! Scenario configuration: flat `key=value` lines, `#` comments, multiple
//! scenarios separated by a line containing only `---`. Unknown keys are
//! rejected so typos fail loudly instead of silently running defaults.

use perpsim_core::model::{validated, IncrementFamily, ModelSpec, RewardFamily};
use perpsim_core::{make_arch1, make_two_state_demo};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone)]
pub enum ConfigError {
    /// Malformed line; carries the 1-based line number.
    Syntax { line: usize, msg: String },
    /// A key parsed but failed validation.
    Validation { key: String, msg: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, msg } => {
                write!(f, "config syntax error at line {line}: {msg}")
            }
            ConfigError::Validation { key, msg } => {
                write!(f, "config error for key '{key}': {msg}")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Crude,
    Naive,
    Si,
    Sd,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Crude => "crude",
            EstimatorKind::Naive => "naive",
            EstimatorKind::Si => "si",
            EstimatorKind::Sd => "sd",
        }
    }
}

/// Replication budget: a fixed count (deterministic) or a wall-clock budget
/// (mirrors the fixed-running-time experimental protocol; the realized `n`
/// is inherently nondeterministic and flagged as such).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Load {
    Reps(u64),
    BudgetMs(u64),
}

#[derive(Debug, Clone)]
pub enum ModelConfig {
    Arch1 { alpha0: f64, alpha1: f64 },
    TwoState,
    Custom(CustomModel),
}

#[derive(Debug, Clone)]
pub struct CustomModel {
    pub labels: Vec<String>,
    pub kernel: Vec<Vec<f64>>,
    pub increments: Vec<IncrementFamily>,
    pub rewards: Vec<RewardFamily>,
    pub initial_state: usize,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec, String> {
        match self {
            ModelConfig::Arch1 { alpha0, alpha1 } => {
                make_arch1(*alpha0, *alpha1).map_err(|e| e.to_string())
            }
            ModelConfig::TwoState => Ok(make_two_state_demo()),
            ModelConfig::Custom(c) => ModelSpec::new(
                c.labels.clone(),
                c.kernel.clone(),
                c.increments.clone(),
                c.rewards.clone(),
                c.initial_state,
            )
            .and_then(validated)
            .map_err(|e| e.to_string()),
        }
    }

    /// Compact comma-free tag for the CSV model column.
    pub fn tag(&self) -> String {
        match self {
            ModelConfig::Arch1 { alpha0, alpha1 } => format!("arch1({alpha0};{alpha1})"),
            ModelConfig::TwoState => "two_state".to_string(),
            ModelConfig::Custom(c) => format!("custom{}", c.labels.len()),
        }
    }

    pub fn arch_alpha1(&self) -> Option<f64> {
        match self {
            ModelConfig::Arch1 { alpha1, .. } => Some(*alpha1),
            _ => None,
        }
    }
}

/// One run request.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: ModelConfig,
    pub estimator: EstimatorKind,
    /// Scale as supplied by the user; for `arch1` this is the ARCH
    /// stationary level unless `raw_level=true`.
    pub delta: f64,
    pub load: Load,
    pub seed: u64,
    pub a: Option<f64>,
    pub n_star: Option<u64>,
    pub step_cap: Option<u64>,
    /// Disables the ARCH level transformation.
    pub raw_level: bool,
    /// Delta grid for the slope subcommand.
    pub deltas: Option<Vec<f64>>,
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse::<f64>().map_err(|_| ConfigError::Validation {
        key: key.into(),
        msg: format!("'{v}' is not a number"),
    })
}

fn parse_u64(key: &str, v: &str) -> Result<u64, ConfigError> {
    v.parse::<u64>().map_err(|_| ConfigError::Validation {
        key: key.into(),
        msg: format!("'{v}' is not a non-negative integer"),
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::Validation {
            key: key.into(),
            msg: format!("'{v}' is not a boolean"),
        }),
    }
}

fn parse_increment(key: &str, v: &str) -> Result<IncrementFamily, ConfigError> {
    let err = |msg: String| ConfigError::Validation {
        key: key.into(),
        msg,
    };
    let parts: Vec<&str> = v.split(':').collect();
    match parts.as_slice() {
        ["logchisq", c] => Ok(IncrementFamily::LogChiSquareShifted {
            c: parse_f64(key, c)?,
        }),
        ["normal", mean, sd] => Ok(IncrementFamily::Normal {
            mean: parse_f64(key, mean)?,
            sd: parse_f64(key, sd)?,
        }),
        _ => Err(err(format!(
            "'{v}' is not an increment family (expect logchisq:C or normal:MEAN:SD)"
        ))),
    }
}

fn parse_reward(key: &str, v: &str) -> Result<RewardFamily, ConfigError> {
    let err = |msg: String| ConfigError::Validation {
        key: key.into(),
        msg,
    };
    let parts: Vec<&str> = v.split(':').collect();
    match parts.as_slice() {
        ["constant", w] => Ok(RewardFamily::Constant {
            w: parse_f64(key, w)?,
        }),
        ["lognormal", mu, sigma] => Ok(RewardFamily::LogNormal {
            mu: parse_f64(key, mu)?,
            sigma: parse_f64(key, sigma)?,
        }),
        _ => Err(err(format!(
            "'{v}' is not a reward family (expect constant:W or lognormal:MU:SIGMA)"
        ))),
    }
}

fn build_scenario(idx: usize, kv: &BTreeMap<String, String>) -> Result<Scenario, ConfigError> {
    let val = |k: &str| kv.get(k).map(|s| s.as_str());
    let require = |k: &str| {
        val(k).ok_or_else(|| ConfigError::Validation {
            key: k.into(),
            msg: "required key is missing".into(),
        })
    };

    let model = match require("model")? {
        "arch1" => {
            let alpha0 = parse_f64("alpha0", require("alpha0")?)?;
            let alpha1 = parse_f64("alpha1", require("alpha1")?)?;
            ModelConfig::Arch1 { alpha0, alpha1 }
        }
        "two_state" => ModelConfig::TwoState,
        "custom" => {
            let states = parse_u64("states", require("states")?)? as usize;
            if states == 0 {
                return Err(ConfigError::Validation {
                    key: "states".into(),
                    msg: "must be at least 1".into(),
                });
            }
            let labels = match val("labels") {
                Some(v) => {
                    let labels: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
                    if labels.len() != states {
                        return Err(ConfigError::Validation {
                            key: "labels".into(),
                            msg: format!("expected {states} labels, got {}", labels.len()),
                        });
                    }
                    labels
                }
                None => (0..states).map(|i| format!("s{i}")).collect(),
            };
            let kernel_raw = require("kernel")?;
            let kernel: Vec<Vec<f64>> = kernel_raw
                .split(';')
                .map(|row| {
                    row.split(',')
                        .map(|x| parse_f64("kernel", x.trim()))
                        .collect::<Result<Vec<f64>, _>>()
                })
                .collect::<Result<_, _>>()?;
            if kernel.len() != states || kernel.iter().any(|r| r.len() != states) {
                return Err(ConfigError::Validation {
                    key: "kernel".into(),
                    msg: format!("kernel must be {states}x{states} (rows ';', entries ',')"),
                });
            }
            let mut increments = Vec::with_capacity(states);
            let mut rewards = Vec::with_capacity(states);
            for i in 0..states {
                let ik = format!("increment{i}");
                increments.push(parse_increment(&ik, require(&ik)?)?);
                let rk = format!("reward{i}");
                rewards.push(parse_reward(&rk, require(&rk)?)?);
            }
            let initial_state = match val("initial_state") {
                Some(v) => parse_u64("initial_state", v)? as usize,
                None => 0,
            };
            if initial_state >= states {
                return Err(ConfigError::Validation {
                    key: "initial_state".into(),
                    msg: format!("must be < {states}"),
                });
            }
            ModelConfig::Custom(CustomModel {
                labels,
                kernel,
                increments,
                rewards,
                initial_state,
            })
        }
        other => {
            return Err(ConfigError::Validation {
                key: "model".into(),
                msg: format!("unknown model '{other}' (expect arch1|two_state|custom)"),
            })
        }
    };

    let estimator = match require("estimator")? {
        "crude" => EstimatorKind::Crude,
        "naive" => EstimatorKind::Naive,
        "si" => EstimatorKind::Si,
        "sd" => EstimatorKind::Sd,
        other => {
            return Err(ConfigError::Validation {
                key: "estimator".into(),
                msg: format!("unknown estimator '{other}' (expect crude|naive|si|sd)"),
            })
        }
    };
    if estimator == EstimatorKind::Naive {
        let demo = match val("demo") {
            Some(v) => parse_bool("demo", v)?,
            None => false,
        };
        if !demo {
            return Err(ConfigError::Validation {
                key: "estimator".into(),
                msg: "the naive estimator is a variance-blow-up demonstration; \
                      set demo=true to run it anyway"
                    .into(),
            });
        }
    }

    let delta = parse_f64("delta", require("delta")?)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConfigError::Validation {
            key: "delta".into(),
            msg: "delta must be in (0,1)".into(),
        });
    }

    let load = match (val("reps"), val("budget_ms")) {
        (Some(r), None) => {
            let reps = parse_u64("reps", r)?;
            if reps < 1 {
                return Err(ConfigError::Validation {
                    key: "reps".into(),
                    msg: "reps must be >= 1".into(),
                });
            }
            Load::Reps(reps)
        }
        (None, Some(b)) => Load::BudgetMs(parse_u64("budget_ms", b)?),
        _ => {
            return Err(ConfigError::Validation {
                key: "reps".into(),
                msg: "exactly one of reps/budget_ms must be set".into(),
            })
        }
    };

    let seed = match val("seed") {
        Some(v) => parse_u64("seed", v)?,
        None => 0,
    };
    let a = val("a").map(|v| parse_f64("a", v)).transpose()?;
    if let Some(a) = a {
        if !(a > 0.0 && a < 1.0) {
            return Err(ConfigError::Validation {
                key: "a".into(),
                msg: "a must be in (0,1)".into(),
            });
        }
    }
    let n_star = val("n_star").map(|v| parse_u64("n_star", v)).transpose()?;
    let step_cap = val("step_cap")
        .map(|v| parse_u64("step_cap", v))
        .transpose()?;
    let raw_level = match val("raw_level") {
        Some(v) => parse_bool("raw_level", v)?,
        None => false,
    };
    let deltas = match val("deltas") {
        Some(v) => Some(
            v.split(',')
                .map(|x| parse_f64("deltas", x.trim()))
                .collect::<Result<Vec<f64>, _>>()?,
        ),
        None => None,
    };
    let name = val("name")
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("scenario-{}", idx + 1));

    Ok(Scenario {
        name,
        model,
        estimator,
        delta,
        load,
        seed,
        a,
        n_star,
        step_cap,
        raw_level,
        deltas,
    })
}

fn known_key(k: &str) -> bool {
    const FIXED: [&str; 16] = [
        "model",
        "alpha0",
        "alpha1",
        "estimator",
        "delta",
        "reps",
        "budget_ms",
        "seed",
        "a",
        "n_star",
        "step_cap",
        "raw_level",
        "demo",
        "deltas",
        "name",
        "initial_state",
    ];
    if FIXED.contains(&k) || k == "states" || k == "labels" || k == "kernel" {
        return true;
    }
    for prefix in ["increment", "reward"] {
        if let Some(rest) = k.strip_prefix(prefix) {
            if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) {
                return true;
            }
        }
    }
    false
}

/// Parses the full config text into validated scenarios.
pub fn parse_config(text: &str) -> Result<Vec<Scenario>, ConfigError> {
    let mut blocks: Vec<BTreeMap<String, String>> = vec![BTreeMap::new()];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "---" {
            blocks.push(BTreeMap::new());
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: lineno + 1,
                msg: format!("expected key=value, got '{line}'"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError::Syntax {
                line: lineno + 1,
                msg: "empty key or value".into(),
            });
        }
        if !known_key(k) {
            return Err(ConfigError::Validation {
                key: k.to_string(),
                msg: "unknown key".into(),
            });
        }
        let block = blocks.last_mut().expect("at least one block");
        if block.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::Syntax {
                line: lineno + 1,
                msg: format!("duplicate key '{k}' in scenario block"),
            });
        }
    }
    let mut scenarios = Vec::new();
    for (idx, block) in blocks.iter().enumerate() {
        if block.is_empty() {
            continue;
        }
        scenarios.push(build_scenario(idx, block)?);
    }
    if scenarios.is_empty() {
        return Err(ConfigError::Syntax {
            line: 1,
            msg: "config contains no scenarios".into(),
        });
    }
    Ok(scenarios)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_basic_scenario() {
        let text =
            "model=arch1\nalpha0=1\nalpha1=0.75\nestimator=si\ndelta=1e-3\nreps=100000\nseed=42";
        let sc = parse_config(text).unwrap();
        assert_eq!(sc.len(), 1);
        let s = &sc[0];
        assert_eq!(s.estimator, EstimatorKind::Si);
        assert_eq!(s.delta, 1e-3);
        assert_eq!(s.load, Load::Reps(100_000));
        assert_eq!(s.seed, 42);
        assert!(!s.raw_level);
    }

    #[test]
    fn rejects_delta_out_of_range() {
        let text = "model=two_state\nestimator=crude\ndelta=2\nreps=10";
        match parse_config(text) {
            Err(ConfigError::Validation { key, msg }) => {
                assert_eq!(key, "delta");
                assert!(msg.contains("(0,1)"));
            }
            other => panic!("expected delta validation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_both_reps_and_budget() {
        let text = "model=two_state\nestimator=crude\ndelta=0.1\nreps=100\nbudget_ms=1000";
        match parse_config(text) {
            Err(ConfigError::Validation { msg, .. }) => {
                assert!(msg.contains("exactly one of reps/budget_ms"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_key() {
        let text = "model=two_state\nestimator=crude\ndelta=0.1\nreps=10\nbogus=1";
        match parse_config(text) {
            Err(ConfigError::Validation { key, .. }) => assert_eq!(key, "bogus"),
            other => panic!("expected unknown-key error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_line_number() {
        let text = "model=two_state\nestimator=crude\nnot a key value\ndelta=0.1\nreps=10";
        match parse_config(text) {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn naive_requires_demo_flag() {
        let base = "model=arch1\nalpha0=1\nalpha1=0.75\nestimator=naive\ndelta=0.1\nreps=10";
        assert!(parse_config(base).is_err());
        let with_flag = format!("{base}\ndemo=true");
        assert!(parse_config(&with_flag).is_ok());
    }

    #[test]
    fn multiple_blocks_and_comments() {
        let text = "# first\nmodel=two_state\nestimator=crude\ndelta=0.1\nreps=10\n---\n\
                    model=arch1\nalpha0=2\nalpha1=0.8\nestimator=sd\ndelta=0.05\nbudget_ms=500";
        let sc = parse_config(text).unwrap();
        assert_eq!(sc.len(), 2);
        assert_eq!(sc[0].name, "scenario-1");
        assert_eq!(sc[1].load, Load::BudgetMs(500));
    }

    #[test]
    fn custom_model_round_trips() {
        let text = "model=custom\nstates=2\nkernel=0.5,0.5;1,0\n\
                    increment0=logchisq:0.6666666666666666\nincrement1=logchisq:0.75\n\
                    reward0=constant:1\nreward1=constant:2\n\
                    estimator=si\ndelta=0.1\nreps=10";
        let sc = parse_config(text).unwrap();
        let m = sc[0].model.build().unwrap();
        assert_eq!(m.n_states(), 2);
        let demo = make_two_state_demo();
        assert_eq!(m.kernel().row(0), demo.kernel().row(0));
    }

    #[test]
    fn custom_normal_model() {
        let text = "model=custom\nstates=1\nkernel=1\nincrement0=normal:-1:1\n\
                    reward0=constant:1\nestimator=si\ndelta=0.1\nreps=10";
        let sc = parse_config(text).unwrap();
        assert!(sc[0].model.build().is_ok());
    }

    #[test]
    fn invalid_custom_model_rejected_at_build() {
        let text = "model=custom\nstates=2\nkernel=0.5,0.4;1,0\n\
                    increment0=logchisq:0.5\nincrement1=logchisq:0.5\n\
                    reward0=constant:1\nreward1=constant:1\n\
                    estimator=crude\ndelta=0.1\nreps=10";
        let sc = parse_config(text).unwrap();
        let err = sc[0].model.build().unwrap_err();
        assert!(err.contains("row 0 sums to 0.9"), "{err}");
    }
}
