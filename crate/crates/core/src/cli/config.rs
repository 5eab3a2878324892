//! Plain-text `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::{ModelConfig, UnitKind, DEFAULT_R};
use crate::tasks::{Task, DEFAULT_ALPHABET, TRAIN_BUCKETS};
use crate::train::{OptimizerConfig, OptimizerKind, TrainConfig};
use crate::units::{AblationFlags, Activation, Residual};

/// Everything a training run needs, as read from a config file and
/// command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub feature_maps: usize,
    pub blocks: usize,
    pub unit: UnitKind,
    /// `None` means `4 * feature_maps`.
    pub hidden: Option<usize>,
    pub r: f64,
    pub flags: AblationFlags,
    pub steps: u64,
    pub batch: usize,
    pub buckets: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub log_every: u64,
    pub eval_every: u64,
    pub eval_lengths: Vec<usize>,
    pub eval_examples: usize,
    pub stop_at: Option<(usize, f64)>,
    pub divergence_factor: f64,
    pub divergence_window: u64,
    pub log_wallclock: bool,
    pub checkpoint_every: Option<u64>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Addition,
            feature_maps: 96,
            blocks: 1,
            unit: UnitKind::Residual,
            hidden: None,
            r: DEFAULT_R,
            flags: AblationFlags::default(),
            steps: 30_000,
            batch: 32,
            buckets: TRAIN_BUCKETS.to_vec(),
            optimizer: OptimizerConfig::default(),
            log_every: 100,
            eval_every: 500,
            eval_lengths: vec![64, 128, 256],
            eval_examples: 128,
            stop_at: None,
            divergence_factor: 10.0,
            divergence_window: 1000,
            log_wallclock: false,
            checkpoint_every: None,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "task",
    "alphabet",
    "m",
    "blocks",
    "unit",
    "hidden",
    "r",
    "layernorm",
    "activation",
    "residual",
    "steps",
    "batch",
    "buckets",
    "optimizer",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "clip",
    "log_every",
    "eval_every",
    "eval_lengths",
    "eval_examples",
    "stop",
    "divergence_factor",
    "divergence_window",
    "log_wallclock",
    "checkpoint_every",
    "seed",
    "out_dir",
];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn parse_list(key: &str, value: &str) -> std::result::Result<Vec<usize>, String> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid value `{value}` for `{key}`: expected true or false")),
    }
}

fn optional<T: FromStr>(key: &str, value: &str) -> std::result::Result<Option<T>, String> {
    if value == "none" || value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn join(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn opt_str<T: ToString>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), |v| v.to_string())
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key {
            "task" => {
                let alphabet = match self.task {
                    Task::Sorting { alphabet } => alphabet,
                    _ => DEFAULT_ALPHABET,
                };
                self.task = Task::from_name(value, alphabet).map_err(|e| e.to_string())?;
            }
            "alphabet" => {
                let a: usize = parse(key, value)?;
                // Kept for non-sorting tasks so the key round-trips.
                self.task = match self.task {
                    Task::Sorting { .. } => Task::Sorting { alphabet: a },
                    other if a == DEFAULT_ALPHABET => other,
                    _ => return Err("`alphabet` only applies to the sorting task; set `task` first".into()),
                };
            }
            "m" => self.feature_maps = parse(key, value)?,
            "blocks" => self.blocks = parse(key, value)?,
            "unit" => {
                self.unit = match value {
                    "residual" | "rsu" => UnitKind::Residual,
                    "gated" | "su" => UnitKind::Gated,
                    _ => return Err(format!("unknown unit `{value}`: expected residual or gated")),
                }
            }
            "hidden" => self.hidden = optional(key, value)?,
            "r" => self.r = parse(key, value)?,
            "layernorm" => self.flags.layernorm = parse_bool(key, value)?,
            "activation" => {
                self.flags.activation = match value {
                    "gelu" => Activation::Gelu,
                    "relu" => Activation::Relu,
                    _ => return Err(format!("unknown activation `{value}`: expected gelu or relu")),
                }
            }
            "residual" => {
                self.flags.residual = match value {
                    "scaled" => Residual::Scaled,
                    "one" => Residual::ConstantOne,
                    "none" => Residual::None,
                    _ => return Err(format!("unknown residual `{value}`: expected scaled, one or none")),
                }
            }
            "steps" => self.steps = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "buckets" => self.buckets = parse_list(key, value)?,
            "optimizer" => {
                self.optimizer.kind = OptimizerKind::from_name(value).map_err(|e| e.to_string())?
            }
            "lr" => self.optimizer.lr = parse(key, value)?,
            "beta1" => self.optimizer.beta1 = parse(key, value)?,
            "beta2" => self.optimizer.beta2 = parse(key, value)?,
            "eps" => self.optimizer.eps = parse(key, value)?,
            "clip" => self.optimizer.clip = optional(key, value)?,
            "log_every" => self.log_every = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "eval_lengths" => self.eval_lengths = parse_list(key, value)?,
            "eval_examples" => self.eval_examples = parse(key, value)?,
            "stop" => {
                self.stop_at = if value == "none" {
                    None
                } else {
                    let (len, acc) = value
                        .split_once(':')
                        .ok_or_else(|| format!("invalid stop `{value}`: expected LENGTH:ACCURACY or none"))?;
                    Some((parse(key, len)?, parse(key, acc)?))
                }
            }
            "divergence_factor" => self.divergence_factor = parse(key, value)?,
            "divergence_window" => self.divergence_window = parse(key, value)?,
            "log_wallclock" => self.log_wallclock = parse_bool(key, value)?,
            "checkpoint_every" => self.checkpoint_every = optional(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parses config text. Blank lines and `#` comments are ignored; later
    /// settings of a key replace earlier ones.
    pub fn parse_str(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { path: path.to_path_buf(), line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            line: 0,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse_str(&text, path)
    }

    /// Applies `--key value` / `--key=value` overrides; the last one wins.
    /// Errors report the argument position as the line.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<()> {
        let path = PathBuf::from("<command line>");
        let mut i = 0;
        while i < args.len() {
            let err = |message: String| Error::Config { path: path.clone(), line: i + 1, message };
            let key = args[i]
                .strip_prefix("--")
                .ok_or_else(|| err(format!("expected `--key value`, got `{}`", args[i])))?;
            let (key, value) = match key.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = args.get(i + 1).ok_or_else(|| err(format!("missing value for `--{key}`")))?;
                    i += 1;
                    (key.to_string(), v.clone())
                }
            };
            let key = key.replace('-', "_");
            self.set(&key, &value).map_err(|m| Error::Config { path: path.clone(), line: i + 1, message: m })?;
            i += 1;
        }
        Ok(())
    }

    /// Canonical text form; [`RunConfig::parse_str`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let alphabet = match self.task {
            Task::Sorting { alphabet } => alphabet,
            _ => DEFAULT_ALPHABET,
        };
        let activation = match self.flags.activation {
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
        };
        let residual = match self.flags.residual {
            Residual::Scaled => "scaled",
            Residual::ConstantOne => "one",
            Residual::None => "none",
        };
        let unit = match self.unit {
            UnitKind::Residual => "residual",
            UnitKind::Gated => "gated",
        };
        let stop = self.stop_at.map_or_else(|| "none".to_string(), |(l, a)| format!("{l}:{a}"));
        let o = &self.optimizer;
        let pairs: [(&str, String); 30] = [
            ("task", self.task.name().to_string()),
            ("alphabet", alphabet.to_string()),
            ("m", self.feature_maps.to_string()),
            ("blocks", self.blocks.to_string()),
            ("unit", unit.to_string()),
            ("hidden", opt_str(&self.hidden, "auto")),
            ("r", self.r.to_string()),
            ("layernorm", self.flags.layernorm.to_string()),
            ("activation", activation.to_string()),
            ("residual", residual.to_string()),
            ("steps", self.steps.to_string()),
            ("batch", self.batch.to_string()),
            ("buckets", join(&self.buckets)),
            ("optimizer", o.kind.name().to_string()),
            ("lr", o.lr.to_string()),
            ("beta1", o.beta1.to_string()),
            ("beta2", o.beta2.to_string()),
            ("eps", o.eps.to_string()),
            ("clip", opt_str(&o.clip, "none")),
            ("log_every", self.log_every.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_lengths", join(&self.eval_lengths)),
            ("eval_examples", self.eval_examples.to_string()),
            ("stop", stop),
            ("divergence_factor", self.divergence_factor.to_string()),
            ("divergence_window", self.divergence_window.to_string()),
            ("log_wallclock", self.log_wallclock.to_string()),
            ("checkpoint_every", opt_str(&self.checkpoint_every, "none")),
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ];
        for (k, v) in pairs {
            writeln!(s, "{k} = {v}").expect("writing to a String");
        }
        s
    }

    pub fn model_config(&self) -> ModelConfig {
        let max_len = self.buckets.iter().chain(&self.eval_lengths).copied().max().unwrap_or(64);
        let cfg = ModelConfig::tokens(self.task.vocab(), self.task.classes(), self.feature_maps, self.blocks)
            .with_n_max(max_len)
            .with_unit(self.unit)
            .with_flags(self.flags);
        let hidden = self.hidden.unwrap_or(cfg.hidden);
        let mut cfg = cfg.with_hidden(hidden);
        cfg.r = self.r;
        cfg
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            task: self.task,
            steps: self.steps,
            batch: self.batch,
            buckets: self.buckets.clone(),
            optimizer: self.optimizer,
            seed: self.seed,
            log_every: self.log_every,
            eval_every: self.eval_every,
            eval_lengths: self.eval_lengths.clone(),
            eval_examples: self.eval_examples,
            stop_at: self.stop_at,
            divergence_factor: self.divergence_factor,
            divergence_window: self.divergence_window,
            log_wallclock: self.log_wallclock,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train_config().validate()?;
        if self.checkpoint_every == Some(0) {
            return Err(Error::invalid("checkpoint_every must be positive or none"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path() -> PathBuf {
        PathBuf::from("run.cfg")
    }

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = c.to_text();
        assert_eq!(RunConfig::parse_str(&text, &path()).unwrap(), c);
        assert_eq!(text.lines().count(), KEYS.len());
        for (line, key) in text.lines().zip(KEYS) {
            assert!(line.starts_with(&format!("{key} = ")), "{line}");
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RunConfig::parse_str("# run\nsteps = 10\n\nlearning_rate = 0.1\n", &path()).unwrap_err();
        match err {
            Error::Config { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("learning_rate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_value_and_line() {
        assert!(matches!(
            RunConfig::parse_str("steps = ten", &path()),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(matches!(RunConfig::parse_str("\nsteps 10", &path()), Err(Error::Config { line: 2, .. })));
    }

    #[test]
    fn overrides_last_writer_wins() {
        let mut c = RunConfig::parse_str("steps = 10\nm = 8", &path()).unwrap();
        let args: Vec<String> = ["--steps", "20", "--m=16", "--steps", "30", "--task", "sorting", "--alphabet", "5"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        c.apply_overrides(&args).unwrap();
        assert_eq!(c.steps, 30);
        assert_eq!(c.feature_maps, 16);
        assert_eq!(c.task, Task::Sorting { alphabet: 5 });
        assert!(c.apply_overrides(&["--bogus".into(), "1".into()]).is_err());
        assert!(c.apply_overrides(&["--steps".into()]).is_err());
        assert!(c.apply_overrides(&["steps".into(), "1".into()]).is_err());
    }

    #[test]
    fn model_and_train_views() {
        let mut c = RunConfig::default();
        c.set("m", "16").unwrap();
        c.set("residual", "none").unwrap();
        let m = c.model_config();
        assert_eq!(m.hidden, 64);
        assert_eq!(m.n_max, 256);
        assert_eq!(m.flags.residual, Residual::None);
        assert_eq!(c.train_config().buckets, TRAIN_BUCKETS.to_vec());
        c.validate().unwrap();
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            prop_oneof![Just(Task::Addition), Just(Task::Multiplication), (2usize..20).prop_map(|a| Task::Sorting { alphabet: a })],
            1usize..512,
            1usize..4,
            prop::option::of(1usize..2048),
            0.01f64..0.99,
            any::<bool>(),
            (1u64..1_000_000, 1usize..128),
            prop::collection::vec(prop::sample::select(vec![4usize, 8, 16, 32, 64, 128]), 1..5),
            (1e-6f64..1.0, prop::option::of(0.1f64..100.0)),
            prop::option::of((prop::sample::select(vec![8usize, 64, 256]), 0.0f64..1.0)),
            any::<u64>(),
            prop::option::of(1u64..10_000),
        )
            .prop_map(|(task, m, blocks, hidden, r, ln, (steps, batch), buckets, (lr, clip), stop, seed, ck)| {
                let mut c = RunConfig { task, feature_maps: m, blocks, hidden, r, steps, batch, buckets, seed, ..Default::default() };
                c.flags.layernorm = ln;
                c.optimizer.lr = lr;
                c.optimizer.clip = clip;
                c.stop_at = stop;
                c.checkpoint_every = ck;
                c
            })
    }

    proptest! {
        #[test]
        fn parse_serialize_parse_is_identity(c in arb_config()) {
            let once = RunConfig::parse_str(&c.to_text(), &path()).unwrap();
            prop_assert_eq!(&once, &c);
            let twice = RunConfig::parse_str(&once.to_text(), &path()).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
