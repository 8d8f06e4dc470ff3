//! `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{BdlError, Result};

/// Experiment kinds the harness can dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Cdl,
    Cdr,
    Mcdl,
    McdlSym,
    Bcdl,
    Rsdae,
    Dpfa,
}

impl Task {
    pub const ALL: [Task; 7] = [Task::Cdl, Task::Cdr, Task::Mcdl, Task::McdlSym, Task::Bcdl, Task::Rsdae, Task::Dpfa];

    pub fn parse(s: &str) -> Option<Task> {
        Task::ALL.iter().copied().find(|t| t.name() == s)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Cdl => "cdl",
            Task::Cdr => "cdr",
            Task::Mcdl => "mcdl",
            Task::McdlSym => "mcdl-sym",
            Task::Bcdl => "bcdl",
            Task::Rsdae => "rsdae",
            Task::Dpfa => "dpfa",
        }
    }

    /// How the hinge variables are modelled: zero variance (deterministic
    /// link), hyper-variance (learned/sampled with a fixed-precision prior) or
    /// learnable variance.
    pub fn default_variance(&self) -> Variance {
        match self {
            Task::Cdl | Task::Cdr | Task::Bcdl | Task::Rsdae => Variance::Hv,
            Task::Mcdl | Task::McdlSym => Variance::Lv,
            Task::Dpfa => Variance::Zv,
        }
    }

    /// Collaborative-filtering tasks evaluated by recall@M.
    pub fn is_cf(&self) -> bool {
        matches!(self, Task::Cdl | Task::Cdr | Task::Mcdl | Task::McdlSym | Task::Bcdl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variance {
    Zv,
    Hv,
    Lv,
}

impl Variance {
    pub fn parse(s: &str) -> Option<Variance> {
        match s {
            "ZV" => Some(Variance::Zv),
            "HV" => Some(Variance::Hv),
            "LV" => Some(Variance::Lv),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Variance::Zv => "ZV",
            Variance::Hv => "HV",
            Variance::Lv => "LV",
        }
    }
}

/// Every recognised key with its default (`None` = required or optional
/// without default) and a one-line description.
const KEYS: &[(&str, Option<&str>, &str)] = &[
    ("task", None, "cdl | cdr | mcdl | mcdl-sym | bcdl | rsdae | dpfa"),
    ("output", None, "output directory"),
    ("seed", Some("0"), "root seed"),
    ("variance", Some(""), "ZV | HV | LV label recorded in the manifest (task default when empty)"),
    ("content", Some(""), "item content bag-of-words file"),
    ("user_content", Some(""), "user attribute bag-of-words file (mcdl-sym)"),
    ("ratings", Some(""), "training ratings file"),
    ("test_ratings", Some(""), "held-out ratings file (otherwise split from ratings)"),
    ("held_out", Some("1"), "positives per user moved to the test split when test_ratings is empty"),
    ("graph", Some(""), "item graph file (rsdae)"),
    ("counts", Some(""), "document word counts (dpfa)"),
    ("vocab", Some(""), "one word per line, used for topic export (dpfa)"),
    ("layers", Some("24,8"), "encoder widths after the input; the last is the latent size K"),
    ("lambda_w", Some("0.0001"), "weight decay"),
    ("lambda_n", Some("1000"), "clean-output precision"),
    ("lambda_v", Some("10"), "item tether precision"),
    ("lambda_u", Some("0.1"), "user prior precision"),
    ("lambda_s", Some("10"), "hidden-layer precision"),
    ("lambda_r", Some("10"), "relational tether precision"),
    ("lambda_l", Some("1"), "graph prior precision"),
    ("a", Some("1"), "confidence of positives"),
    ("b", Some("0.01"), "confidence of unobserved entries"),
    ("learning_rate", Some("0.01"), "network SGD step"),
    ("momentum", Some("0.9"), "SGD momentum"),
    ("corruption", Some("0.3"), "masking-noise rate"),
    ("batch_size", Some("128"), "SGD mini-batch size"),
    ("init_std", Some("0.1"), "std of initial weights and factors"),
    ("epochs", Some("20"), "training epochs / alternating iterations"),
    ("net_passes", Some("5"), "network passes per epoch"),
    ("mode", Some("joint"), "joint | two-step | decoder-free"),
    ("ranking_pairs", Some("20"), "preference pairs per user per epoch (cdr)"),
    ("recall_m", Some("50"), "list length M for recall@M"),
    ("sweeps", Some("200"), "MCMC sweeps (bcdl, dpfa)"),
    ("burn_in", Some("100"), "MCMC burn-in sweeps"),
    ("thin", Some("5"), "keep every thin-th post-burn-in sweep"),
    ("activation_step", Some("0.1"), "initial activation proposal scale (bcdl)"),
    ("weight_step", Some("0.001"), "initial weight Langevin step (bcdl)"),
    ("pretrain_passes", Some("20"), "plain SDAE passes before the S updates (rsdae)"),
    ("max_steepest_iters", Some("200"), "steepest-descent iteration cap (rsdae)"),
    ("topic_layers", Some("20"), "widths of the topic-usage layers, bottom (K) first (dpfa)"),
    ("backend", Some("gibbs"), "gibbs | sgnht-hybrid (dpfa)"),
    ("heldout_fraction", Some("0.1"), "share of tokens held out for the predictive trace (dpfa)"),
    ("a_phi", Some("0.5"), "topic Dirichlet concentration"),
    ("e0", Some("1"), "gamma0 prior shape"),
    ("f0", Some("1"), "gamma0 prior rate"),
    ("c0", Some("1"), "rate prior rate"),
    ("a0", Some("1"), "document probability Beta prior a"),
    ("b0", Some("1"), "document probability Beta prior b"),
    ("sbn_prior_var", Some("1"), "prior variance of topic-usage network parameters"),
    ("sgnht_d", Some("1"), "thermostat injected variance"),
    ("sgnht_step", Some("0.001"), "thermostat step size"),
    ("sgnht_mass", Some(""), "thermostat mass (number of globals when empty)"),
    ("sgnht_steps", Some("10"), "thermostat steps per sweep"),
    ("rate_step", Some("0.3"), "initial log-scale proposal sd for rates"),
    ("sbn_step", Some("0.01"), "initial Langevin step for topic-usage weights"),
    ("topic_words", Some("20"), "words per topic in the export"),
];

/// Parsed configuration: the effective key/value map plus the directory the
/// file was read from (relative paths resolve against it).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub variance: Variance,
    pub seed: u64,
    pub output: PathBuf,
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys,
    /// duplicates, a missing `task` or `output`, and unparseable values are
    /// configuration errors naming the key.
    pub fn parse(text: &str, base: impl AsRef<Path>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                BdlError::config(line, format!("line {}: expected `key = value`", no + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _, _)| *k == key) {
                return Err(BdlError::config(key, format!("line {}: unknown key", no + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(BdlError::config(key, format!("line {}: duplicate key", no + 1)));
            }
        }
        for (key, default, _) in KEYS {
            if let Some(d) = default {
                values.entry(key.to_string()).or_insert_with(|| d.to_string());
            }
        }
        let task_text = values.get("task").ok_or_else(|| BdlError::config("task", "missing required key"))?;
        let task = Task::parse(task_text)
            .ok_or_else(|| BdlError::config("task", format!("unknown task `{}`", task_text)))?;
        let output = values
            .get("output")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| BdlError::config("output", "missing required key"))?;
        let base = base.as_ref().to_path_buf();
        let output = resolve(&base, output);
        let variance = match values.get("variance").map(String::as_str) {
            None | Some("") => task.default_variance(),
            Some(v) => Variance::parse(v).ok_or_else(|| BdlError::config("variance", format!("expected ZV, HV or LV, got `{}`", v)))?,
        };
        values.insert("variance".into(), variance.label().into());
        let mut cfg = ExperimentConfig {
            task,
            variance,
            seed: 0,
            output,
            values,
            base,
        };
        cfg.seed = cfg.get("seed")?;
        cfg.check_values()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BdlError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ExperimentConfig::parse(&text, base)
    }

    /// Eagerly parses every numeric key so bad values fail before any work.
    fn check_values(&self) -> Result<()> {
        for key in [
            "lambda_w", "lambda_n", "lambda_v", "lambda_u", "lambda_s", "lambda_r", "lambda_l", "a", "b", "learning_rate",
            "momentum", "corruption", "init_std", "activation_step", "weight_step", "heldout_fraction", "a_phi", "e0", "f0",
            "c0", "a0", "b0", "sbn_prior_var", "sgnht_d", "sgnht_step", "rate_step", "sbn_step",
        ] {
            let v: f64 = self.get(key)?;
            if !v.is_finite() {
                return Err(BdlError::config(key, "must be finite"));
            }
        }
        for key in [
            "held_out", "batch_size", "epochs", "net_passes", "ranking_pairs", "recall_m", "sweeps", "burn_in", "thin",
            "pretrain_passes", "max_steepest_iters", "sgnht_steps", "topic_words",
        ] {
            let _: usize = self.get(key)?;
        }
        self.widths("layers")?;
        self.widths("topic_layers")?;
        self.opt_f64("sgnht_mass")?;
        Ok(())
    }

    /// Typed value of `key`; errors name the key.
    pub fn get<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.raw(key)?;
        raw.parse::<V>()
            .map_err(|_| BdlError::config(key, format!("cannot parse `{}`", raw)))
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| BdlError::config(key, "missing required key"))
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key)? {
            "" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    /// Comma-separated positive widths.
    pub fn widths(&self, key: &str) -> Result<Vec<usize>> {
        let raw = self.raw(key)?;
        let widths: Vec<usize> = raw
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| BdlError::config(key, format!("expected comma-separated widths, got `{}`", raw)))?;
        if widths.is_empty() || widths.contains(&0) {
            return Err(BdlError::config(key, "widths must be positive"));
        }
        Ok(widths)
    }

    /// Path-valued key resolved against the config file's directory; `None`
    /// when unset.
    pub fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.raw(key)? {
            "" => Ok(None),
            p => Ok(Some(resolve(&self.base, p))),
        }
    }

    /// Like [`path`](Self::path) but the key must be set for this task.
    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)?
            .ok_or_else(|| BdlError::config(key, format!("required for task `{}`", self.task.name())))
    }

    /// Every effective key in sorted order, one `key = value` per line.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{} = {}", k, v);
        }
        s
    }

    /// SHA-256 of the echoed effective configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.echo().as_bytes());
        digest.iter().map(|b| format!("{:02x}", b)).collect()
    }

    /// Replaces a value (used by tools that derive configs programmatically).
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(BdlError::config(key, "unknown key"));
        }
        self.values.insert(key.to_string(), value.into());
        let text = self.echo();
        *self = ExperimentConfig::parse(&text, self.base.clone())?;
        Ok(())
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Every recognised key with its default and description, for `--help`
/// style listings.
pub fn known_keys() -> impl Iterator<Item = (&'static str, Option<&'static str>, &'static str)> {
    KEYS.iter().copied()
}
