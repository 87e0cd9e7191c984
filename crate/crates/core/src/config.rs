//! Training hyperparameters and their flat `key = value` text form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All knobs of the training loop. `Default` is the synthetic balanced-tree preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    /// Riemannian step size.
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Negatives per positive edge.
    pub negatives: usize,
    /// Weight of transitive-closure edges while they are active.
    pub eta_tc: f64,
    /// Closure edges are used during epochs `1..=n_tc`.
    pub n_tc: usize,
    pub burn_in_epochs: usize,
    pub burn_in_lr_divisor: f64,
    pub dilation_enabled: bool,
    pub dilation_k: f64,
    pub dilation_start_epoch: usize,
    /// Minimum number of epochs between two dilations.
    pub dilation_cooldown: usize,
    pub init_radius: f64,
    pub eps: f64,
    pub seed: u64,
    /// 1 runs deterministically; more enables lock-free concurrent batch updates.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            lr: 0.5,
            epochs: 3000,
            batch_size: 50,
            negatives: 50,
            eta_tc: 0.2,
            n_tc: 300,
            burn_in_epochs: 20,
            burn_in_lr_divisor: 10.0,
            dilation_enabled: true,
            dilation_k: 1.1,
            dilation_start_epoch: 300,
            dilation_cooldown: 50,
            init_radius: 1e-3,
            eps: 1e-5,
            seed: 0,
            threads: 1,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in serialization order.
pub const CONFIG_KEYS: &[&str] = &[
    "dim",
    "lr",
    "epochs",
    "batch_size",
    "negatives",
    "eta_tc",
    "n_tc",
    "burn_in_epochs",
    "burn_in_lr_divisor",
    "dilation_enabled",
    "dilation_k",
    "dilation_start_epoch",
    "dilation_cooldown",
    "init_radius",
    "eps",
    "seed",
    "threads",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::invalid(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl TrainConfig {
    /// Baseline procedure: tree edges only, no dilation.
    pub fn baseline() -> Self {
        Self {
            eta_tc: 0.0,
            n_tc: 0,
            dilation_enabled: false,
            ..Self::default()
        }
    }

    /// Preset for real taxonomies: lr 1.0, batch 10.
    pub fn real_world(dim: usize) -> Self {
        Self {
            dim,
            lr: 1.0,
            batch_size: 10,
            ..Self::default()
        }
    }

    /// Sets one field from its textual form. `m` is accepted as an alias of `negatives`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dim" => self.dim = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" | "batch" => self.batch_size = parse(key, v)?,
            "negatives" | "m" => self.negatives = parse(key, v)?,
            "eta_tc" => self.eta_tc = parse(key, v)?,
            "n_tc" => self.n_tc = parse(key, v)?,
            "burn_in_epochs" => self.burn_in_epochs = parse(key, v)?,
            "burn_in_lr_divisor" => self.burn_in_lr_divisor = parse(key, v)?,
            "dilation_enabled" | "dilation" => self.dilation_enabled = parse_bool(key, v)?,
            "dilation_k" => self.dilation_k = parse(key, v)?,
            "dilation_start_epoch" => self.dilation_start_epoch = parse(key, v)?,
            "dilation_cooldown" => self.dilation_cooldown = parse(key, v)?,
            "init_radius" => self.init_radius = parse(key, v)?,
            "eps" => self.eps = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn merge_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            self.set(k, v).map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg = Self::default();
        cfg.merge_text(&text, path)?;
        Ok(cfg)
    }

    /// The `key = value` form; floats use round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "lr = {:?}", self.lr);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "negatives = {}", self.negatives);
        let _ = writeln!(s, "eta_tc = {:?}", self.eta_tc);
        let _ = writeln!(s, "n_tc = {}", self.n_tc);
        let _ = writeln!(s, "burn_in_epochs = {}", self.burn_in_epochs);
        let _ = writeln!(s, "burn_in_lr_divisor = {:?}", self.burn_in_lr_divisor);
        let _ = writeln!(s, "dilation_enabled = {}", self.dilation_enabled);
        let _ = writeln!(s, "dilation_k = {:?}", self.dilation_k);
        let _ = writeln!(s, "dilation_start_epoch = {}", self.dilation_start_epoch);
        let _ = writeln!(s, "dilation_cooldown = {}", self.dilation_cooldown);
        let _ = writeln!(s, "init_radius = {:?}", self.init_radius);
        let _ = writeln!(s, "eps = {:?}", self.eps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "threads = {}", self.threads);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(m.to_owned()));
        if self.dim < 2 {
            return fail("dim must be ≥ 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be a positive number");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be ≥ 1");
        }
        if self.negatives == 0 {
            return fail("negatives must be ≥ 1");
        }
        if !(0.0..=1.0).contains(&self.eta_tc) {
            return fail("eta_tc must lie in [0, 1]");
        }
        if self.burn_in_lr_divisor.is_nan() || self.burn_in_lr_divisor <= 0.0 {
            return fail("burn_in_lr_divisor must be > 0");
        }
        if !(self.dilation_k > 1.0 && self.dilation_k.is_finite()) {
            return fail("dilation_k must be > 1");
        }
        if !(self.init_radius > 0.0 && self.init_radius < 0.1) {
            return fail("init_radius must lie in (0, 0.1)");
        }
        if !(self.eps > 0.0 && self.eps < 0.1) {
            return fail("eps must lie in (0, 0.1)");
        }
        if self.threads == 0 {
            return fail("threads must be ≥ 1");
        }
        Ok(())
    }

    /// Whether closure edges participate at all.
    pub fn uses_closure(&self) -> bool {
        self.eta_tc > 0.0 && self.n_tc > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_synthetic_preset() {
        let c = TrainConfig::default();
        assert_eq!((c.dim, c.batch_size, c.negatives, c.epochs, c.n_tc), (2, 50, 50, 3000, 300));
        assert_eq!((c.lr, c.eta_tc), (0.5, 0.2));
        c.validate().unwrap();
        assert!(!TrainConfig::baseline().uses_closure());
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::default();
        c.lr = 0.123456789012345;
        c.seed = 99;
        c.dilation_enabled = false;
        let mut back = TrainConfig::default();
        back.merge_text(&c.to_text(), Path::new("cfg")).unwrap();
        assert_eq!(back, c);
        let text = c.to_text();
        let listed: Vec<&str> = text
            .lines()
            .map(|l| l.split(" = ").next().unwrap())
            .collect();
        assert_eq!(listed, CONFIG_KEYS);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let mut c = TrainConfig::default();
        c.merge_text("# comment\nlr = 0.3 # trailing\n\nm=10\n", Path::new("x")).unwrap();
        assert_eq!((c.lr, c.negatives), (0.3, 10));
        match c.merge_text("lr = 1\nbogus = 3\n", Path::new("x")) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(c.merge_text("lr 0.3", Path::new("x")).is_err());
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let bad = [
            TrainConfig { eta_tc: 1.5, ..Default::default() },
            TrainConfig { dim: 1, ..Default::default() },
            TrainConfig { init_radius: 0.2, ..Default::default() },
            TrainConfig { dilation_k: 1.0, ..Default::default() },
            TrainConfig { lr: 0.0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
