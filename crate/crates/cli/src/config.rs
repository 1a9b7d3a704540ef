//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;

use anyhow::{anyhow, bail, Context, Result};
use curvature_core::ManifoldSpec;

use crate::experiments::{lookup, ExperimentDef};

/// A validated experiment configuration.
///
/// `params` holds exactly the keys that were given, as written; defaults are
/// filled in by [`ExperimentConfig::resolved`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub manifold: Option<ManifoldSpec>,
    pub params: BTreeMap<String, String>,
}

/// Splits config text into `(key, value)` pairs. `#` starts a comment.
pub fn read_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value, got {raw:?}", no + 1))?;
        let k = k.trim();
        if k.is_empty() {
            bail!("line {}: empty key", no + 1);
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Parses a config file; the text must name the experiment.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(None, read_pairs(text)?)
    }

    /// Builds a config from pairs in order; later pairs override earlier ones.
    /// `experiment` must agree with an `experiment` key when both are given.
    pub fn from_pairs(experiment: Option<&str>, pairs: Vec<(String, String)>) -> Result<Self> {
        let mut name = experiment.map(str::to_string);
        let mut manifold = None;
        let mut params = BTreeMap::new();
        for (k, v) in pairs {
            match k.as_str() {
                "experiment" => match &name {
                    Some(n) if *n != v => bail!("config names experiment {v:?} but {n:?} was requested"),
                    _ => name = Some(v),
                },
                "manifold" => manifold = Some(v),
                _ => {
                    params.insert(k, v);
                }
            }
        }
        let experiment = name.ok_or_else(|| anyhow!("no experiment given"))?;
        let def = lookup(&experiment)?;
        let manifold = match manifold {
            Some(text) => {
                if def.manifold.is_none() {
                    bail!("experiment {experiment} takes no manifold");
                }
                Some(text.parse::<ManifoldSpec>().with_context(|| format!("invalid manifold {text:?}"))?)
            }
            None => None,
        };
        let cfg = ExperimentConfig {
            experiment,
            manifold,
            params,
        };
        cfg.validate(def)?;
        Ok(cfg)
    }

    fn validate(&self, def: &ExperimentDef) -> Result<()> {
        for k in self.params.keys() {
            if !def.keys.iter().any(|(name, _)| name == k) {
                let known: Vec<&str> = def.keys.iter().map(|(n, _)| *n).collect();
                bail!("unknown key {k:?} for {}; known keys: {}", def.name, known.join(", "));
            }
        }
        if def.randomized && !self.params.contains_key("seed") {
            bail!("{} is randomized and needs an explicit seed", def.name);
        }
        Ok(())
    }

    pub fn definition(&self) -> &'static ExperimentDef {
        lookup(&self.experiment).expect("validated on construction")
    }

    /// The manifold in use: the configured one or the experiment default.
    pub fn manifold_or_default(&self) -> Option<ManifoldSpec> {
        self.manifold.clone().or_else(|| self.definition().manifold.map(|f| f()))
    }

    /// Every parameter with defaults filled in, plus `manifold` when used.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut out: BTreeMap<String, String> = self
            .definition()
            .keys
            .iter()
            .filter(|(_, d)| !d.is_empty())
            .map(|(k, d)| (k.to_string(), d.to_string()))
            .collect();
        out.extend(self.params.clone());
        if let Some(m) = self.manifold_or_default() {
            out.insert("manifold".into(), m.to_string());
        }
        out
    }

    fn raw(&self, key: &str) -> Result<&str> {
        if let Some(v) = self.params.get(key) {
            return Ok(v);
        }
        let def = self.definition();
        match def.keys.iter().find(|(k, _)| *k == key) {
            Some((_, d)) if !d.is_empty() => Ok(d),
            Some(_) => bail!("missing value for {key}"),
            None => bail!("{} has no parameter {key}", def.name),
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        parse_number(self.raw(key)?).with_context(|| format!("parameter {key}"))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.raw(key)?;
        v.parse().with_context(|| format!("parameter {key}: expected a count, got {v:?}"))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        let v = self.raw(key)?;
        v.parse().with_context(|| format!("parameter {key}: expected an integer, got {v:?}"))
    }

    pub fn string(&self, key: &str) -> Result<String> {
        self.raw(key).map(str::to_string)
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        split_list(self.raw(key)?)
            .map(|t| parse_number(t).with_context(|| format!("parameter {key}")))
            .collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        split_list(self.raw(key)?)
            .map(|t| t.parse().with_context(|| format!("parameter {key}: bad entry {t:?}")))
            .collect()
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "experiment = {}", self.experiment)?;
        if let Some(m) = &self.manifold {
            writeln!(f, "manifold = {m}")?;
        }
        for (k, v) in &self.params {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|t| !t.is_empty())
}

/// Decimal number or a simple fraction such as `4/9`.
pub fn parse_number(text: &str) -> Result<f64> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().with_context(|| format!("bad numerator in {text:?}"))?;
            let b: f64 = b.trim().parse().with_context(|| format!("bad denominator in {text:?}"))?;
            a / b
        }
        None => text.parse().with_context(|| format!("expected a number, got {text:?}"))?,
    };
    if !value.is_finite() {
        bail!("{text:?} is not a finite number");
    }
    Ok(value)
}
