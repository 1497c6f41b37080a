//! Line-oriented `key=value` run configuration.
//!
//! Blank lines and anything after `#` are ignored. Keys are fixed; unknown or
//! repeated keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::analysis::DataSource;
use crate::error::{Error, Result};
use crate::predictor::PredictorSpec;
use crate::schedule::{Schedule, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_COSINE_OFFSET, NOMINAL_STEPS};
use crate::solvers::{Method, DEFAULT_FON_MIN_T};
use crate::state::StateVec;

/// Environment variable overriding `sampler.seed`.
pub const SEED_ENV: &str = "PNDM_SEED";

pub const KNOWN_KEYS: &[&str] = &[
    "schedule.kind",
    "schedule.params.beta_start",
    "schedule.params.beta_end",
    "schedule.params.n",
    "schedule.params.s",
    "schedule.params.a",
    "schedule.params.b",
    "predictor.kind",
    "predictor.x0",
    "predictor.eps0",
    "sampler.method",
    "sampler.steps",
    "sampler.seed",
    "sampler.fon_min_t",
    "grid.t_start",
    "grid.t_end",
    "output.dir",
    "converge.methods",
    "converge.steps",
    "converge.reference_factor",
    "probe.t_min",
    "probe.t_max",
    "probe.points",
    "stats.samples",
    "stats.data",
    "stats.pixels",
    "stats.seed",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1)));
            }
            if value.is_empty() {
                return Err(Error::Config(format!("line {}: empty value for '{key}'", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `PNDM_SEED` when set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(seed) = std::env::var(SEED_ENV) {
            seed.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("{SEED_ENV}='{seed}' is not an unsigned integer")))?;
            self.entries.insert("sampler.seed".into(), seed.trim().to_string());
        }
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn require(&self, keys: &[&str]) -> Result<()> {
        let missing: Vec<&str> = keys.iter().copied().filter(|k| self.get(k).is_none()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("missing required keys: {}", missing.join(", "))))
        }
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("cannot parse {key}='{v}'")))
            })
            .transpose()
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    fn reject_unused(&self, keys: &[&str], context: &str) -> Result<()> {
        match keys.iter().find(|k| self.get(k).is_some()) {
            Some(k) => Err(Error::Config(format!("'{k}' does not apply to {context}"))),
            None => Ok(()),
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let kind: String = self.required("schedule.kind")?;
        let lb = ["schedule.params.beta_start", "schedule.params.beta_end", "schedule.params.n"];
        let cos = ["schedule.params.s"];
        let exp = ["schedule.params.a", "schedule.params.b"];
        let schedule = match kind.as_str() {
            "linear-beta" => {
                self.reject_unused(&[&cos[..], &exp[..]].concat(), "linear-beta")?;
                Schedule::linear_beta(
                    self.parsed("schedule.params.beta_start")?.unwrap_or(DEFAULT_BETA_START),
                    self.parsed("schedule.params.beta_end")?.unwrap_or(DEFAULT_BETA_END),
                    self.parsed("schedule.params.n")?.unwrap_or(NOMINAL_STEPS),
                )
            }
            "cosine" => {
                self.reject_unused(&[&lb[..], &exp[..]].concat(), "cosine")?;
                Schedule::cosine(self.parsed("schedule.params.s")?.unwrap_or(DEFAULT_COSINE_OFFSET))
            }
            "toy-linear" => {
                self.reject_unused(&[&lb[..], &cos[..], &exp[..]].concat(), "toy-linear")?;
                Ok(Schedule::toy_linear())
            }
            "exponential" => {
                self.reject_unused(&[&lb[..], &cos[..]].concat(), "exponential")?;
                Schedule::exponential(
                    self.required("schedule.params.a")?,
                    self.required("schedule.params.b")?,
                )
            }
            other => return Err(Error::Config(format!("unknown schedule.kind '{other}'"))),
        };
        schedule.map_err(|e| Error::Config(e.to_string()))
    }

    pub fn predictor(&self) -> Result<PredictorSpec> {
        let kind: String = self.required("predictor.kind")?;
        match kind.as_str() {
            "analytic-toy" => {
                self.reject_unused(&["predictor.x0", "predictor.eps0"], "analytic-toy")?;
                Ok(PredictorSpec::AnalyticToy)
            }
            "exact-oracle" => {
                self.reject_unused(&["predictor.eps0"], "exact-oracle")?;
                Ok(PredictorSpec::ExactOracle {
                    x0: self.vector("predictor.x0")?,
                })
            }
            "constant" => {
                self.reject_unused(&["predictor.x0"], "constant")?;
                Ok(PredictorSpec::Constant {
                    eps0: self.vector("predictor.eps0")?,
                })
            }
            other => Err(Error::Config(format!("unknown predictor.kind '{other}'"))),
        }
    }

    fn vector(&self, key: &str) -> Result<StateVec> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))?;
        let values = parse_list::<f64>(key, raw)?;
        StateVec::new(values).map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    pub fn method(&self) -> Result<Method> {
        self.required::<String>("sampler.method")?.parse()
    }

    pub fn steps(&self) -> Result<usize> {
        self.required("sampler.steps")
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.parsed("sampler.seed")?.unwrap_or(0))
    }

    pub fn fon_min_t(&self) -> Result<f64> {
        Ok(self.parsed("sampler.fon_min_t")?.unwrap_or(DEFAULT_FON_MIN_T))
    }

    pub fn t_range(&self) -> Result<(f64, f64)> {
        Ok((self.required("grid.t_start")?, self.required("grid.t_end")?))
    }

    pub fn output_dir(&self) -> Option<&str> {
        self.get("output.dir")
    }

    pub fn converge_methods(&self) -> Result<Vec<Method>> {
        match self.get("converge.methods") {
            Some(raw) => raw.split(',').map(|m| m.trim().parse()).collect(),
            None => Ok(vec![Method::Ddim, Method::SPndm, Method::FPndm, Method::FonRk4]),
        }
    }

    pub fn converge_steps(&self) -> Result<Vec<usize>> {
        match self.get("converge.steps") {
            Some(raw) => parse_list("converge.steps", raw),
            None => Ok(vec![25, 50, 100, 200, 400]),
        }
    }

    pub fn reference_factor(&self) -> Result<usize> {
        let f = self
            .parsed("converge.reference_factor")?
            .unwrap_or(crate::analysis::REFERENCE_FACTOR);
        if f < 2 {
            return Err(Error::Config("converge.reference_factor must be >= 2".into()));
        }
        Ok(f)
    }

    pub fn probe_range(&self) -> Result<(f64, f64, usize)> {
        Ok((
            self.parsed("probe.t_min")?.unwrap_or(1e-6),
            self.parsed("probe.t_max")?.unwrap_or(1e-2),
            self.parsed("probe.points")?.unwrap_or(20),
        ))
    }

    pub fn stats_samples(&self) -> Result<usize> {
        Ok(self.parsed("stats.samples")?.unwrap_or(1000))
    }

    pub fn stats_seed(&self) -> Result<u64> {
        match self.parsed("stats.seed")? {
            Some(s) => Ok(s),
            None => self.seed(),
        }
    }

    pub fn stats_source(&self, dim: usize) -> Result<DataSource> {
        match self.get("stats.data").unwrap_or("gaussian") {
            "zero" => Ok(DataSource::Zero { dim }),
            "uniform" => Ok(DataSource::Uniform { dim }),
            "gaussian" => Ok(DataSource::Gaussian { dim }),
            other => Err(Error::Config(format!("unknown stats.data '{other}'"))),
        }
    }

    pub fn stats_pixels(&self, dim: usize) -> Result<(usize, usize)> {
        match self.get("stats.pixels") {
            Some(raw) => {
                let v: Vec<usize> = parse_list("stats.pixels", raw)?;
                match v[..] {
                    [i, j] => Ok((i, j)),
                    _ => Err(Error::Config("stats.pixels needs exactly two indices".into())),
                }
            }
            None => Ok((0, 1.min(dim - 1))),
        }
    }
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("{key}: cannot parse '{}'", v.trim())))
        })
        .collect()
}
