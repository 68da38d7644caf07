//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Command-line overrides
//! (`--set key=value`) replace file values. Every error names the line the
//! offending value came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sparsecox::kernel::HyperPrior;
use sparsecox::mcmc::SamplerConfig;
use sparsecox::quadrature::{Domain, MAX_ORDER};
use sparsecox::selection::SelectionConfig;
use sparsecox::simulate::{Intensity, IntensitySpec};

use crate::error::CliError;

const KNOWN_KEYS: &[&str] = &[
    "domain_lower",
    "domain_upper",
    "h_max",
    "l_max",
    "fit_h_max",
    "fit_l_max",
    "quadrature_order",
    "n_theta",
    "alpha",
    "utility_level",
    "max_inducing",
    "burn_in",
    "n_samples",
    "thinning",
    "seed",
    "chains",
    "grid_per_dim",
    "rate",
    "breaks",
    "values",
    "table_per_dim",
    "table_file",
];

#[derive(Clone, Debug, PartialEq)]
pub enum Origin {
    Line { path: PathBuf, line: usize },
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line { path, line } => write!(f, "{}:{}", path.display(), line),
            Origin::Override => write!(f, "--set"),
        }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    origin: Origin,
}

/// Raw key-value pairs with where each came from.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
    base_dir: PathBuf,
    seed_in_file: bool,
}

impl RawConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::Line {
                path: path.to_path_buf(),
                line: i + 1,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = split_pair(line).ok_or_else(|| {
                CliError::Usage(format!("{origin}: expected `key = value`, got `{line}`"))
            })?;
            check_key(key, &origin)?;
            if let Some(prev) = entries.get(key) {
                return Err(CliError::Usage(format!(
                    "{origin}: key `{key}` already set at {}",
                    prev.origin
                )));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    origin,
                },
            );
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let seed_in_file = entries.contains_key("seed");
        Ok(RawConfig {
            entries,
            base_dir,
            seed_in_file,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        RawConfig::parse(&text, path)
    }

    /// Apply a `key=value` override.
    pub fn set(&mut self, pair: &str) -> Result<(), CliError> {
        let (key, value) = split_pair(pair)
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{pair}`")))?;
        check_key(key, &Origin::Override)?;
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                origin: Origin::Override,
            },
        );
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<(T, &Origin)>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(|v| Some((v, &e.origin)))
                .map_err(|_| CliError::Usage(format!("{}: `{key}` must be {what}, got `{}`", e.origin, e.value))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<(Vec<f64>, &Origin)>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => {
                let values = e
                    .value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| {
                        CliError::Usage(format!(
                            "{}: `{key}` must be a comma-separated list of numbers, got `{}`",
                            e.origin, e.value
                        ))
                    })?;
                Ok(Some((values, &e.origin)))
            }
        }
    }

    fn origin(&self, key: &str) -> String {
        self.get(key).map_or_else(|| format!("`{key}`"), |e| e.origin.to_string())
    }
}

fn split_pair(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    (!k.is_empty() && !v.is_empty()).then_some((k, v))
}

fn check_key(key: &str, origin: &Origin) -> Result<(), CliError> {
    if KNOWN_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{origin}: unknown key `{key}`")))
    }
}

/// Optional parameters of the closed-form intensities used by `simulate` and
/// `evaluate`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntensityParams {
    pub rate: Option<f64>,
    pub breaks: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
    pub table_per_dim: Option<usize>,
    pub table_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub domain: Domain,
    pub h_max: f64,
    pub l_max: Vec<f64>,
    pub fit_h_max: f64,
    pub fit_l_max: Vec<f64>,
    pub quadrature_order: usize,
    pub n_theta: usize,
    pub alpha: f64,
    pub utility_level: f64,
    pub max_inducing: usize,
    pub burn_in: usize,
    pub n_samples: usize,
    pub thinning: usize,
    pub seed: u64,
    pub chains: usize,
    pub grid_per_dim: usize,
    pub intensity: IntensityParams,
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let lower = raw
            .list("domain_lower")?
            .ok_or_else(|| CliError::Usage("config must set `domain_lower`".into()))?;
        let upper = raw
            .list("domain_upper")?
            .ok_or_else(|| CliError::Usage("config must set `domain_upper`".into()))?;
        let domain = Domain::new(lower.0, upper.0).map_err(|e| CliError::Usage(format!("{}: {e}", upper.1)))?;
        let d = domain.dim();
        if d > 2 {
            return Err(CliError::Usage(format!("{}: only 1-D and 2-D domains are supported", upper.1)));
        }

        if !raw.seed_in_file {
            return Err(CliError::Usage("the config file must set `seed`".into()));
        }
        let seed = raw.parsed::<u64>("seed", "a nonnegative integer")?.expect("present").0;

        let number = |key: &str, default: f64, ok: fn(f64) -> bool, what: &str| -> Result<f64, CliError> {
            match raw.parsed::<f64>(key, what)? {
                None => Ok(default),
                Some((v, _)) if ok(v) => Ok(v),
                Some((v, origin)) => Err(CliError::Usage(format!("{origin}: `{key}` must be {what}, got {v}"))),
            }
        };
        let count = |key: &str, default: usize, min: usize| -> Result<usize, CliError> {
            match raw.parsed::<usize>(key, "a nonnegative integer")? {
                None => Ok(default),
                Some((v, _)) if v >= min => Ok(v),
                Some((v, origin)) => Err(CliError::Usage(format!("{origin}: `{key}` must be at least {min}, got {v}"))),
            }
        };
        let scales = |key: &str, default: Option<Vec<f64>>| -> Result<Vec<f64>, CliError> {
            let values = match raw.list(key)? {
                Some((v, _)) => v,
                None => default.ok_or_else(|| CliError::Usage(format!("config must set `{key}`")))?,
            };
            let values = if values.len() == 1 { vec![values[0]; d] } else { values };
            if values.len() != d || !values.iter().all(|v| positive(*v)) {
                return Err(CliError::Usage(format!(
                    "{}: `{key}` needs 1 or {d} positive values",
                    raw.origin(key)
                )));
            }
            Ok(values)
        };

        let h_max = number("h_max", 10.0, positive, "a positive number")?;
        let l_max = scales("l_max", None)?;
        let fit_h_max = number("fit_h_max", h_max, positive, "a positive number")?;
        let fit_l_max = scales("fit_l_max", Some(l_max.clone()))?;
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        let utility_level = |v: f64| v > 0.0 && v <= 1.0;

        let intensity = IntensityParams {
            rate: raw.parsed::<f64>("rate", "a number")?.map(|v| v.0),
            breaks: raw.list("breaks")?.map(|v| v.0),
            values: raw.list("values")?.map(|v| v.0),
            table_per_dim: raw.parsed::<usize>("table_per_dim", "an integer")?.map(|v| v.0),
            table_file: raw.get("table_file").map(|e| raw.base_dir.join(&e.value)),
        };

        Ok(RunConfig {
            domain,
            h_max,
            l_max,
            fit_h_max,
            fit_l_max,
            quadrature_order: count("quadrature_order", 20, 1)?,
            n_theta: count("n_theta", 20, 1)?,
            alpha: number("alpha", 1e-3, in_unit, "in (0, 1)")?,
            utility_level: number("utility_level", 0.95, utility_level, "in (0, 1]")?,
            max_inducing: count("max_inducing", 256, 1)?,
            burn_in: count("burn_in", 1000, 0)?,
            n_samples: count("n_samples", 5000, 1)?,
            thinning: count("thinning", 1, 1)?,
            seed,
            chains: count("chains", 1, 1)?,
            grid_per_dim: count("grid_per_dim", if d == 1 { 1000 } else { 60 }, 2)?,
            intensity,
        })
        .and_then(|c| {
            if c.quadrature_order > MAX_ORDER {
                return Err(CliError::Usage(format!(
                    "{}: `quadrature_order` must be at most {MAX_ORDER}",
                    raw.origin("quadrature_order")
                )));
            }
            Ok(c)
        })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let mut raw = RawConfig::load(path)?;
        for pair in overrides {
            raw.set(pair)?;
        }
        RunConfig::from_raw(&raw)
    }

    pub fn selection_prior(&self) -> HyperPrior {
        HyperPrior::new(self.h_max, self.l_max.clone()).expect("validated bounds")
    }

    pub fn fit_prior(&self) -> HyperPrior {
        HyperPrior::new(self.fit_h_max, self.fit_l_max.clone()).expect("validated bounds")
    }

    pub fn selection(&self) -> SelectionConfig {
        let mut config = SelectionConfig::new(self.alpha, self.n_theta, self.selection_prior()).expect("validated");
        config.max_points = self.max_inducing;
        config
    }

    pub fn sampler(&self, seed: u64) -> SamplerConfig {
        let mut config = SamplerConfig::new(self.burn_in, self.n_samples, seed);
        config.thinning = self.thinning;
        config.quadrature_order = self.quadrature_order;
        config
    }

    /// Closed-form intensity by name, on the configured domain.
    pub fn intensity_spec(&self, name: &str) -> Result<IntensitySpec, CliError> {
        let p = &self.intensity;
        let missing = |key: &str| CliError::Usage(format!("intensity `{name}` needs `{key}` in the config"));
        let intensity = match name {
            "synthetic-bimodal" => Intensity::SyntheticBimodal,
            "constant" => Intensity::Constant {
                rate: p.rate.ok_or_else(|| missing("rate"))?,
            },
            "piecewise" => Intensity::Piecewise {
                breaks: p.breaks.clone().ok_or_else(|| missing("breaks"))?,
                values: p.values.clone().ok_or_else(|| missing("values"))?,
            },
            "tabulated" => {
                let path = p.table_file.as_ref().ok_or_else(|| missing("table_file"))?;
                let values = crate::formats::read_column(path)?;
                Intensity::Tabulated {
                    per_dim: p.table_per_dim.ok_or_else(|| missing("table_per_dim"))?,
                    values,
                }
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown intensity `{other}` (expected synthetic-bimodal, constant, piecewise or tabulated)"
                )))
            }
        };
        IntensitySpec::new(intensity, self.domain.clone()).map_err(|e| CliError::Usage(e.to_string()))
    }
}
