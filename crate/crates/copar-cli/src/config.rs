//! Run configuration: the common command-line flags, the key=value config
//! file that mirrors them, and the merge of the two (flags win).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use copar_core::copar::Criterion;
use copar_core::margins::MarginFamily;
use copar_core::pair_copulas::Family;

use crate::CliError;

/// Flags shared by every command. Each one may also be set as a `key=value`
/// line in the `--config` file (same spelling, no dashes prefix); a flag on
/// the command line overrides the config file. Which settings are required
/// depends on the command.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// CSV data file (header row; optional leading timestamp column).
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,

    /// Config file of key=value lines mirroring these flags.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Model order k (maximum dependent lag).
    #[arg(long, value_name = "K")]
    pub order: Option<usize>,

    /// Largest order to consider during order selection.
    #[arg(long = "k-max", value_name = "K")]
    pub k_max: Option<usize>,

    /// Information criterion for order selection [default: bic].
    #[arg(long, value_name = "NAME")]
    pub criterion: Option<String>,

    /// Comma-separated candidate copula families, or "all" [default: all].
    #[arg(long, value_name = "LIST")]
    pub families: Option<String>,

    /// Margin family per series, comma-separated (one name broadcasts to
    /// all series) [default: norm].
    #[arg(long, value_name = "LIST")]
    pub margins: Option<String>,

    /// Monte-Carlo sample paths per forecast [default: 10000].
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,

    /// Interval level: prediction intervals span the alpha/2 and 1-alpha/2
    /// quantiles; tests reject below alpha [default: 0.05].
    #[arg(long, value_name = "A")]
    pub alpha: Option<f64>,

    /// Random seed [default: 0].
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,

    /// Train/test split for evaluate: the number of initial rows used for
    /// the first fit; all later rows are test points.
    #[arg(long, value_name = "INDEX")]
    pub split: Option<usize>,

    /// Forecast mode [default: unconditional].
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,

    /// Write the primary output to this file instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Model file (as written by fit) for simulate and forecast.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,

    /// Number of time points to simulate.
    #[arg(long, value_name = "N")]
    pub length: Option<usize>,

    /// Forecast horizon in steps [default: 1].
    #[arg(long, value_name = "H")]
    pub horizon: Option<usize>,

    /// Comma-separated future pivot values (series 1), one per horizon
    /// step; required in conditional mode.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    pub pivot: Option<String>,

    /// Report only this series (1-based column index).
    #[arg(long, value_name = "J")]
    pub series: Option<usize>,

    /// Follow the sequential fit with a joint likelihood refinement.
    #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    pub refine: Option<bool>,

    /// Write per-horizon fan-chart data (series, horizon, quantile, value)
    /// to this file after forecasting.
    #[arg(long = "plot-data", value_name = "PATH")]
    pub plot_data: Option<PathBuf>,
}

/// Forecast mode named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSpec {
    Unconditional,
    Joint,
    Conditional,
}

impl ModeSpec {
    pub fn name(self) -> &'static str {
        match self {
            ModeSpec::Unconditional => "unconditional",
            ModeSpec::Joint => "joint",
            ModeSpec::Conditional => "conditional",
        }
    }
}

impl FromStr for ModeSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "unconditional" => Ok(ModeSpec::Unconditional),
            "joint" => Ok(ModeSpec::Joint),
            "conditional" => Ok(ModeSpec::Conditional),
            _ => Err(CliError::Usage(format!(
                "mode: unknown value {s:?} (expected unconditional, joint, or conditional)"
            ))),
        }
    }
}

/// The fully resolved configuration a command runs with: config-file values
/// overlaid with flags, defaults applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub order: Option<usize>,
    pub k_max: Option<usize>,
    pub criterion: Criterion,
    pub families: Vec<Family>,
    pub margins_spec: String,
    pub samples: usize,
    pub alpha: f64,
    pub seed: u64,
    pub split: Option<usize>,
    pub mode: ModeSpec,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub length: Option<usize>,
    pub horizon: usize,
    pub pivot: Option<Vec<f64>>,
    pub series: Option<usize>,
    pub refine: bool,
    pub plot_data: Option<PathBuf>,
}

/// Parses one config-file value, blaming the key on failure.
fn parse_keyed<T: FromStr>(value: &str, key: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("{key}: cannot parse value {value:?}")))
}

/// Reads a config file into a key → value map. Blank lines and lines
/// starting with `#` are skipped.
fn read_config_file(path: &PathBuf) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("cannot read config {}: {e}", path.display()))
    })?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "config line {} is not key=value: {line:?}",
                idx + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

const KNOWN_KEYS: &[&str] = &[
    "data", "order", "k-max", "criterion", "families", "margins", "samples",
    "alpha", "seed", "split", "mode", "out", "model", "length", "horizon",
    "pivot", "series", "refine", "plot-data",
];

/// Merges flags over the config file and applies defaults.
pub fn resolve(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    for key in file.keys() {
        if key == "config" {
            return Err(CliError::Usage("config files cannot nest (key \"config\")".into()));
        }
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("unknown config key {key:?}")));
        }
    }
    let get = |key: &str| file.get(key).map(String::as_str);

    // Every setting: flag first, then config file, then default.
    let data = match (&args.data, get("data")) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(v)) => Some(PathBuf::from(v)),
        (None, None) => None,
    };
    let out = match (&args.out, get("out")) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(v)) => Some(PathBuf::from(v)),
        (None, None) => None,
    };
    let model = match (&args.model, get("model")) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(v)) => Some(PathBuf::from(v)),
        (None, None) => None,
    };
    let plot_data = match (&args.plot_data, get("plot-data")) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(v)) => Some(PathBuf::from(v)),
        (None, None) => None,
    };

    let order = match (args.order, get("order")) {
        (Some(v), _) => Some(v),
        (None, Some(v)) => Some(parse_keyed(v, "order")?),
        (None, None) => None,
    };
    let k_max = match (args.k_max, get("k-max")) {
        (Some(v), _) => Some(v),
        (None, Some(v)) => Some(parse_keyed(v, "k-max")?),
        (None, None) => None,
    };
    let split = match (args.split, get("split")) {
        (Some(v), _) => Some(v),
        (None, Some(v)) => Some(parse_keyed(v, "split")?),
        (None, None) => None,
    };
    let length = match (args.length, get("length")) {
        (Some(v), _) => Some(v),
        (None, Some(v)) => Some(parse_keyed(v, "length")?),
        (None, None) => None,
    };
    let series = match (args.series, get("series")) {
        (Some(v), _) => Some(v),
        (None, Some(v)) => Some(parse_keyed(v, "series")?),
        (None, None) => None,
    };

    let samples = match (args.samples, get("samples")) {
        (Some(v), _) => v,
        (None, Some(v)) => parse_keyed(v, "samples")?,
        (None, None) => 10_000,
    };
    let alpha = match (args.alpha, get("alpha")) {
        (Some(v), _) => v,
        (None, Some(v)) => parse_keyed(v, "alpha")?,
        (None, None) => 0.05,
    };
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "alpha: must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    let seed = match (args.seed, get("seed")) {
        (Some(v), _) => v,
        (None, Some(v)) => parse_keyed(v, "seed")?,
        (None, None) => 0,
    };
    let horizon = match (args.horizon, get("horizon")) {
        (Some(v), _) => v,
        (None, Some(v)) => parse_keyed(v, "horizon")?,
        (None, None) => 1,
    };
    let refine = match (args.refine, get("refine")) {
        (Some(v), _) => v,
        (None, Some(v)) => parse_keyed(v, "refine")?,
        (None, None) => false,
    };

    let criterion = match (args.criterion.as_deref(), get("criterion")) {
        (Some(v), _) | (None, Some(v)) => v
            .parse()
            .map_err(|e| CliError::Usage(format!("criterion: {e}")))?,
        (None, None) => Criterion::Bic,
    };
    let mode = match (args.mode.as_deref(), get("mode")) {
        (Some(v), _) | (None, Some(v)) => v.parse()?,
        (None, None) => ModeSpec::Unconditional,
    };
    let families = match (args.families.as_deref(), get("families")) {
        (Some(v), _) | (None, Some(v)) => parse_families(v)?,
        (None, None) => Family::all().to_vec(),
    };
    let margins_spec = match (args.margins.as_deref(), get("margins")) {
        (Some(v), _) | (None, Some(v)) => v.to_string(),
        (None, None) => "norm".to_string(),
    };
    let pivot = match (args.pivot.as_deref(), get("pivot")) {
        (Some(v), _) | (None, Some(v)) => Some(parse_pivot(v)?),
        (None, None) => None,
    };

    Ok(RunConfig {
        data,
        order,
        k_max,
        criterion,
        families,
        margins_spec,
        samples,
        alpha,
        seed,
        split,
        mode,
        out,
        model,
        length,
        horizon,
        pivot,
        series,
        refine,
        plot_data,
    })
}

/// Parses the `--families` list ("all" or comma-separated family names).
fn parse_families(spec: &str) -> Result<Vec<Family>, CliError> {
    if spec == "all" {
        return Ok(Family::all().to_vec());
    }
    let mut families = Vec::new();
    for name in spec.split(',') {
        let family = name
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("families: {e}")))?;
        if !families.contains(&family) {
            families.push(family);
        }
    }
    if families.is_empty() {
        return Err(CliError::Usage("families: empty list".into()));
    }
    Ok(families)
}

/// Parses the `--pivot` list of future pivot values.
fn parse_pivot(spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("pivot: cannot parse value {tok:?}")))
        })
        .collect()
}

impl RunConfig {
    /// Margin family per series: one name broadcasts, otherwise the list
    /// must name exactly one family per series.
    pub fn margin_families(&self, m: usize) -> Result<Vec<MarginFamily>, CliError> {
        let parts: Vec<&str> = self.margins_spec.split(',').map(str::trim).collect();
        let parse = |name: &str| -> Result<MarginFamily, CliError> {
            name.parse()
                .map_err(|e| CliError::Usage(format!("margins: {e}")))
        };
        if parts.len() == 1 {
            return Ok(vec![parse(parts[0])?; m]);
        }
        if parts.len() != m {
            return Err(CliError::Usage(format!(
                "margins: expected 1 or {m} names, got {}",
                parts.len()
            )));
        }
        parts.into_iter().map(parse).collect()
    }

    /// One setting rendered for the config echo line.
    fn setting(&self, key: &str) -> String {
        fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "-".into(), T::to_string)
        }
        fn opt_path(v: &Option<PathBuf>) -> String {
            v.as_ref()
                .map_or_else(|| "-".into(), |p| p.display().to_string())
        }
        match key {
            "data" => opt_path(&self.data),
            "order" => opt(&self.order),
            "k-max" => opt(&self.k_max),
            "criterion" => self.criterion.name().into(),
            "families" => self
                .families
                .iter()
                .map(|f| f.name())
                .collect::<Vec<_>>()
                .join(","),
            "margins" => self.margins_spec.clone(),
            "samples" => self.samples.to_string(),
            "alpha" => self.alpha.to_string(),
            "seed" => self.seed.to_string(),
            "split" => opt(&self.split),
            "mode" => self.mode.name().into(),
            "out" => opt_path(&self.out),
            "model" => opt_path(&self.model),
            "length" => opt(&self.length),
            "horizon" => self.horizon.to_string(),
            "pivot" => self.pivot.as_ref().map_or_else(
                || "-".into(),
                |v| {
                    v.iter()
                        .map(f64::to_string)
                        .collect::<Vec<_>>()
                        .join(",")
                },
            ),
            "series" => opt(&self.series),
            "refine" => self.refine.to_string(),
            "plot-data" => opt_path(&self.plot_data),
            _ => unreachable!("unknown config key {key}"),
        }
    }

    /// The header every command prints: its name, the exact seed, and the
    /// resolved settings it runs with.
    pub fn header(&self, command: &str, keys: &[&str]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# command: {command}");
        let _ = writeln!(out, "# seed: {}", self.seed);
        let settings: Vec<String> = keys
            .iter()
            .map(|key| format!("{key}={}", self.setting(key)))
            .collect();
        let _ = writeln!(out, "# config: {}", settings.join(" "));
        out
    }

    /// A required setting, by flag name.
    pub fn require<T: Clone>(opt: &Option<T>, key: &str) -> Result<T, CliError> {
        opt.clone().ok_or_else(|| {
            CliError::Usage(format!("missing required setting: {key} (flag --{key} or config)"))
        })
    }
}
