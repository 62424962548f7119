//! Flag / config-file merging.
//!
//! The config file is flat text, one `key = value` per line, keys spelled
//! like the long flags (`explore-len = 5,10`). `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use serde::Serialize;

use crate::args::{Common, Format, ModeArg, NicheArg, PolicyArg, SamplingArg};
use crate::error::{CliError, CliResult};

pub const DEFAULT_XIS: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 0.9, 0.99];
pub const DEFAULT_EXPLORE_SWEEP: [u64; 5] = [5, 10, 20, 40, 80];
pub const DEFAULT_TABLE1_DELTAS: [f64; 4] = [0.0, 0.9, 0.99, 0.999];
pub const DEFAULT_FIGURE34_DELTAS: [f64; 2] = [0.0, 0.999];

const KNOWN_KEYS: [&str; 20] = [
    "vp",
    "delta",
    "deltas",
    "p",
    "xi",
    "xis",
    "explore-len",
    "explore-sweep",
    "policy",
    "niche",
    "episodes",
    "seed",
    "mode",
    "user-sampling",
    "workers",
    "ci-threshold",
    "out",
    "format",
    "svg",
    "config",
];

/// Fully resolved options for one command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub vp: f64,
    pub deltas: Vec<f64>,
    pub p: f64,
    pub xis: Vec<f64>,
    pub explore_lens: Option<Vec<u64>>,
    #[serde(serialize_with = "ser_debug_lower")]
    pub policy: PolicyArg,
    #[serde(serialize_with = "ser_debug_lower")]
    pub niche: NicheArg,
    pub episodes: u64,
    pub seed: u64,
    #[serde(serialize_with = "ser_debug_lower")]
    pub mode: ModeArg,
    #[serde(serialize_with = "ser_debug_lower")]
    pub user_sampling: SamplingArg,
    pub workers: Option<usize>,
    pub ci_threshold: f64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub format: Format,
    #[serde(skip)]
    pub svg: Option<PathBuf>,
}

fn ser_debug_lower<T: ValueEnum, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    let name = v
        .to_possible_value()
        .map(|pv| pv.get_name().to_string())
        .unwrap_or_default();
    s.serialize_str(&name)
}

pub fn read_config(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::usage(format!(
                "config line {}: expected `key = value`",
                lineno + 1
            ))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::usage(format!(
                "config line {}: unknown key `{key}`",
                lineno + 1
            )));
        }
        if key == "config" {
            return Err(CliError::usage(
                "config files cannot include other config files",
            ));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn parse_scalar<T: FromStr>(key: &str, raw: &str) -> CliResult<T> {
    raw.trim()
        .parse()
        .map_err(|_| CliError::usage(format!("invalid value `{raw}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> CliResult<Vec<T>> {
    raw.split(',').map(|s| parse_scalar(key, s)).collect()
}

fn parse_enum<T: ValueEnum>(key: &str, raw: &str) -> CliResult<T> {
    T::from_str(raw.trim(), true)
        .map_err(|_| CliError::usage(format!("invalid value `{raw}` for `{key}`")))
}

fn parse_bool(key: &str, raw: &str) -> CliResult<bool> {
    match raw.trim() {
        "true" | "1" | "yes" | "" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::usage(format!(
            "invalid value `{raw}` for `{key}`"
        ))),
    }
}

struct Merge<'a> {
    file: &'a BTreeMap<String, String>,
}

impl Merge<'_> {
    fn scalar<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self
                .file
                .get(key)
                .map(|raw| parse_scalar(key, raw))
                .transpose(),
        }
    }

    fn list<T: FromStr>(&self, flag: Option<Vec<T>>, key: &str) -> CliResult<Option<Vec<T>>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self
                .file
                .get(key)
                .map(|raw| parse_list(key, raw))
                .transpose(),
        }
    }

    fn choice<T: ValueEnum>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self
                .file
                .get(key)
                .map(|raw| parse_enum(key, raw))
                .transpose(),
        }
    }
}

/// Merges flags over the config file (if any) and fills command defaults.
pub fn resolve(command: &str, flags: &Common) -> CliResult<Settings> {
    let file = match &flags.config {
        Some(path) => read_config(path)?,
        None => BTreeMap::new(),
    };
    let m = Merge { file: &file };

    // A discount given on the command line, in either spelling, replaces
    // whatever the file says about discounts.
    let deltas = match (&flags.delta, &flags.deltas) {
        (Some(d), _) => Some(vec![*d]),
        (None, Some(ds)) => Some(ds.clone()),
        (None, None) => match (file.get("delta"), file.get("deltas")) {
            (Some(_), Some(_)) => {
                return Err(CliError::usage("config sets both `delta` and `deltas`"))
            }
            (Some(raw), None) => Some(vec![parse_scalar("delta", raw)?]),
            (None, Some(raw)) => Some(parse_list("deltas", raw)?),
            (None, None) => None,
        },
    };
    let deltas = deltas.unwrap_or_else(|| match command {
        "table1" => DEFAULT_TABLE1_DELTAS.to_vec(),
        "figure34" => DEFAULT_FIGURE34_DELTAS.to_vec(),
        _ => vec![0.99],
    });

    let xis = match (&flags.xi, &flags.xis) {
        (Some(x), _) => Some(vec![*x]),
        (None, Some(xs)) => Some(xs.clone()),
        (None, None) => match file.get("xi") {
            Some(raw) => Some(vec![parse_scalar("xi", raw)?]),
            None => m.list::<f64>(None, "xis")?,
        },
    };
    let xis = xis.unwrap_or_else(|| DEFAULT_XIS.to_vec());

    let sweep = flags.explore_sweep
        || file
            .get("explore-sweep")
            .map(|raw| parse_bool("explore-sweep", raw))
            .transpose()?
            .unwrap_or(false);
    let explore_lens = match m.list(flags.explore_len.clone(), "explore-len")? {
        Some(lens) => Some(lens),
        None if sweep => Some(DEFAULT_EXPLORE_SWEEP.to_vec()),
        None => None,
    };

    let out = match &flags.out {
        Some(p) => Some(p.clone()),
        None => file.get("out").map(PathBuf::from),
    };
    let svg = match &flags.svg {
        Some(p) => Some(p.clone()),
        None => file.get("svg").map(PathBuf::from),
    };

    let settings = Settings {
        vp: m.scalar(flags.vp, "vp")?.unwrap_or(1.0),
        deltas,
        p: m.scalar(flags.p, "p")?.unwrap_or(1e-3),
        xis,
        explore_lens,
        policy: m.choice(flags.policy, "policy")?.unwrap_or(PolicyArg::Pear),
        niche: m
            .choice(flags.niche, "niche")?
            .unwrap_or(NicheArg::TwoPoint),
        episodes: m.scalar(flags.episodes, "episodes")?.unwrap_or(100_000),
        seed: m.scalar(flags.seed, "seed")?.unwrap_or(0),
        mode: m
            .choice(flags.mode, "mode")?
            .unwrap_or(ModeArg::Conditional),
        user_sampling: m
            .choice(flags.user_sampling, "user-sampling")?
            .unwrap_or(SamplingArg::Weighted),
        workers: m.scalar(flags.workers, "workers")?,
        ci_threshold: m
            .scalar(flags.ci_threshold, "ci-threshold")?
            .unwrap_or(0.01),
        out,
        format: m.choice(flags.format, "format")?.unwrap_or(Format::Csv),
        svg,
    };
    settings.check()?;
    Ok(settings)
}

impl Settings {
    fn check(&self) -> CliResult<()> {
        if self.deltas.is_empty() || self.xis.is_empty() {
            return Err(CliError::usage("lists must not be empty"));
        }
        if matches!(&self.explore_lens, Some(v) if v.is_empty()) {
            return Err(CliError::usage("--explore-len must not be empty"));
        }
        if self.episodes == 0 {
            return Err(CliError::usage("--episodes must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(CliError::usage("--workers must be at least 1"));
        }
        if self.ci_threshold.is_nan() || self.ci_threshold <= 0.0 {
            return Err(CliError::usage("--ci-threshold must be positive"));
        }
        Ok(())
    }

    /// The single discount factor of a one-delta command.
    pub fn single_delta(&self, flag: &str) -> CliResult<f64> {
        match self.deltas.as_slice() {
            [d] => Ok(*d),
            _ => Err(CliError::usage(format!(
                "`{flag}` takes exactly one discount factor"
            ))),
        }
    }
}
