//! Run options: command-line flags merged over an optional key=value file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};

/// Comma-separated reals.
#[derive(Debug, Clone, PartialEq)]
pub struct List(pub Vec<f64>);

impl FromStr for List {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("'{x}' is not a number")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl fmt::Display for List {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Brw,
    #[value(name = "phi_tilde", alias = "phi-tilde")]
    PhiTilde,
    Comparison,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Naive,
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Full,
    #[value(name = "max-only", alias = "max_only")]
    MaxOnly,
}

trait Value: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn show(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse::<$t>().map_err(|e| e.to_string())
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(u32, u64, f64, List);

impl Value for PathBuf {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok(PathBuf::from(s))
    }
    fn show(&self) -> String {
        self.display().to_string()
    }
}

macro_rules! enum_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                <$t as ValueEnum>::from_str(s, true)
            }
            fn show(&self) -> String {
                self.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default()
            }
        }
    )*};
}

enum_value!(Model, Method, Format, Mode);

macro_rules! options {
    ($( $(#[$doc:meta])* $field:ident : $t:ty => $key:literal ),* $(,)?) => {
        /// Flags shared by every subcommand. Each can also be set in the
        /// `--config` file under the same name.
        #[derive(Debug, Clone, Default, Args)]
        pub struct Options {
            $( $(#[$doc])* #[arg(long = $key, global = true)] pub $field: Option<$t>, )*
            /// key=value file of defaults; command-line flags take precedence.
            #[arg(long, global = true)]
            pub config: Option<PathBuf>,
        }

        impl Options {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets `key` from text unless the flag is already set.
            fn fill(&mut self, key: &str, value: &str) -> Result<(), String> {
                match key {
                    $( $key => {
                        if self.$field.is_none() {
                            self.$field = Some(<$t as Value>::parse_value(value)?);
                        }
                        Ok(())
                    } )*
                    _ => Err(format!("unknown key '{key}'; valid keys: {}", Self::KEYS.join(", "))),
                }
            }

            /// Every set option as text, keyed by flag name.
            pub fn snapshot(&self) -> BTreeMap<String, String> {
                let mut m = BTreeMap::new();
                $( if let Some(v) = &self.$field { m.insert($key.to_owned(), v.show()); } )*
                m
            }
        }
    };
}

options! {
    /// Branching factor
    d: u32 => "d",
    /// Tree height
    n: u32 => "n",
    /// Subtree height of the comparison field
    n_prime: u32 => "n-prime",
    /// Monte Carlo draws
    samples: u64 => "samples",
    /// Master seed [default: 20190417]
    seed: u64 => "seed",
    /// Independent random streams; results depend on this count [default: 1]
    shards: u32 => "shards",
    /// brw, phi_tilde or comparison
    model: Model => "model",
    /// naive or conditional
    method: Method => "method",
    /// full or max-only
    mode: Mode => "mode",
    /// Left-tail shift(s), comma separated
    lambda: List => "lambda",
    /// Mean shift of the tilted top-level draws
    tilt: f64 => "tilt",
    /// Threshold grid, comma separated
    thresholds: List => "thresholds",
    /// Result file; the manifest is written next to it
    out: PathBuf => "out",
    /// jsonl or csv
    format: Format => "format",
    /// Positivity lower-bound prefactor
    k1: f64 => "k1",
    /// Positivity upper-bound prefactor
    k2: f64 => "k2",
    /// Positivity lower-bound linear rate
    k3: f64 => "k3",
    /// Left-tail upper-bound prefactor C'
    cp: f64 => "cp",
    /// Left-tail upper-bound rate C''; also fixes lambda'
    cpp: f64 => "cpp",
    /// Left-tail lower-bound prefactor K'
    kp: f64 => "kp",
    /// Left-tail lower-bound rate K''
    kpp: f64 => "kpp",
    /// Comparison-field tail rate c*
    c_star: f64 => "c-star",
    /// Proof constant p-bar, recorded with the bounds
    p_bar: f64 => "p-bar",
    /// Proof constant a-bar, recorded with the bounds
    a_bar: f64 => "a-bar",
    /// Use this shift instead of solving for it
    lambda_prime: f64 => "lambda-prime",
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key=value, got '{}'", i + 1, raw.trim()))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            bail!("config line {}: expected key=value, got '{}'", i + 1, raw.trim());
        }
        out.push((key.replace('_', "-"), value.to_owned()));
    }
    Ok(out)
}

impl Options {
    /// Fills unset flags from the config file, if any.
    pub fn merge_config(&mut self) -> Result<()> {
        let Some(path) = self.config.clone() else {
            return Ok(());
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
        self.merge_text(&text, &path)
    }

    fn merge_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (key, value) in parse_config(text).with_context(|| format!("in {}", path.display()))? {
            self.fill(&key, &value).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let mut o = Options { n: Some(14), ..Default::default() };
        o.merge_text("d = 2\nn=12 # comment\n\n", Path::new("x")).unwrap();
        assert_eq!((o.d, o.n), (Some(2), Some(14)));
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = Options::default().merge_text("dd=2", Path::new("x")).unwrap_err().to_string();
        assert!(err.contains("'dd'") && err.contains("n-prime"), "{err}");
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = Options::default().merge_text("d=2\nnonsense\n", Path::new("x")).unwrap_err();
        assert!(format!("{err:#}").contains("line 2"), "{err:#}");
    }

    #[test]
    fn enum_and_list_values() {
        let mut o = Options::default();
        o.merge_text("model=phi_tilde\nthresholds=1,2.5\nmode=max-only\nn_prime=3", Path::new("x")).unwrap();
        assert_eq!(o.model, Some(Model::PhiTilde));
        assert_eq!(o.thresholds, Some(List(vec![1.0, 2.5])));
        assert_eq!(o.n_prime, Some(3));
        assert_eq!(o.snapshot()["model"], "phi_tilde");
    }
}
