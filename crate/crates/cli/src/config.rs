//! Run configuration: command-line flags over a JSON config file over defaults.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use hexpepo_core::pauli::{observable_library, parse_observable, LIBRARY_NAMES};
use hexpepo_core::tensor::DEFAULT_MEMORY_CAP;
use hexpepo_core::{Lattice, PauliSum, TruncationPolicy};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pepo,
    Cet,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Flags of `hexpepo run`. Every field is optional so that unset flags fall
/// through to the config file.
#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// JSON file with any of the options below (flags take precedence).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// `ibm127`, `patch:RxC`, or a lattice JSON file.
    #[arg(long)]
    pub lattice: Option<String>,

    /// θ values in units of π: `start:stop:count` grids and/or single values,
    /// comma-separated (e.g. `0:0.5:17`).
    #[arg(long)]
    pub theta: Option<String>,

    /// Trotter steps.
    #[arg(long)]
    pub steps: Option<usize>,

    /// Append one more R_X layer after the last step.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub extra_rx: Option<bool>,

    /// Library name (Z62, W10, W17, W17tilde) or a spec like `X13,29;Y9;Z8`.
    #[arg(long)]
    pub observable: Option<String>,

    #[arg(long, value_enum)]
    pub method: Option<Method>,

    /// PEPO bond dimension.
    #[arg(long)]
    pub chi: Option<usize>,

    /// PEPO relative singular-value cutoff.
    #[arg(long)]
    pub eps: Option<f64>,

    /// CET: keep strings of perturbative order ≤ k.
    #[arg(long)]
    pub trunc_order: Option<u32>,

    /// CET: keep the m largest-|coeff| strings after every layer.
    #[arg(long)]
    pub trunc_terms: Option<usize>,

    /// CET: drop strings with |coeff| below this threshold.
    #[arg(long)]
    pub trunc_coeff: Option<f64>,

    /// Output file (stdout if omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub format: Option<Format>,

    /// Worker threads for the θ grid (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,

    /// Memory cap for the PEPO contraction, e.g. `8G`, `512M` or bytes.
    #[arg(long)]
    pub mem_cap: Option<String>,

    /// Reserved; no engine is randomized.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    /// Fills unset fields from `other`.
    fn or(self, other: RunArgs) -> RunArgs {
        RunArgs {
            config: self.config,
            lattice: self.lattice.or(other.lattice),
            theta: self.theta.or(other.theta),
            steps: self.steps.or(other.steps),
            extra_rx: self.extra_rx.or(other.extra_rx),
            observable: self.observable.or(other.observable),
            method: self.method.or(other.method),
            chi: self.chi.or(other.chi),
            eps: self.eps.or(other.eps),
            trunc_order: self.trunc_order.or(other.trunc_order),
            trunc_terms: self.trunc_terms.or(other.trunc_terms),
            trunc_coeff: self.trunc_coeff.or(other.trunc_coeff),
            output: self.output.or(other.output),
            format: self.format.or(other.format),
            workers: self.workers.or(other.workers),
            mem_cap: self.mem_cap.or(other.mem_cap),
            seed: self.seed.or(other.seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MethodConfig {
    Pepo { chi: usize, eps: f64, mem_cap: usize },
    Cet { policy: TruncationPolicy },
    Oracle,
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Pepo { .. } => "pepo",
            MethodConfig::Cet { .. } => "cet",
            MethodConfig::Oracle => "oracle",
        }
    }

    /// The `param` column of the results table.
    pub fn param(&self) -> String {
        match self {
            MethodConfig::Pepo { chi, eps, .. } => format!("chi={chi};eps={eps}"),
            MethodConfig::Cet { policy } => policy.describe(),
            MethodConfig::Oracle => "statevector".into(),
        }
    }
}

/// A fully resolved, validated run.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub lattice: String,
    pub thetas: Vec<f64>,
    pub steps: usize,
    pub extra_rx: bool,
    pub observable: String,
    pub method: MethodConfig,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

pub fn resolve(args: RunArgs) -> Result<RunConfig> {
    let args = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: RunArgs =
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            args.or(file)
        }
        None => args,
    };

    let method = match args.method.unwrap_or(Method::Pepo) {
        Method::Pepo => {
            let chi = args.chi.unwrap_or(8);
            ensure!(chi >= 1, "--chi must be at least 1");
            let eps = args.eps.unwrap_or(0.0);
            ensure!(eps.is_finite() && eps >= 0.0, "--eps must be a finite non-negative number");
            let mem_cap = match &args.mem_cap {
                Some(s) => parse_bytes(s)?,
                None => DEFAULT_MEMORY_CAP,
            };
            MethodConfig::Pepo { chi, eps, mem_cap }
        }
        Method::Cet => {
            let set = [args.trunc_order.is_some(), args.trunc_terms.is_some(), args.trunc_coeff.is_some()];
            ensure!(
                set.iter().filter(|&&b| b).count() <= 1,
                "at most one of --trunc-order, --trunc-terms, --trunc-coeff"
            );
            let policy = if let Some(k) = args.trunc_order {
                TruncationPolicy::MaxOrder(k)
            } else if let Some(m) = args.trunc_terms {
                TruncationPolicy::MaxTerms(m)
            } else if let Some(e) = args.trunc_coeff {
                TruncationPolicy::CoeffThreshold(e)
            } else {
                TruncationPolicy::None
            };
            policy.validate()?;
            MethodConfig::Cet { policy }
        }
        Method::Oracle => MethodConfig::Oracle,
    };
    if let Some(w) = args.workers {
        ensure!(w >= 1, "--workers must be at least 1");
    }

    Ok(RunConfig {
        lattice: args.lattice.unwrap_or_else(|| "ibm127".into()),
        thetas: parse_thetas(args.theta.as_deref().unwrap_or("0:0.5:17"))?,
        steps: args.steps.unwrap_or(4),
        extra_rx: args.extra_rx.unwrap_or(false),
        observable: args.observable.unwrap_or_else(|| "Z62".into()),
        method,
        output: args.output,
        format: args.format.unwrap_or(Format::Csv),
        workers: args.workers,
        seed: args.seed,
    })
}

/// Parses comma-separated `start:stop:count` grids or single values, all in
/// units of π, into radians.
pub fn parse_thetas(spec: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        let num = |s: &str| -> Result<f64> {
            let x: f64 = s.trim().parse().with_context(|| format!("bad θ value `{s}`"))?;
            ensure!(x.is_finite(), "θ must be finite, got `{s}`");
            Ok(x)
        };
        match parts.as_slice() {
            [x] => out.push(num(x)? * PI),
            [a, b, n] => {
                let (a, b) = (num(a)?, num(b)?);
                let n: usize = n.trim().parse().with_context(|| format!("bad grid count in `{item}`"))?;
                ensure!(n >= 1, "grid `{item}` needs at least one point");
                if n == 1 {
                    out.push(a * PI);
                } else {
                    out.extend((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64) * PI));
                }
            }
            _ => bail!("θ item `{item}` is neither a value nor start:stop:count"),
        }
    }
    ensure!(!out.is_empty(), "empty θ specification");
    Ok(out)
}

/// `1024`, `64K`, `512M`, `8G` (binary units).
pub fn parse_bytes(s: &str) -> Result<usize> {
    let s = s.trim();
    let (digits, shift) = match s.chars().last() {
        Some('K' | 'k') => (&s[..s.len() - 1], 10),
        Some('M' | 'm') => (&s[..s.len() - 1], 20),
        Some('G' | 'g') => (&s[..s.len() - 1], 30),
        _ => (s, 0),
    };
    let n: usize = digits.parse().with_context(|| format!("bad memory size `{s}`"))?;
    n.checked_shl(shift)
        .filter(|v| v >> shift == n)
        .with_context(|| format!("memory size `{s}` overflows"))
}

pub fn load_lattice(spec: &str) -> Result<Lattice> {
    if spec == "ibm127" {
        return Ok(Lattice::ibm127()?);
    }
    if let Some(dims) = spec.strip_prefix("patch:") {
        let (r, c) = dims
            .split_once(['x', 'X'])
            .with_context(|| format!("patch size `{dims}` must be RxC"))?;
        let r: usize = r.parse().with_context(|| format!("bad patch rows `{r}`"))?;
        let c: usize = c.parse().with_context(|| format!("bad patch cols `{c}`"))?;
        return Ok(Lattice::patch(r, c)?);
    }
    let path = Path::new(spec);
    ensure!(path.exists(), "lattice `{spec}` is not ibm127, patch:RxC, or an existing file");
    Ok(Lattice::from_json_file(path)?)
}

pub fn load_observable(spec: &str) -> Result<PauliSum> {
    if LIBRARY_NAMES.contains(&spec) {
        return Ok(observable_library(spec)?);
    }
    Ok(parse_observable(spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_grid_in_units_of_pi() {
        let t = parse_thetas("0:0.5:17").unwrap();
        assert_eq!(t.len(), 17);
        assert_eq!(t[0], 0.0);
        assert!((t[16] - PI / 2.0).abs() < 1e-15);
        assert!((t[8] - PI / 4.0).abs() < 1e-15);
        assert_eq!(parse_thetas("0.25, 0:1:1").unwrap(), vec![PI / 4.0, 0.0]);
        for bad in ["", "a", "0:1", "0:1:0", "nan", "0:inf:3"] {
            assert!(parse_thetas(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn byte_sizes() {
        assert_eq!(parse_bytes("1024").unwrap(), 1024);
        assert_eq!(parse_bytes("2K").unwrap(), 2048);
        assert_eq!(parse_bytes("8G").unwrap(), 8 << 30);
        assert!(parse_bytes("x").is_err());
        assert!(parse_bytes(&format!("{}G", usize::MAX)).is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = std::env::temp_dir().join(format!("hexpepo-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"steps": 7, "chi": 3, "observable": "W10", "method": "pepo"}"#).unwrap();
        let args = RunArgs {
            config: Some(path),
            chi: Some(5),
            ..Default::default()
        };
        let cfg = resolve(args).unwrap();
        assert_eq!(cfg.steps, 7);
        assert_eq!(cfg.observable, "W10");
        assert!(matches!(cfg.method, MethodConfig::Pepo { chi: 5, .. }));
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(serde_json::from_str::<RunArgs>(r#"{"chii": 3}"#).is_err());
    }

    #[test]
    fn one_truncation_policy_at_most() {
        let args = RunArgs {
            method: Some(Method::Cet),
            trunc_order: Some(3),
            trunc_terms: Some(10),
            ..Default::default()
        };
        assert!(resolve(args).is_err());
    }

    #[test]
    fn lattice_specs() {
        assert_eq!(load_lattice("patch:1x2").unwrap().num_sites(), 21);
        assert_eq!(load_lattice("ibm127").unwrap().num_sites(), 127);
        assert!(load_lattice("patch:1").is_err());
        assert!(load_lattice("/nonexistent.json").is_err());
    }
}
