//! Run configuration: an optional JSON file merged with command-line overrides.

use std::path::{Path, PathBuf};

use lattice_gibbs::mimo::{DetectorKind, MIMO_RETRY_CAP};
use lattice_gibbs::{BoxSpec, KernelKind, LatticeBasis, DEFAULT_RETRY_CAP};
use serde::Deserialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Pinned reference bases, given as rows of `B`.
pub fn builtin_basis(name: &str) -> Option<LatticeBasis> {
    let rows: Vec<Vec<f64>> = match name {
        "1d" => vec![vec![1.0]],
        "2d" => vec![vec![1.0, 0.5], vec![0.0, 1.1]],
        "3d" => vec![vec![1.0, 0.5, 0.25], vec![0.0, 1.1, 0.5], vec![0.0, 0.0, 1.2]],
        _ => return None,
    };
    Some(LatticeBasis::from_rows(&rows).expect("builtin bases are full rank"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BasisSource {
    Named(String),
    Rows { rows: Vec<Vec<f64>> },
}

/// Sampler selection in a config file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    Klein,
    Gibbs,
    Mwg,
    Gk {
        m: usize,
    },
    Pt {
        temps: Vec<f64>,
        #[serde(default = "one")]
        swap_stride: u64,
        #[serde(default = "mwg")]
        base: String,
    },
}

fn one() -> u64 {
    1
}

fn mwg() -> String {
    "mwg".into()
}

/// Contents of a `--config` file. Every field is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub version: Option<u32>,
    pub command: Option<String>,
    /// A builtin name (`1d`, `2d`, `3d`), a path to a basis file, or `{"rows": ...}`.
    pub basis: Option<BasisSource>,
    pub center: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub sampler: Option<SamplerSpec>,
    pub samplers: Option<Vec<String>>,
    pub scan: Option<Vec<f64>>,
    pub tail_factor: Option<f64>,
    pub retry_cap: Option<u32>,
    pub iterations: Option<Vec<u64>>,
    pub burn_in: Option<u64>,
    pub thin: Option<u64>,
    pub seed: Option<u64>,
    pub x0: Option<Vec<i64>>,
    #[serde(rename = "box")]
    pub bx: Option<Vec<(i64, i64)>>,
    pub epsilon: Option<f64>,
    pub t_max: Option<u64>,
    pub n: Option<usize>,
    pub qam: Option<u32>,
    pub snr_db: Option<Vec<f64>>,
    pub trials: Option<u64>,
    pub detectors: Option<Vec<DetectorKind>>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: FileConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        match cfg.version {
            Some(SCHEMA_VERSION) => Ok(cfg),
            Some(v) => Err(CliError::Config(format!("unsupported config version {v}"))),
            None => Err(CliError::Config("config file needs \"version\": 1".into())),
        }
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Builtin basis name (1d, 2d, 3d) or a path to a basis file.
    #[arg(long)]
    pub basis: Option<String>,
    /// Comma-separated center coordinates.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    /// klein, gibbs, mwg, gk, gk<m>, pt; a comma-separated list for diagnose and mimo.
    #[arg(long, value_delimiter = ',')]
    pub sampler: Option<Vec<String>>,
    /// Block size for gk.
    #[arg(long)]
    pub m: Option<usize>,
    /// Tempering ladder, comma-separated, starting at 1.
    #[arg(long, value_delimiter = ',')]
    pub temps: Option<Vec<f64>>,
    #[arg(long)]
    pub swap_stride: Option<u64>,
    /// Iteration count; a comma-separated list for mimo.
    #[arg(long, value_delimiter = ',')]
    pub iterations: Option<Vec<u64>>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub thin: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated starting coefficients.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<i64>>,
    /// `R` for [-R, R] on every axis, or `lo:hi,lo:hi,...`.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub bx: Option<String>,
    #[arg(long)]
    pub tail_factor: Option<f64>,
    #[arg(long)]
    pub retry_cap: Option<u32>,
    /// Mixing-time threshold for diagnose.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Length of the diagnose decay curves.
    #[arg(long)]
    pub t_max: Option<u64>,
    /// MIMO size.
    #[arg(long)]
    pub n: Option<usize>,
    /// QAM order (4, 16 or 64).
    #[arg(long)]
    pub qam: Option<u32>,
    /// Comma-separated E_b/N_0 values in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

fn parse_box(text: &str, dim: usize) -> Result<BoxSpec, CliError> {
    let bad = || CliError::Config(format!("cannot parse box {text:?}"));
    let text = text.trim();
    let spec = if let Ok(r) = text.parse::<i64>() {
        if r < 0 {
            return Err(bad());
        }
        BoxSpec::symmetric(dim, r)
    } else {
        let bounds = text
            .split(',')
            .map(|part| {
                let (lo, hi) = part.split_once(':').ok_or_else(bad)?;
                Ok((
                    lo.trim().parse().map_err(|_| bad())?,
                    hi.trim().parse().map_err(|_| bad())?,
                ))
            })
            .collect::<Result<Vec<(i64, i64)>, CliError>>()?;
        BoxSpec::new(bounds)
    };
    spec.map_err(|e| CliError::Config(e.to_string()))
}

fn load_basis(source: &BasisSource) -> Result<LatticeBasis, CliError> {
    match source {
        BasisSource::Rows { rows } => LatticeBasis::from_rows(rows).map_err(CliError::config),
        BasisSource::Named(name) => {
            if let Some(b) = builtin_basis(name) {
                return Ok(b);
            }
            let text = std::fs::read_to_string(name)
                .map_err(|e| CliError::Config(format!("unknown builtin basis or unreadable file {name:?}: {e}")))?;
            LatticeBasis::parse(&text).map_err(CliError::config)
        }
    }
}

/// Parses `gibbs`, `mwg`, `gk`, `gk<m>`.
pub fn parse_kernel_kind(label: &str, m: Option<usize>) -> Result<KernelKind, CliError> {
    match label {
        "gibbs" => Ok(KernelKind::Gibbs),
        "mwg" => Ok(KernelKind::Mwg),
        "gk" => Ok(KernelKind::Gk {
            m: m.ok_or_else(|| CliError::Config("gk needs --m".into()))?,
        }),
        other => other
            .strip_prefix("gk")
            .and_then(|d| d.parse().ok())
            .map(|m| KernelKind::Gk { m })
            .ok_or_else(|| CliError::Config(format!("unknown sampler {other:?}"))),
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub basis: LatticeBasis,
    pub center: Vec<f64>,
    pub sigma: f64,
    /// Sigma given explicitly by a flag or the config file.
    pub sigma_override: Option<f64>,
    pub samplers: Vec<String>,
    pub m: Option<usize>,
    pub temps: Vec<f64>,
    pub swap_stride: u64,
    pub pt_base: String,
    pub scan: Option<Vec<f64>>,
    pub tail_factor: f64,
    pub retry_cap: Option<u32>,
    pub iterations: Vec<u64>,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub x0: Option<Vec<i64>>,
    pub bx: Option<BoxSpec>,
    pub epsilon: Option<f64>,
    pub t_max: u64,
    pub n: usize,
    pub qam: u32,
    pub snr_db: Vec<f64>,
    pub trials: u64,
    pub detectors: Option<Vec<DetectorKind>>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Resolved {
    pub fn from_sources(command: &str, o: &Overrides) -> Result<Self, CliError> {
        let file = match &o.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        if let Some(c) = &file.command {
            if c != command {
                return Err(CliError::Config(format!("config is for {c:?}, not {command:?}")));
            }
        }
        let basis_source = match &o.basis {
            Some(b) => BasisSource::Named(b.clone()),
            None => file.basis.clone().unwrap_or(BasisSource::Named("2d".into())),
        };
        let basis = load_basis(&basis_source)?;
        let dim = basis.dim();
        let center = o
            .center
            .clone()
            .or(file.center.clone())
            .unwrap_or_else(|| vec![0.0; dim]);
        if center.len() != dim {
            return Err(CliError::Config(format!(
                "center has {} entries, basis has dimension {dim}",
                center.len()
            )));
        }
        let sigma_override = o.sigma.or(file.sigma);
        let sigma = sigma_override.unwrap_or(1.0);
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CliError::Config(format!("sigma must be positive, got {sigma}")));
        }
        let (mut temps, mut swap_stride, mut pt_base) = (vec![1.0, 2.0], 1, "mwg".to_string());
        let mut m = o.m;
        let samplers = match (&o.sampler, &file.sampler, &file.samplers) {
            (Some(s), _, _) => s.clone(),
            (None, Some(spec), _) => vec![match spec {
                SamplerSpec::Klein => "klein".into(),
                SamplerSpec::Gibbs => "gibbs".into(),
                SamplerSpec::Mwg => "mwg".into(),
                SamplerSpec::Gk { m: bm } => {
                    m = m.or(Some(*bm));
                    "gk".into()
                }
                SamplerSpec::Pt {
                    temps: t,
                    swap_stride: s,
                    base,
                } => {
                    temps = t.clone();
                    swap_stride = *s;
                    pt_base = base.clone();
                    "pt".into()
                }
            }],
            (None, None, Some(list)) => list.clone(),
            (None, None, None) => Vec::new(),
        };
        if let Some(t) = &o.temps {
            temps = t.clone();
        }
        if let Some(s) = o.swap_stride {
            swap_stride = s;
        }
        let bx = match (&o.bx, &file.bx) {
            (Some(text), _) => Some(parse_box(text, dim)?),
            (None, Some(bounds)) => Some(BoxSpec::new(bounds.clone()).map_err(CliError::config)?),
            (None, None) => None,
        };
        if let Some(b) = &bx {
            if b.dim() != dim {
                return Err(CliError::Config(format!(
                    "box has {} axes, basis has dimension {dim}",
                    b.dim()
                )));
            }
        }
        let tail_factor = o
            .tail_factor
            .or(file.tail_factor)
            .unwrap_or(lattice_gibbs::lattice::DEFAULT_TAIL_FACTOR);
        if tail_factor.is_nan() || tail_factor <= 0.0 {
            return Err(CliError::Config("tail_factor must be positive".into()));
        }
        let epsilon = o.epsilon.or(file.epsilon);
        if let Some(e) = epsilon {
            if !(e > 0.0 && e < 1.0) {
                return Err(CliError::Config(format!("epsilon must lie in (0, 1), got {e}")));
            }
        }
        let thin = o.thin.or(file.thin).unwrap_or(1);
        if thin == 0 {
            return Err(CliError::Config("thin must be at least 1".into()));
        }
        let t_max = o.t_max.or(file.t_max).unwrap_or(100);
        if t_max > 10_000 {
            return Err(CliError::Config("t_max must be at most 10000".into()));
        }
        Ok(Self {
            basis,
            center,
            sigma,
            sigma_override,
            samplers,
            m,
            temps,
            swap_stride,
            pt_base,
            scan: file.scan.clone(),
            tail_factor,
            retry_cap: o.retry_cap.or(file.retry_cap),
            iterations: o.iterations.clone().or(file.iterations.clone()).unwrap_or_default(),
            burn_in: o.burn_in.or(file.burn_in).unwrap_or(0),
            thin,
            seed: o.seed.or(file.seed).unwrap_or(1),
            x0: o.x0.clone().or(file.x0.clone()),
            bx,
            epsilon,
            t_max,
            n: o.n.or(file.n).unwrap_or(4),
            qam: o.qam.or(file.qam).unwrap_or(16),
            snr_db: o.snr.clone().or(file.snr_db.clone()).unwrap_or_else(|| vec![15.0]),
            trials: o.trials.or(file.trials).unwrap_or(1000),
            detectors: file.detectors.clone(),
            out: o.out.clone().or(file.out.clone()),
            format: o.format.or(file.format).unwrap_or(if command == "diagnose" {
                Format::Json
            } else {
                Format::Csv
            }),
        })
    }

    pub fn block_retry_cap(&self) -> u32 {
        self.retry_cap.unwrap_or(DEFAULT_RETRY_CAP)
    }

    pub fn mimo_retry_cap(&self) -> u32 {
        self.retry_cap.unwrap_or(MIMO_RETRY_CAP)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_syntax() {
        assert_eq!(parse_box("2", 2).unwrap().bounds, vec![(-2, 2), (-2, 2)]);
        assert_eq!(parse_box("-1:3, 0:0", 2).unwrap().bounds, vec![(-1, 3), (0, 0)]);
        assert!(parse_box("3:1", 1).is_err());
        assert!(parse_box("x", 1).is_err());
        assert!(parse_box("-2", 1).is_err());
    }

    #[test]
    fn kernel_labels() {
        assert_eq!(parse_kernel_kind("gk3", None).unwrap(), KernelKind::Gk { m: 3 });
        assert_eq!(parse_kernel_kind("gk", Some(2)).unwrap(), KernelKind::Gk { m: 2 });
        assert!(parse_kernel_kind("gk", None).is_err());
        assert!(parse_kernel_kind("hmc", None).is_err());
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let bad = r#"{"version": 1, "sigma": 1.0, "sigmaa": 2.0}"#;
        assert!(serde_json::from_str::<FileConfig>(bad).is_err());
        let ok = r#"{"version": 1, "basis": {"rows": [[1.0]]}, "sampler": {"kind": "gk", "m": 1}, "box": [[-2, 2]]}"#;
        let cfg: FileConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(cfg.sampler, Some(SamplerSpec::Gk { m: 1 }));
    }

    #[test]
    fn builtins_exist() {
        for (name, n) in [("1d", 1), ("2d", 2), ("3d", 3)] {
            assert_eq!(builtin_basis(name).unwrap().dim(), n);
        }
        assert!(builtin_basis("4d").is_none());
    }
}
