//! Run configuration: every command line resolves to a [`RunConfig`], which can be
//! written out with `--print-config` and replayed with `normsol run --config FILE`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Subcommand, ValueEnum};
use normsol_core::constants::{a0, mass_at_abar_multiple, SharpConstants};
use normsol_core::minimize::MinimizeOptions;
use normsol_core::{Error, GridSpec, ProblemParams, Result};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// A mass given directly or relative to a threshold.
///
/// Text forms: `2.5`, `auto-a0` (= `1a0`), `0.5a0`, `2abar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MassSpec {
    Value(f64),
    /// Multiple of `a₀` (subcritical `q`).
    A0(f64),
    /// The mass with `μa^{q(1−γ_q)/2} = k·ā_N` (critical `q`).
    Abar(f64),
}

impl MassSpec {
    pub fn resolve(&self, dim: usize, q: f64, mu: f64) -> Result<f64> {
        let base = ProblemParams::new(dim, q, mu, 1.0)?;
        match *self {
            MassSpec::Value(a) => Ok(a),
            MassSpec::A0(k) => {
                let c = SharpConstants::compute(&base)?;
                Ok(k * a0(&base, &c)?)
            }
            MassSpec::Abar(k) => {
                let c = SharpConstants::compute(&base)?;
                mass_at_abar_multiple(&base, &c, k)
            }
        }
    }
}

impl FromStr for MassSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let number = |t: &str| t.parse::<f64>().map_err(|_| format!("cannot parse mass `{s}`"));
        if s == "auto-a0" {
            return Ok(MassSpec::A0(1.0));
        }
        if let Some(k) = s.strip_suffix("abar") {
            return Ok(MassSpec::Abar(if k.is_empty() { 1.0 } else { number(k)? }));
        }
        if let Some(k) = s.strip_suffix("a0") {
            return Ok(MassSpec::A0(if k.is_empty() { 1.0 } else { number(k)? }));
        }
        Ok(MassSpec::Value(number(s)?))
    }
}

impl fmt::Display for MassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MassSpec::Value(a) => write!(f, "{a:?}"),
            MassSpec::A0(k) => write!(f, "{k:?}a0"),
            MassSpec::Abar(k) => write!(f, "{k:?}abar"),
        }
    }
}

impl TryFrom<String> for MassSpec {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<MassSpec> for String {
    fn from(m: MassSpec) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ProblemArgs {
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    /// Subcritical exponent; defaults to the L²-critical `2 + 4/N`.
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Mass: a number, `auto-a0`, `<k>a0` or `<k>abar`.
    #[arg(long)]
    pub a: Option<MassSpec>,
    /// Shorthand for `--a <k>abar`.
    #[arg(long, conflicts_with = "a")]
    pub mass_multiple: Option<f64>,
}

impl ProblemArgs {
    pub fn q(&self) -> f64 {
        self.q.unwrap_or(2.0 + 4.0 / self.dim as f64)
    }

    pub fn mass_spec(&self) -> Option<MassSpec> {
        self.a.or(self.mass_multiple.map(MassSpec::Abar))
    }

    /// Parameters with the mass resolved; `fallback` is used when no mass was given.
    pub fn resolve(&self, fallback: Option<f64>) -> Result<ProblemParams> {
        let q = self.q();
        let a = match (self.mass_spec(), fallback) {
            (Some(m), _) => m.resolve(self.dim, q, self.mu)?,
            (None, Some(a)) => a,
            (None, None) => return Err(Error::InvalidParameter("a mass is required (--a or --mass-multiple)".into())),
        };
        ProblemParams::new(self.dim, q, self.mu, a)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub stretch: f64,
}

impl GridArgs {
    pub fn spec(&self, dim: usize, r_max: f64, n: usize) -> GridSpec {
        GridSpec { dim, r_max: self.r_max.unwrap_or(r_max), n: self.grid_n.unwrap_or(n), stretch: self.stretch }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    /// Stationarity tolerance of the minimizer.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iterations: usize,
}

impl SolverArgs {
    pub fn options(&self) -> MinimizeOptions {
        MinimizeOptions { tol: self.tol, max_iterations: self.max_iterations, ..MinimizeOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    #[arg(long, conflicts_with = "csv")]
    pub json: bool,
    #[arg(long)]
    pub csv: bool,
    /// Write the document here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl OutputArgs {
    pub fn format(&self, default: Format) -> Format {
        if self.csv {
            Format::Csv
        } else if self.json {
            Format::Json
        } else {
            default
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Weinstein,
    Bubble,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Gaussian,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Probe {
    None,
    Stability,
    Blowup,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ConstantsCmd {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ProfileCmd {
    #[arg(long, value_enum)]
    pub kind: ProfileKind,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Gaussian width.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Bubble concentration parameter.
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FiberCmd {
    /// Profile JSON, or CSV with `r,value` rows resampled onto the grid.
    #[arg(long)]
    pub profile: PathBuf,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Rescale the profile to the requested mass first.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value_t = normsol_core::functionals::FIBER_SAMPLES)]
    pub samples: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MinimizeCmd {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = InitKind::Gaussian)]
    pub init_kind: InitKind,
    /// Start from this profile instead.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also run the boundary scan with this many samples.
    #[arg(long, default_value_t = 0)]
    pub boundary_samples: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SubaddCmd {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub a1: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MountainPassCmd {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0.5)]
    pub bubble_width: f64,
    #[arg(long, default_value_t = 2.0)]
    pub s_max: f64,
    #[arg(long, default_value_t = 64)]
    pub members: usize,
    /// Descent iterations on the projected energy; 0 disables refinement.
    #[arg(long, default_value_t = 3000)]
    pub refine_iterations: usize,
    /// Random trials of the positivity probe (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub probe_trials: usize,
    #[arg(long, default_value_t = 200)]
    pub probe_descent: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the witness profile here.
    #[arg(long)]
    pub witness_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CpoCmd {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub case: u8,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Sequence length: `n = 5·2^k` (case 1) or `A = 10^{−k−1}` (case 2).
    #[arg(long, default_value_t = 4)]
    pub steps: usize,
    #[arg(long, default_value_t = normsol_core::mountainpass::CASE1_SPREAD)]
    pub spread: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvolveCmd {
    #[arg(long)]
    pub init: PathBuf,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sample_interval: f64,
    #[arg(long, value_enum, default_value_t = Probe::None)]
    pub probe: Probe,
    #[arg(long, default_value_t = 1e-2, allow_negative_numbers = true)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.05)]
    pub amp: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepCmd {
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long)]
    pub q: Option<f64>,
    /// Comma-separated coupling values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub mu_values: Vec<f64>,
    /// Comma-separated masses (each may be relative, e.g. `0.5a0`).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub a_values: Vec<MassSpec>,
    /// Compute `m_a` where a minimizer exists.
    #[arg(long)]
    pub minimize: bool,
    /// Also estimate the mountain-pass level (implies `--minimize`).
    #[arg(long)]
    pub mountain_pass: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Sharp constants, thresholds and the regime.
    Constants(ConstantsCmd),
    /// Write a Weinstein, bubble or Gaussian profile.
    Profile(ProfileCmd),
    /// Critical points of the fiber map of a profile.
    Fiber(FiberCmd),
    /// Local minimizer on the ball `‖∇u‖² < ρ₀`.
    Minimize(MinimizeCmd),
    /// Strict subadditivity check `m_a < m_{a1} + m_{a−a1}`.
    Subadd(SubaddCmd),
    /// Mountain-pass level estimate and witness.
    MountainPass(MountainPassCmd),
    /// Minimizing sequences on the Pohozaev manifold at critical `q`.
    Cpo(CpoCmd),
    /// Time evolution with optional stability or blow-up probe.
    Evolve(EvolveCmd),
    /// Regime atlas over a (μ, a) grid, as CSV.
    Sweep(SweepCmd),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Constants(_) => "constants",
            Command::Profile(_) => "profile",
            Command::Fiber(_) => "fiber",
            Command::Minimize(_) => "minimize",
            Command::Subadd(_) => "subadd",
            Command::MountainPass(_) => "mountain-pass",
            Command::Cpo(_) => "cpo",
            Command::Evolve(_) => "evolve",
            Command::Sweep(_) => "sweep",
        }
    }

    pub fn output(&self) -> &OutputArgs {
        match self {
            Command::Constants(c) => &c.output,
            Command::Profile(c) => &c.output,
            Command::Fiber(c) => &c.output,
            Command::Minimize(c) => &c.output,
            Command::Subadd(c) => &c.output,
            Command::MountainPass(c) => &c.output,
            Command::Cpo(c) => &c.output,
            Command::Evolve(c) => &c.output,
            Command::Sweep(c) => &c.output,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(flatten)]
    pub command: Command,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self { schema_version: SCHEMA_VERSION, command }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported schema_version {}", cfg.schema_version)));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Cli;
    use clap::Parser;

    fn parse(args: &[&str]) -> Command {
        let mut full = vec!["normsol"];
        full.extend_from_slice(args);
        match Cli::try_parse_from(full).unwrap().command {
            crate::Top::Run(_) => panic!("expected a direct command"),
            crate::Top::Direct(c) => c,
        }
    }

    #[test]
    fn mass_spec_text_forms() {
        assert_eq!("auto-a0".parse::<MassSpec>().unwrap(), MassSpec::A0(1.0));
        assert_eq!("0.5a0".parse::<MassSpec>().unwrap(), MassSpec::A0(0.5));
        assert_eq!("2abar".parse::<MassSpec>().unwrap(), MassSpec::Abar(2.0));
        assert_eq!("3.25".parse::<MassSpec>().unwrap(), MassSpec::Value(3.25));
        assert!("x1".parse::<MassSpec>().is_err());
        for m in [MassSpec::Value(0.1 + 0.2), MassSpec::A0(1.0 / 3.0), MassSpec::Abar(2.0)] {
            assert_eq!(m.to_string().parse::<MassSpec>().unwrap(), m);
        }
    }

    #[test]
    fn run_config_round_trips() {
        let commands = [
            parse(&["constants", "--dim", "3", "--q", "2.5", "--mu", "1", "--a", "auto-a0", "--json"]),
            parse(&["minimize", "--a", "0.3333333333333333", "--tol", "1e-9", "--seed", "5", "--r-max", "40"]),
            parse(&["cpo", "--case", "2", "--dim", "4", "--mass-multiple", "2", "--steps", "3"]),
            parse(&["evolve", "--init", "u.json", "--probe", "stability", "--eps", "-0.01", "--csv"]),
            parse(&["sweep", "--mu-values", "0.5,1", "--a-values", "1,0.5a0", "--minimize"]),
        ];
        for c in commands {
            let cfg = RunConfig::new(c);
            let text = cfg.to_json().unwrap();
            assert!(text.contains("\"schema_version\": 1"));
            assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn mass_multiple_means_abar_multiple() {
        let c = parse(&["cpo", "--case", "1", "--dim", "4", "--mass-multiple", "1.5"]);
        let Command::Cpo(c) = c else { panic!() };
        assert_eq!(c.problem.mass_spec(), Some(MassSpec::Abar(1.5)));
        assert_eq!(c.problem.q(), 3.0);
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let cfg = RunConfig::new(parse(&["constants", "--dim", "4"]));
        let text = cfg.to_json().unwrap().replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(RunConfig::from_json(&text), Err(Error::Format(_))));
    }
}
