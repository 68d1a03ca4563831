//! Flag parsing, the JSON config overlay, and the subcommands.

pub mod verify;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;
use theta_rmt::correlations::{evaluate, CorrelationRequest, Model};
use theta_rmt::ensembles::{partition_bures, partition_cauchy, partition_cauchy_det, EnsembleParams};
use theta_rmt::foxh::{fox_h, ContourKind, Evaluation, FoxHSpec};
use theta_rmt::kernels::{self, GridKind, GridParams, KernelGrid, KernelKind};
use theta_rmt::numerics::LogValue;
use theta_rmt::Error;

/// Exit statuses.
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NONCONVERGED: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Hard-edge oracle columns use the scaled kernel at this `N` unless `--n` is given.
const HARD_EDGE_REF_N: usize = 80;

/// A failed run: message for stderr and the exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConverged(_) => EXIT_NONCONVERGED,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(
    name = "theta-rmt",
    version,
    about = "Kernels, partition functions and correlations of the θ-deformed Cauchy and Bures ensembles"
)]
pub struct Cli {
    /// JSON file whose keys mirror the long flags (`grid_min`, `tol`, ...); flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub grid_min: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub grid_max: Option<f64>,
    #[arg(long, global = true)]
    pub grid_count: Option<usize>,
    #[arg(long, global = true)]
    pub grid_scale: Option<GridScale>,
    /// Kernel: K00, K01, K10, K11 or a hatted form (K00hat, ...).
    #[arg(long, global = true)]
    pub kind: Option<String>,
    /// Output file (stdout if absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Tolerance override, within [1e-14, 1e-2].
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Also run the independent route and report the discrepancy.
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub oracle: Option<bool>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl Flags {
    /// Field-wise `self`, falling back to `base`.
    fn over(self, base: Flags) -> Flags {
        Flags {
            a: self.a.or(base.a),
            b: self.b.or(base.b),
            theta: self.theta.or(base.theta),
            n: self.n.or(base.n),
            grid_min: self.grid_min.or(base.grid_min),
            grid_max: self.grid_max.or(base.grid_max),
            grid_count: self.grid_count.or(base.grid_count),
            grid_scale: self.grid_scale.or(base.grid_scale),
            kind: self.kind.or(base.kind),
            out: self.out.or(base.out),
            format: self.format.or(base.format),
            tol: self.tol.or(base.tol),
            oracle: self.oracle.or(base.oracle),
            seed: self.seed.or(base.seed),
        }
    }

    fn defaults() -> Flags {
        Flags {
            a: Some(0.0),
            b: Some(0.0),
            theta: Some(1.0),
            grid_min: Some(0.1),
            grid_max: Some(5.0),
            grid_count: Some(10),
            grid_scale: Some(GridScale::Linear),
            kind: Some("K00".into()),
            oracle: Some(false),
            seed: Some(0),
            ..Flags::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Numerics,
    Foxh,
    Ensembles,
    Polynomials,
    Kernels,
    Correlations,
    Raney,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PartitionModel {
    Cauchy,
    Bures,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CorrModel {
    Cauchy,
    Bures,
    CauchyHardEdge,
    BuresHardEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    Auto,
    Residue,
    Hankel,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Subcommand)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Evaluate a Fox H-function given by a JSON spec file.
    Foxh {
        /// JSON `{"upper": [[a, A], ...], "lower": [[b, B], ...], "m": .., "n": ..}`.
        #[arg(long)]
        spec: PathBuf,
        /// Comma-separated arguments.
        #[arg(long, required = true, value_delimiter = ',', allow_negative_numbers = true)]
        z: Vec<f64>,
        #[arg(long, value_enum, default_value = "auto")]
        strategy: StrategyArg,
    },
    /// Tabulate a kernel on a square grid.
    KernelGrid {
        /// Tabulate the hard-edge limit instead of the finite-N kernel.
        #[arg(long)]
        hard_edge: bool,
    },
    /// Run the invariant checks of one module (or all) and report.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
    },
    /// Partition function `Z_N`.
    Partition {
        #[arg(long, value_enum, default_value = "cauchy")]
        model: PartitionModel,
    },
    /// A correlation function at given points.
    Corr {
        #[arg(long, value_enum)]
        model: CorrModel,
        /// First-species points (Cauchy).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Vec<f64>,
        /// Second-species points (Cauchy).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        y: Vec<f64>,
        /// Points (Bures).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        z: Vec<f64>,
    },
}

/// Everything that determines a run; embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub version: &'static str,
    #[serde(flatten)]
    pub command: Command,
    pub settings: Flags,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Outcome<Self> {
        let file = match &cli.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str::<Flags>(&text).map_err(|e| Failure::usage(format!("malformed config {}: {e}", path.display())))?
            }
            None => Flags::default(),
        };
        let cfg =
            RunConfig { version: env!("CARGO_PKG_VERSION"), command: cli.command, settings: cli.flags.over(file).over(Flags::defaults()) };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Outcome<()> {
        let s = &self.settings;
        let count = s.grid_count.unwrap_or(2);
        if count < 2 {
            return Err(Failure::usage(format!("grid count must be at least 2, got {count}")));
        }
        if let (Some(lo), Some(hi)) = (s.grid_min, s.grid_max) {
            if !(lo < hi) {
                return Err(Failure::usage(format!("grid min must be below grid max, got {lo} >= {hi}")));
            }
        }
        if let Some(t) = s.tol {
            if !(1e-14..=1e-2).contains(&t) {
                return Err(Failure::usage(format!("tolerance must lie in [1e-14, 1e-2], got {t}")));
            }
        }
        Ok(())
    }

    fn ensemble(&self) -> Outcome<EnsembleParams> {
        let s = &self.settings;
        let n = s.n.unwrap_or(1);
        Ok(EnsembleParams::new(s.a.unwrap_or(0.0), s.b.unwrap_or(0.0), s.theta.unwrap_or(1.0), n)?)
    }

    fn grid(&self) -> Outcome<Vec<f64>> {
        let s = &self.settings;
        let (lo, hi, count) = (s.grid_min.unwrap_or(0.1), s.grid_max.unwrap_or(5.0), s.grid_count.unwrap_or(10));
        if !(lo > 0.0) {
            return Err(Failure::usage(format!("grid points must be positive, got min {lo}")));
        }
        let m = (count - 1) as f64;
        let pts = (0..count)
            .map(|i| {
                let t = i as f64 / m;
                match s.grid_scale.unwrap_or(GridScale::Linear) {
                    GridScale::Linear => lo + (hi - lo) * t,
                    GridScale::Log => (lo.ln() + (hi.ln() - lo.ln()) * t).exp(),
                }
            })
            .collect::<Vec<_>>();
        // pin the endpoints against rounding in the log map
        let mut pts = pts;
        pts[0] = lo;
        pts[count - 1] = hi;
        Ok(pts)
    }

    fn format(&self, default: Format) -> Format {
        self.settings.format.unwrap_or(default)
    }

    fn oracle(&self) -> bool {
        self.settings.oracle.unwrap_or(false)
    }

    fn json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is plain data")
    }

    /// `# config: {...}` line heading every CSV output.
    fn csv_header(&self) -> String {
        format!("# config: {}\n", serde_json::to_string(self).expect("config is plain data"))
    }
}

/// Write to `--out` or stdout.
fn emit(cfg: &RunConfig, text: &str) -> Outcome<()> {
    match &cfg.settings.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| Failure::usage(format!("cannot write to stdout: {e}")))
        }
    }
}

fn to_json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data");
    s.push('\n');
    s
}

fn csv_rows<T: Serialize>(cfg: &RunConfig, rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r).expect("flat record");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output");
    cfg.csv_header() + &body
}

/// Linear value plus the `(sign, log|value|)` view.
fn scalar(v: LogValue) -> (f64, i8, f64) {
    (v.to_real(), v.sign(), v.log_mag())
}

pub fn run(cfg: &RunConfig) -> Outcome<()> {
    match &cfg.command {
        Command::Foxh { spec, z, strategy } => cmd_foxh(cfg, spec, z, *strategy),
        Command::KernelGrid { hard_edge } => cmd_kernel_grid(cfg, *hard_edge),
        Command::Verify { suite } => cmd_verify(cfg, *suite),
        Command::Partition { model } => cmd_partition(cfg, *model),
        Command::Corr { model, x, y, z } => cmd_corr(cfg, *model, x, y, z),
    }
}

#[derive(Debug, Serialize)]
struct FoxRecord {
    z: f64,
    value: f64,
    strategy: ContourKind,
    est_error: f64,
}

fn cmd_foxh(cfg: &RunConfig, path: &PathBuf, zs: &[f64], strategy: StrategyArg) -> Outcome<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read spec {}: {e}", path.display())))?;
    let spec: FoxHSpec = serde_json::from_str(&text).map_err(|e| Failure::usage(format!("malformed spec {}: {e}", path.display())))?;
    spec.validate().map_err(|e| Failure::usage(format!("malformed spec {}: {e}", path.display())))?;
    if zs.iter().any(|&z| !(z > 0.0) || !z.is_finite()) {
        return Err(Failure::usage("z must be positive"));
    }
    let how = match strategy {
        StrategyArg::Auto => Evaluation::Auto,
        StrategyArg::Residue => Evaluation::Kind(ContourKind::ResidueSum),
        StrategyArg::Hankel => Evaluation::Kind(ContourKind::HankelLoop),
        StrategyArg::Vertical => Evaluation::Kind(ContourKind::VerticalLine),
    };
    let records = zs
        .iter()
        .map(|&z| {
            let v = fox_h(&spec, z, how)?;
            Ok(FoxRecord { z, value: v.value, strategy: v.strategy, est_error: v.est_error })
        })
        .collect::<theta_rmt::Result<Vec<_>>>()?;
    let text = match cfg.format(Format::Json) {
        Format::Json => to_json_text(&serde_json::json!({ "config": cfg.json(), "spec": spec, "records": records })),
        Format::Csv => csv_rows(cfg, &records),
    };
    emit(cfg, &text)
}

fn cmd_kernel_grid(cfg: &RunConfig, hard_edge: bool) -> Outcome<()> {
    let name = cfg.settings.kind.as_deref().unwrap_or("K00");
    let kind = KernelKind::parse(name).ok_or_else(|| {
        let valid: Vec<&str> = KernelKind::ALL.iter().map(|k| k.name()).collect();
        Failure::usage(format!("unknown kernel kind {name:?}; expected one of {}", valid.join(", ")))
    })?;
    let pts = cfg.grid()?;
    let s = &cfg.settings;
    let (kind, params) = if hard_edge {
        // validates (a, b, θ); N plays no role in the limit
        let p = EnsembleParams::new(s.a.unwrap_or(0.0), s.b.unwrap_or(0.0), s.theta.unwrap_or(1.0), 1)?;
        (GridKind::HardEdge(kind), GridParams::HardEdge { a: p.a, b: p.b, theta: p.theta })
    } else {
        (GridKind::Finite(kind), GridParams::Finite(cfg.ensemble()?))
    };
    let mut grid = KernelGrid::compute(kind, params, pts.clone(), pts)?;
    if cfg.oracle() {
        grid.attach_oracle(s.n.unwrap_or(HARD_EDGE_REF_N))?;
    }
    let text = match cfg.format(Format::Csv) {
        Format::Csv => cfg.csv_header() + &grid.to_csv(),
        Format::Json => {
            let g: serde_json::Value = serde_json::from_str(&grid.to_json()).expect("grid JSON");
            to_json_text(&serde_json::json!({ "config": cfg.json(), "numerics": kernels::numerical_settings(), "grid": g }))
        }
    };
    emit(cfg, &text)
}

fn cmd_verify(cfg: &RunConfig, suite: Suite) -> Outcome<()> {
    let report = verify::run(suite, cfg)?;
    let first_failure = report.checks.iter().find(|c| c.status.is_failure()).map(|c| c.check_name.clone());
    let text = match cfg.format(Format::Json) {
        Format::Json => {
            to_json_text(&serde_json::json!({ "config": cfg.json(), "passed": first_failure.is_none(), "checks": report.checks }))
        }
        Format::Csv => csv_rows(cfg, &report.checks),
    };
    emit(cfg, &text)?;
    match first_failure {
        None => Ok(()),
        Some(name) => Err(Failure { code: EXIT_VERIFY, message: format!("verification failed; first failing check: {name}") }),
    }
}

#[derive(Debug, Serialize)]
struct PartitionRecord {
    model: PartitionModel,
    // the csv writer rejects flattened structs, so the scalar is spelled out
    value: f64,
    sign: i8,
    log_abs: f64,
    route: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_route: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    discrepancy: Option<f64>,
}

fn cmd_partition(cfg: &RunConfig, model: PartitionModel) -> Outcome<()> {
    let p = cfg.ensemble()?;
    let (value, route) = match model {
        PartitionModel::Cauchy => (partition_cauchy(&p)?, "closed-form product"),
        PartitionModel::Bures => (partition_bures(&p)?, "pfaffian"),
    };
    let (oracle, oracle_route) = if cfg.oracle() {
        match model {
            PartitionModel::Cauchy => (Some(partition_cauchy_det(&p)?), Some("moment determinant")),
            PartitionModel::Bures => {
                let zc = partition_cauchy(&p.bures_companion())?;
                (Some((zc * LogValue::from_real(2f64.powi(p.n as i32))).sqrt()), Some("sqrt(2^N Z^C(a, a+1))"))
            }
        }
    } else {
        (None, None)
    };
    let (v, sign, log_abs) = scalar(value);
    let rec = PartitionRecord {
        model,
        value: v,
        sign,
        log_abs,
        route,
        oracle_value: oracle.map(|o| o.to_real()),
        oracle_route,
        // relative, since Z_N spans hundreds of decades
        discrepancy: oracle.map(|o| value.rel_diff(&o)),
    };
    emit_record(cfg, &rec)
}

fn emit_record<T: Serialize>(cfg: &RunConfig, rec: &T) -> Outcome<()> {
    let text = match cfg.format(Format::Json) {
        Format::Json => to_json_text(&serde_json::json!({ "config": cfg.json(), "result": rec })),
        Format::Csv => csv_rows(cfg, std::slice::from_ref(rec)),
    };
    emit(cfg, &text)
}

#[derive(Debug, Serialize)]
struct CorrRecord {
    model: CorrModel,
    // the csv writer rejects flattened structs, so the scalar is spelled out
    value: f64,
    sign: i8,
    log_abs: f64,
    route: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    discrepancy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verbatim_prefactor_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration: Option<f64>,
}

fn cmd_corr(cfg: &RunConfig, model: CorrModel, x: &[f64], y: &[f64], z: &[f64]) -> Outcome<()> {
    let mut p = cfg.ensemble()?;
    let (m, xs, ys) = match model {
        CorrModel::Cauchy | CorrModel::CauchyHardEdge => {
            if !z.is_empty() {
                return Err(Failure::usage("--z is for the Bures models; use --x and --y"));
            }
            let m = if model == CorrModel::Cauchy { Model::Cauchy } else { Model::CauchyHardEdge };
            (m, x.to_vec(), y.to_vec())
        }
        CorrModel::Bures | CorrModel::BuresHardEdge => {
            if !y.is_empty() {
                return Err(Failure::usage("the Bures ensemble has one species; pass the points with --z"));
            }
            p = EnsembleParams::bures(p.a, p.theta, p.n)?;
            let m = if model == CorrModel::Bures { Model::Bures } else { Model::BuresHardEdge };
            (m, if z.is_empty() { x.to_vec() } else { [x, z].concat() }, vec![])
        }
    };
    if xs.is_empty() && ys.is_empty() {
        return Err(Failure::usage("no points given"));
    }
    let req = CorrelationRequest::new(m, p, xs, ys)?;
    let oracle = cfg.oracle();
    if oracle && matches!(model, CorrModel::CauchyHardEdge | CorrModel::BuresHardEdge) {
        return Err(Failure::usage("--oracle needs a finite-N model; the brute-force integral has no hard-edge form"));
    }
    // the nested oracle integral gets slow well before 1e-8
    let r = evaluate(&req, oracle.then(|| cfg.settings.tol.unwrap_or(1e-6)))?;
    let (value, sign, log_abs) = scalar(LogValue::from_real(r.value));
    let rec = CorrRecord {
        model,
        value,
        sign,
        log_abs,
        route: r.route,
        oracle_value: r.oracle_value,
        discrepancy: r.discrepancy,
        verbatim_prefactor_value: r.verbatim,
        calibration: r.calibration,
    };
    emit_record(cfg, &rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(args: &[&str]) -> Outcome<RunConfig> {
        let cli =
            Cli::try_parse_from(std::iter::once("theta-rmt").chain(args.iter().copied())).map_err(|e| Failure::usage(e.to_string()))?;
        RunConfig::from_cli(cli)
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::from(Error::NonConverged("x".into())).code, EXIT_NONCONVERGED);
        assert_eq!(Failure::from(Error::Domain("x".into())).code, EXIT_USAGE);
    }

    #[test]
    fn grids() {
        let c = cfg(&["kernel-grid", "--grid-min", "0.1", "--grid-max", "10", "--grid-count", "3", "--grid-scale", "log"]).unwrap();
        let g = c.grid().unwrap();
        assert_eq!(g[0], 0.1);
        assert!((g[1] - 1.0).abs() < 1e-15);
        assert_eq!(g[2], 10.0);
        let c = cfg(&["kernel-grid", "--grid-min", "0", "--grid-max", "1"]).unwrap();
        assert!(c.grid().is_err());
    }

    #[test]
    fn flags_override_and_defaults() {
        let c = cfg(&["partition", "--n", "4"]).unwrap();
        assert_eq!(c.settings.n, Some(4));
        assert_eq!(c.settings.theta, Some(1.0));
        assert_eq!(c.settings.oracle, Some(false));
        let c = cfg(&["partition", "--oracle"]).unwrap();
        assert!(c.oracle());
        let f = Flags { n: Some(2), ..Flags::default() }.over(Flags { n: Some(5), a: Some(0.3), ..Flags::default() });
        assert_eq!((f.n, f.a), (Some(2), Some(0.3)));
    }
}
