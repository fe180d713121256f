//! Command-line front end: model evaluation, simulation, curve sweeps and
//! threshold optimization, with JSON records for single results and CSV for
//! sweeps.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 model error
//! (degenerate or non-convergent fixed point).

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use adra::analytic::{analyze, SolverOptions};
use adra::model::{AccessPolicy, ProtocolConfig};
use adra::optimize::{
    compare_to_aira, default_delta_max, default_p_grid, optimize_delta, optimize_joint,
    AiraComparison, OptimizeError,
};
use adra::sim::{run_replicated, SimConfig};

#[derive(Parser)]
#[command(name = "adra", version, about = "Age-of-information analysis of age-dependent random access under periodic updating")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the analytic model for one configuration
    Analyze {
        #[command(flatten)]
        net: NetArgs,
        /// Access policy: fixed:<p> or adaptive
        #[arg(long)]
        policy: Option<String>,
    },
    /// Monte-Carlo simulate one configuration
    Simulate {
        #[command(flatten)]
        net: NetArgs,
        /// Access policy: fixed:<p> or adaptive
        #[arg(long)]
        policy: Option<String>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Emit a CSV curve over a swept variable
    Sweep {
        #[command(flatten)]
        net: NetArgs,
        /// Policy class (repeatable): fixed-optimal, fixed:<p> or adaptive.
        /// Defaults to fixed-optimal and adaptive.
        #[arg(long = "policy")]
        policies: Vec<String>,
        /// Swept variable
        #[arg(long)]
        var: SweepVar,
        /// Sweep points: start:stop:step or v1,v2,...
        #[arg(long)]
        values: String,
        /// Probability grid for fixed-optimal, as p1,p2,...
        #[arg(long)]
        p_grid: Option<String>,
        /// Threshold-grid ceiling for period/devices sweeps
        #[arg(long)]
        delta_max: Option<u32>,
        /// Also simulate each point
        #[arg(long)]
        with_sim: bool,
        #[command(flatten)]
        sim: SimArgs,
        /// Output CSV path (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search the threshold (and fixed p) minimizing the analytic age
    Optimize {
        #[command(flatten)]
        net: NetArgs,
        /// Policy class: fixed-optimal, fixed:<p> or adaptive
        #[arg(long)]
        policy: Option<String>,
        /// Probability grid for the fixed class, as p1,p2,...
        #[arg(long)]
        p_grid: Option<String>,
        /// Threshold-grid ceiling (default 3*N*D)
        #[arg(long)]
        delta_max: Option<u32>,
        /// Path of the CSV curve side file
        #[arg(long, default_value = "adra_optimize_curve.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct NetArgs {
    /// Number of devices
    #[arg(short = 'n', long)]
    devices: Option<u32>,
    /// Frame length in slots
    #[arg(short = 'd', long)]
    period: Option<u32>,
    /// Age threshold in slots (default 0)
    #[arg(long)]
    threshold: Option<u32>,
    /// JSON config file (flags override its fields)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Slots per run (rounded up to whole frames)
    #[arg(long, default_value_t = 1_000_000)]
    slots: u64,
    /// Independent replications
    #[arg(long, default_value_t = 10)]
    runs: u32,
    /// Warmup slots discarded before sampling (default: 100 frames)
    #[arg(long)]
    warmup: Option<u64>,
    /// Base RNG seed; run i uses stream (seed, i)
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepVar {
    Threshold,
    Period,
    Devices,
}

impl SweepVar {
    fn name(self) -> &'static str {
        match self {
            SweepVar::Threshold => "threshold",
            SweepVar::Period => "period",
            SweepVar::Devices => "devices",
        }
    }
}

/// A user-facing policy class: a concrete policy or "best fixed p on the
/// grid".
#[derive(Clone, Copy, PartialEq)]
enum PolicyClass {
    Fixed(f64),
    FixedOptimal,
    Adaptive,
}

impl PolicyClass {
    fn parse(s: &str) -> Result<Self, String> {
        match s {
            "adaptive" => Ok(PolicyClass::Adaptive),
            "fixed-optimal" => Ok(PolicyClass::FixedOptimal),
            _ => match s.strip_prefix("fixed:") {
                Some(p) => {
                    let p: f64 = p
                        .parse()
                        .map_err(|_| format!("bad probability in policy {s:?}"))?;
                    if !p.is_finite() || p <= 0.0 || p > 1.0 {
                        return Err(format!("probability_out_of_range in policy {s:?}"));
                    }
                    Ok(PolicyClass::Fixed(p))
                }
                None => Err(format!(
                    "unknown policy {s:?} (expected fixed:<p>, fixed-optimal or adaptive)"
                )),
            },
        }
    }

    fn label(&self) -> String {
        match self {
            PolicyClass::Fixed(p) => format!("fixed:{p}"),
            PolicyClass::FixedOptimal => "fixed-optimal".to_string(),
            PolicyClass::Adaptive => "adaptive".to_string(),
        }
    }
}

struct CliError {
    code: u8,
    name: &'static str,
    detail: String,
}

impl CliError {
    fn config(detail: impl Into<String>) -> Self {
        CliError {
            code: 2,
            name: "invalid_config",
            detail: detail.into(),
        }
    }

    fn model(err: adra::ModelError) -> Self {
        CliError {
            code: 3,
            name: err.name(),
            detail: err.to_string(),
        }
    }

    fn optimize(err: OptimizeError) -> Self {
        match err {
            OptimizeError::AllDegenerate => CliError {
                code: 3,
                name: "AllDegenerate",
                detail: err.to_string(),
            },
            OptimizeError::InvalidProbabilityGrid => CliError::config(err.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = json!({"error": err.name, "detail": err.detail});
            println!("{record}");
            ExitCode::from(err.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { net, policy } => cmd_analyze(&net, policy.as_deref()),
        Command::Simulate { net, policy, sim } => cmd_simulate(&net, policy.as_deref(), &sim),
        Command::Sweep {
            net,
            policies,
            var,
            values,
            p_grid,
            delta_max,
            with_sim,
            sim,
            out,
        } => cmd_sweep(&net, &policies, var, &values, p_grid.as_deref(), delta_max, with_sim, &sim, out.as_deref()),
        Command::Optimize {
            net,
            policy,
            p_grid,
            delta_max,
            out,
        } => cmd_optimize(&net, policy.as_deref(), p_grid.as_deref(), delta_max, &out),
    }
}

// ---- configuration resolution ----

/// Builds the protocol config from an optional JSON file overridden by any
/// explicit flags. The policy, device count and period must come from one of
/// the two; the threshold defaults to 0.
fn resolve_protocol(net: &NetArgs, policy: Option<&str>) -> Result<ProtocolConfig, CliError> {
    let file: Option<ProtocolConfig> = match &net.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("cannot parse {}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    let policy = match policy {
        Some(s) => match PolicyClass::parse(s).map_err(CliError::config)? {
            PolicyClass::Fixed(p) => Some(AccessPolicy::Fixed(p)),
            PolicyClass::Adaptive => Some(AccessPolicy::Adaptive),
            PolicyClass::FixedOptimal => {
                return Err(CliError::config(
                    "fixed-optimal is a search class; this command needs fixed:<p> or adaptive",
                ))
            }
        },
        None => None,
    };
    let n_devices = net
        .devices
        .or(file.map(|f| f.n_devices))
        .ok_or_else(|| CliError::config("missing --devices (or --config)"))?;
    let frame_len = net
        .period
        .or(file.map(|f| f.frame_len))
        .ok_or_else(|| CliError::config("missing --period (or --config)"))?;
    let age_threshold = net.threshold.or(file.map(|f| f.age_threshold)).unwrap_or(0);
    let policy = policy
        .or(file.map(|f| f.policy))
        .ok_or_else(|| CliError::config("missing --policy (or --config)"))?;
    ProtocolConfig::new(n_devices, frame_len, age_threshold, policy)
        .map_err(|e| CliError::config(e.to_string()))
}

fn sim_config(protocol: ProtocolConfig, sim: &SimArgs) -> Result<SimConfig, CliError> {
    let d = u64::from(protocol.frame_len);
    let horizon = sim.slots.div_ceil(d).max(1) * d;
    let warmup = sim.warmup.unwrap_or_else(|| SimConfig::default_warmup(protocol.frame_len));
    SimConfig::new(protocol, horizon, warmup, sim.seed, sim.runs)
        .map_err(|e| CliError::config(e.to_string()))
}

// ---- output helpers ----

/// Rounds to 12 significant digits so records are stable and precise enough
/// to verify solver tolerances.
fn sig12(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn num_json(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(sig12(x))
    } else {
        serde_json::Value::Null
    }
}

fn num_csv(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{}", sig12(x))
    }
}

fn config_record(cfg: &ProtocolConfig) -> serde_json::Value {
    json!({
        "n_devices": cfg.n_devices,
        "frame_len": cfg.frame_len,
        "age_threshold": cfg.age_threshold,
        "lambda": cfg.threshold_frames(),
        "epsilon": cfg.threshold_offset(),
        "policy": serde_json::to_value(cfg.policy).unwrap(),
    })
}

// ---- subcommands ----

fn cmd_analyze(net: &NetArgs, policy: Option<&str>) -> Result<(), CliError> {
    let cfg = resolve_protocol(net, policy)?;
    let solution = analyze(&cfg, &SolverOptions::default()).map_err(CliError::model)?;
    let record = json!({
        "config": config_record(&cfg),
        "beta_lambda": num_json(solution.steady.beta_at),
        "beta_lambda_plus": num_json(solution.steady.beta_above),
        "avg_aoi": num_json(solution.avg_aoi),
        "iterations": solution.iterations,
        "residual": num_json(solution.residual),
    });
    println!("{record}");
    Ok(())
}

fn cmd_simulate(net: &NetArgs, policy: Option<&str>, sim: &SimArgs) -> Result<(), CliError> {
    let cfg = resolve_protocol(net, policy)?;
    let sc = sim_config(cfg, sim)?;
    let report = run_replicated(&sc);
    let record = json!({
        "config": config_record(&cfg),
        "horizon_slots": sc.horizon_slots,
        "warmup_slots": sc.warmup_slots,
        "seed": sc.seed,
        "runs": sc.runs,
        "per_run_aoi": report.per_run_aoi.iter().map(|&x| num_json(x)).collect::<Vec<_>>(),
        "mean_aoi": num_json(report.mean_aoi),
        "std_err": report.std_err.map_or(serde_json::Value::Null, num_json),
        "success_rate": num_json(report.success_rate),
    });
    println!("{record}");
    Ok(())
}

fn parse_values(values: &str) -> Result<Vec<u32>, CliError> {
    let parts: Vec<u32> = if values.contains(':') {
        let fields: Vec<&str> = values.split(':').collect();
        if fields.len() != 3 {
            return Err(CliError::config("range must be start:stop:step"));
        }
        let start: u32 = fields[0].parse().map_err(|_| CliError::config("bad range start"))?;
        let stop: u32 = fields[1].parse().map_err(|_| CliError::config("bad range stop"))?;
        let step: u32 = fields[2].parse().map_err(|_| CliError::config("bad range step"))?;
        if step == 0 {
            return Err(CliError::config("range step must be positive"));
        }
        (start..=stop).step_by(step as usize).collect()
    } else {
        values
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse().map_err(|_| CliError::config(format!("bad value {s:?}"))))
            .collect::<Result<_, _>>()?
    };
    if parts.is_empty() {
        return Err(CliError::config("empty sweep values"));
    }
    if !parts.windows(2).all(|w| w[0] < w[1]) {
        return Err(CliError::config("sweep values must be strictly increasing"));
    }
    Ok(parts)
}

fn parse_p_grid(p_grid: Option<&str>) -> Result<Vec<f64>, CliError> {
    let grid: Vec<f64> = match p_grid {
        None => default_p_grid(),
        Some(s) => s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::config(format!("bad probability {t:?}")))
            })
            .collect::<Result<_, _>>()?,
    };
    if grid.is_empty() {
        return Err(CliError::config("empty probability grid"));
    }
    Ok(grid)
}

/// Analytic age at one sweep point, together with the concrete policy that
/// achieves it (for the optional simulation column). NaN when every
/// candidate is degenerate.
fn sweep_point(
    class: PolicyClass,
    var: SweepVar,
    n: u32,
    d: u32,
    value: u32,
    p_grid: &[f64],
    delta_max: Option<u32>,
) -> (f64, Option<ProtocolConfig>) {
    let opts = SolverOptions::default();
    match var {
        SweepVar::Threshold => {
            let candidates: Vec<AccessPolicy> = match class {
                PolicyClass::Adaptive => vec![AccessPolicy::Adaptive],
                PolicyClass::Fixed(p) => vec![AccessPolicy::Fixed(p)],
                PolicyClass::FixedOptimal => p_grid.iter().map(|&p| AccessPolicy::Fixed(p)).collect(),
            };
            let mut best: Option<(f64, ProtocolConfig)> = None;
            for policy in candidates {
                let Ok(cfg) = ProtocolConfig::new(n, d, value, policy) else { continue };
                if let Ok(sol) = analyze(&cfg, &opts) {
                    if best.as_ref().map_or(true, |(aoi, _)| sol.avg_aoi < *aoi) {
                        best = Some((sol.avg_aoi, cfg));
                    }
                }
            }
            match best {
                Some((aoi, cfg)) => (aoi, Some(cfg)),
                None => (f64::NAN, None),
            }
        }
        SweepVar::Period | SweepVar::Devices => {
            let (n, d) = match var {
                SweepVar::Period => (n, value),
                _ => (value, d),
            };
            let ceiling = delta_max.unwrap_or_else(|| default_delta_max(n, d));
            let result = match class {
                PolicyClass::Adaptive => {
                    ProtocolConfig::new(n, d, 0, AccessPolicy::Adaptive)
                        .map_err(|_| OptimizeError::AllDegenerate)
                        .and_then(|t| optimize_delta(&t, ceiling))
                }
                PolicyClass::Fixed(p) => ProtocolConfig::new(n, d, 0, AccessPolicy::Fixed(p))
                    .map_err(|_| OptimizeError::AllDegenerate)
                    .and_then(|t| optimize_delta(&t, ceiling)),
                PolicyClass::FixedOptimal => {
                    ProtocolConfig::new(n, d, 0, AccessPolicy::Fixed(p_grid[0]))
                        .map_err(|_| OptimizeError::AllDegenerate)
                        .and_then(|t| optimize_joint(&t, ceiling, p_grid))
                }
            };
            match result {
                Ok(r) => {
                    let policy = match r.best_p {
                        Some(p) => AccessPolicy::Fixed(p),
                        None => AccessPolicy::Adaptive,
                    };
                    let cfg = ProtocolConfig::new(n, d, r.best_delta, policy).ok();
                    (r.best_aoi, cfg)
                }
                Err(_) => (f64::NAN, None),
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    net: &NetArgs,
    policies: &[String],
    var: SweepVar,
    values: &str,
    p_grid: Option<&str>,
    delta_max: Option<u32>,
    with_sim: bool,
    sim: &SimArgs,
    out: Option<&std::path::Path>,
) -> Result<(), CliError> {
    let values = parse_values(values)?;
    let p_grid = parse_p_grid(p_grid)?;

    // fall back to the config file's policy, then to both search classes
    let file_policy: Option<ProtocolConfig> = match &net.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("cannot parse {}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    let classes: Vec<PolicyClass> = if policies.is_empty() {
        match file_policy.map(|f| f.policy) {
            Some(AccessPolicy::Fixed(p)) => vec![PolicyClass::Fixed(p)],
            Some(AccessPolicy::Adaptive) => vec![PolicyClass::Adaptive],
            None => vec![PolicyClass::FixedOptimal, PolicyClass::Adaptive],
        }
    } else {
        policies
            .iter()
            .map(|s| PolicyClass::parse(s).map_err(CliError::config))
            .collect::<Result<_, _>>()?
    };

    let need = |flag: Option<u32>, file: Option<u32>, name: &str| {
        flag.or(file).ok_or_else(|| CliError::config(format!("missing --{name} (or --config)")))
    };
    let file_n = file_policy.map(|f| f.n_devices);
    let file_d = file_policy.map(|f| f.frame_len);
    let n = match var {
        SweepVar::Devices => 0,
        _ => need(net.devices, file_n, "devices")?,
    };
    let d = match var {
        SweepVar::Period => 0,
        _ => need(net.period, file_d, "period")?,
    };

    let mut csv = String::from("variable,value,policy,analytic_aoi,sim_aoi,sim_stderr\n");
    for &value in &values {
        for class in &classes {
            let (aoi, best_cfg) = sweep_point(*class, var, n, d, value, &p_grid, delta_max);
            let (sim_aoi, sim_stderr) = match (with_sim, best_cfg) {
                (true, Some(cfg)) => {
                    let sc = sim_config(cfg, sim)?;
                    let report = run_replicated(&sc);
                    (
                        num_csv(report.mean_aoi),
                        report.std_err.map(num_csv).unwrap_or_default(),
                    )
                }
                _ => (String::new(), String::new()),
            };
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                var.name(),
                value,
                class.label(),
                num_csv(aoi),
                sim_aoi,
                sim_stderr
            );
        }
    }
    match out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_optimize(
    net: &NetArgs,
    policy: Option<&str>,
    p_grid: Option<&str>,
    delta_max: Option<u32>,
    out: &std::path::Path,
) -> Result<(), CliError> {
    // resolve as a search class, defaulting the threshold away (it is the
    // variable being searched)
    let file_policy: Option<ProtocolConfig> = match &net.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("cannot parse {}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    let class = match policy {
        Some(s) => PolicyClass::parse(s).map_err(CliError::config)?,
        None => match file_policy.map(|f| f.policy) {
            Some(AccessPolicy::Fixed(p)) => PolicyClass::Fixed(p),
            Some(AccessPolicy::Adaptive) => PolicyClass::Adaptive,
            None => return Err(CliError::config("missing --policy (or --config)")),
        },
    };
    let n = net
        .devices
        .or(file_policy.map(|f| f.n_devices))
        .ok_or_else(|| CliError::config("missing --devices (or --config)"))?;
    let d = net
        .period
        .or(file_policy.map(|f| f.frame_len))
        .ok_or_else(|| CliError::config("missing --period (or --config)"))?;
    let ceiling = delta_max.unwrap_or_else(|| default_delta_max(n, d));

    let grid = match (class, p_grid) {
        (PolicyClass::Fixed(p), None) => vec![p],
        _ => parse_p_grid(p_grid)?,
    };
    let template_policy = match class {
        PolicyClass::Adaptive => AccessPolicy::Adaptive,
        PolicyClass::Fixed(p) => AccessPolicy::Fixed(p),
        PolicyClass::FixedOptimal => AccessPolicy::Fixed(grid[0]),
    };
    let template = ProtocolConfig::new(n, d, 0, template_policy)
        .map_err(|e| CliError::config(e.to_string()))?;

    let comparison: AiraComparison =
        compare_to_aira(&template, ceiling, &grid).map_err(CliError::optimize)?;

    // curve side file
    let mut csv = String::from("delta,p,aoi\n");
    for point in &comparison.adra.curve {
        let p = point.p.map(|p| format!("{}", sig12(p))).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{}", point.delta, p, num_csv(point.aoi));
    }
    std::fs::write(out, csv)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", out.display())))?;

    let best_policy = match comparison.adra.best_p {
        Some(p) => AccessPolicy::Fixed(p),
        None => AccessPolicy::Adaptive,
    };
    let best_cfg = ProtocolConfig::new(n, d, comparison.adra.best_delta, best_policy)
        .map_err(|e| CliError::config(e.to_string()))?;
    let record = json!({
        "config": config_record(&best_cfg),
        "policy_class": class.label(),
        "delta_max": ceiling,
        "p_grid": match class {
            PolicyClass::Adaptive => serde_json::Value::Null,
            _ => json!(grid.iter().map(|&p| sig12(p)).collect::<Vec<_>>()),
        },
        "best": {
            "delta": comparison.adra.best_delta,
            "p": comparison.adra.best_p.map_or(serde_json::Value::Null, |p| json!(sig12(p))),
            "aoi": num_json(comparison.adra.best_aoi),
        },
        "aira": {
            "delta": 0,
            "p": comparison.aira_p.map_or(serde_json::Value::Null, |p| json!(sig12(p))),
            "aoi": num_json(comparison.aira_aoi),
        },
        "improvement": num_json(comparison.improvement),
        "curve_path": out.display().to_string(),
    });
    println!("{record}");
    Ok(())
}
