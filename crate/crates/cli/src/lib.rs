//! Command-line front end: runs registry scenarios and writes CSV/JSON reports.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use relaxopt::attain::{
    minimizing_sequence, probe_attainability, value_probe, AttainConfig, ValueProbeConfig,
};
use relaxopt::chattering::{convergence_study, study_csv};
use relaxopt::format::to_json;
use relaxopt::integrate::{integrate_ordinary, integrate_relaxed, Trajectory};
use relaxopt::pmp::{search_lambda, LambdaConfig, LambdaVerdict, TransversalityConvention};
use relaxopt::relaxed::{audit_admissibility, Mesh, OrdinaryControl, Verdict};
use relaxopt::systems::{brockett_loop_control, get_scenario_with, Scenario, ScenarioParams};
use relaxopt::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_AUDIT_FAIL: i32 = 4;
pub const EXIT_LAMBDA_EMPTY: i32 = 5;
pub const EXIT_REFUSED: i32 = 6;
pub const EXIT_ATTAIN_FAILED: i32 = 7;

#[derive(Parser, Debug)]
#[command(
    name = "relaxopt",
    version,
    about = "Relaxed controls, multiplier certificates and attainability probes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate a reference pair or an ordinary control.
    Simulate(SimulateArgs),
    /// Check that a reference trajectory solves the relaxed system.
    Audit(AuditArgs),
    /// Search the sphere of terminal covectors for a multiplier.
    Lambda(LambdaArgs),
    /// Chattering convergence study.
    Chatter(ChatterArgs),
    /// Synthesize an ordinary control reaching the reference endpoint early or late.
    Attain(AttainArgs),
    /// Sampled upper estimate of the minimal time to a target.
    Value(ValueArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long)]
    pub scenario: String,
    /// JSON file with defaults; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario parameter override, e.g. `omega=6.28`.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Integration cells per unit time.
    #[arg(long)]
    pub cells: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, conflicts_with = "control")]
    pub pair: Option<String>,
    /// Named ordinary control: `loop` or `const:u0,u1,..`.
    #[arg(long)]
    pub control: Option<String>,
    /// Number of pieces of the sampled loop control.
    #[arg(long)]
    pub pieces: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub pair: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct LambdaArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub pair: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<i8>,
    #[arg(long)]
    pub resolution: Option<f64>,
    /// `definition` (s*M <= 0) or `theorem` (M <= 0).
    #[arg(long)]
    pub convention: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ChatterArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub pair: Option<String>,
    /// Comma-separated subdivision counts.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct AttainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub pair: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<i8>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Run a minimizing sequence of this length with halving eps.
    #[arg(long)]
    pub sequence: Option<usize>,
    /// Skip the multiplier-set check.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub resolution: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ValueArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated target state.
    #[arg(long, allow_negative_numbers = true, value_delimiter = ',')]
    pub target: Vec<f64>,
    #[arg(long)]
    pub ball: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Scalar target scan `start:step:stop`.
    #[arg(long, allow_hyphen_values = true)]
    pub scan: Option<String>,
}

/// Values read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub scenario_params: ScenarioParams,
    pub out: Option<PathBuf>,
    pub cells: Option<usize>,
    pub pair: Option<String>,
    pub tol: Option<f64>,
    pub s: Option<i8>,
    pub resolution: Option<f64>,
    pub convention: Option<TransversalityConvention>,
    pub residual_tol: Option<f64>,
    pub continuity_jump_tol: Option<f64>,
    pub p: Option<Vec<usize>>,
    pub eps: Option<f64>,
    pub sequence: Option<usize>,
    pub force: Option<bool>,
    pub target: Option<Vec<f64>>,
    pub ball: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

/// Exit code a library error maps to.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Refused { .. } => EXIT_REFUSED,
        Error::NewtonFailed { .. } | Error::TubeViolation { .. } | Error::EndpointMiss { .. } => {
            EXIT_ATTAIN_FAILED
        }
        _ => EXIT_CONFIG,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

type Run<T> = std::result::Result<T, Failure>;

const DEFAULT_CELLS: usize = 1000;

struct Context {
    scenario: Scenario,
    file: FileConfig,
    out: PathBuf,
    cells: usize,
}

impl Context {
    fn new(common: &Common) -> Run<Self> {
        let mut file = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Failure::config(format!("bad config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        for kv in &common.params {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Failure::config(format!("expected KEY=VALUE, got `{kv}`")))?;
            let value: f64 = value.parse().map_err(|_| {
                Failure::config(format!("parameter `{key}` needs a number, got `{value}`"))
            })?;
            match key {
                "omega" => file.scenario_params.omega = Some(value),
                "j" => file.scenario_params.j = Some(value),
                other => {
                    return Err(Failure::config(format!(
                        "unknown scenario parameter `{other}`"
                    )))
                }
            }
        }
        let scenario = get_scenario_with(&common.scenario, &file.scenario_params)?;
        let cells = common.cells.or(file.cells).unwrap_or(DEFAULT_CELLS);
        if cells == 0 {
            return Err(Failure::config("cells must be positive"));
        }
        let out = common
            .out
            .clone()
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self {
            scenario,
            file,
            out,
            cells,
        })
    }

    fn pair_name(&self, flag: &Option<String>) -> Option<String> {
        flag.clone().or_else(|| self.file.pair.clone())
    }

    fn write(&self, name: &str, contents: &str) -> Run<()> {
        write_atomic(&self.out, name, contents)
            .map_err(|e| Failure::config(format!("cannot write {name}: {e}")))
    }

    fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Run<()> {
        let text = to_json(value).map_err(|e| Failure::config(e.to_string()))?;
        self.write(name, &text)
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(name))
}

fn positive(name: &str, v: f64) -> Run<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::config(format!("{name} must be positive, got {v}")))
    }
}

fn parse_convention(text: &str) -> Run<TransversalityConvention> {
    match text {
        "definition" => Ok(TransversalityConvention::Definition),
        "theorem" => Ok(TransversalityConvention::Theorem),
        other => Err(Failure::config(format!(
            "convention must be `definition` or `theorem`, got `{other}`"
        ))),
    }
}

/// Runs one command and returns its exit code.
pub fn run(cli: Cli) -> Run<i32> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Audit(a) => audit(a),
        Command::Lambda(a) => lambda(a),
        Command::Chatter(a) => chatter(a),
        Command::Attain(a) => attain(a),
        Command::Value(a) => value(a),
    }
}

fn sup_distance(traj: &Trajectory, reference: impl Fn(f64) -> Vec<f64>) -> f64 {
    traj.times()
        .iter()
        .zip(&traj.samples)
        .map(|(&t, x)| {
            let r = reference(t);
            x.iter()
                .zip(&r)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

fn parse_control(ctx: &Context, spec: &str, pieces: usize) -> Run<OrdinaryControl> {
    let sc = &ctx.scenario;
    if spec == "loop" {
        if sc.id != "brockett" {
            return Err(Failure::config(
                "the `loop` control belongs to the brockett scenario",
            ));
        }
        return Ok(brockett_loop_control(
            ctx.file.scenario_params.omega(),
            pieces,
            sc.t1,
            sc.t2_hat,
        )?);
    }
    if let Some(values) = spec.strip_prefix("const:") {
        let u = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Failure::config(format!("bad constant control `{spec}`")))?;
        let control = OrdinaryControl::constant(sc.t1, sc.t2_hat, u)?;
        control.check_membership(&sc.system.controls)?;
        return Ok(control);
    }
    Err(Failure::config(format!(
        "unknown control `{spec}`; use `loop` or `const:u0,..`"
    )))
}

fn simulate(a: SimulateArgs) -> Run<i32> {
    let ctx = Context::new(&a.common)?;
    let sc = &ctx.scenario;
    let f = &sc.system.dynamics;
    let summary;
    let traj;
    if let Some(spec) = &a.control {
        let pieces = a.pieces.unwrap_or(2000);
        if pieces == 0 {
            return Err(Failure::config("pieces must be positive"));
        }
        let control = parse_control(&ctx, spec, pieces)?;
        let span = sc.t2_hat - sc.t1;
        let mesh = Mesh::new(
            sc.t1,
            sc.t2_hat,
            ((ctx.cells as f64) * span).ceil().max(1.0) as usize,
        )?;
        traj = integrate_ordinary(f, &control, &sc.x1, &mesh)?;
        summary = json!({
            "scenario": sc.id,
            "control": spec,
            "pieces": control.pieces(),
            "cells": mesh.cells,
            "endpoint": traj.endpoint(),
        });
    } else {
        let pair = sc.pair(ctx.pair_name(&a.pair).as_deref())?;
        let reference = sc.reference(pair, ctx.cells)?;
        traj = integrate_relaxed(f, &pair.control, &sc.x1, &reference.trajectory.mesh)?;
        summary = json!({
            "scenario": sc.id,
            "pair": pair.name,
            "cells": traj.mesh.cells,
            "endpoint": traj.endpoint(),
            "sup_deviation_from_reference": sup_distance(&traj, |t| reference.at(t)),
        });
    }
    ctx.write("trajectory.csv", &traj.to_csv())?;
    ctx.write_json("summary.json", &summary)?;
    Ok(EXIT_OK)
}

fn audit(a: AuditArgs) -> Run<i32> {
    let ctx = Context::new(&a.common)?;
    let sc = &ctx.scenario;
    let pair = sc.pair(ctx.pair_name(&a.pair).as_deref())?;
    let tol = positive("tol", a.tol.or(ctx.file.tol).unwrap_or(1e-9))?;
    let reference = sc.reference(pair, ctx.cells)?;
    let report = audit_admissibility(
        &sc.system.dynamics,
        &reference.trajectory,
        &pair.control,
        tol,
    )?;
    let mut doc = serde_json::to_value(&report).map_err(|e| Failure::config(e.to_string()))?;
    if let Value::Object(map) = &mut doc {
        map.insert("scenario".into(), json!(sc.id));
        map.insert("pair".into(), json!(pair.name));
        map.insert(
            "membership".into(),
            json!(pair.control.check_membership(&sc.system.controls).is_ok()),
        );
    }
    ctx.write_json("audit.json", &doc)?;
    Ok(match report.verdict {
        Verdict::Pass => EXIT_OK,
        Verdict::Fail => EXIT_AUDIT_FAIL,
    })
}

fn lambda_config(
    ctx: &Context,
    s: Option<i8>,
    resolution: Option<f64>,
    convention: Option<&str>,
    tol: Option<f64>,
) -> Run<LambdaConfig> {
    let defaults = LambdaConfig::default();
    let convention = match convention {
        Some(c) => parse_convention(c)?,
        None => ctx
            .file
            .convention
            .unwrap_or(defaults.transversality_convention),
    };
    let cfg = LambdaConfig {
        s: s.or(ctx.file.s).unwrap_or(defaults.s),
        sphere_resolution: resolution
            .or(ctx.file.resolution)
            .unwrap_or(defaults.sphere_resolution),
        residual_tol: tol
            .or(ctx.file.residual_tol)
            .unwrap_or(defaults.residual_tol),
        continuity_jump_tol: ctx
            .file
            .continuity_jump_tol
            .unwrap_or(defaults.continuity_jump_tol),
        transversality_convention: convention,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn lambda(a: LambdaArgs) -> Run<i32> {
    let ctx = Context::new(&a.common)?;
    let sc = &ctx.scenario;
    let pair = sc.pair(ctx.pair_name(&a.pair).as_deref())?;
    let cfg = lambda_config(&ctx, a.s, a.resolution, a.convention.as_deref(), a.tol)?;
    let reference = sc.reference(pair, ctx.cells)?;
    let verdict = search_lambda(&sc.system, &reference.trajectory, &pair.control, &cfg)?;
    let code = match verdict {
        LambdaVerdict::Found { .. } => EXIT_OK,
        LambdaVerdict::EmptyUpToResolution { .. } => EXIT_LAMBDA_EMPTY,
    };
    let mut doc = serde_json::to_value(&verdict).map_err(|e| Failure::config(e.to_string()))?;
    if let Value::Object(map) = &mut doc {
        map.insert("scenario".into(), json!(sc.id));
        map.insert("pair".into(), json!(pair.name));
        map.insert("s".into(), json!(cfg.s));
        map.insert("sphere_resolution".into(), json!(cfg.sphere_resolution));
        map.insert(
            "transversality_convention".into(),
            json!(cfg.transversality_convention),
        );
    }
    ctx.write_json("lambda.json", &doc)?;
    Ok(code)
}

fn chatter(a: ChatterArgs) -> Run<i32> {
    let ctx = Context::new(&a.common)?;
    let sc = &ctx.scenario;
    let pair = sc.pair(ctx.pair_name(&a.pair).as_deref())?;
    let p_list = if a.p.is_empty() {
        ctx.file.p.clone().unwrap_or_else(|| vec![25, 50, 100])
    } else {
        a.p.clone()
    };
    let rows = convergence_study(
        &sc.system.dynamics,
        &pair.control,
        &sc.x1,
        &p_list,
        1.0 / ctx.cells as f64,
    )?;
    ctx.write("chatter.csv", &study_csv(&rows))?;
    Ok(EXIT_OK)
}

fn attain(a: AttainArgs) -> Run<i32> {
    let ctx = Context::new(&a.common)?;
    let sc = &ctx.scenario;
    let pair = sc.pair(ctx.pair_name(&a.pair).as_deref())?;
    let lambda = lambda_config(&ctx, a.s, a.resolution, None, None)?;
    let eps = positive("eps", a.eps.or(ctx.file.eps).unwrap_or(1e-2))?;
    let cfg = AttainConfig {
        steps_per_unit: ctx.cells,
        force: a.force || ctx.file.force.unwrap_or(false),
        lambda: lambda.clone(),
        ..AttainConfig::default()
    };
    let sequence = a.sequence.or(ctx.file.sequence);
    let header = |map: &mut serde_json::Map<String, Value>| {
        map.insert("scenario".into(), json!(sc.id));
        map.insert("pair".into(), json!(pair.name));
        map.insert("s".into(), json!(lambda.s));
        map.insert("eps".into(), json!(eps));
    };
    if let Some(k) = sequence {
        if lambda.s != -1 {
            return Err(Failure::config(
                "minimizing sequences approach from the left; use --s -1",
            ));
        }
        let outcome = minimizing_sequence(sc, pair, &pair.directions, eps, k, &cfg)?;
        let mut map = serde_json::Map::new();
        header(&mut map);
        map.insert("sequence".into(), json!(k));
        map.insert(
            "results".into(),
            serde_json::to_value(&outcome.results).map_err(|e| Failure::config(e.to_string()))?,
        );
        map.insert(
            "failure".into(),
            json!(outcome.failure.as_ref().map(|e| e.to_string())),
        );
        ctx.write_json("attain.json", &Value::Object(map))?;
        for (i, r) in outcome.results.iter().enumerate() {
            ctx.write(&format!("control_{i}.csv"), &r.control.to_csv())?;
        }
        return match outcome.failure {
            Some(e) => Err(e.into()),
            None => Ok(EXIT_OK),
        };
    }
    let mut map = serde_json::Map::new();
    header(&mut map);
    let code = match probe_attainability(sc, pair, &pair.directions, lambda.s, eps, &cfg) {
        Ok(r) => {
            map.insert("status".into(), json!("success"));
            map.insert(
                "result".into(),
                serde_json::to_value(&r).map_err(|e| Failure::config(e.to_string()))?,
            );
            ctx.write("control.csv", &r.control.to_csv())?;
            EXIT_OK
        }
        Err(e) => {
            let code = exit_code(&e);
            if code != EXIT_REFUSED && code != EXIT_ATTAIN_FAILED {
                return Err(e.into());
            }
            let status = match e {
                Error::Refused { .. } => "refused",
                Error::TubeViolation { .. } => "tube_violation",
                _ => "failed",
            };
            map.insert("status".into(), json!(status));
            map.insert("message".into(), json!(e.to_string()));
            match &e {
                Error::Refused { psi_terminal } => {
                    map.insert("psi_terminal".into(), json!(psi_terminal));
                }
                Error::NewtonFailed {
                    best_residual,
                    tau,
                    iterations,
                } => {
                    map.insert("best_residual".into(), json!(best_residual));
                    map.insert("tau".into(), json!(tau));
                    map.insert("iterations".into(), json!(iterations));
                }
                _ => {}
            }
            code
        }
    };
    ctx.write_json("attain.json", &Value::Object(map))?;
    Ok(code)
}

fn parse_scan(text: &str) -> Run<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Failure::config(format!("scan must be start:step:stop, got `{text}`")))?;
    let [start, step, stop] = parts[..] else {
        return Err(Failure::config(format!(
            "scan must be start:step:stop, got `{text}`"
        )));
    };
    if !(step > 0.0) || stop < start {
        return Err(Failure::config(
            "scan needs a positive step and start <= stop",
        ));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| start + i as f64 * step).collect())
}

fn value(a: ValueArgs) -> Run<i32> {
    let ctx = Context::new(&a.common)?;
    let sc = &ctx.scenario;
    let defaults = ValueProbeConfig::default();
    let cfg = ValueProbeConfig {
        ball: positive("ball", a.ball.or(ctx.file.ball).unwrap_or(defaults.ball))?,
        horizon: positive(
            "horizon",
            a.horizon.or(ctx.file.horizon).unwrap_or(defaults.horizon),
        )?,
        samples: a.samples.or(ctx.file.samples).unwrap_or(defaults.samples),
        seed: a.seed.or(ctx.file.seed).unwrap_or(defaults.seed),
        steps_per_unit: ctx.cells,
    };
    let mut map = serde_json::Map::new();
    map.insert("scenario".into(), json!(sc.id));
    map.insert(
        "config".into(),
        serde_json::to_value(&cfg).map_err(|e| Failure::config(e.to_string()))?,
    );
    if let Some(scan) = &a.scan {
        if sc.system.n() != 1 {
            return Err(Failure::config("target scans need a one-dimensional state"));
        }
        let rows = parse_scan(scan)?
            .into_iter()
            .map(|y| {
                let estimate = value_probe(&sc.system, sc.t1, &sc.x1, &[y], &cfg)?;
                Ok(json!({ "target": [y], "estimate": estimate }))
            })
            .collect::<Run<Vec<Value>>>()?;
        map.insert("scan".into(), Value::Array(rows));
    } else {
        let target = if a.target.is_empty() {
            ctx.file
                .target
                .clone()
                .ok_or_else(|| Failure::config("value needs --target or --scan"))?
        } else {
            a.target.clone()
        };
        let estimate = value_probe(&sc.system, sc.t1, &sc.x1, &target, &cfg)?;
        map.insert("target".into(), json!(target));
        map.insert(
            "estimate".into(),
            serde_json::to_value(&estimate).map_err(|e| Failure::config(e.to_string()))?,
        );
    }
    ctx.write_json("value.json", &Value::Object(map))?;
    Ok(EXIT_OK)
}
