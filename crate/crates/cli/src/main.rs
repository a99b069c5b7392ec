//! `ncd` — config-driven driver for simulation, identification, control, and
//! gait segmentation. Every run writes a manifest (config hash, seed, tool
//! version) so reruns can be checked for byte-identical outputs.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ncd_core::gait::{
    load_gait_csv, match_events, GaitSchema, SegmentOptions, ValidationReport,
};
use ncd_core::mpc::run_closed_loop;
use ncd_core::ncd::{fit_mode_models, run_ncd, HybridModel};
use ncd_core::slip::{
    simulate_partial, Controller, HopTarget, Mode, OracleController, ScheduledOracleController,
    SlipControl, SlipLog, SlipState, STATE_CHANNELS,
};
use ncd_core::slip_learn::{
    guard_agreement, learn_slip_model, training_schedule, DitheredController, SlipLearnConfig,
};
use ncd_core::trajectory::Trajectory;
use ncd_core::Error as CoreError;
use sha2::{Digest, Sha256};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "ncd", version, about = "Switched-dynamics identification and control toolkit")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides NCD_OUT and the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress and warning messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the hopper and write trajectory/control/mode CSVs.
    Simulate,
    /// Fit a switched model from a trajectory CSV.
    NcdFit {
        /// Input trajectory CSV (time column plus one column per channel).
        /// With sibling controls.csv/modes.csv (as written by `simulate`),
        /// the fit produces a control-extended hopper model.
        data: PathBuf,
        /// Trajectory CSV of an excitation run (`controller = "excite"`);
        /// its dithered controls identify the control couplings while mode
        /// discovery stays on the main log. Requires a slip log as DATA.
        #[arg(long)]
        excitation: Option<PathBuf>,
    },
    /// Run model predictive control in closed loop against the plant.
    MpcRun {
        /// Serialized model JSON produced by ncd-fit.
        model: PathBuf,
    },
    /// Segment a gait log into phases and validate against pressure events.
    Segment {
        /// Gait CSV with kinematic (and optionally pressure) channels.
        data: PathBuf,
        /// Skip event validation; pressure channels may be absent.
        #[arg(long)]
        segmentation_only: bool,
    },
    /// Compare predicted contact events against ground truth.
    ValidateEvents {
        /// Predicted events CSV (type,side,sample,time_ms).
        predicted: PathBuf,
        /// Ground-truth events CSV in the same format.
        truth: PathBuf,
        /// Sample rate the event indices refer to, in Hz.
        #[arg(long, default_value_t = 500.0)]
        sample_rate: f64,
    },
}

/// Exit code 1: the inputs were bad. Exit code 2: the pipeline failed.
enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Parameter(_)
            | CoreError::RejectedInput(_)
            | CoreError::Load(_)
            | CoreError::Serialization(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let out = output_dir(cli, &config);
    fs::create_dir_all(&out)?;
    write_manifest(&out, &config, seed, cli)?;
    match &cli.command {
        Command::Simulate => cmd_simulate(cli, &config, seed, &out),
        Command::NcdFit { data, excitation } => {
            cmd_ncd_fit(cli, &config, data, excitation.as_deref(), &out)
        }
        Command::MpcRun { model } => cmd_mpc_run(cli, &config, seed, model, &out),
        Command::Segment { data, segmentation_only } => {
            cmd_segment(cli, &config, data, *segmentation_only, &out)
        }
        Command::ValidateEvents { predicted, truth, sample_rate } => {
            cmd_validate_events(&config, predicted, truth, *sample_rate, &out)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        None => Ok(RunConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(CliError::Validation)
        }
    }
}

fn output_dir(cli: &Cli, config: &RunConfig) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    if let Ok(env) = std::env::var("NCD_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from(config.output_dir.clone().unwrap_or_else(|| "ncd-out".into()))
}

fn command_name(cli: &Cli) -> &'static str {
    match cli.command {
        Command::Simulate => "simulate",
        Command::NcdFit { .. } => "ncd-fit",
        Command::MpcRun { .. } => "mpc-run",
        Command::Segment { .. } => "segment",
        Command::ValidateEvents { .. } => "validate-events",
    }
}

/// The manifest carries no timestamps: equal config + seed + version must
/// reproduce it byte for byte.
fn write_manifest(out: &Path, config: &RunConfig, seed: u64, cli: &Cli) -> Result<(), CliError> {
    let canonical = toml::to_string(config)
        .map_err(|e| CliError::Validation(format!("config serialization: {e}")))?;
    let hash = Sha256::digest(canonical.as_bytes());
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = serde_json::json!({
        "command": command_name(cli),
        "config_sha256": hex,
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap() + "\n")?;
    Ok(())
}

fn note(cli: &Cli, msg: &str) {
    if !cli.quiet {
        eprintln!("{msg}");
    }
}

fn cmd_simulate(cli: &Cli, config: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let slip = &config.slip;
    let params = slip.params();
    let mut controller: Box<dyn Controller> = match slip.controller.as_str() {
        "constant" => Box::new(OracleController::new(
            params,
            HopTarget { forward_velocity: slip.target_velocity, apex_height: slip.apex_height },
        )),
        "schedule" => Box::new(ScheduledOracleController::new(params, training_schedule())?),
        "excite" => {
            let inner = ScheduledOracleController::new(params, training_schedule())?;
            let hold = (0.05 / params.dt).round().max(1.0) as usize;
            Box::new(DitheredController::new(inner, params, 15.0, 0.5, hold, seed))
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown controller '{other}' (expected constant, schedule, or excite)"
            )))
        }
    };
    let s0 = SlipState { x_m: 0.0, xdot_m: 0.0, z_m: slip.start_height, zdot_m: 0.0, x_t: 0.0 };
    let (log, crashed) = simulate_partial(s0, controller.as_mut(), slip.duration, &params)?;
    fs::write(out.join("trajectory.csv"), log.trajectory.to_csv())?;
    let mut controls = String::from("time,u_stance,u_flight\n");
    let mut modes = String::from("time,mode\n");
    for (k, (u, m)) in log.controls.iter().zip(&log.modes).enumerate() {
        let t = k as f64 * params.dt;
        controls.push_str(&format!("{t:.6},{:.9},{:.9}\n", u.u_stance, u.u_flight));
        modes.push_str(&format!("{t:.6},{}\n", *m as i32));
    }
    fs::write(out.join("controls.csv"), controls)?;
    fs::write(out.join("modes.csv"), modes)?;
    note(cli, &format!("wrote {} samples to {}", log.trajectory.len(), out.display()));
    match crashed {
        None => Ok(()),
        Some(t) => Err(CliError::Runtime(format!(
            "plant crashed at t = {t:.4} s; partial logs written"
        ))),
    }
}

/// Rebuilds a full simulator log from a `simulate` output directory:
/// `trajectory.csv` plus sibling `controls.csv` and `modes.csv`. Returns
/// None when the siblings are absent (plain trajectory data).
fn load_slip_log(traj_path: &Path, traj: &Trajectory) -> Result<Option<SlipLog>, CliError> {
    let dir = traj_path.parent().unwrap_or_else(|| Path::new("."));
    let controls_path = dir.join("controls.csv");
    let modes_path = dir.join("modes.csv");
    if !controls_path.exists() || !modes_path.exists() {
        return Ok(None);
    }
    if traj.channels() != STATE_CHANNELS {
        return Ok(None);
    }
    let parse_rows = |path: &Path, fields: usize| -> Result<Vec<Vec<f64>>, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let values: Result<Vec<f64>, _> =
                line.split(',').skip(1).map(|f| f.trim().parse::<f64>()).collect();
            let values = values.map_err(|_| {
                CliError::Validation(format!("{}: line {}: bad number", path.display(), n + 1))
            })?;
            if values.len() != fields {
                return Err(CliError::Validation(format!(
                    "{}: line {}: expected {} value columns",
                    path.display(),
                    n + 1,
                    fields
                )));
            }
            rows.push(values);
        }
        Ok(rows)
    };
    let controls = parse_rows(&controls_path, 2)?;
    let modes = parse_rows(&modes_path, 1)?;
    if controls.len() != traj.len() || modes.len() != traj.len() {
        return Err(CliError::Validation(format!(
            "{}: control/mode rows do not match the trajectory length",
            dir.display()
        )));
    }
    let controls = controls
        .iter()
        .map(|r| SlipControl { u_stance: r[0], u_flight: r[1] })
        .collect();
    let modes = modes
        .iter()
        .map(|r| if r[0] == 0.0 { Mode::Stance } else { Mode::Flight })
        .collect();
    Ok(Some(SlipLog { trajectory: traj.clone(), controls, modes }))
}

/// Control-aware hopper fit: mode discovery and the guard come from `log`,
/// the control-extended per-mode dynamics from `excited` (the same log when
/// no excitation run is supplied).
fn slip_fit(
    cli: &Cli,
    config: &RunConfig,
    log: &SlipLog,
    excited: &SlipLog,
    out: &Path,
) -> Result<(), CliError> {
    let mut learn = SlipLearnConfig::default();
    learn.min_cluster_size = config.ncd.min_cluster_size;
    learn.svm_reg = config.ncd.svm_reg;
    learn.svm_epochs = config.ncd.svm_epochs;
    let outcome = learn_slip_model(log, excited, &learn)?;
    fs::write(out.join("model.json"), outcome.model.to_json()?)?;
    fs::write(out.join("labeling.csv"), outcome.labeling.to_csv(log.trajectory.dt()))?;
    let diagnostics = serde_json::json!({
        "num_modes": outcome.num_modes,
        "noise_window_fraction": outcome.noise_window_fraction,
        "guard_train_agreement": guard_agreement(&outcome, log).ok(),
        "label_modes": outcome
            .label_modes
            .iter()
            .map(|(l, m)| serde_json::json!([l, format!("{m:?}")]))
            .collect::<Vec<_>>(),
    });
    fs::write(
        out.join("diagnostics.json"),
        serde_json::to_string_pretty(&diagnostics).unwrap() + "\n",
    )?;
    if outcome.num_modes == 1 {
        note(cli, "warning: a single dynamic mode explains the data; the model has no switches");
    }
    note(cli, &format!("fit a {}-mode control-extended hopper model", outcome.num_modes));
    Ok(())
}

fn cmd_ncd_fit(
    cli: &Cli,
    config: &RunConfig,
    data: &Path,
    excitation: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let text = fs::read_to_string(data)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", data.display())))?;
    let full = Trajectory::from_csv(&text)?;
    if let Some(log) = load_slip_log(data, &full)? {
        let excited = match excitation {
            None => None,
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Validation(format!("cannot read {}: {e}", path.display()))
                })?;
                let traj = Trajectory::from_csv(&text)?;
                Some(load_slip_log(path, &traj)?.ok_or_else(|| {
                    CliError::Validation(format!(
                        "{}: excitation run lacks controls.csv/modes.csv siblings",
                        path.display()
                    ))
                })?)
            }
        };
        return slip_fit(cli, config, &log, excited.as_ref().unwrap_or(&log), out);
    }
    if excitation.is_some() {
        return Err(CliError::Validation(
            "--excitation requires slip logs with controls.csv/modes.csv siblings".into(),
        ));
    }
    // Simulator logs carry control/mode columns alongside the state; fit on
    // the state block when it is present, otherwise on every channel.
    let traj = if STATE_CHANNELS.iter().all(|c| full.channel_index(c).is_some())
        && full.dim() > STATE_CHANNELS.len()
    {
        full.select_channels(&STATE_CHANNELS)?
    } else {
        full
    };
    let ncd_config = config.ncd.ncd_config(traj.dim()).map_err(CliError::Validation)?;
    let outcome = run_ncd(&traj, &ncd_config)?;
    let model = fit_mode_models(
        &traj,
        &outcome.labeling,
        &ncd_config.basis,
        ncd_config.ridge,
        outcome.indicator.clone(),
        0,
    )?;
    fs::write(out.join("model.json"), model.to_json()?)?;
    fs::write(out.join("labeling.csv"), outcome.labeling.to_csv(traj.dt()))?;
    let diagnostics = serde_json::to_string_pretty(&outcome.diagnostics)
        .map_err(|e| CliError::Runtime(format!("diagnostics serialization: {e}")))?;
    fs::write(out.join("diagnostics.json"), diagnostics)?;
    if outcome.diagnostics.num_modes == 1 {
        note(cli, "warning: a single dynamic mode explains the data; the model has no switches");
    }
    note(
        cli,
        &format!(
            "fit {} modes over {} windows (noise fraction {:.3})",
            outcome.diagnostics.num_modes,
            outcome.diagnostics.num_windows,
            outcome.diagnostics.noise_window_fraction
        ),
    );
    Ok(())
}

fn cmd_mpc_run(
    cli: &Cli,
    config: &RunConfig,
    seed: u64,
    model_path: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let text = fs::read_to_string(model_path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", model_path.display())))?;
    let model = HybridModel::from_json(&text)?;
    let params = config.slip.params();
    let mpc_config = config.mpc.mpc_config(&params, seed);
    let s0 = SlipState {
        x_m: 0.0,
        xdot_m: 0.0,
        z_m: config.slip.start_height,
        zdot_m: 0.0,
        x_t: 0.0,
    };
    let result = run_closed_loop(&model, s0, config.mpc.duration, &params, &mpc_config)?;
    fs::write(out.join("trajectory.csv"), result.log.trajectory.to_csv())?;
    fs::write(out.join("metrics.json"), result.metrics.to_json()?)?;
    fs::write(out.join("plot.csv"), plot_csv(&result.log))?;
    note(
        cli,
        &format!(
            "closed loop: mean forward velocity {:.3} m/s, mean height {:.3} m",
            result.metrics.mean_forward_velocity, result.metrics.mean_height
        ),
    );
    if result.metrics.crashed {
        let t = result.metrics.crash_time.unwrap_or(f64::NAN);
        return Err(CliError::Runtime(format!(
            "plant crashed at t = {t:.4} s; metrics up to failure written"
        )));
    }
    Ok(())
}

/// Long-format plot data: one (time, channel, value) row per state and
/// control channel per sample.
fn plot_csv(log: &ncd_core::slip::SlipLog) -> String {
    let dt = log.trajectory.dt();
    let mut out = String::from("time,channel,value\n");
    for (k, sample) in log.trajectory.samples().iter().enumerate() {
        let t = k as f64 * dt;
        for (name, value) in log.trajectory.channels().iter().zip(sample) {
            out.push_str(&format!("{t:.6},{name},{value:.9}\n"));
        }
        if let Some(u) = log.controls.get(k) {
            out.push_str(&format!("{t:.6},u_stance,{:.9}\n", u.u_stance));
            out.push_str(&format!("{t:.6},u_flight,{:.9}\n", u.u_flight));
        }
    }
    out
}

fn cmd_segment(
    cli: &Cli,
    config: &RunConfig,
    data: &Path,
    segmentation_only: bool,
    out: &Path,
) -> Result<(), CliError> {
    let text = fs::read_to_string(data)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", data.display())))?;
    let schema = GaitSchema {
        trim_seconds: config.gait.trim_seconds,
        require_validation: config.gait.require_validation && !segmentation_only,
    };
    let record = load_gait_csv(&text, &schema)?;
    let ncd_config =
        config.ncd.ncd_config(record.analysis().dim()).map_err(CliError::Validation)?;
    let options = SegmentOptions {
        min_dwell_seconds: config.gait.min_dwell_seconds,
        max_window_ms: config.gait.max_window_ms,
        association_threshold: config.gait.association_threshold,
    };
    let segmentation = ncd_core::gait::segment_gait(&record, &ncd_config, &options)?;
    fs::write(
        out.join("labeling.csv"),
        segmentation.labeling.to_csv(record.analysis().dt()),
    )?;
    let mut events = String::from("sample,time_ms,from,to\n");
    for t in &segmentation.transitions {
        events.push_str(&format!(
            "{},{:.3},{},{}\n",
            t.index,
            t.index as f64 / record.sample_rate() * 1e3,
            t.from,
            t.to
        ));
    }
    fs::write(out.join("events.csv"), events)?;
    if let Some(truth) = &segmentation.truth {
        fs::write(out.join("truth_events.csv"), truth.to_csv(record.sample_rate()))?;
    }
    match &segmentation.report {
        Some(report) => {
            fs::write(out.join("report.json"), report.to_json()?)?;
            note(cli, &format!("segmented into {} phases; report written", report.phases));
        }
        None => note(
            cli,
            &format!(
                "segmented into {} phases; no pressure data, validation skipped",
                segmentation.labeling.num_modes
            ),
        ),
    }
    Ok(())
}

/// Parses an events CSV in the `type,side,sample,time_ms` format written by
/// `segment` and by the core event detector.
fn read_events(path: &Path) -> Result<(Vec<usize>, Vec<usize>), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut heel = Vec::new();
    let mut toe = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(CliError::Validation(format!(
                "{}: line {} has {} fields, expected type,side,sample,time_ms",
                path.display(),
                n + 1,
                fields.len()
            )));
        }
        let sample: usize = fields[2].trim().parse().map_err(|_| {
            CliError::Validation(format!(
                "{}: line {}: bad sample index '{}'",
                path.display(),
                n + 1,
                fields[2]
            ))
        })?;
        match fields[0].trim() {
            "heel_strike" => heel.push(sample),
            "toe_off" => toe.push(sample),
            other => {
                return Err(CliError::Validation(format!(
                    "{}: line {}: unknown event type '{other}'",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    heel.sort_unstable();
    toe.sort_unstable();
    Ok((heel, toe))
}

fn cmd_validate_events(
    config: &RunConfig,
    predicted: &Path,
    truth: &Path,
    sample_rate: f64,
    out: &Path,
) -> Result<(), CliError> {
    if !(sample_rate > 0.0) {
        return Err(CliError::Validation("sample rate must be positive".into()));
    }
    let (pred_heel, pred_toe) = read_events(predicted)?;
    let (truth_heel, truth_toe) = read_events(truth)?;
    let window = config.gait.max_window_ms;
    let reports: Vec<(&str, ValidationReport)> = vec![
        ("heel_strike", match_events(&pred_heel, &truth_heel, window, sample_rate)),
        ("toe_off", match_events(&pred_toe, &truth_toe, window, sample_rate)),
    ];
    let json = serde_json::json!({
        "events": reports
            .iter()
            .map(|(name, r)| serde_json::json!({ "event": name, "report": r }))
            .collect::<Vec<_>>(),
    });
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&json).unwrap() + "\n")?;
    Ok(())
}
