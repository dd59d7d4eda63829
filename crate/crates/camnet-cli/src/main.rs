//! camnet: simulate CAM beaconing networks and compute KPIs from logs.
//!
//! Thin shell over camnet-core. Exit codes: 0 on success, 1 when the
//! user's input is at fault (config validation, unparsable logs, missing
//! files), 2 on internal failures such as unwritable output.

use anyhow::{Context, Result};
use camnet_core::codec::{self, NicId, RxLogRecord, TxLogRecord};
use camnet_core::{
    awareness_horizon, engine, interval_histogram, join_link, pdr_heatmap,
    positions_from_tx_log, uplink_positions, MobilityTrace, Scenario, PRESET_NAMES,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "camnet", version, about = "CAM beaconing simulator and log analyzer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write TX/RX logs plus a run summary.
    Simulate(SimulateArgs),
    /// Compute a KPI export from a directory of logs.
    Analyze(AnalyzeArgs),
    /// Normalize a directory of raw device logs into canonical form.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario name (v2i-solo, v2i-interferer, v2v-highway).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Scenario config file (TOML).
    #[arg(long, required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Output directory for logs and the summary.
    #[arg(long, default_value = "camnet-out")]
    out: PathBuf,
    /// RNG seed; overrides the config value and the CAMNET_SEED variable.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the fully resolved configuration and exit without running.
    #[arg(long)]
    print_config: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum Kpi {
    PdrHeatmap,
    Intervals,
    Horizon,
    Uplink,
}

#[derive(Copy, Clone, ValueEnum)]
enum Band {
    Hp,
    Lp,
}

impl Band {
    fn nic(self) -> NicId {
        match self {
            Band::Hp => NicId::Hp,
            Band::Lp => NicId::Lp,
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory holding `<node>_<hp|lp>_<tx|rx>.log` files.
    log_dir: PathBuf,
    #[arg(long, value_enum)]
    kpi: Kpi,
    /// Transmitting node id.
    #[arg(long)]
    tx: Option<String>,
    /// Receiving node id.
    #[arg(long)]
    rx: Option<String>,
    /// Which NIC's logs to analyze.
    #[arg(long, value_enum, default_value_t = Band::Hp)]
    nic: Band,
    /// Heatmap cell edge, meters.
    #[arg(long, default_value_t = camnet_core::analysis::DEFAULT_CELL_SIZE_M)]
    cell_size: f64,
    /// Minimum transmissions per reported heatmap cell.
    #[arg(long, default_value_t = camnet_core::analysis::DEFAULT_MIN_SAMPLES)]
    min_samples: u32,
    /// Interval histogram bin width, microseconds.
    #[arg(long, default_value_t = camnet_core::analysis::DEFAULT_INTERVAL_BIN_US)]
    bin_us: u64,
    /// Horizon histogram bin width, meters.
    #[arg(long, default_value_t = camnet_core::analysis::DEFAULT_HORIZON_BIN_M)]
    bin_m: f64,
    /// Export file; written to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Directory of raw log files (.log or .csv).
    dataset_dir: PathBuf,
    /// Where to write the normalized logs.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Marker for failures caused by the user's input rather than by us.
#[derive(Debug)]
struct UserError(String);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

fn user_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UserError(msg.into()))
}

/// Best-effort stdout print. A reader that closes the pipe early, as in
/// `camnet replay logs | head`, must not abort the run, so a broken pipe
/// is swallowed; any other write failure still surfaces.
fn say(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.context("write to stdout"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UserError>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

// ============================================================================
// simulate
// ============================================================================

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut sc = match (&args.preset, &args.config) {
        (Some(name), _) => Scenario::preset(name).ok_or_else(|| {
            user_err(format!(
                "unknown preset {name:?}; available: {}",
                PRESET_NAMES.join(", ")
            ))
        })?,
        (None, Some(path)) => Scenario::load(path)
            .map_err(|e| user_err(format!("{}: {e}", path.display())))?,
        (None, None) => unreachable!("clap enforces one source"),
    };

    if let Some(seed) = resolve_seed(args.seed)? {
        sc.seed = seed;
    }

    if args.print_config {
        say(&sc.to_toml_string().context("serialize config")?)?;
        return Ok(());
    }

    let out = engine::run(&sc).map_err(|e| user_err(e.to_string()))?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("create {}", args.out.display()))?;
    engine::write_logs(&out, &args.out)
        .with_context(|| format!("write logs into {}", args.out.display()))?;
    let summary = format!(
        "scenario {}\nseed {}\n{}",
        out.scenario_name,
        out.seed,
        out.summary.report()
    );
    fs::write(args.out.join("summary.txt"), &summary)
        .with_context(|| format!("write {}", args.out.join("summary.txt").display()))?;
    say(&format!(
        "{summary}\nlogs written to {}\n",
        args.out.display()
    ))?;
    Ok(())
}

/// --seed beats CAMNET_SEED beats the config value (None here).
fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("CAMNET_SEED") {
        Ok(v) => {
            let seed = v
                .parse::<u64>()
                .map_err(|_| user_err(format!("CAMNET_SEED={v:?} is not a u64")))?;
            Ok(Some(seed))
        }
        Err(_) => Ok(None),
    }
}

// ============================================================================
// analyze
// ============================================================================

fn tx_log(dir: &Path, node: &str, nic: NicId) -> Result<Vec<TxLogRecord>> {
    let path = dir.join(format!("{node}_{}_tx.log", nic.file_tag()));
    codec::load_tx_log(&path).map_err(|e| user_err(format!("{}: {e}", path.display())))
}

fn rx_log(dir: &Path, node: &str, nic: NicId) -> Result<Vec<RxLogRecord>> {
    let path = dir.join(format!("{node}_{}_rx.log", nic.file_tag()));
    codec::load_rx_log(&path).map_err(|e| user_err(format!("{}: {e}", path.display())))
}

fn track_of(dir: &Path, node: &str, nic: NicId) -> Result<MobilityTrace> {
    let tx = tx_log(dir, node, nic)?;
    positions_from_tx_log(node, &tx).map_err(|e| user_err(format!("track of {node}: {e}")))
}

fn require<'a>(opt: &'a Option<String>, flag: &str, kpi: &str) -> Result<&'a str> {
    opt.as_deref()
        .ok_or_else(|| user_err(format!("--{flag} is required for --kpi {kpi}")))
}

fn emit(out: &Option<PathBuf>, content: &str, what: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("write {}", path.display()))?;
            say(&format!("{what} written to {}\n", path.display()))?;
        }
        None => say(content)?,
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let dir = &args.log_dir;
    let nic = args.nic.nic();
    match args.kpi {
        Kpi::PdrHeatmap => {
            let tx_node = require(&args.tx, "tx", "pdr-heatmap")?;
            let rx_node = require(&args.rx, "rx", "pdr-heatmap")?;
            let tx = tx_log(dir, tx_node, nic)?;
            let rx = rx_log(dir, rx_node, nic)?;
            let link =
                join_link(&tx, &rx).map_err(|e| user_err(format!("join {tx_node}->{rx_node}: {e}")))?;
            let track = track_of(dir, rx_node, nic)?;
            let map = pdr_heatmap(&link, &tx, &track, args.cell_size, args.min_samples);
            emit(&args.out, &map.to_csv(), "heatmap")?;
        }
        Kpi::Intervals => {
            let tx_node = require(&args.tx, "tx", "intervals")?;
            let tx = tx_log(dir, tx_node, nic)?;
            let hist = interval_histogram(&tx, args.bin_us);
            emit(&args.out, &hist.to_csv(), "interval histogram")?;
        }
        Kpi::Horizon => {
            let tx_node = require(&args.tx, "tx", "horizon")?;
            let rx_node = require(&args.rx, "rx", "horizon")?;
            let tx = tx_log(dir, tx_node, nic)?;
            let rx = rx_log(dir, rx_node, nic)?;
            let link =
                join_link(&tx, &rx).map_err(|e| user_err(format!("join {tx_node}->{rx_node}: {e}")))?;
            let tx_track = track_of(dir, tx_node, nic)?;
            let rx_track = track_of(dir, rx_node, nic)?;
            let h = awareness_horizon(&link, &tx, &rx, &tx_track, &rx_track, args.bin_m);
            emit(&args.out, &h.to_csv(), "horizon histogram")?;
        }
        Kpi::Uplink => {
            let tx_node = require(&args.tx, "tx", "uplink")?;
            let rx_node = require(&args.rx, "rx", "uplink")?;
            let vehicle_tx = tx_log(dir, tx_node, nic)?;
            let mac = vehicle_tx
                .first()
                .ok_or_else(|| user_err(format!("{tx_node} transmitted nothing")))?
                .src_mac;
            let rsu_rx = rx_log(dir, rx_node, nic)?;
            let positions = uplink_positions(&rsu_rx, mac);
            let mut csv = String::from("lat,lon\n");
            for (lat, lon) in &positions {
                csv.push_str(&format!("{lat:.7},{lon:.7}\n"));
            }
            emit(&args.out, &csv, "uplink positions")?;
        }
    }
    Ok(())
}

// ============================================================================
// replay
// ============================================================================

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let dir = &args.dataset_dir;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| user_err(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("log") | Some("csv")
                )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(user_err(format!(
            "no .log or .csv files in {}",
            dir.display()
        )));
    }

    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| dir.join("normalized"));
    fs::create_dir_all(&out_dir).with_context(|| format!("create {}", out_dir.display()))?;

    for path in &files {
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        let text =
            fs::read_to_string(path).map_err(|e| user_err(format!("{}: {e}", path.display())))?;
        if text.trim().is_empty() {
            return Err(user_err(format!("{}: empty file", path.display())));
        }
        // a TX row has 11 columns, an RX row 10, so the readers disagree
        // on every real layout and classification is unambiguous
        let target = out_dir.join(name.as_ref());
        let status = match codec::parse_tx_log(&text) {
            Ok(records) => {
                fs::write(&target, codec::format_tx_log(&records))
                    .with_context(|| format!("write {}", target.display()))?;
                format!("normalized {name}: {} tx records", records.len())
            }
            Err(tx_err) => match codec::parse_rx_log(&text) {
                Ok(records) => {
                    fs::write(&target, codec::format_rx_log(&records))
                        .with_context(|| format!("write {}", target.display()))?;
                    format!("normalized {name}: {} rx records", records.len())
                }
                Err(rx_err) => {
                    return Err(user_err(format!(
                        "{}: unrecognized layout (as tx log: {tx_err}; as rx log: {rx_err})",
                        path.display()
                    )));
                }
            },
        };
        say(&format!("{status}\n"))?;
    }
    say(&format!(
        "normalized logs written to {}\n",
        out_dir.display()
    ))?;
    Ok(())
}
