//! `sosnet run` and `sosnet sweep`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use sosnet::metrics::longevity;
use sosnet::output::{write_betweenness, write_deliveries, write_edges, write_phase, write_timeseries};
use sosnet::scenario::Scenario;
use sosnet::{
    run, run_sweep, BatteryDistribution, BetweennessPlan, EnergyCostTable, Protocol, RunOptions, SweepSpec,
    WorldConfig,
};

#[derive(Parser)]
#[command(name = "sosnet", version, about = "Mesh vs SOS emergency network simulator")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its time series.
    Run(RunArgs),
    /// Longevity of both protocols over a density x message-frequency grid.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    protocol: Option<Protocol>,
    #[arg(long)]
    phones: Option<usize>,
    #[arg(long)]
    msgs_per_period: Option<u32>,
    /// Also write edges_<tick>.csv every N ticks.
    #[arg(long, value_name = "N")]
    dump_edges_every: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    /// Phone counts to sweep [default: 100,200,...,800].
    #[arg(long, value_delimiter = ',')]
    phones: Vec<usize>,
    /// Messages per period to sweep [default: 1,2,...,10].
    #[arg(long, value_delimiter = ',')]
    msgs_per_period: Vec<u32>,
    /// Replicates per grid cell, using seeds seed, seed+1, ... [default: 3].
    #[arg(long)]
    seeds: Option<u64>,
    /// Concurrent runs [default: available cores].
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Simulated hours [default: 72].
    #[arg(long)]
    hours: Option<f64>,
    #[arg(long)]
    range: Option<f64>,
    /// Distance per tick (one minute).
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    height: Option<f64>,
    /// Minutes between message rounds [default: 15].
    #[arg(long)]
    msg_period_min: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Alive fraction below which a network counts as failed [default: 0.5].
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    cost_connect: Option<f64>,
    #[arg(long)]
    cost_beacon: Option<f64>,
    #[arg(long)]
    cost_send: Option<f64>,
    #[arg(long)]
    cost_receive: Option<f64>,
    #[arg(long)]
    cost_relay: Option<f64>,
    #[arg(long)]
    cost_idle: Option<f64>,
    #[arg(long)]
    battery_mean: Option<f64>,
    #[arg(long)]
    battery_sd: Option<f64>,
    /// key = value file; flags take precedence.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

/// A flag value, else the scenario value, else nothing.
fn pick<T: FromStr>(flag: Option<T>, scenario: &Scenario, key: &str) -> Result<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => Ok(scenario.get(key)?),
    }
}

fn pick_list<T: FromStr>(flag: Vec<T>, scenario: &Scenario, key: &str) -> Result<Option<Vec<T>>> {
    if !flag.is_empty() {
        return Ok(Some(flag));
    }
    let Some(raw) = scenario.get::<String>(key)? else { return Ok(None) };
    raw.split(',')
        .map(|s| s.trim().parse().map_err(|_| anyhow::anyhow!("scenario key `{key}`: cannot parse `{s}`")))
        .collect::<Result<Vec<T>>>()
        .map(Some)
}

struct Settings {
    cfg: WorldConfig,
    costs: EnergyCostTable,
    battery: BatteryDistribution,
    theta: f64,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        match &self.scenario {
            None => Ok(Scenario::default()),
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(Scenario::parse(&text)?)
            }
        }
    }

    fn settings(&self, s: &Scenario) -> Result<Settings> {
        let mut cfg = WorldConfig::default();
        cfg.width = pick(self.width, s, "width")?.unwrap_or(cfg.width);
        cfg.height = pick(self.height, s, "height")?.unwrap_or(cfg.height);
        cfg.tx_range = pick(self.range, s, "range")?.unwrap_or(cfg.tx_range);
        cfg.speed = pick(self.speed, s, "speed")?.unwrap_or(cfg.speed);
        cfg.seed = pick(self.seed, s, "seed")?.unwrap_or(cfg.seed);
        if let Some(hours) = pick(self.hours, s, "hours")? {
            cfg.horizon_ticks = whole_ticks(hours * 60.0, cfg.tick_minutes, "hours", true)?;
        }
        if let Some(minutes) = pick(self.msg_period_min, s, "msg-period-min")? {
            cfg.msg_period_ticks = whole_ticks(minutes, cfg.tick_minutes, "msg-period-min", false)?;
        }

        let mut costs = EnergyCostTable::default();
        costs.connect = pick(self.cost_connect, s, "cost-connect")?.unwrap_or(costs.connect);
        costs.beacon = pick(self.cost_beacon, s, "cost-beacon")?.unwrap_or(costs.beacon);
        costs.send = pick(self.cost_send, s, "cost-send")?.unwrap_or(costs.send);
        costs.receive = pick(self.cost_receive, s, "cost-receive")?.unwrap_or(costs.receive);
        costs.relay = pick(self.cost_relay, s, "cost-relay")?.unwrap_or(costs.relay);
        costs.idle = pick(self.cost_idle, s, "cost-idle")?.unwrap_or(costs.idle);
        costs.validate()?;

        let mut battery = BatteryDistribution::default();
        battery.mean = pick(self.battery_mean, s, "battery-mean")?.unwrap_or(battery.mean);
        battery.sd = pick(self.battery_sd, s, "battery-sd")?.unwrap_or(battery.sd);
        battery.validate()?;

        let theta = pick(self.theta, s, "theta")?.unwrap_or(0.5);
        if !(theta > 0.0 && theta < 1.0) {
            bail!("--theta must lie strictly between 0 and 1, got {theta}");
        }
        Ok(Settings { cfg, costs, battery, theta })
    }
}

fn whole_ticks(minutes: f64, tick_minutes: f64, flag: &str, allow_zero: bool) -> Result<u64> {
    let ticks = minutes / tick_minutes;
    let min = if allow_zero { 0.0 } else { 1.0 };
    if !ticks.is_finite() || ticks < min || (ticks - ticks.round()).abs() > 1e-9 {
        bail!("--{flag} must be a non-negative whole number of {tick_minutes}-minute ticks");
    }
    Ok(ticks.round() as u64)
}

/// Creates `dir` and makes sure none of `names` would be overwritten.
fn prepare_out(dir: &Path, names: &[String], force: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if force {
        return Ok(());
    }
    let existing: Vec<&String> = names.iter().filter(|n| dir.join(n).exists()).collect();
    if !existing.is_empty() {
        bail!(
            "{} already contains {}; pass --force to overwrite",
            dir.display(),
            existing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let path = dir.join(name);
    let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut out).and_then(|_| out.flush()).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let scenario = args.common.scenario()?;
    let Settings { mut cfg, costs, battery, theta } = args.common.settings(&scenario)?;
    cfg.n_phones = pick(args.phones, &scenario, "phones")?.unwrap_or(cfg.n_phones);
    cfg.msgs_per_period = pick(args.msgs_per_period, &scenario, "msgs-per-period")?.unwrap_or(cfg.msgs_per_period);
    let protocol = pick(args.protocol, &scenario, "protocol")?.unwrap_or(Protocol::Sos);
    let dump_edges_every = pick(args.dump_edges_every, &scenario, "dump-edges-every")?;
    if dump_edges_every == Some(0) {
        bail!("--dump-edges-every must be at least 1");
    }
    cfg.validate()?;

    let mut names: Vec<String> = ["timeseries.csv", "betweenness.csv", "deliveries.csv"].map(String::from).to_vec();
    if let Some(every) = dump_edges_every {
        names.extend((0..=cfg.horizon_ticks).step_by(every as usize).map(|t| format!("edges_{t}.csv")));
    }
    let out = &args.common.out;
    prepare_out(out, &names, args.common.force)?;

    info!("running {protocol} with {} phones for {} ticks", cfg.n_phones, cfg.horizon_ticks);
    let opts = RunOptions {
        betweenness: BetweennessPlan::Every,
        record_messages: true,
        dump_edges_every,
        battery,
        ..Default::default()
    };
    let result = run(cfg, costs, protocol, opts)?;

    write_file(out, "timeseries.csv", |w| write_timeseries(w, &[&result]))?;
    write_file(out, "betweenness.csv", |w| write_betweenness(w, &result))?;
    write_file(out, "deliveries.csv", |w| write_deliveries(w, &result))?;
    for (tick, edges) in &result.edge_dumps {
        write_file(out, &format!("edges_{tick}.csv"), |w| write_edges(w, edges))?;
    }

    let last = result.snapshots.last().expect("at least the initial snapshot");
    let life = longevity(&result.alive_series(), theta);
    println!("protocol      {protocol}");
    println!("longevity     {life} h (alive fraction below {theta})");
    println!("alive         {:.4} at {} h", last.participation_alive, last.hour);
    println!("connected     {:.4}", last.participation_connected);
    println!("gini          {:.4}", last.gini_alive);
    println!(
        "messages      {} delivered, {} dropped, {} pending",
        result.report.delivered, result.report.dropped, result.report.pending
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let scenario = args.common.scenario()?;
    let Settings { cfg, costs, battery, theta } = args.common.settings(&scenario)?;
    let replicates = pick(args.seeds, &scenario, "seeds")?.unwrap_or(3);
    if replicates == 0 {
        bail!("--seeds must be at least 1");
    }
    let mut spec = SweepSpec::standard(cfg.clone(), costs, (cfg.seed..cfg.seed + replicates).collect(), theta);
    spec.battery = battery;
    if let Some(phones) = pick_list(args.phones, &scenario, "phones")? {
        spec.phones = phones;
    }
    if let Some(msgs) = pick_list(args.msgs_per_period, &scenario, "msgs-per-period")? {
        spec.msgs_per_period = msgs;
    }
    for &n in &spec.phones {
        WorldConfig { n_phones: n, ..cfg.clone() }.validate()?;
    }
    for &m in &spec.msgs_per_period {
        WorldConfig { msgs_per_period: m, ..cfg.clone() }.validate()?;
    }
    let jobs = pick(args.jobs, &scenario, "jobs")?
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }

    let out = &args.common.out;
    prepare_out(out, &["phase.csv".to_string()], args.common.force)?;
    let runs = spec.phones.len() * spec.msgs_per_period.len() * spec.seeds.len() * 2;
    info!("sweeping {runs} runs on {jobs} threads");
    let rows = run_sweep(&spec, jobs)?;
    write_file(out, "phase.csv", |w| write_phase(w, &rows))?;

    println!("{:>8} {:>8} {:>6} {:>10} {:>10} {:>8}", "phones", "density", "msgs", "mesh_h", "sos_h", "diff_h");
    for r in rows.iter().filter(|r| r.seed.is_none()) {
        println!(
            "{:>8} {:>8.2} {:>6} {:>10.2} {:>10.2} {:>8.2}",
            r.n_phones, r.density, r.msgs_per_period, r.longevity_mesh_h, r.longevity_sos_h, r.diff_h
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
