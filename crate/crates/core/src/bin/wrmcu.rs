use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wrmcu::config::Settings;
use wrmcu::control::{PoolMode, Timing};
use wrmcu::messages::{encode_message, FrameDecoder, Message, Order, SetpointKind, Source};
use wrmcu::scenario::{parse_rc_trace, write_csv, write_rc_trace, InjectSource, RunOptions, Runner, Scenario, Summary};

#[derive(Parser)]
#[command(name = "wrmcu", version, about = "Weeding-robot controller simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunMode {
    Det,
    Threaded,
}

#[derive(Clone, Copy, ValueEnum)]
enum TimingArg {
    Wall,
    None,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Built-in scenario 1-4 or a scenario file.
    #[arg(long, default_value = "1")]
    scenario: String,
    #[arg(long)]
    cycles: Option<u64>,
    /// Control period, also used as the compute budget.
    #[arg(long)]
    cycle_ms: Option<u64>,
    #[arg(long, value_enum, default_value = "det")]
    mode: RunMode,
    #[arg(long)]
    source: Option<InjectSource>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// key=value settings file layered over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-cycle metrics CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to `none` in det mode so CSVs are reproducible.
    #[arg(long, value_enum)]
    timing: Option<TimingArg>,
    /// Raw telemetry frames written by the controller.
    #[arg(long)]
    telemetry: Option<PathBuf>,
    /// Replay recorded PC bytes instead of the schedule.
    #[arg(long, conflicts_with = "rc_trace")]
    pc_replay: Option<PathBuf>,
    /// Replay recorded RC edges (time_us,channel,level) instead of the schedule.
    #[arg(long)]
    rc_trace: Option<PathBuf>,
    /// Write the RC edges generated from the schedule.
    #[arg(long)]
    record_rc: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run(RunArgs),
    /// Run the four built-in scenarios with wall-clock timing and print avg/max compute time.
    Summary {
        #[arg(long)]
        cycles: Option<u64>,
        #[arg(long, value_enum, default_value = "det")]
        mode: RunMode,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Frame debugging.
    Codec {
        #[command(subcommand)]
        op: CodecOp,
    },
}

#[derive(Subcommand)]
enum CodecOp {
    /// Print an encoded frame as hex.
    Encode {
        #[command(subcommand)]
        msg: EncodeMsg,
    },
    /// Decode hex bytes (spaces allowed) and print every message found.
    Decode { hex: Vec<String> },
}

#[derive(Subcommand)]
enum EncodeMsg {
    Stop,
    Setpoint {
        #[arg(long, value_enum, default_value = "velocity")]
        kind: KindArg,
        /// Four comma-separated wheel values.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        wheels: Vec<f64>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        steering: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Velocity,
    Tension,
    Current,
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn load_settings(path: Option<&PathBuf>) -> CliResult<Settings> {
    let mut s = Settings::with_defaults();
    if let Some(p) = path {
        s.merge_text(&fs::read_to_string(p)?)?;
    }
    Ok(s)
}

fn pool_mode(m: RunMode) -> PoolMode {
    match m {
        RunMode::Det => PoolMode::Sequential,
        RunMode::Threaded => PoolMode::Threaded,
    }
}

fn print_summary(rows: &[Summary]) {
    println!(
        "{:<4} {:<72} {:>9} {:>9} {:>6}",
        "Test", "Scenario", "Avg (ms)", "Max (ms)", "Over"
    );
    for s in rows {
        println!(
            "{:<4} {:<72} {:>9.3} {:>9.3} {:>6}",
            s.scenario, s.description, s.avg_ms, s.max_ms, s.violations
        );
    }
}

fn run(args: RunArgs) -> CliResult<bool> {
    let settings = load_settings(args.config.as_ref())?;
    let mut scenario = Scenario::resolve(&args.scenario)?;
    if let Some(n) = args.cycles {
        scenario = scenario.with_cycles(n);
    }
    if let Some(ms) = args.cycle_ms {
        scenario.overrides.set("timing.cycle_ms", ms);
        scenario.cycle_budget_ms = ms as f64;
    }
    let timing = match (args.timing, args.mode) {
        (Some(TimingArg::Wall), _) | (None, RunMode::Threaded) => Timing::Wall,
        (Some(TimingArg::None), _) | (None, RunMode::Det) => Timing::Off,
    };
    let opts = RunOptions {
        mode: pool_mode(args.mode),
        seed: args.seed,
        timing,
        source: args.source,
        pc_replay: args.pc_replay.as_ref().map(fs::read).transpose()?,
        rc_trace: match &args.rc_trace {
            Some(p) => Some(parse_rc_trace(&fs::read_to_string(p)?)?),
            None => None,
        },
        telemetry_sink: match &args.telemetry {
            Some(p) => Some(Box::new(BufWriter::new(File::create(p)?))),
            None => None,
        },
        ..RunOptions::default()
    };
    let mut runner = Runner::new(&scenario, &settings, opts)?;
    let mut metrics = Vec::new();
    while !runner.done() {
        metrics.push(runner.step()?);
    }
    if let Some(p) = &args.record_rc {
        write_rc_trace(runner.rc_edges(), BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = &args.out {
        write_csv(&metrics, BufWriter::new(File::create(p)?))?;
    }
    let summary = Summary::from_metrics(&scenario, &metrics);
    print_summary(std::slice::from_ref(&summary));
    if summary.empty {
        println!("no cycles run");
    }
    if summary.faults > 0 {
        eprintln!("{} cycle(s) reported a fault", summary.faults);
    }
    Ok(summary.ok())
}

fn summary(cycles: Option<u64>, mode: RunMode, config: Option<&PathBuf>) -> CliResult<bool> {
    let settings = load_settings(config)?;
    let mut rows = Vec::new();
    for n in 1..=4 {
        let mut s = Scenario::builtin(n).expect("built-in scenario");
        if let Some(c) = cycles {
            s = s.with_cycles(c);
        }
        let opts = RunOptions {
            mode: pool_mode(mode),
            timing: Timing::Wall,
            ..RunOptions::default()
        };
        rows.push(Runner::new(&s, &settings, opts)?.run()?.summary);
    }
    print_summary(&rows);
    Ok(rows.iter().all(Summary::ok))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
}

fn parse_hex(parts: &[String]) -> CliResult<Vec<u8>> {
    let digits: String = parts.concat().chars().filter(|c| !c.is_whitespace()).collect();
    if !digits.len().is_multiple_of(2) {
        return Err("odd number of hex digits".into());
    }
    (0..digits.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&digits[i..i + 2], 16).map_err(Into::into))
        .collect()
}

fn codec(op: CodecOp) -> CliResult<bool> {
    match op {
        CodecOp::Encode { msg } => {
            let order = match msg {
                EncodeMsg::Stop => Order::stop(Source::Pc),
                EncodeMsg::Setpoint { kind, wheels, steering } => Order::Setpoint {
                    kind: match kind {
                        KindArg::Velocity => SetpointKind::Velocity,
                        KindArg::Tension => SetpointKind::Tension,
                        KindArg::Current => SetpointKind::Current,
                    },
                    wheels: wheels.try_into().map_err(|_| "--wheels needs exactly four values")?,
                    steering,
                    source: Source::Pc,
                },
            };
            println!("{}", hex(&encode_message(&order.into())?));
            Ok(true)
        }
        CodecOp::Decode { hex } => {
            let bytes = parse_hex(&hex)?;
            let mut ok = true;
            let mut dec = FrameDecoder::new();
            let results = dec.feed_all(&bytes);
            if results.is_empty() {
                println!("no complete frame");
                ok = false;
            }
            for r in results {
                match r {
                    Ok(Message::Order(o)) => println!("{o:?}"),
                    Ok(Message::Telemetry(t)) => println!("{t:?}"),
                    Err(e) => {
                        println!("error: {e}");
                        ok = false;
                    }
                }
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Summary { cycles, mode, config } => summary(cycles, mode, config.as_ref()),
        Command::Codec { op } => codec(op),
    };
    let _ = io::stdout().flush();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
