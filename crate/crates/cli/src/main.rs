//! `qsmn`: run scenarios, compare placements, demo QKD and trace a handshake.
//!
//! Exit codes: 0 success, 2 configuration or usage error (including a missing
//! config file), 3 output I/O error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use log::info;

use qsmn_core::aka::transcript::{run_transcript, Tamper as TranscriptTamper, TranscriptOptions};
use qsmn_core::crypto::kem::LweParameters;
use qsmn_core::kms::AuditRecord;
use qsmn_core::qkd::{run_bb84_round, run_bb84_round_traced, write_trace_csv, Eavesdropper, QkdLinkConfig, RoundStatus};
use qsmn_core::sim::{
    self, compare_placements, comparison_rows, inject_adversary, load_world, write_comparison_csv, AdversaryConfig,
    ComparisonRow, PlacementSet, World,
};

#[derive(Parser, Debug)]
#[command(name = "qsmn", version, about = "Quantum-secured mobile network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "QSMN_OUT", default_value = "qsmn-out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict protection to one placement option, or all three.
    #[arg(long, global = true, value_enum)]
    placement: Option<PlacementArg>,
    /// Inject an adversary.
    #[arg(long, global = true, value_enum)]
    tamper: Option<TamperArg>,
    /// Hybrid PQC + classical key schedule.
    #[arg(long, global = true)]
    hybrid: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write metrics.csv, trace.ndjson and kms_audit.csv.
    Run,
    /// Run the scenario under each single placement and all three.
    ComparePlacements,
    /// BB84 rounds with and without an intercept-resend eavesdropper.
    QkdDemo {
        #[arg(long, default_value_t = 5)]
        rounds: u32,
    },
    /// One handshake, message by message.
    HandshakeTrace,
    /// Check scenario files without running them.
    Validate {
        /// Additional scenario files.
        paths: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlacementArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    #[value(name = "all")]
    All,
}

impl PlacementArg {
    fn set(self) -> PlacementSet {
        match self {
            PlacementArg::One => PlacementSet::OPTION_1,
            PlacementArg::Two => PlacementSet::OPTION_2,
            PlacementArg::Three => PlacementSet::OPTION_3,
            PlacementArg::All => PlacementSet::ALL,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TamperArg {
    Signature,
    Response,
    Qkd,
}

enum Failure {
    Config(anyhow::Error),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Io(e) => e,
        }
    }
}

type Outcome = Result<(), Failure>;

fn io<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Io)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Run => cmd_run(&cli),
        Command::ComparePlacements => cmd_compare(&cli),
        Command::QkdDemo { rounds } => cmd_qkd_demo(&cli, *rounds),
        Command::HandshakeTrace => cmd_handshake_trace(&cli),
        Command::Validate { paths } => cmd_validate(&cli, paths),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn load(path: &Path) -> Result<World, Failure> {
    load_world(path).map_err(|e| Failure::Config(anyhow::anyhow!("{}: {e}", path.display())))
}

fn require_config(cli: &Cli) -> Result<&Path, Failure> {
    cli.config.as_deref().ok_or_else(|| Failure::Config(anyhow::anyhow!("--config PATH is required")))
}

/// Loads the scenario and applies the command-line overrides.
fn world(cli: &Cli) -> Result<World, Failure> {
    let mut w = load(require_config(cli)?)?;
    if let Some(seed) = cli.seed {
        w = w.with_seed(seed);
    }
    if let Some(p) = cli.placement {
        w = w.with_placements(p.set());
    }
    if cli.hybrid {
        w.crypto.hybrid = true;
    }
    if let Some(t) = cli.tamper {
        let first_ue = w.topology.ues.first().map(|u| u.id).unwrap_or(0);
        let model = match t {
            TamperArg::Signature => AdversaryConfig::ChallengeTamper { ue: first_ue },
            TamperArg::Response => AdversaryConfig::ResponseTamper { ue: first_ue },
            TamperArg::Qkd => {
                let bs = w.topology.base_stations[0].id;
                if !w.placements.bs_core_qkd {
                    log::warn!("--tamper qkd targets backhaul:{bs}, which this placement does not protect");
                }
                AdversaryConfig::QkdEve { link: format!("backhaul:{bs}"), fraction: None }
            }
        };
        w = inject_adversary(w, &model).map_err(|e| Failure::Config(e.into()))?;
    }
    Ok(w)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    info!("writing {}", path.display());
    io(File::create(&path).map(BufWriter::new).with_context(|| format!("cannot create {}", path.display())))
}

fn out_dir(cli: &Cli) -> Result<&Path, Failure> {
    io(fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display())))?;
    Ok(&cli.out)
}

fn cmd_run(cli: &Cli) -> Outcome {
    let w = world(cli)?;
    let out = sim::run(&w);
    let dir = out_dir(cli)?;
    io(out.report.write_csv(create(dir, "metrics.csv")?).context("writing metrics.csv"))?;
    io(sim::write_trace(&out.trace, create(dir, "trace.ndjson")?).context("writing trace.ndjson"))?;
    let mut audit = create(dir, "kms_audit.csv")?;
    io(write_audit(&out.audit, &mut audit).context("writing kms_audit.csv"))?;

    let t = out.report.total();
    let ue = out.report.ue_total();
    let e = &out.report.energy_table;
    let lat = t.latency();
    println!("scenario      placement {}  seed {}  horizon {} ms", w.placements, w.seed, w.horizon_ms);
    println!("topology      {} UE, {} BS, {} handovers", w.topology.ues.len(), w.topology.base_stations.len(), out.report.handovers);
    println!("handshakes    {} (rekeys {}), established {}, failed {}", ue.handshakes, ue.rekeys, ue.established, t.failed);
    println!("qkd           rounds {}, aborted {}, keys ingested {}, consumed {}", t.qkd_rounds, t.qkd_aborts, t.keys_ingested, t.keys_consumed);
    println!("forwarding    blocked {}, unprotected {}", t.blocked_forwards, t.unprotected_forwards);
    println!("traffic       sent {}, delivered {}, dropped {}", t.messages_sent, t.messages_delivered, t.messages_dropped);
    println!("latency ms    mean {:.2}, p95 {}, max {}", lat.mean_ms, lat.p95_ms, lat.max_ms);
    println!(
        "energy J      handshake {:.6}, traffic {:.6}, qkd {:.6}, total {:.6} (placeholder cost table)",
        t.energy_handshake(e),
        t.energy_traffic(e),
        t.energy_qkd(e),
        t.total_energy(e)
    );
    println!("outputs       {}", dir.display());
    Ok(())
}

fn cmd_compare(cli: &Cli) -> Outcome {
    let w = world(cli)?;
    let runs = compare_placements(&w);
    let rows = comparison_rows(&runs);
    let dir = out_dir(cli)?;
    io(write_comparison_csv(&rows, create(dir, "comparison.csv")?).context("writing comparison.csv"))?;

    println!("{} handovers across {} UE", w.handover_count(), w.topology.ues.len());
    println!("{:<10} {:>10} {:>7} {:>10} {:>9} {:>9} {:>8} {:>12}", "placement", "handshakes", "rekeys", "rekeys/ho", "qkd_keys", "seg_keys", "blocked", "energy_J");
    for r in &rows {
        println!(
            "{:<10} {:>10} {:>7} {:>10.3} {:>9} {:>9} {:>8} {:>12.6}",
            r.placement, r.ue_handshakes, r.rekeys, r.rekeys_per_handover, r.keys_consumed, r.segment_keys,
            r.blocked_forwards, r.total_energy_j
        );
    }
    let o1 = &rows[0];
    if o1.rekeys == o1.handovers {
        println!("option-1 rekeys = handovers = {}", o1.handovers);
    } else {
        println!("option-1 rekeys {} != handovers {}", o1.rekeys, o1.handovers);
    }
    let singles = &rows[..3];
    let mut by_count: Vec<&ComparisonRow> = singles.iter().collect();
    by_count.sort_by_key(|r| (r.segment_key_establishments, r.ue_handshakes));
    let mut by_energy: Vec<&ComparisonRow> = singles.iter().collect();
    by_energy.sort_by(|a, b| a.total_energy_j.total_cmp(&b.total_energy_j));
    let rank = |v: &[&ComparisonRow], val: &dyn Fn(&ComparisonRow) -> String| {
        v.iter().map(|r| format!("{} ({})", r.placement, val(r))).collect::<Vec<_>>().join(" < ")
    };
    println!(
        "ranking by key establishments (exact counts): {}",
        rank(&by_count, &|r| r.segment_key_establishments.to_string())
    );
    println!(
        "ranking by energy (placeholder cost table):   {}",
        rank(&by_energy, &|r| format!("{:.6} J", r.total_energy_j))
    );
    println!("outputs {}", dir.display());
    Ok(())
}

fn cmd_qkd_demo(cli: &Cli, rounds: u32) -> Outcome {
    let base = match &cli.config {
        Some(p) => load(p)?.qkd.link_config(Eavesdropper::None),
        None => QkdLinkConfig::default(),
    };
    let seed = cli.seed.unwrap_or(0);
    let dir = out_dir(cli)?;
    let mut csv = create(dir, "qkd_demo.csv")?;
    let mut lines = vec!["eavesdropper,round,sifted_fraction,qber,status,extractable_bits".to_string()];
    println!("{:<22} {:>5} {:>8} {:>8} {:>10}", "eavesdropper", "round", "sifted", "qber", "status");
    for (label, eve) in [("none", Eavesdropper::None), ("intercept-resend-all", Eavesdropper::InterceptResendAll)] {
        let cfg = QkdLinkConfig { eavesdropper: eve, ..base.clone() };
        for i in 0..rounds {
            let round_seed = [seed.to_be_bytes(), (i as u64).to_be_bytes()].concat();
            let r = run_bb84_round(&cfg, &round_seed, 0).map_err(|e| Failure::Config(e.into()))?;
            let status = if r.status == RoundStatus::Distilled { "distilled" } else { "aborted" };
            println!("{label:<22} {i:>5} {:>8.4} {:>8.4} {status:>10}", r.sifted_fraction, r.qber_estimate);
            lines.push(format!("{label},{i},{},{},{status},{}", r.sifted_fraction, r.qber_estimate, r.extractable_bits()));
        }
    }
    io(csv.write_all( (lines.join("\n") + "\n").as_bytes()).and_then(|_| csv.flush()).context("writing qkd_demo.csv"))?;
    let cfg = QkdLinkConfig { eavesdropper: Eavesdropper::InterceptResendAll, ..base };
    let (_, pulses) = run_bb84_round_traced(&cfg, &seed.to_be_bytes(), 0).map_err(|e| Failure::Config(e.into()))?;
    io(write_trace_csv(&pulses, create(dir, "qkd_pulses.csv")?).context("writing qkd_pulses.csv"))?;
    println!("abort threshold {} (QBER above it aborts)", base.qber_abort_threshold);
    println!("outputs {}", dir.display());
    Ok(())
}

fn cmd_handshake_trace(cli: &Cli) -> Outcome {
    let mut opts = TranscriptOptions::default();
    if let Some(p) = &cli.config {
        let w = load(p)?;
        opts.params = w.crypto.params.parameters();
        opts.concealment = w.crypto.concealment;
        opts.hybrid = w.crypto.hybrid;
    }
    opts.seed = cli.seed.unwrap_or(opts.seed);
    opts.hybrid |= cli.hybrid;
    opts.tamper = match cli.tamper {
        None => None,
        Some(TamperArg::Signature) => Some(TranscriptTamper::Signature),
        Some(TamperArg::Response) => Some(TranscriptTamper::Response),
        Some(TamperArg::Qkd) => {
            return Err(Failure::Config(anyhow::anyhow!("--tamper qkd applies to run and compare-placements")))
        }
    };
    let params: &LweParameters = &opts.params;
    println!("parameters n={} q={} eta={}, hybrid {}, concealment {}", params.n(), params.q(), params.eta(), opts.hybrid, opts.concealment);
    print!("{}", run_transcript(&opts).render());
    Ok(())
}

fn cmd_validate(cli: &Cli, paths: &[PathBuf]) -> Outcome {
    let all: Vec<&PathBuf> = cli.config.iter().chain(paths).collect();
    if all.is_empty() {
        return Err(Failure::Config(anyhow::anyhow!("nothing to validate; pass --config PATH or paths")));
    }
    for p in all {
        let w = load(p)?;
        println!(
            "{}: ok ({} UE, {} BS, {} handovers, placement {})",
            p.display(),
            w.topology.ues.len(),
            w.topology.base_stations.len(),
            w.handover_count(),
            w.placements
        );
    }
    Ok(())
}

fn write_audit(records: &[AuditRecord], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "time,event,key_id,link,state_from,state_to")?;
    for r in records {
        writeln!(out, "{r}")?;
    }
    out.flush()
}
