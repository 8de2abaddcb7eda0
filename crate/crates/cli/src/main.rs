//! Command-line harness: single scenario runs, scaling sweeps,
//! analytical-model tables, model-vs-simulation comparison, and seeded
//! adversarial fuzzing. Exit status 0 means every invariant held.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hamster_core::perf::{self, ModelParams};
use hamster_core::scenario::{
    adversarial_config, compare_model, csv_header, run_scenario, sluggish_config, Protocol,
    RunReport, ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "hamster", version, about = "Coded-dispersal consensus simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and report what happened.
    Run(RunArgs),
    /// Sweep cluster sizes and emit one CSV row per run.
    Sweep(SweepArgs),
    /// Print the closed-form cost model for one configuration.
    Model(ModelArgs),
    /// Run the simulator and the model side by side.
    Compare(RunArgs),
    /// Seeded randomized adversarial runs; violations fail the command.
    Fuzz(FuzzArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON scenario file; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    /// hamster | sync_baseline
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    f: Option<usize>,
    /// Requests per block.
    #[arg(long)]
    batch: Option<usize>,
    /// Outstanding client requests.
    #[arg(long)]
    pool: Option<usize>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Synchrony bound in seconds.
    #[arg(long)]
    delta: Option<f64>,
    /// Maximum propagation delay in seconds.
    #[arg(long)]
    prop_max: Option<f64>,
    /// Network bandwidth in bytes per second.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Commit by message quorum instead of a local timeout.
    #[arg(long)]
    sluggish_mode: bool,
    /// Skip post-commit block re-dispersal.
    #[arg(long)]
    no_follow: bool,
    /// Record and print the event-trace hash.
    #[arg(long)]
    trace: bool,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
    /// Print a CSV header and row instead of prose.
    #[arg(long)]
    csv: bool,
}

impl RunArgs {
    fn build(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?
            }
            None => ScenarioConfig::default(),
        };
        if let Some(name) = &self.name {
            cfg.name = name.clone();
        }
        if let Some(p) = &self.protocol {
            cfg.protocol = parse_protocol(p)?;
        }
        if let Some(n) = self.n {
            cfg.n = n;
            if self.f.is_none() && self.config.is_none() {
                cfg.f = (n - 1) / 2;
            }
        }
        if let Some(f) = self.f {
            cfg.f = f;
        }
        if let Some(b) = self.batch {
            cfg.batch_size = b;
            if self.pool.is_none() && cfg.pool_size < 4 * b {
                cfg.pool_size = 4 * b;
            }
        }
        if let Some(p) = self.pool {
            cfg.pool_size = p;
        }
        if let Some(d) = self.duration {
            cfg.duration_s = d;
        }
        if let Some(d) = self.delta {
            cfg.delta_s = d;
        }
        if let Some(p) = self.prop_max {
            cfg.prop_delay_max_s = p;
        }
        if let Some(b) = self.bandwidth {
            cfg.bandwidth_bytes_per_sec = b;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.sluggish_mode {
            cfg.sluggish_mode = true;
        }
        if self.no_follow {
            cfg.follow_enabled = false;
        }
        if self.trace {
            cfg.record_trace = true;
        }
        Ok(cfg)
    }
}

fn parse_protocol(s: &str) -> Result<Protocol> {
    match s {
        "hamster" => Ok(Protocol::Hamster),
        "sync_baseline" | "baseline" => Ok(Protocol::SyncBaseline),
        other => bail!("unknown protocol '{other}' (use hamster or sync_baseline)"),
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "5,9,17,33")]
    nodes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "hamster,sync_baseline")]
    protocols: Vec<String>,
    /// Target block payload in KiB (requests are 32-byte digests).
    #[arg(long, default_value_t = 160.0)]
    block_kib: f64,
    #[arg(long, default_value_t = 12.5e6)]
    bandwidth: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0.03)]
    prop_max: f64,
    #[arg(long, default_value_t = 6.0)]
    duration: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    no_follow: bool,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 9)]
    n: usize,
    /// Defaults to (n-1)/2.
    #[arg(long)]
    f: Option<usize>,
    #[arg(long, default_value_t = 100_000.0)]
    m_bytes: f64,
    #[arg(long, default_value_t = 1e7)]
    bandwidth: f64,
    /// Mean propagation delay in seconds.
    #[arg(long, default_value_t = 0.05)]
    delta_p: f64,
    #[arg(long, default_value_t = 1e-9)]
    t_field: f64,
    #[arg(long, default_value_t = 1e-6)]
    t_hash: f64,
    #[arg(long, default_value_t = 5e-5)]
    t_sig: f64,
    #[arg(long, default_value_t = 1e-4)]
    t_verify: f64,
    /// Also print a block-size table showing the regime shift.
    #[arg(long)]
    sweep_m: bool,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, value_delimiter = ',', default_value = "3,5,9")]
    nodes: Vec<usize>,
    /// Mix sluggish honest nodes in (uses quorum-commit mode).
    #[arg(long)]
    sluggish: bool,
    #[arg(long, default_value_t = 0)]
    seed0: u64,
    /// Print one line per run instead of only failures.
    #[arg(long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run(args) => cmd_run(&args),
        Cmd::Sweep(args) => cmd_sweep(&args),
        Cmd::Model(args) => cmd_model(&args),
        Cmd::Compare(args) => cmd_compare(&args),
        Cmd::Fuzz(args) => cmd_fuzz(&args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let cfg = args.build()?;
    let report = run_scenario(&cfg).map_err(anyhow::Error::msg)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else if args.csv {
        println!("{}", csv_header());
        println!("{}", report.csv_row());
    } else {
        print_report(&report);
    }
    Ok(report.ok())
}

fn print_report(r: &RunReport) {
    println!(
        "scenario '{}': {} n={} f={} batch={} over {}s",
        r.name,
        r.protocol.label(),
        r.n,
        r.f,
        r.batch_size,
        r.duration_s
    );
    println!(
        "  committed {} requests ({:.3} kops), mean latency {:.4} s",
        r.completed_requests, r.throughput_kops, r.mean_latency_s
    );
    match r.mean_round_s {
        Some(round) => println!(
            "  quorum height {}, max view {}, round {:.1} ms",
            r.max_height_quorum,
            r.max_view,
            round * 1e3
        ),
        None => println!(
            "  quorum height {}, max view {}, round n/a",
            r.max_height_quorum, r.max_view
        ),
    }
    println!(
        "  traffic: total {:.2} MB, max node {:.2} MB ({:.2}x mean)",
        r.bytes_total as f64 / 1e6,
        r.bytes_max_node as f64 / 1e6,
        r.bytes_max_node as f64 / r.bytes_mean_node.max(1.0)
    );
    let fmt_margin = |m: Option<f64>| match m {
        Some(v) => format!("{v:+.4} s"),
        None => "n/a".to_string(),
    };
    println!(
        "  timers: worst vote margin {}, worst new-view margin {}",
        fmt_margin(r.vote_margin_s),
        fmt_margin(r.new_view_margin_s)
    );
    println!(
        "  faults: blames {}, evidence {}, sync violations {}, unredeemed {}",
        r.honest_blames, r.evidence_events, r.delta_violations, r.unredeemed_commits
    );
    if let Some(h) = &r.trace_hash {
        println!("  trace {h}");
    }
    if r.violations.is_empty() {
        println!("violations: none");
    } else {
        println!("violations ({}):", r.violations.len());
        for v in &r.violations {
            println!("  - {v}");
        }
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<bool> {
    let batch = ((args.block_kib * 1024.0) / 32.0).round().max(1.0) as usize;
    let mut rows = vec![csv_header().to_string()];
    let mut all_ok = true;
    for &n in &args.nodes {
        if n < 3 || n % 2 == 0 {
            bail!("cluster sizes must be odd and at least 3, got {n}");
        }
        for proto in &args.protocols {
            let protocol = parse_protocol(proto)?;
            let cfg = ScenarioConfig {
                name: format!("sweep-{}-n{n}", protocol.label()),
                protocol,
                n,
                f: (n - 1) / 2,
                follow_enabled: protocol == Protocol::Hamster && !args.no_follow,
                delta_s: args.delta,
                prop_delay_max_s: args.prop_max,
                bandwidth_bytes_per_sec: args.bandwidth,
                batch_size: batch,
                pool_size: 4 * batch,
                duration_s: args.duration,
                seed: args.seed,
                ..ScenarioConfig::default()
            };
            let report = run_scenario(&cfg).map_err(anyhow::Error::msg)?;
            eprintln!(
                "{}: height {}, {:.3} kops, total {:.2} MB, max node {:.2} MB{}",
                cfg.name,
                report.max_height_quorum,
                report.throughput_kops,
                report.bytes_total as f64 / 1e6,
                report.bytes_max_node as f64 / 1e6,
                if report.ok() { "" } else { "  [VIOLATIONS]" }
            );
            all_ok &= report.ok();
            rows.push(report.csv_row());
        }
    }
    let text = rows.join("\n") + "\n";
    match &args.out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(all_ok)
}

fn cmd_model(args: &ModelArgs) -> Result<bool> {
    let f = args.f.unwrap_or((args.n - 1) / 2);
    if args.n < 2 * f + 1 || f == 0 {
        bail!("need n >= 2f+1 with f >= 1");
    }
    let p = ModelParams {
        n: args.n,
        k: f + 1,
        m_bytes: args.m_bytes,
        bandwidth_bytes_per_sec: args.bandwidth,
        delta_p_s: args.delta_p,
        t_field_op_s: args.t_field,
        t_hash_s: args.t_hash,
        t_sig_s: args.t_sig,
        t_verify_s: args.t_verify,
    };
    let round = perf::round_time(&p);
    let sync = perf::sync_round_time(&p);
    let b = perf::breakdown(&p);
    println!(
        "n={} k={} m={:.0} B, bandwidth {:.3e} B/s, mean propagation {} s",
        args.n,
        f + 1,
        args.m_bytes,
        args.bandwidth,
        args.delta_p
    );
    println!("  propose    {:.6} s", perf::propose_time(&p));
    println!("  re-propose {:.6} s", perf::repropose_time(&p));
    println!("  vote       {:.6} s", perf::vote_time(&p));
    println!(
        "  round      {:.6} s  (propagation {:.4}, transmission {:.4}, compute {:.4}; {:?}-dominant)",
        round, b.propagation_s, b.transmission_s, b.computation_s, b.dominant()
    );
    println!("  baseline   {:.6} s  (round gain {:.2}x)", sync, sync / round);
    println!("  follow     +{:.6} s when enabled", perf::follow_time(&p));
    println!(
        "  throughput gain limits: transmission-dominant {:.2} (= 2k/3), propagation-dominant {:.2}",
        perf::transmission_dominant_gain(f + 1),
        perf::PROPAGATION_DOMINANT_GAIN
    );
    if args.sweep_m {
        println!("\n  {:>12}  {:>10}  {:>10}  {:>6}  regime", "m (bytes)", "round (s)", "sync (s)", "gain");
        let mut m = 1e3;
        while m <= 1e9 {
            let mut q = p;
            q.m_bytes = m;
            let r = perf::round_time(&q);
            let s = perf::sync_round_time(&q);
            println!(
                "  {:>12.0}  {:>10.4}  {:>10.4}  {:>6.2}  {:?}",
                m,
                r,
                s,
                s / r,
                perf::breakdown(&q).dominant()
            );
            m *= 10.0;
        }
    }
    Ok(true)
}

fn cmd_compare(args: &RunArgs) -> Result<bool> {
    let cfg = args.build()?;
    let cmp = compare_model(&cfg).map_err(anyhow::Error::msg)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&cmp)?);
        return Ok(cmp.report.ok());
    }
    println!(
        "model round {:.4} s (propagation {:.4}, transmission {:.4}, compute {:.4}; {:?}-dominant)",
        cmp.model_round_s,
        cmp.breakdown.propagation_s,
        cmp.breakdown.transmission_s,
        cmp.breakdown.computation_s,
        cmp.regime
    );
    match (cmp.sim_round_s, cmp.ratio) {
        (Some(sim), Some(ratio)) => {
            println!("sim   round {sim:.4} s  ratio {ratio:.3}");
        }
        _ => println!("sim   round n/a (not enough settled commits)"),
    }
    print_report(&cmp.report);
    Ok(cmp.report.ok())
}

fn cmd_fuzz(args: &FuzzArgs) -> Result<bool> {
    if args.runs == 0 || args.nodes.is_empty() {
        bail!("need at least one run and one cluster size");
    }
    let mut failures = 0usize;
    let mut commits = 0u64;
    let mut max_view = 0;
    for i in 0..args.runs {
        let mut n = args.nodes[i % args.nodes.len()];
        if args.sluggish {
            n = n.max(5);
        }
        let seed = args.seed0 + i as u64;
        let cfg = if args.sluggish {
            sluggish_config(n, seed)
        } else {
            adversarial_config(n, seed)
        };
        let report = run_scenario(&cfg).map_err(anyhow::Error::msg)?;
        commits += report.completed_requests;
        max_view = max_view.max(report.max_view);
        if !report.ok() || report.unredeemed_commits > 0 {
            failures += 1;
            println!(
                "run {i} ({}): VIOLATIONS ({} unredeemed)",
                cfg.name, report.unredeemed_commits
            );
            for v in &report.violations {
                println!("  - {v}");
            }
        } else if args.verbose {
            println!(
                "run {i} ({}): ok, height {}, view {}, {} requests",
                cfg.name, report.max_height_quorum, report.max_view, report.completed_requests
            );
        }
    }
    println!(
        "{} runs, {} with violations, {} requests committed, deepest view {}",
        args.runs, failures, commits, max_view
    );
    Ok(failures == 0)
}
