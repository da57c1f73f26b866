use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};

use campusnet::campus::{default_policy, demo_topology, PolicySet, World, WorldConfig};
use campusnet::control::api::{self, AppState, Engine, Tokens, TOKEN_FILE_ENV};
use campusnet::control::scenario::{run_file, RunOptions};
use campusnet::control::shell::Shell;
use campusnet::control::{Actor, Plane, Role};
use campusnet::fwengine::{compile, Firewall};
use campusnet::topology::{load_topology, NetTopology, PairKind};

#[derive(Parser)]
#[command(name = "campusnet", version, about = "Campus network simulator and management plane")]
struct Cli {
    /// Topology file; the built-in demo campus when omitted.
    #[arg(long, global = true)]
    topology: Option<PathBuf>,
    /// Directory of firewall policy files; built-in defaults when omitted.
    #[arg(long, global = true)]
    policy_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Shortened spanning-tree and HA timers.
    #[arg(long, global = true)]
    fast_timers: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Internal,
    External,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// `<token> <role> [actor]` per line.
        #[arg(long, env = TOKEN_FILE_ENV)]
        token_file: PathBuf,
        /// Keep simulated time in step with the wall clock.
        #[arg(long)]
        realtime: bool,
    },
    /// Interactive command shell on stdin.
    Shell {
        #[arg(long, default_value = "netadmin")]
        role: String,
        #[arg(long, default_value = "operator")]
        actor: String,
    },
    /// Run scenario scripts and report their assertions.
    Scenario {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Write the event log of the last script here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Compile the policy for one router pair and print the ruleset.
    Compile {
        #[arg(long, value_enum, default_value = "external")]
        side: Side,
        /// Print timing instead of the rules.
        #[arg(long)]
        stats: bool,
    },
    /// Print the topology as JSON after convergence.
    Topology,
}

fn load(cli: &Cli) -> Result<(NetTopology, PolicySet), String> {
    let topo = match &cli.topology {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            load_topology(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => demo_topology(),
    };
    let policy = match &cli.policy_dir {
        Some(d) => PolicySet::load_dir(d).map_err(|e| e.to_string())?,
        None => default_policy(),
    };
    Ok((topo, policy))
}

fn world(cli: &Cli) -> Result<World, String> {
    let (topo, policy) = load(cli)?;
    let mut cfg = if cli.fast_timers { WorldConfig::fast() } else { WorldConfig::default() };
    cfg.seed = cli.seed;
    let mut w = World::new(topo, policy, cfg).map_err(|e| e.to_string())?;
    w.converge().map_err(|e| e.to_string())?;
    Ok(w)
}

fn run(cli: Cli) -> Result<bool, String> {
    match &cli.cmd {
        Cmd::Serve { listen, token_file, realtime } => {
            let tokens = Tokens::load(token_file)?;
            let plane = Plane::new(world(&cli)?);
            let engine = Engine::spawn(plane, realtime.then(|| Duration::from_millis(100)));
            let state = AppState { engine, tokens: Arc::new(tokens) };
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(listen).await.map_err(|e| format!("{listen}: {e}"))?;
                eprintln!("listening on {}", listener.local_addr().map_err(|e| e.to_string())?);
                api::serve(listener, state).await.map_err(|e| e.to_string())
            })?;
            Ok(true)
        }
        Cmd::Shell { role, actor } => {
            let role: Role = role.parse()?;
            let mut plane = Plane::new(world(&cli)?);
            let mut sh = Shell::new(&mut plane, Actor::new(actor, role));
            sh.repl(std::io::stdin().lock(), std::io::stdout().lock()).map_err(|e| e.to_string())?;
            Ok(true)
        }
        Cmd::Scenario { files, log } => {
            let mut opts = RunOptions { seed: cli.seed, fast_timers: cli.fast_timers.then_some(true), ..Default::default() };
            if cli.topology.is_some() || cli.policy_dir.is_some() {
                let (t, p) = load(&cli)?;
                opts.topology = cli.topology.is_some().then_some(t);
                opts.policy = Some(p);
            }
            let mut ok = true;
            for f in files {
                let run = run_file(f, &opts).map_err(|e| format!("{}: {e}", f.display()))?;
                println!("# {}", f.display());
                print!("{}", run.report.render());
                ok &= run.report.passed();
                if let Some(path) = log {
                    std::fs::write(path, run.event_log()).map_err(|e| format!("{}: {e}", path.display()))?;
                }
            }
            Ok(ok)
        }
        Cmd::Compile { side, stats } => {
            let (topo, mut policy) = load(&cli)?;
            policy.learn_hosts(&topo);
            let kind = match side {
                Side::Internal => PairKind::Internal,
                Side::External => PairKind::External,
            };
            let started = Instant::now();
            let rs = compile(&policy.input_for(kind)).map_err(|e| e.to_string())?;
            let fw = Firewall::new(rs).map_err(|e| e.to_string())?;
            if *stats {
                println!("{} rules compiled and validated in {:?}", fw.active().rule_count(), started.elapsed());
            } else {
                print!("{}", fw.dump());
            }
            Ok(true)
        }
        Cmd::Topology => {
            let w = world(&cli)?;
            println!("{}", serde_json::to_string_pretty(&w.export_topology()).map_err(|e| e.to_string())?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("campusnet: {e}");
            ExitCode::from(2)
        }
    }
}
