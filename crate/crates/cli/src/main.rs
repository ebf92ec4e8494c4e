use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evodrive_core::harness::{
    cmd_collect_demos, cmd_eval, cmd_replay, cmd_train_bc, cmd_train_rl, format_table, AgentVariant, RunConfig,
};
use evodrive_core::sim::ScenarioConfig;
use evodrive_core::Error as CoreError;
use evodrive_cli::teleop::{serve, TeleopConfig};
use evodrive_cli::wire::{ClientMessage, Role, ServerMessage, PROTOCOL_VERSION};

#[derive(Parser)]
#[command(name = "evodrive", version, about = "Train, evaluate and drive the self-learning driving stack")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML); defaults apply to omitted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// proposed, rl_rho, bc_rho, rl_direct or rule_based.
    #[arg(long, global = true)]
    variant: Option<AgentVariant>,
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// Environment steps of RL training.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Basic-model checkpoint, overriding the config's.
    #[arg(long, global = true)]
    basic_model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Record demonstrations from the scripted expert (or check a teleop
    /// service for human recording).
    CollectDemos {
        #[arg(long)]
        human: bool,
        /// Teleop service address for --human.
        #[arg(long, default_value = "ws://127.0.0.1:8765")]
        service: String,
    },
    /// Train the basic model on a directory of demonstrations.
    TrainBc {
        #[arg(long)]
        demos: PathBuf,
    },
    /// Train a learned variant.
    TrainRl,
    /// Evaluate an agent and write a report and per-episode logs.
    Eval {
        /// Actor checkpoint for learned variants.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Export an episode log as a CSV trace.
    Replay {
        log: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the teleoperation WebSocket service.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Where recorded demonstrations are written.
        #[arg(long, default_value = "demos")]
        demo_dir: PathBuf,
    },
}

fn run_config(c: &Common) -> evodrive_core::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(v) = c.variant {
        cfg.variant = v;
    }
    if let Some(b) = c.budget {
        cfg.budget = b;
    }
    if let Some(p) = &c.basic_model {
        cfg.basic_model = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common, default: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn check_service(url: &str) -> anyhow::Result<()> {
    let unreachable = |e: &dyn std::fmt::Display| CoreError::Precondition(format!("teleop service not reachable at {url}: {e}"));
    let (mut ws, _) = tungstenite::connect(url).map_err(|e| unreachable(&e))?;
    let hello = ClientMessage::Hello { role: Role::Viewer, protocol: PROTOCOL_VERSION };
    ws.send(tungstenite::Message::Text(serde_json::to_string(&hello)?)).map_err(|e| unreachable(&e))?;
    let reply = ws.read().map_err(|e| unreachable(&e))?;
    match serde_json::from_str::<ServerMessage>(reply.to_text()?)? {
        ServerMessage::Hello { schema, .. } => {
            println!(
                "teleop service at {url} speaks protocol {} with observation schema {}",
                schema.protocol, schema.observation
            );
            println!("drive from the web UI and use start_demo / stop_demo; files are written by the service");
            Ok(())
        }
        other => Err(CoreError::Precondition(format!("unexpected reply {other:?}")).into()),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = cli.common;
    match cli.command {
        Command::CollectDemos { human, service } => {
            if human {
                return check_service(&service);
            }
            let cfg = run_config(&common)?;
            let out = out_dir(&common, "demos");
            let s = cmd_collect_demos(&cfg, &out)?;
            for f in &s.files {
                println!(
                    "{}  seed {}  records {}  samples {}  {:?}  return {:.1}",
                    f.path.display(),
                    f.seed,
                    f.records,
                    f.samples,
                    f.status,
                    f.episode_return
                );
            }
            println!("{} files, {} samples, {} collided episodes excluded", s.files.len(), s.samples, s.dropped);
        }
        Command::TrainBc { demos } => {
            let cfg = run_config(&common)?;
            let r = cmd_train_bc(&cfg, &demos, &out_dir(&common, "bc"))?;
            println!(
                "trained on {} samples; loss {:.4} -> {:.4}; held-out mse {:.4} (label variance {:.4}); {}",
                r.train_samples,
                r.losses.first().copied().unwrap_or(f64::NAN),
                r.losses.last().copied().unwrap_or(f64::NAN),
                r.held_out_mse,
                r.label_variance,
                r.checkpoint.display()
            );
        }
        Command::TrainRl => {
            let cfg = run_config(&common)?;
            let out = out_dir(&common, &format!("runs/{}_{}", cfg.variant, cfg.seed));
            let r = cmd_train_rl(&cfg, &out)?;
            for p in &r.curve {
                println!(
                    "step {:>7}  return {:>8.2}  success {:.2}  collisions {}",
                    p.step, p.avg_return, p.success_rate, p.collisions
                );
            }
            if let Some(c) = r.final_checkpoint {
                println!("checkpoint {}", c.display());
            }
        }
        Command::Eval { checkpoint } => {
            let cfg = run_config(&common)?;
            let out = out_dir(&common, &format!("eval/{}", cfg.variant));
            let r = cmd_eval(&cfg, checkpoint.as_deref(), common.episodes.unwrap_or(30), &out)?;
            print!("{}", format_table(&[r]));
        }
        Command::Replay { log, csv } => {
            let n = match csv {
                Some(p) => {
                    let mut f = std::fs::File::create(&p).map_err(|e| CoreError::io(&p, e))?;
                    let n = cmd_replay(&log, &mut f)?;
                    f.flush().map_err(|e| CoreError::io(&p, e))?;
                    n
                }
                None => cmd_replay(&log, &mut std::io::stdout().lock())?,
            };
            eprintln!("{n} frames");
        }
        Command::Serve { port, scenario, demo_dir } => {
            let scenario = match scenario {
                Some(p) => ScenarioConfig::load(&p)?,
                None => run_config(&common)?.scenario,
            };
            let mut cfg = TeleopConfig::new(scenario, demo_dir);
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let listener = TcpListener::bind(("0.0.0.0", port))
                .map_err(|e| CoreError::Precondition(format!("port {port} unavailable: {e}")))?;
            let handle = serve(listener, cfg)?;
            println!("listening on ws://{}", handle.addr);
            handle.wait();
        }
    }
    Ok(())
}

/// Machine-parsable class of a failure.
fn error_class(e: &anyhow::Error) -> &'static str {
    if let Some(c) = e.downcast_ref::<CoreError>() {
        return c.class();
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return "io";
    }
    "internal"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{}]: {msg}", error_class(&e));
            ExitCode::FAILURE
        }
    }
}
