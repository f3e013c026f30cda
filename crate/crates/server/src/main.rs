use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memhop::datasets::DatasetConfig;
use memhop::experiments::{curated_sweep, dataset_stats, pos_sweep, random_injection_eval, LogBase, SweepSettings};
use memhop::{load_prompt_pairs, Engine, MemoryBasis, PositionPolicy, PromptOptions, Projection, PromptPair};
use memhop_server::{InjectRequest, LensRequest, Service, ServiceConfig};

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "memhop", version, about = "Attention-head lenses and memory injection for GPT-2")]
struct Cli {
    /// Directory with config.json and model.safetensors [env: MEMHOP_MODEL_DIR]
    #[arg(long, global = true)]
    model_dir: Option<PathBuf>,
    /// Worker threads for sweeps (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Prepend <|endoftext|> to every prompt
    #[arg(long, global = true)]
    bos: bool,
    /// Use a random demo model when no model directory is available
    #[arg(long, global = true)]
    demo: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-head vocabulary readout of the last position, as JSON
    Lens {
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value_t = 30)]
        k: usize,
        /// Apply the final layer norm before unembedding
        #[arg(long)]
        apply_final_ln: bool,
        /// Overrides --apply-final-ln
        #[arg(long, value_enum)]
        projection: Option<ProjectionArg>,
    },
    /// Inject a memory into one attention layer, as JSON
    Inject {
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        memory: String,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        tau: f32,
        #[arg(long, value_enum, default_value_t = PolicyArg::All)]
        policy: PolicyArg,
        #[arg(long)]
        answer: Option<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, value_enum, default_value_t = BasisArg::Unembedding)]
        basis: BasisArg,
    },
    /// Answer probability, surprisal and prompt length for a dataset
    Stats {
        #[command(flatten)]
        common: ExperimentArgs,
        /// Base for the headline surprisal
        #[arg(long, default_value = "e")]
        log_base: String,
    },
    /// Curated-memory (layer, tau) sweep
    Sweep {
        #[command(flatten)]
        common: ExperimentArgs,
    },
    /// Most-frequent-word injections per part of speech at each (layer, tau)
    RandomEval {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long, default_value_t = 40)]
        words: usize,
    },
    /// Seeded random-word (layer, tau) sweep per part of speech
    PosSweep {
        #[command(flatten)]
        common: ExperimentArgs,
    },
    /// HTTP JSON service
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, default_value_t = 10)]
        default_k: usize,
        /// Prompt length cap in tokens (default: model context)
        #[arg(long)]
        max_tokens: Option<usize>,
        /// Built workbench assets to serve under /
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// `golden`, `hand`, `2wmh` (from memhop.toml) or a JSONL path
    #[arg(long, default_value = "golden")]
    dataset: String,
    /// e.g. `0-11`, `7` or `3,6,9` (default: every layer)
    #[arg(long)]
    layers: Option<String>,
    /// e.g. `1-15`, `3` or `0.5,1,2` (default: 1-15)
    #[arg(long)]
    taus: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyArg::All)]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value_t = BasisArg::Unembedding)]
    basis: BasisArg,
    /// memhop.toml to use instead of searching upward from the current directory
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    All,
    Last,
}

impl From<PolicyArg> for PositionPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::All => PositionPolicy::All,
            PolicyArg::Last => PositionPolicy::Last,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Unembedding,
    Folded,
}

impl From<BasisArg> for MemoryBasis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Unembedding => MemoryBasis::Unembedding,
            BasisArg::Folded => MemoryBasis::FoldedUnembedding,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectionArg {
    Raw,
    FinalLn,
    Folded,
}

impl From<ProjectionArg> for Projection {
    fn from(p: ProjectionArg) -> Self {
        match p {
            ProjectionArg::Raw => Projection::Raw,
            ProjectionArg::FinalLn => Projection::FinalLayerNorm,
            ProjectionArg::Folded => Projection::FoldedLayerNorm,
        }
    }
}

/// Parses `a-b` (integer steps, inclusive), a single value, or a comma list.
fn parse_list(text: &str) -> CliResult<Vec<f64>> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once('-').filter(|(a, _)| !a.is_empty()) {
        let (a, b): (i64, i64) = (a.trim().parse()?, b.trim().parse()?);
        if b < a {
            return Err(format!("empty range {text}").into());
        }
        return Ok((a..=b).map(|v| v as f64).collect());
    }
    text.split(',').map(|v| Ok(v.trim().parse::<f64>()?)).collect()
}

fn settings(args: &ExperimentArgs, n_layer: usize) -> CliResult<SweepSettings> {
    let mut s = SweepSettings::full(n_layer);
    if let Some(layers) = &args.layers {
        s.layers = parse_list(layers)?
            .into_iter()
            .map(|v| if v >= 0.0 && v.fract() == 0.0 { Ok(v as usize) } else { Err(format!("bad layer {v}")) })
            .collect::<Result<_, _>>()?;
    }
    if let Some(taus) = &args.taus {
        s.taus = parse_list(taus)?.into_iter().map(|v| v as f32).collect();
    }
    s.policy = args.policy.into();
    s.basis = args.basis.into();
    Ok(s)
}

fn dataset_config(args: &ExperimentArgs) -> CliResult<Option<DatasetConfig>> {
    let path = match &args.config {
        Some(p) => Some(p.clone()),
        None => DatasetConfig::discover(std::env::current_dir()?),
    };
    Ok(match path {
        Some(p) => Some(DatasetConfig::load(p)?),
        None => None,
    })
}

fn load_pairs(args: &ExperimentArgs, config: Option<&DatasetConfig>) -> CliResult<Vec<PromptPair>> {
    let path = match config {
        Some(c) => c.dataset_path(&args.dataset)?,
        None => PathBuf::from(&args.dataset),
    };
    Ok(load_prompt_pairs(path)?)
}

fn engine(cli: &Cli) -> CliResult<Engine> {
    let engine = match cli.model_dir.clone().or_else(Engine::model_dir_from_env) {
        Some(dir) => Engine::load(dir)?,
        None if cli.demo => Engine::demo(0)?,
        None => {
            return Err("no model: pass --model-dir, set MEMHOP_MODEL_DIR, or use --demo for a random model".into());
        }
    };
    Ok(engine.with_options(PromptOptions { prepend_bos: cli.bos }))
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn out_dir(args: &ExperimentArgs, name: &str) -> PathBuf {
    args.out_dir.clone().unwrap_or_else(|| Path::new("runs").join(name))
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let engine = engine(&cli)?;
    let info = engine.info();
    match cli.command {
        Command::Lens {
            prompt,
            k,
            apply_final_ln,
            projection,
        } => {
            let service = Service::unrestricted(engine)?;
            print_json(&service.lens(&LensRequest {
                prompt,
                k: Some(k),
                apply_final_ln,
                projection: projection.map(Into::into),
            })?)
        }
        Command::Inject {
            prompt,
            memory,
            layer,
            tau,
            policy,
            answer,
            k,
            basis,
        } => {
            let service = Service::unrestricted(engine)?;
            print_json(&service.inject(&InjectRequest {
                prompt,
                memory,
                layer,
                tau,
                policy: policy.into(),
                basis: basis.into(),
                answer,
                k: Some(k),
            })?)
        }
        Command::Stats { common, log_base } => {
            let base: LogBase = log_base.parse()?;
            let config = dataset_config(&common)?;
            let pairs = load_pairs(&common, config.as_ref())?;
            let stats = dataset_stats(&engine, &pairs)?;
            print!("{stats}");
            for (name, h) in [("single-hop", &stats.single_hop), ("multi-hop", &stats.multi_hop)] {
                let s = match base {
                    LogBase::Natural => h.surprisal_nat,
                    LogBase::Two => h.surprisal_bits,
                };
                println!("{name} surprisal ({base:?}): {s:.4}");
            }
            if let Some(dir) = &common.out_dir {
                std::fs::create_dir_all(dir)?;
                memhop::experiments::write_json(dir.join("stats.json"), &stats)?;
            }
            Ok(())
        }
        Command::Sweep { common } => {
            let config = dataset_config(&common)?;
            let pairs = load_pairs(&common, config.as_ref())?;
            let s = settings(&common, info.n_layer)?;
            let out = curated_sweep(&engine, &pairs, &s)?;
            let dir = out_dir(&common, "sweep");
            out.write(&dir, serde_json::json!({"dataset": common.dataset, "model": info, "bos": cli.bos}))?;
            if let Some(best) = out.best() {
                println!("best layer {} tau {}: {:+.4}% (n={})", best.layer, best.tau, best.mean_pct, best.n_used);
            }
            println!("{} records, {} failures, written to {}", out.records.len(), out.failures.len(), dir.display());
            Ok(())
        }
        Command::RandomEval { common, words } => {
            let config = dataset_config(&common)?;
            let pairs = load_pairs(&common, config.as_ref())?;
            let lexicon = config.as_ref().ok_or("random-eval needs memhop.toml with a lexicon")?.lexicon()?;
            let s = settings(&common, info.n_layer)?;
            let root = out_dir(&common, "random-eval");
            for &layer in &s.layers {
                for &tau in &s.taus {
                    let out = random_injection_eval(&engine, &pairs, &lexicon, layer, tau, words, s.policy, s.basis)?;
                    let dir = if s.layers.len() * s.taus.len() == 1 {
                        root.clone()
                    } else {
                        root.join(format!("layer{layer}_tau{tau}"))
                    };
                    out.write(&dir, serde_json::json!({"dataset": common.dataset, "model": info, "bos": cli.bos}))?;
                    for p in &out.per_pos {
                        println!("layer {layer} tau {tau} {:<12} {:+.4}%", p.pos.to_string(), p.mean_pct);
                    }
                }
            }
            println!("written to {}", root.display());
            Ok(())
        }
        Command::PosSweep { common } => {
            let config = dataset_config(&common)?;
            let pairs = load_pairs(&common, config.as_ref())?;
            let lexicon = config.as_ref().ok_or("pos-sweep needs memhop.toml with a lexicon")?.lexicon()?;
            let s = settings(&common, info.n_layer)?;
            let out = pos_sweep(&engine, &pairs, &lexicon, &s, common.seed)?;
            let dir = out_dir(&common, "pos-sweep");
            out.write(&dir, serde_json::json!({"dataset": common.dataset, "model": info, "bos": cli.bos}))?;
            for g in &out.grids {
                if let Some(m) = &g.overall {
                    println!("{:<12} {:+.4}%", g.pos.to_string(), m.mean);
                }
            }
            println!("written to {}", dir.display());
            Ok(())
        }
        Command::Serve {
            bind,
            default_k,
            max_tokens,
            static_dir,
            cors_origin,
        } => {
            let config = ServiceConfig {
                bind,
                model_dir: cli.model_dir.clone(),
                default_k,
                max_prompt_tokens: max_tokens.unwrap_or(info.n_ctx),
                static_dir,
                cors_origin,
            };
            let service = Arc::new(Service::new(engine, config)?);
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(memhop_server::serve(service))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists() {
        assert_eq!(parse_list("0-3").unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(parse_list("7").unwrap(), vec![7.0]);
        assert_eq!(parse_list("0.5, 2").unwrap(), vec![0.5, 2.0]);
        assert!(parse_list("5-2").is_err());
        assert!(parse_list("x").is_err());
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
