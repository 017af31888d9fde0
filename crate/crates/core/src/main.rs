use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use glyph_layout::csvio::{config_comments, write_table};
use glyph_layout::eval_bench::{
    ablate_min_area, ablate_rectangles, evaluate_policy, measure_inference, random_baseline, seed_study,
    summary_record, write_ablation_csv, write_episodes_csv, BenchReport, SUMMARY_HEADER,
};
use glyph_layout::prompt_layout::{
    extract_keywords, generate_layout, parse_layout, render_svg, serialize_layout, GenerateOptions,
};
use glyph_layout::run_config::RunConfig;
use glyph_layout::seed::derive_rng;
use glyph_layout::{Checkpoint, Error, PolicyParams, Trainer};

#[derive(Parser)]
#[command(name = "glyph-layout", version, about = "Train, evaluate and apply RL text-box layout policies")]
struct Cli {
    /// TOML file with any subset of the run-config keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Validate and print the resolved config without running anything.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Every flag maps onto the run-config key of the same name.
#[derive(Args, Serialize, Default)]
struct Overrides {
    #[arg(long, global = true)]
    window_size: Option<f64>,
    #[arg(long, global = true)]
    num_rectan: Option<usize>,
    #[arg(long, global = true)]
    min_area: Option<f64>,
    #[arg(long, global = true)]
    w_min: Option<f64>,
    #[arg(long, global = true)]
    h_min: Option<f64>,
    #[arg(long, global = true)]
    min_overlap: Option<f64>,
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    #[arg(long, global = true)]
    action_scale: Option<f64>,

    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    rollout_horizon: Option<usize>,
    #[arg(long, global = true)]
    minibatch_size: Option<usize>,
    #[arg(long, global = true)]
    epochs_per_update: Option<usize>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    gae_lambda: Option<f64>,
    #[arg(long, global = true)]
    clip_range: Option<f64>,
    #[arg(long, global = true)]
    entropy_coef: Option<f64>,
    #[arg(long, global = true)]
    vf_coef: Option<f64>,
    #[arg(long, global = true)]
    max_grad_norm: Option<f64>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    normalize_advantages: Option<bool>,
    #[arg(long, global = true)]
    total_timesteps: Option<u64>,
    #[arg(long, global = true)]
    num_envs: Option<usize>,
    #[arg(long, global = true)]
    checkpoint_every: Option<usize>,

    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    episodes: Option<usize>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    deterministic: Option<bool>,
    #[arg(long, global = true)]
    budget: Option<u64>,
    #[arg(long, global = true, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    areas: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    timing_episodes: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[arg(long, global = true, value_enum)]
    sizing: Option<SizingArg>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    reading_order: Option<bool>,
    #[arg(long, global = true)]
    svg_scale: Option<f64>,

    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SizingArg {
    Keywords,
    Policy,
}

#[derive(Subcommand)]
enum Command {
    /// Train a PPO policy and write metrics and checkpoints to out-dir.
    Train,
    /// Evaluate a checkpoint and/or the random-action baseline.
    Eval {
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Run an ablation sweep, one training run per row.
    Ablate {
        #[arg(value_enum)]
        sweep: Sweep,
    },
    /// Turn a prompt's quoted words into a box layout.
    Generate {
        #[arg(long)]
        prompt: String,
        /// Layout JSON path (default: out-dir/layout.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Render an existing layout JSON as SVG.
    Render {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        svg: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sweep {
    Rectangles,
    MinArea,
    Seeds,
}

impl Sweep {
    fn name(self) -> &'static str {
        match self {
            Sweep::Rectangles => "rectangles",
            Sweep::MinArea => "min_area",
            Sweep::Seeds => "seeds",
        }
    }
}

/// Invalid configuration; reported like a clap usage error.
struct Usage(String);

fn resolve(cli: &Cli) -> Result<RunConfig, Usage> {
    let base = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Usage(format!("--config {}: {e}", p.display())))?;
            RunConfig::from_toml(&text).map_err(|e| Usage(format!("--config {}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let overrides = serde_json::to_value(&cli.overrides).map_err(|e| Usage(e.to_string()))?;
    let cfg = base.merge_json(overrides).map_err(|e| Usage(e.to_string()))?;
    cfg.validate().map_err(|e| match e {
        Error::InvalidConfig { field, reason } => Usage(format!("--{}: {reason}", field.replace('_', "-"))),
        other => Usage(other.to_string()),
    })?;
    Ok(cfg)
}

fn resolve_checkpoint(cfg: &RunConfig) -> Option<PathBuf> {
    let c = cfg.checkpoint.as_ref()?;
    if c.exists() || c.components().count() > 1 {
        return Some(c.clone());
    }
    let inside = cfg.out_dir.join(c);
    if inside.exists() {
        return Some(inside);
    }
    Some(cfg.out_dir.join(c).with_extension("json"))
}

fn load_policy(path: &Path) -> anyhow::Result<PolicyParams<f64>> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(ckpt.params()?)
}

fn print_report(label: &str, r: &BenchReport) {
    println!(
        "{label}: episodes={} mean_reward={:.4} reward_std={:.4} mean_final_overlap={:.4} success_rate={:.4} mean_steps={:.2} ms_per_episode={:.3} policy_bytes={}",
        r.episodes,
        r.mean_reward,
        r.reward_std,
        r.mean_final_overlap,
        r.success_rate,
        r.mean_steps,
        r.wall_time_per_episode,
        r.policy_bytes
    );
}

fn cmd_train(cfg: &RunConfig) -> anyhow::Result<()> {
    let mut trainer = Trainer::new(cfg.env(), cfg.ppo(), cfg.seed)?;
    let out = trainer.run(Some(&cfg.out_dir))?;
    match out.metrics.last() {
        Some(m) => println!("final ep_reward_mean: {}", m.ep_reward_mean),
        None => println!("final ep_reward_mean: n/a (no updates)"),
    }
    println!("wrote {}", cfg.out_dir.join("final.json").display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, baseline: Option<Baseline>) -> anyhow::Result<()> {
    let env = cfg.env();
    let comments = {
        let mut c = config_comments("env", &env);
        c.push(format!("protocol.episodes = {}", cfg.episodes));
        c.push(format!("protocol.seed = {}", cfg.seed));
        c.push(format!("protocol.deterministic = {}", cfg.deterministic));
        c
    };
    let mut summary = Vec::new();
    let ckpt = match (baseline, resolve_checkpoint(cfg)) {
        (None, None) => Some(cfg.out_dir.join("final.json")),
        (_, c) => c,
    };
    if let Some(path) = ckpt {
        let policy = load_policy(&path)?;
        let (report, eps) = evaluate_policy(&env, &policy, cfg.episodes, cfg.deterministic, cfg.seed)?;
        write_episodes_csv(&cfg.out_dir.join("eval_policy_episodes.csv"), &comments, &eps)?;
        print_report("policy", &report);
        let timing = measure_inference(&env, &policy, cfg.timing_episodes, cfg.seed)?;
        println!(
            "inference: median_ms_per_layout={:.3} checkpoint_bytes={}",
            timing.ms_per_layout, timing.policy_bytes
        );
        summary.push(summary_record("policy", &report));
    }
    if baseline.is_some() {
        let (report, eps) = random_baseline(&env, cfg.episodes, cfg.seed)?;
        write_episodes_csv(&cfg.out_dir.join("eval_random_episodes.csv"), &comments, &eps)?;
        print_report("random", &report);
        summary.push(summary_record("random", &report));
    }
    let path = cfg.out_dir.join("eval_summary.csv");
    write_table(&path, &comments, &SUMMARY_HEADER, summary)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, sweep: Sweep) -> anyhow::Result<()> {
    let env = cfg.env();
    let proto = cfg.protocol();
    let rows = match sweep {
        Sweep::Rectangles => ablate_rectangles(&cfg.counts, &env, &proto),
        Sweep::MinArea => ablate_min_area(&cfg.areas, &env, &proto),
        Sweep::Seeds => seed_study(&cfg.seeds, &env, &proto),
    };
    for r in &rows {
        match &r.result {
            Ok(b) => print_report(&format!("{}={}", sweep.name(), r.value), b),
            Err(e) => println!("{}={}: error: {e}", sweep.name(), r.value),
        }
    }
    let path = cfg.out_dir.join(format!("ablate_{}.csv", sweep.name()));
    write_ablation_csv(&path, sweep.name(), &env, &proto, &rows)?;
    println!("wrote {}", path.display());
    if rows.iter().any(|r| r.result.is_err()) {
        bail!("{} of {} rows failed", rows.iter().filter(|r| r.result.is_err()).count(), rows.len());
    }
    Ok(())
}

fn cmd_generate(cfg: &RunConfig, prompt: &str, out: Option<&Path>, svg: Option<&Path>) -> anyhow::Result<()> {
    let spec = extract_keywords(prompt);
    if spec.keywords.is_empty() {
        return Err(Error::EmptyLayout.into());
    }
    let env = cfg.env();
    let (policy, id) = match resolve_checkpoint(cfg) {
        Some(p) => (load_policy(&p)?, p.display().to_string()),
        None => {
            eprintln!("warning: no --checkpoint given; using an untrained policy");
            (
                PolicyParams::for_env(&env, &mut derive_rng(cfg.seed, "policy_init", 0)),
                "untrained".to_string(),
            )
        }
    };
    let opts = GenerateOptions { sizing: cfg.sizing, reading_order: cfg.reading_order, checkpoint_id: id };
    let layout = generate_layout(&spec, &policy, &env, cfg.seed, &opts)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.join("layout.json"));
    let doc = serialize_layout(&layout)?;
    fs::write(&out, &doc).with_context(|| format!("writing {}", out.display()))?;
    println!("keywords: {}", spec.keyword_string);
    println!("wrote {}", out.display());
    if let Some(svg) = svg {
        // render what was saved so `render` on the file gives the same SVG
        fs::write(svg, render_svg(&parse_layout(&doc)?, cfg.svg_scale)).with_context(|| format!("writing {}", svg.display()))?;
        println!("wrote {}", svg.display());
    }
    println!(
        "final overlap: {} ({} steps, {})",
        layout.metadata.final_overlap,
        layout.metadata.steps,
        if layout.metadata.succeeded { "below threshold" } else { "truncated" }
    );
    Ok(())
}

fn cmd_render(cfg: &RunConfig, layout: &Path, svg: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(layout).with_context(|| format!("reading {}", layout.display()))?;
    let l = parse_layout(&text)?;
    fs::write(svg, render_svg(&l, cfg.svg_scale)).with_context(|| format!("writing {}", svg.display()))?;
    println!("wrote {}", svg.display());
    Ok(())
}

fn run(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<()> {
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| anyhow!("--workers: {e}"))?;
    }
    let writes_out_dir = match &cli.command {
        Command::Render { .. } => false,
        Command::Generate { out, .. } => out.is_none(),
        _ => true,
    };
    if writes_out_dir {
        fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    }
    match &cli.command {
        Command::Train => cmd_train(cfg),
        Command::Eval { baseline } => cmd_eval(cfg, *baseline),
        Command::Ablate { sweep } => cmd_ablate(cfg, *sweep),
        Command::Generate { prompt, out, svg } => cmd_generate(cfg, prompt, out.as_deref(), svg.as_deref()),
        Command::Render { layout, svg } => cmd_render(cfg, layout, svg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    println!("# resolved configuration");
    print!("{}", cfg.to_toml());
    println!("# end configuration");
    if cli.dry_run {
        if let Command::Generate { prompt, .. } = &cli.command {
            if extract_keywords(prompt).keywords.is_empty() {
                eprintln!("error: {}", Error::EmptyLayout);
                return ExitCode::from(2);
            }
        }
        println!("dry run: configuration is valid");
        return ExitCode::SUCCESS;
    }
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
