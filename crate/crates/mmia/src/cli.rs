//! Command-line front end.
//!
//! Every command reads its inputs, writes its artifacts under `--out` and
//! returns a short summary for stdout. Machine-readable results only ever go
//! to files.

use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmia_core::attack_net::DEFAULT_HIDDEN;
use mmia_core::audit::{self, AttackRecipe, AttackRun, RoleConfig, Roles, WsaRecipe};
use mmia_core::defenses::{perturb_features, PerturbConfig};
use mmia_core::metrics::DEFAULT_FPR_TARGETS;
use mmia_core::simulator::{self, SimConfig};
use mmia_core::{attacks, EvalReport, FeatureSet, LabeledScores, MembershipTag, PseudoStrategy, TrainConfig, WsaConfig};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::export::{self, SweepRow};
use crate::ingest;
use crate::io;
use crate::manifest::RunManifest;
use crate::parallel;
use crate::report::{render_report, RUNTIME_KEY};
use crate::snapshot::{self, Snapshot};

#[derive(Debug, Parser)]
#[command(name = "mmia", version, about = "Membership-inference audits for two-tower embedding models")]
pub struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving all artifacts; created if missing.
    #[arg(long, global = true, default_value = "mmia-out")]
    pub out: PathBuf,
    /// Worker threads for scoring. Training always runs on one thread.
    #[arg(long, global = true)]
    pub threads: Option<NonZeroUsize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a simulated target model and export member and non-member features.
    Simulate(SimulateArgs),
    /// Run one attack and evaluate it.
    Attack {
        #[command(subcommand)]
        kind: AttackCommand,
    },
    /// Evaluate an existing scores CSV.
    Eval(EvalArgs),
    /// Repeat an attack over a list of parameter values.
    Sweep {
        #[command(subcommand)]
        dimension: SweepCommand,
    },
    /// Release features with Gaussian noise added.
    Defend(DefendArgs),
    /// Remove manifest entries that overlap a reference manifest.
    Dedup(DedupArgs),
    /// Print a summary of a feature file without loading it whole.
    Inspect {
        file: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum AttackCommand {
    /// Cosine-similarity threshold.
    Csa(InputArgs),
    /// Cosine similarity plus transformation gaps.
    Aea(InputArgs),
    /// Weakly supervised classifier trained on pseudo-labels.
    Wsa {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        wsa: WsaArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum SweepCommand {
    /// Pseudo-member threshold λ (default values -1.5,-0.5,0,0.5,1,1.5).
    Lambda(SweepArgs),
    /// Number of known non-members (default values 250,500,1000,2000).
    NonmemberSize(SweepArgs),
    /// Feature-noise standard deviation (default values 0,0.01,0.5,1).
    Sigma(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    input_dim_img: Option<usize>,
    #[arg(long)]
    input_dim_txt: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_nonmember_in: Option<usize>,
    #[arg(long)]
    n_nonmember_shift: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    shift_scale: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Training epochs of the target; 0 exports an untrained model.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// L2 penalty on the target's parameters.
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Train the target on randomly transformed inputs.
    #[arg(long)]
    train_augment: bool,
    #[arg(long)]
    k_transforms: Option<usize>,
}

/// Where the audit roles come from. Either give `--members` and
/// `--nonmembers` and let the tool split them, or give the evaluation set
/// and (for WSA) the known non-members and unlabeled pool explicitly.
#[derive(Debug, Args, Clone)]
pub struct InputArgs {
    /// Ground-truth members (split into pool and evaluation halves).
    #[arg(long, conflicts_with_all = ["eval", "all", "nonmember_train"])]
    members: Option<PathBuf>,
    /// Ground-truth non-members; may be repeated.
    #[arg(long, requires = "members")]
    nonmembers: Vec<PathBuf>,
    /// Tagged evaluation set.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Known non-members for WSA.
    #[arg(long)]
    nonmember_train: Option<PathBuf>,
    /// Unlabeled pool from which WSA draws pseudo-members.
    #[arg(long)]
    all: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    member_eval_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    nonmember_train_fraction: f64,
    #[arg(long, default_value_t = 0.25)]
    nonmember_pool_fraction: f64,
    /// Keep only this many known non-members.
    #[arg(long)]
    nonmember_train_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Threshold,
    Random,
}

#[derive(Debug, Args, Clone)]
pub struct WsaArgs {
    /// Pseudo-member threshold in standard deviations above the non-member mean.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = StrategyArg::Threshold)]
    strategy: StrategyArg,
    /// Pseudo-member count for the random strategy.
    #[arg(long)]
    random_count: Option<usize>,
    /// Keep the attack dataset unbalanced.
    #[arg(long)]
    no_balance: bool,
    /// Hidden layer widths of the attack network.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_HIDDEN)]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    attack_lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().momentum)]
    attack_momentum: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    attack_batch: usize,
    /// Minimum mini-batches per epoch; small attack datasets use smaller batches.
    #[arg(long, default_value_t = TrainConfig::default().min_batches)]
    min_batches: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    attack_epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().holdout_fraction)]
    holdout_fraction: f64,
    #[arg(long, default_value_t = TrainConfig::default().patience)]
    patience: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackName {
    Csa,
    Aea,
    Wsa,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    values: Vec<f64>,
    /// Attacks evaluated in every cell.
    #[arg(long, value_enum, value_delimiter = ',')]
    attacks: Vec<AttackName>,
    /// Rescale noisy vectors to unit norm (sigma sweep only).
    #[arg(long)]
    renormalize: bool,
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    wsa: WsaArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with `id,score` and optionally `tag` columns.
    #[arg(long)]
    scores: PathBuf,
    /// Feature file supplying ground-truth tags when the CSV has none.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Decision threshold for accuracy and the confusion matrix.
    #[arg(long)]
    cutoff: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DefendArgs {
    /// Feature files to perturb; may be repeated.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    /// JSON Lines manifest to clean.
    #[arg(long)]
    manifest: PathBuf,
    /// Manifest whose captions and image references must not reappear.
    #[arg(long)]
    reference: PathBuf,
}

/// Runs a parsed command line and returns the stdout summary.
pub fn run(cli: Cli) -> Result<String> {
    let threads = cli.threads.map_or_else(|| std::thread::available_parallelism().map_or(1, NonZeroUsize::get), NonZeroUsize::get);
    let ctx = Context { seed: cli.seed, out: cli.out, threads };
    match cli.command {
        Command::Inspect { file } => Ok(io::inspect(&file)?.render().trim_end().to_string()),
        command => {
            std::fs::create_dir_all(&ctx.out).map_err(|e| Error::io(&ctx.out, e))?;
            match command {
                Command::Simulate(args) => cmd_simulate(&ctx, &args),
                Command::Attack { kind } => cmd_attack(&ctx, kind),
                Command::Eval(args) => cmd_eval(&ctx, &args),
                Command::Sweep { dimension } => cmd_sweep(&ctx, dimension),
                Command::Defend(args) => cmd_defend(&ctx, &args),
                Command::Dedup(args) => cmd_dedup(&ctx, &args),
                Command::Inspect { .. } => unreachable!("handled above"),
            }
        }
    }
}

struct Context {
    seed: u64,
    out: PathBuf,
    threads: usize,
}

impl Context {
    fn write(&self, manifest: &mut RunManifest, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        io::write_text(&path, text)?;
        manifest.add_output(name);
        Ok(path)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        parallel::thread_pool(self.threads)
    }
}

fn sim_config_json(c: &SimConfig) -> Value {
    json!({
        "latent_dim": c.latent_dim,
        "input_dim_img": c.input_dim_img,
        "input_dim_txt": c.input_dim_txt,
        "hidden_dim": c.hidden_dim,
        "embed_dim": c.embed_dim,
        "n_train": c.n_train,
        "n_nonmember_in": c.n_nonmember_in,
        "n_nonmember_shift": c.n_nonmember_shift,
        "noise_std": c.noise_std,
        "shift_scale": c.shift_scale,
        "temperature": c.temperature,
        "epochs": c.epochs,
        "lr": c.lr,
        "momentum": c.momentum,
        "batch": c.batch,
        "weight_decay": c.weight_decay,
        "train_augment": c.train_augment,
        "k_transforms": c.k_transforms,
        "seed": c.seed,
    })
}

fn cmd_simulate(ctx: &Context, a: &SimulateArgs) -> Result<String> {
    let d = SimConfig::default();
    let cfg = SimConfig {
        latent_dim: a.latent_dim.unwrap_or(d.latent_dim),
        input_dim_img: a.input_dim_img.unwrap_or(d.input_dim_img),
        input_dim_txt: a.input_dim_txt.unwrap_or(d.input_dim_txt),
        hidden_dim: a.hidden_dim.unwrap_or(d.hidden_dim),
        embed_dim: a.embed_dim.unwrap_or(d.embed_dim),
        n_train: a.n_train.unwrap_or(d.n_train),
        n_nonmember_in: a.n_nonmember_in.unwrap_or(d.n_nonmember_in),
        n_nonmember_shift: a.n_nonmember_shift.unwrap_or(d.n_nonmember_shift),
        noise_std: a.noise_std.unwrap_or(d.noise_std),
        shift_scale: a.shift_scale.unwrap_or(d.shift_scale),
        temperature: a.temperature.unwrap_or(d.temperature),
        epochs: a.epochs.unwrap_or(d.epochs),
        lr: a.lr.unwrap_or(d.lr),
        momentum: a.momentum.unwrap_or(d.momentum),
        batch: a.batch.unwrap_or(d.batch),
        weight_decay: a.weight_decay.unwrap_or(d.weight_decay),
        train_augment: a.train_augment || d.train_augment,
        k_transforms: a.k_transforms.unwrap_or(d.k_transforms),
        seed: ctx.seed,
    };
    cfg.validate()?;
    let run = simulator::simulate(&cfg)?;
    let mut manifest = RunManifest::new("simulate", ctx.seed, sim_config_json(&cfg));
    for (name, set) in [
        ("members.miaf", &run.members),
        ("nonmembers_in.miaf", &run.nonmembers_in),
        ("nonmembers_shift.miaf", &run.nonmembers_shift),
    ] {
        io::write_feature_set(set, &ctx.out.join(name))?;
        manifest.add_output(name);
    }
    let cs = run.cs_summary()?;
    if cfg.epochs == 0 {
        manifest.notes.push("untrained model: epochs = 0, features come from the initial parameters".into());
    }
    manifest.results = json!({
        "initial_loss": run.training.initial_loss,
        "final_loss": run.training.final_loss(),
        "epoch_losses": run.training.epoch_losses,
        "mean_cs": {
            "members": cs.members,
            "nonmembers_in": cs.nonmembers_in,
            "nonmembers_shift": cs.nonmembers_shift,
        },
        "cs_gap": {
            "members_minus_nonmembers_in": cs.members - cs.nonmembers_in,
            "members_minus_nonmembers_shift": cs.members - cs.nonmembers_shift,
        },
    });
    manifest.write(&ctx.out)?;
    Ok(format!(
        "simulate: {} members, {} + {} non-members, final loss {:.4}, mean CS gap {:+.4} (in) {:+.4} (shift) -> {}",
        run.members.len(),
        run.nonmembers_in.len(),
        run.nonmembers_shift.len(),
        run.training.final_loss(),
        cs.members - cs.nonmembers_in,
        cs.members - cs.nonmembers_shift,
        ctx.out.display()
    ))
}

/// Feature sets behind the audit roles, before any splitting.
enum RoleSource {
    Split { members: FeatureSet, nonmembers: FeatureSet, cfg: RoleConfig },
    Explicit(Roles),
}

impl RoleSource {
    fn load(a: &InputArgs, seed: u64, needs_training: bool, manifest: &mut RunManifest) -> Result<Self> {
        let mut read = |p: &Path| -> Result<FeatureSet> {
            manifest.add_input(p)?;
            io::read_feature_set(p)
        };
        if let Some(m) = &a.members {
            if a.nonmembers.is_empty() {
                return Err(Error::Usage("--members needs at least one --nonmembers file".into()));
            }
            let members = read(m)?;
            let parts = a.nonmembers.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
            let nonmembers = FeatureSet::concat(&parts.iter().collect::<Vec<_>>())?;
            let cfg = RoleConfig {
                member_eval_fraction: a.member_eval_fraction,
                nonmember_train_fraction: a.nonmember_train_fraction,
                nonmember_pool_fraction: a.nonmember_pool_fraction,
                nonmember_train_size: a.nonmember_train_size,
                seed,
            };
            return Ok(RoleSource::Split { members, nonmembers, cfg });
        }
        let Some(eval_path) = &a.eval else {
            return Err(Error::Usage("give either --members/--nonmembers or --eval".into()));
        };
        let eval = read(eval_path)?;
        let empty = || FeatureSet::empty(eval.d_img(), eval.d_txt(), eval.transform_names().to_vec());
        let no_train = match &a.nonmember_train {
            Some(p) => read(p)?,
            None if needs_training => return Err(Error::Usage("wsa needs --nonmember-train".into())),
            None => empty()?,
        };
        let all = match &a.all {
            Some(p) => read(p)?,
            None if needs_training => return Err(Error::Usage("wsa needs --all".into())),
            None => empty()?,
        };
        let no_train = match a.nonmember_train_size {
            Some(k) => audit::sample_subset(&no_train, k, seed)?,
            None => no_train,
        };
        if let Err(collisions) = ingest::assert_disjoint(&[&no_train, &all, &eval]) {
            let names = ["nonmember-train", "all", "eval"];
            let first = collisions[0];
            return Err(Error::Usage(format!(
                "input roles overlap in {} ids, e.g. id {} in both {} and {}",
                collisions.len(),
                first.id,
                names[first.set_i],
                names[first.set_j]
            )));
        }
        Ok(RoleSource::Explicit(Roles { no_train, all, eval }))
    }

    fn config_json(&self, a: &InputArgs) -> Value {
        match self {
            RoleSource::Split { cfg, .. } => json!({
                "mode": "split",
                "member_eval_fraction": cfg.member_eval_fraction,
                "nonmember_train_fraction": cfg.nonmember_train_fraction,
                "nonmember_pool_fraction": cfg.nonmember_pool_fraction,
                "nonmember_train_size": cfg.nonmember_train_size,
                "seed": cfg.seed,
            }),
            RoleSource::Explicit(_) => json!({
                "mode": "explicit",
                "nonmember_train_size": a.nonmember_train_size,
            }),
        }
    }

    /// Roles with the known non-members optionally cut down to `size`.
    fn roles(&self, size: Option<usize>, seed: u64) -> Result<Roles> {
        match self {
            RoleSource::Split { members, nonmembers, cfg } => {
                let cfg = RoleConfig { nonmember_train_size: size.or(cfg.nonmember_train_size), ..*cfg };
                Ok(audit::assign_roles(members, nonmembers, &cfg)?)
            }
            RoleSource::Explicit(r) => match size {
                Some(k) => Ok(Roles { no_train: audit::sample_subset(&r.no_train, k, seed)?, ..r.clone() }),
                None => Ok(r.clone()),
            },
        }
    }
}

fn wsa_recipe(a: &WsaArgs, seed: u64) -> WsaRecipe {
    WsaRecipe {
        wsa: WsaConfig {
            lambda: a.lambda,
            pseudo_strategy: match a.strategy {
                StrategyArg::Threshold => PseudoStrategy::Threshold,
                StrategyArg::Random => PseudoStrategy::Random,
            },
            random_count: a.random_count,
            balance: !a.no_balance,
            seed,
        },
        train: TrainConfig {
            learning_rate: a.attack_lr,
            momentum: a.attack_momentum,
            batch_size: a.attack_batch,
            min_batches: a.min_batches,
            epochs: a.attack_epochs,
            holdout_fraction: a.holdout_fraction,
            patience: a.patience,
            seed,
        },
        hidden: a.hidden.clone(),
    }
}

fn wsa_recipe_json(r: &WsaRecipe) -> Value {
    json!({
        "lambda": r.wsa.lambda,
        "strategy": match r.wsa.pseudo_strategy {
            PseudoStrategy::Threshold => "threshold",
            PseudoStrategy::Random => "random",
        },
        "random_count": r.wsa.random_count,
        "balance": r.wsa.balance,
        "hidden": r.hidden,
        "learning_rate": r.train.learning_rate,
        "momentum": r.train.momentum,
        "batch_size": r.train.batch_size,
        "min_batches": r.train.min_batches,
        "epochs": r.train.epochs,
        "holdout_fraction": r.train.holdout_fraction,
        "patience": r.train.patience,
        "seed": r.wsa.seed,
    })
}

/// Runs an attack, scoring CSA and AEA on the worker pool.
fn execute(recipe: &AttackRecipe, roles: &Roles, pool: &rayon::ThreadPool) -> Result<AttackRun> {
    let scores = match recipe {
        AttackRecipe::Csa if roles.eval.is_empty() => return Err(mmia_core::Error::Empty("no records to score").into()),
        AttackRecipe::Csa => parallel::batch_cs(&roles.eval, pool)?,
        AttackRecipe::Aea => parallel::aea_scores(&roles.eval, pool)?,
        AttackRecipe::Wsa(_) => return Ok(audit::run_attack(recipe, roles)?),
    };
    let report = audit::evaluate_scores(&scores, &roles.eval, None)?;
    Ok(AttackRun { scores, report, wsa: None })
}

/// Report header lines describing the attack, WSA diagnostics included.
fn attack_lines(name: &str, run: &AttackRun) -> Vec<(String, String)> {
    let mut lines = vec![("attack".to_string(), name.to_string())];
    if let Some(w) = &run.wsa {
        lines.push(("mu_no".into(), w.stats.mu_no.to_string()));
        lines.push(("sigma_no".into(), w.stats.sigma_no.to_string()));
        lines.push(("n_nonmember_train".into(), w.stats.n.to_string()));
        lines.push(("pseudo_count".into(), w.pseudo_count.to_string()));
        if let Some(m) = w.mislabel_ratio {
            lines.push(("mislabel_ratio".into(), m.to_string()));
        }
        lines.push(("best_epoch".into(), w.training.best_epoch.to_string()));
        lines.push(("stopped_early".into(), w.training.stopped_early.to_string()));
    }
    lines
}

fn cmd_attack(ctx: &Context, kind: AttackCommand) -> Result<String> {
    let (inputs, recipe) = match kind {
        AttackCommand::Csa(i) => (i, AttackRecipe::Csa),
        AttackCommand::Aea(i) => (i, AttackRecipe::Aea),
        AttackCommand::Wsa { inputs, wsa } => (inputs, AttackRecipe::Wsa(wsa_recipe(&wsa, ctx.seed))),
    };
    let name = recipe.name();
    let mut config = json!({ "attack": name, "threads": ctx.threads });
    if let AttackRecipe::Wsa(r) = &recipe {
        config["wsa"] = wsa_recipe_json(r);
    }
    let mut manifest = RunManifest::new(format!("attack {name}"), ctx.seed, Value::Null);
    let source = RoleSource::load(&inputs, ctx.seed, matches!(recipe, AttackRecipe::Wsa(_)), &mut manifest)?;
    config["roles"] = source.config_json(&inputs);
    manifest.config = config;
    let roles = source.roles(None, ctx.seed)?;
    if matches!(recipe, AttackRecipe::Aea) && roles.eval.k_transforms() == 0 {
        return Err(Error::Usage(
            "aea needs transformation channels but the evaluation set has K = 0; use csa instead".into(),
        ));
    }

    let started = Instant::now();
    let run = execute(&recipe, &roles, &ctx.pool()?)?;
    let runtime = started.elapsed().as_secs_f64();

    ctx.write(&mut manifest, &format!("{name}_scores.csv"), &export::scores_csv(&run.scores, Some(&roles.eval))?)?;
    let mut lines = attack_lines(name, &run);
    lines.push((RUNTIME_KEY.into(), format!("{runtime:.3}")));
    let report_path = ctx.write(&mut manifest, &format!("{name}_report.txt"), &render_report(&run.report, &lines))?;
    if let Some(w) = &run.wsa {
        let snap = Snapshot { net: w.net.clone(), stats: w.stats, config: recipe_wsa(&recipe) };
        let path = ctx.out.join("wsa.mian");
        std::fs::write(&path, snapshot::encode(&snap)).map_err(|e| Error::io(&path, e))?;
        manifest.add_output("wsa.mian");
        ctx.write(&mut manifest, "wsa_training.csv", &export::training_log_csv(&w.training.log))?;
    }
    manifest.results = report_json(&run.report);
    if let Some(w) = &run.wsa {
        manifest.results["pseudo_count"] = json!(w.pseudo_count);
        manifest.results["mislabel_ratio"] = json!(w.mislabel_ratio);
    }
    manifest.write(&ctx.out)?;
    let pseudo = run.wsa.as_ref().map(|w| format!(" pseudo={}", w.pseudo_count)).unwrap_or_default();
    Ok(format!(
        "{name}: auc={:.4} tpr@1%fpr={:.4}{pseudo} n={} runtime={runtime:.2}s -> {}",
        run.report.auc,
        run.report.tpr_at(0.01).unwrap_or(f64::NAN),
        run.report.n_members + run.report.n_non_members,
        report_path.display()
    ))
}

fn recipe_wsa(recipe: &AttackRecipe) -> WsaConfig {
    match recipe {
        AttackRecipe::Wsa(r) => r.wsa,
        _ => unreachable!("only WSA runs produce snapshots"),
    }
}

fn report_json(r: &EvalReport) -> Value {
    json!({
        "auc": r.auc,
        "tpr_at_fpr": r.tpr_at_fpr.iter().map(|p| json!({ "fpr": p.target_fpr, "tpr": p.tpr })).collect::<Vec<_>>(),
        "acc": r.acc,
        "n_members": r.n_members,
        "n_non_members": r.n_non_members,
    })
}

fn cmd_eval(ctx: &Context, a: &EvalArgs) -> Result<String> {
    let mut manifest = RunManifest::new("eval", ctx.seed, json!({ "cutoff": a.cutoff }));
    manifest.add_input(&a.scores)?;
    let table = export::read_scores_csv(&a.scores)?;
    let tags: Vec<MembershipTag> = match (&a.eval, table.tags) {
        (Some(path), _) => {
            manifest.add_input(path)?;
            let set = io::read_feature_set(path)?;
            let by_id: std::collections::HashMap<u64, MembershipTag> = set.records().iter().map(|r| (r.id, r.tag)).collect();
            table
                .scores
                .ids
                .iter()
                .map(|id| by_id.get(id).copied().ok_or_else(|| Error::Usage(format!("score id {id} is not in {}", path.display()))))
                .collect::<Result<_>>()?
        }
        (None, Some(tags)) => tags,
        (None, None) => return Err(Error::Usage("the scores CSV has no tag column; pass --eval with tagged features".into())),
    };
    let mut pairs = Vec::with_capacity(tags.len());
    for ((id, s), tag) in table.scores.iter().zip(tags) {
        match tag {
            MembershipTag::Member => pairs.push((s, true)),
            MembershipTag::NonMember => pairs.push((s, false)),
            MembershipTag::Unknown => return Err(Error::Usage(format!("record {id} has no ground-truth tag"))),
        }
    }
    let report = EvalReport::evaluate(&LabeledScores::new(pairs), &DEFAULT_FPR_TARGETS, a.cutoff)?;
    let lines = vec![("scores".to_string(), a.scores.display().to_string())];
    let path = ctx.write(&mut manifest, "eval_report.txt", &render_report(&report, &lines))?;
    manifest.results = report_json(&report);
    manifest.write(&ctx.out)?;
    Ok(format!("eval: auc={:.4} tpr@1%fpr={:.4} -> {}", report.auc, report.tpr_at(0.01).unwrap_or(f64::NAN), path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Lambda,
    NonmemberSize,
    Sigma,
}

impl Dimension {
    fn name(self) -> &'static str {
        match self {
            Dimension::Lambda => "lambda",
            Dimension::NonmemberSize => "nonmember_size",
            Dimension::Sigma => "sigma",
        }
    }

    fn default_values(self) -> Vec<f64> {
        match self {
            Dimension::Lambda => vec![-1.5, -0.5, 0.0, 0.5, 1.0, 1.5],
            Dimension::NonmemberSize => vec![250.0, 500.0, 1000.0, 2000.0],
            Dimension::Sigma => vec![0.0, 0.01, 0.5, 1.0],
        }
    }

    fn default_attacks(self) -> Vec<AttackName> {
        match self {
            Dimension::Lambda => vec![AttackName::Wsa],
            Dimension::NonmemberSize => vec![AttackName::Csa, AttackName::Wsa],
            Dimension::Sigma => vec![AttackName::Csa, AttackName::Aea, AttackName::Wsa],
        }
    }
}

fn cmd_sweep(ctx: &Context, command: SweepCommand) -> Result<String> {
    let (dim, args) = match command {
        SweepCommand::Lambda(a) => (Dimension::Lambda, a),
        SweepCommand::NonmemberSize(a) => (Dimension::NonmemberSize, a),
        SweepCommand::Sigma(a) => (Dimension::Sigma, a),
    };
    let values = if args.values.is_empty() { dim.default_values() } else { args.values.clone() };
    let attacks = if args.attacks.is_empty() { dim.default_attacks() } else { args.attacks.clone() };
    for &v in &values {
        let ok = match dim {
            Dimension::Lambda => v.is_finite(),
            Dimension::NonmemberSize => v >= 2.0 && v.fract() == 0.0,
            Dimension::Sigma => v.is_finite() && v >= 0.0,
        };
        if !ok {
            return Err(Error::Usage(format!("invalid {} value {v}", dim.name())));
        }
    }
    let needs_training = attacks.contains(&AttackName::Wsa);
    let base = wsa_recipe(&args.wsa, ctx.seed);
    let mut manifest = RunManifest::new(format!("sweep {}", dim.name()), ctx.seed, Value::Null);
    let source = RoleSource::load(&args.inputs, ctx.seed, needs_training, &mut manifest)?;
    manifest.config = json!({
        "dimension": dim.name(),
        "values": values,
        "attacks": attacks.iter().map(|a| attack_recipe(*a, &base).name()).collect::<Vec<_>>(),
        "renormalize": args.renormalize,
        "wsa": wsa_recipe_json(&base),
        "roles": source.config_json(&args.inputs),
        "threads": ctx.threads,
    });
    let pool = ctx.pool()?;
    let fixed_roles = match dim {
        Dimension::NonmemberSize => None,
        _ => Some(source.roles(None, ctx.seed)?),
    };

    let mut rows = Vec::new();
    for (i, &value) in values.iter().enumerate() {
        let roles = match (&fixed_roles, dim) {
            (Some(r), Dimension::Sigma) => Ok(perturb_roles(r, &PerturbConfig {
                sigma: value,
                seed: ctx.seed.wrapping_add(i as u64),
                renormalize: args.renormalize,
            })),
            (Some(r), _) => Ok(r.clone()),
            (None, _) => source.roles(Some(value as usize), ctx.seed),
        };
        for &attack in &attacks {
            let mut recipe = attack_recipe(attack, &base);
            if let (AttackRecipe::Wsa(r), Dimension::Lambda) = (&mut recipe, dim) {
                r.wsa.lambda = value;
            }
            let name = recipe.name();
            let outcome = roles.as_ref().map_err(|e| e.to_string()).and_then(|roles| {
                let started = Instant::now();
                execute(&recipe, roles, &pool).map(|run| (run, started.elapsed().as_secs_f64())).map_err(|e| e.to_string())
            });
            let mut row = SweepRow {
                value,
                attack: name.to_string(),
                auc: None,
                tpr_at_1pct_fpr: None,
                acc: None,
                pseudo_count: None,
                error: None,
            };
            match outcome {
                Ok((run, runtime)) => {
                    row.auc = Some(run.report.auc);
                    row.tpr_at_1pct_fpr = run.report.tpr_at(0.01);
                    row.acc = run.report.acc;
                    if dim == Dimension::Lambda {
                        row.pseudo_count = run.wsa.as_ref().map(|w| w.pseudo_count);
                    }
                    let mut lines = vec![(dim.name().to_string(), value.to_string())];
                    lines.extend(attack_lines(name, &run));
                    lines.push((RUNTIME_KEY.into(), format!("{runtime:.3}")));
                    let file = format!("sweep_{}/{}_{}_{}.txt", dim.name(), dim.name(), value, name);
                    ctx.write(&mut manifest, &file, &render_report(&run.report, &lines))?;
                }
                Err(message) => row.error = Some(message),
            }
            rows.push(row);
        }
    }
    // λ only moves the WSA threshold, so pseudo-member counts are reported
    // for every cell of a λ sweep, including failed ones.
    if dim == Dimension::Lambda {
        if let Some(counts) = lambda_pseudo_counts(&source, &values, &base, ctx.seed)? {
            for row in rows.iter_mut().filter(|r| r.attack == "wsa") {
                let idx = values.iter().position(|v| *v == row.value).expect("row value comes from values");
                row.pseudo_count = Some(counts[idx]);
            }
        }
    }
    let csv_name = format!("sweep_{}.csv", dim.name());
    ctx.write(&mut manifest, &csv_name, &export::sweep_csv(dim.name(), &rows))?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    manifest.results = json!({ "cells": rows.len(), "failed": failed });
    manifest.write(&ctx.out)?;
    Ok(format!("sweep {}: {} cells, {} failed -> {}", dim.name(), rows.len(), failed, ctx.out.join(csv_name).display()))
}

/// Pseudo-member counts per λ under the threshold strategy, computed without
/// training anything. `None` when WSA uses the random strategy.
fn lambda_pseudo_counts(source: &RoleSource, values: &[f64], base: &WsaRecipe, seed: u64) -> Result<Option<Vec<usize>>> {
    if base.wsa.pseudo_strategy != PseudoStrategy::Threshold {
        return Ok(None);
    }
    let roles = source.roles(None, seed)?;
    let stats = attacks::fit_nonmember_stats(&attacks::csa_scores(&roles.no_train)?)?;
    let cs = attacks::csa_scores(&roles.all)?;
    Ok(Some(values.iter().map(|&l| cs.scores.iter().filter(|&&s| s >= stats.threshold(l)).count()).collect()))
}

fn attack_recipe(name: AttackName, wsa: &WsaRecipe) -> AttackRecipe {
    match name {
        AttackName::Csa => AttackRecipe::Csa,
        AttackName::Aea => AttackRecipe::Aea,
        AttackName::Wsa => AttackRecipe::Wsa(wsa.clone()),
    }
}

/// Noise depends only on the seed and each record id, so perturbing the
/// role sets separately equals perturbing the inputs before splitting.
fn perturb_roles(r: &Roles, cfg: &PerturbConfig) -> Roles {
    Roles {
        no_train: perturb_features(&r.no_train, cfg),
        all: perturb_features(&r.all, cfg),
        eval: perturb_features(&r.eval, cfg),
    }
}

fn cmd_defend(ctx: &Context, a: &DefendArgs) -> Result<String> {
    if !(a.sigma.is_finite() && a.sigma >= 0.0) {
        return Err(Error::Usage(format!("sigma must be a non-negative number, got {}", a.sigma)));
    }
    let cfg = PerturbConfig { sigma: a.sigma, seed: ctx.seed, renormalize: a.renormalize };
    let config = json!({ "sigma": a.sigma, "renormalize": a.renormalize });
    let mut manifest = RunManifest::new("defend", ctx.seed, config);
    let mut names = std::collections::HashSet::new();
    let mut total = 0;
    for input in &a.inputs {
        let name = input
            .file_name()
            .ok_or_else(|| Error::Usage(format!("{} is not a file path", input.display())))?
            .to_string_lossy()
            .into_owned();
        if !names.insert(name.clone()) {
            return Err(Error::Usage(format!("two inputs share the file name {name}")));
        }
        let target = ctx.out.join(&name);
        if same_file(input, &target) {
            return Err(Error::Usage(format!("output {} would overwrite its input", target.display())));
        }
        manifest.add_input(input)?;
        let set = io::read_feature_set(input)?;
        total += set.len();
        let noisy = perturb_features(&set, &cfg).with_meta("defense", format!("gaussian sigma={}", a.sigma));
        io::write_feature_set(&noisy, &target)?;
        manifest.add_output(name);
    }
    manifest.write(&ctx.out)?;
    Ok(format!("defend: sigma={} on {} records in {} files -> {}", a.sigma, total, a.inputs.len(), ctx.out.display()))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn cmd_dedup(ctx: &Context, a: &DedupArgs) -> Result<String> {
    let mut manifest = RunManifest::new("dedup", ctx.seed, json!({ "stopwords": ingest::STOPWORDS.len() }));
    manifest.add_input(&a.manifest)?;
    manifest.add_input(&a.reference)?;
    let entries = ingest::read_manifest(&a.manifest)?;
    let reference = ingest::read_manifest(&a.reference)?;
    let outcome = ingest::dedup(&entries, &reference);
    ctx.write(&mut manifest, "kept.jsonl", &ingest::manifest_jsonl(&outcome.kept))?;
    ctx.write(&mut manifest, "dedup_report.csv", &export::dedup_report_csv(&outcome.removed))?;
    let by_caption = outcome.removed.iter().filter(|r| r.reason == ingest::RemovalReason::Caption).count();
    manifest.results = json!({
        "kept": outcome.kept.len(),
        "removed_caption": by_caption,
        "removed_url": outcome.removed.len() - by_caption,
    });
    manifest.write(&ctx.out)?;
    Ok(format!(
        "dedup: kept {} of {}, removed {} by caption and {} by url -> {}",
        outcome.kept.len(),
        entries.len(),
        by_caption,
        outcome.removed.len() - by_caption,
        ctx.out.display()
    ))
}
