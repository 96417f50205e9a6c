//! Subcommand definitions and implementations.

use crate::context::{data_err, usage, CliResult, RunContext};
use clap::{Args, Parser, Subcommand};
use ingrec::data::{
    generate_synthetic, load_class_level, load_recipe_level, make_split, Corpus, ImageStore,
    SplitAssignment, SplitFractions, SyntheticSpec,
};
use ingrec::inspect;
use ingrec::losses::TargetVector;
use ingrec::metrics::{self, DecisionRule, MetricsReport, PredictionSet};
use ingrec::network::{ConvNetConfig, Head, Network};
use ingrec::train::{
    self, load_checkpoint, save_checkpoint, transfer, Dataset, FreezePolicy, Provenance,
    TrainConfig,
};
use ingrec::vocab::{load_particles, SimplificationMap, Vocabulary};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "ingrec",
    version,
    about = "Multi-label food ingredient recognition toolkit",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Build an ingredient vocabulary from a corpus
    BuildVocab(BuildVocabArgs),
    /// Project a vocabulary through a particle list
    SimplifyVocab(SimplifyVocabArgs),
    /// Create a class-stratified train/val/test split
    Split(SplitArgs),
    /// Generate the synthetic shape-salad corpus
    Synth(SynthArgs),
    /// Train a network on a corpus split
    Train(TrainArgs),
    /// Evaluate a checkpoint or a predictions file
    Evaluate(EvaluateArgs),
    /// Predict label sets for a corpus
    Predict(PredictArgs),
    /// Random K-subset prediction baseline
    Baseline(BaselineArgs),
    /// Report top-activating samples per neuron
    InspectNeurons(InspectArgs),
    /// Re-head a checkpoint for a new vocabulary
    Transfer(TransferArgs),
}

/// Corpus input: a JSON-lines recipe file, or the class-level trio.
#[derive(Args)]
pub struct CorpusArgs {
    /// Recipe-level corpus (JSON lines)
    #[arg(long)]
    recipes: Option<PathBuf>,
    /// Class list file (class-level corpus)
    #[arg(long, requires = "class_ingredients")]
    classes: Option<PathBuf>,
    /// "class: ing1, ing2" file (class-level corpus)
    #[arg(long, requires = "classes")]
    class_ingredients: Option<PathBuf>,
    /// Image directory root
    #[arg(long)]
    images_root: Option<PathBuf>,
}

impl CorpusArgs {
    fn load(&self, ctx: &mut RunContext) -> CliResult<Corpus> {
        match (&self.recipes, &self.classes, &self.class_ingredients) {
            (Some(recipes), None, None) => {
                ctx.input("recipes", recipes);
                if let Some(root) = &self.images_root {
                    ctx.input("images_root", root);
                }
                Ok(load_recipe_level(recipes, self.images_root.as_deref())?)
            }
            (None, Some(classes), Some(ingredients)) => {
                let root = self.images_root.as_ref().ok_or_else(|| {
                    usage("class-level corpus needs --images-root")
                })?;
                ctx.input("classes", classes);
                ctx.input("class_ingredients", ingredients);
                ctx.input("images_root", root);
                Ok(load_class_level(classes, ingredients, root)?)
            }
            _ => Err(usage(
                "provide --recipes, or --classes with --class-ingredients",
            )),
        }
    }
}

/// Load input tensors: a feature binary when given, else decode each
/// recipe's image reference as PPM.
fn load_images(
    corpus: &Corpus,
    images: Option<&Path>,
    ctx: &mut RunContext,
) -> CliResult<ImageStore> {
    match images {
        Some(path) => {
            ctx.input("images", path);
            Ok(ImageStore::read_feature_file(path)?)
        }
        None => {
            let entries: Vec<(&str, &str)> = corpus
                .recipes()
                .iter()
                .map(|r| (r.id.as_str(), r.image_ref.as_str()))
                .collect();
            Ok(ImageStore::from_ppm_files(entries)?)
        }
    }
}

fn load_vocab(path: &Path, ctx: &mut RunContext) -> CliResult<Vocabulary> {
    ctx.input("vocab", path);
    Ok(Vocabulary::read_from(path)?)
}

fn load_net(path: &Path, vocab: Option<&Vocabulary>, ctx: &mut RunContext) -> CliResult<Network> {
    ctx.input("checkpoint", path);
    let (net, meta) = load_checkpoint(path)?;
    if let Some(vocab) = vocab {
        if meta.vocab_fingerprint != vocab.fingerprint() {
            eprintln!(
                "warning: checkpoint vocabulary fingerprint {} does not match {} — label ids may disagree",
                meta.vocab_fingerprint,
                vocab.fingerprint()
            );
        }
    }
    Ok(net)
}

fn parse_rule(threshold: Option<f64>, top_k: Option<usize>) -> CliResult<DecisionRule> {
    match (threshold, top_k) {
        (Some(_), Some(_)) => Err(usage("--threshold and --top-k are mutually exclusive")),
        (None, Some(k)) => Ok(DecisionRule::TopK(k)),
        (t, None) => Ok(DecisionRule::Threshold(t.unwrap_or(0.5))),
    }
}

fn parse_fractions(raw: &str) -> CliResult<SplitFractions> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("bad fractions {raw:?}: {e}")))?;
    if parts.len() != 3 {
        return Err(usage(format!(
            "fractions need three comma-separated values, got {raw:?}"
        )));
    }
    Ok(SplitFractions::new(parts[0], parts[1], parts[2])?)
}

fn parse_conv_blocks(raw: &str) -> CliResult<Vec<(usize, usize)>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|block| {
            let (k, c) = block
                .trim()
                .split_once('x')
                .ok_or_else(|| usage(format!("conv block {block:?} is not KxC")))?;
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| usage(format!("conv block {block:?}: {e}")))
            };
            Ok((parse(k)?, parse(c)?))
        })
        .collect()
}

fn write_report(
    report: &MetricsReport,
    format: &str,
    name: &str,
    ctx: &mut RunContext,
) -> CliResult<()> {
    let (file, body) = match format {
        "json" => (format!("{name}.json"), report.to_json()),
        "text" => (format!("{name}.txt"), report.to_text()),
        other => return Err(usage(format!("unknown format {other:?}"))),
    };
    let path = ctx.output(&file);
    std::fs::write(&path, &body).map_err(|e| data_err(format!("write {}: {e}", path.display())))?;
    print!("{body}");
    if format == "json" {
        println!();
    }
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::BuildVocab(args) => build_vocab(args),
        Command::SimplifyVocab(args) => simplify_vocab(args),
        Command::Split(args) => split(args),
        Command::Synth(args) => synth(args),
        Command::Train(args) => train_cmd(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Predict(args) => predict(args),
        Command::Baseline(args) => baseline(args),
        Command::InspectNeurons(args) => inspect_neurons(args),
        Command::Transfer(args) => transfer_cmd(args),
    }
}

#[derive(Args)]
pub struct BuildVocabArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build_vocab(args: BuildVocabArgs) -> CliResult<()> {
    let mut ctx = RunContext::new("build-vocab", &args.out_dir, args.config.as_deref())?;
    let corpus = args.corpus.load(&mut ctx)?;
    let (vocab, stats) = corpus.build_vocabulary()?;
    ctx.record("n_ingredients", stats.n_ingredients);
    ctx.record("n_recipes", stats.n_recipes);
    ctx.record(
        "mean_ingredients_per_recipe",
        format!("{:.4}", stats.mean_ingredients_per_recipe),
    );
    ctx.print_config();
    let path = ctx.output("vocab.txt");
    vocab.write_to(&path)?;
    ctx.write_manifest()
}

#[derive(Args)]
pub struct SimplifyVocabArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Particle list (one token per line); the shipped default when omitted
    #[arg(long)]
    particles: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn simplify_vocab(args: SimplifyVocabArgs) -> CliResult<()> {
    let mut ctx = RunContext::new("simplify-vocab", &args.out_dir, args.config.as_deref())?;
    let vocab = load_vocab(&args.vocab, &mut ctx)?;
    if let Some(p) = &args.particles {
        ctx.input("particles", p);
    }
    let particles = load_particles(args.particles.as_deref())?;
    ctx.record("n_particles", particles.len());
    let map = SimplificationMap::build(&vocab, &particles)?;
    ctx.record("fine_size", vocab.len());
    ctx.record("simplified_size", map.simplified_vocab().len());
    ctx.print_config();
    map.simplified_vocab().write_to(&ctx.output("simplified_vocab.txt"))?;
    map.write_projection(&ctx.output("projection.tsv"))?;
    ctx.write_manifest()
}

#[derive(Args)]
pub struct SplitArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// train,val,test fractions
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn split(args: SplitArgs) -> CliResult<()> {
    let mut ctx = RunContext::new("split", &args.out_dir, args.config.as_deref())?;
    let corpus = args.corpus.load(&mut ctx)?;
    let fractions_raw =
        ctx.setting("fractions", args.fractions, "0.7,0.15,0.15".to_string())?;
    let fractions = parse_fractions(&fractions_raw)?;
    let seed = ctx.setting("seed", args.seed, 0)?;
    ctx.record("n_recipes", corpus.len());
    ctx.print_config();
    let assignment = make_split(&corpus, fractions, seed)?;
    assignment.write_to(&ctx.output("split.json"))?;
    println!(
        "split sizes: train {} / val {} / test {}",
        assignment.train.len(),
        assignment.val.len(),
        assignment.test.len()
    );
    ctx.write_manifest()
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    primitives: Option<usize>,
    #[arg(long)]
    combos: Option<usize>,
    #[arg(long)]
    held_out: Option<usize>,
    #[arg(long)]
    samples_per_combo: Option<usize>,
    #[arg(long)]
    image_size: Option<usize>,
    /// train,val,test fractions over the in-distribution part
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn synth(args: SynthArgs) -> CliResult<()> {
    let mut ctx = RunContext::new("synth", &args.out_dir, args.config.as_deref())?;
    let seed = ctx.setting("seed", args.seed, 0)?;
    let primitives = ctx.setting("primitives", args.primitives, 12)?;
    let combos = ctx.setting("combos", args.combos, 40)?;
    let held_out = ctx.setting("held_out", args.held_out, 8)?;
    let samples = ctx.setting("samples_per_combo", args.samples_per_combo, 50)?;
    let image_size = ctx.setting("image_size", args.image_size, 32)?;
    let fractions_raw =
        ctx.setting("fractions", args.fractions, "0.7,0.15,0.15".to_string())?;
    let fractions = parse_fractions(&fractions_raw)?;
    ctx.print_config();

    let spec = SyntheticSpec::generate(
        primitives, combos, held_out, samples, image_size, image_size, seed,
    )?;
    let synth = generate_synthetic(&spec)?;
    let training = synth.training_corpus()?;
    let (vocab, stats) = synth.corpus.build_vocabulary()?;
    let assignment = make_split(&training, fractions, seed)?;

    synth.corpus.write_jsonl(&ctx.output("recipes.jsonl"))?;
    synth.images.write_feature_file(&ctx.output("images.bin"))?;
    vocab.write_to(&ctx.output("vocab.txt"))?;
    assignment.write_to(&ctx.output("split.json"))?;
    let zs_path = ctx.output("zero_shot.txt");
    std::fs::write(&zs_path, synth.zero_shot_ids.join("\n") + "\n")
        .map_err(|e| data_err(format!("write {}: {e}", zs_path.display())))?;
    println!(
        "generated {} samples ({} zero-shot), {} ingredients, {:.2} per recipe",
        synth.corpus.len(),
        synth.zero_shot_ids.len(),
        stats.n_ingredients,
        stats.mean_ingredients_per_recipe
    );
    ctx.write_manifest()
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Feature binary with input tensors (else PPM refs are decoded)
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Resume/fine-tune from this checkpoint instead of a fresh network
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// sigmoid (multi-label) or softmax (single-label)
    #[arg(long)]
    head: Option<String>,
    #[arg(long)]
    patience: Option<usize>,
    /// Fresh-network conv stack, e.g. 5x16,3x32,3x64,1x64
    #[arg(long)]
    conv_blocks: Option<String>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Constant subtracted from inputs (pixel data wants 0.5)
    #[arg(long)]
    input_offset: Option<f64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn train_cmd(args: TrainArgs) -> CliResult<()> {
    let mut ctx = RunContext::new("train", &args.out_dir, args.config.as_deref())?;
    let corpus = args.corpus.load(&mut ctx)?;
    let images = load_images(&corpus, args.images.as_deref(), &mut ctx)?;
    let vocab = load_vocab(&args.vocab, &mut ctx)?;
    ctx.input("split", &args.split);
    let assignment = SplitAssignment::read_from(&args.split)?;

    let config = TrainConfig {
        learning_rate: ctx.setting("learning_rate", args.learning_rate, 0.02)?,
        momentum: ctx.setting("momentum", args.momentum, 0.9)?,
        batch_size: ctx.setting("batch_size", args.batch_size, 16)?,
        epochs: ctx.setting("epochs", args.epochs, 30)?,
        seed: ctx.setting("seed", args.seed, 0)?,
        head: ctx
            .setting("head", args.head, "sigmoid".to_string())?
            .parse::<Head>()
            .map_err(usage)?,
        early_stop_patience: ctx.setting("patience", args.patience, 10)?,
    };

    let net = match &args.init_checkpoint {
        Some(path) => load_net(path, Some(&vocab), &mut ctx)?,
        None => {
            let first_id = assignment
                .train
                .first()
                .ok_or_else(|| usage("split has an empty train partition"))?;
            let shape = images
                .get(first_id)
                .ok_or_else(|| data_err(format!("no input tensor for id {first_id:?}")))?
                .shape()
                .to_vec();
            let blocks_raw = ctx.setting(
                "conv_blocks",
                args.conv_blocks,
                "5x16,3x32,3x64,1x64".to_string(),
            )?;
            let hidden = ctx.setting("hidden_dim", args.hidden_dim, 0)?;
            let offset = ctx.setting("input_offset", args.input_offset, 0.5)?;
            match shape.as_slice() {
                [c, h, w] => {
                    let mut cfg = ConvNetConfig::desk_default(*c, *h, *w, vocab.len());
                    cfg.conv_blocks = parse_conv_blocks(&blocks_raw)?;
                    cfg.hidden_dim = hidden;
                    cfg.input_offset = offset;
                    cfg.build(config.seed)?
                }
                [d] => {
                    // Feature-vector inputs: dense-only stack.
                    use ingrec::layers::{Dense, Layer};
                    use ingrec::rng::Rng;
                    let mut rng = Rng::seed_from(config.seed);
                    let mut layers = vec![Layer::Flatten];
                    let mut dense_in = *d;
                    if hidden > 0 {
                        layers.push(Layer::Dense(Dense::seeded(dense_in, hidden, &mut rng)));
                        layers.push(Layer::Relu);
                        dense_in = hidden;
                    }
                    layers.push(Layer::Dense(Dense::seeded(dense_in, vocab.len(), &mut rng)));
                    Network::new(layers, config.head)
                }
                other => {
                    return Err(data_err(format!(
                        "unsupported input tensor shape {other:?}"
                    )))
                }
            }
        }
    };
    ctx.record("n_parameters", net.param_count());
    ctx.print_config();

    let data = Dataset::new(&corpus, &images, &vocab);
    let outcome = train::train(&net, &data, &assignment, &config)?;
    for record in &outcome.history {
        println!(
            "epoch {:3}  train loss {:9.4}  val P {:6.2}  R {:6.2}  F1 {:6.2}",
            record.epoch, record.train_loss, record.val_precision, record.val_recall, record.val_f1
        );
    }
    let provenance = Provenance::from_history(&config, &outcome.history, outcome.best_epoch);
    println!(
        "best epoch {} (val F1 {:.2})",
        outcome.best_epoch, provenance.val_f1
    );
    train::write_history(&ctx.output("history.jsonl"), &outcome.history)?;
    save_checkpoint(
        &ctx.output("checkpoint.ckpt"),
        &outcome.network,
        &vocab.fingerprint(),
        provenance,
    )?;
    ctx.write_manifest()
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    vocab: PathBuf,
    /// Model mode: checkpoint to evaluate
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    /// Predictions mode: JSONL {"id", "labels": [...]} to score
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Restrict to one partition of this split file
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    split_name: Option<String>,
    /// Restrict to ids listed in this file (one per line)
    #[arg(long)]
    ids: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Evaluate in the simplified vocabulary induced by this particle file
    /// (pass "default" for the shipped list)
    #[arg(long)]
    simplify: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn select_ids(
    corpus: &Corpus,
    split: Option<&Path>,
    split_name: Option<&str>,
    ids_file: Option<&Path>,
    ctx: &mut RunContext,
) -> CliResult<Vec<String>> {
    match (split, ids_file) {
        (Some(_), Some(_)) => Err(usage("--split and --ids are mutually exclusive")),
        (Some(path), None) => {
            ctx.input("split", path);
            let assignment = SplitAssignment::read_from(path)?;
            let name = split_name.unwrap_or("val");
            ctx.record("split_name", name);
            let ids = match name {
                "train" => assignment.train,
                "val" => assignment.val,
                "test" => assignment.test,
                other => return Err(usage(format!("unknown split name {other:?}"))),
            };
            Ok(ids)
        }
        (None, Some(path)) => {
            ctx.input("ids", path);
            let text = std::fs::read_to_string(path)
                .map_err(|e| data_err(format!("read {}: {e}", path.display())))?;
            Ok(text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect())
        }
        (None, None) => Ok(corpus.recipes().iter().map(|r| r.id.clone()).collect()),
    }
}

/// Optional evaluation-time simplification: both predictions and truths are
/// projected into the simplified vocabulary before scoring.
struct EvalProjection {
    map: SimplificationMap,
}

impl EvalProjection {
    fn build(vocab: &Vocabulary, simplify: &str, ctx: &mut RunContext) -> CliResult<Self> {
        let particles = if simplify == "default" {
            ctx.record("particles", "default");
            load_particles(None)?
        } else {
            let path = PathBuf::from(simplify);
            ctx.input("particles", &path);
            load_particles(Some(&path))?
        };
        Ok(EvalProjection {
            map: SimplificationMap::build(vocab, &particles)?,
        })
    }

    fn project_names(&self, names: &BTreeSet<String>) -> CliResult<TargetVector> {
        let projected = self.map.project_set(names);
        // Projection is total over the simplified vocabulary by construction.
        Ok(self.map.simplified_vocab().encode(&projected, false)?.0)
    }
}

fn evaluate(args: EvaluateArgs) -> CliResult<()> {
    let mut ctx = RunContext::new("evaluate", &args.out_dir, args.config.as_deref())?;
    let corpus = args.corpus.load(&mut ctx)?;
    let vocab = load_vocab(&args.vocab, &mut ctx)?;
    let format = ctx.setting("format", args.format, "json".to_string())?;
    let projection = match &args.simplify {
        Some(simplify) => Some(EvalProjection::build(&vocab, simplify, &mut ctx)?),
        None => None,
    };

    // Gather (id, predicted name set) pairs from a model or a file.
    let (rule_label, predicted): (String, Vec<(String, BTreeSet<String>)>) =
        match (&args.checkpoint, &args.predictions) {
            (Some(_), Some(_)) => {
                return Err(usage("--checkpoint and --predictions are mutually exclusive"))
            }
            (Some(ckpt), None) => {
                let net = load_net(ckpt, Some(&vocab), &mut ctx)?;
                let images = load_images(&corpus, args.images.as_deref(), &mut ctx)?;
                let ids = select_ids(
                    &corpus,
                    args.split.as_deref(),
                    args.split_name.as_deref(),
                    args.ids.as_deref(),
                    &mut ctx,
                )?;
                let rule = parse_rule(args.threshold, args.top_k)?;
                ctx.record("rule", rule);
                let data = Dataset::new(&corpus, &images, &vocab);
                let predictions = train::predict(&net, &data, &ids, rule, 32)?;
                let named = predictions
                    .into_iter()
                    .map(|(id, pred)| {
                        let names = pred
                            .chosen
                            .iter()
                            .filter_map(|&i| vocab.name(i).map(str::to_string))
                            .collect();
                        (id, names)
                    })
                    .collect();
                (rule.to_string(), named)
            }
            (None, Some(path)) => {
                ctx.input("predictions", path);
                ctx.record("rule", "external");
                (String::from("external"), read_predictions(path)?)
            }
            (None, None) => {
                return Err(usage("provide --checkpoint or --predictions"))
            }
        };

    let split_label = ctx
        .setting("split_label", args.split_name.clone(), "all".to_string())?;
    let mut preds = Vec::with_capacity(predicted.len());
    let mut truths = Vec::with_capacity(predicted.len());
    for (id, names) in &predicted {
        let recipe = corpus
            .recipe_by_id(id)
            .ok_or_else(|| data_err(format!("prediction for unknown id {id:?}")))?;
        match &projection {
            Some(p) => {
                let truth = p.project_names(&recipe.ingredients)?;
                let pred = p.project_names(names)?;
                truths.push(truth);
                preds.push(PredictionSet::from_chosen(
                    pred.indices().into_iter().collect(),
                ));
            }
            None => {
                truths.push(corpus.target_for(id, &vocab, true)?);
                let (encoded, dropped) = vocab.encode(names, false)?;
                if dropped > 0 {
                    eprintln!("warning: {dropped} predicted labels for {id} not in vocabulary");
                }
                preds.push(PredictionSet::from_chosen(
                    encoded.indices().into_iter().collect(),
                ));
            }
        }
    }
    ctx.print_config();
    let report = metrics::evaluate(&preds, &truths, &split_label, &rule_label)?;
    write_report(&report, &format, "report", &mut ctx)?;
    ctx.write_manifest()
}

fn read_predictions(path: &Path) -> CliResult<Vec<(String, BTreeSet<String>)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| data_err(format!("read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| data_err(format!("{}:{}: {msg}", path.display(), lineno + 1));
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let id = value
            .get("id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("missing string field \"id\"".into()))?
            .to_string();
        let labels = value
            .get("labels")
            .and_then(|v| v.as_array())
            .ok_or_else(|| bad("missing array field \"labels\"".into()))?
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| bad("labels must be strings".into()))
            })
            .collect::<CliResult<BTreeSet<String>>>()?;
        out.push((id, labels));
    }
    Ok(out)
}

#[derive(Args)]
pub struct PredictArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    split_name: Option<String>,
    #[arg(long)]
    ids: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn predict(args: PredictArgs) -> CliResult<()> {
    let mut ctx = RunContext::new("predict", &args.out_dir, args.config.as_deref())?;
    let corpus = args.corpus.load(&mut ctx)?;
    let vocab = load_vocab(&args.vocab, &mut ctx)?;
    let net = load_net(&args.checkpoint, Some(&vocab), &mut ctx)?;
    let images = load_images(&corpus, args.images.as_deref(), &mut ctx)?;
    let ids = select_ids(
        &corpus,
        args.split.as_deref(),
        args.split_name.as_deref(),
        args.ids.as_deref(),
        &mut ctx,
    )?;
    let rule = parse_rule(args.threshold, args.top_k)?;
    ctx.record("rule", rule);
    ctx.print_config();

    let data = Dataset::new(&corpus, &images, &vocab);
    let predictions = train::predict(&net, &data, &ids, rule, 32)?;
    let mut body = String::new();
    for (id, pred) in &predictions {
        let labels: Vec<&str> = pred
            .chosen
            .iter()
            .filter_map(|&i| vocab.name(i))
            .collect();
        let line = serde_json::json!({
            "id": id,
            "labels": labels,
            "scores": pred.scores,
        });
        body.push_str(&line.to_string());
        body.push('\n');
    }
    let path = ctx.output("predictions.jsonl");
    std::fs::write(&path, body)
        .map_err(|e| data_err(format!("write {}: {e}", path.display())))?;
    println!("wrote {} predictions", predictions.len());
    ctx.write_manifest()
}

#[derive(Args)]
pub struct BaselineArgs {
    /// Monte Carlo mode: label-space size
    #[arg(long)]
    labels: Option<usize>,
    /// Monte Carlo mode: truth-set size per synthetic sample
    #[arg(long)]
    truth_size: Option<usize>,
    /// Monte Carlo mode: number of synthetic samples
    #[arg(long)]
    samples: Option<usize>,
    /// Corpus mode: real truth sets
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Labels drawn per sample; defaults to the rounded mean truth size
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn baseline(args: BaselineArgs) -> CliResult<()> {
    let mut ctx = RunContext::new("baseline", &args.out_dir, args.config.as_deref())?;
    let seed = ctx.setting("seed", args.seed, 0)?;
    let format = ctx.setting("format", args.format, "json".to_string())?;

    let (n_labels, truths) = if let Some(n_labels) = args.labels {
        let truth_size = args
            .truth_size
            .ok_or_else(|| usage("Monte Carlo mode needs --truth-size"))?;
        let samples = ctx.setting("samples", args.samples, 100_000)?;
        ctx.record("labels", n_labels);
        ctx.record("truth_size", truth_size);
        if truth_size == 0 || truth_size > n_labels {
            return Err(usage(format!(
                "--truth-size {truth_size} outside 1..={n_labels}"
            )));
        }
        // Seeded random truth sets of the requested size.
        let mut rng = ingrec::rng::Rng::seed_from(seed ^ 0x7121_7121);
        let mut scratch = Vec::new();
        let truths: Vec<TargetVector> = (0..samples)
            .map(|_| {
                TargetVector::from_indices(&rng.subset(n_labels, truth_size, &mut scratch), n_labels)
                    .expect("subset in range")
            })
            .collect();
        (n_labels, truths)
    } else {
        let corpus = args.corpus.load(&mut ctx)?;
        let vocab_path = args
            .vocab
            .as_ref()
            .ok_or_else(|| usage("corpus mode needs --vocab"))?;
        let vocab = load_vocab(vocab_path, &mut ctx)?;
        let truths: Vec<TargetVector> = corpus
            .recipes()
            .iter()
            .map(|r| Ok(vocab.encode(&r.ingredients, true)?.0))
            .collect::<CliResult<_>>()?;
        (vocab.len(), truths)
    };

    let k = match args.k {
        Some(k) => k,
        None => metrics::baseline_k(&truths),
    };
    ctx.record("k", k);
    ctx.record("n_samples", truths.len());
    ctx.print_config();
    let report = metrics::random_baseline(n_labels, k, &truths, seed)?;
    write_report(&report, &format, "baseline", &mut ctx)?;
    ctx.write_manifest()
}

#[derive(Args)]
pub struct InspectArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    split_name: Option<String>,
    #[arg(long)]
    ids: Option<PathBuf>,
    /// Layer whose activations are inspected
    #[arg(long)]
    layer: usize,
    /// Explicit neuron indices, e.g. 0,3,7
    #[arg(long)]
    neurons: Option<String>,
    /// Or: this many neurons ranked by activation variance
    #[arg(long)]
    top_variance: Option<usize>,
    /// Top samples per neuron
    #[arg(long)]
    k: Option<usize>,
    /// Exclude ingredients present in more than this fraction of the subset
    #[arg(long)]
    mask_over: Option<f64>,
    /// Also write a PPM grid of the top-k images per neuron
    #[arg(long)]
    contact_sheet: bool,
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn inspect_neurons(args: InspectArgs) -> CliResult<()> {
    let mut ctx = RunContext::new("inspect-neurons", &args.out_dir, args.config.as_deref())?;
    let corpus = args.corpus.load(&mut ctx)?;
    let vocab = load_vocab(&args.vocab, &mut ctx)?;
    let net = load_net(&args.checkpoint, Some(&vocab), &mut ctx)?;
    let images = load_images(&corpus, args.images.as_deref(), &mut ctx)?;
    let ids = select_ids(
        &corpus,
        args.split.as_deref(),
        args.split_name.as_deref(),
        args.ids.as_deref(),
        &mut ctx,
    )?;
    let k = ctx.setting("k", args.k, 10)?;
    let format = ctx.setting("format", args.format, "text".to_string())?;
    ctx.record("layer", args.layer);

    let acts = inspect::neuron_activations(&net, &images, &ids, args.layer, 32)?;
    let neurons: Option<Vec<usize>> = match (&args.neurons, args.top_variance) {
        (Some(_), Some(_)) => {
            return Err(usage("--neurons and --top-variance are mutually exclusive"))
        }
        (Some(raw), None) => {
            let parsed: Vec<usize> = raw
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| usage(format!("bad neuron list {raw:?}: {e}")))?;
            ctx.record("neurons", raw);
            Some(parsed)
        }
        (None, Some(m)) => {
            ctx.record("top_variance", m);
            Some(acts.top_by_variance(m))
        }
        (None, None) => {
            ctx.record("neurons", "all");
            None
        }
    };
    if let Some(mask) = args.mask_over {
        ctx.record("mask_over", mask);
    }
    ctx.print_config();

    let reports = inspect::top_k_report(&acts, &corpus, k, neurons.as_deref(), args.mask_over)?;
    let (file, body) = match format.as_str() {
        "json" => ("neurons.json", inspect::reports_to_json(&reports)),
        "text" => ("neurons.txt", inspect::reports_to_text(&reports)),
        other => return Err(usage(format!("unknown format {other:?}"))),
    };
    let path = ctx.output(file);
    std::fs::write(&path, &body)
        .map_err(|e| data_err(format!("write {}: {e}", path.display())))?;
    print!("{body}");
    if args.contact_sheet {
        inspect::contact_sheet(&reports, &images, &ctx.output("contact_sheet.ppm"))?;
    }
    ctx.write_manifest()
}

#[derive(Args)]
pub struct TransferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Vocabulary of the new task (defines the new head size)
    #[arg(long)]
    new_vocab: PathBuf,
    /// none | all_but_head
    #[arg(long)]
    freeze: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn transfer_cmd(args: TransferArgs) -> CliResult<()> {
    let mut ctx = RunContext::new("transfer", &args.out_dir, args.config.as_deref())?;
    ctx.input("checkpoint", &args.checkpoint);
    let (net, meta) = load_checkpoint(&args.checkpoint)?;
    let vocab = load_vocab(&args.new_vocab, &mut ctx)?;
    let freeze = ctx
        .setting("freeze", args.freeze, "none".to_string())?
        .parse::<FreezePolicy>()
        .map_err(usage)?;
    let seed = ctx.setting("seed", args.seed, 0)?;
    ctx.record("old_vocab_fingerprint", &meta.vocab_fingerprint);
    ctx.record("new_vocab_size", vocab.len());
    ctx.print_config();

    let moved = transfer(&net, vocab.len(), freeze, seed)?;
    save_checkpoint(
        &ctx.output("checkpoint.ckpt"),
        &moved,
        &vocab.fingerprint(),
        Provenance::default(),
    )?;
    println!(
        "re-headed {} -> {} labels (freeze: {:?})",
        meta.layers.len(),
        vocab.len(),
        freeze
    );
    ctx.write_manifest()
}
