//! The `fmf` command line.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, read_predictions, Metric};
use crate::featuregen::{
    build_basic, build_feedback, build_hierarchical, build_linear_baseline, build_neighborhood,
    build_pairwise, build_temporal, preference_pairs, read_ratings, BaselineVariant, FeedbackSpec,
    IdSpace, NeighborhoodSpec, RatingRecord, Taxonomy, TemporalSpec, UserHistory,
    PAIRWISE_CONFIG_NOTE,
};
use crate::io::{
    format_instance, load_model, make_buffer, prefetch, save_model, shuffle_blocks, shuffle_file,
    BufferReader, InstanceSource, TextReader, DEFAULT_QUEUE_CAPACITY,
};
use crate::model::ModelDims;
use crate::sparse::Instance;
use crate::trainer::{init_model, train_epoch};

#[derive(Debug, Parser)]
#[command(
    name = "fmf",
    version,
    about = "Feature-based matrix factorization toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Params {
    /// Optional config file, then key=value overrides
    #[arg(value_name = "CONFIG | KEY=VALUE")]
    args: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a ratings file as text instances
    Gen(Params),
    /// Shuffle a text instance file (by user block when a feedback range is set)
    Shuffle(Params),
    /// Convert a text instance file into a binary buffer
    Buffer(Params),
    /// Train a model on a buffer
    Train(Params),
    /// Write activated predictions for a buffer
    Predict(Params),
    /// Score a prediction file against labels
    Eval(Params),
}

impl Command {
    fn parts(&self) -> (&'static str, &Params) {
        match self {
            Command::Gen(p) => ("gen", p),
            Command::Shuffle(p) => ("shuffle", p),
            Command::Buffer(p) => ("buffer", p),
            Command::Train(p) => ("train", p),
            Command::Predict(p) => ("predict", p),
            Command::Eval(p) => ("eval", p),
        }
    }
}

/// Runs the command line and returns the process exit status:
/// 0 success, 1 usage or config error, 2 data error, 3 numeric divergence.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let (task, params) = cli.command.parts();
    match load_config(&params.args).and_then(|cfg| dispatch(task, &cfg, out, err)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "fmf {task}: {e}");
            e.exit_code()
        }
    }
}

fn load_config(args: &[String]) -> Result<RunConfig> {
    let (file, overrides) = match args.first() {
        Some(first) if !first.contains('=') => (Some(first), &args[1..]),
        _ => (None, args),
    };
    let mut cfg = match file {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for a in overrides {
        cfg.apply(a)?;
    }
    Ok(cfg)
}

fn dispatch(task: &str, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    cfg.check_task(task)?;
    match task {
        "gen" => cmd_gen(cfg, err),
        "shuffle" => cmd_shuffle(cfg, out),
        "buffer" => cmd_buffer(cfg, out),
        "train" => cmd_train(cfg, out),
        "predict" => cmd_predict(cfg, out),
        "eval" => cmd_eval(cfg, out),
        _ => unreachable!("clap only yields known subcommands"),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn cmd_gen(cfg: &RunConfig, note: &mut dyn Write) -> Result<()> {
    let encoding = cfg
        .get("encoding")
        .ok_or_else(|| Error::Config("missing required key `encoding`".into()))?;
    let output = cfg.require_path("output")?;
    let ratings = read_ratings(cfg.require_path("ratings")?)?;
    let train = match cfg.path("train_ratings") {
        Some(p) => read_ratings(p)?,
        None => ratings.clone(),
    };
    let all: Vec<RatingRecord> = ratings.iter().chain(&train).copied().collect();
    let cover = IdSpace::covering(&all);
    let ids = IdSpace::new(
        cfg.parse_or("num_users", cover.num_users)?,
        cfg.parse_or("num_items", cover.num_items)?,
    );

    let each = |f: &dyn Fn(&RatingRecord) -> Result<Instance>| {
        ratings.iter().map(f).collect::<Result<Vec<_>>>()
    };
    let instances = match encoding {
        "basic" => each(&|r| build_basic(r, ids))?,
        "user_mean" => each(&|r| build_linear_baseline(r, BaselineVariant::UserMean, ids))?,
        "user_item_mean" => {
            each(&|r| build_linear_baseline(r, BaselineVariant::UserItemMean, ids))?
        }
        "pairwise" => {
            let max = cfg.parse::<usize>("max_pairs")?;
            let pairs = preference_pairs(&ratings, max, cfg.parse_or("seed", 0)?);
            writeln!(note, "{PAIRWISE_CONFIG_NOTE}")?;
            pairs
                .into_iter()
                .map(|(u, i, j)| build_pairwise(u, i, j, ids))
                .collect::<Result<_>>()?
        }
        "temporal" => {
            let window = TemporalSpec::covering(&all, ids.num_users)?;
            let spec = TemporalSpec::new(
                cfg.parse_or("time_start", window.start)?,
                cfg.parse_or("time_end", window.end)?,
                ids.num_users,
            )?;
            writeln!(
                note,
                "temporal layout: user features 0..{}",
                2 * ids.num_users
            )?;
            each(&|r| build_temporal(r, &spec, ids))?
        }
        "neighborhood" => {
            let spec = NeighborhoodSpec::from_ratings(&train, cfg.parse_or("support", 1)?);
            writeln!(note, "neighborhood pairs: {}", spec.num_slots())?;
            each(&|r| build_neighborhood(r, &spec, ids))?
        }
        "hierarchical" => {
            let taxonomy = Taxonomy::read(cfg.require_path("taxonomy")?)?;
            let num_tracks = cfg.parse_or("num_tracks", ids.num_items)?;
            each(&|r| build_hierarchical(r, &taxonomy, num_tracks, ids))?
        }
        "implicit" | "explicit" => {
            let spec = FeedbackSpec {
                history: UserHistory::from_ratings(&train),
                explicit: encoding == "explicit",
                start: cfg.parse_or("feedback_start", ids.num_users)?,
            };
            writeln!(
                note,
                "feedback_start={} feedback_end={}",
                spec.start,
                spec.end(ids)
            )?;
            build_feedback(&ratings, &spec, ids)?
        }
        other => return Err(Error::Config(format!("unknown encoding `{other}`"))),
    };

    let mut w = create(&output)?;
    for inst in &instances {
        writeln!(w, "{}", format_instance(inst))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_shuffle(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let input = cfg.require_path("input")?;
    let output = cfg.require_path("output")?;
    let seed = cfg.parse_or("seed", 0)?;
    match cfg.feedback_range()? {
        Some(range) => {
            let blocks = shuffle_blocks(&input, &output, seed, range)?;
            writeln!(out, "shuffled {blocks} user blocks")?;
        }
        None => {
            let lines = shuffle_file(&input, &output, seed)?;
            writeln!(out, "shuffled {lines} lines")?;
        }
    }
    Ok(())
}

fn cmd_buffer(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let input = cfg.require_path("input")?;
    let buffer = cfg.require_path("buffer")?;
    let dims = match (
        cfg.parse::<usize>("num_global")?,
        cfg.parse::<usize>("num_user")?,
        cfg.parse::<usize>("num_item")?,
    ) {
        (None, None, None) => None,
        (Some(g), Some(u), Some(i)) => Some(ModelDims::new(g, u, i, 0)),
        _ => {
            return Err(Error::Config(
                "num_global, num_user and num_item must be given together".into(),
            ))
        }
    };
    let header = make_buffer(&input, &buffer, dims)?;
    writeln!(
        out,
        "buffered {} instances, dims {}, label mean {}",
        header.count, header.dims, header.label_mean
    )?;
    Ok(())
}

/// `{model_out}.{epoch}`
pub fn snapshot_path(model_out: &Path, epoch: usize) -> PathBuf {
    let mut s = model_out.as_os_str().to_owned();
    s.push(format!(".{epoch}"));
    PathBuf::from(s)
}

fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let buffer = cfg.require_path("buffer")?;
    let model_out = cfg.require_path("model_out")?;
    let loss = cfg.loss()?;
    let config = cfg.train_config()?;
    let capacity = cfg.parse_or("queue_capacity", DEFAULT_QUEUE_CAPACITY)?;

    let header = *BufferReader::open(&buffer)?.header();
    let mut dims = ModelDims {
        num_factor: config.num_factor,
        ..header.dims
    };
    if let Some(r) = config.feedback_range {
        dims.num_user = dims.num_user.max(r.end as usize);
    }
    config.validate(&dims)?;
    let mut model = init_model(dims, &config)?;
    model.mu = cfg.parse_or("base_score", header.label_mean)?;

    for epoch in 1..=config.epochs {
        let mut source = prefetch(BufferReader::open(&buffer)?, capacity)?;
        let report = train_epoch(&mut model, &mut source, &config, loss, epoch)?;
        writeln!(
            out,
            "epoch {epoch} loss {} seconds {:.3}",
            report.mean_loss,
            report.elapsed.as_secs_f64()
        )?;
        out.flush()?;
        save_model(&model, loss, snapshot_path(&model_out, epoch))?;
    }
    save_model(&model, loss, &model_out)?;
    Ok(())
}

/// Instances from `buffer` if set, else from the text file `input`.
fn open_instances(cfg: &RunConfig) -> Result<(Box<dyn InstanceSource>, Option<ModelDims>)> {
    if let Some(path) = cfg.path("buffer") {
        let reader = BufferReader::open(path)?;
        let dims = reader.header().dims;
        return Ok((Box::new(reader), Some(dims)));
    }
    if let Some(path) = cfg.path("input") {
        return Ok((Box::new(TextReader::open(path)?), None));
    }
    Err(Error::Config(
        "missing required key `buffer` (or `input`)".into(),
    ))
}

fn fits(data: &ModelDims, model: &ModelDims) -> bool {
    data.num_global <= model.num_global
        && data.num_user <= model.num_user
        && data.num_item <= model.num_item
}

fn cmd_predict(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let (model, loss) = load_model(cfg.require_path("model_in")?)?;
    let (mut source, dims) = open_instances(cfg)?;
    if let Some(d) = dims {
        if !fits(&d, &model.dims) {
            return Err(Error::IncompatibleDims {
                model: model.dims.to_string(),
                data: d.to_string(),
            });
        }
    }
    let mut file;
    let w: &mut dyn Write = match cfg.path("predictions") {
        Some(p) => {
            file = create(&p)?;
            &mut file
        }
        None => out,
    };
    while let Some(next) = source.next_instance() {
        let p = model.predict(next?, loss)?;
        writeln!(w, "{}", p.activated)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let predictions = read_predictions(cfg.require_path("predictions")?)?;
    let metric: Metric = cfg.parse_or("metric", Metric::Rmse)?;
    let (mut source, _) = open_instances(cfg)?;
    let mut labels = Vec::with_capacity(predictions.len());
    while let Some(next) = source.next_instance() {
        labels.push(next?.label);
    }
    let report = evaluate(metric, &predictions, &labels)?;
    writeln!(out, "{report}")?;
    Ok(())
}
