use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arc_core::inject::{inject_combined, InjectionSpec};
use arc_core::pipeline::{
    infer, nk_sweep, prepare, smoothness_report, train_generalist, SmoothnessOptions,
};
use arc_core::synth::{generate_sbm, SbmSpec};
use arc_core::{load_dataset, save_dataset, ArcError, Checkpoint, Result, TrainConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arc", version, about = "Generalist graph anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plant structural and attribute anomalies into a dataset.
    Inject(InjectArgs),
    /// Train one model jointly on several labeled datasets.
    Train(TrainArgs),
    /// Score every non-context node of a dataset.
    Infer(InferArgs),
    /// AUROC/AUPRC over sampled contexts, one row per context size.
    Eval(EvalArgs),
    /// Per-group AUROC of feature subsets ordered by smoothness.
    Smoothness(SmoothnessArgs),
    /// Write an unlabeled stochastic block model dataset.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct InjectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Clique size.
    #[arg(long)]
    p: usize,
    /// Number of cliques.
    #[arg(long)]
    q: usize,
    /// Candidate pool size for attribute anomalies.
    #[arg(long)]
    k: usize,
    /// Attribute anomalies to plant (default p·q).
    #[arg(long)]
    attr_count: Option<usize>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directories, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    data: Vec<PathBuf>,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// File of context node ids, separated by whitespace or commas.
    #[arg(long)]
    context_ids: PathBuf,
    #[arg(long)]
    scores_out: PathBuf,
    #[arg(long)]
    attention_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Context size; a comma separated list runs a sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    nk: Vec<usize>,
    /// Number of context samples (seeds 0..seeds) per size.
    #[arg(long)]
    seeds: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SmoothnessArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 5)]
    groups: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    #[arg(long, default_value_t = 200)]
    features: usize,
    #[arg(long, default_value_t = 5)]
    communities: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sbm")]
    name: String,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| ArcError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_context_ids(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|source| ArcError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut ids = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            ids.push(tok.parse().map_err(|_| ArcError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("bad node id {tok:?}"),
            })?);
        }
    }
    Ok(ids)
}

fn run_inject(a: InjectArgs) -> Result<()> {
    let ds = load_dataset(&a.input)?;
    let spec = InjectionSpec {
        p: a.p,
        q: a.q,
        k: a.k,
        attr_count: a.attr_count,
        seed: a.seed,
    };
    let out = inject_combined(&ds, &spec)?;
    save_dataset(&out, &a.output)?;
    eprintln!(
        "{}: {} anomalies among {} nodes",
        out.name,
        out.anomalies().len(),
        out.n_nodes()
    );
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let cfg = TrainConfig::load(&a.config)?;
    let pool = a.data.iter().map(load_dataset).collect::<Result<Vec<_>>>()?;
    let ckpt = train_generalist(&pool, &cfg)?;
    ckpt.save(&a.out)?;
    if let Some(last) = ckpt.log.epoch_loss.last() {
        eprintln!("{} epochs, final loss {last:.6}", ckpt.log.epochs);
    }
    Ok(())
}

fn run_infer(a: InferArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let context = read_context_ids(&a.context_ids)?;
    let out = infer(&ds, &ckpt, &context)?;

    let mut csv = String::from("node,score\n");
    for (node, score) in out.pairs() {
        writeln!(csv, "{node},{score}").unwrap();
    }
    write_file(&a.scores_out, &csv)?;

    if let Some(path) = &a.attention_out {
        let mut csv = String::from("query");
        // columns follow the context ids in the order given
        for c in &context {
            write!(csv, ",{c}").unwrap();
        }
        csv.push('\n');
        for (r, q) in out.query.iter().enumerate() {
            write!(csv, "{q}").unwrap();
            for w in out.attention.row(r) {
                write!(csv, ",{w}").unwrap();
            }
            csv.push('\n');
        }
        write_file(path, &csv)?;
    }
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let cfg = &ckpt.config;
    let graph = prepare(&ds, cfg.d_u, cfg.hops, cfg.seed)?;
    let rows = nk_sweep(&ckpt, &graph, &a.nk, a.seeds)?;
    let mut csv = String::from("n_k,seeds,auroc_mean,auroc_std,auprc_mean,auprc_std\n");
    for r in rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.n_k, r.seeds, r.auroc_mean, r.auroc_std, r.auprc_mean, r.auprc_std
        )
        .unwrap();
    }
    write_file(&a.out, &csv)
}

fn run_smoothness(a: SmoothnessArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let opts = SmoothnessOptions {
        groups: a.groups,
        ..SmoothnessOptions::default()
    };
    let mut csv = String::from("group,percentile,n_features,s_min,s_max,auroc\n");
    for r in smoothness_report(&ds, &opts)? {
        writeln!(
            csv,
            "{},{}-{},{},{},{},{}",
            r.group, r.percentile.0, r.percentile.1, r.n_features, r.s_min, r.s_max, r.auroc
        )
        .unwrap();
    }
    write_file(&a.out, &csv)
}

fn run_generate(a: GenerateArgs) -> Result<()> {
    let spec = SbmSpec {
        n_nodes: a.nodes,
        n_features: a.features,
        communities: a.communities,
        seed: a.seed,
        ..SbmSpec::default()
    };
    save_dataset(&generate_sbm(&a.name, &spec)?, &a.output)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Inject(a) => run_inject(a),
        Command::Train(a) => run_train(a),
        Command::Infer(a) => run_infer(a),
        Command::Eval(a) => run_eval(a),
        Command::Smoothness(a) => run_smoothness(a),
        Command::Generate(a) => run_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
