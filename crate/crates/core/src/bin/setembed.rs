use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use setembed::checkpoint::Checkpoint;
use setembed::config::Settings;
use setembed::data::{
    gen_blobs, gen_rings, load_dataset_csv, make_verification_pairs, parse_pairs_csv, parse_raw_csv, write_dataset_csv,
    write_pairs_csv,
};
use setembed::eval::{score_pairs, verification_metrics, write_pair_scores_csv};
use setembed::gradcheck::{grad_check, GradTerm};
use setembed::plot::write_scatter_svg;
use setembed::svm::{fit_linear_svm, svm_kkt_residual, SvmConfig};
use setembed::trainer::{toy2d_experiment, train, ToySelector, TrainError};

const SEED_ENV: &str = "SETEMBED_SEED";

#[derive(Parser)]
#[command(author, version, about = "Joint sample- and set-based embedding learning")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; trailing `--key value` pairs override config keys.
    Train {
        /// key=value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides such as `--weights.lambda_M 0.03`
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
        overrides: Vec<String>,
    },
    /// Train a 2D embedding on three classes and plot every epoch.
    Toy2d {
        /// S, S+C, S+P or S+M
        selector: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "toy2d")]
        out_dir: PathBuf,
    },
    /// Compare analytic and finite-difference gradients of a loss term.
    Gradcheck {
        /// softmax, max_margin, center, pushing or all
        term: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a linear SVM to `label,f1,..` rows with labels ±1.
    Svmfit {
        csv: PathBuf,
        #[arg(long = "C", default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
    },
    /// Verification metrics of a checkpoint on a labeled dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Pairs CSV (a,b,same); generated when absent
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, default_value_t = 400)]
        pair_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write per-pair scores here
        #[arg(long)]
        scores_out: Option<PathBuf>,
    },
    /// Write a synthetic dataset (and optionally verification pairs).
    GenData {
        #[arg(long, default_value = "blobs")]
        generator: String,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pairs_out: Option<PathBuf>,
        #[arg(long, default_value_t = 400)]
        pair_count: usize,
    },
}

/// Process exit status contract.
enum Failure {
    /// Bad configuration, usage or input: 2.
    Usage(anyhow::Error),
    /// Training hit a non-finite value: 3.
    Numeric(anyhow::Error),
    /// A correctness check did not pass: 4.
    Check(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::Train { config, overrides } => cmd_train(config.as_deref(), &overrides),
        Command::Toy2d { selector, seed, out_dir } => cmd_toy2d(&selector, seed, &out_dir),
        Command::Gradcheck { term, seed } => cmd_gradcheck(&term, seed),
        Command::Svmfit { csv, c, tol, max_iter } => cmd_svmfit(&csv, SvmConfig { c, tol, max_iter }).map_err(Failure::from),
        Command::Eval {
            checkpoint,
            dataset,
            pairs,
            pair_count,
            seed,
            scores_out,
        } => cmd_eval(&checkpoint, &dataset, pairs.as_deref(), pair_count, seed, scores_out.as_deref()).map_err(Failure::from),
        Command::GenData {
            generator,
            classes,
            per_class,
            dim,
            spread,
            separation,
            seed,
            out,
            pairs_out,
            pair_count,
        } => (|| {
            let ds = match generator.as_str() {
                "blobs" => gen_blobs(classes, per_class, dim, spread, separation, seed)?,
                "rings" => gen_rings(classes, per_class, seed)?,
                other => bail!("unknown generator {other:?} (expected blobs or rings)"),
            };
            write_dataset_csv(&ds, &out).with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = pairs_out {
                let pairs = make_verification_pairs(&ds, pair_count, seed)?;
                write_pairs_csv(&pairs, &path).with_context(|| format!("writing {}", path.display()))?;
            }
            println!("wrote {} samples of {} classes to {}", ds.len(), ds.class_count(), out.display());
            Ok(())
        })()
        .map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("numeric failure: {e:#}");
            ExitCode::from(3)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(4)
        }
    }
}

/// Pairs `--key value` or `--key=value` tokens.
fn parse_overrides(tokens: &[String]) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let Some(body) = tok.strip_prefix("--") else {
            bail!("expected an override of the form --key value, got {tok:?}");
        };
        match body.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let value = it.next().with_context(|| format!("override --{body} is missing a value"))?;
                out.push((body.to_string(), value.clone()));
            }
        }
    }
    Ok(out)
}

fn cmd_train(config: Option<&Path>, overrides: &[String]) -> Outcome {
    let mut settings = Settings::default();
    if let Some(path) = config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        settings
            .apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    if let Ok(seed) = std::env::var(SEED_ENV) {
        settings.set("seed", seed.trim()).map_err(anyhow::Error::from)?;
    }
    for (key, value) in parse_overrides(overrides)? {
        settings.set(&key, &value).map_err(anyhow::Error::from)?;
    }
    let run = settings.to_run_config().map_err(anyhow::Error::from)?;
    let (train_set, eval) = run.data.load().context("loading data")?;
    run.train.validate(&train_set).map_err(anyhow::Error::from)?;

    let dir = &run.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.txt"), settings.to_text()).context("writing effective config")?;

    let outcome = match train(&run.train, &train_set, eval.as_ref().map(|(d, p)| (d, p))) {
        Ok(o) => o,
        Err(e @ TrainError::NonFinite { .. }) => return Err(Failure::Numeric(e.into())),
        Err(e) => return Err(Failure::Usage(e.into())),
    };
    outcome
        .log
        .write_csv(dir.join("metrics.csv"))
        .context("writing metrics")?;
    outcome
        .checkpoint
        .save(dir.join("checkpoint.bin"))
        .context("writing checkpoint")?;
    println!(
        "trained {} iterations ({} offline updates, {} online updates)",
        outcome.log.iterations.len(),
        outcome.offline_iterations.len(),
        outcome.online_updates
    );
    if let Some(report) = outcome.log.final_report() {
        fs::write(dir.join("report.txt"), report.to_key_values()).context("writing report")?;
        print!("{report}");
    }
    Ok(())
}

fn cmd_toy2d(selector: &str, seed: u64, out_dir: &Path) -> Outcome {
    let selector: ToySelector = selector.parse().map_err(anyhow::Error::msg)?;
    let run = match toy2d_experiment(selector, seed) {
        Ok(r) => r,
        Err(e @ TrainError::NonFinite { .. }) => return Err(Failure::Numeric(e.into())),
        Err(e) => return Err(Failure::Usage(e.into())),
    };
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    fs::write(
        out_dir.join(format!("toy2d_{selector}_config.txt")),
        format!("selector={selector}\nseed={seed}\n"),
    )
    .context("writing effective config")?;
    let labels = run.dataset.labels();
    for (epoch, snap) in run.snapshots.iter().enumerate() {
        let path = out_dir.join(format!("toy2d_{selector}_epoch{epoch}.svg"));
        write_scatter_svg(&path, snap, labels, &format!("{selector} epoch {epoch}"))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let mut csv = String::from("label,x,y\n");
    for (row, label) in run.final_embeddings().row_iter().zip(labels) {
        csv.push_str(&format!("{label},{},{}\n", row[0], row[1]));
    }
    let path = out_dir.join(format!("toy2d_{selector}_final.csv"));
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {} snapshots to {}", run.snapshots.len(), out_dir.display());
    Ok(())
}

fn cmd_gradcheck(term: &str, seed: u64) -> Outcome {
    let terms: Vec<GradTerm> = if term == "all" {
        GradTerm::ALL.to_vec()
    } else {
        vec![term.parse().map_err(anyhow::Error::msg)?]
    };
    let mut failed = Vec::new();
    for t in terms {
        let r = grad_check(t, seed);
        let worst = r
            .worst_coordinate
            .map_or_else(|| "head".to_string(), |(i, j)| format!("({i},{j})"));
        println!(
            "term={t} max_relative_error={:e} worst_coordinate={worst} checked={} excluded={}",
            r.max_relative_error, r.checked, r.excluded
        );
        if !r.passed() {
            failed.push(t.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("gradient mismatch for {}", failed.join(", "))))
    }
}

/// Shortest representation after rounding to 1e-9, so exact solutions
/// print as `1` and `0` rather than `0.9999999998`.
fn trimmed(v: f64) -> String {
    let r = (v * 1e9).round() / 1e9 + 0.0;
    format!("{r}")
}

fn cmd_svmfit(csv: &Path, config: SvmConfig) -> anyhow::Result<()> {
    let text = fs::read_to_string(csv).with_context(|| format!("reading {}", csv.display()))?;
    let raw = parse_raw_csv(&text)?;
    let y: Vec<f64> = raw
        .labels
        .iter()
        .map(|&l| match l {
            1 => Ok(1.0),
            -1 => Ok(-1.0),
            other => bail!("labels must be -1 or 1, got {other}"),
        })
        .collect::<anyhow::Result<_>>()?;
    let h = fit_linear_svm(&raw.features, &y, &config)?;
    let w: Vec<String> = h.w.iter().map(|&v| trimmed(v)).collect();
    println!("w=({})", w.join(","));
    println!("b={}", trimmed(h.b));
    println!("dual_objective={:?}", h.fit_info.dual_objective);
    println!("kkt_residual={:e}", svm_kkt_residual(&h, &raw.features, &y, config.c));
    println!("iterations={}", h.fit_info.iterations);
    println!("converged={}", h.fit_info.converged);
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    dataset: &Path,
    pairs: Option<&Path>,
    pair_count: usize,
    seed: u64,
    scores_out: Option<&Path>,
) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let ds = load_dataset_csv(dataset).with_context(|| format!("loading {}", dataset.display()))?;
    let pairs = match pairs {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_pairs_csv(&text, &ds)?
        }
        None => make_verification_pairs(&ds, pair_count, seed)?,
    };
    let emb = ckpt.params.embed(ds.features())?;
    let scores = score_pairs(&emb, &pairs)?;
    let same = pairs.same_identity();
    if let Some(path) = scores_out {
        write_pair_scores_csv(path, &scores, &same).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", verification_metrics(&scores, &same)?);
    Ok(())
}
