//! `jigsaw`: cut images into puzzles, build training sets, train the
//! adjacency classifier and solve puzzles.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use jigsaw_core::buddies::{compute_dnn_buddies, most_compatible_pairs};
use jigsaw_core::dataset::{build_dataset_indexed, split_images};
use jigsaw_core::eval::{self, Solution};
use jigsaw_core::ga::write_stats_csv;
use jigsaw_core::nn::accuracy;
use jigsaw_core::{
    build_matrix, metric_precision, train, Dataset, GaConfig, Network, PuzzleBundle, PuzzleMode, RawImage,
    TrainConfig,
};
use serde::Serialize;

use jigsaw_cli::config::{check_fraction, echo_beside, FileConfig, RunConfig, ECHO_NAME};

#[derive(Parser)]
#[command(name = "jigsaw", version, about = "Square jigsaw puzzle toolkit")]
struct Cli {
    /// Worker threads; 1 keeps runs sequential.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML or JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut every image in a directory into a puzzle bundle.
    Cut {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        tile_size: Option<usize>,
        #[arg(long)]
        mode: Option<PuzzleMode>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build balanced train/validation sets from bundles, split by image.
    BuildDataset {
        /// Directory of bundle directories.
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        val_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write CSV copies.
        #[arg(long)]
        csv: bool,
    },
    /// Train the classifier.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Precision and recall of the learned and raw pairings on one bundle.
    EvalMetric {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// JSON output file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve one bundle.
    Solve {
        #[arg(long)]
        bundle: PathBuf,
        /// Without weights the DNN-buddy phase is skipped.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        ga: GaArgs,
    },
    /// Solve every bundle with and without DNN-buddies.
    Benchmark {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        ga: GaArgs,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GaArgs {
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    elites: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_dnn: bool,
    #[arg(long)]
    no_best_buddies: bool,
}

impl GaArgs {
    fn resolve(&self, file: &FileConfig) -> Result<GaConfig> {
        let mut cfg = file.ga.clone().unwrap_or_default();
        if let Some(s) = file.seed {
            cfg.seed = s;
        }
        if let Some(v) = self.population {
            cfg.population = v;
        }
        if let Some(v) = self.generations {
            cfg.generations = v;
        }
        if let Some(v) = self.elites {
            cfg.elites = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if self.no_dnn {
            cfg.use_dnn = false;
        }
        if self.no_best_buddies {
            cfg.use_best_buddies = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl TrainArgs {
    fn resolve(&self, file: &FileConfig) -> Result<TrainConfig> {
        let mut cfg = file.train.unwrap_or_default();
        if let Some(s) = file.seed {
            cfg.seed = s;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let threads = cli.threads.or(file.threads).unwrap_or(1);
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")?;

    match cli.command {
        Command::Cut {
            input,
            output,
            tile_size,
            mode,
            seed,
        } => {
            let k = tile_size.or(file.tile_size).unwrap_or(jigsaw_core::dataset::FEATURE_TILE);
            let mode = mode.or(file.mode).unwrap_or(PuzzleMode::Type1);
            let seed = seed.or(file.seed).unwrap_or(0);
            cut(&input, &output, k, mode, seed)?;
            let mut echo = RunConfig::new("cut", threads).path("input", &input).path("output", &output);
            echo.tile_size = Some(k);
            echo.mode = Some(mode);
            echo.seed = Some(seed);
            echo.write(&output.join(ECHO_NAME))
        }
        Command::BuildDataset {
            bundles,
            output,
            val_fraction,
            seed,
            csv,
        } => {
            let frac = check_fraction(val_fraction.or(file.val_fraction).unwrap_or(0.1))?;
            let seed = seed.or(file.seed).unwrap_or(0);
            build(&bundles, &output, frac, seed, csv)?;
            let mut echo = RunConfig::new("build-dataset", threads)
                .path("bundles", &bundles)
                .path("output", &output);
            echo.val_fraction = Some(frac);
            echo.seed = Some(seed);
            echo.write(&output.join(ECHO_NAME))
        }
        Command::Train {
            dataset,
            validation,
            output,
            train,
        } => {
            let cfg = train.resolve(&file)?;
            train_cmd(&dataset, validation.as_deref(), &output, &cfg)?;
            let mut echo = RunConfig::new("train", threads).path("dataset", &dataset).path("output", &output);
            if let Some(v) = &validation {
                echo = echo.path("validation", v);
            }
            echo.train = Some(cfg);
            echo.write(&echo_beside(&output))
        }
        Command::EvalMetric {
            bundle,
            weights,
            output,
        } => {
            let json = eval_metric(&bundle, &weights)?;
            match &output {
                Some(p) => {
                    write_file(p, &json)?;
                    RunConfig::new("eval-metric", threads)
                        .path("bundle", &bundle)
                        .path("weights", &weights)
                        .path("output", p)
                        .write(&echo_beside(p))
                }
                None => {
                    print!("{}", String::from_utf8_lossy(&json));
                    Ok(())
                }
            }
        }
        Command::Solve {
            bundle,
            weights,
            output,
            ga,
        } => {
            let cfg = ga.resolve(&file)?;
            let cfg = solve(&bundle, weights.as_deref(), &output, cfg)?;
            let mut echo = RunConfig::new("solve", threads).path("bundle", &bundle).path("output", &output);
            if let Some(w) = &weights {
                echo = echo.path("weights", w);
            }
            echo.ga = Some(cfg);
            echo.write(&output.join(ECHO_NAME))
        }
        Command::Benchmark {
            corpus,
            weights,
            output,
            ga,
        } => {
            let cfg = ga.resolve(&file)?;
            benchmark(&corpus, &weights, &output, &cfg)?;
            let mut echo = RunConfig::new("benchmark", threads)
                .path("corpus", &corpus)
                .path("weights", &weights)
                .path("output", &output);
            echo.ga = Some(cfg);
            echo.write(&output.join(ECHO_NAME))
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cut(input: &Path, output: &Path, k: usize, mode: PuzzleMode, seed: u64) -> Result<()> {
    let files: Vec<PathBuf> = sorted_entries(input)?.into_iter().filter(|p| p.is_file()).collect();
    if files.is_empty() {
        bail!("no images in {}", input.display());
    }
    fs::create_dir_all(output)?;
    let mut made = 0;
    for (i, path) in files.iter().enumerate() {
        let result = RawImage::open(path)
            .map_err(anyhow::Error::from)
            .and_then(|img| Ok(PuzzleBundle::from_image(&img, k, mode, seed.wrapping_add(i as u64))?))
            .and_then(|b| {
                b.save(output.join(stem(path)))?;
                Ok(b)
            });
        match result {
            Ok(b) => {
                made += 1;
                let gt = b.ground_truth.as_ref().expect("fresh bundles carry ground truth");
                println!("{}: {} pieces ({}x{})", stem(path), b.len(), gt.rows, gt.cols);
            }
            Err(e) => eprintln!("warning: skipping {}: {e:#}", path.display()),
        }
    }
    if made == 0 {
        bail!("none of the {} files in {} could be cut", files.len(), input.display());
    }
    println!("{made} bundles written to {}", output.display());
    Ok(())
}

fn load_corpus(dir: &Path) -> Result<Vec<(String, PuzzleBundle)>> {
    let mut out = Vec::new();
    for p in sorted_entries(dir)? {
        if p.join(jigsaw_core::bundle::MANIFEST_NAME).is_file() {
            let b = PuzzleBundle::load(&p).with_context(|| format!("loading bundle {}", p.display()))?;
            out.push((stem(&p), b));
        }
    }
    if out.is_empty() {
        bail!("no bundles under {}", dir.display());
    }
    Ok(out)
}

#[derive(Serialize)]
struct Split<'a> {
    seed: u64,
    val_fraction: f64,
    train: Vec<&'a str>,
    validation: Vec<&'a str>,
}

fn build(bundles: &Path, output: &Path, frac: f64, seed: u64, csv: bool) -> Result<()> {
    let corpus = load_corpus(bundles)?;
    let (train_ids, val_ids) = if frac == 0.0 {
        ((0..corpus.len()).collect(), Vec::new())
    } else {
        split_images(corpus.len(), frac, seed)
    };
    fs::create_dir_all(output)?;
    let subset = |ids: &[usize]| -> Result<Dataset> {
        if ids.is_empty() {
            return Ok(Dataset::default());
        }
        Ok(build_dataset_indexed(ids.iter().map(|&i| (i, &corpus[i].1)), seed)?)
    };
    for (name, ids) in [("train", &train_ids), ("val", &val_ids)] {
        let ds = subset(ids)?;
        let mut bytes = Vec::new();
        ds.write_binary(&mut bytes)?;
        write_file(&output.join(format!("{name}.bin")), &bytes)?;
        if csv {
            let mut text = Vec::new();
            ds.write_csv(&mut text)?;
            write_file(&output.join(format!("{name}.csv")), &text)?;
        }
        println!(
            "{name}: {} images, {} samples ({} positive, {} negative)",
            ids.len(),
            ds.len(),
            ds.positives(),
            ds.negatives()
        );
    }
    let names = |ids: &[usize]| ids.iter().map(|&i| corpus[i].0.as_str()).collect();
    let split = Split {
        seed,
        val_fraction: frac,
        train: names(&train_ids),
        validation: names(&val_ids),
    };
    let mut json = serde_json::to_vec_pretty(&split)?;
    json.push(b'\n');
    write_file(&output.join("split.json"), &json)
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Dataset::decode(&bytes).with_context(|| format!("decoding dataset {}", path.display()))
}

fn load_weights(path: &Path) -> Result<Network> {
    Network::load(path).with_context(|| format!("loading weights {}", path.display()))
}

fn train_cmd(dataset: &Path, validation: Option<&Path>, output: &Path, cfg: &TrainConfig) -> Result<()> {
    let data = read_dataset(dataset)?;
    let val = validation.map(read_dataset).transpose()?;
    let mut net = Network::new(&jigsaw_core::nn::DNN_BUDDIES_SHAPE, cfg.init, cfg.seed)?;
    let log = train(&mut net, &data, val.as_ref(), cfg)?;
    write_file(output, &net.encode())?;
    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    let log_path = output.with_file_name(format!("{}.log.csv", stem(output)));
    write_file(&log_path, &csv)?;
    let acc = accuracy(&net, &data)?;
    print!("trained {} epochs on {} samples: train accuracy {acc:.4}", cfg.epochs, data.len());
    if let Some(v) = val.as_ref().filter(|v| !v.is_empty()) {
        print!(", validation accuracy {:.4}", accuracy(&net, v)?);
    }
    println!();
    Ok(())
}

#[derive(Serialize)]
struct MetricReport {
    version: u32,
    pieces: usize,
    mode: PuzzleMode,
    dnn_buddies: jigsaw_core::MetricStats,
    most_compatible: jigsaw_core::MetricStats,
    best_buddies: jigsaw_core::MetricStats,
    recall_bound: f64,
}

fn eval_metric(bundle_dir: &Path, weights: &Path) -> Result<Vec<u8>> {
    let bundle = PuzzleBundle::load(bundle_dir).with_context(|| format!("loading bundle {}", bundle_dir.display()))?;
    let truth = bundle
        .ground_truth
        .as_ref()
        .context("eval-metric needs a bundle with ground truth")?;
    let net = load_weights(weights)?;
    let matrix = build_matrix(&bundle.pieces, bundle.mode)?;
    let map = compute_dnn_buddies(&matrix, &net, &bundle.pieces)?;
    let report = MetricReport {
        version: eval::REPORT_VERSION,
        pieces: bundle.len(),
        mode: bundle.mode,
        dnn_buddies: metric_precision(&map.pairs(), truth),
        most_compatible: metric_precision(&most_compatible_pairs(&matrix), truth),
        best_buddies: metric_precision(&matrix.best_buddy_pairs(), truth),
        recall_bound: eval::recall_bound(truth.rows, truth.cols),
    };
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    Ok(json)
}

fn solve(bundle_dir: &Path, weights: Option<&Path>, output: &Path, mut cfg: GaConfig) -> Result<GaConfig> {
    let bundle = PuzzleBundle::load(bundle_dir).with_context(|| format!("loading bundle {}", bundle_dir.display()))?;
    let net = weights.map(load_weights).transpose()?;
    if net.is_none() {
        cfg.use_dnn = false;
    }
    let (result, run) = eval::solve_bundle(&stem(bundle_dir), &bundle, net.as_ref(), &cfg)?;
    fs::create_dir_all(output)?;

    let mut placement = serde_json::to_vec_pretty(&Solution::from_chromosome(&result.best))?;
    placement.push(b'\n');
    write_file(&output.join("solution.json"), &placement)?;
    let mut stats = Vec::new();
    write_stats_csv(&result.stats, &mut stats)?;
    write_file(&output.join("stats.csv"), &stats)?;
    let mut report = serde_json::to_vec_pretty(&run)?;
    report.push(b'\n');
    write_file(&output.join("report.json"), &report)?;
    if let Some(tiles) = &bundle.rgb {
        let solved = eval::render(&result.best, tiles, bundle.tile_size)?;
        solved.save_png(output.join("solution.png"))?;
        if let Some(original) = eval::render_truth(&bundle)? {
            eval::side_by_side(&original, &solved, bundle.tile_size / 2).save_png(output.join("comparison.png"))?;
        }
    }
    print!("fitness {:.6}", run.fitness);
    if let (Some(acc), Some(perfect)) = (run.neighbor_accuracy, run.perfect) {
        print!(", neighbor accuracy {acc:.4}, perfect {perfect}");
    }
    println!(", dnn {}", if run.use_dnn { "on" } else { "off" });
    Ok(cfg)
}

fn benchmark(corpus_dir: &Path, weights: &Path, output: &Path, cfg: &GaConfig) -> Result<()> {
    let corpus = load_corpus(corpus_dir)?;
    let net = load_weights(weights)?;
    let report = eval::benchmark(&corpus, &net, cfg)?;
    fs::create_dir_all(output)?;
    write_file(&output.join("report.json"), &report.to_json()?)?;
    let text = report.summary();
    write_file(&output.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}
