use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use hsal_core::artifact::GraphArtifact;
use hsal_core::experiment::{budget_sweep, confusion_matrix, emit_report, overall_accuracy, SweepConfig};
use hsal_core::graph::GraphConfig;
use hsal_core::io::{load_labels, load_npy, save_npy, HsiCube, LabelMap, NpyArray};
use hsal_core::land::{LabelState, LandConfig, LandModel};
use hsal_core::vae::{embed_dataset, load_checkpoint, save_checkpoint, train, TrainConfig, VaeArchitecture};
use hsal_core::{Artifact, Cloud, Cube, Model};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "hsal", version, about = "Hyperspectral active learning with VAE embeddings and LAND queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Min-max normalize a raw cube into [0, 1] and write it as an (n, bands) cloud.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a VAE on a cloud or cube and write a checkpoint directory.
    TrainVae(TrainArgs),
    /// Encode a cloud with a trained VAE (posterior means).
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the kNN graph, its spectrum and the density estimate.
    Graph(GraphArgs),
    /// Write the top-`budget` LAND queries with scores and pixel coordinates.
    Queries {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        out: PathBuf,
        /// Diffusion time; defaults to the one stored in the graph.
        #[arg(long)]
        t: Option<u32>,
    },
    /// Propagate answers over the graph and write the label map.
    Propagate {
        #[arg(long)]
        graph: PathBuf,
        /// JSON list of {"index", "label"}.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        t: Option<u32>,
        /// Ground truth to score the result against.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run a budget sweep over the configured arms and write the report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve labeling sessions over HTTP.
    Serve {
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    latent_dim: usize,
    /// Hidden layer widths of the encoder (mirrored in the decoder).
    #[arg(long, value_delimiter = ',', default_value = "128,128,128")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    num_eigs: usize,
    #[arg(long, default_value_t = 30)]
    t: u32,
    /// Kernel bandwidth; defaults to the mean k-th neighbor distance.
    #[arg(long)]
    sigma: Option<f64>,
    /// KDE bandwidth; defaults to sigma.
    #[arg(long)]
    sigma0: Option<f64>,
    /// Image shape HxW when the points are pixels in row-major order.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    let w: usize = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    if h == 0 || w == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok((h, w))
}

/// Reads an (n, d) cloud or an (h, w, bands) cube; a cube also yields its spatial shape.
fn read_points(path: &Path) -> Result<(Cloud, Option<(usize, usize)>)> {
    let array = load_npy(path).with_context(|| format!("reading {}", path.display()))?;
    match array.ndim() {
        2 => Ok((Cloud::from_npy(&array)?, None)),
        3 => {
            let cube = Cube::from_npy(&array)?;
            Ok((cube.to_cloud(), Some((cube.height, cube.width))))
        }
        _ => bail!("{}: expected a 2-D cloud or 3-D cube, got shape {:?}", path.display(), array.shape),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn save(path: &Path, array: &NpyArray) -> Result<()> {
    create_parent(path)?;
    save_npy(array, path).with_context(|| format!("writing {}", path.display()))
}

fn prepare(input: &Path, out: &Path) -> Result<()> {
    let array = load_npy(input).with_context(|| format!("reading {}", input.display()))?;
    let cloud = match array.ndim() {
        3 => {
            let cube = Cube::from_npy(&array)?.normalize()?;
            log::info!("cube {}x{}x{}, raw range {:?}", cube.height, cube.width, cube.bands, cube.value_range);
            cube.to_cloud()
        }
        2 => {
            let cloud = Cloud::from_npy(&array)?;
            let (n, d) = (cloud.n(), cloud.dim());
            let flat: Vec<f64> = cloud.points.iter().copied().collect();
            HsiCube::new(1, n, d, flat)?.normalize()?.to_cloud()
        }
        _ => bail!("expected a 2-D or 3-D array, got shape {:?}", array.shape),
    };
    save(out, &cloud.to_npy())?;
    println!("wrote {} points x {} bands to {}", cloud.n(), cloud.dim(), out.display());
    Ok(())
}

fn train_vae(args: &TrainArgs) -> Result<()> {
    let (cloud, _) = read_points(&args.input)?;
    let arch = VaeArchitecture::symmetric(cloud.dim(), args.hidden.clone(), args.latent_dim);
    let config = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let (params, history) = train(&cloud, &arch, &config)?;
    save_checkpoint(&args.out, &params, &config, &history)?;
    println!(
        "trained {} params for {} epochs in {:.1} s; final loss {:.6} (recon {:.6}, kl {:.6})",
        params.num_params(),
        config.epochs,
        history.wall_ms as f64 / 1e3,
        history.total.last().copied().unwrap_or(f64::NAN),
        history.recon.last().copied().unwrap_or(f64::NAN),
        history.kl.last().copied().unwrap_or(f64::NAN),
    );
    Ok(())
}

fn embed(ckpt: &Path, input: &Path, out: &Path) -> Result<()> {
    let (params, _) = load_checkpoint::<f64>(ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let (cloud, _) = read_points(input)?;
    let latent = embed_dataset(&params, &cloud)?;
    save(out, &latent.to_npy())?;
    println!("wrote {} x {} latent means to {}", latent.n(), latent.dim(), out.display());
    Ok(())
}

fn graph(args: &GraphArgs) -> Result<()> {
    let (cloud, cube_grid) = read_points(&args.input)?;
    let grid = args.grid.or(cube_grid);
    if let Some((h, w)) = grid {
        ensure!(h * w == cloud.n(), "grid {h}x{w} does not match {} points", cloud.n());
    }
    let config = LandConfig {
        graph: GraphConfig {
            k: args.k,
            sigma: args.sigma,
            sigma0: args.sigma0,
            num_eigs: args.num_eigs,
            t: args.t,
        },
        ..LandConfig::default()
    };
    let model = LandModel::fit(&cloud, &config)?;
    let artifact = GraphArtifact::from_model(&model, &cloud, &config, grid);
    artifact.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let d = &model.diagnostics;
    println!(
        "n {} k {} sigma {:.6} sigma0 {:.6}; {} eigenpairs (krylov {}, max residual {:.1e}); {:.1} s",
        d.n,
        args.k,
        d.sigma,
        d.sigma0,
        model.spectrum.len(),
        d.krylov_dim,
        d.max_residual,
        d.total_ms() / 1e3
    );
    Ok(())
}

fn load_model(dir: &Path, t: Option<u32>) -> Result<(Artifact, Model)> {
    let artifact = GraphArtifact::<f64>::load_without_weights(dir).with_context(|| format!("loading graph {}", dir.display()))?;
    let t = t.unwrap_or(artifact.manifest.t);
    let model = Model::from_spectrum(artifact.spectrum.clone(), artifact.density.clone(), t)?;
    Ok((artifact, model))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct QueryRecord {
    rank: usize,
    index: usize,
    row: Option<usize>,
    col: Option<usize>,
    score: f64,
    p: f64,
    rho: f64,
}

fn queries(graph: &Path, budget: usize, out: &Path, t: Option<u32>) -> Result<()> {
    let (artifact, model) = load_model(graph, t)?;
    let n = model.n();
    ensure!(budget >= 1 && budget <= n, "budget must be in 1..={n}");
    let s = &model.scores;
    let records: Vec<QueryRecord> = s.query_order[..budget]
        .iter()
        .enumerate()
        .map(|(rank, &index)| {
            let pixel = artifact.pixel(index);
            QueryRecord {
                rank,
                index,
                row: pixel.map(|p| p.0),
                col: pixel.map(|p| p.1),
                score: s.score[index],
                p: s.density[index],
                rho: s.rho[index],
            }
        })
        .collect();
    write_json(out, &records)?;
    println!("wrote {budget} queries to {}", out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct AnswerRecord {
    index: usize,
    label: u32,
}

/// Scatters point labels onto the artifact grid, or keeps point order without one.
fn label_array(artifact: &Artifact, y: &[u32]) -> NpyArray {
    match (artifact.manifest.grid, &artifact.origin) {
        (Some((h, w)), Some(origin)) => {
            let mut grid = vec![0i32; h * w];
            for (&(r, c), &l) in origin.iter().zip(y) {
                grid[r * w + c] = l as i32;
            }
            NpyArray::from_vec(vec![h, w], grid).expect("shape matches length")
        }
        _ => LabelMap::with_num_classes(y.to_vec(), 0).to_npy(None),
    }
}

fn propagate(graph: &Path, labels: &Path, out: &Path, t: Option<u32>, truth: Option<&Path>) -> Result<()> {
    let (artifact, model) = load_model(graph, t)?;
    let text = std::fs::read_to_string(labels).with_context(|| format!("reading {}", labels.display()))?;
    let answers: Vec<AnswerRecord> = serde_json::from_str(&text).with_context(|| format!("parsing {}", labels.display()))?;
    ensure!(!answers.is_empty(), "{} holds no answers", labels.display());
    let pairs: Vec<(usize, u32)> = answers.iter().map(|a| (a.index, a.label)).collect();
    let state = LabelState::from_answers(model.n(), &pairs)?;
    let result = model.propagate(&state)?;
    save(out, &label_array(&artifact, &result.y))?;
    println!("propagated {} answers over {} points into {}", state.labeled_count(), model.n(), out.display());
    if let Some(path) = truth {
        let truth = load_labels(path, artifact.manifest.grid)?;
        let accuracy = overall_accuracy(&result.y, &truth)?;
        let confusion = confusion_matrix(&result.y, &truth)?;
        println!("accuracy {accuracy:.6} over {} labeled pixels", confusion.total());
    }
    Ok(())
}

/// `sweep.json`: a SweepConfig plus the data it runs on. Paths are relative to the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SweepFile {
    /// (h, w, bands) cube or (n, d) cloud.
    data: PathBuf,
    truth: PathBuf,
    /// Min-max normalize the data before the sweep.
    #[serde(default = "yes")]
    normalize: bool,
    /// Keep only the labeled ground-truth classes, renumbered 1..C.
    #[serde(default = "yes")]
    compact_classes: bool,
    #[serde(flatten)]
    sweep: SweepConfig,
}

fn yes() -> bool {
    true
}

fn sweep(config_path: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let file: SweepFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", config_path.display()))?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let (data, truth_path) = (base.join(&file.data), base.join(&file.truth));
    let array = load_npy(&data).with_context(|| format!("reading {}", data.display()))?;
    let (cloud, spatial) = match array.ndim() {
        3 => {
            let mut cube = Cube::from_npy(&array)?;
            if file.normalize {
                cube = cube.normalize()?;
            }
            let dims = (cube.height, cube.width);
            (cube.to_cloud(), Some(dims))
        }
        2 => {
            let cloud = Cloud::from_npy(&array)?;
            if file.normalize {
                let (n, d) = (cloud.n(), cloud.dim());
                (HsiCube::new(1, n, d, cloud.points.iter().copied().collect())?.normalize()?.to_cloud(), None)
            } else {
                (cloud, None)
            }
        }
        _ => bail!("{}: expected 2-D or 3-D data, got {:?}", data.display(), array.shape),
    };
    let mut truth = load_labels(&truth_path, spatial)?;
    if file.compact_classes {
        let (compact, ids) = truth.compact();
        log::info!("ground-truth classes {ids:?} renumbered 1..={}", ids.len());
        truth = compact;
    }
    let report = budget_sweep(&file.sweep, &cloud, &truth, spatial)?;
    let files = emit_report(&report, out)?;
    for agg in report.aggregates() {
        println!(
            "{:<11} B={:<5} mean {:.4} median {:.4} (n={})",
            agg.arm.name(),
            agg.budget,
            agg.mean,
            agg.median,
            agg.count
        );
    }
    println!("report written to {} ({})", out.display(), files.csv.display());
    Ok(())
}

fn serve(artifacts: PathBuf, host: &str, port: u16, static_dir: Option<PathBuf>) -> Result<()> {
    let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
    if let Some(dir) = &static_dir {
        ensure!(dir.is_dir(), "static directory {} does not exist", dir.display());
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(hsal_service::serve(hsal_service::ServeOptions { artifacts, addr, static_dir }))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Prepare { input, out } => prepare(&input, &out),
        Command::TrainVae(args) => train_vae(&args),
        Command::Embed { ckpt, input, out } => embed(&ckpt, &input, &out),
        Command::Graph(args) => graph(&args),
        Command::Queries { graph, budget, out, t } => queries(&graph, budget, &out, t),
        Command::Propagate { graph, labels, out, t, truth } => propagate(&graph, &labels, &out, t, truth.as_deref()),
        Command::Sweep { config, out } => sweep(&config, &out),
        Command::Serve { artifacts, port, host, static_dir } => serve(artifacts, &host, port, static_dir),
    }
}
