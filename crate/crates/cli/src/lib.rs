//! `g2r` command-line front end.
//!
//! Every subcommand validates its inputs and computes its results before it
//! creates the output directory, so a failed run leaves nothing behind.
//! Settings come from command-line flags, then the optional `--config` JSON
//! document, then built-in defaults; the effective settings are written to
//! `run_config.json` next to the outputs.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use g2r_core::encoder::{forward, load_embeddings, propagation_matrix, save_embeddings, EncoderKind, EncoderParams};
use g2r_core::eval::{coverage, kmeans, linear_probe, modularity, performance_metric, ClusterConfig, EvalMetrics, ProbeConfig};
use g2r_core::geometry::{class_pair_sines, cosine_gram, node_rows_csv, pca_project, verify_theory};
use g2r_core::graph::{gen_gaussian_partition, load_graph, save_graph, Graph, Splits, SyntheticConfig};
use g2r_core::trainer::{train, TrainConfig};
use g2r_core::{DenseMatrix, Error, Result};

/// Random train/val/test split written alongside a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            seed: 0,
        }
    }
}

/// K-means sweep over `k_min..=k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommunityConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub resolution: f64,
}

impl Default for CommunityConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 8,
            restarts: 10,
            max_iters: 300,
            seed: 0,
            resolution: 1.0,
        }
    }
}

impl CommunityConfig {
    fn validate(&self) -> Result<()> {
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(invalid(format!("need 1 <= k_min <= k_max, got {}..={}", self.k_min, self.k_max)));
        }
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(invalid("restarts and max_iters must be positive"));
        }
        if !(self.resolution >= 0.0 && self.resolution.is_finite()) {
            return Err(invalid(format!("resolution must be nonnegative, got {}", self.resolution)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub pca_components: usize,
    /// Relative singular-value cutoff for each class's dominant subspace.
    pub span_tol: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            pca_components: 2,
            span_tol: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub trials: usize,
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self { trials: 50, seed: 0 }
    }
}

/// The `--config` document. Every section and field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synthetic: SyntheticConfig,
    pub splits: SplitConfig,
    pub encoder: EncoderKind,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub communities: CommunityConfig,
    pub diagnose: DiagnoseConfig,
    pub theory: TheoryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig::default(),
            splits: SplitConfig::default(),
            encoder: EncoderKind::Gcn,
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            communities: CommunityConfig::default(),
            diagnose: DiagnoseConfig::default(),
            theory: TheoryConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Parser, Debug)]
#[command(name = "g2r", version, about = "Graph representation learning by maximizing rate reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a planted-partition dataset directory.
    GenSynthetic(GenArgs),
    /// Train an encoder on a dataset.
    Train(TrainArgs),
    /// Embed every node of a dataset with a trained checkpoint.
    Embed(EmbedArgs),
    /// Fit a linear probe on embeddings and report accuracies.
    Probe(ProbeArgs),
    /// Sweep k-means over a range of k and score the partitions on the graph.
    Communities(CommunitiesArgs),
    /// Export cosine Gram, PCA and class-pair principal-sine data.
    Diagnose(DiagnoseArgs),
    /// Check the subspace-geometry identities on random instances.
    VerifyTheory(TheoryArgs),
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// JSON settings file; flags take precedence over it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    communities: Option<usize>,
    #[arg(long)]
    nodes_per_community: Option<usize>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    val_frac: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    encoder: Option<EncoderKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma1: Option<f64>,
    #[arg(long)]
    gamma2: Option<f64>,
    /// Build membership rows from the adjacency without self-loops.
    #[arg(long)]
    exclude_self: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    output_dim: Option<usize>,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args, Debug)]
struct CommunitiesArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resolution: Option<f64>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    pca_components: Option<usize>,
    #[arg(long)]
    span_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the report as JSON into this directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// Runs one subcommand; `argv` excludes the program name. Returns the
/// process exit code: 0 on success, 1 on invalid input, 2 on numerical
/// failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = std::iter::once(OsString::from("g2r")).chain(argv.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::GenSynthetic(a) => gen_synthetic(a).map(|()| 0),
        Command::Train(a) => train_cmd(a).map(|()| 0),
        Command::Embed(a) => embed(a).map(|()| 0),
        Command::Probe(a) => probe(a).map(|()| 0),
        Command::Communities(a) => communities(a).map(|()| 0),
        Command::Diagnose(a) => diagnose(a).map(|()| 0),
        Command::VerifyTheory(a) => verify(a),
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn base_config(arg: &ConfigArg) -> Result<RunConfig> {
    match &arg.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| invalid(format!("--{flag} is required")))
}

fn set<T>(target: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *target = v;
    }
}

/// Output directory plus the files queued for it; nothing touches the disk
/// until [`Outputs::commit`].
struct Outputs {
    dir: PathBuf,
    files: Vec<(&'static str, String)>,
}

impl Outputs {
    fn new(dir: &Path, command: &str, inputs: serde_json::Value, config: &RunConfig) -> Result<Self> {
        let echo = serde_json::json!({
            "command": command,
            "inputs": inputs,
            "config": config,
        });
        let text = serde_json::to_string_pretty(&echo).map_err(|source| Error::Json {
            path: dir.join("run_config.json"),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: vec![("run_config.json", text + "\n")],
        })
    }

    fn add(&mut self, name: &'static str, contents: String) {
        self.files.push((name, contents));
    }

    fn add_json<S: Serialize>(&mut self, name: &'static str, value: &S) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
            path: self.dir.join(name),
            source,
        })?;
        self.add(name, text + "\n");
        Ok(())
    }

    fn commit(self) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        for (name, contents) in self.files {
            let path = self.dir.join(name);
            fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn check_out_dir(dir: &Path) -> Result<()> {
    if dir.is_file() {
        return Err(invalid(format!("output path {} is a file", dir.display())));
    }
    Ok(())
}

fn gen_synthetic(a: GenArgs) -> Result<()> {
    let mut cfg = base_config(&a.config)?;
    let s = &mut cfg.synthetic;
    set(&mut s.seed, a.seed);
    set(&mut s.num_communities, a.communities);
    set(&mut s.nodes_per_community, a.nodes_per_community);
    set(&mut s.p_in, a.p_in);
    set(&mut s.p_out, a.p_out);
    set(&mut s.feature_dim, a.feature_dim);
    set(&mut cfg.splits.train, a.train_frac);
    set(&mut cfg.splits.val, a.val_frac);
    set(&mut cfg.splits.seed, a.split_seed);
    check_out_dir(&a.out)?;

    let g = gen_gaussian_partition(&cfg.synthetic)?;
    let splits = Splits::random(g.num_nodes(), cfg.splits.train, cfg.splits.val, cfg.splits.seed)?;
    let g = g.with_splits(splits)?;

    let inputs = serde_json::json!({ "out": path_str(&a.out) });
    let echo = Outputs::new(&a.out, "gen-synthetic", inputs, &cfg)?;
    save_graph(&g, &a.out)?;
    echo.commit()?;
    println!(
        "wrote {} nodes, {} edges, {} features to {}",
        g.num_nodes(),
        g.num_edges(),
        g.feature_dim(),
        a.out.display()
    );
    Ok(())
}

fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = base_config(&a.config)?;
    set(&mut cfg.encoder, a.encoder);
    let t = &mut cfg.train;
    set(&mut t.epochs, a.epochs);
    set(&mut t.learning_rate, a.lr);
    if a.n_samples.is_some() {
        t.n_samples = a.n_samples;
    }
    set(&mut t.rate.epsilon, a.epsilon);
    set(&mut t.rate.gamma1, a.gamma1);
    set(&mut t.rate.gamma2, a.gamma2);
    if a.exclude_self {
        t.include_self = false;
    }
    set(&mut t.seed, a.seed);
    set(&mut t.hidden_dim, a.hidden_dim);
    set(&mut t.output_dim, a.output_dim);
    cfg.train.validate()?;
    let data = required(&a.data, "data")?;
    let out = required(&a.out, "out")?;
    check_out_dir(out)?;
    let g = load_graph(data)?;

    let started = unix_seconds();
    let clock = Instant::now();
    let (params, history) = train(&g, cfg.encoder, &cfg.train)?;

    let mut log = String::new();
    let _ = writeln!(log, "started\t{started:.3}");
    for r in &history.records {
        let _ = writeln!(log, "epoch {}\tobjective {}\tseconds {:.6}", r.epoch, r.objective, r.seconds);
    }
    let _ = writeln!(log, "finished\t{:.3}\telapsed {:.3}", unix_seconds(), clock.elapsed().as_secs_f64());

    let inputs = serde_json::json!({ "data": path_str(data), "out": path_str(out) });
    let mut outputs = Outputs::new(out, "train", inputs, &cfg)?;
    outputs.add("history.tsv", history.to_tsv());
    outputs.add("train.log", log);
    outputs.commit()?;
    params.save(out.join("checkpoint.json"))?;
    if let Some(last) = history.records.last() {
        println!("epoch {}: objective {:.6}", last.epoch, last.objective);
    }
    Ok(())
}

fn embed_graph(g: &Graph, params: &EncoderParams) -> Result<DenseMatrix> {
    let a_hat = propagation_matrix(g, params.kind());
    Ok(forward(params, &a_hat, g.features())?.0)
}

fn embed(a: EmbedArgs) -> Result<()> {
    let cfg = base_config(&a.config)?;
    let data = required(&a.data, "data")?;
    let checkpoint = required(&a.checkpoint, "checkpoint")?;
    let out = required(&a.out, "out")?;
    check_out_dir(out)?;
    let g = load_graph(data)?;
    let params = EncoderParams::load(checkpoint)?;
    if params.dims().input != g.feature_dim() {
        return Err(Error::InconsistentDimensions(format!(
            "checkpoint expects {} input features, dataset has {}",
            params.dims().input,
            g.feature_dim()
        )));
    }
    let z = embed_graph(&g, &params)?;

    let inputs = serde_json::json!({
        "data": path_str(data),
        "checkpoint": path_str(checkpoint),
        "out": path_str(out),
    });
    Outputs::new(out, "embed", inputs, &cfg)?.commit()?;
    save_embeddings(&z, out.join("embeddings.tsv"))?;
    println!("embedded {} nodes into {} dimensions", z.cols(), z.rows());
    Ok(())
}

/// Loads the dataset and embeddings and checks they describe the same nodes.
fn graph_and_embeddings(data: &Path, embeddings: &Path) -> Result<(Graph, DenseMatrix)> {
    let g = load_graph(data)?;
    let z = load_embeddings(embeddings)?;
    if z.cols() != g.num_nodes() {
        return Err(Error::InconsistentDimensions(format!(
            "{} embeds {} nodes, dataset has {}",
            embeddings.display(),
            z.cols(),
            g.num_nodes()
        )));
    }
    Ok((g, z))
}

#[derive(Serialize)]
struct ProbeReport {
    #[serde(flatten)]
    metrics: EvalMetrics,
    train_accuracy: f64,
    val_accuracy: Option<f64>,
    test_accuracy: Option<f64>,
    iterations: usize,
}

fn probe(a: ProbeArgs) -> Result<()> {
    let mut cfg = base_config(&a.config)?;
    set(&mut cfg.probe.l2_strength, a.l2);
    set(&mut cfg.probe.max_iters, a.max_iters);
    let data = required(&a.data, "data")?;
    let embeddings = required(&a.embeddings, "embeddings")?;
    let out = required(&a.out, "out")?;
    check_out_dir(out)?;
    let (g, z) = graph_and_embeddings(data, embeddings)?;
    let labels = g.labels().ok_or_else(|| invalid("probe needs a labeled dataset"))?;
    let splits = g.splits().ok_or_else(|| invalid("probe needs a dataset with splits"))?;
    let res = linear_probe(&z, labels, splits, &cfg.probe)?;

    let report = ProbeReport {
        metrics: EvalMetrics {
            accuracy: Some(res.test_accuracy.or(res.val_accuracy).unwrap_or(res.train_accuracy)),
            ..EvalMetrics::default()
        },
        train_accuracy: res.train_accuracy,
        val_accuracy: res.val_accuracy,
        test_accuracy: res.test_accuracy,
        iterations: res.iterations,
    };
    let inputs = serde_json::json!({
        "data": path_str(data),
        "embeddings": path_str(embeddings),
        "out": path_str(out),
    });
    let mut outputs = Outputs::new(out, "probe", inputs, &cfg)?;
    outputs.add_json("metrics.json", &report)?;
    outputs.commit()?;
    println!("accuracy {:.4}", report.metrics.accuracy.unwrap_or(f64::NAN));
    Ok(())
}

struct SweepRow {
    k: usize,
    modularity: f64,
    coverage: f64,
    performance: f64,
    inertia: f64,
    assignments: Vec<usize>,
}

fn communities(a: CommunitiesArgs) -> Result<()> {
    let mut cfg = base_config(&a.config)?;
    let c = &mut cfg.communities;
    set(&mut c.k_min, a.k_min);
    set(&mut c.k_max, a.k_max);
    set(&mut c.restarts, a.restarts);
    set(&mut c.seed, a.seed);
    set(&mut c.resolution, a.resolution);
    cfg.communities.validate()?;
    let data = required(&a.data, "data")?;
    let embeddings = required(&a.embeddings, "embeddings")?;
    let out = required(&a.out, "out")?;
    check_out_dir(out)?;
    let (g, z) = graph_and_embeddings(data, embeddings)?;
    let c = cfg.communities;
    if c.k_max > g.num_nodes() {
        return Err(invalid(format!("k_max = {} exceeds the {} nodes", c.k_max, g.num_nodes())));
    }
    if g.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }

    let mut rows = Vec::new();
    for k in c.k_min..=c.k_max {
        let res = kmeans(
            &z,
            &ClusterConfig {
                k,
                restarts: c.restarts,
                max_iters: c.max_iters,
                seed: c.seed,
            },
        )?;
        rows.push(SweepRow {
            k,
            modularity: modularity(&g, &res.assignments, c.resolution)?,
            coverage: coverage(&g, &res.assignments)?,
            performance: performance_metric(&g, &res.assignments)?,
            inertia: res.inertia,
            assignments: res.assignments,
        });
    }
    // First maximum wins, so ties go to the smaller k.
    let best = rows
        .iter()
        .fold(&rows[0], |b, r| if r.modularity > b.modularity { r } else { b });

    let mut table = String::from("k\tmodularity\tcoverage\tperformance\tinertia\n");
    for r in &rows {
        let _ = writeln!(table, "{}\t{}\t{}\t{}\t{}", r.k, r.modularity, r.coverage, r.performance, r.inertia);
    }
    let mut assign = String::from("node\tcommunity\n");
    for (i, a) in best.assignments.iter().enumerate() {
        let _ = writeln!(assign, "{i}\t{a}");
    }
    let metrics = EvalMetrics {
        accuracy: None,
        modularity: Some(best.modularity),
        coverage: Some(best.coverage),
        performance: Some(best.performance),
        k: Some(best.k),
    };
    let inputs = serde_json::json!({
        "data": path_str(data),
        "embeddings": path_str(embeddings),
        "out": path_str(out),
    });
    let mut outputs = Outputs::new(out, "communities", inputs, &cfg)?;
    outputs.add_json("metrics.json", &metrics)?;
    outputs.add("communities.tsv", table);
    outputs.add("assignments.tsv", assign);
    outputs.commit()?;
    println!("best k = {} with modularity {:.4}", best.k, best.modularity);
    Ok(())
}

fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let mut cfg = base_config(&a.config)?;
    set(&mut cfg.diagnose.pca_components, a.pca_components);
    set(&mut cfg.diagnose.span_tol, a.span_tol);
    let data = required(&a.data, "data")?;
    let embeddings = required(&a.embeddings, "embeddings")?;
    let out = required(&a.out, "out")?;
    check_out_dir(out)?;
    let (g, z) = graph_and_embeddings(data, embeddings)?;
    let k = cfg.diagnose.pca_components;
    if k == 0 || k > z.rows() {
        return Err(invalid(format!(
            "pca_components must be in 1..={}, got {k}",
            z.rows()
        )));
    }

    let n = z.cols();
    let node_names: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let gram_csv = node_rows_csv(&cosine_gram(&z), &node_names);
    let pc_names: Vec<String> = (1..=k).map(|i| format!("pc{i}")).collect();
    let mut pca_csv = node_rows_csv(&pca_project(&z, k)?, &pc_names);
    let sines = match g.labels() {
        Some(labels) => {
            pca_csv = with_label_column(&pca_csv, labels);
            let mut tsv = String::from("class_a\tclass_b\trank_a\trank_b\tsine_product\n");
            for p in class_pair_sines(&z, labels, cfg.diagnose.span_tol)? {
                let _ = writeln!(tsv, "{}\t{}\t{}\t{}\t{}", p.class_a, p.class_b, p.rank_a, p.rank_b, p.product);
            }
            Some(tsv)
        }
        None => None,
    };

    let inputs = serde_json::json!({
        "data": path_str(data),
        "embeddings": path_str(embeddings),
        "out": path_str(out),
    });
    let mut outputs = Outputs::new(out, "diagnose", inputs, &cfg)?;
    outputs.add("cosine_gram.csv", gram_csv);
    outputs.add("pca.csv", pca_csv);
    if let Some(tsv) = sines {
        outputs.add("class_pair_sines.tsv", tsv);
    }
    outputs.commit()?;
    println!("wrote diagnostics for {n} nodes to {}", out.display());
    Ok(())
}

fn with_label_column(csv: &str, labels: &[usize]) -> String {
    let mut out = String::with_capacity(csv.len() + 8 * labels.len());
    for (i, line) in csv.lines().enumerate() {
        out.push_str(line);
        match i {
            0 => out.push_str(",label"),
            _ => {
                let _ = write!(out, ",{}", labels[i - 1]);
            }
        }
        out.push('\n');
    }
    out
}

fn verify(a: TheoryArgs) -> Result<i32> {
    let mut cfg = base_config(&a.config)?;
    set(&mut cfg.theory.trials, a.trials);
    set(&mut cfg.theory.seed, a.seed);
    if cfg.theory.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if let Some(out) = &a.out {
        check_out_dir(out)?;
    }
    let report = verify_theory(cfg.theory.trials, cfg.theory.seed)?;
    for b in &report.batteries {
        println!(
            "{:<24} trials {:>4}  max residual {:.3e}  tolerance {:.0e}  {}",
            b.name,
            b.trials,
            b.max_residual,
            b.tolerance,
            if b.passed { "PASS" } else { "FAIL" }
        );
    }
    println!("max residual {:.3e}", report.max_residual);
    if let Some(out) = &a.out {
        let inputs = serde_json::json!({ "out": path_str(out) });
        let mut outputs = Outputs::new(out, "verify-theory", inputs, &cfg)?;
        outputs.add_json("theory_report.json", &report)?;
        outputs.commit()?;
    }
    if !report.passed {
        eprintln!("error: a theory battery exceeded its tolerance");
        return Ok(2);
    }
    Ok(0)
}
