//! Command-line frontend: one binary, seven subcommands, reproducible runs.
//!
//! Exit codes partition failures by class:
//!
//! | code | meaning                                |
//! |------|----------------------------------------|
//! | 0    | success                                |
//! | 1    | input could not be read or parsed      |
//! | 2    | inputs parsed but failed validation    |
//! | 3    | gradient check exceeded its threshold  |
//! | 4    | training diverged                      |
//!
//! Diagnostics go to stderr; data goes to stdout or to the paths named by
//! `--out`. Every subcommand is deterministic given its flags and `--seed`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    self, export_attention_profile, parse_ranked_tsv, pca_project, top_k_accuracy,
    two_proportion_z_test,
};
use crate::attention::{
    self, format_bundle, forward_mode, grad_check_with, parse_bundle, AttnMode, DaaParams,
};
use crate::fmt::fmt_sig6;
use crate::ljscore::{
    self, apply_transform, format_profile, interaction_scores, score_pipeline, smooth_scores,
    LjParams, Transform,
};
use crate::structio::{
    self, parse_embeddings, parse_pdb_ca, parse_pose_xyz, parse_protein_tsv, PoseEnsemble,
    ProteinStructure,
};
use crate::train::{
    self, format_metrics_tsv, make_toy_task, train_daa_classifier, train_daa_with_mode,
    train_static_baseline, RunMetrics, TrainConfig,
};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Failure classes, one per nonzero exit code.
#[derive(Debug)]
pub enum CliError {
    Parse(String),
    Validation(String),
    GradCheckFailed(String),
    Divergence(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Validation(_) => 2,
            CliError::GradCheckFailed(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Parse(m)
            | CliError::Validation(m)
            | CliError::GradCheckFailed(m)
            | CliError::Divergence(m) => m,
        }
    }
}

impl From<structio::Error> for CliError {
    fn from(e: structio::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<ljscore::Error> for CliError {
    fn from(e: ljscore::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<attention::Error> for CliError {
    fn from(e: attention::Error) -> Self {
        match &e {
            attention::Error::MalformedBundle { .. } => CliError::Parse(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<analysis::Error> for CliError {
    fn from(e: analysis::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<train::Error> for CliError {
    fn from(e: train::Error) -> Self {
        match e {
            train::Error::Divergence { .. } => CliError::Divergence(e.to_string()),
            train::Error::Attention(a) => a.into(),
            train::Error::Score(s) => s.into(),
            train::Error::Analysis(x) => x.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "daa",
    version,
    about = "Docking-aware attention pooling over protein structures"
)]
pub struct Cli {
    /// Cap the internal thread pool (default: one thread per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Score residue-ligand interactions and print the three-stage profile.
    Score(ScoreArgs),
    /// Run the full pipeline to a pooled context embedding.
    Pool(PoolArgs),
    /// Compare analytic attention gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Train the toy classifier, its two ablations, and the static baseline.
    TrainToy(TrainToyArgs),
    /// Top-k accuracy of ranked predictions.
    Topk(TopkArgs),
    /// Pooled two-proportion z-test on success counts.
    Ztest(ZtestArgs),
    /// Principal-component projection of an embedding matrix.
    Pca(PcaArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TransformArg {
    Raw,
    Negate,
    Abs,
}

impl From<TransformArg> for Transform {
    fn from(t: TransformArg) -> Self {
        match t {
            TransformArg::Raw => Transform::Raw,
            TransformArg::Negate => Transform::Negate,
            TransformArg::Abs => Transform::Abs,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AblationArg {
    Full,
    Standard,
    Docking,
}

impl From<AblationArg> for AttnMode {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Full => AttnMode::Full,
            AblationArg::Standard => AttnMode::Standard,
            AblationArg::Docking => AttnMode::Docking,
        }
    }
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Protein file: residue TSV (index, label, x, y, z) or PDB CA records.
    #[arg(long)]
    pub protein: PathBuf,
    /// Pose XYZ file; repeat the flag to union poses from several files.
    #[arg(long = "poses", required = true)]
    pub poses: Vec<PathBuf>,
    /// Interaction well depth.
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    /// Interaction zero-crossing distance.
    #[arg(long, default_value_t = 3.4)]
    pub sigma: f64,
    /// Lower clamp on pair distances.
    #[arg(long, default_value_t = 0.5)]
    pub rmin: f64,
    /// Sign transform applied to raw scores.
    #[arg(long, value_enum, default_value_t = TransformArg::Abs)]
    pub transform: TransformArg,
    /// Smoothing blend toward the mean (1 = identity).
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PoolArgs {
    /// Protein file: residue TSV (index, label, x, y, z) or PDB CA records.
    #[arg(long)]
    pub protein: PathBuf,
    /// Pose XYZ file; repeat the flag to union poses from several files.
    #[arg(long = "poses", required = true)]
    pub poses: Vec<PathBuf>,
    /// Embedding TSV with one row per residue.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Parameter bundle; omitted = seeded initialization.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Seed for parameter initialization when --params is omitted.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Interaction well depth.
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    /// Interaction zero-crossing distance.
    #[arg(long, default_value_t = 3.4)]
    pub sigma: f64,
    /// Lower clamp on pair distances.
    #[arg(long, default_value_t = 0.5)]
    pub rmin: f64,
    /// Sign transform applied to raw scores.
    #[arg(long, value_enum, default_value_t = TransformArg::Abs)]
    pub transform: TransformArg,
    /// Override the bundle's smoothing blend.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Override the bundle's bias strength.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Drop the score bias (standard) or the query-key term (docking).
    #[arg(long, value_enum, default_value_t = AblationArg::Full)]
    pub ablation: AblationArg,
    /// Output directory for pooled.tsv and attention.tsv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Residues in the random fixture.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    /// Key dimension.
    #[arg(long, default_value_t = 3)]
    pub dh: usize,
    /// Value dimension.
    #[arg(long, default_value_t = 3)]
    pub dv: usize,
    /// Fixture seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corrupt the analytic gradients (negative-control hook).
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

#[derive(Args, Debug)]
pub struct TrainToyArgs {
    /// Seed for both the synthetic task and parameter initialization.
    #[arg(long, default_value_t = 40)]
    pub seed: u64,
    /// Gradient-descent steps.
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// L2 penalty on weight matrices.
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    /// Output directory for metrics, trained params, and the summary.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TopkArgs {
    /// Ranked-prediction TSV: truth, then candidates best-first.
    pub input: PathBuf,
    /// Cutoffs to evaluate; repeatable.
    #[arg(long, default_values_t = [1usize, 3, 5])]
    pub k: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct ZtestArgs {
    pub successes1: u64,
    pub trials1: u64,
    pub successes2: u64,
    pub trials2: u64,
}

#[derive(Args, Debug)]
pub struct PcaArgs {
    /// Embedding TSV; rows are observations.
    pub input: PathBuf,
    /// Number of principal components.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
}

/// Binary entry point: parse flags, size the thread pool, dispatch, and map
/// failures to exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        // Ignore the error when a pool already exists (only possible when
        // embedded in a host process that set one up).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match dispatch(cli.cmd) {
        Ok(stdout_text) => {
            print!("{stdout_text}");
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

/// Run one subcommand; the returned string is the stdout payload (empty for
/// commands that write files instead).
pub fn dispatch(cmd: Cmd) -> Result<String, CliError> {
    match cmd {
        Cmd::Score(a) => cmd_score(a),
        Cmd::Pool(a) => cmd_pool(a),
        Cmd::Gradcheck(a) => cmd_gradcheck(a),
        Cmd::TrainToy(a) => cmd_train_toy(a),
        Cmd::Topk(a) => cmd_topk(a),
        Cmd::Ztest(a) => cmd_ztest(a),
        Cmd::Pca(a) => cmd_pca(a),
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Parse(format!("cannot write {}: {e}", path.display())))
}

/// Parse a protein file, sniffing the format from the content: PDB when any
/// record line starts with `ATOM`, the residue TSV otherwise.
fn load_protein(path: &Path) -> Result<ProteinStructure, CliError> {
    let text = read_input(path)?;
    let looks_like_pdb = text
        .lines()
        .any(|l| l.get(0..6).map(str::trim) == Some("ATOM"));
    if looks_like_pdb {
        Ok(parse_pdb_ca(&text)?)
    } else {
        Ok(parse_protein_tsv(&text)?)
    }
}

/// Parse every pose file and union the poses; the parser enforces a single
/// shared atom sequence across all of them.
fn load_poses(paths: &[PathBuf]) -> Result<PoseEnsemble, CliError> {
    let mut texts = Vec::with_capacity(paths.len());
    for path in paths {
        texts.push(read_input(path)?);
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    Ok(parse_pose_xyz(&refs)?)
}

fn cmd_score(a: ScoreArgs) -> Result<String, CliError> {
    let protein = load_protein(&a.protein)?;
    let ensemble = load_poses(&a.poses)?;
    let params = LjParams {
        epsilon: a.eps,
        sigma: a.sigma,
        r_min_clamp: a.rmin,
        transform: a.transform.into(),
    };
    let profile = score_pipeline(&protein, &ensemble, &params, a.beta)?;
    let text = format_profile(&profile);
    match &a.out {
        Some(path) => {
            write_output(path, &text)?;
            eprintln!("wrote {} residues to {}", protein.len(), path.display());
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn cmd_pool(a: PoolArgs) -> Result<String, CliError> {
    let protein = load_protein(&a.protein)?;
    let ensemble = load_poses(&a.poses)?;
    let embeddings = parse_embeddings(&read_input(&a.embeddings)?)?;
    if embeddings.n() != protein.len() {
        return Err(CliError::Validation(format!(
            "embedding rows {} do not match residue count {}",
            embeddings.n(),
            protein.len()
        )));
    }

    let mut params = match &a.params {
        Some(path) => parse_bundle(&read_input(path)?)?,
        None => DaaParams::init(embeddings.d(), embeddings.d(), embeddings.d(), a.seed)?,
    };
    if let Some(g) = a.gamma {
        params.gamma = g;
    }
    if let Some(b) = a.beta {
        params.beta = b;
    }
    params.validate()?;

    let lj = LjParams {
        epsilon: a.eps,
        sigma: a.sigma,
        r_min_clamp: a.rmin,
        transform: a.transform.into(),
    };
    let raw = interaction_scores(&protein, &ensemble, &lj)?;
    let transformed = apply_transform(&raw, lj.transform);
    let s_hat = smooth_scores(&transformed, params.beta)?;

    let mode: AttnMode = a.ablation.into();
    let output = forward_mode(&embeddings, &s_hat, &params, mode)?;

    // The standard ablation never applies the bias, which is exactly the
    // gamma = 0 model; report that effective value so equivalent runs
    // produce identical bytes.
    let effective_gamma = if mode == AttnMode::Standard { 0.0 } else { params.gamma };
    let provenance = format!(
        "# gamma {}\n# beta {}\n",
        fmt_sig6(effective_gamma),
        fmt_sig6(params.beta)
    );

    let mut pooled = provenance.clone();
    let row: Vec<String> = output.representation.iter().map(|v| fmt_sig6(*v)).collect();
    pooled.push_str(&row.join("\t"));
    pooled.push('\n');

    let profile = provenance + &export_attention_profile(&output, &protein)?;

    fs::create_dir_all(&a.out)
        .map_err(|e| CliError::Parse(format!("cannot create {}: {e}", a.out.display())))?;
    write_output(&a.out.join("pooled.tsv"), &pooled)?;
    write_output(&a.out.join("attention.tsv"), &profile)?;
    eprintln!(
        "pooled {} residues into {} dimensions; outputs in {}",
        protein.len(),
        output.representation.len(),
        a.out.display()
    );
    Ok(String::new())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<String, CliError> {
    let report = grad_check_with(a.seed, a.n, a.d, a.dh, a.dv, a.corrupt)?;
    let mut text = String::from("# columns: block max_rel_error\n");
    for (name, err) in &report.rows {
        text.push_str(&format!("{name}\t{}\n", fmt_sig6(*err)));
    }
    let max = report.max_error();
    let pass = report.passes(GRADCHECK_TOLERANCE);
    text.push_str(&format!(
        "# max {} threshold {} status {}\n",
        fmt_sig6(max),
        fmt_sig6(GRADCHECK_TOLERANCE),
        if pass { "pass" } else { "fail" }
    ));
    if pass {
        Ok(text)
    } else {
        // The table still goes to stdout so the failure can be inspected.
        print!("{text}");
        Err(CliError::GradCheckFailed(format!(
            "max relative error {} exceeds {}",
            fmt_sig6(max),
            fmt_sig6(GRADCHECK_TOLERANCE)
        )))
    }
}

fn summary_row(name: &str, a: &RunMetrics, b: &RunMetrics) -> Result<String, CliError> {
    let cmp = train::compare_runs(a, b)?;
    Ok(format!(
        "{name}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        fmt_sig6(a.final_test_accuracy()),
        fmt_sig6(b.final_test_accuracy()),
        fmt_sig6(cmp.accuracy_delta),
        fmt_sig6(cmp.ztest.z),
        fmt_sig6(cmp.ztest.p_two_sided),
        cmp.ztest.significant_at_0_05
    ))
}

fn cmd_train_toy(a: TrainToyArgs) -> Result<String, CliError> {
    let task = make_toy_task(200, 6, 4, a.seed)?;
    let config = TrainConfig { learning_rate: a.lr, steps: a.steps, seed: a.seed, l2: a.l2 };

    let full = train_daa_classifier(&task, &config)?;
    let standard = train_daa_with_mode(&task, &config, AttnMode::Standard)?;
    let docking = train_daa_with_mode(&task, &config, AttnMode::Docking)?;
    let baseline = train_static_baseline(&task, &config)?;

    fs::create_dir_all(&a.out)
        .map_err(|e| CliError::Parse(format!("cannot create {}: {e}", a.out.display())))?;
    for (name, metrics) in [
        ("metrics_full.tsv", &full.metrics),
        ("metrics_standard.tsv", &standard.metrics),
        ("metrics_docking.tsv", &docking.metrics),
        ("metrics_static.tsv", &baseline.metrics),
    ] {
        write_output(&a.out.join(name), &format_metrics_tsv(&metrics.history))?;
    }
    write_output(&a.out.join("params.tsv"), &format_bundle(&full.params))?;

    let mut summary =
        String::from("# columns: comparison acc_a acc_b delta z p_two_sided significant_at_0_05\n");
    summary.push_str(&summary_row("full_vs_static", &full.metrics, &baseline.metrics)?);
    summary.push_str(&summary_row("full_vs_standard", &full.metrics, &standard.metrics)?);
    summary.push_str(&summary_row("full_vs_docking", &full.metrics, &docking.metrics)?);
    write_output(&a.out.join("summary.tsv"), &summary)?;

    eprintln!(
        "test accuracy: full {} standard {} docking {} static {}; outputs in {}",
        fmt_sig6(full.metrics.final_test_accuracy()),
        fmt_sig6(standard.metrics.final_test_accuracy()),
        fmt_sig6(docking.metrics.final_test_accuracy()),
        fmt_sig6(baseline.metrics.final_test_accuracy()),
        a.out.display()
    );
    Ok(String::new())
}

fn cmd_topk(a: TopkArgs) -> Result<String, CliError> {
    let preds = parse_ranked_tsv(&read_input(&a.input)?)
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let mut text = String::from("# columns: k accuracy\n");
    for k in &a.k {
        let acc = top_k_accuracy(&preds, *k)?;
        text.push_str(&format!("{k}\t{}\n", fmt_sig6(acc)));
    }
    Ok(text)
}

fn cmd_ztest(a: ZtestArgs) -> Result<String, CliError> {
    let r = two_proportion_z_test(a.successes1, a.trials1, a.successes2, a.trials2)?;
    Ok(format!(
        "# columns: z p_two_sided significant_at_0_05 degenerate\n{}\t{}\t{}\t{}\n",
        fmt_sig6(r.z),
        fmt_sig6(r.p_two_sided),
        r.significant_at_0_05,
        r.degenerate
    ))
}

fn cmd_pca(a: PcaArgs) -> Result<String, CliError> {
    let embeddings = parse_embeddings(&read_input(&a.input)?)?;
    let res = pca_project(&embeddings.values, a.k)?;
    let mut text = String::from("# columns: component explained_variance\n");
    for (i, v) in res.explained_variance.iter().enumerate() {
        text.push_str(&format!("{}\t{}\n", i + 1, fmt_sig6(*v)));
    }
    let mut header = String::from("# columns: row");
    for j in 1..=a.k {
        header.push_str(&format!(" pc{j}"));
    }
    text.push_str(&header);
    text.push('\n');
    for i in 0..res.projected.rows() {
        text.push_str(&format!("{}", i + 1));
        for j in 0..a.k {
            text.push('\t');
            text.push_str(&fmt_sig6(res.projected.get(i, j)));
        }
        text.push('\n');
    }
    Ok(text)
}
