/*!
Command-line front end for the matchtree library.

Subcommands mirror the analysis stages: `synth` makes a dataset,
`cluster` builds a dendrogram from a score matrix, `cut` turns the
dendrogram into a flat partition, `eval` scores a partition (or, with
`--per-subject`, a whole matrix) against metadata, `render` serializes
a dendrogram for display, and `check` validates a merge table.

Every file-producing run also writes `<command>.manifest.json` into
the output directory: the resolved parameters of the run, so any
result can be reproduced from the artifacts alone. Manifests carry no
timestamps; identical invocations produce byte-identical trees.

Exit codes: 0 success, 1 usage error (bad flags), 2 data error (bad
file contents, unreadable paths). Data diagnostics name the offending
path or entry.

The default output directory is `.`, overridable per run with `--out`
or globally with the `MATCHTREE_OUT` environment variable.
*/

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use serde::Serialize;

use matchtree::dendro::{cut_height, cut_k, export_dot, export_newick, leaves_path, Dendrogram};
use matchtree::dendro::{load_partition, save_partition};
use matchtree::evaluate::{error_breakdown, per_subject_structure, purity, to_json};
use matchtree::linkage::{cluster_with, WardVariant};
use matchtree::meta::{load_metadata, save_metadata, LabelField};
use matchtree::score::io::{load_similarity, save_similarity};
use matchtree::synth::{generate, parse_config, SynthConfig};
use matchtree::{LinkageMethod, MatrixFormat, Symmetrize};

#[derive(Parser)]
#[command(
    name = "matchtree",
    version,
    about = "Hierarchical clustering of match-score matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Cluster a similarity matrix into a dendrogram (merge table).
    Cluster {
        /// Score matrix, tabular or binary (sniffed from the file).
        #[arg(long)]
        input: PathBuf,
        /// Linkage method: single, complete, or ward.
        #[arg(long, value_parser = LinkageMethod::from_str_arg)]
        method: LinkageMethod,
        /// Asymmetry policy: mean (default) or strict[:tolerance].
        #[arg(long, value_parser = parse_symmetrize, default_value = "mean")]
        symmetrize: Symmetrize,
        /// Use the squared-then-rooted Ward variant (Ward.D2).
        #[arg(long = "ward-d2")]
        ward_d2: bool,
        /// Also write the dendrogram as Newick (tree.nwk).
        #[arg(long)]
        newick: bool,
        /// Also write the dendrogram as DOT (tree.dot).
        #[arg(long)]
        dot: bool,
        /// Output directory (default: MATCHTREE_OUT or `.`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cut a dendrogram into a flat partition.
    #[command(group(ArgGroup::new("cutspec").required(true).multiple(false).args(["k", "height"])))]
    Cut {
        /// Merge table written by `cluster`.
        #[arg(long)]
        input: PathBuf,
        /// Number of clusters to cut into.
        #[arg(long)]
        k: Option<usize>,
        /// Height to cut at (merges at or below it are kept).
        #[arg(long)]
        height: Option<f64>,
        /// Output directory (default: MATCHTREE_OUT or `.`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a partition, or a whole matrix per subject, against metadata.
    Eval {
        /// Partition file, or a score matrix with --per-subject.
        #[arg(long)]
        input: PathBuf,
        /// Per-image metadata table.
        #[arg(long)]
        metadata: PathBuf,
        /// Label field to score against.
        #[arg(long, value_parser = LabelField::from_str_arg)]
        by: LabelField,
        /// Extra fields to break misassigned images down by (repeatable).
        #[arg(long, value_parser = LabelField::from_str_arg)]
        secondary: Vec<LabelField>,
        /// Cluster each subject's images separately and cut at k=2.
        #[arg(long)]
        per_subject: bool,
        /// Linkage method for --per-subject runs.
        #[arg(long, value_parser = LinkageMethod::from_str_arg)]
        method: Option<LinkageMethod>,
        /// Worker threads for --per-subject runs (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory (default: MATCHTREE_OUT or `.`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic score matrix and metadata table.
    Synth {
        /// Flat key=value config file (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config key, e.g. --set n_subjects=80 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Score matrix format: tsv (default) or binary.
        #[arg(long, value_parser = parse_format, default_value = "tsv")]
        format: MatrixFormat,
        /// Output directory (default: MATCHTREE_OUT or `.`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serialize a dendrogram as DOT (default) or Newick.
    #[command(group(ArgGroup::new("payload").multiple(false).args(["newick", "dot"])))]
    Render {
        /// Merge table written by `cluster`.
        #[arg(long)]
        input: PathBuf,
        /// Metadata table for leaf coloring (DOT only; requires --by).
        #[arg(long)]
        metadata: Option<PathBuf>,
        /// Label field to color leaves by (requires --metadata).
        #[arg(long, value_parser = LabelField::from_str_arg)]
        by: Option<LabelField>,
        /// Emit Newick instead of DOT.
        #[arg(long)]
        newick: bool,
        /// Emit DOT (the default).
        #[arg(long)]
        dot: bool,
        /// Write tree.dot / tree.nwk plus a manifest here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a merge table: structure and nondecreasing heights.
    Check {
        /// Merge table written by `cluster`.
        #[arg(long)]
        input: PathBuf,
    },
}

/// The resolved parameters of one run, written next to its outputs.
/// Field order is fixed and there are no timestamps, so reruns of the
/// same invocation serialize identically.
#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    inputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ward_variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    symmetrize: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    height: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    by: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    secondary: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_subject: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<String>,
    /// Fully resolved synth config, reparseable as a config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    synth_config: Option<String>,
    outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &'static str, inputs: Vec<String>) -> Self {
        RunManifest {
            tool: "matchtree",
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs,
            method: None,
            ward_variant: None,
            symmetrize: None,
            k: None,
            height: None,
            by: None,
            secondary: Vec::new(),
            per_subject: None,
            jobs: None,
            seed: None,
            format: None,
            synth_config: None,
            outputs: Vec::new(),
        }
    }

    fn write(&self, out_dir: &Path) -> Result<(), Failure> {
        let path = out_dir.join(format!("{}.manifest.json", self.command));
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Failure::Data(format!("manifest serialization failed: {e}")))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| ctx(&path, e))?;
        Ok(())
    }
}

enum Failure {
    /// Flag misuse; exits 1.
    Usage(String),
    /// Bad data or unreadable path; exits 2.
    Data(String),
}

/// Attach the offending path to an underlying error.
fn ctx(path: &Path, err: impl Display) -> Failure {
    Failure::Data(format!("{}: {err}", path.display()))
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Small FromStr adapters with owned error strings for clap.
trait FromStrArg: Sized {
    fn from_str_arg(s: &str) -> Result<Self, String>;
}

impl FromStrArg for LinkageMethod {
    fn from_str_arg(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e: matchtree::Error| e.to_string())
    }
}

impl FromStrArg for LabelField {
    fn from_str_arg(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e: matchtree::Error| e.to_string())
    }
}

fn parse_symmetrize(s: &str) -> Result<Symmetrize, String> {
    match s {
        "mean" => Ok(Symmetrize::Mean),
        "strict" => Ok(Symmetrize::Strict { tolerance: 1e-6 }),
        _ => match s.strip_prefix("strict:") {
            Some(tol) => {
                let tolerance: f64 = tol
                    .parse()
                    .map_err(|_| format!("unparseable tolerance {tol:?}"))?;
                // Also rejects NaN, which fails every comparison.
                if !(tolerance.is_finite() && tolerance >= 0.0) {
                    return Err(format!("tolerance must be nonnegative, got {tolerance}"));
                }
                Ok(Symmetrize::Strict { tolerance })
            }
            None => Err(format!(
                "unknown symmetrize policy {s:?} (expected mean, strict, or strict:<tol>)"
            )),
        },
    }
}

fn symmetrize_str(policy: Symmetrize) -> String {
    match policy {
        Symmetrize::Mean => "mean".to_string(),
        Symmetrize::Strict { tolerance } => format!("strict:{tolerance}"),
    }
}

fn parse_format(s: &str) -> Result<MatrixFormat, String> {
    match s {
        "tsv" => Ok(MatrixFormat::Tsv),
        "binary" => Ok(MatrixFormat::Binary),
        _ => Err(format!("unknown format {s:?} (expected tsv or binary)")),
    }
}

/// `--out`, then `MATCHTREE_OUT`, then the working directory. The
/// directory is created if missing.
fn resolve_out(out: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = out
        .or_else(|| std::env::var_os("MATCHTREE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| ctx(&dir, e))?;
    Ok(dir)
}

fn shown(path: &Path) -> String {
    path.display().to_string()
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| ctx(path, e))
}

/// Print to stdout. A closed pipe (the reader hung up) is not an
/// error; the run carries on and still writes its files.
fn emit(text: &str) -> Result<(), Failure> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(Failure::Data(format!("stdout: {e}"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("matchtree: usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("matchtree: error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Cluster {
            input,
            method,
            symmetrize,
            ward_d2,
            newick,
            dot,
            out,
        } => cmd_cluster(&input, method, symmetrize, ward_d2, newick, dot, out),
        Cmd::Cut {
            input,
            k,
            height,
            out,
        } => cmd_cut(&input, k, height, out),
        Cmd::Eval {
            input,
            metadata,
            by,
            secondary,
            per_subject,
            method,
            jobs,
            out,
        } => cmd_eval(
            &input,
            &metadata,
            by,
            &secondary,
            per_subject,
            method,
            jobs,
            out,
        ),
        Cmd::Synth {
            config,
            set,
            seed,
            format,
            out,
        } => cmd_synth(config.as_deref(), &set, seed, format, out),
        Cmd::Render {
            input,
            metadata,
            by,
            newick,
            dot: _,
            out,
        } => cmd_render(&input, metadata.as_deref(), by, newick, out),
        Cmd::Check { input } => cmd_check(&input),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_cluster(
    input: &Path,
    method: LinkageMethod,
    symmetrize: Symmetrize,
    ward_d2: bool,
    newick: bool,
    dot: bool,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    if ward_d2 && method != LinkageMethod::Ward {
        return Err(usage("--ward-d2 requires --method ward"));
    }
    let out_dir = resolve_out(out)?;
    let sim = load_similarity(input, symmetrize).map_err(|e| ctx(input, e))?;
    let dist = sim.to_distance();
    drop(sim);
    let variant = if ward_d2 {
        WardVariant::D2
    } else {
        WardVariant::D
    };
    let tree = cluster_with(dist, method, variant);

    let table = out_dir.join("merges.tsv");
    tree.save(&table).map_err(|e| ctx(&table, e))?;
    let mut outputs = vec![shown(&table), shown(&leaves_path(&table))];
    if newick {
        let path = out_dir.join("tree.nwk");
        write_text(&path, &export_newick(&tree))?;
        outputs.push(shown(&path));
    }
    if dot {
        let path = out_dir.join("tree.dot");
        let text = export_dot(&tree, None).map_err(|e| Failure::Data(e.to_string()))?;
        write_text(&path, &text)?;
        outputs.push(shown(&path));
    }

    let mut manifest = RunManifest::new("cluster", vec![shown(input)]);
    manifest.method = Some(method.as_str().to_string());
    manifest.ward_variant =
        (method == LinkageMethod::Ward).then(|| if ward_d2 { "D2" } else { "D" }.to_string());
    manifest.symmetrize = Some(symmetrize_str(symmetrize));
    manifest.outputs = outputs;
    manifest.write(&out_dir)
}

fn cmd_cut(
    input: &Path,
    k: Option<usize>,
    height: Option<f64>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let out_dir = resolve_out(out)?;
    let tree = Dendrogram::load(input).map_err(|e| ctx(input, e))?;
    let partition = match (k, height) {
        (Some(k), None) => cut_k(&tree, k).map_err(|e| Failure::Data(e.to_string()))?,
        (None, Some(h)) => cut_height(&tree, h),
        _ => unreachable!("clap group guarantees exactly one of --k / --height"),
    };

    let path = out_dir.join("partition.tsv");
    save_partition(&partition, &path).map_err(|e| ctx(&path, e))?;

    let mut manifest = RunManifest::new("cut", vec![shown(input)]);
    manifest.k = k;
    manifest.height = height;
    manifest.outputs = vec![shown(&path)];
    manifest.write(&out_dir)
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    input: &Path,
    metadata: &Path,
    by: LabelField,
    secondary: &[LabelField],
    per_subject: bool,
    method: Option<LinkageMethod>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    if per_subject {
        if method.is_none() {
            return Err(usage("--per-subject requires --method"));
        }
    } else {
        if method.is_some() {
            return Err(usage("--method only applies to --per-subject runs"));
        }
        if jobs.is_some() {
            return Err(usage("--jobs only applies to --per-subject runs"));
        }
        if !secondary.is_empty() && secondary.contains(&by) {
            return Err(usage(format!(
                "--secondary {} repeats the --by field",
                by.as_str()
            )));
        }
    }
    if let Some(jobs) = jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Data(format!("thread pool: {e}")))?;
    }
    let out_dir = resolve_out(out)?;
    let meta = load_metadata(metadata).map_err(|e| ctx(metadata, e))?;

    let json = if per_subject {
        let method = method.expect("checked above");
        let sim = load_similarity(input, Symmetrize::Mean).map_err(|e| ctx(input, e))?;
        let dist = sim.to_distance();
        drop(sim);
        let report = per_subject_structure(&dist, &meta, method, by)
            .map_err(|e| Failure::Data(e.to_string()))?;
        to_json(&report).map_err(|e| Failure::Data(e.to_string()))?
    } else {
        let partition = load_partition(input).map_err(|e| ctx(input, e))?;
        let report = purity(&partition, &meta, by).map_err(|e| Failure::Data(e.to_string()))?;
        if secondary.is_empty() {
            to_json(&report).map_err(|e| Failure::Data(e.to_string()))?
        } else {
            let errors = error_breakdown(&partition, &meta, by, secondary)
                .map_err(|e| Failure::Data(e.to_string()))?;
            #[derive(Serialize)]
            struct Combined<A, B> {
                purity: A,
                errors: B,
            }
            to_json(&Combined {
                purity: report,
                errors,
            })
            .map_err(|e| Failure::Data(e.to_string()))?
        }
    };

    let path = out_dir.join("report.json");
    write_text(&path, &json)?;
    emit(&json)?;

    let mut manifest = RunManifest::new("eval", vec![shown(input), shown(metadata)]);
    manifest.by = Some(by.as_str().to_string());
    manifest.secondary = secondary.iter().map(|f| f.as_str().to_string()).collect();
    manifest.per_subject = per_subject.then_some(true);
    manifest.method = method.map(|m| m.as_str().to_string());
    manifest.jobs = jobs;
    manifest.outputs = vec![shown(&path)];
    manifest.write(&out_dir)
}

/// Apply `--set key=value` overrides onto a resolved config by line
/// replacement in its canonical text, then reparse. Replacement keeps
/// the config parser the single authority on keys and values. Like
/// config files, any `group.*` (or `gender_bonus_override.*`) key
/// replaces that whole set, not one entry of it.
fn apply_overrides(cfg: &SynthConfig, sets: &[String]) -> Result<SynthConfig, Failure> {
    let mut lines: Vec<String> = cfg.to_config_string().lines().map(str::to_string).collect();
    for prefix in ["group.", "gender_bonus_override."] {
        if sets.iter().any(|s| s.trim_start().starts_with(prefix)) {
            lines.retain(|line| !line.starts_with(prefix));
        }
    }
    for set in sets {
        let (key, value) = set
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {set:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        lines.retain(|line| {
            line.split_once('=')
                .map(|(k, _)| k.trim() != key)
                .unwrap_or(true)
        });
        lines.push(format!("{key} = {value}"));
    }
    parse_config(&(lines.join("\n") + "\n")).map_err(|e| Failure::Data(e.to_string()))
}

fn cmd_synth(
    config: Option<&Path>,
    sets: &[String],
    seed: Option<u64>,
    format: MatrixFormat,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let out_dir = resolve_out(out)?;
    let mut cfg = match config {
        Some(path) => matchtree::synth::load_config(path).map_err(|e| ctx(path, e))?,
        None => SynthConfig::default(),
    };
    if !sets.is_empty() {
        cfg = apply_overrides(&cfg, sets)?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let (scores, meta) = generate(&cfg).map_err(|e| Failure::Data(e.to_string()))?;

    let scores_path = out_dir.join(match format {
        MatrixFormat::Tsv => "scores.tsv",
        MatrixFormat::Binary => "scores.bin",
    });
    save_similarity(&scores, &scores_path, format).map_err(|e| ctx(&scores_path, e))?;
    let meta_path = out_dir.join("metadata.csv");
    save_metadata(&meta, &meta_path).map_err(|e| ctx(&meta_path, e))?;

    let mut manifest = RunManifest::new("synth", config.iter().map(|p| shown(p)).collect());
    manifest.seed = Some(cfg.seed);
    manifest.format = Some(
        match format {
            MatrixFormat::Tsv => "tsv",
            MatrixFormat::Binary => "binary",
        }
        .to_string(),
    );
    manifest.synth_config = Some(cfg.to_config_string());
    manifest.outputs = vec![shown(&scores_path), shown(&meta_path)];
    manifest.write(&out_dir)
}

fn cmd_render(
    input: &Path,
    metadata: Option<&Path>,
    by: Option<LabelField>,
    newick: bool,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    if metadata.is_some() != by.is_some() {
        return Err(usage("--metadata and --by go together"));
    }
    if newick && by.is_some() {
        return Err(usage("leaf coloring applies to DOT output only"));
    }
    let tree = Dendrogram::load(input).map_err(|e| ctx(input, e))?;
    let meta = match metadata {
        Some(path) => Some(load_metadata(path).map_err(|e| ctx(path, e))?),
        None => None,
    };

    let (name, payload) = if newick {
        ("tree.nwk", export_newick(&tree))
    } else {
        let color = meta
            .as_ref()
            .map(|m| (m, by.expect("paired with metadata")));
        let text = export_dot(&tree, color).map_err(|e| Failure::Data(e.to_string()))?;
        ("tree.dot", text)
    };

    match out {
        None => {
            // Pure filter: payload to stdout, no files written.
            emit(&payload)
        }
        Some(dir) => {
            let out_dir = resolve_out(Some(dir))?;
            let path = out_dir.join(name);
            write_text(&path, &payload)?;
            let mut manifest = RunManifest::new(
                "render",
                std::iter::once(shown(input))
                    .chain(metadata.map(shown))
                    .collect(),
            );
            manifest.by = by.map(|f| f.as_str().to_string());
            manifest.format = Some(if newick { "newick" } else { "dot" }.to_string());
            manifest.outputs = vec![shown(&path)];
            manifest.write(&out_dir)
        }
    }
}

fn cmd_check(input: &Path) -> Result<(), Failure> {
    let tree = Dendrogram::load(input).map_err(|e| ctx(input, e))?;
    // Load already enforces structure; repeat the height scan so the
    // diagnostic can point at the first offending step.
    let merges = tree.merges();
    for (t, pair) in merges.windows(2).enumerate() {
        if pair[1].height < pair[0].height {
            return Err(Failure::Data(format!(
                "{}: step {}: height {} decreases below {}",
                input.display(),
                t + 1,
                pair[1].height,
                pair[0].height
            )));
        }
    }
    emit(&format!(
        "ok: {} leaves, {} merges, heights nondecreasing\n",
        tree.n_leaves(),
        merges.len()
    ))
}
