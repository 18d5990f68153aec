//! `partopt`: prune, decompose, score and search parametric MDP models from
//! the command line.
//!
//! Exit codes: 0 success, 1 usage or I/O trouble, 2 unparseable or invalid
//! input, 3 a pipeline step rejected the combination (an eliminated initial
//! state, an unscorable candidate set, ...). Machine-readable output goes to
//! stdout, diagnostics to stderr.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use partopt::casegen::{category_mask, generate_model, manifest_json, CaseConfig, CaseError};
use partopt::format::{
    parse_mask, parse_model, parse_policies, parse_policy, parse_rational, parse_weights,
    serialize_mask, serialize_model,
};
use partopt::metrics::affected_components;
use partopt::prune::{prune_pipeline, PruneTrace};
use partopt::scc::{condensation_dot, decompose, size_histogram};
use partopt::search::{
    best_policy, render_json, render_tsv, CandidateSet, Category, GridSpec, SearchError,
    SearchRequest,
};
use partopt::{ParamId, Pmdp};

#[derive(Parser)]
#[command(
    name = "partopt",
    version,
    about = "Partition-aware policy tooling for parametric MDPs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a model file and report its dimensions.
    Validate { model: PathBuf },
    /// Apply an availability mask and/or a policy, print the pruned model.
    Prune {
        model: PathBuf,
        /// Availability mask file (`allow` lines).
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Policy file; its valuation (and embedded mask, if any) is applied.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Emit a JSON removal trace on stderr.
        #[arg(long)]
        trace: bool,
    },
    /// Decompose a model into strongly connected components.
    Scc {
        model: PathBuf,
        /// Write the component condensation as Graphviz DOT to this path.
        #[arg(long)]
        emit_dot: Option<PathBuf>,
    },
    /// Score a single policy against a model.
    Score {
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Parameter weight file for the variation metric.
        #[arg(long)]
        env: Option<PathBuf>,
        /// JSON report instead of the tab-separated default.
        #[arg(long, conflicts_with = "tsv")]
        json: bool,
        /// Tab-separated report (the default).
        #[arg(long)]
        tsv: bool,
    },
    /// Evaluate a candidate set and report the best policy.
    Search(SearchArgs),
    /// Generate a sensor-duty case study: model, category masks, manifest.
    GenCase {
        /// JSON configuration; defaults cover every field.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory receiving model.pmdp, the nine masks and manifest.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// List components whose parameters intersect a set of changed ones.
    Affected {
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Comma-separated parameter names.
        #[arg(long, value_delimiter = ',', required = true)]
        changed: Vec<String>,
    },
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("cands").required(true).args(["candidates", "grid"]))]
struct SearchArgs {
    model: PathBuf,
    /// Situation category id, e.g. `medium_regular`. Unless --mask is given,
    /// the mask is read from `<model dir>/<id>.mask`.
    #[arg(long)]
    category: Option<String>,
    /// Availability mask file; overrides the category-derived path.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// File of `policy` blocks to evaluate.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Grid step (e.g. `0.1` or `1/10`); enumerates every group assignment
    /// in multiples of the step.
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated group indices the grid ranges over (default: all).
    #[arg(long, value_delimiter = ',', requires = "grid")]
    grid_groups: Vec<usize>,
    /// Parameter weight file for the variation metric.
    #[arg(long)]
    env: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
}

enum CliError {
    Usage(String),
    Io(String),
    Parse(String),
    Pipeline(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Pipeline(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Parse(m) | CliError::Pipeline(m) => m,
        }
    }
}

/// Writes to stdout directly so a consumer that stops reading (`head`, a
/// closed pager) ends the run quietly instead of panicking mid-report.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let outcome = out.write_all(text.as_bytes()).and_then(|()| out.flush());
    if let Err(e) = outcome {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: stdout: {e}");
        std::process::exit(1);
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<(Pmdp, String), CliError> {
    let text = read_file(path)?;
    let model =
        parse_model(&text).map_err(|e| CliError::Parse(format!("{}:{e}", path.display())))?;
    Ok((model, text))
}

fn located(path: &Path) -> impl Fn(partopt::format::ParseError) -> CliError + '_ {
    move |e| CliError::Parse(format!("{}:{e}", path.display()))
}

fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var("PARTOPT_THREADS") {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::Usage(format!("PARTOPT_THREADS must be a thread count, got `{v}`"))
        }),
    }
}

fn trace_json(trace: &PruneTrace) -> String {
    let v = serde_json::json!({
        "removed_states_round1": trace.removed_states_round1,
        "removed_transitions_round1": trace.removed_transitions_round1,
        "removed_states_round2": trace.removed_states_round2,
        "removed_transitions_round2": trace.removed_transitions_round2,
    });
    serde_json::to_string(&v).expect("trace serializes")
}

fn search_error(e: SearchError) -> CliError {
    match e {
        SearchError::BadStep(_)
        | SearchError::UnknownGroup(_)
        | SearchError::NoGroups
        | SearchError::Threads(_) => CliError::Usage(e.to_string()),
        SearchError::NoCandidates | SearchError::NoViableCandidate(_) => {
            CliError::Pipeline(e.to_string())
        }
    }
}

fn case_error(e: CaseError) -> CliError {
    match e {
        CaseError::Invalid(_) => CliError::Pipeline(e.to_string()),
        _ => CliError::Parse(e.to_string()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Validate { model } => {
            let (m, _) = load_model(&model)?;
            emit(&format!(
                "ok: {} states, {} actions, {} entries, {} branches, {} params, {} groups\n",
                m.state_count(),
                m.actions().len(),
                m.entries().count(),
                m.total_branches(),
                m.params().len(),
                m.groups().len()
            ));
            Ok(())
        }
        Cmd::Prune {
            model,
            mask,
            policy,
            trace,
        } => {
            let (m, _) = load_model(&model)?;
            let mask = mask
                .map(|p| parse_mask(&read_file(&p)?, &m).map_err(located(&p)))
                .transpose()?;
            let policy = policy
                .map(|p| parse_policy(&read_file(&p)?, &m).map_err(located(&p)))
                .transpose()?;
            let (pruned, removals) = prune_pipeline(&m, mask.as_ref(), policy.as_ref())
                .map_err(|e| CliError::Pipeline(e.to_string()))?;
            if trace {
                eprintln!("{}", trace_json(&removals));
            }
            emit(&serialize_model(&pruned));
            Ok(())
        }
        Cmd::Scc { model, emit_dot } => {
            let (m, _) = load_model(&model)?;
            let cs = decompose(&m);
            if let Some(path) = &emit_dot {
                fs::write(path, condensation_dot(&m, &cs))
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            }
            let hist = size_histogram(&cs);
            let mut listing = format!("# components: {}\n", cs.len());
            let sizes: Vec<String> = hist
                .counts
                .iter()
                .map(|(size, count)| format!("{size}:{count}"))
                .collect();
            listing.push_str(&format!("# sizes: {}\n", sizes.join(" ")));
            for c in &cs.components {
                let params: Vec<&str> = c.params.iter().map(|p| p.as_str()).collect();
                listing.push_str(&format!(
                    "c{}\t{}\t{}\n",
                    c.id,
                    c.size(),
                    if params.is_empty() {
                        "-".to_string()
                    } else {
                        params.join(",")
                    }
                ));
            }
            emit(&listing);
            Ok(())
        }
        Cmd::Score {
            model,
            policy,
            env,
            json,
            tsv: _,
        } => {
            let (m, text) = load_model(&model)?;
            let pol = parse_policy(&read_file(&policy)?, &m).map_err(located(&policy))?;
            let env = env
                .map(|p| parse_weights(&read_file(&p)?, &m).map_err(located(&p)))
                .transpose()?;
            let req = SearchRequest {
                model: &m,
                model_text: &text,
                mask: None,
                env: env.as_ref(),
                category: None,
                threads: 1,
            };
            let report =
                best_policy(&req, &CandidateSet::explicit(vec![pol])).map_err(search_error)?;
            if json {
                emit(&render_json(&report));
            } else {
                emit(&render_tsv(&report, &m));
            }
            Ok(())
        }
        Cmd::Search(args) => {
            let (m, text) = load_model(&args.model)?;
            let category = args
                .category
                .as_deref()
                .map(|id| {
                    Category::parse(id)
                        .ok_or_else(|| CliError::Usage(format!("unknown category `{id}`")))
                })
                .transpose()?;
            let mask_path = match (&args.mask, category) {
                (Some(p), _) => Some(p.clone()),
                (None, Some(cat)) => {
                    let dir = args.model.parent().unwrap_or_else(|| Path::new("."));
                    Some(dir.join(format!("{}.mask", cat.id())))
                }
                (None, None) => None,
            };
            let mask = mask_path
                .map(|p| parse_mask(&read_file(&p)?, &m).map_err(located(&p)))
                .transpose()?;
            let candidates = match (&args.candidates, &args.grid) {
                (Some(p), None) => {
                    CandidateSet::explicit(parse_policies(&read_file(p)?, &m).map_err(located(p))?)
                }
                (None, Some(step)) => {
                    let step = parse_rational(step)
                        .map_err(|e| CliError::Usage(format!("--grid: {e}")))?;
                    let spec = GridSpec::over_groups(step, args.grid_groups.clone());
                    CandidateSet::grid(&m, &spec).map_err(search_error)?
                }
                _ => unreachable!("clap enforces exactly one candidate source"),
            };
            let env = args
                .env
                .map(|p| parse_weights(&read_file(&p)?, &m).map_err(located(&p)))
                .transpose()?;
            let req = SearchRequest {
                model: &m,
                model_text: &text,
                mask: mask.as_ref(),
                env: env.as_ref(),
                category: args.category.as_deref(),
                threads: threads_from_env()?,
            };
            let report = best_policy(&req, &candidates).map_err(search_error)?;
            let rendered = match args.format {
                Format::Tsv => render_tsv(&report, &m),
                Format::Json => render_json(&report),
            };
            match &args.out {
                Some(p) => write_file(p, &rendered)?,
                None => emit(&rendered),
            }
            eprintln!(
                "best: {} (score {}) out of {} candidates",
                report.best_row().policy,
                report.best_row().score,
                report.candidates
            );
            Ok(())
        }
        Cmd::GenCase { config, out_dir } => {
            let cfg: CaseConfig = match config {
                Some(p) => serde_json::from_str(&read_file(&p)?)
                    .map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?,
                None => CaseConfig::default(),
            };
            let gm = generate_model(&cfg).map_err(case_error)?;
            fs::create_dir_all(&out_dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
            let text = serialize_model(&gm.model);
            write_file(&out_dir.join("model.pmdp"), &text)?;
            for cat in &gm.categories {
                write_file(
                    &out_dir.join(format!("{}.mask", cat.id())),
                    &serialize_mask(&category_mask(*cat)),
                )?;
            }
            let fingerprint = partopt::search::model_fingerprint(&text);
            let manifest = manifest_json(&cfg, &gm, &fingerprint);
            write_file(&out_dir.join("manifest.json"), &manifest)?;
            emit(&manifest);
            eprintln!(
                "wrote {} states and {} masks to {}",
                gm.model.state_count(),
                gm.categories.len(),
                out_dir.display()
            );
            Ok(())
        }
        Cmd::Affected {
            model,
            policy,
            changed,
        } => {
            let (m, _) = load_model(&model)?;
            let pol = parse_policy(&read_file(&policy)?, &m).map_err(located(&policy))?;
            let mut set = BTreeSet::new();
            for name in &changed {
                let p = ParamId::new(name.trim()).map_err(|e| CliError::Parse(e.to_string()))?;
                if !m.param_set().contains(&p) {
                    return Err(CliError::Parse(format!("unknown parameter `{name}`")));
                }
                set.insert(p);
            }
            let (pruned, _) = prune_pipeline(&m, None, Some(&pol))
                .map_err(|e| CliError::Pipeline(e.to_string()))?;
            let cs = decompose(&pruned);
            let hit = affected_components(&cs, &set);
            let mut listing = format!("# affected: {} / {}\n", hit.len(), cs.len());
            for id in hit {
                listing.push_str(&format!("c{id}\t{}\n", cs.components[id].size()));
            }
            emit(&listing);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let kind = e.kind();
            if kind == ErrorKind::DisplayHelp || kind == ErrorKind::DisplayVersion {
                emit(&e.to_string());
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
