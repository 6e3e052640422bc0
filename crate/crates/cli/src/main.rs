mod commands;
mod config;

use std::collections::BTreeMap;
use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{CliConfig, UsageError};

#[derive(Parser)]
#[command(
    name = "ontogrow",
    version,
    about = "Extend a clinical terminology with model-extracted relations"
)]
struct Cli {
    /// Key-value config file; `ONTOGROW_*` env vars and flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the two-step extraction and write a consensus snapshot.
    Extract(ExtractArgs),
    /// Annotate triples with their difficulty level.
    Classify(ClassifyArgs),
    /// Score extracted triples against a gold standard.
    Evaluate(EvaluateArgs),
    /// Write triples as OWL (RDF/XML).
    Export(ExportArgs),
    /// Start the review service.
    Serve(ServeArgs),
    /// Run extraction twice against a transcript and check the outputs match.
    ReplayVerify(ReplayVerifyArgs),
}

#[derive(Args, Default)]
pub struct GatewayArgs {
    /// live, record or replay.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[arg(long)]
    pub endpoint_url: Option<String>,
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub n_runs: Option<usize>,
    #[arg(long)]
    pub vote_threshold: Option<usize>,
    #[arg(long)]
    pub source_section: Option<String>,
    /// Comma-separated relation vocabulary; defaults to all twelve.
    #[arg(long)]
    pub relations: Option<String>,
    /// Whether to list inverse relation names in the prompt (true/false).
    #[arg(long)]
    pub include_inverses: Option<bool>,
    #[arg(long)]
    pub concept_template: Option<PathBuf>,
    #[arg(long)]
    pub triple_template: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExtractArgs {
    /// Guideline passage to extract from.
    #[arg(long)]
    pub context: Option<PathBuf>,
    /// Output directory for snapshot.json and runs.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub gateway: GatewayArgs,
}

#[derive(Args)]
pub struct ClassifyArgs {
    /// Snapshot JSON or extracted-triples TSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Also check the stated levels of a gold TSV.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Output TSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Extracted-triples TSV (verdicts from its in_gold column) or snapshot JSON.
    #[arg(long, conflicts_with = "counts")]
    pub extracted: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    /// Per-stratum TP/FN/FP counts (`stratum tp fn fp` TSV) instead of triples.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// `key value` TSV of expected counts to check the report against.
    #[arg(long)]
    pub reconciliation: Option<PathBuf>,
    /// Report JSON output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report over resolved candidates even when some lack a verdict.
    #[arg(long)]
    pub partial: bool,
}

#[derive(Args)]
pub struct ExportArgs {
    /// Snapshot JSON or triples TSV.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Gold TSV whose triples are included as well.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub base_iri: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    /// Snapshot JSON or extracted-triples TSV.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    /// Guideline passage used for per-candidate snippets.
    #[arg(long)]
    pub context: Option<PathBuf>,
    #[arg(long)]
    pub verdict_log: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub required_verdicts: Option<usize>,
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    #[arg(long)]
    pub base_iri: Option<String>,
}

#[derive(Args)]
pub struct ReplayVerifyArgs {
    #[arg(long)]
    pub context: Option<PathBuf>,
    /// Snapshot the replayed output must also equal byte for byte.
    #[arg(long)]
    pub expected: Option<PathBuf>,
    #[command(flatten)]
    pub gateway: GatewayArgs,
}

fn put(map: &mut BTreeMap<&'static str, String>, key: &'static str, value: Option<impl ToString>) {
    if let Some(v) = value {
        map.insert(key, v.to_string());
    }
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

impl GatewayArgs {
    fn overrides(&self, map: &mut BTreeMap<&'static str, String>) {
        put(map, "mode", self.mode.clone());
        put(map, "transcript", path_str(&self.transcript));
        put(map, "endpoint_url", self.endpoint_url.clone());
        put(map, "model_id", self.model_id.clone());
        put(map, "temperature", self.temperature);
        put(map, "n_runs", self.n_runs);
        put(map, "vote_threshold", self.vote_threshold);
        put(map, "source_section", self.source_section.clone());
        put(map, "relations", self.relations.clone());
        put(map, "include_inverses", self.include_inverses);
        put(map, "concept_template", path_str(&self.concept_template));
        put(map, "triple_template", path_str(&self.triple_template));
    }
}

impl Command {
    fn overrides(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        match self {
            Command::Extract(a) => {
                put(&mut m, "context", path_str(&a.context));
                a.gateway.overrides(&mut m);
            }
            Command::ReplayVerify(a) => {
                put(&mut m, "context", path_str(&a.context));
                a.gateway.overrides(&mut m);
                m.insert("mode", "replay".into());
            }
            Command::Classify(a) => {
                put(&mut m, "lexicon", path_str(&a.lexicon));
                put(&mut m, "gold", path_str(&a.gold));
            }
            Command::Evaluate(a) => {
                put(&mut m, "gold", path_str(&a.gold));
                put(&mut m, "lexicon", path_str(&a.lexicon));
                put(&mut m, "synonyms", path_str(&a.synonyms));
            }
            Command::Export(a) => {
                put(&mut m, "gold", path_str(&a.gold));
                put(&mut m, "base_iri", a.base_iri.clone());
            }
            Command::Serve(a) => {
                put(&mut m, "snapshot", path_str(&a.snapshot));
                put(&mut m, "gold", path_str(&a.gold));
                put(&mut m, "lexicon", path_str(&a.lexicon));
                put(&mut m, "synonyms", path_str(&a.synonyms));
                put(&mut m, "context", path_str(&a.context));
                put(&mut m, "verdict_log", path_str(&a.verdict_log));
                put(&mut m, "listen", a.listen.clone());
                put(&mut m, "required_verdicts", a.required_verdicts);
                put(&mut m, "ui_dir", path_str(&a.ui_dir));
                put(&mut m, "base_iri", a.base_iri.clone());
            }
        }
        m
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = CliConfig::resolve(cli.config.as_deref(), std::env::vars(), cli.command.overrides())?;
    tracing::info!(config = %config.describe(), "resolved configuration");
    match &cli.command {
        Command::Extract(a) => commands::extract(a, &config),
        Command::Classify(a) => commands::classify(a, &config),
        Command::Evaluate(a) => commands::evaluate(a, &config),
        Command::Export(a) => commands::export(a, &config),
        Command::Serve(a) => commands::serve(a, &config),
        Command::ReplayVerify(a) => commands::replay_verify(a, &config),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
