use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use anyhow::{anyhow, bail, Context};
use ontogrow_core::evaluation::{
    evaluate_tables, load_extracted, load_gold, match_triples, reconcile, render_table, stratified_report_partial,
    stratum_of, validate_gold_levels, write_extracted, Counts, DiscrepancyKind, ExtractedRow, GoldEntry,
    StratifiedReport, Stratum, SynonymMap,
};
use ontogrow_core::export::{to_owl_xml, OntologyFragment, DEFAULT_BASE_IRI};
use ontogrow_core::llm::{build_backend, GatewayConfig, Mode};
use ontogrow_core::model::{Concept, ExtractionRun, RelationType, Triple};
use ontogrow_core::pipeline::{
    run_pipeline, InverseMap, ModelSettings, PipelineConfig, PromptTemplates, Snapshot, DEFAULT_RUNS, DEFAULT_THRESHOLD,
};
use ontogrow_core::terminology::{load_lexicon, MembershipOracle, RemoteConfig, RemoteTerminology};
use ontogrow_curation::{Policy, SessionInputs, Store};

use crate::config::{CliConfig, UsageError};
use crate::{ClassifyArgs, EvaluateArgs, ExportArgs, ExtractArgs, ReplayVerifyArgs, ServeArgs};

const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
const TERMINOLOGY_KEY_ENV: &str = "ONTOGROW_TERMINOLOGY_API_KEY";

fn read_input(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read input {}: {e}", path.display())).into())
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(UsageError(format!("input file {} does not exist", path.display())).into())
    }
}

fn write_output(path: Option<&Path>, content: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, content).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Triples from a snapshot (with its concept set) or an extracted TSV (with
/// its rows).
enum TripleSource {
    Snapshot(Snapshot),
    Table(Vec<ExtractedRow>),
}

impl TripleSource {
    fn load(path: &Path) -> anyhow::Result<Self> {
        require_file(path)?;
        if is_json(path) {
            Ok(Self::Snapshot(Snapshot::load(path)?))
        } else {
            Ok(Self::Table(load_extracted(path)?))
        }
    }

    fn triples(&self) -> anyhow::Result<Vec<Triple>> {
        Ok(match self {
            Self::Snapshot(s) => s.triples()?,
            Self::Table(rows) => rows.iter().map(|r| r.triple.clone()).collect(),
        })
    }

    fn concepts(&self) -> anyhow::Result<Option<BTreeSet<Concept>>> {
        Ok(match self {
            Self::Snapshot(s) => Some(s.concepts()?.into_iter().collect()),
            Self::Table(_) => None,
        })
    }
}

fn oracle(config: &CliConfig) -> anyhow::Result<Arc<dyn MembershipOracle>> {
    if let Some(path) = config.path("lexicon") {
        require_file(&path)?;
        return Ok(Arc::new(load_lexicon(&path)?));
    }
    if let Some(url) = config.get("terminology_url") {
        let remote = RemoteTerminology::new(RemoteConfig {
            base_url: url.to_string(),
            search_path: config
                .get("terminology_search_path")
                .unwrap_or("/descriptions")
                .to_string(),
            api_key: std::env::var(TERMINOLOGY_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })?;
        return Ok(Arc::new(remote));
    }
    Err(UsageError("missing `lexicon`: pass --lexicon or set terminology_url".into()).into())
}

fn synonyms(config: &CliConfig) -> anyhow::Result<SynonymMap> {
    match config.path("synonyms") {
        Some(p) => {
            require_file(&p)?;
            Ok(SynonymMap::load(&p)?)
        }
        None => Ok(SynonymMap::default()),
    }
}

fn gold(config: &CliConfig, required: bool) -> anyhow::Result<Vec<GoldEntry>> {
    match (config.path("gold"), required) {
        (Some(p), _) => {
            require_file(&p)?;
            Ok(load_gold(&p)?)
        }
        (None, true) => Err(config.require_path("gold").unwrap_err()),
        (None, false) => Ok(Vec::new()),
    }
}

fn pipeline_config(config: &CliConfig) -> anyhow::Result<PipelineConfig> {
    let defaults = PipelineConfig::default();
    let relation_vocabulary = match config.get("relations") {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|r| !r.is_empty())
            .map(|r| {
                r.parse::<RelationType>()
                    .map_err(|e| anyhow!(UsageError(e.to_string())))
            })
            .collect::<anyhow::Result<Vec<_>>>()?,
        None => defaults.relation_vocabulary,
    };
    let model = ModelSettings {
        model_id: config.get("model_id").map_or(defaults.model.model_id, str::to_string),
        temperature: config.parsed("temperature")?.unwrap_or(defaults.model.temperature),
    };
    Ok(PipelineConfig {
        n_runs: config.parsed("n_runs")?.unwrap_or(DEFAULT_RUNS),
        vote_threshold: config.parsed("vote_threshold")?.unwrap_or(DEFAULT_THRESHOLD),
        relation_vocabulary,
        include_inverses: config.parsed("include_inverses")?.unwrap_or(defaults.include_inverses),
        model,
        source_section: config
            .get("source_section")
            .map_or(defaults.source_section, str::to_string),
    })
}

/// Runs the pipeline once with a freshly built backend.
fn run_extraction(context: &str, config: &CliConfig) -> anyhow::Result<(Snapshot, Vec<ExtractionRun>)> {
    let pipeline = pipeline_config(config)?;
    let templates = PromptTemplates::load(
        config.path("concept_template").as_deref(),
        config.path("triple_template").as_deref(),
    )
    .map_err(|e| anyhow!("stage `prompts` failed: {e}"))?;
    let mode: Mode = config.parsed("mode")?.unwrap_or(Mode::Live);
    let gateway = GatewayConfig {
        mode,
        endpoint_url: config.get("endpoint_url").map(str::to_string),
        api_key: config.api_key(),
        transcript_path: config.path("transcript"),
    };
    if mode != Mode::Live {
        let transcript = config.require_path("transcript")?;
        if mode == Mode::Replay {
            require_file(&transcript)?;
        }
    }
    let backend = build_backend(&gateway).map_err(|e| anyhow!("stage `gateway` failed: {e}"))?;
    let output = run_pipeline(context, &pipeline, &templates, &InverseMap::default(), backend.as_ref())
        .map_err(|e| anyhow!("stage `{}` failed: {e}", e.stage()))?;
    Ok((Snapshot::from_output(&output, &pipeline), output.runs))
}

fn runs_json(runs: &[ExtractionRun]) -> String {
    let mut s = serde_json::to_string_pretty(runs).expect("runs serialize");
    s.push('\n');
    s
}

fn snapshot_owl(snapshot: &Snapshot, base_iri: &str) -> anyhow::Result<String> {
    let mut fragment = OntologyFragment::from_triples(snapshot.triples()?, base_iri);
    fragment.concepts.extend(snapshot.concepts()?);
    Ok(to_owl_xml(&fragment)?)
}

pub fn extract(args: &ExtractArgs, config: &CliConfig) -> anyhow::Result<()> {
    let context = read_input(&config.require_path("context")?)?;
    let (snapshot, runs) = run_extraction(&context, config)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let snapshot_path = args.out.join("snapshot.json");
    std::fs::write(&snapshot_path, snapshot.to_json())?;
    std::fs::write(args.out.join("runs.json"), runs_json(&runs))?;
    println!(
        "{} concepts, {} triples -> {}",
        snapshot.concepts.len(),
        snapshot.triples.len(),
        snapshot_path.display()
    );
    Ok(())
}

pub fn classify(args: &ClassifyArgs, config: &CliConfig) -> anyhow::Result<()> {
    let oracle = oracle(config)?;
    let source = TripleSource::load(&args.input)?;
    let rows: Vec<ExtractedRow> = match &source {
        TripleSource::Table(rows) => rows.clone(),
        TripleSource::Snapshot(_) => source
            .triples()?
            .into_iter()
            .map(|triple| ExtractedRow {
                triple,
                in_gold: None,
                level: None,
            })
            .collect(),
    };
    let mut tally: BTreeMap<Stratum, usize> = BTreeMap::new();
    let annotated: Vec<ExtractedRow> = rows
        .into_iter()
        .map(|mut row| {
            let stratum = stratum_of(&row.triple, oracle.as_ref());
            *tally.entry(stratum).or_default() += 1;
            row.level = Some(stratum);
            row
        })
        .collect();
    for (stratum, n) in &tally {
        eprintln!("level {stratum}: {n}");
    }
    if config.path("gold").is_some() {
        for v in validate_gold_levels(&gold(config, true)?, oracle.as_ref()) {
            eprintln!(
                "warning: gold row `{}` is labelled level {} but the rule gives {}",
                v.triple, v.stated, v.computed
            );
        }
    }
    write_output(args.out.as_deref(), &write_extracted(&annotated))
}

fn load_counts(path: &Path) -> anyhow::Result<StratifiedReport> {
    let text = read_input(path)?;
    let mut per_level = BTreeMap::new();
    let mut concepts = Counts::zero();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if line.trim().is_empty() || line.starts_with('#') || (i == 0 && fields[0] == "stratum") {
            continue;
        }
        let [name, tp, fn_, fp] = fields.as_slice() else {
            bail!("{}:{}: expected `stratum tp fn fp`", path.display(), i + 1);
        };
        let n = |s: &str| {
            s.parse::<usize>()
                .with_context(|| format!("{}:{}: bad count `{s}`", path.display(), i + 1))
        };
        let (tp, fn_, fp) = (n(tp)?, n(fn_)?, n(fp)?);
        if name.eq_ignore_ascii_case("concepts") {
            concepts = Counts::new(tp, fn_, fp);
        } else {
            let stratum: Stratum = name.parse().map_err(|e| anyhow!("{}:{}: {e}", path.display(), i + 1))?;
            per_level.insert(stratum, (tp, fn_, fp));
        }
    }
    Ok(StratifiedReport::from_counts(per_level, concepts))
}

pub fn evaluate(args: &EvaluateArgs, config: &CliConfig) -> anyhow::Result<()> {
    let report = if let Some(counts) = &args.counts {
        load_counts(counts)?
    } else {
        let extracted = args
            .extracted
            .as_ref()
            .ok_or_else(|| UsageError("evaluate needs --extracted or --counts".into()))?;
        let gold = gold(config, true)?;
        let oracle = oracle(config)?;
        let synonyms = synonyms(config)?;
        let (report, pending, violations) = match TripleSource::load(extracted)? {
            TripleSource::Table(rows) => {
                let e = evaluate_tables(&gold, &rows, oracle.as_ref(), &synonyms);
                (e.report, e.pending, e.violations)
            }
            source @ TripleSource::Snapshot(_) => {
                let matched = match_triples(&source.triples()?, &gold, &synonyms);
                let concepts = source.concepts()?;
                let (report, pending) = stratified_report_partial(
                    &matched,
                    &Default::default(),
                    oracle.as_ref(),
                    &synonyms,
                    concepts.as_ref(),
                );
                (report, pending, validate_gold_levels(&gold, oracle.as_ref()))
            }
        };
        for v in &violations {
            eprintln!(
                "warning: gold row `{}` is labelled level {} but the rule gives {}",
                v.triple, v.stated, v.computed
            );
        }
        if !pending.is_empty() {
            eprintln!("warning: {} candidate triple(s) have no verdict", pending.len());
            if !args.partial {
                bail!(
                    "stage `evaluate` failed: {} candidate(s) await a verdict (use --partial for a partial report)",
                    pending.len()
                );
            }
        }
        report
    };

    print!("{}", render_table(&report));
    if let Some(out) = &args.out {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        std::fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;
    }
    if let Some(path) = &args.reconciliation {
        let (checked, discrepancies) = reconcile(&report, &read_input(path)?)?;
        let mut mismatches = 0;
        for d in &discrepancies {
            match d.kind {
                DiscrepancyKind::Mismatch => {
                    mismatches += 1;
                    eprintln!("mismatch: {} expected {} got {}", d.key, d.expected, d.actual);
                }
                DiscrepancyKind::StatedVsPrinted => {
                    eprintln!("note: {} stated total {} but {} printed", d.key, d.expected, d.actual)
                }
            }
        }
        if mismatches > 0 {
            bail!("reconciliation failed: {mismatches} of {checked} checked value(s) differ");
        }
        eprintln!("reconciliation: {checked} value(s) agree");
    }
    Ok(())
}

pub fn export(args: &ExportArgs, config: &CliConfig) -> anyhow::Result<()> {
    let base_iri = config.get("base_iri").unwrap_or(DEFAULT_BASE_IRI);
    if args.input.is_none() && config.path("gold").is_none() {
        bail!(UsageError("export needs --in and/or --gold".into()));
    }
    let gold = gold(config, false)?;
    let mut fragment = OntologyFragment::from_triples(gold.into_iter().map(|g| g.triple), base_iri);
    if let Some(input) = &args.input {
        let source = TripleSource::load(input)?;
        for t in source.triples()? {
            fragment.concepts.insert(t.subject().clone());
            fragment.concepts.insert(t.object().clone());
            fragment.triples.insert(t);
        }
        if let Some(concepts) = source.concepts()? {
            fragment.concepts.extend(concepts);
        }
    }
    let xml = to_owl_xml(&fragment).map_err(|e| anyhow!("stage `export` failed: {e}"))?;
    write_output(args.out.as_deref(), &xml)
}

pub fn serve(_args: &ServeArgs, config: &CliConfig) -> anyhow::Result<()> {
    let source = match config.path("snapshot") {
        Some(p) => TripleSource::load(&p)?,
        None => bail!(UsageError("serve needs --snapshot".into())),
    };
    let context = config.path("context").map(|p| read_input(&p)).transpose()?;
    let inputs = SessionInputs {
        gold: gold(config, false)?,
        extracted: source.triples()?,
        extracted_concepts: source.concepts()?,
        oracle: oracle(config)?,
        synonyms: synonyms(config)?,
        context,
        base_iri: config.get("base_iri").unwrap_or(DEFAULT_BASE_IRI).to_string(),
    };
    let policy = Policy {
        required_verdicts: config.parsed("required_verdicts")?.unwrap_or(1),
    };
    let store = Store::open(inputs, policy, config.path("verdict_log").as_deref())?;
    let addr: SocketAddr = config
        .parsed("listen")?
        .unwrap_or_else(|| DEFAULT_LISTEN.parse().expect("valid"));
    let ui_dir: Option<PathBuf> = config.path("ui_dir");
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(ontogrow_curation::serve(
        Arc::new(RwLock::new(store)),
        addr,
        ui_dir,
        |bound| println!("listening on http://{bound}"),
    ))?;
    Ok(())
}

pub fn replay_verify(args: &ReplayVerifyArgs, config: &CliConfig) -> anyhow::Result<()> {
    let context = read_input(&config.require_path("context")?)?;
    config.require_path("transcript")?;
    let base_iri = config.get("base_iri").unwrap_or(DEFAULT_BASE_IRI);
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let (snapshot, runs) = run_extraction(&context, config)?;
        outputs.push((snapshot.to_json(), runs_json(&runs), snapshot_owl(&snapshot, base_iri)?));
    }
    let mut failures = Vec::new();
    let (a, b) = (&outputs[0], &outputs[1]);
    for (name, x, y) in [("snapshot", &a.0, &b.0), ("runs", &a.1, &b.1), ("owl", &a.2, &b.2)] {
        if x != y {
            failures.push(format!("{name} differs between replays"));
        }
    }
    if let Some(expected) = &args.expected {
        if read_input(expected)? != a.0 {
            failures.push(format!("snapshot differs from {}", expected.display()));
        }
    }
    if failures.is_empty() {
        println!("replay-verify: outputs identical across 2 replays");
        Ok(())
    } else {
        bail!("replay-verify failed: {}", failures.join("; "))
    }
}
