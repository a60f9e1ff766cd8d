use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use kgsf::graph::{generate_synthetic, load_graph, occurrence_histogram, tail_occurrences, top_share, write_graph};
use kgsf::model::{read_checkpoint, write_checkpoint, TrainReport, ValidationPoint};
use kgsf::search::run_search_with_ledger;
use kgsf::sf::{distinct_search_space_size, enumerate_terms, resolve_sf, search_space_size, DISTINCT_TERM_COUNT};
use kgsf::{
    fit_entoccur, train, EmbeddingModel, EvalProtocol, Evaluator, KnowledgeGraph, ProtocolMode, RankingMetrics,
    Scorer, SfSpec, Split,
};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::config::RunConfig;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load(cfg: &RunConfig) -> Result<KnowledgeGraph> {
    let dir = cfg.graph_dir()?;
    load_graph(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn load_augmented(cfg: &RunConfig) -> Result<KnowledgeGraph> {
    Ok(load(cfg)?.into_augmented())
}

pub fn generate(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let g = generate_synthetic(&cfg.synthetic())?;
    write_graph(&g, out)?;
    cfg.write_resolved(out)?;
    let train = tail_occurrences(&g, Split::Train);
    println!(
        "wrote {} ({} entities, {} relations, {}/{}/{} triples, top-1% tail share {:.4})",
        out.display(),
        g.entity_count(),
        g.relation_count(),
        g.train().len(),
        g.valid().len(),
        g.test().len(),
        top_share(&train, 0.01)
    );
    Ok(())
}

/// Emitted training summary; wall-clock time goes to `timings.json`.
#[derive(Serialize)]
struct TrainSummary<'a> {
    spec: &'a SfSpec,
    seed: u64,
    best_step: Option<usize>,
    best_valid_mrr: Option<f64>,
    points: &'a [ValidationPoint],
}

#[derive(Serialize)]
struct Timings {
    seconds: f64,
}

fn spec_from(cfg: &RunConfig) -> Result<SfSpec> {
    let text = cfg.sf.as_deref().context("no scoring function given (--sf NAME|EXPR)")?;
    Ok(resolve_sf(text)?)
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let g = load_augmented(cfg)?;
    let spec = spec_from(cfg)?;
    let (store, report) = train(&g, &spec, &cfg.train_config()?)?;
    cfg.write_resolved(out)?;
    write_checkpoint(out.join("model.ckpt"), &store, &spec, cfg.seed)?;
    write_train_outputs(out, &spec, cfg.seed, &report)?;
    println!(
        "trained {spec}: best valid MRR {} at step {}",
        report.best_valid_mrr.map_or("n/a".into(), |m| format!("{m:.4}")),
        report.best_step.map_or("n/a".into(), |s| s.to_string())
    );
    Ok(())
}

fn write_train_outputs(out: &Path, spec: &SfSpec, seed: u64, report: &TrainReport) -> Result<()> {
    write_text(&out.join("report.csv"), &report.to_csv())?;
    write_json(
        &out.join("train.json"),
        &TrainSummary {
            spec,
            seed,
            best_step: report.best_step,
            best_valid_mrr: report.best_valid_mrr,
            points: &report.points,
        },
    )?;
    write_json(
        &out.join("timings.json"),
        &Timings {
            seconds: report.seconds,
        },
    )
}

/// A scorer named on the command line.
pub enum NamedScorer {
    EntOccur(kgsf::EntOccurModel),
    Model(EmbeddingModel),
}

impl NamedScorer {
    pub fn as_scorer(&self) -> &dyn Scorer {
        match self {
            NamedScorer::EntOccur(m) => m,
            NamedScorer::Model(m) => m,
        }
    }
}

/// `entoccur`, an existing checkpoint file, or a scoring function trained
/// on the spot with the configured training settings.
pub fn build_scorer(name: &str, g: &KnowledgeGraph, cfg: &RunConfig) -> Result<NamedScorer> {
    if name.eq_ignore_ascii_case("entoccur") {
        return Ok(NamedScorer::EntOccur(fit_entoccur(g)));
    }
    let path = Path::new(name);
    if path.is_file() {
        let ck = read_checkpoint(path)?;
        if ck.store.entity_count() != g.entity_count() || ck.store.relation_count() != g.relation_count() {
            bail!(
                "checkpoint {} has {} entities / {} relations, the dataset has {} / {}",
                path.display(),
                ck.store.entity_count(),
                ck.store.relation_count(),
                g.entity_count(),
                g.relation_count()
            );
        }
        return Ok(NamedScorer::Model(EmbeddingModel::new(ck.store, ck.spec)));
    }
    let spec = resolve_sf(name).with_context(|| {
        format!("scorer `{name}` is neither `entoccur`, a checkpoint file nor a scoring function")
    })?;
    let (store, _) = train(g, &spec, &cfg.train_config()?)?;
    Ok(NamedScorer::Model(EmbeddingModel::new(store, spec)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub scorer: String,
    pub protocol: String,
    pub split: Split,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub num_queries: usize,
    pub shortfall_queries: usize,
    pub seed: u64,
}

impl MetricsRow {
    fn new(scorer: &str, protocol: &EvalProtocol, split: Split, m: &RankingMetrics) -> Self {
        let record = kgsf::eval::EvalRecord::new(protocol, split, m);
        Self {
            scorer: scorer.to_owned(),
            protocol: record.protocol,
            split,
            mrr: m.mrr,
            hits1: m.hits1,
            hits3: m.hits3,
            hits10: m.hits10,
            num_queries: m.num_queries,
            shortfall_queries: m.shortfall_queries,
            seed: protocol.seed,
        }
    }
}

fn evaluate_row(name: &str, scorer: &dyn Scorer, g: &KnowledgeGraph, p: &EvalProtocol, split: Split) -> Result<MetricsRow> {
    let m = Evaluator::new(g, *p)?.evaluate(scorer, split);
    Ok(MetricsRow::new(name, p, split, &m))
}

pub fn eval_cmd(cfg: &RunConfig) -> Result<()> {
    let g = load_augmented(cfg)?;
    let name = cfg.scorer.as_deref().unwrap_or("entoccur");
    let scorer = build_scorer(name, &g, cfg)?;
    let row = evaluate_row(name, scorer.as_scorer(), &g, &cfg.eval_protocol(), cfg.split)?;
    let text = serde_json::to_string_pretty(&row)? + "\n";
    if let Some(out) = &cfg.out {
        cfg.write_resolved(out)?;
        write_text(&out.join("metrics.json"), &text)?;
    }
    print!("{text}");
    Ok(())
}

pub fn search_cmd(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let g = load_augmented(cfg)?;
    cfg.write_resolved(out)?;
    let result = run_search_with_ledger(&g, &cfg.search_config()?, Some(out), cfg.jobs.max(1))?;
    println!("{:>4}  {:>5}  {:>9}  {:>9}  {:>4}  spec", "rank", "trial", "valid_mrr", "test_mrr", "head");
    for (rank, e) in result.leaderboard.iter().enumerate() {
        println!(
            "{:>4}  {:>5}  {:>9.4}  {:>9.4}  {:>4}  {}",
            rank + 1,
            e.trial_index,
            e.valid_mrr,
            e.test_mrr,
            if e.uses_head { "yes" } else { "no" },
            e.spec
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct Shares {
    top_1pct: f64,
    top_5pct: f64,
    top_10pct: f64,
}

impl Shares {
    fn of(table: &kgsf::graph::OccurrenceTable) -> Self {
        Self {
            top_1pct: top_share(table, 0.01),
            top_5pct: top_share(table, 0.05),
            top_10pct: top_share(table, 0.10),
        }
    }
}

#[derive(Serialize)]
struct AnalyzeSummary {
    entity_count: usize,
    relation_count: usize,
    augmented: bool,
    train_triples: usize,
    test_triples: usize,
    train_tail_shares: Shares,
    test_tail_shares: Shares,
    term_count: usize,
    distinct_term_count: usize,
    /// Exact integers, emitted as JSON numbers.
    search_space_size: Box<RawValue>,
    distinct_search_space_size: Box<RawValue>,
}

fn histogram_csv(table: &kgsf::graph::OccurrenceTable) -> String {
    let mut out = String::from("occurrence,num_entities\n");
    for (occ, n) in occurrence_histogram(table) {
        let _ = writeln!(out, "{occ},{n}");
    }
    out
}

pub fn analyze(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    let mut g = load(cfg)?;
    if cfg.augment {
        g = g.into_augmented();
    }
    cfg.write_resolved(out)?;
    let train = tail_occurrences(&g, Split::Train);
    let test = tail_occurrences(&g, Split::Test);
    write_text(&out.join("train_histogram.csv"), &histogram_csv(&train))?;
    write_text(&out.join("test_histogram.csv"), &histogram_csv(&test))?;
    let summary = AnalyzeSummary {
        entity_count: g.entity_count(),
        relation_count: g.relation_count(),
        augmented: g.is_augmented(),
        train_triples: g.train().len(),
        test_triples: g.test().len(),
        train_tail_shares: Shares::of(&train),
        test_tail_shares: Shares::of(&test),
        term_count: enumerate_terms().len(),
        distinct_term_count: DISTINCT_TERM_COUNT,
        search_space_size: RawValue::from_string(search_space_size().to_string())?,
        distinct_search_space_size: RawValue::from_string(distinct_search_space_size().to_string())?,
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "train top-1% tail share {:.4}, test {:.4}; search space 3^56 = {}",
        summary.train_tail_shares.top_1pct,
        summary.test_tail_shares.top_1pct,
        summary.search_space_size
    );
    Ok(())
}

/// Protocols compared: sampled, typed when the graph has types, and full.
pub fn comparison_protocols(cfg: &RunConfig, g: &KnowledgeGraph) -> Vec<EvalProtocol> {
    let n = cfg.eval_negatives;
    let mut modes = vec![ProtocolMode::SampledUniform { num_negatives: n }];
    if g.is_typed() {
        modes.push(ProtocolMode::TypedSampled { num_negatives: n });
    }
    modes.push(ProtocolMode::FullRanking);
    modes.into_iter().map(|m| cfg.protocol_for(m)).collect()
}

pub fn compare_rows(cfg: &RunConfig, g: &KnowledgeGraph) -> Result<Vec<MetricsRow>> {
    if cfg.scorers.is_empty() {
        bail!("no scorers given (--scorers entoccur,transe,...)");
    }
    let protocols = comparison_protocols(cfg, g);
    let mut rows = Vec::new();
    for name in &cfg.scorers {
        let scorer = build_scorer(name, g, cfg)?;
        for p in &protocols {
            rows.push(evaluate_row(name, scorer.as_scorer(), g, p, cfg.split)?);
        }
    }
    Ok(rows)
}

pub fn format_table(rows: &[MetricsRow]) -> String {
    let header = ["scorer", "protocol", "split", "MRR", "Hits@1", "Hits@3", "Hits@10", "queries"];
    let cells: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.scorer.clone(),
                r.protocol.clone(),
                r.split.to_string(),
                format!("{:.4}", r.mrr),
                format!("{:.4}", r.hits1),
                format!("{:.4}", r.hits3),
                format!("{:.4}", r.hits10),
                r.num_queries.to_string(),
            ]
        })
        .collect();
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cols: Vec<&str>| {
        let parts: Vec<String> = cols
            .iter()
            .enumerate()
            .map(|(i, c)| if i < 3 { format!("{c:<w$}", w = width[i]) } else { format!("{c:>w$}", w = width[i]) })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for row in &cells {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn compare_protocols(cfg: &RunConfig) -> Result<()> {
    let g = load_augmented(cfg)?;
    let rows = compare_rows(cfg, &g)?;
    let table = format_table(&rows);
    if let Some(out) = &cfg.out {
        cfg.write_resolved(out)?;
        write_json(&out.join("compare.json"), &rows)?;
        write_text(&out.join("compare.txt"), &table)?;
    }
    print!("{table}");
    Ok(())
}
