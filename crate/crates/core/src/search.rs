//! Random search over scoring functions.
//!
//! Trial `i` samples its spec from stream `(seed, SEARCH_SAMPLE, i)` and
//! trains with seed `derive(seed, [SEARCH_TRIAL, i])`, so every trial can be
//! rerun on its own and a partially written ledger can be resumed.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::eval::{EvalProtocol, Evaluator};
use crate::graph::{KnowledgeGraph, Split};
use crate::model::{train, ModelView, TrainConfig};
use crate::seed::{self, stream};
use crate::sf::{enumerate_terms, Sign, SfSpec, Term, DISTINCT_TERM_COUNT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub budget: usize,
    pub num_terms: usize,
    pub train: TrainConfig,
    /// Protocol for the outer (selection) objective; also used for test MRR.
    pub protocol: EvalProtocol,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 10,
            num_terms: 4,
            train: TrainConfig::default(),
            protocol: EvalProtocol::default(),
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        check_num_terms(self.num_terms)?;
        self.train.validate()
    }

    pub fn trial_seed(&self, index: usize) -> u64 {
        seed::derive(self.seed, &[stream::SEARCH_TRIAL, index as u64])
    }

    pub fn trial_spec(&self, index: usize) -> Result<SfSpec> {
        let mut rng = seed::chacha(self.seed, &[stream::SEARCH_SAMPLE, index as u64]);
        sample_sf(self.num_terms, &mut rng)
    }
}

fn check_num_terms(n: usize) -> Result<()> {
    if n == 0 || n > DISTINCT_TERM_COUNT {
        return Err(Error::Config(format!(
            "num_terms must be in 1..={DISTINCT_TERM_COUNT} (distinct terms available)"
        )));
    }
    Ok(())
}

/// Draws `num_terms` distinct terms, each uniform over the 56 enumerated
/// (ordered) terms with redraws on collision, and a fair random sign each.
pub fn sample_sf<R: Rng + ?Sized>(num_terms: usize, rng: &mut R) -> Result<SfSpec> {
    check_num_terms(num_terms)?;
    let all = enumerate_terms();
    let mut chosen: Vec<(Sign, Term)> = Vec::with_capacity(num_terms);
    while chosen.len() < num_terms {
        let term = all[rng.random_range(0..all.len())];
        if chosen.iter().any(|(_, t)| *t == term) {
            continue;
        }
        let sign = if rng.random_bool(0.5) { Sign::Plus } else { Sign::Minus };
        chosen.push((sign, term));
    }
    SfSpec::new(chosen)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub spec: SfSpec,
    pub per_candidate_seed: u64,
    pub valid_mrr: f64,
    pub test_mrr: f64,
    pub uses_head: bool,
    /// Wall clock. Kept out of the record file (which must be reproducible);
    /// the ledger stores it beside the record in `trial_XXXX.timing.json`.
    #[serde(skip)]
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub trial_index: usize,
    pub spec: SfSpec,
    pub per_candidate_seed: u64,
    pub valid_mrr: f64,
    pub test_mrr: f64,
    pub uses_head: bool,
}

impl From<&TrialRecord> for LeaderboardEntry {
    fn from(t: &TrialRecord) -> Self {
        Self {
            trial_index: t.trial_index,
            spec: t.spec.clone(),
            per_candidate_seed: t.per_candidate_seed,
            valid_mrr: t.valid_mrr,
            test_mrr: t.test_mrr,
            uses_head: t.uses_head,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Sorted by validation MRR, descending; ties by trial index.
    pub leaderboard: Vec<LeaderboardEntry>,
    pub best: SfSpec,
}

/// Trains and scores trial `index` in isolation.
pub fn run_trial(g: &KnowledgeGraph, cfg: &SearchConfig, index: usize) -> Result<TrialRecord> {
    let spec = cfg.trial_spec(index)?;
    let per_candidate_seed = cfg.trial_seed(index);
    let train_cfg = TrainConfig {
        seed: per_candidate_seed,
        valid_protocol: cfg.protocol,
        ..cfg.train.clone()
    };
    let (store, report) = train(g, &spec, &train_cfg)?;
    let evaluator = Evaluator::new(g, cfg.protocol)?;
    let view = ModelView {
        store: &store,
        spec: &spec,
    };
    let valid_mrr = evaluator.evaluate(&view, Split::Valid).mrr;
    let test_mrr = evaluator.evaluate(&view, Split::Test).mrr;
    Ok(TrialRecord {
        trial_index: index,
        uses_head: spec.uses_head(),
        spec,
        per_candidate_seed,
        valid_mrr,
        test_mrr,
        train_seconds: report.seconds,
    })
}

pub fn run_search(g: &KnowledgeGraph, cfg: &SearchConfig) -> Result<SearchResult> {
    run_search_with_ledger(g, cfg, None, 1)
}

fn trial_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("trial_{index:04}.json"))
}

fn timing_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("trial_{index:04}.timing.json"))
}

/// Runs the search, persisting each trial to `ledger` as it completes and
/// skipping trials already recorded there. `jobs > 1` trains trials on
/// parallel threads; results do not depend on `jobs`.
pub fn run_search_with_ledger(
    g: &KnowledgeGraph,
    cfg: &SearchConfig,
    ledger: Option<&Path>,
    jobs: usize,
) -> Result<SearchResult> {
    cfg.validate()?;
    if let Some(dir) = ledger {
        fs::create_dir_all(dir).at(dir)?;
        let cfg_path = dir.join("search_config.json");
        let cfg_json = serde_json::to_string_pretty(cfg)? + "\n";
        if cfg_path.exists() {
            let existing = fs::read_to_string(&cfg_path).at(&cfg_path)?;
            if existing != cfg_json {
                return Err(Error::Config(format!(
                    "ledger {} belongs to a different search configuration",
                    dir.display()
                )));
            }
        } else {
            fs::write(&cfg_path, cfg_json).at(&cfg_path)?;
        }
    }

    let mut records: Vec<Option<TrialRecord>> = vec![None; cfg.budget];
    if let Some(dir) = ledger {
        for (i, slot) in records.iter_mut().enumerate() {
            let path = trial_path(dir, i);
            if path.exists() {
                let text = fs::read_to_string(&path).at(&path)?;
                let rec: TrialRecord = serde_json::from_str(&text)?;
                if rec.trial_index == i && rec.per_candidate_seed == cfg.trial_seed(i) {
                    *slot = Some(rec);
                }
            }
        }
    }

    let pending: Vec<usize> = (0..cfg.budget).filter(|&i| records[i].is_none()).collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::new());
    let worker = || -> Result<()> {
        loop {
            let k = next.fetch_add(1, Ordering::Relaxed);
            let Some(&index) = pending.get(k) else {
                return Ok(());
            };
            let rec = run_trial(g, cfg, index)?;
            if let Some(dir) = ledger {
                let path = trial_path(dir, index);
                fs::write(&path, serde_json::to_string_pretty(&rec)? + "\n").at(&path)?;
                let path = timing_path(dir, index);
                let timing = serde_json::json!({ "train_seconds": rec.train_seconds });
                fs::write(&path, serde_json::to_string_pretty(&timing)? + "\n").at(&path)?;
            }
            results.lock().expect("poisoned").push(rec);
        }
    };
    if jobs <= 1 {
        worker()?;
    } else {
        std::thread::scope(|s| -> Result<()> {
            let handles: Vec<_> = (0..jobs.min(pending.len().max(1))).map(|_| s.spawn(worker)).collect();
            for h in handles {
                h.join().expect("trial thread panicked")?;
            }
            Ok(())
        })?;
    }
    for rec in results.into_inner().expect("poisoned") {
        let i = rec.trial_index;
        records[i] = Some(rec);
    }

    let mut leaderboard: Vec<LeaderboardEntry> = records
        .iter()
        .map(|r| LeaderboardEntry::from(r.as_ref().expect("every trial ran")))
        .collect();
    leaderboard.sort_by(|a, b| {
        b.valid_mrr
            .total_cmp(&a.valid_mrr)
            .then(a.trial_index.cmp(&b.trial_index))
    });
    let result = SearchResult {
        best: leaderboard[0].spec.clone(),
        leaderboard,
    };
    if let Some(dir) = ledger {
        let path = dir.join("summary.json");
        fs::write(&path, serde_json::to_string_pretty(&result)? + "\n").at(&path)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn sample_sizes_and_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = sample_sf(1, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        let four = sample_sf(4, &mut rng).unwrap();
        assert_eq!(four.len(), 4);
        assert_eq!(sample_sf(35, &mut rng).unwrap().len(), 35);
        assert!(sample_sf(0, &mut rng).is_err());
        assert!(sample_sf(36, &mut rng).is_err());
    }

    #[test]
    fn single_term_frequencies_follow_ordered_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 10_000;
        let mut counts: HashMap<Term, usize> = HashMap::new();
        let mut plus = 0;
        for _ in 0..draws {
            let spec = sample_sf(1, &mut rng).unwrap();
            let st = spec.terms()[0];
            *counts.entry(st.term).or_default() += 1;
            plus += usize::from(st.sign == Sign::Plus);
        }
        assert_eq!(counts.len(), 35);
        for (term, &c) in &counts {
            let ordered_variants = match term {
                Term::Second(a, b) if a != b => 2.0,
                _ => 1.0,
            };
            let p = ordered_variants / 56.0;
            let mean = draws as f64 * p;
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((c as f64 - mean).abs() < 5.0 * sigma, "{term}: {c} vs {mean}");
        }
        let sigma = (draws as f64 * 0.25).sqrt();
        assert!((plus as f64 - draws as f64 / 2.0).abs() < 5.0 * sigma);
    }

    #[test]
    fn trial_specs_are_stable() {
        let cfg = SearchConfig::default();
        assert_eq!(cfg.trial_spec(3).unwrap(), cfg.trial_spec(3).unwrap());
        assert_ne!(cfg.trial_seed(0), cfg.trial_seed(1));
    }
}
