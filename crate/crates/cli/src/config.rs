//! Flat run configuration, merged from layers: built-in defaults, then the
//! dataset preset, then `paper_scale`, then the config file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kgsf::eval::FilterScope;
use kgsf::model::NegativeWeighting;
use kgsf::{EvalProtocol, ProtocolMode, SearchConfig, Split, SyntheticConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

pub const RESOLVED_FILE: &str = "config.resolved.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory read by every command except `generate`.
    pub graph: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
    pub paper_scale: bool,
    pub seed: u64,

    pub entity_count: usize,
    pub relation_count: usize,
    pub triple_count: usize,
    pub zipf_exponent: f64,
    pub typed: bool,
    pub type_count: usize,
    pub split_fractions: [f64; 3],

    /// Scoring function: catalog name or expression.
    pub sf: Option<String>,
    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives: usize,
    pub margin: f64,
    pub dropout: f64,
    pub steps: usize,
    pub valid_interval: usize,
    /// `uniform` or `self_adversarial`.
    pub negative_weighting: String,
    pub adversarial_temperature: f64,
    pub valid_protocol: ProtocolMode,

    pub protocol: ProtocolMode,
    pub filtered: bool,
    pub filter_scope: FilterScope,
    pub split: Split,
    /// `entoccur`, a checkpoint path, or a scoring function to train.
    pub scorer: Option<String>,
    pub scorers: Vec<String>,
    /// Negatives per query in `compare-protocols`.
    pub eval_negatives: usize,

    pub budget: usize,
    pub num_terms: usize,
    pub jobs: usize,

    /// `analyze` on the inverse-augmented graph instead of the raw one.
    pub augment: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = SyntheticConfig::wikikg2_like();
        let t = TrainConfig::default();
        let s = SearchConfig::default();
        let p = EvalProtocol::default();
        Self {
            graph: None,
            out: None,
            preset: None,
            paper_scale: false,
            seed: 0,
            entity_count: g.entity_count,
            relation_count: g.relation_count,
            triple_count: g.triple_count,
            zipf_exponent: g.zipf_exponent,
            typed: g.typed,
            type_count: g.type_count,
            split_fractions: g.split_fractions,
            sf: None,
            dim: t.dim,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            negatives: t.negatives,
            margin: t.margin,
            dropout: t.dropout,
            steps: t.max_steps,
            valid_interval: t.valid_interval,
            negative_weighting: "uniform".into(),
            adversarial_temperature: 1.0,
            valid_protocol: t.valid_protocol.mode,
            protocol: p.mode,
            filtered: p.filtered,
            filter_scope: p.filter_scope,
            split: Split::Test,
            scorer: None,
            scorers: Vec::new(),
            eval_negatives: 500,
            budget: s.budget,
            num_terms: s.num_terms,
            jobs: 1,
            augment: false,
        }
    }
}

fn table_of<T: Serialize>(value: &T) -> Table {
    match Value::try_from(value).expect("config values serialise") {
        Value::Table(t) => t,
        _ => unreachable!("structs serialise to tables"),
    }
}

fn preset_layer(name: &str) -> Result<Table> {
    let g = SyntheticConfig::preset(name)?;
    let mut t = table_of(&g);
    t.remove("seed");
    Ok(t)
}

fn paper_scale_layer() -> Table {
    let p = TrainConfig::paper_scale();
    let mut t = Table::new();
    t.insert("dim".into(), Value::Integer(p.dim as i64));
    t.insert("steps".into(), Value::Integer(p.max_steps as i64));
    t.insert("valid_interval".into(), Value::Integer(p.valid_interval as i64));
    t
}

/// Reads a config file: a flat TOML table.
pub fn read_file(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse::<Table>()
        .with_context(|| format!("parsing {}", path.display()))
}

fn lookup_bool(key: &str, layers: &[&Table]) -> Result<bool> {
    for layer in layers {
        if let Some(v) = layer.get(key) {
            return v.as_bool().with_context(|| format!("`{key}` must be a boolean"));
        }
    }
    Ok(false)
}

/// Merges the layers and validates the result.
pub fn resolve(file: Option<&Table>, flags: &Table) -> Result<RunConfig> {
    let empty = Table::new();
    let file = file.unwrap_or(&empty);
    let mut merged = table_of(&RunConfig::default());
    let preset = flags.get("preset").or_else(|| file.get("preset"));
    if let Some(name) = preset {
        let name = name.as_str().context("`preset` must be a string")?;
        merged.extend(preset_layer(name)?);
    }
    if lookup_bool("paper_scale", &[flags, file])? {
        merged.extend(paper_scale_layer());
    }
    merged.extend(file.clone());
    merged.extend(flags.clone());
    let cfg: RunConfig = Value::Table(merged).try_into().context("invalid configuration")?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.synthetic().validate()?;
        self.train_config()?.validate()?;
        self.search_config()?.validate()?;
        if self.eval_negatives == 0 {
            bail!("eval_negatives must be positive");
        }
        Ok(())
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            entity_count: self.entity_count,
            relation_count: self.relation_count,
            triple_count: self.triple_count,
            zipf_exponent: self.zipf_exponent,
            typed: self.typed,
            type_count: self.type_count,
            split_fractions: self.split_fractions,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let negative_weighting = match self.negative_weighting.as_str() {
            "uniform" => NegativeWeighting::Uniform,
            "self_adversarial" => NegativeWeighting::SelfAdversarial {
                temperature: self.adversarial_temperature,
            },
            other => bail!("negative_weighting must be `uniform` or `self_adversarial`, not `{other}`"),
        };
        Ok(TrainConfig {
            dim: self.dim,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            negatives: self.negatives,
            margin: self.margin,
            dropout: self.dropout,
            max_steps: self.steps,
            valid_interval: self.valid_interval,
            negative_weighting,
            valid_protocol: self.with_filter(EvalProtocol::new(self.valid_protocol, self.seed)),
            seed: self.seed,
        })
    }

    fn with_filter(&self, p: EvalProtocol) -> EvalProtocol {
        EvalProtocol {
            filtered: self.filtered,
            filter_scope: self.filter_scope,
            ..p
        }
    }

    pub fn eval_protocol(&self) -> EvalProtocol {
        self.protocol_for(self.protocol)
    }

    pub fn protocol_for(&self, mode: ProtocolMode) -> EvalProtocol {
        self.with_filter(EvalProtocol::new(mode, self.seed))
    }

    pub fn search_config(&self) -> Result<SearchConfig> {
        Ok(SearchConfig {
            budget: self.budget,
            num_terms: self.num_terms,
            train: self.train_config()?,
            protocol: self.eval_protocol(),
            seed: self.seed,
        })
    }

    pub fn graph_dir(&self) -> Result<&Path> {
        self.graph.as_deref().context("no dataset given (--graph DIR)")
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().context("no output directory given (--out DIR)")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Writes the resolved config into `dir`, creating it.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(RESOLVED_FILE);
        std::fs::write(&path, self.to_toml()).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(text: &str) -> Table {
        text.parse().unwrap()
    }

    #[test]
    fn defaults_match_the_reference_optimiser() {
        let c = resolve(None, &Table::new()).unwrap();
        assert_eq!((c.learning_rate, c.batch_size, c.negatives, c.margin, c.dropout), (0.0005, 512, 128, 6.0, 0.1));
        assert_eq!(c.protocol, ProtocolMode::SampledUniform { num_negatives: 500 });
        assert_eq!((c.dim, c.steps, c.entity_count), (32, 5000, 10_000));
    }

    #[test]
    fn layers_apply_in_order() {
        let file = flags("preset = \"biokg-like\"\nzipf_exponent = 0.7\ndim = 8\n");
        let c = resolve(Some(&file), &flags("dim = 4\npaper_scale = true")).unwrap();
        assert!(c.typed);
        assert_eq!(c.type_count, 5);
        assert_eq!(c.zipf_exponent, 0.7);
        // paper_scale sits below the file and flags
        assert_eq!((c.dim, c.steps, c.valid_interval), (4, 300_000, 20_000));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(resolve(Some(&flags("dimension = 3")), &Table::new()).is_err());
        assert!(resolve(None, &flags("preset = \"nope\"")).is_err());
        assert!(resolve(None, &flags("protocol = \"sampled:0\"")).is_err());
    }

    #[test]
    fn resolved_toml_round_trips() {
        let c = resolve(None, &flags("sf = \"autoweird\"\nscorers = [\"entoccur\"]")).unwrap();
        let back = resolve(Some(&c.to_toml().parse().unwrap()), &Table::new()).unwrap();
        assert_eq!(back, c);
    }
}
