//! Triple TSV directories.
//!
//! Layout: `train.tsv`, `valid.tsv`, `test.tsv` (one `head\trelation\ttail`
//! per line), an optional `meta.json` and an optional `types.tsv`
//! (`entity\ttype` per line).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KnowledgeGraph, Split, Triple};
use crate::error::{Error, IoContext, Result};

pub const META_FILE: &str = "meta.json";
pub const TYPES_FILE: &str = "types.tsv";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMeta {
    pub format_version: u32,
    pub entity_count: usize,
    pub relation_count: usize,
    pub augmented: bool,
    pub typed: bool,
}

impl GraphMeta {
    pub fn of(g: &KnowledgeGraph) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            entity_count: g.entity_count(),
            relation_count: g.relation_count(),
            augmented: g.is_augmented(),
            typed: g.is_typed(),
        }
    }
}

fn parse_id(field: &str, path: &Path, line: usize, column: &str) -> Result<u32> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("{column} `{field}` is not a non-negative integer"),
        });
    }
    match field.parse::<u64>() {
        Ok(v) if v <= u32::MAX as u64 => Ok(v as u32),
        _ => Err(Error::Bounds(format!(
            "{}:{line}: {column} `{field}` overflows the 32-bit id space",
            path.display()
        ))),
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_triples(text: &str, path: &Path) -> Result<Vec<Triple>> {
    lines(text)
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: n,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            Ok(Triple::new(
                parse_id(fields[0], path, n, "head")?,
                parse_id(fields[1], path, n, "relation")?,
                parse_id(fields[2], path, n, "tail")?,
            ))
        })
        .collect()
}

fn parse_types(text: &str, path: &Path) -> Result<Vec<(u32, u32)>> {
    lines(text)
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: n,
                    message: format!("expected 2 tab-separated fields, found {}", fields.len()),
                });
            }
            Ok((
                parse_id(fields[0], path, n, "entity")?,
                parse_id(fields[1], path, n, "type")?,
            ))
        })
        .collect()
}

/// Loads a graph directory.
///
/// Counts come from `meta.json` when present, otherwise `1 + max id` over all
/// splits (and the types file).
pub fn load_graph(dir: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let dir = dir.as_ref();
    let mut splits = Vec::with_capacity(3);
    for split in Split::ALL {
        let path = dir.join(format!("{}.tsv", split.name()));
        let text = fs::read_to_string(&path).at(&path)?;
        splits.push(parse_triples(&text, &path)?);
    }
    let test = splits.pop().unwrap_or_default();
    let valid = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }

    let meta_path = dir.join(META_FILE);
    let meta: Option<GraphMeta> = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).at(&meta_path)?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };

    let types_path = dir.join(TYPES_FILE);
    let type_pairs = if types_path.exists() {
        let text = fs::read_to_string(&types_path).at(&types_path)?;
        Some(parse_types(&text, &types_path)?)
    } else {
        None
    };

    let all = || train.iter().chain(&valid).chain(&test);
    let (entity_count, relation_count, augmented) = match &meta {
        Some(m) => (m.entity_count, m.relation_count, m.augmented),
        None => {
            let max_entity = all()
                .flat_map(|t| [t.head, t.tail])
                .chain(type_pairs.iter().flatten().map(|&(e, _)| e))
                .max()
                .unwrap_or(0);
            let max_relation = all().map(|t| t.relation).max().unwrap_or(0);
            (max_entity as usize + 1, max_relation as usize + 1, false)
        }
    };

    let entity_types = match type_pairs {
        Some(pairs) => {
            let mut types: Vec<Option<u32>> = vec![None; entity_count];
            for (e, ty) in pairs {
                let slot = types.get_mut(e as usize).ok_or_else(|| {
                    Error::Bounds(format!("types file references entity {e} >= {entity_count}"))
                })?;
                if slot.replace(ty).is_some() {
                    return Err(Error::Config(format!("entity {e} has more than one type")));
                }
            }
            let types: Option<Vec<u32>> = types.into_iter().collect();
            Some(types.ok_or_else(|| Error::Config("types file does not cover every entity".into()))?)
        }
        None => None,
    };
    if meta.as_ref().is_some_and(|m| m.typed) && entity_types.is_none() {
        return Err(Error::Config(format!(
            "meta.json declares a typed graph but {TYPES_FILE} is missing"
        )));
    }

    KnowledgeGraph::with_augmented(
        entity_count,
        relation_count,
        train,
        valid,
        test,
        entity_types,
        augmented,
    )
}

/// Writes a graph directory (creating it if needed).
pub fn write_graph(g: &KnowledgeGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).at(dir)?;
    for split in Split::ALL {
        let path = dir.join(format!("{}.tsv", split.name()));
        let mut text = String::with_capacity(g.split(split).len() * 16);
        for t in g.split(split) {
            text.push_str(&format!("{}\t{}\t{}\n", t.head, t.relation, t.tail));
        }
        fs::write(&path, text).at(&path)?;
    }
    if let Some(types) = g.entity_types() {
        let path = dir.join(TYPES_FILE);
        let text: String = types
            .iter()
            .enumerate()
            .map(|(e, ty)| format!("{e}\t{ty}\n"))
            .collect();
        fs::write(&path, text).at(&path)?;
    }
    let path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&GraphMeta::of(g))?;
    fs::write(&path, json + "\n").at(&path)?;
    Ok(())
}
