//! Ground-truth parsers for the benchmark layouts.
//!
//! Parsers work on id listings and ground-truth text files only; they never
//! touch pixel data. Ids from ground-truth files are matched against store ids
//! after [`normalize_token`] is applied to both sides.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{DatasetError, Error, Result};
use crate::eval::{GroundTruth, Protocol, QueryTruth};

const IMAGE_EXTENSIONS: &[&str] = &["jpg", "jpeg", "png", "bmp", "gif", "tif", "tiff", "ppm", "pgm", "webp"];
const OXFORD_QUERY_PREFIX: &str = "oxc1_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetLayout {
    Oxford,
    Paris,
    Holidays,
    UkBench,
    GenericJson,
}

impl DatasetLayout {
    pub fn name(self) -> &'static str {
        match self {
            DatasetLayout::Oxford => "oxford",
            DatasetLayout::Paris => "paris",
            DatasetLayout::Holidays => "holidays",
            DatasetLayout::UkBench => "ukbench",
            DatasetLayout::GenericJson => "json",
        }
    }

    pub fn protocol(self) -> Option<Protocol> {
        match self {
            DatasetLayout::UkBench => Some(Protocol::Ns),
            DatasetLayout::GenericJson => None,
            _ => Some(Protocol::Map),
        }
    }
}

impl fmt::Display for DatasetLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetLayout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oxford" | "oxford5k" => Ok(DatasetLayout::Oxford),
            "paris" | "paris6k" => Ok(DatasetLayout::Paris),
            "holidays" | "inria" => Ok(DatasetLayout::Holidays),
            "ukbench" => Ok(DatasetLayout::UkBench),
            "json" | "generic" => Ok(DatasetLayout::GenericJson),
            other => Err(format!("unknown layout {other:?}")),
        }
    }
}

/// Strips directory components and an image extension, then lowercases.
pub fn normalize_token(raw: &str) -> String {
    let base = raw.trim().rsplit(['/', '\\']).next().unwrap_or("");
    let stem = match base.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() && IMAGE_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()) => stem,
        _ => base,
    };
    stem.to_lowercase()
}

/// Map from normalized token to the original store id.
struct IdResolver<'a> {
    by_token: HashMap<String, &'a str>,
}

impl<'a> IdResolver<'a> {
    fn new<S: AsRef<str>>(ids: &'a [S]) -> Result<Self, DatasetError> {
        let mut by_token = HashMap::with_capacity(ids.len());
        for id in ids {
            let id = id.as_ref();
            if let Some(prev) = by_token.insert(normalize_token(id), id) {
                return Err(DatasetError::Malformed {
                    file: "image ids".into(),
                    message: format!("{prev:?} and {id:?} normalize to the same token"),
                });
            }
        }
        Ok(Self { by_token })
    }

    fn resolve(&self, token: &str) -> Option<String> {
        self.by_token.get(&normalize_token(token)).map(|s| s.to_string())
    }
}

fn finish(gt: GroundTruth) -> Result<GroundTruth, DatasetError> {
    if gt.queries.is_empty() {
        return Err(DatasetError::NoQueries);
    }
    gt.validate()?;
    Ok(gt)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.to_path_buf()).into());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Query token and bounding box from a `_query.txt` file.
fn parse_query_file(path: &Path) -> Result<(String, [f64; 4])> {
    let lines = read_lines(path)?;
    let file = path.display().to_string();
    let malformed = |message: String| DatasetError::Malformed {
        file: file.clone(),
        message,
    };
    let line = lines.first().ok_or_else(|| malformed("empty query file".into()))?;
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(malformed(format!("expected an image token and 4 box coordinates, got {line:?}")).into());
    }
    let mut bbox = [0.0f64; 4];
    for (slot, tok) in bbox.iter_mut().zip(&fields[1..]) {
        *slot = tok
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| malformed(format!("bad box coordinate {tok:?}")))?;
    }
    let token = fields[0];
    let token = token.strip_prefix(OXFORD_QUERY_PREFIX).unwrap_or(token);
    Ok((token.to_owned(), bbox))
}

/// Parses an Oxford5k/Paris6k ground-truth directory.
///
/// Positives are `good ∪ ok`; the query box is validated but the full
/// image is used as the query. Junk ids absent from `image_ids` are dropped.
pub fn parse_oxford_gt<S: AsRef<str>>(gt_dir: &Path, image_ids: &[S]) -> Result<GroundTruth> {
    let resolver = IdResolver::new(image_ids)?;
    let entries = fs::read_dir(gt_dir).map_err(|e| Error::io(gt_dir, e))?;
    let mut names: Vec<String> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(gt_dir, e))?;
        let file_name = entry.file_name().to_string_lossy().into_owned();
        if let Some(name) = file_name.strip_suffix("_query.txt") {
            names.push(name.to_owned());
        }
    }
    names.sort();

    let companion = |name: &str, kind: &str| -> PathBuf { gt_dir.join(format!("{name}_{kind}.txt")) };
    let mut queries = Vec::with_capacity(names.len());
    for name in &names {
        let (token, _bbox) = parse_query_file(&companion(name, "query"))?;
        let query = resolver
            .resolve(&token)
            .ok_or_else(|| DatasetError::UnknownQueryImage(token.clone()))?;
        let mut positives = BTreeSet::new();
        for kind in ["good", "ok"] {
            for tok in read_lines(&companion(name, kind))? {
                let id = resolver.resolve(&tok).ok_or_else(|| DatasetError::UnknownPositive {
                    query: query.clone(),
                    id: tok.clone(),
                })?;
                positives.insert(id);
            }
        }
        if positives.is_empty() {
            return Err(DatasetError::EmptyPositives(query).into());
        }
        let junk = read_lines(&companion(name, "junk"))?
            .iter()
            .filter_map(|t| resolver.resolve(t))
            .collect();
        queries.push(QueryTruth {
            query,
            positives,
            junk,
            exclude_self: false,
        });
    }
    Ok(finish(GroundTruth {
        protocol: Protocol::Map,
        queries,
    })?)
}

fn digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// INRIA Holidays: 6-digit stems, 4-digit group prefix, `…00` is the query.
pub fn parse_holidays<S: AsRef<str>>(image_ids: &[S]) -> Result<GroundTruth, DatasetError> {
    let mut groups: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for id in image_ids {
        let id = id.as_ref();
        let stem = normalize_token(id);
        if stem.len() != 6 || !digits(&stem) {
            return Err(DatasetError::MalformedStem(id.to_owned()));
        }
        let (group, member) = stem.split_at(4);
        if groups
            .entry(group.to_owned())
            .or_default()
            .insert(member.to_owned(), id.to_owned())
            .is_some()
        {
            return Err(DatasetError::Malformed {
                file: "image ids".into(),
                message: format!("duplicate image {stem}"),
            });
        }
    }
    let mut queries = Vec::with_capacity(groups.len());
    for (group, mut members) in groups {
        let query = members
            .remove("00")
            .ok_or_else(|| DatasetError::MissingGroupQuery(group.clone()))?;
        if members.is_empty() {
            return Err(DatasetError::SingletonGroup(group));
        }
        queries.push(QueryTruth {
            query,
            positives: members.into_values().collect(),
            junk: BTreeSet::new(),
            exclude_self: true,
        });
    }
    finish(GroundTruth {
        protocol: Protocol::Map,
        queries,
    })
}

/// Trailing decimal sequence number of a stem such as `ukbench01234`.
fn sequence_number(id: &str) -> Result<u64, DatasetError> {
    let stem = normalize_token(id);
    let start = stem
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_digit())
        .last()
        .map(|(i, _)| i)
        .ok_or_else(|| DatasetError::MalformedStem(id.to_owned()))?;
    stem[start..]
        .parse()
        .map_err(|_| DatasetError::MalformedStem(id.to_owned()))
}

/// UKBench: consecutive groups of four by zero-based sequence number; every
/// image is a query and its own group (itself included) is the positive set.
pub fn parse_ukbench<S: AsRef<str>>(image_ids: &[S]) -> Result<GroundTruth, DatasetError> {
    let mut seq: Vec<(u64, &str)> = image_ids
        .iter()
        .map(|id| Ok((sequence_number(id.as_ref())?, id.as_ref())))
        .collect::<Result<_, DatasetError>>()?;
    seq.sort();
    for (i, &(n, _)) in seq.iter().enumerate() {
        let expected = i as u64;
        if n != expected {
            if i > 0 && seq[i - 1].0 == n {
                return Err(DatasetError::DuplicateSequence(n));
            }
            return Err(DatasetError::SequenceGap { expected, found: n });
        }
    }
    if !seq.len().is_multiple_of(4) {
        return Err(DatasetError::NotMultipleOfFour(seq.len()));
    }
    let mut queries = Vec::with_capacity(seq.len());
    for group in seq.chunks_exact(4) {
        let positives: BTreeSet<String> = group.iter().map(|(_, id)| id.to_string()).collect();
        for (_, id) in group {
            queries.push(QueryTruth {
                query: id.to_string(),
                positives: positives.clone(),
                junk: BTreeSet::new(),
                exclude_self: false,
            });
        }
    }
    finish(GroundTruth {
        protocol: Protocol::Ns,
        queries,
    })
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonQuery {
    query: String,
    positives: BTreeSet<String>,
    #[serde(default)]
    junk: BTreeSet<String>,
    #[serde(default)]
    exclude_self: bool,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonTruth {
    protocol: Protocol,
    queries: Vec<JsonQuery>,
}

pub fn parse_generic_json_str(text: &str) -> Result<GroundTruth, DatasetError> {
    let raw: JsonTruth = serde_json::from_str(text).map_err(|e| DatasetError::Json(e.to_string()))?;
    finish(GroundTruth {
        protocol: raw.protocol,
        queries: raw
            .queries
            .into_iter()
            .map(|q| QueryTruth {
                query: q.query,
                positives: q.positives,
                junk: q.junk,
                exclude_self: q.exclude_self,
            })
            .collect(),
    })
}

pub fn parse_generic_json(path: &Path) -> Result<GroundTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_generic_json_str(&text)?)
}

pub fn to_generic_json(gt: &GroundTruth) -> String {
    serde_json::to_string_pretty(gt).expect("ground truth always serializes")
}

/// One id per line; blank lines ignored.
pub fn parse_id_listing(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Loads ground truth for `layout`. `location` is the Oxford/Paris
/// directory or the JSON file; Holidays and UKBench derive everything from
/// the image ids.
pub fn load_ground_truth<S: AsRef<str>>(
    layout: DatasetLayout,
    location: Option<&Path>,
    image_ids: &[S],
) -> Result<GroundTruth> {
    let need = |what: &str| {
        location.ok_or_else(|| {
            Error::from(DatasetError::Malformed {
                file: layout.name().into(),
                message: format!("a ground-truth {what} is required"),
            })
        })
    };
    match layout {
        DatasetLayout::Oxford | DatasetLayout::Paris => parse_oxford_gt(need("directory")?, image_ids),
        DatasetLayout::Holidays => Ok(parse_holidays(image_ids)?),
        DatasetLayout::UkBench => Ok(parse_ukbench(image_ids)?),
        DatasetLayout::GenericJson => parse_generic_json(need("file")?),
    }
}
