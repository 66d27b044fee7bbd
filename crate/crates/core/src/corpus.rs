//! Corpus manifests, the four-way label taxonomy and reproducible splits.
//!
//! A manifest is UTF-8 JSON-lines; each line is one [`UtteranceRecord`] with
//! the keys `utt_id, audio_path, source, processing, system, pair_id, split,
//! domain`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: duplicate utt_id {utt_id:?}")]
    DuplicateUttId { line: usize, utt_id: String },
    #[error("line {line}: pair_id {pair_id:?} of {utt_id:?} does not name an unprocessed record of the same source")]
    DanglingPairId { line: usize, utt_id: String, pair_id: String },
    #[error("line {line}: unknown value {value:?} for field {field}")]
    UnknownEnumValue { line: usize, field: &'static str, value: String },
    #[error("stratum {stratum} has {count} records, at least 3 required (set allow_small to override)")]
    StratumTooSmall { stratum: String, count: usize },
    #[error("processed record {utt_id:?} cannot follow pair {pair_id:?} into a split")]
    PairSplitConflict { utt_id: String, pair_id: String },
    #[error("invalid split config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parse error for a single enum field, without line context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownValue(pub String);

impl fmt::Display for UnknownValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown value {:?}", self.0)
    }
}

impl std::error::Error for UnknownValue {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceLabel {
    BonaFide,
    Spoofed,
}

impl SourceLabel {
    pub const ALL: [SourceLabel; 2] = [SourceLabel::BonaFide, SourceLabel::Spoofed];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceLabel::BonaFide => "bonafide",
            SourceLabel::Spoofed => "spoof",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for SourceLabel {
    type Err = UnknownValue;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bonafide" => Ok(SourceLabel::BonaFide),
            "spoof" => Ok(SourceLabel::Spoofed),
            other => Err(UnknownValue(other.to_string())),
        }
    }
}

impl fmt::Display for SourceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProcessingLabel {
    None,
    VqcModal,
    VqcBreathy,
    VqcCreaky,
    VqcEndCreak,
    Restoration,
}

impl ProcessingLabel {
    pub const ALL: [ProcessingLabel; 6] = [
        ProcessingLabel::None,
        ProcessingLabel::VqcModal,
        ProcessingLabel::VqcBreathy,
        ProcessingLabel::VqcCreaky,
        ProcessingLabel::VqcEndCreak,
        ProcessingLabel::Restoration,
    ];

    pub const VQC: [ProcessingLabel; 4] = [
        ProcessingLabel::VqcModal,
        ProcessingLabel::VqcBreathy,
        ProcessingLabel::VqcCreaky,
        ProcessingLabel::VqcEndCreak,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProcessingLabel::None => "none",
            ProcessingLabel::VqcModal => "vqc_modal",
            ProcessingLabel::VqcBreathy => "vqc_breathy",
            ProcessingLabel::VqcCreaky => "vqc_creaky",
            ProcessingLabel::VqcEndCreak => "vqc_endcreak",
            ProcessingLabel::Restoration => "restoration",
        }
    }

    pub fn is_processed(self) -> bool {
        self != ProcessingLabel::None
    }

    pub fn is_vqc(self) -> bool {
        ProcessingLabel::VQC.contains(&self)
    }
}

impl FromStr for ProcessingLabel {
    type Err = UnknownValue;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProcessingLabel::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownValue(s.to_string()))
    }
}

impl fmt::Display for ProcessingLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Joint source/processing class. The discriminants are the classifier head
/// indices: unprocessed classes sit at 0 and 2, their processed variants at 1
/// and 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FourWayLabel {
    BonaFide = 0,
    ProcessedBonaFide = 1,
    Spoofed = 2,
    ProcessedSpoofed = 3,
}

impl FourWayLabel {
    pub const ALL: [FourWayLabel; 4] = [
        FourWayLabel::BonaFide,
        FourWayLabel::ProcessedBonaFide,
        FourWayLabel::Spoofed,
        FourWayLabel::ProcessedSpoofed,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        FourWayLabel::ALL.get(i).copied()
    }

    pub fn source(self) -> SourceLabel {
        match self {
            FourWayLabel::BonaFide | FourWayLabel::ProcessedBonaFide => SourceLabel::BonaFide,
            FourWayLabel::Spoofed | FourWayLabel::ProcessedSpoofed => SourceLabel::Spoofed,
        }
    }

    pub fn is_processed(self) -> bool {
        matches!(self, FourWayLabel::ProcessedBonaFide | FourWayLabel::ProcessedSpoofed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FourWayLabel::BonaFide => "bonafide",
            FourWayLabel::ProcessedBonaFide => "processed_bonafide",
            FourWayLabel::Spoofed => "spoof",
            FourWayLabel::ProcessedSpoofed => "processed_spoof",
        }
    }
}

pub fn derive_four_way(source: SourceLabel, processing: ProcessingLabel) -> FourWayLabel {
    match (source, processing.is_processed()) {
        (SourceLabel::BonaFide, false) => FourWayLabel::BonaFide,
        (SourceLabel::BonaFide, true) => FourWayLabel::ProcessedBonaFide,
        (SourceLabel::Spoofed, false) => FourWayLabel::Spoofed,
        (SourceLabel::Spoofed, true) => FourWayLabel::ProcessedSpoofed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "",
        }
    }
}

impl FromStr for Split {
    type Err = UnknownValue;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "" => Ok(Split::Unassigned),
            other => Err(UnknownValue(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub audio_path: Option<String>,
    pub source: SourceLabel,
    pub processing: ProcessingLabel,
    pub system: String,
    pub pair_id: String,
    pub split: Split,
    pub domain: String,
}

impl UtteranceRecord {
    pub fn four_way(&self) -> FourWayLabel {
        derive_four_way(self.source, self.processing)
    }

    /// Serialize to one manifest line (no trailing newline). Keys are always
    /// written in the canonical order.
    pub fn to_json_line(&self) -> String {
        let raw = RawRecord {
            utt_id: self.utt_id.clone(),
            audio_path: Some(self.audio_path.clone().unwrap_or_default()),
            source: self.source.as_str().to_string(),
            processing: self.processing.as_str().to_string(),
            system: self.system.clone(),
            pair_id: self.pair_id.clone(),
            split: self.split.as_str().to_string(),
            domain: self.domain.clone(),
        };
        serde_json::to_string(&raw).expect("record serialization cannot fail")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    utt_id: String,
    #[serde(default)]
    audio_path: Option<String>,
    source: String,
    processing: String,
    system: String,
    #[serde(default)]
    pair_id: String,
    #[serde(default)]
    split: String,
    domain: String,
}

fn record_from_raw(raw: RawRecord, line: usize) -> Result<UtteranceRecord, CorpusError> {
    let unknown = |field: &'static str, e: UnknownValue| CorpusError::UnknownEnumValue { line, field, value: e.0 };
    if raw.utt_id.is_empty() {
        return Err(CorpusError::MalformedRecord { line, reason: "empty utt_id".into() });
    }
    let source = raw.source.parse().map_err(|e| unknown("source", e))?;
    let processing: ProcessingLabel = raw.processing.parse().map_err(|e| unknown("processing", e))?;
    let split = raw.split.parse().map_err(|e| unknown("split", e))?;
    if !processing.is_processed() && !raw.pair_id.is_empty() {
        return Err(CorpusError::MalformedRecord { line, reason: "pair_id must be empty when processing is \"none\"".into() });
    }
    if source == SourceLabel::BonaFide && !processing.is_processed() && raw.system != "human" {
        return Err(CorpusError::MalformedRecord {
            line,
            reason: format!("unprocessed bona fide record must have system \"human\", found {:?}", raw.system),
        });
    }
    Ok(UtteranceRecord {
        utt_id: raw.utt_id,
        audio_path: raw.audio_path.filter(|p| !p.is_empty()),
        source,
        processing,
        system: raw.system,
        pair_id: raw.pair_id,
        split,
        domain: raw.domain,
    })
}

/// Parse and validate a manifest from any reader. Blank lines are skipped.
pub fn parse_manifest_reader<R: Read>(reader: R) -> Result<Vec<UtteranceRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::MalformedRecord { line: line_no, reason: e.to_string() })?;
        let rec = record_from_raw(raw, line_no)?;
        if !seen.insert(rec.utt_id.clone()) {
            return Err(CorpusError::DuplicateUttId { line: line_no, utt_id: rec.utt_id });
        }
        records.push(rec);
        lines.push(line_no);
    }
    let index: HashMap<&str, &UtteranceRecord> = records.iter().map(|r| (r.utt_id.as_str(), r)).collect();
    for (rec, &line) in records.iter().zip(&lines) {
        if !rec.processing.is_processed() {
            continue;
        }
        let ok = index
            .get(rec.pair_id.as_str())
            .is_some_and(|orig| !orig.processing.is_processed() && orig.source == rec.source);
        if !ok {
            return Err(CorpusError::DanglingPairId { line, utt_id: rec.utt_id.clone(), pair_id: rec.pair_id.clone() });
        }
    }
    Ok(records)
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>, CorpusError> {
    parse_manifest_reader(std::fs::File::open(path)?)
}

pub fn write_manifest<W: Write>(mut w: W, records: &[UtteranceRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_json_line())?;
    }
    Ok(())
}

/// Count of records per four-way class, indexed by class.
pub fn class_histogram(records: &[UtteranceRecord]) -> [usize; 4] {
    let mut h = [0; 4];
    for r in records {
        h[r.four_way().index()] += 1;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratifyKey {
    FourWayLabel,
    Domain,
    Source,
    System,
}

impl FromStr for StratifyKey {
    type Err = UnknownValue;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "four_way_label" => Ok(StratifyKey::FourWayLabel),
            "domain" => Ok(StratifyKey::Domain),
            "source" => Ok(StratifyKey::Source),
            "system" => Ok(StratifyKey::System),
            other => Err(UnknownValue(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitConfig {
    pub seed: u64,
    /// Fixed test count per stratum; `None` draws the test share proportionally.
    pub per_class_test: Option<usize>,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub stratify_by: Vec<StratifyKey>,
    pub allow_small: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            per_class_test: None,
            train_fraction: 0.70,
            val_fraction: 0.15,
            stratify_by: vec![StratifyKey::FourWayLabel, StratifyKey::Domain],
            allow_small: false,
        }
    }
}

impl SplitConfig {
    fn validate(&self) -> Result<(), CorpusError> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !in_unit(self.train_fraction) || !in_unit(self.val_fraction) {
            return Err(CorpusError::BadConfig("fractions must lie in (0, 1)".into()));
        }
        if self.train_fraction + self.val_fraction > 1.0 + 1e-12 {
            return Err(CorpusError::BadConfig("train + val fractions exceed 1".into()));
        }
        Ok(())
    }

    fn stratum_key(&self, r: &UtteranceRecord) -> String {
        self.stratify_by
            .iter()
            .map(|k| match k {
                StratifyKey::FourWayLabel => r.four_way().index().to_string(),
                StratifyKey::Domain => r.domain.clone(),
                StratifyKey::Source => r.source.as_str().to_string(),
                StratifyKey::System => r.system.clone(),
            })
            .collect::<Vec<_>>()
            .join("|")
    }

    /// (test, val) counts for a stratum of `n` draws; train takes the rest.
    fn partition_sizes(&self, n: usize) -> (usize, usize) {
        match self.per_class_test {
            Some(t) => {
                let n_test = t.min(n);
                let rest = n - n_test;
                let share = self.val_fraction / (self.train_fraction + self.val_fraction);
                let n_val = ((rest as f64 * share).round() as usize).min(rest);
                (n_test, n_val)
            }
            None => {
                let n_train = ((n as f64 * self.train_fraction).round() as usize).min(n);
                let n_val = ((n as f64 * self.val_fraction).round() as usize).min(n - n_train);
                (n - n_train - n_val, n_val)
            }
        }
    }
}

/// Assign train/val/test splits.
///
/// Only unprocessed records are drawn. They are grouped into strata, each
/// stratum is sorted by `utt_id` and shuffled, and the shuffled order is cut
/// into test, val and train in that order. Strata are visited in sorted key
/// order with a single generator, so the result does not depend on input
/// order. Processed records then inherit the split of their pair.
pub fn assign_splits(records: &[UtteranceRecord], cfg: &SplitConfig) -> Result<Vec<UtteranceRecord>, CorpusError> {
    cfg.validate()?;
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let mut strata: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.processing.is_processed()) {
        strata.entry(cfg.stratum_key(r)).or_default().push(&r.utt_id);
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut drawn: HashMap<&str, Split> = HashMap::new();
    for (key, ids) in strata.iter_mut() {
        if ids.len() < 3 && !cfg.allow_small {
            return Err(CorpusError::StratumTooSmall { stratum: key.clone(), count: ids.len() });
        }
        ids.sort_unstable();
        rng.shuffle(ids);
        let (n_test, n_val) = cfg.partition_sizes(ids.len());
        for (i, id) in ids.iter().enumerate() {
            let split = if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
            drawn.insert(id, split);
        }
    }
    records
        .iter()
        .map(|r| {
            let split = if r.processing.is_processed() {
                *drawn.get(r.pair_id.as_str()).ok_or_else(|| CorpusError::PairSplitConflict {
                    utt_id: r.utt_id.clone(),
                    pair_id: r.pair_id.clone(),
                })?
            } else {
                drawn[r.utt_id.as_str()]
            };
            Ok(UtteranceRecord { split, ..r.clone() })
        })
        .collect()
}
