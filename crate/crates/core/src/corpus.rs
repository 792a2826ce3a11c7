//! Corpus ingestion and preparation.
//!
//! Two source shapes are supported: MLMA-style CSV exports (one tweet per
//! row with a multi-tag sentiment column) and CONAN-style JSON (hate text /
//! counter-narrative pairs, of which only the hate side is kept). The
//! preparation pipeline is normalize → filter → deduplicate → merge, and a
//! prepared [`Corpus`] never contains a sample violating the
//! [`TextSample`] invariants.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::digest::sha256_hex;
use crate::encoding::Tokenize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Fr,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::En, Language::Fr];

    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Fr => "fr",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "fr" => Ok(Language::Fr),
            other => Err(Error::Data(format!("unsupported language code {other:?}"))),
        }
    }
}

/// Binary label. Serialized as the integer 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NotHateful = 0,
    Hateful = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Label::NotHateful),
            1 => Ok(Label::Hateful),
            _ => Err(Error::Data(format!("label must be 0 or 1, got {i}"))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(*self as u8)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_index(v as usize).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    Mlma,
    Conan,
    Synthetic,
}

impl Source {
    fn namespace(self) -> &'static str {
        match self {
            Source::Mlma => "mlma",
            Source::Conan => "conan",
            Source::Synthetic => "synthetic",
        }
    }
}

/// One normalized, binary-labeled text.
///
/// Field order is the JSONL key order of prepared corpus files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSample {
    pub id: String,
    pub text: String,
    pub language: Language,
    pub label: Label,
    pub source: Source,
}

impl TextSample {
    /// Checks the invariants every sample of a prepared corpus must hold.
    pub fn validate(&self) -> Result<()> {
        if self.text.is_empty() {
            return Err(Error::Data(format!("sample {} has empty text", self.id)));
        }
        if normalize(&self.text).as_deref() != Some(self.text.as_str()) {
            return Err(Error::Data(format!("sample {} is not normalized", self.id)));
        }
        if should_discard(&self.text) {
            return Err(Error::Data(format!("sample {} contains a hashtag or mention", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMlmaRecord {
    pub id: String,
    pub text: String,
    pub label_tags: BTreeSet<String>,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawConanRecord {
    pub id: Option<String>,
    pub hate_text: String,
    pub language: String,
}

/// A row-level problem that was skipped rather than aborting ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub row: usize,
    pub message: String,
}

/// Column names of an MLMA-style CSV export.
///
/// MLMA ships one file per language without a language column, so
/// `language` is optional and the caller then supplies a default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlmaColumns {
    pub text: String,
    pub labels: String,
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub id: Option<String>,
}

impl Default for MlmaColumns {
    fn default() -> Self {
        Self {
            text: "tweet".into(),
            labels: "sentiment".into(),
            language: None,
            id: Some("HITId".into()),
        }
    }
}

impl MlmaColumns {
    /// Parses `key=column` pairs separated by commas, e.g.
    /// `text=tweet,labels=sentiment,language=lang`.
    pub fn parse_mapping(spec: &str) -> Result<Self> {
        let mut cols = MlmaColumns {
            text: String::new(),
            labels: String::new(),
            language: None,
            id: None,
        };
        for pair in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("column map entry {pair:?} is not key=value")))?;
            let value = value.trim().to_string();
            match key.trim() {
                "text" => cols.text = value,
                "labels" => cols.labels = value,
                "language" | "lang" => cols.language = Some(value),
                "id" => cols.id = Some(value),
                other => return Err(Error::Usage(format!("unknown column map key {other:?}"))),
            }
        }
        if cols.text.is_empty() || cols.labels.is_empty() {
            return Err(Error::Usage("column map must name text and labels".into()));
        }
        Ok(cols)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MlmaParse {
    pub records: Vec<RawMlmaRecord>,
    pub row_errors: Vec<RowError>,
    /// Rows dropped because their language was outside the filter.
    pub excluded: usize,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
}

/// Reads an MLMA-style CSV (header row, UTF-8).
///
/// Rows with an empty text or label cell are reported in `row_errors` and
/// skipped. Row numbers are 1-based data rows (the header is row 0).
pub fn parse_mlma<R: Read>(
    reader: R,
    columns: &MlmaColumns,
    tag_separator: &str,
    language_filter: &BTreeSet<Language>,
    default_language: Option<Language>,
) -> Result<MlmaParse> {
    if tag_separator.is_empty() {
        return Err(Error::Usage("tag separator must be non-empty".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let text_col = column_index(&headers, &columns.text)?;
    let label_col = column_index(&headers, &columns.labels)?;
    let lang_col = columns
        .language
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;
    let id_col = columns.id.as_deref().map(|c| column_index(&headers, c)).transpose()?;
    if lang_col.is_none() && default_language.is_none() {
        return Err(Error::Schema(
            "no language column mapped and no default language given".into(),
        ));
    }

    let mut out = MlmaParse::default();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.row_errors.push(RowError {
                    row: row_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let cell = |c: usize| row.get(c).unwrap_or("").trim();

        let language = match lang_col {
            Some(c) => match Language::from_str(cell(c)) {
                Ok(l) => l,
                Err(_) => {
                    out.excluded += 1;
                    continue;
                }
            },
            None => default_language.expect("checked above"),
        };
        if !language_filter.contains(&language) {
            out.excluded += 1;
            continue;
        }

        let text = cell(text_col);
        if text.is_empty() {
            out.row_errors.push(RowError {
                row: row_no,
                message: "empty text cell".into(),
            });
            continue;
        }
        let label_tags: BTreeSet<String> = cell(label_col)
            .split(tag_separator)
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        if label_tags.is_empty() {
            out.row_errors.push(RowError {
                row: row_no,
                message: "empty label cell".into(),
            });
            continue;
        }
        let id = id_col
            .map(|c| cell(c).to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("{language}-{row_no}"));
        out.records.push(RawMlmaRecord {
            id,
            text: text.to_string(),
            label_tags,
            language,
        });
    }
    Ok(out)
}

/// `{"normal"}` (case-insensitive) is the only not-hateful tag set.
pub fn binarize_mlma_label(tags: &BTreeSet<String>) -> Result<Label> {
    if tags.is_empty() {
        return Err(Error::Data("empty tag set".into()));
    }
    let lowered: BTreeSet<String> = tags.iter().map(|t| t.trim().to_lowercase()).collect();
    if lowered.len() == 1 && lowered.contains("normal") {
        Ok(Label::NotHateful)
    } else {
        Ok(Label::Hateful)
    }
}

/// Field names of a CONAN-style JSON record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConanFields {
    pub hate_text: String,
    pub language: String,
    #[serde(default)]
    pub id: Option<String>,
}

impl Default for ConanFields {
    fn default() -> Self {
        Self {
            hate_text: "hateSpeech".into(),
            language: "language".into(),
            id: Some("cn_id".into()),
        }
    }
}

impl ConanFields {
    /// Parses `key=field` pairs, e.g. `hate_text=hateSpeech,language=lang`.
    pub fn parse_mapping(spec: &str) -> Result<Self> {
        let mut fields = ConanFields {
            hate_text: String::new(),
            language: String::new(),
            id: None,
        };
        for pair in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("field map entry {pair:?} is not key=value")))?;
            let value = value.trim().to_string();
            match key.trim() {
                "hate_text" | "text" => fields.hate_text = value,
                "language" | "lang" => fields.language = value,
                "id" => fields.id = Some(value),
                other => return Err(Error::Usage(format!("unknown field map key {other:?}"))),
            }
        }
        if fields.hate_text.is_empty() || fields.language.is_empty() {
            return Err(Error::Usage("field map must name hate_text and language".into()));
        }
        Ok(fields)
    }
}

/// Splits CONAN JSON text into raw records. Accepts a top-level array, an
/// object wrapping one array (the published file uses `{"conan": [...]}`),
/// or one JSON object per line.
pub fn conan_records_from_json(text: &str, fields: &ConanFields) -> Result<Vec<RawConanRecord>> {
    let values: Vec<serde_json::Value> = match serde_json::from_str::<serde_json::Value>(text) {
        Ok(serde_json::Value::Array(items)) => items,
        Ok(serde_json::Value::Object(map)) => {
            let arrays: Vec<_> = map.into_iter().filter(|(_, v)| v.is_array()).collect();
            match arrays.len() {
                1 => match arrays.into_iter().next() {
                    Some((_, serde_json::Value::Array(items))) => items,
                    _ => unreachable!(),
                },
                // a single record object
                _ => vec![serde_json::from_str(text)?],
            }
        }
        Ok(_) => return Err(Error::Schema("CONAN input is not an array or object".into())),
        Err(_) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?,
    };

    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let obj = v
                .as_object()
                .ok_or_else(|| Error::Schema(format!("CONAN record {i} is not an object")))?;
            let hate_text = obj
                .get(&fields.hate_text)
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::Schema(format!("CONAN record {i} lacks field {:?}", fields.hate_text)))?
                .to_string();
            let language = obj
                .get(&fields.language)
                .and_then(|v| v.as_str())
                .unwrap_or("")
                .to_string();
            let id = fields.id.as_ref().and_then(|k| match obj.get(k) {
                Some(serde_json::Value::String(s)) => Some(s.clone()),
                Some(serde_json::Value::Number(n)) => Some(n.to_string()),
                _ => None,
            });
            Ok(RawConanRecord {
                id,
                hate_text,
                language,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct ConanParse {
    pub samples: Vec<TextSample>,
    pub row_errors: Vec<RowError>,
    pub excluded: usize,
}

/// Converts CONAN hate texts into normalized HATEFUL samples. Counter
/// narratives are never read. Duplicates survive here; [`deduplicate`]
/// collapses them later.
pub fn parse_conan(records: &[RawConanRecord], language_filter: &BTreeSet<Language>) -> ConanParse {
    let mut out = ConanParse::default();
    for (i, rec) in records.iter().enumerate() {
        let language = match Language::from_str(&rec.language) {
            Ok(l) if language_filter.contains(&l) => l,
            _ => {
                out.excluded += 1;
                continue;
            }
        };
        let Some(text) = normalize(&rec.hate_text) else {
            out.row_errors.push(RowError {
                row: i,
                message: "hate text empty after normalization".into(),
            });
            continue;
        };
        let id = match &rec.id {
            Some(id) => format!("conan-{id}"),
            None => format!("conan-{i}"),
        };
        out.samples.push(TextSample {
            id,
            text,
            language,
            label: Label::Hateful,
            source: Source::Conan,
        });
    }
    out
}

/// Unicode lowercase, trimmed, internal whitespace runs collapsed to one
/// space. `None` when nothing is left.
pub fn normalize(text: &str) -> Option<String> {
    let lowered = text.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// True iff the text holds a token-initial `#` or `@` immediately followed
/// by a word character. `price @ 5` and `a@b.com` do not count.
pub fn should_discard(text: &str) -> bool {
    let mut prev: Option<char> = None;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if (c == '#' || c == '@') && !prev.is_some_and(is_word_char) && chars.peek().copied().is_some_and(is_word_char)
        {
            return true;
        }
        prev = Some(c);
    }
    false
}

#[derive(Debug, Clone, Default)]
pub struct Dedup {
    pub samples: Vec<TextSample>,
    pub dropped: usize,
    /// Dropped duplicates whose label differed from the kept occurrence.
    pub label_conflicts: usize,
}

/// Keeps the first occurrence of each distinct text, preserving order.
pub fn deduplicate(samples: Vec<TextSample>) -> Dedup {
    let mut first_label: HashMap<String, Label> = HashMap::with_capacity(samples.len());
    let mut out = Dedup::default();
    for s in samples {
        match first_label.get(&s.text) {
            Some(&kept) => {
                out.dropped += 1;
                if kept != s.label {
                    out.label_conflicts += 1;
                }
            }
            None => {
                first_label.insert(s.text.clone(), s.label);
                out.samples.push(s);
            }
        }
    }
    if out.label_conflicts > 0 {
        log::warn!(
            "deduplicate: {} duplicate texts dropped, {} with conflicting labels",
            out.dropped,
            out.label_conflicts
        );
    }
    out
}

/// An immutable, validated collection of prepared samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Corpus {
    samples: Vec<TextSample>,
    language_mix: BTreeMap<Language, usize>,
    provenance: Vec<String>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids, duplicate texts, and any
    /// sample violating the [`TextSample`] invariants.
    pub fn new(samples: Vec<TextSample>, provenance: Vec<String>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(samples.len());
        let mut texts = HashSet::with_capacity(samples.len());
        let mut language_mix = BTreeMap::new();
        for s in &samples {
            s.validate()?;
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id {}", s.id)));
            }
            if !texts.insert(s.text.as_str()) {
                return Err(Error::Data(format!("duplicate text in sample {}", s.id)));
            }
            *language_mix.entry(s.language).or_insert(0) += 1;
        }
        Ok(Self {
            samples,
            language_mix,
            provenance,
        })
    }

    pub fn empty() -> Self {
        Self {
            samples: Vec::new(),
            language_mix: BTreeMap::new(),
            provenance: Vec::new(),
        }
    }

    pub fn samples(&self) -> &[TextSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn language_mix(&self) -> &BTreeMap<Language, usize> {
        &self.language_mix
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.text.as_str()).collect()
    }

    /// The corpus as JSON Lines: one object per sample, keys
    /// `id, text, language, label, source`, trailing newline per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the JSONL rendering; identifies a corpus across runs.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_jsonl().as_bytes())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    pub fn read_jsonl<R: BufRead>(r: R, provenance: Vec<String>) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Data(format!("line {}: {e}", i + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            samples.push(serde_json::from_str(&line)?);
        }
        Corpus::new(samples, provenance)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Corpus::read_jsonl(bytes.as_slice(), vec![sha256_hex(&bytes)])
    }

    /// Keeps the samples at `indices` (in the given order).
    fn select(&self, indices: &[usize]) -> Corpus {
        let samples: Vec<TextSample> = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let mut language_mix = BTreeMap::new();
        for s in &samples {
            *language_mix.entry(s.language).or_insert(0) += 1;
        }
        Corpus {
            samples,
            language_mix,
            provenance: self.provenance.clone(),
        }
    }
}

/// Counts recorded while preparing one language's corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineCounts {
    /// Samples entering the pipeline (after parsing and binarization).
    pub input: usize,
    pub empty_after_normalize: usize,
    pub discarded_markers: usize,
    pub after_filter: usize,
    pub duplicates_dropped: usize,
    pub label_conflicts: usize,
    pub output: usize,
}

impl PipelineCounts {
    /// Fraction of input samples that did not survive (0 for empty input).
    pub fn shrinkage(&self) -> f64 {
        if self.input == 0 {
            0.0
        } else {
            1.0 - self.output as f64 / self.input as f64
        }
    }

    /// Fraction removed by deduplication alone, measured against the
    /// post-filter count.
    pub fn dedup_shrinkage(&self) -> f64 {
        if self.after_filter == 0 {
            0.0
        } else {
            self.duplicates_dropped as f64 / self.after_filter as f64
        }
    }
}

/// Turns MLMA records into samples (binarize + normalize). Samples whose
/// text normalizes to nothing are counted and dropped.
pub fn mlma_samples(records: &[RawMlmaRecord]) -> Result<(Vec<TextSample>, usize)> {
    let mut out = Vec::with_capacity(records.len());
    let mut empty = 0;
    for r in records {
        let label = binarize_mlma_label(&r.label_tags)?;
        match normalize(&r.text) {
            Some(text) => out.push(TextSample {
                id: format!("mlma-{}", r.id),
                text,
                language: r.language,
                label,
                source: Source::Mlma,
            }),
            None => empty += 1,
        }
    }
    Ok((out, empty))
}

/// Runs normalize → filter → deduplicate over one source's samples and
/// returns the resulting corpus with its counts.
pub fn prepare_source(samples: Vec<TextSample>, provenance: Vec<String>) -> Result<(Corpus, PipelineCounts)> {
    let mut counts = PipelineCounts {
        input: samples.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(samples.len());
    for mut s in samples {
        match normalize(&s.text) {
            None => counts.empty_after_normalize += 1,
            Some(text) if should_discard(&text) => counts.discarded_markers += 1,
            Some(text) => {
                s.text = text;
                kept.push(s);
            }
        }
    }
    counts.after_filter = kept.len();
    let dedup = deduplicate(kept);
    counts.duplicates_dropped = dedup.dropped;
    counts.label_conflicts = dedup.label_conflicts;
    counts.output = dedup.samples.len();
    Ok((Corpus::new(dedup.samples, provenance)?, counts))
}

#[derive(Debug, Clone)]
pub struct Merged {
    pub corpus: Corpus,
    pub duplicates_dropped: usize,
    pub label_conflicts: usize,
    pub ids_renamed: usize,
}

/// Concatenates corpora in argument order and deduplicates. Colliding ids
/// are re-namespaced by source, never rejected.
pub fn merge(corpora: &[Corpus]) -> Result<Merged> {
    let all: Vec<TextSample> = corpora.iter().flat_map(|c| c.samples.iter().cloned()).collect();
    let provenance = corpora.iter().flat_map(|c| c.provenance.iter().cloned()).collect();
    let dedup = deduplicate(all);

    let mut seen: HashSet<String> = HashSet::with_capacity(dedup.samples.len());
    let mut renamed = 0;
    let mut samples = Vec::with_capacity(dedup.samples.len());
    for mut s in dedup.samples {
        if seen.contains(&s.id) {
            let base = format!("{}:{}", s.source.namespace(), s.id);
            let mut candidate = base.clone();
            let mut n = 1;
            while seen.contains(&candidate) {
                candidate = format!("{base}#{n}");
                n += 1;
            }
            s.id = candidate;
            renamed += 1;
        }
        seen.insert(s.id.clone());
        samples.push(s);
    }
    Ok(Merged {
        corpus: Corpus::new(samples, provenance)?,
        duplicates_dropped: dedup.dropped,
        label_conflicts: dedup.label_conflicts,
        ids_renamed: renamed,
    })
}

/// One language's prepared corpus with per-stage counts.
#[derive(Debug, Clone)]
pub struct PreparedLanguage {
    pub language: Language,
    pub corpus: Corpus,
    pub mlma: PipelineCounts,
    pub conan: PipelineCounts,
    /// Texts present in both sources, dropped by the merge.
    pub merge_duplicates: usize,
    pub merge_label_conflicts: usize,
    pub ids_renamed: usize,
}

impl PreparedLanguage {
    /// Samples entering the pipeline from both sources.
    pub fn input(&self) -> usize {
        self.mlma.input + self.conan.input
    }

    /// Samples surviving normalization and marker filtering, before any
    /// deduplication.
    pub fn after_filter(&self) -> usize {
        self.mlma.after_filter + self.conan.after_filter
    }

    /// Fraction of input samples removed overall.
    pub fn shrinkage(&self) -> f64 {
        match self.input() {
            0 => 0.0,
            n => 1.0 - self.corpus.len() as f64 / n as f64,
        }
    }

    /// Fraction of post-filter samples removed as duplicates.
    pub fn dedup_shrinkage(&self) -> f64 {
        match self.after_filter() {
            0 => 0.0,
            n => 1.0 - self.corpus.len() as f64 / n as f64,
        }
    }
}

/// Prepares MLMA records and CONAN samples of one language separately, then
/// merges them (MLMA first). Records of other languages are ignored.
pub fn prepare_language(
    language: Language,
    mlma: &[RawMlmaRecord],
    conan: &[TextSample],
    provenance: &[String],
) -> Result<PreparedLanguage> {
    let records: Vec<RawMlmaRecord> = mlma.iter().filter(|r| r.language == language).cloned().collect();
    let (mlma_samples, empty) = mlma_samples(&records)?;
    let (mlma_corpus, mut mlma_counts) = prepare_source(mlma_samples, provenance.to_vec())?;
    mlma_counts.input += empty;
    mlma_counts.empty_after_normalize += empty;

    let conan_samples: Vec<TextSample> = conan.iter().filter(|s| s.language == language).cloned().collect();
    let (conan_corpus, conan_counts) = prepare_source(conan_samples, Vec::new())?;

    let merged = merge(&[mlma_corpus, conan_corpus])?;
    Ok(PreparedLanguage {
        language,
        corpus: merged.corpus,
        mlma: mlma_counts,
        conan: conan_counts,
        merge_duplicates: merged.duplicates_dropped,
        merge_label_conflicts: merged.label_conflicts,
        ids_renamed: merged.ids_renamed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_parts: u32,
    pub val_parts: u32,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_parts: 3,
            val_parts: 1,
            seed: 0,
            stratified: true,
        }
    }
}

/// Train counts per stratum: floors of the exact shares, with the
/// remainder needed to reach round(N · train / total) handed to the strata
/// with the largest fractional parts (earlier stratum wins ties).
fn train_counts(sizes: &[usize], spec: &SplitSpec) -> Vec<usize> {
    let parts = (spec.train_parts + spec.val_parts) as u128;
    let train = spec.train_parts as u128;
    let n: u128 = sizes.iter().map(|&s| s as u128).sum();
    let target = ((2 * n * train + parts) / (2 * parts)) as usize;
    let mut counts: Vec<usize> = sizes.iter().map(|&s| (s as u128 * train / parts) as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // remainder of s·train/parts, compared as integers
    order.sort_by_key(|&i| std::cmp::Reverse(sizes[i] as u128 * train % parts));
    let mut missing = target.saturating_sub(counts.iter().sum());
    for i in order {
        if missing == 0 {
            break;
        }
        if !(sizes[i] as u128 * train).is_multiple_of(parts) {
            counts[i] += 1;
            missing -= 1;
        }
    }
    counts
}

/// Deterministic seeded train/validation split. Both outputs keep the
/// input's relative order.
pub fn split_train_val(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
    if spec.train_parts == 0 || spec.val_parts == 0 {
        return Err(Error::Config("split parts must be positive".into()));
    }
    let min = (spec.train_parts + spec.val_parts) as usize;
    if corpus.len() < min {
        return Err(Error::Data(format!(
            "corpus of {} samples is smaller than {}+{} parts",
            corpus.len(),
            spec.train_parts,
            spec.val_parts
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let strata: Vec<Vec<usize>> = if spec.stratified {
        let mut by_class = vec![Vec::new(), Vec::new()];
        for (i, s) in corpus.samples.iter().enumerate() {
            by_class[s.label.index()].push(i);
        }
        if by_class.iter().any(Vec::is_empty) {
            return Err(Error::Data("stratified split needs both classes present".into()));
        }
        by_class
    } else {
        vec![(0..corpus.len()).collect()]
    };

    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let counts = train_counts(&sizes, spec);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (mut stratum, k) in strata.into_iter().zip(counts) {
        stratum.shuffle(&mut rng);
        train.extend_from_slice(&stratum[..k]);
        val.extend_from_slice(&stratum[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((corpus.select(&train), corpus.select(&val)))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_total: usize,
    /// Indexed by label: `[not_hateful, hateful]`.
    pub n_per_class: [usize; 2],
    pub n_per_language: BTreeMap<Language, usize>,
    pub token_length_histogram: BTreeMap<usize, usize>,
}

impl DatasetStats {
    /// Elementwise sum; the stats of two disjoint corpora combined.
    pub fn combine(&self, other: &DatasetStats) -> DatasetStats {
        let mut out = self.clone();
        out.n_total += other.n_total;
        out.n_per_class[0] += other.n_per_class[0];
        out.n_per_class[1] += other.n_per_class[1];
        for (l, n) in &other.n_per_language {
            *out.n_per_language.entry(*l).or_insert(0) += n;
        }
        for (len, n) in &other.token_length_histogram {
            *out.token_length_histogram.entry(*len).or_insert(0) += n;
        }
        out
    }
}

pub fn compute_stats<T: Tokenize + ?Sized>(corpus: &Corpus, tokenizer: &T) -> DatasetStats {
    let mut stats = DatasetStats::default();
    for s in &corpus.samples {
        stats.n_total += 1;
        stats.n_per_class[s.label.index()] += 1;
        *stats.n_per_language.entry(s.language).or_insert(0) += 1;
        let len = tokenizer.tokenize(&s.text).len();
        *stats.token_length_histogram.entry(len).or_insert(0) += 1;
    }
    stats
}

/// Per-class loss multipliers, indexed by label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f64; 2]);

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights([1.0, 1.0]);

    pub fn new(w: [f64; 2]) -> Result<Self> {
        if w.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(ClassWeights(w))
        } else {
            Err(Error::Config(format!(
                "class weights must be finite and positive, got {w:?}"
            )))
        }
    }

    pub fn get(&self, label: Label) -> f64 {
        self.0[label.index()]
    }
}

/// Balanced inverse-frequency weights `N / (2 · n_c)`.
pub fn compute_class_weights(stats: &DatasetStats) -> Result<ClassWeights> {
    let [n0, n1] = stats.n_per_class;
    if n0 == 0 || n1 == 0 {
        return Err(Error::Config(format!(
            "cannot weight classes with counts {n0}/{n1}; disable class weighting for this data"
        )));
    }
    let n = (n0 + n1) as f64;
    ClassWeights::new([n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)])
}
