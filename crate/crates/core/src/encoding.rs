//! Tokenization, padding, pooled features and the on-disk feature cache.
//!
//! The backbone is frozen, so pooled features are constants of training:
//! they are computed once per (corpus, encoder configuration) and cached.
//! Two encoders exist. [`StubEncoder`] is a deterministic hash-embedding
//! encoder needing no model artifacts; [`BackboneAdapter`] serves pooled
//! vectors exported by a real pretrained backbone's own toolchain.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::digest::{sha256_hex, FieldHasher};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    WhitespaceStub,
    BackboneAdapter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub kind: TokenizerKind,
    pub vocab_size: u32,
    pub pad_id: u32,
    pub unk_id: u32,
    pub bos_id: u32,
}

impl TokenizerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.pad_id == self.unk_id {
            return Err(Error::Config("pad_id and unk_id must differ".into()));
        }
        let max = self.pad_id.max(self.unk_id).max(self.bos_id);
        if max >= self.vocab_size {
            return Err(Error::Config(format!(
                "special token id {max} outside vocabulary of {}",
                self.vocab_size
            )));
        }
        Ok(())
    }
}

pub trait Tokenize {
    fn spec(&self) -> &TokenizerSpec;
    fn tokenize(&self, text: &str) -> Vec<u32>;
}

/// Splits on whitespace and hashes each word (FNV-1a, 64 bit) into the ids
/// above the three reserved specials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WhitespaceTokenizer {
    spec: TokenizerSpec,
}

impl WhitespaceTokenizer {
    pub const RESERVED: u32 = 3;

    pub fn new(vocab_size: u32) -> Result<Self> {
        if vocab_size <= Self::RESERVED {
            return Err(Error::Config(format!("vocabulary of {vocab_size} leaves no word ids")));
        }
        let spec = TokenizerSpec {
            kind: TokenizerKind::WhitespaceStub,
            vocab_size,
            pad_id: 0,
            unk_id: 1,
            bos_id: 2,
        };
        spec.validate()?;
        Ok(Self { spec })
    }

    fn word_id(&self, word: &str) -> u32 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in word.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        Self::RESERVED + (h % u64::from(self.spec.vocab_size - Self::RESERVED)) as u32
    }
}

impl Default for WhitespaceTokenizer {
    fn default() -> Self {
        Self::new(30_000).expect("default vocabulary is valid")
    }
}

impl Tokenize for WhitespaceTokenizer {
    fn spec(&self) -> &TokenizerSpec {
        &self.spec
    }

    fn tokenize(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|w| self.word_id(w)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub backbone_id: String,
    pub d_model: usize,
    pub max_seq_len: usize,
    #[serde(default)]
    pub seed: u64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model < 2 {
            return Err(Error::Config(format!(
                "d_model must be at least 2, got {}",
                self.d_model
            )));
        }
        if self.max_seq_len == 0 {
            return Err(Error::Config("max_seq_len must be positive".into()));
        }
        Ok(())
    }
}

/// Smallest length covering at least `coverage` of the samples, clamped
/// into `[lower, upper]`.
pub fn choose_max_seq_len(
    histogram: &BTreeMap<usize, usize>,
    lower: usize,
    upper: usize,
    coverage: f64,
) -> Result<usize> {
    if lower > upper {
        return Err(Error::Config(format!("bounds [{lower}, {upper}] are inverted")));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::Config(format!("coverage {coverage} outside (0, 1]")));
    }
    let total: usize = histogram.values().sum();
    if total == 0 {
        return Err(Error::Data("empty length histogram".into()));
    }
    let needed = coverage * total as f64;
    let mut cumulative = 0usize;
    let mut chosen = *histogram.keys().next_back().expect("non-empty");
    for (&len, &count) in histogram {
        cumulative += count;
        if cumulative as f64 >= needed {
            chosen = len;
            break;
        }
    }
    Ok(chosen.clamp(lower, upper))
}

/// Fixed-width token ids with attention mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    pub max_seq_len: usize,
    pub pad_id: u32,
    pub ids: Vec<Vec<u32>>,
    pub mask: Vec<Vec<u8>>,
    /// Token counts before truncation and padding.
    pub lengths: Vec<usize>,
}

impl TokenBatch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Checks the mask/padding invariant for every row.
    pub fn validate(&self) -> Result<()> {
        if self.mask.len() != self.ids.len() || self.lengths.len() != self.ids.len() {
            return Err(Error::Data("token batch rows misaligned".into()));
        }
        for (i, (ids, mask)) in self.ids.iter().zip(&self.mask).enumerate() {
            if ids.len() != self.max_seq_len || mask.len() != self.max_seq_len {
                return Err(Error::Data(format!("row {i} has wrong width")));
            }
            let live = self.lengths[i].min(self.max_seq_len);
            for j in 0..self.max_seq_len {
                let expect = u8::from(j < live);
                if mask[j] != expect || (expect == 0 && ids[j] != self.pad_id) {
                    return Err(Error::Data(format!("row {i} violates mask invariant at {j}")));
                }
            }
        }
        Ok(())
    }
}

/// Tokenizes, truncates at `max_seq_len` and right-pads with `pad_id`.
/// A text yielding no tokens becomes a single `unk_id` of length 1.
pub fn encode_batch<T: Tokenize + ?Sized>(texts: &[&str], tokenizer: &T, max_seq_len: usize) -> TokenBatch {
    let spec = tokenizer.spec();
    let mut batch = TokenBatch {
        max_seq_len,
        pad_id: spec.pad_id,
        ids: Vec::with_capacity(texts.len()),
        mask: Vec::with_capacity(texts.len()),
        lengths: Vec::with_capacity(texts.len()),
    };
    for text in texts {
        let mut tokens = tokenizer.tokenize(text);
        if tokens.is_empty() {
            tokens.push(spec.unk_id);
        }
        let live = tokens.len().min(max_seq_len);
        let mut ids = vec![spec.pad_id; max_seq_len];
        ids[..live].copy_from_slice(&tokens[..live]);
        let mut mask = vec![0u8; max_seq_len];
        mask[..live].fill(1);
        batch.lengths.push(tokens.len());
        batch.ids.push(ids);
        batch.mask.push(mask);
    }
    batch
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Component `dim` of the stub embedding of `token_id`, uniform in [-1, 1).
///
/// `h = mix(mix(mix(seed) ^ token_id) ^ dim)` with the SplitMix64
/// finalizer as `mix`; the top 53 bits of `h` give `u ∈ [0, 1)` and the
/// result is `2u - 1`.
pub fn stub_embedding(token_id: u32, dim: usize, seed: u64) -> f64 {
    let h = mix64(mix64(mix64(seed) ^ u64::from(token_id)) ^ dim as u64);
    let unit = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * unit - 1.0
}

/// A frozen text encoder producing one pooled vector per text.
pub trait Encoder: Sync {
    fn config(&self) -> &EncoderConfig;

    /// Digest of everything that determines the encoder's outputs.
    fn fingerprint(&self) -> [u8; 32];

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

/// Mean of hashed per-token embeddings over the unmasked positions.
pub struct StubEncoder {
    config: EncoderConfig,
    tokenizer: WhitespaceTokenizer,
}

impl StubEncoder {
    pub fn new(config: EncoderConfig, tokenizer: WhitespaceTokenizer) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, tokenizer })
    }

    /// Parses backbone ids of the form `stub-<d_model>`.
    pub fn from_backbone_id(backbone_id: &str, max_seq_len: usize, seed: u64) -> Result<Self> {
        let d_model = backbone_id
            .strip_prefix("stub-")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::Config(format!("{backbone_id:?} is not a stub backbone id (stub-<d>)")))?;
        Self::new(
            EncoderConfig {
                backbone_id: backbone_id.to_string(),
                d_model,
                max_seq_len,
                seed,
            },
            WhitespaceTokenizer::default(),
        )
    }

    pub fn tokenizer(&self) -> &WhitespaceTokenizer {
        &self.tokenizer
    }

    pub fn pooled_features(&self, batch: &TokenBatch) -> Result<Vec<Vec<f32>>> {
        if batch.max_seq_len != self.config.max_seq_len {
            return Err(Error::Config(format!(
                "batch width {} differs from encoder max_seq_len {}",
                batch.max_seq_len, self.config.max_seq_len
            )));
        }
        let d = self.config.d_model;
        let seed = self.config.seed;
        Ok(batch
            .ids
            .iter()
            .zip(&batch.mask)
            .map(|(ids, mask)| {
                let mut acc = vec![0.0f64; d];
                let mut n = 0usize;
                for (&id, &m) in ids.iter().zip(mask) {
                    if m == 1 {
                        n += 1;
                        for (k, a) in acc.iter_mut().enumerate() {
                            *a += stub_embedding(id, k, seed);
                        }
                    }
                }
                let n = n.max(1) as f64;
                acc.iter().map(|a| (a / n) as f32).collect()
            })
            .collect())
    }
}

impl Encoder for StubEncoder {
    fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn fingerprint(&self) -> [u8; 32] {
        let mut h = FieldHasher::new();
        h.field(b"stub")
            .field(self.config.backbone_id.as_bytes())
            .field(&(self.config.d_model as u64).to_le_bytes())
            .field(&(self.config.max_seq_len as u64).to_le_bytes())
            .field(&self.config.seed.to_le_bytes())
            .field(
                serde_json::to_string(self.tokenizer.spec())
                    .expect("spec serializes")
                    .as_bytes(),
            );
        h.finish_raw()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let batch = encode_batch(texts, &self.tokenizer, self.config.max_seq_len);
        self.pooled_features(&batch)
    }
}

/// Serves pooled first-position vectors exported by a pretrained backbone.
///
/// The adapter directory holds `encoder.json` (an [`EncoderConfig`]) and
/// `pooled.jsonl`, one `{"text": ..., "vector": [...]}` object per line,
/// written by the backbone's own tokenizer and model with inputs truncated
/// at `max_seq_len`. Texts are matched after normalization.
pub struct BackboneAdapter {
    config: EncoderConfig,
    vectors: HashMap<String, Vec<f32>>,
    table_digest: String,
}

#[derive(Deserialize)]
struct PooledRow {
    text: String,
    vector: Vec<f32>,
}

impl BackboneAdapter {
    pub const CONFIG_FILE: &'static str = "encoder.json";
    pub const TABLE_FILE: &'static str = "pooled.jsonl";

    pub fn open(dir: &Path) -> Result<Self> {
        let config_path = dir.join(Self::CONFIG_FILE);
        let table_path = dir.join(Self::TABLE_FILE);
        for p in [&config_path, &table_path] {
            if !p.is_file() {
                return Err(Error::Capability {
                    artifact: p.display().to_string(),
                });
            }
        }
        let config: EncoderConfig =
            serde_json::from_slice(&std::fs::read(&config_path).map_err(|e| Error::io(&config_path, e))?)?;
        config.validate()?;
        let bytes = std::fs::read(&table_path).map_err(|e| Error::io(&table_path, e))?;
        let mut vectors = HashMap::new();
        for (i, line) in BufReader::new(bytes.as_slice()).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&table_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: PooledRow = serde_json::from_str(&line)?;
            if row.vector.len() != config.d_model || row.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!(
                    "{} line {}: vector must hold {} finite values",
                    table_path.display(),
                    i + 1,
                    config.d_model
                )));
            }
            let key = crate::corpus::normalize(&row.text).unwrap_or_default();
            vectors.insert(key, row.vector);
        }
        Ok(Self {
            config,
            vectors,
            table_digest: sha256_hex(&bytes),
        })
    }

    pub fn dir_for(root: &Path, backbone_id: &str) -> PathBuf {
        root.join(backbone_id)
    }
}

impl Encoder for BackboneAdapter {
    fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn fingerprint(&self) -> [u8; 32] {
        let mut h = FieldHasher::new();
        h.field(b"adapter")
            .field(
                serde_json::to_string(&self.config)
                    .expect("config serializes")
                    .as_bytes(),
            )
            .field(self.table_digest.as_bytes());
        h.finish_raw()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        texts
            .iter()
            .map(|t| {
                self.vectors.get(*t).cloned().ok_or_else(|| Error::Capability {
                    artifact: format!("pooled vector for text {t:?} in {}", Self::TABLE_FILE),
                })
            })
            .collect()
    }
}

/// Resolves a backbone id: `stub-<d>` gives the stub encoder, anything
/// else is looked up as an adapter directory below `adapters`.
pub fn open_encoder(
    backbone_id: &str,
    max_seq_len: usize,
    seed: u64,
    adapters: Option<&Path>,
) -> Result<Box<dyn Encoder>> {
    if backbone_id.starts_with("stub-") {
        return Ok(Box::new(StubEncoder::from_backbone_id(backbone_id, max_seq_len, seed)?));
    }
    match adapters {
        Some(root) => Ok(Box::new(BackboneAdapter::open(&BackboneAdapter::dir_for(
            root,
            backbone_id,
        ))?)),
        None => Err(Error::Capability {
            artifact: format!("adapter directory for backbone {backbone_id:?} (no adapter root configured)"),
        }),
    }
}

/// Row-major pooled features aligned with sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    d_model: usize,
    data: Vec<f32>,
    sample_ids: Vec<String>,
    fingerprint: [u8; 32],
}

impl FeatureMatrix {
    pub fn new(d_model: usize, rows: Vec<Vec<f32>>, sample_ids: Vec<String>, fingerprint: [u8; 32]) -> Result<Self> {
        if rows.len() != sample_ids.len() {
            return Err(Error::Data(format!("{} rows for {} ids", rows.len(), sample_ids.len())));
        }
        let mut data = Vec::with_capacity(rows.len() * d_model);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d_model {
                return Err(Error::Data(format!("row {i} has width {} != {d_model}", r.len())));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("row {i} holds a non-finite feature")));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            d_model,
            data,
            sample_ids,
            fingerprint,
        })
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn n_rows(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d_model..(i + 1) * self.d_model]
    }

    /// Row `i` widened to f64 for the head.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&x| f64::from(x)).collect()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn fingerprint_hex(&self) -> String {
        hex::encode(self.fingerprint)
    }

    /// Encodes the cache file. Layout (all integers little-endian):
    ///
    /// | offset | size | field |
    /// |---|---|---|
    /// | 0 | 8 | magic `XHFCACHE` |
    /// | 8 | 4 | version (u32) = 1 |
    /// | 12 | 32 | encoder fingerprint (SHA-256) |
    /// | 44 | 4 | d_model (u32) |
    /// | 48 | 8 | row count n (u64) |
    /// | 56 | 4·n·d_model | features, row-major f32 |
    /// | … | … | id index: per row a u32 byte length then UTF-8 id |
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(56 + 4 * self.data.len() + 16 * self.sample_ids.len());
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint);
        out.extend_from_slice(&(self.d_model as u32).to_le_bytes());
        out.extend_from_slice(&(self.sample_ids.len() as u64).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for id in &self.sample_ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    /// Decodes a cache file without checking its fingerprint.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != CACHE_MAGIC {
            return Err(Error::Data("not a feature cache (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CACHE_VERSION {
            return Err(Error::Data(format!("unsupported cache version {version}")));
        }
        let fingerprint: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let d_model = r.u32()? as usize;
        let n = usize::try_from(r.u64()?).map_err(|_| Error::Data("row count overflow".into()))?;
        let n_values = n
            .checked_mul(d_model)
            .ok_or_else(|| Error::Data("feature count overflow".into()))?;
        let raw = r.take(
            n_values
                .checked_mul(4)
                .ok_or_else(|| Error::Data("size overflow".into()))?,
        )?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let mut sample_ids = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Data("sample id is not UTF-8".into()))?;
            sample_ids.push(id.to_string());
        }
        if r.pos != bytes.len() {
            return Err(Error::Data("trailing bytes after id index".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("cache holds a non-finite feature".into()));
        }
        Ok(Self {
            d_model,
            data,
            sample_ids,
            fingerprint,
        })
    }

    /// Rows reordered by `order` (row i of the result is row `order[i]`).
    pub fn permuted(&self, order: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(order.len() * self.d_model);
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            d_model: self.d_model,
            data,
            sample_ids: order.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            fingerprint: self.fingerprint,
        }
    }
}

const CACHE_MAGIC: &[u8; 8] = b"XHFCACHE";
const CACHE_VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Data("feature cache truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Encodes every sample of `corpus` with the frozen encoder.
pub fn build_feature_cache<E: Encoder + ?Sized>(corpus: &Corpus, encoder: &E) -> Result<FeatureMatrix> {
    let texts = corpus.texts();
    let rows = encoder.embed(&texts)?;
    FeatureMatrix::new(encoder.config().d_model, rows, corpus.ids(), encoder.fingerprint())
}

pub fn write_cache(path: &Path, features: &FeatureMatrix) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, features.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads a cache, refusing one written under a different fingerprint.
pub fn load_cache(path: &Path, expected_fingerprint: &[u8; 32]) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let features = FeatureMatrix::from_bytes(&bytes)?;
    if &features.fingerprint != expected_fingerprint {
        return Err(Error::StaleCache {
            path: path.to_path_buf(),
            expected: hex::encode(expected_fingerprint),
            found: features.fingerprint_hex(),
        });
    }
    Ok(features)
}

/// Reuses the cache at `path` when its fingerprint and id list match the
/// corpus; otherwise recomputes and rewrites it.
pub fn load_or_build<E: Encoder + ?Sized>(path: &Path, corpus: &Corpus, encoder: &E) -> Result<FeatureMatrix> {
    if path.is_file() {
        match load_cache(path, &encoder.fingerprint()) {
            Ok(f) if f.sample_ids == corpus.ids() => return Ok(f),
            Ok(_) => log::info!("{}: corpus changed, recomputing features", path.display()),
            Err(e) => log::info!("{}: {e}; recomputing features", path.display()),
        }
    }
    let features = build_feature_cache(corpus, encoder)?;
    write_cache(path, &features)?;
    Ok(features)
}

/// SHA-256 of a cache file's bytes.
pub fn cache_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}
