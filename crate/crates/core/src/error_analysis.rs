//! Misclassification analysis: surface-feature tagging, per-category
//! aggregation and run-to-run comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label, Language};
use crate::error::{Error, Result};

/// Lowercased alphanumeric word sequence; anything else separates words.
fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A named set of lowercase, single-spaced phrases for one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub name: String,
    pub language: Language,
    entries: BTreeSet<String>,
}

impl Lexicon {
    pub fn new<I, S>(name: &str, language: Language, entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let entries = entries
            .into_iter()
            .map(|e| {
                e.as_ref()
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" ")
                    .to_lowercase()
            })
            .filter(|e| !e.is_empty())
            .collect();
        Self {
            name: name.to_string(),
            language,
            entries,
        }
    }

    /// One phrase per line; blank lines and `#` comments are skipped.
    pub fn parse(name: &str, language: Language, text: &str) -> Self {
        let lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Self::new(name, language, lines)
    }

    pub fn load(path: &Path, name: &str, language: Language) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(name, language, &text))
    }

    pub fn entries(&self) -> &BTreeSet<String> {
        &self.entries
    }

    pub fn insert(&mut self, phrase: &str) {
        let l = Lexicon::new("", self.language, [phrase]);
        self.entries.extend(l.entries);
    }

    /// Number of (entry, position) matches on word boundaries.
    pub fn hit_count(&self, text: &str) -> usize {
        let text_words = words(text);
        self.entries
            .iter()
            .map(|e| {
                let phrase = words(e);
                if phrase.is_empty() || phrase.len() > text_words.len() {
                    return 0;
                }
                text_words
                    .windows(phrase.len())
                    .filter(|w| *w == phrase.as_slice())
                    .count()
            })
            .sum()
    }

    pub fn hits(&self, text: &str) -> bool {
        self.hit_count(text) > 0
    }
}

/// Ethnic and political lexicons per language.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lexicons {
    pub ethnic: BTreeMap<Language, Lexicon>,
    pub political: BTreeMap<Language, Lexicon>,
}

const BUILTIN: [(&str, Language, &str); 4] = [
    ("ethnic", Language::En, include_str!("../lexicons/ethnic_en.txt")),
    ("ethnic", Language::Fr, include_str!("../lexicons/ethnic_fr.txt")),
    ("political", Language::En, include_str!("../lexicons/political_en.txt")),
    ("political", Language::Fr, include_str!("../lexicons/political_fr.txt")),
];

impl Lexicons {
    pub fn builtin() -> Self {
        let mut out = Self::default();
        for (name, lang, text) in BUILTIN {
            out.insert(Lexicon::parse(name, lang, text));
        }
        out
    }

    /// Built-in lexicons, with any `{ethnic,political}_{en,fr}.txt` found in
    /// `dir` replacing its built-in counterpart.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Config(format!("lexicon directory {} not found", dir.display())));
        }
        let mut out = Self::builtin();
        for (name, lang, _) in BUILTIN {
            let path = dir.join(format!("{name}_{}.txt", lang.code()));
            if path.is_file() {
                out.insert(Lexicon::load(&path, name, lang)?);
            }
        }
        Ok(out)
    }

    pub fn insert(&mut self, lexicon: Lexicon) {
        let map = if lexicon.name == "political" {
            &mut self.political
        } else {
            &mut self.ethnic
        };
        map.insert(lexicon.language, lexicon);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    /// `short_lt10_words` holds below this many words.
    pub short_below: usize,
    /// `long_ge25_words` holds at or above this many words.
    pub long_at_least: usize,
    pub conditional_markers: BTreeMap<Language, Vec<String>>,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        let mut markers = BTreeMap::new();
        markers.insert(Language::En, vec!["if".to_string(), "unless".to_string()]);
        markers.insert(
            Language::Fr,
            vec!["si".to_string(), "s'il".to_string(), "s'ils".to_string()],
        );
        Self {
            short_below: 10,
            long_at_least: 25,
            conditional_markers: markers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Interrogative,
    Exclamatory,
    Conditional,
    ShortLt10Words,
    LongGe25Words,
    ContainsNumeral,
    EndsEllipsis,
    EthnicLexiconHit,
    PoliticalLexiconHit,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Interrogative,
        Category::Exclamatory,
        Category::Conditional,
        Category::ShortLt10Words,
        Category::LongGe25Words,
        Category::ContainsNumeral,
        Category::EndsEllipsis,
        Category::EthnicLexiconHit,
        Category::PoliticalLexiconHit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Interrogative => "interrogative",
            Category::Exclamatory => "exclamatory",
            Category::Conditional => "conditional",
            Category::ShortLt10Words => "short_lt10_words",
            Category::LongGe25Words => "long_ge25_words",
            Category::ContainsNumeral => "contains_numeral",
            Category::EndsEllipsis => "ends_ellipsis",
            Category::EthnicLexiconHit => "ethnic_lexicon_hit",
            Category::PoliticalLexiconHit => "political_lexicon_hit",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureTagSet {
    pub interrogative: bool,
    pub exclamatory: bool,
    pub conditional: bool,
    pub short_lt10_words: bool,
    pub long_ge25_words: bool,
    pub contains_numeral: bool,
    pub ends_ellipsis: bool,
    pub ethnic_lexicon_hit: bool,
    pub political_lexicon_hit: bool,
    pub word_count: usize,
}

impl FeatureTagSet {
    pub fn has(&self, c: Category) -> bool {
        match c {
            Category::Interrogative => self.interrogative,
            Category::Exclamatory => self.exclamatory,
            Category::Conditional => self.conditional,
            Category::ShortLt10Words => self.short_lt10_words,
            Category::LongGe25Words => self.long_ge25_words,
            Category::ContainsNumeral => self.contains_numeral,
            Category::EndsEllipsis => self.ends_ellipsis,
            Category::EthnicLexiconHit => self.ethnic_lexicon_hit,
            Category::PoliticalLexiconHit => self.political_lexicon_hit,
        }
    }

    pub fn categories(&self) -> Vec<Category> {
        Category::ALL.into_iter().filter(|&c| self.has(c)).collect()
    }
}

/// Tags `text` with surface features. `language` is a language code; an
/// unknown code disables the lexicon and conditional checks.
pub fn tag_features(text: &str, language: &str, lexicons: &Lexicons, config: &TaggerConfig) -> FeatureTagSet {
    let lang: Option<Language> = language.parse().ok();
    if lang.is_none() {
        log::warn!("unknown language {language:?}: lexicon checks disabled");
    }
    let trimmed = text.trim_end();
    let last = trimmed.chars().last();
    let word_count = text.split_whitespace().count();
    let text_words = words(text);
    let conditional = lang
        .and_then(|l| config.conditional_markers.get(&l))
        .is_some_and(|markers| {
            markers.iter().any(|m| {
                let m = words(m);
                !m.is_empty() && text_words.windows(m.len()).any(|w| w == m.as_slice())
            })
        });
    let lexicon_hit =
        |map: &BTreeMap<Language, Lexicon>| lang.and_then(|l| map.get(&l)).is_some_and(|lex| lex.hits(text));
    FeatureTagSet {
        interrogative: last == Some('?'),
        exclamatory: last == Some('!'),
        conditional,
        short_lt10_words: word_count < config.short_below,
        long_ge25_words: word_count >= config.long_at_least,
        contains_numeral: text.chars().any(|c| c.is_ascii_digit()),
        ends_ellipsis: trimmed.ends_with("...") || trimmed.ends_with('…'),
        ethnic_lexicon_hit: lexicon_hit(&lexicons.ethnic),
        political_lexicon_hit: lexicon_hit(&lexicons.political),
        word_count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub sample_id: String,
    pub text: String,
    pub language: Language,
    pub gold: Label,
    pub predicted: Label,
    pub tags: FeatureTagSet,
}

/// Tagged records for every sample whose prediction disagrees with gold.
pub fn collect_errors(
    corpus: &Corpus,
    predicted: &[Label],
    lexicons: &Lexicons,
    config: &TaggerConfig,
) -> Result<Vec<ErrorRecord>> {
    if corpus.len() != predicted.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} samples",
            predicted.len(),
            corpus.len()
        )));
    }
    Ok(corpus
        .samples()
        .iter()
        .zip(predicted)
        .filter(|(s, &p)| s.label != p)
        .map(|(s, &p)| ErrorRecord {
            sample_id: s.id.clone(),
            text: s.text.clone(),
            language: s.language,
            gold: s.label,
            predicted: p,
            tags: tag_features(&s.text, s.language.code(), lexicons, config),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub run_id: String,
    /// Digest of the evaluated corpus; comparisons require equal digests.
    pub corpus_digest: String,
    pub total_evaluated: usize,
    pub total_errors: usize,
    /// Gold NOT_HATEFUL predicted HATEFUL.
    pub false_hateful: usize,
    /// Gold HATEFUL predicted NOT_HATEFUL.
    pub missed_hateful: usize,
    /// Records per category; categories overlap.
    pub category_counts: BTreeMap<Category, usize>,
    /// `[false_hateful, missed_hateful]` per category.
    pub category_directions: BTreeMap<Category, [usize; 2]>,
    pub samples: Vec<ErrorRecord>,
}

pub fn aggregate(run_id: &str, corpus_digest: &str, total_evaluated: usize, errors: &[ErrorRecord]) -> ErrorReport {
    let mut category_counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|&c| (c, 0)).collect();
    let mut category_directions: BTreeMap<Category, [usize; 2]> = Category::ALL.iter().map(|&c| (c, [0, 0])).collect();
    let mut false_hateful = 0;
    for r in errors {
        let direction = usize::from(r.gold == Label::Hateful);
        if direction == 0 {
            false_hateful += 1;
        }
        for c in r.tags.categories() {
            *category_counts.get_mut(&c).expect("all categories present") += 1;
            category_directions.get_mut(&c).expect("all categories present")[direction] += 1;
        }
    }
    ErrorReport {
        run_id: run_id.to_string(),
        corpus_digest: corpus_digest.to_string(),
        total_evaluated,
        total_errors: errors.len(),
        false_hateful,
        missed_hateful: errors.len() - false_hateful,
        category_counts,
        category_directions,
        samples: errors.to_vec(),
    }
}

impl ErrorReport {
    pub fn error_ids(&self) -> BTreeSet<String> {
        self.samples.iter().map(|r| r.sample_id.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "run {}: {} errors / {} evaluated",
            self.run_id, self.total_errors, self.total_evaluated
        );
        let _ = writeln!(out, "  false hateful  {}", self.false_hateful);
        let _ = writeln!(out, "  missed hateful {}", self.missed_hateful);
        let _ = writeln!(out, "{:<24}{:>8}{:>8}{:>8}", "category", "count", "false", "missed");
        for c in Category::ALL {
            let [f, m] = self.category_directions[&c];
            let _ = writeln!(out, "{:<24}{:>8}{:>8}{:>8}", c.name(), self.category_counts[&c], f, m);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub run_a: String,
    pub run_b: String,
    pub corpus_digest: String,
    pub errors_a: usize,
    pub errors_b: usize,
    /// `(errors_a − errors_b) / errors_a`; absent when run A made no errors.
    pub reduction: Option<f64>,
    /// Per-category count change from A to B.
    pub category_deltas: BTreeMap<Category, i64>,
    /// Wrong in B but not in A.
    pub newly_misclassified: BTreeSet<String>,
    /// Wrong in A but not in B.
    pub newly_correct: BTreeSet<String>,
}

/// Compares two error reports over the same evaluated corpus.
pub fn compare(a: &ErrorReport, b: &ErrorReport) -> Result<RunComparison> {
    if a.corpus_digest != b.corpus_digest {
        return Err(Error::DigestMismatch {
            what: format!("evaluated corpus of {} and {}", a.run_id, b.run_id),
            left: a.corpus_digest.clone(),
            right: b.corpus_digest.clone(),
        });
    }
    let (ids_a, ids_b) = (a.error_ids(), b.error_ids());
    let reduction =
        (a.total_errors > 0).then(|| (a.total_errors as f64 - b.total_errors as f64) / a.total_errors as f64);
    let category_deltas = Category::ALL
        .iter()
        .map(|c| {
            let get = |r: &ErrorReport| r.category_counts.get(c).copied().unwrap_or(0) as i64;
            (*c, get(b) - get(a))
        })
        .collect();
    Ok(RunComparison {
        run_a: a.run_id.clone(),
        run_b: b.run_id.clone(),
        corpus_digest: a.corpus_digest.clone(),
        errors_a: a.total_errors,
        errors_b: b.total_errors,
        reduction,
        category_deltas,
        newly_misclassified: ids_b.difference(&ids_a).cloned().collect(),
        newly_correct: ids_a.difference(&ids_b).cloned().collect(),
    })
}

impl RunComparison {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("comparison serializes");
        s.push('\n');
        s
    }
}

pub fn render_comparison(c: &RunComparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} -> {}", c.run_a, c.run_b);
    let _ = writeln!(out, "errors: {} -> {}", c.errors_a, c.errors_b);
    match c.reduction {
        Some(r) => {
            let _ = writeln!(out, "reduction: {:.2}%", r * 100.0);
        }
        None => {
            let _ = writeln!(out, "reduction: undefined (no errors in {})", c.run_a);
        }
    }
    let _ = writeln!(out, "{:<24}{:>8}", "category", "delta");
    for (cat, d) in &c.category_deltas {
        let _ = writeln!(out, "{:<24}{:>+8}", cat.name(), d);
    }
    let _ = writeln!(out, "newly misclassified: {}", c.newly_misclassified.len());
    for id in &c.newly_misclassified {
        let _ = writeln!(out, "  + {id}");
    }
    let _ = writeln!(out, "newly correct: {}", c.newly_correct.len());
    for id in &c.newly_correct {
        let _ = writeln!(out, "  - {id}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Source, TextSample};
    use proptest::prelude::*;

    fn tag(text: &str, lang: &str) -> FeatureTagSet {
        tag_features(text, lang, &Lexicons::builtin(), &TaggerConfig::default())
    }

    #[test]
    fn ethnic_question() {
        let t = tag("pourquoi les arabes sont-ils là ?", "fr");
        assert!(t.interrogative && t.ethnic_lexicon_hit);
        assert!(!t.political_lexicon_hit && !t.exclamatory);
    }

    #[test]
    fn political_short() {
        let t = tag("ce gauchiste ment", "fr");
        assert!(t.political_lexicon_hit && t.short_lt10_words);
        assert_eq!(t.word_count, 3);
        assert!(!t.long_ge25_words && !t.ethnic_lexicon_hit);
    }

    #[test]
    fn ellipsis_forms() {
        assert!(tag("je ne sais pas...", "fr").ends_ellipsis);
        assert!(tag("je ne sais pas…  ", "fr").ends_ellipsis);
        assert!(!tag("je ne sais pas.", "fr").ends_ellipsis);
    }

    #[test]
    fn conditional_markers_are_word_bounded() {
        assert!(tag("if they come back we leave", "en").conditional);
        assert!(!tag("a gift for them", "en").conditional);
        assert!(tag("s'il revient je pars", "fr").conditional);
        assert!(!tag("ainsi soit-il", "fr").conditional);
    }

    #[test]
    fn unknown_language_disables_lexicons() {
        let t = tag("les arabes ?", "ar");
        assert!(t.interrogative && !t.ethnic_lexicon_hit);
    }

    #[test]
    fn lexicon_parse_skips_comments_and_normalizes() {
        let l = Lexicon::parse("x", Language::Fr, "# c\n\n  Les   JUIFS \nfacho\n");
        assert_eq!(l.entries().iter().cloned().collect::<Vec<_>>(), ["facho", "les juifs"]);
        assert!(l.hits("ce sont les juifs"));
        assert!(!l.hits("fachos"));
    }

    fn sample(id: &str, text: &str, label: Label) -> TextSample {
        TextSample {
            id: id.into(),
            text: text.into(),
            language: Language::En,
            label,
            source: Source::Synthetic,
        }
    }

    fn corpus() -> Corpus {
        Corpus::new(
            vec![
                sample("a", "why are they here?", Label::Hateful),
                sample("b", "nice day", Label::NotHateful),
                sample("c", "what now?", Label::Hateful),
            ],
            vec!["test".into()],
        )
        .unwrap()
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let c = corpus();
        let (lx, cfg) = (Lexicons::builtin(), TaggerConfig::default());
        assert!(collect_errors(&c, &c.labels(), &lx, &cfg).unwrap().is_empty());
        let errs = collect_errors(&c, &[Label::NotHateful; 3], &lx, &cfg).unwrap();
        assert_eq!(
            errs.iter().map(|e| e.sample_id.as_str()).collect::<Vec<_>>(),
            ["a", "c"]
        );
        assert!(collect_errors(&c, &[Label::NotHateful; 2], &lx, &cfg).is_err());
        let r = aggregate("r", "d", 3, &errs);
        assert_eq!(r.category_counts[&Category::Interrogative], 2);
        assert_eq!((r.false_hateful, r.missed_hateful), (0, 2));
    }

    #[test]
    fn empty_report_is_zero() {
        let r = aggregate("r", "d", 0, &[]);
        assert_eq!(r.total_errors, 0);
        assert!(r.category_counts.values().all(|&v| v == 0));
    }

    fn report_with(n: usize, run: &str) -> ErrorReport {
        let errs: Vec<ErrorRecord> = (0..n)
            .map(|i| ErrorRecord {
                sample_id: format!("s{i}"),
                text: "x".into(),
                language: Language::En,
                gold: Label::Hateful,
                predicted: Label::NotHateful,
                tags: FeatureTagSet::default(),
            })
            .collect();
        aggregate(run, "digest", 1000, &errs)
    }

    #[test]
    fn reduction_formula_and_sets() {
        let c = compare(&report_with(497, "a"), &report_with(286, "b")).unwrap();
        assert!((c.reduction.unwrap() - 211.0 / 497.0).abs() < 1e-12);
        assert!((c.reduction.unwrap() - 0.4245).abs() < 1e-4);
        assert_eq!(c.newly_correct.len(), 211);
        assert!(c.newly_misclassified.is_empty());
        let same = compare(&report_with(5, "a"), &report_with(5, "b")).unwrap();
        assert_eq!(same.reduction, Some(0.0));
        assert!(same.newly_correct.is_empty() && same.newly_misclassified.is_empty());
        assert!(
            compare(&report_with(3, "a"), &report_with(5, "b"))
                .unwrap()
                .reduction
                .unwrap()
                < 0.0
        );
        assert_eq!(
            compare(&report_with(0, "a"), &report_with(5, "b")).unwrap().reduction,
            None
        );
    }

    #[test]
    fn digest_mismatch_refused() {
        let mut b = report_with(2, "b");
        b.corpus_digest = "other".into();
        assert!(matches!(
            compare(&report_with(2, "a"), &b),
            Err(Error::DigestMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn antisymmetry(ea in 1usize..300, eb in 1usize..300) {
            let (a, b) = (report_with(ea, "a"), report_with(eb, "b"));
            let ab = compare(&a, &b).unwrap().reduction.unwrap();
            let ba = compare(&b, &a).unwrap().reduction.unwrap();
            prop_assert!((ab - (-ba * eb as f64 / ea as f64)).abs() < 1e-12);
        }

        #[test]
        fn tagging_invariants(words in proptest::collection::vec("[a-z0-9?!.]{1,6}", 0..40)) {
            let text = words.join(" ");
            let t = tag(&text, "en");
            prop_assert_eq!(t, tag(&text, "en"));
            prop_assert_eq!(t.short_lt10_words, t.word_count < 10);
            prop_assert_eq!(t.long_ge25_words, t.word_count >= 25);
            prop_assert_eq!(t.contains_numeral, text.chars().any(|c| c.is_ascii_digit()));
        }

        #[test]
        fn lexicon_monotone(extra in "[a-z]{1,5}( [a-z]{1,5})?", text in "[a-z ]{0,60}") {
            let mut lex = Lexicon::parse("ethnic", Language::En, "arab\nthe jews\n");
            let before = lex.hit_count(&text);
            lex.insert(&extra);
            prop_assert!(lex.hit_count(&text) >= before);
        }

        #[test]
        fn directions_partition(flags in proptest::collection::vec(any::<bool>(), 0..50)) {
            let errs: Vec<ErrorRecord> = flags.iter().enumerate().map(|(i, &h)| ErrorRecord {
                sample_id: i.to_string(),
                text: "t?".into(),
                language: Language::En,
                gold: if h { Label::Hateful } else { Label::NotHateful },
                predicted: if h { Label::NotHateful } else { Label::Hateful },
                tags: tag("t?", "en"),
            }).collect();
            let r = aggregate("r", "d", 100, &errs);
            prop_assert_eq!(r.false_hateful + r.missed_hateful, r.total_errors);
            prop_assert!(r.category_counts.values().all(|&v| v <= r.total_errors));
        }
    }
}
