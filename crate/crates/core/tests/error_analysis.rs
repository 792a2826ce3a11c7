use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use xhate::corpus::{Corpus, Label, Language, Source, TextSample};
use xhate::error_analysis::*;

#[derive(Deserialize)]
struct Tagged {
    text: String,
    language: String,
    tags: FeatureTagSet,
}

fn tagged_fixture() -> Vec<Tagged> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tagged_sentences.jsonl");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn hand_labelled_sentences() {
    let (lex, cfg) = (Lexicons::builtin(), TaggerConfig::default());
    let rows = tagged_fixture();
    assert_eq!(rows.len(), 25);
    for r in rows {
        assert_eq!(tag_features(&r.text, &r.language, &lex, &cfg), r.tags, "{}", r.text);
    }
}

#[test]
fn thresholds_are_configurable() {
    let cfg = TaggerConfig {
        short_below: 4,
        long_at_least: 5,
        ..TaggerConfig::default()
    };
    let t = tag_features("one two three four five", "en", &Lexicons::builtin(), &cfg);
    assert!(!t.short_lt10_words && t.long_ge25_words);
}

#[test]
fn lexicon_directory_overrides_builtin() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("political_en.txt"), "# custom\ngreens\n").unwrap();
    let lex = Lexicons::load_dir(dir.path()).unwrap();
    let cfg = TaggerConfig::default();
    assert!(tag_features("the greens lied", "en", &lex, &cfg).political_lexicon_hit);
    assert!(!tag_features("the leftists lied", "en", &lex, &cfg).political_lexicon_hit);
    assert!(tag_features("the arabs", "en", &lex, &cfg).ethnic_lexicon_hit);
    assert!(Lexicons::load_dir(&dir.path().join("missing")).is_err());
}

const WORDS: [&str; 12] = [
    "why", "if", "arabs", "leftist", "5", "now!", "here?", "they", "go", "...", "si", "là",
];

fn random_corpus(rng: &mut ChaCha8Rng, n: usize) -> Corpus {
    let samples = (0..n)
        .map(|i| {
            let len = rng.gen_range(1..30);
            let mut words: Vec<&str> = (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
            let id = format!("s{i}");
            words.push(&id);
            TextSample {
                id: id.clone(),
                text: words.join(" "),
                language: if rng.gen() { Language::En } else { Language::Fr },
                label: if rng.gen() { Label::Hateful } else { Label::NotHateful },
                source: Source::Synthetic,
            }
        })
        .collect();
    Corpus::new(samples, vec![]).unwrap()
}

#[test]
fn error_counts_match_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (lex, cfg) = (Lexicons::builtin(), TaggerConfig::default());
    for _ in 0..20 {
        let corpus = random_corpus(&mut rng, 80);
        let predicted: Vec<Label> = (0..80)
            .map(|_| if rng.gen() { Label::Hateful } else { Label::NotHateful })
            .collect();
        let errors = collect_errors(&corpus, &predicted, &lex, &cfg).unwrap();

        let mut disagreements = 0;
        let mut recount = [0usize; 9];
        for (s, p) in corpus.samples().iter().zip(&predicted) {
            if s.label != *p {
                disagreements += 1;
                let t = tag_features(&s.text, s.language.code(), &lex, &cfg);
                for (k, c) in Category::ALL.iter().enumerate() {
                    recount[k] += usize::from(t.has(*c));
                }
            }
        }
        assert_eq!(errors.len(), disagreements);
        assert!(errors.iter().all(|e| e.gold != e.predicted));

        let report = aggregate("r", &corpus.digest(), corpus.len(), &errors);
        for (k, c) in Category::ALL.iter().enumerate() {
            assert_eq!(report.category_counts[c], recount[k], "{}", c.name());
        }
        assert_eq!(report.false_hateful + report.missed_hateful, report.total_errors);
    }
}

#[test]
fn constant_predictor_misses_every_hateful_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let corpus = random_corpus(&mut rng, 50);
    let errors = collect_errors(
        &corpus,
        &[Label::NotHateful; 50],
        &Lexicons::builtin(),
        &TaggerConfig::default(),
    )
    .unwrap();
    let hateful: Vec<String> = corpus
        .samples()
        .iter()
        .filter(|s| s.label == Label::Hateful)
        .map(|s| s.id.clone())
        .collect();
    assert_eq!(errors.iter().map(|e| e.sample_id.clone()).collect::<Vec<_>>(), hateful);
}

#[test]
fn report_json_round_trip_and_comparison() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let corpus = random_corpus(&mut rng, 40);
    let (lex, cfg) = (Lexicons::builtin(), TaggerConfig::default());
    let all_wrong: Vec<Label> = corpus
        .labels()
        .iter()
        .map(|l| {
            if *l == Label::Hateful {
                Label::NotHateful
            } else {
                Label::Hateful
            }
        })
        .collect();
    let mut half = all_wrong.clone();
    half[..20].copy_from_slice(&corpus.labels()[..20]);
    let a = aggregate(
        "a",
        &corpus.digest(),
        40,
        &collect_errors(&corpus, &all_wrong, &lex, &cfg).unwrap(),
    );
    let b = aggregate(
        "b",
        &corpus.digest(),
        40,
        &collect_errors(&corpus, &half, &lex, &cfg).unwrap(),
    );
    let back: ErrorReport = serde_json::from_str(&a.to_json()).unwrap();
    assert_eq!(back, a);

    let c = compare(&a, &b).unwrap();
    assert_eq!(c.reduction, Some(0.5));
    assert_eq!(c.newly_correct.len(), 20);
    assert!(c.newly_misclassified.is_empty());
    let text = render_comparison(&c);
    assert!(text.contains("reduction: 50.00%"), "{text}");
    assert!(a.render().contains("interrogative"));
}
