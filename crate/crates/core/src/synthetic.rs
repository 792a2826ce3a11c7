//! Seeded bilingual toy corpus with two separable classes.
//!
//! Each text mixes class cue pseudo-words, shared by both languages, with
//! language-specific filler words, so a head trained on one language's
//! features can transfer to the other.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Label, Language, Source, TextSample};
use crate::error::{Error, Result};

const HATEFUL_CUES: [&str; 5] = ["zorvak", "krelth", "vashtuk", "grimdal", "torvex"];
const NEUTRAL_CUES: [&str; 5] = ["lumira", "solvane", "pelinor", "amivel", "serunia"];

const EN_FILLER: [&str; 24] = [
    "the", "people", "today", "really", "about", "city", "news", "they", "again", "this", "those", "said", "think",
    "everyone", "street", "always", "morning", "what", "more", "just", "school", "work", "after", "here",
];
const FR_FILLER: [&str; 24] = [
    "les",
    "gens",
    "aujourd'hui",
    "vraiment",
    "sur",
    "ville",
    "nouvelles",
    "ils",
    "encore",
    "cette",
    "ceux",
    "dit",
    "pense",
    "tout",
    "rue",
    "toujours",
    "matin",
    "quoi",
    "plus",
    "juste",
    "école",
    "travail",
    "après",
    "ici",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub n_per_language: usize,
    pub seed: u64,
    /// Cue words per text.
    pub cues: usize,
    /// Filler words per text, inclusive range.
    pub filler: (usize, usize),
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_language: 500,
            seed: 0,
            cues: 4,
            filler: (2, 5),
        }
    }
}

fn filler_for(lang: Language) -> &'static [&'static str] {
    match lang {
        Language::En => &EN_FILLER,
        Language::Fr => &FR_FILLER,
    }
}

/// One balanced corpus for `lang`, labels alternating starting with
/// NOT_HATEFUL. Texts are unique within the corpus.
pub fn synthetic_corpus(lang: Language, spec: &SyntheticSpec) -> Result<Corpus> {
    if spec.cues == 0 || spec.filler.0 > spec.filler.1 {
        return Err(Error::Config(
            "synthetic corpus needs at least one cue and a valid filler range".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(lang as u64 + 1);
    let mut seen = HashSet::new();
    let mut samples = Vec::with_capacity(spec.n_per_language);
    let mut attempts = 0usize;
    while samples.len() < spec.n_per_language {
        attempts += 1;
        if attempts > spec.n_per_language * 100 + 1000 {
            return Err(Error::Config("cannot draw enough distinct synthetic texts".into()));
        }
        let label = Label::from_index(samples.len() % 2)?;
        let cues: &[&str] = if label == Label::Hateful {
            &HATEFUL_CUES
        } else {
            &NEUTRAL_CUES
        };
        let n_filler = rng.gen_range(spec.filler.0..=spec.filler.1);
        let mut words: Vec<&str> = (0..spec.cues).map(|_| *cues.choose(&mut rng).expect("cues")).collect();
        words.extend((0..n_filler).map(|_| *filler_for(lang).choose(&mut rng).expect("filler")));
        words.shuffle(&mut rng);
        let text = words.join(" ");
        if !seen.insert(text.clone()) {
            continue;
        }
        samples.push(TextSample {
            id: format!("syn-{}-{:05}", lang.code(), samples.len()),
            text,
            language: lang,
            label,
            source: Source::Synthetic,
        });
    }
    Corpus::new(samples, vec![format!("synthetic:{}:seed={}", lang.code(), spec.seed)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_balanced_unique() {
        let spec = SyntheticSpec {
            n_per_language: 200,
            seed: 9,
            ..Default::default()
        };
        let a = synthetic_corpus(Language::Fr, &spec).unwrap();
        assert_eq!(a, synthetic_corpus(Language::Fr, &spec).unwrap());
        assert_eq!(a.len(), 200);
        assert_eq!(a.labels().iter().filter(|&&l| l == Label::Hateful).count(), 100);
        let en = synthetic_corpus(Language::En, &spec).unwrap();
        assert_ne!(en.texts(), a.texts());
    }

    #[test]
    fn cues_shared_filler_not() {
        let spec = SyntheticSpec::default();
        let en = synthetic_corpus(Language::En, &spec).unwrap();
        let fr = synthetic_corpus(Language::Fr, &spec).unwrap();
        let vocab = |c: &Corpus| -> HashSet<String> {
            c.texts()
                .iter()
                .flat_map(|t| t.split(' ').map(str::to_string))
                .collect()
        };
        let shared: HashSet<String> = vocab(&en).intersection(&vocab(&fr)).cloned().collect();
        let cues: HashSet<String> = HATEFUL_CUES
            .iter()
            .chain(&NEUTRAL_CUES)
            .map(|s| s.to_string())
            .collect();
        assert_eq!(shared, cues);
    }
}
