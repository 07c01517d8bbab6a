//! Text perturbations for robustness tests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::strip_punctuation;
use crate::rng;

pub const DEFAULT_TYPO_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbKind {
    Typo,
    CaseUpper,
    CaseLower,
    PunctuationStrip,
    WhitespacePad,
}

fn default_rate() -> f64 {
    DEFAULT_TYPO_RATE
}

/// A perturbation spec. `seed`, when set, overrides the suite seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturber {
    pub kind: PerturbKind,
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Perturber {
    pub fn typo(rate: f64) -> Self {
        Perturber {
            kind: PerturbKind::Typo,
            rate,
            seed: None,
        }
    }

    pub fn surface(kind: PerturbKind) -> Self {
        Perturber {
            kind,
            rate: DEFAULT_TYPO_RATE,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::invalid(format!("rate {} must be in (0, 1]", self.rate)));
        }
        Ok(())
    }

    pub fn apply(&self, text: &str, seed: u64) -> Result<String> {
        self.validate()?;
        match self.kind {
            PerturbKind::Typo => perturb_typo(text, self.rate, self.seed.unwrap_or(seed)),
            kind => Ok(perturb_surface(text, kind)),
        }
    }
}

/// A single character-level typo. Positions index characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypoEdit {
    /// Swap characters `i` and `i + 1`.
    Swap(usize),
    Delete(usize),
    Insert(usize, char),
    Duplicate(usize),
}

pub fn apply_edit(chars: &mut Vec<char>, edit: TypoEdit) {
    match edit {
        TypoEdit::Swap(i) => chars.swap(i, i + 1),
        TypoEdit::Delete(i) => {
            chars.remove(i);
        }
        TypoEdit::Insert(i, c) => chars.insert(i, c),
        TypoEdit::Duplicate(i) => chars.insert(i, chars[i]),
    }
}

fn random_insert(len: usize, rng: &mut impl Rng) -> TypoEdit {
    let c = char::from(b'a' + rng.random_range(0..26u8));
    TypoEdit::Insert(rng.random_range(0..=len), c)
}

/// Draw one edit for a string of `len` characters. Edits that need more
/// characters than available (delete or swap on one character) become inserts.
pub fn draw_edit(len: usize, rng: &mut impl Rng) -> TypoEdit {
    let op = rng.random_range(0..4u8);
    match op {
        0 if len >= 2 => TypoEdit::Swap(rng.random_range(0..len - 1)),
        1 if len >= 2 => TypoEdit::Delete(rng.random_range(0..len)),
        3 if len >= 1 => TypoEdit::Duplicate(rng.random_range(0..len)),
        _ => random_insert(len, rng),
    }
}

/// `max(1, round(rate * len))` random typos, deterministic per `(text, seed)`.
pub fn perturb_typo(text: &str, rate: f64, seed: u64) -> Result<String> {
    if text.is_empty() {
        return Err(Error::invalid("cannot add typos to empty text"));
    }
    let mut chars: Vec<char> = text.chars().collect();
    let edits = ((rate * chars.len() as f64).round() as usize).max(1);
    let mut rng = rng::stream(seed, &["typo", text]);
    for _ in 0..edits {
        let edit = draw_edit(chars.len(), &mut rng);
        apply_edit(&mut chars, edit);
    }
    Ok(chars.into_iter().collect())
}

pub fn perturb_surface(text: &str, kind: PerturbKind) -> String {
    match kind {
        PerturbKind::CaseUpper => text.to_uppercase(),
        PerturbKind::CaseLower => text.to_lowercase(),
        PerturbKind::PunctuationStrip => strip_punctuation(text),
        // the leading and trailing pad coincide on empty text
        PerturbKind::WhitespacePad if text.is_empty() => " ".to_owned(),
        PerturbKind::WhitespacePad => format!(" {text} "),
        PerturbKind::Typo => text.to_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn forced_delete() {
        let mut chars: Vec<char> = "hello".chars().collect();
        apply_edit(&mut chars, TypoEdit::Delete(2));
        assert_eq!(chars.into_iter().collect::<String>(), "helo");
    }

    #[test]
    fn single_char_never_empties() {
        for seed in 0..200 {
            let out = perturb_typo("a", 1.0, seed).unwrap();
            assert!(!out.is_empty());
        }
        let mut rng = rng::stream(0, &["t"]);
        for _ in 0..100 {
            assert!(!matches!(draw_edit(1, &mut rng), TypoEdit::Delete(_) | TypoEdit::Swap(_)));
        }
    }

    #[test]
    fn surface_examples() {
        assert_eq!(perturb_surface("Ab.", PerturbKind::CaseLower), "ab.");
        assert_eq!(perturb_surface("Ab.", PerturbKind::CaseUpper), "AB.");
        assert_eq!(perturb_surface("Ab.", PerturbKind::PunctuationStrip), "Ab");
        assert_eq!(perturb_surface("", PerturbKind::CaseLower), "");
        assert_eq!(perturb_surface("", PerturbKind::WhitespacePad), " ");
        assert_eq!(perturb_surface("x", PerturbKind::WhitespacePad), " x ");
    }

    #[test]
    fn empty_text_and_bad_rate() {
        assert!(perturb_typo("", 0.5, 0).is_err());
        assert!(Perturber::typo(0.0).apply("abc", 0).is_err());
        assert!(Perturber::typo(1.5).apply("abc", 0).is_err());
    }

    proptest! {
        #[test]
        fn typo_is_deterministic(text in "[a-z ]{1,40}", rate in 0.01f64..1.0, seed: u64) {
            let a = perturb_typo(&text, rate, seed).unwrap();
            prop_assert_eq!(&a, &perturb_typo(&text, rate, seed).unwrap());
            let edits = ((rate * text.chars().count() as f64).round() as usize).max(1);
            let diff = a.chars().count() as i64 - text.chars().count() as i64;
            prop_assert!(diff.unsigned_abs() as usize <= edits);
        }
    }
}
