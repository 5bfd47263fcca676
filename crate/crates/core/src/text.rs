//! Small text helpers shared by the chunker, embedder and evaluator.

use unicode_normalization::UnicodeNormalization;

/// Number of whitespace-separated tokens in `text`.
pub fn whitespace_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Canonical form used when matching object keys across systems:
/// NFC, full Unicode case folding, then surrounding whitespace trimmed.
pub fn canonical_key(key: &str) -> String {
    let nfc: String = key.nfc().collect();
    let folded = caseless::default_case_fold_str(&nfc);
    folded.trim().nfc().collect()
}

/// Lowercased alphanumeric terms, the unit the embedders count.
pub fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub(crate) fn nfc(text: &str) -> String {
    text.nfc().collect()
}
