//! Content hash tokens for chunk-objects.
//!
//! A token is the first 128 bits of SHA-256 over the length-prefixed,
//! NFC-normalized `(object_key, body)` pair, rendered as 32 lowercase hex
//! characters. Length prefixes are little-endian `u64` byte counts, so
//! `("ab", "c")` and `("a", "bc")` never share a preimage.

use sha2::{Digest, Sha256};

use crate::text::nfc;

/// Width of a hash token in hex characters.
pub const HASH_HEX_LEN: usize = 32;

const HASH_BYTES: usize = HASH_HEX_LEN / 2;

/// Deterministic token identifying a chunk-object by its key and body.
pub fn assign_hash(object_key: &str, body: &str) -> String {
    let key = nfc(object_key);
    let body = nfc(body);
    let mut hasher = Sha256::new();
    hasher.update((key.len() as u64).to_le_bytes());
    hasher.update(key.as_bytes());
    hasher.update((body.len() as u64).to_le_bytes());
    hasher.update(body.as_bytes());
    let digest = hasher.finalize();
    hex::encode(&digest[..HASH_BYTES])
}

/// True when `s` has the exact shape of a hash token.
pub fn is_hash_token(s: &str) -> bool {
    s.len() == HASH_HEX_LEN && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Every hash token mentioned in `text`.
///
/// A token is a maximal run of exactly 32 lowercase hex digits that is not
/// glued to other ASCII alphanumerics on either side.
pub fn cited_hashes(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
            i += 1;
        }
        let word = &text[start..i];
        if is_hash_token(word) {
            out.push(word.to_string());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_input_same_token() {
        let a = assign_hash("Gio's", "wood fired pizza");
        let b = assign_hash("Gio's", "wood fired pizza");
        assert_eq!(a, b);
        assert!(is_hash_token(&a));
    }

    #[test]
    fn distinct_keys_distinct_tokens() {
        let body = "cuisine: Italian";
        assert_ne!(assign_hash("Gio's", body), assign_hash("Rio's", body));
    }

    #[test]
    fn length_prefix_separates_boundaries() {
        assert_ne!(assign_hash("ab", "c"), assign_hash("a", "bc"));
    }

    #[test]
    fn nfc_equivalent_inputs_share_token() {
        assert_eq!(assign_hash("Caf\u{e9}", "x"), assign_hash("Cafe\u{301}", "x"));
    }

    #[test]
    fn known_vector() {
        // sha256(le64(1) "a" le64(1) "b")[..16], computed with Python hashlib
        assert_eq!(assign_hash("a", "b"), "cf6ab613e3942391f88ed698557e1680");
    }

    #[test]
    fn scan_finds_only_whole_tokens() {
        let h = assign_hash("k", "v");
        let text = format!("see [{h}] and x{h} and {h}0 and {}", &h[..31]);
        assert_eq!(cited_hashes(&text), vec![h]);
    }
}
