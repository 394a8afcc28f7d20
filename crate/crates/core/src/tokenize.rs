//! Text normalization and tokenization.
//!
//! Every consumer of text in this crate goes through [`tokenize`], so the
//! exact rules matter: a model trained on one tokenization is meaningless
//! when queried with another. The pipeline is
//!
//! 1. Unicode NFKC normalization,
//! 2. lowercasing,
//! 3. folding every decimal digit (Unicode `Nd`) to `0`,
//! 4. splitting on whitespace,
//! 5. splitting each chunk into maximal runs of alphanumeric and
//!    non-alphanumeric characters.
//!
//! Step 3 collapses phone numbers, years, and prices into shared shapes so
//! that n-gram statistics generalize across them; step 5 separates
//! punctuation from words without needing a language-specific rule set.
//!
//! [`TOKENIZER_VERSION`] is stamped into model files. Bump it whenever the
//! rules change, so stale models are rejected instead of silently queried
//! with incompatible tokens.

use unicode_normalization::UnicodeNormalization;
use unicode_properties::{GeneralCategory, UnicodeGeneralCategory};

/// Version stamp for the tokenization rules above.
pub const TOKENIZER_VERSION: u32 = 1;

/// Splits text into normalized tokens. Empty and whitespace-only input
/// yields an empty vector.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text
        .nfkc()
        .flat_map(char::to_lowercase)
        .map(|c| if is_decimal_digit(c) { '0' } else { c })
        .collect();
    let mut tokens = Vec::new();
    for chunk in normalized.split_whitespace() {
        push_runs(chunk, &mut tokens);
    }
    tokens
}

fn is_decimal_digit(c: char) -> bool {
    c.general_category() == GeneralCategory::DecimalNumber
}

/// Pushes the maximal alphanumeric / non-alphanumeric runs of `chunk`,
/// e.g. `"don't"` becomes `"don"`, `"'"`, `"t"`.
fn push_runs(chunk: &str, out: &mut Vec<String>) {
    let mut start = 0;
    let mut prev_alnum = None;
    for (i, c) in chunk.char_indices() {
        let alnum = c.is_alphanumeric();
        if prev_alnum.is_some_and(|p| p != alnum) {
            out.push(chunk[start..i].to_string());
            start = i;
        }
        prev_alnum = Some(alnum);
    }
    if start < chunk.len() {
        out.push(chunk[start..].to_string());
    }
}
