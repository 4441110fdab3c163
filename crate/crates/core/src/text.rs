//! Tokenization and token-count estimation.

/// Lowercases and splits on every non-alphanumeric character, dropping
/// empty pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Token estimate used for context budgeting: one token per four characters,
/// rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}
