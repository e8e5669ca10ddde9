use crate::error::{Error, Result};

const TERMINAL_PUNCT: &[char] = &['.', ',', '!', '?', ';'];

/// Lowercases, splits on whitespace, and strips trailing `. , ! ? ;` from each token.
///
/// Tokens that were nothing but punctuation disappear.
pub fn tokenize(sentence: &str) -> Result<Vec<String>> {
    let tokens: Vec<String> = sentence
        .split_whitespace()
        .map(|t| t.to_lowercase().trim_end_matches(TERMINAL_PUNCT).to_string())
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(Error::Data(format!("sentence {sentence:?} has no tokens")));
    }
    Ok(tokens)
}

/// Tokens of an SNLI binary parse such as `( ( A boy ) ( is ( running outside ) ) )`.
pub fn tokenize_binary_parse(parse: &str) -> Result<Vec<String>> {
    let words: Vec<&str> = parse.split_whitespace().filter(|t| *t != "(" && *t != ")").collect();
    tokenize(&words.join(" "))
}
