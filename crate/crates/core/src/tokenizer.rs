/// Splits text into surface tokens. The engine only ever stores ids, so any
/// tokenizer producing newline-free, non-empty tokens can be plugged in.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Lowercased alphanumeric runs; every other non-space character becomes a
/// token of its own.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordTokenizer;

impl Tokenizer for WordTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        let mut word = String::new();
        for ch in text.chars() {
            if ch.is_alphanumeric() {
                word.extend(ch.to_lowercase());
                continue;
            }
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() && !ch.is_control() {
                tokens.push(ch.to_string());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
        tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_words_and_punctuation() {
        let t = WordTokenizer.tokenize("Who wrote \"Photograph\", by Ringo-Starr?");
        assert_eq!(
            t,
            [
                "who",
                "wrote",
                "\"",
                "photograph",
                "\"",
                ",",
                "by",
                "ringo",
                "-",
                "starr",
                "?"
            ]
        );
    }

    #[test]
    fn blank_text_has_no_tokens() {
        assert!(WordTokenizer.tokenize(" \t\n").is_empty());
    }
}
