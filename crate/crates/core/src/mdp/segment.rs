//! Step segmentation: cutting raw generations into steps.

use super::{MdpError, SegmentMode, Step};

/// Tokenizer used by fixed-token segmentation. Real tokenization is owned by
/// the generation backend; synthetic environments use whitespace tokens.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
    fn detokenize(&self, tokens: &[String]) -> String;
}

/// Splits on single spaces so that `detokenize(tokenize(t)) == t` exactly
/// (runs of spaces become empty tokens).
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(' ').map(str::to_string).collect()
    }

    fn detokenize(&self, tokens: &[String]) -> String {
        tokens.join(" ")
    }
}

/// Cuts `text` into steps so that joining the step texts with the mode's
/// delimiter reproduces the input exactly.
pub fn split_into_steps(
    text: &str,
    mode: SegmentMode,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Step>, MdpError> {
    if text.is_empty() {
        return Err(MdpError::EmptyInput);
    }
    match mode {
        SegmentMode::Line => Ok(text
            .split('\n')
            .map(|line| Step { text: line.to_string(), mode, eos: false })
            .collect()),
        SegmentMode::FixedTokens { n } => {
            if n == 0 {
                return Err(MdpError::InvalidConfig("fixed_tokens requires n >= 1".into()));
            }
            let tokens = tokenizer.tokenize(text);
            Ok(tokens
                .chunks(n)
                .map(|chunk| Step { text: tokenizer.detokenize(chunk), mode, eos: false })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn line_mode_splits_on_newlines() {
        let steps = split_into_steps("a\nb\nc", SegmentMode::Line, &WhitespaceTokenizer).unwrap();
        let texts: Vec<&str> = steps.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["a", "b", "c"]);
    }

    #[test]
    fn no_delimiter_yields_single_step() {
        let steps = split_into_steps("xyz", SegmentMode::Line, &WhitespaceTokenizer).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].text, "xyz");
    }

    #[test]
    fn empty_input_is_an_error() {
        let err = split_into_steps("", SegmentMode::Line, &WhitespaceTokenizer).unwrap_err();
        assert!(matches!(err, MdpError::EmptyInput));
    }

    #[test]
    fn fixed_tokens_chunks_with_ragged_tail() {
        // 50 tokens into spans of 24 -> 24, 24, 2.
        let text: Vec<String> = (0..50).map(|i| format!("t{i}")).collect();
        let text = text.join(" ");
        let mode = SegmentMode::FixedTokens { n: 24 };
        let steps = split_into_steps(&text, mode, &WhitespaceTokenizer).unwrap();
        let sizes: Vec<usize> =
            steps.iter().map(|s| WhitespaceTokenizer.tokenize(&s.text).len()).collect();
        assert_eq!(sizes, [24, 24, 2]);
        let joined = steps.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
        assert_eq!(joined, text);
    }

    proptest! {
        #[test]
        fn line_split_round_trips(text in "[a-z #\\n]{1,80}") {
            let steps = split_into_steps(&text, SegmentMode::Line, &WhitespaceTokenizer).unwrap();
            let joined = steps.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n");
            prop_assert_eq!(joined, text);
        }

        #[test]
        fn fixed_split_round_trips(text in "[a-z ]{1,80}", n in 1usize..8) {
            let mode = SegmentMode::FixedTokens { n };
            let steps = split_into_steps(&text, mode, &WhitespaceTokenizer).unwrap();
            let joined = steps.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
            prop_assert_eq!(joined, text);
            for s in &steps {
                prop_assert!(WhitespaceTokenizer.tokenize(&s.text).len() <= n);
            }
        }
    }
}
