//! Byte-level tokenizer: one token id per byte of the UTF-8 encoding.
//!
//! The scheme is whitespace-preserving and round-trips exactly, which keeps
//! token counts reproducible across runs and platforms.

use super::TokenSeq;
use crate::error::{Error, Result};

pub const BYTE_VOCAB_SIZE: u32 = 256;

#[derive(Debug, Clone, Copy, Default)]
pub struct ByteTokenizer;

impl ByteTokenizer {
    pub fn tokenize(&self, text: &str) -> TokenSeq {
        TokenSeq(text.bytes().map(u32::from).collect())
    }

    pub fn detokenize(&self, tokens: &TokenSeq) -> Result<String> {
        let mut bytes = Vec::with_capacity(tokens.len());
        for &t in tokens.as_slice() {
            if t >= BYTE_VOCAB_SIZE {
                return Err(Error::OutOfVocabulary {
                    token: t,
                    vocab_size: BYTE_VOCAB_SIZE,
                });
            }
            bytes.push(t as u8);
        }
        String::from_utf8(bytes)
            .map_err(|_| Error::Validation("token sequence is not valid UTF-8".to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_empty_seq() {
        let tok = ByteTokenizer;
        assert!(tok.tokenize("").is_empty());
    }

    #[test]
    fn round_trip_multibyte() {
        let tok = ByteTokenizer;
        let text = "fn main() { println!(\"héllo → 世界\"); }";
        let seq = tok.tokenize(text);
        assert_eq!(tok.detokenize(&seq).unwrap(), text);
    }

    #[test]
    fn one_byte_difference_changes_seq() {
        let tok = ByteTokenizer;
        assert_ne!(tok.tokenize("abc"), tok.tokenize("abd"));
    }

    #[test]
    fn out_of_range_id_rejected() {
        let tok = ByteTokenizer;
        assert!(tok.detokenize(&TokenSeq(vec![97, 300])).is_err());
    }
}
