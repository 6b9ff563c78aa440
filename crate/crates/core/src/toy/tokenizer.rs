use crate::consolidation::Tokenizer;
use crate::seed::derive_seed;

/// Lowercased whitespace words hashed into a fixed number of buckets.
///
/// Leading and trailing ASCII punctuation is stripped from each word; words
/// that are pure punctuation produce no token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashTokenizer {
    buckets: u32,
}

impl HashTokenizer {
    pub fn new(buckets: u32) -> Self {
        assert!(buckets > 0, "tokenizer needs at least one bucket");
        Self { buckets }
    }

    pub fn buckets(&self) -> u32 {
        self.buckets
    }
}

impl Tokenizer for HashTokenizer {
    fn tokenize(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
            .filter(|w| !w.is_empty())
            .map(|w| (derive_seed(0, &w) % self.buckets as u64) as u32)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_words() {
        let t = HashTokenizer::new(4096);
        assert_eq!(t.tokenize("A Cute, kitten!"), t.tokenize("a cute kitten"));
        assert_eq!(t.tokenize("  -- "), Vec::<u32>::new());
        assert_eq!(t.tokenize("one two three").len(), 3);
        assert!(t.tokenize("garden basket sweater").iter().all(|&id| id < 4096));
    }
}
