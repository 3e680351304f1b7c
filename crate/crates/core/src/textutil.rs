//! Small text helpers shared by knob extraction and the hashing embedder.

/// Iterate the word tokens of `text`, lowercased.
///
/// A token is a maximal run of ASCII alphanumerics and underscores, which is
/// exactly the shape of DBMS knob identifiers, so membership tests against a
/// lowercased name set behave like case-insensitive whole-word matching.
pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
}

/// FNV-1a 64-bit hash. Fully specified constants, stable across platforms.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_split_on_punctuation_and_lowercase() {
        let got: Vec<String> = tokens("Set innodb_buffer_pool_size=2G; AUTOCOMMIT off.").collect();
        assert_eq!(
            got,
            vec!["set", "innodb_buffer_pool_size", "2g", "autocommit", "off"]
        );
    }

    #[test]
    fn fnv_known_vector() {
        // Reference value for the empty input from the FNV specification.
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
    }
}
