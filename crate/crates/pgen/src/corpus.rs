//! Corpus loading, character vocabulary, encoding, and the sliding-window
//! pattern dataset.
//!
//! Text is kept in logical character order throughout; right-to-left
//! scripts need no special handling because the model only ever sees
//! character indices.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Whether [`CorpusText`] applies Unicode NFC plus the Persian folding
/// table on load. Line endings are always normalized either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    On,
    Off,
}

/// Folds visually identical Arabic glyph variants onto their Persian
/// counterparts, a common inconsistency in digitized divans.
fn fold_persian(c: char) -> char {
    match c {
        '\u{064A}' => '\u{06CC}', // Arabic Yeh -> Persian Yeh
        '\u{0643}' => '\u{06A9}', // Arabic Kaf -> Keheh
        _ => c,
    }
}

/// Normalized corpus text: a sequence of Unicode scalar values plus a
/// label naming where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusText {
    chars: Vec<char>,
    source_label: String,
}

impl CorpusText {
    /// Reads a UTF-8 text file. CRLF and lone CR become LF; with
    /// [`Normalization::On`] the text is NFC-normalized and Persian-folded.
    /// ZWNJ (U+200C) is preserved as an ordinary character.
    pub fn load(path: impl AsRef<Path>, normalization: Normalization) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::InvalidUtf8 {
            path: path.to_path_buf(),
            offset: e.valid_up_to(),
        })?;
        Self::from_text(text, &path.to_string_lossy(), normalization)
    }

    /// Builds a corpus from in-memory text, applying the same
    /// normalization pipeline as [`CorpusText::load`].
    pub fn from_text(text: &str, source_label: &str, normalization: Normalization) -> Result<Self> {
        let unified = text.replace("\r\n", "\n").replace('\r', "\n");
        let chars: Vec<char> = match normalization {
            Normalization::On => unified.nfc().map(fold_persian).collect(),
            Normalization::Off => unified.chars().collect(),
        };
        if chars.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(CorpusText {
            chars,
            source_label: source_label.to_string(),
        })
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Number of Unicode scalar values.
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    /// Concatenates two corpora with a newline between them, so the seam
    /// is an ordinary hemistich boundary. The label records both sources.
    pub fn merge(&self, other: &CorpusText) -> CorpusText {
        let mut chars = Vec::with_capacity(self.chars.len() + other.chars.len() + 1);
        chars.extend_from_slice(&self.chars);
        chars.push('\n');
        chars.extend_from_slice(&other.chars);
        CorpusText {
            chars,
            source_label: format!("{}+{}", self.source_label, other.source_label),
        }
    }
}

impl fmt::Display for CorpusText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.chars {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Bijection between corpus characters and dense indices `0..V`.
/// Characters are sorted by code point, so rebuilding from the same text
/// always yields the same mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    char_of: Vec<char>,
    index_of: HashMap<char, u32>,
}

impl Vocabulary {
    /// Builds the vocabulary of distinct characters in `text`.
    pub fn build(text: &CorpusText) -> Vocabulary {
        let set: BTreeSet<char> = text.chars.iter().copied().collect();
        Self::from_sorted_chars(set.into_iter().collect())
            .expect("BTreeSet iteration is strictly ascending")
    }

    /// Rebuilds a vocabulary from its index-ordered character list, as
    /// stored in checkpoints. The list must be strictly ascending by code
    /// point.
    pub fn from_sorted_chars(chars: Vec<char>) -> Result<Vocabulary> {
        if chars.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if chars.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "vocabulary characters must be strictly ascending by code point".into(),
            ));
        }
        let index_of = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32))
            .collect();
        Ok(Vocabulary { char_of: chars, index_of })
    }

    pub fn size(&self) -> usize {
        self.char_of.len()
    }

    pub fn index_of(&self, c: char) -> Option<u32> {
        self.index_of.get(&c).copied()
    }

    pub fn char_of(&self, index: u32) -> Option<char> {
        self.char_of.get(index as usize).copied()
    }

    /// Characters in index order.
    pub fn chars(&self) -> &[char] {
        &self.char_of
    }

    /// Maps characters to indices; reports the first unknown character and
    /// its position.
    pub fn encode(&self, chars: &[char]) -> Result<Vec<u32>> {
        chars
            .iter()
            .enumerate()
            .map(|(pos, &c)| {
                self.index_of(c).ok_or_else(|| Error::unknown_char(c, pos))
            })
            .collect()
    }

    /// Maps indices back to text; inverse of [`Vocabulary::encode`].
    pub fn decode(&self, indices: &[u32]) -> Result<String> {
        indices
            .iter()
            .map(|&i| {
                self.char_of(i).ok_or(Error::IndexOutOfRange {
                    index: i as usize,
                    vocab_size: self.size(),
                })
            })
            .collect()
    }
}

/// Sliding-window shape: every window is `length` consecutive characters
/// and the stride is fixed at one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    length: usize,
}

impl WindowConfig {
    pub fn new(length: usize) -> Result<WindowConfig> {
        if length == 0 {
            return Err(Error::InvalidArgument("window length must be at least 1".into()));
        }
        Ok(WindowConfig { length })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn stride(&self) -> usize {
        1
    }
}

/// Every length-L window of the encoded corpus together with the index of
/// the character that follows it.
///
/// The corpus is stored encoded once; windows are views into it, which
/// makes the shift property (`windows[i+1]` is `windows[i]` shifted by one
/// with `targets[i]` appended) hold by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternDataset {
    encoded: Vec<u32>,
    window_len: usize,
    vocab_size: usize,
}

impl PatternDataset {
    /// Extracts all windows of `cfg.length()` characters. The corpus must
    /// be strictly longer than the window.
    pub fn extract(text: &CorpusText, vocab: &Vocabulary, cfg: &WindowConfig) -> Result<Self> {
        if text.len() <= cfg.length() {
            return Err(Error::CorpusTooShort {
                length: text.len(),
                window: cfg.length(),
            });
        }
        Ok(PatternDataset {
            encoded: vocab.encode(text.chars())?,
            window_len: cfg.length(),
            vocab_size: vocab.size(),
        })
    }

    /// Number of (window, target) rows: corpus length minus window length.
    pub fn len(&self) -> usize {
        self.encoded.len() - self.window_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// The `i`-th window: character indices `i..i+L`.
    pub fn window(&self, i: usize) -> &[u32] {
        &self.encoded[i..i + self.window_len]
    }

    /// The character index immediately following the `i`-th window.
    pub fn target(&self, i: usize) -> u32 {
        self.encoded[i + self.window_len]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], u32)> {
        (0..self.len()).map(move |i| (self.window(i), self.target(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn corpus(text: &str) -> CorpusText {
        CorpusText::from_text(text, "test", Normalization::Off).unwrap()
    }

    /// Independent Unicode scalar counter: walks raw UTF-8 bytes and counts
    /// non-continuation bytes.
    fn count_scalars(bytes: &[u8]) -> usize {
        bytes.iter().filter(|&&b| (b & 0xC0) != 0x80).count()
    }

    #[test]
    fn load_plain_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        fs::write(&path, "ab\ncd").unwrap();
        let c = CorpusText::load(&path, Normalization::On).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c.chars(), ['a', 'b', '\n', 'c', 'd']);
    }

    #[test]
    fn crlf_normalizes_to_lf() {
        let a = corpus("ab\r\ncd");
        let b = corpus("ab\ncd");
        assert_eq!(a.chars(), b.chars());
        let c = corpus("ab\rcd");
        assert_eq!(c.chars(), b.chars());
        assert!(!a.chars().contains(&'\r'));
    }

    #[test]
    fn persian_couplet_loads_intact() {
        let text = "اگر آن ترک شیرازی به دست آرد دل ما را\nبه خال هندویش بخشم سمرقند و بخارا را";
        let c = CorpusText::from_text(text, "couplet", Normalization::Off).unwrap();
        assert_eq!(c.len(), count_scalars(text.as_bytes()));
        assert_eq!(c.chars().iter().filter(|&&ch| ch == '\n').count(), 1);
        assert!(c.chars().contains(&' '));
        // This text is already NFC with Persian letters, so normalization
        // must not change it.
        let n = CorpusText::from_text(text, "couplet", Normalization::On).unwrap();
        assert_eq!(n.chars(), c.chars());
    }

    #[test]
    fn folding_collapses_arabic_variants() {
        let c = CorpusText::from_text("\u{064A}\u{0643}", "x", Normalization::On).unwrap();
        assert_eq!(c.chars(), ['\u{06CC}', '\u{06A9}']);
        let raw = CorpusText::from_text("\u{064A}\u{0643}", "x", Normalization::Off).unwrap();
        assert_eq!(raw.chars(), ['\u{064A}', '\u{0643}']);
    }

    #[test]
    fn zwnj_is_preserved() {
        let c = CorpusText::from_text("مشکل\u{200C}ها", "x", Normalization::On).unwrap();
        assert!(c.chars().contains(&'\u{200C}'));
    }

    #[test]
    fn empty_after_normalization_is_an_error() {
        assert!(matches!(
            CorpusText::from_text("", "x", Normalization::On),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn missing_file_is_an_error() {
        let err = CorpusText::load("/nonexistent/path.txt", Normalization::On).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn invalid_utf8_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(b"ok\xFFrest").unwrap();
        drop(f);
        match CorpusText::load(&path, Normalization::On).unwrap_err() {
            Error::InvalidUtf8 { offset, .. } => assert_eq!(offset, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn vocabulary_of_small_text() {
        let v = Vocabulary::build(&corpus("aba"));
        assert_eq!(v.size(), 2);
        assert_eq!(v.index_of('a'), Some(0));
        assert_eq!(v.index_of('b'), Some(1));
        assert_eq!(v.char_of(1), Some('b'));
    }

    #[test]
    fn vocabulary_of_repeated_character() {
        let v = Vocabulary::build(&corpus("zzzz"));
        assert_eq!(v.size(), 1);
    }

    #[test]
    fn merged_vocabulary_is_set_union() {
        let a = corpus("سلام دنیا");
        let b = corpus("گل و بلبل");
        let merged = a.merge(&b);
        let v = Vocabulary::build(&merged);
        // Brute-force union oracle over the raw characters.
        let mut union: BTreeSet<char> = a.chars().iter().copied().collect();
        union.extend(b.chars().iter().copied());
        union.insert('\n');
        let expected: Vec<char> = union.into_iter().collect();
        assert_eq!(v.chars(), expected.as_slice());
    }

    #[test]
    fn encode_decode_round_trip() {
        let c = corpus("ab");
        let v = Vocabulary::build(&c);
        assert_eq!(v.encode(c.chars()).unwrap(), vec![0, 1]);
        assert_eq!(v.decode(&[0, 1]).unwrap(), "ab");
    }

    #[test]
    fn encode_names_unknown_character() {
        let v = Vocabulary::build(&corpus("ab"));
        match v.encode(&['a', 'c']).unwrap_err() {
            Error::UnknownChar { ch, position, .. } => {
                assert_eq!(ch, 'c');
                assert_eq!(position, 1);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn decode_rejects_out_of_range_index() {
        let v = Vocabulary::build(&corpus("ab"));
        assert!(matches!(
            v.decode(&[0, 7]).unwrap_err(),
            Error::IndexOutOfRange { index: 7, vocab_size: 2 }
        ));
    }

    #[test]
    fn extract_patterns_small_example() {
        let c = corpus("abcd");
        let v = Vocabulary::build(&c);
        let ds = PatternDataset::extract(&c, &v, &WindowConfig::new(2).unwrap()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(v.decode(ds.window(0)).unwrap(), "ab");
        assert_eq!(v.decode(ds.window(1)).unwrap(), "bc");
        assert_eq!(v.char_of(ds.target(0)), Some('c'));
        assert_eq!(v.char_of(ds.target(1)), Some('d'));
    }

    #[test]
    fn extract_rejects_short_corpus() {
        let c = corpus("abc");
        let v = Vocabulary::build(&c);
        assert!(matches!(
            PatternDataset::extract(&c, &v, &WindowConfig::new(3).unwrap()),
            Err(Error::CorpusTooShort { length: 3, window: 3 })
        ));
        assert!(PatternDataset::extract(&c, &v, &WindowConfig::new(2).unwrap()).is_ok());
    }

    #[test]
    fn window_count_matches_brute_force_enumeration() {
        let mut rng = crate::numerics::Rng::new(4);
        let alphabet: Vec<char> = "abcdefgh".chars().collect();
        for _ in 0..20 {
            let n = 10 + rng.uniform_range(60) as usize;
            let text: String = (0..n)
                .map(|_| alphabet[rng.uniform_range(alphabet.len() as u64) as usize])
                .collect();
            let c = corpus(&text);
            let v = Vocabulary::build(&c);
            for l in [2usize, 5] {
                let ds = PatternDataset::extract(&c, &v, &WindowConfig::new(l).unwrap()).unwrap();
                // Brute-force substring enumerator.
                let chars: Vec<char> = text.chars().collect();
                let mut expected = Vec::new();
                for i in 0..chars.len() - l {
                    expected.push((chars[i..i + l].to_vec(), chars[i + l]));
                }
                assert_eq!(ds.len(), chars.len() - l);
                assert_eq!(ds.len(), expected.len());
                for (i, (w, t)) in expected.iter().enumerate() {
                    let decoded: Vec<char> =
                        v.decode(ds.window(i)).unwrap().chars().collect();
                    assert_eq!(&decoded, w);
                    assert_eq!(v.char_of(ds.target(i)).unwrap(), *t);
                }
            }
        }
    }

    #[test]
    fn consecutive_windows_overlap_by_all_but_one() {
        let text = "اگر آن ترک شیرازی به دست آرد دل ما را\nبه خال هندویش بخشم سمرقند و بخارا را";
        let c = corpus(text);
        let v = Vocabulary::build(&c);
        let ds = PatternDataset::extract(&c, &v, &WindowConfig::new(20).unwrap()).unwrap();
        for i in 0..ds.len() {
            assert_eq!(ds.window(i).len(), 20);
        }
        for i in 0..ds.len() - 1 {
            assert_eq!(ds.window(i)[1..], ds.window(i + 1)[..19]);
            assert_eq!(*ds.window(i + 1).last().unwrap(), ds.target(i));
        }
    }

    #[test]
    fn every_tail_character_is_a_target_exactly_once() {
        let c = corpus("abcabcabd");
        let v = Vocabulary::build(&c);
        let l = 3;
        let ds = PatternDataset::extract(&c, &v, &WindowConfig::new(l).unwrap()).unwrap();
        let encoded = v.encode(c.chars()).unwrap();
        let targets: Vec<u32> = (0..ds.len()).map(|i| ds.target(i)).collect();
        assert_eq!(targets, encoded[l..]);
    }

    #[test]
    fn merge_concatenates_with_newline() {
        let a = corpus("ab");
        let b = corpus("cd");
        let m = a.merge(&b);
        assert_eq!(m.to_string(), "ab\ncd");
        assert_eq!(m.len(), 5);
        assert_eq!(m.source_label(), "test+test");
    }

    #[test]
    fn determinism_identical_bytes_identical_dataset() {
        let text = "به می سجاده رنگین کن";
        let c1 = CorpusText::from_text(text, "x", Normalization::On).unwrap();
        let c2 = CorpusText::from_text(text, "x", Normalization::On).unwrap();
        let v1 = Vocabulary::build(&c1);
        let v2 = Vocabulary::build(&c2);
        assert_eq!(v1, v2);
        let w = WindowConfig::new(5).unwrap();
        assert_eq!(
            PatternDataset::extract(&c1, &v1, &w).unwrap(),
            PatternDataset::extract(&c2, &v2, &w).unwrap()
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn decode_encode_is_identity(text in "[a-f آب\n]{1,80}") {
                let c = CorpusText::from_text(&text, "p", Normalization::Off).unwrap();
                let v = Vocabulary::build(&c);
                let encoded = v.encode(c.chars()).unwrap();
                prop_assert_eq!(v.decode(&encoded).unwrap(), c.to_string());
            }

            #[test]
            fn merge_length_arithmetic(a in "[a-z]{1,40}", b in "[a-z]{1,40}") {
                let ca = CorpusText::from_text(&a, "a", Normalization::Off).unwrap();
                let cb = CorpusText::from_text(&b, "b", Normalization::Off).unwrap();
                prop_assert_eq!(ca.merge(&cb).len(), ca.len() + cb.len() + 1);
            }

            #[test]
            fn shift_property_holds(text in "[ab]{5,60}") {
                let c = CorpusText::from_text(&text, "p", Normalization::Off).unwrap();
                let v = Vocabulary::build(&c);
                let l = 3.min(c.len() - 1);
                let ds = PatternDataset::extract(&c, &v, &WindowConfig::new(l).unwrap()).unwrap();
                for i in 0..ds.len().saturating_sub(1) {
                    prop_assert_eq!(&ds.window(i)[1..], &ds.window(i + 1)[..l - 1]);
                }
            }
        }
    }
}
