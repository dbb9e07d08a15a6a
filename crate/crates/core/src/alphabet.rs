//! Guessable symbol sets.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Case applied to text before it is matched against the alphabet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseFold {
    #[default]
    Upper,
    Lower,
    Preserve,
}

impl CaseFold {
    pub fn apply(self, c: char, out: &mut String) {
        match self {
            CaseFold::Upper => out.extend(c.to_uppercase()),
            CaseFold::Lower => out.extend(c.to_lowercase()),
            CaseFold::Preserve => out.push(c),
        }
    }

    fn is_fixed_point(self, c: char) -> bool {
        let mut s = String::new();
        self.apply(c, &mut s);
        s.chars().eq(std::iter::once(c))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AlphabetError {
    #[error("alphabet has no letters")]
    Empty,
    #[error("symbol {0:?} appears more than once")]
    Duplicate(char),
    #[error("whitespace symbol {0:?} is not a whitespace character")]
    NotWhitespace(char),
    #[error("letter {0:?} is whitespace")]
    WhitespaceLetter(char),
    #[error("letter {0:?} is changed by the {1:?} case fold")]
    NotCaseFolded(char, CaseFold),
    #[error("reading alphabet file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing alphabet file: {0}")]
    Json(#[from] serde_json::Error),
}

/// On-disk form: `{"letters": "АБВ...", "whitespace": " ", "case": "upper"}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphabetSpec {
    pub letters: String,
    #[serde(default = "default_whitespace")]
    pub whitespace: char,
    #[serde(default)]
    pub case: CaseFold,
}

fn default_whitespace() -> char {
    ' '
}

/// Ordered set of guessable symbols: the letters followed by one whitespace
/// symbol. `len()` is the K that bounds guess ranks and max entropy.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AlphabetSpec", into = "AlphabetSpec")]
pub struct Alphabet {
    symbols: Vec<char>,
    case: CaseFold,
}

pub const UKRAINIAN_LETTERS: &str = "АБВГҐДЕЄЖЗИІЇЙКЛМНОПРСТУФХЦЧШЩЬЮЯ";
pub const ENGLISH_LETTERS: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";

impl Alphabet {
    pub fn new(letters: &str, whitespace: char, case: CaseFold) -> Result<Self, AlphabetError> {
        if letters.is_empty() {
            return Err(AlphabetError::Empty);
        }
        if !whitespace.is_whitespace() {
            return Err(AlphabetError::NotWhitespace(whitespace));
        }
        let mut symbols: Vec<char> = Vec::with_capacity(letters.chars().count() + 1);
        for c in letters.chars() {
            if c.is_whitespace() {
                return Err(AlphabetError::WhitespaceLetter(c));
            }
            if !case.is_fixed_point(c) {
                return Err(AlphabetError::NotCaseFolded(c, case));
            }
            if symbols.contains(&c) {
                return Err(AlphabetError::Duplicate(c));
            }
            symbols.push(c);
        }
        symbols.push(whitespace);
        Ok(Alphabet { symbols, case })
    }

    /// 33 uppercase Ukrainian letters plus space (K = 34).
    pub fn ukrainian() -> Self {
        Alphabet::new(UKRAINIAN_LETTERS, ' ', CaseFold::Upper).expect("builtin alphabet is valid")
    }

    /// 26 uppercase Latin letters plus space (K = 27).
    pub fn english() -> Self {
        Alphabet::new(ENGLISH_LETTERS, ' ', CaseFold::Upper).expect("builtin alphabet is valid")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, AlphabetError> {
        let bytes = std::fs::read(path)?;
        let spec: AlphabetSpec = serde_json::from_slice(&bytes)?;
        Alphabet::try_from(spec)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn letters(&self) -> &[char] {
        &self.symbols[..self.symbols.len() - 1]
    }

    pub fn whitespace(&self) -> char {
        *self.symbols.last().expect("alphabet always holds a whitespace symbol")
    }

    pub fn case(&self) -> CaseFold {
        self.case
    }

    pub fn contains(&self, c: char) -> bool {
        self.symbols.contains(&c)
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.symbols.iter().position(|&s| s == c)
    }

    /// log2(K), the entropy of a uniform choice over the alphabet.
    pub fn max_entropy(&self) -> f64 {
        (self.len() as f64).log2()
    }

    /// Maps raw keyboard input onto an alphabet symbol, applying the case
    /// fold. Any whitespace maps to the whitespace symbol.
    pub fn canonical(&self, c: char) -> Option<char> {
        if c.is_whitespace() {
            return Some(self.whitespace());
        }
        let mut folded = String::new();
        self.case.apply(c, &mut folded);
        let mut it = folded.chars();
        match (it.next(), it.next()) {
            (Some(f), None) if self.contains(f) => Some(f),
            _ => None,
        }
    }
}

impl TryFrom<AlphabetSpec> for Alphabet {
    type Error = AlphabetError;

    fn try_from(spec: AlphabetSpec) -> Result<Self, Self::Error> {
        Alphabet::new(&spec.letters, spec.whitespace, spec.case)
    }
}

impl From<Alphabet> for AlphabetSpec {
    fn from(a: Alphabet) -> Self {
        AlphabetSpec {
            letters: a.letters().iter().collect(),
            whitespace: a.whitespace(),
            case: a.case,
        }
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Alphabet::ukrainian()
    }
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letters: String = self.letters().iter().collect();
        f.debug_struct("Alphabet")
            .field("letters", &letters)
            .field("whitespace", &self.whitespace())
            .field("k", &self.len())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ukrainian_has_34_symbols() {
        let a = Alphabet::ukrainian();
        assert_eq!(a.letters().len(), 33);
        assert_eq!(a.len(), 34);
        assert_eq!(a.whitespace(), ' ');
        assert!((a.max_entropy() - 34f64.log2()).abs() < 1e-15);
        assert!((a.max_entropy() - 5.0875).abs() < 1e-4);
    }

    #[test]
    fn english_has_27_symbols() {
        let a = Alphabet::english();
        assert_eq!(a.len(), 27);
        assert!((a.max_entropy() - 4.7549).abs() < 1e-4);
    }

    #[test]
    fn rejects_duplicates_and_bad_whitespace() {
        assert!(matches!(
            Alphabet::new("ААБ", ' ', CaseFold::Upper),
            Err(AlphabetError::Duplicate('А'))
        ));
        assert!(matches!(
            Alphabet::new("АБ", '_', CaseFold::Upper),
            Err(AlphabetError::NotWhitespace('_'))
        ));
        assert!(matches!(
            Alphabet::new("аБ", ' ', CaseFold::Upper),
            Err(AlphabetError::NotCaseFolded('а', CaseFold::Upper))
        ));
        assert!(matches!(Alphabet::new("", ' ', CaseFold::Upper), Err(AlphabetError::Empty)));
    }

    #[test]
    fn canonical_folds_case() {
        let a = Alphabet::ukrainian();
        assert_eq!(a.canonical('л'), Some('Л'));
        assert_eq!(a.canonical('ґ'), Some('Ґ'));
        assert_eq!(a.canonical('\u{a0}'), Some(' '));
        assert_eq!(a.canonical('q'), None);
        assert_eq!(a.canonical('ы'), None);
    }

    #[test]
    fn json_round_trip() {
        let a = Alphabet::ukrainian();
        let s = serde_json::to_string(&a).unwrap();
        let b: Alphabet = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
    }
}
