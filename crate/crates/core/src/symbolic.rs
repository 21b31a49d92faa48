//! Finite words, eventually periodic sequences, cylinders and the
//! lexicographic order on the full shift over `{0, .., d-1}`.
//!
//! Text forms: a word is a digit string (`"0110"`); an eventually periodic
//! point is `"head|cycle"` (`"01|10"` is `0 1 1 0 1 0 ...`). Symbols above 9
//! are written as lowercase letters.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

const MAX_ALPHABET: usize = 36;

fn check_alphabet(d: usize) -> Result<()> {
    if (1..=MAX_ALPHABET).contains(&d) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "alphabet size {d} outside 1..={MAX_ALPHABET}"
        )))
    }
}

fn check_symbols(symbols: &[u8], d: usize) -> Result<()> {
    match symbols.iter().find(|&&s| s as usize >= d) {
        Some(&s) => Err(Error::SymbolOutOfRange {
            symbol: s as usize,
            alphabet: d,
        }),
        None => Ok(()),
    }
}

fn symbol_char(s: u8) -> char {
    std::char::from_digit(s as u32, MAX_ALPHABET as u32).unwrap_or('?')
}

fn parse_symbols(text: &str, d: usize) -> Result<Vec<u8>> {
    text.chars()
        .map(|c| {
            let v = c
                .to_digit(MAX_ALPHABET as u32)
                .ok_or_else(|| Error::InvalidWord(format!("bad symbol '{c}' in \"{text}\"")))?
                as usize;
            if v >= d {
                Err(Error::SymbolOutOfRange {
                    symbol: v,
                    alphabet: d,
                })
            } else {
                Ok(v as u8)
            }
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A finite word over `{0, .., d-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    symbols: Vec<u8>,
    d: usize,
}

impl Word {
    pub fn new(symbols: Vec<u8>, d: usize) -> Result<Self> {
        check_alphabet(d)?;
        check_symbols(&symbols, d)?;
        Ok(Self { symbols, d })
    }

    pub fn empty(d: usize) -> Self {
        Self {
            symbols: Vec::new(),
            d,
        }
    }

    pub fn parse(text: &str, d: usize) -> Result<Self> {
        check_alphabet(d)?;
        Ok(Self {
            symbols: parse_symbols(text.trim(), d)?,
            d,
        })
    }

    /// The word whose base-`d` digits (first symbol most significant) spell `index`.
    pub fn from_index(mut index: usize, len: usize, d: usize) -> Self {
        let mut symbols = vec![0u8; len];
        for s in symbols.iter_mut().rev() {
            *s = (index % d) as u8;
            index /= d;
        }
        Self { symbols, d }
    }

    /// Inverse of [`Word::from_index`].
    pub fn index(&self) -> usize {
        self.symbols
            .iter()
            .fold(0usize, |acc, &s| acc * self.d + s as usize)
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn alphabet(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `self ⧺ other`.
    pub fn concat(&self, other: &Word) -> Result<Word> {
        if self.d != other.d {
            return Err(Error::AlphabetMismatch {
                left: self.d,
                right: other.d,
            });
        }
        let mut symbols = self.symbols.clone();
        symbols.extend_from_slice(&other.symbols);
        Ok(Word { symbols, d: self.d })
    }

    /// `self ⧺ s`.
    pub fn push(&self, s: u8) -> Result<Word> {
        check_symbols(&[s], self.d)?;
        let mut symbols = self.symbols.clone();
        symbols.push(s);
        Ok(Word { symbols, d: self.d })
    }

    pub fn prefix(&self, k: usize) -> Word {
        Word {
            symbols: self.symbols[..k.min(self.len())].to_vec(),
            d: self.d,
        }
    }

    /// Cyclic left rotation by `r`.
    pub fn rotate(&self, r: usize) -> Word {
        let mut symbols = self.symbols.clone();
        if !symbols.is_empty() {
            let n = symbols.len();
            symbols.rotate_left(r % n);
        }
        Word { symbols, d: self.d }
    }

    /// Smallest `p` such that the word is a power of its length-`p` prefix.
    pub fn primitive_period(&self) -> usize {
        let n = self.len();
        (1..=n)
            .find(|&p| n % p == 0 && (p..n).all(|i| self.symbols[i] == self.symbols[i - p]))
            .unwrap_or(0)
    }

    pub fn is_primitive(&self) -> bool {
        !self.is_empty() && self.primitive_period() == self.len()
    }

    /// True when `other` is a cyclic rotation of `self`.
    pub fn is_rotation_of(&self, other: &Word) -> bool {
        self.d == other.d
            && self.len() == other.len()
            && (0..self.len().max(1)).any(|r| self.rotate(r) == *other)
    }

    /// All `d^len` words of length `len`, in index order.
    pub fn all(len: usize, d: usize) -> impl Iterator<Item = Word> {
        let count = d.pow(len as u32);
        (0..count).map(move |i| Word::from_index(i, len, d))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.symbols
            .iter()
            .try_for_each(|&s| write!(f, "{}", symbol_char(s)))
    }
}

/// Primitive necklaces (Lyndon words) of length `1..=max_len`, one per
/// rotation class, ordered by length and then lexicographically.
pub fn lyndon_words(d: usize, max_len: usize) -> Vec<Word> {
    let mut out = Vec::new();
    if d == 0 || max_len == 0 {
        return out;
    }
    // Duval's generation algorithm
    let mut w: Vec<u8> = vec![0];
    loop {
        out.push(Word {
            symbols: w.clone(),
            d,
        });
        let m = w.len();
        while w.len() < max_len {
            let c = w[w.len() - m];
            w.push(c);
        }
        while let Some(&last) = w.last() {
            if last as usize == d - 1 {
                w.pop();
            } else {
                break;
            }
        }
        match w.last_mut() {
            Some(last) => *last += 1,
            None => break,
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.symbols.cmp(&b.symbols)));
    out
}

/// An eventually periodic point `head ⧺ cycle^∞` of the full shift, kept in
/// canonical form: the cycle is primitive and the head is as short as
/// possible (which fixes the cycle's rotation). Equal sequences therefore
/// have equal representations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventuallyPeriodicPoint {
    head: Vec<u8>,
    cycle: Vec<u8>,
    d: usize,
}

impl EventuallyPeriodicPoint {
    pub fn new(head: Vec<u8>, cycle: Vec<u8>, d: usize) -> Result<Self> {
        check_alphabet(d)?;
        if cycle.is_empty() {
            return Err(Error::InvalidWord("empty cycle".into()));
        }
        check_symbols(&head, d)?;
        check_symbols(&cycle, d)?;
        Ok(Self::canonical(head, cycle, d))
    }

    pub fn periodic(cycle: &Word) -> Result<Self> {
        Self::new(Vec::new(), cycle.symbols.clone(), cycle.d)
    }

    pub fn from_words(head: &Word, cycle: &Word) -> Result<Self> {
        if head.d != cycle.d {
            return Err(Error::AlphabetMismatch {
                left: head.d,
                right: cycle.d,
            });
        }
        Self::new(head.symbols.clone(), cycle.symbols.clone(), head.d)
    }

    /// Parses `"head|cycle"`; a string without `|` is read as a pure cycle.
    pub fn parse(text: &str, d: usize) -> Result<Self> {
        check_alphabet(d)?;
        let text = text.trim();
        let (head, cycle) = match text.split_once('|') {
            Some((h, c)) => (h, c),
            None => ("", text),
        };
        Self::new(parse_symbols(head, d)?, parse_symbols(cycle, d)?, d)
    }

    fn canonical(mut head: Vec<u8>, cycle: Vec<u8>, d: usize) -> Self {
        let p = Word {
            symbols: cycle.clone(),
            d,
        }
        .primitive_period();
        let mut cycle = cycle[..p].to_vec();
        while let (Some(&h), Some(&c)) = (head.last(), cycle.last()) {
            if h != c {
                break;
            }
            head.pop();
            cycle.rotate_right(1);
        }
        Self { head, cycle, d }
    }

    pub fn alphabet(&self) -> usize {
        self.d
    }

    pub fn head(&self) -> Word {
        Word {
            symbols: self.head.clone(),
            d: self.d,
        }
    }

    pub fn cycle(&self) -> Word {
        Word {
            symbols: self.cycle.clone(),
            d: self.d,
        }
    }

    /// Length of the transient part.
    pub fn preperiod(&self) -> usize {
        self.head.len()
    }

    pub fn period(&self) -> usize {
        self.cycle.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.head.is_empty()
    }

    /// Symbol at 0-based position `i`.
    pub fn symbol(&self, i: usize) -> u8 {
        if i < self.head.len() {
            self.head[i]
        } else {
            self.cycle[(i - self.head.len()) % self.cycle.len()]
        }
    }

    /// The first `k` symbols.
    pub fn expand(&self, k: usize) -> Vec<u8> {
        (0..k).map(|i| self.symbol(i)).collect()
    }

    /// Truncation `ω_k` as a word.
    pub fn prefix(&self, k: usize) -> Word {
        Word {
            symbols: self.expand(k),
            d: self.d,
        }
    }

    fn same_alphabet(&self, other: &Self) -> Result<()> {
        if self.d == other.d {
            Ok(())
        } else {
            Err(Error::AlphabetMismatch {
                left: self.d,
                right: other.d,
            })
        }
    }

    /// First index where the two expansions differ, `None` if equal.
    pub fn first_disagreement(&self, other: &Self) -> Result<Option<usize>> {
        self.same_alphabet(other)?;
        let (pa, pb) = (self.period(), other.period());
        let bound = self.preperiod() + other.preperiod() + pa / gcd(pa, pb) * pb;
        Ok((0..bound).find(|&i| self.symbol(i) != other.symbol(i)))
    }

    /// Lexicographic order of the infinite expansions.
    pub fn lex_compare(&self, other: &Self) -> Result<Ordering> {
        Ok(match self.first_disagreement(other)? {
            Some(i) => self.symbol(i).cmp(&other.symbol(i)),
            None => Ordering::Equal,
        })
    }

    /// `2^{-n}` with `n` the first disagreement index; 0 when equal.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(match self.first_disagreement(other)? {
            Some(n) => 0.5f64.powi(n as i32),
            None => 0.0,
        })
    }

    /// `(σ^k ω, ω_k)`.
    pub fn shift_truncate(&self, k: usize) -> (Self, Word) {
        let prefix = self.prefix(k);
        let shifted = if k <= self.head.len() {
            Self::canonical(self.head[k..].to_vec(), self.cycle.clone(), self.d)
        } else {
            let r = (k - self.head.len()) % self.cycle.len();
            let mut cycle = self.cycle.clone();
            cycle.rotate_left(r);
            Self {
                head: Vec::new(),
                cycle,
                d: self.d,
            }
        };
        (shifted, prefix)
    }

    /// `σ ω`.
    pub fn shift(&self) -> Self {
        self.shift_truncate(1).0
    }

    /// `s ⧺ ω`.
    pub fn prepend(&self, s: u8) -> Result<Self> {
        self.prepend_word(&Word {
            symbols: vec![s],
            d: self.d,
        })
    }

    /// `γ ⧺ ω`.
    pub fn prepend_word(&self, gamma: &Word) -> Result<Self> {
        if gamma.d != self.d {
            return Err(Error::AlphabetMismatch {
                left: gamma.d,
                right: self.d,
            });
        }
        check_symbols(&gamma.symbols, self.d)?;
        let mut head = gamma.symbols.clone();
        head.extend_from_slice(&self.head);
        Ok(Self::canonical(head, self.cycle.clone(), self.d))
    }

    /// The `d` one-step σ-preimages `s ⧺ ω`, in symbol order.
    pub fn preimages(&self) -> Vec<Self> {
        (0..self.d as u8)
            .map(|s| {
                let mut head = vec![s];
                head.extend_from_slice(&self.head);
                Self::canonical(head, self.cycle.clone(), self.d)
            })
            .collect()
    }

    /// True when the periodic tail is a rotation of `cycle` (or of its primitive root).
    pub fn tail_matches(&self, cycle: &Word) -> bool {
        let root = cycle.prefix(cycle.primitive_period());
        self.cycle().is_rotation_of(&root)
    }
}

impl fmt::Display for EventuallyPeriodicPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.head {
            write!(f, "{}", symbol_char(s))?;
        }
        write!(f, "|")?;
        for &s in &self.cycle {
            write!(f, "{}", symbol_char(s))?;
        }
        Ok(())
    }
}

/// Lexicographic order (alphabets assumed equal; mismatches order by `d`).
pub fn lex_order(a: &EventuallyPeriodicPoint, b: &EventuallyPeriodicPoint) -> Ordering {
    a.lex_compare(b).unwrap_or_else(|_| a.d.cmp(&b.d))
}

/// Cylinder `C_γ`: all sequences starting with `γ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cylinder {
    word: Word,
}

impl Cylinder {
    pub fn new(word: Word) -> Self {
        Self { word }
    }

    pub fn word(&self) -> &Word {
        &self.word
    }

    pub fn contains(&self, omega: &EventuallyPeriodicPoint) -> bool {
        omega.d == self.word.d
            && self
                .word
                .symbols
                .iter()
                .enumerate()
                .all(|(i, &s)| omega.symbol(i) == s)
    }
}
