//! Sobol' direction numbers.
//!
//! The embedded table holds the first 64 dimensions of the Joe & Kuo
//! `new-joe-kuo-6` set in its usual text layout (`d s a m_1 ... m_s`, one
//! line per dimension, dimension 1 implicit).

use std::path::Path;
use std::sync::OnceLock;

use super::SequenceError;

/// Number of binary digits carried by each direction integer.
pub const DIRECTION_BITS: usize = 32;

static EMBEDDED: &str = include_str!("../../data/new-joe-kuo-6.64");
static TABLE: OnceLock<DirectionNumberTable> = OnceLock::new();

/// Primitive polynomial and initial direction integers for one dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolynomialEntry {
    pub degree: u32,
    /// Interior coefficients of the polynomial, most significant first.
    pub coefficients: u32,
    pub initial: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct DirectionNumberTable {
    /// `entries[0]` is dimension 2.
    entries: Vec<PolynomialEntry>,
    directions: Vec<[u32; DIRECTION_BITS]>,
}

impl DirectionNumberTable {
    /// The table compiled into the crate.
    pub fn embedded() -> &'static DirectionNumberTable {
        TABLE.get_or_init(|| {
            Self::parse(EMBEDDED).expect("embedded direction-number table is well formed")
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, SequenceError> {
        let text = std::fs::read_to_string(path).map_err(|e| SequenceError::Table {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Parse the Joe & Kuo text layout. A non-numeric first line is treated
    /// as a header. Dimensions must be listed consecutively from 2.
    pub fn parse(text: &str) -> Result<Self, SequenceError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Result<Vec<u64>, _> = line.split_whitespace().map(str::parse).collect();
            let fields = match fields {
                Ok(f) => f,
                Err(_) if entries.is_empty() && lineno == 0 => continue,
                Err(e) => {
                    return Err(SequenceError::Table { line: lineno + 1, reason: e.to_string() })
                }
            };
            let bad = |reason: &str| SequenceError::Table {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            if fields.len() < 3 {
                return Err(bad("expected `d s a m_1 ... m_s`"));
            }
            let (dim, degree, coefficients) = (fields[0], fields[1], fields[2]);
            if dim as usize != entries.len() + 2 {
                return Err(bad("dimensions must be consecutive starting at 2"));
            }
            if degree == 0 || degree as usize >= DIRECTION_BITS {
                return Err(bad("polynomial degree out of range"));
            }
            if fields.len() != 3 + degree as usize {
                return Err(bad("number of initial direction integers must equal the degree"));
            }
            if coefficients >= 1 << (degree - 1) {
                return Err(bad("coefficient integer has more than s-1 bits"));
            }
            let initial: Vec<u32> = fields[3..].iter().map(|&m| m as u32).collect();
            for (k, &m) in initial.iter().enumerate() {
                if m % 2 == 0 || u64::from(m) >= 1 << (k + 1) {
                    return Err(bad("initial direction integer m_k must be odd and below 2^k"));
                }
            }
            entries.push(PolynomialEntry {
                degree: degree as u32,
                coefficients: coefficients as u32,
                initial,
            });
        }

        let mut directions = Vec::with_capacity(entries.len() + 1);
        directions.push(van_der_corput());
        directions.extend(entries.iter().map(expand));
        Ok(Self { entries, directions })
    }

    /// Largest supported dimension (dimension 1 included).
    pub fn max_dim(&self) -> usize {
        self.entries.len() + 1
    }

    /// Polynomial data for a 1-based dimension >= 2.
    pub fn entry(&self, dim: usize) -> Option<&PolynomialEntry> {
        dim.checked_sub(2).and_then(|i| self.entries.get(i))
    }

    /// Left-aligned direction integers for a 0-based coordinate index.
    pub fn directions(&self, coordinate: usize) -> &[u32; DIRECTION_BITS] {
        &self.directions[coordinate]
    }
}

fn van_der_corput() -> [u32; DIRECTION_BITS] {
    std::array::from_fn(|j| 1u32 << (DIRECTION_BITS - 1 - j))
}

fn expand(entry: &PolynomialEntry) -> [u32; DIRECTION_BITS] {
    let s = entry.degree as usize;
    let a = entry.coefficients;
    let mut v = [0u32; DIRECTION_BITS];
    for (i, &m) in entry.initial.iter().enumerate() {
        v[i] = m << (DIRECTION_BITS - 1 - i);
    }
    for i in s..DIRECTION_BITS {
        let mut value = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                value ^= v[i - k];
            }
        }
        v[i] = value;
    }
    v
}
