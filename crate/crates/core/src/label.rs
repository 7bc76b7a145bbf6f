//! Timed phone segments, alignments, and phone-set definitions.
//!
//! Two plain-text formats are handled here:
//!
//! * label files, one `start<TAB>end<TAB>phone` record per line, times in
//!   seconds written with six decimals;
//! * phone-set files, one `symbol<TAB>class[<TAB>stressed]` record per line.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Label-file time resolution: one microsecond.
pub const TICKS_PER_SECOND: f64 = 1e6;

/// Round a time in seconds onto the microsecond grid used by label files.
pub fn quantize(seconds: f64) -> f64 {
    (seconds * TICKS_PER_SECOND).round() / TICKS_PER_SECOND
}

/// Convert seconds to whole microseconds.
pub fn to_ticks(seconds: f64) -> i64 {
    (seconds * TICKS_PER_SECOND).round() as i64
}

/// Convert whole microseconds back to seconds.
pub fn from_ticks(ticks: i64) -> f64 {
    ticks as f64 / TICKS_PER_SECOND
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("line {0}: malformed record")]
    MalformedLine(usize),
    #[error("line {0}: segment does not start where the previous one ends")]
    NonContiguous(usize),
    #[error("line {1}: unknown phone symbol `{0}`")]
    UnknownPhone(String, usize),
    #[error("label file contains no segments")]
    EmptyFile,
    #[error("segment {index}: invalid interval [{start}, {end}]")]
    InvalidInterval { index: usize, start: f64, end: f64 },
    #[error("segment {0} does not start where the previous one ends")]
    GapAt(usize),
    #[error("alignment must contain at least one segment")]
    Empty,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhoneSetError {
    #[error("line {0}: malformed phone-set record")]
    MalformedLine(usize),
    #[error("duplicate phone symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("unknown phone class `{0}`")]
    UnknownClass(String),
    #[error("phone set has no silence symbol")]
    NoSilenceSymbol,
    #[error("`{0}` is marked stressed but is not a vowel")]
    StressedNonVowel(String),
}

/// Broad phone class: vowel, consonant, or pause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhoneClass {
    Vowel,
    Consonant,
    Silence,
}

impl PhoneClass {
    pub const ALL: [PhoneClass; 3] = [PhoneClass::Vowel, PhoneClass::Consonant, PhoneClass::Silence];

    pub fn as_str(self) -> &'static str {
        match self {
            PhoneClass::Vowel => "vowel",
            PhoneClass::Consonant => "consonant",
            PhoneClass::Silence => "silence",
        }
    }

    /// One-letter code used in triphone labels (`V`, `C`, `-`).
    pub fn letter(self) -> char {
        match self {
            PhoneClass::Vowel => 'V',
            PhoneClass::Consonant => 'C',
            PhoneClass::Silence => '-',
        }
    }
}

impl fmt::Display for PhoneClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhoneClass {
    type Err = PhoneSetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vowel" => Ok(PhoneClass::Vowel),
            "consonant" => Ok(PhoneClass::Consonant),
            "silence" => Ok(PhoneClass::Silence),
            other => Err(PhoneSetError::UnknownClass(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhoneInfo {
    pub class: PhoneClass,
    pub stressed_vowel: bool,
}

/// The phone inventory of one aligner, with a broad class per symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneSet {
    entries: BTreeMap<String, PhoneInfo>,
}

impl PhoneSet {
    /// Build a phone set from `(symbol, info)` pairs, enforcing the
    /// uniqueness, silence, and stress rules.
    pub fn new<I, S>(entries: I) -> Result<Self, PhoneSetError>
    where
        I: IntoIterator<Item = (S, PhoneInfo)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (symbol, info) in entries {
            let symbol = symbol.into();
            if symbol.is_empty() || symbol.chars().any(char::is_whitespace) {
                return Err(PhoneSetError::MalformedLine(map.len() + 1));
            }
            if info.stressed_vowel && info.class != PhoneClass::Vowel {
                return Err(PhoneSetError::StressedNonVowel(symbol));
            }
            if map.contains_key(&symbol) {
                return Err(PhoneSetError::DuplicateSymbol(symbol));
            }
            map.insert(symbol, info);
        }
        if !map.values().any(|i| i.class == PhoneClass::Silence) {
            return Err(PhoneSetError::NoSilenceSymbol);
        }
        Ok(Self { entries: map })
    }

    pub fn get(&self, symbol: &str) -> Option<&PhoneInfo> {
        self.entries.get(symbol)
    }

    pub fn class_of(&self, symbol: &str) -> Option<PhoneClass> {
        self.entries.get(symbol).map(|i| i.class)
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.entries.contains_key(symbol)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Symbols in lexicographic order.
    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PhoneInfo)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Symbols of one class, in lexicographic order.
    pub fn symbols_of(&self, class: PhoneClass) -> Vec<&str> {
        self.iter()
            .filter(|(_, info)| info.class == class)
            .map(|(s, _)| s)
            .collect()
    }

    /// Lexicographically first silence symbol.
    pub fn silence_symbol(&self) -> &str {
        self.symbols_of(PhoneClass::Silence)[0]
    }
}

/// Parse a phone-set file. Blank lines are skipped.
pub fn parse_phoneset(text: &str) -> Result<PhoneSet, PhoneSetError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (symbol, class, stressed) = match fields.as_slice() {
            [s, c] => (*s, *c, false),
            [s, c, "stressed"] => (*s, *c, true),
            _ => return Err(PhoneSetError::MalformedLine(line_no)),
        };
        if symbol.is_empty() || symbol.chars().any(char::is_whitespace) {
            return Err(PhoneSetError::MalformedLine(line_no));
        }
        let class: PhoneClass = class.parse()?;
        entries.push((symbol, PhoneInfo { class, stressed_vowel: stressed }));
    }
    PhoneSet::new(entries)
}

/// Write a phone set in the format read by [`parse_phoneset`].
pub fn serialize_phoneset(set: &PhoneSet) -> String {
    let mut out = String::new();
    for (symbol, info) in set.iter() {
        out.push_str(symbol);
        out.push('\t');
        out.push_str(info.class.as_str());
        if info.stressed_vowel {
            out.push_str("\tstressed");
        }
        out.push('\n');
    }
    out
}

/// One timed phone.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub phone: String,
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(phone: impl Into<String>, start: f64, end: f64) -> Self {
        Self { phone: phone.into(), start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Length of the time span shared with `other` (zero when disjoint).
    pub fn overlap(&self, other: &Segment) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }
}

/// A contiguous tiling of one utterance into timed phones.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    utterance_id: String,
    segments: Vec<Segment>,
}

impl Alignment {
    pub fn new(utterance_id: impl Into<String>, segments: Vec<Segment>) -> Result<Self, LabelError> {
        if segments.is_empty() {
            return Err(LabelError::Empty);
        }
        for (i, seg) in segments.iter().enumerate() {
            let valid = seg.start.is_finite()
                && seg.end.is_finite()
                && seg.start >= 0.0
                && seg.end > seg.start;
            if !valid {
                return Err(LabelError::InvalidInterval { index: i, start: seg.start, end: seg.end });
            }
            if i > 0 && segments[i - 1].end != seg.start {
                return Err(LabelError::GapAt(i));
            }
        }
        Ok(Self { utterance_id: utterance_id.into(), segments })
    }

    /// Build an alignment from `n + 1` boundary times and `n` phone symbols.
    pub fn from_boundaries<S: AsRef<str>>(
        utterance_id: impl Into<String>,
        phones: &[S],
        boundaries: &[f64],
    ) -> Result<Self, LabelError> {
        if phones.is_empty() || boundaries.len() != phones.len() + 1 {
            return Err(LabelError::Empty);
        }
        let segments = phones
            .iter()
            .zip(boundaries.windows(2))
            .map(|(p, w)| Segment::new(p.as_ref(), w[0], w[1]))
            .collect();
        Self::new(utterance_id, segments)
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.segments[0].start
    }

    pub fn end(&self) -> f64 {
        self.segments[self.segments.len() - 1].end
    }

    pub fn phones(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.phone.as_str())
    }

    /// The `len() + 1` boundary times, from utterance start to utterance end.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        out.push(self.start());
        out.extend(self.segments.iter().map(|s| s.end));
        out
    }

    pub fn with_utterance_id(mut self, id: impl Into<String>) -> Self {
        self.utterance_id = id.into();
        self
    }
}

/// Parse a label file. The utterance id is not part of the file format and
/// is supplied by the caller (usually the file stem).
pub fn parse_label_file(
    text: &str,
    utterance_id: &str,
    phoneset: &PhoneSet,
) -> Result<Alignment, LabelError> {
    let mut segments: Vec<Segment> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (start, end, phone) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(e), Some(p), None) => (s, e, p),
            _ => return Err(LabelError::MalformedLine(line_no)),
        };
        let start = parse_time(start).ok_or(LabelError::MalformedLine(line_no))?;
        let end = parse_time(end).ok_or(LabelError::MalformedLine(line_no))?;
        if end <= start {
            return Err(LabelError::MalformedLine(line_no));
        }
        if !phoneset.contains(phone) {
            return Err(LabelError::UnknownPhone(phone.to_string(), line_no));
        }
        if let Some(prev) = segments.last() {
            if prev.end != start {
                return Err(LabelError::NonContiguous(line_no));
            }
        }
        segments.push(Segment::new(phone, start, end));
    }
    if segments.is_empty() {
        return Err(LabelError::EmptyFile);
    }
    Alignment::new(utterance_id, segments)
}

fn parse_time(field: &str) -> Option<f64> {
    let t: f64 = field.trim().parse().ok()?;
    (t.is_finite() && t >= 0.0).then_some(t)
}

/// Write an alignment as a label file with six-decimal times.
pub fn serialize_label_file(alignment: &Alignment) -> String {
    let mut out = String::with_capacity(alignment.len() * 24);
    for seg in alignment.segments() {
        out.push_str(&format!("{:.6}\t{:.6}\t{}\n", seg.start, seg.end, seg.phone));
    }
    out
}
