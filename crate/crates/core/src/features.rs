//! Utterance structure (words, syllables, phones) and context-dependent
//! feature vectors ("senones") for each phone.
//!
//! Features are named and selected by a [`FeatureSchema`]. The default schema
//! has 21 entries; schema files may reorder, drop, or add features from the
//! registry, including windowed phone features of any depth such as
//! `phone_class@-3` or `phone_symbol@+2`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::label::{Alignment, PhoneClass, PhoneSet};

/// Category used for context that falls outside the utterance.
pub const NONE: &str = "none";
pub const YES: &str = "yes";
pub const NO: &str = "no";
pub const SILENCE: &str = "silence";

const NUMERIC_MAX: i64 = 9999;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("structure document: {0}")]
    Json(String),
    #[error("word {word}: syllable {syllable} has no phones")]
    EmptySyllable { word: usize, syllable: usize },
    #[error("word {0} has no syllables")]
    EmptyWord(usize),
    #[error("utterance has no phones")]
    EmptyUtterance,
    #[error("phone `{0}` is not in the phone set")]
    PhoneNotInPhoneSet(String),
    #[error("word {0} contains a silence phone")]
    SilenceInWord(usize),
    #[error("pause `{0}` is not a silence phone")]
    PauseNotSilence(String),
    #[error("structure and alignment differ at phone {index}: `{structure}` vs `{alignment}`")]
    StructureAlignmentMismatch { index: usize, structure: String, alignment: String },
    #[error("phone index {index} out of range (utterance has {len} phones)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` declared with the wrong kind")]
    KindMismatch(String),
    #[error("duplicate feature `{0}`")]
    DuplicateFeature(String),
    #[error("feature `{feature}`: value `{value}` outside the declared domain")]
    DomainViolation { feature: String, value: String },
    #[error("line {0}: malformed schema record")]
    MalformedSchemaLine(usize),
    #[error("schema has no features")]
    EmptySchema,
    #[error("expected {expected} feature values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
}

// --- utterance structure -------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Syllable {
    #[serde(default)]
    pub stressed: bool,
    pub phones: Vec<String>,
}

/// A word, or a pause pseudo-word holding a single silence phone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub syllables: Vec<Syllable>,
    pub pause: bool,
}

impl Word {
    pub fn new(text: impl Into<String>, syllables: Vec<Syllable>) -> Self {
        Self { text: text.into(), syllables, pause: false }
    }

    pub fn pause(symbol: impl Into<String>) -> Self {
        let symbol = symbol.into();
        Self {
            text: symbol.clone(),
            syllables: vec![Syllable { stressed: false, phones: vec![symbol] }],
            pause: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Slot {
    word: usize,
    syllable: usize,
    position: usize,
    // Real (non-pause) words and syllables before this phone's own.
    word_ordinal: usize,
    syllable_ordinal: usize,
    stressed_before: usize,
}

/// Word / syllable / phone relation structure of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceStructure {
    utterance_id: String,
    words: Vec<Word>,
    phones: Vec<String>,
    classes: Vec<PhoneClass>,
    slots: Vec<Slot>,
    real_words: usize,
    stressed_total: usize,
}

impl UtteranceStructure {
    pub fn new(
        utterance_id: impl Into<String>,
        words: Vec<Word>,
        phoneset: &PhoneSet,
    ) -> Result<Self, FeatureError> {
        let mut phones = Vec::new();
        let mut classes = Vec::new();
        let mut slots = Vec::new();
        let (mut word_ordinal, mut syllable_ordinal, mut stressed_before) = (0, 0, 0);
        for (w, word) in words.iter().enumerate() {
            if word.syllables.is_empty() {
                return Err(FeatureError::EmptyWord(w));
            }
            if word.pause && (word.syllables.len() != 1 || word.syllables[0].phones.len() != 1) {
                return Err(FeatureError::PauseNotSilence(word.text.clone()));
            }
            for (s, syl) in word.syllables.iter().enumerate() {
                if syl.phones.is_empty() {
                    return Err(FeatureError::EmptySyllable { word: w, syllable: s });
                }
                for (p, phone) in syl.phones.iter().enumerate() {
                    let class = phoneset
                        .class_of(phone)
                        .ok_or_else(|| FeatureError::PhoneNotInPhoneSet(phone.clone()))?;
                    match (word.pause, class == PhoneClass::Silence) {
                        (true, false) => return Err(FeatureError::PauseNotSilence(phone.clone())),
                        (false, true) => return Err(FeatureError::SilenceInWord(w)),
                        _ => {}
                    }
                    phones.push(phone.clone());
                    classes.push(class);
                    slots.push(Slot {
                        word: w,
                        syllable: s,
                        position: p,
                        word_ordinal,
                        syllable_ordinal,
                        stressed_before,
                    });
                }
                if !word.pause {
                    syllable_ordinal += 1;
                    stressed_before += usize::from(syl.stressed);
                }
            }
            if !word.pause {
                word_ordinal += 1;
            }
        }
        if phones.is_empty() {
            return Err(FeatureError::EmptyUtterance);
        }
        Ok(Self {
            utterance_id: utterance_id.into(),
            words,
            phones,
            classes,
            slots,
            real_words: word_ordinal,
            stressed_total: stressed_before,
        })
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// The flattened phone sequence, pauses included.
    pub fn phones(&self) -> &[String] {
        &self.phones
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn stressed_syllable_count(&self) -> usize {
        self.stressed_total
    }

    pub fn class_at(&self, index: usize) -> Option<PhoneClass> {
        self.classes.get(index).copied()
    }

    /// Class of the phone `offset` positions away from `index`, `None`
    /// outside the utterance.
    pub fn class_at_offset(&self, index: usize, offset: isize) -> Option<PhoneClass> {
        let k = index as isize + offset;
        (k >= 0).then(|| self.class_at(k as usize)).flatten()
    }

    fn symbol_at_offset(&self, index: usize, offset: isize) -> Option<&str> {
        let k = index as isize + offset;
        (k >= 0).then(|| self.phones.get(k as usize).map(String::as_str)).flatten()
    }

    /// Fail unless the flattened phones equal the alignment's phones.
    pub fn check_alignment(&self, alignment: &Alignment) -> Result<(), FeatureError> {
        let mut aligned = alignment.phones();
        for (index, phone) in self.phones.iter().enumerate() {
            match aligned.next() {
                Some(a) if a == phone => {}
                other => {
                    return Err(FeatureError::StructureAlignmentMismatch {
                        index,
                        structure: phone.clone(),
                        alignment: other.unwrap_or("<end>").to_string(),
                    })
                }
            }
        }
        if let Some(extra) = aligned.next() {
            return Err(FeatureError::StructureAlignmentMismatch {
                index: self.phones.len(),
                structure: "<end>".to_string(),
                alignment: extra.to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct StructureDoc {
    utterance_id: String,
    words: Vec<WordDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WordDoc {
    Pause { pause: String },
    Word { text: String, syllables: Vec<Syllable> },
}

/// Parse a JSON utterance-structure document.
///
/// ```json
/// {"utterance_id": "u1", "words": [
///   {"text": "in", "syllables": [{"stressed": true, "phones": ["i1", "n"]}]},
///   {"pause": "sil"}
/// ]}
/// ```
pub fn parse_utterance_structure(text: &str, phoneset: &PhoneSet) -> Result<UtteranceStructure, FeatureError> {
    let doc: StructureDoc = serde_json::from_str(text).map_err(|e| FeatureError::Json(e.to_string()))?;
    let words = doc
        .words
        .into_iter()
        .map(|w| match w {
            WordDoc::Pause { pause } => Word::pause(pause),
            WordDoc::Word { text, syllables } => Word::new(text, syllables),
        })
        .collect();
    UtteranceStructure::new(doc.utterance_id, words, phoneset)
}

pub fn serialize_utterance_structure(u: &UtteranceStructure) -> String {
    let doc = StructureDoc {
        utterance_id: u.utterance_id.clone(),
        words: u
            .words
            .iter()
            .map(|w| {
                if w.pause {
                    WordDoc::Pause { pause: w.text.clone() }
                } else {
                    WordDoc::Word { text: w.text.clone(), syllables: w.syllables.clone() }
                }
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("structure documents always serialize");
    out.push('\n');
    out
}

// --- schema ---------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Categorical,
    Numeric,
}

impl FeatureKind {
    fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Categorical => "categorical",
            FeatureKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Domain {
    Values(Vec<String>),
    Range(i64, i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureValue {
    Cat(String),
    Num(i64),
}

impl FeatureValue {
    pub fn as_cat(&self) -> Option<&str> {
        match self {
            FeatureValue::Cat(s) => Some(s),
            FeatureValue::Num(_) => None,
        }
    }

    pub fn as_num(&self) -> Option<i64> {
        match self {
            FeatureValue::Num(n) => Some(*n),
            FeatureValue::Cat(_) => None,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Cat(s) => f.write_str(s),
            FeatureValue::Num(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Extractor {
    PhoneClass(isize),
    PhoneSymbol(isize),
    StressedVowel(isize),
    SyllableStressed,
    PosInSyllable,
    SyllableLen,
    PosOfSyllableInWord,
    WordSyllableCount,
    WordIndex,
    WordsInUtterance,
    StressedBefore,
    StressedAfter,
    PhonesSinceSilence,
    PhonesToSilence,
    SyllableIndex,
    WordFinalPhone,
}

impl Extractor {
    fn resolve(name: &str) -> Option<Extractor> {
        use Extractor::*;
        let fixed = match name {
            "cur_phone_class" => PhoneClass(0),
            "cur_is_stressed_vowel" => StressedVowel(0),
            "prev_phone_class" => PhoneClass(-1),
            "prev2_phone_class" => PhoneClass(-2),
            "next_phone_class" => PhoneClass(1),
            "next2_phone_class" => PhoneClass(2),
            "prev_phone_symbol" => PhoneSymbol(-1),
            "next_phone_symbol" => PhoneSymbol(1),
            "syllable_stressed" => SyllableStressed,
            "pos_in_syllable" => PosInSyllable,
            "syllable_len_phones" => SyllableLen,
            "pos_of_syllable_in_word" => PosOfSyllableInWord,
            "word_syllable_count" => WordSyllableCount,
            "word_index_in_utterance" => WordIndex,
            "words_in_utterance" => WordsInUtterance,
            "stressed_syllables_before" => StressedBefore,
            "stressed_syllables_after" => StressedAfter,
            "phones_since_last_silence" => PhonesSinceSilence,
            "phones_to_next_silence" => PhonesToSilence,
            "syllable_index_in_utterance" => SyllableIndex,
            "is_word_final_phone" => WordFinalPhone,
            _ => {
                let (family, offset) = name.split_once('@')?;
                let offset: isize = offset.strip_prefix('+').unwrap_or(offset).parse().ok()?;
                return match family {
                    "phone_class" => Some(PhoneClass(offset)),
                    "phone_symbol" => Some(PhoneSymbol(offset)),
                    "stressed_vowel" => Some(StressedVowel(offset)),
                    _ => None,
                };
            }
        };
        Some(fixed)
    }

    fn kind(self) -> FeatureKind {
        use Extractor::*;
        match self {
            PhoneClass(_) | PhoneSymbol(_) | StressedVowel(_) | SyllableStressed | PosInSyllable
            | PosOfSyllableInWord | WordFinalPhone => FeatureKind::Categorical,
            _ => FeatureKind::Numeric,
        }
    }

    /// The natural domain of the feature for a given phone set.
    fn default_domain(self, phoneset: &PhoneSet) -> Domain {
        use Extractor::*;
        let values = |v: &[&str]| Domain::Values(v.iter().map(|s| s.to_string()).collect());
        match self {
            PhoneClass(_) => values(&["vowel", "consonant", SILENCE, NONE]),
            PhoneSymbol(_) => {
                let mut v: Vec<String> = phoneset.symbols().map(str::to_string).collect();
                v.push(NONE.to_string());
                Domain::Values(v)
            }
            StressedVowel(_) => values(&[YES, NO, NONE]),
            SyllableStressed | WordFinalPhone => values(&[YES, NO]),
            PosInSyllable => values(&["onset", "nucleus", "coda", SILENCE]),
            PosOfSyllableInWord => values(&["initial", "medial", "final", "single", SILENCE]),
            _ => Domain::Range(0, NUMERIC_MAX),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    pub domain: Domain,
    extractor: Extractor,
    allowed: BTreeSet<String>,
}

impl PartialEq for FeatureDef {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.kind == other.kind && self.domain == other.domain
    }
}

/// Ordered, named feature set with a content hash.
#[derive(Debug, Clone)]
pub struct FeatureSchema {
    features: Vec<FeatureDef>,
    index: HashMap<String, usize>,
    hash: String,
}

impl PartialEq for FeatureSchema {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash && self.features == other.features
    }
}

/// Names of the default schema, in order.
pub const DEFAULT_FEATURES: [&str; 21] = [
    "cur_phone_class",
    "cur_is_stressed_vowel",
    "prev_phone_class",
    "prev2_phone_class",
    "next_phone_class",
    "next2_phone_class",
    "prev_phone_symbol",
    "next_phone_symbol",
    "syllable_stressed",
    "pos_in_syllable",
    "syllable_len_phones",
    "pos_of_syllable_in_word",
    "word_syllable_count",
    "word_index_in_utterance",
    "words_in_utterance",
    "stressed_syllables_before",
    "stressed_syllables_after",
    "phones_since_last_silence",
    "phones_to_next_silence",
    "syllable_index_in_utterance",
    "is_word_final_phone",
];

impl FeatureSchema {
    /// Build a schema from `(name, kind, domain)` triples.
    pub fn new(defs: Vec<(String, FeatureKind, Domain)>) -> Result<Self, FeatureError> {
        if defs.is_empty() {
            return Err(FeatureError::EmptySchema);
        }
        let mut features = Vec::with_capacity(defs.len());
        let mut index = HashMap::new();
        for (name, kind, domain) in defs {
            let extractor = Extractor::resolve(&name).ok_or_else(|| FeatureError::UnknownFeature(name.clone()))?;
            let domain_kind = match domain {
                Domain::Values(_) => FeatureKind::Categorical,
                Domain::Range(..) => FeatureKind::Numeric,
            };
            if extractor.kind() != kind || domain_kind != kind {
                return Err(FeatureError::KindMismatch(name));
            }
            if index.insert(name.clone(), features.len()).is_some() {
                return Err(FeatureError::DuplicateFeature(name));
            }
            let allowed = match &domain {
                Domain::Values(v) => v.iter().cloned().collect(),
                Domain::Range(..) => BTreeSet::new(),
            };
            features.push(FeatureDef { name, kind, domain, extractor, allowed });
        }
        let mut schema = Self { features, index, hash: String::new() };
        let digest = Sha256::digest(schema.serialize().as_bytes());
        schema.hash = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Ok(schema)
    }

    /// The 21-feature default schema, with symbol domains taken from `phoneset`.
    pub fn default_for(phoneset: &PhoneSet) -> Self {
        Self::from_names(&DEFAULT_FEATURES, phoneset).expect("default feature names resolve")
    }

    /// A schema of registry features with their natural domains.
    pub fn from_names<S: AsRef<str>>(names: &[S], phoneset: &PhoneSet) -> Result<Self, FeatureError> {
        let defs = names
            .iter()
            .map(|n| {
                let name = n.as_ref();
                let ex = Extractor::resolve(name).ok_or_else(|| FeatureError::UnknownFeature(name.to_string()))?;
                Ok((name.to_string(), ex.kind(), ex.default_domain(phoneset)))
            })
            .collect::<Result<Vec<_>, FeatureError>>()?;
        Self::new(defs)
    }

    /// Parse `name<TAB>kind<TAB>domain` lines. Categorical domains are
    /// comma-separated values, numeric domains `lo..hi` (inclusive).
    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let mut defs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let bad = || FeatureError::MalformedSchemaLine(i + 1);
            let fields: Vec<&str> = line.split('\t').collect();
            let [name, kind, domain] = fields.as_slice() else {
                return Err(bad());
            };
            let (kind, domain) = match *kind {
                "categorical" => {
                    let values: Vec<String> = domain.split(',').map(str::to_string).collect();
                    if values.iter().any(String::is_empty) {
                        return Err(bad());
                    }
                    (FeatureKind::Categorical, Domain::Values(values))
                }
                "numeric" => {
                    let (lo, hi) = domain.split_once("..").ok_or_else(bad)?;
                    let lo: i64 = lo.parse().map_err(|_| bad())?;
                    let hi: i64 = hi.parse().map_err(|_| bad())?;
                    if lo > hi {
                        return Err(bad());
                    }
                    (FeatureKind::Numeric, Domain::Range(lo, hi))
                }
                _ => return Err(bad()),
            };
            defs.push((name.to_string(), kind, domain));
        }
        Self::new(defs)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for f in &self.features {
            let domain = match &f.domain {
                Domain::Values(v) => v.join(","),
                Domain::Range(lo, hi) => format!("{lo}..{hi}"),
            };
            out.push_str(&format!("{}\t{}\t{}\n", f.name, f.kind.as_str(), domain));
        }
        out
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn feature(&self, index: usize) -> &FeatureDef {
        &self.features[index]
    }
}

// --- senones --------------------------------------------------------------

/// Feature vector of one phone under a given schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Senone {
    schema: Arc<FeatureSchema>,
    values: Vec<FeatureValue>,
}

impl Senone {
    /// Wrap raw values, checking arity, kinds, and domains against `schema`.
    pub fn new(schema: Arc<FeatureSchema>, values: Vec<FeatureValue>) -> Result<Self, FeatureError> {
        if values.len() != schema.len() {
            return Err(FeatureError::ArityMismatch { expected: schema.len(), got: values.len() });
        }
        for (def, value) in schema.features().iter().zip(&values) {
            check_domain(def, value)?;
        }
        Ok(Self { schema, values })
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn schema_hash(&self) -> &str {
        self.schema.hash()
    }

    pub fn values(&self) -> &[FeatureValue] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<&FeatureValue> {
        self.schema.index_of(name).map(|i| &self.values[i])
    }

    /// `(name, value)` pairs in schema order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &FeatureValue)> {
        self.schema.features().iter().map(|f| f.name.as_str()).zip(&self.values)
    }
}

fn check_domain(def: &FeatureDef, value: &FeatureValue) -> Result<(), FeatureError> {
    let ok = match (&def.domain, value) {
        (Domain::Values(_), FeatureValue::Cat(s)) => def.allowed.contains(s),
        (Domain::Range(lo, hi), FeatureValue::Num(n)) => lo <= n && n <= hi,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(FeatureError::DomainViolation { feature: def.name.clone(), value: value.to_string() })
    }
}

fn yes_no(b: bool) -> FeatureValue {
    FeatureValue::Cat(if b { YES } else { NO }.to_string())
}

fn cat(s: &str) -> FeatureValue {
    FeatureValue::Cat(s.to_string())
}

fn count(n: usize) -> FeatureValue {
    FeatureValue::Num(n as i64)
}

fn extract_one(u: &UtteranceStructure, phoneset: &PhoneSet, index: usize, ex: Extractor) -> FeatureValue {
    use Extractor::*;
    let slot = &u.slots[index];
    let word = &u.words[slot.word];
    let syllable = &word.syllables[slot.syllable];
    let is_pause = word.pause;
    match ex {
        PhoneClass(k) => cat(u.class_at_offset(index, k).map_or(NONE, crate::label::PhoneClass::as_str)),
        PhoneSymbol(k) => cat(u.symbol_at_offset(index, k).unwrap_or(NONE)),
        StressedVowel(k) => match u.symbol_at_offset(index, k) {
            Some(s) => yes_no(phoneset.get(s).is_some_and(|i| i.stressed_vowel)),
            None => cat(NONE),
        },
        SyllableStressed => yes_no(!is_pause && syllable.stressed),
        PosInSyllable => {
            if is_pause {
                return cat(SILENCE);
            }
            let nucleus = syllable
                .phones
                .iter()
                .position(|p| phoneset.class_of(p) == Some(crate::label::PhoneClass::Vowel));
            let label = match nucleus {
                Some(v) if slot.position < v => "onset",
                Some(_) if u.classes[index] == crate::label::PhoneClass::Vowel => "nucleus",
                Some(_) => "coda",
                None => "onset",
            };
            cat(label)
        }
        SyllableLen => count(syllable.phones.len()),
        PosOfSyllableInWord => {
            let n = word.syllables.len();
            cat(match (is_pause, n, slot.syllable) {
                (true, ..) => SILENCE,
                (false, 1, _) => "single",
                (false, _, 0) => "initial",
                (false, n, s) if s + 1 == n => "final",
                _ => "medial",
            })
        }
        WordSyllableCount => count(if is_pause { 0 } else { word.syllables.len() }),
        WordIndex => count(slot.word_ordinal),
        WordsInUtterance => count(u.real_words),
        StressedBefore => count(slot.stressed_before),
        StressedAfter => {
            let own = usize::from(!is_pause && syllable.stressed);
            count(u.stressed_total - slot.stressed_before - own)
        }
        PhonesSinceSilence => {
            if u.classes[index] == crate::label::PhoneClass::Silence {
                return count(0);
            }
            count(
                u.classes[..index]
                    .iter()
                    .rev()
                    .take_while(|c| **c != crate::label::PhoneClass::Silence)
                    .count(),
            )
        }
        PhonesToSilence => {
            if u.classes[index] == crate::label::PhoneClass::Silence {
                return count(0);
            }
            count(
                u.classes[index + 1..]
                    .iter()
                    .take_while(|c| **c != crate::label::PhoneClass::Silence)
                    .count(),
            )
        }
        SyllableIndex => count(slot.syllable_ordinal),
        WordFinalPhone => {
            yes_no(!is_pause && slot.syllable + 1 == word.syllables.len() && slot.position + 1 == syllable.phones.len())
        }
    }
}

/// The senone of phone `phone_index` under `schema`.
pub fn extract_senone(
    u: &UtteranceStructure,
    phoneset: &PhoneSet,
    phone_index: usize,
    schema: &Arc<FeatureSchema>,
) -> Result<Senone, FeatureError> {
    if phone_index >= u.len() {
        return Err(FeatureError::IndexOutOfRange { index: phone_index, len: u.len() });
    }
    let values = schema
        .features()
        .iter()
        .map(|def| {
            let v = extract_one(u, phoneset, phone_index, def.extractor);
            check_domain(def, &v).map(|_| v)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Senone { schema: Arc::clone(schema), values })
}

/// Senones for every phone of the utterance, in order.
pub fn extract_senones(
    u: &UtteranceStructure,
    phoneset: &PhoneSet,
    schema: &Arc<FeatureSchema>,
) -> Result<Vec<Senone>, FeatureError> {
    (0..u.len()).map(|i| extract_senone(u, phoneset, i, schema)).collect()
}
