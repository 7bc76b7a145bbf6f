//! Phone-by-phone comparison of a reference and a hypothesis alignment.
//!
//! The two phone strings are aligned with a class-aware edit distance.
//! Matched phones with the same (mapped) symbol whose time spans overlap are
//! *position* pairs; everything else is a *recognition* error and carries no
//! information about the systematic boundary error.
//!
//! The boundary error of a position pair is taken on the right-side marker:
//! `err = ref.end - hyp.end`, signed. A positive value means the hypothesis
//! marker is early.

use std::collections::HashMap;

use thiserror::Error;

use crate::label::{Alignment, PhoneSet, Segment};

/// Errors larger than this (in seconds) are counted as significant.
pub const SIGNIFICANCE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("reference `{reference}` and hypothesis `{hypothesis}` are different utterances")]
    UtteranceMismatch { reference: String, hypothesis: String },
    #[error("line {0}: malformed symbol-map record")]
    MalformedSymbolMap(usize),
    #[error("hypothesis replacement has a different phone sequence")]
    PhoneSequenceMismatch,
}

/// Hypothesis-symbol to reference-symbol mapping, for aligners with
/// different phone inventories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolMap {
    map: HashMap<String, String>,
}

impl SymbolMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, hyp: impl Into<String>, reference: impl Into<String>) {
        self.map.insert(hyp.into(), reference.into());
    }

    /// The reference-side symbol for `hyp`; unmapped symbols map to themselves.
    pub fn map<'a>(&'a self, hyp: &'a str) -> &'a str {
        self.map.get(hyp).map(String::as_str).unwrap_or(hyp)
    }

    /// Parse `hyp_symbol<TAB>ref_symbol` lines.
    pub fn parse(text: &str) -> Result<Self, CompareError> {
        let mut out = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                [h, r] if !h.is_empty() && !r.is_empty() => out.insert(*h, *r),
                _ => return Err(CompareError::MalformedSymbolMap(i + 1)),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Position,
    Recognition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingConfig {
    /// Matched phones need an intersection-over-union strictly above this to
    /// count as a position pair. Zero means any positive overlap.
    pub min_iou: f64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self { min_iou: 0.0 }
    }
}

/// One step of the phone-string alignment. A missing side is a placeholder
/// for an inserted or deleted phone.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSegment {
    pub ref_index: Option<usize>,
    pub hyp_index: Option<usize>,
    pub ref_seg: Option<Segment>,
    pub hyp_seg: Option<Segment>,
    pub kind: ErrorKind,
    /// Set when the reference segment closes the utterance.
    pub ref_is_last: bool,
    /// Set when the hypothesis segment closes the utterance.
    pub hyp_is_last: bool,
}

impl PairedSegment {
    pub fn is_position(&self) -> bool {
        self.kind == ErrorKind::Position
    }
}

/// A signed right-boundary error for one position pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryErrorRecord {
    pub utterance_id: String,
    /// Index of the phone in the hypothesis alignment.
    pub phone_index: usize,
    pub phone: String,
    pub err: f64,
    pub significant: bool,
}

impl BoundaryErrorRecord {
    pub fn new(utterance_id: impl Into<String>, phone_index: usize, phone: impl Into<String>, err: f64) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            phone_index,
            phone: phone.into(),
            err,
            significant: err.abs() > SIGNIFICANCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Match,
    Delete,
    Insert,
}

// Costs are doubled so the half-cost same-class substitution stays integral.
const COST_SAME: u32 = 0;
const COST_SAME_CLASS: u32 = 1;
const COST_OTHER: u32 = 2;
const COST_INDEL: u32 = 2;

fn substitution_cost(a: &str, b: &str, phoneset: &PhoneSet) -> u32 {
    if a == b {
        return COST_SAME;
    }
    match (phoneset.class_of(a), phoneset.class_of(b)) {
        (Some(x), Some(y)) if x == y => COST_SAME_CLASS,
        _ => COST_OTHER,
    }
}

/// Align `reference` and `hypothesis` phone by phone.
///
/// Symbol classes are looked up in `phoneset` after applying `symbol_map` to
/// hypothesis symbols.
pub fn pair_alignments(
    reference: &Alignment,
    hypothesis: &Alignment,
    phoneset: &PhoneSet,
    symbol_map: Option<&SymbolMap>,
    config: &PairingConfig,
) -> Result<Vec<PairedSegment>, CompareError> {
    if reference.utterance_id() != hypothesis.utterance_id() {
        return Err(CompareError::UtteranceMismatch {
            reference: reference.utterance_id().to_string(),
            hypothesis: hypothesis.utterance_id().to_string(),
        });
    }
    let refs = reference.segments();
    let hyps = hypothesis.segments();
    let mapped: Vec<&str> = hyps
        .iter()
        .map(|s| symbol_map.map_or(s.phone.as_str(), |m| m.map(&s.phone)))
        .collect();

    let steps = edit_path(refs, &mapped, phoneset);

    let mut pairs = Vec::with_capacity(steps.len());
    let (mut i, mut j) = (0usize, 0usize);
    for step in &steps {
        let pair = match step {
            Step::Match => {
                let (r, h) = (&refs[i], &hyps[j]);
                let overlap = r.overlap(h);
                let union = r.end.max(h.end) - r.start.min(h.start);
                let same = r.phone == mapped[j];
                let kind = if same && overlap > 0.0 && overlap / union > config.min_iou {
                    ErrorKind::Position
                } else {
                    ErrorKind::Recognition
                };
                let p = PairedSegment {
                    ref_index: Some(i),
                    hyp_index: Some(j),
                    ref_seg: Some(r.clone()),
                    hyp_seg: Some(h.clone()),
                    kind,
                    ref_is_last: i + 1 == refs.len(),
                    hyp_is_last: j + 1 == hyps.len(),
                };
                i += 1;
                j += 1;
                p
            }
            Step::Delete => {
                let p = PairedSegment {
                    ref_index: Some(i),
                    hyp_index: None,
                    ref_seg: Some(refs[i].clone()),
                    hyp_seg: None,
                    kind: ErrorKind::Recognition,
                    ref_is_last: i + 1 == refs.len(),
                    hyp_is_last: false,
                };
                i += 1;
                p
            }
            Step::Insert => {
                let p = PairedSegment {
                    ref_index: None,
                    hyp_index: Some(j),
                    ref_seg: None,
                    hyp_seg: Some(hyps[j].clone()),
                    kind: ErrorKind::Recognition,
                    ref_is_last: false,
                    hyp_is_last: j + 1 == hyps.len(),
                };
                j += 1;
                p
            }
        };
        pairs.push(pair);
    }

    // Phones next to an insertion or deletion have a displaced boundary.
    for (k, step) in steps.iter().enumerate() {
        if *step != Step::Match {
            if k > 0 {
                pairs[k - 1].kind = ErrorKind::Recognition;
            }
            if k + 1 < pairs.len() {
                pairs[k + 1].kind = ErrorKind::Recognition;
            }
        }
    }
    Ok(pairs)
}

/// Minimal-cost edit path. Ties prefer a match/substitution, then a
/// deletion (reference-only step), then an insertion.
fn edit_path(refs: &[Segment], mapped: &[&str], phoneset: &PhoneSet) -> Vec<Step> {
    let (n, m) = (refs.len(), mapped.len());
    let width = m + 1;
    let mut cost = vec![0u32; (n + 1) * width];
    for i in 1..=n {
        cost[i * width] = i as u32 * COST_INDEL;
    }
    for (j, c) in cost.iter_mut().enumerate().take(width).skip(1) {
        *c = j as u32 * COST_INDEL;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = cost[(i - 1) * width + j - 1] + substitution_cost(&refs[i - 1].phone, mapped[j - 1], phoneset);
            let del = cost[(i - 1) * width + j] + COST_INDEL;
            let ins = cost[i * width + j - 1] + COST_INDEL;
            cost[i * width + j] = sub.min(del).min(ins);
        }
    }

    // Walk back from the end; at each cell take the first optimal move in
    // tie-break order.
    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0
            && j > 0
            && here == cost[(i - 1) * width + j - 1] + substitution_cost(&refs[i - 1].phone, mapped[j - 1], phoneset)
        {
            steps.push(Step::Match);
            i -= 1;
            j -= 1;
        } else if i > 0 && here == cost[(i - 1) * width + j] + COST_INDEL {
            steps.push(Step::Delete);
            i -= 1;
        } else {
            steps.push(Step::Insert);
            j -= 1;
        }
    }
    steps.reverse();
    steps
}

/// Signed right-boundary errors for every position pair.
///
/// The utterance-final boundary is shared by both aligners and is skipped.
pub fn compute_errors(utterance_id: &str, pairs: &[PairedSegment]) -> Vec<BoundaryErrorRecord> {
    pairs
        .iter()
        .filter(|p| p.is_position() && !p.ref_is_last && !p.hyp_is_last)
        .filter_map(|p| {
            let (r, h) = (p.ref_seg.as_ref()?, p.hyp_seg.as_ref()?);
            Some(BoundaryErrorRecord::new(utterance_id, p.hyp_index?, h.phone.clone(), r.end - h.end))
        })
        .collect()
}

/// Drop recognition errors, keeping the unified (reference, hypothesis)
/// transcription and the fraction of units discarded.
pub fn preprocess(pairs: &[PairedSegment]) -> (Vec<(Segment, Segment)>, f64) {
    if pairs.is_empty() {
        return (Vec::new(), 0.0);
    }
    let unified: Vec<(Segment, Segment)> = pairs
        .iter()
        .filter(|p| p.is_position())
        .filter_map(|p| Some((p.ref_seg.clone()?, p.hyp_seg.clone()?)))
        .collect();
    let discarded = (pairs.len() - unified.len()) as f64 / pairs.len() as f64;
    (unified, discarded)
}

/// Re-point a pairing at another alignment with the same phone sequence as
/// the original hypothesis (for instance its corrected version), keeping the
/// pair kinds. This holds the evaluated boundary population fixed across
/// alignment variants.
pub fn rebind_hypothesis(
    pairs: &[PairedSegment],
    variant: &Alignment,
) -> Result<Vec<PairedSegment>, CompareError> {
    let hyp_count = pairs.iter().filter(|p| p.hyp_index.is_some()).count();
    if hyp_count != variant.len() {
        return Err(CompareError::PhoneSequenceMismatch);
    }
    pairs
        .iter()
        .map(|p| {
            let mut out = p.clone();
            if let (Some(j), Some(old)) = (p.hyp_index, p.hyp_seg.as_ref()) {
                let seg = &variant.segments()[j];
                if seg.phone != old.phone {
                    return Err(CompareError::PhoneSequenceMismatch);
                }
                out.hyp_seg = Some(seg.clone());
            }
            Ok(out)
        })
        .collect()
}
