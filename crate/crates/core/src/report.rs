//! Corpus-level and per-triphone error statistics.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::compare::BoundaryErrorRecord;
use crate::features::UtteranceStructure;
use crate::label::{PhoneClass, PhoneSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("no error records")]
    EmptyRecords,
    #[error("{records} records but {labels} labels")]
    LengthMismatch { records: usize, labels: usize },
    #[error("phone index {index} out of range for {len} phones")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("baseline total error is zero")]
    ZeroBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusMetrics {
    /// Sum of |err|, seconds.
    pub total_error: f64,
    /// `total_error / boundary_count`.
    pub mean_error: f64,
    pub mean_signed_error: f64,
    /// Population standard deviation of the signed errors.
    pub stddev: f64,
    pub boundary_count: usize,
    pub significant_count: usize,
}

pub fn corpus_metrics(records: &[BoundaryErrorRecord]) -> Result<CorpusMetrics, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyRecords);
    }
    let n = records.len() as f64;
    let total_error: f64 = records.iter().map(|r| r.err.abs()).sum();
    let mean_signed_error = records.iter().map(|r| r.err).sum::<f64>() / n;
    let var = records.iter().map(|r| (r.err - mean_signed_error).powi(2)).sum::<f64>() / n;
    Ok(CorpusMetrics {
        total_error,
        mean_error: total_error / n,
        mean_signed_error,
        stddev: var.sqrt(),
        boundary_count: records.len(),
        significant_count: records.iter().filter(|r| r.significant).count(),
    })
}

/// Relative reduction of total error from `before` to `after`.
pub fn improvement(before: &CorpusMetrics, after: &CorpusMetrics) -> Result<f64, ReportError> {
    if before.total_error <= 0.0 {
        return Err(ReportError::ZeroBaseline);
    }
    Ok((before.total_error - after.total_error) / before.total_error)
}

/// Three-letter V/C/- label of a phone and its neighbours. Context outside
/// the utterance counts as a pause.
pub fn triphone_class(phoneset: &PhoneSet, u: &UtteranceStructure, phone_index: usize) -> Result<String, ReportError> {
    if phone_index >= u.len() {
        return Err(ReportError::IndexOutOfRange { index: phone_index, len: u.len() });
    }
    let letter = |offset: isize| {
        let k = phone_index as isize + offset;
        if k < 0 {
            return PhoneClass::Silence.letter();
        }
        u.phones()
            .get(k as usize)
            .and_then(|p| phoneset.class_of(p))
            .unwrap_or(PhoneClass::Silence)
            .letter()
    };
    Ok([letter(-1), letter(0), letter(1)].iter().collect())
}

/// All 27 triphone labels in a fixed order (V, C, - per position).
pub fn all_triphone_labels() -> Vec<String> {
    let letters = ['V', 'C', '-'];
    let mut out = Vec::with_capacity(27);
    for a in letters {
        for b in letters {
            for c in letters {
                out.push([a, b, c].iter().collect());
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassStats {
    pub count: usize,
    pub mean_abs_error: f64,
    pub mean_signed_error: f64,
    /// Class share of the corpus sum of |err|; 0 when the corpus sum is 0.
    pub share_of_total_error: f64,
}

/// Per-triphone aggregation. Every one of the 27 labels is present.
pub fn triphone_stats(
    records: &[BoundaryErrorRecord],
    labels: &[String],
) -> Result<BTreeMap<String, ClassStats>, ReportError> {
    if records.len() != labels.len() {
        return Err(ReportError::LengthMismatch { records: records.len(), labels: labels.len() });
    }
    let mut sums: BTreeMap<String, (usize, f64, f64)> =
        all_triphone_labels().into_iter().map(|l| (l, (0, 0.0, 0.0))).collect();
    for (r, l) in records.iter().zip(labels) {
        let slot = sums.entry(l.clone()).or_default();
        slot.0 += 1;
        slot.1 += r.err.abs();
        slot.2 += r.err;
    }
    let total: f64 = records.iter().map(|r| r.err.abs()).sum();
    Ok(sums
        .into_iter()
        .map(|(label, (count, abs, signed))| {
            let stats = if count == 0 {
                ClassStats::default()
            } else {
                ClassStats {
                    count,
                    mean_abs_error: abs / count as f64,
                    mean_signed_error: signed / count as f64,
                    share_of_total_error: if total > 0.0 { abs / total } else { 0.0 },
                }
            };
            (label, stats)
        })
        .collect())
}
