//! Tree-driven boundary correction.
//!
//! Boundary `i` is the right edge of segment `i`. It is moved by the tree's
//! prediction for the senone of phone `i`, then clamped so that both
//! neighbouring segments keep at least `min_dur`. Boundaries are processed
//! left to right; the window is bounded by the already-corrected left
//! boundary and the uncorrected right boundary. Work is done on the
//! microsecond grid, so predictions are rounded to whole microseconds.

use std::sync::Arc;

use thiserror::Error;

use crate::cart::{predict, CartError, RegressionTree};
use crate::features::{extract_senones, FeatureError, FeatureSchema, UtteranceStructure};
use crate::label::{from_ticks, to_ticks, Alignment, LabelError, PhoneSet};

pub const DEFAULT_MIN_DUR: f64 = 0.005;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrectError {
    #[error(transparent)]
    Structure(#[from] FeatureError),
    #[error(transparent)]
    Tree(#[from] CartError),
    #[error("schema mismatch: tree expects {tree}, schema is {schema}")]
    SchemaMismatch { tree: String, schema: String },
    #[error("min_dur must be positive, got {0}")]
    InvalidMinDur(f64),
    #[error(transparent)]
    Label(#[from] LabelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCorrection {
    pub phone_index: usize,
    /// Prediction rounded to the microsecond grid.
    pub predicted_shift: f64,
    pub applied_shift: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrectionReport {
    pub boundaries: Vec<BoundaryCorrection>,
}

impl CorrectionReport {
    pub fn clamped_count(&self) -> usize {
        self.boundaries.iter().filter(|b| b.clamped).count()
    }
}

/// Shift the internal boundaries of a tiling given in microseconds.
///
/// `boundaries` holds `n + 1` increasing times; `shifts[k]` moves boundary
/// `k + 1`. Returns the new boundaries and the shift actually applied to each
/// internal boundary. The clamp window is widened to contain the original
/// position, so a boundary never moves against its requested direction and
/// an input whose segments are all at least `min_dur` long stays that way.
pub fn shift_boundaries(boundaries: &[i64], shifts: &[i64], min_dur: i64) -> (Vec<i64>, Vec<i64>) {
    let n = boundaries.len().saturating_sub(1);
    assert_eq!(shifts.len(), n.saturating_sub(1), "one shift per internal boundary");
    let mut out = boundaries.to_vec();
    let mut applied = Vec::with_capacity(shifts.len());
    for k in 1..n {
        let old = boundaries[k];
        let lo = (out[k - 1] + min_dur).min(old);
        let hi = (boundaries[k + 1] - min_dur).max(old);
        let pos = (old + shifts[k - 1]).clamp(lo, hi);
        out[k] = pos;
        applied.push(pos - old);
    }
    (out, applied)
}

/// Correct every internal boundary of `hyp` using `tree`.
pub fn correct_alignment(
    hyp: &Alignment,
    u: &UtteranceStructure,
    phoneset: &PhoneSet,
    tree: &RegressionTree,
    schema: &Arc<FeatureSchema>,
    min_dur: f64,
) -> Result<(Alignment, CorrectionReport), CorrectError> {
    if !(min_dur > 0.0 && min_dur.is_finite()) {
        return Err(CorrectError::InvalidMinDur(min_dur));
    }
    if tree.schema_hash != schema.hash() {
        return Err(CorrectError::SchemaMismatch { tree: tree.schema_hash.clone(), schema: schema.hash().to_string() });
    }
    u.check_alignment(hyp)?;
    let senones = extract_senones(u, phoneset, schema)?;
    let n = hyp.len();
    let predicted = senones[..n - 1]
        .iter()
        .map(|s| predict(tree, s).map(to_ticks))
        .collect::<Result<Vec<i64>, _>>()?;
    let ticks: Vec<i64> = hyp.boundaries().into_iter().map(to_ticks).collect();
    let (moved, applied) = shift_boundaries(&ticks, &predicted, to_ticks(min_dur));

    let boundaries: Vec<f64> = moved
        .iter()
        .zip(&ticks)
        .zip(hyp.boundaries())
        // Untouched boundaries keep their exact input value.
        .map(|((&m, &t), orig)| if m == t { orig } else { from_ticks(m) })
        .collect();
    let phones: Vec<&str> = hyp.phones().collect();
    let corrected = Alignment::from_boundaries(hyp.utterance_id(), &phones, &boundaries)?;
    let report = CorrectionReport {
        boundaries: predicted
            .iter()
            .zip(&applied)
            .enumerate()
            .map(|(i, (&p, &a))| BoundaryCorrection {
                phone_index: i,
                predicted_shift: from_ticks(p),
                applied_shift: from_ticks(a),
                clamped: p != a,
            })
            .collect(),
    };
    Ok((corrected, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cart::{Node, Test};
    use crate::features::{Syllable, Word};
    use crate::label::parse_phoneset;
    use proptest::prelude::*;

    fn phoneset() -> PhoneSet {
        parse_phoneset("sil\tsilence\na\tvowel\nt\tconsonant\n").unwrap()
    }

    fn setup(bounds: &[f64], phones: &[&str]) -> (Alignment, UtteranceStructure, Arc<FeatureSchema>) {
        let ps = phoneset();
        let hyp = Alignment::from_boundaries("u", phones, bounds).unwrap();
        let words = vec![Word::new(
            "w",
            vec![Syllable { stressed: true, phones: phones.iter().map(|p| p.to_string()).collect() }],
        )];
        let u = UtteranceStructure::new("u", words, &ps).unwrap();
        (hyp, u, Arc::new(FeatureSchema::default_for(&ps)))
    }

    fn leaf_tree(schema: &FeatureSchema, value: f64) -> RegressionTree {
        RegressionTree {
            schema_hash: schema.hash().to_string(),
            root: Node::Leaf { mean: value, stddev: 0.0, count: 1 },
        }
    }

    #[test]
    fn moves_boundary_by_prediction() {
        let (hyp, u, schema) = setup(&[0.0, 0.10, 0.20], &["t", "a"]);
        let (out, report) =
            correct_alignment(&hyp, &u, &phoneset(), &leaf_tree(&schema, 0.030), &schema, DEFAULT_MIN_DUR).unwrap();
        assert_eq!(out.boundaries(), vec![0.0, 0.13, 0.2]);
        assert!(!report.boundaries[0].clamped);
        assert_eq!(report.boundaries[0].applied_shift, 0.03);
    }

    #[test]
    fn clamps_at_right_neighbour() {
        let (hyp, u, schema) = setup(&[0.0, 0.10, 0.20], &["t", "a"]);
        let (out, report) =
            correct_alignment(&hyp, &u, &phoneset(), &leaf_tree(&schema, 0.120), &schema, DEFAULT_MIN_DUR).unwrap();
        assert_eq!(out.boundaries(), vec![0.0, 0.195, 0.2]);
        assert!(report.boundaries[0].clamped);
        assert_eq!(report.clamped_count(), 1);
    }

    #[test]
    fn zero_tree_is_identity() {
        let (hyp, u, schema) = setup(&[0.0, 0.0312, 0.1, 0.17], &["t", "a", "t"]);
        let (out, report) =
            correct_alignment(&hyp, &u, &phoneset(), &leaf_tree(&schema, 0.0), &schema, DEFAULT_MIN_DUR).unwrap();
        assert_eq!(out, hyp);
        assert!(report.boundaries.iter().all(|b| b.applied_shift == 0.0 && !b.clamped));
    }

    #[test]
    fn per_class_prediction() {
        let (hyp, u, schema) = setup(&[0.0, 0.1, 0.2, 0.3], &["t", "a", "t"]);
        let tree = RegressionTree {
            schema_hash: schema.hash().to_string(),
            root: Node::Question {
                feature: "cur_phone_class".into(),
                test: Test::Is("vowel".into()),
                yes: Box::new(Node::Leaf { mean: 0.02, stddev: 0.0, count: 1 }),
                no: Box::new(Node::Leaf { mean: -0.01, stddev: 0.0, count: 1 }),
            },
        };
        let (out, _) = correct_alignment(&hyp, &u, &phoneset(), &tree, &schema, DEFAULT_MIN_DUR).unwrap();
        assert_eq!(out.boundaries(), vec![0.0, 0.09, 0.22, 0.3]);
    }

    #[test]
    fn errors() {
        let (hyp, u, schema) = setup(&[0.0, 0.1, 0.2], &["t", "a"]);
        let ps = phoneset();
        let mut tree = leaf_tree(&schema, 0.0);
        assert!(matches!(
            correct_alignment(&hyp, &u, &ps, &tree, &schema, 0.0),
            Err(CorrectError::InvalidMinDur(_))
        ));
        let other = Alignment::from_boundaries("u", &["a", "t"], &[0.0, 0.1, 0.2]).unwrap();
        assert!(matches!(
            correct_alignment(&other, &u, &ps, &tree, &schema, DEFAULT_MIN_DUR),
            Err(CorrectError::Structure(FeatureError::StructureAlignmentMismatch { .. }))
        ));
        tree.schema_hash = "0000".into();
        assert!(matches!(
            correct_alignment(&hyp, &u, &ps, &tree, &schema, DEFAULT_MIN_DUR),
            Err(CorrectError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn left_clamp_uses_corrected_neighbour() {
        // Boundary 1 moves right by 40; boundary 2 wants to move left by 80
        // but must stay 5 after the corrected boundary 1.
        let (out, applied) = shift_boundaries(&[0, 100, 160, 300], &[40, -80], 5);
        assert_eq!(out, vec![0, 140, 145, 300]);
        assert_eq!(applied, vec![40, -15]);
    }

    proptest! {
        #[test]
        fn shifted_tilings_stay_valid(
            durs in prop::collection::vec(5i64..200_000, 1..30),
            raw_shifts in prop::collection::vec(-300_000i64..300_000, 30),
            min_dur in 1i64..6,
        ) {
            let mut bounds = vec![0i64];
            for d in &durs {
                bounds.push(bounds.last().unwrap() + d);
            }
            let shifts = &raw_shifts[..durs.len() - 1];
            let (out, applied) = shift_boundaries(&bounds, shifts, min_dur);
            prop_assert_eq!(out[0], bounds[0]);
            prop_assert_eq!(out.last(), bounds.last());
            for w in out.windows(2) {
                prop_assert!(w[1] - w[0] >= min_dur);
            }
            for (a, s) in applied.iter().zip(shifts) {
                prop_assert!(a.abs() <= s.abs());
                prop_assert!(*a == 0 || a.signum() == s.signum());
            }
        }
    }
}
