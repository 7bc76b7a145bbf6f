//! Boundary-error correction for forced phone alignments.
//!
//! A hypothesis alignment is compared against a reference, each phone is
//! described by a context-dependent feature vector (a senone), and a
//! regression tree learns the systematic signed error of the right-hand
//! boundary from those features. Applying the tree shifts every boundary of
//! new hypotheses toward where the reference would have placed it.
//!
//! Modules follow the pipeline:
//! [`label`] (phone sets and alignments), [`compare`] (pairing and error
//! records), [`features`] (utterance structure and senones), [`cart`]
//! (regression trees), [`correct`] (applying a tree), [`report`]
//! (metrics), and [`sim`] (synthetic corpora with known error).

pub mod cart;
pub mod compare;
pub mod correct;
pub mod features;
pub mod label;
pub mod report;
pub mod sim;

pub use cart::{predict, train, RegressionTree, TrainingExample};
pub use compare::{compute_errors, pair_alignments, BoundaryErrorRecord, PairingConfig};
pub use correct::{correct_alignment, CorrectionReport};
pub use features::{extract_senones, FeatureSchema, Senone, UtteranceStructure};
pub use label::{Alignment, PhoneClass, PhoneSet, Segment};
pub use report::{corpus_metrics, improvement, CorpusMetrics};
