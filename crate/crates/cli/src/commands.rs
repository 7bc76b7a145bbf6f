use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use boundfix::cart::{self, parse_tree, serialize_tree, RegressionTree, TrainingExample, TreeMetrics};
use boundfix::compare::{
    compute_errors, pair_alignments, rebind_hypothesis, BoundaryErrorRecord, PairedSegment, PairingConfig, SymbolMap,
};
use boundfix::correct::correct_alignment;
use boundfix::features::{
    extract_senones, parse_utterance_structure, serialize_utterance_structure, FeatureSchema, UtteranceStructure,
};
use boundfix::label::{parse_label_file, parse_phoneset, serialize_label_file, serialize_phoneset, Alignment, PhoneSet};
use boundfix::report::{all_triphone_labels, corpus_metrics, improvement, triphone_class, triphone_stats, CorpusMetrics};
use boundfix::sim::{generate_utterance, SimConfig};

use crate::config::RunConfig;
use crate::io::{csv_bytes, list_ids, read, write_atomic};

/// A problem confined to one utterance; the command carries on without it.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub utterance_id: String,
    pub message: String,
}

/// What a command produced, for the caller to print.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub summary: Vec<(String, String)>,
    pub failures: Vec<Failure>,
}

impl Outcome {
    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    /// Write `failures.csv` for `command` next to the other outputs.
    fn finish(self, dir: &Path, command: &str) -> Result<Self> {
        let rows = self
            .failures
            .iter()
            .map(|f| vec![command.to_string(), f.utterance_id.clone(), f.message.clone()]);
        write_atomic(&dir.join(format!("failures_{command}.csv")), csv_bytes(&["command", "utterance_id", "error"], rows)?)?;
        Ok(self)
    }
}

/// Everything loaded from the run config that commands share.
pub struct Workspace {
    pub cfg: RunConfig,
    pub phoneset: PhoneSet,
    pub hyp_phoneset: PhoneSet,
    pub symbol_map: Option<SymbolMap>,
    pub schema: Arc<FeatureSchema>,
}

impl Workspace {
    pub fn open(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let phoneset = parse_phoneset(&read(&cfg.phoneset)?).context("phone set")?;
        let hyp_phoneset = match &cfg.hyp_phoneset {
            Some(p) => parse_phoneset(&read(p)?).context("hypothesis phone set")?,
            None => phoneset.clone(),
        };
        let symbol_map = match &cfg.symbol_map {
            Some(p) => Some(SymbolMap::parse(&read(p)?).context("symbol map")?),
            None => None,
        };
        let schema = match &cfg.schema {
            Some(p) => FeatureSchema::parse(&read(p)?).context("feature schema")?,
            None => FeatureSchema::default_for(&hyp_phoneset),
        };
        Ok(Self { cfg, phoneset, hyp_phoneset, symbol_map, schema: Arc::new(schema) })
    }

    fn reference(&self, id: &str) -> Result<Alignment> {
        let path = self.cfg.reference_dir.join(format!("{id}.lab"));
        Ok(parse_label_file(&read(&path)?, id, &self.phoneset)?)
    }

    fn hypothesis(&self, id: &str) -> Result<Alignment> {
        let path = self.cfg.hypothesis_dir.join(format!("{id}.lab"));
        Ok(parse_label_file(&read(&path)?, id, &self.hyp_phoneset)?)
    }

    fn corrected(&self, id: &str) -> Result<Alignment> {
        let path = self.cfg.corrected_dir().join(format!("{id}.lab"));
        Ok(parse_label_file(&read(&path)?, id, &self.hyp_phoneset)?)
    }

    fn structure(&self, id: &str) -> Result<UtteranceStructure> {
        let path = self.cfg.structure_dir.join(format!("{id}.json"));
        let u = parse_utterance_structure(&read(&path)?, &self.hyp_phoneset)?;
        if u.utterance_id() != id {
            bail!("structure file declares utterance `{}`", u.utterance_id());
        }
        Ok(u)
    }

    fn pairs(&self, reference: &Alignment, hypothesis: &Alignment) -> Result<Vec<PairedSegment>> {
        let config = PairingConfig { min_iou: self.cfg.min_iou };
        Ok(pair_alignments(reference, hypothesis, &self.phoneset, self.symbol_map.as_ref(), &config)?)
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Run `f` over `ids` in parallel, keeping id order, and split the results
/// into successes and failures.
fn per_utterance<T: Send>(ids: &[String], f: impl Fn(&str) -> Result<T> + Sync) -> (Vec<(String, T)>, Vec<Failure>) {
    let results: Vec<(String, Result<T>)> = ids.par_iter().map(|id| (id.clone(), f(id))).collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push((id, v)),
            Err(e) => failures.push(Failure { utterance_id: id, message: format!("{e:#}") }),
        }
    }
    (ok, failures)
}

// --- compare --------------------------------------------------------------

pub const ERRORS_HEADER: [&str; 5] = ["utterance_id", "phone_index", "phone", "err_seconds", "significant"];

#[derive(Debug, Deserialize)]
struct ErrorRow {
    utterance_id: String,
    phone_index: usize,
    phone: String,
    err_seconds: f64,
    significant: bool,
}

struct Compared {
    units: usize,
    discarded: usize,
    records: Vec<BoundaryErrorRecord>,
}

/// Pair every reference/hypothesis file and write `errors.csv` and
/// `compare_summary.csv`.
pub fn cmd_compare(ws: &Workspace) -> Result<Outcome> {
    let out = &ws.cfg.output_dir;
    let refs: BTreeSet<String> = list_ids(&ws.cfg.reference_dir, "lab")?.into_iter().collect();
    let hyps: BTreeSet<String> = list_ids(&ws.cfg.hypothesis_dir, "lab")?.into_iter().collect();
    let ids: Vec<String> = refs.union(&hyps).cloned().collect();
    let (done, failures) = per_utterance(&ids, |id| {
        if !refs.contains(id) {
            bail!("no reference label file");
        }
        if !hyps.contains(id) {
            bail!("no hypothesis label file");
        }
        let pairs = ws.pairs(&ws.reference(id)?, &ws.hypothesis(id)?)?;
        Ok(Compared {
            units: pairs.len(),
            discarded: pairs.iter().filter(|p| !p.is_position()).count(),
            records: compute_errors(id, &pairs),
        })
    });

    let error_rows = done.iter().flat_map(|(_, c)| {
        c.records.iter().map(|r| {
            vec![r.utterance_id.clone(), r.phone_index.to_string(), r.phone.clone(), fmt(r.err), r.significant.to_string()]
        })
    });
    write_atomic(&out.join("errors.csv"), csv_bytes(&ERRORS_HEADER, error_rows)?)?;
    let summary_rows = done.iter().map(|(id, c)| {
        vec![
            id.clone(),
            c.units.to_string(),
            c.discarded.to_string(),
            c.records.len().to_string(),
            fmt(c.discarded as f64 / c.units as f64),
        ]
    });
    write_atomic(
        &out.join("compare_summary.csv"),
        csv_bytes(&["utterance_id", "units", "discarded", "records", "discarded_fraction"], summary_rows)?,
    )?;

    let units: usize = done.iter().map(|(_, c)| c.units).sum();
    let discarded: usize = done.iter().map(|(_, c)| c.discarded).sum();
    let records: Vec<&BoundaryErrorRecord> = done.iter().flat_map(|(_, c)| &c.records).collect();
    let mut outcome = Outcome { failures, ..Outcome::default() };
    outcome.note("utterances", done.len());
    outcome.note("units", units);
    outcome.note("discarded", discarded);
    outcome.note("discarded_fraction", fmt(if units > 0 { discarded as f64 / units as f64 } else { 0.0 }));
    outcome.note("boundaries", records.len());
    outcome.note("significant", records.iter().filter(|r| r.significant).count());
    outcome.note("total_error", fmt(records.iter().map(|r| r.err.abs()).sum::<f64>()));
    outcome.finish(out, "compare")
}

/// Error records grouped by utterance, as written by `compare`.
pub fn read_errors(path: &Path) -> Result<BTreeMap<String, Vec<BoundaryErrorRecord>>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out: BTreeMap<String, Vec<BoundaryErrorRecord>> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: ErrorRow = row.with_context(|| format!("parsing {}", path.display()))?;
        let rec = BoundaryErrorRecord::new(&row.utterance_id, row.phone_index, row.phone, row.err_seconds);
        if rec.significant != row.significant {
            bail!("inconsistent significance flag for {} phone {}", row.utterance_id, row.phone_index);
        }
        out.entry(row.utterance_id).or_default().push(rec);
    }
    Ok(out)
}

fn compared_ids(out: &Path) -> Result<Vec<String>> {
    let path = out.join("compare_summary.csv");
    let mut rdr = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    rdr.records()
        .map(|r| Ok(r?.get(0).ok_or_else(|| anyhow!("empty row in {}", path.display()))?.to_string()))
        .collect()
}

// --- train ----------------------------------------------------------------

/// Seeded utterance-level split; returns the training ids.
pub fn split_utterances(ids: &[String], fraction: f64, seed: u64) -> BTreeSet<String> {
    let mut shuffled = ids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = shuffled.len();
    let mut n_train = (fraction * n as f64).round() as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    shuffled.into_iter().take(n_train.min(n)).collect()
}

fn read_split(out: &Path) -> Result<BTreeMap<String, String>> {
    let path = out.join("split.csv");
    let mut rdr = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut map = BTreeMap::new();
    for r in rdr.records() {
        let r = r?;
        match (r.get(0), r.get(1)) {
            (Some(id), Some(split)) => map.insert(id.to_string(), split.to_string()),
            _ => bail!("malformed row in {}", path.display()),
        };
    }
    Ok(map)
}

fn examples_for(ws: &Workspace, id: &str, records: &[BoundaryErrorRecord]) -> Result<Vec<TrainingExample>> {
    let u = ws.structure(id)?;
    let senones = extract_senones(&u, &ws.hyp_phoneset, &ws.schema)?;
    records
        .iter()
        .map(|r| {
            let phone = u.phones().get(r.phone_index);
            if phone != Some(&r.phone) {
                bail!("phone {} is `{}` in the error records but {:?} in the structure", r.phone_index, r.phone, phone);
            }
            Ok(TrainingExample::new(senones[r.phone_index].clone(), r.err))
        })
        .collect()
}

fn data_csv(schema: &FeatureSchema, examples: &[TrainingExample]) -> Result<Vec<u8>> {
    let mut header: Vec<&str> = schema.features().iter().map(|d| d.name.as_str()).collect();
    header.push("target");
    let rows = examples.iter().map(|e| {
        let mut row: Vec<String> = e.senone.values().iter().map(|v| v.to_string()).collect();
        row.push(fmt(e.target));
        row
    });
    csv_bytes(&header, rows)
}

fn metrics_row(tree: &str, split: &str, n: usize, m: &TreeMetrics) -> Vec<String> {
    vec![
        tree.to_string(),
        split.to_string(),
        n.to_string(),
        fmt(m.rmse),
        fmt(m.correlation),
        fmt(m.mean_error),
        fmt(m.mean_abs_error),
    ]
}

/// Split utterances, build training data, grow and save the tree.
pub fn cmd_train(ws: &Workspace) -> Result<Outcome> {
    let out = &ws.cfg.output_dir;
    let records = read_errors(&out.join("errors.csv"))?;
    let ids = compared_ids(out)?;
    let train_ids = split_utterances(&ids, ws.cfg.split, ws.cfg.seed);
    let split_rows = ids.iter().map(|id| {
        let s = if train_ids.contains(id) { "train" } else { "test" };
        vec![id.clone(), s.to_string()]
    });
    write_atomic(&out.join("split.csv"), csv_bytes(&["utterance_id", "split"], split_rows)?)?;

    let empty = Vec::new();
    let (built, failures) = per_utterance(&ids, |id| examples_for(ws, id, records.get(id).unwrap_or(&empty)));
    let (mut train_ex, mut test_ex) = (Vec::new(), Vec::new());
    for (id, ex) in built {
        if train_ids.contains(&id) {
            train_ex.extend(ex);
        } else {
            test_ex.extend(ex);
        }
    }
    write_atomic(&out.join("train_data.csv"), data_csv(&ws.schema, &train_ex)?)?;
    write_atomic(&out.join("test_data.csv"), data_csv(&ws.schema, &test_ex)?)?;
    if train_ex.is_empty() {
        bail!("empty training set");
    }
    if ws.cfg.stop_size > train_ex.len() {
        log::warn!(
            "stop size {} exceeds the {} training examples; the tree is a single leaf",
            ws.cfg.stop_size,
            train_ex.len()
        );
    }

    let tree = cart::train(&train_ex, ws.cfg.stop_size)?;
    let tree_path = ws.cfg.tree_path();
    write_atomic(&tree_path, serialize_tree(&tree))?;
    let name = tree_path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
    let mut rows = vec![metrics_row(&name, "train", train_ex.len(), &cart::evaluate(&tree, &train_ex)?)];
    if !test_ex.is_empty() {
        rows.push(metrics_row(&name, "test", test_ex.len(), &cart::evaluate(&tree, &test_ex)?));
    }
    write_atomic(
        &out.join("tree_metrics.csv"),
        csv_bytes(&["tree", "split", "examples", "rmse", "correlation", "mean_error", "mean_abs_error"], rows.clone())?,
    )?;

    let mut outcome = Outcome { failures, ..Outcome::default() };
    outcome.note("tree", tree_path.display());
    outcome.note("train_utterances", train_ids.len());
    outcome.note("test_utterances", ids.len() - train_ids.len());
    outcome.note("train_examples", train_ex.len());
    outcome.note("test_examples", test_ex.len());
    outcome.note("leaves", tree.leaves().len());
    for row in rows {
        outcome.note(&format!("{}_rmse", row[1]), &row[3]);
        outcome.note(&format!("{}_correlation", row[1]), &row[4]);
    }
    outcome.finish(out, "train")
}

// --- correct --------------------------------------------------------------

pub fn load_tree(ws: &Workspace, path: &Path) -> Result<RegressionTree> {
    let tree = parse_tree(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    if tree.schema_hash != ws.schema.hash() {
        bail!(
            "schema mismatch: {} was trained on schema {}, active schema is {}",
            path.display(),
            tree.schema_hash,
            ws.schema.hash()
        );
    }
    Ok(tree)
}

/// Correct every hypothesis file with `tree` (default: the configured
/// `cor.S<N>.tree`), writing `corrected/` and `correction_report.csv`.
pub fn cmd_correct(ws: &Workspace, tree: Option<&Path>) -> Result<Outcome> {
    let out = &ws.cfg.output_dir;
    let tree_path = tree.map(Path::to_path_buf).unwrap_or_else(|| ws.cfg.tree_path());
    let tree = load_tree(ws, &tree_path)?;
    let ids = list_ids(&ws.cfg.hypothesis_dir, "lab")?;
    let dir = ws.cfg.corrected_dir();
    let (done, failures) = per_utterance(&ids, |id| {
        let hyp = ws.hypothesis(id)?;
        let u = ws.structure(id)?;
        let (corrected, report) = correct_alignment(&hyp, &u, &ws.hyp_phoneset, &tree, &ws.schema, ws.cfg.min_dur)?;
        write_atomic(&dir.join(format!("{id}.lab")), serialize_label_file(&corrected))?;
        Ok(report)
    });
    let rows = done.iter().flat_map(|(id, report)| {
        report.boundaries.iter().map(move |b| {
            vec![
                id.clone(),
                b.phone_index.to_string(),
                fmt(b.predicted_shift),
                fmt(b.applied_shift),
                b.clamped.to_string(),
            ]
        })
    });
    write_atomic(
        &out.join("correction_report.csv"),
        csv_bytes(&["utterance_id", "phone_index", "predicted_shift", "applied_shift", "clamped"], rows)?,
    )?;
    let mut outcome = Outcome { failures, ..Outcome::default() };
    outcome.note("tree", tree_path.display());
    outcome.note("utterances", done.len());
    outcome.note("boundaries", done.iter().map(|(_, r)| r.boundaries.len()).sum::<usize>());
    outcome.note("clamped", done.iter().map(|(_, r)| r.clamped_count()).sum::<usize>());
    outcome.finish(out, "correct")
}

// --- evaluate -------------------------------------------------------------

struct Evaluated {
    before: Vec<BoundaryErrorRecord>,
    after: Vec<BoundaryErrorRecord>,
    labels: Vec<String>,
}

/// Uncorrected records, corrected records and triphone labels of one split.
pub type SplitRecords = (Vec<BoundaryErrorRecord>, Vec<BoundaryErrorRecord>, Vec<String>);

/// Before/after records per split, as computed by `evaluate`.
pub struct Evaluation {
    pub splits: BTreeMap<String, SplitRecords>,
}

/// Error records of the uncorrected and corrected hypotheses over one fixed
/// population: the position pairs of reference versus uncorrected hypothesis.
pub fn evaluate_records(ws: &Workspace) -> Result<(Evaluation, Vec<Failure>)> {
    let out = &ws.cfg.output_dir;
    let split = if out.join("split.csv").exists() { read_split(out)? } else { BTreeMap::new() };
    if !ws.cfg.corrected_dir().is_dir() {
        bail!("no corrected alignments in {}", ws.cfg.corrected_dir().display());
    }
    let ids = list_ids(&ws.cfg.reference_dir, "lab")?;
    let (done, failures) = per_utterance(&ids, |id| {
        let pairs = ws.pairs(&ws.reference(id)?, &ws.hypothesis(id)?)?;
        let rebound = rebind_hypothesis(&pairs, &ws.corrected(id)?)?;
        let u = ws.structure(id)?;
        let before = compute_errors(id, &pairs);
        let after = compute_errors(id, &rebound);
        let labels = before
            .iter()
            .map(|r| triphone_class(&ws.hyp_phoneset, &u, r.phone_index))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Evaluated { before, after, labels })
    });
    let mut splits: BTreeMap<String, (Vec<_>, Vec<_>, Vec<_>)> = BTreeMap::new();
    for (id, e) in done {
        let name = split.get(&id).cloned().unwrap_or_else(|| "all".to_string());
        let slot = splits.entry(name).or_default();
        slot.0.extend(e.before);
        slot.1.extend(e.after);
        slot.2.extend(e.labels);
    }
    Ok((Evaluation { splits }, failures))
}

fn metric_row(alignment: &str, split: &str, m: &CorpusMetrics, imp: Option<f64>) -> Vec<String> {
    vec![
        alignment.to_string(),
        split.to_string(),
        fmt(m.total_error),
        fmt(m.mean_error),
        fmt(m.mean_signed_error),
        fmt(m.stddev),
        m.boundary_count.to_string(),
        m.significant_count.to_string(),
        imp.map(fmt).unwrap_or_default(),
    ]
}

fn triphone_csv(before: &[BoundaryErrorRecord], after: &[BoundaryErrorRecord], labels: &[String]) -> Result<Vec<u8>> {
    let b = triphone_stats(before, labels)?;
    let a = triphone_stats(after, labels)?;
    let rows = all_triphone_labels().into_iter().map(|l| {
        let (x, y) = (b[&l], a[&l]);
        vec![
            l.clone(),
            x.count.to_string(),
            fmt(x.mean_abs_error),
            fmt(y.mean_abs_error),
            fmt(x.mean_signed_error),
            fmt(y.mean_signed_error),
            fmt(x.share_of_total_error),
            fmt(y.share_of_total_error),
        ]
    });
    csv_bytes(
        &[
            "triphone",
            "count",
            "before_mean_abs_error",
            "after_mean_abs_error",
            "before_mean_signed_error",
            "after_mean_signed_error",
            "before_share_of_total_error",
            "after_share_of_total_error",
        ],
        rows,
    )
}

/// Write `metrics.csv` (one row per alignment and split) and the per-split
/// triphone tables (`triphone.csv` for the test split or the whole corpus,
/// `triphone_<split>.csv` for the rest).
pub fn cmd_evaluate(ws: &Workspace) -> Result<Outcome> {
    let out = &ws.cfg.output_dir;
    let (eval, failures) = evaluate_records(ws)?;
    if eval.splits.values().all(|s| s.0.is_empty()) {
        bail!("no boundary error records to evaluate");
    }
    let mut before_rows = Vec::new();
    let mut after_rows = Vec::new();
    let mut outcome = Outcome { failures, ..Outcome::default() };
    for (name, (before, after, labels)) in &eval.splits {
        if before.is_empty() {
            continue;
        }
        let mb = corpus_metrics(before)?;
        let ma = corpus_metrics(after)?;
        let imp = improvement(&mb, &ma).ok();
        before_rows.push(metric_row("uncorrected", name, &mb, None));
        after_rows.push(metric_row("corrected", name, &ma, imp));
        let file = if name == "test" || (name == "all" && eval.splits.len() == 1) {
            "triphone.csv".to_string()
        } else {
            format!("triphone_{name}.csv")
        };
        write_atomic(&out.join(file), triphone_csv(before, after, labels)?)?;
        outcome.note(&format!("{name}_total_error_before"), fmt(mb.total_error));
        outcome.note(&format!("{name}_total_error_after"), fmt(ma.total_error));
        outcome.note(&format!("{name}_improvement"), imp.map(fmt).unwrap_or_else(|| "n/a".into()));
    }
    before_rows.extend(after_rows);
    write_atomic(
        &out.join("metrics.csv"),
        csv_bytes(
            &[
                "alignment",
                "split",
                "total_error",
                "mean_error",
                "mean_signed_error",
                "stddev",
                "boundary_count",
                "significant_count",
                "improvement",
            ],
            before_rows,
        )?,
    )?;
    outcome.finish(out, "evaluate")
}

// --- simulate -------------------------------------------------------------

/// Write a simulated corpus under `root`: `ref/`, `hyp/` and `struct/` with
/// one file per utterance, plus `phoneset.txt`, `schema.txt`, `sim.toml`
/// and a ready-to-use `run.toml`.
pub fn cmd_simulate(cfg: &SimConfig, phoneset: &PhoneSet, schema: &Arc<FeatureSchema>, root: &Path) -> Result<Outcome> {
    cfg.validate(schema)?;
    let indices: Vec<usize> = (0..cfg.utterance_count).collect();
    indices.par_iter().try_for_each(|&i| -> Result<()> {
        let utt = generate_utterance(cfg, phoneset, schema, i)?;
        let id = utt.reference.utterance_id().to_string();
        write_atomic(&root.join("ref").join(format!("{id}.lab")), serialize_label_file(&utt.reference))?;
        write_atomic(&root.join("hyp").join(format!("{id}.lab")), serialize_label_file(&utt.hypothesis))?;
        write_atomic(&root.join("struct").join(format!("{id}.json")), serialize_utterance_structure(&utt.structure))?;
        Ok(())
    })?;
    write_atomic(&root.join("phoneset.txt"), serialize_phoneset(phoneset))?;
    write_atomic(&root.join("schema.txt"), schema.serialize())?;
    write_atomic(&root.join("sim.toml"), cfg.to_toml())?;
    write_atomic(&root.join("run.toml"), RunConfig::for_layout(Path::new("")).to_toml())?;
    let mut outcome = Outcome::default();
    outcome.note("utterances", cfg.utterance_count);
    outcome.note("output", root.display());
    Ok(outcome)
}
