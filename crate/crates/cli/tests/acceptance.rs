//! Acceptance criteria, one PASS/FAIL line each. Run with
//! `cargo test -p boundfix-cli --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use boundfix::cart::{self, parse_tree, serialize_tree, Node, RegressionTree, Test, TrainingExample};
use boundfix::compare::{compute_errors, pair_alignments, BoundaryErrorRecord, PairingConfig};
use boundfix::correct::correct_alignment;
use boundfix::features::{extract_senones, FeatureKind, FeatureSchema, FeatureValue, Senone};
use boundfix::label::{parse_label_file, serialize_label_file, Alignment, PhoneSet};
use boundfix::report::{corpus_metrics, triphone_class, triphone_stats};
use boundfix::sim::{default_phoneset, generate_corpus, generate_utterance, BiasRule, SimConfig, SimUtterance};
use boundfix_cli::commands::split_utterances;
use boundfix_cli::{cmd_compare, cmd_correct, cmd_evaluate, cmd_simulate, cmd_train, Outcome, RunConfig, Workspace};

const BIASES: (f64, f64, f64, f64) = (0.03, -0.02, 0.015, -0.01);
const GROUPING: [&str; 2] = ["cur_phone_class", "syllable_stressed"];

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn four_rule_config(seed: u64, noise: f64, rate: f64) -> SimConfig {
    SimConfig {
        seed,
        utterance_count: 500,
        noise_sigma: noise,
        recognition_error_rate: rate,
        bias_rules: SimConfig::class_stress_rules(BIASES.0, BIASES.1, BIASES.2, BIASES.3),
        ..SimConfig::default()
    }
}

fn env() -> (PhoneSet, Arc<FeatureSchema>) {
    let ps = default_phoneset();
    let schema = Arc::new(FeatureSchema::default_for(&ps));
    (ps, schema)
}

struct Run {
    elapsed: Duration,
    cfg: RunConfig,
    compare: Outcome,
}

fn check_clean(step: &str, o: &Outcome) -> Result<(), String> {
    match o.failures.first() {
        None => Ok(()),
        Some(f) => Err(format!("{step}: {} failures, first {}: {}", o.failures.len(), f.utterance_id, f.message)),
    }
}

/// simulate → compare → train → correct → evaluate, on disk under `root`.
fn pipeline(root: &Path, sim: &SimConfig, stop_size: usize) -> Result<Run, String> {
    let (ps, schema) = env();
    let start = Instant::now();
    cmd_simulate(sim, &ps, &schema, root).map_err(|e| format!("simulate: {e:#}"))?;
    let mut cfg = RunConfig::load(&root.join("run.toml")).map_err(|e| format!("{e:#}"))?;
    cfg.stop_size = stop_size;
    let ws = Workspace::open(cfg.clone()).map_err(|e| format!("{e:#}"))?;
    let compare = cmd_compare(&ws).map_err(|e| format!("compare: {e:#}"))?;
    check_clean("compare", &compare)?;
    check_clean("train", &cmd_train(&ws).map_err(|e| format!("train: {e:#}"))?)?;
    check_clean("correct", &cmd_correct(&ws, None).map_err(|e| format!("correct: {e:#}"))?)?;
    check_clean("evaluate", &cmd_evaluate(&ws).map_err(|e| format!("evaluate: {e:#}"))?)?;
    Ok(Run { elapsed: start.elapsed(), cfg, compare })
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| headers.iter().zip(r.unwrap().iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        .collect()
}

/// (total before, total after) on the test split from `metrics.csv`.
fn test_totals(cfg: &RunConfig) -> (f64, f64) {
    let rows = read_csv(&cfg.output_dir.join("metrics.csv"));
    let get = |alignment: &str| {
        rows.iter()
            .find(|r| r["alignment"] == alignment && r["split"] == "test")
            .map(|r| r["total_error"].parse::<f64>().unwrap())
            .unwrap()
    };
    (get("uncorrected"), get("corrected"))
}

fn train_ids(cfg: &RunConfig) -> BTreeSet<String> {
    read_csv(&cfg.output_dir.join("split.csv"))
        .into_iter()
        .filter(|r| r["split"] == "train")
        .map(|r| r["utterance_id"].clone())
        .collect()
}

fn records_of(u: &SimUtterance, ps: &PhoneSet) -> Vec<BoundaryErrorRecord> {
    let pairs = pair_alignments(&u.reference, &u.hypothesis, ps, None, &PairingConfig::default()).unwrap();
    compute_errors(u.reference.utterance_id(), &pairs)
}

fn group_key(s: &Senone) -> Vec<String> {
    GROUPING.iter().map(|g| s.get(g).unwrap().to_string()).collect()
}

fn summary_value(o: &Outcome, key: &str) -> String {
    o.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).unwrap_or_default()
}

// 1 ------------------------------------------------------------------------

fn exact_recovery() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let sim = four_rule_config(11, 0.0, 0.0);
    let run = match pipeline(dir.path(), &sim, 5) {
        Ok(r) => r,
        Err(e) => return verdict(false, e),
    };
    let (before, after) = test_totals(&run.cfg);
    let reduction = (before - after) / before;

    // Independent referee: brute-force group means over the training split.
    let (ps, schema) = env();
    let corpus = generate_corpus(&sim, &ps, &schema).unwrap();
    let train = train_ids(&run.cfg);
    let train_corpus: Vec<SimUtterance> =
        corpus.into_iter().filter(|u| train.contains(u.reference.utterance_id())).collect();
    let oracle = boundfix::sim::oracle_class_means(&train_corpus, &ps, &schema, &GROUPING).unwrap();

    let tree = parse_tree(&std::fs::read_to_string(run.cfg.tree_path()).unwrap()).unwrap();
    let leaves = tree.leaves();
    let mut worst = 0.0f64;
    let mut routed = vec![0usize; leaves.len()];
    for u in &train_corpus {
        let senones = extract_senones(&u.structure, &ps, &schema).unwrap();
        for rec in records_of(u, &ps) {
            let s = &senones[rec.phone_index];
            let leaf = tree.leaf_index(s).unwrap();
            routed[leaf] += 1;
            if let Node::Leaf { mean, .. } = leaves[leaf] {
                worst = worst.max((mean - oracle[&group_key(s)]).abs());
            }
        }
    }
    let counts_ok = leaves
        .iter()
        .zip(&routed)
        .all(|(l, &n)| matches!(l, Node::Leaf { count, .. } if *count == n && n >= 5));
    let secs = run.elapsed.as_secs_f64();
    let pass = reduction >= 0.99 && worst <= 1e-9 && counts_ok && secs < 10.0;
    verdict(
        pass,
        format!(
            "test total error {before:.6} s -> {after:.6} s (reduction {:.4}%), {} leaves, max |leaf - oracle| {worst:.3e} s, leaf counts consistent {counts_ok}, {secs:.2} s",
            100.0 * reduction,
            leaves.len()
        ),
    )
}

// 2 and 3 ------------------------------------------------------------------

/// Improvement expected from applying training-split group means to the
/// test-split records.
fn oracle_improvement(sim: &SimConfig, train: &BTreeSet<String>) -> f64 {
    let (ps, schema) = env();
    let corpus = generate_corpus(sim, &ps, &schema).unwrap();
    let mut sums: BTreeMap<Vec<String>, (f64, usize)> = BTreeMap::new();
    let mut test: Vec<(Vec<String>, f64)> = Vec::new();
    for u in &corpus {
        let senones = extract_senones(&u.structure, &ps, &schema).unwrap();
        let is_train = train.contains(u.reference.utterance_id());
        for rec in records_of(u, &ps) {
            let key = group_key(&senones[rec.phone_index]);
            if is_train {
                let slot = sums.entry(key).or_default();
                slot.0 += rec.err;
                slot.1 += 1;
            } else {
                test.push((key, rec.err));
            }
        }
    }
    let before: f64 = test.iter().map(|(_, e)| e.abs()).sum();
    let after: f64 = test
        .iter()
        .map(|(k, e)| {
            let m = sums.get(k).map_or(0.0, |(s, n)| s / *n as f64);
            (e - m).abs()
        })
        .sum();
    (before - after) / before
}

fn noisy_improvement() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let sim = four_rule_config(12, 0.02, 0.025);
    // The split is a pure function of the ids and seed, so the expectation
    // is fixed before the pipeline runs.
    let ids: Vec<String> = (0..sim.utterance_count).map(|i| format!("utt{i:04}")).collect();
    let expected = oracle_improvement(&sim, &split_utterances(&ids, 0.9, 0));
    let run = match pipeline(dir.path(), &sim, 25) {
        Ok(r) => r,
        Err(e) => return verdict(false, e),
    };
    let (before, after) = test_totals(&run.cfg);
    let imp = (before - after) / before;
    let secs = run.elapsed.as_secs_f64();
    let pass = imp >= 0.10 && (imp - expected).abs() <= 0.03 && secs < 60.0;
    verdict(
        pass,
        format!(
            "test improvement {:.2}% (oracle expectation {:.2}%, difference {:+.2} pp); discarded fraction {:.2}% at this noise level; {secs:.2} s",
            100.0 * imp,
            100.0 * expected,
            100.0 * (imp - expected),
            100.0 * summary_value(&run.compare, "discarded_fraction").parse::<f64>().unwrap_or(f64::NAN),
        ),
    )
}

fn preprocessing_share() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let (ps, schema) = env();
    let sim = four_rule_config(13, 0.0, 0.025);
    if let Err(e) = cmd_simulate(&sim, &ps, &schema, dir.path()) {
        return verdict(false, format!("{e:#}"));
    }
    let ws = Workspace::open(RunConfig::load(&dir.path().join("run.toml")).unwrap()).unwrap();
    let out = cmd_compare(&ws).unwrap();
    let units: usize = summary_value(&out, "units").parse().unwrap();
    let frac: f64 = summary_value(&out, "discarded_fraction").parse().unwrap();
    let pass = out.failures.is_empty() && units >= 20_000 && (0.02..=0.03).contains(&frac);
    verdict(pass, format!("{units} units, discarded fraction {:.3}%", 100.0 * frac))
}

// 4 ------------------------------------------------------------------------

fn rel_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn brute_metrics(pred: &[f64], target: &[f64]) -> [f64; 4] {
    let n = pred.len() as f64;
    let mut diffs = Vec::new();
    for i in 0..pred.len() {
        diffs.push(pred[i] - target[i]);
    }
    let mut s = 0.0;
    let mut sa = 0.0;
    let mut sq = 0.0;
    for d in &diffs {
        s += d;
        sa += d.abs();
        sq += d * d;
    }
    let (mut mp, mut mt) = (0.0, 0.0);
    for i in 0..pred.len() {
        mp += pred[i];
        mt += target[i];
    }
    mp /= n;
    mt /= n;
    let (mut cov, mut vp, mut vt) = (0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        cov += (pred[i] - mp) * (target[i] - mt);
        vp += (pred[i] - mp) * (pred[i] - mp);
        vt += (target[i] - mt) * (target[i] - mt);
    }
    let flat = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
    let corr = if flat(pred) || flat(target) { 0.0 } else { cov / (vp.sqrt() * vt.sqrt()) };
    [(sq / n).sqrt(), corr, s / n, sa / n]
}

fn brute_corpus(errs: &[f64]) -> (f64, f64, f64, f64, usize) {
    let n = errs.len() as f64;
    let mut total = 0.0;
    let mut signed = 0.0;
    let mut sig = 0;
    for e in errs {
        total += e.abs();
        signed += e;
        if e.abs() > 0.01 {
            sig += 1;
        }
    }
    let mean = signed / n;
    let mut var = 0.0;
    for e in errs {
        var += (e - mean) * (e - mean);
    }
    (total, total / n, mean, (var / n).sqrt(), sig)
}

fn metrics_oracle() -> Verdict {
    let schema = Arc::new(
        FeatureSchema::parse("prev_phone_symbol\tcategorical\ta,b,c\nsyllable_len_phones\tnumeric\t0..9\n").unwrap(),
    );
    let fixture = (
        prop::collection::vec((0usize..3, 0i64..10, -30_000i64..30_000), 1..80),
        1usize..10,
        any::<bool>(),
    );
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    let result = runner.run(&fixture, |(rows, stop, constant)| {
        let examples: Vec<TrainingExample> = rows
            .iter()
            .map(|&(c, len, t)| {
                let senone = Senone::new(
                    schema.clone(),
                    vec![FeatureValue::Cat(["a", "b", "c"][c].into()), FeatureValue::Num(len)],
                )
                .unwrap();
                let target = if constant { 0.0125 } else { t as f64 / 1e6 };
                TrainingExample::new(senone, target)
            })
            .collect();
        let tree = cart::train(&examples, stop).unwrap();
        let got = cart::evaluate(&tree, &examples).unwrap();
        let pred: Vec<f64> = examples.iter().map(|e| cart::predict(&tree, &e.senone).unwrap()).collect();
        let target: Vec<f64> = examples.iter().map(|e| e.target).collect();
        let want = brute_metrics(&pred, &target);
        for (g, w) in [got.rmse, got.correlation, got.mean_error, got.mean_abs_error].iter().zip(want) {
            prop_assert!(rel_close(*g, w), "{} vs {}", g, w);
        }

        let errs: Vec<f64> = target.iter().map(|t| t - 0.001).collect();
        let records: Vec<BoundaryErrorRecord> =
            errs.iter().enumerate().map(|(i, &e)| BoundaryErrorRecord::new("u", i, "a", e)).collect();
        let m = corpus_metrics(&records).unwrap();
        let (total, mean, signed, sd, sig) = brute_corpus(&errs);
        prop_assert!(rel_close(m.total_error, total) && rel_close(m.mean_error, mean));
        prop_assert!(rel_close(m.mean_signed_error, signed) && rel_close(m.stddev, sd));
        prop_assert_eq!(m.significant_count, sig);
        prop_assert_eq!(m.boundary_count, errs.len());
        Ok(())
    });
    // Explicit zero-variance fixtures for the correlation convention.
    let constant_leaf = RegressionTree {
        schema_hash: schema.hash().to_string(),
        root: Node::Leaf { mean: 0.01, stddev: 0.0, count: 1 },
    };
    let varied: Vec<TrainingExample> = (0..10)
        .map(|i| {
            let s = Senone::new(schema.clone(), vec![FeatureValue::Cat("a".into()), FeatureValue::Num(i)]).unwrap();
            TrainingExample::new(s, i as f64 / 100.0)
        })
        .collect();
    let flat = cart::evaluate(&constant_leaf, &varied).unwrap().correlation;
    let const_targets: Vec<TrainingExample> =
        varied.iter().map(|e| TrainingExample::new(e.senone.clone(), 0.02)).collect();
    let by_len = RegressionTree {
        schema_hash: schema.hash().to_string(),
        root: Node::Question {
            feature: "syllable_len_phones".into(),
            test: Test::AtMost(4.5),
            yes: Box::new(Node::Leaf { mean: 0.0, stddev: 0.0, count: 1 }),
            no: Box::new(Node::Leaf { mean: 0.05, stddev: 0.0, count: 1 }),
        },
    };
    let flat_targets = cart::evaluate(&by_len, &const_targets).unwrap().correlation;
    let pass = result.is_ok() && flat == 0.0 && flat_targets == 0.0;
    verdict(
        pass,
        match result {
            Ok(()) => format!(
                "1000 randomized fixtures agree to 1e-12 relative; zero-variance predictions and targets give correlation {flat} and {flat_targets}"
            ),
            Err(e) => format!("{e}"),
        },
    )
}

// 5 ------------------------------------------------------------------------

fn small_sim(seed: u64, noise: f64, rate: f64) -> SimConfig {
    SimConfig {
        seed,
        utterance_count: 1,
        phones_per_utterance: [3, 25],
        noise_sigma: noise,
        recognition_error_rate: rate,
        bias_rules: SimConfig::class_stress_rules(BIASES.0, BIASES.1, BIASES.2, BIASES.3),
        ..SimConfig::default()
    }
}

fn utterance(seed: u64, noise: f64, rate: f64) -> SimUtterance {
    let (ps, schema) = env();
    generate_utterance(&small_sim(seed, noise, rate), &ps, &schema, (seed % 97) as usize).unwrap()
}

fn arb_tree(schema: Arc<FeatureSchema>) -> impl Strategy<Value = RegressionTree> {
    let leaf = (-100_000i64..100_000, 0i64..50_000, 1usize..1000).prop_map(|(m, s, c)| Node::Leaf {
        mean: m as f64 / 1e6,
        stddev: s as f64 / 1e6,
        count: c,
    });
    let names: Vec<(String, FeatureKind)> = schema.features().iter().map(|d| (d.name.clone(), d.kind)).collect();
    let hash = schema.hash().to_string();
    leaf.prop_recursive(6, 64, 2, move |inner| {
        let names = names.clone();
        (0..names.len(), "[a-z ()\"\\\\]{0,6}", 0i64..200, inner.clone(), inner).prop_map(
            move |(f, value, thr, yes, no)| {
                let (feature, kind) = names[f].clone();
                let test = match kind {
                    FeatureKind::Categorical => Test::Is(value),
                    FeatureKind::Numeric => Test::AtMost(thr as f64 + 0.5),
                };
                Node::Question { feature, test, yes: Box::new(yes), no: Box::new(no) }
            },
        )
    })
    .prop_map(move |root| RegressionTree { schema_hash: hash.clone(), root })
}

fn class_tree(schema: &FeatureSchema, v: i64, c: i64, s: i64) -> RegressionTree {
    let leaf = |x: i64| Box::new(Node::Leaf { mean: x as f64 / 1e6, stddev: 0.0, count: 1 });
    RegressionTree {
        schema_hash: schema.hash().to_string(),
        root: Node::Question {
            feature: "cur_phone_class".into(),
            test: Test::Is("vowel".into()),
            yes: leaf(v),
            no: Box::new(Node::Question {
                feature: "cur_phone_class".into(),
                test: Test::Is("consonant".into()),
                yes: leaf(c),
                no: leaf(s),
            }),
        },
    }
}

fn structural_invariants() -> Verdict {
    let (ps, schema) = env();
    let config = || Config { cases: 1000, failure_persistence: None, ..Config::default() };
    let mut lines = Vec::new();
    let mut all = true;
    let mut record = |name: &str, r: Result<(), String>| {
        let ok = r.is_ok();
        all &= ok;
        lines.push(match r {
            Ok(()) => format!("{name} ok"),
            Err(e) => format!("{name} FAILED ({e})"),
        });
    };

    let r = TestRunner::new(config()).run(&(any::<u64>(), 0.0f64..0.03), |(seed, noise)| {
        let u = utterance(seed, noise, 0.0);
        for a in [&u.reference, &u.hypothesis] {
            let text = serialize_label_file(a);
            let back = parse_label_file(&text, a.utterance_id(), &ps).unwrap();
            prop_assert_eq!(&back, a);
            prop_assert_eq!(serialize_label_file(&back), text);
        }
        Ok(())
    });
    record("label round-trip", r.map_err(|e| e.to_string()));

    let r = TestRunner::new(config()).run(&arb_tree(schema.clone()), |tree| {
        prop_assert_eq!(parse_tree(&serialize_tree(&tree)).unwrap(), tree);
        Ok(())
    });
    record("tree round-trip", r.map_err(|e| e.to_string()));

    let shifts = (-200_000i64..200_000, -200_000i64..200_000, -200_000i64..200_000);
    let r = TestRunner::new(config()).run(&(any::<u64>(), 0.0f64..0.03, shifts, 1i64..20), |(seed, noise, (v, c, s), md)| {
        let u = utterance(seed, noise, 0.0);
        let min_dur = md as f64 / 1000.0;
        let hyp = &u.hypothesis;
        prop_assume!(hyp.segments().iter().all(|seg| seg.duration() >= min_dur - 1e-9));
        let tree = class_tree(&schema, v, c, s);
        let (out, report) = correct_alignment(hyp, &u.structure, &ps, &tree, &schema, min_dur).unwrap();
        prop_assert_eq!(out.start(), hyp.start());
        prop_assert_eq!(out.end(), hyp.end());
        prop_assert_eq!(out.len(), hyp.len());
        for seg in out.segments() {
            prop_assert!(seg.duration() >= min_dur - 1e-9, "{} < {}", seg.duration(), min_dur);
        }
        for b in &report.boundaries {
            prop_assert!(b.applied_shift.abs() <= b.predicted_shift.abs() + 1e-12);
            prop_assert_eq!(b.clamped, b.applied_shift != b.predicted_shift);
        }
        Ok(())
    });
    record("corrected tilings valid", r.map_err(|e| e.to_string()));

    let r = TestRunner::new(config()).run(&(any::<u64>(), 0.0f64..0.03, 0.0f64..0.1), |(seed, noise, rate)| {
        let u = utterance(seed, noise, rate);
        let cfg = PairingConfig::default();
        let fwd = compute_errors("u", &pair_alignments(&u.reference, &u.hypothesis, &ps, None, &cfg).unwrap());
        let bwd = compute_errors("u", &pair_alignments(&u.hypothesis, &u.reference, &ps, None, &cfg).unwrap());
        prop_assert_eq!(fwd.len(), bwd.len());
        for (a, b) in fwd.iter().zip(&bwd) {
            prop_assert_eq!(a.err, -b.err);
        }
        Ok(())
    });
    record("err antisymmetry", r.map_err(|e| e.to_string()));

    let r = TestRunner::new(config()).run(&(any::<u64>(), 0.0f64..0.03), |(seed, noise)| {
        let u = utterance(seed, noise, 0.0);
        for a in [&u.reference, &u.hypothesis] {
            let recs = compute_errors("u", &pair_alignments(a, a, &ps, None, &PairingConfig::default()).unwrap());
            prop_assert_eq!(recs.len(), a.len() - 1);
            let m = corpus_metrics(&recs).unwrap();
            prop_assert_eq!((m.total_error, m.mean_error, m.stddev, m.significant_count), (0.0, 0.0, 0.0, 0));
        }
        Ok(())
    });
    record("self-comparison zero", r.map_err(|e| e.to_string()));

    let r = TestRunner::new(config()).run(&(any::<u64>(), 0.0f64..0.03, 0.0f64..0.1), |(seed, noise, rate)| {
        let u = utterance(seed, noise, rate);
        let recs = records_of(&u, &ps);
        let labels: Vec<String> =
            recs.iter().map(|r| triphone_class(&ps, &u.structure, r.phone_index).unwrap()).collect();
        let stats = triphone_stats(&recs, &labels).unwrap();
        prop_assert_eq!(stats.len(), 27);
        prop_assert_eq!(stats.values().map(|s| s.count).sum::<usize>(), recs.len());
        Ok(())
    });
    record("triphone partition", r.map_err(|e| e.to_string()));

    verdict(all, format!("1000 cases each: {}", lines.join(", ")))
}

// 6 ------------------------------------------------------------------------

fn sign_convention() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let sim = SimConfig {
        seed: 16,
        utterance_count: 200,
        bias_rules: vec![BiasRule::new(0.02, std::iter::empty::<(String, String)>())],
        ..SimConfig::default()
    };
    let run = match pipeline(dir.path(), &sim, 25) {
        Ok(r) => r,
        Err(e) => return verdict(false, e),
    };
    // Training targets are positive: the hypothesis is early.
    let targets: Vec<f64> = read_csv(&run.cfg.output_dir.join("train_data.csv"))
        .iter()
        .map(|r| r["target"].parse::<f64>().unwrap())
        .collect();
    let mean_target = targets.iter().sum::<f64>() / targets.len() as f64;
    let report = read_csv(&run.cfg.output_dir.join("correction_report.csv"));
    let later = report.iter().filter(|r| r["applied_shift"].parse::<f64>().unwrap() > 0.0).count();

    // Mean |err| after correction, test split.
    let rows = read_csv(&run.cfg.output_dir.join("metrics.csv"));
    let after = rows
        .iter()
        .find(|r| r["alignment"] == "corrected" && r["split"] == "test")
        .map(|r| r["mean_error"].parse::<f64>().unwrap())
        .unwrap();
    let hyp_vs_ref_later = corrected_moves_later(&run.cfg);
    let pass = mean_target > 0.0 && later == report.len() && after < 0.001 && hyp_vs_ref_later;
    verdict(
        pass,
        format!(
            "mean training err {mean_target:+.6} s, {later}/{} boundaries moved later, post-correction mean |err| {after:.2e} s",
            report.len()
        ),
    )
}

/// Every corrected internal boundary lies at or after the uncorrected one.
fn corrected_moves_later(cfg: &RunConfig) -> bool {
    let ps = default_phoneset();
    let ids = boundfix_cli::io::list_ids(&cfg.hypothesis_dir, "lab").unwrap();
    ids.iter().all(|id| {
        let load = |dir: PathBuf| {
            let text = std::fs::read_to_string(dir.join(format!("{id}.lab"))).unwrap();
            parse_label_file(&text, id, &ps).unwrap()
        };
        let hyp: Alignment = load(cfg.hypothesis_dir.clone());
        let cor: Alignment = load(cfg.corrected_dir());
        hyp.boundaries().iter().zip(cor.boundaries()).all(|(h, c)| c >= *h)
    })
}

// 7 ------------------------------------------------------------------------

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Verdict {
    let sim = SimConfig { utterance_count: 120, ..four_rule_config(17, 0.02, 0.025) };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        if let Err(e) = pipeline(d.path(), &sim, 10) {
            return verdict(false, e);
        }
    }
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let differing: Vec<_> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let pass = fa.len() == fb.len() && differing.is_empty() && fa.len() > 3 * sim.utterance_count;
    verdict(pass, format!("{} files compared across two full runs, {} differ", fa.len(), differing.len()))
}

fn main() {
    // Keep the harness quiet under `cargo test -- --list` and similar.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 7] = [
        ("1 exact recovery", exact_recovery),
        ("2 noisy-corpus improvement", noisy_improvement),
        ("3 preprocessing discard share", preprocessing_share),
        ("4 metrics oracle", metrics_oracle),
        ("5 structural invariants", structural_invariants),
        ("6 sign convention", sign_convention),
        ("7 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let v = check();
        println!("[{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
