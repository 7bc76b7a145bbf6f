//! Synthetic corpora with known reference alignments and injected,
//! context-conditional boundary error.
//!
//! Each utterance draws from its own ChaCha8 stream (`seed`, stream =
//! utterance index), so content does not depend on generation order.
//!
//! The hypothesis is the reference with each internal boundary moved
//! earlier by `bias + noise`, where `bias` comes from the first rule whose
//! predicate matches the phone's senone. Recognition errors are injected on
//! the reference side (relabelled or split segments) so that the hypothesis
//! always matches the utterance structure, as a real aligner's output does.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compare::{compute_errors, pair_alignments, CompareError, PairingConfig};
use crate::correct::{shift_boundaries, DEFAULT_MIN_DUR};
use crate::features::{extract_senones, FeatureError, FeatureSchema, Senone, Syllable, UtteranceStructure, Word};
use crate::label::{from_ticks, to_ticks, Alignment, LabelError, PhoneClass, PhoneInfo, PhoneSet};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormalSpec {
    pub median: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationModel {
    pub vowel: LogNormalSpec,
    pub consonant: LogNormalSpec,
    pub silence: LogNormalSpec,
}

impl Default for DurationModel {
    fn default() -> Self {
        Self {
            vowel: LogNormalSpec { median: 0.09, sigma: 0.3 },
            consonant: LogNormalSpec { median: 0.06, sigma: 0.3 },
            silence: LogNormalSpec { median: 0.20, sigma: 0.3 },
        }
    }
}

impl DurationModel {
    fn spec(&self, class: PhoneClass) -> LogNormalSpec {
        match class {
            PhoneClass::Vowel => self.vowel,
            PhoneClass::Consonant => self.consonant,
            PhoneClass::Silence => self.silence,
        }
    }
}

/// A bias applied to phones whose senone matches every `feature = value`
/// pair in `when`. An empty predicate matches everything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasRule {
    pub bias: f64,
    #[serde(default)]
    pub when: BTreeMap<String, String>,
}

impl BiasRule {
    pub fn new<K: Into<String>, V: Into<String>>(bias: f64, when: impl IntoIterator<Item = (K, V)>) -> Self {
        Self { bias, when: when.into_iter().map(|(k, v)| (k.into(), v.into())).collect() }
    }

    pub fn matches(&self, senone: &Senone) -> bool {
        self.when
            .iter()
            .all(|(k, v)| senone.get(k).is_some_and(|x| x.to_string() == *v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    pub utterance_count: usize,
    /// Inclusive range; words are added until the sampled count is reached.
    pub phones_per_utterance: [usize; 2],
    pub durations: DurationModel,
    /// First matching rule wins.
    pub bias_rules: Vec<BiasRule>,
    pub noise_sigma: f64,
    pub recognition_error_rate: f64,
    /// Fraction of recognition errors realised as splits instead of relabels.
    pub split_share: f64,
    /// Probability of a pause between two words.
    pub pause_rate: f64,
    pub min_dur: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            utterance_count: 500,
            phones_per_utterance: [40, 60],
            durations: DurationModel::default(),
            bias_rules: Vec::new(),
            noise_sigma: 0.0,
            recognition_error_rate: 0.0,
            split_share: 0.0,
            pause_rate: 0.15,
            min_dur: DEFAULT_MIN_DUR,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The four class-by-stress rules used throughout the tests.
    pub fn class_stress_rules(vs: f64, vu: f64, cs: f64, cu: f64) -> Vec<BiasRule> {
        let rule = |b, class, stressed| BiasRule::new(b, [("cur_phone_class", class), ("syllable_stressed", stressed)]);
        vec![
            rule(vs, "vowel", "yes"),
            rule(vu, "vowel", "no"),
            rule(cs, "consonant", "yes"),
            rule(cu, "consonant", "no"),
        ]
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        let [lo, hi] = self.phones_per_utterance;
        if lo < 3 || hi < lo {
            return bad(format!("phones_per_utterance must satisfy 3 <= lo <= hi, got [{lo}, {hi}]"));
        }
        for (name, p) in [
            ("recognition_error_rate", self.recognition_error_rate),
            ("split_share", self.split_share),
            ("pause_rate", self.pause_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        if !(self.min_dur > 0.0 && self.min_dur.is_finite()) {
            return bad(format!("min_dur must be positive, got {}", self.min_dur));
        }
        for class in PhoneClass::ALL {
            let s = self.durations.spec(class);
            if !(s.median > 0.0 && s.median.is_finite() && s.sigma >= 0.0 && s.sigma.is_finite()) {
                return bad(format!("bad duration model for {class}"));
            }
        }
        for rule in &self.bias_rules {
            if !rule.bias.is_finite() {
                return bad("non-finite bias".into());
            }
            if let Some(k) = rule.when.keys().find(|k| schema.index_of(k).is_none()) {
                return bad(format!("bias rule uses feature `{k}` not in the schema"));
            }
        }
        Ok(())
    }

    fn bias_for(&self, senone: &Senone) -> f64 {
        self.bias_rules.iter().find(|r| r.matches(senone)).map_or(0.0, |r| r.bias)
    }
}

/// A built-in Italian-like inventory: five vowels with stressed
/// counterparts, common consonants, and `sil`.
pub fn default_phoneset() -> PhoneSet {
    let vowel = |stressed| PhoneInfo { class: PhoneClass::Vowel, stressed_vowel: stressed };
    let consonant = PhoneInfo { class: PhoneClass::Consonant, stressed_vowel: false };
    let mut entries = vec![("sil".to_string(), PhoneInfo { class: PhoneClass::Silence, stressed_vowel: false })];
    for v in ["a", "e", "i", "o", "u"] {
        entries.push((v.to_string(), vowel(false)));
        entries.push((format!("{v}1"), vowel(true)));
    }
    for c in [
        "p", "b", "t", "d", "k", "g", "f", "v", "s", "z", "ts", "dz", "tS", "dZ", "S", "m", "n", "J", "l", "L", "r",
        "j", "w",
    ] {
        entries.push((c.to_string(), consonant));
    }
    PhoneSet::new(entries).expect("built-in phone set is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimUtterance {
    pub structure: UtteranceStructure,
    pub reference: Alignment,
    pub hypothesis: Alignment,
}

struct Inventory<'a> {
    consonants: Vec<&'a str>,
    unstressed: Vec<&'a str>,
    stressed: Vec<&'a str>,
    silence: &'a str,
    all: Vec<&'a str>,
}

impl<'a> Inventory<'a> {
    fn new(phoneset: &'a PhoneSet) -> Result<Self, SimError> {
        let vowels: Vec<_> = phoneset.iter().filter(|(_, i)| i.class == PhoneClass::Vowel).collect();
        let mut stressed: Vec<&str> = vowels.iter().filter(|(_, i)| i.stressed_vowel).map(|(s, _)| *s).collect();
        let mut unstressed: Vec<&str> = vowels.iter().filter(|(_, i)| !i.stressed_vowel).map(|(s, _)| *s).collect();
        if stressed.is_empty() {
            stressed = unstressed.clone();
        }
        if unstressed.is_empty() {
            unstressed = stressed.clone();
        }
        let consonants = phoneset.symbols_of(PhoneClass::Consonant);
        if stressed.is_empty() || consonants.is_empty() {
            return Err(SimError::InvalidConfig("phone set needs at least one vowel and one consonant".into()));
        }
        Ok(Self { consonants, unstressed, stressed, silence: phoneset.silence_symbol(), all: phoneset.symbols().collect() })
    }
}

fn random_word(rng: &mut ChaCha8Rng, inv: &Inventory, ordinal: usize) -> Word {
    let n_syl = rng.random_range(1..=3usize);
    let stressed_at = rng.random_range(0..n_syl);
    let syllables = (0..n_syl)
        .map(|s| {
            let stressed = s == stressed_at;
            let vowels = if stressed { &inv.stressed } else { &inv.unstressed };
            let onset = *[0usize, 1, 1, 1, 2].choose(rng).unwrap();
            let coda = *[0usize, 0, 0, 1].choose(rng).unwrap();
            let mut phones = Vec::with_capacity(onset + coda + 1);
            for _ in 0..onset {
                phones.push(inv.consonants.choose(rng).unwrap().to_string());
            }
            phones.push(vowels.choose(rng).unwrap().to_string());
            for _ in 0..coda {
                phones.push(inv.consonants.choose(rng).unwrap().to_string());
            }
            Syllable { stressed, phones }
        })
        .collect();
    Word::new(format!("w{ordinal}"), syllables)
}

fn random_structure(
    rng: &mut ChaCha8Rng,
    cfg: &SimConfig,
    inv: &Inventory,
    phoneset: &PhoneSet,
    id: &str,
) -> Result<UtteranceStructure, SimError> {
    let [lo, hi] = cfg.phones_per_utterance;
    let target = rng.random_range(lo..=hi);
    let mut words = vec![Word::pause(inv.silence)];
    let mut count = 1;
    let mut ordinal = 0;
    while count + 1 < target {
        if ordinal > 0 && rng.random_bool(cfg.pause_rate) {
            words.push(Word::pause(inv.silence));
            count += 1;
        }
        let w = random_word(rng, inv, ordinal);
        count += w.syllables.iter().map(|s| s.phones.len()).sum::<usize>();
        words.push(w);
        ordinal += 1;
    }
    words.push(Word::pause(inv.silence));
    Ok(UtteranceStructure::new(id, words, phoneset)?)
}

fn generate_one(
    cfg: &SimConfig,
    phoneset: &PhoneSet,
    schema: &Arc<FeatureSchema>,
    inv: &Inventory,
    index: usize,
) -> Result<SimUtterance, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let id = format!("utt{index:04}");
    let structure = random_structure(&mut rng, cfg, inv, phoneset, &id)?;
    let senones = extract_senones(&structure, phoneset, schema)?;
    let n = structure.len();

    // The final boundary is never moved, so the last phone carries no bias.
    let bias: Vec<i64> = (0..n)
        .map(|j| if j + 1 == n { 0 } else { to_ticks(cfg.bias_for(&senones[j])) })
        .collect();
    let min_dur = to_ticks(cfg.min_dur);

    // Durations are floored so that noiseless injection and its exact
    // correction both stay inside the clamp window.
    let mut ticks = vec![0i64];
    for (j, phone) in structure.phones().iter().enumerate() {
        let spec = cfg.durations.spec(phoneset.class_of(phone).expect("structure phones are in the set"));
        let dist = LogNormal::new(spec.median.ln(), spec.sigma).expect("validated duration model");
        let drawn = to_ticks(dist.sample(&mut rng));
        let prev = if j == 0 { 0 } else { bias[j - 1] };
        let floor = min_dur + [0, bias[j], bias[j] - prev, -prev].into_iter().max().unwrap();
        ticks.push(ticks[j] + drawn.max(floor));
    }

    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated noise");
    let shifts: Vec<i64> = (0..n - 1)
        .map(|j| {
            let eps = if cfg.noise_sigma > 0.0 { to_ticks(noise.sample(&mut rng)) } else { 0 };
            -(bias[j] + eps)
        })
        .collect();
    let (hyp_ticks, _) = shift_boundaries(&ticks, &shifts, min_dur);

    let mut ref_phones: Vec<String> = structure.phones().to_vec();
    let mut ref_ticks = ticks;
    if cfg.recognition_error_rate > 0.0 {
        let mut j = 0;
        while j < ref_phones.len() {
            if rng.random_bool(cfg.recognition_error_rate) {
                let other = loop {
                    let s = *inv.all.choose(&mut rng).unwrap();
                    if s != ref_phones[j] {
                        break s.to_string();
                    }
                };
                let (start, end) = (ref_ticks[j], ref_ticks[j + 1]);
                if cfg.split_share > 0.0 && rng.random_bool(cfg.split_share) && end - start >= 2 {
                    ref_phones.insert(j + 1, other);
                    ref_ticks.insert(j + 1, start + (end - start) / 2);
                    j += 1;
                } else {
                    ref_phones[j] = other;
                }
            }
            j += 1;
        }
    }

    let secs = |t: &[i64]| t.iter().map(|&x| from_ticks(x)).collect::<Vec<_>>();
    let reference = Alignment::from_boundaries(&id, &ref_phones, &secs(&ref_ticks))?;
    let hypothesis = Alignment::from_boundaries(&id, structure.phones(), &secs(&hyp_ticks))?;
    Ok(SimUtterance { structure, reference, hypothesis })
}

/// Generate `cfg.utterance_count` utterances.
pub fn generate_corpus(
    cfg: &SimConfig,
    phoneset: &PhoneSet,
    schema: &Arc<FeatureSchema>,
) -> Result<Vec<SimUtterance>, SimError> {
    cfg.validate(schema)?;
    let inv = Inventory::new(phoneset)?;
    (0..cfg.utterance_count).map(|i| generate_one(cfg, phoneset, schema, &inv, i)).collect()
}

/// Generate the single utterance with the given index.
pub fn generate_utterance(
    cfg: &SimConfig,
    phoneset: &PhoneSet,
    schema: &Arc<FeatureSchema>,
    index: usize,
) -> Result<SimUtterance, SimError> {
    cfg.validate(schema)?;
    generate_one(cfg, phoneset, schema, &Inventory::new(phoneset)?, index)
}

/// Mean signed boundary error of every position pair in `corpus`, grouped by
/// the values of `grouping` features of the hypothesis phone.
pub fn oracle_class_means(
    corpus: &[SimUtterance],
    phoneset: &PhoneSet,
    schema: &Arc<FeatureSchema>,
    grouping: &[&str],
) -> Result<BTreeMap<Vec<String>, f64>, SimError> {
    if let Some(g) = grouping.iter().find(|g| schema.index_of(g).is_none()) {
        return Err(SimError::InvalidConfig(format!("unknown grouping feature `{g}`")));
    }
    let mut acc: BTreeMap<Vec<String>, (f64, usize)> = BTreeMap::new();
    for utt in corpus {
        let pairs = pair_alignments(&utt.reference, &utt.hypothesis, phoneset, None, &PairingConfig::default())?;
        let senones = extract_senones(&utt.structure, phoneset, schema)?;
        for rec in compute_errors(utt.reference.utterance_id(), &pairs) {
            let s = &senones[rec.phone_index];
            let key = grouping.iter().map(|g| s.get(g).unwrap().to_string()).collect();
            let slot = acc.entry(key).or_default();
            slot.0 += rec.err;
            slot.1 += 1;
        }
    }
    Ok(acc.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect())
}
