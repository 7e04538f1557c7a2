//! Seeded phrase-bank dialogue generator.
//!
//! Draw order within a dialogue is fixed: topic, turn count, then for each
//! turn its style followed by template and slot noun. Template draws use a
//! per-turn sub-stream so that editing one bank never shifts the draws of
//! other turns. Styles come from a separate stream; by default they are
//! dealt from shuffled blocks whose composition matches the target
//! distribution (blocked randomisation), so realised shares track the
//! target closely for every seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::biomarker::{parse_data_file, profile, BiomarkerProfile, LexiconSet};
use crate::corpus::{Corpus, Sentiment, Utterance};
use crate::{Error, Result};

pub const SLOT: &str = "{topic_noun}";
pub const MIN_TEMPLATES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Inclusive,
    Neutral,
    Generalising,
    Exclusive,
}

impl Style {
    pub const ALL: [Style; 4] = [
        Style::Inclusive,
        Style::Neutral,
        Style::Generalising,
        Style::Exclusive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Style::Inclusive => "inclusive",
            Style::Neutral => "neutral",
            Style::Generalising => "generalising",
            Style::Exclusive => "exclusive",
        }
    }

    pub fn parse(s: &str) -> Option<Style> {
        Style::ALL.into_iter().find(|st| st.as_str() == s)
    }

    /// Whether a profile carries the markers this style promises.
    pub fn satisfied_by(self, p: &BiomarkerProfile) -> bool {
        match self {
            Style::Inclusive => p.inclusive_count > 0,
            Style::Exclusive => p.exclusive_count > 0,
            Style::Generalising => p.generalising_count > 0,
            Style::Neutral => {
                p.inclusive_count == 0 && p.exclusive_count == 0 && p.generalising_count == 0
            }
        }
    }

    fn rule(self) -> &'static str {
        match self {
            Style::Inclusive => "inclusive_count = 0",
            Style::Exclusive => "exclusive_count = 0",
            Style::Generalising => "generalising_count = 0",
            Style::Neutral => "neutral template contains markers",
        }
    }
}

impl std::fmt::Display for Style {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhraseBank {
    pub topic: String,
    pub style: Style,
    pub version: String,
    pub templates: Vec<String>,
}

impl PhraseBank {
    pub fn parse(topic: &str, style: Style, src: &str) -> Result<Self> {
        let (header, body) = parse_data_file(src)?;
        Ok(PhraseBank {
            topic: topic.to_string(),
            style,
            version: header.version,
            templates: body.into_iter().map(|(_, l)| l).collect(),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhraseBankSet {
    banks: BTreeMap<(String, Style), PhraseBank>,
    nouns: BTreeMap<String, Vec<String>>,
    /// Topic order for uniform topic draws.
    topics: Vec<String>,
}

impl PhraseBankSet {
    fn note_topic(&mut self, topic: &str) {
        if !self.topics.iter().any(|t| t == topic) {
            self.topics.push(topic.to_string());
        }
    }

    pub fn insert(&mut self, bank: PhraseBank) {
        self.note_topic(&bank.topic);
        self.banks.insert((bank.topic.clone(), bank.style), bank);
    }

    pub fn set_nouns(&mut self, topic: &str, nouns: Vec<String>) {
        self.note_topic(topic);
        self.nouns.insert(topic.to_string(), nouns);
    }

    pub fn add_bank_file(&mut self, topic: &str, style: Style, src: &str) -> Result<()> {
        self.insert(PhraseBank::parse(topic, style, src)?);
        Ok(())
    }

    pub fn add_nouns_file(&mut self, topic: &str, src: &str) -> Result<()> {
        let (_, body) = parse_data_file(src)?;
        self.set_nouns(topic, body.into_iter().map(|(_, l)| l).collect());
        Ok(())
    }

    /// Loads `<dir>/<topic>/{nouns.txt,<style>.bank}` for every topic
    /// subdirectory, in sorted order.
    pub fn load_dir(dir: &std::path::Path) -> Result<Self> {
        let read = |p: &std::path::Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let mut topics: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        topics.sort();
        let mut set = PhraseBankSet::default();
        for topic in topics {
            let tdir = dir.join(&topic);
            let nouns = tdir.join("nouns.txt");
            if nouns.exists() {
                set.add_nouns_file(&topic, &read(&nouns)?)?;
            }
            for style in Style::ALL {
                let path = tdir.join(format!("{style}.bank"));
                if path.exists() {
                    set.add_bank_file(&topic, style, &read(&path)?)?;
                }
            }
        }
        Ok(set)
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn bank(&self, topic: &str, style: Style) -> Option<&PhraseBank> {
        self.banks.get(&(topic.to_string(), style))
    }

    pub fn nouns(&self, topic: &str) -> &[String] {
        self.nouns.get(topic).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn banks(&self) -> impl Iterator<Item = &PhraseBank> {
        self.banks.values()
    }

    /// Every concrete text a template can produce for its topic.
    pub fn realizations(&self, topic: &str, template: &str) -> Vec<String> {
        if template.contains(SLOT) {
            self.nouns(topic)
                .iter()
                .map(|n| template.replace(SLOT, n))
                .collect()
        } else {
            vec![template.to_string()]
        }
    }

    pub fn version_tag(&self) -> String {
        let mut versions: Vec<&str> = self.banks.values().map(|b| b.version.as_str()).collect();
        versions.sort();
        versions.dedup();
        format!("banks@{}", versions.join("+"))
    }

    /// Checks that every (topic, style) pair has enough templates and that
    /// slotted templates have nouns to fill them.
    pub fn check_coverage(&self) -> Result<()> {
        if self.topics.is_empty() {
            return Err(Error::Config("phrase bank set has no topics".into()));
        }
        for topic in &self.topics {
            for style in Style::ALL {
                let bank = self.bank(topic, style).ok_or_else(|| {
                    Error::Config(format!("missing phrase bank for ({topic}, {style})"))
                })?;
                if bank.templates.len() < MIN_TEMPLATES {
                    return Err(Error::Config(format!(
                        "phrase bank ({topic}, {style}) has {} templates, need {MIN_TEMPLATES}",
                        bank.templates.len()
                    )));
                }
                if bank.templates.iter().any(|t| t.contains(SLOT)) && self.nouns(topic).is_empty() {
                    return Err(Error::Config(format!(
                        "topic {topic} uses {SLOT} but has no nouns"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Default for StyleDistribution {
    fn default() -> Self {
        StyleDistribution {
            weights: [0.297, 0.290, 0.2079, 0.2051],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub topic: String,
    pub style: Option<Style>,
    pub template: Option<String>,
    pub realized: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BankValidationReport {
    pub violations: Vec<Violation>,
}

impl BankValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every template (realised with each slot noun) that breaks its
/// style's marker rule, plus structural gaps. Empty means valid.
pub fn validate_banks(banks: &PhraseBankSet, lexicons: &LexiconSet) -> BankValidationReport {
    let mut violations = Vec::new();
    for topic in banks.topics() {
        for noun in banks.nouns(topic) {
            let p = profile(noun, lexicons);
            if p.inclusive_count + p.exclusive_count + p.generalising_count > 0 {
                violations.push(Violation {
                    topic: topic.clone(),
                    style: None,
                    template: None,
                    realized: Some(noun.clone()),
                    reason: "slot noun contains markers".into(),
                });
            }
        }
        for style in Style::ALL {
            let Some(bank) = banks.bank(topic, style) else {
                violations.push(Violation {
                    topic: topic.clone(),
                    style: Some(style),
                    template: None,
                    realized: None,
                    reason: "missing bank".into(),
                });
                continue;
            };
            if bank.templates.len() < MIN_TEMPLATES {
                violations.push(Violation {
                    topic: topic.clone(),
                    style: Some(style),
                    template: None,
                    realized: None,
                    reason: format!("only {} templates", bank.templates.len()),
                });
            }
            for template in &bank.templates {
                let realized = banks.realizations(topic, template);
                if realized.is_empty() {
                    violations.push(Violation {
                        topic: topic.clone(),
                        style: Some(style),
                        template: Some(template.clone()),
                        realized: None,
                        reason: "slot without nouns".into(),
                    });
                }
                for text in realized {
                    if !style.satisfied_by(&profile(&text, lexicons)) {
                        violations.push(Violation {
                            topic: topic.clone(),
                            style: Some(style),
                            template: Some(template.clone()),
                            realized: Some(text),
                            reason: style.rule().into(),
                        });
                    }
                }
            }
        }
    }
    BankValidationReport { violations }
}

/// Target per-turn style weights, in [`Style::ALL`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleDistribution {
    weights: [f64; 4],
}

impl StyleDistribution {
    pub fn new(weights: [f64; 4]) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "style weights must all be > 0, got {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "style weights sum to {sum}, expected 1"
            )));
        }
        Ok(StyleDistribution { weights })
    }

    /// Rescales positive weights to sum to one.
    pub fn normalized(weights: [f64; 4]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "invalid style weights {weights:?}"
            )));
        }
        StyleDistribution::new(weights.map(|w| w / sum))
    }

    pub fn weights(&self) -> [f64; 4] {
        self.weights
    }

    /// Parses four comma-separated weights, renormalising them.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad style weight {p:?}")))
            })
            .collect::<Result<_>>()?;
        let arr: [f64; 4] = parts
            .try_into()
            .map_err(|_| Error::InvalidInput("expected four style weights".into()))?;
        StyleDistribution::normalized(arr)
    }

    /// Largest-remainder apportionment of `block` draws.
    pub fn quotas(&self, block: usize) -> [usize; 4] {
        let exact = self.weights.map(|w| w * block as f64);
        let mut q = exact.map(|e| e.floor() as usize);
        let mut left = block - q.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            (exact[b] - exact[b].floor())
                .total_cmp(&(exact[a] - exact[a].floor()))
                .then(a.cmp(&b))
        });
        for i in order {
            if left == 0 {
                break;
            }
            q[i] += 1;
            left -= 1;
        }
        q
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum StyleSampling {
    /// Styles dealt from shuffled blocks of `block` turns with exact quotas.
    Blocked { block: usize },
    /// Each style drawn independently from the distribution.
    Independent,
}

impl Default for StyleSampling {
    fn default() -> Self {
        StyleSampling::Blocked { block: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTurn {
    pub text: String,
    pub style: Style,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthDialogue {
    pub id: String,
    pub topic: String,
    pub turns: Vec<SynthTurn>,
    pub seed_path: String,
}

/// SplitMix64 finaliser; derives independent sub-seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

const STREAM_DIALOGUE: u64 = 1;
const STREAM_STYLE: u64 = 2;
const STREAM_TURN: u64 = 3;

struct StyleSource {
    mode: StyleSampling,
    dist: StyleDistribution,
    weighted: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    deck: Vec<Style>,
}

impl StyleSource {
    fn new(dist: &StyleDistribution, mode: StyleSampling, seed: u64) -> Result<Self> {
        if let StyleSampling::Blocked { block } = mode {
            if block == 0 {
                return Err(Error::InvalidInput("style block size must be > 0".into()));
            }
        }
        Ok(StyleSource {
            mode,
            dist: dist.clone(),
            weighted: WeightedIndex::new(dist.weights())
                .map_err(|e| Error::InvalidInput(e.to_string()))?,
            rng: ChaCha8Rng::seed_from_u64(mix_seed(&[seed, STREAM_STYLE])),
            deck: Vec::new(),
        })
    }

    fn next(&mut self) -> Style {
        match self.mode {
            StyleSampling::Independent => Style::ALL[self.weighted.sample(&mut self.rng)],
            StyleSampling::Blocked { block } => {
                if self.deck.is_empty() {
                    let q = self.dist.quotas(block);
                    for (s, n) in Style::ALL.iter().zip(q) {
                        self.deck.extend(std::iter::repeat_n(*s, n));
                    }
                    self.deck.shuffle(&mut self.rng);
                }
                self.deck.pop().expect("non-empty deck")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dialogues: usize,
    pub dist: StyleDistribution,
    pub sampling: StyleSampling,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dialogues: 1000,
            dist: StyleDistribution::default(),
            sampling: StyleSampling::default(),
            seed: 0,
        }
    }
}

pub fn generate(
    n_dialogues: usize,
    dist: &StyleDistribution,
    banks: &PhraseBankSet,
    seed: u64,
) -> Result<Vec<SynthDialogue>> {
    generate_with(
        &SynthConfig {
            dialogues: n_dialogues,
            dist: dist.clone(),
            sampling: StyleSampling::default(),
            seed,
        },
        banks,
    )
}

pub fn generate_with(cfg: &SynthConfig, banks: &PhraseBankSet) -> Result<Vec<SynthDialogue>> {
    if cfg.dialogues == 0 {
        return Err(Error::InvalidInput("need at least one dialogue".into()));
    }
    banks.check_coverage()?;
    let topics = banks.topics();
    let mut styles = StyleSource::new(&cfg.dist, cfg.sampling, cfg.seed)?;
    let mut out = Vec::with_capacity(cfg.dialogues);
    for d in 0..cfg.dialogues {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, STREAM_DIALOGUE, d as u64]));
        let topic = &topics[rng.random_range(0..topics.len())];
        let n_turns = rng.random_range(2..=4usize);
        let mut turns = Vec::with_capacity(n_turns);
        for t in 0..n_turns {
            let style = styles.next();
            turns.push(realize_turn(banks, topic, style, cfg.seed, d, t));
        }
        out.push(SynthDialogue {
            id: format!("d{d:05}"),
            topic: topic.clone(),
            turns,
            seed_path: format!("{}/d{d}", cfg.seed),
        });
    }
    Ok(out)
}

fn realize_turn(
    banks: &PhraseBankSet,
    topic: &str,
    style: Style,
    seed: u64,
    dialogue: usize,
    turn: usize,
) -> SynthTurn {
    let mut rng =
        ChaCha8Rng::seed_from_u64(mix_seed(&[seed, STREAM_TURN, dialogue as u64, turn as u64]));
    let bank = banks.bank(topic, style).expect("coverage checked");
    let template = &bank.templates[rng.random_range(0..bank.templates.len())];
    let text = if template.contains(SLOT) {
        let nouns = banks.nouns(topic);
        template.replace(SLOT, &nouns[rng.random_range(0..nouns.len())])
    } else {
        template.clone()
    };
    SynthTurn { text, style }
}

/// Realised per-turn style counts in [`Style::ALL`] order.
pub fn style_counts(dialogues: &[SynthDialogue]) -> [usize; 4] {
    let mut c = [0; 4];
    for t in dialogues.iter().flat_map(|d| &d.turns) {
        c[t.style as usize] += 1;
    }
    c
}

/// Chi-square goodness-of-fit p-value of realised counts against `dist`.
pub fn style_gof_p(counts: [usize; 4], dist: &StyleDistribution) -> f64 {
    let n: usize = counts.iter().sum();
    let chi2: f64 = counts
        .iter()
        .zip(dist.weights())
        .map(|(&o, w)| {
            let e = w * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    crate::stats::chi_square_sf(chi2, 3.0)
}

/// Table of realised style frequencies, matching the usual count/percent
/// layout.
pub fn style_table_csv(dialogues: &[SynthDialogue], dist: &StyleDistribution) -> String {
    let counts = style_counts(dialogues);
    let total: usize = counts.iter().sum();
    let mut out = String::from("style,count,percent,target_percent\n");
    for (i, s) in Style::ALL.iter().enumerate() {
        let _ = writeln!(
            out,
            "{s},{},{:.2},{:.2}",
            counts[i],
            100.0 * counts[i] as f64 / total.max(1) as f64,
            100.0 * dist.weights()[i]
        );
    }
    let _ = writeln!(out, "total,{total},100.00,100.00");
    out
}

/// Flattens dialogues into a corpus of unlabeled turns, with the style tag
/// kept in `group` and alternating speakers.
pub fn to_corpus(dialogues: &[SynthDialogue], source: &str) -> Result<Corpus> {
    let utterances = dialogues
        .iter()
        .flat_map(|d| {
            d.turns.iter().enumerate().map(move |(i, t)| Utterance {
                id: format!("{}-t{i}", d.id),
                text: t.text.clone(),
                sentiment: Sentiment::Unlabeled,
                speaker: Some(format!("{}-s{}", d.id, i % 2)),
                group: Some(t.style.as_str().to_string()),
                timestamp: None,
            })
        })
        .collect();
    Corpus::new(source, utterances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults;

    #[test]
    fn shipped_banks_are_valid() {
        let banks = defaults::phrase_banks();
        let report = validate_banks(&banks, &LexiconSet::default());
        assert!(report.is_valid(), "{:#?}", report.violations);
        assert_eq!(banks.topics().len(), 8);
    }

    #[test]
    fn injected_violations_are_reported() {
        let lex = LexiconSet::default();
        let mut banks = defaults::phrase_banks();
        let mut bank = banks.bank("housing", Style::Inclusive).unwrap().clone();
        bank.templates.push("That is fine.".into());
        banks.insert(bank);
        let r = validate_banks(&banks, &lex);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].reason, "inclusive_count = 0");

        let mut banks = defaults::phrase_banks();
        let mut bank = banks.bank("schools", Style::Neutral).unwrap().clone();
        bank.templates.push("The bell always rings at nine.".into());
        banks.insert(bank);
        assert_eq!(validate_banks(&banks, &lex).violations.len(), 1);
    }

    #[test]
    fn missing_bank_is_config_error() {
        let mut banks = PhraseBankSet::default();
        banks.insert(PhraseBank {
            topic: "x".into(),
            style: Style::Inclusive,
            version: "1".into(),
            templates: vec!["we".into(), "us".into(), "our".into()],
        });
        let err = generate(3, &StyleDistribution::default(), &banks, 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn same_seed_is_identical() {
        let banks = defaults::phrase_banks();
        let a = generate(200, &StyleDistribution::default(), &banks, 42).unwrap();
        let b = generate(200, &StyleDistribution::default(), &banks, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = generate(200, &StyleDistribution::default(), &banks, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn turn_count_bounds() {
        let banks = defaults::phrase_banks();
        let ds = generate(500, &StyleDistribution::default(), &banks, 9).unwrap();
        let total: usize = ds.iter().map(|d| d.turns.len()).sum();
        assert!((1000..=2000).contains(&total));
        assert!(ds.iter().all(|d| (2..=4).contains(&d.turns.len())));
        // All three turn counts and all topics occur.
        for k in 2..=4 {
            assert!(ds.iter().any(|d| d.turns.len() == k));
        }
        for t in banks.topics() {
            assert!(ds.iter().any(|d| &d.topic == t));
        }
    }

    #[test]
    fn near_degenerate_distribution() {
        let banks = defaults::phrase_banks();
        let lex = LexiconSet::default();
        let eps = 1e-6;
        let dist = StyleDistribution::normalized([1.0, eps, eps, eps]).unwrap();
        let ds = generate(300, &dist, &banks, 5).unwrap();
        let turns: Vec<_> = ds.iter().flat_map(|d| &d.turns).collect();
        let incl = turns.iter().filter(|t| t.style == Style::Inclusive).count();
        assert!(incl as f64 >= 0.99 * turns.len() as f64);
        for t in turns.iter().filter(|t| t.style == Style::Inclusive) {
            assert!(profile(&t.text, &lex).inclusive_count > 0);
        }
    }

    #[test]
    fn independent_sampling_goodness_of_fit() {
        let banks = defaults::phrase_banks();
        let cfg = SynthConfig {
            dialogues: 1000,
            sampling: StyleSampling::Independent,
            seed: 17,
            ..SynthConfig::default()
        };
        let ds = generate_with(&cfg, &banks).unwrap();
        let counts = style_counts(&ds);
        assert!(counts.iter().sum::<usize>() >= 2000);
        assert!(style_gof_p(counts, &cfg.dist) > 0.001);
    }

    #[test]
    fn editing_one_bank_leaves_other_turns_alone() {
        let banks = defaults::phrase_banks();
        let mut edited = banks.clone();
        let mut bank = edited.bank("housing", Style::Neutral).unwrap().clone();
        bank.templates
            .push("The housing office opens at nine.".into());
        edited.insert(bank);
        let a = generate(300, &StyleDistribution::default(), &banks, 8).unwrap();
        let b = generate(300, &StyleDistribution::default(), &edited, 8).unwrap();
        for (da, db) in a.iter().zip(&b) {
            assert_eq!(da.topic, db.topic);
            for (ta, tb) in da.turns.iter().zip(&db.turns) {
                assert_eq!(ta.style, tb.style);
                if !(da.topic == "housing" && ta.style == Style::Neutral) {
                    assert_eq!(ta.text, tb.text);
                }
            }
        }
    }

    #[test]
    fn distribution_validation() {
        assert!(StyleDistribution::new([0.5, 0.5, 0.0, 0.0]).is_err());
        assert!(StyleDistribution::new([0.3, 0.3, 0.3, 0.3]).is_err());
        let d = StyleDistribution::parse("2,1,1,1").unwrap();
        assert!((d.weights()[0] - 0.4).abs() < 1e-12);
        assert_eq!(
            StyleDistribution::default().quotas(1000),
            [297, 290, 208, 205]
        );
    }
}
