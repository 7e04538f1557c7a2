//! Lexicon-based biomarker detection.
//!
//! Three markers are profiled per text: exclusive (out-group) pronouns,
//! generalising (absolutist) syntax, and inclusive (in-group) references,
//! whose absence is itself reported as a marker. Matching is token-exact
//! against user-replaceable lexicons.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sentiment};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    /// Start and end offsets in Unicode scalar values.
    pub span: (usize, usize),
}

/// A token with byte offsets into the source, used internally for slicing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct RawToken {
    pub surface: String,
    pub bytes: (usize, usize),
    pub chars: (usize, usize),
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

pub(crate) fn raw_tokens(text: &str) -> Vec<RawToken> {
    let mut out = Vec::new();
    let mut current: Option<(usize, usize, String)> = None;
    let mut char_idx = 0;
    for (byte_idx, c) in text.char_indices() {
        if is_token_char(c) {
            let (_, _, s) = current.get_or_insert_with(|| (byte_idx, char_idx, String::new()));
            if c == '\u{2019}' {
                s.push('\'');
            } else {
                s.extend(c.to_lowercase());
            }
        } else if let Some((b0, c0, s)) = current.take() {
            out.push(RawToken {
                surface: s,
                bytes: (b0, byte_idx),
                chars: (c0, char_idx),
            });
        }
        char_idx += 1;
    }
    if let Some((b0, c0, s)) = current {
        out.push(RawToken {
            surface: s,
            bytes: (b0, text.len()),
            chars: (c0, char_idx),
        });
    }
    out
}

/// Maximal runs of letters, digits and apostrophes, lowercased. Typographic
/// apostrophes are folded to ASCII.
pub fn tokenize(text: &str) -> Vec<Token> {
    raw_tokens(text)
        .into_iter()
        .map(|t| Token {
            surface: t.surface,
            span: t.chars,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLexicon", into = "RawLexicon")]
pub struct Lexicon {
    pub name: String,
    pub version: String,
    unigrams: BTreeSet<String>,
    /// First token to the set of second tokens.
    bigrams: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
struct RawLexicon {
    name: String,
    version: String,
    entries: Vec<Vec<String>>,
}

impl TryFrom<RawLexicon> for Lexicon {
    type Error = Error;

    fn try_from(raw: RawLexicon) -> Result<Self> {
        Lexicon::new(raw.name, raw.version, raw.entries)
    }
}

impl From<Lexicon> for RawLexicon {
    fn from(l: Lexicon) -> Self {
        RawLexicon {
            entries: l.entries().collect(),
            name: l.name,
            version: l.version,
        }
    }
}

impl Lexicon {
    pub fn new(
        name: impl Into<String>,
        version: impl Into<String>,
        entries: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<Self> {
        let name = name.into();
        let mut unigrams = BTreeSet::new();
        let mut bigrams: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for e in entries {
            if e.iter().any(|w| w.is_empty() || *w != w.to_lowercase()) {
                return Err(Error::Config(format!(
                    "lexicon {name}: entry {e:?} must be lowercase"
                )));
            }
            let fresh = match e.as_slice() {
                [w] => unigrams.insert(w.clone()),
                [a, b] => bigrams.entry(a.clone()).or_default().insert(b.clone()),
                _ => {
                    return Err(Error::Config(format!(
                        "lexicon {name}: entry {e:?} must have one or two tokens"
                    )))
                }
            };
            if !fresh {
                return Err(Error::Config(format!(
                    "lexicon {name}: duplicate entry {e:?}"
                )));
            }
        }
        if unigrams.is_empty() && bigrams.is_empty() {
            return Err(Error::Config(format!("lexicon {name} has no entries")));
        }
        Ok(Lexicon {
            name,
            version: version.into(),
            unigrams,
            bigrams,
        })
    }

    /// Parses the lexicon file format: a `name=… version=…` header line,
    /// `#` comments, then one entry per line (a bigram is two words).
    pub fn parse(src: &str) -> Result<Self> {
        let (header, body) = parse_data_file(src)?;
        let entries = body
            .into_iter()
            .map(|(_, line)| line.split_whitespace().map(str::to_owned).collect())
            .collect::<Vec<Vec<String>>>();
        Lexicon::new(header.name, header.version, entries)
    }

    /// All entries, unigrams first.
    pub fn entries(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        self.unigrams.iter().map(|w| vec![w.clone()]).chain(
            self.bigrams
                .iter()
                .flat_map(|(a, bs)| bs.iter().map(move |b| vec![a.clone(), b.clone()])),
        )
    }

    pub fn len(&self) -> usize {
        self.unigrams.len() + self.bigrams.values().map(BTreeSet::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, entry: &[&str]) -> bool {
        match entry {
            [w] => self.contains_unigram(w),
            [a, b] => self.contains_bigram(a, b),
            _ => false,
        }
    }

    pub fn contains_unigram(&self, w: &str) -> bool {
        self.unigrams.contains(w)
    }

    pub fn contains_bigram(&self, a: &str, b: &str) -> bool {
        self.bigrams.get(a).is_some_and(|bs| bs.contains(b))
    }

    pub fn has_bigrams(&self) -> bool {
        !self.bigrams.is_empty()
    }

    pub fn with_entry(&self, entry: Vec<String>) -> Result<Self> {
        let mut entries: Vec<_> = self.entries().collect();
        if !entries.contains(&entry) {
            entries.push(entry);
        }
        Lexicon::new(self.name.clone(), self.version.clone(), entries)
    }

    /// Token-index ranges matched by this lexicon: bigram entries first at
    /// each position, then unigrams; each position is consumed at most once.
    pub fn matches(&self, tokens: &[impl AsRef<str>]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let w = tokens[i].as_ref();
            if i + 1 < tokens.len() && self.contains_bigram(w, tokens[i + 1].as_ref()) {
                out.push((i, i + 2));
                i += 2;
            } else if self.contains_unigram(w) {
                out.push((i, i + 1));
                i += 1;
            } else {
                i += 1;
            }
        }
        out
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.surface
    }
}

impl AsRef<str> for RawToken {
    fn as_ref(&self) -> &str {
        &self.surface
    }
}

pub(crate) struct DataHeader {
    pub name: String,
    pub version: String,
}

/// Splits a data file into its `key=value` header and numbered body lines.
/// Comments and blank lines are dropped.
pub(crate) fn parse_data_file(src: &str) -> Result<(DataHeader, Vec<(usize, String)>)> {
    let mut header = None;
    let mut body = Vec::new();
    for (idx, line) in src.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if header.is_none() {
            let mut name = None;
            let mut version = None;
            for kv in line.split_whitespace() {
                let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    message: format!("expected key=value header, found {kv:?}"),
                })?;
                match k {
                    "name" => name = Some(v.to_string()),
                    "version" => version = Some(v.to_string()),
                    _ => {}
                }
            }
            header = Some(DataHeader {
                name: name.ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    message: "header lacks name=".into(),
                })?,
                version: version.unwrap_or_else(|| "0".into()),
            });
            continue;
        }
        body.push((idx + 1, line.to_string()));
    }
    let header = header.ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    Ok((header, body))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marker {
    Exclusive,
    Generalising,
    Inclusive,
}

impl Marker {
    pub const ALL: [Marker; 3] = [Marker::Exclusive, Marker::Generalising, Marker::Inclusive];

    pub fn as_str(self) -> &'static str {
        match self {
            Marker::Exclusive => "exclusive",
            Marker::Generalising => "generalising",
            Marker::Inclusive => "inclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconSet {
    pub exclusive: Lexicon,
    pub generalising: Lexicon,
    pub inclusive: Lexicon,
}

impl LexiconSet {
    pub fn get(&self, marker: Marker) -> &Lexicon {
        match marker {
            Marker::Exclusive => &self.exclusive,
            Marker::Generalising => &self.generalising,
            Marker::Inclusive => &self.inclusive,
        }
    }

    pub fn get_mut(&mut self, marker: Marker) -> &mut Lexicon {
        match marker {
            Marker::Exclusive => &mut self.exclusive,
            Marker::Generalising => &mut self.generalising,
            Marker::Inclusive => &mut self.inclusive,
        }
    }

    /// Short identifier of the lexicon versions, for provenance.
    pub fn version_tag(&self) -> String {
        Marker::ALL
            .iter()
            .map(|m| {
                let l = self.get(*m);
                format!("{}@{}", l.name, l.version)
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Reads `exclusive.lex`, `generalising.lex` and `inclusive.lex` from a
    /// directory.
    pub fn load_dir(dir: &std::path::Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            let src = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Lexicon::parse(&src)
        };
        Ok(LexiconSet {
            exclusive: read("exclusive.lex")?,
            generalising: read("generalising.lex")?,
            inclusive: read("inclusive.lex")?,
        })
    }
}

impl Default for LexiconSet {
    fn default() -> Self {
        crate::defaults::lexicons()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Densities {
    pub exclusive: f64,
    pub generalising: f64,
    pub inclusive: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerProfile {
    pub exclusive_count: u32,
    pub generalising_count: u32,
    pub inclusive_count: u32,
    pub token_count: u32,
    pub inclusive_absent: bool,
    pub densities: Densities,
}

impl BiomarkerProfile {
    pub fn from_counts(exclusive: u32, generalising: u32, inclusive: u32, tokens: u32) -> Self {
        let density = |c: u32| {
            if tokens == 0 {
                0.0
            } else {
                c as f64 / tokens as f64
            }
        };
        BiomarkerProfile {
            exclusive_count: exclusive,
            generalising_count: generalising,
            inclusive_count: inclusive,
            token_count: tokens,
            inclusive_absent: inclusive == 0,
            densities: Densities {
                exclusive: density(exclusive),
                generalising: density(generalising),
                inclusive: density(inclusive),
            },
        }
    }

    pub fn count(&self, marker: Marker) -> u32 {
        match marker {
            Marker::Exclusive => self.exclusive_count,
            Marker::Generalising => self.generalising_count,
            Marker::Inclusive => self.inclusive_count,
        }
    }

    pub fn density(&self, marker: Marker) -> f64 {
        match marker {
            Marker::Exclusive => self.densities.exclusive,
            Marker::Generalising => self.densities.generalising,
            Marker::Inclusive => self.densities.inclusive,
        }
    }
}

pub fn profile(text: &str, lexicons: &LexiconSet) -> BiomarkerProfile {
    profile_tokens(&tokenize(text), lexicons)
}

pub fn profile_tokens(tokens: &[impl AsRef<str>], lexicons: &LexiconSet) -> BiomarkerProfile {
    let count = |l: &Lexicon| l.matches(tokens).iter().map(|(a, b)| (b - a) as u32).sum();
    BiomarkerProfile::from_counts(
        count(&lexicons.exclusive),
        count(&lexicons.generalising),
        count(&lexicons.inclusive),
        tokens.len() as u32,
    )
}

type Metric = (&'static str, &'static str, fn(&PrevalenceRow) -> f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceRow {
    /// `None` for the overall row.
    pub stratum: Option<Sentiment>,
    pub n: usize,
    pub mean_exclusive: f64,
    pub mean_generalising: f64,
    pub pct_inclusive_absent: f64,
}

impl PrevalenceRow {
    pub fn label(&self) -> &'static str {
        self.stratum.map(Sentiment::as_str).unwrap_or("overall")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceReport {
    /// Non-empty strata in sentiment order.
    pub strata: Vec<PrevalenceRow>,
    pub overall: PrevalenceRow,
}

#[derive(Default)]
struct Acc {
    n: usize,
    exclusive: u64,
    generalising: u64,
    absent: usize,
}

impl Acc {
    fn add(&mut self, p: &BiomarkerProfile) {
        self.n += 1;
        self.exclusive += p.exclusive_count as u64;
        self.generalising += p.generalising_count as u64;
        self.absent += p.inclusive_absent as usize;
    }

    fn row(&self, stratum: Option<Sentiment>) -> PrevalenceRow {
        let mean = |x: u64| {
            if self.n == 0 {
                0.0
            } else {
                x as f64 / self.n as f64
            }
        };
        PrevalenceRow {
            stratum,
            n: self.n,
            mean_exclusive: mean(self.exclusive),
            mean_generalising: mean(self.generalising),
            pct_inclusive_absent: if self.n == 0 {
                0.0
            } else {
                100.0 * self.absent as f64 / self.n as f64
            },
        }
    }
}

pub fn prevalence(corpus: &Corpus, lexicons: &LexiconSet) -> PrevalenceReport {
    let profiles: Vec<_> = corpus
        .utterances
        .iter()
        .map(|u| (u.sentiment, profile(&u.text, lexicons)))
        .collect();
    prevalence_from_profiles(&profiles)
}

pub fn prevalence_from_profiles(profiles: &[(Sentiment, BiomarkerProfile)]) -> PrevalenceReport {
    let mut overall = Acc::default();
    let mut per: [Acc; 4] = Default::default();
    for (s, p) in profiles {
        overall.add(p);
        per[*s as usize].add(p);
    }
    let strata = Sentiment::ALL
        .iter()
        .zip(&per)
        .filter(|(_, acc)| acc.n > 0)
        .map(|(s, acc)| acc.row(Some(*s)))
        .collect();
    PrevalenceReport {
        strata,
        overall: overall.row(None),
    }
}

impl PrevalenceReport {
    /// Wide table with one row per biomarker and one column per stratum,
    /// `overall` first.
    pub fn table_csv(&self) -> String {
        let rows: Vec<&PrevalenceRow> =
            std::iter::once(&self.overall).chain(&self.strata).collect();
        let mut out = String::from("biomarker,metric");
        for r in &rows {
            let _ = write!(out, ",{}", r.label());
        }
        out.push('\n');
        let metrics: [Metric; 3] = [
            ("exclusive_pronouns", "mean_count_per_comment", |r| {
                r.mean_exclusive
            }),
            ("generalising_syntax", "mean_count_per_comment", |r| {
                r.mean_generalising
            }),
            ("absence_of_inclusive_references", "pct_of_comments", |r| {
                r.pct_inclusive_absent
            }),
        ];
        for (name, metric, get) in metrics {
            let _ = write!(out, "{name},{metric}");
            for r in &rows {
                let _ = write!(out, ",{}", fmt_num(get(r)));
            }
            out.push('\n');
        }
        let _ = write!(out, "n,count");
        for r in &rows {
            let _ = write!(out, ",{}", r.n);
        }
        out.push('\n');
        out
    }

    /// Long format for plotting: one line per (stratum, biomarker).
    pub fn long_csv(&self) -> String {
        let mut out = String::from("stratum,n,biomarker,value\n");
        for r in std::iter::once(&self.overall).chain(&self.strata) {
            for (name, v) in [
                ("exclusive_pronouns", r.mean_exclusive),
                ("generalising_syntax", r.mean_generalising),
                ("absence_of_inclusive_references", r.pct_inclusive_absent),
            ] {
                let _ = writeln!(out, "{},{},{name},{}", r.label(), r.n, fmt_num(v));
            }
        }
        out
    }
}

/// Fixed six-decimal rendering so tables diff cleanly.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.6}")
}

/// Percentile with linear interpolation between order statistics.
pub fn calibrate_threshold(densities: &[f64], q: f64) -> Result<f64> {
    if densities.is_empty() {
        return Err(Error::InvalidInput("empty density sample".into()));
    }
    if !(q > 0.0 && q < 100.0) {
        return Err(Error::InvalidInput(format!(
            "percentile {q} outside (0, 100)"
        )));
    }
    if densities.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("non-finite density".into()));
    }
    let mut sorted = densities.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub const DEFAULT_PERCENTILE: f64 = 90.0;
pub const DEFAULT_BINS: usize = 20;

/// Equal-width histogram over [0, 1]; a density of exactly 1 lands in the
/// last bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn unit(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let mut counts = vec![0u64; bins];
        for &v in values {
            let idx = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        Histogram { edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// A biomarker: its pattern, reference frequency distribution, theoretical
/// grounding, calibrated threshold and community-verification flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerSpec {
    pub pattern: Marker,
    pub lexicon_version: String,
    pub frequency: Histogram,
    pub theory: String,
    pub threshold: f64,
    pub verified: bool,
}

impl BiomarkerSpec {
    pub fn calibrate(
        pattern: Marker,
        corpus: &Corpus,
        lexicons: &LexiconSet,
        q: f64,
        theory: impl Into<String>,
    ) -> Result<Self> {
        let densities: Vec<f64> = corpus
            .utterances
            .iter()
            .map(|u| profile(&u.text, lexicons).density(pattern))
            .collect();
        let threshold = calibrate_threshold(&densities, q)?;
        let lex = lexicons.get(pattern);
        Ok(BiomarkerSpec {
            pattern,
            lexicon_version: format!("{}@{}", lex.name, lex.version),
            frequency: Histogram::unit(&densities, DEFAULT_BINS),
            theory: theory.into(),
            threshold,
            verified: false,
        })
    }
}

/// True iff the profile's density for the spec's pattern strictly exceeds
/// the threshold.
pub fn flag(profile: &BiomarkerProfile, spec: &BiomarkerSpec) -> bool {
    profile.density(spec.pattern) > spec.threshold
}
