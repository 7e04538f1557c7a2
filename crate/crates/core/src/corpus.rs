//! Utterance data model, ingestion, and inter-annotator agreement.
//!
//! Text is stored exactly as ingested; normalisation happens at tokenization
//! time. Malformed input rows never abort ingestion; they are collected as
//! [`Reject`]s with a line number and reason.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::records::{self, Reject};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
    Unlabeled,
}

impl Sentiment {
    pub const ALL: [Sentiment; 4] = [
        Sentiment::Negative,
        Sentiment::Neutral,
        Sentiment::Positive,
        Sentiment::Unlabeled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Negative => "negative",
            Sentiment::Neutral => "neutral",
            Sentiment::Positive => "positive",
            Sentiment::Unlabeled => "unlabeled",
        }
    }
}

impl std::fmt::Display for Sentiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub sentiment: Sentiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

impl Utterance {
    pub fn new(id: impl Into<String>, text: impl Into<String>, sentiment: Sentiment) -> Self {
        Utterance {
            id: id.into(),
            text: text.into(),
            sentiment,
            speaker: None,
            group: None,
            timestamp: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub source: String,
    pub schema_version: u32,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids.
    pub fn new(source: impl Into<String>, utterances: Vec<Utterance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for u in &utterances {
            if !seen.insert(u.id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate utterance id {:?}",
                    u.id
                )));
            }
        }
        Ok(Corpus {
            utterances,
            source: source.into(),
            schema_version: SCHEMA_VERSION,
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Partitions utterances by sentiment, preserving corpus order within
    /// each stratum. Only non-empty strata are present.
    pub fn stratify(&self) -> BTreeMap<Sentiment, Vec<&Utterance>> {
        let mut out: BTreeMap<Sentiment, Vec<&Utterance>> = BTreeMap::new();
        for u in &self.utterances {
            out.entry(u.sentiment).or_default().push(u);
        }
        out
    }
}

/// Result of an ingestion: the corpus plus quarantined rows.
#[derive(Debug)]
pub struct Ingested {
    pub corpus: Corpus,
    pub rejects: Vec<Reject>,
}

/// Maps delimited-file columns onto [`Utterance`] fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub text: String,
    pub sentiment: Option<String>,
    pub id: Option<String>,
    pub speaker: Option<String>,
    pub group: Option<String>,
    pub timestamp: Option<String>,
    /// Raw sentiment token (trimmed) to label; unmapped tokens become
    /// [`Sentiment::Unlabeled`].
    pub sentiment_values: BTreeMap<String, Sentiment>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        let sentiment_values = [
            ("0", Sentiment::Negative),
            ("1", Sentiment::Neutral),
            ("2", Sentiment::Positive),
            ("negative", Sentiment::Negative),
            ("neutral", Sentiment::Neutral),
            ("positive", Sentiment::Positive),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        ColumnMapping {
            text: "text".into(),
            sentiment: Some("sentiment".into()),
            id: None,
            speaker: None,
            group: None,
            timestamp: None,
            sentiment_values,
        }
    }
}

impl ColumnMapping {
    pub fn normalize_sentiment(&self, raw: &str) -> Sentiment {
        self.sentiment_values
            .get(raw.trim())
            .copied()
            .unwrap_or(Sentiment::Unlabeled)
    }
}

struct ColumnIndex {
    text: usize,
    sentiment: Option<usize>,
    id: Option<usize>,
    speaker: Option<usize>,
    group: Option<usize>,
    timestamp: Option<usize>,
}

fn locate(headers: &csv::ByteRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| String::from_utf8_lossy(h).trim() == name)
        .ok_or_else(|| Error::Config(format!("column {name:?} not found in header")))
}

fn locate_opt(headers: &csv::ByteRecord, name: &Option<String>) -> Result<Option<usize>> {
    name.as_deref().map(|n| locate(headers, n)).transpose()
}

pub fn ingest_delimited(path: &Path, mapping: &ColumnMapping) -> Result<Ingested> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_delimited_from(file, mapping, &path.display().to_string())
}

pub fn ingest_delimited_from(
    reader: impl Read,
    mapping: &ColumnMapping,
    source: &str,
) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.byte_headers()?.clone();
    let cols = ColumnIndex {
        text: locate(&headers, &mapping.text)?,
        sentiment: locate_opt(&headers, &mapping.sentiment)?,
        id: locate_opt(&headers, &mapping.id)?,
        speaker: locate_opt(&headers, &mapping.speaker)?,
        group: locate_opt(&headers, &mapping.group)?,
        timestamp: locate_opt(&headers, &mapping.timestamp)?,
    };

    let mut utterances = Vec::new();
    let mut rejects = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut record = csv::ByteRecord::new();
    let mut row = 0usize;
    loop {
        let line = rdr.position().line() as usize;
        match rdr.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(line);
                rejects.push(Reject {
                    line,
                    reason: e.to_string(),
                    raw: String::new(),
                });
                continue;
            }
        }
        row += 1;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(line);
        let raw = || {
            record
                .iter()
                .map(|f| String::from_utf8_lossy(f).into_owned())
                .collect::<Vec<_>>()
                .join(",")
        };
        if record.len() != headers.len() {
            rejects.push(Reject {
                line,
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
                raw: raw(),
            });
            continue;
        }
        match row_to_utterance(&record, &cols, mapping, row) {
            Ok(u) => {
                if seen_ids.insert(u.id.clone()) {
                    utterances.push(u);
                } else {
                    rejects.push(Reject {
                        line,
                        reason: format!("duplicate id {:?}", u.id),
                        raw: raw(),
                    });
                }
            }
            Err(reason) => rejects.push(Reject {
                line,
                reason,
                raw: raw(),
            }),
        }
    }
    Ok(Ingested {
        corpus: Corpus {
            utterances,
            source: source.to_string(),
            schema_version: SCHEMA_VERSION,
        },
        rejects,
    })
}

fn row_to_utterance(
    record: &csv::ByteRecord,
    cols: &ColumnIndex,
    mapping: &ColumnMapping,
    row: usize,
) -> Result<Utterance, String> {
    let field = |idx: usize| -> Result<String, String> {
        std::str::from_utf8(&record[idx])
            .map(str::to_owned)
            .map_err(|_| format!("field {} is not valid UTF-8", idx + 1))
    };
    let opt = |idx: Option<usize>| -> Result<Option<String>, String> {
        idx.map(field)
            .transpose()
            .map(|v| v.filter(|s| !s.trim().is_empty()))
    };
    let text = field(cols.text)?;
    let sentiment = match cols.sentiment {
        Some(idx) => mapping.normalize_sentiment(&field(idx)?),
        None => Sentiment::Unlabeled,
    };
    let id = opt(cols.id)?.unwrap_or_else(|| format!("row-{row}"));
    let timestamp = opt(cols.timestamp)?
        .map(|s| {
            s.trim()
                .parse::<i64>()
                .map_err(|_| format!("timestamp {s:?} is not an integer"))
        })
        .transpose()?;
    Ok(Utterance {
        id,
        text,
        sentiment,
        speaker: opt(cols.speaker)?,
        group: opt(cols.group)?,
        timestamp,
    })
}

#[derive(Serialize, Deserialize)]
struct CorpusMeta {
    source: String,
    schema_version: u32,
}

const META_PREFIX: &str = "corpus ";

/// Writes the corpus as one JSON utterance per line, preceded by a metadata
/// comment line so that [`ingest_records`] restores it exactly.
pub fn export_records(corpus: &Corpus, writer: impl Write, extra_header: &[String]) -> Result<()> {
    let meta = serde_json::to_string(&CorpusMeta {
        source: corpus.source.clone(),
        schema_version: corpus.schema_version,
    })?;
    let mut header = extra_header.to_vec();
    header.push(format!("{META_PREFIX}{meta}"));
    records::write_records(writer, &header, &corpus.utterances)
}

pub fn ingest_records(path: &Path) -> Result<Ingested> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_records_from(BufReader::new(file), &path.display().to_string())
}

pub fn ingest_records_from(reader: impl BufRead, default_source: &str) -> Result<Ingested> {
    let parsed = records::parse_lines::<Utterance>(reader)?;
    let mut source = default_source.to_string();
    let mut schema_version = SCHEMA_VERSION;
    for (line, comment) in &parsed.comments {
        if let Some(meta) = comment.strip_prefix(META_PREFIX) {
            let meta: CorpusMeta = serde_json::from_str(meta).map_err(|e| Error::Parse {
                line: *line,
                message: e.to_string(),
            })?;
            source = meta.source;
            schema_version = meta.schema_version;
        }
    }
    let mut rejects = parsed.rejects;
    let mut seen = HashSet::new();
    let mut utterances = Vec::with_capacity(parsed.records.len());
    for u in parsed.records {
        if seen.insert(u.id.clone()) {
            utterances.push(u);
        } else {
            rejects.push(Reject {
                line: 0,
                reason: format!("duplicate id {:?}", u.id),
                raw: serde_json::to_string(&u)?,
            });
        }
    }
    Ok(Ingested {
        corpus: Corpus {
            utterances,
            source,
            schema_version,
        },
        rejects,
    })
}

/// Per-item category counts from `raters_per_item` raters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    counts: Vec<Vec<u32>>,
    raters_per_item: u32,
}

impl AnnotationMatrix {
    pub fn new(counts: Vec<Vec<u32>>) -> Result<Self> {
        let first = counts
            .first()
            .ok_or_else(|| Error::InvalidInput("annotation matrix has no items".into()))?;
        let k = first.len();
        if k == 0 {
            return Err(Error::InvalidInput(
                "annotation matrix has no categories".into(),
            ));
        }
        let n: u32 = first.iter().sum();
        if n < 2 {
            return Err(Error::InvalidInput(
                "need at least two raters per item".into(),
            ));
        }
        for (i, row) in counts.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidInput(format!(
                    "item {i} has {} categories, expected {k}",
                    row.len()
                )));
            }
            let s: u32 = row.iter().sum();
            if s != n {
                return Err(Error::InvalidInput(format!(
                    "item {i} has {s} ratings, expected {n}"
                )));
            }
        }
        Ok(AnnotationMatrix {
            counts,
            raters_per_item: n,
        })
    }

    pub fn items(&self) -> usize {
        self.counts.len()
    }

    pub fn categories(&self) -> usize {
        self.counts[0].len()
    }

    pub fn raters_per_item(&self) -> u32 {
        self.raters_per_item
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }
}

/// Fleiss' kappa for a fixed number of raters per item.
pub fn fleiss_kappa(m: &AnnotationMatrix) -> Result<f64> {
    let n_items = m.items() as f64;
    let n = m.raters_per_item as f64;
    let mut category_totals = vec![0.0; m.categories()];
    let mut p_bar = 0.0;
    for row in &m.counts {
        let mut agree = 0.0;
        for (j, &c) in row.iter().enumerate() {
            let c = c as f64;
            category_totals[j] += c;
            agree += c * (c - 1.0);
        }
        p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= n_items;
    let p_e: f64 = category_totals
        .iter()
        .map(|t| {
            let p = t / (n_items * n);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(Error::UndefinedAgreement);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ingest_str(s: &str) -> Ingested {
        ingest_delimited_from(s.as_bytes(), &ColumnMapping::default(), "mem").unwrap()
    }

    #[test]
    fn three_row_file() {
        let ing = ingest_str("text,sentiment\nThey left.,0\n\"We stayed, happily.\",2\nok,1\n");
        assert!(ing.rejects.is_empty());
        let s: Vec<_> = ing.corpus.utterances.iter().map(|u| u.sentiment).collect();
        assert_eq!(
            s,
            vec![Sentiment::Negative, Sentiment::Positive, Sentiment::Neutral]
        );
        assert_eq!(ing.corpus.utterances[1].text, "We stayed, happily.");
        assert_eq!(ing.corpus.utterances[0].id, "row-1");
    }

    #[test]
    fn empty_data_section() {
        let ing = ingest_str("text,sentiment\n");
        assert!(ing.corpus.is_empty());
        assert!(ing.rejects.is_empty());
    }

    #[test]
    fn unmapped_sentiment_is_unlabeled() {
        let ing = ingest_str("text,sentiment\nhello,mixed\n");
        assert_eq!(ing.corpus.utterances[0].sentiment, Sentiment::Unlabeled);
    }

    #[test]
    fn missing_text_column_is_config_error() {
        let err = ingest_delimited_from(
            "body,sentiment\nx,0\n".as_bytes(),
            &ColumnMapping::default(),
            "mem",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn malformed_row_is_quarantined() {
        let ing = ingest_str("text,sentiment\na,0\nb,1,extra\nc,2\n");
        assert_eq!(ing.corpus.len(), 2);
        assert_eq!(ing.rejects.len(), 1);
        assert_eq!(ing.rejects[0].line, 3);
    }

    #[test]
    fn custom_mapping() {
        let mut mapping = ColumnMapping {
            text: "comment".into(),
            sentiment: Some("label".into()),
            id: Some("cid".into()),
            timestamp: Some("ts".into()),
            ..ColumnMapping::default()
        };
        mapping
            .sentiment_values
            .insert("neg".into(), Sentiment::Negative);
        let ing = ingest_delimited_from(
            "cid,comment,label,ts\nA,hi,neg,10\nB,yo,pos,x\n".as_bytes(),
            &mapping,
            "mem",
        )
        .unwrap();
        assert_eq!(ing.corpus.utterances.len(), 1);
        assert_eq!(ing.corpus.utterances[0].id, "A");
        assert_eq!(ing.corpus.utterances[0].timestamp, Some(10));
        assert_eq!(ing.rejects.len(), 1);
    }

    #[test]
    fn records_with_one_malformed_line() {
        let mut buf = String::new();
        for i in 0..10 {
            if i == 4 {
                buf.push_str("{\"id\": \"broken\"\n");
            } else {
                buf.push_str(&format!(
                    "{{\"id\":\"u{i}\",\"text\":\"t{i}\",\"sentiment\":\"neutral\"}}\n"
                ));
            }
        }
        let ing = ingest_records_from(buf.as_bytes(), "mem").unwrap();
        assert_eq!(ing.corpus.len(), 9);
        assert_eq!(ing.rejects.len(), 1);
        assert_eq!(ing.rejects[0].line, 5);
    }

    #[test]
    fn empty_record_file() {
        let ing = ingest_records_from(&b""[..], "mem").unwrap();
        assert!(ing.corpus.is_empty());
    }

    #[test]
    fn kappa_perfect_agreement() {
        let m = AnnotationMatrix::new(vec![vec![2, 0], vec![0, 2]]).unwrap();
        assert_eq!(fleiss_kappa(&m).unwrap(), 1.0);
        let m = AnnotationMatrix::new(vec![vec![0, 5, 0], vec![5, 0, 0], vec![0, 0, 5]]).unwrap();
        assert!((fleiss_kappa(&m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_single_category_is_undefined() {
        let m = AnnotationMatrix::new(vec![vec![3, 0], vec![3, 0]]).unwrap();
        assert!(matches!(fleiss_kappa(&m), Err(Error::UndefinedAgreement)));
    }

    #[test]
    fn kappa_rejects_ragged_rows() {
        assert!(AnnotationMatrix::new(vec![vec![2, 0], vec![1, 0]]).is_err());
        assert!(AnnotationMatrix::new(vec![vec![1, 0]]).is_err());
        assert!(AnnotationMatrix::new(vec![]).is_err());
    }

    fn sentiment() -> impl Strategy<Value = Sentiment> {
        prop::sample::select(Sentiment::ALL.to_vec())
    }

    fn utterance() -> impl Strategy<Value = (String, Sentiment, Option<String>, Option<i64>)> {
        (
            any::<String>(),
            sentiment(),
            proptest::option::of("[a-z]{1,6}"),
            proptest::option::of(any::<i64>()),
        )
    }

    proptest! {
        #[test]
        fn records_round_trip(items in prop::collection::vec(utterance(), 0..20), source in ".*") {
            let utterances = items
                .into_iter()
                .enumerate()
                .map(|(i, (text, s, speaker, ts))| Utterance {
                    id: format!("u{i}"),
                    text,
                    sentiment: s,
                    speaker,
                    group: None,
                    timestamp: ts,
                })
                .collect();
            let corpus = Corpus::new(source, utterances).unwrap();
            let mut buf = Vec::new();
            export_records(&corpus, &mut buf, &[]).unwrap();
            let back = ingest_records_from(&buf[..], "other").unwrap();
            prop_assert!(back.rejects.is_empty());
            prop_assert_eq!(back.corpus, corpus);
        }

        #[test]
        fn strata_partition_corpus(labels in prop::collection::vec(sentiment(), 0..50)) {
            let utterances = labels
                .iter()
                .enumerate()
                .map(|(i, s)| Utterance::new(format!("u{i}"), "x", *s))
                .collect();
            let corpus = Corpus::new("p", utterances).unwrap();
            let total: usize = corpus.stratify().values().map(Vec::len).sum();
            prop_assert_eq!(total, corpus.len());
        }

        #[test]
        fn kappa_permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(0u32..4, 3), 2..8),
            seed in any::<u64>(),
        ) {
            // Pad every row to the same rater count through the last category.
            let n = rows.iter().map(|r| r.iter().sum::<u32>()).max().unwrap().max(2);
            let rows: Vec<Vec<u32>> = rows
                .into_iter()
                .map(|mut r| {
                    let s: u32 = r.iter().sum();
                    r.push(n - s);
                    r
                })
                .collect();
            let m = AnnotationMatrix::new(rows.clone()).unwrap();
            let Ok(base) = fleiss_kappa(&m) else { return Ok(()); };

            let mut items = rows.clone();
            items.rotate_left((seed % rows.len() as u64) as usize);
            items.reverse();
            let k1 = fleiss_kappa(&AnnotationMatrix::new(items).unwrap()).unwrap();

            let cols: Vec<Vec<u32>> = rows
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.rotate_right(1 + (seed % 3) as usize);
                    r
                })
                .collect();
            let k2 = fleiss_kappa(&AnnotationMatrix::new(cols).unwrap()).unwrap();
            prop_assert!((base - k1).abs() < 1e-12);
            prop_assert!((base - k2).abs() < 1e-12);
        }
    }
}
