//! Trigger detection and ranked reframing suggestions.
//!
//! Suggestions are side outputs: the original text is never changed. A
//! candidate is emitted only if it passes the content-preservation filter
//! and strictly lowers the alignment loss of the original.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::biomarker::{parse_data_file, profile, raw_tokens, tokenize, LexiconSet, Marker};
use crate::scorer::{csv_field, AlignmentScore, Scorer};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HedgeMap {
    pairs: Vec<(String, String)>,
    #[serde(default)]
    pub version: String,
}

impl HedgeMap {
    /// Builds a map from single-token sources to hedged replacements.
    /// Replacements may not contain any source, so application is
    /// idempotent.
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (lhs, rhs) in &pairs {
            let l = tokenize(lhs);
            if l.len() != 1 || l[0].surface != *lhs {
                return Err(Error::InvalidInput(format!(
                    "hedge source must be one lowercase token, got {lhs:?}"
                )));
            }
            if tokenize(rhs).is_empty() {
                return Err(Error::InvalidInput(format!("empty hedge for {lhs:?}")));
            }
            if !seen.insert(lhs.clone()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate hedge source {lhs:?}"
                )));
            }
        }
        for (lhs, rhs) in &pairs {
            if let Some(t) = tokenize(rhs)
                .into_iter()
                .find(|t| pairs.iter().any(|(l, _)| *l == t.surface))
            {
                return Err(Error::InvalidInput(format!(
                    "cyclic hedge: {lhs:?} => {rhs:?} contains source {:?}",
                    t.surface
                )));
            }
        }
        Ok(HedgeMap {
            pairs,
            version: String::new(),
        })
    }

    /// Parses `absolute => hedged` lines under a data-file header.
    pub fn parse(src: &str) -> Result<Self> {
        let (header, body) = parse_data_file(src)?;
        let pairs = body
            .into_iter()
            .map(|(line, l)| {
                let (a, b) = l.split_once("=>").ok_or_else(|| Error::Parse {
                    line,
                    message: format!("expected `absolute => hedged`, found {l:?}"),
                })?;
                Ok((a.trim().to_lowercase(), b.trim().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut m = HedgeMap::new(pairs)?;
        m.version = header.version;
        Ok(m)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn get(&self, source: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(l, _)| l == source)
            .map(|(_, r)| r.as_str())
    }

    /// Sources that are not generalising-lexicon entries.
    pub fn check_sources(&self, lexicons: &LexiconSet) -> Vec<String> {
        self.pairs
            .iter()
            .filter(|(l, _)| !lexicons.generalising.contains_unigram(l))
            .map(|(l, _)| l.clone())
            .collect()
    }

    /// Replaces every source token, keeping the capitalisation of its first
    /// letter. Returns the new text and the number of substitutions.
    pub fn apply(&self, text: &str) -> (String, usize) {
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        let mut n = 0;
        for t in raw_tokens(text) {
            if let Some(rhs) = self.get(&t.surface) {
                out.push_str(&text[last..t.bytes.0]);
                let source = &text[t.bytes.0..t.bytes.1];
                if source.chars().next().is_some_and(char::is_uppercase) {
                    let mut cs = rhs.chars();
                    if let Some(c) = cs.next() {
                        out.extend(c.to_uppercase());
                        out.push_str(cs.as_str());
                    }
                } else {
                    out.push_str(rhs);
                }
                last = t.bytes.1;
                n += 1;
            }
        }
        out.push_str(&text[last..]);
        (out, n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvitationBank {
    templates: Vec<String>,
    #[serde(default)]
    pub version: String,
}

impl InvitationBank {
    /// Each template must carry at least one inclusive marker.
    pub fn new(templates: Vec<String>, lexicons: &LexiconSet) -> Result<Self> {
        if templates.is_empty() {
            return Err(Error::InvalidInput("invitation bank is empty".into()));
        }
        if let Some(t) = templates
            .iter()
            .find(|t| profile(t, lexicons).inclusive_count == 0)
        {
            return Err(Error::InvalidInput(format!(
                "invitation has no inclusive marker: {t:?}"
            )));
        }
        Ok(InvitationBank {
            templates,
            version: String::new(),
        })
    }

    pub fn parse(src: &str) -> Result<Self> {
        Self::parse_with(src, &LexiconSet::default())
    }

    pub fn parse_with(src: &str, lexicons: &LexiconSet) -> Result<Self> {
        let (header, body) = parse_data_file(src)?;
        let mut b = InvitationBank::new(body.into_iter().map(|(_, l)| l).collect(), lexicons)?;
        b.version = header.version;
        Ok(b)
    }

    pub fn templates(&self) -> &[String] {
        &self.templates
    }

    /// Template picked by a hash of the text.
    pub fn choose(&self, text: &str) -> &str {
        let digest = Sha256::digest(text.as_bytes());
        let h = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
        &self.templates[(h % self.templates.len() as u64) as usize]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub marker: Marker,
    pub surface: String,
    /// Character offsets in the original text.
    pub span: (usize, usize),
}

/// Exclusive and generalising matches in text order.
pub fn detect_triggers(text: &str, lexicons: &LexiconSet) -> Vec<Trigger> {
    let toks = raw_tokens(text);
    let mut out = Vec::new();
    for marker in [Marker::Exclusive, Marker::Generalising] {
        for (a, b) in lexicons.get(marker).matches(&toks) {
            out.push(Trigger {
                marker,
                surface: toks[a..b]
                    .iter()
                    .map(|t| t.surface.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
                span: (toks[a].chars.0, toks[b - 1].chars.1),
            });
        }
    }
    out.sort_by_key(|t| (t.span, t.marker));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionKind {
    Hedged,
    HedgedPlusInvitation,
    InvitationOnly,
}

impl SuggestionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SuggestionKind::Hedged => "hedged",
            SuggestionKind::HedgedPlusInvitation => "hedged_plus_invitation",
            SuggestionKind::InvitationOnly => "invitation_only",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub kind: SuggestionKind,
    pub text: String,
    pub score: AlignmentScore,
    pub rank: usize,
    /// Always true: suggestions are unrepaired drafts for a human to edit.
    pub draft: bool,
}

#[derive(Clone, Debug)]
pub struct ReframerConfig {
    pub hedges: HedgeMap,
    pub invitations: InvitationBank,
    pub scorer: Scorer,
}

impl ReframerConfig {
    pub fn shipped() -> Self {
        ReframerConfig {
            hedges: crate::defaults::hedges(),
            invitations: crate::defaults::invitations(),
            scorer: Scorer::shipped(),
        }
    }
}

fn append_sentence(text: &str, sentence: &str) -> String {
    let base = text.trim_end();
    if base.is_empty() {
        sentence.to_string()
    } else {
        format!("{base} {sentence}")
    }
}

pub fn propose(text: &str, cfg: &ReframerConfig) -> Vec<Suggestion> {
    propose_scored(text, cfg).1
}

/// The original's score alongside the ranked suggestions.
pub fn propose_scored(text: &str, cfg: &ReframerConfig) -> (AlignmentScore, Vec<Suggestion>) {
    let original = cfg.scorer.score(text);
    if detect_triggers(text, &cfg.scorer.lexicons).is_empty() {
        return (original, Vec::new());
    }
    let invitation = cfg.invitations.choose(text);
    let (hedged, n_subs) = cfg.hedges.apply(text);
    let mut candidates = Vec::new();
    if n_subs > 0 {
        candidates.push((SuggestionKind::Hedged, hedged.clone()));
        candidates.push((
            SuggestionKind::HedgedPlusInvitation,
            append_sentence(&hedged, invitation),
        ));
    }
    candidates.push((
        SuggestionKind::InvitationOnly,
        append_sentence(text, invitation),
    ));

    let mut out: Vec<Suggestion> = candidates
        .into_iter()
        .filter(|(_, c)| constraint_filter(text, c, &cfg.hedges, &cfg.invitations))
        .map(|(kind, c)| Suggestion {
            kind,
            score: cfg.scorer.score(&c),
            text: c,
            rank: 0,
            draft: true,
        })
        .filter(|s| s.score.total < original.total)
        .collect();
    out.sort_by(|a, b| {
        a.score
            .total
            .total_cmp(&b.score.total)
            .then(a.kind.cmp(&b.kind))
            .then(a.text.cmp(&b.text))
    });
    for (i, s) in out.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    (original, out)
}

struct CasedToken {
    lower: String,
    original: String,
    sentence_initial: bool,
}

fn cased_tokens(text: &str) -> Vec<CasedToken> {
    let mut out = Vec::new();
    let mut last = 0;
    for (i, t) in raw_tokens(text).into_iter().enumerate() {
        let gap = &text[last..t.bytes.0];
        out.push(CasedToken {
            sentence_initial: i == 0 || gap.contains(['.', '!', '?']),
            original: text[t.bytes.0..t.bytes.1].to_string(),
            lower: t.surface,
        });
        last = t.bytes.1;
    }
    out
}

fn align(
    orig: &[String],
    cand: &[String],
    hedges: &[(String, Vec<String>)],
    i: usize,
    j: usize,
    failed: &mut HashSet<(usize, usize)>,
) -> bool {
    if i == orig.len() {
        return j == cand.len();
    }
    if failed.contains(&(i, j)) {
        return false;
    }
    if j < cand.len() && orig[i] == cand[j] && align(orig, cand, hedges, i + 1, j + 1, failed) {
        return true;
    }
    for (lhs, rhs) in hedges {
        if *lhs == orig[i]
            && cand.len() >= j + rhs.len()
            && cand[j..j + rhs.len()] == rhs[..]
            && align(orig, cand, hedges, i + 1, j + rhs.len(), failed)
        {
            return true;
        }
    }
    failed.insert((i, j));
    false
}

/// Accepts a candidate iff capitalised non-initial tokens of the original
/// survive, the only replacements are hedge substitutions, and any
/// addition is one whole invitation appended at the end.
pub fn constraint_filter(
    original: &str,
    candidate: &str,
    hedges: &HedgeMap,
    invitations: &InvitationBank,
) -> bool {
    let orig = cased_tokens(original);
    let cand = cased_tokens(candidate);
    let cand_surface: HashSet<&str> = cand.iter().map(|t| t.original.as_str()).collect();
    let named_kept = orig
        .iter()
        .filter(|t| {
            !t.sentence_initial && t.original.chars().next().is_some_and(char::is_uppercase)
        })
        .all(|t| cand_surface.contains(t.original.as_str()));
    if !named_kept {
        return false;
    }
    let orig: Vec<String> = orig.into_iter().map(|t| t.lower).collect();
    let cand: Vec<String> = cand.into_iter().map(|t| t.lower).collect();
    let rules: Vec<(String, Vec<String>)> = hedges
        .pairs()
        .iter()
        .map(|(l, r)| {
            (
                l.clone(),
                tokenize(r).into_iter().map(|t| t.surface).collect(),
            )
        })
        .collect();
    let mut suffixes: Vec<Vec<String>> = vec![Vec::new()];
    suffixes.extend(
        invitations
            .templates()
            .iter()
            .map(|t| tokenize(t).into_iter().map(|t| t.surface).collect()),
    );
    suffixes.iter().any(|suffix| {
        cand.len() >= suffix.len()
            && cand[cand.len() - suffix.len()..] == suffix[..]
            && align(
                &orig,
                &cand[..cand.len() - suffix.len()],
                &rules,
                0,
                0,
                &mut HashSet::new(),
            )
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuggestionRecord {
    pub id: String,
    pub original: String,
    pub original_total: f64,
    pub kind: SuggestionKind,
    pub rank: usize,
    pub text: String,
    pub l_linguistic: f64,
    pub l_development: f64,
    pub l_cultural: f64,
    pub total: f64,
    pub draft: bool,
}

impl SuggestionRecord {
    pub fn new(id: &str, original: &str, original_score: &AlignmentScore, s: &Suggestion) -> Self {
        SuggestionRecord {
            id: id.to_string(),
            original: original.to_string(),
            original_total: original_score.total,
            kind: s.kind,
            rank: s.rank,
            text: s.text.clone(),
            l_linguistic: s.score.l_linguistic,
            l_development: s.score.l_development,
            l_cultural: s.score.l_cultural,
            total: s.score.total,
            draft: s.draft,
        }
    }
}

pub fn suggestions_csv(records: &[SuggestionRecord]) -> String {
    let mut out = String::from(
        "id,original,original_total,kind,rank,text,l_linguistic,l_development,l_cultural,total\n",
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{:.6},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            csv_field(&r.id),
            csv_field(&r.original),
            r.original_total,
            r.kind.as_str(),
            r.rank,
            csv_field(&r.text),
            r.l_linguistic,
            r.l_development,
            r.l_cultural,
            r.total
        );
    }
    out
}

/// Counts of suggestions by kind, for summaries.
pub fn kind_counts(records: &[SuggestionRecord]) -> BTreeMap<SuggestionKind, usize> {
    let mut m = BTreeMap::new();
    for r in records {
        *m.entry(r.kind).or_default() += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults;
    use proptest::prelude::*;

    #[test]
    fn trigger_examples() {
        let lex = LexiconSet::default();
        let t = detect_triggers("They never listen.", &lex);
        assert_eq!(t.len(), 2);
        assert_eq!(
            (t[0].marker, t[0].surface.as_str()),
            (Marker::Exclusive, "they")
        );
        assert_eq!(
            (t[1].marker, t[1].surface.as_str()),
            (Marker::Generalising, "never")
        );
        assert_eq!(t[1].span, (5, 10));
        assert!(detect_triggers("We can do this together.", &lex).is_empty());
        assert!(detect_triggers("", &lex).is_empty());
    }

    #[test]
    fn hedge_application() {
        let h = defaults::hedges();
        assert_eq!(
            h.apply("Everyone always complains.").0,
            "Many people often complains."
        );
        assert_eq!(h.apply("They never listen.").0, "They rarely listen.");
        let (once, n) = h.apply("Nobody ever says all of it, never.");
        assert_eq!(n, 3);
        assert_eq!(h.apply(&once), (once.clone(), 0));
        assert!(h.check_sources(&LexiconSet::default()).is_empty());
    }

    #[test]
    fn hedge_map_rejects_cycles() {
        let p = |a: &str, b: &str| (a.to_string(), b.to_string());
        assert!(HedgeMap::new(vec![p("always", "often"), p("often", "always")]).is_err());
        assert!(HedgeMap::new(vec![p("all", "most of all")]).is_err());
        assert!(HedgeMap::new(vec![p("two words", "x")]).is_err());
    }

    #[test]
    fn invitations_need_inclusive_marker() {
        let lex = LexiconSet::default();
        assert!(InvitationBank::new(vec!["How are you?".into()], &lex).is_err());
        let bank = defaults::invitations();
        assert_eq!(bank.templates().len(), 20);
        assert_eq!(bank.choose("abc"), bank.choose("abc"));
    }

    #[test]
    fn filter_examples() {
        let h = defaults::hedges();
        let inv = defaults::invitations();
        let o = "Amina says they never listen.";
        assert!(!constraint_filter(
            o,
            "She says they never listen.",
            &h,
            &inv
        ));
        assert!(constraint_filter(
            o,
            "Amina says they rarely listen.",
            &h,
            &inv
        ));
        let with_inv = format!("{o} {}", inv.templates()[3]);
        assert!(constraint_filter(o, &with_inv, &h, &inv));
        assert!(!constraint_filter(
            o,
            "Amina says we never listen.",
            &h,
            &inv
        ));
        assert!(!constraint_filter(
            o,
            "Amina says they never listen. Is that right?",
            &h,
            &inv
        ));
        assert!(!constraint_filter(o, "Amina says they listen.", &h, &inv));
        assert!(constraint_filter(o, o, &h, &inv));
    }

    #[test]
    fn propose_examples() {
        let cfg = ReframerConfig::shipped();
        let (orig, s) = propose_scored("They never listen.", &cfg);
        assert!(s
            .iter()
            .any(|x| x.kind == SuggestionKind::Hedged && x.text == "They rarely listen."));
        assert!(s
            .iter()
            .any(|x| x.kind == SuggestionKind::HedgedPlusInvitation
                && x.text.starts_with("They rarely listen. ")));
        for (i, x) in s.iter().enumerate() {
            assert!(x.score.total < orig.total);
            assert_eq!(x.rank, i + 1);
            assert!(x.draft);
        }
        assert!(propose("We can do this together.", &cfg).is_empty());
        let s = propose("Everyone always complains.", &cfg);
        if let Some(x) = s.iter().find(|x| x.kind == SuggestionKind::Hedged) {
            assert_eq!(x.text, "Many people often complains.");
            assert!(x.draft);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn suggestions_strictly_improve(
            words in prop::collection::vec(
                prop::sample::select(vec![
                    "they", "never", "always", "the", "park", "is", "closed", "them",
                    "everyone", "Amina", "we", "bus", "late", "all", "those", "people",
                ]),
                0..10,
            )
        ) {
            let cfg = ReframerConfig::shipped();
            let text = words.join(" ");
            let (orig, s) = propose_scored(&text, &cfg);
            let again = propose(&text, &cfg);
            prop_assert_eq!(&s, &again);
            for x in &s {
                prop_assert!(x.score.total < orig.total);
                prop_assert!(constraint_filter(&text, &x.text, &cfg.hedges, &cfg.invitations));
            }
            let (h, _) = cfg.hedges.apply(&text);
            prop_assert_eq!(cfg.hedges.apply(&h).0, h);
        }
    }
}
