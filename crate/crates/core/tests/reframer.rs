use asacd_core::biomarker::LexiconSet;
use asacd_core::reframer::{
    constraint_filter, detect_triggers, propose, propose_scored, ReframerConfig,
};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sentences built from subject, absolutist adverb, verb and object pools
/// so that each contains at least one trigger.
fn trigger_corpus(n: usize) -> Vec<String> {
    let subjects = [
        "They",
        "Those people",
        "Everyone",
        "Nobody",
        "Their council",
        "All of them",
        "Amina said they",
    ];
    let adverbs = ["always", "never", "", "every time they"];
    let verbs = [
        "ignore",
        "complain about",
        "block",
        "fix",
        "talk over",
        "forget",
    ];
    let objects = [
        "the park",
        "the bins",
        "us",
        "the new flats",
        "Mr Patel",
        "nothing",
        "the Friday market",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..n)
        .map(|_| {
            let adv = adverbs.choose(&mut rng).unwrap();
            let parts = [
                *subjects.choose(&mut rng).unwrap(),
                adv,
                verbs.choose(&mut rng).unwrap(),
                objects.choose(&mut rng).unwrap(),
            ];
            let s: Vec<&str> = parts.into_iter().filter(|p| !p.is_empty()).collect();
            format!("{}.", s.join(" "))
        })
        .collect()
}

#[test]
fn trigger_corpus_suggestions_improve_and_pass_filter() {
    let cfg = ReframerConfig::shipped();
    let lex = LexiconSet::default();
    let corpus = trigger_corpus(200);
    let mut emitted = 0;
    for text in &corpus {
        assert!(!detect_triggers(text, &lex).is_empty(), "{text}");
        let (orig, s) = propose_scored(text, &cfg);
        assert_eq!(s, propose(text, &cfg));
        for x in &s {
            assert!(x.score.total < orig.total, "{text} -> {}", x.text);
            assert!(constraint_filter(
                text,
                &x.text,
                &cfg.hedges,
                &cfg.invitations
            ));
            emitted += 1;
        }
    }
    assert!(emitted >= 200);
}

#[test]
fn trigger_free_sentences_emit_nothing() {
    let cfg = ReframerConfig::shipped();
    for text in [
        "We can do this together.",
        "The market opens at nine.",
        "Our volunteers cleaned the canal path.",
        "",
        "Can we talk about parking?",
    ] {
        assert!(propose(text, &cfg).is_empty(), "{text}");
    }
}
