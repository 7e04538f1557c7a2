use asacd_core::biomarker::LexiconSet;
use asacd_core::scorer::{l_development, AlignmentScore, AlignmentWeights, Scorer};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn all_components_bounded(text in "\\PC{0,80}") {
        let s = Scorer::shipped().score(&text);
        for v in [s.l_linguistic, s.l_development, s.l_cultural, s.total] {
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
    }

    #[test]
    fn zero_weight_invariance(
        c in prop::array::uniform3(0.0f64..=1.0),
        other in 0.0f64..=1.0,
        i in 0usize..3,
    ) {
        let mut w = [0.4, 0.5, 0.1];
        w[i] = 0.0;
        let w = AlignmentWeights::new(w[0], w[1], w[2]).unwrap();
        let mut c2 = c;
        c2[i] = other;
        prop_assert_eq!(AlignmentScore::combine(c, w).total, AlignmentScore::combine(c2, w).total);
    }

    #[test]
    fn inclusive_append_never_raises_development(
        text in "\\PC{0,60}",
        word in prop::sample::select(vec!["we", "us", "our", "ours", "ourselves", "let's", "We're"]),
    ) {
        let lex = LexiconSet::default();
        let longer = format!("{text} {word}");
        prop_assert!(l_development(&longer, &lex) <= l_development(&text, &lex));
    }
}
