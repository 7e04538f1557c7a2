//! Shipped default data: lexicons, phrase banks, hedges and invitations.
//!
//! Everything here is also available as plain files under `data/` so that
//! studies can copy and edit them.

use crate::biomarker::{Lexicon, LexiconSet};
use crate::reframer::{HedgeMap, InvitationBank};
use crate::synth::{PhraseBankSet, Style};

pub const EXCLUSIVE_LEXICON: &str = include_str!("../data/lexicons/exclusive.lex");
pub const INCLUSIVE_LEXICON: &str = include_str!("../data/lexicons/inclusive.lex");
pub const GENERALISING_LEXICON: &str = include_str!("../data/lexicons/generalising.lex");
pub const HEDGES: &str = include_str!("../data/reframer/hedges.map");
pub const INVITATIONS: &str = include_str!("../data/reframer/invitations.txt");
pub const PAPER_DEMO_PRESET: &str = include_str!("../data/presets/paper-demo.toml");

pub const TOPICS: [&str; 8] = [
    "housing",
    "green_space",
    "safety",
    "schools",
    "transport",
    "local_services",
    "representation",
    "shared_events",
];

macro_rules! topic_files {
    ($($topic:literal),*) => {
        /// `(topic, nouns file, [inclusive, neutral, generalising, exclusive] bank files)`.
        pub const BANK_FILES: &[(&str, &str, [&str; 4])] = &[$(
            (
                $topic,
                include_str!(concat!("../data/banks/", $topic, "/nouns.txt")),
                [
                    include_str!(concat!("../data/banks/", $topic, "/inclusive.bank")),
                    include_str!(concat!("../data/banks/", $topic, "/neutral.bank")),
                    include_str!(concat!("../data/banks/", $topic, "/generalising.bank")),
                    include_str!(concat!("../data/banks/", $topic, "/exclusive.bank")),
                ],
            ),
        )*];
    };
}

topic_files!(
    "housing",
    "green_space",
    "safety",
    "schools",
    "transport",
    "local_services",
    "representation",
    "shared_events"
);

pub fn lexicons() -> LexiconSet {
    LexiconSet {
        exclusive: Lexicon::parse(EXCLUSIVE_LEXICON).expect("shipped exclusive lexicon"),
        generalising: Lexicon::parse(GENERALISING_LEXICON).expect("shipped generalising lexicon"),
        inclusive: Lexicon::parse(INCLUSIVE_LEXICON).expect("shipped inclusive lexicon"),
    }
}

pub fn phrase_banks() -> PhraseBankSet {
    let mut set = PhraseBankSet::default();
    for (topic, nouns, banks) in BANK_FILES {
        set.add_nouns_file(topic, nouns)
            .expect("shipped nouns file");
        for (style, src) in Style::ALL.iter().zip(banks) {
            set.add_bank_file(topic, *style, src)
                .expect("shipped bank file");
        }
    }
    set
}

pub fn hedges() -> HedgeMap {
    HedgeMap::parse(HEDGES).expect("shipped hedge map")
}

pub fn invitations() -> InvitationBank {
    InvitationBank::parse(INVITATIONS).expect("shipped invitation bank")
}
