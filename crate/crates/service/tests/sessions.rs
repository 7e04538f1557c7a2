use std::time::Instant;

use asacd_core::biomarker::profile;
use asacd_core::reframer::{detect_triggers, propose, ReframerConfig};
use asacd_service::manager::*;
use asacd_service::model::{EventBody, FeedbackAction, SessionStatus};
use asacd_service::{replay, ServiceError, SessionManager, Storage};

fn mem() -> SessionManager {
    SessionManager::new(Storage::Memory).unwrap()
}

fn join(m: &SessionManager, id: &str, name: &str) -> JoinResponse {
    m.join(
        id,
        JoinRequest {
            v: None,
            display_name: name.into(),
            group: None,
        },
    )
    .unwrap()
}

fn say(
    m: &SessionManager,
    id: &str,
    token: &str,
    text: &str,
) -> Result<TurnResponse, ServiceError> {
    m.post_turn(
        id,
        TurnRequest {
            v: None,
            token: token.into(),
            text: text.into(),
            client_key: None,
        },
    )
}

fn fb(
    m: &SessionManager,
    id: &str,
    token: &str,
    turn: u64,
    rank: usize,
    action: FeedbackAction,
) -> FeedbackResponse {
    m.record_feedback(
        id,
        FeedbackRequest {
            v: None,
            token: token.into(),
            turn_id: turn,
            rank,
            action,
        },
    )
    .unwrap()
}

#[test]
fn two_creates_give_distinct_ids() {
    let m = mem();
    let a = m.create_session(CreateSession::default()).unwrap();
    let b = m.create_session(CreateSession::default()).unwrap();
    assert_ne!(a.session_id, b.session_id);
    assert_eq!(m.session_ids().len(), 2);
}

#[test]
fn join_closed_session_conflicts() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    m.close(&id).unwrap();
    let err = m
        .join(
            &id,
            JoinRequest {
                v: None,
                display_name: "late".into(),
                group: None,
            },
        )
        .unwrap_err();
    assert!(matches!(err, ServiceError::Conflict(_)), "{err}");
    assert!(matches!(m.close(&id), Err(ServiceError::Conflict(_))));
}

#[test]
fn unknown_session_and_token() {
    let m = mem();
    assert!(matches!(m.summary("nope"), Err(ServiceError::NotFound(_))));
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    assert!(matches!(
        say(&m, &id, "forged", "hello"),
        Err(ServiceError::Forbidden(_))
    ));
}

#[test]
fn oversized_text_rejected_and_not_persisted() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    let p = join(&m, &id, "ana");
    let before = m.log_text(&id).unwrap();
    let err = say(&m, &id, &p.token, &"a".repeat(3000)).unwrap_err();
    assert!(matches!(err, ServiceError::Validation(_)), "{err}");
    assert!(matches!(
        say(&m, &id, &p.token, "   "),
        Err(ServiceError::Validation(_))
    ));
    assert_eq!(m.log_text(&id).unwrap(), before);
    assert!(m.snapshot(&id).unwrap().turns.is_empty());
}

#[test]
fn rejects_unknown_schema_version() {
    let m = mem();
    let err = m
        .create_session(CreateSession {
            v: Some(2),
            ..Default::default()
        })
        .unwrap_err();
    assert!(matches!(err, ServiceError::Validation(_)));
}

#[test]
fn turn_matches_direct_library_calls() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    let p = join(&m, &id, "ana");
    let cfg = ReframerConfig::shipped();
    for text in [
        "They never listen.",
        "You people always ignore us, and they never ask.",
        "Let's find a way forward together.",
        "",
    ] {
        if text.is_empty() {
            continue;
        }
        let r = say(&m, &id, &p.token, text).unwrap();
        assert_eq!(r.turn.profile, profile(text, &cfg.scorer.lexicons));
        assert_eq!(r.turn.triggers, detect_triggers(text, &cfg.scorer.lexicons));
        assert_eq!(r.turn.suggestions, propose(text, &cfg));
        // Serialized forms are identical too.
        assert_eq!(
            serde_json::to_string(&r.turn.suggestions).unwrap(),
            serde_json::to_string(&propose(text, &cfg)).unwrap()
        );
    }
}

#[test]
fn custom_weights_change_scoring_only() {
    let m = mem();
    let id = m
        .create_session(CreateSession {
            weights: Some([1.0, 0.0, 0.0]),
            ..Default::default()
        })
        .unwrap()
        .session_id;
    let p = join(&m, &id, "ana");
    let r = say(&m, &id, &p.token, "They never listen.").unwrap();
    let mut cfg = ReframerConfig::shipped();
    cfg.scorer.weights = asacd_core::scorer::AlignmentWeights::new(1.0, 0.0, 0.0).unwrap();
    assert_eq!(r.turn.suggestions, propose("They never listen.", &cfg));
    assert!(m
        .create_session(CreateSession {
            weights: Some([-1.0, 0.0, 0.0]),
            ..Default::default()
        })
        .is_err());
}

#[test]
fn feedback_counts_and_dedup() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    let people: Vec<JoinResponse> = (0..5).map(|i| join(&m, &id, &format!("p{i}"))).collect();
    let r = say(&m, &id, &people[0].token, "They never listen.").unwrap();
    assert!(!r.turn.suggestions.is_empty());
    let t = r.turn.turn_id;

    let first = fb(&m, &id, &people[0].token, t, 1, FeedbackAction::Used);
    assert!(!first.duplicate);
    let again = fb(&m, &id, &people[0].token, t, 1, FeedbackAction::Used);
    assert!(again.duplicate);
    for p in &people[..4] {
        fb(&m, &id, &p.token, t, 1, FeedbackAction::Rated(5));
    }
    fb(&m, &id, &people[4].token, t, 1, FeedbackAction::Rated(1));
    // A second rating by the same participant is a duplicate.
    assert!(fb(&m, &id, &people[4].token, t, 1, FeedbackAction::Rated(5)).duplicate);
    fb(&m, &id, &people[1].token, t, 1, FeedbackAction::Dismissed);

    let s = m.summary(&id).unwrap();
    assert_eq!(s.suggestions_used, 1);
    assert_eq!(s.suggestions_dismissed, 1);
    assert_eq!(s.ratings.count, 5);
    assert_eq!(s.ratings.helpful, 4);
    assert_eq!(s.ratings.helpful_share, Some(0.8));
    assert_eq!(s.suggestions_shown, r.turn.suggestions.len());

    let bad_rank = m.record_feedback(
        &id,
        FeedbackRequest {
            v: None,
            token: people[0].token.clone(),
            turn_id: t,
            rank: 99,
            action: FeedbackAction::Used,
        },
    );
    assert!(matches!(bad_rank, Err(ServiceError::NotFound(_))));
    let bad_rating = m.record_feedback(
        &id,
        FeedbackRequest {
            v: None,
            token: people[0].token.clone(),
            turn_id: t,
            rank: 1,
            action: FeedbackAction::Rated(6),
        },
    );
    assert!(matches!(bad_rating, Err(ServiceError::Validation(_))));
}

#[test]
fn empty_session_summary_is_zeroed() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    let s = m.summary(&id).unwrap();
    assert_eq!(s.turns, 0);
    assert_eq!(s.overall.tokens, 0);
    assert_eq!(s.overall.inclusive, 0.0);
    assert!(s.windows.is_empty() && s.trend.is_empty() && s.participants.is_empty());
    assert_eq!(s.ratings.helpful_share, None);
    assert_eq!(s.status, SessionStatus::Open);
}

#[test]
fn summary_matches_hand_aggregation() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    let a = join(&m, &id, "ana");
    let b = join(&m, &id, "ben");
    // (text, tokens, inclusive, exclusive, generalising), counted by hand.
    let turns: [(&str, u64, u64, u64, u64); 10] = [
        ("We can do this together.", 5, 1, 0, 0),
        ("They never listen to us.", 5, 1, 1, 1),
        ("Our plan works.", 3, 1, 0, 0),
        ("You people always complain.", 4, 0, 0, 1),
        ("Let's talk.", 2, 1, 0, 0),
        ("Those people left.", 3, 0, 2, 0),
        ("They always do that.", 4, 0, 1, 1),
        ("We should ask them.", 4, 1, 1, 0),
        ("Everyone is tired.", 3, 0, 0, 1),
        ("Us and our neighbours.", 4, 2, 0, 0),
    ];
    let mut expect = [[0u64; 4]; 2];
    for (i, (text, n, inc, exc, gen)) in turns.iter().enumerate() {
        let who = if i % 2 == 0 { &a } else { &b };
        let r = say(&m, &id, &who.token, text).unwrap();
        assert_eq!(r.turn.profile.token_count as u64, *n, "{text}");
        let e = &mut expect[i % 2];
        e[0] += n;
        e[1] += inc;
        e[2] += exc;
        e[3] += gen;
    }
    let s = m.summary(&id).unwrap();
    let total = [0, 1, 2, 3].map(|k| expect[0][k] + expect[1][k]);
    assert_eq!(s.turns, 10);
    assert_eq!(s.overall.tokens, total[0]);
    assert_eq!(s.overall.inclusive, total[1] as f64 / total[0] as f64);
    assert_eq!(s.overall.exclusive, total[2] as f64 / total[0] as f64);
    assert_eq!(s.overall.generalising, total[3] as f64 / total[0] as f64);
    for (p, e) in s.participants.iter().zip(expect) {
        assert_eq!(p.turns, 5);
        assert_eq!(p.densities.tokens, e[0]);
        assert_eq!(p.densities.inclusive, e[1] as f64 / e[0] as f64);
        assert_eq!(p.densities.exclusive, e[2] as f64 / e[0] as f64);
        assert_eq!(p.densities.generalising, e[3] as f64 / e[0] as f64);
    }
    assert_eq!(s.windows.len(), 1);
    assert_eq!(s.trend.len(), 10);
    assert_eq!(s.trend[9].densities, s.overall);
}

#[test]
fn directory_storage_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let storage = Storage::Dir {
        path: dir.path().to_path_buf(),
        sync: true,
    };
    let (id, before) = {
        let m = SessionManager::new(storage.clone()).unwrap();
        let id = m
            .create_session(CreateSession::default())
            .unwrap()
            .session_id;
        let p = join(&m, &id, "ana");
        say(&m, &id, &p.token, "They never listen.").unwrap();
        fb(&m, &id, &p.token, 1, 1, FeedbackAction::Rated(4));
        (id.clone(), m.snapshot(&id).unwrap())
    };
    let m = SessionManager::new(storage).unwrap();
    assert_eq!(m.snapshot(&id).unwrap(), before);
    let text = std::fs::read_to_string(dir.path().join(format!("{id}.events.jsonl"))).unwrap();
    assert_eq!(replay(&text).unwrap(), before);
    // Tokens survive a restart because only their hashes are logged.
    assert!(!text.contains("\"token\""));
}

#[test]
fn corrupt_line_names_its_sequence() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    let p = join(&m, &id, "ana");
    say(&m, &id, &p.token, "We can talk.").unwrap();
    let log = m.log_text(&id).unwrap();
    let mut lines: Vec<&str> = log.lines().collect();
    lines[2] = "{\"v\":1,\"seq\":3,\"kind\":\"turn\",";
    let err = replay(&lines.join("\n")).unwrap_err();
    match err {
        ServiceError::CorruptLog { seq, .. } => assert_eq!(seq, 3),
        other => panic!("unexpected {other}"),
    }
    assert!(err_text(&lines.join("\n")).contains("sequence 3"));

    let gap: Vec<&str> = log
        .lines()
        .enumerate()
        .filter(|(i, _)| *i != 1)
        .map(|(_, l)| l)
        .collect();
    assert!(matches!(
        replay(&gap.join("\n")),
        Err(ServiceError::CorruptLog { seq: 2, .. })
    ));
}

fn err_text(log: &str) -> String {
    replay(log).unwrap_err().to_string()
}

#[test]
fn replay_is_idempotent_over_reappended_events() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    let p = join(&m, &id, "ana");
    say(&m, &id, &p.token, "They never listen.").unwrap();
    let log = m.log_text(&id).unwrap();
    let last = log.lines().last().unwrap();
    let doubled = format!("{log}{last}\n\n");
    assert_eq!(replay(&doubled).unwrap(), m.snapshot(&id).unwrap());
}

#[test]
fn turn_events_carry_suggestion_delivery() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    let p = join(&m, &id, "ana");
    say(&m, &id, &p.token, "They never listen.").unwrap();
    let sub = m.subscribe(&id).unwrap();
    let kinds: Vec<&str> = sub.backlog.iter().map(|e| e.kind()).collect();
    assert_eq!(kinds, ["created", "joined", "turn", "suggestion_shown"]);
    let seqs: Vec<u64> = sub.backlog.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, [1, 2, 3, 4]);
    let redacted = view_for(&sub.backlog[2], Some("p9"), false);
    let EventBody::Turn { turn } = &redacted.body else {
        panic!("turn expected")
    };
    assert!(turn.suggestions.is_empty());
    assert_eq!(view_for(&sub.backlog[2], Some("p1"), false), sub.backlog[2]);
    assert_eq!(view_for(&sub.backlog[2], None, true), sub.backlog[2]);
}

#[test]
fn post_turn_p95_under_100ms() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    let p = join(&m, &id, "ana");
    let base = "They never listen to us and you people always decide without asking everyone. ";
    let mut text = String::new();
    while text.chars().count() < 500 {
        text.push_str(base);
    }
    let text: String = text.chars().take(500).collect();
    let mut times = Vec::new();
    for _ in 0..200 {
        let t0 = Instant::now();
        say(&m, &id, &p.token, &text).unwrap();
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let p95 = times[(times.len() * 95).div_ceil(100) - 1];
    println!("post_turn p95 = {p95:.3} ms");
    assert!(p95 < 100.0, "p95 {p95} ms");
}

#[test]
fn retried_turn_with_client_key_is_stored_once() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    let a = join(&m, &id, "ana");
    let b = join(&m, &id, "ben");
    let post = |token: &str, key: Option<&str>| {
        m.post_turn(
            &id,
            TurnRequest {
                v: None,
                token: token.into(),
                text: "They never listen.".into(),
                client_key: key.map(str::to_string),
            },
        )
        .unwrap()
    };
    let first = post(&a.token, Some("c1"));
    let log_len = m.log_text(&id).unwrap().len();
    let again = post(&a.token, Some("c1"));
    assert!(!first.duplicate && again.duplicate);
    assert_eq!((again.seq, &again.turn), (first.seq, &first.turn));
    assert_eq!(m.log_text(&id).unwrap().len(), log_len);
    // Keys are scoped per participant; no key never deduplicates.
    assert!(!post(&b.token, Some("c1")).duplicate);
    assert!(!post(&a.token, None).duplicate);
    assert_eq!(m.snapshot(&id).unwrap().turns.len(), 3);
    assert_eq!(
        replay(&m.log_text(&id).unwrap()).unwrap(),
        m.snapshot(&id).unwrap()
    );

    let long = "k".repeat(MAX_CLIENT_KEY_CHARS + 1);
    let err = m
        .post_turn(
            &id,
            TurnRequest {
                v: None,
                token: a.token.clone(),
                text: "hi".into(),
                client_key: Some(long),
            },
        )
        .unwrap_err();
    assert!(matches!(err, ServiceError::Validation(_)));
}

#[test]
fn inclusive_turn_gets_no_suggestions_and_summary_lists_participants() {
    let m = mem();
    let id = m
        .create_session(CreateSession::default())
        .unwrap()
        .session_id;
    let p = join(&m, &id, "ana");
    join(&m, &id, "ben");
    join(&m, &id, "cai");
    let r = say(&m, &id, &p.token, "We can do this together.").unwrap();
    assert!(r.turn.profile.inclusive_count >= 1);
    assert!(r.turn.suggestions.is_empty());
    let r = say(&m, &id, &p.token, "They never listen.").unwrap();
    assert_eq!(r.turn.triggers.len(), 2);
    assert!(!r.turn.suggestions.is_empty());
    assert_eq!(m.summary(&id).unwrap().participants.len(), 3);
}
