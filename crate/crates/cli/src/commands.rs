//! Subcommand implementations.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use asacd_core::association::{cross_validate, featurize, pmi_csv, pmi_table};
use asacd_core::biomarker::{fmt_num, prevalence, profile, BiomarkerSpec, LexiconSet, Marker};
use asacd_core::corpus::{
    export_records, ingest_delimited, ingest_records, ColumnMapping, Corpus, Ingested,
};
use asacd_core::defaults;
use asacd_core::reframer::{
    detect_triggers, kind_counts, propose_scored, suggestions_csv, ReframerConfig, SuggestionRecord,
};
use asacd_core::scorer::{
    scores_csv, train_assets, AlignmentWeights, BigramModel, CulturalReference, Scorer,
};
use asacd_core::simlab::{self, Arm, TrialConfig, TrialReport};
use asacd_core::synth::{self, PhraseBankSet, StyleDistribution, StyleSampling, SynthConfig};
use serde::Serialize;

use crate::artifacts::{header_field, split_header, OutDir, Provenance, HEADER_PREFIX};
use crate::config::{self, Env, FileConfig};
use crate::{Cli, CliError, Command, InputArgs};

/// Scenario targets used by `simulate --calibrate`: percent uplift of the
/// inclusive marker in each arm.
pub const TARGET_UPLIFT_INTERVENTION: f64 = 42.0;
pub const TARGET_UPLIFT_CONTROL: f64 = 6.0;

pub const BIGRAM_FILE: &str = "bigram_model.jsonl";
pub const REFERENCE_FILE: &str = "cultural_reference.jsonl";

pub fn dispatch(cli: Cli, env: Env, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = config::load(cli.config.as_deref(), env)?;
    let seed = config::resolve_seed(cli.seed, env, &file)?;
    let ctx = Ctx { file, seed };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, &a, stdout),
        Command::Analyze(a) => analyze(&ctx, &a.input, stdout),
        Command::Mine(a) => mine(&ctx, &a, stdout),
        Command::Calibrate(a) => calibrate(&ctx, &a, stdout),
        Command::Synth(a) => synth_cmd(&ctx, &a, stdout),
        Command::TrainScorer(a) => train_scorer(&ctx, &a, stdout),
        Command::Score(a) => score(&ctx, &a, stdout),
        Command::Reframe(a) => reframe(&ctx, &a, stdout),
        Command::Simulate(a) => simulate(&ctx, &a, stdout),
        Command::Serve(a) => serve(&ctx, &a, stdout),
        Command::Report(a) => report(&a, stdout),
    }
}

struct Ctx {
    file: FileConfig,
    seed: u64,
}

fn say(stdout: &mut dyn Write, msg: impl std::fmt::Display) {
    let _ = writeln!(stdout, "{msg}");
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::validation(
            "input",
            format!("{}: no such file", path.display()),
        ))
    }
}

fn mapping(ctx: &Ctx, a: &InputArgs) -> ColumnMapping {
    let s = &ctx.file.ingest;
    let mut m = ColumnMapping {
        text: a
            .text_column
            .clone()
            .unwrap_or_else(|| s.text_column.clone()),
        sentiment: a
            .sentiment_column
            .clone()
            .or_else(|| s.sentiment_column.clone()),
        id: a.id_column.clone().or_else(|| s.id_column.clone()),
        speaker: s.speaker_column.clone(),
        group: s.group_column.clone(),
        timestamp: s.timestamp_column.clone(),
        ..ColumnMapping::default()
    };
    m.sentiment_values
        .extend(s.sentiment_values.iter().map(|(k, v)| (k.clone(), *v)));
    m
}

fn lexicons(ctx: &Ctx, flag: Option<&Path>) -> Result<(LexiconSet, Option<PathBuf>), CliError> {
    match flag
        .map(Path::to_path_buf)
        .or_else(|| ctx.file.lexicons.clone())
    {
        Some(dir) => Ok((LexiconSet::load_dir(&dir)?, Some(dir))),
        None => Ok((LexiconSet::default(), None)),
    }
}

fn is_records(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("ndjson")
    )
}

fn load_corpus(path: &Path, mapping: &ColumnMapping) -> Result<Ingested, CliError> {
    require_file(path)?;
    let ingested = if is_records(path) {
        ingest_records(path)?
    } else {
        ingest_delimited(path, mapping)?
    };
    Ok(ingested)
}

/// `(id, text)` pairs from a corpus file or a plain text file.
fn load_texts(path: &Path, text_column: Option<&str>) -> Result<Vec<(String, String)>, CliError> {
    require_file(path)?;
    if matches!(path.extension().and_then(|e| e.to_str()), Some("txt")) {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation("input", format!("{}: {e}", path.display())))?;
        return Ok(src
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|(i, l)| (format!("line{}", i + 1), l.trim().to_string()))
            .collect());
    }
    let mut m = ColumnMapping::default();
    if let Some(c) = text_column {
        m.text = c.to_string();
    }
    let ing = load_corpus(path, &m)?;
    Ok(ing
        .corpus
        .utterances
        .into_iter()
        .map(|u| (u.id, u.text))
        .collect())
}

#[derive(Serialize)]
struct InputSettings<'a> {
    input: &'a Path,
    mapping: &'a ColumnMapping,
    lexicons: Option<&'a Path>,
    lexicons_version: String,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_rejects(out: &mut OutDir, ing: &Ingested) -> Result<(), CliError> {
    out.write_records("rejects.jsonl", &ing.rejects)?;
    Ok(())
}

fn corpus_summary(corpus: &Corpus, rejects: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "source: {}", corpus.source);
    let _ = writeln!(s, "utterances: {}", corpus.len());
    for (sentiment, rows) in corpus.stratify() {
        let _ = writeln!(s, "  {}: {}", sentiment.as_str(), rows.len());
    }
    let _ = writeln!(s, "rejected rows: {rejects}");
    s
}

fn ingest(ctx: &Ctx, a: &InputArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let m = mapping(ctx, a);
    let ing = load_corpus(&a.input, &m)?;
    let prov = Provenance::new(
        "ingest",
        ctx.seed,
        serde_json::json!({ "input": a.input, "mapping": m }),
    )
    .input(&a.input)?;
    let mut out = OutDir::create(&a.out, prov)?;
    let mut buf = Vec::new();
    export_records(&ing.corpus, &mut buf, &out.provenance().header_lines())?;
    out.write_raw("corpus.jsonl", &buf)?;
    write_rejects(&mut out, &ing)?;
    out.write(
        "ingest_summary.txt",
        &corpus_summary(&ing.corpus, ing.rejects.len()),
    )?;
    say(
        stdout,
        format!(
            "ingested {} utterances ({} rejected) into {}",
            ing.corpus.len(),
            ing.rejects.len(),
            a.out.display()
        ),
    );
    Ok(())
}

pub fn profiles_csv(corpus: &Corpus, lex: &LexiconSet) -> String {
    let mut s =
        String::from("id,sentiment,tokens,exclusive,generalising,inclusive,inclusive_absent\n");
    for u in &corpus.utterances {
        let p = profile(&u.text, lex);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            csv_field(&u.id),
            u.sentiment.as_str(),
            p.token_count,
            p.exclusive_count,
            p.generalising_count,
            p.inclusive_count,
            u8::from(p.inclusive_absent)
        );
    }
    s
}

fn analyze(ctx: &Ctx, a: &InputArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let m = mapping(ctx, a);
    let (lex, lex_dir) = lexicons(ctx, a.lexicons.as_deref())?;
    let ing = load_corpus(&a.input, &m)?;
    let prov = Provenance::new(
        "analyze",
        ctx.seed,
        InputSettings {
            input: &a.input,
            mapping: &m,
            lexicons: lex_dir.as_deref(),
            lexicons_version: lex.version_tag(),
        },
    )
    .input(&a.input)?;
    let report = prevalence(&ing.corpus, &lex);
    let mut out = OutDir::create(&a.out, prov)?;
    out.write("profiles.csv", &profiles_csv(&ing.corpus, &lex))?;
    out.write("prevalence.csv", &report.table_csv())?;
    out.write("prevalence_long.csv", &report.long_csv())?;
    write_rejects(&mut out, &ing)?;
    let mut summary = corpus_summary(&ing.corpus, ing.rejects.len());
    let _ = writeln!(summary, "lexicons: {}", lex.version_tag());
    let o = &report.overall;
    let _ = writeln!(
        summary,
        "mean exclusive pronouns per comment: {}",
        fmt_num(o.mean_exclusive)
    );
    let _ = writeln!(
        summary,
        "mean generalising terms per comment: {}",
        fmt_num(o.mean_generalising)
    );
    let _ = writeln!(
        summary,
        "comments without inclusive references: {}%",
        fmt_num(o.pct_inclusive_absent)
    );
    out.write("analyze_summary.txt", &summary)?;
    say(
        stdout,
        format!(
            "analyzed {} utterances into {}",
            ing.corpus.len(),
            a.out.display()
        ),
    );
    Ok(())
}

#[derive(Serialize)]
struct NamedWeight<'a> {
    feature: &'a str,
    weight: f64,
}

fn mine(ctx: &Ctx, a: &crate::MineArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let m = mapping(ctx, &a.input);
    let (lex, lex_dir) = lexicons(ctx, a.input.lexicons.as_deref())?;
    let ing = load_corpus(&a.input.input, &m)?;
    let mut section = ctx.file.mine.clone();
    if let Some(f) = a.folds {
        section.folds = f;
    }
    if let Some(k) = a.smoothing_k {
        section.smoothing_k = k;
    }
    let prov = Provenance::new(
        "mine",
        ctx.seed,
        serde_json::json!({
            "input": InputSettings { input: &a.input.input, mapping: &m, lexicons: lex_dir.as_deref(), lexicons_version: lex.version_tag() },
            "mine": section,
        }),
    )
    .input(&a.input.input)?;
    let rows = pmi_table(&ing.corpus, &lex, section.smoothing_k)?;
    let data = featurize(&ing.corpus, &lex)?;
    let report = cross_validate(
        &data.x,
        &data.y,
        &data.feature_names,
        section.folds,
        ctx.seed,
        &section.params(),
    )?;
    let mut out = OutDir::create(&a.input.out, prov)?;
    out.write("pmi.csv", &pmi_csv(&rows, section.smoothing_k))?;
    out.write("validation_folds.csv", &report.folds_csv())?;
    let mut summary = report.summary();
    let _ = writeln!(summary, "labelled rows: {}", data.y.len());
    let _ = writeln!(
        summary,
        "unlabelled rows dropped: {}",
        data.dropped_unlabeled
    );
    out.write("validation_summary.txt", &summary)?;
    let weights: Vec<NamedWeight> = report
        .feature_weights
        .iter()
        .map(|(f, w)| NamedWeight {
            feature: f,
            weight: *w,
        })
        .collect();
    out.write_records("model_weights.jsonl", &weights)?;
    say(
        stdout,
        format!(
            "mean AUC {} over {} folds",
            fmt_num(report.mean_auc),
            report.folds
        ),
    );
    Ok(())
}

fn theory(marker: Marker) -> &'static str {
    match marker {
        Marker::Exclusive => "out-group distancing through third-person-plural reference",
        Marker::Generalising => "overgeneralisation through absolutist quantifiers",
        Marker::Inclusive => "shared identity through first-person-plural reference",
    }
}

fn calibrate(ctx: &Ctx, a: &crate::CalibrateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let m = mapping(ctx, &a.input);
    let (lex, lex_dir) = lexicons(ctx, a.input.lexicons.as_deref())?;
    let ing = load_corpus(&a.input.input, &m)?;
    let q = a.percentile.unwrap_or(ctx.file.calibrate.percentile);
    let prov = Provenance::new(
        "calibrate",
        ctx.seed,
        serde_json::json!({
            "input": InputSettings { input: &a.input.input, mapping: &m, lexicons: lex_dir.as_deref(), lexicons_version: lex.version_tag() },
            "percentile": q,
        }),
    )
    .input(&a.input.input)?;
    let specs = Marker::ALL
        .iter()
        .map(|&mk| BiomarkerSpec::calibrate(mk, &ing.corpus, &lex, q, theory(mk)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = String::from("marker,lexicon_version,percentile,threshold,n_above\n");
    let mut long = String::from("marker,bin_lo,bin_hi,count\n");
    for spec in &specs {
        let above = ing
            .corpus
            .utterances
            .iter()
            .filter(|u| asacd_core::biomarker::flag(&profile(&u.text, &lex), spec))
            .count();
        let _ = writeln!(
            table,
            "{},{},{},{},{above}",
            spec.pattern.as_str(),
            spec.lexicon_version,
            fmt_num(q),
            fmt_num(spec.threshold)
        );
        let h = &spec.frequency;
        for (i, c) in h.counts.iter().enumerate() {
            let _ = writeln!(
                long,
                "{},{},{},{c}",
                spec.pattern.as_str(),
                fmt_num(h.edges[i]),
                fmt_num(h.edges[i + 1])
            );
        }
    }
    let mut out = OutDir::create(&a.input.out, prov)?;
    out.write("thresholds.csv", &table)?;
    out.write("frequency_long.csv", &long)?;
    out.write_records("biomarkers.jsonl", &specs)?;
    say(
        stdout,
        format!("calibrated {} markers at percentile {q}", specs.len()),
    );
    Ok(())
}

fn phrase_banks(dir: Option<&Path>) -> Result<(PhraseBankSet, String), CliError> {
    match dir {
        Some(d) => Ok((PhraseBankSet::load_dir(d)?, d.display().to_string())),
        None => Ok((defaults::phrase_banks(), "shipped".into())),
    }
}

fn synth_cmd(ctx: &Ctx, a: &crate::SynthArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let s = &ctx.file.synth;
    let dialogues = a.dialogues.unwrap_or(s.dialogues);
    let dist = match a.dist.as_ref().or(s.dist.as_ref()) {
        Some(d) => StyleDistribution::parse(d)?,
        None => StyleDistribution::default(),
    };
    let sampling = match a.sampling.as_deref().unwrap_or(&s.sampling) {
        "blocked" => StyleSampling::default(),
        "independent" => StyleSampling::Independent,
        other => {
            return Err(CliError::validation(
                "config",
                format!("unknown sampling {other:?}; expected blocked or independent"),
            ))
        }
    };
    let (banks, banks_src) = phrase_banks(a.banks.as_deref().or(s.banks.as_deref()))?;
    let cfg = SynthConfig {
        dialogues,
        dist,
        sampling,
        seed: ctx.seed,
    };
    let prov = Provenance::new(
        "synth",
        ctx.seed,
        serde_json::json!({ "synth": cfg, "banks": banks_src, "banks_version": banks.version_tag() }),
    );
    let t0 = Instant::now();
    let generated = synth::generate_with(&cfg, &banks)?;
    let elapsed = t0.elapsed();
    let counts = synth::style_counts(&generated);
    let mut out = OutDir::create(&a.out, prov)?;
    out.write_records("dialogues.jsonl", &generated)?;
    out.write(
        "style_table.csv",
        &synth::style_table_csv(&generated, &cfg.dist),
    )?;
    let mut summary = String::new();
    let _ = writeln!(summary, "dialogues: {}", generated.len());
    let _ = writeln!(summary, "turns: {}", counts.iter().sum::<usize>());
    let _ = writeln!(summary, "phrase banks: {}", banks.version_tag());
    let _ = writeln!(
        summary,
        "chi-square goodness of fit p: {}",
        fmt_num(synth::style_gof_p(counts, &cfg.dist))
    );
    out.write("synth_summary.txt", &summary)?;
    say(
        stdout,
        format!("generated {} dialogues in {:.2?}", generated.len(), elapsed),
    );
    Ok(())
}

fn train_scorer(
    ctx: &Ctx,
    a: &crate::TrainScorerArgs,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let alpha = a.alpha.unwrap_or(ctx.file.scorer.alpha);
    let (texts, source) = match &a.input {
        Some(p) => {
            let texts: Vec<String> = load_texts(p, None)?.into_iter().map(|(_, t)| t).collect();
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            (texts, format!("file:{name}"))
        }
        None => (
            asacd_core::scorer::default_training_texts(),
            "synth:seed=0;n=1000;styles=inclusive+neutral".to_string(),
        ),
    };
    let mut prov = Provenance::new(
        "train-scorer",
        ctx.seed,
        serde_json::json!({ "input": a.input, "alpha": alpha, "source": source }),
    );
    if let Some(p) = &a.input {
        prov = prov.input(p)?;
    }
    let (model, reference) = train_assets(&texts, alpha, &source)?;
    let mut out = OutDir::create(&a.out, prov)?;
    let mut buf = out.provenance().header().into_bytes();
    model.write(&mut buf)?;
    out.write_raw(BIGRAM_FILE, &buf)?;
    let mut buf = out.provenance().header().into_bytes();
    reference.write(&mut buf)?;
    out.write_raw(REFERENCE_FILE, &buf)?;
    say(
        stdout,
        format!(
            "trained on {} texts; vocabulary {}",
            texts.len(),
            model.vocabulary().len()
        ),
    );
    Ok(())
}

fn read_asset<T>(
    dir: &Path,
    name: &str,
    read: impl Fn(std::io::BufReader<std::fs::File>) -> asacd_core::Result<T>,
) -> Result<T, CliError> {
    let p = dir.join(name);
    require_file(&p)?;
    let f = std::fs::File::open(&p)
        .map_err(|e| CliError::validation("input", format!("{}: {e}", p.display())))?;
    Ok(read(std::io::BufReader::new(f))?)
}

fn build_scorer(ctx: &Ctx, a: &crate::ScoreArgs) -> Result<(Scorer, serde_json::Value), CliError> {
    let s = &ctx.file.scorer;
    let weights = match &a.weights {
        Some(w) => AlignmentWeights::parse(w)?,
        None => AlignmentWeights::new(s.weights[0], s.weights[1], s.weights[2])?,
    };
    let (lex, lex_dir) = lexicons(ctx, a.lexicons.as_deref())?;
    let mut scorer = Scorer::shipped();
    scorer.weights = weights;
    scorer.lexicons = lex;
    let assets = a.assets.clone().or_else(|| s.assets.clone());
    if let Some(dir) = &assets {
        scorer.model = read_asset(dir, BIGRAM_FILE, BigramModel::read)?;
        scorer.reference = read_asset(dir, REFERENCE_FILE, CulturalReference::read)?;
    }
    let settings = serde_json::json!({
        "weights": weights,
        "assets": assets,
        "reference_source": scorer.reference.source,
        "lexicons": lex_dir,
        "lexicons_version": scorer.lexicons.version_tag(),
        "text_column": a.text_column,
    });
    Ok((scorer, settings))
}

fn score(ctx: &Ctx, a: &crate::ScoreArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (scorer, settings) = build_scorer(ctx, a)?;
    let texts = load_texts(&a.input, a.text_column.as_deref())?;
    let prov = Provenance::new(
        "score",
        ctx.seed,
        serde_json::json!({ "input": a.input, "scorer": settings }),
    )
    .input(&a.input)?;
    let scores: Vec<_> = texts.iter().map(|(_, t)| scorer.score(t)).collect();
    let mut out = OutDir::create(&a.out, prov)?;
    out.write(
        "scores.csv",
        &scores_csv(texts.iter().map(|(id, _)| id.as_str()).zip(&scores)),
    )?;
    say(stdout, format!("scored {} texts", texts.len()));
    Ok(())
}

fn reframe(ctx: &Ctx, a: &crate::ScoreArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (scorer, settings) = build_scorer(ctx, a)?;
    let base = ReframerConfig::shipped();
    let cfg = ReframerConfig {
        hedges: base.hedges,
        invitations: base.invitations,
        scorer,
    };
    let texts = load_texts(&a.input, a.text_column.as_deref())?;
    let prov = Provenance::new(
        "reframe",
        ctx.seed,
        serde_json::json!({
            "input": a.input,
            "scorer": settings,
            "hedges_version": cfg.hedges.version,
            "invitations_version": cfg.invitations.version,
        }),
    )
    .input(&a.input)?;
    let mut records = Vec::new();
    let mut triggered = 0;
    for (id, text) in &texts {
        if !detect_triggers(text, &cfg.scorer.lexicons).is_empty() {
            triggered += 1;
        }
        let (original, suggestions) = propose_scored(text, &cfg);
        records.extend(
            suggestions
                .iter()
                .map(|s| SuggestionRecord::new(id, text, &original, s)),
        );
    }
    let mut out = OutDir::create(&a.out, prov)?;
    out.write("suggestions.csv", &suggestions_csv(&records))?;
    out.write_records("suggestions.jsonl", &records)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "texts: {}", texts.len());
    let _ = writeln!(summary, "texts with triggers: {triggered}");
    let _ = writeln!(summary, "suggestions: {}", records.len());
    for (kind, n) in kind_counts(&records) {
        let _ = writeln!(summary, "  {}: {n}", kind.as_str());
    }
    let _ = writeln!(
        summary,
        "all suggestions are drafts for a person to edit; none is applied automatically"
    );
    out.write("reframe_summary.txt", &summary)?;
    say(
        stdout,
        format!("{} suggestions for {} texts", records.len(), texts.len()),
    );
    Ok(())
}

fn arm_name(arm: Arm) -> &'static str {
    match arm {
        Arm::Control => "control",
        Arm::Intervention => "intervention",
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| CliError::validation("config", format!("bad {what} {x:?}")))
        })
        .collect()
}

fn trial_config(
    ctx: &Ctx,
    a: &crate::SimulateArgs,
) -> Result<(TrialConfig, serde_json::Value), CliError> {
    let s = &ctx.file.simulate;
    let file = a.trial_config.clone().or_else(|| s.trial_config.clone());
    let (mut cfg, origin) = match (&file, &a.preset) {
        (Some(_), Some(_)) => {
            return Err(CliError::validation(
                "config",
                "give either --preset or --trial-config",
            ))
        }
        (Some(p), None) => {
            require_file(p)?;
            let src = std::fs::read_to_string(p)
                .map_err(|e| CliError::validation("input", format!("{}: {e}", p.display())))?;
            (
                TrialConfig::from_toml(&src)?,
                serde_json::json!({ "trial_config": p }),
            )
        }
        (None, preset) => {
            let name = preset.clone().unwrap_or_else(|| s.preset.clone());
            (
                TrialConfig::preset(&name)?,
                serde_json::json!({ "preset": name }),
            )
        }
    };
    cfg.seed = ctx.seed;
    cfg.validate()?;
    Ok((cfg, origin))
}

fn per_seed_csv(reports: &[TrialReport]) -> String {
    let mut s = String::from(
        "seed,uplift_intervention,uplift_control,contrast,d_marker,d_marker_t2,d_willingness,d_sndi,beta3,se_beta3,p_interaction\n",
    );
    for r in reports {
        let st = &r.stats;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            fmt_num(st.arm(Arm::Intervention).pct_change_t1),
            fmt_num(st.arm(Arm::Control).pct_change_t1),
            fmt_num(st.uplift_contrast()),
            fmt_num(st.d_marker),
            fmt_num(st.d_marker_t2),
            fmt_num(st.d_willingness),
            fmt_num(st.d_sndi),
            fmt_num(st.interaction.beta[3]),
            fmt_num(st.interaction.se[3]),
            fmt_num(st.interaction.p_interaction()),
        );
    }
    s
}

fn arm_long_csv(reports: &[TrialReport]) -> String {
    let mut s = String::from("seed,arm,time,marker_mean,willingness_mean,sndi_mean\n");
    for r in reports {
        for a in &r.stats.arms {
            for (t, time) in simlab::TIMES.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{time},{},{},{}",
                    r.seed,
                    arm_name(a.arm),
                    fmt_num(a.marker_mean[t]),
                    fmt_num(a.willingness_mean[t]),
                    fmt_num(a.sndi_mean[t])
                );
            }
        }
    }
    s
}

fn agents_csv(reports: &[TrialReport]) -> String {
    let mut s = String::new();
    for (i, r) in reports.iter().enumerate() {
        let csv = r.agents_csv();
        let body = if i == 0 {
            csv.as_str()
        } else {
            csv.split_once('\n').map_or("", |(_, b)| b)
        };
        s.push_str(body);
    }
    s
}

const SIM_DISCLAIMER: &str =
    "simulated scenario: an estimator test-bench, not evidence about real communities";

fn simulate(ctx: &Ctx, a: &crate::SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let s = &ctx.file.simulate;
    let (cfg, origin) = trial_config(ctx, a)?;
    let seeds = a.seeds.unwrap_or(s.seeds);
    if seeds == 0 {
        return Err(CliError::validation("config", "need at least one seed"));
    }
    let doses: Vec<usize> = match &a.doses {
        Some(d) => parse_list(d, "dose")?,
        None => s.doses.clone(),
    };
    let dose_seeds = a.dose_seeds.unwrap_or(s.dose_seeds);
    let banks = defaults::phrase_banks();
    let mode = if a.calibrate {
        "calibrate"
    } else if !doses.is_empty() {
        "dose_response"
    } else {
        "ensemble"
    };
    let mut prov = Provenance::new(
        "simulate",
        ctx.seed,
        serde_json::json!({
            "mode": mode,
            "origin": origin,
            "trial": cfg,
            "seeds": seeds,
            "doses": doses,
            "dose_seeds": dose_seeds,
        }),
    );
    if let Some(p) = a.trial_config.as_ref().or(s.trial_config.as_ref()) {
        prov = prov.input(p)?;
    }
    let t0 = Instant::now();
    let mut summary = String::new();
    let _ = writeln!(summary, "{SIM_DISCLAIMER}");
    let _ = writeln!(summary, "config: {} (seed {})", cfg.name, cfg.seed);
    let mut out;
    match mode {
        "calibrate" => {
            let deltas: Vec<f64> = (0..7).map(|i| 0.04 + 0.02 * i as f64).collect();
            let p_accepts: Vec<f64> = (0..5).map(|i| 0.4 + 0.1 * i as f64).collect();
            let points = simlab::calibrate(
                &cfg,
                &banks,
                &deltas,
                &p_accepts,
                seeds,
                TARGET_UPLIFT_INTERVENTION,
                TARGET_UPLIFT_CONTROL,
            )?;
            let mut csv = String::from(
                "delta,p_accept,mean_uplift_intervention,mean_uplift_control,uplift_ratio,mean_d_marker,loss\n",
            );
            for p in &points {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    fmt_num(p.delta),
                    fmt_num(p.p_accept),
                    fmt_num(p.summary.mean_uplift_intervention),
                    fmt_num(p.summary.mean_uplift_control),
                    fmt_num(p.summary.uplift_ratio()),
                    fmt_num(p.summary.mean_d_marker),
                    fmt_num(p.loss)
                );
            }
            let best = &points[0];
            let _ = writeln!(
                summary,
                "targets: intervention {TARGET_UPLIFT_INTERVENTION}% control {TARGET_UPLIFT_CONTROL}%"
            );
            let _ = writeln!(
                summary,
                "best: delta {} p_accept {} (intervention {}%, control {}%)",
                fmt_num(best.delta),
                fmt_num(best.p_accept),
                fmt_num(best.summary.mean_uplift_intervention),
                fmt_num(best.summary.mean_uplift_control)
            );
            out = OutDir::create(&a.out, prov)?;
            out.write("calibration.csv", &csv)?;
        }
        "dose_response" => {
            let dr = simlab::dose_response(&cfg, &banks, &doses, dose_seeds)?;
            let mut csv = String::from("dose,seed,uplift_intervention,uplift_control\n");
            for d in &dr.per_dose {
                for r in &d.reports {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{}",
                        d.dose,
                        r.seed,
                        fmt_num(r.stats.arm(Arm::Intervention).pct_change_t1),
                        fmt_num(r.stats.arm(Arm::Control).pct_change_t1)
                    );
                }
            }
            for d in &dr.per_dose {
                let _ = writeln!(
                    summary,
                    "dose {}: mean intervention uplift {}%",
                    d.dose,
                    fmt_num(d.mean_uplift)
                );
            }
            let _ = writeln!(
                summary,
                "slope {} per nudge (se {}, t {})",
                fmt_num(dr.slope),
                fmt_num(dr.se),
                fmt_num(dr.t)
            );
            out = OutDir::create(&a.out, prov)?;
            out.write("dose_response.csv", &csv)?;
        }
        _ => {
            let reports = simlab::run_seeds(&cfg, &banks, seeds)?;
            for r in &reports {
                r.verify()?;
            }
            let e = simlab::ensemble(&reports);
            let _ = writeln!(summary, "seeds: {}", e.seeds);
            let _ = writeln!(
                summary,
                "mean inclusive-marker uplift, intervention: {}%",
                fmt_num(e.mean_uplift_intervention)
            );
            let _ = writeln!(
                summary,
                "mean inclusive-marker uplift, control: {}%",
                fmt_num(e.mean_uplift_control)
            );
            let _ = writeln!(summary, "uplift ratio: {}", fmt_num(e.uplift_ratio()));
            let _ = writeln!(
                summary,
                "seeds with intervention above control: {}",
                fmt_num(e.frac_intervention_exceeds)
            );
            let _ = writeln!(
                summary,
                "mean d (marker change): {}",
                fmt_num(e.mean_d_marker)
            );
            let _ = writeln!(
                summary,
                "mean d (willingness change): {}",
                fmt_num(e.mean_d_willingness)
            );
            let _ = writeln!(
                summary,
                "mean d (network diversity change): {}",
                fmt_num(e.mean_d_sndi)
            );
            let _ = writeln!(
                summary,
                "mean time x group coefficient: {}",
                fmt_num(e.mean_beta3)
            );
            let _ = writeln!(
                summary,
                "control nudges before T1: {}",
                e.control_nudges_before_t1
            );
            out = OutDir::create(&a.out, prov)?;
            out.write_records("trial_reports.jsonl", &reports)?;
            out.write_records("ensemble.jsonl", &[&e])?;
            out.write("per_seed.csv", &per_seed_csv(&reports))?;
            out.write("arm_long.csv", &arm_long_csv(&reports))?;
            out.write("agents.csv", &agents_csv(&reports))?;
        }
    }
    out.write("simulate_summary.txt", &summary)?;
    say(
        stdout,
        format!("{mode} run finished in {:.2?}", t0.elapsed()),
    );
    Ok(())
}

fn serve(ctx: &Ctx, a: &crate::ServeArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let s = &ctx.file.serve;
    let addr: std::net::SocketAddr = a
        .addr
        .as_deref()
        .unwrap_or(&s.addr)
        .parse()
        .map_err(|e| CliError::validation("config", format!("bad address: {e}")))?;
    let storage = match a.data_dir.clone().or_else(|| s.data_dir.clone()) {
        Some(path) => asacd_service::Storage::Dir {
            path,
            sync: a.fsync || s.fsync,
        },
        None => asacd_service::Storage::Memory,
    };
    let manager = asacd_service::SessionManager::new(storage)?;
    say(stdout, format!("listening on http://{addr}"));
    let rt =
        tokio::runtime::Runtime::new().map_err(|e| CliError::internal("runtime", e.to_string()))?;
    rt.block_on(asacd_service::serve(addr, manager))
        .map_err(|e| CliError::internal("serve", e.to_string()))
}

/// Copies every artifact of the given run directories into one bundle,
/// with an index and the concatenated plain-text summaries.
fn report(a: &crate::ReportArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut found = Vec::new();
    for dir in &a.from {
        if !dir.is_dir() {
            return Err(CliError::validation(
                "input",
                format!("{}: not a directory", dir.display()),
            ));
        }
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::validation("input", format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for p in entries {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| CliError::validation("input", format!("{}: {e}", p.display())))?;
            if !text.starts_with(HEADER_PREFIX) {
                continue;
            }
            found.push((p, text));
        }
    }
    if found.is_empty() {
        return Err(CliError::validation(
            "input",
            "no artifacts with a provenance header found",
        ));
    }
    let mut prov = Provenance::new("report", 0, serde_json::json!({ "from": a.from }));
    for (p, _) in &found {
        prov = prov.input(p)?;
    }
    let mut out = OutDir::create(&a.out, prov)?;
    let mut index = String::from("file,command,config_sha256,seed,bytes\n");
    let mut summary = String::new();
    let mut used = std::collections::BTreeMap::<String, usize>::new();
    let mut dir_of = std::collections::BTreeMap::<(PathBuf, String), String>::new();
    for (p, text) in &found {
        let (header, body) = split_header(text);
        let command = header[0]
            .strip_prefix(HEADER_PREFIX)
            .and_then(|r| r.split_whitespace().nth(1))
            .unwrap_or("unknown")
            .to_string();
        let hash = header_field(&header, "config_sha256")
            .unwrap_or("")
            .to_string();
        let seed = header_field(&header, "seed").unwrap_or("").to_string();
        let parent = p.parent().map(Path::to_path_buf).unwrap_or_default();
        let sub = dir_of
            .entry((parent, command.clone()))
            .or_insert_with(|| {
                let n = used.entry(command.clone()).or_default();
                *n += 1;
                if *n == 1 {
                    command.clone()
                } else {
                    format!("{command}-{n}")
                }
            })
            .clone();
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let rel = format!("{sub}/{name}");
        out.write_raw(&rel, text.as_bytes())?;
        let _ = writeln!(
            index,
            "{},{command},{hash},{seed},{}",
            csv_field(&rel),
            text.len()
        );
        if name.ends_with("_summary.txt") {
            let _ = writeln!(summary, "== {rel} (seed {seed}, config {hash})");
            summary.push_str(body);
            summary.push('\n');
        }
    }
    out.write("index.csv", &index)?;
    out.write("summary.txt", &summary)?;
    say(
        stdout,
        format!("bundled {} artifacts into {}", found.len(), a.out.display()),
    );
    Ok(())
}
