//! Agent-based cluster-randomised waitlist trial.
//!
//! Each agent carries a latent inclusivity propensity `theta`; its turn
//! style is drawn from a four-way distribution interpolated linearly
//! between two anchors. Intervention-arm agents are nudged after trigger
//! turns; accepted nudges move `theta` toward one and raise willingness.
//! Assessments at T0, T1 and T2 profile emitted text with the biomarker
//! engine and summarise it with the stats functions. This is an estimator
//! test-bench and scenario explorer, not a behavioural model.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::biomarker::{profile, BiomarkerProfile, LexiconSet};
use crate::stats::{
    self, cohens_d, ols_interaction, ols_line, sndi_from_counts, InteractionFit, PanelRow,
};
use crate::synth::{mix_seed, validate_banks, PhraseBankSet, Style};
use crate::{Error, Result};

pub const TIMES: [&str; 3] = ["T0", "T1", "T2"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub name: String,
    pub n_clusters: usize,
    pub cluster_size: usize,
    pub n_intervention_clusters: usize,
    pub n_groups: usize,
    pub sessions: usize,
    pub turns_per_session: usize,
    /// Turns sampled per agent at each assessment.
    pub assessment_turns: usize,
    /// Maximum nudges per agent per session.
    pub dose: usize,
    pub delta: f64,
    pub p_accept: f64,
    /// Per-session secular drift of theta toward one, both arms.
    pub baseline_drift: f64,
    pub theta0_mean: f64,
    pub theta0_sd: f64,
    /// SD of a shared per-cluster shift of initial theta.
    pub cluster_sd: f64,
    pub willingness0_mean: f64,
    pub willingness0_sd: f64,
    pub willingness_step: f64,
    /// SD of per-session random willingness movement, both arms.
    pub willingness_noise: f64,
    pub p_tie: f64,
    /// Fraction of the T0→T1 theta gain lost by T2 is `1 − exp(−decay)`.
    pub follow_up_decay: f64,
    /// Style weights at theta = 0 and theta = 1, in inclusive, neutral,
    /// generalising, exclusive order.
    pub anchor_low: [f64; 4],
    pub anchor_high: [f64; 4],
    pub seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            name: "default".into(),
            n_clusters: 10,
            cluster_size: 10,
            n_intervention_clusters: 6,
            n_groups: 5,
            sessions: 8,
            turns_per_session: 6,
            assessment_turns: 40,
            dose: 2,
            delta: 0.1,
            p_accept: 0.6,
            baseline_drift: 0.0075,
            theta0_mean: 0.394,
            theta0_sd: 0.1,
            cluster_sd: 0.03,
            willingness0_mean: 4.5,
            willingness0_sd: 0.8,
            willingness_step: 0.1,
            willingness_noise: 0.4,
            p_tie: 0.02,
            follow_up_decay: 0.0,
            anchor_low: [0.10, 0.29, 0.31, 0.30],
            anchor_high: [0.60, 0.29, 0.06, 0.05],
            seed: 0,
        }
    }
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl TrialConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        let cfg: TrialConfig =
            toml::from_str(src).map_err(|e| Error::Config(format!("bad trial config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-demo" => TrialConfig::from_toml(crate::defaults::PAPER_DEMO_PRESET),
            "default" => Ok(TrialConfig::default()),
            _ => Err(Error::Config(format!("unknown preset {name:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.cluster_size == 0 {
            return Err(Error::Config(
                "need at least one cluster of one agent".into(),
            ));
        }
        if self.n_intervention_clusters == 0 || self.n_intervention_clusters >= self.n_clusters {
            return Err(Error::Config(format!(
                "n_intervention_clusters must lie in [1, n_clusters), got {} of {}",
                self.n_intervention_clusters, self.n_clusters
            )));
        }
        if self.cluster_size * (self.n_clusters - self.n_intervention_clusters) < 2
            || self.cluster_size * self.n_intervention_clusters < 2
        {
            return Err(Error::Config("each arm needs at least two agents".into()));
        }
        if self.n_groups == 0 || self.sessions == 0 || self.assessment_turns == 0 {
            return Err(Error::Config(
                "n_groups, sessions and assessment_turns must be > 0".into(),
            ));
        }
        for (n, v) in [
            ("delta", self.delta),
            ("p_accept", self.p_accept),
            ("baseline_drift", self.baseline_drift),
            ("theta0_mean", self.theta0_mean),
            ("p_tie", self.p_tie),
        ] {
            check_prob(n, v)?;
        }
        for (n, v) in [
            ("theta0_sd", self.theta0_sd),
            ("cluster_sd", self.cluster_sd),
            ("willingness0_sd", self.willingness0_sd),
            ("willingness_step", self.willingness_step),
            ("willingness_noise", self.willingness_noise),
            ("follow_up_decay", self.follow_up_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{n} must be >= 0, got {v}")));
            }
        }
        if !(1.0..=7.0).contains(&self.willingness0_mean) {
            return Err(Error::Config("willingness0_mean must lie in [1, 7]".into()));
        }
        for (n, a) in [
            ("anchor_low", self.anchor_low),
            ("anchor_high", self.anchor_high),
        ] {
            let sum: f64 = a.iter().sum();
            if a.iter().any(|w| w.is_nan() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "{n} must be a distribution, got {a:?}"
                )));
            }
        }
        Ok(())
    }

    /// Style weights at a given theta.
    pub fn style_weights(&self, theta: f64) -> [f64; 4] {
        std::array::from_fn(|i| (1.0 - theta) * self.anchor_low[i] + theta * self.anchor_high[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Intervention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: String,
    pub ethnic_group: usize,
    pub theta: f64,
    pub cluster: usize,
    pub willingness: f64,
    pub ties: Vec<u32>,
}

/// One agent's measurements at T0, T1 and T2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRow {
    pub id: String,
    pub cluster: usize,
    pub ethnic_group: usize,
    pub arm: Arm,
    /// Inclusive-marker density of assessment text.
    pub marker: [f64; 3],
    pub willingness: [f64; 3],
    pub sndi: [f64; 3],
    pub theta: [f64; 3],
    pub nudges_shown_before_t1: u32,
    pub nudges_shown: u32,
    pub nudges_accepted: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub n_agents: usize,
    pub marker_mean: [f64; 3],
    pub pct_change_t1: f64,
    pub pct_change_t2: f64,
    pub willingness_mean: [f64; 3],
    pub sndi_mean: [f64; 3],
    pub nudges_shown_before_t1: u64,
    pub nudges_shown: u64,
    pub nudges_accepted: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub arms: [ArmSummary; 2],
    /// Intervention vs control on T0→T1 change.
    pub d_marker: f64,
    pub d_marker_t2: f64,
    pub d_willingness: f64,
    pub d_sndi: f64,
    /// Marker density on T0/T1 rows, group 1 = intervention.
    pub interaction: InteractionFit,
}

impl TrialStats {
    pub fn arm(&self, arm: Arm) -> &ArmSummary {
        &self.arms[arm as usize]
    }

    pub fn uplift_contrast(&self) -> f64 {
        self.arm(Arm::Intervention).pct_change_t1 - self.arm(Arm::Control).pct_change_t1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub config: TrialConfig,
    pub seed: u64,
    pub intervention_clusters: Vec<usize>,
    pub banks_version: String,
    pub lexicons_version: String,
    pub agents: Vec<AgentRow>,
    pub stats: TrialStats,
}

impl TrialReport {
    /// Recomputes the statistics from the stored rows and checks they match
    /// bit for bit.
    pub fn verify(&self) -> Result<()> {
        let again = summarize(&self.agents)?;
        if again != self.stats {
            return Err(Error::InvalidInput(
                "trial statistics do not match stored trajectories".into(),
            ));
        }
        Ok(())
    }

    pub fn agents_csv(&self) -> String {
        let mut out = String::from(
            "seed,agent,cluster,ethnic_group,arm,time,marker,willingness,sndi,theta\n",
        );
        for a in &self.agents {
            for (t, name) in TIMES.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                    self.seed,
                    a.id,
                    a.cluster,
                    a.ethnic_group,
                    arm_str(a.arm),
                    name,
                    a.marker[t],
                    a.willingness[t],
                    a.sndi[t],
                    a.theta[t]
                );
            }
        }
        out
    }
}

fn arm_str(a: Arm) -> &'static str {
    match a {
        Arm::Control => "control",
        Arm::Intervention => "intervention",
    }
}

fn pct_change(from: f64, to: f64) -> f64 {
    if from == 0.0 {
        0.0
    } else {
        100.0 * (to - from) / from
    }
}

/// Arm summaries, effect sizes and the interaction fit from raw rows.
pub fn summarize(agents: &[AgentRow]) -> Result<TrialStats> {
    let arm_summary = |arm: Arm| {
        let rows: Vec<&AgentRow> = agents.iter().filter(|a| a.arm == arm).collect();
        let m = |f: &dyn Fn(&AgentRow) -> f64| {
            stats::mean(&rows.iter().map(|a| f(a)).collect::<Vec<_>>())
        };
        let marker_mean: [f64; 3] = std::array::from_fn(|t| m(&|a| a.marker[t]));
        ArmSummary {
            arm,
            n_agents: rows.len(),
            marker_mean,
            pct_change_t1: pct_change(marker_mean[0], marker_mean[1]),
            pct_change_t2: pct_change(marker_mean[0], marker_mean[2]),
            willingness_mean: std::array::from_fn(|t| m(&|a| a.willingness[t])),
            sndi_mean: std::array::from_fn(|t| m(&|a| a.sndi[t])),
            nudges_shown_before_t1: rows.iter().map(|a| a.nudges_shown_before_t1 as u64).sum(),
            nudges_shown: rows.iter().map(|a| a.nudges_shown as u64).sum(),
            nudges_accepted: rows.iter().map(|a| a.nudges_accepted as u64).sum(),
        }
    };
    let change = |arm: Arm, f: &dyn Fn(&AgentRow) -> f64| -> Vec<f64> {
        agents.iter().filter(|a| a.arm == arm).map(f).collect()
    };
    let d = |f: &dyn Fn(&AgentRow) -> f64| -> Result<f64> {
        Ok(cohens_d(&change(Arm::Intervention, f), &change(Arm::Control, f))?.d)
    };
    let rows: Vec<PanelRow> = agents
        .iter()
        .flat_map(|a| {
            (0..2u8).map(move |t| PanelRow {
                y: a.marker[t as usize],
                time: t,
                group: (a.arm == Arm::Intervention) as u8,
            })
        })
        .collect();
    Ok(TrialStats {
        arms: [arm_summary(Arm::Control), arm_summary(Arm::Intervention)],
        d_marker: d(&|a| a.marker[1] - a.marker[0])?,
        d_marker_t2: d(&|a| a.marker[2] - a.marker[0])?,
        d_willingness: d(&|a| a.willingness[1] - a.willingness[0])?,
        d_sndi: d(&|a| a.sndi[1] - a.sndi[0])?,
        interaction: ols_interaction(&rows)?,
    })
}

/// Every realisation of every template, profiled once up front.
struct Realized {
    /// `[topic][style][template][noun] -> (profile)`.
    table: Vec<[Vec<Vec<BiomarkerProfile>>; 4]>,
}

impl Realized {
    fn new(banks: &PhraseBankSet, lexicons: &LexiconSet) -> Self {
        let table = banks
            .topics()
            .iter()
            .map(|topic| {
                Style::ALL.map(|style| {
                    banks
                        .bank(topic, style)
                        .map(|b| {
                            b.templates
                                .iter()
                                .map(|t| {
                                    banks
                                        .realizations(topic, t)
                                        .iter()
                                        .map(|text| profile(text, lexicons))
                                        .collect()
                                })
                                .collect()
                        })
                        .unwrap_or_default()
                })
            })
            .collect();
        Realized { table }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, topic: usize, style: Style) -> &BiomarkerProfile {
        let templates = &self.table[topic][style as usize];
        let nouns = &templates[rng.random_range(0..templates.len())];
        &nouns[rng.random_range(0..nouns.len())]
    }
}

fn draw_style(rng: &mut ChaCha8Rng, w: &[f64; 4]) -> Style {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, wi) in w.iter().enumerate() {
        acc += wi;
        if u < acc {
            return Style::ALL[i];
        }
    }
    Style::ALL[3]
}

struct Sim<'a> {
    cfg: &'a TrialConfig,
    realized: &'a Realized,
    n_topics: usize,
    rng: ChaCha8Rng,
}

impl Sim<'_> {
    fn assess(&mut self, theta: f64) -> f64 {
        let w = self.cfg.style_weights(theta);
        let (mut incl, mut tokens) = (0u64, 0u64);
        for _ in 0..self.cfg.assessment_turns {
            let topic = self.rng.random_range(0..self.n_topics);
            let style = draw_style(&mut self.rng, &w);
            let p = self.realized.draw(&mut self.rng, topic, style);
            incl += p.inclusive_count as u64;
            tokens += p.token_count as u64;
        }
        if tokens == 0 {
            0.0
        } else {
            incl as f64 / tokens as f64
        }
    }
}

fn check_agent(a: &Agent) {
    assert!(
        (0.0..=1.0).contains(&a.theta),
        "theta out of bounds: {}",
        a.theta
    );
    assert!(
        (1.0..=7.0).contains(&a.willingness),
        "willingness out of bounds: {}",
        a.willingness
    );
}

pub fn run_trial(cfg: &TrialConfig, banks: &PhraseBankSet) -> Result<TrialReport> {
    run_trial_with(cfg, banks, &LexiconSet::default())
}

pub fn run_trial_with(
    cfg: &TrialConfig,
    banks: &PhraseBankSet,
    lexicons: &LexiconSet,
) -> Result<TrialReport> {
    cfg.validate()?;
    banks.check_coverage()?;
    let report = validate_banks(banks, lexicons);
    if let Some(v) = report.violations.first() {
        return Err(Error::Config(format!(
            "phrase banks invalid ({} violations), first: {} {:?}",
            report.violations.len(),
            v.reason,
            v.realized
        )));
    }
    let realized = Realized::new(banks, lexicons);
    run_prepared(cfg, &realized, banks, lexicons)
}

fn run_prepared(
    cfg: &TrialConfig,
    realized: &Realized,
    banks: &PhraseBankSet,
    lexicons: &LexiconSet,
) -> Result<TrialReport> {
    let mut sim = Sim {
        cfg,
        realized,
        n_topics: banks.topics().len(),
        rng: ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0x5157])),
    };

    let mut clusters: Vec<usize> = (0..cfg.n_clusters).collect();
    clusters.shuffle(&mut sim.rng);
    let mut intervention_clusters = clusters[..cfg.n_intervention_clusters].to_vec();
    intervention_clusters.sort_unstable();
    let arm_of = |c: usize| {
        if intervention_clusters.contains(&c) {
            Arm::Intervention
        } else {
            Arm::Control
        }
    };

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut agents = Vec::with_capacity(cfg.n_clusters * cfg.cluster_size);
    for c in 0..cfg.n_clusters {
        let shift = cfg.cluster_sd * std_normal.sample(&mut sim.rng);
        for i in 0..cfg.cluster_size {
            let group = (c + i) % cfg.n_groups;
            let theta = (cfg.theta0_mean + shift + cfg.theta0_sd * std_normal.sample(&mut sim.rng))
                .clamp(0.0, 1.0);
            let willingness = (cfg.willingness0_mean
                + cfg.willingness0_sd * std_normal.sample(&mut sim.rng))
            .clamp(1.0, 7.0);
            let mut ties = vec![0u32; cfg.n_groups];
            ties[group] = 3;
            if cfg.n_groups > 1 {
                let other = (group + 1 + sim.rng.random_range(0..cfg.n_groups - 1)) % cfg.n_groups;
                ties[other] += 1;
            }
            agents.push(Agent {
                id: format!("c{c:02}-a{i:02}"),
                ethnic_group: group,
                theta,
                cluster: c,
                willingness,
                ties,
            });
        }
    }

    let n = agents.len();
    let mut marker = vec![[0.0; 3]; n];
    let mut willingness = vec![[0.0; 3]; n];
    let mut sndi = vec![[0.0; 3]; n];
    let mut theta_at = vec![[0.0; 3]; n];
    let mut shown = vec![0u32; n];
    let mut accepted = vec![0u32; n];

    let record = |t: usize,
                  sim: &mut Sim,
                  agents: &[Agent],
                  marker: &mut [[f64; 3]],
                  willingness: &mut [[f64; 3]],
                  sndi: &mut [[f64; 3]],
                  theta_at: &mut [[f64; 3]]| {
        for (k, a) in agents.iter().enumerate() {
            marker[k][t] = sim.assess(a.theta);
            willingness[k][t] = a.willingness;
            sndi[k][t] = sndi_from_counts(&a.ties);
            theta_at[k][t] = a.theta;
        }
    };

    record(
        0,
        &mut sim,
        &agents,
        &mut marker,
        &mut willingness,
        &mut sndi,
        &mut theta_at,
    );

    for _session in 0..cfg.sessions {
        for c in 0..cfg.n_clusters {
            let topic = sim.rng.random_range(0..sim.n_topics);
            let members: Vec<usize> = (0..n).filter(|&k| agents[k].cluster == c).collect();
            let treated = arm_of(c) == Arm::Intervention;
            let mut inclusive_turns = vec![0u32; members.len()];
            for (m, &k) in members.iter().enumerate() {
                let mut nudges = 0;
                for _ in 0..cfg.turns_per_session {
                    let style = draw_style(&mut sim.rng, &cfg.style_weights(agents[k].theta));
                    let p = realized.draw(&mut sim.rng, topic, style);
                    if p.inclusive_count > 0 {
                        inclusive_turns[m] += 1;
                    }
                    let trigger = p.exclusive_count + p.generalising_count > 0;
                    if treated && trigger && nudges < cfg.dose {
                        nudges += 1;
                        shown[k] += 1;
                        if sim.rng.random::<f64>() < cfg.p_accept {
                            accepted[k] += 1;
                            let a = &mut agents[k];
                            a.theta += cfg.delta * (1.0 - a.theta);
                            a.willingness = (a.willingness + cfg.willingness_step).clamp(1.0, 7.0);
                        }
                    }
                    check_agent(&agents[k]);
                }
            }
            for (x, &i) in members.iter().enumerate() {
                for (y, &j) in members.iter().enumerate().skip(x + 1) {
                    if agents[i].ethnic_group == agents[j].ethnic_group {
                        continue;
                    }
                    let co = inclusive_turns[x].min(inclusive_turns[y]);
                    let p = 1.0 - (1.0 - cfg.p_tie).powi(co as i32);
                    if sim.rng.random::<f64>() < p {
                        let (gi, gj) = (agents[i].ethnic_group, agents[j].ethnic_group);
                        agents[i].ties[gj] += 1;
                        agents[j].ties[gi] += 1;
                    }
                }
            }
        }
        for a in agents.iter_mut() {
            a.theta += cfg.baseline_drift * (1.0 - a.theta);
            a.willingness = (a.willingness
                + cfg.willingness_noise * std_normal.sample(&mut sim.rng))
            .clamp(1.0, 7.0);
            check_agent(a);
        }
    }
    let shown_before_t1 = shown.clone();

    record(
        1,
        &mut sim,
        &agents,
        &mut marker,
        &mut willingness,
        &mut sndi,
        &mut theta_at,
    );

    let keep = (-cfg.follow_up_decay).exp();
    for (k, a) in agents
        .iter_mut()
        .enumerate()
        .filter(|_| cfg.follow_up_decay > 0.0)
    {
        let t0 = theta_at[k][0];
        a.theta = (t0 + (a.theta - t0) * keep).clamp(0.0, 1.0);
        check_agent(a);
    }

    record(
        2,
        &mut sim,
        &agents,
        &mut marker,
        &mut willingness,
        &mut sndi,
        &mut theta_at,
    );

    let rows: Vec<AgentRow> = agents
        .iter()
        .enumerate()
        .map(|(k, a)| AgentRow {
            id: a.id.clone(),
            cluster: a.cluster,
            ethnic_group: a.ethnic_group,
            arm: arm_of(a.cluster),
            marker: marker[k],
            willingness: willingness[k],
            sndi: sndi[k],
            theta: theta_at[k],
            nudges_shown_before_t1: shown_before_t1[k],
            nudges_shown: shown[k],
            nudges_accepted: accepted[k],
        })
        .collect();
    let stats = summarize(&rows)?;
    let report = TrialReport {
        config: cfg.clone(),
        seed: cfg.seed,
        intervention_clusters,
        banks_version: banks.version_tag(),
        lexicons_version: lexicons.version_tag(),
        agents: rows,
        stats,
    };
    report.verify()?;
    Ok(report)
}

/// Runs `seeds` trials with sub-seeds of `cfg.seed`, in parallel, returned
/// in seed order.
pub fn run_seeds(
    cfg: &TrialConfig,
    banks: &PhraseBankSet,
    seeds: usize,
) -> Result<Vec<TrialReport>> {
    let configs: Vec<TrialConfig> = (0..seeds)
        .map(|k| TrialConfig {
            seed: sub_seed(cfg.seed, k),
            ..cfg.clone()
        })
        .collect();
    run_many(&configs, banks)
}

pub fn sub_seed(seed: u64, k: usize) -> u64 {
    mix_seed(&[seed, 0x5eed, k as u64])
}

fn run_many(configs: &[TrialConfig], banks: &PhraseBankSet) -> Result<Vec<TrialReport>> {
    let lexicons = LexiconSet::default();
    if configs.is_empty() {
        return Ok(Vec::new());
    }
    for c in configs {
        c.validate()?;
    }
    banks.check_coverage()?;
    if !validate_banks(banks, &lexicons).is_valid() {
        return Err(Error::Config("phrase banks invalid".into()));
    }
    let realized = Realized::new(banks, &lexicons);
    parallel_map(configs, |c| run_prepared(c, &realized, banks, &lexicons))
        .into_iter()
        .collect()
}

fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(items.len().max(1));
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk.max(1))
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub seeds: usize,
    pub mean_uplift_intervention: f64,
    pub mean_uplift_control: f64,
    /// Share of seeds where the intervention uplift exceeds control.
    pub frac_intervention_exceeds: f64,
    pub mean_d_marker: f64,
    pub min_d_marker: f64,
    pub mean_d_willingness: f64,
    pub mean_d_sndi: f64,
    pub mean_beta3: f64,
    pub control_nudges_before_t1: u64,
}

impl EnsembleSummary {
    pub fn uplift_ratio(&self) -> f64 {
        self.mean_uplift_intervention / self.mean_uplift_control
    }
}

pub fn ensemble(reports: &[TrialReport]) -> EnsembleSummary {
    let m =
        |f: &dyn Fn(&TrialReport) -> f64| stats::mean(&reports.iter().map(f).collect::<Vec<_>>());
    EnsembleSummary {
        seeds: reports.len(),
        mean_uplift_intervention: m(&|r| r.stats.arm(Arm::Intervention).pct_change_t1),
        mean_uplift_control: m(&|r| r.stats.arm(Arm::Control).pct_change_t1),
        frac_intervention_exceeds: reports
            .iter()
            .filter(|r| r.stats.uplift_contrast() > 0.0)
            .count() as f64
            / reports.len().max(1) as f64,
        mean_d_marker: m(&|r| r.stats.d_marker),
        min_d_marker: reports
            .iter()
            .map(|r| r.stats.d_marker)
            .fold(f64::INFINITY, f64::min),
        mean_d_willingness: m(&|r| r.stats.d_willingness),
        mean_d_sndi: m(&|r| r.stats.d_sndi),
        mean_beta3: m(&|r| r.stats.interaction.beta[3]),
        control_nudges_before_t1: reports
            .iter()
            .map(|r| r.stats.arm(Arm::Control).nudges_shown_before_t1)
            .sum(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub delta: f64,
    pub p_accept: f64,
    pub summary: EnsembleSummary,
    pub loss: f64,
}

/// Grid search over `(delta, p_accept)` minimising the squared distance of
/// ensemble-mean arm uplifts from the targets. Points are returned sorted
/// by loss.
pub fn calibrate(
    base: &TrialConfig,
    banks: &PhraseBankSet,
    deltas: &[f64],
    p_accepts: &[f64],
    seeds: usize,
    target_intervention: f64,
    target_control: f64,
) -> Result<Vec<CalibrationPoint>> {
    let mut points = Vec::new();
    for &delta in deltas {
        for &p_accept in p_accepts {
            let cfg = TrialConfig {
                delta,
                p_accept,
                ..base.clone()
            };
            let s = ensemble(&run_seeds(&cfg, banks, seeds)?);
            let loss = (s.mean_uplift_intervention - target_intervention).powi(2)
                + (s.mean_uplift_control - target_control).powi(2);
            points.push(CalibrationPoint {
                delta,
                p_accept,
                summary: s,
                loss,
            });
        }
    }
    points.sort_by(|a, b| a.loss.total_cmp(&b.loss));
    Ok(points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoseTrials {
    pub dose: usize,
    pub mean_uplift: f64,
    pub reports: Vec<TrialReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoseResponse {
    pub per_dose: Vec<DoseTrials>,
    pub intercept: f64,
    pub slope: f64,
    pub se: f64,
    pub t: f64,
}

pub const DEFAULT_DOSE_SEEDS: usize = 20;

/// Intervention-arm T1 uplift regressed on dose. Every dose reuses the same
/// sub-seeds, so doses are compared on common random numbers.
pub fn dose_response(
    cfg: &TrialConfig,
    banks: &PhraseBankSet,
    doses: &[usize],
    seeds: usize,
) -> Result<DoseResponse> {
    if doses.len() < 3 {
        return Err(Error::InvalidInput(
            "dose_response needs at least three doses".into(),
        ));
    }
    if seeds == 0 {
        return Err(Error::InvalidInput("need at least one seed".into()));
    }
    let configs: Vec<TrialConfig> = doses
        .iter()
        .flat_map(|&dose| {
            (0..seeds).map(move |k| TrialConfig {
                dose,
                seed: sub_seed(cfg.seed, k),
                ..cfg.clone()
            })
        })
        .collect();
    let mut reports = run_many(&configs, banks)?.into_iter();
    let mut per_dose = Vec::new();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for &dose in doses {
        let rs: Vec<TrialReport> = reports.by_ref().take(seeds).collect();
        let ups: Vec<f64> = rs
            .iter()
            .map(|r| r.stats.arm(Arm::Intervention).pct_change_t1)
            .collect();
        for u in &ups {
            x.push(dose as f64);
            y.push(*u);
        }
        per_dose.push(DoseTrials {
            dose,
            mean_uplift: stats::mean(&ups),
            reports: rs,
        });
    }
    let (intercept, slope, se) = ols_line(&x, &y)?;
    Ok(DoseResponse {
        per_dose,
        intercept,
        slope,
        se,
        t: if se > 0.0 { slope / se } else { f64::NAN },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub injected_beta3: f64,
    pub sigma: f64,
    pub seeds: usize,
    pub n_agents: usize,
    /// Agents in the treated group.
    pub n_treated: usize,
    /// Intercept, time and group coefficients of the generating model.
    pub base: [f64; 3],
    pub seed: u64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            injected_beta3: 0.92,
            sigma: 1.0,
            seeds: 200,
            n_agents: 100,
            n_treated: 60,
            base: [4.0, 0.1, 0.0],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub config: RecoveryConfig,
    pub mean_estimate: f64,
    pub bias: f64,
    pub relative_bias: f64,
    pub mean_se: f64,
    /// Share of seeds with `|estimate − injected| ≤ 3·se`.
    pub coverage_3se: f64,
    /// Share of seeds with `|t| > 1.96` for the interaction.
    pub rejection_rate: f64,
    pub estimates: Vec<f64>,
}

/// Fits the interaction model to panels (times 0, 1, 2) generated with a
/// known time × group coefficient plus Gaussian noise.
pub fn recover_effect(cfg: &RecoveryConfig) -> Result<RecoveryReport> {
    if cfg.seeds == 0 || cfg.n_treated == 0 || cfg.n_treated >= cfg.n_agents {
        return Err(Error::InvalidInput(
            "recovery needs seeds and two non-empty groups".into(),
        ));
    }
    if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::InvalidInput("sigma must be >= 0".into()));
    }
    let seeds: Vec<usize> = (0..cfg.seeds).collect();
    let fits: Vec<Result<InteractionFit>> = parallel_map(&seeds, |&k| {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, k));
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let mut rows = Vec::with_capacity(cfg.n_agents * 3);
        for a in 0..cfg.n_agents {
            let g = (a < cfg.n_treated) as u8;
            for t in 0..3u8 {
                let (tf, gf) = (t as f64, g as f64);
                let mu = cfg.base[0]
                    + cfg.base[1] * tf
                    + cfg.base[2] * gf
                    + cfg.injected_beta3 * tf * gf;
                rows.push(PanelRow {
                    y: mu + cfg.sigma * noise.sample(&mut rng),
                    time: t,
                    group: g,
                });
            }
        }
        ols_interaction(&rows)
    });
    let fits: Vec<InteractionFit> = fits.into_iter().collect::<Result<_>>()?;
    let estimates: Vec<f64> = fits.iter().map(|f| f.beta[3]).collect();
    let mean_estimate = stats::mean(&estimates);
    let n = fits.len() as f64;
    let covered = fits
        .iter()
        .filter(|f| (f.beta[3] - cfg.injected_beta3).abs() <= 3.0 * f.se[3] + 1e-12)
        .count() as f64;
    let rejected = fits.iter().filter(|f| f.t[3].abs() > 1.96).count() as f64;
    let bias = mean_estimate - cfg.injected_beta3;
    Ok(RecoveryReport {
        config: cfg.clone(),
        mean_estimate,
        bias,
        relative_bias: if cfg.injected_beta3 != 0.0 {
            bias / cfg.injected_beta3
        } else {
            f64::NAN
        },
        mean_se: stats::mean(&fits.iter().map(|f| f.se[3]).collect::<Vec<_>>()),
        coverage_3se: covered / n,
        rejection_rate: rejected / n,
        estimates,
    })
}
