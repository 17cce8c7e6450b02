//! Evaluation harness: runs the engine over a QA suite, optionally under a
//! noise attack or an ablation, and aggregates metrics.
//!
//! Summary and backtrack probabilities are the percentage of sessions that
//! applied the action at least once. EM covers choice cases only; BLEU and
//! ROUGE-R cover open-ended cases only.

mod metrics;
mod scripted;
mod suite;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{compute_bleu, compute_em, compute_rouge_r, normalize_answer_set, MetricError};
pub use scripted::{confident_probs, random_playbook, uncertain_probs, NoiseAwareGenerator};
pub use suite::{
    inject_noise, synthetic_suite, AttackKind, AttackSpec, NoiseKind, QaCase, Suite, DEFAULT_SUITE_SEED,
    DEFAULT_SUITE_SIZE, NOISE_BANK_SIZE, NOISE_MARKER,
};

use crate::engine::{reasoning_loop, ActionGenerator, EngineConfig, EngineError, SessionStatus, SessionTrace};
use crate::memory::ActionKind;
use crate::monitor::{Metric, MonitorConfig, MonitorError};
use crate::retrieval::{ToolInvoker, ToolOutput, ToolRegistry};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("case {case}: {source}")]
    Engine { case: String, source: EngineError },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("{0}")]
    Input(String),
}

/// Builds a fresh generator for each case.
pub type GeneratorFactory<'a> = dyn Fn(&QaCase) -> Box<dyn ActionGenerator> + Sync + 'a;

pub fn noise_aware_factory() -> impl Fn(&QaCase) -> Box<dyn ActionGenerator> + Sync {
    |_| Box::new(NoiseAwareGenerator)
}

/// Wraps a tool set and poisons the first invocation only.
pub struct PoisonedTools<T> {
    inner: T,
    attack: AttackKind,
    noise: String,
    fired: bool,
}

impl<T: ToolInvoker> PoisonedTools<T> {
    pub fn new(inner: T, attack: AttackKind, noise: impl Into<String>) -> Self {
        Self { inner, attack, noise: noise.into(), fired: false }
    }

    pub fn fired(&self) -> bool {
        self.fired
    }
}

impl<T: ToolInvoker> ToolInvoker for PoisonedTools<T> {
    fn invoke(&mut self, name: &str, query: &str) -> ToolOutput {
        let mut out = self.inner.invoke(name, query);
        if !self.fired {
            self.fired = true;
            out.text = inject_noise(&out.text, self.attack, &self.noise);
        }
        out
    }

    fn describe(&self) -> Vec<(String, String)> {
        self.inner.describe()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoBacktrack,
    NoSummary,
    NoStateMonitor,
}

suite::str_enum!(Variant {
    Full => "full",
    NoBacktrack => "no_backtrack",
    NoSummary => "no_summary",
    NoStateMonitor => "no_state_monitor"
});

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoBacktrack, Variant::NoSummary, Variant::NoStateMonitor];

    pub fn apply(self, base: &EngineConfig) -> EngineConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoBacktrack => cfg.allowed.retain(|k| *k != ActionKind::Backtrack),
            Variant::NoSummary => cfg.allowed.retain(|k| *k != ActionKind::Summary),
            Variant::NoStateMonitor => cfg.state_gating = false,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub case_id: String,
    pub prediction: String,
    pub gold: Vec<String>,
    pub em: Option<u8>,
    pub bleu1: Option<f64>,
    pub bleu4: Option<f64>,
    pub rouge_r: Option<f64>,
    pub status: SessionStatus,
    pub actions: usize,
    pub summary: bool,
    pub backtrack: bool,
    pub poisoned: bool,
    /// Whether the first `Conclusion` the generator emitted was accepted.
    pub first_conclusion_accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub attack: Option<AttackSpec>,
    pub variant: Variant,
    pub metric: Metric,
    pub sigma: f64,
    pub cases: usize,
    pub em: f64,
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_r: f64,
    pub summary_prob: f64,
    pub backtrack_prob: f64,
    pub mean_actions: f64,
    pub exhausted_pct: f64,
    pub first_conclusion_accept_pct: f64,
    pub rows: Vec<CaseRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    pub report: MetricsReport,
    /// `(case_id, trace)` sorted by case id.
    pub traces: Vec<(String, SessionTrace)>,
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub label: String,
    pub attack: Option<AttackSpec>,
    pub variant: Variant,
    pub engine: EngineConfig,
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn run_case(
    index: usize,
    case: &QaCase,
    suite: &Suite,
    tools: &ToolRegistry,
    spec: &RunSpec,
    cfg: &EngineConfig,
    factory: &GeneratorFactory,
) -> Result<(CaseRow, SessionTrace), HarnessError> {
    let mut generator = factory(case);
    let (session, poisoned) = match spec.attack {
        Some(a) => {
            let mut poisoned = PoisonedTools::new(tools.clone(), a.attack, suite.noise_for(index, a.noise));
            let s = reasoning_loop(&case.query, generator.as_mut(), &mut poisoned, cfg);
            (s, poisoned.fired())
        }
        None => (reasoning_loop(&case.query, generator.as_mut(), &mut tools.clone(), cfg), false),
    };
    let session = session.map_err(|source| HarnessError::Engine { case: case.id.clone(), source })?;
    let trace = session.trace;
    let prediction = session.conclusion;
    let (em, bleu1, bleu4, rouge_r) = if case.is_choice() {
        (Some(compute_em(&prediction, &case.gold)?), None, None, None)
    } else {
        (
            None,
            Some(compute_bleu(&prediction, &case.reference, 1)?),
            Some(compute_bleu(&prediction, &case.reference, 4)?),
            Some(compute_rouge_r(&prediction, &case.reference)?),
        )
    };
    let row = CaseRow {
        case_id: case.id.clone(),
        prediction,
        gold: case.gold.clone(),
        em,
        bleu1,
        bleu4,
        rouge_r,
        status: trace.outcome.status,
        actions: trace.outcome.actions_taken,
        summary: trace.applied_at_least_once(ActionKind::Summary),
        backtrack: trace.applied_at_least_once(ActionKind::Backtrack),
        poisoned,
        first_conclusion_accepted: trace
            .records
            .iter()
            .find(|r| r.emitted == Some(ActionKind::Conclusion))
            .is_some_and(|r| r.accepted),
    };
    Ok((row, trace))
}

/// Runs every case of `suite` in parallel and aggregates the results.
pub fn run_suite(
    suite: &Suite,
    tools: &ToolRegistry,
    spec: &RunSpec,
    factory: &GeneratorFactory,
) -> Result<SuiteRun, HarnessError> {
    if suite.cases.is_empty() {
        return Err(HarnessError::Input("suite has no cases".into()));
    }
    let cfg = spec.variant.apply(&spec.engine);
    let mut results = suite
        .cases
        .par_iter()
        .enumerate()
        .map(|(i, case)| run_case(i, case, suite, tools, spec, &cfg, factory))
        .collect::<Result<Vec<_>, _>>()?;
    results.sort_by(|a, b| a.0.case_id.cmp(&b.0.case_id));
    let (rows, traces): (Vec<CaseRow>, Vec<SessionTrace>) = results.into_iter().unzip();

    let n = rows.len();
    let count = |f: fn(&CaseRow) -> bool| rows.iter().filter(|r| f(r)).count();
    let report = MetricsReport {
        label: spec.label.clone(),
        attack: spec.attack,
        variant: spec.variant,
        metric: cfg.monitor.metric,
        sigma: cfg.monitor.sigma,
        cases: n,
        em: mean(rows.iter().filter_map(|r| r.em).map(|e| 100.0 * f64::from(e))),
        bleu1: mean(rows.iter().filter_map(|r| r.bleu1)),
        bleu4: mean(rows.iter().filter_map(|r| r.bleu4)),
        rouge_r: mean(rows.iter().filter_map(|r| r.rouge_r)),
        summary_prob: pct(count(|r| r.summary), n),
        backtrack_prob: pct(count(|r| r.backtrack), n),
        mean_actions: mean(rows.iter().map(|r| r.actions as f64)),
        exhausted_pct: pct(count(|r| r.status == SessionStatus::BudgetExhausted), n),
        first_conclusion_accept_pct: pct(count(|r| r.first_conclusion_accepted), n),
        rows,
    };
    let traces = report.rows.iter().map(|r| r.case_id.clone()).zip(traces).collect();
    Ok(SuiteRun { report, traces })
}

pub fn run_attack_suite(
    suite: &Suite,
    tools: &ToolRegistry,
    attack: AttackSpec,
    engine: &EngineConfig,
    factory: &GeneratorFactory,
) -> Result<SuiteRun, HarnessError> {
    let spec = RunSpec {
        label: format!("attack/{}/{}", attack.attack, attack.noise),
        attack: Some(attack),
        variant: Variant::Full,
        engine: engine.clone(),
    };
    run_suite(suite, tools, &spec, factory)
}

/// All six attack/noise combinations, structural first.
pub fn run_attack_grid(
    suite: &Suite,
    tools: &ToolRegistry,
    engine: &EngineConfig,
    factory: &GeneratorFactory,
) -> Result<Vec<SuiteRun>, HarnessError> {
    AttackKind::ALL
        .iter()
        .flat_map(|a| NoiseKind::ALL.iter().map(move |n| AttackSpec { attack: *a, noise: *n }))
        .map(|spec| run_attack_suite(suite, tools, spec, engine, factory))
        .collect()
}

pub fn run_ablation(
    suite: &Suite,
    tools: &ToolRegistry,
    variant: Variant,
    attack: Option<AttackSpec>,
    engine: &EngineConfig,
    factory: &GeneratorFactory,
) -> Result<SuiteRun, HarnessError> {
    let spec = RunSpec { label: format!("ablation/{variant}"), attack, variant, engine: engine.clone() };
    run_suite(suite, tools, &spec, factory)
}

pub const CPPL_SIGMA_GRID: [f64; 5] = [5.0, 8.0, 10.0, 12.0, 15.0];
pub const UCT_SIGMA_GRID: [f64; 5] = [10.0, 15.0, 20.0, 25.0, 30.0];

pub fn default_sigma_grid(metric: Metric) -> &'static [f64] {
    match metric {
        Metric::Cppl => &CPPL_SIGMA_GRID,
        Metric::Uct => &UCT_SIGMA_GRID,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub em: f64,
    pub mean_actions: f64,
    pub exhausted_pct: f64,
    pub first_conclusion_accept_pct: f64,
}

impl From<&MetricsReport> for SweepRow {
    fn from(r: &MetricsReport) -> Self {
        Self {
            sigma: r.sigma,
            em: r.em,
            mean_actions: r.mean_actions,
            exhausted_pct: r.exhausted_pct,
            first_conclusion_accept_pct: r.first_conclusion_accept_pct,
        }
    }
}

/// One suite run per threshold; everything else comes from `engine`.
pub fn sweep_sigma(
    suite: &Suite,
    tools: &ToolRegistry,
    metric: Metric,
    sigmas: &[f64],
    attack: Option<AttackSpec>,
    engine: &EngineConfig,
    factory: &GeneratorFactory,
) -> Result<Vec<SuiteRun>, HarnessError> {
    if sigmas.is_empty() {
        return Err(HarnessError::Input("no sigma values given".into()));
    }
    sigmas
        .iter()
        .map(|&sigma| {
            let spec = RunSpec {
                label: format!("sweep/{metric}/{sigma}"),
                attack,
                variant: Variant::Full,
                engine: EngineConfig { monitor: MonitorConfig::new(metric, sigma)?, ..engine.clone() },
            };
            run_suite(suite, tools, &spec, factory)
        })
        .collect()
}

pub const ATTACK_TABLE_COLUMNS: [&str; 4] = ["Noise Type", "Summary Prob.", "Backtrack Prob.", "EM"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub attack: AttackKind,
    pub noise_type: String,
    pub summary_prob: String,
    pub backtrack_prob: String,
    pub em: String,
}

fn prob_cell(v: f64) -> String {
    format!("{v:05.2}%")
}

/// One row per attack report, in the order given.
pub fn attack_rows(reports: &[&MetricsReport]) -> Vec<AttackRow> {
    reports
        .iter()
        .filter_map(|r| {
            let a = r.attack?;
            Some(AttackRow {
                attack: a.attack,
                noise_type: a.noise.row_label().to_string(),
                summary_prob: prob_cell(r.summary_prob),
                backtrack_prob: prob_cell(r.backtrack_prob),
                em: format!("{:.2}", r.em),
            })
        })
        .collect()
}

/// Plain-text table grouped by attack kind.
pub fn render_attack_table(rows: &[AttackRow]) -> String {
    let widths: Vec<usize> = (0..4)
        .map(|c| {
            rows.iter()
                .map(|r| [&r.noise_type, &r.summary_prob, &r.backtrack_prob, &r.em][c].len())
                .chain([ATTACK_TABLE_COLUMNS[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: [&str; 4]| {
        let mut s = format!("{:<w$}", cells[0], w = widths[0]);
        for (c, w) in cells[1..].iter().zip(&widths[1..]) {
            write!(s, " | {c:>w$}").unwrap();
        }
        s
    };
    let rule = "-".repeat(widths.iter().sum::<usize>() + 9);
    let mut out = String::new();
    writeln!(out, "{}", line(ATTACK_TABLE_COLUMNS)).unwrap();
    for kind in AttackKind::ALL {
        let group: Vec<&AttackRow> = rows.iter().filter(|r| r.attack == kind).collect();
        if group.is_empty() {
            continue;
        }
        writeln!(out, "{rule}\n{}\n{rule}", kind.heading()).unwrap();
        for r in group {
            writeln!(out, "{}", line([&r.noise_type, &r.summary_prob, &r.backtrack_prob, &r.em])).unwrap();
        }
    }
    out
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<32} EM {:6.2}  BLEU-1 {:6.2}  BLEU-4 {:6.2}  ROUGE-R {:6.2}  Summary {:6.2}%  Backtrack {:6.2}%  actions {:5.2}  exhausted {:6.2}%",
            self.label,
            self.em,
            self.bleu1,
            self.bleu4,
            self.rouge_r,
            self.summary_prob,
            self.backtrack_prob,
            self.mean_actions,
            self.exhausted_pct
        )
    }
}

pub fn render_sweep_table(metric: Metric, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{:>12} | {:>7} | {:>12} | {:>11} | {:>16}\n",
        format!("sigma ({metric})"),
        "EM",
        "mean actions",
        "exhausted %",
        "first accepted %"
    );
    for r in rows {
        writeln!(
            out,
            "{:>12} | {:>7.2} | {:>12.2} | {:>11.2} | {:>16.2}",
            r.sigma, r.em, r.mean_actions, r.exhausted_pct, r.first_conclusion_accept_pct
        )
        .unwrap();
    }
    out
}

impl FromStr for AttackSpec {
    type Err = String;

    /// `attack/noise`, e.g. `structural/irrelevant`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, n) = s.split_once('/').ok_or_else(|| format!("expected attack/noise, got {s:?}"))?;
        Ok(Self { attack: a.parse()?, noise: n.parse()? })
    }
}

#[cfg(test)]
mod tests;
