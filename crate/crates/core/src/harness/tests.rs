use std::sync::Arc;

use super::*;
use crate::retrieval::ChunkIndex;

fn setup() -> (Suite, ToolRegistry) {
    let suite = synthetic_suite(DEFAULT_SUITE_SEED, DEFAULT_SUITE_SIZE);
    let index = Arc::new(ChunkIndex::build(&suite.corpus()).unwrap());
    (suite, ToolRegistry::documents_only(index))
}

const SI: AttackSpec = AttackSpec { attack: AttackKind::Structural, noise: NoiseKind::Irrelevant };

#[test]
fn clean_run_is_perfect() {
    let (suite, tools) = setup();
    let spec = RunSpec { label: "clean".into(), attack: None, variant: Variant::Full, engine: EngineConfig::default() };
    let run = run_suite(&suite, &tools, &spec, &noise_aware_factory()).unwrap();
    let r = &run.report;
    assert_eq!((r.em, r.bleu1, r.bleu4, r.rouge_r), (100.0, 100.0, 100.0, 100.0));
    assert_eq!((r.summary_prob, r.backtrack_prob, r.exhausted_pct), (0.0, 0.0, 0.0));
    assert!(r.rows.iter().all(|row| !row.poisoned && row.actions == 3));
}

#[test]
fn structural_noise_is_backtracked() {
    let (suite, tools) = setup();
    let run = run_attack_suite(&suite, &tools, SI, &EngineConfig::default(), &noise_aware_factory()).unwrap();
    assert_eq!(run.report.backtrack_prob, 100.0);
    assert_eq!(run.report.em, 100.0);
    assert!(run.report.rows.iter().all(|r| r.poisoned));
}

#[test]
fn partial_noise_is_summarized() {
    let (suite, tools) = setup();
    let spec = AttackSpec { attack: AttackKind::Partial, noise: NoiseKind::Relevant };
    let run = run_attack_suite(&suite, &tools, spec, &EngineConfig::default(), &noise_aware_factory()).unwrap();
    assert_eq!((run.report.summary_prob, run.report.backtrack_prob, run.report.em), (100.0, 0.0, 100.0));
    let no_summary =
        run_ablation(&suite, &tools, Variant::NoSummary, Some(spec), &EngineConfig::default(), &noise_aware_factory())
            .unwrap();
    assert_eq!((no_summary.report.summary_prob, no_summary.report.backtrack_prob), (0.0, 100.0));
}

#[test]
fn ablations_lose_accuracy() {
    let (suite, tools) = setup();
    let cfg = EngineConfig::default();
    let f = noise_aware_factory();
    let full = run_ablation(&suite, &tools, Variant::Full, Some(SI), &cfg, &f).unwrap().report;
    for v in [Variant::NoBacktrack, Variant::NoSummary, Variant::NoStateMonitor] {
        let r = run_ablation(&suite, &tools, v, Some(SI), &cfg, &f).unwrap().report;
        assert!(full.em >= r.em, "{v}");
    }
    let nb = run_ablation(&suite, &tools, Variant::NoBacktrack, Some(SI), &cfg, &f).unwrap().report;
    assert_eq!(nb.backtrack_prob, 0.0);
    assert!(nb.em <= 60.0);
    let nsm = run_ablation(&suite, &tools, Variant::NoStateMonitor, Some(SI), &cfg, &f).unwrap().report;
    assert!(nsm.em <= 60.0);
    assert_eq!(nsm.first_conclusion_accept_pct, 100.0);
}

#[test]
fn trigger_counts_match_traces() {
    let (suite, tools) = setup();
    let spec = AttackSpec { attack: AttackKind::Partial, noise: NoiseKind::Mixed };
    let run =
        run_ablation(&suite, &tools, Variant::NoSummary, Some(spec), &EngineConfig::default(), &noise_aware_factory())
            .unwrap();
    for (row, (id, trace)) in run.report.rows.iter().zip(&run.traces).take(10) {
        assert_eq!(&row.case_id, id);
        let text = trace.to_jsonl();
        assert_eq!(row.backtrack, text.contains("\"applied\":\"Backtrack\""));
        assert_eq!(row.summary, text.contains("\"applied\":\"Summary\""));
    }
}

#[test]
fn degenerate_thresholds() {
    let (suite, tools) = setup();
    let runs =
        sweep_sigma(&suite, &tools, Metric::Cppl, &[1e9, 1e-9], None, &EngineConfig::default(), &noise_aware_factory())
            .unwrap();
    assert_eq!(runs[0].report.first_conclusion_accept_pct, 100.0);
    assert_eq!(runs[0].report.mean_actions, 1.0);
    assert_eq!(runs[1].report.exhausted_pct, 100.0);
    assert!(
        sweep_sigma(&suite, &tools, Metric::Cppl, &[], None, &EngineConfig::default(), &noise_aware_factory()).is_err()
    );
}

#[test]
fn attack_table_schema() {
    let (suite, tools) = setup();
    let runs = run_attack_grid(&suite, &tools, &EngineConfig::default(), &noise_aware_factory()).unwrap();
    let reports: Vec<&MetricsReport> = runs.iter().map(|r| &r.report).collect();
    let rows = attack_rows(&reports);
    assert_eq!(rows.len(), 6);
    let table = render_attack_table(&rows);
    let lines: Vec<&str> = table.lines().collect();
    let header: Vec<&str> = lines[0].split(" | ").map(str::trim).collect();
    assert_eq!(header, ATTACK_TABLE_COLUMNS);
    assert_eq!(lines[2], "Structural Attack");
    assert!(lines[4].starts_with("Irrelevant Retrieval Noise"));
    assert!(lines[8].starts_with("Partial Attack"));
    assert_eq!(prob_cell(1.0), "01.00%");
    assert_eq!(prob_cell(94.0), "94.00%");
    assert_eq!(prob_cell(100.0), "100.00%");
}

#[test]
fn poisoning_happens_once_and_only_with_tools() {
    struct Fixed;
    impl ToolInvoker for Fixed {
        fn invoke(&mut self, _: &str, _: &str) -> ToolOutput {
            ToolOutput { text: "R".into(), error: false }
        }
        fn describe(&self) -> Vec<(String, String)> {
            Vec::new()
        }
    }
    let mut p = PoisonedTools::new(Fixed, AttackKind::Partial, "N");
    assert!(!p.fired());
    assert_eq!(p.invoke("x", "q").text, "R\nN");
    assert_eq!(p.invoke("x", "q").text, "R");
    assert!(p.fired());
}

#[test]
fn parses_cli_values() {
    assert_eq!(
        "structural/mixed".parse::<AttackSpec>().unwrap(),
        AttackSpec { attack: AttackKind::Structural, noise: NoiseKind::Mixed }
    );
    assert!("structural".parse::<AttackSpec>().is_err());
    assert_eq!("no_state_monitor".parse::<Variant>().unwrap(), Variant::NoStateMonitor);
}
