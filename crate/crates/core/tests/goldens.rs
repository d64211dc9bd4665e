mod common;

use common::{load_goldens, recording_pipeline, replay_pipeline, Golden};
use tablemaster::eval::{exact_match, predicted_cost_half_units};
use tablemaster::pipeline::RunRecord;
use tablemaster::trace::Fallback;

fn run(golden: &Golden) -> RunRecord {
    replay_pipeline()
        .run(&golden.id, &golden.table(), &golden.question, golden.task_kind())
        .unwrap_or_else(|e| panic!("{}: {e}", golden.id))
}

/// Rebuilds the checked-in cassette from the scripted replies in each golden.
/// Run with `cargo test --test goldens -- --ignored regenerate`.
#[test]
#[ignore]
fn regenerate_cassette() {
    let dir = common::cassette_dir();
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    for g in load_goldens() {
        let record = recording_pipeline(&g, &dir)
            .run(&g.id, &g.table(), &g.question, g.task_kind())
            .unwrap();
        assert_eq!(record.trace.lm_errors(), 0, "{}: scripted replies incomplete", g.id);
    }
}

#[test]
fn at_least_twelve_goldens() {
    let goldens = load_goldens();
    assert!(goldens.len() >= 12, "{} goldens", goldens.len());
    for id in ["riders", "tenure"] {
        assert!(goldens.iter().any(|g| g.id == id), "missing {id}");
    }
}

#[test]
fn answers_match_gold() {
    for g in load_goldens() {
        let r = run(&g);
        assert_eq!(r.trace.lm_errors(), 0, "{}: cassette miss or LM error", g.id);
        assert!(
            exact_match(&r.answer.value, &g.answers),
            "{}: answered {:?}, gold {:?}",
            g.id,
            r.answer.value,
            g.answers
        );
    }
}

#[test]
fn worked_examples() {
    let goldens = load_goldens();
    let find = |id: &str| goldens.iter().find(|g| g.id == id).unwrap();
    assert_eq!(run(find("riders")).answer.value, "7");
    assert_eq!(run(find("tenure")).answer.value, "4");
}

#[test]
fn stages_follow_the_script() {
    for g in load_goldens() {
        let r = run(&g);
        let strategy = r.trace.strategy.map(|s| s.as_str().to_string());
        assert_eq!(strategy, g.expect.strategy, "{}: strategy", g.id);
        assert_eq!(r.focus.rows, g.expect.rows, "{}: focus rows", g.id);
        assert_eq!(r.focus.reconstruction_count, g.expect.reconstruction_count, "{}: e", g.id);
        let fallbacks: Vec<String> = r
            .trace
            .fallbacks
            .iter()
            .map(|f| serde_json::to_value(f).unwrap().as_str().unwrap().to_string())
            .collect();
        assert_eq!(fallbacks, g.expect.fallbacks, "{}: fallbacks", g.id);
        if strategy.as_deref() == Some("symbolic") {
            let exec = r.trace.execution.as_ref().expect("symbolic runs record execution");
            assert_eq!(exec.exit_status, 0, "{}: {}", g.id, exec.stderr);
        }
    }
}

#[test]
fn column_major_input_is_transposed() {
    let g = load_goldens().into_iter().find(|g| g.id == "members-column-major").unwrap();
    let r = run(&g);
    assert!(r.normalized.transposed);
    assert_eq!(r.normalized.headers, ["Attribute", "Age", "City", "Joined"]);
}

#[test]
fn aggregate_sql_keeps_filtered_rows() {
    let g = load_goldens().into_iter().find(|g| g.id == "points-aggregate-sql").unwrap();
    let r = run(&g);
    assert!(r.rows.aggregate);
    assert_eq!(r.rows.indices, [0, 2, 4]);
    assert!(r.trace.warnings().any(|(stage, _)| stage == "row_lookup"));
}

#[test]
fn replay_is_byte_identical() {
    for g in load_goldens() {
        let first = serde_json::to_string_pretty(&run(&g)).unwrap();
        let second = serde_json::to_string_pretty(&run(&g)).unwrap();
        assert_eq!(first, second, "{}: traces differ between runs", g.id);
    }
}

#[test]
fn cost_accounting_is_exact() {
    for g in load_goldens() {
        let r = run(&g);
        let tally = r.cost();
        let o = tally.observed;
        assert_eq!(o.e as usize, r.focus.reconstruction_count);
        assert_eq!(o.a as usize, r.focus.rows);
        assert_eq!(o.b as usize, r.focus.width);
        assert_eq!(
            tally.total_half_units(),
            Some(predicted_cost_half_units(o.k, o.n, o.e, o.a, o.b)),
            "{}",
            g.id
        );
        assert!(r.focus.condensation_ratio <= 1.0 && r.focus.condensation_ratio >= 0.0);
        if r.trace.has_fallback(Fallback::FullTableRetry) {
            assert!(tally.unmodeled > 0.0);
        }
    }
}
