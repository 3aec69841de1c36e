mod common;

use std::sync::Arc;

use ainsight_core::providers::MockChat;
use ainsight_core::replay::{
    export_metrics, load_metrics, load_script, run_replay, ClockKind, ReplayOptions, ReplayTotals,
};
use ainsight_core::Error;
use common::*;

fn opts(id: &str) -> ReplayOptions {
    ReplayOptions {
        session_id: Some(id.into()),
        ..ReplayOptions::default()
    }
}

#[test]
fn bundled_script_loads() {
    let script = load_script(fixtures().join("scripts/lower_back_pain.json")).unwrap();
    assert_eq!(script.title, "lower-back-pain");
    assert_eq!(script.turns.len(), 12);
    assert_eq!(script.span_ms(), 120_000);
}

#[test]
fn out_of_order_script_names_the_turn() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"title":"bad","turns":[
            {"speaker":"doctor","text":"a","at_ms":0},
            {"speaker":"patient","text":"b","at_ms":5000},
            {"speaker":"doctor","text":"c","at_ms":4000}]}"#,
    )
    .unwrap();
    match load_script(&path) {
        Err(Error::ScriptValidation { turn, .. }) => assert_eq!(turn, 2),
        other => panic!("unexpected {other:?}"),
    }
    std::fs::write(&path, r#"{"title":"empty","turns":[]}"#).unwrap();
    assert!(matches!(
        load_script(&path),
        Err(Error::ScriptValidation { .. })
    ));
}

#[test]
fn fixture_replay_end_to_end() {
    let script = load_script(fixtures().join("scripts/lower_back_pain.json")).unwrap();
    let (engine, _) = fixture_engine(20_000);
    let out = run_replay(&script, &engine, &opts("r1")).unwrap();
    let snap = &out.snapshot;
    assert!(snap.finished);
    assert_eq!(snap.tick_count, 6);
    assert_eq!(out.metrics.totals.ticks, 6);
    assert_eq!(snap.transcript.len(), 12);
    assert!(snap
        .transcript
        .iter()
        .any(|s| s.text.contains("for the past month")));
    assert_eq!(
        snap.extracted.problem.as_deref(),
        Some("Lower back pain for the past month")
    );
    for (k, v) in [
        ("duration", "past month"),
        ("location", "lower back"),
        ("pain_type", "dull and achy"),
    ] {
        assert_eq!(
            snap.extracted.info.get(k).map(String::as_str),
            Some(v),
            "{k}"
        );
    }
    for s in ["Physiotherapy", "Imaging"] {
        assert!(snap.extracted.solutions.iter().any(|x| x == s), "{s}");
    }
    assert!(!snap.insights.is_empty());
    // newest first
    assert!(snap
        .insights
        .windows(2)
        .all(|w| w[0].created_tick >= w[1].created_tick));
    let kb = engine.knowledge_base();
    for insight in &snap.insights {
        assert!(!insight.sources.is_empty());
        for src in &insight.sources {
            let rec = kb.index.get(&src.chunk_id).expect("cited chunk is indexed");
            assert_eq!(rec.source_path, src.source_path);
        }
    }
    let reliever = snap
        .insights
        .iter()
        .find(|i| i.text.contains("Tylenol 2 or 3"))
        .expect("pain reliever insight");
    assert!(reliever.sources[0]
        .source_path
        .starts_with("health_data/canada_data/text_data/chunk_1/"));
    // the insight citing an unretrieved chunk and the case-variant duplicate are dropped
    assert_eq!(out.metrics.totals.insights, 7);
    assert_eq!(snap.insights.len(), 7);
}

#[test]
fn replay_totals_match_ticks() {
    let script = load_script(fixtures().join("scripts/lower_back_pain.json")).unwrap();
    let (engine, _) = fixture_engine(20_000);
    let m = run_replay(&script, &engine, &opts("r1")).unwrap().metrics;
    assert_eq!(m.totals, ReplayTotals::from_ticks(&m.ticks));
    assert_eq!(m.totals.extraction_changes, 6);
    assert_eq!(m.turns_submitted, 12);
    assert_eq!(m.wall_time_ms, 120_000);
    // every turn went through mock transcription inside some tick window
    assert_eq!(m.session_usage, m.totals.usage);
}

#[test]
fn replay_is_deterministic() {
    let script = load_script(fixtures().join("scripts/lower_back_pain.json")).unwrap();
    let runs: Vec<_> = (0..3)
        .map(|_| {
            let (engine, _) = fixture_engine(20_000);
            let out = run_replay(&script, &engine, &opts("same")).unwrap();
            (
                serde_json::to_string(&out.metrics).unwrap(),
                serde_json::to_string(&*out.snapshot).unwrap(),
            )
        })
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn concurrent_replays_on_one_engine() {
    let script = load_script(fixtures().join("scripts/lower_back_pain.json")).unwrap();
    let (engine, _) = fixture_engine(20_000);
    let engine = Arc::new(engine);
    let handles: Vec<_> = (0..4)
        .map(|i| {
            let engine = engine.clone();
            let script = script.clone();
            std::thread::spawn(move || {
                run_replay(&script, &engine, &opts(&format!("c{i}")))
                    .unwrap()
                    .metrics
            })
        })
        .collect();
    let metrics: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(metrics.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(engine.session_ids().len(), 4);
}

#[test]
fn speed_scales_the_timeline() {
    let script = load_script(fixtures().join("scripts/lower_back_pain.json")).unwrap();
    let (engine, _) = fixture_engine(2_000);
    let fast = ReplayOptions {
        speed: 10.0,
        ..opts("fast")
    };
    let m = run_replay(&script, &engine, &fast).unwrap().metrics;
    assert_eq!(m.wall_time_ms, 12_000);
    assert_eq!(m.totals.ticks, 6);
}

#[test]
fn wall_clock_replay_tracks_real_time() {
    let mut script = load_script(fixtures().join("scripts/span_10s.json")).unwrap();
    script.duration_ms = Some(2_000);
    let (engine, _) = fixture_engine(20_000);
    let wall = ReplayOptions {
        speed: 10.0,
        clock: ClockKind::Wall,
        ..opts("wall")
    };
    let m = run_replay(&script, &engine, &wall).unwrap().metrics;
    let expected = 200.0;
    let err = (m.wall_time_ms as f64 - expected).abs() / expected;
    assert!(err <= 0.2, "wall time {} vs {expected}", m.wall_time_ms);
}

#[test]
fn ungrounded_fixture_yields_no_insights() {
    let script = load_script(fixtures().join("scripts/lower_back_pain.json")).unwrap();
    let mut chat = fixture_chat();
    for tick in 1..=6 {
        chat = chat.with_response(
            "insight",
            format!("backpain-t{tick}"),
            r#"{"insights":[{"text":"Invented advice.","source_ids":["0000#00000"]}]}"#,
        );
    }
    let (engine, _) = engine_with(Arc::new(chat), 20_000);
    let out = run_replay(&script, &engine, &opts("neg")).unwrap();
    assert_eq!(out.metrics.totals.insights, 0);
    assert!(out.snapshot.insights.is_empty());
    assert_eq!(out.metrics.totals.extraction_changes, 6);
}

#[test]
fn errors_before_the_first_turn_have_no_partial_metrics() {
    let script = load_script(fixtures().join("scripts/lower_back_pain.json")).unwrap();
    let (engine, _) = fixture_engine(20_000);
    run_replay(&script, &engine, &opts("dup")).unwrap();
    let failure = run_replay(&script, &engine, &opts("dup")).unwrap_err();
    assert!(matches!(failure.error, Error::DuplicateSession(_)));
    assert!(failure.partial.is_none());

    let bad = ReplayOptions {
        speed: 0.0,
        ..opts("zero")
    };
    assert!(matches!(
        run_replay(&script, &engine, &bad).unwrap_err().error,
        Error::Config(_)
    ));
}

#[test]
fn metrics_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let script = load_script(fixtures().join("scripts/lower_back_pain.json")).unwrap();
    let (engine, _) = fixture_engine(20_000);
    let m = run_replay(&script, &engine, &opts("io")).unwrap().metrics;
    let path = dir.path().join("metrics.json");
    export_metrics(&m, &path).unwrap();
    let back = load_metrics(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.totals, ReplayTotals::from_ticks(&back.ticks));

    let raw: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for field in ["ticks", "totals", "wall_time_ms", "session_usage"] {
        assert!(raw.get(field).is_some(), "{field}");
    }

    let mut empty = m.clone();
    empty.ticks.clear();
    empty.totals = ReplayTotals::from_ticks(&empty.ticks);
    export_metrics(&empty, &path).unwrap();
    let back = load_metrics(&path).unwrap();
    assert_eq!(back.totals.usage.call_count, 0);
    assert_eq!(back.totals.ticks, 0);

    assert!(matches!(
        export_metrics(&m, dir.path().join("missing/metrics.json")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn medication_script_runs_tool_loop() {
    let script = load_script(fixtures().join("scripts/medication_review.json")).unwrap();
    let (engine, _) = engine_with(
        Arc::new(MockChat::from_dir(fixtures().join("mock")).unwrap()),
        20_000,
    );
    let out = run_replay(&script, &engine, &opts("meds")).unwrap();
    let m = &out.metrics;
    assert_eq!(m.totals.ticks, 2);
    assert_eq!(m.totals.insights, 1);
    assert!(m.ticks[0].extraction_changed && !m.ticks[1].extraction_changed);
    assert!(out.snapshot.insights[0].text.contains("3.5 days"));
}

#[test]
fn finishing_mid_replay_stops_ticks() {
    let script = load_script(fixtures().join("scripts/span_600s.json")).unwrap();
    let (engine, _) = fixture_engine(20);
    let engine = Arc::new(engine);
    let wall = ReplayOptions {
        speed: 1000.0,
        clock: ClockKind::Wall,
        ..opts("mid")
    };
    let runner = {
        let engine = engine.clone();
        std::thread::spawn(move || run_replay(&script, &engine, &wall))
    };
    std::thread::sleep(std::time::Duration::from_millis(150));
    let frozen = engine.session("mid").unwrap().finish();
    let failure = runner.join().unwrap().unwrap_err();
    assert!(matches!(failure.error, Error::SessionFinished(_)));
    let partial = failure.partial.expect("partial metrics");
    assert_eq!(partial.totals.ticks as u64, frozen.tick_count);
    assert!(frozen.tick_count < 30);
    std::thread::sleep(std::time::Duration::from_millis(60));
    assert_eq!(
        engine.session("mid").unwrap().snapshot().tick_count,
        frozen.tick_count
    );
}
