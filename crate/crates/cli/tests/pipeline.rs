mod common;

use std::collections::{BTreeMap, HashSet};
use std::process::Command;

use common::small_run;
use ratattn_cli::manifest::RunManifest;
use ratattn_cli::pipeline::{
    aggregate, both_correct_ids, eval_acc, explain, gen_hits, overlap, selected_dev_accuracy,
    GenHitsOptions, Prepared,
};
use ratattn_core::explain::load_explanations;
use ratattn_core::harness::{
    load_hits, summarize, tabulate, Choice, Judgment, JudgmentLog, Resolution, SourceTag, Study,
};
use ratattn_core::models::{evaluate_accuracy, ModelCheckpoint, ModelKind};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ratattn"))
}

#[test]
fn pipeline_from_corpus_to_results() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let runs = small_run(root, 160, &[1, 2], 3);
    let prepared = Prepared::load(root).unwrap();
    let test = prepared.test_docs().unwrap();
    assert_eq!(prepared.split.gold_holdout.len(), 12);

    // The selected checkpoint is the seed with the best dev accuracy.
    assert_eq!(runs.len(), 6);
    for kind in ModelKind::ALL {
        let best = runs
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.dev_accuracy.unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let chosen = prepared.checkpoint(root, kind).unwrap();
        assert_eq!(selected_dev_accuracy(&chosen), Some(best), "{kind}");
    }

    let rows = eval_acc(root, &ModelKind::ALL).unwrap();
    for (kind, acc) in &rows {
        let direct = evaluate_accuracy(&prepared.checkpoint(root, *kind).unwrap(), &test).unwrap();
        assert_eq!(*acc, direct);
        assert_eq!(acc.total, test.len());
    }

    let sources: Vec<String> = ["ra-cnn", "at-cnn", "random"].map(String::from).to_vec();
    explain(root, &sources, 3, 17).unwrap();
    let manifest = RunManifest::load(root).unwrap();
    for tag in &sources {
        let expls = load_explanations(manifest.explanation(root, tag).unwrap()).unwrap();
        let ids: Vec<&str> = expls.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(
            ids,
            prepared
                .split
                .test
                .iter()
                .map(String::as_str)
                .collect::<Vec<_>>()
        );
        assert!(expls.iter().all(|e| e.model == *tag && e.ranked.len() == 3));
    }

    let both = both_correct_ids(root, &prepared).unwrap();
    let ra = ModelCheckpoint::load(manifest.checkpoint(root, "ra-cnn").unwrap()).unwrap();
    let at = ModelCheckpoint::load(manifest.checkpoint(root, "at-cnn").unwrap()).unwrap();
    let oracle: Vec<String> = test
        .iter()
        .filter(|d| {
            ra.predict(d).unwrap().label == d.label && at.predict(d).unwrap().label == d.label
        })
        .map(|d| d.id.clone())
        .collect();
    assert_eq!(both, oracle);
    assert!(!both.is_empty());

    assert_eq!(
        overlap(root, "ra-cnn", "at-cnn", false).unwrap().documents,
        test.len()
    );
    assert_eq!(
        overlap(root, "ra-cnn", "at-cnn", true).unwrap().documents,
        both.len()
    );
    assert!(root.join("results/overlap-ra-cnn-at-cnn.json").exists());

    std::fs::write(root.join(&manifest.judgments), "").unwrap();
    let opts = GenHitsOptions {
        pairs: vec![
            ("ra-cnn".into(), "at-cnn".into()),
            ("at-cnn".into(), "random".into()),
        ],
        seed: 7,
        gold_count: 5,
        include_misclassified: false,
    };
    let generated = gen_hits(root, &opts).unwrap();
    assert!(
        !root.join(&manifest.judgments).exists(),
        "gen-hits starts a fresh log"
    );
    assert_eq!(generated.documents, both.len());
    assert_eq!(generated.gold, 5);
    assert_eq!(generated.hits.len(), 5 + 2 * both.len());
    let hits = load_hits(root.join("hits.jsonl")).unwrap();
    assert_eq!(hits, generated.hits);
    let holdout: HashSet<&str> = prepared
        .split
        .gold_holdout
        .iter()
        .map(String::as_str)
        .collect();
    let study_docs: HashSet<&str> = both.iter().map(String::as_str).collect();
    for h in &hits {
        if h.is_gold {
            assert!(holdout.contains(h.doc_id.as_str()));
        } else {
            assert!(study_docs.contains(h.doc_id.as_str()));
        }
    }
    let wide = gen_hits(
        root,
        &GenHitsOptions {
            include_misclassified: true,
            ..opts
        },
    )
    .unwrap();
    assert_eq!(wide.documents, test.len());

    // Scripted judgments: three trusted judges agree per hit.
    let hits = load_hits(root.join("hits.jsonl")).unwrap();
    let mut study = Study::new(hits.clone()).unwrap();
    let (mut log, old) = JudgmentLog::open(root.join(&manifest.judgments)).unwrap();
    assert!(old.is_empty());
    let gold: Vec<_> = hits.iter().filter(|h| h.is_gold).collect();
    let mut ts = 0;
    let mut put = |study: &mut Study, log: &mut JudgmentLog, hit: &str, w: &str, choice: Choice| {
        ts += 1;
        let j = Judgment {
            hit_id: hit.into(),
            worker_id: w.into(),
            choice,
            ts,
        };
        study.record(j.clone()).unwrap();
        log.append(&j).unwrap();
    };
    for w in ["a", "b", "c"] {
        put(&mut study, &mut log, &gold[0].hit_id, w, Choice::A);
    }
    let mut expected: BTreeMap<(SourceTag, SourceTag), Vec<Resolution>> = BTreeMap::new();
    for (i, h) in hits.iter().filter(|h| !h.is_gold).enumerate() {
        let c = Choice::ALL[i % 3];
        for w in ["a", "b", "c"] {
            put(&mut study, &mut log, &h.hit_id, w, c);
        }
        expected
            .entry(h.comparison())
            .or_default()
            .push(Resolution::Resolved(c));
    }
    drop(log);

    let summary = aggregate(root, None).unwrap();
    assert_eq!(summary, summarize(&study));
    for s in &summary {
        let direct = tabulate(&expected[&(s.first, s.second)], s.first, s.second).unwrap();
        assert_eq!(s.table.as_ref(), Some(&direct));
    }
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("results/results.json")).unwrap())
            .unwrap();
    assert_eq!(written, serde_json::to_value(&summary).unwrap());

    let out = bin()
        .arg("--data-dir")
        .arg(root)
        .arg("aggregate")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("RA-CNN vs AT-CNN"));
    assert!(text.contains(" RA-CNN | AT-CNN | Equal  "));
    assert!(text.contains("AT-CNN vs Random"));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--data-dir")
        .arg(dir.path())
        .arg("eval-acc")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: no run manifest"), "{err}");

    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(2)
    );
    assert_eq!(
        bin().args(["prepare"]).output().unwrap().status.code(),
        Some(2)
    );
    let out = bin()
        .arg("--data-dir")
        .arg(dir.path())
        .args(["prepare", "--synthetic", "40", "--gold-holdout", "4"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = bin()
        .arg("--data-dir")
        .arg(dir.path())
        .args(["explain", "--model", "lstm"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .arg("--data-dir")
        .arg(dir.path())
        .arg("serve")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("gen-hits"));
}

#[test]
fn serve_reports_a_busy_port() {
    let dir = tempfile::tempdir().unwrap();
    let hits = common::study_hits(2, 1, 4);
    common::write_hits(dir.path(), &hits);
    let prep = bin()
        .arg("--data-dir")
        .arg(dir.path())
        .args(["prepare", "--synthetic", "40", "--gold-holdout", "4"])
        .output()
        .unwrap();
    assert!(prep.status.success());
    let mut m = RunManifest::load(dir.path()).unwrap();
    m.hits = Some("hits.jsonl".into());
    m.save(dir.path()).unwrap();

    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = bin()
        .arg("--data-dir")
        .arg(dir.path())
        .args(["serve", "--port", &port])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("cannot listen"));
}
