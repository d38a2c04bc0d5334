#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratattn_cli::service::{self, AppState};
use ratattn_core::corpus::{Document, Label};
use ratattn_core::explain::{extract_top_k, random_explanations, Explanation};
use ratattn_core::harness::{
    anonymize_ids, build_gold_hits, build_hits, save_hits, Choice, DisplayChoice, Hit,
};
use ratattn_core::models::Prediction;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub fn annotated_doc(id: &str, rng: &mut ChaCha8Rng) -> Document {
    let n = rng.gen_range(8..14);
    Document::new(
        id,
        if rng.gen() { Label::Pos } else { Label::Neg },
        (0..n).map(|i| (format!("sentence {i} of {id}"), Some(i % 3 == 0))),
    )
    .unwrap()
}

fn scored(docs: &[Document], tag: &str, rng: &mut ChaCha8Rng) -> Vec<Explanation> {
    docs.iter()
        .map(|d| {
            let p = Prediction {
                doc_id: d.id.clone(),
                label: d.label,
                probabilities: [0.5, 0.5],
                sentence_weights: (0..d.len()).map(|_| rng.gen()).collect(),
            };
            extract_top_k(&p, 3, tag).unwrap()
        })
        .collect()
}

/// RA-vs-AT and AT-vs-random hits over `docs` documents plus `gold` gold
/// questions, with opaque ids.
pub fn study_hits(docs: usize, gold: usize, seed: u64) -> Vec<Hit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regular: Vec<Document> = (0..docs)
        .map(|i| annotated_doc(&format!("t{i}"), &mut rng))
        .collect();
    let holdout: Vec<Document> = (0..gold)
        .map(|i| annotated_doc(&format!("h{i}"), &mut rng))
        .collect();
    let refs: Vec<&Document> = regular.iter().collect();
    let ra = scored(&regular, "ra-cnn", &mut rng);
    let at = scored(&regular, "at-cnn", &mut rng);
    let rnd = random_explanations(&refs, 3, seed).unwrap();
    let mut hits = build_gold_hits(&holdout.iter().collect::<Vec<_>>(), seed, gold).unwrap();
    hits.extend(build_hits(&refs, &ra, &at, seed + 1).unwrap());
    hits.extend(build_hits(&refs, &at, &rnd, seed + 2).unwrap());
    anonymize_ids(&mut hits, seed);
    hits
}

pub fn write_hits(dir: &Path, hits: &[Hit]) -> (PathBuf, PathBuf) {
    let hits_path = dir.join("hits.jsonl");
    save_hits(hits, &hits_path).unwrap();
    (hits_path, dir.join("judgments.jsonl"))
}

pub struct Server {
    pub base: String,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl Server {
    pub async fn start(hits: &Path, log: &Path) -> Server {
        let state: Arc<AppState> = AppState::open(hits, log).unwrap();
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(service::serve(listener, state, async {
            let _ = rx.await;
        }));
        Server {
            base,
            stop: Some(tx),
            task,
        }
    }

    pub async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.task.await.unwrap().unwrap();
    }
}

pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    pub fn new(server: &Server) -> Client {
        Client {
            http: reqwest::Client::new(),
            base: server.base.clone(),
        }
    }

    /// Status and body of `GET /api/hits/next`.
    pub async fn next(&self, worker: &str) -> (u16, Option<Value>) {
        let r = self
            .http
            .get(format!("{}/api/hits/next", self.base))
            .query(&[("worker_id", worker)])
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        let body = r.bytes().await.unwrap();
        (
            status,
            (!body.is_empty()).then(|| serde_json::from_slice(&body).unwrap()),
        )
    }

    pub async fn post_raw(&self, body: Value) -> (u16, Value) {
        let r = self
            .http
            .post(format!("{}/api/judgments", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        let text = r.text().await.unwrap();
        (
            status,
            serde_json::from_str(&text).unwrap_or(Value::String(text)),
        )
    }

    pub async fn judge(&self, hit_id: &str, worker: &str, choice: DisplayChoice) -> u16 {
        self.post_raw(json!({ "hit_id": hit_id, "worker_id": worker, "choice": choice }))
            .await
            .0
    }

    pub async fn results(&self) -> Value {
        let r = self
            .http
            .get(format!("{}/api/results", self.base))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status().as_u16(), 200);
        r.json().await.unwrap()
    }
}

/// The choice a scripted honest judge makes on the `nth` trusted
/// judgment of a regular hit. With `three_way`, every fifth hit opens
/// with a three-way split and so needs a fourth judge; otherwise three
/// judges always settle it.
pub fn scripted(hit_no: usize, nth: usize, three_way: bool) -> Choice {
    const PLANS: [[Choice; 4]; 5] = [
        [Choice::A, Choice::B, Choice::A, Choice::A],
        [Choice::B, Choice::B, Choice::A, Choice::A],
        [Choice::A, Choice::Equal, Choice::A, Choice::B],
        [Choice::Equal, Choice::Equal, Choice::Equal, Choice::A],
        [Choice::A, Choice::A, Choice::A, Choice::A],
    ];
    if three_way && hit_no.is_multiple_of(5) {
        return [Choice::A, Choice::B, Choice::Equal, Choice::A][nth];
    }
    PLANS[hit_no % 5][nth]
}

/// Majority the script produces for a hit, either way.
pub fn scripted_outcome(hit_no: usize) -> Choice {
    match hit_no % 5 {
        0 | 2 | 4 => Choice::A,
        1 => Choice::B,
        _ => Choice::Equal,
    }
}

pub struct Judges<'a> {
    /// Answer gold questions correctly and regular hits from the script.
    pub honest: &'a [&'a str],
    /// Answer their gold question wrongly.
    pub cheats: &'a [&'a str],
    pub three_way: bool,
}

/// Drives judges through the HTTP API until nobody gets another hit, or
/// until `budget` judgments were posted. `answered` counts honest
/// judgments per hit and carries over between calls.
pub async fn drive(
    client: &Client,
    hits: &[Hit],
    judges: &Judges<'_>,
    budget: usize,
    answered: &mut HashMap<String, usize>,
) -> usize {
    let by_id: HashMap<&str, (usize, &Hit)> = hits
        .iter()
        .enumerate()
        .map(|(i, h)| (h.hit_id.as_str(), (i, h)))
        .collect();
    let mut posted = 0;
    loop {
        let mut progressed = false;
        for &w in judges.honest.iter().chain(judges.cheats) {
            if posted == budget {
                return posted;
            }
            let (status, view) = client.next(w).await;
            if status == 204 {
                continue;
            }
            assert_eq!(status, 200);
            let id = view.unwrap()["hit_id"].as_str().unwrap().to_string();
            let (no, hit) = by_id[id.as_str()];
            let choice = if hit.is_gold {
                let right = hit.displayed(Choice::A);
                if judges.honest.contains(&w) {
                    right
                } else if right == DisplayChoice::Left {
                    DisplayChoice::Right
                } else {
                    DisplayChoice::Left
                }
            } else {
                let nth = answered.entry(id.clone()).or_default();
                let c = hit.displayed(scripted(no, *nth, judges.three_way));
                *nth += 1;
                c
            };
            assert_eq!(client.judge(&id, w, choice).await, 201, "{w} on {id}");
            posted += 1;
            progressed = true;
        }
        if !progressed {
            return posted;
        }
    }
}

/// Count of regular hits per (first, second) comparison in hit order,
/// with the scripted outcome tallied as (first, second, equal).
pub fn expected_counts(hits: &[Hit]) -> Vec<(String, String, [usize; 3])> {
    let mut out: Vec<(String, String, [usize; 3])> = Vec::new();
    for (no, h) in hits.iter().enumerate().filter(|(_, h)| !h.is_gold) {
        let (a, b) = h.comparison();
        let (a, b) = (a.as_str().to_string(), b.as_str().to_string());
        let slot = match out.iter().position(|(x, y, _)| *x == a && *y == b) {
            Some(i) => i,
            None => {
                out.push((a, b, [0; 3]));
                out.len() - 1
            }
        };
        let k = match scripted_outcome(no) {
            Choice::A => 0,
            Choice::B => 1,
            Choice::Equal => 2,
        };
        out[slot].2[k] += 1;
    }
    out
}

/// Prepares a synthetic corpus under `root` and trains every model kind
/// with a reduced architecture.
pub fn small_run(
    root: &Path,
    documents: usize,
    seeds: &[u64],
    epochs: usize,
) -> Vec<ratattn_cli::pipeline::SeedRun> {
    use ratattn_cli::pipeline::{prepare, train, CorpusSource, PrepareOptions, TrainOptions};
    use ratattn_core::models::{Architecture, ModelKind, TrainConfig};
    let mut opts = PrepareOptions::new(CorpusSource::Synthetic { documents, seed: 5 });
    opts.gold_holdout = 12;
    prepare(root, &opts).unwrap();
    let train_opts = TrainOptions {
        kinds: ModelKind::ALL.to_vec(),
        seeds: seeds.to_vec(),
        arch: Architecture {
            embed_dim: 12,
            attention_dim: 10,
            widths: vec![2, 3],
            feature_maps: 6,
            ..Architecture::default()
        },
        template: TrainConfig {
            epochs,
            rationale_epochs: 1,
            learning_rate: 5e-3,
            ..TrainConfig::new(ModelKind::DocCnn)
        },
        embeddings: None,
    };
    train(root, &train_opts, |_, _, _| {}).unwrap()
}
