#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tempfile::TempDir;

use progeval_core::corpus_io::{write_topics, write_trec_documents};
use progeval_core::synth::{generate, SynthSpec};
use progeval_service::AppState;

pub struct Server {
    pub base: String,
    pub client: Client,
    pub state: Arc<AppState>,
}

impl Server {
    pub async fn start(data_dir: Option<PathBuf>) -> Server {
        let state = AppState::new(data_dir, Default::default());
        state.restore();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        tokio::spawn(progeval_service::serve(listener, Arc::clone(&state)));
        Server { base, client: Client::new(), state }
    }

    pub async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let code = r.status();
        (code, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn send(&self, method: reqwest::Method, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self
            .client
            .request(method, format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        let code = r.status();
        (code, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.send(reqwest::Method::POST, path, body).await
    }

    pub async fn create(&self, config: Value) -> String {
        let (code, body) = self.post("/sessions", config).await;
        assert_eq!(code, StatusCode::CREATED, "{body}");
        body["session_id"].as_str().unwrap().to_string()
    }

    pub async fn wait_status(&self, id: &str, pred: impl Fn(&Value) -> bool) -> Value {
        let deadline = Instant::now() + Duration::from_secs(60);
        loop {
            let (code, v) = self.get(&format!("/sessions/{id}/status")).await;
            assert_eq!(code, StatusCode::OK);
            if pred(&v) {
                return v;
            }
            assert!(Instant::now() < deadline, "timed out, last status {v}");
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    }

    pub async fn wait_pending(&self, id: &str, version: u64) -> Value {
        self.wait_status(id, |v| v["pending_version"] == json!(version)).await
    }

    pub async fn decide(&self, id: &str, action: &str) -> (StatusCode, Value) {
        self.post(&format!("/sessions/{id}/index/decision"), json!({ "action": action })).await
    }

    /// Adopts every version until the session is complete.
    pub async fn run_to_completion(&self, id: &str) {
        loop {
            let v = self.wait_status(id, |v| v["status"] != "building").await;
            if v["status"] == "complete" {
                return;
            }
            self.decide(id, "update").await;
        }
    }
}

pub struct Collection {
    pub dir: TempDir,
}

impl Collection {
    pub fn new(n_docs: usize, n_topics: usize, seed: u64) -> Collection {
        let c = generate(&SynthSpec {
            n_docs,
            n_topics,
            relevant_per_topic: 5,
            vocab_size: 3000,
            seed,
            ..SynthSpec::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_trec_documents(&c.documents, std::fs::File::create(dir.path().join("corpus.trec")).unwrap()).unwrap();
        write_topics(&c.topics, std::fs::File::create(dir.path().join("topics.trec")).unwrap()).unwrap();
        c.qrels.write(std::fs::File::create(dir.path().join("qrels.txt")).unwrap()).unwrap();
        Collection { dir }
    }

    pub fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    pub fn config(&self, replay: bool) -> Value {
        json!({
            "corpus_path": self.path("corpus.trec"),
            "topics_path": self.path("topics.trec"),
            "qrels_path": self.path("qrels.txt"),
            "n_bundles": 10,
            "seed": 7,
            "stoplist_id": "lucene",
            "stemmer_id": "porter",
            "model_id": "bm25",
            "replay": { "enabled": replay, "speedup_factor": 1000.0 },
        })
    }
}
