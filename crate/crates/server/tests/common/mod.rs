#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use http_body_util::BodyExt;
use kgchain_core::gateway::{Gateway, MockBackend};
use kgchain_core::synthetic::{planted_fixture, write_dataset, PlantedFixture};
use kgchain_server::{router, AppState, ServerConfig};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

pub struct Harness {
    pub state: AppState,
    pub dir: TempDir,
    pub mock: Arc<MockBackend>,
    pub fixture: PlantedFixture,
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.bytes)))
    }

    pub fn data(&self) -> Value {
        self.json()["data"].clone()
    }
}

pub fn gateway(mock: &Arc<MockBackend>) -> Gateway {
    Gateway::new(Arc::clone(mock) as Arc<dyn kgchain_core::gateway::Backend>).with_retries(2, Duration::from_millis(1))
}

impl Harness {
    /// Server over a fresh data directory holding the planted fixture as
    /// dataset "planted", loaded and ready.
    pub async fn planted(seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let fixture = planted_fixture(seed);
        let mock = Arc::new(MockBackend::new(0));
        let state = AppState::open(ServerConfig::new(dir.path()), gateway(&mock))
            .await
            .unwrap();
        let h = Self {
            state,
            dir,
            mock,
            fixture,
        };
        let files = dataset_dir(&h.dir);
        let p = write_dataset(&files, &h.fixture.graph, &h.fixture.store, 1).unwrap();
        let r = h
            .call(
                Method::POST,
                "/datasets",
                Some(json!({
                    "id": "planted",
                    "entities": p.entities,
                    "triplets": p.triplets,
                    "predictions": p.predictions,
                    "embedding": p.embedding,
                })),
            )
            .await;
        assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.json());
        assert_eq!(h.wait_ready("planted").await, "ready");
        h
    }

    /// A second server over the same data directory (a restart).
    pub async fn reopen(&self) -> AppState {
        AppState::open(ServerConfig::new(self.dir.path()), gateway(&self.mock))
            .await
            .unwrap()
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> Reply {
        send(&self.state, method, uri, body, &[]).await
    }

    pub async fn call_with(&self, method: Method, uri: &str, body: Option<Value>, headers: &[(&str, &str)]) -> Reply {
        send(&self.state, method, uri, body, headers).await
    }

    pub async fn wait_ready(&self, id: &str) -> String {
        wait_ready(&self.state, id).await
    }
}

pub fn dataset_dir(dir: &TempDir) -> std::path::PathBuf {
    let p = dir.path().join("input");
    std::fs::create_dir_all(&p).unwrap();
    p
}

pub async fn send(state: &AppState, method: Method, uri: &str, body: Option<Value>, headers: &[(&str, &str)]) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let req = match body {
        Some(v) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, bytes }
}

pub async fn wait_ready(state: &AppState, id: &str) -> String {
    for _ in 0..2000 {
        let r = send(state, Method::GET, &format!("/datasets/{id}"), None, &[]).await;
        let status = r.data()["status"].as_str().unwrap_or_default().to_owned();
        if status != "loading" {
            return status;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    panic!("dataset {id} still loading");
}
