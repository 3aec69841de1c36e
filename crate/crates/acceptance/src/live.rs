//! A real server on an ephemeral port, driven over HTTP.

use std::io::{BufRead, BufReader};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ainsight_core::pipeline::{Engine, SimClock};
use ainsight_server::{serve, AppState};
use serde_json::Value;

pub struct LiveServer {
    pub base: String,
    pub clock: Arc<SimClock>,
    agent: ureq::Agent,
}

impl LiveServer {
    /// Serves `engine` (already on `clock`) from a background runtime. Tick
    /// drivers poll every few milliseconds so simulated time is picked up
    /// quickly.
    pub fn start(engine: Engine, clock: Arc<SimClock>) -> LiveServer {
        let state = AppState::new(Some(Arc::new(engine))).with_poll(Duration::from_millis(5));
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().expect("runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
                    .await
                    .expect("bind");
                tx.send(listener.local_addr().expect("addr"))
                    .expect("send addr");
                serve(listener, state, None).await.expect("serve");
            });
        });
        let addr = rx.recv().expect("server started");
        LiveServer {
            base: format!("http://{addr}"),
            clock,
            agent: ureq::Agent::config_builder()
                .http_status_as_error(false)
                .build()
                .into(),
        }
    }

    pub fn get(&self, path: &str) -> Result<(u16, Value), String> {
        let mut r = self
            .agent
            .get(&format!("{}{path}", self.base))
            .call()
            .map_err(|e| e.to_string())?;
        let status = r.status().as_u16();
        Ok((status, r.body_mut().read_json().map_err(|e| e.to_string())?))
    }

    pub fn post(&self, path: &str, body: Option<Value>) -> Result<(u16, Value), String> {
        let req = self.agent.post(&format!("{}{path}", self.base));
        let mut r = match body {
            Some(b) => req.send_json(b),
            None => req.send_empty(),
        }
        .map_err(|e| e.to_string())?;
        let status = r.status().as_u16();
        Ok((status, r.body_mut().read_json().map_err(|e| e.to_string())?))
    }

    /// Parsed `data:` payloads of the session's event stream, in arrival
    /// order. Dropping the iterator disconnects.
    pub fn events(&self, id: &str) -> Result<impl Iterator<Item = Value>, String> {
        let r = self
            .agent
            .get(&format!("{}/sessions/{id}/events", self.base))
            .call()
            .map_err(|e| e.to_string())?;
        if r.status().as_u16() != 200 {
            return Err(format!("events returned {}", r.status()));
        }
        let reader = BufReader::new(r.into_body().into_reader());
        Ok(reader.lines().map_while(Result::ok).filter_map(|line| {
            line.strip_prefix("data:")
                .and_then(|d| serde_json::from_str(d.trim()).ok())
        }))
    }

    /// Polls the snapshot until `pred` holds; gives up after ten seconds.
    pub fn wait_for(&self, id: &str, pred: impl Fn(&Value) -> bool) -> Result<Value, String> {
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            let (_, snap) = self.get(&format!("/sessions/{id}/snapshot"))?;
            if pred(&snap) {
                return Ok(snap);
            }
            if Instant::now() > deadline {
                return Err(format!("timed out waiting; last snapshot {snap}"));
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }
}
