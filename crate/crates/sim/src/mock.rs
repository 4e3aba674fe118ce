//! Bundled mock servers for tests and offline robustness checks: an LLM
//! endpoint speaking the chat-completions wire protocol with scriptable
//! reply quality, and a tiny note-keeping target app with cookie-based
//! ownership.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use tiny_http::{Header, Response, Server};

fn json_header() -> Header {
    Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header is valid")
}

/// How the mock LLM answers plan requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmScript {
    /// Every plan request gets a schema-valid plan.
    Valid,
    /// The first plan request gets prose; every later one gets a valid plan.
    RetryThenValid,
    /// Every plan request gets prose that never parses.
    AlwaysGarbage,
}

/// Chat-completions mock. Behavior-description requests always get a
/// sentence; plan requests follow the configured script. The valid plans it
/// emits target [`MockTarget`] routes, so the two mocks compose into a full
/// offline generation cycle.
pub struct MockLlm {
    base_url: String,
    server: Arc<Server>,
    plan_requests: Arc<AtomicU64>,
    handle: Option<JoinHandle<()>>,
}

const BENIGN_PLAN: &str = r#"[
  {"method": "GET", "path": "/api/notes", "intent": "list own notes", "identity": "own"},
  {"method": "GET", "path": "/api/notes/1", "intent": "open a note they own", "identity": "own"},
  {"method": "GET", "path": "/api/profile", "intent": "check profile", "identity": "own"}
]"#;

const MALICIOUS_PLAN: &str = r#"[
  {"method": "GET", "path": "/api/notes/4", "intent": "probe another user's note", "identity": "own"},
  {"method": "GET", "path": "/api/notes/4", "intent": "read it with the stolen cookie", "identity": "foreign"},
  {"method": "GET", "path": "/api/notes", "intent": "blend into normal browsing", "identity": "own"}
]"#;

const GARBAGE: &str =
    "Sure! First the user should probably log in, then maybe look around. Hope this helps.";

impl MockLlm {
    pub fn spawn(script: LlmScript) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind mock llm"));
        let port = server.server_addr().to_ip().expect("tcp listener").port();
        let base_url = format!("http://127.0.0.1:{port}");
        let plan_requests = Arc::new(AtomicU64::new(0));
        let handle = {
            let server = server.clone();
            let plan_requests = plan_requests.clone();
            std::thread::spawn(move || {
                while let Ok(mut request) = server.recv() {
                    let mut body = String::new();
                    let _ = request.as_reader().read_to_string(&mut body);
                    let content = reply_content(&body, script, &plan_requests);
                    let payload = serde_json::json!({
                        "choices": [{"message": {"role": "assistant", "content": content}}],
                        "usage": {"total_tokens": 17}
                    });
                    let response = Response::from_string(payload.to_string())
                        .with_status_code(200)
                        .with_header(json_header());
                    let _ = request.respond(response);
                }
            })
        };
        Self { base_url, server, plan_requests, handle: Some(handle) }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Plan requests served so far (behavior requests are not counted).
    pub fn plan_requests(&self) -> u64 {
        self.plan_requests.load(Ordering::SeqCst)
    }
}

fn reply_content(body: &str, script: LlmScript, plan_requests: &AtomicU64) -> String {
    let parsed: serde_json::Value = serde_json::from_str(body).unwrap_or_default();
    let messages = parsed["messages"].as_array().cloned().unwrap_or_default();
    let all_text: String = messages
        .iter()
        .map(|m| m["content"].as_str().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");
    let is_plan_request = all_text.contains("JSON array");
    if !is_plan_request {
        return "Browse the notes list and read entries owned by the account.".to_string();
    }
    let nth = plan_requests.fetch_add(1, Ordering::SeqCst);
    let valid = match script {
        LlmScript::Valid => true,
        LlmScript::RetryThenValid => nth > 0,
        LlmScript::AlwaysGarbage => false,
    };
    if !valid {
        return GARBAGE.to_string();
    }
    if all_text.contains("ATTACKER") {
        MALICIOUS_PLAN.to_string()
    } else {
        BENIGN_PLAN.to_string()
    }
}

impl Drop for MockLlm {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

/// Whether [`MockTarget`] enforces resource ownership.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// Cross-owner access is denied with 403 (the BAC control works).
    Enforcing,
    /// Cross-owner access succeeds with 200 (the app is vulnerable).
    Vulnerable,
}

/// A minimal note-keeping app: user A owns notes 1–3, user B owns notes
/// 4–6. `/api/notes` lists, `/api/notes/{id}` reads one, `/api/profile` is
/// per-session. No cookie → 401, unknown note → 404, foreign owner → per
/// [`TargetMode`]. A stolen cookie is indistinguishable from its owner —
/// which is exactly the attack the corpus needs to contain.
pub struct MockTarget {
    base_url: String,
    server: Arc<Server>,
    requests: Arc<AtomicU64>,
    handle: Option<JoinHandle<()>>,
}

impl MockTarget {
    pub fn spawn(mode: TargetMode, cookie_a: &str, cookie_b: &str) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind mock target"));
        let port = server.server_addr().to_ip().expect("tcp listener").port();
        let base_url = format!("http://127.0.0.1:{port}");
        let requests = Arc::new(AtomicU64::new(0));
        let handle = {
            let server = server.clone();
            let requests = requests.clone();
            let cookie_a = cookie_a.to_string();
            let cookie_b = cookie_b.to_string();
            std::thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    requests.fetch_add(1, Ordering::SeqCst);
                    let status = route(&request, mode, &cookie_a, &cookie_b);
                    let response = Response::from_string(format!("{{\"status\":{status}}}"))
                        .with_status_code(status)
                        .with_header(json_header());
                    let _ = request.respond(response);
                }
            })
        };
        Self { base_url, server, requests, handle: Some(handle) }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }
}

fn session_cookie(request: &tiny_http::Request) -> Option<String> {
    request
        .headers()
        .iter()
        .find(|h| h.field.equiv("Cookie"))
        .and_then(|h| {
            h.value
                .as_str()
                .split(';')
                .filter_map(|pair| pair.trim().strip_prefix("session="))
                .next()
                .map(str::to_string)
        })
}

fn route(request: &tiny_http::Request, mode: TargetMode, cookie_a: &str, cookie_b: &str) -> u16 {
    let path = request.url().split('?').next().unwrap_or("/");
    let user = match session_cookie(request) {
        Some(c) if c == cookie_a => 'a',
        Some(c) if c == cookie_b => 'b',
        _ => return 401,
    };
    match path {
        "/api/notes" | "/api/profile" => 200,
        _ => match path.strip_prefix("/api/notes/").and_then(|id| id.parse::<u32>().ok()) {
            Some(id @ 1..=6) => {
                let owner = if id <= 3 { 'a' } else { 'b' };
                if owner == user || mode == TargetMode::Vulnerable {
                    200
                } else {
                    403
                }
            }
            _ => 404,
        },
    }
}

impl Drop for MockTarget {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}
