//! Plan execution against a provisioned target, step 5 of the cycle.

use crate::plan::{IdentitySlot, PlannedSequence};
use crate::role::Role;
use bacalarm_core::detector::sha256_hex;
use bacalarm_core::traffic::{normalize_path, Method, TrafficRecord, TrafficSequence};
use std::time::Duration;

/// An executed plan: the labeled sequence plus whether any step failed at
/// the transport level. Incomplete sequences are excluded from training.
#[derive(Debug, Clone)]
pub struct ExecutedSequence {
    pub sequence: TrafficSequence,
    pub incomplete: bool,
}

/// Issues a plan's requests strictly in order, one [`TrafficRecord`] per
/// step. Holds exactly two credential slots — both researcher-registered
/// accounts on the provisioned target.
pub struct Executor {
    base_url: String,
    own_cookie: String,
    foreign_cookie: String,
    own_identity: String,
    foreign_identity: String,
    http: reqwest::blocking::Client,
}

fn to_reqwest_method(method: Method) -> reqwest::Method {
    match method {
        Method::GET => reqwest::Method::GET,
        Method::POST => reqwest::Method::POST,
        Method::PUT => reqwest::Method::PUT,
        Method::PATCH => reqwest::Method::PATCH,
        Method::DELETE => reqwest::Method::DELETE,
        Method::HEAD => reqwest::Method::HEAD,
        Method::OPTIONS => reqwest::Method::OPTIONS,
    }
}

impl Executor {
    /// `base_url` is the target root; the cookies are the two session
    /// credentials. Recorded identities are short hashes of the cookies —
    /// the corpus never carries raw credentials.
    pub fn new(
        base_url: impl Into<String>,
        own_cookie: impl Into<String>,
        foreign_cookie: impl Into<String>,
    ) -> Self {
        let own_cookie = own_cookie.into();
        let foreign_cookie = foreign_cookie.into();
        let own_identity = sha256_hex(own_cookie.as_bytes())[..16].to_string();
        let foreign_identity = sha256_hex(foreign_cookie.as_bytes())[..16].to_string();
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(10_000))
            .build()
            .expect("reqwest client construction cannot fail with these options");
        Self {
            base_url: base_url.into(),
            own_cookie,
            foreign_cookie,
            own_identity,
            foreign_identity,
            http,
        }
    }

    fn slot(&self, slot: IdentitySlot) -> (&str, &str) {
        match slot {
            IdentitySlot::Own => (&self.own_cookie, &self.own_identity),
            IdentitySlot::Foreign => (&self.foreign_cookie, &self.foreign_identity),
        }
    }

    /// Executes every step in order. A connection failure records the step
    /// with synthetic status 0 and marks the sequence incomplete, but later
    /// steps still run so records stay aligned 1:1 with plan steps.
    ///
    /// Timestamps are logical (`base_timestamp + step index`): execution
    /// order is the semantics; wall-clock jitter would only cost
    /// reproducibility.
    pub fn execute(
        &self,
        plan: &PlannedSequence,
        sequence_id: &str,
        base_timestamp: i64,
    ) -> ExecutedSequence {
        let mut records = Vec::with_capacity(plan.steps.len());
        let mut incomplete = false;
        for (i, step) in plan.steps.iter().enumerate() {
            let (cookie, identity) = self.slot(step.identity);
            let url = format!("{}{}", self.base_url.trim_end_matches('/'), step.path);
            let status = match self
                .http
                .request(to_reqwest_method(step.method), &url)
                .header("Cookie", format!("session={cookie}"))
                .send()
            {
                Ok(response) => response.status().as_u16(),
                Err(_) => {
                    incomplete = true;
                    0
                }
            };
            let (path, query_params) =
                normalize_path(&step.path).expect("validated plan paths are nonempty");
            records.push(TrafficRecord {
                timestamp: base_timestamp + i as i64,
                session_id: sequence_id.to_string(),
                identity: identity.to_string(),
                method: step.method,
                path,
                query_params,
                status,
                template_id: None,
            });
        }
        let exploit = plan.role == Role::Malicious
            && records
                .iter()
                .zip(&plan.steps)
                .any(|(r, s)| s.identity == IdentitySlot::Foreign && r.status == 200);
        let sequence = TrafficSequence::new(
            sequence_id,
            records,
            plan.role.into(),
            Some(plan.role.is_malicious()),
            Some(exploit),
        )
        .expect("plans are non-empty and labels are consistent by construction");
        ExecutedSequence { sequence, incomplete }
    }
}
