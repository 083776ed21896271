use std::collections::VecDeque;
use std::sync::{Arc, Mutex, Once};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::Router;
use feedeval::backend::http::EndpointClient;
use feedeval::backend::{DimensionScorer, EndpointScorer};
use feedeval::config::{BackendConfig, BackendKind};
use feedeval::error::Error;
use feedeval_core::scoring::ScoreRequest;
use serde_json::json;

/// Scripted reply: status, body and a delay before answering.
type Reply = (u16, String, u64);

#[derive(Default)]
struct Mock {
    script: Mutex<VecDeque<Reply>>,
    bodies: Mutex<Vec<Bytes>>,
    auth: Mutex<Vec<Option<String>>>,
}

async fn handle(State(m): State<Arc<Mock>>, headers: HeaderMap, body: Bytes) -> (StatusCode, String) {
    m.bodies.lock().unwrap().push(body);
    m.auth.lock().unwrap().push(
        headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string),
    );
    let (status, text, delay) = m
        .script
        .lock()
        .unwrap()
        .pop_front()
        .unwrap_or((500, "script exhausted".into(), 0));
    tokio::time::sleep(Duration::from_millis(delay)).await;
    (StatusCode::from_u16(status).unwrap(), text)
}

fn serve(script: Vec<Reply>) -> (String, Arc<Mock>) {
    let mock = Arc::new(Mock {
        script: Mutex::new(script.into()),
        ..Default::default()
    });
    let app = Router::new().route("/v1/chat", post(handle)).with_state(mock.clone());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (format!("http://{}/v1/chat", rx.recv().unwrap()), mock)
}

fn chat(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn config(url: &str) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::Endpoint,
        url: Some(url.into()),
        model: Some("test-model".into()),
        timeout_ms: 300,
        max_attempts: 3,
        base_delay_ms: 1,
        ..Default::default()
    }
}

/// Collects every log line so tests can check what was written.
struct Capture(Mutex<Vec<String>>);

impl log::Log for Capture {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }
    fn log(&self, record: &log::Record) {
        self.0.lock().unwrap().push(format!("{}", record.args()));
    }
    fn flush(&self) {}
}

static LOGS: Capture = Capture(Mutex::new(Vec::new()));
static INIT: Once = Once::new();

fn capture_logs() {
    INIT.call_once(|| {
        log::set_logger(&LOGS).unwrap();
        log::set_max_level(log::LevelFilter::Trace);
    });
}

#[test]
fn server_error_is_retried_with_identical_bytes() {
    let (url, mock) = serve(vec![(503, "busy".into(), 0), (200, chat("hello"), 0)]);
    let client = EndpointClient::from_config(&config(&url)).unwrap();
    let c = client.complete("prompt text", 0.7, Some(50)).unwrap();
    assert_eq!(c.attempts, 2);
    assert_eq!(c.content, "hello");
    assert_eq!(client.stats(), (2, 1));
    let bodies = mock.bodies.lock().unwrap();
    assert_eq!(bodies.len(), 2);
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(
        bodies[0].as_ref(),
        client.body("prompt text", 0.7, Some(50)).unwrap().as_slice()
    );
}

#[test]
fn timeout_is_retried() {
    let (url, mock) = serve(vec![(200, chat("late"), 1500), (200, chat("on time"), 0)]);
    let client = EndpointClient::from_config(&config(&url)).unwrap();
    let c = client.complete("p", 0.0, None).unwrap();
    assert_eq!((c.attempts, c.content.as_str()), (2, "on time"));
    assert_eq!(mock.bodies.lock().unwrap().len(), 2);
}

#[test]
fn client_error_is_permanent() {
    let (url, mock) = serve(vec![(400, "bad request".into(), 0), (200, chat("unused"), 0)]);
    let client = EndpointClient::from_config(&config(&url)).unwrap();
    match client.complete("p", 0.0, None) {
        Err(Error::Http { status: 400, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(mock.bodies.lock().unwrap().len(), 1);
}

#[test]
fn persistent_server_errors_exhaust_attempts() {
    let (url, mock) = serve(vec![(500, String::new(), 0); 3]);
    let client = EndpointClient::from_config(&config(&url)).unwrap();
    match client.complete("p", 0.0, None) {
        Err(Error::Transport { attempts: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(mock.bodies.lock().unwrap().len(), 3);
}

#[test]
fn unparseable_score_is_a_protocol_error_without_retry() {
    let (url, mock) = serve(vec![(200, chat("N/A"), 0), (200, chat("3.5"), 0)]);
    let scorer = EndpointScorer {
        client: EndpointClient::from_config(&config(&url)).unwrap(),
        structured_field: None,
    };
    match scorer.score(&ScoreRequest::helpfulness("Essay.", "Feedback.")) {
        Err(Error::Protocol(_)) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(mock.bodies.lock().unwrap().len(), 1);
}

#[test]
fn structured_field_is_read() {
    let doc = json!({"choices": [{"message": {"content": "ignored"}}], "result": {"score": 2.25}}).to_string();
    let (url, _mock) = serve(vec![(200, doc, 0)]);
    let scorer = EndpointScorer {
        client: EndpointClient::from_config(&config(&url)).unwrap(),
        structured_field: Some("result.score".into()),
    };
    let s = scorer.score(&ScoreRequest::helpfulness("Essay.", "Feedback.")).unwrap();
    assert_eq!(s.value, 2.25);
}

#[test]
fn credential_is_sent_but_never_logged() {
    capture_logs();
    const KEY: &str = "sk-test-credential-0123456789";
    std::env::set_var("FEEDEVAL_TEST_ENDPOINT_KEY", KEY);
    let (url, mock) = serve(vec![(502, String::new(), 0), (401, "denied".into(), 0)]);
    let mut cfg = config(&url);
    cfg.api_key_env = Some("FEEDEVAL_TEST_ENDPOINT_KEY".into());
    let client = EndpointClient::from_config(&cfg).unwrap();
    let err = client.complete("p", 0.0, None).unwrap_err();
    assert!(!err.to_string().contains(KEY));
    assert!(!format!("{client:?}").contains(KEY));
    let auth = mock.auth.lock().unwrap();
    assert_eq!(auth.len(), 2);
    assert!(auth.iter().all(|a| a.as_deref() == Some(&*format!("Bearer {KEY}"))));
    let logs = LOGS.0.lock().unwrap();
    assert!(!logs.is_empty(), "the retry should have logged a warning");
    assert!(logs.iter().all(|l| !l.contains(KEY)));
}

#[test]
fn missing_credential_variable_is_a_config_error() {
    let mut cfg = config("http://127.0.0.1:9/v1/chat");
    cfg.api_key_env = Some("FEEDEVAL_TEST_UNSET_KEY".into());
    std::env::remove_var("FEEDEVAL_TEST_UNSET_KEY");
    assert!(matches!(EndpointClient::from_config(&cfg), Err(Error::Config(_))));
}
