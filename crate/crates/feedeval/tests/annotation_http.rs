use std::net::SocketAddr;
use std::path::Path;
use std::thread::JoinHandle;

use feedeval::annotation::{build, ServeConfig};
use feedeval_core::metrics::{fleiss_kappa, icc_2_1};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

/// Binary Fleiss fixture (items x [A votes, B votes], 3 raters) and its
/// value from statsmodels, generated by crates/core/tests/oracles/generate.py.
const FLEISS_BINARY_ROWS: [[u64; 2]; 30] = [
    [1, 2],
    [2, 1],
    [2, 1],
    [2, 1],
    [3, 0],
    [3, 0],
    [3, 0],
    [3, 0],
    [1, 2],
    [1, 2],
    [2, 1],
    [2, 1],
    [3, 0],
    [2, 1],
    [1, 2],
    [2, 1],
    [2, 1],
    [2, 1],
    [1, 2],
    [2, 1],
    [1, 2],
    [2, 1],
    [1, 2],
    [3, 0],
    [3, 0],
    [2, 1],
    [2, 1],
    [1, 2],
    [2, 1],
    [1, 2],
];
const FLEISS_BINARY_KAPPA: f64 = -0.11530172413793091;
const TOL: f64 = 1e-12;

struct Server {
    base: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
    token: Option<String>,
    client: Client,
}

impl Server {
    fn start(cfg: ServeConfig) -> Server {
        let app = build(&cfg).unwrap();
        let token = cfg.token().unwrap();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel::<SocketAddr>();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Server {
            base: format!("http://{addr}"),
            stop: Some(stop_tx),
            thread: Some(thread),
            token,
            client: Client::new(),
        }
    }

    fn auth(&self, rb: reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
        match &self.token {
            Some(t) => rb.bearer_auth(t),
            None => rb,
        }
    }

    fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self
            .auth(self.client.get(format!("{}{path}", self.base)))
            .send()
            .unwrap();
        let status = r.status();
        (status, r.json().unwrap_or(Value::Null))
    }

    fn post(&self, path: &str, body: &Value) -> (StatusCode, Value) {
        let r = self
            .auth(self.client.post(format!("{}{path}", self.base)))
            .json(body)
            .send()
            .unwrap();
        let status = r.status();
        (status, r.json().unwrap_or(Value::Null))
    }

    fn register(&self, id: &str) {
        let (s, v) = self.post("/annotators", &json!({"annotator_id": id}));
        assert_eq!(s, StatusCode::CREATED, "{v}");
    }

    fn next(&self, annotator: &str) -> Value {
        let (s, v) = self.get(&format!("/tasks/next?annotator={annotator}"));
        assert_eq!(s, StatusCode::OK, "{v}");
        v
    }

    fn judge(&self, task: &str, annotator: &str, answer: Value) -> (StatusCode, Value) {
        self.post(
            "/judgments",
            &json!({"task_id": task, "annotator_id": annotator, "answer": answer, "session_id": "s1"}),
        )
    }

    fn shutdown(mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            t.join().unwrap();
        }
    }
}

fn config(dir: &Path) -> ServeConfig {
    ServeConfig {
        log: dir.join("log.jsonl"),
        seed: 11,
        ..Default::default()
    }
}

/// A pairwise task whose creation-order A text is `a` and B text is `b`.
fn pairwise(id: &str, a: &str, b: &str, winner: &str, practice_round: Option<u8>) -> Value {
    let mut v = json!({
        "task_id": id,
        "kind": "Pairwise",
        "dimension": "Specificity",
        "essay": "The cyclist rode on through the heat.",
        "trait": "Content",
        "feedback_a": a,
        "feedback_b": b,
        "feedeval_winner": winner,
    });
    if let Some(r) = practice_round {
        v["is_practice"] = json!(true);
        v["practice_round"] = json!(r);
    }
    v
}

/// The presented side showing `text`.
fn side_of(task: &Value, text: &str) -> &'static str {
    if task["feedback_a"] == text {
        "A"
    } else {
        assert_eq!(task["feedback_b"], text);
        "B"
    }
}

#[test]
fn practice_then_main_with_unanimous_annotators() {
    let dir = tempfile::tempdir().unwrap();
    let srv = Server::start(config(dir.path()));
    let mut tasks = Vec::new();
    for i in 0..20 {
        let round = 1 + (i / 10) as u8;
        tasks.push(pairwise(
            &format!("p{i:02}"),
            &format!("good {i}"),
            &format!("weak {i}"),
            "A",
            Some(round),
        ));
    }
    for i in 0..30 {
        let (a, b, w) = if i % 2 == 0 {
            (format!("good m{i}"), format!("weak m{i}"), "A")
        } else {
            (format!("weak m{i}"), format!("good m{i}"), "B")
        };
        tasks.push(pairwise(&format!("m{i:02}"), &a, &b, w, None));
    }
    let (s, v) = srv.post("/tasks", &Value::Array(tasks));
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["task_ids"].as_array().unwrap().len(), 50);

    for a in ["r1", "r2", "r3"] {
        srv.register(a);
    }
    let first = srv.next("r1");
    assert_eq!(first["task"]["is_practice"], true);
    assert_eq!(first["task"]["practice_round"], 1);
    assert_eq!(first["task"]["round_item"], 1);
    assert_eq!(first["task"]["round_size"], 10);
    assert!(first["task"].get("swapped").is_none());
    assert!(first["task"].get("feedeval_winner").is_none());

    let mut orders = Vec::new();
    for a in ["r1", "r2", "r3"] {
        let mut order = Vec::new();
        loop {
            let next = srv.next(a);
            let Some(task) = next["task"].as_object().map(|_| next["task"].clone()) else {
                assert_eq!(next["progress"]["main_judged"], 30);
                break;
            };
            let id = task["task_id"].as_str().unwrap().to_string();
            let good = if task["feedback_a"].as_str().unwrap().starts_with("good") {
                task["feedback_a"].as_str().unwrap().to_string()
            } else {
                task["feedback_b"].as_str().unwrap().to_string()
            };
            let (s, ack) = srv.judge(&id, a, json!({"winner": side_of(&task, &good)}));
            assert_eq!(s, StatusCode::CREATED, "{ack}");
            order.push(id);
        }
        assert_eq!(order.len(), 50);
        assert!(order[..20].iter().all(|t| t.starts_with('p')), "{order:?}");
        assert!(order[20..].iter().all(|t| t.starts_with('m')));
        orders.push(order);
    }
    assert_ne!(orders[0][20..], orders[1][20..], "main order is per annotator");

    let (s, report) = srv.get("/reports/agreement?practice=true");
    assert_eq!(s, StatusCode::OK, "{report}");
    let spec = &report["pairwise"]["specificity"];
    assert_eq!(spec["items"], 30);
    assert_eq!(spec["fleiss_kappa"], 1.0);
    assert_eq!(spec["alignment"]["accuracy"], 1.0);
    assert_eq!(spec["alignment"]["macro_f1"], 1.0);
    let practice = report["practice"].as_array().unwrap();
    assert_eq!(practice.len(), 2);
    // Every practice item prefers A: one category in use, so kappa is undefined.
    assert!(practice[0]["fleiss_kappa"].is_null());
    assert!(practice[0]["note"].as_str().unwrap().contains("undefined"));
    assert_eq!(practice[0]["accuracy_vs_feedeval"]["r2"], 1.0);
    srv.shutdown();
}

#[test]
fn report_matches_the_fleiss_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let srv = Server::start(config(dir.path()));
    let tasks: Vec<Value> = (0..30)
        .map(|i| {
            pairwise(
                &format!("t{i:02}"),
                &format!("left {i}"),
                &format!("right {i}"),
                "A",
                None,
            )
        })
        .collect();
    srv.post("/tasks", &Value::Array(tasks));
    let raters = ["x1", "x2", "x3"];
    for a in raters {
        srv.register(a);
    }
    for (j, a) in raters.iter().enumerate() {
        while let Some(task) = Some(srv.next(a)["task"].clone()).filter(|t| !t.is_null()) {
            let i: usize = task["task_id"].as_str().unwrap()[1..].parse().unwrap();
            let canonical = if (j as u64) < FLEISS_BINARY_ROWS[i][0] {
                format!("left {i}")
            } else {
                format!("right {i}")
            };
            let (s, _) = srv.judge(
                task["task_id"].as_str().unwrap(),
                a,
                json!({"winner": side_of(&task, &canonical)}),
            );
            assert_eq!(s, StatusCode::CREATED);
        }
    }
    let (s, report) = srv.get("/reports/agreement");
    assert_eq!(s, StatusCode::OK, "{report}");
    let got = report["pairwise"]["specificity"]["fleiss_kappa"].as_f64().unwrap();
    let rows: Vec<Vec<u64>> = FLEISS_BINARY_ROWS.iter().map(|r| r.to_vec()).collect();
    assert!((got - FLEISS_BINARY_KAPPA).abs() < TOL, "{got}");
    assert_eq!(got, fleiss_kappa(&rows, 3).unwrap());
    srv.shutdown();
}

#[test]
fn likert_icc_per_scale() {
    let dir = tempfile::tempdir().unwrap();
    let srv = Server::start(config(dir.path()));
    let ratings: [[i64; 3]; 5] = [[5, 4, 5], [2, 1, 2], [4, 4, 3], [3, 1, 2], [1, 2, 1]];
    let tasks: Vec<Value> = (0..5)
        .map(|i| {
            json!({"task_id": format!("l{i}"), "kind": "Likert", "essay": "An essay.",
                   "feedback": format!("Feedback {i}.")})
        })
        .collect();
    srv.post("/tasks", &Value::Array(tasks));
    let raters = ["a", "b", "c"];
    for a in raters {
        srv.register(a);
    }
    for (j, a) in raters.iter().enumerate() {
        while let Some(task) = Some(srv.next(a)["task"].clone()).filter(|t| !t.is_null()) {
            assert_eq!(task["scales"].as_array().unwrap().len(), 3);
            let i: usize = task["task_id"].as_str().unwrap()[1..].parse().unwrap();
            let r = ratings[i][j];
            let (s, v) = srv.judge(
                task["task_id"].as_str().unwrap(),
                a,
                json!({"d1": r, "d2": r, "d3": 6 - r}),
            );
            assert_eq!(s, StatusCode::CREATED, "{v}");
        }
    }
    let (s, report) = srv.get("/reports/agreement");
    assert_eq!(s, StatusCode::OK, "{report}");
    let matrix: Vec<Vec<f64>> = ratings.iter().map(|r| r.iter().map(|x| *x as f64).collect()).collect();
    let expected = icc_2_1(&matrix).unwrap();
    for d in ["D1", "D2", "D3"] {
        let got = report["likert"][d]["icc"].as_f64().unwrap();
        assert!((got - expected).abs() < TOL, "{d}: {got} vs {expected}");
    }
    srv.shutdown();
}

#[test]
fn judgment_errors_and_idempotency() {
    let dir = tempfile::tempdir().unwrap();
    let srv = Server::start(config(dir.path()));
    srv.post(
        "/tasks",
        &json!([
            pairwise("m0", "one", "two", "A", None),
            {"task_id": "l0", "kind": "Likert", "essay": "E.", "feedback": "F."}
        ]),
    );
    srv.register("ann");
    let (s, _) = srv.get("/tasks/next?annotator=ghost");
    assert_eq!(s, StatusCode::UNAUTHORIZED);

    let first = srv.next("ann")["task"]["task_id"].as_str().unwrap().to_string();
    let other = if first == "m0" { "l0" } else { "m0" };
    let other_answer = if other == "l0" {
        json!({"d1": 3, "d2": 3, "d3": 3})
    } else {
        json!({"winner": "A"})
    };
    let (s, v) = srv.judge(other, "ann", other_answer);
    assert_eq!(s, StatusCode::CONFLICT, "not served yet: {v}");
    let (s, _) = srv.judge("missing", "ann", json!({"winner": "A"}));
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = srv.judge(&first, "nobody", json!({"winner": "A"}));
    assert_eq!(s, StatusCode::UNAUTHORIZED);

    let (good, bad, conflicting) = if first == "l0" {
        (
            json!({"d1": 4, "d2": 5, "d3": 3}),
            json!({"d1": 6, "d2": 5, "d3": 3}),
            json!({"d1": 4, "d2": 5, "d3": 4}),
        )
    } else {
        (
            json!({"winner": "B"}),
            json!({"d1": 1, "d2": 1, "d3": 1}),
            json!({"winner": "A"}),
        )
    };
    let (s, _) = srv.judge(&first, "ann", bad);
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, ack) = srv.judge(&first, "ann", good.clone());
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(ack["duplicate"], false);
    let (s, dup) = srv.judge(&first, "ann", good);
    assert_eq!(s, StatusCode::OK);
    assert_eq!(dup["seq"], ack["seq"]);
    assert_eq!(dup["duplicate"], true);
    let (s, _) = srv.judge(&first, "ann", conflicting);
    assert_eq!(s, StatusCode::CONFLICT);

    let second = srv.next("ann")["task"]["task_id"].as_str().unwrap().to_string();
    assert_eq!(second, other);
    let (s, _) = srv.judge(&second, "ann", json!({"d1": 0, "d2": 1, "d3": 1}));
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let raw = srv
        .client
        .post(format!("{}/judgments", srv.base))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .unwrap();
    assert_eq!(raw.status(), StatusCode::BAD_REQUEST);

    let (s, view) = srv.get("/tasks/m0");
    assert_eq!(s, StatusCode::OK);
    assert!(view.get("feedeval_winner").is_none());
    assert_eq!(srv.get("/tasks/zzz").0, StatusCode::NOT_FOUND);
    let (s, _) = srv.post("/tasks", &json!({"kind": "Likert", "essay": "", "feedback": "F."}));
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = srv.post("/tasks", &pairwise("m0", "x", "y", "A", None));
    assert_eq!(s, StatusCode::CONFLICT);
    srv.shutdown();
}

#[test]
fn incomplete_and_even_reports() {
    let dir = tempfile::tempdir().unwrap();
    let srv = Server::start(config(dir.path()));
    srv.post(
        "/tasks",
        &json!([
            pairwise("m0", "one", "two", "A", None),
            pairwise("m1", "three", "four", "B", None)
        ]),
    );
    srv.register("a1");
    srv.register("a2");
    let (s, v) = srv.get("/reports/agreement");
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "incomplete");
    assert_eq!(v["missing"].as_array().unwrap().len(), 4);
    for a in ["a1", "a2"] {
        while let Some(task) = Some(srv.next(a)["task"].clone()).filter(|t| !t.is_null()) {
            srv.judge(task["task_id"].as_str().unwrap(), a, json!({"winner": "A"}));
        }
    }
    let (s, v) = srv.get("/reports/agreement?tasks=m0");
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "configuration");
    assert_eq!(srv.get("/reports/agreement?tasks=nope").0, StatusCode::NOT_FOUND);
    srv.shutdown();
}

#[test]
fn bearer_token_and_static_files() {
    let dir = tempfile::tempdir().unwrap();
    let static_dir = dir.path().join("app");
    std::fs::create_dir_all(&static_dir).unwrap();
    std::fs::write(static_dir.join("index.html"), "<html>annotate</html>").unwrap();
    std::env::set_var("FEEDEVAL_TEST_ANNOTATION_TOKEN", "s3cret");
    let cfg = ServeConfig {
        token_env: Some("FEEDEVAL_TEST_ANNOTATION_TOKEN".into()),
        static_dir: Some(static_dir),
        ..config(dir.path())
    };
    let srv = Server::start(cfg);
    let anon = srv
        .client
        .post(format!("{}/annotators", srv.base))
        .json(&json!({}))
        .send()
        .unwrap();
    assert_eq!(anon.status(), StatusCode::UNAUTHORIZED);
    let wrong = srv
        .client
        .post(format!("{}/annotators", srv.base))
        .bearer_auth("nope")
        .json(&json!({}))
        .send()
        .unwrap();
    assert_eq!(wrong.status(), StatusCode::UNAUTHORIZED);
    let (s, v) = srv.post("/annotators", &json!({}));
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["annotator_id"], "annotator-1");
    let page = srv.client.get(format!("{}/app/index.html", srv.base)).send().unwrap();
    assert_eq!(page.status(), StatusCode::OK);
    assert_eq!(page.text().unwrap(), "<html>annotate</html>");
    srv.shutdown();
}

#[test]
fn restart_replays_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let srv = Server::start(config(dir.path()));
    srv.post(
        "/tasks",
        &json!([
            pairwise("m0", "one", "two", "A", None),
            pairwise("m1", "three", "four", "A", None)
        ]),
    );
    srv.register("a");
    let t0 = srv.next("a")["task"].clone();
    srv.judge(t0["task_id"].as_str().unwrap(), "a", json!({"winner": "A"}));
    let t1 = srv.next("a")["task"].clone();
    srv.shutdown();

    let srv = Server::start(config(dir.path()));
    assert_eq!(srv.next("a")["task"], t1, "outstanding task survives a restart");
    let (s, dup) = srv.judge(t0["task_id"].as_str().unwrap(), "a", json!({"winner": "A"}));
    assert_eq!(s, StatusCode::OK);
    assert_eq!(dup["duplicate"], true);
    assert_eq!(
        srv.get(&format!("/tasks/{}", t0["task_id"].as_str().unwrap())).1["feedback_a"],
        t0["feedback_a"]
    );
    srv.shutdown();
}
