use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use axum::routing::get;
use axum::Router;
use kratt_core::corpus::BookRecord;
use kratt_core::pipeline::{to_marc21, write_text_pdf, IndexingOutcome, Step};
use kratt_core::preprocess::RuleAnalyzer;
use kratt_core::synth::{planted_corpus, PlantedConfig};
use kratt_core::{ModelBundle, TrainOptions};
use kratt_service::{AppState, JobState, JobStatus, ServiceConfig};
use reqwest::multipart::{Form, Part};
use serde_json::{json, Value};

struct Fixture {
    bundle: Arc<ModelBundle>,
    test: Vec<BookRecord>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = |seed| PlantedConfig {
            topics: 6,
            books_per_topic: 4,
            min_pages: 20,
            max_pages: 40,
            seed,
            ..PlantedConfig::default()
        };
        let (_, train) = planted_corpus(&cfg(1));
        let (_, test) = planted_corpus(&cfg(2));
        let mut opts = TrainOptions::default();
        opts.training.min_examples = 20;
        opts.dim = 1 << 14;
        opts.calibration_pages = 200;
        let bundle =
            kratt_core::bundle::train_bundle(&train, &opts, Arc::new(RuleAnalyzer::builtin()))
                .unwrap();
        Fixture {
            bundle: Arc::new(bundle),
            test,
        }
    })
}

fn book_text(i: usize) -> String {
    fixture().test[i].pages.join("\u{000C}")
}

async fn start(cfg: ServiceConfig) -> String {
    let bundle = tokio::task::spawn_blocking(|| fixture().bundle.clone()).await.unwrap();
    let state = AppState::start(bundle, cfg);
    let addr = kratt_service::spawn(SocketAddr::from(([127, 0, 0, 1], 0)), state)
        .await
        .unwrap();
    format!("http://{addr}")
}

async fn upload(client: &reqwest::Client, base: &str, name: &str, bytes: Vec<u8>) -> reqwest::Response {
    let form = Form::new().part("book", Part::bytes(bytes).file_name(name.to_string()));
    client
        .post(format!("{base}/api/jobs"))
        .multipart(form)
        .send()
        .await
        .unwrap()
}

async fn submit_text(client: &reqwest::Client, base: &str, text: String) -> String {
    let r = upload(client, base, "raamat.txt", text.into_bytes()).await;
    assert_eq!(r.status(), StatusCode::ACCEPTED);
    r.json::<Value>().await.unwrap()["id"].as_str().unwrap().to_string()
}

/// Polls until the job leaves the queued/running states; returns every
/// status seen.
async fn wait(client: &reqwest::Client, base: &str, id: &str) -> Vec<JobStatus> {
    let deadline = Instant::now() + Duration::from_secs(60);
    let mut seen = Vec::new();
    loop {
        let s: JobStatus = client
            .get(format!("{base}/api/jobs/{id}"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let terminal = matches!(s.state, JobState::Done | JobState::Failed);
        seen.push(s);
        if terminal {
            return seen;
        }
        assert!(Instant::now() < deadline, "job {id} did not finish");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

async fn get_result(client: &reqwest::Client, base: &str, id: &str, q: &str) -> (StatusCode, String) {
    let r = client
        .get(format!("{base}/api/jobs/{id}/result{q}"))
        .send()
        .await
        .unwrap();
    (r.status(), r.text().await.unwrap())
}

fn state_rank(s: JobState) -> u8 {
    match s {
        JobState::Queued => 0,
        JobState::Running => 1,
        JobState::Done | JobState::Failed => 2,
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn health_reports_model() {
    let base = start(ServiceConfig::default()).await;
    let v: Value = reqwest::get(format!("{base}/api/health")).await.unwrap().json().await.unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["model_version"], fixture().bundle.manifest.model_version.as_str());
    assert_eq!(v["vocabulary_size"], 6);
}

#[tokio::test(flavor = "multi_thread")]
async fn upload_runs_through_all_steps() {
    let base = start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let id = submit_text(&client, &base, book_text(0)).await;
    let seen = wait(&client, &base, &id).await;
    let last = seen.last().unwrap();
    assert_eq!(last.state, JobState::Done, "{:?}", last.error);
    assert_eq!(last.step, Step::Finished);
    assert_eq!(last.cfg.pages_n, 10);
    assert_eq!(last.pages_used, Some(10));
    assert_eq!(last.step_label, "Finished");
    // polled steps and recorded events never go backwards
    assert!(seen.windows(2).all(|w| w[0].step <= w[1].step));
    assert!(seen.windows(2).all(|w| state_rank(w[0].state) <= state_rank(w[1].state)));
    let events = &last.events;
    assert!(events.windows(2).all(|w| w[0].step <= w[1].step && w[0].at_ms <= w[1].at_ms));
    let states: Vec<JobState> = events.iter().map(|e| e.state).collect();
    assert_eq!(states.first(), Some(&JobState::Queued));
    assert!(states.contains(&JobState::Running));
    assert_eq!(states.last(), Some(&JobState::Done));
    let steps: Vec<Step> = events.iter().map(|e| e.step).collect();
    for step in [Step::Sampling, Step::QualityControl, Step::Predicting, Step::Aggregating] {
        assert!(steps.contains(&step), "{step:?} missing from {steps:?}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn results_filter_stored_outcome() {
    let base = start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let id = submit_text(&client, &base, book_text(1)).await;
    wait(&client, &base, &id).await;

    let (code, default) = get_result(&client, &base, &id, "").await;
    assert_eq!(code, StatusCode::OK);
    let (_, explicit) = get_result(&client, &base, &id, "?threshold=0.4").await;
    assert_eq!(default, explicit);

    let mut previous: Option<Vec<String>> = None;
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let start = Instant::now();
        let (code, body) = get_result(&client, &base, &id, &format!("?threshold={t}")).await;
        let elapsed = start.elapsed();
        assert_eq!(code, StatusCode::OK);
        assert!(elapsed < Duration::from_millis(50), "{elapsed:?}");
        let (_, again) = get_result(&client, &base, &id, &format!("?threshold={t}")).await;
        assert_eq!(body, again);
        let o: IndexingOutcome = serde_json::from_str(&body).unwrap();
        assert_eq!(o.threshold, t);
        assert!(o.keywords.iter().all(|k| k.f >= t));
        let terms: Vec<String> = o.keywords.iter().map(|k| k.term.clone()).collect();
        if let Some(p) = &previous {
            assert!(terms.iter().all(|x| p.contains(x)), "threshold {t}");
        }
        previous = Some(terms);
    }

    let (code, _) = get_result(&client, &base, &id, "?threshold=1.5").await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn marc_export_of_selected_terms() {
    let base = start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let id = submit_text(&client, &base, book_text(2)).await;
    wait(&client, &base, &id).await;
    let (_, body) = get_result(&client, &base, &id, "?threshold=0").await;
    let all: IndexingOutcome = serde_json::from_str(&body).unwrap();
    let chosen: Vec<_> = all.keywords.iter().rev().take(3).cloned().collect();
    assert!(!chosen.is_empty());
    let terms: Vec<&str> = chosen.iter().map(|k| k.term.as_str()).collect();

    let r = client
        .post(format!("{base}/api/jobs/{id}/marc"))
        .json(&json!({ "terms": terms }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert!(r.headers()["content-type"].to_str().unwrap().starts_with("text/plain"));
    let text = r.text().await.unwrap();
    assert_eq!(text, to_marc21(&chosen));
    assert_eq!(text.lines().count(), chosen.len());

    let r = client
        .post(format!("{base}/api/jobs/{id}/marc"))
        .json(&json!({ "terms": [terms[0], "olematu termin"] }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = r.json().await.unwrap();
    assert_eq!(v["terms"], json!(["olematu termin"]));
}

#[tokio::test(flavor = "multi_thread")]
async fn pdf_uploads_and_bad_input() {
    let base = start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let pages = fixture().test[3].pages.clone();
    let pdf = tokio::task::spawn_blocking(move || write_text_pdf(&pages).unwrap()).await.unwrap();
    let r = upload(&client, &base, "raamat.pdf", pdf).await;
    assert_eq!(r.status(), StatusCode::ACCEPTED);
    let id = r.json::<Value>().await.unwrap()["id"].as_str().unwrap().to_string();
    let last = wait(&client, &base, &id).await.pop().unwrap();
    assert_eq!(last.state, JobState::Done, "{:?}", last.error);

    let r = upload(&client, &base, "katki.pdf", b"%PDF-1.7 not really".to_vec()).await;
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let r = upload(&client, &base, "tuhi.txt", Vec::new()).await;
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);

    let form = Form::new().text("pages_n", "5");
    let r = client.post(format!("{base}/api/jobs")).multipart(form).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);

    let form = Form::new()
        .part("book", Part::bytes(book_text(0).into_bytes()).file_name("a.txt"))
        .text("pages_n", "0");
    let r = client.post(format!("{base}/api/jobs")).multipart(form).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);

    let form = Form::new()
        .part("book", Part::bytes(book_text(0).into_bytes()).file_name("a.txt"))
        .text("pages_n", "3")
        .text("seed", "9");
    let r = client.post(format!("{base}/api/jobs")).multipart(form).send().await.unwrap();
    let id = r.json::<Value>().await.unwrap()["id"].as_str().unwrap().to_string();
    let last = wait(&client, &base, &id).await.pop().unwrap();
    assert_eq!((last.cfg.pages_n, last.cfg.seed), (3, 9));
    assert_eq!(last.pages_used, Some(3));
}

#[tokio::test(flavor = "multi_thread")]
async fn url_jobs_fetch_or_fail() {
    let text = tokio::task::spawn_blocking(|| book_text(4)).await.unwrap();
    let remote = Router::new()
        .route("/raamat.txt", get(move || async move { text }))
        .route("/puudub.txt", get(|| async { (StatusCode::NOT_FOUND, "not here") }));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let remote_addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, remote).await.unwrap() });

    let base = start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let submit = |url: String| {
        let client = client.clone();
        let base = base.clone();
        async move {
            client
                .post(format!("{base}/api/jobs"))
                .json(&json!({ "url": url, "pages_n": 8 }))
                .send()
                .await
                .unwrap()
        }
    };

    let r = submit(format!("http://{remote_addr}/raamat.txt")).await;
    assert_eq!(r.status(), StatusCode::ACCEPTED);
    let id = r.json::<Value>().await.unwrap()["id"].as_str().unwrap().to_string();
    let last = wait(&client, &base, &id).await.pop().unwrap();
    assert_eq!(last.state, JobState::Done, "{:?}", last.error);
    assert_eq!(last.pages_used, Some(8));

    let r = submit(format!("http://{remote_addr}/puudub.txt")).await;
    let id = r.json::<Value>().await.unwrap()["id"].as_str().unwrap().to_string();
    let last = wait(&client, &base, &id).await.pop().unwrap();
    assert_eq!(last.state, JobState::Failed);
    assert!(last.error.as_deref().unwrap().contains("404"), "{:?}", last.error);
    let (code, body) = get_result(&client, &base, &id, "").await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert!(body.contains("404"));

    let r = submit("ftp://example.org/raamat.txt".into()).await;
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn ids_are_distinct_and_unknown_ids_404() {
    let base = start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let a = submit_text(&client, &base, book_text(5)).await;
    let b = submit_text(&client, &base, book_text(5)).await;
    assert_ne!(a, b);
    for path in ["", "/result"] {
        let r = client.get(format!("{base}/api/jobs/nope{path}")).send().await.unwrap();
        assert_eq!(r.status(), StatusCode::NOT_FOUND);
    }
    let r = client
        .post(format!("{base}/api/jobs/nope/marc"))
        .json(&json!({ "terms": [] }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    // identical submissions give identical outcomes
    wait(&client, &base, &a).await;
    wait(&client, &base, &b).await;
    let ra: IndexingOutcome = serde_json::from_str(&get_result(&client, &base, &a, "").await.1).unwrap();
    let rb: IndexingOutcome = serde_json::from_str(&get_result(&client, &base, &b, "").await.1).unwrap();
    assert_eq!(ra.keywords, rb.keywords);
}

#[tokio::test(flavor = "multi_thread")]
async fn unfinished_jobs_conflict_and_full_queue_rejects() {
    let cfg = ServiceConfig {
        workers: 0,
        queue_depth: 2,
        ..ServiceConfig::default()
    };
    let base = start(cfg).await;
    let client = reqwest::Client::new();
    let text = tokio::task::spawn_blocking(|| book_text(0)).await.unwrap();
    let id = submit_text(&client, &base, text.clone()).await;
    let s: JobStatus = client
        .get(format!("{base}/api/jobs/{id}"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(s.state, JobState::Queued);
    let (code, _) = get_result(&client, &base, &id, "").await;
    assert_eq!(code, StatusCode::CONFLICT);
    let r = client
        .post(format!("{base}/api/jobs/{id}/marc"))
        .json(&json!({ "terms": [] }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);

    submit_text(&client, &base, text.clone()).await;
    let r = upload(&client, &base, "c.txt", text.into_bytes()).await;
    assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);
    let v: Value = reqwest::get(format!("{base}/api/health")).await.unwrap().json().await.unwrap();
    assert_eq!(v["queued"], 2);
}
