//! The job queue behind an HTTP front end: submit one image with a
//! multipart POST, poll for the result, read the metrics.
//!
//! Serves on an ephemeral local port and exits when done. Run with
//! `cargo run --example http_service`.

use std::path::Path;
use std::time::Duration;

use capwire::service::{router, PartialConfig, QueueOptions, Service, ServiceConfig};
use serde_json::Value;

const BOUNDARY: &str = "example-boundary";

fn multipart(image: &[u8], metadata: &[u8]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, ctype, data) in [("image", "image/png", image), ("metadata", "application/json", metadata)] {
        body.extend_from_slice(
            format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"\r\nContent-Type: {ctype}\r\n\r\n")
                .as_bytes(),
        );
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

async fn demo() -> Result<Value, Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e");
    let script = format!("mock:{}", dir.join("two_level.json").display());
    let cfg = ServiceConfig::from_layers(
        PartialConfig {
            level1_endpoint: Some(script.clone()),
            level2_endpoint: Some(script),
            roster_paths: Some(vec![dir.join("rosters.jsonl")]),
            ..PartialConfig::default()
        },
        PartialConfig::default(),
    )?;
    let service = Service::new(
        cfg.build_components()?,
        QueueOptions {
            max_in_flight: cfg.max_in_flight,
            backpressure: cfg.backpressure,
            ttl: cfg.result_ttl(),
        },
    );

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(async move { axum::serve(listener, router(service)).await });
    println!("listening on {base}");

    let client = reqwest::Client::new();
    let image = std::fs::read(dir.join("img-001.png"))?;
    let metadata = std::fs::read(dir.join("img-001.meta.json"))?;
    let accepted: Value = client
        .post(format!("{base}/caption"))
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(multipart(&image, &metadata))
        .send()
        .await?
        .json()
        .await?;
    println!("POST /caption -> {accepted}");
    let id = accepted["job_id"].as_str().ok_or("no job id")?;

    let view = loop {
        let v: Value = client.get(format!("{base}/result/{id}")).send().await?.json().await?;
        if v["status"] == "DONE" || v["status"] == "FAILED" {
            break v;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    };
    println!("GET /result/{id} -> {} {}", view["status"], view["result"]["caption_text"]);

    let metrics = client.get(format!("{base}/metrics")).send().await?.text().await?;
    for line in metrics.lines().filter(|l| l.starts_with("capwire_jobs")) {
        println!("{line}");
    }
    Ok(view)
}

pub fn run_example() -> Result<Value, Box<dyn std::error::Error>> {
    tokio::runtime::Runtime::new()?.block_on(demo())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
