//! Rebuilds `data/siemens/embeddings.jsonl` and `transcript.jsonl` from the
//! authored script. Run with `cargo test -p stgen-cli --test regen -- --ignored`.

mod common;

use std::fs;

use common::*;
use stgen_core::harness::run_benchmark;
use stgen_core::kb::load_rq2st;
use stgen_core::llm::{FnGateway, RecordingGateway};

#[test]
#[ignore]
fn regenerate_fixture_transcript() {
    let lib = stgen_core::kb::load_apilib(&data("apilib.jsonl")).unwrap();
    let store = load_rq2st(&data("cases.jsonl"), &lib).unwrap();
    let mut lines = Vec::new();
    for c in store.cases() {
        let rec = serde_json::json!({ "case_id": c.record.id, "vector": embed(&c.record.task.metadata_text()) });
        lines.push(rec.to_string());
    }
    for t in tasks() {
        let rec = serde_json::json!({ "case_id": format!("task:{}", t.name), "vector": embed(&t.metadata_text()) });
        lines.push(rec.to_string());
    }
    fs::write(data("embeddings.jsonl"), lines.join("\n") + "\n").unwrap();

    let transcript = data("transcript.jsonl");
    let _ = fs::remove_file(&transcript);
    let script = Script::load();
    let responder = FnGateway(move |r: &stgen_core::llm::ChatRequest| script.respond(r));
    let llm = RecordingGateway::open(responder, &transcript).unwrap();
    let setup = setup();
    for (label, ablation) in ablations() {
        let run = run_benchmark(&tasks(), &setup.resources(), &llm, &config(ablation), 1).unwrap();
        println!("{label}: pass_rate {} avg_errors {}", run.metrics.pass_rate, run.metrics.avg_errors);
        for r in &run.results {
            println!("  {:<20} {:?} iterations {} errors {}", r.task, r.outcome, r.iterations, r.final_diagnostics().len());
        }
    }
}
