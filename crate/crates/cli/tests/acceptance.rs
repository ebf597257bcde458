//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Run with `cargo test -p stgen-cli --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use plc_st::corpus::load_dir;
use plc_st::{check_source, class_counts, parse, print_unit, DialectRegistry, Section};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use stgen_core::api_rec::{
    batches, filter_apis, lambda_par, lambda_similarity, lambda_simcase, ApiCandidateSet, BATCH,
};
use stgen_core::generator::{Patch, PatchSet, PatchStatus, TaskResult};
use stgen_core::generator::apply_patches;
use stgen_core::harness::{run_benchmark, RunMetrics};
use stgen_core::kb::{leakage_filter, names_leak, parse_apilib, parse_rq2st, ApiLib, StoredCase};
use stgen_core::llm::{
    ChatRequest, Completion, FnGateway, LiveConfig, LiveGateway, LlmError, ReplayGateway, ReqwestTransport, Usage,
};
use stgen_core::retrieval::{bm25_rank, Bm25Doc, Bm25Params};
use stgen_core::task::Task;
use stgen_core::templates::Templates;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixtures_dir(kind: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../st/tests/fixtures").join(kind)
}

fn parser_corpus() -> Check {
    let start = Instant::now();
    let reg = DialectRegistry::builtin();
    let valid = load_dir(&fixtures_dir("valid"))?;
    let errors = load_dir(&fixtures_dir("errors"))?;
    ensure(valid.len() >= 30, || format!("only {} clean fixtures", valid.len()))?;
    ensure(errors.len() >= 20, || format!("only {} seeded-error fixtures", errors.len()))?;
    for f in &valid {
        let d = reg.get(&f.dialect).map_err(|e| e.to_string())?;
        let diags = check_source(&f.source, &d, &());
        ensure(diags.is_empty(), || format!("{}: {}", f.name(), diags[0]))?;
        let once = print_unit(&parse(&f.source, &d).unit);
        let again = parse(&once, &d);
        ensure(again.diagnostics.is_empty(), || format!("{}: printed form does not parse", f.name()))?;
        ensure(print_unit(&again.unit) == once, || format!("{}: printing is not a fixpoint", f.name()))?;
    }
    for f in &errors {
        let d = reg.get(&f.dialect).map_err(|e| e.to_string())?;
        let expect = f.expect.ok_or_else(|| format!("{}: no expectation", f.name()))?;
        let got = class_counts(&check_source(&f.source, &d, &()));
        ensure(got == expect, || format!("{}: expected {expect:?}, got {got:?}", f.name()))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.2}s"))?;
    Ok(format!("{} clean, {} seeded, {secs:.2}s", valid.len(), errors.len()))
}

fn taxonomy_stability() -> Check {
    let reg = DialectRegistry::builtin();
    let mut fixtures = load_dir(&fixtures_dir("errors"))?;
    fixtures.extend(load_dir(&fixtures_dir("valid"))?);
    let mut total = 0;
    for f in &fixtures {
        let d = reg.get(&f.dialect).map_err(|e| e.to_string())?;
        let first = check_source(&f.source, &d, &());
        for _ in 0..100 {
            let run = check_source(&f.source, &d, &());
            ensure(run == first, || format!("{}: diagnostics differ between runs", f.name()))?;
            let counts = class_counts(&run);
            ensure(counts.iter().sum::<usize>() == run.len(), || format!("{}: class sum != total", f.name()))?;
        }
        total += first.len();
    }
    Ok(format!("{} fixtures x 100 runs, {total} findings", fixtures.len()))
}

/// Okapi BM25 written out directly from its definition.
fn bm25_oracle(query: &[String], docs: &[Bm25Doc], k1: f64, b: f64) -> Vec<(String, f64)> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.tokens.len() as f64).sum::<f64>() / n;
    let mut distinct: Vec<&String> = Vec::new();
    for t in query {
        if !distinct.contains(&t) {
            distinct.push(t);
        }
    }
    let mut out: Vec<(String, f64)> = docs
        .iter()
        .map(|doc| {
            let mut score = 0.0;
            for t in &distinct {
                let tf = doc.tokens.iter().filter(|x| x == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.tokens.contains(t)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let dl = doc.tokens.len() as f64;
                score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
            (doc.id.clone(), score)
        })
        .collect();
    out.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    out
}

fn bm25_agreement() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = StdRng::seed_from_u64(seed);
        let vocab: Vec<String> = (0..rng.gen_range(1..=8)).map(|i| format!("t{i}")).collect();
        let docs: Vec<Bm25Doc> = (0..rng.gen_range(1..=10))
            .map(|i| Bm25Doc {
                id: format!("d{i}"),
                tokens: (0..rng.gen_range(0..12)).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect(),
            })
            .collect();
        let query: Vec<String> = (0..rng.gen_range(1..6)).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect();
        let got = bm25_rank(&query, &docs, Bm25Params::default());
        let want = bm25_oracle(&query, &docs, 1.2, 0.75);
        ensure(got.len() == want.len(), || format!("seed {seed}: {} docs ranked, expected {}", got.len(), want.len()))?;
        let want_scores: HashMap<&str, f64> = want.iter().map(|(id, s)| (id.as_str(), *s)).collect();
        for (id, s) in &got {
            let diff = (s - want_scores[id.as_str()]).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-9, || format!("seed {seed}: {id} scored {s}, oracle {}", want_scores[id.as_str()]))?;
        }
        let order = |v: &[(String, f64)]| v.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>();
        ensure(order(&got) == order(&want), || format!("seed {seed}: {:?} vs {:?}", order(&got), order(&want)))?;
    }
    Ok(format!("50 corpora, max score difference {worst:e}"))
}

fn contains_naive(hay: &str, needle: &str) -> bool {
    let h: Vec<char> = hay.chars().flat_map(char::to_lowercase).collect();
    let n: Vec<char> = needle.chars().flat_map(char::to_lowercase).collect();
    if n.len() > h.len() {
        return false;
    }
    (0..=h.len() - n.len()).any(|i| h[i..i + n.len()] == n[..])
}

fn random_name(rng: &mut StdRng) -> String {
    let alphabet = ['a', 'B', 'b', 'A', '_', 'c'];
    (0..rng.gen_range(1..=6)).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

fn leakage() -> Check {
    let mut rng = StdRng::seed_from_u64(7);
    let mut leaks = 0;
    for _ in 0..10_000 {
        let (a, b) = (random_name(&mut rng), random_name(&mut rng));
        let want = contains_naive(&a, &b) || contains_naive(&b, &a);
        ensure(names_leak(&a, &b) == want, || format!("`{a}` vs `{b}`: expected {want}"))?;
        leaks += want as usize;
    }
    let lib = stgen_core::kb::load_apilib(&data("apilib.jsonl")).map_err(|e| e.to_string())?;
    for round in 0..50 {
        let names: Vec<String> = (0..12).map(|_| random_name(&mut rng)).collect();
        let lines: Vec<String> = names
            .iter()
            .enumerate()
            .map(|(i, n)| serde_json::json!({"id": format!("c{i}"), "task": {"name": n, "req": "r"}, "code": "x"}).to_string())
            .collect();
        let store = parse_rq2st(&lines.join("\n"), &lib);
        let task = Task { name: random_name(&mut rng), ..tasks()[0].clone() };
        let kept: BTreeSet<String> = leakage_filter(&task, &store).iter().map(|c| c.record.id.clone()).collect();
        let want: BTreeSet<String> = names
            .iter()
            .enumerate()
            .filter(|(_, n)| !(contains_naive(&task.name, n) || contains_naive(n, &task.name)))
            .map(|(i, _)| format!("c{i}"))
            .collect();
        ensure(kept == want, || format!("round {round}: task `{}` kept {kept:?}, expected {want:?}", task.name))?;
    }
    let fifo = tasks().into_iter().find(|t| t.name == "FifoBuffer").ok_or("no FifoBuffer task")?;
    let store = stgen_core::kb::load_rq2st(&data("cases.jsonl"), &lib).map_err(|e| e.to_string())?;
    let view = leakage_filter(&fifo, &store);
    ensure(view.iter().all(|c| c.record.task.name != "FifoBufferLegacy"), || "fixture leak not removed".into())?;
    Ok(format!("10000 pairs ({leaks} leaking), 50 store filters"))
}

const WORDS: &[&str] = &[
    "timer", "copy", "block", "string", "convert", "scale", "analog", "count", "date", "time", "limit", "edge",
];
const TYPES: &[&str] = &["BOOL", "INT", "REAL", "DTL", "Variant", "Array[1..4] of DTL", "STRING[20]", "DINT"];

fn random_library(rng: &mut StdRng) -> ApiLib {
    let n = rng.gen_range(3..=45);
    let lines: Vec<String> = (0..n)
        .map(|i| {
            let desc: Vec<&str> = (0..rng.gen_range(2..6)).map(|_| *WORDS.choose(rng).unwrap()).collect();
            let params: Vec<serde_json::Value> = (0..rng.gen_range(0..3))
                .map(|j| serde_json::json!({"name": format!("P{j}"), "type": TYPES.choose(rng).unwrap(), "direction": "IN"}))
                .collect();
            serde_json::json!({"name": format!("API_{i:02}"), "description": desc.join(" "), "params": params}).to_string()
        })
        .collect();
    parse_apilib(&lines.join("\n"), "random").expect("random library is valid")
}

fn listed_names(user: &str) -> Vec<String> {
    user.lines().filter_map(|l| l.strip_prefix("- ")).map(str::to_string).collect()
}

fn candidate_algebra() -> Check {
    let dialect = DialectRegistry::builtin().get(DIALECT).map_err(|e| e.to_string())?;
    let templates = Templates::default();
    let mut largest = 0;
    for seed in 0..60u64 {
        let mut rng = StdRng::seed_from_u64(1000 + seed);
        let lib = random_library(&mut rng);
        let io = (0..rng.gen_range(0..3))
            .map(|j| plc_st::ParamSpec::new(&format!("x{j}"), TYPES.choose(&mut rng).unwrap(), plc_st::Direction::In))
            .collect();
        let task = Task { name: "Random".into(), req: "r".into(), io, ..tasks()[0].clone() };
        let queries: Vec<String> = (0..rng.gen_range(1..4))
            .map(|_| (0..3).map(|_| *WORDS.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" "))
            .collect();
        let lib_names: Vec<&str> = lib.names().collect();
        let cases: Vec<String> = (0..4)
            .map(|i| {
                let mut apis: Vec<String> =
                    (0..rng.gen_range(0..4)).map(|_| lib_names.choose(&mut rng).unwrap().to_string()).collect();
                apis.push("NOT_IN_LIBRARY".into());
                serde_json::json!({"id": format!("c{i}"), "task": {"name": format!("case{i}"), "req": ""}, "code": "x", "apis": apis})
                    .to_string()
            })
            .collect();
        let store = parse_rq2st(&cases.join("\n"), &lib);
        let selected: Vec<&StoredCase> = store.cases().iter().filter(|_| rng.gen_bool(0.5)).collect();

        let sim = lambda_similarity(&queries, &lib);
        let par = lambda_par(&task, &lib, &dialect);
        let by_case = lambda_simcase(&selected);
        let mut set = ApiCandidateSet::new(sim.clone(), par.clone(), by_case.clone());
        let expected: BTreeSet<String> = sim.union(&par).cloned().collect::<BTreeSet<_>>().union(&by_case).cloned().collect();
        ensure(set.union == expected, || format!("seed {seed}: union differs"))?;
        largest = largest.max(set.union.len());

        let chunks = batches(&set.union);
        ensure(chunks.iter().all(|b| !b.is_empty() && b.len() <= BATCH), || format!("seed {seed}: batch over {BATCH}"))?;
        let rejoined: BTreeSet<String> = chunks.concat().into_iter().collect();
        ensure(rejoined == set.union && chunks.concat().len() == set.union.len(), || format!("seed {seed}: batches do not partition"))?;

        let keep_some = FnGateway(|r: &ChatRequest| -> Result<Completion, LlmError> {
            let keep: Vec<String> = listed_names(&r.user).into_iter().filter(|n| n.len() % 2 == 0 || n.ends_with('3')).collect();
            Ok(Completion { text: serde_json::to_string(&keep).unwrap(), usage: Usage::default() })
        });
        let seen = AtomicUsize::new(0);
        let counting = FnGateway(|r: &ChatRequest| -> Result<Completion, LlmError> {
            seen.fetch_max(listed_names(&r.user).len(), Ordering::SeqCst);
            keep_some.0(r)
        });
        let (kept, outcomes) = filter_apis(&set.union, &task, None, &lib, &dialect, &counting, &templates).map_err(|e| e.to_string())?;
        ensure(seen.load(Ordering::SeqCst) <= BATCH, || format!("seed {seed}: a prompt listed more than {BATCH}"))?;
        ensure(outcomes.iter().all(|o| o.names.len() <= BATCH), || format!("seed {seed}: batch over {BATCH}"))?;
        set.filtered = kept;
        set.check(&lib).map_err(|e| format!("seed {seed}: {e}"))?;

        let garbage = FnGateway(|_: &ChatRequest| -> Result<Completion, LlmError> {
            Ok(Completion { text: "I would rather not say.".into(), usage: Usage::default() })
        });
        let down = FnGateway(|_: &ChatRequest| -> Result<Completion, LlmError> { Err(LlmError::Transport("refused".into())) });
        for (label, g) in [("unparseable", &garbage as &dyn stgen_core::llm::LlmGateway), ("transport", &down)] {
            let (kept, outcomes) = filter_apis(&set.union, &task, None, &lib, &dialect, g, &templates).map_err(|e| e.to_string())?;
            ensure(kept == set.union, || format!("seed {seed}: {label} failure lost candidates"))?;
            ensure(outcomes.iter().all(|o| o.failed), || format!("seed {seed}: {label} batch not marked failed"))?;
        }
    }
    Ok(format!("60 random libraries, largest union {largest}"))
}

fn replay_run(workers: usize) -> Result<(Vec<TaskResult>, RunMetrics), String> {
    let setup = setup();
    let llm = ReplayGateway::open(&data("transcript.jsonl")).map_err(|e| e.to_string())?;
    let run = run_benchmark(&tasks(), &setup.resources(), &llm, &config(Default::default()), workers).map_err(|e| e.to_string())?;
    Ok((run.results, run.metrics))
}

fn declaration_first(r: &TaskResult) -> Result<(), String> {
    let mut prev = r.artifacts.initial_report.clone().ok_or("no initial report")?;
    for round in &r.artifacts.rounds {
        let decl: Vec<_> = prev.diagnostics.iter().filter(|d| d.section == Section::Declaration).cloned().collect();
        if decl.is_empty() {
            ensure(round.focus == Section::Implementation && round.prompt_diagnostics == prev.diagnostics, || {
                format!("{} round {}: implementation round does not show every finding", r.task, round.iteration)
            })?;
        } else {
            ensure(round.focus == Section::Declaration && round.prompt_diagnostics == decl, || {
                format!("{} round {}: declaration findings were not handled first", r.task, round.iteration)
            })?;
        }
        prev = round.report.clone();
    }
    Ok(())
}

fn replay_determinism() -> Check {
    let mut bytes = Vec::new();
    for workers in [1, 1, 4] {
        let (results, metrics) = replay_run(workers)?;
        let json = serde_json::to_string(&(&results, &metrics)).map_err(|e| e.to_string())?;
        bytes.push((json, results, metrics));
    }
    ensure(bytes.iter().all(|b| b.0 == bytes[0].0), || "runs are not byte-identical".into())?;
    let (_, results, m) = &bytes[0];
    ensure(m.pass_rate == 0.8, || format!("pass rate {}", m.pass_rate))?;
    ensure((m.avg_errors - 0.6).abs() < 1e-12, || format!("avg errors {}", m.avg_errors))?;
    let rounds: usize = results.iter().map(|r| r.artifacts.rounds.len()).sum();
    for r in results {
        ensure(r.iterations <= 3, || format!("{}: {} iterations", r.task, r.iterations))?;
        declaration_first(r)?;
    }
    Ok(format!("3 runs identical, pass rate {} avg errors {}, {rounds} rounds checked", m.pass_rate, m.avg_errors))
}

fn ablation_semantics() -> Check {
    let setup = setup();
    let mut initial: BTreeMap<String, Option<plc_st::CompileReport>> = BTreeMap::new();
    let mut summary = Vec::new();
    for (label, ablation) in ablations() {
        let llm = ReplayGateway::open(&data("transcript.jsonl")).map_err(|e| e.to_string())?;
        let run = run_benchmark(&tasks(), &setup.resources(), &llm, &config(ablation), 2).map_err(|e| e.to_string())?;
        for r in &run.results {
            let tags: BTreeSet<&str> = r.calls.iter().map(|c| c.tag.as_str()).collect();
            let a = &r.artifacts;
            let prompt = a.prompt.as_ref().ok_or_else(|| format!("{label}/{}: no prompt", r.task))?;
            let fail = |what: &str| format!("{label}/{}: {what}", r.task);
            if !ablation.planning {
                ensure(!tags.contains("classify") && !tags.contains("plan"), || fail("planning calls made"))?;
                ensure(a.plan.is_none() && prompt.plan_block.is_none(), || fail("plan present"))?;
            }
            if !ablation.cases {
                ensure(!tags.contains("rerank"), || fail("rerank call made"))?;
                ensure(prompt.fewshot_block.is_none(), || fail("few-shot block present"))?;
                ensure(a.api_candidates.as_ref().map_or(true, |s| s.by_case.is_empty()), || fail("case APIs present"))?;
            }
            if !ablation.api_rec {
                ensure(!tags.contains("api_filter"), || fail("api filter call made"))?;
                ensure(prompt.apis_block.is_none() && a.api_candidates.is_none(), || fail("API candidates present"))?;
            }
            if !ablation.self_improve {
                ensure(r.iterations == 0 && !tags.contains("repair"), || fail("repair ran"))?;
            }
            match initial.get(&r.task) {
                Some(first) => ensure(*first == a.initial_report, || fail("initial report differs from the full run"))?,
                None => {
                    initial.insert(r.task.clone(), a.initial_report.clone());
                }
            }
        }
        summary.push(format!("{label} {:.1}/{:.1}", run.metrics.pass_rate, run.metrics.avg_errors));
    }
    Ok(summary.join(", "))
}

fn patch_property() -> Check {
    let alphabet: Vec<char> = "abcdefgh ;:=\n".chars().collect();
    let mut applied = 0;
    for seed in 0..300u64 {
        let mut rng = StdRng::seed_from_u64(5000 + seed);
        let source: String = (0..rng.gen_range(40..300)).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
        let count = |s: &str, n: &str| (0..=s.len().saturating_sub(n.len())).filter(|&i| s[i..].starts_with(n)).count();
        let mut spans: Vec<(usize, usize, String)> = Vec::new();
        for _ in 0..rng.gen_range(1..6) {
            let len = rng.gen_range(3..10).min(source.len());
            let at = rng.gen_range(0..=source.len() - len);
            let snippet = &source[at..at + len];
            if count(&source, snippet) != 1 || spans.iter().any(|(s, e, _)| at < *e && *s < at + len) {
                continue;
            }
            let replacement: String = (0..rng.gen_range(0..6)).map(|_| char::from(b'0' + rng.gen_range(0..10))).collect();
            spans.push((at, at + len, replacement));
        }
        let mut expected = source.clone();
        let mut by_offset = spans.clone();
        by_offset.sort_by_key(|s| std::cmp::Reverse(s.0));
        for (s, e, r) in &by_offset {
            expected.replace_range(*s..*e, r);
        }
        let mut patches: Vec<Patch> = spans
            .iter()
            .map(|(s, e, r)| Patch { find: source[*s..*e].to_string(), replace: r.clone(), section: Section::Implementation })
            .collect();
        patches.shuffle(&mut rng);
        let (out, outcomes) = apply_patches(&source, &PatchSet { patches });
        ensure(out == expected, || format!("seed {seed}: edits touched text outside the matched spans"))?;
        ensure(outcomes.iter().all(|o| matches!(o.status, PatchStatus::Applied { .. })), || format!("seed {seed}: unique snippet skipped"))?;
        applied += spans.len();

        let dup = format!("{source}\n;ab=cd;\n;ab=cd;\n");
        let (out, outcomes) = apply_patches(&dup, &PatchSet {
            patches: vec![Patch { find: ";ab=cd;".into(), replace: "X".into(), section: Section::Implementation }],
        });
        ensure(out == dup, || format!("seed {seed}: ambiguous snippet changed the source"))?;
        ensure(matches!(outcomes[0].status, PatchStatus::Ambiguous { count } if count >= 2), || format!("seed {seed}: not reported ambiguous"))?;
    }
    Ok(format!("300 sources, {applied} unique edits"))
}

/// Chat-completions stub answering from the script; the tag is recovered
/// from the system prompt.
fn serve_stub(listener: TcpListener, served: Arc<AtomicUsize>) {
    let script = Script::load();
    let templates = Templates::default();
    let dialect = setup().dialect.name.clone();
    let systems: Vec<(String, String)> = ["classify", "plan", "rerank", "api_filter", "generate", "repair"]
        .iter()
        .map(|t| (t.to_string(), templates.render(&format!("{t}.system"), &[("dialect", &dialect)]).unwrap()))
        .collect();
    for stream in listener.incoming() {
        let Ok(mut stream) = stream else { continue };
        served.fetch_add(1, Ordering::SeqCst);
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut len = 0usize;
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap_or(0);
            }
            if line == "\r\n" {
                break;
            }
        }
        let mut body = vec![0u8; len];
        if reader.read_exact(&mut body).is_err() {
            continue;
        }
        let sent: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
        let system = sent["messages"][0]["content"].as_str().unwrap_or("").to_string();
        let user = sent["messages"][1]["content"].as_str().unwrap_or("").to_string();
        let tag = systems.iter().find(|(_, s)| *s == system).map_or("unknown", |(t, _)| t.as_str());
        let (status, reply) = match script.respond(&ChatRequest::new(tag, system.clone(), user)) {
            Ok(c) => (
                "200 OK",
                serde_json::json!({
                    "choices": [{"message": {"role": "assistant", "content": c.text}}],
                    "usage": {"prompt_tokens": c.usage.prompt_tokens, "completion_tokens": c.usage.completion_tokens},
                })
                .to_string(),
            ),
            Err(e) => ("400 Bad Request", e.to_string()),
        };
        let _ = write!(
            stream,
            "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
            reply.len()
        );
    }
}

fn live_and_socket() -> Check {
    let mut detail = Vec::new();
    if std::env::var_os("PLCGEN_LIVE_SMOKE").is_some() {
        let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        let served = Arc::new(AtomicUsize::new(0));
        let s = served.clone();
        std::thread::spawn(move || serve_stub(listener, s));
        let mut cfg = LiveConfig::new(format!("http://{addr}/v1/chat/completions"), "stub");
        cfg.timeout = Duration::from_secs(20);
        let llm = LiveGateway::new(cfg, ReqwestTransport::new().map_err(|e| e.to_string())?);
        let setup = setup();
        let task = tasks().into_iter().find(|t| t.name == "BlockCopy").ok_or("no BlockCopy task")?;
        let r = stgen_core::generator::run_pipeline(&task, &setup.resources(), &llm, &config(Default::default()));
        ensure(r.passed(), || format!("live smoke task ended {:?}", r.outcome))?;
        ensure(r.usage.calls > 0 && r.usage.prompt_tokens > 0 && r.usage.cost > 0.0, || "usage not recorded".into())?;
        ensure(served.load(Ordering::SeqCst) >= r.usage.calls, || "calls did not reach the stub".into())?;
        detail.push(format!("live smoke passed with {} calls, cost {:.4}", r.usage.calls, r.usage.cost));
    } else {
        detail.push("live smoke skipped (PLCGEN_LIVE_SMOKE unset)".to_string());
    }

    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    listener.set_nonblocking(true).map_err(|e| e.to_string())?;
    let connections = Arc::new(AtomicUsize::new(0));
    let done = Arc::new(AtomicUsize::new(0));
    let (c, d) = (connections.clone(), done.clone());
    let watcher = std::thread::spawn(move || {
        while d.load(Ordering::SeqCst) == 0 {
            if listener.accept().is_ok() {
                c.fetch_add(1, Ordering::SeqCst);
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    });
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_stgen"))
        .args(["bench", "run"])
        .arg(data("tasks.jsonl"))
        .args(["--dialect", DIALECT, "--workers", "2", "--format", "json"])
        .arg("--apilib")
        .arg(data("apilib.jsonl"))
        .arg("--cases")
        .arg(data("cases.jsonl"))
        .arg("--embeddings")
        .arg(data("embeddings.jsonl"))
        .arg("--replay")
        .arg(data("transcript.jsonl"))
        .env("PLCGEN_LLM_ENDPOINT", format!("http://{addr}/v1/chat/completions"))
        .env("PLCGEN_LLM_MODEL", "m")
        .output()
        .map_err(|e| e.to_string())?;
    std::thread::sleep(Duration::from_millis(50));
    done.store(1, Ordering::SeqCst);
    watcher.join().map_err(|_| "watcher panicked".to_string())?;
    ensure(out.status.success(), || format!("replay bench exited {}: {}", out.status, String::from_utf8_lossy(&out.stderr)))?;
    let metrics: RunMetrics = serde_json::from_slice(&out.stdout).map_err(|e| format!("metrics json: {e}"))?;
    ensure(metrics.pass_rate == 0.8, || format!("replay bench pass rate {}", metrics.pass_rate))?;
    let n = connections.load(Ordering::SeqCst);
    ensure(n == 0, || format!("replay run opened {n} connections"))?;
    detail.push("replay bench opened 0 connections".to_string());
    Ok(detail.join("; "))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Check)> = vec![
        ("parser corpus", parser_corpus),
        ("taxonomy stability", taxonomy_stability),
        ("bm25 oracle", bm25_agreement),
        ("leakage filter", leakage),
        ("api candidate sets", candidate_algebra),
        ("replay determinism", replay_determinism),
        ("ablation semantics", ablation_semantics),
        ("patch application", patch_property),
        ("live smoke and offline replay", live_and_socket),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS  {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2} {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
