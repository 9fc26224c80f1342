use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use align_curate::corpus::{load_corpus, write_corpus, CaptionRecord, Corpus, Label, NegType};
use align_curate::neggen::{build_prompt, chat_request, LlmSettings};
use align_curate::scoring::{score_request, ScoreRequest};
use align_curate::transport::{write_fixture, FixtureEntry};
use serde_json::{json, Value};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_align-curate"))
        .args(args)
        .env_remove("ALIGN_LLM_API_KEY")
        .output()
        .expect("spawn align-curate")
}

fn summary(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_corpus() -> Corpus {
    let mut recs = Vec::new();
    for i in 0..4 {
        recs.push(CaptionRecord::positive(
            format!("p{i}"),
            format!("img{i}"),
            format!("a dog number {i} on the grass"),
        ));
        recs.push(CaptionRecord::negative(
            format!("n{i}"),
            format!("img{i}"),
            format!("a cat number {i} on the grass"),
            NegType::Replace,
            format!("p{i}"),
        ));
    }
    Corpus::from_records(recs).unwrap()
}

#[test]
fn filter_k0_is_identity_and_input_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.jsonl");
    let input = fixture("planted_bias.jsonl");
    let before = std::fs::read(&input).unwrap();
    let res = cli(&["filter", "--input", s(&input), "--output", s(&out), "--k", "0"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let a = load_corpus(&input).unwrap();
    let b = load_corpus(&out).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(std::fs::read(&input).unwrap(), before);
    let sm = summary(&res);
    assert_eq!(sm["removed"], 0);
    assert_eq!(sm["config"]["k_percent"], 0.0);
}

#[test]
fn audit_flags_planted_bias_fixture() {
    let res = cli(&["audit", "--input", s(&fixture("planted_bias.jsonl"))]);
    assert_eq!(res.status.code(), Some(0));
    let sm = summary(&res);
    assert!(sm["accuracy"].as_f64().unwrap() >= 0.95, "{sm}");
    assert_eq!(sm["above_threshold"], true);
    assert!(sm["warning"].as_str().unwrap().contains("60%"));
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
}

#[test]
fn eval_roc_auc_fixture() {
    let res = cli(&["eval", "--input", s(&fixture("eval_auc.jsonl")), "--metric", "roc_auc"]);
    assert_eq!(res.status.code(), Some(0));
    let sm = &summary(&res)["metric"];
    assert_eq!(sm["name"], "roc_auc");
    assert_eq!(sm["value"], 0.75);
    assert_eq!(sm["n"], 4);
}

#[test]
fn eval_other_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let quads = dir.path().join("quads.jsonl");
    std::fs::write(
        &quads,
        "{\"s00\":0.9,\"s01\":0.2,\"s10\":0.1,\"s11\":0.8}\n{\"s00\":0.9,\"s01\":0.9,\"s10\":0.1,\"s11\":0.8}\n",
    )
    .unwrap();
    let sm = summary(&cli(&["eval", "--input", s(&quads), "--metric", "winoground"]))["metric"].clone();
    let m = &sm["config"];
    assert_eq!((m["text"].as_f64(), m["image"].as_f64(), sm["value"].as_f64()), (Some(0.5), Some(0.5), Some(0.5)));
    let sm = summary(&cli(&["eval", "--input", s(&quads), "--metric", "magicbrush"]));
    assert_eq!(sm["metric"]["value"], 1.0);

    let ranks = dir.path().join("ranks.jsonl");
    std::fs::write(
        &ranks,
        "{\"score\":1,\"human\":1,\"group\":\"a\"}\n{\"score\":2,\"human\":3,\"group\":\"a\"}\n{\"score\":3,\"human\":2,\"group\":\"a\"}\n{\"score\":4,\"human\":4,\"group\":\"a\"}\n",
    )
    .unwrap();
    let sm = summary(&cli(&["eval", "--input", s(&ranks), "--metric", "spearman"]));
    assert!((sm["metric"]["value"].as_f64().unwrap() - 0.8).abs() < 1e-15);
    let sm = summary(&cli(&["eval", "--input", s(&ranks), "--metric", "kendall", "--aggregation", "per-group"]));
    assert!((sm["metric"]["value"].as_f64().unwrap() - 4.0 / 6.0).abs() < 1e-15);
    assert_eq!(sm["metric"]["config"]["aggregation"], "per-group");
    assert_eq!(sm["config"]["aggregation"], "per-group");

    let res = cli(&["eval", "--input", s(&ranks), "--metric", "bleu"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("unknown metric"));
}

#[test]
fn validation_errors_exit_1_with_distinct_messages() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.jsonl");

    let unknown = cli(&["balance", "--input", "x", "--output", s(&out), "--bogus"]);
    assert_eq!(unknown.status.code(), Some(1));

    let missing = cli(&["balance", "--input", s(&dir.path().join("nope.jsonl")), "--output", s(&out)]);
    assert_eq!(missing.status.code(), Some(1));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\":\"a\",\"image_ref\":\"i\",\"text\":\"t\"}\n").unwrap();
    let schema = cli(&["balance", "--input", s(&bad), "--output", s(&out)]);
    assert_eq!(schema.status.code(), Some(1));

    let bad_k = cli(&["filter", "--input", s(&bad), "--output", s(&out), "--k", "150"]);
    assert_eq!(bad_k.status.code(), Some(1));

    let messages: Vec<String> =
        [&unknown, &missing, &schema, &bad_k].iter().map(|o| String::from_utf8_lossy(&o.stderr).into_owned()).collect();
    assert!(messages[0].contains("--bogus"));
    assert!(messages[1].contains("nope.jsonl"));
    assert!(messages[2].contains("label"));
    assert!(messages[3].contains("k must be within"));
    for i in 0..messages.len() {
        for j in i + 1..messages.len() {
            assert_ne!(messages[i], messages[j]);
        }
    }
    assert!(!out.exists());
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
    assert_eq!(cli(&["--version"]).status.code(), Some(0));
    assert_eq!(cli(&[]).status.code(), Some(1));
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "seed = 5\nk = 40\nfolds = 3\n").unwrap();
    let out = dir.path().join("o.jsonl");
    let input = fixture("planted_bias.jsonl");
    let res = cli(&["filter", "--config", s(&cfg), "--input", s(&input), "--output", s(&out), "--k", "10"]);
    assert_eq!(res.status.code(), Some(0));
    let c = &summary(&res)["config"];
    assert_eq!((c["seed"].as_u64(), c["folds"].as_u64(), c["k_percent"].as_f64()), (Some(5), Some(3), Some(10.0)));

    std::fs::write(&cfg, "colour = red\n").unwrap();
    let res = cli(&["filter", "--config", s(&cfg), "--input", s(&input), "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("unknown key `colour`"));
}

#[test]
fn balance_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let full = small_corpus();
    let corpus = full.retain_indices(|i| !matches!(full.records[i].id.as_str(), "n2" | "n3"));
    write_corpus(&corpus, &input).unwrap();
    let bal = dir.path().join("bal.jsonl");
    let res = cli(&["balance", "--input", s(&input), "--output", s(&bal), "--seed", "3"]);
    assert_eq!(res.status.code(), Some(0));
    let b = load_corpus(&bal).unwrap();
    assert_eq!((b.count(Label::Positive), b.count(Label::Negative)), (2, 2));

    let train = dir.path().join("train.jsonl");
    let res = cli(&["export-train", "--input", s(&bal), "--output", s(&train)]);
    assert_eq!(summary(&res)["examples"], 4);
    let first: Value = serde_json::from_str(std::fs::read_to_string(&train).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(
        first["prompt"],
        format!("Does this image match the following caption {}. Answer Yes or No directly.", b.records[0].text)
    );
}

#[test]
fn leak_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let test = dir.path().join("test.jsonl");
    write_corpus(&small_corpus(), &train).unwrap();
    let leaky = Corpus::from_records(vec![CaptionRecord::positive("t0", "other.jpg", "A dog number 2 on the  grass!")])
        .unwrap();
    write_corpus(&leaky, &test).unwrap();
    let res = cli(&["leak-check", "--input", s(&train), "--test", s(&test)]);
    assert_eq!(res.status.code(), Some(1));
    let sm = summary(&res);
    assert_eq!((sm["caption_collisions"].as_u64(), sm["image_collisions"].as_u64()), (Some(1), Some(0)));

    let clean = Corpus::from_records(vec![CaptionRecord::positive("t0", "other.jpg", "a horse")]).unwrap();
    write_corpus(&clean, &test).unwrap();
    assert_eq!(cli(&["leak-check", "--input", s(&train), "--test", s(&test)]).status.code(), Some(0));
}

fn chat_reply(content: &str) -> Value {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
}

#[test]
fn gen_neg_replays_llm_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pos.jsonl");
    let pos = Corpus::from_records(vec![
        CaptionRecord::positive("a", "a.jpg", "a knife is on the table"),
        CaptionRecord::positive("b", "b.jpg", "horse eating grass"),
    ])
    .unwrap();
    write_corpus(&pos, &input).unwrap();

    let settings = LlmSettings::default();
    let entry = |caption: &str, strategy, reply: &str| {
        FixtureEntry::new(chat_request(&build_prompt(caption, strategy).unwrap(), &settings), chat_reply(reply))
    };
    let entries = vec![
        entry("a knife is on the table", NegType::Replace, "a spoon is on the table"),
        entry("horse eating grass", NegType::Replace, "horse eating hay"),
        entry(
            "a knife is on the table",
            NegType::Swap,
            "Old caption: a knife is on the table\nNew caption: a table is on the knife",
        ),
        entry("horse eating grass", NegType::Swap, "New caption: grass eating horse"),
    ];
    let fx = dir.path().join("llm.jsonl");
    write_fixture(&fx, &entries).unwrap();

    let out = dir.path().join("neg.jsonl");
    let res = cli(&["gen-neg", "--input", s(&input), "--output", s(&out), "--llm-fixture", s(&fx)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(summary(&res)["generator"], "llm");
    let c = load_corpus(&out).unwrap();
    let texts: Vec<&str> = c.records.iter().filter(|r| r.label == Label::Negative).map(|r| r.text.as_str()).collect();
    assert_eq!(texts, ["a spoon is on the table", "horse eating hay", "a table is on the knife", "grass eating horse"]);
    let log = std::fs::read_to_string(dir.path().join("neg.log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert!(log.contains("New caption: grass eating horse"));

    // a fixture without the swap entries is a transport failure
    write_fixture(&fx, &entries[..2]).unwrap();
    let res =
        cli(&["gen-neg", "--input", s(&input), "--output", s(&out), "--llm-fixture", s(&fx), "--strategy", "both"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(summary(&res)["status"], "transport_error");
}

#[test]
fn score_from_logits_and_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let logits = dir.path().join("logits.jsonl");
    std::fs::write(&logits, "{\"pair_id\":\"x\",\"yes_logit\":0.0,\"no_logit\":0.0}\n{\"pair_id\":\"y\",\"yes_logit\":2.0,\"no_logit\":-1.0}\n").unwrap();
    let out = dir.path().join("scores.jsonl");
    let res = cli(&["score", "--logits", s(&logits), "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(0));
    let lines: Vec<Value> =
        std::fs::read_to_string(&out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["score"], 0.5);
    assert!((lines[1]["score"].as_f64().unwrap() - 1.0 / (1.0 + (-3.0f64).exp())).abs() < 1e-15);

    let reqs: Vec<ScoreRequest> = (0..3)
        .map(|i| ScoreRequest {
            pair_id: format!("p{i}"),
            image_ref: format!("{i}.jpg"),
            caption: format!("caption {i}"),
        })
        .collect();
    let pairs = dir.path().join("pairs.jsonl");
    std::fs::write(&pairs, reqs.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect::<String>()).unwrap();
    let entries: Vec<FixtureEntry> = reqs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            FixtureEntry::new(score_request(r), json!({"pair_id": r.pair_id, "yes_logit": i as f64, "no_logit": 0.0}))
        })
        .collect();
    let fx = dir.path().join("score_fx.jsonl");
    write_fixture(&fx, &entries).unwrap();
    let res = cli(&["score", "--input", s(&pairs), "--score-fixture", s(&fx), "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(summary(&res)["pairs"], 3);

    write_fixture(&fx, &entries[..1]).unwrap();
    let res = cli(&["score", "--input", s(&pairs), "--score-fixture", s(&fx), "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(2));

    let res = cli(&["score", "--input", s(&pairs), "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
}
