use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clipattr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clipattr"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = clipattr(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// synth → ingest → embed → index, in `dir`.
fn pipeline(dir: &Path) {
    ok(&["synth", "--out-dir", "corpus", "--songs", "8", "--seconds", "9"], dir);
    ok(&["ingest", "corpus/manifest.jsonl", "--out", "clips.jsonl"], dir);
    ok(&["embed", "clips.jsonl", "--manifest", "corpus/manifest.jsonl", "--out", "store.mrem"], dir);
    ok(&["index", "build", "store.mrem", "--out", "clips.mrix"], dir);
}

#[test]
fn end_to_end_query_finds_source_song() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    assert_eq!(fs::read_to_string(dir.join("clips.jsonl")).unwrap().lines().count(), 24);
    assert_eq!(fs::read_to_string(dir.join("songs.jsonl")).unwrap().lines().count(), 8);

    let out = ok(
        &[
            "query",
            "corpus/song-0003.wav",
            "--index",
            "clips.mrix",
            "--songs",
            "songs.jsonl",
            "--prompt",
            "corpus/song-0003.wav",
            "--mode",
            "exact",
        ],
        dir,
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["query_id"], "song-0003");
    assert_eq!(report["song_matches"][0]["song_id"], "song-0003");
    assert_eq!(report["song_matches"][0]["title"], "Synthetic Song 3");
    assert!(report["song_matches"][0]["score"].as_f64().unwrap() > 0.999);
    assert_eq!(report["threshold"], 0.875);
    assert_eq!(report["flagged"], true);
    assert!(report["prompt_similarity"].as_f64().unwrap() > 0.999);

    // Config supplies the threshold; the flag overrides it.
    fs::write(dir.join("c.toml"), "[query]\nthreshold = 1.5\nk_songs = 2\n").unwrap();
    let base = ["query", "corpus/song-0001.wav", "--index", "clips.mrix", "--songs", "songs.jsonl"];
    let out = ok(&[&base[..], &["--config", "c.toml"]].concat(), dir);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["threshold"], 1.5);
    assert_eq!(r["flagged"], false);
    assert_eq!(r["song_matches"].as_array().unwrap().len(), 2);
    let out = ok(&[&base[..], &["--config", "c.toml", "--threshold", "0.5"]].concat(), dir);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["threshold"], 0.5);
}

#[test]
fn sweep_and_model_eval_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    let sweep = [
        "sweep", "pitch", "--index", "clips.mrix", "--manifest", "corpus/manifest.jsonl", "--grid", "-1:1:1",
        "--targets", "6", "--out", "pitch.csv",
    ];
    ok(&sweep, dir);
    let csv = fs::read_to_string(dir.join("pitch.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "level,n_targets,recall@1,recall@5,recall@10");
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[2], "0,6,1,1,1");
    let first = fs::read(dir.join("pitch.csv")).unwrap();
    ok(&sweep, dir);
    assert_eq!(fs::read(dir.join("pitch.csv")).unwrap(), first);

    fs::write(
        dir.join("queries.jsonl"),
        "{\"query_id\":\"a\",\"path\":\"corpus/song-0000.wav\"}\n\
         {\"query_id\":\"b\",\"path\":\"corpus/song-0005.wav\",\"prompt_path\":\"corpus/song-0002.wav\"}\n",
    )
    .unwrap();
    ok(
        &[
            "eval-model", "queries.jsonl", "--index", "clips.mrix", "--songs", "songs.jsonl", "--thresholds",
            "0.99,0.5", "--out", "eval.json",
        ],
        dir,
    );
    let s: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(s["n_queries"], 2);
    assert_eq!(s["prompt_similarity"]["n"], 1);
    assert_eq!(s["census"][0]["cells"][0]["count"], 2);
    assert_eq!(s["census"][0]["cells"][0]["total"], 2);
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // Missing input file: I/O.
    let out = clipattr(&["index", "build", "nope.mrem", "--out", "x.mrix"], dir);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    // Unknown subcommand and missing required option: validation.
    assert_eq!(clipattr(&["frobnicate"], dir).status.code(), Some(2));
    assert_eq!(clipattr(&["synth"], dir).status.code(), Some(2));

    // Corrupt index: validation.
    fs::write(dir.join("bad.mrix"), b"MRIXgarbage").unwrap();
    let out = clipattr(&["calibrate", "bad.mrix", "--out", "p.json"], dir);
    assert_eq!(out.status.code(), Some(2));

    // Unknown config key: validation.
    fs::write(dir.join("c.toml"), "[synth]\ncolour = 1\n").unwrap();
    let out = clipattr(&["synth", "--config", "c.toml", "--out-dir", "x"], dir);
    assert_eq!(out.status.code(), Some(2));

    pipeline(dir);
    let out = clipattr(
        &["sweep", "pitch", "--index", "clips.mrix", "--manifest", "corpus/manifest.jsonl", "--grid", "13", "--out", "p.csv"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    let out = clipattr(
        &["query", "corpus/song-0000.wav", "--index", "clips.mrix", "--songs", "songs.jsonl", "--mode", "fast"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn abx_aggregate_from_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let clip = |bin: u8, score: f32| {
        serde_json::json!({"song_id": format!("s{bin}"), "clip_index": 0, "start_sec": 0.0, "score": score, "bin": bin})
    };
    let trial = serde_json::json!({
        "trial_id": "p000-01",
        "prompt": {"song_id": "p", "clip_index": 0, "start_sec": 0.0},
        "first": clip(2, 0.8),
        "second": clip(1, 0.9),
        "bin_pair": [1, 2],
        "order": "BA",
    });
    fs::write(dir.join("trials.jsonl"), format!("{trial}\n")).unwrap();
    fs::write(dir.join("resp.csv"), "trial_id,choice\np000-01,second\n").unwrap();
    ok(&["abx", "aggregate", "trials.jsonl", "resp.csv", "--out", "t.csv"], dir);
    let t = fs::read_to_string(dir.join("t.csv")).unwrap();
    assert!(t.starts_with("higher_bin,lower_bin,n,prefer_higher,pct_prefer_higher\n"), "{t}");
    assert!(t.contains("1,2,1,1,100\n"), "{t}");

    fs::write(dir.join("resp.csv"), "trial_id,choice\nzzz,first\n").unwrap();
    let out = clipattr(&["abx", "aggregate", "trials.jsonl", "resp.csv", "--out", "t.csv"], dir);
    assert_eq!(out.status.code(), Some(2));
}
