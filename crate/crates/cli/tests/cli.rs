//! End-to-end tests of the `kgep` binary: exit codes, stage caching, seed
//! precedence, and output plumbing.

use std::path::Path;
use std::process::{Command, Output};

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
  "engine": {
    "topic_count": 4,
    "embed_dim": 16,
    "epochs": 10,
    "learning_rate": 0.02,
    "margin": 2.0,
    "min_user_interactions": 3,
    "min_app_interactions": 2,
    "rng_seed": 7
  },
  "generator": {
    "clusters": 2,
    "users_per_cluster": 20,
    "apps_per_cluster": 10,
    "p_in": 0.4,
    "p_out": 0.05,
    "vocab_per_cluster": 20,
    "readme_words": 40
  },
  "lda": { "iterations": 60, "min_term_count": 2 },
  "evaluate": { "ks": [5, 10] }
}"#,
    )
    .unwrap();
    path
}

/// Runs the binary with KGEP_SEED scrubbed unless a test sets it.
fn kgep(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kgep"));
    cmd.args(args).env_remove("KGEP_SEED");
    for (key, value) in env {
        cmd.env(key, value);
    }
    cmd.output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const APPS_HEADER: &str = "app_id,category,provider,content_rating,has_ads,is_free,\
interactive_elements,avg_rating,install_count,updated_date,size_bytes,readme_text";

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let work = dir.path().join("work");
    let cfg = config.to_str().unwrap();
    let wd = work.to_str().unwrap();

    // Success exits zero and keeps stdout free of diagnostics.
    let out = kgep(&["--config", cfg, "--workdir", wd, "generate"], &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(stdout_of(&out).is_empty());

    // A malformed field fails with the stage name on stderr, nonzero exit.
    let bad_apps = dir.path().join("bad_apps.csv");
    std::fs::write(
        &bad_apps,
        format!("{APPS_HEADER}\na1,Games,Acme,Everyone,true,false,badges,not-a-number,1000,2024-01-15,1024,words\n"),
    )
    .unwrap();
    let ratings = dir.path().join("ratings.csv");
    std::fs::write(&ratings, "user_id,app_id,rating\nu1,a1,0.6\n").unwrap();
    let out = kgep(
        &[
            "--config", cfg, "--workdir", wd, "ingest",
            "--apps", bad_apps.to_str().unwrap(),
            "--ratings", ratings.to_str().unwrap(),
        ],
        &[],
    );
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("stage ingest"), "{err}");
    assert!(err.contains("avg_rating"), "{err}");

    // A dataset entirely removed by cold-start filtering also fails.
    let thin_apps = dir.path().join("thin_apps.csv");
    std::fs::write(
        &thin_apps,
        format!("{APPS_HEADER}\na1,Games,Acme,Everyone,true,false,badges,4.0,1000,2024-01-15,1024,words\n"),
    )
    .unwrap();
    let out = kgep(
        &[
            "--config", cfg, "--workdir", wd, "ingest",
            "--apps", thin_apps.to_str().unwrap(),
            "--ratings", ratings.to_str().unwrap(),
        ],
        &[],
    );
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("empty"), "{}", stderr_of(&out));
}

#[test]
fn seed_precedence_is_flag_env_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let cfg = config.to_str().unwrap();
    let generate = |name: &str, extra: &[&str], env: &[(&str, &str)]| {
        let work = dir.path().join(name);
        let mut args = vec!["--config", cfg, "--workdir", work.to_str().unwrap()];
        args.extend_from_slice(extra);
        args.push("generate");
        let out = kgep(&args, env);
        assert!(out.status.success(), "{}", stderr_of(&out));
        std::fs::read(work.join("raw/ratings.csv")).unwrap()
    };

    let by_config = generate("a", &[], &[]);
    let by_config_again = generate("b", &[], &[]);
    assert_eq!(by_config, by_config_again, "same seed, same bytes");

    let by_env = generate("c", &[], &[("KGEP_SEED", "99")]);
    assert_ne!(by_config, by_env, "env seed overrides config");

    let by_flag = generate("d", &["--seed", "1234"], &[("KGEP_SEED", "99")]);
    let by_flag_alone = generate("e", &["--seed", "1234"], &[]);
    assert_eq!(by_flag, by_flag_alone, "flag beats env");
    assert_ne!(by_flag, by_env);

    // An unparsable env seed is an error, not a silent fallback.
    let work = dir.path().join("f");
    let out = kgep(
        &["--config", cfg, "--workdir", work.to_str().unwrap(), "generate"],
        &[("KGEP_SEED", "not-a-seed")],
    );
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("KGEP_SEED"), "{}", stderr_of(&out));
}

#[test]
fn pipeline_caches_stages_and_force_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let work = dir.path().join("work");
    let cfg = config.to_str().unwrap();
    let wd = work.to_str().unwrap();
    let base = ["--config", cfg, "--workdir", wd, "pipeline", "--synthetic"];

    let out = kgep(&base, &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    for artifact in [
        "raw/apps.csv",
        "dataset/ratings.csv",
        "topics/phi.tsv",
        "kg/triples.tsv",
        "transd.ckpt",
        "kgep.ckpt",
        "report.tsv",
        "manifest.json",
    ] {
        assert!(work.join(artifact).exists(), "missing {artifact}");
    }

    // Unchanged re-run skips every stage and leaves artifacts untouched.
    let before = std::fs::read(work.join("kgep.ckpt")).unwrap();
    let out = kgep(&base, &[]);
    assert!(out.status.success());
    let err = stderr_of(&out);
    assert_eq!(err.matches("up to date, skipping").count(), 7, "{err}");
    assert!(!err.contains("stage train-transd: running"), "{err}");
    assert_eq!(std::fs::read(work.join("kgep.ckpt")).unwrap(), before);

    // --force re-executes everything.
    let mut forced = base.to_vec();
    forced.push("--force");
    let out = kgep(&forced, &[]);
    assert!(out.status.success());
    let err = stderr_of(&out);
    assert_eq!(err.matches("up to date, skipping").count(), 0, "{err}");
    assert!(err.contains("stage train-transd: running"), "{err}");

    // A config change re-runs only the stages that read it: evaluation
    // cutoffs leave training cached.
    let tweaked = dir.path().join("tweaked.json");
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("\"ks\": [5, 10]", "\"ks\": [5]");
    std::fs::write(&tweaked, text).unwrap();
    let out = kgep(
        &[
            "--config", tweaked.to_str().unwrap(),
            "--workdir", wd, "pipeline", "--synthetic",
        ],
        &[],
    );
    assert!(out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("stage train-transd: up to date, skipping"), "{err}");
    assert!(err.contains("stage evaluate: running"), "{err}");
}

#[test]
fn evaluate_and_recommend_emit_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let work = dir.path().join("work");
    let cfg = config.to_str().unwrap();
    let wd = work.to_str().unwrap();

    let out = kgep(
        &["--config", cfg, "--workdir", wd, "pipeline", "--synthetic"],
        &[],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));

    // evaluate prints the report to stdout...
    let out = kgep(&["--config", cfg, "--workdir", wd, "evaluate"], &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let table = stdout_of(&out);
    assert!(table.starts_with("model\tK\tprecision\trecall\tmap\n"), "{table}");
    assert!(table.contains("\nkgep\t5\t"), "{table}");

    // ...or copies it to --out, leaving stdout empty.
    let report_copy = dir.path().join("report_copy.tsv");
    let out = kgep(
        &[
            "--config", cfg, "--workdir", wd, "evaluate",
            "--out", report_copy.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success());
    assert!(stdout_of(&out).is_empty());
    assert_eq!(
        std::fs::read(&report_copy).unwrap(),
        std::fs::read(work.join("report.tsv")).unwrap(),
    );

    // recommend returns a rank table for a user present in the dataset.
    let ratings = std::fs::read_to_string(work.join("dataset/ratings.csv")).unwrap();
    let user = ratings
        .lines()
        .nth(1)
        .and_then(|line| line.split(',').next())
        .unwrap()
        .to_string();
    let out = kgep(
        &["--config", cfg, "--workdir", wd, "recommend", "--user", &user, "--k", "3"],
        &[],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let table = stdout_of(&out);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "rank\tapp_id\tscore");
    assert_eq!(lines.len(), 4, "{table}");
    assert!(lines[1].starts_with("1\t"), "{table}");

    // An unknown user is a clean failure.
    let out = kgep(
        &["--config", cfg, "--workdir", wd, "recommend", "--user", "nobody"],
        &[],
    );
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("nobody"), "{}", stderr_of(&out));
}
