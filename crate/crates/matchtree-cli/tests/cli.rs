//! Behavioral tests against the built binary: exit codes, diagnostics,
//! file outputs, and pipe composition across subcommands.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_matchtree"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .env_remove("MATCHTREE_OUT")
        .output()
        .expect("spawn matchtree")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A 3-object tabular matrix: a and b are close, c is far.
const TINY: &str = "a\tb\tc\n1\t0.9\t0.2\n0.9\t1\t0.3\n0.2\t0.3\t1\n";

#[test]
fn three_object_single_linkage_merge_table() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("scores.tsv"), TINY).unwrap();
    let out = run_in(
        dir.path(),
        &["cluster", "--input", "scores.tsv", "--method", "single"],
    );
    assert_ok(&out);
    let table = fs::read_to_string(dir.path().join("merges.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "step\tleft\tright\theight\tsize");
    assert_eq!(rows.len(), 3, "header plus n - 1 = 2 merges:\n{table}");
    assert!(dir.path().join("merges.leaves.tsv").exists());
    assert!(dir.path().join("cluster.manifest.json").exists());
}

#[test]
fn missing_input_exits_2_naming_path() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &["cluster", "--input", "no_such_file.tsv", "--method", "ward"],
    );
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("no_such_file.tsv"),
        "diagnostic must name the path: {}",
        stderr(&out)
    );
}

#[test]
fn ward_on_synth_output_passes_check() {
    let dir = TempDir::new().unwrap();
    for args in [
        vec!["synth", "--seed", "11", "--set", "n_subjects=8"],
        vec!["cluster", "--input", "scores.tsv", "--method", "ward"],
        vec!["check", "--input", "merges.tsv"],
    ] {
        let out = run_in(dir.path(), &args);
        assert_ok(&out);
        if args[0] == "check" {
            assert!(stdout(&out).contains("heights nondecreasing"));
        }
    }
}

#[test]
fn cut_k1_yields_single_cluster() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("scores.tsv"), TINY).unwrap();
    assert_ok(&run_in(
        dir.path(),
        &["cluster", "--input", "scores.tsv", "--method", "complete"],
    ));
    assert_ok(&run_in(
        dir.path(),
        &["cut", "--input", "merges.tsv", "--k", "1"],
    ));
    let partition = fs::read_to_string(dir.path().join("partition.tsv")).unwrap();
    let labels: Vec<&str> = partition
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap())
        .collect();
    assert_eq!(labels, ["0", "0", "0"]);
}

#[test]
fn eval_on_singleton_clusters_reports_purity_one() {
    let dir = TempDir::new().unwrap();
    assert_ok(&run_in(
        dir.path(),
        &[
            "synth",
            "--seed",
            "3",
            "--set",
            "n_subjects=6",
            "--set",
            "images_per_subject=4",
        ],
    ));
    assert_ok(&run_in(
        dir.path(),
        &["cluster", "--input", "scores.tsv", "--method", "single"],
    ));
    assert_ok(&run_in(
        dir.path(),
        &["cut", "--input", "merges.tsv", "--k", "24"],
    ));
    let out = run_in(
        dir.path(),
        &[
            "eval",
            "--input",
            "partition.tsv",
            "--metadata",
            "metadata.csv",
            "--by",
            "subject",
        ],
    );
    assert_ok(&out);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["overall_purity"], 1.0);
    assert_eq!(report["k"], 24);
    assert_eq!(
        fs::read_to_string(dir.path().join("report.json")).unwrap(),
        stdout(&out),
        "stdout and report.json must match"
    );
}

#[test]
fn synth_same_seed_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    for sub in ["one", "two"] {
        assert_ok(&run_in(
            dir.path(),
            &[
                "synth",
                "--seed",
                "7",
                "--set",
                "n_subjects=10",
                "--out",
                sub,
            ],
        ));
    }
    for name in ["scores.tsv", "metadata.csv"] {
        let a = fs::read(dir.path().join("one").join(name)).unwrap();
        let b = fs::read(dir.path().join("two").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn pipeline_composes_through_files() {
    let dir = TempDir::new().unwrap();
    let steps: Vec<Vec<&str>> = vec![
        vec![
            "synth",
            "--seed",
            "5",
            "--set",
            "n_subjects=8",
            "--format",
            "binary",
        ],
        vec![
            "cluster",
            "--input",
            "scores.bin",
            "--method",
            "ward",
            "--newick",
            "--dot",
        ],
        vec!["cut", "--input", "merges.tsv", "--height", "0.5"],
        vec![
            "eval",
            "--input",
            "partition.tsv",
            "--metadata",
            "metadata.csv",
            "--by",
            "gender",
            "--secondary",
            "ethnicity",
        ],
        vec![
            "render",
            "--input",
            "merges.tsv",
            "--metadata",
            "metadata.csv",
            "--by",
            "gender",
        ],
    ];
    for args in steps {
        let out = run_in(dir.path(), &args);
        assert_ok(&out);
        match args[0] {
            "eval" => {
                let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
                assert!(report["purity"]["overall_purity"].is_number());
                assert!(report["errors"]["by_field"].is_array());
            }
            "render" => {
                let dot = stdout(&out);
                assert!(dot.starts_with("digraph"), "DOT on stdout: {dot:.>40}");
                assert!(dot.contains("legend"));
            }
            _ => {}
        }
    }
}

#[test]
fn usage_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("scores.tsv"), TINY).unwrap();
    let cases: Vec<Vec<&str>> = vec![
        // Both cut specs at once.
        vec!["cut", "--input", "x.tsv", "--k", "2", "--height", "0.5"],
        // Neither cut spec.
        vec!["cut", "--input", "x.tsv"],
        // Unknown method value.
        vec!["cluster", "--input", "scores.tsv", "--method", "average"],
        // Unknown label field value.
        vec![
            "eval",
            "--input",
            "p.tsv",
            "--metadata",
            "m.csv",
            "--by",
            "height",
        ],
        // Missing required flag.
        vec!["cluster", "--input", "scores.tsv"],
        // Unknown subcommand.
        vec!["prune"],
    ];
    for args in cases {
        let out = run_in(dir.path(), &args);
        assert_eq!(code(&out), 1, "args {args:?}\nstderr: {}", stderr(&out));
    }
    // Usage errors diagnosed after parsing also exit 1.
    let out = run_in(
        dir.path(),
        &[
            "cluster",
            "--input",
            "scores.tsv",
            "--method",
            "single",
            "--ward-d2",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--ward-d2"));
}

#[test]
fn data_errors_exit_2_with_diagnostics() {
    let dir = TempDir::new().unwrap();
    // Malformed matrix: wrong column count on row 2.
    fs::write(dir.path().join("bad.tsv"), "a\tb\n1\t0.5\n0.5\n").unwrap();
    let out = run_in(
        dir.path(),
        &["cluster", "--input", "bad.tsv", "--method", "single"],
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.tsv"), "{}", stderr(&out));

    // Partition referencing an image the metadata lacks.
    fs::write(dir.path().join("scores.tsv"), TINY).unwrap();
    assert_ok(&run_in(
        dir.path(),
        &["cluster", "--input", "scores.tsv", "--method", "single"],
    ));
    assert_ok(&run_in(
        dir.path(),
        &["cut", "--input", "merges.tsv", "--k", "2"],
    ));
    fs::write(
        dir.path().join("meta.csv"),
        "image_id,subject_id,gender,ethnicity,expression,illumination,glasses\n\
         a,s1,male,white,neutral,controlled,false\n",
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &[
            "eval",
            "--input",
            "partition.tsv",
            "--metadata",
            "meta.csv",
            "--by",
            "subject",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains('b') || stderr(&out).contains('c'),
        "diagnostic must name the missing image: {}",
        stderr(&out)
    );

    // Cutting into more clusters than leaves.
    let out = run_in(dir.path(), &["cut", "--input", "merges.tsv", "--k", "99"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn help_and_version_exit_0() {
    for args in [
        &["--help"][..],
        &["--version"][..],
        &["cluster", "--help"][..],
    ] {
        let out = bin().args(args).output().unwrap();
        assert_eq!(code(&out), 0, "args {args:?}");
    }
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = TempDir::new().unwrap();
    let outdir = dir.path().join("from_env");
    let out = bin()
        .args(["synth", "--seed", "2", "--set", "n_subjects=4"])
        .current_dir(dir.path())
        .env("MATCHTREE_OUT", &outdir)
        .output()
        .unwrap();
    assert_ok(&out);
    assert!(outdir.join("scores.tsv").exists());
    assert!(outdir.join("synth.manifest.json").exists());
    assert!(!dir.path().join("scores.tsv").exists());
}

#[test]
fn per_subject_eval_runs_with_jobs() {
    let dir = TempDir::new().unwrap();
    assert_ok(&run_in(
        dir.path(),
        &["synth", "--seed", "9", "--set", "n_subjects=6"],
    ));
    let out = run_in(
        dir.path(),
        &[
            "eval",
            "--per-subject",
            "--input",
            "scores.tsv",
            "--metadata",
            "metadata.csv",
            "--by",
            "illumination",
            "--method",
            "ward",
            "--jobs",
            "2",
        ],
    );
    assert_ok(&out);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["per_subject"].as_array().unwrap().len(), 6);

    // Without --per-subject, --method and --jobs are usage errors.
    let out = run_in(
        dir.path(),
        &[
            "eval",
            "--input",
            "p.tsv",
            "--metadata",
            "metadata.csv",
            "--by",
            "subject",
            "--jobs",
            "2",
        ],
    );
    assert_eq!(code(&out), 1);

    // --per-subject without --method is a usage error.
    let out = run_in(
        dir.path(),
        &[
            "eval",
            "--per-subject",
            "--input",
            "scores.tsv",
            "--metadata",
            "metadata.csv",
            "--by",
            "subject",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--method"));
}

#[test]
fn synth_config_file_and_overrides() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("synth.conf"),
        "n_subjects = 5\nimages_per_subject = 3\nseed = 1\n",
    )
    .unwrap();
    assert_ok(&run_in(
        dir.path(),
        &[
            "synth",
            "--config",
            "synth.conf",
            "--set",
            "n_subjects=4",
            "--seed",
            "8",
        ],
    ));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("synth.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 8);
    let resolved = manifest["synth_config"].as_str().unwrap();
    assert!(resolved.contains("n_subjects = 4"), "{resolved}");
    assert!(resolved.contains("seed = 8"), "{resolved}");
    let meta = fs::read_to_string(dir.path().join("metadata.csv")).unwrap();
    assert_eq!(meta.lines().count(), 1 + 4 * 3, "4 subjects x 3 images");

    // Unknown config key in --set is a data error naming the key.
    let out = run_in(dir.path(), &["synth", "--set", "n_subject=4"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n_subject"), "{}", stderr(&out));

    // Malformed --set without '=' is a usage error.
    let out = run_in(dir.path(), &["synth", "--set", "n_subjects"]);
    assert_eq!(code(&out), 1);

    // Like config files, group overrides replace the whole default
    // set rather than merging into it.
    assert_ok(&run_in(
        dir.path(),
        &[
            "synth",
            "--set",
            "group.male.white=0.5",
            "--set",
            "group.male.asian=0.5",
            "--set",
            "n_subjects=4",
        ],
    ));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("synth.manifest.json")).unwrap())
            .unwrap();
    let resolved = manifest["synth_config"].as_str().unwrap();
    assert!(resolved.contains("group.male.white = 0.5"), "{resolved}");
    assert!(!resolved.contains("female"), "{resolved}");
}

#[test]
fn render_writes_files_with_out() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("scores.tsv"), TINY).unwrap();
    assert_ok(&run_in(
        dir.path(),
        &["cluster", "--input", "scores.tsv", "--method", "ward"],
    ));
    assert_ok(&run_in(
        dir.path(),
        &[
            "render",
            "--input",
            "merges.tsv",
            "--newick",
            "--out",
            "viz",
        ],
    ));
    let nwk = fs::read_to_string(dir.path().join("viz/tree.nwk")).unwrap();
    assert!(nwk.ends_with(";\n") || nwk.ends_with(';'), "{nwk}");
    for id in ["a", "b", "c"] {
        assert!(nwk.contains(id), "{nwk}");
    }
    assert!(dir.path().join("viz/render.manifest.json").exists());

    // Coloring flags must come as a pair.
    let out = run_in(
        dir.path(),
        &["render", "--input", "merges.tsv", "--by", "gender"],
    );
    assert_eq!(code(&out), 1);
}
