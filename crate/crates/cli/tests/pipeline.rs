//! The `poptail` binary end to end on a small synthetic dataset.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use poptail_core::synthetic::{self, SyntheticConfig};

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = SyntheticConfig {
            users: 400,
            items: 300,
            ..SyntheticConfig::default()
        };
        synthetic::write_movielens(&root.join("ratings.dat"), &synthetic::generate(&config)).unwrap();
        fs::write(root.join("poptail.toml"), config_text(extra)).unwrap();
        Workspace { _dir: dir, root }
    }

    fn poptail(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_poptail"))
            .arg("--config")
            .arg(self.root.join("poptail.toml"))
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.poptail(args);
        assert!(
            out.status.success(),
            "poptail {args:?} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn err(&self, args: &[&str]) -> String {
        let out = self.poptail(args);
        assert!(!out.status.success(), "poptail {args:?} unexpectedly succeeded");
        String::from_utf8(out.stderr).unwrap()
    }

    fn out(&self) -> PathBuf {
        self.root.join("out")
    }
}

fn config_text(extra: &str) -> String {
    format!(
        r#"output_dir = "out"

[dataset]
name = "synthetic"
path = "ratings.dat"
format = "movielens1m"

[model]
k = 6
sweeps = 8

[experiment]
n_epochs = 10
lambda_preset = "movielens"
normalize_scores = true
{extra}
"#
    )
}

fn read_csv(path: &Path) -> Vec<HashMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().map(String::from).zip(r.iter().map(String::from)).collect()
        })
        .collect()
}

fn read_tsv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').map(String::from).collect())
        .collect()
}

fn f(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", row[key]))
}

#[test]
fn full_pipeline() {
    let ws = Workspace::new("");
    let table = ws.ok(&["prepare"]);
    assert!(table.contains("threshold"), "{table}");
    assert!(!table.contains("(hit)"));
    let manifest = fs::read(ws.out().join("prepared/manifest.json")).unwrap();
    let second = ws.ok(&["prepare"]);
    assert!(second.contains("(hit)"), "{second}");
    assert_eq!(fs::read(ws.out().join("prepared/manifest.json")).unwrap(), manifest);

    let trained = ws.ok(&["train"]);
    assert!(trained.contains("final objective"), "{trained}");
    let log = read_csv(&ws.out().join("model/training_log.csv"));
    assert_eq!(log.len(), 9);
    for w in log.windows(2) {
        let (a, b) = (f(&w[0], "objective"), f(&w[1], "objective"));
        assert!(b <= a * (1.0 + 1e-6), "objective rose from {a} to {b}");
    }

    let summary_text = ws.ok(&["run"]);
    for column in ["Average LCR", "Average NDCG@10", "Average ARP"] {
        assert!(summary_text.contains(column), "{summary_text}");
    }
    let summary = read_csv(&ws.out().join("summary.csv"));
    assert_eq!(summary.len(), 5);
    for row in &summary {
        recompute_summary_row(&ws.out(), row);
    }

    let sweep = ws.ok(&["sweep", "--algorithm", "smooth", "--lambdas", "0.2,0,0.2"]);
    assert!(sweep.contains("lambda"));
    let rows = read_csv(&ws.out().join("sweep_smooth.csv"));
    let lambdas: Vec<f64> = rows.iter().map(|r| f(r, "lambda")).collect();
    assert_eq!(lambdas, vec![0.0, 0.2]);
    let base = summary.iter().find(|r| r["algorithm"] == "base").unwrap();
    assert_eq!(rows[0]["mean_lcr"], base["Average LCR"]);
    assert_eq!(rows[0]["mean_ndcg"], base["Average NDCG@10"]);
    // no direction is asserted for λ > 0: users here lean to the head, which Smooth then favours
    assert_ne!(rows[1]["mean_lcr"], rows[0]["mean_lcr"]);
}

/// Rebuilds one summary row from the recommendations log and the cached splits alone.
fn recompute_summary_row(out: &Path, row: &HashMap<String, String>) {
    let algorithm = &row["algorithm"];
    let recs = read_csv(&out.join("runs").join(algorithm).join("recommendations.csv"));
    let train = read_tsv(&out.join("prepared/train.tsv"));
    let test = read_tsv(&out.join("prepared/test.tsv"));
    let tail: HashSet<String> = read_tsv(&out.join("prepared/categories.tsv"))
        .into_iter()
        .filter(|r| r[1] == "tail")
        .map(|r| r[0].clone())
        .collect();
    let mut popularity: HashMap<String, f64> = HashMap::new();
    for r in &train {
        *popularity.entry(r[1].clone()).or_default() += 1.0;
    }
    let mut relevant: HashMap<String, HashSet<String>> = HashMap::new();
    for r in &test {
        relevant.entry(r[0].clone()).or_default().insert(r[1].clone());
    }

    // (epoch, user) -> items in rank order
    let mut lists: BTreeMap<(usize, u64), Vec<String>> = BTreeMap::new();
    for r in &recs {
        let key = (r["epoch"].parse().unwrap(), r["user"].parse().unwrap());
        let list = lists.entry(key).or_default();
        assert_eq!(r["rank"].parse::<usize>().unwrap(), list.len() + 1);
        list.push(r["item"].clone());
    }
    let epochs: BTreeSet<usize> = lists.keys().map(|k| k.0).collect();
    let lcr: Vec<f64> = epochs
        .iter()
        .map(|&e| {
            let seen: HashSet<&String> = lists
                .iter()
                .filter(|(k, _)| k.0 == e)
                .flat_map(|(_, l)| l)
                .filter(|i| tail.contains(*i))
                .collect();
            seen.len() as f64 / tail.len() as f64
        })
        .collect();
    let ndcg: Vec<f64> = lists
        .iter()
        .map(|((_, user), items)| {
            let rel = &relevant[&user.to_string()];
            let dcg: f64 = items
                .iter()
                .enumerate()
                .filter(|(_, i)| rel.contains(*i))
                .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
                .sum();
            let idcg: f64 = (0..rel.len().min(10)).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
            dcg / idcg
        })
        .collect();
    let arp: Vec<f64> = lists
        .values()
        .map(|items| items.iter().map(|i| popularity.get(i).copied().unwrap_or(0.0)).sum::<f64>() / items.len() as f64)
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    assert!(close(mean(&lcr), f(row, "Average LCR")), "{algorithm} LCR");
    assert!(close(mean(&ndcg), f(row, "Average NDCG@10")), "{algorithm} NDCG");
    assert!(close(mean(&arp), f(row, "Average ARP")), "{algorithm} ARP");
}

#[test]
fn lambda_zero_rows_match_base() {
    let ws = Workspace::new(
        "\n[lambda]\nbinary = 0.0\nsmooth = 0.0\ntime_binary = 0.0\ntime_smooth = 0.0\n",
    );
    ws.ok(&["prepare"]);
    ws.ok(&["train"]);
    ws.ok(&["run"]);
    let base = fs::read_to_string(ws.out().join("runs/base/recommendations.csv")).unwrap();
    for algorithm in ["binary", "smooth", "time_binary", "time_smooth"] {
        let other = fs::read_to_string(ws.out().join("runs").join(algorithm).join("recommendations.csv")).unwrap();
        // scores are carried through unchanged at λ = 0 only without normalisation, so compare items
        let items = |text: &str| -> Vec<String> {
            text.lines().map(|l| l.split(',').take(4).collect::<Vec<_>>().join(",")).collect()
        };
        assert_eq!(items(&base), items(&other), "{algorithm}");
    }
    let summary = read_csv(&ws.out().join("summary.csv"));
    for row in &summary {
        for column in ["Average LCR", "Average NDCG@10", "Average ARP", "Final CLCR"] {
            assert_eq!(row[column], summary[0][column], "{} {column}", row["algorithm"]);
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = Workspace::new("");
    let b = Workspace::new("");
    for ws in [&a, &b] {
        ws.ok(&["prepare"]);
        ws.ok(&["train"]);
        ws.ok(&["run"]);
    }
    let files = [
        "prepared/train.tsv",
        "prepared/test.tsv",
        "prepared/categories.tsv",
        "model/factors.bin",
        "model/training_log.csv",
        "summary.csv",
        "runs/time_smooth/metrics.csv",
        "runs/time_smooth/recommendations.csv",
        "runs/base/recommendations.csv",
    ];
    for file in files {
        assert_eq!(fs::read(a.out().join(file)).unwrap(), fs::read(b.out().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn seed_flag_changes_the_split() {
    let ws = Workspace::new("");
    ws.ok(&["prepare"]);
    let first = fs::read(ws.out().join("prepared/test.tsv")).unwrap();
    ws.ok(&["--seed", "5", "prepare"]);
    assert_ne!(fs::read(ws.out().join("prepared/test.tsv")).unwrap(), first);
}

#[test]
fn actionable_errors() {
    let ws = Workspace::new("");
    let err = ws.err(&["train"]);
    assert!(err.contains("poptail prepare"), "{err}");
    ws.ok(&["prepare"]);
    let err = ws.err(&["run"]);
    assert!(err.contains("poptail train"), "{err}");
    let err = ws.err(&["sweep", "--algorithm", "mmr", "--lambdas", "0.1"]);
    assert!(err.contains("reg (out of scope)"), "{err}");
    let err = ws.err(&["sweep", "--algorithm", "reg", "--lambdas", "0.1"]);
    assert!(err.contains("reg"), "{err}");
    let err = ws.err(&["sweep", "--algorithm", "smooth"]);
    assert!(!err.is_empty());

    let bad = Workspace::new("algorithms = [\"base\", \"xquad\"]");
    let err = bad.err(&["prepare"]);
    assert!(err.contains("time_smooth") && err.contains("reg (out of scope)"), "{err}");
}

#[test]
fn bad_lines_are_reported_with_location() {
    let ws = Workspace::new("");
    let path = ws.root.join("ratings.dat");
    let mut text = fs::read_to_string(&path).unwrap();
    text.insert_str(0, "1::2::oops::3\n");
    fs::write(&path, text).unwrap();
    let out = ws.poptail(&["prepare"]);
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("ratings.dat:1:"), "{stderr}");

    fs::write(&path, "garbage\nmore garbage\n").unwrap();
    let err = ws.err(&["prepare"]);
    assert!(err.contains("ratings.dat:1:"), "{err}");
}
