use std::path::Path;
use std::process::{Command, Output};

use amerasian::experiment::{read_greek_csv, read_price_csv};

const SMALL: &str = r#"
[product]
kind = "asian_fixed"
windows = [1, 3]

[[basis]]
family = "polynomial"
rho = 2

[run]
n_paths = 4000
n_runs = 2
seed = 11

[greeks]
moneyness = [1.0]
node_paths = 3000
n_runs = 2
regression_paths = 8000

[output]
timing = false
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amerasian"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn price_csv_round_trips_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&["price", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let rows = read_price_csv(bytes.as_slice()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.price.is_some_and(|p| p > 0.0) && r.seed == 11));
}

#[test]
fn price_goes_to_stdout_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let o = run(&["price", "--config", &cfg, "--seed", "3", "--runs", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = read_price_csv(o.stdout.as_slice()).unwrap();
    assert!(rows.iter().all(|r| r.seed == 3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cells priced"));
}

#[test]
fn empty_grid_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.toml", "[product]\nwindows = []\n");
    let out = dir.path().join("never.csv");
    let o = run(&["price", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "unknown.toml", "[model]\nvol = 0.2\n");
    assert_eq!(run(&["price", "--config", &unknown]).status.code(), Some(2));
    let negative = write(dir.path(), "negative.toml", "[model]\nsigma = -0.2\n");
    assert_eq!(run(&["greeks", "--config", &negative, "--method", "chebyshev"]).status.code(), Some(2));
    assert_eq!(run(&["price", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(run(&["price"]).status.code(), Some(2));
}

#[test]
fn single_moneyness_gives_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "put.toml",
        &SMALL.replace("kind = \"asian_fixed\"\nwindows = [1, 3]", "kind = \"american_put\""),
    );
    for method in ["chebyshev", "regression", "tree"] {
        let out = dir.path().join(format!("{method}.csv"));
        let o = run(&["greeks", "--config", &cfg, "--method", method, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        let rows = read_greek_csv(std::fs::File::open(&out).unwrap()).unwrap();
        assert_eq!(rows.len(), 1, "{method}");
        assert!(rows[0].delta.is_some_and(|d| (-1.0..0.0).contains(&d)), "{method}: {:?}", rows[0]);
    }
}

#[test]
fn tree_method_rejects_asians() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    assert_eq!(run(&["greeks", "--config", &cfg, "--method", "tree"]).status.code(), Some(2));
}

#[test]
fn help_documents_config_defaults() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("n_paths") && text.contains("node_paths"));
}

#[test]
fn selftest_names_the_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[run]\nn_runs = 0\n");
    let o = run(&["selftest", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l.starts_with("FAIL") && l.contains("config")));
}
