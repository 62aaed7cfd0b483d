use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use setembed::checkpoint::Checkpoint;
use setembed::linalg::Matrix;
use setembed::model::{ClassifierHead, ModelParams};

fn setembed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setembed"))
        .args(args)
        .env_remove("SETEMBED_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "\
data.classes=6
data.eval_classes=3
data.per_class=12
data.dim=5
model.layer_dims=5,8,3
train.batch_size=12
train.epochs=4
train.pretrain_epochs=2
lr.drop_epochs=3
update.offline_period=3
";

fn write_config(dir: &Path) -> String {
    let out = dir.join("run");
    let path = dir.join("small.cfg");
    fs::write(&path, format!("{SMALL}output.dir={}\n", out.display())).unwrap();
    path.display().to_string()
}

#[test]
fn train_writes_artifacts_and_echoes_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = setembed(&["train", "--config", &cfg, "--weights.lambda_M", "0.03", "--terms=max_margin,center"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("run");
    let config = fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(config.lines().any(|l| l == "weights.lambda_M=0.03"), "{config}");
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    // 6 classes × 12 samples = 72 train samples → 6 iterations per epoch
    let iteration_rows = metrics
        .lines()
        .skip(1)
        .take_while(|l| !l.is_empty() && !l.starts_with("epoch"))
        .count();
    assert_eq!(iteration_rows, 4 * 6, "{metrics}");
    assert!(run.join("checkpoint.bin").exists());
    let report = fs::read_to_string(run.join("report.txt")).unwrap();
    assert!(report.contains("accuracy=") && report.contains("one_minus_eer="));
    assert!(stdout(&o).contains("accuracy="));
}

#[test]
fn seed_variable_changes_the_run_and_overrides_still_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run = |seed: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_setembed"));
        cmd.args(["train", "--config", &cfg]).args(extra).env_remove("SETEMBED_SEED");
        if let Some(s) = seed {
            cmd.env("SETEMBED_SEED", s);
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        let base = dir.path().join("run");
        (
            fs::read_to_string(base.join("config.txt")).unwrap(),
            fs::read(base.join("checkpoint.bin")).unwrap(),
        )
    };
    let (cfg_a, ck_a) = run(Some("9"), &[]);
    assert!(cfg_a.lines().any(|l| l == "seed=9"));
    let (_, ck_b) = run(Some("9"), &[]);
    assert_eq!(ck_a, ck_b);
    let (_, ck_c) = run(Some("10"), &[]);
    assert_ne!(ck_a, ck_c);
    let (cfg_d, _) = run(Some("10"), &["--seed", "11"]);
    assert!(cfg_d.lines().any(|l| l == "seed=11"));
}

#[test]
fn unknown_key_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = setembed(&["train", "--config", &cfg, "--weights.lambda_Q", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("weights.lambda_Q"), "{}", stderr(&o));
}

#[test]
fn divergent_training_exits_with_numeric_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = setembed(&["train", "--config", &cfg, "--lr.base", "1e250"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("iteration"));
}

#[test]
fn toy2d_writes_a_plot_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    let o = setembed(&["toy2d", "S+M", "--seed", "2", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for epoch in 0..30 {
        let svg = fs::read_to_string(out.join(format!("toy2d_S+M_epoch{epoch}.svg"))).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let circles = doc.descendants().filter(|n| n.has_tag_name("circle")).count();
        assert_eq!(circles, 300, "epoch {epoch}");
    }
    let csv = fs::read_to_string(out.join("toy2d_S+M_final.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("label,x,y"));
    assert_eq!(lines.filter(|l| !l.is_empty()).count(), 300);
}

#[test]
fn toy2d_rejects_unknown_selector() {
    let dir = tempfile::tempdir().unwrap();
    let o = setembed(&["toy2d", "S+X", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_for_every_term() {
    for term in ["softmax", "max_margin", "center", "pushing", "all"] {
        let o = setembed(&["gradcheck", term, "--seed", "5"]);
        assert_eq!(o.status.code(), Some(0), "{term}: {}{}", stdout(&o), stderr(&o));
    }
    assert_eq!(setembed(&["gradcheck", "triplet"]).status.code(), Some(2));
}

#[test]
fn svmfit_two_points() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("two.csv");
    fs::write(&path, "1,1,0\n-1,-1,0\n").unwrap();
    let o = setembed(&["svmfit", path.to_str().unwrap(), "--C", "10", "--tol", "1e-8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("w=(1,0)"), "{out}");
    assert!(out.lines().any(|l| l == "b=0"), "{out}");
    assert!(out.contains("converged=true"), "{out}");

    fs::write(&path, "2,1,0\n-1,-1,0\n").unwrap();
    assert_eq!(setembed(&["svmfit", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn eval_on_perfectly_separated_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let pairs = dir.path().join("pairs.csv");
    let o = setembed(&[
        "gen-data", "--classes", "3", "--per-class", "10", "--dim", "2", "--spread", "0", "--separation", "5",
        "--seed", "4", "--out", data.to_str().unwrap(), "--pairs-out", pairs.to_str().unwrap(), "--pair-count", "60",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let identity = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
    let params = ModelParams::from_parts(vec![2, 2], vec![identity], vec![vec![0.0, 0.0]]).unwrap();
    let head = ClassifierHead::new(Matrix::from_rows(&[[0.0; 3], [0.0; 3]]), vec![0.0; 3]).unwrap();
    let ckpt_path = dir.path().join("identity.bin");
    Checkpoint { params, head, set_params: None }.save(&ckpt_path).unwrap();

    let scores = dir.path().join("scores.csv");
    let o = setembed(&[
        "eval", "--checkpoint", ckpt_path.to_str().unwrap(), "--dataset", data.to_str().unwrap(), "--pairs",
        pairs.to_str().unwrap(), "--scores-out", scores.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "accuracy=1.0"), "{out}");
    assert!(out.lines().any(|l| l == "eer=0.0"), "{out}");
    assert!(out.lines().any(|l| l == "pair_count=60"), "{out}");
    assert_eq!(fs::read_to_string(scores).unwrap().lines().count(), 61);
}
