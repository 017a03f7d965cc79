use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use accordion::codec::PopulationFile;
use accordion::commands::{self, Environment, TrainOptions, CHECKPOINT_DIR, FINAL_FILE};
use accordion::config::{RunConfig, SplitName};
use accordion::metrics::{read_csv, read_jsonl, CSV_FILE, JSONL_FILE};
use accordion::parallel::Workers;
use accordion::Error;
use accordion_core::schemes::{evaluate_population, Serial};
use tempfile::TempDir;

fn synthetic(scheme: &str, extra: &str) -> RunConfig {
    RunConfig::parse(&format!(
        r#"
scheme = "{scheme}"
seed = 3
record_wall_clock = false
{extra}

[dataset]
kind = "synthetic"
count = 200
noise = 0.4
seed = 1

[ga]
pop_size = 12
elite_count = 2
pool_size = 4
max_generations = 5

[backprop]
epochs = 1
eval_every = 2
"#
    ))
    .unwrap()
}

fn train(cfg: &RunConfig, out: &Path, population: Option<PathBuf>) -> Vec<accordion_core::schemes::MetricsRecord> {
    let opts = TrainOptions { out: out.to_path_buf(), population, resume: None };
    commands::train(cfg, &Environment::default(), &opts).unwrap()
}

#[test]
fn elitism_run_writes_one_row_per_generation() {
    let dir = TempDir::new().unwrap();
    let records = train(&synthetic("elitism", ""), dir.path(), None);
    assert_eq!(records.len(), 6);
    assert_eq!(read_csv(&dir.path().join(CSV_FILE)).unwrap(), records);
    assert_eq!(read_jsonl(&dir.path().join(JSONL_FILE)).unwrap(), records);
    for w in records.windows(2) {
        assert!(w[1].best_fitness >= w[0].best_fitness);
        assert!(w[1].evaluations_so_far > w[0].evaluations_so_far);
    }
    for r in &records {
        assert!(r.best_fitness >= r.mean_fitness && r.mean_fitness >= r.worst_fitness);
        assert_eq!(r.log10_iterations, (r.evaluations_so_far as f64).log10());
    }
    let last = PopulationFile::load(&dir.path().join(FINAL_FILE)).unwrap();
    assert_eq!(last.state.population.generation, 5);
    assert_eq!(last.history, records);
}

#[test]
fn encodings_share_generation_zero_from_one_population() {
    let dir = TempDir::new().unwrap();
    let pop = dir.path().join("init.pop");
    let accordion = synthetic("elitism", "");
    let file = commands::init_pop(&accordion, &pop).unwrap();
    assert_eq!(file.state.population.len(), 12);
    assert_eq!(PopulationFile::load(&pop).unwrap(), file);
    let traditional = synthetic("elitism", r#"encoding = "traditional""#);
    let a = train(&accordion, &dir.path().join("a"), Some(pop.clone()));
    let b = train(&traditional, &dir.path().join("b"), Some(pop.clone()));
    let s = train(&synthetic("steady-state", ""), &dir.path().join("s"), Some(pop));
    assert_eq!(a[0], b[0]);
    assert_eq!(a[0], s[0]);
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let dir = TempDir::new().unwrap();
    for scheme in ["steady-state", "generational", "elitism"] {
        let mut cfg = synthetic(scheme, "checkpoint_interval = 2");
        cfg.ga.max_generations = Some(7);
        let full = dir.path().join(format!("{scheme}-full"));
        let records = train(&cfg, &full, None);
        let checkpoints: Vec<_> = fs::read_dir(full.join(CHECKPOINT_DIR)).unwrap().collect();
        assert_eq!(checkpoints.len(), 3);

        let resumed = dir.path().join(format!("{scheme}-resumed"));
        let opts = TrainOptions {
            out: resumed.clone(),
            population: None,
            resume: Some(commands::checkpoint_path(&full, 4)),
        };
        let again = commands::train(&cfg, &Environment::default(), &opts).unwrap();
        assert_eq!(again, records, "{scheme}");
        for name in [CSV_FILE, JSONL_FILE, FINAL_FILE] {
            assert_eq!(fs::read(full.join(name)).unwrap(), fs::read(resumed.join(name)).unwrap(), "{scheme} {name}");
        }

        // a run directory resumes from its newest checkpoint
        let from_dir = TrainOptions { out: dir.path().join(format!("{scheme}-dir")), population: None, resume: Some(full.clone()) };
        assert_eq!(commands::train(&cfg, &Environment::default(), &from_dir).unwrap(), records);
    }
}

#[test]
fn serial_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic("generational", "");
    train(&cfg, &dir.path().join("one"), None);
    train(&cfg, &dir.path().join("two"), None);
    for name in [CSV_FILE, JSONL_FILE, FINAL_FILE] {
        assert_eq!(fs::read(dir.path().join("one").join(name)).unwrap(), fs::read(dir.path().join("two").join(name)).unwrap());
    }
}

#[test]
fn parallel_evaluation_matches_serial() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic("elitism", "");
    let pop = commands::init_pop(&cfg, &dir.path().join("p.pop")).unwrap();
    let data = cfg.splits(None).unwrap().validation;
    let serial = evaluate_population(&pop.state.population, &data, 32, &Serial).unwrap();
    for workers in [1, 2, 3, 0] {
        let pool = Workers::new(workers).unwrap();
        assert_eq!(evaluate_population(&pop.state.population, &data, 32, &pool).unwrap(), serial);
    }
    let env = Environment { workers: 3, ..Default::default() };
    let opts = |name: &str| TrainOptions { out: dir.path().join(name), population: None, resume: None };
    commands::train(&cfg, &env, &opts("par")).unwrap();
    commands::train(&cfg, &Environment::default(), &opts("ser")).unwrap();
    assert_eq!(fs::read(dir.path().join("par").join(CSV_FILE)).unwrap(), fs::read(dir.path().join("ser").join(CSV_FILE)).unwrap());
}

#[test]
fn backprop_starts_from_the_fittest_member() {
    let dir = TempDir::new().unwrap();
    let cfg = synthetic("backprop", "");
    let pop = dir.path().join("init.pop");
    let file = commands::init_pop(&cfg, &pop).unwrap();
    let data = cfg.splits(None).unwrap().validation;
    let table = evaluate_population(&file.state.population, &data, 32, &Serial).unwrap();
    let records = train(&cfg, &dir.path().join("bp"), Some(pop));
    assert_eq!(records[0].best_fitness, table.best().unwrap().fitness);
    assert_eq!(records[0].evaluations_so_far, 1);
    // 160 training examples in batches of 32
    assert_eq!(records.iter().map(|r| r.generation).collect::<Vec<_>>(), [0, 2, 4, 5]);
    let report = commands::eval(&cfg, &Environment::default(), &dir.path().join("bp").join(FINAL_FILE), None, SplitName::Validation).unwrap();
    assert_eq!(report.accuracy, records.last().unwrap().best_fitness);
    assert_eq!(report.examples, 20);
}

#[test]
fn compare_consumes_its_own_output() {
    let dir = TempDir::new().unwrap();
    let pop = dir.path().join("init.pop");
    commands::init_pop(&synthetic("elitism", ""), &pop).unwrap();
    let runs = [dir.path().join("elitism"), dir.path().join("steady")];
    let e = train(&synthetic("elitism", ""), &runs[0], Some(pop.clone()));
    let s = train(&synthetic("steady-state", ""), &runs[1], Some(pop));
    let out = dir.path().join("cmp");
    let series = commands::compare(&runs, &out).unwrap();
    assert_eq!(series.len(), 2);

    let mut reader = csv::Reader::from_path(out.join("compare.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["log10_evaluations", "evaluations", "elitism", "steady"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let mut xs: Vec<u64> = e.iter().chain(&s).map(|r| r.evaluations_so_far).collect();
    xs.sort();
    xs.dedup();
    assert_eq!(rows.len(), xs.len());
    for (row, x) in rows.iter().zip(&xs) {
        assert_eq!(row[1].parse::<u64>().unwrap(), *x);
        assert_eq!(row[0].parse::<f64>().unwrap(), (*x as f64).log10());
    }
    let svg = fs::read_to_string(out.join("compare.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("elitism") && svg.contains("steady"));

    assert_eq!(series[0].points, e.iter().map(|r| (r.evaluations_so_far, r.best_fitness)).collect::<Vec<_>>());
}

#[test]
fn compare_rejects_empty_run_directories() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert!(commands::compare(&[empty.clone()], &dir.path().join("out")).is_err());
    let status = Command::new(env!("CARGO_BIN_EXE_accordion"))
        .args(["compare", "--out"])
        .arg(dir.path().join("out"))
        .arg(&empty)
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("error:"));
}

#[test]
fn config_errors_name_the_field() {
    let unknown = RunConfig::parse("scheme = \"elitism\"\nseed = 1\nbogus = 2\n[dataset]\nkind = \"synthetic\"\n[ga]\nmax_generations = 1\n");
    assert!(matches!(unknown, Err(Error::Config(ref m)) if m.contains("bogus")), "{unknown:?}");
    let bad = RunConfig::parse("scheme = \"generational\"\nseed = 1\n[dataset]\nkind = \"synthetic\"\n[ga]\npop_size = 5\nmax_generations = 1\n");
    assert!(bad.unwrap_err().to_string().contains("pop_size"));
    let missing = RunConfig::parse("scheme = \"elitism\"\nseed = 1\n[dataset]\nkind = \"mnist\"\ndir = \"nowhere\"\n[ga]\nmax_generations = 1\n").unwrap();
    let err = missing.load_dataset(Some(Path::new("/nonexistent"))).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
    assert!(err.to_string().contains("nowhere"));
}

#[test]
fn binary_runs_the_whole_workflow() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, synthetic("elitism", "").to_toml()).unwrap();
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_accordion")).args(args).current_dir(dir.path()).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    run(&["init-pop", "--config", "run.toml", "--out", "init.pop"]);
    run(&["train", "--config", "run.toml", "--out", "run", "--population", "init.pop", "--workers", "2"]);
    assert_eq!(read_csv(&dir.path().join("run").join(CSV_FILE)).unwrap().len(), 6);
    let report = run(&["eval", "--config", "run.toml", "--population", "run/final.pop", "--split", "test"]);
    assert!(report.contains("accuracy"), "{report}");
    run(&["compare", "--out", "cmp", "run"]);
    assert!(dir.path().join("cmp").join("compare.csv").exists());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.architecture().unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        seen += 1;
    }
    assert!(seen >= 5);
}

#[test]
fn inline_architectures_roundtrip() {
    let mut cfg = synthetic("elitism", "");
    cfg.architecture = Some(accordion::config::ArchitectureRef::Inline(accordion_core::nn::synthetic_tiny(2)));
    let text = cfg.to_toml();
    let back = RunConfig::parse(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(*back.architecture().unwrap(), accordion_core::nn::synthetic_tiny(2));
}
