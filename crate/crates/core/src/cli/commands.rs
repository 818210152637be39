use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{
    decode_rows, load_canonical_file, prepare, write_canonical, FieldVocabulary, Instance,
};
use crate::eval::{aggregate_runs, MetricsReport, SeedMetrics};
use crate::model::{init_params, load_checkpoint, predict_all, save_checkpoint, BetaMode, BranchMode, HyperParams};
use crate::train::{evaluate_split, fit, EpochLog, SeedRun};
use crate::{Error, Result};

use super::config::RunConfig;
use super::AblationMode;

pub const VOCAB_FILE: &str = "vocab.tsv";
pub const TRAIN_FILE: &str = "train.tsv";
pub const VAL_FILE: &str = "val.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const MANIFEST_FILE: &str = "model.manifest.json";
pub const BLOB_FILE: &str = "model.bin";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const ABLATION_EPOCHS_FILE: &str = "ablation_epochs.csv";
pub const BETA_TRAJECTORY_FILE: &str = "beta_trajectory.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const GRID_BEST_DIR: &str = "grid_best";

pub const EPOCHS_HEADER: [&str; 7] = ["seed", "epoch", "train_loss", "val_auc", "val_logloss", "beta", "alpha_l2norm"];

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn epoch_row(log: &EpochLog) -> Vec<String> {
    vec![
        log.seed.to_string(),
        log.epoch.to_string(),
        log.train_loss.to_string(),
        log.val_auc.to_string(),
        log.val_logloss.to_string(),
        log.beta.to_string(),
        log.alpha_l2norm().to_string(),
    ]
}

/// Prepared splits, encoded with the stored vocabulary.
pub struct LoadedData {
    pub vocabulary: FieldVocabulary,
    pub train: Vec<Instance>,
    pub validation: Vec<Instance>,
    pub test: Vec<Instance>,
}

fn encode_file(path: &Path, vocab: &FieldVocabulary) -> Result<Vec<Instance>> {
    let file = load_canonical_file(path)?;
    file.records.iter().map(|r| vocab.encode_record(r)).collect()
}

pub fn load_prepared(cfg: &RunConfig) -> Result<LoadedData> {
    let dir = cfg.data_dir();
    let vocab_path = dir.join(VOCAB_FILE);
    if !vocab_path.exists() {
        return Err(Error::Dataset(format!(
            "{} not found; run `deepmr prepare` first",
            vocab_path.display()
        )));
    }
    let vocabulary = FieldVocabulary::read_tsv(&vocab_path, cfg.vocab_options())?;
    let train = encode_file(&dir.join(TRAIN_FILE), &vocabulary)?;
    let validation = encode_file(&dir.join(VAL_FILE), &vocabulary)?;
    let test = encode_file(&dir.join(TEST_FILE), &vocabulary)?;
    Ok(LoadedData {
        vocabulary,
        train,
        validation,
        test,
    })
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("prepare needs `input`".into()))?;
    let file = load_canonical_file(input)?;
    let prepared = prepare(&file, cfg.vocab_options(), cfg.negatives, cfg.data_seed)?;

    create_dir(&cfg.out)?;
    prepared.vocabulary.write_tsv(cfg.out.join(VOCAB_FILE))?;
    let names = prepared.field_names.as_deref();
    let splits = &prepared.splits;
    for (name, part) in [(TRAIN_FILE, &splits.train), (VAL_FILE, &splits.validation), (TEST_FILE, &splits.test)] {
        write_canonical(cfg.out.join(name), names, decode_rows(&prepared.vocabulary, part))?;
    }

    let n = prepared.vocabulary.field_count();
    match &prepared.field_names {
        Some(names) => println!("fields: {n} ({})", names.join(", ")),
        None => println!("fields: {n}"),
    }
    println!("cardinalities: {:?}", prepared.vocabulary.cardinalities());
    println!(
        "instances: {} (positives {}, negatives {}, short of k for {} positives)",
        prepared.total(),
        prepared.positives,
        prepared.negatives_added,
        prepared.shortfall_instances
    );
    println!(
        "split: train {}, val {}, test {}",
        splits.train.len(),
        splits.validation.len(),
        splits.test.len()
    );
    Ok(())
}

/// `fit` over the loaded splits with the config's hyperparameters.
fn run_fit(cfg: &RunConfig, data: &LoadedData) -> Result<(HyperParams, Vec<SeedRun<f64>>)> {
    let hp = cfg.hyper_params(data.vocabulary.cardinalities());
    hp.validate()?;
    let runs = fit::<f64>(&data.train, &data.validation, &hp, &cfg.train_config())?;
    Ok((hp, runs))
}

/// Seed with the highest best-epoch validation AUC; the first wins ties.
fn best_run(runs: &[SeedRun<f64>]) -> &SeedRun<f64> {
    runs.iter().fold(&runs[0], |best, r| {
        if r.best_log().val_auc > best.best_log().val_auc {
            r
        } else {
            best
        }
    })
}

fn method_name(hp: &HyperParams) -> &'static str {
    match hp.branches {
        BranchMode::Both => "deepmr",
        BranchMode::DnnOnly => "dnn-only",
        BranchMode::AttentionOnly => "attention-only",
    }
}

pub struct TrainOutcome {
    pub runs: Vec<SeedRun<f64>>,
    pub validation: MetricsReport,
    pub test: MetricsReport,
}

/// Trains every seed and writes checkpoints, `epochs.csv` and `report.csv` under `out`.
pub fn train_and_write(cfg: &RunConfig, data: &LoadedData, out: &Path) -> Result<TrainOutcome> {
    let (hp, runs) = run_fit(cfg, data)?;
    create_dir(out)?;
    let fingerprint = cfg.fingerprint();

    let mut epoch_rows = Vec::new();
    let mut val_metrics = Vec::new();
    let mut test_metrics = Vec::new();
    for run in &runs {
        epoch_rows.extend(run.logs.iter().map(epoch_row));
        let best = run.best_log();
        val_metrics.push(SeedMetrics {
            seed: run.seed,
            best_epoch: run.best_epoch,
            auc: best.val_auc,
            logloss: best.val_logloss,
        });
        let (auc, logloss) = evaluate_split(&data.test, &run.best_params, &hp, cfg.batch_size)?;
        test_metrics.push(SeedMetrics {
            seed: run.seed,
            best_epoch: run.best_epoch,
            auc,
            logloss,
        });
        let stem = format!("model.seed{}", run.seed);
        save_checkpoint(&run.best_params, &hp, out.join(format!("{stem}.manifest.json")), &format!("{stem}.bin"))?;
    }
    let best = best_run(&runs);
    save_checkpoint(&best.best_params, &hp, out.join(MANIFEST_FILE), BLOB_FILE)?;
    write_csv(&out.join(EPOCHS_FILE), &EPOCHS_HEADER, &epoch_rows)?;

    let method = method_name(&hp);
    let validation = MetricsReport::new(method, "val", val_metrics, &fingerprint)?;
    let test = MetricsReport::new(method, "test", test_metrics, &fingerprint)?;
    let report = format!(
        "{}\n{}\n{}\n",
        MetricsReport::CSV_HEADER,
        validation.csv_row(),
        test.csv_row()
    );
    let path = out.join(REPORT_FILE);
    fs::write(&path, report).map_err(|e| Error::io(&path, e))?;
    Ok(TrainOutcome { runs, validation, test })
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let data = load_prepared(cfg)?;
    let outcome = train_and_write(cfg, &data, &cfg.out)?;
    print!("{}", outcome.validation.table());
    print!("{}", outcome.test.table());
    println!(
        "best seed {} written to {}",
        best_run(&outcome.runs).seed,
        cfg.out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

/// `val`, `train` and `test` name the prepared splits; anything else is a path.
pub fn resolve_split(cfg: &RunConfig, split: &str) -> PathBuf {
    match split {
        "train" => cfg.data_dir().join(TRAIN_FILE),
        "val" | "validation" => cfg.data_dir().join(VAL_FILE),
        "test" => cfg.data_dir().join(TEST_FILE),
        other => PathBuf::from(other),
    }
}

pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, split: &str) -> Result<()> {
    cfg.validate()?;
    let manifest = checkpoint.map_or_else(|| cfg.out.join(MANIFEST_FILE), Path::to_path_buf);
    let vocab = FieldVocabulary::read_tsv(cfg.data_dir().join(VOCAB_FILE), cfg.vocab_options())?;
    let (params, hp) = load_checkpoint::<f64>(&manifest)?;
    let expected = cfg.hyper_params(vocab.cardinalities());
    params
        .check_shapes(&expected)
        .map_err(|e| Error::Checkpoint(format!("{} does not match the config: {e}", manifest.display())))?;

    let split_path = resolve_split(cfg, split);
    let instances = encode_file(&split_path, &vocab)?;
    let probs = predict_all(&instances, &params, &hp, cfg.batch_size)?;
    let labels: Vec<u8> = instances.iter().map(|x| x.label).collect();
    let auc = crate::eval::auc(&probs, &labels)?;
    let logloss = crate::eval::mean_logloss(&probs, &labels)?;

    println!("split {} ({} instances)", split_path.display(), instances.len());
    println!("auc {auc}");
    println!("logloss {logloss}");
    create_dir(&cfg.out)?;
    write_csv(
        &cfg.out.join(EVAL_FILE),
        &["checkpoint", "split", "instances", "auc", "logloss"],
        &[vec![
            manifest.display().to_string(),
            split_path.display().to_string(),
            instances.len().to_string(),
            auc.to_string(),
            logloss.to_string(),
        ]],
    )
}

fn ablation_variants(cfg: &RunConfig, mode: AblationMode) -> Vec<(String, RunConfig)> {
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = cfg.clone();
        f(&mut c);
        c
    };
    match mode {
        AblationMode::Rezero => vec![
            ("rezero".into(), with(&|c| c.rezero = true)),
            ("no-rezero".into(), with(&|c| c.rezero = false)),
        ],
        AblationMode::ResidualStyle => vec![
            (
                "multiplicative".into(),
                with(&|c| c.residual_style = crate::model::ResidualStyle::Multiplicative),
            ),
            (
                "additive".into(),
                with(&|c| c.residual_style = crate::model::ResidualStyle::Additive),
            ),
        ],
        AblationMode::Beta => (0..=10)
            .map(|i| {
                let b = i as f64 / 10.0;
                (format!("beta={b:.1}"), with(&|c| c.beta = super::config::BetaSetting::Fixed(b)))
            })
            .collect(),
        AblationMode::BetaLearn => {
            let fixed = match cfg.beta.mode() {
                BetaMode::Fixed(b) => b,
                BetaMode::Learnable => 0.5,
            };
            vec![
                (
                    format!("fixed={fixed}"),
                    with(&|c| c.beta = super::config::BetaSetting::Fixed(fixed)),
                ),
                (
                    "learnable".into(),
                    with(&|c| {
                        c.beta = super::config::BetaSetting::Named(super::config::BetaName::Learnable)
                    }),
                ),
            ]
        }
        AblationMode::Arch => {
            let mut v: Vec<(String, RunConfig)> = cfg
                .layer_grid
                .iter()
                .map(|&l| (format!("layers={l}"), with(&|c| c.dnn_layers = l)))
                .collect();
            v.extend(cfg.head_grid.iter().map(|&h| (format!("heads={h}"), with(&|c| c.heads = h))));
            v
        }
    }
}

pub const ABLATION_HEADER: [&str; 9] = [
    "mode",
    "variant",
    "seed",
    "best_epoch",
    "val_auc",
    "val_logloss",
    "test_auc",
    "test_logloss",
    "beta",
];

pub fn cmd_ablate(cfg: &RunConfig, mode: AblationMode) -> Result<()> {
    cfg.validate()?;
    let variants = ablation_variants(cfg, mode);
    for (name, v) in &variants {
        v.validate().map_err(|e| Error::Config(format!("variant {name}: {e}")))?;
    }
    let data = load_prepared(cfg)?;
    create_dir(&cfg.out)?;

    let mut rows = Vec::new();
    let mut epoch_rows = Vec::new();
    let mut trajectory = Vec::new();
    println!("{:<18} {:>22} {:>22}", "variant", "val auc", "val logloss");
    for (name, v) in &variants {
        let (hp, runs) = run_fit(v, &data)?;
        let mut aucs = Vec::new();
        let mut losses = Vec::new();
        for run in &runs {
            let best = run.best_log();
            let (test_auc, test_logloss) = evaluate_split(&data.test, &run.best_params, &hp, v.batch_size)?;
            rows.push(vec![
                mode.name().to_string(),
                name.clone(),
                run.seed.to_string(),
                run.best_epoch.to_string(),
                best.val_auc.to_string(),
                best.val_logloss.to_string(),
                test_auc.to_string(),
                test_logloss.to_string(),
                run.best_params.combine.beta.to_string(),
            ]);
            aucs.push(best.val_auc);
            losses.push(best.val_logloss);
            for log in &run.logs {
                let mut r = vec![name.clone()];
                r.extend(epoch_row(log));
                epoch_rows.push(r);
            }
            if hp.beta == BetaMode::Learnable {
                let initial = init_params::<f64>(&hp, run.seed)?.combine.beta;
                trajectory.push(vec![name.clone(), run.seed.to_string(), "0".into(), initial.to_string()]);
                for log in &run.logs {
                    trajectory.push(vec![
                        name.clone(),
                        run.seed.to_string(),
                        log.epoch.to_string(),
                        log.beta.to_string(),
                    ]);
                }
            }
        }
        let (am, asd) = aggregate_runs(&aucs)?;
        let (lm, lsd) = aggregate_runs(&losses)?;
        println!("{name:<18} {am:>12.6} ± {asd:<8.2e} {lm:>12.6} ± {lsd:<8.2e}");
    }

    write_csv(&cfg.out.join(ABLATION_FILE), &ABLATION_HEADER, &rows)?;
    let mut header = vec!["variant"];
    header.extend(EPOCHS_HEADER);
    write_csv(&cfg.out.join(ABLATION_EPOCHS_FILE), &header, &epoch_rows)?;
    if !trajectory.is_empty() {
        write_csv(
            &cfg.out.join(BETA_TRAJECTORY_FILE),
            &["variant", "seed", "epoch", "beta"],
            &trajectory,
        )?;
    }
    Ok(())
}

pub const GRID_HEADER: [&str; 10] = [
    "rank",
    "point",
    "embedding_dim",
    "learning_rate",
    "l2_lambda",
    "dropout",
    "seed",
    "best_epoch",
    "val_auc",
    "val_logloss",
];

pub fn cmd_gridsearch(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let points = cfg.grid_points()?;
    for p in &points {
        cfg.with_point(*p)
            .validate()
            .map_err(|e| Error::Config(format!("grid point {p:?}: {e}")))?;
    }
    let data = load_prepared(cfg)?;
    create_dir(&cfg.out)?;

    let seed = cfg.seeds[0];
    let mut results = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let mut c = cfg.with_point(*p);
        c.seeds = vec![seed];
        let (_, runs) = run_fit(&c, &data)?;
        let run = &runs[0];
        let best = run.best_log();
        println!(
            "point {i}: d={} lr={} l2={} dropout={} -> val auc {:.6}",
            p.embedding_dim, p.learning_rate, p.l2_lambda, p.dropout, best.val_auc
        );
        results.push((i, *p, run.best_epoch, best.val_auc, best.val_logloss));
    }
    // stable: earlier points win ties
    results.sort_by(|a, b| b.3.total_cmp(&a.3));

    let rows: Vec<Vec<String>> = results
        .iter()
        .enumerate()
        .map(|(rank, (i, p, epoch, auc, loss))| {
            vec![
                (rank + 1).to_string(),
                i.to_string(),
                p.embedding_dim.to_string(),
                p.learning_rate.to_string(),
                p.l2_lambda.to_string(),
                p.dropout.to_string(),
                seed.to_string(),
                epoch.to_string(),
                auc.to_string(),
                loss.to_string(),
            ]
        })
        .collect();
    write_csv(&cfg.out.join(GRID_FILE), &GRID_HEADER, &rows)?;

    let winner = cfg.with_point(results[0].1);
    let outcome = train_and_write(&winner, &data, &cfg.out.join(GRID_BEST_DIR))?;
    println!("confirmation of point {} over {} seeds:", results[0].0, winner.seeds.len());
    print!("{}", outcome.validation.table());
    print!("{}", outcome.test.table());
    Ok(())
}
