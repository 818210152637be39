#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deepmr::data::Instance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_instances(cards: &[usize], m: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let ids = cards.iter().map(|&z| rng.random_range(0..z as u32)).collect();
            Instance::new(rng.random_range(0..2u8), ids)
        })
        .collect()
}

pub const FRAPPE_FIELDS: [&str; 10] = [
    "user", "item", "daytime", "weekday", "isweekend", "homework", "cost", "weather", "country", "city",
];

/// Positive-only log with Frappe's ten-field layout. Item popularity is
/// Zipf-distributed and each user prefers the items of one taste cluster, so
/// both item identity and user×item interactions separate positives from
/// sampled negatives.
pub fn frappe_like_text(users: usize, items: usize, positives: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = 8;
    let weight = |i: usize| 1.0 / ((i + 1) as f64).powf(1.1);
    let cumulative = |ids: Vec<usize>| {
        let mut acc = 0.0;
        let cum: Vec<f64> = ids.iter().map(|&i| {
            acc += weight(i);
            acc
        }).collect();
        (ids, cum)
    };
    let global = cumulative((0..items).collect());
    let by_cluster: Vec<_> = (0..clusters)
        .map(|c| cumulative((0..items).filter(|i| i % clusters == c).collect()))
        .collect();
    let draw = |(ids, cum): &(Vec<usize>, Vec<f64>), rng: &mut ChaCha8Rng| {
        let x = rng.random::<f64>() * cum[cum.len() - 1];
        ids[cum.partition_point(|&c| c < x).min(ids.len() - 1)]
    };

    let mut s = String::from("#fields:\t");
    s.push_str(&FRAPPE_FIELDS.join("\t"));
    s.push('\n');
    for _ in 0..positives {
        let u = rng.random_range(0..users);
        let item = if rng.random_bool(0.7) {
            draw(&by_cluster[u % clusters], &mut rng)
        } else {
            draw(&global, &mut rng)
        };
        let weekday = rng.random_range(0..7);
        let country = u % 5;
        let _ = writeln!(
            s,
            "1\tu{u}\ti{item}\t{}\t{}\t{}\t{}\t{}\t{}\tc{country}\tcity{}",
            ["morning", "afternoon", "evening", "night"][rng.random_range(0..4)],
            ["mon", "tue", "wed", "thu", "fri", "sat", "sun"][weekday],
            if weekday >= 5 { "weekend" } else { "workday" },
            ["home", "work", "unknown"][rng.random_range(0..3)],
            ["free", "paid"][usize::from(rng.random_bool(0.2))],
            ["sunny", "cloudy", "rainy"][rng.random_range(0..3)],
            country * 3 + u % 3,
        );
    }
    s
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_deepmr"))
}

pub fn deepmr(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn deepmr")
}

/// Runs a subcommand against `config`, panicking with its stderr on failure.
pub fn deepmr_ok(sub: &str, config: &Path, extra: &[&str]) -> String {
    let mut args = vec![sub, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = deepmr(&args);
    assert!(
        out.status.success(),
        "deepmr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

/// Records of a CSV file (header excluded).
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}
