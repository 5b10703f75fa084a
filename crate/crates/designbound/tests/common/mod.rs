#![allow(dead_code)]

use std::path::{Path, PathBuf};

use clap::Parser;
use designbound::commands::analyze::{build_report, AnalyzeArgs};
use designbound::Report;
use designbound_core::dgp::{example1_oracle, example2_dataset};
use designbound_core::sample::Arm;

#[derive(Parser)]
struct Wrap {
    #[command(flatten)]
    args: AnalyzeArgs,
}

pub fn analyze_args(argv: &[&str]) -> AnalyzeArgs {
    let mut full = vec!["analyze"];
    full.extend_from_slice(argv);
    Wrap::try_parse_from(full).expect("valid analyze arguments").args
}

pub fn report_from(argv: &[&str]) -> Report {
    build_report(&analyze_args(argv), vec![]).expect("analysis succeeds")
}

/// The 24-unit table sample and its subsample ids, written to `dir`.
pub fn table_files(dir: &Path) -> (PathBuf, PathBuf) {
    let e = example2_dataset().unwrap();
    let csv = dir.join("table.csv");
    designbound::csv_io::write_sample(std::fs::File::create(&csv).unwrap(), &e.sample, &["x".to_string()]).unwrap();
    let ids = dir.join("ids.txt");
    std::fs::write(&ids, e.subsample_ids.join("\n")).unwrap();
    (csv, ids)
}

/// A sample whose cell frequencies equal the binary toy model at p = 0.1
/// (40/10/10/40 out of 100); outcomes are the model mean plus ±0.5.
pub fn binary_model_csv(dir: &Path) -> PathBuf {
    let o = example1_oracle(0.1).unwrap();
    let mut text = String::from("id,d,y,x\n");
    let mut k = 0;
    for (x, arm, mass) in o.dgp.joint.joint_atoms() {
        let count = (mass * 200.0).round() as usize;
        for j in 0..count {
            let d = arm.indicator();
            let noise = if j % 2 == 0 { 0.5 } else { -0.5 };
            let y = d + d * x[0] + x[0] + noise;
            text.push_str(&format!("u{k:04},{},{y},{}\n", u8::from(arm == Arm::Treated), x[0]));
            k += 1;
        }
    }
    let path = dir.join("binary.csv");
    std::fs::write(&path, text).unwrap();
    path
}

/// Untreated index values spread evenly over four points, treated tilted
/// towards the top, with a mildly noisy outcome.
pub fn four_strata_csv(dir: &Path) -> PathBuf {
    let mut text = String::from("id,d,y,x\n");
    let mut k = 0;
    for (arm, counts) in [(0, [10, 10, 10, 10]), (1, [4, 8, 12, 16])] {
        for (s, &n) in counts.iter().enumerate() {
            for j in 0..n {
                let x = (s + 1) as f64;
                let y = 0.1 * arm as f64 + 0.02 * x + if j % 2 == 0 { 0.03 } else { -0.03 };
                text.push_str(&format!("s{k:03},{arm},{y},{x}\n"));
                k += 1;
            }
        }
    }
    let path = dir.join("strata.csv");
    std::fs::write(&path, text).unwrap();
    path
}
