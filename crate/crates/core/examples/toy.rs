//! Runs the synthetic pipeline once and prints the test report.
//!
//! `cargo run --release -p csgaze-core --example toy -- [train] [test] [seed]`

use std::time::Instant;

use csgaze_core::experiment::{build_toy_data, toy_classify, toy_pretrain, ToyConfig};
use csgaze_core::model::Modalities;

fn main() -> csgaze_core::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut cfg = ToyConfig::default();
    if let Some(&n) = args.first() {
        cfg.train_scenes = n as usize;
    }
    if let Some(&n) = args.get(1) {
        cfg.test_scenes = n as usize;
    }
    let seed = args.get(2).copied().unwrap_or(0);
    let t = Instant::now();
    let data = build_toy_data(&cfg)?;
    eprintln!("data ready in {:.1}s ({} gaze samples)", t.elapsed().as_secs_f64(), data.train_gaze.len());
    let t = Instant::now();
    let pre = toy_pretrain(&data, &cfg, seed)?;
    eprintln!("pretrain {:.1}s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let (_, out) = toy_classify(&data, &pre, &cfg, seed, Modalities::ALL)?;
    eprintln!("classify {:.1}s", t.elapsed().as_secs_f64());
    println!("{}", out.report.to_table());
    println!("{}", serde_json::to_string_pretty(&out.attention).expect("serialisable"));
    Ok(())
}
