//! Runs the default benchmark (3000 cows, 30 replicates of 2000/1000) and
//! prints the per-model summary.

use std::time::Instant;

use dailyyield::bench::{make_splits, run_benchmark, BenchOptions};
use dailyyield::grid::IntervalGrid;
use dailyyield::models::ModelId;
use dailyyield::sim::{simulate_herd, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SimConfig::default();
    let start = Instant::now();
    let data = simulate_herd::<f64>(&cfg)?;
    let grid = IntervalGrid::default();
    let plan = make_splits(cfg.n_cows, 2000, 30, cfg.seed)?;
    let report = run_benchmark(&data, &ModelId::ALL, &plan, &grid, &BenchOptions::default())?;
    println!("{:<5} {:>10} {:>8} {:>8} {:>7}", "model", "variance", "bias2", "mse", "r2");
    for m in &report.models {
        match m.metrics {
            Some(x) => println!(
                "{:<5} {:>10.3e} {:>8.4} {:>8.4} {:>7.4}",
                m.id, x.variance, x.bias_sq, x.mse, x.r2_accuracy
            ),
            None => println!("{:<5} failed: {:?}", m.id, m.status),
        }
        for p in &m.params {
            print!("  {}={:.4}±{:.4}", p.name, p.mean, p.sd);
        }
        println!();
        if let Some(d) = m.diagnostics {
            for l in d {
                println!("  {} y = {:.3} + {:.4} ŷ  r={:.4}", l.session, l.intercept, l.slope, l.correlation);
            }
        }
    }
    println!("elapsed {:.2?}", start.elapsed());
    Ok(())
}
