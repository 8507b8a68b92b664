//! Wall-clock cost of the parametric bootstrap against the permutation test.
//!
//! Run with `cargo run --release --example timing -- [n] [B]`.

use dbreg::permutation::timing_benchmark;
use dbreg::Kernel;

fn main() -> dbreg::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let n = args.next().flatten().unwrap_or(500);
    let b = args.next().flatten().unwrap_or(1000);
    let report = timing_benchmark(n, b, Kernel::Linear, 1)?;
    println!(
        "n = {n}, B = {b}: bootstrap {:.4}s, permutation {:.4}s, ratio {:.1}",
        report.t_parametric_s, report.t_permutation_s, report.ratio
    );
    Ok(())
}
