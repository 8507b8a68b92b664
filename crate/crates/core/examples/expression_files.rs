//! The file-based workflow: an expression table for one pathway (102
//! specimens by 33 genes) against a binary tumor indicator.
//!
//! Run with `cargo run --example expression_files`.

use std::fmt::Write as _;

use dbreg::io::{cmd_test, InputKind, MethodChoice, PValueRoute, RunConfig};
use dbreg::rng::stream;
use dbreg::Kernel;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> dbreg::Result<()> {
    let dir = std::env::temp_dir().join("dbreg-expression-example");
    std::fs::create_dir_all(&dir)?;
    let mut rng = stream(5, 0);

    let mut y = (1..=33).map(|g| format!("gene{g}")).collect::<Vec<_>>().join(",") + "\n";
    let mut x = String::from("tumor\n");
    for i in 0..102 {
        let tumor = (i < 52) as u8;
        let row: Vec<String> = (0..33)
            .map(|g| {
                let z: f64 = rng.sample(StandardNormal);
                let shift = if tumor == 1 && g < 4 { 0.6 } else { 0.0 };
                format!("{:.5}", 6.0 + shift + z)
            })
            .collect();
        writeln!(y, "{}", row.join(",")).unwrap();
        writeln!(x, "{tumor}").unwrap();
    }
    let (ypath, xpath) = (dir.join("map00250.csv"), dir.join("status.csv"));
    std::fs::write(&ypath, y)?;
    std::fs::write(&xpath, x)?;

    let config = RunConfig {
        outcome: ypath,
        design: xpath,
        input_kind: InputKind::Responses,
        kernel: Kernel::Linear,
        method: MethodChoice::Both,
        routes: vec![PValueRoute::Bootstrap, PValueRoute::Gamma, PValueRoute::Permutation],
        b: 2000,
        seed: 11,
        alpha: 0.05,
        add_intercept: false,
        factor: None,
        threads: None,
        timings: false,
    };
    let doc = cmd_test(&config)?;
    print!("{}", doc.to_tsv());
    for w in &doc.warnings {
        println!("warning: {} {}", w.kind, w.message);
    }
    Ok(())
}
