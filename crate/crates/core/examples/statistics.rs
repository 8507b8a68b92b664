//! Both test statistics on one simulated data set, with and without signal.
//!
//! Run with `cargo run --example statistics`.

use dbreg::rng::stream;
use dbreg::sim::{gen_beta, sample_mvnormal, build_correlation, Correlation};
use dbreg::{gram_linear, hat_matrix, pseudo_f, sqrt_f, DesignMatrix, ResponseMatrix};
use nalgebra::DVector;

fn main() -> dbreg::Result<()> {
    let (n, k, m) = (200, 10, 5);
    let mut rng = stream(42, 0);
    let theta_x = build_correlation(&Correlation::ar1(0.5).with_dim(m))?;
    let theta_e = build_correlation(&Correlation::equal(0.8).with_dim(k))?;
    let x = sample_mvnormal(&DVector::from_element(m, 1.0), &theta_x, n, &mut rng)?;
    let noise = sample_mvnormal(&DVector::zeros(k), &theta_e, n, &mut rng)?;
    let beta = gen_beta(0.4, k, m, &mut rng);

    let design = DesignMatrix::new(x.clone())?;
    let h = hat_matrix(&design);
    println!("trace of hat matrix = {:.6} (m = {m})", h.trace());

    for (label, y) in [("null", noise.clone()), ("signal", &x * &beta + noise)] {
        let s = gram_linear(&ResponseMatrix::new(y)?);
        let tp = pseudo_f(&s, &design)?;
        let ts = sqrt_f(&s, &design)?;
        println!("{label:>6}: T_pseudo = {:.4}, T_sqrt = {:.4}", tp.value, ts.value);
    }
    Ok(())
}
