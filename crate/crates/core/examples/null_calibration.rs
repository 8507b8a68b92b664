//! Calibrating an observed statistic: the null spectrum, the parametric
//! bootstrap, and the two moment-matching approximations.
//!
//! Run with `cargo run --release --example null_calibration`.

use dbreg::sim::synthetic_null_data;
use dbreg::{
    bootstrap_pvalue, cumulants, fit_box_chi2, fit_generalized_gamma, null_spectrum, pseudo_f, sqrt_f,
    tail_pvalue_gamma, DesignMatrix, Kernel, Method, ResponseMatrix,
};

fn main() -> dbreg::Result<()> {
    let (y, x) = synthetic_null_data(300, 10, 5, 7)?;
    let design = DesignMatrix::new(x)?;
    let s = Kernel::Linear.similarity(&ResponseMatrix::new(y)?)?;
    let spec = null_spectrum(&s, &design)?;
    println!(
        "{} positive eigenvalues, factor = {:.4}, entropy(w) = {:.3}, entropy(eta) = {:.3}",
        spec.w.len(),
        spec.factor,
        spec.entropy(Method::Pseudo),
        spec.entropy(Method::Sqrt)
    );

    for (method, t) in [(Method::Pseudo, pseudo_f(&s, &design)?.value), (Method::Sqrt, sqrt_f(&s, &design)?.value)] {
        let c = cumulants(&spec, method);
        let boxed = fit_box_chi2(&c)?;
        let p_boot = bootstrap_pvalue(t, &spec, method, 20_000, 1)?;
        let p_gamma = match fit_generalized_gamma(&c) {
            Ok(fit) => format!("{:.4} ({} iterations)", tail_pvalue_gamma(t, &fit.params), fit.diagnostics.iterations),
            Err(e) => format!("unavailable: {e}"),
        };
        println!("{method}: T = {t:.4}");
        println!("  cumulants  {:?}", c.values);
        println!("  bootstrap  {p_boot:.4}");
        println!("  box        {:.4} (scale {:.4}, df {:.2})", boxed.tail(t), boxed.scale, boxed.df);
        println!("  gamma      {p_gamma}");
    }
    Ok(())
}
