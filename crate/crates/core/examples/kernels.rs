//! Similarity matrices from responses and from distances.
//!
//! Run with `cargo run --example kernels`.

use dbreg::kernel::{euclidean_distances, Kernel};
use dbreg::{center, distance_to_similarity, gram_linear, ResponseMatrix};
use nalgebra::DMatrix;

fn main() -> dbreg::Result<()> {
    let y = ResponseMatrix::from_rows(&[
        vec![1.0, 0.2, -0.4],
        vec![0.5, 1.1, 0.0],
        vec![-0.3, 0.4, 0.9],
        vec![0.0, -1.2, 0.3],
        vec![0.8, 0.8, 0.8],
    ])?;

    let linear = gram_linear(&y);
    let centered = center(&linear);
    println!("linear kernel, centered:\n{:.4}", centered.matrix());

    let gaussian: Kernel = "gaussian:1.5".parse()?;
    let s = gaussian.similarity(&y)?;
    let (lo, hi) = s.eigen_range();
    println!("{gaussian}: eigenvalues in [{lo:.4}, {hi:.4}], PSD = {}", s.is_psd());

    // Gower centering of Euclidean distances recovers the centered linear kernel.
    let gower = distance_to_similarity(&euclidean_distances(&y));
    let gap: DMatrix<f64> = gower.similarity.matrix() - centered.matrix();
    println!(
        "Gower vs centered linear: max |diff| = {:.2e}, Euclidean = {}",
        gap.abs().max(),
        !gower.check.not_euclidean
    );
    Ok(())
}
