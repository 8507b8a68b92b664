use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `A Aᵀ` with `A` of shape `n × rank`.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, rank);
    let mut s = &a * a.transpose();
    crate::kernel::symmetrize(&mut s);
    s
}
