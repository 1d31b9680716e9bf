//! Distances, exponential and logarithm maps, and isometries on the SPD cone.

use geodyn::manifold::{cayley, translate};
use geodyn::sample;
use geodyn::spd::{spd_exp, spd_log, stein_distance, SpdMatrix, SymMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> geodyn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let x = SpdMatrix::from_diagonal(&[1.0, 4.0])?;
    let y = SpdMatrix::identity(2);
    println!("d(diag(1,4), I) = {:.6}", stein_distance(&x, &y)?);

    let s = SymMatrix::from_row_slice(3, &[0.5, 0.2, 0.0, 0.2, -1.0, 0.3, 0.0, 0.3, 0.1])?;
    let e = spd_exp(&s)?;
    let back = spd_log(&e)?;
    println!("‖log(exp(S)) − S‖ = {:.2e}", (back.as_matrix() - s.as_matrix()).norm());

    // A rotation from a skew generator moves both points without changing their distance.
    let a = sample::spd(&mut rng, 5);
    let b = sample::spd(&mut rng, 5);
    let g = cayley(&sample::skew(&mut rng, 5, 1.0))?;
    let d = stein_distance(&a, &b)?;
    let dg = stein_distance(&translate(&a, &g)?, &translate(&b, &g)?)?;
    println!("d(A, B) = {d:.12}\nd(gAgᵀ, gBgᵀ) = {dg:.12}");
    Ok(())
}
