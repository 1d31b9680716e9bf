//! Weighted Fréchet means under the Stein metric.

use geodyn::manifold::{stein_wfm_iterates, stein_wfm_solve, wfm_objective, WeightVector, WFM_MAX_ITER, WFM_TOL};
use geodyn::sample;
use geodyn::spd::SpdMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> geodyn::Result<()> {
    let pts = [SpdMatrix::from_diagonal(&[1.0])?, SpdMatrix::from_diagonal(&[4.0])?];
    let sol = stein_wfm_solve(&pts, &WeightVector::uniform(2), 1e-12, 100)?;
    println!("mean of 1 and 4: {:.10} after {} sweeps", sol.mean.as_matrix()[(0, 0)], sol.iterations);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<SpdMatrix> = (0..5).map(|_| sample::spd(&mut rng, 4)).collect();
    let w = WeightVector::normalized(&[5.0, 4.0, 3.0, 2.0, 1.0])?;
    let sol = stein_wfm_solve(&pts, &w, WFM_TOL, WFM_MAX_ITER)?;
    println!("4x4, five points: {} sweeps, residual {:.1e}", sol.iterations, sol.residual);
    for (k, f) in stein_wfm_iterates(&pts, &w, 5)?.iter().enumerate() {
        println!("  sweep {k}: objective {:.12}", wfm_objective(&pts, &w, f)?);
    }
    Ok(())
}
