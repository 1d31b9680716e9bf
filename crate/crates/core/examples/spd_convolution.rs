//! SPD convolution, padding and the reference implementation.

use geodyn::manifold::{spd_conv, spd_conv_oracle, ConvKernelFactor};
use geodyn::sample;
use geodyn::spd::pad_spd;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> geodyn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = sample::spd(&mut rng, 8);
    for theta in [1, 3, 5] {
        let factor = ConvKernelFactor::new(sample::gaussian(&mut rng, theta, theta), 1e-5)?;
        let padded = pad_spd(&x, (theta - 1) / 2, 0.01)?;
        let y = spd_conv(&padded, &factor)?;
        let reference = spd_conv_oracle(&padded, &factor.kernel())?;
        println!(
            "θ = {theta}: output {}x{}, λ_min {:.3e}, gap to reference {:.1e}",
            y.dim(),
            y.dim(),
            y.min_eigenvalue(),
            (y.as_matrix() - reference.as_matrix()).norm()
        );
    }
    Ok(())
}
