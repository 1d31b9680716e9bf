//! The scalar state-space model as a recurrence and as a convolution.

use geodyn::ssm::{discretize, lag_weights, scalar_ssm_oracle};

fn main() -> geodyn::Result<()> {
    let (at, bt) = discretize(-1.0, 1.0, 0.1)?;
    println!("ã = {at:.9}, b̃ = {bt:.10}");

    let x: Vec<f64> = (0..16).map(|k| (k as f64 * 0.6).sin()).collect();
    let run = scalar_ssm_oracle(-1.0, 1.0, 0.5, 0.2, 0.1, &x)?;
    let gap = run.recurrence.iter().zip(&run.convolution).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("kernel head {:?}", &run.kernel[..4]);
    println!("recurrence vs convolution: {gap:.1e}");

    let w = lag_weights(0.5, 3, &[0.0; 3])?;
    println!("lag weights at ã = 0.5: {:?}", w.as_slice());
    Ok(())
}
