//! Covariance sequences from a synthetic 15-joint skeleton clip.

use geodyn::data::{skeleton_covariance_sequence, SkeletonClip};

fn main() -> geodyn::Result<()> {
    let frames: Vec<Vec<[f64; 3]>> = (0..40)
        .map(|t| {
            let t = t as f64 * 0.1;
            (0..15)
                .map(|j| {
                    let j = j as f64;
                    [j * 0.1 + (t + j).sin() * 0.05, (t * 2.0 + j).cos() * 0.05, j * 0.02]
                })
                .collect()
        })
        .collect();
    let clip = SkeletonClip::new(frames, 0)?;
    for w in [4, 8, 16] {
        let out = skeleton_covariance_sequence(&clip, w, 1e-3)?;
        let lmin = out.seq.iter().map(|m| m.min_eigenvalue()).fold(f64::INFINITY, f64::min);
        println!("window {w:>2}: {} frames of {}x{}, smallest eigenvalue {lmin:.2e}", out.seq.len(), out.seq.dim(), out.seq.dim());
    }
    Ok(())
}
