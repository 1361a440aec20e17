use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Component-wise Gaussian random walk. Components flagged in `log_walk`
/// move as `x' = x exp(step z)`, which needs the Jacobian `log(x'/x)` in
/// the acceptance ratio; that correction is returned alongside the
/// proposal.
pub fn propose(current: &[f64], step_sizes: &[f64], log_walk: &[bool], rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let mut log_q_correction = 0.0;
    let proposal = current
        .iter()
        .enumerate()
        .map(|(d, &x)| {
            let z: f64 = StandardNormal.sample(rng);
            let step = step_sizes[d];
            if log_walk.get(d).copied().unwrap_or(false) {
                let moved = step * z;
                log_q_correction += moved;
                x * moved.exp()
            } else {
                x + step * z
            }
        })
        .collect();
    (proposal, log_q_correction)
}

/// `log q(x | x') - log q(x' | x)` for a walk from `from` to `to`.
pub fn log_q_correction(from: &[f64], to: &[f64], log_walk: &[bool]) -> f64 {
    from.iter()
        .zip(to)
        .zip(log_walk.iter().chain(std::iter::repeat(&false)))
        .filter(|(_, &lw)| lw)
        .map(|((a, b), _)| (b / a).ln())
        .sum()
}
