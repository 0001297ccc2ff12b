//! Single-site systematic-scan Gibbs sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::model::{Configuration, ExponentialParams};

pub const DEFAULT_BURN_IN: usize = 1000;
pub const DEFAULT_THINNING: usize = 5;

/// Kept samples from a systematic-scan chain: `burn_in` full sweeps are
/// discarded, then one configuration is kept every `thinning` sweeps.
pub fn gibbs_sample(
    params: &ExponentialParams,
    seed: u64,
    burn_in: usize,
    thinning: usize,
    count: usize,
) -> Result<Vec<Configuration>> {
    let n = params.graph().num_nodes();
    let m = params.num_states();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut x: Configuration = (0..n).map(|_| rng.random_range(0..m)).collect();
    let thinning = thinning.max(1);

    let mut logits = vec![0.0; m];
    let mut sweep = |x: &mut Configuration, rng: &mut ChaCha12Rng| {
        for s in 0..n {
            for (j, slot) in logits.iter_mut().enumerate() {
                *slot = params.node(s)[j];
            }
            for &t in params.graph().neighbors(s) {
                let e = params.graph().edge_index(s, t).expect("adjacent");
                let (a, _) = if s < t { (s, t) } else { (t, s) };
                for (j, slot) in logits.iter_mut().enumerate() {
                    *slot += if a == s {
                        params.edge_entry(e, j, x[t])
                    } else {
                        params.edge_entry(e, x[t], j)
                    };
                }
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut weights: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
            let z: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= z);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            x[s] = m - 1;
            for (j, &w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    x[s] = j;
                    break;
                }
            }
        }
    };

    for _ in 0..burn_in {
        sweep(&mut x, &mut rng);
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        for _ in 0..thinning {
            sweep(&mut x, &mut rng);
        }
        out.push(x.clone());
    }
    Ok(out)
}
