use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Train-time dropout. Masks depend only on the run seed, the epoch, the
/// window start and the dropout site, so any split of a batch across
/// workers draws the same masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutStream {
    pub seed: u64,
    pub epoch: u64,
    pub rate: f64,
}

impl DropoutStream {
    /// Inverted-scaling keep mask for `t_starts.len()` samples of
    /// `rows_per_sample × cols` values each, stacked sample-major.
    pub(crate) fn mask(&self, site: &str, t_starts: &[usize], rows_per_sample: usize, cols: usize) -> Arc<Vec<f64>> {
        let keep = 1.0 / (1.0 - self.rate);
        let per = rows_per_sample * cols;
        let mut out = Vec::with_capacity(per * t_starts.len());
        for &t in t_starts {
            let mut h = DefaultHasher::new();
            (self.seed, self.epoch, t, site).hash(&mut h);
            let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
            out.extend((0..per).map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep }));
        }
        Arc::new(out)
    }
}
