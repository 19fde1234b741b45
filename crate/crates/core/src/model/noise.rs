//! Span masking for denoising objectives.
//!
//! A seeded plan picks contiguous spans (lengths drawn from a Poisson
//! distribution, clamped to at least 1) until the planned number of masked
//! positions is reached exactly, then every maximal masked run is collapsed
//! to a single `MASK` token. A mask ratio of 0 is the identity; a ratio of 1
//! reduces any sequence to one `MASK`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::model::config::NoiseConfig;
use crate::model::subword::MASK_ID;

/// Boolean plan marking which of `len` positions get masked. The number of
/// `true` entries is exactly `round(mask_ratio * len)`.
pub fn span_mask(len: usize, cfg: &NoiseConfig, seed: u64) -> Vec<bool> {
    let mut masked = vec![false; len];
    let target = (cfg.mask_ratio * len as f64).round() as usize;
    if target == 0 || len == 0 {
        return masked;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = Poisson::new(cfg.mean_span_len).expect("validated positive mean");
    let mut remaining = target;
    while remaining > 0 {
        let span = (poisson.sample(&mut rng) as usize).max(1).min(remaining);
        let open: Vec<usize> = (0..len).filter(|&i| !masked[i]).collect();
        let &start = open.choose(&mut rng).expect("remaining > 0 implies open slots");
        for i in start..(start + span).min(len) {
            if !masked[i] {
                masked[i] = true;
                remaining -= 1;
            }
        }
    }
    masked
}

/// Applies a seeded span-mask plan to a token sequence: unmasked tokens are
/// kept in order, each maximal masked run becomes one `MASK`.
pub fn noise(tokens: &[u32], cfg: &NoiseConfig, seed: u64) -> Vec<u32> {
    let plan = span_mask(tokens.len(), cfg, seed);
    let mut out = Vec::with_capacity(tokens.len());
    for (i, &tok) in tokens.iter().enumerate() {
        if plan[i] {
            if i == 0 || !plan[i - 1] {
                out.push(MASK_ID);
            }
        } else {
            out.push(tok);
        }
    }
    out
}
