use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Registry;
use crate::domain::Domain;

/// Inclusive size bounds `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRange {
    pub lo: usize,
    pub hi: usize,
}

impl SizeRange {
    pub const fn new(lo: usize, hi: usize) -> Self {
        SizeRange { lo, hi }
    }

    pub fn contains(&self, n: usize) -> bool {
        self.lo <= n && n <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("{domain} has {available} compatible tools, need at least {required}")]
    InsufficientTools {
        domain: Domain,
        available: usize,
        required: usize,
    },
    #[error("invalid size range [{lo}, {hi}]")]
    InvalidRange { lo: usize, hi: usize },
}

/// Draws a toolset for `domain`: a uniformly random subset of the compatible
/// tools (domain-tagged plus General) with size uniform in `[lo, min(hi, n)]`,
/// returned in uniformly shuffled order.
pub fn sample_toolset<R: Rng + ?Sized>(
    registry: &Registry,
    domain: Domain,
    range: SizeRange,
    rng: &mut R,
) -> Result<Vec<String>, SampleError> {
    if range.lo == 0 || range.hi < range.lo {
        return Err(SampleError::InvalidRange {
            lo: range.lo,
            hi: range.hi,
        });
    }
    let compatible: Vec<&str> = registry
        .specs()
        .filter(|s| domain.accepts(s.domain))
        .map(|s| s.name.as_str())
        .collect();
    if compatible.len() < range.lo {
        return Err(SampleError::InsufficientTools {
            domain,
            available: compatible.len(),
            required: range.lo,
        });
    }
    let size = rng.gen_range(range.lo..=range.hi.min(compatible.len()));
    let mut picked = rand::seq::index::sample(rng, compatible.len(), size).into_vec();
    picked.sort_unstable();
    let mut toolset: Vec<String> = picked.into_iter().map(|i| compatible[i].to_string()).collect();
    toolset.shuffle(rng);
    Ok(toolset)
}
