//! The four seed-selection criteria.
//!
//! Each criterion is a pure function over plain candidate data; the
//! caller extracts losses and tag frequencies from its corpus and
//! assembles the final report. All outputs are `BTreeSet`s so iteration
//! order is stable.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Candidate for the hard-to-follow criterion; both losses present.
#[derive(Debug, Clone, PartialEq)]
pub struct HardCandidate {
    pub id: String,
    pub base_loss: f64,
    pub ft_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HardSelection {
    pub selected: BTreeSet<String>,
    /// Candidates with `base_loss == 0`, for which the reduction ratio is
    /// undefined. Excluded and reported.
    pub excluded_zero_base: BTreeSet<String>,
}

/// Pick the `k` candidates with the smallest loss-reduction ratio
/// `(base - ft) / base`, ties broken by id.
pub fn select_hard_to_follow(candidates: &[HardCandidate], k: usize) -> HardSelection {
    let mut out = HardSelection::default();
    let mut scored: Vec<(f64, &str)> = Vec::with_capacity(candidates.len());
    for c in candidates {
        if c.base_loss == 0.0 {
            out.excluded_zero_base.insert(c.id.clone());
            continue;
        }
        let ratio = (c.base_loss - c.ft_loss) / c.base_loss;
        scored.push((ratio, &c.id));
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(b.1)));
    out.selected = scored.iter().take(k).map(|(_, id)| String::from(*id)).collect();
    out
}

/// Candidate for the long-tail criterion: the minimum normalized-tag
/// frequency across the record's tags. Untagged records are not
/// candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongTailCandidate {
    pub id: String,
    pub min_tag_freq: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LongTailSelection {
    /// Records with a tag rarer than the low threshold; always included,
    /// independent of the sampling seed.
    pub always: BTreeSet<String>,
    /// Seeded sample from the mid-frequency band.
    pub sampled: BTreeSet<String>,
}

impl LongTailSelection {
    pub fn selected(&self) -> BTreeSet<String> {
        self.always.union(&self.sampled).cloned().collect()
    }
}

/// Long-tail criterion: include every record whose rarest tag has
/// frequency below `low`; from the remaining records whose minimum tag
/// frequency lies in `[low, high]`, include a seeded uniform sample of
/// `round(rate * n)` records.
pub fn select_long_tail(
    candidates: &[LongTailCandidate],
    low: u64,
    high: u64,
    rate: f64,
    seed: u64,
) -> LongTailSelection {
    let mut out = LongTailSelection::default();
    let mut band: Vec<&str> = Vec::new();
    for c in candidates {
        if c.min_tag_freq < low {
            out.always.insert(c.id.clone());
        } else if c.min_tag_freq <= high {
            band.push(&c.id);
        }
    }
    band.sort_unstable();
    band.dedup();
    let take = ((band.len() as f64) * rate.clamp(0.0, 1.0) + 0.5) as usize;
    let take = take.min(band.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.sampled = band
        .choose_multiple(&mut rng, take)
        .map(|id| String::from(*id))
        .collect();
    out
}

/// Multi-skill criterion: records carrying at least `min_tags`
/// normalized tags (`min_tags = 5` encodes "more than four").
pub fn select_multi_skill(candidates: &[(String, usize)], min_tags: usize) -> BTreeSet<String> {
    candidates
        .iter()
        .filter(|(_, n)| *n >= min_tags)
        .map(|(id, _)| id.clone())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UndertrainedSelection {
    pub selected: BTreeSet<String>,
    pub mean: f64,
    pub std_dev: f64,
    pub threshold: f64,
}

/// Undertrained criterion: candidates whose base loss exceeds
/// `mean + z * std` (population standard deviation), truncated to the
/// `cap` highest-loss records. Fewer than two candidates is degenerate
/// and selects nothing.
pub fn select_undertrained(
    candidates: &[(String, f64)],
    z: f64,
    cap: usize,
) -> UndertrainedSelection {
    let n = candidates.len();
    let mut out = UndertrainedSelection::default();
    if n == 0 {
        return out;
    }
    let mean = candidates.iter().map(|(_, l)| l).sum::<f64>() / n as f64;
    let var = candidates
        .iter()
        .map(|(_, l)| (l - mean) * (l - mean))
        .sum::<f64>()
        / n as f64;
    let std_dev = libm::sqrt(var);
    out.mean = mean;
    out.std_dev = std_dev;
    out.threshold = mean + z * std_dev;
    if n < 2 {
        return out;
    }
    let mut over: Vec<(&str, f64)> = candidates
        .iter()
        .filter(|(_, l)| *l > out.threshold)
        .map(|(id, l)| (id.as_str(), *l))
        .collect();
    // Highest loss first; ties by id so truncation is deterministic.
    over.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));
    out.selected = over.iter().take(cap).map(|(id, _)| String::from(*id)).collect();
    out
}
