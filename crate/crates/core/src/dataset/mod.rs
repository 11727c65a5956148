//! MNIST pools and the training-set substitution protocol.
//!
//! Given a training set `S` of `k` samples and an even `m < k`:
//! 1. remove `m` samples uniformly at random, leaving `S1` (`k - m`);
//! 2. discard a uniformly random half of the removed samples and keep the
//!    other `m / 2` as sources;
//! 3. generate one follow-up per source, so `S2` holds `m` samples
//!    (sources first, follow-ups after, index-aligned);
//! 4. `S' = S1 ∪ S2`, again `k` samples.
//!
//! For a relation that rejects some labels the removal is constrained so the
//! `m / 2` kept sources are all applicable: sources are drawn from the
//! applicable samples of `S` and the discarded half from everything else.

pub mod idx;

use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mr::{LabeledSample, MetamorphicGroup, MetamorphicRelation, MrKind};
use crate::seed;

pub use idx::{load_idx_images, load_idx_labels};

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolOrigin {
    TrainPool,
    TestPool,
}

#[derive(Clone, Debug)]
pub struct Pool {
    pub samples: Vec<LabeledSample>,
    pub origin: PoolOrigin,
}

impl Pool {
    pub fn new(samples: Vec<LabeledSample>, origin: PoolOrigin) -> Self {
        Self { samples, origin }
    }

    /// Pairs an image file with a label file.
    pub fn from_idx(images: &Path, labels: &Path, origin: PoolOrigin) -> Result<Self> {
        let imgs = load_idx_images(images)?;
        let labs = load_idx_labels(labels)?;
        if imgs.len() != labs.len() {
            return Err(Error::Format {
                path: labels.to_path_buf(),
                offset: 4,
                message: format!(
                    "{} labels for {} images in {}",
                    labs.len(),
                    imgs.len(),
                    images.display()
                ),
            });
        }
        let samples = imgs
            .into_iter()
            .zip(labs)
            .map(|(image, label)| LabeledSample { image, label })
            .collect();
        Ok(Self { samples, origin })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn gather(&self, indices: &[usize]) -> Vec<LabeledSample> {
        indices.iter().map(|&i| self.samples[i].clone()).collect()
    }
}

/// Finds `name` (or `name.gz`) under `dir`; the error names the missing file.
pub fn locate(dir: &Path, name: &str) -> Result<PathBuf> {
    let dotted = name.replacen("-idx", ".idx", 1);
    let candidates = [
        dir.join(name),
        dir.join(format!("{name}.gz")),
        dir.join(&dotted),
        dir.join(format!("{dotted}.gz")),
    ];
    candidates
        .iter()
        .find(|p| p.is_file())
        .cloned()
        .ok_or_else(|| {
            Error::io(
                format!("missing MNIST file {}", dir.join(name).display()),
                std::io::Error::from(std::io::ErrorKind::NotFound),
            )
        })
}

/// The 60,000-image training pool and the 10,000-image test pool.
pub struct Mnist {
    pub train: Pool,
    pub test: Pool,
}

impl Mnist {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let train = Pool::from_idx(
            &locate(dir, TRAIN_IMAGES)?,
            &locate(dir, TRAIN_LABELS)?,
            PoolOrigin::TrainPool,
        )?;
        let test = Pool::from_idx(
            &locate(dir, TEST_IMAGES)?,
            &locate(dir, TEST_LABELS)?,
            PoolOrigin::TestPool,
        )?;
        Ok(Self { train, test })
    }
}

fn draw_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > len {
        return Err(Error::Size {
            requested: n,
            available: len,
        });
    }
    Ok(index::sample(&mut seed::rng_from(seed), len, n).into_vec())
}

fn require_origin(pool: &Pool, origin: PoolOrigin) -> Result<()> {
    if pool.origin == origin {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "expected a {origin:?} pool, got {:?}",
            pool.origin
        )))
    }
}

/// Pool positions of a uniform sample of `k` training samples, without replacement.
pub fn training_indices(pool: &Pool, k: usize, seed: u64) -> Result<Vec<usize>> {
    require_origin(pool, PoolOrigin::TrainPool)?;
    draw_indices(pool.len(), k, seed)
}

pub fn sample_training_set(pool: &Pool, k: usize, seed: u64) -> Result<Vec<LabeledSample>> {
    Ok(pool.gather(&training_indices(pool, k, seed)?))
}

pub fn test_indices(pool: &Pool, n: usize, seed: u64) -> Result<Vec<usize>> {
    require_origin(pool, PoolOrigin::TestPool)?;
    draw_indices(pool.len(), n, seed)
}

pub fn select_test_set(pool: &Pool, n: usize, seed: u64) -> Result<Vec<LabeledSample>> {
    Ok(pool.gather(&test_indices(pool, n, seed)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub k: usize,
    pub m: usize,
    pub mr_name: MrKind,
    /// `m / (2k)`: share of follow-ups in the augmented set.
    pub ratio: f64,
    pub seed: u64,
}

impl AugmentationPlan {
    pub fn new(k: usize, m: usize, mr_name: MrKind, seed: u64) -> Result<Self> {
        if !m.is_multiple_of(2) {
            return Err(Error::Config(format!("m = {m} must be even")));
        }
        if m < 2 || m + 2 > k {
            return Err(Error::Config(format!(
                "m = {m} must lie in [2, k - 2] for k = {k}"
            )));
        }
        Ok(Self {
            k,
            m,
            mr_name,
            ratio: m as f64 / (2.0 * k as f64),
            seed,
        })
    }

    /// Plan for a target follow-up share `m / (2k)`; `m` is rounded to the nearest even count.
    pub fn from_ratio(k: usize, ratio: f64, mr_name: MrKind, seed: u64) -> Result<Self> {
        Self::new(k, removal_count(k, ratio)?, mr_name, seed)
    }

    pub fn sources(&self) -> usize {
        self.m / 2
    }
}

/// `m = 2 * round(k * ratio)`, rejected unless `2 <= m <= k - 2`.
pub fn removal_count(k: usize, ratio: f64) -> Result<usize> {
    if !ratio.is_finite() || ratio < 0.0 {
        return Err(Error::Config(format!(
            "ratio {ratio} must be a non-negative number"
        )));
    }
    let m = 2 * (k as f64 * ratio).round() as usize;
    if m < 2 {
        return Err(Error::Config(format!(
            "ratio {ratio} with k = {k} yields m = {m}; at least one follow-up pair is required"
        )));
    }
    if m + 2 > k {
        return Err(Error::Config(format!(
            "ratio {ratio} with k = {k} yields m = {m}, which must be at most k - 2"
        )));
    }
    Ok(m)
}

/// `S`, `S1`, `S2` and `S'` of one substitution, with positions into `S`.
#[derive(Clone, Debug)]
pub struct SplitResult {
    pub plan: AugmentationPlan,
    pub s: Vec<LabeledSample>,
    pub s1: Vec<LabeledSample>,
    /// Sources (first `m / 2`) followed by their follow-ups.
    pub s2: Vec<LabeledSample>,
    pub s_prime: Vec<LabeledSample>,
    pub groups: Vec<MetamorphicGroup>,
    /// Positions in `S` kept in `S1`, ascending.
    pub s1_positions: Vec<usize>,
    /// Positions in `S` of the retained sources, ascending and aligned with `groups`.
    pub source_positions: Vec<usize>,
    /// Positions in `S` of the removed-and-discarded half, ascending.
    pub discarded_positions: Vec<usize>,
}

pub fn build_augmented_set(
    s: &[LabeledSample],
    plan: &AugmentationPlan,
    mr: &MetamorphicRelation,
) -> Result<SplitResult> {
    if s.len() != plan.k {
        return Err(Error::Size {
            requested: plan.k,
            available: s.len(),
        });
    }
    if mr.kind != plan.mr_name {
        return Err(Error::Config(format!(
            "plan names relation {} but {} was supplied",
            plan.mr_name, mr.kind
        )));
    }
    let (k, half) = (plan.k, plan.sources());

    let (mut sources, mut discarded) = if mr.is_restrictive() {
        let applicable: Vec<usize> = (0..k).filter(|&i| mr.is_applicable(s[i].label)).collect();
        if applicable.len() < half {
            return Err(Error::ApplicabilityShortage {
                relation: mr.name().to_string(),
                needed: half,
                available: applicable.len(),
            });
        }
        let mut rng = seed::stream(plan.seed, "retention");
        let sources: Vec<usize> = index::sample(&mut rng, applicable.len(), half)
            .into_iter()
            .map(|i| applicable[i])
            .collect();
        let mut taken = vec![false; k];
        for &i in &sources {
            taken[i] = true;
        }
        let rest: Vec<usize> = (0..k).filter(|&i| !taken[i]).collect();
        let mut rng = seed::stream(plan.seed, "deletion");
        let discarded: Vec<usize> = index::sample(&mut rng, rest.len(), half)
            .into_iter()
            .map(|i| rest[i])
            .collect();
        (sources, discarded)
    } else {
        let removed = index::sample(&mut seed::stream(plan.seed, "removal"), k, plan.m).into_vec();
        let mut deleted = vec![false; plan.m];
        for i in index::sample(&mut seed::stream(plan.seed, "deletion"), plan.m, half) {
            deleted[i] = true;
        }
        let (d, keep): (Vec<_>, Vec<_>) = removed.iter().zip(&deleted).partition(|(_, &del)| del);
        (
            keep.into_iter().map(|(&i, _)| i).collect(),
            d.into_iter().map(|(&i, _)| i).collect(),
        )
    };
    sources.sort_unstable();
    discarded.sort_unstable();

    let mut removed = vec![false; k];
    for &i in sources.iter().chain(&discarded) {
        removed[i] = true;
    }
    let s1_positions: Vec<usize> = (0..k).filter(|&i| !removed[i]).collect();

    let groups = sources
        .iter()
        .enumerate()
        .map(|(n, &pos)| {
            mr.generate_followup(&s[pos], seed::derive(plan.seed, "transform", n as u64))
        })
        .collect::<Result<Vec<_>>>()?;

    let s1: Vec<LabeledSample> = s1_positions.iter().map(|&i| s[i].clone()).collect();
    let mut s2: Vec<LabeledSample> = sources.iter().map(|&i| s[i].clone()).collect();
    s2.extend(groups.iter().map(|g| g.followup.clone()));
    let s_prime: Vec<LabeledSample> = s1.iter().chain(&s2).cloned().collect();

    Ok(SplitResult {
        plan: plan.clone(),
        s: s.to_vec(),
        s1,
        s2,
        s_prime,
        groups,
        s1_positions,
        source_positions: sources,
        discarded_positions: discarded,
    })
}
