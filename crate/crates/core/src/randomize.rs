//! Treatment-assignment and sampling generators for the four designs, plus an
//! exhaustive enumeration oracle over assignments for exact finite-sample
//! checks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandomizeError {
    #[error("invalid assignment plan: {0}")]
    BadPlan(String),
    #[error("enumeration would yield {count} assignments, above the guard of {guard}")]
    TooLarge { count: u128, guard: u128 },
    #[error("enumeration is not defined for survey plans")]
    UnsupportedDesign,
}

/// Per-stratum sizes for a stratified plan, in unit order: the flattened
/// assignment vector lists stratum 0 first, then stratum 1, and so on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumPlan {
    pub units: usize,
    pub treated: usize,
}

/// Which design is being randomized and its size parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssignmentPlan {
    Cre { units: usize, treated: usize },
    Stratified { strata: Vec<StratumPlan> },
    Survey { population: usize, sample: usize, treated: usize },
    Cluster { clusters: usize, treated: usize },
}

impl AssignmentPlan {
    pub fn validate(&self) -> Result<(), RandomizeError> {
        match self {
            AssignmentPlan::Cre { units, treated } => {
                if *treated < 1 || *treated + 1 > *units {
                    return Err(RandomizeError::BadPlan(format!(
                        "CRE needs 1 <= n1 <= n-1, got n = {units}, n1 = {treated}"
                    )));
                }
            }
            AssignmentPlan::Stratified { strata } => {
                if strata.is_empty() {
                    return Err(RandomizeError::BadPlan("no strata".into()));
                }
                for (h, s) in strata.iter().enumerate() {
                    if s.treated < 2 || s.treated + 2 > s.units {
                        return Err(RandomizeError::BadPlan(format!(
                            "stratum {h} needs 2 <= n_h1 <= n_h-2, got n_h = {}, n_h1 = {}",
                            s.units, s.treated
                        )));
                    }
                }
            }
            AssignmentPlan::Survey { population, sample, treated } => {
                if *sample > *population {
                    return Err(RandomizeError::BadPlan(format!(
                        "sample {sample} exceeds population {population}"
                    )));
                }
                if *treated < 1 || *treated + 1 > *sample {
                    return Err(RandomizeError::BadPlan(format!(
                        "survey needs 1 <= n1 <= n-1, got n = {sample}, n1 = {treated}"
                    )));
                }
            }
            AssignmentPlan::Cluster { clusters, treated } => {
                if *treated < 1 || *treated + 1 > *clusters {
                    return Err(RandomizeError::BadPlan(format!(
                        "cluster design needs 1 <= m1 <= m-1, got m = {clusters}, m1 = {treated}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A realized randomization: treatment indicators, and for survey designs the
/// sampling indicators alongside treatment over the sampled units in
/// population order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Assignment {
    /// Per-unit treatment for CRE and stratified designs.
    Units(Vec<bool>),
    /// `sampled[i]` over the population; `z` has one entry per sampled unit.
    /// Treatment is undefined off-sample.
    Survey { sampled: Vec<bool>, z: Vec<bool> },
    /// Per-cluster treatment.
    Clusters(Vec<bool>),
}

/// A named, platform-stable random stream. Identical `(seed, stream_id)`
/// pairs reproduce identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// SplitMix64 finalizer, used to derive per-replication stream ids.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Chooses `k` of `n` indices uniformly without replacement and returns the
/// membership mask.
fn subset_mask<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<bool> {
    let chosen = rand::seq::index::sample(rng, n, k);
    let mut mask = vec![false; n];
    for idx in chosen.iter() {
        mask[idx] = true;
    }
    mask
}

/// Draws a completely randomized assignment: exactly `n1` treated units,
/// uniform over all `C(n, n1)` subsets.
pub fn draw_cre<R: Rng>(plan: &AssignmentPlan, rng: &mut R) -> Result<Vec<bool>, RandomizeError> {
    plan.validate()?;
    match plan {
        AssignmentPlan::Cre { units, treated } => Ok(subset_mask(*units, *treated, rng)),
        _ => Err(RandomizeError::BadPlan("draw_cre needs a CRE plan".into())),
    }
}

/// Draws an independent CRE in every stratum; the result is flattened in the
/// plan's stratum order.
pub fn draw_stratified<R: Rng>(
    plan: &AssignmentPlan,
    rng: &mut R,
) -> Result<Vec<bool>, RandomizeError> {
    plan.validate()?;
    match plan {
        AssignmentPlan::Stratified { strata } => {
            let mut z = Vec::with_capacity(strata.iter().map(|s| s.units).sum());
            for s in strata {
                z.extend(subset_mask(s.units, s.treated, rng));
            }
            Ok(z)
        }
        _ => Err(RandomizeError::BadPlan(
            "draw_stratified needs a stratified plan".into(),
        )),
    }
}

/// Draws a simple random sample without replacement from the population, then
/// a CRE over the sampled units. Treatment entries follow population order of
/// the sampled units.
pub fn draw_survey<R: Rng>(
    plan: &AssignmentPlan,
    rng: &mut R,
) -> Result<(Vec<bool>, Vec<bool>), RandomizeError> {
    plan.validate()?;
    match plan {
        AssignmentPlan::Survey { population, sample, treated } => {
            let sampled = subset_mask(*population, *sample, rng);
            let z = subset_mask(*sample, *treated, rng);
            Ok((sampled, z))
        }
        _ => Err(RandomizeError::BadPlan("draw_survey needs a survey plan".into())),
    }
}

/// Draws a CRE over clusters.
pub fn draw_cluster<R: Rng>(
    plan: &AssignmentPlan,
    rng: &mut R,
) -> Result<Vec<bool>, RandomizeError> {
    plan.validate()?;
    match plan {
        AssignmentPlan::Cluster { clusters, treated } => Ok(subset_mask(*clusters, *treated, rng)),
        _ => Err(RandomizeError::BadPlan("draw_cluster needs a cluster plan".into())),
    }
}

/// Draws one assignment of whatever kind the plan calls for.
pub fn draw<R: Rng>(plan: &AssignmentPlan, rng: &mut R) -> Result<Assignment, RandomizeError> {
    match plan {
        AssignmentPlan::Cre { .. } => draw_cre(plan, rng).map(Assignment::Units),
        AssignmentPlan::Stratified { .. } => draw_stratified(plan, rng).map(Assignment::Units),
        AssignmentPlan::Survey { .. } => {
            draw_survey(plan, rng).map(|(sampled, z)| Assignment::Survey { sampled, z })
        }
        AssignmentPlan::Cluster { .. } => draw_cluster(plan, rng).map(Assignment::Clusters),
    }
}

const ENUMERATION_GUARD: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of distinct assignments the plan admits.
pub fn assignment_count(plan: &AssignmentPlan) -> Result<u128, RandomizeError> {
    plan.validate()?;
    Ok(match plan {
        AssignmentPlan::Cre { units, treated } => binomial(*units, *treated),
        AssignmentPlan::Stratified { strata } => strata
            .iter()
            .map(|s| binomial(s.units, s.treated))
            .product(),
        AssignmentPlan::Survey { population, sample, treated } => {
            binomial(*population, *sample) * binomial(*sample, *treated)
        }
        AssignmentPlan::Cluster { clusters, treated } => binomial(*clusters, *treated),
    })
}

/// Yields every assignment of the plan exactly once. Supported for CRE,
/// stratified, and cluster plans; guarded at 10^6 assignments.
pub fn enumerate_assignments(
    plan: &AssignmentPlan,
) -> Result<impl Iterator<Item = Assignment>, RandomizeError> {
    plan.validate()?;
    let count = assignment_count(plan)?;
    if count > ENUMERATION_GUARD {
        return Err(RandomizeError::TooLarge {
            count,
            guard: ENUMERATION_GUARD,
        });
    }
    let groups: Vec<(usize, usize)> = match plan {
        AssignmentPlan::Cre { units, treated } => vec![(*units, *treated)],
        AssignmentPlan::Stratified { strata } => {
            strata.iter().map(|s| (s.units, s.treated)).collect()
        }
        AssignmentPlan::Cluster { clusters, treated } => vec![(*clusters, *treated)],
        AssignmentPlan::Survey { .. } => return Err(RandomizeError::UnsupportedDesign),
    };
    let cluster_level = matches!(plan, AssignmentPlan::Cluster { .. });
    Ok(ProductCombinations::new(groups).map(move |z| {
        if cluster_level {
            Assignment::Clusters(z)
        } else {
            Assignment::Units(z)
        }
    }))
}

/// Iterates the cartesian product of per-group `C(n, k)` combinations,
/// emitting flattened membership masks in lexicographic order.
struct ProductCombinations {
    groups: Vec<(usize, usize)>,
    /// Current chosen indices per group; `None` once exhausted.
    state: Option<Vec<Vec<usize>>>,
}

impl ProductCombinations {
    fn new(groups: Vec<(usize, usize)>) -> Self {
        let state = Some(groups.iter().map(|(_, k)| (0..*k).collect()).collect());
        Self { groups, state }
    }

    /// Advances `combo` to the next k-subset of `{0..n}`; false at the end.
    fn bump(combo: &mut [usize], n: usize) -> bool {
        let k = combo.len();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if combo[i] < n - k + i {
                combo[i] += 1;
                for j in i + 1..k {
                    combo[j] = combo[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for ProductCombinations {
    type Item = Vec<bool>;

    fn next(&mut self) -> Option<Self::Item> {
        let state = self.state.as_mut()?;
        let mut mask = Vec::with_capacity(self.groups.iter().map(|(n, _)| n).sum());
        for (g, (n, _)) in self.groups.iter().enumerate() {
            let mut group_mask = vec![false; *n];
            for &idx in &state[g] {
                group_mask[idx] = true;
            }
            mask.extend(group_mask);
        }
        // Odometer step: bump the last group, carrying leftward on wrap.
        let mut g = self.groups.len();
        loop {
            if g == 0 {
                self.state = None;
                break;
            }
            g -= 1;
            if Self::bump(&mut state[g], self.groups[g].0) {
                for reset in g + 1..self.groups.len() {
                    let k = self.groups[reset].1;
                    state[reset] = (0..k).collect();
                }
                break;
            }
        }
        Some(mask)
    }
}
