//! Synthetic plant/growth datasets: the ground-truth growth rule, the full
//! replicated grid, label-binned SMOTE balancing and a seeded train/test split.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::plant::{Experiment, PlantVector, GRID_SIZE, NUM_PLANTS};

pub const MIN_GROWTH: f64 = 0.1;
pub const MAX_GROWTH: f64 = 1.9;

/// Growth for plant-2 counts 1..=5 inside the qualifying region.
const GROWTH_LEVELS: [f64; 5] = [1.18, 1.36, 1.54, 1.72, 1.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSample {
    pub point: [f64; NUM_PLANTS],
    pub growth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Grid,
    Balanced,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<GrowthSample>,
    pub experiment: Experiment,
    pub provenance: Provenance,
}

/// Ground-truth growth rate of a plant choice.
///
/// Plant 2 scales growth linearly over 1..=5 when plant 4 holds one or two
/// leaves (and, in experiment 1, plant 5 holds at least four). Everything
/// else, including six leaves on plant 2, gets the floor rate.
pub fn growth_truth(experiment: Experiment, p: &PlantVector) -> f64 {
    let p2 = p.plant(2);
    let p4 = p.plant(4);
    let p5 = p.plant(5);
    let gate = matches!(p4, 1 | 2)
        && match experiment {
            Experiment::Exp1 => p5 >= 4,
            Experiment::Exp2 => true,
        };
    if gate && (1..=5).contains(&p2) {
        GROWTH_LEVELS[(p2 - 1) as usize]
    } else {
        MIN_GROWTH
    }
}

/// Every grid point `replicates` times, labelled with [`growth_truth`].
pub fn generate_grid(experiment: Experiment, replicates: usize) -> Result<Dataset, DataError> {
    if replicates == 0 {
        return Err(DataError::NoReplicates);
    }
    let one: Vec<GrowthSample> = PlantVector::grid()
        .map(|p| GrowthSample {
            point: p.to_point(),
            growth: growth_truth(experiment, &p),
        })
        .collect();
    let mut samples = Vec::with_capacity(GRID_SIZE * replicates);
    for _ in 0..replicates {
        samples.extend_from_slice(&one);
    }
    Ok(Dataset {
        samples,
        experiment,
        provenance: Provenance::Grid,
    })
}

/// Equal-width label bin of `growth` over [0.1, 1.9].
pub fn label_bin(growth: f64, n_bins: usize) -> usize {
    let width = (MAX_GROWTH - MIN_GROWTH) / n_bins as f64;
    // Nudge so labels sitting exactly on an edge land in the upper bin.
    let raw = ((growth - MIN_GROWTH) / width + 1e-9).floor();
    (raw.max(0.0) as usize).min(n_bins - 1)
}

pub fn bin_counts(dataset: &Dataset, n_bins: usize) -> Vec<usize> {
    let mut counts = vec![0; n_bins];
    for s in &dataset.samples {
        counts[label_bin(s.growth, n_bins)] += 1;
    }
    counts
}

fn squared_distance(a: &[f64; NUM_PLANTS], b: &[f64; NUM_PLANTS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Members of one label bin, grouped by identical coordinates so that the
/// neighbour search stays quadratic in the number of distinct points.
struct BinIndex {
    members: Vec<usize>,
    unique_of_member: Vec<usize>,
    unique_points: Vec<[f64; NUM_PLANTS]>,
    unique_members: Vec<Vec<usize>>,
}

impl BinIndex {
    fn build(samples: &[GrowthSample], members: Vec<usize>) -> Self {
        let mut lookup: HashMap<[u64; NUM_PLANTS], usize> = HashMap::new();
        let mut unique_points = Vec::new();
        let mut unique_members: Vec<Vec<usize>> = Vec::new();
        let mut unique_of_member = Vec::with_capacity(members.len());
        for &m in &members {
            let key = samples[m].point.map(f64::to_bits);
            let u = *lookup.entry(key).or_insert_with(|| {
                unique_points.push(samples[m].point);
                unique_members.push(Vec::new());
                unique_points.len() - 1
            });
            unique_members[u].push(m);
            unique_of_member.push(u);
        }
        BinIndex {
            members,
            unique_of_member,
            unique_points,
            unique_members,
        }
    }

    /// The `k + 1` closest distinct points to distinct point `u` (itself
    /// included), ordered by distance then index.
    fn nearest_uniques(&self, u: usize, k: usize) -> Vec<usize> {
        let origin = &self.unique_points[u];
        let mut scored: Vec<(f64, usize)> = self
            .unique_points
            .iter()
            .enumerate()
            .map(|(v, p)| (squared_distance(origin, p), v))
            .collect();
        let keep = (k + 1).min(scored.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if keep < scored.len() {
            scored.select_nth_unstable_by(keep - 1, cmp);
            scored.truncate(keep);
        }
        scored.sort_by(cmp);
        scored.into_iter().map(|(_, v)| v).collect()
    }

    /// The `j`-th (0-based) nearest neighbour of sample `base`, excluding
    /// the sample itself.
    fn neighbour(&self, near: &[usize], base: usize, j: usize) -> usize {
        let mut remaining = j;
        for &v in near {
            for &m in &self.unique_members[v] {
                if m == base {
                    continue;
                }
                if remaining == 0 {
                    return m;
                }
                remaining -= 1;
            }
        }
        unreachable!("neighbour list shorter than k")
    }
}

/// Balance a grid dataset by label-binned SMOTE.
///
/// Labels are binned into `n_bins` equal-width intervals over [0.1, 1.9];
/// every nonempty bin is oversampled up to the size of the largest one by
/// interpolating between a random member and one of its `k` nearest
/// same-bin neighbours. The label is interpolated with the same weight as
/// the features. The bins are dropped from the result.
pub fn smote_balance(
    dataset: &Dataset,
    n_bins: usize,
    k: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    if dataset.samples.is_empty() {
        return Err(DataError::Empty);
    }
    if dataset.provenance != Provenance::Grid {
        return Err(DataError::InvalidParameter(format!(
            "SMOTE expects a grid dataset, got {:?}",
            dataset.provenance
        )));
    }
    if n_bins == 0 || k == 0 {
        return Err(DataError::InvalidParameter(
            "n_bins and k must be positive".into(),
        ));
    }

    let samples = &dataset.samples;
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, s) in samples.iter().enumerate() {
        bins[label_bin(s.growth, n_bins)].push(i);
    }
    let target = bins.iter().map(Vec::len).max().unwrap_or(0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = samples.clone();
    for (bin, members) in bins.into_iter().enumerate() {
        let count = members.len();
        if count == 0 || count == target {
            continue;
        }
        if count < 2 {
            return Err(DataError::BinTooSmall {
                bin,
                members: count,
            });
        }
        let k_eff = k.min(count - 1);
        let index = BinIndex::build(samples, members);
        let mut near_cache: HashMap<usize, Vec<usize>> = HashMap::new();
        for _ in 0..target - count {
            let slot = rng.random_range(0..count);
            let base = index.members[slot];
            let u = index.unique_of_member[slot];
            let near = near_cache
                .entry(u)
                .or_insert_with(|| index.nearest_uniques(u, k_eff));
            let j = rng.random_range(0..k_eff);
            let other = index.neighbour(near, base, j);
            let lambda: f64 = rng.random();
            let (a, b) = (&samples[base], &samples[other]);
            let mut point = a.point;
            for (x, y) in point.iter_mut().zip(b.point.iter()) {
                *x += lambda * (y - *x);
            }
            out.push(GrowthSample {
                point,
                growth: a.growth + lambda * (b.growth - a.growth),
            });
        }
    }

    Ok(Dataset {
        samples: out,
        experiment: dataset.experiment,
        provenance: Provenance::Balanced,
    })
}

/// Seeded disjoint partition into `(train, test)` with
/// `|test| = round(test_fraction * N)`.
pub fn train_test_split(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    let n = dataset.samples.len();
    if n == 0 {
        return Err(DataError::Empty);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidParameter(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(DataError::EmptySplit {
            fraction: test_fraction,
            n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize], provenance| Dataset {
        samples: idx.iter().map(|&i| dataset.samples[i]).collect(),
        experiment: dataset.experiment,
        provenance,
    };
    let (test_idx, train_idx) = order.split_at(n_test);
    Ok((
        pick(train_idx, Provenance::Train),
        pick(test_idx, Provenance::Test),
    ))
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    p1: f64,
    p2: f64,
    p3: f64,
    p4: f64,
    p5: f64,
    growth: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.samples {
            let [p1, p2, p3, p4, p5] = s.point;
            w.serialize(CsvRow {
                p1,
                p2,
                p3,
                p4,
                p5,
                growth: s.growth,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(
        reader: R,
        experiment: Experiment,
        provenance: Provenance,
    ) -> Result<Dataset, DataError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut samples = Vec::new();
        for row in r.deserialize::<CsvRow>() {
            let row = row?;
            if !(MIN_GROWTH - 1e-9..=MAX_GROWTH + 1e-9).contains(&row.growth) {
                return Err(DataError::InvalidParameter(format!(
                    "growth {} outside [0.1, 1.9]",
                    row.growth
                )));
            }
            samples.push(GrowthSample {
                point: [row.p1, row.p2, row.p3, row.p4, row.p5],
                growth: row.growth,
            });
        }
        if samples.is_empty() {
            return Err(DataError::Empty);
        }
        Ok(Dataset {
            samples,
            experiment,
            provenance,
        })
    }
}
