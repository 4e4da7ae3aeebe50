use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{class_distribution, ClassDistribution, Dataset};
use crate::error::{Error, Result};
use crate::orbit::SatId;

/// Class set held by each orbit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSplit {
    pub orbits: Vec<Vec<usize>>,
}

impl ClassSplit {
    /// Every orbit holds every class.
    pub fn iid(orbit_count: usize, class_count: usize) -> Self {
        Self {
            orbits: vec![(0..class_count).collect(); orbit_count],
        }
    }

    /// Parses `orbits:classes` groups separated by `;`. Both sides take comma lists and
    /// inclusive `a-b` ranges, e.g. `0,1:0-3; 2-4:4-9`.
    pub fn parse(text: &str, orbit_count: usize) -> Result<Self> {
        let mut orbits: Vec<Option<Vec<usize>>> = vec![None; orbit_count];
        for group in text.split(';').map(str::trim).filter(|g| !g.is_empty()) {
            let (lhs, rhs) = group
                .split_once(':')
                .ok_or_else(|| Error::arg(format!("split group `{group}` lacks `:`")))?;
            let classes = parse_index_list(rhs)?;
            for o in parse_index_list(lhs)? {
                let slot = orbits
                    .get_mut(o)
                    .ok_or_else(|| Error::arg(format!("orbit {o} out of range in split")))?;
                if slot.is_some() {
                    return Err(Error::arg(format!("orbit {o} assigned twice in split")));
                }
                *slot = Some(classes.clone());
            }
        }
        let orbits = orbits
            .into_iter()
            .enumerate()
            .map(|(o, c)| c.ok_or_else(|| Error::arg(format!("orbit {o} has no class set"))))
            .collect::<Result<_>>()?;
        Ok(Self { orbits })
    }

    pub fn validate(&self, orbit_count: usize, class_count: usize) -> Result<()> {
        if self.orbits.len() != orbit_count {
            return Err(Error::arg(format!(
                "split covers {} orbits, constellation has {orbit_count}",
                self.orbits.len()
            )));
        }
        for (o, classes) in self.orbits.iter().enumerate() {
            if classes.is_empty() {
                return Err(Error::arg(format!("orbit {o} has an empty class set")));
            }
            if let Some(c) = classes.iter().find(|&&c| c >= class_count) {
                return Err(Error::arg(format!("orbit {o} lists class {c}, only {class_count} exist")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ClassSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let groups: Vec<String> = self
            .orbits
            .iter()
            .enumerate()
            .map(|(o, cs)| {
                let cs: Vec<String> = cs.iter().map(usize::to_string).collect();
                format!("{o}:{}", cs.join(","))
            })
            .collect();
        f.write_str(&groups.join("; "))
    }
}

fn parse_index_list(text: &str) -> Result<Vec<usize>> {
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::arg(format!("`{}` is not an index", s.trim())))
    };
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(Error::arg(format!("descending range `{item}`")));
                }
                out.extend(a..=b);
            }
            None => out.push(num(item)?),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Sample indices owned by each satellite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub shards: BTreeMap<SatId, Vec<usize>>,
}

impl PartitionPlan {
    pub fn shard(&self, sat: SatId) -> Result<&[usize]> {
        self.shards
            .get(&sat)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownSatellite {
                orbit: sat.orbit,
                slot: sat.slot,
            })
    }

    /// Indices of every satellite in `orbit`, slot order.
    pub fn orbit_indices(&self, orbit: usize) -> Vec<usize> {
        self.shards
            .iter()
            .filter(|(s, _)| s.orbit == orbit)
            .flat_map(|(_, v)| v.iter().copied())
            .collect()
    }

    pub fn orbit_distribution(&self, ds: &Dataset, orbit: usize) -> Result<ClassDistribution> {
        let labels: Vec<usize> = self.orbit_indices(orbit).iter().map(|&i| ds.labels[i]).collect();
        class_distribution(&labels, ds.class_count)
    }
}

/// Splits `ds` across an `orbit_count × sats_per_orbit` constellation.
///
/// Samples of each class are shuffled and dealt evenly to the orbits whose class set contains
/// it. Each orbit's pool is shuffled again and cut into equal shards, remainders going to the
/// lowest slots. Samples of classes no orbit lists are left out.
pub fn non_iid_partition(
    ds: &Dataset,
    orbit_count: usize,
    sats_per_orbit: usize,
    split: &ClassSplit,
    seed: u64,
) -> Result<PartitionPlan> {
    if sats_per_orbit == 0 {
        return Err(Error::arg("sats_per_orbit must be positive"));
    }
    split.validate(orbit_count, ds.class_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); orbit_count];
    for (c, mut members) in by_class.into_iter().enumerate() {
        let owners: Vec<usize> = (0..orbit_count).filter(|&o| split.orbits[o].contains(&c)).collect();
        if owners.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        for (o, chunk) in owners.iter().zip(even_chunks(&members, owners.len())) {
            pools[*o].extend_from_slice(chunk);
        }
    }

    let mut shards = BTreeMap::new();
    for (o, mut pool) in pools.into_iter().enumerate() {
        pool.shuffle(&mut rng);
        for (s, chunk) in even_chunks(&pool, sats_per_orbit).enumerate() {
            shards.insert(SatId { orbit: o, slot: s }, chunk.to_vec());
        }
    }
    Ok(PartitionPlan { shards })
}

/// `parts` contiguous chunks whose sizes differ by at most one, larger ones first.
fn even_chunks<T>(items: &[T], parts: usize) -> impl Iterator<Item = &[T]> {
    let base = items.len() / parts;
    let extra = items.len() % parts;
    let mut start = 0;
    (0..parts).map(move |p| {
        let len = base + usize::from(p < extra);
        let chunk = &items[start..start + len];
        start += len;
        chunk
    })
}
