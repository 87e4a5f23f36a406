//! Repeated stratified 60/10/30 splits.
//!
//! Part sizes are `round(0.6n)`, `round(0.1n)` and the remainder. Each class
//! receives the floor or the ceiling of its ideal share in every part; the
//! ceilings are handed out so that part totals come out exact (a small
//! bipartite matching between classes and parts).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seqio::Dataset;

pub const DEFAULT_RUNS: usize = 5;
pub const MIN_CLASS_SIZE: usize = 4;

/// Part fractions in tenths: train, validation, test.
const TENTHS: [usize; 3] = [6, 1, 3];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitPlan {
    pub runs: Vec<Split>,
}

impl SplitPlan {
    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }
}

/// `[train, val, test]` totals for `n` items.
pub fn part_sizes(n: usize) -> [usize; 3] {
    let train = (6 * n + 5) / 10;
    let val = (n + 5) / 10;
    [train, val, n - train - val]
}

pub fn make_splits(d: &Dataset, runs: usize, base_seed: u64) -> Result<SplitPlan> {
    make_splits_from_labels(&d.label_indices(), &d.classes, runs, base_seed)
}

pub fn make_splits_from_labels(
    labels: &[usize],
    class_names: &[String],
    runs: usize,
    base_seed: u64,
) -> Result<SplitPlan> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if runs == 0 {
        return Err(Error::InvalidParameter("at least one run is required".into()));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); class_names.len()];
    for (i, &c) in labels.iter().enumerate() {
        members
            .get_mut(c)
            .ok_or(Error::IndexOutOfRange {
                index: c,
                len: class_names.len(),
            })?
            .push(i);
    }
    if let Some(c) = members.iter().position(|m| !m.is_empty() && m.len() < MIN_CLASS_SIZE) {
        return Err(Error::ClassTooSmall(class_names[c].clone()));
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let alloc = apportion(&sizes)?;

    let runs = (0..runs as u64)
        .map(|r| {
            let seed = base_seed.wrapping_add(r);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut parts: [Vec<usize>; 3] = Default::default();
            for (c, idx) in members.iter().enumerate() {
                let mut shuffled = idx.clone();
                shuffled.shuffle(&mut rng);
                let [a, b, _] = alloc[c];
                parts[0].extend_from_slice(&shuffled[..a]);
                parts[1].extend_from_slice(&shuffled[a..a + b]);
                parts[2].extend_from_slice(&shuffled[a + b..]);
            }
            for p in &mut parts {
                p.sort_unstable();
            }
            let [train, val, test] = parts;
            Split {
                seed,
                train,
                val,
                test,
            }
        })
        .collect();
    Ok(SplitPlan { runs })
}

/// Per-class `[train, val, test]` counts.
fn apportion(sizes: &[usize]) -> Result<Vec<[usize; 3]>> {
    let n: usize = sizes.iter().sum();
    let totals = part_sizes(n);
    let mut alloc: Vec<[usize; 3]> = sizes
        .iter()
        .map(|&s| [TENTHS[0] * s / 10, TENTHS[1] * s / 10, TENTHS[2] * s / 10])
        .collect();
    // Fractional remainders, in tenths; a class may round up only where positive.
    let rem: Vec<[usize; 3]> = sizes
        .iter()
        .map(|&s| [TENTHS[0] * s % 10, TENTHS[1] * s % 10, TENTHS[2] * s % 10])
        .collect();
    let mut class_need: Vec<usize> = sizes
        .iter()
        .zip(&alloc)
        .map(|(&s, a)| s - a.iter().sum::<usize>())
        .collect();
    let mut part_need = [0usize; 3];
    for p in 0..3 {
        part_need[p] = totals[p] - alloc.iter().map(|a| a[p]).sum::<usize>();
    }
    let mut bumped = vec![[false; 3]; sizes.len()];

    // Greedy pass: largest remainders first, ties by class then part order.
    let mut cands: Vec<(usize, usize, usize)> = rem
        .iter()
        .enumerate()
        .flat_map(|(c, r)| (0..3).filter(move |&p| r[p] > 0).map(move |p| (r[p], c, p)))
        .collect();
    cands.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for &(_, c, p) in &cands {
        if class_need[c] > 0 && part_need[p] > 0 {
            bumped[c][p] = true;
            class_need[c] -= 1;
            part_need[p] -= 1;
        }
    }

    // Repair pass: augmenting paths class -> part -> (class holding it) -> part ...
    while let Some(start) = class_need.iter().position(|&k| k > 0) {
        let path = augmenting_path(start, &rem, &bumped, &part_need).ok_or_else(|| {
            Error::InvalidParameter("class sizes admit no stratified 60/10/30 split".into())
        })?;
        for (c, p, add) in path {
            bumped[c][p] = add;
        }
        class_need[start] -= 1;
        for p in 0..3 {
            let base: usize = alloc.iter().map(|a| a[p]).sum();
            let used = bumped.iter().filter(|b| b[p]).count();
            part_need[p] = totals[p] - base - used;
        }
    }

    for (a, b) in alloc.iter_mut().zip(&bumped) {
        for p in 0..3 {
            a[p] += b[p] as usize;
        }
    }
    Ok(alloc)
}

/// BFS from class `start` through the residual graph. Returns the edge
/// flips `(class, part, new_state)` along the path.
fn augmenting_path(
    start: usize,
    rem: &[[usize; 3]],
    bumped: &[[bool; 3]],
    part_need: &[usize; 3],
) -> Option<Vec<(usize, usize, bool)>> {
    use std::collections::VecDeque;
    let nc = rem.len();
    // Predecessor of each part: the class that reached it.
    let mut part_from: [Option<usize>; 3] = [None; 3];
    // Predecessor of each class: the part it was reached through.
    let mut class_from: Vec<Option<usize>> = vec![None; nc];
    let mut seen_class = vec![false; nc];
    seen_class[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for p in 0..3 {
            if rem[c][p] == 0 || bumped[c][p] || part_from[p].is_some() {
                continue;
            }
            part_from[p] = Some(c);
            if part_need[p] > 0 {
                let mut flips = Vec::new();
                let mut part = p;
                loop {
                    let cls = part_from[part].expect("reached parts have a predecessor");
                    flips.push((cls, part, true));
                    match class_from[cls] {
                        Some(prev) => {
                            flips.push((cls, prev, false));
                            part = prev;
                        }
                        None => break,
                    }
                }
                return Some(flips);
            }
            for (c2, b) in bumped.iter().enumerate() {
                if b[p] && !seen_class[c2] {
                    seen_class[c2] = true;
                    class_from[c2] = Some(p);
                    queue.push_back(c2);
                }
            }
        }
    }
    None
}
