//! Consensus motions: DTW barycenter averaging (DBA) and batch-DTW
//! alignment of cluster members to a fixed reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{align, dtw, DtwOptions, LocalCost};
use crate::error::{Error, Result};
use crate::model::{Dataset, Direction, Series, Trajectory};

pub const DEFAULT_DBA_ITERATIONS: usize = 30;
/// Max-abs consensus change (radians) below which DBA stops early.
pub const DBA_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DbaOutcome {
    pub consensus: Series,
    pub iterations: usize,
    /// Sum of banded squared-Euclidean DTW costs from the members to the
    /// consensus, before the first update and after every update.
    pub objective_history: Vec<f64>,
}

impl DbaOutcome {
    pub fn final_objective(&self) -> f64 {
        *self
            .objective_history
            .last()
            .expect("history is never empty")
    }
}

/// Accumulates frames as offsets from the first one seen, so averaging
/// identical frames reproduces them bit for bit.
struct FrameMean {
    reference: Vec<f64>,
    offset: Vec<f64>,
    count: usize,
}

impl FrameMean {
    fn new(dof: usize) -> Self {
        FrameMean {
            reference: vec![0.0; dof],
            offset: vec![0.0; dof],
            count: 0,
        }
    }

    fn add(&mut self, frame: &[f64]) {
        if self.count == 0 {
            self.reference.copy_from_slice(frame);
        } else {
            for ((o, r), v) in self.offset.iter_mut().zip(&self.reference).zip(frame) {
                *o += v - r;
            }
        }
        self.count += 1;
    }

    fn write(&self, out: &mut [f64]) {
        let n = self.count as f64;
        for ((o, r), d) in out.iter_mut().zip(&self.reference).zip(&self.offset) {
            *o = r + d / n;
        }
    }
}

fn check_group(group: &[&Series]) -> Result<usize> {
    let first = group.first().ok_or(Error::Empty("group"))?;
    let dof = first.dof();
    if let Some(s) = group.iter().find(|s| s.dof() != dof) {
        return Err(Error::DimensionMismatch {
            expected: dof,
            actual: s.dof(),
        });
    }
    Ok(dof)
}

fn dba_alignments(
    group: &[&Series],
    consensus: &Series,
    warp_limit: usize,
) -> Result<Vec<crate::divergence::Alignment>> {
    let opts = DtwOptions {
        cost: LocalCost::SquaredEuclidean,
        band: Some(warp_limit),
    };
    group
        .par_iter()
        .map(|m| align(m, consensus, opts))
        .collect()
}

/// DBA objective of `consensus` for `group` under the given warp limit.
pub fn dba_objective(group: &[&Series], consensus: &Series, warp_limit: usize) -> Result<f64> {
    Ok(dba_alignments(group, consensus, warp_limit)?
        .iter()
        .map(|a| a.cost)
        .sum())
}

/// Iteratively refines `init` towards the barycenter of `group`.
///
/// Each iteration warps every member to the current consensus inside a
/// Sakoe-Chiba band of half-width `warp_limit` and replaces each consensus
/// frame by the mean of the member frames aligned to it. The consensus keeps
/// the length of `init`.
pub fn dba_average(
    group: &[&Series],
    init: &Series,
    warp_limit: usize,
    iters: usize,
) -> Result<DbaOutcome> {
    let dof = check_group(group)?;
    if init.dof() != dof {
        return Err(Error::DimensionMismatch {
            expected: dof,
            actual: init.dof(),
        });
    }
    if init.frames() < 2 {
        return Err(Error::invalid("DBA initialization needs at least 2 frames"));
    }

    let mut consensus = init.clone();
    let mut history = Vec::with_capacity(iters + 1);
    let mut iterations = 0;
    let mut alignments = dba_alignments(group, &consensus, warp_limit)?;
    history.push(alignments.iter().map(|a| a.cost).sum());

    while iterations < iters {
        let mut means: Vec<FrameMean> = (0..consensus.frames())
            .map(|_| FrameMean::new(dof))
            .collect();
        for (member, al) in group.iter().zip(&alignments) {
            for &(i, j) in al.path.pairs() {
                means[j].add(member.frame(i));
            }
        }
        let mut next = consensus.clone();
        for (j, mean) in means.iter().enumerate() {
            mean.write(next.frame_mut(j));
        }
        let change = next.max_abs_diff(&consensus);
        consensus = next;
        iterations += 1;
        alignments = dba_alignments(group, &consensus, warp_limit)?;
        history.push(alignments.iter().map(|a| a.cost).sum());
        if change < DBA_TOLERANCE {
            break;
        }
    }

    Ok(DbaOutcome {
        consensus,
        iterations,
        objective_history: history,
    })
}

/// Smallest band that still aligns the shortest and longest members.
pub fn default_warp_limit(group: &[&Series]) -> Result<usize> {
    let min = group
        .iter()
        .map(|s| s.frames())
        .min()
        .ok_or(Error::Empty("group"))?;
    let max = group.iter().map(|s| s.frames()).max().unwrap_or(min);
    Ok(max - min)
}

/// An averaged motion together with how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Average {
    pub trajectory: Trajectory,
    pub member_ids: Vec<String>,
    pub init_id: String,
    pub warp_limit: usize,
    pub iterations: usize,
    pub objective: f64,
}

/// Provenance record written next to an exported average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageProvenance {
    pub member_ids: Vec<String>,
    pub init_id: String,
    pub warp_limit: usize,
    pub iterations: usize,
    pub final_objective: f64,
}

impl Average {
    pub fn provenance(&self) -> AverageProvenance {
        AverageProvenance {
            member_ids: self.member_ids.clone(),
            init_id: self.init_id.clone(),
            warp_limit: self.warp_limit,
            iterations: self.iterations,
            final_objective: self.objective,
        }
    }
}

fn average_from(
    members: &[Trajectory],
    ids: Vec<String>,
    init_index: usize,
    iters: usize,
) -> Result<Average> {
    let group: Vec<&Series> = members.iter().map(|t| t.samples()).collect();
    let warp_limit = default_warp_limit(&group)?;
    let init = &members[init_index];
    let out = dba_average(&group, init.samples(), warp_limit, iters)?;
    Ok(Average {
        trajectory: Trajectory::new_unchecked(
            out.consensus.clone(),
            init.frame_rate(),
            init.model(),
        ),
        init_id: ids[init_index].clone(),
        member_ids: ids,
        warp_limit,
        iterations: out.iterations,
        objective: out.final_objective(),
    })
}

/// DBA over every segment of one (task, sub-motion), initialized from the
/// member of median length.
pub fn cross_subject_average(d: &Dataset, task: &str, submotion: u32) -> Result<Average> {
    cross_subject_average_with(d, task, submotion, DEFAULT_DBA_ITERATIONS)
}

pub fn cross_subject_average_with(
    d: &Dataset,
    task: &str,
    submotion: u32,
    iters: usize,
) -> Result<Average> {
    let matching: Vec<_> = d
        .segments
        .iter()
        .filter(|s| s.meta.task_code == task && s.meta.submotion_index == submotion)
        .collect();
    if matching.is_empty() {
        return Err(Error::invalid(format!(
            "no segments for task `{task}` sub-motion {submotion}"
        )));
    }
    let mut order: Vec<usize> = (0..matching.len()).collect();
    order.sort_by_key(|&i| (matching[i].trajectory.frames(), i));
    let median = order[(order.len() - 1) / 2];
    let members: Vec<Trajectory> = matching.iter().map(|s| s.trajectory.clone()).collect();
    let ids = matching.iter().map(|s| s.meta.id()).collect();
    average_from(&members, ids, median, iters)
}

/// Orients members (reversing `Return` ones), then runs DBA initialized
/// from the longest member.
pub fn cluster_average(members: &[&Trajectory], directions: &[Direction]) -> Result<Trajectory> {
    let ids = (0..members.len()).map(|i| i.to_string()).collect();
    Ok(cluster_average_with(members, directions, ids, DEFAULT_DBA_ITERATIONS)?.trajectory)
}

pub fn cluster_average_with(
    members: &[&Trajectory],
    directions: &[Direction],
    ids: Vec<String>,
    iters: usize,
) -> Result<Average> {
    if members.is_empty() {
        return Err(Error::Empty("cluster members"));
    }
    if directions.len() != members.len() || ids.len() != members.len() {
        return Err(Error::DimensionMismatch {
            expected: members.len(),
            actual: directions.len().min(ids.len()),
        });
    }
    let oriented = orient(members, directions);
    let mut longest = 0;
    for (i, t) in oriented.iter().enumerate() {
        if t.frames() > oriented[longest].frames() {
            longest = i;
        }
    }
    average_from(&oriented, ids, longest, iters)
}

/// Time-reverses the members flagged `Return`.
pub fn orient(members: &[&Trajectory], directions: &[Direction]) -> Vec<Trajectory> {
    members
        .iter()
        .zip(directions)
        .map(|(t, d)| match d {
            Direction::Forward => (*t).clone(),
            Direction::Return => t.reversed(),
        })
        .collect()
}

/// Warps each member onto `reference`: member frames sharing one reference
/// frame are averaged, a member frame spanning several reference frames is
/// repeated. Every output has the reference length.
pub fn batch_dtw_align(members: &[&Series], reference: &Series) -> Result<Vec<Series>> {
    members
        .par_iter()
        .map(|m| {
            let al = dtw(m, reference)?;
            let mut means: Vec<FrameMean> = (0..reference.frames())
                .map(|_| FrameMean::new(m.dof()))
                .collect();
            for &(i, j) in al.path.pairs() {
                means[j].add(m.frame(i));
            }
            let mut out = reference.clone();
            for (j, mean) in means.iter().enumerate() {
                mean.write(out.frame_mut(j));
            }
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::dtw_tests::random_series;
    use crate::model::tests::meta;
    use crate::model::{JointModel, Segment};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wrist(s: Series) -> Trajectory {
        Trajectory::new(s, 100.0, JointModel::WristOnly3).unwrap()
    }

    #[test]
    fn identical_group_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_series(&mut rng, 20, 3);
        let out = dba_average(&[&t, &t, &t], &t, 0, 30).unwrap();
        assert_eq!(out.consensus, t);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.final_objective(), 0.0);
    }

    #[test]
    fn constants_average_to_midpoint() {
        let a = Series::univariate(&[0.0; 6]).unwrap();
        let b = Series::univariate(&[2.0; 6]).unwrap();
        let out = dba_average(&[&a, &b], &a, 0, 30).unwrap();
        assert!(out.consensus.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let group: Vec<Series> = (0..5)
            .map(|_| {
                let n = rng.random_range(20..40);
                random_series(&mut rng, n, 1)
            })
            .collect();
        let refs: Vec<&Series> = group.iter().collect();
        let w = default_warp_limit(&refs).unwrap();
        let out = dba_average(&refs, &group[0], w, 30).unwrap();
        for pair in out.objective_history.windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-9),
                "{:?}",
                out.objective_history
            );
        }
        assert_eq!(out.consensus.frames(), group[0].frames());
    }

    #[test]
    fn warp_limits() {
        let mk = |n: usize| Series::univariate(&vec![0.0; n]).unwrap();
        let (a, b, c) = (mk(90), mk(100), mk(130));
        assert_eq!(default_warp_limit(&[&a, &a]).unwrap(), 0);
        assert_eq!(default_warp_limit(&[&a, &b, &c]).unwrap(), 40);
        assert_eq!(default_warp_limit(&[&b]).unwrap(), 0);
        assert!(default_warp_limit(&[]).is_err());
        assert!(dba_average(&[], &a, 0, 1).is_err());
    }

    #[test]
    fn cross_subject_singleton_and_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = wrist(random_series(&mut rng, 15, 3));
        let single = Dataset::new(
            JointModel::WristOnly3,
            vec![Segment {
                trajectory: t.clone(),
                meta: meta("mp", 1, "s01", 1),
            }],
        );
        assert_eq!(
            cross_subject_average(&single, "mp", 1).unwrap().trajectory,
            t
        );
        assert!(cross_subject_average(&single, "mp", 2).is_err());

        let copies = Dataset::new(
            JointModel::WristOnly3,
            (0..36)
                .map(|i| Segment {
                    trajectory: t.clone(),
                    meta: meta("mp", 1, &format!("s{:02}", i / 3), 1 + i % 3),
                })
                .collect(),
        );
        let avg = cross_subject_average(&copies, "mp", 1).unwrap();
        assert_eq!(avg.trajectory, t);
        assert_eq!(avg.member_ids.len(), 36);
    }

    #[test]
    fn cluster_average_orients_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = wrist(random_series(&mut rng, 12, 3));
        assert_eq!(cluster_average(&[&t], &[Direction::Forward]).unwrap(), t);
        let r = t.reversed();
        assert_eq!(
            cluster_average(&[&t, &r], &[Direction::Forward, Direction::Return]).unwrap(),
            t
        );
        let members: Vec<Trajectory> = (0..5)
            .map(|i| wrist(random_series(&mut rng, 10 + 3 * i, 3)))
            .collect();
        let refs: Vec<&Trajectory> = members.iter().collect();
        let avg = cluster_average(&refs, &[Direction::Forward; 5]).unwrap();
        assert_eq!(avg.frames(), 22);
        assert!(cluster_average(&[], &[]).is_err());
    }

    #[test]
    fn batch_alignment_pools_doubled_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reference = random_series(&mut rng, 10, 2);
        let rows: Vec<Vec<f64>> = reference
            .rows()
            .flat_map(|r| [r.to_vec(), r.to_vec()])
            .collect();
        let doubled = Series::from_rows(&rows).unwrap();
        let out = batch_dtw_align(&[&reference, &doubled], &reference).unwrap();
        assert_eq!(out[0], reference);
        assert_eq!(out[1], reference);

        let other = random_series(&mut rng, 17, 2);
        let out = batch_dtw_align(&[&other], &reference).unwrap();
        assert_eq!(out[0].frames(), reference.frames());
    }
}
