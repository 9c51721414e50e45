use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::SegmentMeta;

/// Number of same-subject, same-motion repetition pairs, i.e. the maximum
/// attainable score.
pub fn repetition_pairs(metas: &[SegmentMeta]) -> Result<usize> {
    Ok(repetition_groups(metas)?
        .values()
        .map(|g| g.len() * (g.len() - 1) / 2)
        .sum())
}

fn repetition_groups(metas: &[SegmentMeta]) -> Result<BTreeMap<(&str, &str, u32), Vec<usize>>> {
    let mut groups: BTreeMap<(&str, &str, u32), Vec<usize>> = BTreeMap::new();
    for (i, m) in metas.iter().enumerate() {
        groups
            .entry((&m.subject_id, &m.task_code, m.submotion_index))
            .or_default()
            .push(i);
    }
    if let Some(((subject, task, sub), _)) = groups.iter().find(|(_, g)| g.len() < 2) {
        return Err(Error::invalid(format!(
            "subject {subject} has a single repetition of {task}-{sub}"
        )));
    }
    Ok(groups)
}

/// Fraction of repetition pairs that share a cluster.
pub fn quality_score(assignment: &[usize], metas: &[SegmentMeta]) -> Result<f64> {
    if assignment.len() != metas.len() {
        return Err(Error::DimensionMismatch {
            expected: metas.len(),
            actual: assignment.len(),
        });
    }
    let groups = repetition_groups(metas)?;
    let (mut hits, mut total) = (0usize, 0usize);
    for members in groups.values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                total += 1;
                if assignment[i] == assignment[j] {
                    hits += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::invalid("no repetitions to score"));
    }
    Ok(hits as f64 / total as f64)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    let choose2 = |x: usize| (x * x.saturating_sub(1) / 2) as f64;
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // Both partitions are the same trivial one (single cluster or all
        // singletons).
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
