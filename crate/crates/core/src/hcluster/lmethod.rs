//! Knee detection on the merge-distance curve with the L method.
//!
//! The curve has one point per cluster count `c`: the height of the merge
//! that reduces `c` clusters to `c - 1`. Points at and left of the largest
//! height are dropped. For every split of the remaining window into a left
//! part (`x <= c`) and a right part, both parts get a least-squares line and
//! the split error is the point-weighted mean of the two RMSEs. The window
//! is then shrunk to `2 * knee` (never below the minimum window) until the
//! knee stops moving left.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ward::Dendrogram;
use crate::error::{Error, Result};
use crate::io::{write_csv, write_json};

pub const MIN_WINDOW: usize = 20;
pub const MIN_USABLE_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KneePass {
    /// Inclusive cluster-count range evaluated in this pass.
    pub window: (usize, usize),
    pub points: usize,
    pub knee: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KneeResult {
    pub num_clusters: usize,
    /// `(c, RMSE_tot)` for every admissible split of the final window.
    pub rmse_curve: Vec<(usize, f64)>,
    /// Inclusive cluster-count range of the final pass.
    pub evaluation_window: (usize, usize),
    /// Number of curve points inside `evaluation_window`.
    pub window_points: usize,
    /// Largest-height point that bounded the curve from the left.
    pub excluded_through: usize,
    pub passes: Vec<KneePass>,
}

impl KneeResult {
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        write_csv(
            &dir.join(format!("{stem}.csv")),
            &["c", "rmse_tot"],
            self.rmse_curve
                .iter()
                .map(|(c, r)| vec![c.to_string(), r.to_string()]),
        )?;
        write_json(&dir.join(format!("{stem}.json")), self)
    }
}

/// `(c, height of the merge from c to c - 1 clusters)` for `c = 2..=k`.
pub fn merge_curve(d: &Dendrogram) -> Vec<(usize, f64)> {
    let k = d.leaf_count();
    let mut pts: Vec<(usize, f64)> = d
        .merges
        .iter()
        .enumerate()
        .map(|(t, m)| (k - t, m.height))
        .collect();
    pts.reverse();
    pts
}

pub fn l_method(d: &Dendrogram) -> Result<KneeResult> {
    l_method_curve(&merge_curve(d), MIN_WINDOW)
}

/// Root-mean-square residual of the least-squares line through `pts`.
fn line_rmse(pts: &[(usize, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in pts {
        let dx = x as f64 - mx;
        sxx += dx * dx;
        sxy += dx * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let sse: f64 = pts
        .iter()
        .map(|&(x, y)| {
            let r = y - (my + slope * (x as f64 - mx));
            r * r
        })
        .sum();
    (sse / n).sqrt()
}

/// One L-method evaluation over a window; returns the knee and the curve of
/// split errors.
fn evaluate(window: &[(usize, f64)]) -> (usize, Vec<(usize, f64)>) {
    let b = window.len();
    let mut curve = Vec::with_capacity(b.saturating_sub(3));
    let mut best = (f64::INFINITY, window[1].0);
    for split in 2..=b - 2 {
        let (left, right) = window.split_at(split);
        let err = (left.len() as f64 * line_rmse(left) + right.len() as f64 * line_rmse(right))
            / b as f64;
        let c = left[left.len() - 1].0;
        curve.push((c, err));
        if err < best.0 {
            best = (err, c);
        }
    }
    (best.1, curve)
}

/// L method over an arbitrary curve sorted by ascending cluster count.
pub fn l_method_curve(points: &[(usize, f64)], min_window: usize) -> Result<KneeResult> {
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::invalid(
            "curve must be sorted by strictly increasing cluster count",
        ));
    }
    if points.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::invalid("curve has non-finite values"));
    }
    let peak = points
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |best, (i, p)| match best {
            Some((_, v)) if v > p.1 => best,
            _ => Some((i, p.1)),
        })
        .map(|(i, _)| i)
        .ok_or(Error::Empty("merge curve"))?;
    let usable = &points[peak + 1..];
    if usable.len() < MIN_USABLE_POINTS {
        return Err(Error::invalid(format!(
            "L method needs at least {MIN_USABLE_POINTS} points right of the largest merge, got {}",
            usable.len()
        )));
    }
    let floor = min_window.min(usable.len()).max(4);

    let mut cutoff = usable.len();
    let mut last_knee = usize::MAX;
    let mut passes = Vec::new();
    let result = loop {
        let window = &usable[..cutoff];
        let (knee, curve) = evaluate(window);
        passes.push(KneePass {
            window: (window[0].0, window[cutoff - 1].0),
            points: cutoff,
            knee,
        });
        let keep = usable.iter().take_while(|p| p.0 <= 2 * knee).count();
        let next = keep.max(floor).min(usable.len());
        if knee >= last_knee || next == cutoff {
            break (knee, curve, window);
        }
        last_knee = knee;
        cutoff = next;
    };

    let (knee, curve, window) = result;
    Ok(KneeResult {
        num_clusters: knee,
        rmse_curve: curve,
        evaluation_window: (window[0].0, window[window.len() - 1].0),
        window_points: window.len(),
        excluded_through: points[peak].0,
        passes,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// `n` points at x = 2.., largest at x = 2, a steep line from 100 down
    /// to 30 through `x <= knee`, then a shallow one after a jump.
    pub fn two_line_curve(n: usize, knee: usize) -> Vec<(usize, f64)> {
        (2..2 + n)
            .map(|x| {
                let y = if x <= knee {
                    100.0 - 70.0 * (x - 2) as f64 / (knee - 2) as f64
                } else {
                    20.0 - 0.5 * (x - knee) as f64
                };
                (x, y)
            })
            .collect()
    }

    #[test]
    fn exact_breakpoint_is_recovered() {
        for knee in 5..=25 {
            let r = l_method_curve(&two_line_curve(30, knee), MIN_WINDOW).unwrap();
            assert_eq!(r.num_clusters, knee, "{r:?}");
        }
    }

    #[test]
    fn largest_point_is_excluded() {
        let mut pts = two_line_curve(30, 9);
        pts[3].1 = 500.0; // x = 5 becomes the peak
        let r = l_method_curve(&pts, MIN_WINDOW).unwrap();
        assert_eq!(r.excluded_through, 5);
        assert!(r.evaluation_window.0 >= 6);
        assert!(r.rmse_curve.iter().all(|(c, _)| *c > 6));
    }

    #[test]
    fn window_never_shrinks_below_minimum() {
        let r = l_method_curve(&two_line_curve(60, 6), MIN_WINDOW).unwrap();
        assert_eq!(r.num_clusters, 6);
        assert!(r.passes.len() >= 2);
        assert!(r.window_points >= MIN_WINDOW);
        assert_eq!(r.evaluation_window.0, 3);
    }

    #[test]
    fn straight_line_reports_a_flat_curve() {
        let pts: Vec<(usize, f64)> = (2..32).map(|x| (x, 100.0 - 2.0 * x as f64)).collect();
        let r = l_method_curve(&pts, MIN_WINDOW).unwrap();
        assert!(r.rmse_curve.iter().all(|(_, e)| *e < 1e-9));
        assert!(!r.rmse_curve.is_empty());
    }

    #[test]
    fn noisy_curve_stays_near_knee() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = Normal::new(0.0, 0.01 * 100.0).unwrap();
        let mut hits = 0;
        for _ in 0..50 {
            let pts: Vec<(usize, f64)> = two_line_curve(30, 7)
                .into_iter()
                .map(|(x, y)| (x, y + noise.sample(&mut rng)))
                .collect();
            let r = l_method_curve(&pts, MIN_WINDOW).unwrap();
            if r.num_clusters.abs_diff(7) <= 1 {
                hits += 1;
            }
        }
        assert!(hits >= 47, "{hits}");
    }

    #[test]
    fn too_few_points() {
        let pts: Vec<(usize, f64)> = (2..7).map(|x| (x, 10.0 - x as f64)).collect();
        assert!(l_method_curve(&pts, MIN_WINDOW).is_err());
        let unsorted = vec![(3, 1.0), (2, 2.0)];
        assert!(l_method_curve(&unsorted, MIN_WINDOW).is_err());
    }
}
