//! Dynamic time warping over multivariate series.
//!
//! The recursion accumulates a local frame distance along monotone,
//! continuous paths using the three unit-weight moves (down, diagonal,
//! right). Among equal-cost paths the shortest one is kept, and remaining
//! ties prefer the diagonal move, so both the cost and the path length are
//! symmetric in the two inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Series;

/// Distance between two frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LocalCost {
    /// Plain Euclidean norm of the frame difference.
    #[default]
    Euclidean,
    /// Squared Euclidean norm; the barycenter update minimizes this one.
    SquaredEuclidean,
}

impl LocalCost {
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let sq = a
            .iter()
            .zip(b)
            .fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y));
        match self {
            LocalCost::Euclidean => sq.sqrt(),
            LocalCost::SquaredEuclidean => sq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DtwOptions {
    pub cost: LocalCost,
    /// Sakoe-Chiba half-width: only cells with `|i - j| <= band` are
    /// reachable. `None` leaves the warping unconstrained.
    pub band: Option<usize>,
}

/// Zero-based `(i, j)` frame pairs from `(0, 0)` to `(n - 1, m - 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpPath(pub Vec<(usize, usize)>);

impl WarpPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    /// Checks the endpoint, monotonicity and continuity conditions.
    pub fn is_valid_for(&self, n: usize, m: usize) -> bool {
        let p = &self.0;
        if p.first() != Some(&(0, 0)) || p.last() != Some(&(n - 1, m - 1)) {
            return false;
        }
        p.windows(2).all(|w| {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
        })
    }

    /// Swaps the roles of the two series.
    pub fn transposed(&self) -> WarpPath {
        WarpPath(self.0.iter().map(|&(i, j)| (j, i)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub cost: f64,
    pub path: WarpPath,
}

impl Alignment {
    /// Cost divided by the number of aligned pairs.
    pub fn normalized(&self) -> f64 {
        self.cost / self.path.len() as f64
    }
}

const DIAG: u8 = 0;
const UP: u8 = 1; // from (i - 1, j)
const LEFT: u8 = 2; // from (i, j - 1)

fn check_pair(a: &Series, b: &Series) -> Result<()> {
    if a.dof() != b.dof() {
        return Err(Error::DimensionMismatch {
            expected: a.dof(),
            actual: b.dof(),
        });
    }
    if a.frames() == 0 || b.frames() == 0 {
        return Err(Error::Empty("trajectory"));
    }
    Ok(())
}

/// Optimal warping of `a` against `b`.
pub fn align(a: &Series, b: &Series, opts: DtwOptions) -> Result<Alignment> {
    check_pair(a, b)?;
    let (n, m) = (a.frames(), b.frames());
    let band = opts.band.unwrap_or(usize::MAX);
    if n.abs_diff(m) > band {
        return Err(Error::invalid(format!(
            "warp band {band} cannot align lengths {n} and {m}"
        )));
    }

    let mut acc = vec![f64::INFINITY; n * m];
    let mut len = vec![u32::MAX; n * m];
    let mut step = vec![DIAG; n * m];

    for i in 0..n {
        let lo = i.saturating_sub(band);
        let hi = i.saturating_add(band).min(m - 1);
        let fa = a.frame(i);
        for j in lo..=hi {
            let d = opts.cost.eval(fa, b.frame(j));
            let k = i * m + j;
            if i == 0 && j == 0 {
                acc[k] = d;
                len[k] = 1;
                continue;
            }
            // Candidates in tie-break preference order.
            let mut best: Option<(f64, u32, u8)> = None;
            for (dir, ok, idx) in [
                (DIAG, i > 0 && j > 0, k.wrapping_sub(m + 1)),
                (UP, i > 0, k.wrapping_sub(m)),
                (LEFT, j > 0, k.wrapping_sub(1)),
            ] {
                if !ok || !acc[idx].is_finite() {
                    continue;
                }
                let cand = (acc[idx], len[idx]);
                let better = match best {
                    None => true,
                    Some((c, l, _)) => cand.0 < c || (cand.0 == c && cand.1 < l),
                };
                if better {
                    best = Some((cand.0, cand.1, dir));
                }
            }
            if let Some((c, l, dir)) = best {
                acc[k] = c + d;
                len[k] = l + 1;
                step[k] = dir;
            }
        }
    }

    let last = n * m - 1;
    let cost = acc[last];
    let mut pairs = Vec::with_capacity(len[last] as usize);
    let (mut i, mut j) = (n - 1, m - 1);
    loop {
        pairs.push((i, j));
        if i == 0 && j == 0 {
            break;
        }
        match step[i * m + j] {
            DIAG => {
                i -= 1;
                j -= 1;
            }
            UP => i -= 1,
            _ => j -= 1,
        }
    }
    pairs.reverse();
    Ok(Alignment {
        cost,
        path: WarpPath(pairs),
    })
}

/// Unconstrained DTW with Euclidean frame distance.
pub fn dtw(a: &Series, b: &Series) -> Result<Alignment> {
    align(a, b, DtwOptions::default())
}

/// Optimal cost and path length of [`align`] without recording the path.
pub fn cost_and_length(a: &Series, b: &Series, opts: DtwOptions) -> Result<(f64, usize)> {
    check_pair(a, b)?;
    let (n, m) = (a.frames(), b.frames());
    let band = opts.band.unwrap_or(usize::MAX);
    if n.abs_diff(m) > band {
        return Err(Error::invalid(format!(
            "warp band {band} cannot align lengths {n} and {m}"
        )));
    }
    let (x, y) = (a.as_slice(), b.as_slice());
    let squared = opts.cost == LocalCost::SquaredEuclidean;
    let (cost, len) = match a.dof() {
        1 => rolling::<1>(x, y, 1, n, m, band, squared),
        3 => rolling::<3>(x, y, 3, n, m, band, squared),
        4 => rolling::<4>(x, y, 4, n, m, band, squared),
        7 => rolling::<7>(x, y, 7, n, m, band, squared),
        dof => rolling::<0>(x, y, dof, n, m, band, squared),
    };
    Ok((cost, len as usize))
}

/// Two-row DP. `D > 0` fixes the channel count at compile time; `D == 0`
/// uses `dof`.
fn rolling<const D: usize>(
    x: &[f64],
    y: &[f64],
    dof: usize,
    n: usize,
    m: usize,
    band: usize,
    squared: bool,
) -> (f64, u32) {
    let dist = |i: usize, j: usize| -> f64 {
        let (fa, fb) = if D > 0 {
            (&x[i * D..i * D + D], &y[j * D..j * D + D])
        } else {
            (&x[i * dof..(i + 1) * dof], &y[j * dof..(j + 1) * dof])
        };
        let mut sq = 0.0;
        for (p, q) in fa.iter().zip(fb) {
            sq += (p - q) * (p - q);
        }
        if squared {
            sq
        } else {
            sq.sqrt()
        }
    };
    let mut prev_c = vec![f64::INFINITY; m];
    let mut prev_l = vec![u32::MAX; m];
    let mut cur_c = vec![f64::INFINITY; m];
    let mut cur_l = vec![u32::MAX; m];
    let mut row = vec![0.0; m];
    for i in 0..n {
        cur_c.fill(f64::INFINITY);
        cur_l.fill(u32::MAX);
        let lo = i.saturating_sub(band);
        let hi = i.saturating_add(band).min(m - 1);
        for (j, r) in row.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *r = dist(i, j);
        }
        let mut start = lo;
        if i == 0 {
            cur_c[0] = row[0];
            cur_l[0] = 1;
            start = 1;
        }
        for j in start..=hi {
            // Same preference order as `align`: diagonal, up, left.
            let (mut c, mut l) = (f64::INFINITY, u32::MAX);
            if i > 0 {
                if j > 0 {
                    (c, l) = (prev_c[j - 1], prev_l[j - 1]);
                }
                let (uc, ul) = (prev_c[j], prev_l[j]);
                let take = (uc < c) | ((uc == c) & (ul < l));
                c = if take { uc } else { c };
                l = if take { ul } else { l };
            }
            if j > 0 {
                let (lc, ll) = (cur_c[j - 1], cur_l[j - 1]);
                let take = (lc < c) | ((lc == c) & (ll < l));
                c = if take { lc } else { c };
                l = if take { ll } else { l };
            }
            if c.is_finite() {
                cur_c[j] = c + row[j];
                cur_l[j] = l + 1;
            }
        }
        std::mem::swap(&mut prev_c, &mut cur_c);
        std::mem::swap(&mut prev_l, &mut cur_l);
    }
    (prev_c[m - 1], prev_l[m - 1])
}

/// DTW cost divided by the warped length.
pub fn normalized_dtw(a: &Series, b: &Series) -> Result<f64> {
    let (cost, len) = cost_and_length(a, b, DtwOptions::default())?;
    Ok(cost / len as f64)
}

/// Smaller of the forward and reversed normalized DTW. The flag is `true`
/// when the reversed orientation was strictly better.
pub fn bidirectional_divergence(a: &Series, b: &Series) -> Result<(f64, bool)> {
    let forward = normalized_dtw(a, b)?;
    let reverse = normalized_dtw(a, &b.reversed())?;
    if reverse < forward {
        Ok((reverse, true))
    } else {
        Ok((forward, false))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Every monotone continuous path from (0,0) to (n-1,m-1), with its
    /// cost accumulated in path order and its length.
    pub fn enumerate_paths(a: &Series, b: &Series, cost: LocalCost) -> Vec<(f64, usize)> {
        fn walk(
            a: &Series,
            b: &Series,
            cost: LocalCost,
            i: usize,
            j: usize,
            acc: f64,
            len: usize,
            out: &mut Vec<(f64, usize)>,
        ) {
            let acc = acc + cost.eval(a.frame(i), b.frame(j));
            if i + 1 == a.frames() && j + 1 == b.frames() {
                out.push((acc, len + 1));
                return;
            }
            if i + 1 < a.frames() {
                walk(a, b, cost, i + 1, j, acc, len + 1, out);
            }
            if j + 1 < b.frames() {
                walk(a, b, cost, i, j + 1, acc, len + 1, out);
            }
            if i + 1 < a.frames() && j + 1 < b.frames() {
                walk(a, b, cost, i + 1, j + 1, acc, len + 1, out);
            }
        }
        let mut out = Vec::new();
        // The first cell's cost is added without a preceding sum.
        let first = cost.eval(a.frame(0), b.frame(0));
        if a.frames() == 1 && b.frames() == 1 {
            return vec![(first, 1)];
        }
        let mut push = |i, j| walk(a, b, cost, i, j, first, 1, &mut out);
        if a.frames() > 1 {
            push(1, 0);
        }
        if b.frames() > 1 {
            push(0, 1);
        }
        if a.frames() > 1 && b.frames() > 1 {
            push(1, 1);
        }
        out
    }

    /// Lexicographic (cost, length) minimum over all paths.
    pub fn oracle(a: &Series, b: &Series) -> (f64, usize) {
        enumerate_paths(a, b, LocalCost::Euclidean)
            .into_iter()
            .fold((f64::INFINITY, usize::MAX), |best, c| {
                if c.0 < best.0 || (c.0 == best.0 && c.1 < best.1) {
                    c
                } else {
                    best
                }
            })
    }

    pub fn random_series(rng: &mut ChaCha8Rng, frames: usize, dof: usize) -> Series {
        Series::new(
            (0..frames * dof)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
            dof,
        )
        .unwrap()
    }

    #[test]
    fn self_alignment_is_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_series(&mut rng, 9, 3);
        let al = dtw(&t, &t).unwrap();
        assert_eq!(al.cost, 0.0);
        assert_eq!(al.path.0, (0..9).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn small_univariate_case_matches_enumeration() {
        let a = Series::univariate(&[0.0, 1.0, 2.0]).unwrap();
        let b = Series::univariate(&[0.0, 2.0]).unwrap();
        // Paths (by enumeration): best cost 1 via (0,0),(1,0),(2,1) or
        // (0,0),(1,1),(2,1); both have length 3.
        let (cost, len) = oracle(&a, &b);
        assert_eq!((cost, len), (1.0, 3));
        let al = dtw(&a, &b).unwrap();
        assert_eq!(al.cost, 1.0);
        assert_eq!(al.path.len(), 3);
        assert_eq!(normalized_dtw(&a, &b).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn constant_offsets_normalize_to_gap() {
        for n in [2usize, 5, 17] {
            let a = Series::univariate(&vec![0.3; n]).unwrap();
            let b = Series::univariate(&vec![1.05; n]).unwrap();
            let v = normalized_dtw(&a, &b).unwrap();
            assert!((v - 0.75).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn symmetric_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(2..30);
            let m = rng.random_range(2..30);
            let a = random_series(&mut rng, n, 2);
            let b = random_series(&mut rng, m, 2);
            let ab = dtw(&a, &b).unwrap();
            let ba = dtw(&b, &a).unwrap();
            assert!((ab.cost - ba.cost).abs() <= 1e-12);
            assert_eq!(ab.path.len(), ba.path.len());
        }
    }

    #[test]
    fn reversal_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_series(&mut rng, 12, 3);
        assert_eq!(
            bidirectional_divergence(&a, &a.reversed()).unwrap(),
            (0.0, true)
        );
        assert_eq!(bidirectional_divergence(&a, &a).unwrap(), (0.0, false));
        let b = random_series(&mut rng, 15, 3);
        let (v, _) = bidirectional_divergence(&a, &b).unwrap();
        assert!(v <= normalized_dtw(&a, &b).unwrap());
    }

    #[test]
    fn band_limits_warping() {
        let a = Series::univariate(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        let b = Series::univariate(&[0.0, 1.0, 1.0, 1.0]).unwrap();
        let free = dtw(&a, &b).unwrap();
        assert_eq!(free.cost, 0.0);
        let diag = align(
            &a,
            &b,
            DtwOptions {
                band: Some(0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(diag.cost, 1.0);
        assert!(diag.path.pairs().iter().all(|(i, j)| i == j));
        let short = Series::univariate(&[0.0, 1.0]).unwrap();
        assert!(align(
            &a,
            &short,
            DtwOptions {
                band: Some(1),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn errors() {
        let a = Series::new(vec![0.0; 6], 3).unwrap();
        let b = Series::new(vec![0.0; 6], 2).unwrap();
        assert!(matches!(dtw(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    fn series_strategy() -> impl Strategy<Value = (Series, Series)> {
        (1usize..4, 1usize..9, 1usize..9).prop_flat_map(|(dof, n, m)| {
            (
                proptest::collection::vec(-2.0f64..2.0, n * dof),
                proptest::collection::vec(-2.0f64..2.0, m * dof),
            )
                .prop_map(move |(x, y)| {
                    (Series::new(x, dof).unwrap(), Series::new(y, dof).unwrap())
                })
        })
    }

    proptest! {
        #[test]
        fn dp_equals_enumeration((a, b) in series_strategy()) {
            let (cost, len) = oracle(&a, &b);
            let al = dtw(&a, &b).unwrap();
            prop_assert_eq!(al.cost, cost);
            prop_assert_eq!(al.path.len(), len);
            prop_assert!(al.path.is_valid_for(a.frames(), b.frames()));
            prop_assert!(al.cost >= 0.0);
            prop_assert_eq!(cost_and_length(&a, &b, DtwOptions::default()).unwrap(), (cost, len));
        }

        #[test]
        fn banded_cost_matches_full_alignment((a, b) in series_strategy(), extra in 0usize..4) {
            let opts = DtwOptions { band: Some(a.frames().abs_diff(b.frames()) + extra), ..Default::default() };
            let al = align(&a, &b, opts).unwrap();
            prop_assert_eq!(cost_and_length(&a, &b, opts).unwrap(), (al.cost, al.path.len()));
        }

        #[test]
        fn bidirectional_is_symmetric((a, b) in series_strategy()) {
            let (x, _) = bidirectional_divergence(&a, &b).unwrap();
            let (y, _) = bidirectional_divergence(&b, &a).unwrap();
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}
