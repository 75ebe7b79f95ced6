//! Balanced k-means grouping of base stations.
//!
//! Each assignment step is an exact balanced transport of base stations to
//! centroids: with `L = qM + r`, every centroid owns `q` mandatory slots and
//! (when `r > 0`) one optional slot, and `M - r` dummy rows absorb the
//! optional slots that stay unused. The square problem is solved by the
//! Hungarian method, so group sizes are always `q` or `q + 1`.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::capacity::BsPartition;
use crate::error::{Error, Result};
use crate::scenario::Point;

/// Above this many base stations the assignment step switches to a greedy
/// nearest-pair fill.
pub const HUNGARIAN_LIMIT: usize = 500;

/// Cost that keeps dummy rows out of mandatory slots.
const FORBIDDEN: f64 = 1e6;

/// Final state of a balanced k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansState {
    pub centroids: Vec<Point>,
    /// Group of every base station.
    pub assignment: Vec<usize>,
    /// Assignment steps performed.
    pub iteration: usize,
    /// Within-group squared distance after each assignment step.
    pub cost_history: Vec<f64>,
}

fn sq_dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Minimum-cost assignment of every row to a distinct column (`rows <= cols`).
pub fn hungarian(cost: ArrayView2<f64>) -> Result<Vec<usize>> {
    let (n, m) = cost.dim();
    if n > m {
        return Err(Error::InvalidArgument(format!("{n} rows cannot be matched to {m} columns")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("assignment cost".into()));
    }
    // Potentials-based O(n^2 m) method with 1-based bookkeeping.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut ans = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            ans[p[j] - 1] = j - 1;
        }
    }
    Ok(ans)
}

fn balanced_assign_hungarian(points: &[Point], centroids: &[Point]) -> Result<Vec<usize>> {
    let (l, m) = (points.len(), centroids.len());
    let (q, r) = (l / m, l % m);
    // Slot layout: q mandatory slots per centroid, then one optional slot each.
    let optional = if r > 0 { m } else { 0 };
    let slots = q * m + optional;
    let rows = l + if r > 0 { m - r } else { 0 };
    debug_assert_eq!(rows, slots);
    let owner = |s: usize| if s < q * m { s / q.max(1) } else { s - q * m };
    let cost = Array2::from_shape_fn((rows, slots), |(i, s)| {
        if i < l {
            sq_dist(points[i], centroids[owner(s)])
        } else if s < q * m {
            FORBIDDEN
        } else {
            0.0
        }
    });
    let matched = hungarian(cost.view())?;
    Ok(matched[..l].iter().map(|&s| owner(s)).collect())
}

fn balanced_assign_greedy(points: &[Point], centroids: &[Point]) -> Vec<usize> {
    let (l, m) = (points.len(), centroids.len());
    let (q, r) = (l / m, l % m);
    let mut pairs: Vec<(f64, usize, usize)> = (0..l)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| (sq_dist(points[i], centroids[j]), i, j))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![usize::MAX; l];
    let mut size = vec![0usize; m];
    let mut large = 0;
    for (_, i, j) in pairs {
        if out[i] != usize::MAX {
            continue;
        }
        let cap = if size[j] >= q && large < r { q + 1 } else { q };
        if size[j] < cap {
            if size[j] == q {
                large += 1;
            }
            out[i] = j;
            size[j] += 1;
        }
    }
    out
}

fn kmeans_pp(points: &[Point], m: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < m {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centroids.iter().map(|c| sq_dist(*p, *c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total == 0.0 {
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, w) in d.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        };
        centroids.push(points[next]);
    }
    centroids
}

fn within_cost(points: &[Point], centroids: &[Point], assignment: &[usize]) -> f64 {
    points.iter().zip(assignment).map(|(p, &j)| sq_dist(*p, centroids[j])).sum()
}

/// Runs balanced k-means and returns the full state.
pub fn balanced_kmeans_state(points: &[Point], m: usize, seed: u64, max_iters: usize) -> Result<KMeansState> {
    let l = points.len();
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one group".into()));
    }
    if m > l {
        return Err(Error::Infeasible(format!("{l} base stations cannot form {m} nonempty groups")));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("base station positions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(points, m, &mut rng);
    let mut assignment: Vec<usize> = Vec::new();
    let mut cost_history = Vec::new();
    let mut iteration = 0;
    while iteration < max_iters.max(1) {
        let next = if l > HUNGARIAN_LIMIT {
            balanced_assign_greedy(points, &centroids)
        } else {
            balanced_assign_hungarian(points, &centroids)?
        };
        iteration += 1;
        cost_history.push(within_cost(points, &centroids, &next));
        if next == assignment {
            break;
        }
        assignment = next;
        let mut sum = vec![[0.0; 2]; m];
        let mut count = vec![0usize; m];
        for (p, &j) in points.iter().zip(&assignment) {
            sum[j][0] += p[0];
            sum[j][1] += p[1];
            count[j] += 1;
        }
        for j in 0..m {
            centroids[j] = [sum[j][0] / count[j] as f64, sum[j][1] / count[j] as f64];
        }
    }
    Ok(KMeansState { centroids, assignment, iteration, cost_history })
}

/// Balanced k-means grouping of `bs_positions` into `m` groups whose sizes
/// differ by at most one. Groups are ordered by their smallest member.
pub fn balanced_kmeans(bs_positions: &[Point], m: usize, seed: u64, max_iters: usize) -> Result<BsPartition> {
    let state = balanced_kmeans_state(bs_positions, m, seed, max_iters)?;
    let mut groups = vec![Vec::new(); m];
    for (b, &j) in state.assignment.iter().enumerate() {
        groups[j].push(b);
    }
    groups.sort_by_key(|g| g[0]);
    BsPartition::new(groups, bs_positions.len())
}
