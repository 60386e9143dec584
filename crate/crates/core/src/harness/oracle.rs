//! Independent brute-force reference computations. Everything here exists to
//! check the engines from a second route: fixture oracle answers and the
//! acceptance suite recompute results with these, never through the engine
//! code paths under test.

use std::collections::BTreeMap;

/// Reference density-based clustering: neighborhood matrix, core flags,
/// connected components over cores, then border attachment to the
/// lowest-numbered adjacent cluster. Returns one label per point (-1 noise);
/// cluster ids ascend with the smallest core index in each component.
pub fn dbscan_reference(points: &[(f64, f64)], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = points.len();
    let eps2 = eps * eps;
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            let dx = points[i].0 - points[j].0;
            let dy = points[i].1 - points[j].1;
            if dx * dx + dy * dy <= eps2 {
                adj[i].push(j);
            }
        }
    }
    let core: Vec<bool> = adj.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut component = vec![usize::MAX; n];
    let mut next = 0usize;
    for i in 0..n {
        if !core[i] || component[i] != usize::MAX {
            continue;
        }
        // Breadth-first over core-core adjacency.
        let id = next;
        next += 1;
        component[i] = id;
        let mut queue = std::collections::VecDeque::from([i]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if core[v] && component[v] == usize::MAX {
                    component[v] = id;
                    queue.push_back(v);
                }
            }
        }
    }
    let mut labels = vec![-1i64; n];
    for i in 0..n {
        if core[i] {
            labels[i] = component[i] as i64;
        } else {
            // Border point: first (lowest id) cluster with a core in range.
            let mut best: Option<usize> = None;
            for &v in &adj[i] {
                if core[v] {
                    best = Some(best.map_or(component[v], |b| b.min(component[v])));
                }
            }
            if let Some(b) = best {
                labels[i] = b as i64;
            }
        }
    }
    labels
}

/// Pearson coefficient via the raw-sums formula (a different algebraic route
/// than the centered-sum implementation).
pub fn pearson_direct(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Pairwise (cascade) summation mean.
pub fn pairwise_mean(xs: &[f64]) -> f64 {
    fn sum(xs: &[f64]) -> f64 {
        match xs.len() {
            0 => 0.0,
            1 => xs[0],
            n => sum(&xs[..n / 2]) + sum(&xs[n / 2..]),
        }
    }
    sum(xs) / xs.len() as f64
}

/// Winding-number containment for a single closed ring.
pub fn winding_contains(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut wn = 0i32;
    for w in ring.windows(2) {
        let (xi, yi) = w[0];
        let (xj, yj) = w[1];
        let is_left = (xj - xi) * (y - yi) - (x - xi) * (yj - yi);
        if yi <= y {
            if yj > y && is_left > 0.0 {
                wn += 1;
            }
        } else if yj <= y && is_left < 0.0 {
            wn -= 1;
        }
    }
    wn != 0
}

/// True when the point lies on any edge of the ring (within a tight epsilon).
pub fn on_ring_boundary(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    ring.windows(2).any(|w| {
        let (ax, ay) = w[0];
        let (bx, by) = w[1];
        let cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax);
        if cross.abs() > 1e-12 {
            return false;
        }
        let dot = (x - ax) * (bx - ax) + (y - ay) * (by - ay);
        let len2 = (bx - ax) * (bx - ax) + (by - ay) * (by - ay);
        dot >= -1e-12 && dot <= len2 + 1e-12
    })
}

/// Per-key tally of rows, the brute-force counterpart of group counting.
pub fn tally_by<T: Ord + Clone>(keys: impl Iterator<Item = T>) -> BTreeMap<T, usize> {
    let mut out = BTreeMap::new();
    for k in keys {
        *out.entry(k).or_insert(0) += 1;
    }
    out
}
