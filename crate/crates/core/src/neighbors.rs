//! Spatial lookup for kernel windows.
//!
//! Gaussian weights beyond a few kernel widths are below double precision
//! relative to the nearest point, so every kernel sum is restricted to the
//! points inside `d^2 <= d_min^2 + cutoff * theta`. In 1D the lookup is a
//! binary search over sorted coordinates; in higher dimensions a uniform
//! cell grid is used.

use std::collections::HashMap;

#[derive(Debug, Clone)]
enum Kind {
    Sorted { order: Vec<usize>, keys: Vec<f64> },
    Cells { size: f64, cells: HashMap<Vec<i64>, Vec<usize>> },
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    dim: usize,
    n: usize,
    kind: Kind,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl NeighborIndex {
    /// `points` is row-major `n x dim`. `cell` is the grid cell edge used
    /// for `dim > 1`; ignored in 1D.
    pub fn build(points: &[f64], dim: usize, cell: f64) -> Self {
        let n = points.len() / dim;
        if dim == 1 {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
            let keys = order.iter().map(|&i| points[i]).collect();
            return Self { dim, n, kind: Kind::Sorted { order, keys } };
        }
        let size = if cell.is_finite() && cell > 0.0 { cell } else { 1.0 };
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for i in 0..n {
            let key = Self::key(&points[i * dim..(i + 1) * dim], size);
            cells.entry(key).or_default().push(i);
        }
        Self { dim, n, kind: Kind::Cells { size, cells } }
    }

    fn key(p: &[f64], size: f64) -> Vec<i64> {
        p.iter().map(|v| (v / size).floor() as i64).collect()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Squared distance from `q` to the closest indexed point.
    pub fn nearest_dist2(&self, points: &[f64], q: &[f64]) -> f64 {
        let dim = self.dim;
        match &self.kind {
            Kind::Sorted { keys, .. } => {
                let pos = keys.partition_point(|&k| k < q[0]);
                let mut best = f64::INFINITY;
                if pos < keys.len() {
                    best = best.min((keys[pos] - q[0]).powi(2));
                }
                if pos > 0 {
                    best = best.min((keys[pos - 1] - q[0]).powi(2));
                }
                best
            }
            Kind::Cells { size, cells } => {
                let center = Self::key(q, *size);
                let mut best = f64::INFINITY;
                let mut ring = 0i64;
                loop {
                    let mut any = false;
                    for_each_offset(dim, ring, |off| {
                        if off.iter().map(|o| o.abs()).max().unwrap_or(0) != ring {
                            return;
                        }
                        let key: Vec<i64> = center.iter().zip(off).map(|(c, o)| c + o).collect();
                        if let Some(list) = cells.get(&key) {
                            any = true;
                            for &i in list {
                                best = best.min(dist2(&points[i * dim..(i + 1) * dim], q));
                            }
                        }
                    });
                    let reach = ring as f64 * size;
                    if best.is_finite() && reach * reach >= best {
                        return best;
                    }
                    ring += 1;
                    if ring as usize > 4 * self.n.max(1) + 2 && !any {
                        return self.brute_nearest(points, q);
                    }
                    if ring > 64 {
                        return self.brute_nearest(points, q);
                    }
                }
            }
        }
    }

    fn brute_nearest(&self, points: &[f64], q: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| dist2(&points[i * self.dim..(i + 1) * self.dim], q))
            .fold(f64::INFINITY, f64::min)
    }

    /// Indices of all points with squared distance `<= r2` from `q`.
    pub fn within(&self, points: &[f64], q: &[f64], r2: f64, out: &mut Vec<usize>) {
        out.clear();
        let dim = self.dim;
        match &self.kind {
            Kind::Sorted { order, keys } => {
                let r = r2.sqrt();
                let lo = keys.partition_point(|&k| k < q[0] - r);
                let hi = keys.partition_point(|&k| k <= q[0] + r);
                out.extend_from_slice(&order[lo..hi]);
            }
            Kind::Cells { size, cells } => {
                // Decide in floating point: a far-off query makes `reach`
                // overflow as an integer.
                let reach = (r2.sqrt() / size).ceil();
                let cube = 2.0 * reach + 1.0;
                if !(cube.powi(dim as i32) <= self.n as f64) {
                    for i in 0..self.n {
                        if dist2(&points[i * dim..(i + 1) * dim], q) <= r2 {
                            out.push(i);
                        }
                    }
                    return;
                }
                let reach = reach as i64;
                let center = Self::key(q, *size);
                for_each_offset(dim, reach, |off| {
                    let key: Vec<i64> = center.iter().zip(off).map(|(c, o)| c + o).collect();
                    if let Some(list) = cells.get(&key) {
                        for &i in list {
                            if dist2(&points[i * dim..(i + 1) * dim], q) <= r2 {
                                out.push(i);
                            }
                        }
                    }
                });
                out.sort_unstable();
            }
        }
    }
}

/// Visits every integer offset in the cube `[-reach, reach]^dim`.
fn for_each_offset(dim: usize, reach: i64, mut f: impl FnMut(&[i64])) {
    let mut off = vec![-reach; dim];
    loop {
        f(&off);
        let mut d = 0;
        loop {
            if d == dim {
                return;
            }
            off[d] += 1;
            if off[d] <= reach {
                break;
            }
            off[d] = -reach;
            d += 1;
        }
    }
}
