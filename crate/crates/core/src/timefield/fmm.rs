//! First-order fast marching for |∇d| = 1 on a uniform raster.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    // Min-heap on the value; ties broken by cell index so the visiting order
    // never depends on insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Arrival times from `sources` (value 0) through `passable` cells with unit
/// speed and spacing `h`. Unreached cells are `f64::INFINITY`.
pub fn fast_marching(nx: usize, ny: usize, h: f64, sources: &[usize], passable: &[bool]) -> Vec<f64> {
    let n = nx * ny;
    assert_eq!(passable.len(), n);
    let mut value = vec![f64::INFINITY; n];
    let mut frozen = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        value[s] = 0.0;
        heap.push(Entry(0.0, s));
    }
    let accepted = |frozen: &[bool], value: &[f64], j: Option<usize>| match j {
        Some(j) if frozen[j] => value[j],
        _ => f64::INFINITY,
    };
    while let Some(Entry(v, i)) = heap.pop() {
        if frozen[i] || v > value[i] {
            continue;
        }
        frozen[i] = true;
        let (ix, iy) = (i % nx, i / nx);
        let neighbours = [
            (ix > 0).then(|| i - 1),
            (ix + 1 < nx).then(|| i + 1),
            (iy > 0).then(|| i - nx),
            (iy + 1 < ny).then(|| i + nx),
        ];
        for j in neighbours.into_iter().flatten() {
            if frozen[j] || !passable[j] {
                continue;
            }
            let (jx, jy) = (j % nx, j / nx);
            let a = accepted(&frozen, &value, (jx > 0).then(|| j - 1))
                .min(accepted(&frozen, &value, (jx + 1 < nx).then(|| j + 1)));
            let b = accepted(&frozen, &value, (jy > 0).then(|| j - nx))
                .min(accepted(&frozen, &value, (jy + 1 < ny).then(|| j + nx)));
            let d = eikonal_update(a, b, h);
            if d < value[j] {
                value[j] = d;
                heap.push(Entry(d, j));
            }
        }
    }
    value
}

fn eikonal_update(a: f64, b: f64, h: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if hi - lo >= h {
        lo + h
    } else {
        0.5 * (lo + hi + (2.0 * h * h - (hi - lo) * (hi - lo)).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_front_is_exact() {
        let (nx, ny) = (10, 4);
        let sources: Vec<usize> = (0..ny).map(|iy| iy * nx).collect();
        let d = fast_marching(nx, ny, 0.5, &sources, &vec![true; nx * ny]);
        for iy in 0..ny {
            for ix in 0..nx {
                assert!((d[iy * nx + ix] - 0.5 * ix as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn point_source_approximates_euclidean_distance() {
        let n = 81;
        let c = 40 * n + 40;
        let d = fast_marching(n, n, 1.0, &[c], &vec![true; n * n]);
        let diag = d[(40 + 30) * n + 40 + 30];
        let exact = (2.0f64).sqrt() * 30.0;
        assert!((diag - exact).abs() / exact < 0.1, "{diag} vs {exact}");
        assert_eq!(d[40 * n + 70], 30.0);
    }

    #[test]
    fn blocked_cells_stay_unreached() {
        let passable = vec![true, false, true];
        let d = fast_marching(3, 1, 1.0, &[0], &passable);
        assert_eq!(d[0], 0.0);
        assert!(d[1].is_infinite() && d[2].is_infinite());
    }
}
