//! Time functions built from a binary mask via a normalised distance map.

use std::collections::VecDeque;
use std::sync::Arc;

use super::{fast_marching, FieldSource, TimeField, TimeMap};
use crate::error::{Error, Result};
use crate::geometry::{BBox, BoundaryPoint, Region};
use crate::grid::GridSpec;
use crate::{Point, Vec2};

/// Binary raster in grid order (`iy = 0` is the bottom row).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskRaster {
    pub nx: usize,
    pub ny: usize,
    pub inside: Vec<bool>,
}

impl MaskRaster {
    pub fn new(nx: usize, ny: usize, inside: Vec<bool>) -> Self {
        assert_eq!(inside.len(), nx * ny);
        MaskRaster { nx, ny, inside }
    }

    pub fn from_fn(nx: usize, ny: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let inside = (0..nx * ny).map(|i| f(i % nx, i / nx)).collect();
        MaskRaster { nx, ny, inside }
    }

    /// From image rows listed top row first.
    pub fn from_image_rows(width: usize, height: usize, top_first: &[bool]) -> Self {
        Self::from_fn(width, height, |ix, iy| top_first[(height - 1 - iy) * width + ix])
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|b| **b).count()
    }

    /// Number of 4-connected components of the inside cells.
    pub fn components(&self) -> usize {
        let (nx, ny) = (self.nx, self.ny);
        let mut seen = vec![false; nx * ny];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..nx * ny {
            if !self.inside[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                let (ix, iy) = (i % nx, i / nx);
                let nb = [
                    (ix > 0).then(|| i - 1),
                    (ix + 1 < nx).then(|| i + 1),
                    (iy > 0).then(|| i - nx),
                    (iy + 1 < ny).then(|| i + nx),
                ];
                for j in nb.into_iter().flatten() {
                    if self.inside[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        count
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskClass {
    Outside,
    /// Outside cell 8-adjacent to the mask: carries boundary data, T = 0.
    Ring,
    Inside,
}

/// Region given by mask cells plus their ring. The boundary is the set of
/// ring cell centres; boundary parameters are indices into [`MaskRegion::ring`].
#[derive(Clone, Debug)]
pub struct MaskRegion {
    pub spec: GridSpec,
    pub class: Vec<MaskClass>,
    ring: Vec<usize>,
    ring_slot: Vec<usize>,
    area: f64,
}

impl MaskRegion {
    pub fn ring(&self) -> &[usize] {
        &self.ring
    }

    pub fn ring_cell(&self, param: f64) -> Option<usize> {
        let k = param.round();
        (k >= 0.0 && (k as usize) < self.ring.len()).then(|| self.ring[k as usize])
    }

    fn class_at(&self, x: Point) -> MaskClass {
        match self.spec.cell_of(x) {
            Some((ix, iy)) => self.class[self.spec.index(ix, iy)],
            None => MaskClass::Outside,
        }
    }
}

impl Region for MaskRegion {
    fn contains(&self, x: Point) -> bool {
        self.class_at(x) != MaskClass::Outside
    }

    fn bbox(&self) -> BBox {
        let o = Point::new(self.spec.origin[0], self.spec.origin[1]);
        let size = Vec2::new(self.spec.nx as f64, self.spec.ny as f64) * self.spec.spacing;
        BBox::new(o, o + size)
    }

    fn project_to_boundary(&self, x: Point) -> BoundaryPoint {
        let s = &self.spec;
        let (fx, fy) = s.locate(x);
        let cx = fx.round().clamp(0.0, (s.nx - 1) as f64) as i64;
        let cy = fy.round().clamp(0.0, (s.ny - 1) as f64) as i64;
        let mut best = (f64::INFINITY, usize::MAX);
        let max_r = s.nx.max(s.ny) as i64;
        for r in 0..=max_r {
            // Cells at Chebyshev radius r are at least (r − 1)·h away.
            if best.0.is_finite() && (r - 1) as f64 * s.spacing > best.0 {
                break;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs() != r && dy.abs() != r {
                        continue;
                    }
                    let (ix, iy) = (cx + dx, cy + dy);
                    if ix < 0 || iy < 0 || ix >= s.nx as i64 || iy >= s.ny as i64 {
                        continue;
                    }
                    let i = s.index(ix as usize, iy as usize);
                    if self.class[i] != MaskClass::Ring {
                        continue;
                    }
                    let d = (s.center_of(i) - x).norm();
                    // Ties go to the lower slot for determinism.
                    if d < best.0 || (d == best.0 && self.ring_slot[i] < self.ring_slot[best.1]) {
                        best = (d, i);
                    }
                }
            }
        }
        let i = best.1;
        BoundaryPoint {
            param: self.ring_slot[i] as f64,
            point: s.center_of(i),
            dist: best.0,
        }
    }

    fn boundary_position(&self, param: f64) -> Point {
        let k = (param.round().max(0.0) as usize).min(self.ring.len() - 1);
        self.spec.center_of(self.ring[k])
    }

    fn boundary_period(&self) -> (f64, f64) {
        (0.0, self.ring.len() as f64)
    }

    fn area(&self) -> f64 {
        self.area
    }
}

/// Bilinear T with per-cell gradients.
#[derive(Clone, Debug)]
pub struct GridTime {
    pub spec: GridSpec,
    pub t: Vec<f64>,
    pub grad: Vec<Vec2>,
}

impl TimeMap for GridTime {
    fn value(&self, x: Point) -> f64 {
        self.spec.bilinear(x, |i| self.t[i])
    }

    fn gradient(&self, x: Point) -> Vec2 {
        self.spec.bilinear(x, |i| self.grad[i])
    }
}

#[derive(Clone, Debug)]
pub struct DistanceField {
    pub time: TimeField,
    pub grid_time: Arc<GridTime>,
    pub region: Arc<MaskRegion>,
    /// Cells where the distance attains its maximum.
    pub sigma_cells: Vec<usize>,
    pub max_distance: f64,
}

/// Relative tolerance for membership of a cell in the argmax ridge.
const RIDGE_TOL: f64 = 1e-9;

/// T = d(x, ∂Ω)/max d by fast marching from the ring around the mask, q = 2.
pub fn field_from_distance_grid(mask: &MaskRaster, spacing: f64) -> Result<DistanceField> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let comps = mask.components();
    if comps > 1 {
        return Err(Error::DisconnectedMask(comps));
    }
    let (nx, ny) = (mask.nx, mask.ny);
    let spec = GridSpec::new(nx, ny, Point::zeros(), spacing);
    let mut class = vec![MaskClass::Outside; nx * ny];
    for i in 0..nx * ny {
        if mask.inside[i] {
            class[i] = MaskClass::Inside;
            continue;
        }
        let (ix, iy) = (i % nx, i / nx);
        'nb: for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                if jx >= 0 && jy >= 0 && jx < nx as i64 && jy < ny as i64 && mask.inside[spec.index(jx as usize, jy as usize)] {
                    class[i] = MaskClass::Ring;
                    break 'nb;
                }
            }
        }
    }
    let touches_edge = (0..nx * ny).any(|i| {
        let (ix, iy) = (i % nx, i / nx);
        mask.inside[i] && (ix == 0 || iy == 0 || ix + 1 == nx || iy + 1 == ny)
    });
    if touches_edge {
        return Err(Error::InvalidArgument("mask touches the raster edge".into()));
    }
    let ring: Vec<usize> = (0..nx * ny).filter(|&i| class[i] == MaskClass::Ring).collect();
    let mut ring_slot = vec![usize::MAX; nx * ny];
    for (k, &i) in ring.iter().enumerate() {
        ring_slot[i] = k;
    }

    let d = fast_marching(nx, ny, spacing, &ring, &mask.inside);
    let max_d = mask
        .inside
        .iter()
        .zip(&d)
        .filter(|(b, _)| **b)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let sigma_cells: Vec<usize> = (0..nx * ny)
        .filter(|&i| mask.inside[i] && d[i] >= max_d * (1.0 - RIDGE_TOL))
        .collect();
    let mut t: Vec<f64> = (0..nx * ny)
        .map(|i| if mask.inside[i] { d[i] / max_d } else { 0.0 })
        .collect();
    for &i in &sigma_cells {
        t[i] = 1.0;
    }
    let grad = gradients(&spec, &class, &t);

    let region = Arc::new(MaskRegion {
        spec,
        class,
        ring,
        ring_slot,
        area: mask.count() as f64 * spacing * spacing,
    });
    let grid_time = Arc::new(GridTime { spec, t, grad });
    let time = TimeField::new(grid_time.clone(), 2.0, FieldSource::Grid);
    Ok(DistanceField {
        time,
        grid_time,
        region,
        sigma_cells,
        max_distance: max_d,
    })
}

/// Central differences where both neighbours belong to the region, one-sided
/// where only one does; a vanishing result off the ridge falls back to the
/// steepest ascent towards an 8-neighbour.
fn gradients(spec: &GridSpec, class: &[MaskClass], t: &[f64]) -> Vec<Vec2> {
    let (nx, ny, h) = (spec.nx, spec.ny, spec.spacing);
    let usable = |i: usize| class[i] != MaskClass::Outside;
    let axis = |i: usize, lo: Option<usize>, hi: Option<usize>| -> f64 {
        let lo = lo.filter(|&j| usable(j));
        let hi = hi.filter(|&j| usable(j));
        match (lo, hi) {
            (Some(a), Some(b)) => (t[b] - t[a]) / (2.0 * h),
            (Some(a), None) => (t[i] - t[a]) / h,
            (None, Some(b)) => (t[b] - t[i]) / h,
            (None, None) => 0.0,
        }
    };
    (0..nx * ny)
        .map(|i| {
            if !usable(i) || t[i] >= 1.0 {
                return Vec2::zeros();
            }
            let (ix, iy) = (i % nx, i / nx);
            let gx = axis(i, (ix > 0).then(|| i - 1), (ix + 1 < nx).then(|| i + 1));
            let gy = axis(i, (iy > 0).then(|| i - nx), (iy + 1 < ny).then(|| i + nx));
            let g = Vec2::new(gx, gy);
            if g.norm() > 1e-12 / h {
                return g;
            }
            let mut best = (0.0, Vec2::zeros());
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                    if (dx, dy) == (0, 0) || jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                        continue;
                    }
                    let j = spec.index(jx as usize, jy as usize);
                    if !usable(j) {
                        continue;
                    }
                    let step = Vec2::new(dx as f64, dy as f64) * h;
                    let slope = (t[j] - t[i]) / step.norm();
                    if slope > best.0 {
                        best = (slope, step / step.norm() * slope);
                    }
                }
            }
            best.1
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_mask(n: usize, radius: f64) -> MaskRaster {
        let c = n as f64 / 2.0;
        MaskRaster::from_fn(n, n, |ix, iy| {
            let (x, y) = (ix as f64 + 0.5 - c, iy as f64 + 0.5 - c);
            (x * x + y * y).sqrt() < radius
        })
    }

    #[test]
    fn disk_mask_normalised_distance() {
        let n = 64;
        let f = field_from_distance_grid(&disk_mask(n, 28.0), 1.0).unwrap();
        let center = Point::new(32.0, 32.0);
        assert!((f.time.t(center) - 1.0).abs() < 0.05, "{}", f.time.t(center));
        for &i in f.region.ring() {
            assert_eq!(f.time.t(f.region.spec.center_of(i)), 0.0);
        }
        for &i in &f.sigma_cells {
            assert!((f.region.spec.center_of(i) - center).norm() < 1.5);
        }
        assert_eq!(f.time.q(), 2.0);
    }

    #[test]
    fn rectangle_mask_ridge_is_medial_segment() {
        let (nx, ny) = (64, 64);
        // Inside cells x ∈ [8, 56), y ∈ [24, 39): 48 × 15 cells.
        let mask = MaskRaster::from_fn(nx, ny, |ix, iy| (8..56).contains(&ix) && (24..39).contains(&iy));
        let f = field_from_distance_grid(&mask, 1.0).unwrap();
        // Exact distance from the ring centres: min(ix − 7, 56 − ix, iy − 23, 39 − iy),
        // maximal (= 8) on row iy = 31 for ix ∈ [15, 48].
        assert!(!f.sigma_cells.is_empty());
        for &i in &f.sigma_cells {
            let (ix, iy) = f.region.spec.coords(i);
            assert_eq!(iy, 31);
            assert!((15..=48).contains(&ix), "ix = {ix}");
        }
        assert!((f.max_distance - 8.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_disconnected_masks_fail() {
        let empty = MaskRaster::new(4, 4, vec![false; 16]);
        assert!(matches!(field_from_distance_grid(&empty, 1.0), Err(Error::EmptyMask)));
        let two = MaskRaster::from_fn(8, 8, |ix, iy| iy == 3 && (ix == 2 || ix == 5));
        assert!(matches!(
            field_from_distance_grid(&two, 1.0),
            Err(Error::DisconnectedMask(2))
        ));
    }

    #[test]
    fn ring_projection_and_membership() {
        let f = field_from_distance_grid(&disk_mask(32, 10.0), 1.0).unwrap();
        let r = &f.region;
        assert!(r.contains(Point::new(16.0, 16.0)));
        assert!(!r.contains(Point::new(1.0, 1.0)));
        let bp = r.project_to_boundary(Point::new(16.0, 30.0));
        let cell = r.ring_cell(bp.param).unwrap();
        assert_eq!(r.spec.center_of(cell), bp.point);
        assert!(bp.point.y > 25.0);
    }

    #[test]
    fn gradients_point_inward() {
        let f = field_from_distance_grid(&disk_mask(64, 28.0), 1.0).unwrap();
        let x = Point::new(50.0, 32.0);
        let n = f.time.normal(x).unwrap();
        assert!(n.x < -0.95, "{n:?}");
    }
}
