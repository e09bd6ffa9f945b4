//! Uniform grid over projected edge segments.

use crate::geo::PlanarPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SegmentRef {
    pub edge: u32,
    pub segment: u32,
}

/// Every segment is registered in each cell its bounding box overlaps. Cells
/// are stored in compressed-row form.
#[derive(Debug, Clone)]
pub(crate) struct SegmentGrid {
    cell_size: f64,
    min: PlanarPoint,
    nx: usize,
    ny: usize,
    cell_start: Vec<u32>,
    entries: Vec<SegmentRef>,
}

impl SegmentGrid {
    pub fn build(cell_size: f64, edges: &[&[PlanarPoint]]) -> SegmentGrid {
        let mut min = PlanarPoint::new(f64::INFINITY, f64::INFINITY);
        let mut max = PlanarPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in edges.iter().flat_map(|e| e.iter()) {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        if !min.x.is_finite() {
            min = PlanarPoint::default();
            max = PlanarPoint::default();
        }
        let nx = (((max.x - min.x) / cell_size).floor() as usize) + 1;
        let ny = (((max.y - min.y) / cell_size).floor() as usize) + 1;

        let mut grid = SegmentGrid {
            cell_size,
            min,
            nx,
            ny,
            cell_start: Vec::new(),
            entries: Vec::new(),
        };

        let mut buckets: Vec<Vec<SegmentRef>> = vec![Vec::new(); nx * ny];
        for (ei, pts) in edges.iter().enumerate() {
            for (si, w) in pts.windows(2).enumerate() {
                let (i0, j0) = grid.cell_of(w[0].x.min(w[1].x), w[0].y.min(w[1].y));
                let (i1, j1) = grid.cell_of(w[0].x.max(w[1].x), w[0].y.max(w[1].y));
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        buckets[j * nx + i].push(SegmentRef {
                            edge: ei as u32,
                            segment: si as u32,
                        });
                    }
                }
            }
        }
        grid.cell_start.reserve(nx * ny + 1);
        grid.cell_start.push(0);
        for b in &buckets {
            grid.entries.extend_from_slice(b);
            grid.cell_start.push(grid.entries.len() as u32);
        }
        grid
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let i = ((x - self.min.x) / self.cell_size).floor();
        let j = ((y - self.min.y) / self.cell_size).floor();
        (
            (i.max(0.0) as usize).min(self.nx - 1),
            (j.max(0.0) as usize).min(self.ny - 1),
        )
    }

    pub fn cell(&self, i: usize, j: usize) -> &[SegmentRef] {
        let c = j * self.nx + i;
        &self.entries[self.cell_start[c] as usize..self.cell_start[c + 1] as usize]
    }

    /// Visits every segment registered in a cell overlapping the square of
    /// half-width `r` around `p`. A segment may be visited more than once.
    pub fn visit_near(&self, p: PlanarPoint, r: f64, mut f: impl FnMut(SegmentRef)) {
        let (lo_x, hi_x) = (p.x - r, p.x + r);
        let (lo_y, hi_y) = (p.y - r, p.y + r);
        let max_x = self.min.x + self.nx as f64 * self.cell_size;
        let max_y = self.min.y + self.ny as f64 * self.cell_size;
        if hi_x < self.min.x || hi_y < self.min.y || lo_x > max_x || lo_y > max_y {
            return;
        }
        let (i0, j0) = self.cell_of(lo_x, lo_y);
        let (i1, j1) = self.cell_of(hi_x, hi_y);
        for j in j0..=j1 {
            for i in i0..=i1 {
                for s in self.cell(i, j) {
                    f(*s);
                }
            }
        }
    }
}
