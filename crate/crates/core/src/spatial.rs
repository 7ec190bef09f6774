//! Uniform grid hash for 2D nearest-neighbour queries.

use std::collections::HashMap;

type Cell = (i64, i64);

#[derive(Clone, Debug)]
pub struct GridIndex<'a> {
    points: &'a [[f64; 2]],
    cell: f64,
    cells: HashMap<Cell, Vec<u32>>,
    lo: Cell,
    hi: Cell,
}

impl<'a> GridIndex<'a> {
    /// Buckets `points` into square cells of side `cell`.
    pub fn new(points: &'a [[f64; 2]], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        let mut lo = (i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let c = Self::key(cell, *p);
            lo = (lo.0.min(c.0), lo.1.min(c.1));
            hi = (hi.0.max(c.0), hi.1.max(c.1));
            cells.entry(c).or_default().push(i as u32);
        }
        GridIndex {
            points,
            cell,
            cells,
            lo,
            hi,
        }
    }

    /// Cell size giving roughly two points per occupied cell.
    pub fn auto_cell(points: &[[f64; 2]]) -> f64 {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in points {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        let extent = (x1 - x0).max(y1 - y0);
        let c = 2.0 * extent / (points.len().max(1) as f64);
        if c.is_finite() && c > 1e-6 {
            c
        } else {
            1.0
        }
    }

    #[inline]
    fn key(cell: f64, p: [f64; 2]) -> Cell {
        ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn scan_ring(&self, c: Cell, r: i64, q: [f64; 2], best: &mut Option<(usize, f64)>) {
        let mut visit = |cx: i64, cy: i64| {
            if let Some(ids) = self.cells.get(&(cx, cy)) {
                for &i in ids {
                    let p = self.points[i as usize];
                    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                    match best {
                        Some((bi, bd)) if d2 > *bd || (d2 == *bd && i as usize > *bi) => {}
                        _ => *best = Some((i as usize, d2)),
                    }
                }
            }
        };
        if r == 0 {
            visit(c.0, c.1);
            return;
        }
        for dx in -r..=r {
            visit(c.0 + dx, c.1 - r);
            visit(c.0 + dx, c.1 + r);
        }
        for dy in -r + 1..r {
            visit(c.0 - r, c.1 + dy);
            visit(c.0 + r, c.1 + dy);
        }
    }

    /// Exact nearest neighbour `(index, distance)`; ties go to the lower index.
    pub fn nearest(&self, q: [f64; 2]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let c = Self::key(self.cell, q);
        // rings needed to cover every occupied cell from c
        let max_ring = [
            (c.0 - self.lo.0).abs(),
            (self.hi.0 - c.0).abs(),
            (c.1 - self.lo.1).abs(),
            (self.hi.1 - c.1).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        if max_ring > 64 {
            return self.brute_force(q);
        }
        let mut best = None;
        for r in 0..=max_ring {
            self.scan_ring(c, r, q, &mut best);
            // anything beyond ring r is at least r·cell away
            if let Some((_, d2)) = best {
                let bound = r as f64 * self.cell;
                if d2 <= bound * bound {
                    break;
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    /// Nearest neighbour no farther than `max_dist`.
    pub fn nearest_within(&self, q: [f64; 2], max_dist: f64) -> Option<(usize, f64)> {
        let c = Self::key(self.cell, q);
        let rings = (max_dist / self.cell).ceil() as i64;
        let mut best = None;
        for r in 0..=rings {
            self.scan_ring(c, r, q, &mut best);
        }
        best.map(|(i, d2)| (i, d2.sqrt())).filter(|&(_, d)| d <= max_dist)
    }

    fn brute_force(&self, q: [f64; 2]) -> Option<(usize, f64)> {
        nearest_brute_force(self.points, q)
    }
}

/// Linear-scan nearest neighbour; ties go to the lower index.
pub fn nearest_brute_force(points: &[[f64; 2]], q: [f64; 2]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, d2)| (i, d2.sqrt()))
}
