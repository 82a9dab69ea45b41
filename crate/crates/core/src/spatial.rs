//! Cell lists for pair enumeration within a finite interaction range.

use crate::config_space::{MarkedParticle, Point};

const MAX_CELLS_PER_AXIS: usize = 2048;

/// Static cell list over a fixed particle slice (CSR layout).
#[derive(Debug, Clone)]
pub struct NeighborGrid {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    members: Vec<u32>,
}

impl NeighborGrid {
    /// `cell` should be at least the query range.
    pub fn build(particles: &[MarkedParticle], cell: f64) -> Self {
        let (mut lo, mut hi) = (Point::new(0.0, 0.0), Point::new(0.0, 0.0));
        if let Some(first) = particles.first() {
            lo = first.position;
            hi = first.position;
        }
        for p in particles {
            lo.x = lo.x.min(p.position.x);
            lo.y = lo.y.min(p.position.y);
            hi.x = hi.x.max(p.position.x);
            hi.y = hi.y.max(p.position.y);
        }
        let extent = (hi.x - lo.x).max(hi.y - lo.y);
        let cell = cell.max(extent / MAX_CELLS_PER_AXIS as f64).max(1e-9);
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut grid = NeighborGrid {
            origin: lo,
            cell,
            nx,
            ny,
            starts: vec![0; nx * ny + 1],
            members: vec![0; particles.len()],
        };
        let cells: Vec<usize> = particles.iter().map(|p| grid.cell_of(&p.position)).collect();
        for &c in &cells {
            grid.starts[c + 1] += 1;
        }
        for c in 0..nx * ny {
            grid.starts[c + 1] += grid.starts[c];
        }
        let mut fill = grid.starts.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.members[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    #[inline]
    fn coords(&self, p: &Point) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.cell).floor() as i64,
            ((p.y - self.origin.y) / self.cell).floor() as i64,
        )
    }

    #[inline]
    fn cell_of(&self, p: &Point) -> usize {
        let (i, j) = self.coords(p);
        let i = i.clamp(0, self.nx as i64 - 1) as usize;
        let j = j.clamp(0, self.ny as i64 - 1) as usize;
        j * self.nx + i
    }

    fn cell_members(&self, c: usize) -> &[u32] {
        &self.members[self.starts[c] as usize..self.starts[c + 1] as usize]
    }

    /// Calls `f(j)` for every indexed particle with `dist(point, x_j) ≤ range`.
    pub fn for_each_near<F: FnMut(usize)>(
        &self,
        particles: &[MarkedParticle],
        point: &Point,
        range: f64,
        mut f: F,
    ) {
        let reach = (range / self.cell).ceil() as i64;
        let (ci, cj) = self.coords(point);
        let i0 = (ci - reach).max(0);
        let i1 = (ci + reach).min(self.nx as i64 - 1);
        let j0 = (cj - reach).max(0);
        let j1 = (cj + reach).min(self.ny as i64 - 1);
        if i0 > i1 || j0 > j1 {
            return;
        }
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &m in self.cell_members(j as usize * self.nx + i as usize) {
                    let m = m as usize;
                    if particles[m].position.dist(point) <= range {
                        f(m);
                    }
                }
            }
        }
    }

    /// Calls `f(i, j)` with `i < j` for every indexed pair at distance `≤ range`.
    pub fn for_each_pair<F: FnMut(usize, usize)>(
        &self,
        particles: &[MarkedParticle],
        range: f64,
        mut f: F,
    ) {
        for (i, p) in particles.iter().enumerate() {
            self.for_each_near(particles, &p.position, range, |j| {
                if j > i {
                    f(i, j);
                }
            });
        }
    }
}

/// Mutable cell list over a fixed rectangle, for the sampler.
#[derive(Debug, Clone)]
pub(crate) struct DynamicGrid {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
    /// For each particle id: (cell, slot within the cell).
    slots: Vec<(u32, u32)>,
}

impl DynamicGrid {
    pub fn new(lo: Point, hi: Point, cell: f64) -> Self {
        let extent = (hi.x - lo.x).max(hi.y - lo.y);
        let cell = cell.max(extent / MAX_CELLS_PER_AXIS as f64).max(1e-9);
        let nx = ((hi.x - lo.x) / cell).ceil().max(1.0) as usize;
        let ny = ((hi.y - lo.y) / cell).ceil().max(1.0) as usize;
        DynamicGrid {
            origin: lo,
            cell,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
            slots: Vec::new(),
        }
    }

    #[inline]
    fn coords(&self, p: &Point) -> (i64, i64) {
        (
            (((p.x - self.origin.x) / self.cell).floor() as i64).clamp(0, self.nx as i64 - 1),
            (((p.y - self.origin.y) / self.cell).floor() as i64).clamp(0, self.ny as i64 - 1),
        )
    }

    /// Registers the particle with the next id.
    pub fn push(&mut self, p: &Point) {
        let (i, j) = self.coords(p);
        let c = j as usize * self.nx + i as usize;
        let id = self.slots.len() as u32;
        self.slots.push((c as u32, self.cells[c].len() as u32));
        self.cells[c].push(id);
    }

    fn detach(&mut self, id: usize) {
        let (c, s) = self.slots[id];
        let cell = &mut self.cells[c as usize];
        cell.swap_remove(s as usize);
        if let Some(&moved) = cell.get(s as usize) {
            self.slots[moved as usize].1 = s;
        }
    }

    /// Mirrors `Vec::swap_remove(id)` on the particle list.
    pub fn swap_remove(&mut self, id: usize) {
        self.detach(id);
        let last = self.slots.len() - 1;
        if id != last {
            let (c, s) = self.slots[last];
            self.cells[c as usize][s as usize] = id as u32;
            self.slots[id] = (c, s);
        }
        self.slots.pop();
    }

    pub fn relocate(&mut self, id: usize, to: &Point) {
        let (i, j) = self.coords(to);
        let c = j as usize * self.nx + i as usize;
        if self.slots[id].0 as usize == c {
            return;
        }
        self.detach(id);
        self.slots[id] = (c as u32, self.cells[c].len() as u32);
        self.cells[c].push(id as u32);
    }

    pub fn for_each_near<F: FnMut(usize)>(
        &self,
        particles: &[MarkedParticle],
        point: &Point,
        range: f64,
        mut f: F,
    ) {
        let reach = (range / self.cell).ceil() as i64;
        let (ci, cj) = self.coords(point);
        let i0 = (ci - reach).max(0);
        let i1 = (ci + reach).min(self.nx as i64 - 1);
        let j0 = (cj - reach).max(0);
        let j1 = (cj + reach).min(self.ny as i64 - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &m in &self.cells[j as usize * self.nx + i as usize] {
                    let m = m as usize;
                    if particles[m].position.dist(point) <= range {
                        f(m);
                    }
                }
            }
        }
    }
}
