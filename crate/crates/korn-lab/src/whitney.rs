//! Whitney-type decomposition of a raster domain into dyadic cubes whose
//! size is comparable to their distance from the boundary, plus the
//! smoothened cubes and bridge cubes built on top of them.
//!
//! A dyadic box is accepted as soon as it is fully occupied and satisfies
//! `3 * diam(Q) <= dist(Q, boundary)`; rejected boxes are subdivided. The
//! construction then guarantees `dist <= 8 * diam` for every accepted cube
//! and a side ratio of at most 2 between touching cubes. Boxes are never
//! refined below 4 grid cells per side, so cells close to the boundary
//! remain uncovered; they are reported as the residual.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::GridDomain;

/// Cubes are never smaller than this many grid cells per side.
pub const MIN_SIDE_CELLS: usize = 4;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WhitneyCube {
    /// Subdivision depth from the root box.
    pub level: u32,
    /// Low corner in grid cell coordinates.
    pub cell_lo: [usize; 3],
    /// Side length in grid cells (a power of two, >= 4).
    pub side_cells: usize,
    /// Physical low corner.
    pub lo: [f64; 3],
    /// Physical side length.
    pub side: f64,
    /// Exact Euclidean distance from the closed box to the boundary faces.
    pub dist: f64,
    /// The squared distance as computed during acceptance; exact checks
    /// compare against this to avoid square-root rounding.
    pub dist2: f64,
}

impl WhitneyCube {
    #[inline]
    pub fn diam(&self, dim: usize) -> f64 {
        self.side * (dim as f64).sqrt()
    }

    #[inline]
    pub fn center(&self, dim: usize) -> [f64; 3] {
        let mut c = [0.0; 3];
        for a in 0..dim {
            c[a] = self.lo[a] + 0.5 * self.side;
        }
        c
    }

    #[inline]
    fn cell_hi(&self, a: usize) -> usize {
        self.cell_lo[a] + self.side_cells
    }
}

#[derive(Clone, Debug)]
pub struct WhitneyDecomposition {
    pub cubes: Vec<WhitneyCube>,
    /// For each occupied cell rank: index of the covering cube, or -1.
    pub cell_cube: Vec<i32>,
    pub covered_cells: usize,
    pub total_cells: usize,
    /// Side of the root box in physical units.
    pub root_side: f64,
}

impl WhitneyDecomposition {
    pub fn residual_cells(&self) -> usize {
        self.total_cells - self.covered_cells
    }

    /// Fraction of occupied cells not covered by any cube.
    pub fn residual_fraction(&self) -> f64 {
        self.residual_cells() as f64 / self.total_cells as f64
    }

    /// Ranks of the cells covered by cube `id`, ascending.
    pub fn cube_cells(&self, dom: &GridDomain, id: usize) -> Vec<u32> {
        let q = &self.cubes[id];
        let mut out = Vec::with_capacity(q.side_cells.pow(dom.dim as u32));
        let zr = if dom.dim == 3 { q.cell_lo[2]..q.cell_hi(2) } else { 0..1 };
        for z in zr {
            for y in q.cell_lo[1]..q.cell_hi(1) {
                for x in q.cell_lo[0]..q.cell_hi(0) {
                    let r = self
                        .cell_cube
                        .get(dom.rank_at([x, y, z]).expect("cube cell occupied"))
                        .copied();
                    debug_assert_eq!(r, Some(id as i32));
                    out.push(dom.rank_at([x, y, z]).unwrap() as u32);
                }
            }
        }
        out
    }

    /// Pairs of cubes whose closures intersect (faces, edges, or corners),
    /// each pair once with the smaller index first.
    pub fn touching_pairs(&self, dom: &GridDomain) -> Vec<(u32, u32)> {
        self.adjacency(dom).touching
    }

    /// Pairs of cubes sharing a boundary face portion of positive area,
    /// each pair once with the smaller index first.
    pub fn face_pairs(&self, dom: &GridDomain) -> Vec<(u32, u32)> {
        self.adjacency(dom).face
    }

    fn adjacency(&self, dom: &GridDomain) -> Adjacency {
        use std::collections::BTreeSet;
        let mut touching = BTreeSet::new();
        let mut face = BTreeSet::new();
        for (i, q) in self.cubes.iter().enumerate() {
            // Scan the one-cell shell around the cube for other cubes.
            let mut seen = BTreeSet::new();
            let lo: Vec<isize> = (0..dom.dim).map(|a| q.cell_lo[a] as isize - 1).collect();
            let hi: Vec<isize> = (0..dom.dim).map(|a| q.cell_hi(a) as isize).collect();
            let zr = if dom.dim == 3 { lo[2]..=hi[2] } else { 0..=0 };
            for z in zr {
                if dom.dim == 3 && (z < 0 || z as usize >= dom.ext[2]) {
                    continue;
                }
                let z_shell = dom.dim == 3 && (z == lo[2] || z == hi[2]);
                for y in lo[1]..=hi[1] {
                    if y < 0 || y as usize >= dom.ext[1] {
                        continue;
                    }
                    let y_shell = y == lo[1] || y == hi[1];
                    let xs: Vec<isize> = if z_shell || y_shell {
                        (lo[0]..=hi[0]).collect()
                    } else {
                        vec![lo[0], hi[0]]
                    };
                    for x in xs {
                        if x < 0 || x as usize >= dom.ext[0] {
                            continue;
                        }
                        if let Some(r) = dom.rank_at([x as usize, y as usize, z as usize]) {
                            let c = self.cell_cube[r];
                            if c >= 0 && c as usize != i {
                                seen.insert(c as usize);
                            }
                        }
                    }
                }
            }
            for j in seen {
                let (a, b) = (i.min(j) as u32, i.max(j) as u32);
                let widths = overlap_widths(&self.cubes[a as usize], &self.cubes[b as usize], dom.dim);
                let Some(widths) = widths else { continue };
                touching.insert((a, b));
                let zero_axes = widths.iter().filter(|&&w| w == 0).count();
                if zero_axes == 1 {
                    face.insert((a, b));
                }
            }
        }
        Adjacency {
            touching: touching.into_iter().collect(),
            face: face.into_iter().collect(),
        }
    }

    /// Check every structural guarantee and measure the residual.
    pub fn validate(&self, dom: &GridDomain) -> WhitneyReport {
        let dim = dom.dim;
        let mut low = 0usize;
        let mut high = 0usize;
        let mut min_ratio = f64::INFINITY;
        let mut max_ratio: f64 = 0.0;
        for q in &self.cubes {
            let ratio = q.dist / q.diam(dim);
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
            // Same squared expressions as the acceptance test, so the
            // lower check is exact; the upper bound is strict in exact
            // arithmetic and gets a relative epsilon.
            let diam2 = q.side * q.side * dim as f64;
            if 9.0 * diam2 > q.dist2 {
                low += 1;
            }
            if q.dist2 > 64.0 * diam2 * (1.0 + 1e-12) {
                high += 1;
            }
        }
        let touching = self.touching_pairs(dom);
        let ratio_violations = touching
            .iter()
            .filter(|&&(a, b)| {
                let (sa, sb) = (
                    self.cubes[a as usize].side_cells,
                    self.cubes[b as usize].side_cells,
                );
                sa.max(sb) > 2 * sa.min(sb)
            })
            .count();
        WhitneyReport {
            n_cubes: self.cubes.len(),
            total_cells: self.total_cells,
            covered_cells: self.covered_cells,
            residual_fraction: self.residual_fraction(),
            dist_violations_low: low,
            dist_violations_high: high,
            min_dist_ratio: min_ratio,
            max_dist_ratio: max_ratio,
            touching_pairs: touching.len(),
            side_ratio_violations: ratio_violations,
        }
    }
}

struct Adjacency {
    touching: Vec<(u32, u32)>,
    face: Vec<(u32, u32)>,
}

/// Per-axis widths of the closure intersection in cell units, or None if
/// the closures are disjoint.
fn overlap_widths(a: &WhitneyCube, b: &WhitneyCube, dim: usize) -> Option<Vec<isize>> {
    let mut widths = Vec::with_capacity(dim);
    for ax in 0..dim {
        let lo = a.cell_lo[ax].max(b.cell_lo[ax]) as isize;
        let hi = (a.cell_hi(ax)).min(b.cell_hi(ax)) as isize;
        if hi < lo {
            return None;
        }
        widths.push(hi - lo);
    }
    Some(widths)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WhitneyReport {
    pub n_cubes: usize,
    pub total_cells: usize,
    pub covered_cells: usize,
    pub residual_fraction: f64,
    /// Cubes with dist < 3 * diam (must be 0).
    pub dist_violations_low: usize,
    /// Cubes with dist > 8 * diam (must be 0).
    pub dist_violations_high: usize,
    pub min_dist_ratio: f64,
    pub max_dist_ratio: f64,
    pub touching_pairs: usize,
    /// Touching pairs with side ratio above 2 (must be 0).
    pub side_ratio_violations: usize,
}

impl WhitneyReport {
    /// All hard guarantees hold (says nothing about the residual).
    pub fn is_valid(&self) -> bool {
        self.dist_violations_low == 0
            && self.dist_violations_high == 0
            && self.side_ratio_violations == 0
    }
}

/// Inclusion-exclusion table for counting occupied cells in boxes.
struct OccupancyPrefix {
    ext: [usize; 3],
    pre: Vec<u64>,
}

impl OccupancyPrefix {
    fn build(dom: &GridDomain) -> Self {
        let e = dom.ext;
        let (nx, ny, nz) = (e[0] + 1, e[1] + 1, e[2] + 1);
        let idx = move |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
        let mut pre = vec![0u64; nx * ny * nz];
        for z in 1..nz {
            for y in 1..ny {
                for x in 1..nx {
                    let occ = dom.is_occupied([x - 1, y - 1, z - 1]) as u64;
                    pre[idx(x, y, z)] = occ
                        + pre[idx(x - 1, y, z)]
                        + pre[idx(x, y - 1, z)]
                        + pre[idx(x, y, z - 1)]
                        - pre[idx(x - 1, y - 1, z)]
                        - pre[idx(x - 1, y, z - 1)]
                        - pre[idx(x, y - 1, z - 1)]
                        + pre[idx(x - 1, y - 1, z - 1)];
                }
            }
        }
        OccupancyPrefix { ext: e, pre }
    }

    /// Occupied cells in the half-open cell range, clipped to the grid.
    fn count(&self, lo: [usize; 3], hi: [usize; 3]) -> u64 {
        let (nx, ny) = (self.ext[0] + 1, self.ext[1] + 1);
        let idx = move |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
        let l: Vec<usize> = (0..3).map(|a| lo[a].min(self.ext[a])).collect();
        let h: Vec<usize> = (0..3).map(|a| hi[a].min(self.ext[a])).collect();
        if (0..3).any(|a| h[a] <= l[a]) {
            return 0;
        }
        let mut acc = 0i64;
        for cz in 0..2 {
            for cy in 0..2 {
                for cx in 0..2 {
                    let sign = if (cx + cy + cz) % 2 == 0 { 1 } else { -1 };
                    let x = if cx == 0 { h[0] } else { l[0] };
                    let y = if cy == 0 { h[1] } else { l[1] };
                    let z = if cz == 0 { h[2] } else { l[2] };
                    acc += sign * self.pre[idx(x, y, z)] as i64;
                }
            }
        }
        acc as u64
    }
}

/// Decompose a domain into Whitney cubes. Errors with `NoCubeAccepted` if
/// the domain is too small relative to the grid for even one cube.
pub fn decompose(dom: &GridDomain) -> Result<WhitneyDecomposition> {
    let dim = dom.dim;
    let pre = OccupancyPrefix::build(dom);
    let max_ext = (0..dim).map(|a| dom.ext[a]).max().unwrap();
    let root_cells = max_ext.next_power_of_two().max(MIN_SIDE_CELLS);
    let mut cubes = Vec::new();
    let mut stack = vec![(0u32, [0usize; 3], root_cells)];
    while let Some((level, cell_lo, side_cells)) = stack.pop() {
        let hi = {
            let mut h = [1usize; 3];
            for a in 0..dim {
                h[a] = cell_lo[a] + side_cells;
            }
            for a in dim..3 {
                h[a] = 1;
            }
            h
        };
        let lo3 = {
            let mut l = [0usize; 3];
            l[..dim].copy_from_slice(&cell_lo[..dim]);
            l
        };
        let occupied = pre.count(lo3, hi);
        if occupied == 0 {
            continue;
        }
        let full = occupied == (side_cells as u64).pow(dim as u32)
            && (0..dim).all(|a| cell_lo[a] + side_cells <= dom.ext[a]);
        if full && side_cells >= MIN_SIDE_CELLS {
            let mut blo = [0.0f64; 3];
            let mut bhi = [0.0f64; 3];
            for a in 0..dim {
                blo[a] = dom.lo[a] + cell_lo[a] as f64 * dom.h;
                bhi[a] = blo[a] + side_cells as f64 * dom.h;
            }
            let dist2 = dom.box_boundary_dist2(&blo[..dim], &bhi[..dim]);
            let side = side_cells as f64 * dom.h;
            let diam2 = side * side * dim as f64;
            if 9.0 * diam2 <= dist2 {
                cubes.push(WhitneyCube {
                    level,
                    cell_lo: lo3,
                    side_cells,
                    lo: blo,
                    side,
                    dist: dist2.sqrt(),
                    dist2,
                });
                continue;
            }
        }
        if side_cells >= 2 * MIN_SIDE_CELLS {
            let half = side_cells / 2;
            // Push in reverse so children pop in x-fastest order.
            let n_children = 1usize << dim;
            for c in (0..n_children).rev() {
                let mut child = lo3;
                for a in 0..dim {
                    if c >> a & 1 == 1 {
                        child[a] += half;
                    }
                }
                stack.push((level + 1, child, half));
            }
        }
    }
    if cubes.is_empty() {
        return Err(Error::NoCubeAccepted);
    }

    let mut cell_cube = vec![-1i32; dom.n_cells()];
    let mut covered = 0usize;
    for (id, q) in cubes.iter().enumerate() {
        let zr = if dim == 3 { q.cell_lo[2]..q.cell_hi(2) } else { 0..1 };
        for z in zr {
            for y in q.cell_lo[1]..q.cell_hi(1) {
                for x in q.cell_lo[0]..q.cell_hi(0) {
                    let r = dom
                        .rank_at([x, y, z])
                        .expect("accepted cube contains an unoccupied cell");
                    assert_eq!(cell_cube[r], -1, "cubes overlap");
                    cell_cube[r] = id as i32;
                    covered += 1;
                }
            }
        }
    }
    Ok(WhitneyDecomposition {
        cubes,
        cell_cube,
        covered_cells: covered,
        total_cells: dom.n_cells(),
        root_side: root_cells as f64 * dom.h,
    })
}

/// Smallest even integer N with (6/5)^N >= dim, the exponent used by the
/// smoothened cubes.
pub fn choose_smoothing_exponent(dim: usize) -> u32 {
    let min = (dim as f64).ln() / (6f64 / 5.0).ln();
    let mut n = min.ceil() as u32;
    if n % 2 == 1 {
        n += 1;
    }
    n.max(2)
}

/// A smoothened cube: the ball of radius (3/4) * side in the l^N norm
/// around the cube center. It contains the cube and is contained in the
/// concentric 3/2-dilated cube.
#[derive(Clone, Copy, Debug)]
pub struct SmoothCube {
    pub dim: usize,
    pub center: [f64; 3],
    /// (3/4) * side of the underlying Whitney cube.
    pub radius: f64,
    /// The even norm exponent N.
    pub exponent: u32,
}

impl SmoothCube {
    /// The l^N distance from the center (N even, so no absolute values).
    #[inline]
    pub fn norm(&self, p: &[f64]) -> f64 {
        let n = self.exponent as i32;
        let mut acc = 0.0;
        for a in 0..self.dim {
            acc += (p[a] - self.center[a]).powi(n);
        }
        acc.powf(1.0 / n as f64)
    }

    #[inline]
    pub fn contains(&self, p: &[f64]) -> bool {
        self.norm(p) <= self.radius
    }
}

pub fn smooth_cube(cube: &WhitneyCube, dim: usize) -> SmoothCube {
    SmoothCube {
        dim,
        center: cube.center(dim),
        radius: 0.75 * cube.side,
        exponent: choose_smoothing_exponent(dim),
    }
}

/// Ranks of the occupied cells whose center lies in the smoothened cube.
pub fn smooth_cube_cells(dom: &GridDomain, u: &SmoothCube) -> Vec<u32> {
    let mut out = Vec::new();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        if a < dom.dim {
            let l = ((u.center[a] - u.radius - dom.lo[a]) / dom.h).floor();
            let h = ((u.center[a] + u.radius - dom.lo[a]) / dom.h).ceil();
            lo[a] = l.max(0.0) as usize;
            hi[a] = (h.max(0.0) as usize).min(dom.ext[a]);
        } else {
            lo[a] = 0;
            hi[a] = 1;
        }
    }
    for z in lo[2]..hi[2] {
        for y in lo[1]..hi[1] {
            for x in lo[0]..hi[0] {
                if let Some(r) = dom.rank_at([x, y, z]) {
                    if u.contains(dom.center(r)) {
                        out.push(r as u32);
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// A bridge cube: a small cube centered at the midpoint of the shared face
/// of two face-adjacent Whitney cubes, with side min(side_a, side_b) / 4.
/// It lies inside both smoothened cubes; `margins` records the slack of
/// the triangle-inequality containment check for each of the two.
#[derive(Clone, Copy, Debug)]
pub struct BridgeCube {
    pub dim: usize,
    pub center: [f64; 3],
    /// Half of the bridge side: min(side) / 8.
    pub half: f64,
    pub margins: [f64; 2],
}

pub fn bridge_cube(a: &WhitneyCube, b: &WhitneyCube, dim: usize) -> Result<BridgeCube> {
    let widths = overlap_widths(a, b, dim).ok_or(Error::NotFaceNeighbors(0, 1))?;
    let zero_axes: Vec<usize> = (0..dim).filter(|&ax| widths[ax] == 0).collect();
    if zero_axes.len() != 1 {
        return Err(Error::NotFaceNeighbors(0, 1));
    }
    let normal = zero_axes[0];
    let mut center = [0.0f64; 3];
    for ax in 0..dim {
        let lo = a.lo[ax].max(b.lo[ax]);
        let hi = (a.lo[ax] + a.side).min(b.lo[ax] + b.side);
        center[ax] = 0.5 * (lo + hi); // on the normal axis lo == hi
    }
    debug_assert!((center[normal] - a.lo[normal]).abs() < 1e-9 || normal < dim);
    let half = a.side.min(b.side) / 8.0;
    let n_exp = choose_smoothing_exponent(dim);
    let corner = half * (dim as f64).powf(1.0 / n_exp as f64);
    let mut margins = [0.0f64; 2];
    for (k, q) in [a, b].into_iter().enumerate() {
        let u = smooth_cube(q, dim);
        margins[k] = u.radius - (u.norm(&center[..dim]) + corner);
        if margins[k] < -1e-12 * q.side {
            return Err(Error::InvalidParameter(format!(
                "bridge cube escapes smoothened cube {k} by {}",
                -margins[k]
            )));
        }
    }
    Ok(BridgeCube { dim, center, half, margins })
}

/// Ranks of the occupied cells whose center lies strictly inside the
/// bridge cube. Cell centers exactly on the bridge boundary (which happens
/// when the smaller cube has the minimal 4-cell side) are excluded, so
/// such bridges are empty.
pub fn bridge_cells(dom: &GridDomain, bridge: &BridgeCube) -> Vec<u32> {
    let mut out = Vec::new();
    let tol = 1e-9 * dom.h;
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        if a < dom.dim {
            let l = ((bridge.center[a] - bridge.half - dom.lo[a]) / dom.h).floor() - 1.0;
            let h = ((bridge.center[a] + bridge.half - dom.lo[a]) / dom.h).ceil() + 1.0;
            lo[a] = l.max(0.0) as usize;
            hi[a] = (h.max(0.0) as usize).min(dom.ext[a]);
        } else {
            lo[a] = 0;
            hi[a] = 1;
        }
    }
    for z in lo[2]..hi[2] {
        for y in lo[1]..hi[1] {
            for x in lo[0]..hi[0] {
                if let Some(r) = dom.rank_at([x, y, z]) {
                    let p = dom.center(r);
                    let inside = (0..dom.dim)
                        .all(|a| (p[a] - bridge.center[a]).abs() < bridge.half - tol);
                    if inside {
                        out.push(r as u32);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, DomainKind, DomainSpec};

    fn dom(kind: DomainKind, resolution: u32) -> GridDomain {
        build_domain(&DomainSpec { kind, resolution, depth: None }).unwrap()
    }

    #[test]
    fn unit_square_res64_satisfies_all_guarantees() {
        let d = dom(DomainKind::UnitSquare, 64);
        let dec = decompose(&d).unwrap();
        let rep = dec.validate(&d);
        assert!(rep.n_cubes > 0);
        assert_eq!(rep.dist_violations_low, 0);
        assert_eq!(rep.dist_violations_high, 0);
        assert_eq!(rep.side_ratio_violations, 0);
        assert!(rep.min_dist_ratio >= 3.0 - 1e-12);
        assert!(rep.max_dist_ratio <= 8.0 + 1e-12);
        assert!(rep.residual_fraction > 0.0 && rep.residual_fraction < 1.0);
    }

    #[test]
    fn l_shape_and_slit_res64_satisfy_all_guarantees() {
        for kind in [DomainKind::LShape, DomainKind::SlitSquare] {
            let d = dom(kind, 64);
            let dec = decompose(&d).unwrap();
            let rep = dec.validate(&d);
            assert!(rep.is_valid(), "{kind:?}: {rep:?}");
            assert!(rep.n_cubes > 4, "{kind:?}");
        }
    }

    #[test]
    fn sides_are_dyadic_multiples_of_four_cells() {
        let d = dom(DomainKind::LShape, 64);
        let dec = decompose(&d).unwrap();
        for q in &dec.cubes {
            assert!(q.side_cells >= MIN_SIDE_CELLS);
            assert!(q.side_cells.is_power_of_two());
            // Aligned to its own size on the cell lattice.
            for a in 0..d.dim {
                assert_eq!(q.cell_lo[a] % q.side_cells, 0);
            }
        }
    }

    #[test]
    fn cubes_partition_the_covered_region() {
        let d = dom(DomainKind::SlitSquare, 64);
        let dec = decompose(&d).unwrap();
        let mut seen = vec![false; d.n_cells()];
        let mut covered = 0;
        for id in 0..dec.cubes.len() {
            for r in dec.cube_cells(&d, id) {
                assert!(!seen[r as usize], "cell covered twice");
                seen[r as usize] = true;
                covered += 1;
            }
        }
        assert_eq!(covered, dec.covered_cells);
        assert_eq!(
            dec.cell_cube.iter().filter(|&&c| c >= 0).count(),
            dec.covered_cells
        );
    }

    #[test]
    fn too_coarse_grids_accept_no_cube() {
        // At 32 cells per unit the unit square's center is 16h from the
        // boundary, below the 3 * sqrt(2) * 4h ~ 17h a minimal cube needs.
        let d = dom(DomainKind::UnitSquare, 32);
        assert!(matches!(decompose(&d), Err(Error::NoCubeAccepted)));
    }

    #[test]
    fn decomposition_is_deterministic() {
        let d = dom(DomainKind::KochPrefractal, 64);
        let a = decompose(&d).unwrap();
        let b = decompose(&d).unwrap();
        assert_eq!(a.cubes.len(), b.cubes.len());
        for (x, y) in a.cubes.iter().zip(&b.cubes) {
            assert_eq!(x.cell_lo, y.cell_lo);
            assert_eq!(x.side_cells, y.side_cells);
            assert_eq!(x.dist.to_bits(), y.dist.to_bits());
        }
    }

    #[test]
    fn smoothing_exponent_values() {
        assert_eq!(choose_smoothing_exponent(2), 4);
        assert_eq!(choose_smoothing_exponent(3), 8);
        for dim in [2usize, 3] {
            let n = choose_smoothing_exponent(dim);
            assert_eq!(n % 2, 0);
            assert!((1.2f64).powi(n as i32) >= dim as f64);
            // Minimality: the next smaller even exponent fails.
            if n > 2 {
                assert!((1.2f64).powi(n as i32 - 2) < dim as f64);
            }
        }
    }

    fn unit_cube_at(cell_lo: [usize; 3], side_cells: usize, h: f64) -> WhitneyCube {
        let mut lo = [0.0; 3];
        for a in 0..3 {
            lo[a] = cell_lo[a] as f64 * h;
        }
        WhitneyCube {
            level: 0,
            cell_lo,
            side_cells,
            lo,
            side: side_cells as f64 * h,
            dist: f64::NAN,
            dist2: f64::NAN,
        }
    }

    #[test]
    fn smooth_cube_membership_thresholds() {
        // 2D, N = 4, unit side centered at (0.5, 0.5): the diagonal
        // threshold is 0.75 / 2^(1/4) = 0.630672... from the center.
        let q = unit_cube_at([0, 0, 0], 8, 0.125);
        let u = smooth_cube(&q, 2);
        assert_eq!(u.exponent, 4);
        assert!((u.radius - 0.75).abs() < 1e-15);
        let t_in = 0.6306;
        let t_out = 0.6308;
        assert!(u.contains(&[0.5 + t_in, 0.5 + t_in]));
        assert!(!u.contains(&[0.5 + t_out, 0.5 + t_out]));
        // Axis threshold is the radius itself.
        assert!(u.contains(&[0.5 + 0.749, 0.5]));
        assert!(!u.contains(&[0.5 + 0.751, 0.5]));
    }

    #[test]
    fn smooth_cube_nests_between_cube_and_dilated_cube() {
        for dim in [2usize, 3] {
            let q = unit_cube_at([0, 0, 0], 8, 0.125);
            let u = smooth_cube(&q, dim);
            // Cube corners are members.
            for mask in 0..(1u32 << dim) {
                let mut p = [0.5f64; 3];
                for a in 0..dim {
                    p[a] += if mask >> a & 1 == 1 { 0.5 } else { -0.5 };
                }
                assert!(u.contains(&p[..dim]), "dim {dim} corner {p:?}");
            }
            // Members stay inside the 3/2-dilated cube.
            for k in 0..200 {
                let t = k as f64 / 199.0;
                let mut p = [0.5f64; 3];
                p[0] = 0.5 + (2.0 * t - 1.0) * 0.76;
                if u.contains(&p[..dim]) {
                    assert!(p[0] - 0.5 <= 0.75 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn bridge_between_equal_cubes_has_known_margin() {
        let h = 0.125;
        let a = unit_cube_at([0, 0, 0], 8, h);
        let b = unit_cube_at([8, 0, 0], 8, h);
        let br = bridge_cube(&a, &b, 2).unwrap();
        assert!((br.center[0] - 1.0).abs() < 1e-15);
        assert!((br.center[1] - 0.5).abs() < 1e-15);
        assert!((br.half - 0.125).abs() < 1e-15);
        // Margin = 0.75 - (0.5 + 0.125 * 2^(1/4)) for both cubes.
        let expect = 0.75 - (0.5 + 0.125 * 2f64.powf(0.25));
        for m in br.margins {
            assert!((m - expect).abs() < 1e-12, "margin {m} vs {expect}");
        }
    }

    #[test]
    fn bridge_with_half_size_neighbor_stays_inside_both() {
        let h = 0.125;
        let a = unit_cube_at([0, 0, 0], 8, h); // side 1
        let b = unit_cube_at([8, 4, 0], 4, h); // side 0.5, top corner contact
        let br = bridge_cube(&a, &b, 2).unwrap();
        assert!((br.center[0] - 1.0).abs() < 1e-15);
        assert!((br.center[1] - 0.75).abs() < 1e-15);
        assert!((br.half - 0.0625).abs() < 1e-15);
        assert!(br.margins.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn corner_contact_is_not_a_face_pair() {
        let h = 0.125;
        let a = unit_cube_at([0, 0, 0], 8, h);
        let c = unit_cube_at([8, 8, 0], 8, h);
        assert!(matches!(
            bridge_cube(&a, &c, 2),
            Err(Error::NotFaceNeighbors(..))
        ));
    }

    #[test]
    fn bridge_cells_on_a_fine_grid() {
        // Two side-8 cubes on a 64-resolution square: bridge side 2h holds
        // a 2x2 block of cells.
        let d = dom(DomainKind::UnitSquare, 64);
        let a = unit_cube_at([16, 24, 0], 8, d.h);
        let b = unit_cube_at([24, 24, 0], 8, d.h);
        let br = bridge_cube(&a, &b, 2).unwrap();
        let cells = bridge_cells(&d, &br);
        assert_eq!(cells.len(), 4);
        for &r in &cells {
            let p = d.center(r as usize);
            assert!((p[0] - br.center[0]).abs() < br.half);
            assert!((p[1] - br.center[1]).abs() < br.half);
        }
    }

    #[test]
    fn bridges_of_minimal_cubes_are_empty() {
        // Side-4 cubes give bridges of side h centered on a cell boundary;
        // no cell center lies strictly inside.
        let d = dom(DomainKind::UnitSquare, 64);
        let a = unit_cube_at([16, 24, 0], 4, d.h);
        let b = unit_cube_at([20, 24, 0], 4, d.h);
        let br = bridge_cube(&a, &b, 2).unwrap();
        assert!(bridge_cells(&d, &br).is_empty());
    }

    #[test]
    fn smooth_cube_cells_cover_cube_cells_and_little_more() {
        let d = dom(DomainKind::UnitSquare, 64);
        let dec = decompose(&d).unwrap();
        let id = dec
            .cubes
            .iter()
            .enumerate()
            .max_by_key(|(_, q)| q.side_cells)
            .unwrap()
            .0;
        let q = &dec.cubes[id];
        let u = smooth_cube(q, d.dim);
        let ucells = smooth_cube_cells(&d, &u);
        let qcells = dec.cube_cells(&d, id);
        for r in &qcells {
            assert!(ucells.binary_search(r).is_ok(), "cube cell outside its smooth cube");
        }
        assert!(ucells.len() > qcells.len());
        // All member centers lie in the 3/2-dilated cube.
        for &r in &ucells {
            let p = d.center(r as usize);
            for a in 0..d.dim {
                let off = (p[a] - u.center[a]).abs();
                assert!(off <= 0.75 * q.side + 1e-12);
            }
        }
    }

    #[test]
    fn koch_and_cube_domains_decompose_validly() {
        let k = build_domain(&DomainSpec {
            kind: DomainKind::KochPrefractal,
            resolution: 64,
            depth: Some(3),
        })
        .unwrap();
        let dk = decompose(&k).unwrap();
        assert!(dk.validate(&k).is_valid());

        let c = dom(DomainKind::Cube3d, 32);
        // 3D minimal cube needs dist >= 12h * sqrt(3) ~ 20.8h but the cube
        // center is only 16h deep: nothing is accepted at this resolution.
        assert!(matches!(decompose(&c), Err(Error::NoCubeAccepted)));

        let c64 = dom(DomainKind::Cube3d, 64);
        let dc = decompose(&c64).unwrap();
        let rep = dc.validate(&c64);
        assert!(rep.is_valid(), "{rep:?}");
    }
}
