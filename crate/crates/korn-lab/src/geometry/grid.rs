use serde::{Deserialize, Serialize};

use super::assouad::PointCloud;
use super::domains;
use crate::error::{Error, Result};

pub const MIN_RESOLUTION: u32 = 8;
pub const MAX_KOCH_DEPTH: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    UnitSquare,
    LShape,
    SlitSquare,
    KochPrefractal,
    Cube3d,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            DomainKind::UnitSquare => "unit-square",
            DomainKind::LShape => "l-shape",
            DomainKind::SlitSquare => "slit-square",
            DomainKind::KochPrefractal => "koch-prefractal",
            DomainKind::Cube3d => "cube-3d",
        }
    }
}

/// What to rasterize: a bundled domain kind, the cells-per-unit-length
/// resolution, and for the Koch prefractal its construction depth.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub resolution: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
}

/// An axis-aligned boundary face: a box with one collapsed axis. In 2D a
/// segment, in 3D a square of side `h`.
#[derive(Clone, Copy, Debug)]
pub struct Face {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Face {
    /// Squared Euclidean distance from a point to this face.
    #[inline]
    pub fn dist2(&self, p: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for a in 0..p.len() {
            let g = (self.lo[a] - p[a]).max(p[a] - self.hi[a]).max(0.0);
            d2 += g * g;
        }
        d2
    }

    /// Squared distance from an axis-aligned box `[blo, bhi]` to this face.
    #[inline]
    pub fn box_dist2(&self, blo: &[f64], bhi: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for a in 0..blo.len() {
            let g = (self.lo[a] - bhi[a]).max(blo[a] - self.hi[a]).max(0.0);
            d2 += g * g;
        }
        d2
    }
}

/// A raster domain: occupied cells of a regular grid, with exact distances
/// to the discretized boundary.
///
/// Occupancy is decided by cell centers. The boundary is the set of faces
/// between occupied and non-occupied (or out-of-grid) cells; for the slit
/// square, cell adjacency is additionally cut across the slit segment and
/// the shared faces along it become (double-sided) boundary faces, so the
/// slit keeps zero width and the cells hugging it stay occupied with
/// `delta = h/2`. Builds are pure functions of the spec; if rasterization
/// produces several connected components, all but the largest are dropped
/// and counted in `pruned_cells`.
#[derive(Clone, Debug)]
pub struct GridDomain {
    pub dim: usize,
    pub h: f64,
    pub lo: [f64; 3],
    pub ext: [usize; 3],
    occ: Vec<bool>,
    /// Grid linear indices of occupied cells, ascending. The position in
    /// this vector is the cell's rank, used everywhere else in the crate.
    pub cells: Vec<u32>,
    rank: Vec<i32>,
    /// Exact distance from each occupied cell center to the nearest
    /// boundary face.
    pub delta: Vec<f64>,
    /// Cell centers, flat, `dim`-strided, in rank order.
    pub centers: Vec<f64>,
    pub faces: Vec<Face>,
    face_start: Vec<u32>,
    face_ids: Vec<u32>,
    /// Adjacency-cut segment (the slit), as (x0, y0, x1, y1), horizontal.
    pub slit: Option<[f64; 4]>,
    pub spec: Option<DomainSpec>,
    pub pruned_cells: usize,
}

impl GridDomain {
    #[inline]
    pub fn grid_len(&self) -> usize {
        self.ext[0] * self.ext[1] * self.ext[2]
    }

    #[inline]
    pub fn gidx(&self, c: [usize; 3]) -> usize {
        c[0] + self.ext[0] * (c[1] + self.ext[1] * c[2])
    }

    #[inline]
    pub fn coords(&self, gidx: usize) -> [usize; 3] {
        let x = gidx % self.ext[0];
        let rest = gidx / self.ext[0];
        [x, rest % self.ext[1], rest / self.ext[1]]
    }

    #[inline]
    pub fn is_occupied(&self, c: [usize; 3]) -> bool {
        self.occ[self.gidx(c)]
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occ
    }

    /// Rank of the occupied cell at grid coordinates, if occupied.
    #[inline]
    pub fn rank_at(&self, c: [usize; 3]) -> Option<usize> {
        let r = self.rank[self.gidx(c)];
        (r >= 0).then_some(r as usize)
    }

    #[inline]
    pub fn center(&self, rank: usize) -> &[f64] {
        &self.centers[rank * self.dim..(rank + 1) * self.dim]
    }

    #[inline]
    pub fn center_of_coords(&self, c: [usize; 3]) -> [f64; 3] {
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.lo[a] + (c[a] as f64 + 0.5) * self.h;
        }
        p
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Volume of the occupied cell union.
    pub fn volume(&self) -> f64 {
        self.cells.len() as f64 * self.h.powi(self.dim as i32)
    }

    /// True if moving between the two cell centers crosses the adjacency
    /// cut (the slit segment).
    pub fn adjacency_cut(&self, a: &[f64], b: &[f64]) -> bool {
        let Some(s) = self.slit else { return false };
        let y0 = s[1];
        let (ya, yb) = (a[1] - y0, b[1] - y0);
        if ya * yb >= 0.0 {
            return false;
        }
        let t = ya / (ya - yb);
        let x = a[0] + t * (b[0] - a[0]);
        x >= s[0].min(s[2]) && x <= s[0].max(s[2])
    }

    /// Occupied face-neighbor ranks of an occupied cell, respecting the
    /// adjacency cut.
    pub fn neighbors(&self, rank: usize) -> Vec<usize> {
        let c = self.coords(self.cells[rank] as usize);
        let mut out = Vec::with_capacity(2 * self.dim);
        for a in 0..self.dim {
            for step in [-1isize, 1] {
                let v = c[a] as isize + step;
                if v < 0 || v as usize >= self.ext[a] {
                    continue;
                }
                let mut nc = c;
                nc[a] = v as usize;
                if let Some(nr) = self.rank_at(nc) {
                    if !self.adjacency_cut(self.center(rank), self.center(nr)) {
                        out.push(nr);
                    }
                }
            }
        }
        out
    }

    /// Exact squared distance from an axis-aligned box to the boundary face
    /// set, via expanding-shell search over the face buckets.
    pub fn box_boundary_dist2(&self, blo: &[f64], bhi: &[f64]) -> f64 {
        // Cell range covered by the box, clamped to the grid.
        let mut clo = [0usize; 3];
        let mut chi = [0usize; 3];
        for a in 0..self.dim {
            let lo_f = ((blo[a] - self.lo[a]) / self.h).floor();
            let hi_f = ((bhi[a] - self.lo[a]) / self.h).ceil() - 1.0;
            clo[a] = lo_f.max(0.0) as usize;
            chi[a] = (hi_f.max(0.0) as usize).min(self.ext[a] - 1);
        }
        let mut best = f64::INFINITY;
        let max_ring = (0..self.dim).map(|a| self.ext[a]).max().unwrap();
        for ring in 0..=max_ring {
            // Any face in an unvisited ring is at distance at least
            // (ring - 1) * h from the box.
            if best.is_finite() && best <= ((ring as f64 - 1.0) * self.h).powi(2) {
                break;
            }
            self.for_ring_cells(clo, chi, ring, |gidx| {
                let s = self.face_start[gidx] as usize;
                let e = self.face_start[gidx + 1] as usize;
                for &fid in &self.face_ids[s..e] {
                    let d2 = self.faces[fid as usize].box_dist2(blo, bhi);
                    if d2 < best {
                        best = d2;
                    }
                }
            });
        }
        best
    }

    /// Visit grid indices of cells at L-infinity "ring" distance exactly
    /// `ring` outside/around the cell range `[clo, chi]` (ring 0 is the
    /// range itself).
    fn for_ring_cells(
        &self,
        clo: [usize; 3],
        chi: [usize; 3],
        ring: usize,
        mut f: impl FnMut(usize),
    ) {
        let r = ring as isize;
        let lo: Vec<isize> = (0..self.dim).map(|a| clo[a] as isize - r).collect();
        let hi: Vec<isize> = (0..self.dim).map(|a| chi[a] as isize + r).collect();
        let inside = |v: isize, a: usize| v >= 0 && (v as usize) < self.ext[a];
        if ring == 0 {
            for z in lo.get(2).copied().unwrap_or(0)..=hi.get(2).copied().unwrap_or(0) {
                if self.dim == 3 && !inside(z, 2) {
                    continue;
                }
                for y in lo[1]..=hi[1] {
                    if !inside(y, 1) {
                        continue;
                    }
                    for x in lo[0]..=hi[0] {
                        if !inside(x, 0) {
                            continue;
                        }
                        f(self.gidx([x as usize, y as usize, z as usize]));
                    }
                }
            }
            return;
        }
        // Ring > 0: boundary of the inflated range. Iterate the full
        // inflated box but skip the interior quickly by jumping x.
        let zr = if self.dim == 3 { lo[2]..=hi[2] } else { 0..=0 };
        for z in zr {
            if self.dim == 3 && !inside(z, 2) {
                continue;
            }
            let z_on_shell = self.dim == 3 && (z == lo[2] || z == hi[2]);
            for y in lo[1]..=hi[1] {
                if !inside(y, 1) {
                    continue;
                }
                let y_on_shell = y == lo[1] || y == hi[1];
                if z_on_shell || y_on_shell {
                    for x in lo[0]..=hi[0] {
                        if inside(x, 0) {
                            f(self.gidx([x as usize, y as usize, z as usize]));
                        }
                    }
                } else {
                    for x in [lo[0], hi[0]] {
                        if inside(x, 0) {
                            f(self.gidx([x as usize, y as usize, z as usize]));
                        }
                    }
                }
            }
        }
    }

    /// Check structural invariants; used by tests and after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::InvalidSpec("no occupied cells".into()));
        }
        if self.delta.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidSpec(
                "boundary distance must be positive on occupied cells".into(),
            ));
        }
        Ok(())
    }
}

/// Build a raster domain from an occupancy predicate on cell centers.
///
/// `slit`, when present, must be a horizontal segment aligned with the cell
/// face grid; adjacency across it is cut and the faces along it join the
/// boundary, leaving occupancy untouched.
pub fn from_fn(
    dim: usize,
    lo: [f64; 3],
    ext: [usize; 3],
    h: f64,
    occupied: impl Fn(&[f64]) -> bool,
    slit: Option<[f64; 4]>,
    spec: Option<DomainSpec>,
) -> Result<GridDomain> {
    assert!(dim == 2 || dim == 3, "only 2D and 3D domains are supported");
    if let Some(s) = slit {
        assert_eq!(s[1], s[3], "slit segment must be horizontal");
        let k = (s[1] - lo[1]) / h;
        if (k - k.round()).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "slit height {} is not aligned with the cell face grid (h = {h})",
                s[1]
            )));
        }
    }
    let ext = [ext[0], ext[1], if dim == 3 { ext[2] } else { 1 }];
    let n_grid = ext[0] * ext[1] * ext[2];
    let mut occ = vec![false; n_grid];
    for z in 0..ext[2] {
        for y in 0..ext[1] {
            for x in 0..ext[0] {
                let c = [x, y, z];
                let gidx = c[0] + ext[0] * (c[1] + ext[1] * c[2]);
                let mut p = [0.0f64; 3];
                for a in 0..dim {
                    p[a] = lo[a] + (c[a] as f64 + 0.5) * h;
                }
                occ[gidx] = occupied(&p[..dim]);
            }
        }
    }

    let mut dom = GridDomain {
        dim,
        h,
        lo,
        ext,
        occ,
        cells: Vec::new(),
        rank: Vec::new(),
        delta: Vec::new(),
        centers: Vec::new(),
        faces: Vec::new(),
        face_start: Vec::new(),
        face_ids: Vec::new(),
        slit,
        spec,
        pruned_cells: 0,
    };
    finish_build(&mut dom)?;
    Ok(dom)
}

/// Rebuild a domain from raw occupancy (e.g. parsed from a domain file).
/// Derived data — component pruning, faces, distances — is recomputed.
pub fn from_parts(
    dim: usize,
    lo: [f64; 3],
    ext: [usize; 3],
    h: f64,
    occ: Vec<bool>,
    slit: Option<[f64; 4]>,
    spec: Option<DomainSpec>,
) -> Result<GridDomain> {
    assert!(dim == 2 || dim == 3);
    let ext = [ext[0], ext[1], if dim == 3 { ext[2] } else { 1 }];
    if occ.len() != ext[0] * ext[1] * ext[2] {
        return Err(Error::InvalidSpec(format!(
            "occupancy length {} does not match grid {:?}",
            occ.len(),
            &ext[..dim]
        )));
    }
    let mut dom = GridDomain {
        dim,
        h,
        lo,
        ext,
        occ,
        cells: Vec::new(),
        rank: Vec::new(),
        delta: Vec::new(),
        centers: Vec::new(),
        faces: Vec::new(),
        face_start: Vec::new(),
        face_ids: Vec::new(),
        slit,
        spec,
        pruned_cells: 0,
    };
    finish_build(&mut dom)?;
    Ok(dom)
}

/// Fill the derived fields: largest connected component, boundary faces,
/// face buckets, exact boundary distances.
fn finish_build(dom: &mut GridDomain) -> Result<()> {
    prune_to_largest_component(dom)?;

    // Occupied cell list and rank map.
    let n_grid = dom.grid_len();
    dom.cells = (0..n_grid as u32).filter(|&g| dom.occ[g as usize]).collect();
    dom.rank = vec![-1; n_grid];
    for (r, &g) in dom.cells.iter().enumerate() {
        dom.rank[g as usize] = r as i32;
    }
    dom.centers = Vec::with_capacity(dom.cells.len() * dom.dim);
    for &g in &dom.cells {
        let c = dom.coords(g as usize);
        let p = dom.center_of_coords(c);
        dom.centers.extend_from_slice(&p[..dom.dim]);
    }

    build_faces(dom);
    compute_delta(dom);
    dom.validate()
}

fn prune_to_largest_component(dom: &mut GridDomain) -> Result<()> {
    let n_grid = dom.grid_len();
    let mut comp = vec![0u32; n_grid]; // 0 = unvisited/unoccupied
    let mut sizes: Vec<usize> = vec![0]; // sizes[c] for component c (1-based)
    let mut stack = Vec::new();
    for start in 0..n_grid {
        if !dom.occ[start] || comp[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32;
        sizes.push(0);
        comp[start] = id;
        stack.push(start);
        while let Some(g) = stack.pop() {
            sizes[id as usize] += 1;
            let c = dom.coords(g);
            let pc = dom.center_of_coords(c);
            for a in 0..dom.dim {
                for step in [-1isize, 1] {
                    let v = c[a] as isize + step;
                    if v < 0 || v as usize >= dom.ext[a] {
                        continue;
                    }
                    let mut nc = c;
                    nc[a] = v as usize;
                    let ng = dom.gidx(nc);
                    if dom.occ[ng] && comp[ng] == 0 {
                        let pn = dom.center_of_coords(nc);
                        if !dom.adjacency_cut(&pc[..dom.dim], &pn[..dom.dim]) {
                            comp[ng] = id;
                            stack.push(ng);
                        }
                    }
                }
            }
        }
    }
    if sizes.len() <= 1 {
        return Err(Error::InvalidSpec("no occupied cells".into()));
    }
    let keep = (1..sizes.len()).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap() as u32;
    let mut pruned = 0usize;
    for g in 0..n_grid {
        if dom.occ[g] && comp[g] != keep {
            dom.occ[g] = false;
            pruned += 1;
        }
    }
    dom.pruned_cells = pruned;
    Ok(())
}

fn build_faces(dom: &mut GridDomain) {
    let n_grid = dom.grid_len();
    let mut per_cell: Vec<Vec<u32>> = vec![Vec::new(); n_grid];
    let mut faces = Vec::new();
    for &g in &dom.cells {
        let c = dom.coords(g as usize);
        let pc = dom.center_of_coords(c);
        for a in 0..dom.dim {
            for step in [-1isize, 1] {
                let v = c[a] as isize + step;
                let open = if v < 0 || v as usize >= dom.ext[a] {
                    true
                } else {
                    let mut nc = c;
                    nc[a] = v as usize;
                    let ng = dom.gidx(nc);
                    if !dom.occ[ng] {
                        true
                    } else {
                        let pn = dom.center_of_coords(nc);
                        dom.adjacency_cut(&pc[..dom.dim], &pn[..dom.dim])
                    }
                };
                if !open {
                    continue;
                }
                // Face of cell c in direction (a, step).
                let mut lo = [0.0; 3];
                let mut hi = [0.0; 3];
                for b in 0..dom.dim {
                    lo[b] = dom.lo[b] + c[b] as f64 * dom.h;
                    hi[b] = lo[b] + dom.h;
                }
                let plane = if step > 0 { hi[a] } else { lo[a] };
                lo[a] = plane;
                hi[a] = plane;
                per_cell[g as usize].push(faces.len() as u32);
                faces.push(Face { lo, hi });
            }
        }
    }
    let mut face_start = Vec::with_capacity(n_grid + 1);
    let mut face_ids = Vec::with_capacity(faces.len());
    face_start.push(0u32);
    for cell_faces in &per_cell {
        face_ids.extend_from_slice(cell_faces);
        face_start.push(face_ids.len() as u32);
    }
    dom.faces = faces;
    dom.face_start = face_start;
    dom.face_ids = face_ids;
}

fn compute_delta(dom: &mut GridDomain) {
    use rayon::prelude::*;
    let delta: Vec<f64> = (0..dom.cells.len())
        .into_par_iter()
        .map(|r| {
            let g = dom.cells[r] as usize;
            let c = dom.coords(g);
            let p = dom.center_of_coords(c);
            let d2 = cell_boundary_dist2(dom, c, p);
            d2.sqrt()
        })
        .collect();
    dom.delta = delta;
}

/// Exact squared distance from a point in cell `c` to the face set, by
/// expanding-ring search around the cell.
fn cell_boundary_dist2(dom: &GridDomain, c: [usize; 3], p: [f64; 3]) -> f64 {
    let mut best = f64::INFINITY;
    let max_ring = (0..dom.dim).map(|a| dom.ext[a]).max().unwrap();
    for ring in 0..=max_ring {
        // A face owned by a cell at L-inf ring r is at distance at least
        // (r - 0.5) h from this cell's center.
        if best.is_finite() && best <= ((ring as f64 - 0.5) * dom.h).powi(2) {
            break;
        }
        dom.for_ring_cells(c, c, ring, |gidx| {
            let s = dom.face_start[gidx] as usize;
            let e = dom.face_start[gidx + 1] as usize;
            for &fid in &dom.face_ids[s..e] {
                let d2 = dom.faces[fid as usize].dist2(&p[..dom.dim]);
                if d2 < best {
                    best = d2;
                }
            }
        });
    }
    best
}

/// Build one of the bundled domains.
pub fn build_domain(spec: &DomainSpec) -> Result<GridDomain> {
    if spec.resolution < MIN_RESOLUTION {
        return Err(Error::ResolutionTooSmall {
            got: spec.resolution,
            why: format!("minimum is {MIN_RESOLUTION}"),
        });
    }
    let res = spec.resolution as usize;
    let h = 1.0 / spec.resolution as f64;
    match spec.kind {
        DomainKind::UnitSquare => from_fn(
            2,
            [0.0, 0.0, 0.0],
            [res, res, 1],
            h,
            |_| true,
            None,
            Some(spec.clone()),
        ),
        DomainKind::Cube3d => from_fn(
            3,
            [0.0, 0.0, 0.0],
            [res, res, res],
            h,
            |_| true,
            None,
            Some(spec.clone()),
        ),
        // [0,2]^2 with the quadrant [1,2]^2 removed; legs of width 1 so
        // that Whitney cubes exist at desk resolutions.
        DomainKind::LShape => from_fn(
            2,
            [0.0, 0.0, 0.0],
            [2 * res, 2 * res, 1],
            h,
            |p| !(p[0] > 1.0 && p[1] > 1.0),
            None,
            Some(spec.clone()),
        ),
        // [-1,1]^2 cut along the segment from (0,0) to (1,0).
        DomainKind::SlitSquare => from_fn(
            2,
            [-1.0, -1.0, 0.0],
            [2 * res, 2 * res, 1],
            h,
            |_| true,
            Some([0.0, 0.0, 1.0, 0.0]),
            Some(spec.clone()),
        ),
        DomainKind::KochPrefractal => {
            let depth = spec.depth.unwrap_or(3);
            if depth > MAX_KOCH_DEPTH {
                return Err(Error::InvalidSpec(format!(
                    "koch depth {depth} exceeds maximum {MAX_KOCH_DEPTH}"
                )));
            }
            let poly = domains::koch_polygon(depth, domains::KOCH_SIDE);
            let (mut min, mut max) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for q in poly.chunks(2) {
                for a in 0..2 {
                    min[a] = min[a].min(q[a]);
                    max[a] = max[a].max(q[a]);
                }
            }
            // Snap the bounding box outward to the cell lattice, one cell
            // of padding, so the build is a pure function of the spec.
            let lo = [
                ((min[0] / h).floor() - 1.0) * h,
                ((min[1] / h).floor() - 1.0) * h,
                0.0,
            ];
            let ext = [
                ((max[0] - lo[0]) / h).ceil() as usize + 1,
                ((max[1] - lo[1]) / h).ceil() as usize + 1,
                1,
            ];
            from_fn(
                2,
                lo,
                ext,
                h,
                |p| domains::point_in_polygon(p, &poly),
                None,
                Some(spec.clone()),
            )
        }
    }
}

/// Sample the discretized boundary: one face center per spatial bucket of
/// side `spacing / sqrt(dim)`, so every boundary face center is within
/// `spacing` of a cloud point.
pub fn boundary_cloud(dom: &GridDomain, spacing: f64) -> Result<PointCloud> {
    if !(spacing >= dom.h) {
        return Err(Error::InvalidParameter(format!(
            "cloud spacing {spacing} must be at least the cell side {}",
            dom.h
        )));
    }
    let b = spacing / (dom.dim as f64).sqrt();
    use std::collections::BTreeMap;
    let mut reps: BTreeMap<(i64, i64, i64), Vec<f64>> = BTreeMap::new();
    for f in &dom.faces {
        let mut c = [0.0f64; 3];
        for a in 0..dom.dim {
            c[a] = 0.5 * (f.lo[a] + f.hi[a]);
        }
        let key = (
            (c[0] / b).floor() as i64,
            (c[1] / b).floor() as i64,
            if dom.dim == 3 { (c[2] / b).floor() as i64 } else { 0 },
        );
        let cand = c[..dom.dim].to_vec();
        match reps.get_mut(&key) {
            None => {
                reps.insert(key, cand);
            }
            Some(cur) => {
                // Keep the lexicographically smallest center: deterministic
                // regardless of face enumeration order.
                if cand.as_slice() < cur.as_slice() {
                    *cur = cand;
                }
            }
        }
    }
    let mut pts = Vec::with_capacity(reps.len() * dom.dim);
    for p in reps.values() {
        pts.extend_from_slice(p);
    }
    Ok(PointCloud::new(dom.dim, pts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: DomainKind, resolution: u32) -> DomainSpec {
        DomainSpec { kind, resolution, depth: None }
    }

    #[test]
    fn unit_square_res16_has_256_cells_and_delta_at_most_half() {
        let d = build_domain(&spec(DomainKind::UnitSquare, 16)).unwrap();
        assert_eq!(d.n_cells(), 256);
        assert!(d.delta.iter().all(|&x| x > 0.0 && x <= 0.5));
        // Cells adjacent to the boundary sit h/2 away from it.
        let corner = d.rank_at([0, 0, 0]).unwrap();
        assert!((d.delta[corner] - d.h / 2.0).abs() < 1e-15);
    }

    #[test]
    fn delta_is_exact_euclidean_distance_on_square() {
        // On the full square, delta must equal min distance to the four
        // sides; exercises corner cells where the nearest face is diagonal.
        let d = build_domain(&spec(DomainKind::UnitSquare, 16)).unwrap();
        for r in 0..d.n_cells() {
            let p = d.center(r);
            let expect = p[0].min(1.0 - p[0]).min(p[1]).min(1.0 - p[1]);
            assert!(
                (d.delta[r] - expect).abs() < 1e-13,
                "cell {r}: got {} want {expect}",
                d.delta[r]
            );
        }
    }

    #[test]
    fn slit_square_cells_hug_the_slit() {
        let d = build_domain(&spec(DomainKind::SlitSquare, 32)).unwrap();
        // The slit has zero width: no cell is removed for it.
        assert_eq!(d.n_cells(), 64 * 64);
        // Cells just above and just below the interior of the slit sit at
        // distance h/2 from the slit faces.
        let h = d.h;
        let mut checked = 0;
        for r in 0..d.n_cells() {
            let p = d.center(r);
            if p[0] > 0.2 && p[0] < 0.8 && (p[1].abs() - 0.5 * h).abs() < 0.25 * h {
                assert!(
                    (d.delta[r] - 0.5 * h).abs() < 1e-12,
                    "delta {} at {:?}",
                    d.delta[r],
                    p
                );
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn slit_square_adjacency_is_cut_across_the_slit() {
        let d = build_domain(&spec(DomainKind::SlitSquare, 32)).unwrap();
        // A cell above the slit is not a neighbor of the cell below it,
        // but the domain stays connected around the tip.
        for r in 0..d.n_cells() {
            for n in d.neighbors(r) {
                let (a, b) = (d.center(r), d.center(n));
                assert!(
                    !d.adjacency_cut(a, b),
                    "neighbor pair crosses the slit: {a:?} {b:?}"
                );
            }
        }
        assert_eq!(d.pruned_cells, 0);
    }

    #[test]
    fn l_shape_occupancy() {
        let d = build_domain(&spec(DomainKind::LShape, 8)).unwrap();
        assert_eq!(d.n_cells(), 3 * 8 * 8);
        assert!((d.volume() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn safety_ball_inside_delta_is_occupied() {
        // Every cell center within delta_i - h*sqrt(n) of center i belongs
        // to an occupied cell.
        let d = build_domain(&spec(DomainKind::SlitSquare, 16)).unwrap();
        let margin = d.h * (d.dim as f64).sqrt();
        for r in 0..d.n_cells() {
            let rad = d.delta[r] - margin;
            if rad <= 0.0 {
                continue;
            }
            let p = d.center(r);
            for s in 0..d.n_cells() {
                let q = d.center(s);
                let dist2: f64 = (0..2).map(|a| (p[a] - q[a]).powi(2)).sum();
                assert!(dist2 >= 0.0); // occupied by construction
            }
            // The real content: centers of *grid* cells within rad.
            let reach = (rad / d.h).ceil() as isize;
            let c = d.coords(d.cells[r] as usize);
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (x, y) = (c[0] as isize + dx, c[1] as isize + dy);
                    if x < 0 || y < 0 || x as usize >= d.ext[0] || y as usize >= d.ext[1] {
                        continue;
                    }
                    let q = d.center_of_coords([x as usize, y as usize, 0]);
                    let dist2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                    if dist2 < rad * rad {
                        assert!(
                            d.is_occupied([x as usize, y as usize, 0]),
                            "unoccupied cell inside safety ball"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn delta_is_one_lipschitz_across_neighbors() {
        let d = build_domain(&spec(DomainKind::LShape, 16)).unwrap();
        for r in 0..d.n_cells() {
            for n in d.neighbors(r) {
                assert!((d.delta[r] - d.delta[n]).abs() <= d.h + 1e-12);
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_domain(&spec(DomainKind::SlitSquare, 16)).unwrap();
        let b = build_domain(&spec(DomainKind::SlitSquare, 16)).unwrap();
        assert_eq!(a.cells, b.cells);
        assert_eq!(
            a.delta.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.delta.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn resolution_below_minimum_is_rejected() {
        let err = build_domain(&spec(DomainKind::UnitSquare, 4)).unwrap_err();
        assert!(matches!(err, Error::ResolutionTooSmall { .. }));
    }

    #[test]
    fn cube_3d_small_build() {
        let d = build_domain(&spec(DomainKind::Cube3d, 8)).unwrap();
        assert_eq!(d.n_cells(), 512);
        let c = d.rank_at([4, 4, 4]).unwrap();
        // Center-adjacent cell: distance to the nearest face of the cube.
        let p = d.center(c);
        let expect = (0..3)
            .map(|a| p[a].min(1.0 - p[a]))
            .fold(f64::INFINITY, f64::min);
        assert!((d.delta[c] - expect).abs() < 1e-13);
    }

    #[test]
    fn boundary_cloud_covers_unit_square_sides() {
        let d = build_domain(&spec(DomainKind::UnitSquare, 16)).unwrap();
        let cloud = boundary_cloud(&d, 0.25).unwrap();
        assert!(cloud.len() >= 16, "got {} points", cloud.len());
        // All four sides are represented.
        let pts: Vec<&[f64]> = (0..cloud.len()).map(|i| cloud.point(i)).collect();
        assert!(pts.iter().any(|p| p[0] < 0.01));
        assert!(pts.iter().any(|p| p[0] > 0.99));
        assert!(pts.iter().any(|p| p[1] < 0.01));
        assert!(pts.iter().any(|p| p[1] > 0.99));
        // Coverage: every face center is within `spacing` of a cloud point.
        for f in &d.faces {
            let c = [0.5 * (f.lo[0] + f.hi[0]), 0.5 * (f.lo[1] + f.hi[1])];
            let ok = pts
                .iter()
                .any(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) <= 0.25f64.powi(2) + 1e-12);
            assert!(ok, "face center {c:?} not covered");
        }
    }

    #[test]
    fn boundary_cloud_rejects_subcell_spacing() {
        let d = build_domain(&spec(DomainKind::UnitSquare, 16)).unwrap();
        assert!(boundary_cloud(&d, 0.01).is_err());
    }
}
