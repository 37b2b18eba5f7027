//! Infinitesimal rigid motions and projections onto them.
//!
//! The model space is `x -> A x + b` with `A` skew-symmetric. Differences of
//! translations vanish, so seminorm minimization only ever sees the skew
//! coefficients; translations reappear solely when sampling whole fields.
//!
//! Projection routes:
//! * `p = 2`: one quadratic-statistics pass (Gram matrix + right-hand sides)
//!   and a tiny symmetric solve — the exact minimizer.
//! * `p != 2`: damped Newton on the (strictly convex) residual, seeded from
//!   the `p = 2` solve, each step evaluated in one fused pass that returns
//!   value, gradient, and Hessian. A derivative-free pattern search is kept
//!   as an independent reference route for tests.

use crate::error::{Error, Result};
use crate::geometry::GridDomain;
use crate::seminorms::{DiscreteField, KernelSpec, PairEngine, RigidGram};
use crate::tree::CubeTree;
use crate::whitney::{
    bridge_cells, bridge_cube, smooth_cube, smooth_cube_cells, WhitneyDecomposition,
};

/// Dimension of the space of skew-symmetric matrices: one rotation plane per
/// unordered coordinate pair.
pub fn skew_dim(dim: usize) -> usize {
    dim * (dim - 1) / 2
}

/// Coordinate pairs `(i, j)`, `i < j`, indexing the skew basis. Basis element
/// `k = (i, j)` acts as `x -> x_j e_i - x_i e_j`.
pub fn skew_pairs(dim: usize) -> &'static [(usize, usize)] {
    match dim {
        2 => &[(0, 1)],
        3 => &[(0, 1), (0, 2), (1, 2)],
        _ => panic!("skew basis is defined for 2 and 3 dimensions"),
    }
}

/// Evaluates every skew basis element on an integer lattice offset. `out[k]`
/// receives `I_k(off)`; only the first `skew_dim(dim)` rows are meaningful.
#[inline]
pub fn skew_offset_basis(dim: usize, off: &[i32; 3], out: &mut [[f64; 3]; 3]) {
    for (k, &(i, j)) in skew_pairs(dim).iter().enumerate() {
        let mut row = [0.0f64; 3];
        row[i] = off[j] as f64;
        row[j] = -(off[i] as f64);
        out[k] = row;
    }
}

/// `out = sum_k a[k] * I_k(x)` for a physical point `x`.
pub fn skew_apply(dim: usize, a: &[f64], x: &[f64], out: &mut [f64; 3]) {
    out.fill(0.0);
    for (k, &(i, j)) in skew_pairs(dim).iter().enumerate() {
        out[i] += a[k] * x[j];
        out[j] -= a[k] * x[i];
    }
}

/// Samples the rigid motion `x -> sum_k a[k] I_k(x) + b` on a domain.
pub fn rigid_field(dom: &GridDomain, a: &[f64], b: &[f64; 3]) -> DiscreteField {
    let dim = dom.dim;
    assert_eq!(a.len(), skew_dim(dim));
    DiscreteField::from_fn(dom, |x, out| {
        let mut v = [0.0f64; 3];
        skew_apply(dim, a, x, &mut v);
        for c in 0..dim {
            out[c] = v[c] + b[c];
        }
    })
}

/// Solves the small symmetric positive-definite system `mat x = rhs`
/// (row-major `m x m`) by Gaussian elimination with partial pivoting.
pub fn solve_sym(m: usize, mat: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(mat.len(), m * m);
    assert_eq!(rhs.len(), m);
    let mut a = mat.to_vec();
    let mut b = rhs.to_vec();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::DegenerateGram("all-zero matrix".into()));
    }
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if a[r * m + col].abs() > a[piv * m + col].abs() {
                piv = r;
            }
        }
        if a[piv * m + col].abs() <= 1e-13 * scale {
            return Err(Error::DegenerateGram(format!(
                "pivot {} at column {col} is negligible against scale {scale}",
                a[piv * m + col]
            )));
        }
        if piv != col {
            for c in 0..m {
                a.swap(col * m + c, piv * m + c);
            }
            b.swap(col, piv);
        }
        for r in col + 1..m {
            let f = a[r * m + col] / a[col * m + col];
            for c in col..m {
                a[r * m + c] -= f * a[col * m + c];
            }
            b[r] -= f * b[col];
        }
    }
    for r in (0..m).rev() {
        let mut v = b[r];
        for c in r + 1..m {
            v -= a[r * m + c] * b[c];
        }
        b[r] = v / a[r * m + r];
    }
    Ok(b)
}

/// Largest off-diagonal Gram correlation `|G_kl| / sqrt(G_kk G_ll)`; zero
/// when the basis has a single element.
pub fn gram_orthogonality(gram: &RigidGram) -> f64 {
    let m = gram.m;
    let mut worst = 0.0f64;
    for k in 0..m {
        for l in k + 1..m {
            let d = (gram.gram[k * m + k] * gram.gram[l * m + l]).sqrt();
            if d > 0.0 {
                worst = worst.max(gram.gram[k * m + l].abs() / d);
            }
        }
    }
    worst
}

/// Result of a projection onto rigid motions.
#[derive(Clone, Debug)]
pub struct RigidFit {
    /// Coefficients in the skew basis.
    pub coeffs: Vec<f64>,
    /// `p`-th power of the residual seminorm at the chosen coefficients.
    pub residual_p: f64,
    /// Number of pair passes spent.
    pub passes: usize,
    pub converged: bool,
}

/// Kernel-weighted least-squares projections (the exact minimizer for
/// `p = 2`; the Newton seed otherwise): one Gram pass shared by all fields.
pub fn project_p2(
    engine: &PairEngine,
    fields: &[&DiscreteField],
    spec: &KernelSpec,
    max_cells: usize,
) -> Result<Vec<RigidFit>> {
    let gram = engine.rigid_gram(fields, spec, max_cells)?;
    let mut fits = Vec::with_capacity(fields.len());
    for (rhs, &c) in gram.rhs.iter().zip(&gram.norm_sq) {
        let coeffs = solve_sym(gram.m, &gram.gram, rhs)?;
        let mut res = c;
        for (b, a) in rhs.iter().zip(&coeffs) {
            res -= b * a;
        }
        fits.push(RigidFit {
            coeffs,
            residual_p: res.max(0.0),
            passes: 1,
            converged: true,
        });
    }
    Ok(fits)
}

/// Minimizes the plain-difference residual seminorm over rigid motions.
///
/// `p = 2` solves in closed form. Otherwise a damped Newton iteration runs
/// on the strictly convex residual, seeded from the least-squares solution;
/// every iterate costs one fused pass (value, gradient, Hessian).
pub fn min_over_rigid(
    engine: &PairEngine,
    field: &DiscreteField,
    spec: &KernelSpec,
    max_cells: usize,
) -> Result<RigidFit> {
    Ok(min_over_rigid_batch(engine, &[field], spec, max_cells)?.remove(0))
}

/// Per-field Newton state for the batched minimizer.
struct NewtonState {
    a: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    hess: Vec<f64>,
    passes: usize,
    converged: bool,
    done: bool,
    step: Vec<f64>,
    t: f64,
}

const NEWTON_MAX_PASSES: usize = 60;

impl NewtonState {
    /// Outer-iteration bookkeeping: pass budget, gradient test, and the
    /// Newton direction for the next line search. Returns true if the field
    /// still needs trial evaluations.
    fn prepare_step(&mut self, m: usize, p: f64) -> bool {
        if self.done {
            return false;
        }
        if self.passes >= NEWTON_MAX_PASSES {
            self.done = true;
            return false;
        }
        let gmax = self.g.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let amax = self.a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        // Characteristic gradient: a unit change of any coefficient moves the
        // residual by about p * f / (1 + |a|); stop well below that.
        if gmax <= 1e-11 * (p * self.f / (1.0 + amax)).max(f64::MIN_POSITIVE) || self.f == 0.0 {
            self.converged = true;
            self.done = true;
            return false;
        }
        let neg_g: Vec<f64> = self.g.iter().map(|v| -v).collect();
        self.step = match solve_sym(m, &self.hess, &neg_g) {
            Ok(d) => d,
            Err(_) => {
                // Hessian numerically singular: fall back to a scaled
                // gradient step.
                let hmax = self.hess.iter().fold(0.0f64, |s, v| s.max(v.abs()));
                neg_g.iter().map(|v| v / hmax.max(f64::MIN_POSITIVE)).collect()
            }
        };
        let dmax = self.step.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if dmax <= 1e-12 * (1.0 + amax) {
            self.converged = true;
            self.done = true;
            return false;
        }
        self.t = 1.0;
        true
    }

    fn trial_point(&self) -> Vec<f64> {
        self.a.iter().zip(&self.step).map(|(x, d)| x + self.t * d).collect()
    }
}

/// Batched version of `min_over_rigid`: minimizes several fields at once,
/// fusing their residual/gradient/Hessian evaluations into shared pair
/// sweeps. Each field follows exactly the trajectory the single-field
/// minimizer would take; only the sweeps are shared.
pub fn min_over_rigid_batch(
    engine: &PairEngine,
    fields: &[&DiscreteField],
    spec: &KernelSpec,
    max_cells: usize,
) -> Result<Vec<RigidFit>> {
    let seeds = project_p2(engine, fields, spec, max_cells)?;
    if spec.p == 2.0 || fields.is_empty() {
        // The Gram identity residual `c - b'a` cancels catastrophically when
        // the field is close to rigid (it is a difference of two large
        // sums), leaving noise of order machine epsilon times the field's
        // energy. One direct evaluation at the fitted coefficients is free
        // of cancellation, so near-rigid fields come out at the square of
        // that noise instead.
        let mut seeds = seeds;
        if !fields.is_empty() {
            let coeffs: Vec<Vec<f64>> = seeds.iter().map(|s| s.coeffs.clone()).collect();
            let evals = engine.rigid_residual_multi(fields, &coeffs, spec, max_cells, false)?;
            for (seed, (f, _, _)) in seeds.iter_mut().zip(evals) {
                seed.residual_p = f;
                seed.passes += 1;
            }
        }
        return Ok(seeds);
    }
    let m = skew_dim(engine.domain().dim);
    let coeffs: Vec<Vec<f64>> = seeds.iter().map(|s| s.coeffs.clone()).collect();
    let evals = engine.rigid_residual_multi(fields, &coeffs, spec, max_cells, true)?;
    let mut states: Vec<NewtonState> = seeds
        .into_iter()
        .zip(evals)
        .map(|(seed, (f, g, hess))| NewtonState {
            a: seed.coeffs,
            f,
            g,
            hess,
            passes: seed.passes + 1,
            converged: false,
            done: false,
            step: Vec::new(),
            t: 1.0,
        })
        .collect();
    while states.iter().any(|st| !st.done) {
        // Fields whose stopping tests fail get a Newton direction and enter
        // the shared backtracking line search.
        let mut searching: Vec<usize> = Vec::new();
        for (idx, st) in states.iter_mut().enumerate() {
            if st.prepare_step(m, spec.p) {
                searching.push(idx);
            }
        }
        while !searching.is_empty() {
            let trial_fields: Vec<&DiscreteField> =
                searching.iter().map(|&idx| fields[idx]).collect();
            let trial_coeffs: Vec<Vec<f64>> =
                searching.iter().map(|&idx| states[idx].trial_point()).collect();
            let evals = engine
                .rigid_residual_multi(&trial_fields, &trial_coeffs, spec, max_cells, true)?;
            let mut still: Vec<usize> = Vec::new();
            for ((&idx, trial), (ft, gt, ht)) in
                searching.iter().zip(trial_coeffs).zip(evals)
            {
                let st = &mut states[idx];
                st.passes += 1;
                if ft <= st.f {
                    st.a = trial;
                    st.f = ft;
                    st.g = gt;
                    st.hess = ht;
                    continue; // accepted; next outer iteration decides more
                }
                st.t *= 0.5;
                if st.t < 1e-8 {
                    // Could not improve along the Newton direction: already
                    // at the bottom up to floating-point resolution.
                    st.converged = true;
                    st.done = true;
                } else if st.passes >= NEWTON_MAX_PASSES {
                    st.done = true;
                } else {
                    still.push(idx);
                }
            }
            searching = still;
        }
    }
    Ok(states
        .into_iter()
        .map(|st| RigidFit {
            coeffs: st.a,
            residual_p: st.f,
            passes: st.passes,
            converged: st.converged,
        })
        .collect())
}

/// Derivative-free reference minimizer: coordinate pattern search with a
/// halving step, seeded like the Newton route. Slow but simple; used to
/// cross-validate `min_over_rigid`.
pub fn min_over_rigid_search(
    engine: &PairEngine,
    field: &DiscreteField,
    spec: &KernelSpec,
    max_cells: usize,
) -> Result<RigidFit> {
    let seed = project_p2(engine, &[field], spec, max_cells)?.remove(0);
    let m = seed.coeffs.len();
    let mut a = seed.coeffs;
    let mut f = engine.rigid_residual_p(field, &a, spec, max_cells)?;
    let mut passes = seed.passes + 1;
    let amax = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let mut step = 0.25 * (1.0 + amax);
    let tol = 1e-8 * (1.0 + amax);
    const MAX_PASSES: usize = 2000;
    while step > tol && passes < MAX_PASSES {
        let mut improved = false;
        for k in 0..m {
            for sgn in [1.0, -1.0] {
                let mut trial = a.clone();
                trial[k] += sgn * step;
                let ft = engine.rigid_residual_p(field, &trial, spec, max_cells)?;
                passes += 1;
                if ft < f {
                    a = trial;
                    f = ft;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(RigidFit { coeffs: a, residual_p: f, passes, converged: step <= tol })
}

/// Rigid approximation attached to one Whitney cube (or bridge).
#[derive(Clone, Debug)]
pub struct CubeProjection {
    /// Index of the cube in the decomposition.
    pub cube: usize,
    pub coeffs: Vec<f64>,
    /// Number of domain cells the projection was computed on.
    pub cells: usize,
    /// Glue weight `side^(n + p (1 - s + beta))`.
    pub weight: f64,
}

fn glue_weight(side: f64, dim: usize, spec: &KernelSpec) -> f64 {
    let beta = spec.beta.unwrap_or(0.0);
    side.powf(dim as f64 + spec.p * (1.0 - spec.s + beta))
}

/// Least-squares rigid approximations on every smoothened Whitney cube.
pub fn local_projections(
    dom: &GridDomain,
    dec: &WhitneyDecomposition,
    field: &DiscreteField,
    spec: &KernelSpec,
    max_cells: usize,
) -> Result<Vec<CubeProjection>> {
    let mut out = Vec::with_capacity(dec.cubes.len());
    for (idx, cube) in dec.cubes.iter().enumerate() {
        let u = smooth_cube(cube, dom.dim);
        let cells = smooth_cube_cells(dom, &u);
        let engine = PairEngine::new(dom, cells)?;
        let fit = project_p2(&engine, &[field], spec, max_cells)?.remove(0);
        out.push(CubeProjection {
            cube: idx,
            coeffs: fit.coeffs,
            cells: engine.len(),
            weight: glue_weight(cube.side, dom.dim, spec),
        });
    }
    Ok(out)
}

/// Rigid approximations on the bridge cubes joining each cube to its tree
/// parent. Bridges too small to contain any cell (or fewer than two) are
/// skipped and counted.
#[derive(Clone, Debug)]
pub struct BridgeProjections {
    /// Indexed by cube; `None` for the root and for skipped bridges.
    pub fits: Vec<Option<CubeProjection>>,
    pub skipped_empty: usize,
}

pub fn bridge_projections(
    dom: &GridDomain,
    dec: &WhitneyDecomposition,
    tree: &CubeTree,
    field: &DiscreteField,
    spec: &KernelSpec,
    max_cells: usize,
) -> Result<BridgeProjections> {
    let mut fits = vec![None; dec.cubes.len()];
    let mut skipped = 0usize;
    for idx in 0..dec.cubes.len() {
        let Some(parent) = tree.tree.parent_of(idx) else {
            continue;
        };
        let bridge = bridge_cube(&dec.cubes[idx], &dec.cubes[parent], dom.dim)?;
        let cells = bridge_cells(dom, &bridge);
        if cells.len() < 2 {
            skipped += 1;
            continue;
        }
        let engine = PairEngine::new(dom, cells)?;
        let fit = project_p2(&engine, &[field], spec, max_cells)?.remove(0);
        let side = dec.cubes[idx].side.min(dec.cubes[parent].side) / 4.0;
        fits[idx] = Some(CubeProjection {
            cube: idx,
            coeffs: fit.coeffs,
            cells: engine.len(),
            weight: glue_weight(side, dom.dim, spec),
        });
    }
    Ok(BridgeProjections { fits, skipped_empty: skipped })
}

/// Weight-averaged coefficients of a family of cube projections.
pub fn weighted_mean(fits: &[CubeProjection]) -> Vec<f64> {
    if fits.is_empty() {
        return Vec::new();
    }
    let m = fits[0].coeffs.len();
    let mut total = 0.0;
    let mut mean = vec![0.0f64; m];
    for f in fits {
        total += f.weight;
        for k in 0..m {
            mean[k] += f.weight * f.coeffs[k];
        }
    }
    for v in &mut mean {
        *v /= total;
    }
    mean
}

/// Subtracts the weighted mean from every projection, returning it. After
/// centering, the weighted average of the coefficients is zero.
pub fn center_coefficients(fits: &mut [CubeProjection]) -> Vec<f64> {
    let mean = weighted_mean(fits);
    for f in fits.iter_mut() {
        for (c, mk) in f.coeffs.iter_mut().zip(&mean) {
            *c -= mk;
        }
    }
    mean
}

pub fn weight_sum(fits: &[CubeProjection]) -> f64 {
    fits.iter().map(|f| f.weight).sum()
}
