//! The pair-sum engine behind every discrete fractional seminorm.
//!
//! All quantities here are double sums over ordered pairs of distinct cells
//! from a chosen cell set, of the form
//!
//! ```text
//!   sum_{i != j}  value(u_i - u_j, x_i - x_j) * |x_i - x_j|^(-e) * h^(2n) * w_ij
//! ```
//!
//! where `value` is `|du|^p` (plain) or `|<du, dx>|^p` (direction-projected),
//! `e = n + s p` resp. `n + s p + p`, and `w_ij` optionally applies a strict
//! truncation `|dx| < tau * delta_i` (note: `delta` of the *first* index of
//! the ordered pair) and/or a distance weight `min(delta_i, delta_j)^(p beta)`.
//!
//! Because cells live on a lattice, `|x_i - x_j|^2 = h^2 * r2` with integer
//! `r2`, so the singular kernel is precomputed into a table indexed by `r2`.
//! Sums are accumulated with the deterministic block scheme from [`crate::sum`],
//! so results are bit-identical for any thread count.

use crate::error::{Error, Result};
use crate::geometry::GridDomain;
use crate::rigid::{skew_dim, skew_offset_basis};
use crate::seminorms::fields::DiscreteField;
use crate::sum::{block_sum_array, Neumaier};
use serde::{Deserialize, Serialize};

/// Default ceiling on the cell count of untruncated (all-pairs) sums; the
/// quadratic pair count makes larger sets a footgun rather than a feature.
pub const DEFAULT_MAX_CELLS: usize = 20_000;

/// Fused accumulator lanes per pass.
const LANES: usize = 32;

/// Which difference quotient the kernel measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    /// `|u(x) - u(y)|^p / |x - y|^(n + s p)`.
    Gagliardo,
    /// `|<u(x) - u(y), x - y>|^p / |x - y|^(n + s p + p)`: differences
    /// projected on the separation direction, which annihilates rigid
    /// motions and makes Korn-type inequalities nontrivial.
    Projected,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Gagliardo => "gagliardo",
            Kind::Projected => "projected",
        }
    }
}

/// Full description of one seminorm: kind, smoothness `s`, integrability `p`,
/// optional truncation multiplier `tau`, optional weight exponent `beta`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: Kind,
    pub s: f64,
    pub p: f64,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl KernelSpec {
    pub fn plain(kind: Kind, s: f64, p: f64) -> Self {
        KernelSpec { kind, s, p, tau: None, beta: None }
    }

    pub fn truncated(kind: Kind, s: f64, p: f64, tau: f64) -> Self {
        KernelSpec { kind, s, p, tau: Some(tau), beta: None }
    }

    pub fn weighted(kind: Kind, s: f64, p: f64, tau: Option<f64>, beta: f64) -> Self {
        KernelSpec { kind, s, p, tau, beta: Some(beta) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "smoothness s = {} must lie strictly between 0 and 1",
                self.s
            )));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "integrability p = {} must be finite and exceed 1",
                self.p
            )));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "truncation multiplier tau = {t} must be positive and finite"
                )));
            }
        }
        if let Some(b) = self.beta {
            if !b.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "weight exponent beta = {b} must be finite"
                )));
            }
        }
        Ok(())
    }

    /// Exponent `e` of `|x - y|^(-e)`.
    pub fn distance_exponent(&self, dim: usize) -> f64 {
        let base = dim as f64 + self.s * self.p;
        match self.kind {
            Kind::Gagliardo => base,
            Kind::Projected => base + self.p,
        }
    }
}

/// `|v|^p` computed from `q = |v|^2`, specialized for the exponents the
/// experiments sweep so the hot loop avoids `powf` where possible.
#[derive(Clone, Copy, Debug)]
enum PowSq {
    P15,
    P2,
    P3,
    Gen(f64),
}

impl PowSq {
    fn new(p: f64) -> Self {
        if p == 2.0 {
            PowSq::P2
        } else if p == 3.0 {
            PowSq::P3
        } else if p == 1.5 {
            PowSq::P15
        } else {
            PowSq::Gen(0.5 * p)
        }
    }

    #[inline(always)]
    fn eval(self, q: f64) -> f64 {
        match self {
            PowSq::P15 => (q * q.sqrt()).sqrt(),
            PowSq::P2 => q,
            PowSq::P3 => q * q.sqrt(),
            PowSq::Gen(e) => q.powf(e),
        }
    }
}

/// `|v|^(p-2)` from `q = |v|^2`, for gradients of `|v|^p`.
#[derive(Clone, Copy, Debug)]
enum PowSqGrad {
    P15,
    P2,
    P3,
    Gen(f64),
}

impl PowSqGrad {
    fn new(p: f64) -> Self {
        if p == 2.0 {
            PowSqGrad::P2
        } else if p == 3.0 {
            PowSqGrad::P3
        } else if p == 1.5 {
            PowSqGrad::P15
        } else {
            PowSqGrad::Gen(0.5 * (p - 2.0))
        }
    }

    #[inline(always)]
    fn eval(self, q: f64) -> f64 {
        match self {
            PowSqGrad::P15 => 1.0 / q.sqrt().sqrt(),
            PowSqGrad::P2 => 1.0,
            PowSqGrad::P3 => q.sqrt(),
            PowSqGrad::Gen(e) => q.powf(e),
        }
    }
}

/// Quadratic statistics of one pass: the Gram matrix of the infinitesimal
/// rigid (skew) basis under the kernel, and per field the right-hand side
/// `<u, I_k>` and squared norm, all with respect to the same kernel weights.
/// Solving `gram a = rhs` gives the kernel-weighted least-squares projection
/// of the field onto rigid motions (exact minimizer when `p = 2`).
#[derive(Clone, Debug)]
pub struct RigidGram {
    pub m: usize,
    /// Row-major `m x m`, symmetric positive semi-definite.
    pub gram: Vec<f64>,
    /// Per field: `m` inner products against the skew basis.
    pub rhs: Vec<Vec<f64>>,
    /// Per field: the kernel-weighted squared norm of the field differences.
    pub norm_sq: Vec<f64>,
}

struct Plan {
    table: Vec<f64>,
    lim: Option<Vec<f64>>,
    radius: Vec<i64>,
    wtab: Option<Vec<f64>>,
    use_min: bool,
    windowed: bool,
}

/// Pair-sum evaluator bound to one domain and one cell set.
///
/// Building an engine precomputes packed cell coordinates and boundary
/// distances for the set; each seminorm evaluation then builds its kernel
/// table and runs one deterministic pass over the pairs.
pub struct PairEngine<'a> {
    dom: &'a GridDomain,
    ranks: Vec<u32>,
    coords: Vec<i32>,
    delta: Vec<f64>,
    set_of_rank: Vec<i32>,
    width: [usize; 3],
    max_r2: usize,
}

impl<'a> PairEngine<'a> {
    /// Engine over an explicit cell set, given as strictly ascending ranks.
    pub fn new(dom: &'a GridDomain, ranks: Vec<u32>) -> Result<Self> {
        let n_cells = dom.n_cells();
        for w in ranks.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidParameter(
                    "cell set must be strictly ascending ranks".into(),
                ));
            }
        }
        if let Some(&last) = ranks.last() {
            if last as usize >= n_cells {
                return Err(Error::InvalidParameter(format!(
                    "cell rank {last} out of range (domain has {n_cells} cells)"
                )));
            }
        }
        let dim = dom.dim;
        let mut coords = vec![0i32; ranks.len() * dim];
        let mut delta = vec![0.0f64; ranks.len()];
        let mut set_of_rank = vec![-1i32; n_cells];
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for (i, &r) in ranks.iter().enumerate() {
            let c = dom.coords(dom.cells[r as usize] as usize);
            for a in 0..dim {
                let v = c[a] as i32;
                coords[i * dim + a] = v;
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
            delta[i] = dom.delta[r as usize];
            set_of_rank[r as usize] = i as i32;
        }
        let mut width = [1usize; 3];
        let mut max_r2 = 0usize;
        if !ranks.is_empty() {
            for a in 0..dim {
                width[a] = (hi[a] - lo[a]) as usize + 1;
                max_r2 += (width[a] - 1) * (width[a] - 1);
            }
        }
        Ok(PairEngine { dom, ranks, coords, delta, set_of_rank, width, max_r2 })
    }

    /// Engine over every occupied cell of the domain.
    pub fn whole_domain(dom: &'a GridDomain) -> Self {
        let ranks: Vec<u32> = (0..dom.n_cells() as u32).collect();
        Self::new(dom, ranks).expect("full-domain cell set is always valid")
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn ranks(&self) -> &[u32] {
        &self.ranks
    }

    pub fn domain(&self) -> &GridDomain {
        self.dom
    }

    /// Largest boundary distance over the set (the inner scale `r`).
    pub fn max_delta(&self) -> f64 {
        self.delta.iter().fold(0.0f64, |m, &d| m.max(d))
    }

    /// Half the diagonal of the set's bounding box (the outer scale `R`).
    pub fn half_diagonal(&self) -> f64 {
        let mut d2 = 0.0;
        for a in 0..self.dom.dim {
            let w = self.width[a] as f64 * self.dom.h;
            d2 += w * w;
        }
        0.5 * d2.sqrt()
    }

    fn gather(&self, field: &DiscreteField) -> Result<Vec<f64>> {
        let dim = self.dom.dim;
        if field.dim != dim || field.n_points() != self.dom.n_cells() {
            return Err(Error::InvalidParameter(
                "field shape does not match the domain".into(),
            ));
        }
        let mut out = vec![0.0f64; self.len() * dim];
        for (i, &r) in self.ranks.iter().enumerate() {
            let src = field.value(r as usize);
            out[i * dim..(i + 1) * dim].copy_from_slice(src);
        }
        Ok(out)
    }

    fn kernel_table(&self, spec: &KernelSpec) -> Vec<f64> {
        let dim = self.dom.dim;
        let h = self.dom.h;
        let hh = h * h;
        let expo = spec.distance_exponent(dim);
        let mut scale = h.powi(2 * dim as i32);
        if spec.kind == Kind::Projected {
            // The loop computes <du, offset> in cell units; fold in h^p so
            // the table carries the full <du, dx> normalization.
            scale *= h.powf(spec.p);
        }
        let mut table = vec![0.0f64; self.max_r2 + 1];
        for (r2, slot) in table.iter_mut().enumerate().skip(1) {
            *slot = scale * (hh * r2 as f64).powf(-0.5 * expo);
        }
        table
    }

    fn plan(&self, spec: &KernelSpec, max_cells: usize) -> Result<Plan> {
        spec.validate()?;
        let n = self.len();
        if spec.tau.is_none() && n > max_cells {
            return Err(Error::CellBudgetExceeded { cells: n, max_cells });
        }
        let table = self.kernel_table(spec);
        let wtab = spec.beta.map(|beta| {
            let e = spec.p * beta;
            self.delta.iter().map(|d| d.powf(e)).collect::<Vec<f64>>()
        });
        let use_min = spec.beta.map_or(true, |b| b >= 0.0);
        let mut lim = None;
        let mut radius = Vec::new();
        let mut windowed = false;
        if let Some(tau) = spec.tau {
            let h = self.dom.h;
            let lims: Vec<f64> = self.delta.iter().map(|d| (tau * d) * (tau * d)).collect();
            radius = self
                .delta
                .iter()
                .map(|d| (tau * d / h).ceil() as i64)
                .collect();
            // Choose between scanning all pairs and per-cell windows around
            // each base cell, by estimated visit counts.
            let mut win_cost: u128 = 0;
            for &r in &radius {
                let mut c: u128 = 1;
                for a in 0..self.dom.dim {
                    let w = (2 * r.min(self.width[a] as i64 - 1) + 1) as u128;
                    c *= w;
                }
                win_cost += c;
            }
            let dense_cost = (n as u128 * n.saturating_sub(1) as u128) / 2;
            windowed = win_cost < dense_cost;
            lim = Some(lims);
        }
        Ok(Plan { table, lim, radius, wtab, use_min, windowed })
    }

    /// One deterministic pass over the pair set. `f` receives the set
    /// indices `(i, j)`, the offset `x_i - x_j` in cell units, and the fully
    /// scaled kernel weight (truncation directions, distance weight, and the
    /// two orderings of an unordered pair already folded in).
    fn sum_pairs<F>(&self, plan: &Plan, f: F) -> [f64; LANES]
    where
        F: Fn(usize, usize, &[i32; 3], f64, &mut [Neumaier; LANES]) + Sync,
    {
        match (self.dom.dim, plan.windowed) {
            (2, false) => self.dense::<2, F>(plan, f),
            (2, true) => self.windowed::<2, F>(plan, f),
            (3, false) => self.dense::<3, F>(plan, f),
            (3, true) => self.windowed::<3, F>(plan, f),
            _ => unreachable!("domains are 2- or 3-dimensional"),
        }
    }

    fn dense<const DIM: usize, F>(&self, plan: &Plan, f: F) -> [f64; LANES]
    where
        F: Fn(usize, usize, &[i32; 3], f64, &mut [Neumaier; LANES]) + Sync,
    {
        let n = self.len();
        let hh = self.dom.h * self.dom.h;
        let coords = &self.coords;
        let table = &plan.table;
        let lim = plan.lim.as_deref();
        let wtab = plan.wtab.as_deref();
        let use_min = plan.use_min;
        block_sum_array::<LANES>(n, |i, acc| {
            let mut ci = [0i32; DIM];
            ci.copy_from_slice(&coords[i * DIM..(i + 1) * DIM]);
            let li = lim.map_or(f64::INFINITY, |l| l[i]);
            for (jj, cj) in coords[(i + 1) * DIM..].chunks_exact(DIM).enumerate() {
                let j = i + 1 + jj;
                let mut off = [0i32; 3];
                let mut r2 = 0i64;
                for a in 0..DIM {
                    let d = ci[a] - cj[a];
                    off[a] = d;
                    r2 += (d as i64) * (d as i64);
                }
                let mult = if let Some(l) = lim {
                    let d2 = hh * r2 as f64;
                    let m = (d2 < li) as u32 + (d2 < l[j]) as u32;
                    if m == 0 {
                        continue;
                    }
                    m as f64
                } else {
                    2.0
                };
                let mut k = table[r2 as usize] * mult;
                if let Some(w) = wtab {
                    let (wi, wj) = (w[i], w[j]);
                    k *= if use_min { wi.min(wj) } else { wi.max(wj) };
                }
                f(i, j, &off, k, acc);
            }
        })
    }

    fn windowed<const DIM: usize, F>(&self, plan: &Plan, f: F) -> [f64; LANES]
    where
        F: Fn(usize, usize, &[i32; 3], f64, &mut [Neumaier; LANES]) + Sync,
    {
        let n = self.len();
        let hh = self.dom.h * self.dom.h;
        let coords = &self.coords;
        let table = &plan.table;
        let lim = plan.lim.as_deref().expect("windowed pass requires truncation");
        let radius = &plan.radius;
        let wtab = plan.wtab.as_deref();
        let use_min = plan.use_min;
        let ext = self.dom.ext;
        block_sum_array::<LANES>(n, |i, acc| {
            let mut ci = [0i64; 3];
            for a in 0..DIM {
                ci[a] = coords[i * DIM + a] as i64;
            }
            let li = lim[i];
            let r = radius[i];
            let zr = if DIM == 3 { r } else { 0 };
            for dz in -zr..=zr {
                let gz = ci[2] + dz;
                if gz < 0 || gz as usize >= ext[2] {
                    continue;
                }
                for dy in -r..=r {
                    let gy = ci[1] + dy;
                    if gy < 0 || gy as usize >= ext[1] {
                        continue;
                    }
                    for dx in -r..=r {
                        let gx = ci[0] + dx;
                        if gx < 0 || gx as usize >= ext[0] {
                            continue;
                        }
                        let r2 = dx * dx + dy * dy + dz * dz;
                        if r2 == 0 {
                            continue;
                        }
                        let d2 = hh * r2 as f64;
                        if !(d2 < li) {
                            continue;
                        }
                        let Some(rank) = self.dom.rank_at([gx as usize, gy as usize, gz as usize])
                        else {
                            continue;
                        };
                        let sj = self.set_of_rank[rank];
                        if sj < 0 {
                            continue;
                        }
                        let j = sj as usize;
                        let mut k = table[r2 as usize];
                        if let Some(w) = wtab {
                            let (wi, wj) = (w[i], w[j]);
                            k *= if use_min { wi.min(wj) } else { wi.max(wj) };
                        }
                        let off = [-dx as i32, -dy as i32, -dz as i32];
                        f(i, j, &off, k, acc);
                    }
                }
            }
        })
    }

    /// `p`-th powers of the seminorm for several fields in one pass over the
    /// pairs. Untruncated sums respect the `max_cells` budget.
    pub fn seminorms_p(
        &self,
        fields: &[&DiscreteField],
        spec: &KernelSpec,
        max_cells: usize,
    ) -> Result<Vec<f64>> {
        let plan = self.plan(spec, max_cells)?;
        let dim = self.dom.dim;
        let pow = PowSq::new(spec.p);
        let mut out = Vec::with_capacity(fields.len());
        for batch in fields.chunks(LANES) {
            let vals: Vec<Vec<f64>> = batch
                .iter()
                .map(|u| self.gather(u))
                .collect::<Result<_>>()?;
            let nb = vals.len();
            let totals = match spec.kind {
                Kind::Gagliardo => self.sum_pairs(&plan, |i, j, _off, k, acc| {
                    for (b, v) in vals.iter().enumerate().take(nb) {
                        let (bi, bj) = (i * dim, j * dim);
                        let mut q = 0.0;
                        for c in 0..dim {
                            let d = v[bi + c] - v[bj + c];
                            q += d * d;
                        }
                        acc[b].add(pow.eval(q) * k);
                    }
                }),
                Kind::Projected => self.sum_pairs(&plan, |i, j, off, k, acc| {
                    for (b, v) in vals.iter().enumerate().take(nb) {
                        let (bi, bj) = (i * dim, j * dim);
                        let mut t = 0.0;
                        for c in 0..dim {
                            t += (v[bi + c] - v[bj + c]) * off[c] as f64;
                        }
                        acc[b].add(pow.eval(t * t) * k);
                    }
                }),
            };
            out.extend_from_slice(&totals[..nb]);
        }
        Ok(out)
    }

    /// Seminorm values (`p`-th roots of [`Self::seminorms_p`]).
    pub fn seminorms(
        &self,
        fields: &[&DiscreteField],
        spec: &KernelSpec,
        max_cells: usize,
    ) -> Result<Vec<f64>> {
        Ok(self
            .seminorms_p(fields, spec, max_cells)?
            .into_iter()
            .map(|v| v.powf(1.0 / spec.p))
            .collect())
    }

    /// Quadratic projection statistics for the skew basis under a
    /// plain-difference kernel. Rejects direction-projected kernels, whose
    /// form vanishes identically on rigid motions.
    pub fn rigid_gram(
        &self,
        fields: &[&DiscreteField],
        spec: &KernelSpec,
        max_cells: usize,
    ) -> Result<RigidGram> {
        if spec.kind == Kind::Projected {
            return Err(Error::DegenerateGram(
                "direction-projected kernels vanish on the skew basis".into(),
            ));
        }
        let plan = self.plan(spec, max_cells)?;
        let dim = self.dom.dim;
        let m = skew_dim(dim);
        let gt = m * (m + 1) / 2;
        let batch_cap = (LANES - gt) / (m + 1);
        let h = self.dom.h;
        let hh = h * h;

        let mut gram_tri: Option<Vec<f64>> = None;
        let mut rhs = Vec::with_capacity(fields.len());
        let mut norm_sq = Vec::with_capacity(fields.len());
        let fields_or_once: &[&DiscreteField] = if fields.is_empty() { &[] } else { fields };
        let mut batches: Vec<&[&DiscreteField]> =
            fields_or_once.chunks(batch_cap.max(1)).collect();
        if batches.is_empty() {
            batches.push(&[]);
        }
        for batch in batches {
            let vals: Vec<Vec<f64>> = batch
                .iter()
                .map(|u| self.gather(u))
                .collect::<Result<_>>()?;
            let nb = vals.len();
            let totals = self.sum_pairs(&plan, |i, j, off, k, acc| {
                let mut w = [[0.0f64; 3]; 3];
                skew_offset_basis(dim, off, &mut w);
                let kh2 = k * hh;
                let mut lane = 0usize;
                for a in 0..m {
                    for b in a..m {
                        let mut dot = 0.0;
                        for c in 0..dim {
                            dot += w[a][c] * w[b][c];
                        }
                        acc[lane].add(kh2 * dot);
                        lane += 1;
                    }
                }
                let kh = k * h;
                for v in vals.iter().take(nb) {
                    let (bi, bj) = (i * dim, j * dim);
                    let mut du = [0.0f64; 3];
                    let mut q = 0.0;
                    for c in 0..dim {
                        let d = v[bi + c] - v[bj + c];
                        du[c] = d;
                        q += d * d;
                    }
                    for wa in w.iter().take(m) {
                        let mut dot = 0.0;
                        for c in 0..dim {
                            dot += du[c] * wa[c];
                        }
                        acc[lane].add(kh * dot);
                        lane += 1;
                    }
                    acc[lane].add(k * q);
                    lane += 1;
                }
            });
            if gram_tri.is_none() {
                gram_tri = Some(totals[..gt].to_vec());
            }
            let mut lane = gt;
            for _ in 0..nb {
                rhs.push(totals[lane..lane + m].to_vec());
                lane += m;
                norm_sq.push(totals[lane]);
                lane += 1;
            }
        }
        let tri = gram_tri.expect("at least one pass always runs");
        let mut gram = vec![0.0f64; m * m];
        let mut idx = 0usize;
        for a in 0..m {
            for b in a..m {
                gram[a * m + b] = tri[idx];
                gram[b * m + a] = tri[idx];
                idx += 1;
            }
        }
        Ok(RigidGram { m, gram, rhs, norm_sq })
    }

    /// `p`-th power of the plain-difference seminorm of `u - rigid(a)`,
    /// where `a` are coefficients in the skew basis. Translation parts of a
    /// rigid motion cancel in differences, so they never appear here.
    pub fn rigid_residual_p(
        &self,
        field: &DiscreteField,
        a: &[f64],
        spec: &KernelSpec,
        max_cells: usize,
    ) -> Result<f64> {
        let mut out =
            self.rigid_residual_multi(&[field], &[a.to_vec()], spec, max_cells, false)?;
        Ok(out.remove(0).0)
    }

    /// Residual together with its gradient in the skew coefficients.
    pub fn rigid_residual_grad(
        &self,
        field: &DiscreteField,
        a: &[f64],
        spec: &KernelSpec,
        max_cells: usize,
    ) -> Result<(f64, Vec<f64>)> {
        let mut out =
            self.rigid_residual_multi(&[field], &[a.to_vec()], spec, max_cells, true)?;
        let (f, g, _) = out.remove(0);
        Ok((f, g))
    }

    /// Residual, gradient, and full Hessian (row-major `m x m`) in one pass,
    /// for Newton steps.
    pub fn rigid_residual_newton(
        &self,
        field: &DiscreteField,
        a: &[f64],
        spec: &KernelSpec,
        max_cells: usize,
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let mut out =
            self.rigid_residual_multi(&[field], &[a.to_vec()], spec, max_cells, true)?;
        Ok(out.remove(0))
    }

    /// Residuals for several fields, each with its own skew coefficients,
    /// fused into shared pair sweeps. With `want_derivs` every field also
    /// gets its gradient and row-major Hessian from the same sweep; this is
    /// what keeps batched Newton minimization affordable, since one pass
    /// serves `LANES / (1 + m + m(m+1)/2)` fields at once.
    pub fn rigid_residual_multi(
        &self,
        fields: &[&DiscreteField],
        coeffs: &[Vec<f64>],
        spec: &KernelSpec,
        max_cells: usize,
        want_derivs: bool,
    ) -> Result<Vec<(f64, Vec<f64>, Vec<f64>)>> {
        if spec.kind == Kind::Projected {
            return Err(Error::DegenerateGram(
                "rigid residuals are measured in the plain-difference form".into(),
            ));
        }
        let dim = self.dom.dim;
        let m = skew_dim(dim);
        if coeffs.len() != fields.len() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficient vectors for {} fields",
                coeffs.len(),
                fields.len()
            )));
        }
        for a in coeffs {
            if a.len() != m {
                return Err(Error::InvalidParameter(format!(
                    "expected {m} skew coefficients, got {}",
                    a.len()
                )));
            }
        }
        let plan = self.plan(spec, max_cells)?;
        let h = self.dom.h;
        let hh = h * h;
        let p = spec.p;
        let pow = PowSq::new(p);
        let powg = PowSqGrad::new(p);
        let lanes_per = if want_derivs { 1 + m + m * (m + 1) / 2 } else { 1 };
        let batch_cap = (LANES / lanes_per).max(1);
        let mut out = Vec::with_capacity(fields.len());
        for (fs, cs) in fields.chunks(batch_cap).zip(coeffs.chunks(batch_cap)) {
            let vals: Vec<Vec<f64>> = fs
                .iter()
                .map(|u| self.gather(u))
                .collect::<Result<_>>()?;
            let totals = self.sum_pairs(&plan, |i, j, off, k, acc| {
                let mut w = [[0.0f64; 3]; 3];
                skew_offset_basis(dim, off, &mut w);
                let (bi, bj) = (i * dim, j * dim);
                for (fi, (va, aa)) in vals.iter().zip(cs).enumerate() {
                    let base = fi * lanes_per;
                    let mut v = [0.0f64; 3];
                    let mut q = 0.0;
                    for c in 0..dim {
                        let mut rig = 0.0;
                        for (ak, wk) in aa.iter().zip(w.iter()) {
                            rig += ak * wk[c];
                        }
                        let d = va[bi + c] - va[bj + c] - h * rig;
                        v[c] = d;
                        q += d * d;
                    }
                    if q == 0.0 {
                        continue;
                    }
                    acc[base].add(pow.eval(q) * k);
                    if !want_derivs {
                        continue;
                    }
                    let gq = powg.eval(q);
                    let g = p * gq * k * h;
                    let mut dots = [0.0f64; 3];
                    for (kk, wk) in w.iter().enumerate().take(m) {
                        let mut dot = 0.0;
                        for c in 0..dim {
                            dot += v[c] * wk[c];
                        }
                        dots[kk] = h * dot;
                        acc[base + 1 + kk].add(-g * dot);
                    }
                    // d2/da_k da_l of |v|^p: p (p-2) |v|^(p-4) <v,dI_k><v,dI_l>
                    //                       + p |v|^(p-2) <dI_k, dI_l>.
                    let curv = (p - 2.0) * gq / q;
                    let mut lane = base + 1 + m;
                    for ka in 0..m {
                        for kb in ka..m {
                            let mut wdot = 0.0;
                            for c in 0..dim {
                                wdot += w[ka][c] * w[kb][c];
                            }
                            let hval = p * k * (curv * dots[ka] * dots[kb] + gq * hh * wdot);
                            acc[lane].add(hval);
                            lane += 1;
                        }
                    }
                }
            });
            for fi in 0..fs.len() {
                let base = fi * lanes_per;
                out.push(unpack_residual_lanes(&totals, base, m, want_derivs));
            }
        }
        Ok(out)
    }
}

fn unpack_residual_lanes(
    totals: &[f64],
    base: usize,
    m: usize,
    want_derivs: bool,
) -> (f64, Vec<f64>, Vec<f64>) {
    let f = totals[base];
    if !want_derivs {
        return (f, Vec::new(), Vec::new());
    }
    let grad = totals[base + 1..base + 1 + m].to_vec();
    let hess = {
        let mut hfull = vec![0.0f64; m * m];
        let mut lane = base + 1 + m;
        for ka in 0..m {
            for kb in ka..m {
                hfull[ka * m + kb] = totals[lane];
                hfull[kb * m + ka] = totals[lane];
                lane += 1;
            }
        }
        hfull
    };
    (f, grad, hess)
}
