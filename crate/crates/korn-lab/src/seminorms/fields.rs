//! Vector fields sampled at cell centers, plus the stock generators used by
//! the Korn-quotient experiments: linear flows, a localized vortex, a field
//! jumping across the slit, and band-limited random trigonometric fields.

use crate::error::{Error, Result};
use crate::geometry::GridDomain;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A vector field with one `dim`-component value per occupied cell, stored
/// in rank order (`values[rank * dim + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl DiscreteField {
    /// Samples `f` at every cell center. `f` writes the field value for the
    /// center `x` into `out` (both of length `dom.dim`).
    pub fn from_fn(dom: &GridDomain, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let dim = dom.dim;
        let n = dom.n_cells();
        let mut values = vec![0.0; n * dim];
        let mut out = [0.0f64; 3];
        for r in 0..n {
            f(dom.center(r), &mut out[..dim]);
            values[r * dim..(r + 1) * dim].copy_from_slice(&out[..dim]);
        }
        DiscreteField { dim, values }
    }

    pub fn zeros(dom: &GridDomain) -> Self {
        DiscreteField {
            dim: dom.dim,
            values: vec![0.0; dom.n_cells() * dom.dim],
        }
    }

    pub fn n_points(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn value(&self, rank: usize) -> &[f64] {
        &self.values[rank * self.dim..(rank + 1) * self.dim]
    }

    /// `self <- self + t * other`, component-wise.
    pub fn axpy(&mut self, t: f64, other: &DiscreteField) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += t * b;
        }
    }

    pub fn scale(&mut self, t: f64) {
        for a in &mut self.values {
            *a *= t;
        }
    }

    /// Largest absolute component, used to set scale-relative tolerances.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// The coordinate field `u(x) = x`.
pub fn identity_field(dom: &GridDomain) -> DiscreteField {
    DiscreteField::from_fn(dom, |x, out| out.copy_from_slice(x))
}

/// Simple shear `u(x) = (x_1, 0, ...)`: nonzero symmetric gradient, so it is
/// visible to the direction-projected seminorm.
pub fn shear_field(dom: &GridDomain) -> DiscreteField {
    DiscreteField::from_fn(dom, |x, out| {
        out.fill(0.0);
        out[0] = x[1];
    })
}

/// Gaussian-localized rotation around the domain center:
/// `u(x) = (-(y-c_1), x_0-c_0, 0) * exp(-|x-c|^2 / (2 sigma^2))` with
/// `sigma` a quarter of the bounding-box diameter. Close to rigid near the
/// center, decaying outward.
pub fn vortex_field(dom: &GridDomain) -> DiscreteField {
    let dim = dom.dim;
    let mut center = [0.0f64; 3];
    let mut diam2 = 0.0;
    for a in 0..dim {
        let w = dom.ext[a] as f64 * dom.h;
        center[a] = dom.lo[a] + 0.5 * w;
        diam2 += w * w;
    }
    let sigma = 0.25 * diam2.sqrt();
    let inv = 1.0 / (2.0 * sigma * sigma);
    DiscreteField::from_fn(dom, |x, out| {
        let mut r2 = 0.0;
        for a in 0..x.len() {
            let d = x[a] - center[a];
            r2 += d * d;
        }
        let g = (-r2 * inv).exp();
        out.fill(0.0);
        out[0] = -(x[1] - center[1]) * g;
        out[1] = (x[0] - center[0]) * g;
    })
}

/// A field that jumps across the slit: `u(x) = (1, 1) * eta(|x|) * zeta(t)`
/// above the slit line and `0` below, where `eta` is a trapezoid in the
/// distance from the slit tip (0 inside 1/8, ramp to 1 on [1/8, 1/4], plateau
/// to 1/2, ramp back to 0 at 3/4) and `zeta` ramps 0 -> 1 over the first 1/8
/// of the along-slit coordinate `t`. `eta` keeps the jump away from the tip
/// and the outer boundary; `zeta` kills the factor on the half-line behind
/// the tip, where the up/down indicator would otherwise cut through the
/// interior. The only discontinuity left is squarely across the slit.
pub fn jump_slit_field(dom: &GridDomain) -> Result<DiscreteField> {
    let slit = dom.slit.ok_or_else(|| {
        Error::InvalidParameter("jump field requires a domain with a slit".into())
    })?;
    let (sx, sy) = (slit[0], slit[1]);
    let dir = (slit[2] - sx).signum();
    Ok(DiscreteField::from_fn(dom, |x, out| {
        let dx = x[0] - sx;
        let dy = x[1] - sy;
        let r = (dx * dx + dy * dy).sqrt();
        let t = dx * dir;
        let eta = trapezoid(r) * (t / 0.125).clamp(0.0, 1.0);
        let up = if x[1] > sy { 1.0 } else { 0.0 };
        out.fill(0.0);
        out[0] = eta * up;
        out[1] = eta * up;
    }))
}

fn trapezoid(r: f64) -> f64 {
    if r <= 0.125 || r >= 0.75 {
        0.0
    } else if r < 0.25 {
        (r - 0.125) / 0.125
    } else if r <= 0.5 {
        1.0
    } else {
        (0.75 - r) / 0.25
    }
}

/// Band-limited random field: each component is a short cosine series over
/// integer frequencies `|k|_inf <= 2` in coordinates normalized to the
/// bounding box, with amplitudes damped by `1/(1+|k|^2)` and phases drawn
/// from a seeded generator. Smooth, deterministic per seed.
pub fn random_smooth_field(dom: &GridDomain, seed: u64) -> DiscreteField {
    let dim = dom.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Enumerate the frequency lattice once, in a fixed order.
    let mut modes: Vec<([i32; 3], Vec<(f64, f64)>)> = Vec::new();
    let kmax = 2i32;
    let mut push = |k: [i32; 3], rng: &mut ChaCha8Rng| {
        let k2: i32 = k.iter().map(|v| v * v).sum();
        if k2 == 0 {
            return;
        }
        let damp = 1.0 / (1.0 + k2 as f64);
        let per_comp: Vec<(f64, f64)> = (0..dim)
            .map(|_| {
                let amp: f64 = rng.gen_range(-1.0..1.0);
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                (amp * damp, phase)
            })
            .collect();
        modes.push((k, per_comp));
    };
    if dim == 2 {
        for kx in 0..=kmax {
            for ky in -kmax..=kmax {
                push([kx, ky, 0], &mut rng);
            }
        }
    } else {
        for kx in 0..=kmax {
            for ky in -kmax..=kmax {
                for kz in -kmax..=kmax {
                    push([kx, ky, kz], &mut rng);
                }
            }
        }
    }
    let lo = dom.lo;
    let mut width = [1.0f64; 3];
    for a in 0..dim {
        width[a] = dom.ext[a] as f64 * dom.h;
    }
    DiscreteField::from_fn(dom, |x, out| {
        let mut t = [0.0f64; 3];
        for a in 0..x.len() {
            t[a] = (x[a] - lo[a]) / width[a];
        }
        out.fill(0.0);
        for (k, comps) in &modes {
            let mut arg = 0.0;
            for a in 0..x.len() {
                arg += k[a] as f64 * t[a];
            }
            arg *= std::f64::consts::TAU;
            for (c, &(amp, phase)) in comps.iter().enumerate() {
                out[c] += amp * (arg + phase).cos();
            }
        }
    })
}
