//! End-to-end experiments: Korn quotients over field batteries, the
//! slit-square full-vs-truncated dichotomy, and admissibility checks that
//! tie weight exponents to the boundary's homogeneity estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_domain, DomainKind, DomainSpec, GridDomain};
use crate::hardy::{c_tree_bound, SumConvention, TreeWeights};
use crate::rigid::{min_over_rigid_batch, skew_dim, RigidFit};
use crate::seminorms::{
    identity_field, jump_slit_field, random_smooth_field, shear_field, vortex_field,
    DiscreteField, KernelSpec, Kind, PairEngine, DEFAULT_MAX_CELLS,
};
use crate::tree::Tree;
use crate::whitney::WhitneyDecomposition;

/// Which hypothesis set the quotient experiment runs under.
///
/// `Uniform` measures the plain (untruncated) quotient and is only
/// certified on the bundled domains known to be uniform; `John` truncates
/// both sides so the quotient stays meaningful on domains with slits or
/// other inward cusps; `Weighted` is the John setup with a boundary-distance
/// weight `d^(p beta)` on both kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KornMode {
    Uniform,
    John,
    Weighted,
}

impl KornMode {
    pub fn name(self) -> &'static str {
        match self {
            KornMode::Uniform => "uniform",
            KornMode::John => "john",
            KornMode::Weighted => "weighted",
        }
    }
}

/// Upper limit for the numerator truncation factor in John mode.
pub fn john_tau_limit(dim: usize) -> f64 {
    1.0 / (36.0 * (dim as f64).sqrt())
}

/// Domains on which the untruncated quotient is certified. Deciding
/// uniformity numerically is out of scope, so this is an allowlist: the
/// slit square is the deliberate counterexample and is excluded.
fn uniform_certified(kind: DomainKind) -> bool {
    !matches!(kind, DomainKind::SlitSquare)
}

/// Parameters of one quotient evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KornParams {
    pub mode: KornMode,
    pub s: f64,
    pub p: f64,
    /// Numerator truncation factor; defaults to `0.9 * john_tau_limit(n)`.
    pub tau_num: Option<f64>,
    /// Denominator truncation factor; defaults to 0.7.
    pub tau_den: Option<f64>,
    /// Boundary-distance weight exponent, weighted mode only.
    pub beta: Option<f64>,
    /// Lift the range checks on the truncation factors.
    pub allow_large_tau: bool,
    pub max_cells: usize,
}

impl KornParams {
    pub fn new(mode: KornMode, s: f64, p: f64) -> Self {
        KornParams {
            mode,
            s,
            p,
            tau_num: None,
            tau_den: None,
            beta: None,
            allow_large_tau: false,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }

    /// Resolve the mode into the two kernels: the numerator measures the
    /// plain-difference residual after minimizing over rigid motions, the
    /// denominator the projected-difference seminorm of the field itself.
    pub fn kernel_specs(&self, dom: &GridDomain) -> Result<(KernelSpec, KernelSpec)> {
        match self.mode {
            KornMode::Uniform => {
                if self.tau_num.is_some() || self.tau_den.is_some() || self.beta.is_some() {
                    return Err(Error::InvalidParameter(
                        "uniform mode uses full kernels; truncation and weight \
                         parameters do not apply"
                            .into(),
                    ));
                }
                let kind = dom
                    .spec
                    .as_ref()
                    .map(|sp| sp.kind)
                    .ok_or_else(|| {
                        Error::InvalidParameter(
                            "uniform mode is certified only on bundled domains".into(),
                        )
                    })?;
                if !uniform_certified(kind) {
                    return Err(Error::InvalidParameter(format!(
                        "domain '{}' is not uniform; use john mode",
                        kind.name()
                    )));
                }
                Ok((
                    KernelSpec::plain(Kind::Gagliardo, self.s, self.p),
                    KernelSpec::plain(Kind::Projected, self.s, self.p),
                ))
            }
            KornMode::John | KornMode::Weighted => {
                let limit = john_tau_limit(dom.dim);
                let t1 = self.tau_num.unwrap_or(0.9 * limit);
                let t2 = self.tau_den.unwrap_or(0.7);
                if !self.allow_large_tau {
                    if !(t1 > 0.0 && t1 < limit) {
                        return Err(Error::InvalidParameter(format!(
                            "numerator truncation {t1} outside (0, {limit:.6}); \
                             set allow_large_tau to override"
                        )));
                    }
                    if !(0.6..1.0).contains(&t2) {
                        return Err(Error::InvalidParameter(format!(
                            "denominator truncation {t2} outside [3/5, 1); \
                             set allow_large_tau to override"
                        )));
                    }
                }
                let beta = match self.mode {
                    KornMode::John => {
                        if self.beta.is_some() {
                            return Err(Error::InvalidParameter(
                                "john mode is unweighted; use weighted mode for beta".into(),
                            ));
                        }
                        None
                    }
                    _ => Some(self.beta.ok_or_else(|| {
                        Error::InvalidParameter("weighted mode requires beta".into())
                    })?),
                };
                let make = |kind: Kind, tau: f64| match beta {
                    Some(b) => KernelSpec::weighted(kind, self.s, self.p, Some(tau), b),
                    None => KernelSpec::truncated(kind, self.s, self.p, tau),
                };
                Ok((make(Kind::Gagliardo, t1), make(Kind::Projected, t2)))
            }
        }
    }
}

/// One quotient measurement. `numerator` and `denominator` are seminorm
/// values (p-th roots of the double sums).
#[derive(Clone, Debug, Serialize)]
pub struct KornResult {
    pub numerator: f64,
    pub denominator: f64,
    pub quotient: f64,
    /// Skew coefficients of the minimizing rigid motion.
    pub coeffs: Vec<f64>,
    /// Pair sweeps spent on the numerator minimization.
    pub passes: usize,
    /// Set when the rigid minimization had no information to work with
    /// (empty truncated kernel) or the denominator vanished.
    pub degenerate: bool,
}

fn finish_quotient(fit: RigidFit, den_p: f64, p: f64, mut degenerate: bool) -> KornResult {
    let numerator = fit.residual_p.powf(1.0 / p);
    let denominator = den_p.powf(1.0 / p);
    let quotient = if den_p > 0.0 {
        numerator / denominator
    } else {
        // A vanishing denominator means the field is rigid up to the
        // kernel's resolution, and the minimized numerator is rounding
        // residue of the same origin; report the 0/0 case as 0 and flag it.
        degenerate = true;
        0.0
    };
    KornResult {
        numerator,
        denominator,
        quotient,
        coeffs: fit.coeffs,
        passes: fit.passes,
        degenerate,
    }
}

fn quotients(
    dom: &GridDomain,
    fields: &[&DiscreteField],
    params: &KornParams,
) -> Result<Vec<KornResult>> {
    let (num_spec, den_spec) = params.kernel_specs(dom)?;
    let engine = PairEngine::whole_domain(dom);
    let den_p = engine.seminorms_p(fields, &den_spec, params.max_cells)?;
    let (fits, degenerate) =
        match min_over_rigid_batch(&engine, fields, &num_spec, params.max_cells) {
            Ok(fits) => (fits, false),
            Err(Error::DegenerateGram(_)) => {
                // The truncated numerator kernel can be empty at coarse
                // resolutions (truncation radius below the cell size), which
                // zeroes the Gram matrix. The unprojected residual is a valid
                // upper bound for the minimum, so report that instead.
                let raw = engine.seminorms_p(fields, &num_spec, params.max_cells)?;
                let m = skew_dim(dom.dim);
                let fits = raw
                    .into_iter()
                    .map(|r| RigidFit {
                        coeffs: vec![0.0; m],
                        residual_p: r,
                        passes: 2,
                        converged: true,
                    })
                    .collect();
                (fits, true)
            }
            Err(e) => return Err(e),
        };
    Ok(fits
        .into_iter()
        .zip(den_p)
        .map(|(fit, den)| finish_quotient(fit, den, params.p, degenerate))
        .collect())
}

/// Korn quotient of a single field: numerator is the rigid-motion-minimized
/// plain seminorm, denominator the projected seminorm, kernels per `params`.
pub fn korn_quotient(
    dom: &GridDomain,
    field: &DiscreteField,
    params: &KornParams,
) -> Result<KornResult> {
    Ok(quotients(dom, &[field], params)?.remove(0))
}

/// The standard field battery: identity, shear, a localized vortex, the
/// jump field when the domain has a slit, and `n_random` random smooth
/// fields seeded from `seed`. The max quotient over the battery is the
/// empirical Korn constant of a parameter point.
pub fn field_battery(
    dom: &GridDomain,
    seed: u64,
    n_random: usize,
) -> Result<Vec<(String, DiscreteField)>> {
    let mut out = vec![
        ("identity".to_string(), identity_field(dom)),
        ("shear".to_string(), shear_field(dom)),
        ("vortex".to_string(), vortex_field(dom)),
    ];
    if dom.slit.is_some() {
        out.push(("jump-slit".to_string(), jump_slit_field(dom)?));
    }
    for i in 0..n_random {
        out.push((
            format!("random-{}", i + 1),
            random_smooth_field(dom, seed.wrapping_add(i as u64)),
        ));
    }
    Ok(out)
}

/// Quotients for a whole battery, sharing the denominator sweep across all
/// fields and batching the numerator minimizations.
pub fn battery_quotients(
    dom: &GridDomain,
    fields: &[(String, DiscreteField)],
    params: &KornParams,
) -> Result<Vec<(String, KornResult)>> {
    let refs: Vec<&DiscreteField> = fields.iter().map(|(_, f)| f).collect();
    let results = quotients(dom, &refs, params)?;
    Ok(fields
        .iter()
        .map(|(name, _)| name.clone())
        .zip(results)
        .collect())
}

/// Field generators addressable by name (for the CLI).
pub fn field_by_name(dom: &GridDomain, name: &str, seed: u64) -> Result<DiscreteField> {
    match name {
        "constant" => Ok(DiscreteField::from_fn(dom, |_, out| out.fill(1.0))),
        "identity" => Ok(identity_field(dom)),
        "shear" => Ok(shear_field(dom)),
        "skew" => {
            let mut a = vec![0.0; skew_dim(dom.dim)];
            a[0] = 1.0;
            Ok(crate::rigid::rigid_field(dom, &a, &[0.0; 3]))
        }
        "vortex" => Ok(vortex_field(dom)),
        "jump-slit" => jump_slit_field(dom),
        "random-smooth" => Ok(random_smooth_field(dom, seed)),
        other => Err(Error::InvalidParameter(format!(
            "unknown field '{other}'; expected constant, identity, shear, skew, \
             vortex, jump-slit, or random-smooth"
        ))),
    }
}

/// One resolution step of the slit-square dichotomy.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DichotomySample {
    pub resolution: u32,
    pub cells: usize,
    /// Plain Gagliardo seminorm of the jump field.
    pub full: f64,
    /// Truncated seminorm of the same field.
    pub truncated: f64,
}

/// Measures the jump field's plain vs truncated seminorm on the slit square
/// across resolutions. The plain value diverges under refinement (the jump
/// is visible to arbitrarily close cross-slit pairs), the truncated one
/// stabilizes: truncation radii shrink with the boundary distance, so
/// cross-slit pairs drop out.
pub fn slit_dichotomy(
    resolutions: &[u32],
    s: f64,
    p: f64,
    tau: f64,
    max_cells: usize,
) -> Result<Vec<DichotomySample>> {
    let mut out = Vec::with_capacity(resolutions.len());
    for &res in resolutions {
        let dom = build_domain(&DomainSpec {
            kind: DomainKind::SlitSquare,
            resolution: res,
            depth: None,
        })?;
        let field = jump_slit_field(&dom)?;
        let engine = PairEngine::whole_domain(&dom);
        let full = engine.seminorms(
            &[&field],
            &KernelSpec::plain(Kind::Gagliardo, s, p),
            max_cells,
        )?[0];
        let truncated = engine.seminorms(
            &[&field],
            &KernelSpec::truncated(Kind::Gagliardo, s, p, tau),
            max_cells,
        )?[0];
        out.push(DichotomySample { resolution: res, cells: dom.n_cells(), full, truncated });
    }
    Ok(out)
}

/// Cube-tree weights `mu = nu = side^(n + p gamma)`, the exponent family the
/// tree Hardy inequality is invoked with.
pub fn cube_tree_weights(
    dec: &WhitneyDecomposition,
    dim: usize,
    p: f64,
    gamma: f64,
) -> TreeWeights {
    let e = dim as f64 + p * gamma;
    let w: Vec<f64> = dec.cubes.iter().map(|c| c.side.powf(e)).collect();
    TreeWeights { mu: w.clone(), nu: w }
}

/// Admissibility verdict for one `(s, p, beta)` point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConditionPoint {
    pub s: f64,
    pub p: f64,
    pub beta: f64,
    /// Effective tree-weight exponent, `beta + 1 - s`.
    pub gamma: f64,
    /// Lower admissibility threshold `-(n - lambda)/p` from the boundary's
    /// homogeneity exponent `lambda`.
    pub threshold: f64,
    pub admissible: bool,
    /// Guaranteed Hardy-constant bound at these weights (best over the
    /// theta grid).
    pub c_tree_bound: f64,
    pub best_theta: f64,
}

/// For each `(s, p, beta)` point: the effective exponent `gamma = beta+1-s`,
/// whether it clears the threshold `-(n - lambda_hat)/p`, and the tree
/// constant the weights `side^(n + p gamma)` produce on this cube tree.
pub fn condition_check(
    dec: &WhitneyDecomposition,
    tree: &Tree,
    dim: usize,
    lambda_hat: f64,
    points: &[(f64, f64, f64)],
) -> Result<Vec<ConditionPoint>> {
    let mut out = Vec::with_capacity(points.len());
    for &(s, p, beta) in points {
        let gamma = beta + 1.0 - s;
        let threshold = -((dim as f64 - lambda_hat) / p);
        let weights = cube_tree_weights(dec, dim, p, gamma);
        let (bound, theta) = c_tree_bound(tree, &weights, p, SumConvention::StrictTop)?;
        out.push(ConditionPoint {
            s,
            p,
            beta,
            gamma,
            threshold,
            admissible: gamma > threshold,
            c_tree_bound: bound,
            best_theta: theta,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigid::rigid_field;
    use crate::tree::{build_tree, TreeStrategy};
    use crate::whitney::decompose;

    fn bundled(kind: DomainKind, res: u32) -> GridDomain {
        let depth = matches!(kind, DomainKind::KochPrefractal).then_some(3);
        build_domain(&DomainSpec { kind, resolution: res, depth }).unwrap()
    }

    #[test]
    fn uniform_mode_rejects_the_slit_square_and_tau_overrides() {
        let dom = bundled(DomainKind::SlitSquare, 32);
        let params = KornParams::new(KornMode::Uniform, 0.5, 2.0);
        assert!(matches!(
            params.kernel_specs(&dom),
            Err(Error::InvalidParameter(_))
        ));

        let square = bundled(DomainKind::UnitSquare, 32);
        let mut with_tau = KornParams::new(KornMode::Uniform, 0.5, 2.0);
        with_tau.tau_den = Some(0.7);
        assert!(with_tau.kernel_specs(&square).is_err());

        let ok = KornParams::new(KornMode::Uniform, 0.5, 2.0);
        let (num, den) = ok.kernel_specs(&square).unwrap();
        assert_eq!(num.kind, Kind::Gagliardo);
        assert_eq!(den.kind, Kind::Projected);
        assert!(num.tau.is_none() && den.tau.is_none());
    }

    #[test]
    fn john_mode_enforces_truncation_ranges_with_override() {
        let dom = bundled(DomainKind::SlitSquare, 32);
        let limit = john_tau_limit(2);

        let defaults = KornParams::new(KornMode::John, 0.5, 2.0);
        let (num, den) = defaults.kernel_specs(&dom).unwrap();
        assert!((num.tau.unwrap() - 0.9 * limit).abs() < 1e-15);
        assert_eq!(den.tau.unwrap(), 0.7);

        let mut big = KornParams::new(KornMode::John, 0.5, 2.0);
        big.tau_num = Some(0.5); // far above the limit
        assert!(big.kernel_specs(&dom).is_err());
        big.allow_large_tau = true;
        assert!(big.kernel_specs(&dom).is_ok());

        let mut small_den = KornParams::new(KornMode::John, 0.5, 2.0);
        small_den.tau_den = Some(0.5); // below 3/5
        assert!(small_den.kernel_specs(&dom).is_err());

        let mut with_beta = KornParams::new(KornMode::John, 0.5, 2.0);
        with_beta.beta = Some(0.1);
        assert!(with_beta.kernel_specs(&dom).is_err());

        assert!(KornParams::new(KornMode::Weighted, 0.5, 2.0)
            .kernel_specs(&dom)
            .is_err()); // beta required
    }

    #[test]
    fn rigid_fields_give_guarded_zero_quotients() {
        let dom = bundled(DomainKind::UnitSquare, 32);
        // Dyadic coefficients on a dyadic grid: differences cancel exactly.
        let rigid = rigid_field(&dom, &[0.75], &[0.25, -0.5, 0.0]);
        let params = KornParams::new(KornMode::Uniform, 0.5, 2.0);
        let r = korn_quotient(&dom, &rigid, &params).unwrap();
        assert!(r.numerator <= 1e-10, "numerator {}", r.numerator);
        assert_eq!(r.quotient, 0.0);
        assert!(r.degenerate);
    }

    #[test]
    fn weighted_mode_with_zero_beta_reproduces_john_mode() {
        let dom = bundled(DomainKind::SlitSquare, 32);
        let field = jump_slit_field(&dom).unwrap();
        let john = korn_quotient(&dom, &field, &KornParams::new(KornMode::John, 0.5, 2.0))
            .unwrap();
        let mut wp = KornParams::new(KornMode::Weighted, 0.5, 2.0);
        wp.beta = Some(0.0);
        let weighted = korn_quotient(&dom, &field, &wp).unwrap();
        assert_eq!(john.numerator, weighted.numerator);
        assert_eq!(john.denominator, weighted.denominator);
        assert_eq!(john.quotient, weighted.quotient);
    }

    #[test]
    fn quotient_is_invariant_under_adding_a_rigid_motion() {
        let dom = bundled(DomainKind::UnitSquare, 24);
        let mut field = random_smooth_field(&dom, 11);
        let base = korn_quotient(&dom, &field, &KornParams::new(KornMode::Uniform, 0.5, 2.0))
            .unwrap();
        field.axpy(1.0, &rigid_field(&dom, &[0.5], &[0.25, -0.125, 0.0]));
        let shifted =
            korn_quotient(&dom, &field, &KornParams::new(KornMode::Uniform, 0.5, 2.0)).unwrap();
        // Denominator kills rigid motions; numerator minimum shifts with it.
        let rel = (base.quotient - shifted.quotient).abs() / base.quotient;
        assert!(rel < 1e-8, "quotient moved by {rel}");
        assert!((base.coeffs[0] + 0.5 - shifted.coeffs[0]).abs() < 1e-8);
    }

    #[test]
    fn numerator_is_monotone_in_the_truncation_factor() {
        let dom = bundled(DomainKind::SlitSquare, 48);
        let field = jump_slit_field(&dom).unwrap();
        let mut prev = 0.0;
        for tau in [0.02, 0.1, 0.4] {
            let mut params = KornParams::new(KornMode::John, 0.5, 2.0);
            params.tau_num = Some(tau);
            params.allow_large_tau = true;
            let r = korn_quotient(&dom, &field, &params).unwrap();
            assert!(
                r.numerator >= prev - 1e-12,
                "numerator shrank when tau grew: {} -> {} at tau={tau}",
                prev,
                r.numerator
            );
            prev = r.numerator;
        }
    }

    #[test]
    fn battery_includes_jump_only_on_slit_domains() {
        let slit = bundled(DomainKind::SlitSquare, 16);
        let names: Vec<String> = field_battery(&slit, 1, 2)
            .unwrap()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(names, ["identity", "shear", "vortex", "jump-slit", "random-1", "random-2"]);

        let square = bundled(DomainKind::UnitSquare, 16);
        let names: Vec<String> = field_battery(&square, 1, 1)
            .unwrap()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(names, ["identity", "shear", "vortex", "random-1"]);
    }

    #[test]
    fn battery_quotients_match_single_field_runs() {
        let dom = bundled(DomainKind::UnitSquare, 16);
        let fields = field_battery(&dom, 3, 2).unwrap();
        let params = KornParams::new(KornMode::Uniform, 0.5, 1.5);
        let batch = battery_quotients(&dom, &fields, &params).unwrap();
        for (name, field) in &fields {
            let single = korn_quotient(&dom, field, &params).unwrap();
            let batched = &batch.iter().find(|(n, _)| n == name).unwrap().1;
            assert_eq!(single.quotient, batched.quotient, "field {name}");
        }
    }

    #[test]
    fn dichotomy_shows_divergence_only_in_the_full_seminorm() {
        // Gagliardo energies (p-th powers) of the jump field: the full one
        // diverges under refinement because ever-closer cross-slit pairs
        // enter the double sum; the distance-truncated one never sees those
        // pairs and settles down.
        let p = 3.0;
        let samples = slit_dichotomy(&[32, 64], 0.5, p, 0.5, usize::MAX).unwrap();
        assert_eq!(samples.len(), 2);
        let growth_full = (samples[1].full / samples[0].full).powf(p);
        let growth_trunc = (samples[1].truncated / samples[0].truncated).powf(p);
        assert!(growth_full > 1.2, "full energy should diverge, got x{growth_full}");
        assert!(growth_trunc < 1.1, "truncated energy should settle, got x{growth_trunc}");
    }

    #[test]
    fn condition_check_tags_admissibility_and_bounds_the_tree_constant() {
        let dom = bundled(DomainKind::LShape, 64);
        let dec = decompose(&dom).unwrap();
        let tree = build_tree(&dom, &dec, TreeStrategy::Bfs).unwrap();
        // The L-shape boundary is rectifiable: lambda = 1.
        let pts = vec![(0.5, 2.0, 0.0), (0.9, 2.0, -0.6)];
        let rows = condition_check(&dec, &tree.tree, dom.dim, 1.0, &pts).unwrap();
        assert!(rows[0].admissible); // gamma = 0.5 > -0.5
        assert!(!rows[1].admissible); // gamma = -0.5, at/below threshold
        assert!(rows[0].c_tree_bound.is_finite() && rows[0].c_tree_bound > 0.0);

        // Heavier small-cube weights (smaller gamma) can only increase the
        // tree constant.
        let sweep: Vec<(f64, f64, f64)> =
            [0.25, 0.5, 0.75].iter().map(|&g| (1.0 - g, 2.0, 0.0)).collect();
        let curve = condition_check(&dec, &tree.tree, dom.dim, 1.0, &sweep).unwrap();
        assert!(curve[0].gamma < curve[1].gamma && curve[1].gamma < curve[2].gamma);
        assert!(curve[0].c_tree_bound >= curve[1].c_tree_bound - 1e-12);
        assert!(curve[1].c_tree_bound >= curve[2].c_tree_bound - 1e-12);
    }
}
