//! Magnetostatics of a soft magnetic body: given an applied field and an
//! M-H constitutive curve, solve `f(M) + B M = H_applied` for the
//! magnetization, where `-B M` is the demagnetizing field of `M` on the
//! body (static kernel, `a = 0`).
//!
//! The demagnetizing field has a second, independent evaluation through
//! the scalar magnetostatic potential `psi(x) = (1/sigma_n) int <M(y),
//! x - y> / |x - y|^n dy` followed by a finite-difference gradient, used
//! to cross-check the Clifford composition route.

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::clifford::Multivector;
use crate::grid::{Field, GridDomain};
use crate::nemyckii::{
    audit_law, constant_fn, CoerciveClaim, GrowthClaim, LawClaims, PointwiseLaw, PropertyReport,
    SampleConfig, ValueLayout,
};
use crate::operators::{neighbor_rank, OperatorContext};
use crate::solver::{solve_monotone, SolveConfig, SolveResult};
use crate::{Error, Result, Scalar};

/// Constitutive M-H curve, written as the material law `H = f(M)`.
/// Stored in plain `f64` so it can travel through config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum MhCurve {
    /// `f(M) = M / chi`.
    Linear { chi: f64 },
    /// `f(M) = M / chi0 + beta M |M| / (m_s + |M|)`: constant differential
    /// susceptibility at the origin, stiffening toward `1/chi0 + beta`.
    Saturating { chi0: f64, m_s: f64, beta: f64 },
}

impl MhCurve {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MhCurve::Linear { chi } => {
                if !(chi > 0.0) || !chi.is_finite() {
                    return Err(Error::Config(format!(
                        "linear curve needs finite chi > 0, got {chi}"
                    )));
                }
            }
            MhCurve::Saturating { chi0, m_s, beta } => {
                if !(chi0 > 0.0) || !chi0.is_finite() {
                    return Err(Error::Config(format!(
                        "saturating curve needs finite chi0 > 0, got {chi0}"
                    )));
                }
                if !(m_s > 0.0) || !m_s.is_finite() {
                    return Err(Error::Config(format!(
                        "saturating curve needs finite m_s > 0, got {m_s}"
                    )));
                }
                if !(beta >= 0.0) || !beta.is_finite() {
                    return Err(Error::Config(format!(
                        "saturating curve needs finite beta >= 0, got {beta}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Strong monotonicity constant of `f`.
    pub fn monotone_constant(&self) -> f64 {
        match *self {
            MhCurve::Linear { chi } => 1.0 / chi,
            MhCurve::Saturating { chi0, .. } => 1.0 / chi0,
        }
    }

    /// Lipschitz constant of `f`. For the radial map `f(M) = phi(|M|) M`
    /// with increasing `phi` this is `sup max(phi, (phi(s) s)')`, here
    /// `1/chi0 + beta`.
    pub fn lipschitz_constant(&self) -> f64 {
        match *self {
            MhCurve::Linear { chi } => 1.0 / chi,
            MhCurve::Saturating { chi0, beta, .. } => 1.0 / chi0 + beta,
        }
    }

    /// Radial factor: `f(M) = radial(|M|) * M`.
    fn radial(&self, s: f64) -> f64 {
        match *self {
            MhCurve::Linear { chi } => 1.0 / chi,
            MhCurve::Saturating { chi0, m_s, beta } => 1.0 / chi0 + beta * s / (m_s + s),
        }
    }

    /// Wraps the curve as a pointwise law on real vector fields.
    pub fn law<T: Scalar>(&self, dimension: usize) -> Result<MhLaw<T>> {
        self.validate()?;
        if !(2..=4).contains(&dimension) {
            return Err(Error::UnsupportedDimension {
                got: dimension,
                expected: "2..=4".into(),
            });
        }
        Ok(MhLaw {
            curve: self.clone(),
            dimension,
            _marker: std::marker::PhantomData,
        })
    }
}

/// [`MhCurve`] as a [`PointwiseLaw`], with its structural claims attached.
pub struct MhLaw<T> {
    curve: MhCurve,
    dimension: usize,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> PointwiseLaw<T> for MhLaw<T> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn value_layout(&self) -> ValueLayout {
        ValueLayout::RealVector
    }

    fn evaluate(&self, _x: &[T], v: &Multivector<T>) -> Result<Multivector<T>> {
        let s = v.norm().to_f64().unwrap_or(f64::NAN);
        if !s.is_finite() {
            return Err(Error::Domain("magnetization is not finite".into()));
        }
        Ok(v.scaled(T::of(self.curve.radial(s))))
    }

    fn claims(&self) -> LawClaims<T> {
        let c = T::of(self.curve.monotone_constant());
        let l = T::of(self.curve.lipschitz_constant());
        LawClaims {
            growth: Some(GrowthClaim {
                bound: constant_fn(T::zero()),
                slope: l,
            }),
            monotone: true,
            strictly_monotone: true,
            coercive: Some(CoerciveClaim {
                modulus: c,
                offset: constant_fn(T::zero()),
            }),
            positive: true,
            asymptotically_positive: None,
            lipschitz: Some(l),
        }
    }
}

fn require_static<T: Scalar>(ctx: &OperatorContext<T>) -> Result<()> {
    if ctx.params().is_undisturbed() {
        Ok(())
    } else {
        Err(Error::Domain(
            "magnetostatics uses the static kernel; build the context with a = 0".into(),
        ))
    }
}

fn require_real_vector<T: Scalar>(u: &Field<T>, what: &str) -> Result<()> {
    let scale = u.max_abs().max(T::one());
    if u.vector_leak() > T::of(1e-9) * scale {
        return Err(Error::Domain(format!(
            "{what} must be a real vector field"
        )));
    }
    Ok(())
}

/// Uniform vector field over the active voxels.
pub fn uniform_field<T: Scalar>(
    domain: &std::sync::Arc<GridDomain<T>>,
    direction: &[T],
) -> Result<Field<T>> {
    let n = domain.dimension();
    if direction.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "direction has {} components on a {}-d grid",
            direction.len(),
            n
        )));
    }
    let mut proto = Multivector::zero(n);
    for (j, &d) in direction.iter().enumerate() {
        proto.set_coeff(1 << j, num_complex::Complex::new(d, T::zero()));
    }
    Field::from_fn(domain, |_| proto.clone())
}

/// `B M` for the static kernel: the operator entering the magnetization
/// equation. The demagnetizing field of `M` is its negative.
pub fn demag_apply<T: Scalar>(ctx: &OperatorContext<T>, m: &Field<T>) -> Result<Field<T>> {
    require_static(ctx)?;
    require_real_vector(m, "magnetization")?;
    ctx.singular_b_apply(m)
}

/// Scalar finite-difference derivative of the grade-0 part of `u` along
/// `axis`, same stencil ladder as the Dirac operator.
fn fd_derivative<T: Scalar>(u: &Field<T>, axis: usize) -> Result<Field<T>> {
    let domain = u.domain().clone();
    let n = domain.dimension();
    let h = domain.spacing()[axis];
    let mut out = Field::zero(&domain);
    let mut coord = vec![0usize; n];
    let value = |rank: usize| u.value(rank).scalar_coeff();
    for (rank, &flat) in domain.active_indices().iter().enumerate() {
        domain.lattice_of(flat, &mut coord);
        let plus1 = neighbor_rank(&domain, &coord, axis, 1);
        let minus1 = neighbor_rank(&domain, &coord, axis, -1);
        let d = match (minus1, plus1) {
            (Some(m), Some(p)) => (value(p) - value(m)) * (T::of(0.5) / h),
            (None, Some(p)) => match neighbor_rank(&domain, &coord, axis, 2) {
                Some(p2) => {
                    (value(rank) * T::of(-1.5) + value(p) * T::of(2.0)
                        - value(p2) * T::of(0.5))
                        / h
                }
                None => (value(p) - value(rank)) / h,
            },
            (Some(m), None) => match neighbor_rank(&domain, &coord, axis, -2) {
                Some(m2) => {
                    (value(rank) * T::of(1.5) - value(m) * T::of(2.0)
                        + value(m2) * T::of(0.5))
                        / h
                }
                None => (value(rank) - value(m)) / h,
            },
            (None, None) => return Err(Error::NoStencil(coord.clone())),
        };
        let mut m = Multivector::zero(n);
        m.set_coeff(0, d);
        out.set_value(rank, m);
    }
    Ok(out)
}

/// Both discretizations of the demagnetizing field of `m`, plus their gap
/// on the twice-eroded interior.
#[derive(Clone, Debug)]
pub struct DemagRoutes<T: Scalar> {
    /// `-B m` through the Clifford kernel composition.
    pub composition: Field<T>,
    /// `-grad psi` through the scalar magnetostatic potential.
    pub potential: Field<T>,
    /// Relative `L^2` gap between the routes, interior voxels only.
    pub interior_rel_gap: T,
}

/// Computes the demagnetizing field along the two routes. The routes share
/// the grid and the difference stencils but nothing else: one goes through
/// the vector kernel and the Clifford product, the other through a direct
/// quadrature of the dipole potential and an explicit gradient.
pub fn demag_two_routes<T: Scalar>(
    ctx: &OperatorContext<T>,
    m: &Field<T>,
) -> Result<DemagRoutes<T>> {
    require_static(ctx)?;
    require_real_vector(m, "magnetization")?;
    let domain = ctx.domain().clone();
    let n = domain.dimension();
    if n < 3 {
        return Err(Error::UnsupportedDimension {
            got: n,
            expected: "3..=4 (the potential route is set up for n >= 3)".into(),
        });
    }

    let composition = ctx.singular_b_apply(m)?.scaled(-T::one());

    // Dipole-potential weights w_j(z) = z_j / (sigma_n |z|^n) on lattice
    // offsets; the z = 0 cell integrates to zero by odd symmetry.
    let sigma: T = crate::kernels::sphere_area(n)?;
    let cells = domain.cells();
    let stride = 2 * cells - 1;
    let len = stride.pow(n as u32);
    let mut weights = vec![T::zero(); len * n];
    for idx in 0..len {
        let mut rem = idx;
        let mut z = vec![T::zero(); n];
        let mut zero = true;
        for k in 0..n {
            let d = (rem % stride) as isize - (cells as isize - 1);
            rem /= stride;
            zero &= d == 0;
            z[k] = T::of(d as f64) * domain.spacing()[k];
        }
        if zero {
            continue;
        }
        let r_sq: T = z.iter().fold(T::zero(), |acc, &v| acc + v * v);
        let scale = sigma * r_sq.powf(T::of_usize(n) * T::of(0.5));
        for k in 0..n {
            weights[idx * n + k] = z[k] / scale;
        }
    }

    // psi(x) = sum_y <m(y), x - y> w(x - y) vol, then H = -grad psi.
    let vol = domain.voxel_volume();
    let sources: Vec<(Vec<isize>, Vec<T>)> = {
        let mut v = Vec::with_capacity(domain.num_active());
        let mut coord = vec![0usize; n];
        for (rank, &flat) in domain.active_indices().iter().enumerate() {
            domain.lattice_of(flat, &mut coord);
            let mv = m.value(rank);
            let comps: Vec<T> = (0..n).map(|j| mv.coeff(1 << j).re).collect();
            v.push((coord.iter().map(|&c| c as isize).collect(), comps));
        }
        v
    };
    let psi_values: Vec<T> = domain
        .active_indices()
        .par_iter()
        .map(|&tflat| {
            let mut tcoord = vec![0usize; n];
            domain.lattice_of(tflat, &mut tcoord);
            let mut acc = T::zero();
            for (scoord, comps) in &sources {
                let mut idx = 0usize;
                for k in (0..n).rev() {
                    let d = tcoord[k] as isize - scoord[k];
                    idx = idx * stride + (d + cells as isize - 1) as usize;
                }
                let w = &weights[idx * n..(idx + 1) * n];
                for (wk, &mk) in w.iter().zip(comps.iter()) {
                    acc += *wk * mk;
                }
            }
            acc * vol
        })
        .collect();
    let mut psi = Field::zero(&domain);
    for (rank, &value) in psi_values.iter().enumerate() {
        let mut mv = Multivector::zero(n);
        mv.set_coeff(0, num_complex::Complex::new(value, T::zero()));
        psi.set_value(rank, mv);
    }

    let mut potential = Field::zero(&domain);
    for j in 0..n {
        let dj = fd_derivative(&psi, j)?;
        let as_vector = dj.map(|v| {
            let mut mv = Multivector::zero(n);
            mv.set_coeff(1 << j, v.scalar_coeff());
            mv
        });
        potential.add_scaled(&as_vector, -T::one())?;
    }

    // Compare away from the boundary, where both routes are second order.
    let interior = domain.eroded_mask(2);
    let mut num = T::zero();
    let mut den = T::zero();
    for (rank, &flat) in domain.active_indices().iter().enumerate() {
        if !interior[flat] {
            continue;
        }
        num += (composition.value(rank) - potential.value(rank)).norm_sq();
        den += composition.value(rank).norm_sq();
    }
    if den == T::zero() {
        return Err(Error::Domain(
            "no interior voxels to compare the demagnetization routes on".into(),
        ));
    }
    Ok(DemagRoutes {
        composition,
        potential,
        interior_rel_gap: (num / den).sqrt(),
    })
}

/// `(B m, m) / (m, m)` for a uniform unit magnetization: the demagnetizing
/// factor of the body along `direction` (1/3 for a ball in 3-d).
pub fn demag_factor<T: Scalar>(ctx: &OperatorContext<T>, direction: &[T]) -> Result<T> {
    require_static(ctx)?;
    let m = uniform_field(ctx.domain(), direction)?;
    let bm = ctx.singular_b_apply(&m)?;
    Ok(bm.l2_inner(&m)? / m.l2_inner(&m)?)
}

/// Energy inequalities of the induced field `H_i = -B m`: the pairing
/// `(H_i, m)` must be nonpositive up to `sign_slack * |m|^2`, and its
/// magnitude bounded by `(1 + norm_excess) |m|^2`, where `norm_excess`
/// covers how far the discrete operator norm exceeds 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InequalityReport {
    pub hi_dot_m: f64,
    pub m_norm_sq: f64,
    pub ineq2_pass: bool,
    pub ineq3_pass: bool,
    pub sign_slack: f64,
    pub norm_excess: f64,
}

pub fn verify_inequalities<T: Scalar>(
    ctx: &OperatorContext<T>,
    m: &Field<T>,
    sign_slack: T,
    norm_excess: T,
) -> Result<InequalityReport> {
    require_static(ctx)?;
    require_real_vector(m, "field")?;
    let hi = ctx.singular_b_apply(m)?.scaled(-T::one());
    let hi_dot_m = hi.l2_inner(m)?;
    let m_norm_sq = m.l2_norm_sq();
    Ok(InequalityReport {
        hi_dot_m: hi_dot_m.to_f64().unwrap_or(f64::NAN),
        m_norm_sq: m_norm_sq.to_f64().unwrap_or(f64::NAN),
        ineq2_pass: hi_dot_m <= sign_slack * m_norm_sq,
        ineq3_pass: hi_dot_m.abs() <= (T::one() + norm_excess) * m_norm_sq,
        sign_slack: sign_slack.to_f64().unwrap_or(f64::NAN),
        norm_excess: norm_excess.to_f64().unwrap_or(f64::NAN),
    })
}

/// The full problem: a body (through the operator context), a curve, an
/// applied field.
pub struct MagnetoSetup<'a, T: Scalar> {
    pub ctx: &'a OperatorContext<T>,
    pub curve: &'a MhCurve,
    pub applied: &'a Field<T>,
}

impl<T: Scalar> MagnetoSetup<'_, T> {
    /// Solver configuration seeded with the curve's constants; adjust
    /// tolerance and budget as needed.
    pub fn solve_config(&self) -> SolveConfig<T> {
        SolveConfig::new(
            T::of(self.curve.monotone_constant()),
            T::of(self.curve.lipschitz_constant()),
        )
    }
}

/// Solution bundle.
pub struct MagnetoOutcome<T: Scalar> {
    pub magnetization: Field<T>,
    /// `-B M`, the demagnetizing field of the solution.
    pub induced: Field<T>,
    /// Applied plus induced.
    pub total: Field<T>,
    pub solve: SolveResult<T>,
    /// Present when the constitutive law was audited before solving.
    pub audit: Option<Vec<PropertyReport>>,
}

/// Audits the constitutive law (optionally), then solves
/// `f(M) + B M = H_applied` by the damped iteration and assembles the
/// induced and total fields.
///
/// The audit also cross-checks the constants the solve is about to use:
/// the sampled monotonicity modulus must not undercut `cfg.monotone_c`
/// and the sampled Lipschitz ratio must not exceed `cfg.lipschitz`.
pub fn solve_magnetization<T: Scalar>(
    setup: &MagnetoSetup<'_, T>,
    cfg: &SolveConfig<T>,
    audit_samples: Option<u64>,
    audit_seed: u64,
) -> Result<MagnetoOutcome<T>> {
    require_static(setup.ctx)?;
    require_real_vector(setup.applied, "applied field")?;
    let n = setup.ctx.domain().dimension();
    let law = setup.curve.law::<T>(n)?;
    let eps = T::of(1e-9);
    if cfg.monotone_c > T::of(setup.curve.monotone_constant()) + eps {
        return Err(Error::Config(format!(
            "declared monotonicity modulus {} overclaims the curve's {}",
            cfg.monotone_c,
            setup.curve.monotone_constant()
        )));
    }
    if cfg.lipschitz < T::of(setup.curve.lipschitz_constant()) - eps {
        return Err(Error::Config(format!(
            "declared Lipschitz constant {} undercuts the curve's {}",
            cfg.lipschitz,
            setup.curve.lipschitz_constant()
        )));
    }
    let audit = match audit_samples {
        None => None,
        Some(samples) => {
            let audit_cfg = SampleConfig::<T>::new(n, samples, audit_seed)
                .with_amplitude(T::of(2.0) * setup.applied.max_abs().max(T::one()))
                .with_domain(setup.ctx.domain().clone());
            let reports = audit_law(&law, &audit_cfg)?;
            if let Some(bad) = reports.iter().find(|r| !r.pass) {
                return Err(Error::Config(format!(
                    "constitutive law failed its {} audit (worst margin {:e})",
                    bad.property, bad.worst_margin
                )));
            }
            let slack = 1e-6;
            if let Some(c_hat) = reports
                .iter()
                .find(|r| r.property == "monotone")
                .and_then(|r| r.estimate.as_ref())
            {
                let declared = cfg.monotone_c.to_f64().unwrap_or(f64::NAN);
                if c_hat.value < declared - slack * declared.abs().max(1.0) {
                    return Err(Error::Config(format!(
                        "sampled monotonicity modulus {} undercuts the declared {declared}",
                        c_hat.value
                    )));
                }
            }
            if let Some(l_hat) = reports
                .iter()
                .find(|r| r.property == "lipschitz")
                .and_then(|r| r.estimate.as_ref())
            {
                let declared = cfg.lipschitz.to_f64().unwrap_or(f64::NAN);
                if l_hat.value > declared + slack * declared.abs().max(1.0) {
                    return Err(Error::Config(format!(
                        "sampled Lipschitz ratio {} exceeds the declared {declared}",
                        l_hat.value
                    )));
                }
            }
            Some(reports)
        }
    };
    let solve = solve_monotone(&law, setup.ctx, setup.applied, cfg)?;
    let induced = setup.ctx.singular_b_apply(&solve.solution)?.scaled(-T::one());
    let total = setup.applied.add(&induced)?;
    Ok(MagnetoOutcome {
        magnetization: solve.solution.clone(),
        induced,
        total,
        solve,
        audit,
    })
}
