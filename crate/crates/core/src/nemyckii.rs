//! Superposition (pointwise) operators `u(x) -> f(x, u(x))` and
//! falsification-style checkers for the structural properties the
//! fixed-point solver relies on: growth bounds, (strict) monotonicity,
//! coercivity, positivity, Lipschitz continuity.
//!
//! The conditions quantify over continua, so they cannot be proven by
//! sampling; verdicts are "no-counterexample" or "counterexample", never
//! "verified". Sampling uses a counter-based RNG layout: sample `i` always
//! comes from stream `i / CHUNK` of a ChaCha8 generator seeded by the
//! configured seed, so a counterexample replays exactly from
//! `(seed, index)` alone and runs parallelize deterministically.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::Multivector;
use crate::grid::{Field, FieldContent, GridDomain};
use crate::{Error, Result, Scalar};

/// Samples per RNG stream. Part of the sampling definition: changing it
/// changes which draws make up a run, so it is a constant, not a knob.
pub const CHUNK: u64 = 1024;

/// Fraction of value-component draws taken from the bounded uniform part
/// of the mixture; the rest come from the Cauchy-like tail.
const UNIFORM_WEIGHT: f64 = 0.75;

/// The Cauchy tail is clamped to this many amplitudes to keep squared
/// norms finite in double precision.
const TAIL_CLAMP: f64 = 1e6;

/// Which part of the algebra the law's arguments live in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueLayout {
    /// Real coefficients on grade 1.
    RealVector,
    /// Complex coefficients on grades 0 and 1.
    ComplexParavector,
}

impl ValueLayout {
    fn field_content(self) -> FieldContent {
        match self {
            ValueLayout::RealVector => FieldContent::RealVector,
            ValueLayout::ComplexParavector => FieldContent::ComplexParavector,
        }
    }
}

/// A spatial coefficient function, such as the `a(x)` of a growth bound or
/// the `g(x)` of a coercivity offset.
pub type SpatialFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// `|f(x,v)| <= bound(x) + slope |v|`.
#[derive(Clone)]
pub struct GrowthClaim<T> {
    pub bound: SpatialFn<T>,
    pub slope: T,
}

/// `[f(x,v), v] >= modulus |v|^2 + offset(x)` with an integrable offset.
#[derive(Clone)]
pub struct CoerciveClaim<T> {
    pub modulus: T,
    pub offset: SpatialFn<T>,
}

/// A constant spatial function.
pub fn constant_fn<T: Scalar>(value: T) -> SpatialFn<T> {
    Arc::new(move |_| value)
}

/// A pointwise law `f(x, v)` together with the structural properties its
/// author claims for it. The evaluator must be deterministic.
pub trait PointwiseLaw<T: Scalar>: Send + Sync {
    fn dimension(&self) -> usize;
    fn value_layout(&self) -> ValueLayout;
    fn evaluate(&self, x: &[T], v: &Multivector<T>) -> Result<Multivector<T>>;
    fn claims(&self) -> LawClaims<T>;
}

/// Claims a law makes about itself. Absent means "not claimed", not
/// "false". The Caratheodory conditions (measurability, continuity) are
/// assumed contracts, not checked.
#[derive(Clone, Default)]
pub struct LawClaims<T> {
    pub growth: Option<GrowthClaim<T>>,
    /// `[f(x,v) - f(x,w), v - w] >= 0`.
    pub monotone: bool,
    /// Additionally `> 0` whenever `v != w`.
    pub strictly_monotone: bool,
    pub coercive: Option<CoerciveClaim<T>>,
    /// `[f(x,v), v] >= 0` everywhere.
    pub positive: bool,
    /// `[f(x,v), v] >= 0` once `|v| >= radius`.
    pub asymptotically_positive: Option<T>,
    /// `|f(x,v) - f(x,w)| <= l |v - w|`.
    pub lipschitz: Option<T>,
}

/// One verifiable property with its constants.
#[derive(Clone)]
pub enum PropertyCheck<T> {
    Growth(GrowthClaim<T>),
    Monotone { strict: bool },
    Coercive(CoerciveClaim<T>),
    Positive,
    AsymptoticallyPositive { radius: T },
    Lipschitz { l: T },
}

impl<T: Scalar> PropertyCheck<T> {
    fn name(&self) -> &'static str {
        match self {
            PropertyCheck::Growth(_) => "growth",
            PropertyCheck::Monotone { strict: false } => "monotone",
            PropertyCheck::Monotone { strict: true } => "strictly_monotone",
            PropertyCheck::Coercive(_) => "coercive",
            PropertyCheck::Positive => "positive",
            PropertyCheck::AsymptoticallyPositive { .. } => "asymptotically_positive",
            PropertyCheck::Lipschitz { .. } => "lipschitz",
        }
    }

    fn describe(&self) -> String {
        match self {
            PropertyCheck::Growth(g) => format!("|f(x,v)| <= a(x) + {} |v|", g.slope),
            PropertyCheck::Monotone { strict: false } => {
                "[f(x,v) - f(x,w), v - w] >= 0".to_string()
            }
            PropertyCheck::Monotone { strict: true } => {
                "[f(x,v) - f(x,w), v - w] > 0 for v != w".to_string()
            }
            PropertyCheck::Coercive(c) => {
                format!("[f(x,v), v] >= {} |v|^2 + g(x)", c.modulus)
            }
            PropertyCheck::Positive => "[f(x,v), v] >= 0".to_string(),
            PropertyCheck::AsymptoticallyPositive { radius } => {
                format!("[f(x,v), v] >= 0 for |v| >= {radius}")
            }
            PropertyCheck::Lipschitz { l } => format!("|f(x,v) - f(x,w)| <= {l} |v - w|"),
        }
    }

    /// Name and direction of the constant estimated alongside the verdict.
    fn estimate_kind(&self) -> Option<(&'static str, bool)> {
        match self {
            PropertyCheck::Growth(_) => Some(("slope_hat", true)),
            PropertyCheck::Monotone { .. } => Some(("monotonicity_modulus_hat", false)),
            PropertyCheck::Coercive(_) => Some(("coercivity_modulus_hat", false)),
            PropertyCheck::Positive | PropertyCheck::AsymptoticallyPositive { .. } => {
                Some(("min_rayleigh_hat", false))
            }
            PropertyCheck::Lipschitz { .. } => Some(("lipschitz_hat", true)),
        }
    }
}

/// Sampling configuration. `x` is drawn uniformly over the box; value
/// components come from a mixture of uniform `[-amplitude, amplitude]`
/// draws and a Cauchy-like tail scaled by `amplitude`, so growth and
/// asymptotic claims get stressed far from the origin.
#[derive(Clone)]
pub struct SampleConfig<T: Scalar> {
    pub samples: u64,
    pub seed: u64,
    pub amplitude: T,
    /// Pass threshold on the normalized margin (dimensionless).
    pub tolerance: T,
    pub lo: Vec<T>,
    pub hi: Vec<T>,
    /// When set, field-level consequences are also checked on random
    /// fields over this grid.
    pub domain: Option<Arc<GridDomain<T>>>,
    /// Random fields per field-level consequence check.
    pub consequence_fields: u32,
}

impl<T: Scalar> SampleConfig<T> {
    pub fn new(dimension: usize, samples: u64, seed: u64) -> Self {
        SampleConfig {
            samples,
            seed,
            amplitude: T::one(),
            tolerance: T::of(1e-9),
            lo: vec![-T::one(); dimension],
            hi: vec![T::one(); dimension],
            domain: None,
            consequence_fields: 16,
        }
    }

    pub fn with_amplitude(mut self, amplitude: T) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_tolerance(mut self, tolerance: T) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_domain(mut self, domain: Arc<GridDomain<T>>) -> Self {
        self.lo = domain.bounds().0.to_vec();
        self.hi = domain.bounds().1.to_vec();
        self.domain = Some(domain);
        self
    }
}

/// Verdict for one property over one sampling run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub claim: String,
    /// "no-counterexample" or "counterexample".
    pub verdict: String,
    pub samples: u64,
    pub violations: u64,
    /// Smallest normalized margin seen (negative = violated).
    pub worst_margin: f64,
    pub pass: bool,
    /// Empirical constant observed while sampling (extreme ratio), such as
    /// the monotonicity modulus or the Lipschitz ratio.
    pub estimate: Option<ConstantEstimate>,
    pub counterexample: Option<Counterexample>,
    /// Outcome of the field-level consequence on random fields, when a
    /// grid was supplied.
    pub field_consequence: Option<FieldConsequence>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub name: String,
    pub value: f64,
}

/// Enough to reproduce the worst sample exactly: the global index pins the
/// RNG stream and offset; the stored coordinates are for inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub sample_index: u64,
    pub point: Vec<f64>,
    pub value: Vec<[f64; 2]>,
    pub second_value: Option<Vec<[f64; 2]>>,
    pub margin: f64,
}

/// Field-level consequence of a pointwise property, checked on random
/// fields (for example `(Fu, u) >= d |u|^2 + int g` from coercivity).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConsequence {
    pub description: String,
    pub fields_tested: u32,
    pub worst_margin: f64,
    pub pass: bool,
}

/// One drawn sample; `w` and `r` are always drawn so every property
/// consumes the stream identically.
struct RawSample<T: Scalar> {
    x: Vec<T>,
    v: Multivector<T>,
    w: Multivector<T>,
    r: T,
}

/// One mixture draw: uniform in `[-amplitude, amplitude]` with probability
/// [`UNIFORM_WEIGHT`], otherwise a clamped Cauchy tail scaled by the
/// amplitude. Two RNG uses per component, always.
fn draw_component<T: Scalar>(rng: &mut ChaCha8Rng, amplitude: T) -> T {
    let selector = rng.gen::<f64>();
    let u = rng.gen::<f64>();
    if selector < UNIFORM_WEIGHT {
        T::of(u * 2.0 - 1.0) * amplitude
    } else {
        let tail = (std::f64::consts::PI * (u - 0.5)).tan();
        T::of(tail.clamp(-TAIL_CLAMP, TAIL_CLAMP)) * amplitude
    }
}

fn draw_value<T: Scalar>(
    rng: &mut ChaCha8Rng,
    n: usize,
    layout: ValueLayout,
    amplitude: T,
) -> Multivector<T> {
    let mut m = Multivector::zero(n);
    match layout {
        ValueLayout::RealVector => {
            for j in 0..n {
                let mut c = m.coeff(1 << j);
                c.re = draw_component(rng, amplitude);
                m.set_coeff(1 << j, c);
            }
        }
        ValueLayout::ComplexParavector => {
            for comp in 0..=n {
                let mask = if comp == 0 { 0 } else { 1 << (comp - 1) };
                let re = draw_component(rng, amplitude);
                let im = draw_component(rng, amplitude);
                m.set_coeff(mask, num_complex::Complex::new(re, im));
            }
        }
    }
    m
}

fn draw_sample<T: Scalar>(
    rng: &mut ChaCha8Rng,
    cfg: &SampleConfig<T>,
    layout: ValueLayout,
) -> RawSample<T> {
    let n = cfg.lo.len();
    let x: Vec<T> = (0..n)
        .map(|k| {
            let u = T::of(rng.gen::<f64>());
            cfg.lo[k] + (cfg.hi[k] - cfg.lo[k]) * u
        })
        .collect();
    let v = draw_value(rng, n, layout, cfg.amplitude);
    let w = draw_value(rng, n, layout, cfg.amplitude);
    let r = T::of(rng.gen::<f64>());
    RawSample { x, v, w, r }
}

struct SampleOutcome<T: Scalar> {
    /// Normalized margin; >= 0 means the sample satisfies the claim.
    margin: T,
    /// Whether the margin counts as a violation under the tolerance.
    violated: bool,
    /// Contribution to the empirical constant, if the property has one.
    estimate: Option<T>,
    kept_v: Multivector<T>,
    kept_w: Option<Multivector<T>>,
}

/// Evaluates one property at one sample. `None` means the sample is
/// degenerate for the property (for example `v = w` for a pair property).
fn sample_margin<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    check: &PropertyCheck<T>,
    cfg: &SampleConfig<T>,
    s: &RawSample<T>,
) -> Result<Option<SampleOutcome<T>>> {
    let tiny = T::of(1e-290);
    let tol = cfg.tolerance;
    let eval = |v: &Multivector<T>| -> Result<Multivector<T>> {
        law.evaluate(&s.x, v).map_err(|e| Error::LawEvaluation {
            at: s.x.iter().map(|t| t.to_f64().unwrap_or(f64::NAN)).collect(),
            reason: e.to_string(),
        })
    };
    let out = match check {
        PropertyCheck::Growth(claim) => {
            let f = eval(&s.v)?;
            let a = (claim.bound)(&s.x);
            let bound = a + claim.slope * s.v.norm();
            let scale = bound.abs().max(f.norm()).max(tiny);
            let margin = (bound - f.norm()) / scale;
            let vn = s.v.norm();
            SampleOutcome {
                margin,
                violated: margin < -tol,
                estimate: (vn > tiny).then(|| (f.norm() - a) / vn),
                kept_v: s.v.clone(),
                kept_w: None,
            }
        }
        PropertyCheck::Monotone { strict } => {
            let dv = &s.v - &s.w;
            let dn = dv.norm_sq();
            if dn <= tiny {
                return Ok(None);
            }
            let df = &eval(&s.v)? - &eval(&s.w)?;
            let pairing = df.scalar_product(&dv)?;
            // The ratio is the candidate monotonicity modulus.
            let margin = pairing / dn;
            let violated = if *strict {
                margin <= T::zero()
            } else {
                // Normalize by the product of norms for the plain verdict:
                // roundoff on a genuinely monotone law must not trip it.
                pairing / (df.norm() * dn.sqrt()).max(tiny) < -tol
            };
            SampleOutcome {
                margin,
                violated,
                estimate: Some(margin),
                kept_v: s.v.clone(),
                kept_w: Some(s.w.clone()),
            }
        }
        PropertyCheck::Coercive(claim) => {
            let f = eval(&s.v)?;
            let pairing = f.scalar_product(&s.v)?;
            let vn = s.v.norm_sq();
            let g = (claim.offset)(&s.x);
            let raw = pairing - claim.modulus * vn - g;
            let scale = (f.norm() * vn.sqrt())
                .max(claim.modulus.abs() * vn)
                .max(g.abs())
                .max(tiny);
            let margin = raw / scale;
            SampleOutcome {
                margin,
                violated: margin < -tol,
                estimate: (vn > tiny).then(|| (pairing - g) / vn),
                kept_v: s.v.clone(),
                kept_w: None,
            }
        }
        PropertyCheck::Positive => {
            let f = eval(&s.v)?;
            let pairing = f.scalar_product(&s.v)?;
            let scale = (f.norm() * s.v.norm()).max(tiny);
            let margin = pairing / scale;
            let vn = s.v.norm_sq();
            SampleOutcome {
                margin,
                violated: margin < -tol,
                estimate: (vn > tiny).then(|| pairing / vn),
                kept_v: s.v.clone(),
                kept_w: None,
            }
        }
        PropertyCheck::AsymptoticallyPositive { radius } => {
            let vn = s.v.norm();
            if vn <= tiny {
                return Ok(None);
            }
            // Rescale the draw onto [radius, radius + amplitude).
            let target = *radius + s.r * cfg.amplitude;
            let v = s.v.scaled(target / vn);
            let f = eval(&v)?;
            let pairing = f.scalar_product(&v)?;
            let scale = (f.norm() * v.norm()).max(tiny);
            let margin = pairing / scale;
            SampleOutcome {
                margin,
                violated: margin < -tol,
                estimate: Some(pairing / v.norm_sq().max(tiny)),
                kept_v: v,
                kept_w: None,
            }
        }
        PropertyCheck::Lipschitz { l } => {
            let dv = (&s.v - &s.w).norm();
            if dv <= tiny {
                return Ok(None);
            }
            let df = (&eval(&s.v)? - &eval(&s.w)?).norm();
            let scale = (*l * dv).max(df).max(tiny);
            SampleOutcome {
                margin: (*l * dv - df) / scale,
                violated: (*l * dv - df) / scale < -tol,
                estimate: Some(df / dv),
                kept_v: s.v.clone(),
                kept_w: Some(s.w.clone()),
            }
        }
    };
    Ok(Some(out))
}

struct ChunkOutcome<T: Scalar> {
    checked: u64,
    violations: u64,
    worst: Option<(T, u64, Multivector<T>, Option<Multivector<T>>, Vec<T>)>,
    estimate: Option<T>,
}

/// Runs one property check over `cfg.samples` Monte-Carlo samples, plus
/// the property's field-level consequence when the config carries a grid.
pub fn check_property<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    cfg: &SampleConfig<T>,
    check: &PropertyCheck<T>,
) -> Result<PropertyReport> {
    let n = law.dimension();
    if cfg.lo.len() != n || cfg.hi.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "sampling box dimension {} vs law dimension {}",
            cfg.lo.len(),
            n
        )));
    }
    let layout = law.value_layout();
    let estimate_kind = check.estimate_kind();
    let chunks = cfg.samples.div_ceil(CHUNK);
    let outcomes: Vec<Result<ChunkOutcome<T>>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(chunk);
            let count = CHUNK.min(cfg.samples - chunk * CHUNK);
            let mut out = ChunkOutcome::<T> {
                checked: 0,
                violations: 0,
                worst: None,
                estimate: None,
            };
            for offset in 0..count {
                let s = draw_sample(&mut rng, cfg, layout);
                let index = chunk * CHUNK + offset;
                let Some(o) = sample_margin(law, check, cfg, &s)? else {
                    continue;
                };
                out.checked += 1;
                if o.violated {
                    out.violations += 1;
                }
                if let (Some((_, maximize)), Some(e)) = (estimate_kind, o.estimate) {
                    out.estimate = Some(match out.estimate {
                        None => e,
                        Some(prev) => {
                            if maximize {
                                prev.max(e)
                            } else {
                                prev.min(e)
                            }
                        }
                    });
                }
                let better = match &out.worst {
                    None => true,
                    Some((m, i, ..)) => o.margin < *m || (o.margin == *m && index < *i),
                };
                if better {
                    out.worst = Some((o.margin, index, o.kept_v, o.kept_w, s.x.clone()));
                }
            }
            Ok(out)
        })
        .collect();
    let mut checked = 0u64;
    let mut violations = 0u64;
    let mut worst: Option<(T, u64, Multivector<T>, Option<Multivector<T>>, Vec<T>)> = None;
    let mut estimate: Option<T> = None;
    for o in outcomes {
        let o = o?;
        checked += o.checked;
        violations += o.violations;
        if let (Some((_, maximize)), Some(e)) = (estimate_kind, o.estimate) {
            estimate = Some(match estimate {
                None => e,
                Some(prev) => {
                    if maximize {
                        prev.max(e)
                    } else {
                        prev.min(e)
                    }
                }
            });
        }
        if let Some((m, i, ..)) = &o.worst {
            let better = match &worst {
                None => true,
                Some((wm, wi, ..)) => *m < *wm || (*m == *wm && *i < *wi),
            };
            if better {
                worst = o.worst;
            }
        }
    }
    let pass = violations == 0;
    let counterexample = if pass {
        None
    } else {
        worst.as_ref().map(|(m, i, v, w, x)| Counterexample {
            sample_index: *i,
            point: x.iter().map(|t| t.to_f64().unwrap_or(f64::NAN)).collect(),
            value: mv_to_pairs(v),
            second_value: w.as_ref().map(mv_to_pairs),
            margin: m.to_f64().unwrap_or(f64::NAN),
        })
    };
    let field_consequence = match &cfg.domain {
        Some(domain) => field_consequence(law, cfg, check, domain)?,
        None => None,
    };
    Ok(PropertyReport {
        property: check.name().to_string(),
        claim: check.describe(),
        verdict: if pass {
            "no-counterexample".to_string()
        } else {
            "counterexample".to_string()
        },
        samples: checked,
        violations,
        worst_margin: worst
            .as_ref()
            .map(|(m, ..)| m.to_f64().unwrap_or(f64::NAN))
            .unwrap_or(f64::INFINITY),
        pass,
        estimate: estimate_kind.and_then(|(name, _)| {
            estimate.map(|e| ConstantEstimate {
                name: name.to_string(),
                value: e.to_f64().unwrap_or(f64::NAN),
            })
        }),
        counterexample,
        field_consequence,
    })
}

fn mv_to_pairs<T: Scalar>(m: &Multivector<T>) -> Vec<[f64; 2]> {
    m.coeffs()
        .iter()
        .map(|c| {
            [
                c.re.to_f64().unwrap_or(f64::NAN),
                c.im.to_f64().unwrap_or(f64::NAN),
            ]
        })
        .collect()
}

/// Integrated consequences of the pointwise properties, checked on random
/// fields over the supplied grid.
fn field_consequence<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    cfg: &SampleConfig<T>,
    check: &PropertyCheck<T>,
    domain: &Arc<GridDomain<T>>,
) -> Result<Option<FieldConsequence>> {
    let tiny = T::of(1e-290);
    let content = law.value_layout().field_content();
    let vol = domain.voxel_volume();
    let (description, margins): (String, Vec<T>) = match check {
        PropertyCheck::Growth(claim) => {
            // |Fu| <= |a| + slope |u| in L2, from the pointwise bound.
            let mut a_sq = T::zero();
            for &flat in domain.active_indices() {
                let a = (claim.bound)(&domain.center(flat));
                a_sq += a * a * vol;
            }
            let a_norm = a_sq.sqrt();
            let mut margins = Vec::new();
            for i in 0..cfg.consequence_fields {
                let u = Field::random(
                    domain,
                    cfg.seed.wrapping_add(0xF1E1D + i as u64),
                    content,
                    cfg.amplitude,
                );
                let fu = nemyckii_apply(law, &u)?;
                let bound = a_norm + claim.slope * u.l2_norm();
                let scale = bound.abs().max(fu.l2_norm()).max(tiny);
                margins.push((bound - fu.l2_norm()) / scale);
            }
            ("|Fu| <= |a| + slope |u| on random fields".to_string(), margins)
        }
        PropertyCheck::Coercive(claim) => {
            let mut g_int = T::zero();
            for &flat in domain.active_indices() {
                g_int += (claim.offset)(&domain.center(flat)) * vol;
            }
            let mut margins = Vec::new();
            for i in 0..cfg.consequence_fields {
                let u = Field::random(
                    domain,
                    cfg.seed.wrapping_add(0xF1E1D + i as u64),
                    content,
                    cfg.amplitude,
                );
                let fu = nemyckii_apply(law, &u)?;
                let energy = fu.l2_inner(&u)?;
                let un = u.l2_norm_sq();
                let raw = energy - claim.modulus * un - g_int;
                let scale = energy
                    .abs()
                    .max(claim.modulus.abs() * un)
                    .max(g_int.abs())
                    .max(tiny);
                margins.push(raw / scale);
            }
            (
                "(Fu, u) >= modulus |u|^2 + int g on random fields".to_string(),
                margins,
            )
        }
        PropertyCheck::Positive => {
            let mut margins = Vec::new();
            for i in 0..cfg.consequence_fields {
                let u = Field::random(
                    domain,
                    cfg.seed.wrapping_add(0xF1E1D + i as u64),
                    content,
                    cfg.amplitude,
                );
                let fu = nemyckii_apply(law, &u)?;
                let energy = fu.l2_inner(&u)?;
                let scale = (fu.l2_norm() * u.l2_norm()).max(tiny);
                margins.push(energy / scale);
            }
            ("(Fu, u) >= 0 on random fields".to_string(), margins)
        }
        PropertyCheck::AsymptoticallyPositive { radius } => {
            // Pointwise [f,v] >= -max_{|v| <= R} |f||v|, so the energy is
            // bounded below by that constant times the domain volume.
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA57);
            let mut m_r = T::zero();
            for _ in 0..512 {
                let x: Vec<T> = (0..law.dimension())
                    .map(|k| {
                        let u = T::of(rng.gen::<f64>());
                        cfg.lo[k] + (cfg.hi[k] - cfg.lo[k]) * u
                    })
                    .collect();
                let mut v = draw_value(&mut rng, law.dimension(), law.value_layout(), *radius);
                let vn = v.norm();
                if vn > *radius && vn > tiny {
                    v = v.scaled(*radius / vn);
                }
                let f = law.evaluate(&x, &v)?;
                m_r = m_r.max(f.norm() * v.norm());
            }
            let floor = m_r * vol * T::of_usize(domain.num_active());
            let mut margins = Vec::new();
            for i in 0..cfg.consequence_fields {
                let u = Field::random(
                    domain,
                    cfg.seed.wrapping_add(0xF1E1D + i as u64),
                    content,
                    cfg.amplitude,
                );
                let fu = nemyckii_apply(law, &u)?;
                let energy = fu.l2_inner(&u)?;
                let scale = energy.abs().max(floor).max(tiny);
                margins.push((energy + floor) / scale);
            }
            (
                "(Fu, u) >= -c(R) on random fields".to_string(),
                margins,
            )
        }
        PropertyCheck::Monotone { .. } | PropertyCheck::Lipschitz { .. } => {
            return Ok(None);
        }
    };
    let worst = margins
        .iter()
        .fold(T::infinity(), |acc, &m| acc.min(m));
    Ok(Some(FieldConsequence {
        description,
        fields_tested: cfg.consequence_fields,
        worst_margin: worst.to_f64().unwrap_or(f64::NAN),
        pass: worst >= -cfg.tolerance,
    }))
}

/// Re-derives the verdict data at one global sample index; matches what
/// the original run computed, bit for bit.
pub fn replay_property<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    cfg: &SampleConfig<T>,
    check: &PropertyCheck<T>,
    index: u64,
) -> Result<Option<Counterexample>> {
    if index >= cfg.samples {
        return Err(Error::Domain(format!(
            "sample index {index} outside the run of {}",
            cfg.samples
        )));
    }
    let layout = law.value_layout();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index / CHUNK);
    let mut sample = None;
    for _ in 0..=(index % CHUNK) {
        sample = Some(draw_sample(&mut rng, cfg, layout));
    }
    let s = sample.unwrap();
    Ok(sample_margin(law, check, cfg, &s)?.map(|o| Counterexample {
        sample_index: index,
        point: s.x.iter().map(|t| t.to_f64().unwrap_or(f64::NAN)).collect(),
        value: mv_to_pairs(&o.kept_v),
        second_value: o.kept_w.as_ref().map(mv_to_pairs),
        margin: o.margin.to_f64().unwrap_or(f64::NAN),
    }))
}

/// Claim-driven entry points, one per property family.
pub fn check_growth<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    cfg: &SampleConfig<T>,
) -> Result<PropertyReport> {
    let claim = law.claims().growth.ok_or_else(|| {
        Error::Config("law declares no growth bound".into())
    })?;
    check_property(law, cfg, &PropertyCheck::Growth(claim))
}

pub fn check_monotone<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    cfg: &SampleConfig<T>,
    strict: bool,
) -> Result<PropertyReport> {
    check_property(law, cfg, &PropertyCheck::Monotone { strict })
}

pub fn check_coercive<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    cfg: &SampleConfig<T>,
) -> Result<PropertyReport> {
    let claim = law.claims().coercive.ok_or_else(|| {
        Error::Config("law declares no coercivity constants".into())
    })?;
    check_property(law, cfg, &PropertyCheck::Coercive(claim))
}

/// `variant`: `None` checks positivity everywhere, `Some(radius)` only
/// outside the given radius.
pub fn check_positivity<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    cfg: &SampleConfig<T>,
    variant: Option<T>,
) -> Result<PropertyReport> {
    let check = match variant {
        None => PropertyCheck::Positive,
        Some(radius) => PropertyCheck::AsymptoticallyPositive { radius },
    };
    check_property(law, cfg, &check)
}

pub fn check_lipschitz<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    cfg: &SampleConfig<T>,
) -> Result<PropertyReport> {
    let l = law.claims().lipschitz.ok_or_else(|| {
        Error::Config("law declares no Lipschitz constant".into())
    })?;
    check_property(law, cfg, &PropertyCheck::Lipschitz { l })
}

/// Checks every claim the law makes, in a fixed order.
pub fn audit_law<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    cfg: &SampleConfig<T>,
) -> Result<Vec<PropertyReport>> {
    let claims = law.claims();
    let mut checks: Vec<PropertyCheck<T>> = Vec::new();
    if let Some(claim) = claims.growth {
        checks.push(PropertyCheck::Growth(claim));
    }
    if claims.monotone {
        checks.push(PropertyCheck::Monotone { strict: false });
    }
    if claims.strictly_monotone {
        checks.push(PropertyCheck::Monotone { strict: true });
    }
    if let Some(claim) = claims.coercive {
        checks.push(PropertyCheck::Coercive(claim));
    }
    if claims.positive {
        checks.push(PropertyCheck::Positive);
    }
    if let Some(radius) = claims.asymptotically_positive {
        checks.push(PropertyCheck::AsymptoticallyPositive { radius });
    }
    if let Some(l) = claims.lipschitz {
        checks.push(PropertyCheck::Lipschitz { l });
    }
    checks
        .iter()
        .map(|check| check_property(law, cfg, check))
        .collect()
}

/// The superposition operator on fields: `(F u)(x) = f(x, u(x))` at every
/// active voxel center.
pub fn nemyckii_apply<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    u: &Field<T>,
) -> Result<Field<T>> {
    let domain = u.domain();
    if domain.dimension() != law.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "field dimension {} vs law dimension {}",
            domain.dimension(),
            law.dimension()
        )));
    }
    let mut out = Field::zero(domain);
    for (rank, &flat) in domain.active_indices().iter().enumerate() {
        let x = domain.center(flat);
        let v = law.evaluate(&x, u.value(rank)).map_err(|e| {
            Error::LawEvaluation {
                at: x.iter().map(|t| t.to_f64().unwrap_or(f64::NAN)).collect(),
                reason: e.to_string(),
            }
        })?;
        out.set_value(rank, v);
    }
    Ok(out)
}

/// `(F u, u)` computed two ways: through the Clifford product
/// `Re (u~ F u)_0` and through the coefficient dot product. The routes
/// share no arithmetic beyond the evaluations of `f`.
#[derive(Clone, Debug)]
pub struct EnergyRoutes<T> {
    pub clifford_route: T,
    pub coefficient_route: T,
    pub rel_gap: T,
}

pub fn energy_two_routes<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    u: &Field<T>,
) -> Result<EnergyRoutes<T>> {
    let fu = nemyckii_apply(law, u)?;
    let vol = u.domain().voxel_volume();
    let mut clifford = T::zero();
    let mut coefficient = T::zero();
    for (uv, fv) in u.values().iter().zip(fu.values().iter()) {
        clifford += fv.tilde().try_mul(uv)?.scalar_coeff().re * vol;
        coefficient += fv.scalar_product(uv)? * vol;
    }
    let scale = clifford.abs().max(coefficient.abs()).max(T::of(1e-290));
    Ok(EnergyRoutes {
        clifford_route: clifford,
        coefficient_route: coefficient,
        rel_gap: (clifford - coefficient).abs() / scale,
    })
}

/// Field-level monotonicity gap `(F u - F w, u - w) - c |u - w|^2`, which
/// pointwise monotonicity with modulus `c` pushes nonnegative.
pub fn field_monotonicity_gap<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    u: &Field<T>,
    w: &Field<T>,
    c: T,
) -> Result<T> {
    let fu = nemyckii_apply(law, u)?;
    let fw = nemyckii_apply(law, w)?;
    let df = fu.sub(&fw)?;
    let du = u.sub(w)?;
    Ok(df.l2_inner(&du)? - c * du.l2_norm_sq())
}
