//! Damped fixed-point iteration for `F(u) + B u = g` with a strongly
//! monotone pointwise `F` and a bounded linear `B`.
//!
//! With `A = F + B`, the map `u -> u - t (A u - g)` contracts with factor
//! `q = sqrt(1 - 2 t c + t^2 L^2)` whenever `A` is strongly monotone with
//! modulus `c`, Lipschitz with constant `L`, and `0 < t < 2c / L^2`. The
//! iteration needs only applications of `A`, no derivatives, and its
//! residual history decays at rate `q` or better once transients die out.

use serde::{Deserialize, Serialize};

use crate::grid::{Field, FieldContent};
use crate::nemyckii::{nemyckii_apply, PointwiseLaw, ValueLayout};
use crate::operators::OperatorContext;
use crate::{Error, Result, Scalar};

/// Consecutive residual increases tolerated before declaring divergence.
const DIVERGENCE_PATIENCE: usize = 50;

/// Floor for the residual denominator, so a zero right-hand side still
/// yields a finite relative residual.
const DENOM_FLOOR: f64 = 1e-30;

/// A bounded linear operator on fields, with a usable bound on its norm.
pub trait FieldOperator<T: Scalar>: Sync {
    fn apply(&self, u: &Field<T>) -> Result<Field<T>>;
    /// An upper bound for the operator norm entering the step choice.
    fn norm_bound(&self) -> T;
}

/// The zero operator: reduces the equation to pointwise `F(u) = g`.
pub struct ZeroOperator;

impl<T: Scalar> FieldOperator<T> for ZeroOperator {
    fn apply(&self, u: &Field<T>) -> Result<Field<T>> {
        Ok(Field::zero(u.domain()))
    }
    fn norm_bound(&self) -> T {
        T::zero()
    }
}

/// `B = D P T` is a contraction on the subspaces it preserves; 1 is a
/// usable bound (the measured discrete norm stays below 1 + O(h)).
impl<T: Scalar> FieldOperator<T> for OperatorContext<T> {
    fn apply(&self, u: &Field<T>) -> Result<Field<T>> {
        self.singular_b_apply(u)
    }
    fn norm_bound(&self) -> T {
        T::one()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule<T> {
    /// `t = c / L^2`, the minimizer of the contraction factor.
    Auto,
    Fixed(T),
}

/// Where the iteration starts.
#[derive(Clone, Debug)]
pub enum InitialGuess<T: Scalar> {
    Zero,
    /// Seeded random field; used to probe uniqueness of the fixed point.
    Random { seed: u64, amplitude: T },
    Field(Field<T>),
}

/// Solve parameters. `monotone_c` and `lipschitz` describe the law `F`
/// alone; the linear part contributes its norm bound on top.
#[derive(Clone, Debug)]
pub struct SolveConfig<T: Scalar> {
    pub monotone_c: T,
    /// Lipschitz constant of the pointwise law.
    pub lipschitz: T,
    pub step: StepRule<T>,
    /// Threshold on the relative residual `|Au - g| / max(|g|, eps)`.
    pub tol: T,
    pub max_iter: usize,
    pub initial: InitialGuess<T>,
}

impl<T: Scalar> SolveConfig<T> {
    pub fn new(monotone_c: T, lipschitz: T) -> Self {
        SolveConfig {
            monotone_c,
            lipschitz,
            step: StepRule::Auto,
            tol: T::of(1e-8),
            max_iter: 10_000,
            initial: InitialGuess::Zero,
        }
    }

    pub fn with_step(mut self, step: StepRule<T>) -> Self {
        self.step = step;
        self
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_initial(mut self, initial: InitialGuess<T>) -> Self {
        self.initial = initial;
        self
    }
}

/// `q(t) = sqrt(1 - 2 t c + t^2 l^2)` for the full operator constants.
/// Errors unless the parameters give `q < 1`.
pub fn contraction_factor<T: Scalar>(c: T, l: T, t: T) -> Result<T> {
    if !(c > T::zero()) {
        return Err(Error::Config(format!(
            "monotonicity modulus must be positive, got {c}"
        )));
    }
    if l < c {
        return Err(Error::Config(format!(
            "Lipschitz constant {l} below monotonicity modulus {c}"
        )));
    }
    if !(t > T::zero()) {
        return Err(Error::Config(format!("step must be positive, got {t}")));
    }
    let q_sq = T::one() - ((t + t) * c - t * t * l * l);
    if q_sq >= T::one() {
        return Err(Error::Config(format!(
            "step {t} outside the contraction interval (0, {})",
            T::of(2.0) * c / (l * l)
        )));
    }
    Ok(q_sq.max(T::zero()).sqrt())
}

/// Geometric-mean decay rate of a residual history, skipping the first
/// `skip` ratios (transients before the contraction regime sets in).
pub fn mean_decay_rate<T: Scalar>(residuals: &[T], skip: usize) -> Option<T> {
    let tiny = T::of(1e-290);
    let mut log_sum = T::zero();
    let mut count = 0usize;
    for w in residuals.windows(2).skip(skip) {
        if w[0] > tiny {
            log_sum += (w[1] / w[0]).max(tiny).ln();
            count += 1;
        }
    }
    if count == 0 {
        return None;
    }
    Some((log_sum / T::of_usize(count)).exp())
}

/// Relative residual `|F(u) + B u - g| / max(|g|, eps)` of a candidate
/// solution; the same quantity the iteration records at every step.
pub fn residual<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    linear: &dyn FieldOperator<T>,
    u: &Field<T>,
    g: &Field<T>,
) -> Result<T> {
    let r = residual_field(law, linear, u, g)?;
    Ok(r.l2_norm() / g.l2_norm().max(T::of(DENOM_FLOOR)))
}

fn residual_field<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    linear: &dyn FieldOperator<T>,
    u: &Field<T>,
    g: &Field<T>,
) -> Result<Field<T>> {
    let mut r = nemyckii_apply(law, u)?;
    r.add_scaled(&linear.apply(u)?, T::one())?;
    r.add_scaled(g, -T::one())?;
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct SolveResult<T: Scalar> {
    pub solution: Field<T>,
    pub converged: bool,
    pub iterations: usize,
    /// Relative residuals; entry `k` belongs to the iterate before update
    /// `k`, so the last entry describes the returned solution.
    pub residuals: Vec<T>,
    pub step: T,
    /// Contraction factor the constants guarantee.
    pub q: T,
}

/// Serializable run summary (the solution itself travels as CSV).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveSummary {
    pub converged: bool,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub final_residual: f64,
    pub step: f64,
    pub q: f64,
}

impl<T: Scalar> SolveResult<T> {
    pub fn summary(&self) -> SolveSummary {
        let residuals: Vec<f64> = self
            .residuals
            .iter()
            .map(|r| r.to_f64().unwrap_or(f64::NAN))
            .collect();
        SolveSummary {
            converged: self.converged,
            iterations: self.iterations,
            final_residual: residuals.last().copied().unwrap_or(f64::NAN),
            residuals,
            step: self.step.to_f64().unwrap_or(f64::NAN),
            q: self.q.to_f64().unwrap_or(f64::NAN),
        }
    }
}

fn initial_field<T: Scalar>(
    cfg: &SolveConfig<T>,
    layout: ValueLayout,
    g: &Field<T>,
) -> Result<Field<T>> {
    match &cfg.initial {
        InitialGuess::Zero => Ok(Field::zero(g.domain())),
        InitialGuess::Random { seed, amplitude } => {
            let content = match layout {
                ValueLayout::RealVector => FieldContent::RealVector,
                ValueLayout::ComplexParavector => FieldContent::ComplexParavector,
            };
            Ok(Field::random(g.domain(), *seed, content, *amplitude))
        }
        InitialGuess::Field(f) => {
            if f.domain() != g.domain() {
                return Err(Error::Config(
                    "initial guess lives on a different grid than the right-hand side".into(),
                ));
            }
            Ok(f.clone())
        }
    }
}

/// Damped iteration `u <- u - t (F(u) + B u - g)` until the relative
/// residual drops below `cfg.tol`.
///
/// Exhausting `max_iter` returns `converged = false` with the full
/// history. A residual that grows [`DIVERGENCE_PATIENCE`] times in a row
/// is an error: the constants then clearly do not describe the operator.
pub fn solve_monotone<T: Scalar>(
    law: &dyn PointwiseLaw<T>,
    linear: &dyn FieldOperator<T>,
    g: &Field<T>,
    cfg: &SolveConfig<T>,
) -> Result<SolveResult<T>> {
    if law.dimension() != g.domain().dimension() {
        return Err(Error::DimensionMismatch(format!(
            "law dimension {} vs grid dimension {}",
            law.dimension(),
            g.domain().dimension()
        )));
    }
    let g_norm = g.l2_norm();
    if g.higher_grade_leak() > T::of(1e-12) * g_norm.max(T::one()) {
        return Err(Error::Config(
            "right-hand side must be paravector-valued".into(),
        ));
    }
    if !(cfg.tol > T::zero()) {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {}",
            cfg.tol
        )));
    }
    let c = cfg.monotone_c;
    let l = cfg.lipschitz + linear.norm_bound();
    let t = match cfg.step {
        StepRule::Auto => {
            if !(c > T::zero()) {
                return Err(Error::Config(format!(
                    "monotonicity modulus must be positive, got {c}"
                )));
            }
            c / (l * l)
        }
        StepRule::Fixed(t) => t,
    };
    let q = contraction_factor(c, l, t)?;

    let mut u = initial_field(cfg, law.value_layout(), g)?;
    let denom = g_norm.max(T::of(DENOM_FLOOR));
    let mut residuals = Vec::with_capacity(64);
    let mut growth_streak = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;
    loop {
        let r = residual_field(law, linear, &u, g)?;
        let rel = r.l2_norm() / denom;
        if !rel.is_finite() {
            return Err(Error::Diverged {
                iterations,
                residual: f64::INFINITY,
            });
        }
        if let Some(&prev) = residuals.last() {
            if rel > prev {
                growth_streak += 1;
                if growth_streak >= DIVERGENCE_PATIENCE {
                    return Err(Error::Diverged {
                        iterations,
                        residual: rel.to_f64().unwrap_or(f64::NAN),
                    });
                }
            } else {
                growth_streak = 0;
            }
        }
        residuals.push(rel);
        if rel <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        u.add_scaled(&r, -t)?;
        iterations += 1;
    }
    Ok(SolveResult {
        solution: u,
        converged,
        iterations,
        residuals,
        step: t,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::Multivector;
    use crate::grid::{GridDomain, ShapeSpec};
    use crate::nemyckii::LawClaims;
    use std::sync::Arc;

    /// `f(v) = v / chi + alpha (v2 e1 - v1 e2)` on real 2-vectors: the
    /// rotation is antisymmetric, so `c = 1/chi` while
    /// `l = sqrt(1/chi^2 + alpha^2) > c`.
    struct Rotating {
        chi: f64,
        alpha: f64,
    }

    impl Rotating {
        fn c(&self) -> f64 {
            1.0 / self.chi
        }
        fn l(&self) -> f64 {
            (self.c() * self.c() + self.alpha * self.alpha).sqrt()
        }
    }

    impl PointwiseLaw<f64> for Rotating {
        fn dimension(&self) -> usize {
            2
        }
        fn value_layout(&self) -> ValueLayout {
            ValueLayout::RealVector
        }
        fn evaluate(&self, _x: &[f64], v: &Multivector<f64>) -> Result<Multivector<f64>> {
            let v1 = v.coeff(0b01);
            let v2 = v.coeff(0b10);
            let mut out = v.scaled(1.0 / self.chi);
            let mut c1 = out.coeff(0b01);
            c1.re += self.alpha * v2.re;
            out.set_coeff(0b01, c1);
            let mut c2 = out.coeff(0b10);
            c2.re -= self.alpha * v1.re;
            out.set_coeff(0b10, c2);
            Ok(out)
        }
        fn claims(&self) -> LawClaims<f64> {
            LawClaims {
                monotone: true,
                lipschitz: Some(self.l()),
                ..Default::default()
            }
        }
    }

    /// Radial law `f(v) = kappa (1 + |v| / (1 + |v|)) v`: strongly
    /// monotone with `c = kappa`, Lipschitz with `l = 2 kappa`.
    struct Saturating {
        kappa: f64,
        n: usize,
    }

    impl PointwiseLaw<f64> for Saturating {
        fn dimension(&self) -> usize {
            self.n
        }
        fn value_layout(&self) -> ValueLayout {
            ValueLayout::RealVector
        }
        fn evaluate(&self, _x: &[f64], v: &Multivector<f64>) -> Result<Multivector<f64>> {
            let s = v.norm();
            Ok(v.scaled(self.kappa * (1.0 + s / (1.0 + s))))
        }
        fn claims(&self) -> LawClaims<f64> {
            LawClaims {
                monotone: true,
                lipschitz: Some(2.0 * self.kappa),
                ..Default::default()
            }
        }
    }

    struct AntiMonotone;

    impl PointwiseLaw<f64> for AntiMonotone {
        fn dimension(&self) -> usize {
            2
        }
        fn value_layout(&self) -> ValueLayout {
            ValueLayout::RealVector
        }
        fn evaluate(&self, _x: &[f64], v: &Multivector<f64>) -> Result<Multivector<f64>> {
            Ok(v.scaled(-1.0))
        }
        fn claims(&self) -> LawClaims<f64> {
            LawClaims::default()
        }
    }

    fn grid2(cells: usize) -> Arc<GridDomain<f64>> {
        Arc::new(GridDomain::new(vec![-1.0; 2], vec![1.0; 2], cells, ShapeSpec::FullBox).unwrap())
    }

    #[test]
    fn linear_rotating_problem_hits_the_pointwise_inverse() {
        let g = grid2(6);
        let law = Rotating {
            chi: 2.0,
            alpha: 0.4,
        };
        let rhs = Field::random(&g, 33, FieldContent::RealVector, 1.0);
        let cfg = SolveConfig::new(law.c(), law.l()).with_tol(1e-12);
        let result = solve_monotone(&law, &ZeroOperator, &rhs, &cfg).unwrap();
        assert!(result.converged, "final {:e}", result.residuals.last().unwrap());
        // Pointwise inverse of [[1/chi, alpha], [-alpha, 1/chi]].
        let c = law.c();
        let det = c * c + law.alpha * law.alpha;
        let exact = rhs.map(|m| {
            let g1 = m.coeff(0b01).re;
            let g2 = m.coeff(0b10).re;
            let mut out = Multivector::zero(2);
            let mut c1 = out.coeff(0b01);
            c1.re = (c * g1 - law.alpha * g2) / det;
            out.set_coeff(0b01, c1);
            let mut c2 = out.coeff(0b10);
            c2.re = (law.alpha * g1 + c * g2) / det;
            out.set_coeff(0b10, c2);
            out
        });
        let err = result.solution.sub(&exact).unwrap().l2_norm() / exact.l2_norm();
        assert!(err < 1e-10, "solution error {err:e}");
        // Residuals decay at the certified rate once transients die out.
        let rate = mean_decay_rate(&result.residuals, 3).unwrap();
        assert!(
            rate <= result.q + 1e-9,
            "rate {rate} vs certified {}",
            result.q
        );
        assert!(result.q < 1.0);
    }

    #[test]
    fn saturating_problem_solves_the_equation() {
        let g = Arc::new(
            GridDomain::new(vec![-1.0; 3], vec![1.0; 3], 5, ShapeSpec::Ball).unwrap(),
        );
        let law = Saturating { kappa: 0.8, n: 3 };
        let rhs = Field::random(&g, 77, FieldContent::RealVector, 2.0);
        let cfg = SolveConfig::new(0.8, 1.6).with_tol(1e-11);
        let result = solve_monotone(&law, &ZeroOperator, &rhs, &cfg).unwrap();
        assert!(result.converged);
        let au = nemyckii_apply(&law, &result.solution).unwrap();
        let res = au.sub(&rhs).unwrap().l2_norm() / rhs.l2_norm();
        assert!(res < 1e-10, "equation residual {res:e}");
        // Auto step t = c/l^2 = 0.8/2.56^... and the advertised factor.
        assert_eq!(result.step, 0.8 / (1.6 * 1.6));
        assert!((result.q - (1.0f64 - 0.25).sqrt()).abs() < 1e-12);
        // The standalone residual of the solution is the last history entry.
        let standalone = residual(&law, &ZeroOperator, &result.solution, &rhs).unwrap();
        assert_eq!(standalone, *result.residuals.last().unwrap());
    }

    #[test]
    fn zero_rhs_converges_immediately_from_zero() {
        let g = grid2(5);
        let law = Saturating { kappa: 1.0, n: 2 };
        let rhs = Field::zero(&g);
        let result =
            solve_monotone(&law, &ZeroOperator, &rhs, &SolveConfig::new(1.0, 2.0)).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 0);
        assert_eq!(result.solution.l2_norm(), 0.0);
        assert_eq!(result.residuals, vec![0.0]);
    }

    #[test]
    fn warm_random_and_fixed_step_starts() {
        let g = grid2(4);
        let law = Rotating {
            chi: 1.5,
            alpha: 0.2,
        };
        let rhs = Field::random(&g, 5, FieldContent::RealVector, 1.0);
        let cfg = SolveConfig::new(law.c(), law.l()).with_tol(1e-10);
        let cold = solve_monotone(&law, &ZeroOperator, &rhs, &cfg).unwrap();
        assert!(cold.converged);

        // Restarting from the solution costs nothing.
        let warm_cfg = cfg
            .clone()
            .with_initial(InitialGuess::Field(cold.solution.clone()));
        let warm = solve_monotone(&law, &ZeroOperator, &rhs, &warm_cfg).unwrap();
        assert_eq!(warm.iterations, 0);

        // Strong monotonicity makes the solution unique: two random starts
        // land on the same fixed point.
        let from_a = solve_monotone(
            &law,
            &ZeroOperator,
            &rhs,
            &cfg.clone().with_initial(InitialGuess::Random {
                seed: 100,
                amplitude: 3.0,
            }),
        )
        .unwrap();
        let from_b = solve_monotone(
            &law,
            &ZeroOperator,
            &rhs,
            &cfg.clone().with_initial(InitialGuess::Random {
                seed: 200,
                amplitude: 3.0,
            }),
        )
        .unwrap();
        let gap = from_a.solution.sub(&from_b.solution).unwrap().l2_norm()
            / from_a.solution.l2_norm();
        assert!(gap <= 10.0 * 1e-10, "solutions differ by {gap:e}");

        // A smaller fixed step still converges, more slowly.
        let slow_cfg = cfg
            .clone()
            .with_step(StepRule::Fixed(0.2 * law.c() / (law.l() * law.l())))
            .with_max_iter(20_000);
        let slow = solve_monotone(&law, &ZeroOperator, &rhs, &slow_cfg).unwrap();
        assert!(slow.converged);
        assert!(slow.iterations >= cold.iterations);
        assert!(slow.q > cold.q);
    }

    #[test]
    fn bad_configurations_are_rejected() {
        let g = grid2(4);
        let law = Rotating {
            chi: 2.0,
            alpha: 0.3,
        };
        let rhs = Field::random(&g, 1, FieldContent::RealVector, 1.0);
        // Step beyond 2c/l^2: certified factor >= 1.
        let cfg = SolveConfig::new(law.c(), law.l()).with_step(StepRule::Fixed(4.0));
        assert!(matches!(
            solve_monotone(&law, &ZeroOperator, &rhs, &cfg),
            Err(Error::Config(_))
        ));
        assert!(contraction_factor(0.0, 1.0, 0.1).is_err());
        assert!(contraction_factor(2.0, 1.0, 0.1).is_err());
        assert!(contraction_factor(1.0, 2.0, 0.0).is_err());
        assert!(contraction_factor(1.0, 2.0, 0.25).is_ok());
        // L < c is impossible.
        assert!(
            solve_monotone(&law, &ZeroOperator, &rhs, &SolveConfig::new(0.5, 0.3)).is_err()
        );
        // The right-hand side must be paravector-valued.
        let bad = Field::random(&g, 7, FieldContent::FullComplex, 1.0);
        assert!(matches!(
            solve_monotone(&law, &ZeroOperator, &bad, &SolveConfig::new(law.c(), law.l())),
            Err(Error::Config(_))
        ));
        // Initial guess on a different grid.
        let other = grid2(5);
        let cfg = SolveConfig::new(law.c(), law.l())
            .with_initial(InitialGuess::Field(Field::zero(&other)));
        assert!(solve_monotone(&law, &ZeroOperator, &rhs, &cfg).is_err());
    }

    #[test]
    fn divergence_is_detected_not_looped() {
        let g = grid2(4);
        let rhs = Field::random(&g, 9, FieldContent::RealVector, 1.0);
        // Lie about the constants: the iteration map has factor |1 + t| > 1.
        let cfg = SolveConfig::new(0.5, 1.0).with_max_iter(100_000);
        match solve_monotone(&AntiMonotone, &ZeroOperator, &rhs, &cfg) {
            Err(Error::Diverged { iterations, .. }) => {
                assert!(iterations < 1000, "took {iterations} to notice");
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn exhausted_budget_reports_not_converged() {
        let g = grid2(4);
        let law = Saturating { kappa: 1.0, n: 3 };
        // Wrong dimension for the law: grid is 2d, law is 3d.
        let rhs = Field::random(&g, 2, FieldContent::RealVector, 1.0);
        assert!(
            solve_monotone(&law, &ZeroOperator, &rhs, &SolveConfig::new(1.0, 2.0)).is_err()
        );

        let g3 = Arc::new(
            GridDomain::new(vec![-1.0; 3], vec![1.0; 3], 4, ShapeSpec::FullBox).unwrap(),
        );
        let rhs = Field::random(&g3, 2, FieldContent::RealVector, 1.0);
        let cfg = SolveConfig::new(1.0, 2.0).with_tol(1e-14).with_max_iter(3);
        let result = solve_monotone(&law, &ZeroOperator, &rhs, &cfg).unwrap();
        assert!(!result.converged);
        assert_eq!(result.iterations, 3);
        assert_eq!(result.residuals.len(), 4);
        let summary = result.summary();
        assert!(!summary.converged);
        assert_eq!(summary.final_residual, *summary.residuals.last().unwrap());
        let json = serde_json::to_string(&summary).unwrap();
        assert!(json.contains("\"converged\":false"));
    }
}
