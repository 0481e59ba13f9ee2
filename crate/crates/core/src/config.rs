//! Problem configuration: a single JSON document naming the body, the
//! material curve, the applied field, and the solver budget.
//!
//! Sections `domain`, `curve`, `applied_field`, `solver` follow the schema
//! `domain{box,N,shape}`, `curve{family,params}`, `applied_field{kind,
//! params|path}`, `solver{tol,max_iter,step}`. Two optional sections extend
//! it: `disturbance{a0,a}` selects a nonzero kernel disturbance and
//! `operator{exterior_pad,quadrature}` overrides discretization defaults.
//! Parsing is strict: unknown keys are rejected so typos surface as config
//! errors rather than silently ignored settings.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clifford::{Multivector, Paravector};
use crate::grid::{Field, GridDomain, ShapeSpec};
use crate::kernels::{sphere_area, KernelParams};
use crate::magneto::MhCurve;
use crate::operators::{OperatorContext, QuadratureRule};
use crate::solver::{SolveConfig, StepRule};
use crate::{Error, Result, Scalar};

use num_complex::Complex;

/// Axis-aligned box, one entry of `lo`/`hi` per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Which voxels of the box form the body.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeName {
    /// Inscribed ball of the box.
    #[default]
    Ball,
    /// Every voxel.
    FullBox,
}

impl ShapeName {
    fn to_shape(self) -> ShapeSpec {
        match self {
            ShapeName::Ball => ShapeSpec::Ball,
            ShapeName::FullBox => ShapeSpec::FullBox,
        }
    }
}

/// `domain` section: box, cells per axis, body shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(rename = "box")]
    pub bounds: BoxSpec,
    /// Cells per axis (the grid is N^n voxels before masking).
    #[serde(rename = "N")]
    pub cells: usize,
    #[serde(default)]
    pub shape: ShapeName,
}

/// Constant applied field: `magnitude * direction` everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantParams {
    pub direction: Vec<f64>,
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
}

fn default_magnitude() -> f64 {
    1.0
}

/// Point-dipole applied field, evaluated at voxel centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleParams {
    pub moment: Vec<f64>,
    /// Source location; must stay clear of every active voxel center.
    pub location: Vec<f64>,
}

/// `applied_field` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AppliedFieldSection {
    Constant { params: ConstantParams },
    Dipole { params: DipoleParams },
    /// Load a stored field (CSV, same grid as `domain`).
    File { path: PathBuf },
}

/// Step size: the word `"auto"` or a fixed positive number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSetting {
    Keyword(StepKeyword),
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKeyword {
    Auto,
}

impl Default for StepSetting {
    fn default() -> Self {
        StepSetting::Keyword(StepKeyword::Auto)
    }
}

/// `solver` section; every field has a default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub step: StepSetting,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: 1e-8,
            max_iter: 10_000,
            step: StepSetting::default(),
        }
    }
}

/// Optional `disturbance` section: paravector a0 + a entering the kernels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceSection {
    pub a0: f64,
    /// Vector part; empty means zero.
    pub a: Vec<f64>,
}

/// Quadrature rule names for the `operator` section.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureName {
    #[default]
    CorrectSingularCell,
    OmitSingularCell,
}

impl QuadratureName {
    fn to_rule(self) -> QuadratureRule {
        match self {
            QuadratureName::CorrectSingularCell => QuadratureRule::CorrectSingularCell,
            QuadratureName::OmitSingularCell => QuadratureRule::OmitSingularCell,
        }
    }
}

/// Optional `operator` section: discretization knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSection {
    pub exterior_pad: usize,
    pub quadrature: QuadratureName,
}

impl Default for OperatorSection {
    fn default() -> Self {
        OperatorSection {
            exterior_pad: 2,
            quadrature: QuadratureName::default(),
        }
    }
}

/// The whole document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<MhCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied_field: Option<AppliedFieldSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSection>,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ProblemConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dimension(&self) -> usize {
        self.domain.bounds.lo.len()
    }

    /// Structural checks that do not need the grid built.
    pub fn validate(&self) -> Result<()> {
        let n = self.dimension();
        let b = &self.domain.bounds;
        if b.hi.len() != n {
            return Err(Error::Config(format!(
                "box lo has {} coordinates, hi has {}",
                n,
                b.hi.len()
            )));
        }
        if !(2..=4).contains(&n) {
            return Err(Error::Config(format!(
                "dimension {n} outside the supported range 2..=4"
            )));
        }
        for (lo, hi) in b.lo.iter().zip(&b.hi) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "box needs finite lo < hi per axis, got [{lo}, {hi}]"
                )));
            }
        }
        if self.domain.cells < 2 {
            return Err(Error::Config(format!(
                "N = {} is too coarse; need at least 2 cells per axis",
                self.domain.cells
            )));
        }
        if let Some(curve) = &self.curve {
            curve.validate()?;
        }
        match &self.applied_field {
            Some(AppliedFieldSection::Constant { params }) => {
                require_components("applied_field direction", &params.direction, n)?;
                if !params.magnitude.is_finite() {
                    return Err(Error::Config(format!(
                        "applied_field magnitude must be finite, got {}",
                        params.magnitude
                    )));
                }
            }
            Some(AppliedFieldSection::Dipole { params }) => {
                require_components("dipole moment", &params.moment, n)?;
                require_components("dipole location", &params.location, n)?;
            }
            Some(AppliedFieldSection::File { .. }) | None => {}
        }
        if let Some(d) = &self.disturbance {
            if !d.a0.is_finite() || d.a.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("disturbance must be finite".into()));
            }
            if !d.a.is_empty() && d.a.len() != n {
                return Err(Error::Config(format!(
                    "disturbance a has {} components on a {n}-d grid",
                    d.a.len()
                )));
            }
        }
        if !(self.solver.tol.is_finite() && self.solver.tol > 0.0) {
            return Err(Error::Config(format!(
                "solver tol must be positive, got {}",
                self.solver.tol
            )));
        }
        if let StepSetting::Fixed(t) = self.solver.step {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!(
                    "solver step must be \"auto\" or a positive number, got {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn build_domain<T: Scalar>(&self) -> Result<Arc<GridDomain<T>>> {
        let lo = self.domain.bounds.lo.iter().map(|&x| T::of(x)).collect();
        let hi = self.domain.bounds.hi.iter().map(|&x| T::of(x)).collect();
        let domain = GridDomain::new(lo, hi, self.domain.cells, self.domain.shape.to_shape())?;
        Ok(Arc::new(domain))
    }

    pub fn kernel_params<T: Scalar>(&self) -> Result<KernelParams<T>> {
        let n = self.dimension();
        match &self.disturbance {
            None => KernelParams::undisturbed(n),
            Some(d) => {
                let mut vec = vec![T::zero(); n];
                for (slot, &x) in vec.iter_mut().zip(&d.a) {
                    *slot = T::of(x);
                }
                KernelParams::new(n, Paravector::new(T::of(d.a0), vec)?)
            }
        }
    }

    pub fn build_context<T: Scalar>(&self) -> Result<OperatorContext<T>> {
        let op = self.operator.unwrap_or_default();
        OperatorContext::new(
            self.build_domain()?,
            self.kernel_params()?,
            op.exterior_pad,
            op.quadrature.to_rule(),
        )
    }

    /// Realizes the `applied_field` section on the given grid.
    pub fn build_applied<T: Scalar>(&self, domain: &Arc<GridDomain<T>>) -> Result<Field<T>> {
        let section = self.applied_field.as_ref().ok_or_else(|| {
            Error::Config("this run needs an applied_field section".into())
        })?;
        match section {
            AppliedFieldSection::Constant { params } => {
                let dir: Vec<T> = params
                    .direction
                    .iter()
                    .map(|&d| T::of(d * params.magnitude))
                    .collect();
                crate::magneto::uniform_field(domain, &dir)
            }
            AppliedFieldSection::Dipole { params } => dipole_field(domain, params),
            AppliedFieldSection::File { path } => {
                let field = Field::read_csv_path(domain, path)?;
                if field.higher_grade_leak() > T::of(1e-12) * field.max_abs().max(T::one()) {
                    return Err(Error::Config(format!(
                        "applied field from {} carries grade-2+ content",
                        path.display()
                    )));
                }
                Ok(field)
            }
        }
    }

    pub fn require_curve(&self) -> Result<&MhCurve> {
        self.curve
            .as_ref()
            .ok_or_else(|| Error::Config("this run needs a curve section".into()))
    }

    /// Solver settings married to the curve's certified constants.
    pub fn solve_config<T: Scalar>(&self, curve: &MhCurve) -> SolveConfig<T> {
        let mut cfg = SolveConfig::new(
            T::of(curve.monotone_constant()),
            T::of(curve.lipschitz_constant()),
        )
        .with_tol(T::of(self.solver.tol))
        .with_max_iter(self.solver.max_iter);
        if let StepSetting::Fixed(t) = self.solver.step {
            cfg = cfg.with_step(StepRule::Fixed(T::of(t)));
        }
        cfg
    }
}

fn require_components(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Config(format!(
            "{what} has {} components on a {n}-d grid",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{what} must be finite")));
    }
    Ok(())
}

/// Point-dipole field `(n <m,r^>r^ - m) / (sigma_n |r|^n)` sampled at voxel
/// centers; refuses sources that sit on the body.
fn dipole_field<T: Scalar>(
    domain: &Arc<GridDomain<T>>,
    params: &DipoleParams,
) -> Result<Field<T>> {
    let n = domain.dimension();
    let sigma = sphere_area::<T>(n)?;
    let moment: Vec<T> = params.moment.iter().map(|&x| T::of(x)).collect();
    let location: Vec<T> = params.location.iter().map(|&x| T::of(x)).collect();

    // A source closer than half a voxel to an active center is effectively
    // inside the discretized body and the evaluation blows up.
    let spacing = domain.spacing();
    let min_gap_sq = spacing
        .iter()
        .fold(T::zero(), |acc, &h| acc + h * h * T::of(0.25));
    for &flat in domain.active_indices() {
        let c = domain.center(flat);
        let mut r2 = T::zero();
        for j in 0..n {
            let d = c[j] - location[j];
            r2 += d * d;
        }
        if r2 < min_gap_sq {
            return Err(Error::Config(
                "dipole location overlaps the body; move it outside".into(),
            ));
        }
    }

    Field::from_fn(domain, |x| {
        let mut r = vec![T::zero(); n];
        let mut r2 = T::zero();
        for j in 0..n {
            r[j] = x[j] - location[j];
            r2 += r[j] * r[j];
        }
        let rnorm = r2.sqrt();
        let mut mr = T::zero();
        for j in 0..n {
            mr += moment[j] * r[j] / rnorm;
        }
        let scale = T::one() / (sigma * rnorm.powi(n as i32));
        let mut value = Multivector::zero(n);
        for j in 0..n {
            let comp = scale * (T::of_usize(n) * mr * r[j] / rnorm - moment[j]);
            value.set_coeff(1 << j, Complex::new(comp, T::zero()));
        }
        value
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldContent;
    use crate::magneto::demag_apply;

    const BALL_JSON: &str = r#"{
        "domain": { "box": { "lo": [-1, -1, -1], "hi": [1, 1, 1] }, "N": 6, "shape": "ball" },
        "curve": { "family": "linear", "params": { "chi": 2.0 } },
        "applied_field": { "kind": "constant", "params": { "direction": [0, 0, 1], "magnitude": 1.5 } },
        "solver": { "tol": 1e-9, "max_iter": 500, "step": "auto" }
    }"#;

    #[test]
    fn full_document_round_trips_and_builds() {
        let cfg = ProblemConfig::from_json(BALL_JSON).unwrap();
        assert_eq!(cfg.dimension(), 3);
        assert_eq!(cfg.solver.max_iter, 500);
        assert_eq!(cfg.solver.step, StepSetting::default());

        let back = ProblemConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);

        let domain = cfg.build_domain::<f64>().unwrap();
        assert_eq!(domain.dimension(), 3);
        assert!(domain.num_active() > 0);

        let applied = cfg.build_applied(&domain).unwrap();
        let v = &applied.values()[0];
        assert_eq!(v.coeff(0b100).re, 1.5);
        assert_eq!(v.coeff(0b001).re, 0.0);

        let curve = cfg.require_curve().unwrap();
        let solve: SolveConfig<f64> = cfg.solve_config(curve);
        assert_eq!(solve.tol, 1e-9);
        assert_eq!(solve.max_iter, 500);

        let ctx = cfg.build_context::<f64>().unwrap();
        assert!(ctx.params().is_undisturbed());
        assert_eq!(ctx.exterior_pad(), 2);
        // The built context actually runs.
        demag_apply(&ctx, &applied).unwrap();
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = ProblemConfig::from_json(
            r#"{ "domain": { "box": { "lo": [0, 0], "hi": [1, 1] }, "N": 4 } }"#,
        )
        .unwrap();
        assert_eq!(cfg.domain.shape, ShapeName::Ball);
        assert_eq!(cfg.solver.tol, 1e-8);
        assert_eq!(cfg.solver.max_iter, 10_000);
        assert!(cfg.curve.is_none());
        assert!(cfg.require_curve().is_err());
        assert!(cfg.build_applied(&cfg.build_domain::<f64>().unwrap()).is_err());
    }

    #[test]
    fn optional_sections_reach_the_operator_context() {
        let cfg = ProblemConfig::from_json(
            r#"{
                "domain": { "box": { "lo": [-1, -1, -1], "hi": [1, 1, 1] }, "N": 4, "shape": "full_box" },
                "disturbance": { "a0": 0.5, "a": [0.1, 0.0, 0.0] },
                "operator": { "exterior_pad": 1, "quadrature": "omit_singular_cell" }
            }"#,
        )
        .unwrap();
        let ctx = cfg.build_context::<f64>().unwrap();
        assert!(!ctx.params().is_undisturbed());
        assert_eq!(ctx.exterior_pad(), 1);
        assert_eq!(ctx.quadrature(), QuadratureRule::OmitSingularCell);
        assert_eq!(ctx.domain().num_active(), 64);
    }

    #[test]
    fn dipole_fields_decay_and_refuse_interior_sources() {
        let cfg = ProblemConfig::from_json(
            r#"{
                "domain": { "box": { "lo": [-1, -1, -1], "hi": [1, 1, 1] }, "N": 5 },
                "applied_field": { "kind": "dipole",
                                   "params": { "moment": [0, 0, 1], "location": [0, 0, 4] } }
            }"#,
        )
        .unwrap();
        let domain = cfg.build_domain::<f64>().unwrap();
        let h = cfg.build_applied(&domain).unwrap();
        assert!(h.vector_leak() == 0.0);

        // On the dipole axis at distance d below the source the field is
        // 2m/(4 pi d^3) along +z: check at the voxel center nearest the top.
        let mut best = None;
        for &flat in domain.active_indices() {
            let c = domain.center(flat);
            let off_axis = c[0].hypot(c[1]);
            if off_axis < 1e-12 {
                let key = (c[2] * 1e6) as i64;
                if best.map_or(true, |(k, _)| key > k) {
                    best = Some((key, flat));
                }
            }
        }
        let (_, flat) = best.expect("axis voxel exists");
        let c = domain.center(flat);
        let d = 4.0 - c[2];
        let expect = 2.0 / (4.0 * std::f64::consts::PI * d.powi(3));
        let rank = domain.rank_of(flat).unwrap();
        let got = h.values()[rank].coeff(0b100).re;
        assert!(
            (got - expect).abs() <= 1e-12 * expect.abs(),
            "axis field {got} vs {expect}"
        );

        let inside = ProblemConfig::from_json(
            r#"{
                "domain": { "box": { "lo": [-1, -1, -1], "hi": [1, 1, 1] }, "N": 5 },
                "applied_field": { "kind": "dipole",
                                   "params": { "moment": [0, 0, 1], "location": [0.01, 0, 0] } }
            }"#,
        )
        .unwrap();
        assert!(matches!(
            inside.build_applied(&domain).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn file_fields_round_trip_through_csv() {
        let cfg = ProblemConfig::from_json(
            r#"{ "domain": { "box": { "lo": [-1, -1, -1], "hi": [1, 1, 1] }, "N": 4 } }"#,
        )
        .unwrap();
        let domain = cfg.build_domain::<f64>().unwrap();
        let stored = Field::random(&domain, 7, FieldContent::RealVector, 1.0);
        let dir = std::env::temp_dir().join("cliffsolve-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("applied.csv");
        stored.write_csv_path(&path).unwrap();

        let mut with_file = cfg.clone();
        with_file.applied_field = Some(AppliedFieldSection::File { path: path.clone() });
        let loaded = with_file.build_applied(&domain).unwrap();
        assert_eq!(loaded.sub(&stored).unwrap().max_abs(), 0.0);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn bad_documents_are_rejected_with_config_errors() {
        let cases = [
            // unknown key
            r#"{ "domain": { "box": { "lo": [0,0,0], "hi": [1,1,1] }, "N": 4 }, "stepsize": 3 }"#,
            // lo/hi mismatch
            r#"{ "domain": { "box": { "lo": [0,0,0], "hi": [1,1] }, "N": 4 } }"#,
            // unsupported dimension
            r#"{ "domain": { "box": { "lo": [0], "hi": [1] }, "N": 4 } }"#,
            // inverted box
            r#"{ "domain": { "box": { "lo": [0,0,2], "hi": [1,1,1] }, "N": 4 } }"#,
            // too coarse
            r#"{ "domain": { "box": { "lo": [0,0,0], "hi": [1,1,1] }, "N": 1 } }"#,
            // bad curve parameter
            r#"{ "domain": { "box": { "lo": [0,0,0], "hi": [1,1,1] }, "N": 4 },
                 "curve": { "family": "linear", "params": { "chi": -1.0 } } }"#,
            // direction arity
            r#"{ "domain": { "box": { "lo": [0,0,0], "hi": [1,1,1] }, "N": 4 },
                 "applied_field": { "kind": "constant", "params": { "direction": [1, 0] } } }"#,
            // nonpositive tolerance
            r#"{ "domain": { "box": { "lo": [0,0,0], "hi": [1,1,1] }, "N": 4 },
                 "solver": { "tol": 0.0 } }"#,
            // bad step word
            r#"{ "domain": { "box": { "lo": [0,0,0], "hi": [1,1,1] }, "N": 4 },
                 "solver": { "step": "fast" } }"#,
            // negative fixed step
            r#"{ "domain": { "box": { "lo": [0,0,0], "hi": [1,1,1] }, "N": 4 },
                 "solver": { "step": -0.5 } }"#,
            // disturbance arity
            r#"{ "domain": { "box": { "lo": [0,0,0], "hi": [1,1,1] }, "N": 4 },
                 "disturbance": { "a0": 0.1, "a": [1.0] } }"#,
        ];
        for text in cases {
            assert!(
                matches!(ProblemConfig::from_json(text), Err(Error::Config(_))),
                "accepted: {text}"
            );
        }
    }
}
