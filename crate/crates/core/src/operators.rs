//! Discrete operators on voxel fields: the disturbed Dirac operator
//! `D_{ia} u = sum_j e_j d_j u + i a u`, the Teodorescu transform
//! `(T u)(x) = int_G e_{ia}(x - y) u(y) dy`, and their composition
//! `B = D_{ia} P T`, the singular integral operator whose spectral
//! properties (positivity, norm <= 1) everything downstream leans on.
//!
//! Differentiation is second-order finite differences (one-sided at mask
//! boundaries); integration is the midpoint rule with the kernel cached on
//! the lattice of voxel offsets. The singular voxel is either omitted or
//! replaced by an equal-volume-ball correction of the weakly singular
//! scalar term.

use std::sync::{Arc, OnceLock};

use num_complex::Complex;
use rayon::prelude::*;

use crate::clifford::Multivector;
use crate::grid::{Field, FieldContent, GridDomain};
use crate::kernels::{disturbed_kernel, disturbed_kernel_gradient, KernelParams};
use crate::linalg::{
    power_iteration_sigma_max, symmetric_eigenvalues, DenseMatrix, PowerIteration,
};
use crate::special::{bessel_k_with_next, BesselOrder};
use crate::{Error, Result, Scalar};

/// Treatment of the voxel containing the kernel singularity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureRule {
    /// Drop the singular voxel from the sum.
    OmitSingularCell,
    /// Replace it by the analytic integral of the weakly singular scalar
    /// term over the equal-volume ball (the strongly singular vector term
    /// integrates to zero there by odd symmetry).
    CorrectSingularCell,
}

/// Free-term handling for the principal-value derivative of `T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FreeTermRule<T> {
    /// Principal value only.
    None,
    /// Adds `-(1/n) delta_jk u(x)`, the free term of the equal-volume-ball
    /// exclusion for this kernel normalization.
    DeltaOverN,
    /// Adds `c delta_jk u(x)` with a caller-supplied `c`.
    Custom(T),
}

/// Kernel values `e_{ia}(d * h)` for every lattice offset `d` with
/// `|d_k| <= extent - 1`; the zero offset holds zero.
struct KernelTable<T: Scalar> {
    extent: usize,
    stride: usize,
    n: usize,
    entries: Vec<Multivector<T>>,
}

impl<T: Scalar> KernelTable<T> {
    fn build(params: &KernelParams<T>, spacing: &[T], extent: usize) -> Result<Self> {
        let n = params.dimension();
        let stride = 2 * extent - 1;
        let len = stride.pow(n as u32);
        let entries: Vec<Multivector<T>> = (0..len)
            .into_par_iter()
            .map(|idx| {
                let mut rem = idx;
                let mut offset = [0isize; 8];
                for k in 0..n {
                    offset[k] = (rem % stride) as isize - (extent as isize - 1);
                    rem /= stride;
                }
                if offset[..n].iter().all(|&d| d == 0) {
                    return Ok(Multivector::zero(n));
                }
                let z: Vec<T> = (0..n)
                    .map(|k| T::of(offset[k] as f64) * spacing[k])
                    .collect();
                disturbed_kernel(params, &z)
            })
            .collect::<Result<_>>()?;
        Ok(KernelTable {
            extent,
            stride,
            n,
            entries,
        })
    }

    #[inline]
    fn get(&self, offset: &[isize]) -> &Multivector<T> {
        let mut idx = 0usize;
        for k in (0..self.n).rev() {
            debug_assert!(offset[k].unsigned_abs() < self.extent);
            idx = idx * self.stride + (offset[k] + self.extent as isize - 1) as usize;
        }
        &self.entries[idx]
    }
}

/// Everything needed to apply the integral operators on one grid: the
/// domain, the kernel parameters, the cached kernel table, the singular-cell
/// rule, and the width of the exterior collar used by the Borel-Pompeiu
/// check.
pub struct OperatorContext<T: Scalar> {
    domain: Arc<GridDomain<T>>,
    params: KernelParams<T>,
    exterior_pad: usize,
    quadrature: QuadratureRule,
    table: KernelTable<T>,
    /// `int_ball e_{ia}(z) dz` over the equal-volume ball of one voxel;
    /// purely imaginary scalar, zero when `a0 = 0`.
    singular_correction: Complex<T>,
    ext_domain: OnceLock<Arc<GridDomain<T>>>,
    dense: OnceLock<Arc<DenseOperator<T>>>,
}

impl<T: Scalar> OperatorContext<T> {
    pub fn new(
        domain: Arc<GridDomain<T>>,
        params: KernelParams<T>,
        exterior_pad: usize,
        quadrature: QuadratureRule,
    ) -> Result<Self> {
        if domain.dimension() != params.dimension() {
            return Err(Error::DimensionMismatch(format!(
                "grid dimension {} vs kernel dimension {}",
                domain.dimension(),
                params.dimension()
            )));
        }
        if exterior_pad > domain.cells() {
            return Err(Error::Domain(format!(
                "exterior pad {} exceeds the grid side {}",
                exterior_pad,
                domain.cells()
            )));
        }
        let extent = domain.cells() + exterior_pad;
        let table = KernelTable::build(&params, domain.spacing(), extent)?;
        let singular_correction = match quadrature {
            QuadratureRule::OmitSingularCell => Complex::new(T::zero(), T::zero()),
            QuadratureRule::CorrectSingularCell => {
                singular_cell_integral(&params, domain.voxel_volume())?
            }
        };
        Ok(OperatorContext {
            domain,
            params,
            exterior_pad,
            quadrature,
            table,
            singular_correction,
            ext_domain: OnceLock::new(),
            dense: OnceLock::new(),
        })
    }

    pub fn domain(&self) -> &Arc<GridDomain<T>> {
        &self.domain
    }

    pub fn params(&self) -> &KernelParams<T> {
        &self.params
    }

    pub fn quadrature(&self) -> QuadratureRule {
        self.quadrature
    }

    pub fn exterior_pad(&self) -> usize {
        self.exterior_pad
    }

    /// Extended full-box grid used to evaluate `T u` outside the domain.
    pub fn extended_domain(&self) -> Result<Arc<GridDomain<T>>> {
        if let Some(d) = self.ext_domain.get() {
            return Ok(d.clone());
        }
        let ext = Arc::new(self.domain.extended(self.exterior_pad)?);
        Ok(self.ext_domain.get_or_init(|| ext).clone())
    }

    fn check_field(&self, u: &Field<T>) -> Result<()> {
        if Arc::ptr_eq(u.domain(), &self.domain) || **u.domain() == *self.domain {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(
                "field does not live on the operator's grid".into(),
            ))
        }
    }
}

/// `int_ball e_{ia}(z) dz` with the ball chosen to match one voxel's volume.
/// The vector term vanishes by odd symmetry; the scalar term integrates in
/// closed form through `d/dt [t^{p+1} K_{p+1}] = -t^{p+1} K_p`:
/// result `= -i sigma_n / a0 * (1/sigma_n - (2 pi)^{-n/2} s^{n/2} K_{n/2}(s))`
/// at `s = a0 R`.
fn singular_cell_integral<T: Scalar>(
    params: &KernelParams<T>,
    voxel_volume: T,
) -> Result<Complex<T>> {
    let a0 = params.a0();
    if a0 <= T::zero() {
        return Ok(Complex::new(T::zero(), T::zero()));
    }
    let n = params.dimension();
    let sigma: T = crate::kernels::sphere_area(n)?;
    // Ball with the voxel's volume: vol = sigma_n R^n / n.
    let radius = (voxel_volume * T::of_usize(n) / sigma).powf(T::one() / T::of_usize(n));
    let half_n = T::of_usize(n) * T::of(0.5);
    let s = a0 * radius;
    let order = BesselOrder::new(half_n - T::one())?;
    let (_, k_high) = bessel_k_with_next(order, s)?;
    let two_pi = T::of(2.0) * T::PI();
    let tail = two_pi.powf(-half_n) * s.powf(half_n) * k_high;
    let value = -(sigma / a0) * (T::one() / sigma - tail);
    Ok(Complex::new(T::zero(), value))
}

/// Stencil fallback bookkeeping from one Dirac application.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StencilStats {
    /// Voxels where at least one axis degraded to a first-order stencil.
    pub first_order_voxels: usize,
}

pub(crate) fn neighbor_rank<T: Scalar>(
    domain: &GridDomain<T>,
    coord: &[usize],
    axis: usize,
    delta: isize,
) -> Option<usize> {
    let c = coord[axis] as isize + delta;
    if c < 0 || c >= domain.cells() as isize {
        return None;
    }
    let mut nb = [0usize; 8];
    nb[..coord.len()].copy_from_slice(coord);
    nb[axis] = c as usize;
    domain.rank_of(domain.flat_of(&nb[..coord.len()]))
}

/// Disturbed Dirac operator `D_{ia} u = sum_j e_j d_j u + i a u` by finite
/// differences on the field's own grid. Central differences where both
/// neighbors are active, second-order one-sided at the mask boundary,
/// first-order (flagged) where only one neighbor exists.
pub fn dirac_apply_with_stats<T: Scalar>(
    params: &KernelParams<T>,
    u: &Field<T>,
) -> Result<(Field<T>, StencilStats)> {
    let domain = u.domain().clone();
    let n = domain.dimension();
    if n != params.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "field dimension {} vs kernel dimension {}",
            n,
            params.dimension()
        )));
    }
    let ia = params.disturbance().embed_times_i();
    let has_ia = !params.is_undisturbed();
    let active = domain.active_indices();
    let results: Vec<Result<(Multivector<T>, bool)>> = active
        .par_iter()
        .enumerate()
        .map(|(rank, &flat)| {
            let mut coord = vec![0usize; n];
            domain.lattice_of(flat, &mut coord);
            let mut out = Multivector::zero(n);
            let mut first_order = false;
            for axis in 0..n {
                let h = domain.spacing()[axis];
                let plus1 = neighbor_rank(&domain, &coord, axis, 1);
                let minus1 = neighbor_rank(&domain, &coord, axis, -1);
                let mut deriv = Multivector::zero(n);
                match (minus1, plus1) {
                    (Some(m), Some(p)) => {
                        deriv.add_scaled(u.value(p), T::of(0.5) / h);
                        deriv.add_scaled(u.value(m), -(T::of(0.5) / h));
                    }
                    (None, Some(p)) => {
                        if let Some(p2) = neighbor_rank(&domain, &coord, axis, 2) {
                            deriv.add_scaled(u.value(rank), -(T::of(1.5) / h));
                            deriv.add_scaled(u.value(p), T::of(2.0) / h);
                            deriv.add_scaled(u.value(p2), -(T::of(0.5) / h));
                        } else {
                            deriv.add_scaled(u.value(p), T::one() / h);
                            deriv.add_scaled(u.value(rank), -(T::one() / h));
                            first_order = true;
                        }
                    }
                    (Some(m), None) => {
                        if let Some(m2) = neighbor_rank(&domain, &coord, axis, -2) {
                            deriv.add_scaled(u.value(rank), T::of(1.5) / h);
                            deriv.add_scaled(u.value(m), -(T::of(2.0) / h));
                            deriv.add_scaled(u.value(m2), T::of(0.5) / h);
                        } else {
                            deriv.add_scaled(u.value(rank), T::one() / h);
                            deriv.add_scaled(u.value(m), -(T::one() / h));
                            first_order = true;
                        }
                    }
                    (None, None) => {
                        return Err(Error::NoStencil(coord.clone()));
                    }
                }
                out = &out + &deriv.mul_basis_left(axis + 1);
            }
            if has_ia {
                out.add_scaled_product(&ia, u.value(rank), T::one());
            }
            Ok((out, first_order))
        })
        .collect();
    let mut out = Field::zero(&domain);
    let mut stats = StencilStats::default();
    for (rank, r) in results.into_iter().enumerate() {
        let (v, fo) = r?;
        out.set_value(rank, v);
        if fo {
            stats.first_order_voxels += 1;
        }
    }
    Ok((out, stats))
}

/// [`dirac_apply_with_stats`] without the bookkeeping.
pub fn dirac_apply<T: Scalar>(params: &KernelParams<T>, u: &Field<T>) -> Result<Field<T>> {
    Ok(dirac_apply_with_stats(params, u)?.0)
}

impl<T: Scalar> OperatorContext<T> {
    /// Teodorescu transform `(T u)(x)` at the active voxels of the domain:
    /// midpoint quadrature of `e_{ia}(x - y) u(y)` over active `y != x`,
    /// plus the singular-cell correction if configured.
    pub fn teodorescu_apply(&self, u: &Field<T>) -> Result<Field<T>> {
        self.check_field(u)?;
        let values = self.teodorescu_values(u, &self.domain, 0)?;
        let mut out = Field::zero(&self.domain);
        for (rank, v) in values.into_iter().enumerate() {
            out.set_value(rank, v);
        }
        Ok(out)
    }

    /// Teodorescu transform evaluated at every voxel of the extended grid
    /// (the domain box widened by `exterior_pad` voxels per side).
    pub fn teodorescu_apply_extended(&self, u: &Field<T>) -> Result<Field<T>> {
        self.check_field(u)?;
        let ext = self.extended_domain()?;
        let values = self.teodorescu_values(u, &ext, self.exterior_pad as isize)?;
        let mut out = Field::zero(&ext);
        for (rank, v) in values.into_iter().enumerate() {
            out.set_value(rank, v);
        }
        Ok(out)
    }

    /// Quadrature core: target lattice coordinate `c` (on `targets`)
    /// corresponds to source coordinate `c - shift` on the base grid.
    fn teodorescu_values(
        &self,
        u: &Field<T>,
        targets: &Arc<GridDomain<T>>,
        shift: isize,
    ) -> Result<Vec<Multivector<T>>> {
        let n = self.domain.dimension();
        let vol = self.domain.voxel_volume();
        let sources: Vec<(Vec<isize>, usize)> = {
            let mut v = Vec::with_capacity(self.domain.num_active());
            let mut coord = vec![0usize; n];
            for (rank, &flat) in self.domain.active_indices().iter().enumerate() {
                self.domain.lattice_of(flat, &mut coord);
                v.push((coord.iter().map(|&c| c as isize).collect(), rank));
            }
            v
        };
        let out: Vec<Multivector<T>> = targets
            .active_indices()
            .par_iter()
            .map(|&tflat| {
                let mut tcoord = vec![0usize; n];
                targets.lattice_of(tflat, &mut tcoord);
                let mut offset = vec![0isize; n];
                let mut acc = Multivector::zero(n);
                for (scoord, srank) in &sources {
                    let mut same = true;
                    for k in 0..n {
                        offset[k] = tcoord[k] as isize - shift - scoord[k];
                        same &= offset[k] == 0;
                    }
                    if same {
                        acc.add_scaled_complex(u.value(*srank), self.singular_correction);
                    } else {
                        acc.add_scaled_product(self.table.get(&offset), u.value(*srank), vol);
                    }
                }
                acc
            })
            .collect();
        Ok(out)
    }

    /// The singular operator `B u = D_{ia} P T_{ia} u`.
    ///
    /// With an exterior collar configured, `T u` is evaluated on the padded
    /// box first so every mask voxel differentiates through a full central
    /// stencil; one-sided stencils at the staircase boundary otherwise
    /// dominate the positivity defect of the composition (an order of
    /// magnitude in the smallest symmetrized eigenvalue). With `pad = 0`
    /// the composition stays on the mask.
    pub fn singular_b_apply(&self, u: &Field<T>) -> Result<Field<T>> {
        if self.exterior_pad == 0 {
            let t = self.teodorescu_apply(u)?;
            let p = t.map(|v| v.projection_p());
            return dirac_apply(&self.params, &p);
        }
        let t = self.teodorescu_apply_extended(u)?;
        let p = t.map(|v| v.projection_p());
        let d = dirac_apply(&self.params, &p)?;
        let ext = self.extended_domain()?;
        let pad = self.exterior_pad;
        let n = self.domain.dimension();
        let mut out = Field::zero(&self.domain);
        let mut coord = vec![0usize; n];
        for (rank, &flat) in self.domain.active_indices().iter().enumerate() {
            self.domain.lattice_of(flat, &mut coord);
            for c in coord.iter_mut() {
                *c += pad;
            }
            let erank = ext
                .rank_of(ext.flat_of(&coord))
                .expect("collar covers the mask");
            out.set_value(rank, d.value(erank).clone());
        }
        Ok(out)
    }

    /// Left inverse check `D_{ia} T_{ia} u = u` inside, `= 0` outside.
    pub fn borel_pompeiu_check(&self, u: &Field<T>) -> Result<BpReport<T>> {
        if self.exterior_pad == 0 {
            return Err(Error::Domain(
                "Borel-Pompeiu check needs exterior_pad >= 1".into(),
            ));
        }
        let ext = self.extended_domain()?;
        let tu = self.teodorescu_apply_extended(u)?;
        let v = dirac_apply(&self.params, &tu)?;
        let n = self.domain.dimension();
        let pad = self.exterior_pad;
        let interior = self.domain.eroded_mask(2);
        let vol = self.domain.voxel_volume();

        let mut num = T::zero();
        let mut den = T::zero();
        let mut interior_voxels = 0usize;
        let mut exterior_sq = T::zero();
        let mut exterior_voxels = 0usize;
        let mut coord = vec![0usize; n];
        for (erank, &eflat) in ext.active_indices().iter().enumerate() {
            ext.lattice_of(eflat, &mut coord);
            let base: Option<Vec<usize>> = coord
                .iter()
                .map(|&c| {
                    let b = c as isize - pad as isize;
                    if b >= 0 && (b as usize) < self.domain.cells() {
                        Some(b as usize)
                    } else {
                        None
                    }
                })
                .collect();
            let base_rank = base.as_ref().and_then(|b| {
                let flat = self.domain.flat_of(b);
                self.domain.rank_of(flat).map(|r| (flat, r))
            });
            match base_rank {
                Some((bflat, brank)) => {
                    if interior[bflat] {
                        let diff = v.value(erank) - u.value(brank);
                        num += diff.norm_sq();
                        den += u.value(brank).norm_sq();
                        interior_voxels += 1;
                    }
                }
                None => {
                    exterior_sq += v.value(erank).norm_sq();
                    exterior_voxels += 1;
                }
            }
        }
        if interior_voxels == 0 || den == T::zero() {
            return Err(Error::Domain(
                "no interior voxels survive two erosions; refine the grid".into(),
            ));
        }
        let u_norm = u.l2_norm();
        Ok(BpReport {
            interior_rel_residual: (num / den).sqrt(),
            interior_voxels,
            exterior_l2: (exterior_sq * vol).sqrt(),
            exterior_rel: (exterior_sq * vol).sqrt() / u_norm,
            exterior_voxels,
        })
    }

    /// Principal-value derivative `d_k (T u)_j` for scalar-valued `u`:
    /// the strongly singular quadrature (singular voxel omitted) plus the
    /// configured free term.
    pub fn pv_derivative_apply(
        &self,
        u: &Field<T>,
        j: usize,
        k: usize,
        free_term: FreeTermRule<T>,
    ) -> Result<Field<T>> {
        self.check_field(u)?;
        let n = self.domain.dimension();
        if j < 1 || j > n || k < 1 || k > n {
            return Err(Error::DimensionMismatch(format!(
                "component indices ({j}, {k}) out of 1..={n}"
            )));
        }
        let scale = u.max_abs();
        for v in u.values() {
            if v.projection_q().max_abs_coeff() > T::of(1e-9) * scale.max(T::one()) {
                return Err(Error::Domain(
                    "principal-value derivative expects a scalar-valued field".into(),
                ));
            }
        }
        let free_coeff = match free_term {
            FreeTermRule::None => T::zero(),
            FreeTermRule::DeltaOverN => {
                if j == k {
                    -(T::one() / T::of_usize(n))
                } else {
                    T::zero()
                }
            }
            FreeTermRule::Custom(c) => {
                if j == k {
                    c
                } else {
                    T::zero()
                }
            }
        };
        let grad_table = self.gradient_table(j, k)?;
        let vol = self.domain.voxel_volume();
        let n_cells = self.domain.cells() as isize;
        let sources: Vec<(Vec<isize>, usize)> = {
            let mut v = Vec::with_capacity(self.domain.num_active());
            let mut coord = vec![0usize; n];
            for (rank, &flat) in self.domain.active_indices().iter().enumerate() {
                self.domain.lattice_of(flat, &mut coord);
                v.push((coord.iter().map(|&c| c as isize).collect(), rank));
            }
            v
        };
        let stride = 2 * self.table.extent - 1;
        let values: Vec<Multivector<T>> = self
            .domain
            .active_indices()
            .par_iter()
            .map(|&tflat| {
                let mut tcoord = vec![0usize; n];
                self.domain.lattice_of(tflat, &mut tcoord);
                let mut acc = Complex::new(T::zero(), T::zero());
                for (scoord, srank) in &sources {
                    let mut idx = 0usize;
                    let mut same = true;
                    for kk in (0..n).rev() {
                        let d = tcoord[kk] as isize - scoord[kk];
                        debug_assert!(d.abs() < n_cells);
                        same &= d == 0;
                        idx = idx * stride + (d + self.table.extent as isize - 1) as usize;
                    }
                    if same {
                        continue;
                    }
                    acc += grad_table[idx] * (u.value(*srank).scalar_coeff() * vol);
                }
                if free_coeff != T::zero() {
                    let trank = self.domain.rank_of(tflat).unwrap();
                    acc += u.value(trank).scalar_coeff() * free_coeff;
                }
                let mut m = Multivector::zero(n);
                m.set_coeff(0, acc);
                m
            })
            .collect();
        let mut out = Field::zero(&self.domain);
        for (rank, v) in values.into_iter().enumerate() {
            out.set_value(rank, v);
        }
        Ok(out)
    }

    fn gradient_table(&self, j: usize, k: usize) -> Result<Vec<Complex<T>>> {
        let n = self.domain.dimension();
        let extent = self.table.extent;
        let stride = 2 * extent - 1;
        let len = stride.pow(n as u32);
        (0..len)
            .into_par_iter()
            .map(|idx| {
                let mut rem = idx;
                let mut offset = [0isize; 8];
                for kk in 0..n {
                    offset[kk] = (rem % stride) as isize - (extent as isize - 1);
                    rem /= stride;
                }
                if offset[..n].iter().all(|&d| d == 0) {
                    return Ok(Complex::new(T::zero(), T::zero()));
                }
                let z: Vec<T> = (0..n)
                    .map(|kk| T::of(offset[kk] as f64) * self.domain.spacing()[kk])
                    .collect();
                disturbed_kernel_gradient(&self.params, &z, j, k)
            })
            .collect()
    }

    /// Fits the free-term constant `c` in
    /// `d_k (T u)_j = pv-integral + c delta_jk u` by comparing the
    /// principal-value quadrature against finite differences of the
    /// computed `(T u)_j`, least squares over the twice-eroded interior.
    pub fn fit_free_term(&self, u: &Field<T>, j: usize, k: usize) -> Result<FreeTermFit<T>> {
        let n = self.domain.dimension();
        let tu = self.teodorescu_apply(u)?;
        let tu_j = tu.map(|v| {
            let mut m = Multivector::zero(n);
            m.set_coeff(0, v.coeff(1 << (j - 1)));
            m
        });
        let pv = self.pv_derivative_apply(u, j, k, FreeTermRule::None)?;
        let interior = self.domain.eroded_mask(2);
        let mut coord = vec![0usize; n];
        let h = self.domain.spacing()[k - 1];
        let mut num = T::zero();
        let mut den = T::zero();
        let mut samples = Vec::new();
        for (rank, &flat) in self.domain.active_indices().iter().enumerate() {
            if !interior[flat] {
                continue;
            }
            self.domain.lattice_of(flat, &mut coord);
            let p = neighbor_rank(&self.domain, &coord, k - 1, 1);
            let m = neighbor_rank(&self.domain, &coord, k - 1, -1);
            let (p, m) = match (p, m) {
                (Some(p), Some(m)) => (p, m),
                _ => continue,
            };
            let fd = (tu_j.value(p).scalar_coeff() - tu_j.value(m).scalar_coeff())
                / (h + h);
            let gap = fd - pv.value(rank).scalar_coeff();
            let uval = u.value(rank).scalar_coeff();
            // Real least squares for c in  c * u = gap.
            num += gap.re * uval.re + gap.im * uval.im;
            den += uval.norm_sqr();
            samples.push((gap, uval));
        }
        if den == T::zero() || samples.is_empty() {
            return Err(Error::Domain(
                "free-term fit needs interior voxels with nonzero u".into(),
            ));
        }
        let fitted = num / den;
        let mut res = T::zero();
        let mut scale = T::zero();
        for (gap, uval) in &samples {
            let r = *gap - *uval * fitted;
            res += r.norm_sqr();
            scale += gap.norm_sqr();
        }
        Ok(FreeTermFit {
            fitted,
            reference: if j == k {
                -(T::one() / T::of_usize(n))
            } else {
                T::zero()
            },
            rel_residual: if scale > T::zero() {
                (res / scale).sqrt()
            } else {
                T::zero()
            },
            samples: samples.len(),
        })
    }

    /// Applies `B` to `count` random fields in the subspace matching the
    /// disturbance (real vector fields for `a = 0`, complex paravector
    /// fields otherwise) and reports the worst off-subspace leak of the
    /// output, relative to its largest coefficient.
    pub fn subspace_preservation(&self, count: usize, seed: u64) -> Result<SubspaceReport<T>> {
        let vector_case = self.params.is_undisturbed();
        let mut worst = T::zero();
        for i in 0..count {
            let content = if vector_case {
                FieldContent::RealVector
            } else {
                FieldContent::ComplexParavector
            };
            let u = Field::random(&self.domain, seed.wrapping_add(i as u64), content, T::one());
            let bu = self.singular_b_apply(&u)?;
            let leak = if vector_case {
                bu.vector_leak()
            } else {
                bu.higher_grade_leak()
            };
            let scale = bu.max_abs().max(T::min_positive_value());
            worst = worst.max(leak / scale);
        }
        Ok(SubspaceReport {
            case: if vector_case {
                "real vector, a = 0"
            } else {
                "complex paravector"
            },
            fields_tested: count,
            max_rel_leak: worst,
        })
    }

    /// Checks subspace preservation for one specific field: applies `B`
    /// and reports the off-subspace leak of the output, relative to its
    /// largest coefficient. Fields with grade-2 content are skipped, since
    /// the operator makes no preservation statement about them.
    pub fn subspace_preservation_check(&self, u: &Field<T>) -> Result<PreservationCheck<T>> {
        let tol = T::of(1e-12) * u.max_abs().max(T::one());
        if u.higher_grade_leak() > tol {
            return Ok(PreservationCheck {
                status: "skipped",
                case: "grade-2 content: no preservation statement",
                rel_leak: None,
            });
        }
        let bu = self.singular_b_apply(u)?;
        let scale = bu.max_abs().max(T::min_positive_value());
        // The real vector subspace is only invariant for the static kernel;
        // paravector fields are preserved for every paravector disturbance.
        if self.params.is_undisturbed() && u.vector_leak() <= tol {
            Ok(PreservationCheck {
                status: "checked",
                case: "real vector, a = 0",
                rel_leak: Some(bu.vector_leak() / scale),
            })
        } else {
            Ok(PreservationCheck {
                status: "checked",
                case: "complex paravector",
                rel_leak: Some(bu.higher_grade_leak() / scale),
            })
        }
    }

    /// Dense matrix of `B` on the invariant subspace (assembled by applying
    /// the operator to basis fields), cached after the first call.
    pub fn dense_operator(&self) -> Result<Arc<DenseOperator<T>>> {
        if let Some(d) = self.dense.get() {
            return Ok(d.clone());
        }
        let built = Arc::new(DenseOperator::assemble(self)?);
        Ok(self.dense.get_or_init(|| built).clone())
    }

    /// Largest singular value of the dense operator by power iteration.
    pub fn operator_norm_estimate(
        &self,
        iterations: usize,
        seed: u64,
    ) -> Result<PowerIteration<T>> {
        let dense = self.dense_operator()?;
        power_iteration_sigma_max(&dense.matrix, iterations, seed)
    }

    /// Smallest eigenvalue of the symmetrized dense operator.
    pub fn positivity_min_eigenvalue(&self) -> Result<T> {
        let dense = self.dense_operator()?;
        let sym = dense.matrix.symmetrized()?;
        let ev = symmetric_eigenvalues(&sym)?;
        Ok(ev[0])
    }

    /// Smallest Rayleigh quotient `(B u, u) / (u, u)` over random fields in
    /// the invariant subspace.
    pub fn sampled_min_rayleigh(&self, samples: usize, seed: u64) -> Result<T> {
        let content = if self.params.is_undisturbed() {
            FieldContent::RealVector
        } else {
            FieldContent::ComplexParavector
        };
        let mut min = T::infinity();
        for i in 0..samples {
            let u = Field::random(&self.domain, seed.wrapping_add(i as u64), content, T::one());
            let bu = self.singular_b_apply(&u)?;
            let q = bu.l2_inner(&u)? / u.l2_inner(&u)?;
            min = min.min(q);
        }
        Ok(min)
    }
}

/// Borel-Pompeiu diagnostics: `D_{ia} T_{ia} u` against `u` inside and
/// against zero on the exterior collar.
#[derive(Clone, Debug)]
pub struct BpReport<T> {
    /// `|DTu - u| / |u|` in `L^2` over voxels two erosions into the mask.
    pub interior_rel_residual: T,
    pub interior_voxels: usize,
    /// `L^2` norm of `DTu` over extended voxels outside the original box
    /// or mask.
    pub exterior_l2: T,
    /// Same, relative to `|u|`.
    pub exterior_rel: T,
    pub exterior_voxels: usize,
}

/// Free-term fit output.
#[derive(Clone, Debug)]
pub struct FreeTermFit<T> {
    /// Least-squares constant `c`.
    pub fitted: T,
    /// `-1/n` for `j = k`, `0` otherwise.
    pub reference: T,
    /// Residual of the fit relative to the gap being fitted.
    pub rel_residual: T,
    pub samples: usize,
}

/// Off-subspace leak report.
#[derive(Clone, Debug)]
pub struct SubspaceReport<T> {
    pub case: &'static str,
    pub fields_tested: usize,
    pub max_rel_leak: T,
}

/// Per-field preservation outcome.
#[derive(Clone, Debug)]
pub struct PreservationCheck<T> {
    /// "checked" or "skipped".
    pub status: &'static str,
    pub case: &'static str,
    /// Off-subspace leak relative to the output magnitude; absent when
    /// the check was skipped.
    pub rel_leak: Option<T>,
}

/// Which invariant subspace the dense matrix acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DenseSubspace {
    /// Real grade-1 coefficients (`a = 0`), `n` slots per voxel.
    RealVector,
    /// Real and imaginary parts of grades 0 and 1, `2(n+1)` slots per voxel.
    ComplexParavector,
}

/// Dense realification of `B` restricted to its invariant subspace.
pub struct DenseOperator<T: Scalar> {
    pub subspace: DenseSubspace,
    pub matrix: DenseMatrix<T>,
    slots_per_voxel: usize,
    n: usize,
}

impl<T: Scalar> DenseOperator<T> {
    fn assemble(ctx: &OperatorContext<T>) -> Result<DenseOperator<T>> {
        let n = ctx.domain.dimension();
        let voxels = ctx.domain.num_active();
        let (subspace, slots) = if ctx.params.is_undisturbed() {
            (DenseSubspace::RealVector, n)
        } else {
            (DenseSubspace::ComplexParavector, 2 * (n + 1))
        };
        let dim = voxels * slots;
        let columns: Vec<Result<Vec<T>>> = (0..dim)
            .into_par_iter()
            .map(|col| {
                let mut u = Field::zero(&ctx.domain);
                set_slot(&mut u, subspace, n, col / slots, col % slots, T::one());
                let bu = ctx.singular_b_apply(&u)?;
                let mut out = vec![T::zero(); dim];
                for rank in 0..voxels {
                    read_slots(
                        bu.value(rank),
                        subspace,
                        n,
                        &mut out[rank * slots..(rank + 1) * slots],
                    );
                }
                Ok(out)
            })
            .collect();
        let mut matrix = DenseMatrix::zeros(dim, dim);
        for (col, data) in columns.into_iter().enumerate() {
            matrix.set_column(col, &data?);
        }
        Ok(DenseOperator {
            subspace,
            matrix,
            slots_per_voxel: slots,
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Flattens a field into subspace coordinates.
    pub fn field_to_vec(&self, u: &Field<T>) -> Vec<T> {
        let voxels = u.values().len();
        let mut out = vec![T::zero(); voxels * self.slots_per_voxel];
        for rank in 0..voxels {
            read_slots(
                u.value(rank),
                self.subspace,
                self.n,
                &mut out[rank * self.slots_per_voxel..(rank + 1) * self.slots_per_voxel],
            );
        }
        out
    }

    /// Rebuilds a field from subspace coordinates.
    pub fn vec_to_field(&self, v: &[T], domain: &Arc<GridDomain<T>>) -> Field<T> {
        let mut u = Field::zero(domain);
        for (i, &x) in v.iter().enumerate() {
            set_slot(
                &mut u,
                self.subspace,
                self.n,
                i / self.slots_per_voxel,
                i % self.slots_per_voxel,
                x,
            );
        }
        u
    }
}

fn set_slot<T: Scalar>(
    u: &mut Field<T>,
    subspace: DenseSubspace,
    n: usize,
    rank: usize,
    slot: usize,
    x: T,
) {
    let v = &mut u.values_mut()[rank];
    match subspace {
        DenseSubspace::RealVector => {
            let mut c = v.coeff(1 << slot);
            c.re = x;
            v.set_coeff(1 << slot, c);
        }
        DenseSubspace::ComplexParavector => {
            let comp = slot % (n + 1);
            let mask = if comp == 0 { 0 } else { 1 << (comp - 1) };
            let mut c = v.coeff(mask);
            if slot < n + 1 {
                c.re = x;
            } else {
                c.im = x;
            }
            v.set_coeff(mask, c);
        }
    }
}

fn read_slots<T: Scalar>(
    v: &Multivector<T>,
    subspace: DenseSubspace,
    n: usize,
    out: &mut [T],
) {
    match subspace {
        DenseSubspace::RealVector => {
            for j in 0..n {
                out[j] = v.coeff(1 << j).re;
            }
        }
        DenseSubspace::ComplexParavector => {
            for comp in 0..=n {
                let mask = if comp == 0 { 0 } else { 1 << (comp - 1) };
                out[comp] = v.coeff(mask).re;
                out[n + 1 + comp] = v.coeff(mask).im;
            }
        }
    }
}
