//! Fundamental solutions: the Cauchy kernel of the Dirac operator, the
//! Yukawa kernel of `-Laplace + a0^2`, and the kernel of the disturbed
//! Dirac operator `D + i a` for a real paravector `a`.
//!
//! Conventions, for `x` in `R^n`, `r = |x|`, `t = a0 r`:
//!
//! * `e(x) = -(1/sigma_n) x / r^n`, `sigma_n` the unit-sphere area;
//! * `K_{a0}(x) = (2 pi)^{-n/2} (a0/r)^{n/2-1} K_{n/2-1}(t)`;
//! * `e_{ia}(x) = -(2 pi)^{-n/2} exp(-i<a, x>) *
//!    ( sum_j x_j e_j r^{-n} t^{n/2} K_{n/2}(t)
//!      + i a0 r^{2-n} t^{n/2-1} K_{n/2-1}(t) )`,
//!
//! where `<a, x> = sum_j a_j x_j` uses only the vector part of `a`.
//! As `a -> 0` the disturbed kernel degenerates to `e(x)`, and
//! `e_{ia}(x) - e(x)` is weaker than the `r^{1-n}` singularity of `e`.

use num_complex::Complex;

use crate::clifford::{Multivector, Paravector};
use crate::special::{bessel_k_with_next, gamma, BesselOrder};
use crate::{Error, Result, Scalar};

/// Points closer to the origin than this are rejected as singular.
pub const MIN_RADIUS: f64 = 1e-12;

/// Validated kernel parameters: space dimension `n` and disturbance
/// paravector `a` with `a0 >= 0`.
#[derive(Clone, Debug)]
pub struct KernelParams<T: Scalar> {
    n: usize,
    a: Paravector<T>,
}

impl<T: Scalar> KernelParams<T> {
    pub fn new(n: usize, a: Paravector<T>) -> Result<Self> {
        if !(2..=4).contains(&n) {
            return Err(Error::UnsupportedDimension {
                got: n,
                expected: "kernel dimension 2, 3 or 4",
            });
        }
        if a.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "disturbance paravector has {} generators, kernel dimension is {n}",
                a.dim()
            )));
        }
        if !a.a0.is_finite() || a.a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite disturbance".into()));
        }
        if a.a0 < T::zero() {
            return Err(Error::Domain(format!(
                "scalar part of the disturbance must be >= 0, got {}",
                a.a0
            )));
        }
        Ok(KernelParams { n, a })
    }

    /// Undisturbed parameters (`a = 0`) in dimension `n`.
    pub fn undisturbed(n: usize) -> Result<Self> {
        Self::new(n, Paravector::zero(n)?)
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn disturbance(&self) -> &Paravector<T> {
        &self.a
    }

    pub fn a0(&self) -> T {
        self.a.a0
    }

    pub fn is_undisturbed(&self) -> bool {
        self.a.is_zero()
    }

    fn check_point(&self, x: &[T]) -> Result<T> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, kernel dimension is {}",
                x.len(),
                self.n
            )));
        }
        let mut r2 = T::zero();
        for &v in x {
            r2 += v * v;
        }
        let r = r2.sqrt();
        if !r.is_finite() {
            return Err(Error::Domain("non-finite evaluation point".into()));
        }
        if r < T::of(MIN_RADIUS) {
            return Err(Error::SingularPoint(MIN_RADIUS));
        }
        Ok(r)
    }

    /// `exp(-i <a, x>)` with `<a, x> = sum_j a_j x_j`.
    fn phase(&self, x: &[T]) -> Complex<T> {
        let mut dot = T::zero();
        for (aj, xj) in self.a.a.iter().zip(x.iter()) {
            dot += *aj * *xj;
        }
        Complex::new(dot.cos(), -(dot.sin()))
    }
}

/// Surface area of the unit sphere in `R^n`: `sigma_n = 2 pi^{n/2} / Gamma(n/2)`.
pub fn sphere_area<T: Scalar>(n: usize) -> Result<T> {
    if n == 0 || n > 8 {
        return Err(Error::UnsupportedDimension {
            got: n,
            expected: "1..=8",
        });
    }
    let half_n = T::of_usize(n) * T::of(0.5);
    Ok(T::of(2.0) * T::PI().powf(half_n) / gamma(half_n)?)
}

/// Cauchy kernel `e(x) = -(1/sigma_n) x / |x|^n`, a real vector field.
pub fn cauchy_kernel<T: Scalar>(x: &[T]) -> Result<Multivector<T>> {
    let n = x.len();
    if !(2..=4).contains(&n) {
        return Err(Error::UnsupportedDimension {
            got: n,
            expected: "kernel dimension 2, 3 or 4",
        });
    }
    let params = KernelParams::undisturbed(n)?;
    let r = params.check_point(x)?;
    let sigma: T = sphere_area(n)?;
    let scale = -(T::one() / (sigma * r.powi(n as i32)));
    let mut out = Multivector::zero(n);
    for (j, &xj) in x.iter().enumerate() {
        out.set_coeff(1 << j, Complex::new(scale * xj, T::zero()));
    }
    Ok(out)
}

/// Yukawa kernel, the fundamental solution of `-Laplace + a0^2` (for
/// `a0 = 0` and `n >= 3`, the Newton kernel it degenerates to).
pub fn yukawa_kernel<T: Scalar>(params: &KernelParams<T>, x: &[T]) -> Result<T> {
    let r = params.check_point(x)?;
    let n = params.n;
    let a0 = params.a0();
    if a0 > T::zero() {
        let order = BesselOrder::new(T::of_usize(n) * T::of(0.5) - T::one())?;
        let (k_low, _) = bessel_k_with_next(order, a0 * r)?;
        let two_pi = T::of(2.0) * T::PI();
        Ok(two_pi.powf(-(T::of_usize(n) * T::of(0.5)))
            * (a0 / r).powf(T::of_usize(n) * T::of(0.5) - T::one())
            * k_low)
    } else if n >= 3 {
        let sigma: T = sphere_area(n)?;
        Ok(T::one() / (T::of_usize(n - 2) * sigma * r.powi(n as i32 - 2)))
    } else {
        Err(Error::Domain(
            "Yukawa kernel needs a0 > 0 in dimension 2".into(),
        ))
    }
}

/// Radial profile multiplying the vector part of the disturbed kernel:
/// `(2 pi)^{-n/2} t^{n/2} K_{n/2}(t)` at `t = a0 r`. Tends to `1/sigma_n`
/// as `t -> 0`, which is the small-argument consistency check with the
/// Cauchy kernel.
pub fn small_argument_constant<T: Scalar>(params: &KernelParams<T>, r: T) -> Result<T> {
    let a0 = params.a0();
    if a0 <= T::zero() || r <= T::zero() {
        return Err(Error::Domain(
            "small-argument profile needs a0 > 0 and r > 0".into(),
        ));
    }
    let n = params.n;
    let half_n = T::of_usize(n) * T::of(0.5);
    let t = a0 * r;
    let order = BesselOrder::new(half_n - T::one())?;
    let (_, k_high) = bessel_k_with_next(order, t)?;
    let two_pi = T::of(2.0) * T::PI();
    Ok(two_pi.powf(-half_n) * t.powf(half_n) * k_high)
}

/// Fundamental solution `e_{ia}(x)` of the disturbed Dirac operator
/// `D + i a`. Complex paravector valued: grade 0 plus grade 1.
pub fn disturbed_kernel<T: Scalar>(params: &KernelParams<T>, x: &[T]) -> Result<Multivector<T>> {
    let r = params.check_point(x)?;
    let n = params.n;
    let a0 = params.a0();
    let phase = params.phase(x);
    let mut out = Multivector::zero(n);
    if a0 > T::zero() {
        let half_n = T::of_usize(n) * T::of(0.5);
        let t = a0 * r;
        let order = BesselOrder::new(half_n - T::one())?;
        let (k_low, k_high) = bessel_k_with_next(order, t)?;
        let two_pi = T::of(2.0) * T::PI();
        let front = -(two_pi.powf(-half_n));
        let vec_profile = front * t.powf(half_n) * k_high / r.powi(n as i32);
        let scal_profile = front * a0 * t.powf(half_n - T::one()) * k_low
            / r.powi(n as i32 - 2);
        out.set_coeff(0, phase * Complex::new(T::zero(), scal_profile));
        for (j, &xj) in x.iter().enumerate() {
            out.set_coeff(1 << j, phase * (vec_profile * xj));
        }
    } else {
        // a0 = 0 degenerates to the phase times the Cauchy kernel.
        let e = cauchy_kernel(x)?;
        for (mask, c) in e.iter() {
            out.set_coeff(mask, phase * c);
        }
    }
    if out.coeffs().iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Overflow("disturbed kernel"))
    }
}

/// Difference `e_{ia}(x) - e(x)`, the part of the disturbed kernel with a
/// weaker-than-`r^{1-n}` singularity.
pub fn kernel_difference<T: Scalar>(params: &KernelParams<T>, x: &[T]) -> Result<Multivector<T>> {
    let disturbed = disturbed_kernel(params, x)?;
    let cauchy = cauchy_kernel(x)?;
    Ok(&disturbed - &cauchy)
}

/// Analytic partial derivative `d/dx_k` of the grade-1 component `j` of the
/// disturbed kernel (`j, k` are 1-based). This is the strongly singular
/// integrand of the principal-value derivative of the Teodorescu transform.
///
/// With `g_j(x) = C exp(-i<a, x>) x_j W(r)`, `C = -(2 pi)^{-n/2}`:
/// `d_k g_j = C exp(-i<a, x>) ( -i a_k x_j W + delta_jk W + x_j x_k W'(r)/r )`,
/// where `W(r) = a0^n (a0 r)^{-n/2} K_{n/2}(a0 r)` and
/// `W'(r) = -a0^{n+1} (a0 r)^{-n/2} K_{n/2+1}(a0 r)`.
pub fn disturbed_kernel_gradient<T: Scalar>(
    params: &KernelParams<T>,
    x: &[T],
    j: usize,
    k: usize,
) -> Result<Complex<T>> {
    let n = params.n;
    if j < 1 || j > n || k < 1 || k > n {
        return Err(Error::DimensionMismatch(format!(
            "component indices ({j}, {k}) out of 1..={n}"
        )));
    }
    let r = params.check_point(x)?;
    let a0 = params.a0();
    let half_n = T::of_usize(n) * T::of(0.5);
    let two_pi = T::of(2.0) * T::PI();
    let front = -(two_pi.powf(-half_n));
    let (w, w_prime) = if a0 > T::zero() {
        let t = a0 * r;
        let order = BesselOrder::new(half_n)?;
        let (k_mid, k_up) = bessel_k_with_next(order, t)?;
        let base = a0.powi(n as i32) * t.powf(-half_n);
        (base * k_mid, -(base * a0) * k_up)
    } else {
        // Limits: W -> 2^{n/2 - 1} Gamma(n/2) / r^n, W'/W -> -n/r.
        let w = T::of(2.0).powf(half_n - T::one()) * gamma(half_n)? / r.powi(n as i32);
        (w, -(T::of_usize(n)) * w / r)
    };
    let xj = x[j - 1];
    let xk = x[k - 1];
    let ak = params.a.a[k - 1];
    let delta = if j == k { T::one() } else { T::zero() };
    let real_part = delta * w + xj * xk * w_prime / r;
    let value = params.phase(x)
        * Complex::new(front * real_part, front * (-(ak * xj) * w));
    if value.re.is_finite() && value.im.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow("disturbed kernel gradient"))
    }
}
