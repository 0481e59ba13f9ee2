//! Dense multivectors over the complexified Clifford algebra `Cl_{0,n}(C)`.
//!
//! Generators satisfy `e_j e_k + e_k e_j = -2 delta_jk`, so every `e_j`
//! squares to `-1`. A multivector is stored as `2^n` complex coefficients
//! indexed by blade bitmask: bit `j` set means the factor `e_{j+1}` is
//! present, and masks are read in increasing index order (`0b011 = e1 e2`).

use std::fmt;

use num_complex::Complex;
use smallvec::{smallvec, SmallVec};

use crate::{Error, Result, Scalar};

/// Largest supported number of generators.
pub const MAX_DIM: usize = 8;

/// Sign of the blade product `e_A e_B` in `Cl_{0,n}`.
///
/// Product of the reordering sign (count of transpositions moving every
/// generator of `B` past the higher-indexed generators of `A`) and the metric
/// sign `(-1)^|A & B|` from `e_j e_j = -1`.
pub fn blade_product_sign(a: u16, b: u16) -> i32 {
    let mut swaps = 0u32;
    let mut rest = a >> 1;
    while rest != 0 {
        swaps += (rest & b).count_ones();
        rest >>= 1;
    }
    if (swaps + (a & b).count_ones()) % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Grade (number of generators) of a blade mask.
#[inline]
pub fn blade_grade(mask: u16) -> u32 {
    mask.count_ones()
}

/// Sign the main involution ("bar") puts on a blade of grade `k`:
/// `(-1)^{k(k+1)/2}`, i.e. the pattern `+ - - + + - - +` over `k = 0..`.
#[inline]
pub fn bar_sign(mask: u16) -> i32 {
    let k = mask.count_ones();
    if (k * (k + 1) / 2) % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Multivector with complex coefficients, one per blade mask.
///
/// `dim <= 8`, so at most 256 coefficients; up to `dim = 4` lives inline.
#[derive(Clone, PartialEq)]
pub struct Multivector<T: Scalar> {
    dim: u8,
    coeffs: SmallVec<[Complex<T>; 16]>,
}

impl<T: Scalar> Multivector<T> {
    fn check_dim(dim: usize) -> Result<()> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension {
                got: dim,
                expected: "1..=8 generators",
            });
        }
        Ok(())
    }

    /// Zero element of `Cl_{0,dim}(C)`.
    pub fn zero(dim: usize) -> Self {
        Self::check_dim(dim).expect("algebra dimension out of range");
        Multivector {
            dim: dim as u8,
            coeffs: smallvec![Complex::new(T::zero(), T::zero()); 1 << dim],
        }
    }

    /// Complex scalar embedded as a grade-0 element.
    pub fn scalar(dim: usize, value: Complex<T>) -> Self {
        let mut m = Self::zero(dim);
        m.coeffs[0] = value;
        m
    }

    /// Real scalar embedded as a grade-0 element.
    pub fn real_scalar(dim: usize, value: T) -> Self {
        Self::scalar(dim, Complex::new(value, T::zero()))
    }

    /// Basis vector `e_j`, `1 <= j <= dim`.
    pub fn basis_vector(dim: usize, j: usize) -> Self {
        assert!(j >= 1 && j <= dim, "basis index {j} out of 1..={dim}");
        Self::basis_blade(dim, 1 << (j - 1))
    }

    /// Basis blade for a bitmask (bit `j` set means factor `e_{j+1}`).
    pub fn basis_blade(dim: usize, mask: u16) -> Self {
        let mut m = Self::zero(dim);
        assert!(
            (mask as usize) < (1usize << dim),
            "blade mask {mask:#b} out of range for dim {dim}"
        );
        m.coeffs[mask as usize] = Complex::new(T::one(), T::zero());
        m
    }

    /// Builds a multivector from all `2^dim` coefficients in mask order.
    pub fn from_coeffs(dim: usize, coeffs: &[Complex<T>]) -> Result<Self> {
        Self::check_dim(dim)?;
        if coeffs.len() != 1 << dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients for dim {}, got {}",
                1 << dim,
                dim,
                coeffs.len()
            )));
        }
        Ok(Multivector {
            dim: dim as u8,
            coeffs: SmallVec::from_slice(coeffs),
        })
    }

    /// Number of generators.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    /// Number of stored coefficients (`2^dim`).
    #[inline]
    pub fn num_coeffs(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient of the blade with the given mask.
    #[inline]
    pub fn coeff(&self, mask: u16) -> Complex<T> {
        self.coeffs[mask as usize]
    }

    /// Sets the coefficient of one blade.
    pub fn set_coeff(&mut self, mask: u16, value: Complex<T>) {
        self.coeffs[mask as usize] = value;
    }

    /// Iterates `(mask, coefficient)` pairs in mask order.
    pub fn iter(&self) -> impl Iterator<Item = (u16, Complex<T>)> + '_ {
        self.coeffs.iter().enumerate().map(|(i, c)| (i as u16, *c))
    }

    /// Raw coefficient slice in mask order.
    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    fn assert_same_dim(&self, other: &Self) {
        assert_eq!(
            self.dim, other.dim,
            "multivector dims differ: {} vs {}",
            self.dim, other.dim
        );
    }

    /// Geometric product, checked.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "geometric product needs equal dims, got {} and {}",
                self.dim, other.dim
            )));
        }
        let mut out = Self::zero(self.dim());
        out.add_scaled_product(self, other, T::one());
        Ok(out)
    }

    /// `self += w * (lhs * rhs)`. The workhorse for quadrature loops: no
    /// allocation beyond `self`.
    pub fn add_scaled_product(&mut self, lhs: &Self, rhs: &Self, w: T) {
        debug_assert_eq!(self.dim, lhs.dim);
        debug_assert_eq!(self.dim, rhs.dim);
        let zero = Complex::new(T::zero(), T::zero());
        for (a_mask, &a) in lhs.coeffs.iter().enumerate() {
            if a == zero {
                continue;
            }
            let aw = a * w;
            for (b_mask, &b) in rhs.coeffs.iter().enumerate() {
                if b == zero {
                    continue;
                }
                let sign = blade_product_sign(a_mask as u16, b_mask as u16);
                let term = aw * b;
                let slot = &mut self.coeffs[a_mask ^ b_mask];
                if sign > 0 {
                    *slot += term;
                } else {
                    *slot -= term;
                }
            }
        }
    }

    /// `self += w * other`.
    pub fn add_scaled(&mut self, other: &Self, w: T) {
        debug_assert_eq!(self.dim, other.dim);
        for (dst, src) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *dst += src * w;
        }
    }

    /// `self += w * other` with a complex weight.
    pub fn add_scaled_complex(&mut self, other: &Self, w: Complex<T>) {
        debug_assert_eq!(self.dim, other.dim);
        for (dst, src) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *dst += *src * w;
        }
    }

    /// Multivector scaled by a real factor.
    pub fn scaled(&self, w: T) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c = *c * w;
        }
        out
    }

    /// Multivector scaled by a complex factor.
    pub fn scaled_complex(&self, w: Complex<T>) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c = *c * w;
        }
        out
    }

    /// Left product by the basis vector `e_j` without allocation churn.
    pub fn mul_basis_left(&self, j: usize) -> Self {
        assert!(j >= 1 && j <= self.dim(), "basis index out of range");
        let jm = 1u16 << (j - 1);
        let mut out = Self::zero(self.dim());
        for (mask, &c) in self.coeffs.iter().enumerate() {
            let sign = blade_product_sign(jm, mask as u16);
            let target = (jm ^ mask as u16) as usize;
            out.coeffs[target] = if sign > 0 { c } else { -c };
        }
        out
    }

    /// Main involution: sign `(-1)^{k(k+1)/2}` per grade `k`, coefficients
    /// untouched. For a paravector `a`, `a.bar() * a` is the real scalar
    /// `|a|^2`.
    pub fn bar(&self) -> Self {
        let mut out = self.clone();
        for (mask, c) in out.coeffs.iter_mut().enumerate() {
            if bar_sign(mask as u16) < 0 {
                *c = -*c;
            }
        }
        out
    }

    /// Conjugate anti-automorphism: complex conjugation composed with the
    /// blade signs of [`Multivector::bar`]. Satisfies
    /// `(u v).tilde() = v.tilde() * u.tilde()`.
    pub fn tilde(&self) -> Self {
        let mut out = self.clone();
        for (mask, c) in out.coeffs.iter_mut().enumerate() {
            let conj = c.conj();
            *c = if bar_sign(mask as u16) < 0 { -conj } else { conj };
        }
        out
    }

    /// Grade-`k` part.
    pub fn grade_part(&self, k: u32) -> Self {
        let mut out = Self::zero(self.dim());
        for (mask, &c) in self.coeffs.iter().enumerate() {
            if blade_grade(mask as u16) == k {
                out.coeffs[mask] = c;
            }
        }
        out
    }

    /// Scalar (grade-0) coefficient.
    #[inline]
    pub fn scalar_coeff(&self) -> Complex<T> {
        self.coeffs[0]
    }

    /// Projection `P`: keeps only the grade-0 part.
    pub fn projection_p(&self) -> Self {
        let mut out = Self::zero(self.dim());
        out.coeffs[0] = self.coeffs[0];
        out
    }

    /// Projection `Q = I - P`: kills the grade-0 part.
    pub fn projection_q(&self) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = Complex::new(T::zero(), T::zero());
        out
    }

    /// Componentwise real part (idempotent).
    pub fn real_part(&self) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c = Complex::new(c.re, T::zero());
        }
        out
    }

    /// Componentwise imaginary part, kept as real coefficients.
    pub fn imag_part(&self) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c = Complex::new(c.im, T::zero());
        }
        out
    }

    /// Real scalar product `[u, v] = Re (u.tilde() * v)_0`. Because every
    /// blade satisfies `e_I.bar() * e_I = 1`, this collapses to the real dot
    /// product of coefficient vectors.
    pub fn scalar_product(&self, other: &Self) -> Result<T> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "scalar product needs equal dims, got {} and {}",
                self.dim, other.dim
            )));
        }
        let mut acc = T::zero();
        for (a, b) in self.coeffs.iter().zip(other.coeffs.iter()) {
            acc += a.re * b.re + a.im * b.im;
        }
        Ok(acc)
    }

    /// `[u, u] = sum |u_I|^2`.
    pub fn norm_sq(&self) -> T {
        let mut acc = T::zero();
        for c in self.coeffs.iter() {
            acc += c.norm_sqr();
        }
        acc
    }

    /// Euclidean coefficient norm `[u, u]^{1/2}`.
    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// Largest coefficient magnitude.
    pub fn max_abs_coeff(&self) -> T {
        let mut m = T::zero();
        for c in self.coeffs.iter() {
            m = m.max(c.re.abs()).max(c.im.abs());
        }
        m
    }

    /// Largest magnitude on blades of grade >= 2: content outside the
    /// complex paravector subspace.
    pub fn higher_grade_leak(&self) -> T {
        let mut m = T::zero();
        for (mask, c) in self.coeffs.iter().enumerate() {
            if blade_grade(mask as u16) >= 2 {
                m = m.max(c.re.abs()).max(c.im.abs());
            }
        }
        m
    }

    /// Largest magnitude outside the real paravector subspace
    /// (grade >= 2 coefficients plus imaginary parts of grades 0 and 1).
    pub fn paravector_leak(&self) -> T {
        let mut m = T::zero();
        for (mask, c) in self.coeffs.iter().enumerate() {
            if blade_grade(mask as u16) <= 1 {
                m = m.max(c.im.abs());
            } else {
                m = m.max(c.re.abs()).max(c.im.abs());
            }
        }
        m
    }

    /// Largest magnitude outside the real grade-1 subspace.
    pub fn vector_leak(&self) -> T {
        let mut m = T::zero();
        for (mask, c) in self.coeffs.iter().enumerate() {
            if blade_grade(mask as u16) == 1 {
                m = m.max(c.im.abs());
            } else {
                m = m.max(c.re.abs()).max(c.im.abs());
            }
        }
        m
    }

    /// True when every coefficient is exactly zero.
    pub fn is_zero(&self) -> bool {
        let zero = Complex::new(T::zero(), T::zero());
        self.coeffs.iter().all(|c| *c == zero)
    }
}

impl<T: Scalar> fmt::Debug for Multivector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Multivector(dim={}; {})", self.dim, self)
    }
}

impl<T: Scalar> fmt::Display for Multivector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut wrote = false;
        for (mask, c) in self.iter() {
            if c.re == T::zero() && c.im == T::zero() {
                continue;
            }
            if wrote {
                write!(f, " + ")?;
            }
            write!(f, "({}{}{}i)", c.re, if c.im < T::zero() { "" } else { "+" }, c.im)?;
            if mask != 0 {
                write!(f, "e")?;
                for j in 0..MAX_DIM {
                    if mask & (1 << j) != 0 {
                        write!(f, "{}", j + 1)?;
                    }
                }
            }
            wrote = true;
        }
        if !wrote {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl<T: Scalar> std::ops::Add for &Multivector<T> {
    type Output = Multivector<T>;
    fn add(self, rhs: Self) -> Multivector<T> {
        self.assert_same_dim(rhs);
        let mut out = self.clone();
        for (dst, src) in out.coeffs.iter_mut().zip(rhs.coeffs.iter()) {
            *dst += *src;
        }
        out
    }
}

impl<T: Scalar> std::ops::Sub for &Multivector<T> {
    type Output = Multivector<T>;
    fn sub(self, rhs: Self) -> Multivector<T> {
        self.assert_same_dim(rhs);
        let mut out = self.clone();
        for (dst, src) in out.coeffs.iter_mut().zip(rhs.coeffs.iter()) {
            *dst -= *src;
        }
        out
    }
}

impl<T: Scalar> std::ops::Neg for &Multivector<T> {
    type Output = Multivector<T>;
    fn neg(self) -> Multivector<T> {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c = -*c;
        }
        out
    }
}

impl<T: Scalar> std::ops::Mul for &Multivector<T> {
    type Output = Multivector<T>;
    fn mul(self, rhs: Self) -> Multivector<T> {
        self.try_mul(rhs).expect("geometric product dim mismatch")
    }
}

/// Real paravector `a = a0 + a1 e_1 + ... + an e_n`.
///
/// Satisfies `a.bar() * a = |a|^2` with `|a|^2 = a0^2 + sum a_j^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Paravector<T: Scalar> {
    /// Scalar part.
    pub a0: T,
    /// Vector part, one entry per generator.
    pub a: Vec<T>,
}

impl<T: Scalar> Paravector<T> {
    /// Builds a paravector with `a.len()` generators.
    pub fn new(a0: T, a: Vec<T>) -> Result<Self> {
        Multivector::<T>::check_dim(a.len())?;
        Ok(Paravector { a0, a })
    }

    /// Zero paravector in `n` generators.
    pub fn zero(n: usize) -> Result<Self> {
        Self::new(T::zero(), vec![T::zero(); n])
    }

    /// Number of generators.
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `a0^2 + sum a_j^2`.
    pub fn norm_sq(&self) -> T {
        let mut s = self.a0 * self.a0;
        for &x in &self.a {
            s += x * x;
        }
        s
    }

    /// Euclidean norm.
    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// True when all entries are exactly zero.
    pub fn is_zero(&self) -> bool {
        self.a0 == T::zero() && self.a.iter().all(|&x| x == T::zero())
    }

    /// Embeds into the algebra as `a0 + sum a_j e_j`.
    pub fn embed(&self) -> Multivector<T> {
        let mut m = Multivector::zero(self.dim());
        m.set_coeff(0, Complex::new(self.a0, T::zero()));
        for (j, &x) in self.a.iter().enumerate() {
            m.set_coeff(1 << j, Complex::new(x, T::zero()));
        }
        m
    }

    /// Embeds `i * a` (purely imaginary coefficients), the multiplier in the
    /// disturbed Dirac operator `D + i a`.
    pub fn embed_times_i(&self) -> Multivector<T> {
        let mut m = Multivector::zero(self.dim());
        m.set_coeff(0, Complex::new(T::zero(), self.a0));
        for (j, &x) in self.a.iter().enumerate() {
            m.set_coeff(1 << j, Complex::new(T::zero(), x));
        }
        m
    }

    /// Extracts a paravector from a multivector. Anything of grade >= 2, or
    /// any imaginary content, larger than `tol` in magnitude is an error.
    pub fn try_from_multivector(m: &Multivector<T>, tol: T) -> Result<Self> {
        let leak = m.paravector_leak();
        if leak > tol {
            return Err(Error::NotParavector(format!(
                "off-subspace magnitude {leak} exceeds tolerance {tol} in {m}"
            )));
        }
        let a0 = m.coeff(0).re;
        let a = (0..m.dim()).map(|j| m.coeff(1 << j).re).collect();
        Ok(Paravector { a0, a })
    }
}
