//! Voxel grids over axis-aligned boxes and multivector-valued fields.
//!
//! A [`GridDomain`] is an `N^n` lattice of congruent voxels over a box, with
//! a boolean mask selecting the active voxels (the integration domain `G`).
//! A [`Field`] stores one multivector per active voxel; quadrature is the
//! midpoint rule, so the `L^2` inner product is a mask-restricted sum times
//! the voxel volume.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clifford::{blade_grade, Multivector};
use crate::{Error, Result, Scalar};

/// How the active voxels are selected.
#[derive(Clone, Debug)]
pub enum ShapeSpec {
    /// Every voxel of the box.
    FullBox,
    /// Voxel centers strictly inside the inscribed ball (center of the box,
    /// radius the smallest half-extent).
    Ball,
    /// Explicit mask in flat order (axis 0 fastest).
    Mask(Vec<bool>),
}

/// Axis-aligned voxel grid with an active-voxel mask.
#[derive(Clone, Debug)]
pub struct GridDomain<T: Scalar> {
    n: usize,
    lo: Vec<T>,
    hi: Vec<T>,
    cells: usize,
    h: Vec<T>,
    mask: Vec<bool>,
    active: Vec<usize>,
    rank_of_flat: Vec<u32>,
}

const NO_RANK: u32 = u32::MAX;

impl<T: Scalar> PartialEq for GridDomain<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.cells == other.cells
            && self.lo == other.lo
            && self.hi == other.hi
            && self.mask == other.mask
    }
}

impl<T: Scalar> GridDomain<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>, cells: usize, shape: ShapeSpec) -> Result<Self> {
        let n = lo.len();
        if n == 0 || n > 8 {
            return Err(Error::UnsupportedDimension {
                got: n,
                expected: "grid dimension 1..=8",
            });
        }
        if hi.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "box corners have {} and {} coordinates",
                n,
                hi.len()
            )));
        }
        if cells == 0 {
            return Err(Error::Domain("grid needs at least one cell per axis".into()));
        }
        let total = cells
            .checked_pow(n as u32)
            .ok_or_else(|| Error::Domain("voxel count overflows".into()))?;
        if total > 200_000_000 {
            return Err(Error::Domain(format!("voxel count {total} is unreasonable")));
        }
        let mut h = Vec::with_capacity(n);
        for k in 0..n {
            if !(lo[k] < hi[k]) || !lo[k].is_finite() || !hi[k].is_finite() {
                return Err(Error::Domain(format!(
                    "box must satisfy lo < hi per axis, got [{}, {}]",
                    lo[k], hi[k]
                )));
            }
            h.push((hi[k] - lo[k]) / T::of_usize(cells));
        }
        let mask = match shape {
            ShapeSpec::FullBox => vec![true; total],
            ShapeSpec::Ball => {
                let mut center = Vec::with_capacity(n);
                let mut radius = T::infinity();
                for k in 0..n {
                    center.push((lo[k] + hi[k]) * T::of(0.5));
                    radius = radius.min((hi[k] - lo[k]) * T::of(0.5));
                }
                let mut mask = vec![false; total];
                let mut coord = vec![0usize; n];
                for (flat, slot) in mask.iter_mut().enumerate() {
                    decode(flat, cells, &mut coord);
                    let mut r2 = T::zero();
                    for k in 0..n {
                        let c = lo[k] + h[k] * (T::of_usize(coord[k]) + T::of(0.5));
                        let d = c - center[k];
                        r2 += d * d;
                    }
                    *slot = r2.sqrt() < radius;
                }
                mask
            }
            ShapeSpec::Mask(m) => {
                if m.len() != total {
                    return Err(Error::MaskSize {
                        got: m.len(),
                        expected: total,
                    });
                }
                m
            }
        };
        let active: Vec<usize> = (0..total).filter(|&i| mask[i]).collect();
        if active.is_empty() {
            return Err(Error::EmptyMask);
        }
        let mut rank_of_flat = vec![NO_RANK; total];
        for (rank, &flat) in active.iter().enumerate() {
            rank_of_flat[flat] = rank as u32;
        }
        Ok(GridDomain {
            n,
            lo,
            hi,
            cells,
            h,
            mask,
            active,
            rank_of_flat,
        })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Cells per axis.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn bounds(&self) -> (&[T], &[T]) {
        (&self.lo, &self.hi)
    }

    pub fn spacing(&self) -> &[T] {
        &self.h
    }

    pub fn voxel_volume(&self) -> T {
        let mut v = T::one();
        for &hk in &self.h {
            v = v * hk;
        }
        v
    }

    pub fn num_voxels(&self) -> usize {
        self.mask.len()
    }

    pub fn num_active(&self) -> usize {
        self.active.len()
    }

    /// Flat indices of active voxels, in increasing order.
    pub fn active_indices(&self) -> &[usize] {
        &self.active
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_active(&self, flat: usize) -> bool {
        self.mask[flat]
    }

    /// Position of a flat index within the active list.
    pub fn rank_of(&self, flat: usize) -> Option<usize> {
        match self.rank_of_flat[flat] {
            NO_RANK => None,
            r => Some(r as usize),
        }
    }

    pub fn lattice_of(&self, flat: usize, coord: &mut [usize]) {
        decode(flat, self.cells, coord);
    }

    pub fn flat_of(&self, coord: &[usize]) -> usize {
        let mut flat = 0usize;
        for k in (0..self.n).rev() {
            flat = flat * self.cells + coord[k];
        }
        flat
    }

    /// Center of a voxel by flat index.
    pub fn center(&self, flat: usize) -> Vec<T> {
        let mut coord = vec![0usize; self.n];
        decode(flat, self.cells, &mut coord);
        (0..self.n)
            .map(|k| self.lo[k] + self.h[k] * (T::of_usize(coord[k]) + T::of(0.5)))
            .collect()
    }

    /// Mask eroded `rounds` times: voxels whose full face-neighborhood stays
    /// active through `rounds` shrinking steps. Used to cut interior sets a
    /// fixed distance from the mask boundary.
    pub fn eroded_mask(&self, rounds: usize) -> Vec<bool> {
        let mut current = self.mask.clone();
        let mut coord = vec![0usize; self.n];
        for _ in 0..rounds {
            let mut next = vec![false; current.len()];
            for flat in 0..current.len() {
                if !current[flat] {
                    continue;
                }
                decode(flat, self.cells, &mut coord);
                let mut keep = true;
                'axes: for k in 0..self.n {
                    for dir in [-1isize, 1] {
                        let c = coord[k] as isize + dir;
                        if c < 0 || c >= self.cells as isize {
                            keep = false;
                            break 'axes;
                        }
                        let mut nb = coord.clone();
                        nb[k] = c as usize;
                        if !current[self.flat_of(&nb)] {
                            keep = false;
                            break 'axes;
                        }
                    }
                }
                next[flat] = keep;
            }
            current = next;
        }
        current
    }

    /// Same box family, widened by `pad` voxels on every side, all voxels
    /// active, identical spacing. Voxel `c + pad` of the extension sits at
    /// the center of voxel `c` of `self`.
    pub fn extended(&self, pad: usize) -> Result<GridDomain<T>> {
        let mut lo = Vec::with_capacity(self.n);
        let mut hi = Vec::with_capacity(self.n);
        for k in 0..self.n {
            lo.push(self.lo[k] - self.h[k] * T::of_usize(pad));
            hi.push(self.hi[k] + self.h[k] * T::of_usize(pad));
        }
        GridDomain::new(lo, hi, self.cells + 2 * pad, ShapeSpec::FullBox)
    }
}

fn decode(mut flat: usize, cells: usize, coord: &mut [usize]) {
    for c in coord.iter_mut() {
        *c = flat % cells;
        flat /= cells;
    }
}

/// Content pattern for randomly generated fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldContent {
    /// Real coefficients on grade-1 blades only.
    RealVector,
    /// Complex coefficients on grades 0 and 1.
    ComplexParavector,
    /// Complex coefficients on every blade.
    FullComplex,
}

/// Multivector-valued function sampled at active voxel centers.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T: Scalar> {
    domain: Arc<GridDomain<T>>,
    values: Vec<Multivector<T>>,
}

impl<T: Scalar> Field<T> {
    pub fn zero(domain: &Arc<GridDomain<T>>) -> Self {
        Field {
            domain: domain.clone(),
            values: vec![Multivector::zero(domain.dimension()); domain.num_active()],
        }
    }

    /// Samples `f` at every active voxel center.
    pub fn from_fn(
        domain: &Arc<GridDomain<T>>,
        mut f: impl FnMut(&[T]) -> Multivector<T>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(domain.num_active());
        for &flat in domain.active_indices() {
            let v = f(&domain.center(flat));
            if v.dim() != domain.dimension() {
                return Err(Error::DimensionMismatch(format!(
                    "field values must live in Cl_(0,{}), got dim {}",
                    domain.dimension(),
                    v.dim()
                )));
            }
            values.push(v);
        }
        Ok(Field {
            domain: domain.clone(),
            values,
        })
    }

    /// Seeded random field with the requested content pattern, coefficients
    /// uniform in `[-amplitude, amplitude]`.
    pub fn random(
        domain: &Arc<GridDomain<T>>,
        seed: u64,
        content: FieldContent,
        amplitude: T,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = domain.dimension();
        let mut values = Vec::with_capacity(domain.num_active());
        let amp = amplitude.to_f64().unwrap_or(1.0);
        for _ in 0..domain.num_active() {
            let mut m = Multivector::zero(n);
            for mask in 0..(1u16 << n) {
                let grade = blade_grade(mask);
                let (want_re, want_im) = match content {
                    FieldContent::RealVector => (grade == 1, false),
                    FieldContent::ComplexParavector => (grade <= 1, grade <= 1),
                    FieldContent::FullComplex => (true, true),
                };
                let re = if want_re { rng.gen_range(-amp..amp) } else { 0.0 };
                let im = if want_im { rng.gen_range(-amp..amp) } else { 0.0 };
                m.set_coeff(mask, Complex::new(T::of(re), T::of(im)));
            }
            values.push(m);
        }
        Field {
            domain: domain.clone(),
            values,
        }
    }

    pub fn domain(&self) -> &Arc<GridDomain<T>> {
        &self.domain
    }

    pub fn values(&self) -> &[Multivector<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Multivector<T>] {
        &mut self.values
    }

    /// Value at an active voxel, by rank in the active list.
    pub fn value(&self, rank: usize) -> &Multivector<T> {
        &self.values[rank]
    }

    pub fn set_value(&mut self, rank: usize, v: Multivector<T>) {
        assert_eq!(v.dim(), self.domain.dimension());
        self.values[rank] = v;
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.domain, &other.domain) || self.domain == other.domain {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(
                "fields live on different grids".into(),
            ))
        }
    }

    pub fn map(&self, f: impl Fn(&Multivector<T>) -> Multivector<T>) -> Self {
        Field {
            domain: self.domain.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn try_zip_map(
        &self,
        other: &Self,
        f: impl Fn(&Multivector<T>, &Multivector<T>) -> Multivector<T>,
    ) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Field {
            domain: self.domain.clone(),
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.try_zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.try_zip_map(other, |a, b| a - b)
    }

    pub fn scaled(&self, w: T) -> Self {
        self.map(|v| v.scaled(w))
    }

    /// `self += w * other`, in place.
    pub fn add_scaled(&mut self, other: &Self, w: T) -> Result<()> {
        self.check_compatible(other)?;
        for (dst, src) in self.values.iter_mut().zip(other.values.iter()) {
            dst.add_scaled(src, w);
        }
        Ok(())
    }

    /// Midpoint-rule `L^2` inner product: voxel volume times the sum of the
    /// pointwise real scalar products.
    pub fn l2_inner(&self, other: &Self) -> Result<T> {
        self.check_compatible(other)?;
        let mut acc = T::zero();
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            acc += a.scalar_product(b)?;
        }
        Ok(acc * self.domain.voxel_volume())
    }

    pub fn l2_norm_sq(&self) -> T {
        let mut acc = T::zero();
        for v in &self.values {
            acc += v.norm_sq();
        }
        acc * self.domain.voxel_volume()
    }

    pub fn l2_norm(&self) -> T {
        self.l2_norm_sq().sqrt()
    }

    /// Largest pointwise coefficient magnitude.
    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for v in &self.values {
            m = m.max(v.max_abs_coeff());
        }
        m
    }

    /// Largest pointwise magnitude on blades of grade >= 2.
    pub fn higher_grade_leak(&self) -> T {
        let mut m = T::zero();
        for v in &self.values {
            m = m.max(v.higher_grade_leak());
        }
        m
    }

    /// Largest pointwise magnitude outside the real paravector subspace.
    pub fn paravector_leak(&self) -> T {
        let mut m = T::zero();
        for v in &self.values {
            m = m.max(v.paravector_leak());
        }
        m
    }

    /// Largest pointwise magnitude outside the real grade-1 subspace.
    pub fn vector_leak(&self) -> T {
        let mut m = T::zero();
        for v in &self.values {
            m = m.max(v.vector_leak());
        }
        m
    }

    /// Transplants values onto another grid of the same spacing; lattice
    /// coordinate `c` of `self` lands at `c + shift`. Voxels of `target`
    /// that receive nothing are zero.
    pub fn embedded(
        &self,
        target: &Arc<GridDomain<T>>,
        shift: &[usize],
    ) -> Result<Field<T>> {
        let n = self.domain.dimension();
        if target.dimension() != n || shift.len() != n {
            return Err(Error::DimensionMismatch(
                "embedding target has a different dimension".into(),
            ));
        }
        let mut out = Field::zero(target);
        let mut coord = vec![0usize; n];
        for (rank, &flat) in self.domain.active_indices().iter().enumerate() {
            self.domain.lattice_of(flat, &mut coord);
            let shifted: Vec<usize> = (0..n).map(|k| coord[k] + shift[k]).collect();
            if shifted.iter().any(|&c| c >= target.cells()) {
                return Err(Error::Domain(
                    "embedding shift pushes a voxel outside the target grid".into(),
                ));
            }
            let tflat = target.flat_of(&shifted);
            let trank = target.rank_of(tflat).ok_or_else(|| {
                Error::Domain("embedding target voxel is inactive".into())
            })?;
            out.values[trank] = self.values[rank].clone();
        }
        Ok(out)
    }

    /// Writes the field as CSV with header `x1,...,xn,blade_mask,re,im`,
    /// one row per active voxel per blade, 17 significant digits, so the
    /// round trip through [`Field::read_csv`] is bit-exact.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.domain.dimension();
        let mut header = String::new();
        for k in 1..=n {
            header.push_str(&format!("x{k},"));
        }
        header.push_str("blade_mask,re,im");
        writeln!(w, "{header}")?;
        for (rank, &flat) in self.domain.active_indices().iter().enumerate() {
            let center = self.domain.center(flat);
            let coords: Vec<String> = center.iter().map(|c| format!("{:.16e}", c)).collect();
            let prefix = coords.join(",");
            for (mask, c) in self.values[rank].iter() {
                writeln!(w, "{prefix},{mask},{:.16e},{:.16e}", c.re, c.im)?;
            }
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads a field written by [`Field::write_csv`] back onto `domain`.
    /// Coordinates must land on active voxel centers of `domain`.
    pub fn read_csv<R: std::io::Read>(domain: &Arc<GridDomain<T>>, r: R) -> Result<Field<T>> {
        let n = domain.dimension();
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty CSV".into()))??;
        let mut want = String::new();
        for k in 1..=n {
            want.push_str(&format!("x{k},"));
        }
        want.push_str("blade_mask,re,im");
        if header.trim() != want {
            return Err(Error::Parse(format!(
                "bad CSV header: got {:?}, want {:?}",
                header.trim(),
                want
            )));
        }
        let mut out = Field::zero(domain);
        let mut coord = vec![0usize; n];
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.trim().split(',').collect();
            if parts.len() != n + 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    n + 3,
                    parts.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
            };
            let (lo, _) = domain.bounds();
            for k in 0..n {
                let x = T::of(parse(parts[k])?);
                let rel = (x - lo[k]) / domain.spacing()[k] - T::of(0.5);
                let idx = rel.round();
                if (rel - idx).abs() > T::of(1e-6) {
                    return Err(Error::Parse(format!(
                        "line {}: coordinate {x} is not a voxel center",
                        lineno + 2
                    )));
                }
                let idx = idx.to_f64().unwrap();
                if idx < 0.0 || idx >= domain.cells() as f64 {
                    return Err(Error::Parse(format!(
                        "line {}: coordinate {x} outside the grid",
                        lineno + 2
                    )));
                }
                coord[k] = idx as usize;
            }
            let flat = domain.flat_of(&coord);
            let rank = domain.rank_of(flat).ok_or_else(|| {
                Error::Parse(format!("line {}: voxel is not active", lineno + 2))
            })?;
            let mask: u16 = parts[n]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: blade mask: {e}", lineno + 2)))?;
            if mask as usize >= (1usize << n) {
                return Err(Error::Parse(format!(
                    "line {}: blade mask {mask} out of range",
                    lineno + 2
                )));
            }
            let re = T::of(parse(parts[n + 1])?);
            let im = T::of(parse(parts[n + 2])?);
            out.values[rank].set_coeff(mask, Complex::new(re, im));
        }
        Ok(out)
    }

    pub fn read_csv_path(domain: &Arc<GridDomain<T>>, path: &Path) -> Result<Field<T>> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(domain, f)
    }

    /// Legacy-VTK ASCII export for three-dimensional grids: real scalar
    /// part, real vector part, and the mask, as point data on voxel centers.
    /// Inactive voxels are zero-filled.
    pub fn write_vtk<W: Write>(&self, mut w: W, title: &str) -> Result<()> {
        let n = self.domain.dimension();
        if n != 3 {
            return Err(Error::UnsupportedDimension {
                got: n,
                expected: "VTK export is for dimension 3",
            });
        }
        let cells = self.domain.cells();
        let (lo, _) = self.domain.bounds();
        let h = self.domain.spacing();
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "{}", title.replace('\n', " "))?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET STRUCTURED_POINTS")?;
        writeln!(w, "DIMENSIONS {cells} {cells} {cells}")?;
        writeln!(
            w,
            "ORIGIN {} {} {}",
            lo[0] + h[0] * T::of(0.5),
            lo[1] + h[1] * T::of(0.5),
            lo[2] + h[2] * T::of(0.5)
        )?;
        writeln!(w, "SPACING {} {} {}", h[0], h[1], h[2])?;
        writeln!(w, "POINT_DATA {}", self.domain.num_voxels())?;
        writeln!(w, "SCALARS scalar_part double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for flat in 0..self.domain.num_voxels() {
            let v = match self.domain.rank_of(flat) {
                Some(rank) => self.values[rank].scalar_coeff().re,
                None => T::zero(),
            };
            writeln!(w, "{v}")?;
        }
        writeln!(w, "SCALARS mask int 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for flat in 0..self.domain.num_voxels() {
            writeln!(w, "{}", if self.domain.is_active(flat) { 1 } else { 0 })?;
        }
        writeln!(w, "VECTORS vector_part double")?;
        for flat in 0..self.domain.num_voxels() {
            match self.domain.rank_of(flat) {
                Some(rank) => {
                    let v = &self.values[rank];
                    writeln!(
                        w,
                        "{} {} {}",
                        v.coeff(0b001).re,
                        v.coeff(0b010).re,
                        v.coeff(0b100).re
                    )?;
                }
                None => writeln!(w, "0 0 0")?,
            }
        }
        Ok(())
    }

    pub fn write_vtk_path(&self, path: &Path, title: &str) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_vtk(std::io::BufWriter::new(f), title)
    }
}
