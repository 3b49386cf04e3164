//! Field containers on a configuration grid.
//!
//! All containers carry an `Arc` of their grid; binary operations accept any
//! grid that compares equal by value, so fields living on independently
//! constructed but identical grids combine freely.

use std::sync::Arc;

use num_complex::Complex64;

use super::grid::ConfigurationGrid;
use super::KahanSum;
use crate::error::{QhdError, Result};

fn check_same_grid(a: &ConfigurationGrid, b: &ConfigurationGrid, context: &str) -> Result<()> {
    if std::ptr::eq(a, b) || a == b {
        Ok(())
    } else {
        Err(QhdError::AxisMismatch(format!(
            "{context}: fields live on different grids"
        )))
    }
}

/// Real scalar field, one value per grid point, row-major.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<ConfigurationGrid>,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<ConfigurationGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            data: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<ConfigurationGrid>, value: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            data: vec![value; n],
        }
    }

    /// Samples `f(coords)` at every grid point.
    pub fn from_fn(grid: Arc<ConfigurationGrid>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        let mut coords = vec![0.0; grid.d_tot()];
        for i in 0..grid.len() {
            grid.coords_of(i, &mut coords);
            data.push(f(&coords));
        }
        Self { grid, data }
    }

    pub fn from_data(grid: Arc<ConfigurationGrid>, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(QhdError::AxisMismatch(format!(
                "field data length {} does not match grid point count {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    #[inline]
    pub fn grid(&self) -> &Arc<ConfigurationGrid> {
        &self.grid
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(QhdError::NonFinite {
                context: context.to_string(),
            })
        }
    }

    /// Pointwise combination with another field on an equal grid.
    pub fn zip_with(
        &self,
        other: &ScalarField,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<ScalarField> {
        check_same_grid(&self.grid, &other.grid, "zip_with")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(ScalarField {
            grid: self.grid.clone(),
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    /// self += c·other
    pub fn axpy(&mut self, c: f64, other: &ScalarField) -> Result<()> {
        check_same_grid(&self.grid, &other.grid, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.data {
            *a *= c;
        }
    }

    /// Grid integral ∫ f dQ = Σ f · ΠΔq (midpoint rule), Kahan-compensated.
    pub fn integral(&self) -> f64 {
        let mut k = KahanSum::new();
        for &x in &self.data {
            k.add(x);
        }
        k.value() * self.grid.point_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
    }

    /// Plain 2-norm over off-mask points (no volume weight; ratios of these
    /// norms are what residual reports quote, so the weight would cancel).
    pub fn l2_masked(&self, mask: Option<&MaskField>) -> f64 {
        let mut k = KahanSum::new();
        match mask {
            None => {
                for &x in &self.data {
                    k.add(x * x);
                }
            }
            Some(m) => {
                for (&x, &masked) in self.data.iter().zip(&m.data) {
                    if !masked {
                        k.add(x * x);
                    }
                }
            }
        }
        k.value().sqrt()
    }
}

/// Complex field; carrier for wavefunctions and their spectral derivatives.
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: Arc<ConfigurationGrid>,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: Arc<ConfigurationGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_fn(grid: Arc<ConfigurationGrid>, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        let mut coords = vec![0.0; grid.d_tot()];
        for i in 0..grid.len() {
            grid.coords_of(i, &mut coords);
            data.push(f(&coords));
        }
        Self { grid, data }
    }

    pub fn from_data(grid: Arc<ConfigurationGrid>, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(QhdError::AxisMismatch(format!(
                "field data length {} does not match grid point count {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    #[inline]
    pub fn grid(&self) -> &Arc<ConfigurationGrid> {
        &self.grid
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self
            .data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
        {
            Ok(())
        } else {
            Err(QhdError::NonFinite {
                context: context.to_string(),
            })
        }
    }

    /// L2 norm with the volume weight: ‖Ψ‖ = sqrt(Σ|Ψ|²·ΠΔq).
    pub fn norm(&self) -> f64 {
        let mut k = KahanSum::new();
        for z in &self.data {
            k.add(z.norm_sqr());
        }
        (k.value() * self.grid.point_volume()).sqrt()
    }

    pub fn scale(&mut self, c: Complex64) {
        for z in &mut self.data {
            *z *= c;
        }
    }

    /// |Ψ|² as a real field.
    pub fn abs_squared(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|z| z.norm_sqr()).collect(),
        }
    }
}

/// ν-component real vector field (components ordered like the axes of the
/// particle or position grid they belong to).
#[derive(Clone, Debug)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        if components.is_empty() {
            return Err(QhdError::AxisMismatch(
                "vector field with no components".into(),
            ));
        }
        for c in &components[1..] {
            check_same_grid(components[0].grid(), c.grid(), "VectorField::new")?;
        }
        Ok(Self { components })
    }

    pub fn zeros(grid: Arc<ConfigurationGrid>, nu: usize) -> Self {
        Self {
            components: (0..nu).map(|_| ScalarField::zeros(grid.clone())).collect(),
        }
    }

    #[inline]
    pub fn nu(&self) -> usize {
        self.components.len()
    }

    #[inline]
    pub fn grid(&self) -> &Arc<ConfigurationGrid> {
        self.components[0].grid()
    }

    #[inline]
    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    #[inline]
    pub fn component_mut(&mut self, i: usize) -> &mut ScalarField {
        &mut self.components[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }

    pub fn axpy(&mut self, c: f64, other: &VectorField) -> Result<()> {
        if self.nu() != other.nu() {
            return Err(QhdError::AxisMismatch(
                "vector component count mismatch".into(),
            ));
        }
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.axpy(c, b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.components {
            a.scale(c);
        }
    }

    /// 2-norm over all components and off-mask points.
    pub fn l2_masked(&self, mask: Option<&MaskField>) -> f64 {
        let mut sq = 0.0;
        for c in &self.components {
            let n = c.l2_masked(mask);
            sq += n * n;
        }
        sq.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }
}

/// ν×ν tensor field; component (α, β) is stored at α·ν + β.
#[derive(Clone, Debug)]
pub struct Tensor2Field {
    nu: usize,
    components: Vec<ScalarField>,
}

impl Tensor2Field {
    pub fn zeros(grid: Arc<ConfigurationGrid>, nu: usize) -> Self {
        Self {
            nu,
            components: (0..nu * nu)
                .map(|_| ScalarField::zeros(grid.clone()))
                .collect(),
        }
    }

    pub fn from_components(nu: usize, components: Vec<ScalarField>) -> Result<Self> {
        if components.len() != nu * nu {
            return Err(QhdError::AxisMismatch(format!(
                "{} components for a {nu}×{nu} tensor",
                components.len()
            )));
        }
        for c in &components[1..] {
            check_same_grid(components[0].grid(), c.grid(), "Tensor2Field")?;
        }
        Ok(Self { nu, components })
    }

    #[inline]
    pub fn nu(&self) -> usize {
        self.nu
    }

    #[inline]
    pub fn grid(&self) -> &Arc<ConfigurationGrid> {
        self.components[0].grid()
    }

    #[inline]
    pub fn at(&self, alpha: usize, beta: usize) -> &ScalarField {
        &self.components[alpha * self.nu + beta]
    }

    #[inline]
    pub fn at_mut(&mut self, alpha: usize, beta: usize) -> &mut ScalarField {
        &mut self.components[alpha * self.nu + beta]
    }

    pub fn axpy(&mut self, c: f64, other: &Tensor2Field) -> Result<()> {
        if self.nu != other.nu {
            return Err(QhdError::AxisMismatch("tensor rank mismatch".into()));
        }
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.axpy(c, b)?;
        }
        Ok(())
    }

    /// Largest pointwise asymmetry max|T_{αβ} − T_{βα}|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.nu {
            for b in (a + 1)..self.nu {
                let ab = self.at(a, b).data();
                let ba = self.at(b, a).data();
                for (x, y) in ab.iter().zip(ba) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }
}

/// Boolean exclusion mask; `true` marks points excluded from norms.
#[derive(Clone, Debug)]
pub struct MaskField {
    grid: Arc<ConfigurationGrid>,
    data: Vec<bool>,
}

impl MaskField {
    pub fn none(grid: Arc<ConfigurationGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            data: vec![false; n],
        }
    }

    /// Marks points where `field < threshold`.
    pub fn below(field: &ScalarField, threshold: f64) -> Self {
        Self {
            grid: field.grid().clone(),
            data: field.data().iter().map(|&x| x < threshold).collect(),
        }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<ConfigurationGrid> {
        &self.grid
    }

    #[inline]
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn is_masked(&self, i: usize) -> bool {
        self.data[i]
    }

    /// Pointwise OR with another mask.
    pub fn union(&self, other: &MaskField) -> Result<MaskField> {
        check_same_grid(&self.grid, &other.grid, "mask union")?;
        Ok(MaskField {
            grid: self.grid.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    pub fn masked_count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    /// Percentage of points that remain in norms.
    pub fn coverage_percent(&self) -> f64 {
        100.0 * (self.data.len() - self.masked_count()) as f64 / self.data.len() as f64
    }

    pub fn masked_fraction(&self) -> f64 {
        self.masked_count() as f64 / self.data.len() as f64
    }
}
