//! Gaussian kernel smoothing of point patterns and exact kernel mass over
//! rectangular regions.
//!
//! The kernel is the bivariate normal density with per-axis standard
//! deviations, so each point contributes exactly unit mass over the plane.
//! Region integrals use products of normal CDF differences, never quadrature.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point, PointPattern, Region};
use crate::numeric::norm_interval;
use crate::surfaces::{integrate, QuadratureGrid, Surface, SurfaceError};

#[derive(Debug, Error)]
pub enum SmoothError {
    #[error("kernel bandwidth must be positive and finite, got ({0}, {1})")]
    BadBandwidth(f64, f64),
    #[error("Scott's rule needs at least two points with spread on both axes ({0} points given)")]
    InsufficientData(usize),
    #[error("baseline has zero mass over the window")]
    ZeroMass,
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

/// Gaussian kernel with per-axis standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl KernelSpec {
    pub fn isotropic(bandwidth: f64) -> Result<Self, SmoothError> {
        KernelSpec::new(bandwidth, bandwidth)
    }

    pub fn new(sigma_x: f64, sigma_y: f64) -> Result<Self, SmoothError> {
        let ok = |s: f64| s > 0.0 && s.is_finite();
        if !(ok(sigma_x) && ok(sigma_y)) {
            return Err(SmoothError::BadBandwidth(sigma_x, sigma_y));
        }
        Ok(KernelSpec { sigma_x, sigma_y })
    }

    #[inline]
    pub fn density(&self, offset_x: f64, offset_y: f64) -> f64 {
        let zx = offset_x / self.sigma_x;
        let zy = offset_y / self.sigma_y;
        (-0.5 * (zx * zx + zy * zy)).exp() / (std::f64::consts::TAU * self.sigma_x * self.sigma_y)
    }
}

/// `10 · T^(-2/3)`: a bandwidth shrinking with the series length.
pub fn bandwidth_rule(periods: usize) -> f64 {
    10.0 * (periods.max(1) as f64).powf(-2.0 / 3.0)
}

/// Kernel mass of a single point over `region`.
#[inline]
pub fn point_mass(p: Point, kernel: &KernelSpec, region: &Region) -> f64 {
    let mut m = 0.0;
    for r in region.parts() {
        let mx = norm_interval((r.x0 - p.x) / kernel.sigma_x, (r.x1 - p.x) / kernel.sigma_x);
        let my = norm_interval((r.y0 - p.y) / kernel.sigma_y, (r.y1 - p.y) / kernel.sigma_y);
        m += mx * my;
    }
    m
}

/// `∫_B Σ_s K(ω - s) dω`, computed exactly rectangle by rectangle.
pub fn smoothed_region_integral(pattern: &PointPattern, kernel: &KernelSpec, region: &Region) -> f64 {
    smoothed_points_integral(pattern.points(), kernel, region)
}

pub fn smoothed_points_integral(points: &[Point], kernel: &KernelSpec, region: &Region) -> f64 {
    points.iter().map(|p| point_mass(*p, kernel, region)).sum()
}

/// Per-axis Scott rule: `n^(-1/6) · sd`.
pub fn scott_bandwidth(pattern: &PointPattern) -> Result<(f64, f64), SmoothError> {
    let pts = pattern.points();
    let n = pts.len();
    if n < 2 {
        return Err(SmoothError::InsufficientData(n));
    }
    let sd = |f: fn(&Point) -> f64| {
        let mean = pts.iter().map(f).sum::<f64>() / n as f64;
        (pts.iter().map(|p| (f(p) - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let (sx, sy) = (sd(|p| p.x), sd(|p| p.y));
    if !(sx > 0.0 && sy > 0.0) {
        return Err(SmoothError::InsufficientData(n));
    }
    let factor = (n as f64).powf(-1.0 / 6.0);
    Ok((factor * sx, factor * sy))
}

/// `prefactor · Σ_s K(ω − s)` over a source pattern.
#[derive(Debug, Clone)]
pub struct SmoothedSurface {
    points: Arc<[Point]>,
    kernel: KernelSpec,
    prefactor: f64,
}

impl SmoothedSurface {
    pub fn new(pattern: &PointPattern, kernel: KernelSpec, prefactor: f64) -> Self {
        SmoothedSurface {
            points: pattern.points().into(),
            kernel,
            prefactor,
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn source_len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn value(&self, w: Point) -> f64 {
        let mut acc = 0.0;
        for s in self.points.iter() {
            acc += self.kernel.density(w.x - s.x, w.y - s.y);
        }
        self.prefactor * acc
    }

    /// Exact mass over a region.
    pub fn region_mass(&self, region: &Region) -> f64 {
        self.prefactor * smoothed_points_integral(&self.points, &self.kernel, region)
    }

    /// Mass over the whole plane.
    pub fn plane_mass(&self) -> f64 {
        self.prefactor * self.points.len() as f64
    }
}

/// A probability density over the window: the Scott-smoothed pattern,
/// renormalized so its quadrature on `grid` is one.
pub fn baseline_density(pattern: &PointPattern, grid: &QuadratureGrid) -> Result<Surface, SmoothError> {
    let (sx, sy) = scott_bandwidth(pattern)?;
    let kernel = KernelSpec::new(sx, sy)?;
    let raw = Surface::kernel(SmoothedSurface::new(pattern, kernel, 1.0));
    let mass = integrate(&raw, &Region::whole(*grid.window()), grid)?;
    if !(mass > 0.0) {
        return Err(SmoothError::ZeroMass);
    }
    Ok(raw.scaled(1.0 / mass))
}
