//! Planar Poisson point processes: sampling by thinning and log densities
//! relative to the unit-rate Poisson process on the window.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{GeomError, Point, PointPattern, Region, Window};
use crate::surfaces::{integrate, node_max, Integrand, LogLinearIntensity, QuadratureGrid, Surface, SurfaceError};

#[derive(Debug, Error)]
pub enum PointProcessError {
    #[error("intensity must be nonnegative and finite, got {0}")]
    InvalidIntensity(f64),
    #[error("thinning bound {bound} is below the intensity {value} at ({x}, {y})")]
    BoundBreach { value: f64, bound: f64, x: f64, y: f64 },
    #[error("intensity is zero at ({x}, {y}), so the pattern has density zero")]
    DensityZero { x: f64, y: f64 },
    #[error("positivity violation: denominator intensity is zero at ({x}, {y})")]
    PositivityViolation { x: f64, y: f64 },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone)]
pub enum Intensity {
    Surface(Surface),
    LogLinear(LogLinearIntensity),
}

impl Intensity {
    #[inline]
    pub fn value(&self, p: Point) -> f64 {
        match self {
            Intensity::Surface(s) => s.value(p),
            Intensity::LogLinear(l) => l.value(p),
        }
    }

    /// `ln λ(p)`; `-inf` where the intensity vanishes.
    #[inline]
    pub fn log_value(&self, p: Point) -> f64 {
        match self {
            Intensity::Surface(s) => s.value(p).ln(),
            Intensity::LogLinear(l) => l.log_value(p),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Intensity::Surface(s) => s.constant_value(),
            Intensity::LogLinear(l) => l.constant_value(),
        }
    }
}

impl Integrand for Intensity {
    fn eval(&self, p: Point) -> f64 {
        self.value(p)
    }

    fn constant(&self) -> Option<f64> {
        self.constant_value()
    }
}

impl From<Surface> for Intensity {
    fn from(s: Surface) -> Self {
        Intensity::Surface(s)
    }
}

impl From<LogLinearIntensity> for Intensity {
    fn from(l: LogLinearIntensity) -> Self {
        Intensity::LogLinear(l)
    }
}

#[derive(Debug, Clone)]
pub struct PoissonProcess {
    intensity: Intensity,
    window: Window,
    upper_bound: f64,
}

impl PoissonProcess {
    pub fn homogeneous(rate: f64, window: Window) -> Result<Self, PointProcessError> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(PointProcessError::InvalidIntensity(rate));
        }
        Ok(PoissonProcess {
            intensity: Intensity::Surface(Surface::Constant(rate)),
            window,
            upper_bound: rate,
        })
    }

    /// Thinning bound taken as 1.05 times the largest intensity on the
    /// grid's nodes.
    pub fn new(intensity: impl Into<Intensity>, grid: &QuadratureGrid) -> Result<Self, PointProcessError> {
        let intensity = intensity.into();
        let bound = match intensity.constant_value() {
            Some(c) => c,
            None => 1.05 * node_max(&intensity, grid),
        };
        PoissonProcess::with_upper_bound(intensity, *grid.window(), bound)
    }

    /// Caller-supplied thinning bound, e.g. an analytic supremum.
    pub fn with_upper_bound(intensity: impl Into<Intensity>, window: Window, bound: f64) -> Result<Self, PointProcessError> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(PointProcessError::InvalidIntensity(bound));
        }
        Ok(PoissonProcess {
            intensity: intensity.into(),
            window,
            upper_bound: bound,
        })
    }

    pub fn intensity(&self) -> &Intensity {
        &self.intensity
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    pub fn expected_count(&self, grid: &QuadratureGrid) -> Result<f64, PointProcessError> {
        Ok(integrate(&self.intensity, &Region::whole(self.window), grid)?)
    }

    pub fn sample<R: Rng + ?Sized>(&self, timestamp: u32, rng: &mut R) -> Result<PointPattern, PointProcessError> {
        let points = match self.intensity.constant_value() {
            Some(c) => uniform_points(&self.window, c, rng),
            None => sample_thinned(&self.window, self.upper_bound, rng, |p| self.intensity.value(p))?,
        };
        Ok(PointPattern::new(self.window, timestamp, points)?)
    }

    pub fn log_density(&self, pattern: &PointPattern, grid: &QuadratureGrid) -> Result<LogDensity, PointProcessError> {
        let integral = integrate(&self.intensity, &Region::whole(self.window), grid)?;
        let mut acc = self.window.area() - integral;
        for p in pattern.points() {
            let l = self.intensity.log_value(*p);
            if l == f64::NEG_INFINITY || l.is_nan() {
                return Err(PointProcessError::DensityZero { x: p.x, y: p.y });
            }
            acc += l;
        }
        Ok(LogDensity(acc))
    }
}

/// Natural log of a pattern density relative to the unit-rate Poisson
/// process on the window.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogDensity(pub f64);

impl LogDensity {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Homogeneous Poisson points at `rate` on `window`.
pub fn uniform_points<R: Rng + ?Sized>(window: &Window, rate: f64, rng: &mut R) -> Vec<Point> {
    let mean = rate * window.area();
    if mean <= 0.0 {
        return Vec::new();
    }
    let n = Poisson::new(mean).expect("positive finite mean").sample(rng) as usize;
    let b = window.bounds();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            Point::new(b.x0 + u * b.width(), b.y0 + v * b.height())
        })
        .collect()
}

/// Thinning from a homogeneous process at `bound`. A realized intensity above
/// the bound is an error, never clamped.
pub fn sample_thinned<R: Rng + ?Sized>(
    window: &Window,
    bound: f64,
    rng: &mut R,
    intensity: impl Fn(Point) -> f64,
) -> Result<Vec<Point>, PointProcessError> {
    let candidates = uniform_points(window, bound, rng);
    let mut kept = Vec::with_capacity(candidates.len());
    for p in candidates {
        let lam = intensity(p);
        if lam > bound {
            return Err(PointProcessError::BoundBreach {
                value: lam,
                bound,
                x: p.x,
                y: p.y,
            });
        }
        let u: f64 = rng.random();
        if u * bound < lam {
            kept.push(p);
        }
    }
    Ok(kept)
}

pub fn log_density(process: &PoissonProcess, pattern: &PointPattern, grid: &QuadratureGrid) -> Result<LogDensity, PointProcessError> {
    process.log_density(pattern, grid)
}

/// `log f_num(w) − log f_den(w)`. A zero numerator gives `-inf`; a zero
/// denominator is a positivity violation.
pub fn log_density_ratio(
    numerator: &PoissonProcess,
    denominator: &PoissonProcess,
    pattern: &PointPattern,
    grid: &QuadratureGrid,
) -> Result<f64, PointProcessError> {
    let den = match denominator.log_density(pattern, grid) {
        Ok(d) => d.0,
        Err(PointProcessError::DensityZero { x, y }) => return Err(PointProcessError::PositivityViolation { x, y }),
        Err(e) => return Err(e),
    };
    let num = match numerator.log_density(pattern, grid) {
        Ok(d) => d.0,
        Err(PointProcessError::DensityZero { .. }) => return Ok(f64::NEG_INFINITY),
        Err(e) => return Err(e),
    };
    Ok(num - den)
}
