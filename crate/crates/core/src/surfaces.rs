//! Real-valued fields over the window, log-linear intensities built from
//! them, and midpoint-rule quadrature.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{GeomError, NearestDistance, Point, Rect, Region, SegmentSet, Window};
use crate::numeric::pairwise_sum;
use crate::smooth::SmoothedSurface;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("decay scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("quadrature grid needs at least one node per axis, got {nx} x {ny}")]
    EmptyGrid { nx: usize, ny: usize },
    #[error("quadrature grid window does not cover the region")]
    GridDoesNotCover,
    #[error("log-linear intensity has {coefficients} coefficients but {features} features")]
    LengthMismatch { coefficients: usize, features: usize },
    #[error("invalid raster: {0}")]
    Raster(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// What a decay surface measures distance to.
#[derive(Debug, Clone)]
pub enum DecayTargets {
    Segments(Arc<SegmentSet>),
    Points(Arc<[Point]>),
}

impl DecayTargets {
    fn is_empty(&self) -> bool {
        match self {
            DecayTargets::Segments(s) => s.is_empty(),
            DecayTargets::Points(p) => p.is_empty(),
        }
    }

    #[inline]
    fn distance(&self, p: Point) -> f64 {
        let d = match self {
            DecayTargets::Segments(s) => s.nearest_distance(p),
            DecayTargets::Points(pts) => pts.nearest_distance(p),
        };
        d.unwrap_or(f64::INFINITY)
    }
}

/// `amplitude * exp(-scale * distance(ω, targets))`.
#[derive(Debug, Clone)]
pub struct DecaySurface {
    pub targets: DecayTargets,
    pub scale: f64,
    pub amplitude: f64,
}

/// Values on a regular lattice of cell centres, bilinearly interpolated.
#[derive(Debug, Clone)]
pub struct GridSurface {
    window: Window,
    nx: usize,
    ny: usize,
    values: Arc<[f64]>,
}

impl GridSurface {
    pub fn new(window: Window, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self, SurfaceError> {
        if nx == 0 || ny == 0 {
            return Err(SurfaceError::EmptyGrid { nx, ny });
        }
        if values.len() != nx * ny {
            return Err(SurfaceError::Raster(format!(
                "expected {} values for a {nx} x {ny} raster, got {}",
                nx * ny,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(SurfaceError::Raster(format!("non-finite raster value {v}")));
        }
        Ok(GridSurface {
            window,
            nx,
            ny,
            values: values.into(),
        })
    }

    /// Samples `f` at the cell centres of an `nx x ny` lattice.
    pub fn from_fn(window: Window, nx: usize, ny: usize, f: impl Fn(Point) -> f64) -> Result<Self, SurfaceError> {
        let grid = QuadratureGrid::new(window, nx, ny)?;
        GridSurface::new(window, nx, ny, grid.nodes().iter().map(|p| f(*p)).collect())
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, p: Point) -> f64 {
        let b = self.window.bounds();
        let dx = b.width() / self.nx as f64;
        let dy = b.height() / self.ny as f64;
        let (i0, fx) = axis_weight((p.x - b.x0) / dx - 0.5, self.nx);
        let (j0, fy) = axis_weight((p.y - b.y0) / dy - 0.5, self.ny);
        let i1 = (i0 + 1).min(self.nx - 1);
        let j1 = (j0 + 1).min(self.ny - 1);
        let v = |i: usize, j: usize| self.values[j * self.nx + i];
        let lower = v(i0, j0) * (1.0 - fx) + v(i1, j0) * fx;
        let upper = v(i0, j1) * (1.0 - fx) + v(i1, j1) * fx;
        lower * (1.0 - fy) + upper * fy
    }
}

#[inline]
fn axis_weight(u: f64, n: usize) -> (usize, f64) {
    if n == 1 || u <= 0.0 {
        return (0, 0.0);
    }
    let max = (n - 1) as f64;
    if u >= max {
        return (n - 1, 0.0);
    }
    let i = u.floor();
    (i as usize, u - i)
}

/// Isotropic bivariate normal density with the given precision.
#[derive(Debug, Clone, Copy)]
pub struct GaussianBump {
    pub center: Point,
    pub precision: f64,
}

impl GaussianBump {
    #[inline]
    pub fn value(&self, p: Point) -> f64 {
        self.precision / std::f64::consts::TAU * (-0.5 * self.precision * p.dist2(self.center)).exp()
    }
}

#[derive(Debug, Clone)]
pub enum CompositeSurface {
    Scaled { factor: f64, inner: Surface },
    Sum(Vec<Surface>),
    Product(Vec<Surface>),
    /// `inside` on the region, `outside` elsewhere.
    Piecewise {
        region: Region,
        inside: Surface,
        outside: Surface,
    },
    Gaussian(GaussianBump),
    Kernel(SmoothedSurface),
    /// `c + ax·x + ay·y`.
    Affine { ax: f64, ay: f64, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceKind {
    AnalyticDecay,
    GridBacked,
    Constant,
    Composite,
}

/// A deterministic real-valued map on the window.
#[derive(Debug, Clone)]
pub enum Surface {
    Constant(f64),
    Decay(Arc<DecaySurface>),
    Grid(GridSurface),
    Composite(Arc<CompositeSurface>),
}

impl Surface {
    pub fn zero() -> Self {
        Surface::Constant(0.0)
    }

    pub fn kind(&self) -> SurfaceKind {
        match self {
            Surface::Constant(_) => SurfaceKind::Constant,
            Surface::Decay(_) => SurfaceKind::AnalyticDecay,
            Surface::Grid(_) => SurfaceKind::GridBacked,
            Surface::Composite(_) => SurfaceKind::Composite,
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Surface::Constant(c) => Some(*c),
            _ => None,
        }
    }

    #[inline]
    pub fn value(&self, p: Point) -> f64 {
        match self {
            Surface::Constant(c) => *c,
            Surface::Decay(d) => {
                let dist = d.targets.distance(p);
                if dist.is_infinite() {
                    0.0
                } else {
                    d.amplitude * (-d.scale * dist).exp()
                }
            }
            Surface::Grid(g) => g.value(p),
            Surface::Composite(c) => match c.as_ref() {
                CompositeSurface::Scaled { factor, inner } => factor * inner.value(p),
                CompositeSurface::Sum(parts) => parts.iter().map(|s| s.value(p)).sum(),
                CompositeSurface::Product(parts) => parts.iter().map(|s| s.value(p)).product(),
                CompositeSurface::Piecewise {
                    region,
                    inside,
                    outside,
                } => {
                    if region.contains(p) {
                        inside.value(p)
                    } else {
                        outside.value(p)
                    }
                }
                CompositeSurface::Gaussian(g) => g.value(p),
                CompositeSurface::Kernel(k) => k.value(p),
                CompositeSurface::Affine { ax, ay, c } => c + ax * p.x + ay * p.y,
            },
        }
    }

    pub fn scaled(self, factor: f64) -> Surface {
        match self {
            Surface::Constant(c) => Surface::Constant(c * factor),
            other => Surface::Composite(Arc::new(CompositeSurface::Scaled { factor, inner: other })),
        }
    }

    pub fn product(parts: Vec<Surface>) -> Surface {
        Surface::Composite(Arc::new(CompositeSurface::Product(parts)))
    }

    pub fn sum(parts: Vec<Surface>) -> Surface {
        Surface::Composite(Arc::new(CompositeSurface::Sum(parts)))
    }

    pub fn piecewise(region: Region, inside: Surface, outside: Surface) -> Surface {
        Surface::Composite(Arc::new(CompositeSurface::Piecewise {
            region,
            inside,
            outside,
        }))
    }

    pub fn gaussian(center: Point, precision: f64) -> Surface {
        Surface::Composite(Arc::new(CompositeSurface::Gaussian(GaussianBump { center, precision })))
    }

    pub fn affine(ax: f64, ay: f64, c: f64) -> Surface {
        Surface::Composite(Arc::new(CompositeSurface::Affine { ax, ay, c }))
    }

    pub fn kernel(k: SmoothedSurface) -> Surface {
        Surface::Composite(Arc::new(CompositeSurface::Kernel(k)))
    }

    /// Samples the surface on the grid's nodes into a grid-backed surface.
    pub fn rasterize(&self, grid: &QuadratureGrid) -> Result<GridSurface, SurfaceError> {
        GridSurface::new(
            *grid.window(),
            grid.nx(),
            grid.ny(),
            grid.nodes().iter().map(|p| self.value(*p)).collect(),
        )
    }
}

/// `ω ↦ amplitude · exp(−scale · d(ω, targets))`; empty targets give zero.
pub fn decay_surface(targets: DecayTargets, scale: f64, amplitude: f64) -> Result<Surface, SurfaceError> {
    if !(scale > 0.0) {
        return Err(SurfaceError::NonPositiveScale(scale));
    }
    if targets.is_empty() {
        return Ok(Surface::zero());
    }
    Ok(Surface::Decay(Arc::new(DecaySurface {
        targets,
        scale,
        amplitude,
    })))
}

pub fn point_decay(points: &[Point], scale: f64, amplitude: f64) -> Result<Surface, SurfaceError> {
    decay_surface(DecayTargets::Points(points.into()), scale, amplitude)
}

/// `λ(ω) = exp(β · X(ω))` with `X_0 ≡ 1`.
#[derive(Debug, Clone)]
pub struct LogLinearIntensity {
    coefficients: Vec<f64>,
    features: Vec<Surface>,
}

impl LogLinearIntensity {
    /// `features` excludes the intercept, which is prepended.
    pub fn new(intercept: f64, slopes: Vec<f64>, features: Vec<Surface>) -> Result<Self, SurfaceError> {
        if slopes.len() != features.len() {
            return Err(SurfaceError::LengthMismatch {
                coefficients: slopes.len() + 1,
                features: features.len() + 1,
            });
        }
        let mut coefficients = Vec::with_capacity(slopes.len() + 1);
        coefficients.push(intercept);
        coefficients.extend(slopes);
        let mut all = Vec::with_capacity(features.len() + 1);
        all.push(Surface::Constant(1.0));
        all.extend(features);
        Ok(LogLinearIntensity {
            coefficients,
            features: all,
        })
    }

    /// Full coefficient vector and feature list, the first feature being
    /// the constant one.
    pub fn from_parts(coefficients: Vec<f64>, features: Vec<Surface>) -> Result<Self, SurfaceError> {
        if coefficients.len() != features.len() || features.is_empty() {
            return Err(SurfaceError::LengthMismatch {
                coefficients: coefficients.len(),
                features: features.len(),
            });
        }
        Ok(LogLinearIntensity { coefficients, features })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn features(&self) -> &[Surface] {
        &self.features
    }

    #[inline]
    pub fn log_value(&self, p: Point) -> f64 {
        let mut acc = 0.0;
        for (b, f) in self.coefficients.iter().zip(&self.features) {
            if *b != 0.0 {
                acc += b * f.value(p);
            }
        }
        acc
    }

    #[inline]
    pub fn value(&self, p: Point) -> f64 {
        self.log_value(p).exp()
    }

    /// `Some(λ)` when every feature with a nonzero coefficient is constant.
    pub fn constant_value(&self) -> Option<f64> {
        let mut acc = 0.0;
        for (b, f) in self.coefficients.iter().zip(&self.features) {
            if *b != 0.0 {
                acc += b * f.constant_value()?;
            }
        }
        Some(acc.exp())
    }
}

/// Something that can be integrated over a region.
pub trait Integrand {
    fn eval(&self, p: Point) -> f64;

    fn constant(&self) -> Option<f64> {
        None
    }
}

impl Integrand for Surface {
    fn eval(&self, p: Point) -> f64 {
        self.value(p)
    }

    fn constant(&self) -> Option<f64> {
        self.constant_value()
    }
}

impl Integrand for LogLinearIntensity {
    fn eval(&self, p: Point) -> f64 {
        self.value(p)
    }

    fn constant(&self) -> Option<f64> {
        self.constant_value()
    }
}

impl<F: Fn(Point) -> f64> Integrand for F {
    fn eval(&self, p: Point) -> f64 {
        self(p)
    }
}

/// Midpoint lattice over a window; every node carries its cell's area.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    window: Window,
    nx: usize,
    ny: usize,
    cell_area: f64,
    nodes: Vec<Point>,
}

impl QuadratureGrid {
    pub const DEFAULT_RESOLUTION: usize = 128;

    pub fn new(window: Window, nx: usize, ny: usize) -> Result<Self, SurfaceError> {
        if nx == 0 || ny == 0 {
            return Err(SurfaceError::EmptyGrid { nx, ny });
        }
        let b = window.bounds();
        let dx = b.width() / nx as f64;
        let dy = b.height() / ny as f64;
        let mut nodes = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = b.y0 + (j as f64 + 0.5) * dy;
            for i in 0..nx {
                nodes.push(Point::new(b.x0 + (i as f64 + 0.5) * dx, y));
            }
        }
        Ok(QuadratureGrid {
            window,
            nx,
            ny,
            cell_area: dx * dy,
            nodes,
        })
    }

    pub fn default_for(window: Window) -> Self {
        QuadratureGrid::new(window, Self::DEFAULT_RESOLUTION, Self::DEFAULT_RESOLUTION).expect("nonzero resolution")
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub fn weight(&self, _node: usize) -> f64 {
        self.cell_area
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&vec![self.cell_area; self.nodes.len()])
    }

    /// Half of the cell diagonal: every point of the window lies within this
    /// distance of some node.
    pub fn half_diagonal(&self) -> f64 {
        let b = self.window.bounds();
        0.5 * ((b.width() / self.nx as f64).powi(2) + (b.height() / self.ny as f64).powi(2)).sqrt()
    }

    /// Indices of nodes inside `region`.
    pub fn nodes_in(&self, region: &Region) -> Vec<usize> {
        if region.is_whole_window() && region.window() == &self.window {
            return (0..self.nodes.len()).collect();
        }
        (0..self.nodes.len())
            .filter(|&i| region.contains(self.nodes[i]))
            .collect()
    }

    /// `Σ_nodes weight · values[node]` for values already evaluated on every node.
    pub fn sum_nodes(&self, values: &[f64]) -> f64 {
        pairwise_sum(values) * self.cell_area
    }

    fn covers(&self, region: &Region) -> bool {
        let b = self.window.bounds();
        region.parts().iter().all(|r: &Rect| b.contains_rect(r))
    }
}

/// Quadrature of `f` over `region`: `Σ_{nodes in region} weight · f(node)`.
/// Constant integrands are integrated exactly.
pub fn integrate<F: Integrand + ?Sized>(f: &F, region: &Region, grid: &QuadratureGrid) -> Result<f64, SurfaceError> {
    if !grid.covers(region) {
        return Err(SurfaceError::GridDoesNotCover);
    }
    if let Some(c) = f.constant() {
        return Ok(c * region.area());
    }
    let values: Vec<f64> = grid
        .nodes_in(region)
        .into_iter()
        .map(|i| f.eval(grid.nodes[i]))
        .collect();
    Ok(grid.sum_nodes(&values))
}

/// Maximum of `f` over the grid's nodes.
pub fn node_max<F: Integrand + ?Sized>(f: &F, grid: &QuadratureGrid) -> f64 {
    if let Some(c) = f.constant() {
        return c;
    }
    grid.nodes.iter().map(|p| f.eval(*p)).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Serialize, Deserialize)]
struct RasterHeader {
    nx: usize,
    ny: usize,
    window: Rect,
}

/// Sidecar path holding `nx`, `ny` and window bounds for a raster CSV.
pub fn raster_header_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `ix,iy,value` rows plus the JSON sidecar header.
pub fn write_raster(path: &Path, raster: &GridSurface) -> Result<(), SurfaceError> {
    let io = |source| SurfaceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::from("ix,iy,value\n");
    for iy in 0..raster.ny {
        for ix in 0..raster.nx {
            out.push_str(&format!("{ix},{iy},{}\n", raster.values[iy * raster.nx + ix]));
        }
    }
    fs::write(path, out).map_err(io)?;
    let header = RasterHeader {
        nx: raster.nx,
        ny: raster.ny,
        window: raster.window.bounds(),
    };
    let hp = raster_header_path(path);
    fs::write(&hp, serde_json::to_string_pretty(&header).expect("header serializes")).map_err(|source| {
        SurfaceError::Io { path: hp.clone(), source }
    })
}

pub fn read_raster(path: &Path) -> Result<GridSurface, SurfaceError> {
    let hp = raster_header_path(path);
    let header_text = fs::read_to_string(&hp).map_err(|source| SurfaceError::Io {
        path: hp.clone(),
        source,
    })?;
    let header: RasterHeader =
        serde_json::from_str(&header_text).map_err(|e| SurfaceError::Raster(format!("{}: {e}", hp.display())))?;
    let window = Window::new(header.window.x0, header.window.y0, header.window.x1, header.window.y1)?;
    let mut values = vec![f64::NAN; header.nx * header.ny];
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| SurfaceError::Raster(format!("{}: {e}", path.display())))?;
    let hdr = reader
        .headers()
        .map_err(|e| SurfaceError::Raster(e.to_string()))?
        .clone();
    if hdr.iter().collect::<Vec<_>>() != ["ix", "iy", "value"] {
        return Err(SurfaceError::Raster(format!("expected header ix,iy,value, got {:?}", hdr)));
    }
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| SurfaceError::Raster(format!("row {}: {e}", row + 2)))?;
        let parse = |k: usize| -> Result<&str, SurfaceError> {
            rec.get(k)
                .ok_or_else(|| SurfaceError::Raster(format!("row {}: missing column {k}", row + 2)))
        };
        let ix: usize = parse(0)?
            .trim()
            .parse()
            .map_err(|_| SurfaceError::Raster(format!("row {}: bad ix", row + 2)))?;
        let iy: usize = parse(1)?
            .trim()
            .parse()
            .map_err(|_| SurfaceError::Raster(format!("row {}: bad iy", row + 2)))?;
        let v: f64 = parse(2)?
            .trim()
            .parse()
            .map_err(|_| SurfaceError::Raster(format!("row {}: bad value", row + 2)))?;
        if ix >= header.nx || iy >= header.ny {
            return Err(SurfaceError::Raster(format!("row {}: index ({ix},{iy}) out of range", row + 2)));
        }
        values[iy * header.nx + ix] = v;
    }
    GridSurface::new(window, header.nx, header.ny, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Segment;

    fn unit() -> Window {
        Window::unit_square()
    }

    #[test]
    fn decay_examples() {
        let w = unit();
        let road = SegmentSet::new(
            &w,
            vec![Segment::Line {
                a: Point::new(0.0, 0.5),
                b: Point::new(1.0, 0.5),
            }],
        )
        .unwrap();
        let s = decay_surface(DecayTargets::Segments(Arc::new(road)), 2.0, 1.2).unwrap();
        assert_eq!(s.value(Point::new(0.3, 0.5)), 1.2);
        let s = point_decay(&[Point::new(0.0, 0.0)], 2.0, 1.0).unwrap();
        assert!((s.value(Point::new(0.3, 0.4)) - (-1.0f64).exp()).abs() < 1e-15);
        let s = point_decay(&[], 2.0, 1.0).unwrap();
        assert_eq!(s.value(Point::new(0.1, 0.1)), 0.0);
        assert!(matches!(point_decay(&[], 0.0, 1.0), Err(SurfaceError::NonPositiveScale(_))));
    }

    #[test]
    fn constant_integrals() {
        let w = unit();
        let g = QuadratureGrid::default_for(w);
        assert!((g.total_weight() - 1.0).abs() < 1e-12);
        let five = Surface::Constant(5.0);
        assert!((integrate(&five, &Region::whole(w), &g).unwrap() - 5.0).abs() < 1e-12);
        let b = Region::rect(w, 0.0, 0.0, 0.5, 0.5).unwrap();
        assert!((integrate(&five, &b, &g).unwrap() - 1.25).abs() < 1e-12);
        // same through the node sum (non-constant wrapper)
        let f = |_: Point| 5.0;
        assert!((integrate(&f, &b, &g).unwrap() - 1.25).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_integrates_exactly_at_any_resolution() {
        let w = unit();
        let region = Region::rect(w, 0.1, 0.2, 0.73, 0.9).unwrap();
        let lam = LogLinearIntensity::new(0.7, vec![0.0], vec![point_decay(&[Point::new(0.5, 0.5)], 2.0, 1.0).unwrap()]).unwrap();
        for n in [3, 17, 64] {
            let g = QuadratureGrid::new(w, n, n).unwrap();
            assert_eq!(integrate(&lam, &region, &g).unwrap(), 0.7f64.exp() * region.area());
        }
    }

    #[test]
    fn refinement_reduces_error_monotonically() {
        let w = unit();
        let exact = std::f64::consts::E * (std::f64::consts::E - 1.0);
        let f = |p: Point| (1.0 + p.x).exp();
        let mut last = f64::INFINITY;
        for n in [8, 16, 32, 64, 128, 256] {
            let g = QuadratureGrid::new(w, n, n).unwrap();
            let err = (integrate(&f, &Region::whole(w), &g).unwrap() - exact).abs();
            assert!(err < last, "n={n} err={err} last={last}");
            last = err;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn integration_is_linear() {
        let w = unit();
        let g = QuadratureGrid::new(w, 64, 64).unwrap();
        let a = point_decay(&[Point::new(0.2, 0.3), Point::new(0.9, 0.1)], 2.0, 1.0).unwrap();
        let b = Surface::gaussian(Point::new(0.5, 0.5), 10.0);
        let region = Region::rect(w, 0.0, 0.25, 0.8, 1.0).unwrap();
        let combo = Surface::sum(vec![a.clone().scaled(2.5), b.clone().scaled(-0.7)]);
        let lhs = integrate(&combo, &region, &g).unwrap();
        let rhs = 2.5 * integrate(&a, &region, &g).unwrap() - 0.7 * integrate(&b, &region, &g).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn grid_surface_interpolates_and_round_trips() {
        let w = unit();
        let g = GridSurface::from_fn(w, 8, 4, |p| 2.0 * p.x + 3.0 * p.y).unwrap();
        // bilinear reproduces affine fields between the outer centres
        let p = Point::new(0.41, 0.52);
        assert!((g.value(p) - (2.0 * p.x + 3.0 * p.y)).abs() < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_raster(&path, &g).unwrap();
        let back = read_raster(&path).unwrap();
        assert_eq!(back.resolution(), (8, 4));
        assert_eq!(back.values(), g.values());
    }
}
