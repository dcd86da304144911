//! Stochastic interventions: Poisson process laws over treatment patterns and
//! their densities.

use rand::Rng;
use thiserror::Error;

use crate::geom::{Point, PointPattern, Region, Window};
use crate::pointprocess::{PointProcessError, PoissonProcess};
use crate::surfaces::{integrate, QuadratureGrid, Surface, SurfaceError};

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum InterventionError {
    #[error("intervention parameter {name} must be nonnegative and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("baseline density integrates to {integral}, not 1")]
    NotNormalized { integral: f64 },
    #[error("baseline has no mass near the focal point")]
    DegenerateFocus,
    #[error("baseline has zero mass {0} the region")]
    DegenerateRegion(&'static str),
    #[error("intervention sequence must cover at least one period")]
    EmptySequence,
    #[error("sequence covers {expected} periods but {got} patterns were given")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    PointProcess(#[from] PointProcessError),
}

/// A Poisson process law `F_h` with its expected count `∫ h`.
#[derive(Debug, Clone)]
pub struct Intervention {
    intensity: Surface,
    expected_count: f64,
    window: Window,
}

impl Intervention {
    pub fn homogeneous(h: f64, window: Window) -> Result<Self, InterventionError> {
        check("h", h)?;
        Ok(Intervention {
            intensity: Surface::Constant(h),
            expected_count: h * window.area(),
            window,
        })
    }

    /// `c · φ0` for a baseline density `φ0`.
    pub fn scaled_baseline(c: f64, baseline: &Surface, grid: &QuadratureGrid) -> Result<Self, InterventionError> {
        check("c", c)?;
        let mass = baseline_mass(baseline, grid)?;
        let intensity = baseline.clone().scaled(c);
        Ok(Intervention {
            expected_count: c * mass,
            intensity,
            window: *grid.window(),
        })
    }

    /// `c_α · φ0 · d_α` with `d_α` the Gaussian density of precision `α`
    /// centred on `focus`, and `c_α` chosen so the expected count is `c`.
    pub fn focal(c: f64, baseline: &Surface, focus: Point, precision: f64, grid: &QuadratureGrid) -> Result<Self, InterventionError> {
        check("c", c)?;
        check("precision", precision)?;
        if precision == 0.0 {
            return Intervention::scaled_baseline(c, baseline, grid);
        }
        baseline_mass(baseline, grid)?;
        let shape = Surface::product(vec![baseline.clone(), Surface::gaussian(focus, precision)]);
        let whole = Region::whole(*grid.window());
        let mass = integrate(&shape, &whole, grid)?;
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(InterventionError::DegenerateFocus);
        }
        let intensity = shape.scaled(c / mass);
        let expected_count = integrate(&intensity, &whole, grid)?;
        Ok(Intervention {
            intensity,
            expected_count,
            window: *grid.window(),
        })
    }

    /// Baseline-shaped intensity with expected count `c_inside` in `region`
    /// and `c_outside` on its complement.
    pub fn local(region: &Region, c_inside: f64, c_outside: f64, baseline: &Surface, grid: &QuadratureGrid) -> Result<Self, InterventionError> {
        check("c_inside", c_inside)?;
        check("c_outside", c_outside)?;
        let total = baseline_mass(baseline, grid)?;
        let inside = integrate(baseline, region, grid)?;
        let outside = total - inside;
        if c_inside > 0.0 && !(inside > 0.0) {
            return Err(InterventionError::DegenerateRegion("inside"));
        }
        if c_outside > 0.0 && !(outside > 0.0) {
            return Err(InterventionError::DegenerateRegion("outside"));
        }
        let side = |c: f64, m: f64| if c == 0.0 { Surface::zero() } else { baseline.clone().scaled(c / m) };
        let (a, b) = (side(c_inside, inside), side(c_outside, outside));
        let intensity = match (a.constant_value(), b.constant_value()) {
            (Some(x), Some(y)) if x == y => Surface::Constant(x),
            _ => Surface::piecewise(region.clone(), a, b),
        };
        let expected_count = integrate(&intensity, &Region::whole(*grid.window()), grid)?;
        Ok(Intervention {
            intensity,
            expected_count,
            window: *grid.window(),
        })
    }

    pub fn intensity(&self) -> &Surface {
        &self.intensity
    }

    pub fn expected_count(&self) -> f64 {
        self.expected_count
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn is_null(&self) -> bool {
        self.intensity.constant_value() == Some(0.0)
    }

    pub fn process(&self, grid: &QuadratureGrid) -> Result<PoissonProcess, InterventionError> {
        Ok(PoissonProcess::new(self.intensity.clone(), grid)?)
    }

    pub fn sample<R: Rng + ?Sized>(&self, timestamp: u32, grid: &QuadratureGrid, rng: &mut R) -> Result<PointPattern, InterventionError> {
        Ok(self.process(grid)?.sample(timestamp, rng)?)
    }

    /// `log f_h(w)` relative to the unit-rate process, using the
    /// precomputed expected count.
    pub fn log_density(&self, pattern: &PointPattern) -> Result<f64, PointProcessError> {
        self.log_density_points(pattern.points())
    }

    /// As [`Intervention::log_density`] for bare points inside the window.
    pub fn log_density_points(&self, points: &[Point]) -> Result<f64, PointProcessError> {
        let mut acc = self.window.area() - self.expected_count;
        if let Some(h) = self.intensity.constant_value() {
            if points.is_empty() {
                return Ok(acc);
            }
            if h == 0.0 {
                let p = points[0];
                return Err(PointProcessError::DensityZero { x: p.x, y: p.y });
            }
            return Ok(acc + points.len() as f64 * h.ln());
        }
        for p in points {
            let h = self.intensity.value(*p);
            if !(h > 0.0) {
                return Err(PointProcessError::DensityZero { x: p.x, y: p.y });
            }
            acc += h.ln();
        }
        Ok(acc)
    }
}

fn check(name: &'static str, value: f64) -> Result<(), InterventionError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(InterventionError::InvalidParameter { name, value })
    }
}

fn baseline_mass(baseline: &Surface, grid: &QuadratureGrid) -> Result<f64, InterventionError> {
    let integral = integrate(baseline, &Region::whole(*grid.window()), grid)?;
    if (integral - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(InterventionError::NotNormalized { integral });
    }
    Ok(integral)
}

/// The uniform probability density on a window.
pub fn uniform_baseline(window: &Window) -> Surface {
    Surface::Constant(1.0 / window.area())
}

/// Per-period interventions; slot 0 is the evaluated period `t`, slot `j`
/// period `t − j`.
#[derive(Debug, Clone)]
pub struct InterventionSequence {
    slots: Vec<Intervention>,
}

impl InterventionSequence {
    pub fn new(slots: Vec<Intervention>) -> Result<Self, InterventionError> {
        if slots.is_empty() {
            return Err(InterventionError::EmptySequence);
        }
        Ok(InterventionSequence { slots })
    }

    /// `F_h^M`: the same law at every period.
    pub fn iid(intervention: Intervention, m: usize) -> Result<Self, InterventionError> {
        InterventionSequence::new(vec![intervention; m])
    }

    /// `earliest` at period `t − M + 1` and `rest` at the `M − 1` later
    /// periods.
    pub fn lagged(earliest: Intervention, rest: Intervention, m: usize) -> Result<Self, InterventionError> {
        if m == 0 {
            return Err(InterventionError::EmptySequence);
        }
        let mut slots = vec![rest; m - 1];
        slots.push(earliest);
        InterventionSequence::new(slots)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Intervention] {
        &self.slots
    }

    /// Law for the period `lag` periods before the evaluated one.
    pub fn at_lag(&self, lag: usize) -> &Intervention {
        &self.slots[lag]
    }
}

/// `Σ_j log f_{h_j}(w_j)` with `patterns[j]` matched to slot `j`.
pub fn sequence_log_density(seq: &InterventionSequence, patterns: &[&PointPattern]) -> Result<f64, InterventionError> {
    if patterns.len() != seq.len() {
        return Err(InterventionError::LengthMismatch {
            expected: seq.len(),
            got: patterns.len(),
        });
    }
    let mut acc = 0.0;
    for (h, w) in seq.slots.iter().zip(patterns) {
        acc += h.log_density(w)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use crate::smooth::baseline_density;

    fn unit() -> Window {
        Window::unit_square()
    }

    fn grid() -> QuadratureGrid {
        QuadratureGrid::default_for(unit())
    }

    fn smoothed_baseline(g: &QuadratureGrid) -> Surface {
        let pts = vec![
            Point::new(0.2, 0.3),
            Point::new(0.25, 0.35),
            Point::new(0.7, 0.8),
            Point::new(0.6, 0.2),
            Point::new(0.4, 0.5),
            Point::new(0.3, 0.9),
        ];
        baseline_density(&PointPattern::new(unit(), 1, pts).unwrap(), g).unwrap()
    }

    #[test]
    fn homogeneous_examples() {
        assert_eq!(Intervention::homogeneous(5.0, unit()).unwrap().expected_count(), 5.0);
        let w2 = Window::new(0.0, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(Intervention::homogeneous(3.0, w2).unwrap().expected_count(), 6.0);
        let null = Intervention::homogeneous(0.0, unit()).unwrap();
        assert!(null.is_null());
        let mut rng = SeedTree::new(1).stream();
        for _ in 0..50 {
            assert!(null.sample(1, &grid(), &mut rng).unwrap().is_empty());
        }
        assert!(Intervention::homogeneous(-1.0, unit()).is_err());
    }

    #[test]
    fn scaled_baseline_examples() {
        let g = grid();
        let uni = uniform_baseline(&unit());
        let a = Intervention::scaled_baseline(3.0, &uni, &g).unwrap();
        assert_eq!(a.intensity().constant_value(), Some(3.0));
        let phi = smoothed_baseline(&g);
        let one = Intervention::scaled_baseline(1.0, &phi, &g).unwrap();
        let six = Intervention::scaled_baseline(6.0, &phi, &g).unwrap();
        for p in [Point::new(0.1, 0.1), Point::new(0.5, 0.6), Point::new(0.95, 0.3)] {
            assert!((six.intensity().value(p) - 6.0 * one.intensity().value(p)).abs() <= 1e-12 * six.intensity().value(p));
        }
        assert!((six.expected_count() - 6.0).abs() < 1e-3);
        match Intervention::scaled_baseline(1.0, &Surface::Constant(2.0), &g) {
            Err(InterventionError::NotNormalized { integral }) => assert!((integral - 2.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn focal_examples() {
        let g = grid();
        let phi = smoothed_baseline(&g);
        let flat = Intervention::focal(4.0, &phi, Point::new(0.5, 0.5), 0.0, &g).unwrap();
        let base = Intervention::scaled_baseline(4.0, &phi, &g).unwrap();
        let p = Point::new(0.33, 0.71);
        assert_eq!(flat.intensity().value(p), base.intensity().value(p));
        for alpha in [0.5, 5.0, 50.0, 500.0] {
            let f = Intervention::focal(4.0, &phi, Point::new(0.3, 0.4), alpha, &g).unwrap();
            assert!((f.expected_count() - 4.0).abs() < 1e-6, "{alpha}");
        }
    }

    #[test]
    fn focal_concentrates_like_a_gaussian() {
        // mass of an isotropic Gaussian within 3/√α is 1 − exp(−4.5)
        let fine = QuadratureGrid::new(unit(), 512, 512).unwrap();
        let alpha = 400.0;
        let centre = Point::new(0.5, 0.5);
        let f = Intervention::focal(1.0, &uniform_baseline(&unit()), centre, alpha, &fine).unwrap();
        let r = 3.0 / alpha.sqrt();
        let inside = |q: Point| if q.dist(centre) <= r { f.intensity().value(q) } else { 0.0 };
        let mass = integrate(&inside, &Region::whole(unit()), &fine).unwrap();
        assert!((mass - (1.0 - (-4.5f64).exp())).abs() < 2e-3, "{mass}");
    }

    #[test]
    fn focal_is_continuous_in_alpha() {
        let g = QuadratureGrid::new(unit(), 64, 64).unwrap();
        let phi = smoothed_baseline(&g);
        for alpha in [0.0, 1.0, 20.0] {
            let a = Intervention::focal(3.0, &phi, Point::new(0.6, 0.4), alpha, &g).unwrap();
            let b = Intervention::focal(3.0, &phi, Point::new(0.6, 0.4), alpha + 1e-4, &g).unwrap();
            for p in [Point::new(0.1, 0.2), Point::new(0.6, 0.4), Point::new(0.9, 0.9)] {
                let (x, y) = (a.intensity().value(p), b.intensity().value(p));
                assert!((x - y).abs() < 1e-3 * x.max(1e-3), "alpha {alpha}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn local_examples() {
        let g = grid();
        let half = Region::rect(unit(), 0.0, 0.0, 0.5, 1.0).unwrap();
        let uni = uniform_baseline(&unit());
        let same = Intervention::local(&half, 2.0, 2.0, &uni, &g).unwrap();
        assert_eq!(same.intensity().constant_value(), Some(4.0));
        assert_eq!(same.expected_count(), 4.0);

        let phi = smoothed_baseline(&g);
        let corner = Region::rect(unit(), 0.0, 0.0, 0.5, 0.5).unwrap();
        let a = Intervention::local(&corner, 1.0, 3.0, &phi, &g).unwrap();
        let b = Intervention::local(&corner, 4.0, 3.0, &phi, &g).unwrap();
        assert!((integrate(a.intensity(), &corner, &g).unwrap() - 1.0).abs() < 1e-6);
        assert!((integrate(b.intensity(), &corner, &g).unwrap() - 4.0).abs() < 1e-6);
        for p in [Point::new(0.7, 0.2), Point::new(0.2, 0.8), Point::new(0.9, 0.9)] {
            assert_eq!(a.intensity().value(p), b.intensity().value(p));
        }
    }

    #[test]
    fn expected_counts_match_quadrature() {
        let g = grid();
        let phi = smoothed_baseline(&g);
        let whole = Region::whole(unit());
        let region = Region::rect(unit(), 0.25, 0.25, 0.75, 0.6).unwrap();
        for iv in [
            Intervention::homogeneous(3.5, unit()).unwrap(),
            Intervention::scaled_baseline(2.0, &phi, &g).unwrap(),
            Intervention::focal(5.0, &phi, Point::new(0.2, 0.8), 30.0, &g).unwrap(),
            Intervention::local(&region, 1.0, 2.5, &phi, &g).unwrap(),
        ] {
            assert!((iv.expected_count() - integrate(iv.intensity(), &whole, &g).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn sampling_reproduces_expected_count() {
        let g = grid();
        let phi = smoothed_baseline(&g);
        let iv = Intervention::focal(4.0, &phi, Point::new(0.4, 0.4), 10.0, &g).unwrap();
        let proc = iv.process(&g).unwrap();
        let mut rng = SeedTree::new(3).stream();
        let n = 10_000;
        let total: usize = (0..n).map(|_| proc.sample(1, &mut rng).unwrap().len()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 4.0).abs() < 3.0 * (4.0f64 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn sequence_densities() {
        let g = grid();
        let empty = PointPattern::empty(unit(), 1);
        let h3 = Intervention::homogeneous(3.0, unit()).unwrap();
        let seq1 = InterventionSequence::iid(h3.clone(), 1).unwrap();
        let pat = PointPattern::new(unit(), 1, vec![Point::new(0.3, 0.3)]).unwrap();
        let direct = h3.process(&g).unwrap().log_density(&pat, &g).unwrap().0;
        assert!((sequence_log_density(&seq1, &[&pat]).unwrap() - direct).abs() < 1e-12);

        let seq = InterventionSequence::iid(h3, 4).unwrap();
        assert!((sequence_log_density(&seq, &[&empty; 4]).unwrap() - 4.0 * (1.0 - 3.0)).abs() < 1e-12);

        let phi = smoothed_baseline(&g);
        let a = Intervention::focal(2.0, &phi, Point::new(0.5, 0.5), 8.0, &g).unwrap();
        let b = Intervention::homogeneous(6.0, unit()).unwrap();
        let p2 = PointPattern::new(unit(), 2, vec![Point::new(0.6, 0.1), Point::new(0.2, 0.2)]).unwrap();
        let ab = InterventionSequence::new(vec![a.clone(), b.clone()]).unwrap();
        let ba = InterventionSequence::new(vec![b, a]).unwrap();
        let x = sequence_log_density(&ab, &[&pat, &p2]).unwrap();
        let y = sequence_log_density(&ba, &[&p2, &pat]).unwrap();
        assert!((x - y).abs() < 1e-12);

        let lag = InterventionSequence::lagged(
            Intervention::homogeneous(7.0, unit()).unwrap(),
            Intervention::homogeneous(5.0, unit()).unwrap(),
            3,
        )
        .unwrap();
        assert_eq!(lag.at_lag(0).expected_count(), 5.0);
        assert_eq!(lag.at_lag(2).expected_count(), 7.0);
        assert!(matches!(
            sequence_log_density(&lag, &[&empty]),
            Err(InterventionError::LengthMismatch { .. })
        ));
    }
}
