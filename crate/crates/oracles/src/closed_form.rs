//! Reference formulas written straight from their definitions. Nothing in
//! this module calls into the engine.

use std::f64::consts::SQRT_2;

/// Log density of a Poisson process relative to the unit-rate process:
/// `|Ω| − ∫λ + Σ log λ(s)`.
pub fn poisson_log_density(area: f64, integral: f64, log_intensities: &[f64]) -> f64 {
    let mut acc = area - integral;
    for l in log_intensities {
        acc += l;
    }
    acc
}

/// Homogeneous rate `h` on a window of the given area with `n` points.
pub fn homogeneous_log_density(h: f64, area: f64, n: usize) -> f64 {
    if n == 0 {
        return area - h * area;
    }
    area - h * area + n as f64 * h.ln()
}

/// `∫∫ exp(c + a·x) dx dy` over `[x0, x1] × [y0, y1]`.
pub fn exp_linear_integral(c: f64, a: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let xs = if a == 0.0 {
        x1 - x0
    } else {
        ((a * x1).exp() - (a * x0).exp()) / a
    };
    c.exp() * xs * (y1 - y0)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Inverse of [`normal_cdf`] by bisection.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0, 1)");
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mass of an isotropic Gaussian at `(px, py)` with sd `sigma` over a
/// rectangle.
pub fn gaussian_rect_mass(px: f64, py: f64, sigma: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let side = |p: f64, a: f64, b: f64| normal_cdf((b - p) / sigma) - normal_cdf((a - p) / sigma);
    side(px, x0, x1) * side(py, y0, y1)
}

/// Mass of a planar Gaussian of precision `alpha` inside a disc of radius
/// `r` about its centre.
pub fn gaussian_disc_mass(alpha: f64, r: f64) -> f64 {
    1.0 - (-alpha * r * r / 2.0).exp()
}

/// Scott's factor `n^(-1/6)` times a sample sd.
pub fn scott(n: usize, sd: f64) -> f64 {
    (n as f64).powf(-1.0 / 6.0) * sd
}

/// Sample sd with the `n − 1` divisor.
pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Midpoint rule on an `n × n` lattice, one function call per node.
pub fn naive_integral(f: impl Fn(f64, f64) -> f64, x0: f64, x1: f64, y0: f64, y1: f64, n: usize) -> f64 {
    let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let mut total = 0.0;
    for j in 0..n {
        let y = y0 + (j as f64 + 0.5) * dy;
        let mut row = 0.0;
        for i in 0..n {
            row += f(x0 + (i as f64 + 0.5) * dx, y);
        }
        total += row;
    }
    total * dx * dy
}

pub const NAIVE_RESOLUTION: usize = 1024;

/// Gaussian kernel density at offset `(dx, dy)`, sd `sigma` per axis.
pub fn gaussian_density(dx: f64, dy: f64, sx: f64, sy: f64) -> f64 {
    (-0.5 * ((dx / sx).powi(2) + (dy / sy).powi(2))).exp() / (2.0 * std::f64::consts::PI * sx * sy)
}

/// Plain mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Quartile by linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_table() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn naive_integral_of_exp() {
        let e = std::f64::consts::E;
        let v = naive_integral(|x, _| (1.0 + x).exp(), 0.0, 1.0, 0.0, 1.0, 256);
        assert!((v - e * (e - 1.0)).abs() < 1e-4);
    }
}
