/// Points with nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn dirac(x: &[f64]) -> Self {
        WeightedSample {
            dim: x.len(),
            points: x.to_vec(),
            weights: vec![1.0],
        }
    }

    /// Shifts every point by `shift`.
    pub fn shifted(&self, shift: &[f64]) -> Self {
        let mut s = self.clone();
        for p in s.points.chunks_mut(self.dim) {
            p.iter_mut().zip(shift).for_each(|(a, b)| *a += b);
        }
        s
    }
}

/// Nodes per axis and half-width of the box used for one- and
/// two-dimensional standard Gaussian rules.
pub const GAUSSIAN_RULE_1D: (usize, f64) = (40_000, 10.0);
pub const GAUSSIAN_RULE_2D: (usize, f64) = (600, 8.0);

/// Midpoint rule for `N(0, I_dim)` on the box `[-half_width, half_width]^dim`
/// with `n` nodes per axis, weights proportional to the density.
///
/// Voronoi cell integrals have kinks and jumps at cell boundaries, where a
/// dense midpoint rule is far more accurate than a Gauss-Hermite rule of
/// moderate degree. With `n` even the origin is a panel edge, so symmetric
/// cells are integrated to second order. On a discrete target the Lloyd
/// fixed point is only pinned down to within one node spacing, hence the
/// fine spacing in one dimension.
pub fn gaussian_midpoint_rule(dim: usize, n: usize, half_width: f64) -> WeightedSample {
    let h = 2.0 * half_width / n as f64;
    let nodes: Vec<f64> = (0..n).map(|i| -half_width + h * (i as f64 + 0.5)).collect();
    let dens: Vec<f64> = nodes.iter().map(|x| (-0.5 * x * x).exp()).collect();
    let total = n.pow(dim as u32);
    let mut points = Vec::with_capacity(total * dim);
    let mut weights = Vec::with_capacity(total);
    for k in 0..total {
        let mut rem = k;
        let start = points.len();
        points.resize(start + dim, 0.0);
        let mut w = 1.0;
        for axis in (0..dim).rev() {
            let i = rem % n;
            rem /= n;
            points[start + axis] = nodes[i];
            w *= dens[i];
        }
        weights.push(w);
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    WeightedSample { dim, points, weights }
}

/// The default rule for a standard Gaussian of dimension one or two.
pub fn standard_gaussian_rule(dim: usize) -> WeightedSample {
    let (n, half_width) = if dim == 1 { GAUSSIAN_RULE_1D } else { GAUSSIAN_RULE_2D };
    gaussian_midpoint_rule(dim, n, half_width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_gaussian_moments() {
        let r = standard_gaussian_rule(1);
        let m = |p: i32| (0..r.len()).map(|k| r.weights[k] * r.point(k)[0].powi(p)).sum::<f64>();
        assert!(m(1).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-6);
        assert!((m(4) - 3.0).abs() < 1e-5);
    }

    #[test]
    fn half_line_mean_is_accurate() {
        let r = standard_gaussian_rule(1);
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..r.len() {
            let x = r.point(k)[0];
            if x > 0.0 {
                num += r.weights[k] * x;
                den += r.weights[k];
            }
        }
        assert!((num / den - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn two_dimensional_rule_has_identity_covariance() {
        let r = gaussian_midpoint_rule(2, 200, 8.0);
        let c01: f64 = (0..r.len()).map(|k| r.weights[k] * r.point(k)[0] * r.point(k)[1]).sum();
        let c11: f64 = (0..r.len()).map(|k| r.weights[k] * r.point(k)[1].powi(2)).sum();
        assert!(c01.abs() < 1e-13);
        assert!((c11 - 1.0).abs() < 1e-4);
    }
}
