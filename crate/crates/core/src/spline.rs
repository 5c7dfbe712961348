//! Clamped cubic splines and joint-space paths `q(s)`.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Clamped cubic spline through `(s_i, y_i)` stored by its knot second
/// derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    s: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

/// Value and first three derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineSample {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

fn default_slopes(s: &[f64], y: &[f64]) -> (f64, f64) {
    let n = s.len();
    if n == 2 {
        let m = (y[1] - y[0]) / (s[1] - s[0]);
        return (m, m);
    }
    // Three-point one-sided differences on a possibly uneven grid.
    let one_sided = |y0: f64, y1: f64, y2: f64, h1: f64, h2: f64| {
        -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * y0 + (h1 + h2) / (h1 * h2) * y1 - h1 / (h2 * (h1 + h2)) * y2
    };
    let start = one_sided(y[0], y[1], y[2], s[1] - s[0], s[2] - s[1]);
    let end = -one_sided(y[n - 1], y[n - 2], y[n - 3], s[n - 1] - s[n - 2], s[n - 2] - s[n - 3]);
    (start, end)
}

impl CubicSpline {
    /// Builds the spline; end slopes default to one-sided differences.
    pub fn new(s: &[f64], y: &[f64], start_slope: Option<f64>, end_slope: Option<f64>) -> Result<Self> {
        let n = s.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidInput(format!(
                "spline needs at least two matching knots, got {} positions and {} values",
                n,
                y.len()
            )));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) || s.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("spline grid must be finite and strictly increasing".into()));
        }
        let (d0, dn) = default_slopes(s, y);
        let (d0, dn) = (start_slope.unwrap_or(d0), end_slope.unwrap_or(dn));

        let h: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = 2.0 * h[0];
        sup[0] = h[0];
        rhs[0] = 6.0 * ((y[1] - y[0]) / h[0] - d0);
        for i in 1..n - 1 {
            sub[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            sup[i] = h[i];
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        sub[n - 1] = h[n - 2];
        diag[n - 1] = 2.0 * h[n - 2];
        rhs[n - 1] = 6.0 * (dn - (y[n - 1] - y[n - 2]) / h[n - 2]);

        // Thomas algorithm; the system is strictly diagonally dominant.
        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
        }
        Ok(Self { s: s.to_vec(), y: y.to_vec(), m })
    }

    fn cell(&self, s: f64) -> usize {
        let n = self.s.len();
        match self.s.partition_point(|&k| k <= s) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    /// Evaluates the spline, extending the end cubics outside the grid.
    pub fn sample(&self, s: f64) -> SplineSample {
        self.sample_in_cell(self.cell(s), s)
    }

    fn sample_in_cell(&self, i: usize, s: f64) -> SplineSample {
        let (s0, s1) = (self.s[i], self.s[i + 1]);
        let h = s1 - s0;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (a, b) = (s1 - s, s - s0);
        let c0 = self.y[i] / h - m0 * h / 6.0;
        let c1 = self.y[i + 1] / h - m1 * h / 6.0;
        SplineSample {
            value: m0 * a.powi(3) / (6.0 * h) + m1 * b.powi(3) / (6.0 * h) + c0 * a + c1 * b,
            d1: -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) - c0 + c1,
            d2: (m0 * a + m1 * b) / h,
            d3: (m1 - m0) / h,
        }
    }
}

/// A joint-space path `q(s)` on `s ∈ [s_0, s_N]`, one spline per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    grid: Vec<f64>,
    knots: Vec<DVector<f64>>,
    splines: Vec<CubicSpline>,
}

/// Path value and derivatives with respect to `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
    pub ddq: DVector<f64>,
    pub dddq: DVector<f64>,
}

impl PathSpec {
    /// Uses a uniform grid on `[0, 1]`.
    pub fn uniform(knots: Vec<DVector<f64>>) -> Result<Self> {
        let n = knots.len();
        if n < 2 {
            return Err(Error::InvalidInput("a path needs at least two configurations".into()));
        }
        let grid = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Self::new(grid, knots, None, None)
    }

    /// Builds per-joint clamped splines. Optional tangents override the
    /// default end slopes.
    pub fn new(
        grid: Vec<f64>,
        knots: Vec<DVector<f64>>,
        start_tangent: Option<DVector<f64>>,
        end_tangent: Option<DVector<f64>>,
    ) -> Result<Self> {
        if grid.len() != knots.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), actual: knots.len() });
        }
        let dof = knots.first().map(|k| k.len()).unwrap_or(0);
        if dof == 0 {
            return Err(Error::InvalidInput("path configurations must be non-empty".into()));
        }
        for k in &knots {
            if k.len() != dof {
                return Err(Error::DimensionMismatch { expected: dof, actual: k.len() });
            }
        }
        for t in [&start_tangent, &end_tangent].into_iter().flatten() {
            if t.len() != dof {
                return Err(Error::DimensionMismatch { expected: dof, actual: t.len() });
            }
        }
        let splines = (0..dof)
            .map(|j| {
                let y: Vec<f64> = knots.iter().map(|k| k[j]).collect();
                CubicSpline::new(
                    &grid,
                    &y,
                    start_tangent.as_ref().map(|t| t[j]),
                    end_tangent.as_ref().map(|t| t[j]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, knots, splines })
    }

    pub fn dof(&self) -> usize {
        self.splines.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn knots(&self) -> &[DVector<f64>] {
        &self.knots
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().expect("grid is non-empty")
    }

    pub fn sample(&self, s: f64) -> PathPoint {
        let n = self.dof();
        let mut p = PathPoint {
            q: DVector::zeros(n),
            dq: DVector::zeros(n),
            ddq: DVector::zeros(n),
            dddq: DVector::zeros(n),
        };
        for (j, sp) in self.splines.iter().enumerate() {
            let v = sp.sample(s);
            p.q[j] = v.value;
            p.dq[j] = v.d1;
            p.ddq[j] = v.d2;
            p.dddq[j] = v.d3;
        }
        p
    }

    pub fn q(&self, s: f64) -> DVector<f64> {
        self.sample(s).q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots_exactly() {
        let s = [0.0, 0.2, 0.5, 0.7, 1.0];
        let y = [0.0, 1.0, -0.5, 0.3, 2.0];
        let sp = CubicSpline::new(&s, &y, None, None).unwrap();
        for (si, yi) in s.iter().zip(y) {
            assert!((sp.sample(*si).value - yi).abs() < 1e-14);
        }
    }

    #[test]
    fn first_and_second_derivatives_are_continuous() {
        let s = [0.0, 0.3, 0.45, 0.8, 1.0];
        let y = [0.2, -1.0, 0.5, 0.1, 0.9];
        let sp = CubicSpline::new(&s, &y, None, None).unwrap();
        for (i, &k) in s.iter().enumerate().take(4).skip(1) {
            let left = sp.sample_in_cell(i - 1, k);
            let right = sp.sample_in_cell(i, k);
            assert!((left.value - right.value).abs() < 1e-12);
            assert!((left.d1 - right.d1).abs() < 1e-12);
            assert!((left.d2 - right.d2).abs() < 1e-10);
        }
    }

    #[test]
    fn reproduces_cubic_polynomials_with_exact_slopes() {
        let f = |s: f64| 1.0 - 2.0 * s + 0.5 * s * s + 3.0 * s.powi(3);
        let df = |s: f64| -2.0 + s + 9.0 * s * s;
        let s: Vec<f64> = (0..7).map(|i| (i as f64 / 6.0).powf(1.3)).collect();
        let y: Vec<f64> = s.iter().map(|v| f(*v)).collect();
        let sp = CubicSpline::new(&s, &y, Some(df(0.0)), Some(df(1.0))).unwrap();
        for t in [0.05, 0.33, 0.61, 0.97] {
            let v = sp.sample(t);
            assert!((v.value - f(t)).abs() < 1e-12);
            assert!((v.d1 - df(t)).abs() < 1e-11);
            assert!((v.d2 - (1.0 + 18.0 * t)).abs() < 1e-10);
            assert!((v.d3 - 18.0).abs() < 1e-9);
        }
    }

    #[test]
    fn straight_segment_has_constant_slope() {
        let p = PathSpec::uniform((0..11).map(|i| DVector::from_vec(vec![i as f64 / 10.0, -0.5 * i as f64])).collect())
            .unwrap();
        for s in [0.0, 0.13, 0.5, 0.99, 1.0] {
            let pt = p.sample(s);
            assert!((pt.dq[0] - 1.0).abs() < 1e-12 && (pt.dq[1] + 5.0).abs() < 1e-11);
            assert!(pt.ddq.amax() < 1e-10);
        }
    }

    #[test]
    fn two_knot_path() {
        let p = PathSpec::uniform(vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![2.0])]).unwrap();
        let pt = p.sample(0.25);
        assert!((pt.q[0] - 0.5).abs() < 1e-15 && (pt.dq[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(CubicSpline::new(&[0.0, 0.0, 1.0], &[0.0, 1.0, 2.0], None, None).is_err());
        assert!(CubicSpline::new(&[0.0], &[0.0], None, None).is_err());
    }
}
