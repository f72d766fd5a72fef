//! Least-squares fits of completion time against shape size.

use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FitError {
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("sizes must be positive and all values finite")]
    BadPoint,
    #[error("points are degenerate for this model (rank deficient)")]
    Degenerate,
    #[error("unknown fit family {0:?}")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitFamily {
    /// `a n + b`
    Linear,
    /// `a log(b n + c)`
    Log,
    /// `a n^3 + b n^2 + c n + d`
    Cubic,
    /// `a n^2 log n + b n log n + c n + d`
    N2logn,
}

impl FitFamily {
    pub const ALL: [FitFamily; 4] = [FitFamily::Linear, FitFamily::Log, FitFamily::Cubic, FitFamily::N2logn];

    fn basis<T: Float>(self, n: T) -> Vec<T> {
        let one = T::one();
        match self {
            FitFamily::Linear => vec![n, one],
            FitFamily::Cubic => vec![n * n * n, n * n, n, one],
            FitFamily::N2logn => vec![n * n * n.ln(), n * n.ln(), n, one],
            FitFamily::Log => unreachable!("log family is not linear in its parameters"),
        }
    }
}

impl fmt::Display for FitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitFamily::Linear => "linear",
            FitFamily::Log => "log",
            FitFamily::Cubic => "cubic",
            FitFamily::N2logn => "n2logn",
        })
    }
}

impl FromStr for FitFamily {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FitFamily::ALL
            .into_iter()
            .find(|f| f.to_string() == s)
            .ok_or_else(|| FitError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit<T = f64> {
    pub family: FitFamily,
    /// Highest-order term first, in the order the family's formula lists them.
    pub coefficients: Vec<T>,
    pub r_squared: T,
}

impl<T: Float> Fit<T> {
    pub fn predict(&self, n: T) -> T {
        match self.family {
            FitFamily::Log => {
                let c = &self.coefficients;
                c[0] * (c[1] * n + c[2]).ln()
            }
            family => family
                .basis(n)
                .into_iter()
                .zip(&self.coefficients)
                .fold(T::zero(), |acc, (b, &c)| acc + b * c),
        }
    }
}

fn cast<T: Float>(v: f64) -> T {
    T::from(v).expect("representable constant")
}

/// Minimizes `|A x - y|` by Householder QR. `rows` holds the rows of `A`.
/// Columns are scaled to unit norm first and the scaling undone afterwards.
pub fn least_squares<T: Float>(rows: &[Vec<T>], y: &[T]) -> Result<Vec<T>, FitError> {
    let m = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if m < p || p == 0 {
        return Err(FitError::Degenerate);
    }
    let mut a: Vec<Vec<T>> = rows.to_vec();
    let mut b = y.to_vec();
    let mut scale = vec![T::one(); p];
    for (j, s) in scale.iter_mut().enumerate() {
        let norm = a.iter().fold(T::zero(), |acc, r| acc + r[j] * r[j]).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(FitError::Degenerate);
        }
        *s = norm;
        for r in a.iter_mut() {
            r[j] = r[j] / norm;
        }
    }
    let tol = T::epsilon() * cast::<T>(100.0 * m as f64);
    for k in 0..p {
        let norm = (k..m).fold(T::zero(), |acc, i| acc + a[i][k] * a[i][k]).sqrt();
        if norm <= tol {
            return Err(FitError::Degenerate);
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        // v = x - alpha e1, stored in place
        let mut v: Vec<T> = (k..m).map(|i| a[i][k]).collect();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |acc, &x| acc + x * x);
        if vnorm2 > T::zero() {
            for j in k..p {
                let dot = (k..m).fold(T::zero(), |acc, i| acc + v[i - k] * a[i][j]);
                let f = cast::<T>(2.0) * dot / vnorm2;
                for i in k..m {
                    a[i][j] = a[i][j] - f * v[i - k];
                }
            }
            let dot = (k..m).fold(T::zero(), |acc, i| acc + v[i - k] * b[i]);
            let f = cast::<T>(2.0) * dot / vnorm2;
            for i in k..m {
                b[i] = b[i] - f * v[i - k];
            }
        }
    }
    let mut x = vec![T::zero(); p];
    for k in (0..p).rev() {
        let s = (k + 1..p).fold(b[k], |acc, j| acc - a[k][j] * x[j]);
        x[k] = s / a[k][k];
    }
    Ok(x.into_iter().zip(scale).map(|(v, s)| v / s).collect())
}

/// Coefficient of determination, clamped to `[0, 1]`.
pub fn r_squared<T: Float>(y: &[T], predicted: &[T]) -> T {
    let n = cast::<T>(y.len() as f64);
    let mean = y.iter().fold(T::zero(), |a, &v| a + v) / n;
    let ss_tot = y.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
    let ss_res = y.iter().zip(predicted).fold(T::zero(), |a, (&v, &p)| a + (v - p) * (v - p));
    if ss_tot <= T::zero() {
        return if ss_res <= T::epsilon() { T::one() } else { T::zero() };
    }
    (T::one() - ss_res / ss_tot).max(T::zero()).min(T::one())
}

/// Best `a` for fixed `(b, c)` and its residual sum of squares.
fn log_candidate<T: Float>(points: &[(T, T)], b: T, c: T) -> Option<(T, T)> {
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut xs = Vec::with_capacity(points.len());
    for &(n, y) in points {
        let z = b * n + c;
        if !(z > T::zero()) {
            return None;
        }
        let x = z.ln();
        sxx = sxx + x * x;
        sxy = sxy + x * y;
        xs.push(x);
    }
    if !(sxx > T::zero()) {
        return None;
    }
    let a = sxy / sxx;
    let ssr = xs.iter().zip(points).fold(T::zero(), |acc, (&x, &(_, y))| acc + (y - a * x) * (y - a * x));
    ssr.is_finite().then_some((a, ssr))
}

fn fit_log<T: Float>(points: &[(T, T)]) -> Result<Vec<T>, FitError> {
    let n_min = points.iter().map(|p| p.0).fold(T::infinity(), T::min);
    let mut best: Option<(T, T, T, T)> = None;
    let consider = |b: T, c: T, best: &mut Option<(T, T, T, T)>| {
        if let Some((a, ssr)) = log_candidate(points, b, c) {
            if best.is_none_or(|(_, _, _, s)| ssr < s) {
                *best = Some((a, b, c, ssr));
            }
        }
    };
    // coarse grid: b log-spaced, c log-spaced positive plus offsets that put
    // the log argument close to zero at the smallest size
    let b_steps = 57;
    let b_ratio = 10f64.powf(7.0 / (b_steps - 1) as f64);
    for i in 0..b_steps {
        let b = cast::<T>(1e-4 * b_ratio.powi(i));
        for k in 0..41 {
            consider(b, cast::<T>(10f64.powf(-3.0 + 0.15 * k as f64)), &mut best);
        }
        for f in [0.0, 0.5, 0.9, 0.99] {
            consider(b, -b * n_min * cast::<T>(f), &mut best);
        }
    }
    let (_, b0, c0, _) = best.ok_or(FitError::Degenerate)?;
    // one refinement pass around the coarse optimum
    let c_span = c0.abs().max(b0 * n_min).max(cast(1e-3));
    for i in -10..=10 {
        let b = b0 * cast::<T>(b_ratio.powf(i as f64 / 10.0));
        for k in -10..=10 {
            consider(b, c0 + c_span * cast::<T>(k as f64 / 10.0), &mut best);
        }
    }
    let (a, b, c, _) = best.expect("coarse optimum exists");
    Ok(vec![a, b, c])
}

/// Fits `family` to `(n, y)` points.
pub fn fit_scaling<T: Float>(points: &[(T, T)], family: FitFamily) -> Result<Fit<T>, FitError> {
    if points.len() < 4 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if points.iter().any(|&(n, y)| !(n > T::zero()) || !n.is_finite() || !y.is_finite()) {
        return Err(FitError::BadPoint);
    }
    let coefficients = match family {
        FitFamily::Log => fit_log(points)?,
        _ => {
            let rows: Vec<Vec<T>> = points.iter().map(|&(n, _)| family.basis(n)).collect();
            let y: Vec<T> = points.iter().map(|p| p.1).collect();
            least_squares(&rows, &y)?
        }
    };
    let mut fit = Fit { family, coefficients, r_squared: T::zero() };
    let y: Vec<T> = points.iter().map(|p| p.1).collect();
    let predicted: Vec<T> = points.iter().map(|&(n, _)| fit.predict(n)).collect();
    fit.r_squared = r_squared(&y, &predicted);
    Ok(fit)
}
