//! Exponent fits for finite-size series `(L, v_L)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Abscissa/ordinate transform used by [`fit_exponent`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `log v` against `log L`.
    Power,
    /// `-log v` against `log³ L`.
    LogCubed,
    /// `log v` against `√L`.
    Stretched,
}

impl std::str::FromStr for FitModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(Self::Power),
            "log-cubed" => Ok(Self::LogCubed),
            "stretched" => Ok(Self::Stretched),
            _ => Err(Error::Domain(format!("unknown fit model '{s}'"))),
        }
    }
}

impl FitModel {
    fn abscissa(self, l: f64) -> f64 {
        match self {
            Self::Power => l.ln(),
            Self::LogCubed => l.ln().powi(3),
            Self::Stretched => l.sqrt(),
        }
    }

    fn ordinate(self, log_v: f64) -> f64 {
        match self {
            Self::LogCubed => -log_v,
            _ => log_v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSlope {
    pub l_lo: f64,
    pub l_hi: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub model: FitModel,
    /// Global least-squares slope.
    pub exponent: f64,
    pub intercept: f64,
    pub local_slopes: Vec<LocalSlope>,
    /// Local slopes form a monotone sequence.
    pub monotone: bool,
}

impl ExponentFit {
    /// Whether the local slopes move monotonically towards `target`:
    /// `|s_k - target|` is non-increasing and the sequence itself is
    /// monotone.
    pub fn approaches(&self, target: f64) -> bool {
        self.monotone
            && self
                .local_slopes
                .windows(2)
                .all(|p| (p[1].slope - target).abs() <= (p[0].slope - target).abs())
    }

    pub fn last_slope(&self) -> f64 {
        self.local_slopes.last().map_or(f64::NAN, |s| s.slope)
    }
}

fn is_monotone(xs: &[f64]) -> bool {
    xs.windows(2).all(|p| p[1] >= p[0]) || xs.windows(2).all(|p| p[1] <= p[0])
}

/// Fit on `(L, log v)` pairs, for values too small to hold as doubles.
pub fn fit_exponent_log(points: &[(f64, f64)], model: FitModel) -> Result<ExponentFit> {
    if points.len() < 3 {
        return Err(Error::Domain("exponent fit needs at least 3 points".into()));
    }
    if points.iter().any(|(l, v)| !(l.is_finite() && *l > 0.0 && v.is_finite())) {
        return Err(Error::Domain("exponent fit needs positive finite L and finite log-values".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|p| p[0].0 == p[1].0) {
        return Err(Error::Domain("degenerate abscissae: repeated L".into()));
    }
    let xs: Vec<f64> = pts.iter().map(|p| model.abscissa(p.0)).collect();
    let ys: Vec<f64> = pts.iter().map(|p| model.ordinate(p.1)).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Domain("degenerate abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let local_slopes: Vec<LocalSlope> = (1..pts.len())
        .map(|i| LocalSlope {
            l_lo: pts[i - 1].0,
            l_hi: pts[i].0,
            slope: (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]),
        })
        .collect();
    let slopes: Vec<f64> = local_slopes.iter().map(|s| s.slope).collect();
    Ok(ExponentFit { model, exponent, intercept: my - exponent * mx, monotone: is_monotone(&slopes), local_slopes })
}

/// Fit on `(L, v)` pairs with `v > 0`.
pub fn fit_exponent(points: &[(f64, f64)], model: FitModel) -> Result<ExponentFit> {
    if points.iter().any(|p| !(p.1 > 0.0)) {
        return Err(Error::Domain("exponent fit needs positive values".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(l, v)| (l, v.ln())).collect();
    fit_exponent_log(&logs, model)
}

/// Least-squares coefficients of `y` on the columns `basis(x)`, solved by
/// SVD after equilibrating the columns.
pub fn linear_fit(xs: &[f64], ys: &[f64], basis: impl Fn(f64) -> Vec<f64>) -> Result<Vec<f64>> {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| basis(x)).collect();
    let k = rows.first().map_or(0, |r| r.len());
    if k == 0 || rows.len() < k {
        return Err(Error::Domain("linear fit needs at least as many points as basis functions".into()));
    }
    let mut a = nalgebra::DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let scale: Vec<f64> = (0..k).map(|j| a.column(j).norm()).collect();
    if scale.iter().any(|s| *s == 0.0) {
        return Err(Error::Domain("linear fit has a vanishing basis column".into()));
    }
    for j in 0..k {
        a.column_mut(j).scale_mut(1.0 / scale[j]);
    }
    let b = nalgebra::DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    let sol = svd.solve(&b, 1e-14).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((0..k).map(|j| sol[j] / scale[j]).collect())
}
