//! Power-ratio diagnostic and asymmetry-parameter sweeps.
//!
//! For signed residuals `r_i = predictor - observed`, split into the
//! positive and negative classes (exact zeros belong to neither) with
//! class proportions `R+`, `R-` and class RMSEs, the power ratio is
//!
//! ```text
//! Psi = (RMSE+ * R+)^(R-) * (RMSE- * R-)^(R+)
//! ```
//!
//! with the conventions `0^0 = 1` and `RMSE = 0` over an empty class.
//! Scanning `Psi` over a grid of asymmetry parameters and looking for an
//! elbow (a step in the slope) picks the lambda at which the loss starts
//! to reshape the residual balance; minimizing expected loss over lambda
//! instead is deliberately out of scope.
//!
//! A sweep takes the grid literally: every requested lambda is attempted,
//! and a lambda the family cannot accept (for example linex at 0) is
//! skipped with a warning record rather than failing the whole sweep.
//! Passing a grid on the "wrong" half-line (linex is conventionally
//! scanned over lambda < 0, pdl over lambda > 0) is therefore allowed;
//! the default grids stick to the conventional half-lines.

use crate::error::{Error, Result};
use crate::loss::{optimal_predictor, LossFamily, LossSpec};
use crate::sampler::FittedDraws;

/// Power-ratio diagnostics of one residual set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRatioPoint {
    pub psi: f64,
    pub r_plus: f64,
    pub r_minus: f64,
    pub rmse_plus: f64,
    pub rmse_minus: f64,
}

/// Compute the power ratio of `residuals` (predictor minus observed).
///
/// The mixed-case arithmetic is arranged as
/// `(a^(k-) * b^(k+))^(1/n)` with integer class counts `k±`, which keeps
/// hand-checkable cases (like four unit residuals giving exactly 0.5) free
/// of rounding drift; a log-domain fallback covers intermediate
/// overflow/underflow.
pub fn power_ratio(residuals: &[f64]) -> Result<PowerRatioPoint> {
    if residuals.is_empty() {
        return Err(Error::InvalidInput(
            "power ratio needs at least one residual".into(),
        ));
    }
    if let Some(bad) = residuals.iter().find(|r| !r.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "power ratio residuals must be finite, found {bad}"
        )));
    }
    let n = residuals.len();
    let (mut k_plus, mut k_minus) = (0usize, 0usize);
    let (mut ss_plus, mut ss_minus) = (0.0f64, 0.0f64);
    for &r in residuals {
        if r > 0.0 {
            k_plus += 1;
            ss_plus += r * r;
        } else if r < 0.0 {
            k_minus += 1;
            ss_minus += r * r;
        }
    }
    let r_plus = k_plus as f64 / n as f64;
    let r_minus = k_minus as f64 / n as f64;
    let rmse_plus = if k_plus == 0 {
        0.0
    } else {
        (ss_plus / k_plus as f64).sqrt()
    };
    let rmse_minus = if k_minus == 0 {
        0.0
    } else {
        (ss_minus / k_minus as f64).sqrt()
    };

    // Psi = (rmse_plus * r_plus)^(r_minus) * (rmse_minus * r_minus)^(r_plus)
    let psi = if k_plus == 0 && k_minus == 0 {
        1.0 // 0^0 * 0^0
    } else if k_minus == 0 || k_plus == 0 {
        0.0 // one-sided: a^0 * 0^(positive) = 0
    } else {
        let a = rmse_plus * r_plus;
        let b = rmse_minus * r_minus;
        let prod =
            powi_checked(a, k_minus).and_then(|pa| powi_checked(b, k_plus).map(|pb| pa * pb));
        match prod {
            Some(p) if p.is_finite() && p > 0.0 => p.powf(1.0 / n as f64),
            _ => ((k_minus as f64 * a.ln() + k_plus as f64 * b.ln()) / n as f64).exp(),
        }
    };
    Ok(PowerRatioPoint {
        psi,
        r_plus,
        r_minus,
        rmse_plus,
        rmse_minus,
    })
}

fn powi_checked(base: f64, exp: usize) -> Option<f64> {
    if exp > i32::MAX as usize {
        return None;
    }
    let v = base.powi(exp as i32);
    (v.is_finite() && v > 0.0).then_some(v)
}

/// One evaluated grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub lambda: f64,
    pub psi: f64,
    pub r_plus: f64,
    pub r_minus: f64,
    pub rmse_plus: f64,
    pub rmse_minus: f64,
}

/// A grid point the sweep had to skip, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepWarning {
    pub lambda: f64,
    pub message: String,
}

/// Psi over a lambda grid, with elbow candidates and skip warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRatioCurve {
    pub family: LossFamily,
    pub rows: Vec<CurveRow>,
    /// Indices into `rows` flagged by [`find_elbows`] (empty when fewer
    /// than 5 rows survive).
    pub elbow_candidates: Vec<usize>,
    pub warnings: Vec<SweepWarning>,
}

/// Conventional default grids: linex scans `[-3, -0.05]` in steps of 0.05,
/// pdl scans the integers `[1, 60]`; 60 points each.
pub fn default_grid(family: LossFamily) -> Result<Vec<f64>> {
    match family {
        // Divide rather than multiply by 0.05 so each grid value is the
        // correctly-rounded double (and displays as -0.35, not -0.35000...03).
        LossFamily::Linex => Ok((0..60).map(|i| -((60 - i) as f64) / 20.0).collect()),
        LossFamily::Pdl => Ok((1..=60).map(|i| i as f64).collect()),
        LossFamily::SquaredError => Err(Error::InvalidParameter(
            "squared error has no asymmetry parameter to sweep".into(),
        )),
    }
}

/// Evaluate the power ratio of the family's optimal predictors against
/// `observed` over `lambda_grid`.
///
/// `observed` must follow the region order of `draws`. The grid must be
/// strictly monotone. Grid points the family rejects (or whose predictor
/// computation fails on these draws) become warning records.
pub fn sweep(
    draws: &FittedDraws,
    observed: &[f64],
    family: LossFamily,
    lambda_grid: &[f64],
) -> Result<PowerRatioCurve> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    if lambda_grid.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidParameter("lambda grid must be finite".into()));
    }
    if lambda_grid.len() > 1 {
        let ascending = lambda_grid.windows(2).all(|w| w[0] < w[1]);
        let descending = lambda_grid.windows(2).all(|w| w[0] > w[1]);
        if !(ascending || descending) {
            return Err(Error::InvalidParameter(
                "lambda grid must be strictly monotone".into(),
            ));
        }
    }
    if observed.len() != draws.num_regions() {
        return Err(Error::InvalidInput(format!(
            "observed vector has {} entries for {} regions",
            observed.len(),
            draws.num_regions()
        )));
    }
    if observed.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidInput("observed values must be finite".into()));
    }
    if family == LossFamily::SquaredError {
        return Err(Error::InvalidParameter(
            "sweep varies an asymmetry parameter; squared error has none".into(),
        ));
    }

    let mut rows = Vec::with_capacity(lambda_grid.len());
    let mut warnings = Vec::new();
    for &lambda in lambda_grid {
        match curve_row(draws, observed, family, lambda) {
            Ok(row) => rows.push(row),
            Err(e) => warnings.push(SweepWarning {
                lambda,
                message: e.to_string(),
            }),
        }
    }
    let elbow_candidates = if rows.len() >= 5 {
        elbow_indices(
            &rows.iter().map(|r| r.psi).collect::<Vec<_>>(),
            DEFAULT_PROMINENCE,
        )
    } else {
        Vec::new()
    };
    Ok(PowerRatioCurve {
        family,
        rows,
        elbow_candidates,
        warnings,
    })
}

fn curve_row(
    draws: &FittedDraws,
    observed: &[f64],
    family: LossFamily,
    lambda: f64,
) -> Result<CurveRow> {
    let spec = match family {
        LossFamily::Linex => LossSpec::linex(lambda)?,
        LossFamily::Pdl => LossSpec::pdl(lambda)?,
        LossFamily::SquaredError => unreachable!("rejected before the grid loop"),
    };
    let mut residuals = Vec::with_capacity(draws.num_regions());
    for (region, (id, &obs)) in draws.region_ids().iter().zip(observed).enumerate() {
        let pred = optimal_predictor(draws.region_draws(region), &spec)
            .map_err(|e| Error::Domain(format!("region {id}: {e}")))?;
        residuals.push(pred - obs);
    }
    let pt = power_ratio(&residuals)?;
    Ok(CurveRow {
        lambda,
        psi: pt.psi,
        r_plus: pt.r_plus,
        r_minus: pt.r_minus,
        rmse_plus: pt.rmse_plus,
        rmse_minus: pt.rmse_minus,
    })
}

const DEFAULT_PROMINENCE: f64 = 1.5;

/// Flag elbow candidates on a computed curve: local maxima of the absolute
/// discrete second difference of Psi exceeding `1.5x` its median. At least
/// 5 rows are required. Results are advisory; read them with the curve.
pub fn find_elbows(curve: &PowerRatioCurve) -> Result<Vec<usize>> {
    find_elbows_with(curve, DEFAULT_PROMINENCE)
}

/// [`find_elbows`] with an explicit prominence multiplier.
pub fn find_elbows_with(curve: &PowerRatioCurve, prominence: f64) -> Result<Vec<usize>> {
    if curve.rows.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "elbow detection needs at least 5 grid points, got {}",
            curve.rows.len()
        )));
    }
    if !(prominence.is_finite() && prominence > 0.0) {
        return Err(Error::InvalidParameter(
            "prominence must be positive and finite".into(),
        ));
    }
    let psi: Vec<f64> = curve.rows.iter().map(|r| r.psi).collect();
    Ok(elbow_indices(&psi, prominence))
}

fn elbow_indices(psi: &[f64], prominence: f64) -> Vec<usize> {
    let n = psi.len();
    if n < 5 {
        return Vec::new();
    }
    // |second difference| at interior indices 1..n-1
    let abs_d2: Vec<f64> = (1..n - 1)
        .map(|i| (psi[i + 1] - 2.0 * psi[i] + psi[i - 1]).abs())
        .collect();
    let threshold = prominence * crate::math::median(&abs_d2);
    let mut out = Vec::new();
    for (j, &v) in abs_d2.iter().enumerate() {
        if v <= threshold || v == 0.0 {
            continue;
        }
        let left_ok = j == 0 || v >= abs_d2[j - 1];
        let right_ok = j + 1 == abs_d2.len() || v >= abs_d2[j + 1];
        if left_ok && right_ok {
            out.push(j + 1); // interior index j maps to grid index j+1
        }
    }
    out
}
