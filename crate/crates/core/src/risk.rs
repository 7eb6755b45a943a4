//! Misspecified-loss relative-risk analysis.
//!
//! For a region's posterior draws, a candidate predictor `yhat`, and a
//! "true" loss, the relative risk is
//!
//! ```text
//! rr = (Risk(yhat) - Risk(yopt)) / Risk(yopt)
//! ```
//!
//! where `yopt` is the optimal predictor of the true loss and both risks
//! are empirical posterior expectations over the *same* retained draws.
//! Same-draw evaluation makes empirical minimality exact: the optimal
//! predictor's rr is identically 0 and every other candidate's is >= 0
//! with no Monte Carlo slack.
//!
//! [`risk_matrix`] crosses candidate predictor tables with true losses
//! over all regions; [`summarize`] ranks predictors per true loss by the
//! IQR and the median of rr across regions. Quantiles are linear
//! interpolation (type 7), so IQR values are reproducible across
//! implementations. Large rr values (a symmetric predictor judged under a
//! harsh asymmetric loss can exceed 10^3) are reported at full precision,
//! never capped.

use crate::error::{Error, Result};
use crate::loss::{expected_loss, optimal_predictor, LossSpec, PredictorTable};
use crate::math;
use crate::sampler::FittedDraws;

/// Relative risk of `yhat` for one region under `true_spec`.
///
/// Degenerate draws (zero optimal risk, e.g. all draws equal) make the
/// ratio undefined and raise a domain error.
pub fn relative_risk(draws_region: &[f64], yhat: f64, true_spec: &LossSpec) -> Result<f64> {
    let yopt = optimal_predictor(draws_region, true_spec)?;
    let risk_opt = expected_loss(draws_region, yopt, true_spec)?;
    // Negated comparison: a NaN optimal risk must fail this gate too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(risk_opt > 0.0) {
        return Err(Error::Domain(format!(
            "optimal risk is {risk_opt} (degenerate posterior draws); relative risk undefined"
        )));
    }
    let risk_hat = expected_loss(draws_region, yhat, true_spec)?;
    Ok((risk_hat - risk_opt) / risk_opt)
}

/// Full predictor x true-loss x region relative-risk cross.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMatrix {
    pub true_losses: Vec<LossSpec>,
    pub predictor_labels: Vec<String>,
    pub region_ids: Vec<String>,
    /// `rr[t][p][i]`: true loss t, predictor p, region i.
    pub rr: Vec<Vec<Vec<f64>>>,
    /// `iqr[t][p]`: Q3 - Q1 of rr across regions.
    pub iqr: Vec<Vec<f64>>,
    /// `median_rr[t][p]`.
    pub median_rr: Vec<Vec<f64>>,
}

/// Evaluate every predictor table under every true loss across all
/// regions. All tables must come from these same `draws` (checked by
/// region layout; same-draw evaluation is what makes the minimality
/// invariants exact).
pub fn risk_matrix(
    draws: &FittedDraws,
    tables: &[PredictorTable],
    true_losses: &[LossSpec],
) -> Result<RiskMatrix> {
    if tables.is_empty() {
        return Err(Error::InvalidInput("no predictor tables given".into()));
    }
    if true_losses.is_empty() {
        return Err(Error::InvalidInput("no true losses given".into()));
    }
    let region_ids = draws.region_ids().to_vec();
    for table in tables {
        let table_ids: Vec<&String> = table.rows.iter().map(|r| &r.region_id).collect();
        if table_ids.len() != region_ids.len()
            || table_ids.iter().zip(&region_ids).any(|(a, b)| *a != b)
        {
            return Err(Error::InvalidInput(format!(
                "predictor table '{}' does not cover the draw regions in order",
                table.spec.label()
            )));
        }
    }

    let n = region_ids.len();
    let mut rr = vec![vec![vec![0.0; n]; tables.len()]; true_losses.len()];
    let mut iqr = vec![vec![0.0; tables.len()]; true_losses.len()];
    let mut median_rr = vec![vec![0.0; tables.len()]; true_losses.len()];
    for (t, true_spec) in true_losses.iter().enumerate() {
        for (p, table) in tables.iter().enumerate() {
            for (i, row) in table.rows.iter().enumerate() {
                rr[t][p][i] = relative_risk(draws.region_draws(i), row.predictor, true_spec)
                    .map_err(|e| {
                        Error::Domain(format!(
                            "true loss {}, predictor {}, region {}: {e}",
                            true_spec.label(),
                            table.spec.label(),
                            row.region_id
                        ))
                    })?;
            }
            let cells = &rr[t][p];
            iqr[t][p] = math::quantile_type7(cells, 0.75) - math::quantile_type7(cells, 0.25);
            median_rr[t][p] = math::median(cells);
        }
    }
    Ok(RiskMatrix {
        true_losses: true_losses.to_vec(),
        predictor_labels: tables.iter().map(|t| t.spec.label()).collect(),
        region_ids,
        rr,
        iqr,
        median_rr,
    })
}

/// One ranked summary row; ranks are 1-based within the true loss.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSummaryRow {
    pub true_loss: LossSpec,
    pub predictor: String,
    pub iqr: f64,
    pub median_rr: f64,
    pub rank_by_iqr: usize,
    pub rank_by_median: usize,
}

/// Rank predictors within each true loss by IQR and by median rr
/// (ascending; ties broken by predictor label). Rows come out grouped by
/// true loss in matrix order, sorted by the IQR rank.
pub fn summarize(matrix: &RiskMatrix) -> Result<Vec<RiskSummaryRow>> {
    if matrix.true_losses.is_empty() || matrix.predictor_labels.is_empty() {
        return Err(Error::InvalidInput("empty risk matrix".into()));
    }
    let np = matrix.predictor_labels.len();
    let mut out = Vec::with_capacity(matrix.true_losses.len() * np);
    for (t, true_spec) in matrix.true_losses.iter().enumerate() {
        let rank_of = |key: &dyn Fn(usize) -> f64| -> Vec<usize> {
            let mut order: Vec<usize> = (0..np).collect();
            order.sort_by(|&a, &b| {
                key(a)
                    .total_cmp(&key(b))
                    .then_with(|| matrix.predictor_labels[a].cmp(&matrix.predictor_labels[b]))
            });
            let mut rank = vec![0usize; np];
            for (pos, &p) in order.iter().enumerate() {
                rank[p] = pos + 1;
            }
            rank
        };
        let by_iqr = rank_of(&|p| matrix.iqr[t][p]);
        let by_median = rank_of(&|p| matrix.median_rr[t][p]);
        let mut rows: Vec<RiskSummaryRow> = (0..np)
            .map(|p| RiskSummaryRow {
                true_loss: *true_spec,
                predictor: matrix.predictor_labels[p].clone(),
                iqr: matrix.iqr[t][p],
                median_rr: matrix.median_rr[t][p],
                rank_by_iqr: by_iqr[p],
                rank_by_median: by_median[p],
            })
            .collect();
        rows.sort_by_key(|r| r.rank_by_iqr);
        out.extend(rows);
    }
    Ok(out)
}
