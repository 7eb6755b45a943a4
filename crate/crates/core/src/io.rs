//! On-disk formats: input CSVs, output CSVs, and the run manifest.
//!
//! Layouts (header row included, floats in 17-significant-digit
//! scientific notation so every f64 round-trips bit-exactly):
//!
//! * data:       `region_id,z,<covariate...>`
//! * adjacency:  `region_a,region_b` (one undirected edge per row, labels)
//! * parameters: `draw,beta0,...,betaP,rho,tau`
//! * fitted:     `draw,region_id,fitted` (draw-major, regions in data order)
//! * predictors: `region_id,predictor,posterior_mean,sd,rmspe,matched_quantile,loss_family,lambda`
//! * sweep:      `lambda,psi,r_plus,r_minus,rmse_plus,rmse_minus,elbow_flag`
//! * risk:       `true_loss,lambda,predictor,region_id,rr` and the summary
//!   `true_loss,lambda,predictor,iqr,median_rr`
//!
//! Region order everywhere follows the data CSV row order; the adjacency
//! file is re-indexed to it. Re-parsing and re-emitting any of our output
//! files is byte-identical, which is what makes seeded pipelines
//! reproducible end to end. The manifest is JSON with SHA-256 digests of
//! every input; `RunManifest::verify` recomputes them.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::loss::{LossFamily, LossSpec, PredictorRow, PredictorTable};
use crate::model::{AreaDataset, CarParams, NeighborGraph};
use crate::power_ratio::{CurveRow, PowerRatioCurve};
use crate::risk::{RiskMatrix, RiskSummaryRow};
use crate::sampler::{FittedDraws, PriorSpec, SamplerConfig};

/// Canonical float formatting: scientific with 17 significant digits,
/// enough for exact f64 round-trips.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, context: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::InvalidInput(format!("{context}: cannot parse '{s}' as a number")))
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)
        .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv write");
    for row in rows {
        w.write_record(row).expect("in-memory csv write");
    }
    w.into_inner().expect("in-memory csv flush")
}

// ---------------------------------------------------------------------------
// input files

/// Read the data CSV. `scale` maps column names (z or a covariate) to
/// divisors applied on read, in the spirit of reporting home values in
/// units of 10^4. `sigma2_meas` selects the measurement-error variant.
pub fn read_dataset(
    path: &Path,
    scale: &[(String, f64)],
    sigma2_meas: Option<f64>,
) -> Result<AreaDataset> {
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 || &headers[0] != "region_id" || &headers[1] != "z" {
        return Err(Error::InvalidInput(format!(
            "{}: header must start with region_id,z (got {})",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let covariate_names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();

    let mut divisors: BTreeMap<&str, f64> = BTreeMap::new();
    for (col, factor) in scale {
        if col != "z" && !covariate_names.iter().any(|c| c == col) {
            return Err(Error::InvalidParameter(format!(
                "--scale column '{col}' not in the data header (have z{}{})",
                if covariate_names.is_empty() { "" } else { ", " },
                covariate_names.join(", ")
            )));
        }
        if !(factor.is_finite() && *factor != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale factor for '{col}' must be finite and nonzero, got {factor}"
            )));
        }
        divisors.insert(col, *factor);
    }

    let mut region_ids = Vec::new();
    let mut z = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        if record.len() != headers.len() {
            return Err(Error::InvalidInput(format!(
                "{} line {line}: expected {} fields, got {}",
                path.display(),
                headers.len(),
                record.len()
            )));
        }
        region_ids.push(record[0].to_string());
        let zv = parse_f64(
            &record[1],
            &format!("{} line {line} column z", path.display()),
        )?;
        z.push(zv / divisors.get("z").copied().unwrap_or(1.0));
        for (k, name) in covariate_names.iter().enumerate() {
            let v = parse_f64(
                &record[2 + k],
                &format!("{} line {line} column {name}", path.display()),
            )?;
            xs.push(v / divisors.get(name.as_str()).copied().unwrap_or(1.0));
        }
    }
    let n = region_ids.len();
    let p = covariate_names.len();
    let mut x = DMatrix::from_element(n, p + 1, 1.0);
    for i in 0..n {
        for j in 0..p {
            x[(i, j + 1)] = xs[i * p + j];
        }
    }
    AreaDataset::new(
        region_ids,
        covariate_names,
        DVector::from_vec(z),
        x,
        sigma2_meas,
    )
}

/// Read the adjacency CSV and re-index its labels to the data's region
/// order. Unknown labels, self-loops and isolated regions are reported by
/// label, all offenders at once.
pub fn read_adjacency(path: &Path, region_ids: &[String]) -> Result<NeighborGraph> {
    let index: BTreeMap<&str, usize> = region_ids
        .iter()
        .enumerate()
        .map(|(i, r)| (r.as_str(), i))
        .collect();
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() != 2 || &headers[0] != "region_a" || &headers[1] != "region_b" {
        return Err(Error::InvalidInput(format!(
            "{}: header must be region_a,region_b",
            path.display()
        )));
    }
    let mut edges = Vec::new();
    let mut unknown: Vec<String> = Vec::new();
    let mut self_loops: Vec<String> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        if record.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "{} line {line}: expected 2 fields, got {}",
                path.display(),
                record.len()
            )));
        }
        let (a, b) = (&record[0], &record[1]);
        let mut pair = [0usize; 2];
        let mut ok = true;
        for (slot, label) in pair.iter_mut().zip([a, b]) {
            match index.get(label) {
                Some(&i) => *slot = i,
                None => {
                    if !unknown.iter().any(|u| u == label) {
                        unknown.push(label.to_string());
                    }
                    ok = false;
                }
            }
        }
        if ok && a == b {
            self_loops.push(a.to_string());
            ok = false;
        }
        if ok {
            edges.push((pair[0], pair[1]));
        }
    }
    if !unknown.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: adjacency references regions not in the data: {}",
            path.display(),
            unknown.join(", ")
        )));
    }
    if !self_loops.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: self-neighbor rows for: {}",
            path.display(),
            self_loops.join(", ")
        )));
    }
    let mut degree = vec![0usize; region_ids.len()];
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let isolated: Vec<&str> = degree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| region_ids[i].as_str())
        .collect();
    if !isolated.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: regions with no neighbors: {}",
            path.display(),
            isolated.join(", ")
        )));
    }
    NeighborGraph::new(region_ids.len(), &edges)
}

// ---------------------------------------------------------------------------
// parameter draws

pub fn write_params_csv(path: &Path, params: &[CarParams]) -> Result<()> {
    if params.is_empty() {
        return Err(Error::InvalidInput("no parameter draws to write".into()));
    }
    let k = params[0].beta.len();
    let mut header: Vec<String> = vec!["draw".into()];
    header.extend((0..k).map(|j| format!("beta{j}")));
    header.push("rho".into());
    header.push("tau".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = params
        .iter()
        .enumerate()
        .map(|(j, par)| {
            let mut row = vec![(j + 1).to_string()];
            row.extend(par.beta.iter().map(|b| fmt_f64(*b)));
            row.push(fmt_f64(par.rho));
            row.push(fmt_f64(par.tau));
            row
        })
        .collect();
    write_all(path, &csv_bytes(&header_refs, &rows))
}

pub fn read_params_csv(path: &Path) -> Result<Vec<CarParams>> {
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
        .clone();
    let fields: Vec<&str> = headers.iter().collect();
    let k = fields.len().saturating_sub(3);
    let expected: Vec<String> = std::iter::once("draw".to_string())
        .chain((0..k).map(|j| format!("beta{j}")))
        .chain(["rho".to_string(), "tau".to_string()])
        .collect();
    if k == 0 || fields != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::InvalidInput(format!(
            "{}: expected header draw,beta0..betaK,rho,tau",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        let ctx = format!("{} line {line}", path.display());
        if record.len() != fields.len() {
            return Err(Error::InvalidInput(format!("{ctx}: wrong field count")));
        }
        let beta = DVector::from_iterator(
            k,
            record
                .iter()
                .skip(1)
                .take(k)
                .map(|s| parse_f64(s, &ctx))
                .collect::<Result<Vec<_>>>()?,
        );
        out.push(CarParams {
            beta,
            rho: parse_f64(&record[k + 1], &ctx)?,
            tau: parse_f64(&record[k + 2], &ctx)?,
        });
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no parameter draws",
            path.display()
        )));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// fitted draws

pub fn write_fitted_csv(path: &Path, draws: &FittedDraws) -> Result<()> {
    let mut rows = Vec::with_capacity(draws.num_draws() * draws.num_regions());
    for j in 0..draws.num_draws() {
        for (i, id) in draws.region_ids().iter().enumerate() {
            rows.push(vec![
                (j + 1).to_string(),
                id.clone(),
                fmt_f64(draws.region_draws(i)[j]),
            ]);
        }
    }
    write_all(path, &csv_bytes(&["draw", "region_id", "fitted"], &rows))
}

pub fn read_fitted_csv(path: &Path) -> Result<FittedDraws> {
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["draw", "region_id", "fitted"] {
        return Err(Error::InvalidInput(format!(
            "{}: expected header draw,region_id,fitted",
            path.display()
        )));
    }
    // (draw, region, value), regions in first-appearance order
    let mut region_order: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_draw = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        let ctx = format!("{} line {line}", path.display());
        if record.len() != 3 {
            return Err(Error::InvalidInput(format!("{ctx}: wrong field count")));
        }
        let draw: usize = record[0]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("{ctx}: bad draw index '{}'", &record[0])))?;
        if draw == 0 {
            return Err(Error::InvalidInput(format!(
                "{ctx}: draw indices are 1-based"
            )));
        }
        let id = record[1].to_string();
        let region = match region_order.iter().position(|r| *r == id) {
            Some(i) => i,
            None => {
                region_order.push(id);
                region_order.len() - 1
            }
        };
        let value = parse_f64(&record[2], &ctx)?;
        max_draw = max_draw.max(draw);
        cells.push((draw - 1, region, value));
    }
    let n = region_order.len();
    if n == 0 || max_draw == 0 {
        return Err(Error::InvalidInput(format!(
            "{}: no fitted draws",
            path.display()
        )));
    }
    if cells.len() != n * max_draw {
        return Err(Error::InvalidInput(format!(
            "{}: expected {} rows for {} regions x {} draws, got {}",
            path.display(),
            n * max_draw,
            n,
            max_draw,
            cells.len()
        )));
    }
    let mut values = vec![f64::NAN; n * max_draw];
    let mut seen = vec![false; n * max_draw];
    for (draw, region, value) in cells {
        let slot = region * max_draw + draw;
        if seen[slot] {
            return Err(Error::InvalidInput(format!(
                "{}: duplicate cell draw {} region {}",
                path.display(),
                draw + 1,
                region_order[region]
            )));
        }
        seen[slot] = true;
        values[slot] = value;
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::InvalidInput(format!(
            "{}: missing draw/region cells",
            path.display()
        )));
    }
    FittedDraws::new(region_order, max_draw, values)
}

// ---------------------------------------------------------------------------
// predictor tables

pub fn write_predictor_csv(path: &Path, table: &PredictorTable) -> Result<()> {
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.region_id.clone(),
                fmt_f64(r.predictor),
                fmt_f64(r.posterior_mean),
                fmt_f64(r.sd),
                fmt_f64(r.rmspe),
                fmt_f64(r.matched_quantile),
                table.spec.family.as_str().to_string(),
                fmt_f64(table.spec.lambda),
            ]
        })
        .collect();
    write_all(
        path,
        &csv_bytes(
            &[
                "region_id",
                "predictor",
                "posterior_mean",
                "sd",
                "rmspe",
                "matched_quantile",
                "loss_family",
                "lambda",
            ],
            &rows,
        ),
    )
}

pub fn read_predictor_csv(path: &Path) -> Result<PredictorTable> {
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
        .clone();
    let expect = [
        "region_id",
        "predictor",
        "posterior_mean",
        "sd",
        "rmspe",
        "matched_quantile",
        "loss_family",
        "lambda",
    ];
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(Error::InvalidInput(format!(
            "{}: expected header {}",
            path.display(),
            expect.join(",")
        )));
    }
    let mut rows = Vec::new();
    let mut spec: Option<LossSpec> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        let ctx = format!("{} line {line}", path.display());
        if record.len() != expect.len() {
            return Err(Error::InvalidInput(format!("{ctx}: wrong field count")));
        }
        let family: LossFamily = record[6]
            .parse()
            .map_err(|e: Error| Error::InvalidInput(format!("{ctx}: {e}")))?;
        let lambda = parse_f64(&record[7], &ctx)?;
        let row_spec = match family {
            LossFamily::SquaredError => LossSpec::squared_error(),
            LossFamily::Linex => {
                LossSpec::linex(lambda).map_err(|e| Error::InvalidInput(format!("{ctx}: {e}")))?
            }
            LossFamily::Pdl => {
                LossSpec::pdl(lambda).map_err(|e| Error::InvalidInput(format!("{ctx}: {e}")))?
            }
        };
        match &spec {
            None => spec = Some(row_spec),
            Some(s) if *s == row_spec => {}
            Some(s) => {
                return Err(Error::InvalidInput(format!(
                    "{ctx}: mixed loss specs in one table ({} vs {})",
                    s.label(),
                    row_spec.label()
                )))
            }
        }
        rows.push(PredictorRow {
            region_id: record[0].to_string(),
            predictor: parse_f64(&record[1], &ctx)?,
            posterior_mean: parse_f64(&record[2], &ctx)?,
            sd: parse_f64(&record[3], &ctx)?,
            rmspe: parse_f64(&record[4], &ctx)?,
            matched_quantile: parse_f64(&record[5], &ctx)?,
        });
    }
    let spec = spec
        .ok_or_else(|| Error::InvalidInput(format!("{}: empty predictor table", path.display())))?;
    Ok(PredictorTable { spec, rows })
}

// ---------------------------------------------------------------------------
// sweep curves

pub fn write_curve_csv(path: &Path, curve: &PowerRatioCurve) -> Result<()> {
    let rows: Vec<Vec<String>> = curve
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                fmt_f64(r.lambda),
                fmt_f64(r.psi),
                fmt_f64(r.r_plus),
                fmt_f64(r.r_minus),
                fmt_f64(r.rmse_plus),
                fmt_f64(r.rmse_minus),
                if curve.elbow_candidates.contains(&i) {
                    "1"
                } else {
                    "0"
                }
                .to_string(),
            ]
        })
        .collect();
    write_all(
        path,
        &csv_bytes(
            &[
                "lambda",
                "psi",
                "r_plus",
                "r_minus",
                "rmse_plus",
                "rmse_minus",
                "elbow_flag",
            ],
            &rows,
        ),
    )
}

/// Read back a curve CSV written by [`write_curve_csv`]; the loss family
/// is not stored in the file and must be supplied.
pub fn read_curve_csv(path: &Path, family: LossFamily) -> Result<PowerRatioCurve> {
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
        .clone();
    let expect = [
        "lambda",
        "psi",
        "r_plus",
        "r_minus",
        "rmse_plus",
        "rmse_minus",
        "elbow_flag",
    ];
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(Error::InvalidInput(format!(
            "{}: expected header {}",
            path.display(),
            expect.join(",")
        )));
    }
    let mut rows = Vec::new();
    let mut elbow_candidates = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        let ctx = format!("{} line {line}", path.display());
        if record.len() != expect.len() {
            return Err(Error::InvalidInput(format!("{ctx}: wrong field count")));
        }
        let flag = match &record[6] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::InvalidInput(format!(
                    "{ctx}: elbow_flag must be 0 or 1, got '{other}'"
                )))
            }
        };
        if flag {
            elbow_candidates.push(rows.len());
        }
        rows.push(CurveRow {
            lambda: parse_f64(&record[0], &ctx)?,
            psi: parse_f64(&record[1], &ctx)?,
            r_plus: parse_f64(&record[2], &ctx)?,
            r_minus: parse_f64(&record[3], &ctx)?,
            rmse_plus: parse_f64(&record[4], &ctx)?,
            rmse_minus: parse_f64(&record[5], &ctx)?,
        });
    }
    Ok(PowerRatioCurve {
        family,
        rows,
        elbow_candidates,
        warnings: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// risk outputs

pub fn write_risk_long_csv(path: &Path, matrix: &RiskMatrix) -> Result<()> {
    let mut rows = Vec::new();
    for (t, spec) in matrix.true_losses.iter().enumerate() {
        for (p, label) in matrix.predictor_labels.iter().enumerate() {
            for (i, region) in matrix.region_ids.iter().enumerate() {
                rows.push(vec![
                    spec.family.as_str().to_string(),
                    fmt_f64(spec.lambda),
                    label.clone(),
                    region.clone(),
                    fmt_f64(matrix.rr[t][p][i]),
                ]);
            }
        }
    }
    write_all(
        path,
        &csv_bytes(
            &["true_loss", "lambda", "predictor", "region_id", "rr"],
            &rows,
        ),
    )
}

/// Rebuild a [`RiskMatrix`] from the long-format rr file (the inverse of
/// [`write_risk_long_csv`]); IQR and median are recomputed from the cells.
pub fn read_risk_long_csv(path: &Path) -> Result<RiskMatrix> {
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
        .clone();
    let expect = ["true_loss", "lambda", "predictor", "region_id", "rr"];
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(Error::InvalidInput(format!(
            "{}: expected header {}",
            path.display(),
            expect.join(",")
        )));
    }
    let mut true_losses: Vec<LossSpec> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut region_ids: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        let ctx = format!("{} line {line}", path.display());
        if record.len() != expect.len() {
            return Err(Error::InvalidInput(format!("{ctx}: wrong field count")));
        }
        let family: LossFamily = record[0]
            .parse()
            .map_err(|e: Error| Error::InvalidInput(format!("{ctx}: {e}")))?;
        let lambda = parse_f64(&record[1], &ctx)?;
        let spec = match family {
            LossFamily::SquaredError => LossSpec::squared_error(),
            LossFamily::Linex => {
                LossSpec::linex(lambda).map_err(|e| Error::InvalidInput(format!("{ctx}: {e}")))?
            }
            LossFamily::Pdl => {
                LossSpec::pdl(lambda).map_err(|e| Error::InvalidInput(format!("{ctx}: {e}")))?
            }
        };
        let t = match true_losses.iter().position(|s| *s == spec) {
            Some(i) => i,
            None => {
                true_losses.push(spec);
                true_losses.len() - 1
            }
        };
        let label = record[2].to_string();
        let p = match labels.iter().position(|l| *l == label) {
            Some(i) => i,
            None => {
                labels.push(label);
                labels.len() - 1
            }
        };
        let region = record[3].to_string();
        let i = match region_ids.iter().position(|r| *r == region) {
            Some(i) => i,
            None => {
                region_ids.push(region);
                region_ids.len() - 1
            }
        };
        cells.push((t, p, i, parse_f64(&record[4], &ctx)?));
    }
    let (nt, np, nr) = (true_losses.len(), labels.len(), region_ids.len());
    if nt == 0 {
        return Err(Error::InvalidInput(format!(
            "{}: no relative-risk rows",
            path.display()
        )));
    }
    if cells.len() != nt * np * nr {
        return Err(Error::InvalidInput(format!(
            "{}: expected a full {}x{}x{} cross, got {} rows",
            path.display(),
            nt,
            np,
            nr,
            cells.len()
        )));
    }
    let mut rr = vec![vec![vec![f64::NAN; nr]; np]; nt];
    let mut seen = vec![false; nt * np * nr];
    for (t, p, i, v) in cells {
        let slot = (t * np + p) * nr + i;
        if seen[slot] {
            return Err(Error::InvalidInput(format!(
                "{}: duplicate cell ({}, {}, {})",
                path.display(),
                true_losses[t].label(),
                labels[p],
                region_ids[i]
            )));
        }
        seen[slot] = true;
        rr[t][p][i] = v;
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::InvalidInput(format!(
            "{}: missing cells in the cross",
            path.display()
        )));
    }
    let mut iqr = vec![vec![0.0; np]; nt];
    let mut median_rr = vec![vec![0.0; np]; nt];
    for t in 0..nt {
        for p in 0..np {
            let c = &rr[t][p];
            iqr[t][p] = crate::math::quantile_type7(c, 0.75) - crate::math::quantile_type7(c, 0.25);
            median_rr[t][p] = crate::math::median(c);
        }
    }
    Ok(RiskMatrix {
        true_losses,
        predictor_labels: labels,
        region_ids,
        rr,
        iqr,
        median_rr,
    })
}

pub fn write_risk_summary_csv(path: &Path, rows: &[RiskSummaryRow]) -> Result<()> {
    let out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.true_loss.family.as_str().to_string(),
                fmt_f64(r.true_loss.lambda),
                r.predictor.clone(),
                fmt_f64(r.iqr),
                fmt_f64(r.median_rr),
            ]
        })
        .collect();
    write_all(
        path,
        &csv_bytes(
            &["true_loss", "lambda", "predictor", "iqr", "median_rr"],
            &out,
        ),
    )
}

/// Ranked report: the summary columns plus both rank positions.
pub fn write_report_csv(path: &Path, rows: &[RiskSummaryRow]) -> Result<()> {
    let out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.true_loss.family.as_str().to_string(),
                fmt_f64(r.true_loss.lambda),
                r.predictor.clone(),
                fmt_f64(r.iqr),
                fmt_f64(r.median_rr),
                r.rank_by_iqr.to_string(),
                r.rank_by_median.to_string(),
            ]
        })
        .collect();
    write_all(
        path,
        &csv_bytes(
            &[
                "true_loss",
                "lambda",
                "predictor",
                "iqr",
                "median_rr",
                "rank_by_iqr",
                "rank_by_median",
            ],
            &out,
        ),
    )
}

// ---------------------------------------------------------------------------
// manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Reproducibility record written next to every command's outputs: the
/// manifest plus the digested inputs fully determines every output byte
/// (the timestamp is informational only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub command_line: Vec<String>,
    pub created_utc: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub priors: Option<PriorSpec>,
    pub sampler: Option<SamplerConfig>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn digest_inputs(paths: &[&Path]) -> Result<Vec<InputDigest>> {
        paths
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect()
    }

    /// Recompute every input digest and compare; mismatches list the
    /// offending paths.
    pub fn verify(&self) -> Result<()> {
        let mut bad = Vec::new();
        for input in &self.inputs {
            let actual = sha256_file(Path::new(&input.path))?;
            if actual != input.sha256 {
                bad.push(input.path.clone());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "manifest digest mismatch for: {}",
                bad.join(", ")
            )))
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::InvalidInput(format!("manifest serialization failed: {e}")))?;
    json.push('\n');
    write_all(path, json.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("{}: bad manifest: {e}", path.display())))
}
