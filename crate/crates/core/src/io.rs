//! File ingestion and result serialization.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::DiagnosticsReport;
use crate::error::{Error, Result};
use crate::model::{FitResult, Method, SummaryData};
use crate::sim::MetricRow;

const REQUIRED_COLUMNS: [&str; 5] = [
    "snp_id",
    "beta_exposure",
    "se_exposure",
    "beta_outcome",
    "se_outcome",
];

/// Reads a GWAS-style tab-separated summary file.
///
/// The header must contain `snp_id`, `beta_exposure`, `se_exposure`,
/// `beta_outcome`, `se_outcome` (extra columns such as effect alleles are
/// ignored — no allele harmonization happens here). Lines starting with `#`
/// are skipped, both `\n` and `\r\n` line endings are accepted, and
/// duplicate SNP ids are rejected to catch clumping mistakes.
pub fn read_summary_tsv<P: AsRef<Path>>(path: P) -> Result<SummaryData> {
    let file = File::open(path.as_ref())?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::ParseError {
            line: 1,
            column: String::new(),
            message: e.to_string(),
        })?
        .clone();
    let mut index = [0usize; 5];
    for (i, name) in REQUIRED_COLUMNS.iter().enumerate() {
        index[i] = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut snp_ids = Vec::new();
    let mut gamma_hat = Vec::new();
    let mut sigma_x = Vec::new();
    let mut gamma_cap_hat = Vec::new();
    let mut sigma_y = Vec::new();
    let mut seen = HashSet::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line())
                .unwrap_or(0);
            Error::ParseError {
                line,
                column: String::new(),
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<&str> {
            record.get(index[i]).ok_or_else(|| Error::ParseError {
                line,
                column: name.to_string(),
                message: "missing field".into(),
            })
        };
        let parse = |i: usize, name: &str| -> Result<f64> {
            let raw = field(i, name)?;
            raw.trim().parse::<f64>().map_err(|e| Error::ParseError {
                line,
                column: name.to_string(),
                message: format!("{e} (value `{raw}`)"),
            })
        };
        let id = field(0, "snp_id")?.trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateSnpId(id));
        }
        snp_ids.push(id);
        gamma_hat.push(parse(1, "beta_exposure")?);
        sigma_x.push(parse(2, "se_exposure")?);
        gamma_cap_hat.push(parse(3, "beta_outcome")?);
        sigma_y.push(parse(4, "se_outcome")?);
    }

    SummaryData::new(snp_ids, gamma_hat, sigma_x, gamma_cap_hat, sigma_y)
}

/// 17 significant digits: every f64 round-trips bit-exactly.
fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // JSON has no literal for these
        "null".into()
    }
}

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Writes a fit as a stable-key JSON object.
///
/// Key order: `method, beta_hat, beta_se, ci, tau2_hat, tau2_se, intercept,
/// intercept_se, n_snps, kappa_hat, solver, warnings`. The tau2 fields
/// appear only for APS/RAPS fits, the intercept fields only for Egger, and
/// `kappa_hat` only when supplied. Numbers carry 17 significant digits.
pub fn write_fit_json<P: AsRef<Path>>(
    result: &FitResult,
    kappa_hat: Option<f64>,
    intercept: Option<(f64, f64)>,
    ci_level: f64,
    path: P,
) -> Result<()> {
    let (lo, hi) = result.wald_ci(ci_level);
    let mut fields: Vec<(String, String)> = vec![
        (
            "method".into(),
            format!("\"{}\"", json_escape(result.method.name())),
        ),
        ("beta_hat".into(), fmt_f64(result.beta_hat)),
        ("beta_se".into(), fmt_f64(result.beta_se)),
        ("ci".into(), format!("[{},{}]", fmt_f64(lo), fmt_f64(hi))),
    ];
    if matches!(result.method, Method::Aps | Method::Raps) {
        if let Some(t) = result.tau2_hat {
            fields.push(("tau2_hat".into(), fmt_f64(t)));
        }
        if let Some(t) = result.tau2_se {
            fields.push(("tau2_se".into(), fmt_f64(t)));
        }
    }
    if let Some((a, a_se)) = intercept {
        fields.push(("intercept".into(), fmt_f64(a)));
        fields.push(("intercept_se".into(), fmt_f64(a_se)));
    }
    fields.push(("n_snps".into(), result.n_snps.to_string()));
    if let Some(k) = kappa_hat {
        fields.push(("kappa_hat".into(), fmt_f64(k)));
    }
    fields.push((
        "solver".into(),
        format!(
            "{{\"converged\":{},\"iterations\":{},\"final_score_norm\":{},\"n_roots_found\":{}}}",
            result.solver.converged,
            result.solver.iterations,
            fmt_f64(result.solver.final_score_norm),
            result.solver.n_roots_found
        ),
    ));
    let mut warnings: Vec<String> = result
        .solver
        .warnings
        .iter()
        .map(|w| format!("\"{}\"", json_escape(w)))
        .collect();
    if let Some(c) = &result.convention {
        warnings.push(format!("\"convention: {}\"", json_escape(c)));
    }
    fields.push(("warnings".into(), format!("[{}]", warnings.join(","))));

    let body: Vec<String> = fields
        .into_iter()
        .map(|(k, v)| format!("\"{k}\":{v}"))
        .collect();
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "{{{}}}", body.join(","))?;
    Ok(())
}

/// Writes `<prefix>.qq.csv` (theoretical,empirical) and `<prefix>.loo.csv`
/// (snp_id,f_stat,beta_loo); the leave-one-out rows are sorted by
/// instrument strength ascending. Errors out rather than writing empty
/// files.
pub fn emit_plot_data(diag: &DiagnosticsReport, prefix: &str) -> Result<()> {
    if diag.qq_pairs.is_empty() || diag.loo_estimates.is_empty() {
        return Err(Error::EmptyDiagnostics);
    }
    let mut qq = BufWriter::new(File::create(format!("{prefix}.qq.csv"))?);
    writeln!(qq, "theoretical,empirical")?;
    for (t, e) in &diag.qq_pairs {
        writeln!(qq, "{t},{e}")?;
    }

    let mut rows: Vec<(&String, f64, f64)> = diag
        .loo_estimates
        .iter()
        .zip(&diag.f_stats)
        .map(|((id, beta), &f)| (id, f, *beta))
        .collect();
    rows.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite f-statistics"));
    let mut loo = BufWriter::new(File::create(format!("{prefix}.loo.csv"))?);
    writeln!(loo, "snp_id,f_stat,beta_loo")?;
    for (id, f, beta) in rows {
        writeln!(loo, "{id},{f},{beta}")?;
    }
    Ok(())
}

/// Writes study metrics as CSV in the table column order, with the
/// replicate accounting appended.
pub fn write_metrics_csv<P: AsRef<Path>>(rows: &[MetricRow], path: P) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write_metrics(rows, &mut out)
}

pub fn write_metrics<W: Write>(rows: &[MetricRow], out: &mut W) -> Result<()> {
    writeln!(
        out,
        "method,bias_pct,rmse_pct,ci_len_pct,coverage_pct,n_reps,n_failed"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{},{}",
            r.method, r.bias_pct, r.rmse_pct, r.ci_len_pct, r.coverage_pct, r.n_reps, r.n_failed
        )?;
    }
    Ok(())
}
