//! Rows of the `trade kappa` table.

use anyhow::{bail, Context, Result};
use serde::Serialize;
use trade_core::theory::{
    epsilon_bounds, exponent_with, shrink_power_with, solve_kappa_general, EpsilonCase, ExponentForm, TheoryParams,
};
use trade_core::TradeError;

/// Parses `7`, `2,3,5` or the inclusive range `2..6`.
pub fn parse_list(s: &str) -> Result<Vec<usize>> {
    let parse = |t: &str| t.trim().parse::<usize>().with_context(|| format!("not a count: {t:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (parse(a)?, parse(b.trim_start_matches('='))?);
        if a > b {
            bail!("empty range {s:?}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(parse).collect()
}

#[derive(Debug, Clone, Default)]
pub struct TableSpec {
    pub ns: Vec<usize>,
    /// Empty means `n..=10n` for every `n`.
    pub ks: Vec<usize>,
    pub tol: f64,
    /// `None` means `2n`.
    pub coef: Option<f64>,
    pub form: ExponentForm,
    /// `None` means `5 sqrt(n)`.
    pub d: Option<f64>,
    pub beta: Option<f64>,
    pub lipschitz: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub n: usize,
    pub k: usize,
    pub exponent: u32,
    pub kappa: f64,
    pub angle_bound: f64,
    /// Empty when the inputs are missing or the bound is vacuous.
    pub eps_angle: Option<f64>,
    pub eps_norm: Option<f64>,
}

fn optional(r: std::result::Result<f64, TradeError>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(TradeError::VacuousBound(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn rows(spec: &TableSpec) -> Result<Vec<Row>> {
    let mut out = Vec::new();
    for &n in &spec.ns {
        let ks: Vec<usize> = if spec.ks.is_empty() { (n..=10 * n).collect() } else { spec.ks.clone() };
        for k in ks.into_iter().filter(|&k| k >= n) {
            let coef = spec.coef.unwrap_or(2.0 * n as f64);
            let kappa = solve_kappa_general(n, k, spec.tol, coef, spec.form)?;
            let angle_bound = 2.0 * shrink_power_with(n, k, spec.form)?.clamp(0.0, 1.0).asin();
            let base = TheoryParams {
                n,
                k,
                d: spec.d.unwrap_or(5.0 * (n as f64).sqrt()),
                beta: spec.beta.unwrap_or(0.0),
                lipschitz: spec.lipschitz.unwrap_or(0.0),
                delta: spec.delta.unwrap_or(0.0),
                kappa,
            };
            let eps_angle = match (spec.lipschitz, spec.delta) {
                (Some(_), Some(_)) => optional(epsilon_bounds(&base, EpsilonCase::Angle))?,
                _ => None,
            };
            let eps_norm = match (spec.beta, spec.delta) {
                (Some(_), Some(_)) => optional(epsilon_bounds(&base, EpsilonCase::Norm))?,
                _ => None,
            };
            out.push(Row { n, k, exponent: exponent_with(n, k, spec.form)?, kappa, angle_bound, eps_angle, eps_norm });
        }
    }
    Ok(out)
}

pub fn write_csv<W: std::io::Write>(rows: &[Row], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("3").unwrap(), vec![3]);
        assert_eq!(parse_list("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_list("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_list("4, 6").unwrap(), vec![4, 6]);
        assert!(parse_list("5..2").is_err());
        assert!(parse_list("x").is_err());
    }

    #[test]
    fn default_k_range_and_vacuous_angle_case() {
        let spec = TableSpec {
            ns: vec![3],
            tol: 1e-9,
            beta: Some(2.0),
            lipschitz: Some(1.0),
            delta: Some(1.0),
            ..Default::default()
        };
        let rows = rows(&spec).unwrap();
        assert_eq!(rows.len(), 28);
        assert_eq!((rows[0].k, rows[0].exponent, rows[0].eps_angle), (3, 0, None));
        assert!(rows[0].eps_norm.is_some());
        assert!(rows.last().unwrap().eps_angle.unwrap() > 0.0);
        assert!(rows.windows(2).all(|w| w[1].kappa >= w[0].kappa));
    }

    #[test]
    fn csv_has_header_and_blank_optional_cells() {
        let spec = TableSpec { ns: vec![2], ks: vec![4], tol: 1e-9, ..Default::default() };
        let mut buf = Vec::new();
        write_csv(&rows(&spec).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,k,exponent,kappa,angle_bound,eps_angle,eps_norm");
        assert!(lines[1].starts_with("2,4,2,") && lines[1].ends_with(",,"), "{}", lines[1]);
    }
}
