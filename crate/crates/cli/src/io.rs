//! Long-format CSV ingestion and export.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use bgnmix::balanced::BalancedDataset;
use nalgebra::DMatrix;

use crate::error::CliError;

const COVARIATE_TOL: f64 = 1e-12;

/// Reads `group,y,x1,...,xp` rows into a balanced dataset.
///
/// Groups keep their order of first appearance and replicate order within a
/// group follows the file.
pub fn ingest_csv(path: &Path) -> Result<BalancedDataset, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ingest_reader(file)
}

pub fn ingest_reader<R: Read>(reader: R) -> Result<BalancedDataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_error(0, e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "group" || &header[1] != "y" {
        return Err(CliError::Input(
            "header must be `group,y,x1,...,xp` with at least one covariate column".into(),
        ));
    }
    let p = header.len() - 2;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Vec<f64>, Vec<f64>, u64)> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, CliError> {
            let v: f64 = rec[i]
                .parse()
                .map_err(|_| parse_error(line, format!("column `{}`: cannot parse `{}`", &header[i], &rec[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_error(line, format!("column `{}` is not finite", &header[i])))
            }
        };
        let y = num(1)?;
        let x = (2..2 + p).map(num).collect::<Result<Vec<_>, _>>()?;
        let key = rec[0].to_string();
        match groups.get_mut(&key) {
            Some((ys, x0, first)) => {
                if x0.iter().zip(&x).any(|(a, b)| (a - b).abs() > COVARIATE_TOL * a.abs().max(1.0)) {
                    return Err(CliError::Input(format!(
                        "line {line}: covariates of group `{key}` differ from line {first}"
                    )));
                }
                ys.push(y);
            }
            None => {
                order.push(key.clone());
                groups.insert(key, (vec![y], x, line));
            }
        }
    }
    if order.is_empty() {
        return Err(CliError::Input("no data rows".into()));
    }
    let w = modal_count(order.iter().map(|g| groups[g].0.len()));
    let offending: Vec<String> = order
        .iter()
        .filter(|g| groups[*g].0.len() != w)
        .map(|g| format!("{g} ({} rows)", groups[g].0.len()))
        .collect();
    if !offending.is_empty() {
        return Err(CliError::Input(format!(
            "unbalanced data: most groups have {w} rows, but {}",
            offending.join(", ")
        )));
    }
    let n = order.len();
    let y = DMatrix::from_fn(n, w, |i, t| groups[&order[i]].0[t]);
    let x = DMatrix::from_fn(n, p, |i, j| groups[&order[i]].1[j]);
    Ok(BalancedDataset::new(y, x)?)
}

// Most frequent group size; ties go to the size seen first.
fn modal_count(counts: impl Iterator<Item = usize>) -> usize {
    let mut tally: Vec<(usize, usize)> = Vec::new();
    for c in counts {
        match tally.iter_mut().find(|t| t.0 == c) {
            Some(t) => t.1 += 1,
            None => tally.push((c, 1)),
        }
    }
    tally
        .iter()
        .fold((0, 0), |best, &t| if t.1 > best.1 { t } else { best })
        .0
}

fn parse_error(line: u64, msg: String) -> CliError {
    CliError::Input(format!("line {line}: {msg}"))
}

/// Writes a dataset in the format read by [`ingest_csv`], groups named `g1..gn`.
pub fn export_csv<W: Write>(d: &BalancedDataset, out: W) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["group".to_string(), "y".to_string()];
    header.extend((1..=d.p()).map(|j| format!("x{j}")));
    wtr.write_record(&header)?;
    for i in 0..d.n() {
        for t in 0..d.w() {
            let mut row = vec![format!("g{}", i + 1), d.y[(i, t)].to_string()];
            row.extend((0..d.p()).map(|j| d.x[(i, j)].to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_small_file() {
        let d = ingest_reader("group,y,x1\na,1,1\nb,2,1\na,1.5,1\nb,3,1\n".as_bytes()).unwrap();
        assert_eq!((d.n(), d.w(), d.p()), (2, 2, 1));
        assert_eq!(d.y.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.5]);
    }

    #[test]
    fn names_unbalanced_group() {
        let err = ingest_reader("group,y,x1\na,1,1\na,2,1\nb,1,1\nb,2,1\nc,1,1\nc,1,1\nc,1,1\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.contains("c (3 rows)"), "{err}");
    }

    #[test]
    fn reports_line_numbers() {
        let err = ingest_reader("group,y,x1\na,1,1\na,oops,1\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = ingest_reader("group,y,x1\na,1,1\na,2,1.5\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("differ"), "{err}");
    }
}
