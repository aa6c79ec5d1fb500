//! CSV ingestion and emission.
//!
//! Input files need a header row. Empty cells and the literal `NA` are
//! treated as missing and rejected with the row number and column name;
//! the estimators assume complete data.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::config::AnalysisConfig;
use crate::data::{Dataset, TreatmentColumn, TreatmentData};
use crate::error::{Error, Result};

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

fn parse_cell(cell: &str, row: usize, col: &str) -> Result<f64> {
    if is_missing(cell) {
        return Err(Error::Data(format!(
            "missing value in data row {}, column '{}'",
            row, col
        )));
    }
    cell.trim().parse::<f64>().map_err(|_| {
        Error::Data(format!("cannot parse '{}' in data row {}, column '{}'", cell, row, col))
    })
}

/// Reads a dataset according to the analysis config. `require_regimen`
/// makes the regimen column mandatory (irm runs).
pub fn read_dataset(path: &Path, cfg: &AnalysisConfig, require_regimen: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open '{}': {}", path.display(), e)))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| Error::Data(e.to_string()))?.iter().map(String::from).collect();

    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column '{}' not found in CSV header", name)))
    };

    let outcome_idx = col_index(&cfg.outcome)?;
    let treatment_idx: Vec<usize> =
        cfg.treatments.iter().map(|t| col_index(&t.name)).collect::<Result<Vec<_>>>()?;
    let regimen_idx = match (&cfg.regimen, require_regimen) {
        (Some(name), _) => Some(col_index(name)?),
        (None, true) => {
            return Err(Error::Invalid(
                "config must name a regimen column for interactive-model runs".into(),
            ))
        }
        (None, false) => None,
    };

    let covariate_names: Vec<String> = match &cfg.covariates {
        Some(names) => {
            for n in names {
                col_index(n)?;
            }
            names.clone()
        }
        None => {
            let mut used: Vec<usize> = vec![outcome_idx];
            used.extend(&treatment_idx);
            if let Some(r) = regimen_idx {
                used.push(r);
            }
            headers
                .iter()
                .enumerate()
                .filter(|(i, _)| !used.contains(i))
                .map(|(_, h)| h.clone())
                .collect()
        }
    };
    if covariate_names.is_empty() {
        return Err(Error::Data("no covariate columns left after assignments".into()));
    }
    let covariate_idx: Vec<usize> =
        covariate_names.iter().map(|n| col_index(n)).collect::<Result<Vec<_>>>()?;

    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    let mut treatment_raw: Vec<Vec<String>> = vec![Vec::new(); cfg.treatments.len()];
    let mut regimen: Vec<usize> = Vec::new();

    for (r, record) in reader.records().enumerate() {
        let row_no = r + 1;
        let record = record.map_err(|e| Error::Data(format!("row {}: {}", row_no, e)))?;
        let get = |idx: usize| -> &str { record.get(idx).unwrap_or("") };

        let mut xr = Vec::with_capacity(covariate_idx.len());
        for (&ci, name) in covariate_idx.iter().zip(covariate_names.iter()) {
            xr.push(parse_cell(get(ci), row_no, name)?);
        }
        x_rows.push(xr);
        y.push(parse_cell(get(outcome_idx), row_no, &cfg.outcome)?);
        for (ti, &idx) in treatment_idx.iter().enumerate() {
            let cell = get(idx);
            if is_missing(cell) {
                return Err(Error::Data(format!(
                    "missing value in data row {}, column '{}'",
                    row_no, cfg.treatments[ti].name
                )));
            }
            treatment_raw[ti].push(cell.trim().to_string());
        }
        if let Some(ri) = regimen_idx {
            let v = parse_cell(get(ri), row_no, cfg.regimen.as_ref().unwrap())?;
            if v.fract() != 0.0 || v < 1.0 {
                return Err(Error::Data(format!(
                    "regimen value '{}' in data row {} is not an integer >= 1",
                    v, row_no
                )));
            }
            regimen.push(v as usize);
        }
    }
    if x_rows.is_empty() {
        return Err(Error::Data("CSV contains no data rows".into()));
    }

    let n = x_rows.len();
    let p = covariate_names.len();
    let mut x = Array2::zeros((n, p));
    for (i, row) in x_rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }

    let mut treatments = Vec::with_capacity(cfg.treatments.len());
    for (ti, decl) in cfg.treatments.iter().enumerate() {
        let raw = &treatment_raw[ti];
        let col = match decl.kind.as_str() {
            "binary" => {
                let mut vals = Vec::with_capacity(n);
                for (i, cell) in raw.iter().enumerate() {
                    match cell.as_str() {
                        "0" => vals.push(0u8),
                        "1" => vals.push(1u8),
                        other => {
                            return Err(Error::Data(format!(
                                "binary treatment '{}' has value '{}' in data row {}",
                                decl.name,
                                other,
                                i + 1
                            )))
                        }
                    }
                }
                TreatmentColumn::binary(&decl.name, vals)
            }
            "continuous" => {
                let mut vals = Vec::with_capacity(n);
                for (i, cell) in raw.iter().enumerate() {
                    vals.push(parse_cell(cell, i + 1, &decl.name)?);
                }
                TreatmentColumn::continuous(&decl.name, vals)
            }
            "categorical" => match &decl.levels {
                Some(levels) => {
                    let reference = match &decl.reference {
                        Some(r) => levels.iter().position(|l| l == r).ok_or_else(|| {
                            Error::Invalid(format!(
                                "reference '{}' not among levels of '{}'",
                                r, decl.name
                            ))
                        })?,
                        None => 0,
                    };
                    let mut vals = Vec::with_capacity(n);
                    for (i, cell) in raw.iter().enumerate() {
                        let level = levels.iter().position(|l| l == cell).ok_or_else(|| {
                            Error::Data(format!(
                                "treatment '{}' has unknown level '{}' in data row {}",
                                decl.name,
                                cell,
                                i + 1
                            ))
                        })?;
                        vals.push(level);
                    }
                    TreatmentColumn::categorical_labeled(
                        &decl.name,
                        vals,
                        levels.clone(),
                        reference,
                    )
                }
                None => {
                    // numeric level indices 0..L
                    let mut vals = Vec::with_capacity(n);
                    for (i, cell) in raw.iter().enumerate() {
                        let v = parse_cell(cell, i + 1, &decl.name)?;
                        if v.fract() != 0.0 || v < 0.0 {
                            return Err(Error::Data(format!(
                                "categorical treatment '{}' has non-index value '{}' in data row {}",
                                decl.name,
                                cell,
                                i + 1
                            )));
                        }
                        vals.push(v as usize);
                    }
                    let n_levels = vals.iter().max().map(|m| m + 1).unwrap_or(0);
                    TreatmentColumn::categorical(&decl.name, vals, n_levels)
                }
            },
            other => {
                return Err(Error::Invalid(format!(
                    "treatment '{}' has unknown kind '{}'",
                    decl.name, other
                )))
            }
        };
        treatments.push(col);
    }

    Dataset::new(
        x,
        covariate_names,
        Array1::from_vec(y),
        treatments,
        if regimen.is_empty() { None } else { Some(regimen) },
    )
}

/// Writes a dataset as CSV compatible with [`read_dataset`]: covariate
/// columns under their names, treatments under theirs, the regimen (if
/// any) as `r`, and the outcome as `y`.
pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("cannot create '{}': {}", path.display(), e)))?;
    let mut header: Vec<String> = ds.covariate_names.clone();
    for t in &ds.treatments {
        header.push(t.name.clone());
    }
    if ds.regimen.is_some() {
        header.push("r".into());
    }
    header.push("y".into());
    writer.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;

    for i in 0..ds.n_obs() {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for j in 0..ds.x.ncols() {
            row.push(format!("{}", ds.x[[i, j]]));
        }
        for t in &ds.treatments {
            let cell = match &t.data {
                TreatmentData::Binary { values } => values[i].to_string(),
                TreatmentData::Categorical { values, labels, .. } => labels[values[i]].clone(),
                TreatmentData::Continuous { values } => format!("{}", values[i]),
            };
            row.push(cell);
        }
        if let Some(r) = &ds.regimen {
            row.push(r[i].to_string());
        }
        row.push(format!("{}", ds.y[i]));
        writer.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TreatmentDecl;

    fn write_temp(content: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!(
            "multidml_io_test_{}_{}.csv",
            std::process::id(),
            content.len()
        ));
        std::fs::write(&path, content).unwrap();
        path
    }

    fn basic_config() -> AnalysisConfig {
        toml::from_str(
            r#"
outcome = "y"
[[treatments]]
name = "a"
kind = "binary"
"#,
        )
        .unwrap()
    }

    #[test]
    fn reads_basic_csv() {
        let path = write_temp("x1,x2,a,y\n1.0,2.0,1,3.5\n2.0,1.0,0,1.5\n0.5,0.5,1,2.0\n");
        let ds = read_dataset(&path, &basic_config(), false).unwrap();
        assert_eq!(ds.n_obs(), 3);
        assert_eq!(ds.covariate_names, vec!["x1", "x2"]);
        assert_eq!(ds.y[0], 3.5);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn missing_cell_reports_row_and_column() {
        let path = write_temp("x1,a,y\n1.0,1,3.5\n,0,1.5\n");
        let err = read_dataset(&path, &basic_config(), false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("x1"), "{}", msg);
        let path2 = write_temp("x1,a,y\n1.0,1,3.5\n2.0,NA,1.5\n");
        let err2 = read_dataset(&path2, &basic_config(), false).unwrap_err();
        assert!(err2.to_string().contains("'a'"), "{}", err2);
        std::fs::remove_file(path).ok();
        std::fs::remove_file(path2).ok();
    }

    #[test]
    fn categorical_labels_map_to_levels() {
        let mut cfg = basic_config();
        cfg.treatments = vec![TreatmentDecl {
            name: "art".into(),
            kind: "categorical".into(),
            levels: Some(vec!["NNRTI".into(), "bPI".into(), "DTG".into()]),
            reference: Some("NNRTI".into()),
        }];
        let path = write_temp("x1,art,y\n1.0,NNRTI,1.0\n2.0,bPI,2.0\n3.0,DTG,3.0\n4.0,bPI,4.0\n");
        let ds = read_dataset(&path, &cfg, false).unwrap();
        match &ds.treatments[0].data {
            TreatmentData::Categorical { values, reference, .. } => {
                assert_eq!(values, &vec![0, 1, 2, 1]);
                assert_eq!(*reference, 0);
            }
            _ => panic!("expected categorical"),
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn round_trip_through_csv() {
        let (ds, _) = crate::simgen::gen_plm(&crate::simgen::PlmSimConfig {
            n: 60,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let path = std::env::temp_dir()
            .join(format!("multidml_io_roundtrip_{}.csv", std::process::id()));
        write_dataset_csv(&ds, &path).unwrap();
        let cfg: AnalysisConfig = toml::from_str(
            r#"
outcome = "y"
[[treatments]]
name = "a1"
kind = "binary"
[[treatments]]
name = "a2"
kind = "continuous"
"#,
        )
        .unwrap();
        let back = read_dataset(&path, &cfg, false).unwrap();
        assert_eq!(back.n_obs(), ds.n_obs());
        assert_eq!(back.covariate_names, ds.covariate_names);
        for i in 0..ds.n_obs() {
            assert!((back.y[i] - ds.y[i]).abs() < 1e-12);
        }
        std::fs::remove_file(path).ok();
    }
}
