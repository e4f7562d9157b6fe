//! CSV and JSON artifacts of the evaluation stage.

use std::path::Path;

use serde::Serialize;

use super::{EvaluationReport, NullDistribution, ReductionGrid, ShapReport};
use crate::binio::write_file;
use crate::{Error, Result};

pub(crate) fn csv_string<R: AsRef<[String]>>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::data(format!("writing CSV: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r.as_ref()).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(format!("writing CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::data(e.to_string()))
}

pub fn null_csv_string(null: &NullDistribution) -> Result<String> {
    csv_string(
        &["perm_index", "r", "z"],
        null.r_values
            .iter()
            .zip(&null.z_values)
            .enumerate()
            .map(|(i, (r, z))| vec![i.to_string(), r.to_string(), z.to_string()]),
    )
}

pub fn shap_groups_csv_string(shap: &ShapReport) -> Result<String> {
    csv_string(
        &["axis", "level", "mean_abs_phi", "sum_phi"],
        shap.groups.iter().map(|g| {
            vec![
                g.axis.to_string(),
                g.level.clone(),
                g.mean_abs_phi.to_string(),
                g.sum_phi.to_string(),
            ]
        }),
    )
}

pub fn reduction_csv_string(grids: &[ReductionGrid]) -> Result<String> {
    csv_string(
        &["mode", "cell", "decoder_set", "r", "nrmse", "median_db"],
        grids.iter().flat_map(|g| &g.cells).map(|c| {
            vec![
                c.mode.to_string(),
                c.value.to_string(),
                c.decoder_set.to_string(),
                c.report.pearson_r.to_string(),
                c.report.nrmse.to_string(),
                c.report.median_abs_diff_db.to_string(),
            ]
        }),
    )
}

pub fn json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::data(format!("serializing JSON: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_report(path: &Path, report: &EvaluationReport) -> Result<()> {
    write_file(path, json_string(report)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate;

    #[test]
    fn report_json_has_reference_rows() {
        let r = evaluate(&[-10.0, -9.0, -8.0], &[-9.8, -9.1, -8.3]).unwrap();
        let s = json_string(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["reference_table"].as_array().unwrap().len(), 6);
        assert_eq!(v["n_subjects"], 3);
    }
}
