//! MDSVR1 model dump (little-endian): magic, `dim: u64`, `bias: f64`,
//! `has_sigma: u8`, `sigma: f64`, then `dim` weights and `dim` means.

use std::path::Path;

use super::{InnerMae, NestedCvResult, SvrModel};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::eval::io::csv_string;
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 6] = b"MDSVR1";

pub fn encode_model(model: &SvrModel) -> Result<Vec<u8>> {
    if model.training_feature_means.len() != model.weights.len() {
        return Err(Error::data("model weights and means differ in length"));
    }
    let mut w = Writer::new(MODEL_MAGIC);
    w.u64(model.weights.len() as u64);
    w.f64(model.bias);
    w.u8(model.sigma_used.is_some() as u8);
    w.f64(model.sigma_used.unwrap_or(0.0));
    model.weights.iter().chain(&model.training_feature_means).for_each(|&x| w.f64(x));
    Ok(w.buf)
}

pub fn decode_model(bytes: &[u8]) -> Result<SvrModel> {
    let mut r = Reader::new(bytes, MODEL_MAGIC, "MDSVR1")?;
    let dim = r.u64()?;
    let bias = r.f64()?;
    let has_sigma = r.u8()?;
    let sigma = r.f64()?;
    let dim = r.check_len(dim, 16)?;
    let weights = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let means = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(SvrModel {
        weights,
        bias,
        sigma_used: match has_sigma {
            0 => None,
            1 => Some(sigma),
            other => return Err(Error::data(format!("MDSVR1 sigma flag {other}"))),
        },
        training_feature_means: means,
    })
}

pub fn write_model(path: &Path, model: &SvrModel) -> Result<()> {
    write_file(path, &encode_model(model)?)
}

pub fn read_model(path: &Path) -> Result<SvrModel> {
    decode_model(&read_file(path)?)
}

/// `subject_id, behavioral_srt, predicted_srt, chosen_sigma`.
pub fn predictions_csv_string(result: &NestedCvResult) -> Result<String> {
    csv_string(
        &["subject_id", "behavioral_srt", "predicted_srt", "chosen_sigma"],
        result.folds.iter().map(|f| {
            vec![
                f.subject_id.to_string(),
                f.behavioral_srt.to_string(),
                f.predicted_srt.to_string(),
                f.chosen_sigma.to_string(),
            ]
        }),
    )
}

/// `outer_subject, sigma, mae`, with the multiplier alongside.
pub fn inner_mae_csv_string(rows: &[InnerMae]) -> Result<String> {
    csv_string(
        &["outer_subject", "sigma", "mae", "sigma_multiplier"],
        rows.iter().map(|r| {
            vec![
                r.outer_subject.to_string(),
                r.sigma.to_string(),
                r.mae.to_string(),
                r.multiplier.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let m = SvrModel {
            weights: vec![0.5, -1.25, 3.0],
            bias: -9.07,
            sigma_used: Some(0.031),
            training_feature_means: vec![0.1, 0.2, 0.7],
        };
        let b = encode_model(&m).unwrap();
        assert_eq!(decode_model(&b).unwrap(), m);
        assert!(decode_model(&b[..b.len() - 1]).is_err());
        let none = SvrModel { sigma_used: None, ..m };
        assert_eq!(decode_model(&encode_model(&none).unwrap()).unwrap(), none);
    }
}
