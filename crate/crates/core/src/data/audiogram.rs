use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal audiogram frequencies in Hz.
pub const AUDIOGRAM_FREQUENCIES_HZ: [u32; 8] = [250, 500, 1000, 2000, 3000, 4000, 6000, 8000];

/// Hearing thresholds in dB HL at [`AUDIOGRAM_FREQUENCIES_HZ`]. Higher means
/// worse hearing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Audiogram([f64; 8]);

impl Audiogram {
    pub fn new(thresholds: &[f64]) -> Result<Self> {
        let values: [f64; 8] = thresholds.try_into().map_err(|_| {
            Error::Validation(format!(
                "audiogram needs 8 thresholds, got {}",
                thresholds.len()
            ))
        })?;
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Validation(format!(
                "audiogram thresholds must be finite and non-negative, got {bad}"
            )));
        }
        Ok(Audiogram(values))
    }

    pub fn zeros() -> Self {
        Audiogram([0.0; 8])
    }

    pub fn thresholds(&self) -> &[f64; 8] {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / 8.0
    }
}

impl TryFrom<Vec<f64>> for Audiogram {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Audiogram::new(&v)
    }
}

impl From<Audiogram> for Vec<f64> {
    fn from(a: Audiogram) -> Self {
        a.0.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_length_and_sign() {
        assert!(Audiogram::new(&[0.0; 7]).is_err());
        assert!(Audiogram::new(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]).is_err());
        let a = Audiogram::new(&[20.0, 25.0, 30.0, 40.0, 55.0, 60.0, 70.0, 80.0]).unwrap();
        assert_eq!(a.mean(), 47.5);
    }

    #[test]
    fn serde_uses_plain_arrays() {
        let a = Audiogram::new(&[1.0; 8]).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "[1.0,1.0,1.0,1.0,1.0,1.0,1.0,1.0]");
        assert!(serde_json::from_str::<Audiogram>("[1.0]").is_err());
    }
}
