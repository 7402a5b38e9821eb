use crate::error::{KbrError, Result};

fn check(predicted: &[f64], exact: &[f64]) -> Result<()> {
    if predicted.is_empty() {
        return Err(KbrError::InvalidInput("no values to compare".into()));
    }
    if predicted.len() != exact.len() {
        return Err(KbrError::InvalidInput(format!("length mismatch {} vs {}", predicted.len(), exact.len())));
    }
    Ok(())
}

/// `sqrt(mean((p - e)^2)) / field_max`.
pub fn normalized_rmse(predicted: &[f64], exact: &[f64], field_max: f64) -> Result<f64> {
    check(predicted, exact)?;
    if !(field_max > 0.0 && field_max.is_finite()) {
        return Err(KbrError::InvalidInput(format!("field_max must be positive, got {field_max}")));
    }
    Ok(mse(predicted, exact)?.sqrt() / field_max)
}

pub fn mse(predicted: &[f64], exact: &[f64]) -> Result<f64> {
    check(predicted, exact)?;
    Ok(predicted.iter().zip(exact).map(|(p, e)| (p - e) * (p - e)).sum::<f64>() / predicted.len() as f64)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let e = [1.0, -2.0, 3.0];
        assert_eq!(normalized_rmse(&e, &e, 1.0).unwrap(), 0.0);
        let p: Vec<f64> = e.iter().map(|v| v + 0.25).collect();
        assert!((normalized_rmse(&p, &e, 4.0).unwrap() - 0.0625).abs() < 1e-16);
        assert!(normalized_rmse(&[], &[], 1.0).is_err());
        assert!(normalized_rmse(&e, &e, 0.0).is_err());
        assert!(mse(&e, &e[..2]).is_err());
    }
}
