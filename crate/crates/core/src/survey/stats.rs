use serde::{Deserialize, Serialize};

use super::SurveyError;

/// Maps a rating to `min + max - x`, so the scale runs the other way.
pub fn reverse_code(x: f64, min: f64, max: f64) -> Result<f64, SurveyError> {
    if !(min <= x && x <= max) {
        return Err(SurveyError::Range { value: x, min, max });
    }
    Ok(min + max - x)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Variance with the `n - 1` denominator.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    pub alpha: f64,
    pub items: usize,
    /// Respondents with every item answered.
    pub respondents: usize,
    /// Respondents left out for a missing answer.
    pub dropped: usize,
}

/// Cronbach's alpha over rows of item ratings, one row per respondent.
///
/// `k / (k - 1) * (1 - sum of item variances / variance of row totals)`,
/// sample variances throughout. Rows with any missing rating are dropped.
pub fn cronbach_alpha(rows: &[Vec<Option<f64>>]) -> Result<Alpha, SurveyError> {
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return Err(SurveyError::Shape("rows have different lengths".into()));
    }
    let complete: Vec<Vec<f64>> = rows
        .iter()
        .filter_map(|r| r.iter().copied().collect::<Option<Vec<f64>>>())
        .collect();
    let n = complete.len();
    if k < 2 || n < 2 {
        return Err(SurveyError::InsufficientData {
            items: k,
            respondents: n,
        });
    }
    let item_var: f64 = (0..k)
        .map(|j| sample_variance(&complete.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .sum();
    let totals: Vec<f64> = complete.iter().map(|r| r.iter().sum()).collect();
    let total_var = sample_variance(&totals);
    if total_var == 0.0 {
        return Err(SurveyError::ZeroVariance("row totals".into()));
    }
    let k = k as f64;
    Ok(Alpha {
        alpha: k / (k - 1.0) * (1.0 - item_var / total_var),
        items: k as usize,
        respondents: n,
        dropped: rows.len() - n,
    })
}

/// Product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, SurveyError> {
    if x.len() != y.len() {
        return Err(SurveyError::Shape(format!(
            "x has {} values, y has {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(SurveyError::InsufficientData {
            items: 2,
            respondents: x.len(),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(SurveyError::ZeroVariance("x".into()));
    }
    if syy == 0.0 {
        return Err(SurveyError::ZeroVariance("y".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Standard scores using the sample standard deviation.
pub fn z_scores(x: &[f64]) -> Result<Vec<f64>, SurveyError> {
    if x.len() < 2 {
        return Err(SurveyError::InsufficientData {
            items: 1,
            respondents: x.len(),
        });
    }
    let sd = sample_variance(x).sqrt();
    if sd == 0.0 {
        return Err(SurveyError::ZeroVariance("x".into()));
    }
    let m = mean(x);
    Ok(x.iter().map(|v| (v - m) / sd).collect())
}
