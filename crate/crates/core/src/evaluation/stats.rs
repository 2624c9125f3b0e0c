use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("TooFewSamples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("responses must lie in -3..=3, got {0}")]
    OutOfRange(i32),
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Welch's unequal-variance t-test. Returns `(t, p)` with a two-sided p.
///
/// When both samples have zero variance the statistic is undefined: equal
/// means give `(0, 1)`, different means give `(±inf, 0)`.
pub fn welch_t_test(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), StatsError> {
    let got = xs.len().min(ys.len());
    if got < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got });
    }
    let (mx, vx) = mean_var(xs);
    let (my, vy) = mean_var(ys);
    let (ax, ay) = (vx / xs.len() as f64, vy / ys.len() as f64);
    let se2 = ax + ay;
    if se2 == 0.0 {
        return Ok(if mx == my {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mx - my), 0.0)
        });
    }
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / (ax * ax / (xs.len() as f64 - 1.0) + ay * ay / (ys.len() as f64 - 1.0));
    Ok((t, two_sided_p(t, df)))
}

/// One-sample t-test of `xs` against `mu`. Zero variance gives `p = 1` when
/// the mean equals `mu` and `p = 0` otherwise.
pub fn one_sample_t_test(xs: &[f64], mu: f64) -> Result<(f64, f64), StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: xs.len() });
    }
    let (m, v) = mean_var(xs);
    if v == 0.0 {
        return Ok(if m == mu { (0.0, 1.0) } else { (f64::INFINITY.copysign(m - mu), 0.0) });
    }
    let t = (m - mu) / (v / xs.len() as f64).sqrt();
    Ok((t, two_sided_p(t, xs.len() as f64 - 1.0)))
}

/// Percentage of pairings in which A was preferred and the p-value of a
/// one-sample t-test of the 0/1 outcomes against 0.5.
pub fn preference_test(a_preferred: &[bool]) -> Result<(f64, f64), StatsError> {
    let xs: Vec<f64> = a_preferred.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    if xs.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    let percent = 100.0 * xs.iter().sum::<f64>() / xs.len() as f64;
    let p = if xs.len() < 2 { 1.0 } else { one_sample_t_test(&xs, 0.5)?.1 };
    Ok((percent, p))
}

/// Two-column preference table, one row per comparison.
pub fn preference_table(rows: &[(String, Vec<bool>)]) -> Result<String, StatsError> {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("comparison".len());
    let mut out = format!("{:<width$}  {:>12}  {:>8}\n", "comparison", "% preferred", "p-value");
    for (name, outcomes) in rows {
        let (pct, p) = preference_test(outcomes)?;
        out.push_str(&format!("{name:<width$}  {pct:>12.1}  {p:>8.4}\n"));
    }
    Ok(out)
}

/// Center each participant's Likert responses on their own mean.
pub fn likert_normalize(responses: &[Vec<i32>]) -> Result<Vec<Vec<f64>>, StatsError> {
    responses
        .iter()
        .map(|r| {
            if let Some(&bad) = r.iter().find(|v| !(-3..=3).contains(*v)) {
                return Err(StatsError::OutOfRange(bad));
            }
            // (n*v - sum) / n is exact in the numerator, so shifting every
            // response leaves the result bit-identical
            let n = r.len() as i64;
            let sum: i64 = r.iter().map(|&v| v as i64).sum();
            Ok(r.iter().map(|&v| (n * v as i64 - sum) as f64 / n as f64).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_have_p_one() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        assert_eq!(welch_t_test(&xs, &xs).unwrap().1, 1.0);
        assert_eq!(welch_t_test(&[3.0; 4], &[3.0; 5]).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn separated_samples_are_significant() {
        let xs: Vec<f64> = (0..5).map(|i| i as f64 * 1e-9).collect();
        let ys: Vec<f64> = (0..5).map(|i| 1.0 + i as f64 * 1e-9).collect();
        assert!(welch_t_test(&xs, &ys).unwrap().1 < 1e-6);
    }

    #[test]
    fn matches_a_textbook_value() {
        // scipy.stats.ttest_ind(a, b, equal_var=False)
        let a = [27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4];
        let b = [27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4];
        let (t, p) = welch_t_test(&a, &b).unwrap();
        assert!((t - -2.455356398286006).abs() < 1e-9, "t = {t}");
        assert!((p - 0.021378001462866985).abs() < 1e-7, "p = {p}");
    }

    #[test]
    fn too_few_samples() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn preference_extremes() {
        let (pct, p) = preference_test(&[true; 20]).unwrap();
        assert_eq!(pct, 100.0);
        assert!(p < 0.001);
        let half: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        assert_eq!(preference_test(&half).unwrap(), (50.0, 1.0));
    }

    #[test]
    fn likert_centering() {
        let out = likert_normalize(&[vec![2, 2, 2], vec![-3, 0, 3, 1]]).unwrap();
        assert_eq!(out[0], vec![0.0; 3]);
        assert!(out[1].iter().sum::<f64>().abs() < 1e-12);
        let shifted = likert_normalize(&[vec![-2, 1, 3, 2]]).unwrap();
        let base = likert_normalize(&[vec![-3, 0, 2, 1]]).unwrap();
        assert_eq!(shifted, base);
        assert!(likert_normalize(&[vec![4]]).is_err());
    }
}
