use crate::error::{Error, Result};
use crate::network::OutputVector;

/// Per-pair measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMetrics {
    pub pm: f64,
    pub pf: f64,
    pub deflection_mid: Option<f64>,
    pub k: usize,
}

/// `f_y - max_{j != y} f_j` on a unit-norm output.
pub fn margin(fnorm: &OutputVector, label: usize) -> Result<f64> {
    let v = fnorm.values();
    if label >= v.len() {
        return Err(Error::OutOfRange {
            index: label,
            limit: v.len(),
        });
    }
    if (fnorm.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "margin needs a normalized output, norm is {}",
            fnorm.norm()
        )));
    }
    let best_other = v
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label)
        .map(|(_, x)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(v[label] - best_other)
}

pub fn pair_margin(m_i: f64, m_j: f64) -> f64 {
    0.5 * (m_i + m_j)
}

/// `|(u0 + u1)/2 - umid|_2`.
pub fn pair_fluctuation(u0: &[f64], u1: &[f64], umid: &[f64]) -> Result<f64> {
    if u0.len() != u1.len() || u0.len() != umid.len() {
        return Err(Error::Dimension {
            expected: u0.len(),
            got: if u1.len() != u0.len() {
                u1.len()
            } else {
                umid.len()
            },
        });
    }
    Ok(u0
        .iter()
        .zip(u1)
        .zip(umid)
        .map(|((a, b), m)| {
            let e = 0.5 * (a + b) - m;
            e * e
        })
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::normalize_output;

    #[test]
    fn margin_sign_and_errors() {
        let f = normalize_output(&OutputVector::new(vec![0.2, 0.5, -0.3])).unwrap();
        assert!(margin(&f, 1).unwrap() > 0.0);
        assert!(margin(&f, 0).unwrap() < 0.0);
        assert!(margin(&f, 3).is_err());
        assert!(margin(&OutputVector::new(vec![3.0, 4.0]), 0).is_err());
    }

    #[test]
    fn margin_eight_tenths() {
        let rest = (1.0f64 - 0.81 - 0.01).sqrt();
        // Spread the remaining mass over enough components that each stays below 0.1.
        let k = 40usize;
        let mut v = vec![0.9, 0.1];
        v.extend(std::iter::repeat(rest / (k as f64).sqrt()).take(k));
        let f = OutputVector::new(v);
        assert!((f.norm() - 1.0).abs() < 1e-12);
        assert!((margin(&f, 0).unwrap() - 0.8).abs() < 1e-12);
        assert!(margin(&f, f.argmax()).unwrap() >= 0.0);
    }

    #[test]
    fn pair_examples() {
        assert_eq!(pair_margin(0.4, 0.6), 0.5);
        assert_eq!(pair_margin(0.3, 0.3), 0.3);
        assert_eq!(pair_margin(0.1, 0.7), pair_margin(0.7, 0.1));
        assert_eq!(
            pair_fluctuation(&[1.0, 2.0], &[3.0, 4.0], &[2.0, 3.0]).unwrap(),
            0.0
        );
        assert_eq!(
            pair_fluctuation(&[0.0, 0.0], &[0.0, 0.0], &[3.0, 4.0]).unwrap(),
            5.0
        );
        assert!(pair_fluctuation(&[0.0], &[0.0, 1.0], &[0.0]).is_err());
    }
}
