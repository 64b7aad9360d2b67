use crate::error::{Error, Result};

/// Network output with its Euclidean norm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputVector {
    values: Vec<f64>,
    norm: f64,
}

impl OutputVector {
    pub fn new(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        OutputVector { values, norm }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest component (first one on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Scale `f` to unit Euclidean norm.
pub fn normalize_output(f: &OutputVector) -> Result<OutputVector> {
    if !(f.norm > 0.0) || !f.norm.is_finite() {
        return Err(Error::ZeroOutput);
    }
    Ok(OutputVector::new(
        f.values.iter().map(|v| v / f.norm).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_four_five() {
        let n = normalize_output(&OutputVector::new(vec![3.0, 4.0])).unwrap();
        assert!((n.values()[0] - 0.6).abs() < 1e-15);
        assert!((n.values()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_is_rejected() {
        assert!(matches!(
            normalize_output(&OutputVector::new(vec![0.0, 0.0])),
            Err(Error::ZeroOutput)
        ));
    }

    proptest! {
        #[test]
        fn unit_norm_and_argmax_preserved(v in prop::collection::vec(-1e3f64..1e3, 1..12)) {
            let f = OutputVector::new(v);
            prop_assume!(f.norm() > 1e-9);
            let n = normalize_output(&f).unwrap();
            prop_assert!((n.norm() - 1.0).abs() <= 1e-12);
            prop_assert_eq!(n.argmax(), f.argmax());
            let direct = n.values().iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((direct - n.norm()).abs() <= 1e-12 * direct);
        }
    }
}
