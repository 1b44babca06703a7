use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Leave-one-out 1-nearest-neighbour misclassification rate (Euclidean).
///
/// Distance ties resolve to the lowest index.
pub fn one_nn_error(features: &Tensor2, labels: &[usize]) -> Result<f64> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::shape("leave-one-out 1NN needs at least two samples"));
    }
    if labels.len() != n {
        return Err(Error::shape("features and labels differ in length"));
    }
    let mut wrong = 0usize;
    for i in 0..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = features.squared_distance(i, j);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        if labels[best] != labels[i] {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn one_hot_features_are_perfect() {
        let y = [0, 1, 2, 0, 1, 2];
        let mut f = Tensor2::zeros(6, 3);
        for (i, &l) in y.iter().enumerate() {
            f.set(i, l, 1.0);
        }
        assert_eq!(one_nn_error(&f, &y).unwrap(), 0.0);
    }

    #[test]
    fn two_samples_different_labels() {
        let f = Tensor2::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(one_nn_error(&f, &[0, 1]).unwrap(), 1.0);
        assert!(one_nn_error(&Tensor2::from_vec(1, 1, vec![0.0]).unwrap(), &[0]).is_err());
    }

    #[test]
    fn ties_pick_lowest_index() {
        // Point 1 is equidistant from 0 and 2; neighbour 0 wins.
        let f = Tensor2::from_vec(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(one_nn_error(&f, &[0, 0, 1]).unwrap(), 1.0 / 3.0);
    }
}
