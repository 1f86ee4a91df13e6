use super::error::TensorError;
use super::rng::SeededRng;
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Uniform Xavier bound `sqrt(6 / (fan_in + fan_out))`.
///
/// Matrices use `fan_in = rows`, `fan_out = cols`; a vector of length `n`
/// is treated as a `1×n` matrix; higher ranks fold trailing extents into
/// `fan_out`.
pub fn xavier_bound(shape: &[usize]) -> Result<f64, TensorError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    let (fan_in, fan_out) = match shape {
        [n] => (1, *n),
        [r, rest @ ..] => (*r, rest.iter().product()),
        [] => unreachable!(),
    };
    Ok((6.0 / (fan_in + fan_out) as f64).sqrt())
}

pub fn xavier_uniform<S: Scalar>(shape: &[usize], rng: &mut SeededRng) -> Result<Tensor<S>, TensorError> {
    uniform_init(shape, xavier_bound(shape)?, rng)
}

/// Uniform draws on `[-bound, bound]`, e.g. a bias vector sharing the
/// Xavier bound of its layer's weight matrix.
pub fn uniform_init<S: Scalar>(shape: &[usize], bound: f64, rng: &mut SeededRng) -> Result<Tensor<S>, TensorError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| S::lit(-bound + 2.0 * bound * rng.unit()))
        .collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three_within_unit_bound() {
        let mut rng = SeededRng::new(11);
        let t: Tensor<f64> = xavier_uniform(&[3, 3], &mut rng).unwrap();
        assert!(t.data().iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn mean_near_zero() {
        // Uniform on ±b with b = sqrt(6/64): sd = b/sqrt(3) ≈ 0.177; the
        // mean of 1e5 draws has sd ≈ 5.6e-4, so 0.01 is far beyond 5σ.
        let mut rng = SeededRng::new(5);
        let mut total = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let t: Tensor<f64> = xavier_uniform(&[32, 32], &mut rng).unwrap();
            total += t.data().iter().sum::<f64>();
            count += t.len();
        }
        assert!((total / count as f64).abs() < 0.01);
    }

    #[test]
    fn deterministic_per_seed() {
        let a: Tensor<f64> = xavier_uniform(&[4, 6], &mut SeededRng::new(2)).unwrap();
        let b: Tensor<f64> = xavier_uniform(&[4, 6], &mut SeededRng::new(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(xavier_uniform::<f64>(&[0, 3], &mut SeededRng::new(1)).is_err());
        assert!(xavier_uniform::<f64>(&[], &mut SeededRng::new(1)).is_err());
    }
}
