//! Summary statistics, generic over the float type.

use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("statistic of an empty sample")]
    EmptyInput,
}

fn count<T: Float>(n: usize) -> T {
    T::from(n).expect("sample size fits the float type")
}

pub fn mean<T: Float>(values: &[T]) -> Result<T, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let sum = values.iter().fold(T::zero(), |acc, &v| acc + v);
    Ok(sum / count(values.len()))
}

/// Standard deviation with divisor N.
pub fn population_sd<T: Float>(values: &[T]) -> Result<T, StatsError> {
    let m = mean(values)?;
    let ss = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - m) * (v - m));
    Ok((ss / count(values.len())).sqrt())
}
