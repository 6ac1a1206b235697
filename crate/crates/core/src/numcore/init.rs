use crate::error::{Error, Result};
use crate::numcore::{Real, Rng, Tensor};

/// Half-width of the Glorot uniform interval for a shape.
///
/// Fan-in and fan-out are the last two dims; a vector has fan-out 1.
pub fn glorot_limit(shape: &[usize]) -> Result<f64> {
    let (fan_in, fan_out) = match shape {
        [] => return Err(Error::contract("glorot_uniform needs at least one dim")),
        [n] => (*n, 1),
        [.., a, b] => (*a, *b),
    };
    Ok((6.0 / (fan_in + fan_out) as f64).sqrt())
}

/// I.i.d. samples from `U(-L, L)` with `L = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<F: Real>(shape: &[usize], rng: &mut Rng) -> Result<Tensor<F>> {
    let limit = glorot_limit(shape)?;
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| F::from_f64_lossy(rng.uniform(-limit, limit)))
        .collect();
    Tensor::new(shape, data)
}
