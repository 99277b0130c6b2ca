use rand::Rng;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Per-element scale applied by a training-mode dropout pass (`0` or `1/(1-rate)`).
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask<T>(Vec<T>);

impl<T: Real> DropoutMask<T> {
    pub fn scales(&self) -> &[T] {
        &self.0
    }
}

/// Inverted dropout. Returns the output and, in training mode with `rate > 0`,
/// the mask needed by [`dropout_backward`].
pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: &Tensor<T>,
    rate: f64,
    rng: Option<&mut R>,
) -> Result<(Tensor<T>, Option<DropoutMask<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    let rng = match rng {
        Some(rng) if rate > 0.0 => rng,
        _ => return Ok((x.clone(), None)),
    };
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.numel())
        .map(|_| {
            if rng.gen::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let mut out = x.clone();
    out.clear_grad();
    for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, Some(DropoutMask(mask))))
}

pub fn dropout_backward<T: Real>(
    mask: Option<&DropoutMask<T>>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let Some(mask) = mask else {
        return Ok(grad_out.clone());
    };
    if mask.0.len() != grad_out.numel() {
        return Err(Error::shape(
            "dropout_backward",
            grad_out.shape(),
            &[mask.0.len()],
        ));
    }
    let mut g = grad_out.clone();
    for (v, &m) in g.data_mut().iter_mut().zip(&mask.0) {
        *v *= m;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_and_eval_are_identity() {
        let x = Tensor::<f32>::from_fn(&[4, 4], |i| i as f32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (y, m) = dropout(&x, 0.0, Some(&mut rng)).unwrap();
        assert_eq!(y, x);
        assert!(m.is_none());
        let (y, m) = dropout::<f32, ChaCha8Rng>(&x, 0.3, None).unwrap();
        assert_eq!(y, x);
        assert!(m.is_none());
    }

    #[test]
    fn rejects_rate_of_one() {
        let x = Tensor::<f32>::zeros(&[2]);
        assert!(matches!(
            dropout::<f32, ChaCha8Rng>(&x, 1.0, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_fraction_within_three_sigma() {
        let n = 100_000usize;
        let rate = 0.3;
        let x = Tensor::<f32>::full(&[n], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (y, _) = dropout(&x, rate, Some(&mut rng)).unwrap();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64;
        let sigma = (n as f64 * rate * (1.0 - rate)).sqrt();
        assert!((zeros - n as f64 * rate).abs() < 3.0 * sigma, "{zeros}");
        let survivors = y.data().iter().find(|&&v| v != 0.0).unwrap();
        assert!((survivors - 1.0 / 0.7).abs() < 1e-6);
    }
}
