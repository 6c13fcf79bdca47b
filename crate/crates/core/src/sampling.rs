//! Seeded sample points for numerical verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Half-width of the default sampling box `[-2, 2]^d`.
pub const DEFAULT_HALF_WIDTH: f64 = 2.0;

/// Re-draws allowed per sample point when evaluation fails there.
pub const MAX_RETRIES: usize = 10;

pub struct Sampler {
    rng: ChaCha8Rng,
    half_width: f64,
}

/// Outcome of probing one sample slot.
pub enum Probe<T, E> {
    Hit { point: Vec<f64>, value: T },
    /// Every attempt failed; carries the last point and error.
    Miss { point: Vec<f64>, error: E },
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self::with_half_width(seed, DEFAULT_HALF_WIDTH)
    }

    pub fn with_half_width(seed: u64, half_width: f64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            half_width,
        }
    }

    pub fn point(&mut self, dim: usize) -> Vec<f64> {
        let h = self.half_width;
        (0..dim).map(|_| self.rng.random_range(-h..=h)).collect()
    }

    /// Draws a point and applies `f`, re-drawing after a failure up to
    /// [`MAX_RETRIES`] times.
    pub fn probe<T, E>(&mut self, dim: usize, mut f: impl FnMut(&[f64]) -> Result<T, E>) -> Probe<T, E> {
        let mut attempt = 0;
        loop {
            let point = self.point(dim);
            match f(&point) {
                Ok(value) => return Probe::Hit { point, value },
                Err(error) if attempt == MAX_RETRIES => return Probe::Miss { point, error },
                Err(_) => attempt += 1,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_in_box() {
        let a: Vec<_> = (0..5).map(|_| Sampler::new(7).point(3)).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s = Sampler::new(1);
        for _ in 0..1000 {
            assert!(s.point(4).iter().all(|x| (-2.0..=2.0).contains(x)));
        }
    }

    #[test]
    fn probe_retries_then_gives_up() {
        let mut s = Sampler::new(0);
        let mut calls = 0;
        let r: Probe<(), ()> = s.probe(1, |_| {
            calls += 1;
            Err(())
        });
        assert!(matches!(r, Probe::Miss { .. }));
        assert_eq!(calls, MAX_RETRIES + 1);

        let mut calls = 0;
        let r: Probe<f64, ()> = s.probe(1, |p| {
            calls += 1;
            if calls < 3 { Err(()) } else { Ok(p[0]) }
        });
        assert!(matches!(r, Probe::Hit { .. }));
    }
}
