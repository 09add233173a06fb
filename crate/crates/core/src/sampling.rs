//! Seeded random potentials and directions for the randomized checks.
//!
//! Every randomized check draws from its own ChaCha stream so that adding
//! or reordering checks never perturbs the samples of another.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::jet::Jet;

/// Highest per-axis frequency of a random potential.
pub const DEFAULT_DEGREE: usize = 3;

/// A generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A tensor-product trigonometric polynomial on a parameter box.
///
/// Per axis the basis is `1, cos θ, sin θ, …, cos dθ, sin dθ` with
/// `θ = u − centre`, so frequencies are in radians per parameter unit and
/// do not grow with the window. Coefficients are uniform in `[−1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPotential {
    degree: usize,
    centre: Vec<f64>,
    coeffs: Vec<f64>,
}

impl TrigPotential {
    pub fn random<R: Rng>(rng: &mut R, window: &[(f64, f64)], degree: usize) -> Self {
        let per_axis = 2 * degree + 1;
        let count = per_axis.pow(window.len() as u32);
        TrigPotential {
            degree,
            centre: window.iter().map(|&(a, b)| 0.5 * (a + b)).collect(),
            coeffs: (0..count).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Evaluate on coordinate jets.
    pub fn eval(&self, u: &[Jet]) -> Jet {
        let n = u.len();
        let per_axis = 2 * self.degree + 1;
        let basis: Vec<Vec<Jet>> = u
            .iter()
            .enumerate()
            .map(|(k, uk)| {
                let theta = *uk - Jet::constant(n, self.centre[k]);
                let mut b = vec![Jet::constant(n, 1.0)];
                for d in 1..=self.degree {
                    let arg = theta * d as f64;
                    b.push(arg.cos());
                    b.push(arg.sin());
                }
                b
            })
            .collect();
        let mut acc = Jet::zero(n);
        for (idx, &c) in self.coeffs.iter().enumerate() {
            let mut term = Jet::constant(n, c);
            let mut rest = idx;
            for axis in (0..n).rev() {
                term = term * basis[axis][rest % per_axis];
                rest /= per_axis;
            }
            acc = acc + term;
        }
        acc
    }
}

/// A uniformly distributed unit vector in `ℝ^dim`.
pub fn random_unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        if r2 > 1e-4 && r2 <= 1.0 {
            let r = r2.sqrt();
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = stream_rng(42, 1).gen();
        let b: f64 = stream_rng(42, 1).gen();
        let c: f64 = stream_rng(42, 2).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unit_vectors() {
        let mut rng = stream_rng(7, 0);
        for _ in 0..50 {
            let v = random_unit_vector(&mut rng, 4);
            let r: f64 = v.iter().map(|x| x * x).sum();
            assert!((r - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn potential_derivatives_match_differences() {
        let mut rng = stream_rng(3, 0);
        let p = TrigPotential::random(&mut rng, &[(-1.0, 1.0), (0.0, 1.0)], 2);
        assert_eq!(p.coefficients().len(), 25);
        let at = |x: f64, y: f64| p.eval(&[Jet::variable(2, 0, x), Jet::variable(2, 1, y)]);
        let (x, y, h) = (0.3, 0.6, 1e-5);
        let j = at(x, y);
        assert!(((at(x + h, y).value() - at(x - h, y).value()) / (2.0 * h) - j.d(0)).abs() < 1e-6);
        assert!(((at(x, y + h).d(0) - at(x, y - h).d(0)) / (2.0 * h) - j.dd(0, 1)).abs() < 1e-5);
        assert!(((at(x + h, y).dd(0, 1) - at(x - h, y).dd(0, 1)) / (2.0 * h) - j.ddd(0, 0, 1)).abs() < 1e-4);
    }
}
