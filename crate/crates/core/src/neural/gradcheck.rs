use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::Example;
use super::model::{Feeding, Model};
use super::params::Tensors;
use super::NeuralError;

/// Relative errors divide by `max(|analytic|, |numeric|, floor)` so that
/// vanishing gradients are compared in absolute terms. With a step of 1e-5
/// the central difference of a loss near 200 carries about 1e-9 of rounding
/// noise, so gradients below the floor are held to 1e-8 absolute at a 1e-5
/// relative tolerance.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn params_mut(&mut self) -> &mut [f64];
    fn loss(&self) -> f64;
    fn gradient(&self) -> Vec<f64>;
    /// Parameter blocks sampled round-robin so every block is covered.
    fn groups(&self) -> Vec<Range<usize>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(index, analytic, numeric)` of the worst parameter.
    pub worst: Option<(usize, f64, f64)>,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR)
}

/// Central differences against the analytic gradient on `samples`
/// parameters, preferring parameters whose analytic gradient is non-zero.
pub fn grad_check(
    obj: &mut impl Objective,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport, NeuralError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(NeuralError::InvalidEpsilon);
    }
    let grad = obj.gradient();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<usize>> = obj
        .groups()
        .into_iter()
        .map(|r| {
            let live: Vec<usize> = r.clone().filter(|&i| grad[i] != 0.0).collect();
            let mut pool = if live.is_empty() { r.collect() } else { live };
            pool.shuffle(&mut rng);
            pool
        })
        .collect();
    let mut chosen = Vec::new();
    while chosen.len() < samples && pools.iter().any(|p| !p.is_empty()) {
        for p in pools.iter_mut() {
            if chosen.len() < samples {
                if let Some(i) = p.pop() {
                    chosen.push(i);
                }
            }
        }
    }
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for i in chosen {
        let orig = obj.params_mut()[i];
        obj.params_mut()[i] = orig + eps;
        let up = obj.loss();
        obj.params_mut()[i] = orig - eps;
        let down = obj.loss();
        obj.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(grad[i], numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((i, grad[i], numeric));
        }
    }
    Ok(report)
}

/// Summed token loss of one example under teacher forcing.
pub struct ExampleObjective<'a> {
    pub model: &'a mut Model,
    pub example: &'a Example,
}

impl Objective for ExampleObjective<'_> {
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.model.params.data
    }

    fn loss(&self) -> f64 {
        self.model
            .example_loss(self.example, Feeding::TEACHER, None)
            .map_or(f64::NAN, |r| r.0)
    }

    fn gradient(&self) -> Vec<f64> {
        let mut g = Tensors::zeros(&self.model.layout);
        if self
            .model
            .example_loss(self.example, Feeding::TEACHER, Some(&mut g))
            .is_err()
        {
            g.data.fill(f64::NAN);
        }
        g.data
    }

    fn groups(&self) -> Vec<Range<usize>> {
        self.model.layout.slots.iter().map(|s| s.range()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `f(w) = Σ_k c_k · w_k`, whose central difference is exact.
    struct Linear {
        w: Vec<f64>,
        c: Vec<f64>,
    }

    impl Objective for Linear {
        fn params_mut(&mut self) -> &mut [f64] {
            &mut self.w
        }
        fn loss(&self) -> f64 {
            self.w.iter().zip(&self.c).map(|(a, b)| a * b).sum()
        }
        fn gradient(&self) -> Vec<f64> {
            self.c.clone()
        }
        #[allow(clippy::single_range_in_vec_init)]
        fn groups(&self) -> Vec<Range<usize>> {
            vec![0..self.w.len()]
        }
    }

    fn linear() -> Linear {
        Linear {
            w: (0..60).map(|i| (i as f64 * 0.37).sin()).collect(),
            c: (0..60).map(|i| (i as f64 * 0.11).cos() * 3.0).collect(),
        }
    }

    #[test]
    fn linear_model_is_exact() {
        let r = grad_check(&mut linear(), 1e-5, 50, 3).unwrap();
        assert_eq!(r.checked, 50);
        assert!(r.max_rel_error <= 1e-8, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        struct Off(Linear);
        impl Objective for Off {
            fn params_mut(&mut self) -> &mut [f64] {
                self.0.params_mut()
            }
            fn loss(&self) -> f64 {
                self.0.loss()
            }
            fn gradient(&self) -> Vec<f64> {
                self.0.c.iter().map(|c| c * 1.01).collect()
            }
            fn groups(&self) -> Vec<Range<usize>> {
                self.0.groups()
            }
        }
        let r = grad_check(&mut Off(linear()), 1e-5, 50, 3).unwrap();
        assert!(r.max_rel_error > 1e-3);
    }

    #[test]
    fn zero_eps_rejected() {
        assert!(matches!(
            grad_check(&mut linear(), 0.0, 5, 0),
            Err(NeuralError::InvalidEpsilon)
        ));
    }
}
