use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// DDPM variance schedule. Steps are numbered `1..=T`; `alpha_bar(0) = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("noise schedule needs at least one step"));
        }
        for (i, &b) in betas.iter().enumerate() {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid(format!("beta_{} = {b} is outside (0, 1)", i + 1)));
            }
            if i > 0 && b < betas[i - 1] {
                return Err(Error::invalid("betas must be non-decreasing"));
            }
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut prod = 1.0;
        for &b in &betas {
            prod *= 1.0 - b;
            alpha_bars.push(prod);
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Evenly spaced betas from `start` to `end` inclusive.
    pub fn linear(steps: usize, start: f64, end: f64) -> Result<Self> {
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    start
                } else {
                    start + (end - start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    /// Linear 1e-4 → 0.02 at 1000 steps; for other step counts both ends are
    /// scaled by `1000 / T` (capped below 1) so the total noise injected stays
    /// comparable.
    pub fn scaled_linear(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("noise schedule needs at least one step"));
        }
        let s = 1000.0 / steps as f64;
        Self::linear(steps, (1e-4 * s).min(0.999), (0.02 * s).min(0.999))
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta(t)
    }

    /// `prod_{s <= t} alpha_s`, for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            Err(Error::invalid(format!("step {t} outside 0..={}", self.steps())))
        } else {
            Ok(())
        }
    }
}

/// `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise`.
pub fn forward_diffuse(
    schedule: &NoiseSchedule,
    x0: &[f64],
    t: usize,
    noise: &[f64],
) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if noise.len() != x0.len() {
        return Err(Error::WidthMismatch {
            expected: x0.len(),
            actual: noise.len(),
        });
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(noise).map(|(x, n)| a * x + b * n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_bar_strictly_decreases_from_one() {
        for s in [NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap(), NoiseSchedule::scaled_linear(50).unwrap()] {
            assert_eq!(s.alpha_bar(0), 1.0);
            for t in 1..=s.steps() {
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
                let ab = s.alpha_bar(t);
                assert!((ab.sqrt().powi(2) + (1.0 - ab).sqrt().powi(2) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scaled_schedule_matches_reference_at_1000() {
        let a = NoiseSchedule::scaled_linear(1000).unwrap();
        let b = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        for t in 1..=1000 {
            assert!((a.beta(t) - b.beta(t)).abs() < 1e-15);
        }
        assert!(NoiseSchedule::scaled_linear(50).unwrap().alpha_bar(50) < 1e-4);
    }

    #[test]
    fn invalid_betas() {
        assert!(NoiseSchedule::from_betas(vec![]).is_err());
        assert!(NoiseSchedule::from_betas(vec![0.0]).is_err());
        assert!(NoiseSchedule::from_betas(vec![0.2, 0.1]).is_err());
        assert!(NoiseSchedule::from_betas(vec![1.0]).is_err());
    }

    #[test]
    fn forward_examples() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.02).unwrap();
        let x0 = [0.3, -1.7];
        assert_eq!(forward_diffuse(&s, &x0, 0, &[5.0, 5.0]).unwrap(), x0.to_vec());
        // A one-step schedule with alpha_bar = 0.25.
        let q = NoiseSchedule::from_betas(vec![0.75]).unwrap();
        let x = forward_diffuse(&q, &[2.0, 0.0], 1, &[0.0, 2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3f64.sqrt()).abs() < 1e-12);
        assert!((x[1] - 1.7321).abs() < 1e-4);
        assert!(forward_diffuse(&s, &x0, 11, &[0.0, 0.0]).is_err());
        assert!(forward_diffuse(&s, &x0, 1, &[0.0]).is_err());
    }

    #[test]
    fn forward_is_linear() {
        let s = NoiseSchedule::scaled_linear(20).unwrap();
        let (x1, n1) = ([1.0, 2.0, -1.0], [0.5, -0.2, 0.1]);
        let (x2, n2) = ([-0.3, 0.7, 4.0], [1.5, 0.0, -2.0]);
        let (a, b) = (0.7, -1.3);
        let comb = |u: &[f64], v: &[f64]| -> Vec<f64> {
            u.iter().zip(v).map(|(p, q)| a * p + b * q).collect()
        };
        for t in [1, 7, 20] {
            let lhs = forward_diffuse(&s, &comb(&x1, &x2), t, &comb(&n1, &n2)).unwrap();
            let r1 = forward_diffuse(&s, &x1, t, &n1).unwrap();
            let r2 = forward_diffuse(&s, &x2, t, &n2).unwrap();
            for i in 0..3 {
                assert!((lhs[i] - (a * r1[i] + b * r2[i])).abs() < 1e-12);
            }
        }
    }
}
