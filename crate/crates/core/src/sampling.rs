//! Seeded random variates.
//!
//! Every stochastic draw of a run goes through one [`SimRng`], a ChaCha8
//! stream seeded from `general.random_seed`. ChaCha8 output is specified
//! bit-for-bit, so a seed reproduces the same run on any platform.
//!
//! Draw order per generated task: inter-arrival gap, task type, then one
//! service time per supported server type in ascending server-type name
//! order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::config::{ServiceDistribution, SimConfig, TaskTypeSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("distribution mean must be positive, got {0}")]
    NonPositiveMean(f64),
    #[error("task type does not support server type `{0}`")]
    UnsupportedServer(String),
    #[error("no task types configured")]
    NoTaskTypes,
}

#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn seed_from(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on (0, 1].
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.0.random::<f64>()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }
}

/// Inverse-transform exponential variate for a given uniform `u` in (0, 1].
pub fn exponential_from_uniform(mean: f64, u: f64) -> f64 {
    // -0.0 when u == 1; normalise to +0.
    (-mean * u.ln()).max(0.0)
}

pub fn draw_exponential(rng: &mut SimRng, mean: f64) -> Result<f64, SamplingError> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(SamplingError::NonPositiveMean(mean));
    }
    Ok(exponential_from_uniform(mean, rng.uniform_open_closed()))
}

/// Normal(mean, stdev) conditioned on being positive. Non-positive draws are
/// rejected and redrawn from the same stream.
pub fn draw_positive_normal(rng: &mut SimRng, mean: f64, stdev: f64) -> Result<f64, SamplingError> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(SamplingError::NonPositiveMean(mean));
    }
    loop {
        let x = mean + stdev * rng.standard_normal();
        if x > 0.0 {
            return Ok(x);
        }
    }
}

pub fn draw_service_time(
    rng: &mut SimRng,
    spec: &TaskTypeSpec,
    server_type: &str,
) -> Result<f64, SamplingError> {
    let mean = *spec
        .mean_service_time
        .get(server_type)
        .ok_or_else(|| SamplingError::UnsupportedServer(server_type.to_string()))?;
    match spec.service_distribution {
        ServiceDistribution::Normal => {
            let stdev = spec.stdev_service_time.get(server_type).copied().unwrap_or(0.0);
            draw_positive_normal(rng, mean, stdev)
        }
        ServiceDistribution::Exponential => draw_exponential(rng, mean),
    }
}

/// Index drawn with probability proportional to `weights[i]`. Consumes one
/// uniform variate. `None` for an empty slice.
pub fn pick_weighted(rng: &mut SimRng, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    let target = rng.uniform() * total;
    let mut cum = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cum += w;
        if target < cum {
            return Some(i);
        }
    }
    weights.len().checked_sub(1)
}

/// Picks a task type with probability proportional to its `weight`
/// (uniform under the default weights).
pub fn draw_task_type<'a>(
    rng: &mut SimRng,
    cfg: &'a SimConfig,
) -> Result<(&'a str, &'a TaskTypeSpec), SamplingError> {
    let tasks = &cfg.simulation.tasks;
    let weights: Vec<f64> = tasks.values().map(|t| t.weight).collect();
    let idx = pick_weighted(rng, &weights).ok_or(SamplingError::NoTaskTypes)?;
    let (name, spec) = tasks.iter().nth(idx).expect("index within task map");
    Ok((name.as_str(), spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn spec(mean: f64, stdev: f64, dist: ServiceDistribution) -> TaskTypeSpec {
        TaskTypeSpec {
            mean_service_time: BTreeMap::from([("fft_accel".to_string(), mean)]),
            stdev_service_time: BTreeMap::from([("fft_accel".to_string(), stdev)]),
            power: None,
            deadline: None,
            service_distribution: dist,
            weight: 1.0,
        }
    }

    fn sample_mean(n: usize, mut f: impl FnMut() -> f64) -> f64 {
        (0..n).map(|_| f()).sum::<f64>() / n as f64
    }

    #[test]
    fn exponential_mean_converges() {
        let mut rng = SimRng::seed_from(11);
        let m = sample_mean(1_000_000, || draw_exponential(&mut rng, 50.0).unwrap());
        // 4 sigma of the sample mean: 4 * 50 / sqrt(1e6) = 0.2
        assert!((m - 50.0).abs() < 0.2, "{m}");
    }

    #[test]
    fn exponential_boundary_and_scaling() {
        assert_eq!(exponential_from_uniform(50.0, 1.0), 0.0);
        assert!(exponential_from_uniform(50.0, 1.0).is_sign_positive());
        let mut a = SimRng::seed_from(3);
        let mut b = SimRng::seed_from(3);
        for _ in 0..1000 {
            let x = draw_exponential(&mut a, 50.0).unwrap();
            let y = draw_exponential(&mut b, 100.0).unwrap();
            assert!((y - 2.0 * x).abs() <= 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn exponential_rejects_bad_mean() {
        let mut rng = SimRng::seed_from(0);
        assert_eq!(draw_exponential(&mut rng, 0.0), Err(SamplingError::NonPositiveMean(0.0)));
        assert!(draw_exponential(&mut rng, -1.0).is_err());
    }

    #[test]
    fn tight_normal_stays_within_five_sigma() {
        let mut rng = SimRng::seed_from(5);
        let s = spec(10.0, 0.1, ServiceDistribution::Normal);
        let n = 100_000;
        let inside = (0..n)
            .filter(|_| {
                let x = draw_service_time(&mut rng, &s, "fft_accel").unwrap();
                (x - 10.0).abs() <= 0.5
            })
            .count();
        assert!(inside as f64 / n as f64 > 0.999);
    }

    #[test]
    fn zero_stdev_returns_mean() {
        let mut rng = SimRng::seed_from(5);
        let s = spec(10.0, 0.0, ServiceDistribution::Normal);
        for _ in 0..100 {
            assert_eq!(draw_service_time(&mut rng, &s, "fft_accel").unwrap(), 10.0);
        }
    }

    #[test]
    fn wide_normal_is_positive() {
        let mut rng = SimRng::seed_from(6);
        for _ in 0..100_000 {
            assert!(draw_positive_normal(&mut rng, 1.0, 2.0).unwrap() > 0.0);
        }
    }

    #[test]
    fn exponential_service_ignores_stdev() {
        let mut rng = SimRng::seed_from(8);
        let s = spec(500.0, 0.0, ServiceDistribution::Exponential);
        let m = sample_mean(1_000_000, || draw_service_time(&mut rng, &s, "fft_accel").unwrap());
        assert!((m - 500.0).abs() < 2.0, "{m}");
    }

    #[test]
    fn unsupported_server_is_an_error() {
        let mut rng = SimRng::seed_from(0);
        let s = spec(10.0, 0.1, ServiceDistribution::Normal);
        assert_eq!(
            draw_service_time(&mut rng, &s, "gpu"),
            Err(SamplingError::UnsupportedServer("gpu".into()))
        );
    }

    fn config_with_tasks(names: &[&str]) -> SimConfig {
        let mut text = String::from(
            r#"{"simulation": {"sched_policy_module": "v1", "servers": {"fft_accel": {"count": 1}}, "tasks": {"#,
        );
        let body: Vec<String> = names
            .iter()
            .map(|n| {
                format!(
                    r#""{n}": {{"mean_service_time": {{"fft_accel": 1}}, "stdev_service_time": {{"fft_accel": 0}}}}"#
                )
            })
            .collect();
        text.push_str(&body.join(","));
        text.push_str("}}}");
        crate::config::parse_config(&text).unwrap()
    }

    #[test]
    fn single_type_is_always_chosen() {
        let cfg = config_with_tasks(&["only"]);
        let mut rng = SimRng::seed_from(1);
        for _ in 0..1000 {
            assert_eq!(draw_task_type(&mut rng, &cfg).unwrap().0, "only");
        }
    }

    #[test]
    fn two_types_split_evenly() {
        let cfg = config_with_tasks(&["decoder", "fft"]);
        let mut rng = SimRng::seed_from(2);
        let n = 1_000_000;
        let fft = (0..n)
            .filter(|_| draw_task_type(&mut rng, &cfg).unwrap().0 == "fft")
            .count();
        let frac = fft as f64 / n as f64;
        // 4 sigma binomial: 4 * sqrt(0.25 / 1e6) = 0.002
        assert!((frac - 0.5).abs() < 0.002, "{frac}");
    }

    #[test]
    fn draws_are_reproducible() {
        let cfg = config_with_tasks(&["a", "b", "c"]);
        let seq = |seed| {
            let mut rng = SimRng::seed_from(seed);
            (0..200)
                .map(|_| draw_task_type(&mut rng, &cfg).unwrap().0.to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(9), seq(9));
        assert_ne!(seq(9), seq(10));
    }

    #[test]
    fn weights_skew_the_mix() {
        let mut rng = SimRng::seed_from(4);
        let n = 200_000;
        let hits = (0..n).filter(|_| pick_weighted(&mut rng, &[1.0, 3.0]) == Some(1)).count();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.005);
        assert_eq!(pick_weighted(&mut rng, &[]), None);
    }

    #[test]
    fn empty_task_map_is_an_error() {
        let mut cfg = config_with_tasks(&["a"]);
        cfg.simulation.tasks.clear();
        let mut rng = SimRng::seed_from(0);
        assert_eq!(draw_task_type(&mut rng, &cfg).unwrap_err(), SamplingError::NoTaskTypes);
    }
}
