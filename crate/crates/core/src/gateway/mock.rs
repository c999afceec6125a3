use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest};
use crate::sampling::{Gender, Persona};
use crate::seed;

/// One item of the mock respondent model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockItem {
    /// Factor the item loads on; `None` for a pure-noise item.
    pub factor: Option<usize>,
    pub loading: f64,
    /// Shift in latent units applied to female (+half) and male (-half) personas.
    pub gender_shift: f64,
    /// Shift per 15 years of age above 45.
    pub age_slope: f64,
}

/// Latent-response model used by [`MockBackend`].
///
/// Each persona carries standard-normal factor scores and item uniquenesses
/// drawn from a seed keyed on its id; each template adds its own noise. The
/// continuous response is cut into Likert categories at equally spaced
/// thresholds over `[-2, 2]`, so every item has a categorical distribution
/// conditioned on the persona's demographics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockProfile {
    pub likert_min: i32,
    pub likert_max: i32,
    pub n_factors: usize,
    pub factor_correlation: f64,
    /// Share of the unique variance redrawn per template.
    pub template_noise: f64,
    pub malformed_rate: f64,
    pub items: Vec<MockItem>,
}

impl MockProfile {
    pub fn single_factor(n_items: usize, likert_min: i32, likert_max: i32, loading: f64) -> Self {
        Self::clustered(likert_min, likert_max, &[n_items], loading, 0)
    }

    /// `sizes[f]` items on factor `f`, followed by `noise_items` unrelated items.
    pub fn clustered(
        likert_min: i32,
        likert_max: i32,
        sizes: &[usize],
        loading: f64,
        noise_items: usize,
    ) -> Self {
        let mut items = Vec::new();
        for (f, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                items.push(MockItem {
                    factor: Some(f),
                    loading,
                    gender_shift: 0.0,
                    age_slope: 0.0,
                });
            }
        }
        for _ in 0..noise_items {
            items.push(MockItem {
                factor: None,
                loading: 0.0,
                gender_shift: 0.0,
                age_slope: 0.0,
            });
        }
        Self {
            likert_min,
            likert_max,
            n_factors: sizes.len(),
            factor_correlation: 0.3,
            template_noise: 0.3,
            malformed_rate: 0.0,
            items,
        }
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    fn categorize(&self, y: f64) -> i32 {
        let k = (self.likert_max - self.likert_min + 1) as f64;
        let mut value = self.likert_min;
        for j in 1..(k as i32) {
            let threshold = -2.0 + 4.0 * j as f64 / k;
            if y > threshold {
                value += 1;
            }
        }
        value
    }
}

/// Deterministic offline backend. Output depends only on
/// `(persona id, template id, global seed)`, never on call order.
#[derive(Debug, Clone)]
pub struct MockBackend {
    profile: MockProfile,
    personas: HashMap<String, (u32, Gender)>,
    global_seed: u64,
}

impl MockBackend {
    pub fn new(profile: MockProfile, roster: &[Persona], global_seed: u64) -> Self {
        let personas = roster
            .iter()
            .map(|p| (p.id.clone(), (p.age, p.gender)))
            .collect();
        Self {
            profile,
            personas,
            global_seed,
        }
    }

    pub fn profile(&self) -> &MockProfile {
        &self.profile
    }

    /// Item values the mock would give for this persona and template.
    pub fn responses(&self, persona_id: &str, template_id: u8) -> Vec<i32> {
        let p = &self.profile;
        let label = format!("mock/{persona_id}");
        let mut persona_rng = seed::rng_for(self.global_seed, &label, 0);
        let mut template_rng = seed::rng_for(self.global_seed, &label, 1 + template_id as u64);

        let common: f64 = persona_rng.sample(StandardNormal);
        let rho = p.factor_correlation.clamp(0.0, 1.0);
        let factors: Vec<f64> = (0..p.n_factors)
            .map(|_| {
                let z: f64 = persona_rng.sample(StandardNormal);
                rho.sqrt() * common + (1.0 - rho).sqrt() * z
            })
            .collect();
        let (age, gender) = self
            .personas
            .get(persona_id)
            .copied()
            .unwrap_or((45, Gender::Other));
        let g = match gender {
            Gender::Female => 0.5,
            Gender::Male => -0.5,
            Gender::Other => 0.0,
        };
        let tau = p.template_noise.clamp(0.0, 1.0);
        p.items
            .iter()
            .map(|item| {
                let u: f64 = persona_rng.sample(StandardNormal);
                let e: f64 = template_rng.sample(StandardNormal);
                let lambda = item.loading.clamp(-1.0, 1.0);
                let eta = item.factor.map_or(0.0, |f| factors[f]);
                let unique = (1.0 - lambda * lambda).sqrt()
                    * ((1.0 - tau).sqrt() * u + tau.sqrt() * e);
                let shift = item.gender_shift * g + item.age_slope * (age as f64 - 45.0) / 15.0;
                p.categorize(lambda * eta + unique + shift)
            })
            .collect()
    }

    fn is_malformed(&self, persona_id: &str, template_id: u8) -> bool {
        if self.profile.malformed_rate <= 0.0 {
            return false;
        }
        let mut rng = seed::rng_for(
            self.global_seed,
            &format!("mock-malformed/{persona_id}"),
            template_id as u64,
        );
        rng.random::<f64>() < self.profile.malformed_rate
    }
}

impl CompletionBackend for MockBackend {
    fn send(&self, request: &CompletionRequest, _attempt: u32) -> Result<String, BackendError> {
        let values = self.responses(&request.persona_id, request.template_id);
        let mut parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        if self.is_malformed(&request.persona_id, request.template_id) {
            // one answer short, sometimes wrapped in chatter
            parts.pop();
            let joined = parts.join(",");
            return Ok(if request.template_id % 2 == 0 {
                format!("Sure! Here are my answers: {joined}")
            } else {
                joined
            });
        }
        Ok(parts.join(","))
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// Wraps a backend and makes a seeded fraction of requests fail transiently:
/// an affected request fails its first `1..=max_failures` attempts, then
/// passes through.
#[derive(Debug, Clone)]
pub struct FlakyBackend<B> {
    inner: B,
    fail_rate: f64,
    max_failures: u32,
    seed: u64,
}

impl<B> FlakyBackend<B> {
    pub fn new(inner: B, fail_rate: f64, max_failures: u32, seed: u64) -> Self {
        Self {
            inner,
            fail_rate,
            max_failures: max_failures.max(1),
            seed,
        }
    }

    fn failures_for(&self, request: &CompletionRequest) -> u32 {
        let mut rng = seed::rng_for(
            self.seed,
            &format!("flaky/{}", request.persona_id),
            request.template_id as u64,
        );
        if rng.random::<f64>() < self.fail_rate {
            rng.random_range(1..=self.max_failures)
        } else {
            0
        }
    }
}

impl<B: CompletionBackend> CompletionBackend for FlakyBackend<B> {
    fn send(&self, request: &CompletionRequest, attempt: u32) -> Result<String, BackendError> {
        if attempt < self.failures_for(request) {
            return Err(if attempt % 2 == 0 {
                BackendError::Transport("injected connection reset".into())
            } else {
                BackendError::RateLimited { retry_after: None }
            });
        }
        self.inner.send(request, attempt)
    }

    fn name(&self) -> &str {
        "flaky"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_span_the_range() {
        let p = MockProfile::single_factor(1, 1, 5, 0.5);
        assert_eq!(p.categorize(-10.0), 1);
        assert_eq!(p.categorize(10.0), 5);
        assert_eq!(p.categorize(0.0), 3);
        let p7 = MockProfile::single_factor(1, 1, 7, 0.5);
        assert_eq!(p7.categorize(10.0), 7);
    }

    #[test]
    fn responses_are_stable_and_in_range() {
        let b = MockBackend::new(MockProfile::clustered(1, 7, &[3, 3, 3], 0.8, 3), &[], 3);
        let a = b.responses("x-00001", 1);
        assert_eq!(a, b.responses("x-00001", 1));
        assert_eq!(a.len(), 12);
        assert!(a.iter().all(|v| (1..=7).contains(v)));
    }
}
