//! Scenario files: a flat TOML surface resolved into a [`ScenarioSpec`].
//!
//! The grammar is deliberately small. A file names a path, a policy, and
//! run lengths; everything has a documented default except the path
//! itself. Four path shapes are supported, chosen by which keys appear:
//!
//! * homogeneous: `M`, `sigma`, `p`
//! * explicit: `phi = [..]` with `p` (shared) or `p_list = [..]`
//! * alternating: `M`, `sigma`, `pi0`, `pi1`; odd-indexed devices
//!   (counting from 1) carry `pi0`, even-indexed carry `pi1`
//! * random: `M`, `sigma`, `p_max`; each device draws its probability
//!   uniformly from `(0, p_max]` using the scenario seed, so the drawn
//!   path is reproducible
//!
//! Unknown keys are rejected rather than ignored; a silently misspelled
//! key is the worst failure mode a config file can have. Keys that only
//! parameterize one policy (`G`, `p_bar`, `weights`, `epsilon`) are
//! likewise rejected when a different policy is named.

use serde::Deserialize;

use crate::analysis::water_filling;
use crate::harness::{streams, HarnessError, ScenarioSpec, DEFAULT_HORIZON, DEFAULT_REPLICATIONS, DEFAULT_SEED};
use crate::model::PathConfig;
use crate::policies::{PolicySpec, DEFAULT_THRESHOLD_P};
use crate::solver::{relative_value_iteration, DEFAULT_EPSILON};

use rand::Rng;
use std::sync::Arc;

/// Counter cap assumed when a scenario does not set `U`.
pub const DEFAULT_COUNTER_CAP: u32 = 10;

/// Raw scenario file contents, one field per recognized key.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "M")]
    m: Option<usize>,
    sigma: Option<f64>,
    p: Option<f64>,
    p_list: Option<Vec<f64>>,
    phi: Option<Vec<f64>>,
    pi0: Option<f64>,
    pi1: Option<f64>,
    p_max: Option<f64>,
    policy: Option<String>,
    #[serde(rename = "G")]
    g: Option<u32>,
    p_bar: Option<f64>,
    weights: Option<Vec<f64>>,
    #[serde(rename = "T")]
    horizon: Option<u64>,
    reps: Option<u32>,
    burn_in: Option<u64>,
    seed: Option<u64>,
    #[serde(rename = "U")]
    counter_cap: Option<u32>,
    epsilon: Option<f64>,
    clip: Option<bool>,
}

impl ScenarioFile {
    /// Parses the TOML text without resolving it.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::ScenarioParse(e.to_string()))
    }

    /// Replaces the seed before resolution. Random paths draw from the
    /// seed's configuration stream, so an override must land here rather
    /// than on the resolved spec.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// The file's value-iteration tolerance, when set.
    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    fn forbid(
        &self,
        present: Option<&'static str>,
        anchor: &'static str,
    ) -> Result<(), HarnessError> {
        match present {
            Some(key) => Err(HarnessError::KeyConflict {
                first: anchor,
                second: key,
            }),
            None => Ok(()),
        }
    }

    fn key_if<T>(value: &Option<T>, key: &'static str) -> Option<&'static str> {
        value.as_ref().map(|_| key)
    }

    /// The path the file describes. Drawing a random path consumes the
    /// scenario seed's configuration stream, so it is a function of the
    /// file alone.
    pub fn resolve_config(&self) -> Result<PathConfig, HarnessError> {
        let cap = self.counter_cap.unwrap_or(DEFAULT_COUNTER_CAP);
        if let Some(phi) = &self.phi {
            self.forbid(Self::key_if(&self.sigma, "sigma"), "phi")?;
            self.forbid(Self::key_if(&self.pi0, "pi0"), "phi")?;
            self.forbid(Self::key_if(&self.pi1, "pi1"), "phi")?;
            self.forbid(Self::key_if(&self.p_max, "p_max"), "phi")?;
            if let Some(m) = self.m {
                if m != phi.len() {
                    return Err(HarnessError::KeyLength {
                        key: "phi",
                        expected: m,
                        got: phi.len(),
                    });
                }
            }
            let ps = match (&self.p, &self.p_list) {
                (Some(_), Some(_)) => {
                    return Err(HarnessError::KeyConflict {
                        first: "p",
                        second: "p_list",
                    })
                }
                (Some(p), None) => vec![*p; phi.len()],
                (None, Some(list)) => {
                    if list.len() != phi.len() {
                        return Err(HarnessError::KeyLength {
                            key: "p_list",
                            expected: phi.len(),
                            got: list.len(),
                        });
                    }
                    list.clone()
                }
                (None, None) => return Err(HarnessError::MissingKey("p")),
            };
            return Ok(PathConfig::from_parts(phi, &ps, cap)?);
        }
        self.forbid(Self::key_if(&self.p_list, "p_list"), "sigma")?;
        let m = self.m.ok_or(HarnessError::MissingKey("M"))?;
        let sigma = self.sigma.ok_or(HarnessError::MissingKey("sigma"))?;
        if self.pi0.is_some() || self.pi1.is_some() {
            self.forbid(Self::key_if(&self.p, "p"), "pi0")?;
            self.forbid(Self::key_if(&self.p_max, "p_max"), "pi0")?;
            let pi0 = self.pi0.ok_or(HarnessError::MissingKey("pi0"))?;
            let pi1 = self.pi1.ok_or(HarnessError::MissingKey("pi1"))?;
            return Ok(alternating_path(m, sigma, pi0, pi1, cap)?);
        }
        if let Some(p_max) = self.p_max {
            self.forbid(Self::key_if(&self.p, "p"), "p_max")?;
            let seed = self.seed.unwrap_or(DEFAULT_SEED);
            return random_path(m, sigma, p_max, cap, seed);
        }
        let p = self.p.ok_or(HarnessError::MissingKey("p"))?;
        Ok(PathConfig::homogeneous(m, sigma, p, cap)?)
    }

    /// The policy the file names; `uniform` when absent.
    pub fn resolve_policy(&self, config: &PathConfig) -> Result<PolicySpec, HarnessError> {
        let name = self.policy.as_deref().unwrap_or("uniform");
        let policy_only = |key: Option<&'static str>| -> Result<(), HarnessError> {
            match key {
                Some(k) => Err(HarnessError::KeyConflict {
                    first: "policy",
                    second: k,
                }),
                None => Ok(()),
            }
        };
        if name != "order-statistic" {
            policy_only(Self::key_if(&self.g, "G"))?;
        }
        if name != "heuristic" {
            policy_only(Self::key_if(&self.p_bar, "p_bar"))?;
        }
        if name != "weighted" {
            policy_only(Self::key_if(&self.weights, "weights"))?;
        }
        if name != "optimal" {
            policy_only(Self::key_if(&self.epsilon, "epsilon"))?;
        }
        let policy = match name {
            "uniform" => PolicySpec::Uniform,
            "order-statistic" => PolicySpec::OrderStatistic {
                g: self.g.ok_or(HarnessError::MissingKey("G"))?,
            },
            "weighted" => {
                let weights = match &self.weights {
                    Some(w) => w.clone(),
                    None => water_filling(config)?.weights().to_vec(),
                };
                PolicySpec::Weighted { weights }
            }
            "whittle" => PolicySpec::whittle(),
            "second-order" => PolicySpec::second_order(),
            "first-order" => PolicySpec::first_order(),
            "heuristic" => PolicySpec::heuristic(self.p_bar.unwrap_or(DEFAULT_THRESHOLD_P)),
            "optimal" => {
                let epsilon = self.epsilon.unwrap_or(DEFAULT_EPSILON);
                let solution = relative_value_iteration(config, epsilon)?;
                PolicySpec::Table {
                    solution: Arc::new(solution),
                }
            }
            other => return Err(HarnessError::UnknownPolicy(other.to_string())),
        };
        Ok(policy)
    }

    /// Resolves the file into a runnable scenario.
    pub fn resolve(&self) -> Result<ScenarioSpec, HarnessError> {
        let config = self.resolve_config()?;
        let policy = self.resolve_policy(&config)?;
        let horizon = self.horizon.unwrap_or(DEFAULT_HORIZON);
        let reps = self.reps.unwrap_or(DEFAULT_REPLICATIONS);
        let seed = self.seed.unwrap_or(DEFAULT_SEED);
        let mut spec = ScenarioSpec::new(config, policy, horizon, reps, seed)?;
        if let Some(burn_in) = self.burn_in {
            spec = spec.with_burn_in(burn_in)?;
        }
        if self.clip.unwrap_or(false) {
            spec = spec.with_counter_clip(self.counter_cap.unwrap_or(DEFAULT_COUNTER_CAP));
        }
        Ok(spec)
    }
}

/// Parses and resolves a scenario file in one step.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, HarnessError> {
    ScenarioFile::parse(text)?.resolve()
}

pub(crate) fn alternating_path(
    m: usize,
    sigma: f64,
    pi0: f64,
    pi1: f64,
    cap: u32,
) -> Result<PathConfig, crate::model::ModelError> {
    let phis = crate::model::geometric_accuracy_profile(m, sigma)?;
    let ps: Vec<f64> = (0..m)
        .map(|i| if (i + 1) % 2 == 1 { pi0 } else { pi1 })
        .collect();
    PathConfig::from_parts(&phis, &ps, cap)
}

fn random_path(
    m: usize,
    sigma: f64,
    p_max: f64,
    cap: u32,
    seed: u64,
) -> Result<PathConfig, HarnessError> {
    if !p_max.is_finite() || !(0.0..=1.0).contains(&p_max) || p_max == 0.0 {
        return Err(HarnessError::ParameterRange {
            name: "p_max",
            value: p_max,
        });
    }
    let phis = crate::model::geometric_accuracy_profile(m, sigma)?;
    let mut rng = streams::stream(seed, streams::TAG_CONFIG, 0, 0, 0);
    let ps: Vec<f64> = (0..m)
        .map(|_| p_max * (1.0 - rng.random::<f64>()))
        .collect();
    Ok(PathConfig::from_parts(&phis, &ps, cap)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::simulate;

    #[test]
    fn homogeneous_scenario_with_defaults() {
        let spec = parse_scenario("M = 5\nsigma = 0.8\np = 0.1\n").unwrap();
        assert_eq!(spec.config().len(), 5);
        assert_eq!(spec.horizon(), DEFAULT_HORIZON);
        assert_eq!(spec.replications(), DEFAULT_REPLICATIONS);
        assert_eq!(spec.burn_in(), DEFAULT_HORIZON / 10);
        assert_eq!(spec.seed(), DEFAULT_SEED);
        assert!(spec.counter_clip().is_none());
        assert!(matches!(spec.policy(), PolicySpec::Uniform));
        let phis: Vec<f64> = spec.config().devices().iter().map(|d| d.phi()).collect();
        assert!((phis[4] - 1.0).abs() < 1e-15);
        assert!((phis[0] - 0.8f64.powi(4)).abs() < 1e-15);
    }

    #[test]
    fn explicit_lists_and_run_length_overrides() {
        let text = "phi = [0.5, 0.9, 1.0]\np_list = [0.1, 0.0, 0.3]\npolicy = \"whittle\"\n\
                    T = 1000\nreps = 2\nburn_in = 50\nseed = 9\nU = 6\nclip = true\n";
        let spec = parse_scenario(text).unwrap();
        assert_eq!(spec.config().len(), 3);
        assert_eq!(spec.config().device(1).p(), 0.0);
        assert_eq!(spec.horizon(), 1000);
        assert_eq!(spec.replications(), 2);
        assert_eq!(spec.burn_in(), 50);
        assert_eq!(spec.counter_clip(), Some(6));
        assert_eq!(spec.config().counter_cap(), 6);
        simulate(&spec).unwrap();
    }

    #[test]
    fn alternating_traffic_assigns_pi0_to_odd_devices() {
        let spec =
            parse_scenario("M = 5\nsigma = 0.8\npi0 = 0.01\npi1 = 0.4\npolicy = \"second-order\"\n")
                .unwrap();
        let ps: Vec<f64> = spec.config().devices().iter().map(|d| d.p()).collect();
        // Devices 1, 3, 5 carry the light traffic.
        assert_eq!(ps, vec![0.01, 0.4, 0.01, 0.4, 0.01]);
    }

    #[test]
    fn random_traffic_is_seeded_and_bounded() {
        let text = "M = 8\nsigma = 0.8\np_max = 0.3\nseed = 4\n";
        let a = parse_scenario(text).unwrap();
        let b = parse_scenario(text).unwrap();
        for (da, db) in a.config().devices().iter().zip(b.config().devices()) {
            assert_eq!(da.p(), db.p());
            assert!(da.p() > 0.0 && da.p() <= 0.3);
        }
        let c = parse_scenario("M = 8\nsigma = 0.8\np_max = 0.3\nseed = 5\n").unwrap();
        assert!(a
            .config()
            .devices()
            .iter()
            .zip(c.config().devices())
            .any(|(da, dc)| da.p() != dc.p()));
    }

    #[test]
    fn weighted_policy_defaults_to_water_filling() {
        let spec =
            parse_scenario("M = 4\nsigma = 0.8\np = 0.1\npolicy = \"weighted\"\n").unwrap();
        match spec.policy() {
            PolicySpec::Weighted { weights } => {
                let total: f64 = weights.iter().sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
            other => panic!("expected weighted, got {other:?}"),
        }
    }

    #[test]
    fn optimal_policy_solves_the_path() {
        let text = "M = 2\nsigma = 0.9\np = 0.2\nU = 4\npolicy = \"optimal\"\nepsilon = 1e-6\n\
                    T = 2000\nreps = 1\n";
        let spec = parse_scenario(text).unwrap();
        assert!(matches!(spec.policy(), PolicySpec::Table { .. }));
        simulate(&spec).unwrap();
    }

    #[test]
    fn conflicting_and_missing_keys_are_rejected() {
        let cases: &[(&str, HarnessError)] = &[
            (
                "phi = [0.5, 1.0]\nsigma = 0.8\np = 0.1\n",
                HarnessError::KeyConflict {
                    first: "phi",
                    second: "sigma",
                },
            ),
            (
                "phi = [0.5, 1.0]\np = 0.1\np_list = [0.1, 0.2]\n",
                HarnessError::KeyConflict {
                    first: "p",
                    second: "p_list",
                },
            ),
            (
                "M = 3\nsigma = 0.8\np = 0.1\npi0 = 0.01\npi1 = 0.4\n",
                HarnessError::KeyConflict {
                    first: "pi0",
                    second: "p",
                },
            ),
            ("phi = [0.5, 1.0]\n", HarnessError::MissingKey("p")),
            ("M = 3\nsigma = 0.8\npi0 = 0.01\n", HarnessError::MissingKey("pi1")),
            ("M = 3\np = 0.1\n", HarnessError::MissingKey("sigma")),
            ("sigma = 0.8\np = 0.1\n", HarnessError::MissingKey("M")),
            (
                "M = 3\nsigma = 0.8\np = 0.1\nG = 2\n",
                HarnessError::KeyConflict {
                    first: "policy",
                    second: "G",
                },
            ),
            (
                "M = 3\nsigma = 0.8\np = 0.1\npolicy = \"order-statistic\"\n",
                HarnessError::MissingKey("G"),
            ),
            (
                "M = 3\nsigma = 0.8\np = 0.1\npolicy = \"whittle\"\nepsilon = 1e-5\n",
                HarnessError::KeyConflict {
                    first: "policy",
                    second: "epsilon",
                },
            ),
        ];
        for (text, expected) in cases {
            match parse_scenario(text) {
                Err(got) => assert_eq!(&got, expected, "for scenario {text:?}"),
                Ok(_) => panic!("scenario {text:?} unexpectedly resolved"),
            }
        }
    }

    #[test]
    fn length_mismatches_are_rejected() {
        assert!(matches!(
            parse_scenario("M = 3\nphi = [0.5, 1.0]\np = 0.1\n"),
            Err(HarnessError::KeyLength { key: "phi", .. })
        ));
        assert!(matches!(
            parse_scenario("phi = [0.5, 1.0]\np_list = [0.1]\n"),
            Err(HarnessError::KeyLength { key: "p_list", .. })
        ));
    }

    #[test]
    fn unknown_keys_and_policies_are_rejected() {
        assert!(matches!(
            parse_scenario("M = 3\nsigma = 0.8\np = 0.1\nhorizon = 10\n"),
            Err(HarnessError::ScenarioParse(_))
        ));
        assert!(matches!(
            parse_scenario("M = 3\nsigma = 0.8\np = 0.1\npolicy = \"round-robin\"\n"),
            Err(HarnessError::UnknownPolicy(_))
        ));
        assert!(matches!(
            parse_scenario("M = [3]\n"),
            Err(HarnessError::ScenarioParse(_))
        ));
    }
}
