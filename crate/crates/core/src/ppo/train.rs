//! The PPO training loop, rollouts of frozen controllers, checkpoints, and
//! weight extraction.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::env::{
    softmax, ActionVector, EnvConfig, EnvState, SourceWeightEnv, FEATURE_SET_VERSION,
};
use super::nn::{Adam, Mlp, Optimizer};
use super::policy::{
    advantage, policy_objective_grad, value_loss_grad, GaussianPolicy, PolicySample,
};
use crate::error::{Error, Result};
use crate::seed::keyed_rng;
use crate::weights::SourceWeights;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub clip_epsilon: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub init_log_std: f64,
    pub optimizer: OptimizerKind,
    pub env: EnvConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            clip_epsilon: 0.2,
            policy_lr: 3e-4,
            value_lr: 1e-3,
            hidden: vec![64, 64],
            batch_size: 128,
            epochs: 4,
            minibatch_size: 32,
            total_steps: 5000,
            seed: 0,
            init_log_std: 0.0,
            optimizer: OptimizerKind::Adam,
            env: EnvConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.clip_epsilon.is_nan() || self.clip_epsilon <= 0.0 {
            return bad("clip_epsilon must be positive");
        }
        if !(self.policy_lr > 0.0
            && self.value_lr > 0.0
            && self.policy_lr.is_finite()
            && self.value_lr.is_finite())
        {
            return bad("learning rates must be positive and finite");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be non-empty and positive");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return bad("batch_size, epochs and minibatch_size must be positive");
        }
        if !self.init_log_std.is_finite() {
            return bad("init_log_std must be finite");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn optimizer(&self, n: usize, lr: f64) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(n, lr)),
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
        }
    }
}

/// One rewarded environment step as collected during a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    /// Always ±1.
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub batch: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub rows: Vec<BatchStats>,
    /// Items that produced no trajectory step (unknown truth, neutral zone, errors).
    pub skipped_items: usize,
    pub pipeline_errors: usize,
}

impl TrainingReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["batch", "mean_reward", "policy_loss", "value_loss"])?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub report: TrainingReport,
}

pub fn init_networks(
    obs_dim: usize,
    n_sources: usize,
    config: &PpoConfig,
) -> (GaussianPolicy, Mlp) {
    let mut rng = keyed_rng(config.seed, "ppo/init");
    let policy = GaussianPolicy::new(
        obs_dim,
        n_sources,
        &config.hidden,
        config.init_log_std,
        &mut rng,
    );
    let mut sizes = vec![obs_dim];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(1);
    let value = Mlp::new(&sizes, 1.0, &mut rng);
    (policy, value)
}

/// Trains policy and value nets on `env`. Single-threaded and seed-deterministic.
pub fn ppo_train(env: &mut SourceWeightEnv<'_>, config: &PpoConfig) -> Result<Trained> {
    config.validate()?;
    let (mut policy, mut value) = init_networks(env.observation_dim(), env.n_sources(), config);
    let mut report = TrainingReport::default();
    if config.total_steps == 0 {
        return Ok(Trained {
            policy,
            value,
            report,
        });
    }
    let mut sample_rng = keyed_rng(config.seed, "ppo/rollout");
    let mut shuffle_rng = keyed_rng(config.seed, "ppo/shuffle");
    let mut policy_opt = config.optimizer(policy.n_params(), config.policy_lr);
    let mut value_opt = config.optimizer(value.n_params(), config.value_lr);

    let mut episode = 0u64;
    let mut state = env.reset(config.seed);
    let mut since_reward = 0usize;
    let mut done_steps = 0usize;
    let mut batch_index = 0usize;

    while done_steps < config.total_steps {
        let want = config.batch_size.min(config.total_steps - done_steps);
        let mut batch: Vec<TrajectoryStep> = Vec::with_capacity(want);
        while batch.len() < want {
            let obs = state.observation();
            let (logits, log_prob) = policy.sample(&obs, &mut sample_rng);
            let action = ActionVector::from_logits(logits);
            let step = env.step(&action)?;
            if step.error.is_some() {
                report.pipeline_errors += 1;
            }
            match step.reward {
                Some(reward) => {
                    since_reward = 0;
                    batch.push(TrajectoryStep {
                        value: value.predict(&obs)[0],
                        state: obs,
                        next_state: step.next_state.observation(),
                        action: action.logits,
                        log_prob,
                        reward,
                        done: step.done,
                    });
                }
                None => {
                    report.skipped_items += 1;
                    since_reward += 1;
                    if since_reward > env.len() {
                        return Err(Error::Empty("rewarded items in environment dataset"));
                    }
                }
            }
            state = if step.done {
                episode += 1;
                env.reset(config.seed.wrapping_add(episode))
            } else {
                step.next_state
            };
        }
        done_steps += batch.len();

        // Advantages and TD targets are fixed with the pre-update value net.
        let mut samples = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for s in &batch {
            let v_next = if s.done {
                0.0
            } else {
                value.predict(&s.next_state)[0]
            };
            samples.push(PolicySample {
                obs: s.state.clone(),
                action: s.action.clone(),
                old_log_prob: s.log_prob,
                advantage: advantage(s.reward, config.gamma, v_next, s.value),
            });
            targets.push(s.reward + config.gamma * v_next);
        }
        let obs: Vec<Vec<f64>> = batch.iter().map(|s| s.state.clone()).collect();

        update_policy(
            &mut policy,
            &mut policy_opt,
            &samples,
            config,
            &mut shuffle_rng,
        );
        update_value(
            &mut value,
            &mut value_opt,
            &obs,
            &targets,
            config,
            &mut shuffle_rng,
        );

        let (objective, _) = policy_objective_grad(&policy, &samples, config.clip_epsilon);
        let (vloss, _) = value_loss_grad(&value, &obs, &targets);
        let mean_reward = batch.iter().map(|s| s.reward).sum::<f64>() / batch.len() as f64;
        if !objective.is_finite() || !vloss.is_finite() || !policy.is_finite() {
            return Err(Error::Divergence(format!(
                "batch {batch_index}: policy objective {objective}, value loss {vloss}"
            )));
        }
        report.rows.push(BatchStats {
            batch: batch_index,
            mean_reward,
            policy_loss: -objective,
            value_loss: vloss,
        });
        batch_index += 1;
    }
    Ok(Trained {
        policy,
        value,
        report,
    })
}

/// `config.epochs` passes of minibatch ascent on the clipped surrogate.
pub fn update_policy(
    policy: &mut GaussianPolicy,
    opt: &mut Optimizer,
    samples: &[PolicySample],
    config: &PpoConfig,
    rng: &mut impl Rng,
) {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch_size) {
            let mb: Vec<PolicySample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let (_, mut g) = policy_objective_grad(policy, &mb, config.clip_epsilon);
            g.iter_mut().for_each(|v| *v = -*v);
            let mut p = policy.params();
            opt.step(&mut p, &g);
            policy.set_params(&p);
        }
    }
}

/// `config.epochs` passes of minibatch descent on the value MSE against fixed targets.
pub fn update_value(
    value: &mut Mlp,
    opt: &mut Optimizer,
    obs: &[Vec<f64>],
    targets: &[f64],
    config: &PpoConfig,
    rng: &mut impl Rng,
) {
    let mut order: Vec<usize> = (0..obs.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch_size) {
            let mb_obs: Vec<Vec<f64>> = chunk.iter().map(|&i| obs[i].clone()).collect();
            let mb_t: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let (_, g) = value_loss_grad(value, &mb_obs, &mb_t);
            opt.step(value.params_mut(), &g);
        }
    }
}

/// What picks the weights during an evaluation rollout.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// The policy's mean action, no exploration noise.
    Policy(&'a GaussianPolicy),
    Fixed(&'a [f64]),
}

impl Controller<'_> {
    fn act(&self, obs: &[f64]) -> ActionVector {
        match self {
            Controller::Policy(p) => ActionVector::from_logits(p.mean_logits(obs)),
            Controller::Fixed(w) => ActionVector {
                logits: w.iter().map(|v| v.ln()).collect(),
                weights: w.to_vec(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub mean_reward: f64,
    pub rewards: Vec<f64>,
    /// States at which a reward was collected.
    pub states: Vec<EnvState>,
}

/// Runs `controller` from a fresh reset until `steps` rewarded steps are collected,
/// wrapping to a new episode at the end of the dataset.
pub fn rollout(
    env: &mut SourceWeightEnv<'_>,
    controller: Controller<'_>,
    steps: usize,
    seed: u64,
) -> Result<Rollout> {
    let mut state = env.reset(seed);
    let mut rewards = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps);
    let mut since_reward = 0usize;
    let mut episode = 0u64;
    while rewards.len() < steps {
        let action = controller.act(&state.observation());
        let step = env.step(&action)?;
        if let Some(r) = step.reward {
            rewards.push(r);
            states.push(state.clone());
            since_reward = 0;
        } else {
            since_reward += 1;
            if since_reward > env.len() {
                return Err(Error::Empty("rewarded items in environment dataset"));
            }
        }
        state = if step.done {
            episode += 1;
            env.reset(seed.wrapping_add(episode))
        } else {
            step.next_state
        };
    }
    let mean_reward = if rewards.is_empty() {
        0.0
    } else {
        rewards.iter().sum::<f64>() / rewards.len() as f64
    };
    Ok(Rollout {
        mean_reward,
        rewards,
        states,
    })
}

/// Mean of the policy's softmax(mean logits) over `states`, renormalized.
pub fn extract_policy_weights(policy: &GaussianPolicy, states: &[EnvState]) -> Result<Vec<f64>> {
    if states.is_empty() {
        return Err(Error::Empty("state sample"));
    }
    let mut acc = vec![0.0; policy.n_actions()];
    for s in states {
        for (a, w) in acc
            .iter_mut()
            .zip(softmax(&policy.mean_logits(&s.observation())))
        {
            *a += w;
        }
    }
    let total: f64 = acc.iter().sum();
    Ok(acc.into_iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub version: u32,
    pub feature_set_version: u32,
    /// Source order of the weight block and of the action vector.
    pub initial_weights: SourceWeights,
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub config: PpoConfig,
    pub config_hash: String,
}

impl PolicyCheckpoint {
    pub fn new(initial_weights: SourceWeights, trained: &Trained, config: &PpoConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            feature_set_version: FEATURE_SET_VERSION,
            initial_weights,
            policy: trained.policy.clone(),
            value: trained.value.clone(),
            config: config.clone(),
            config_hash: config.hash(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&text)?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        if self.feature_set_version != FEATURE_SET_VERSION {
            return Err(Error::Config(format!(
                "checkpoint feature set v{} does not match v{FEATURE_SET_VERSION}",
                self.feature_set_version
            )));
        }
        if self.config_hash != self.config.hash() {
            return Err(Error::Config("checkpoint config hash mismatch".into()));
        }
        let n = self.initial_weights.len();
        let obs = n + super::env::FEATURE_DIM;
        let ok = self.policy.mean.is_consistent()
            && self.value.is_consistent()
            && self.policy.mean.input_dim() == obs
            && self.policy.mean.output_dim() == n
            && self.policy.n_actions() == n
            && self.value.input_dim() == obs
            && self.value.output_dim() == 1
            && self.policy.is_finite()
            && self.value.params().iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::Config(
                "checkpoint architecture is inconsistent".into(),
            ));
        }
        Ok(())
    }
}
