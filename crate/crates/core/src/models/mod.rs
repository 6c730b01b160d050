//! Dynamical-system models behind a single reset / update / predict
//! interface: n-th order Markov models, POMDPs and linear PSRs.

mod io;
mod markov;
mod pomdp;
mod psr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::sequence::{Alphabet, History, Step, Test};

pub use io::{load_model, parse_model, write_model};
pub use markov::MarkovModel;
pub use pomdp::PomdpModel;
pub use psr::LinearPsrModel;

/// Histories and observations with probability at or below this are
/// treated as impossible.
pub const TAU_ZERO: f64 = 1e-12;

/// Tolerance on raw predictions before clamping to [0, 1].
pub const PREDICTION_SLACK: f64 = 1e-6;

pub trait DynamicalModel: Clone + Send + Sync {
    fn alphabet(&self) -> &Alphabet;

    /// Returns to the declared initial state.
    fn reset(&mut self);

    /// Conditions the state on `(action, observation)` and returns the
    /// one-step probability p(ao|h) it consumed. The state is left
    /// untouched when the observation is impossible.
    fn update(&mut self, action: usize, observation: usize) -> Result<f64>;

    /// p(t|h) exactly as the model computes it, without clamping.
    fn predict_raw(&self, test: &Test) -> f64;

    fn predict(&self, test: &Test) -> f64 {
        self.predict_raw(test).clamp(0.0, 1.0)
    }

    /// Raw predictions for every test of length `1..=max_len`, in
    /// length-lex order. Implementations share work between a test and its
    /// one-step prefix.
    fn predict_all(&self, max_len: usize) -> Vec<f64> {
        crate::sequence::enumerate_sequences(self.alphabet(), max_len, false)
            .iter()
            .map(|t| self.predict_raw(t))
            .collect()
    }

    /// Resets and replays `history`, returning p(history).
    fn replay(&mut self, history: &History) -> Result<f64> {
        self.reset();
        let mut p = 1.0;
        for step in history.steps() {
            p *= self.update(step.action, step.observation)?;
        }
        Ok(p)
    }

    /// p(o|h,a) for every observation, as computed (unclamped).
    fn next_observation_probs(&self, action: usize) -> Vec<f64> {
        (0..self.alphabet().num_observations())
            .map(|o| self.predict_raw(&Test::single(action, o)))
            .collect()
    }
}

/// Any of the supported model classes, as loaded from a model file.
#[derive(Debug, Clone)]
pub enum Model {
    Pomdp(PomdpModel),
    Markov(MarkovModel),
    Psr(LinearPsrModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Pomdp(_) => "pomdp",
            Model::Markov(_) => "markov",
            Model::Psr(_) => "psr",
        }
    }
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Model::Pomdp($m) => $e,
            Model::Markov($m) => $e,
            Model::Psr($m) => $e,
        }
    };
}

impl DynamicalModel for Model {
    fn alphabet(&self) -> &Alphabet {
        dispatch!(self, m => m.alphabet())
    }
    fn reset(&mut self) {
        dispatch!(self, m => m.reset())
    }
    fn update(&mut self, action: usize, observation: usize) -> Result<f64> {
        dispatch!(self, m => m.update(action, observation))
    }
    fn predict_raw(&self, test: &Test) -> f64 {
        dispatch!(self, m => m.predict_raw(test))
    }
    fn predict_all(&self, max_len: usize) -> Vec<f64> {
        dispatch!(self, m => m.predict_all(max_len))
    }
}

impl From<PomdpModel> for Model {
    fn from(m: PomdpModel) -> Self {
        Model::Pomdp(m)
    }
}

impl From<MarkovModel> for Model {
    fn from(m: MarkovModel) -> Self {
        Model::Markov(m)
    }
}

impl From<LinearPsrModel> for Model {
    fn from(m: LinearPsrModel) -> Self {
        Model::Psr(m)
    }
}

/// Where a simulation gets its actions from.
#[derive(Debug, Clone)]
pub enum ActionSource {
    /// The given actions, repeated cyclically.
    Fixed(Vec<usize>),
    /// Uniformly random actions.
    Uniform,
}

/// Samples a trajectory of `steps` action-observation pairs from the
/// model's current state, advancing it. Deterministic given `seed`.
pub fn simulate<M: DynamicalModel>(
    model: &mut M,
    source: &ActionSource,
    steps: usize,
    seed: u64,
) -> Result<Vec<Step>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_actions = model.alphabet().num_actions();
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let action = match source {
            ActionSource::Fixed(actions) => {
                assert!(!actions.is_empty(), "fixed action source is empty");
                actions[i % actions.len()]
            }
            ActionSource::Uniform => rng.random_range(0..num_actions),
        };
        let probs: Vec<f64> = model
            .next_observation_probs(action)
            .into_iter()
            .map(|p| if p > TAU_ZERO { p } else { 0.0 })
            .collect();
        let total: f64 = probs.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut observation = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for (o, &p) in probs.iter().enumerate() {
            acc += p;
            if p > 0.0 && u < acc {
                observation = o;
                break;
            }
        }
        model.update(action, observation)?;
        out.push(Step::new(action, observation));
    }
    Ok(out)
}

/// Draws a random history by simulating uniformly random actions from the
/// initial state. The model is left at the end of the history.
pub fn sample_history<M: DynamicalModel>(model: &mut M, len: usize, seed: u64) -> Result<History> {
    model.reset();
    simulate(model, &ActionSource::Uniform, len, seed).map(History::from_steps)
}
