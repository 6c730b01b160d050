use nalgebra::{DMatrix, DVector};

use super::{DynamicalModel, TAU_ZERO};
use crate::error::{Error, Result};
use crate::sequence::{Alphabet, Test};

const ROW_TOL: f64 = 1e-12;
const BELIEF_TOL: f64 = 1e-9;

/// How the observation model was specified. Kept so a model can be written
/// back in the form it was given.
#[derive(Debug, Clone)]
pub(crate) enum Emission {
    /// T^a plus diagonal O^{ao}; the observation depends on the state the
    /// action lands in, so the one-step operator is T^a O^{ao}.
    Diagonal {
        transitions: Vec<DMatrix<f64>>,
        diagonals: Vec<Vec<DVector<f64>>>,
    },
    /// One joint operator per (a, o): entry (i, j) is the probability of
    /// moving i -> j and emitting o under a.
    Joint,
}

/// A POMDP over `k` nominal states with belief-state tracking.
///
/// Internally every (a, o) pair has a k×k nonnegative operator `A^{ao}`
/// with `Σ_o A^{ao}` row-stochastic; the belief update is
/// `b' = b A^{ao} / (b A^{ao} 1)`.
#[derive(Debug, Clone)]
pub struct PomdpModel {
    alphabet: Alphabet,
    /// Indexed by `alphabet.step_index`.
    operators: Vec<DMatrix<f64>>,
    /// Transposes of `operators`, for column-vector belief propagation.
    operators_t: Vec<DMatrix<f64>>,
    initial_belief: DVector<f64>,
    belief: DVector<f64>,
    emission: Emission,
}

impl PomdpModel {
    /// Builds a POMDP from per-action transition matrices and per-(a, o)
    /// diagonal observation probabilities, indexed `[action][observation]`.
    pub fn new(
        alphabet: Alphabet,
        transitions: Vec<DMatrix<f64>>,
        diagonals: Vec<Vec<DVector<f64>>>,
        initial_belief: DVector<f64>,
    ) -> Result<Self> {
        let k = initial_belief.len();
        if k == 0 {
            return Err(Error::schema("b0", "need at least one nominal state"));
        }
        if transitions.len() != alphabet.num_actions() {
            return Err(Error::schema("T", "one matrix per action required"));
        }
        if diagonals.len() != alphabet.num_actions() {
            return Err(Error::schema("O", "one entry per action required"));
        }
        for (a, t) in transitions.iter().enumerate() {
            let name = &alphabet.actions()[a];
            check_stochastic(t, k, &format!("T.{name}"))?;
            let diags = &diagonals[a];
            if diags.len() != alphabet.num_observations() {
                return Err(Error::schema(
                    format!("O.{name}"),
                    "one diagonal per observation required",
                ));
            }
            let mut total = DVector::<f64>::zeros(k);
            for (o, d) in diags.iter().enumerate() {
                let path = format!("O.{name}.{}", alphabet.observations()[o]);
                if d.len() != k {
                    return Err(Error::schema(&path, format!("expected {k} entries, found {}", d.len())));
                }
                if let Some(i) = d.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::schema(format!("{path}[{i}]"), "must be a nonnegative number"));
                }
                total += d;
            }
            if let Some(i) = total.iter().position(|s| (s - 1.0).abs() > ROW_TOL) {
                return Err(Error::schema(
                    format!("O.{name}"),
                    format!("observation probabilities for state {i} sum to {}, not 1", total[i]),
                ));
            }
        }
        let mut operators = Vec::with_capacity(alphabet.num_steps());
        for step in alphabet.steps() {
            let d = &diagonals[step.action][step.observation];
            let t = &transitions[step.action];
            operators.push(DMatrix::from_fn(k, k, |i, j| t[(i, j)] * d[j]));
        }
        Self::assemble(
            alphabet,
            operators,
            initial_belief,
            Emission::Diagonal {
                transitions,
                diagonals,
            },
        )
    }

    /// Builds a POMDP from joint transition-emission operators indexed
    /// `[action][observation]`.
    pub fn from_operators(
        alphabet: Alphabet,
        operators: Vec<Vec<DMatrix<f64>>>,
        initial_belief: DVector<f64>,
    ) -> Result<Self> {
        let k = initial_belief.len();
        if k == 0 {
            return Err(Error::schema("b0", "need at least one nominal state"));
        }
        if operators.len() != alphabet.num_actions() {
            return Err(Error::schema("TO", "one entry per action required"));
        }
        let mut flat = Vec::with_capacity(alphabet.num_steps());
        for (a, per_obs) in operators.into_iter().enumerate() {
            let name = alphabet.actions()[a].clone();
            if per_obs.len() != alphabet.num_observations() {
                return Err(Error::schema(
                    format!("TO.{name}"),
                    "one matrix per observation required",
                ));
            }
            let mut total = DMatrix::<f64>::zeros(k, k);
            for (o, m) in per_obs.iter().enumerate() {
                let path = format!("TO.{name}.{}", alphabet.observations()[o]);
                if m.shape() != (k, k) {
                    return Err(Error::schema(&path, format!("expected a {k}x{k} matrix")));
                }
                check_nonnegative(m, &path)?;
                total += m;
            }
            check_stochastic(&total, k, &format!("TO.{name}"))?;
            flat.extend(per_obs);
        }
        Self::assemble(alphabet, flat, initial_belief, Emission::Joint)
    }

    fn assemble(
        alphabet: Alphabet,
        operators: Vec<DMatrix<f64>>,
        initial_belief: DVector<f64>,
        emission: Emission,
    ) -> Result<Self> {
        check_belief(&initial_belief, "b0")?;
        let operators_t = operators.iter().map(|m| m.transpose()).collect();
        Ok(PomdpModel {
            alphabet,
            operators,
            operators_t,
            belief: initial_belief.clone(),
            initial_belief,
            emission,
        })
    }

    pub fn num_states(&self) -> usize {
        self.initial_belief.len()
    }

    pub fn belief(&self) -> &DVector<f64> {
        &self.belief
    }

    pub fn initial_belief(&self) -> &DVector<f64> {
        &self.initial_belief
    }

    /// Replaces the current belief, e.g. to condition on a nominal state.
    pub fn set_belief(&mut self, belief: DVector<f64>) -> Result<()> {
        if belief.len() != self.num_states() {
            return Err(Error::schema("belief", "wrong dimension"));
        }
        check_belief(&belief, "belief")?;
        self.belief = belief;
        Ok(())
    }

    /// The one-step operator for `(action, observation)`.
    pub fn operator(&self, action: usize, observation: usize) -> &DMatrix<f64> {
        &self.operators[action * self.alphabet.num_observations() + observation]
    }

    /// T^a, the observation-marginalized transition matrix.
    pub fn transition(&self, action: usize) -> DMatrix<f64> {
        let n_obs = self.alphabet.num_observations();
        let k = self.num_states();
        (0..n_obs).fold(DMatrix::zeros(k, k), |acc, o| acc + self.operator(action, o))
    }

    pub(crate) fn emission(&self) -> &Emission {
        &self.emission
    }

    /// Unnormalized forward message after `test` from `belief`.
    fn forward(&self, belief: &DVector<f64>, test: &Test) -> DVector<f64> {
        let mut v = belief.clone();
        for step in test.steps() {
            v = &self.operators_t[self.alphabet.step_index(*step)] * v;
        }
        v
    }

    /// p(t) from an arbitrary belief, leaving the model state alone.
    pub fn predict_from(&self, belief: &DVector<f64>, test: &Test) -> f64 {
        if test.is_empty() {
            return 1.0;
        }
        self.forward(belief, test).sum()
    }
}

impl DynamicalModel for PomdpModel {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn reset(&mut self) {
        self.belief.copy_from(&self.initial_belief);
    }

    fn update(&mut self, action: usize, observation: usize) -> Result<f64> {
        let step = self.alphabet.step_index(crate::sequence::Step::new(action, observation));
        let v = &self.operators_t[step] * &self.belief;
        let p = v.sum();
        if p <= TAU_ZERO {
            return Err(Error::ImpossibleObservation {
                step: self.alphabet.render_step(crate::sequence::Step::new(action, observation)),
                probability: p,
            });
        }
        self.belief = v / p;
        Ok(p)
    }

    fn predict_raw(&self, test: &Test) -> f64 {
        self.predict_from(&self.belief, test)
    }

    fn predict_all(&self, max_len: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut level = vec![self.belief.clone()];
        for _ in 0..max_len {
            let mut next = Vec::with_capacity(level.len() * self.operators_t.len());
            for v in &level {
                for op in &self.operators_t {
                    let w = op * v;
                    out.push(w.sum());
                    next.push(w);
                }
            }
            level = next;
        }
        out
    }
}

fn check_nonnegative(m: &DMatrix<f64>, path: &str) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let x = m[(i, j)];
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::schema(format!("{path}[{i}][{j}]"), "must be a nonnegative number"));
            }
        }
    }
    Ok(())
}

fn check_stochastic(m: &DMatrix<f64>, k: usize, path: &str) -> Result<()> {
    if m.shape() != (k, k) {
        return Err(Error::schema(path, format!("expected a {k}x{k} matrix")));
    }
    check_nonnegative(m, path)?;
    for i in 0..k {
        let s = m.row(i).sum();
        if (s - 1.0).abs() > ROW_TOL {
            return Err(Error::schema(format!("{path}[{i}]"), format!("row sums to {s}, not 1")));
        }
    }
    Ok(())
}

fn check_belief(b: &DVector<f64>, path: &str) -> Result<()> {
    if let Some(i) = b.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::schema(format!("{path}[{i}]"), "must be a nonnegative number"));
    }
    let s = b.sum();
    if (s - 1.0).abs() > BELIEF_TOL {
        return Err(Error::schema(path, format!("sums to {s}, not 1")));
    }
    Ok(())
}
