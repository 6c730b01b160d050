use nalgebra::{DMatrix, DVector};

use super::{DynamicalModel, PREDICTION_SLACK, TAU_ZERO};
use crate::error::{Error, Result};
use crate::sequence::{Alphabet, Step, Test};

const NORMALIZATION_TOL: f64 = 1e-8;

/// A linear predictive state representation.
///
/// The state is the vector of predictions p(Q|h) for the core tests Q.
/// Every test t has a weight vector m_t with p(t|h) = p(Q|h)·m_t, and the
/// state is updated by
///
/// ```text
/// p(Q|hao)ᵀ = p(Q|h)ᵀ M_ao / p(Q|h)ᵀ m_ao
/// ```
///
/// where column j of M_ao is the weight vector of `ao·q_j`. States are not
/// renormalized between updates.
#[derive(Debug, Clone)]
pub struct LinearPsrModel {
    alphabet: Alphabet,
    core_tests: Vec<Test>,
    initial: DVector<f64>,
    /// m_ao indexed by step index.
    weights: Vec<DVector<f64>>,
    /// M_ao indexed by step index.
    extensions: Vec<DMatrix<f64>>,
    /// Transposes of `extensions`.
    extensions_t: Vec<DMatrix<f64>>,
    state: DVector<f64>,
}

impl LinearPsrModel {
    /// `weights` and `extensions` are indexed by `alphabet.step_index`.
    pub fn new(
        alphabet: Alphabet,
        core_tests: Vec<Test>,
        initial: DVector<f64>,
        weights: Vec<DVector<f64>>,
        extensions: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let k = core_tests.len();
        if k == 0 {
            return Err(Error::schema("core_tests", "need at least one core test"));
        }
        for (i, q) in core_tests.iter().enumerate() {
            if q.is_empty() {
                return Err(Error::schema(format!("core_tests[{i}]"), "the empty test is not a core test"));
            }
            if core_tests[..i].contains(q) {
                return Err(Error::schema(format!("core_tests[{i}]"), "duplicate core test"));
            }
        }
        if initial.len() != k {
            return Err(Error::schema("p0", format!("expected {k} entries, found {}", initial.len())));
        }
        if let Some(i) = initial
            .iter()
            .position(|x| !x.is_finite() || *x < -PREDICTION_SLACK || *x > 1.0 + PREDICTION_SLACK)
        {
            return Err(Error::schema(format!("p0[{i}]"), "must be a probability"));
        }
        let n = alphabet.num_steps();
        if weights.len() != n || extensions.len() != n {
            return Err(Error::schema("m", "one entry per action-observation pair required"));
        }
        for step in alphabet.steps() {
            let key = alphabet.render_step(step);
            let i = alphabet.step_index(step);
            if weights[i].len() != k {
                return Err(Error::schema(format!("m.{key}"), format!("expected {k} entries")));
            }
            if weights[i].iter().any(|x| !x.is_finite()) {
                return Err(Error::schema(format!("m.{key}"), "entries must be finite"));
            }
            if extensions[i].shape() != (k, k) {
                return Err(Error::schema(format!("M.{key}"), format!("expected a {k}x{k} matrix")));
            }
            if extensions[i].iter().any(|x| !x.is_finite()) {
                return Err(Error::schema(format!("M.{key}"), "entries must be finite"));
            }
        }
        let extensions_t = extensions.iter().map(|m| m.transpose()).collect();
        let model = LinearPsrModel {
            alphabet,
            core_tests,
            state: initial.clone(),
            initial,
            weights,
            extensions,
            extensions_t,
        };
        for a in 0..model.alphabet.num_actions() {
            let mass = model.next_observation_mass(a);
            if (mass - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::schema(
                    format!("m.{}*", model.alphabet.actions()[a]),
                    format!("one-step predictions from p0 sum to {mass}, not 1"),
                ));
            }
        }
        Ok(model)
    }

    pub fn num_core_tests(&self) -> usize {
        self.core_tests.len()
    }

    pub fn core_tests(&self) -> &[Test] {
        &self.core_tests
    }

    pub fn initial_prediction(&self) -> &DVector<f64> {
        &self.initial
    }

    /// The current prediction vector p(Q|h).
    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    pub fn one_step_weight(&self, step: Step) -> &DVector<f64> {
        &self.weights[self.alphabet.step_index(step)]
    }

    pub fn extension_matrix(&self, step: Step) -> &DMatrix<f64> {
        &self.extensions[self.alphabet.step_index(step)]
    }

    /// m_t = M_{a¹o¹} ⋯ M_{aⁿ⁻¹oⁿ⁻¹} m_{aⁿoⁿ}; `None` for the empty test.
    pub fn test_weight(&self, test: &Test) -> Option<DVector<f64>> {
        let (last, prefix) = test.steps().split_last()?;
        let mut m = self.one_step_weight(*last).clone();
        for step in prefix.iter().rev() {
            m = self.extension_matrix(*step) * m;
        }
        Some(m)
    }

    /// Σ_o p(Q|h)·m_ao, which is 1 on every reachable state.
    pub fn next_observation_mass(&self, action: usize) -> f64 {
        (0..self.alphabet.num_observations())
            .map(|o| self.state.dot(self.one_step_weight(Step::new(action, o))))
            .sum()
    }
}

impl DynamicalModel for LinearPsrModel {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn reset(&mut self) {
        self.state.copy_from(&self.initial);
    }

    fn update(&mut self, action: usize, observation: usize) -> Result<f64> {
        let step = Step::new(action, observation);
        let i = self.alphabet.step_index(step);
        let p = self.state.dot(&self.weights[i]);
        if p <= TAU_ZERO {
            return Err(Error::ImpossibleObservation {
                step: self.alphabet.render_step(step),
                probability: p,
            });
        }
        self.state = (&self.extensions_t[i] * &self.state) / p;
        Ok(p)
    }

    fn predict_raw(&self, test: &Test) -> f64 {
        let Some((last, prefix)) = test.steps().split_last() else {
            return 1.0;
        };
        let mut w = self.state.clone();
        for step in prefix {
            w = &self.extensions_t[self.alphabet.step_index(*step)] * w;
        }
        w.dot(self.one_step_weight(*last))
    }

    fn predict_all(&self, max_len: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut level = vec![self.state.clone()];
        for depth in 0..max_len {
            let last = depth + 1 == max_len;
            let mut next = Vec::new();
            for w in &level {
                for (i, m) in self.weights.iter().enumerate() {
                    out.push(w.dot(m));
                    if !last {
                        next.push(&self.extensions_t[i] * w);
                    }
                }
            }
            level = next;
        }
        out
    }
}
