use nalgebra::DMatrix;

use super::{DynamicalModel, TAU_ZERO};
use crate::error::{Error, Result};
use crate::sequence::{Alphabet, Step, Test};

const ROW_TOL: f64 = 1e-12;

/// An order-n Markov model: the next observation depends only on the last
/// n action-observation pairs.
///
/// The state is the length-n suffix of the history. Before n steps have
/// elapsed the missing oldest positions hold a placeholder, so suffixes are
/// indexed in base `|A||O| + 1` (digit 0 = placeholder, digit s+1 = step s,
/// oldest step most significant). Each action owns a table with one row per
/// such suffix giving the distribution over observations.
#[derive(Debug, Clone)]
pub struct MarkovModel {
    alphabet: Alphabet,
    order: usize,
    /// Per action, `(|A||O|+1)^n × |O|`.
    tables: Vec<DMatrix<f64>>,
    /// Whether the tables were given with only the `(|A||O|)^n` visible rows.
    visible_only: bool,
    state: usize,
}

impl MarkovModel {
    /// Accepts per-action tables with either `(|A||O|+1)^n` rows (explicit
    /// warm-up rows) or `(|A||O|)^n` rows. In the second form a placeholder
    /// behaves as the first step of the alphabet, so the initial state is
    /// equivalent to a visible suffix.
    pub fn new(alphabet: Alphabet, order: usize, tables: Vec<DMatrix<f64>>) -> Result<Self> {
        if order == 0 {
            return Err(Error::schema("order", "must be at least 1"));
        }
        let s = alphabet.num_steps();
        let n_obs = alphabet.num_observations();
        let full = pow_checked(s + 1, order).ok_or_else(|| Error::schema("order", "too large"))?;
        let visible = pow_checked(s, order).ok_or_else(|| Error::schema("order", "too large"))?;
        if full > 1 << 20 {
            return Err(Error::schema("order", "suffix table too large"));
        }
        if tables.len() != alphabet.num_actions() {
            return Err(Error::schema("obs", "one table per action required"));
        }
        let mut visible_only = None;
        let mut expanded = Vec::with_capacity(tables.len());
        for (a, t) in tables.into_iter().enumerate() {
            let path = format!("obs.{}", alphabet.actions()[a]);
            if t.ncols() != n_obs {
                return Err(Error::schema(&path, format!("expected {n_obs} columns, found {}", t.ncols())));
            }
            let this_visible = if t.nrows() == full {
                false
            } else if t.nrows() == visible {
                true
            } else {
                return Err(Error::schema(
                    &path,
                    format!("expected {visible} or {full} rows, found {}", t.nrows()),
                ));
            };
            if *visible_only.get_or_insert(this_visible) != this_visible {
                return Err(Error::schema(&path, "all tables must use the same row layout"));
            }
            for i in 0..t.nrows() {
                for o in 0..n_obs {
                    let x = t[(i, o)];
                    if !(x.is_finite() && x >= 0.0) {
                        return Err(Error::schema(format!("{path}[{i}][{o}]"), "must be a nonnegative number"));
                    }
                }
                let sum = t.row(i).sum();
                if (sum - 1.0).abs() > ROW_TOL {
                    return Err(Error::schema(format!("{path}[{i}]"), format!("row sums to {sum}, not 1")));
                }
            }
            expanded.push(if this_visible {
                DMatrix::from_fn(full, n_obs, |i, o| t[(visible_row(i, s, order), o)])
            } else {
                t
            });
        }
        Ok(MarkovModel {
            alphabet,
            order,
            tables: expanded,
            visible_only: visible_only.unwrap_or(false),
            state: 0,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Internal suffix index of the current state.
    pub fn state(&self) -> usize {
        self.state
    }

    /// Number of visible suffix states, (|A||O|)^n.
    pub fn num_visible_states(&self) -> usize {
        self.alphabet.num_steps().pow(self.order as u32)
    }

    /// Tables in the layout they were given, for serialization.
    pub(crate) fn tables_as_given(&self) -> Vec<DMatrix<f64>> {
        if !self.visible_only {
            return self.tables.clone();
        }
        let s = self.alphabet.num_steps();
        let base = s + 1;
        // visible suffix digits d map to internal digits d + 1
        self.tables
            .iter()
            .map(|t| {
                DMatrix::from_fn(self.num_visible_states(), t.ncols(), |v, o| {
                    let mut internal = 0;
                    let mut rest = v;
                    let mut scale = 1;
                    for _ in 0..self.order {
                        internal += (rest % s + 1) * scale;
                        rest /= s;
                        scale *= base;
                    }
                    t[(internal, o)]
                })
            })
            .collect()
    }

    fn shift(&self, state: usize, step: Step) -> usize {
        let base = self.alphabet.num_steps() + 1;
        let modulus = base.pow(self.order as u32);
        (state * base + self.alphabet.step_index(step) + 1) % modulus
    }

    fn prob(&self, state: usize, step: Step) -> f64 {
        self.tables[step.action][(state, step.observation)]
    }
}

/// Visible row for an internal suffix index: placeholders read as step 0.
fn visible_row(internal: usize, s: usize, order: usize) -> usize {
    let base = s + 1;
    let mut rest = internal;
    let mut out = 0;
    let mut scale = 1;
    for _ in 0..order {
        let digit = rest % base;
        out += digit.saturating_sub(1) * scale;
        rest /= base;
        scale *= s;
    }
    out
}

fn pow_checked(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

impl DynamicalModel for MarkovModel {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn reset(&mut self) {
        self.state = 0;
    }

    fn update(&mut self, action: usize, observation: usize) -> Result<f64> {
        let step = Step::new(action, observation);
        let p = self.prob(self.state, step);
        if p <= TAU_ZERO {
            return Err(Error::ImpossibleObservation {
                step: self.alphabet.render_step(step),
                probability: p,
            });
        }
        self.state = self.shift(self.state, step);
        Ok(p)
    }

    fn predict_raw(&self, test: &Test) -> f64 {
        let mut state = self.state;
        let mut p = 1.0;
        for &step in test.steps() {
            p *= self.prob(state, step);
            if p == 0.0 {
                return 0.0;
            }
            state = self.shift(state, step);
        }
        p
    }

    fn predict_all(&self, max_len: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut level = vec![(self.state, 1.0)];
        for _ in 0..max_len {
            let mut next = Vec::with_capacity(level.len() * self.alphabet.num_steps());
            for &(state, p) in &level {
                for step in self.alphabet.steps() {
                    let q = p * self.prob(state, step);
                    out.push(q);
                    next.push((self.shift(state, step), q));
                }
            }
            level = next;
        }
        out
    }
}
