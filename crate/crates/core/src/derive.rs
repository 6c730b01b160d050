//! Linear PSRs from POMDPs and from system-dynamics matrices.
//!
//! For a POMDP the outcome vector u(t) holds p(t|s) for every nominal state
//! s, and u(ao·t) = A^{ao} u(t). Core tests are found by growing a basis of
//! outcome vectors through one-step prefix extensions starting from the
//! empty test.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{least_squares, IncrementalBasis, RANK_TOL};
use crate::models::{DynamicalModel, LinearPsrModel, PomdpModel};
use crate::sequence::{Alphabet, Test};
use crate::sysdyn::SysDynMatrix;

/// Residual bound for weights solved against outcome vectors, scaled by
/// `1 + |u(t)|`.
pub const WEIGHT_RESIDUAL_TOL: f64 = 1e-8;
/// Residual bound per matrix row for weights regressed on matrix columns.
pub const MATRIX_RESIDUAL_TOL: f64 = 1e-6;

/// u(t) by applying the one-step operators right to left to the all-ones
/// vector.
pub fn outcome_vector(pomdp: &PomdpModel, test: &Test) -> DVector<f64> {
    let mut u = DVector::from_element(pomdp.num_states(), 1.0);
    for step in test.steps().iter().rev() {
        u = pomdp.operator(step.action, step.observation) * u;
    }
    u
}

/// Memoized outcome vectors for one POMDP.
#[derive(Debug, Clone)]
pub struct OutcomeVectorTable<'a> {
    pomdp: &'a PomdpModel,
    cache: BTreeMap<Test, DVector<f64>>,
}

impl<'a> OutcomeVectorTable<'a> {
    pub fn new(pomdp: &'a PomdpModel) -> Self {
        let mut cache = BTreeMap::new();
        cache.insert(Test::empty(), DVector::from_element(pomdp.num_states(), 1.0));
        OutcomeVectorTable { pomdp, cache }
    }

    pub fn pomdp(&self) -> &'a PomdpModel {
        self.pomdp
    }

    pub fn get(&mut self, test: &Test) -> DVector<f64> {
        if let Some(u) = self.cache.get(test) {
            return u.clone();
        }
        let (first, rest) = test.steps().split_first().expect("empty test is cached");
        let tail = self.get(&Test::from_steps(rest.to_vec()));
        let u = self.pomdp.operator(first.action, first.observation) * tail;
        self.cache.insert(test.clone(), u.clone());
        u
    }

    /// Outcome vectors of `tests` as columns.
    pub fn matrix(&mut self, tests: &[Test]) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = tests.iter().map(|t| self.get(t)).collect();
        DMatrix::from_fn(self.pomdp.num_states(), tests.len(), |i, j| cols[j][i])
    }
}

/// Core tests by breadth-first prefix extension: every candidate `ao·t`
/// for `t` in the frontier is admitted when it raises the rank of the
/// admitted outcome vectors. Stops when a pass admits nothing or the rank
/// reaches the number of states.
pub fn find_core_tests(pomdp: &PomdpModel) -> Vec<Test> {
    find_core_tests_in(&mut OutcomeVectorTable::new(pomdp))
}

fn find_core_tests_in(table: &mut OutcomeVectorTable<'_>) -> Vec<Test> {
    let pomdp = table.pomdp();
    let k = pomdp.num_states();
    let mut basis = IncrementalBasis::new(k, RANK_TOL);
    let mut core = Vec::new();
    let mut frontier = vec![Test::empty()];
    while !frontier.is_empty() && core.len() < k {
        let mut next = Vec::new();
        'pass: for t in &frontier {
            for step in pomdp.alphabet().steps() {
                let candidate = t.prepend(step);
                if basis.try_push(&table.get(&candidate)) {
                    core.push(candidate.clone());
                    next.push(candidate);
                    if core.len() == k {
                        break 'pass;
                    }
                }
            }
        }
        next.sort();
        frontier = next;
    }
    core
}

/// Solves U_Q m = u(t) for the weight vector of `test`.
pub fn solve_weights(table: &mut OutcomeVectorTable<'_>, core: &[Test], test: &Test) -> Result<DVector<f64>> {
    solve_weights_with_residual(table, core, test).map(|(m, _)| m)
}

fn solve_weights_with_residual(
    table: &mut OutcomeVectorTable<'_>,
    core: &[Test],
    test: &Test,
) -> Result<(DVector<f64>, f64)> {
    let u_q = table.matrix(core);
    let u = table.get(test);
    if let Some(j) = core.iter().position(|q| q == test) {
        if crate::linalg::numerical_rank(&u_q, RANK_TOL) == core.len() {
            let mut e = DVector::zeros(core.len());
            e[j] = 1.0;
            return Ok((e, 0.0));
        }
    }
    let (m, residual) = least_squares(&u_q, &u, RANK_TOL);
    let bound = WEIGHT_RESIDUAL_TOL * (1.0 + u.norm());
    if residual > bound {
        return Err(Error::SpanViolation {
            test: table.pomdp().alphabet().render(test),
            residual,
            bound,
        });
    }
    Ok((m, residual))
}

/// Summary of a derivation.
#[derive(Debug, Clone, Serialize)]
pub struct DerivationReport {
    /// `pomdp` or `matrix`.
    pub source: String,
    pub core_tests: Vec<String>,
    pub rank: usize,
    /// Largest residual over the one-step weights m_ao.
    pub max_one_step_residual: f64,
    /// Largest residual over the extension weights, columns of M_ao.
    pub max_extension_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Derivation {
    pub model: LinearPsrModel,
    pub report: DerivationReport,
}

/// Derives a linear PSR from a POMDP. An override must consist of
/// independent tests spanning the full outcome-vector space.
pub fn pomdp_to_psr(pomdp: &PomdpModel, core_override: Option<&[Test]>) -> Result<LinearPsrModel> {
    derive_from_pomdp(pomdp, core_override).map(|d| d.model)
}

pub fn derive_from_pomdp(pomdp: &PomdpModel, core_override: Option<&[Test]>) -> Result<Derivation> {
    let alphabet = pomdp.alphabet();
    let mut table = OutcomeVectorTable::new(pomdp);
    let found = find_core_tests_in(&mut table);
    let core = match core_override {
        None => found,
        Some(tests) => {
            check_override(&mut table, alphabet, tests, found.len())?;
            tests.to_vec()
        }
    };

    let b0 = pomdp.initial_belief();
    let initial = DVector::from_iterator(core.len(), core.iter().map(|q| b0.dot(&table.get(q))));
    let mut weights = Vec::with_capacity(alphabet.num_steps());
    let mut extensions = Vec::with_capacity(alphabet.num_steps());
    let mut max_one = 0.0f64;
    let mut max_ext = 0.0f64;
    for step in alphabet.steps() {
        let (m, r) = solve_weights_with_residual(&mut table, &core, &Test::from_steps(vec![step]))?;
        max_one = max_one.max(r);
        weights.push(m);
        let mut ext = DMatrix::zeros(core.len(), core.len());
        for (j, q) in core.iter().enumerate() {
            let (m, r) = solve_weights_with_residual(&mut table, &core, &q.prepend(step))?;
            max_ext = max_ext.max(r);
            ext.set_column(j, &m);
        }
        extensions.push(ext);
    }
    let report = DerivationReport {
        source: "pomdp".into(),
        core_tests: core.iter().map(|q| alphabet.render(q)).collect(),
        rank: core.len(),
        max_one_step_residual: max_one,
        max_extension_residual: max_ext,
    };
    let model = LinearPsrModel::new(alphabet.clone(), core, initial, weights, extensions)?;
    Ok(Derivation { model, report })
}

fn check_override(
    table: &mut OutcomeVectorTable<'_>,
    alphabet: &Alphabet,
    tests: &[Test],
    rank: usize,
) -> Result<()> {
    let mut basis = IncrementalBasis::new(table.pomdp().num_states(), RANK_TOL);
    for t in tests {
        if t.is_empty() {
            return Err(Error::InvalidOverride("the empty test cannot be a core test".into()));
        }
        if !basis.try_push(&table.get(t)) {
            return Err(Error::InvalidOverride(format!(
                "{} is linearly dependent on the tests before it",
                alphabet.render(t)
            )));
        }
    }
    if tests.len() != rank {
        return Err(Error::InvalidOverride(format!(
            "{} independent tests given, but the outcome vectors span {rank} dimensions",
            tests.len()
        )));
    }
    Ok(())
}

/// Derives a linear PSR directly from a truncated matrix. Core tests are
/// the first independent columns in length-lex order; every weight is
/// regressed over all retained rows.
pub fn matrix_to_psr(matrix: &SysDynMatrix) -> Result<LinearPsrModel> {
    derive_from_matrix(matrix).map(|d| d.model)
}

pub fn derive_from_matrix(matrix: &SysDynMatrix) -> Result<Derivation> {
    let alphabet = matrix.alphabet();
    let d = matrix.entries();
    if matrix.row_histories().first().is_none_or(|h| !h.is_empty()) {
        return Err(Error::schema("rows", "the first row must be the empty history"));
    }

    let mut basis = IncrementalBasis::new(d.nrows(), RANK_TOL);
    let mut core_cols = Vec::new();
    for j in 0..d.ncols() {
        if basis.try_push(&d.column(j).into_owned()) {
            core_cols.push(j);
            if core_cols.len() == d.nrows() {
                break;
            }
        }
    }
    if core_cols.is_empty() {
        return Err(Error::schema("entries", "matrix has no nonzero column"));
    }
    let core: Vec<Test> = core_cols.iter().map(|&j| matrix.col_tests()[j].clone()).collect();
    let d_q = d.select_columns(&core_cols);
    let bound = MATRIX_RESIDUAL_TOL * d.nrows() as f64;

    let column = |t: &Test| -> Result<usize> {
        matrix
            .column_of(t)
            .ok_or_else(|| Error::DepthInsufficient(alphabet.render(t)))
    };
    let solve = |t: &Test| -> Result<(DVector<f64>, f64)> {
        let j = column(t)?;
        if let Some(pos) = core_cols.iter().position(|&c| c == j) {
            let mut e = DVector::zeros(core_cols.len());
            e[pos] = 1.0;
            return Ok((e, 0.0));
        }
        let (m, residual) = least_squares(&d_q, &d.column(j).into_owned(), RANK_TOL);
        if residual > bound {
            return Err(Error::SpanViolation {
                test: alphabet.render(t),
                residual,
                bound,
            });
        }
        Ok((m, residual))
    };

    let mut weights = Vec::with_capacity(alphabet.num_steps());
    let mut extensions = Vec::with_capacity(alphabet.num_steps());
    let mut max_one = 0.0f64;
    let mut max_ext = 0.0f64;
    for step in alphabet.steps() {
        let (m, r) = solve(&Test::from_steps(vec![step]))?;
        max_one = max_one.max(r);
        weights.push(m);
        let mut ext = DMatrix::zeros(core.len(), core.len());
        for (j, q) in core.iter().enumerate() {
            let (m, r) = solve(&q.prepend(step))?;
            max_ext = max_ext.max(r);
            ext.set_column(j, &m);
        }
        extensions.push(ext);
    }
    let initial = d_q.row(0).transpose();
    let report = DerivationReport {
        source: "matrix".into(),
        core_tests: core.iter().map(|q| alphabet.render(q)).collect(),
        rank: core.len(),
        max_one_step_residual: max_one,
        max_extension_residual: max_ext,
    };
    let model = LinearPsrModel::new(alphabet.clone(), core, initial, weights, extensions)?;
    Ok(Derivation { model, report })
}
