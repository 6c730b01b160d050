//! Truncated system-dynamics matrices.
//!
//! Rows are histories and columns are tests, both in length-lex order; the
//! entry at (h, t) is p(t|h). Histories whose probability is at or below
//! [`TAU_ZERO`] are left out, since the conditional row is undefined there.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};
use crate::models::{DynamicalModel, TAU_ZERO};
use crate::sequence::{self, count_sequences, enumerate_sequences, Alphabet, History, Test};

/// Default truncation depths.
pub const DEFAULT_DEPTH: usize = 4;
/// Largest matrix (rows × columns) the plateau search will build.
pub const DEFAULT_ENTRY_BUDGET: usize = 200_000;

const RANGE_TOL: f64 = 1e-9;
const SUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SysDynMatrix {
    alphabet: Alphabet,
    hist_depth: usize,
    test_depth: usize,
    row_histories: Vec<History>,
    col_tests: Vec<Test>,
    history_probs: Vec<f64>,
    entries: DMatrix<f64>,
}

/// A reachable history with the model conditioned on it.
struct Row<M> {
    history: History,
    model: M,
    prob: f64,
}

/// Histories of length `<= hist_depth` with probability above the cutoff,
/// in length-lex order.
fn reachable_rows<M: DynamicalModel>(model: &M, hist_depth: usize) -> Vec<Row<M>> {
    let mut root = model.clone();
    root.reset();
    let mut rows = vec![Row {
        history: History::empty(),
        model: root,
        prob: 1.0,
    }];
    let mut start = 0;
    for _ in 0..hist_depth {
        let end = rows.len();
        for i in start..end {
            for step in model.alphabet().steps() {
                let mut child = rows[i].model.clone();
                let Ok(p) = child.update(step.action, step.observation) else {
                    continue;
                };
                let prob = rows[i].prob * p;
                if prob > TAU_ZERO {
                    let history = rows[i].history.extend(step);
                    rows.push(Row {
                        history,
                        model: child,
                        prob,
                    });
                }
            }
        }
        start = end;
    }
    rows
}

/// Builds the matrix over all reachable histories of length `<= hist_depth`
/// and all tests of length `1..=test_depth`. Entries are the models' raw
/// predictions, so [`SysDynMatrix::check_validity`] sees any drift.
pub fn build_matrix<M: DynamicalModel>(model: &M, hist_depth: usize, test_depth: usize) -> SysDynMatrix {
    build_within(model, hist_depth, test_depth, usize::MAX).expect("unbounded budget")
}

/// As [`build_matrix`], but returns `None` without computing entries when
/// the matrix would exceed `budget` entries.
pub fn build_within<M: DynamicalModel>(
    model: &M,
    hist_depth: usize,
    test_depth: usize,
    budget: usize,
) -> Option<SysDynMatrix> {
    assert!(hist_depth >= 1 && test_depth >= 1, "depths must be at least 1");
    let alphabet = model.alphabet().clone();
    let cols = count_sequences(alphabet.num_steps(), test_depth);
    if cols > budget {
        return None;
    }
    let rows = reachable_rows(model, hist_depth);
    if rows.len().saturating_mul(cols) > budget {
        return None;
    }
    let row_values: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|r| r.model.predict_all(test_depth))
        .collect();
    let entries = DMatrix::from_fn(rows.len(), cols, |i, j| row_values[i][j]);
    Some(SysDynMatrix {
        col_tests: enumerate_sequences(&alphabet, test_depth, false),
        alphabet,
        hist_depth,
        test_depth,
        history_probs: rows.iter().map(|r| r.prob).collect(),
        row_histories: rows.into_iter().map(|r| r.history).collect(),
        entries,
    })
}

impl SysDynMatrix {
    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn hist_depth(&self) -> usize {
        self.hist_depth
    }

    pub fn test_depth(&self) -> usize {
        self.test_depth
    }

    pub fn row_histories(&self) -> &[History] {
        &self.row_histories
    }

    pub fn col_tests(&self) -> &[Test] {
        &self.col_tests
    }

    pub fn history_probs(&self) -> &[f64] {
        &self.history_probs
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn row_of(&self, history: &History) -> Option<usize> {
        self.row_histories.binary_search(history).ok()
    }

    /// Column of a non-empty test within the truncation.
    pub fn column_of(&self, test: &Test) -> Option<usize> {
        if test.is_empty() || test.len() > self.test_depth {
            return None;
        }
        Some(sequence::sequence_index(&self.alphabet, test))
    }

    /// p(t|h) for a retained history; the empty test gives 1.
    pub fn entry(&self, history: &History, test: &Test) -> Option<f64> {
        let row = self.row_of(history)?;
        if test.is_empty() {
            return Some(1.0);
        }
        self.column_of(test).map(|c| self.entries[(row, c)])
    }

    pub fn numerical_rank(&self) -> usize {
        self.numerical_rank_with_tol(RANK_TOL)
    }

    pub fn numerical_rank_with_tol(&self, tol: f64) -> usize {
        linalg::numerical_rank(&self.entries, tol)
    }

    /// Checks every retained row for the three properties of predictions:
    /// range, normalization over each action sequence, and consistency of a
    /// test with its one-step extensions.
    pub fn check_validity(&self) -> ValidityReport {
        let n_actions = self.alphabet.num_actions();
        let n_obs = self.alphabet.num_observations();
        let branching = self.alphabet.num_steps();

        // per column: (length, index of its action sequence among A^length)
        let col_meta: Vec<(usize, usize)> = self
            .col_tests
            .iter()
            .map(|t| {
                let idx = t.steps().iter().fold(0, |acc, s| acc * n_actions + s.action);
                (t.len(), idx)
            })
            .collect();

        let mut violations = Vec::new();
        for (i, h) in self.row_histories.iter().enumerate() {
            let row_name = self.alphabet.render(h);
            let row = self.entries.row(i);

            for (j, &v) in row.iter().enumerate() {
                if !(v >= -RANGE_TOL && v <= 1.0 + RANGE_TOL) {
                    violations.push(Violation {
                        row: row_name.clone(),
                        column: self.alphabet.render(&self.col_tests[j]),
                        property: Property::Range,
                        value: v,
                        expected: v.clamp(0.0, 1.0),
                    });
                }
            }

            for len in 1..=self.test_depth {
                let mut sums = vec![0.0; n_actions.pow(len as u32)];
                let start = count_sequences(branching, len - 1);
                let end = count_sequences(branching, len);
                for j in start..end {
                    sums[col_meta[j].1] += row[j];
                }
                for (a_idx, s) in sums.iter().enumerate() {
                    if (s - 1.0).abs() > SUM_TOL {
                        let actions = decode_actions(a_idx, n_actions, len);
                        violations.push(Violation {
                            row: row_name.clone(),
                            column: self.alphabet.render_actions(&actions),
                            property: Property::Normalization,
                            value: *s,
                            expected: 1.0,
                        });
                    }
                }
            }

            for len in 1..self.test_depth {
                let start = count_sequences(branching, len - 1);
                let end = count_sequences(branching, len);
                let child_start = end;
                for j in start..end {
                    let rank = j - start;
                    for a in 0..n_actions {
                        let base = child_start + rank * branching + a * n_obs;
                        let s: f64 = (0..n_obs).map(|o| row[base + o]).sum();
                        if (s - row[j]).abs() > SUM_TOL {
                            violations.push(Violation {
                                row: row_name.clone(),
                                column: format!(
                                    "{} extended by {}",
                                    self.alphabet.render(&self.col_tests[j]),
                                    self.alphabet.actions()[a]
                                ),
                                property: Property::Consistency,
                                value: s,
                                expected: row[j],
                            });
                        }
                    }
                }
            }
        }
        ValidityReport { violations }
    }

    /// CSV with columns `history`, `p(h)`, then one per test. Numbers are
    /// written with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("history,p(h)");
        for t in &self.col_tests {
            out.push(',');
            out.push_str(&self.alphabet.render(t));
        }
        out.push('\n');
        for (i, h) in self.row_histories.iter().enumerate() {
            out.push_str(&self.alphabet.render(h));
            out.push(',');
            out.push_str(&format_significant(self.history_probs[i], 12));
            for v in self.entries.row(i).iter() {
                out.push(',');
                out.push_str(&format_significant(*v, 12));
            }
            out.push('\n');
        }
        out
    }

    /// Reads a matrix written by [`SysDynMatrix::to_csv`]. The columns must
    /// be every test up to some depth, in order.
    pub fn from_csv(text: &str, alphabet: &Alphabet) -> Result<SysDynMatrix> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::schema("csv", "empty file"))?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() < 3 || fields[0] != "history" || fields[1] != "p(h)" {
            return Err(Error::schema("csv:1", "header must start with history,p(h)"));
        }
        let col_tests = fields[2..]
            .iter()
            .map(|f| alphabet.parse(f))
            .collect::<Result<Vec<_>>>()?;
        let test_depth = col_tests.last().map(Test::len).unwrap_or(0);
        if test_depth == 0 || col_tests != enumerate_sequences(alphabet, test_depth, false) {
            return Err(Error::schema(
                "csv:1",
                "columns must list every test up to the deepest length, in length-lex order",
            ));
        }
        let mut row_histories = Vec::new();
        let mut history_probs = Vec::new();
        let mut values = Vec::new();
        for (n, line) in lines.enumerate() {
            let path = format!("csv:{}", n + 2);
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != fields.len() {
                return Err(Error::schema(&path, format!("expected {} cells, found {}", fields.len(), cells.len())));
            }
            let h = alphabet.parse(cells[0])?;
            if row_histories.last().is_some_and(|prev| prev >= &h) {
                return Err(Error::schema(&path, "histories must be strictly increasing in length-lex order"));
            }
            row_histories.push(h);
            let mut nums = cells[1..].iter().map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::schema(&path, format!("not a number: {c:?}")))
            });
            history_probs.push(nums.next().expect("at least one cell")?);
            for v in nums {
                values.push(v?);
            }
        }
        if row_histories.is_empty() {
            return Err(Error::schema("csv", "no rows"));
        }
        let cols = col_tests.len();
        let entries = DMatrix::from_row_slice(row_histories.len(), cols, &values);
        Ok(SysDynMatrix {
            alphabet: alphabet.clone(),
            hist_depth: row_histories.iter().map(History::len).max().unwrap_or(0),
            test_depth,
            row_histories,
            col_tests,
            history_probs,
            entries,
        })
    }
}

fn decode_actions(mut idx: usize, n_actions: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = idx % n_actions;
        idx /= n_actions;
    }
    out
}

/// Formats like C's `%.{digits}g`: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros removed.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    /// Entry outside [0, 1].
    Range,
    /// Predictions over one action sequence do not sum to 1.
    Normalization,
    /// A test's prediction differs from the sum over its one-step extensions.
    Consistency,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Property::Range => "range",
            Property::Normalization => "normalization",
            Property::Consistency => "consistency",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub row: String,
    pub column: String,
    pub property: Property,
    pub value: f64,
    pub expected: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violated at history {}, column {}: got {}, expected {}",
            self.property, self.row, self.column, self.value, self.expected
        )
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Result of deepening a matrix until its rank stops growing.
#[derive(Debug, Clone)]
pub struct Plateau {
    pub rank: usize,
    /// Whether two consecutive depth settings gave the same rank.
    pub plateaued: bool,
    /// (hist_depth, test_depth, rows, cols, rank) for every matrix built.
    pub schedule: Vec<(usize, usize, usize, usize, usize)>,
    /// The deepest matrix built, if any fit the budget.
    pub matrix: Option<SysDynMatrix>,
}

/// Starting at the given depths, raises both by one until the rank is the
/// same at two consecutive settings, or the next matrix would exceed
/// `budget` entries.
pub fn rank_plateau<M: DynamicalModel>(
    model: &M,
    hist_depth: usize,
    test_depth: usize,
    budget: usize,
    tol: f64,
) -> Plateau {
    let mut schedule = Vec::new();
    let mut matrix = None;
    let mut previous = None;
    let (mut h, mut t) = (hist_depth, test_depth);
    loop {
        let Some(m) = build_within(model, h, t, budget) else {
            return Plateau {
                rank: previous.unwrap_or(0),
                plateaued: false,
                schedule,
                matrix,
            };
        };
        let rank = m.numerical_rank_with_tol(tol);
        schedule.push((h, t, m.nrows(), m.ncols(), rank));
        matrix = Some(m);
        if previous == Some(rank) {
            return Plateau {
                rank,
                plateaued: true,
                schedule,
                matrix,
            };
        }
        previous = Some(rank);
        h += 1;
        t += 1;
    }
}

/// A set of equal-length tests predicted jointly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnionTest {
    members: Vec<Test>,
    action_sequence: Option<Vec<usize>>,
}

impl UnionTest {
    /// With `shared_actions` set, every member must also share one action
    /// sequence.
    pub fn new(members: Vec<Test>, shared_actions: bool) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::schema("members", "a union-test needs at least one member"))?;
        let len = first.len();
        let actions = first.action_sequence();
        for (i, t) in members.iter().enumerate() {
            if t.len() != len {
                return Err(Error::schema(format!("members[{i}]"), "members must have equal length"));
            }
            if members[..i].contains(t) {
                return Err(Error::schema(format!("members[{i}]"), "duplicate member"));
            }
            if shared_actions && t.action_sequence() != actions {
                return Err(Error::schema(format!("members[{i}]"), "members must share one action sequence"));
            }
        }
        Ok(UnionTest {
            action_sequence: shared_actions.then_some(actions),
            members,
        })
    }

    pub fn members(&self) -> &[Test] {
        &self.members
    }

    pub fn action_sequence(&self) -> Option<&[usize]> {
        self.action_sequence.as_deref()
    }
}

/// Sum of the members' predictions.
pub fn union_prediction<M: DynamicalModel>(model: &M, union: &UnionTest) -> f64 {
    union.members.iter().map(|t| model.predict(t)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;

    #[test]
    fn float_reset_shallow_shape() {
        let m = build_matrix(&examples::float_reset(), 1, 1);
        let rows: Vec<String> = m.row_histories().iter().map(|h| m.alphabet().render(h)).collect();
        // f1 never happens and a reset from the start state always sees 1
        assert_eq!(rows, ["eps", "f0", "r1"]);
        assert_eq!(m.ncols(), 4);
        assert_eq!(m.history_probs(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn trivial_system_is_all_ones() {
        let al = Alphabet::new(["a"], ["o"]).unwrap();
        let model = crate::models::PomdpModel::new(
            al,
            vec![DMatrix::identity(1, 1)],
            vec![vec![nalgebra::DVector::from_element(1, 1.0)]],
            nalgebra::DVector::from_element(1, 1.0),
        )
        .unwrap();
        let m = build_matrix(&model, 3, 3);
        assert!(m.entries().iter().all(|&x| x == 1.0));
        assert_eq!(m.numerical_rank(), 1);
    }

    #[test]
    fn phi_row_holds_float_reset_predictions() {
        let m = build_matrix(&examples::float_reset(), 1, 5);
        let al = m.alphabet().clone();
        let expected = [("r1", 1.0), ("f0.r1", 0.5), ("f0.f0.r1", 0.5), ("f0.f0.f0.r1", 0.375), ("f0.f0.f0.f0.r1", 0.375)];
        for (t, p) in expected {
            assert_eq!(m.entry(&History::empty(), &al.parse(t).unwrap()), Some(p));
        }
    }

    #[test]
    fn corrupted_entry_is_localized() {
        let mut m = build_matrix(&examples::float_reset(), 2, 2);
        let al = m.alphabet().clone();
        let row = m.row_of(&al.parse("f0").unwrap()).unwrap();
        let col = m.column_of(&al.parse("r1").unwrap()).unwrap();
        m.entries[(row, col)] += 0.1;
        let report = m.check_validity();
        assert!(!report.is_valid());
        assert!(report.violations.iter().all(|v| v.row == "f0"));
        assert!(report
            .violations
            .iter()
            .any(|v| v.property == Property::Normalization && v.column == "r"));
        assert!(report
            .violations
            .iter()
            .any(|v| v.property == Property::Consistency && v.column == "r1 extended by f"));
    }

    #[test]
    fn range_violation_reported() {
        let mut m = build_matrix(&examples::float_reset(), 1, 1);
        m.entries[(0, 0)] = 1.5;
        let report = m.check_validity();
        assert!(report
            .violations
            .iter()
            .any(|v| v.property == Property::Range && v.row == "eps" && v.column == "f0"));
    }

    #[test]
    fn float_reset_phi_row_normalizes() {
        let m = build_matrix(&examples::float_reset(), 1, 1);
        let al = m.alphabet().clone();
        let e = |t: &str| m.entry(&History::empty(), &al.parse(t).unwrap()).unwrap();
        assert_eq!(e("f0") + e("f1"), 1.0);
        assert_eq!(e("r0") + e("r1"), 1.0);
    }

    #[test]
    fn union_predictions() {
        let model = examples::float_reset();
        let al = model.alphabet().clone();
        let all_f = UnionTest::new(vec![al.parse("f0").unwrap(), al.parse("f1").unwrap()], true).unwrap();
        assert_eq!(union_prediction(&model, &all_f), 1.0);
        let r1 = UnionTest::new(vec![al.parse("r1").unwrap()], true).unwrap();
        assert_eq!(union_prediction(&model, &r1), 1.0);

        let tests = enumerate_sequences(&al, 2, false);
        let over_fr: Vec<Test> = tests.into_iter().filter(|t| t.len() == 2 && t.action_sequence() == [0, 1]).collect();
        let (left, right) = over_fr.split_at(1);
        let a = UnionTest::new(left.to_vec(), true).unwrap();
        let b = UnionTest::new(right.to_vec(), true).unwrap();
        assert!((union_prediction(&model, &a) + union_prediction(&model, &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn union_rejects_mixed_members() {
        let al = Alphabet::new(["f", "r"], ["0", "1"]).unwrap();
        let mixed_len = vec![al.parse("f0").unwrap(), al.parse("f0.r1").unwrap()];
        assert!(UnionTest::new(mixed_len, false).is_err());
        let mixed_actions = vec![al.parse("f0").unwrap(), al.parse("r1").unwrap()];
        assert!(UnionTest::new(mixed_actions.clone(), true).is_err());
        assert!(UnionTest::new(mixed_actions, false).is_ok());
        assert!(UnionTest::new(vec![], false).is_err());
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.375, 12), "0.375");
        assert_eq!(format_significant(1.0, 12), "1");
        assert_eq!(format_significant(1.0 / 3.0, 12), "0.333333333333");
        assert_eq!(format_significant(2.0 / 3.0 * 1e-7, 12), "6.66666666667e-8");
        assert_eq!(format_significant(-0.0625, 12), "-0.0625");
        assert_eq!(format_significant(0.0, 12), "0");
    }

    #[test]
    fn csv_round_trip() {
        let m = build_matrix(&examples::fig6_system(), 2, 2);
        let text = m.to_csv();
        let back = SysDynMatrix::from_csv(&text, m.alphabet()).unwrap();
        assert_eq!(back.row_histories(), m.row_histories());
        assert_eq!(back.test_depth(), 2);
        assert!((back.entries() - m.entries()).abs().max() < 1e-12);
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn plateau_on_float_reset() {
        let p = rank_plateau(&examples::float_reset(), 1, 1, DEFAULT_ENTRY_BUDGET, RANK_TOL);
        assert!(p.plateaued);
        assert_eq!(p.rank, 5);
        let ranks: Vec<usize> = p.schedule.iter().map(|s| s.4).collect();
        assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn plateau_reports_budget_exhaustion() {
        let p = rank_plateau(&examples::float_reset(), 1, 1, 50, RANK_TOL);
        assert!(!p.plateaued);
    }
}
