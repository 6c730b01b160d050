//! Bundled systems, their demonstration checks, and random model generators.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{DynamicalModel, MarkovModel, PomdpModel};
use crate::sequence::{enumerate_action_sequences, enumerate_sequences, Alphabet, Test};

const EXACT_TOL: f64 = 1e-12;

/// A named bundled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleSpec {
    FloatReset,
    RotateRegister(usize),
    Fig6,
}

impl ExampleSpec {
    pub fn build(self) -> Result<PomdpModel> {
        match self {
            ExampleSpec::FloatReset => Ok(float_reset()),
            ExampleSpec::RotateRegister(k) => rotate_register(k),
            ExampleSpec::Fig6 => Ok(fig6_system()),
        }
    }
}

impl FromStr for ExampleSpec {
    type Err = Error;

    /// `float-reset`, `fig6`, `rotate-register` (k = 2) or `rotate-register:K`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "float-reset" => return Ok(ExampleSpec::FloatReset),
            "fig6" => return Ok(ExampleSpec::Fig6),
            "rotate-register" => return Ok(ExampleSpec::RotateRegister(2)),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("rotate-register:") {
            let k: usize = k
                .parse()
                .map_err(|_| Error::schema("example", format!("bad register width {k:?}")))?;
            check_register_width(k)?;
            return Ok(ExampleSpec::RotateRegister(k));
        }
        Err(Error::schema(
            "example",
            format!("unknown example {s:?}; expected float-reset, rotate-register[:K] or fig6"),
        ))
    }
}

impl fmt::Display for ExampleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExampleSpec::FloatReset => f.write_str("float-reset"),
            ExampleSpec::RotateRegister(k) => write!(f, "rotate-register:{k}"),
            ExampleSpec::Fig6 => f.write_str("fig6"),
        }
    }
}

/// Five chain states s1..s5, starting at the far right s5. `f` moves to a
/// neighbour with probability 0.5 each way (at an end: stay or move
/// inward) and always shows 0; `r` jumps to s5 and shows 1 only when it
/// was already there.
pub fn float_reset() -> PomdpModel {
    let alphabet = Alphabet::new(["f", "r"], ["0", "1"]).expect("valid alphabet");
    let mut float = DMatrix::zeros(5, 5);
    for i in 0..5 {
        let left = if i == 0 { 0 } else { i - 1 };
        let right = if i == 4 { 4 } else { i + 1 };
        float[(i, left)] += 0.5;
        float[(i, right)] += 0.5;
    }
    let mut reset0 = DMatrix::zeros(5, 5);
    for i in 0..4 {
        reset0[(i, 4)] = 1.0;
    }
    let mut reset1 = DMatrix::zeros(5, 5);
    reset1[(4, 4)] = 1.0;
    let mut b0 = DVector::zeros(5);
    b0[4] = 1.0;
    PomdpModel::from_operators(
        alphabet,
        vec![vec![float, DMatrix::zeros(5, 5)], vec![reset0, reset1]],
        b0,
    )
    .expect("float-reset is well formed")
}

/// r1, f0.r1, f0.f0.r1, f0.f0.f0.r1, f0.f0.f0.f0.r1.
pub fn float_reset_core_tests() -> Vec<Test> {
    let alphabet = float_reset().alphabet().clone();
    (0..5)
        .map(|n| {
            let mut s = "f0.".repeat(n);
            s.push_str("r1");
            alphabet.parse(&s).expect("valid test")
        })
        .collect()
}

fn check_register_width(k: usize) -> Result<()> {
    if (1..=10).contains(&k) {
        Ok(())
    } else {
        Err(Error::schema("k", format!("register width must be between 1 and 10, got {k}")))
    }
}

/// A k-bit register whose far-left bit (the most significant) is the only
/// visible one. `rotl` and `rotr` rotate, `flip` toggles the visible bit;
/// every action shows the visible bit after it acts. Starts at all zeros.
pub fn rotate_register(k: usize) -> Result<PomdpModel> {
    check_register_width(k)?;
    let alphabet = Alphabet::new(["rotl", "rotr", "flip"], ["0", "1"]).expect("valid alphabet");
    let n = 1usize << k;
    let mask = n - 1;
    let top = k - 1;
    let moves: [Box<dyn Fn(usize) -> usize>; 3] = [
        Box::new(move |s| ((s << 1) | (s >> top)) & mask),
        Box::new(move |s| (s >> 1) | ((s & 1) << top)),
        Box::new(move |s| s ^ (1 << top)),
    ];
    let transitions = moves
        .iter()
        .map(|f| DMatrix::from_fn(n, n, |i, j| if f(i) == j { 1.0 } else { 0.0 }))
        .collect();
    let visible = |s: usize, o: usize| if (s >> top) & 1 == o { 1.0 } else { 0.0 };
    let diagonals = (0..3)
        .map(|_| (0..2).map(|o| DVector::from_fn(n, |s, _| visible(s, o))).collect())
        .collect();
    let mut b0 = DVector::zeros(n);
    b0[0] = 1.0;
    PomdpModel::new(alphabet, transitions, diagonals, b0)
}

/// Four states s0..s3 starting in s0. From s0 either action moves to s1,
/// s2 or s3 with probability 1/3, showing o1, o2 or o3 on arrival. From
/// any other state both actions return to s0; `a` shows o4 when leaving
/// s1, `b` when leaving s2, and o0 otherwise.
pub fn fig6_system() -> PomdpModel {
    let alphabet = Alphabet::new(["a", "b"], ["o0", "o1", "o2", "o3", "o4"]).expect("valid alphabet");
    let ops = (0..2)
        .map(|a| {
            (0..5)
                .map(|o| {
                    let mut m = DMatrix::zeros(4, 4);
                    if (1..=3).contains(&o) {
                        m[(0, o)] = 1.0 / 3.0;
                    }
                    let marked = a + 1;
                    for i in 1..4 {
                        let shown = if i == marked { 4 } else { 0 };
                        if shown == o {
                            m[(i, 0)] = 1.0;
                        }
                    }
                    m
                })
                .collect()
        })
        .collect();
    let mut b0 = DVector::zeros(4);
    b0[0] = 1.0;
    PomdpModel::from_operators(alphabet, ops, b0).expect("fig6 system is well formed")
}

fn indicator(k: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(k);
    v[i] = 1.0;
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfoundEntry {
    pub actions: String,
    /// States whose predictions agree on every test over `actions`.
    pub pair: Option<(String, String)>,
    /// A test on which the pair differs.
    pub witness: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfoundReport {
    pub pass: bool,
    pub max_len: usize,
    /// Largest |p(t|s2) - p(t|s3)| over tests starting with `a`.
    pub a_deviation_s2_s3: f64,
    /// Largest |p(t|s1) - p(t|s3)| over tests starting with `b`.
    pub b_deviation_s1_s3: f64,
    pub entries: Vec<ConfoundEntry>,
}

/// Checks that no fixed action sequence of length `<= max_len` separates
/// all of s1, s2, s3 on the fig6 system.
pub fn fig6_confound_check(max_len: usize) -> ConfoundReport {
    assert!((1..=4).contains(&max_len), "max_len must be between 1 and 4");
    let model = fig6_system();
    let al = model.alphabet().clone();
    let tests = enumerate_sequences(&al, max_len, false);
    let beliefs: Vec<DVector<f64>> = (0..4).map(|i| indicator(4, i)).collect();
    let preds: Vec<Vec<f64>> = beliefs
        .iter()
        .map(|b| tests.iter().map(|t| model.predict_from(b, t)).collect())
        .collect();

    let deviation = |first: usize, s: usize, r: usize| {
        tests
            .iter()
            .enumerate()
            .filter(|(_, t)| t.steps()[0].action == first)
            .map(|(j, _)| (preds[s][j] - preds[r][j]).abs())
            .fold(0.0, f64::max)
    };
    let a_dev = deviation(0, 2, 3);
    let b_dev = deviation(1, 1, 3);

    let pairs = [(1, 2), (1, 3), (2, 3)];
    let mut entries = Vec::new();
    for len in 1..=max_len {
        for actions in enumerate_action_sequences(al.num_actions(), len) {
            let over: Vec<usize> = (0..tests.len())
                .filter(|&j| tests[j].action_sequence() == actions)
                .collect();
            let mut entry = ConfoundEntry {
                actions: al.render_actions(&actions),
                pair: None,
                witness: None,
            };
            for &(s, r) in &pairs {
                if over.iter().any(|&j| (preds[s][j] - preds[r][j]).abs() > EXACT_TOL) {
                    continue;
                }
                if let Some(j) = witness(&preds[s], &preds[r]) {
                    entry.pair = Some((format!("s{s}"), format!("s{r}")));
                    entry.witness = Some(al.render(&tests[j]));
                    break;
                }
            }
            entries.push(entry);
        }
    }
    ConfoundReport {
        pass: a_dev <= EXACT_TOL && b_dev <= EXACT_TOL && entries.iter().all(|e| e.pair.is_some()),
        max_len,
        a_deviation_s2_s3: a_dev,
        b_deviation_s1_s3: b_dev,
        entries,
    }
}

/// Test maximizing p(t|first) - p(t|second), earliest on ties; falls back
/// to the largest absolute difference. `None` if the states agree.
fn witness(first: &[f64], second: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, (x, y)) in first.iter().zip(second).enumerate() {
        let d = x - y;
        if best.is_none_or(|(_, b)| d > b) {
            best = Some((j, d));
        }
    }
    if let Some((j, d)) = best {
        if d > EXACT_TOL {
            return Some(j);
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (j, (x, y)) in first.iter().zip(second).enumerate() {
        let d = (x - y).abs();
        if best.is_none_or(|(_, b)| d > b) {
            best = Some((j, d));
        }
    }
    best.filter(|&(_, d)| d > EXACT_TOL).map(|(j, _)| j)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub pass: bool,
    /// p(r1|h) after 0, 1, ..., steps floats.
    pub reset_one: Vec<f64>,
    /// p(f0.r1|h) after 0, 1, ..., steps floats.
    pub float_then_reset_one: Vec<f64>,
    pub pairs_repeat: bool,
    pub pairs_decrease: bool,
    pub pairs_distinct: bool,
}

/// Floats `steps` times from the start of float-reset, recording p(r1|h)
/// and p(f0.r1|h) after each step.
pub fn float_reset_series_check(steps: usize) -> Result<SeriesReport> {
    if steps < 6 {
        return Err(Error::schema("steps", "need at least 6 steps"));
    }
    let mut model = float_reset();
    let r1 = model.alphabet().parse("r1")?;
    let f0r1 = model.alphabet().parse("f0.r1")?;
    let mut v = vec![model.predict_raw(&r1)];
    let mut w = vec![model.predict_raw(&f0r1)];
    for _ in 0..steps {
        model.update(0, 0)?;
        v.push(model.predict_raw(&r1));
        w.push(model.predict_raw(&f0r1));
    }
    // v[1] = v[2], v[3] = v[4], ...
    let pairs_repeat = (1..v.len() - 1).step_by(2).all(|i| v[i] == v[i + 1]);
    let pairs_decrease = v[0] > v[1] && (1..v.len()).step_by(2).collect::<Vec<_>>().windows(2).all(|p| v[p[0]] > v[p[1]]);
    let mut pairs_distinct = true;
    for i in 0..v.len() {
        for j in 0..i {
            if (v[i] - v[j]).abs() <= EXACT_TOL && (w[i] - w[j]).abs() <= EXACT_TOL {
                pairs_distinct = false;
            }
        }
    }
    Ok(SeriesReport {
        pass: pairs_repeat && pairs_decrease && pairs_distinct,
        reset_one: v,
        float_then_reset_one: w,
        pairs_repeat,
        pairs_decrease,
        pairs_distinct,
    })
}

fn random_alphabet(num_actions: usize, num_observations: usize) -> Alphabet {
    Alphabet::new(
        (0..num_actions).map(|a| format!("a{a}")),
        (0..num_observations).map(|o| format!("o{o}")),
    )
    .expect("valid alphabet")
}

/// A flat-Dirichlet draw whose entries sum to 1 exactly.
fn dirichlet(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    let mut p: Vec<f64> = draws.iter().map(|x| x / total).collect();
    let head: f64 = p[..n - 1].iter().sum();
    p[n - 1] = (1.0 - head).max(0.0);
    p
}

/// A random POMDP with `k` states: Dirichlet transition rows, Dirichlet
/// observation distributions per (action, arrival state), random start.
pub fn random_pomdp(k: usize, num_actions: usize, num_observations: usize, seed: u64) -> PomdpModel {
    assert!((1..=12).contains(&k), "k must be between 1 and 12");
    assert!(num_actions >= 1 && num_observations >= 1 && num_actions * num_observations <= 9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let transitions = (0..num_actions)
        .map(|_| {
            let rows: Vec<Vec<f64>> = (0..k).map(|_| dirichlet(&mut rng, k)).collect();
            DMatrix::from_fn(k, k, |i, j| rows[i][j])
        })
        .collect();
    let diagonals = (0..num_actions)
        .map(|_| {
            let per_state: Vec<Vec<f64>> = (0..k).map(|_| dirichlet(&mut rng, num_observations)).collect();
            (0..num_observations)
                .map(|o| DVector::from_fn(k, |s, _| per_state[s][o]))
                .collect()
        })
        .collect();
    let b0 = DVector::from_vec(dirichlet(&mut rng, k));
    PomdpModel::new(random_alphabet(num_actions, num_observations), transitions, diagonals, b0)
        .expect("random POMDP is well formed")
}

/// A random order-`n` Markov model with Dirichlet rows over the visible
/// suffix states.
pub fn random_markov(n: usize, num_actions: usize, num_observations: usize, seed: u64) -> MarkovModel {
    assert!((1..=2).contains(&n), "order must be 1 or 2");
    assert!(num_actions >= 1 && num_observations >= 1 && num_actions * num_observations <= 9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (num_actions * num_observations).pow(n as u32);
    let tables = (0..num_actions)
        .map(|_| {
            let dist: Vec<Vec<f64>> = (0..rows).map(|_| dirichlet(&mut rng, num_observations)).collect();
            DMatrix::from_fn(rows, num_observations, |i, o| dist[i][o])
        })
        .collect();
    MarkovModel::new(random_alphabet(num_actions, num_observations), n, tables)
        .expect("random Markov model is well formed")
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeSet, VecDeque};

    use super::*;
    use crate::models::TAU_ZERO;

    #[test]
    fn float_reset_pinned_predictions() {
        let m = float_reset();
        let p: Vec<f64> = float_reset_core_tests().iter().map(|t| m.predict(t)).collect();
        assert_eq!(p, [1.0, 0.5, 0.5, 0.375, 0.375]);
        let al = m.alphabet();
        assert_eq!(m.predict(&al.parse("f1").unwrap()), 0.0);
        assert_eq!(m.predict(&al.parse("r1.r1").unwrap()), 1.0);
    }

    #[test]
    fn rotate_register_basics() {
        let m = rotate_register(3).unwrap();
        let al = m.alphabet();
        assert_eq!(m.predict(&al.parse("flip1").unwrap()), 1.0);
        assert_eq!(m.predict(&al.parse("rotl0").unwrap()), 1.0);
        assert_eq!(m.predict(&al.parse("flip1.rotl0.rotr1").unwrap()), 1.0);
        assert!(rotate_register(0).is_err());
        assert!(rotate_register(11).is_err());
    }

    #[test]
    fn rotate_register_reachability() {
        for k in 1..=3 {
            let m = rotate_register(k).unwrap();
            let n = 1usize << k;
            let mut seen = BTreeSet::from([0usize]);
            let mut queue = VecDeque::from([(0usize, 0usize)]);
            while let Some((s, d)) = queue.pop_front() {
                assert!(d <= n);
                for a in 0..3 {
                    let t = m.transition(a);
                    let next = (0..n).find(|&j| t[(s, j)] == 1.0).unwrap();
                    if seen.insert(next) {
                        queue.push_back((next, d + 1));
                    }
                }
            }
            assert_eq!(seen.len(), n);
        }
    }

    #[test]
    fn fig6_predictions() {
        let m = fig6_system();
        let al = m.alphabet();
        assert!((m.predict(&al.parse("ao1").unwrap()) - 1.0 / 3.0).abs() < 1e-15);
        let ao4 = al.parse("ao4").unwrap();
        assert_eq!(m.predict_from(&indicator(4, 1), &ao4), 1.0);
        assert_eq!(m.predict_from(&indicator(4, 2), &ao4), 0.0);
        assert_eq!(m.predict_from(&indicator(4, 3), &ao4), 0.0);
    }

    #[test]
    fn fig6_single_action_witnesses() {
        let r = fig6_confound_check(2);
        assert!(r.pass);
        let by = |a: &str| r.entries.iter().find(|e| e.actions == a).unwrap();
        assert_eq!(by("a").pair, Some(("s2".into(), "s3".into())));
        assert_eq!(by("a").witness.as_deref(), Some("bo4"));
        assert_eq!(by("b").pair, Some(("s1".into(), "s3".into())));
        assert_eq!(by("b").witness.as_deref(), Some("ao4"));
    }

    #[test]
    fn series_prefix_and_shape() {
        let r = float_reset_series_check(20).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(&r.reset_one[..5], &[1.0, 0.5, 0.5, 0.375, 0.375]);
        assert!(float_reset_series_check(5).is_err());
    }

    #[test]
    fn random_models_are_deterministic() {
        let a = random_pomdp(4, 2, 3, 7);
        let b = random_pomdp(4, 2, 3, 7);
        let t = enumerate_sequences(a.alphabet(), 3, false);
        for x in &t {
            assert_eq!(a.predict_raw(x), b.predict_raw(x));
        }
        let c = random_markov(2, 2, 2, 7);
        let d = random_markov(2, 2, 2, 7);
        assert_eq!(c.predict_all(3), d.predict_all(3));
        assert_ne!(random_pomdp(4, 2, 3, 8).predict_all(2), a.predict_all(2));
    }

    #[test]
    fn random_models_have_positive_mass() {
        let m = random_pomdp(6, 3, 3, 1);
        assert!(m.predict_all(1).iter().any(|&p| p > TAU_ZERO));
    }

    #[test]
    fn example_names_round_trip() {
        for name in ["float-reset", "fig6", "rotate-register:3"] {
            let spec: ExampleSpec = name.parse().unwrap();
            assert_eq!(spec.to_string(), name);
        }
        assert_eq!("rotate-register".parse::<ExampleSpec>().unwrap(), ExampleSpec::RotateRegister(2));
        assert!("rotate-register:0".parse::<ExampleSpec>().is_err());
        assert!("nope".parse::<ExampleSpec>().is_err());
    }
}
