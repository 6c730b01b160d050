//! Alphabets, action-observation sequences and their canonical ordering.
//!
//! Tests (futures) and histories (pasts) share one representation. Symbols
//! are stored as indices into the governing [`Alphabet`], so the derived
//! ordering on [`Step`] is action-major, observation-minor in declaration
//! order, and [`Sequence`] orders by length first, then lexicographically.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Rendering of the empty sequence.
pub const EMPTY_TOKEN: &str = "eps";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    actions: Vec<String>,
    observations: Vec<String>,
}

impl Alphabet {
    pub fn new<A, O>(actions: A, observations: O) -> Result<Self>
    where
        A: IntoIterator,
        A::Item: Into<String>,
        O: IntoIterator,
        O::Item: Into<String>,
    {
        let actions: Vec<String> = actions.into_iter().map(Into::into).collect();
        let observations: Vec<String> = observations.into_iter().map(Into::into).collect();
        check_symbols("actions", &actions)?;
        check_symbols("observations", &observations)?;
        Ok(Alphabet {
            actions,
            observations,
        })
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn observations(&self) -> &[String] {
        &self.observations
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }

    /// |A||O|, the branching factor of the sequence tree.
    pub fn num_steps(&self) -> usize {
        self.actions.len() * self.observations.len()
    }

    pub fn action_index(&self, symbol: &str) -> Option<usize> {
        self.actions.iter().position(|s| s == symbol)
    }

    pub fn observation_index(&self, symbol: &str) -> Option<usize> {
        self.observations.iter().position(|s| s == symbol)
    }

    /// Every step in canonical order.
    pub fn steps(&self) -> impl Iterator<Item = Step> + '_ {
        let n_obs = self.observations.len();
        (0..self.num_steps()).map(move |i| Step::new(i / n_obs, i % n_obs))
    }

    /// Position of `step` among [`Alphabet::steps`].
    pub fn step_index(&self, step: Step) -> usize {
        step.action * self.observations.len() + step.observation
    }

    pub fn step_from_index(&self, index: usize) -> Step {
        let n_obs = self.observations.len();
        Step::new(index / n_obs, index % n_obs)
    }

    pub fn render_step(&self, step: Step) -> String {
        format!(
            "{}{}",
            self.actions[step.action], self.observations[step.observation]
        )
    }

    /// Renders steps joined by `.`; the empty sequence renders as `eps`.
    pub fn render(&self, seq: &Sequence) -> String {
        if seq.is_empty() {
            return EMPTY_TOKEN.to_string();
        }
        seq.steps()
            .iter()
            .map(|&s| self.render_step(s))
            .collect::<Vec<_>>()
            .join(".")
    }

    pub fn render_actions(&self, actions: &[usize]) -> String {
        if actions.is_empty() {
            return EMPTY_TOKEN.to_string();
        }
        actions
            .iter()
            .map(|&a| self.actions[a].as_str())
            .collect::<Vec<_>>()
            .join(".")
    }

    /// Parses a rendered sequence. Steps may be separated by `.` or written
    /// back to back (`f0f0r1`); a run of steps must tokenize uniquely.
    pub fn parse(&self, input: &str) -> Result<Sequence> {
        let trimmed = input.trim();
        if trimmed.is_empty() || trimmed == EMPTY_TOKEN {
            return Ok(Sequence::empty());
        }
        let mut steps = Vec::new();
        for piece in trimmed.split('.') {
            if piece.is_empty() {
                return Err(parse_error(input, "empty step between separators"));
            }
            steps.extend(self.tokenize(input, piece)?);
        }
        Ok(Sequence::from_steps(steps))
    }

    /// Counts parses of every suffix of `piece` and rebuilds the unique one.
    fn tokenize(&self, input: &str, piece: &str) -> Result<Vec<Step>> {
        let n = piece.len();
        // ways[i]: number of tokenizations of piece[i..], saturating at 2
        let mut ways = vec![0u8; n + 1];
        let mut choice: Vec<Option<(Step, usize)>> = vec![None; n + 1];
        ways[n] = 1;
        for i in (0..n).rev() {
            if !piece.is_char_boundary(i) {
                continue;
            }
            for step in self.steps() {
                let a = &self.actions[step.action];
                let o = &self.observations[step.observation];
                let rest = &piece[i..];
                if rest.starts_with(a.as_str()) && rest[a.len()..].starts_with(o.as_str()) {
                    let next = i + a.len() + o.len();
                    if ways[next] > 0 {
                        ways[i] = (ways[i] + ways[next]).min(2);
                        choice[i] = Some((step, next));
                    }
                }
            }
        }
        match ways[0] {
            0 => Err(parse_error(
                input,
                &format!("{piece:?} is not a sequence of action-observation pairs"),
            )),
            1 => {
                let mut out = Vec::new();
                let mut i = 0;
                while i < n {
                    let (step, next) = choice[i].expect("unique parse has a choice at every cut");
                    out.push(step);
                    i = next;
                }
                Ok(out)
            }
            _ => Err(parse_error(
                input,
                &format!("{piece:?} tokenizes in more than one way; separate steps with '.'"),
            )),
        }
    }
}

fn parse_error(input: &str, message: &str) -> Error {
    Error::Parse {
        input: input.to_string(),
        message: message.to_string(),
    }
}

fn check_symbols(field: &str, symbols: &[String]) -> Result<()> {
    if symbols.is_empty() {
        return Err(Error::schema(field, "must not be empty"));
    }
    for (i, s) in symbols.iter().enumerate() {
        if s.is_empty() || s.contains('.') || s.chars().any(char::is_whitespace) {
            return Err(Error::schema(
                format!("{field}[{i}]"),
                "symbols must be non-empty and contain no '.' or whitespace",
            ));
        }
        if symbols[..i].contains(s) {
            return Err(Error::schema(
                format!("{field}[{i}]"),
                format!("duplicate symbol {s:?}"),
            ));
        }
    }
    Ok(())
}

/// One action-observation pair, as indices into an [`Alphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Step {
    pub action: usize,
    pub observation: usize,
}

impl Step {
    pub const fn new(action: usize, observation: usize) -> Self {
        Step {
            action,
            observation,
        }
    }
}

/// A finite action-observation sequence. Ordered by length, then
/// lexicographically by step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Sequence(Vec<Step>);

/// A sequence read as a future experiment.
pub type Test = Sequence;
/// A sequence read as something that already happened.
pub type History = Sequence;

impl Sequence {
    pub fn empty() -> Self {
        Sequence(Vec::new())
    }

    pub fn from_steps(steps: Vec<Step>) -> Self {
        Sequence(steps)
    }

    pub fn single(action: usize, observation: usize) -> Self {
        Sequence(vec![Step::new(action, observation)])
    }

    pub fn steps(&self) -> &[Step] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Projection onto actions.
    pub fn action_sequence(&self) -> Vec<usize> {
        self.0.iter().map(|s| s.action).collect()
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Sequence) -> Sequence {
        let mut steps = Vec::with_capacity(self.len() + other.len());
        steps.extend_from_slice(&self.0);
        steps.extend_from_slice(&other.0);
        Sequence(steps)
    }

    /// `step` followed by `self`.
    pub fn prepend(&self, step: Step) -> Sequence {
        let mut steps = Vec::with_capacity(self.len() + 1);
        steps.push(step);
        steps.extend_from_slice(&self.0);
        Sequence(steps)
    }

    /// `self` followed by `step`.
    pub fn extend(&self, step: Step) -> Sequence {
        let mut steps = self.0.clone();
        steps.push(step);
        Sequence(steps)
    }

    /// Display adapter against an alphabet.
    pub fn display<'a>(&'a self, alphabet: &'a Alphabet) -> impl fmt::Display + 'a {
        struct D<'a>(&'a Sequence, &'a Alphabet);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.1.render(self.0))
            }
        }
        D(self, alphabet)
    }
}

impl Ord for Sequence {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Sequence {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<Vec<Step>> for Sequence {
    fn from(steps: Vec<Step>) -> Self {
        Sequence(steps)
    }
}

/// All sequences of length `<= max_len` in length-lex order, starting with
/// the empty sequence when `include_empty` is set.
pub fn enumerate_sequences(alphabet: &Alphabet, max_len: usize, include_empty: bool) -> Vec<Sequence> {
    let mut out = Vec::with_capacity(count_sequences(alphabet.num_steps(), max_len) + 1);
    if include_empty {
        out.push(Sequence::empty());
    }
    let mut level = vec![Sequence::empty()];
    for _ in 0..max_len {
        let next: Vec<Sequence> = level
            .iter()
            .flat_map(|prefix| alphabet.steps().map(move |s| prefix.extend(s)))
            .collect();
        out.extend(next.iter().cloned());
        level = next;
    }
    out
}

/// All action sequences of exactly `len` actions, in lex order.
pub fn enumerate_action_sequences(num_actions: usize, len: usize) -> Vec<Vec<usize>> {
    let mut level = vec![Vec::new()];
    for _ in 0..len {
        level = level
            .iter()
            .flat_map(|prefix: &Vec<usize>| {
                (0..num_actions).map(move |a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    level
}

/// Number of non-empty sequences of length `<= max_len` over `branching` steps.
pub fn count_sequences(branching: usize, max_len: usize) -> usize {
    let mut total = 0usize;
    let mut level = 1usize;
    for _ in 0..max_len {
        level = level.saturating_mul(branching);
        total = total.saturating_add(level);
    }
    total
}

/// Position of a non-empty sequence within `enumerate_sequences(_, _, false)`.
pub fn sequence_index(alphabet: &Alphabet, seq: &Sequence) -> usize {
    debug_assert!(!seq.is_empty());
    let branching = alphabet.num_steps();
    let offset = count_sequences(branching, seq.len() - 1);
    let rank = seq
        .steps()
        .iter()
        .fold(0usize, |acc, &s| acc * branching + alphabet.step_index(s));
    offset + rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_action() -> Alphabet {
        Alphabet::new(["a"], ["0", "1"]).unwrap()
    }

    fn float_reset() -> Alphabet {
        Alphabet::new(["f", "r"], ["0", "1"]).unwrap()
    }

    fn rendered(alphabet: &Alphabet, seqs: &[Sequence]) -> Vec<String> {
        seqs.iter().map(|s| alphabet.render(s)).collect()
    }

    #[test]
    fn enumerate_length_one() {
        let al = one_action();
        let seqs = enumerate_sequences(&al, 1, false);
        assert_eq!(rendered(&al, &seqs), ["a0", "a1"]);
    }

    #[test]
    fn enumerate_with_empty() {
        let al = float_reset();
        let seqs = enumerate_sequences(&al, 1, true);
        assert_eq!(rendered(&al, &seqs), ["eps", "f0", "f1", "r0", "r1"]);
    }

    #[test]
    fn enumerate_length_two() {
        let al = one_action();
        let seqs = enumerate_sequences(&al, 2, false);
        assert_eq!(seqs.len(), 6);
        assert_eq!(al.render(seqs.last().unwrap()), "a1.a1");
    }

    #[test]
    fn action_projection() {
        let al = float_reset();
        assert_eq!(al.parse("f0.r1").unwrap().action_sequence(), vec![0, 1]);
        assert!(Sequence::empty().action_sequence().is_empty());
        let al = one_action();
        assert_eq!(al.parse("a0a1a0").unwrap().action_sequence(), vec![0, 0, 0]);
    }

    #[test]
    fn concat_examples() {
        let al = float_reset();
        let r1 = al.parse("r1").unwrap();
        let f0 = al.parse("f0").unwrap();
        assert_eq!(Sequence::empty().concat(&r1), r1);
        assert_eq!(al.render(&f0.concat(&r1)), "f0.r1");
        assert_eq!(f0.concat(&Sequence::empty()), f0);
    }

    #[test]
    fn parse_dotted_and_packed_forms() {
        let al = float_reset();
        let packed = al.parse("f0f0r1").unwrap();
        let dotted = al.parse("f0.f0.r1").unwrap();
        assert_eq!(packed, dotted);
        assert_eq!(al.parse("eps").unwrap(), Sequence::empty());
        assert!(al.parse("f2").is_err());
        assert!(al.parse("f0..r1").is_err());
    }

    #[test]
    fn parse_multichar_symbols() {
        let al = Alphabet::new(["rotl", "rotr", "flip"], ["0", "1"]).unwrap();
        let s = al.parse("flip1.rotl0").unwrap();
        assert_eq!(s.steps(), &[Step::new(2, 1), Step::new(0, 0)]);
        assert_eq!(al.render(&s), "flip1.rotl0");
    }

    #[test]
    fn ambiguous_tokenization_rejected() {
        // "ab" + "c" vs "a" + "bc"
        let al = Alphabet::new(["a", "ab"], ["c", "bc"]).unwrap();
        assert!(matches!(al.parse("abc"), Err(Error::Parse { .. })));
    }

    #[test]
    fn alphabet_rejects_bad_symbols() {
        assert!(Alphabet::new(Vec::<String>::new(), ["0"]).is_err());
        assert!(Alphabet::new(["a", "a"], ["0"]).is_err());
        assert!(Alphabet::new(["a.b"], ["0"]).is_err());
    }

    #[test]
    fn index_matches_enumeration() {
        let al = Alphabet::new(["x", "y"], ["0", "1", "2"]).unwrap();
        for (i, s) in enumerate_sequences(&al, 3, false).iter().enumerate() {
            assert_eq!(sequence_index(&al, s), i);
        }
    }

    fn small_alphabet() -> impl Strategy<Value = Alphabet> {
        (1usize..=3, 1usize..=3).prop_map(|(na, no)| {
            Alphabet::new(
                (0..na).map(|i| format!("a{i}")),
                (0..no).map(|i| i.to_string()),
            )
            .unwrap()
        })
    }

    fn seq_in(al: &Alphabet, max_len: usize) -> impl Strategy<Value = Sequence> {
        let n = al.num_steps();
        let al = al.clone();
        prop::collection::vec(0..n, 0..=max_len)
            .prop_map(move |ix| Sequence::from_steps(ix.into_iter().map(|i| al.step_from_index(i)).collect()))
    }

    proptest! {
        #[test]
        fn enumeration_is_strictly_increasing((al, max_len) in (small_alphabet(), 0usize..=3)) {
            let seqs = enumerate_sequences(&al, max_len, true);
            prop_assert_eq!(seqs.len(), 1 + count_sequences(al.num_steps(), max_len));
            for w in seqs.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }

        #[test]
        fn concat_laws(
            (al, h, t, u) in small_alphabet().prop_flat_map(|al| {
                let a = seq_in(&al, 4);
                let b = seq_in(&al, 4);
                let c = seq_in(&al, 4);
                (Just(al), a, b, c)
            })
        ) {
            prop_assert_eq!(h.concat(&t).concat(&u), h.concat(&t.concat(&u)));
            prop_assert_eq!(h.concat(&Sequence::empty()), h.clone());
            prop_assert_eq!(Sequence::empty().concat(&h), h.clone());
            let mut acts = h.action_sequence();
            acts.extend(t.action_sequence());
            prop_assert_eq!(h.concat(&t).action_sequence(), acts);
            prop_assert_eq!(al.parse(&al.render(&h)).unwrap(), h);
        }
    }
}
