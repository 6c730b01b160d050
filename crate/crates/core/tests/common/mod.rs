//! Exact rational oracles, written independently of the library's models.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;

pub type Q = Ratio<i128>;

pub fn q(n: i128, d: i128) -> Q {
    Ratio::new(n, d)
}

pub fn to_f64(x: &Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// A POMDP over rationals: `ops[a][o][i][j]` is the probability of moving
/// i -> j and emitting o under a.
pub struct ExactPomdp {
    pub k: usize,
    pub num_actions: usize,
    pub num_observations: usize,
    pub ops: Vec<Vec<Vec<Vec<Q>>>>,
    pub b0: Vec<Q>,
}

impl ExactPomdp {
    fn zero_ops(k: usize, num_actions: usize, num_observations: usize) -> Vec<Vec<Vec<Vec<Q>>>> {
        vec![vec![vec![vec![q(0, 1); k]; k]; num_observations]; num_actions]
    }

    pub fn float_reset() -> Self {
        let mut ops = Self::zero_ops(5, 2, 2);
        for i in 0..5usize {
            let left = i.saturating_sub(1);
            let right = (i + 1).min(4);
            ops[0][0][i][left] += q(1, 2);
            ops[0][0][i][right] += q(1, 2);
            let o = usize::from(i == 4);
            ops[1][o][i][4] = q(1, 1);
        }
        let mut b0 = vec![q(0, 1); 5];
        b0[4] = q(1, 1);
        ExactPomdp { k: 5, num_actions: 2, num_observations: 2, ops, b0 }
    }

    /// Bit strings with the visible bit first; actions rotate left, rotate
    /// right, flip the visible bit.
    pub fn rotate_register(k: usize) -> Self {
        let n = 1 << k;
        let decode = |s: usize| -> Vec<u8> { (0..k).map(|i| ((s >> (k - 1 - i)) & 1) as u8).collect() };
        let encode = |bits: &[u8]| -> usize { bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize) };
        let mut ops = Self::zero_ops(n, 3, 2);
        for s in 0..n {
            let bits = decode(s);
            let mut left = bits.clone();
            left.rotate_left(1);
            let mut right = bits.clone();
            right.rotate_right(1);
            let mut flipped = bits.clone();
            flipped[0] ^= 1;
            for (a, next) in [left, right, flipped].iter().enumerate() {
                ops[a][next[0] as usize][s][encode(next)] = q(1, 1);
            }
        }
        let mut b0 = vec![q(0, 1); n];
        b0[0] = q(1, 1);
        ExactPomdp { k: n, num_actions: 3, num_observations: 2, ops, b0 }
    }

    pub fn fig6() -> Self {
        let mut ops = Self::zero_ops(4, 2, 5);
        for a in 0..2 {
            for i in 1..4 {
                ops[a][i][0][i] = q(1, 3);
                let o = if i == a + 1 { 4 } else { 0 };
                ops[a][o][i][0] = q(1, 1);
            }
        }
        let mut b0 = vec![q(0, 1); 4];
        b0[0] = q(1, 1);
        ExactPomdp { k: 4, num_actions: 2, num_observations: 5, ops, b0 }
    }

    pub fn num_steps(&self) -> usize {
        self.num_actions * self.num_observations
    }

    fn advance(&self, b: &[Q], step: usize) -> Vec<Q> {
        let (a, o) = (step / self.num_observations, step % self.num_observations);
        (0..self.k)
            .map(|j| (0..self.k).fold(q(0, 1), |acc, i| acc + b[i] * self.ops[a][o][i][j]))
            .collect()
    }

    /// p(steps) from belief `b`.
    pub fn prob(&self, b: &[Q], steps: &[usize]) -> Q {
        let mut v = b.to_vec();
        for &s in steps {
            v = self.advance(&v, s);
        }
        v.into_iter().fold(q(0, 1), |acc, x| acc + x)
    }

    /// p(t) from `b` for every test of length 1..=max_len, length-lex.
    pub fn predictions(&self, b: &[Q], max_len: usize) -> Vec<Q> {
        let mut out = Vec::new();
        let mut level = vec![b.to_vec()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for v in &level {
                for s in 0..self.num_steps() {
                    let w = self.advance(v, s);
                    out.push(w.iter().fold(q(0, 1), |acc, x| acc + x));
                    next.push(w);
                }
            }
            level = next;
        }
        out
    }

    /// Beliefs after every possible history of length <= hist_depth, in
    /// length-lex order.
    pub fn beliefs(&self, hist_depth: usize) -> Vec<Vec<Q>> {
        let mut beliefs = vec![self.b0.clone()];
        let mut level = vec![self.b0.clone()];
        for _ in 0..hist_depth {
            let mut next = Vec::new();
            for b in &level {
                for s in 0..self.num_steps() {
                    let v = self.advance(b, s);
                    let p: Q = v.iter().fold(q(0, 1), |acc, x| acc + x);
                    if p != q(0, 1) {
                        next.push(v.into_iter().map(|x| x / p).collect());
                    }
                }
            }
            beliefs.extend(next.iter().cloned());
            level = next;
        }
        beliefs
    }

    /// The truncated system-dynamics matrix as (row -> distinct row id,
    /// distinct rows). Histories reaching the same belief share a row.
    pub fn matrix(&self, hist_depth: usize, test_depth: usize) -> (Vec<usize>, Vec<Vec<Q>>) {
        let beliefs = self.beliefs(hist_depth);
        let mut seen: BTreeMap<&Vec<Q>, usize> = BTreeMap::new();
        let mut ids = Vec::with_capacity(beliefs.len());
        let mut rows = Vec::new();
        for b in &beliefs {
            let next = seen.len();
            let id = *seen.entry(b).or_insert(next);
            if id == rows.len() {
                rows.push(self.predictions(b, test_depth));
            }
            ids.push(id);
        }
        (ids, rows)
    }
}

/// All step-index sequences of length 1..=max_len in length-lex order.
pub fn sequences(branching: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut level: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..max_len {
        level = level
            .iter()
            .flat_map(|p| {
                (0..branching).map(move |s| {
                    let mut t = p.clone();
                    t.push(s);
                    t
                })
            })
            .collect();
        out.extend(level.iter().cloned());
    }
    out
}

/// Exact rank by Gaussian elimination, after dropping duplicate rows.
pub fn exact_rank(rows: &[Vec<Q>]) -> usize {
    let distinct: BTreeSet<&Vec<Q>> = rows.iter().collect();
    let mut basis: Vec<(usize, Vec<Q>)> = Vec::new();
    for row in distinct {
        let mut r = row.clone();
        for (pivot, b) in &basis {
            if r[*pivot] != q(0, 1) {
                let f = r[*pivot] / b[*pivot];
                for (x, y) in r.iter_mut().zip(b) {
                    *x -= f * y;
                }
            }
        }
        if let Some(p) = r.iter().position(|x| *x != q(0, 1)) {
            basis.push((p, r));
        }
    }
    basis.len()
}
