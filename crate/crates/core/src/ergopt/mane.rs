//! Mañé potential and Peierls barrier by exhaustive search over backward
//! chains `z = ψ_γ(y)`, pruned by the per-step bound `max A − m`.

use serde::Serialize;

use crate::dynamics::ExpandingMap;
use crate::symbolic::Word;
use crate::transfer::PotentialSpec;

/// Search parameters. Chains end at `z` with `|z − x| < eps`; their length
/// `n` satisfies `max(1, k_min) ≤ n ≤ max_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainSearch {
    pub eps: f64,
    pub max_n: usize,
    pub k_min: usize,
    /// Maximum number of tree nodes visited.
    pub budget: usize,
}

impl Default for ChainSearch {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_n: 20,
            k_min: 0,
            budget: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionValue {
    /// `−∞` when no admissible chain exists.
    pub value: f64,
    pub length: usize,
    /// Best chain `γ`, with `z = ψ_γ(y)`.
    pub chain: Option<String>,
    pub nodes: usize,
    /// Budget ran out; `value` is a lower bound only.
    pub exhausted: bool,
}

struct Search<'a> {
    map: &'a ExpandingMap,
    pot: &'a PotentialSpec,
    m: f64,
    x: f64,
    p: ChainSearch,
    step_bound: f64,
    best: f64,
    best_path: Option<Vec<u8>>,
    path: Vec<u8>,
    nodes: usize,
    exhausted: bool,
}

impl Search<'_> {
    fn dfs(&mut self, w: f64, sum: f64) {
        let k = self.path.len();
        if k >= self.p.k_min.max(1) && (w - self.x).abs() < self.p.eps && sum > self.best {
            self.best = sum;
            self.best_path = Some(self.path.clone());
        }
        if k == self.p.max_n {
            return;
        }
        if sum + self.step_bound * (self.p.max_n - k) as f64 <= self.best {
            return;
        }
        for c in 0..self.map.degree() {
            if self.nodes >= self.p.budget {
                self.exhausted = true;
                return;
            }
            self.nodes += 1;
            let z = self.map.psi(c, w);
            self.path.push(c as u8);
            self.dfs(z, sum + self.pot.a(z) - self.m);
            self.path.pop();
        }
    }
}

fn search(map: &ExpandingMap, pot: &PotentialSpec, m: f64, x: f64, y: f64, p: ChainSearch) -> ActionValue {
    let samples = 4096;
    let a_max = pot.range(samples).1 + pot.lipschitz(samples) / (2.0 * (samples - 1) as f64);
    let mut s = Search {
        map,
        pot,
        m,
        x,
        p,
        step_bound: (a_max - m).max(0.0),
        best: f64::NEG_INFINITY,
        best_path: None,
        path: Vec::with_capacity(p.max_n),
        nodes: 0,
        exhausted: false,
    };
    s.dfs(y, 0.0);
    let d = map.degree();
    ActionValue {
        value: s.best,
        length: s.best_path.as_ref().map_or(0, Vec::len),
        chain: s
            .best_path
            .and_then(|p| Word::new(p, d).ok())
            .map(|w| w.to_string()),
        nodes: s.nodes,
        exhausted: s.exhausted,
    }
}

/// `S_A(x, y)` at resolution `eps`: best `Σ_{i<n} [A(fⁱ z) − m]` over chains
/// from `z` near `x` to `y`.
pub fn mane_potential(map: &ExpandingMap, pot: &PotentialSpec, m: f64, x: f64, y: f64, p: ChainSearch) -> ActionValue {
    search(map, pot, m, x, y, ChainSearch { k_min: 0, ..p })
}

/// The same search restricted to chains of length at least `p.k_min`.
pub fn peierls_barrier(map: &ExpandingMap, pot: &PotentialSpec, m: f64, x: f64, y: f64, p: ChainSearch) -> ActionValue {
    search(map, pot, m, x, y, p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AubryReport {
    pub x: f64,
    pub s_xx: ActionValue,
    pub member: bool,
    /// `S(x, x) ≤ tol`, which must always hold.
    pub bounded: bool,
}

/// `x` is in the Aubry set when `S(x, x) ≥ −tol`.
pub fn aubry_test(map: &ExpandingMap, pot: &PotentialSpec, m: f64, x: f64, tol: f64, p: ChainSearch) -> AubryReport {
    let s = mane_potential(map, pot, m, x, x, p);
    AubryReport {
        x,
        member: s.value >= -tol,
        bounded: s.value <= tol,
        s_xx: s,
    }
}
