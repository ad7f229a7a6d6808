//! Finite-action games on products of simplices: payoffs, best responses,
//! the best-response map `H(ξ) = Π_i (BR^i(ξ^{-i}) - ξ^i)` and a few
//! example games.
//!
//! Payoff tensors are indexed by the joint pure profile `(a_1, …, a_m)`,
//! stored row-major with player 1's action most significant. Mixed profiles
//! are flat vectors: player `i` owns the block `offset(i)..offset(i)+k_i`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::Polytope;
use crate::setvalued::SetValuedMap;

/// Tolerance on payoff ties in best responses.
pub const BR_TOL: f64 = 1e-9;
/// Tolerance for a profile to count as lying on the product of simplices.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Game {
    name: String,
    action_counts: Vec<usize>,
    offsets: Vec<usize>,
    payoffs: Vec<Vec<f64>>,
    nash: Option<Vec<f64>>,
    potential: Option<Vec<f64>>,
}

/// JSON form: `{"players": m, "action_counts": [...], "payoff_tensors": [...]}`
/// where `payoff_tensors[i]` is a nested array of depth `m`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameDocument {
    pub players: usize,
    pub action_counts: Vec<usize>,
    pub payoff_tensors: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl Game {
    pub fn new(action_counts: Vec<usize>, payoffs: Vec<Vec<f64>>) -> Result<Self> {
        if action_counts.is_empty() {
            return Err(Error::InvalidArgument("a game needs at least one player".into()));
        }
        if action_counts.contains(&0) {
            return Err(Error::InvalidArgument("every player needs at least one action".into()));
        }
        if payoffs.len() != action_counts.len() {
            return Err(Error::InvalidArgument(format!(
                "{} payoff tensors for {} players",
                payoffs.len(),
                action_counts.len()
            )));
        }
        let size: usize = action_counts.iter().product();
        for (i, u) in payoffs.iter().enumerate() {
            if u.len() != size {
                return Err(Error::InvalidArgument(format!(
                    "payoff tensor of player {i} has {} entries, expected {size}",
                    u.len()
                )));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("payoff tensor of player {i} is not finite")));
            }
        }
        let offsets = action_counts
            .iter()
            .scan(0, |acc, &k| {
                let o = *acc;
                *acc += k;
                Some(o)
            })
            .collect();
        Ok(Self { name: "custom".into(), action_counts, offsets, payoffs, nash: None, potential: None })
    }

    /// Two-player game from `[own][opponent]`-free joint matrices
    /// `u1[a1][a2]`, `u2[a1][a2]`.
    pub fn bimatrix(u1: &[Vec<f64>], u2: &[Vec<f64>]) -> Result<Self> {
        let k1 = u1.len();
        let k2 = u1.first().map_or(0, Vec::len);
        if u2.len() != k1 || u1.iter().chain(u2).any(|r| r.len() != k2) {
            return Err(Error::InvalidArgument("bimatrix payoffs must share one shape".into()));
        }
        Self::new(vec![k1, k2], vec![u1.concat(), u2.concat()])
    }

    pub fn from_document(doc: &GameDocument) -> Result<Self> {
        if doc.players != doc.action_counts.len() || doc.players != doc.payoff_tensors.len() {
            return Err(Error::InvalidArgument(
                "players, action_counts and payoff_tensors disagree on the number of players".into(),
            ));
        }
        let payoffs = doc
            .payoff_tensors
            .iter()
            .map(|t| {
                let mut flat = Vec::new();
                flatten_tensor(t, &doc.action_counts, &mut flat)?;
                Ok(flat)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut g = Self::new(doc.action_counts.clone(), payoffs)?;
        if let Some(n) = &doc.name {
            g.name = n.clone();
        }
        Ok(g)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }

    pub fn to_document(&self) -> GameDocument {
        GameDocument {
            players: self.players(),
            action_counts: self.action_counts.clone(),
            payoff_tensors: self.payoffs.iter().map(|u| nest_tensor(u, &self.action_counts)).collect(),
            name: Some(self.name.clone()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn offset(&self, player: usize) -> usize {
        self.offsets[player]
    }

    /// Length of a flattened mixed profile, `Σ k_i`.
    pub fn profile_dim(&self) -> usize {
        self.action_counts.iter().sum()
    }

    pub fn payoff_tensor(&self, player: usize) -> &[f64] {
        &self.payoffs[player]
    }

    pub fn block<'a>(&self, xi: &'a [f64], player: usize) -> &'a [f64] {
        &xi[self.offsets[player]..self.offsets[player] + self.action_counts[player]]
    }

    /// A known equilibrium for the built-in games.
    pub fn known_nash(&self) -> Option<&[f64]> {
        self.nash.as_deref()
    }

    /// Potential over joint pure profiles (built-in potential games only).
    pub fn potential(&self) -> Option<&[f64]> {
        self.potential.as_deref()
    }

    pub fn is_zero_sum(&self) -> bool {
        self.players() == 2 && self.payoffs[0].iter().zip(&self.payoffs[1]).all(|(a, b)| a + b == 0.0)
    }

    /// Errors unless `xi` has the right length and every block lies on its
    /// simplex within [`SIMPLEX_TOL`].
    pub fn check_profile(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.profile_dim() {
            return Err(Error::DimensionMismatch { expected: self.profile_dim(), found: xi.len() });
        }
        for i in 0..self.players() {
            let b = self.block(xi, i);
            let s: f64 = b.iter().sum();
            if b.iter().any(|v| !(*v >= -SIMPLEX_TOL)) || (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidArgument(format!("block of player {i} is not on the simplex: {b:?}")));
            }
        }
        Ok(())
    }

    /// `u_a = U^i(e_a, ξ^{-i})` for every pure action `a` of player `i`.
    pub fn pure_payoffs(&self, player: usize, xi: &[f64]) -> Vec<f64> {
        let m = self.players();
        let mut u = vec![0.0; self.action_counts[player]];
        let mut idx = vec![0usize; m];
        for &entry in &self.payoffs[player] {
            let mut w = 1.0;
            for j in 0..m {
                if j != player {
                    w *= xi[self.offsets[j] + idx[j]];
                }
            }
            u[idx[player]] += entry * w;
            // advance the row-major multi-index
            for j in (0..m).rev() {
                idx[j] += 1;
                if idx[j] < self.action_counts[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
        u
    }

    /// `U^i(ξ)` for a full mixed profile.
    pub fn expected_payoff(&self, player: usize, xi: &[f64]) -> f64 {
        let u = self.pure_payoffs(player, xi);
        u.iter().zip(self.block(xi, player)).map(|(a, b)| a * b).sum()
    }

    /// Pure actions of `player` within [`BR_TOL`] of the best payoff against
    /// the opponents' blocks of `xi` (the player's own block is ignored).
    pub fn best_response_actions(&self, player: usize, xi: &[f64]) -> Result<Vec<usize>> {
        let u = self.pure_payoffs(player, xi);
        let top = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::BestResponse { player });
        }
        Ok(u.iter().enumerate().filter(|(_, v)| **v >= top - BR_TOL).map(|(a, _)| a).collect())
    }

    /// `BR^i(ξ^{-i})` as the hull of its pure vertices in `R^{k_i}`.
    pub fn best_response(&self, player: usize, xi: &[f64]) -> Result<Polytope> {
        let k = self.action_counts[player];
        let gens = self
            .best_response_actions(player, xi)?
            .into_iter()
            .map(|a| {
                let mut e = vec![0.0; k];
                e[a] = 1.0;
                e
            })
            .collect();
        Polytope::new(gens)
    }

    /// Uniform draw among the best-response vertices.
    pub fn strategy_draw<R: RngCore + ?Sized>(&self, player: usize, xi: &[f64], rng: &mut R) -> Result<usize> {
        let br = self.best_response_actions(player, xi)?;
        Ok(if br.len() == 1 { br[0] } else { br[rng.random_range(0..br.len())] })
    }

    /// `max_i (max_a u_a - U^i(ξ))`; zero exactly at Nash equilibria.
    pub fn nash_gap(&self, xi: &[f64]) -> f64 {
        (0..self.players())
            .map(|i| {
                let u = self.pure_payoffs(i, xi);
                let best = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let got: f64 = u.iter().zip(self.block(xi, i)).map(|(a, b)| a * b).sum();
                best - got
            })
            .fold(0.0, f64::max)
    }

    pub fn map(&self) -> GameMap {
        GameMap { game: self.clone() }
    }

    pub fn matching_pennies() -> Self {
        let u1 = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let u2 = vec![vec![-1.0, 1.0], vec![1.0, -1.0]];
        let mut g = Self::bimatrix(&u1, &u2).expect("valid");
        g.name = "matching_pennies".into();
        g.nash = Some(vec![0.5, 0.5, 0.5, 0.5]);
        g
    }

    /// 3×3 cyclic game: 0 on ties, `+win` for a win, `-loss` for a loss.
    /// Action `a+1 (mod 3)` beats action `a`. Both players use the same
    /// matrix against each other.
    pub fn generalized_rps(win: f64, loss: f64) -> Result<Self> {
        if !(win > 0.0 && loss > 0.0 && win.is_finite() && loss.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "generalized RPS needs positive finite payoffs (win = {win}, loss = {loss})"
            )));
        }
        let mut a = vec![vec![0.0; 3]; 3];
        for own in 0..3 {
            a[own][(own + 2) % 3] = win;
            a[own][(own + 1) % 3] = -loss;
        }
        let transpose: Vec<Vec<f64>> = (0..3).map(|r| (0..3).map(|c| a[c][r]).collect()).collect();
        let mut g = Self::bimatrix(&a, &transpose)?;
        g.name = format!("generalized_rps({win},{loss})");
        let third = 1.0 / 3.0;
        g.nash = Some(vec![third; 6]);
        Ok(g)
    }

    /// Coordination game with identical payoffs `[[2,0],[0,1]]`; the common
    /// payoff is an exact potential.
    pub fn potential_2x2() -> Self {
        let u = vec![vec![2.0, 0.0], vec![0.0, 1.0]];
        let mut g = Self::bimatrix(&u, &u).expect("valid");
        g.name = "potential_2x2".into();
        g.nash = Some(vec![1.0, 0.0, 1.0, 0.0]);
        g.potential = Some(u.concat());
        g
    }

    /// Built-in games by name: `matching_pennies`, `potential_2x2`,
    /// `generalized_rps` (defaults win 1, loss 2).
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "matching_pennies" => Ok(Self::matching_pennies()),
            "potential_2x2" => Ok(Self::potential_2x2()),
            "generalized_rps" => Self::generalized_rps(1.0, 2.0),
            other => Err(Error::InvalidArgument(format!("unknown built-in game `{other}`"))),
        }
    }
}

fn flatten_tensor(v: &Value, shape: &[usize], out: &mut Vec<f64>) -> Result<()> {
    match shape.split_first() {
        None => {
            let x = v
                .as_f64()
                .ok_or_else(|| Error::InvalidArgument(format!("payoff entry {v} is not a number")))?;
            out.push(x);
            Ok(())
        }
        Some((&k, rest)) => {
            let arr = v
                .as_array()
                .filter(|a| a.len() == k)
                .ok_or_else(|| Error::InvalidArgument(format!("payoff tensor level should have {k} entries")))?;
            arr.iter().try_for_each(|x| flatten_tensor(x, rest, out))
        }
    }
}

fn nest_tensor(flat: &[f64], shape: &[usize]) -> Value {
    match shape.split_first() {
        None => Value::from(flat[0]),
        Some((&k, rest)) => {
            let stride: usize = rest.iter().product();
            Value::Array((0..k).map(|a| nest_tensor(&flat[a * stride..(a + 1) * stride], rest)).collect())
        }
    }
}

/// `H(ξ) = (BR^1(ξ^{-1}) - ξ^1) × … × (BR^m(ξ^{-m}) - ξ^m)`.
#[derive(Clone, Debug)]
pub struct GameMap {
    game: Game,
}

impl GameMap {
    pub fn game(&self) -> &Game {
        &self.game
    }
}

impl SetValuedMap for GameMap {
    fn dim(&self) -> usize {
        self.game.profile_dim()
    }

    fn evaluate(&self, xi: &[f64]) -> Polytope {
        let g = &self.game;
        let mut acc: Option<Polytope> = None;
        for i in 0..g.players() {
            let own = g.block(xi, i);
            let br = g.best_response(i, xi).unwrap_or_else(|_| {
                // Non-finite payoffs: fall back to the whole simplex.
                let k = g.action_counts()[i];
                Polytope::new((0..k).map(|a| (0..k).map(|b| f64::from(a == b)).collect()).collect())
                    .expect("k >= 1")
            });
            let factor = br.translated(&own.iter().map(|v| -v).collect::<Vec<_>>()).expect("block dimension");
            acc = Some(match acc {
                None => factor,
                Some(p) => p.product(&factor),
            });
        }
        acc.expect("at least one player")
    }

    fn growth_bound(&self) -> Option<f64> {
        // ‖b - ξ‖ ≤ ‖b‖ + ‖ξ‖ ≤ √m (1 + ‖ξ‖) blockwise.
        Some((self.game.players() as f64).sqrt())
    }
}
