//! Finite episodic MDPs with an absorbing terminal state and a hard episode
//! cap, tabular softmax policies, and seeded rollouts.

mod frozen_lake;
mod policy;
mod rollout;

pub use frozen_lake::{Cell, FrozenLake, FrozenLakeParams, Move, DEFAULT_LAYOUT};
pub use policy::SoftmaxPolicy;
pub use rollout::{rollout, rollout_batch, rollout_with_rng, Episode};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// Episodic MDP. Transition rows are indexed by `state * n_actions + action`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMdp {
    n_states: usize,
    n_actions: usize,
    start: usize,
    terminal: usize,
    episode_cap: usize,
    r_max: f64,
    rows: Vec<Vec<Transition>>,
}

/// Incremental construction of an [`EpisodicMdp`]. Terminal self-loops are
/// filled in by [`MdpBuilder::build`].
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    n_states: usize,
    n_actions: usize,
    start: usize,
    terminal: usize,
    episode_cap: usize,
    rows: Vec<Vec<Transition>>,
}

impl MdpBuilder {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            start: 1.min(n_states.saturating_sub(1)),
            terminal: 0,
            episode_cap: 1,
            rows: vec![Vec::new(); n_states * n_actions],
        }
    }

    pub fn start(mut self, s: usize) -> Self {
        self.start = s;
        self
    }

    pub fn terminal(mut self, s: usize) -> Self {
        self.terminal = s;
        self
    }

    pub fn cap(mut self, cap: usize) -> Self {
        self.episode_cap = cap;
        self
    }

    /// Adds probability mass `prob` for `(state, action) -> next` with the given
    /// reward. Repeated `(next, reward)` pairs are merged.
    pub fn transition(
        mut self,
        state: usize,
        action: usize,
        next: usize,
        prob: f64,
        reward: f64,
    ) -> Result<Self> {
        self.add(state, action, next, prob, reward)?;
        Ok(self)
    }

    pub fn add(
        &mut self,
        state: usize,
        action: usize,
        next: usize,
        prob: f64,
        reward: f64,
    ) -> Result<()> {
        if state >= self.n_states || next >= self.n_states || action >= self.n_actions {
            return Err(Error::InvalidMdp(format!(
                "transition ({state}, {action}) -> {next} out of range"
            )));
        }
        if !(0.0..=1.0).contains(&prob) || !reward.is_finite() {
            return Err(Error::InvalidMdp(format!(
                "bad probability {prob} or reward {reward} for ({state}, {action}) -> {next}"
            )));
        }
        if prob == 0.0 {
            return Ok(());
        }
        let row = &mut self.rows[state * self.n_actions + action];
        match row
            .iter_mut()
            .find(|t| t.next == next && t.reward == reward)
        {
            Some(t) => t.prob += prob,
            None => row.push(Transition { next, prob, reward }),
        }
        Ok(())
    }

    pub fn build(mut self) -> Result<EpisodicMdp> {
        let err = |m: String| Err(Error::InvalidMdp(m));
        if self.n_states < 2 || self.n_actions < 1 {
            return err("need at least two states and one action".into());
        }
        if self.start >= self.n_states || self.terminal >= self.n_states {
            return err("start or terminal state out of range".into());
        }
        if self.episode_cap < 1 {
            return err("episode cap must be >= 1".into());
        }
        for a in 0..self.n_actions {
            let row = &mut self.rows[self.terminal * self.n_actions + a];
            if row.is_empty() {
                row.push(Transition {
                    next: self.terminal,
                    prob: 1.0,
                    reward: 0.0,
                });
            } else if row
                .iter()
                .any(|t| t.next != self.terminal || t.reward != 0.0)
            {
                return err("terminal state must self-loop with zero reward".into());
            }
        }
        for (idx, row) in self.rows.iter().enumerate() {
            let (s, a) = (idx / self.n_actions, idx % self.n_actions);
            let total = compensated_sum(row.iter().map(|t| t.prob));
            if (total - 1.0).abs() > ROW_TOL {
                return err(format!(
                    "transition row ({s}, {a}) sums to {total}, expected 1"
                ));
            }
        }
        let r_max = self
            .rows
            .iter()
            .flatten()
            .map(|t| t.reward.abs())
            .fold(0.0, f64::max);
        Ok(EpisodicMdp {
            n_states: self.n_states,
            n_actions: self.n_actions,
            start: self.start,
            terminal: self.terminal,
            episode_cap: self.episode_cap,
            r_max,
            rows: self.rows,
        })
    }
}

impl EpisodicMdp {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Policy parameter dimension `n_states * n_actions`.
    pub fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn terminal(&self) -> usize {
        self.terminal
    }

    pub fn episode_cap(&self) -> usize {
        self.episode_cap
    }

    pub fn with_episode_cap(mut self, cap: usize) -> Result<Self> {
        if cap < 1 {
            return Err(Error::InvalidMdp("episode cap must be >= 1".into()));
        }
        self.episode_cap = cap;
        Ok(self)
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn transitions(&self, state: usize, action: usize) -> &[Transition] {
        &self.rows[state * self.n_actions + action]
    }

    /// `M_r = r_max (1 - gamma^{M_e}) / (1 - gamma)`, the cap-aware version of
    /// `r_max / (1 - gamma)`.
    pub fn tight_return_bound(&self, gamma: f64) -> f64 {
        let full = self.r_max / (1.0 - gamma);
        let capped = self.r_max * (1.0 - gamma.powi(self.episode_cap as i32)) / (1.0 - gamma);
        full.min(capped)
    }

    /// Largest `|R|` over every trajectory that has positive probability under
    /// some policy, by finite-horizon max/min dynamic programming. Never exceeds
    /// [`EpisodicMdp::tight_return_bound`].
    pub fn reachable_return_bound(&self, gamma: f64) -> f64 {
        let n = self.n_states;
        let mut hi = vec![0.0f64; n];
        let mut lo = vec![0.0f64; n];
        for _ in 0..self.episode_cap {
            let mut nhi = vec![0.0f64; n];
            let mut nlo = vec![0.0f64; n];
            for s in 0..n {
                if s == self.terminal {
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                let mut worst = f64::INFINITY;
                for a in 0..self.n_actions {
                    for t in self.transitions(s, a) {
                        best = best.max(t.reward + gamma * hi[t.next]);
                        worst = worst.min(t.reward + gamma * lo[t.next]);
                    }
                }
                nhi[s] = best;
                nlo[s] = worst;
            }
            hi = nhi;
            lo = nlo;
        }
        hi[self.start].abs().max(lo[self.start].abs())
    }

    /// Parses the plain-text MDP description:
    ///
    /// ```text
    /// states 3
    /// actions 2
    /// start 1
    /// terminal 0
    /// cap 3
    /// trans <state> <action> <next> <prob> <reward>
    /// ```
    ///
    /// `#` starts a comment. Terminal self-loops may be omitted.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut header: [Option<usize>; 5] = [None; 5];
        let mut trans = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse {
                line: lineno + 1,
                msg,
            };
            let mut tok = line.split_whitespace();
            let key = tok.next().unwrap();
            let rest: Vec<&str> = tok.collect();
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| perr(format!("bad integer {s:?}: {e}")))
            };
            let real = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| perr(format!("bad number {s:?}: {e}")))
            };
            let slot = match key {
                "states" => Some(0),
                "actions" => Some(1),
                "start" => Some(2),
                "terminal" => Some(3),
                "cap" => Some(4),
                "trans" => None,
                other => return Err(perr(format!("unknown directive {other:?}"))),
            };
            match slot {
                Some(i) => {
                    if rest.len() != 1 {
                        return Err(perr(format!("{key} takes one value")));
                    }
                    header[i] = Some(int(rest[0])?);
                }
                None => {
                    if rest.len() != 5 {
                        return Err(perr("trans takes 5 values".into()));
                    }
                    trans.push((
                        lineno + 1,
                        int(rest[0])?,
                        int(rest[1])?,
                        int(rest[2])?,
                        real(rest[3])?,
                        real(rest[4])?,
                    ));
                }
            }
        }
        let need = |i: usize, name: &str| {
            header[i].ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("missing `{name}` directive"),
            })
        };
        let mut b = MdpBuilder::new(need(0, "states")?, need(1, "actions")?)
            .start(need(2, "start")?)
            .terminal(header[3].unwrap_or(0))
            .cap(need(4, "cap")?);
        for (line, s, a, n, p, r) in trans {
            b.add(s, a, n, p, r).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
        }
        b.build()
    }

    /// Inverse of [`EpisodicMdp::from_text`] (terminal self-loops omitted).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "states {}", self.n_states);
        let _ = writeln!(out, "actions {}", self.n_actions);
        let _ = writeln!(out, "start {}", self.start);
        let _ = writeln!(out, "terminal {}", self.terminal);
        let _ = writeln!(out, "cap {}", self.episode_cap);
        for s in (0..self.n_states).filter(|&s| s != self.terminal) {
            for a in 0..self.n_actions {
                for t in self.transitions(s, a) {
                    let _ = writeln!(out, "trans {s} {a} {} {} {}", t.next, t.prob, t.reward);
                }
            }
        }
        out
    }

    /// The canonical two-live-state oracle chain shipped with the crate.
    pub fn oracle_chain() -> Self {
        Self::from_text(include_str!("../../fixtures/chain2.mdp"))
            .expect("bundled fixture is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fixture_parses_and_roundtrips() {
        let mdp = EpisodicMdp::oracle_chain();
        assert_eq!(mdp.n_states(), 3);
        assert_eq!(mdp.n_actions(), 2);
        assert_eq!(mdp.episode_cap(), 3);
        assert_eq!(mdp.r_max(), 2.0);
        let again = EpisodicMdp::from_text(&mdp.to_text()).unwrap();
        assert_eq!(again, mdp);
    }

    #[test]
    fn terminal_self_loops_are_added() {
        let mdp = EpisodicMdp::oracle_chain();
        for a in 0..2 {
            assert_eq!(
                mdp.transitions(0, a),
                &[Transition {
                    next: 0,
                    prob: 1.0,
                    reward: 0.0
                }]
            );
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let b = MdpBuilder::new(2, 1).cap(1);
        assert!(b.clone().build().is_err(), "empty live row");
        let b = b.transition(1, 0, 0, 0.6, 1.0).unwrap();
        assert!(b.clone().build().is_err(), "row sums to 0.6");
        assert!(b.clone().transition(1, 0, 0, 0.4, 1.0).unwrap().build().is_ok());
        assert!(MdpBuilder::new(2, 1)
            .transition(0, 0, 1, 1.0, 0.0)
            .unwrap()
            .transition(1, 0, 0, 1.0, 0.0)
            .unwrap()
            .build()
            .is_err());
        assert!(MdpBuilder::new(2, 1).transition(1, 3, 0, 1.0, 0.0).is_err());
        assert!(EpisodicMdp::from_text("states 2\nactions 1\nstart 1\ncap 0\ntrans 1 0 0 1 0").is_err());
        assert!(EpisodicMdp::from_text("states 2\nfoo 1").is_err());
    }

    #[test]
    fn return_bounds() {
        let mut b = MdpBuilder::new(2, 1).cap(100);
        b.add(1, 0, 1, 0.5, 10.0).unwrap();
        b.add(1, 0, 0, 0.5, -10.0).unwrap();
        let mdp = b.build().unwrap();
        let bound = mdp.tight_return_bound(0.99);
        assert_relative_eq!(bound, 10.0 * (1.0 - 0.99f64.powi(100)) / 0.01, epsilon = 1e-9);
        assert_relative_eq!(bound, 633.967_1, epsilon = 1e-3);
        assert!(bound <= 10.0 / 0.01);
        assert_relative_eq!(mdp.reachable_return_bound(0.99), bound, epsilon = 1e-9);

        let one = mdp.clone().with_episode_cap(1).unwrap();
        assert_relative_eq!(one.tight_return_bound(0.5), 10.0, epsilon = 1e-12);

        let chain = EpisodicMdp::oracle_chain();
        let reach = chain.reachable_return_bound(0.9);
        // best path: risky (2.0), risky (1.5), risky (2.0) => 2 + 1.35 + 1.62
        assert_relative_eq!(reach, 2.0 + 0.9 * 1.5 + 0.81 * 2.0, epsilon = 1e-12);
        assert!(reach <= chain.tight_return_bound(0.9));
    }
}
