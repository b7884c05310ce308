//! Experience storage and exploration noise shared by both learners.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One environment transition. `time` is the 0-based step index of the
/// state `obs` inside its episode, so the successor state sits at
/// `time + 1`. `terminal` is true only for genuinely absorbing ends —
/// time-limit cut-offs keep it false so value targets bootstrap through
/// them. `seq` is a buffer-assigned monotone tag used to audit that no
/// transition is ever trained on twice.
#[derive(Clone, Debug)]
pub struct Transition<A: Copy> {
    pub obs: Vec<f64>,
    pub action: A,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub time: usize,
    pub terminal: bool,
    pub seq: u64,
}

/// FIFO replay buffer with a fixed capacity.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<A: Copy> {
    items: VecDeque<Transition<A>>,
    capacity: usize,
    next_seq: u64,
}

impl<A: Copy> ReplayBuffer<A> {
    pub fn new(capacity: usize) -> ReplayBuffer<A> {
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
            capacity: capacity.max(1),
            next_seq: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    /// Stores a transition, evicting the oldest when full. Returns the
    /// sequence tag assigned to it.
    pub fn push(
        &mut self,
        obs: Vec<f64>,
        action: A,
        reward: f64,
        next_obs: Vec<f64>,
        time: usize,
        terminal: bool,
    ) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(Transition {
            obs,
            action,
            reward,
            next_obs,
            time,
            terminal,
            seq,
        });
        seq
    }

    /// Immutable view of the whole buffer, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<A>> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, batch: usize, stream: &mut RngStream) -> Result<Vec<&Transition<A>>> {
        if self.items.is_empty() {
            return Err(Error::InvalidConfig {
                detail: "cannot sample from an empty replay buffer".to_string(),
            });
        }
        (0..batch)
            .map(|_| Ok(&self.items[stream.index(self.items.len())?]))
            .collect()
    }

    /// Drops everything but keeps the sequence counter running.
    pub fn clear(&mut self) {
        self.items.clear();
    }
}

/// Ornstein–Uhlenbeck exploration noise,
/// `x ← x + θ(μ − x) + σ·N(0, 1)` per step with μ = 0.
#[derive(Clone, Debug)]
pub struct OuNoise {
    theta: f64,
    sigma: f64,
    state: f64,
}

impl OuNoise {
    pub fn new(theta: f64, sigma: f64) -> OuNoise {
        OuNoise {
            theta,
            sigma,
            state: 0.0,
        }
    }

    /// Returns the process to its mean; called at every episode start.
    pub fn reset(&mut self) {
        self.state = 0.0;
    }

    pub fn sample(&mut self, stream: &mut RngStream) -> f64 {
        self.state += self.theta * (0.0 - self.state) + self.sigma * stream.standard_normal();
        self.state
    }
}

/// Exploration rate for episode `i`: `max(floor, start · decay^i)`.
pub fn epsilon_for_episode(start: f64, decay: f64, floor: f64, episode: usize) -> f64 {
    (start * decay.powi(episode as i32)).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_keeps_exactly_the_newest_items() {
        let mut buffer: ReplayBuffer<usize> = ReplayBuffer::new(5);
        for k in 0..12 {
            let seq = buffer.push(vec![k as f64], k, -(k as f64), vec![k as f64 + 1.0], k, false);
            assert_eq!(seq, k as u64);
        }
        assert_eq!(buffer.len(), 5);
        assert!(buffer.is_full());
        let kept: Vec<usize> = buffer.iter().map(|t| t.action).collect();
        assert_eq!(kept, vec![7, 8, 9, 10, 11]);
        let seqs: Vec<u64> = buffer.iter().map(|t| t.seq).collect();
        assert_eq!(seqs, vec![7, 8, 9, 10, 11]);
    }

    #[test]
    fn clear_preserves_the_sequence_counter() {
        let mut buffer: ReplayBuffer<usize> = ReplayBuffer::new(3);
        for k in 0..3 {
            buffer.push(vec![0.0], k, 0.0, vec![0.0], k, false);
        }
        buffer.clear();
        assert!(buffer.is_empty());
        let seq = buffer.push(vec![0.0], 9, 0.0, vec![0.0], 0, false);
        assert_eq!(seq, 3, "sequence tags never repeat after clear");
    }

    #[test]
    fn sampling_is_uniform_over_contents() {
        let mut buffer: ReplayBuffer<usize> = ReplayBuffer::new(4);
        for k in 0..4 {
            buffer.push(vec![0.0], k, 0.0, vec![0.0], k, false);
        }
        let mut stream = RngStream::new(7);
        let mut counts = [0usize; 4];
        for _ in 0..100 {
            for t in buffer.sample(40, &mut stream).unwrap() {
                counts[t.action] += 1;
            }
        }
        for &c in &counts {
            // 4000 draws over 4 slots: expect 1000 each, allow ±15%.
            assert!((850..=1150).contains(&c), "counts {counts:?}");
        }
        let empty: ReplayBuffer<usize> = ReplayBuffer::new(4);
        assert!(empty.sample(1, &mut stream).is_err());
    }

    #[test]
    fn ou_noise_decays_toward_zero_without_input() {
        // With σ = 0 the recursion is x ← (1 − θ)x.
        let mut noise = OuNoise::new(0.15, 0.0);
        noise.state = 1.0;
        let mut stream = RngStream::new(0);
        for k in 1..=20 {
            let x = noise.sample(&mut stream);
            assert!((x - 0.85f64.powi(k)).abs() < 1e-12);
        }
        noise.reset();
        assert_eq!(noise.sample(&mut stream), 0.0);
    }

    #[test]
    fn ou_noise_matches_stationary_moments() {
        // Stationary variance of the discrete process is
        // σ²/(2θ − θ²) = 0.04/0.2775 ≈ 0.144144.
        let mut noise = OuNoise::new(0.15, 0.2);
        let mut stream = RngStream::new(11);
        // Burn in past the transient.
        for _ in 0..1000 {
            noise.sample(&mut stream);
        }
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x = noise.sample(&mut stream);
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let expected = 0.04 / (2.0 * 0.15 - 0.15 * 0.15);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!(
            (var - expected).abs() < 0.1 * expected,
            "var {var} vs {expected}"
        );
    }

    #[test]
    fn epsilon_schedule_decays_to_the_floor() {
        assert_eq!(epsilon_for_episode(1.0, 0.996, 0.01, 0), 1.0);
        let e10 = epsilon_for_episode(1.0, 0.996, 0.01, 10);
        assert!((e10 - 0.996f64.powi(10)).abs() < 1e-12);
        // 0.996^i reaches 0.01 near i = 1148.
        assert_eq!(epsilon_for_episode(1.0, 0.996, 0.01, 5000), 0.01);
        assert!(epsilon_for_episode(1.0, 0.996, 0.01, 1000) > 0.01);
    }
}
