//! Replay storage, "final"-goal hindsight relabeling and observation
//! normalization.

use rand::Rng as _;

use crate::env::{compute_reward, DemoSet, Transition};
use crate::rng::Rng;
use crate::{Error, Result};

pub const DEFAULT_CAPACITY: usize = 1_000_000;
pub const CLIP_RAW: f64 = 200.0;
pub const CLIP_NORMALIZED: f64 = 5.0;
pub const NORM_EPS: f64 = 1e-6;

/// FIFO ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            data: Vec::new(),
            cursor: 0,
        })
    }

    /// A buffer that holds exactly the given transitions (used for demos,
    /// which are never relabeled or evicted).
    pub fn from_transitions(items: Vec<Transition>) -> Result<Self> {
        let capacity = items.len().max(1);
        Ok(Self {
            capacity,
            data: items,
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.data.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.data.iter()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stores every transition twice: once as-is and once with the desired
    /// goal replaced by the episode's final achieved goal, reward recomputed.
    /// Originals come first, then the relabeled copies, both in `t` order.
    pub fn store_episode_with_her(&mut self, episode: &[Transition], success_eps: f64) -> Result<()> {
        if 2 * episode.len() > self.capacity {
            return Err(Error::InvalidArgument(format!(
                "episode of {} transitions needs {} slots, capacity is {}",
                episode.len(),
                2 * episode.len(),
                self.capacity
            )));
        }
        let Some(last) = episode.last() else {
            return Ok(());
        };
        let final_goal = last.achieved_goal.clone();
        let relabeled = relabel(episode, &final_goal, success_eps)?;
        for t in episode {
            self.push(t.clone());
        }
        for t in relabeled {
            self.push(t);
        }
        Ok(())
    }

    /// `n` uniform draws with replacement.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut Rng) -> Result<Vec<&'a Transition>> {
        if self.data.is_empty() {
            return Err(Error::InvalidArgument("cannot sample from an empty buffer".into()));
        }
        Ok((0..n).map(|_| &self.data[rng.random_range(0..self.data.len())]).collect())
    }
}

/// Copies of `episode` with `desired_goal := goal` and rewards recomputed.
pub fn relabel(episode: &[Transition], goal: &[f64], success_eps: f64) -> Result<Vec<Transition>> {
    episode
        .iter()
        .map(|t| {
            let reward = compute_reward(&t.achieved_goal, goal, success_eps)?;
            Ok(Transition {
                desired_goal: goal.to_vec(),
                reward,
                ..t.clone()
            })
        })
        .collect()
}

/// Welford running mean / variance over `obs ⊕ goal`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalizer {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                what: "normalizer input",
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite normalizer input".into()));
        }
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *mean;
            *mean += delta / n;
            *m2 += delta * (v - *mean);
        }
        Ok(())
    }

    /// Population variance `m2 / count`.
    pub fn variance(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.m2.iter().map(|m| (m / n).max(0.0)).collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance().into_iter().map(f64::sqrt).collect()
    }

    /// `clip((clip(x, ±200) − mean) / (std + 1e-6), ±5)` per component.
    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = x.to_vec();
        self.normalize_in_place(&mut out)?;
        Ok(out)
    }

    pub fn normalize_in_place(&self, x: &mut [f64]) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("normalizer has no statistics yet".into()));
        }
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                what: "normalizer input",
                expected: self.dim(),
                got: x.len(),
            });
        }
        let n = self.count as f64;
        for ((v, &mean), &m2) in x.iter_mut().zip(&self.mean).zip(&self.m2) {
            let std = (m2 / n).max(0.0).sqrt();
            let raw = v.clamp(-CLIP_RAW, CLIP_RAW);
            *v = ((raw - mean) / (std + NORM_EPS)).clamp(-CLIP_NORMALIZED, CLIP_NORMALIZED);
        }
        Ok(())
    }

    /// Seeds the statistics with every demo `obs ⊕ desired_goal`.
    pub fn init_from_demos(&mut self, demos: &DemoSet) -> Result<()> {
        if demos.num_transitions() == 0 {
            return Err(Error::InvalidArgument("demo set is empty".into()));
        }
        for t in demos.transitions() {
            self.update(&obs_goal(&t.obs, &t.desired_goal))?;
        }
        Ok(())
    }
}

pub fn obs_goal(obs: &[f64], goal: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(obs.len() + goal.len());
    v.extend_from_slice(obs);
    v.extend_from_slice(goal);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_demos, DemoQuality, EnvSpec};
    use crate::rng;

    fn tr(k: usize, achieved: [f64; 2]) -> Transition {
        Transition {
            obs: vec![k as f64; 4],
            action: vec![0.1; 2],
            reward: -1.0,
            next_obs: vec![achieved[0], achieved[1], 0.0, 0.0],
            achieved_goal: achieved.to_vec(),
            desired_goal: vec![0.9, 0.9],
            done: false,
            episode_id: 0,
            t: k,
        }
    }

    #[test]
    fn her_doubles_and_relabels_with_final_goal() {
        let eps = 0.05;
        let ep: Vec<_> = (0..5).map(|k| tr(k, [0.1 * k as f64, 0.2])).collect();
        let mut buf = ReplayBuffer::new(100).unwrap();
        buf.store_episode_with_her(&ep, eps).unwrap();
        assert_eq!(buf.len(), 10);
        let final_copy = buf.get(9).unwrap();
        assert_eq!(final_copy.desired_goal, vec![0.4, 0.2]);
        assert_eq!(final_copy.reward, 0.0);
        // t = 2 achieved (0.2, 0.2): distance 0.2 = 4·eps from the final goal.
        assert_eq!(buf.get(7).unwrap().reward, -1.0);
    }

    #[test]
    fn her_relabel_at_twice_eps_fails() {
        let eps = 0.05;
        let ep = vec![tr(0, [0.5, 0.5]), tr(1, [0.5 + 2.0 * eps, 0.5])];
        let rel = relabel(&ep, &ep[1].achieved_goal, eps).unwrap();
        assert_eq!(rel[0].reward, -1.0);
        assert_eq!(rel[1].reward, 0.0);
    }

    #[test]
    fn her_rejects_oversized_episode() {
        let ep: Vec<_> = (0..3).map(|k| tr(k, [0.0, 0.0])).collect();
        let mut buf = ReplayBuffer::new(5).unwrap();
        assert!(buf.store_episode_with_her(&ep, 0.05).is_err());
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for k in 0..5 {
            buf.push(tr(k, [0.0, 0.0]));
        }
        assert_eq!(buf.len(), 3);
        let ts: Vec<usize> = buf.iter().map(|t| t.t).collect();
        assert_eq!(ts, vec![3, 4, 2]);
    }

    #[test]
    fn sampling_single_item_and_determinism() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        assert!(buf.sample(1, &mut rng::from_seed(0)).is_err());
        buf.push(tr(7, [0.0, 0.0]));
        let s = buf.sample(5, &mut rng::from_seed(0)).unwrap();
        assert!(s.iter().all(|t| t.t == 7));

        for k in 0..9 {
            buf.push(tr(k, [0.0, 0.0]));
        }
        let a: Vec<usize> = buf.sample(20, &mut rng::from_seed(3)).unwrap().iter().map(|t| t.t).collect();
        let b: Vec<usize> = buf.sample(20, &mut rng::from_seed(3)).unwrap().iter().map(|t| t.t).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for k in 0..10 {
            buf.push(tr(k, [0.0, 0.0]));
        }
        let mut counts = [0usize; 10];
        for t in buf.sample(100_000, &mut rng::from_seed(11)).unwrap() {
            counts[t.t] += 1;
        }
        // Expected 10⁴ each, sd ≈ 95; ±5% = ±500.
        assert!(counts.iter().all(|&c| (9_500..=10_500).contains(&c)), "{counts:?}");
    }

    #[test]
    fn welford_small_stream() {
        let mut n = Normalizer::new(1);
        for v in [2.0, 4.0, 6.0] {
            n.update(&[v]).unwrap();
        }
        assert_eq!(n.mean, vec![4.0]);
        assert!((n.m2[0] - 8.0).abs() < 1e-12);
        assert!((n.variance()[0] - 8.0 / 3.0).abs() < 1e-12);

        let mut one = Normalizer::new(2);
        one.update(&[1.0, -3.0]).unwrap();
        assert_eq!(one.variance(), vec![0.0, 0.0]);
        assert!(one.update(&[f64::INFINITY, 0.0]).is_err());
        assert!(one.update(&[0.0]).is_err());
    }

    #[test]
    fn normalize_formula_and_saturation() {
        let mut n = Normalizer::new(1);
        assert!(n.normalize(&[1.0]).is_err());
        n.count = 4;
        n.mean = vec![1.0];
        n.m2 = vec![16.0];
        let v = n.normalize(&[5.0]).unwrap()[0];
        assert!((v - 4.0 / (2.0 + 1e-6)).abs() < 1e-12);
        assert_eq!(n.normalize(&[1.0]).unwrap(), vec![0.0]);

        let mut unit = Normalizer::new(1);
        unit.count = 1;
        unit.mean = vec![0.0];
        unit.m2 = vec![1.0];
        assert_eq!(unit.normalize(&[500.0]).unwrap(), vec![5.0]);
        assert_eq!(unit.normalize(&[-500.0]).unwrap(), vec![-5.0]);
    }

    #[test]
    fn demo_initialization() {
        let spec = EnvSpec::point_reach_2d();
        let demos = generate_demos(&spec, DemoQuality::Expert, 2, 0).unwrap();
        let mut n = Normalizer::new(spec.input_dim());
        n.init_from_demos(&demos).unwrap();
        assert_eq!(n.count, 2 * spec.horizon as u64);

        let mut constant = demos.clone();
        for ep in &mut constant.episodes {
            for t in ep.iter_mut() {
                t.obs = vec![0.25; 4];
                t.desired_goal = vec![0.5; 2];
            }
        }
        let mut n = Normalizer::new(spec.input_dim());
        n.init_from_demos(&constant).unwrap();
        assert_eq!(n.mean, vec![0.25, 0.25, 0.25, 0.25, 0.5, 0.5]);
        assert!(n.variance().iter().all(|&v| v == 0.0));

        let mut empty = demos;
        empty.episodes.clear();
        assert!(Normalizer::new(6).init_from_demos(&empty).is_err());
    }
}
