//! Hierarchical navigable small-world graph over inner-product similarity.
//!
//! Vectors live in the owning index; the graph only stores adjacency. Node
//! levels are a pure function of (seed, node id), so a graph rebuilt from the
//! same inserts is identical, and inserts after a reload stay deterministic.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::embed::dot;

const MAX_LEVEL: usize = 16;

/// Read-only view of a flat, row-major vector block.
#[derive(Clone, Copy)]
pub(crate) struct Vectors<'a> {
    pub data: &'a [f32],
    pub dim: usize,
}

impl<'a> Vectors<'a> {
    #[inline]
    pub fn get(&self, id: u32) -> &'a [f32] {
        let i = id as usize * self.dim;
        &self.data[i..i + self.dim]
    }
}

/// Similarity with a deterministic order on ties (lower id ranks higher).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Scored {
    pub sim: f32,
    pub id: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Generation-stamped visited set, reusable across searches.
pub(crate) struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    pub fn new(n: usize) -> Self {
        Self {
            marks: vec![0; n],
            epoch: 0,
        }
    }

    fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.fill(0);
            self.epoch = 1;
        }
    }

    /// Marks `id`; returns false if it was already marked.
    #[inline]
    fn insert(&mut self, id: u32) -> bool {
        let slot = &mut self.marks[id as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Graph {
    pub m: usize,
    pub seed: u64,
    /// links[node][layer] = neighbour ids
    pub links: Vec<Vec<Vec<u32>>>,
    pub entry: Option<u32>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl Graph {
    pub fn new(m: usize, seed: u64) -> Self {
        Self {
            m,
            seed,
            links: Vec::new(),
            entry: None,
        }
    }

    pub fn max_level(&self) -> usize {
        self.entry
            .map(|e| self.links[e as usize].len() - 1)
            .unwrap_or(0)
    }

    fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    /// Exponentially distributed level with normalisation 1/ln(M).
    pub fn level_for(&self, id: u32) -> usize {
        let bits = splitmix64(self.seed ^ splitmix64(id as u64));
        let u = ((bits >> 11) as f64 + 1.0) / (1u64 << 53) as f64; // (0, 1]
        let ml = 1.0 / (self.m as f64).ln();
        ((-u.ln() * ml).floor() as usize).min(MAX_LEVEL)
    }

    /// Adds node `id` (must equal the current node count) to the graph.
    pub fn insert(&mut self, id: u32, vecs: Vectors<'_>, ef_construction: usize, visited: &mut Visited) {
        debug_assert_eq!(id as usize, self.links.len());
        let level = self.level_for(id);
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(entry) = self.entry else {
            self.entry = Some(id);
            return;
        };

        let q = vecs.get(id);
        let top = self.max_level();
        let mut ep = Scored {
            sim: dot(q, vecs.get(entry)),
            id: entry,
        };
        for layer in (level + 1..=top).rev() {
            ep = self.greedy(q, ep, layer, vecs);
        }

        let mut eps = vec![ep];
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(q, &eps, ef_construction, layer, vecs, visited);
            let chosen = self.select_neighbors(&found, self.m, vecs);
            self.links[id as usize][layer] = chosen.iter().map(|s| s.id).collect();

            let cap = self.max_degree(layer);
            for s in &chosen {
                let nb = s.id as usize;
                self.links[nb][layer].push(id);
                if self.links[nb][layer].len() > cap {
                    let base = vecs.get(s.id);
                    let mut cands: Vec<Scored> = self.links[nb][layer]
                        .iter()
                        .map(|&c| Scored {
                            sim: dot(base, vecs.get(c)),
                            id: c,
                        })
                        .collect();
                    cands.sort_unstable_by(|a, b| b.cmp(a));
                    let kept = self.select_neighbors(&cands, cap, vecs);
                    self.links[nb][layer] = kept.iter().map(|s| s.id).collect();
                }
            }
            eps = found;
        }

        if level > top {
            self.entry = Some(id);
        }
    }

    fn greedy(&self, q: &[f32], mut best: Scored, layer: usize, vecs: Vectors<'_>) -> Scored {
        loop {
            let mut improved = false;
            for &n in &self.links[best.id as usize][layer] {
                let cand = Scored {
                    sim: dot(q, vecs.get(n)),
                    id: n,
                };
                if cand > best {
                    best = cand;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Beam search on one layer. Returns up to `ef` nodes, best first.
    pub fn search_layer(
        &self,
        q: &[f32],
        entry_points: &[Scored],
        ef: usize,
        layer: usize,
        vecs: Vectors<'_>,
        visited: &mut Visited,
    ) -> Vec<Scored> {
        visited.reset(self.links.len());
        let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
        let mut results: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        for &ep in entry_points {
            if visited.insert(ep.id) {
                candidates.push(ep);
                results.push(Reverse(ep));
                if results.len() > ef {
                    results.pop();
                }
            }
        }

        while let Some(c) = candidates.pop() {
            let worst = results.peek().map(|r| r.0);
            if let Some(w) = worst {
                if c < w && results.len() >= ef {
                    break;
                }
            }
            for &n in &self.links[c.id as usize][layer] {
                if !visited.insert(n) {
                    continue;
                }
                let cand = Scored {
                    sim: dot(q, vecs.get(n)),
                    id: n,
                };
                let admit = results.len() < ef || results.peek().is_some_and(|w| cand > w.0);
                if admit {
                    candidates.push(cand);
                    results.push(Reverse(cand));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }

        let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
        out.sort_unstable_by(|a, b| b.cmp(a));
        out
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the
    /// base than to every neighbour already kept. `cands` is best first.
    fn select_neighbors(&self, cands: &[Scored], limit: usize, vecs: Vectors<'_>) -> Vec<Scored> {
        let mut kept: Vec<Scored> = Vec::with_capacity(limit);
        for &c in cands {
            if kept.len() >= limit {
                break;
            }
            let cv = vecs.get(c.id);
            let dominated = kept.iter().any(|k| dot(cv, vecs.get(k.id)) > c.sim);
            if !dominated {
                kept.push(c);
            }
        }
        kept
    }

    /// Approximate nearest neighbours of `q`, best first.
    pub fn search(&self, q: &[f32], k: usize, ef: usize, vecs: Vectors<'_>, visited: &mut Visited) -> Vec<Scored> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        let mut ep = Scored {
            sim: dot(q, vecs.get(entry)),
            id: entry,
        };
        for layer in (1..=self.max_level()).rev() {
            ep = self.greedy(q, ep, layer, vecs);
        }
        let mut found = self.search_layer(q, &[ep], ef.max(k), 0, vecs, visited);
        found.truncate(k);
        found
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_are_deterministic_and_geometric() {
        let g = Graph::new(16, 42);
        let levels: Vec<usize> = (0..20_000).map(|i| g.level_for(i)).collect();
        assert_eq!(levels, (0..20_000).map(|i| g.level_for(i)).collect::<Vec<_>>());
        // P(level >= 1) = 1/M
        let above = levels.iter().filter(|&&l| l >= 1).count() as f64 / 20_000.0;
        assert!((above - 1.0 / 16.0).abs() < 0.01, "{above}");
        let other = Graph::new(16, 43);
        assert_ne!(levels, (0..20_000).map(|i| other.level_for(i)).collect::<Vec<_>>());
    }

    #[test]
    fn scored_orders_ties_by_id() {
        let a = Scored { sim: 0.5, id: 1 };
        let b = Scored { sim: 0.5, id: 2 };
        assert!(a > b);
        assert!(Scored { sim: 0.6, id: 9 } > a);
    }
}
