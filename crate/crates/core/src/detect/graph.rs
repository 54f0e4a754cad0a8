//! Additive-interaction graph and repeated-variable peeling.

use serde::{Deserialize, Serialize};

/// Undirected graph over the input variables. An edge joins two variables
/// whose mixed second difference exceeds the detection tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    n: usize,
    scores: Vec<f64>,
    tol: f64,
}

impl InteractionGraph {
    /// Builds a graph from a full score table (`scores[i * n + j]`).
    pub fn from_scores(n: usize, scores: Vec<f64>, tol: f64) -> InteractionGraph {
        assert_eq!(scores.len(), n * n);
        InteractionGraph { n, scores, tol }
    }

    /// A graph with exactly the listed (zero-based) edges, unit scores.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> InteractionGraph {
        let mut scores = vec![0.0; n * n];
        for &(i, j) in edges {
            assert!(i != j && i < n && j < n, "bad edge ({i}, {j})");
            scores[i * n + j] = 1.0;
            scores[j * n + i] = 1.0;
        }
        InteractionGraph {
            n,
            scores,
            tol: 0.5,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.n + j]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.score(i, j) > self.tol
    }

    /// Edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_edge(i, j)).count()
    }

    /// Connected components of the subgraph induced by the vertices not in
    /// `removed`, each sorted, ordered by smallest member.
    pub fn components(&self, removed: &[bool]) -> Vec<Vec<usize>> {
        let mut seen = removed.to_vec();
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut head = 0;
            while head < comp.len() {
                let v = comp[head];
                head += 1;
                for w in 0..self.n {
                    if !seen[w] && self.has_edge(v, w) {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Components of the subgraph induced by `keep`.
    pub fn components_within(&self, keep: &[usize]) -> Vec<Vec<usize>> {
        let mut removed = vec![true; self.n];
        for &v in keep {
            removed[v] = false;
        }
        self.components(&removed)
    }
}

/// Greedily peels minimal vertex cuts off `graph`.
///
/// Each round looks for the smallest vertex set (at most `k_max` vertices)
/// whose removal increases the number of connected components among the
/// remaining vertices. Ties go to the larger increase, then to the
/// lexicographically smallest set. The set is removed and the search
/// repeats until no cut is left. Returns the union, sorted.
///
/// A set only counts if it is also a cut of the original graph, so a
/// vertex that becomes a cut only after earlier removals stays inside its
/// block.
pub fn repeated_vars(graph: &InteractionGraph, k_max: usize) -> Vec<usize> {
    let n = graph.vertex_count();
    let mut removed = vec![false; n];
    let original = graph.components(&removed).len();
    let cuts_original = |subset: &[usize]| {
        let mut trial = vec![false; n];
        for &v in subset {
            trial[v] = true;
        }
        graph.components(&trial).len() > original
    };
    loop {
        let base = graph.components(&removed).len();
        let remaining: Vec<usize> = (0..n).filter(|&v| !removed[v]).collect();
        let mut best: Option<(Vec<usize>, usize)> = None;
        for size in 1..=k_max.min(remaining.len()) {
            for subset in Combinations::new(&remaining, size) {
                let mut trial = removed.clone();
                for &v in &subset {
                    trial[v] = true;
                }
                let count = graph.components(&trial).len();
                if count > base && cuts_original(&subset) {
                    let gain = count - base;
                    if best.as_ref().is_none_or(|(_, g)| gain > *g) {
                        best = Some((subset, gain));
                    }
                }
            }
            if best.is_some() {
                break;
            }
        }
        match best {
            Some((cut, _)) => {
                for v in cut {
                    removed[v] = true;
                }
            }
            None => break,
        }
    }
    (0..n).filter(|&v| removed[v]).collect()
}

/// Lexicographic k-subsets of a sorted slice.
struct Combinations<'a> {
    items: &'a [usize],
    idx: Vec<usize>,
    done: bool,
}

impl<'a> Combinations<'a> {
    fn new(items: &'a [usize], k: usize) -> Self {
        Combinations {
            items,
            idx: (0..k).collect(),
            done: k == 0 || k > items.len(),
        }
    }
}

impl Iterator for Combinations<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.iter().map(|&i| self.items[i]).collect();
        let k = self.idx.len();
        let n = self.items.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
