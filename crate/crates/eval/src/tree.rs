//! Tree decoding from word-level head scores.

use treeattn_core::{Matrix, Real};

/// A dependency tree over `n` words. `heads[k]` is the 1-based head of word
/// `k + 1`, with 0 marking the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyTree<T> {
    pub heads: Vec<usize>,
    pub score: T,
}

impl<T: Real> DependencyTree<T> {
    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// 0-based index of the root word.
    pub fn root(&self) -> usize {
        self.heads.iter().position(|&h| h == 0).expect("tree has a root")
    }
}

/// Total weight of a head assignment: `sum_j phi[head(j), j]`, where the
/// root contributes its diagonal entry. Summed in word order.
pub fn tree_score<T: Real>(phi: &Matrix<T>, heads: &[usize]) -> T {
    heads
        .iter()
        .enumerate()
        .map(|(j, &h)| if h == 0 { phi[(j, j)] } else { phi[(h - 1, j)] })
        .fold(T::zero(), |acc, w| acc + w)
}

/// Maximum spanning arborescence rooted at `root` over edge weights
/// `w[(i, j)]` for `i -> j`. Returns 0-based parents with `parent[root] = root`.
fn chu_liu_edmonds<T: Real>(w: &[Vec<T>], root: usize) -> Vec<usize> {
    let n = w.len();
    let mut best_in = vec![root; n];
    for j in 0..n {
        if j == root {
            continue;
        }
        let mut best: Option<usize> = None;
        for i in 0..n {
            if i != j && w[i][j] > T::neg_infinity() && best.map_or(true, |b| w[i][j] > w[b][j]) {
                best = Some(i);
            }
        }
        best_in[j] = best.expect("every word has a candidate head");
    }

    let Some(cycle) = find_cycle(&best_in, root) else {
        return best_in;
    };
    let in_cycle: Vec<bool> = (0..n).map(|k| cycle.contains(&k)).collect();

    // contracted graph: non-cycle nodes keep their order, the cycle becomes
    // one node at the end
    let outside: Vec<usize> = (0..n).filter(|&k| !in_cycle[k]).collect();
    let m = outside.len() + 1;
    let c = m - 1;
    let mut index = vec![c; n];
    for (new, &old) in outside.iter().enumerate() {
        index[old] = new;
    }
    let neg = T::neg_infinity();
    let mut cw = vec![vec![neg; m]; m];
    // which cycle node an edge into the cycle enters, and which cycle node an
    // edge out of the cycle leaves from
    let mut enters = vec![usize::MAX; m];
    let mut leaves = vec![usize::MAX; m];
    for &u in &outside {
        for &v in &outside {
            if u != v {
                cw[index[u]][index[v]] = w[u][v];
            }
        }
        for &v in &cycle {
            if w[u][v] > neg {
                let gain = w[u][v] - w[best_in[v]][v];
                if gain > cw[index[u]][c] {
                    cw[index[u]][c] = gain;
                    enters[index[u]] = v;
                }
            }
        }
        for &from in &cycle {
            if w[from][u] > cw[c][index[u]] {
                cw[c][index[u]] = w[from][u];
                leaves[index[u]] = from;
            }
        }
    }
    let sub = chu_liu_edmonds(&cw, index[root]);

    let mut parent = best_in;
    for &v in &outside {
        if v == root {
            continue;
        }
        let p = sub[index[v]];
        parent[v] = if p == c { leaves[index[v]] } else { outside[p] };
    }
    let entry_from = outside[sub[c]];
    parent[enters[sub[c]]] = entry_from;
    parent[root] = root;
    parent
}

fn find_cycle(parent: &[usize], root: usize) -> Option<Vec<usize>> {
    let n = parent.len();
    // 0 unvisited, 1 on current path, 2 finished
    let mut state = vec![0u8; n];
    state[root] = 2;
    for start in 0..n {
        let mut path = Vec::new();
        let mut k = start;
        while state[k] == 0 {
            state[k] = 1;
            path.push(k);
            k = parent[k];
        }
        if state[k] == 1 {
            let pos = path.iter().position(|&p| p == k).expect("on path");
            return Some(path[pos..].to_vec());
        }
        for p in path {
            state[p] = 2;
        }
    }
    None
}

/// Best single-rooted tree under `phi_hat`, where off-diagonal entries
/// score edges and diagonal entries score roots. Every word is tried as
/// the root; equal scores keep the smaller root.
pub fn cle_decode<T: Real>(phi_hat: &Matrix<T>) -> DependencyTree<T> {
    let n = phi_hat.rows();
    assert!(n >= 1 && phi_hat.is_square(), "cle_decode needs a non-empty square matrix");
    let neg = T::neg_infinity();
    let mut best: Option<DependencyTree<T>> = None;
    for r in 0..n {
        let w: Vec<Vec<T>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j || j == r { neg } else { phi_hat[(i, j)] }).collect())
            .collect();
        let parent = chu_liu_edmonds(&w, r);
        let heads: Vec<usize> = parent.iter().enumerate().map(|(j, &p)| if j == r { 0 } else { p + 1 }).collect();
        let score = tree_score(phi_hat, &heads);
        if best.as_ref().map_or(true, |b| score > b.score) {
            best = Some(DependencyTree { heads, score });
        }
    }
    best.expect("at least one root")
}

/// Column-wise argmax head assignment; may not be a tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyHeads {
    /// 1-based heads, 0 for words whose own diagonal wins.
    pub heads: Vec<usize>,
    pub cyclic: bool,
    pub roots: usize,
}

impl GreedyHeads {
    pub fn is_tree(&self) -> bool {
        !self.cyclic && self.roots == 1
    }
}

pub fn greedy_decode<T: Real>(scores: &Matrix<T>) -> GreedyHeads {
    let n = scores.rows();
    assert!(scores.is_square(), "greedy_decode needs a square matrix");
    let heads: Vec<usize> = (0..n)
        .map(|j| {
            let mut best = 0;
            for i in 1..n {
                if scores[(i, j)] > scores[(best, j)] {
                    best = i;
                }
            }
            if best == j {
                0
            } else {
                best + 1
            }
        })
        .collect();
    let parent: Vec<usize> = heads.iter().enumerate().map(|(j, &h)| if h == 0 { j } else { h - 1 }).collect();
    let cyclic = (0..n).any(|start| {
        let mut k = start;
        for _ in 0..n {
            if parent[k] == k {
                return false;
            }
            k = parent[k];
        }
        true
    });
    GreedyHeads {
        roots: heads.iter().filter(|&&h| h == 0).count(),
        heads,
        cyclic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_three_word_example() {
        let phi = Matrix::from_rows(&[[0.0, 5.0, 1.0], [0.0, 0.0, 4.0], [2.0, 1.0, 0.0]]);
        let tree = cle_decode(&phi);
        assert_eq!(tree.heads, vec![0, 1, 2]);
        assert_eq!(tree.score, 9.0);
        assert_eq!(tree.root(), 0);
    }

    #[test]
    fn single_word() {
        let tree = cle_decode(&Matrix::filled(1, 1, -3.5));
        assert_eq!(tree.heads, vec![0]);
        assert_eq!(tree.score, -3.5);
    }

    #[test]
    fn contraction_is_needed() {
        // words 1 and 2 prefer each other; the root bonus sits on word 0
        let phi = Matrix::from_rows(&[[5.0, 1.0, 0.0], [0.0, 0.0, 10.0], [0.0, 10.0, 0.0]]);
        let tree = cle_decode(&phi);
        assert_eq!(tree.score, 5.0 + 1.0 + 10.0);
        assert_eq!(tree.heads, vec![0, 1, 2]);
    }

    #[test]
    fn greedy_flags_cycles() {
        let one_hot = Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]);
        let g = greedy_decode(&one_hot);
        assert_eq!(g.heads, vec![0, 1, 2]);
        assert!(g.is_tree());
        let two_cycle = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let g = greedy_decode(&two_cycle);
        assert_eq!(g.heads, vec![2, 1]);
        assert!(g.cyclic);
        assert_eq!(g.roots, 0);
    }
}
