use serde::{Deserialize, Serialize};

use super::{argmax_lowest, Prediction};

/// Gini diversity index `1 - Σ p_i²`.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|&c| (c as f64 / n as f64).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        counts: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub n_classes: usize,
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn class_counts(rows: &[usize], y: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &r in rows {
        c[y[r]] += 1;
    }
    c
}

/// Best split of `rows` by weighted impurity decrease (weights relative to
/// the full training set). Ties keep the lowest feature, then the lowest
/// threshold.
fn best_split(x: &[Vec<f64>], y: &[usize], rows: &[usize], k: usize, n_total: usize) -> Option<Candidate> {
    let parent = class_counts(rows, y, k);
    let parent_imp = gini(&parent);
    if parent_imp == 0.0 {
        return None;
    }
    let n = rows.len();
    let p = x[rows[0]].len();
    let mut best: Option<Candidate> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for f in 0..p {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left = vec![0usize; k];
        let mut right = parent.clone();
        for i in 0..n - 1 {
            let r = order[i];
            left[y[r]] += 1;
            right[y[r]] -= 1;
            let (v, v_next) = (x[r][f], x[order[i + 1]][f]);
            if v == v_next {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = (n - i - 1) as f64;
            let child = (nl * gini(&left) + nr * gini(&right)) / n as f64;
            let gain = (parent_imp - child) * n as f64 / n_total as f64;
            if best.is_none_or(|b| gain > b.gain + 1e-15) {
                best = Some(Candidate {
                    gain,
                    feature: f,
                    threshold: v + (v_next - v) / 2.0,
                });
            }
        }
    }
    best.filter(|b| b.gain > 0.0)
}

impl TreeModel {
    /// Best-first CART: repeatedly splits the leaf with the largest impurity
    /// decrease until `max_splits` splits or no leaf can improve.
    pub fn fit(x: &[Vec<f64>], y: &[usize], k: usize, max_splits: usize) -> Self {
        let n = x.len();
        let all: Vec<usize> = (0..n).collect();
        let mut nodes = vec![Node::Leaf {
            counts: class_counts(&all, y, k),
        }];
        // (node id, rows, best split)
        let mut frontier: Vec<(usize, Vec<usize>, Option<Candidate>)> = vec![(0, all.clone(), best_split(x, y, &all, k, n))];
        let mut splits = 0;
        while splits < max_splits {
            let pick = frontier
                .iter()
                .enumerate()
                .filter_map(|(i, (_, _, c))| c.map(|c| (i, c.gain)))
                .fold(None::<(usize, f64)>, |acc, (i, g)| match acc {
                    Some((_, bg)) if bg >= g => acc,
                    _ => Some((i, g)),
                });
            let Some((fi, _)) = pick else { break };
            let (node, rows, cand) = frontier.remove(fi);
            let cand = cand.expect("picked candidate");
            let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x[r][cand.feature] <= cand.threshold);
            let l = nodes.len();
            nodes.push(Node::Leaf {
                counts: class_counts(&l_rows, y, k),
            });
            nodes.push(Node::Leaf {
                counts: class_counts(&r_rows, y, k),
            });
            nodes[node] = Node::Split {
                feature: cand.feature,
                threshold: cand.threshold,
                left: l,
                right: l + 1,
            };
            let lc = best_split(x, y, &l_rows, k, n);
            let rc = best_split(x, y, &r_rows, k, n);
            frontier.push((l, l_rows, lc));
            frontier.push((l + 1, r_rows, rc));
            splits += 1;
        }
        Self { n_classes: k, nodes }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    fn leaf(&self, x: &[f64]) -> &[usize] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Majority class of the reached leaf; scores are leaf class fractions.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let counts = self.leaf(x);
        let n: usize = counts.iter().sum();
        let scores: Vec<f64> = counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect();
        Prediction {
            class: argmax_lowest(&scores),
            scores,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[7, 0]), 0.0);
        assert_eq!(gini(&[5, 5]), 0.5);
        assert!((gini(&[1, 1, 1, 1]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pure_node_is_one_leaf() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let t = TreeModel::fit(&x, &[1, 1, 1], 2, 100);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[9.0]).class, 1);
    }

    #[test]
    fn threshold_split_and_split_budget() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let t = TreeModel::fit(&x, &y, 2, 100);
        assert_eq!(t.n_splits(), 1);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 9.5));

        let y2: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let t2 = TreeModel::fit(&x, &y2, 2, 3);
        assert_eq!(t2.n_splits(), 3);
    }
}
