//! Factorized action heads shared by the Q-networks and actors.
//!
//! The joint action is one serving MEC per user plus, under migration, one
//! rendering MEC per requested FoV. A centralized network emits one value per
//! (user, MEC) followed by one per (FoV, MEC); a per-MEC network emits one
//! value per user followed by one per FoV.

use crate::env::{serving_sets, ActionVector};
use crate::neural::argmax;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadLayout {
    pub users: usize,
    pub mecs: usize,
    pub n_fov: usize,
    pub migration: bool,
}

impl HeadLayout {
    pub fn outputs(&self) -> usize {
        self.users * self.mecs + if self.migration { self.n_fov * self.mecs } else { 0 }
    }

    pub fn serve(&self, user: usize, mec: usize) -> usize {
        user * self.mecs + mec
    }

    pub fn render(&self, fov: usize, mec: usize) -> usize {
        self.users * self.mecs + fov * self.mecs + mec
    }

    /// Output indices whose sum is the joint value of `action`.
    pub fn selected(&self, action: &ActionVector) -> Vec<usize> {
        let mut out: Vec<usize> = action
            .serving
            .iter()
            .enumerate()
            .map(|(k, b)| self.serve(k, *b))
            .collect();
        if self.migration {
            for (q, r) in action.rendering.iter().enumerate() {
                if let Some(b) = r {
                    out.push(self.render(q, *b));
                }
            }
        }
        out
    }

    /// Best rendering MEC per requested FoV given the serving choice.
    fn best_rendering<T: Scalar>(&self, values: &[T], serving: &[usize], fovs: &[usize]) -> Vec<Option<usize>> {
        let mut rendering = vec![None; self.n_fov];
        if self.migration {
            for (q, set) in serving_sets(serving, fovs, self.n_fov).iter().enumerate() {
                if set.is_empty() {
                    continue;
                }
                let vals: Vec<T> = set.iter().map(|b| values[self.render(q, *b)]).collect();
                rendering[q] = Some(set[argmax(&vals)]);
            }
        }
        rendering
    }

    fn value_of<T: Scalar>(&self, values: &[T], serving: &[usize], fovs: &[usize]) -> (T, Vec<Option<usize>>) {
        let rendering = self.best_rendering(values, serving, fovs);
        let action = ActionVector { serving: serving.to_vec(), rendering };
        (Self::joint_value(values, &self.selected(&action)), action.rendering)
    }

    /// Approximate maximizer of the joint value: per-user argmax with the
    /// best rendering for it, then single-user moves while any move raises
    /// the joint value (rendering values can pull a user to a MEC).
    pub fn greedy<T: Scalar>(&self, values: &[T], fovs: &[usize]) -> ActionVector {
        let mut serving: Vec<usize> = (0..self.users)
            .map(|k| argmax(&values[self.serve(k, 0)..self.serve(k, 0) + self.mecs]))
            .collect();
        if self.migration {
            let (mut best, _) = self.value_of(values, &serving, fovs);
            // each accepted move strictly raises a bounded value, so this ends
            let mut improved = true;
            while improved {
                improved = false;
                for k in 0..self.users {
                    let current = serving[k];
                    for b in 0..self.mecs {
                        if b == current {
                            continue;
                        }
                        serving[k] = b;
                        let (v, _) = self.value_of(values, &serving, fovs);
                        if v > best {
                            best = v;
                            improved = true;
                            break;
                        }
                        serving[k] = current;
                    }
                }
            }
        }
        let rendering = self.best_rendering(values, &serving, fovs);
        ActionVector { serving, rendering }
    }

    pub fn joint_value<T: Scalar>(values: &[T], selected: &[usize]) -> T {
        selected.iter().map(|i| values[*i]).sum()
    }
}

/// Per-MEC head layout: index `k` scores serving user `k`, index
/// `users + q` scores rendering FoV `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalLayout {
    pub users: usize,
    pub n_fov: usize,
    pub migration: bool,
}

impl LocalLayout {
    pub fn outputs(&self) -> usize {
        self.users + if self.migration { self.n_fov } else { 0 }
    }

    /// Indices of `mec`'s share of `action`.
    pub fn selected(&self, action: &ActionVector, mec: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.users).filter(|&k| action.serving[k] == mec).collect();
        if self.migration {
            for (q, r) in action.rendering.iter().enumerate() {
                if *r == Some(mec) {
                    out.push(self.users + q);
                }
            }
        }
        out
    }

    /// Joint action from every MEC's scores: each user goes to the MEC with the
    /// highest score for it, each requested FoV to its best-scoring serving MEC.
    pub fn resolve<T: Scalar>(&self, scores: &[Vec<T>], fovs: &[usize]) -> ActionVector {
        let column = |j: usize, among: &[usize]| -> usize {
            let vals: Vec<T> = among.iter().map(|i| scores[*i][j]).collect();
            among[argmax(&vals)]
        };
        let all: Vec<usize> = (0..scores.len()).collect();
        let serving: Vec<usize> = (0..self.users).map(|k| column(k, &all)).collect();
        let mut rendering = vec![None; self.n_fov];
        if self.migration {
            for (q, set) in serving_sets(&serving, fovs, self.n_fov).iter().enumerate() {
                if !set.is_empty() {
                    rendering[q] = Some(column(self.users + q, set));
                }
            }
        }
        ActionVector { serving, rendering }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_picks_argmax_with_masked_render() {
        let l = HeadLayout { users: 2, mecs: 2, n_fov: 2, migration: true };
        assert_eq!(l.outputs(), 8);
        // both users lean to MEC 1, so FoV 1 could only render there
        let q = [0.1, 0.9, 0.5, 0.7, 0.0, 0.0, 0.5, 1.0];
        let a = l.greedy(&q, &[1, 1]);
        assert_eq!(a.serving, vec![1, 1]);
        assert_eq!(a.rendering, vec![None, Some(1)]);
        assert_eq!(l.selected(&a), vec![1, 3, 7]);
        assert_eq!(HeadLayout::joint_value(&q, &l.selected(&a)), 0.9 + 0.7 + 1.0);
        // a large enough render value at MEC 0 moves one user there
        let q = [0.1, 0.9, 0.5, 0.7, 0.0, 0.0, 5.0, 1.0];
        let a = l.greedy(&q, &[1, 1]);
        assert_eq!(a.serving, vec![0, 1]);
        assert_eq!(a.rendering, vec![None, Some(0)]);
    }

    #[test]
    fn rendering_value_pulls_serving() {
        let l = HeadLayout { users: 2, mecs: 2, n_fov: 1, migration: true };
        // both prefer serving at MEC 0 by a little, but rendering at MEC 1 is
        // worth much more, so one user moves to MEC 1
        let q = [0.2f64, 0.1, 0.2, 0.1, 0.0, 1.0];
        let a = l.greedy(&q, &[0, 0]);
        assert_eq!(a.serving, vec![1, 0]);
        assert_eq!(a.rendering, vec![Some(1)]);
        assert!((HeadLayout::joint_value(&q, &l.selected(&a)) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn greedy_ties_go_low() {
        let l = HeadLayout { users: 1, mecs: 3, n_fov: 1, migration: false };
        assert_eq!(l.greedy(&[0.2, 0.2, 0.1], &[0]).serving, vec![0]);
    }

    #[test]
    fn local_resolution() {
        let l = LocalLayout { users: 2, n_fov: 2, migration: true };
        let scores = vec![vec![0.9, 0.1, 0.0, 0.3], vec![0.2, 0.8, 0.0, 0.6]];
        let a = l.resolve(&scores, &[1, 1]);
        assert_eq!(a.serving, vec![0, 1]);
        assert_eq!(a.rendering, vec![None, Some(1)]);
        assert_eq!(l.selected(&a, 0), vec![0]);
        assert_eq!(l.selected(&a, 1), vec![1, 3]);
    }
}
