//! Condition assignment.

use alienzoo_core::Condition;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Assignment;

/// Permuted blocks of two keep the arms within one of each other after
/// every assignment.
#[derive(Debug, Clone)]
pub enum ConditionAssigner {
    BlockRandom {
        rng: Box<ChaCha8Rng>,
        block: Vec<Condition>,
    },
    Fixed(Condition),
}

impl ConditionAssigner {
    pub fn new(assignment: Assignment, seed: u64) -> Self {
        match assignment {
            Assignment::BlockRandom => ConditionAssigner::BlockRandom {
                rng: Box::new(ChaCha8Rng::seed_from_u64(seed)),
                block: Vec::new(),
            },
            Assignment::Fixed { condition } => ConditionAssigner::Fixed(condition),
        }
    }

    /// The assigner as it stands after `done` earlier assignments.
    pub fn resume(assignment: Assignment, seed: u64, done: usize) -> Self {
        let mut a = Self::new(assignment, seed);
        for _ in 0..done {
            a.next_condition();
        }
        a
    }

    pub fn next_condition(&mut self) -> Condition {
        match self {
            ConditionAssigner::Fixed(c) => *c,
            ConditionAssigner::BlockRandom { rng, block } => {
                if block.is_empty() {
                    let mut b = vec![Condition::Control, Condition::Cfe];
                    b.shuffle(rng.as_mut());
                    *block = b;
                }
                block.pop().expect("refilled above")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_random_stays_balanced() {
        let mut a = ConditionAssigner::new(Assignment::BlockRandom, 3);
        let mut diff = 0i32;
        let seq: Vec<Condition> = (0..100).map(|_| a.next_condition()).collect();
        for c in &seq {
            diff += if *c == Condition::Cfe { 1 } else { -1 };
            assert!(diff.abs() <= 1);
        }
        assert_eq!(
            seq[..10].iter().filter(|c| **c == Condition::Cfe).count(),
            5
        );
        assert!(
            seq.windows(2).any(|w| w[0] == w[1]),
            "blocks should be shuffled"
        );
    }

    #[test]
    fn seeded_and_resumable() {
        let take =
            |mut a: ConditionAssigner, n| (0..n).map(|_| a.next_condition()).collect::<Vec<_>>();
        let full = take(ConditionAssigner::new(Assignment::BlockRandom, 9), 20);
        assert_eq!(
            full,
            take(ConditionAssigner::new(Assignment::BlockRandom, 9), 20)
        );
        assert_eq!(
            full[7..],
            take(ConditionAssigner::resume(Assignment::BlockRandom, 9, 7), 13)[..]
        );
    }

    #[test]
    fn fixed_always_returns_its_condition() {
        let mut a = ConditionAssigner::new(
            Assignment::Fixed {
                condition: Condition::Cfe,
            },
            1,
        );
        assert!((0..10).all(|_| a.next_condition() == Condition::Cfe));
    }
}
