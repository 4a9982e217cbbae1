//! Knee-point selection from a two-objective non-dominated front.
//!
//! The knee is the solution with the largest signed perpendicular distance
//! to the line through the two extreme solutions (those holding the worst
//! value on each objective). Points on the ideal side of the line get a
//! positive distance, so the argmax sits in the bulge of the front, the
//! balanced trade-off region. With several maximizers one is picked
//! uniformly at random.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::Solution;

#[derive(Debug, Error)]
pub enum KneeError {
    #[error("knee selection needs a non-empty front")]
    EmptyFront,
    #[error("knee selection is defined for exactly two objectives, got {0}")]
    ObjectiveCount(usize),
    #[error("degenerate line coefficients (a, b) = (0, 0)")]
    DegenerateLine,
}

#[derive(Debug, Clone)]
pub struct KneeResult {
    pub chosen: Solution,
    pub chosen_index: usize,
    pub distance: f64,
    /// Worst solution per objective, in objective order.
    pub extremes: [Solution; 2],
    pub line: LineCoefficients,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Signed perpendicular distance: `eps = a*f + b*g + c`, positive exactly
/// when `eps < 0` (the preferable side under minimization).
pub fn perpendicular_distance(point: &[f64], line: &LineCoefficients) -> Result<f64, KneeError> {
    if line.a == 0.0 && line.b == 0.0 {
        return Err(KneeError::DegenerateLine);
    }
    let eps = line.a * point[0] + line.b * point[1] + line.c;
    let magnitude = eps.abs() / (line.a * line.a + line.b * line.b).sqrt();
    Ok(if eps < 0.0 { magnitude } else { -magnitude })
}

/// Index of the solution with the worst (largest, objectives minimized)
/// value on objective `m`; ties resolve to the lexicographically smallest
/// objective vector.
fn worst_on(front: &[Solution], m: usize) -> usize {
    let mut best = 0;
    for i in 1..front.len() {
        let cur = &front[i].objectives;
        let sel = &front[best].objectives;
        let better = match cur[m].partial_cmp(&sel[m]) {
            Some(std::cmp::Ordering::Greater) => true,
            Some(std::cmp::Ordering::Equal) => {
                matches!(
                    cur.partial_cmp(sel),
                    Some(std::cmp::Ordering::Less)
                )
            }
            _ => false,
        };
        if better {
            best = i;
        }
    }
    best
}

/// Selects the knee solution of a front of minimized two-objective
/// solutions. Ties on the maximum distance break uniformly at random from
/// the seeded source; a degenerate line (coinciding extremes) returns the
/// first solution with distance zero.
pub fn select_knee(front: &[Solution], rng: &mut ChaCha8Rng) -> Result<KneeResult, KneeError> {
    if front.is_empty() {
        return Err(KneeError::EmptyFront);
    }
    let objectives = front[0].objectives.len();
    if objectives != 2 {
        return Err(KneeError::ObjectiveCount(objectives));
    }

    let ex0 = worst_on(front, 0);
    let ex1 = worst_on(front, 1);
    let p = &front[ex0].objectives;
    let q = &front[ex1].objectives;
    // Line through p and q: a*x + b*y + c = 0 with a = y2-y1, b = x1-x2.
    // With p the worst on the first objective and q on the second, both
    // coefficients come out non-negative, putting the ideal region on the
    // negative side.
    let line = LineCoefficients {
        a: q[1] - p[1],
        b: p[0] - q[0],
        c: q[0] * p[1] - p[0] * q[1],
    };

    if line.a == 0.0 && line.b == 0.0 {
        return Ok(KneeResult {
            chosen: front[0].clone(),
            chosen_index: 0,
            distance: 0.0,
            extremes: [front[ex0].clone(), front[ex1].clone()],
            line,
        });
    }

    let mut best_distance = f64::NEG_INFINITY;
    let mut maximizers: Vec<usize> = Vec::new();
    for (i, s) in front.iter().enumerate() {
        let d = perpendicular_distance(&s.objectives, &line)?;
        if d > best_distance {
            best_distance = d;
            maximizers.clear();
            maximizers.push(i);
        } else if d == best_distance {
            maximizers.push(i);
        }
    }
    let chosen_index = maximizers[rng.random_range(0..maximizers.len())];
    Ok(KneeResult {
        chosen: front[chosen_index].clone(),
        chosen_index,
        distance: best_distance,
        extremes: [front[ex0].clone(), front[ex1].clone()],
        line,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sol(objs: [f64; 2]) -> Solution {
        Solution {
            assignment: Vec::new(),
            objectives: objs.to_vec(),
            valid: true,
        }
    }

    #[test]
    fn signed_distance_follows_the_side_rule() {
        // line x + y - 1 = 0
        let line = LineCoefficients {
            a: 1.0,
            b: 1.0,
            c: -1.0,
        };
        let d = perpendicular_distance(&[0.0, 0.0], &line).unwrap();
        assert!((d - 1.0 / 2f64.sqrt()).abs() < 1e-12, "left side positive");
        let d = perpendicular_distance(&[1.0, 1.0], &line).unwrap();
        assert!((d + 1.0 / 2f64.sqrt()).abs() < 1e-12, "right side negative");
        let d = perpendicular_distance(&[0.5, 0.5], &line).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn degenerate_coefficients_are_rejected() {
        let line = LineCoefficients {
            a: 0.0,
            b: 0.0,
            c: 1.0,
        };
        assert!(perpendicular_distance(&[1.0, 1.0], &line).is_err());
    }

    #[test]
    fn bulge_point_is_the_knee() {
        let front = vec![sol([0.0, 2.0]), sol([1.0, 0.2]), sol([2.0, 0.0])];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = select_knee(&front, &mut rng).unwrap();
        assert_eq!(k.chosen_index, 1);
        assert!(k.distance > 0.0);
        // extremes are the per-objective worst points
        assert_eq!(k.extremes[0].objectives, vec![2.0, 0.0]);
        assert_eq!(k.extremes[1].objectives, vec![0.0, 2.0]);
    }

    #[test]
    fn two_point_front_ties_and_picks_randomly_but_in_set() {
        let front = vec![sol([0.0, 1.0]), sol([1.0, 0.0])];
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = select_knee(&front, &mut rng).unwrap();
            assert_eq!(k.distance, 0.0);
            assert!(k.chosen_index < 2);
        }
    }

    #[test]
    fn singleton_front_returns_it_with_zero_distance() {
        let front = vec![sol([3.0, 4.0])];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = select_knee(&front, &mut rng).unwrap();
        assert_eq!(k.chosen_index, 0);
        assert_eq!(k.distance, 0.0);
    }

    #[test]
    fn unique_interior_maximum_is_seed_independent() {
        let front = vec![sol([0.0, 3.0]), sol([0.5, 0.5]), sol([3.0, 0.0])];
        let mut picks = std::collections::BTreeSet::new();
        for seed in 0..25 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            picks.insert(select_knee(&front, &mut rng).unwrap().chosen_index);
        }
        assert_eq!(picks.len(), 1);
        assert!(picks.contains(&1));
    }

    #[test]
    fn translation_leaves_the_argmax_unchanged() {
        let front = vec![
            sol([0.0, 2.0]),
            sol([0.3, 1.0]),
            sol([1.0, 0.3]),
            sol([2.0, 0.0]),
        ];
        let shifted: Vec<Solution> = front
            .iter()
            .map(|s| sol([s.objectives[0] + 5.0, s.objectives[1] - 3.0]))
            .collect();
        let mut rng1 = ChaCha8Rng::seed_from_u64(2);
        let mut rng2 = ChaCha8Rng::seed_from_u64(2);
        let k1 = select_knee(&front, &mut rng1).unwrap();
        let k2 = select_knee(&shifted, &mut rng2).unwrap();
        assert_eq!(k1.chosen_index, k2.chosen_index);
    }

    #[test]
    fn empty_front_and_wrong_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            select_knee(&[], &mut rng),
            Err(KneeError::EmptyFront)
        ));
        let three = vec![Solution {
            assignment: vec![],
            objectives: vec![1.0, 2.0, 3.0],
            valid: true,
        }];
        assert!(matches!(
            select_knee(&three, &mut rng),
            Err(KneeError::ObjectiveCount(3))
        ));
    }
}
