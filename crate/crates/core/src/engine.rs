//! Multi-objective evolutionary engine.
//!
//! One generic loop hosts three survival-selection schemes: Pareto-based
//! NSGA-II (non-dominated sorting plus crowding distance), indicator-based
//! IBEA (additive epsilon indicator with an archive), and decomposition-based
//! MOEA/D with stable-matching survival (subproblems prefer convergence via
//! Tchebycheff value, solutions prefer diversity via distance to the weight
//! direction). Objectives are minimized internally; maximizing objectives
//! are negated at the problem boundary.
//!
//! The evaluation budget is exactly `population x generations`: the initial
//! population consumes one generation's worth, each breeding round another.
//! Runs are fully reproducible from the seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use thiserror::Error;

use crate::operators::{self, OperatorContext, OperatorMode, OpStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A problem exposes raw, sense-native objective values; the engine folds
/// them into internal minimized form. Evaluation must be pure within one
/// environment snapshot.
pub trait ObjectiveProblem {
    fn senses(&self) -> &[Sense];
    fn evaluate(&self, assignment: &[usize]) -> Result<Vec<f64>, String>;

    /// Constraint validity of a solution under this problem's model; feeds
    /// the per-generation validity instrumentation.
    fn is_valid(&self, assignment: &[usize]) -> bool {
        let _ = assignment;
        true
    }

    fn objective_count(&self) -> usize {
        self.senses().len()
    }
}

/// One individual: an assignment with its internal (minimized) objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub assignment: Vec<usize>,
    pub objectives: Vec<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    Nsga2,
    Ibea { kappa: f64, archive_size: usize },
    MoeadStm { neighborhood_size: usize },
    /// Single-objective baseline: equal weights over per-generation min-max
    /// normalized objectives, elitist truncation survival.
    WeightedSum,
}

impl Algorithm {
    pub fn ibea() -> Self {
        Algorithm::Ibea {
            kappa: 0.05,
            archive_size: 500,
        }
    }

    pub fn moead_stm() -> Self {
        Algorithm::MoeadStm {
            neighborhood_size: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub population_size: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub algorithm: Algorithm,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.population_size < 2 {
            return Err(EngineError::Config("population size must be >= 2".into()));
        }
        for (name, rate) in [
            ("mutation", self.mutation_rate),
            ("crossover", self.crossover_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(EngineError::Config(format!(
                    "{name} rate {rate} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("objective evaluation failed for {context}: {message}")]
    Objective { context: String, message: String },
}

/// Per-generation record for the run log.
#[derive(Debug, Clone)]
pub struct GenerationLog {
    pub generation: usize,
    pub evaluations: u64,
    pub best: Vec<f64>,
    pub median: Vec<f64>,
    pub valid_fraction: f64,
    pub repairs: u64,
    pub cascades: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Non-dominated subset of the final population, deterministically
    /// ordered.
    pub front: Vec<Solution>,
    pub final_population: Vec<Solution>,
    pub evaluations: u64,
    pub logs: Vec<GenerationLog>,
}

// ---------------------------------------------------------------------------
// Dominance
// ---------------------------------------------------------------------------

/// Pareto dominance on minimized objective vectors.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b.iter()) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Fast non-dominated sorting; returns index partitions by rank.
pub fn nondominated_sort(pop: &[Solution]) -> Vec<Vec<usize>> {
    let n = pop.len();
    let mut dominated: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    let mut fronts: Vec<Vec<usize>> = vec![Vec::new()];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&pop[i].objectives, &pop[j].objectives) {
                dominated[i].push(j);
                count[j] += 1;
            } else if dominates(&pop[j].objectives, &pop[i].objectives) {
                dominated[j].push(i);
                count[i] += 1;
            }
        }
        if count[i] == 0 {
            fronts[0].push(i);
        }
    }
    // count was finalized only after the full pass; rebuild rank 0
    fronts[0] = (0..n).filter(|&i| count[i] == 0).collect();
    let mut current = 0;
    while !fronts[current].is_empty() {
        let mut next = Vec::new();
        for &p in &fronts[current] {
            for &q in &dominated[p] {
                count[q] -= 1;
                if count[q] == 0 {
                    next.push(q);
                }
            }
        }
        fronts.push(next);
        current += 1;
    }
    fronts.pop();
    fronts
}

/// Crowding distance over one front (indices into `pop`). Boundary solutions
/// per objective get infinity; a degenerate axis contributes nothing.
pub fn crowding_distance(pop: &[Solution], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0f64; n];
    if n == 0 {
        return dist;
    }
    let objectives = pop[front[0]].objectives.len();
    for m in 0..objectives {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            pop[front[a]].objectives[m]
                .partial_cmp(&pop[front[b]].objectives[m])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(front[a].cmp(&front[b]))
        });
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let min = pop[front[order[0]]].objectives[m];
        let max = pop[front[order[n - 1]]].objectives[m];
        let span = max - min;
        if span <= 0.0 {
            continue;
        }
        for w in 1..n.saturating_sub(1) {
            let lo = pop[front[order[w - 1]]].objectives[m];
            let hi = pop[front[order[w + 1]]].objectives[m];
            dist[order[w]] += (hi - lo) / span;
        }
    }
    dist
}

/// Rank-0 subset of a population.
pub fn get_nondominated(pop: &[Solution]) -> Vec<Solution> {
    if pop.is_empty() {
        return Vec::new();
    }
    let fronts = nondominated_sort(pop);
    fronts[0].iter().map(|&i| pop[i].clone()).collect()
}

/// Weighted Tchebycheff aggregation with an epsilon floor on zero weights.
pub const WEIGHT_EPSILON: f64 = 1e-6;

pub fn tchebycheff(objectives: &[f64], weight: &[f64], ideal: &[f64]) -> f64 {
    debug_assert_eq!(objectives.len(), weight.len());
    debug_assert_eq!(objectives.len(), ideal.len());
    objectives
        .iter()
        .zip(weight.iter())
        .zip(ideal.iter())
        .map(|((o, w), z)| w.max(WEIGHT_EPSILON) * (o - z).abs())
        .fold(0.0f64, f64::max)
}

// ---------------------------------------------------------------------------
// IBEA survival
// ---------------------------------------------------------------------------

/// Additive epsilon indicator on normalized objectives: the least amount by
/// which `a` must improve to weakly dominate `b`.
fn eps_indicator(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x - y)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// IBEA environmental selection: repeatedly removes the worst-fitness member
/// with incremental fitness updates until `bound` members remain. Returns
/// the surviving indices (ascending) plus their fitness.
pub fn ibea_environmental_selection(
    pop: &[Solution],
    bound: usize,
    kappa: f64,
) -> (Vec<usize>, Vec<f64>) {
    let n = pop.len();
    let objectives = if n == 0 { 0 } else { pop[0].objectives.len() };
    // normalize each objective to [0, 1] over the set
    let mut lo = vec![f64::INFINITY; objectives];
    let mut hi = vec![f64::NEG_INFINITY; objectives];
    for s in pop {
        for (m, &v) in s.objectives.iter().enumerate() {
            lo[m] = lo[m].min(v);
            hi[m] = hi[m].max(v);
        }
    }
    let norm: Vec<Vec<f64>> = pop
        .iter()
        .map(|s| {
            s.objectives
                .iter()
                .enumerate()
                .map(|(m, &v)| {
                    let span = hi[m] - lo[m];
                    if span > 0.0 {
                        (v - lo[m]) / span
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut indicator = vec![vec![0.0f64; n]; n];
    let mut c = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                indicator[i][j] = eps_indicator(&norm[i], &norm[j]);
                c = c.max(indicator[i][j].abs());
            }
        }
    }
    if c <= 0.0 {
        c = 1.0;
    }
    let scale = c * kappa;
    let mut fitness = vec![0.0f64; n];
    for (x, fit) in fitness.iter_mut().enumerate() {
        for (y, row) in indicator.iter().enumerate() {
            if x != y {
                *fit -= (-row[x] / scale).exp();
            }
        }
    }
    let mut alive: Vec<bool> = vec![true; n];
    let mut alive_count = n;
    while alive_count > bound {
        let worst = (0..n)
            .filter(|&i| alive[i])
            .min_by(|&a, &b| {
                fitness[a]
                    .partial_cmp(&fitness[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            })
            .expect("non-empty");
        alive[worst] = false;
        alive_count -= 1;
        for x in 0..n {
            if alive[x] && x != worst {
                fitness[x] += (-indicator[worst][x] / scale).exp();
            }
        }
    }
    let survivors: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    let fit = survivors.iter().map(|&i| fitness[i]).collect();
    (survivors, fit)
}

// ---------------------------------------------------------------------------
// MOEA/D-STM survival
// ---------------------------------------------------------------------------

/// Evenly distributed two-objective weight vectors.
pub fn weight_vectors(count: usize) -> Vec<[f64; 2]> {
    (0..count)
        .map(|i| {
            let t = if count > 1 {
                i as f64 / (count - 1) as f64
            } else {
                0.5
            };
            [t, 1.0 - t]
        })
        .collect()
}

/// For each weight vector, the indices of its `t` nearest vectors.
pub fn neighborhoods(weights: &[[f64; 2]], t: usize) -> Vec<Vec<usize>> {
    let n = weights.len();
    (0..n)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                let da = (weights[i][0] - weights[a][0]).powi(2)
                    + (weights[i][1] - weights[a][1]).powi(2);
                let db = (weights[i][0] - weights[b][0]).powi(2)
                    + (weights[i][1] - weights[b][1]).powi(2);
                da.partial_cmp(&db)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            order.truncate(t.min(n));
            order
        })
        .collect()
}

/// Perpendicular distance from a translated objective vector to the ray
/// along a weight vector; the diversity measure solutions rank subproblems
/// by.
fn perpendicular_to_weight(obj: &[f64], weight: &[f64; 2], ideal: &[f64]) -> f64 {
    let d = [obj[0] - ideal[0], obj[1] - ideal[1]];
    let wnorm2 = weight[0] * weight[0] + weight[1] * weight[1];
    let t = (d[0] * weight[0] + d[1] * weight[1]) / wnorm2;
    let px = d[0] - t * weight[0];
    let py = d[1] - t * weight[1];
    (px * px + py * py).sqrt()
}

/// Stable matching between subproblems and candidate solutions.
///
/// Subproblems rank candidates by ascending Tchebycheff value (convergence),
/// candidates rank subproblems by ascending perpendicular distance to the
/// weight direction (diversity). Deferred acceptance with subproblems
/// proposing returns one matched candidate per subproblem; the matching has
/// no blocking pair under those preference lists.
pub fn stable_matching(
    candidates: &[Solution],
    weights: &[[f64; 2]],
    ideal: &[f64],
) -> Vec<usize> {
    let np = weights.len();
    let nc = candidates.len();
    assert!(nc >= np, "need at least one candidate per subproblem");

    // score matrices up front; the sorts only shuffle indices
    let tch: Vec<Vec<f64>> = (0..np)
        .map(|p| {
            (0..nc)
                .map(|c| tchebycheff(&candidates[c].objectives, &weights[p], ideal))
                .collect()
        })
        .collect();
    let dist: Vec<Vec<f64>> = (0..nc)
        .map(|c| {
            (0..np)
                .map(|p| perpendicular_to_weight(&candidates[c].objectives, &weights[p], ideal))
                .collect()
        })
        .collect();

    // subproblem preference lists
    let sub_pref: Vec<Vec<usize>> = (0..np)
        .map(|p| {
            let mut order: Vec<usize> = (0..nc).collect();
            order.sort_by(|&a, &b| {
                tch[p][a]
                    .partial_cmp(&tch[p][b])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            order
        })
        .collect();
    // candidate ranking of subproblems, lower rank = preferred
    let mut cand_rank = vec![vec![0usize; np]; nc];
    for (c, ranks) in cand_rank.iter_mut().enumerate() {
        let mut order: Vec<usize> = (0..np).collect();
        order.sort_by(|&a, &b| {
            dist[c][a]
                .partial_cmp(&dist[c][b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for (rank, &p) in order.iter().enumerate() {
            ranks[p] = rank;
        }
    }

    let mut matched_sub: Vec<Option<usize>> = vec![None; np]; // subproblem -> candidate
    let mut matched_cand: Vec<Option<usize>> = vec![None; nc]; // candidate -> subproblem
    let mut next_choice = vec![0usize; np];
    let mut free: Vec<usize> = (0..np).rev().collect();
    while let Some(p) = free.pop() {
        let choice = next_choice[p];
        debug_assert!(choice < nc, "subproblem exhausted its list");
        let c = sub_pref[p][choice];
        next_choice[p] += 1;
        match matched_cand[c] {
            None => {
                matched_cand[c] = Some(p);
                matched_sub[p] = Some(c);
            }
            Some(current) => {
                if cand_rank[c][p] < cand_rank[c][current] {
                    matched_cand[c] = Some(p);
                    matched_sub[p] = Some(c);
                    matched_sub[current] = None;
                    free.push(current);
                } else {
                    free.push(p);
                }
            }
        }
    }
    matched_sub.into_iter().map(|m| m.unwrap()).collect()
}

// ---------------------------------------------------------------------------
// The run loop
// ---------------------------------------------------------------------------

struct Evaluator<'a> {
    problem: &'a dyn ObjectiveProblem,
    evaluations: u64,
}

impl Evaluator<'_> {
    fn evaluate(&mut self, assignment: Vec<usize>) -> Result<Solution, EngineError> {
        let raw = self
            .problem
            .evaluate(&assignment)
            .map_err(|message| EngineError::Objective {
                context: format!("assignment {assignment:?}"),
                message,
            })?;
        let objectives: Vec<f64> = raw
            .iter()
            .zip(self.problem.senses().iter())
            .map(|(&v, s)| match s {
                Sense::Minimize => v,
                Sense::Maximize => -v,
            })
            .collect();
        let valid = self.problem.is_valid(&assignment);
        self.evaluations += 1;
        Ok(Solution {
            assignment,
            objectives,
            valid,
        })
    }
}

/// Equal-weight fitness over min-max normalized objectives; lower is better.
fn weighted_sum_fitness(pop: &[Solution]) -> Vec<f64> {
    if pop.is_empty() {
        return Vec::new();
    }
    let objectives = pop[0].objectives.len();
    let mut lo = vec![f64::INFINITY; objectives];
    let mut hi = vec![f64::NEG_INFINITY; objectives];
    for s in pop {
        for (m, &v) in s.objectives.iter().enumerate() {
            lo[m] = lo[m].min(v);
            hi[m] = hi[m].max(v);
        }
    }
    pop.iter()
        .map(|s| {
            s.objectives
                .iter()
                .enumerate()
                .map(|(m, &v)| {
                    let span = hi[m] - lo[m];
                    if span > 0.0 {
                        (v - lo[m]) / span
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                / objectives as f64
        })
        .collect()
}

fn log_generation(
    logs: &mut Vec<GenerationLog>,
    generation: usize,
    evaluations: u64,
    pop: &[Solution],
    stats: OpStats,
) {
    let objectives = pop[0].objectives.len();
    let mut best = vec![f64::INFINITY; objectives];
    let mut median = vec![0.0; objectives];
    for m in 0..objectives {
        let mut vals: Vec<f64> = pop.iter().map(|s| s.objectives[m]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        best[m] = vals[0];
        median[m] = vals[vals.len() / 2];
    }
    let valid_fraction = pop.iter().filter(|s| s.valid).count() as f64 / pop.len() as f64;
    logs.push(GenerationLog {
        generation,
        evaluations,
        best,
        median,
        valid_fraction,
        repairs: stats.repairs,
        cascades: stats.cascades,
    });
}

/// Binary tournament by a strict "better" predicate, ties by lower index.
fn tournament(
    rng: &mut ChaCha8Rng,
    n: usize,
    better: &dyn Fn(usize, usize) -> bool,
) -> usize {
    let a = rng.random_range(0..n);
    let b = rng.random_range(0..n);
    if better(b, a) {
        b
    } else {
        a
    }
}

/// Runs the configured algorithm to its evaluation budget and returns the
/// final population's non-dominated subset plus per-generation logs.
pub fn run(
    problem: &dyn ObjectiveProblem,
    ctx: &OperatorContext<'_>,
    cfg: &RunConfig,
) -> Result<RunResult, EngineError> {
    cfg.validate()?;
    let pop_size = cfg.population_size;
    let budget = (pop_size * cfg.generations.max(1)) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut evaluator = Evaluator {
        problem,
        evaluations: 0,
    };
    let mut logs = Vec::new();

    // Initialization: random solutions; with dependency-aware operators each
    // gene is mutated at rate 1, guaranteeing a valid start.
    let mut init_stats = OpStats::default();
    let mut population: Vec<Solution> = Vec::with_capacity(pop_size);
    for _ in 0..pop_size {
        let mut assignment = operators::random_assignment(ctx.spec, &mut rng);
        if ctx.mode == OperatorMode::DependencyAware {
            init_stats.absorb(operators::mutate(&mut assignment, 1.0, ctx, &mut rng));
        }
        population.push(evaluator.evaluate(assignment)?);
    }
    log_generation(&mut logs, 0, evaluator.evaluations, &population, init_stats);

    // Algorithm state.
    let weights = weight_vectors(pop_size);
    let hood = match &cfg.algorithm {
        Algorithm::MoeadStm { neighborhood_size } => neighborhoods(&weights, *neighborhood_size),
        _ => Vec::new(),
    };
    let mut ideal = vec![f64::INFINITY; problem.objective_count()];
    let update_ideal = |ideal: &mut Vec<f64>, pop: &[Solution]| {
        for s in pop {
            for (m, &v) in s.objectives.iter().enumerate() {
                ideal[m] = ideal[m].min(v);
            }
        }
    };
    update_ideal(&mut ideal, &population);
    let mut archive: Vec<Solution> = Vec::new(); // IBEA only

    let mut generation = 0usize;
    while evaluator.evaluations < budget {
        generation += 1;
        let mut stats = OpStats::default();

        match &cfg.algorithm {
            Algorithm::Nsga2 => {
                let fronts = nondominated_sort(&population);
                let mut rank = vec![0usize; population.len()];
                let mut crowd = vec![0.0f64; population.len()];
                for (r, front) in fronts.iter().enumerate() {
                    let d = crowding_distance(&population, front);
                    for (k, &i) in front.iter().enumerate() {
                        rank[i] = r;
                        crowd[i] = d[k];
                    }
                }
                let better = |a: usize, b: usize| {
                    rank[a] < rank[b] || (rank[a] == rank[b] && crowd[a] > crowd[b])
                };
                let mut offspring: Vec<Solution> = Vec::with_capacity(pop_size);
                while offspring.len() < pop_size {
                    let p1 = tournament(&mut rng, population.len(), &better);
                    let p2 = tournament(&mut rng, population.len(), &better);
                    let (c1, c2, s) = operators::crossover(
                        &population[p1].assignment,
                        &population[p2].assignment,
                        cfg.crossover_rate,
                        ctx,
                        &mut rng,
                    );
                    stats.absorb(s);
                    for mut c in [c1, c2] {
                        if offspring.len() >= pop_size {
                            break;
                        }
                        stats.absorb(operators::mutate(&mut c, cfg.mutation_rate, ctx, &mut rng));
                        offspring.push(evaluator.evaluate(c)?);
                    }
                }
                let mut union = population;
                union.extend(offspring);
                let fronts = nondominated_sort(&union);
                let mut next: Vec<Solution> = Vec::with_capacity(pop_size);
                for front in fronts {
                    if next.len() + front.len() <= pop_size {
                        next.extend(front.iter().map(|&i| union[i].clone()));
                    } else {
                        let d = crowding_distance(&union, &front);
                        let mut order: Vec<usize> = (0..front.len()).collect();
                        order.sort_by(|&a, &b| {
                            d[b].partial_cmp(&d[a])
                                .unwrap_or(std::cmp::Ordering::Equal)
                                .then(front[a].cmp(&front[b]))
                        });
                        for &k in order.iter().take(pop_size - next.len()) {
                            next.push(union[front[k]].clone());
                        }
                        break;
                    }
                }
                population = next;
            }
            Algorithm::Ibea { kappa, archive_size } => {
                // union with the archive, trim, mate from the survivors
                let mut union = archive;
                union.extend(population.iter().cloned());
                let bound = (*archive_size).min(union.len());
                let (survivors, fitness) = ibea_environmental_selection(&union, bound, *kappa);
                archive = survivors.iter().map(|&i| union[i].clone()).collect();
                let better = |a: usize, b: usize| fitness[a] > fitness[b];
                let mut offspring: Vec<Solution> = Vec::with_capacity(pop_size);
                while offspring.len() < pop_size {
                    let p1 = tournament(&mut rng, archive.len(), &better);
                    let p2 = tournament(&mut rng, archive.len(), &better);
                    let (c1, c2, s) = operators::crossover(
                        &archive[p1].assignment,
                        &archive[p2].assignment,
                        cfg.crossover_rate,
                        ctx,
                        &mut rng,
                    );
                    stats.absorb(s);
                    for mut c in [c1, c2] {
                        if offspring.len() >= pop_size {
                            break;
                        }
                        stats.absorb(operators::mutate(&mut c, cfg.mutation_rate, ctx, &mut rng));
                        offspring.push(evaluator.evaluate(c)?);
                    }
                }
                population = offspring;
            }
            Algorithm::MoeadStm { .. } => {
                let mut offspring: Vec<Solution> = Vec::with_capacity(pop_size);
                for b in hood.iter().take(pop_size) {
                    let p1 = b[rng.random_range(0..b.len())];
                    let p2 = b[rng.random_range(0..b.len())];
                    let (c1, _, s) = operators::crossover(
                        &population[p1].assignment,
                        &population[p2].assignment,
                        cfg.crossover_rate,
                        ctx,
                        &mut rng,
                    );
                    stats.absorb(s);
                    let mut c = c1;
                    stats.absorb(operators::mutate(&mut c, cfg.mutation_rate, ctx, &mut rng));
                    offspring.push(evaluator.evaluate(c)?);
                }
                update_ideal(&mut ideal, &offspring);
                let mut candidates = population;
                candidates.extend(offspring);
                let matched = stable_matching(&candidates, &weights, &ideal);
                population = matched.iter().map(|&c| candidates[c].clone()).collect();
            }
            Algorithm::WeightedSum => {
                let fitness = weighted_sum_fitness(&population);
                let better = |a: usize, b: usize| fitness[a] < fitness[b];
                let mut offspring: Vec<Solution> = Vec::with_capacity(pop_size);
                while offspring.len() < pop_size {
                    let p1 = tournament(&mut rng, population.len(), &better);
                    let p2 = tournament(&mut rng, population.len(), &better);
                    let (c1, c2, s) = operators::crossover(
                        &population[p1].assignment,
                        &population[p2].assignment,
                        cfg.crossover_rate,
                        ctx,
                        &mut rng,
                    );
                    stats.absorb(s);
                    for mut c in [c1, c2] {
                        if offspring.len() >= pop_size {
                            break;
                        }
                        stats.absorb(operators::mutate(&mut c, cfg.mutation_rate, ctx, &mut rng));
                        offspring.push(evaluator.evaluate(c)?);
                    }
                }
                let mut union = population;
                union.extend(offspring);
                let fitness = weighted_sum_fitness(&union);
                let mut order: Vec<usize> = (0..union.len()).collect();
                order.sort_by(|&a, &b| {
                    fitness[a]
                        .partial_cmp(&fitness[b])
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                });
                population = order
                    .into_iter()
                    .take(pop_size)
                    .map(|i| union[i].clone())
                    .collect();
            }
        }
        update_ideal(&mut ideal, &population);
        log_generation(&mut logs, generation, evaluator.evaluations, &population, stats);
    }

    // For IBEA the surviving elites live in the archive; fold them back into
    // a population-sized final selection.
    if let Algorithm::Ibea { kappa, .. } = &cfg.algorithm {
        let mut union = archive;
        union.extend(population.iter().cloned());
        let (survivors, _) = ibea_environmental_selection(&union, pop_size, *kappa);
        population = survivors.into_iter().map(|i| union[i].clone()).collect();
    }

    debug_assert_eq!(evaluator.evaluations, budget);
    let mut front = get_nondominated(&population);
    front.sort_by(|a, b| {
        a.objectives
            .partial_cmp(&b.objectives)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.assignment.cmp(&b.assignment))
    });
    Ok(RunResult {
        front,
        final_population: population,
        evaluations: evaluator.evaluations,
        logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sol(objs: &[f64]) -> Solution {
        Solution {
            assignment: Vec::new(),
            objectives: objs.to_vec(),
            valid: true,
        }
    }

    #[test]
    fn sort_splits_simple_population_into_two_ranks() {
        let pop = vec![sol(&[1.0, 2.0]), sol(&[2.0, 1.0]), sol(&[3.0, 3.0])];
        let fronts = nondominated_sort(&pop);
        assert_eq!(fronts.len(), 2);
        assert_eq!(fronts[0], vec![0, 1]);
        assert_eq!(fronts[1], vec![2]);
    }

    #[test]
    fn identical_points_share_rank_zero() {
        let pop = vec![sol(&[1.0, 1.0]), sol(&[1.0, 1.0]), sol(&[1.0, 1.0])];
        let fronts = nondominated_sort(&pop);
        assert_eq!(fronts.len(), 1);
        assert_eq!(fronts[0].len(), 3);
    }

    #[test]
    fn singleton_population_is_one_front() {
        let pop = vec![sol(&[5.0, 5.0])];
        let fronts = nondominated_sort(&pop);
        assert_eq!(fronts, vec![vec![0]]);
        assert_eq!(get_nondominated(&pop).len(), 1);
    }

    #[test]
    fn rank_zero_matches_quadratic_oracle_on_random_points() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pop: Vec<Solution> = (0..100)
            .map(|_| sol(&[rng.random::<f64>(), rng.random::<f64>()]))
            .collect();
        let fronts = nondominated_sort(&pop);
        let oracle: Vec<usize> = (0..pop.len())
            .filter(|&i| {
                !(0..pop.len()).any(|j| dominates(&pop[j].objectives, &pop[i].objectives))
            })
            .collect();
        assert_eq!(fronts[0], oracle);
    }

    #[test]
    fn crowding_boundaries_are_infinite() {
        let pop = vec![sol(&[0.0, 2.0]), sol(&[2.0, 0.0])];
        let d = crowding_distance(&pop, &[0, 1]);
        assert!(d[0].is_infinite() && d[1].is_infinite());
    }

    #[test]
    fn crowding_middle_point_gets_gap_sum() {
        // three evenly spaced collinear points: middle gets 1.0 per objective
        let pop = vec![sol(&[0.0, 4.0]), sol(&[1.0, 3.0]), sol(&[2.0, 2.0])];
        let d = crowding_distance(&pop, &[0, 1, 2]);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert!((d[1] - 2.0).abs() < 1e-12); // (2-0)/2 per axis, two axes
    }

    #[test]
    fn crowding_degenerate_axis_contributes_zero() {
        let pop = vec![sol(&[0.0, 1.0]), sol(&[1.0, 1.0]), sol(&[2.0, 1.0])];
        let d = crowding_distance(&pop, &[0, 1, 2]);
        assert!((d[1] - 1.0).abs() < 1e-12); // only the first axis counts
    }

    #[test]
    fn tchebycheff_values() {
        assert_eq!(tchebycheff(&[3.0, 4.0], &[0.5, 0.5], &[3.0, 4.0]), 0.0);
        let v = tchebycheff(&[2.0, 5.0], &[1.0, 0.0], &[0.0, 0.0]);
        assert!((v - 2.0).abs() < 1e-5, "dominated term negligible, got {v}");
        let v = tchebycheff(&[2.0, 5.0], &[0.5, 0.5], &[0.0, 0.0]);
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn ibea_fitness_prefers_dominating_solution() {
        let pop = vec![sol(&[1.0, 1.0]), sol(&[2.0, 2.0])];
        let (survivors, fitness) = ibea_environmental_selection(&pop, 2, 0.05);
        assert_eq!(survivors, vec![0, 1]);
        assert!(fitness[0] > fitness[1]);
    }

    #[test]
    fn ibea_single_solution_survives() {
        let pop = vec![sol(&[1.0, 2.0])];
        let (survivors, _) = ibea_environmental_selection(&pop, 1, 0.05);
        assert_eq!(survivors, vec![0]);
    }

    #[test]
    fn ibea_four_point_selection_matches_reference_recurrence() {
        // independent re-execution of the published fitness/removal scheme
        let points = [[0.0, 1.0], [1.0, 0.0], [0.4, 0.45], [0.9, 0.9]];
        let pop: Vec<Solution> = points.iter().map(|p| sol(p)).collect();
        let kappa = 0.05;

        // reference: direct recurrence over the same normalized objectives
        let lo = [0.0, 0.0];
        let hi = [1.0, 1.0];
        let norm: Vec<[f64; 2]> = points
            .iter()
            .map(|p| {
                [
                    (p[0] - lo[0]) / (hi[0] - lo[0]),
                    (p[1] - lo[1]) / (hi[1] - lo[1]),
                ]
            })
            .collect();
        let ind = |a: usize, b: usize| -> f64 {
            (norm[a][0] - norm[b][0]).max(norm[a][1] - norm[b][1])
        };
        let mut c = 0.0f64;
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    c = c.max(ind(a, b).abs());
                }
            }
        }
        let mut fit = [0.0f64; 4];
        for x in 0..4 {
            for y in 0..4 {
                if x != y {
                    fit[x] -= (-ind(y, x) / (c * kappa)).exp();
                }
            }
        }
        let worst = (0..4)
            .min_by(|&a, &b| fit[a].partial_cmp(&fit[b]).unwrap())
            .unwrap();
        // removing one member must drop exactly the reference's worst
        let (survivors, _) = ibea_environmental_selection(&pop, 3, kappa);
        assert_eq!(survivors.len(), 3);
        assert!(!survivors.contains(&worst));
        // the dominated interior point is that worst one
        assert_eq!(worst, 3);
    }

    #[test]
    fn unanimous_two_by_two_matching() {
        // candidate 0 is best for both subproblems, candidate 1 second;
        // subproblem preferences break the tie via the diversity ranking
        let cands = vec![sol(&[0.1, 0.1]), sol(&[0.5, 0.5]), sol(&[2.0, 2.0])];
        let weights = vec![[1.0, 0.0], [0.0, 1.0]];
        let ideal = vec![0.0, 0.0];
        let matched = stable_matching(&cands, &weights, &ideal);
        assert_eq!(matched.len(), 2);
        assert_ne!(matched[0], matched[1]);
        assert!(matched.contains(&0));
    }

    #[test]
    fn three_by_three_matching_is_stable_against_enumeration() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let cands: Vec<Solution> = (0..6)
                .map(|_| sol(&[rng.random::<f64>(), rng.random::<f64>()]))
                .collect();
            let weights = vec![[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]];
            let ideal = vec![0.0, 0.0];
            let matched = stable_matching(&cands, &weights, &ideal);
            // no blocking pair: a subproblem p and candidate c both preferring
            // each other over their current matches
            let tch = |p: usize, c: usize| tchebycheff(&cands[c].objectives, &weights[p], &ideal);
            let dist =
                |p: usize, c: usize| perpendicular_to_weight(&cands[c].objectives, &weights[p], &ideal);
            let assigned_to: Vec<Option<usize>> = (0..cands.len())
                .map(|c| matched.iter().position(|&mc| mc == c))
                .collect();
            for p in 0..weights.len() {
                for c in 0..cands.len() {
                    if matched[p] == c {
                        continue;
                    }
                    let p_prefers_c = tch(p, c) < tch(p, matched[p]);
                    let c_prefers_p = match assigned_to[c] {
                        Some(cur) => dist(cur, c) > dist(p, c),
                        None => true,
                    };
                    assert!(
                        !(p_prefers_c && c_prefers_p),
                        "blocking pair p={p} c={c}"
                    );
                }
            }
        }
    }

    #[test]
    fn single_gene_front_equals_brute_force_pareto_set() {
        use crate::dependency::analyze;
        use crate::operators::{OperatorContext, OperatorMode};
        use crate::reference::builders::{ModelBuilder, RelationSpec};
        use crate::transpose::transpose;

        struct OneGene;
        impl ObjectiveProblem for OneGene {
            fn senses(&self) -> &[Sense] {
                &[Sense::Minimize, Sense::Minimize]
            }
            fn evaluate(&self, a: &[usize]) -> Result<Vec<f64>, String> {
                // conflicting pair over six options with an interior knee
                let v = a[0] as f64;
                Ok(vec![v, (5.0 - v) * (5.0 - v) / 5.0])
            }
        }

        let mut b = ModelBuilder::new("r");
        b.numeric("n", "r", RelationSpec::Mandatory, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let m = b.build();
        let (grown, spec) = transpose(&m);
        let (_, trees, chains) = analyze(&grown, &spec).unwrap();
        let ctx = OperatorContext {
            spec: &spec,
            trees: &trees,
            chains: &chains,
            mode: OperatorMode::DependencyAware,
        };
        let cfg = RunConfig {
            population_size: 12,
            generations: 6, // 72 evaluations over a 6-point space
            mutation_rate: 0.5,
            crossover_rate: 0.9,
            algorithm: Algorithm::Nsga2,
            seed: 4,
        };
        let result = run(&OneGene, &ctx, &cfg).unwrap();

        // brute force over every option
        let all: Vec<Solution> = (0..6)
            .map(|o| {
                let objectives = OneGene.evaluate(&[o]).unwrap();
                Solution {
                    assignment: vec![o],
                    objectives,
                    valid: true,
                }
            })
            .collect();
        let oracle: std::collections::BTreeSet<Vec<usize>> = get_nondominated(&all)
            .into_iter()
            .map(|s| s.assignment)
            .collect();
        let found: std::collections::BTreeSet<Vec<usize>> = result
            .front
            .into_iter()
            .map(|s| s.assignment)
            .collect();
        assert_eq!(found, oracle);
    }

    #[test]
    fn zero_generation_budget_is_init_only() {
        use crate::dependency::analyze;
        use crate::operators::{OperatorContext, OperatorMode};
        use crate::reference::builders::{ModelBuilder, RelationSpec};
        use crate::transpose::transpose;

        struct Sum;
        impl ObjectiveProblem for Sum {
            fn senses(&self) -> &[Sense] {
                &[Sense::Minimize, Sense::Minimize]
            }
            fn evaluate(&self, a: &[usize]) -> Result<Vec<f64>, String> {
                Ok(vec![a[0] as f64, 10.0 - a[0] as f64])
            }
        }
        let mut b = ModelBuilder::new("r");
        b.numeric("n", "r", RelationSpec::Mandatory, &[1.0, 2.0, 3.0]);
        let m = b.build();
        let (grown, spec) = transpose(&m);
        let (_, trees, chains) = analyze(&grown, &spec).unwrap();
        let ctx = OperatorContext {
            spec: &spec,
            trees: &trees,
            chains: &chains,
            mode: OperatorMode::DependencyAware,
        };
        let cfg = RunConfig {
            population_size: 10,
            generations: 0,
            mutation_rate: 0.1,
            crossover_rate: 0.9,
            algorithm: Algorithm::Nsga2,
            seed: 1,
        };
        let result = run(&Sum, &ctx, &cfg).unwrap();
        assert_eq!(result.evaluations, 10, "init only");
        assert_eq!(result.logs.len(), 1);
        assert!(!result.front.is_empty());
    }

    #[test]
    fn weight_vector_lattice_is_uniform() {
        let w = weight_vectors(5);
        assert_eq!(w[0], [0.0, 1.0]);
        assert_eq!(w[4], [1.0, 0.0]);
        assert!((w[2][0] - 0.5).abs() < 1e-12);
        for v in &w {
            assert!((v[0] + v[1] - 1.0).abs() < 1e-12);
        }
    }
}
