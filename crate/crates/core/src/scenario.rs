//! End-to-end runners: transposition artifacts, approach variants, the
//! per-timestep optimization loop and its log formats.
//!
//! A variant names one combination of the two contributions under study:
//! dependency-aware operators and knee selection. The ablations mirror the
//! standard comparison set: `plain-ops` keeps the knee but drops the
//! dependency-aware operators (filtering the final front to valid solutions
//! and repairing when none are), `random-pick` keeps the operators but picks
//! a front member uniformly at random, `plain-random` drops both, `binary`
//! additionally swaps the chromosome for a 0/1 encoding over all features,
//! and `weighted` is the single-objective equal-weight baseline.

use std::fmt;
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dependency::{
    analyze, serialize_dependencies, DependencyChains, GeneDependency, ValueTree,
};
use crate::engine::{
    run, Algorithm, EngineError, GenerationLog, ObjectiveProblem, RunConfig, RunResult, Sense,
    Solution,
};
use crate::feature_model::{Configuration, FeatureId, FeatureModel, ModelError};
use crate::knee::{select_knee, KneeError};
use crate::operators::{self, OperatorContext, OperatorMode};
use crate::soa::{counts_from_configuration, env_step, EnvTrace, SoaProblem, SoaSystem};
use crate::transpose::{transpose, ChromosomeSpec, GeneOption, GrownModel, OptionKind};

// ---------------------------------------------------------------------------
// Transposition artifacts
// ---------------------------------------------------------------------------

/// Everything the runtime side needs, produced once per model at design
/// time.
pub struct Transposition {
    pub grown: GrownModel,
    pub spec: ChromosomeSpec,
    pub deps: Vec<GeneDependency>,
    pub trees: Vec<ValueTree>,
    pub chains: DependencyChains,
}

impl Transposition {
    pub fn of(model: &FeatureModel) -> Result<Self, ModelError> {
        let (grown, spec) = transpose(model);
        let (deps, trees, chains) = analyze(&grown, &spec)?;
        Ok(Transposition {
            grown,
            spec,
            deps,
            trees,
            chains,
        })
    }

    pub fn operator_context(&self, mode: OperatorMode) -> OperatorContext<'_> {
        OperatorContext {
            spec: &self.spec,
            trees: &self.trees,
            chains: &self.chains,
            mode,
        }
    }

    /// The chromosome document: genes, their options, the search-space size.
    pub fn chromosome_document(&self) -> String {
        #[derive(Serialize)]
        struct GeneDoc<'a> {
            id: usize,
            source: &'a str,
            options: Vec<&'a str>,
            numeric: bool,
            deselectable: bool,
        }
        let genes: Vec<GeneDoc> = self
            .spec
            .genes
            .iter()
            .map(|g| GeneDoc {
                id: g.gene_id,
                source: &g.source_id,
                options: g.options.iter().map(|o| o.label.as_str()).collect(),
                numeric: g.is_numeric,
                deselectable: g.deselectable,
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "genes": genes,
            "search_space_size": self.spec.search_space_size.to_string(),
        }))
        .expect("chromosome serialization cannot fail")
    }

    pub fn grown_document(&self) -> String {
        crate::feature_model::serialize_model(&self.grown.model)
    }

    pub fn dependency_document(&self) -> String {
        serialize_dependencies(&self.grown, &self.spec, &self.deps, &self.trees)
    }
}

// ---------------------------------------------------------------------------
// Variants
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Dependency-aware operators plus knee selection.
    Full,
    /// Plain operators; knee selection over the valid-filtered front.
    PlainOps,
    /// Dependency-aware operators; uniform random pick from the front.
    RandomPick,
    /// Plain operators and random pick.
    PlainRandom,
    /// Binary all-feature encoding, plain operators, random pick.
    Binary,
    /// Equal-weight single-objective aggregation, plain operators.
    Weighted,
}

impl Variant {
    pub fn parse(s: &str) -> Option<Variant> {
        Some(match s {
            "full" => Variant::Full,
            "plain-ops" => Variant::PlainOps,
            "random-pick" => Variant::RandomPick,
            "plain-random" => Variant::PlainRandom,
            "binary" => Variant::Binary,
            "weighted" => Variant::Weighted,
            _ => return None,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::PlainOps => "plain-ops",
            Variant::RandomPick => "random-pick",
            Variant::PlainRandom => "plain-random",
            Variant::Binary => "binary",
            Variant::Weighted => "weighted",
        }
    }

    pub fn dependency_aware(&self) -> bool {
        matches!(self, Variant::Full | Variant::RandomPick)
    }

    pub fn uses_knee(&self) -> bool {
        matches!(self, Variant::Full | Variant::PlainOps)
    }

    pub fn binary_encoding(&self) -> bool {
        matches!(self, Variant::Binary)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub variant: Variant,
    pub algorithm: Algorithm,
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub seed: u64,
}

impl Scenario {
    /// The published operating point: population 100 for 10 generations,
    /// mutation 0.1, crossover 0.9.
    pub fn paper_profile(variant: Variant, algorithm: Algorithm, seed: u64) -> Self {
        Scenario {
            variant,
            algorithm,
            population: 100,
            generations: 10,
            mutation_rate: 0.1,
            crossover_rate: 0.9,
            seed,
        }
    }

    /// Scaled-down profile for quick desk runs and CI.
    pub fn ci_profile(variant: Variant, algorithm: Algorithm, seed: u64) -> Self {
        Scenario {
            variant,
            algorithm,
            population: 40,
            generations: 5,
            mutation_rate: 0.1,
            crossover_rate: 0.9,
            seed,
        }
    }

    fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            population_size: self.population,
            generations: self.generations,
            mutation_rate: self.mutation_rate,
            crossover_rate: self.crossover_rate,
            algorithm: if self.variant == Variant::Weighted {
                Algorithm::WeightedSum
            } else {
                self.algorithm.clone()
            },
            seed,
        }
    }
}

// ---------------------------------------------------------------------------
// Binary all-feature baseline
// ---------------------------------------------------------------------------

/// Chromosome over every feature with options {0, 1}; used by the binary
/// baseline together with plain operators and no dependency guidance.
pub fn binary_spec(model: &FeatureModel) -> (ChromosomeSpec, Vec<ValueTree>, DependencyChains) {
    let genes = model
        .features()
        .map(|(id, f)| crate::transpose::GeneSpec {
            gene_id: id.0,
            source_feature: id.0,
            source_id: f.id.clone(),
            options: vec![
                GeneOption {
                    feature: id.0,
                    label: "0".into(),
                    kind: OptionKind::Off,
                },
                GeneOption {
                    feature: id.0,
                    label: "1".into(),
                    kind: OptionKind::Member,
                },
            ],
            is_numeric: false,
            deselectable: true,
        })
        .collect::<Vec<_>>();
    let mut size = num_bigint::BigUint::from(1u32);
    for _ in &genes {
        size *= 2u32;
    }
    let spec = ChromosomeSpec {
        genes,
        search_space_size: size,
    };
    let trees: Vec<ValueTree> = (0..spec.gene_count())
        .map(|g| ValueTree::branchless(g, 2))
        .collect();
    let chains = DependencyChains::build(spec.gene_count(), &[]);
    (spec, trees, chains)
}

/// The benchmark objectives over raw bit strings. Validity is judged on the
/// literal bit set; for the objective values, over-selected XOR groups are
/// first reduced to their lowest-index selected member and unsupported
/// selections (parent bit off) count as undeployed.
pub struct BinarySoaProblem<'a> {
    pub model: &'a FeatureModel,
    pub system: &'a SoaSystem,
    senses: [Sense; 2],
    worst_cost: f64,
}

impl<'a> BinarySoaProblem<'a> {
    pub fn new(model: &'a FeatureModel, system: &'a SoaSystem) -> Self {
        BinarySoaProblem {
            model,
            system,
            senses: [Sense::Maximize, Sense::Minimize],
            worst_cost: system.worst_cost(),
        }
    }

    fn configuration(&self, bits: &[usize]) -> Configuration {
        Configuration::from_ids(
            bits.iter()
                .enumerate()
                .filter(|(_, b)| **b == 1)
                .map(|(i, _)| FeatureId(i)),
        )
    }

    /// XOR groups with several selected members keep only the lowest-index
    /// one; features without a selected parent chain are dropped.
    fn fixed_configuration(&self, bits: &[usize]) -> Configuration {
        let mut keep = vec![false; self.model.feature_count()];
        for (i, &b) in bits.iter().enumerate() {
            keep[i] = b == 1;
        }
        keep[self.model.root.0] = true;
        for (_, group) in self.model.groups() {
            if group.kind != crate::feature_model::GroupKind::Xor {
                continue;
            }
            let mut first = true;
            for &m in &group.members {
                if keep[m.0] {
                    if first {
                        first = false;
                    } else {
                        keep[m.0] = false;
                    }
                }
            }
        }
        // parent closure top-down
        let mut selected = vec![false; self.model.feature_count()];
        for f in self.model.preorder() {
            let parent_ok = match self.model.feature(f).parent {
                Some(p) => selected[p.0],
                None => true,
            };
            selected[f.0] = keep[f.0] && parent_ok;
        }
        Configuration::from_ids(
            selected
                .iter()
                .enumerate()
                .filter(|(_, s)| **s)
                .map(|(i, _)| FeatureId(i)),
        )
    }
}

impl ObjectiveProblem for BinarySoaProblem<'_> {
    fn senses(&self) -> &[Sense] {
        &self.senses
    }

    fn evaluate(&self, bits: &[usize]) -> Result<Vec<f64>, String> {
        if self.is_valid(bits) {
            let fixed = self.fixed_configuration(bits);
            let counts = counts_from_configuration(self.model, self.system, &fixed);
            Ok(vec![
                self.system.throughput(&counts),
                self.system.cost(&counts),
            ])
        } else {
            Ok(vec![0.0, self.worst_cost])
        }
    }

    fn is_valid(&self, bits: &[usize]) -> bool {
        self.model
            .is_valid_configuration(&self.configuration(bits))
            .unwrap_or(false)
    }
}

// ---------------------------------------------------------------------------
// Per-timestep outcome
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Knee(#[from] KneeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("environment: {0}")]
    Environment(String),
}

/// How the adaptation solution was picked from the final set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PickStrategy {
    Knee,
    Random,
    Aggregate,
}

impl PickStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            PickStrategy::Knee => "knee",
            PickStrategy::Random => "random",
            PickStrategy::Aggregate => "aggregate",
        }
    }
}

/// The chosen adaptation solution of one optimization run.
#[derive(Debug, Clone)]
pub struct KneeRecord {
    pub assignment: Vec<usize>,
    /// Raw, sense-native objective values.
    pub objectives: Vec<f64>,
    pub distance: f64,
    pub extremes: [Vec<f64>; 2],
    pub strategy: PickStrategy,
    pub valid: bool,
    /// Final front corrected by filtering/repair before picking.
    pub corrected: bool,
}

/// One member of the returned non-dominated front, raw objectives.
#[derive(Debug, Clone)]
pub struct FrontMember {
    pub assignment: Vec<usize>,
    pub objectives: Vec<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone)]
pub struct TimestepOutcome {
    pub timestep: usize,
    pub knee: KneeRecord,
    /// Fraction of valid solutions in the final population.
    pub valid_fraction: f64,
    pub front_size: usize,
    /// The engine's final front before any variant filtering.
    pub front: Vec<FrontMember>,
    pub evaluations: u64,
    pub wall_seconds: f64,
    pub logs: Vec<GenerationLog>,
}

fn raw_objectives(problem: &dyn ObjectiveProblem, internal: &[f64]) -> Vec<f64> {
    internal
        .iter()
        .zip(problem.senses().iter())
        .map(|(&v, s)| match s {
            Sense::Minimize => v,
            Sense::Maximize => -v,
        })
        .collect()
}

/// Runs one optimization and picks the adaptation solution per the variant.
pub fn run_timestep(
    problem: &dyn ObjectiveProblem,
    ctx: &OperatorContext<'_>,
    repair_ctx: Option<&OperatorContext<'_>>,
    scenario: &Scenario,
    timestep: usize,
    seed: u64,
) -> Result<TimestepOutcome, ScenarioError> {
    let started = Instant::now();
    let cfg = scenario.run_config(seed);
    let result: RunResult = run(problem, ctx, &cfg)?;
    let wall_seconds = started.elapsed().as_secs_f64();

    let valid_fraction = result.final_population.iter().filter(|s| s.valid).count() as f64
        / result.final_population.len() as f64;
    let engine_front: Vec<FrontMember> = result
        .front
        .iter()
        .map(|s| FrontMember {
            assignment: s.assignment.clone(),
            objectives: raw_objectives(problem, &s.objectives),
            valid: s.valid,
        })
        .collect();

    // Final-set handling: variants on plain operators work on the valid
    // members only, repairing the front with dependency-aware mutation when
    // no valid member exists (and the chromosome supports it).
    let mut front = result.front.clone();
    let mut corrected = false;
    if !scenario.variant.dependency_aware() {
        let valid: Vec<Solution> = front.iter().filter(|s| s.valid).cloned().collect();
        if !valid.is_empty() {
            if valid.len() != front.len() {
                corrected = true;
            }
            front = valid;
        } else if let Some(rctx) = repair_ctx {
            corrected = true;
            let mut repair_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FF_EE00);
            let mut repaired = Vec::with_capacity(front.len());
            for s in &front {
                let mut a = s.assignment.clone();
                // re-draw every gene under the value trees; valid afterwards
                let all: Vec<usize> = (0..rctx.spec.gene_count()).collect();
                operators::mutate_genes(&mut a, &all, rctx, &mut repair_rng);
                let raw = problem.evaluate(&a).map_err(ScenarioError::Environment)?;
                let objectives = raw
                    .iter()
                    .zip(problem.senses().iter())
                    .map(|(&v, s)| match s {
                        Sense::Minimize => v,
                        Sense::Maximize => -v,
                    })
                    .collect();
                let valid = problem.is_valid(&a);
                repaired.push(Solution {
                    assignment: a,
                    objectives,
                    valid,
                });
            }
            front = repaired;
        }
    }

    let mut pick_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0001);
    let (chosen, strategy, distance, extremes) = if scenario.variant == Variant::Weighted {
        let fitness = |s: &Solution| s.objectives.iter().sum::<f64>();
        let best = front
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                fitness(a)
                    .partial_cmp(&fitness(b))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        (
            front[best].clone(),
            PickStrategy::Aggregate,
            0.0,
            [Vec::new(), Vec::new()],
        )
    } else if scenario.variant.uses_knee() {
        let k = select_knee(&front, &mut pick_rng)?;
        let extremes = [
            raw_objectives(problem, &k.extremes[0].objectives),
            raw_objectives(problem, &k.extremes[1].objectives),
        ];
        (k.chosen, PickStrategy::Knee, k.distance, extremes)
    } else {
        use rand::Rng;
        let i = pick_rng.random_range(0..front.len());
        (
            front[i].clone(),
            PickStrategy::Random,
            0.0,
            [Vec::new(), Vec::new()],
        )
    };

    let knee = KneeRecord {
        objectives: raw_objectives(problem, &chosen.objectives),
        valid: chosen.valid,
        assignment: chosen.assignment,
        distance,
        extremes,
        strategy,
        corrected,
    };
    Ok(TimestepOutcome {
        timestep,
        knee,
        valid_fraction,
        front_size: front.len(),
        front: engine_front,
        evaluations: result.evaluations,
        wall_seconds,
        logs: result.logs,
    })
}

/// Per-timestep seed derivation (splitmix-style), keeping timesteps
/// independent while fully determined by the scenario seed.
pub fn timestep_seed(base: u64, t: usize) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(t as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the scenario across the trace: one optimization per timestep against
/// the perturbed system.
pub fn simulate(
    base_system: &SoaSystem,
    model: &FeatureModel,
    transposition: &Transposition,
    trace: &EnvTrace,
    timesteps: usize,
    scenario: &Scenario,
) -> Result<Vec<TimestepOutcome>, ScenarioError> {
    let steps = timesteps.min(trace.timesteps());
    let mut systems = Vec::with_capacity(steps);
    for t in 0..steps {
        systems.push(env_step(trace, t, base_system).map_err(ScenarioError::Environment)?);
    }
    simulate_systems(&systems, model, transposition, scenario)
}

/// As [`simulate`], but against explicit per-timestep systems (e.g. read
/// back from a stored trace file).
pub fn simulate_systems(
    systems: &[SoaSystem],
    model: &FeatureModel,
    transposition: &Transposition,
    scenario: &Scenario,
) -> Result<Vec<TimestepOutcome>, ScenarioError> {
    let mut outcomes = Vec::with_capacity(systems.len());

    if scenario.variant.binary_encoding() {
        let (bspec, btrees, bchains) = binary_spec(model);
        let bctx = OperatorContext {
            spec: &bspec,
            trees: &btrees,
            chains: &bchains,
            mode: OperatorMode::Plain,
        };
        for (t, system) in systems.iter().enumerate() {
            let problem = BinarySoaProblem::new(model, system);
            outcomes.push(run_timestep(
                &problem,
                &bctx,
                None,
                scenario,
                t,
                timestep_seed(scenario.seed, t),
            )?);
        }
        return Ok(outcomes);
    }

    let mode = if scenario.variant.dependency_aware() {
        OperatorMode::DependencyAware
    } else {
        OperatorMode::Plain
    };
    let ctx = transposition.operator_context(mode);
    let repair_ctx = transposition.operator_context(OperatorMode::DependencyAware);
    for (t, system) in systems.iter().enumerate() {
        let problem = SoaProblem::new(system, &transposition.spec, &transposition.trees);
        outcomes.push(run_timestep(
            &problem,
            &ctx,
            Some(&repair_ctx),
            scenario,
            t,
            timestep_seed(scenario.seed, t),
        )?);
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// Log formats
// ---------------------------------------------------------------------------

/// Per-generation run log, one CSV row per generation per timestep.
pub fn run_log_csv(outcomes: &[TimestepOutcome]) -> String {
    let mut out = String::from(
        "timestep,generation,evaluations,best_obj0,median_obj0,best_obj1,median_obj1,valid_fraction,repairs,cascades\n",
    );
    for o in outcomes {
        for l in &o.logs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                o.timestep,
                l.generation,
                l.evaluations,
                l.best[0],
                l.median[0],
                l.best[1],
                l.median[1],
                l.valid_fraction,
                l.repairs,
                l.cascades
            ));
        }
    }
    out
}

/// Chosen-solution log, one CSV row per timestep. Fully deterministic;
/// wall-clock timings live in their own file. The extreme columns hold the
/// per-objective worst front members the knee line was drawn through (empty
/// for non-knee strategies).
pub fn knees_csv(outcomes: &[TimestepOutcome]) -> String {
    let mut out = String::from(
        "timestep,strategy,obj0,obj1,distance,valid,corrected,front_size,valid_fraction,evaluations,assignment,extreme0_obj0,extreme0_obj1,extreme1_obj0,extreme1_obj1\n",
    );
    for o in outcomes {
        let assignment: Vec<String> = o.knee.assignment.iter().map(|a| a.to_string()).collect();
        let extreme = |i: usize, m: usize| -> String {
            o.knee
                .extremes[i]
                .get(m)
                .map(|v| v.to_string())
                .unwrap_or_default()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            o.timestep,
            o.knee.strategy.label(),
            o.knee.objectives[0],
            o.knee.objectives[1],
            o.knee.distance,
            o.knee.valid,
            o.knee.corrected,
            o.front_size,
            o.valid_fraction,
            o.evaluations,
            assignment.join(";"),
            extreme(0, 0),
            extreme(0, 1),
            extreme(1, 0),
            extreme(1, 1)
        ));
    }
    out
}

/// Wall-clock seconds per optimization run, the overhead record.
pub fn timing_csv(outcomes: &[TimestepOutcome]) -> String {
    let mut out = String::from("timestep,wall_seconds\n");
    for o in outcomes {
        out.push_str(&format!("{},{:.6}\n", o.timestep, o.wall_seconds));
    }
    out
}

/// Final front of a single run as JSON (assignments plus raw objectives).
pub fn front_json(outcome: &TimestepOutcome) -> String {
    #[derive(Serialize)]
    struct Member<'a> {
        assignment: &'a [usize],
        objectives: &'a [f64],
        valid: bool,
    }
    let members: Vec<Member> = outcome
        .front
        .iter()
        .map(|m| Member {
            assignment: &m.assignment,
            objectives: &m.objectives,
            valid: m.valid,
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "timestep": outcome.timestep,
        "evaluations": outcome.evaluations,
        "front": members,
    }))
    .expect("front serialization cannot fail")
}

/// One timestep row of a knees CSV: the objective pair plus the final
/// population's valid fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KneeRow {
    pub timestep: usize,
    pub obj0: f64,
    pub obj1: f64,
    pub valid_fraction: f64,
}

/// Reads the per-timestep objective series back out of a knees CSV.
pub fn parse_knees_csv(content: &str) -> Result<Vec<KneeRow>, String> {
    let mut rows = Vec::new();
    for (i, line) in content.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 11 {
            return Err(format!("knees csv row {i}: expected 11 columns"));
        }
        let parse =
            |s: &str| -> Result<f64, String> { s.parse::<f64>().map_err(|e| format!("row {i}: {e}")) };
        rows.push(KneeRow {
            timestep: cols[0]
                .parse::<usize>()
                .map_err(|e| format!("row {i}: {e}"))?,
            obj0: parse(cols[2])?,
            obj1: parse(cols[3])?,
            valid_fraction: parse(cols[8])?,
        });
    }
    Ok(rows)
}

/// Valid-in-final-population series of a run, indexed by timestep.
pub fn valid_series(outcomes: &[TimestepOutcome]) -> Vec<f64> {
    outcomes.iter().map(|o| o.valid_fraction).collect()
}

// ---------------------------------------------------------------------------
// Cross-approach comparison
// ---------------------------------------------------------------------------

/// One approach's per-timestep knee observations, as read from its log.
#[derive(Debug, Clone)]
pub struct RunSeries {
    pub label: String,
    pub rows: Vec<KneeRow>,
}

#[derive(Debug, Clone)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub objective: usize,
    pub p_value: f64,
    pub effect_size: f64,
    pub magnitude: &'static str,
}

#[derive(Debug, Clone)]
pub struct ComparisonResult {
    pub labels: Vec<String>,
    /// Raw per-objective geometric means (throughput as observed).
    pub raw_gms: Vec<[f64; 2]>,
    /// Minimized-oriented geometric means (throughput inverted).
    pub oriented_gms: Vec<[f64; 2]>,
    pub hv: Vec<f64>,
    pub ed: Vec<f64>,
    pub valid_pct: Vec<f64>,
    pub pairwise: Vec<PairwiseTest>,
}

/// Computes the comparison table over aligned runs: per-objective geometric
/// means (the maximized first objective inverted before normalization),
/// aggregate trade-off scores, valid-solution percentages and pairwise
/// significance tests.
pub fn compare_runs(series: &[RunSeries]) -> Result<ComparisonResult, String> {
    use crate::stats;
    if series.len() < 2 {
        return Err("need at least two runs to compare".into());
    }
    let timesteps = series[0].rows.len();
    if timesteps == 0 {
        return Err("empty run log".into());
    }
    for s in series {
        if s.rows.len() != timesteps {
            return Err(format!(
                "misaligned logs: `{}` has {} timesteps, expected {timesteps}",
                s.label,
                s.rows.len()
            ));
        }
    }

    let mut raw_gms = Vec::new();
    let mut oriented = Vec::new();
    let mut valid_pct = Vec::new();
    let mut summaries = Vec::new();
    for s in series {
        let t_series: Vec<f64> = s.rows.iter().map(|r| r.obj0).collect();
        let c_series: Vec<f64> = s.rows.iter().map(|r| r.obj1).collect();
        let inv_t: Vec<f64> = t_series
            .iter()
            .map(|&v| 1.0 / v.max(stats::GM_EPSILON))
            .collect();
        let gm_t_raw = stats::geometric_mean(&t_series).map_err(|e| e.to_string())?;
        let gm_t_inv = stats::geometric_mean(&inv_t).map_err(|e| e.to_string())?;
        let gm_c = stats::geometric_mean(&c_series).map_err(|e| e.to_string())?;
        raw_gms.push([gm_t_raw, gm_c]);
        oriented.push([gm_t_inv, gm_c]);
        summaries.push(stats::SeriesSummary {
            label: s.label.clone(),
            gms: vec![gm_t_inv, gm_c],
        });
        let vf: Vec<f64> = s.rows.iter().map(|r| r.valid_fraction).collect();
        valid_pct.push(stats::valid_fraction(&vf).map_err(|e| e.to_string())? * 100.0);
    }
    let scores = stats::aggregate_scores(&summaries).map_err(|e| e.to_string())?;

    let mut pairwise = Vec::new();
    for i in 0..series.len() {
        for j in (i + 1)..series.len() {
            for objective in 0..2 {
                let x: Vec<f64> = series[i]
                    .rows
                    .iter()
                    .map(|r| if objective == 0 { r.obj0 } else { r.obj1 })
                    .collect();
                let y: Vec<f64> = series[j]
                    .rows
                    .iter()
                    .map(|r| if objective == 0 { r.obj0 } else { r.obj1 })
                    .collect();
                let t = stats::wilcoxon_signed_rank(&x, &y).map_err(|e| e.to_string())?;
                pairwise.push(PairwiseTest {
                    a: series[i].label.clone(),
                    b: series[j].label.clone(),
                    objective,
                    p_value: t.p_value,
                    effect_size: t.effect_size,
                    magnitude: t.magnitude.label(),
                });
            }
        }
    }
    Ok(ComparisonResult {
        labels: series.iter().map(|s| s.label.clone()).collect(),
        raw_gms,
        oriented_gms: oriented,
        hv: scores.hv,
        ed: scores.ed,
        valid_pct,
        pairwise,
    })
}

/// The per-approach results table. Normalization extremes are taken within
/// this comparison set, noted in the header.
pub fn comparison_csv(c: &ComparisonResult) -> String {
    let mut out = String::from(
        "# normalization extremes computed within this comparison set\napproach,gm_obj0,gm_obj1,gm_obj0_inverted,hv,ed,valid_pct\n",
    );
    for (i, label) in c.labels.iter().enumerate() {
        out.push_str(&format!(
            "{label},{},{},{},{},{},{}\n",
            c.raw_gms[i][0], c.raw_gms[i][1], c.oriented_gms[i][0], c.hv[i], c.ed[i], c.valid_pct[i]
        ));
    }
    out
}

pub fn pairwise_csv(c: &ComparisonResult) -> String {
    let mut out = String::from("a,b,objective,p_value,effect_size,magnitude\n");
    for t in &c.pairwise {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.a, t.b, t.objective, t.p_value, t.effect_size, t.magnitude
        ));
    }
    out
}
