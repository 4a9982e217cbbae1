//! Dependency-aware reproduction operators and their plain baselines.
//!
//! The dependency-aware boundary mutation re-draws a gene from its value
//! tree under the solution's current context, then walks the dependency
//! chain and re-mutates any dependent whose value became invalid. The
//! dependency-aware uniform crossover swaps gene positions between two
//! parents; a swap that breaks a dependent swaps the dependent too, and a
//! gene left invalid pulls its main genes over, each gene swapping at most
//! once. Both operators map valid inputs to valid outputs.
//!
//! Plain mode skips all of that: mutation draws from the full option list
//! and crossover swaps positions blindly. On a model without dependencies
//! the two modes consume the random stream identically and produce the same
//! offspring.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dependency::{DependencyChains, ValueTree};
use crate::transpose::ChromosomeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorMode {
    DependencyAware,
    Plain,
}

/// Everything the operators need besides the random source.
pub struct OperatorContext<'a> {
    pub spec: &'a ChromosomeSpec,
    pub trees: &'a [ValueTree],
    pub chains: &'a DependencyChains,
    pub mode: OperatorMode,
}

/// Repair effort counters, surfaced in the run logs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpStats {
    /// Repair actions triggered by a violated dependent.
    pub repairs: u64,
    /// Genes touched beyond the operator's own selection mask.
    pub cascades: u64,
}

impl OpStats {
    pub fn absorb(&mut self, other: OpStats) {
        self.repairs += other.repairs;
        self.cascades += other.cascades;
    }
}

/// True when every gene's value is allowed by its value tree under the
/// solution's own context.
pub fn check_validity(assignment: &[usize], ctx: &OperatorContext<'_>) -> bool {
    ctx.trees.iter().all(|t| t.permits(assignment))
}

/// Uniform random assignment over the full option lists.
pub fn random_assignment(spec: &ChromosomeSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    spec.genes
        .iter()
        .map(|g| rng.random_range(0..g.options.len()))
        .collect()
}

fn draw_allowed(
    assignment: &mut [usize],
    gene: usize,
    ctx: &OperatorContext<'_>,
    rng: &mut ChaCha8Rng,
) {
    let allowed = ctx.trees[gene].allowed_options(assignment);
    assignment[gene] = allowed[rng.random_range(0..allowed.len())];
}

/// Re-mutates `gene` from its value tree, then repairs violated dependents
/// transitively. A dependency cycle that keeps oscillating triggers a
/// re-randomization of the violated genes, which cannot livelock on a
/// contradiction-free model.
fn mutate_with_dependency(
    assignment: &mut [usize],
    gene: usize,
    ctx: &OperatorContext<'_>,
    rng: &mut ChaCha8Rng,
    stats: &mut OpStats,
) {
    let gene_count = ctx.spec.gene_count();
    let max_options = ctx
        .spec
        .genes
        .iter()
        .map(|g| g.options.len() as u64)
        .max()
        .unwrap_or(1);
    let restart_after = 64 + gene_count as u64 * max_options * 8;

    draw_allowed(assignment, gene, ctx, rng);
    let mut stack: Vec<usize> = ctx
        .chains
        .dependents_of(gene)
        .iter()
        .rev()
        .copied()
        .collect();
    let mut steps: u64 = 0;
    while let Some(d) = stack.pop() {
        if ctx.trees[d].permits(assignment) {
            continue;
        }
        steps += 1;
        stats.repairs += 1;
        stats.cascades += 1;
        draw_allowed(assignment, d, ctx, rng);
        for &dd in ctx.chains.dependents_of(d).iter().rev() {
            stack.push(dd);
        }
        if steps.is_multiple_of(restart_after) {
            for g in 0..gene_count {
                if !ctx.trees[g].permits(assignment) {
                    draw_allowed(assignment, g, ctx, rng);
                }
            }
            stack = (0..gene_count)
                .rev()
                .filter(|&g| !ctx.trees[g].permits(assignment))
                .collect();
        }
    }
}

/// Boundary mutation: each gene is selected independently with probability
/// `rate`. Dependency-aware mode requires a valid input and keeps the result
/// valid; plain mode draws from the full option list with no propagation.
pub fn mutate(
    assignment: &mut [usize],
    rate: f64,
    ctx: &OperatorContext<'_>,
    rng: &mut ChaCha8Rng,
) -> OpStats {
    let selected: Vec<usize> = (0..ctx.spec.gene_count())
        .filter(|_| rng.random::<f64>() < rate)
        .collect();
    mutate_genes(assignment, &selected, ctx, rng)
}

/// Mutation with an explicit gene set instead of a rate.
pub fn mutate_genes(
    assignment: &mut [usize],
    genes: &[usize],
    ctx: &OperatorContext<'_>,
    rng: &mut ChaCha8Rng,
) -> OpStats {
    let mut stats = OpStats::default();
    for &g in genes {
        match ctx.mode {
            OperatorMode::Plain => {
                assignment[g] = rng.random_range(0..ctx.spec.genes[g].options.len());
            }
            OperatorMode::DependencyAware => {
                mutate_with_dependency(assignment, g, ctx, rng, &mut stats);
            }
        }
    }
    stats
}

struct SwapState<'a, 'b> {
    ctx: &'a OperatorContext<'b>,
    c1: Vec<usize>,
    c2: Vec<usize>,
    swapped: Vec<bool>,
    /// Any value actually changed hands.
    changed: bool,
    /// A violated gene hit the swapped-once guard, or a gene stayed invalid
    /// after its mains were pulled over; only then can a violation survive
    /// the cascade.
    leak_possible: bool,
    stats: OpStats,
}

impl<'a, 'b> SwapState<'a, 'b> {
    /// Swap `g` in both offspring unless already swapped, then chase broken
    /// dependents and, if `g` itself ended up invalid, its main genes.
    fn swap_with_dependency(&mut self, g: usize, from_mask: bool) {
        if self.swapped[g] {
            return;
        }
        self.swapped[g] = true;
        if !from_mask {
            self.stats.cascades += 1;
        }
        let ctx: &'a OperatorContext<'b> = self.ctx;
        // A swap of equal values cannot break a dependent (no state
        // changes), so the dependent walk is skipped; the gene itself may
        // still be the violated one that triggered this call, so the mains
        // path below runs either way.
        let noop = self.c1[g] == self.c2[g];
        if !noop {
            std::mem::swap(&mut self.c1[g], &mut self.c2[g]);
            self.changed = true;
        }

        for side in 0..2 {
            if !noop {
                for &gd in ctx.chains.dependents_of(g) {
                    let child = if side == 0 { &self.c1 } else { &self.c2 };
                    if !ctx.trees[gd].permits(child) {
                        self.stats.repairs += 1;
                        if self.swapped[gd] {
                            self.leak_possible = true;
                        }
                        self.swap_with_dependency(gd, false);
                    }
                }
            }
            let child = if side == 0 { &self.c1 } else { &self.c2 };
            if !ctx.trees[g].permits(child) {
                for &gm in ctx.chains.mains_of(g) {
                    self.stats.repairs += 1;
                    self.swap_with_dependency(gm, false);
                }
                let child = if side == 0 { &self.c1 } else { &self.c2 };
                if !ctx.trees[g].permits(child) {
                    self.leak_possible = true;
                }
            }
        }
    }
}

/// Uniform crossover: each gene position is selected independently with
/// probability `rate` and swapped between the offspring. Dependency-aware
/// mode requires valid parents, propagates swaps along the chains, and
/// returns two valid offspring.
pub fn crossover(
    parent1: &[usize],
    parent2: &[usize],
    rate: f64,
    ctx: &OperatorContext<'_>,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>, OpStats) {
    let mask: Vec<usize> = (0..ctx.spec.gene_count())
        .filter(|_| rng.random::<f64>() < rate)
        .collect();

    if ctx.mode == OperatorMode::Plain {
        let mut c1 = parent1.to_vec();
        let mut c2 = parent2.to_vec();
        for &g in &mask {
            std::mem::swap(&mut c1[g], &mut c2[g]);
        }
        return (c1, c2, OpStats::default());
    }

    let mut state = SwapState {
        ctx,
        c1: parent1.to_vec(),
        c2: parent2.to_vec(),
        swapped: vec![false; ctx.spec.gene_count()],
        changed: false,
        leak_possible: false,
        stats: OpStats::default(),
    };
    for &g in &mask {
        state.swap_with_dependency(g, true);
    }
    let SwapState {
        mut c1,
        mut c2,
        mut stats,
        changed,
        leak_possible,
        ..
    } = state;

    // The cascade repairs everything it can reach; a violation survives only
    // when a needed swap hit the swapped-once guard (tracked above). Those
    // offspring are repaired in place.
    if changed && leak_possible {
        for child in [&mut c1, &mut c2] {
            let mut guard = 0;
            while let Some(bad) =
                (0..ctx.spec.gene_count()).find(|&g| !ctx.trees[g].permits(child))
            {
                stats.repairs += 1;
                mutate_with_dependency(child, bad, ctx, rng, &mut stats);
                guard += 1;
                if guard > ctx.spec.gene_count() * 4 {
                    break;
                }
            }
        }
    }
    (c1, c2, stats)
}
