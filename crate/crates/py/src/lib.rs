//! Python bindings: model transposition, the benchmark, single runs and the
//! comparison statistics. Documents cross the boundary as JSON strings;
//! results come back as plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use fmoea_core::engine::Algorithm;
use fmoea_core::feature_model::{parse_model, validate_model};
use fmoea_core::knee;
use fmoea_core::scenario::{simulate as run_simulation, Scenario, Transposition, Variant};
use fmoea_core::soa::{default_trace, generate_soa, trace_to_csv, SoaKnobs, SoaSystem};
use fmoea_core::stats;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_algorithm(name: &str) -> PyResult<Algorithm> {
    Ok(match name {
        "nsga2" => Algorithm::Nsga2,
        "ibea" => Algorithm::ibea(),
        "moead-stm" => Algorithm::moead_stm(),
        other => return Err(value_err(format!("unknown algorithm `{other}`"))),
    })
}

fn parse_variant(name: &str) -> PyResult<Variant> {
    Variant::parse(name).ok_or_else(|| value_err(format!("unknown variant `{name}`")))
}

/// Structural diagnostics of a model document; empty means well-formed.
#[pyfunction]
fn validate(model_json: &str) -> PyResult<Vec<String>> {
    match parse_model(model_json) {
        Ok(model) => Ok(validate_model(&model)
            .iter()
            .map(|d| d.to_string())
            .collect()),
        Err(e) => Ok(vec![e.to_string()]),
    }
}

/// Transposes a model document; returns the chromosome, grown-model and
/// dependency documents plus headline numbers.
#[pyfunction]
fn transpose<'py>(py: Python<'py>, model_json: &str) -> PyResult<Bound<'py, PyDict>> {
    let model = parse_model(model_json).map_err(value_err)?;
    let tr = Transposition::of(&model).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("gene_count", tr.spec.gene_count())?;
    out.set_item("search_space_size", tr.spec.search_space_size.to_string())?;
    out.set_item("chromosome", tr.chromosome_document())?;
    out.set_item("grown_model", tr.grown_document())?;
    out.set_item("dependencies", tr.dependency_document())?;
    Ok(out)
}

/// Generates the service-composition benchmark: (system_json, model_json).
#[pyfunction]
#[pyo3(signature = (seed = 42))]
fn generate_benchmark(seed: u64) -> PyResult<(String, String)> {
    let (system, model) = generate_soa(seed, &SoaKnobs::default());
    Ok((
        system.to_json(),
        fmoea_core::feature_model::serialize_model(&model),
    ))
}

/// The default environment trace for a system, as the trace CSV.
#[pyfunction]
#[pyo3(signature = (system_json, timesteps = 102))]
fn default_trace_csv(system_json: &str, timesteps: usize) -> PyResult<String> {
    let system = SoaSystem::from_json(system_json).map_err(value_err)?;
    let trace = default_trace(&system, timesteps);
    trace_to_csv(&system, &trace, timesteps).map_err(runtime_err)
}

#[allow(clippy::too_many_arguments)]
fn build_scenario(
    algo: &str,
    variant: &str,
    seed: u64,
    population: usize,
    generations: usize,
    mutation_rate: f64,
    crossover_rate: f64,
) -> PyResult<Scenario> {
    Ok(Scenario {
        variant: parse_variant(variant)?,
        algorithm: parse_algorithm(algo)?,
        population,
        generations,
        mutation_rate,
        crossover_rate,
        seed,
    })
}

/// Runs the benchmark over its trace; returns one dict per timestep with
/// the chosen solution and run statistics.
#[pyfunction]
#[pyo3(signature = (model_json, system_json, *, timesteps = 10, algo = "nsga2",
    variant = "full", seed = 1, population = 100, generations = 10,
    mutation_rate = 0.1, crossover_rate = 0.9))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    model_json: &str,
    system_json: &str,
    timesteps: usize,
    algo: &str,
    variant: &str,
    seed: u64,
    population: usize,
    generations: usize,
    mutation_rate: f64,
    crossover_rate: f64,
) -> PyResult<Bound<'py, PyList>> {
    let model = parse_model(model_json).map_err(value_err)?;
    let system = SoaSystem::from_json(system_json).map_err(value_err)?;
    let tr = Transposition::of(&model).map_err(value_err)?;
    let trace = default_trace(&system, timesteps);
    let scenario = build_scenario(
        algo,
        variant,
        seed,
        population,
        generations,
        mutation_rate,
        crossover_rate,
    )?;
    let outcomes = run_simulation(&system, &model, &tr, &trace, timesteps, &scenario)
        .map_err(runtime_err)?;
    let list = PyList::empty(py);
    for o in outcomes {
        let d = PyDict::new(py);
        d.set_item("timestep", o.timestep)?;
        d.set_item("strategy", o.knee.strategy.label())?;
        d.set_item("objectives", o.knee.objectives.clone())?;
        d.set_item("assignment", o.knee.assignment.clone())?;
        d.set_item("distance", o.knee.distance)?;
        d.set_item("valid", o.knee.valid)?;
        d.set_item("corrected", o.knee.corrected)?;
        d.set_item("valid_fraction", o.valid_fraction)?;
        d.set_item("front_size", o.front_size)?;
        d.set_item("evaluations", o.evaluations)?;
        list.append(d)?;
    }
    Ok(list)
}

/// Knee selection over a two-objective minimized front; returns the chosen
/// index and its signed distance.
#[pyfunction]
#[pyo3(signature = (front, seed = 0))]
fn select_knee<'py>(
    py: Python<'py>,
    front: Vec<Vec<f64>>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let solutions: Vec<fmoea_core::engine::Solution> = front
        .iter()
        .map(|objs| fmoea_core::engine::Solution {
            assignment: Vec::new(),
            objectives: objs.clone(),
            valid: true,
        })
        .collect();
    let mut rng = fmoea_core::seeded_rng(seed);
    let k = knee::select_knee(&solutions, &mut rng).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("index", k.chosen_index)?;
    out.set_item("distance", k.distance)?;
    out.set_item("objectives", k.chosen.objectives)?;
    Ok(out)
}

/// Geometric mean with the epsilon floor the metrics use.
#[pyfunction]
fn geometric_mean(values: Vec<f64>) -> PyResult<f64> {
    stats::geometric_mean(&values).map_err(value_err)
}

/// Aggregate trade-off scores over per-approach geometric means
/// (minimized orientation): returns (hv, ed) lists.
#[pyfunction]
fn aggregate_scores(gms: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let summaries: Vec<stats::SeriesSummary> = gms
        .into_iter()
        .enumerate()
        .map(|(i, gms)| stats::SeriesSummary {
            label: format!("approach{i}"),
            gms,
        })
        .collect();
    let scores = stats::aggregate_scores(&summaries).map_err(value_err)?;
    Ok((scores.hv, scores.ed))
}

/// Two-tailed Wilcoxon signed-rank test on paired series.
#[pyfunction]
fn wilcoxon<'py>(py: Python<'py>, x: Vec<f64>, y: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let t = stats::wilcoxon_signed_rank(&x, &y).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("p_value", t.p_value)?;
    out.set_item("effect_size", t.effect_size)?;
    out.set_item("magnitude", t.magnitude.label())?;
    out.set_item("w_statistic", t.w_statistic)?;
    out.set_item("n_used", t.n_used)?;
    Ok(out)
}

#[pymodule]
fn fmoea(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(transpose, m)?)?;
    m.add_function(wrap_pyfunction!(generate_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(default_trace_csv, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(select_knee, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_mean, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_scores, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon, m)?)?;
    Ok(())
}
