//! Python bindings: formulas, monitors, the oracle, the MAPE-K controller and
//! scenario runs. Letters are passed as iterables of proposition names and
//! verdicts come back as `"top"`, `"bottom"` or `"inconclusive"`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rvheal_core::arch::{default_architecture, Architecture, Change};
use rvheal_core::harness::{self, Scenario};
use rvheal_core::inject::{self, FailureKind, InjectionSpec};
use rvheal_core::ltl::{self, Letter, LtlFormula};
use rvheal_core::mape::{self, Mode};
use rvheal_core::monitor::{self, MooreMonitor};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn letter(names: Vec<String>) -> Letter {
    names.into_iter().collect()
}

#[pyclass(name = "Formula", frozen)]
struct PyFormula {
    inner: LtlFormula,
}

#[pymethods]
impl PyFormula {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ltl::parse(text).map_err(value_err)?,
        })
    }

    fn atoms(&self) -> Vec<String> {
        self.inner.atoms().iter().map(ToString::to_string).collect()
    }

    fn nnf(&self) -> Self {
        Self {
            inner: self.inner.to_nnf(),
        }
    }

    fn negate(&self) -> Self {
        Self {
            inner: LtlFormula::not(self.inner.clone()),
        }
    }

    #[getter]
    fn size(&self) -> usize {
        self.inner.size()
    }

    /// Truth of the formula on `stem · cycle^ω`.
    fn holds_on_lasso(&self, stem: Vec<Vec<String>>, cycle: Vec<Vec<String>>) -> PyResult<bool> {
        let w = ltl::LassoWord::new(stem.into_iter().map(letter).collect(), cycle.into_iter().map(letter).collect())
            .map_err(value_err)?;
        Ok(ltl::eval_lasso(&self.inner, &w))
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Formula({:?})", self.inner.to_string())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

#[pyclass(name = "Monitor", frozen)]
struct PyMonitor {
    inner: MooreMonitor,
}

#[pymethods]
impl PyMonitor {
    /// Minimal three-valued monitor of a formula given as text.
    #[new]
    fn new(formula: &str) -> PyResult<Self> {
        let f = ltl::parse(formula).map_err(value_err)?;
        Ok(Self {
            inner: monitor::build_monitor(&f).map_err(value_err)?,
        })
    }

    /// Rebuilds a monitor from its transition table over the given alphabet.
    #[staticmethod]
    fn from_table(alphabet: Vec<String>, table: &str) -> PyResult<Self> {
        let props = alphabet
            .iter()
            .map(|a| {
                match a.split_once('@') {
                    Some((name, target)) => ltl::Proposition::grounded(name, target),
                    None => ltl::Proposition::new(a),
                }
                .map_err(value_err)
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: MooreMonitor::from_table(props, table).map_err(value_err)?,
        })
    }

    #[getter]
    fn state_count(&self) -> usize {
        self.inner.state_count()
    }

    #[getter]
    fn initial(&self) -> usize {
        self.inner.initial()
    }

    #[getter]
    fn alphabet(&self) -> Vec<String> {
        self.inner.alphabet().iter().map(ToString::to_string).collect()
    }

    fn output(&self, state: usize) -> PyResult<&'static str> {
        if state >= self.inner.state_count() {
            return Err(value_err(format!("no state {state}")));
        }
        Ok(self.inner.output(state).as_str())
    }

    /// One transition: returns `(next_state, verdict)`.
    fn step(&self, state: usize, letter_names: Vec<String>) -> PyResult<(usize, &'static str)> {
        let (q, v) = self.inner.step(state, &letter(letter_names)).map_err(value_err)?;
        Ok((q, v.as_str()))
    }

    /// Verdict after reading the whole trace from the initial state.
    fn run(&self, trace: Vec<Vec<String>>) -> PyResult<&'static str> {
        let trace: Vec<Letter> = trace.into_iter().map(letter).collect();
        Ok(self.inner.run(&trace).map_err(value_err)?.as_str())
    }

    fn census(&self) -> BTreeMap<String, usize> {
        harness::census_map(&self.inner)
    }

    fn satisfies_verdict_trap(&self) -> bool {
        self.inner.satisfies_verdict_trap()
    }

    fn to_dot(&self) -> String {
        self.inner.to_dot()
    }

    fn to_table(&self) -> String {
        self.inner.to_table()
    }

    fn __repr__(&self) -> String {
        format!("<Monitor {}>", harness::census_line(&self.inner))
    }
}

/// Reference verdict by bounded lasso enumeration.
#[pyfunction]
#[pyo3(signature = (formula, prefix, stem_bound = 2, loop_bound = 3))]
fn oracle_verdict(formula: &str, prefix: Vec<Vec<String>>, stem_bound: usize, loop_bound: usize) -> PyResult<&'static str> {
    let f = ltl::parse(formula).map_err(value_err)?;
    let prefix: Vec<Letter> = prefix.into_iter().map(letter).collect();
    Ok(ltl::verdict_oracle(&f, &prefix, stem_bound, loop_bound).map_err(value_err)?.as_str())
}

/// Normalized text of a formula.
#[pyfunction]
fn parse_formula(text: &str) -> PyResult<String> {
    Ok(ltl::parse(text).map_err(value_err)?.to_string())
}

fn injection_specs(injections: Vec<(u64, String, String)>) -> PyResult<Vec<InjectionSpec>> {
    injections
        .into_iter()
        .map(|(loop_index, kind, target)| {
            Ok(InjectionSpec {
                loop_index,
                kind: kind.parse::<FailureKind>().map_err(value_err)?,
                target,
            })
        })
        .collect()
}

fn spec_tuple(s: &InjectionSpec) -> (u64, String, String) {
    (s.loop_index, s.kind.to_string(), s.target.clone())
}

/// Seeded injection schedule over the default architecture, as
/// `(loop, kind, target)` tuples.
#[pyfunction]
fn random_schedule(seed: u64, count: usize, max_loop: u64) -> PyResult<Vec<(u64, String, String)>> {
    let schedule = inject::random_schedule(seed, &default_architecture(), count, max_loop).map_err(value_err)?;
    Ok(schedule.iter().map(spec_tuple).collect())
}

/// Result of one loop tick.
#[pyclass(name = "RunRecord", frozen, get_all)]
struct PyRunRecord {
    loop_index: u64,
    injections: Vec<(u64, String, String)>,
    /// `(kind, target, root_target)` per diagnosis.
    diagnoses: Vec<(String, String, String)>,
    actions: Vec<String>,
    detect_us: Vec<u64>,
    heal_us: u64,
    utility_before: f64,
    utility: f64,
}

#[pymethods]
impl PyRunRecord {
    fn __repr__(&self) -> String {
        format!(
            "RunRecord(loop={}, diagnoses={:?}, actions={:?}, utility={})",
            self.loop_index, self.diagnoses, self.actions, self.utility
        )
    }
}

impl From<mape::RunRecord> for PyRunRecord {
    fn from(r: mape::RunRecord) -> Self {
        Self {
            loop_index: r.loop_index,
            injections: r.injections.iter().map(spec_tuple).collect(),
            diagnoses: r
                .diagnoses
                .iter()
                .map(|d| (d.kind.to_string(), d.target.clone(), d.root_target.clone()))
                .collect(),
            actions: r.plan.actions.iter().map(ToString::to_string).collect(),
            detect_us: r.detect_us,
            heal_us: r.heal_us,
            utility_before: r.utility_before,
            utility: r.utility,
        }
    }
}

/// MAPE-K controller over the default architecture.
#[pyclass(name = "Controller", unsendable)]
struct PyController {
    inner: mape::Controller,
}

#[pymethods]
impl PyController {
    #[new]
    #[pyo3(signature = (mode = "rv", injections = Vec::new()))]
    fn new(mode: &str, injections: Vec<(u64, String, String)>) -> PyResult<Self> {
        let mode: Mode = mode.parse().map_err(value_err)?;
        let inner = mape::Controller::new(default_architecture(), mode, injection_specs(injections)?).map_err(runtime_err)?;
        Ok(Self { inner })
    }

    fn run_iteration(&mut self, loop_index: u64) -> PyResult<PyRunRecord> {
        Ok(self.inner.run_iteration(loop_index).map_err(runtime_err)?.into())
    }

    fn raise_exception(&mut self, loop_index: u64, component: String) -> PyResult<()> {
        self.inner
            .architecture_mut()
            .apply(loop_index, Change::RaiseException { component })
            .map_err(value_err)?;
        Ok(())
    }

    fn utility(&self) -> f64 {
        self.inner.architecture().utility()
    }

    fn components(&self) -> Vec<String> {
        arch_ids(self.inner.architecture())
    }

    /// `(template, target, verdict)` per monitor; empty in baseline mode.
    fn monitor_verdicts(&self) -> Vec<(String, String, &'static str)> {
        self.inner
            .instances()
            .unwrap_or_default()
            .iter()
            .map(|i| (i.template.to_string(), i.target.clone(), i.last_verdict.as_str()))
            .collect()
    }

    fn events_jsonl(&self) -> String {
        self.inner.architecture().events_jsonl()
    }
}

fn arch_ids(a: &Architecture) -> Vec<String> {
    a.components().map(|c| c.id.clone()).collect()
}

/// Runs a scenario file and returns `(csv_text, events_jsonl)`.
#[pyfunction]
#[pyo3(signature = (path, seed = None, mode = None))]
fn run_scenario(path: PathBuf, seed: Option<u64>, mode: Option<&str>) -> PyResult<(String, String)> {
    let mode = mode.map(str::parse::<Mode>).transpose().map_err(value_err)?;
    let scenario = Scenario::load(&path).map_err(value_err)?;
    let outcome = harness::run_scenario(&scenario, seed, mode).map_err(runtime_err)?;
    let csv = harness::render_csv(&outcome).map_err(runtime_err)?;
    Ok((csv, outcome.final_architecture.events_jsonl()))
}

/// Monitor-versus-oracle check of a corpus text; returns the report text
/// and whether every formula passed.
#[pyfunction]
#[pyo3(signature = (corpus, max_trace_len = 6))]
fn oracle_check(corpus: &str, max_trace_len: usize) -> PyResult<(String, bool)> {
    let report = harness::oracle_check(corpus, std::path::Path::new("."), max_trace_len).map_err(value_err)?;
    Ok((report.to_string(), report.passed()))
}

#[pymodule]
fn rvheal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFormula>()?;
    m.add_class::<PyMonitor>()?;
    m.add_class::<PyController>()?;
    m.add_class::<PyRunRecord>()?;
    m.add_function(wrap_pyfunction!(parse_formula, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(random_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    m.add("BUNDLED_CORPUS", harness::bundled::CORPUS)?;
    Ok(())
}
