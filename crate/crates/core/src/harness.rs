//! Scenario files, run CSVs and the three command-line operations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Architecture, ArchitectureSpec, ComponentSpec, ConnectorSpec, ModelError};
use crate::inject::{random_schedule, InjectionError, InjectionSpec, PRNG_NAME};
use crate::ltl::{for_each_word, parse, BoundedOracle, Letter, LtlError, LtlFormula, Verdict};
use crate::mape::{Controller, MapeError, Mode, RunRecord};
use crate::monitor::{build_monitor, MooreMonitor, SynthError};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 10] = [
    "loop",
    "injected_kind",
    "injected_target",
    "diagnosed_kind",
    "diagnosed_target",
    "root_target",
    "actions",
    "detect_us",
    "heal_us",
    "utility",
];

/// Largest atom count `oracle-check` accepts.
pub const ORACLE_MAX_ATOMS: usize = 3;
/// Stem and loop bounds of the reference oracle used by `oracle-check`.
pub const ORACLE_STEM_BOUND: usize = 2;
pub const ORACLE_LOOP_BOUND: usize = 3;
/// Random traces per formula when the alphabet is too wide to enumerate.
pub const ORACLE_RANDOM_TRACES: usize = 1000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Ltl(#[from] LtlError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Injection(#[from] InjectionError),
    #[error(transparent)]
    Mape(#[from] MapeError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("corpus line {line}: {msg}")]
    Corpus { line: usize, msg: String },
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/// Asks for a seeded schedule instead of listing injections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RandomInjections {
    pub count: usize,
    /// Injection loops are drawn from `0..maxLoop`; defaults to `loops`.
    #[serde(default)]
    pub max_loop: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Injections {
    Listed(Vec<InjectionSpec>),
    Random(RandomInjections),
}

impl Default for Injections {
    fn default() -> Self {
        Injections::Listed(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub mode: Mode,
    pub seed: u64,
    pub loops: u64,
    pub exception_threshold: i64,
    pub failure_threshold: i64,
    pub components: Vec<ComponentSpec>,
    pub connectors: Vec<ConnectorSpec>,
    #[serde(default)]
    pub injections: Injections,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&read(path)?).map_err(|e| match e {
            HarnessError::Scenario(msg) => HarnessError::Scenario(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Default topology and thresholds with the given schedule.
    pub fn with_default_architecture(mode: Mode, seed: u64, loops: u64, injections: Injections) -> Self {
        let spec = crate::arch::default_architecture_spec();
        Scenario {
            schema: SCHEMA_VERSION,
            mode,
            seed,
            loops,
            exception_threshold: spec.exception_threshold,
            failure_threshold: spec.failure_threshold,
            components: spec.components,
            connectors: spec.connectors,
            injections,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Scenario(msg));
        if self.schema != SCHEMA_VERSION {
            return bad(format!("schema {} is not supported (expected {SCHEMA_VERSION})", self.schema));
        }
        if self.loops < 1 {
            return bad("loops must be at least 1".into());
        }
        match &self.injections {
            Injections::Listed(list) => {
                if let Some(s) = list.iter().find(|s| s.loop_index >= self.loops) {
                    return bad(format!("injection at loop {} is outside 0..{}", s.loop_index, self.loops));
                }
            }
            Injections::Random(r) => {
                if r.max_loop.is_some_and(|m| m == 0 || m > self.loops) {
                    return bad(format!("maxLoop must lie in 1..={}", self.loops));
                }
            }
        }
        Architecture::load(&self.architecture_spec()).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        Ok(())
    }

    pub fn architecture_spec(&self) -> ArchitectureSpec {
        ArchitectureSpec {
            exception_threshold: self.exception_threshold,
            failure_threshold: self.failure_threshold,
            components: self.components.clone(),
            connectors: self.connectors.clone(),
        }
    }

    pub fn architecture(&self) -> Result<Architecture, HarnessError> {
        Ok(Architecture::load(&self.architecture_spec())?)
    }

    /// Concrete schedule: listed injections with component names resolved to
    /// ids, or a random schedule drawn from `seed`.
    pub fn schedule(&self, arch: &Architecture, seed: u64) -> Result<Vec<InjectionSpec>, HarnessError> {
        match &self.injections {
            Injections::Listed(list) => list
                .iter()
                .map(|s| {
                    let target = if s.kind.targets_connector() {
                        s.target.clone()
                    } else {
                        arch.resolve_component(&s.target)?
                    };
                    Ok(InjectionSpec { target, ..s.clone() })
                })
                .collect(),
            Injections::Random(r) => Ok(random_schedule(seed, arch, r.count, r.max_loop.unwrap_or(self.loops))?),
        }
    }
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub mode: Mode,
    pub schedule: Vec<InjectionSpec>,
    pub records: Vec<RunRecord>,
    pub final_architecture: Architecture,
    pub initial_utility: f64,
}

impl RunOutcome {
    /// (loop, kind, target) of every diagnosis, in emission order.
    pub fn diagnosis_keys(&self) -> Vec<(u64, String, String)> {
        self.records
            .iter()
            .flat_map(|r| r.diagnoses.iter().map(|d| (d.loop_index, d.kind.to_string(), d.target.clone())))
            .collect()
    }
}

pub fn run_scenario(scenario: &Scenario, seed: Option<u64>, mode: Option<Mode>) -> Result<RunOutcome, HarnessError> {
    let seed = seed.unwrap_or(scenario.seed);
    let mode = mode.unwrap_or(scenario.mode);
    let arch = scenario.architecture()?;
    let schedule = scenario.schedule(&arch, seed)?;
    let initial_utility = arch.utility();
    let mut ctl = Controller::new(arch, mode, schedule.clone())?;
    let records = (0..scenario.loops)
        .map(|l| ctl.run_iteration(l))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunOutcome {
        seed,
        mode,
        schedule,
        records,
        final_architecture: ctl.architecture().clone(),
        initial_utility,
    })
}

/// Comment line recording everything needed to reproduce the run.
pub fn csv_header_comment(outcome: &RunOutcome) -> String {
    let arch = &outcome.final_architecture;
    format!(
        "# seed={} mode={} prng={} exceptionThreshold={} failureThreshold={}",
        outcome.seed,
        outcome.mode,
        PRNG_NAME,
        arch.exception_threshold(),
        arch.failure_threshold()
    )
}

/// One row per diagnosis; an injection nobody diagnosed gets its own row; a
/// loop with neither gets one row with empty failure columns.
pub fn render_csv(outcome: &RunOutcome) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for rec in &outcome.records {
        let loop_s = rec.loop_index.to_string();
        let heal = rec.heal_us.to_string();
        let utility = rec.utility.to_string();
        let mut matched = vec![false; rec.injections.len()];
        let mut rows = 0;
        for (i, d) in rec.diagnoses.iter().enumerate() {
            let inj = rec
                .injections
                .iter()
                .position(|s| s.kind == d.kind && s.target == d.target);
            if let Some(j) = inj {
                matched[j] = true;
            }
            let (ik, it) = inj.map_or((String::new(), String::new()), |j| {
                (rec.injections[j].kind.to_string(), rec.injections[j].target.clone())
            });
            let actions = rec.plan.per_diagnosis[i].iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";");
            w.write_record([
                loop_s.as_str(),
                &ik,
                &it,
                &d.kind.to_string(),
                &d.target,
                &d.root_target,
                &actions,
                &rec.detect_us[i].to_string(),
                &heal,
                &utility,
            ])?;
            rows += 1;
        }
        for (s, _) in rec.injections.iter().zip(&matched).filter(|(_, m)| !**m) {
            w.write_record([loop_s.as_str(), &s.kind.to_string(), &s.target, "", "", "", "", "", &heal, &utility])?;
            rows += 1;
        }
        if rows == 0 {
            w.write_record([loop_s.as_str(), "", "", "", "", "", "", "", &heal, &utility])?;
        }
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv output is UTF-8");
    Ok(format!("{}\n{body}", csv_header_comment(outcome)))
}

/// Event log path used when none is given: `<csv>.events.jsonl`.
pub fn default_events_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".events.jsonl");
    PathBuf::from(name)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outcome: RunOutcome,
    pub csv_path: PathBuf,
    pub events_path: PathBuf,
}

pub fn cmd_run(
    scenario_path: &Path,
    csv_path: &Path,
    seed: Option<u64>,
    mode: Option<Mode>,
    events_path: Option<&Path>,
) -> Result<RunSummary, HarnessError> {
    let scenario = Scenario::load(scenario_path)?;
    let outcome = run_scenario(&scenario, seed, mode)?;
    write(csv_path, &render_csv(&outcome)?)?;
    let events_path = events_path.map_or_else(|| default_events_path(csv_path), Path::to_path_buf);
    write(&events_path, &outcome.final_architecture.events_jsonl())?;
    Ok(RunSummary {
        outcome,
        csv_path: csv_path.to_path_buf(),
        events_path,
    })
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

/// `states=N top=T bottom=B inconclusive=I`
pub fn census_line(m: &MooreMonitor) -> String {
    let census = m.census();
    let n = |v| census.get(&v).copied().unwrap_or(0);
    format!(
        "states={} top={} bottom={} inconclusive={}",
        m.state_count(),
        n(Verdict::Top),
        n(Verdict::Bottom),
        n(Verdict::Inconclusive)
    )
}

pub fn cmd_synth(formula: &str, dot: Option<&Path>, table: Option<&Path>) -> Result<String, HarnessError> {
    let m = build_monitor(&parse(formula)?)?;
    if let Some(p) = dot {
        write(p, &m.to_dot())?;
    }
    if let Some(p) = table {
        write(p, &m.to_table())?;
    }
    Ok(census_line(&m))
}

// ---------------------------------------------------------------------------
// oracle-check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaCheck {
    pub formula: String,
    pub traces: usize,
    pub mismatches: usize,
    /// First disagreement: (trace, monitor verdict, oracle verdict).
    pub first_mismatch: Option<(Vec<Letter>, Verdict, Verdict)>,
}

impl FormulaCheck {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleReport {
    pub checks: Vec<FormulaCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(FormulaCheck::passed)
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            let status = if c.passed() { "PASS" } else { "FAIL" };
            write!(f, "{status} {} traces={} mismatches={}", c.formula, c.traces, c.mismatches)?;
            if let Some((trace, got, want)) = &c.first_mismatch {
                let t: Vec<String> = trace.iter().map(Letter::to_string).collect();
                write!(f, " first=[{}] monitor={got} oracle={want}", t.join(" "))?;
            }
            writeln!(f)?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed()).count();
        write!(f, "{} formulas, {failed} failed", self.checks.len())
    }
}

/// Every trace of length `1..=max_len` over the monitor alphabet when it has
/// at most two atoms; otherwise `ORACLE_RANDOM_TRACES` seeded random traces of
/// length `max_len`, checked at every prefix.
pub fn check_monitor(formula: &LtlFormula, m: &MooreMonitor, max_len: usize, seed: u64) -> Result<FormulaCheck, HarnessError> {
    let oracle = BoundedOracle::new(formula, ORACLE_STEM_BOUND, ORACLE_LOOP_BOUND)?;
    let letters: Vec<Letter> = (0..m.letter_count()).map(|x| m.letter(x)).collect();
    let mut check = FormulaCheck {
        formula: formula.to_string(),
        traces: 0,
        mismatches: 0,
        first_mismatch: None,
    };
    let compare = |trace: &[Letter], check: &mut FormulaCheck| -> Result<(), HarnessError> {
        let got = m.run(trace)?;
        let want = oracle.verdict(trace);
        check.traces += 1;
        if got != want {
            check.mismatches += 1;
            check.first_mismatch.get_or_insert_with(|| (trace.to_vec(), got, want));
        }
        Ok(())
    };
    compare(&[], &mut check)?;
    if m.alphabet().len() <= 2 {
        for len in 1..=max_len {
            let mut err = None;
            for_each_word(&letters, len, &mut |w| {
                if err.is_none() {
                    err = compare(w, &mut check).err();
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..ORACLE_RANDOM_TRACES {
            let trace: Vec<Letter> = (0..max_len).map(|_| letters[rng.gen_range(0..letters.len())].clone()).collect();
            for len in 1..=max_len {
                compare(&trace[..len], &mut check)?;
            }
        }
    }
    Ok(check)
}

/// Parses a corpus: one formula per line, blank lines and `#` comments
/// skipped. A line `formula<TAB>path` checks the transition table at `path`
/// (relative to `base`) instead of a freshly synthesized monitor.
pub fn oracle_check(corpus: &str, base: &Path, max_len: usize) -> Result<OracleReport, HarnessError> {
    let mut report = OracleReport::default();
    for (i, raw) in corpus.lines().enumerate() {
        let line = i + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let (formula_text, table) = match raw.split_once('\t') {
            Some((f, t)) => (f.trim(), Some(t.trim())),
            None => (text, None),
        };
        let formula = parse(formula_text).map_err(|e| HarnessError::Corpus { line, msg: e.to_string() })?;
        let atoms = formula.atoms();
        if atoms.len() > ORACLE_MAX_ATOMS {
            return Err(HarnessError::Corpus {
                line,
                msg: format!("{} atoms exceed the limit of {ORACLE_MAX_ATOMS}", atoms.len()),
            });
        }
        let monitor = match table {
            Some(path) => MooreMonitor::from_table(atoms.into_iter().collect(), &read(&base.join(path))?)?,
            None => build_monitor(&formula)?,
        };
        report.checks.push(check_monitor(&formula, &monitor, max_len, line as u64)?);
    }
    Ok(report)
}

pub fn cmd_oracle_check(corpus_path: &Path, max_len: usize) -> Result<OracleReport, HarnessError> {
    let base = corpus_path.parent().unwrap_or(Path::new("."));
    oracle_check(&read(corpus_path)?, base, max_len)
}

/// Bundled data shipped with the crate.
pub mod bundled {
    pub const CORPUS: &str = include_str!("../data/corpus.txt");
    pub const FOUR_FAILURES: &str = include_str!("../data/scenarios/four-failures.json");
    pub const HEALTHY: &str = include_str!("../data/scenarios/healthy.json");
    pub const RANDOM: &str = include_str!("../data/scenarios/random.json");
    pub const OVERLAPPING: &str = include_str!("../data/scenarios/overlapping.json");

    /// (file name, contents) of every bundled scenario.
    pub const SCENARIOS: [(&str, &str); 4] = [
        ("four-failures.json", FOUR_FAILURES),
        ("healthy.json", HEALTHY),
        ("random.json", RANDOM),
        ("overlapping.json", OVERLAPPING),
    ];
}

/// Verdict counts of a monitor keyed by verdict name.
pub fn census_map(m: &MooreMonitor) -> BTreeMap<String, usize> {
    m.census().into_iter().map(|(v, n)| (v.to_string(), n)).collect()
}

/// Human-readable list of a run's diagnoses, one per line.
pub fn describe_outcome(outcome: &RunOutcome) -> String {
    let mut s = String::new();
    for rec in &outcome.records {
        for d in &rec.diagnoses {
            let _ = writeln!(s, "loop {}: {} on {} (root {})", d.loop_index, d.kind, d.target, d.root_target);
        }
    }
    let _ = write!(
        s,
        "{} loops, {} diagnoses, utility {} -> {}",
        outcome.records.len(),
        outcome.records.iter().map(|r| r.diagnoses.len()).sum::<usize>(),
        outcome.initial_utility,
        outcome.final_architecture.utility()
    );
    s
}
