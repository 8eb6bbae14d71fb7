//! Three-valued monitor synthesis.
//!
//! Pipeline: NNF formula → tableau Büchi automaton (generalized acceptance,
//! one set per eventuality, degeneralized with a round-robin counter) →
//! per-state language emptiness → subset construction of the "some model
//! extension still exists" prefix automaton. Running the construction for
//! both `φ` and `¬φ` and taking the product yields a Moore machine whose
//! outputs are TOP, BOTTOM or INCONCLUSIVE.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

use crate::ltl::{LassoWord, Letter, LtlFormula, Proposition, Verdict};

/// Default cap on automaton states produced by any stage.
pub const DEFAULT_STATE_BUDGET: usize = 1 << 16;

/// Letters are expanded explicitly, so alphabets stay small.
pub const MAX_ALPHABET: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("state budget exceeded: more than {limit} states")]
    StateBudget { limit: usize },
    #[error("alphabet of {0} propositions exceeds the limit of {MAX_ALPHABET}")]
    AlphabetTooLarge(usize),
    #[error("proposition `{0}` is not in the monitor alphabet")]
    UnknownProposition(String),
    #[error("state q{0} does not exist")]
    InvalidState(usize),
    #[error("formula is not in negation normal form")]
    NotNnf,
    #[error("transition table line {line}: {msg}")]
    Table { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    pub state_budget: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            state_budget: DEFAULT_STATE_BUDGET,
        }
    }
}

/// Conjunction of literals over the alphabet, as bit masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Guard {
    pub pos: u32,
    pub neg: u32,
}

impl Guard {
    pub fn matches(self, letter: usize) -> bool {
        let letter = letter as u32;
        letter & self.pos == self.pos && letter & self.neg == 0
    }

    pub fn render(self, alphabet: &[Proposition]) -> String {
        let lits: Vec<String> = alphabet
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let bit = 1 << i;
                if self.pos & bit != 0 {
                    Some(p.to_string())
                } else if self.neg & bit != 0 {
                    Some(format!("!{p}"))
                } else {
                    None
                }
            })
            .collect();
        if lits.is_empty() {
            "true".into()
        } else {
            lits.join(" && ")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NbaEdge {
    pub guard: Guard,
    pub target: usize,
}

/// Nondeterministic Büchi automaton with state-based acceptance.
#[derive(Debug, Clone)]
pub struct Nba {
    pub alphabet: Vec<Proposition>,
    pub edges: Vec<Vec<NbaEdge>>,
    pub initial: Vec<usize>,
    pub accepting: Vec<bool>,
}

impl Nba {
    pub fn state_count(&self) -> usize {
        self.edges.len()
    }

    /// Is `w` in the language? Decided by emptiness of the product with the lasso.
    pub fn accepts_lasso(&self, w: &LassoWord) -> Result<bool, SynthError> {
        let len = w.len();
        let masks = (0..len)
            .map(|i| letter_mask(&self.alphabet, w.letter(i)))
            .collect::<Result<Vec<_>, _>>()?;
        let n = self.state_count();
        let node = |q: usize, pos: usize| q * len + pos;
        let mut succ = vec![Vec::new(); n * len];
        let mut accepting = vec![false; n * len];
        for q in 0..n {
            for pos in 0..len {
                accepting[node(q, pos)] = self.accepting[q];
                for e in &self.edges[q] {
                    if e.guard.matches(masks[pos]) {
                        succ[node(q, pos)].push(node(e.target, w.succ(pos)));
                    }
                }
            }
        }
        let live = live_states(&succ, &accepting);
        Ok(self.initial.iter().any(|&q| live[node(q, 0)]))
    }
}

fn letter_mask(alphabet: &[Proposition], letter: &Letter) -> Result<usize, SynthError> {
    let mut mask = 0;
    for name in letter.iter() {
        let i = alphabet
            .iter()
            .position(|p| p.to_string() == name)
            .ok_or_else(|| SynthError::UnknownProposition(name.to_string()))?;
        mask |= 1 << i;
    }
    Ok(mask)
}

// ---------------------------------------------------------------------------
// Tableau
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Cover {
    guard: Guard,
    next: BTreeSet<LtlFormula>,
    /// Eventualities whose fulfilment this step postponed.
    pending: BTreeSet<usize>,
}

struct Tableau<'a> {
    alphabet: &'a [Proposition],
    eventualities: Vec<LtlFormula>,
}

impl Tableau<'_> {
    fn bit(&self, p: &Proposition) -> u32 {
        let i = self
            .alphabet
            .iter()
            .position(|q| q == p)
            .expect("atom outside the tableau alphabet");
        1 << i
    }

    fn eventuality(&self, f: &LtlFormula) -> usize {
        self.eventualities
            .iter()
            .position(|e| e == f)
            .expect("eventuality registered during closure scan")
    }

    fn expand(&self, mut todo: Vec<LtlFormula>, mut seen: BTreeSet<LtlFormula>, mut cov: Cover, out: &mut BTreeSet<Cover>) {
        use LtlFormula as F;
        while let Some(g) = todo.pop() {
            if !seen.insert(g.clone()) {
                continue;
            }
            match &g {
                F::True => {}
                F::False => return,
                F::Atom(p) => {
                    let bit = self.bit(p);
                    if cov.guard.neg & bit != 0 {
                        return;
                    }
                    cov.guard.pos |= bit;
                }
                F::Not(inner) => {
                    let F::Atom(p) = inner.as_ref() else {
                        unreachable!("tableau input is in NNF")
                    };
                    let bit = self.bit(p);
                    if cov.guard.pos & bit != 0 {
                        return;
                    }
                    cov.guard.neg |= bit;
                }
                F::And(a, b) => {
                    todo.push((**a).clone());
                    todo.push((**b).clone());
                }
                F::Or(a, b) => {
                    let mut left = todo.clone();
                    left.push((**a).clone());
                    self.expand(left, seen.clone(), cov.clone(), out);
                    todo.push((**b).clone());
                }
                F::Next(a) => {
                    if **a != F::True {
                        cov.next.insert((**a).clone());
                    }
                }
                F::Until(a, b) => {
                    let mut now = todo.clone();
                    now.push((**b).clone());
                    self.expand(now, seen.clone(), cov.clone(), out);
                    todo.push((**a).clone());
                    cov.next.insert(g.clone());
                    cov.pending.insert(self.eventuality(&g));
                }
                F::Release(a, b) => {
                    let mut now = todo.clone();
                    now.push((**a).clone());
                    now.push((**b).clone());
                    self.expand(now, seen.clone(), cov.clone(), out);
                    todo.push((**b).clone());
                    cov.next.insert(g.clone());
                }
                F::Globally(a) => {
                    todo.push((**a).clone());
                    cov.next.insert(g.clone());
                }
                F::Finally(a) => {
                    let mut now = todo.clone();
                    now.push((**a).clone());
                    self.expand(now, seen.clone(), cov.clone(), out);
                    cov.next.insert(g.clone());
                    cov.pending.insert(self.eventuality(&g));
                }
                F::Implies(..) => unreachable!("tableau input is in NNF"),
            }
        }
        out.insert(cov);
    }
}

fn collect_eventualities(f: &LtlFormula, out: &mut Vec<LtlFormula>) {
    if matches!(f, LtlFormula::Until(..) | LtlFormula::Finally(_)) && !out.contains(f) {
        out.push(f.clone());
    }
    for c in f.children() {
        collect_eventualities(c, out);
    }
}

/// Tableau translation of an NNF formula, over the formula's own atoms.
pub fn ltl_to_nba(f: &LtlFormula) -> Result<Nba, SynthError> {
    let alphabet: Vec<Proposition> = f.atoms().into_iter().collect();
    ltl_to_nba_over(f, &alphabet, SynthOptions::default())
}

/// Tableau translation of an NNF formula over a given alphabet, which must
/// contain every atom of `f`.
pub fn ltl_to_nba_over(f: &LtlFormula, alphabet: &[Proposition], opts: SynthOptions) -> Result<Nba, SynthError> {
    if !f.is_nnf() {
        return Err(SynthError::NotNnf);
    }
    if alphabet.len() > MAX_ALPHABET {
        return Err(SynthError::AlphabetTooLarge(alphabet.len()));
    }
    let mut eventualities = Vec::new();
    collect_eventualities(f, &mut eventualities);
    let tableau = Tableau {
        alphabet,
        eventualities,
    };
    let k = tableau.eventualities.len();

    // Generalized automaton: states are obligation sets, edges carry the set
    // of eventualities they fulfil.
    let start: BTreeSet<LtlFormula> = [f.clone()].into_iter().filter(|g| *g != LtlFormula::True).collect();
    let mut ids: HashMap<BTreeSet<LtlFormula>, usize> = HashMap::new();
    let mut obligations = vec![start.clone()];
    ids.insert(start, 0);
    let mut gba: Vec<Vec<(Guard, usize, BTreeSet<usize>)>> = Vec::new();
    let mut i = 0;
    while i < obligations.len() {
        let mut covers = BTreeSet::new();
        let todo: Vec<LtlFormula> = obligations[i].iter().cloned().collect();
        tableau.expand(todo, BTreeSet::new(), Cover::default_cover(), &mut covers);
        let mut out = Vec::new();
        for cov in covers {
            let target = match ids.get(&cov.next) {
                Some(&t) => t,
                None => {
                    if obligations.len() >= opts.state_budget {
                        return Err(SynthError::StateBudget {
                            limit: opts.state_budget,
                        });
                    }
                    ids.insert(cov.next.clone(), obligations.len());
                    obligations.push(cov.next.clone());
                    obligations.len() - 1
                }
            };
            let fulfilled = (0..k).filter(|e| !cov.pending.contains(e)).collect();
            out.push((cov.guard, target, fulfilled));
        }
        gba.push(out);
        i += 1;
    }

    // Degeneralize: (state, counter), accepting when the counter reaches k.
    let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut states = vec![(0usize, 0usize)];
    ids.insert((0, 0), 0);
    let mut edges: Vec<Vec<NbaEdge>> = Vec::new();
    let mut i = 0;
    while i < states.len() {
        let (q, c) = states[i];
        let base = if c == k { 0 } else { c };
        let mut out = Vec::new();
        for (guard, target, fulfilled) in &gba[q] {
            let mut j = base;
            while j < k && fulfilled.contains(&j) {
                j += 1;
            }
            let key = (*target, j);
            let t = match ids.get(&key) {
                Some(&t) => t,
                None => {
                    if states.len() >= opts.state_budget {
                        return Err(SynthError::StateBudget {
                            limit: opts.state_budget,
                        });
                    }
                    ids.insert(key, states.len());
                    states.push(key);
                    states.len() - 1
                }
            };
            let edge = NbaEdge {
                guard: *guard,
                target: t,
            };
            if !out.contains(&edge) {
                out.push(edge);
            }
        }
        edges.push(out);
        i += 1;
    }
    let accepting = states.iter().map(|&(_, c)| c == k).collect();
    Ok(Nba {
        alphabet: alphabet.to_vec(),
        edges,
        initial: vec![0],
        accepting,
    })
}

impl Cover {
    fn default_cover() -> Self {
        Cover {
            guard: Guard::default(),
            next: BTreeSet::new(),
            pending: BTreeSet::new(),
        }
    }
}

/// Marks the nodes from which some path reaches a cycle through an
/// accepting node.
fn live_states(succ: &[Vec<usize>], accepting: &[bool]) -> Vec<bool> {
    let n = succ.len();
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, 0);
    let nodes: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for (s, ts) in succ.iter().enumerate() {
        for &t in ts {
            g.add_edge(nodes[s], nodes[t], ());
        }
    }
    let mut live = vec![false; n];
    for scc in tarjan_scc(&g) {
        let nontrivial = scc.len() > 1 || {
            let s = scc[0].index();
            succ[s].contains(&s)
        };
        if nontrivial && scc.iter().any(|v| accepting[v.index()]) {
            for v in &scc {
                live[v.index()] = true;
            }
        }
    }
    let mut preds = vec![Vec::new(); n];
    for (s, ts) in succ.iter().enumerate() {
        for &t in ts {
            preds[t].push(s);
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&s| live[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &preds[t] {
            if !live[s] {
                live[s] = true;
                queue.push_back(s);
            }
        }
    }
    live
}

/// States from which some accepting run exists.
pub fn nonempty_states(nba: &Nba) -> BTreeSet<usize> {
    let succ: Vec<Vec<usize>> = nba
        .edges
        .iter()
        .map(|es| es.iter().map(|e| e.target).collect())
        .collect();
    live_states(&succ, &nba.accepting)
        .into_iter()
        .enumerate()
        .filter_map(|(i, l)| l.then_some(i))
        .collect()
}

// ---------------------------------------------------------------------------
// Prefix automaton
// ---------------------------------------------------------------------------

/// Deterministic automaton accepting the finite words that still have an
/// infinite extension in the NBA's language. Each state is the set of live
/// NBA states reachable on the word read so far; the empty set is the sink.
#[derive(Debug, Clone)]
pub struct PrefixDfa {
    pub alphabet: Vec<Proposition>,
    pub subsets: Vec<Vec<usize>>,
    /// `delta[state][letter mask]`
    pub delta: Vec<Vec<usize>>,
    pub initial: usize,
    pub accepting: Vec<bool>,
}

impl PrefixDfa {
    pub fn run(&self, word: &[Letter]) -> Result<usize, SynthError> {
        let mut q = self.initial;
        for x in word {
            q = self.delta[q][letter_mask(&self.alphabet, x)?];
        }
        Ok(q)
    }

    pub fn accepts(&self, word: &[Letter]) -> Result<bool, SynthError> {
        Ok(self.accepting[self.run(word)?])
    }
}

pub fn determinize_prefix(nba: &Nba, nonempty: &BTreeSet<usize>) -> Result<PrefixDfa, SynthError> {
    determinize_prefix_with(nba, nonempty, SynthOptions::default())
}

pub fn determinize_prefix_with(nba: &Nba, nonempty: &BTreeSet<usize>, opts: SynthOptions) -> Result<PrefixDfa, SynthError> {
    // Dead NBA states never lead back to live ones, so dropping them keeps
    // the accepted language and makes the empty subset the unique sink.
    let keep = |set: BTreeSet<usize>| -> Vec<usize> { set.into_iter().filter(|q| nonempty.contains(q)).collect() };
    let letters = 1usize << nba.alphabet.len();
    let start = keep(nba.initial.iter().copied().collect());
    let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
    ids.insert(start.clone(), 0);
    let mut subsets = vec![start];
    let mut delta = Vec::new();
    let mut i = 0;
    while i < subsets.len() {
        let mut row = Vec::with_capacity(letters);
        for m in 0..letters {
            let succ: BTreeSet<usize> = subsets[i]
                .iter()
                .flat_map(|&q| nba.edges[q].iter())
                .filter(|e| e.guard.matches(m))
                .map(|e| e.target)
                .collect();
            let succ = keep(succ);
            let t = match ids.get(&succ) {
                Some(&t) => t,
                None => {
                    if subsets.len() >= opts.state_budget {
                        return Err(SynthError::StateBudget {
                            limit: opts.state_budget,
                        });
                    }
                    ids.insert(succ.clone(), subsets.len());
                    subsets.push(succ);
                    subsets.len() - 1
                }
            };
            row.push(t);
        }
        delta.push(row);
        i += 1;
    }
    let accepting = subsets.iter().map(|s| !s.is_empty()).collect();
    Ok(PrefixDfa {
        alphabet: nba.alphabet.clone(),
        subsets,
        delta,
        initial: 0,
        accepting,
    })
}

// ---------------------------------------------------------------------------
// Moore monitor
// ---------------------------------------------------------------------------

/// Deterministic monitor with a verdict per state. States are numbered in
/// breadth-first order from the initial state `q0`, exploring letters in
/// ascending mask order, so equal monitors are structurally identical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MooreMonitor {
    alphabet: Vec<Proposition>,
    /// `delta[state][letter mask]`
    delta: Vec<Vec<usize>>,
    output: Vec<Verdict>,
    initial: usize,
}

impl MooreMonitor {
    /// Raw constructor; checks totality and index ranges only.
    pub fn from_parts(
        alphabet: Vec<Proposition>,
        delta: Vec<Vec<usize>>,
        output: Vec<Verdict>,
        initial: usize,
    ) -> Result<Self, SynthError> {
        if alphabet.len() > MAX_ALPHABET {
            return Err(SynthError::AlphabetTooLarge(alphabet.len()));
        }
        let n = output.len();
        if initial >= n {
            return Err(SynthError::InvalidState(initial));
        }
        if delta.len() != n {
            return Err(SynthError::InvalidState(delta.len()));
        }
        for row in &delta {
            if row.len() != 1 << alphabet.len() {
                return Err(SynthError::Table {
                    line: 0,
                    msg: "transition row is not total".into(),
                });
            }
            if let Some(&t) = row.iter().find(|&&t| t >= n) {
                return Err(SynthError::InvalidState(t));
            }
        }
        Ok(Self {
            alphabet,
            delta,
            output,
            initial,
        })
    }

    pub fn alphabet(&self) -> &[Proposition] {
        &self.alphabet
    }

    pub fn state_count(&self) -> usize {
        self.output.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn output(&self, q: usize) -> Verdict {
        self.output[q]
    }

    pub fn successor(&self, q: usize, mask: usize) -> usize {
        self.delta[q][mask]
    }

    pub fn letter_count(&self) -> usize {
        1 << self.alphabet.len()
    }

    pub fn letter(&self, mask: usize) -> Letter {
        Letter::from_mask(&self.alphabet, mask)
    }

    pub fn mask_of(&self, x: &Letter) -> Result<usize, SynthError> {
        letter_mask(&self.alphabet, x)
    }

    pub fn step(&self, q: usize, x: &Letter) -> Result<(usize, Verdict), SynthError> {
        if q >= self.state_count() {
            return Err(SynthError::InvalidState(q));
        }
        let t = self.delta[q][self.mask_of(x)?];
        Ok((t, self.output[t]))
    }

    /// Verdict after reading `trace` from the initial state.
    pub fn run(&self, trace: &[Letter]) -> Result<Verdict, SynthError> {
        let mut q = self.initial;
        for x in trace {
            q = self.step(q, x)?.0;
        }
        Ok(self.output[q])
    }

    pub fn census(&self) -> BTreeMap<Verdict, usize> {
        let mut out = BTreeMap::new();
        for v in &self.output {
            *out.entry(*v).or_insert(0) += 1;
        }
        out
    }

    /// All successors of TOP states are TOP; same for BOTTOM.
    pub fn satisfies_verdict_trap(&self) -> bool {
        (0..self.state_count()).all(|q| match self.output[q] {
            Verdict::Inconclusive => true,
            v => self.delta[q].iter().all(|&t| self.output[t] == v),
        })
    }

    /// Plain-text table, one `state TAB letter TAB nextstate TAB verdict` line
    /// per transition. The verdict column is the output of `state`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for q in 0..self.state_count() {
            for m in 0..self.letter_count() {
                let _ = writeln!(
                    out,
                    "q{}\t{}\tq{}\t{}",
                    q,
                    self.letter(m),
                    self.delta[q][m],
                    self.output[q]
                );
            }
        }
        out
    }

    /// Inverse of [`to_table`](Self::to_table); `q0` is the initial state.
    pub fn from_table(alphabet: Vec<Proposition>, text: &str) -> Result<Self, SynthError> {
        let parse_state = |s: &str, line: usize| {
            s.strip_prefix('q')
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| SynthError::Table {
                    line,
                    msg: format!("bad state `{s}`"),
                })
        };
        let mut rows: BTreeMap<usize, (Verdict, BTreeMap<usize, usize>)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() != 4 {
                return Err(SynthError::Table {
                    line,
                    msg: "expected 4 tab-separated columns".into(),
                });
            }
            let q = parse_state(cols[0], line)?;
            let letter: Letter = cols[1].parse().map_err(|e| SynthError::Table {
                line,
                msg: format!("{e}"),
            })?;
            let m = letter_mask(&alphabet, &letter)?;
            let t = parse_state(cols[2], line)?;
            let v: Verdict = cols[3].parse().map_err(|msg| SynthError::Table { line, msg })?;
            let entry = rows.entry(q).or_insert((v, BTreeMap::new()));
            if entry.0 != v {
                return Err(SynthError::Table {
                    line,
                    msg: format!("conflicting verdicts for q{q}"),
                });
            }
            if entry.1.insert(m, t).is_some() {
                return Err(SynthError::Table {
                    line,
                    msg: format!("duplicate transition from q{q} on {letter}"),
                });
            }
        }
        let n = rows.len();
        if rows.keys().copied().ne(0..n) {
            return Err(SynthError::Table {
                line: 0,
                msg: "states must be numbered q0..qN without gaps".into(),
            });
        }
        let letters = 1usize << alphabet.len();
        let mut delta = Vec::with_capacity(n);
        let mut output = Vec::with_capacity(n);
        for (q, (v, row)) in rows {
            if row.len() != letters {
                return Err(SynthError::Table {
                    line: 0,
                    msg: format!("q{q} has {} transitions, expected {letters}", row.len()),
                });
            }
            delta.push(row.into_values().collect());
            output.push(v);
        }
        Self::from_parts(alphabet, delta, output, 0)
    }

    /// Graphviz rendering; nodes are labelled `qN/verdict`, edges carry a
    /// predicate over the alphabet in formula syntax.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph monitor {\n  rankdir=LR;\n  init [shape=point];\n");
        let _ = writeln!(out, "  init -> q{};", self.initial);
        for q in 0..self.state_count() {
            let shape = match self.output[q] {
                Verdict::Inconclusive => "circle",
                _ => "doublecircle",
            };
            let _ = writeln!(out, "  q{q} [shape={shape}, label=\"q{q}/{}\"];", self.output[q]);
        }
        for q in 0..self.state_count() {
            let mut by_target: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for m in 0..self.letter_count() {
                by_target.entry(self.delta[q][m]).or_default().push(m);
            }
            for (t, masks) in by_target {
                let _ = writeln!(out, "  q{q} -> q{t} [label=\"{}\"];", predicate_label(&self.alphabet, &masks));
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Compact sum-of-products predicate matching exactly the letters in `masks`.
pub fn predicate_label(alphabet: &[Proposition], masks: &[usize]) -> String {
    let k = alphabet.len();
    let full = (1u32 << k) - 1;
    if masks.len() == 1 << k {
        return "true".into();
    }
    if masks.is_empty() {
        return "false".into();
    }
    // Prime implicants by pairwise merging (value, care mask).
    let mut current: BTreeSet<(u32, u32)> = masks.iter().map(|&m| (m as u32, full)).collect();
    let mut primes: BTreeSet<(u32, u32)> = BTreeSet::new();
    while !current.is_empty() {
        let mut merged = BTreeSet::new();
        let mut used = BTreeSet::new();
        let cubes: Vec<_> = current.iter().copied().collect();
        for (i, &(v1, c1)) in cubes.iter().enumerate() {
            for &(v2, c2) in &cubes[i + 1..] {
                let diff = v1 ^ v2;
                if c1 == c2 && diff.count_ones() == 1 {
                    merged.insert((v1 & !diff, c1 & !diff));
                    used.insert((v1, c1));
                    used.insert((v2, c2));
                }
            }
        }
        primes.extend(cubes.into_iter().filter(|c| !used.contains(c)));
        current = merged;
    }
    // Greedy cover, widest cubes first.
    let mut ordered: Vec<(u32, u32)> = primes.into_iter().collect();
    ordered.sort_by_key(|&(v, c)| (c.count_ones(), c, v));
    let mut uncovered: BTreeSet<u32> = masks.iter().map(|&m| m as u32).collect();
    let mut chosen = Vec::new();
    while !uncovered.is_empty() {
        let best = ordered
            .iter()
            .copied()
            .max_by_key(|&(v, c)| {
                let hits = uncovered.iter().filter(|&&m| m & c == v).count();
                (hits, std::cmp::Reverse(c.count_ones()))
            })
            .expect("primes cover every mask");
        uncovered.retain(|&m| m & best.1 != best.0);
        chosen.push(best);
    }
    chosen.sort_by_key(|&(v, c)| (c, v));
    let render = |(v, c): (u32, u32)| {
        Guard {
            pos: v & c,
            neg: !v & c,
        }
        .render(alphabet)
    };
    if chosen.len() == 1 {
        return render(chosen[0]);
    }
    chosen
        .into_iter()
        .map(|cube| {
            let s = render(cube);
            if s.contains("&&") {
                format!("({s})")
            } else {
                s
            }
        })
        .collect::<Vec<_>>()
        .join(" || ")
}

/// Full pipeline: NNF, automata for `φ` and `¬φ`, prefix determinization,
/// product, minimization.
pub fn build_monitor(f: &LtlFormula) -> Result<MooreMonitor, SynthError> {
    build_monitor_with(f, SynthOptions::default())
}

pub fn build_monitor_with(f: &LtlFormula, opts: SynthOptions) -> Result<MooreMonitor, SynthError> {
    Ok(minimize(&build_product(f, opts)?))
}

/// The reachable product of both prefix automata, before minimization.
pub fn build_product(f: &LtlFormula, opts: SynthOptions) -> Result<MooreMonitor, SynthError> {
    let alphabet: Vec<Proposition> = f.atoms().into_iter().collect();
    if alphabet.len() > MAX_ALPHABET {
        return Err(SynthError::AlphabetTooLarge(alphabet.len()));
    }
    let side = |g: LtlFormula| -> Result<PrefixDfa, SynthError> {
        let nba = ltl_to_nba_over(&g.to_nnf(), &alphabet, opts)?;
        let live = nonempty_states(&nba);
        determinize_prefix_with(&nba, &live, opts)
    };
    let pos = side(f.clone())?;
    let neg = side(LtlFormula::not(f.clone()))?;

    let letters = 1usize << alphabet.len();
    let start = (pos.initial, neg.initial);
    let mut ids = HashMap::from([(start, 0usize)]);
    let mut pairs = vec![start];
    let mut delta = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let (p, n) = pairs[i];
        let mut row = Vec::with_capacity(letters);
        for m in 0..letters {
            let key = (pos.delta[p][m], neg.delta[n][m]);
            let t = match ids.get(&key) {
                Some(&t) => t,
                None => {
                    if pairs.len() >= opts.state_budget {
                        return Err(SynthError::StateBudget {
                            limit: opts.state_budget,
                        });
                    }
                    ids.insert(key, pairs.len());
                    pairs.push(key);
                    pairs.len() - 1
                }
            };
            row.push(t);
        }
        delta.push(row);
        i += 1;
    }
    let output = pairs
        .iter()
        .map(|&(p, n)| match (pos.accepting[p], neg.accepting[n]) {
            (false, _) => Verdict::Bottom,
            (true, false) => Verdict::Top,
            (true, true) => Verdict::Inconclusive,
        })
        .collect();
    MooreMonitor::from_parts(alphabet, delta, output, 0)
}

/// Moore minimization by output-respecting partition refinement, followed
/// by canonical renumbering of the reachable part.
pub fn minimize(m: &MooreMonitor) -> MooreMonitor {
    let n = m.state_count();
    let letters = m.letter_count();
    let mut block: Vec<usize> = m.output.iter().map(|v| *v as usize).collect();
    let mut count = usize::MAX;
    loop {
        let mut sigs: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
        let mut next = vec![0; n];
        for q in 0..n {
            let sig = (block[q], (0..letters).map(|x| block[m.delta[q][x]]).collect());
            let len = sigs.len();
            next[q] = *sigs.entry(sig).or_insert(len);
        }
        let new_count = sigs.len();
        block = next;
        if new_count == count {
            break;
        }
        count = new_count;
    }
    let mut delta = vec![Vec::new(); count];
    let mut output = vec![Verdict::Inconclusive; count];
    for q in 0..n {
        let b = block[q];
        if delta[b].is_empty() {
            delta[b] = (0..letters).map(|x| block[m.delta[q][x]]).collect();
            output[b] = m.output[q];
        }
    }
    canonicalize(&m.alphabet, &delta, &output, block[m.initial])
}

fn canonicalize(alphabet: &[Proposition], delta: &[Vec<usize>], output: &[Verdict], initial: usize) -> MooreMonitor {
    let mut order = vec![initial];
    let mut index = HashMap::from([(initial, 0usize)]);
    let mut i = 0;
    while i < order.len() {
        for &t in &delta[order[i]] {
            if let std::collections::hash_map::Entry::Vacant(e) = index.entry(t) {
                e.insert(order.len());
                order.push(t);
            }
        }
        i += 1;
    }
    MooreMonitor {
        alphabet: alphabet.to_vec(),
        delta: order.iter().map(|&q| delta[q].iter().map(|t| index[t]).collect()).collect(),
        output: order.iter().map(|&q| output[q]).collect(),
        initial: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{eval_lasso, parse};

    fn letter(names: &[&str]) -> Letter {
        names.iter().copied().collect()
    }

    fn lasso(stem: &[&[&str]], cycle: &[&[&str]]) -> LassoWord {
        LassoWord::new(stem.iter().map(|l| letter(l)).collect(), cycle.iter().map(|l| letter(l)).collect()).unwrap()
    }

    fn nba(text: &str) -> Nba {
        ltl_to_nba(&parse(text).unwrap().to_nnf()).unwrap()
    }

    #[test]
    fn nba_globally() {
        let a = nba("G a");
        let f = parse("G a").unwrap();
        for w in [lasso(&[], &[&["a"]]), lasso(&[], &[&[]]), lasso(&[&["a"]], &[&["a"], &[]])] {
            assert_eq!(a.accepts_lasso(&w).unwrap(), eval_lasso(&f, &w));
        }
        assert!(a.accepts_lasso(&lasso(&[], &[&["a"]])).unwrap());
        assert!(!a.accepts_lasso(&lasso(&[], &[&[]])).unwrap());
    }

    #[test]
    fn nba_false_is_empty() {
        let a = nba("false");
        assert!(nonempty_states(&a).is_empty());
        assert!(!a.accepts_lasso(&lasso(&[], &[&[]])).unwrap());
    }

    #[test]
    fn nba_finally() {
        let a = nba("F b");
        assert!(a.accepts_lasso(&lasso(&[&[]], &[&["b"]])).unwrap());
        assert!(!a.accepts_lasso(&lasso(&[&[]], &[&[]])).unwrap());
    }

    #[test]
    fn nba_rejects_non_nnf() {
        assert_eq!(ltl_to_nba(&parse("!G a").unwrap()).unwrap_err(), SynthError::NotNnf);
    }

    #[test]
    fn nba_budget() {
        let f = parse("(a U b) && (b U a) && F G a && G F b").unwrap().to_nnf();
        let alphabet: Vec<_> = f.atoms().into_iter().collect();
        let err = ltl_to_nba_over(&f, &alphabet, SynthOptions { state_budget: 2 }).unwrap_err();
        assert_eq!(err, SynthError::StateBudget { limit: 2 });
    }

    #[test]
    fn nonempty_examples() {
        let a = nba("G a");
        assert_eq!(a.state_count(), 1);
        assert_eq!(nonempty_states(&a), BTreeSet::from([0]));

        let dead = Nba {
            alphabet: vec![],
            edges: vec![vec![]],
            initial: vec![0],
            accepting: vec![true],
        };
        assert!(nonempty_states(&dead).is_empty());

        let t = nba("true");
        assert_eq!(nonempty_states(&t).len(), t.state_count());
    }

    #[test]
    fn live_states_needs_a_cycle() {
        // 0 -> 1 -> 2(acc) -> 2 ; 3(acc) -> 0
        let succ = vec![vec![1], vec![2], vec![2], vec![0]];
        let acc = vec![false, false, true, true];
        assert_eq!(live_states(&succ, &acc), vec![true, true, true, true]);
        let succ = vec![vec![1], vec![], vec![0]];
        assert_eq!(live_states(&succ, &[true, true, true]), vec![false, false, false]);
    }

    #[test]
    fn prefix_dfa_examples() {
        let a = nba("G a");
        let d = determinize_prefix(&a, &nonempty_states(&a)).unwrap();
        assert_eq!(d.subsets.len(), 2);
        assert!(d.accepting[d.initial]);
        assert_eq!(d.delta[d.initial][1], d.initial);
        let sink = d.delta[d.initial][0];
        assert!(d.subsets[sink].is_empty() && !d.accepting[sink]);
        assert_eq!(d.delta[sink], vec![sink, sink]);

        let t = nba("true");
        let d = determinize_prefix(&t, &nonempty_states(&t)).unwrap();
        assert_eq!(d.subsets.len(), 1);
        assert!(d.accepting[0]);

        let f = nba("false");
        let d = determinize_prefix(&f, &nonempty_states(&f)).unwrap();
        assert!(d.subsets[d.initial].is_empty());
        assert!(!d.accepting[d.initial]);
    }

    #[test]
    fn monitor_g_not_unknown() {
        let m = build_monitor(&parse("G(!isUnknown)").unwrap()).unwrap();
        assert_eq!(m.state_count(), 2);
        assert_eq!(m.output(0), Verdict::Inconclusive);
        assert_eq!(m.output(1), Verdict::Bottom);
        assert_eq!(m.step(0, &letter(&[])).unwrap(), (0, Verdict::Inconclusive));
        assert_eq!(m.step(0, &letter(&["isUnknown"])).unwrap(), (1, Verdict::Bottom));
        assert_eq!(m.step(1, &letter(&[])).unwrap(), (1, Verdict::Bottom));
        assert!(m.satisfies_verdict_trap());
    }

    #[test]
    fn monitor_true_and_finally() {
        let m = build_monitor(&LtlFormula::True).unwrap();
        assert_eq!(m.state_count(), 1);
        assert_eq!(m.output(0), Verdict::Top);
        assert_eq!(m.successor(0, 0), 0);

        let m = build_monitor(&parse("F a").unwrap()).unwrap();
        assert_eq!(m.state_count(), 2);
        assert_eq!(m.step(0, &letter(&[])).unwrap(), (0, Verdict::Inconclusive));
        assert_eq!(m.step(0, &letter(&["a"])).unwrap(), (1, Verdict::Top));
    }

    #[test]
    fn step_rejects_foreign_letters() {
        let m = build_monitor(&parse("G(!u)").unwrap()).unwrap();
        assert_eq!(m.step(0, &letter(&["v"])).unwrap_err(), SynthError::UnknownProposition("v".into()));
        assert_eq!(m.step(7, &letter(&[])).unwrap_err(), SynthError::InvalidState(7));
    }

    #[test]
    fn minimize_merges_bisimilar_states() {
        let alphabet = vec![Proposition::new("u").unwrap()];
        // q0 -{}-> q1, q1 -{}-> q0: two interchangeable inconclusive states.
        let m = MooreMonitor::from_parts(
            alphabet,
            vec![vec![1, 2], vec![0, 2], vec![2, 2]],
            vec![Verdict::Inconclusive, Verdict::Inconclusive, Verdict::Bottom],
            0,
        )
        .unwrap();
        let min = minimize(&m);
        assert_eq!(min.state_count(), 2);
        assert_eq!(minimize(&min), min);

        let top = build_monitor(&LtlFormula::True).unwrap();
        assert_eq!(minimize(&top), top);
    }

    #[test]
    fn product_for_g_not_u_is_larger_than_minimal() {
        let f = parse("G(!u)").unwrap();
        let raw = build_product(&f, SynthOptions::default()).unwrap();
        assert!(raw.state_count() >= 2);
        assert_eq!(minimize(&raw).state_count(), 2);
    }

    #[test]
    fn dot_export() {
        let m = build_monitor(&parse("G(!u)").unwrap()).unwrap();
        let dot = m.to_dot();
        assert!(dot.starts_with("digraph monitor {"));
        assert!(dot.contains("label=\"q0/inconclusive\""));
        assert!(dot.contains("label=\"q1/bottom\""));
        assert!(dot.contains("q0 -> q0 [label=\"!u\"]"));
        assert!(dot.contains("q0 -> q1 [label=\"u\"]"));
        assert!(dot.contains("q1 -> q1 [label=\"true\"]"));
        assert!(dot.contains("init [shape=point]"));

        let top = build_monitor(&LtlFormula::True).unwrap().to_dot();
        assert!(top.contains("q0/top"));
        assert!(!top.contains("q1"));
    }

    #[test]
    fn predicate_labels_are_minimal_and_parse() {
        let ab = vec![Proposition::new("a").unwrap(), Proposition::new("b").unwrap()];
        assert_eq!(predicate_label(&ab, &[1, 3]), "a");
        assert_eq!(predicate_label(&ab, &[0, 1, 2]), "!a || !b");
        assert_eq!(predicate_label(&ab, &[1]), "a && !b");
        assert_eq!(predicate_label(&ab, &[1, 2]), "(a && !b) || (!a && b)");
        assert_eq!(predicate_label(&ab, &[0, 1, 2, 3]), "true");
        for masks in [vec![0], vec![1, 2], vec![0, 3], vec![0, 2, 3]] {
            let f = parse(&predicate_label(&ab, &masks)).unwrap();
            for m in 0..4 {
                let w = LassoWord::new(vec![Letter::from_mask(&ab, m)], vec![Letter::empty()]).unwrap();
                assert_eq!(eval_lasso(&f, &w), masks.contains(&m), "{masks:?} {m}");
            }
        }
    }

    #[test]
    fn table_round_trip() {
        let m = build_monitor(&parse("G(isStarted && lowException)").unwrap()).unwrap();
        let table = m.to_table();
        assert_eq!(table.lines().count(), m.state_count() * 4);
        assert!(table.starts_with("q0\t{}\tq1\tinconclusive\n"));
        let back = MooreMonitor::from_table(m.alphabet().to_vec(), &table).unwrap();
        assert_eq!(back, m);

        let t = build_monitor(&LtlFormula::True).unwrap().to_table();
        assert_eq!(t, "q0\t{}\tq0\ttop\n");
        assert!(MooreMonitor::from_table(vec![], "q0\t{}\tq3\ttop\n").is_err());
        assert!(MooreMonitor::from_table(vec![], "q0\t{}\tq0\n").is_err());
    }
}
