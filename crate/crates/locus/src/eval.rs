//! Satisfaction in finite structures.
//!
//! Formulas are compiled to a node graph over variable slots. Runs of
//! existential quantifiers over conjunctions become a single backtracking
//! search whose candidate values come from balls or relation adjacency
//! when one is available. Quantified subformulas are memoized on the
//! values of their free slots.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::formula::{classify, enumerate_fragment, Formula, FormulaError, Fragment, Rel, Term, Var};
use crate::signature::{LocId, RelId, SortId};
use crate::structure::{check_locality_axioms, FiniteStructure, Index};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("variable {0} is not bound")]
    UnboundVariable(String),
    #[error("variable {0} is bound to an element of the wrong sort")]
    SortMismatch(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("structure is not local: {0}")]
    NotLocal(String),
}

/// Assignment of elements to variable names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Environment {
    bindings: BTreeMap<String, (SortId, usize)>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, sort: SortId, element: usize) -> &mut Self {
        self.bindings.insert(name.into(), (sort, element));
        self
    }

    pub fn with(mut self, name: impl Into<String>, sort: SortId, element: usize) -> Self {
        self.bind(name, sort, element);
        self
    }

    pub fn get(&self, name: &str) -> Option<(SortId, usize)> {
        self.bindings.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, SortId, usize)> {
        self.bindings.iter().map(|(k, &(s, e))| (k.as_str(), s, e))
    }

    /// Binds each variable of `vars` to the matching entry of `values`.
    pub fn from_tuple(vars: &[Var], values: &[usize]) -> Self {
        let mut env = Self::new();
        for (v, &e) in vars.iter().zip(values) {
            env.bind(v.name.clone(), v.sort, e);
        }
        env
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arg {
    Slot(usize),
    Elem(usize),
}

#[derive(Debug, Clone, Copy)]
enum Source {
    Ball(LocId, Arg),
    Succ(RelId, Arg),
    Pred(RelId, Arg),
    Same(Arg),
}

#[derive(Debug, Clone)]
struct SearchVar {
    slot: usize,
    sort: SortId,
    source: Option<Source>,
}

#[derive(Debug, Clone)]
enum Node {
    Const(bool),
    Eq(Arg, Arg),
    Rel(RelId, Vec<Arg>),
    Loc(SortId, LocId, Arg, Arg),
    And(Vec<usize>),
    Or(Vec<usize>),
    Not(usize),
    Forall { slot: usize, sort: SortId, body: usize },
    /// `checks[k]` runs once the first `k` variables are assigned.
    Search { vars: Vec<SearchVar>, checks: Vec<Vec<usize>> },
}

#[derive(Debug, Clone)]
struct Compiled {
    nodes: Vec<Node>,
    /// Slots read by each node and not bound inside it, sorted.
    reads: Vec<Vec<usize>>,
    memo: Vec<bool>,
    slot_sorts: Vec<SortId>,
}

struct Compiler<'m> {
    m: &'m FiniteStructure,
    out: Compiled,
    scope: Vec<(Var, usize)>,
}

impl<'m> Compiler<'m> {
    fn new_slot(&mut self, v: &Var) -> usize {
        self.out.slot_sorts.push(v.sort);
        self.out.slot_sorts.len() - 1
    }

    fn arg(&self, t: &Term) -> Arg {
        match t {
            Term::Const(c) => Arg::Elem(self.m.constant(*c)),
            Term::Var(v) => Arg::Slot(
                self.scope.iter().rev().find(|(w, _)| w == v).map(|&(_, s)| s).expect("free variables are in scope"),
            ),
        }
    }

    fn push(&mut self, node: Node, mut reads: Vec<usize>, bound: &[usize]) -> usize {
        reads.sort_unstable();
        reads.dedup();
        reads.retain(|s| !bound.contains(s));
        let memo = matches!(node, Node::Forall { .. } | Node::Search { .. }) && !reads.is_empty();
        self.out.nodes.push(node);
        self.out.reads.push(reads);
        self.out.memo.push(memo);
        self.out.nodes.len() - 1
    }

    fn arg_reads(args: &[Arg]) -> Vec<usize> {
        args.iter().filter_map(|a| if let Arg::Slot(s) = a { Some(*s) } else { None }).collect()
    }

    fn compile(&mut self, f: &Formula) -> usize {
        match f {
            Formula::Top => self.push(Node::Const(true), vec![], &[]),
            Formula::Bot => self.push(Node::Const(false), vec![], &[]),
            Formula::Equal(a, b) => {
                let (a, b) = (self.arg(a), self.arg(b));
                self.push(Node::Eq(a, b), Self::arg_reads(&[a, b]), &[])
            }
            Formula::Atom { rel, args } => {
                let args: Vec<Arg> = args.iter().map(|t| self.arg(t)).collect();
                let reads = Self::arg_reads(&args);
                match rel {
                    Rel::Sym(r) => self.push(Node::Rel(*r, args), reads, &[]),
                    Rel::Loc(s, d) => self.push(Node::Loc(*s, *d, args[0], args[1]), reads, &[]),
                }
            }
            Formula::And(fs) | Formula::Or(fs) => {
                let ids: Vec<usize> = fs.iter().map(|g| self.compile(g)).collect();
                let reads = ids.iter().flat_map(|&i| self.out.reads[i].clone()).collect();
                let node = if matches!(f, Formula::And(_)) { Node::And(ids) } else { Node::Or(ids) };
                self.push(node, reads, &[])
            }
            Formula::Not(g) => {
                let i = self.compile(g);
                let reads = self.out.reads[i].clone();
                self.push(Node::Not(i), reads, &[])
            }
            Formula::Forall(v, body) => {
                let slot = self.new_slot(v);
                self.scope.push((v.clone(), slot));
                let b = self.compile(body);
                self.scope.pop();
                let reads = self.out.reads[b].clone();
                self.push(Node::Forall { slot, sort: v.sort, body: b }, reads, &[slot])
            }
            Formula::Exists(..) | Formula::LocalExists { .. } => self.compile_search(f),
        }
    }

    /// Collects the variables and conjuncts of a block of existentials.
    fn gather(&mut self, f: &Formula, vars: &mut Vec<(usize, SortId, Option<(LocId, Arg)>)>, conj: &mut Vec<usize>) {
        match f {
            Formula::Exists(v, body) => {
                let slot = self.new_slot(v);
                vars.push((slot, v.sort, None));
                self.scope.push((v.clone(), slot));
                self.gather(body, vars, conj);
                self.scope.pop();
            }
            Formula::LocalExists { var, d, anchor, body } => {
                let a = self.arg(anchor);
                let slot = self.new_slot(var);
                vars.push((slot, var.sort, Some((*d, a))));
                self.scope.push((var.clone(), slot));
                self.gather(body, vars, conj);
                self.scope.pop();
            }
            Formula::And(fs) => {
                for g in fs {
                    self.gather(g, vars, conj);
                }
            }
            _ => conj.push(self.compile(f)),
        }
    }

    fn compile_search(&mut self, f: &Formula) -> usize {
        let mut vars = Vec::new();
        let mut conj = Vec::new();
        self.gather(f, &mut vars, &mut conj);
        let bound: Vec<usize> = vars.iter().map(|v| v.0).collect();
        let local_reads =
            |c: usize, out: &Compiled| out.reads[c].iter().copied().filter(|s| bound.contains(s)).collect::<Vec<_>>();
        let conj_reads: Vec<Vec<usize>> = conj.iter().map(|&c| local_reads(c, &self.out)).collect();
        if conj.iter().any(|&c| matches!(self.out.nodes[c], Node::Const(false))) {
            // a false conjunct makes the block false; keep the reads for memo keys
            let reads = conj.iter().flat_map(|&c| self.out.reads[c].clone()).collect();
            return self.push(Node::Const(false), reads, &bound);
        }

        // most constrained first, subject to ball anchors being assigned
        let mut assigned: Vec<usize> = Vec::new();
        let mut order: Vec<SearchVar> = Vec::new();
        let mut remaining: Vec<usize> = (0..vars.len()).collect();
        while !remaining.is_empty() {
            let ready = |&&i: &&usize| match vars[i].2 {
                Some((_, Arg::Slot(s))) => !bound.contains(&s) || assigned.contains(&s),
                _ => true,
            };
            let score = |i: usize| {
                let slot = vars[i].0;
                let closed = conj_reads
                    .iter()
                    .filter(|r| r.contains(&slot) && r.iter().all(|s| *s == slot || assigned.contains(s)))
                    .count();
                let sourced = self.source_for(slot, vars[i].2, &conj, &bound, &assigned).is_some();
                (sourced as usize, closed)
            };
            let best = *remaining
                .iter()
                .filter(ready)
                .max_by(|&&a, &&b| score(a).cmp(&score(b)).then(b.cmp(&a)))
                .expect("anchors are bound before use");
            let (slot, sort, ball) = vars[best];
            let source = self.source_for(slot, ball, &conj, &bound, &assigned);
            order.push(SearchVar { slot, sort, source });
            assigned.push(slot);
            remaining.retain(|&i| i != best);
        }

        let mut checks = vec![Vec::new(); order.len() + 1];
        for (k, &c) in conj.iter().enumerate() {
            let level = conj_reads[k]
                .iter()
                .map(|s| order.iter().position(|v| v.slot == *s).unwrap() + 1)
                .max()
                .unwrap_or(0);
            checks[level].push(c);
        }
        let mut reads: Vec<usize> = conj.iter().flat_map(|&c| self.out.reads[c].clone()).collect();
        for v in &vars {
            if let Some((_, Arg::Slot(s))) = v.2 {
                reads.push(s);
            }
        }
        self.push(Node::Search { vars: order, checks }, reads, &bound)
    }

    /// A candidate generator for `slot` given the already assigned slots.
    fn source_for(
        &self,
        slot: usize,
        ball: Option<(LocId, Arg)>,
        conj: &[usize],
        bound: &[usize],
        assigned: &[usize],
    ) -> Option<Source> {
        if let Some((d, a)) = ball {
            return Some(Source::Ball(d, a));
        }
        let known = |a: &Arg| match a {
            Arg::Elem(_) => true,
            Arg::Slot(s) => *s != slot && (!bound.contains(s) || assigned.contains(s)),
        };
        let idx = self.m.index();
        for &c in conj {
            match &self.out.nodes[c] {
                Node::Eq(a, b) if *a == Arg::Slot(slot) && known(b) => return Some(Source::Same(*b)),
                Node::Eq(a, b) if *b == Arg::Slot(slot) && known(a) => return Some(Source::Same(*a)),
                Node::Loc(_, d, a, b) if *b == Arg::Slot(slot) && known(a) => return Some(Source::Ball(*d, *a)),
                Node::Rel(r, args) if args.len() == 2 && idx.succ[*r].is_some() => {
                    if args[1] == Arg::Slot(slot) && known(&args[0]) {
                        return Some(Source::Succ(*r, args[0]));
                    }
                    if args[0] == Arg::Slot(slot) && known(&args[1]) {
                        return Some(Source::Pred(*r, args[1]));
                    }
                }
                _ => {}
            }
        }
        None
    }
}

/// A formula compiled against one structure, evaluated on tuples for a
/// fixed variable order.
pub struct Evaluator<'m> {
    m: &'m FiniteStructure,
    idx: Arc<Index>,
    c: Compiled,
    nodes: Arc<Vec<Node>>,
    root: usize,
    inputs: Vec<Option<usize>>,
    order: Vec<Var>,
    assign: Vec<usize>,
    memo: HashMap<(usize, Vec<usize>), bool>,
}

const MEMO_CAP: usize = 1 << 20;

impl<'m> Evaluator<'m> {
    /// Free variables of `f` must all appear in `order`.
    pub fn new(m: &'m FiniteStructure, f: &Formula, order: &[Var]) -> Result<Self, EvalError> {
        f.check(m.sig())?;
        for v in f.free_variables() {
            if !order.contains(&v) {
                return Err(match order.iter().find(|w| w.name == v.name) {
                    Some(_) => EvalError::SortMismatch(v.name),
                    None => EvalError::UnboundVariable(v.name),
                });
            }
        }
        let mut comp = Compiler {
            m,
            out: Compiled { nodes: vec![], reads: vec![], memo: vec![], slot_sorts: vec![] },
            scope: vec![],
        };
        let mut inputs = Vec::new();
        for v in order {
            let s = comp.new_slot(v);
            comp.scope.push((v.clone(), s));
            inputs.push(Some(s));
        }
        let root = comp.compile(f);
        let mut c = comp.out;
        c.memo[root] = false;
        let n = c.slot_sorts.len();
        let nodes = Arc::new(std::mem::take(&mut c.nodes));
        Ok(Evaluator {
            m,
            idx: m.index(),
            c,
            nodes,
            root,
            inputs,
            order: order.to_vec(),
            assign: vec![usize::MAX; n],
            memo: HashMap::new(),
        })
    }

    pub fn order(&self) -> &[Var] {
        &self.order
    }

    /// Truth value at `values`, given in the variable order.
    pub fn eval(&mut self, values: &[usize]) -> bool {
        for (inp, &v) in self.inputs.iter().zip(values) {
            if let Some(s) = inp {
                self.assign[*s] = v;
            }
        }
        self.node(self.root)
    }

    #[inline]
    fn val(&self, a: Arg) -> usize {
        match a {
            Arg::Elem(e) => e,
            Arg::Slot(s) => self.assign[s],
        }
    }

    fn node(&mut self, id: usize) -> bool {
        if self.c.memo[id] {
            let key: Vec<usize> = self.c.reads[id].iter().map(|&s| self.assign[s]).collect();
            if let Some(&v) = self.memo.get(&(id, key.clone())) {
                return v;
            }
            let v = self.node_raw(id);
            if self.memo.len() >= MEMO_CAP {
                self.memo.clear();
            }
            self.memo.insert((id, key), v);
            v
        } else {
            self.node_raw(id)
        }
    }

    fn node_raw(&mut self, id: usize) -> bool {
        let nodes = self.nodes.clone();
        match &nodes[id] {
            Node::Const(b) => *b,
            Node::Eq(a, b) => self.val(*a) == self.val(*b),
            Node::Loc(s, d, a, b) => self.m.related(*s, *d, self.val(*a), self.val(*b)),
            Node::Rel(r, args) => {
                let r = *r;
                if let Some(u) = &self.idx.unary[r] {
                    return u[self.val(args[0])];
                }
                if let Some(t) = &self.idx.binary[r] {
                    return t.contains(self.val(args[0]), self.val(args[1]));
                }
                let tuple: Vec<usize> = args.iter().map(|&a| self.val(a)).collect();
                self.m.holds(r, &tuple)
            }
            Node::And(ids) => ids.iter().all(|&i| self.node(i)),
            Node::Or(ids) => ids.iter().any(|&i| self.node(i)),
            Node::Not(i) => !self.node(*i),
            Node::Forall { slot, sort, body } => {
                let (slot, body) = (*slot, *body);
                let n = self.m.size(*sort);
                let saved = self.assign[slot];
                let mut ok = true;
                for e in 0..n {
                    self.assign[slot] = e;
                    if !self.node(body) {
                        ok = false;
                        break;
                    }
                }
                self.assign[slot] = saved;
                ok
            }
            Node::Search { .. } => self.search(id, 0),
        }
    }

    fn candidates(&self, v: &SearchVar) -> Candidates {
        match v.source {
            None => Candidates::Range(0..self.m.size(v.sort)),
            Some(Source::Same(a)) => Candidates::One(Some(self.val(a))),
            Some(Source::Ball(d, a)) => Candidates::List(self.idx.balls[v.sort][d][self.val(a)].clone().into_iter()),
            Some(Source::Succ(r, a)) => {
                Candidates::List(self.idx.succ[r].as_ref().unwrap()[self.val(a)].clone().into_iter())
            }
            Some(Source::Pred(r, a)) => {
                Candidates::List(self.idx.pred[r].as_ref().unwrap()[self.val(a)].clone().into_iter())
            }
        }
    }

    fn search(&mut self, id: usize, level: usize) -> bool {
        let nodes = self.nodes.clone();
        let Node::Search { vars, checks } = &nodes[id] else { unreachable!() };
        if !checks[level].iter().all(|&c| self.node(c)) {
            return false;
        }
        if level == vars.len() {
            return true;
        }
        let var = &vars[level];
        let saved = self.assign[var.slot];
        let mut found = false;
        for e in self.candidates(var) {
            self.assign[var.slot] = e;
            if self.search(id, level + 1) {
                found = true;
                break;
            }
        }
        self.assign[var.slot] = saved;
        found
    }
}

enum Candidates {
    Range(std::ops::Range<usize>),
    One(Option<usize>),
    List(std::vec::IntoIter<usize>),
}

impl Iterator for Candidates {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        match self {
            Candidates::Range(r) => r.next(),
            Candidates::One(o) => o.take(),
            Candidates::List(l) => l.next(),
        }
    }
}

/// Truth value of `f` under `env`.
pub fn eval(m: &FiniteStructure, f: &Formula, env: &Environment) -> Result<bool, EvalError> {
    let mut order = Vec::new();
    let mut values = Vec::new();
    for v in f.free_variables() {
        let (sort, e) = env.get(&v.name).ok_or_else(|| EvalError::UnboundVariable(v.name.clone()))?;
        if sort != v.sort || e >= m.size(sort) {
            return Err(EvalError::SortMismatch(v.name.clone()));
        }
        values.push(e);
        order.push(v);
    }
    Ok(Evaluator::new(m, f, &order)?.eval(&values))
}

/// Truth value of a sentence.
pub fn holds(m: &FiniteStructure, f: &Formula) -> Result<bool, EvalError> {
    eval(m, f, &Environment::new())
}

/// All tuples over the sorts of `order`, in lexicographic order.
pub fn all_tuples(m: &FiniteStructure, order: &[Var]) -> impl Iterator<Item = Vec<usize>> {
    let sizes: Vec<usize> = order.iter().map(|v| m.size(v.sort)).collect();
    let mut cur = Some(vec![0; sizes.len()]);
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let mut next = out.clone();
        let mut k = sizes.len();
        loop {
            if k == 0 {
                cur = None;
                break;
            }
            k -= 1;
            next[k] += 1;
            if next[k] < sizes[k] {
                cur = Some(next);
                break;
            }
            next[k] = 0;
        }
        Some(out)
    })
}

/// The tuples satisfying `f`, listed in lexicographic order of `order`.
pub fn definable_set(m: &FiniteStructure, f: &Formula, order: &[Var]) -> Result<Vec<Vec<usize>>, EvalError> {
    let mut ev = Evaluator::new(m, f, order)?;
    Ok(all_tuples(m, order).filter(|t| ev.eval(t)).collect())
}

/// `¬φ` for each positive sentence `φ` of the fragment that fails in `m`.
/// For a negative fragment class the negated members are tested directly.
pub fn negative_theory_fragment(m: &FiniteStructure, frag: &Fragment) -> Result<Vec<Formula>, EvalError> {
    let report = check_locality_axioms(m);
    if let Some(w) = report.first_failure_among(&[1, 2, 3, 4, 5]) {
        return Err(EvalError::NotLocal(format!("{w:?}")));
    }
    let sig = m.sig();
    let sentences = enumerate_fragment(sig, frag, &[]);
    let out: Result<Vec<Option<Formula>>, EvalError> = sentences
        .par_iter()
        .map(|f| {
            let positive = match f {
                Formula::Not(g) if classify(g, sig).positive => (**g).clone(),
                g if classify(g, sig).positive => g.clone(),
                _ => return Ok(None),
            };
            Ok(if holds(m, &positive)? { None } else { Some(Formula::not(positive)) })
        })
        .collect();
    Ok(out?.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::formula::{parse, parse_in_context, ClassFilter};

    fn x() -> Var {
        Var::new("x", 0)
    }

    #[test]
    fn predicate_on_integers() {
        let z = corpus::z(10);
        let f = parse("P3(x)", z.sig()).unwrap();
        for e in 0..21 {
            let val: i64 = z.label(0, e).parse().unwrap();
            assert_eq!(eval(&z, &f, &Environment::new().with("x", 0, e)).unwrap(), val >= 3);
        }
        assert!(holds(&z, &Formula::Top).unwrap());
    }

    #[test]
    fn local_quantifier_ranges_over_ball() {
        let z = corpus::z(10);
        let f = parse("exists y in d2(x). Q1(y)", z.sig()).unwrap();
        let zero = z.element(0, "0").unwrap();
        assert!(eval(&z, &f, &Environment::new().with("x", 0, zero)).unwrap());
        // exhaustive witness scan
        for a in 0..21 {
            let expect = (0..21).any(|b| {
                z.related(0, 2, a, b) && z.label(0, b).parse::<i64>().unwrap() <= -1
            });
            assert_eq!(eval(&z, &f, &Environment::new().with("x", 0, a)).unwrap(), expect);
        }
    }

    #[test]
    fn errors() {
        let z = corpus::z(3);
        let f = parse("P1(x)", z.sig()).unwrap();
        assert_eq!(eval(&z, &f, &Environment::new()), Err(EvalError::UnboundVariable("x".into())));
        assert_eq!(eval(&z, &f, &Environment::new().with("x", 0, 99)), Err(EvalError::SortMismatch("x".into())));
    }

    #[test]
    fn definable_sets() {
        let z = corpus::z(4);
        let f = parse("P0(x) & Q0(x)", z.sig()).unwrap();
        assert_eq!(definable_set(&z, &f, &[x()]).unwrap(), vec![vec![z.element(0, "0").unwrap()]]);
        let all = definable_set(&z, &Formula::eq(Term::Var(x()), Term::Var(x())), &[x()]).unwrap();
        assert_eq!(all.len(), 9);
        let t = corpus::tree(3);
        let s = parse("S(v)", t.sig()).unwrap();
        let v = s.free_variables().into_iter().next().unwrap();
        let got: Vec<String> =
            definable_set(&t, &s, &[v.clone()]).unwrap().into_iter().map(|e| t.label(v.sort, e[0]).to_string()).collect();
        let expected: Vec<String> = t
            .universe(v.sort)
            .iter()
            .filter(|l| {
                let (a, b) = corpus::tree_coords(l).unwrap();
                a.abs() == b
            })
            .cloned()
            .collect();
        assert_eq!(got, expected);
        assert!(!got.is_empty());
    }

    #[test]
    fn negative_theory_of_small_window() {
        let z = corpus::z(2);
        let frag = Fragment::new(1, 2, ClassFilter::Positive).with_relations(&["P1", "Q1"]).with_locality(&["d1"]);
        let th = negative_theory_fragment(&z, &frag).unwrap();
        let target = parse("!exists y0. P1(y0) & Q1(y0)", z.sig()).unwrap();
        assert!(th.contains(&target), "{}", th.len());
        assert!(th.contains(&Formula::not(Formula::Bot)));
        assert!(!th.contains(&Formula::not(Formula::Top)));
    }

    #[test]
    fn singleton_denies_q() {
        let i = corpus::i_point(10);
        let frag = Fragment::new(1, 1, ClassFilter::Positive).with_relations(&["P0", "Q0"]).with_locality(&[] as &[&str]);
        let th = negative_theory_fragment(&i, &frag).unwrap();
        assert!(th.contains(&parse("!exists y0. Q0(y0)", i.sig()).unwrap()));
        assert!(!th.contains(&parse("!exists y0. P0(y0)", i.sig()).unwrap()));
    }

    #[test]
    fn non_local_rejected() {
        let mut z = corpus::z(2);
        let top = z.sig().monoid(0).top().unwrap();
        z.set_locality(0, top, crate::structure::PairTable::new(5, 5)).unwrap();
        let frag = Fragment::new(0, 1, ClassFilter::Positive);
        assert!(matches!(negative_theory_fragment(&z, &frag), Err(EvalError::NotLocal(_))));
    }

    /// Direct recursive semantics as an oracle.
    fn naive(m: &FiniteStructure, f: &Formula, env: &mut Vec<(Var, usize)>) -> bool {
        let val = |t: &Term, env: &Vec<(Var, usize)>| match t {
            Term::Const(c) => m.constant(*c),
            Term::Var(v) => env.iter().rev().find(|(w, _)| w == v).unwrap().1,
        };
        match f {
            Formula::Top => true,
            Formula::Bot => false,
            Formula::Equal(a, b) => val(a, env) == val(b, env),
            Formula::Atom { rel: Rel::Sym(r), args } => m.holds(*r, &args.iter().map(|t| val(t, env)).collect::<Vec<_>>()),
            Formula::Atom { rel: Rel::Loc(s, d), args } => m.related(*s, *d, val(&args[0], env), val(&args[1], env)),
            Formula::And(fs) => fs.iter().all(|g| naive(m, g, env)),
            Formula::Or(fs) => fs.iter().any(|g| naive(m, g, env)),
            Formula::Not(g) => !naive(m, g, env),
            Formula::Exists(v, g) | Formula::Forall(v, g) => {
                let mut results = (0..m.size(v.sort)).map(|e| {
                    env.push((v.clone(), e));
                    let r = naive(m, g, env);
                    env.pop();
                    r
                });
                if matches!(f, Formula::Exists(..)) {
                    results.any(|r| r)
                } else {
                    results.all(|r| r)
                }
            }
            Formula::LocalExists { var, d, anchor, body } => {
                let a = val(anchor, env);
                (0..m.size(var.sort)).any(|e| {
                    if !m.related(var.sort, *d, a, e) {
                        return false;
                    }
                    env.push((var.clone(), e));
                    let r = naive(m, body, env);
                    env.pop();
                    r
                })
            }
        }
    }

    #[test]
    fn compiled_matches_naive_on_fragment() {
        let z = corpus::pointed_z(3);
        let xs = vec![x()];
        for class in [ClassFilter::Positive, ClassFilter::Negative, ClassFilter::LocalPositive, ClassFilter::Pi1Local] {
            let frag = Fragment::new(1, 2, class)
                .with_relations(&["P1", "Q1", "P2"])
                .with_locality(&["d1", "d3"])
                .with_atoms(2)
                .with_free(1);
            for f in enumerate_fragment(z.sig(), &frag, &xs) {
                let mut ev = Evaluator::new(&z, &f, &xs).unwrap();
                for a in 0..z.size(0) {
                    assert_eq!(
                        ev.eval(&[a]),
                        naive(&z, &f, &mut vec![(x(), a)]),
                        "{}",
                        crate::formula::print(&f, z.sig())
                    );
                }
            }
        }
    }

    #[test]
    fn shadowed_and_nested_quantifiers() {
        let z = corpus::z(3);
        let sig = z.sig();
        let texts = [
            "exists x. P1(x) & exists x. Q1(x)",
            "forall y. exists x in d1(y). !(x = y)",
            "exists x y. d1(x, y) & P3(x) & !P3(y)",
            "forall x. P0(x) | Q0(x)",
            "!exists x. P1(x) & forall y. d2(x, y) | Q0(y)",
        ];
        for t in texts {
            let f = parse(t, sig).unwrap();
            assert_eq!(holds(&z, &f).unwrap(), naive(&z, &f, &mut vec![]), "{t}");
        }
        let f = parse_in_context("exists y. d1(x, y) & P2(y)", sig, &[x()]).unwrap();
        for a in 0..7 {
            assert_eq!(Evaluator::new(&z, &f, &[x()]).unwrap().eval(&[a]), naive(&z, &f, &mut vec![(x(), a)]));
        }
    }
}
