use anyhow::{anyhow, Result};
use serde_json::{json, Value};

use locus::corpus::{run_example_checks, CorpusId, Example, TheoryId};
use locus::eval::{definable_set, eval, Environment};
use locus::formula::{parse, parse_in_context, print, Formula, Var};
use locus::limits::{direct_limit, verify_limit_lemma, RawSystem};
use locus::morphism::{
    check_locally_positively_closed, find_homomorphisms, find_injective_homomorphisms, is_homomorphism,
    is_positive_embedding, EmbeddingCertificate, EmbeddingMode, Homomorphism, MorphismError, PcVerdict,
};
use locus::signature::SignatureSpec;
use locus::structure::{check_locality_axioms, FiniteStructure};
use locus::theory::{
    ball_witness, check_approx_complementary, check_irreducibility, check_ljcp, find_denials, hierarchy_report,
    inherent_locality_probe, locally_entails, positive_part_membership, synthesize_bound, ApproxCertificate,
    ApproxMode, Entailment, IrreducibilityMode, Membership, ProbeOutcome, TheorySpec,
};

use crate::args::{
    load_structure, load_theory, parse_scope, read_text, split_binding, Command, CorpusAction, PeMode, Relation,
    TheoryAction, TheoryArgs,
};
use crate::report::{input, Reporter};

pub fn run(cmd: &Command, rep: &Reporter) -> Result<()> {
    match cmd {
        Command::Validate(a) => validate(a, rep),
        Command::Eval(a) => eval_cmd(a, rep),
        Command::Homs(a) => homs(a, rep),
        Command::Pe(a) => pe(a, rep),
        Command::Pc(a) => pc(a, rep),
        Command::Denials(a) => denials(a, rep),
        Command::Theory { action } => theory(action, rep),
        Command::Limit(a) => limit(a, rep),
        Command::Corpus { action } => corpus(action, rep),
        Command::Axioms(a) => {
            let m = load_structure(&a.structure)?;
            let r = check_locality_axioms(&m);
            rep.emit("axioms", json!(if r.all_pass() { "pass" } else { "fail" }), serde_json::to_value(&r)?)
        }
    }
}

fn formula_in(text: &str, sig: &SignatureSpec) -> Result<Formula> {
    parse(text, sig).map_err(input)
}

fn show(f: &Formula, sig: &SignatureSpec) -> String {
    print(f, sig)
}

fn structure_value(m: &FiniteStructure) -> Result<Value> {
    Ok(serde_json::from_str(&m.to_json())?)
}

fn hom_value(h: &Homomorphism, a: &FiniteStructure, b: &FiniteStructure) -> Value {
    let sorts = a.sig().sorts();
    let per_sort: serde_json::Map<String, Value> = h
        .labels(a, b)
        .into_iter()
        .enumerate()
        .map(|(s, pairs)| {
            let m: serde_json::Map<String, Value> = pairs.into_iter().map(|(x, y)| (x, Value::String(y))).collect();
            (sorts[s].clone(), Value::Object(m))
        })
        .collect();
    Value::Object(per_sort)
}

fn tuple_value(m: &FiniteStructure, vars: &[Var], tuple: &[usize]) -> Value {
    let map: serde_json::Map<String, Value> =
        vars.iter().zip(tuple).map(|(v, &e)| (v.name.clone(), Value::String(m.label(v.sort, e).to_string()))).collect();
    Value::Object(map)
}

fn validate(a: &crate::args::ValidateArgs, rep: &Reporter) -> Result<()> {
    let mut checked = serde_json::Map::new();
    if let Some(p) = &a.signature {
        let sig = SignatureSpec::from_json(&read_text(p)?).map_err(input)?;
        checked.insert(
            "signature".into(),
            json!({"sorts": sig.sorts(), "relations": sig.relations().len(), "constants": sig.constants().len()}),
        );
    }
    if let Some(s) = &a.structure {
        let m = load_structure(s)?;
        let sizes: Vec<usize> = (0..m.sig().sorts().len()).map(|s| m.size(s)).collect();
        checked.insert("structure".into(), json!({"sizes": sizes, "local": check_locality_axioms(&m).all_pass()}));
    }
    if let Some(t) = &a.theory {
        let t = load_theory(t)?;
        let members = t.catalogue().map(|c| c.len());
        checked.insert("theory".into(), json!({"catalogue": members, "size_bound": t.size_bound}));
    }
    if let Some(p) = &a.system {
        let sys = RawSystem::from_file(p).map_err(input)?;
        checked.insert("system".into(), json!({"structures": sys.len()}));
    }
    if checked.is_empty() {
        return Err(input(anyhow!("give at least one of --signature, --structure, --theory, --system")));
    }
    rep.emit("validate", json!("valid"), Value::Object(checked))
}

fn eval_cmd(a: &crate::args::EvalArgs, rep: &Reporter) -> Result<()> {
    let m = load_structure(&a.structure)?;
    let sig = m.sig();
    let mut env = Environment::new();
    let mut declared = Vec::new();
    for b in &a.env {
        let (sort, name, label) = split_binding(b, sig.sorts())?;
        let e = m.element(sort, label).map_err(input)?;
        env.bind(name, sort, e);
        declared.push(Var::new(name, sort));
    }
    let f = parse_in_context(&a.formula, sig, &declared).map_err(input)?;
    let free: Vec<Var> = f.free_variables().into_iter().collect();
    let unbound: Vec<&Var> = free.iter().filter(|v| env.get(&v.name).is_none()).collect();
    if unbound.is_empty() {
        let value = eval(&m, &f, &env).map_err(input)?;
        return rep.emit("eval", json!(value), json!({"formula": show(&f, sig)}));
    }
    if !a.env.is_empty() {
        let names: Vec<&str> = unbound.iter().map(|v| v.name.as_str()).collect();
        return Err(input(anyhow!("unbound variables {names:?}; bind all or none")));
    }
    let set = definable_set(&m, &f, &free).map_err(input)?;
    let tuples: Vec<Value> = set.iter().map(|t| tuple_value(&m, &free, t)).collect();
    rep.emit("eval", json!(tuples.len()), json!({"formula": show(&f, sig), "satisfying": tuples}))
}

fn pins(bindings: &[String], a: &FiniteStructure, b: &FiniteStructure) -> Result<Vec<(usize, usize, usize)>> {
    bindings
        .iter()
        .map(|p| {
            let (s, x, y) = split_binding(p, a.sig().sorts())?;
            Ok((s, a.element(s, x).map_err(input)?, b.element(s, y).map_err(input)?))
        })
        .collect()
}

fn same_signature(a: &FiniteStructure, b: &FiniteStructure) -> Result<()> {
    if a.sig() != b.sig() {
        return Err(input(MorphismError::SignatureMismatch));
    }
    Ok(())
}

fn homs(a: &crate::args::HomsArgs, rep: &Reporter) -> Result<()> {
    let (x, y) = (load_structure(&a.from)?, load_structure(&a.to)?);
    same_signature(&x, &y)?;
    let pins = pins(&a.pins, &x, &y)?;
    let found = if a.injective {
        find_injective_homomorphisms(&x, &y, &pins, a.limit)
    } else {
        find_homomorphisms(&x, &y, &pins, a.limit)
    }
    .map_err(input)?;
    let list: Vec<Value> = found.iter().map(|h| hom_value(h, &x, &y)).collect();
    rep.emit("homs", json!(list.len()), json!({"homomorphisms": list, "limit": a.limit}))
}

fn embedding_value(v: &EmbeddingCertificate, a: &FiniteStructure, b: &FiniteStructure) -> Value {
    match v {
        EmbeddingCertificate::Retraction(r) => json!({"retraction": hom_value(r, b, a)}),
        EmbeddingCertificate::Violation { formula, vars, tuple } => {
            json!({"violation": {"formula": show(formula, a.sig()), "tuple": tuple_value(a, vars, tuple)}})
        }
        EmbeddingCertificate::Reflected { checked } => json!({"reflected": checked}),
    }
}

fn pe(a: &crate::args::PeArgs, rep: &Reporter) -> Result<()> {
    let (x, y) = (load_structure(&a.from)?, load_structure(&a.to)?);
    same_signature(&x, &y)?;
    let mode = match a.mode {
        PeMode::Retraction => EmbeddingMode::Retraction,
        PeMode::Diagram => EmbeddingMode::Diagram,
        PeMode::Fragment => EmbeddingMode::Fragment { frag: a.fragment.or_default()?, with_diagram: false },
    };
    let homs = if a.map.is_empty() {
        find_homomorphisms(&x, &y, &[], None).map_err(input)?
    } else {
        let mut maps: Vec<Vec<Option<usize>>> = (0..x.sig().sorts().len()).map(|s| vec![None; x.size(s)]).collect();
        for (s, e, t) in pins(&a.map, &x, &y)? {
            maps[s][e] = Some(t);
        }
        let maps = maps
            .into_iter()
            .enumerate()
            .map(|(s, m)| {
                m.into_iter()
                    .enumerate()
                    .map(|(e, t)| t.ok_or_else(|| input(anyhow!("no image for {}", x.label(s, e)))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let h = Homomorphism { maps };
        if !is_homomorphism(&x, &y, &h) {
            return Err(input(anyhow!("the map is not a homomorphism")));
        }
        vec![h]
    };
    let mut results = Vec::new();
    let mut all = true;
    for h in &homs {
        let v = is_positive_embedding(&x, &y, h, &mode).map_err(input)?;
        all &= v.positive;
        results.push(json!({
            "map": hom_value(h, &x, &y),
            "positive": v.positive,
            "certificate": embedding_value(&v.certificate, &x, &y),
        }));
    }
    rep.emit("pe", json!(all), json!({"checked": homs.len(), "maps": results}))
}

fn pc(a: &crate::args::PcArgs, rep: &Reporter) -> Result<()> {
    let m = load_structure(&a.structure)?;
    let cat = a.catalogue.iter().map(|c| load_structure(c)).collect::<Result<Vec<_>>>()?;
    let frag = if a.cross_check { Some(a.fragment.or_default()?) } else { None };
    let v = match check_locally_positively_closed(&m, &cat, frag.as_ref()) {
        Ok(v) => v,
        Err(e @ MorphismError::OracleDisagreement(_)) => return Err(e.into()),
        Err(e) => return Err(input(e)),
    };
    let verdict = match &v {
        PcVerdict::Yes { .. } => "yes",
        PcVerdict::No(_) => "no",
    };
    rep.emit("pc", json!(verdict), serde_json::to_value(v.report(&m, &cat))?)
}

fn denials(a: &crate::args::DenialsArgs, rep: &Reporter) -> Result<()> {
    let t = a.theory.load()?;
    let sig = t.sig();
    let phi = formula_in(&a.formula, sig)?;
    match &a.against {
        None => {
            let ds = find_denials(&t, &phi, &t.fragment).map_err(input)?;
            let list: Vec<Value> = ds
                .iter()
                .map(|d| json!({"formula": show(&d.formula, sig), "local": d.local, "complete": d.complete}))
                .collect();
            rep.emit("denials", json!(list.len()), json!({"formula": show(&phi, sig), "bound": t.size_bound, "denials": list}))
        }
        Some(other) => {
            let psi = formula_in(other, sig)?;
            let mode = match a.relation {
                Relation::Approx => ApproxMode::Approximates,
                Relation::Complementary => ApproxMode::Complementary,
            };
            let v = check_approx_complementary(&t, &phi, &psi, mode, &t.fragment).map_err(input)?;
            let cert = match &v.certificate {
                None => Value::Null,
                Some(ApproxCertificate::NotApproximation { theta }) => json!({"theta": show(theta, sig)}),
                Some(ApproxCertificate::NotComplementary { theta, chi }) => {
                    json!({"theta": show(theta, sig), "chi": show(chi, sig)})
                }
            };
            rep.emit(
                "denials",
                json!(v.holds),
                json!({"relation": format!("{mode:?}"), "denials_checked": v.denials_checked, "certificate": cert}),
            )
        }
    }
}

fn loc_names(t: &TheorySpec, d: &[usize]) -> Vec<String> {
    d.iter().enumerate().map(|(s, &x)| t.sig().monoid(s).name(x).to_string()).collect()
}

fn pair_value(t: &TheorySpec, c: &Option<(Formula, Formula)>) -> Value {
    match c {
        Some((a, b)) => json!([show(a, t.sig()), show(b, t.sig())]),
        None => Value::Null,
    }
}

fn theory(action: &TheoryAction, rep: &Reporter) -> Result<()> {
    match action {
        TheoryAction::Entails { theory, formula } => {
            let t = theory.load()?;
            let f = formula_in(formula, t.sig())?;
            rep.note("searching for a countermodel");
            match locally_entails(&t, &f, t.size_bound).map_err(input)? {
                Entailment::Entailed { bound, complete } => {
                    rep.emit("theory entails", json!("entailed"), json!({"bound": bound, "complete": complete}))
                }
                Entailment::Countermodel { model, source } => rep.emit(
                    "theory entails",
                    json!("countermodel"),
                    json!({"source": format!("{source:?}"), "model": structure_value(&model)?}),
                ),
            }
        }
        TheoryAction::Member { theory, formula } => {
            let t = theory.load()?;
            let f = formula_in(formula, t.sig())?;
            match positive_part_membership(&t, &f).map_err(input)? {
                Membership::Witness { model, source } => rep.emit(
                    "theory member",
                    json!(true),
                    json!({"source": format!("{source:?}"), "model": structure_value(&model)?}),
                ),
                Membership::NotInTPlus { bound, complete } => {
                    rep.emit("theory member", json!(false), json!({"bound": bound, "complete": complete}))
                }
            }
        }
        TheoryAction::Irreducible { theory, uniform, search } => {
            let t = theory.load()?;
            let mode = if *search {
                IrreducibilityMode::UniformSearch
            } else if uniform.is_empty() {
                IrreducibilityMode::Plain
            } else {
                if uniform.len() != t.sig().sorts().len() {
                    return Err(input(anyhow!("give one locality element per sort")));
                }
                let ids = uniform
                    .iter()
                    .enumerate()
                    .map(|(s, n)| t.sig().monoid(s).index_of(n).ok_or_else(|| input(anyhow!("unknown element {n}"))))
                    .collect::<Result<Vec<_>>>()?;
                IrreducibilityMode::Uniform(ids)
            };
            let r = check_irreducibility(&t, &mode).map_err(input)?;
            let per_d: Vec<Value> = r
                .per_d
                .iter()
                .map(|u| json!({"d": loc_names(&t, &u.d), "holds": u.holds, "certificate": pair_value(&t, &u.certificate)}))
                .collect();
            rep.emit(
                "theory irreducible",
                json!(r.holds),
                json!({
                    "formulas": r.formulas,
                    "classes": r.classes,
                    "certificate": pair_value(&t, &r.certificate),
                    "per_d": per_d,
                    "complete": r.complete,
                    "bound": t.size_bound,
                }),
            )
        }
        TheoryAction::Ljcp { theory } => {
            let t = theory.load()?;
            let r = check_ljcp(&t, t.size_bound).map_err(input)?;
            let witnesses: Vec<Value> =
                r.witnesses.iter().map(|w| json!({"a": w.a, "b": w.b, "target": w.target})).collect();
            let failures: Vec<Value> = r
                .failures
                .iter()
                .map(|f| json!({"a": f.a, "b": f.b, "obstruction": show(&f.obstruction, t.sig())}))
                .collect();
            rep.emit("theory ljcp", json!(r.holds), json!({"bound": r.bound, "witnesses": witnesses, "failures": failures}))
        }
        TheoryAction::Hierarchy { theory } => {
            let t = theory.load()?;
            let r = hierarchy_report(&t).map_err(input)?;
            let violations = r.violations();
            rep.emit(
                "theory hierarchy",
                json!(if violations.is_empty() { "consistent" } else { "violated" }),
                json!({
                    "uniformly_irreducible": r.ui.as_ref().map(|d| loc_names(&t, d)),
                    "ljcp": r.ljcp,
                    "complete": r.catalogue_complete,
                    "weakly_complete": r.weakly_complete,
                    "irreducible": r.irreducible,
                    "pc_members": r.pc_members,
                    "pointed": r.pointed,
                    "violations": violations,
                    "bound": r.bound,
                }),
            )
        }
        TheoryAction::Bound { theory, formula } => {
            let t = theory.load()?;
            let f = formula_in(formula, t.sig())?;
            let b = synthesize_bound(&t, &f).map_err(input)?;
            rep.emit("theory bound", json!(show(&b.to_formula(), t.sig())), json!({"formula": show(&f, t.sig())}))
        }
        TheoryAction::Probe { theory } => probe(theory, rep),
        TheoryAction::Balls { theory } => {
            let t = theory.load()?;
            let cat = t.catalogue().ok_or_else(|| input(anyhow!("balls needs a catalogue theory")))?;
            let list: Vec<Value> = cat
                .iter()
                .map(|m| match ball_witness(m) {
                    Some(w) => json!({
                        "centre": w.centre.iter().enumerate().map(|(s, &e)| m.label(s, e).to_string()).collect::<Vec<_>>(),
                        "radius": loc_names(&t, &w.radius),
                    }),
                    None => Value::Null,
                })
                .collect();
            let all = list.iter().all(|v| !v.is_null());
            rep.emit("theory balls", json!(all), json!({"members": list}))
        }
    }
}

fn probe(theory: &TheoryArgs, rep: &Reporter) -> Result<()> {
    let t = theory.load()?;
    match inherent_locality_probe(&t, &t.fragment, t.size_bound).map_err(input)? {
        ProbeOutcome::LocalityGap { gamma, x, y, horizon } => {
            let shown: Vec<String> = gamma.iter().map(|f| show(f, t.sig())).collect();
            rep.emit(
                "theory probe",
                json!("gap"),
                json!({"gamma": shown, "x": x.name, "y": y.name, "horizon": t.sig().monoid(x.sort).name(horizon)}),
            )
        }
        ProbeOutcome::NoGap { bound, seeds } => {
            rep.emit("theory probe", json!("no_gap"), json!({"bound": bound, "seeds": seeds}))
        }
    }
}

fn limit(a: &crate::args::LimitArgs, rep: &Reporter) -> Result<()> {
    let sys = RawSystem::from_file(&a.system).map_err(input)?;
    let lim = direct_limit(&sys).map_err(input)?;
    let sig = lim.structure.sig();
    let mut lemma = Vec::new();
    let mut all = true;
    for text in &a.formulas {
        let f = formula_in(text, sig)?;
        if !f.is_sentence() {
            return Err(input(anyhow!("{text} is not a sentence")));
        }
        let r = verify_limit_lemma(&sys, &lim, &f, &[], &[]).map_err(input)?;
        all &= r.verified;
        lemma.push(json!({
            "formula": show(&f, sig),
            "clause": r.clause,
            "in_limit": r.in_limit,
            "witness_index": r.witness.map(|w| w.0),
            "verified": r.verified,
        }));
    }
    if let Some(p) = &a.save {
        std::fs::write(p, lim.structure.to_json())?;
    }
    let sizes: Vec<usize> = (0..sig.sorts().len()).map(|s| lim.structure.size(s)).collect();
    rep.emit(
        "limit",
        json!(all),
        json!({"sizes": sizes, "limit": structure_value(&lim.structure)?, "lemma": lemma}),
    )
}

fn corpus(action: &CorpusAction, rep: &Reporter) -> Result<()> {
    match action {
        CorpusAction::List => {
            let structures: Vec<String> = CorpusId::catalogue().iter().map(|c| c.to_string()).collect();
            let theories: Vec<String> = TheoryId::catalogue().iter().map(|c| c.to_string()).collect();
            let examples: Vec<String> = Example::ALL.iter().map(|e| e.to_string()).collect();
            rep.emit(
                "corpus list",
                json!(structures.len() + theories.len()),
                json!({"structures": structures, "theories": theories, "examples": examples}),
            )
        }
        CorpusAction::Build { id } => {
            if let Ok(c) = id.parse::<CorpusId>() {
                let m = c.build().map_err(input)?;
                return rep.write(&m.to_json());
            }
            let t: TheoryId = id.parse().map_err(input)?;
            t.build().map_err(input)?;
            rep.write(&serde_json::to_string_pretty(&t.to_raw())?)
        }
        CorpusAction::Check { scope } => {
            let scope = parse_scope(scope)?;
            rep.note(format!("running checks for {} examples", scope.len()));
            let r = run_example_checks(&scope);
            let failed = r.failures().count();
            rep.emit(
                "corpus check",
                json!(if r.all_passed() { "pass" } else { "fail" }),
                json!({"failed": failed, "entries": serde_json::to_value(&r.entries)?}),
            )
        }
    }
}
