use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::Value as Json;

use crate::eql::{self, Operand};

use super::case::{value_from_json, value_to_json};
use super::{CaseGraph, Conclusion, ConclusionValue, Grdr, RdrError, Rule, RuleTree, Slot, StoredCase, Target, TreeKind};

const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum RuleModule {
    Tree(RuleTree),
    Grdr(Grdr),
}

/// Line-oriented text form of a rule tree. Rules are written in pre-order,
/// stored cases follow the rules.
pub fn save_rule_module(tree: &RuleTree) -> String {
    let mut out = format!("format_version={FORMAT_VERSION}\n");
    write_tree(&mut out, tree);
    out
}

pub fn save_grdr_module(grdr: &Grdr) -> String {
    let mut out = format!("format_version={FORMAT_VERSION}\nkind=GRDR\nmax_iterations={}\n", grdr.max_iterations);
    for (name, tree) in &grdr.trees {
        let _ = writeln!(out, "tree {name}");
        write_tree(&mut out, tree);
        out.push_str("end\n");
    }
    out
}

fn write_tree(out: &mut String, tree: &RuleTree) {
    let _ = writeln!(out, "kind={}", tree.kind.code());
    let _ = writeln!(out, "target={}", tree.target.attribute);
    let _ = writeln!(out, "target_type={}", tree.target.type_name);
    let _ = writeln!(out, "mutually_exclusive={}", tree.target.mutually_exclusive);
    let _ = writeln!(out, "case_var={}", tree.case_var);
    for id in tree.preorder() {
        let r = &tree.rules[id];
        let _ = write!(out, "rule {id}");
        if let Some((p, slot)) = r.parent {
            let _ = write!(out, " parent={p} slot={}", slot.code());
        }
        if let Some(c) = r.cornerstone {
            let _ = write!(out, " cornerstone={c}");
        }
        let _ = write!(out, " when {} conclude ", eql::print_condition_scoped(&r.condition, &tree.case_var));
        match &r.conclusion {
            None => out.push_str("NONE"),
            Some(Conclusion::Stop) => out.push_str("STOP"),
            Some(Conclusion::Infer { type_name, fields }) => {
                let fields: Vec<String> =
                    fields.iter().map(|(k, o)| format!("{k}={}", eql::print_operand_scoped(o, &tree.case_var))).collect();
                let _ = write!(out, "{type_name}{{{}}}", fields.join(", "));
            }
        }
        out.push('\n');
    }
    for (i, sc) in tree.cases.iter().enumerate() {
        let _ = writeln!(out, "case {i} {}", sc.case.to_flat_json());
        let recorded: Vec<Json> = sc.recorded.iter().map(conclusion_value_json).collect();
        let _ = writeln!(out, "expect {i} {}", Json::Array(recorded));
    }
}

fn conclusion_value_json(c: &ConclusionValue) -> Json {
    let fields: serde_json::Map<String, Json> =
        c.fields.iter().map(|(k, vs)| (k.clone(), Json::Array(vs.iter().map(value_to_json).collect()))).collect();
    serde_json::json!({ "type": c.type_name, "fields": fields })
}

fn conclusion_value_from_json(j: &Json) -> Result<ConclusionValue, String> {
    let type_name = j.get("type").and_then(Json::as_str).ok_or("conclusion value needs a `type`")?.to_string();
    let mut fields = BTreeMap::new();
    for (k, vs) in j.get("fields").and_then(Json::as_object).into_iter().flatten() {
        let vs = vs.as_array().ok_or("field values must be lists")?;
        let vals = vs.iter().map(value_from_json).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
        fields.insert(k.clone(), vals);
    }
    Ok(ConclusionValue { type_name, fields })
}

pub fn load_rule_module(text: &str) -> Result<RuleModule, RdrError> {
    load_rule_module_with_types(text, &|_| true)
}

/// Loads a module, rejecting target types for which `known` is false.
pub fn load_rule_module_with_types(text: &str, known: &dyn Fn(&str) -> bool) -> Result<RuleModule, RdrError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#')).peekable();
    let err = |line: usize, cause: &str| RdrError::ModuleParseError { line, cause: cause.to_string() };
    let (n, first) = lines.next().ok_or_else(|| err(1, "empty module"))?;
    match first.strip_prefix("format_version=") {
        Some(v) if v.trim() == FORMAT_VERSION.to_string() => {}
        Some(v) => return Err(err(n, &format!("unsupported format version `{v}`"))),
        None => return Err(err(n, "expected `format_version=`")),
    }
    if lines.peek().is_some_and(|(_, l)| *l == "kind=GRDR") {
        lines.next();
        let mut grdr = Grdr::new();
        if let Some((n, l)) = lines.peek().copied() {
            if let Some(v) = l.strip_prefix("max_iterations=") {
                grdr.max_iterations = v.trim().parse().map_err(|_| err(n, "max_iterations must be a number"))?;
                lines.next();
            }
        }
        while let Some((n, l)) = lines.next() {
            let name = l.strip_prefix("tree ").ok_or_else(|| err(n, "expected `tree <name>`"))?.trim().to_string();
            let mut body = Vec::new();
            let mut closed = false;
            for (m, l) in lines.by_ref() {
                if l == "end" {
                    closed = true;
                    break;
                }
                body.push((m, l));
            }
            if !closed {
                return Err(err(n, "tree block is missing `end`"));
            }
            let tree = read_tree(&body, n, known)?;
            if grdr.trees.insert(name, tree).is_some() {
                return Err(err(n, "duplicate tree name"));
            }
        }
        return Ok(RuleModule::Grdr(grdr));
    }
    let body: Vec<(usize, &str)> = lines.collect();
    read_tree(&body, n, known).map(RuleModule::Tree)
}

fn read_tree(lines: &[(usize, &str)], start: usize, known: &dyn Fn(&str) -> bool) -> Result<RuleTree, RdrError> {
    let err = |line: usize, cause: &str| RdrError::ModuleParseError { line, cause: cause.to_string() };
    let mut header: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    let mut i = 0;
    while i < lines.len() {
        let (n, l) = lines[i];
        if l.starts_with("rule ") || l.starts_with("case ") || l.starts_with("expect ") {
            break;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| err(n, "expected `key=value`"))?;
        header.insert(k.trim(), (n, v.trim()));
        i += 1;
    }
    let get = |k: &str| header.get(k).copied().ok_or_else(|| err(start, &format!("missing `{k}=` header")));
    let kind = match get("kind")? {
        (_, "SC") => TreeKind::Single,
        (_, "MC") => TreeKind::Multi,
        (n, other) => return Err(err(n, &format!("unknown tree kind `{other}`"))),
    };
    let attribute = get("target")?.1.to_string();
    let (_, type_name) = get("target_type")?;
    if !known(type_name) {
        return Err(RdrError::UnknownTargetType(type_name.to_string()));
    }
    let mutually_exclusive = match header.get("mutually_exclusive") {
        Some((_, "true")) => true,
        Some((_, "false")) => false,
        Some((n, _)) => return Err(err(*n, "mutually_exclusive must be true or false")),
        None => kind == TreeKind::Single,
    };
    let case_var = header.get("case_var").map(|(_, v)| v.to_string()).unwrap_or_else(|| "case".into());
    let mut tree = RuleTree::new(kind, Target { attribute, type_name: type_name.to_string(), mutually_exclusive });
    tree.case_var = case_var.clone();

    let mut rules: BTreeMap<usize, (usize, Rule)> = BTreeMap::new();
    let mut order = Vec::new();
    let mut cases: BTreeMap<usize, CaseGraph> = BTreeMap::new();
    let mut expects: BTreeMap<usize, Vec<ConclusionValue>> = BTreeMap::new();
    for &(n, l) in &lines[i..] {
        if let Some(rest) = l.strip_prefix("rule ") {
            let rule = parse_rule(rest, &case_var).map_err(|c| err(n, &c))?;
            order.push(rule.id);
            if rules.insert(rule.id, (n, rule)).is_some() {
                return Err(err(n, "duplicate rule id"));
            }
        } else if let Some(rest) = l.strip_prefix("case ") {
            let (idx, json) = rest.split_once(' ').ok_or_else(|| err(n, "expected `case <n> <json>`"))?;
            let idx: usize = idx.parse().map_err(|_| err(n, "case index must be a number"))?;
            let j: Json = serde_json::from_str(json).map_err(|e| err(n, &e.to_string()))?;
            cases.insert(idx, CaseGraph::from_flat_json(&j).map_err(|e| err(n, &e.to_string()))?);
        } else if let Some(rest) = l.strip_prefix("expect ") {
            let (idx, json) = rest.split_once(' ').ok_or_else(|| err(n, "expected `expect <n> <json>`"))?;
            let idx: usize = idx.parse().map_err(|_| err(n, "case index must be a number"))?;
            let j: Json = serde_json::from_str(json).map_err(|e| err(n, &e.to_string()))?;
            let items = j.as_array().ok_or_else(|| err(n, "expected a list of conclusions"))?;
            let vals = items.iter().map(conclusion_value_from_json).collect::<Result<Vec<_>, _>>().map_err(|c| err(n, &c))?;
            expects.insert(idx, vals);
        } else {
            return Err(err(n, "expected a `rule`, `case` or `expect` line"));
        }
    }

    for (idx, case) in &cases {
        if *idx != tree.cases.len() {
            return Err(err(start, &format!("stored case {idx} out of sequence")));
        }
        let recorded = expects.remove(idx).unwrap_or_default();
        tree.cases.push(StoredCase { case: case.clone(), recorded });
    }
    if let Some(idx) = expects.keys().next() {
        return Err(err(start, &format!("expectation for unknown case {idx}")));
    }

    if rules.is_empty() {
        return Ok(tree);
    }
    let count = rules.len();
    if rules.keys().next_back() != Some(&(count - 1)) {
        return Err(err(start, "rule ids must be 0..n"));
    }
    let (root_line, root) = rules.remove(&0).ok_or_else(|| err(start, "missing root rule 0"))?;
    if root.parent.is_some() {
        return Err(err(root_line, "the root rule has no parent"));
    }
    tree.rules[0] = root;
    tree.rules.resize_with(count, tree_placeholder);
    for id in order.into_iter().filter(|id| *id != 0) {
        let (n, rule) = rules.remove(&id).expect("rule recorded");
        let (p, slot) = rule.parent.ok_or_else(|| err(n, "non-root rules need a parent"))?;
        if p >= count || (p != 0 && tree.rules[p].id != p) {
            return Err(err(n, "parent must precede the rule"));
        }
        if rule.cornerstone.is_some_and(|c| c >= tree.cases.len()) {
            return Err(err(n, "cornerstone refers to a missing case"));
        }
        let parent = &mut tree.rules[p];
        match slot {
            Slot::Except if parent.except.is_none() => parent.except = Some(id),
            Slot::Alternative if parent.alternative.is_none() => parent.alternative = Some(id),
            Slot::Refine => parent.refinements.push(id),
            _ => return Err(err(n, "slot already occupied")),
        }
        tree.rules[id] = rule;
    }
    Ok(tree)
}

fn tree_placeholder() -> Rule {
    Rule {
        id: usize::MAX,
        condition: eql::Condition::falsity(),
        conclusion: None,
        except: None,
        alternative: None,
        refinements: Vec::new(),
        parent: None,
        cornerstone: None,
    }
}

fn parse_rule(rest: &str, case_var: &str) -> Result<Rule, String> {
    let (head, body) = rest.split_once(" when ").ok_or("expected `when`")?;
    let mut words = head.split_whitespace();
    let id: usize = words.next().ok_or("missing rule id")?.parse().map_err(|_| "rule id must be a number")?;
    let (mut parent, mut slot, mut cornerstone) = (None, None, None);
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| format!("unexpected `{w}`"))?;
        match k {
            "parent" => parent = Some(v.parse::<usize>().map_err(|_| "parent must be a number")?),
            "slot" => {
                slot = Some(match v {
                    "except" => Slot::Except,
                    "alt" => Slot::Alternative,
                    "refine" => Slot::Refine,
                    _ => return Err(format!("unknown slot `{v}`")),
                })
            }
            "cornerstone" => cornerstone = Some(v.parse::<usize>().map_err(|_| "cornerstone must be a number")?),
            _ => return Err(format!("unknown rule attribute `{k}`")),
        }
    }
    let parent = match (parent, slot) {
        (Some(p), Some(s)) => Some((p, s)),
        (None, None) => None,
        _ => return Err("`parent` and `slot` go together".into()),
    };
    let (condition, used) = eql::parse_condition_prefix(body, Some(case_var)).map_err(|e| e.to_string())?;
    let tail = body[used..].trim_start();
    let tail = tail.strip_prefix("conclude").ok_or("expected `conclude`")?.trim();
    let conclusion = match tail {
        "NONE" => None,
        "STOP" => Some(Conclusion::Stop),
        _ => Some(conclusion_text(tail, case_var)?),
    };
    Ok(Rule { id, condition, conclusion, except: None, alternative: None, refinements: Vec::new(), parent, cornerstone })
}

/// Parses `Type{field=path, ...}` or `STOP`.
pub fn parse_conclusion(text: &str, case_var: &str) -> Result<Conclusion, RdrError> {
    match text.trim() {
        "STOP" => Ok(Conclusion::Stop),
        t => conclusion_text(t, case_var).map_err(|cause| RdrError::ModuleParseError { line: 1, cause }),
    }
}

fn conclusion_text(text: &str, case_var: &str) -> Result<Conclusion, String> {
    let open = text.find('{').ok_or("expected `Type{...}`")?;
    let type_name = text[..open].trim();
    if type_name.is_empty() || !type_name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return Err(format!("bad conclusion type `{type_name}`"));
    }
    let mut rest = text[open + 1..].trim_start();
    let mut fields: Vec<(String, Operand)> = Vec::new();
    if let Some(r) = rest.strip_prefix('}') {
        return if r.trim().is_empty() { Ok(Conclusion::Infer { type_name: type_name.into(), fields }) } else { Err("trailing text".into()) };
    }
    loop {
        let eq = rest.find('=').ok_or("expected `field=value`")?;
        let name = rest[..eq].trim();
        if name.is_empty() {
            return Err("empty field name".into());
        }
        let (operand, used) = eql::parse_operand_prefix(&rest[eq + 1..], Some(case_var)).map_err(|e| e.to_string())?;
        fields.push((name.to_string(), operand));
        rest = rest[eq + 1 + used..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
        } else if let Some(r) = rest.strip_prefix('}') {
            if !r.trim().is_empty() {
                return Err("trailing text after conclusion".into());
            }
            return Ok(Conclusion::Infer { type_name: type_name.into(), fields });
        } else {
            return Err("expected `,` or `}`".into());
        }
    }
}
