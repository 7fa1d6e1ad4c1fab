//! LP text format writer and reader, and the `name value` start-values file.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::milp::{parse_var_name, Cmp, Constraint, MilpModel, ObjSense, VarId, VarKind};

const TERMS_PER_LINE: usize = 8;

fn number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = x.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn write_terms(out: &mut String, model: &MilpModel, terms: &[(VarId, f64)]) {
    if terms.is_empty() {
        // LP readers need at least one term per row
        let _ = write!(out, " 0 {}", model.vars()[0].name);
        return;
    }
    for (n, &(v, a)) in terms.iter().enumerate() {
        if n > 0 && n % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", number(a.abs()), model.var(v).name);
    }
}

/// Render `model` in LP format.
pub fn write_lp(model: &MilpModel) -> Result<String> {
    if model.vars().is_empty() {
        return Err(Error::Model("cannot write a model without variables".into()));
    }
    let mut seen = HashMap::new();
    for v in model.vars() {
        if seen.insert(v.name.as_str(), ()).is_some() {
            return Err(Error::Model(format!("name collision on {}", v.name)));
        }
    }
    for c in model.constraints() {
        if seen.insert(c.name.as_str(), ()).is_some() {
            return Err(Error::Model(format!("name collision on {}", c.name)));
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name);
    out.push_str(match model.objective().sense {
        ObjSense::Maximize => "Maximize\n",
        ObjSense::Minimize => "Minimize\n",
    });
    out.push_str(" obj:");
    write_terms(&mut out, model, &model.objective().terms);
    out.push_str("\nSubject To\n");
    for row in model.constraints() {
        let _ = write!(out, " {}:", row.name);
        write_terms(&mut out, model, &row.terms);
        let _ = writeln!(out, " {} {}", row.cmp, number(row.rhs));
    }
    out.push_str("Bounds\n");
    for v in model.vars().iter().filter(|v| v.kind != VarKind::Binary) {
        if v.lower == v.upper {
            let _ = writeln!(out, " {} = {}", v.name, number(v.lower));
        } else if v.lower.is_infinite() && v.upper.is_infinite() {
            let _ = writeln!(out, " {} free", v.name);
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", number(v.lower), v.name, number(v.upper));
        }
    }
    let generals: Vec<&str> = model
        .vars()
        .iter()
        .filter(|v| v.kind == VarKind::Integer)
        .map(|v| v.name.as_str())
        .collect();
    if !generals.is_empty() {
        out.push_str("General\n");
        for chunk in generals.chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    let binaries: Vec<&str> = model
        .vars()
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binary\n");
        for chunk in binaries.chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Objective,
    Rows,
    Bounds,
    General,
    Binary,
    End,
}

fn section_of(line: &str) -> Option<(Section, Option<ObjSense>)> {
    let lower = line.trim().to_ascii_lowercase();
    Some(match lower.as_str() {
        "maximize" | "maximise" | "max" => (Section::Objective, Some(ObjSense::Maximize)),
        "minimize" | "minimise" | "min" => (Section::Objective, Some(ObjSense::Minimize)),
        "subject to" | "such that" | "st" | "s.t." => (Section::Rows, None),
        "bounds" | "bound" => (Section::Bounds, None),
        "general" | "generals" | "gen" | "integer" | "integers" => (Section::General, None),
        "binary" | "binaries" | "bin" => (Section::Binary, None),
        "end" => (Section::End, None),
        _ => return None,
    })
}

fn parse_number(tok: &str) -> Result<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok
            .parse()
            .map_err(|_| Error::SolutionParse(format!("not a number: {tok}"))),
    }
}

struct PendingVar {
    kind: VarKind,
    lower: f64,
    upper: f64,
}

/// Variables in order of first appearance, with the attributes read so far.
#[derive(Default)]
struct PendingVars {
    order: Vec<String>,
    by_name: HashMap<String, PendingVar>,
}

impl PendingVars {
    fn touch(&mut self, name: &str) -> &mut PendingVar {
        if !self.by_name.contains_key(name) {
            self.order.push(name.to_string());
        }
        self.by_name.entry(name.to_string()).or_insert(PendingVar {
            kind: VarKind::Continuous,
            lower: 0.0,
            upper: f64::INFINITY,
        })
    }
}

fn parse_linear(tokens: &[&str]) -> Result<Vec<(String, f64)>> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for &tok in tokens {
        match tok {
            "+" => {}
            "-" => sign = -sign,
            _ => {
                if let Ok(x) = tok.parse::<f64>() {
                    coef = Some(coef.unwrap_or(1.0) * x);
                } else {
                    let a = sign * coef.unwrap_or(1.0);
                    if a != 0.0 {
                        terms.push((tok.to_string(), a));
                    }
                    sign = 1.0;
                    coef = None;
                }
            }
        }
    }
    Ok(terms)
}

fn split_cmp(tokens: &[String]) -> Option<(usize, Cmp)> {
    tokens.iter().enumerate().find_map(|(n, t)| match t.as_str() {
        "<=" | "=<" | "<" => Some((n, Cmp::Le)),
        ">=" | "=>" | ">" => Some((n, Cmp::Ge)),
        "=" => Some((n, Cmp::Eq)),
        _ => None,
    })
}

fn tokenize(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() + 16);
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '<' | '>' | '=' => {
                spaced.push(' ');
                spaced.push(ch);
                if let Some(&next) = chars.peek() {
                    if matches!(next, '=' | '<' | '>') {
                        spaced.push(next);
                        chars.next();
                    }
                }
                spaced.push(' ');
            }
            ':' => spaced.push_str(" : "),
            _ => spaced.push(ch),
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

/// Parse an LP document back into a model. Variables take the role and
/// index encoded in their names; unknown names are rejected.
pub fn parse_lp(text: &str) -> Result<MilpModel> {
    let mut sense = ObjSense::Minimize;
    let mut section = None;
    let mut title = String::from("model");
    let mut objective_text = String::new();
    let mut rows_text: Vec<String> = Vec::new();
    let mut bounds_lines = Vec::new();
    let mut generals = Vec::new();
    let mut binaries = Vec::new();

    for raw in text.lines() {
        if let Some(comment) = raw.trim_start().strip_prefix('\\') {
            if section.is_none() {
                title = comment.trim().to_string();
            }
            continue;
        }
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if let Some((s, obj)) = section_of(line) {
            section = Some(s);
            if let Some(obj) = obj {
                sense = obj;
            }
            continue;
        }
        match section {
            Some(Section::Objective) => {
                objective_text.push(' ');
                objective_text.push_str(line);
            }
            Some(Section::Rows) => {
                // a row starts with `name:`; other lines continue the previous row
                let starts_row = line.contains(':') || rows_text.is_empty();
                if starts_row {
                    rows_text.push(line.to_string());
                } else if let Some(last) = rows_text.last_mut() {
                    last.push(' ');
                    last.push_str(line);
                }
            }
            Some(Section::Bounds) => bounds_lines.push(line.to_string()),
            Some(Section::General) => generals.extend(line.split_whitespace().map(str::to_string)),
            Some(Section::Binary) => binaries.extend(line.split_whitespace().map(str::to_string)),
            Some(Section::End) => break,
            None => {
                return Err(Error::SolutionParse(format!("content before any section: {line}")))
            }
        }
    }

    let mut pending = PendingVars::default();
    let obj_tokens = tokenize(&objective_text);
    let obj_body: Vec<&str> = match obj_tokens.iter().position(|t| t == ":") {
        Some(p) => obj_tokens[p + 1..].iter().map(String::as_str).collect(),
        None => obj_tokens.iter().map(String::as_str).collect(),
    };
    let objective_terms = parse_linear(&obj_body)?;
    for (name, _) in &objective_terms {
        pending.touch(name);
    }

    let mut rows = Vec::new();
    for (n, row) in rows_text.iter().enumerate() {
        let tokens = tokenize(row);
        let (name, body) = match tokens.iter().position(|t| t == ":") {
            Some(p) => (tokens[..p].join(""), tokens[p + 1..].to_vec()),
            None => (format!("R{n}"), tokens.clone()),
        };
        let (at, cmp) = split_cmp(&body)
            .ok_or_else(|| Error::SolutionParse(format!("row {name} has no comparison")))?;
        let lhs: Vec<&str> = body[..at].iter().map(String::as_str).collect();
        let rhs_tokens = &body[at + 1..];
        let rhs = match rhs_tokens {
            [v] => parse_number(v)?,
            [s, v] if s == "-" => -parse_number(v)?,
            [s, v] if s == "+" => parse_number(v)?,
            _ => {
                return Err(Error::SolutionParse(format!(
                    "row {name} has an unsupported right-hand side"
                )))
            }
        };
        let terms = parse_linear(&lhs)?;
        for (v, _) in &terms {
            pending.touch(v);
        }
        rows.push((name, terms, cmp, rhs));
    }

    for line in &bounds_lines {
        let tokens = tokenize(line);
        let t: Vec<&str> = tokens.iter().map(String::as_str).collect();
        let bad = || Error::SolutionParse(format!("unsupported bound line: {line}"));
        match t.as_slice() {
            [name, free] if free.eq_ignore_ascii_case("free") => {
                let v = pending.touch(name);
                v.lower = f64::NEG_INFINITY;
                v.upper = f64::INFINITY;
            }
            [lo, "<=", name, "<=", hi] => {
                let (lo, hi) = (parse_number(lo)?, parse_number(hi)?);
                let v = pending.touch(name);
                v.lower = lo;
                v.upper = hi;
            }
            [name, op, value] => {
                let x = parse_number(value)?;
                let v = pending.touch(name);
                match *op {
                    "=" => {
                        v.lower = x;
                        v.upper = x;
                    }
                    "<=" => v.upper = x,
                    ">=" => v.lower = x,
                    _ => return Err(bad()),
                }
            }
            _ => return Err(bad()),
        }
    }
    for name in &generals {
        pending.touch(name).kind = VarKind::Integer;
    }
    for name in &binaries {
        let v = pending.touch(name);
        v.kind = VarKind::Binary;
        v.lower = v.lower.max(0.0);
        v.upper = v.upper.min(1.0);
    }

    let mut model = MilpModel::new(title, sense);
    for name in &pending.order {
        let (role, index) = parse_var_name(name)
            .ok_or_else(|| Error::SolutionParse(format!("unknown variable name {name}")))?;
        let v = &pending.by_name[name];
        model.add_var(role, &index, v.kind, v.lower, v.upper)?;
    }
    let id = |name: &str| model.lookup(name).expect("declared above");
    let objective: Vec<(VarId, f64)> = objective_terms.iter().map(|(n, a)| (id(n), *a)).collect();
    let rows: Vec<Constraint> = rows
        .into_iter()
        .map(|(name, terms, cmp, rhs)| Constraint {
            name,
            terms: terms.iter().map(|(n, a)| (id(n), *a)).collect(),
            cmp,
            rhs,
        })
        .collect();
    for row in rows {
        model.add_constraint(row)?;
    }
    model.set_objective(sense, objective);
    Ok(model)
}

/// Start values as `name value` lines, one per variable.
pub fn write_start_values(model: &MilpModel, values: &[f64]) -> Result<String> {
    if values.len() != model.vars().len() {
        return Err(Error::Dimension {
            what: "start values",
            expected: model.vars().len(),
            actual: values.len(),
        });
    }
    let mut out = String::new();
    for (v, x) in model.vars().iter().zip(values) {
        let _ = writeln!(out, "{} {}", v.name, number(*x));
    }
    Ok(out)
}

/// Parse `name value` lines against `model`.
pub fn parse_name_values(model: &MilpModel, text: &str) -> Result<Vec<Option<f64>>> {
    let mut values = vec![None; model.vars().len()];
    for (n, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(name) = parts.next() else { continue };
        let value = parts
            .next()
            .ok_or_else(|| Error::SolutionParse(format!("line {}: missing value", n + 1)))?;
        let id = model
            .lookup(name)
            .ok_or_else(|| Error::SolutionParse(format!("line {}: unknown variable {name}", n + 1)))?;
        let x: f64 = value
            .parse()
            .map_err(|_| Error::SolutionParse(format!("line {}: bad number {value}", n + 1)))?;
        values[id.0] = Some(x);
    }
    Ok(values)
}
