//! Line-oriented text grammar for models, policies, valuations and masks.
//!
//! ```text
//! pmdp <name>
//! param <id> ...
//! group <id> <id> ...
//! action <id> ...
//! state <id> [reward <num>] [label k=v,...]
//! init <id>
//! trans <state> <action> : <expr> -> <state> [+ <expr> -> <state> ...]
//! ```
//!
//! Expressions are sums and differences of `num`, `param` and
//! `num*param`. Numbers are decimal (`0.8`) or rational (`4/5`) literals;
//! both parse to exact rationals. `#` starts a comment, declarations must
//! precede use.
//!
//! Policy files open with `policy <id>` followed by `param=value` lines,
//! scoped shorthand lines (`s1: p2=0, p3=1`, entries get the `s1.` prefix)
//! and optional `allow <labels> : <actions>` mask rules. Valuation files
//! are the assignment lines alone, mask files the `allow` lines alone.

use std::fmt;
use std::fmt::Write as _;

use num::{BigInt, Zero};
use thiserror::Error;

use crate::model::{
    AvailabilityMask, LinExpr, MaskRule, ParamId, Pmdp, PmdpBuilder, Policy, Rational, Valuation,
    ViolationKind,
};

/// 1-based position of an error in the input text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceLocation {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    DuplicateDeclaration,
    UnknownSymbol,
    Range,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{location}: {message}")]
pub struct ParseError {
    pub location: SourceLocation,
    pub kind: ParseErrorKind,
    pub message: String,
}

impl ParseError {
    fn new(location: SourceLocation, kind: ParseErrorKind, message: impl Into<String>) -> Self {
        ParseError {
            location,
            kind,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokKind {
    Ident,
    Number,
    Colon,
    Arrow,
    Plus,
    Minus,
    Star,
    Equals,
    Comma,
}

#[derive(Debug, Clone, Copy)]
struct Tok<'a> {
    kind: TokKind,
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Tok<'_>>, ParseError> {
    let line = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut toks = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let column = i + 1;
        let loc = SourceLocation {
            line: lineno,
            column,
        };
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric()
                    || bytes[i] == b'_'
                    || bytes[i] == b'.')
            {
                i += 1;
            }
            toks.push(Tok {
                kind: TokKind::Ident,
                text: &line[start..i],
                column,
            });
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'.' || bytes[i] == b'/') {
                let sep = i;
                i += 1;
                let frac_start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                if i == frac_start {
                    return Err(ParseError::new(
                        SourceLocation {
                            line: lineno,
                            column: sep + 1,
                        },
                        ParseErrorKind::Syntax,
                        "digits expected after the number separator",
                    ));
                }
            }
            toks.push(Tok {
                kind: TokKind::Number,
                text: &line[start..i],
                column,
            });
        } else {
            let (kind, len) = match c {
                ':' => (TokKind::Colon, 1),
                '+' => (TokKind::Plus, 1),
                '*' => (TokKind::Star, 1),
                '=' => (TokKind::Equals, 1),
                ',' => (TokKind::Comma, 1),
                '-' if bytes.get(i + 1) == Some(&b'>') => (TokKind::Arrow, 2),
                '-' => (TokKind::Minus, 1),
                other => {
                    return Err(ParseError::new(
                        loc,
                        ParseErrorKind::Syntax,
                        format!("unexpected character `{other}`"),
                    ))
                }
            };
            toks.push(Tok {
                kind,
                text: &line[i..i + len],
                column,
            });
            i += len;
        }
    }
    Ok(toks)
}

fn parse_number(tok: &Tok<'_>, lineno: usize) -> Result<Rational, ParseError> {
    let loc = SourceLocation {
        line: lineno,
        column: tok.column,
    };
    let bad = || ParseError::new(loc, ParseErrorKind::Syntax, "malformed number");
    if let Some((n, d)) = tok.text.split_once('/') {
        let n: BigInt = n.parse().map_err(|_| bad())?;
        let d: BigInt = d.parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(ParseError::new(
                loc,
                ParseErrorKind::Range,
                "zero denominator",
            ));
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((int, frac)) = tok.text.split_once('.') {
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let int: BigInt = int.parse().map_err(|_| bad())?;
        let frac: BigInt = frac.parse().map_err(|_| bad())?;
        return Ok(Rational::new(int * &scale + frac, scale));
    }
    let n: BigInt = tok.text.parse().map_err(|_| bad())?;
    Ok(Rational::from(n))
}

struct Cursor<'a> {
    toks: &'a [Tok<'a>],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(toks: &'a [Tok<'a>], line: usize) -> Self {
        Cursor { toks, pos: 0, line }
    }

    fn peek(&self) -> Option<&Tok<'a>> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<&Tok<'a>> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn loc_here(&self) -> SourceLocation {
        let column = self
            .toks
            .get(self.pos)
            .map(|t| t.column)
            .or_else(|| self.toks.last().map(|t| t.column + t.text.len()))
            .unwrap_or(1);
        SourceLocation {
            line: self.line,
            column,
        }
    }

    fn err(&self, kind: ParseErrorKind, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.loc_here(), kind, msg)
    }

    fn expect(&mut self, kind: TokKind, what: &str) -> Result<Tok<'a>, ParseError> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                let t = *t;
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.err(ParseErrorKind::Syntax, format!("expected {what}"))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<&'a str, ParseError> {
        Ok(self.expect(TokKind::Ident, what)?.text)
    }

    fn expect_number(&mut self) -> Result<Rational, ParseError> {
        let t = self.expect(TokKind::Number, "a number")?;
        parse_number(&t, self.line)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err(ParseErrorKind::Syntax, "trailing input"))
        }
    }
}

/// One summand of an expression: `num`, `param` or `num*param`.
fn parse_term(
    c: &mut Cursor<'_>,
    known_param: &dyn Fn(&str) -> bool,
) -> Result<LinExpr, ParseError> {
    match c.peek().copied() {
        Some(t) if t.kind == TokKind::Number => {
            c.pos += 1;
            let value = parse_number(&t, c.line)?;
            if c.peek().map(|t| t.kind) == Some(TokKind::Star) {
                c.pos += 1;
                let p = c.expect_ident("a parameter after `*`")?;
                if !known_param(p) {
                    return Err(ParseError::new(
                        SourceLocation {
                            line: c.line,
                            column: c.toks[c.pos - 1].column,
                        },
                        ParseErrorKind::UnknownSymbol,
                        format!("unknown parameter `{p}`"),
                    ));
                }
                Ok(LinExpr::term(value, ParamId::new(p).unwrap()))
            } else {
                Ok(LinExpr::constant(value))
            }
        }
        Some(t) if t.kind == TokKind::Ident => {
            c.pos += 1;
            if !known_param(t.text) {
                return Err(ParseError::new(
                    SourceLocation {
                        line: c.line,
                        column: t.column,
                    },
                    ParseErrorKind::UnknownSymbol,
                    format!("unknown parameter `{}`", t.text),
                ));
            }
            Ok(LinExpr::param(ParamId::new(t.text).unwrap()))
        }
        _ => Err(c.err(ParseErrorKind::Syntax, "expected a number or parameter")),
    }
}

/// Sums signed terms until `->` or end of line.
fn parse_expr(
    c: &mut Cursor<'_>,
    known_param: &dyn Fn(&str) -> bool,
) -> Result<LinExpr, ParseError> {
    let mut expr = parse_term(c, known_param)?;
    loop {
        match c.peek().map(|t| t.kind) {
            Some(TokKind::Plus) => {
                c.pos += 1;
                expr = expr.add(&parse_term(c, known_param)?);
            }
            Some(TokKind::Minus) => {
                c.pos += 1;
                expr = expr.sub(&parse_term(c, known_param)?);
            }
            _ => return Ok(expr),
        }
    }
}

fn label_value(c: &mut Cursor<'_>) -> Result<String, ParseError> {
    match c.next() {
        Some(t) if t.kind == TokKind::Ident || t.kind == TokKind::Number => Ok(t.text.to_string()),
        _ => Err(c.err(ParseErrorKind::Syntax, "expected a label value")),
    }
}

/// Parses `k=v[,k=v...]`, stopping before `stop`.
fn parse_label_pairs(
    c: &mut Cursor<'_>,
    stop: Option<TokKind>,
) -> Result<Vec<(String, String)>, ParseError> {
    let mut pairs = Vec::new();
    loop {
        let key = c.expect_ident("a label key")?.to_string();
        c.expect(TokKind::Equals, "`=`")?;
        let value = label_value(c)?;
        pairs.push((key, value));
        match c.peek().map(|t| t.kind) {
            Some(TokKind::Comma) => {
                c.pos += 1;
            }
            k if k == stop || k.is_none() => return Ok(pairs),
            _ => return Err(c.err(ParseErrorKind::Syntax, "expected `,`")),
        }
    }
}

/// Parses one bare expression, e.g. `1 - e1` or `0.4`. `known` answers
/// whether an identifier is a declared parameter.
pub(crate) fn parse_expr_str(
    text: &str,
    known: &dyn Fn(&str) -> bool,
) -> Result<LinExpr, ParseError> {
    let toks = tokenize(text, 1)?;
    let mut c = Cursor::new(&toks, 1);
    let expr = parse_expr(&mut c, known)?;
    c.expect_end()?;
    Ok(expr)
}

/// Parses a model file. The returned model is fully validated: any
/// structural violation is mapped back to the line that introduced it.
pub fn parse_model(text: &str) -> Result<Pmdp, ParseError> {
    let mut builder: Option<PmdpBuilder> = None;
    let mut params: Vec<String> = Vec::new();
    let mut states: Vec<String> = Vec::new();
    let mut state_lines: std::collections::BTreeMap<String, usize> = Default::default();
    let mut actions: Vec<String> = Vec::new();
    let mut grouped: Vec<String> = Vec::new();
    let mut entry_lines: std::collections::BTreeMap<(String, String), usize> = Default::default();
    let mut saw_init = false;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let toks = tokenize(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut c = Cursor::new(&toks, lineno);
        let keyword = c.expect_ident("a statement keyword")?;
        if builder.is_none() {
            if keyword != "pmdp" {
                return Err(c.err(ParseErrorKind::Syntax, "expected `pmdp <name>` first"));
            }
            let name = c.expect_ident("a model name")?;
            c.expect_end()?;
            builder = Some(PmdpBuilder::new(name));
            continue;
        }
        let b = builder.as_mut().unwrap();
        match keyword {
            "pmdp" => {
                return Err(c.err(
                    ParseErrorKind::DuplicateDeclaration,
                    "only one `pmdp` header per file",
                ))
            }
            "param" => {
                while !c.at_end() {
                    let col = c.loc_here();
                    let name = c.expect_ident("a parameter name")?;
                    b.param(name).map_err(|e| {
                        ParseError::new(col, ParseErrorKind::DuplicateDeclaration, e.to_string())
                    })?;
                    params.push(name.to_string());
                }
                if params.is_empty() {
                    return Err(c.err(ParseErrorKind::Syntax, "empty `param` line"));
                }
            }
            "group" => {
                let mut members = Vec::new();
                while !c.at_end() {
                    let col = c.loc_here();
                    let name = c.expect_ident("a group member")?;
                    if !params.contains(&name.to_string()) {
                        return Err(ParseError::new(
                            col,
                            ParseErrorKind::UnknownSymbol,
                            format!("unknown parameter `{name}`"),
                        ));
                    }
                    if grouped.contains(&name.to_string()) {
                        return Err(ParseError::new(
                            col,
                            ParseErrorKind::DuplicateDeclaration,
                            format!("parameter `{name}` is already grouped"),
                        ));
                    }
                    grouped.push(name.to_string());
                    members.push(ParamId::new(name).unwrap());
                }
                b.group(members)
                    .map_err(|e| c.err(ParseErrorKind::Syntax, e.to_string()))?;
            }
            "action" => {
                while !c.at_end() {
                    let name = c.expect_ident("an action name")?;
                    b.action(name)
                        .map_err(|e| c.err(ParseErrorKind::Syntax, e.to_string()))?;
                    actions.push(name.to_string());
                }
            }
            "state" => {
                let col = c.loc_here();
                let name = c.expect_ident("a state name")?.to_string();
                let mut reward = Rational::zero();
                let mut labels = std::collections::BTreeMap::new();
                while let Some(t) = c.peek() {
                    match t.text {
                        "reward" => {
                            c.pos += 1;
                            reward = c.expect_number()?;
                        }
                        "label" => {
                            c.pos += 1;
                            for (k, v) in parse_label_pairs(&mut c, None)? {
                                labels.insert(k, v);
                            }
                        }
                        _ => {
                            return Err(
                                c.err(ParseErrorKind::Syntax, "expected `reward` or `label`")
                            )
                        }
                    }
                }
                b.state_with(&name, reward, labels).map_err(|e| {
                    ParseError::new(col, ParseErrorKind::DuplicateDeclaration, e.to_string())
                })?;
                state_lines.insert(name.clone(), lineno);
                states.push(name);
            }
            "init" => {
                let col = c.loc_here();
                let name = c.expect_ident("a state name")?;
                c.expect_end()?;
                if !states.contains(&name.to_string()) {
                    return Err(ParseError::new(
                        col,
                        ParseErrorKind::UnknownSymbol,
                        format!("unknown state `{name}`"),
                    ));
                }
                if saw_init {
                    return Err(c.err(ParseErrorKind::DuplicateDeclaration, "`init` given twice"));
                }
                saw_init = true;
                b.initial(name);
            }
            "trans" => {
                let scol = c.loc_here();
                let state = c.expect_ident("a source state")?.to_string();
                if !states.contains(&state) {
                    return Err(ParseError::new(
                        scol,
                        ParseErrorKind::UnknownSymbol,
                        format!("unknown state `{state}`"),
                    ));
                }
                let acol = c.loc_here();
                let action = c.expect_ident("an action")?.to_string();
                if !actions.contains(&action) {
                    return Err(ParseError::new(
                        acol,
                        ParseErrorKind::UnknownSymbol,
                        format!("unknown action `{action}`"),
                    ));
                }
                c.expect(TokKind::Colon, "`:`")?;
                let known = |p: &str| params.iter().any(|q| q == p);
                let mut branches = Vec::new();
                loop {
                    let expr = parse_expr(&mut c, &known)?;
                    c.expect(TokKind::Arrow, "`->`")?;
                    let tcol = c.loc_here();
                    let target = c.expect_ident("a target state")?.to_string();
                    if !states.contains(&target) {
                        return Err(ParseError::new(
                            tcol,
                            ParseErrorKind::UnknownSymbol,
                            format!("unknown state `{target}`"),
                        ));
                    }
                    branches.push((expr, target));
                    match c.peek().map(|t| t.kind) {
                        Some(TokKind::Plus) => {
                            c.pos += 1;
                        }
                        None => break,
                        _ => return Err(c.err(ParseErrorKind::Syntax, "expected `+` or end")),
                    }
                }
                let key = (state.clone(), action.clone());
                if entry_lines.insert(key, lineno).is_some() {
                    return Err(ParseError::new(
                        scol,
                        ParseErrorKind::DuplicateDeclaration,
                        format!("distribution for `{state}`/`{action}` given twice"),
                    ));
                }
                b.transition(&state, &action, branches);
            }
            other => {
                return Err(c.err(
                    ParseErrorKind::Syntax,
                    format!("unknown statement `{other}`"),
                ))
            }
        }
    }

    let Some(builder) = builder else {
        return Err(ParseError::new(
            SourceLocation { line: 1, column: 1 },
            ParseErrorKind::Syntax,
            "empty input, expected `pmdp <name>`",
        ));
    };
    let total_lines = text.lines().count().max(1);
    let m = builder.build().map_err(|e| {
        ParseError::new(
            SourceLocation {
                line: total_lines,
                column: 1,
            },
            match e {
                crate::model::ModelError::ZeroBranch => ParseErrorKind::Range,
                crate::model::ModelError::NoInitial | crate::model::ModelError::NoStates => {
                    ParseErrorKind::Syntax
                }
                crate::model::ModelError::DuplicateTarget(_) => {
                    ParseErrorKind::DuplicateDeclaration
                }
                _ => ParseErrorKind::Syntax,
            },
            e.to_string(),
        )
    })?;
    for v in m.validate() {
        let line = match (&v.state, &v.action) {
            (Some(s), Some(a)) => entry_lines
                .get(&(s.clone(), a.clone()))
                .copied()
                .unwrap_or(total_lines),
            (Some(s), None) => state_lines.get(s).copied().unwrap_or(total_lines),
            _ => total_lines,
        };
        let kind = match v.kind {
            ViolationKind::NoEnabledAction => ParseErrorKind::Syntax,
            ViolationKind::BadDistribution | ViolationKind::BranchOutOfRange => {
                ParseErrorKind::Range
            }
        };
        return Err(ParseError::new(
            SourceLocation { line, column: 1 },
            kind,
            v.to_string(),
        ));
    }
    Ok(m)
}

/// Canonical text for a model. Parsing the output reproduces the model
/// exactly, including state, parameter and branch order; rationals are
/// written as `n/d`, never rounded to decimals.
pub fn serialize_model(m: &Pmdp) -> String {
    use crate::model::rational_str;
    let mut out = String::new();
    let _ = writeln!(out, "pmdp {}", m.name());
    if !m.params().is_empty() {
        let names: Vec<&str> = m.params().iter().map(|p| p.as_str()).collect();
        let _ = writeln!(out, "param {}", names.join(" "));
    }
    for g in m.groups() {
        let names: Vec<&str> = g.members().iter().map(|p| p.as_str()).collect();
        let _ = writeln!(out, "group {}", names.join(" "));
    }
    if !m.actions().is_empty() {
        let names: Vec<&str> = m.actions().iter().map(|a| a.as_str()).collect();
        let _ = writeln!(out, "action {}", names.join(" "));
    }
    for info in m.states() {
        let _ = write!(out, "state {}", info.name);
        if !info.reward.is_zero() {
            let _ = write!(out, " reward {}", rational_str(&info.reward));
        }
        if !info.labels.is_empty() {
            let pairs: Vec<String> = info
                .labels
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            let _ = write!(out, " label {}", pairs.join(","));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "init {}", m.state(m.initial()).name);
    for (s, a, branches) in m.entries() {
        let rendered: Vec<String> = branches
            .iter()
            .map(|b| format!("{} -> {}", b.expr, m.state(b.target).name))
            .collect();
        let _ = writeln!(
            out,
            "trans {} {} : {}",
            m.state(s).name,
            a,
            rendered.join(" + ")
        );
    }
    out
}

/// `allow` lines for a standalone mask file.
pub fn serialize_mask(mask: &AvailabilityMask) -> String {
    let mut out = String::new();
    for rule in &mask.rules {
        let preds: Vec<String> = rule
            .predicate
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let actions: Vec<&str> = rule.allowed.iter().map(|a| a.as_str()).collect();
        let _ = writeln!(out, "allow {} : {}", preds.join(","), actions.join(" "));
    }
    out
}

struct PolicyDraft {
    id: String,
    valuation: Valuation,
    rules: Vec<MaskRule>,
    assignment_lines: std::collections::BTreeMap<ParamId, usize>,
}

impl PolicyDraft {
    fn new(id: String) -> Self {
        PolicyDraft {
            id,
            valuation: Valuation::new(),
            rules: Vec::new(),
            assignment_lines: Default::default(),
        }
    }

    fn finish(self, m: &Pmdp) -> Result<Policy, ParseError> {
        check_group_sums(&self.valuation, m, &self.assignment_lines)?;
        Ok(Policy {
            id: self.id,
            valuation: self.valuation,
            mask: if self.rules.is_empty() {
                None
            } else {
                Some(AvailabilityMask { rules: self.rules })
            },
        })
    }
}

fn check_group_sums(
    v: &Valuation,
    m: &Pmdp,
    lines: &std::collections::BTreeMap<ParamId, usize>,
) -> Result<(), ParseError> {
    if let Err(e) = v.check_groups(m.groups()) {
        let line = match &e {
            crate::model::ModelError::GroupSum { group, .. } => group
                .split(", ")
                .filter_map(|name| lines.get(&ParamId::new(name).unwrap()))
                .max()
                .copied()
                .unwrap_or(1),
            _ => 1,
        };
        return Err(ParseError::new(
            SourceLocation { line, column: 1 },
            ParseErrorKind::Range,
            e.to_string(),
        ));
    }
    Ok(())
}

fn parse_assignment_into(
    c: &mut Cursor<'_>,
    m: &Pmdp,
    scope: Option<&str>,
    lineno: usize,
    draft: &mut PolicyDraft,
) -> Result<(), ParseError> {
    loop {
        let col = c.loc_here();
        let name = c.expect_ident("a parameter name")?;
        let full = match scope {
            Some(s) => format!("{s}.{name}"),
            None => name.to_string(),
        };
        let p = ParamId::new(full.as_str())
            .map_err(|e| ParseError::new(col, ParseErrorKind::Syntax, e.to_string()))?;
        if !m.param_set().contains(&p) {
            return Err(ParseError::new(
                col,
                ParseErrorKind::UnknownSymbol,
                format!("unknown parameter `{full}`"),
            ));
        }
        c.expect(TokKind::Equals, "`=`")?;
        let vcol = c.loc_here();
        let value = c.expect_number()?;
        if draft.valuation.contains(&p) {
            return Err(ParseError::new(
                col,
                ParseErrorKind::DuplicateDeclaration,
                format!("parameter `{full}` assigned twice"),
            ));
        }
        draft
            .valuation
            .insert(p.clone(), value)
            .map_err(|e| ParseError::new(vcol, ParseErrorKind::Range, e.to_string()))?;
        draft.assignment_lines.insert(p, lineno);
        match c.peek().map(|t| t.kind) {
            Some(TokKind::Comma) => {
                c.pos += 1;
            }
            None => return Ok(()),
            _ => return Err(c.err(ParseErrorKind::Syntax, "expected `,` or end")),
        }
    }
}

fn parse_allow_rule(c: &mut Cursor<'_>, m: &Pmdp) -> Result<MaskRule, ParseError> {
    let predicate = parse_label_pairs(c, Some(TokKind::Colon))?;
    c.expect(TokKind::Colon, "`:`")?;
    let mut allowed = std::collections::BTreeSet::new();
    while !c.at_end() {
        let col = c.loc_here();
        let name = c.expect_ident("an action name")?;
        let a = crate::model::ActionId::new(name)
            .map_err(|e| ParseError::new(col, ParseErrorKind::Syntax, e.to_string()))?;
        if !m.actions().contains(&a) && name != crate::model::STUTTER_ACTION {
            return Err(ParseError::new(
                col,
                ParseErrorKind::UnknownSymbol,
                format!("unknown action `{name}`"),
            ));
        }
        allowed.insert(a);
    }
    Ok(MaskRule { predicate, allowed })
}

enum PolicyLine {
    Header(String),
    Body,
}

fn parse_policy_line(
    toks: &[Tok<'_>],
    lineno: usize,
    m: &Pmdp,
    draft: Option<&mut PolicyDraft>,
) -> Result<PolicyLine, ParseError> {
    let mut c = Cursor::new(toks, lineno);
    let first = *c.peek().expect("nonempty line");
    if first.kind == TokKind::Ident && first.text == "policy" {
        c.pos += 1;
        let id = c.expect_ident("a policy id")?.to_string();
        c.expect_end()?;
        return Ok(PolicyLine::Header(id));
    }
    let Some(draft) = draft else {
        return Err(ParseError::new(
            SourceLocation {
                line: lineno,
                column: first.column,
            },
            ParseErrorKind::Syntax,
            "expected `policy <id>` before assignments",
        ));
    };
    if first.kind == TokKind::Ident && first.text == "allow" {
        c.pos += 1;
        draft.rules.push(parse_allow_rule(&mut c, m)?);
        return Ok(PolicyLine::Body);
    }
    // scoped shorthand: `<scope> : p = v, ...`
    if toks.get(1).map(|t| t.kind) == Some(TokKind::Colon) {
        let scope = c.expect_ident("a scope")?.to_string();
        c.expect(TokKind::Colon, "`:`")?;
        parse_assignment_into(&mut c, m, Some(&scope), lineno, draft)?;
        return Ok(PolicyLine::Body);
    }
    parse_assignment_into(&mut c, m, None, lineno, draft)?;
    Ok(PolicyLine::Body)
}

/// Parses a single-policy file against the model it targets.
pub fn parse_policy(text: &str, m: &Pmdp) -> Result<Policy, ParseError> {
    let mut policies = parse_policies(text, m)?;
    match policies.len() {
        1 => Ok(policies.pop().unwrap()),
        n => Err(ParseError::new(
            SourceLocation { line: 1, column: 1 },
            ParseErrorKind::Syntax,
            format!("expected exactly one policy, found {n}"),
        )),
    }
}

/// Parses a candidate file: a sequence of `policy` blocks.
pub fn parse_policies(text: &str, m: &Pmdp) -> Result<Vec<Policy>, ParseError> {
    let mut out: Vec<Policy> = Vec::new();
    let mut draft: Option<PolicyDraft> = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let toks = tokenize(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        match parse_policy_line(&toks, lineno, m, draft.as_mut())? {
            PolicyLine::Header(id) => {
                if let Some(done) = draft.take() {
                    out.push(done.finish(m)?);
                }
                if out.iter().any(|p| p.id == id) {
                    return Err(ParseError::new(
                        SourceLocation {
                            line: lineno,
                            column: 1,
                        },
                        ParseErrorKind::DuplicateDeclaration,
                        format!("policy `{id}` declared twice"),
                    ));
                }
                draft = Some(PolicyDraft::new(id));
            }
            PolicyLine::Body => {}
        }
    }
    let Some(done) = draft.take() else {
        return Err(ParseError::new(
            SourceLocation { line: 1, column: 1 },
            ParseErrorKind::Syntax,
            "no `policy` block found",
        ));
    };
    out.push(done.finish(m)?);
    Ok(out)
}

/// Parses a standalone number literal: `0.1`, `1/10` or `3`.
pub fn parse_rational(text: &str) -> Result<Rational, ParseError> {
    let toks = tokenize(text, 1)?;
    let mut c = Cursor::new(&toks, 1);
    let value = c.expect_number()?;
    c.expect_end()?;
    Ok(value)
}

/// Parses a weight file: assignment lines like a valuation, but weights are
/// independent, so parameter groups need not sum to 1.
pub fn parse_weights(text: &str, m: &Pmdp) -> Result<Valuation, ParseError> {
    let mut draft = PolicyDraft::new(String::new());
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let toks = tokenize(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut c = Cursor::new(&toks, lineno);
        if toks.get(1).map(|t| t.kind) == Some(TokKind::Colon) {
            let scope = c.expect_ident("a scope")?.to_string();
            c.expect(TokKind::Colon, "`:`")?;
            parse_assignment_into(&mut c, m, Some(&scope), lineno, &mut draft)?;
        } else {
            parse_assignment_into(&mut c, m, None, lineno, &mut draft)?;
        }
    }
    Ok(draft.valuation)
}

/// Parses a bare valuation file: assignment lines only, checked against the
/// model's parameters and groups.
pub fn parse_valuation(text: &str, m: &Pmdp) -> Result<Valuation, ParseError> {
    let mut draft = PolicyDraft::new(String::new());
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let toks = tokenize(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut c = Cursor::new(&toks, lineno);
        if toks.get(1).map(|t| t.kind) == Some(TokKind::Colon) {
            let scope = c.expect_ident("a scope")?.to_string();
            c.expect(TokKind::Colon, "`:`")?;
            parse_assignment_into(&mut c, m, Some(&scope), lineno, &mut draft)?;
        } else {
            parse_assignment_into(&mut c, m, None, lineno, &mut draft)?;
        }
    }
    check_group_sums(&draft.valuation, m, &draft.assignment_lines)?;
    Ok(draft.valuation)
}


/// Parses a standalone mask file of `allow` lines. An empty file is the
/// empty mask.
pub fn parse_mask(text: &str, m: &Pmdp) -> Result<AvailabilityMask, ParseError> {
    let mut rules = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let toks = tokenize(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut c = Cursor::new(&toks, lineno);
        let kw = c.expect_ident("`allow`")?;
        if kw != "allow" {
            return Err(c.err(ParseErrorKind::Syntax, "expected an `allow` rule"));
        }
        rules.push(parse_allow_rule(&mut c, m)?);
    }
    Ok(AvailabilityMask { rules })
}
