use crate::kb::EntityId;

use super::{
    AggFn, CompareOp, Condition, Descriptor, Domain, EqlError, Literal, Operand, Path, Processor, Query, Result, Step,
    VarDecl,
};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Dec(f64),
    Str(String),
    Iri(String),
    Entity(u64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Colon,
    Op(CompareOp),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => i.to_string(),
            Tok::Dec(d) => format!("{d:?}"),
            Tok::Str(s) => format!("{s:?}"),
            Tok::Iri(s) => format!("<{s}>"),
            Tok::Entity(n) => format!("@{n}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Op(op) => format!("`{}`", op.symbol()),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn syntax(position: usize, expected: &str, found: &str) -> EqlError {
    EqlError::Syntax { position, expected: expected.into(), found: found.into() }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
            b'[' => out.push((Tok::LBracket, start)),
            b']' => out.push((Tok::RBracket, start)),
            b',' => out.push((Tok::Comma, start)),
            b'.' => out.push((Tok::Dot, start)),
            b':' => out.push((Tok::Colon, start)),
            b'=' | b'!' | b'<' | b'>' => {
                let next = bytes.get(i + 1).copied();
                let op = match (c, next) {
                    (b'=', Some(b'=')) => Some((CompareOp::Eq, 2)),
                    (b'!', Some(b'=')) => Some((CompareOp::Ne, 2)),
                    (b'<', Some(b'=')) => Some((CompareOp::Le, 2)),
                    (b'>', Some(b'=')) => Some((CompareOp::Ge, 2)),
                    (b'>', _) => Some((CompareOp::Gt, 1)),
                    (b'<', _) => None,
                    _ => return Err(syntax(start, "a comparison operator", &(c as char).to_string())),
                };
                match op {
                    Some((op, len)) => {
                        out.push((Tok::Op(op), start));
                        i += len;
                    }
                    None => {
                        // `<` starts an IRI when a closing `>` follows before whitespace
                        let rest = &text[i + 1..];
                        let end = rest.find(|ch: char| ch == '>' || ch.is_whitespace() || ch == ',' || ch == ')');
                        match end {
                            Some(e) if rest[e..].starts_with('>') && e > 0 => {
                                out.push((Tok::Iri(rest[..e].to_string()), start));
                                i += e + 2;
                            }
                            _ => {
                                out.push((Tok::Op(CompareOp::Lt), start));
                                i += 1;
                            }
                        }
                    }
                }
                continue;
            }
            b'"' => {
                let mut s = String::new();
                let mut chars = text[i + 1..].char_indices();
                loop {
                    match chars.next() {
                        None => return Err(syntax(text.len(), "closing `\"`", "end of input")),
                        Some((off, '"')) => {
                            i += off + 2;
                            break;
                        }
                        Some((off, '\\')) => match chars.next() {
                            Some((_, 'n')) => s.push('\n'),
                            Some((_, 't')) => s.push('\t'),
                            Some((_, 'r')) => s.push('\r'),
                            Some((_, '"')) => s.push('"'),
                            Some((_, '\\')) => s.push('\\'),
                            _ => return Err(syntax(i + 1 + off, "an escape sequence", "`\\`")),
                        },
                        Some((_, ch)) => s.push(ch),
                    }
                }
                out.push((Tok::Str(s), start));
                continue;
            }
            b'@' => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let n = text[i + 1..j].parse().map_err(|_| syntax(start, "an entity id after `@`", "`@`"))?;
                out.push((Tok::Entity(n), start));
                i = j;
                continue;
            }
            b'-' | b'0'..=b'9' => {
                let mut j = i + 1;
                if c == b'-' && !bytes.get(j).is_some_and(u8::is_ascii_digit) {
                    return Err(syntax(start, "a number", "`-`"));
                }
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let mut decimal = false;
                if j + 1 < bytes.len() && bytes[j] == b'.' && bytes[j + 1].is_ascii_digit() {
                    decimal = true;
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        decimal = true;
                        j = k;
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let s = &text[i..j];
                let tok = if decimal {
                    Tok::Dec(s.parse().map_err(|_| syntax(start, "a decimal", s))?)
                } else {
                    Tok::Int(s.parse().map_err(|_| syntax(start, "a 64-bit integer", s))?)
                };
                out.push((tok, start));
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i + 1;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Tok::Ident(text[i..j].to_string()), start));
                i = j;
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(syntax(start, "a token", &ch.to_string()));
            }
        }
        i += 1;
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

/// Lexes the longest valid token prefix; trailing text that is not EQL ends the stream.
fn lex_prefix(text: &str) -> Vec<(Tok, usize)> {
    match lex(text) {
        Ok(toks) => toks,
        Err(EqlError::Syntax { position, .. }) => {
            let mut toks = lex(&text[..position]).unwrap_or_default();
            toks.pop();
            toks.push((Tok::Eof, position));
            toks
        }
        Err(_) => vec![(Tok::Eof, 0)],
    }
}

const RESERVED: [&str; 3] = ["true", "false", "in"];

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    scope: Vec<String>,
    implicit_root: Option<String>,
}

impl Parser {
    fn new(toks: Vec<(Tok, usize)>, implicit_root: Option<&str>) -> Self {
        Parser {
            toks,
            pos: 0,
            scope: implicit_root.map(|r| vec![r.to_string()]).unwrap_or_default(),
            implicit_root: implicit_root.map(str::to_string),
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> EqlError {
        syntax(self.offset(), expected, &self.peek().describe())
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(expected)),
        }
    }

    fn query(&mut self) -> Result<Query> {
        let proc_name = self.ident("a result processor (a, an, the, count, sum)")?;
        let processor_kind = match proc_name.as_str() {
            "a" | "an" | "the" | "count" | "sum" => proc_name.clone(),
            _ => {
                self.pos -= 1;
                return Err(self.error("a result processor (a, an, the, count, sum)"));
            }
        };
        self.expect(Tok::LParen, "`(`")?;
        let descriptor = match self.ident("`entity` or `set_of`")?.as_str() {
            "entity" => {
                self.expect(Tok::LParen, "`(`")?;
                let v = self.var_decl()?;
                self.expect(Tok::RParen, "`)`")?;
                Descriptor::Entity(v)
            }
            "set_of" => {
                self.expect(Tok::LParen, "`(`")?;
                let mut vars = vec![self.var_decl()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    vars.push(self.var_decl()?);
                }
                self.expect(Tok::RParen, "`)`")?;
                Descriptor::SetOf(vars)
            }
            _ => {
                self.pos -= 1;
                return Err(self.error("`entity` or `set_of`"));
            }
        };
        let mut conditions = Vec::new();
        if *self.peek() == Tok::Dot {
            self.bump();
            match self.ident("`where`")?.as_str() {
                "where" => {}
                _ => {
                    self.pos -= 1;
                    return Err(self.error("`where`"));
                }
            }
            self.expect(Tok::LParen, "`(`")?;
            if *self.peek() != Tok::RParen {
                conditions.push(self.condition()?);
                while *self.peek() == Tok::Comma {
                    self.bump();
                    conditions.push(self.condition()?);
                }
            }
            self.expect(Tok::RParen, "`,` or `)`")?;
        }
        let processor = match processor_kind.as_str() {
            "a" => Processor::A,
            "an" => Processor::An,
            "the" => Processor::The,
            "count" => Processor::Count,
            _ => {
                self.expect(Tok::Comma, "`,` followed by the summed path")?;
                Processor::Sum(self.path()?)
            }
        };
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::Eof, "end of input")?;
        Ok(query_of(processor, descriptor, conditions))
    }

    fn var_decl(&mut self) -> Result<VarDecl> {
        let at = self.offset();
        let name = self.ident("a variable name")?;
        if RESERVED.contains(&name.as_str()) {
            return Err(syntax(at, "a variable name", &format!("`{name}`")));
        }
        let mut class = None;
        let mut domain = None;
        if *self.peek() == Tok::Colon {
            self.bump();
            class = Some(self.ident("a class name")?);
        }
        if matches!(self.peek(), Tok::Ident(s) if s == "in") {
            self.bump();
            if *self.peek() == Tok::LBracket {
                self.bump();
                let mut values = Vec::new();
                if *self.peek() != Tok::RBracket {
                    values.push(self.literal()?);
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        values.push(self.literal()?);
                    }
                }
                self.expect(Tok::RBracket, "`,` or `]`")?;
                domain = Some(Domain::Values(values));
            } else {
                domain = Some(Domain::Path(self.path()?));
            }
        }
        if class.is_none() && domain.is_none() {
            return Err(self.error("`:` with a class or `in` with a domain"));
        }
        self.scope.push(name.clone());
        Ok(VarDecl { name, class, domain })
    }

    fn literal(&mut self) -> Result<Literal> {
        let lit = match self.peek().clone() {
            Tok::Int(i) => Literal::Int(i),
            Tok::Dec(d) => Literal::Decimal(d),
            Tok::Str(s) => Literal::Str(s),
            Tok::Iri(s) => Literal::Iri(s),
            Tok::Entity(n) => Literal::Entity(EntityId(n)),
            Tok::Ident(s) if s == "true" => Literal::Bool(true),
            Tok::Ident(s) if s == "false" => Literal::Bool(false),
            _ => return Err(self.error("a literal")),
        };
        self.bump();
        Ok(lit)
    }

    fn path(&mut self) -> Result<Path> {
        let at = self.offset();
        let root = self.ident("a path")?;
        if RESERVED.contains(&root.as_str()) {
            return Err(syntax(at, "a path", &format!("`{root}`")));
        }
        let mut steps = Vec::new();
        let root = match &self.implicit_root {
            Some(case) if !self.scope.contains(&root) => {
                steps.push(Step::Attr(root));
                case.clone()
            }
            _ => root,
        };
        loop {
            match self.peek() {
                Tok::Dot if matches!(self.peek_at(1), Tok::Ident(s) if s != "where") => {
                    self.bump();
                    steps.push(Step::Attr(self.ident("an attribute name")?));
                }
                Tok::LBracket => {
                    self.bump();
                    match self.bump() {
                        Tok::Int(i) => steps.push(Step::Index(i)),
                        Tok::Ident(c) => steps.push(Step::OfType(c)),
                        _ => {
                            self.pos -= 1;
                            return Err(self.error("an index or a class name"));
                        }
                    }
                    self.expect(Tok::RBracket, "`]`")?;
                }
                _ => break,
            }
        }
        Ok(Path { root, steps })
    }

    fn operand(&mut self) -> Result<Operand> {
        match self.peek() {
            Tok::Int(_) | Tok::Dec(_) | Tok::Str(_) | Tok::Iri(_) | Tok::Entity(_) => Ok(Operand::Literal(self.literal()?)),
            Tok::Ident(s) if s == "true" || s == "false" => Ok(Operand::Literal(self.literal()?)),
            Tok::Ident(_) => Ok(Operand::Path(self.path()?)),
            _ => Err(self.error("a path or a literal")),
        }
    }

    fn compare_op(&mut self) -> Result<CompareOp> {
        match self.peek() {
            Tok::Op(op) => {
                let op = *op;
                self.bump();
                Ok(op)
            }
            _ => Err(self.error("a comparison operator")),
        }
    }

    fn args<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        self.expect(Tok::LParen, "`(`")?;
        let mut out = vec![item(self)?];
        while *self.peek() == Tok::Comma {
            self.bump();
            out.push(item(self)?);
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        Ok(out)
    }

    fn condition(&mut self) -> Result<Condition> {
        let keyword = match self.peek() {
            Tok::Ident(s) if *self.peek_at(1) == Tok::LParen => Some(s.clone()),
            _ => None,
        };
        match keyword.as_deref() {
            Some("contains") => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let path = self.path()?;
                self.expect(Tok::Comma, "`,`")?;
                let element = self.operand()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Condition::Contains(path, element))
            }
            Some("is_a") => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let path = self.path()?;
                self.expect(Tok::Comma, "`,`")?;
                let class = self.ident("a class name")?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Condition::IsA(path, class))
            }
            Some(q @ ("exists" | "for_all")) => {
                let universal = q == "for_all";
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let depth = self.scope.len();
                let var = self.var_decl()?;
                self.expect(Tok::Comma, "`,`")?;
                let body = self.condition()?;
                self.expect(Tok::RParen, "`)`")?;
                self.scope.truncate(depth);
                Ok(if universal {
                    Condition::ForAll(var, Box::new(body))
                } else {
                    Condition::Exists(var, Box::new(body))
                })
            }
            Some("not") => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let c = self.condition()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Condition::not(c))
            }
            Some("or") => {
                self.bump();
                Ok(Condition::Or(self.args(Self::condition)?))
            }
            Some("and") => {
                self.bump();
                Ok(Condition::And(self.args(Self::condition)?))
            }
            Some(a @ ("count" | "sum")) => {
                let agg = if a == "count" { AggFn::Count } else { AggFn::Sum };
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let path = self.path()?;
                self.expect(Tok::RParen, "`)`")?;
                let op = self.compare_op()?;
                let value = self.literal()?;
                Ok(Condition::Aggregate { agg, path, op, value })
            }
            _ => {
                if let Tok::Ident(s) = self.peek() {
                    if (s == "true" || s == "false") && !matches!(self.peek_at(1), Tok::Op(_)) {
                        let t = s == "true";
                        self.bump();
                        return Ok(if t { Condition::truth() } else { Condition::falsity() });
                    }
                }
                let left = self.operand()?;
                let op = self.compare_op()?;
                let right = self.operand()?;
                Ok(Condition::Compare(left, op, right))
            }
        }
    }
}

fn query_of(processor: Processor, descriptor: Descriptor, conditions: Vec<Condition>) -> Query {
    Query { processor, descriptor, conditions }
}

pub fn parse_query(text: &str) -> Result<Query> {
    Parser::new(lex(text)?, None).query()
}

/// Parses a standalone condition. With `case_var`, paths whose root is not a
/// declared variable are read as attributes of the case variable.
pub fn parse_condition(text: &str, case_var: Option<&str>) -> Result<Condition> {
    let mut p = Parser::new(lex(text)?, case_var);
    let c = p.condition()?;
    p.expect(Tok::Eof, "end of input")?;
    Ok(c)
}

/// Parses a condition at the start of `text` and returns it with the byte
/// offset where the unconsumed remainder begins.
pub fn parse_condition_prefix(text: &str, case_var: Option<&str>) -> Result<(Condition, usize)> {
    let mut p = Parser::new(lex_prefix(text), case_var);
    let c = p.condition()?;
    Ok((c, p.offset()))
}

pub fn parse_operand_prefix(text: &str, case_var: Option<&str>) -> Result<(Operand, usize)> {
    let mut p = Parser::new(lex_prefix(text), case_var);
    let o = p.operand()?;
    Ok((o, p.offset()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aged_twenty() {
        let q = parse_query("an(entity(p:Person).where(p.age == 20))").unwrap();
        assert_eq!(q.processor, Processor::An);
        assert_eq!(q.descriptor, Descriptor::Entity(VarDecl::typed("p", "Person")));
        assert_eq!(
            q.conditions,
            vec![Condition::Compare(
                Operand::Path(Path::var("p").attr("age")),
                CompareOp::Eq,
                Operand::Literal(Literal::Int(20))
            )]
        );
    }

    #[test]
    fn no_where_clause() {
        let q = parse_query("an(entity(p:Person))").unwrap();
        assert!(q.conditions.is_empty());
    }

    #[test]
    fn set_of_with_contains() {
        let q = parse_query("a(set_of(r:Robot,c:Capability).where(contains(r.capabilities,c)))").unwrap();
        assert_eq!(q.descriptor.vars().len(), 2);
        assert_eq!(
            q.conditions[0],
            Condition::Contains(Path::var("r").attr("capabilities"), Operand::Path(Path::var("c")))
        );
    }

    #[test]
    fn comments_and_indexing() {
        let q = parse_query("a(entity(r:Robot) # robots\n.where(r.parts.size[0] <= 1, r.arms[Arm][-1].x > -2.5e1))").unwrap();
        assert_eq!(
            q.conditions[0],
            Condition::Compare(
                Operand::Path(Path::var("r").attr("parts").attr("size").index(0)),
                CompareOp::Le,
                Operand::Literal(Literal::Int(1))
            )
        );
        match &q.conditions[1] {
            Condition::Compare(Operand::Path(p), CompareOp::Gt, Operand::Literal(Literal::Decimal(d))) => {
                assert_eq!(p.steps[1], Step::OfType("Arm".into()));
                assert_eq!(p.steps[2], Step::Index(-1));
                assert_eq!(*d, -25.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_query("an(entity(p:Person).where(p.age = 20))").unwrap_err();
        match err {
            EqlError::Syntax { position, .. } => assert_eq!(position, 32),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_query("an(entity(p))"), Err(EqlError::Syntax { .. })));
        assert!(matches!(parse_query("every(entity(p:P))"), Err(EqlError::Syntax { position: 0, .. })));
    }

    #[test]
    fn case_scoped_condition() {
        let c = parse_condition("parent.size > 1", Some("case")).unwrap();
        assert_eq!(
            c,
            Condition::Compare(
                Operand::Path(Path::var("case").attr("parent").attr("size")),
                CompareOp::Gt,
                Operand::Literal(Literal::Int(1))
            )
        );
        let c = parse_condition("exists(x in children, is_a(x, Handle))", Some("case")).unwrap();
        match c {
            Condition::Exists(v, body) => {
                assert_eq!(v.domain, Some(Domain::Path(Path::var("case").attr("children"))));
                assert_eq!(*body, Condition::IsA(Path::var("x"), "Handle".into()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn prefix_parsing_stops_at_foreign_text() {
        let text = "parent.size > 1 conclude Door{body=parent}";
        let (c, rest) = parse_condition_prefix(text, Some("case")).unwrap();
        assert!(matches!(c, Condition::Compare(..)));
        assert_eq!(&text[rest..], "conclude Door{body=parent}");
        let (o, rest) = parse_operand_prefix("parent, x=1}", Some("case")).unwrap();
        assert_eq!(o, Operand::Path(Path::var("case").attr("parent")));
        assert_eq!(rest, 6);
    }

    #[test]
    fn literals() {
        let c = parse_condition(r#"x.name == "a \"b\"\n""#, None).unwrap();
        assert_eq!(
            c,
            Condition::Compare(
                Operand::Path(Path::var("x").attr("name")),
                CompareOp::Eq,
                Operand::Literal(Literal::Str("a \"b\"\n".into()))
            )
        );
        let c = parse_condition("x == <http://ex.org/a#b>", None).unwrap();
        assert!(matches!(c, Condition::Compare(_, _, Operand::Literal(Literal::Iri(ref s))) if s == "http://ex.org/a#b"));
        let c = parse_condition("x<3", None).unwrap();
        assert!(matches!(c, Condition::Compare(_, CompareOp::Lt, _)));
        assert_eq!(parse_condition("true", None).unwrap(), Condition::truth());
        assert_eq!(parse_condition("false", None).unwrap(), Condition::falsity());
    }
}
