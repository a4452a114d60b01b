use std::collections::HashSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use super::{
    is_identifier, ArchetypeDefinition, ArchetypeId, FieldConstraint, IdError, Range, ValueType,
};
use crate::model::EntryKind;

/// Failure to parse an archetype document. Positions are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    DuplicateField(String),
    UnknownKind(String),
    MalformedId(String),
    MalformedRange(String),
    KindMismatch { id_kind: String, declared: String },
    InvalidConstraint(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::DuplicateField(n) => write!(f, "duplicate field {n:?}"),
            ParseErrorKind::UnknownKind(k) => write!(f, "unknown kind {k:?}"),
            ParseErrorKind::MalformedId(id) => write!(f, "malformed archetype id {id:?}"),
            ParseErrorKind::MalformedRange(r) => write!(f, "malformed range {r:?}"),
            ParseErrorKind::KindMismatch { id_kind, declared } => {
                write!(f, "kind {declared} does not match id kind {id_kind}")
            }
            ParseErrorKind::InvalidConstraint(m) => write!(f, "invalid constraint: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Word(&'a str),
    LBrace,
    RBrace,
    Comma,
}

#[derive(Debug, Clone)]
struct Token<'a> {
    tok: Tok<'a>,
    column: usize,
}

fn is_word_char(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '{' | '}' | ',' | '#')
}

/// Splits one comment-stripped line into tokens with 1-based char columns.
fn lex(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut iter = line.char_indices().enumerate().peekable();
    while let Some((col, (start, c))) = iter.next() {
        let column = col + 1;
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            c if c.is_whitespace() => continue,
            _ => {
                let mut end = start + c.len_utf8();
                while let Some(&(_, (i, c))) = iter.peek() {
                    if !is_word_char(c) {
                        break;
                    }
                    end = i + c.len_utf8();
                    iter.next();
                }
                Tok::Word(&line[start..end])
            }
        };
        out.push(Token { tok, column });
    }
    out
}

struct LineCursor<'a> {
    line_no: usize,
    end_column: usize,
    tokens: Vec<Token<'a>>,
    pos: usize,
}

impl<'a> LineCursor<'a> {
    fn err(&self, column: usize, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line_no,
            column,
            kind,
        }
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map_or(self.end_column, |t| t.column)
    }

    fn word(&mut self, what: &str) -> Result<(&'a str, usize), ParseError> {
        match self.tokens.get(self.pos) {
            Some(Token {
                tok: Tok::Word(w),
                column,
            }) => {
                self.pos += 1;
                Ok((w, *column))
            }
            _ => Err(self.err(
                self.here(),
                ParseErrorKind::Syntax(format!("expected {what}")),
            )),
        }
    }

    fn expect(&mut self, want: Tok<'static>, what: &str) -> Result<(), ParseError> {
        match self.tokens.get(self.pos) {
            Some(t) if t.tok == want => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(
                self.here(),
                ParseErrorKind::Syntax(format!("expected {what}")),
            )),
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        if self.pos < self.tokens.len() {
            return Err(self.err(
                self.here(),
                ParseErrorKind::Syntax("unexpected trailing input".into()),
            ));
        }
        Ok(())
    }

    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }
}

/// Decimal literal: optional `-`, digits, optional `.digits`.
fn parse_decimal(s: &str) -> Option<f64> {
    let body = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |d: &str| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn is_code(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

fn kind_error(token: &str) -> ParseErrorKind {
    ParseErrorKind::UnknownKind(token.to_owned())
}

/// Parses an archetype document.
pub fn parse_archetype(source: &str) -> Result<ArchetypeDefinition, ParseError> {
    let mut id: Option<ArchetypeId> = None;
    let mut id_text = String::new();
    let mut kind: Option<EntryKind> = None;
    let mut fields: Vec<FieldConstraint> = Vec::new();
    let mut seen = HashSet::new();
    let mut last_line = 0;

    for (idx, raw) in source.split('\n').enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let content = raw.split_once('#').map_or(raw, |(before, _)| before);
        let tokens = lex(content);
        if tokens.is_empty() {
            continue;
        }
        let mut cur = LineCursor {
            line_no,
            end_column: content.chars().count() + 1,
            tokens,
            pos: 0,
        };
        let (directive, dcol) = cur.word("directive")?;

        match (directive, &id, &kind) {
            ("archetype", None, _) => {
                let (text, col) = cur.word("archetype id")?;
                cur.finish()?;
                let parsed = ArchetypeId::parse(text).map_err(|e| match e {
                    IdError::Malformed => cur.err(col, ParseErrorKind::MalformedId(text.into())),
                    IdError::UnknownKind(k) => cur.err(col, kind_error(&k)),
                })?;
                id_text = text.to_owned();
                id = Some(parsed);
            }
            ("kind", Some(parsed_id), None) => {
                let (token, col) = cur.word("kind token")?;
                cur.finish()?;
                let k = EntryKind::from_token(token).ok_or_else(|| cur.err(col, kind_error(token)))?;
                if k != parsed_id.kind {
                    return Err(cur.err(
                        col,
                        ParseErrorKind::KindMismatch {
                            id_kind: parsed_id.kind.token().into(),
                            declared: token.into(),
                        },
                    ));
                }
                kind = Some(k);
            }
            ("field", Some(_), Some(_)) => {
                let field = parse_field(&mut cur)?;
                if !seen.insert(field.name.clone()) {
                    return Err(cur.err(
                        cur.tokens[1].column,
                        ParseErrorKind::DuplicateField(field.name),
                    ));
                }
                fields.push(field);
            }
            ("archetype", Some(_), _) => {
                return Err(cur.err(dcol, ParseErrorKind::Syntax("duplicate archetype header".into())))
            }
            ("kind", None, _) | ("field", None, _) => {
                return Err(cur.err(
                    dcol,
                    ParseErrorKind::Syntax("expected archetype header first".into()),
                ))
            }
            ("kind", Some(_), Some(_)) => {
                return Err(cur.err(dcol, ParseErrorKind::Syntax("duplicate kind line".into())))
            }
            ("field", Some(_), None) => {
                return Err(cur.err(
                    dcol,
                    ParseErrorKind::Syntax("expected kind line before fields".into()),
                ))
            }
            (other, _, _) => {
                return Err(cur.err(
                    dcol,
                    ParseErrorKind::Syntax(format!("unknown directive {other:?}")),
                ))
            }
        }
    }

    let at_eof = |msg: &str| ParseError {
        line: last_line.max(1),
        column: 1,
        kind: ParseErrorKind::Syntax(msg.into()),
    };
    if id.is_none() {
        return Err(at_eof("missing archetype header"));
    }
    let kind = kind.ok_or_else(|| at_eof("missing kind line"))?;
    Ok(ArchetypeDefinition {
        archetype_id: id_text,
        kind,
        fields,
    })
}

fn parse_field(cur: &mut LineCursor<'_>) -> Result<FieldConstraint, ParseError> {
    let (name, ncol) = cur.word("field name")?;
    if !is_identifier(name) {
        return Err(cur.err(
            ncol,
            ParseErrorKind::Syntax(format!("invalid field name {name:?}")),
        ));
    }
    let (vtype, vcol) = cur.word("value type")?;
    let value_type = ValueType::from_keyword(vtype).ok_or_else(|| {
        cur.err(
            vcol,
            ParseErrorKind::Syntax(format!("unknown value type {vtype:?}")),
        )
    })?;
    let (req, rcol) = cur.word("required or optional")?;
    let required = match req {
        "required" => true,
        "optional" => false,
        _ => {
            return Err(cur.err(
                rcol,
                ParseErrorKind::Syntax("expected required or optional".into()),
            ))
        }
    };
    let mut field = FieldConstraint::new(name, value_type, required);

    while !cur.at_end() {
        let (opt, ocol) = cur.word("range, unit or values")?;
        let dup = || {
            cur.err(
                ocol,
                ParseErrorKind::Syntax(format!("duplicate {opt} clause")),
            )
        };
        let only = |allowed: ValueType| {
            cur.err(
                ocol,
                ParseErrorKind::InvalidConstraint(format!(
                    "{opt} only applies to {} fields",
                    allowed.keyword()
                )),
            )
        };
        match opt {
            "range" => {
                if field.range.is_some() {
                    return Err(dup());
                }
                if value_type != ValueType::Quantity {
                    return Err(only(ValueType::Quantity));
                }
                let (text, col) = cur.word("lo..hi")?;
                let malformed = || cur.err(col, ParseErrorKind::MalformedRange(text.into()));
                let (lo, hi) = text.split_once("..").ok_or_else(malformed)?;
                let lo = parse_decimal(lo).ok_or_else(malformed)?;
                let hi = parse_decimal(hi).ok_or_else(malformed)?;
                if lo > hi {
                    return Err(malformed());
                }
                field.range = Some(Range { lo, hi });
            }
            "unit" => {
                if field.unit.is_some() {
                    return Err(dup());
                }
                if value_type != ValueType::Quantity {
                    return Err(only(ValueType::Quantity));
                }
                let (unit, _) = cur.word("unit")?;
                field.unit = Some(unit.to_owned());
            }
            "values" => {
                if field.allowed_values.is_some() {
                    return Err(dup());
                }
                if value_type != ValueType::Coded {
                    return Err(only(ValueType::Coded));
                }
                cur.expect(Tok::LBrace, "'{'")?;
                let mut codes: Vec<String> = Vec::new();
                loop {
                    let (code, ccol) = cur.word("code")?;
                    if !is_code(code) {
                        return Err(cur.err(
                            ccol,
                            ParseErrorKind::Syntax(format!("invalid code {code:?}")),
                        ));
                    }
                    if codes.iter().any(|c| c == code) {
                        return Err(cur.err(
                            ccol,
                            ParseErrorKind::InvalidConstraint(format!("duplicate code {code:?}")),
                        ));
                    }
                    codes.push(code.to_owned());
                    match cur.tokens.get(cur.pos).map(|t| &t.tok) {
                        Some(Tok::Comma) => cur.pos += 1,
                        Some(Tok::RBrace) => {
                            cur.pos += 1;
                            break;
                        }
                        _ => {
                            return Err(cur.err(
                                cur.here(),
                                ParseErrorKind::Syntax("expected ',' or '}'".into()),
                            ))
                        }
                    }
                }
                field.allowed_values = Some(codes);
            }
            other => {
                return Err(cur.err(
                    ocol,
                    ParseErrorKind::Syntax(format!("unknown clause {other:?}")),
                ))
            }
        }
    }
    Ok(field)
}

/// Canonical text form: header, kind line, then one line per field in declaration order.
pub fn serialize_archetype(def: &ArchetypeDefinition) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "archetype {}", def.archetype_id);
    let _ = writeln!(out, "kind {}", def.kind.token());
    for f in &def.fields {
        let _ = write!(
            out,
            "field {} {} {}",
            f.name,
            f.value_type.keyword(),
            if f.required { "required" } else { "optional" }
        );
        if let Some(r) = &f.range {
            let _ = write!(out, " range {}..{}", r.lo, r.hi);
        }
        if let Some(u) = &f.unit {
            let _ = write!(out, " unit {u}");
        }
        if let Some(values) = &f.allowed_values {
            let _ = write!(out, " values {{{}}}", values.join(", "));
        }
        out.push('\n');
    }
    out
}
