use std::collections::HashMap;

use indexmap::IndexMap;

use super::lexer::{tokenize, Tok, Token};
use super::{DslError, Expr, ExternDecl, StateDecl, SystemSpec, Waveform};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Name {
    Param(f64),
    State,
    Extern,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    names: HashMap<String, Name>,
}

pub fn parse(src: &str) -> Result<SystemSpec, DslError> {
    let mut p = Parser { toks: tokenize(src)?, pos: 0, names: HashMap::new() };
    let spec = p.system()?;
    p.expect(&Tok::Eof, "end of input")?;
    Ok(spec)
}

const KEYWORDS: [&str; 7] = ["system", "state", "param", "extern", "init", "tau", "inf"];

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> DslError {
        let t = self.peek();
        DslError::Syntax { line: t.line, col: t.col, message: message.into() }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<Token, DslError> {
        if &self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.error_here(format!("expected {what}, found {}", describe(&self.peek().tok))))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), DslError> {
        match &self.peek().tok {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            other => Err(self.error_here(format!("expected `{kw}`, found {}", describe(other)))),
        }
    }

    fn ident(&mut self) -> Result<(String, usize, usize), DslError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Ident(name) => {
                self.bump();
                Ok((name, t.line, t.col))
            }
            other => Err(self.error_here(format!("expected identifier, found {}", describe(&other)))),
        }
    }

    fn declare(&mut self, name: &str, kind: Name, line: usize, col: usize) -> Result<(), DslError> {
        if KEYWORDS.contains(&name) {
            return Err(DslError::Syntax { line, col, message: format!("`{name}` is a reserved word") });
        }
        if self.names.contains_key(name) {
            return Err(if kind == Name::State {
                DslError::DuplicateState { name: name.to_string(), line, col }
            } else {
                DslError::DuplicateName { name: name.to_string(), line, col }
            });
        }
        self.names.insert(name.to_string(), kind);
        Ok(())
    }

    fn system(&mut self) -> Result<SystemSpec, DslError> {
        self.keyword("system")?;
        let (name, _, _) = self.ident()?;
        self.expect(&Tok::LBrace, "`{`")?;

        let mut states: Vec<StateDecl> = Vec::new();
        let mut externals = Vec::new();
        let mut derivs: IndexMap<String, Expr> = IndexMap::new();

        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Ident(kw) if kw == "param" => {
                    self.bump();
                    let (pname, l, c) = self.ident()?;
                    self.expect(&Tok::Eq, "`=`")?;
                    let value = self.number()?;
                    self.expect(&Tok::Semi, "`;`")?;
                    self.declare(&pname, Name::Param(value), l, c)?;
                }
                Tok::Ident(kw) if kw == "extern" => {
                    self.bump();
                    let (ename, l, c) = self.ident()?;
                    let waveform = if self.peek().tok == Tok::Eq {
                        self.bump();
                        self.waveform()?
                    } else {
                        Waveform::Constant(0.0)
                    };
                    self.expect(&Tok::Semi, "`;`")?;
                    self.declare(&ename, Name::Extern, l, c)?;
                    externals.push(ExternDecl { name: ename, waveform });
                }
                Tok::Ident(kw) if kw == "state" => {
                    self.bump();
                    let decl = self.state_block()?;
                    states.push(decl);
                }
                Tok::Ident(head)
                    if head.len() > 1
                        && head.starts_with('d')
                        && *self.peek_at(1) == Tok::Slash
                        && *self.peek_at(2) == Tok::Ident("dt".into()) =>
                {
                    let target = head[1..].to_string();
                    self.bump();
                    self.bump();
                    self.bump();
                    if self.names.get(&target) != Some(&Name::State) {
                        return Err(DslError::UnknownDerivativeTarget { name: target, line: t.line, col: t.col });
                    }
                    if derivs.contains_key(&target) {
                        return Err(DslError::DuplicateDerivative { name: target, line: t.line, col: t.col });
                    }
                    self.expect(&Tok::Eq, "`=`")?;
                    let e = self.expr()?;
                    self.expect(&Tok::Semi, "`;`")?;
                    derivs.insert(target, e);
                }
                other => {
                    return Err(self.error_here(format!(
                        "expected `param`, `extern`, `state`, a derivative line, or `}}`, found {}",
                        describe(other)
                    )))
                }
            }
        }

        let mut derivatives = IndexMap::new();
        for s in &states {
            let e = derivs
                .shift_remove(&s.name)
                .ok_or_else(|| DslError::MissingDerivative { name: s.name.clone() })?;
            derivatives.insert(s.name.clone(), e);
        }
        Ok(SystemSpec { name, states, externals, derivatives })
    }

    fn state_block(&mut self) -> Result<StateDecl, DslError> {
        let (name, line, col) = self.ident()?;
        self.declare(&name, Name::State, line, col)?;
        self.expect(&Tok::LBrace, "`{`")?;
        let (mut init, mut tau) = (None, None);
        while self.peek().tok != Tok::RBrace {
            let (field, fl, fc) = self.ident()?;
            self.expect(&Tok::Eq, "`=`")?;
            let value = self.number()?;
            self.expect(&Tok::Semi, "`;`")?;
            let slot = match field.as_str() {
                "init" => &mut init,
                "tau" => &mut tau,
                _ => {
                    return Err(DslError::Syntax {
                        line: fl,
                        col: fc,
                        message: format!("unknown state field `{field}` (expected `init` or `tau`)"),
                    })
                }
            };
            if slot.replace(value).is_some() {
                return Err(DslError::Syntax { line: fl, col: fc, message: format!("`{field}` given twice") });
            }
        }
        self.bump();
        let tau = tau.ok_or_else(|| DslError::InvalidState {
            name: name.clone(),
            message: "missing `tau`".into(),
        })?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(DslError::InvalidState { name, message: format!("tau must be positive, got {tau}") });
        }
        let init = init.unwrap_or(0.0);
        if !init.is_finite() {
            return Err(DslError::InvalidState { name, message: "init must be finite".into() });
        }
        Ok(StateDecl { name, init, tau })
    }

    /// Signed literal or the name of an earlier `param`.
    fn number(&mut self) -> Result<f64, DslError> {
        let negate = if self.peek().tok == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let t = self.peek().clone();
        let v = match &t.tok {
            Tok::Number { value, .. } => {
                self.bump();
                *value
            }
            Tok::Ident(s) if s == "inf" => {
                self.bump();
                f64::INFINITY
            }
            Tok::Ident(s) => match self.names.get(s) {
                Some(&Name::Param(v)) => {
                    self.bump();
                    v
                }
                Some(_) => return Err(self.error_here(format!("`{s}` is not a constant"))),
                None => return Err(DslError::Undeclared { name: s.clone(), line: t.line, col: t.col }),
            },
            other => return Err(self.error_here(format!("expected a number, found {}", describe(other)))),
        };
        Ok(if negate { -v } else { v })
    }

    fn waveform(&mut self) -> Result<Waveform, DslError> {
        let t = self.peek().clone();
        let kind = match &t.tok {
            Tok::Ident(s) if (s == "step" || s == "pwl") && *self.peek_at(1) == Tok::LParen => s.clone(),
            _ => return Ok(Waveform::Constant(self.number()?)),
        };
        self.bump();
        self.bump();
        let wf = if kind == "step" {
            let t_on = self.number()?;
            self.expect(&Tok::Comma, "`,`")?;
            let t_off = self.number()?;
            self.expect(&Tok::Comma, "`,`")?;
            let level = self.number()?;
            Waveform::Step { t_on, t_off, level }
        } else {
            let mut points = Vec::new();
            loop {
                let time = self.number()?;
                self.expect(&Tok::Colon, "`:`")?;
                let value = self.number()?;
                points.push((time, value));
                if self.peek().tok == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            Waveform::PiecewiseLinear(points)
        };
        self.expect(&Tok::RParen, "`)`")?;
        wf.validate().map_err(|message| DslError::Syntax { line: t.line, col: t.col, message })?;
        Ok(wf)
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // term := unary (('*' unary) | ('/' literal))*
    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    let t = self.peek().clone();
                    let d = self.divisor()?;
                    if d == 0.0 {
                        return Err(DslError::ZeroDivisor { line: t.line, col: t.col });
                    }
                    lhs = Expr::Div(Box::new(lhs), d);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn divisor(&mut self) -> Result<f64, DslError> {
        let t = self.peek().clone();
        let ok = match (&t.tok, self.peek_at(1)) {
            (Tok::Number { .. }, _) => true,
            (Tok::Minus, Tok::Number { .. }) => true,
            (Tok::Ident(s), _) | (Tok::Minus, Tok::Ident(s)) => {
                matches!(self.names.get(s.as_str()), Some(Name::Param(_)))
            }
            _ => false,
        };
        if !ok {
            return Err(DslError::NonConstantDivisor { line: t.line, col: t.col });
        }
        let d = self.number()?;
        if matches!(self.peek().tok, Tok::Caret) {
            return Err(self.error_here("divisor must be a plain constant"));
        }
        Ok(d)
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            // a literal directly after the sign is a negative constant,
            // unless it is the base of a power (-2^2 == -(2^2))
            if let Tok::Number { value, .. } = self.peek().tok.clone() {
                if *self.peek_at(1) != Tok::Caret {
                    self.bump();
                    return Ok(Expr::Const(-value));
                }
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    // power := primary ('^' integer)?
    fn power(&mut self) -> Result<Expr, DslError> {
        let base = self.primary()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let t = self.bump();
        match &t.tok {
            Tok::Number { value, text } => {
                let is_int = !text.contains(['.', 'e', 'E']) && value.fract() == 0.0;
                if !is_int || *value < 1.0 || *value > u32::MAX as f64 {
                    return Err(DslError::BadExponent { text: text.clone(), line: t.line, col: t.col });
                }
                Ok(Expr::Pow(Box::new(base), *value as u32))
            }
            Tok::Minus => Err(DslError::BadExponent { text: "-".into(), line: t.line, col: t.col }),
            other => Err(DslError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("exponent must be a positive integer literal, found {}", describe(other)),
            }),
        }
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let t = self.bump();
        match t.tok {
            Tok::Number { value, .. } => Ok(Expr::Const(value)),
            Tok::Ident(name) => match self.names.get(&name) {
                Some(Name::Param(v)) => Ok(Expr::Const(*v)),
                Some(_) => Ok(Expr::Var(name)),
                None => Err(DslError::Undeclared { name, line: t.line, col: t.col }),
            },
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            other => Err(DslError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("expected an expression, found {}", describe(&other)),
            }),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number { text, .. } => format!("`{text}`"),
        Tok::Eof => "end of input".into(),
        other => {
            let s = match other {
                Tok::LBrace => "{",
                Tok::RBrace => "}",
                Tok::LParen => "(",
                Tok::RParen => ")",
                Tok::Semi => ";",
                Tok::Comma => ",",
                Tok::Colon => ":",
                Tok::Eq => "=",
                Tok::Plus => "+",
                Tok::Minus => "-",
                Tok::Star => "*",
                Tok::Slash => "/",
                Tok::Caret => "^",
                _ => unreachable!(),
            };
            format!("`{s}`")
        }
    }
}
