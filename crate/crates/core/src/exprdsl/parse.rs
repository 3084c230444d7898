//! Recursive-descent parser for the scalar expression grammar.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := ["-"] atom ["^" factor]
//! atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so
//! `-x^2 = -(x^2)` and `a^b^c = a^(b^c)`.

use std::collections::BTreeMap;

use super::{BinOp, Func, Node, NodeKind, ParseError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    msg: format!("malformed number '{text}'"),
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            other => {
                return Err(ParseError::Syntax {
                    pos: start,
                    msg: format!("unexpected character '{other}'"),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

pub(super) struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    params: &'a [String],
    constants: &'a BTreeMap<String, f64>,
}

impl<'a> Parser<'a> {
    pub(super) fn new(
        src: &str,
        params: &'a [String],
        constants: &'a BTreeMap<String, f64>,
    ) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: lex(src)?,
            at: 0,
            params,
            constants,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::Syntax {
                pos: self.pos(),
                msg: format!("expected {what}"),
            })
        }
    }

    pub(super) fn parse_all(mut self) -> Result<Node, ParseError> {
        if *self.peek() == Tok::End {
            return Err(ParseError::Syntax {
                pos: 0,
                msg: "empty expression".into(),
            });
        }
        let node = self.expr()?;
        if *self.peek() != Tok::End {
            return Err(ParseError::Syntax {
                pos: self.pos(),
                msg: "unexpected trailing input".into(),
            });
        }
        Ok(node)
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let (_, pos) = self.bump();
            let rhs = self.term()?;
            lhs = Node::binary(op, lhs, rhs, pos);
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            let (_, pos) = self.bump();
            let rhs = self.factor()?;
            lhs = Node::binary(op, lhs, rhs, pos);
        }
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        if *self.peek() == Tok::Minus {
            let (_, pos) = self.bump();
            let inner = self.power()?;
            return Ok(Node {
                kind: NodeKind::Neg(Box::new(inner)),
                pos,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            let (_, pos) = self.bump();
            let exp = self.factor()?;
            return Ok(Node::binary(BinOp::Pow, base, exp, pos));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Node {
                kind: NodeKind::Num(v),
                pos,
            }),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "')' after function arguments")?;
                    let func = Func::from_name(&name).ok_or_else(|| ParseError::UnknownIdent {
                        name: name.clone(),
                        pos,
                    })?;
                    if args.len() != 1 {
                        return Err(ParseError::Arity {
                            func: name,
                            expected: 1,
                            got: args.len(),
                            pos,
                        });
                    }
                    let arg = args.pop().expect("one argument");
                    if func == Func::Neg {
                        return Ok(Node {
                            kind: NodeKind::Neg(Box::new(arg)),
                            pos,
                        });
                    }
                    return Ok(Node {
                        kind: NodeKind::Call(func, Box::new(arg)),
                        pos,
                    });
                }
                if let Some(i) = self.params.iter().position(|p| *p == name) {
                    return Ok(Node {
                        kind: NodeKind::Param(i),
                        pos,
                    });
                }
                if let Some(&value) = self.constants.get(&name) {
                    return Ok(Node {
                        kind: NodeKind::Const { name, value },
                        pos,
                    });
                }
                if name == "pi" {
                    return Ok(Node {
                        kind: NodeKind::Const {
                            name,
                            value: std::f64::consts::PI,
                        },
                        pos,
                    });
                }
                if Func::from_name(&name).is_some() {
                    return Err(ParseError::Syntax {
                        pos,
                        msg: format!("function '{name}' used without arguments"),
                    });
                }
                Err(ParseError::UnknownIdent { name, pos })
            }
            Tok::End => Err(ParseError::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
            other => Err(ParseError::Syntax {
                pos,
                msg: format!("unexpected token {other:?}"),
            }),
        }
    }
}
