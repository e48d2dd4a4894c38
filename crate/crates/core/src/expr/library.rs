use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// Operators available to expressions. `Pow` is the unary square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Log,
    Exp,
    Pow,
    Sin,
    Cos,
}

impl Op {
    pub const DEFAULT: [Op; 7] = [Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Log, Op::Exp, Op::Pow];

    pub fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div => 2,
            Op::Log | Op::Exp | Op::Pow | Op::Sin | Op::Cos => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Log => "log",
            Op::Exp => "exp",
            Op::Pow => "pow",
            Op::Sin => "sin",
            Op::Cos => "cos",
        }
    }

    fn from_symbol(s: &str) -> Option<Op> {
        Some(match s {
            "+" => Op::Add,
            "-" => Op::Sub,
            "*" => Op::Mul,
            "/" => Op::Div,
            "log" => Op::Log,
            "exp" => Op::Exp,
            "pow" => Op::Pow,
            "sin" => Op::Sin,
            "cos" => Op::Cos,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    BinaryOp,
    UnaryOp,
    Variable,
    Constant,
}

/// One symbol of an expression. Variables are 1-based feature indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Token {
    Op(Op),
    Var(usize),
    Const(f64),
}

impl Token {
    pub fn arity(&self) -> usize {
        match self {
            Token::Op(op) => op.arity(),
            Token::Var(_) | Token::Const(_) => 0,
        }
    }

    pub fn kind(&self) -> TokenKind {
        match self {
            Token::Op(op) if op.arity() == 2 => TokenKind::BinaryOp,
            Token::Op(_) => TokenKind::UnaryOp,
            Token::Var(_) => TokenKind::Variable,
            Token::Const(_) => TokenKind::Constant,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.arity() == 0
    }

    pub fn symbol(&self) -> String {
        self.to_string()
    }

    /// Parses a symbol without consulting a library.
    pub fn parse(s: &str) -> Result<Token> {
        if let Some(op) = Op::from_symbol(s) {
            return Ok(Token::Op(op));
        }
        if let Some(rest) = s.strip_prefix('x') {
            return match rest.parse::<usize>() {
                Ok(i) if i >= 1 => Ok(Token::Var(i)),
                _ => Err(Error::UnknownToken(s.to_string())),
            };
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Token::Const)
            .ok_or_else(|| Error::UnknownToken(s.to_string()))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Op(op) => f.write_str(op.symbol()),
            Token::Var(i) => write!(f, "x{i}"),
            // Debug keeps the trailing ".0" so 2.0 stays "2.0".
            Token::Const(v) => write!(f, "{v:?}"),
        }
    }
}

/// Whether expressions see both nodes' features (pair) or one node's (symmetric).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LibraryMode {
    Pair,
    Symmetric,
}

impl LibraryMode {
    pub fn n_vars(self) -> usize {
        match self {
            LibraryMode::Pair => 40,
            LibraryMode::Symmetric => 20,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LibraryMode::Pair => "pair",
            LibraryMode::Symmetric => "symmetric",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(LibraryMode::Pair),
            "symmetric" => Ok(LibraryMode::Symmetric),
            other => Err(Error::Config(format!("unknown library mode `{other}`"))),
        }
    }
}

/// Optional additions used by the library ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extension {
    /// Adds `sin` and `cos`.
    Trig,
    /// Stands in for a tunable constant with a fixed grid of extra constants.
    ConstGrid,
}

impl Extension {
    pub fn as_str(self) -> &'static str {
        match self {
            Extension::Trig => "trig",
            Extension::ConstGrid => "constgrid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "trig" => Ok(Extension::Trig),
            "constgrid" => Ok(Extension::ConstGrid),
            other => Err(Error::Config(format!("unknown library extension `{other}`"))),
        }
    }
}

pub const DEFAULT_CONSTANTS: [f64; 4] = [0.2, 0.5, 2.0, 5.0];
pub const CONST_GRID: [f64; 3] = [0.1, 1.0, 10.0];
pub const DEFAULT_MAX_LENGTH: usize = 10;

/// Ordered token set; the order is the policy's action indexing.
#[derive(Debug, Clone)]
pub struct TokenLibrary {
    tokens: Vec<Token>,
    symbols: Vec<String>,
    lookup: HashMap<String, usize>,
    max_length: usize,
    mode: LibraryMode,
    extensions: Vec<Extension>,
}

impl TokenLibrary {
    /// Seven operators, every feature variable of `mode`, and the four constants.
    pub fn new(mode: LibraryMode, max_length: usize) -> Result<Self> {
        Self::with_extensions(mode, max_length, &[])
    }

    pub fn with_extensions(
        mode: LibraryMode,
        max_length: usize,
        extensions: &[Extension],
    ) -> Result<Self> {
        let mut tokens: Vec<Token> = Op::DEFAULT.iter().map(|&op| Token::Op(op)).collect();
        if extensions.contains(&Extension::Trig) {
            tokens.push(Token::Op(Op::Sin));
            tokens.push(Token::Op(Op::Cos));
        }
        tokens.extend((1..=mode.n_vars()).map(Token::Var));
        tokens.extend(DEFAULT_CONSTANTS.iter().map(|&c| Token::Const(c)));
        if extensions.contains(&Extension::ConstGrid) {
            tokens.extend(CONST_GRID.iter().map(|&c| Token::Const(c)));
        }
        let mut exts = extensions.to_vec();
        exts.sort_by_key(|e| e.as_str());
        exts.dedup();
        let mut lib = Self::from_tokens(tokens, max_length, mode)?;
        lib.extensions = exts;
        Ok(lib)
    }

    /// Arbitrary token set, mostly for small test libraries.
    pub fn from_tokens(tokens: Vec<Token>, max_length: usize, mode: LibraryMode) -> Result<Self> {
        if max_length == 0 {
            return Err(Error::Config("max_length must be positive".into()));
        }
        if !tokens.iter().any(Token::is_terminal) {
            return Err(Error::Config("library needs at least one terminal token".into()));
        }
        let mut lookup = HashMap::new();
        let mut symbols = Vec::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if let Token::Var(v) = t {
                if *v == 0 || *v > mode.n_vars() {
                    return Err(Error::Config(format!(
                        "variable x{v} outside 1..={} for {} mode",
                        mode.n_vars(),
                        mode.as_str()
                    )));
                }
            }
            let s = t.symbol();
            if lookup.insert(s.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate token `{s}`")));
            }
            symbols.push(s);
        }
        Ok(Self { tokens, symbols, lookup, max_length, mode, extensions: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token(&self, idx: usize) -> Token {
        self.tokens[idx]
    }

    pub fn symbol(&self, idx: usize) -> &str {
        &self.symbols[idx]
    }

    pub fn arity(&self, idx: usize) -> usize {
        self.tokens[idx].arity()
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn mode(&self) -> LibraryMode {
        self.mode
    }

    pub fn extensions(&self) -> &[Extension] {
        &self.extensions
    }

    pub fn index_of_symbol(&self, s: &str) -> Option<usize> {
        self.lookup.get(s).copied()
    }

    pub fn index_of(&self, t: &Token) -> Option<usize> {
        self.index_of_symbol(&t.symbol())
    }

    /// Resolves symbols to library tokens.
    pub fn tokens_from_symbols<S: AsRef<str>>(&self, symbols: &[S]) -> Result<Vec<Token>> {
        symbols
            .iter()
            .map(|s| {
                let s = s.as_ref();
                self.index_of_symbol(s)
                    .map(|i| self.tokens[i])
                    .ok_or_else(|| Error::UnknownToken(s.to_string()))
            })
            .collect()
    }

    pub fn indices_of(&self, tokens: &[Token]) -> Result<Vec<usize>> {
        tokens
            .iter()
            .map(|t| self.index_of(t).ok_or_else(|| Error::UnknownToken(t.symbol())))
            .collect()
    }

    /// Stable hash of mode, cap and token order.
    pub fn fingerprint(&self) -> String {
        let desc = format!(
            "{}|{}|{}",
            self.mode.as_str(),
            self.max_length,
            self.symbols.join(" ")
        );
        sha256_hex(desc.as_bytes())[..16].to_string()
    }
}
