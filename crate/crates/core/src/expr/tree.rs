use std::fmt;

use smallvec::SmallVec;

use super::library::{Op, Token, TokenLibrary};
use crate::error::{Error, Result};

/// Guard used by division and logarithm.
pub const PROTECT_EPS: f64 = 1e-9;
/// `exp` clamps its argument to `[-EXP_CLAMP, EXP_CLAMP]`.
pub const EXP_CLAMP: f64 = 50.0;
/// Every intermediate value is clamped to `[-VALUE_CAP, VALUE_CAP]`.
pub const VALUE_CAP: f64 = 1e100;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprNode {
    pub token: Token,
    pub children: Vec<ExprNode>,
}

impl ExprNode {
    pub fn leaf(token: Token) -> Self {
        Self { token, children: Vec::new() }
    }

    pub fn unary(op: Op, child: ExprNode) -> Self {
        Self { token: Token::Op(op), children: vec![child] }
    }

    pub fn binary(op: Op, left: ExprNode, right: ExprNode) -> Self {
        Self { token: Token::Op(op), children: vec![left, right] }
    }

    fn push_prefix(&self, out: &mut Vec<Token>) {
        out.push(self.token);
        for c in &self.children {
            c.push_prefix(out);
        }
    }

    fn is_well_formed(&self) -> bool {
        self.children.len() == self.token.arity() && self.children.iter().all(Self::is_well_formed)
    }
}

/// A symbolic expression. Immutable once built; keeps its pre-order form
/// alongside the tree for fast evaluation.
#[derive(Debug, Clone)]
pub struct ExprTree {
    root: ExprNode,
    prefix: Vec<Token>,
    max_var: usize,
}

impl PartialEq for ExprTree {
    fn eq(&self, other: &Self) -> bool {
        self.prefix == other.prefix
    }
}

/// Applies a protected operator.
#[inline]
pub fn apply_op(op: Op, a: f64, b: f64) -> f64 {
    let v = match op {
        Op::Add => a + b,
        Op::Sub => a - b,
        Op::Mul => a * b,
        Op::Div => {
            let mag = b.abs().max(PROTECT_EPS);
            if b < 0.0 {
                -a / mag
            } else {
                a / mag
            }
        }
        Op::Log => (a.abs() + PROTECT_EPS).ln(),
        Op::Exp => a.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
        Op::Pow => a * a,
        Op::Sin => a.sin(),
        Op::Cos => a.cos(),
    };
    v.clamp(-VALUE_CAP, VALUE_CAP)
}

fn apply_binary_slice(op: Op, a: &mut [f64], b: &[f64]) {
    match op {
        Op::Add => a.iter_mut().zip(b).for_each(|(x, &y)| *x = apply_op(Op::Add, *x, y)),
        Op::Sub => a.iter_mut().zip(b).for_each(|(x, &y)| *x = apply_op(Op::Sub, *x, y)),
        Op::Mul => a.iter_mut().zip(b).for_each(|(x, &y)| *x = apply_op(Op::Mul, *x, y)),
        _ => a.iter_mut().zip(b).for_each(|(x, &y)| *x = apply_op(op, *x, y)),
    }
}

fn apply_unary_slice(op: Op, a: &mut [f64]) {
    a.iter_mut().for_each(|x| *x = apply_op(op, *x, 0.0));
}

impl ExprTree {
    /// Builds the unique tree whose pre-order traversal is `seq`.
    pub fn parse_prefix(seq: &[Token], lib: &TokenLibrary) -> Result<Self> {
        for t in seq {
            if lib.index_of(t).is_none() {
                return Err(Error::UnknownToken(t.symbol()));
            }
        }
        let tree = Self::parse_unchecked(seq)?;
        if tree.len() > lib.max_length() {
            return Err(Error::TooLong { len: tree.len(), max_length: lib.max_length() });
        }
        Ok(tree)
    }

    /// Parses space-separated symbols against `lib`.
    pub fn parse_symbols(text: &str, lib: &TokenLibrary) -> Result<Self> {
        let syms: Vec<&str> = text.split_whitespace().collect();
        let tokens = lib.tokens_from_symbols(&syms)?;
        Self::parse_prefix(&tokens, lib)
    }

    /// Structural parse with no library membership or length checks.
    pub fn parse_unchecked(seq: &[Token]) -> Result<Self> {
        // Arity bookkeeping first so the recursive build below cannot fail.
        let mut open = 1usize;
        for (i, t) in seq.iter().enumerate() {
            if open == 0 {
                return Err(Error::TrailingTokens { used: i, len: seq.len() });
            }
            open = open - 1 + t.arity();
        }
        if open != 0 {
            return Err(Error::IncompleteSequence { len: seq.len(), open });
        }
        fn build(seq: &[Token], pos: &mut usize) -> ExprNode {
            let token = seq[*pos];
            *pos += 1;
            let children = (0..token.arity()).map(|_| build(seq, pos)).collect();
            ExprNode { token, children }
        }
        let mut pos = 0;
        let root = build(seq, &mut pos);
        Ok(Self::from_parts(root, seq.to_vec()))
    }

    pub fn from_node(root: ExprNode) -> Result<Self> {
        if !root.is_well_formed() {
            return Err(Error::InvalidSequence("child count does not match arity".into()));
        }
        let mut prefix = Vec::new();
        root.push_prefix(&mut prefix);
        Ok(Self::from_parts(root, prefix))
    }

    fn from_parts(root: ExprNode, prefix: Vec<Token>) -> Self {
        let max_var = prefix
            .iter()
            .filter_map(|t| match t {
                Token::Var(i) => Some(*i),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        Self { root, prefix, max_var }
    }

    pub fn root(&self) -> &ExprNode {
        &self.root
    }

    /// Pre-order token sequence.
    pub fn to_prefix(&self) -> Vec<Token> {
        let mut out = Vec::with_capacity(self.prefix.len());
        self.root.push_prefix(&mut out);
        out
    }

    pub fn prefix(&self) -> &[Token] {
        &self.prefix
    }

    pub fn prefix_string(&self) -> String {
        self.prefix.iter().map(Token::symbol).collect::<Vec<_>>().join(" ")
    }

    pub fn len(&self) -> usize {
        self.prefix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefix.is_empty()
    }

    /// Largest 1-based variable index used (0 if none).
    pub fn max_var(&self) -> usize {
        self.max_var
    }

    pub fn uses_op(&self, op: Op) -> bool {
        self.prefix.contains(&Token::Op(op))
    }

    /// Protected evaluation on one feature vector (`x1` is `features[0]`).
    pub fn evaluate(&self, features: &[f64]) -> Result<f64> {
        if features.len() < self.max_var {
            return Err(Error::DimensionMismatch { needed: self.max_var, got: features.len() });
        }
        Ok(self.eval_unchecked(features))
    }

    /// Stack evaluation over the reversed pre-order sequence. Callers must
    /// have checked the dimension.
    #[inline]
    pub fn eval_unchecked(&self, features: &[f64]) -> f64 {
        let mut stack: SmallVec<[f64; 16]> = SmallVec::new();
        for t in self.prefix.iter().rev() {
            match *t {
                Token::Var(i) => stack.push(features[i - 1]),
                Token::Const(c) => stack.push(c),
                Token::Op(op) => {
                    let v = if op.arity() == 2 {
                        let a = stack.pop().expect("well-formed");
                        let b = stack.pop().expect("well-formed");
                        apply_op(op, a, b)
                    } else {
                        let a = stack.pop().expect("well-formed");
                        apply_op(op, a, 0.0)
                    };
                    stack.push(v);
                }
            }
        }
        stack.pop().expect("well-formed")
    }

    /// Evaluates `n` rows at once; `column(i)` yields the values of `x_i`.
    /// Bit-identical to calling [`ExprTree::eval_unchecked`] row by row.
    pub fn eval_columns<'a>(&self, n: usize, column: impl Fn(usize) -> &'a [f64]) -> Vec<f64> {
        let mut stack: Vec<Vec<f64>> = Vec::with_capacity(8);
        for t in self.prefix.iter().rev() {
            match *t {
                Token::Var(i) => stack.push(column(i)[..n].to_vec()),
                Token::Const(c) => stack.push(vec![c; n]),
                Token::Op(op) => {
                    let mut a = stack.pop().expect("well-formed");
                    if op.arity() == 2 {
                        let b = stack.pop().expect("well-formed");
                        apply_binary_slice(op, &mut a, &b);
                    } else {
                        apply_unary_slice(op, &mut a);
                    }
                    stack.push(a);
                }
            }
        }
        stack.pop().expect("well-formed")
    }

    /// Infix form with minimal parentheses; `-` and `/` associate left.
    pub fn render(&self) -> String {
        render_node(&self.root).0
    }
}

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_POW: u8 = 3;
const PREC_ATOM: u8 = 4;

fn render_node(n: &ExprNode) -> (String, u8) {
    match n.token {
        Token::Var(_) | Token::Const(_) => (n.token.symbol(), PREC_ATOM),
        Token::Op(Op::Pow) => {
            let (s, p) = render_node(&n.children[0]);
            let base = if p < PREC_ATOM { format!("({s})") } else { s };
            (format!("{base}^2"), PREC_POW)
        }
        Token::Op(op) if op.arity() == 1 => {
            let (s, _) = render_node(&n.children[0]);
            (format!("{}({s})", op.symbol()), PREC_ATOM)
        }
        Token::Op(op) => {
            let (prec, sep, left_assoc_only) = match op {
                Op::Add => (PREC_ADD, " + ", false),
                Op::Sub => (PREC_ADD, " - ", true),
                Op::Mul => (PREC_MUL, "*", false),
                Op::Div => (PREC_MUL, "/", true),
                _ => unreachable!("binary operators handled above"),
            };
            let (ls, lp) = render_node(&n.children[0]);
            let (rs, rp) = render_node(&n.children[1]);
            let ls = if lp < prec { format!("({ls})") } else { ls };
            let rs = if rp < prec || (rp == prec && left_assoc_only) { format!("({rs})") } else { rs };
            (format!("{ls}{sep}{rs}"), prec)
        }
    }
}
