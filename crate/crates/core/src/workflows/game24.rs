//! Game of 24 arithmetic: exact numbers, expressions, solve states and a
//! brute-force solver.

use std::fmt;

use num_rational::Rational64;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Num = Rational64;

pub fn target() -> Num {
    Num::from_integer(24)
}

/// `8`, `-3` or `5/3`.
pub fn fmt_num(n: &Num) -> String {
    if n.is_integer() {
        n.to_integer().to_string()
    } else {
        format!("{}/{}", n.numer(), n.denom())
    }
}

pub fn parse_num(s: &str) -> Option<Num> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let (a, b) = (a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?);
        return (b != 0).then(|| Num::new(a, b));
    }
    if let Ok(i) = s.parse::<i64>() {
        return Some(Num::from_integer(i));
    }
    let f: f64 = s.parse().ok()?;
    Num::approximate_float(f).filter(|r| r.to_f64() == Some(f))
}

pub fn fmt_nums(ns: &[Num]) -> String {
    ns.iter().map(fmt_num).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub const ALL: [ArithOp; 4] = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div];

    pub fn symbol(self) -> char {
        match self {
            ArithOp::Add => '+',
            ArithOp::Sub => '-',
            ArithOp::Mul => '*',
            ArithOp::Div => '/',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '+' => Some(ArithOp::Add),
            '-' | '−' => Some(ArithOp::Sub),
            '*' | '×' | 'x' => Some(ArithOp::Mul),
            '/' | '÷' => Some(ArithOp::Div),
            _ => None,
        }
    }

    /// `None` on division by zero.
    pub fn apply(self, a: Num, b: Num) -> Option<Num> {
        match self {
            ArithOp::Add => a.checked_add(&b),
            ArithOp::Sub => a.checked_sub(&b),
            ArithOp::Mul => a.checked_mul(&b),
            ArithOp::Div if b.is_zero() => None,
            ArithOp::Div => a.checked_div(&b),
        }
    }
}

/// One step `a op b = c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub lhs: Num,
    pub op: ArithOp,
    pub rhs: Num,
    pub result: Num,
}

impl Equation {
    pub fn parse(line: &str) -> Option<Self> {
        let body = line.split("(left").next()?.trim();
        let (expr, result) = body.split_once('=')?;
        let result = parse_num(result)?;
        let expr = expr.trim();
        // Skip the first character so a leading minus stays part of the number.
        let (i, c) = expr
            .char_indices()
            .skip(1)
            .find(|(_, c)| ArithOp::from_symbol(*c).is_some() && *c != 'x')?;
        let op = ArithOp::from_symbol(c)?;
        let lhs = parse_num(&expr[..i])?;
        let rhs = parse_num(&expr[i + c.len_utf8()..])?;
        Some(Equation {
            lhs,
            op,
            rhs,
            result,
        })
    }

    pub fn is_correct(&self) -> bool {
        self.op.apply(self.lhs, self.rhs) == Some(self.result)
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} = {}",
            fmt_num(&self.lhs),
            self.op.symbol(),
            fmt_num(&self.rhs),
            fmt_num(&self.result)
        )
    }
}

/// Partial solution: equations applied so far and the numbers left.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    pub input: Vec<i64>,
    pub equations: Vec<String>,
    pub remaining: Vec<Num>,
    /// Validated final expression, set once the state has been checked.
    pub answer: Option<String>,
}

impl SolveState {
    pub fn initial(numbers: &[i64]) -> Result<Self> {
        if numbers.len() != 4 || numbers.iter().any(|n| *n <= 0) {
            return Err(Error::bad_arg(
                "init",
                format!("expected 4 positive integers, got {numbers:?}"),
            ));
        }
        Ok(SolveState {
            input: numbers.to_vec(),
            equations: vec![],
            remaining: numbers.iter().map(|n| Num::from_integer(*n)).collect(),
            answer: None,
        })
    }

    /// Applies `eq` if both operands are among the remaining numbers and the
    /// arithmetic is right. The result goes after the untouched numbers.
    pub fn apply(&self, eq: &Equation) -> Option<SolveState> {
        if !eq.is_correct() {
            return None;
        }
        let mut left = self.remaining.clone();
        let i = left.iter().position(|n| *n == eq.lhs)?;
        left.remove(i);
        let j = left.iter().position(|n| *n == eq.rhs)?;
        left.remove(j);
        left.push(eq.result);
        let mut equations = self.equations.clone();
        equations.push(eq.to_string());
        Some(SolveState {
            input: self.input.clone(),
            equations,
            remaining: left,
            answer: None,
        })
    }

    /// Remaining numbers sorted, for use as a cache key.
    pub fn remaining_key(&self) -> Vec<Num> {
        let mut k = self.remaining.clone();
        k.sort();
        k
    }

    /// Replays the equations from the input and checks the bookkeeping.
    pub fn is_consistent(&self) -> bool {
        let Ok(mut s) = SolveState::initial(&self.input) else {
            return false;
        };
        for line in &self.equations {
            match Equation::parse(line).and_then(|e| s.apply(&e)) {
                Some(next) => s = next,
                None => return false,
            }
        }
        s.remaining == self.remaining
    }
}

impl fmt::Display for SolveState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] left: {}",
            self.equations.join("; "),
            fmt_nums(&self.remaining)
        )?;
        if let Some(a) = &self.answer {
            write!(f, " answer: {a}")?;
        }
        Ok(())
    }
}

/// Expression over numbers; rendering parenthesizes every compound operand.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(Num),
    Bin(Box<Expr>, ArithOp, Box<Expr>),
}

impl Expr {
    pub fn eval(&self) -> Option<Num> {
        match self {
            Expr::Num(n) => Some(*n),
            Expr::Bin(a, op, b) => op.apply(a.eval()?, b.eval()?),
        }
    }

    /// Leaf numbers left to right.
    pub fn leaves(&self) -> Vec<Num> {
        match self {
            Expr::Num(n) => vec![*n],
            Expr::Bin(a, _, b) => {
                let mut v = a.leaves();
                v.extend(b.leaves());
                v
            }
        }
    }

    pub fn parse(text: &str) -> Result<Expr> {
        let toks = tokenize(text)?;
        let mut p = ExprParser { toks, pos: 0 };
        let e = p.sum()?;
        if p.pos != p.toks.len() {
            return Err(Error::ValidationFailed(format!("trailing input in `{text}`")));
        }
        Ok(e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(n) => f.write_str(&fmt_num(n)),
            Expr::Bin(a, op, b) => {
                let side = |e: &Expr| match e {
                    Expr::Num(_) => e.to_string(),
                    _ => format!("({e})"),
                };
                write!(f, "{} {} {}", side(a), op.symbol(), side(b))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Num),
    Op(ArithOp),
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<Tok>> {
    let mut out = vec![];
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c.is_ascii_digit() {
            let mut n: i64 = 0;
            while let Some(d) = chars.peek().and_then(|c| c.to_digit(10)) {
                n = n
                    .checked_mul(10)
                    .and_then(|n| n.checked_add(d as i64))
                    .ok_or_else(|| Error::ValidationFailed("number too large".into()))?;
                chars.next();
            }
            out.push(Tok::Num(Num::from_integer(n)));
        } else if c == '(' {
            chars.next();
            out.push(Tok::Open);
        } else if c == ')' {
            chars.next();
            out.push(Tok::Close);
        } else if let Some(op) = ArithOp::from_symbol(c) {
            chars.next();
            out.push(Tok::Op(op));
        } else {
            return Err(Error::ValidationFailed(format!(
                "unexpected character `{c}` in `{text}`"
            )));
        }
    }
    Ok(out)
}

struct ExprParser {
    toks: Vec<Tok>,
    pos: usize,
}

impl ExprParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn level(&mut self, ops: [ArithOp; 2], next: fn(&mut Self) -> Result<Expr>) -> Result<Expr> {
        let mut e = next(self)?;
        while let Some(Tok::Op(op)) = self.peek() {
            let op = *op;
            if !ops.contains(&op) {
                break;
            }
            self.pos += 1;
            let r = next(self)?;
            e = Expr::Bin(Box::new(e), op, Box::new(r));
        }
        Ok(e)
    }

    fn sum(&mut self) -> Result<Expr> {
        self.level([ArithOp::Add, ArithOp::Sub], Self::product)
    }

    fn product(&mut self) -> Result<Expr> {
        self.level([ArithOp::Mul, ArithOp::Div], Self::atom)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self.peek().cloned();
        self.pos += 1;
        match tok {
            Some(Tok::Num(n)) => Ok(Expr::Num(n)),
            Some(Tok::Open) => {
                let e = self.sum()?;
                if self.peek() != Some(&Tok::Close) {
                    return Err(Error::ValidationFailed("missing `)`".into()));
                }
                self.pos += 1;
                Ok(e)
            }
            other => Err(Error::ValidationFailed(format!(
                "expected a number or `(`, found {other:?}"
            ))),
        }
    }
}

/// Checks `answer` (`expr = 24` or just `expr`) against the input numbers.
/// Returns the normalized `expr = 24` text.
pub fn check_answer(answer: &str, input: &[i64]) -> Result<String> {
    let line = answer
        .lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty())
        .unwrap_or("");
    let line = line
        .strip_prefix("Answer:")
        .or_else(|| line.strip_prefix("answer:"))
        .unwrap_or(line);
    let expr_text = line.split('=').next().unwrap_or("").trim();
    let expr = Expr::parse(expr_text)?;
    let mut used = expr.leaves();
    used.sort();
    let mut wanted: Vec<Num> = input.iter().map(|n| Num::from_integer(*n)).collect();
    wanted.sort();
    if used != wanted {
        return Err(Error::ValidationFailed(format!(
            "`{expr_text}` uses {} instead of {}",
            fmt_nums(&used),
            fmt_nums(&wanted)
        )));
    }
    match expr.eval() {
        Some(v) if v == target() => Ok(format!("{expr_text} = 24")),
        Some(v) => Err(Error::ValidationFailed(format!(
            "`{expr_text}` evaluates to {}",
            fmt_num(&v)
        ))),
        None => Err(Error::ValidationFailed(format!("`{expr_text}` divides by zero"))),
    }
}

/// Rebuilds a single expression from a state's equation history.
pub fn reconstruct(state: &SolveState) -> Option<Expr> {
    let mut pool: Vec<Expr> = state
        .input
        .iter()
        .map(|n| Expr::Num(Num::from_integer(*n)))
        .collect();
    for line in &state.equations {
        let eq = Equation::parse(line)?;
        let take = |pool: &mut Vec<Expr>, v: Num| {
            let i = pool.iter().position(|e| e.eval() == Some(v))?;
            Some(pool.remove(i))
        };
        let a = take(&mut pool, eq.lhs)?;
        let b = take(&mut pool, eq.rhs)?;
        pool.push(Expr::Bin(Box::new(a), eq.op, Box::new(b)));
    }
    (pool.len() == 1).then(|| pool.remove(0))
}

/// Exhaustive search over ordered pairs and operators.
pub fn solve_numbers(nums: &[Num]) -> Option<Expr> {
    let pool: Vec<Expr> = nums.iter().map(|n| Expr::Num(*n)).collect();
    search(pool)
}

fn search(pool: Vec<Expr>) -> Option<Expr> {
    if pool.len() == 1 {
        return (pool[0].eval() == Some(target())).then(|| pool[0].clone());
    }
    let values: Vec<Num> = pool.iter().map(|e| e.eval().expect("pool holds valid exprs")).collect();
    for i in 0..pool.len() {
        for j in 0..pool.len() {
            if i == j {
                continue;
            }
            for op in ArithOp::ALL {
                if op.apply(values[i], values[j]).is_none() {
                    continue;
                }
                let mut next: Vec<Expr> = pool
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != i && *k != j)
                    .map(|(_, e)| e.clone())
                    .collect();
                next.push(Expr::Bin(Box::new(pool[i].clone()), op, Box::new(pool[j].clone())));
                if let Some(found) = search(next) {
                    return Some(found);
                }
            }
        }
    }
    None
}

/// Witness expression reaching 24 from the four numbers, if any.
pub fn brute_solve(numbers: &[i64]) -> Option<String> {
    let nums: Vec<Num> = numbers.iter().map(|n| Num::from_integer(*n)).collect();
    solve_numbers(&nums).map(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: i64) -> Num {
        Num::from_integer(i)
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(&n(8)), "8");
        assert_eq!(fmt_num(&Num::new(10, 6)), "5/3");
        assert_eq!(parse_num("5/3"), Some(Num::new(5, 3)));
        assert_eq!(parse_num("-2"), Some(n(-2)));
        assert_eq!(parse_num("2.5"), Some(Num::new(5, 2)));
        assert_eq!(parse_num("1/0"), None);
    }

    #[test]
    fn equation_round_trip() {
        let e = Equation::parse("13 - 10 = 3 (left: 8 3)").unwrap();
        assert_eq!(e.to_string(), "13 - 10 = 3");
        assert!(e.is_correct());
        let neg = Equation::parse("-2 * 4 = -8").unwrap();
        assert_eq!(neg.lhs, n(-2));
        assert!(!Equation::parse("2 + 2 = 5").unwrap().is_correct());
        assert!(Equation::parse("no equation here").is_none());
    }

    #[test]
    fn state_bookkeeping() {
        let s = SolveState::initial(&[2, 10, 10, 13]).unwrap();
        let s = s.apply(&Equation::parse("10 - 2 = 8").unwrap()).unwrap();
        assert_eq!(s.remaining, vec![n(10), n(13), n(8)]);
        let s = s.apply(&Equation::parse("13 - 10 = 3").unwrap()).unwrap();
        assert_eq!(s.remaining, vec![n(8), n(3)]);
        assert!(s.is_consistent());
        // 7 is not available.
        assert!(s.apply(&Equation::parse("7 + 1 = 8").unwrap()).is_none());
        assert!(SolveState::initial(&[24]).is_err());
    }

    #[test]
    fn reconstruction_matches_worked_example() {
        let mut s = SolveState::initial(&[2, 10, 10, 13]).unwrap();
        for line in ["10 - 2 = 8", "13 - 10 = 3", "8 * 3 = 24"] {
            s = s.apply(&Equation::parse(line).unwrap()).unwrap();
        }
        let e = reconstruct(&s).unwrap();
        assert_eq!(e.to_string(), "(10 - 2) * (13 - 10)");
        assert_eq!(
            check_answer("(10 - 2) * (13 - 10) = 24", &[2, 10, 10, 13]).unwrap(),
            "(10 - 2) * (13 - 10) = 24"
        );
    }

    #[test]
    fn answers_are_checked() {
        let input = [4, 9, 10, 13];
        assert!(check_answer("(13 - 9) * (10 - 4) = 24", &input).is_ok());
        assert!(check_answer("Answer: (13 - 9) * (10 - 4) = 24", &input).is_ok());
        // Right value, wrong numbers.
        assert!(check_answer("4 * 6 = 24", &input).is_err());
        // Right numbers, wrong value.
        assert!(check_answer("4 + 9 + 10 + 13 = 24", &input).is_err());
        assert!(check_answer("(13 - 9 * (10 - 4) = 24", &input).is_err());
    }

    #[test]
    fn precedence() {
        assert_eq!(Expr::parse("2 + 3 * 4").unwrap().eval(), Some(n(14)));
        assert_eq!(Expr::parse("8 / (3 - 8 / 3)").unwrap().eval(), Some(n(24)));
        assert_eq!(Expr::parse("1 / (1 - 1)").unwrap().eval(), None);
    }

    #[test]
    fn brute_force_examples() {
        for nums in [[4, 9, 10, 13], [2, 10, 10, 13], [5, 6, 8, 13], [24, 1, 1, 1], [3, 3, 8, 8]] {
            let w = brute_solve(&nums).unwrap_or_else(|| panic!("{nums:?}"));
            check_answer(&w, &nums).unwrap();
        }
        assert_eq!(brute_solve(&[1, 1, 1, 1]), None);
    }

    #[test]
    fn brute_force_agrees_with_float_search() {
        // Independent float-based search with a tolerance.
        fn float_solvable(xs: Vec<f64>) -> bool {
            if xs.len() == 1 {
                return (xs[0] - 24.0).abs() < 1e-6;
            }
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    if i == j {
                        continue;
                    }
                    let rest: Vec<f64> = (0..xs.len())
                        .filter(|k| *k != i && *k != j)
                        .map(|k| xs[k])
                        .collect();
                    let (a, b) = (xs[i], xs[j]);
                    let mut outs = vec![a + b, a - b, a * b];
                    if b.abs() > 1e-12 {
                        outs.push(a / b);
                    }
                    for o in outs {
                        let mut next = rest.clone();
                        next.push(o);
                        if float_solvable(next) {
                            return true;
                        }
                    }
                }
            }
            false
        }
        for a in 1..=13 {
            for b in (a..=13).step_by(3) {
                for c in (b..=13).step_by(4) {
                    let nums = [a, b, c, 6];
                    let floats = nums.iter().map(|x| *x as f64).collect();
                    assert_eq!(brute_solve(&nums).is_some(), float_solvable(floats), "{nums:?}");
                }
            }
        }
    }
}
