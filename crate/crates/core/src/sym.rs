//! Canonical symbolic expressions over calldata and environment symbols.
//!
//! Additions are kept as flattened linear combinations (constant plus
//! coefficient-weighted terms, sorted by a stable key) so that structurally
//! equal expressions compare equal and containment queries reduce to
//! subtree search. All arithmetic is modular over 2^256, matching the EVM.

use ethnum::{I256, U256};
use std::fmt;

/// Source of a free symbol introduced when the executor reads something it
/// cannot know statically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EnvKind {
    Address,
    Balance,
    Origin,
    Caller,
    CallValue,
    GasPrice,
    ExtCodeSize,
    ExtCodeHash,
    ReturnDataSize,
    BlockHash,
    Coinbase,
    Timestamp,
    Number,
    Difficulty,
    GasLimit,
    ChainId,
    SelfBalance,
    BaseFee,
    Pc,
    MSize,
    Gas,
    CodeSize,
    /// Result of a CALL-family instruction or CREATE.
    CallResult,
    /// A word read from memory the executor could not resolve.
    MemUnknown,
    /// Synthetic symbol used by tests and oracles.
    Test,
}

/// Non-linear operators. Operands are canonical; commutative kinds keep
/// their operands sorted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Mul,
    Div,
    SDiv,
    Mod,
    SMod,
    AddMod,
    MulMod,
    Exp,
    SignExtend,
    Lt,
    Gt,
    Slt,
    Sgt,
    Eq,
    IsZero,
    And,
    Or,
    Xor,
    Not,
    Byte,
    Shl,
    Shr,
    Sar,
    Sha3,
    Sload,
}

/// A canonical symbolic 256-bit word.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymExpr {
    Const(U256),
    /// Result of CALLDATALOAD at the given location.
    CalldataWord(Box<SymExpr>),
    CalldataSize,
    /// Free symbol: kind plus a per-function counter for freshness.
    Env(EnvKind, u32),
    /// constant + Σ coeff·term. Invariants: terms non-empty, sorted by
    /// term, coefficients nonzero, no term is a Const or Sum, and a bare
    /// single term with coefficient 1 and constant 0 is unwrapped.
    Sum {
        constant: U256,
        terms: Vec<(U256, SymExpr)>,
    },
    Op(OpKind, Vec<SymExpr>),
}

pub const WORD_ONES: U256 = U256::MAX;

impl SymExpr {
    pub fn constant(v: u64) -> Self {
        SymExpr::Const(U256::from(v))
    }

    pub fn as_const(&self) -> Option<U256> {
        match self {
            SymExpr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, SymExpr::Const(_))
    }

    /// Constant value as usize when it fits.
    pub fn as_usize(&self) -> Option<usize> {
        let c = self.as_const()?;
        if c > U256::from(usize::MAX as u64) {
            None
        } else {
            Some(c.as_usize())
        }
    }

    /// Subtree search on canonical form: the paper's "contains" relation.
    pub fn contains(&self, needle: &SymExpr) -> bool {
        if self == needle {
            return true;
        }
        match self {
            SymExpr::Const(_) | SymExpr::CalldataSize | SymExpr::Env(..) => false,
            SymExpr::CalldataWord(loc) => loc.contains(needle),
            SymExpr::Sum { terms, .. } => terms.iter().any(|(_, t)| t.contains(needle)),
            SymExpr::Op(_, args) => args.iter().any(|a| a.contains(needle)),
        }
    }

    /// True when `needle` appears as an addend of this expression (the
    /// "offset +" shape): either the expression is the needle itself or a
    /// top-level sum term equals it.
    pub fn has_summand(&self, needle: &SymExpr) -> bool {
        if self == needle {
            return true;
        }
        match self {
            SymExpr::Sum { terms, .. } => terms.iter().any(|(_, t)| t == needle),
            _ => false,
        }
    }

    /// True when the expression carries a multiplication by 32: some
    /// top-level term has a coefficient divisible by 32. Divisibility
    /// survives mod-2^256 negation, so subtracted terms count too.
    pub fn has_mul_of_32(&self) -> bool {
        match self {
            SymExpr::Sum { terms, .. } => terms
                .iter()
                .any(|(c, _)| *c != U256::ZERO && *c % U256::from(32u8) == U256::ZERO),
            _ => false,
        }
    }

    /// All CALLDATALOAD locations appearing anywhere inside the expression.
    pub fn calldata_sources(&self) -> Vec<&SymExpr> {
        let mut out = Vec::new();
        self.collect_sources(&mut out);
        out
    }

    fn collect_sources<'a>(&'a self, out: &mut Vec<&'a SymExpr>) {
        match self {
            SymExpr::CalldataWord(loc) => {
                out.push(loc);
                loc.collect_sources(out);
            }
            SymExpr::Sum { terms, .. } => {
                for (_, t) in terms {
                    t.collect_sources(out);
                }
            }
            SymExpr::Op(_, args) => {
                for a in args {
                    a.collect_sources(out);
                }
            }
            _ => {}
        }
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymExpr::Const(c) => {
                if *c <= U256::from(0xffffu32) {
                    write!(f, "{}", c)
                } else {
                    write!(f, "0x{:x}", c)
                }
            }
            SymExpr::CalldataWord(loc) => write!(f, "calldata[{}]", loc),
            SymExpr::CalldataSize => write!(f, "calldatasize"),
            SymExpr::Env(kind, n) => write!(f, "{:?}#{}", kind, n),
            SymExpr::Sum { constant, terms } => {
                let mut first = true;
                if *constant != U256::ZERO || terms.is_empty() {
                    write!(f, "{}", constant)?;
                    first = false;
                }
                for (c, t) in terms {
                    if !first {
                        write!(f, " + ")?;
                    }
                    first = false;
                    if *c == U256::ONE {
                        write!(f, "{}", t)?;
                    } else {
                        write!(f, "{}*{}", c, t)?;
                    }
                }
                Ok(())
            }
            SymExpr::Op(kind, args) => {
                write!(f, "{:?}(", kind)?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", a)?;
                }
                write!(f, ")")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Smart constructors. Each returns a canonical expression.
// ---------------------------------------------------------------------------

fn into_linear(e: SymExpr) -> (U256, Vec<(U256, SymExpr)>) {
    match e {
        SymExpr::Const(c) => (c, Vec::new()),
        SymExpr::Sum { constant, terms } => (constant, terms),
        other => (U256::ZERO, vec![(U256::ONE, other)]),
    }
}

fn rebuild_sum(constant: U256, mut terms: Vec<(U256, SymExpr)>) -> SymExpr {
    terms.retain(|(c, _)| *c != U256::ZERO);
    terms.sort_by(|a, b| a.1.cmp(&b.1));
    // Merge equal terms.
    let mut merged: Vec<(U256, SymExpr)> = Vec::with_capacity(terms.len());
    for (c, t) in terms {
        if let Some(last) = merged.last_mut() {
            if last.1 == t {
                last.0 = last.0.wrapping_add(c);
                continue;
            }
        }
        merged.push((c, t));
    }
    merged.retain(|(c, _)| *c != U256::ZERO);
    if merged.is_empty() {
        SymExpr::Const(constant)
    } else if merged.len() == 1 && constant == U256::ZERO && merged[0].0 == U256::ONE {
        merged.pop().unwrap().1
    } else {
        SymExpr::Sum {
            constant,
            terms: merged,
        }
    }
}

pub fn add(a: SymExpr, b: SymExpr) -> SymExpr {
    let (ca, mut ta) = into_linear(a);
    let (cb, tb) = into_linear(b);
    ta.extend(tb);
    rebuild_sum(ca.wrapping_add(cb), ta)
}

pub fn sub(a: SymExpr, b: SymExpr) -> SymExpr {
    add(a, mul(SymExpr::Const(WORD_ONES), b))
}

pub fn mul(a: SymExpr, b: SymExpr) -> SymExpr {
    match (a, b) {
        (SymExpr::Const(x), SymExpr::Const(y)) => SymExpr::Const(x.wrapping_mul(y)),
        (SymExpr::Const(c), other) | (other, SymExpr::Const(c)) => {
            if c == U256::ZERO {
                return SymExpr::Const(U256::ZERO);
            }
            if c == U256::ONE {
                return other;
            }
            let (k, terms) = into_linear(other);
            let scaled = terms
                .into_iter()
                .map(|(co, t)| (co.wrapping_mul(c), t))
                .collect();
            rebuild_sum(k.wrapping_mul(c), scaled)
        }
        (x, y) => {
            let mut args = vec![x, y];
            args.sort();
            SymExpr::Op(OpKind::Mul, args)
        }
    }
}

pub fn div(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return SymExpr::Const(if y == U256::ZERO { U256::ZERO } else { x / y });
    }
    // Unsigned division by a power of two is a right shift; normalizing
    // here lets the selector recognizer handle DIV- and SHR-based
    // dispatchers with one shape.
    if let Some(y) = b.as_const() {
        if y != U256::ZERO && (y & y.wrapping_sub(U256::ONE)) == U256::ZERO {
            let k = 255 - y.leading_zeros();
            return shr(SymExpr::Const(U256::from(k as u64)), a);
        }
    }
    SymExpr::Op(OpKind::Div, vec![a, b])
}

pub fn sdiv(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return SymExpr::Const(eval_sdiv(x, y));
    }
    SymExpr::Op(OpKind::SDiv, vec![a, b])
}

pub fn umod(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return SymExpr::Const(if y == U256::ZERO { U256::ZERO } else { x % y });
    }
    SymExpr::Op(OpKind::Mod, vec![a, b])
}

pub fn smod(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return SymExpr::Const(eval_smod(x, y));
    }
    SymExpr::Op(OpKind::SMod, vec![a, b])
}

pub fn addmod(a: SymExpr, b: SymExpr, n: SymExpr) -> SymExpr {
    if let (Some(x), Some(y), Some(m)) = (a.as_const(), b.as_const(), n.as_const()) {
        return SymExpr::Const(eval_addmod(x, y, m));
    }
    SymExpr::Op(OpKind::AddMod, vec![a, b, n])
}

pub fn mulmod(a: SymExpr, b: SymExpr, n: SymExpr) -> SymExpr {
    if let (Some(x), Some(y), Some(m)) = (a.as_const(), b.as_const(), n.as_const()) {
        return SymExpr::Const(eval_mulmod(x, y, m));
    }
    SymExpr::Op(OpKind::MulMod, vec![a, b, n])
}

pub fn exp(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return SymExpr::Const(eval_exp(x, y));
    }
    SymExpr::Op(OpKind::Exp, vec![a, b])
}

pub fn signextend(b: SymExpr, x: SymExpr) -> SymExpr {
    if let (Some(bv), Some(xv)) = (b.as_const(), x.as_const()) {
        return SymExpr::Const(eval_signextend(bv, xv));
    }
    SymExpr::Op(OpKind::SignExtend, vec![b, x])
}

fn bool_const(v: bool) -> SymExpr {
    SymExpr::Const(if v { U256::ONE } else { U256::ZERO })
}

pub fn lt(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return bool_const(x < y);
    }
    SymExpr::Op(OpKind::Lt, vec![a, b])
}

pub fn gt(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return bool_const(x > y);
    }
    SymExpr::Op(OpKind::Gt, vec![a, b])
}

pub fn slt(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return bool_const(x.as_i256() < y.as_i256());
    }
    SymExpr::Op(OpKind::Slt, vec![a, b])
}

pub fn sgt(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return bool_const(x.as_i256() > y.as_i256());
    }
    SymExpr::Op(OpKind::Sgt, vec![a, b])
}

pub fn eq(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return bool_const(x == y);
    }
    if a == b {
        return bool_const(true);
    }
    let mut args = vec![a, b];
    args.sort();
    SymExpr::Op(OpKind::Eq, args)
}

pub fn iszero(a: SymExpr) -> SymExpr {
    if let Some(x) = a.as_const() {
        return bool_const(x == U256::ZERO);
    }
    SymExpr::Op(OpKind::IsZero, vec![a])
}

pub fn and(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return SymExpr::Const(x & y);
    }
    match (&a, &b) {
        (SymExpr::Const(c), _) if *c == U256::ZERO => return SymExpr::Const(U256::ZERO),
        (_, SymExpr::Const(c)) if *c == U256::ZERO => return SymExpr::Const(U256::ZERO),
        _ => {}
    }
    let mut args = vec![a, b];
    args.sort();
    SymExpr::Op(OpKind::And, args)
}

pub fn or(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return SymExpr::Const(x | y);
    }
    let mut args = vec![a, b];
    args.sort();
    SymExpr::Op(OpKind::Or, args)
}

pub fn xor(a: SymExpr, b: SymExpr) -> SymExpr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return SymExpr::Const(x ^ y);
    }
    if a == b {
        return SymExpr::Const(U256::ZERO);
    }
    let mut args = vec![a, b];
    args.sort();
    SymExpr::Op(OpKind::Xor, args)
}

pub fn not(a: SymExpr) -> SymExpr {
    if let Some(x) = a.as_const() {
        return SymExpr::Const(!x);
    }
    SymExpr::Op(OpKind::Not, vec![a])
}

pub fn byte(i: SymExpr, x: SymExpr) -> SymExpr {
    if let (Some(iv), Some(xv)) = (i.as_const(), x.as_const()) {
        return SymExpr::Const(eval_byte(iv, xv));
    }
    SymExpr::Op(OpKind::Byte, vec![i, x])
}

pub fn shl(shift: SymExpr, x: SymExpr) -> SymExpr {
    if let (Some(s), Some(v)) = (shift.as_const(), x.as_const()) {
        return SymExpr::Const(eval_shl(s, v));
    }
    SymExpr::Op(OpKind::Shl, vec![shift, x])
}

pub fn shr(shift: SymExpr, x: SymExpr) -> SymExpr {
    if let (Some(s), Some(v)) = (shift.as_const(), x.as_const()) {
        return SymExpr::Const(eval_shr(s, v));
    }
    SymExpr::Op(OpKind::Shr, vec![shift, x])
}

pub fn sar(shift: SymExpr, x: SymExpr) -> SymExpr {
    if let (Some(s), Some(v)) = (shift.as_const(), x.as_const()) {
        return SymExpr::Const(eval_sar(s, v));
    }
    SymExpr::Op(OpKind::Sar, vec![shift, x])
}

pub fn sha3_range(offset: SymExpr, len: SymExpr) -> SymExpr {
    SymExpr::Op(OpKind::Sha3, vec![offset, len])
}

pub fn sload(key: SymExpr) -> SymExpr {
    SymExpr::Op(OpKind::Sload, vec![key])
}

pub fn calldata_word(loc: SymExpr) -> SymExpr {
    SymExpr::CalldataWord(Box::new(loc))
}

// ---------------------------------------------------------------------------
// Concrete EVM word semantics, shared by the constructors and the evaluator.
// ---------------------------------------------------------------------------

pub fn eval_sdiv(x: U256, y: U256) -> U256 {
    if y == U256::ZERO {
        return U256::ZERO;
    }
    let (sx, sy) = (x.as_i256(), y.as_i256());
    if sx == I256::MIN && sy == -I256::ONE {
        return x; // overflow case defined as identity
    }
    sx.wrapping_div(sy).as_u256()
}

pub fn eval_smod(x: U256, y: U256) -> U256 {
    if y == U256::ZERO {
        return U256::ZERO;
    }
    let (sx, sy) = (x.as_i256(), y.as_i256());
    if sx == I256::MIN && sy == -I256::ONE {
        return U256::ZERO;
    }
    sx.wrapping_rem(sy).as_u256()
}

pub fn eval_addmod(x: U256, y: U256, m: U256) -> U256 {
    if m == U256::ZERO {
        return U256::ZERO;
    }
    // Sum can exceed 2^256: do it in halves via carry tracking.
    let (lo, carry) = x.overflowing_add(y);
    if !carry {
        return lo % m;
    }
    // (2^256 + lo) mod m = ((2^256-1) mod m + 1 + lo mod m) mod m
    let wrap = (U256::MAX % m).wrapping_add(U256::ONE) % m;
    (wrap.wrapping_add(lo % m)) % m
}

pub fn eval_mulmod(x: U256, y: U256, m: U256) -> U256 {
    if m == U256::ZERO {
        return U256::ZERO;
    }
    // Schoolbook double-and-add to keep everything inside 256 bits.
    let mut acc = U256::ZERO;
    let mut base = x % m;
    let mut e = y;
    while e != U256::ZERO {
        if e & U256::ONE == U256::ONE {
            acc = eval_addmod(acc, base, m);
        }
        base = eval_addmod(base, base, m);
        e >>= 1;
    }
    acc
}

pub fn eval_exp(x: U256, y: U256) -> U256 {
    let mut acc = U256::ONE;
    let mut base = x;
    let mut e = y;
    while e != U256::ZERO {
        if e & U256::ONE == U256::ONE {
            acc = acc.wrapping_mul(base);
        }
        base = base.wrapping_mul(base);
        e >>= 1;
    }
    acc
}

pub fn eval_signextend(b: U256, x: U256) -> U256 {
    if b >= U256::from(32u8) {
        return x;
    }
    let bit = b.as_usize() * 8 + 7;
    let mask = if bit >= 255 {
        U256::MAX
    } else {
        (U256::ONE << (bit + 1)).wrapping_sub(U256::ONE)
    };
    if (x >> bit) & U256::ONE == U256::ONE {
        x | !mask
    } else {
        x & mask
    }
}

pub fn eval_byte(i: U256, x: U256) -> U256 {
    if i >= U256::from(32u8) {
        return U256::ZERO;
    }
    (x >> (8 * (31 - i.as_usize()))) & U256::from(0xffu8)
}

pub fn eval_shl(s: U256, v: U256) -> U256 {
    if s >= U256::from(256u32) {
        U256::ZERO
    } else {
        v << s.as_usize()
    }
}

pub fn eval_shr(s: U256, v: U256) -> U256 {
    if s >= U256::from(256u32) {
        U256::ZERO
    } else {
        v >> s.as_usize()
    }
}

pub fn eval_sar(s: U256, v: U256) -> U256 {
    let negative = v.as_i256() < I256::ZERO;
    if s >= U256::from(256u32) {
        return if negative { U256::MAX } else { U256::ZERO };
    }
    (v.as_i256() >> s.as_usize()).as_u256()
}

/// Evaluates an expression under a concrete assignment of atoms. Used by
/// the canonicalization-soundness tests; CalldataWord atoms are resolved by
/// the `calldata` callback over the evaluated location.
pub fn eval<F, G>(e: &SymExpr, atom: &F, calldata: &G) -> U256
where
    F: Fn(EnvKind, u32) -> U256,
    G: Fn(U256) -> U256,
{
    match e {
        SymExpr::Const(c) => *c,
        SymExpr::CalldataSize => atom(EnvKind::Test, u32::MAX),
        SymExpr::Env(k, n) => atom(*k, *n),
        SymExpr::CalldataWord(loc) => calldata(eval(loc, atom, calldata)),
        SymExpr::Sum { constant, terms } => {
            let mut acc = *constant;
            for (c, t) in terms {
                acc = acc.wrapping_add(c.wrapping_mul(eval(t, atom, calldata)));
            }
            acc
        }
        SymExpr::Op(kind, args) => {
            let v: Vec<U256> = args.iter().map(|a| eval(a, atom, calldata)).collect();
            match kind {
                OpKind::Mul => v[0].wrapping_mul(v[1]),
                OpKind::Div => {
                    if v[1] == U256::ZERO {
                        U256::ZERO
                    } else {
                        v[0] / v[1]
                    }
                }
                OpKind::SDiv => eval_sdiv(v[0], v[1]),
                OpKind::Mod => {
                    if v[1] == U256::ZERO {
                        U256::ZERO
                    } else {
                        v[0] % v[1]
                    }
                }
                OpKind::SMod => eval_smod(v[0], v[1]),
                OpKind::AddMod => eval_addmod(v[0], v[1], v[2]),
                OpKind::MulMod => eval_mulmod(v[0], v[1], v[2]),
                OpKind::Exp => eval_exp(v[0], v[1]),
                OpKind::SignExtend => eval_signextend(v[0], v[1]),
                OpKind::Lt => U256::from((v[0] < v[1]) as u8),
                OpKind::Gt => U256::from((v[0] > v[1]) as u8),
                OpKind::Slt => U256::from((v[0].as_i256() < v[1].as_i256()) as u8),
                OpKind::Sgt => U256::from((v[0].as_i256() > v[1].as_i256()) as u8),
                OpKind::Eq => U256::from((v[0] == v[1]) as u8),
                OpKind::IsZero => U256::from((v[0] == U256::ZERO) as u8),
                OpKind::And => v[0] & v[1],
                OpKind::Or => v[0] | v[1],
                OpKind::Xor => v[0] ^ v[1],
                OpKind::Not => !v[0],
                OpKind::Byte => eval_byte(v[0], v[1]),
                OpKind::Shl => eval_shl(v[0], v[1]),
                OpKind::Shr => eval_shr(v[0], v[1]),
                OpKind::Sar => eval_sar(v[0], v[1]),
                // Opaque families: deterministic mixing of the operands so
                // equal ranges evaluate equal.
                OpKind::Sha3 | OpKind::Sload => {
                    let mut acc = U256::from(0x9e3779b97f4a7c15u64);
                    for x in v {
                        acc = acc
                            .wrapping_mul(U256::from(0x100000001b3u64))
                            .wrapping_add(x);
                    }
                    acc
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(i: u32) -> SymExpr {
        SymExpr::Env(EnvKind::Test, i)
    }

    #[test]
    fn add_flattens_and_folds() {
        // calldata[4] + 4 + 32 == calldata[4] + 36
        let x = calldata_word(SymExpr::constant(4));
        let e = add(add(x.clone(), SymExpr::constant(4)), SymExpr::constant(32));
        assert_eq!(
            e,
            SymExpr::Sum {
                constant: U256::from(36u8),
                terms: vec![(U256::ONE, x)],
            }
        );
    }

    #[test]
    fn commuted_sums_are_structurally_equal() {
        let (a, b, c) = (atom(0), atom(1), atom(2));
        let l = add(add(a.clone(), b.clone()), c.clone());
        let r = add(c, add(b, a));
        assert_eq!(l, r);
    }

    #[test]
    fn sub_cancels() {
        let a = atom(7);
        assert_eq!(sub(a.clone(), a), SymExpr::Const(U256::ZERO));
    }

    #[test]
    fn mul_by_const_distributes() {
        let (i, j) = (atom(0), atom(1));
        // (3i + j) * 32 == 96i + 32j
        let flat = mul(
            add(mul(SymExpr::constant(3), i.clone()), j.clone()),
            SymExpr::constant(32),
        );
        assert!(flat.has_mul_of_32());
        let expected = add(
            mul(SymExpr::constant(96), i),
            mul(SymExpr::constant(32), j),
        );
        assert_eq!(flat, expected);
    }

    #[test]
    fn div_by_power_of_two_becomes_shift() {
        let x = calldata_word(SymExpr::constant(0));
        let d = div(x.clone(), SymExpr::Const(U256::ONE << 224));
        assert_eq!(d, SymExpr::Op(OpKind::Shr, vec![SymExpr::constant(224), x]));
    }

    #[test]
    fn summand_and_mul32_queries() {
        let x = calldata_word(SymExpr::constant(4));
        let i = atom(0);
        let loc = add(
            add(x.clone(), SymExpr::constant(36)),
            mul(SymExpr::constant(32), i),
        );
        assert!(loc.has_summand(&x));
        assert!(loc.has_mul_of_32());
        assert!(!loc.has_summand(&atom(9)));
        let plain = add(SymExpr::constant(4), mul(SymExpr::constant(96), atom(1)));
        assert!(!plain.has_summand(&x));
        assert!(plain.has_mul_of_32());
    }

    #[test]
    fn signextend_constant_semantics() {
        // Hand-encoded cases: byte index 0 extends an int8.
        let v = U256::from(0x80u8);
        assert_eq!(eval_signextend(U256::ZERO, v), !U256::from(0x7fu8));
        assert_eq!(eval_signextend(U256::ZERO, U256::from(0x7fu8)), U256::from(0x7fu8));
        assert_eq!(eval_signextend(U256::from(31u8), v), v);
    }

    // Randomized linear-algebra oracle: builds trees from {add, sub,
    // const-mul} over atoms, accumulates coefficients per atom through an
    // independent recursive pass, and compares against the canonical Sum.
    enum Tree {
        Atom(u32),
        Const(u64),
        Add(Box<Tree>, Box<Tree>),
        Sub(Box<Tree>, Box<Tree>),
        MulC(u64, Box<Tree>),
    }

    fn build(t: &Tree) -> SymExpr {
        match t {
            Tree::Atom(i) => atom(*i),
            Tree::Const(c) => SymExpr::constant(*c),
            Tree::Add(a, b) => add(build(a), build(b)),
            Tree::Sub(a, b) => sub(build(a), build(b)),
            Tree::MulC(c, a) => mul(SymExpr::constant(*c), build(a)),
        }
    }

    fn accumulate(t: &Tree, scale: U256, consts: &mut U256, coeffs: &mut [U256; 8]) {
        match t {
            Tree::Atom(i) => coeffs[*i as usize] = coeffs[*i as usize].wrapping_add(scale),
            Tree::Const(c) => *consts = consts.wrapping_add(scale.wrapping_mul(U256::from(*c))),
            Tree::Add(a, b) => {
                accumulate(a, scale, consts, coeffs);
                accumulate(b, scale, consts, coeffs);
            }
            Tree::Sub(a, b) => {
                accumulate(a, scale, consts, coeffs);
                accumulate(b, scale.wrapping_mul(U256::MAX), consts, coeffs);
            }
            Tree::MulC(c, a) => accumulate(a, scale.wrapping_mul(U256::from(*c)), consts, coeffs),
        }
    }

    fn random_tree(next: &mut impl FnMut() -> u64, depth: u32) -> Tree {
        if depth == 0 || next() % 4 == 0 {
            if next() % 2 == 0 {
                Tree::Atom((next() % 8) as u32)
            } else {
                Tree::Const(next() % 1000)
            }
        } else {
            match next() % 3 {
                0 => Tree::Add(
                    Box::new(random_tree(next, depth - 1)),
                    Box::new(random_tree(next, depth - 1)),
                ),
                1 => Tree::Sub(
                    Box::new(random_tree(next, depth - 1)),
                    Box::new(random_tree(next, depth - 1)),
                ),
                _ => Tree::MulC(next() % 64, Box::new(random_tree(next, depth - 1))),
            }
        }
    }

    #[test]
    fn canonicalization_matches_term_multiset_oracle() {
        let mut seed = 0x0123_4567_89ab_cdefu64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..1000 {
            let tree = random_tree(&mut next, 5);
            let canon = build(&tree);
            let mut consts = U256::ZERO;
            let mut coeffs = [U256::ZERO; 8];
            accumulate(&tree, U256::ONE, &mut consts, &mut coeffs);
            let mut terms: Vec<(U256, SymExpr)> = coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != U256::ZERO)
                .map(|(i, c)| (*c, atom(i as u32)))
                .collect();
            terms.sort_by(|a, b| a.1.cmp(&b.1));
            let expected = if terms.is_empty() {
                SymExpr::Const(consts)
            } else if terms.len() == 1 && consts == U256::ZERO && terms[0].0 == U256::ONE {
                terms[0].1.clone()
            } else {
                SymExpr::Sum {
                    constant: consts,
                    terms,
                }
            };
            assert_eq!(canon, expected);
        }
    }
}
