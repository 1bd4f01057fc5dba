//! Type-aware symbolic execution.
//!
//! Runs one public/external function from its entry block with calldata and
//! environment values as free symbols, executing both sides of every branch
//! without feasibility checks and visiting each block at most once per
//! function. The walk's output is the [`TraceFacts`] event log the
//! inference rules consume: calldata reads and copies, masks, sign
//! extensions, byte accesses, comparisons and the bound-check guards in
//! effect when each event happened.

use crate::evm::{opcode, BasicBlock, BlockMap, Instruction, Terminator};
use crate::sym::{self, EnvKind, OpKind, SymExpr};
use ethnum::U256;

/// Comparison operator of a guard or comparison fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpKind {
    Lt,
    Gt,
    Slt,
    Sgt,
}

/// A bound check that fed a JUMPI; facts recorded while the check holds
/// carry its id. `induction` is the varying side, `bound` the limit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardFact {
    pub kind: CmpKind,
    pub induction: SymExpr,
    pub bound: SymExpr,
}

pub type GuardId = usize;

/// CALLDATALOAD event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadFact {
    pub loc: SymExpr,
    pub guards: Vec<GuardId>,
}

/// CALLDATACOPY event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyFact {
    pub dest: SymExpr,
    pub src: SymExpr,
    pub len: SymExpr,
    pub guards: Vec<GuardId>,
}

/// AND against a constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskFact {
    pub operand: SymExpr,
    pub mask: U256,
}

/// SIGNEXTEND with a constant width operand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignExtendFact {
    pub width_byte: U256,
    pub operand: SymExpr,
}

/// Two consecutive ISZERO instructions applied to the same value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsZeroPairFact {
    pub operand: SymExpr,
}

/// Single-byte access: BYTE read or MSTORE8 write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteAccess {
    ByteRead,
    Mstore8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteOpFact {
    pub access: ByteAccess,
    pub operand: SymExpr,
}

/// Arithmetic instruction and its operands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MathFact {
    pub opcode: u8,
    pub operands: Vec<SymExpr>,
}

/// LT/GT/SLT/SGT instruction with both operands, whether or not it became
/// a guard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmpFact {
    pub kind: CmpKind,
    pub lhs: SymExpr,
    pub rhs: SymExpr,
}

/// Everything a function run emits, in recording order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceFacts {
    pub loads: Vec<LoadFact>,
    pub copies: Vec<CopyFact>,
    pub masks: Vec<MaskFact>,
    pub sign_extends: Vec<SignExtendFact>,
    pub iszero_pairs: Vec<IsZeroPairFact>,
    /// Operands of SDIV/SMOD/SLT/SGT.
    pub signed_ops: Vec<SymExpr>,
    pub byte_ops: Vec<ByteOpFact>,
    pub math_ops: Vec<MathFact>,
    pub comparisons: Vec<CmpFact>,
    /// Guard arena; `GuardId`s in the other facts index into it.
    pub guards: Vec<GuardFact>,
    /// Analysis stopped early (path budget); facts are partial.
    pub truncated: bool,
}

impl TraceFacts {
    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
            && self.copies.is_empty()
            && self.masks.is_empty()
            && self.sign_extends.is_empty()
            && self.iszero_pairs.is_empty()
            && self.signed_ops.is_empty()
            && self.byte_ops.is_empty()
            && self.math_ops.is_empty()
            && self.comparisons.is_empty()
    }
}

/// Where a function run starts: the entry block plus the stack the
/// dispatcher walk left behind when it took the matching branch.
#[derive(Debug, Clone, Default)]
pub struct EntryPoint {
    pub block: usize,
    pub stack: Vec<SymExpr>,
}

#[derive(Debug, Clone, Copy)]
pub struct ExecConfig {
    /// Cap on queued paths; exceeding it truncates the analysis.
    pub path_budget: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self { path_budget: 4096 }
    }
}

const STACK_LIMIT: usize = 1024;

// ---------------------------------------------------------------------------
// Machine state
// ---------------------------------------------------------------------------

/// One write to the byte-addressed memory. Reads scan writes newest-first.
#[derive(Debug, Clone, PartialEq, Eq)]
enum MemWrite {
    /// 32-byte MSTORE at a concrete offset.
    Word { at: usize, value: SymExpr },
    /// Single byte from MSTORE8 at a concrete offset.
    Byte { at: usize },
    /// CALLDATACOPY landing at a concrete offset; reads inside translate
    /// back to calldata locations. A symbolic length claims everything
    /// from `at` onward until overwritten.
    Copy {
        at: usize,
        src: SymExpr,
        len: Option<usize>,
    },
    /// A write whose content is unknown (external-call return data etc.).
    Clobber { at: usize, len: Option<usize> },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Memory {
    writes: Vec<MemWrite>,
    /// Set once any write lands at a symbolic offset; untouched reads can
    /// no longer be assumed zero.
    dirty: bool,
}

impl Memory {
    fn store_word(&mut self, at: &SymExpr, value: SymExpr) {
        match at.as_usize() {
            Some(at) => self.writes.push(MemWrite::Word { at, value }),
            None => self.dirty = true,
        }
    }

    fn store_byte(&mut self, at: &SymExpr) {
        match at.as_usize() {
            Some(at) => self.writes.push(MemWrite::Byte { at }),
            None => self.dirty = true,
        }
    }

    fn store_copy(&mut self, at: &SymExpr, src: SymExpr, len: &SymExpr) {
        match at.as_usize() {
            Some(at) => self.writes.push(MemWrite::Copy {
                at,
                src,
                len: len.as_usize(),
            }),
            None => self.dirty = true,
        }
    }

    fn clobber(&mut self, at: &SymExpr, len: &SymExpr) {
        match (at.as_usize(), len.as_usize()) {
            (_, Some(0)) => {}
            (Some(at), len) => self.writes.push(MemWrite::Clobber { at, len }),
            (None, _) => self.dirty = true,
        }
    }

    /// Resolves a 32-byte read. Returns None when the content cannot be
    /// expressed (partial overlaps, clobbered or symbolically-written
    /// regions).
    fn load_word(&self, at: &SymExpr) -> Option<SymExpr> {
        let at = at.as_usize()?;
        for w in self.writes.iter().rev() {
            match w {
                MemWrite::Word { at: wa, value } => {
                    if *wa == at {
                        return Some(value.clone());
                    }
                    if overlaps(at, 32, *wa, Some(32)) {
                        return None;
                    }
                }
                MemWrite::Byte { at: wa } => {
                    if overlaps(at, 32, *wa, Some(1)) {
                        return None;
                    }
                }
                MemWrite::Copy { at: wa, src, len } => {
                    let inside = at >= *wa
                        && match len {
                            Some(l) => at + 32 <= *wa + *l,
                            None => true,
                        };
                    if inside {
                        let delta = SymExpr::constant((at - *wa) as u64);
                        return Some(sym::calldata_word(sym::add(src.clone(), delta)));
                    }
                    if overlaps(at, 32, *wa, *len) {
                        return None;
                    }
                }
                MemWrite::Clobber { at: wa, len } => {
                    if overlaps(at, 32, *wa, *len) {
                        return None;
                    }
                }
            }
        }
        if self.dirty {
            None
        } else {
            Some(SymExpr::Const(U256::ZERO))
        }
    }
}

fn overlaps(a: usize, alen: usize, b: usize, blen: Option<usize>) -> bool {
    match blen {
        Some(blen) => a < b + blen && b < a + alen,
        None => a + alen > b,
    }
}

/// Stack, memory and active guard context of one path.
#[derive(Debug, Clone, Default)]
pub struct MachineState {
    pub stack: Vec<SymExpr>,
    pub memory: Memory,
    pub guards: Vec<GuardId>,
}

impl MachineState {
    pub fn with_stack(stack: Vec<SymExpr>) -> Self {
        Self {
            stack,
            ..Default::default()
        }
    }
}

/// Why a path stopped inside a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepHalt {
    /// STOP/RETURN/REVERT/INVALID/SELFDESTRUCT.
    Terminated,
    /// Stack underflow or overflow; only this path dies.
    StackFault,
    /// JUMP/JUMPI whose target is not a constant valid destination.
    SymbolicTarget,
}

/// Control-flow outcome of executing a whole block.
#[derive(Debug, Clone)]
pub enum BlockExit {
    Halt(StepHalt),
    Jump(usize),
    /// Conditional branch: constant target (if valid), fall-through offset,
    /// and the guard to attach to the side on which the comparison holds.
    Branch {
        target: Option<usize>,
        fallthrough: Option<usize>,
        /// (guard, taken_side_gets_it): with a bare LT-class condition the
        /// guard goes on the taken side; under ISZERO it goes on the
        /// fall-through side.
        guard: Option<(GuardFact, bool)>,
    },
    FallThrough(usize),
}

// ---------------------------------------------------------------------------
// Executor
// ---------------------------------------------------------------------------

pub struct Executor<'a> {
    blocks: &'a BlockMap,
    config: ExecConfig,
    env_counter: u32,
}

impl<'a> Executor<'a> {
    pub fn new(blocks: &'a BlockMap, config: ExecConfig) -> Self {
        Self {
            blocks,
            config,
            env_counter: 0,
        }
    }

    pub fn fresh_env(&mut self, kind: EnvKind) -> SymExpr {
        let n = self.env_counter;
        self.env_counter += 1;
        SymExpr::Env(kind, n)
    }

    /// Runs a function from its entry, both branches of every JUMPI, each
    /// block at most once. The state at first arrival wins; a partial
    /// result carries `truncated = true`.
    pub fn run(&mut self, entry: &EntryPoint) -> TraceFacts {
        let mut facts = TraceFacts::default();
        let mut visited = std::collections::HashSet::new();
        let mut pending: Vec<(usize, MachineState)> = Vec::new();
        let mut queued_total = 0usize;
        pending.push((entry.block, MachineState::with_stack(entry.stack.clone())));

        while let Some((offset, mut state)) = pending.pop() {
            if !visited.insert(offset) {
                continue;
            }
            let block = match self.blocks.get(offset) {
                Some(b) => b,
                None => continue,
            };
            let exit = self.exec_block(block, &mut state, &mut facts);

            let mut over_budget = false;
            let mut queue = |pending: &mut Vec<(usize, MachineState)>, to: usize, st: MachineState| {
                if visited.contains(&to) {
                    return;
                }
                queued_total += 1;
                if queued_total > self.config.path_budget {
                    over_budget = true;
                    return;
                }
                pending.push((to, st));
            };

            match exit {
                BlockExit::Halt(_) => {}
                BlockExit::FallThrough(next) => queue(&mut pending, next, state),
                BlockExit::Jump(target) => queue(&mut pending, target, state),
                BlockExit::Branch {
                    target,
                    fallthrough,
                    guard,
                } => {
                    let gid = guard.as_ref().map(|(g, _)| {
                        facts.guards.push(g.clone());
                        facts.guards.len() - 1
                    });
                    let on_taken = guard.as_ref().map(|(_, t)| *t).unwrap_or(false);
                    if let Some(next) = fallthrough {
                        let mut st = state.clone();
                        if let Some(gid) = gid {
                            if !on_taken {
                                st.guards.push(gid);
                            }
                        }
                        queue(&mut pending, next, st);
                    }
                    if let Some(t) = target {
                        let mut st = state;
                        if let Some(gid) = gid {
                            if on_taken {
                                st.guards.push(gid);
                            }
                        }
                        queue(&mut pending, t, st);
                    }
                }
            }
            if over_budget {
                facts.truncated = true;
                break;
            }
        }
        facts
    }

    /// Executes every instruction of one block against `state`.
    pub fn exec_block(
        &mut self,
        block: &BasicBlock,
        state: &mut MachineState,
        facts: &mut TraceFacts,
    ) -> BlockExit {
        for ins in &block.instructions {
            match self.step(state, ins, facts) {
                Ok(StepOutcome::Next) => {}
                Ok(StepOutcome::Halt) => return BlockExit::Halt(StepHalt::Terminated),
                Ok(StepOutcome::Jump(target)) => {
                    return match target.as_usize() {
                        Some(t) if self.blocks.is_jump_target(t) => BlockExit::Jump(t),
                        _ => BlockExit::Halt(StepHalt::SymbolicTarget),
                    };
                }
                Ok(StepOutcome::JumpI { target, cond }) => {
                    let t = target.as_usize().filter(|t| self.blocks.is_jump_target(*t));
                    let fallthrough = self.blocks.fallthrough(block).map(|b| b.start_offset);
                    return BlockExit::Branch {
                        target: t,
                        fallthrough,
                        guard: guard_from_condition(&cond),
                    };
                }
                Err(StackFault) => return BlockExit::Halt(StepHalt::StackFault),
            }
        }
        match block.terminator {
            Terminator::FallThrough => match self.blocks.fallthrough(block) {
                Some(b) => BlockExit::FallThrough(b.start_offset),
                None => BlockExit::Halt(StepHalt::Terminated),
            },
            _ => BlockExit::Halt(StepHalt::Terminated),
        }
    }

    /// Symbolic semantics of a single instruction.
    pub fn step(
        &mut self,
        state: &mut MachineState,
        ins: &Instruction,
        facts: &mut TraceFacts,
    ) -> Result<StepOutcome, StackFault> {
        use opcode::*;
        let op = ins.opcode;

        if op == PUSH0 || (PUSH1..=PUSH32).contains(&op) {
            let mut v = U256::ZERO;
            for &b in &ins.operand {
                v = (v << 8) | U256::from(b);
            }
            push(state, SymExpr::Const(v))?;
            return Ok(StepOutcome::Next);
        }
        if (0x80..=0x8f).contains(&op) {
            let n = (op - 0x7f) as usize;
            if state.stack.len() < n {
                return Err(StackFault);
            }
            let v = state.stack[state.stack.len() - n].clone();
            push(state, v)?;
            return Ok(StepOutcome::Next);
        }
        if (0x90..=0x9f).contains(&op) {
            let n = (op - 0x8f) as usize;
            let len = state.stack.len();
            if len < n + 1 {
                return Err(StackFault);
            }
            state.stack.swap(len - 1, len - 1 - n);
            return Ok(StepOutcome::Next);
        }
        if (0xa0..=0xa4).contains(&op) {
            let n = 2 + (op - 0xa0) as usize;
            pop_n(state, n)?;
            return Ok(StepOutcome::Next);
        }

        match op {
            STOP => Ok(StepOutcome::Halt),
            RETURN | REVERT => {
                pop_n(state, 2)?;
                Ok(StepOutcome::Halt)
            }
            SELFDESTRUCT => {
                pop_n(state, 1)?;
                Ok(StepOutcome::Halt)
            }
            ADD | SUB | MUL | DIV | SDIV | MOD | SMOD | EXP => {
                let a = pop(state)?;
                let b = pop(state)?;
                facts.math_ops.push(MathFact {
                    opcode: op,
                    operands: vec![a.clone(), b.clone()],
                });
                if op == SDIV || op == SMOD {
                    facts.signed_ops.push(a.clone());
                    facts.signed_ops.push(b.clone());
                }
                let r = match op {
                    ADD => sym::add(a, b),
                    SUB => sym::sub(a, b),
                    MUL => sym::mul(a, b),
                    DIV => sym::div(a, b),
                    SDIV => sym::sdiv(a, b),
                    MOD => sym::umod(a, b),
                    SMOD => sym::smod(a, b),
                    _ => sym::exp(a, b),
                };
                push(state, r)?;
                Ok(StepOutcome::Next)
            }
            ADDMOD | MULMOD => {
                let a = pop(state)?;
                let b = pop(state)?;
                let n = pop(state)?;
                facts.math_ops.push(MathFact {
                    opcode: op,
                    operands: vec![a.clone(), b.clone(), n.clone()],
                });
                let r = if op == ADDMOD {
                    sym::addmod(a, b, n)
                } else {
                    sym::mulmod(a, b, n)
                };
                push(state, r)?;
                Ok(StepOutcome::Next)
            }
            SIGNEXTEND => {
                let b = pop(state)?;
                let x = pop(state)?;
                if let Some(width) = b.as_const() {
                    facts.sign_extends.push(SignExtendFact {
                        width_byte: width,
                        operand: x.clone(),
                    });
                }
                push(state, sym::signextend(b, x))?;
                Ok(StepOutcome::Next)
            }
            LT | GT | SLT | SGT => {
                let a = pop(state)?;
                let b = pop(state)?;
                let kind = match op {
                    LT => CmpKind::Lt,
                    GT => CmpKind::Gt,
                    SLT => CmpKind::Slt,
                    _ => CmpKind::Sgt,
                };
                facts.comparisons.push(CmpFact {
                    kind,
                    lhs: a.clone(),
                    rhs: b.clone(),
                });
                if op == SLT || op == SGT {
                    facts.signed_ops.push(a.clone());
                    facts.signed_ops.push(b.clone());
                }
                let r = match op {
                    LT => sym::lt(a, b),
                    GT => sym::gt(a, b),
                    SLT => sym::slt(a, b),
                    _ => sym::sgt(a, b),
                };
                push(state, r)?;
                Ok(StepOutcome::Next)
            }
            EQ => {
                let a = pop(state)?;
                let b = pop(state)?;
                push(state, sym::eq(a, b))?;
                Ok(StepOutcome::Next)
            }
            ISZERO => {
                let a = pop(state)?;
                if let SymExpr::Op(OpKind::IsZero, inner) = &a {
                    facts.iszero_pairs.push(IsZeroPairFact {
                        operand: inner[0].clone(),
                    });
                }
                push(state, sym::iszero(a))?;
                Ok(StepOutcome::Next)
            }
            AND => {
                let a = pop(state)?;
                let b = pop(state)?;
                match (a.as_const(), b.as_const()) {
                    (Some(m), None) => facts.masks.push(MaskFact {
                        operand: b.clone(),
                        mask: m,
                    }),
                    (None, Some(m)) => facts.masks.push(MaskFact {
                        operand: a.clone(),
                        mask: m,
                    }),
                    _ => {}
                }
                push(state, sym::and(a, b))?;
                Ok(StepOutcome::Next)
            }
            OR | XOR => {
                let a = pop(state)?;
                let b = pop(state)?;
                let r = if op == OR { sym::or(a, b) } else { sym::xor(a, b) };
                push(state, r)?;
                Ok(StepOutcome::Next)
            }
            NOT => {
                let a = pop(state)?;
                push(state, sym::not(a))?;
                Ok(StepOutcome::Next)
            }
            BYTE => {
                let i = pop(state)?;
                let x = pop(state)?;
                facts.byte_ops.push(ByteOpFact {
                    access: ByteAccess::ByteRead,
                    operand: x.clone(),
                });
                push(state, sym::byte(i, x))?;
                Ok(StepOutcome::Next)
            }
            SHL | SHR | SAR => {
                let s = pop(state)?;
                let x = pop(state)?;
                let r = match op {
                    SHL => sym::shl(s, x),
                    SHR => sym::shr(s, x),
                    _ => sym::sar(s, x),
                };
                push(state, r)?;
                Ok(StepOutcome::Next)
            }
            SHA3 => {
                let off = pop(state)?;
                let len = pop(state)?;
                push(state, sym::sha3_range(off, len))?;
                Ok(StepOutcome::Next)
            }
            CALLDATALOAD => {
                let loc = pop(state)?;
                facts.loads.push(LoadFact {
                    loc: loc.clone(),
                    guards: state.guards.clone(),
                });
                push(state, sym::calldata_word(loc))?;
                Ok(StepOutcome::Next)
            }
            CALLDATASIZE => {
                push(state, SymExpr::CalldataSize)?;
                Ok(StepOutcome::Next)
            }
            CALLDATACOPY => {
                let dest = pop(state)?;
                let src = pop(state)?;
                let len = pop(state)?;
                facts.copies.push(CopyFact {
                    dest: dest.clone(),
                    src: src.clone(),
                    len: len.clone(),
                    guards: state.guards.clone(),
                });
                state.memory.store_copy(&dest, src, &len);
                Ok(StepOutcome::Next)
            }
            CODECOPY | RETURNDATACOPY => {
                let dest = pop(state)?;
                let _src = pop(state)?;
                let len = pop(state)?;
                state.memory.clobber(&dest, &len);
                Ok(StepOutcome::Next)
            }
            EXTCODECOPY => {
                let _addr = pop(state)?;
                let dest = pop(state)?;
                let _src = pop(state)?;
                let len = pop(state)?;
                state.memory.clobber(&dest, &len);
                Ok(StepOutcome::Next)
            }
            MLOAD => {
                let at = pop(state)?;
                let v = match state.memory.load_word(&at) {
                    Some(v) => v,
                    None => self.fresh_env(EnvKind::MemUnknown),
                };
                push(state, v)?;
                Ok(StepOutcome::Next)
            }
            MSTORE => {
                let at = pop(state)?;
                let v = pop(state)?;
                state.memory.store_word(&at, v);
                Ok(StepOutcome::Next)
            }
            MSTORE8 => {
                let at = pop(state)?;
                let v = pop(state)?;
                facts.byte_ops.push(ByteOpFact {
                    access: ByteAccess::Mstore8,
                    operand: v,
                });
                state.memory.store_byte(&at);
                Ok(StepOutcome::Next)
            }
            SLOAD => {
                let key = pop(state)?;
                push(state, sym::sload(key))?;
                Ok(StepOutcome::Next)
            }
            SSTORE => {
                pop_n(state, 2)?;
                Ok(StepOutcome::Next)
            }
            JUMP => {
                let target = pop(state)?;
                Ok(StepOutcome::Jump(target))
            }
            JUMPI => {
                let target = pop(state)?;
                let cond = pop(state)?;
                Ok(StepOutcome::JumpI { target, cond })
            }
            JUMPDEST => Ok(StepOutcome::Next),
            POP => {
                pop(state)?;
                Ok(StepOutcome::Next)
            }
            PC => {
                push(state, SymExpr::constant(ins.offset as u64))?;
                Ok(StepOutcome::Next)
            }
            BALANCE | EXTCODESIZE | EXTCODEHASH | BLOCKHASH => {
                pop(state)?;
                let kind = match op {
                    BALANCE => EnvKind::Balance,
                    EXTCODESIZE => EnvKind::ExtCodeSize,
                    EXTCODEHASH => EnvKind::ExtCodeHash,
                    _ => EnvKind::BlockHash,
                };
                let v = self.fresh_env(kind);
                push(state, v)?;
                Ok(StepOutcome::Next)
            }
            ADDRESS | ORIGIN | CALLER | CALLVALUE | GASPRICE | RETURNDATASIZE | COINBASE
            | TIMESTAMP | NUMBER | DIFFICULTY | GASLIMIT | CHAINID | SELFBALANCE | BASEFEE
            | MSIZE | GAS | CODESIZE => {
                let kind = match op {
                    ADDRESS => EnvKind::Address,
                    ORIGIN => EnvKind::Origin,
                    CALLER => EnvKind::Caller,
                    CALLVALUE => EnvKind::CallValue,
                    GASPRICE => EnvKind::GasPrice,
                    RETURNDATASIZE => EnvKind::ReturnDataSize,
                    COINBASE => EnvKind::Coinbase,
                    TIMESTAMP => EnvKind::Timestamp,
                    NUMBER => EnvKind::Number,
                    DIFFICULTY => EnvKind::Difficulty,
                    GASLIMIT => EnvKind::GasLimit,
                    CHAINID => EnvKind::ChainId,
                    SELFBALANCE => EnvKind::SelfBalance,
                    BASEFEE => EnvKind::BaseFee,
                    MSIZE => EnvKind::MSize,
                    GAS => EnvKind::Gas,
                    _ => EnvKind::CodeSize,
                };
                let v = self.fresh_env(kind);
                push(state, v)?;
                Ok(StepOutcome::Next)
            }
            CREATE | CREATE2 => {
                pop_n(state, if op == CREATE { 3 } else { 4 })?;
                let v = self.fresh_env(EnvKind::CallResult);
                push(state, v)?;
                Ok(StepOutcome::Next)
            }
            CALL | CALLCODE => {
                let args = pop_n(state, 7)?;
                state.memory.clobber(&args[5], &args[6]);
                let v = self.fresh_env(EnvKind::CallResult);
                push(state, v)?;
                Ok(StepOutcome::Next)
            }
            DELEGATECALL | STATICCALL => {
                let args = pop_n(state, 6)?;
                state.memory.clobber(&args[4], &args[5]);
                let v = self.fresh_env(EnvKind::CallResult);
                push(state, v)?;
                Ok(StepOutcome::Next)
            }
            // Unassigned opcodes behave like INVALID.
            _ => Ok(StepOutcome::Halt),
        }
    }
}

/// Single-instruction outcome.
#[derive(Debug, Clone)]
pub enum StepOutcome {
    Next,
    Halt,
    Jump(SymExpr),
    JumpI { target: SymExpr, cond: SymExpr },
}

/// Stack underflow or overflow on the current path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackFault;

fn push(state: &mut MachineState, v: SymExpr) -> Result<(), StackFault> {
    if state.stack.len() >= STACK_LIMIT {
        return Err(StackFault);
    }
    state.stack.push(v);
    Ok(())
}

fn pop(state: &mut MachineState) -> Result<SymExpr, StackFault> {
    state.stack.pop().ok_or(StackFault)
}

fn pop_n(state: &mut MachineState, n: usize) -> Result<Vec<SymExpr>, StackFault> {
    if state.stack.len() < n {
        return Err(StackFault);
    }
    Ok((0..n).map(|_| state.stack.pop().unwrap()).collect())
}

/// Derives a guard from a JUMPI condition: an LT/GT/SLT/SGT, possibly under
/// a single ISZERO, with at least one non-constant operand. The boolean is
/// true when the taken branch is the one on which the comparison holds.
pub fn guard_from_condition(cond: &SymExpr) -> Option<(GuardFact, bool)> {
    let (cmp, on_taken) = match cond {
        SymExpr::Op(OpKind::IsZero, inner) => (&inner[0], false),
        other => (other, true),
    };
    if let SymExpr::Op(kind, args) = cmp {
        let cmp_kind = match kind {
            OpKind::Lt => CmpKind::Lt,
            OpKind::Gt => CmpKind::Gt,
            OpKind::Slt => CmpKind::Slt,
            OpKind::Sgt => CmpKind::Sgt,
            _ => return None,
        };
        let (a, b) = (&args[0], &args[1]);
        if a.is_const() && b.is_const() {
            return None;
        }
        // LT/SLT pass when lhs < rhs: the lhs varies, the rhs bounds it.
        // GT/SGT are the mirrored orientation.
        let (induction, bound) = match cmp_kind {
            CmpKind::Lt | CmpKind::Slt => (a.clone(), b.clone()),
            CmpKind::Gt | CmpKind::Sgt => (b.clone(), a.clone()),
        };
        return Some((
            GuardFact {
                kind: cmp_kind,
                induction,
                bound,
            },
            on_taken,
        ));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exec_code(code: &[u8]) -> TraceFacts {
        let blocks = BlockMap::from_bytecode(code);
        let mut ex = Executor::new(&blocks, ExecConfig::default());
        ex.run(&EntryPoint {
            block: 0,
            stack: Vec::new(),
        })
    }

    #[test]
    fn push_pushes_constant() {
        let blocks = BlockMap::from_bytecode(&[0x60, 0x04, 0x00]);
        let mut ex = Executor::new(&blocks, ExecConfig::default());
        let mut st = MachineState::default();
        let mut facts = TraceFacts::default();
        let ins = &blocks.get(0).unwrap().instructions[0];
        ex.step(&mut st, ins, &mut facts).unwrap();
        assert_eq!(st.stack, vec![SymExpr::constant(4)]);
    }

    #[test]
    fn calldataload_of_zero() {
        // PUSH1 0x00; CALLDATALOAD; STOP
        let facts = exec_code(&[0x60, 0x00, 0x35, 0x00]);
        assert_eq!(facts.loads.len(), 1);
        assert_eq!(facts.loads[0].loc, SymExpr::constant(0));
    }

    #[test]
    fn canonical_add_chain() {
        // PUSH1 4; CALLDATALOAD; PUSH1 4; ADD; PUSH1 32; ADD
        let code = [0x60, 0x04, 0x35, 0x60, 0x04, 0x01, 0x60, 0x20, 0x01, 0x50, 0x00];
        let blocks = BlockMap::from_bytecode(&code);
        let mut ex = Executor::new(&blocks, ExecConfig::default());
        let mut st = MachineState::default();
        let mut facts = TraceFacts::default();
        for ins in &blocks.get(0).unwrap().instructions[..6] {
            ex.step(&mut st, ins, &mut facts).unwrap();
        }
        let expected = sym::add(
            sym::calldata_word(SymExpr::constant(4)),
            SymExpr::constant(36),
        );
        assert_eq!(st.stack.last().unwrap(), &expected);
    }

    #[test]
    fn stop_only_function_yields_empty_facts() {
        let facts = exec_code(&[0x00]);
        assert!(facts.is_empty());
    }

    #[test]
    fn symbolic_jump_target_halts_path() {
        // PUSH1 0; CALLDATALOAD; JUMP; JUMPDEST; STOP
        let facts = exec_code(&[0x60, 0x00, 0x35, 0x56, 0x5b, 0x00]);
        assert_eq!(facts.loads.len(), 1);
    }

    #[test]
    fn guard_on_taken_side_for_plain_lt() {
        // if (sload(0) < 2) goto 10; stop. Block at 10 loads calldata[4].
        let code = [
            0x60, 0x02, // PUSH1 2
            0x60, 0x00, 0x54, // PUSH1 0; SLOAD
            0x10, // LT  (sload < 2)
            0x60, 0x0a, // PUSH1 10
            0x57, // JUMPI
            0x00, // STOP          offset 9
            0x5b, // JUMPDEST      offset 10
            0x60, 0x04, 0x35, // PUSH1 4; CALLDATALOAD
            0x00, // STOP
        ];
        let facts = exec_code(&code);
        assert_eq!(facts.loads.len(), 1);
        assert_eq!(facts.loads[0].guards.len(), 1);
        let g = &facts.guards[facts.loads[0].guards[0]];
        assert_eq!(g.kind, CmpKind::Lt);
        assert_eq!(g.bound, SymExpr::constant(2));
        assert_eq!(g.induction, sym::sload(SymExpr::constant(0)));
    }

    #[test]
    fn guard_on_fallthrough_for_iszero_lt() {
        // if (!(sload(0) < 2)) goto 15; fall-through does the load.
        let code = [
            0x60, 0x02, // PUSH1 2
            0x60, 0x00, 0x54, // SLOAD
            0x10, // LT
            0x15, // ISZERO
            0x60, 0x0f, // PUSH1 15
            0x57, // JUMPI
            0x60, 0x04, 0x35, // guarded load   offsets 10..12
            0x50, // POP
            0x00, // STOP           offset 14
            0x5b, 0x00, // JUMPDEST; STOP offset 15
        ];
        let facts = exec_code(&code);
        assert_eq!(facts.loads.len(), 1);
        assert_eq!(facts.loads[0].guards.len(), 1);
    }

    #[test]
    fn mload_translates_copied_region_to_calldata() {
        // CALLDATACOPY(0xa0, 0x24, 0x60); AND(MLOAD(0xc0), 0xff)
        let code = [
            0x60, 0x60, // len
            0x60, 0x24, // src
            0x60, 0xa0, // dest
            0x37, // CALLDATACOPY
            0x60, 0xc0, 0x51, // MLOAD
            0x60, 0xff, 0x16, // AND 0xff
            0x50, 0x00,
        ];
        let facts = exec_code(&code);
        assert_eq!(facts.copies.len(), 1);
        assert_eq!(facts.masks.len(), 1);
        assert_eq!(
            facts.masks[0].operand,
            sym::calldata_word(SymExpr::constant(0x44))
        );
    }

    #[test]
    fn mstore_then_mload_roundtrips() {
        let code = [
            0x60, 0x04, 0x35, // calldata[4]
            0x60, 0x80, 0x52, // MSTORE(0x80, v)
            0x60, 0x80, 0x51, // MLOAD(0x80)
            0x60, 0x01, 0x01, // ADD 1
            0x50, 0x00,
        ];
        let facts = exec_code(&code);
        let cd4 = sym::calldata_word(SymExpr::constant(4));
        assert!(facts
            .math_ops
            .iter()
            .any(|m| m.operands.iter().any(|o| o.contains(&cd4))));
    }

    #[test]
    fn iszero_pair_recorded() {
        let code = [0x60, 0x04, 0x35, 0x15, 0x15, 0x50, 0x00];
        let facts = exec_code(&code);
        assert_eq!(facts.iszero_pairs.len(), 1);
        assert_eq!(
            facts.iszero_pairs[0].operand,
            sym::calldata_word(SymExpr::constant(4))
        );
    }

    #[test]
    fn termination_on_jump_mesh() {
        // Every block conditionally jumps back to offset 0.
        let mut code = vec![0x5b];
        for _ in 0..50 {
            code.extend_from_slice(&[0x60, 0x01, 0x60, 0x00, 0x57]);
        }
        code.push(0x00);
        let facts = exec_code(&code);
        assert!(!facts.truncated);
    }

    #[test]
    fn determinism_identical_bytecode_identical_facts() {
        let code = [
            0x60, 0x04, 0x35, 0x60, 0x04, 0x01, 0x35, 0x60, 0xff, 0x16, 0x50, 0x00,
        ];
        assert_eq!(exec_code(&code), exec_code(&code));
    }

    #[test]
    fn random_bytecode_terminates() {
        let mut seed = 0xace1_2345_6789_0bcdu64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..50 {
            let code: Vec<u8> = (0..200).map(|_| (next() & 0xff) as u8).collect();
            let _ = exec_code(&code);
        }
    }
}
