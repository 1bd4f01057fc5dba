//! Function recognition: walks the dispatch routine symbolically to find
//! every public/external function's 4-byte selector and entry block, and
//! classifies the bytecode's source dialect.
//!
//! The walk uses the same symbolic engine as the function analysis, so
//! reordered and binary-search dispatchers resolve the same way linear
//! ones do: any EQ of the selector expression against a 4-byte constant
//! that feeds a JUMPI is a match edge.

use crate::evm::BlockMap;
use crate::sym::{OpKind, SymExpr};
use crate::tase::{ExecConfig, Executor, MachineState, StepOutcome, TraceFacts};
use ethnum::U256;

/// Compiler family the bytecode came from, per its dispatch prologue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Dialect {
    Solidity,
    Vyper,
}

/// One public/external function found by the dispatcher walk.
#[derive(Debug, Clone)]
pub struct FunctionEntry {
    pub selector: [u8; 4],
    /// Start offset of the function's first block.
    pub entry_block: usize,
    pub dialect: Dialect,
    /// Stack contents at the match branch, used to seed the function run.
    pub entry_stack: Vec<SymExpr>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DispatchError {
    /// No selector comparison exists (e.g. a fallback-only contract).
    /// Signals an empty signature set, not a failed analysis.
    #[error("no dispatch comparison pattern found")]
    NotFound,
}

/// Outcome of walking the dispatch routine once.
struct DispatchWalk {
    entries: Vec<FunctionEntry>,
    /// An MSTORE of a selector-derived value happened before the first
    /// dispatch comparison (R20's Vyper prologue signature).
    selector_mstore_first: bool,
}

/// Classifies the dialect: Vyper stores the selector word to memory before
/// comparing; Solidity keeps it on the stack. Defaults to Solidity.
pub fn detect_dialect(blocks: &BlockMap) -> Dialect {
    if walk_dispatch(blocks).selector_mstore_first {
        Dialect::Vyper
    } else {
        Dialect::Solidity
    }
}

/// Extracts all function entries. The entry block is the JUMPI target when
/// the comparison jumps on equality, and the fall-through block when the
/// comparison is negated (the Vyper shape, which jumps onward on mismatch).
pub fn extract_functions(
    blocks: &BlockMap,
    dialect: Dialect,
) -> Result<Vec<FunctionEntry>, DispatchError> {
    let walk = walk_dispatch(blocks);
    if walk.entries.is_empty() {
        return Err(DispatchError::NotFound);
    }
    Ok(walk
        .entries
        .into_iter()
        .map(|mut e| {
            e.dialect = dialect;
            e
        })
        .collect())
}

fn walk_dispatch(blocks: &BlockMap) -> DispatchWalk {
    let mut out = DispatchWalk {
        entries: Vec::new(),
        selector_mstore_first: false,
    };
    let first = match blocks.first() {
        Some(b) if b.start_offset == 0 => b.start_offset,
        _ => return out,
    };
    let mut ex = Executor::new(blocks, ExecConfig::default());
    let mut facts = TraceFacts::default();
    let mut visited = std::collections::HashSet::new();
    let mut pending: Vec<(usize, MachineState)> = vec![(first, MachineState::default())];
    let mut seen_selectors = std::collections::HashSet::new();
    let mut seen_comparison = false;
    let mut seen_selector_mstore = false;

    while let Some((offset, mut state)) = pending.pop() {
        if !visited.insert(offset) {
            continue;
        }
        let block = match blocks.get(offset) {
            Some(b) => b,
            None => continue,
        };
        let mut exited = false;
        for ins in &block.instructions {
            // Dialect prologue signature: MSTORE whose value derives from
            // the first calldata word, before any dispatch comparison.
            if ins.opcode == crate::evm::opcode::MSTORE && state.stack.len() >= 2 {
                let value = &state.stack[state.stack.len() - 2];
                if value.contains(&load0()) && !seen_comparison {
                    seen_selector_mstore = true;
                }
            }
            match ex.step(&mut state, ins, &mut facts) {
                Ok(StepOutcome::Next) => {}
                Ok(StepOutcome::Halt) | Err(_) => {
                    exited = true;
                    break;
                }
                Ok(StepOutcome::Jump(target)) => {
                    if let Some(t) = target.as_usize() {
                        if blocks.is_jump_target(t) {
                            pending.push((t, state.clone()));
                        }
                    }
                    exited = true;
                    break;
                }
                Ok(StepOutcome::JumpI { target, cond }) => {
                    let t = target.as_usize().filter(|t| blocks.is_jump_target(*t));
                    let fallthrough = blocks.fallthrough(block).map(|b| b.start_offset);
                    match selector_comparison(&cond) {
                        Some((selector, negated)) => {
                            seen_comparison = true;
                            // Match side: taken branch for a plain EQ,
                            // fall-through for ISZERO(EQ).
                            let (match_block, continue_block) =
                                if negated { (fallthrough, t) } else { (t, fallthrough) };
                            if let Some(m) = match_block {
                                if seen_selectors.insert(selector) {
                                    out.entries.push(FunctionEntry {
                                        selector,
                                        entry_block: m,
                                        dialect: Dialect::Solidity,
                                        entry_stack: state.stack.clone(),
                                    });
                                }
                            }
                            if let Some(c) = continue_block {
                                pending.push((c, state.clone()));
                            }
                        }
                        None => {
                            // Not a selector test (calldatasize guard,
                            // binary-search split…): walk both sides.
                            if let Some(next) = fallthrough {
                                pending.push((next, state.clone()));
                            }
                            if let Some(t) = t {
                                pending.push((t, state.clone()));
                            }
                        }
                    }
                    exited = true;
                    break;
                }
            }
        }
        if !exited {
            if let Some(next) = blocks.fallthrough(block) {
                pending.push((next.start_offset, state));
            }
        }
    }
    out.selector_mstore_first = seen_selector_mstore;
    out
}

fn load0() -> SymExpr {
    crate::sym::calldata_word(SymExpr::constant(0))
}

/// Recognizes an EQ (possibly under one ISZERO) between the selector
/// expression and a 4-byte constant. Returns the selector and whether the
/// comparison was negated.
fn selector_comparison(cond: &SymExpr) -> Option<([u8; 4], bool)> {
    let (inner, negated) = match cond {
        SymExpr::Op(OpKind::IsZero, args) => (&args[0], true),
        other => (other, false),
    };
    let SymExpr::Op(OpKind::Eq, args) = inner else {
        return None;
    };
    let (a, b) = (&args[0], &args[1]);
    let (c, expr) = match (a.as_const(), b.as_const()) {
        (Some(c), None) => (c, b),
        (None, Some(c)) => (c, a),
        _ => return None,
    };
    let selector_u32 = if is_shifted_selector(expr) {
        if c > U256::from(u32::MAX) {
            return None;
        }
        c.as_u32()
    } else if is_masked_selector(expr) {
        let low_mask = (U256::ONE << 224) - U256::ONE;
        if c & low_mask != U256::ZERO {
            return None;
        }
        (c >> 224u32).as_u32()
    } else {
        return None;
    };
    Some((selector_u32.to_be_bytes(), negated))
}

/// CALLDATALOAD(0) >> 224 — which DIV by 2^224 also canonicalizes to.
fn is_shifted_selector(e: &SymExpr) -> bool {
    matches!(e, SymExpr::Op(OpKind::Shr, args)
        if args[0] == SymExpr::constant(224) && args[1] == load0())
}

/// CALLDATALOAD(0) masked to its top 4 bytes.
fn is_masked_selector(e: &SymExpr) -> bool {
    let top_mask = U256::from(0xffffffffu32) << 224;
    if let SymExpr::Op(OpKind::And, args) = e {
        let (x, y) = (&args[0], &args[1]);
        return (x.as_const() == Some(top_mask) && *y == load0())
            || (y.as_const() == Some(top_mask) && *x == load0());
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::opcode::*;
    use crate::fixtures::asm::Asm;

    /// Supplementary-material shape: CALLDATALOAD; DIV; PUSH4 id; EQ;
    /// PUSH1 0x55; JUMPI with the entry block padded out to 0x55.
    fn listing17_style() -> Vec<u8> {
        let mut a = Asm::new();
        a.push(0).op(CALLDATALOAD);
        a.push_u256(U256::ONE << 224).op(SWAP1).op(DIV);
        a.push_bytes(&[0x16, 0xd9, 0x3a, 0xde]).op(EQ);
        a.push(0x55);
        a.op(JUMPI);
        a.push(0).op(DUP1).op(REVERT);
        a.pad_to(0x55);
        a.jumpdest("entry");
        a.push(4).op(CALLDATALOAD).op(POP).op(STOP);
        a.build()
    }

    /// Vyper shape: the selector word is computed, stored to memory,
    /// reloaded and compared with ISZERO/JUMPI skipping past the body.
    fn listing18_style() -> Vec<u8> {
        let mut a = Asm::new();
        a.push(0).op(CALLDATALOAD);
        a.push_u256(U256::ONE << 224).op(SWAP1).op(DIV);
        a.push(0).op(MSTORE);
        a.push_bytes(&[0xd1, 0x78, 0x23, 0x1c]);
        a.push(0).op(MLOAD);
        a.op(EQ).op(ISZERO);
        a.push_label("next");
        a.op(JUMPI);
        // entry block: immediately after the JUMPI
        a.push(4).op(CALLDATALOAD).op(POP).op(STOP);
        a.jumpdest("next");
        a.push(0).op(DUP1).op(REVERT);
        a.build()
    }

    #[test]
    fn solidity_listing17_selector_and_entry() {
        let blocks = BlockMap::from_bytecode(&listing17_style());
        let dialect = detect_dialect(&blocks);
        assert_eq!(dialect, Dialect::Solidity);
        let entries = extract_functions(&blocks, dialect).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].selector, [0x16, 0xd9, 0x3a, 0xde]);
        assert_eq!(entries[0].entry_block, 0x55);
    }

    #[test]
    fn vyper_listing18_selector_and_entry() {
        let code = listing18_style();
        let blocks = BlockMap::from_bytecode(&code);
        let dialect = detect_dialect(&blocks);
        assert_eq!(dialect, Dialect::Vyper);
        let entries = extract_functions(&blocks, dialect).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].selector, [0xd1, 0x78, 0x23, 0x1c]);
        // Entry is the block right after the JUMPI, not its target.
        let jumpi_end = blocks
            .iter()
            .find(|b| b.start_offset == 0)
            .unwrap()
            .end_offset();
        assert_eq!(entries[0].entry_block, jumpi_end);
    }

    #[test]
    fn empty_block_list_defaults_to_solidity() {
        let blocks = BlockMap::from_bytecode(&[]);
        assert_eq!(detect_dialect(&blocks), Dialect::Solidity);
    }

    #[test]
    fn single_stop_has_no_dispatch() {
        let blocks = BlockMap::from_bytecode(&[0x00]);
        assert_eq!(
            extract_functions(&blocks, Dialect::Solidity).unwrap_err(),
            DispatchError::NotFound
        );
    }

    #[test]
    fn shr_form_dispatcher_is_recognized() {
        let mut a = Asm::new();
        a.push(0).op(CALLDATALOAD);
        a.push(224).op(SHR);
        a.op(DUP1);
        a.push_bytes(&[0xa9, 0x05, 0x9c, 0xbb]).op(EQ);
        a.push_label("f").op(JUMPI);
        a.push(0).op(DUP1).op(REVERT);
        a.jumpdest("f");
        a.op(STOP);
        let blocks = BlockMap::from_bytecode(&a.build());
        let entries = extract_functions(&blocks, Dialect::Solidity).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].selector, [0xa9, 0x05, 0x9c, 0xbb]);
        // The DUP'd selector word stays on the entry stack.
        assert_eq!(entries[0].entry_stack.len(), 1);
    }

    #[test]
    fn chained_dispatch_finds_all_selectors() {
        // Three selectors compared in sequence, plus a calldatasize guard
        // up front — the non-selector JUMPI must not stop the walk.
        let mut a = Asm::new();
        a.push(4).op(CALLDATASIZE).op(LT);
        a.push_label("fallback").op(JUMPI);
        a.push(0).op(CALLDATALOAD);
        a.push(224).op(SHR);
        for (i, sel) in [[1u8, 2, 3, 4], [5, 6, 7, 8], [9, 10, 11, 12]]
            .iter()
            .enumerate()
        {
            a.op(DUP1);
            a.push_bytes(sel).op(EQ);
            a.push_label(&format!("f{i}"));
            a.op(JUMPI);
        }
        a.jumpdest("fallback");
        a.push(0).op(DUP1).op(REVERT);
        for i in 0..3 {
            a.jumpdest(&format!("f{i}"));
            a.op(STOP);
        }
        let blocks = BlockMap::from_bytecode(&a.build());
        let entries = extract_functions(&blocks, Dialect::Solidity).unwrap();
        let mut sels: Vec<[u8; 4]> = entries.iter().map(|e| e.selector).collect();
        sels.sort();
        assert_eq!(sels, vec![[1, 2, 3, 4], [5, 6, 7, 8], [9, 10, 11, 12]]);
    }

    #[test]
    fn extraction_is_deterministic() {
        let code = listing17_style();
        let blocks = BlockMap::from_bytecode(&code);
        let a = extract_functions(&blocks, Dialect::Solidity).unwrap();
        let b = extract_functions(&blocks, Dialect::Solidity).unwrap();
        let ka: Vec<_> = a.iter().map(|e| (e.selector, e.entry_block)).collect();
        let kb: Vec<_> = b.iter().map(|e| (e.selector, e.entry_block)).collect();
        assert_eq!(ka, kb);
    }
}
