//! Bytecode decoding and basic-block recovery.
//!
//! Decoding is total: unassigned opcode bytes become INVALID-class
//! instructions and a PUSH whose operand runs past the end of the code is
//! zero-padded to its declared width. Metadata trailers appended by
//! compilers decode as ordinary (unreachable) instructions.

pub mod opcode;

use std::fmt;

/// One decoded EVM instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    /// Byte index into the bytecode.
    pub offset: usize,
    /// Raw opcode byte.
    pub opcode: u8,
    /// Immediate bytes for PUSH1..PUSH32, empty otherwise. Always exactly
    /// `push_width(opcode)` bytes long.
    pub operand: Vec<u8>,
}

impl Instruction {
    /// Encoded length in bytes (1 + operand width).
    pub fn len(&self) -> usize {
        1 + self.operand.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Operand interpreted as a big-endian integer, for PUSH instructions
    /// whose value fits in a usize.
    pub fn operand_usize(&self) -> Option<usize> {
        if self.operand.len() > std::mem::size_of::<usize>() {
            let lead = self.operand.len() - std::mem::size_of::<usize>();
            if self.operand[..lead].iter().any(|&b| b != 0) {
                return None;
            }
        }
        let mut v = 0usize;
        for &b in &self.operand {
            v = v.checked_shl(8)?.checked_add(b as usize)?;
        }
        Some(v)
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match opcode::mnemonic(self.opcode) {
            Some(name) => write!(f, "{}", name)?,
            None => write!(f, "UNKNOWN(0x{:02x})", self.opcode)?,
        }
        if !self.operand.is_empty() {
            write!(f, " 0x{}", hex::encode(&self.operand))?;
        }
        Ok(())
    }
}

/// How a basic block ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminator {
    Jump,
    JumpI,
    Stop,
    Return,
    Revert,
    Invalid,
    SelfDestruct,
    /// The block ends because the next instruction starts a new block (or
    /// the code ends) rather than at a halting instruction.
    FallThrough,
}

/// A maximal straight-line instruction sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub start_offset: usize,
    pub instructions: Vec<Instruction>,
    pub terminator: Terminator,
}

impl BasicBlock {
    /// Byte offset one past the last instruction of the block.
    pub fn end_offset(&self) -> usize {
        self.instructions
            .last()
            .map(|i| i.offset + i.len())
            .unwrap_or(self.start_offset)
    }
}

/// Disassembles raw runtime bytecode. Every input byte is consumed exactly
/// once; decoding never fails.
pub fn decode(bytecode: &[u8]) -> Vec<Instruction> {
    let mut out = Vec::new();
    let mut pc = 0usize;
    while pc < bytecode.len() {
        let op = bytecode[pc];
        let width = opcode::push_width(op);
        let mut operand = Vec::with_capacity(width);
        if width > 0 {
            let avail = bytecode.len().saturating_sub(pc + 1).min(width);
            operand.extend_from_slice(&bytecode[pc + 1..pc + 1 + avail]);
            // Truncated PUSH: pad the missing low-order bytes with zeros,
            // matching mainstream EVM implementations.
            operand.resize(width, 0);
        }
        out.push(Instruction {
            offset: pc,
            opcode: op,
            operand,
        });
        pc += 1 + width;
    }
    out
}

/// Blocks indexed by start offset, with successor lookups used by the
/// symbolic walkers.
#[derive(Debug, Clone, Default)]
pub struct BlockMap {
    blocks: std::collections::BTreeMap<usize, BasicBlock>,
}

impl BlockMap {
    pub fn from_blocks(blocks: Vec<BasicBlock>) -> Self {
        Self {
            blocks: blocks.into_iter().map(|b| (b.start_offset, b)).collect(),
        }
    }

    pub fn from_bytecode(bytecode: &[u8]) -> Self {
        Self::from_blocks(partition_blocks(&decode(bytecode)))
    }

    pub fn get(&self, start: usize) -> Option<&BasicBlock> {
        self.blocks.get(&start)
    }

    /// Block that starts exactly where `block` ends (the fall-through
    /// successor), if any.
    pub fn fallthrough(&self, block: &BasicBlock) -> Option<&BasicBlock> {
        self.blocks.get(&block.end_offset())
    }

    /// True when `target` is a valid jump destination: a block starting
    /// with JUMPDEST.
    pub fn is_jump_target(&self, target: usize) -> bool {
        self.blocks
            .get(&target)
            .map(|b| {
                b.instructions
                    .first()
                    .map(|i| i.opcode == opcode::JUMPDEST)
                    .unwrap_or(false)
            })
            .unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &BasicBlock> {
        self.blocks.values()
    }

    pub fn first(&self) -> Option<&BasicBlock> {
        self.blocks.values().next()
    }
}

/// Partitions decoded instructions into basic blocks. A block starts at
/// instruction 0, after a terminator, or at any JUMPDEST; it ends at a
/// terminator or just before the next boundary.
pub fn partition_blocks(instructions: &[Instruction]) -> Vec<BasicBlock> {
    let mut blocks = Vec::new();
    let mut current: Vec<Instruction> = Vec::new();

    let flush =
        |current: &mut Vec<Instruction>, blocks: &mut Vec<BasicBlock>, term: Terminator| {
            if let Some(first) = current.first() {
                blocks.push(BasicBlock {
                    start_offset: first.offset,
                    instructions: std::mem::take(current),
                    terminator: term,
                });
            }
        };

    for ins in instructions {
        if ins.opcode == opcode::JUMPDEST && !current.is_empty() {
            flush(&mut current, &mut blocks, Terminator::FallThrough);
        }
        let term = match ins.opcode {
            opcode::JUMP => Some(Terminator::Jump),
            opcode::JUMPI => Some(Terminator::JumpI),
            opcode::STOP => Some(Terminator::Stop),
            opcode::RETURN => Some(Terminator::Return),
            opcode::REVERT => Some(Terminator::Revert),
            opcode::INVALID => Some(Terminator::Invalid),
            opcode::SELFDESTRUCT => Some(Terminator::SelfDestruct),
            _ => None,
        };
        current.push(ins.clone());
        if let Some(t) = term {
            flush(&mut current, &mut blocks, t);
        }
    }
    flush(&mut current, &mut blocks, Terminator::FallThrough);
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;
    use opcode::*;

    #[test]
    fn decode_empty_is_empty() {
        assert!(decode(&[]).is_empty());
    }

    #[test]
    fn decode_push1() {
        let ins = decode(&[0x60, 0x55]);
        assert_eq!(ins.len(), 1);
        assert_eq!(ins[0].offset, 0);
        assert_eq!(ins[0].opcode, PUSH1);
        assert_eq!(ins[0].operand, vec![0x55]);
    }

    #[test]
    fn decode_unknown_byte_is_invalid_class() {
        let ins = decode(&[0x0c]);
        assert_eq!(ins.len(), 1);
        assert!(mnemonic(ins[0].opcode).is_none());
    }

    // Independent reference disassembler used as a differential oracle:
    // walks the byte string with nothing shared with `decode` beyond the
    // PUSH-width arithmetic written out longhand.
    fn reference_disasm(code: &[u8]) -> Vec<(usize, u8, Vec<u8>)> {
        let mut res = Vec::new();
        let mut i = 0usize;
        while i < code.len() {
            let b = code[i];
            let imm = if b >= 0x60 && b <= 0x7f {
                (b as usize) - 0x60 + 1
            } else {
                0
            };
            let mut bytes = Vec::new();
            for k in 0..imm {
                bytes.push(*code.get(i + 1 + k).unwrap_or(&0));
            }
            res.push((i, b, bytes));
            i += 1 + imm;
        }
        res
    }

    #[test]
    fn decode_matches_reference_on_random_bytes() {
        let mut seed = 0x1234_5678_9abc_def0u64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..100 {
            let len = (next() % 300) as usize;
            let code: Vec<u8> = (0..len).map(|_| (next() & 0xff) as u8).collect();
            let got: Vec<(usize, u8, Vec<u8>)> = decode(&code)
                .into_iter()
                .map(|i| (i.offset, i.opcode, i.operand))
                .collect();
            assert_eq!(got, reference_disasm(&code));
        }
    }

    #[test]
    fn decode_truncated_push_pads_low_side() {
        // PUSH3 with a single operand byte: remaining width zero-padded.
        let ins = decode(&[0x62, 0x01]);
        assert_eq!(ins.len(), 1);
        assert_eq!(ins[0].operand, vec![0x01, 0x00, 0x00]);
    }

    #[test]
    fn partition_push_jump_jumpdest_stop() {
        let ins = decode(&[0x60, 0x55, JUMP, JUMPDEST, STOP]);
        let blocks = partition_blocks(&ins);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].start_offset, 0);
        assert_eq!(blocks[0].instructions.len(), 2);
        assert_eq!(blocks[0].terminator, Terminator::Jump);
        assert_eq!(blocks[1].start_offset, 3);
        assert_eq!(blocks[1].terminator, Terminator::Stop);
    }

    #[test]
    fn partition_single_stop() {
        let blocks = partition_blocks(&decode(&[STOP]));
        assert_eq!(blocks.len(), 1);
    }

    // Brute-force boundary scan: computes the set of instruction indices
    // that begin a block, independent of partition_blocks' streaming logic.
    fn boundary_oracle(ins: &[Instruction]) -> Vec<usize> {
        let mut starts = Vec::new();
        for (i, cur) in ins.iter().enumerate() {
            let after_term = i > 0 && is_terminator(ins[i - 1].opcode);
            if i == 0 || after_term || cur.opcode == JUMPDEST {
                starts.push(i);
            }
        }
        starts
    }

    #[test]
    fn partition_matches_boundary_oracle_on_random_input() {
        let mut seed = 0xdead_beef_cafe_f00du64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..20 {
            let code: Vec<u8> = (0..400).map(|_| (next() & 0xff) as u8).collect();
            let ins = decode(&code);
            let ins = &ins[..ins.len().min(200)];
            let blocks = partition_blocks(ins);
            let starts: Vec<usize> = {
                let mut idx = 0;
                let mut v = Vec::new();
                for b in &blocks {
                    v.push(idx);
                    idx += b.instructions.len();
                }
                v
            };
            assert_eq!(starts, boundary_oracle(ins));
            // Concatenating all blocks reproduces the decoded sequence.
            let concat: Vec<Instruction> = blocks
                .iter()
                .flat_map(|b| b.instructions.iter().cloned())
                .collect();
            assert_eq!(concat, ins.to_vec());
            assert!(blocks.len() <= ins.len());
        }
    }

    #[test]
    fn decode_is_idempotent_per_instruction() {
        let code = [0x60, 0x04, 0x35, 0x7f, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15,
            16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 0x00];
        for ins in decode(&code) {
            let mut bytes = vec![ins.opcode];
            bytes.extend_from_slice(&ins.operand);
            let again = decode(&bytes);
            assert_eq!(again.len(), 1);
            assert_eq!(again[0].opcode, ins.opcode);
            assert_eq!(again[0].operand, ins.operand);
        }
    }
}
