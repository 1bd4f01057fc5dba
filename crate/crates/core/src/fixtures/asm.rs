//! Small EVM assembler for building fixture bytecode: raw opcodes, width-
//! minimal PUSHes and two-byte label references resolved at build time.

use crate::evm::opcode;
use ethnum::U256;
use std::collections::HashMap;

#[derive(Default)]
pub struct Asm {
    bytes: Vec<u8>,
    labels: HashMap<String, usize>,
    // (operand position, label) — always a 2-byte slot
    fixups: Vec<(usize, String)>,
}

impl Asm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn op(&mut self, opcode: u8) -> &mut Self {
        self.bytes.push(opcode);
        self
    }

    pub fn ops(&mut self, opcodes: &[u8]) -> &mut Self {
        self.bytes.extend_from_slice(opcodes);
        self
    }

    /// PUSH with the exact operand bytes given (PUSH1..PUSH32).
    pub fn push_bytes(&mut self, operand: &[u8]) -> &mut Self {
        assert!(!operand.is_empty() && operand.len() <= 32);
        self.bytes.push(0x5f + operand.len() as u8);
        self.bytes.extend_from_slice(operand);
        self
    }

    /// Width-minimal PUSH of an integer (PUSH1 for zero).
    pub fn push(&mut self, v: u64) -> &mut Self {
        let bytes = v.to_be_bytes();
        let skip = bytes.iter().take_while(|&&b| b == 0).count().min(7);
        let operand: Vec<u8> = bytes[skip..].to_vec();
        self.push_bytes(&operand)
    }

    /// Width-minimal PUSH of a 256-bit constant.
    pub fn push_u256(&mut self, v: U256) -> &mut Self {
        let bytes = v.to_be_bytes();
        let skip = bytes.iter().take_while(|&&b| b == 0).count().min(31);
        let operand: Vec<u8> = bytes[skip..].to_vec();
        self.push_bytes(&operand)
    }

    /// PUSH2 of a label's offset, resolved at build time.
    pub fn push_label(&mut self, name: &str) -> &mut Self {
        self.bytes.push(0x61); // PUSH2
        self.fixups.push((self.bytes.len(), name.to_string()));
        self.bytes.extend_from_slice(&[0, 0]);
        self
    }

    /// Defines `name` at the current offset and emits a JUMPDEST.
    pub fn jumpdest(&mut self, name: &str) -> &mut Self {
        let at = self.bytes.len();
        let prev = self.labels.insert(name.to_string(), at);
        assert!(prev.is_none(), "label {name} defined twice");
        self.bytes.push(opcode::JUMPDEST);
        self
    }

    /// Pads with INVALID bytes so the next emitted byte sits at `offset`.
    pub fn pad_to(&mut self, offset: usize) -> &mut Self {
        assert!(offset >= self.bytes.len(), "pad_to would go backwards");
        self.bytes.resize(offset, opcode::INVALID);
        self
    }

    pub fn here(&self) -> usize {
        self.bytes.len()
    }

    pub fn build(self) -> Vec<u8> {
        let mut bytes = self.bytes;
        for (pos, name) in self.fixups {
            let target = *self
                .labels
                .get(&name)
                .unwrap_or_else(|| panic!("undefined label {name}"));
            assert!(target <= u16::MAX as usize);
            bytes[pos] = (target >> 8) as u8;
            bytes[pos + 1] = (target & 0xff) as u8;
        }
        bytes
    }
}
