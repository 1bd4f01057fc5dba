//! Hand-assembled bytecode corpus with known ground-truth signatures.

pub mod asm;
