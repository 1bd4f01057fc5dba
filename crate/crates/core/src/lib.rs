//! Recovers public/external function signatures (4-byte selector plus
//! ordered parameter types) from EVM runtime bytecode by type-aware
//! symbolic execution, and validates transaction calldata against
//! recovered signatures.

pub mod dispatch;
pub mod evm;
pub mod fixtures;
pub mod sym;
pub mod tase;
