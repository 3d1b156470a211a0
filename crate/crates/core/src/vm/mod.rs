//! Deterministic stack VM with an EXCALL instruction.

pub mod abi;
mod asm;
mod exec;
pub mod opcode;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{put_bytes, put_u32, Decode, DecodeError, Encode, Reader};
pub use asm::{assemble, disassemble, AssembleError};
pub use exec::{
    check_tuple, execute, BlockEnv, ExcallPort, ExcallSource, ExecContext, ExecFault, ExecLimits, ExecMode,
    ExecOutcome, NonceSource, PortError, TupleFault,
};
use opcode::{decode_at, Instr, HEADER};

/// Maximum bytecode size.
pub const MAX_CODE_LEN: usize = 24 * 1024;

pub const DEFAULT_STEP_LIMIT: u64 = 100_000;
pub const DEFAULT_MAX_EXCALLS: u32 = 8;
pub const MAX_STACK: usize = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("bytecode is {0} bytes, limit is {MAX_CODE_LEN}")]
    TooLarge(usize),
    #[error("missing bytecode header")]
    BadHeader,
    #[error("invalid instruction at offset {offset}: {detail}")]
    BadInstruction { offset: usize, detail: String },
    #[error("jump target {target} at offset {offset} is not an instruction boundary")]
    BadJumpTarget { offset: usize, target: u16 },
    #[error("entry point {offset} is not an instruction boundary")]
    BadEntry { offset: u16 },
}

/// Validated bytecode plus its selector → offset dispatch table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ContractProgram {
    bytecode: Vec<u8>,
    entries: BTreeMap<[u8; 4], u16>,
}

impl ContractProgram {
    pub fn new(bytecode: Vec<u8>, entries: BTreeMap<[u8; 4], u16>) -> Result<Self, ProgramError> {
        let p = ContractProgram { bytecode, entries };
        p.validate()?;
        Ok(p)
    }

    pub fn bytecode(&self) -> &[u8] {
        &self.bytecode
    }

    pub fn entries(&self) -> &BTreeMap<[u8; 4], u16> {
        &self.entries
    }

    pub fn entry(&self, selector: &[u8; 4]) -> Option<usize> {
        self.entries.get(selector).map(|o| *o as usize)
    }

    /// Offsets of every instruction, in order.
    pub fn instruction_offsets(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut pc = HEADER.len();
        while pc < self.bytecode.len() {
            out.push(pc);
            pc = decode_at(&self.bytecode, pc).expect("validated").1;
        }
        out
    }

    pub fn instruction_count(&self) -> usize {
        self.instruction_offsets().len()
    }

    fn validate(&self) -> Result<(), ProgramError> {
        let code = &self.bytecode;
        if code.len() > MAX_CODE_LEN {
            return Err(ProgramError::TooLarge(code.len()));
        }
        if !code.starts_with(&HEADER) {
            return Err(ProgramError::BadHeader);
        }
        let mut boundaries = std::collections::BTreeSet::new();
        let mut jumps = Vec::new();
        let mut pc = HEADER.len();
        while pc < code.len() {
            boundaries.insert(pc);
            let (instr, next) = decode_at(code, pc)
                .map_err(|f| ProgramError::BadInstruction { offset: pc, detail: format!("{f:?}") })?;
            if let Instr::Jump(t) | Instr::JumpI(t) = instr {
                jumps.push((pc, t));
            }
            pc = next;
        }
        for (offset, target) in jumps {
            if !boundaries.contains(&(target as usize)) {
                return Err(ProgramError::BadJumpTarget { offset, target });
            }
        }
        for offset in self.entries.values() {
            if !boundaries.contains(&(*offset as usize)) {
                return Err(ProgramError::BadEntry { offset: *offset });
            }
        }
        Ok(())
    }
}

impl Encode for ContractProgram {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_bytes(out, &self.bytecode);
        put_u32(out, self.entries.len() as u32);
        for (sel, off) in &self.entries {
            out.extend_from_slice(sel);
            out.extend_from_slice(&off.to_be_bytes());
        }
    }
}

impl Decode for ContractProgram {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let bytecode = r.bytes()?.to_vec();
        let n = r.u32()?;
        let mut entries = BTreeMap::new();
        for _ in 0..n {
            let sel: [u8; 4] = r.array()?;
            let off = u16::from_be_bytes(r.array()?);
            if entries.insert(sel, off).is_some() {
                return Err(DecodeError::InvalidValue("duplicate entry selector".into()));
            }
        }
        ContractProgram::new(bytecode, entries).map_err(|e| DecodeError::InvalidValue(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_misaligned_jump() {
        // JUMP into the middle of a PUSH8 immediate.
        let code = vec![0xEF, b'X', 1, 0x01, 7, 0x0A, 0, 4];
        assert!(matches!(
            ContractProgram::new(code, BTreeMap::new()),
            Err(ProgramError::BadJumpTarget { offset: 5, target: 4 })
        ));
    }

    #[test]
    fn rejects_oversize_and_headerless() {
        let mut code = HEADER.to_vec();
        code.resize(MAX_CODE_LEN + 1, 0);
        assert_eq!(ContractProgram::new(code, BTreeMap::new()), Err(ProgramError::TooLarge(MAX_CODE_LEN + 1)));
        assert_eq!(ContractProgram::new(vec![0x00], BTreeMap::new()), Err(ProgramError::BadHeader));
    }

    #[test]
    fn rejects_bad_entry() {
        let code = vec![0xEF, b'X', 1, 0x01, 7, 0x00];
        let entries = BTreeMap::from([([1, 2, 3, 4], 4u16)]);
        assert_eq!(ContractProgram::new(code, entries), Err(ProgramError::BadEntry { offset: 4 }));
    }

    #[test]
    fn encode_round_trip() {
        let p = assemble(".entry f\nPUSH8 1\nJUMP end\nend:\nSTOP").unwrap();
        assert_eq!(ContractProgram::decode(&p.encode()).unwrap(), p);
    }
}
