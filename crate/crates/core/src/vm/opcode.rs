//! Opcode table.
//!
//! | byte | mnemonic | immediate          | stack effect                         |
//! |------|----------|--------------------|--------------------------------------|
//! | 0x00 | STOP     | -                  | halt; top word (if any) is output    |
//! | 0x01 | PUSH8    | u8                 | → value                              |
//! | 0x02 | PUSHB    | len:u8, len bytes  | → bytes, right-aligned               |
//! | 0x03 | DUP      | depth:u8           | copies the word `depth` below top    |
//! | 0x04 | POP      | -                  | a →                                  |
//! | 0x05 | ADD      | -                  | a b → a+b (mod 2^256)                |
//! | 0x06 | SUB      | -                  | a b → a-b (mod 2^256)                |
//! | 0x07 | EQ       | -                  | a b → a==b                           |
//! | 0x08 | LT       | -                  | a b → a<b                            |
//! | 0x09 | NOT      | -                  | a → a==0                             |
//! | 0x0A | JUMP     | target:u16         | -                                    |
//! | 0x0B | JUMPI    | target:u16         | cond →  (jumps when cond ≠ 0)        |
//! | 0x0C | CALLER   | -                  | → caller address, left-aligned       |
//! | 0x0D | SLOAD    | -                  | key → value                          |
//! | 0x0E | SSTORE   | -                  | value key →                          |
//! | 0x0F | EMIT     | n:u8               | d1..dn topic →                       |
//! | 0x10 | EXCALL   | len:u16, uri bytes | → first response byte                |
//! | 0xFE | REVERT   | -                  | halt, discard state changes          |
//!
//! `b` is the top of the stack. Bytecode starts with a three-byte header
//! (`0xEF 'X' 0x01`); jump targets are absolute offsets into the bytecode.

pub const HEADER: [u8; 3] = [0xEF, b'X', 0x01];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    Stop = 0x00,
    Push8 = 0x01,
    PushB = 0x02,
    Dup = 0x03,
    Pop = 0x04,
    Add = 0x05,
    Sub = 0x06,
    Eq = 0x07,
    Lt = 0x08,
    Not = 0x09,
    Jump = 0x0A,
    JumpI = 0x0B,
    Caller = 0x0C,
    SLoad = 0x0D,
    SStore = 0x0E,
    Emit = 0x0F,
    Excall = 0x10,
    Revert = 0xFE,
}

impl Opcode {
    pub const ALL: [Opcode; 18] = [
        Opcode::Stop,
        Opcode::Push8,
        Opcode::PushB,
        Opcode::Dup,
        Opcode::Pop,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Eq,
        Opcode::Lt,
        Opcode::Not,
        Opcode::Jump,
        Opcode::JumpI,
        Opcode::Caller,
        Opcode::SLoad,
        Opcode::SStore,
        Opcode::Emit,
        Opcode::Excall,
        Opcode::Revert,
    ];

    pub fn from_byte(b: u8) -> Option<Opcode> {
        Self::ALL.iter().copied().find(|op| *op as u8 == b)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Stop => "STOP",
            Opcode::Push8 => "PUSH8",
            Opcode::PushB => "PUSHB",
            Opcode::Dup => "DUP",
            Opcode::Pop => "POP",
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Eq => "EQ",
            Opcode::Lt => "LT",
            Opcode::Not => "NOT",
            Opcode::Jump => "JUMP",
            Opcode::JumpI => "JUMPI",
            Opcode::Caller => "CALLER",
            Opcode::SLoad => "SLOAD",
            Opcode::SStore => "SSTORE",
            Opcode::Emit => "EMIT",
            Opcode::Excall => "EXCALL",
            Opcode::Revert => "REVERT",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Self::ALL.iter().copied().find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }
}

/// A decoded instruction with its immediate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instr<'a> {
    Simple(Opcode),
    Push8(u8),
    PushB(&'a [u8]),
    Dup(u8),
    Jump(u16),
    JumpI(u16),
    Emit(u8),
    Excall(&'a str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeFault {
    UnknownOpcode(u8),
    TruncatedImmediate,
    BadPushLength(u8),
    BadUri,
}

/// Decodes the instruction at `pc`, returning it and the offset of the next one.
pub fn decode_at(code: &[u8], pc: usize) -> Result<(Instr<'_>, usize), DecodeFault> {
    let byte = *code.get(pc).ok_or(DecodeFault::TruncatedImmediate)?;
    let op = Opcode::from_byte(byte).ok_or(DecodeFault::UnknownOpcode(byte))?;
    let imm = |n: usize| code.get(pc + 1..pc + 1 + n).ok_or(DecodeFault::TruncatedImmediate);
    Ok(match op {
        Opcode::Push8 => (Instr::Push8(imm(1)?[0]), pc + 2),
        Opcode::Dup => (Instr::Dup(imm(1)?[0]), pc + 2),
        Opcode::Emit => (Instr::Emit(imm(1)?[0]), pc + 2),
        Opcode::Jump | Opcode::JumpI => {
            let t = u16::from_be_bytes(imm(2)?.try_into().expect("two bytes"));
            let i = if op == Opcode::Jump { Instr::Jump(t) } else { Instr::JumpI(t) };
            (i, pc + 3)
        }
        Opcode::PushB => {
            let len = imm(1)?[0];
            if len == 0 || len > 32 {
                return Err(DecodeFault::BadPushLength(len));
            }
            let bytes = code.get(pc + 2..pc + 2 + len as usize).ok_or(DecodeFault::TruncatedImmediate)?;
            (Instr::PushB(bytes), pc + 2 + len as usize)
        }
        Opcode::Excall => {
            let len = u16::from_be_bytes(imm(2)?.try_into().expect("two bytes")) as usize;
            let bytes = code.get(pc + 3..pc + 3 + len).ok_or(DecodeFault::TruncatedImmediate)?;
            let uri = std::str::from_utf8(bytes).map_err(|_| DecodeFault::BadUri)?;
            if !uri.starts_with("http") {
                return Err(DecodeFault::BadUri);
            }
            (Instr::Excall(uri), pc + 3 + len)
        }
        _ => (Instr::Simple(op), pc + 1),
    })
}
