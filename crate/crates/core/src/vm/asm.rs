//! Line-oriented assembler and disassembler.
//!
//! ```text
//! ; comment
//! .entry betEXCALL          ; next instruction is the entry for selector("betEXCALL")
//! loop:                     ; label
//!     PUSH8 '1'             ; decimal, 0x-hex or character literal
//!     PUSHB 0x50454e44      ; 1..32 bytes, hex or "string"
//!     JUMPI loop
//!     EXCALL "http://host/path?nonce={nonce}"
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use super::abi::selector;
use super::opcode::{decode_at, Instr, Opcode, HEADER};
use super::ContractProgram;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct AssembleError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> AssembleError {
    AssembleError { line, message: message.into() }
}

enum Operand {
    None,
    Byte(u8),
    Bytes(Vec<u8>),
    Label(String),
    Uri(String),
}

struct Line {
    number: usize,
    op: Opcode,
    operand: Operand,
}

impl Line {
    fn size(&self) -> usize {
        match &self.operand {
            Operand::None => 1,
            Operand::Byte(_) => 2,
            Operand::Bytes(b) => 2 + b.len(),
            Operand::Label(_) => 3,
            Operand::Uri(u) => 3 + u.len(),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            '\\' if in_str && !escaped => {
                escaped = true;
                continue;
            }
            '"' if !escaped => in_str = !in_str,
            ';' if !in_str => return &line[..i],
            _ => {}
        }
        escaped = false;
    }
    line
}

fn parse_string(s: &str, line: usize) -> Result<String, AssembleError> {
    let inner = s
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .ok_or_else(|| err(line, format!("expected quoted string, got {s}")))?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some(e @ ('"' | '\\')) => out.push(e),
                other => return Err(err(line, format!("bad escape \\{}", other.unwrap_or(' ')))),
            }
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

fn parse_byte(s: &str, line: usize) -> Result<u8, AssembleError> {
    if let Some(c) = s.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')) {
        let mut it = c.chars();
        return match (it.next(), it.next()) {
            (Some(ch), None) if ch.is_ascii() => Ok(ch as u8),
            _ => Err(err(line, format!("bad character literal {s}"))),
        };
    }
    let parsed = match s.strip_prefix("0x") {
        Some(h) => u8::from_str_radix(h, 16),
        None => s.parse::<u8>(),
    };
    parsed.map_err(|_| err(line, format!("expected a byte value, got {s}")))
}

fn parse_push_bytes(s: &str, line: usize) -> Result<Vec<u8>, AssembleError> {
    let bytes = if let Some(h) = s.strip_prefix("0x") {
        hex::decode(h).map_err(|_| err(line, format!("bad hex literal {s}")))?
    } else if s.starts_with('"') {
        parse_string(s, line)?.into_bytes()
    } else {
        return Err(err(line, format!("PUSHB expects hex or string, got {s}")));
    };
    if bytes.is_empty() || bytes.len() > 32 {
        return Err(err(line, format!("PUSHB literal must be 1..=32 bytes, got {}", bytes.len())));
    }
    Ok(bytes)
}

fn is_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

pub fn assemble(source: &str) -> Result<ContractProgram, AssembleError> {
    let mut lines = Vec::new();
    let mut labels: HashMap<String, usize> = HashMap::new();
    let mut pending_entries: Vec<([u8; 4], usize)> = Vec::new();
    let mut entries = BTreeMap::new();
    let mut offset = HEADER.len();

    for (idx, raw) in source.lines().enumerate() {
        let number = idx + 1;
        let mut text = strip_comment(raw).trim();
        // Labels, possibly followed by an instruction on the same line.
        while let Some(colon) = text.find(':') {
            let candidate = &text[..colon];
            if !is_label(candidate) || text[..colon].contains('"') {
                break;
            }
            if labels.insert(candidate.to_string(), offset).is_some() {
                return Err(err(number, format!("duplicate label {candidate}")));
            }
            text = text[colon + 1..].trim();
        }
        if text.is_empty() {
            continue;
        }
        let (word, rest) = match text.find(char::is_whitespace) {
            Some(i) => (&text[..i], text[i..].trim()),
            None => (text, ""),
        };
        if word.eq_ignore_ascii_case(".entry") {
            let sel = if let Some(h) = rest.strip_prefix("0x") {
                let b = hex::decode(h).map_err(|_| err(number, "bad selector hex"))?;
                b.try_into().map_err(|_| err(number, "selector must be 4 bytes"))?
            } else {
                selector(rest).map_err(|e| err(number, e.to_string()))?
            };
            pending_entries.push((sel, number));
            continue;
        }
        let op = Opcode::from_mnemonic(word).ok_or_else(|| err(number, format!("unknown mnemonic {word}")))?;
        let operand = match op {
            Opcode::Push8 | Opcode::Dup | Opcode::Emit => Operand::Byte(parse_byte(rest, number)?),
            Opcode::PushB => Operand::Bytes(parse_push_bytes(rest, number)?),
            Opcode::Jump | Opcode::JumpI => {
                if !is_label(rest) {
                    return Err(err(number, format!("expected label, got {rest:?}")));
                }
                Operand::Label(rest.to_string())
            }
            Opcode::Excall => {
                let uri = parse_string(rest, number)?;
                if !uri.starts_with("http") {
                    return Err(err(number, format!("EXCALL target {uri:?} must start with \"http\"")));
                }
                if uri.len() > u16::MAX as usize {
                    return Err(err(number, "EXCALL uri too long"));
                }
                Operand::Uri(uri)
            }
            _ => {
                if !rest.is_empty() {
                    return Err(err(number, format!("{} takes no operand", op.mnemonic())));
                }
                Operand::None
            }
        };
        for (sel, line) in pending_entries.drain(..) {
            if entries.insert(sel, offset as u16).is_some() {
                return Err(err(line, "duplicate entry point"));
            }
        }
        let l = Line { number, op, operand };
        offset += l.size();
        lines.push(l);
    }
    if let Some((_, line)) = pending_entries.first() {
        return Err(err(*line, ".entry not followed by an instruction"));
    }
    if offset > super::MAX_CODE_LEN {
        return Err(err(lines.last().map_or(0, |l| l.number), "program exceeds size limit"));
    }

    let mut code = HEADER.to_vec();
    for l in &lines {
        code.push(l.op as u8);
        match &l.operand {
            Operand::None => {}
            Operand::Byte(b) => code.push(*b),
            Operand::Bytes(b) => {
                code.push(b.len() as u8);
                code.extend_from_slice(b);
            }
            Operand::Label(name) => {
                let target = labels.get(name).ok_or_else(|| err(l.number, format!("unresolved label {name}")))?;
                code.extend_from_slice(&(*target as u16).to_be_bytes());
            }
            Operand::Uri(u) => {
                code.extend_from_slice(&(u.len() as u16).to_be_bytes());
                code.extend_from_slice(u.as_bytes());
            }
        }
    }
    ContractProgram::new(code, entries).map_err(|e| err(0, e.to_string()))
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Renders a program as assembler source that reassembles to identical bytes.
pub fn disassemble(program: &ContractProgram) -> String {
    let code = program.bytecode();
    let offsets = program.instruction_offsets();
    let mut targets = BTreeSet::new();
    for &pc in &offsets {
        if let Ok((Instr::Jump(t) | Instr::JumpI(t), _)) = decode_at(code, pc) {
            targets.insert(t as usize);
        }
    }
    let mut entries_at: BTreeMap<usize, Vec<[u8; 4]>> = BTreeMap::new();
    for (sel, off) in program.entries() {
        entries_at.entry(*off as usize).or_default().push(*sel);
    }

    let mut out = String::new();
    for pc in offsets {
        for sel in entries_at.get(&pc).into_iter().flatten() {
            let _ = writeln!(out, ".entry 0x{}", hex::encode(sel));
        }
        if targets.contains(&pc) {
            let _ = writeln!(out, "L{pc:04x}:");
        }
        let (instr, _) = decode_at(code, pc).expect("validated program");
        let text = match instr {
            Instr::Simple(op) => op.mnemonic().to_string(),
            Instr::Push8(b) => format!("PUSH8 {b}"),
            Instr::PushB(b) => format!("PUSHB 0x{}", hex::encode(b)),
            Instr::Dup(d) => format!("DUP {d}"),
            Instr::Emit(n) => format!("EMIT {n}"),
            Instr::Jump(t) => format!("JUMP L{t:04x}"),
            Instr::JumpI(t) => format!("JUMPI L{t:04x}"),
            Instr::Excall(u) => format!("EXCALL {}", quote(u)),
        };
        let _ = writeln!(out, "    {text}");
    }
    out
}
